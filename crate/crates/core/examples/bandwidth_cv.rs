//! Cross-validated bandwidth constants and the scores behind them.

use auxreg::simlab::{SettingId, SettingSpec};
use auxreg::twostep::{self, BandwidthPolicy, Dims, FitOptions, Variant};

fn main() -> auxreg::Result<()> {
    let sample = SettingSpec::new(SettingId::A1).generate(300, 8)?;
    let opts = FitOptions::default()
        .with_dims(Dims { joint: Some(2), outer: Some(1), ..Default::default() })
        .with_bandwidth(BandwidthPolicy::Cv { folds: 5, inner_grid: vec![0.5, 1.0, 2.0, 4.0], outer_grid: vec![0.25, 0.5, 1.0, 2.0] })
        .with_seed(3);
    let model = twostep::fit(&sample, Variant::TwoStep, &opts)?;
    let search = model.bandwidth_search().expect("cv was requested");
    if let Some(inner) = &search.inner {
        for (c, s) in inner.grid.iter().zip(&inner.scores) {
            println!("inner c = {c:<5} cv = {s:.4}");
        }
        println!("inner constant chosen: {}", inner.chosen);
    }
    for (c, s) in search.outer.grid.iter().zip(&search.outer.scores) {
        println!("outer C = {c:<5} cv = {s:.4}");
    }
    println!("outer constant chosen: {}", search.outer.chosen);
    println!("bandwidths: inner {:?}, outer {:.4}", model.inner_bandwidth(), model.outer_bandwidth());
    Ok(())
}
