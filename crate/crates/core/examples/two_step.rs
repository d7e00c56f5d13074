//! Fit all four estimators on one simulated sample and compare them with
//! the true conditional mean.

use auxreg::simlab::{SettingId, SettingSpec};
use auxreg::twostep::{self, Dims, FitOptions, Variant};

fn main() -> auxreg::Result<()> {
    let spec = SettingSpec::new(SettingId::A1);
    let sample = spec.generate(400, 11)?;
    let points = spec.draw_eval_points(4, 3)?;

    let runs = [
        (Variant::Full, Dims::default()),
        (Variant::Reduced, Dims { central: Some(3), ..Default::default() }),
        (Variant::TwoStep, Dims { joint: Some(2), outer: Some(1), ..Default::default() }),
        (Variant::Nested, Dims { central: Some(3), joint: Some(2), outer: Some(1) }),
    ];
    for (variant, dims) in runs {
        let model = twostep::fit(&sample, variant, &FitOptions::default().with_dims(dims).with_seed(1))?;
        let s = model.summary();
        print!("{:<9} h = {:.3}", variant.label(), s.outer_bandwidth);
        if let Some(h) = s.inner_bandwidth {
            print!(", inner h = {h:.3}");
        }
        println!();
        for p in &points {
            let (fit, _) = model.predict(&p.u0)?;
            println!("    psi = {:>6.3}  fit = {fit:>6.3}", p.psi);
        }
    }
    Ok(())
}
