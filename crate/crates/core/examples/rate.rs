//! Empirical convergence rate of the two-step estimator with known
//! reductions and fixed bandwidth constants.

use auxreg::simlab::{monte_carlo, DimSource, EstimatorConfig, Method, MonteCarloPlan, SettingId};
use auxreg::twostep::BandwidthPolicy;

fn main() -> auxreg::Result<()> {
    let cfg = EstimatorConfig::new("d1", Method::TwoStep)
        .with_dims(DimSource::TrueMatrices)
        .with_bandwidth(BandwidthPolicy::Fixed { inner: 1.0, outer: 1.0 });
    let mut pts = Vec::new();
    for n in [200, 800, 3200] {
        let plan = MonteCarloPlan { setting: SettingId::A1, n, replications: 50, eval_points: 8, eval_seed: 2024, seed: 7, estimators: vec![cfg.clone()] };
        let r = monte_carlo(&plan)?;
        let rmse = (r.rmse("d1").iter().map(|x| x * x).sum::<f64>() / 8.0).sqrt();
        println!("n = {n:>5}: pooled rmse {rmse:.4}");
        pts.push(((n as f64).ln(), rmse.ln()));
    }
    let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
    println!("log-log slope {slope:.3} (theory -0.4 for a one-dimensional outer step)");
    Ok(())
}
