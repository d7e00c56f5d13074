//! Compare fitted means of two groups with a permutation test and report
//! each fit's approximate MSE.

use auxreg::inference::{permutation_test, variant_amse, Alternative};
use auxreg::simlab::{SettingId, SettingSpec};
use auxreg::twostep::{self, BandwidthPolicy, Dims, FitOptions, Variant};

fn main() -> auxreg::Result<()> {
    let spec = SettingSpec::new(SettingId::A1);
    let opts = FitOptions::default()
        .with_dims(Dims { joint: Some(2), outer: Some(1), ..Default::default() })
        .with_bandwidth(BandwidthPolicy::Fixed { inner: 1.0, outer: 1.0 });

    let mut fitted = Vec::new();
    for (g, shift) in [0.0, 0.4].into_iter().enumerate() {
        // Same design in both groups; the second is shifted upward.
        let mut s = spec.generate(150, 20)?;
        s.y.iter_mut().for_each(|y| *y += shift);
        let model = twostep::fit(&s, Variant::TwoStep, &opts)?;
        let values: Vec<f64> = (0..s.len()).map(|i| model.predict(&s.covariate_row(i)).map(|(v, _)| v)).collect::<auxreg::Result<_>>()?;
        let amse = variant_amse(&s, Variant::TwoStep, &opts, 5)?;
        println!("group {g}: mean fitted {:.3}, cv {:.3}, noise {:.3}, amse {:.3}", values.iter().sum::<f64>() / values.len() as f64, amse.cv10, amse.sigma2_hat, amse.amse);
        fitted.push(values);
    }
    for alt in [Alternative::TwoSided, Alternative::Less] {
        let r = permutation_test(&fitted[0], &fitted[1], 5000, alt, 9)?;
        println!("{alt:?}: statistic {:.3}, p = {:.4}", r.observed_stat, r.p_value);
    }
    Ok(())
}
