//! Inner regressor transforms in a design with unbounded covariates.

use auxreg::simlab::{SettingId, SettingSpec};
use auxreg::twostep::{self, Dims, FitOptions, TransformKind, Variant};

fn main() -> auxreg::Result<()> {
    let spec = SettingSpec::new(SettingId::B);
    let sample = spec.generate(300, 4)?;
    let points = spec.draw_eval_points(5, 9)?;
    let dims = Dims { joint: Some(2), outer: Some(1), ..Default::default() };

    for kind in [TransformKind::None, TransformKind::NormalCdf, TransformKind::EmpiricalCdf] {
        let opts = FitOptions::default().with_dims(dims).with_transform(kind).with_seed(2);
        let model = twostep::fit(&sample, Variant::TwoStep, &opts)?;
        let err: Vec<String> = points
            .iter()
            .map(|p| model.predict(&p.u0).map(|(v, _)| format!("{:+.3}", v - p.psi)))
            .collect::<auxreg::Result<_>>()?;
        println!("{kind:?}: errors {}", err.join(" "));
    }
    Ok(())
}
