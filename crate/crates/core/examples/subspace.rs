//! Estimate a central subspace and choose its dimension by bootstrap.

use auxreg::sdr::{subspace_distance, Sdr, SdrMethod, SubspaceEstimate};
use auxreg::simlab::{SettingId, SettingSpec};

fn main() -> auxreg::Result<()> {
    let spec = SettingSpec::new(SettingId::A1);
    let sample = spec.generate(1000, 1)?;
    let sdr = Sdr::new(&[SdrMethod::Sir, SdrMethod::Save, SdrMethod::Phd], 10);

    let sel = sdr.select_dimension(&sample.response_matrix(), &sample.u, 3, 30, 5)?;
    println!("bootstrap criterion by dimension: {:?}", sel.criterion_by_dim);
    println!("chosen dimension: {}", sel.chosen_dim);

    let est = sdr.estimate(&sample.response_matrix(), &sample.u, 3)?;
    let truth = SubspaceEstimate::from_basis(&spec.matrices.central)?;
    println!("eigenvalues: {:?}", est.eigenvalues());
    println!("distance to the true 3-dim subspace: {:.3}", subspace_distance(&est, &truth)?);
    Ok(())
}
