//! Rank auxiliary candidates with the fused Kolmogorov filter.

use auxreg::screening::screen;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> auxreg::Result<()> {
    let mut g = ChaCha8Rng::seed_from_u64(1);
    let n = 300;
    let x = DMatrix::from_fn(n, 8, |_, _| -> f64 { StandardNormal.sample(&mut g) });
    // Only columns 2 and 5 matter, the second through its magnitude.
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut g);
            x[(i, 2)] + x[(i, 5)].abs() + 0.5 * e
        })
        .collect();
    let report = screen(&x, &y, 3)?;
    for (j, s) in report.statistics.iter().enumerate() {
        println!("column {j}: {s:.3}");
    }
    println!("slice counts {:?}, kept {:?}", report.partitions_used, report.kept);
    Ok(())
}
