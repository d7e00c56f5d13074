//! Higher-order kernels and a plain Nadaraya-Watson fit.

use auxreg::kernels::{make_kernel, nadaraya_watson};
use nalgebra::DMatrix;

fn main() -> auxreg::Result<()> {
    for order in [2, 4, 6] {
        let k = make_kernel(order, 1, 1.0)?;
        let moments: Vec<String> = (0..=order).map(|j| format!("{:.4}", k.moment(j))).collect();
        println!("order {order}: K(0) = {:.4}, moments 0..={order}: {}", k.profile(0.0), moments.join(" "));
    }

    // y = sin(2x) on a grid, smoothed at a few points.
    let n = 400;
    let x = DMatrix::from_fn(n, 1, |i, _| -2.0 + 4.0 * i as f64 / (n - 1) as f64);
    let y: Vec<f64> = x.iter().map(|v| (2.0 * v).sin()).collect();
    for order in [2, 4] {
        let k = make_kernel(order, 1, 0.4)?;
        for q in [-1.0, 0.0, 0.7] {
            let fit = nadaraya_watson(&k, &x, &y, &[q])?;
            println!("order {order} at x = {q:>4}: {fit:.4} (true {:.4})", (2.0 * q).sin());
        }
    }
    Ok(())
}
