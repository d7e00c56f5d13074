//! A small Monte Carlo comparison; pass the number of replications as the
//! first argument (default 50).

use auxreg::simlab::{monte_carlo, EstimatorConfig, Method, MonteCarloPlan, SettingId};

fn main() -> auxreg::Result<()> {
    let reps = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50);
    let names = [("p", Method::Full), ("d0", Method::Reduced), ("d1", Method::TwoStep), ("d2", Method::Nested)];
    let plan = MonteCarloPlan {
        setting: SettingId::A1,
        n: 200,
        replications: reps,
        eval_points: 8,
        eval_seed: 2024,
        seed: 7,
        estimators: names.iter().map(|(n, m)| EstimatorConfig::new(n, *m)).collect(),
    };
    let r = monte_carlo(&plan)?;
    print!("{:<4}", "psi");
    for p in &r.eval_points {
        print!("{:>7.2}", p.psi);
    }
    println!();
    for (n, _) in names {
        print!("{n:<4}");
        for v in r.rmse(n) {
            print!("{v:>7.3}");
        }
        println!();
    }
    Ok(())
}
