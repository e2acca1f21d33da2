//! Upper bounds for the Carnot–Carathéodory distance from piecewise-constant
//! controls, compared with the Grushin surrogate |Δ1| + √(x1² + |Δ2|) − |x1|.

use hormander::distance::{distance_upper_bound, grushin_distance_surrogate, DistanceOptions};
use hormander::SystemSpec;

fn main() -> hormander::Result<()> {
    let spec = SystemSpec::grushin(1);
    let opts = DistanceOptions::default();
    println!("{:>14} {:>14} {:>10} {:>10} {:>8}", "x", "y", "d_hat", "surrogate", "ratio");
    for (x, y) in [([0.0, 0.0], [1.0, 0.0]), ([0.0, 0.0], [0.0, 1.0]), ([1.0, 0.0], [1.0, 1.0]), ([-0.5, 0.3], [0.8, -0.4])] {
        let rep = distance_upper_bound(&spec, &x, &y, &opts)?;
        let s = grushin_distance_surrogate(&x, &y);
        println!("{:>14} {:>14} {:>10.5} {:>10.5} {:>8.3}", format!("{x:?}"), format!("{y:?}"), rep.r_hat, s, rep.r_hat / s);
    }
    // d(δ_λ x, δ_λ y) = λ d(x, y)
    let (x, y) = ([0.2, 0.1], [0.9, 0.6]);
    let d1 = distance_upper_bound(&spec, &x, &y, &opts)?.r_hat;
    let d2 = distance_upper_bound(&spec, &[2.0 * x[0], 4.0 * x[1]], &[2.0 * y[0], 4.0 * y[1]], &opts)?.r_hat;
    println!("d(δ₂x, δ₂y) / d(x, y) = {:.4}", d2 / d1);
    Ok(())
}
