//! Runs every estimate suite on the Grushin plane and prints one line each.

use hormander::estimates::{
    singular_cancellation, verify_derivative_bounds, verify_fixed_pole, verify_lower_n2, verify_upper_n2, PairGrid,
    PoleSequence,
};
use hormander::gamma::GammaGrushin;
use hormander::numeric::QuadratureSpec;

fn main() -> hormander::Result<()> {
    let quad = QuadratureSpec::with_rel_tol(1e-8);
    let (g, cal) = GammaGrushin::calibrated(&quad)?;
    println!("gamma0 = {:.12} (check-point residual {:.2e})", cal.gamma0, cal.residual);

    let grid = PairGrid::default();
    let small = PairGrid { points_per_axis: 7, directions: 6, radii: 8, ..grid };
    let mut reports = vec![verify_upper_n2(&g, &grid)?, verify_lower_n2(&g, &grid)?];
    for pole in [[1.0, 0.0], [0.0, 0.0]] {
        reports.push(verify_fixed_pole(&g, pole, &PoleSequence::default())?);
    }
    for r in 1..=3 {
        reports.push(verify_derivative_bounds(&g, &small, r)?);
    }
    reports.push(singular_cancellation(&g, [1.0, 0.0], (1, 1), 0.1, &[10.0, 100.0], &quad)?);
    for rep in &reports {
        println!("{}", rep.summary_line());
    }
    Ok(())
}
