//! Γ for the Grushin operator ∂₁² + x1²∂₂²: calibration, saturation
//! quadrature against the closed form, symmetry and a derivative.

use hormander::gamma::{parse_word, GammaGrushin};
use hormander::numeric::QuadratureSpec;

fn main() -> hormander::Result<()> {
    let quad = QuadratureSpec::with_rel_tol(1e-10);
    let (g, cal) = GammaGrushin::calibrated(&quad)?;
    println!("γ₀ = {:.12} (1/2π = {:.12}), residual {:.1e}", cal.gamma0, 1.0 / (2.0 * std::f64::consts::PI), cal.residual);

    let x = [0.5, 0.2];
    for y in [[1.0, 1.0], [-0.3, 0.4], [0.5, 3.0], [2.0, 0.2]] {
        let closed = g.closed_form(&x, &y)?;
        let sat = g.saturation(&x, &y, &quad)?.value;
        let swapped = g.closed_form(&y, &x)?;
        println!(
            "Γ({x:?}; {y:?}) = {closed:.12}  saturation rel err {:.1e}  symmetry {:.1e}",
            (sat - closed).abs() / closed,
            (swapped - closed).abs() / closed
        );
    }
    let word = parse_word("X1x,X2y")?;
    let d = g.derivative(&x, &[1.0, 1.0], &word, &quad)?;
    println!("X1^x X2^y Γ: representation {:.10}, finite differences {:.10}", d.representation, d.finite_difference);
    Ok(())
}
