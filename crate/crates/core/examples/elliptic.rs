//! Complete elliptic integral K(m) by the AGM against direct quadrature,
//! and the logarithmic blow-up as m → 1.

use std::f64::consts::FRAC_PI_2;

use hormander::numeric::{elliptic_k, elliptic_k_complement, gauss_kronrod, QuadratureSpec};

fn main() -> hormander::Result<()> {
    let quad = QuadratureSpec::with_rel_tol(1e-13);
    println!("{:>8} {:>20} {:>20} {:>10}", "m", "AGM", "quadrature", "rel diff");
    for m in [-0.9, -0.5, 0.0, 0.5, 0.9, 0.99] {
        let k = elliptic_k(m)?;
        let q = gauss_kronrod(|t: f64| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt(), 0.0, FRAC_PI_2, &quad)?.value;
        println!("{m:>8} {k:>20.15} {q:>20.15} {:>10.1e}", (k - q).abs() / q);
    }
    // K(m) ≈ ln 4 − ½ ln(1 − m); the ratio to −½ ln(1 − m) creeps to 1
    println!("\n{:>8} {:>12}", "1 - m", "K/(-ln(1-m)/2)");
    for e in [3, 6, 12, 25, 50, 100] {
        let mc = 10f64.powi(-e);
        let k = elliptic_k_complement(mc);
        println!("{:>8} {:>12.6}", format!("1e-{e}"), k / (-0.5 * mc.ln()));
    }
    Ok(())
}
