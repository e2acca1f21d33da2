//! Mean values m_r, M_r over the level sets {Γ(x; ·) > 1/r} of the Grushin
//! fundamental solution: identities for harmonic u, inequalities otherwise.

use hormander::gamma::GammaGrushin;
use hormander::numeric::QuadratureSpec;
use hormander::potential::{MeanValue, PotentialOptions, TestFunction};

fn main() -> hormander::Result<()> {
    let (g, _) = GammaGrushin::calibrated(&QuadratureSpec::with_rel_tol(1e-10))?;
    let mv = MeanValue::new(&g, PotentialOptions::default());
    let x = [0.5, 0.2];
    for r in [1.0, 2.0, 4.0] {
        let ls = mv.level_set(x, r)?;
        println!("r = {r}: {} vertices, area {:.5}, perimeter {:.5}", ls.vertices().count(), ls.area(), ls.perimeter());
        for u in TestFunction::ALL {
            let f = |y: &[f64; 2]| u.eval(y);
            let m = mv.m_r(&f, x, r)?.value;
            let big = mv.big_m_r(&f, x, r)?.value;
            println!("  u = {:<8} u(x) = {:<8.4} m_r = {m:<10.6} M_r = {big:<10.6} {}", u.to_string(), u.eval(&x), if u.is_harmonic() { "harmonic" } else { "" });
        }
        let d = mv.deficits(x, r)?;
        println!("  q_r = {:.6}, Q_r = {:.6}, ω_r = {:.6}", d.q_r, d.big_q_r, d.omega_r);
    }
    Ok(())
}
