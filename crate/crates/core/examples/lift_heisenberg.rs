//! The Grushin plane lifts to the Heisenberg group; prints the group law
//! and checks it numerically.

use hormander::lift::build_lift;
use hormander::SystemSpec;

fn main() -> hormander::Result<()> {
    let lift = build_lift(&SystemSpec::grushin(1))?;
    let names = lift.context().names();
    println!("N = {}, Q = {}", lift.dim(), lift.big_q());
    for (c, p) in names.iter().zip(lift.law_strings()) {
        println!("({c})(z * z') = {p}");
    }
    for (i, f) in lift.lifted_fields().iter().enumerate() {
        println!("X{}~ = {f}", i + 1);
    }
    println!("lifting identity holds: {}", lift.check_phi_identity()?);

    let (a, b, c) = ([0.3, -1.0, 2.0], [1.5, 0.25, -0.5], [-0.7, 0.9, 0.1]);
    let left = lift.mul_f64(&lift.mul_f64(&a, &b), &c);
    let right = lift.mul_f64(&a, &lift.mul_f64(&b, &c));
    println!("(ab)c = {left:?}\na(bc) = {right:?}");
    println!("a a⁻¹ = {:?}", lift.mul_f64(&a, &lift.inv_f64(&a)));
    println!("δ_2 a = {:?}", lift.dilate_f64(2.0, &a));
    Ok(())
}
