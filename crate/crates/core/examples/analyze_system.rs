//! Lie basis, homogeneous dimension and the volume polynomial of the
//! Engel-type system X1 = ∂₁, X2 = x1 ∂₂ + x1² ∂₃.

use hormander::dsl::validate_homogeneity;
use hormander::lie::{hormander_rank, lie_basis};
use hormander::volume::{build_profile, doubling_ratio, lambda_eval};
use hormander::{parse_system, Rational};

fn main() -> hormander::Result<()> {
    let spec = parse_system(include_str!("../data/engel.hvf"))?;
    println!("n = {}, sigma = {:?}, q = {}", spec.n(), spec.sigma(), spec.q());
    println!("homogeneous: {}", validate_homogeneity(&spec).ok);

    let basis = lie_basis(&spec)?;
    println!("Lie basis (N = {}, step {}):", basis.dim, basis.step);
    for e in &basis.elements {
        println!("  X{:<8} weight {}  {}", e.index.to_string(), e.weight, e.field);
    }
    let zero = vec![Rational::from_integer(0.into()); spec.n()];
    println!("rank at 0: {}", hormander_rank(&spec, &basis, &zero)?);

    let profile = build_profile(&spec)?;
    for fk in profile.summary() {
        let dets: Vec<String> = fk.determinants.iter().map(|d| format!("|{}|", d.det)).collect();
        println!("f_{} = {}", fk.k, dets.join(" + "));
    }
    for x in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.1, 2.0, -1.0]] {
        println!(
            "x = {x:?}: Λ(x, 1) = {:.4}, Λ(x, 2)/Λ(x, 1) = {:.3}",
            lambda_eval(&profile, &x, 1.0)?,
            doubling_ratio(&profile, &x, 1.0)?
        );
    }
    Ok(())
}
