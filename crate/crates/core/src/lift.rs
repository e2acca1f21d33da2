//! Lifting to a Carnot group: structure constants of `Lie(X)`, the BCH
//! product, the map `T(a) = (Π(a), a_{j₁}, …, a_{j_p})` and the induced
//! group law, inversion, dilations and lifted fields on `ℝ^N`.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_traits::{One, Zero};

use crate::dsl::SystemSpec;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::lie::{lie_basis, LieBasis};
use crate::linalg::{inverse, rank};
use crate::poly::{CompiledPoly, Context, Polynomial, Rational, Variables};

/// Largest nilpotency step handled by the BCH product.
pub const MAX_STEP: u32 = 6;

/// Structure constants `[E_i, E_j] = Σ_k c_{ij}^k E_k` of a graded basis.
#[derive(Debug, Clone)]
pub struct NilpotentAlgebra {
    pub dim: usize,
    pub weights: Vec<u32>,
    pub step: u32,
    /// Nonzero `(i, j, k, c_{ij}^k)` with `i < j`.
    consts: Vec<(usize, usize, usize, Rational)>,
}

impl NilpotentAlgebra {
    pub fn c(&self, i: usize, j: usize, k: usize) -> Rational {
        let (a, b, s) = if i < j { (i, j, Rational::one()) } else { (j, i, -Rational::one()) };
        self.consts
            .iter()
            .find(|(x, y, z, _)| *x == a && *y == b && *z == k)
            .map(|(_, _, _, c)| c * &s)
            .unwrap_or_else(Rational::zero)
    }

    pub fn is_abelian(&self) -> bool {
        self.consts.is_empty()
    }

    /// Bracket of two algebra elements with polynomial coordinates.
    pub fn bracket(&self, u: &[Polynomial], v: &[Polynomial]) -> Vec<Polynomial> {
        let ctx = u[0].context().clone();
        let mut out = vec![Polynomial::zero(&ctx); self.dim];
        for (i, j, k, c) in &self.consts {
            let t = &(&u[*i] * &v[*j]) - &(&u[*j] * &v[*i]);
            if !t.is_zero() {
                out[*k] = &out[*k] + &t.scale(c);
            }
        }
        out
    }
}

/// Expands every bracket of basis elements in the basis.
pub fn structure_constants(basis: &LieBasis) -> Result<NilpotentAlgebra> {
    let dim = basis.dim;
    let mut consts = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            let b = basis.elements[i].field.bracket(&basis.elements[j].field)?;
            if b.is_zero() {
                continue;
            }
            let coords = basis
                .express(&b)
                .ok_or_else(|| Error::Inconsistent(format!("[E_{}, E_{}] is not in the span of the basis", i + 1, j + 1)))?;
            for (k, c) in coords.into_iter().enumerate() {
                if !c.is_zero() {
                    consts.push((i, j, k, c));
                }
            }
        }
    }
    Ok(NilpotentAlgebra { dim, weights: basis.weights(), step: basis.step, consts })
}

/// Dynkin's expansion of `log(e^X e^Y)` as right-nested bracket words over
/// `{X = 0, Y = 1}`, through length [`MAX_STEP`].
fn dynkin_words() -> &'static [(Vec<u8>, Rational)] {
    static WORDS: OnceLock<Vec<(Vec<u8>, Rational)>> = OnceLock::new();
    WORDS.get_or_init(|| {
        let mut acc: HashMap<Vec<u8>, Rational> = HashMap::new();
        let l_max = MAX_STEP as usize;
        // blocks (r_i, s_i) with r_i + s_i ≥ 1 and total length ≤ l_max
        fn rec(blocks: &mut Vec<(usize, usize)>, total: usize, l_max: usize, acc: &mut HashMap<Vec<u8>, Rational>) {
            if total > 0 {
                let word: Vec<u8> = blocks
                    .iter()
                    .flat_map(|&(r, s)| std::iter::repeat_n(0u8, r).chain(std::iter::repeat_n(1u8, s)))
                    .collect();
                let l = word.len();
                if l == 1 || word[l - 1] != word[l - 2] {
                    let n = blocks.len() as i64;
                    let mut den = Rational::from_integer((n * l as i64).into());
                    for &(r, s) in blocks.iter() {
                        den *= Rational::from_integer(factorial(r).into()) * Rational::from_integer(factorial(s).into());
                    }
                    let mut c = Rational::one() / den;
                    if n % 2 == 0 {
                        c = -c;
                    }
                    *acc.entry(word).or_insert_with(Rational::zero) += c;
                }
            }
            for r in 0..=l_max - total {
                for s in 0..=l_max - total - r {
                    if r + s == 0 {
                        continue;
                    }
                    blocks.push((r, s));
                    rec(blocks, total + r + s, l_max, acc);
                    blocks.pop();
                }
            }
        }
        rec(&mut Vec::new(), 0, l_max, &mut acc);
        let mut v: Vec<(Vec<u8>, Rational)> = acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        v.sort();
        v
    })
}

fn factorial(k: usize) -> i64 {
    (1..=k as i64).product()
}

/// `a ∙ b = log(e^a e^b)` on polynomial coordinates, truncated at the step.
pub fn bch_poly(alg: &NilpotentAlgebra, a: &[Polynomial], b: &[Polynomial]) -> Result<Vec<Polynomial>> {
    if alg.step > MAX_STEP {
        return Err(Error::Unsupported(format!("nilpotency step {} > {MAX_STEP}", alg.step)));
    }
    if a.len() != alg.dim || b.len() != alg.dim {
        return Err(Error::Arity { expected: alg.dim, got: a.len().min(b.len()) });
    }
    let ctx = a[0].context().clone();
    let mut out: Vec<Polynomial> = vec![Polynomial::zero(&ctx); alg.dim];
    let mut memo: HashMap<Vec<u8>, Vec<Polynomial>> = HashMap::new();
    let letter = |l: u8| if l == 0 { a.to_vec() } else { b.to_vec() };
    for (word, c) in dynkin_words() {
        if word.len() as u32 > alg.step {
            continue;
        }
        if alg.is_abelian() && word.len() > 1 {
            continue;
        }
        // right-nested: [w₁, [w₂, …, [w_{L−1}, w_L]]]
        let mut val = letter(word[word.len() - 1]);
        for start in (0..word.len() - 1).rev() {
            let suffix = word[start..].to_vec();
            val = match memo.get(&suffix) {
                Some(v) => v.clone(),
                None => {
                    let v = alg.bracket(&letter(word[start]), &val);
                    memo.insert(suffix, v.clone());
                    v
                }
            };
        }
        for (o, v) in out.iter_mut().zip(&val) {
            if !v.is_zero() {
                *o = &*o + &v.scale(c);
            }
        }
    }
    Ok(out)
}

/// `a ∙ b` on rational coordinates.
pub fn bch_product(alg: &NilpotentAlgebra, a: &[Rational], b: &[Rational]) -> Result<Vec<Rational>> {
    let ctx = Variables::new(Vec::<String>::new(), vec![]);
    let pa: Vec<Polynomial> = a.iter().map(|c| Polynomial::constant(&ctx, c.clone())).collect();
    let pb: Vec<Polynomial> = b.iter().map(|c| Polynomial::constant(&ctx, c.clone())).collect();
    Ok(bch_poly(alg, &pa, &pb)?.iter().map(Polynomial::constant_term).collect())
}

/// Flow of `Y` as a terminating Lie series `Σ_k t^k/k! Y^k x_i`.
///
/// The result lives in the context of `Y` extended by a variable `t`; any
/// parameter variables of `Y` are carried along.
pub fn flow_map(y: &VectorField) -> Result<(Context, Vec<Polynomial>)> {
    let src = y.context();
    let tctx = Variables::new(["t"], vec![1]);
    let ctx = Variables::concat(&[src, &tctx]);
    let ye = y.embed(&ctx)?;
    let t = Polynomial::var(&ctx, ctx.len() - 1);
    let bound = src.weights()[..y.dim()].iter().copied().max().unwrap_or(0) + 1;
    let mut out = Vec::with_capacity(y.dim());
    for i in 0..y.dim() {
        let mut term = Polynomial::var(&ctx, i);
        let mut acc = term.clone();
        let mut tk = Polynomial::one(&ctx);
        let mut k = 0u32;
        loop {
            term = ye.apply(&term);
            k += 1;
            if term.is_zero() {
                break;
            }
            if k > bound {
                return Err(Error::Inconsistent("flow series does not terminate; field is not homogeneous".into()));
            }
            tk = &tk * &t;
            let inv_fact = Rational::new(1.into(), factorial(k as usize).into());
            acc = &acc + &(&tk * &term).scale(&inv_fact);
        }
        out.push(acc);
    }
    Ok((ctx, out))
}

/// `t ↦ Φ^Y_t(start)` as polynomials in `t`.
pub fn flow_polynomial(y: &VectorField, start: &[Rational]) -> Result<Vec<Polynomial>> {
    if start.len() != y.context().len() {
        return Err(Error::Arity { expected: y.context().len(), got: start.len() });
    }
    let (ctx, map) = flow_map(y)?;
    let tctx = Variables::new(["t"], vec![1]);
    let mut images: Vec<Polynomial> = start.iter().map(|c| Polynomial::constant(&tctx, c.clone())).collect();
    images.push(Polynomial::var(&tctx, 0));
    let _ = ctx;
    map.iter().map(|p| p.compose(&tctx, &images)).collect()
}

/// `Π(a) = Φ^{a·E}_1(0)` as polynomials in `a₁..a_N` (weights of the basis).
pub fn folland_projection(spec: &SystemSpec, basis: &LieBasis) -> Result<(Context, Vec<Polynomial>)> {
    let actx = Variables::indexed("a", basis.weights());
    let joint = Variables::concat(&[spec.context(), &actx]);
    let n = spec.n();
    let mut y = VectorField::zero(&joint, n);
    for (k, e) in basis.elements.iter().enumerate() {
        let ak = Polynomial::var(&joint, n + k);
        y = y.add(&e.field.embed(&joint)?.mul_poly(&ak));
    }
    let (fctx, map) = flow_map(&y)?;
    // x ↦ 0, a ↦ a, t ↦ 1
    let mut images = vec![Polynomial::zero(&actx); n];
    images.extend((0..basis.dim).map(|k| Polynomial::var(&actx, k)));
    images.push(Polynomial::one(&actx));
    debug_assert_eq!(images.len(), fctx.len());
    let pi = map.iter().map(|p| p.compose(&actx, &images)).collect::<Result<Vec<_>>>()?;
    Ok((actx, pi))
}

/// Linear part of a polynomial map at the origin (rows = outputs).
fn linear_part(map: &[Polynomial], nvars: usize) -> Vec<Vec<Rational>> {
    map.iter()
        .map(|p| {
            (0..nvars)
                .map(|k| {
                    let mut e = vec![0; nvars];
                    e[k] = 1;
                    p.terms()
                        .find(|(m, _)| m.exponents() == e.as_slice())
                        .map(|(_, c)| c.clone())
                        .unwrap_or_else(Rational::zero)
                })
                .collect()
        })
        .collect()
}

fn mat_vec(m: &[Vec<Rational>], v: &[Polynomial], ctx: &Context) -> Vec<Polynomial> {
    m.iter()
        .map(|row| {
            row.iter().zip(v).fold(Polynomial::zero(ctx), |acc, (c, p)| {
                if c.is_zero() {
                    acc
                } else {
                    &acc + &p.scale(c)
                }
            })
        })
        .collect()
}

fn compose_all(map: &[Polynomial], target: &Context, images: &[Polynomial]) -> Result<Vec<Polynomial>> {
    map.iter().map(|p| p.compose(target, images)).collect()
}

/// The lifted Carnot group `(ℝ^N, ∗, D_λ)` and the lifted fields.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    spec: SystemSpec,
    basis: LieBasis,
    alg: NilpotentAlgebra,
    indices: Vec<usize>,
    tau: Vec<u32>,
    zctx: Context,
    zzctx: Context,
    actx: Context,
    t_map: Vec<Polynomial>,
    t_inv: Vec<Polynomial>,
    dt0: Vec<Vec<Rational>>,
    law: Vec<Polynomial>,
    inv: Vec<Polynomial>,
    fields: Vec<VectorField>,
    drift: Option<VectorField>,
    law_c: Vec<CompiledPoly>,
    inv_c: Vec<CompiledPoly>,
}

/// Builds the lift of an admissible system.
pub fn build_lift(spec: &SystemSpec) -> Result<LiftedSystem> {
    let basis = lie_basis(spec)?;
    crate::lie::check_admissible(spec, &basis)?;
    if basis.step > MAX_STEP {
        return Err(Error::Unsupported(format!("nilpotency step {} > {MAX_STEP}", basis.step)));
    }
    let alg = structure_constants(&basis)?;
    let n = spec.n();
    let big_n = basis.dim;
    let (actx, pi) = folland_projection(spec, &basis)?;

    // greedy index choice: smallest j raising the rank of J_Π(0)
    let mut rows = linear_part(&pi, big_n);
    if rank(&rows) != n {
        return Err(Error::Inconsistent("Π is not submersive at 0".into()));
    }
    let mut indices = Vec::new();
    for j in 0..big_n {
        let mut e = vec![Rational::zero(); big_n];
        e[j] = Rational::one();
        rows.push(e);
        if rank(&rows) == rows.len() {
            indices.push(j);
        } else {
            rows.pop();
        }
    }
    if rows.len() != big_n {
        return Err(Error::Inconsistent("no index choice makes T invertible".into()));
    }
    let tau: Vec<u32> = indices.iter().map(|&j| basis.elements[j].weight).collect();

    let xnames: Vec<String> = spec.context().names().to_vec();
    let mut znames = xnames.clone();
    znames.extend((1..=indices.len()).map(|j| format!("xi{j}")));
    let mut zweights = spec.sigma().to_vec();
    zweights.extend(&tau);
    let zctx = Variables::new(znames.clone(), zweights.clone());
    let primed: Vec<String> = znames.iter().map(|s| format!("{s}'")).collect();
    let zzctx = Variables::new(znames.iter().cloned().chain(primed), [zweights.clone(), zweights.clone()].concat());

    let mut t_map = pi;
    for &j in &indices {
        t_map.push(Polynomial::var(&actx, j));
    }
    let dt0 = linear_part(&t_map, big_n);
    let dt0_inv = inverse(&dt0).ok_or_else(|| Error::Inconsistent("dT(0) is singular".into()))?;

    // T⁻¹ by graded fixed point: a = L⁻¹(z − H(a)), exact after `step` rounds
    let zvars: Vec<Polynomial> = (0..big_n).map(|i| Polynomial::var(&zctx, i)).collect();
    let lin_a: Vec<Polynomial> = mat_vec(&dt0, &(0..big_n).map(|k| Polynomial::var(&actx, k)).collect::<Vec<_>>(), &actx);
    let h: Vec<Polynomial> = t_map.iter().zip(&lin_a).map(|(t, l)| t - l).collect();
    let mut a = mat_vec(&dt0_inv, &zvars, &zctx);
    let mut ok = false;
    for _ in 0..=2 * basis.step {
        let ha = compose_all(&h, &zctx, &a)?;
        let rhs: Vec<Polynomial> = zvars.iter().zip(&ha).map(|(z, hz)| z - hz).collect();
        let next = mat_vec(&dt0_inv, &rhs, &zctx);
        if next == a {
            ok = true;
            break;
        }
        a = next;
    }
    if !ok || compose_all(&t_map, &zctx, &a)? != zvars {
        return Err(Error::Inconsistent("graded inversion of T did not converge".into()));
    }
    let t_inv = a;

    // z ∗ z′ = T(T⁻¹z ∙ T⁻¹z′)
    let left: Vec<Polynomial> = (0..big_n).map(|i| Polynomial::var(&zzctx, i)).collect();
    let right: Vec<Polynomial> = (0..big_n).map(|i| Polynomial::var(&zzctx, big_n + i)).collect();
    let a1 = compose_all(&t_inv, &zzctx, &left)?;
    let a2 = compose_all(&t_inv, &zzctx, &right)?;
    let prod = bch_poly(&alg, &a1, &a2)?;
    let law = compose_all(&t_map, &zzctx, &prod)?;
    let neg: Vec<Polynomial> = t_inv.iter().map(|p| -p).collect();
    let inv = compose_all(&t_map, &zctx, &neg)?;

    // M(z) = ∂(z ∗ z′)/∂z′ at z′ = 0
    let mut restrict = zvars.clone();
    restrict.extend(std::iter::repeat_n(Polynomial::zero(&zctx), big_n));
    let m: Vec<Vec<Polynomial>> = law
        .iter()
        .map(|l| (0..big_n).map(|k| l.partial(big_n + k).compose(&zctx, &restrict)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let lift_field = |f: &VectorField| -> Result<VectorField> {
        let coords = basis.express(f).ok_or_else(|| Error::Inconsistent("generator outside Lie(X)".into()))?;
        let v: Vec<Rational> =
            dt0.iter().map(|row| row.iter().zip(&coords).fold(Rational::zero(), |s, (a, b)| s + a * b)).collect();
        let coeffs = m
            .iter()
            .map(|row| {
                row.iter().zip(&v).fold(Polynomial::zero(&zctx), |acc, (p, c)| {
                    if c.is_zero() {
                        acc
                    } else {
                        &acc + &p.scale(c)
                    }
                })
            })
            .collect();
        VectorField::new(coeffs)
    };
    let fields = spec.fields().iter().map(|f| lift_field(&f.field)).collect::<Result<Vec<_>>>()?;
    let drift = spec.drift().map(lift_field).transpose()?;

    let law_c = law.iter().map(Polynomial::compile).collect();
    let inv_c = inv.iter().map(Polynomial::compile).collect();
    let lifted = LiftedSystem {
        spec: spec.clone(),
        basis,
        alg,
        indices,
        tau,
        zctx,
        zzctx,
        actx,
        t_map,
        t_inv,
        dt0,
        law,
        inv,
        fields,
        drift,
        law_c,
        inv_c,
    };
    lifted.check_shape()?;
    Ok(lifted)
}

impl LiftedSystem {
    /// Lifted fields project onto the original ones; the ξ-coefficient
    /// `α_{i,j}` is independent of `ξ_j` and of degree `τ_j − 1`.
    fn check_shape(&self) -> Result<()> {
        let n = self.n();
        let gens = self
            .spec
            .fields()
            .iter()
            .map(|f| (&f.field, 1u32))
            .chain(self.spec.drift().map(|d| (d, 2u32)))
            .zip(self.fields.iter().chain(self.drift.iter()));
        for ((orig, deg), lifted) in gens {
            let emb = orig.embed(&self.zctx)?;
            for i in 0..n {
                if lifted.coeff(i) != emb.coeff(i) {
                    return Err(Error::Inconsistent(format!("lifted field does not project onto {orig}")));
                }
            }
            for j in 0..self.p() {
                if !lifted.coeff(n + j).partial(n + j).is_zero() {
                    return Err(Error::Inconsistent("ξ-coefficient depends on its own variable".into()));
                }
            }
            if !lifted.degree_violations(deg).is_empty() {
                return Err(Error::Inconsistent(format!("lifted field {lifted} is not homogeneous of degree {deg}")));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn basis(&self) -> &LieBasis {
        &self.basis
    }

    pub fn algebra(&self) -> &NilpotentAlgebra {
        &self.alg
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// `N`.
    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    /// `p = N − n`.
    pub fn p(&self) -> usize {
        self.indices.len()
    }

    /// Zero-based basis indices `j₁ < … < j_p` kept as the ξ coordinates.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Dilation exponents `τ₁..τ_p` of the ξ variables.
    pub fn tau(&self) -> &[u32] {
        &self.tau
    }

    /// `Q = q + Σ τ_j`.
    pub fn big_q(&self) -> u32 {
        self.spec.q() + self.tau.iter().sum::<u32>()
    }

    /// Coordinates `(x, ξ)`.
    pub fn context(&self) -> &Context {
        &self.zctx
    }

    /// Coordinates `(x, ξ, x′, ξ′)` of the group law.
    pub fn pair_context(&self) -> &Context {
        &self.zzctx
    }

    /// Exponential coordinates `a₁..a_N`.
    pub fn algebra_context(&self) -> &Context {
        &self.actx
    }

    pub fn t_map(&self) -> &[Polynomial] {
        &self.t_map
    }

    pub fn t_inverse(&self) -> &[Polynomial] {
        &self.t_inv
    }

    /// `dT(0)`.
    pub fn dt0(&self) -> &[Vec<Rational>] {
        &self.dt0
    }

    /// `z ∗ z′` as polynomials in [`Self::pair_context`].
    pub fn law(&self) -> &[Polynomial] {
        &self.law
    }

    /// `ι(z) = z⁻¹`.
    pub fn inversion(&self) -> &[Polynomial] {
        &self.inv
    }

    pub fn lifted_fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn lifted_drift(&self) -> Option<&VectorField> {
        self.drift.as_ref()
    }

    /// Product of two points given as polynomials in a common context.
    pub fn mul_poly(&self, u: &[Polynomial], v: &[Polynomial]) -> Result<Vec<Polynomial>> {
        let target = u[0].context().clone();
        let images: Vec<Polynomial> = u.iter().chain(v).cloned().collect();
        compose_all(&self.law, &target, &images)
    }

    pub fn inv_poly(&self, u: &[Polynomial]) -> Result<Vec<Polynomial>> {
        compose_all(&self.inv, &u[0].context().clone(), u)
    }

    pub fn mul_f64(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = u.iter().chain(v).copied().collect();
        self.law_c.iter().map(|p| p.eval(&z)).collect()
    }

    pub fn inv_f64(&self, u: &[f64]) -> Vec<f64> {
        self.inv_c.iter().map(|p| p.eval(u)).collect()
    }

    /// `D_λ(x, ξ) = (δ_λ x, E_λ ξ)`.
    pub fn dilate_f64(&self, lambda: f64, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.zctx.weights()).map(|(v, &w)| v * lambda.powi(w as i32)).collect()
    }

    /// Symbolic `Φ_{x,y}(ζ)`: the ξ-part of `(x,0) ∗ (x,ζ)⁻¹ ∗ (y,0)`, as
    /// polynomials in `(x₁..x_n, y₁..y_n, ζ₁..ζ_p)`.
    pub fn phi_polynomials(&self) -> Result<(Context, Vec<Polynomial>)> {
        let ctx = self.phi_context();
        let (x0, xz, y0) = self.phi_points(&ctx);
        let w = self.mul_poly(&self.mul_poly(&x0, &self.inv_poly(&xz)?)?, &y0)?;
        Ok((ctx, w[self.n()..].to_vec()))
    }

    fn phi_context(&self) -> Context {
        let n = self.n();
        let sig = self.spec.sigma();
        let names: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=n).map(|i| format!("y{i}")))
            .chain((1..=self.p()).map(|j| format!("zeta{j}")))
            .collect();
        let weights: Vec<u32> = sig.iter().chain(sig).chain(&self.tau).copied().collect();
        Variables::new(names, weights)
    }

    fn phi_points(&self, ctx: &Context) -> (Vec<Polynomial>, Vec<Polynomial>, Vec<Polynomial>) {
        let n = self.n();
        let p = self.p();
        let var = |i: usize| Polynomial::var(ctx, i);
        let zero = Polynomial::zero(ctx);
        let x: Vec<Polynomial> = (0..n).map(var).collect();
        let y: Vec<Polynomial> = (n..2 * n).map(var).collect();
        let zeta: Vec<Polynomial> = (2 * n..2 * n + p).map(var).collect();
        let x0: Vec<Polynomial> = x.iter().cloned().chain(std::iter::repeat_n(zero.clone(), p)).collect();
        let xz: Vec<Polynomial> = x.iter().cloned().chain(zeta).collect();
        let y0: Vec<Polynomial> = y.into_iter().chain(std::iter::repeat_n(zero, p)).collect();
        (x0, xz, y0)
    }

    /// Checks `(x,0)⁻¹ ∗ (y, Φ_{x,y}(ζ)) = (x,ζ)⁻¹ ∗ (y,0)` symbolically.
    pub fn check_phi_identity(&self) -> Result<bool> {
        let (ctx, phi) = self.phi_polynomials()?;
        let (x0, xz, y0) = self.phi_points(&ctx);
        let y_phi: Vec<Polynomial> = y0[..self.n()].iter().cloned().chain(phi).collect();
        let lhs = self.mul_poly(&self.inv_poly(&x0)?, &y_phi)?;
        let rhs = self.mul_poly(&self.inv_poly(&xz)?, &y0)?;
        Ok(lhs == rhs)
    }

    /// Group law rendered as text, one coordinate per entry.
    pub fn law_strings(&self) -> Vec<String> {
        self.law.iter().map(|p| p.to_string()).collect()
    }
}

/// Numeric `Φ_{x,y}(ζ)`.
pub fn phi_change_of_variable(lift: &LiftedSystem, x: &[f64], y: &[f64], zeta: &[f64]) -> Vec<f64> {
    let p = lift.p();
    let x0: Vec<f64> = x.iter().copied().chain(std::iter::repeat_n(0.0, p)).collect();
    let xz: Vec<f64> = x.iter().chain(zeta).copied().collect();
    let y0: Vec<f64> = y.iter().copied().chain(std::iter::repeat_n(0.0, p)).collect();
    let w = lift.mul_f64(&lift.mul_f64(&x0, &lift.inv_f64(&xz)), &y0);
    w[lift.n()..].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_system;
    use crate::linalg::poly_det;
    use crate::poly::{int, rat};

    fn heis() -> LiftedSystem {
        build_lift(&SystemSpec::grushin(1)).unwrap()
    }

    #[test]
    fn dynkin_low_order() {
        let w = dynkin_words();
        let get = |s: &[u8]| w.iter().find(|(x, _)| x == s).map(|(_, c)| c.clone()).unwrap_or_else(Rational::zero);
        assert_eq!(get(&[0]), int(1));
        assert_eq!(get(&[1]), int(1));
        // [X,Y] appears as ¼[X,Y] − ¼[Y,X]
        assert_eq!(get(&[0, 1]) - get(&[1, 0]), rat(1, 2));
    }

    #[test]
    fn heisenberg_lift() {
        let l = heis();
        assert_eq!((l.dim(), l.p(), l.big_q()), (3, 1, 4));
        assert_eq!(l.law_strings(), vec!["x1 + x1'", "x1*xi1' + x2 + x2'", "xi1 + xi1'"]);
        assert_eq!(l.lifted_fields()[0].to_string(), "(1, 0, 0)");
        assert_eq!(l.lifted_fields()[1].to_string(), "(0, x1, 1)");
        assert_eq!(l.inversion().iter().map(|p| p.to_string()).collect::<Vec<_>>(), vec!["-x1", "x1*xi1 - x2", "-xi1"]);
    }

    #[test]
    fn structure_constants_heisenberg() {
        let s = SystemSpec::grushin(1);
        let alg = structure_constants(&lie_basis(&s).unwrap()).unwrap();
        assert_eq!(alg.c(0, 1, 2), int(1));
        assert_eq!(alg.c(1, 0, 2), int(-1));
        assert_eq!(alg.c(0, 2, 2), int(0));
        let ab = parse_system("dim=2; weights=[1,1]; X1=(1,0); X2=(0,1)").unwrap();
        assert!(structure_constants(&lie_basis(&ab).unwrap()).unwrap().is_abelian());
    }

    #[test]
    fn jacobi_on_structure_constants() {
        let s = SystemSpec::grushin(3);
        let alg = structure_constants(&lie_basis(&s).unwrap()).unwrap();
        let d = alg.dim;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for r in 0..d {
                        let mut acc = Rational::zero();
                        for l in 0..d {
                            acc += alg.c(i, j, l) * alg.c(l, k, r)
                                + alg.c(j, k, l) * alg.c(l, i, r)
                                + alg.c(k, i, l) * alg.c(l, j, r);
                        }
                        assert!(acc.is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn bch_identities() {
        let s = SystemSpec::grushin(3);
        let alg = structure_constants(&lie_basis(&s).unwrap()).unwrap();
        let a: Vec<Rational> = (0..alg.dim).map(|i| rat(i as i64 + 1, 3)).collect();
        let b: Vec<Rational> = (0..alg.dim).map(|i| rat(2 - i as i64, 5)).collect();
        let c: Vec<Rational> = (0..alg.dim).map(|i| rat(i as i64 * i as i64 - 1, 7)).collect();
        let zero = vec![int(0); alg.dim];
        assert_eq!(bch_product(&alg, &a, &zero).unwrap(), a);
        let na: Vec<Rational> = a.iter().map(|x| -x).collect();
        assert_eq!(bch_product(&alg, &a, &na).unwrap(), zero);
        let l = bch_product(&alg, &bch_product(&alg, &a, &b).unwrap(), &c).unwrap();
        let r = bch_product(&alg, &a, &bch_product(&alg, &b, &c).unwrap()).unwrap();
        assert_eq!(l, r);
    }

    #[test]
    fn bch_step_two_closed_form() {
        let alg = structure_constants(&lie_basis(&SystemSpec::grushin(1)).unwrap()).unwrap();
        let a = [int(1), int(2), int(3)];
        let b = [int(-1), int(5), int(1)];
        // a + b + ½ [a,b], [a,b]₃ = a₁b₂ − a₂b₁
        assert_eq!(bch_product(&alg, &a, &b).unwrap(), vec![int(0), int(7), int(4) + rat(7, 2)]);
    }

    #[test]
    fn flows() {
        let s = SystemSpec::grushin(1);
        let ctx = s.context().clone();
        let y = s.field(0).add(s.field(1));
        let f = flow_polynomial(&y, &[int(0), int(0)]).unwrap();
        let at1: Vec<Rational> = f.iter().map(|p| p.eval_rational(&[int(1)]).unwrap()).collect();
        assert_eq!(at1, vec![int(1), rat(1, 2)]);
        let d1 = VectorField::coordinate(&ctx, 2, 0);
        let f = flow_polynomial(&d1, &[int(0), int(0)]).unwrap();
        assert_eq!(f[0].eval_rational(&[int(1)]).unwrap(), int(1));
        // Φ^{−Y}_t ∘ Φ^Y_t = id
        let (fctx, fwd) = flow_map(&y).unwrap();
        let (_, back) = flow_map(&y.neg()).unwrap();
        let mut images = fwd.clone();
        images.push(Polynomial::var(&fctx, 2));
        for (i, b) in back.iter().enumerate() {
            assert_eq!(b.compose(&fctx, &images).unwrap(), Polynomial::var(&fctx, i));
        }
    }

    #[test]
    fn projection_examples() {
        let s = SystemSpec::grushin(1);
        let basis = lie_basis(&s).unwrap();
        let (_, pi) = folland_projection(&s, &basis).unwrap();
        let e1: Vec<Rational> = vec![int(1), int(0), int(0)];
        assert_eq!(pi.iter().map(|p| p.eval_rational(&e1).unwrap()).collect::<Vec<_>>(), vec![int(1), int(0)]);
        let z = vec![int(0); 3];
        assert!(pi.iter().all(|p| p.eval_rational(&z).unwrap().is_zero()));
        assert_eq!(rank(&linear_part(&pi, 3)), 2);
    }

    fn group_axioms(l: &LiftedSystem) {
        let big_n = l.dim();
        let names: Vec<String> = (0..3 * big_n).map(|i| format!("u{i}")).collect();
        let w: Vec<u32> = (0..3).flat_map(|_| l.context().weights().to_vec()).collect();
        let ctx = Variables::new(names, w);
        let v = |o: usize| (0..big_n).map(|i| Polynomial::var(&ctx, o + i)).collect::<Vec<_>>();
        let (a, b, c) = (v(0), v(big_n), v(2 * big_n));
        let lhs = l.mul_poly(&l.mul_poly(&a, &b).unwrap(), &c).unwrap();
        let rhs = l.mul_poly(&a, &l.mul_poly(&b, &c).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        let e = l.mul_poly(&a, &l.inv_poly(&a).unwrap()).unwrap();
        assert!(e.iter().all(Polynomial::is_zero));
        // D_λ(z ∗ z′) = D_λ z ∗ D_λ z′
        let lam = rat(3, 2);
        let dil = |u: &[Polynomial]| -> Vec<Polynomial> {
            u.iter()
                .zip(l.context().weights())
                .map(|(p, &wt)| p.scale(&num_traits::pow::pow(lam.clone(), wt as usize)))
                .collect()
        };
        assert_eq!(dil(&l.mul_poly(&a, &b).unwrap()), l.mul_poly(&dil(&a), &dil(&b)).unwrap());
        // T ∘ T⁻¹ = id and T⁻¹ ∘ T = id
        let zc = l.context().clone();
        let zv: Vec<Polynomial> = (0..big_n).map(|i| Polynomial::var(&zc, i)).collect();
        assert_eq!(compose_all(l.t_map(), &zc, l.t_inverse()).unwrap(), zv);
        let ac = l.algebra_context().clone();
        let av: Vec<Polynomial> = (0..big_n).map(|i| Polynomial::var(&ac, i)).collect();
        assert_eq!(compose_all(l.t_inverse(), &ac, l.t_map()).unwrap(), av);
        // left translations are unimodular
        let jac: Vec<Vec<Polynomial>> =
            l.law().iter().map(|p| (0..big_n).map(|k| p.partial(big_n + k)).collect()).collect();
        assert_eq!(poly_det(&jac), Polynomial::one(l.pair_context()));
        assert!(l.check_phi_identity().unwrap());
    }

    #[test]
    fn group_axioms_on_examples() {
        group_axioms(&heis());
        group_axioms(&build_lift(&SystemSpec::grushin(2)).unwrap());
        group_axioms(&build_lift(&SystemSpec::grushin(3)).unwrap());
        let sec5 = parse_system("dim=3; weights=[1,2,3]; X1=(1,0,0); X2=(0,x1,x2)").unwrap();
        group_axioms(&build_lift(&sec5).unwrap());
        let drift = parse_system("dim=2; weights=[1,3]; X1=(1,0); X0=(0,x1)").unwrap();
        let l = build_lift(&drift).unwrap();
        group_axioms(&l);
        assert_eq!(l.lifted_drift().unwrap().homogeneous_degree(), Some(2));
    }

    #[test]
    fn phi_heisenberg() {
        let l = heis();
        let (ctx, phi) = l.phi_polynomials().unwrap();
        assert_eq!(phi.len(), 1);
        // Jacobian −1 in ζ
        assert_eq!(phi[0].partial(4), Polynomial::constant(&ctx, int(-1)));
        let v = phi_change_of_variable(&l, &[0.0, 0.0], &[0.0, 0.0], &[0.7]);
        assert!((v[0] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn step_limit() {
        let s = SystemSpec::grushin(6);
        assert!(matches!(build_lift(&s), Err(Error::Unsupported(_))));
    }
}
