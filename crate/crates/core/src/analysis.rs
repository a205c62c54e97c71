//! Linearized force-response problems, modeling error, explicit bound
//! constants and convergence sweeps.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::chain::{
    backward_diff, dot2, l2eps_norm, remove_mean, ChainGeometry, ChainKind, Gram, InterfacePartition,
    MeanZeroBasis, Vec2,
};
use crate::error::{Error, Result};
use crate::models::{first_variation, second_variation, ModelKind, ModelSpec};
use crate::numerics::{dot, eig_smallest_value, log_slope, Cholesky, DenseSymmetric, Lu};
use crate::potential::PairPotential;
use crate::stability::gamma1;

/// External load profile, sampled per N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadProfile {
    /// `f_ℓ = (sin 2πk₁ℓε, cos 2πk₂ℓε)` minus its mean.
    SmoothTrig { k1: u32, k2: u32 },
    /// Explicit values; only valid for matching N.
    Custom(Vec<Vec2>),
}

impl Default for LoadProfile {
    fn default() -> Self {
        LoadProfile::SmoothTrig { k1: 1, k2: 2 }
    }
}

impl LoadProfile {
    pub fn realize(&self, n: usize) -> Result<Vec<Vec2>> {
        let raw = match self {
            LoadProfile::SmoothTrig { k1, k2 } => {
                let eps = 1.0 / n as f64;
                (1..=n)
                    .map(|l| {
                        let t = l as f64 * eps;
                        [(2.0 * PI * *k1 as f64 * t).sin(), (2.0 * PI * *k2 as f64 * t).cos()]
                    })
                    .collect()
            }
            LoadProfile::Custom(v) => {
                if v.len() != n {
                    return Err(Error::Argument(format!("custom load has {} values, N = {n}", v.len())));
                }
                v.clone()
            }
        };
        Ok(remove_mean(&raw))
    }
}

impl std::fmt::Display for LoadProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadProfile::SmoothTrig { k1, k2 } => write!(f, "trig:{k1},{k2}"),
            LoadProfile::Custom(v) => write!(f, "custom[{}]", v.len()),
        }
    }
}

impl std::str::FromStr for LoadProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("load profile '{s}': expected trig:<k1>,<k2>"));
        let rest = s.trim().strip_prefix("trig:").ok_or_else(bad)?;
        let (a, b) = rest.split_once(',').ok_or_else(bad)?;
        Ok(LoadProfile::SmoothTrig {
            k1: a.trim().parse().map_err(|_| bad())?,
            k2: b.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// Constants entering the explicit error bounds at strain F and ε = 1/N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub n: usize,
    pub f: f64,
    pub c_phi: f64,
    pub c_kappa: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Interface constant of the QNL ghost-force estimate.
    pub c_interface: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub gamma_eps: f64,
}

const C_PHI_GRID: usize = 1000;
const C_PHI_SAFETY: f64 = 1.1;

pub fn bound_constants(p: &PairPotential, f: f64, n: usize) -> Result<BoundConstants> {
    if n < 4 || !(f > 0.0) {
        return Err(Error::Argument(format!("need N >= 4 and F > 0, got N = {n}, F = {f}")));
    }
    let eps = 1.0 / n as f64;
    let lo = 2.0 * f * (PI * eps).cos();
    let hi = 2.0 * f;
    let mut m = 0.0f64;
    for i in 0..=C_PHI_GRID {
        let s = lo + (hi - lo) * i as f64 / C_PHI_GRID as f64;
        let d = p.derivs(s)?;
        // d/ds (φ'(s)/s)
        let ratio = d[2] / s - d[1] / (s * s);
        m = m.max(d[3].abs()).max(ratio.abs());
    }
    let c_phi = C_PHI_SAFETY * f * PI * PI * m;

    let d1_2f = p.d1(2.0 * f);
    let d2_2f = p.d2(2.0 * f);
    let q = d1_2f / (2.0 * f);
    let c_kappa = 4.0 * c_phi * (1.0 + PI * PI * eps * eps) * f + 2.0 * PI * PI * d1_2f.abs();
    let c1 = d2_2f.abs().max(q.abs()).max(4.0 * PI * PI * (d2_2f - q).abs() + 12.0 * c_phi);
    let c2 = 4.0 * PI * c_phi;
    let c3 = d2_2f.abs().max(q.abs()).max(2.0 * PI * (d2_2f - q).abs());
    let c_interface =
        2f64.sqrt() * (2.0 * eps * c_phi * (1.0 + PI * eps) * f + PI * d1_2f.abs());

    let g1 = gamma1(p, f);
    let g2 = g1.min((p.d1(f) + 2.0 * d1_2f) / f);
    let g4 = g1.min(p.d1(f) / f);
    let gamma_eps = g4
        - eps * (2.0 * PI * d2_2f.abs() + 2.0 * eps * c_phi).max(4.0 * eps * (PI * PI + c_phi));
    Ok(BoundConstants {
        n,
        f,
        c_phi,
        c_kappa,
        c1,
        c2,
        c3,
        c_interface,
        gamma1: g1,
        gamma2: g2,
        gamma3: g1,
        gamma4: g4,
        gamma_eps,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Fall back to LU when the Hessian is not positive definite.
    pub allow_indefinite: bool,
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub basis: MeanZeroBasis,
    pub coeffs: Vec<f64>,
    pub field: Vec<Vec2>,
    /// The Hessian factored as positive definite.
    pub definite: bool,
}

/// Coefficient right-hand side `ε Qᵀ(f − g)` of the linearized equation.
pub fn linearized_rhs(model: &ModelSpec, geom: &ChainGeometry, load: &[Vec2], basis: &MeanZeroBasis) -> Result<Vec<f64>> {
    if load.len() != geom.n {
        return Err(Error::Argument(format!("load has {} values, N = {}", load.len(), geom.n)));
    }
    let g = first_variation(model, geom)?;
    let eps = geom.eps;
    let r: Vec<Vec2> = load.iter().zip(&g).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
    Ok(basis.from_field(&r).into_iter().map(|x| eps * x).collect())
}

fn solve_compressed(h: &DenseSymmetric, rhs: &[f64], opts: SolveOptions) -> Result<(Vec<f64>, bool)> {
    match Cholesky::factor(h) {
        Ok(c) => Ok((c.solve(rhs), true)),
        Err(Error::NotPositiveDefinite { .. }) if opts.allow_indefinite => {
            Ok((Lu::factor(h.matrix())?.solve(rhs), false))
        }
        // the caller fills in the infimum
        Err(Error::NotPositiveDefinite { .. }) => Err(Error::Unstable { numeric_inf: f64::NAN }),
        Err(e) => Err(e),
    }
}

/// Solves `δE(y_F)[v] + δ²E(y_F)[u, v] = ⟨f, v⟩` for all mean-zero `v`.
pub fn solve_linearized(
    model: &ModelSpec,
    geom: &ChainGeometry,
    load: &[Vec2],
    constrained: bool,
    opts: SolveOptions,
) -> Result<LinearSolution> {
    let basis = MeanZeroBasis::new(geom.n, constrained);
    let h = second_variation(model, geom, constrained)?;
    let rhs = linearized_rhs(model, geom, load, &basis)?;
    let (coeffs, definite) = match solve_compressed(&h, &rhs, opts) {
        Err(Error::Unstable { .. }) => {
            let gram = Gram::new(basis)?;
            let numeric_inf = eig_smallest_value(&h, &gram.matrix)?;
            return Err(Error::Unstable { numeric_inf });
        }
        other => other?,
    };
    let field = basis.to_field(&coeffs);
    Ok(LinearSolution { basis, coeffs, field, definite })
}

/// Modeling error `τ` of an approximate model against the atomistic one.
#[derive(Debug, Clone)]
pub struct ModelingError {
    /// Coefficient covector: `⟨τ, Q c⟩ = coeffsᵀ c`.
    pub coeffs: Vec<f64>,
    /// Riesz representer in the ℓ²_ε pairing.
    pub field: Vec<Vec2>,
    pub norm: f64,
}

/// `⟨τ, v⟩ = (δE^m − δE^a)(y_F)[v] + (δ²E^m − δ²E^a)(y_F)[u_a, v]`, with the
/// atomistic reference carrying the same bond-angle weight.
pub fn modeling_error(model: &ModelSpec, geom: &ChainGeometry, u_a: &LinearSolution) -> Result<ModelingError> {
    if model.kind == ModelKind::Atomistic {
        return Err(Error::Argument("modeling error is measured against the atomistic model".into()));
    }
    let basis = u_a.basis;
    if basis.n != geom.n {
        return Err(Error::Argument("atomistic solution and geometry differ in N".into()));
    }
    let reference = model.reference();
    let gm = first_variation(model, geom)?;
    let ga = first_variation(&reference, geom)?;
    let dg: Vec<Vec2> = gm.iter().zip(&ga).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
    let hm = second_variation(model, geom, basis.constrained)?;
    let ha = second_variation(&reference, geom, basis.constrained)?;
    let eps = geom.eps;
    let hu_m = hm.mul_vec(&u_a.coeffs);
    let hu_a = ha.mul_vec(&u_a.coeffs);
    let coeffs: Vec<f64> = basis
        .from_field(&dg)
        .iter()
        .enumerate()
        .map(|(i, x)| eps * x + hu_m[i] - hu_a[i])
        .collect();
    let gram = Gram::new(basis)?;
    let norm = gram.dual_norm(&coeffs);
    let field: Vec<Vec2> = basis.to_field(&coeffs).into_iter().map(|v| [v[0] / eps, v[1] / eps]).collect();
    Ok(ModelingError { coeffs, field, norm })
}

/// `‖(u − v)'‖_{ℓ²_ε}` from coefficient vectors.
pub fn strain_error(gram: &Gram, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    gram.matrix.quad(&d).max(0.0).sqrt()
}

/// Derivative norms of a displacement, with the QNL partial sums when a
/// partition is given.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivativeNorms {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// `(ε Σ_{K+2..N} |u'_ℓ|²)^{1/2}`
    pub s1: f64,
    /// `(ε Σ_{K+2..N} |u''_ℓ|²)^{1/2}`
    pub s2: f64,
    /// `(ε Σ_{K+2..N} |u'''_{ℓ+1}|²)^{1/2}`
    pub s3: f64,
    /// `(ε|u'_1|² + ε|u'_{K+1}|²)^{1/2}`
    pub i1: f64,
    /// `(ε|u''_1|² + ε|u''_{K+2}|²)^{1/2}`
    pub i2: f64,
}

pub fn derivative_norms(u: &[Vec2], partition: Option<&InterfacePartition>) -> DerivativeNorms {
    let n = u.len();
    let eps = 1.0 / n as f64;
    let u1 = backward_diff(u, 1);
    let u2 = backward_diff(&u1, 1);
    let u3 = backward_diff(&u2, 1);
    let mut out = DerivativeNorms { d1: l2eps_norm(&u1), d2: l2eps_norm(&u2), d3: l2eps_norm(&u3), ..Default::default() };
    if let Some(p) = partition {
        // bond ℓ (1-based, periodic) lives in slot (ℓ − 1) mod N
        let at = |v: &[Vec2], l: usize| v[(l - 1) % n];
        let sq = |w: Vec2| dot2(w, w);
        let sum = |v: &[Vec2], shift: usize| -> f64 { p.local_bonds().map(|l| sq(at(v, l + shift))).sum() };
        out.s1 = (eps * sum(&u1, 0)).sqrt();
        out.s2 = (eps * sum(&u2, 0)).sqrt();
        out.s3 = (eps * sum(&u3, 1)).sqrt();
        out.i1 = (eps * (sq(at(&u1, 1)) + sq(at(&u1, p.k + 1)))).sqrt();
        out.i2 = (eps * (sq(at(&u2, 1)) + sq(at(&u2, p.k + 2)))).sqrt();
    }
    out
}

/// Explicit a priori bound on `‖(u^a − u^model)'‖`.
///
/// `None` when the stability constant in the denominator is not positive or
/// a sign hypothesis of the estimate fails.
pub fn error_bound(
    model: &ModelSpec,
    kind: ChainKind,
    constrained: bool,
    c: &BoundConstants,
    norms: &DerivativeNorms,
) -> Option<f64> {
    let p = &model.potential;
    let f = c.f;
    let eps = 1.0 / c.n as f64;
    let d2 = p.d2(2.0 * f).abs();
    let q = (p.d1(2.0 * f) / (2.0 * f)).abs();
    let pos = |g: f64| (g > 0.0).then_some(g);
    match (model.kind, kind) {
        (ModelKind::Atomistic, _) => None,
        (ModelKind::CauchyBorn, ChainKind::Linear) if constrained => {
            pos(c.gamma1).map(|g| eps * eps * d2 * norms.d3 / g)
        }
        (ModelKind::CauchyBorn, ChainKind::Linear) => {
            pos(c.gamma2).map(|g| eps * eps * d2.max(q) * norms.d3 / g)
        }
        (ModelKind::CauchyBorn, ChainKind::Circular) => pos(c.gamma2).map(|g| {
            (c.c_kappa * eps * eps
                + (c.c1 * eps * eps + c.c2 * eps.powi(4)) * (norms.d3 + norms.d2 + norms.d1))
                / g
        }),
        (ModelKind::Qnl { .. }, ChainKind::Linear) if constrained => {
            if p.d2(2.0 * f) > 0.0 {
                return None;
            }
            pos(c.gamma3).map(|g| eps * d2 / g * (norms.i2 + eps * norms.s3))
        }
        (ModelKind::Qnl { .. }, ChainKind::Linear) => {
            pos(c.gamma4).map(|g| d2.max(q) * eps * (norms.i2 + eps * norms.s3) / g)
        }
        (ModelKind::Qnl { .. }, ChainKind::Circular) => pos(c.gamma_eps).map(|g| {
            ((c.c1 * eps * eps + c.c2 * eps.powi(4)) * (norms.s1 + norms.s2 + norms.s3)
                + (c.c3 * eps + 6.0 * c.c_phi * eps * eps + c.c_phi * eps.powi(3)) * (norms.i1 + norms.i2)
                + c.c_kappa * eps * eps
                + c.c_interface * eps.powf(1.5))
                / g
        }),
    }
}

/// Bound on the ghost-force negative norm on a circle; zero on a line.
pub fn ghost_bound(model: ModelKind, kind: ChainKind, c: &BoundConstants) -> Option<f64> {
    let eps = 1.0 / c.n as f64;
    match (model, kind) {
        (ModelKind::Atomistic, _) => None,
        (_, ChainKind::Linear) => Some(0.0),
        (ModelKind::CauchyBorn, ChainKind::Circular) => Some(c.c_kappa * eps * eps),
        (ModelKind::Qnl { .. }, ChainKind::Circular) => {
            Some(c.c_kappa * eps * eps + c.c_interface * eps.powf(1.5))
        }
    }
}

/// Relative slack for error-vs-bound comparisons. Constrained Cauchy–Born
/// attains its bound, so the two agree up to rounding.
pub const BOUND_RTOL: f64 = 1e-10;

/// Which approximation a sweep compares against the atomistic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approximation {
    Cb,
    /// Interface at `K = ⌊N/2⌋`.
    Qnl,
}

impl Approximation {
    pub fn model_at(&self, n: usize) -> ModelKind {
        match self {
            Approximation::Cb => ModelKind::CauchyBorn,
            Approximation::Qnl => ModelKind::Qnl { k: n / 2 },
        }
    }
}

impl std::str::FromStr for Approximation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cb" => Ok(Approximation::Cb),
            "qnl" => Ok(Approximation::Qnl),
            other => Err(Error::Argument(format!("unknown approximation '{other}' (cb | qnl)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub approx: Approximation,
    pub potential: PairPotential,
    pub alpha: f64,
    pub kind: ChainKind,
    pub f: f64,
    pub constrained: bool,
    pub load: LoadProfile,
    pub ns: Vec<usize>,
    /// Solve through indefinite Hessians instead of failing.
    pub allow_indefinite: bool,
    /// Also compute the numeric stability constant of the approximation.
    pub gamma_numeric: bool,
}

impl SweepSpec {
    pub fn new(approx: Approximation, potential: PairPotential, kind: ChainKind, f: f64, ns: Vec<usize>) -> Self {
        SweepSpec {
            approx,
            potential,
            alpha: 0.0,
            kind,
            f,
            constrained: false,
            load: LoadProfile::default(),
            ns,
            allow_indefinite: false,
            gamma_numeric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub model: String,
    pub kind: ChainKind,
    pub n: usize,
    pub eps: f64,
    pub k: Option<usize>,
    pub alpha: f64,
    pub error: f64,
    pub tau_norm: f64,
    pub bound: Option<f64>,
    pub gamma_numeric: Option<f64>,
    /// Fitted rate over this and all smaller N of the sweep.
    pub rate_so_far: Option<f64>,
    pub norms: DerivativeNorms,
    pub flags: Vec<String>,
}

impl SweepRecord {
    pub fn within_bound(&self) -> Option<bool> {
        self.bound.map(|b| self.error <= b * (1.0 + BOUND_RTOL))
    }
}

/// One N of a sweep: both linearized solves, τ, the bound and diagnostics.
pub fn sweep_point(spec: &SweepSpec, n: usize) -> Result<SweepRecord> {
    let kind = spec.approx.model_at(n);
    let model = ModelSpec::new(kind, spec.potential.clone()).with_alpha(spec.alpha);
    model_check(&model, n)?;
    let geom = ChainGeometry::new(spec.kind, n, spec.f)?;
    let load = spec.load.realize(n)?;
    let opts = SolveOptions { allow_indefinite: spec.allow_indefinite };
    let mut flags = Vec::new();
    let ua = solve_linearized(&model.reference(), &geom, &load, spec.constrained, opts)?;
    let um = solve_linearized(&model, &geom, &load, spec.constrained, opts)?;
    if !ua.definite {
        flags.push("atomistic-indefinite".to_string());
    }
    if !um.definite {
        flags.push(format!("{}-indefinite", kind.label()));
    }
    let gram = Gram::new(ua.basis)?;
    let error = strain_error(&gram, &ua.coeffs, &um.coeffs);
    let tau = modeling_error(&model, &geom, &ua)?;
    let partition = match kind {
        ModelKind::Qnl { k } => Some(InterfacePartition::new(n, k)?),
        _ => None,
    };
    let norms = derivative_norms(&ua.field, partition.as_ref());
    let consts = bound_constants(&spec.potential, spec.f, n)?;
    let bound = error_bound(&model, spec.kind, spec.constrained, &consts, &norms);
    if bound.is_none() {
        flags.push("bound-undefined".to_string());
    }
    let gamma_numeric = if spec.gamma_numeric {
        let h = second_variation(&model, &geom, spec.constrained)?;
        Some(eig_smallest_value(&h, &gram.matrix)?)
    } else {
        None
    };
    Ok(SweepRecord {
        model: model.name(),
        kind: spec.kind,
        n,
        eps: geom.eps,
        k: partition.map(|p| p.k),
        alpha: spec.alpha,
        error,
        tau_norm: tau.norm,
        bound,
        gamma_numeric,
        rate_so_far: None,
        norms,
        flags,
    })
}

fn model_check(model: &ModelSpec, n: usize) -> Result<()> {
    if let ModelKind::Qnl { k } = model.kind {
        InterfacePartition::new(n, k)?;
    }
    Ok(())
}

/// Sorts records by N and fills in the running rate.
pub fn finish_sweep(mut records: Vec<SweepRecord>) -> Vec<SweepRecord> {
    records.sort_by_key(|r| r.n);
    for i in 0..records.len() {
        let pairs: Vec<(f64, f64)> = records[..=i].iter().map(|r| (r.eps, r.error)).collect();
        records[i].rate_so_far = if pairs.len() >= 2 { log_slope(&pairs).ok() } else { None };
    }
    records
}

/// Fitted rate of the strain error over the whole sweep.
pub fn sweep_rate(records: &[SweepRecord]) -> Option<f64> {
    records.last().and_then(|r| r.rate_so_far)
}

/// Runs every N sequentially. Callers wanting parallelism can map
/// [`sweep_point`] themselves and pass the results to [`finish_sweep`].
pub fn error_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    let records = spec.ns.iter().map(|&n| sweep_point(spec, n)).collect::<Result<Vec<_>>>()?;
    Ok(finish_sweep(records))
}

/// `⟨τ, v⟩ − δ²E^model[u^a − u^model, v]` for a coefficient vector `v`.
pub fn duality_defect(
    model: &ModelSpec,
    geom: &ChainGeometry,
    ua: &LinearSolution,
    um: &LinearSolution,
    tau: &ModelingError,
    v: &[f64],
) -> Result<f64> {
    let h = second_variation(model, geom, ua.basis.constrained)?;
    let d: Vec<f64> = ua.coeffs.iter().zip(&um.coeffs).map(|(a, b)| a - b).collect();
    Ok(dot(&tau.coeffs, v) - h.matrix().bilinear(&d, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{inner, negative_norm};
    use crate::stability::circular_equilibrium;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LJ: PairPotential = PairPotential::LennardJones;

    #[test]
    fn load_is_mean_zero_and_parses() {
        let f = LoadProfile::default().realize(17).unwrap();
        let s = f.iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
        assert!(s[0].abs() < 1e-13 && s[1].abs() < 1e-13);
        assert_eq!("trig:1,2".parse::<LoadProfile>().unwrap(), LoadProfile::default());
        assert!("sin".parse::<LoadProfile>().is_err());
        assert!(LoadProfile::Custom(vec![[0.0, 0.0]; 3]).realize(4).is_err());
    }

    #[test]
    fn c_phi_satisfies_its_defining_inequality() {
        for f in [0.9, 1.0, 1.1] {
            for n in [16, 32, 64, 128, 256, 512, 1024] {
                let c = bound_constants(&LJ, f, n).unwrap();
                let eps = 1.0 / n as f64;
                let f2 = f * (PI * eps).cos();
                let a = (LJ.d2(2.0 * f2) - LJ.d2(2.0 * f)).abs();
                let b = (LJ.d1(2.0 * f2) / (2.0 * f2) - LJ.d1(2.0 * f) / (2.0 * f)).abs();
                assert!(a.max(b) <= c.c_phi * eps * eps, "F={f} N={n}");
            }
        }
    }

    #[test]
    fn constant_formulas() {
        let c = bound_constants(&LJ, 1.0, 64).unwrap();
        let eps = 1.0 / 64.0;
        let ck = 4.0 * c.c_phi * (1.0 + PI * PI * eps * eps) + 2.0 * PI * PI * LJ.d1(2.0).abs();
        assert!((c.c_kappa - ck).abs() < 1e-12);
        assert_eq!(c.gamma4, gamma1(&LJ, 1.0).min(LJ.d1(1.0)));
        assert!(c.gamma_eps < c.gamma4);
        assert_eq!(c.c2, 4.0 * PI * c.c_phi);
    }

    #[test]
    fn linear_chain_without_load_stays_put() {
        let g = ChainGeometry::linear(16, 1.05).unwrap();
        for m in [ModelSpec::atomistic(LJ), ModelSpec::qnl(LJ, 8), ModelSpec::cauchy_born(LJ)] {
            let u = solve_linearized(&m, &g, &vec![[0.0, 0.0]; 16], false, SolveOptions::default()).unwrap();
            assert!(u.coeffs.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn ring_at_its_equilibrium_stays_put() {
        // Rotations lie in the Hessian kernel at equilibrium, so the system is
        // singular; u = 0 still solves it because the right-hand side vanishes.
        for kind in [ModelKind::Atomistic, ModelKind::CauchyBorn] {
            let eq = circular_equilibrium(&LJ, kind, 32).unwrap();
            let g = ChainGeometry::circular(32, eq.f).unwrap();
            let m = ModelSpec::new(kind, LJ);
            let basis = MeanZeroBasis::new(32, false);
            let rhs = linearized_rhs(&m, &g, &vec![[0.0, 0.0]; 32], &basis).unwrap();
            assert!(rhs.iter().all(|x| x.abs() < 1e-10));
            let rot: Vec<Vec2> = g.positions.iter().map(|p| [-p[1], p[0]]).collect();
            let hr = second_variation(&m, &g, false).unwrap().mul_vec(&basis.from_field(&rot));
            assert!(hr.iter().all(|x| x.abs() < 1e-8), "{kind:?}");
        }
    }

    #[test]
    fn solution_satisfies_weak_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = ChainGeometry::circular(24, 1.02).unwrap();
        let m = ModelSpec::qnl(LJ, 12).with_alpha(0.1);
        let load = LoadProfile::default().realize(24).unwrap();
        let u = solve_linearized(&m, &g, &load, false, SolveOptions::default()).unwrap();
        let grad = first_variation(&m, &g).unwrap();
        for _ in 0..20 {
            let v: Vec<Vec2> =
                remove_mean(&(0..24).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect::<Vec<_>>());
            let lhs = inner(&grad, &v).unwrap()
                + crate::models::second_variation_form(&m, &g, &u.field, &v).unwrap();
            assert!((lhs - inner(&load, &v).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn indefinite_hessian_is_reported() {
        let g = ChainGeometry::linear(16, 0.9).unwrap();
        let load = LoadProfile::default().realize(16).unwrap();
        let r = solve_linearized(&ModelSpec::atomistic(LJ), &g, &load, false, SolveOptions::default());
        match r {
            Err(Error::Unstable { numeric_inf }) => assert!(numeric_inf < 0.0),
            other => panic!("expected instability, got {other:?}"),
        }
        let r = solve_linearized(&ModelSpec::atomistic(LJ), &g, &load, false, SolveOptions { allow_indefinite: true })
            .unwrap();
        assert!(!r.definite);
    }

    #[test]
    fn tau_field_and_coefficients_agree() {
        let g = ChainGeometry::circular(20, 1.0).unwrap();
        let load = LoadProfile::default().realize(20).unwrap();
        let opts = SolveOptions { allow_indefinite: true };
        let ua = solve_linearized(&ModelSpec::atomistic(LJ), &g, &load, false, opts).unwrap();
        let tau = modeling_error(&ModelSpec::cauchy_born(LJ), &g, &ua).unwrap();
        assert!((negative_norm(&tau.field).unwrap() - tau.norm).abs() < 1e-12 * tau.norm.max(1.0));
        assert!(modeling_error(&ModelSpec::atomistic(LJ), &g, &ua).is_err());
    }

    #[test]
    fn duality_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ChainGeometry::circular(24, 1.05).unwrap();
        let load = LoadProfile::default().realize(24).unwrap();
        for m in [ModelSpec::cauchy_born(LJ), ModelSpec::qnl(LJ, 12), ModelSpec::cauchy_born(LJ).with_alpha(0.3)] {
            let o = SolveOptions::default();
            let ua = solve_linearized(&m.reference(), &g, &load, false, o).unwrap();
            let um = solve_linearized(&m, &g, &load, false, o).unwrap();
            let tau = modeling_error(&m, &g, &ua).unwrap();
            for _ in 0..20 {
                let v: Vec<f64> = (0..ua.basis.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert!(duality_defect(&m, &g, &ua, &um, &tau, &v).unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn partial_sums_oracle() {
        // u'_ℓ = ℓ e_x makes every partial sum a closed form.
        let n = 12;
        let p = InterfacePartition::new(n, 5).unwrap();
        let mut u = vec![[0.0, 0.0]; n];
        for l in 1..n {
            u[l] = [u[l - 1][0] + (l + 1) as f64 / n as f64, 0.0];
        }
        let nd = derivative_norms(&u, Some(&p));
        let d1 = backward_diff(&u, 1);
        let eps = 1.0 / n as f64;
        let s1: f64 = (7..=12).map(|l| d1[l - 1][0].powi(2)).sum::<f64>();
        assert!((nd.s1 - (eps * s1).sqrt()).abs() < 1e-12);
        let i1 = d1[0][0].powi(2) + d1[5][0].powi(2);
        assert!((nd.i1 - (eps * i1).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn linear_bounds_hold() {
        let load = LoadProfile::default().realize(32).unwrap();
        for (m, constrained) in [
            (ModelSpec::cauchy_born(LJ), true),
            (ModelSpec::cauchy_born(LJ), false),
            (ModelSpec::qnl(LJ, 16), true),
            (ModelSpec::qnl(LJ, 16), false),
        ] {
            let g = ChainGeometry::linear(32, 1.05).unwrap();
            let o = SolveOptions::default();
            let ua = solve_linearized(&m.reference(), &g, &load, constrained, o).unwrap();
            let um = solve_linearized(&m, &g, &load, constrained, o).unwrap();
            let gram = Gram::new(ua.basis).unwrap();
            let e = strain_error(&gram, &ua.coeffs, &um.coeffs);
            let p = match m.kind {
                ModelKind::Qnl { k } => Some(InterfacePartition::new(32, k).unwrap()),
                _ => None,
            };
            let nd = derivative_norms(&ua.field, p.as_ref());
            let c = bound_constants(&LJ, 1.05, 32).unwrap();
            let b = error_bound(&m, ChainKind::Linear, constrained, &c, &nd).unwrap();
            assert!(e <= b * (1.0 + BOUND_RTOL), "{} constrained={constrained}: {e} > {b}", m.name());
        }
    }

    #[test]
    fn sweep_records_are_sorted_with_rates() {
        let mut spec = SweepSpec::new(Approximation::Cb, LJ, ChainKind::Circular, 1.05, vec![32, 16, 24]);
        spec.gamma_numeric = true;
        let r = error_sweep(&spec).unwrap();
        assert_eq!(r.iter().map(|r| r.n).collect::<Vec<_>>(), vec![16, 24, 32]);
        assert!(r[0].rate_so_far.is_none() && r[2].rate_so_far.is_some());
        for rec in &r {
            assert!(rec.error <= rec.tau_norm / rec.gamma_numeric.unwrap() + 1e-12);
            assert_eq!(rec.within_bound(), Some(true));
        }
    }
}
