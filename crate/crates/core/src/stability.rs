//! Stability infima: numeric (smallest generalized eigenvalue of the Hessian
//! against the strain Gram operator) and closed form, plus critical strains,
//! circular equilibria and buckling-mode identification.

use serde::{Deserialize, Serialize};

use crate::analysis::bound_constants;
use crate::chain::{
    norm2v, remove_mean, scale2, ChainGeometry, ChainKind, Gram, MeanZeroBasis, Vec2,
};
use crate::error::{Error, Result};
use crate::models::{first_variation, second_variation, ModelKind, ModelSpec};
use crate::numerics::{dot, eig_pencil, eig_smallest_value, find_root};
use crate::potential::PairPotential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// φ''(F) + 4φ''(2F).
    Tension,
    /// The φ'-branch realized by zig-zag modes.
    Buckling,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Tension => "tension",
            Branch::Buckling => "buckling",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: usize) -> Self {
        if n % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// How closely the closed-form value is claimed to match the infimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accuracy {
    Exact,
    /// Agreement up to O(ε²).
    OrderEps2,
    /// Agreement up to O(ε).
    OrderEps,
}

impl Accuracy {
    /// Minimum fitted decay rate expected of the gap.
    pub fn expected_rate(&self) -> Option<f64> {
        match self {
            Accuracy::Exact => None,
            Accuracy::OrderEps2 => Some(2.0),
            Accuracy::OrderEps => Some(1.0),
        }
    }
}

/// Signs of φ'(2F) and φ''(2F) assumed by most of the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypotheses {
    /// φ'(2F) ≥ 0.
    pub d1_nonneg: bool,
    /// φ''(2F) ≤ 0.
    pub d2_nonpos: bool,
}

impl Hypotheses {
    pub fn at(potential: &PairPotential, f: f64) -> Self {
        Hypotheses { d1_nonneg: potential.d1(2.0 * f) >= 0.0, d2_nonpos: potential.d2(2.0 * f) <= 0.0 }
    }

    pub fn flags(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.d1_nonneg {
            v.push("phi'(2F)<0".to_string());
        }
        if !self.d2_nonpos {
            v.push("phi''(2F)>0".to_string());
        }
        v
    }
}

/// Closed-form stability value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticStability {
    pub value: f64,
    pub branch: Branch,
    pub tension: f64,
    /// Absent for line-constrained displacements.
    pub buckling: Option<f64>,
    pub accuracy: Accuracy,
    /// Guaranteed lower bound on the infimum, where one is available.
    pub lower_bound: Option<f64>,
    /// Whether the hypotheses this value depends on hold.
    pub hypotheses_met: bool,
    pub flags: Vec<String>,
}

/// `φ''(F) + 4φ''(2F)`.
pub fn gamma1(p: &PairPotential, f: f64) -> f64 {
    p.d2(f) + 4.0 * p.d2(2.0 * f)
}

/// Buckling-branch expression for a model at strain `f`.
pub fn buckling_value(p: &PairPotential, model: ModelKind, f: f64, alpha: f64, beta: f64) -> f64 {
    let bend = 2.0 * alpha * beta.cos() / (f * f);
    match model {
        ModelKind::CauchyBorn => (p.d1(f) + 2.0 * p.d1(2.0 * f)) / f + bend,
        ModelKind::Atomistic | ModelKind::Qnl { .. } => p.d1(f) / f + bend,
    }
}

fn beta_of(kind: ChainKind, n: usize) -> f64 {
    match kind {
        ChainKind::Linear => 0.0,
        ChainKind::Circular => 2.0 * std::f64::consts::PI / n as f64,
    }
}

/// The closed-form stability value for `(model, kind, N, F, constrained, α)`.
pub fn stability_analytic(
    model: &ModelSpec,
    kind: ChainKind,
    n: usize,
    f: f64,
    constrained: bool,
) -> Result<AnalyticStability> {
    if n < 4 || !(f > 0.0) {
        return Err(Error::Argument(format!("need N >= 4 and F > 0, got N = {n}, F = {f}")));
    }
    if constrained && kind != ChainKind::Linear {
        return Err(Error::Precondition("line-constrained displacements need a linear chain".into()));
    }
    let p = &model.potential;
    let eps = 1.0 / n as f64;
    let hyp = Hypotheses::at(p, f);
    let g1 = gamma1(p, f);
    let parity = Parity::of(n);
    let mut flags = hyp.flags();

    if constrained {
        let (value, met) = match model.kind {
            ModelKind::CauchyBorn => (g1, true),
            ModelKind::Atomistic => {
                let mu = crate::chain::mu_epsilon(n);
                (g1 - eps * eps * mu * mu * p.d2(2.0 * f), hyp.d2_nonpos)
            }
            ModelKind::Qnl { .. } => (g1, hyp.d2_nonpos),
        };
        return Ok(AnalyticStability {
            value,
            branch: Branch::Tension,
            tension: value,
            buckling: None,
            accuracy: Accuracy::Exact,
            lower_bound: if met { Some(value) } else { None },
            hypotheses_met: met,
            flags,
        });
    }

    let beta = beta_of(kind, n);
    let buck = buckling_value(p, model.kind, f, model.alpha, beta);
    let (value, branch) = if buck < g1 { (buck, Branch::Buckling) } else { (g1, Branch::Tension) };
    let both = hyp.d1_nonneg && hyp.d2_nonpos;
    let (accuracy, met) = match (model.kind, kind, parity) {
        (ModelKind::CauchyBorn, ChainKind::Linear, _) => (Accuracy::Exact, true),
        (ModelKind::CauchyBorn, ChainKind::Circular, Parity::Even) => (Accuracy::Exact, true),
        (ModelKind::CauchyBorn, ChainKind::Circular, Parity::Odd) => (Accuracy::OrderEps, true),
        (ModelKind::Atomistic, _, Parity::Even) => (Accuracy::OrderEps2, both),
        (ModelKind::Atomistic, _, Parity::Odd) => (Accuracy::OrderEps, both),
        (ModelKind::Qnl { .. }, _, _) => (Accuracy::OrderEps, both),
    };
    if parity == Parity::Odd {
        flags.push("odd-N".into());
    }

    // One-sided bounds that hold for every N (pair-only for circles).
    let lower_bound = match model.kind {
        ModelKind::Qnl { .. } if both => {
            let g4 = g1.min(p.d1(f) / f);
            match kind {
                ChainKind::Linear => Some(g4),
                ChainKind::Circular if model.alpha == 0.0 => {
                    Some(bound_constants(p, f, n)?.gamma_eps)
                }
                ChainKind::Circular => None,
            }
        }
        _ => None,
    };

    Ok(AnalyticStability {
        value,
        branch,
        tension: g1,
        buckling: Some(buck),
        accuracy,
        lower_bound,
        hypotheses_met: met,
        flags,
    })
}

/// Smallest generalized eigenvalue of `(δ²E, ‖·'‖²)` on the mean-zero
/// (optionally line-constrained) subspace.
pub fn stability_numeric(model: &ModelSpec, geom: &ChainGeometry, constrained: bool) -> Result<f64> {
    let h = second_variation(model, geom, constrained)?;
    let g = Gram::new(MeanZeroBasis::new(geom.n, constrained))?;
    eig_smallest_value(&h, &g.matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub model: String,
    pub kind: ChainKind,
    pub n: usize,
    pub f: f64,
    pub constrained: bool,
    pub alpha: f64,
    pub numeric_inf: f64,
    pub analytic: AnalyticStability,
    pub gap: f64,
    pub parity: Parity,
}

impl StabilityReport {
    /// For exact closed forms with hypotheses met: does the numeric value agree?
    pub fn equality_holds(&self, tol: f64) -> Option<bool> {
        (self.analytic.accuracy == Accuracy::Exact && self.analytic.hypotheses_met)
            .then(|| self.gap.abs() <= tol * self.analytic.value.abs().max(1.0))
    }

    /// Does the numeric value respect the one-sided bound?
    pub fn lower_bound_holds(&self, tol: f64) -> Option<bool> {
        self.analytic.lower_bound.map(|lb| self.numeric_inf >= lb - tol)
    }
}

pub fn stability_report(model: &ModelSpec, geom: &ChainGeometry, constrained: bool) -> Result<StabilityReport> {
    let numeric_inf = stability_numeric(model, geom, constrained)?;
    let analytic = stability_analytic(model, geom.kind, geom.n, geom.f, constrained)?;
    Ok(StabilityReport {
        model: model.name(),
        kind: geom.kind,
        n: geom.n,
        f: geom.f,
        constrained,
        alpha: model.alpha,
        numeric_inf,
        gap: numeric_inf - analytic.value,
        analytic,
        parity: Parity::of(geom.n),
    })
}

/// Default bracket for each branch, suited to potentials with their minimum at 1.
pub fn default_bracket(branch: Branch) -> (f64, f64) {
    match branch {
        Branch::Buckling => (0.5, 1.0),
        Branch::Tension => (1.0, 1.5),
    }
}

/// Strain at which a branch expression changes sign.
pub fn critical_strain(
    potential: &PairPotential,
    model: ModelKind,
    branch: Branch,
    alpha: f64,
    kind: ChainKind,
    n: usize,
) -> Result<f64> {
    let (a, b) = default_bracket(branch);
    critical_strain_in(potential, model, branch, alpha, kind, n, a, b)
}

#[allow(clippy::too_many_arguments)]
pub fn critical_strain_in(
    potential: &PairPotential,
    model: ModelKind,
    branch: Branch,
    alpha: f64,
    kind: ChainKind,
    n: usize,
    a: f64,
    b: f64,
) -> Result<f64> {
    let beta = beta_of(kind, n);
    match branch {
        Branch::Tension => find_root(|f| gamma1(potential, f), a, b),
        Branch::Buckling => find_root(|f| buckling_value(potential, model, f, alpha, beta), a, b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularEquilibrium {
    pub f: f64,
    pub radius: f64,
    /// Largest `‖g_ℓ‖` of the model gradient at the equilibrium ring.
    pub residual: f64,
}

/// Uniform ring that is a critical point of the model energy.
pub fn circular_equilibrium(potential: &PairPotential, model: ModelKind, n: usize) -> Result<CircularEquilibrium> {
    let eps = 1.0 / n as f64;
    let c = (std::f64::consts::PI * eps).cos();
    let f = match model {
        ModelKind::CauchyBorn => find_root(|f| potential.d1(f) + 2.0 * potential.d1(2.0 * f), 0.5, 1.5)?,
        ModelKind::Atomistic => find_root(|f| potential.d1(f) + 2.0 * c * potential.d1(2.0 * c * f), 0.5, 1.5)?,
        ModelKind::Qnl { .. } => {
            return Err(Error::Argument("circular equilibria are defined for a and cb only".into()))
        }
    };
    let geom = ChainGeometry::circular(n, f)?;
    let spec = ModelSpec::new(model, potential.clone());
    let residual = first_variation(&spec, &geom)?.iter().map(|v| norm2v(*v)).fold(0.0, f64::max);
    Ok(CircularEquilibrium { f, radius: geom.radius.expect("circular"), residual })
}

/// Alternating test field: transverse on a line, radial on a ring. For odd N
/// the last atom is left at rest before the mean is removed.
pub fn zigzag_field(geom: &ChainGeometry) -> Vec<Vec2> {
    let n = geom.n;
    let raw: Vec<Vec2> = (1..=n)
        .map(|l| {
            if n % 2 == 1 && l == n {
                return [0.0, 0.0];
            }
            let s = if l % 2 == 0 { 1.0 } else { -1.0 };
            match geom.kind {
                ChainKind::Linear => [0.0, s],
                ChainKind::Circular => scale2(s, geom.positions[l - 1]),
            }
        })
        .collect();
    remove_mean(&raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCheck {
    /// Cosine of the angle between the zig-zag field and the eigenspace of the
    /// smallest eigenvalue, in the strain inner product.
    pub correlation: f64,
    pub lambda_min: f64,
    /// Dimension of the (numerically) degenerate lowest eigenspace.
    pub multiplicity: usize,
    /// The buckling branch is active: below its critical strain and below the tension branch.
    pub branch_active: bool,
    pub flags: Vec<String>,
}

pub fn buckling_mode_check(model: &ModelSpec, geom: &ChainGeometry) -> Result<ModeCheck> {
    if geom.n % 2 == 1 {
        return Err(Error::Argument("buckling mode check needs even N".into()));
    }
    let basis = MeanZeroBasis::new(geom.n, false);
    let h = second_variation(model, geom, false)?;
    let gram = Gram::new(basis)?;
    let eig = eig_pencil(&h, &gram.matrix, true)?;
    let vals = &eig.values;
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let multiplicity = vals.iter().take_while(|v| **v <= vals[0] + tol).count();
    let z = eig.reduced_vectors.as_ref().expect("vectors requested");

    // w = Lᵀ ĉ turns the G inner product into the Euclidean one.
    let c_hat = basis.from_field(&zigzag_field(geom));
    let l = eig.cholesky.l();
    let m = c_hat.len();
    let w: Vec<f64> = (0..m).map(|i| (i..m).map(|k| l[(k, i)] * c_hat[k]).sum()).collect();
    let wn = dot(&w, &w).sqrt();
    let proj: f64 = (0..multiplicity).map(|k| dot(&z.column(k), &w).powi(2)).sum();
    let correlation = (proj.sqrt() / wn).min(1.0);

    let analytic = stability_analytic(model, geom.kind, geom.n, geom.f, false)?;
    let buck = analytic.buckling.expect("planar");
    let branch_active = buck < analytic.tension && buck < 0.0;
    let mut flags = analytic.flags.clone();
    if !branch_active {
        flags.push("buckling-branch-inactive".into());
    }
    Ok(ModeCheck { correlation, lambda_min: vals[0], multiplicity, branch_active, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{backward_diff, l2eps_norm};
    use crate::models::second_variation_form;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LJ: PairPotential = PairPotential::LennardJones;

    #[test]
    fn constrained_cb_is_exact() {
        let g = ChainGeometry::linear(16, 1.0).unwrap();
        let r = stability_report(&ModelSpec::cauchy_born(LJ), &g, true).unwrap();
        assert!((r.numeric_inf - (72.0 + 4.0 * LJ.d2(2.0))).abs() < 1e-10);
        assert!(r.gap.abs() < 1e-10);
    }

    #[test]
    fn constrained_atomistic_uses_squared_mu() {
        for f in [0.9, 1.0, 1.1] {
            let g = ChainGeometry::linear(24, f).unwrap();
            let r = stability_report(&ModelSpec::atomistic(LJ), &g, true).unwrap();
            assert!(r.gap.abs() < 1e-10, "F = {f}: gap {}", r.gap);
        }
    }

    #[test]
    fn planar_cb_even_is_exact() {
        let g = ChainGeometry::linear(20, 0.95).unwrap();
        let r = stability_report(&ModelSpec::cauchy_born(LJ), &g, false).unwrap();
        let expect = gamma1(&LJ, 0.95).min((LJ.d1(0.95) + 2.0 * LJ.d1(1.9)) / 0.95);
        assert!((r.numeric_inf - expect).abs() < 1e-10);
        assert_eq!(r.analytic.branch, Branch::Buckling);
    }

    #[test]
    fn analytic_examples() {
        let a = stability_analytic(&ModelSpec::atomistic(LJ), ChainKind::Linear, 32, 1.0, false).unwrap();
        assert_eq!(a.value, 0.0);
        let m = ModelSpec::atomistic(LJ);
        for kind in [ChainKind::Linear, ChainKind::Circular] {
            let a0 = stability_analytic(&m, kind, 32, 0.95, false).unwrap();
            let a1 = stability_analytic(&m.clone().with_alpha(0.5), kind, 32, 0.95, false).unwrap();
            let beta = beta_of(kind, 32);
            let shift = a1.buckling.unwrap() - a0.buckling.unwrap();
            assert!((shift - 2.0 * 0.5 * beta.cos() / (0.95 * 0.95)).abs() < 1e-14);
        }
        let lin = stability_analytic(&m, ChainKind::Linear, 4096, 1.05, false).unwrap();
        let circ = stability_analytic(&m, ChainKind::Circular, 4096, 1.05, false).unwrap();
        assert!((lin.value - circ.value).abs() < 1e-12);
        assert!(stability_analytic(&m, ChainKind::Circular, 32, 1.0, true).is_err());
        // F = 0.5 puts 2F below the inflection of φ: the flags say so.
        let low = stability_analytic(&m, ChainKind::Linear, 32, 0.5, false).unwrap();
        assert!(!low.hypotheses_met && !low.flags.is_empty());
    }

    #[test]
    fn numeric_inf_is_a_true_infimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = ChainGeometry::circular(16, 1.02).unwrap();
        let m = ModelSpec::qnl(LJ, 8).with_alpha(0.2);
        let lam = stability_numeric(&m, &g, false).unwrap();
        for _ in 0..100 {
            let u: Vec<Vec2> = remove_mean(
                &(0..16).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect::<Vec<_>>(),
            );
            let q = second_variation_form(&m, &g, &u, &u).unwrap() / l2eps_norm(&backward_diff(&u, 1)).powi(2);
            assert!(q >= lam - 1e-9);
        }
    }

    #[test]
    fn qnl_lower_bounds_hold() {
        for kind in [ChainKind::Linear, ChainKind::Circular] {
            for f in [0.95, 1.05, 1.1] {
                for n in [16, 32] {
                    let g = ChainGeometry::new(kind, n, f).unwrap();
                    let r = stability_report(&ModelSpec::qnl(LJ, n / 2), &g, false).unwrap();
                    assert_eq!(r.lower_bound_holds(1e-9), Some(true), "{kind} F={f} N={n}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn bond_angle_never_lowers_infimum_on_lines() {
        let g = ChainGeometry::linear(16, 0.97).unwrap();
        let mut last = f64::NEG_INFINITY;
        for a in [0.0, 0.1, 0.5, 1.0] {
            let v = stability_numeric(&ModelSpec::atomistic(LJ).with_alpha(a), &g, false).unwrap();
            assert!(v >= last - 1e-12);
            last = v;
        }
    }

    #[test]
    fn critical_strain_examples() {
        let k = ChainKind::Linear;
        let fa = critical_strain(&LJ, ModelKind::Atomistic, Branch::Buckling, 0.0, k, 32).unwrap();
        assert_eq!(fa, 1.0);
        let fc = critical_strain(&LJ, ModelKind::CauchyBorn, Branch::Buckling, 0.0, k, 32).unwrap();
        assert!(fc < fa);
        let exact = ((12.0f64 + 24.0 / 8192.0) / (12.0 + 24.0 / 128.0)).powf(1.0 / 6.0);
        assert!((fc - exact).abs() < 1e-13);
        let t: Vec<f64> = [ModelKind::Atomistic, ModelKind::CauchyBorn, ModelKind::Qnl { k: 16 }]
            .iter()
            .map(|m| critical_strain(&LJ, *m, Branch::Tension, 0.0, k, 32).unwrap())
            .collect();
        assert!(t.iter().all(|x| (x - t[0]).abs() < 1e-10));
        assert!(gamma1(&LJ, t[0]).abs() < 1e-8);
        let fb = critical_strain(&LJ, ModelKind::Atomistic, Branch::Buckling, 0.3, k, 32).unwrap();
        assert!(fb < fa);
        let none = critical_strain_in(&LJ, ModelKind::Atomistic, Branch::Tension, 0.0, k, 32, 2.0, 3.0);
        assert!(matches!(none, Err(Error::NoSignChange { .. })));
    }

    #[test]
    fn equilibrium_examples() {
        let a = circular_equilibrium(&LJ, ModelKind::CauchyBorn, 32).unwrap();
        let b = circular_equilibrium(&LJ, ModelKind::CauchyBorn, 128).unwrap();
        assert_eq!(a.f, b.f);
        for n in [16, 64] {
            for m in [ModelKind::Atomistic, ModelKind::CauchyBorn] {
                let e = circular_equilibrium(&LJ, m, n).unwrap();
                assert!(e.residual < 1e-10, "{m:?} N={n}: {}", e.residual);
            }
        }
    }

    #[test]
    fn zigzag_is_the_buckling_mode_on_a_line() {
        let g = ChainGeometry::linear(32, 0.9).unwrap();
        let c = buckling_mode_check(&ModelSpec::atomistic(LJ), &g).unwrap();
        assert!(c.branch_active);
        assert!(c.correlation > 0.99, "{c:?}");
        let g = ChainGeometry::linear(32, 1.1).unwrap();
        let c = buckling_mode_check(&ModelSpec::atomistic(LJ), &g).unwrap();
        assert!(!c.branch_active);
        assert!(c.correlation < 0.1, "{c:?}");
        assert!(buckling_mode_check(&ModelSpec::atomistic(LJ), &ChainGeometry::linear(31, 0.9).unwrap()).is_err());
    }
}
