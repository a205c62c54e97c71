//! Energies, first variations and second variations of the atomistic,
//! Cauchy–Born and quasi-nonlocal models, with an optional bond-angle term.
//!
//! Every model is a sum over bonds of terms depending on `y'_ℓ`, `y'_{ℓ+1}`.
//! Assembly first builds the Hessian in bond space (2×2 blocks coupling
//! `u'_ℓ` and `u'_m`) and then maps it to atom coordinates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::{
    add2, cross2, dot2, flatten, norm2v, outer, scale2, sub2, unflatten, ChainGeometry, Gram,
    InterfacePartition, Mat2, MeanZeroBasis, Vec2,
};
use crate::error::{Error, Result};
use crate::numerics::{DenseSymmetric, Matrix};
use crate::potential::PairPotential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Atomistic,
    #[serde(rename = "cb")]
    CauchyBorn,
    /// Atoms 1..=k use the atomistic energy.
    Qnl { k: usize },
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Atomistic => "a",
            ModelKind::CauchyBorn => "cb",
            ModelKind::Qnl { .. } => "qnl",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Bond-angle stiffness; 0 disables the term.
    pub alpha: f64,
    pub potential: PairPotential,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, potential: PairPotential) -> Self {
        ModelSpec { kind, alpha: 0.0, potential }
    }
    pub fn atomistic(potential: PairPotential) -> Self {
        Self::new(ModelKind::Atomistic, potential)
    }
    pub fn cauchy_born(potential: PairPotential) -> Self {
        Self::new(ModelKind::CauchyBorn, potential)
    }
    pub fn qnl(potential: PairPotential, k: usize) -> Self {
        Self::new(ModelKind::Qnl { k }, potential)
    }
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// The atomistic model with the same potential and bond-angle term.
    pub fn reference(&self) -> ModelSpec {
        ModelSpec { kind: ModelKind::Atomistic, alpha: self.alpha, potential: self.potential.clone() }
    }

    pub fn name(&self) -> String {
        let base = self.kind.label();
        if self.alpha > 0.0 {
            format!("{base}+b")
        } else {
            base.to_string()
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Argument(format!("bond-angle alpha must be >= 0, got {}", self.alpha)));
        }
        if let ModelKind::Qnl { k } = self.kind {
            InterfacePartition::new(n, k)?;
        }
        Ok(())
    }

    /// Weight of `φ(‖y'_ℓ + y'_{ℓ+1}‖)` for bond ℓ (1-based).
    fn w_nnn(&self, l: usize) -> f64 {
        match self.kind {
            ModelKind::Atomistic => 1.0,
            ModelKind::CauchyBorn => 0.0,
            ModelKind::Qnl { k } => {
                if l <= k {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Weight of `φ(2‖y'_ℓ‖)` for bond ℓ (1-based).
    fn w_cb(&self, l: usize) -> f64 {
        match self.kind {
            ModelKind::Atomistic => 0.0,
            ModelKind::CauchyBorn => 1.0,
            ModelKind::Qnl { k } => {
                if l == 1 || l == k + 1 {
                    0.5
                } else if l <= k {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

fn checked_bonds(geom: &ChainGeometry) -> Result<Vec<Vec2>> {
    let b = geom.bonds();
    for (i, d) in b.iter().enumerate() {
        if !(norm2v(*d) > 0.0) {
            return Err(Error::Geometry(format!("coincident neighbors at bond {}", i + 1)));
        }
    }
    Ok(b)
}

fn check_turn(a: Vec2, b: Vec2, l: usize) -> Result<()> {
    if cross2(a, b) == 0.0 && dot2(a, b) < 0.0 {
        return Err(Error::Domain(format!("turning angle of ±π at atom {l}")));
    }
    Ok(())
}

/// `E(y)` for general (possibly deformed) positions.
pub fn energy(model: &ModelSpec, geom: &ChainGeometry) -> Result<f64> {
    model.validate(geom.n)?;
    let b = checked_bonds(geom)?;
    let n = geom.n;
    let phi = &model.potential;
    let mut e = 0.0;
    for i in 0..n {
        let l = i + 1;
        let d = b[i];
        let next = b[(i + 1) % n];
        let r = norm2v(d);
        e += phi.derivs(r)?[0];
        let wc = model.w_cb(l);
        if wc != 0.0 {
            e += wc * phi.derivs(2.0 * r)?[0];
        }
        let wn = model.w_nnn(l);
        if wn != 0.0 {
            e += wn * phi.derivs(norm2v(add2(d, next)))?[0];
        }
        if model.alpha > 0.0 {
            check_turn(d, next, l)?;
            let c = dot2(d, next) / (r * norm2v(next));
            e += model.alpha * (1.0 - c);
        }
    }
    Ok(geom.eps * e)
}

/// Derivative of the energy density with respect to each bond vector, so that
/// `δE[v] = ε Σ s_ℓ · v'_ℓ`.
fn bond_stresses(model: &ModelSpec, geom: &ChainGeometry) -> Result<Vec<Vec2>> {
    model.validate(geom.n)?;
    let b = checked_bonds(geom)?;
    let n = geom.n;
    let phi = &model.potential;
    let mut s = vec![[0.0; 2]; n];
    for i in 0..n {
        let l = i + 1;
        let j = (i + 1) % n;
        let d = b[i];
        let r = norm2v(d);
        let t = scale2(1.0 / r, d);
        let mut coef = phi.derivs(r)?[1];
        let wc = model.w_cb(l);
        if wc != 0.0 {
            coef += wc * 2.0 * phi.derivs(2.0 * r)?[1];
        }
        s[i] = add2(s[i], scale2(coef, t));
        let wn = model.w_nnn(l);
        if wn != 0.0 {
            let x = add2(d, b[j]);
            let rho = norm2v(x);
            let f = scale2(wn * phi.derivs(rho)?[1] / rho, x);
            s[i] = add2(s[i], f);
            s[j] = add2(s[j], f);
        }
        if model.alpha > 0.0 {
            check_turn(d, b[j], l)?;
            let rj = norm2v(b[j]);
            let tj = scale2(1.0 / rj, b[j]);
            let c = dot2(t, tj);
            let a = model.alpha;
            s[i] = sub2(s[i], scale2(a / r, sub2(tj, scale2(c, t))));
            s[j] = sub2(s[j], scale2(a / rj, sub2(t, scale2(c, tj))));
        }
    }
    Ok(s)
}

/// Riesz representer `g` of `δE(y)` with respect to `⟨·,·⟩`.
pub fn first_variation(model: &ModelSpec, geom: &ChainGeometry) -> Result<Vec<Vec2>> {
    let s = bond_stresses(model, geom)?;
    let n = geom.n;
    let inv = 1.0 / geom.eps;
    Ok((0..n).map(|i| scale2(inv, sub2(s[i], s[(i + 1) % n]))).collect())
}

/// `δE(y)[v]` evaluated directly from the bond stresses.
pub fn first_variation_apply(model: &ModelSpec, geom: &ChainGeometry, v: &[Vec2]) -> Result<f64> {
    let s = bond_stresses(model, geom)?;
    let dv = crate::chain::backward_diff(v, 1);
    Ok(geom.eps * s.iter().zip(&dv).map(|(a, b)| dot2(*a, *b)).sum::<f64>())
}

/// Hessian of `x ↦ φ(‖x‖)` scaled by `w`, with an argument scaling: returns
/// the Hessian of `w φ(c‖x‖)`.
fn pair_block(phi: &PairPotential, x: Vec2, c: f64, w: f64) -> Result<Mat2> {
    let r = norm2v(x);
    let d = phi.derivs(c * r)?;
    let t = scale2(1.0 / r, x);
    let p = outer(t, t);
    let along = w * c * c * d[2];
    let across = w * c * d[1] / r;
    Ok([
        [along * p[0][0] + across * (1.0 - p[0][0]), along * p[0][1] - across * p[0][1]],
        [along * p[1][0] - across * p[1][0], along * p[1][1] + across * (1.0 - p[1][1])],
    ])
}

fn add_mat(a: &mut Mat2, b: &Mat2, s: f64) {
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] += s * b[i][j];
        }
    }
}

/// Hessian of `g(x) = c·x/‖x‖`.
fn unit_dot_hessian(x: Vec2, c: Vec2) -> Mat2 {
    let r = norm2v(x);
    let t = scale2(1.0 / r, x);
    let ct = dot2(c, t);
    let r2 = r * r;
    let mut h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { 1.0 } else { 0.0 };
            h[i][j] = -(c[i] * t[j] + t[i] * c[j] + ct * (id - 3.0 * t[i] * t[j])) / r2;
        }
    }
    h
}

/// `∂t/∂x = (I − t⊗t)/‖x‖`.
fn unit_jacobian(x: Vec2) -> Mat2 {
    let r = norm2v(x);
    let t = scale2(1.0 / r, x);
    [[(1.0 - t[0] * t[0]) / r, -t[0] * t[1] / r], [-t[1] * t[0] / r, (1.0 - t[1] * t[1]) / r]]
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Sparse bond-space Hessian: `δ²E[u,v] = ε Σ u'_i · B_{ij} v'_j`.
pub struct BondHessian {
    pub n: usize,
    /// `(i, j, block)` with 0-based bond slots; entries may repeat.
    pub blocks: Vec<(usize, usize, Mat2)>,
}

impl BondHessian {
    pub fn assemble(model: &ModelSpec, geom: &ChainGeometry) -> Result<Self> {
        model.validate(geom.n)?;
        let b = checked_bonds(geom)?;
        let n = geom.n;
        let phi = &model.potential;
        let mut blocks = Vec::with_capacity(5 * n);
        for i in 0..n {
            let l = i + 1;
            let j = (i + 1) % n;
            let d = b[i];
            let mut diag = pair_block(phi, d, 1.0, 1.0)?;
            let wc = model.w_cb(l);
            if wc != 0.0 {
                add_mat(&mut diag, &pair_block(phi, d, 2.0, wc)?, 1.0);
            }
            blocks.push((i, i, diag));
            let wn = model.w_nnn(l);
            if wn != 0.0 {
                let k = pair_block(phi, add2(d, b[j]), 1.0, wn)?;
                blocks.push((i, i, k));
                blocks.push((i, j, k));
                blocks.push((j, i, k));
                blocks.push((j, j, k));
            }
            if model.alpha > 0.0 {
                check_turn(d, b[j], l)?;
                let a = model.alpha;
                let ti = scale2(1.0 / norm2v(d), d);
                let tj = scale2(1.0 / norm2v(b[j]), b[j]);
                // energy term α(1 − t_i·t_j)
                let hii = unit_dot_hessian(d, tj);
                let hjj = unit_dot_hessian(b[j], ti);
                let hij = mat_mul(&unit_jacobian(d), &unit_jacobian(b[j]));
                let neg = |m: Mat2| [[-a * m[0][0], -a * m[0][1]], [-a * m[1][0], -a * m[1][1]]];
                let hji = [[hij[0][0], hij[1][0]], [hij[0][1], hij[1][1]]];
                blocks.push((i, i, neg(hii)));
                blocks.push((j, j, neg(hjj)));
                blocks.push((i, j, neg(hij)));
                blocks.push((j, i, neg(hji)));
            }
        }
        Ok(BondHessian { n, blocks })
    }

    /// `δ²E[u, v]` for displacement fields.
    pub fn apply(&self, u: &[Vec2], v: &[Vec2]) -> f64 {
        let du = crate::chain::backward_diff(u, 1);
        let dv = crate::chain::backward_diff(v, 1);
        let eps = 1.0 / self.n as f64;
        eps * self
            .blocks
            .iter()
            .map(|(i, j, m)| dot2(du[*i], crate::chain::mat2_vec(m, dv[*j])))
            .sum::<f64>()
    }

    /// Full-coordinate Hessian `∂²E/∂y∂y` (2N × 2N, interleaved).
    pub fn to_atoms(&self) -> Matrix {
        let n = self.n;
        let mut h = Matrix::zeros(2 * n, 2 * n);
        // u'_i = (u_i − u_{i−1})/ε, energy carries ε: net factor 1/ε = N.
        let s = n as f64;
        for (i, j, m) in &self.blocks {
            let ai = [(*i, 1.0), ((*i + n - 1) % n, -1.0)];
            let aj = [(*j, 1.0), ((*j + n - 1) % n, -1.0)];
            for (p, sp) in ai {
                for (q, sq) in aj {
                    let f = s * sp * sq;
                    for r in 0..2 {
                        for c in 0..2 {
                            h[(2 * p + r, 2 * q + c)] += f * m[r][c];
                        }
                    }
                }
            }
        }
        h
    }
}

/// Full-coordinate Hessian of the energy at any configuration.
pub fn hessian_full(model: &ModelSpec, geom: &ChainGeometry) -> Result<Matrix> {
    Ok(BondHessian::assemble(model, geom)?.to_atoms())
}

/// `δ²E(y)[u, u]` at any configuration.
pub fn second_variation_form(model: &ModelSpec, geom: &ChainGeometry, u: &[Vec2], v: &[Vec2]) -> Result<f64> {
    Ok(BondHessian::assemble(model, geom)?.apply(u, v))
}

/// Hessian on the mean-zero (optionally line-constrained) subspace, in the
/// Helmert coefficient basis of [`MeanZeroBasis`].
pub fn second_variation(model: &ModelSpec, geom: &ChainGeometry, constrained: bool) -> Result<DenseSymmetric> {
    if !geom.uniform {
        return Err(Error::Precondition("second variation needs a uniform reference chain".into()));
    }
    if constrained && geom.kind != crate::chain::ChainKind::Linear {
        return Err(Error::Precondition("line-constrained displacements need a linear chain".into()));
    }
    MeanZeroBasis::new(geom.n, constrained).compress(&hessian_full(model, geom)?)
}

/// Energy, gradient and compressed Hessian at a uniform chain.
#[derive(Debug, Clone)]
pub struct VariationBundle {
    pub energy: f64,
    pub gradient: Vec<Vec2>,
    pub hessian: DenseSymmetric,
}

pub fn variations(model: &ModelSpec, geom: &ChainGeometry, constrained: bool) -> Result<VariationBundle> {
    Ok(VariationBundle {
        energy: energy(model, geom)?,
        gradient: first_variation(model, geom)?,
        hessian: second_variation(model, geom, constrained)?,
    })
}

/// `δE^model(y_F) − δE^a(y_F)` as a field, with its negative norm.
pub fn ghost_force(model: &ModelSpec, geom: &ChainGeometry) -> Result<(Vec<Vec2>, f64)> {
    if model.kind == ModelKind::Atomistic {
        return Err(Error::Argument("ghost force is measured against the atomistic model".into()));
    }
    if !geom.uniform {
        return Err(Error::Precondition("ghost force needs a uniform reference chain".into()));
    }
    let gm = first_variation(model, geom)?;
    let ga = first_variation(&model.reference(), geom)?;
    let g: Vec<Vec2> = gm.iter().zip(&ga).map(|(a, b)| sub2(*a, *b)).collect();
    let norm = Gram::new(MeanZeroBasis::new(geom.n, false))?.negative_norm(&g);
    Ok((g, norm))
}

/// Writes a dense matrix as row-major CSV without a header.
pub fn write_matrix_csv<W: Write>(out: &mut W, m: &Matrix) -> std::io::Result<()> {
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Flattened gradient, mostly for tests and export.
pub fn gradient_flat(model: &ModelSpec, geom: &ChainGeometry) -> Result<Vec<f64>> {
    Ok(flatten(&first_variation(model, geom)?))
}

/// Convenience for callers holding flat coordinates.
pub fn field_from_flat(x: &[f64]) -> Vec<Vec2> {
    unflatten(x)
}
