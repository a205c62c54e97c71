//! Periodic chain geometry, difference operators, norms and the mean-zero
//! basis used to compress operators.
//!
//! Indexing: slot `i` of every per-atom array holds atom `ℓ = i + 1`, and slot
//! `i` of a bond array holds `y'_ℓ = (y_ℓ − y_{ℓ−1})/ε` for the same `ℓ`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Cholesky, DenseSymmetric, Matrix};

pub type Vec2 = [f64; 2];

#[inline]
pub fn add2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}
#[inline]
pub fn sub2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}
#[inline]
pub fn scale2(s: f64, a: Vec2) -> Vec2 {
    [s * a[0], s * a[1]]
}
#[inline]
pub fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
#[inline]
pub fn cross2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}
#[inline]
pub fn norm2v(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

/// 2×2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

pub fn outer(a: Vec2, b: Vec2) -> Mat2 {
    [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
}

pub fn mat2_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Linear,
    Circular,
}

impl std::fmt::Display for ChainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChainKind::Linear => "linear",
            ChainKind::Circular => "circular",
        })
    }
}

impl std::str::FromStr for ChainKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "line" => Ok(ChainKind::Linear),
            "circular" | "circle" => Ok(ChainKind::Circular),
            _ => Err(Error::Argument(format!("unknown chain kind {s:?}"))),
        }
    }
}

/// Reference configuration `y_F`, or a deformation of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGeometry {
    pub kind: ChainKind,
    pub n: usize,
    pub eps: f64,
    pub f: f64,
    pub positions: Vec<Vec2>,
    /// `y_N − y_0`.
    pub shift: Vec2,
    pub radius: Option<f64>,
    /// False once displaced away from the uniform reference.
    pub uniform: bool,
}

fn check_n_f(n: usize, f: f64) -> Result<()> {
    if n < 4 {
        return Err(Error::Argument(format!("need N >= 4 atoms, got {n}")));
    }
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Argument(format!("strain F must be positive, got {f}")));
    }
    Ok(())
}

impl ChainGeometry {
    pub fn linear(n: usize, f: f64) -> Result<Self> {
        check_n_f(n, f)?;
        let eps = 1.0 / n as f64;
        let positions = (1..=n).map(|l| [l as f64 * f * eps, 0.0]).collect();
        Ok(ChainGeometry {
            kind: ChainKind::Linear,
            n,
            eps,
            f,
            positions,
            shift: [f, 0.0],
            radius: None,
            uniform: true,
        })
    }

    pub fn circular(n: usize, f: f64) -> Result<Self> {
        check_n_f(n, f)?;
        let eps = 1.0 / n as f64;
        let r = f * eps / (2.0 * (PI * eps).sin());
        let positions = (1..=n)
            .map(|l| {
                let t = 2.0 * PI * l as f64 * eps;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        Ok(ChainGeometry {
            kind: ChainKind::Circular,
            n,
            eps,
            f,
            positions,
            shift: [0.0, 0.0],
            radius: Some(r),
            uniform: true,
        })
    }

    pub fn new(kind: ChainKind, n: usize, f: f64) -> Result<Self> {
        match kind {
            ChainKind::Linear => Self::linear(n, f),
            ChainKind::Circular => Self::circular(n, f),
        }
    }

    /// `y_F + u`. The result is flagged non-uniform.
    pub fn displaced(&self, u: &[Vec2]) -> Result<Self> {
        if u.len() != self.n {
            return Err(Error::Argument("displacement length differs from N".into()));
        }
        let mut g = self.clone();
        for (p, d) in g.positions.iter_mut().zip(u) {
            *p = add2(*p, *d);
        }
        g.uniform = false;
        Ok(g)
    }

    /// Position `y_ℓ` for any integer `ℓ`, using the periodic extension.
    pub fn y(&self, l: i64) -> Vec2 {
        let n = self.n as i64;
        let k = (l - 1).div_euclid(n);
        let i = (l - 1).rem_euclid(n) as usize;
        add2(self.positions[i], scale2(k as f64, self.shift))
    }

    /// Bond vectors `y'_ℓ`, ℓ = 1..N.
    pub fn bonds(&self) -> Vec<Vec2> {
        (1..=self.n as i64)
            .map(|l| scale2(1.0 / self.eps, sub2(self.y(l), self.y(l - 1))))
            .collect()
    }

    /// `(F₁, F₂)`.
    pub fn strains(&self) -> (f64, f64) {
        match self.kind {
            ChainKind::Linear => (self.f, self.f),
            ChainKind::Circular => (self.f, self.f * (PI * self.eps).cos()),
        }
    }

    /// Signed turning angles `β_ℓ` between `y'_ℓ` and `y'_{ℓ+1}`.
    pub fn turning_angles(&self) -> Vec<f64> {
        let b = self.bonds();
        (0..self.n)
            .map(|i| {
                let (a, c) = (b[i], b[(i + 1) % self.n]);
                cross2(a, c).atan2(dot2(a, c))
            })
            .collect()
    }

    /// Uniform turning angle `β_ε`: 0 on a line, 2πε on a circle.
    pub fn beta(&self) -> f64 {
        match self.kind {
            ChainKind::Linear => 0.0,
            ChainKind::Circular => 2.0 * PI * self.eps,
        }
    }

    /// `(P_ℓ, P̃_ℓ)` for ℓ = 1..N.
    pub fn projections(&self, l: usize) -> Result<(Mat2, Mat2)> {
        if l == 0 || l > self.n {
            return Err(Error::Argument(format!("bond index {l} outside 1..={}", self.n)));
        }
        let b = self.bonds();
        let d = b[l - 1];
        let s = add2(b[l % self.n], d);
        Ok((projector(d)?, projector(s)?))
    }
}

/// `t ⊗ t` with `t = v/‖v‖`.
pub fn projector(v: Vec2) -> Result<Mat2> {
    let r = norm2v(v);
    if !(r > 0.0) {
        return Err(Error::Geometry("degenerate bond of zero length".into()));
    }
    let t = scale2(1.0 / r, v);
    Ok(outer(t, t))
}

/// A periodic, mean-zero planar displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub values: Vec<Vec2>,
    pub constrained: bool,
}

impl DisplacementField {
    /// Removes the mean, and the transverse component when `constrained`.
    pub fn new(values: Vec<Vec2>, constrained: bool) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::Argument("need at least 4 values".into()));
        }
        let mut v = remove_mean(&values);
        if constrained {
            for p in v.iter_mut() {
                p[1] = 0.0;
            }
        }
        Ok(DisplacementField { values: v, constrained })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn zeros(n: usize, constrained: bool) -> Self {
        DisplacementField { values: vec![[0.0; 2]; n], constrained }
    }
}

pub fn remove_mean(v: &[Vec2]) -> Vec<Vec2> {
    let n = v.len() as f64;
    let m = v.iter().fold([0.0, 0.0], |a, b| add2(a, *b));
    let m = scale2(1.0 / n, m);
    v.iter().map(|p| sub2(*p, m)).collect()
}

/// `n`-th backward difference of a periodic field, scaled by `ε⁻ⁿ` with ε = 1/len.
pub fn backward_diff(v: &[Vec2], order: usize) -> Vec<Vec2> {
    let n = v.len();
    let inv = n as f64;
    let mut cur = v.to_vec();
    for _ in 0..order {
        cur = (0..n).map(|i| scale2(inv, sub2(cur[i], cur[(i + n - 1) % n]))).collect();
    }
    cur
}

/// `⟨v, w⟩ = ε Σ v_ℓ·w_ℓ`.
pub fn inner(v: &[Vec2], w: &[Vec2]) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::Argument(format!("field lengths differ: {} vs {}", v.len(), w.len())));
    }
    let eps = 1.0 / v.len() as f64;
    Ok(eps * v.iter().zip(w).map(|(a, b)| dot2(*a, *b)).sum::<f64>())
}

pub fn l2eps_norm(v: &[Vec2]) -> f64 {
    inner(v, v).expect("same field").sqrt()
}

/// Atomistic/continuum split for the quasi-nonlocal energy: atoms 1..K are
/// nonlocal, K+1..N local. Interfacial bonds are 1 and K+1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfacePartition {
    pub n: usize,
    pub k: usize,
}

impl InterfacePartition {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if !(1 < k && k + 1 < n) {
            return Err(Error::Argument(format!("need 1 < K < N-1, got K = {k}, N = {n}")));
        }
        Ok(InterfacePartition { n, k })
    }

    pub fn half(n: usize) -> Result<Self> {
        Self::new(n, n / 2)
    }

    /// Bond indices (1-based) in the nonlocal seminorm: 2..=K.
    pub fn nonlocal_bonds(&self) -> std::ops::RangeInclusive<usize> {
        2..=self.k
    }
    /// Bond indices in the local seminorm: K+2..=N.
    pub fn local_bonds(&self) -> std::ops::RangeInclusive<usize> {
        self.k + 2..=self.n
    }
    pub fn interface_bonds(&self) -> [usize; 2] {
        [1, self.k + 1]
    }
}

/// `(‖u'‖_𝔄, ‖u'‖_ℭ, ‖u'‖_𝔗)` of a bond field `du` (already differenced).
pub fn seminorms(du: &[Vec2], p: &InterfacePartition) -> Result<(f64, f64, f64)> {
    if du.len() != p.n {
        return Err(Error::Argument("field length differs from partition N".into()));
    }
    let eps = 1.0 / p.n as f64;
    let sq = |l: usize| dot2(du[l - 1], du[l - 1]);
    let a: f64 = p.nonlocal_bonds().map(sq).sum();
    let c: f64 = p.local_bonds().map(sq).sum();
    let t: f64 = p.interface_bonds().iter().map(|&l| sq(l)).sum();
    Ok(((eps * a).sqrt(), (eps * c).sqrt(), (eps * t).sqrt()))
}

/// `μ_ε = 2 sin(πε)/ε`, the smallest ratio ‖u''‖/‖u'‖ over periodic fields.
pub fn mu_epsilon(n: usize) -> f64 {
    let eps = 1.0 / n as f64;
    2.0 * (PI * eps).sin() / eps
}

/// Orthonormal (Helmert) basis of the mean-zero subspace, per component.
///
/// Coefficient layout: `[c_x (N−1), c_y (N−1)]`, or just `c_x` when constrained.
/// Full coordinates are interleaved `[x₁, y₁, x₂, y₂, ...]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanZeroBasis {
    pub n: usize,
    pub constrained: bool,
}

impl MeanZeroBasis {
    pub fn new(n: usize, constrained: bool) -> Self {
        MeanZeroBasis { n, constrained }
    }

    pub fn dim(&self) -> usize {
        if self.constrained {
            self.n - 1
        } else {
            2 * (self.n - 1)
        }
    }

    fn comps(&self) -> usize {
        if self.constrained {
            1
        } else {
            2
        }
    }

    #[inline]
    fn weight(k: usize) -> f64 {
        1.0 / ((k * (k + 1)) as f64).sqrt()
    }

    /// Helmert synthesis for one component: coefficients (N−1) to values (N).
    fn synth(&self, c: &[f64], out: &mut [f64], stride: usize, off: usize) {
        let n = self.n;
        let mut suffix = 0.0;
        for j in (0..n).rev() {
            let own = if j >= 1 { -(j as f64) * Self::weight(j) * c[j - 1] } else { 0.0 };
            out[j * stride + off] = suffix + own;
            if j >= 1 {
                suffix += c[j - 1] * Self::weight(j);
            }
        }
    }

    /// Helmert analysis for one component.
    fn analyze(&self, x: &[f64], stride: usize, off: usize, out: &mut [f64]) {
        let mut prefix = x[off];
        for k in 1..self.n {
            let xk = x[k * stride + off];
            out[k - 1] = Self::weight(k) * (prefix - k as f64 * xk);
            prefix += xk;
        }
    }

    /// Full coordinates `Q c`.
    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.dim());
        let m = self.n - 1;
        let mut out = vec![0.0; 2 * self.n];
        for comp in 0..self.comps() {
            self.synth(&c[comp * m..(comp + 1) * m], &mut out, 2, comp);
        }
        out
    }

    /// Coefficients `Qᵀ x` of full coordinates `x`.
    pub fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), 2 * self.n);
        let m = self.n - 1;
        let mut out = vec![0.0; self.dim()];
        for comp in 0..self.comps() {
            self.analyze(x, 2, comp, &mut out[comp * m..(comp + 1) * m]);
        }
        out
    }

    pub fn to_field(&self, c: &[f64]) -> Vec<Vec2> {
        unflatten(&self.apply(c))
    }

    pub fn from_field(&self, v: &[Vec2]) -> Vec<f64> {
        self.apply_t(&flatten(v))
    }

    /// `Qᵀ A Q` for a full-coordinate symmetric matrix `A` (2N × 2N).
    pub fn compress(&self, a: &Matrix) -> Result<DenseSymmetric> {
        let full = 2 * self.n;
        assert_eq!((a.rows(), a.cols()), (full, full));
        let m = self.dim();
        // rows of Qᵀ A: since A is symmetric, column j of A is row j.
        let mut qta = Matrix::zeros(m, full);
        for j in 0..full {
            let col = self.apply_t(a.row(j));
            for i in 0..m {
                qta[(i, j)] = col[i];
            }
        }
        let mut out = Matrix::zeros(m, m);
        for i in 0..m {
            let r = self.apply_t(qta.row(i));
            out.row_mut(i).copy_from_slice(&r);
        }
        DenseSymmetric::new(out)
    }
}

pub fn flatten(v: &[Vec2]) -> Vec<f64> {
    v.iter().flat_map(|p| [p[0], p[1]]).collect()
}

pub fn unflatten(x: &[f64]) -> Vec<Vec2> {
    x.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

/// Gram operator of `w ↦ w'` in the mean-zero basis, with its factorization.
///
/// `cᵀ G c = ‖(Q c)'‖²_{ℓ²_ε}`.
#[derive(Debug, Clone)]
pub struct Gram {
    pub basis: MeanZeroBasis,
    pub matrix: DenseSymmetric,
    chol: Cholesky,
}

impl Gram {
    pub fn new(basis: MeanZeroBasis) -> Result<Self> {
        let n = basis.n;
        // Periodic difference Laplacian per component, scaled by 1/ε = N.
        let mut lap = Matrix::zeros(2 * n, 2 * n);
        let s = n as f64;
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            for c in 0..2 {
                lap[(2 * i + c, 2 * i + c)] += 2.0 * s;
                lap[(2 * i + c, 2 * prev + c)] -= s;
                lap[(2 * i + c, 2 * next + c)] -= s;
            }
        }
        let matrix = basis.compress(&lap)?;
        let chol = Cholesky::factor(&matrix)?;
        Ok(Gram { basis, matrix, chol })
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// Coefficient covector of the pairing `w ↦ ⟨v, w⟩`: `ε Qᵀ v`.
    pub fn pairing(&self, v: &[Vec2]) -> Vec<f64> {
        let eps = 1.0 / self.basis.n as f64;
        self.basis.from_field(v).into_iter().map(|x| eps * x).collect()
    }

    /// Dual norm of a coefficient covector `b`: `sqrt(bᵀ G⁻¹ b)`.
    pub fn dual_norm(&self, b: &[f64]) -> f64 {
        let y = self.chol.forward(b);
        crate::numerics::dot(&y, &y).sqrt()
    }

    /// `‖v‖_*` for a field `v`.
    pub fn negative_norm(&self, v: &[Vec2]) -> f64 {
        self.dual_norm(&self.pairing(v))
    }
}

/// `‖v‖_* = sup ⟨v,w⟩/‖w'‖` over mean-zero planar `w`.
pub fn negative_norm(v: &[Vec2]) -> Result<f64> {
    Ok(Gram::new(MeanZeroBasis::new(v.len(), false))?.negative_norm(v))
}

/// Writes a field as CSV with columns `index,x,y` (1-based index).
pub fn write_field_csv<W: Write>(out: &mut W, v: &[Vec2]) -> std::io::Result<()> {
    writeln!(out, "index,x,y")?;
    for (i, p) in v.iter().enumerate() {
        writeln!(out, "{},{:?},{:?}", i + 1, p[0], p[1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec2> {
        (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn linear_examples() {
        let g = ChainGeometry::linear(4, 1.0).unwrap();
        for (i, p) in g.positions.iter().enumerate() {
            assert!(close(p[0], (i + 1) as f64 / 4.0, 1e-15) && p[1] == 0.0);
        }
        let g = ChainGeometry::linear(8, 0.9).unwrap();
        for b in g.bonds() {
            assert!(close(norm2v(b), 0.9, 1e-14));
        }
        assert!(matches!(ChainGeometry::linear(3, 1.0), Err(Error::Argument(_))));
        assert!(ChainGeometry::circular(8, 0.0).is_err());
    }

    #[test]
    fn circular_examples() {
        let g = ChainGeometry::circular(4, 1.0).unwrap();
        assert!(close(g.radius.unwrap(), 2f64.sqrt() / 8.0, 1e-15));
        let nn = norm2v(sub2(g.y(2), g.y(0)));
        assert!(close(nn, 2f64.sqrt() / 4.0, 1e-15));
        for n in [4, 7, 32] {
            let g = ChainGeometry::circular(n, 1.1).unwrap();
            for b in g.turning_angles() {
                assert!(close(b, 2.0 * PI / n as f64, 1e-12));
            }
            for b in g.bonds() {
                assert!(close(norm2v(b), 1.1, 1e-12));
            }
        }
        let g = ChainGeometry::linear(9, 1.0).unwrap();
        assert!(g.turning_angles().iter().all(|b| b.abs() < 1e-15));
    }

    #[test]
    fn differences_of_reference_chains() {
        let g = ChainGeometry::linear(16, 1.3).unwrap();
        let d1 = g.bonds();
        for d in backward_diff(&d1, 1).iter().chain(&backward_diff(&d1, 2)) {
            assert!(norm2v(*d) < 1e-10);
        }
        let c = ChainGeometry::circular(16, 1.3).unwrap();
        let d2 = backward_diff(&c.bonds(), 1);
        let expect = 2.0 * 1.3 * 16.0 * (PI / 16.0).sin();
        for d in d2 {
            assert!(close(norm2v(d), expect, 1e-10));
        }
        let constant = vec![[0.3, -2.0]; 10];
        assert!(backward_diff(&constant, 1).iter().all(|d| d == &[0.0, 0.0]));
    }

    #[test]
    fn strains_examples() {
        assert_eq!(ChainGeometry::linear(10, 1.0).unwrap().strains(), (1.0, 1.0));
        let (f1, f2) = ChainGeometry::circular(4, 1.0).unwrap().strains();
        assert_eq!(f1, 1.0);
        assert!(close(f2, 0.7071068, 1e-7));
        let (_, f2) = ChainGeometry::circular(4096, 1.0).unwrap().strains();
        assert!(close(f2, 1.0, 1e-6));
        // half the next-nearest distance over ε
        let g = ChainGeometry::circular(12, 0.8).unwrap();
        let nn = norm2v(sub2(g.y(3), g.y(1))) / (2.0 * g.eps);
        assert!(close(nn, g.strains().1, 1e-13));
    }

    #[test]
    fn projection_examples() {
        let g = ChainGeometry::linear(8, 1.0).unwrap();
        for l in 1..=8 {
            let (p, pt) = g.projections(l).unwrap();
            assert_eq!(p, [[1.0, 0.0], [0.0, 0.0]]);
            assert_eq!(pt, [[1.0, 0.0], [0.0, 0.0]]);
        }
        assert!(g.projections(0).is_err());
        let n = 10;
        let c = ChainGeometry::circular(n, 1.0).unwrap();
        let eps = 1.0 / n as f64;
        let w = [0.3, -1.7];
        for l in 1..=n {
            let (p, pt) = c.projections(l).unwrap();
            let prev = if l == 1 { n } else { l - 1 };
            let (_, ptm) = c.projections(prev).unwrap();
            let sum = [
                [pt[0][0] + ptm[0][0] - 2.0 * p[0][0], pt[0][1] + ptm[0][1] - 2.0 * p[0][1]],
                [pt[1][0] + ptm[1][0] - 2.0 * p[1][0], pt[1][1] + ptm[1][1] - 2.0 * p[1][1]],
            ];
            let lhs = norm2v(mat2_vec(&sum, w));
            assert!(close(lhs, 2.0 * norm2v(w) * (PI * eps).sin().powi(2), 1e-13));
            let diff = [
                [pt[0][0] - ptm[0][0], pt[0][1] - ptm[0][1]],
                [pt[1][0] - ptm[1][0], pt[1][1] - ptm[1][1]],
            ];
            let lhs = norm2v(mat2_vec(&diff, w));
            assert!(close(lhs, norm2v(w) * (2.0 * PI * eps).sin(), 1e-13));
        }
        assert!(matches!(projector([0.0, 0.0]), Err(Error::Geometry(_))));
    }

    #[test]
    fn norm_examples() {
        for n in [4, 9, 100] {
            let v: Vec<Vec2> = (0..n).map(|i| [(i as f64).cos(), (i as f64).sin()]).collect();
            assert!(close(l2eps_norm(&v), 1.0, 1e-14));
        }
        let v = vec![[1.0, 0.0]; 6];
        let w = vec![[0.0, 5.0]; 6];
        assert_eq!(inner(&v, &w).unwrap(), 0.0);
        assert!(inner(&v, &w[..5]).is_err());
    }

    #[test]
    fn seminorms_partition_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, k) in [(8, 4), (33, 10), (64, 32)] {
            let du = random_field(&mut rng, n);
            let p = InterfacePartition::new(n, k).unwrap();
            let (a, c, t) = seminorms(&du, &p).unwrap();
            let total = l2eps_norm(&du).powi(2);
            assert!(close(a * a + c * c + t * t, total, 1e-14));
        }
        assert!(InterfacePartition::new(8, 1).is_err());
        assert!(InterfacePartition::new(8, 7).is_err());
    }

    #[test]
    fn mu_epsilon_examples() {
        assert!(close(mu_epsilon(4), 4.0 * 2f64.sqrt(), 1e-13));
        let n = 2000;
        let eps = 1.0 / n as f64;
        assert!((mu_epsilon(n) - 2.0 * PI).abs() < 5.0 * eps * eps * PI.powi(3));
    }

    #[test]
    fn mu_epsilon_is_smallest_ratio() {
        // Constrained pencil (D²ᵀD², DᵀD) through the mean-zero basis.
        use crate::numerics::eig_smallest_value;
        for n in [8, 13, 40] {
            let basis = MeanZeroBasis::new(n, true);
            let m = basis.dim();
            let mut h = Matrix::zeros(m, m);
            let mut g = Matrix::zeros(m, m);
            for i in 0..m {
                let mut c = vec![0.0; m];
                c[i] = 1.0;
                let ui = basis.to_field(&c);
                for j in 0..m {
                    let mut c = vec![0.0; m];
                    c[j] = 1.0;
                    let uj = basis.to_field(&c);
                    h[(i, j)] = inner(&backward_diff(&ui, 2), &backward_diff(&uj, 2)).unwrap();
                    g[(i, j)] = inner(&backward_diff(&ui, 1), &backward_diff(&uj, 1)).unwrap();
                }
            }
            let lam = eig_smallest_value(
                &DenseSymmetric::new(h).unwrap(),
                &DenseSymmetric::new(g).unwrap(),
            )
            .unwrap();
            assert!(close(lam.sqrt(), mu_epsilon(n), 1e-10 * mu_epsilon(n)), "N = {n}");
        }
    }

    #[test]
    fn basis_is_orthonormal_and_mean_zero() {
        for constrained in [false, true] {
            let b = MeanZeroBasis::new(7, constrained);
            for i in 0..b.dim() {
                let mut c = vec![0.0; b.dim()];
                c[i] = 1.0;
                let x = b.apply(&c);
                let sx: f64 = x.iter().step_by(2).sum();
                let sy: f64 = x.iter().skip(1).step_by(2).sum();
                assert!(sx.abs() < 1e-14 && sy.abs() < 1e-14);
                let back = b.apply_t(&x);
                for (j, v) in back.iter().enumerate() {
                    assert!(close(*v, if i == j { 1.0 } else { 0.0 }, 1e-14));
                }
            }
        }
    }

    #[test]
    fn gram_reproduces_strain_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = MeanZeroBasis::new(12, false);
        let gram = Gram::new(b).unwrap();
        let c: Vec<f64> = (0..b.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = b.to_field(&c);
        let du = backward_diff(&u, 1);
        assert!(close(gram.matrix.quad(&c), l2eps_norm(&du).powi(2), 1e-12));
    }

    /// Independent route: ‖v‖_* is the ℓ²_ε norm of the mean-free running sum of v.
    fn negative_norm_by_summation(v: &[Vec2]) -> f64 {
        let n = v.len();
        let eps = 1.0 / n as f64;
        let v0 = remove_mean(v);
        let mut acc = [0.0, 0.0];
        let sums: Vec<Vec2> = v0
            .iter()
            .map(|p| {
                acc = add2(acc, scale2(eps, *p));
                acc
            })
            .collect();
        l2eps_norm(&remove_mean(&sums))
    }

    #[test]
    fn negative_norm_examples() {
        let c = vec![[1.5, -0.5]; 16];
        assert!(negative_norm(&c).unwrap() < 1e-14);

        // v = G w₀ in field form: ⟨v, w⟩ = ⟨w₀', w'⟩, so ‖v‖_* = ‖w₀'‖.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20;
        let b = MeanZeroBasis::new(n, false);
        let gram = Gram::new(b).unwrap();
        let c0: Vec<f64> = (0..b.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gw = gram.matrix.mul_vec(&c0);
        // field whose pairing covector is G c0: v = Q (G c0) / ε
        let v: Vec<Vec2> = b.to_field(&gw).iter().map(|p| scale2(n as f64, *p)).collect();
        let w0 = b.to_field(&c0);
        let expect = l2eps_norm(&backward_diff(&w0, 1));
        assert!(close(negative_norm(&v).unwrap(), expect, 1e-12 * expect));

        let v = random_field(&mut rng, n);
        let nv = negative_norm(&v).unwrap();
        for _ in 0..100 {
            let w = remove_mean(&random_field(&mut rng, n));
            let ratio = inner(&v, &w).unwrap() / l2eps_norm(&backward_diff(&w, 1));
            assert!(ratio <= nv + 1e-10);
        }
    }

    #[test]
    fn negative_norm_bounded_by_l2_over_smallest_singular_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [6, 17, 50] {
            let v = remove_mean(&random_field(&mut rng, n));
            let smin = mu_epsilon(n);
            assert!(negative_norm(&v).unwrap() <= l2eps_norm(&v) / smin + 1e-12);
        }
    }

    #[test]
    fn field_csv_layout() {
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &[[1.0, 2.0], [0.5, -0.25]]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "index,x,y\n1,1.0,2.0\n2,0.5,-0.25\n");
    }

    proptest! {
        #[test]
        fn negative_norm_matches_running_sum(seed in 0u64..500, n in 4usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_field(&mut rng, n);
            let a = negative_norm(&v).unwrap();
            let b = negative_norm_by_summation(&v);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
        }

        #[test]
        fn summation_by_parts(seed in 0u64..500, n in 4usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_field(&mut rng, n);
            let w = random_field(&mut rng, n);
            // ⟨v', w⟩ = −⟨v, w'_{·+1}⟩ with the forward shift absorbing the backward stencil.
            let dv = backward_diff(&v, 1);
            let dw = backward_diff(&w, 1);
            let dw_next: Vec<Vec2> = (0..n).map(|i| dw[(i + 1) % n]).collect();
            let lhs = inner(&dv, &w).unwrap();
            let rhs = -inner(&v, &dw_next).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()) * n as f64);
        }

        #[test]
        fn diff_commutes_with_shift(seed in 0u64..500, n in 4usize..30, s in 0usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_field(&mut rng, n);
            let shift = |f: &[Vec2]| -> Vec<Vec2> { (0..n).map(|i| f[(i + s) % n]).collect() };
            let a = backward_diff(&shift(&v), 2);
            let b = shift(&backward_diff(&v, 2));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn projections_idempotent(n in 4usize..50, f in 0.5f64..1.5) {
            let g = ChainGeometry::circular(n, f).unwrap();
            for l in 1..=n {
                let (p, pt) = g.projections(l).unwrap();
                for m in [p, pt] {
                    prop_assert!((m[0][1] - m[1][0]).abs() < 1e-15);
                    for i in 0..2 { for j in 0..2 {
                        let sq = m[i][0] * m[0][j] + m[i][1] * m[1][j];
                        prop_assert!((sq - m[i][j]).abs() < 1e-14);
                    }}
                }
            }
        }
    }
}
