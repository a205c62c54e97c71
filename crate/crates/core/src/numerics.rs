//! Dense linear algebra and scalar utilities: Cholesky, LU, cyclic Jacobi,
//! the generalized symmetric eigenproblem, bisection and log-log slopes.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.concat() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, s) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.add(&other.scaled(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Square symmetric matrix. Construction rejects visibly asymmetric input
/// and averages away the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric(Matrix);

impl DenseSymmetric {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::Argument(format!("{}x{} matrix is not square", m.rows, m.cols)));
        }
        let n = m.rows;
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        let mut m = m;
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::Argument(format!(
                        "asymmetric entry ({i},{j}): {a:e} vs {b:e}"
                    )));
                }
                let s = 0.5 * (a + b);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        Ok(DenseSymmetric(m))
    }

    pub fn identity(n: usize) -> Self {
        DenseSymmetric(Matrix::identity(n))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        DenseSymmetric(Matrix::from_diag(d))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.0.mul_vec(x)
    }

    pub fn quad(&self, x: &[f64]) -> f64 {
        self.0.bilinear(x, x)
    }

    pub fn shifted(&self, c: f64, g: &DenseSymmetric) -> DenseSymmetric {
        DenseSymmetric(self.0.add(&g.0.scaled(c)))
    }
}

/// Lower-triangular factor of an SPD matrix, `G = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(g: &DenseSymmetric) -> Result<Self> {
        let n = g.dim();
        let a = g.matrix();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let lj = l.row(j)[..j].to_vec();
            let d = a[(j, j)] - dot(&lj, &lj);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let s = a[(i, j)] - dot(&l.row(i)[..j], &lj);
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[(i, i)];
            let xi = x[i];
            for k in 0..i {
                x[k] -= self.l[(i, k)] * xi;
            }
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// Row-wise forward substitution on a matrix right-hand side: `L⁻¹ B`.
    fn forward_matrix(&self, b: &Matrix) -> Matrix {
        let n = self.l.rows;
        let mut x = b.clone();
        for i in 0..n {
            let (done, rest) = x.data.split_at_mut(i * b.cols);
            let row = &mut rest[..b.cols];
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                let src = &done[k * b.cols..(k + 1) * b.cols];
                for (r, s) in row.iter_mut().zip(src) {
                    *r -= lik * s;
                }
            }
            let d = self.l[(i, i)];
            for r in row.iter_mut() {
                *r /= d;
            }
        }
        x
    }
}

/// `x` with `G x = b` for SPD `G`.
pub fn solve_spd(g: &DenseSymmetric, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != g.dim() {
        return Err(Error::Argument("right-hand side has wrong length".into()));
    }
    Ok(Cholesky::factor(g)?.solve(b))
}

/// LU factorization with partial pivoting, for nonsingular indefinite systems.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows;
        if n != a.cols {
            return Err(Error::Argument("LU needs a square matrix".into()));
        }
        let scale = a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(pv > 1e-14 * scale) {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let m = lu[(i, k)] / piv;
                lu[(i, k)] = m;
                if m == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= m * v;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }
}

/// Solves a symmetric system, by Cholesky when it is positive definite and by
/// pivoted LU otherwise. The flag reports which path was taken.
pub fn solve_symmetric(a: &DenseSymmetric, b: &[f64]) -> Result<(Vec<f64>, bool)> {
    match Cholesky::factor(a) {
        Ok(c) => Ok((c.solve(b), true)),
        Err(Error::NotPositiveDefinite { .. }) => Ok((Lu::factor(a.matrix())?.solve(b), false)),
        Err(e) => Err(e),
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` belongs to `values[k]`, when requested.
    pub vectors: Option<Matrix>,
}

/// Cyclic Jacobi rotations with threshold skipping in the early sweeps.
pub fn eig_symmetric(a: &DenseSymmetric, want_vectors: bool) -> SymmetricEigen {
    let n = a.dim();
    let mut m = a.matrix().data.clone();
    let mut v = if want_vectors { Some(Matrix::identity(n).data) } else { None };
    let mut d: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 0..100 {
        let mut sm = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                sm += m[p * n + q].abs();
            }
        }
        if sm == 0.0 {
            break;
        }
        let tresh = if sweep < 3 { 0.2 * sm / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    m[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= tresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                m[p * n + q] = 0.0;
                let rot = |m: &mut [f64], i: usize, j: usize| {
                    let (g, h) = (m[i], m[j]);
                    m[i] = g - s * (h + g * tau);
                    m[j] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rot(&mut m, j * n + p, j * n + q);
                }
                for j in p + 1..q {
                    rot(&mut m, p * n + j, j * n + q);
                }
                for j in q + 1..n {
                    rot(&mut m, p * n + j, q * n + j);
                }
                if let Some(v) = v.as_mut() {
                    for j in 0..n {
                        rot(v, j * n + p, j * n + q);
                    }
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = v.map(|v| {
        let mut out = Matrix::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            for i in 0..n {
                out[(i, k)] = v[i * n + src];
            }
        }
        out
    });
    SymmetricEigen { values, vectors }
}

/// Full solution of the pencil `(H, G)`.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    /// Ascending generalized eigenvalues.
    pub values: Vec<f64>,
    /// `G`-orthonormal eigenvectors as columns, when requested.
    pub vectors: Option<Matrix>,
    /// Eigenvectors of the reduced problem `L⁻¹ H L⁻ᵀ` (Euclidean-orthonormal).
    pub reduced_vectors: Option<Matrix>,
    pub cholesky: Cholesky,
}

/// Generalized symmetric eigenproblem `H x = λ G x` via `G = L Lᵀ` and Jacobi on
/// `L⁻¹ H L⁻ᵀ`.
pub fn eig_pencil(h: &DenseSymmetric, g: &DenseSymmetric, want_vectors: bool) -> Result<PencilEigen> {
    if h.dim() != g.dim() {
        return Err(Error::Argument("pencil matrices differ in size".into()));
    }
    let chol = Cholesky::factor(g)?;
    // C = L⁻¹ H L⁻ᵀ = L⁻¹ (L⁻¹ H)ᵀ since H is symmetric.
    let x = chol.forward_matrix(h.matrix());
    let c = chol.forward_matrix(&x.transpose());
    let c = DenseSymmetric(symmetrize(c));
    let eig = eig_symmetric(&c, want_vectors);
    let vectors = eig.vectors.as_ref().map(|z| {
        let n = z.rows;
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let col = chol.backward(&z.column(k));
            for i in 0..n {
                out[(i, k)] = col[i];
            }
        }
        out
    });
    Ok(PencilEigen { values: eig.values, vectors, reduced_vectors: eig.vectors, cholesky: chol })
}

fn symmetrize(mut c: Matrix) -> Matrix {
    let n = c.rows;
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    c
}

/// Smallest eigenvalue of the pencil `(H, G)` and a `G`-normalized eigenvector.
pub fn eig_smallest(h: &DenseSymmetric, g: &DenseSymmetric) -> Result<(f64, Vec<f64>)> {
    let e = eig_pencil(h, g, true)?;
    let v = e.vectors.expect("vectors requested").column(0);
    Ok((e.values[0], v))
}

/// Smallest eigenvalue only. Skips eigenvector accumulation.
pub fn eig_smallest_value(h: &DenseSymmetric, g: &DenseSymmetric) -> Result<f64> {
    Ok(eig_pencil(h, g, false)?.values[0])
}

/// Root of `f` on `[a, b]` by bisection, run until the bracket cannot shrink
/// further or is narrower than 1e-14.
pub fn find_root(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { a, b });
    }
    while b - a > 1e-14 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Least-squares slope of `ln e` against `ln ε`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::Argument(format!("need at least 3 points, got {}", pairs.len())));
    }
    log_slope(pairs)
}

/// Same as [`fit_rate`] but accepts two points.
pub(crate) fn log_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::Argument("need at least 2 points".into()));
    }
    if pairs.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Argument("rate fit needs positive data".into()));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Argument("rate fit needs distinct step sizes".into()));
    }
    Ok(sxy / sxx)
}
