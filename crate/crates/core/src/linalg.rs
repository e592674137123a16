//! Small dense matrices and a cyclic Jacobi eigen solver.

use crate::error::{Error, Result};
use crate::interval::Interval;

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Mat::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            m.a[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// (A + Aᵀ)/2
    pub fn sym_part(&self) -> Mat {
        let mut s = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                s[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        s
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    /// Induced ∞-norm (max absolute row sum).
    pub fn row_sum_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Induced 1-norm (max absolute column sum).
    pub fn col_sum_norm(&self) -> f64 {
        self.transpose().row_sum_norm()
    }

    /// D A D⁻¹ for diagonal D = diag(d).
    pub fn similarity_diag(&self, d: &[f64]) -> Mat {
        let mut m = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] *= d[i] / d[j];
            }
        }
        m
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }
}

/// Row-major square interval matrix.
#[derive(Clone, Debug)]
pub struct IMat {
    pub n: usize,
    pub a: Vec<Interval>,
}

impl IMat {
    pub fn zeros(n: usize) -> Self {
        IMat { n, a: vec![Interval::ZERO; n * n] }
    }

    pub fn from_point(m: &Mat) -> Self {
        IMat { n: m.n, a: m.a.iter().map(|&v| Interval::point(v)).collect() }
    }

    pub fn mid(&self) -> Mat {
        Mat { n: self.n, a: self.a.iter().map(|i| i.mid()).collect() }
    }

    /// Entrywise max |J_ij| over the enclosure.
    pub fn mag(&self) -> Mat {
        Mat { n: self.n, a: self.a.iter().map(|i| i.mag()).collect() }
    }

    /// Entrywise distance from `c` to the far end of each interval.
    pub fn radius_about(&self, c: &Mat) -> Mat {
        Mat {
            n: self.n,
            a: self
                .a
                .iter()
                .zip(&c.a)
                .map(|(i, &v)| (v - i.lo).max(i.hi - v).max(0.0))
                .collect(),
        }
    }

    pub fn contains(&self, m: &Mat) -> bool {
        self.a.iter().zip(&m.a).all(|(i, &v)| i.contains(v))
    }

    /// Upper bound on the ∞-norm of every member.
    pub fn row_sum_norm(&self) -> f64 {
        self.mag().row_sum_norm()
    }

    /// Upper bound on the one-sided max-norm log-norm
    /// max_i (J_ii + Σ_{j≠i} |J_ij|) over every member.
    pub fn lognorm_inf(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = self.a[i * n + i].hi;
                for j in 0..n {
                    if j != i {
                        s += self.a[i * n + j].mag();
                    }
                }
                s
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|i| i.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for IMat {
    type Output = Interval;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Interval {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Interval {
        &mut self.a[i * self.n + j]
    }
}

pub const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, run until
/// the off-diagonal Frobenius norm falls below `tol · max(1, ‖A‖_F)`.
/// Returned unsorted.
pub fn jacobi_eigenvalues(m: &Mat, tol: f64) -> Result<Vec<f64>> {
    jacobi_eigen(m, tol).map(|(v, _)| v)
}

/// Eigenvalues and eigenvectors (columns of the returned matrix) of a
/// symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen(m: &Mat, tol: f64) -> Result<(Vec<f64>, Mat)> {
    let n = m.n;
    let mut a = m.clone();
    let mut v = Mat::identity(n);
    let scale = a.a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    if !scale.is_finite() {
        return Err(Error::Numerical("non-finite matrix passed to eigen solver".into()));
    }
    let off = |a: &Mat| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= tol * scale {
            return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi eigen solver did not converge in {JACOBI_MAX_SWEEPS} sweeps (off-norm {:e})",
        off(&a)
    )))
}

/// Largest eigenvalue of a symmetric matrix. The residual off-diagonal norm
/// is added so the value stays an upper bound.
pub fn lambda_max_sym(m: &Mat) -> Result<f64> {
    let ev = jacobi_eigenvalues(m, JACOBI_TOL)?;
    let scale = m.a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    Ok(ev.into_iter().fold(f64::NEG_INFINITY, f64::max) + JACOBI_TOL * scale)
}

/// Upper bound on λ_max of the symmetric part of D J D⁻¹ for every J in the
/// enclosure, restricted to the coordinates `keep`. The bound is
/// λ_max(sym(D J_c D⁻¹)) + ‖sym(D R D⁻¹)‖_∞ where J_c is `center` and R the
/// entrywise radius of the enclosure about it.
pub fn sym_lambda_bound(enc: &IMat, center: &Mat, d: &[f64], keep: &[usize]) -> Result<f64> {
    let m = keep.len();
    let mut c = Mat::zeros(m);
    let mut r = Mat::zeros(m);
    let rad = enc.radius_about(center);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            let s = d[i] / d[j];
            c[(a, b)] = center[(i, j)] * s;
            r[(a, b)] = rad[(i, j)] * s;
        }
    }
    if !c.a.iter().chain(&r.a).all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite Jacobian enclosure".into()));
    }
    let sc = c.sym_part();
    let rs = r.sym_part();
    let lam = lambda_max_sym(&sc)?;
    let pert = rs.row_sum_norm();
    // outward slack for the rounding in the sums above
    let weyl = lam + pert * (1.0 + 1e-12) + 1e-12 * (lam.abs() + pert);
    Ok(match eigenbasis_bound(&sc, &rs)? {
        Some(b) => b.min(weyl),
        None => weyl,
    })
}

/// Bound on λ_max(S + E) over symmetric |E| ≤ R, taken in the eigenbasis Q
/// of S: with B = QᵀSQ and F = |Q|ᵀR|Q|, every Qᵀ(S + E)Q is dominated
/// entrywise (diagonal by value, off-diagonal by magnitude) by the
/// nonnegative-off-diagonal matrix M = diag(B + F) + |offdiag B| + offdiag F,
/// so vᵀAv ≤ |v|ᵀM|v| ≤ λ_max(M)|v|². The orthogonality defect of the
/// numerical Q is accounted for.
fn eigenbasis_bound(s: &Mat, r: &Mat) -> Result<Option<f64>> {
    let n = s.n;
    let (_, q) = jacobi_eigen(s, JACOBI_TOL)?;
    let qa = Mat { n, a: q.a.iter().map(|v| v.abs()).collect() };
    let b = matmul(&matmul(&q.transpose(), s), &q);
    let f = matmul(&matmul(&qa.transpose(), r), &qa);
    let mut m = Mat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = if i == j { b[(i, i)] + f[(i, i)] } else { b[(i, j)].abs() + f[(i, j)] };
        }
    }
    let mut gram = matmul(&q.transpose(), &q);
    for i in 0..n {
        gram[(i, i)] -= 1.0;
    }
    let defect = gram.row_sum_norm() + 4.0 * n as f64 * f64::EPSILON;
    if defect >= 0.5 {
        return Ok(None);
    }
    let lm = lambda_max_sym(&m)?;
    let scale = frob(s) + frob(r);
    let lm = lm + 1e-12 * scale;
    Ok(Some(if lm >= 0.0 { lm / (1.0 - defect) } else { lm / (1.0 + defect) }))
}

fn matmul(x: &Mat, y: &Mat) -> Mat {
    let n = x.n;
    let mut z = Mat::zeros(n);
    for i in 0..n {
        for k in 0..n {
            let a = x[(i, k)];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                z[(i, j)] += a * y[(k, j)];
            }
        }
    }
    z
}

fn frob(m: &Mat) -> f64 {
    m.a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
