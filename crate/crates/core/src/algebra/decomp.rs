use num_complex::Complex;

use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(s) V^T`.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    /// Left singular vectors as columns, `rows x cols`.
    pub u: Matrix<T>,
    /// Singular values, descending.
    pub s: Vec<T>,
    /// Right singular vectors (singular directions) as columns, `cols x cols`.
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let us = Matrix::from_fn(self.u.rows(), self.s.len(), |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.transpose())
    }

    /// `sigma_1 / sigma_d`, infinite when the matrix is singular.
    pub fn condition(&self) -> T {
        let last = *self.s.last().expect("non-empty");
        if last == T::zero() {
            T::infinity()
        } else {
            self.s[0] / last
        }
    }
}

/// One-sided Jacobi SVD. Requires `rows >= cols`.
pub fn svd<T: Real>(a: &Matrix<T>) -> Result<Svd<T>> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        let t = svd(&a.transpose())?;
        return Ok(Svd { u: t.v, s: t.s, v: t.u });
    }
    if !a.is_finite() {
        return Err(Error::Dimension("SVD of a non-finite matrix".into()));
    }
    // columns of w are rotated until mutually orthogonal
    let mut w: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    let scale2 = w.iter().map(|c| dot(c, c)).fold(T::zero(), T::max);
    // columns this small relative to the largest are numerically zero
    let floor = (scale2 * eps * eps * eps * eps).max(T::min_positive_value());
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                // sqrt taken separately so tiny columns do not underflow the test
                if gamma == T::zero()
                    || alpha <= floor
                    || beta <= floor
                    || gamma.abs() <= eps * alpha.sqrt() * beta.sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NonConvergence { sweeps: MAX_SWEEPS });
    }
    let mut order: Vec<(T, usize)> = w.iter().enumerate().map(|(j, c)| (norm2(c), j)).collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("finite norms").then(x.1.cmp(&y.1)));

    let s: Vec<T> = order.iter().map(|&(sv, _)| sv).collect();
    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let tiny = s[0] * eps * T::from_usize_lossy(m);
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(n);
    for (col, &(sv, j)) in order.iter().enumerate() {
        vm.set_column(col, &v[j]);
        let uj: Vec<T> = if sv > tiny {
            w[j].iter().map(|&x| x / sv).collect()
        } else {
            complete_orthonormal(&basis, m)
        };
        basis.push(uj.clone());
        u.set_column(col, &uj);
    }
    Ok(Svd { u, s, v: vm })
}

fn rotate_pair<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// A unit vector orthogonal to every vector in `basis` (assumed orthonormal).
fn complete_orthonormal<T: Real>(basis: &[Vec<T>], m: usize) -> Vec<T> {
    let mut best = vec![T::zero(); m];
    let mut best_norm = -T::one();
    for e in 0..m {
        let mut x = vec![T::zero(); m];
        x[e] = T::one();
        for b in basis {
            let c = dot(&x, b);
            for (xi, &bi) in x.iter_mut().zip(b) {
                *xi -= c * bi;
            }
        }
        let nx = norm2(&x);
        if nx > best_norm {
            best_norm = nx;
            best = x;
        }
    }
    best.iter().map(|&x| x / best_norm).collect()
}

pub fn singular_values<T: Real>(a: &Matrix<T>) -> Result<Vec<T>> {
    Ok(svd(a)?.s)
}

/// Largest singular value.
pub fn op_norm<T: Real>(a: &Matrix<T>) -> Result<T> {
    Ok(svd(a)?.s[0])
}

/// Householder QR of a square matrix with `R` having positive diagonal.
///
/// Fails with [`Error::RankDeficient`] when some `|R_ii|` falls below
/// `rank_tol` times the largest column norm of `a`.
pub fn qr<T: Real>(a: &Matrix<T>, rank_tol: T) -> Result<(Matrix<T>, Matrix<T>)> {
    let d = a.rows();
    if !a.is_square() {
        return Err(Error::Dimension(format!("QR expects a square matrix, got {}x{}", d, a.cols())));
    }
    let mut r = a.clone();
    let mut q = Matrix::identity(d);
    qr_in_place(&mut r, &mut q, &mut vec![T::zero(); d], rank_tol)?;
    Ok((q, r))
}

/// In-place QR: `r` enters as `A` and leaves as `R`; `q` receives `Q`.
/// `scratch` must have length `d`.
pub fn qr_in_place<T: Real>(
    r: &mut Matrix<T>,
    q: &mut Matrix<T>,
    scratch: &mut [T],
    rank_tol: T,
) -> Result<()> {
    let d = r.rows();
    let scale = (0..d)
        .map(|j| (0..d).map(|i| r[(i, j)] * r[(i, j)]).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    for x in q.as_mut_slice().iter_mut() {
        *x = T::zero();
    }
    for i in 0..d {
        q[(i, i)] = T::one();
    }
    let two = T::lit(2.0);
    for k in 0..d.saturating_sub(1) {
        let v = &mut scratch[..d - k];
        for i in k..d {
            v[i - k] = r[(i, k)];
        }
        let alpha = norm2(v);
        if alpha == T::zero() {
            continue;
        }
        let sign = if v[0] >= T::zero() { T::one() } else { -T::one() };
        v[0] += sign * alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        // R <- H R
        for j in k..d {
            let mut s = T::zero();
            for i in k..d {
                s += v[i - k] * r[(i, j)];
            }
            let f = two * s / vnorm2;
            for i in k..d {
                r[(i, j)] -= f * v[i - k];
            }
        }
        // Q <- Q H
        for i in 0..d {
            let mut s = T::zero();
            for l in k..d {
                s += q[(i, l)] * v[l - k];
            }
            let f = two * s / vnorm2;
            for l in k..d {
                q[(i, l)] -= f * v[l - k];
            }
        }
    }
    for k in 0..d {
        for i in k + 1..d {
            r[(i, k)] = T::zero();
        }
        if r[(k, k)] < T::zero() {
            for j in k..d {
                r[(k, j)] = -r[(k, j)];
            }
            for i in 0..d {
                q[(i, k)] = -q[(i, k)];
            }
        }
        let diag = r[(k, k)];
        if !(diag > rank_tol * scale) {
            return Err(Error::RankDeficient { index: k, value: diag.to_f64_lossy() });
        }
    }
    Ok(())
}

/// One Benettin step: factor `A * Q_prev = Q R`.
pub fn qr_step<T: Real>(a: &Matrix<T>, q_prev: &Matrix<T>, rank_tol: T) -> Result<(Matrix<T>, Matrix<T>)> {
    qr(&a.matmul(q_prev), rank_tol)
}

/// LU with partial pivoting: (packed factors, row permutation, permutation sign,
/// whether a zero pivot was met).
fn lu<T: Real>(a: &Matrix<T>) -> (Matrix<T>, Vec<usize>, T, bool) {
    let d = a.rows();
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut sign = T::one();
    let mut singular = false;
    for k in 0..d {
        let (p, best) = (k..d)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == T::zero() {
            singular = true;
            continue;
        }
        if p != k {
            for j in 0..d {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = tmp;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let piv = m[(k, k)];
        for i in k + 1..d {
            let f = m[(i, k)] / piv;
            m[(i, k)] = f;
            for j in k + 1..d {
                let mkj = m[(k, j)];
                m[(i, j)] -= f * mkj;
            }
        }
    }
    (m, perm, sign, singular)
}

pub fn det<T: Real>(a: &Matrix<T>) -> T {
    assert!(a.is_square(), "det of a non-square matrix");
    let (m, _, sign, singular) = lu(a);
    if singular {
        return T::zero();
    }
    (0..a.rows()).fold(sign, |acc, i| acc * m[(i, i)])
}

/// `log|det A|`, computed from LU pivots so large products do not overflow.
pub fn log_abs_det<T: Real>(a: &Matrix<T>) -> T {
    let (m, _, _, singular) = lu(a);
    if singular {
        return T::neg_infinity();
    }
    (0..a.rows()).map(|i| m[(i, i)].abs().ln()).sum()
}

/// Scale-aware singularity threshold `1e-12 * ||A||_F^d`.
pub fn singular_tolerance<T: Real>(a: &Matrix<T>) -> T {
    T::lit(1e-12) * a.frobenius().powi(a.rows() as i32)
}

/// Errors with [`Error::SingularFiber`] if `|det A|` is below [`singular_tolerance`].
pub fn check_invertible<T: Real>(a: &Matrix<T>) -> Result<T> {
    let dt = det(a);
    let tol = singular_tolerance(a);
    if !(dt.abs() >= tol) || tol == T::zero() {
        return Err(Error::SingularFiber { det: dt.to_f64_lossy(), tol: tol.to_f64_lossy() });
    }
    Ok(dt)
}

pub fn inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    check_invertible(a)?;
    let d = a.rows();
    let (m, perm, _, _) = lu(a);
    let mut inv = Matrix::zeros(d, d);
    let mut col = vec![T::zero(); d];
    for e in 0..d {
        for (i, c) in col.iter_mut().enumerate() {
            *c = if perm[i] == e { T::one() } else { T::zero() };
        }
        for i in 0..d {
            for k in 0..i {
                let ck = col[k];
                col[i] -= m[(i, k)] * ck;
            }
        }
        for i in (0..d).rev() {
            for k in i + 1..d {
                let ck = col[k];
                col[i] -= m[(i, k)] * ck;
            }
            col[i] /= m[(i, i)];
        }
        inv.set_column(e, &col);
    }
    Ok(inv)
}

/// Characteristic polynomial coefficients `[1, c_1, ..., c_d]` of
/// `det(x I - A) = x^d + c_1 x^{d-1} + ... + c_d` (Faddeev-LeVerrier).
pub fn char_poly<T: Real>(a: &Matrix<T>) -> Vec<T> {
    let d = a.rows();
    let mut coeffs = vec![T::one()];
    let mut mk = Matrix::zeros(d, d);
    let id = Matrix::identity(d);
    for k in 1..=d {
        // M_k = A M_{k-1} + c_{k-1} I, c_k = -tr(A M_k) / k
        let mut next = a.matmul(&mk);
        next.axpy(coeffs[k - 1], &id);
        let am = a.matmul(&next);
        let tr: T = (0..d).map(|i| am[(i, i)]).sum();
        coeffs.push(-tr / T::from_usize_lossy(k));
        mk = next;
    }
    coeffs
}

/// Complex eigenvalues via Durand-Kerner on the characteristic polynomial.
///
/// Adequate for the small dimensions used here; clustered eigenvalues lose
/// accuracy roughly as `eps^(1/multiplicity)`.
pub fn eigenvalues<T: Real>(a: &Matrix<T>) -> Vec<Complex<T>> {
    let d = a.rows();
    if d == 0 {
        return Vec::new();
    }
    let scale = a.max_abs().max(T::min_positive_value());
    let scaled = a.scale(T::one() / scale);
    let c = char_poly(&scaled);
    let eval = |x: Complex<T>| c.iter().fold(Complex::new(T::zero(), T::zero()), |acc, &ci| acc * x + ci);
    let seed = Complex::new(T::lit(0.4), T::lit(0.9));
    let mut roots: Vec<Complex<T>> = (0..d).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut delta = T::zero();
        for i in 0..d {
            let mut den = Complex::new(T::one(), T::zero());
            for j in 0..d {
                if i != j {
                    den = den * (roots[i] - roots[j]);
                }
            }
            if den.norm() == T::zero() {
                continue;
            }
            let step = eval(roots[i]) / den;
            roots[i] = roots[i] - step;
            delta = delta.max(step.norm());
        }
        if delta <= T::epsilon() * T::lit(4.0) {
            break;
        }
    }
    roots.iter().map(|r| *r * scale).collect()
}

/// Orthonormal basis (as columns) of the numerical null space:
/// right singular vectors with `sigma <= rel_tol * sigma_1`.
pub fn null_space<T: Real>(a: &Matrix<T>, rel_tol: T) -> Result<Matrix<T>> {
    let f = svd(a)?;
    let n = a.cols();
    let cutoff = rel_tol * f.s[0].max(T::min_positive_value());
    let idx: Vec<usize> = (0..n).filter(|&j| f.s[j] <= cutoff).collect();
    let mut out = Matrix::zeros(n, idx.len());
    for (c, &j) in idx.iter().enumerate() {
        out.set_column(c, &f.v.column(j));
    }
    Ok(out)
}

/// Orthonormal basis of the column span of `a` (columns of `U` above the rank cutoff).
pub fn orthonormal_basis<T: Real>(a: &Matrix<T>, rel_tol: T) -> Result<Matrix<T>> {
    let f = svd(a)?;
    let cutoff = rel_tol * f.s[0];
    let r = f.s.iter().filter(|&&s| s > cutoff).count();
    Ok(f.u.columns_range(0, r))
}

/// Orthonormal completion of the columns of `q` (assumed orthonormal) to a basis of `R^d`;
/// returns only the new columns.
pub fn orthogonal_complement<T: Real>(q: &Matrix<T>) -> Result<Matrix<T>> {
    let d = q.rows();
    // null space of Q^T
    let qt = q.transpose();
    let mut padded = Matrix::zeros(d, d);
    for i in 0..qt.rows() {
        for j in 0..d {
            padded[(i, j)] = qt[(i, j)];
        }
    }
    let f = svd(&padded)?;
    Ok(f.v.columns_range(q.cols(), d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn svd_of_identity_and_diag() {
        let s = svd(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(s.s, vec![1.0, 1.0, 1.0]);
        let s = svd(&Matrix::from_diag(&[2.0_f64, 3.0])).unwrap();
        assert_eq!(s.s, vec![3.0, 2.0]);
        assert!((s.v[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random_4x4() {
        let a = random(4, 7);
        let f = svd(&a).unwrap();
        assert!(f.reconstruct().sub(&a).max_abs() < 1e-12);
        assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        let utu = f.u.transpose().matmul(&f.u);
        assert!(utu.sub(&Matrix::identity(4)).max_abs() < 1e-12);
    }

    #[test]
    fn svd_rank_deficient_completes_u() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let f = svd(&a).unwrap();
        assert!(f.s[1] < 1e-15);
        let utu = f.u.transpose().matmul(&f.u);
        assert!(utu.sub(&Matrix::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn svd_with_nearly_underflowed_row() {
        let a = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.0, 1e-300]]).unwrap();
        let s = svd(&a).unwrap().s;
        assert!((s[0] - 1.09_f64.sqrt()).abs() < 1e-15);
        assert!(s[1] < 1e-299);
    }

    #[test]
    fn qr_trivial_cases() {
        let id = Matrix::<f64>::identity(3);
        let (q, r) = qr_step(&id, &id, 1e-14).unwrap();
        assert!(q.sub(&id).max_abs() < 1e-15 && r.sub(&id).max_abs() < 1e-15);
        let (c, s) = (0.3_f64.cos(), 0.3_f64.sin());
        let rot = Matrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let (q, r) = qr_step(&rot, &Matrix::identity(2), 1e-14).unwrap();
        assert!(q.sub(&rot).max_abs() < 1e-15);
        assert!(r.sub(&Matrix::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn qr_step_multiplies_back() {
        let a = random(3, 11);
        let (q0, _) = qr(&random(3, 12), 1e-14).unwrap();
        let (q, r) = qr_step(&a, &q0, 1e-14).unwrap();
        assert!(q.matmul(&r).sub(&a.matmul(&q0)).max_abs() <= 1e-12);
        for i in 0..3 {
            assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_detects_rank_loss() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(qr(&a, 1e-12), Err(Error::RankDeficient { index: 1, .. })));
    }

    #[test]
    fn det_and_inverse() {
        let a = random(4, 3);
        let inv = inverse(&a).unwrap();
        assert!(a.matmul(&inv).sub(&Matrix::identity(4)).max_abs() < 1e-12);
        let b = random(4, 4);
        assert!((det(&a.matmul(&b)) - det(&a) * det(&b)).abs() < 1e-12);
        assert!((log_abs_det(&a) - det(&a).abs().ln()).abs() < 1e-12);
        assert!(check_invertible(&Matrix::<f64>::zeros(2, 2)).is_err());
    }

    #[test]
    fn eigenvalues_of_rotation_and_triangle() {
        let (c, s) = (0.3_f64.cos(), 0.3_f64.sin());
        let rot = Matrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let mut ev = eigenvalues(&rot);
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - Complex::new(c, -s)).norm() < 1e-12);
        let t = Matrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![0.0, 0.5, 3.0], vec![0.0, 0.0, -1.0]]).unwrap();
        let mut re: Vec<f64> = eigenvalues(&t).iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in re.iter().zip([-1.0, 0.5, 2.0]) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn null_space_and_complement() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let ns = null_space(&a, 1e-10).unwrap();
        assert_eq!(ns.cols(), 1);
        assert!(norm2(&a.mat_vec(&ns.column(0))) < 1e-12);
        let q = Matrix::from_columns(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let c = orthogonal_complement(&q).unwrap();
        assert_eq!(c.cols(), 2);
        assert!(q.transpose().matmul(&c).max_abs() < 1e-14);
    }

    #[test]
    fn generic_over_f32() {
        let a = Matrix::from_rows(&[vec![3.0_f32, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(svd(&a).unwrap().s, vec![3.0, 2.0]);
        assert!((det(&a) - 6.0).abs() < 1e-6);
    }
}
