//! Exterior powers: compound matrices indexed by lexicographic k-subsets.

use super::decomp::det;
use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(x) => x / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All k-subsets of `0..d` in lexicographic order.
pub fn k_subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > d {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == d - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

/// `k`-th compound of a square matrix `a`: entry `(I, J)` is the minor with rows `I`, columns `J`.
pub fn compound<T: Real>(a: &Matrix<T>, k: usize) -> Result<Matrix<T>> {
    CompoundMap::new(a.rows(), k)?.apply(a)
}

/// Precomputed index map for repeated compound evaluation at fixed `(d, k)`.
#[derive(Clone, Debug)]
pub struct CompoundMap {
    d: usize,
    k: usize,
    subsets: Vec<Vec<usize>>,
}

impl CompoundMap {
    pub fn new(d: usize, k: usize) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::DegreeOutOfRange { k, d });
        }
        Ok(Self { d, k, subsets: k_subsets(d, k) })
    }

    pub fn dim(&self) -> usize {
        self.subsets.len()
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn apply<T: Real>(&self, a: &Matrix<T>) -> Result<Matrix<T>> {
        if a.rows() != self.d || a.cols() != self.d {
            return Err(Error::Dimension(format!(
                "compound map for d={} applied to {}x{}",
                self.d,
                a.rows(),
                a.cols()
            )));
        }
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        self.apply_into(a, &mut out);
        Ok(out)
    }

    pub fn apply_into<T: Real>(&self, a: &Matrix<T>, out: &mut Matrix<T>) {
        if self.k == 1 {
            out.as_mut_slice().copy_from_slice(a.as_slice());
            return;
        }
        let mut minor = Matrix::zeros(self.k, self.k);
        for (r, rows) in self.subsets.iter().enumerate() {
            for (c, cols) in self.subsets.iter().enumerate() {
                out[(r, c)] = match self.k {
                    2 => {
                        let (i0, i1, j0, j1) = (rows[0], rows[1], cols[0], cols[1]);
                        a[(i0, j0)] * a[(i1, j1)] - a[(i0, j1)] * a[(i1, j0)]
                    }
                    _ => {
                        for (x, &i) in rows.iter().enumerate() {
                            for (y, &j) in cols.iter().enumerate() {
                                minor[(x, y)] = a[(i, j)];
                            }
                        }
                        det(&minor)
                    }
                };
            }
        }
    }
}

/// Coordinates of `u ^ v` in the basis `e_i ^ e_j`, `i < j` lexicographic.
pub fn wedge2<T: Real>(u: &[T], v: &[T]) -> Vec<T> {
    let d = u.len();
    let mut out = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            out.push(u[i] * v[j] - u[j] * v[i]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::decomp::{op_norm, svd};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(
            k_subsets(4, 2),
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(k_subsets(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(binomial(12, 6), 924);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn degree_one_and_top_degree() {
        let a = random(3, 1);
        assert_eq!(compound(&a, 1).unwrap(), a);
        let top = compound(&a, 3).unwrap();
        assert_eq!((top.rows(), top.cols()), (1, 1));
        assert!((top[(0, 0)] - det(&a)).abs() < 1e-14);
        assert!(matches!(compound(&a, 4), Err(Error::DegreeOutOfRange { k: 4, d: 3 })));
        assert!(compound(&a, 0).is_err());
    }

    #[test]
    fn second_compound_norm_is_top_two_singular_values() {
        let a = random(3, 42);
        let s = svd(&a).unwrap().s;
        let n2 = op_norm(&compound(&a, 2).unwrap()).unwrap();
        assert!((n2 - s[0] * s[1]).abs() < 1e-12);
    }

    #[test]
    fn wedge_norm_is_area() {
        let w = wedge2(&[1.0, 0.0, 0.0], &[1.0, 2.0, 0.0]);
        assert_eq!(w, vec![2.0, 0.0, 0.0]);
    }
}
