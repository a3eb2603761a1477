//! Invariants over randomly generated constant systems.

use proptest::prelude::*;
use qpcocycle::cocycle::{Fiber, GeneratorRep};
use qpcocycle::lyapunov::{det_average, spectrum_qr, top_exponent_mc};
use qpcocycle::reduction::{check_invariant, quotient, restrict, Section};
use qpcocycle::{CocycleSystem, McParams, Matrix, ProbabilityVector, TorusPoint};

fn system(mats: &[Matrix<f64>]) -> CocycleSystem<f64> {
    let gens = mats
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let theta = TorusPoint::new(&[(0.5f64.sqrt() * (i + 1) as f64).fract()]).unwrap();
            GeneratorRep::new(theta, Fiber::constant(m.clone()))
        })
        .collect();
    CocycleSystem::from_generators(gens).unwrap()
}

/// Well-conditioned random matrix: identity plus a bounded perturbation.
fn matrix(d: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-0.6f64..0.6, d * d).prop_map(move |v| {
        Matrix::from_fn(d, d, |i, j| v[i * d + j] + if i == j { 1.2 } else { 0.0 })
    })
}

/// Block upper-triangular matrix leaving the first `k` coordinates invariant.
fn block_triangular(d: usize, k: usize) -> impl Strategy<Value = Matrix<f64>> {
    matrix(d).prop_map(move |m| {
        let mut out = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                if !(i >= k && j < k) {
                    out.as_mut_slice()[i * d + j] = m.as_slice()[i * d + j];
                }
            }
        }
        out
    })
}

/// Orthogonal matrix from Givens rotations in every coordinate plane.
fn rotation(d: usize, angles: &[f64]) -> Matrix<f64> {
    let mut q = Matrix::identity(d);
    let mut a = angles.iter();
    for i in 0..d {
        for j in i + 1..d {
            let t = *a.next().unwrap();
            let g = Matrix::from_fn(d, d, |r, c| match (r, c) {
                _ if r == i && c == i || r == j && c == j => t.cos(),
                _ if r == i && c == j => -t.sin(),
                _ if r == j && c == i => t.sin(),
                _ if r == c => 1.0,
                _ => 0.0,
            });
            q = g.matmul(&q);
        }
    }
    q
}

fn conjugate(q: &Matrix<f64>, a: &Matrix<f64>) -> Matrix<f64> {
    q.matmul(a).matmul(&q.transpose())
}

fn weights(n: usize) -> impl Strategy<Value = ProbabilityVector<f64>> {
    prop::collection::vec(0.2f64..1.0, n).prop_map(|w| ProbabilityVector::normalized(&w).unwrap())
}

const MC: McParams = McParams { n: 200, samples: 16, seed: 3, burn_in: 0 };

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn qr_spectrum_sums_to_determinant_average(
        mats in prop::collection::vec(matrix(3), 2),
        p in weights(2),
    ) {
        let sys = system(&mats);
        let s = spectrum_qr(&sys, &p, &McParams::new(400, 64, 1)).unwrap();
        let det = det_average(&sys, &p, 1).unwrap();
        prop_assert!((s.sum() - det).abs() <= 4.0 * s.total_stderr() + 1e-9);
        prop_assert!(s.exponents.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn scaling_shifts_every_exponent(
        mats in prop::collection::vec(matrix(2), 2),
        c in 0.2f64..5.0,
    ) {
        let sys = system(&mats);
        let scaled = system(&mats.iter().map(|m| m.scale(c)).collect::<Vec<_>>());
        let p = ProbabilityVector::uniform(2);
        let a = spectrum_qr(&sys, &p, &MC).unwrap();
        let b = spectrum_qr(&scaled, &p, &MC).unwrap();
        for (x, y) in a.exponents.iter().zip(&b.exponents) {
            prop_assert!((y - x - c.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn orthogonal_conjugation_preserves_top_exponent(
        mats in prop::collection::vec(matrix(3), 2),
        angles in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let q = rotation(3, &angles);
        let sys = system(&mats);
        let conj = system(&mats.iter().map(|m| conjugate(&q, m)).collect::<Vec<_>>());
        let p = ProbabilityVector::uniform(2);
        let a = top_exponent_mc(&sys, &p, &MC).unwrap();
        let b = top_exponent_mc(&conj, &p, &MC).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn reduction_is_invariant_under_frame_change(
        mats in prop::collection::vec(block_triangular(3, 2), 2),
        angles in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let q = rotation(3, &angles);
        let sys = system(&mats);
        let conj = system(&mats.iter().map(|m| conjugate(&q, m)).collect::<Vec<_>>());
        let basis = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let v = Section::constant(&basis).unwrap();
        let w = Section::constant(&q.matmul(&basis)).unwrap();
        prop_assert!(check_invariant(&conj, &w, 1e-8, 4).unwrap().invariant);
        let p = ProbabilityVector::uniform(2);
        for (a, b) in [(restrict(&sys, &v).unwrap(), restrict(&conj, &w).unwrap()),
                       (quotient(&sys, &v).unwrap(), quotient(&conj, &w).unwrap())] {
            let sa = spectrum_qr(&a, &p, &MC).unwrap();
            let sb = spectrum_qr(&b, &p, &MC).unwrap();
            for (x, y) in sa.exponents.iter().zip(&sb.exponents) {
                prop_assert!((x - y).abs() < 1e-8, "{:?} vs {:?}", sa.exponents, sb.exponents);
            }
        }
    }

    #[test]
    fn estimates_are_reproducible(mats in prop::collection::vec(matrix(2), 3), seed in any::<u64>()) {
        let sys = system(&mats);
        let p = ProbabilityVector::uniform(3);
        let params = McParams::new(100, 8, seed);
        prop_assert_eq!(spectrum_qr(&sys, &p, &params).unwrap(), spectrum_qr(&sys, &p, &params).unwrap());
    }
}
