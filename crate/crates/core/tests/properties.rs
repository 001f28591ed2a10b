//! Randomized invariants checked against independent reference computations.

use eigenscape::brockett::ordered_index_sets;
use eigenscape::landscape::classify_critical_points;
use eigenscape::linalg::{procrustes_distance, sign_aligned_distance, sym_eig};
use eigenscape::manifold::{
    orthonormality_residual, project_tangent, random_stiefel, random_tangent, retract_polar,
    retract_qr, tangency_residual, tangent_basis,
};
use eigenscape::rng::gaussian_matrix;
use eigenscape::{Risk, Rng, StiefelPoint, SymMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..10).prop_flat_map(|n| (Just(n), 1..=n.min(5)))
}

fn pair(seed: u64, n: usize, r: usize) -> (StiefelPoint, StiefelPoint) {
    let mut rng = Rng::new(seed, 7);
    (random_stiefel(&mut rng, n, r).unwrap(), random_stiefel(&mut rng, n, r).unwrap())
}

/// Every sign pattern, written out.
fn brute_force_sign_distance(a: &StiefelPoint, b: &StiefelPoint) -> f64 {
    let r = a.r();
    (0..1u32 << r)
        .map(|mask| {
            let signs: Vec<f64> = (0..r).map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
            (a.matrix() - b.with_column_signs(&signs).matrix()).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `√(2r − 2 Σ σ_i(X2ᵀ X1))`.
fn singular_value_procrustes(a: &StiefelPoint, b: &StiefelPoint) -> f64 {
    let s = (b.matrix().transpose() * a.matrix()).singular_values();
    (2.0 * a.r() as f64 - 2.0 * s.sum()).max(0.0).sqrt()
}

fn random_spectrum_matrix(rng: &mut Rng, n: usize) -> SymMatrix {
    let q = random_stiefel(rng, n, n).unwrap();
    // spacing at least 0.1 keeps every gap strict
    let mut acc = 0.0;
    let mut lambda: Vec<f64> = (0..n)
        .map(|_| {
            acc += 0.1 + rng.uniform();
            acc
        })
        .collect();
    lambda.reverse();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambda));
    SymMatrix::symmetrize(q.matrix() * d * q.matrix().transpose())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sign_alignment_matches_enumeration(seed in any::<u64>(), (n, r) in dims()) {
        let (a, b) = pair(seed, n, r);
        let fast = sign_aligned_distance(&a, &b).unwrap();
        prop_assert!((fast - brute_force_sign_distance(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn procrustes_matches_singular_values(seed in any::<u64>(), (n, r) in dims()) {
        let (a, b) = pair(seed, n, r);
        let d = procrustes_distance(&a, &b).unwrap();
        // the closed form loses digits to cancellation near zero
        prop_assert!((d - singular_value_procrustes(&a, &b)).abs() < 1e-6);
    }

    #[test]
    fn procrustes_never_exceeds_sign_alignment(seed in any::<u64>(), (n, r) in dims()) {
        let (a, b) = pair(seed, n, r);
        let p = procrustes_distance(&a, &b).unwrap();
        let s = sign_aligned_distance(&a, &b).unwrap();
        prop_assert!(p <= s + 1e-12);
    }

    #[test]
    fn distances_satisfy_triangle_inequality(seed in any::<u64>(), (n, r) in dims()) {
        let (a, b) = pair(seed, n, r);
        let c = random_stiefel(&mut Rng::new(seed, 8), n, r).unwrap();
        for d in [sign_aligned_distance, procrustes_distance] {
            prop_assert!(d(&a, &c).unwrap() <= d(&a, &b).unwrap() + d(&b, &c).unwrap() + 1e-12);
        }
    }

    #[test]
    fn distance_is_zero_under_its_symmetry(seed in any::<u64>(), (n, r) in dims()) {
        let mut rng = Rng::new(seed, 9);
        let a = random_stiefel(&mut rng, n, r).unwrap();
        let signs: Vec<f64> = (0..r).map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 }).collect();
        prop_assert!(sign_aligned_distance(&a, &a.with_column_signs(&signs)).unwrap() < 1e-14);
        let q = random_stiefel(&mut rng, r, r).unwrap();
        let rotated = StiefelPoint::new(a.matrix() * q.matrix()).unwrap();
        prop_assert!(procrustes_distance(&a, &rotated).unwrap() < 1e-7);
    }

    #[test]
    fn projection_is_idempotent_and_tangent(seed in any::<u64>(), (n, r) in dims()) {
        let mut rng = Rng::new(seed, 10);
        let x = random_stiefel(&mut rng, n, r).unwrap();
        let v = gaussian_matrix(&mut rng, n, r, 1.0);
        let p = project_tangent(&x, &v).unwrap();
        let pp = project_tangent(&x, p.matrix()).unwrap();
        prop_assert!((p.matrix() - pp.matrix()).norm() < 1e-12 * (1.0 + v.norm()));
        prop_assert!(tangency_residual(&x, p.matrix()) < 1e-12);
    }

    #[test]
    fn retractions_stay_on_the_manifold(seed in any::<u64>(), (n, r) in dims(), t in -3.0f64..3.0) {
        let mut rng = Rng::new(seed, 11);
        let x = random_stiefel(&mut rng, n, r).unwrap();
        let u = random_tangent(&mut rng, &x, 1.0).unwrap();
        for y in [retract_qr(&x, &u, t).unwrap(), retract_polar(&x, &u, t).unwrap()] {
            prop_assert!(orthonormality_residual(y.matrix()) < 1e-12);
        }
    }

    #[test]
    fn hessian_bilinear_is_symmetric(seed in any::<u64>(), (n, r) in dims()) {
        let mut rng = Rng::new(seed, 12);
        let a = SymMatrix::symmetrize(gaussian_matrix(&mut rng, n, n, 1.0));
        let risk = Risk::population(a, r).unwrap();
        let x = random_stiefel(&mut rng, n, r).unwrap();
        let u = random_tangent(&mut rng, &x, 1.0).unwrap();
        let v = random_tangent(&mut rng, &x, 1.0).unwrap();
        let uv = risk.hessian_bilinear(&x, &u, &v).unwrap();
        let vu = risk.hessian_bilinear(&x, &v, &u).unwrap();
        prop_assert!((uv - vu).abs() < 1e-12 * (1.0 + uv.abs()));
    }

    #[test]
    fn cost_is_invariant_to_column_signs(seed in any::<u64>(), (n, r) in dims()) {
        let mut rng = Rng::new(seed, 13);
        let a = SymMatrix::symmetrize(gaussian_matrix(&mut rng, n, n, 1.0));
        let risk = Risk::population(a, r).unwrap();
        let x = random_stiefel(&mut rng, n, r).unwrap();
        let flipped = x.with_column_signs(&vec![-1.0; r]);
        let (c0, c1) = (risk.cost(&x).unwrap(), risk.cost(&flipped).unwrap());
        prop_assert!((c0 - c1).abs() < 1e-12 * (1.0 + c0.abs()));
    }

    #[test]
    fn gradient_vanishes_at_every_ordered_eigenbasis(seed in any::<u64>(), n in 2usize..6) {
        let mut rng = Rng::new(seed, 14);
        let m = random_spectrum_matrix(&mut rng, n);
        let spectrum = sym_eig(&m).unwrap();
        let r = 1 + rng.below(n - 1);
        let risk = Risk::population(m, r).unwrap();
        for omega in ordered_index_sets(n, r) {
            let x = StiefelPoint::new(spectrum.select(&omega)).unwrap();
            prop_assert!(risk.gradient(&x).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn critical_point_curvature_signs(seed in any::<u64>(), n in 3usize..6) {
        let mut rng = Rng::new(seed, 15);
        let m = random_spectrum_matrix(&mut rng, n);
        let r = 1 + rng.below(n - 1);
        let report = classify_critical_points(&Risk::population(m, r).unwrap()).unwrap();
        prop_assert!(report.all_hold, "{:?}", report.points.iter().filter(|p| !p.holds).collect::<Vec<_>>());
    }
}

#[test]
fn tangent_basis_is_orthonormal() {
    let mut rng = Rng::new(5, 0);
    let x = random_stiefel(&mut rng, 6, 3).unwrap();
    let basis = tangent_basis(&x);
    let k = basis.dim();
    assert_eq!(k, 6 * 3 - 6);
    let coeffs: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| (i == j) as u8 as f64).collect()).collect();
    let vectors: Vec<_> = coeffs.iter().map(|c| basis.combine(c)).collect();
    for i in 0..k {
        for j in 0..k {
            let want = (i == j) as u8 as f64;
            assert!((vectors[i].inner(&vectors[j]) - want).abs() < 1e-12);
        }
    }
}
