use std::f64::consts::PI;

use proptest::prelude::*;
use stiefel_log::apps::{affine_standardize, halfdensity_to_pdf, pdf_to_halfdensity, procrustes_residual, PointSet2D};
use stiefel_log::linalg::{expm, expm_skew_eig, skew, vec_of};
use stiefel_log::manifold::{geodesic_instance, pack, unpack};
use stiefel_log::multiple::{condensed_solve, dense_jacobian, segment_jacobian};
use stiefel_log::perm::perfect_shuffle;
use stiefel_log::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=4).prop_flat_map(|p| (Just(p), p.max(2)..=p + 5)).prop_map(|(p, n)| (n, p))
}

fn small_mat(r: usize, c: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-2.0f64..2.0, r * c).prop_map(move |v| Mat::from_vec(r, c, v))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn exp_then_log_round_trips((n, p) in dims(), frac in 0.05f64..0.8, seed in 0u64..10_000) {
        let (x, y, xi) = geodesic_instance(n, p, frac * PI, seed).unwrap();
        let r = stiefel_log(&x, &y, &ShootingConfig::default()).unwrap();
        prop_assert!(r.converged);
        prop_assert!((r.xi.matrix() - xi.matrix()).norm() <= 1e-9);
    }

    #[test]
    fn exp_stays_on_the_manifold((n, p) in dims(), d in 0.0f64..6.0, t in -2.0f64..2.0, seed in 0u64..10_000) {
        let (x, _, xi) = geodesic_instance(n, p, d, seed).unwrap();
        let g = stiefel_exp(&x, &xi, t).unwrap();
        prop_assert!(g.point.residual() <= 1e-12 * (1.0 + d.abs() * t.abs()));
        // speed is constant along the geodesic
        prop_assert!((g.velocity.canonical_norm() - d).abs() <= 1e-10 * (1.0 + d));
    }

    #[test]
    fn tangent_projection_is_idempotent((n, p) in dims(), seed in 0u64..10_000, v in small_mat(9, 4)) {
        let x = random_point(n, p, seed).unwrap();
        let v = v.view((0, 0), (n, p)).into_owned();
        let t1 = project_tangent(&x, &v).unwrap();
        let t2 = project_tangent(&x, t1.matrix()).unwrap();
        prop_assert!((t1.matrix() - t2.matrix()).norm() <= 1e-12 * (1.0 + v.norm()));
        let nrm = project_normal(&x, &v).unwrap();
        prop_assert!((t1.matrix() + &nrm - &v).norm() <= 1e-12 * (1.0 + v.norm()));
        prop_assert!(project_normal(&x, t1.matrix()).unwrap().norm() <= 1e-12 * (1.0 + v.norm()));
    }

    #[test]
    fn canonical_norm_is_packed_euclidean((n, p) in dims(), d in 0.0f64..4.0, seed in 0u64..10_000) {
        let x = random_point(n, p, seed).unwrap();
        let xi = random_tangent(&x, d, seed + 1).unwrap();
        let c = decompose_tangent(&xi, &orthonormal_complement(&x)).unwrap();
        prop_assert!((c.packed.norm() - xi.canonical_norm()).abs() <= 1e-12 * (1.0 + d));
        let back = assemble_tangent(&c).unwrap();
        prop_assert!((back.matrix() - xi.matrix()).norm() <= 1e-12 * (1.0 + d));
        let (om, k) = unpack(&pack(&c.omega, &c.k), n, p);
        prop_assert_eq!(om, c.omega);
        prop_assert_eq!(k, c.k);
    }

    #[test]
    fn shuffle_transposes(r in 1usize..7, c in 1usize..7, seed in 0u64..1000) {
        let m = Mat::from_fn(r, c, |i, j| ((i * 31 + j * 17) as u64 ^ seed) as f64);
        prop_assert_eq!(perfect_shuffle(r, c).apply(&vec_of(&m)), vec_of(&m.transpose()));
    }

    #[test]
    fn skew_exponentials_agree(m in small_mat(5, 5)) {
        let a = skew(&m);
        let e1 = expm(&a);
        let e2 = expm_skew_eig(&a).unwrap();
        prop_assert!((&e1 - e2).norm() <= 1e-12);
        prop_assert!((e1.transpose() * &e1 - Mat::identity(5, 5)).norm() <= 1e-12);
    }

    #[test]
    fn condensing_matches_dense_solve(
        (n, p) in prop_oneof![Just((4usize, 1usize)), Just((6, 2)), Just((5, 3))],
        m in 2usize..=4,
        seed in 0u64..10_000,
        f in prop::collection::vec(-1.0f64..1.0, 4 * 2 * 15),
    ) {
        let (x, _, xi) = geodesic_instance(n, p, 1.5, seed).unwrap();
        let bg = BrokenGeodesic::sample(&x, &xi, m).unwrap();
        let g: Vec<Mat> = (0..m - 1)
            .map(|k| segment_jacobian(&bg.points()[k], &bg.tangents()[k]).unwrap().assemble())
            .collect();
        let dim = 2 * n * p * m;
        let f = Vector::from_column_slice(&f[..dim]);
        let cond = condensed_solve(&g, &f).unwrap();
        let dense = dense_jacobian(&g).lu().solve(&(-&f)).unwrap();
        prop_assert!((&cond - &dense).norm() <= 1e-9 * (1.0 + dense.norm()));
    }

    #[test]
    fn standardization_is_affine_invariant(
        pts in small_mat(8, 2),
        a in small_mat(2, 2),
        b in small_mat(1, 2),
    ) {
        prop_assume!(a.determinant().abs() > 0.1);
        let Ok(s0) = affine_standardize(&PointSet2D::new(pts.clone()).unwrap()) else {
            // nearly collinear draw
            return Ok(());
        };
        let moved = Mat::from_fn(8, 2, |i, j| (pts.row(i) * &a)[j] + b[j]);
        let s1 = affine_standardize(&PointSet2D::new(moved).unwrap()).unwrap();
        prop_assert!(s0.is_standardized());
        prop_assert!(procrustes_residual(s0.points(), s1.points()).unwrap() <= 1e-9);
        let again = affine_standardize(&s0).unwrap();
        prop_assert!((again.points() - s0.points()).norm() <= 1e-12);
    }

    #[test]
    fn halfdensity_round_trips(g in prop::collection::vec(0.0f64..5.0, 3..60)) {
        prop_assume!(g[1..g.len() - 1].iter().sum::<f64>() > 1e-3);
        let h = 1.0 / (g.len() - 1) as f64;
        let q = pdf_to_halfdensity(&g, h).unwrap();
        prop_assert!((q.point.matrix().norm() - 1.0).abs() <= 1e-12);
        let back = halfdensity_to_pdf(&q.point, h).unwrap();
        for (a, b) in g.iter().zip(&back.values) {
            prop_assert!((a / q.integral - b).abs() <= 1e-10 * (1.0 + b));
        }
    }
}
