use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ronmf::prox::{box_soft_threshold_scalar, project_columns, spectral_norm_sq};
use ronmf::*;

fn params(f: usize, k: usize, seed: u64) -> HyperParams {
    HyperParams {
        k,
        seed,
        ..HyperParams::canonical(f)
    }
}

fn cfg(max_outer: usize, tol: f64) -> BatchConfig {
    BatchConfig {
        max_outer,
        tol,
        record_wall_clock: false,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random::<f64>())
}

#[test]
fn badmm_lands_near_bpgd_on_a_small_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2015);
    let v = random_matrix(&mut rng, 20, 15);
    let p = params(20, 3, 1);
    let a = bpgd(v.view(), &p, &cfg(20_000, 1e-10)).unwrap();
    let b = badmm(v.view(), &p, &cfg(20_000, 1e-10)).unwrap();
    let rel = (b.objective - a.objective).abs() / a.objective;
    assert!(rel <= 0.05, "bpgd {} badmm {}", a.objective, b.objective);
    // both start from the same point
    assert_eq!(a.trace[0].surrogate_loss, b.trace[0].surrogate_loss);
}

#[test]
fn single_column_fixed_point_satisfies_block_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut v = random_matrix(&mut rng, 6, 1);
    v[[2, 0]] = 1.0;
    let p = params(6, 1, 3);
    let out = bpgd(v.view(), &p, &cfg(1_000_000, 1e-15)).unwrap();
    let (w, h, r) = (out.w.matrix(), &out.h, &out.r);
    // h-block: projected gradient step leaves h in place
    let eta1 = p.kappa_bar / spectral_norm_sq(w.view());
    let grad_h = w.t().dot(&(&w.dot(h) + r - &v));
    let stepped = (h - &(grad_h * eta1)).mapv(|x| x.max(0.0));
    assert!((&stepped - h).mapv(|x| x * x).sum().sqrt() <= 1e-6);
    // r-block: exact minimizer given (W, h)
    let resid = &v - &w.dot(h);
    for (ri, xi) in r.iter().zip(resid.iter()) {
        assert!((ri - box_soft_threshold_scalar(*xi, p.lambda, 1.0)).abs() <= 1e-9);
    }
    // W-block: the dictionary step on A = hhᵀ, B = (v − r)hᵀ leaves W in place
    let a = h.dot(&h.t());
    let b = (&v - r).dot(&h.t());
    let eta2 = p.kappa_tilde / a.mapv(|x| x * x).sum().sqrt();
    let mut wn = w - &((w.dot(&a) - &b) * eta2);
    project_columns(&mut wn, ColumnConstraint::UnitNonnegL2Ball);
    assert!((&wn - w).mapv(|x| x * x).sum().sqrt() <= 1e-6);
    // the online blocks agree: re-encoding v against W reproduces the objective
    let stats = SufficientStats { a, b, samples_seen: 1 };
    let tight = HyperParams { eps_encode: 1e-14, max_iter_encode: 1_000_000, eps_dict: 1e-14, max_iter_dict: 1_000_000, ..p.clone() };
    let enc = encode_pgd(v.column(0), &out.w, EncodeConfig::new(Solver::Pgd, &tight)).unwrap();
    assert!((enc.objective - out.objective).abs() <= 1e-6, "{} vs {}", enc.objective, out.objective);
    let upd = dict_update_pgd(&out.w, &stats, &tight).unwrap();
    let moved = (upd.dictionary.matrix() - w).mapv(|x| x * x).sum().sqrt();
    assert!(moved <= 1e-6, "{moved}");
}

#[test]
fn exact_factorization_is_a_zero_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut w = random_matrix(&mut rng, 8, 2);
    project_columns(&mut w, ColumnConstraint::UnitNonnegL2Ball);
    let h = random_matrix(&mut rng, 2, 10);
    let v = w.dot(&h);
    let p = HyperParams { lambda: 10.0, ..params(8, 2, 0) };
    assert_eq!(batch_objective(v.view(), w.view(), h.view(), Array2::zeros((8, 10)).view(), p.lambda), 0.0);
    let out = bpgd(v.view(), &p, &cfg(300, 1e-12)).unwrap();
    for pair in out.trace.windows(2) {
        assert!(pair[1].surrogate_loss <= pair[0].surrogate_loss + 1e-9);
    }
}

#[test]
fn every_iterate_is_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let v = random_matrix(&mut rng, 9, 7).mapv(|x| 3.0 * x - 1.0);
    let p = HyperParams {
        constraint: ConstraintSpec {
            column: ColumnConstraint::ProbabilitySimplex,
            outlier: OutlierBox::SignedBox { m: 0.5 },
        },
        ..params(9, 3, 5)
    };
    for max_outer in 1..8 {
        for out in [bpgd(v.view(), &p, &cfg(max_outer, 1e-14)).unwrap(), badmm(v.view(), &p, &cfg(max_outer, 1e-14)).unwrap()] {
            assert!(out.w.is_feasible());
            assert!(out.h.iter().all(|&x| x >= 0.0));
            for col in out.r.axis_iter(Axis(1)) {
                assert!(p.constraint.outlier.contains_exact(col));
            }
            let direct = batch_objective(v.view(), out.w.view(), out.h.view(), out.r.view(), p.lambda);
            assert!((direct - out.objective).abs() <= 1e-9 * direct.max(1.0));
            assert!(out.objective.is_finite());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn bpgd_objective_never_increases(seed in any::<u64>(), f in 3usize..15, n in 3usize..15, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_matrix(&mut rng, f, n);
        let out = bpgd(v.view(), &params(f, k, seed), &cfg(200, 1e-12)).unwrap();
        for pair in out.trace.windows(2) {
            prop_assert!(pair[1].surrogate_loss <= pair[0].surrogate_loss + 1e-9 / n as f64);
        }
    }
}
