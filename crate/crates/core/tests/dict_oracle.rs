use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ronmf::dict::dict_update_pgd_traced;
use ronmf::*;

/// `A = HHᵀ/n`, `B = VHᵀ/n` from random nonnegative data, so `A ≻ 0` almost surely.
fn random_stats(rng: &mut ChaCha8Rng, f: usize, k: usize) -> SufficientStats {
    let n = 3 * k + 2;
    let h = Array2::from_shape_simple_fn((k, n), || rng.random::<f64>());
    let v = Array2::from_shape_simple_fn((f, n), || rng.random::<f64>());
    SufficientStats {
        a: h.dot(&h.t()) / n as f64,
        b: v.dot(&h.t()) / n as f64,
        samples_seen: n,
    }
}

fn start(rng: &mut ChaCha8Rng, f: usize, k: usize, c: ColumnConstraint) -> Dictionary {
    Dictionary::projected(Array2::from_shape_simple_fn((f, k), || rng.random::<f64>()), c).unwrap()
}

fn objective(w: &Array2<f64>, s: &SufficientStats) -> f64 {
    let mut val = 0.0;
    let (f, k) = w.dim();
    for i in 0..f {
        for j in 0..k {
            let mut wa = 0.0;
            for l in 0..k {
                wa += w[[i, l]] * s.a[[l, j]];
            }
            val += 0.5 * w[[i, j]] * wa - w[[i, j]] * s.b[[i, j]];
        }
    }
    val
}

/// Plain projected gradient with a small fixed step, run for a long time.
fn long_run_oracle(s: &SufficientStats, f: usize, k: usize) -> f64 {
    let mut w = Array2::<f64>::zeros((f, k));
    let trace: f64 = (0..k).map(|i| s.a[[i, i]]).sum();
    let step = 0.5 / trace;
    for _ in 0..100_000 {
        let grad = w.dot(&s.a) - &s.b;
        w = &w - &(grad * step);
        for mut col in w.columns_mut() {
            col.mapv_inplace(|x| x.max(0.0));
            let norm = col.dot(&col).sqrt();
            if norm > 1.0 {
                col /= norm;
            }
        }
    }
    objective(&w, s)
}

fn tight(f: usize, k: usize) -> HyperParams {
    HyperParams {
        k,
        eps_dict: 1e-14,
        max_iter_dict: 1_000_000,
        ..HyperParams::canonical(f)
    }
}

#[test]
fn pgd_and_admm_match_long_run_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = random_stats(&mut rng, 6, 3);
    let w0 = start(&mut rng, 6, 3, ColumnConstraint::UnitNonnegL2Ball);
    let p = tight(6, 3);
    let oracle = long_run_oracle(&s, 6, 3);
    let pgd = dict_update_pgd(&w0, &s, &p).unwrap();
    assert!((pgd.objective - oracle).abs() <= 1e-5, "{} vs {oracle}", pgd.objective);
    assert!((objective(pgd.dictionary.matrix(), &s) - pgd.objective).abs() <= 1e-12);
    let admm = dict_update_admm(&w0, &s, &p).unwrap();
    let rel = (admm.objective - pgd.objective).abs() / pgd.objective.abs();
    assert!(rel <= 1e-3, "{} vs {}", admm.objective, pgd.objective);
}

#[test]
fn warm_start_from_the_optimum_stops_at_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = random_stats(&mut rng, 7, 3);
    let w0 = start(&mut rng, 7, 3, ColumnConstraint::UnitNonnegL2Ball);
    // single steps until the iterate itself stops moving; the objective
    // flattens out long before W does
    let one_step = HyperParams { max_iter_dict: 1, ..tight(7, 3) };
    let mut opt = w0;
    for _ in 0..1_000_000 {
        let next = dict_update_pgd(&opt, &s, &one_step).unwrap().dictionary;
        let moved = (next.matrix() - opt.matrix()).mapv(|x| x * x).sum().sqrt();
        opt = next;
        if moved < 1e-15 {
            break;
        }
    }
    let again = dict_update_pgd(&opt, &s, &HyperParams { k: 3, ..HyperParams::canonical(7) }).unwrap();
    assert!(again.iterations <= 2, "{}", again.iterations);
    let drift = (again.dictionary.matrix() - opt.matrix()).mapv(|x| x * x).sum().sqrt();
    assert!(drift <= 1e-8, "{drift}");
}

fn constraint_strategy() -> impl Strategy<Value = ColumnConstraint> {
    prop_oneof![
        Just(ColumnConstraint::UnitNonnegL2Ball),
        Just(ColumnConstraint::NonnegOrthant),
        Just(ColumnConstraint::ProbabilitySimplex),
        (0.0..2.0f64, 0.0..2.0f64)
            .prop_filter("some weight", |(a, b)| a + b > 0.05)
            .prop_map(|(gamma1, gamma2)| ColumnConstraint::ElasticNetBall { gamma1, gamma2 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgd_objective_never_increases(seed in any::<u64>(), f in 2usize..9, k in 1usize..5, c in constraint_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stats(&mut rng, f, k);
        let w0 = start(&mut rng, f, k, c);
        let p = HyperParams { k, constraint: ConstraintSpec { column: c, ..ConstraintSpec::default() }, ..HyperParams::canonical(f) };
        let mut hist = Vec::new();
        dict_update_pgd_traced(&w0, &s, &p, Some(&mut hist)).unwrap();
        for pair in hist.windows(2) {
            prop_assert!(pair[1] - pair[0] <= 1e-10, "{c:?}: {} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn outputs_are_feasible_for_every_constraint(seed in any::<u64>(), f in 2usize..9, k in 1usize..5, c in constraint_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stats(&mut rng, f, k);
        let w0 = start(&mut rng, f, k, c);
        let p = HyperParams { k, ..HyperParams::canonical(f) };
        for solver in [Solver::Pgd, Solver::Admm] {
            let out = dict_update(solver, &w0, &s, &p).unwrap();
            prop_assert!(out.dictionary.is_feasible(), "{solver:?} {c:?}");
            prop_assert!(c.is_feasible(out.dictionary.view()));
        }
    }
}
