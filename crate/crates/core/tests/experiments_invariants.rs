use cevsim::experiments::{
    diagnostic_ladder, estimate_strong_error, estimate_strong_errors,
    estimate_three_halves_strong_error, run_diagnostics, LadderConfig, StrongErrorReport,
};
use cevsim::model::{base_step, CevModel, DriftSpec};
use cevsim::paths::{BrownianGrid, GridSpec};
use cevsim::rng::SeedId;
use cevsim::schemes::{simulate_path, SchemeId, ThreeHalvesModel};
use cevsim::stats::SampleStats;

fn cir(sigma2: f64) -> CevModel<f64> {
    CevModel::new(1.0, sigma2.sqrt(), 0.5, DriftSpec::linear(10.0, 10.0), 1.0).unwrap()
}

fn small(model: CevModel<f64>, n: usize, seed: u64) -> LadderConfig<f64> {
    let mut cfg = LadderConfig::new(model, SchemeId::Sms, seed);
    cfg.ladder_exponents = 1..=6;
    cfg.reference_exponent = 9;
    cfg.n_trajectories = n;
    cfg
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn error_nondecreasing_in_dt() {
    let r = estimate_strong_error(&small(cir(1.0), 2_000, 1)).unwrap();
    let mut inversions = 0;
    for w in r.points.windows(2) {
        // points run from coarse to fine
        let (coarse, fine) = (w[0], w[1]);
        if coarse.mean_abs_error < fine.mean_abs_error {
            inversions += 1;
            let se = coarse.standard_error.hypot(fine.standard_error);
            assert!(fine.mean_abs_error - coarse.mean_abs_error < 2.0 * se);
        }
    }
    assert!(inversions <= 1);
    assert!(r.points.windows(2).all(|w| w[0].dt > w[1].dt));
}

#[test]
fn standard_errors_shrink_with_root_n() {
    let a = estimate_strong_error(&small(cir(1.0), 2_000, 2)).unwrap();
    let b = estimate_strong_error(&small(cir(1.0), 4_000, 2)).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        let ratio = p.standard_error / q.standard_error;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }
}

#[test]
fn coarsened_paths_share_partial_sums() {
    let g =
        BrownianGrid::<f64>::generate(GridSpec::new(1.0, 40 << 6).unwrap(), SeedId::new(3, 1, 0));
    let chain = g.restrict_to_ladder(7).unwrap();
    let fine = g.increments();
    for (k, level) in chain.iter().enumerate() {
        let width = 1usize << k;
        for (j, &inc) in level.increments().iter().enumerate() {
            let block: f64 = fine[j * width..(j + 1) * width].iter().sum();
            assert!((inc - block).abs() < 1e-13);
        }
    }
}

#[test]
fn reflections_rare_below_maximal_step() {
    let m = cir(1.0);
    let spec = GridSpec::new(1.0, (1.0 / base_step(&m)).round() as usize).unwrap();
    let clean = (0..10_000u64)
        .filter(|&i| {
            let g = BrownianGrid::generate(spec, SeedId::new(4, 7, i));
            simulate_path(SchemeId::Sms, &m, &g).unwrap().reflect_count == 0
        })
        .count();
    assert!(clean as f64 >= 0.999 * 10_000.0, "{clean}");
}

#[test]
fn second_moment_of_supremum_is_step_independent() {
    let m = cir(4.0);
    let sup_sq = |n_steps: usize| {
        let spec = GridSpec::new(1.0, n_steps).unwrap();
        let xs: Vec<f64> = (0..4_000u64)
            .map(|i| {
                let g = BrownianGrid::generate(spec, SeedId::new(5, 0, i));
                let p = simulate_path(SchemeId::Sms, &m, &g).unwrap();
                p.states.iter().fold(0.0f64, |a, &x| a.max(x * x))
            })
            .collect();
        SampleStats::from_samples(&xs)
    };
    let (a, b) = (sup_sq(80), sup_sq(320));
    let se = a.std_error().hypot(b.std_error());
    assert!(
        (a.mean - b.mean).abs() < 3.0 * se,
        "{} vs {} (se {se})",
        a.mean,
        b.mean
    );
}

#[test]
fn three_halves_model_converges_at_order_one() {
    let m = ThreeHalvesModel::<f64>::new(10.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let r = estimate_three_halves_strong_error(&m, 1..=5, 9, 2_000, 6).unwrap();
    assert!((r.rho_hat - 1.0).abs() < 0.15, "{}", r.rho_hat);
}

#[test]
fn reports_identical_across_thread_counts() {
    let cfg = small(cir(1.0), 600, 7);
    let run =
        || estimate_strong_errors(&cfg, &[SchemeId::Sms, SchemeId::Ses, SchemeId::Pms]).unwrap();
    let base: Vec<StrongErrorReport<f64>> = in_pool(1, run);
    let max = std::thread::available_parallelism()
        .map_or(4, |n| n.get())
        .max(3);
    for t in [2, max] {
        assert_eq!(in_pool(t, run), base, "{t} threads");
    }
    let m = cir(1.0);
    let diag = || run_diagnostics(&m, &diagnostic_ladder(&m, 1..=3), 300, 8).unwrap();
    let d1 = in_pool(1, diag);
    assert_eq!(in_pool(3, diag), d1);
}
