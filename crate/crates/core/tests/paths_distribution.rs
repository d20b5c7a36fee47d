use cevsim::paths::{BrownianGrid, GridSpec};
use cevsim::rng::SeedId;
use cevsim::stats::SampleStats;
use statrs::distribution::{ContinuousCDF, Normal};

const N: usize = 1_000_000;

fn million(seed: u64) -> BrownianGrid<f64> {
    // dt = 0.01
    BrownianGrid::generate(GridSpec::new(10_000.0, N).unwrap(), SeedId::new(seed, 0, 0))
}

#[test]
fn increment_mean_within_four_sigma() {
    let s = SampleStats::from_samples(million(1).increments());
    assert!(s.mean.abs() < 4.0 * 0.1 / 1_000.0, "{}", s.mean);
}

#[test]
fn increment_variance_within_one_percent() {
    let s = SampleStats::from_samples(million(2).increments());
    assert!((s.variance / 0.01 - 1.0).abs() < 0.01, "{}", s.variance);
}

#[test]
fn increments_pass_kolmogorov_smirnov() {
    let g = million(3);
    let mut z: Vec<f64> = g.increments().iter().map(|x| x / 0.1).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = z.len() as f64;
    let d = z
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // asymptotic critical value at level 1e-3
    assert!(d < 1.949 / n.sqrt(), "D = {d}");
}

#[test]
fn ladder_variances_scale_with_step() {
    let g = BrownianGrid::<f64>::generate(
        GridSpec::new(1_024.0, 1 << 20).unwrap(),
        SeedId::new(4, 0, 0),
    );
    let chain = g.restrict_to_ladder(4).unwrap();
    for (k, level) in chain.iter().enumerate() {
        let dt = level.dt();
        assert_eq!(dt, (1u64 << k) as f64 / 1_024.0);
        let s = SampleStats::from_samples(level.increments());
        assert!(
            (s.variance / dt - 1.0).abs() < 0.02,
            "level {k}: {}",
            s.variance / dt
        );
    }
}

#[test]
fn streams_and_paths_are_independent() {
    let a =
        BrownianGrid::<f64>::generate(GridSpec::new(1.0, 100_000).unwrap(), SeedId::new(5, 1, 0));
    let b =
        BrownianGrid::<f64>::generate(GridSpec::new(1.0, 100_000).unwrap(), SeedId::new(5, 1, 1));
    let c =
        BrownianGrid::<f64>::generate(GridSpec::new(1.0, 100_000).unwrap(), SeedId::new(5, 2, 0));
    let corr = |x: &[f64], y: &[f64]| {
        let sxy: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let sxx: f64 = x.iter().map(|p| p * p).sum();
        let syy: f64 = y.iter().map(|q| q * q).sum();
        sxy / (sxx * syy).sqrt()
    };
    // 4.5 standard deviations of a null correlation over 1e5 pairs
    assert!(corr(a.increments(), b.increments()).abs() < 4.5 / 316.2);
    assert!(corr(a.increments(), c.increments()).abs() < 4.5 / 316.2);
}
