use std::io::{self, Write};
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::model::{base_step, derive_constants, CevModel};
use crate::paths::{BrownianGrid, GridSpec};
use crate::rng::SeedId;
use crate::schemes::{three_halves_terminal, SchemeId, StepKernel, ThreeHalvesModel};
use crate::stats::SampleStats;
use crate::Real;

use super::{ols_loglog, streams, ExperimentError, Scale};

const MIN_LADDER_POINTS: usize = 3;

/// Reference scheme used when none is given: AIS for CIR models where it is
/// defined, SMS otherwise.
pub fn default_reference<T: Real>(model: &CevModel<T>) -> SchemeId {
    if SchemeId::Ais.check(model).is_ok() {
        SchemeId::Ais
    } else {
        SchemeId::Sms
    }
}

/// Step-size ladder `dt_n = h / 2^n` where `h = T / ceil(T / base_step)`.
#[derive(Clone, Debug)]
pub struct LadderConfig<T> {
    pub model: CevModel<T>,
    pub scheme_under_test: SchemeId,
    pub reference_scheme: SchemeId,
    pub ladder_exponents: RangeInclusive<u32>,
    pub reference_exponent: u32,
    pub n_trajectories: usize,
    pub base_step: T,
    pub seed: u64,
}

impl<T: Real> LadderConfig<T> {
    /// Full-scale defaults: ladder `1..=9`, reference exponent 12, 5e4
    /// trajectories, base step equal to the model's maximal step.
    pub fn new(model: CevModel<T>, scheme_under_test: SchemeId, seed: u64) -> Self {
        let mut cfg = Self {
            reference_scheme: default_reference(&model),
            base_step: base_step(&model),
            model,
            scheme_under_test,
            ladder_exponents: 1..=9,
            reference_exponent: 12,
            n_trajectories: 50_000,
            seed,
        };
        cfg.apply_scale(Scale::Full);
        cfg
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.apply_scale(scale);
        self
    }

    fn apply_scale(&mut self, scale: Scale) {
        self.ladder_exponents = scale.ladder();
        self.reference_exponent = scale.reference_exponent();
        self.n_trajectories = scale.n_trajectories();
    }

    /// Number of steps at exponent 0.
    pub fn base_steps(&self) -> usize {
        let ratio = (self.model.horizon() / self.base_step).to_f64_lossy();
        (ratio * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn step_at(&self, exponent: u32) -> T {
        self.model.horizon() / T::from_count(self.base_steps() << exponent)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::InvalidConfig(msg));
        if self.n_trajectories < 2 {
            return bad("n_trajectories must be >= 2".into());
        }
        if self.ladder_exponents.is_empty() {
            return bad("empty ladder".into());
        }
        let points = self.ladder_exponents.clone().count();
        if points < MIN_LADDER_POINTS {
            return Err(ExperimentError::InsufficientPoints {
                got: points,
                needed: MIN_LADDER_POINTS,
            });
        }
        if self.reference_exponent <= *self.ladder_exponents.end() {
            return bad(format!(
                "reference exponent {} must exceed the largest ladder exponent {}",
                self.reference_exponent,
                self.ladder_exponents.end()
            ));
        }
        if self.reference_exponent > 24 {
            return bad("reference exponent above 24".into());
        }
        if !(self.base_step > T::zero()) || !self.base_step.is_finite() {
            return bad("base step must be finite and > 0".into());
        }
        if let Ok(c) = derive_constants(&self.model) {
            if self.base_step > c.delta_max * (T::one() + T::lit(1e-12)) {
                return bad(format!(
                    "base step {} exceeds the maximal step {}",
                    self.base_step, c.delta_max
                ));
            }
        }
        self.scheme_under_test.check(&self.model)?;
        self.reference_scheme.check(&self.model)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorPoint<T> {
    pub dt: T,
    pub mean_abs_error: T,
    pub standard_error: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrongErrorReport<T> {
    pub scheme: SchemeId,
    /// Sorted by `dt`, descending.
    pub points: Vec<ErrorPoint<T>>,
    pub rho_hat: T,
    pub intercept: T,
    pub r_squared: T,
}

impl<T: Real> StrongErrorReport<T> {
    fn from_points(scheme: SchemeId, points: Vec<ErrorPoint<T>>) -> Result<Self, ExperimentError> {
        let pairs: Vec<(T, T)> = points.iter().map(|p| (p.dt, p.mean_abs_error)).collect();
        let fit = ols_loglog(&pairs)?;
        Ok(Self {
            scheme,
            points,
            rho_hat: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
        })
    }
}

/// Terminal value of a fold of `kernel` over `increments`.
#[inline]
fn terminal<T: Real>(kernel: &StepKernel<T>, x0: T, increments: &[T]) -> T {
    increments
        .iter()
        .fold(x0, |x, &dw| kernel.step(x, dw).next_state)
}

/// Per-trajectory errors for `n_tests` observables on a coupled ladder.
///
/// Returns `errors[test][level]` statistics, levels in ladder order.
#[allow(clippy::too_many_arguments)]
fn coupled_ladder<T, R, S>(
    horizon: T,
    base_steps: usize,
    ladder: &RangeInclusive<u32>,
    reference_exponent: u32,
    n_trajectories: usize,
    seed: u64,
    n_tests: usize,
    reference: R,
    test: S,
) -> Result<Vec<Vec<ErrorPoint<T>>>, ExperimentError>
where
    T: Real,
    R: Fn(&BrownianGrid<T>) -> Result<T, ExperimentError> + Sync,
    S: Fn(usize, u32, &BrownianGrid<T>) -> Result<T, ExperimentError> + Sync,
{
    let fine = GridSpec::new(horizon, base_steps << reference_exponent)?;
    let n_levels = reference_exponent - ladder.start() + 1;
    let exponents: Vec<u32> = ladder.clone().collect();

    let per_trajectory: Vec<Vec<T>> = (0..n_trajectories)
        .into_par_iter()
        .map(|i| {
            let grid = BrownianGrid::generate(fine, SeedId::new(seed, streams::STRONG, i as u64));
            let x_ref = reference(&grid)?;
            let chain = grid.restrict_to_ladder(n_levels)?;
            let mut errs = Vec::with_capacity(n_tests * exponents.len());
            for t in 0..n_tests {
                for &n in &exponents {
                    let coarse = &chain[(reference_exponent - n) as usize];
                    errs.push((x_ref - test(t, n, coarse)?).abs());
                }
            }
            Ok(errs)
        })
        .collect::<Result<_, ExperimentError>>()?;

    let mut out = Vec::with_capacity(n_tests);
    for t in 0..n_tests {
        let mut points = Vec::with_capacity(exponents.len());
        for (j, &n) in exponents.iter().enumerate() {
            let column: Vec<T> = per_trajectory
                .iter()
                .map(|e| e[t * exponents.len() + j])
                .collect();
            let s = SampleStats::from_samples(&column);
            let dt = horizon / T::from_count(base_steps << n);
            points.push(ErrorPoint {
                dt,
                mean_abs_error: s.mean,
                standard_error: s.std_error(),
            });
        }
        out.push(points);
    }
    Ok(out)
}

/// Mean absolute terminal error of each scheme against a shared reference.
pub fn estimate_strong_errors<T: Real>(
    cfg: &LadderConfig<T>,
    schemes: &[SchemeId],
) -> Result<Vec<StrongErrorReport<T>>, ExperimentError> {
    cfg.validate()?;
    for s in schemes {
        s.check(&cfg.model)?;
    }
    let model = &cfg.model;
    let x0 = model.x0();
    let ref_kernel = StepKernel::new(
        cfg.reference_scheme,
        model,
        cfg.step_at(cfg.reference_exponent),
    )?;
    let start = *cfg.ladder_exponents.start();
    let kernels: Vec<Vec<StepKernel<T>>> = schemes
        .iter()
        .map(|&s| {
            cfg.ladder_exponents
                .clone()
                .map(|n| StepKernel::new(s, model, cfg.step_at(n)))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let columns = coupled_ladder(
        model.horizon(),
        cfg.base_steps(),
        &cfg.ladder_exponents,
        cfg.reference_exponent,
        cfg.n_trajectories,
        cfg.seed,
        schemes.len(),
        |g| Ok(terminal(&ref_kernel, x0, g.increments())),
        |t, n, g| {
            Ok(terminal(
                &kernels[t][(n - start) as usize],
                x0,
                g.increments(),
            ))
        },
    )?;
    schemes
        .iter()
        .zip(columns)
        .map(|(&s, points)| StrongErrorReport::from_points(s, points))
        .collect()
}

pub fn estimate_strong_error<T: Real>(
    cfg: &LadderConfig<T>,
) -> Result<StrongErrorReport<T>, ExperimentError> {
    let mut reports = estimate_strong_errors(cfg, &[cfg.scheme_under_test])?;
    Ok(reports.remove(0))
}

/// Strong error of the inverted SMS approximation of the 3/2 model, against
/// the same construction at the reference exponent.
pub fn estimate_three_halves_strong_error<T: Real>(
    model: &ThreeHalvesModel<T>,
    ladder: RangeInclusive<u32>,
    reference_exponent: u32,
    n_trajectories: usize,
    seed: u64,
) -> Result<StrongErrorReport<T>, ExperimentError> {
    let cir = model.induced_model()?;
    let mut cfg = LadderConfig::new(cir, SchemeId::Sms, seed);
    cfg.reference_scheme = SchemeId::Sms;
    cfg.ladder_exponents = ladder;
    cfg.reference_exponent = reference_exponent;
    cfg.n_trajectories = n_trajectories;
    cfg.validate()?;
    let columns = coupled_ladder(
        model.horizon,
        cfg.base_steps(),
        &cfg.ladder_exponents,
        cfg.reference_exponent,
        n_trajectories,
        seed,
        1,
        |g| Ok(three_halves_terminal(model, g)?),
        |_, _, g| Ok(three_halves_terminal(model, g)?),
    )?;
    StrongErrorReport::from_points(
        SchemeId::Sms,
        columns.into_iter().next().expect("one column"),
    )
}

/// `scheme,dt,mean_abs_error,std_error`, one row per ladder point.
pub fn write_strong_error_csv<T: Real, W: Write>(
    reports: &[StrongErrorReport<T>],
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "scheme,dt,mean_abs_error,std_error")?;
    for r in reports {
        for p in &r.points {
            writeln!(
                w,
                "{},{},{},{}",
                r.scheme, p.dt, p.mean_abs_error, p.standard_error
            )?;
        }
    }
    Ok(())
}

/// `scheme,rho_hat,intercept,r_squared`.
pub fn write_regression_csv<T: Real, W: Write>(
    reports: &[StrongErrorReport<T>],
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "scheme,rho_hat,intercept,r_squared")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{}",
            r.scheme, r.rho_hat, r.intercept, r.r_squared
        )?;
    }
    Ok(())
}
