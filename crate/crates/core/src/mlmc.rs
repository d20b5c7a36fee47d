//! Multilevel Monte Carlo price of a zero-coupon bond under CIR short rates.
//!
//! Level `l` uses `dt_l = T / 2^(l+1)`. A level-`l` correction sample is the
//! discounted payoff on a fine grid minus the payoff on its pairwise
//! coarsening; level 0 is the plain payoff at `dt_0 = T/2`.

use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::experiments::streams;
use crate::model::{CevModel, DriftSpec, ModelError};
use crate::paths::{BrownianGrid, GridSpec, PathError};
use crate::rng::SeedId;
use crate::schemes::{summarize, SchemeError, SchemeId, SchemePath, StepKernel};
use crate::stats::{pairwise_sum, SampleStats};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlmcError {
    #[error("invalid MLMC configuration: {0}")]
    InvalidConfig(String),
    #[error("scheme {0} is not supported for MLMC (use SMS, PMS or AIS)")]
    UnsupportedScheme(SchemeId),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// `dr = (a - b r) dt + sigma sqrt(r) dW`, bond maturity `horizon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZcbModel<T> {
    pub a: T,
    pub b: T,
    pub sigma: T,
    pub r0: T,
    pub horizon: T,
}

impl<T: Real> ZcbModel<T> {
    pub fn new(a: T, b: T, sigma: T, r0: T, horizon: T) -> Result<Self, MlmcError> {
        for (name, v) in [
            ("a", a),
            ("b", b),
            ("sigma", sigma),
            ("r0", r0),
            ("T", horizon),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: "must be finite and > 0".into(),
                }
                .into());
            }
        }
        let m = Self {
            a,
            b,
            sigma,
            r0,
            horizon,
        };
        m.cev_model()?;
        Ok(m)
    }

    /// Benchmark bond: `a = b = 10`, `sigma = 1`, `r0 = 1`, `T = 1`.
    pub fn reference() -> Self {
        Self {
            a: T::lit(10.0),
            b: T::lit(10.0),
            sigma: T::one(),
            r0: T::one(),
            horizon: T::one(),
        }
    }

    pub fn cev_model(&self) -> Result<CevModel<T>, ModelError> {
        CevModel::new(
            self.r0,
            self.sigma,
            T::lit(0.5),
            DriftSpec::linear(self.a, self.b),
            self.horizon,
        )
    }
}

/// `B(0,T) = A(T) exp(-B(T) r0)`, evaluated in a cancellation-free log form.
pub fn zcb_closed_form<T: Real>(m: &ZcbModel<T>) -> T {
    let two = T::lit(2.0);
    let (a, b, s2, t) = (m.a, m.b, m.sigma * m.sigma, m.horizon);
    let lambda = (b * b + two * s2).sqrt();
    // lambda - b without cancellation
    let delta = two * s2 / (lambda + b);
    let g = -(-lambda * t).exp_m1();
    let ln_base = -delta * t / two - (-delta * g / (two * lambda)).ln_1p();
    let ln_a = two * a / s2 * ln_base;
    let b_t = two * g / ((lambda + b) + delta * (-lambda * t).exp());
    (ln_a - b_t * m.r0).exp()
}

/// `exp(-integral)` with the trapezoidal integral of the path.
pub fn discounted_payoff<T: Real>(path: &SchemePath<T>) -> T {
    (-path.integral_trapezoid).exp()
}

/// `max(floor(log2(1/epsilon)), min_levels)`.
pub fn level_count(epsilon: f64, min_levels: usize) -> usize {
    let l = (1.0 / epsilon).log2();
    // guard exact powers of two against log2 rounding just below the integer
    let floor = (l + 1e-12).floor().max(0.0) as usize;
    floor.max(min_levels)
}

/// `N_l = ceil((2/eps^2) sqrt(V_l dt_l) sum_j sqrt(V_j / dt_j))`, floored at `min_trajectories`.
pub fn giles_allocation(
    epsilon: f64,
    variances: &[f64],
    dts: &[f64],
    min_trajectories: usize,
) -> Vec<usize> {
    assert_eq!(variances.len(), dts.len(), "one variance per level");
    let total: f64 = variances
        .iter()
        .zip(dts)
        .map(|(&v, &dt)| (v.max(0.0) / dt).sqrt())
        .sum();
    let scale = 2.0 / (epsilon * epsilon);
    variances
        .iter()
        .zip(dts)
        .map(|(&v, &dt)| {
            let n = (scale * (v.max(0.0) * dt).sqrt() * total).ceil();
            if n.is_finite() && n > min_trajectories as f64 {
                n as usize
            } else {
                min_trajectories
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmcConfig {
    pub epsilon: f64,
    pub scheme: SchemeId,
    pub min_trajectories: usize,
    pub min_levels: usize,
    /// Samples per level used to estimate `V_l` before allocation; reused in the estimator.
    pub warmup_samples: usize,
    pub seed: u64,
}

impl MlmcConfig {
    pub fn new(epsilon: f64, scheme: SchemeId, seed: u64) -> Self {
        Self {
            epsilon,
            scheme,
            min_trajectories: 500,
            min_levels: 6,
            warmup_samples: 500,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), MlmcError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(MlmcError::InvalidConfig(format!(
                "epsilon = {} must lie in (0, 1)",
                self.epsilon
            )));
        }
        if self.min_trajectories < 2 {
            return Err(MlmcError::InvalidConfig(
                "min_trajectories must be >= 2".into(),
            ));
        }
        if self.warmup_samples < 2 {
            return Err(MlmcError::InvalidConfig(
                "warmup_samples must be >= 2".into(),
            ));
        }
        if !matches!(self.scheme, SchemeId::Sms | SchemeId::Pms | SchemeId::Ais) {
            return Err(MlmcError::UnsupportedScheme(self.scheme));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelStats<T> {
    pub dt: T,
    pub n_samples: usize,
    pub variance: T,
    pub mean_correction: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlmcResult<T> {
    pub epsilon: f64,
    pub scheme: SchemeId,
    /// Number of correction levels; `per_level` has `levels + 1` entries.
    pub levels: usize,
    pub per_level: Vec<LevelStats<T>>,
    pub estimator: T,
    pub closed_form: T,
    pub observed_error: T,
    /// Scheme steps taken, counting both members of each coupled pair.
    pub total_fine_steps: u64,
    pub wall_time: f64,
}

impl<T: Real> MlmcResult<T> {
    pub fn total_samples(&self) -> usize {
        self.per_level.iter().map(|l| l.n_samples).sum()
    }

    /// `level,dt,N_l,V_l,mean_correction`
    pub fn write_levels_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "level,dt,N_l,V_l,mean_correction")?;
        for (l, s) in self.per_level.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                l, s.dt, s.n_samples, s.variance, s.mean_correction
            )?;
        }
        Ok(())
    }

    /// `epsilon,scheme,levels,estimator,closed_form,observed_error,total_samples,total_fine_steps`
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epsilon,scheme,levels,estimator,closed_form,observed_error,total_samples,total_fine_steps")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            self.epsilon,
            self.scheme,
            self.levels,
            self.estimator,
            self.closed_form,
            self.observed_error,
            self.total_samples(),
            self.total_fine_steps
        )
    }
}

struct Level<T> {
    fine: GridSpec<T>,
    fine_kernel: StepKernel<T>,
    coarse_kernel: Option<StepKernel<T>>,
    stream: u32,
}

impl<T: Real> Level<T> {
    fn new(model: &CevModel<T>, scheme: SchemeId, l: usize) -> Result<Self, MlmcError> {
        let fine = GridSpec::new(model.horizon(), 2usize << l)?;
        let fine_kernel = StepKernel::new(scheme, model, fine.dt())?;
        let coarse_kernel = if l == 0 {
            None
        } else {
            Some(StepKernel::new(
                scheme,
                model,
                model.horizon() / T::from_count(1 << l),
            )?)
        };
        Ok(Self {
            fine,
            fine_kernel,
            coarse_kernel,
            stream: streams::MLMC + l as u32,
        })
    }

    fn sample(&self, x0: T, seed: u64, path: u64) -> Result<T, MlmcError> {
        let grid = BrownianGrid::generate(self.fine, SeedId::new(seed, self.stream, path));
        let fine = (-summarize(&self.fine_kernel, x0, grid.increments()).integral_trapezoid).exp();
        match &self.coarse_kernel {
            None => Ok(fine),
            Some(k) => {
                let coarse = grid.coarsen()?;
                Ok(fine - (-summarize(k, x0, coarse.increments()).integral_trapezoid).exp())
            }
        }
    }

    fn samples(
        &self,
        x0: T,
        seed: u64,
        range: std::ops::Range<usize>,
    ) -> Result<Vec<T>, MlmcError> {
        range
            .into_par_iter()
            .map(|i| self.sample(x0, seed, i as u64))
            .collect()
    }

    fn steps_per_sample(&self) -> u64 {
        let n = self.fine.n_steps as u64;
        if self.coarse_kernel.is_some() {
            n + n / 2
        } else {
            n
        }
    }
}

/// Warm-up on every level, one Giles allocation, then top-up to `N_l` samples.
pub fn mlmc_estimate<T: Real>(
    model: &ZcbModel<T>,
    cfg: &MlmcConfig,
) -> Result<MlmcResult<T>, MlmcError> {
    cfg.validate()?;
    let started = Instant::now();
    let cev = model.cev_model()?;
    cfg.scheme.check(&cev)?;
    let n_levels = level_count(cfg.epsilon, cfg.min_levels);
    let levels: Vec<Level<T>> = (0..=n_levels)
        .map(|l| Level::new(&cev, cfg.scheme, l))
        .collect::<Result<_, _>>()?;
    let x0 = cev.x0();

    let mut samples: Vec<Vec<T>> = levels
        .iter()
        .map(|lv| lv.samples(x0, cfg.seed, 0..cfg.warmup_samples))
        .collect::<Result<_, _>>()?;
    let variances: Vec<f64> = samples
        .iter()
        .map(|s| SampleStats::from_samples(s).variance.to_f64_lossy())
        .collect();
    let dts: Vec<f64> = levels
        .iter()
        .map(|lv| lv.fine.dt().to_f64_lossy())
        .collect();
    let targets = giles_allocation(cfg.epsilon, &variances, &dts, cfg.min_trajectories);

    let mut per_level = Vec::with_capacity(levels.len());
    let mut total_fine_steps = 0u64;
    for ((lv, s), &n) in levels.iter().zip(samples.iter_mut()).zip(&targets) {
        if n > s.len() {
            let extra = lv.samples(x0, cfg.seed, s.len()..n)?;
            s.extend(extra);
        }
        let st = SampleStats::from_samples(s);
        total_fine_steps += lv.steps_per_sample() * s.len() as u64;
        per_level.push(LevelStats {
            dt: lv.fine.dt(),
            n_samples: s.len(),
            variance: st.variance,
            mean_correction: st.mean,
        });
    }
    let means: Vec<T> = per_level.iter().map(|l| l.mean_correction).collect();
    let estimator = pairwise_sum(&means);
    let closed_form = zcb_closed_form(model);
    Ok(MlmcResult {
        epsilon: cfg.epsilon,
        scheme: cfg.scheme,
        levels: n_levels,
        per_level,
        estimator,
        closed_form,
        observed_error: (estimator - closed_form).abs(),
        total_fine_steps,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
