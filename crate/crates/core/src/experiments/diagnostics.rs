use std::io::{self, Write};

use rayon::prelude::*;

use crate::model::{base_step, derive_constants, CevModel};
use crate::paths::{BrownianGrid, GridSpec};
use crate::rng::SeedId;
use crate::schemes::{SchemeId, StepKernel};
use crate::stats::pairwise_sum;
use crate::Real;

use super::{ols_loglog, streams, ExperimentError};

/// Per-step-size diagnostic statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow<T> {
    pub dt: T,
    /// RMS of `X_{k+1} - X_k` over all steps.
    pub local_error_rms: T,
    /// RMS of `sigma X_{k+1}^a - sigma X_k^a - a sigma^2 X_k^(2a-1) dW_k`.
    pub corrected_local_error_rms: T,
    /// Fraction of SMS steps with a non-positive raw increment.
    pub sign_flip_freq: T,
    /// Fraction of trajectories on which PMS and SMS differ somewhere.
    pub pms_sms_divergence_freq: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport<T> {
    pub local_error_slope: T,
    pub corrected_local_error_slope: T,
    pub sign_flip_freq_by_dt: Vec<(T, T)>,
    pub pms_sms_divergence_freq_by_dt: Vec<(T, T)>,
    pub rows: Vec<DiagnosticsRow<T>>,
}

impl<T: Real> DiagnosticsReport<T> {
    /// `dt,local_error_rms,corrected_local_error_rms,sign_flip_freq,pms_sms_divergence_freq`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "dt,local_error_rms,corrected_local_error_rms,sign_flip_freq,pms_sms_divergence_freq"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.dt,
                r.local_error_rms,
                r.corrected_local_error_rms,
                r.sign_flip_freq,
                r.pms_sms_divergence_freq
            )?;
        }
        Ok(())
    }
}

/// `dt = T / (N0 2^n)` for each exponent, `N0` the step count of the model's base step.
pub fn diagnostic_ladder<T: Real>(
    model: &CevModel<T>,
    exponents: impl IntoIterator<Item = u32>,
) -> Vec<T> {
    let ratio = (model.horizon() / base_step(model)).to_f64_lossy();
    let n0 = (ratio * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    exponents
        .into_iter()
        .map(|n| model.horizon() / T::from_count(n0 << n))
        .collect()
}

struct TrajectoryStats<T> {
    local_sq: T,
    corrected_sq: T,
    flips: usize,
    diverged: bool,
}

/// One-step error orders and reflection frequencies of SMS (with PMS run on the
/// same increments). Sign flips are observed at grid points only.
pub fn run_diagnostics<T: Real>(
    model: &CevModel<T>,
    dt_ladder: &[T],
    n_trajectories: usize,
    seed: u64,
) -> Result<DiagnosticsReport<T>, ExperimentError> {
    if n_trajectories == 0 {
        return Err(ExperimentError::InvalidConfig(
            "n_trajectories must be >= 1".into(),
        ));
    }
    let horizon = model.horizon();
    let delta_max = derive_constants(model).ok().map(|c| c.delta_max);
    let mut rows = Vec::with_capacity(dt_ladder.len());
    for (level, &dt) in dt_ladder.iter().enumerate() {
        if !(dt > T::zero()) {
            return Err(ExperimentError::InvalidConfig(format!(
                "step {dt} must be > 0"
            )));
        }
        if let Some(max) = delta_max {
            if dt > max * (T::one() + T::lit(1e-12)) {
                return Err(ExperimentError::InvalidConfig(format!(
                    "step {dt} exceeds the maximal step {max}"
                )));
            }
        }
        let n_steps = (horizon / dt).round().to_usize().unwrap_or(0);
        if n_steps == 0 || (T::from_count(n_steps) * dt - horizon).abs() > T::lit(1e-9) * horizon {
            return Err(ExperimentError::InvalidConfig(format!(
                "step {dt} does not divide the horizon"
            )));
        }
        let spec = GridSpec::new(horizon, n_steps)?;
        let sms = StepKernel::new(SchemeId::Sms, model, spec.dt())?;
        let pms = StepKernel::new(SchemeId::Pms, model, spec.dt())?;
        let stream = streams::DIAGNOSTICS + level as u32;

        let per_path: Vec<TrajectoryStats<T>> = (0..n_trajectories)
            .into_par_iter()
            .map(|i| {
                let grid = BrownianGrid::generate(spec, SeedId::new(seed, stream, i as u64));
                let (mut x, mut y) = (model.x0(), model.x0());
                let mut s = TrajectoryStats {
                    local_sq: T::zero(),
                    corrected_sq: T::zero(),
                    flips: 0,
                    diverged: false,
                };
                for &dw in grid.increments() {
                    let out = sms.step(x, dw);
                    let (diff_now, slope_now) = sms.diffusion_terms(x);
                    let (diff_next, _) = sms.diffusion_terms(out.next_state);
                    let local = out.next_state - x;
                    let corrected = diff_next - diff_now - slope_now * dw;
                    s.local_sq = s.local_sq + local * local;
                    s.corrected_sq = s.corrected_sq + corrected * corrected;
                    s.flips += usize::from(out.reflected);
                    y = pms.step(y, dw).next_state;
                    x = out.next_state;
                    s.diverged |= x != y;
                }
                s
            })
            .collect();

        let total_steps = T::from_count(n_trajectories * n_steps);
        let local: Vec<T> = per_path.iter().map(|s| s.local_sq).collect();
        let corrected: Vec<T> = per_path.iter().map(|s| s.corrected_sq).collect();
        let flips: usize = per_path.iter().map(|s| s.flips).sum();
        let diverged = per_path.iter().filter(|s| s.diverged).count();
        rows.push(DiagnosticsRow {
            dt: spec.dt(),
            local_error_rms: (pairwise_sum(&local) / total_steps).sqrt(),
            corrected_local_error_rms: (pairwise_sum(&corrected) / total_steps).sqrt(),
            sign_flip_freq: T::from_count(flips) / total_steps,
            pms_sms_divergence_freq: T::from_count(diverged) / T::from_count(n_trajectories),
        });
    }

    let local_fit = ols_loglog(
        &rows
            .iter()
            .map(|r| (r.dt, r.local_error_rms))
            .collect::<Vec<_>>(),
    )?;
    let corrected_fit = ols_loglog(
        &rows
            .iter()
            .map(|r| (r.dt, r.corrected_local_error_rms))
            .collect::<Vec<_>>(),
    )?;
    Ok(DiagnosticsReport {
        local_error_slope: local_fit.slope,
        corrected_local_error_slope: corrected_fit.slope,
        sign_flip_freq_by_dt: rows.iter().map(|r| (r.dt, r.sign_flip_freq)).collect(),
        pms_sms_divergence_freq_by_dt: rows
            .iter()
            .map(|r| (r.dt, r.pms_sms_divergence_freq))
            .collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DriftSpec;

    fn cir() -> CevModel<f64> {
        CevModel::new(1.0, 1.0, 0.5, DriftSpec::linear(10.0, 10.0), 1.0).unwrap()
    }

    #[test]
    fn ladder_divides_horizon() {
        let dts = diagnostic_ladder(&cir(), 3..=6);
        assert_eq!(
            dts,
            vec![1.0 / 320.0, 1.0 / 640.0, 1.0 / 1280.0, 1.0 / 2560.0]
        );
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(run_diagnostics(&cir(), &[0.03, 0.01], 10, 1).is_err());
        assert!(run_diagnostics(&cir(), &[0.0123, 0.01], 10, 1).is_err());
        assert!(run_diagnostics(&cir(), &[0.01, 0.01], 10, 1).is_err());
    }

    #[test]
    fn frequencies_in_unit_interval() {
        let m = CevModel::new(1.0, 6.0, 0.5, DriftSpec::linear(10.0, 10.0), 1.0).unwrap();
        let r = run_diagnostics(&m, &diagnostic_ladder(&m, 1..=3), 200, 9).unwrap();
        for (_, f) in r
            .sign_flip_freq_by_dt
            .iter()
            .chain(&r.pms_sms_divergence_freq_by_dt)
        {
            assert!((0.0..=1.0).contains(f));
        }
        // sigma^2 = 36 reflects often enough to be seen
        assert!(r.sign_flip_freq_by_dt[0].1 > 0.0);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }
}
