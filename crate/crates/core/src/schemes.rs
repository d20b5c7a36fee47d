//! One-step kernels and path simulators.
//!
//! All Milstein-type kernels first form the raw increment
//!
//! ```text
//! z = x + b(x) dt + sigma x^alpha dW + (alpha sigma^2 / 2) x^(2 alpha - 1) (dW^2 - dt)
//! ```
//!
//! and then map it back to `[0, inf)`: SMS takes `|z|`, PMS takes `max(z, 0)`.
//! SES drops the last term before reflecting. AIS is the explicit root of the
//! drift-implicit scheme on `Y = sqrt(X)` and only exists for CIR.
//!
//! Powers follow `x^0 = 1` for every `x >= 0` and `0^e = 0` for `e > 0`, so at
//! alpha = 1/2 the Milstein coefficient is the constant `sigma^2 / 4`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{CevModel, DriftSpec, ModelError};
use crate::paths::{BrownianGrid, GridSpec};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("{scheme} does not support this model: {reason}")]
    UnsupportedParameters { scheme: SchemeId, reason: String },
    #[error("step size must be finite and > 0")]
    InvalidStep,
    #[error("transformed state hit 0 at step {step}, cannot invert")]
    ZeroStateInversion { step: usize },
    #[error("horizon mismatch: model T = {model}, grid T = {grid}")]
    HorizonMismatch { model: f64, grid: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    /// Symmetrized Milstein.
    Sms,
    /// Projected Milstein.
    Pms,
    /// Symmetrized Euler.
    Ses,
    /// Drift-implicit square-root Euler (CIR only).
    Ais,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::Sms, SchemeId::Pms, SchemeId::Ses, SchemeId::Ais];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Sms => "SMS",
            SchemeId::Pms => "PMS",
            SchemeId::Ses => "SES",
            SchemeId::Ais => "AIS",
        }
    }

    /// Checks that the scheme is defined for `model`.
    pub fn check<T: Real>(self, model: &CevModel<T>) -> Result<(), SchemeError> {
        if self != SchemeId::Ais {
            return Ok(());
        }
        let unsupported = |reason: &str| SchemeError::UnsupportedParameters {
            scheme: self,
            reason: reason.into(),
        };
        if !model.is_square_root() {
            return Err(unsupported("alpha must be 1/2"));
        }
        let Some((a, _)) = model.drift().linear_coefficients() else {
            return Err(unsupported("drift must be linear"));
        };
        if !(T::lit(4.0) * a > model.sigma() * model.sigma()) {
            return Err(unsupported("requires 4 b(0) > sigma^2"));
        }
        Ok(())
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sms" => Ok(SchemeId::Sms),
            "pms" => Ok(SchemeId::Pms),
            "ses" => Ok(SchemeId::Ses),
            "ais" => Ok(SchemeId::Ais),
            other => Err(format!(
                "unknown scheme `{other}` (expected sms, pms, ses or ais)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome<T> {
    pub next_state: T,
    /// Raw increment before reflection or projection.
    pub pre_reflection_z: T,
    /// `pre_reflection_z <= 0`; always false for AIS.
    pub reflected: bool,
}

#[derive(Clone, Copy, Debug)]
enum Powers {
    /// alpha = 1/2: `x^alpha = sqrt(x)`, `x^(2alpha-1) = 1`.
    SquareRoot,
    General,
}

/// Step kernel with every `dt`-dependent coefficient precomputed.
#[derive(Clone, Debug)]
pub struct StepKernel<T> {
    scheme: SchemeId,
    drift: DriftSpec<T>,
    dt: T,
    sigma: T,
    alpha: T,
    powers: Powers,
    /// `alpha sigma^2 / 2`
    milstein: T,
    ais: Option<AisCoefficients<T>>,
}

#[derive(Clone, Copy, Debug)]
struct AisCoefficients<T> {
    half_sigma: T,
    /// `2 (1 + b dt / 2)`
    denominator: T,
    /// `4 (1 + b dt / 2)(a - sigma^2/4)(dt/2)`
    radicand_shift: T,
}

impl<T: Real> StepKernel<T> {
    pub fn new(scheme: SchemeId, model: &CevModel<T>, dt: T) -> Result<Self, SchemeError> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(SchemeError::InvalidStep);
        }
        scheme.check(model)?;
        let sigma = model.sigma();
        let alpha = model.alpha();
        let two = T::lit(2.0);
        let ais = if scheme == SchemeId::Ais {
            let (a, b) = model.drift().linear_coefficients().expect("checked linear");
            let implicit = T::one() + b * dt / two;
            if !(implicit > T::zero()) {
                return Err(SchemeError::UnsupportedParameters {
                    scheme,
                    reason: "requires 1 + b dt / 2 > 0".into(),
                });
            }
            Some(AisCoefficients {
                half_sigma: sigma / two,
                denominator: two * implicit,
                radicand_shift: T::lit(4.0)
                    * implicit
                    * (a - sigma * sigma / T::lit(4.0))
                    * (dt / two),
            })
        } else {
            None
        };
        Ok(Self {
            scheme,
            drift: model.drift().clone(),
            dt,
            sigma,
            alpha,
            powers: if model.is_square_root() {
                Powers::SquareRoot
            } else {
                Powers::General
            },
            milstein: alpha * sigma * sigma / two,
            ais,
        })
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// `(x^alpha, x^(2 alpha - 1))`
    #[inline]
    fn powers(&self, x: T) -> (T, T) {
        match self.powers {
            Powers::SquareRoot => (x.sqrt(), T::one()),
            Powers::General => {
                if x == T::zero() {
                    (T::zero(), T::zero())
                } else {
                    (
                        x.powf(self.alpha),
                        x.powf(T::lit(2.0) * self.alpha - T::one()),
                    )
                }
            }
        }
    }

    /// Diffusion coefficient `sigma x^alpha` and Milstein slope `alpha sigma^2 x^(2alpha-1)`.
    #[inline]
    pub fn diffusion_terms(&self, x: T) -> (T, T) {
        let (xa, x2a) = self.powers(x);
        (self.sigma * xa, T::lit(2.0) * self.milstein * x2a)
    }

    #[inline]
    pub fn step(&self, x: T, dw: T) -> StepOutcome<T> {
        match self.scheme {
            SchemeId::Ais => {
                let c = self.ais.as_ref().expect("AIS coefficients");
                let shifted = x.sqrt() + c.half_sigma * dw;
                let root = (shifted * shifted + c.radicand_shift).sqrt();
                let y = if shifted >= T::zero() {
                    (shifted + root) / c.denominator
                } else {
                    c.radicand_shift / (c.denominator * (root - shifted))
                };
                StepOutcome {
                    next_state: y * y,
                    pre_reflection_z: y * y,
                    reflected: false,
                }
            }
            scheme => {
                let (xa, x2a) = self.powers(x);
                let mut z = x + self.drift.eval(x) * self.dt + self.sigma * xa * dw;
                if scheme != SchemeId::Ses {
                    z = z + self.milstein * x2a * (dw * dw - self.dt);
                }
                let next_state = match scheme {
                    SchemeId::Pms => z.max(T::zero()),
                    _ => z.abs(),
                };
                StepOutcome {
                    next_state,
                    pre_reflection_z: z,
                    reflected: z <= T::zero(),
                }
            }
        }
    }
}

pub fn sms_step<T: Real>(
    model: &CevModel<T>,
    dt: T,
    x: T,
    dw: T,
) -> Result<StepOutcome<T>, SchemeError> {
    Ok(StepKernel::new(SchemeId::Sms, model, dt)?.step(x, dw))
}

pub fn pms_step<T: Real>(
    model: &CevModel<T>,
    dt: T,
    x: T,
    dw: T,
) -> Result<StepOutcome<T>, SchemeError> {
    Ok(StepKernel::new(SchemeId::Pms, model, dt)?.step(x, dw))
}

pub fn ses_step<T: Real>(
    model: &CevModel<T>,
    dt: T,
    x: T,
    dw: T,
) -> Result<StepOutcome<T>, SchemeError> {
    Ok(StepKernel::new(SchemeId::Ses, model, dt)?.step(x, dw))
}

pub fn ais_step<T: Real>(
    model: &CevModel<T>,
    dt: T,
    x: T,
    dw: T,
) -> Result<StepOutcome<T>, SchemeError> {
    Ok(StepKernel::new(SchemeId::Ais, model, dt)?.step(x, dw))
}

/// Grid values of a simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemePath<T> {
    pub grid: GridSpec<T>,
    pub states: Vec<T>,
    pub reflect_count: usize,
    /// Trapezoidal approximation of the time integral of the path over `[0, T]`.
    pub integral_trapezoid: T,
}

impl<T: Real> SchemePath<T> {
    /// Builds a path from given grid values (`states.len() == n_steps + 1`).
    pub fn from_states(grid: GridSpec<T>, states: Vec<T>, reflect_count: usize) -> Self {
        assert_eq!(states.len(), grid.n_steps + 1, "one state per grid point");
        let mut acc = TrapezoidAccumulator::new(states[0]);
        for &x in &states[1..] {
            acc.push(x);
        }
        let integral_trapezoid = acc.finish(grid.dt());
        Self {
            grid,
            states,
            reflect_count,
            integral_trapezoid,
        }
    }

    pub fn terminal(&self) -> T {
        *self.states.last().expect("nonempty path")
    }

    /// CSV with header `step,time,state`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,time,state")?;
        for (k, x) in self.states.iter().enumerate() {
            writeln!(w, "{},{},{}", k, self.grid.time(k), x)?;
        }
        Ok(())
    }
}

/// Terminal value, trapezoidal integral and reflection count without storing the path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSummary<T> {
    pub terminal: T,
    pub integral_trapezoid: T,
    pub reflect_count: usize,
}

struct TrapezoidAccumulator<T> {
    prev: T,
    sum: T,
}

impl<T: Real> TrapezoidAccumulator<T> {
    fn new(x0: T) -> Self {
        Self {
            prev: x0,
            sum: T::zero(),
        }
    }

    #[inline]
    fn push(&mut self, x: T) {
        self.sum = self.sum + (self.prev + x) / T::lit(2.0);
        self.prev = x;
    }

    fn finish(&self, dt: T) -> T {
        dt * self.sum
    }
}

fn kernel_for<T: Real>(
    scheme: SchemeId,
    model: &CevModel<T>,
    grid: GridSpec<T>,
) -> Result<StepKernel<T>, SchemeError> {
    let (mt, gt) = (model.horizon(), grid.horizon);
    if (mt - gt).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(16.0)) * mt {
        return Err(SchemeError::HorizonMismatch {
            model: mt.to_f64_lossy(),
            grid: gt.to_f64_lossy(),
        });
    }
    StepKernel::new(scheme, model, grid.dt())
}

/// Folds the step kernel of `scheme` over the increments of `brownian`.
pub fn simulate_path<T: Real>(
    scheme: SchemeId,
    model: &CevModel<T>,
    brownian: &BrownianGrid<T>,
) -> Result<SchemePath<T>, SchemeError> {
    let grid = brownian.spec();
    let kernel = kernel_for(scheme, model, grid)?;
    let mut states = Vec::with_capacity(grid.n_steps + 1);
    let mut x = model.x0();
    states.push(x);
    let mut reflect_count = 0;
    for &dw in brownian.increments() {
        let out = kernel.step(x, dw);
        reflect_count += usize::from(out.reflected);
        x = out.next_state;
        states.push(x);
    }
    Ok(SchemePath::from_states(grid, states, reflect_count))
}

/// [`simulate_path`] without materializing the states.
pub fn simulate_summary<T: Real>(
    scheme: SchemeId,
    model: &CevModel<T>,
    brownian: &BrownianGrid<T>,
) -> Result<PathSummary<T>, SchemeError> {
    let kernel = kernel_for(scheme, model, brownian.spec())?;
    Ok(summarize(&kernel, model.x0(), brownian.increments()))
}

pub(crate) fn summarize<T: Real>(
    kernel: &StepKernel<T>,
    x0: T,
    increments: &[T],
) -> PathSummary<T> {
    let mut x = x0;
    let mut acc = TrapezoidAccumulator::new(x0);
    let mut reflect_count = 0;
    for &dw in increments {
        let out = kernel.step(x, dw);
        reflect_count += usize::from(out.reflected);
        x = out.next_state;
        acc.push(x);
    }
    PathSummary {
        terminal: x,
        integral_trapezoid: acc.finish(kernel.dt),
        reflect_count,
    }
}

/// Terminal state only.
pub fn simulate_terminal<T: Real>(
    scheme: SchemeId,
    model: &CevModel<T>,
    brownian: &BrownianGrid<T>,
) -> Result<T, SchemeError> {
    let kernel = kernel_for(scheme, model, brownian.spec())?;
    let mut x = model.x0();
    for &dw in brownian.increments() {
        x = kernel.step(x, dw).next_state;
    }
    Ok(x)
}

/// The 3/2 model `dr = c1 r (c2 - r) dt + c3 r^(3/2) dW`, `r_0 = r0`.
///
/// `v = 1/r` solves the CIR equation `dv = (c1 + c3^2 - c1 c2 v) dt + c3 sqrt(v) dB`
/// with `B = -W`; the model is simulated as SMS on `v` and inverted pathwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeHalvesModel<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub r0: T,
    pub horizon: T,
}

impl<T: Real> ThreeHalvesModel<T> {
    pub fn new(c1: T, c2: T, c3: T, r0: T, horizon: T) -> Result<Self, SchemeError> {
        for (name, v) in [("c1", c1), ("c2", c2), ("c3", c3), ("r0", r0)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: "must be finite and > 0".into(),
                }
                .into());
            }
        }
        let m = Self {
            c1,
            c2,
            c3,
            r0,
            horizon,
        };
        m.induced_model()?;
        Ok(m)
    }

    /// CIR model of `v = 1/r`.
    pub fn induced_model(&self) -> Result<CevModel<T>, ModelError> {
        CevModel::new(
            T::one() / self.r0,
            self.c3,
            T::lit(0.5),
            DriftSpec::linear(self.c1 + self.c3 * self.c3, self.c1 * self.c2),
            self.horizon,
        )
    }
}

/// Simulates `r = 1/v` with SMS on `v`, driven by the negated increments of `brownian`.
pub fn simulate_three_halves<T: Real>(
    model: &ThreeHalvesModel<T>,
    brownian: &BrownianGrid<T>,
) -> Result<SchemePath<T>, SchemeError> {
    let v = simulate_path(SchemeId::Sms, &model.induced_model()?, &brownian.negated())?;
    let states = v
        .states
        .iter()
        .enumerate()
        .map(|(step, &x)| {
            if x == T::zero() {
                Err(SchemeError::ZeroStateInversion { step })
            } else {
                Ok(T::one() / x)
            }
        })
        .collect::<Result<Vec<T>, _>>()?;
    Ok(SchemePath::from_states(v.grid, states, v.reflect_count))
}

/// Terminal value of [`simulate_three_halves`].
pub fn three_halves_terminal<T: Real>(
    model: &ThreeHalvesModel<T>,
    brownian: &BrownianGrid<T>,
) -> Result<T, SchemeError> {
    let cir = model.induced_model()?;
    let kernel = kernel_for(SchemeId::Sms, &cir, brownian.spec())?;
    let mut v = cir.x0();
    for (step, &dw) in brownian.increments().iter().enumerate() {
        v = kernel.step(v, -dw).next_state;
        if v == T::zero() {
            return Err(SchemeError::ZeroStateInversion { step: step + 1 });
        }
    }
    Ok(T::one() / v)
}
