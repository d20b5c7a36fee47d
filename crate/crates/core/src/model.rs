//! SDE parameterization, hypothesis checks and derived step-size constants.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::Real;

/// Below this value of `|2 alpha - 1|` the `alpha = 1/2` limits are used.
const HALF_ALPHA_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("custom drift evaluates to {evaluated} at 0 but declares b(0) = {declared}")]
    DriftMismatch { evaluated: f64, declared: f64 },
    /// `b(0) <= 2 alpha (1-alpha)^2 sigma^2`; `x_bar` and the maximal step are undefined.
    #[error("b_sigma(alpha) = {b_sigma_alpha} is not positive (k_alpha = {k_alpha})")]
    NonPositiveBSigma { b_sigma_alpha: f64, k_alpha: f64 },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub type DriftFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// User supplied drift. The Lipschitz constant and `b(0)` are declared, only
/// `b(0)` is cross-checked against the evaluator.
#[derive(Clone)]
pub struct CustomDrift<T> {
    evaluator: DriftFn<T>,
    lipschitz_k: T,
    b_at_zero: T,
}

impl<T: Real> CustomDrift<T> {
    pub fn new<F>(evaluator: F, lipschitz_k: T, b_at_zero: T) -> Result<Self, ModelError>
    where
        F: Fn(T) -> T + Send + Sync + 'static,
    {
        if !(lipschitz_k >= T::zero()) || !lipschitz_k.is_finite() {
            return Err(invalid("drift.lipschitz_k", "must be finite and >= 0"));
        }
        if !(b_at_zero > T::zero()) || !b_at_zero.is_finite() {
            return Err(invalid("drift.b_at_zero", "must be finite and > 0"));
        }
        let at_zero = evaluator(T::zero());
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(4.0)) * b_at_zero.abs();
        if !((at_zero - b_at_zero).abs() <= tol) {
            return Err(ModelError::DriftMismatch {
                evaluated: at_zero.to_f64_lossy(),
                declared: b_at_zero.to_f64_lossy(),
            });
        }
        Ok(Self {
            evaluator: Arc::new(evaluator),
            lipschitz_k,
            b_at_zero,
        })
    }
}

/// Drift coefficient `b`.
#[derive(Clone)]
pub enum DriftSpec<T> {
    /// `b(x) = a - b x`.
    Linear {
        a: T,
        b: T,
    },
    Custom(CustomDrift<T>),
}

impl<T: Real> DriftSpec<T> {
    pub fn linear(a: T, b: T) -> Self {
        DriftSpec::Linear { a, b }
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        match self {
            DriftSpec::Linear { a, b } => *a - *b * x,
            DriftSpec::Custom(c) => (c.evaluator)(x),
        }
    }

    /// Lipschitz constant `K`.
    pub fn lipschitz_k(&self) -> T {
        match self {
            DriftSpec::Linear { b, .. } => b.abs(),
            DriftSpec::Custom(c) => c.lipschitz_k,
        }
    }

    pub fn at_zero(&self) -> T {
        match self {
            DriftSpec::Linear { a, .. } => *a,
            DriftSpec::Custom(c) => c.b_at_zero,
        }
    }

    /// `(a, b)` for a linear drift.
    pub fn linear_coefficients(&self) -> Option<(T, T)> {
        match self {
            DriftSpec::Linear { a, b } => Some((*a, *b)),
            DriftSpec::Custom(_) => None,
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for DriftSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSpec::Linear { a, b } => f
                .debug_struct("Linear")
                .field("a", a)
                .field("b", b)
                .finish(),
            DriftSpec::Custom(c) => f
                .debug_struct("Custom")
                .field("lipschitz_k", &c.lipschitz_k)
                .field("b_at_zero", &c.b_at_zero)
                .finish_non_exhaustive(),
        }
    }
}

/// `dX = b(X) dt + sigma |X|^alpha dW` on `[0, horizon]`, `X_0 = x0`.
#[derive(Clone, Debug)]
pub struct CevModel<T> {
    x0: T,
    sigma: T,
    alpha: T,
    drift: DriftSpec<T>,
    horizon: T,
}

impl<T: Real> CevModel<T> {
    pub fn new(
        x0: T,
        sigma: T,
        alpha: T,
        drift: DriftSpec<T>,
        horizon: T,
    ) -> Result<Self, ModelError> {
        if !(x0 > T::zero()) || !x0.is_finite() {
            return Err(invalid("x0", "must be finite and > 0"));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(invalid("sigma", "must be finite and > 0"));
        }
        if !(alpha >= T::lit(0.5) && alpha < T::one()) {
            return Err(invalid("alpha", "must lie in [0.5, 1)"));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(invalid("T", "must be finite and > 0"));
        }
        if let DriftSpec::Linear { a, b } = &drift {
            if !(*a > T::zero()) || !a.is_finite() {
                return Err(invalid("drift.a", "must be finite and > 0 (b(0) > 0)"));
            }
            if !b.is_finite() {
                return Err(invalid("drift.b", "must be finite"));
            }
        }
        if !(drift.at_zero() > T::zero()) {
            return Err(invalid("drift", "b(0) must be > 0"));
        }
        Ok(Self {
            x0,
            sigma,
            alpha,
            drift,
            horizon,
        })
    }

    pub fn x0(&self) -> T {
        self.x0
    }
    pub fn sigma(&self) -> T {
        self.sigma
    }
    pub fn alpha(&self) -> T {
        self.alpha
    }
    pub fn drift(&self) -> &DriftSpec<T> {
        &self.drift
    }
    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// True when alpha is (numerically) one half.
    pub fn is_square_root(&self) -> bool {
        ((T::lit(2.0) * self.alpha - T::one()).abs()) < T::lit(HALF_ALPHA_TOL)
    }

    pub fn with_x0(&self, x0: T) -> Result<Self, ModelError> {
        Self::new(x0, self.sigma, self.alpha, self.drift.clone(), self.horizon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedConstants<T> {
    pub b_sigma_alpha: T,
    pub k_alpha: T,
    pub x_bar_alpha: T,
    /// Largest step size covered by the order-one rate.
    pub delta_max: T,
}

/// `b(0) - 2 (1-alpha)^2 alpha sigma^2`; equals `b(0) - sigma^2/4` at one half.
pub fn b_sigma_alpha<T: Real>(model: &CevModel<T>) -> T {
    let alpha = model.alpha;
    let one_minus = T::one() - alpha;
    model.drift.at_zero() - T::lit(2.0) * one_minus * one_minus * alpha * model.sigma * model.sigma
}

/// `K + (alpha sigma^2 / 2)(2alpha-1)[2(1-alpha)]^(-2(1-alpha)/(2alpha-1))`, with
/// the limit `K` at one half.
pub fn k_alpha<T: Real>(model: &CevModel<T>) -> T {
    let k = model.drift.lipschitz_k();
    let alpha = model.alpha;
    let two = T::lit(2.0);
    let gap = two * alpha - T::one();
    if gap.abs() < T::lit(HALF_ALPHA_TOL) {
        return k;
    }
    let one_minus = T::one() - alpha;
    // log/exp form of the power avoids 0/0 near one half
    let power = (-(two * one_minus) / gap * (two * one_minus).ln()).exp();
    k + alpha * model.sigma * model.sigma / two * gap * power
}

/// Computes `b_sigma(alpha)`, `K(alpha)`, `x_bar(alpha)` and the maximal step.
pub fn derive_constants<T: Real>(model: &CevModel<T>) -> Result<DerivedConstants<T>, ModelError> {
    let b_sigma = b_sigma_alpha(model);
    let k_a = k_alpha(model);
    if !(b_sigma > T::zero()) {
        return Err(ModelError::NonPositiveBSigma {
            b_sigma_alpha: b_sigma.to_f64_lossy(),
            k_alpha: k_a.to_f64_lossy(),
        });
    }
    let reflection_bound = model.x0 / ((T::one() - model.alpha.sqrt()) * b_sigma);
    let delta_max = reflection_bound.min(lipschitz_step_bound(model, k_a));
    Ok(DerivedConstants {
        b_sigma_alpha: b_sigma,
        k_alpha: k_a,
        x_bar_alpha: b_sigma / k_a,
        delta_max,
    })
}

/// The `b_sigma`-independent part of the maximal step.
fn lipschitz_step_bound<T: Real>(model: &CevModel<T>, k_a: T) -> T {
    let four = T::lit(4.0);
    if model.is_square_root() {
        // K = 0 gives +inf, leaving x0 as the bound
        (T::one() / (four * model.drift.lipschitz_k())).min(model.x0)
    } else {
        T::one() / (four * model.alpha * k_a)
    }
}

/// Base step for experiment ladders: the maximal step when it is defined,
/// otherwise only its Lipschitz part (models with `b_sigma(alpha) <= 0`).
pub fn base_step<T: Real>(model: &CevModel<T>) -> T {
    match derive_constants(model) {
        Ok(c) => c.delta_max,
        Err(_) => lipschitz_step_bound(model, k_alpha(model)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    /// alpha in [1/2, 1), `b(0) > 0` and a finite nonnegative Lipschitz constant.
    pub h1_ok: bool,
    /// Parameter condition on `b(0)` for the rate in `L^p`, keyed by `p`.
    pub h2_i_ok_for_p: BTreeMap<u32, bool>,
    /// Same, in the `3(2p+1) sigma^2 / 2` form used by the corrected local error
    /// bound (no `p v 2`). Only differs from `h2_i_ok_for_p` at alpha = 1/2, p = 1.
    pub corrected_local_error_ok_for_p: BTreeMap<u32, bool>,
    /// Smoothness of `b` (C^2 with polynomially growing `b''`) is taken on
    /// trust. False for linear drifts, where it holds trivially.
    pub h2_ii_assumed: bool,
    pub notes: String,
}

/// Evaluates the parameter conditions for moment order `p`. Never fails: the
/// conditions are sufficient, and experiments deliberately run outside them.
pub fn check_hypotheses<T: Real>(model: &CevModel<T>, p: u32) -> HypothesisReport {
    let p = p.max(1);
    let b0 = model.drift.at_zero();
    let k = model.drift.lipschitz_k();
    let s2 = model.sigma * model.sigma;
    let h1_ok = model.alpha >= T::lit(0.5)
        && model.alpha < T::one()
        && b0 > T::zero()
        && k >= T::zero()
        && k.is_finite();

    let (h2, corrected_ok, rule) = if model.is_square_root() {
        let bound = |q: u32| T::lit(3.0) * T::lit((2 * q + 1) as f64) * s2 / T::lit(2.0);
        (
            b0 > bound(p.max(2)),
            b0 > bound(p),
            "b(0) > 3(2[p v 2]+1) sigma^2 / 2",
        )
    } else {
        let one_minus = T::one() - model.alpha;
        let ok = b0 > T::lit(2.0) * model.alpha * one_minus * one_minus * s2;
        (ok, ok, "b(0) > 2 alpha (1-alpha)^2 sigma^2")
    };

    let mut notes = format!("h2(i) rule: {rule}");
    if !h2 {
        notes.push_str(&format!(
            "; p = {p} condition violated, order one is not guaranteed"
        ));
    }
    let h2_ii_assumed = matches!(model.drift, DriftSpec::Custom(_));
    if h2_ii_assumed {
        notes.push_str("; smoothness of the custom drift is assumed, not verified");
    }

    HypothesisReport {
        h1_ok,
        h2_i_ok_for_p: BTreeMap::from([(p, h2)]),
        corrected_local_error_ok_for_p: BTreeMap::from([(p, corrected_ok)]),
        h2_ii_assumed,
        notes,
    }
}

/// `b(x)`, for `x >= 0`.
#[inline]
pub fn drift_eval<T: Real>(drift: &DriftSpec<T>, x: T) -> T {
    drift.eval(x)
}
