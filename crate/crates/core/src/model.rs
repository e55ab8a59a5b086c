//! Flux, source coefficient, topography and the equilibrium map `D`.
//!
//! `D(s) = ∫_0^s f'(ξ)/b(ξ) dξ` must be strictly increasing onto ℝ with
//! `inf D' > 0`; steady states satisfy `D(u) + z = const`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::profile::{Profile, ScalarFn};
use crate::quadrature;

/// Absolute residual target for `D(s) = y` (scaled up for large `|y|`).
pub const TOL_ROOT: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;
const TOTAL_MAX_ITER: usize = 400;
const ANCHOR_SPACING: f64 = 0.25;
const LIPSCHITZ_SAMPLES: usize = 1 << 12;
const LIPSCHITZ_SAFETY: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    /// `f = u²/2`, `b = u`, `D(s) = s`.
    BurgersHopf,
    /// `f = a u`, `b = a`, `D(s) = s`.
    LinearAdvection {
        velocity: f64,
    },
    Custom,
}

#[derive(Clone)]
pub struct FluxModel {
    kind: ModelKind,
    f: ScalarFn,
    df: ScalarFn,
    b: ScalarFn,
    b_prime_sup: f64,
    d_prime: ScalarFn,
    d_eval: Option<ScalarFn>,
    d_inverse: Option<ScalarFn>,
    d_prime_lower_bound: f64,
    d_identity: bool,
    anchors: Arc<Mutex<AnchorCache>>,
}

impl fmt::Debug for FluxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxModel")
            .field("kind", &self.kind)
            .field("b_prime_sup", &self.b_prime_sup)
            .field("d_prime_lower_bound", &self.d_prime_lower_bound)
            .field("closed_form_d", &self.d_eval.is_some())
            .finish()
    }
}

/// Cumulative values `D(±k h)` for `k = 0, 1, ...`, grown on demand.
#[derive(Default)]
struct AnchorCache {
    positive: Vec<f64>,
    negative: Vec<f64>,
}

/// User-supplied model functions. `d_prime` is a continuous extension of
/// `f'/b`, needed when `b` vanishes somewhere and no closed-form `D` is given.
#[derive(Clone, Default)]
pub struct CustomModel {
    pub f: Option<ScalarFn>,
    pub df: Option<ScalarFn>,
    pub b: Option<ScalarFn>,
    pub b_prime_sup: Option<f64>,
    pub d_prime: Option<ScalarFn>,
    pub d_eval: Option<ScalarFn>,
    pub d_inverse: Option<ScalarFn>,
    pub d_prime_lower_bound: Option<f64>,
}

impl FluxModel {
    pub fn burgers_hopf() -> Self {
        Self {
            kind: ModelKind::BurgersHopf,
            f: Arc::new(|u| 0.5 * u * u),
            df: Arc::new(|u| u),
            b: Arc::new(|u| u),
            b_prime_sup: 1.0,
            d_prime: Arc::new(|_| 1.0),
            d_eval: Some(Arc::new(|s| s)),
            d_inverse: Some(Arc::new(|y| y)),
            d_prime_lower_bound: 1.0,
            d_identity: true,
            anchors: Arc::default(),
        }
    }

    pub fn linear_advection(velocity: f64) -> Result<Self> {
        if !velocity.is_finite() || velocity == 0.0 {
            return Err(Error::AssumptionViolation("linear advection needs a finite nonzero velocity".into()));
        }
        Ok(Self {
            kind: ModelKind::LinearAdvection { velocity },
            f: Arc::new(move |u| velocity * u),
            df: Arc::new(move |_| velocity),
            b: Arc::new(move |_| velocity),
            b_prime_sup: 0.0,
            d_prime: Arc::new(|_| 1.0),
            d_eval: Some(Arc::new(|s| s)),
            d_inverse: Some(Arc::new(|y| y)),
            d_prime_lower_bound: 1.0,
            d_identity: true,
            anchors: Arc::default(),
        })
    }

    /// Builds and validates a user model. `b_prime_sup` defaults to a sampled
    /// finite-difference estimate of `sup |b'|` on `[-50, 50]`.
    pub fn custom(spec: CustomModel) -> Result<Self> {
        let missing = |what: &str| Error::InvalidInput(format!("custom model is missing `{what}`"));
        let f = spec.f.ok_or_else(|| missing("flux"))?;
        let df = spec.df.ok_or_else(|| missing("flux_prime"))?;
        let b = spec.b.ok_or_else(|| missing("source_b"))?;
        let d_prime_lower_bound = spec.d_prime_lower_bound.ok_or_else(|| missing("d_prime_lower_bound"))?;
        if !(d_prime_lower_bound > 0.0) {
            return Err(Error::AssumptionViolation("inf D' must be positive".into()));
        }
        if spec.d_eval.is_some() != spec.d_inverse.is_some() {
            return Err(Error::InvalidInput("closed-form D and D^-1 must be supplied together".into()));
        }
        let b_prime_sup = match spec.b_prime_sup {
            Some(v) if v >= 0.0 => v,
            Some(_) => return Err(Error::InvalidInput("b_prime_sup must be nonnegative".into())),
            None => sampled_derivative_sup(&b, 50.0),
        };
        let d_prime = match spec.d_prime {
            Some(d) => d,
            None => {
                if spec.d_eval.is_none() {
                    if let Some(at) = sign_change(&b, 50.0) {
                        return Err(Error::AssumptionViolation(format!(
                            "b vanishes near u = {at}; supply a closed-form D or a continuous d_prime"
                        )));
                    }
                }
                let (df, b) = (Arc::clone(&df), Arc::clone(&b));
                Arc::new(move |u| df(u) / b(u))
            }
        };
        let model = Self {
            kind: ModelKind::Custom,
            f,
            df,
            b,
            b_prime_sup,
            d_prime,
            d_eval: spec.d_eval,
            d_inverse: spec.d_inverse,
            d_prime_lower_bound,
            d_identity: false,
            anchors: Arc::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Sampled checks of the structural assumptions.
    pub fn validate(&self) -> Result<()> {
        let h = 1e-6;
        for k in -20..=20 {
            let u = 0.25 * k as f64 + 0.0123;
            let fd = ((self.f)(u + h) - (self.f)(u - h)) / (2.0 * h);
            let d = (self.df)(u);
            if !(fd - d).abs().le(&(1e-5 * (1.0 + d.abs()))) {
                return Err(Error::AssumptionViolation(format!(
                    "flux_prime disagrees with a finite difference of flux at u = {u}: {d} vs {fd}"
                )));
            }
        }
        let mut prev = self.evaluate_d(-5.0)?;
        for k in 1..=40 {
            let s = -5.0 + 0.25 * k as f64;
            let cur = self.evaluate_d(s)?;
            if cur - prev < 0.99 * self.d_prime_lower_bound * 0.25 {
                return Err(Error::AssumptionViolation(format!("D grows slower than inf D' on [{}, {s}]", s - 0.25)));
            }
            prev = cur;
        }
        for k in 0..=20 {
            let s = -5.0 + 0.5 * k as f64;
            let back = self.invert_d(self.evaluate_d(s)?)?;
            if (back - s).abs() > 1e-8 * (1.0 + s.abs()) {
                return Err(Error::AssumptionViolation(format!(
                    "D^-1(D({s})) = {back}; closed forms are inconsistent"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::BurgersHopf => 0.5 * u * u,
            _ => (self.f)(u),
        }
    }

    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::BurgersHopf => u,
            ModelKind::LinearAdvection { velocity } => velocity,
            ModelKind::Custom => (self.df)(u),
        }
    }

    #[inline]
    pub fn b(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::BurgersHopf => u,
            ModelKind::LinearAdvection { velocity } => velocity,
            ModelKind::Custom => (self.b)(u),
        }
    }

    pub fn df_fn(&self) -> ScalarFn {
        Arc::clone(&self.df)
    }

    pub fn b_prime_sup(&self) -> f64 {
        self.b_prime_sup
    }

    pub fn d_prime_lower_bound(&self) -> f64 {
        self.d_prime_lower_bound
    }

    /// `D` is the identity map (Burgers-Hopf, linear advection).
    pub fn d_is_identity(&self) -> bool {
        self.d_identity
    }

    pub fn d_prime(&self, s: f64) -> f64 {
        (self.d_prime)(s)
    }

    /// `D(s)`, closed form when available, else quadrature from cached anchors.
    pub fn evaluate_d(&self, s: f64) -> Result<f64> {
        if self.d_identity {
            return Ok(s);
        }
        if let Some(d) = &self.d_eval {
            return Ok(d(s));
        }
        if !s.is_finite() {
            return Err(Error::InvalidInput(format!("D evaluated at non-finite {s}")));
        }
        let k = (s.abs() / ANCHOR_SPACING).floor() as usize;
        let anchor_value = self.anchor(k, s < 0.0)?;
        let anchor = (k as f64) * ANCHOR_SPACING * s.signum();
        Ok(anchor_value + self.integrate_d_prime(anchor, s)?)
    }

    fn anchor(&self, k: usize, negative: bool) -> Result<f64> {
        let mut cache = self.anchors.lock().unwrap_or_else(|e| e.into_inner());
        let sign = if negative { -1.0 } else { 1.0 };
        let table = if negative { &mut cache.negative } else { &mut cache.positive };
        if table.is_empty() {
            table.push(0.0);
        }
        while table.len() <= k {
            let i = table.len();
            let a = sign * (i - 1) as f64 * ANCHOR_SPACING;
            let b = sign * i as f64 * ANCHOR_SPACING;
            let step = self.integrate_d_prime(a, b)?;
            let last = table[i - 1];
            table.push(last + step);
        }
        Ok(table[k])
    }

    fn integrate_d_prime(&self, a: f64, b: f64) -> Result<f64> {
        let lower = self.d_prime_lower_bound;
        let violation = std::cell::Cell::new(None);
        let integrand = |x: f64| {
            let v = (self.d_prime)(x);
            if v.is_finite() && v < (1.0 - 1e-9) * lower && violation.get().is_none() {
                violation.set(Some(x));
            }
            v
        };
        let value = quadrature::integrate(integrand, a, b, 1e-15, 1e-13).map_err(|e| match e {
            Error::QuadratureFailure { at } => Error::NonIntegrableSource { at },
            other => other,
        })?;
        if let Some(at) = violation.get() {
            return Err(Error::AssumptionViolation(format!("D'({at}) is below the declared lower bound {lower}")));
        }
        Ok(value)
    }

    /// Unique `s` with `D(s) = y`: safeguarded Newton inside the bracket
    /// `|s| <= |y| / inf D'`, bisection when Newton leaves it or stalls.
    pub fn invert_d(&self, y: f64) -> Result<f64> {
        if self.d_identity {
            return Ok(y);
        }
        if let Some(inv) = &self.d_inverse {
            return Ok(inv(y));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let tol = TOL_ROOT.max(4.0 * f64::EPSILON * y.abs());
        let reach = y.abs() / self.d_prime_lower_bound * (1.0 + 1e-12);
        let (mut lo, mut hi) = if y > 0.0 { (0.0, reach) } else { (-reach, 0.0) };
        let mut s = 0.5 * (lo + hi);
        for iter in 0..TOTAL_MAX_ITER {
            let r = self.evaluate_d(s)? - y;
            if r.abs() <= tol {
                return Ok(s);
            }
            if r > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            if hi - lo <= 2.0 * f64::EPSILON * s.abs().max(f64::MIN_POSITIVE) {
                return Ok(0.5 * (lo + hi));
            }
            let newton = s - r / (self.d_prime)(s);
            s = if iter < NEWTON_MAX_ITER && newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(Error::ConvergenceFailure { target: y, iterations: TOTAL_MAX_ITER })
    }

    /// `sup |f'|` on `[-c, c]`: closed form for the built-in models, otherwise
    /// 2^12 uniform samples inflated by 1%.
    pub fn lipschitz_on(&self, c: f64) -> f64 {
        let c = c.abs();
        match self.kind {
            ModelKind::BurgersHopf => c,
            ModelKind::LinearAdvection { velocity } => velocity.abs(),
            ModelKind::Custom => {
                if c == 0.0 {
                    return (self.df)(0.0).abs();
                }
                let mut sup: f64 = 0.0;
                for k in 0..=LIPSCHITZ_SAMPLES {
                    let u = -c + 2.0 * c * k as f64 / LIPSCHITZ_SAMPLES as f64;
                    sup = sup.max((self.df)(u).abs());
                }
                LIPSCHITZ_SAFETY * sup
            }
        }
    }
}

fn sampled_derivative_sup(g: &ScalarFn, range: f64) -> f64 {
    let n = 4000;
    let h = 1e-5;
    (0..=n)
        .map(|k| -range + 2.0 * range * k as f64 / n as f64)
        .map(|u| ((g(u + h) - g(u - h)) / (2.0 * h)).abs())
        .fold(0.0, f64::max)
}

fn sign_change(g: &ScalarFn, range: f64) -> Option<f64> {
    let n = 4000;
    let mut prev = g(-range);
    for k in 1..=n {
        let u = -range + 2.0 * range * k as f64 / n as f64;
        let v = g(u);
        if v == 0.0 || prev == 0.0 || (v < 0.0) != (prev < 0.0) {
            return Some(u);
        }
        prev = v;
    }
    None
}

/// Elevation profile `z` with the slope bound used by the stability estimates.
#[derive(Clone, Debug)]
pub struct TopographyProfile {
    z: Profile,
    sup_slope: f64,
    nonconforming: bool,
}

impl TopographyProfile {
    pub fn new(z: Profile, sup_slope: f64, nonconforming: bool) -> Result<Self> {
        if !(sup_slope >= 0.0) || !sup_slope.is_finite() {
            return Err(Error::InvalidInput("sup_slope must be finite and nonnegative".into()));
        }
        Ok(Self { z, sup_slope, nonconforming })
    }

    pub fn zero() -> Self {
        Self { z: Profile::constant(0.0), sup_slope: 0.0, nonconforming: false }
    }

    /// `cos(πx)` on `]3/2, 5/2[`, zero elsewhere: continuous with kinks.
    pub fn cos_bump() -> Self {
        Self { z: bump(|x| (PI * x).cos()), sup_slope: PI, nonconforming: false }
    }

    /// `sin(πx)` on `]3/2, 5/2[`, zero elsewhere: jumps of -1 at 3/2 and -1 at 5/2.
    /// The slope bound is a surrogate supplied by the caller.
    pub fn sin_jump(sup_slope: f64) -> Result<Self> {
        Self::new(bump(|x| (PI * x).sin()), sup_slope, true)
    }

    /// Piecewise-linear interpolation of `(xs, values)`, constant outside.
    pub fn tabulated(xs: &[f64], values: &[f64]) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(Error::InvalidInput(
                "tabulated topography needs at least two (x, z) samples of equal length".into(),
            ));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("tabulated abscissas must increase strictly".into()));
        }
        let first = values[0];
        let last = values[values.len() - 1];
        let mut pieces: Vec<ScalarFn> = vec![Arc::new(move |_| first)];
        let mut slope: f64 = 0.0;
        for i in 0..xs.len() - 1 {
            let (x0, x1, z0, z1) = (xs[i], xs[i + 1], values[i], values[i + 1]);
            let m = (z1 - z0) / (x1 - x0);
            slope = slope.max(m.abs());
            pieces.push(Arc::new(move |x| z0 + m * (x - x0)));
        }
        pieces.push(Arc::new(move |_| last));
        let z = Profile::piecewise(xs.to_vec(), pieces)?;
        Self::new(z, slope, false)
    }

    pub fn profile(&self) -> &Profile {
        &self.z
    }

    pub fn z(&self, x: f64) -> f64 {
        self.z.value(x)
    }

    pub fn sup_slope(&self) -> f64 {
        self.sup_slope
    }

    /// `z` is discontinuous, outside the Lipschitz class the theory covers.
    pub fn nonconforming(&self) -> bool {
        self.nonconforming
    }
}

fn bump(inner: fn(f64) -> f64) -> Profile {
    Profile::piecewise(vec![1.5, 2.5], vec![Arc::new(|_| 0.0), Arc::new(inner), Arc::new(|_| 0.0)])
        .expect("static break points")
}

/// Initial-boundary value problem on `]x_left, x_right[ x ]0, t_final[`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: FluxModel,
    pub topography: TopographyProfile,
    pub x_left: f64,
    pub x_right: f64,
    pub t_final: f64,
    pub initial: Profile,
    pub left_bc: Profile,
    pub right_bc: Profile,
}

impl Problem {
    /// `t_final = 0` is accepted and yields a run without steps.
    pub fn new(
        model: FluxModel,
        topography: TopographyProfile,
        (x_left, x_right): (f64, f64),
        t_final: f64,
        initial: Profile,
        left_bc: Profile,
        right_bc: Profile,
    ) -> Result<Self> {
        if !(x_left < x_right) || !x_left.is_finite() || !x_right.is_finite() {
            return Err(Error::InvalidInput(format!("empty domain ]{x_left}, {x_right}[")));
        }
        if !(t_final >= 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidInput(format!("final time {t_final} must be >= 0")));
        }
        let problem = Self { model, topography, x_left, x_right, t_final, initial, left_bc, right_bc };
        let m = problem.data_bound();
        if !m.is_finite() {
            return Err(Error::InvalidInput("initial or boundary data are unbounded".into()));
        }
        Ok(problem)
    }

    /// `M = max(sup |u_0|, sup |u_l|, sup |u_r|)` over dense samples.
    pub fn data_bound(&self) -> f64 {
        let t_end = self.t_final.max(f64::MIN_POSITIVE);
        self.initial
            .sup_abs(self.x_left, self.x_right)
            .max(self.left_bc.sup_abs(0.0, t_end))
            .max(self.right_bc.sup_abs(0.0, t_end))
    }
}
