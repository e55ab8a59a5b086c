//! Entropy pairs and discrete entropy diagnostics.
//!
//! A boundary entropy pair is a convex `η` with flux `q' = η' f'` and an
//! anchor `w` where `η(w) = η'(w) = q(w) = 0`. The semi-Kružkov pairs
//! `(s - k)^±` are not C², so the cell entropy residual only accepts their
//! smoothed versions.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flux::{entropy_flux_g, scheme_operator_h, SplitFlux};
use crate::grid::{cell_slopes, Discretization, SolverState};
use crate::model::{FluxModel, ModelKind, Problem};
use crate::profile::ScalarFn;
use crate::quadrature;
use crate::scheme::RunResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropyKind {
    Smooth,
    SemiKruzkovPlus { k: f64 },
    SemiKruzkovMinus { k: f64 },
    SmoothedPlus { k: f64, delta: f64 },
    SmoothedMinus { k: f64, delta: f64 },
}

#[derive(Clone)]
pub struct EntropyPair {
    kind: EntropyKind,
    eta: ScalarFn,
    eta_prime: ScalarFn,
    q: ScalarFn,
    anchor: Option<f64>,
    breaks: Vec<f64>,
}

impl fmt::Debug for EntropyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EntropyPair").field("kind", &self.kind).field("anchor", &self.anchor).finish()
    }
}

impl EntropyPair {
    /// General pair from `η`, `η'` with `q(s) = q0 + ∫_0^s η' f'` by quadrature.
    /// `breaks` lists the kinks of `η'`.
    pub fn smooth(
        model: &FluxModel,
        eta: ScalarFn,
        eta_prime: ScalarFn,
        q0: f64,
        anchor: Option<f64>,
        breaks: Vec<f64>,
    ) -> Self {
        let q = primitive_of_eta_prime_df(model, Arc::clone(&eta_prime), breaks.clone(), 0.0, q0);
        Self { kind: EntropyKind::Smooth, eta, eta_prime, q, anchor, breaks }
    }

    pub fn kind(&self) -> EntropyKind {
        self.kind
    }

    #[inline]
    pub fn eta(&self, s: f64) -> f64 {
        (self.eta)(s)
    }

    #[inline]
    pub fn eta_prime(&self, s: f64) -> f64 {
        (self.eta_prime)(s)
    }

    #[inline]
    pub fn q(&self, s: f64) -> f64 {
        (self.q)(s)
    }

    pub fn anchor(&self) -> Option<f64> {
        self.anchor
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// `η ∈ C²`, as the cell entropy inequality requires.
    pub fn is_c2(&self) -> bool {
        !matches!(self.kind, EntropyKind::SemiKruzkovPlus { .. } | EntropyKind::SemiKruzkovMinus { .. })
    }
}

/// `s ↦ q_at + ∫_at^s η' f'`, adaptive quadrature split at `breaks` and at
/// the sign changes of nothing in particular (η' f' is smooth between breaks).
fn primitive_of_eta_prime_df(model: &FluxModel, eta_prime: ScalarFn, breaks: Vec<f64>, at: f64, q_at: f64) -> ScalarFn {
    let model = model.clone();
    Arc::new(move |s| {
        let integrand = |x: f64| eta_prime(x) * model.df(x);
        q_at + quadrature::integrate_with_breaks(integrand, at, s, &breaks, 1e-15).unwrap_or(f64::NAN)
    })
}

/// `η(s) = (s - w)²/2` with `q(s) = ∫_w^s (ξ - w) f'(ξ) dξ`, anchored at `w`.
pub fn quadratic_pair(model: &FluxModel, w: f64) -> EntropyPair {
    let eta: ScalarFn = Arc::new(move |s| 0.5 * (s - w) * (s - w));
    let eta_prime: ScalarFn = Arc::new(move |s| s - w);
    let q: ScalarFn = match model.kind() {
        ModelKind::BurgersHopf => Arc::new(move |s| (s * s * s - w * w * w) / 3.0 - 0.5 * w * (s * s - w * w)),
        ModelKind::LinearAdvection { velocity } => Arc::new(move |s| 0.5 * velocity * (s - w) * (s - w)),
        ModelKind::Custom => primitive_of_eta_prime_df(model, Arc::clone(&eta_prime), Vec::new(), w, 0.0),
    };
    EntropyPair { kind: EntropyKind::Smooth, eta, eta_prime, q, anchor: Some(w), breaks: Vec::new() }
}

/// Semi-Kružkov pair `η_k^±(s) = (s - k)^±`, `q_k^±(s) = sign^±(s - k)(f(s) - f(k))`
/// with `s⁻ = sign⁻(s) s ≥ 0`. `η'` is taken as 0 at `s = k`.
pub fn semi_kruzkov_pair(model: &FluxModel, k: f64, sign: Sign) -> EntropyPair {
    let fk = model.f(k);
    let m = model.clone();
    match sign {
        Sign::Plus => EntropyPair {
            kind: EntropyKind::SemiKruzkovPlus { k },
            eta: Arc::new(move |s| (s - k).max(0.0)),
            eta_prime: Arc::new(move |s| if s > k { 1.0 } else { 0.0 }),
            q: Arc::new(move |s| if s > k { m.f(s) - fk } else { 0.0 }),
            anchor: Some(k),
            breaks: vec![k],
        },
        Sign::Minus => EntropyPair {
            kind: EntropyKind::SemiKruzkovMinus { k },
            eta: Arc::new(move |s| (k - s).max(0.0)),
            eta_prime: Arc::new(move |s| if s < k { -1.0 } else { 0.0 }),
            q: Arc::new(move |s| if s < k { fk - m.f(s) } else { 0.0 }),
            anchor: Some(k),
            breaks: vec![k],
        },
    }
}

/// C² approximation of the semi-Kružkov pair. For the plus variant with
/// `y = x - k`: `η = 0` for `y ≤ 0`, `-y⁴/(2δ³) + y³/δ²` on `[0, δ]`,
/// `y - δ/2` beyond; `q(x) = ∫_k^x η' f'`. The minus variant is mirrored.
pub fn smoothed_boundary_pair(model: &FluxModel, k: f64, delta: f64, sign: Sign) -> Result<EntropyPair> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!("smoothing width must be positive, got {delta}")));
    }
    let d2 = delta * delta;
    let d3 = d2 * delta;
    let p = move |y: f64| {
        if y <= 0.0 {
            0.0
        } else if y <= delta {
            -y * y * y * y / (2.0 * d3) + y * y * y / d2
        } else {
            y - 0.5 * delta
        }
    };
    let dp = move |y: f64| {
        if y <= 0.0 {
            0.0
        } else if y <= delta {
            -2.0 * y * y * y / d3 + 3.0 * y * y / d2
        } else {
            1.0
        }
    };
    let (orient, kind) = match sign {
        Sign::Plus => (1.0, EntropyKind::SmoothedPlus { k, delta }),
        Sign::Minus => (-1.0, EntropyKind::SmoothedMinus { k, delta }),
    };
    let eta: ScalarFn = Arc::new(move |x| p(orient * (x - k)));
    let eta_prime: ScalarFn = Arc::new(move |x| orient * dp(orient * (x - k)));
    let knot = k + orient * delta;
    let m = model.clone();
    let ep = Arc::clone(&eta_prime);
    let inner =
        move |x: f64| quadrature::integrate_with_breaks(|s| ep(s) * m.df(s), k, x, &[], 1e-15).unwrap_or(f64::NAN);
    let q_knot = inner(knot);
    let f_knot = model.f(knot);
    let m = model.clone();
    let q: ScalarFn = Arc::new(move |x| {
        let y = orient * (x - k);
        if y <= 0.0 {
            0.0
        } else if y <= delta {
            inner(x)
        } else {
            q_knot + orient * (m.f(x) - f_knot)
        }
    });
    Ok(EntropyPair { kind, eta, eta_prime, q, anchor: Some(k), breaks: vec![k, knot] })
}

/// Kružkov flux `F(a, b) = sign(a - b)(f(a) - f(b))`.
pub fn kruzkov_flux_f(model: &FluxModel, a: f64, b: f64) -> f64 {
    let s = if a > b {
        1.0
    } else if a < b {
        -1.0
    } else {
        0.0
    };
    s * (model.f(a) - model.f(b))
}

/// `η(H(u,v,w)) - η(v) + λ(G(v,w) - G(u,v))`; nonpositive under the CFL condition.
pub fn cell_entropy_residual(
    split: &SplitFlux,
    pair: &EntropyPair,
    lambda: f64,
    u: f64,
    v: f64,
    w: f64,
) -> Result<f64> {
    if !pair.is_c2() {
        return Err(Error::InvalidInput("cell entropy residual needs a C² entropy; use smoothed_boundary_pair".into()));
    }
    let h = scheme_operator_h(split, lambda, u, v, w);
    let g_right = entropy_flux_g(split, pair, v, w)?;
    let g_left = entropy_flux_g(split, pair, u, v)?;
    Ok(pair.eta(h) - pair.eta(v) + lambda * (g_right - g_left))
}

/// Space-time test function for the weak entropy residual.
pub trait TestFunction {
    fn value(&self, x: f64, t: f64) -> f64;
    fn dt(&self, x: f64, t: f64) -> f64;
    fn dx(&self, x: f64, t: f64) -> f64;
}

/// `φ(x, t) = amplitude · exp(-((x - center)/width)²) · (1 - t/T)³` for `t < T`, 0 after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableBump {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub t_final: f64,
}

impl SeparableBump {
    fn space(&self, x: f64) -> (f64, f64) {
        let y = (x - self.center) / self.width;
        let g = self.amplitude * (-y * y).exp();
        (g, -2.0 * y / self.width * g)
    }

    fn time(&self, t: f64) -> (f64, f64) {
        if t >= self.t_final {
            return (0.0, 0.0);
        }
        let r = 1.0 - t / self.t_final;
        (r * r * r, -3.0 * r * r / self.t_final)
    }
}

impl TestFunction for SeparableBump {
    fn value(&self, x: f64, t: f64) -> f64 {
        self.space(x).0 * self.time(t).0
    }

    fn dt(&self, x: f64, t: f64) -> f64 {
        self.space(x).0 * self.time(t).1
    }

    fn dx(&self, x: f64, t: f64) -> f64 {
        self.space(x).1 * self.time(t).0
    }
}

/// Identically zero test function.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTest;

impl TestFunction for ZeroTest {
    fn value(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn dt(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn dx(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// Discrete weak form of the entropy inequality evaluated on a stored run:
///
/// ```text
/// ∬ η(u_Δx) φ_t + q(u_Δx) φ_x - η'(u_Δx) b(u_Δx) z' φ
///   + ∫ η(u_0) φ(·,0) + Lip ∫ η(u_r) φ(x_{j_r},·) + Lip ∫ η(u_l) φ(x_{j_l},·)
/// ```
///
/// Cell-midpoint / left-endpoint-in-time quadrature for the numerical
/// solution, 5-point Gauss for the exact initial and boundary data. The
/// value is bounded below by `-c Δx`.
pub fn weak_entropy_residual(
    problem: &Problem,
    disc: &Discretization,
    run: &RunResult,
    pair: &EntropyPair,
    phi: &dyn TestFunction,
) -> Result<f64> {
    let history = run.history.as_ref().ok_or(Error::HistoryUnavailable)?;
    let model = &problem.model;
    let dx = disc.dx();
    let jumps: Vec<f64> = cell_slopes(&problem.topography, disc).iter().map(|s| s * dx).collect();
    let centers = disc.centers();

    let mut interior = 0.0;
    for n in 0..history.times.len().saturating_sub(1) {
        let (t, dt) = (history.times[n], history.times[n + 1] - history.times[n]);
        let level = &history.levels[n];
        for j in 0..disc.n_cells() {
            let (u, x) = (level[j], centers[j]);
            interior += dt * dx * (pair.eta(u) * phi.dt(x, t) + pair.q(u) * phi.dx(x, t));
            interior -= dt * pair.eta_prime(u) * model.b(u) * jumps[j] * phi.value(x, t);
        }
    }

    let mut initial = 0.0;
    for j in 0..disc.n_cells() {
        let (a, b) = disc.cell(j);
        initial += problem.initial.integrate_map(a, b, |x, v| pair.eta(v) * phi.value(x, 0.0))?;
    }

    let c = run.max_abs_overall.max(pair.anchor().unwrap_or(0.0).abs());
    let lip = model.lipschitz_on(c);
    let (x_l, x_r) = (centers[0], centers[disc.n_cells() - 1]);
    let mut boundary = 0.0;
    for n in 0..history.times.len().saturating_sub(1) {
        let (t0, t1) = (history.times[n], history.times[n + 1]);
        boundary += problem.right_bc.integrate_map(t0, t1, |t, v| pair.eta(v) * phi.value(x_r, t))?;
        boundary += problem.left_bc.integrate_map(t0, t1, |t, v| pair.eta(v) * phi.value(x_l, t))?;
    }
    Ok(interior + initial + lip * boundary)
}

/// L¹ distance `Δx Σ |u_j - ref_j|`.
pub fn equilibrium_drift(state: &SolverState, reference: &SolverState, dx: f64) -> Result<f64> {
    if state.interior.len() != reference.interior.len() {
        return Err(Error::IncompatibleGrids(format!(
            "{} cells vs {} cells",
            state.interior.len(),
            reference.interior.len()
        )));
    }
    Ok(dx * state.interior.iter().zip(&reference.interior).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Seeded random sweep of the cell entropy inequality with smoothed
/// semi-Kružkov pairs. `lambda_scale` is the largest `λ·Lip_{[-C,C]}(f)`
/// drawn (values ≤ 1 respect the CFL condition).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEntropySuite {
    pub samples: usize,
    pub bound: f64,
    pub lambda_scale: f64,
    pub delta_min: f64,
    pub seed: u64,
}

impl Default for CellEntropySuite {
    fn default() -> Self {
        Self { samples: 10_000, bound: 3.0, lambda_scale: 1.0, delta_min: 1e-3, seed: 20_240_611 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub samples: usize,
    pub max_residual: f64,
    /// `(u, v, w, λ, k, δ)` of the largest residual.
    pub worst: [f64; 6],
}

impl CellEntropySuite {
    pub fn run(&self, model: &FluxModel) -> Result<SuiteReport> {
        if self.samples == 0 {
            return Err(Error::InvalidInput("entropy suite needs at least one sample".into()));
        }
        let split = SplitFlux::for_model(model);
        let lip = model.lipschitz_on(self.bound);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let c = self.bound;
        let mut report = SuiteReport { samples: self.samples, max_residual: f64::NEG_INFINITY, worst: [0.0; 6] };
        for _ in 0..self.samples {
            let u = rng.random_range(-c..=c);
            let v = rng.random_range(-c..=c);
            let w = rng.random_range(-c..=c);
            let k = rng.random_range(-c..=c);
            let delta = (rng.random_range(self.delta_min.ln()..=0.0f64)).exp();
            let sign = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
            let ratio: f64 = rng.random_range(0.0..=1.0);
            let lambda = if lip > 0.0 { ratio * self.lambda_scale / lip } else { ratio };
            let pair = smoothed_boundary_pair(model, k, delta, sign)?;
            let r = cell_entropy_residual(&split, &pair, lambda, u, v, w)?;
            if r > report.max_residual {
                report.max_residual = r;
                report.worst = [u, v, w, lambda, k, delta];
            }
        }
        Ok(report)
    }
}
