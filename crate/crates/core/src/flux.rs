//! Engquist-Osher flux and the objects built from its derivative split.
//!
//! With `(f')⁺ = max(f', 0)` and `(f')⁻ = max(-f', 0)` (both nonnegative),
//!
//! ```text
//! g(u, v) = ∫_0^u (f')⁺ - ∫_0^v (f')⁻ + f(0)
//! H(u, v, w) = v - λ (g(v, w) - g(u, v))
//! ```

use std::sync::{Arc, RwLock};

use crate::entropy::EntropyPair;
use crate::error::Result;
use crate::model::{FluxModel, ModelKind};
use crate::profile::ScalarFn;
use crate::quadrature;

/// Absolute tolerance for the entropy-flux integrals.
pub const G_TOL: f64 = 1e-14;

#[derive(Clone)]
pub enum SplitFlux {
    /// `f = u²/2`: `g(u, v) = max(u,0)²/2 + min(v,0)²/2`.
    Burgers,
    Linear {
        velocity: f64,
    },
    Tabulated(Arc<SplitTable>),
}

impl std::fmt::Debug for SplitFlux {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitFlux::Burgers => write!(f, "SplitFlux::Burgers"),
            SplitFlux::Linear { velocity } => write!(f, "SplitFlux::Linear({velocity})"),
            SplitFlux::Tabulated(_) => write!(f, "SplitFlux::Tabulated"),
        }
    }
}

impl SplitFlux {
    pub fn for_model(model: &FluxModel) -> Self {
        match model.kind() {
            ModelKind::BurgersHopf => SplitFlux::Burgers,
            ModelKind::LinearAdvection { velocity } => SplitFlux::Linear { velocity },
            ModelKind::Custom => SplitFlux::Tabulated(Arc::new(SplitTable::new(model.df_fn(), model.f(0.0)))),
        }
    }

    /// `∫_0^u (f')⁺`, nondecreasing in `u`.
    pub fn fplus_int(&self, u: f64) -> f64 {
        match self {
            SplitFlux::Burgers => {
                let p = u.max(0.0);
                0.5 * p * p
            }
            SplitFlux::Linear { velocity } => velocity.max(0.0) * u,
            SplitFlux::Tabulated(t) => t.integral(u, Part::Plus),
        }
    }

    /// `∫_0^v (f')⁻`; `v ↦ -fminus_int(v)` is nonincreasing.
    pub fn fminus_int(&self, v: f64) -> f64 {
        match self {
            SplitFlux::Burgers => {
                let m = v.min(0.0);
                -0.5 * m * m
            }
            SplitFlux::Linear { velocity } => (-velocity).max(0.0) * v,
            SplitFlux::Tabulated(t) => t.integral(v, Part::Minus),
        }
    }

    pub fn f_at_zero(&self) -> f64 {
        match self {
            SplitFlux::Burgers | SplitFlux::Linear { .. } => 0.0,
            SplitFlux::Tabulated(t) => t.f0,
        }
    }

    #[inline]
    pub fn df(&self, xi: f64) -> f64 {
        match self {
            SplitFlux::Burgers => xi,
            SplitFlux::Linear { velocity } => *velocity,
            SplitFlux::Tabulated(t) => (t.df)(xi),
        }
    }

    pub fn df_plus(&self, xi: f64) -> f64 {
        self.df(xi).max(0.0)
    }

    pub fn df_minus(&self, xi: f64) -> f64 {
        (-self.df(xi)).max(0.0)
    }

    /// Points in `[a, b]` where `f'` changes sign.
    pub fn sign_changes(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match self {
            SplitFlux::Burgers => {
                if lo <= 0.0 && 0.0 <= hi {
                    vec![0.0]
                } else {
                    Vec::new()
                }
            }
            SplitFlux::Linear { .. } => Vec::new(),
            SplitFlux::Tabulated(t) => t.roots_in(lo, hi),
        }
    }
}

/// Engquist-Osher numerical flux.
#[inline]
pub fn eo_flux(split: &SplitFlux, u: f64, v: f64) -> f64 {
    match split {
        SplitFlux::Burgers => {
            let p = u.max(0.0);
            let m = v.min(0.0);
            0.5 * (p * p + m * m)
        }
        SplitFlux::Linear { velocity } => {
            if *velocity >= 0.0 {
                velocity * u
            } else {
                velocity * v
            }
        }
        SplitFlux::Tabulated(_) => split.fplus_int(u) - split.fminus_int(v) + split.f_at_zero(),
    }
}

/// Three-point operator `H(u, v, w) = v - λ (g(v, w) - g(u, v))`.
#[inline]
pub fn scheme_operator_h(split: &SplitFlux, lambda: f64, u: f64, v: f64, w: f64) -> f64 {
    v - lambda * (eo_flux(split, v, w) - eo_flux(split, u, v))
}

/// Signed indicator: 1 on `]0, s[`, -1 on `]s, 0[`, 0 elsewhere.
#[inline]
pub fn chi(s: f64, xi: f64) -> f64 {
    if 0.0 < xi && xi < s {
        1.0
    } else if s < xi && xi < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Density `h(u, v, w)(ξ)` whose integral over ξ is `H(u, v, w)`:
///
/// ```text
/// h = χ_v - λ((f')⁺ χ_v - (f')⁻ χ_w) + λ((f')⁺ χ_u - (f')⁻ χ_v)
/// ```
pub fn chi_density_h(split: &SplitFlux, lambda: f64, u: f64, v: f64, w: f64, xi: f64) -> f64 {
    let (p, m) = (split.df_plus(xi), split.df_minus(xi));
    let (cu, cv, cw) = (chi(u, xi), chi(v, xi), chi(w, xi));
    cv - lambda * (p * cv - m * cw) + lambda * (p * cu - m * cv)
}

/// Numerical entropy flux
/// `G(u, v) = ∫_0^u η'(f')⁺ - ∫_0^v η'(f')⁻ + q(0)`.
pub fn entropy_flux_g(split: &SplitFlux, pair: &EntropyPair, u: f64, v: f64) -> Result<f64> {
    let plus = split_integral(split, pair, 0.0, u, Part::Plus)?;
    let minus = split_integral(split, pair, 0.0, v, Part::Minus)?;
    Ok(plus - minus + pair.q(0.0))
}

/// `∫_a^b η'(ξ) (f')^±(ξ) dξ`, split at the kinks of both factors.
pub fn split_integral(split: &SplitFlux, pair: &EntropyPair, a: f64, b: f64, part: Part) -> Result<f64> {
    let mut breaks = split.sign_changes(a, b);
    breaks.extend_from_slice(pair.breaks());
    let integrand = |xi: f64| {
        let d = match part {
            Part::Plus => split.df_plus(xi),
            Part::Minus => split.df_minus(xi),
        };
        pair.eta_prime(xi) * d
    };
    quadrature::integrate_with_breaks(integrand, a, b, &breaks, G_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Plus,
    Minus,
}

const PANEL: f64 = 1.0 / 32.0;
const INITIAL_PANELS: i64 = 64;

/// Cumulative split integrals of a general `f'` on a lazily grown panel grid.
///
/// Node values `∫_0^{kh}` are computed adaptively; between nodes the partial
/// panel is integrated with one Gauss-Kronrod panel per smooth piece, split
/// at the sign changes of `f'` located when the panel was built.
pub struct SplitTable {
    df: ScalarFn,
    f0: f64,
    data: RwLock<TableData>,
}

struct TableData {
    k_min: i64,
    plus: Vec<f64>,
    minus: Vec<f64>,
    roots: Vec<Vec<f64>>,
}

impl TableData {
    fn k_max(&self) -> i64 {
        self.k_min + self.plus.len() as i64 - 1
    }

    fn covers(&self, k: i64) -> bool {
        k >= self.k_min && k < self.k_max()
    }
}

impl SplitTable {
    pub fn new(df: ScalarFn, f0: f64) -> Self {
        let table = Self {
            df,
            f0,
            data: RwLock::new(TableData { k_min: 0, plus: vec![0.0], minus: vec![0.0], roots: Vec::new() }),
        };
        table.ensure(-INITIAL_PANELS, INITIAL_PANELS);
        table
    }

    fn panel_roots(&self, a: f64, b: f64) -> Vec<f64> {
        const SUB: usize = 8;
        let df = &self.df;
        let mut roots = Vec::new();
        let mut x0 = a;
        let mut f0 = df(a);
        for i in 1..=SUB {
            let x1 = a + (b - a) * i as f64 / SUB as f64;
            let f1 = df(x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if (f0 < 0.0 && f1 > 0.0) || (f0 > 0.0 && f1 < 0.0) {
                let (mut lo, mut hi, flo) = (x0, x1, f0);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let fm = df(mid);
                    if (fm < 0.0) == (flo < 0.0) && fm != 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x0 = x1;
            f0 = f1;
        }
        roots
    }

    fn panel_integrals(&self, a: f64, b: f64, roots: &[f64]) -> (f64, f64) {
        let df = &self.df;
        let p = quadrature::integrate_with_breaks(|x| df(x).max(0.0), a, b, roots, 1e-16).unwrap_or(f64::NAN);
        let m = quadrature::integrate_with_breaks(|x| (-df(x)).max(0.0), a, b, roots, 1e-16).unwrap_or(f64::NAN);
        (p, m)
    }

    fn ensure(&self, k_lo: i64, k_hi: i64) {
        let mut data = self.data.write().unwrap_or_else(|e| e.into_inner());
        while data.k_max() < k_hi {
            let k = data.k_max();
            let (a, b) = (k as f64 * PANEL, (k + 1) as f64 * PANEL);
            let roots = self.panel_roots(a, b);
            let (p, m) = self.panel_integrals(a, b, &roots);
            let (lp, lm) = (*data.plus.last().unwrap(), *data.minus.last().unwrap());
            data.plus.push(lp + p);
            data.minus.push(lm + m);
            data.roots.push(roots);
        }
        while data.k_min > k_lo {
            let k = data.k_min;
            let (a, b) = ((k - 1) as f64 * PANEL, k as f64 * PANEL);
            let roots = self.panel_roots(a, b);
            let (p, m) = self.panel_integrals(a, b, &roots);
            let (fp, fm) = (data.plus[0], data.minus[0]);
            data.plus.insert(0, fp - p);
            data.minus.insert(0, fm - m);
            data.roots.insert(0, roots);
            data.k_min -= 1;
        }
    }

    fn integral(&self, u: f64, part: Part) -> f64 {
        if !u.is_finite() {
            return f64::NAN;
        }
        let k = (u / PANEL).floor() as i64;
        loop {
            {
                let data = self.data.read().unwrap_or_else(|e| e.into_inner());
                if data.covers(k) {
                    let idx = (k - data.k_min) as usize;
                    let base = match part {
                        Part::Plus => data.plus[idx],
                        Part::Minus => data.minus[idx],
                    };
                    let a = k as f64 * PANEL;
                    return base + self.partial(a, u, &data.roots[idx], part);
                }
            }
            let span = k.abs().max(INITIAL_PANELS) * 2;
            self.ensure(-span, span);
        }
    }

    fn partial(&self, a: f64, u: f64, roots: &[f64], part: Part) -> f64 {
        if u == a {
            return 0.0;
        }
        let df = &self.df;
        let g = |x: f64| match part {
            Part::Plus => df(x).max(0.0),
            Part::Minus => (-df(x)).max(0.0),
        };
        let mut acc = 0.0;
        let mut left = a;
        for &r in roots.iter().filter(|&&r| r > a && r < u) {
            acc += quadrature::gk15(&g, left, r).map(|(v, _)| v).unwrap_or(f64::NAN);
            left = r;
        }
        acc + quadrature::gk15(&g, left, u).map(|(v, _)| v).unwrap_or(f64::NAN)
    }

    fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let (k_lo, k_hi) = ((lo / PANEL).floor() as i64, (hi / PANEL).floor() as i64 + 1);
        self.ensure(k_lo.min(-INITIAL_PANELS), k_hi.max(INITIAL_PANELS));
        let data = self.data.read().unwrap_or_else(|e| e.into_inner());
        let first = (k_lo - data.k_min).max(0) as usize;
        let last = ((k_hi - data.k_min) as usize).min(data.roots.len());
        data.roots[first..last].iter().flatten().copied().filter(|&r| r >= lo && r <= hi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::quadratic_pair;
    use crate::model::CustomModel;

    fn burgers_as_custom() -> FluxModel {
        FluxModel::custom(CustomModel {
            f: Some(Arc::new(|u| 0.5 * u * u)),
            df: Some(Arc::new(|u| u)),
            b: Some(Arc::new(|u| u)),
            b_prime_sup: Some(1.0),
            d_eval: Some(Arc::new(|s| s)),
            d_inverse: Some(Arc::new(|s| s)),
            d_prime_lower_bound: Some(1.0),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn burgers_examples() {
        let s = SplitFlux::Burgers;
        assert_eq!(eo_flux(&s, 0.0, 0.0), 0.0);
        assert_eq!(eo_flux(&s, 2.0, 1.0), 2.0);
        assert_eq!(eo_flux(&s, 1.0, -1.0), 1.0);
        assert_eq!(scheme_operator_h(&s, 0.1, 1.0, 1.0, 1.0), 1.0);
        assert!((scheme_operator_h(&s, 0.1, 0.0, 1.0, 2.0) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn linear_upwinding() {
        assert_eq!(eo_flux(&SplitFlux::Linear { velocity: 2.0 }, 3.0, 5.0), 6.0);
        assert_eq!(eo_flux(&SplitFlux::Linear { velocity: -2.0 }, 3.0, 5.0), -10.0);
    }

    #[test]
    fn tabulated_matches_closed_form_burgers() {
        let t = SplitFlux::for_model(&burgers_as_custom());
        for &(u, v) in &[(2.0, 1.0), (1.0, -1.0), (-3.3, 0.7), (0.01, -0.02), (7.5, -9.25)] {
            let exact = eo_flux(&SplitFlux::Burgers, u, v);
            assert!((eo_flux(&t, u, v) - exact).abs() < 1e-12, "{u} {v}");
        }
        assert_eq!(t.sign_changes(-1.0, 1.0).len(), 1);
    }

    #[test]
    fn tabulated_consistency_with_interior_sign_changes() {
        let f = |u: f64| u * u * u / 3.0 - u;
        let t = SplitFlux::Tabulated(Arc::new(SplitTable::new(Arc::new(|u| u * u - 1.0), 0.0)));
        for k in -40..=40 {
            let u = 0.137 * k as f64;
            assert!((eo_flux(&t, u, u) - f(u)).abs() < 1e-12, "u = {u}");
        }
        let roots = t.sign_changes(-2.0, 2.0);
        assert_eq!(roots.len(), 2);
        assert!((roots[0] + 1.0).abs() < 1e-12 && (roots[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_density_outside_hull_vanishes() {
        let s = SplitFlux::Burgers;
        assert_eq!(chi_density_h(&s, 0.3, 0.5, 1.0, 0.2, 1.5), 0.0);
        assert_eq!(chi_density_h(&s, 0.3, 0.5, 1.0, 0.2, -0.1), 0.0);
    }

    #[test]
    fn entropy_flux_examples() {
        let m = FluxModel::burgers_hopf();
        let s = SplitFlux::Burgers;
        let pair = quadratic_pair(&m, 0.0);
        assert!((entropy_flux_g(&s, &pair, 1.0, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((entropy_flux_g(&s, &pair, 1.0, 1.0).unwrap() - pair.q(1.0)).abs() < 1e-14);
        assert!((pair.q(1.0) - 1.0 / 3.0).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn consistency(u in -10.0f64..10.0) {
                prop_assert!((eo_flux(&SplitFlux::Burgers, u, u) - 0.5 * u * u).abs() < 1e-12);
            }

            #[test]
            fn monotone_in_each_argument(u in -5.0f64..5.0, v in -5.0f64..5.0, h in 1e-6f64..1.0) {
                let s = SplitFlux::Burgers;
                prop_assert!(eo_flux(&s, u + h, v) >= eo_flux(&s, u, v));
                prop_assert!(eo_flux(&s, u, v + h) <= eo_flux(&s, u, v));
            }

            #[test]
            fn split_reconstructs_f(u in -6.0f64..6.0) {
                let t = SplitFlux::for_model(&burgers_as_custom());
                let back = t.fplus_int(u) - t.fminus_int(u) + t.f_at_zero();
                prop_assert!((back - 0.5 * u * u).abs() < 1e-12);
            }
        }
    }
}
