//! Piecewise-smooth scalar functions with declared break points.
//!
//! Break points mark jumps (or kinks) of the function. Cell and time-window
//! averages are split there so that each sub-integral sees a smooth piece.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::gauss5_checked;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Profile {
    breaks: Vec<f64>,
    pieces: Vec<ScalarFn>,
    constant: Option<f64>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("breaks", &self.breaks)
            .field("pieces", &self.pieces.len())
            .field("constant", &self.constant)
            .finish()
    }
}

impl Profile {
    pub fn smooth(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { breaks: Vec::new(), pieces: vec![Arc::new(f)], constant: None }
    }

    pub fn constant(c: f64) -> Self {
        Self { breaks: Vec::new(), pieces: vec![Arc::new(move |_| c)], constant: Some(c) }
    }

    /// `pieces[i]` is used on `[breaks[i-1], breaks[i])`; the first and last
    /// pieces extend to infinity. Point values are right-continuous.
    pub fn piecewise(breaks: Vec<f64>, pieces: Vec<ScalarFn>) -> Result<Self> {
        if pieces.len() != breaks.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} break points need {} pieces, got {}",
                breaks.len(),
                breaks.len() + 1,
                pieces.len()
            )));
        }
        if breaks.iter().any(|b| !b.is_finite()) || breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("break points must be finite and strictly increasing".into()));
        }
        Ok(Self { breaks, pieces, constant: None })
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn value(&self, x: f64) -> f64 {
        let i = self.breaks.partition_point(|b| *b <= x);
        (self.pieces[i])(x)
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        let i = self.breaks.partition_point(|b| *b < x);
        (self.pieces[i])(x)
    }

    pub fn right_limit(&self, x: f64) -> f64 {
        self.value(x)
    }

    /// `x -> scale * self(x) + offset`, keeping the break points.
    pub fn affine(&self, scale: f64, offset: f64) -> Profile {
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let p = Arc::clone(p);
                Arc::new(move |x| scale * p(x) + offset) as ScalarFn
            })
            .collect();
        Profile { breaks: self.breaks.clone(), pieces, constant: self.constant.map(|c| scale * c + offset) }
    }

    /// Sub-intervals of `[a, b]` with the piece index active on each.
    pub fn segments(&self, a: f64, b: f64) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        let mut left = a;
        for &p in self.breaks.iter().filter(|&&p| p > a && p < b) {
            out.push((left, p, self.piece_index(0.5 * (left + p))));
            left = p;
        }
        out.push((left, b, self.piece_index(0.5 * (left + b))));
        out
    }

    fn piece_index(&self, x: f64) -> usize {
        self.breaks.partition_point(|b| *b <= x)
    }

    pub fn piece(&self, index: usize) -> &ScalarFn {
        &self.pieces[index]
    }

    /// Integral of `g(self(x))` over `[a, b]`, 5-point Gauss on every smooth segment.
    pub fn integrate_map(&self, a: f64, b: f64, g: impl Fn(f64, f64) -> f64) -> Result<f64> {
        if let Some(c) = self.constant {
            return gauss5_checked(|x| g(x, c), a, b);
        }
        let mut acc = 0.0;
        for (lo, hi, i) in self.segments(a, b) {
            let p = &self.pieces[i];
            acc += gauss5_checked(|x| g(x, p(x)), lo, hi)?;
        }
        Ok(acc)
    }

    /// Mean value over `[a, b]`; the point value when the window is empty.
    pub fn average(&self, a: f64, b: f64) -> Result<f64> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        if b <= a {
            let v = self.value(a);
            return if v.is_finite() { Ok(v) } else { Err(Error::QuadratureFailure { at: a }) };
        }
        Ok(self.integrate_map(a, b, |_, v| v)? / (b - a))
    }

    /// `sup |self|` on `[a, b]` from dense sampling plus one-sided limits at breaks.
    pub fn sup_abs(&self, a: f64, b: f64) -> f64 {
        if let Some(c) = self.constant {
            return c.abs();
        }
        const SAMPLES: usize = 4096;
        let mut sup: f64 = 0.0;
        for (lo, hi, i) in self.segments(a, b) {
            let p = &self.pieces[i];
            for k in 0..=SAMPLES {
                let x = lo + (hi - lo) * k as f64 / SAMPLES as f64;
                sup = sup.max(p(x).abs());
            }
        }
        sup
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step() -> Profile {
        Profile::piecewise(vec![1.0, 2.0], vec![Arc::new(|_| 0.0), Arc::new(|x| x), Arc::new(|_| 0.0)]).unwrap()
    }

    #[test]
    fn one_sided_limits_at_breaks() {
        let p = step();
        assert_eq!(p.left_limit(1.0), 0.0);
        assert_eq!(p.right_limit(1.0), 1.0);
        assert_eq!(p.left_limit(2.0), 2.0);
        assert_eq!(p.right_limit(2.0), 0.0);
        assert_eq!(p.value(1.5), 1.5);
    }

    #[test]
    fn average_splits_at_jumps() {
        let p = step();
        // integral over [0.5, 1.5] is (1.5^2 - 1)/2 = 0.625
        assert!((p.average(0.5, 1.5).unwrap() - 0.625).abs() < 1e-15);
        assert!((p.average(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_breaks() {
        assert!(
            Profile::piecewise(vec![1.0, 1.0], (0..3).map(|_| Arc::new(|_: f64| 0.0) as ScalarFn).collect()).is_err()
        );
        assert!(Profile::piecewise(vec![1.0], vec![Arc::new(|_| 0.0)]).is_err());
    }

    #[test]
    fn affine_keeps_structure() {
        let p = step().affine(-1.0, 2.0);
        assert_eq!(p.breaks(), &[1.0, 2.0]);
        assert_eq!(p.value(1.5), 0.5);
        assert_eq!(Profile::constant(3.0).affine(2.0, 1.0).as_constant(), Some(7.0));
    }
}
