//! Fixed and adaptive Gauss rules.

use crate::error::{Error, Result};

const GAUSS5_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GAUSS5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

// Kronrod 15-point abscissae (nonnegative half) and weights, with the embedded
// 7-point Gauss weights for the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// 5-point Gauss-Legendre rule on `[a, b]`; exact for polynomials of degree 9.
pub fn gauss5(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GAUSS5_NODES.iter().zip(GAUSS5_WEIGHTS.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Same as [`gauss5`] but rejects non-finite integrand values.
pub fn gauss5_checked(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GAUSS5_NODES.iter().zip(GAUSS5_WEIGHTS.iter()) {
        let at = mid + half * x;
        let v = f(at);
        if !v.is_finite() {
            return Err(Error::QuadratureFailure { at });
        }
        acc += w * v;
    }
    Ok(acc * half)
}

/// One Gauss-Kronrod (7, 15) panel: returns (kronrod estimate, |kronrod - gauss|).
pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    if !fc.is_finite() {
        return Err(Error::QuadratureFailure { at: mid });
    }
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let (x1, x2) = (mid - dx, mid + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(Error::QuadratureFailure { at: x1 });
        }
        if !f2.is_finite() {
            return Err(Error::QuadratureFailure { at: x2 });
        }
        kronrod += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

/// Adaptive Gauss-Kronrod integration with absolute and relative tolerances.
///
/// Panels are bisected until their error estimate falls below the share of
/// the tolerance proportional to their width, or the panel width reaches
/// roundoff scale. Reversed limits flip the sign.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, abs_tol, rel_tol).map(|v| -v);
    }
    let (whole, err) = gk15(&f, a, b)?;
    let tol = abs_tol.max(rel_tol * whole.abs());
    if err <= tol {
        return Ok(whole);
    }
    let width = b - a;
    let mut stack = vec![(a, b, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi)?;
        let share = tol * (hi - lo) / width;
        let tiny = hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs()));
        if err <= share || depth >= 60 || tiny {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok(total)
}

/// Adaptive integration split at every break point strictly inside `(a, b)`.
pub fn integrate_with_breaks(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut acc = 0.0;
    let mut left = lo;
    for p in points.into_iter().chain(std::iter::once(hi)) {
        acc += integrate(&f, left, p, abs_tol, 1e-14)?;
        left = p;
    }
    Ok(sign * acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss5_exact_for_degree_nine() {
        let p = |x: f64| x.powi(9) - 3.0 * x.powi(4) + 2.0;
        let exact = |x: f64| x.powi(10) / 10.0 - 0.6 * x.powi(5) + 2.0 * x;
        let v = gauss5(p, -0.3, 1.7);
        assert!((v - (exact(1.7) - exact(-0.3))).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_kinks_and_reversal() {
        let v = integrate(|x: f64| x.abs(), -1.0, 2.0, 1e-13, 1e-13).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
        let w = integrate(f64::sin, std::f64::consts::PI, 0.0, 1e-14, 1e-14).unwrap();
        assert!((w + 2.0).abs() < 1e-13);
    }

    #[test]
    fn breaks_split_the_range() {
        let step = |x: f64| if x < 0.3 { 1.0 } else { 5.0 };
        let v = integrate_with_breaks(step, 0.0, 1.0, &[0.3], 1e-14).unwrap();
        assert!((v - (0.3 + 3.5)).abs() < 1e-13);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let err = gauss5_checked(|_| f64::NAN, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::QuadratureFailure { .. }));
    }
}
