//! Shifted two-parameter Weibull tail models fitted by maximum likelihood.

use crate::error::{Error, Result};

/// Newton tolerance on the profile-likelihood equation for the shape.
const SHAPE_TOL: f64 = 1e-10;
const MAX_NEWTON_ITERS: usize = 200;

/// A Weibull distribution on distances above a shift `tau`:
/// `CDF(d) = 1 - exp(-((d - tau)/scale)^shape)` for `d > tau`, else 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WeibullModel {
    pub shape: f64,
    pub scale: f64,
    pub shift: f64,
    pub tail_size: usize,
}

impl WeibullModel {
    pub fn cdf(&self, d: f64) -> f64 {
        if d <= self.shift {
            return 0.0;
        }
        1.0 - (-((d - self.shift) / self.scale).powf(self.shape)).exp()
    }
}

/// Fits a Weibull to the `tail_size` largest distances. The shift is set to
/// `(1 - 1e-6) * min(tail)` so the smallest tail sample keeps a strictly
/// positive shifted value, then (shape, scale) maximize the likelihood of the
/// shifted tail. The shape solves the profile equation by Newton iteration
/// with a bisection fallback on a bracketed interval.
pub fn fit_weibull(distances: &[f64], tail_size: usize) -> Result<WeibullModel> {
    if tail_size < 2 {
        return Err(Error::InvalidArgument("tail_size must be at least 2".into()));
    }
    if distances.len() < tail_size {
        return Err(Error::InvalidArgument(format!(
            "{} distances for tail size {tail_size}",
            distances.len()
        )));
    }
    if let Some(bad) = distances.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distances must be finite and nonnegative, got {bad}"
        )));
    }

    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = &sorted[sorted.len() - tail_size..];
    let tail_min = tail[0];
    let tail_max = tail[tail_size - 1];
    if tail_max == tail_min {
        return Err(Error::DegenerateTail(format!(
            "all {tail_size} tail samples equal {tail_min}"
        )));
    }
    let shift = (1.0 - 1e-6) * tail_min;
    let shifted: Vec<f64> = tail.iter().map(|&d| d - shift).collect();
    let (shape, scale) = fit_shifted(&shifted)?;
    Ok(WeibullModel {
        shape,
        scale,
        shift,
        tail_size,
    })
}

/// MLE for a two-parameter Weibull on strictly positive samples.
///
/// With `g(k) = sum(s^k ln s)/sum(s^k) - 1/k - mean(ln s)`, the shape is the
/// unique root of `g` (g is strictly increasing). The scale follows as
/// `(sum(s^k)/n)^(1/k)`.
fn fit_shifted(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len() as f64;
    // normalize by the max so s^k cannot overflow for large k
    let smax = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = samples.iter().map(|&s| s / smax).collect();
    let log_s: Vec<f64> = scaled.iter().map(|s| s.ln()).collect();
    let mean_log: f64 = log_s.iter().sum::<f64>() / n;

    let g_and_slope = |k: f64| -> (f64, f64) {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (s, l) in scaled.iter().zip(&log_s) {
            let p = s.powf(k);
            s0 += p;
            s1 += p * l;
            s2 += p * l * l;
        }
        let a = s1 / s0;
        let a_slope = (s2 * s0 - s1 * s1) / (s0 * s0);
        (a - 1.0 / k - mean_log, a_slope + 1.0 / (k * k))
    };

    // bracket the root: g is increasing, g(0+) = -inf, g(inf) > 0
    let mut lo = 1e-3;
    let mut hi = 1.0;
    while g_and_slope(lo).0 > 0.0 && lo > 1e-12 {
        lo /= 10.0;
    }
    while g_and_slope(hi).0 < 0.0 && hi < 1e9 {
        hi *= 10.0;
    }
    if g_and_slope(lo).0 > 0.0 || g_and_slope(hi).0 < 0.0 {
        return Err(Error::FitDiverged(format!(
            "no shape bracket in [{lo:.3e}, {hi:.3e}]"
        )));
    }

    let mut k = 1.0f64.clamp(lo, hi);
    let mut converged = false;
    for _ in 0..MAX_NEWTON_ITERS {
        let (g, slope) = g_and_slope(k);
        if g > 0.0 {
            hi = hi.min(k);
        } else {
            lo = lo.max(k);
        }
        let step = g / slope;
        let mut next = k - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi); // fall back to bisection inside the bracket
        }
        if (next - k).abs() <= SHAPE_TOL * k.max(1.0) {
            k = next;
            converged = true;
            break;
        }
        k = next;
    }
    if !converged {
        return Err(Error::FitDiverged(format!(
            "shape iteration did not reach {SHAPE_TOL} in {MAX_NEWTON_ITERS} steps"
        )));
    }

    let s0: f64 = scaled.iter().map(|s| s.powf(k)).sum();
    let scale = smax * (s0 / n).powf(1.0 / k);
    if !(k.is_finite() && k > 0.0 && scale.is_finite() && scale > 0.0) {
        return Err(Error::FitDiverged(format!("shape {k}, scale {scale}")));
    }
    Ok((k, scale))
}

/// Draws one Weibull(shape, scale) sample by inverse CDF.
pub fn sample_weibull<R: rand::Rng>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>();
    scale * (-(1.0 - u).ln()).powf(1.0 / shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::seeded_rng;

    #[test]
    fn parametric_recovery_at_scale() {
        let mut rng = seeded_rng(42);
        let samples: Vec<f64> = (0..10_000).map(|_| sample_weibull(&mut rng, 2.0, 5.0)).collect();
        let model = fit_weibull(&samples, samples.len()).unwrap();
        assert!((model.shape - 2.0).abs() / 2.0 < 0.1, "shape {}", model.shape);
        assert!((model.scale - 5.0).abs() / 5.0 < 0.1, "scale {}", model.scale);
    }

    #[test]
    fn degenerate_tail_is_rejected() {
        assert!(matches!(
            fit_weibull(&[3.0, 3.0], 2),
            Err(Error::DegenerateTail(_))
        ));
        // enough samples, but the selected tail is constant
        assert!(matches!(
            fit_weibull(&[1.0, 5.0, 5.0, 5.0], 3),
            Err(Error::DegenerateTail(_))
        ));
    }

    #[test]
    fn preconditions_are_checked() {
        assert!(fit_weibull(&[1.0, 2.0, 3.0], 1).is_err());
        assert!(fit_weibull(&[1.0], 2).is_err());
        assert!(fit_weibull(&[1.0, f64::NAN, 3.0], 2).is_err());
        assert!(fit_weibull(&[1.0, -0.5, 3.0], 2).is_err());
    }

    #[test]
    fn cdf_shape_on_probe_grid() {
        let mut rng = seeded_rng(7);
        let samples: Vec<f64> = (0..500).map(|_| 2.0 + sample_weibull(&mut rng, 1.5, 3.0)).collect();
        let model = fit_weibull(&samples, 50).unwrap();
        assert_eq!(model.cdf(model.shift), 0.0);
        assert_eq!(model.cdf(0.0), 0.0);
        let mut last = -1.0;
        for i in 0..2000 {
            let d = i as f64 * 0.05;
            let c = model.cdf(d);
            assert!((0.0..=1.0).contains(&c));
            assert!(c >= last, "CDF must be monotone");
            last = c;
        }
        assert!(model.cdf(1e9) > 1.0 - 1e-12);
    }

    #[test]
    fn tail_selection_uses_largest_distances() {
        // fit only sees the top half; a shifted cluster below must not matter
        let mut rng = seeded_rng(9);
        let mut samples: Vec<f64> = (0..2000).map(|_| sample_weibull(&mut rng, 2.0, 1.0)).collect();
        samples.extend((0..2000).map(|_| 40.0 + sample_weibull(&mut rng, 3.0, 2.0)));
        let model = fit_weibull(&samples, 2000).unwrap();
        assert!(model.shift >= 39.0, "shift {} should sit at the upper cluster", model.shift);
    }
}
