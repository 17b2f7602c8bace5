//! Experiment statistics: per-cell aggregation under the PASS accounting
//! conventions and two-sided paired t-tests with analytic p values.

use crate::error::{Error, Result};

/// ln Γ(z) for z > 0, Lanczos approximation.
pub fn ln_gamma(z: f64) -> f64 {
    const C: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut sum = 1.000_000_000_190_015;
    for (i, &c) in C.iter().enumerate() {
        sum += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.506_628_274_631_000_5 * sum / z).ln()
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) || a <= 0.0 || b <= 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    // symmetry keeps the fraction in its fast-converging region
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - inc_beta(1.0 - x, b, a);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    let front = ln_front.exp();

    const TINY: f64 = 1e-30;
    const EPS: f64 = 1e-15;
    let mut f = 1.0;
    let mut c = 1.0;
    let mut d = 0.0;
    let step = |numerator: f64, f: &mut f64, c: &mut f64, d: &mut f64| -> f64 {
        *d = 1.0 + numerator * *d;
        if d.abs() < TINY {
            *d = TINY;
        }
        *d = 1.0 / *d;
        *c = 1.0 + numerator / *c;
        if c.abs() < TINY {
            *c = TINY;
        }
        let delta = *c * *d;
        *f *= delta;
        delta
    };
    for m in 0..300 {
        let mf = m as f64;
        let odd = -(a + mf) * (a + b + mf) * x / ((a + 2.0 * mf) * (a + 2.0 * mf + 1.0));
        let delta = step(odd, &mut f, &mut c, &mut d);
        if (delta - 1.0).abs() < EPS {
            break;
        }
        let even = (mf + 1.0) * (b - mf - 1.0) * x / ((a + 2.0 * mf + 1.0) * (a + 2.0 * mf + 2.0));
        let delta = step(even, &mut f, &mut c, &mut d);
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    front / (f * a)
}

/// Two-sided p value for a Student t statistic with `df` degrees of freedom,
/// from the regularized incomplete beta identity
/// `P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: usize) -> f64 {
    let v = df as f64;
    inc_beta(v / (v + t * t), v / 2.0, 0.5)
}

/// Result of one paired two-sided t-test. When every pairwise difference is
/// zero the statistic is undefined; the test is flagged degenerate and
/// reported with p = 1 by convention.
#[derive(Debug, Clone, Copy)]
pub struct PairedTTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub degenerate: bool,
}

/// Standard paired t-test: `t = mean(d) / (sd(d)/sqrt(n))`, n-1 degrees of
/// freedom, two-sided p via the incomplete beta. Inputs must be aligned
/// pairs of equal length at least 2.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired t-test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least 2 pairs".into()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    if var == 0.0 {
        return Ok(PairedTTest {
            t: 0.0,
            p: 1.0,
            df,
            degenerate: true,
        });
    }
    let t = mean / (var / n).sqrt();
    Ok(PairedTTest {
        t,
        p: student_t_two_sided_p(t, df),
        df,
        degenerate: false,
    })
}

/// Aggregates over one experiment cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub attempts: usize,
    pub successes: usize,
    pub success_rate_pct: f64,
    pub pass_mean: f64,
    /// Sample standard deviation (n-1 denominator); 0 for a single attempt.
    pub pass_std: f64,
}

/// Mean, sample standard deviation and success percentage over a cell's
/// attempts. The `pass` inputs must already carry the accounting
/// conventions (measured PASS on success, 0 on failure, 1 when the probe's
/// own class was the target). An empty cell is absent, not zero.
pub fn compute_stats(attempts: &[(bool, f64)]) -> Option<CellStats> {
    if attempts.is_empty() {
        return None;
    }
    let n = attempts.len() as f64;
    let successes = attempts.iter().filter(|(s, _)| *s).count();
    let mean = attempts.iter().map(|(_, p)| p).sum::<f64>() / n;
    let std = if attempts.len() == 1 {
        0.0
    } else {
        (attempts.iter().map(|(_, p)| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some(CellStats {
        attempts: attempts.len(),
        successes,
        success_rate_pct: 100.0 * successes as f64 / n,
        pass_mean: mean,
        pass_std: std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convention_arithmetic_example() {
        // one original-class target (success, PASS 1), one failure (PASS 0),
        // one measured success at 0.98
        let stats = compute_stats(&[(true, 1.0), (false, 0.0), (true, 0.98)]).unwrap();
        assert!((stats.pass_mean - 0.66).abs() < 1e-12);
        assert_eq!(stats.successes, 2);
        assert!((stats.success_rate_pct - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn all_failures_average_zero() {
        let stats = compute_stats(&[(false, 0.0); 5]).unwrap();
        assert_eq!(stats.success_rate_pct, 0.0);
        assert_eq!(stats.pass_mean, 0.0);
        assert_eq!(stats.pass_std, 0.0);
    }

    #[test]
    fn empty_cell_is_absent() {
        assert!(compute_stats(&[]).is_none());
    }

    #[test]
    fn stats_match_streaming_moments() {
        let mut rng = crate::net::seeded_rng(4);
        use rand::Rng;
        let attempts: Vec<(bool, f64)> =
            (0..400).map(|_| (rng.random_bool(0.8), rng.random_range(0.0..1.0))).collect();
        let stats = compute_stats(&attempts).unwrap();
        // independent single-pass accumulation of shifted moments
        let (mut count, mut m1, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        for (_, p) in &attempts {
            count += 1.0;
            let delta = p - m1;
            m1 += delta / count;
            m2 += delta * (p - m1);
        }
        assert!((stats.pass_mean - m1).abs() < 1e-12);
        assert!((stats.pass_std - (m2 / (count - 1.0)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_t_statistic() {
        // d = (1,2,3): mean 2, sd 1, t = 2*sqrt(3)
        let r = paired_ttest(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((r.t - 2.0 * 3.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert!(!r.degenerate);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let r = paired_ttest(&[0.5, 0.7, 0.9], &[0.5, 0.7, 0.9]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn length_preconditions() {
        assert!(paired_ttest(&[1.0], &[2.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn p_values_against_known_references() {
        // classic values: t=2.0, df=10 -> p ~ 0.07339; t=1.0, df=1 -> p = 0.5
        assert!((student_t_two_sided_p(2.0, 10) - 0.073_388).abs() < 1e-5);
        assert!((student_t_two_sided_p(1.0, 1) - 0.5).abs() < 1e-12);
        // symmetric in t
        assert_eq!(student_t_two_sided_p(-2.5, 7), student_t_two_sided_p(2.5, 7));
    }

    #[test]
    fn ln_gamma_reference_points() {
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-10);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-10);
    }

    #[test]
    fn inc_beta_boundaries_and_symmetry() {
        assert_eq!(inc_beta(0.0, 2.0, 3.0), 0.0);
        assert_eq!(inc_beta(1.0, 2.0, 3.0), 1.0);
        let x = 0.37;
        let s = inc_beta(x, 2.5, 1.75) + inc_beta(1.0 - x, 1.75, 2.5);
        assert!((s - 1.0).abs() < 1e-12);
        // I_x(1,1) is the identity
        assert!((inc_beta(0.42, 1.0, 1.0) - 0.42).abs() < 1e-12);
    }
}
