//! Lift, Welch confidence intervals and MAPE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{mean, sample_variance, sqrt, student_t_cdf, student_t_quantile};
use crate::types::Metric;

/// Relative lift of one metric between the treatment and control sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftResult {
    pub metric: Metric,
    pub lift_percent: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// Percentage change of `treatment_mean` relative to `control_mean`.
pub fn compute_lift(treatment_mean: f64, control_mean: f64) -> Result<f64> {
    if control_mean == 0.0 {
        return Err(Error::ZeroControl);
    }
    Ok((treatment_mean - control_mean) / control_mean * 100.0)
}

/// Result of a two-sample unequal-variance t-test on means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub mean_difference: f64,
    pub std_error: f64,
    pub dof: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    /// Half-width of the `1 - alpha` confidence interval on the mean difference.
    pub half_width: f64,
}

pub fn welch_test(treatment: &[f64], control: &[f64], alpha: f64) -> Result<WelchTest> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(alloc::format!("alpha must lie in (0, 1), got {alpha}")));
    }
    for s in [treatment, control] {
        if s.len() < 2 {
            return Err(Error::DegenerateSample(s.len()));
        }
    }
    let (nt, nc) = (treatment.len() as f64, control.len() as f64);
    let diff = mean(treatment) - mean(control);
    let vt = sample_variance(treatment) / nt;
    let vc = sample_variance(control) / nc;
    let se2 = vt + vc;
    if se2 == 0.0 {
        // Both sides constant: the difference is known exactly.
        let p_value = if diff == 0.0 { 1.0 } else { 0.0 };
        return Ok(WelchTest {
            mean_difference: diff,
            std_error: 0.0,
            dof: f64::INFINITY,
            t_statistic: if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY },
            p_value,
            half_width: 0.0,
        });
    }
    let se = sqrt(se2);
    let dof = se2 * se2 / (vt * vt / (nt - 1.0) + vc * vc / (nc - 1.0));
    let t = diff / se;
    let p_value = (2.0 * (1.0 - student_t_cdf(t.abs(), dof))).clamp(0.0, 1.0);
    let half_width = student_t_quantile(1.0 - alpha / 2.0, dof) * se;
    Ok(WelchTest { mean_difference: diff, std_error: se, dof, t_statistic: t, p_value, half_width })
}

/// Lift of the treatment over the control sample with a Welch confidence interval
/// mapped onto the lift scale.
pub fn lift_with_ci(metric: Metric, treatment: &[f64], control: &[f64], alpha: f64) -> Result<LiftResult> {
    let test = welch_test(treatment, control, alpha)?;
    let control_mean = mean(control);
    let lift_percent = compute_lift(mean(treatment), control_mean)?;
    let a = (test.mean_difference - test.half_width) / control_mean * 100.0;
    let b = (test.mean_difference + test.half_width) / control_mean * 100.0;
    Ok(LiftResult {
        metric,
        lift_percent,
        ci_low: a.min(b).min(lift_percent),
        ci_high: a.max(b).max(lift_percent),
        p_value: test.p_value,
    })
}

/// Mean absolute percentage error of `estimates` against `ground_truth`.
pub fn mape(estimates: &[f64], ground_truth: &[f64]) -> Result<f64> {
    if estimates.len() != ground_truth.len() {
        return Err(Error::LengthMismatch { expected: ground_truth.len(), found: estimates.len() });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(i) = ground_truth.iter().position(|&t| t == 0.0) {
        return Err(Error::ZeroTruth(i));
    }
    let total: f64 = estimates.iter().zip(ground_truth).map(|(e, t)| ((e - t) / t).abs()).sum();
    Ok(total / estimates.len() as f64 * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn lift_examples() {
        assert_eq!(compute_lift(110.0, 100.0).unwrap(), 10.0);
        assert_eq!(compute_lift(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(compute_lift(80.0, 100.0).unwrap(), -20.0);
        assert_eq!(compute_lift(1.0, 0.0), Err(Error::ZeroControl));
    }

    #[test]
    fn identical_samples_have_zero_lift() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let r = lift_with_ci(Metric::Cost, &s, &s, 0.05).unwrap();
        assert_eq!(r.lift_percent, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(r.ci_low <= 0.0 && 0.0 <= r.ci_high);
    }

    #[test]
    fn constant_samples_give_point_interval() {
        let r = lift_with_ci(Metric::Reach, &[2.0; 4], &[1.0; 4], 0.05).unwrap();
        assert_eq!(r.lift_percent, 100.0);
        assert_eq!((r.ci_low, r.ci_high), (100.0, 100.0));
        assert_eq!(r.p_value, 0.0);
        let same = lift_with_ci(Metric::Reach, &[1.0; 3], &[1.0; 3], 0.05).unwrap();
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn degenerate_and_zero_control() {
        assert_eq!(lift_with_ci(Metric::Cost, &[1.0], &[1.0, 2.0], 0.05), Err(Error::DegenerateSample(1)));
        assert_eq!(lift_with_ci(Metric::Cost, &[1.0, 2.0], &[0.0, 0.0], 0.05), Err(Error::ZeroControl));
    }

    #[test]
    fn welch_matches_hand_computation() {
        // Means 3 and 2, variances 2.5 and 1.0 (n = 5 each).
        let t = [1.0, 2.0, 3.0, 4.0, 5.0];
        let c = [1.0, 1.5, 2.0, 2.5, 3.0];
        let w = welch_test(&t, &c, 0.05).unwrap();
        let vt = 2.5 / 5.0;
        let vc = 0.625 / 5.0;
        let se = libm::sqrt(vt + vc);
        let dof = (vt + vc) * (vt + vc) / (vt * vt / 4.0 + vc * vc / 4.0);
        assert!((w.std_error - se).abs() < 1e-12);
        assert!((w.dof - dof).abs() < 1e-9);
        assert!((w.t_statistic - 1.0 / se).abs() < 1e-12);
    }

    #[test]
    fn detects_ten_percent_lift() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t: Vec<f64> = Normal::new(1.1, 0.1).unwrap().sample_iter(&mut rng).take(1000).collect();
        let c: Vec<f64> = Normal::new(1.0, 0.1).unwrap().sample_iter(&mut rng).take(1000).collect();
        let r = lift_with_ci(Metric::Returns, &t, &c, 0.05).unwrap();
        assert!((5.0..=15.0).contains(&r.lift_percent), "{r:?}");
        assert!(r.p_value < 0.01);
        assert!(r.ci_low < r.lift_percent && r.lift_percent < r.ci_high);
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0], &[1.0]).unwrap(), 0.0);
        assert!((mape(&[1.1, 0.9], &[1.0, 1.0]).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(mape(&[2.0], &[1.0]).unwrap(), 100.0);
        assert_eq!(mape(&[2.0, 1.0], &[1.0, 0.0]), Err(Error::ZeroTruth(1)));
        assert!(matches!(mape(&[2.0], &[1.0, 1.0]), Err(Error::LengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn lift_of_equal_means_is_zero(c in prop_oneof![-1e6..-1e-6f64, 1e-6..1e6f64]) {
            prop_assert_eq!(compute_lift(c, c).unwrap(), 0.0);
        }

        #[test]
        fn lift_reflection(t in -1e3..1e3f64, c in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64]) {
            let a = compute_lift(t, c).unwrap();
            let b = compute_lift(2.0 * c - t, c).unwrap();
            prop_assert!((a + b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn mape_scale_invariant(pairs in proptest::collection::vec((0.1..10.0f64, 0.1..10.0f64), 1..20), k in 0.01..100.0f64) {
            let (e, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let es: Vec<f64> = e.iter().map(|v| v * k).collect();
            let ts: Vec<f64> = t.iter().map(|v| v * k).collect();
            let a = mape(&e, &t).unwrap();
            let b = mape(&es, &ts).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn lift_ci_contains_point(t in proptest::collection::vec(0.0..10.0f64, 2..30),
                                  c in proptest::collection::vec(0.1..10.0f64, 2..30)) {
            let r = lift_with_ci(Metric::Cost, &t, &c, 0.05).unwrap();
            prop_assert!(r.ci_low <= r.lift_percent && r.lift_percent <= r.ci_high);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
