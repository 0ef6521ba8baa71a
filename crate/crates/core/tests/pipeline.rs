use ope_core::binning::make_binning;
use ope_core::estimators::{ipw, BehaviorSource, DiscreteOpeInput};
use ope_core::exec::{Executor, Sequential};
use ope_core::policy::{BinPolicy, GaussianLoggingBins};
use ope_core::sim::{expected_policy_value_with, generate_log, generate_log_with, presets, true_policy_value, PolicySpec};
use ope_core::types::Metric;
use proptest::prelude::*;

/// Evaluates indices back to front; the output order must still be by index.
struct Reversed;

impl Executor for Reversed {
    fn map_indexed<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let mut out: Vec<(usize, T)> = (0..len).rev().map(|i| (i, f(i))).collect();
        out.reverse();
        out.into_iter().map(|(_, v)| v).collect()
    }
}

#[test]
fn logs_do_not_depend_on_evaluation_order() {
    let auction = presets::default_auction();
    let a = generate_log_with(&auction, &presets::policy_y(), 500, 12, &Sequential).unwrap();
    let b = generate_log_with(&auction, &presets::policy_y(), 500, 12, &Reversed).unwrap();
    assert_eq!(a, b);
}

#[test]
fn closed_form_oracle_agrees_with_monte_carlo() {
    let auction = presets::default_auction();
    let policy = presets::policy_z();
    let mc = true_policy_value(&auction, &policy, 60_000, 3).unwrap();
    let exact = expected_policy_value_with(&auction, &policy, 60_000, 4, &Sequential).unwrap();
    for m in Metric::ALL {
        let se = mc.std_error.get(m).hypot(exact.std_error.get(m));
        assert!((mc.get(m) - exact.get(m)).abs() < 5.0 * se, "{m}: {} vs {}", mc.get(m), exact.get(m));
    }
}

fn noisy_linear(intercept: f64, noise: f64) -> PolicySpec {
    PolicySpec::linear(vec![0.1, -0.2, 0.05, 0.0, 0.1, 0.0], intercept, 0.0, noise)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gaussian_logging_bins_are_distributions(
        seed in any::<u64>(),
        intercept in 0.2f64..2.0,
        noise in 0.05f64..1.0,
        bins in 2usize..12,
    ) {
        let policy = noisy_linear(intercept, noise);
        let log = generate_log(&presets::default_auction(), &policy, 200, seed).unwrap();
        let binning = make_binning(&log, bins).unwrap();
        let view = GaussianLoggingBins { policy: &policy, noise_sd: noise, binning: &binning };
        for r in log.records().iter().take(20) {
            let p = view.bin_probabilities(r.context.features());
            prop_assert_eq!(p.len(), binning.num_bins());
            prop_assert!(p.iter().all(|v| *v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn on_policy_ipw_is_the_sample_mean(seed in any::<u64>(), intercept in 0.5f64..1.5) {
        let policy = noisy_linear(intercept, 0.3);
        let log = generate_log(&presets::default_auction(), &policy, 150, seed).unwrap();
        let binning = make_binning(&log, 6).unwrap();
        let view = GaussianLoggingBins { policy: &policy, noise_sd: 0.3, binning: &binning };
        for metric in Metric::ALL {
            let input = DiscreteOpeInput {
                dataset: &log,
                binning: &binning,
                behavior: BehaviorSource::Model(&view),
                evaluation: &view,
                reward_model: None,
                clip_lambda: None,
                metric,
            };
            let r = ipw(&input).unwrap();
            prop_assert!((r.value - log.metric_mean(metric)).abs() < 1e-12);
            prop_assert!((r.effective_sample_size - log.len() as f64).abs() < 1e-6);
        }
    }
}
