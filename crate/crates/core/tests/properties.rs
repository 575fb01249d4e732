//! Randomized invariants over the numeric kernels.

use proptest::prelude::*;
use stagem::math::{log_sum_exp, log_sum_exp2};
use stagem::timedist::{
    fit_exponential, fit_geometric, fit_weibull, WeightedTimeSample,
};
use stagem::TimeDist;

fn samples(taus: &[f64]) -> Vec<WeightedTimeSample> {
    taus.iter().map(|&t| WeightedTimeSample::new(t, 1.0)).collect()
}

proptest! {
    #[test]
    fn log_sum_exp_is_permutation_invariant(mut xs in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let a = log_sum_exp(&xs);
        xs.reverse();
        let b = log_sum_exp(&xs);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn log_sum_exp_bounds(xs in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let lse = log_sum_exp(&xs);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lse >= max - 1e-12);
        prop_assert!(lse <= max + (xs.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn log_sum_exp2_agrees_with_vector_form(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let x = log_sum_exp2(a, b);
        let y = log_sum_exp(&[a, b]);
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn fitted_distributions_are_valid_and_weight_scale_invariant(
        taus in prop::collection::vec(0.01f64..500.0, 1..40),
        scale in 0.1f64..10.0,
    ) {
        let unit = samples(&taus);
        let scaled: Vec<WeightedTimeSample> =
            unit.iter().map(|s| WeightedTimeSample::new(s.tau, scale)).collect();
        for fitfn in [fit_geometric, fit_exponential, fit_weibull] {
            let a = fitfn(&unit).unwrap();
            prop_assert!(a.check().is_ok(), "{a:?}");
            let b = fitfn(&scaled).unwrap();
            // responsibilities are relative weights: rescaling all of them
            // must not move the MLE
            let (pa, pb) = (a.params(), b.params());
            prop_assert!((pa[0] - pb[0]).abs() <= 1e-9 * pa[0].abs().max(1.0), "{a:?} vs {b:?}");
            prop_assert!((pa[1] - pb[1]).abs() <= 1e-9 * pa[1].abs().max(1.0), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn log_weight_is_finite_and_nonpositive_on_support(
        tau in 0.0f64..200.0,
        rate in 0.01f64..20.0,
    ) {
        // survival weights are probabilities
        let d = TimeDist::Exponential { rate };
        let lw = d.log_weight(tau).unwrap();
        prop_assert!(lw <= 0.0 && lw.is_finite());
    }
}
