//! Long-run simulation of the list process against its exact
//! stationary law, with uncertainty taken across independent seeds so
//! autocorrelation within a run cannot fake precision.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use solist_core::list::run_trace;
use solist_core::stationary::ProductForm;
use solist_core::{CostRecorder, ListState, Policy, RequestDistribution};

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn two_item_trace_matches_exact_tail() {
    // Exact stationary Pr[C > 1] for pmf (0.7, 0.3) under the
    // transposition rule: 2 * 0.7 * 0.3 = 0.42.
    let dist = RequestDistribution::explicit(vec![0.7, 0.3]).unwrap();
    let exact = ProductForm::new(&[0.7, 0.3]).unwrap().cost_tail(1);
    assert!((exact - 0.42).abs() < 1e-14);

    let mut tails = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xA11CE + seed);
        let mut state = ListState::new();
        for _ in 0..20_000 {
            let item = dist.sample(&mut rng);
            state.apply_request(item, Policy::Transposition);
        }
        let mut rec = CostRecorder::new(vec![1]).unwrap();
        run_trace(
            &mut state,
            &dist,
            Policy::Transposition,
            100_000,
            &mut rng,
            &mut rec,
        );
        tails.push(rec.tail_fractions()[0]);
    }
    let (mean, se) = mean_and_se(&tails);
    assert!(
        (mean - exact).abs() <= 3.0 * se + 1e-4,
        "Pr[C>1]: {mean} vs {exact} (se {se})"
    );
}

#[test]
fn four_item_occupancy_matches_product_form() {
    let pmf = [0.4, 0.3, 0.2, 0.1];
    let dist = RequestDistribution::explicit(pmf.to_vec()).unwrap();
    let pf = ProductForm::new(&pmf).unwrap();

    let seeds = 20u64;
    let steps = 50_000u64;
    let mut freqs: std::collections::HashMap<Vec<u64>, Vec<f64>> = Default::default();
    for seed in 0..seeds {
        let mut rng = ChaCha12Rng::seed_from_u64(0xF0C0 + seed);
        let mut state = ListState::new();
        for _ in 0..20_000 {
            let item = dist.sample(&mut rng);
            state.apply_request(item, Policy::Transposition);
        }
        let mut counts: std::collections::HashMap<Vec<u64>, u64> = Default::default();
        for _ in 0..steps {
            let item = dist.sample(&mut rng);
            state.apply_request(item, Policy::Transposition);
            *counts.entry(state.order_prefix(4)).or_insert(0) += 1;
        }
        for (order, count) in counts {
            freqs
                .entry(order)
                .or_insert_with(|| Vec::with_capacity(seeds as usize))
                .push(count as f64 / steps as f64);
        }
    }

    use itertools::Itertools;
    for order in (1..=4u64).permutations(4) {
        let exact = pf.prob_of_order(&order).unwrap();
        let mut samples = freqs.remove(&order).unwrap_or_default();
        samples.resize(seeds as usize, 0.0);
        let (mean, se) = mean_and_se(&samples);
        assert!(
            (mean - exact).abs() <= 3.0 * se + 5e-4,
            "order {order:?}: {mean} vs {exact} (se {se})"
        );
    }
}
