use proptest::prelude::*;

use kpr_core::alteration::required_q;
use kpr_core::center::standard_knapsack_center;
use kpr_core::harness::generators::{gen_instance, FacilitySpec, MetricSpec, WeightModel};
use kpr_core::harness::rng::stream;
use kpr_core::median_bipoint::km_bifactor;
use kpr_core::median_pairs::MedianPipeline;
use kpr_core::rounding::kpr_depround;
use kpr_core::tails::{chernoff_lower, chernoff_upper};
use kpr_core::Error;

fn metric(k: u8) -> MetricSpec {
    match k % 3 {
        0 => MetricSpec::UniformSquare,
        1 => MetricSpec::RandomTree,
        _ => MetricSpec::ClusteredGaussian {
            clusters: 3,
            sigma: 0.1,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // With sparsity switched off the rounding runs on fractional leaves.
    #[test]
    fn center_rounding_respects_budget_and_triple_radius(seed in 0u64..10_000, nf in 4usize..9, nc in 4usize..12, k in 0u8..3) {
        let spec = FacilitySpec { metric: metric(k), ..FacilitySpec::new(nf, nc, 1) };
        let inst = gen_instance(&spec, &mut stream(seed, "prop/center", 0)).unwrap();
        let out = standard_knapsack_center(&inst, 0.2, Some(1.0), Some(6), &mut stream(seed, "prop/center", 1)).unwrap();
        for r in &out.rounds {
            prop_assert!(inst.loads(&r.set)[0] <= 1.0 + 1e-9);
            prop_assert!(inst.radius(&r.set) <= 3.0 * out.radius * (1.0 + 1e-9) + 1e-12);
        }
        prop_assert!(inst.loads(&out.set)[0] <= 1.0 + 1e-9);
    }

    #[test]
    fn bifactor_discards_at_most_four_t(seed in 0u64..10_000, nf in 3usize..10, nc in 3usize..12) {
        let spec = FacilitySpec {
            weights: WeightModel::TwoScale { big_fraction: 0.3, big: 0.8, small: 0.2 },
            ..FacilitySpec::new(nf, nc, 1)
        };
        let inst = gen_instance(&spec, &mut stream(seed, "prop/bifactor", 0)).unwrap();
        match km_bifactor(&inst, 0.1, &mut stream(seed, "prop/bifactor", 1)) {
            Ok(o) => {
                prop_assert!(o.solution.q <= 4 * o.t);
                prop_assert!(required_q(&o.solution.selected, &inst.weights) <= o.solution.q);
            }
            Err(Error::RetryCap { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn median_pipeline_is_validator_clean(seed in 0u64..10_000, nf in 3usize..9, nc in 2usize..10, m in 1usize..3) {
        let inst = gen_instance(&FacilitySpec::new(nf, nc, m), &mut stream(seed, "prop/median", 0)).unwrap();
        let p = MedianPipeline::prepare(&inst).unwrap();
        p.lp.validate(&inst).unwrap();
        p.bundling.validate(&inst, &p.split).unwrap();
    }

    #[test]
    fn depround_keeps_rows(seed in 0u64..10_000, v in 2usize..30, m in 1usize..3) {
        let mut rng = stream(seed, "prop/dep", 0);
        let x: Vec<f64> = (0..v).map(|_| rand::Rng::gen_range(&mut rng, 0.0..=1.0)).collect();
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..v).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect()).collect();
        let out = kpr_depround(&x, &rows, 12 * m + 1, &mut rng).unwrap();
        for row in &rows {
            let a: f64 = row.iter().zip(&x).map(|(p, q)| p * q).sum();
            let b: f64 = row.iter().zip(&out).map(|(p, q)| p * q).sum();
            prop_assert!((a - b).abs() <= 1e-7);
        }
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn chernoff_terms_decrease_in_delta(mu in 0.1f64..20.0, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(chernoff_lower(mu, hi) <= chernoff_lower(mu, lo) + 1e-15);
        prop_assert!(chernoff_upper(mu, hi) <= chernoff_upper(mu, lo) + 1e-15);
    }
}
