use nfg::data::{generate_synthetic, split_folds, SyntheticSpec};
use nfg::metrics::{auc_td, brier_td, c_index_td, Cohort, KaplanMeier};
use nfg::model::{decode_checkpoint, encode_checkpoint};
use nfg::objectives::loss_value;
use nfg::verification::brute_force_metrics;
use nfg::{Architecture, NfgModel, Objective, SurvivalBatch, SurvivalDataset, Variant};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Nfg), Just(Variant::MonoFg)]
}

fn model(variant: Variant, seed: u64, p: usize, layers: usize, nodes: usize) -> NfgModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = NfgModel::new(variant, 2, p, Architecture { layers, nodes, dropout: 0.0 }, &mut rng).unwrap();
    m.set_t_scale(3.0).unwrap();
    m
}

fn cohort() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, Vec<f64>)> {
    (1usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec((1u32..=12).prop_map(|k| k as f64 * 0.5), n),
            prop::collection::vec(0usize..=2, n),
            prop::collection::vec(0.0f64..1.0, n),
        )
    })
}

fn same(a: Result<f64, impl std::fmt::Debug>, b: Result<f64, &str>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => (x - y).abs() <= 1e-12,
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incidences_start_at_zero_and_stay_bounded(
        v in variant(),
        seed in 0u64..1000,
        x in prop::collection::vec(-3.0f64..3.0, 4),
        t in 0.0f64..20.0,
    ) {
        let m = model(v, seed, 4, 1, 8);
        let at_zero = m.cif(&x, 0.0).unwrap();
        prop_assert!(at_zero.cif.iter().all(|&f| f == 0.0));
        let e = m.cif(&x, t).unwrap();
        prop_assert!(e.cif.iter().sum::<f64>() <= 1.0 + 1e-12);
        prop_assert!(e.cif.iter().all(|&f| f >= 0.0));
    }

    #[test]
    fn incidences_are_monotone_in_time(
        v in variant(),
        seed in 0u64..1000,
        x in prop::collection::vec(-3.0f64..3.0, 4),
        t1 in 0.0f64..10.0,
        dt in 0.0f64..10.0,
    ) {
        let m = model(v, seed, 4, 2, 6);
        let a = m.cif(&x, t1).unwrap();
        let b = m.cif(&x, t1 + dt).unwrap();
        for (fa, fb) in a.cif.iter().zip(&b.cif) {
            prop_assert!(fb >= fa);
        }
        let d = m.cif_derivative(&x, t1).unwrap();
        prop_assert!(d.density.unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn loss_is_additive_over_batches(seed in 0u64..500, split in 1usize..39) {
        let data = generate_synthetic(&SyntheticSpec { n: 40, p: 4, gammas: vec![vec![0.3, 0.3, 0.0, 0.0], vec![0.0, 0.0, 0.3, 0.3]], seed, ..SyntheticSpec::default() }).unwrap();
        let m = model(Variant::Nfg, seed, 4, 1, 5);
        let rows: Vec<usize> = (0..40).collect();
        let whole = loss_value(&m, Objective::Competing, &SurvivalBatch::new(&data, &rows)).unwrap().total;
        let a = loss_value(&m, Objective::Competing, &SurvivalBatch::new(&data, &rows[..split])).unwrap().total;
        let b = loss_value(&m, Objective::Competing, &SurvivalBatch::new(&data, &rows[split..])).unwrap().total;
        prop_assert!((whole - (a + b)).abs() <= 1e-10 * whole.abs().max(1.0));
    }

    #[test]
    fn loss_ignores_row_order(seed in 0u64..500, rotate in 0usize..30) {
        let data = generate_synthetic(&SyntheticSpec { n: 30, p: 4, gammas: vec![vec![0.3, 0.3, 0.0, 0.0], vec![0.0, 0.0, 0.3, 0.3]], seed, ..SyntheticSpec::default() }).unwrap();
        let m = model(Variant::MonoFg, seed, 4, 1, 5);
        let rows: Vec<usize> = (0..30).collect();
        let mut shuffled = rows.clone();
        shuffled.rotate_left(rotate);
        shuffled.reverse();
        let a = loss_value(&m, Objective::Competing, &SurvivalBatch::new(&data, &rows)).unwrap();
        let b = loss_value(&m, Objective::Competing, &SurvivalBatch::new(&data, &shuffled)).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-10 * a.total.abs().max(1.0));
        prop_assert_eq!(a.floored_terms, 0);
    }

    #[test]
    fn metrics_match_brute_force((times, events, preds) in cohort(), horizon in 0.5f64..6.5, risk in 1usize..=2) {
        let c = Cohort::new(times.clone(), events.clone()).unwrap();
        let bf = brute_force_metrics(&preds, &times, &events, risk, horizon);
        prop_assert!(same(c_index_td(&c, &preds, risk, horizon), bf.c_index));
        prop_assert!(same(brier_td(&c, &preds, risk, horizon), bf.brier));
        prop_assert!(same(auc_td(&c, &preds, risk, horizon), bf.auc));
    }

    #[test]
    fn kaplan_meier_is_a_nonincreasing_probability(
        times in prop::collection::vec(0.1f64..10.0, 1..40),
        flags in prop::collection::vec(any::<bool>(), 40),
    ) {
        let observed = &flags[..times.len()];
        let km = KaplanMeier::fit(&times, observed).unwrap();
        let mut last = 1.0;
        for k in 0..=110 {
            let s = km.survival_at(k as f64 * 0.1);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(s <= last + 1e-15);
            prop_assert!(km.survival_before(k as f64 * 0.1) >= s);
            last = s;
        }
    }

    #[test]
    fn concordance_and_auc_ignore_monotone_rescaling((times, events, preds) in cohort(), horizon in 0.5f64..6.5) {
        let c = Cohort::new(times, events).unwrap();
        let squashed: Vec<f64> = preds.iter().map(|p| p * p * 0.5).collect();
        let (a, b) = (c_index_td(&c, &preds, 1, horizon), c_index_td(&c, &squashed, 1, horizon));
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        if let (Ok(a), Ok(b)) = (auc_td(&c, &preds, 1, horizon), auc_td(&c, &squashed, 1, horizon)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn folds_partition_rows_evenly(n in 5usize..80, k in 2usize..5, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let times: Vec<f64> = (0..n).map(|i| 1.0 + (i * 7 % 13) as f64).collect();
        let events: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let data = SurvivalDataset::new(vec![0.0; n], times, events, vec!["x".into()], 2).unwrap();
        let labels = split_folds(&data, k, seed).unwrap();
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
    }

    #[test]
    fn checkpoints_round_trip(v in prop_oneof![Just(Variant::Nfg), Just(Variant::MonoFg), Just(Variant::CauseSpecific)], seed in 0u64..1000, layers in 1usize..3) {
        let m = model(v, seed, 3, layers, 4);
        let bytes = encode_checkpoint(&m);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(encode_checkpoint(&back), bytes);
    }
}
