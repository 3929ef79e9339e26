use gala_core::oracle::{
    augment_table, cell_stats, construct_twin, identifiability_scan, linspace, partition_cells,
    population_contrastive, square_grid, swap_augmentation, Featurizer, PartitionRule,
    SamplingScheme, SelectorChoice,
};
use gala_core::scm::{exact_joint, marginal_strengths, mix_environments};
use gala_core::synth::build_splits;
use gala_core::{EnvParams, EnvironmentSet, JointTable, Slot};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = EnvParams> {
    (0.0..=1.0f64, 0.0..=1.0f64, prop_oneof![Just(2usize), Just(3usize)])
        .prop_map(|(a, b, k)| EnvParams::new(a, b, k).unwrap())
}

proptest! {
    #[test]
    fn joint_is_normalized_and_factorizes(e in params()) {
        let t = exact_joint(&e);
        let k = e.num_classes;
        prop_assert!((t.total() - 1.0).abs() < 1e-12);
        prop_assert!(t.probs.iter().all(|&p| p >= 0.0));
        for (y, m) in t.label_marginal().into_iter().enumerate() {
            prop_assert!((m - 1.0 / k as f64).abs() < 1e-12, "label {y}");
            for c in 0..k {
                for s in 0..k {
                    let pc: f64 = (0..k).map(|s| t.get(y, c, s)).sum::<f64>() / m;
                    let ps: f64 = (0..k).map(|c| t.get(y, c, s)).sum::<f64>() / m;
                    prop_assert!((t.get(y, c, s) / m - pc * ps).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mixing_ignores_environment_order(alpha in 0.0..=1.0f64, betas in prop::collection::vec(0.0..=1.0f64, 1..5)) {
        let envs: Vec<EnvParams> = betas.iter().map(|&b| EnvParams::ternary(alpha, b).unwrap()).collect();
        let mut rev = envs.clone();
        rev.reverse();
        let m1 = mix_environments(&EnvironmentSet::uniform(envs.clone()).unwrap()).unwrap();
        let m2 = mix_environments(&EnvironmentSet::uniform(rev).unwrap()).unwrap();
        prop_assert!((m1.beta - m2.beta).abs() < 1e-12 && (m1.alpha - alpha).abs() < 1e-12);
        // the mixed parameters reproduce the mixture table exactly
        let t = EnvironmentSet::uniform(envs).unwrap().mixture_table();
        prop_assert!(t.max_abs_diff(&exact_joint(&m1)) < 1e-12);
    }

    #[test]
    fn reversed_featurizer_leaves_no_invariant_signal(e in params()) {
        let v = swap_augmentation(&e).unwrap();
        let k = e.num_classes as f64;
        let (inv, spu) = v.strengths();
        prop_assert!((inv - 1.0 / k).abs() < 1e-12);
        prop_assert!((spu - e.strengths().1).abs() < 1e-12);
    }

    #[test]
    fn augmentation_is_role_symmetric(e in params()) {
        let t = exact_joint(&e);
        let a = augment_table(&t, Featurizer::Reversed);
        let b = augment_table(&t.swap_roles(), Featurizer::Faithful).swap_roles();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn twin_is_indistinguishable(alpha in 0.0..=1.0f64, b1 in 0.0..=1.0f64, b2 in 0.0..=1.0f64, k in prop_oneof![Just(2usize), Just(3usize)]) {
        let delta = ((b2 - b1).abs() / 2.0).min(alpha).min(1.0 - alpha);
        prop_assume!(delta > 1e-9);
        let set = EnvironmentSet::uniform(vec![
            EnvParams::new(alpha, b1, k).unwrap(),
            EnvParams::new(alpha, b2, k).unwrap(),
        ]).unwrap();
        let twin = construct_twin(&set).unwrap();
        prop_assert!(twin.mixture_table().max_abs_diff(&set.mixture_table()) < 1e-12);
        prop_assert_eq!(gala_core::oracle::invariant_slot(&twin), Some(Slot::Spurious));
    }

    #[test]
    fn spurious_partition_keeps_invariant_conditional(a in 0.34..=1.0f64, b in 0.34..0.999f64) {
        let t = exact_joint(&EnvParams::from_strengths(a, b, 3).unwrap());
        let (pos, neg) = partition_cells(&t, PartitionRule::AssistantSpuriousBit);
        let (p, n) = (cell_stats(&pos), cell_stats(&neg));
        prop_assert!((p.p_s_eq_y - 1.0).abs() < 1e-12 && n.p_s_eq_y.abs() < 1e-12);
        for y in 0..3 {
            for c in 0..3 {
                prop_assert!((p.c_given_y[y][c] - n.c_given_y[y][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contrastive_is_role_symmetric(a in 0.34..=1.0f64, b in 0.34..=1.0f64) {
        // swapping which piece is called invariant swaps the selector values
        let s1 = EnvironmentSet::uniform(vec![EnvParams::from_strengths(a, b, 3).unwrap()]).unwrap();
        let s2 = EnvironmentSet::uniform(vec![EnvParams::from_strengths(b, a, 3).unwrap()]).unwrap();
        let v = |s: &EnvironmentSet, sel| population_contrastive(s, sel, SamplingScheme::CigaIntraclass).unwrap();
        prop_assert!((v(&s1, SelectorChoice::Invariant) - v(&s2, SelectorChoice::Spurious)).abs() < 1e-12);
    }
}

#[test]
fn full_grid_scan_has_no_violations() {
    let grid = square_grid(&linspace(0.4, 0.95, 9));
    let report = identifiability_scan(&grid, 3).unwrap();
    assert_eq!(report.points.len(), 81);
    assert!(report.violations().is_empty(), "{:?}", report.violations());
}

#[test]
fn generated_split_matches_exact_joint() {
    let d = build_splits(0.8, 0.6, 1000, 77).unwrap();
    let records: Vec<_> = d.train.iter().map(|g| g.bits).collect();
    let emp = JointTable::from_records(3, &records);
    let (a, b) = marginal_strengths(&emp);
    assert!((a - 0.8).abs() < 0.03 && (b - 0.6).abs() < 0.03, "({a}, {b})");
    let exact = exact_joint(&EnvParams::from_strengths(0.8, 0.6, 3).unwrap());
    // labels are exactly balanced, so 3 * (9 - 1) = 24 degrees of freedom;
    // 40.27 is the 0.98 quantile
    let n = records.len() as f64;
    let chi2: f64 = emp.probs.iter().zip(&exact.probs).map(|(o, e)| n * (o - e).powi(2) / e).sum();
    assert!(chi2 < 40.27, "chi-square {chi2}");
    for g in d.train.iter().chain(&d.val).chain(&d.test) {
        g.validate().unwrap();
    }
}

#[test]
fn large_split_is_close_in_total_variation() {
    let d = build_splits(0.7, 0.9, 6000, 78).unwrap();
    let records: Vec<_> = d.train.iter().map(|g| g.bits).collect();
    let emp = JointTable::from_records(3, &records);
    let exact = exact_joint(&EnvParams::from_strengths(0.7, 0.9, 3).unwrap());
    assert!(emp.total_variation(&exact) <= 0.02, "{}", emp.total_variation(&exact));
}
