//! Contrastive objective values at a few strength pairs, computed once by a
//! separate dictionary-based enumeration and frozen here.

use gala_core::oracle::{population_contrastive, PartitionRule, SamplingScheme, SelectorChoice};
use gala_core::{EnvParams, EnvironmentSet};

const TOL: f64 = 1e-9;

// (a, b, ciga [inv, spu, both], gala spurious-bit partition, gala bayes partition)
const FROZEN: &[(f64, f64, [f64; 3], [f64; 3], [f64; 3])] = &[
    (0.8, 0.6,
     [0.418587746896755, 0.053508417083157, 0.283025682430953],
     [0.418587746896755, -0.409265846365967, 0.052157519703659],
     [-0.365683014647468, 0.053508417083157, -0.104938138065320]),
    (0.8, 0.7,
     [0.418587746896755, 0.209994011430799, 0.357955633865299],
     [0.418587746896755, -0.388797802369322, 0.060339699531132],
     [-0.365683014647468, 0.209994011430799, -0.030000666365132]),
    (0.8, 0.9,
     [0.418587746896755, 0.681146345985121, 0.580413511227055],
     [0.418587746896755, -0.339579818558353, 0.078293569412256],
     [0.418587746896755, -0.339579818558353, 0.078293569412256]),
    (0.7, 0.9,
     [0.209994011430799, 0.681146345985120, 0.481371091693350],
     [0.209994011430799, -0.339579818558353, -0.020751624842605],
     [0.209994011430799, -0.339579818558353, -0.020751624842605]),
    (0.7, 0.7,
     [0.209994011430799, 0.209994011430799, 0.258912994620387],
     [0.209994011430799, -0.388797802369322, -0.038703548641444],
     [-0.010651895469261, -0.010651895469261, 0.040046451358556]),
];

#[test]
fn contrastive_values_match_frozen_enumeration() {
    for &(a, b, ciga, gala_spu, gala_bayes) in FROZEN {
        let set = EnvironmentSet::uniform(vec![EnvParams::from_strengths(a, b, 3).unwrap()]).unwrap();
        let schemes = [
            (SamplingScheme::CigaIntraclass, ciga),
            (SamplingScheme::GalaCrossPartition(PartitionRule::AssistantSpuriousBit), gala_spu),
            (SamplingScheme::GalaCrossPartition(PartitionRule::Bayes), gala_bayes),
        ];
        for (scheme, want) in schemes {
            for (sel, w) in SelectorChoice::ALL.into_iter().zip(want) {
                let got = population_contrastive(&set, sel, scheme).unwrap();
                assert!((got - w).abs() < TOL, "({a},{b}) {scheme:?} {sel:?}: {got} vs {w}");
            }
        }
    }
}
