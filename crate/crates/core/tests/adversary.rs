//! The adversary game: DP values against brute force and simulation, the g certificate and tilting.

use proptest::prelude::*;

use svx::adversary::{
    self, alpha_beta, build_g_certificate, center_distance, check_g_dominates, optimal_strategy, phi_set,
    randomized_zero_probability, tilt_adversary, AdversaryError, Objective,
};
use svx::model::{sample_sequence, string_at, ExtractorTable, SourceSpec};

mod common;
use common::load_source;

/// `[min, max]` of `Pr[c^n ∈ I]` over every deterministic strategy, by enumeration.
fn brute_force(spec: &SourceSpec, table: &ExtractorTable) -> (f64, f64) {
    let (k, n, s) = (spec.alphabet_size(), table.depth(), spec.num_dice());
    let internal: usize = (0..n).map(|i| k.pow(i as u32)).sum();
    let total = s.pow(internal as u32);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for code in 0..total {
        // digit j of `code` in base s is the die at internal node j (levels concatenated)
        let die_at = |node: usize| code / s.pow(node as u32) % s;
        let mut mass = 0.0;
        for i in 0..table.labels().len() {
            if table.labels()[i] != 0 {
                continue;
            }
            let string = string_at(i, k, n);
            let mut p = 1.0;
            let mut offset = 0;
            for t in 0..n {
                let node = offset + svx::model::lex_index(&string[..t], k);
                p *= spec.die(die_at(node)).probs()[string[t]];
                offset += k.pow(t as u32);
            }
            mass += p;
        }
        lo = lo.min(mass);
        hi = hi.max(mass);
    }
    (lo, hi)
}

fn small_game() -> impl Strategy<Value = (SourceSpec, ExtractorTable)> {
    (2usize..=3, 1usize..=3, 1usize..=3)
        .prop_filter("brute force stays small", |(k, n, s)| {
            let internal: usize = (0..*n).map(|i| k.pow(i as u32)).sum();
            (*s as f64).powi(internal as i32) <= 4096.0
        })
        .prop_flat_map(|(k, n, s)| {
            (
                proptest::collection::vec(proptest::collection::vec(0.05f64..1.0, k), s),
                proptest::collection::vec(0u8..=1, k.pow(n as u32)),
            )
                .prop_map(move |(raw, labels)| {
                    let dice = raw
                        .into_iter()
                        .map(|d| {
                            let t: f64 = d.iter().sum();
                            d.into_iter().map(|x| x / t).collect()
                        })
                        .collect();
                    (SourceSpec::new(k, dice).unwrap(), ExtractorTable::new(k, n, labels).unwrap())
                })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dp_matches_brute_force((spec, table) in small_game()) {
        let ab = alpha_beta(&spec, &table).unwrap();
        let (lo, hi) = brute_force(&spec, &table);
        prop_assert!((ab.alpha - lo).abs() < 1e-12, "alpha {} vs {lo}", ab.alpha);
        prop_assert!((ab.beta - hi).abs() < 1e-12, "beta {} vs {hi}", ab.beta);
    }

    #[test]
    fn complement_identity((spec, table) in small_game()) {
        let ab = alpha_beta(&spec, &table).unwrap();
        let cb = alpha_beta(&spec, &table.complement()).unwrap();
        prop_assert!((ab.alpha + cb.beta - 1.0).abs() < 1e-12);
        prop_assert!((ab.beta + cb.alpha - 1.0).abs() < 1e-12);
        prop_assert!(ab.alpha <= ab.beta + 1e-15);
    }

    /// Growing the zero-set never lowers α or β.
    #[test]
    fn values_are_monotone((spec, table) in small_game(), pick in any::<prop::sample::Index>()) {
        let ones: Vec<usize> = (0..table.labels().len()).filter(|&i| table.labels()[i] == 1).collect();
        prop_assume!(!ones.is_empty());
        let mut labels = table.labels().to_vec();
        labels[ones[pick.index(ones.len())]] = 0;
        let bigger = ExtractorTable::new(table.alphabet_size(), table.depth(), labels).unwrap();
        let a = alpha_beta(&spec, &table).unwrap();
        let b = alpha_beta(&spec, &bigger).unwrap();
        prop_assert!(a.alpha <= b.alpha + 1e-15 && a.beta <= b.beta + 1e-15);
    }

    /// The strategy the DP returns attains the value it reports.
    #[test]
    fn optimal_strategy_attains_the_value((spec, table) in small_game()) {
        let ab = alpha_beta(&spec, &table).unwrap();
        for (objective, target) in [(Objective::Min, ab.alpha), (Objective::Max, ab.beta)] {
            let tree = optimal_strategy(&spec, &table, objective).unwrap();
            let k = spec.alphabet_size();
            let n = table.depth();
            let mass: f64 = (0..table.labels().len())
                .filter(|&i| table.labels()[i] == 0)
                .map(|i| {
                    let s = string_at(i, k, n);
                    (0..n).map(|t| spec.die(tree.choice(&s[..t])).probs()[s[t]]).product::<f64>()
                })
                .sum();
            prop_assert!((mass - target).abs() < 1e-12);
        }
    }
}

#[test]
fn dp_agrees_with_simulation() {
    let spec = load_source("three_symbol.json");
    let table = ExtractorTable::new(3, 3, (0..27).map(|i| u8::from(i % 4 == 1 || i % 5 == 0)).collect()).unwrap();
    let ab = alpha_beta(&spec, &table).unwrap();
    for (objective, target) in [(Objective::Min, ab.alpha), (Objective::Max, ab.beta)] {
        let mut tree = optimal_strategy(&spec, &table, objective).unwrap();
        let trials = 40_000u64;
        let hits = (0..trials)
            .filter(|&seed| table.label(&sample_sequence(&spec, &mut tree, 3, seed).unwrap()) == 0)
            .count();
        let freq = hits as f64 / trials as f64;
        let sigma = (target * (1.0 - target) / trials as f64).sqrt();
        assert!((freq - target).abs() <= 5.0 * sigma, "{objective:?}: {freq} vs {target}");
    }
}

#[test]
fn exact_and_float_values_agree() {
    let spec = load_source("three_symbol.json");
    for mask in [0b1u64, 0b1011_0110, 0x1ff, 0x0f0f] {
        let t = ExtractorTable::from_subset_mask(3, 2, mask).unwrap();
        let exact = adversary::alpha_beta_exact(&spec, &t).unwrap().to_f64();
        let float_spec = SourceSpec::new(3, spec.dice().iter().map(|d| d.probs().to_vec()).collect()).unwrap();
        let float = alpha_beta(&float_spec, &t).unwrap();
        assert!((exact.alpha - float.alpha).abs() < 1e-14);
        assert!((exact.beta - float.beta).abs() < 1e-14);
    }
    let float_spec = SourceSpec::new(2, vec![vec![0.5, 0.5]]).unwrap();
    let t = ExtractorTable::constant(2, 1, 0).unwrap();
    assert!(matches!(adversary::alpha_beta_exact(&float_spec, &t), Err(AdversaryError::NotExact)));
}

#[test]
fn g_certificate_dominates_every_achievable_pair() {
    for (name, depth) in [("binary_third.json", 3), ("binary_045.json", 3), ("simplex_spanning.json", 2)] {
        let spec = load_source(name);
        let cert = build_g_certificate(&spec).unwrap_or_else(|| panic!("{name} has a certificate"));
        for n in 0..=depth {
            let phi = phi_set(&spec, n).unwrap();
            assert!(check_g_dominates(&cert, &phi.points), "{name} n={n}");
            assert!(center_distance(&phi.points) >= cert.separation_margin() - 1e-12, "{name} n={n}");
        }
    }
    assert!(build_g_certificate(&load_source("three_symbol.json")).is_none());
}

#[test]
fn tilting_moves_the_bit() {
    let spec = load_source("binary_third.json");
    let q = [0.5, 0.5];
    let eps = 0.05;
    for labels in ["01101001", "00011111", "01010101", "00000001"] {
        let bits: Vec<u8> = labels.bytes().map(|b| b - b'0').collect();
        let table = ExtractorTable::new(2, 3, bits).unwrap();
        let out = tilt_adversary(&spec, &table, &q, eps).unwrap();
        let target = if out.favored_bit == 0 { table.clone() } else { table.complement() };
        let played = randomized_zero_probability(&spec, &out.strategy, &target);
        assert!((played - out.achieved).abs() < 1e-12, "{labels}");
        assert!(out.core_mass >= 0.5 - 1e-12);
        assert!(out.achieved >= (1.0 + eps) * out.core_mass - 1e-12);
        assert!(out.achieved >= 0.5 * (1.0 + eps) - 1e-12, "{labels}: {}", out.achieved);
        let total: f64 = out.tilted.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tilting_rejects_bad_inputs() {
    let spec = load_source("binary_third.json");
    let t = ExtractorTable::new(2, 2, vec![0, 1, 1, 0]).unwrap();
    assert!(matches!(tilt_adversary(&spec, &t, &[0.9, 0.1], 0.05), Err(AdversaryError::NotInterior)));
    assert!(matches!(tilt_adversary(&spec, &t, &[0.5, 0.5], 0.0), Err(AdversaryError::EpsRange(_))));
    assert!(matches!(
        tilt_adversary(&spec, &t, &[0.5, 0.5], 5.0),
        Err(AdversaryError::EpsTooLarge { .. })
    ));
}
