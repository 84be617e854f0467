//! Property tests for the serialization and inversion contracts.

use proptest::prelude::*;

use bidflow_core::supply::{GridSpec, RawWinCurve, TimeVaryingSupplyCurve};
use bidflow_core::targeting::{decompose, Contract};

fn arbitrary_curve(gamma: f64, lambda: f64, sigma: f64, wobble: f64) -> TimeVaryingSupplyCurve {
    let x_max = 10.0 / gamma;
    let grid: Vec<f64> = (0..600).map(|i| -1.0 + (x_max + 1.0) * i as f64 / 599.0).collect();
    let raw = RawWinCurve::from_fn(&grid, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-gamma * x).exp() })
        .unwrap();
    let spec = GridSpec::new(x_max, 256, sigma).unwrap();
    let lambdas: Vec<f64> = (0..24)
        .map(|h| lambda * (1.0 + wobble * (2.0 * std::f64::consts::PI * h as f64 / 24.0).sin()))
        .collect();
    let slices = vec![raw; 24];
    TimeVaryingSupplyCurve::from_raw_slices(&slices, lambdas, 24.0, spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn curve_document_round_trip_preserves_evaluation(
        gamma in 0.3f64..2.0,
        lambda in 0.5f64..5.0,
        sigma in 0.01f64..0.4,
        wobble in 0.0f64..0.8,
        x_frac in 0.05f64..0.95,
        t in 0.0f64..48.0,
    ) {
        let curve = arbitrary_curve(gamma, lambda, sigma, wobble);
        let doc = curve.to_document();
        let text = serde_json::to_string(&doc).unwrap();
        let back = TimeVaryingSupplyCurve::from_document(serde_json::from_str(&text).unwrap()).unwrap();
        let x = x_frac * curve.bid_cap();
        prop_assert!((back.eval_w(x, t) - curve.eval_w(x, t)).abs() <= 1e-9 * curve.eval_w(x, t).abs().max(1.0));
        prop_assert_eq!(back.grid_x().len(), curve.grid_x().len());
    }

    #[test]
    fn inversion_round_trip_on_sections(
        gamma in 0.3f64..2.0,
        lambda in 0.5f64..5.0,
        sigma in 0.01f64..0.4,
        wobble in 0.0f64..0.8,
        s_frac in 0.01f64..0.99,
        t in 0.0f64..24.0,
    ) {
        let curve = arbitrary_curve(gamma, lambda, sigma, wobble);
        let section = curve.section_at(t);
        let s = s_frac * section.capacity();
        let inv = section.invert(s).unwrap();
        prop_assert!((section.eval_w(inv.bid) - s).abs() <= 1e-8 * section.capacity().max(1.0));
        // Inversion is monotone in s.
        let s2 = (s_frac * 0.5) * section.capacity();
        let inv2 = section.invert(s2).unwrap();
        prop_assert!(inv2.bid <= inv.bid + 1e-12);
    }

    #[test]
    fn decomposition_partitions_random_contract_sets(
        seeds in prop::collection::vec(0u8..8, 1..5),
    ) {
        // Targeting sets from a tiny universe driven by the seed bytes.
        let universe = ["u0", "u1", "u2", "u3"];
        let contracts: Vec<Contract> = seeds
            .iter()
            .enumerate()
            .map(|(i, &mask)| {
                let mut atoms: Vec<String> = universe
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, a)| a.to_string())
                    .collect();
                if atoms.is_empty() {
                    atoms.push(universe[i % 4].to_string());
                }
                Contract::new(format!("c{i}"), 5.0 + i as f64, 1.0, atoms).unwrap()
            })
            .collect();
        let d = decompose(&contracts).unwrap();
        // Disjoint cells, union identity, duality.
        let mut seen = std::collections::BTreeSet::new();
        for ty in &d.types {
            for a in &ty.atoms {
                prop_assert!(seen.insert(a.clone()));
            }
        }
        for (i, c) in contracts.iter().enumerate() {
            let rebuilt: std::collections::BTreeSet<_> =
                d.contract_types[i].iter().flat_map(|&j| d.types[j].atoms.iter().cloned()).collect();
            let original: std::collections::BTreeSet<_> = c.targeting.iter().cloned().collect();
            prop_assert_eq!(rebuilt, original);
        }
    }
}
