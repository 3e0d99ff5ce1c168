mod support;

use logmarkov::cycle::ExperimentSettings;
use logmarkov::extraction::{check_smip, cycle_transfer, effective_prep_transfer, meas_transfer};
use logmarkov::fit::fit_decay;
use logmarkov::markov::{exact_eigenvalue, ModelOptions};
use logmarkov::oracle::eigen_table_to_channel;
use logmarkov::pauli::{
    conjugation_sign, BitString, Layout, PauliChannel, PauliEigenTable, PauliLabel,
};
use logmarkov::verify::{analyze, rounding_floor, verify};
use proptest::prelude::*;
use support::{random_case, CaseOptions};

fn label(n: usize) -> impl Strategy<Value = PauliLabel> {
    (0..1usize << (2 * n)).prop_map(move |i| PauliLabel::from_table_index(n, i))
}

fn channel(n: usize) -> impl Strategy<Value = PauliChannel> {
    prop::collection::vec(0.0f64..1.0, 1 << (2 * n)).prop_map(move |w| {
        let total: f64 = w.iter().sum::<f64>().max(1e-300);
        let layout = Layout::single(n);
        let terms = w
            .iter()
            .enumerate()
            .map(|(i, p)| (PauliLabel::from_table_index(n, i), p / total))
            .collect();
        PauliChannel::new_unnormalized(&layout, terms).unwrap()
    })
}

/// Commutation from the symplectic product, independent of the library routine.
fn symplectic(p: &PauliLabel, q: &PauliLabel) -> bool {
    (0..p.num_qubits()).fold(false, |acc, j| {
        acc ^ (p.x_bits().get(j) & q.z_bits().get(j)) ^ (p.z_bits().get(j) & q.x_bits().get(j))
    })
}

proptest! {
    #[test]
    fn bitstring_text_and_index_round_trip(n in 1usize..40, seed in any::<u64>()) {
        let index = if n >= 64 { seed } else { seed & ((1u64 << n) - 1) };
        let b = BitString::from_index(n, index);
        prop_assert_eq!(b.index(), index);
        let parsed: BitString = b.to_string().parse().unwrap();
        prop_assert_eq!(parsed, b);
    }

    #[test]
    fn pauli_label_text_round_trip(p in label(3)) {
        let layout = Layout::single(3);
        prop_assert_eq!(PauliLabel::parse(&p.to_string(), &layout).unwrap(), p);
    }

    #[test]
    fn composition_is_a_group_up_to_phase(a in label(3), b in label(3), c in label(3)) {
        let ab_c = a.compose(&b).unwrap().compose(&c).unwrap();
        let a_bc = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);
        prop_assert_eq!(a.compose(&b).unwrap(), b.compose(&a).unwrap());
        prop_assert!(a.compose(&a).unwrap().is_identity());
    }

    #[test]
    fn conjugation_sign_matches_symplectic_product(a in label(4), b in label(4)) {
        let expected = if symplectic(&a, &b) { -1 } else { 1 };
        prop_assert_eq!(conjugation_sign(&a, &b).unwrap(), expected);
        prop_assert_eq!(conjugation_sign(&b, &a).unwrap(), expected);
    }

    #[test]
    fn channel_eigenvalues_are_bounded(ch in channel(2)) {
        let table = ch.eigen_table().unwrap();
        prop_assert!((table.at(0) - 1.0).abs() < 1e-12);
        prop_assert!(table.values().iter().all(|v| v.abs() <= 1.0 + 1e-12));
        prop_assert!(table.check_channel_like(1e-12).is_ok());
    }

    #[test]
    fn eigen_table_inversion_round_trips(ch in channel(2)) {
        let table = ch.eigen_table().unwrap();
        let back = eigen_table_to_channel(&table).unwrap();
        let mut probs = [0.0; 16];
        for (l, p) in ch.terms() {
            probs[l.table_index()] += p;
        }
        let mut recovered = [0.0; 16];
        for (l, p) in back.terms() {
            recovered[l.table_index()] += p;
        }
        for (a, b) in probs.iter().zip(&recovered) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn composed_channels_multiply_eigenvalues(a in channel(2), b in channel(2)) {
        let (ta, tb) = (a.eigen_table().unwrap(), b.eigen_table().unwrap());
        let product = PauliEigenTable::from_values(
            2,
            ta.values().iter().zip(tb.values()).map(|(x, y)| x * y).collect(),
        )
        .unwrap();
        prop_assert_eq!(ta.compose(&tb).unwrap(), product);
    }

    #[test]
    fn fit_recovers_geometric_decay(chi in 0.3f64..1.0, amp in 0.05f64..2.0, start in 0usize..5, len in 5usize..30) {
        let ks: Vec<f64> = (start..start + len).map(|k| k as f64).collect();
        let vs: Vec<f64> = ks.iter().map(|k| amp * chi.powf(*k)).collect();
        let fit = fit_decay(&ks, &vs, None).unwrap();
        prop_assert!((fit.chi - chi).abs() < 1e-6);
        prop_assert!((fit.amplitude - amp).abs() < 1e-6 * amp.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extracted_transfers_are_consistent(seed in 0u64..10_000, total in 0.0f64..0.2) {
        let case = random_case(seed, &CaseOptions { noise_total: total, ..CaseOptions::default() });
        let t = cycle_transfer(&case.spec).unwrap();
        prop_assert!(t.check_invariants(1e-10).is_ok());
        prop_assert!(check_smip(&t, 1e-12));
        let marginal = t.syndrome_marginal().unwrap();
        prop_assert!((marginal.sum() - 1.0).abs() < 1e-12);
        let pt = effective_prep_transfer(&case.preps[0], &case.spec, &t).unwrap();
        let mt = meas_transfer(&case.meas[0], &case.spec).unwrap();
        for p in 0..t.num_paulis() {
            for k in [0, 1, 5] {
                let v = exact_eigenvalue(&t, &pt, &mt, p, k).unwrap();
                prop_assert!(v.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn verification_passes_under_the_hypotheses(seed in 0u64..10_000, total in 0.0f64..0.004) {
        let case = random_case(seed, &CaseOptions { noise_total: total, ..CaseOptions::default() });
        let settings = ExperimentSettings::all_pairs(case.preps.clone(), case.meas.clone()).unwrap();
        let analysis = analyze(&case.spec, &settings, &ModelOptions::default()).unwrap();
        prop_assume!(analysis.model.hypothesis_ok);
        let report = verify(&analysis, &settings, &case.outcomes, 1, 20).unwrap();
        for r in &report.eigen {
            prop_assert!(r.gap <= r.bound + rounding_floor(r.exact, r.model), "{:?}", r);
        }
        for r in &report.probability {
            prop_assert!(r.gap <= r.bound + rounding_floor(r.exact, r.model), "{:?}", r);
        }
    }
}
