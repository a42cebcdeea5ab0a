use conformal_survival::{weighted_quantile, SortedAtoms, WeightedAtoms};
use proptest::prelude::*;

// Expands integer weights into repeated values and reads off an order
// statistic: the quantile at level j/m is the k-th smallest value of the
// expanded list with k = ceil(j * N / m), at least 1.
fn order_statistic_oracle(atoms: &[(i32, u32)], j: u64, m: u64) -> f64 {
    let mut expanded: Vec<i32> = atoms
        .iter()
        .flat_map(|&(v, w)| std::iter::repeat_n(v, w as usize))
        .collect();
    expanded.sort_unstable();
    let n = expanded.len() as u64;
    let k = (j * n).div_ceil(m).max(1);
    f64::from(expanded[(k - 1) as usize])
}

fn float_atoms(atoms: &[(i32, u32)]) -> Vec<(f64, f64)> {
    atoms.iter().map(|&(v, w)| (f64::from(v), f64::from(w))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn unit_weights_match_order_statistics(
        values in prop::collection::vec(-30i32..30, 1..=20),
        j in 0u64..=64,
    ) {
        let atoms: Vec<(i32, u32)> = values.iter().map(|&v| (v, 1)).collect();
        let tau = j as f64 / 64.0;
        let got = weighted_quantile(&WeightedAtoms::new(float_atoms(&atoms)).unwrap(), tau);
        prop_assert_eq!(got, order_statistic_oracle(&atoms, j, 64));
    }

    #[test]
    fn integer_weights_match_expanded_order_statistics(
        atoms in prop::collection::vec((-30i32..30, 1u32..6), 1..=20),
        j in 0u64..=100,
    ) {
        let tau = j as f64 / 100.0;
        let got = weighted_quantile(&WeightedAtoms::new(float_atoms(&atoms)).unwrap(), tau);
        prop_assert_eq!(got, order_statistic_oracle(&atoms, j, 100));
    }

    #[test]
    fn infinite_atom_matches_expanded_list(
        atoms in prop::collection::vec((-30i32..30, 1u32..6), 1..=20),
        inf_weight in 1u32..6,
        j in 0u64..=100,
    ) {
        let tau = j as f64 / 100.0;
        let sorted = SortedAtoms::from_atoms(float_atoms(&atoms));
        let got = sorted.quantile_with_infinite_atom(tau, f64::from(inf_weight));
        // stand-in for +inf that exceeds every generated value
        let mut with_inf = atoms.clone();
        with_inf.push((i32::MAX, inf_weight));
        let oracle = order_statistic_oracle(&with_inf, j, 100);
        let oracle = if oracle == f64::from(i32::MAX) { f64::INFINITY } else { oracle };
        prop_assert_eq!(got, oracle);
    }
}
