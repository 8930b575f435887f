mod common;

use common::Check;
use oas_core::model::{least_element_relabel, Allocation};
use proptest::prelude::*;

fn run(check: Check) {
    if let Err(e) = check {
        panic!("{e}");
    }
}

#[test]
fn sweeps_preserve_invariants() {
    run(common::check_sweep_invariants(1_000));
}

#[test]
fn relabel_examples_and_idempotence() {
    run(common::check_relabel());
}

#[test]
fn admissible_move_examples() {
    run(common::check_admissible());
}

#[test]
fn iat_of_iid_and_ar1() {
    run(common::check_iat());
}

#[test]
fn exact_posterior_three_points() {
    run(common::check_small_oracle());
}

#[test]
fn discovery_ignores_weight_order() {
    run(common::check_discovery_permutation());
}

#[test]
fn permutation_law_example() {
    run(common::check_permutation_law());
}

#[test]
fn geometric_posterior_is_beta_6_3() {
    run(common::check_geometric_posterior());
}

#[test]
fn marginal_likelihood_matches_quadrature() {
    run(common::check_marginal_quadrature());
}

#[test]
fn posterior_moments_match_quadrature() {
    run(common::check_posterior_quadrature());
}

proptest! {
    #[test]
    fn relabel_preserves_partition(c in proptest::collection::vec(0usize..8, 1..20)) {
        let (a, sigma) = least_element_relabel(&c);
        for x in 0..c.len() {
            prop_assert_eq!(sigma[a.labels()[x]], c[x]);
            for y in 0..c.len() {
                prop_assert_eq!(c[x] == c[y], a.labels()[x] == a.labels()[y]);
            }
        }
        let (again, id) = least_element_relabel(a.labels());
        prop_assert_eq!(&again, &a);
        prop_assert!(id.iter().enumerate().all(|(j, &s)| j == s));
    }

    #[test]
    fn signature_round_trips(c in proptest::collection::vec(0usize..5, 1..15)) {
        let (a, _) = least_element_relabel(&c);
        prop_assert_eq!(Allocation::from_signature(&a.signature()).unwrap(), a);
    }
}
