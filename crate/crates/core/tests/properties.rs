mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pmfs_are_normalized(seed in any::<u64>()) {
        prop_assert_eq!(common::pmf_normalization(seed), Ok(()));
    }

    #[test]
    fn beta_scale_is_irrelevant(seed in any::<u64>()) {
        prop_assert_eq!(common::beta_scale_invariance(seed), Ok(()));
    }

    #[test]
    fn relabelling_states_commutes_with_pipeline(seed in any::<u64>()) {
        prop_assert_eq!(common::permutation_equivariance(seed), Ok(()));
    }

    #[test]
    fn seeds_replay(seed in any::<u64>()) {
        prop_assert_eq!(common::replay_determinism(seed), Ok(()));
    }

    #[test]
    fn policy_pmfs_are_valid(seed in any::<u64>()) {
        prop_assert_eq!(common::policy_pmf_validity(seed), Ok(()));
    }

    #[test]
    fn identity_channel_is_transparent(seed in any::<u64>()) {
        prop_assert_eq!(common::compose_identity(seed), Ok(()));
    }

    #[test]
    fn composed_policy_is_channel_sum(seed in any::<u64>()) {
        prop_assert_eq!(common::compose_matches_direct_sum(seed), Ok(()));
    }

    #[test]
    fn validation_catches_single_entry_mutations(seed in any::<u64>()) {
        prop_assert_eq!(common::validate_mutation(seed), Ok(()));
    }
}
