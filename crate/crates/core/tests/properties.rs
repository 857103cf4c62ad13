mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]
    #[test]
    fn closed_form_states_are_valid(ratio in 0.02f64..2.0, gamma_ev in 0.01f64..0.4, t in 0.0f64..150.0) {
        density_invariants_closed_form(ratio, gamma_ev, t)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn integrated_states_are_valid(ratio in 0.05f64..1.5, gamma_ev in 0.01f64..0.3, delta_ev in -0.05f64..0.05) {
        density_invariants_integrated(ratio, gamma_ev, delta_ev)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn sld_solves_its_defining_relation_3((a, b, eps) in matrix_strategy(3)) {
        sld_residual_random(3, &a, &b, eps)?;
    }

    #[test]
    fn sld_solves_its_defining_relation_5((a, b, eps) in matrix_strategy(5)) {
        sld_residual_random(5, &a, &b, eps)?;
    }

    #[test]
    fn sld_on_probe_states(ratio in 0.02f64..2.0, gamma_ev in 0.01f64..0.4, t in 0.0f64..120.0) {
        sld_residual_probe(ratio, gamma_ev, t)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]
    #[test]
    fn qfi_is_non_negative(
        (a, b, eps) in matrix_strategy(4),
        ratio in 0.02f64..2.0,
        gamma_ev in 0.0f64..0.4,
        t in 0.0f64..150.0,
    ) {
        qfi_non_negative(4, &a, &b, eps, ratio, gamma_ev, t)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn loss_never_increases_the_norm(
        ratio in 0.02f64..2.0,
        gamma_ev in 0.0f64..0.4,
        n in 1usize..8,
        init in 0u8..3,
    ) {
        norm_monotone(ratio, gamma_ev, n, init)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]
    #[test]
    fn closed_forms_are_continuous_at_the_exceptional_point(
        gamma_ev in 0.05f64..0.4,
        log_eps in -8.0f64..-3.0,
        above in any::<bool>(),
        t in 1.0f64..100.0,
    ) {
        ep_continuity(gamma_ev, log_eps, above, t)?;
    }
}
