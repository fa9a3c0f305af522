use super::*;
use crate::grid::TimeGrid;
use crate::presets;
use proptest::prelude::*;

fn params() -> SpmParams {
    presets::demo_spm()
}

#[test]
fn rest_voltage_is_ocp_difference() {
    let p = params();
    let s = SpmState::at_soc(&p, 0.6).unwrap();
    let cp = s.surface(Electrode::Pos, &p);
    let cn = s.surface(Electrode::Neg, &p);
    let expected = p.pos.ocp.eval(cp / p.pos.c_max_mol_m3) - p.neg.ocp.eval(cn / p.neg.c_max_mol_m3);
    assert_eq!(terminal_voltage(&s, 0.0, &p).unwrap(), expected);
    assert_eq!(rest_voltage(&s, &p).unwrap(), expected);
}

#[test]
fn discharge_sags_below_rest() {
    let p = params();
    let s = SpmState::at_soc(&p, 0.5).unwrap();
    let rest = rest_voltage(&s, &p).unwrap();
    assert!(terminal_voltage(&s, 3.0, &p).unwrap() < rest);
    assert!(terminal_voltage(&s, -3.0, &p).unwrap() > rest);
}

#[test]
fn voltage_is_sum_of_electrode_terms() {
    let mut p = params();
    p.pos.film_resistance_ohm = 0.0;
    p.neg.film_resistance_ohm = 0.0;
    p.sei = None;
    let s = SpmState::at_soc(&p, 0.4).unwrap();
    let i = 2.5;
    let jp = flux_from_current(i, Electrode::Pos, &p);
    let jn = flux_from_current(i, Electrode::Neg, &p);
    let cp = s.conc_pos[p.n_shells - 1] - jp * p.shell_grid(Electrode::Pos).dr / (2.0 * p.pos.diffusivity_m2_s);
    let cn = s.conc_neg[p.n_shells - 1] - jn * p.shell_grid(Electrode::Neg).dr / (2.0 * p.neg.diffusivity_m2_s);
    let eta_p = overpotential(jp, cp, &p.pos, &p).unwrap();
    let eta_n = overpotential(jn, cn, &p.neg, &p).unwrap();
    assert!(eta_p < 0.0 && eta_n > 0.0);
    let expected = (p.pos.ocp.eval(cp / p.pos.c_max_mol_m3) + eta_p) - (p.neg.ocp.eval(cn / p.neg.c_max_mol_m3) + eta_n);
    let v = terminal_voltage(&s, i, &p).unwrap();
    assert!((v - expected).abs() < 1e-14, "{v} vs {expected}");
}

#[test]
fn zero_current_step_is_identity() {
    let p = params();
    let s = SpmState::at_soc(&p, 0.3).unwrap();
    let (next, v, pw) = spm_step(&s, 0.0, &p, 3600.0, false).unwrap();
    for (a, b) in next.conc_pos.iter().zip(&s.conc_pos).chain(next.conc_neg.iter().zip(&s.conc_neg)) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
    assert!((v - rest_voltage(&s, &p).unwrap()).abs() < 1e-12);
    assert_eq!(pw, 0.0);
}

#[test]
fn constant_discharge_hits_window_at_expected_step() {
    let mut p = params();
    p.v_min_v = 0.0;
    let s = SpmState::at_soc(&p, 0.1).unwrap();
    let grid = TimeGrid::from_epoch(60.0, 100).unwrap();
    let sched = CurrentSchedule::new(grid, vec![1.0; 100]).unwrap();
    let err = spm_simulate(&sched, &s, &p, false).unwrap_err();
    // Reference step from an independent dense-matrix finite-volume run.
    assert_eq!(err.step(), Some(29));
    assert!(matches!(
        err.violation().map(|v| v.kind),
        Some(ViolationKind::ConcentrationBelowMin(Electrode::Neg))
    ));
}

#[test]
fn symmetric_cycle_restores_averages() {
    let p = params();
    let s0 = SpmState::at_soc(&p, 0.5).unwrap();
    let mut s = s0.clone();
    for i in [-0.5, -0.5, 0.5, 0.5] {
        s = spm_step(&s, i, &p, 600.0, false).unwrap().0;
    }
    for side in [Electrode::Pos, Electrode::Neg] {
        let (a, b) = (s.mean(side, &p), s0.mean(side, &p));
        assert!((a - b).abs() <= 1e-9 * b);
    }
}

#[test]
fn soc_window_edges() {
    let p = params();
    let mut s = SpmState::at_soc(&p, 0.0).unwrap();
    assert!(spm_soc(&s, &p).abs() < 1e-12);
    s = SpmState::at_soc(&p, 1.0).unwrap();
    assert!((spm_soc(&s, &p) - p.q_rated_ah).abs() < 1e-12);
    s = SpmState::at_soc(&p, 0.5).unwrap();
    assert!((spm_soc(&s, &p) - 0.5 * p.q_rated_ah).abs() < 1e-12);
}

#[test]
fn current_limit_reported() {
    let p = params();
    let s = SpmState::at_soc(&p, 0.5).unwrap();
    let err = spm_step(&s, p.i_max_dis_a * 1.5, &p, 60.0, false).unwrap_err();
    assert!(matches!(err, Error::LimitViolation(_)));
}

#[test]
fn degradation_needs_sei_params() {
    let mut p = params();
    p.sei = None;
    let s = SpmState::at_soc(&p, 0.5).unwrap();
    assert!(matches!(spm_step(&s, -1.0, &p, 60.0, true), Err(Error::Config(_))));
}

#[test]
fn charging_with_degradation_grows_film() {
    let p = params();
    let mut s = SpmState::at_soc(&p, 0.2).unwrap();
    let mut last = s.ledger;
    for _ in 0..6 {
        s = spm_step(&s, -2.0, &p, 600.0, true).unwrap().0;
        assert!(s.ledger.sei_thickness_m > last.sei_thickness_m);
        assert!(s.ledger.film_resistance_ohm > last.film_resistance_ohm);
        assert!(s.ledger.capacity_loss > last.capacity_loss);
        last = s.ledger;
    }
    for _ in 0..4 {
        s = spm_step(&s, 2.0, &p, 600.0, true).unwrap().0;
        assert_eq!(s.ledger, last);
    }
}

#[test]
fn lithium_lost_to_film_leaves_the_particles() {
    let p = params();
    let s0 = SpmState::at_soc(&p, 0.2).unwrap();
    let mut s = s0.clone();
    let tau = 600.0;
    let n = 6;
    for _ in 0..n {
        s = spm_step(&s, -2.0, &p, tau, true).unwrap().0;
    }
    let li0 = s0.lithium_inventory_mol(&p);
    let li = s.lithium_inventory_mol(&p);
    // Charging moves lithium between electrodes; only the film consumes it.
    let consumed = s.ledger.lithium_loss_mol;
    assert!((li0 - li - consumed).abs() <= 1e-10 * li0, "{li0} {li} {consumed}");
}

#[test]
fn explicit_scheme_rejects_hour_steps() {
    let mut p = params();
    p.scheme = DiffusionScheme::Explicit;
    let s = SpmState::at_soc(&p, 0.5).unwrap();
    assert!(matches!(spm_step(&s, 1.0, &p, 3600.0, false), Err(Error::Config(_))));
}

#[test]
fn validation_rejects_bad_window() {
    let mut p = params();
    p.neg.c_min_op_mol_m3 = p.neg.c_max_op_mol_m3;
    assert!(p.validate().is_err());
    let mut p = params();
    p.n_shells = 2;
    assert!(p.validate().is_err());
}

#[test]
fn params_json_round_trip() {
    let p = params();
    let text = serde_json::to_string(&p).unwrap();
    let back: SpmParams = serde_json::from_str(&text).unwrap();
    assert_eq!(back, p);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn voltage_decreases_with_current(soc in 0.15f64..0.85, i in -8.0f64..8.0, di in 0.01f64..1.0) {
        let p = params();
        let s = SpmState::at_soc(&p, soc).unwrap();
        let v1 = terminal_voltage(&s, i, &p).unwrap();
        let v2 = terminal_voltage(&s, i + di, &p).unwrap();
        prop_assert!(v2 < v1);
    }

    #[test]
    fn soc_rises_on_pure_charge(soc in 0.05f64..0.5, i in 0.1f64..4.0) {
        let p = params();
        let mut s = SpmState::at_soc(&p, soc).unwrap();
        let mut last = spm_soc(&s, &p);
        for _ in 0..5 {
            s = spm_step(&s, -i, &p, 300.0, false).unwrap().0;
            let now = spm_soc(&s, &p);
            prop_assert!(now >= last);
            last = now;
        }
    }
}
