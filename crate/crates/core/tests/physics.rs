use battsched_core::degradation::sei_flux;
use battsched_core::ecm::{ecm_step, EcmParams, EcmState, OcvCurve};
use battsched_core::presets;
use battsched_core::spm::{
    butler_volmer_flux, diffuse_step, flux_from_current, overpotential, spm_soc, spm_step, terminal_voltage,
    DiffusionScheme, ShellGrid, SpmState,
};
use battsched_core::Electrode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_ecm(rng: &mut ChaCha8Rng) -> EcmParams {
    let mut v = rng.gen_range(2.8..3.3);
    let ocv = (0..=10)
        .map(|k| {
            let p = (k as f64 / 10.0, v);
            v += rng.gen_range(0.02..0.15);
            p
        })
        .collect();
    EcmParams {
        r0_ohm: rng.gen_range(1e-3..5e-2),
        rd_ohm: rng.gen_range(1e-3..5e-2),
        cd_farad: rng.gen_range(1e2..1e4),
        eta_c: rng.gen_range(0.9..1.0),
        q_max_ah: rng.gen_range(1.0..10.0),
        v_min_v: 0.0,
        v_max_v: 10.0,
        i_max_ch_a: 20.0,
        i_max_dis_a: 20.0,
        n_cells: rng.gen_range(1..1000),
        ocv: OcvCurve::new(ocv).unwrap(),
        exact_hold: false,
    }
}

#[test]
fn ecm_identities_over_random_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for draw in 0..50 {
        let p = random_ecm(&mut rng);
        let tau = rng.gen_range(1.0..3600.0);
        let tau_h = tau / 3600.0;

        // Coulomb counting.
        let start = EcmState::new(0.5 * p.q_max_ah, 0.0, &p).unwrap();
        let budget = 0.4 * p.q_max_ah / (p.eta_c * tau_h * 20.0);
        let mut s = start;
        let mut moved = 0.0;
        for _ in 0..20 {
            let i = rng.gen_range(-budget..budget);
            s = ecm_step(&s, i, &p, tau).unwrap().0;
            moved += i;
        }
        let expected = start.soc_ah - p.eta_c * moved * tau_h;
        assert!((s.soc_ah - expected).abs() <= 1e-12 * p.q_max_ah, "draw {draw}");

        // Rest decay.
        let rc = p.rd_ohm * p.cd_farad;
        let mut s = EcmState::new(0.5 * p.q_max_ah, 0.05, &p).unwrap();
        for _ in 0..5 {
            let next = ecm_step(&s, 0.0, &p, tau).unwrap().0;
            assert!((next.v_d / s.v_d - rc / (tau + rc)).abs() <= 1e-12, "draw {draw}");
            s = next;
        }

        // Fixed point of a held current, state of charge pinned.
        let hold = (0.4 * p.q_max_ah / (p.eta_c * tau_h)).min(5.0);
        let i = rng.gen_range(-hold..hold);
        let mut s = EcmState::new(0.5 * p.q_max_ah, 0.0, &p).unwrap();
        for _ in 0..1_000_000 {
            let next = ecm_step(&s, i, &p, tau).unwrap().0;
            let done = (next.v_d - s.v_d).abs() < 1e-15;
            s = EcmState { soc_ah: 0.5 * p.q_max_ah, v_d: next.v_d };
            if done {
                break;
            }
        }
        assert!((s.v_d - p.rd_ohm * i).abs() <= 1e-9, "draw {draw}");

        // Terminal voltage falls strictly with current.
        let s = EcmState::new(rng.gen_range(0.3..0.7) * p.q_max_ah, rng.gen_range(-0.05..0.05), &p).unwrap();
        let limit = 0.25 * p.q_max_ah / (p.eta_c * tau_h);
        let limit = limit.min(20.0);
        let mut last = f64::INFINITY;
        for k in 0..=200 {
            let i = -limit + 2.0 * limit * k as f64 / 200.0;
            let v = ecm_step(&s, i, &p, tau).unwrap().1;
            assert!(v < last, "draw {draw}: V not decreasing at {i} A");
            last = v;
        }
    }
}

#[test]
fn spm_rest_conserves_lithium_over_ten_thousand_steps() {
    let p = presets::demo_spm();
    let mut s = SpmState::at_soc(&p, 0.5).unwrap();
    // Leave a gradient in the particles so the rest steps have work to do.
    for _ in 0..3 {
        s = spm_step(&s, 4.0, &p, 600.0, false).unwrap().0;
    }
    let start = s.lithium_inventory_mol(&p);
    for _ in 0..10_000 {
        s = spm_step(&s, 0.0, &p, 60.0, false).unwrap().0;
    }
    let end = s.lithium_inventory_mol(&p);
    assert!((end - start).abs() <= 1e-12 * start, "{start} -> {end}");
}

#[test]
fn constant_flux_mass_balance_is_exact() {
    let p = presets::demo_spm();
    for side in [Electrode::Pos, Electrode::Neg] {
        let e = p.electrode(side);
        let g = ShellGrid::new(e.radius_m, p.n_shells);
        let j = flux_from_current(3.0, side, &p);
        let tau = 120.0;
        let mut c = vec![0.5 * (e.c_min_op_mol_m3 + e.c_max_op_mol_m3); p.n_shells];
        for _ in 0..20 {
            let next = diffuse_step(&c, j, e, tau, DiffusionScheme::Implicit).unwrap();
            let delta = g.mean(&next) - g.mean(&c);
            let expected = -3.0 * j * tau / e.radius_m;
            assert!(
                (delta - expected).abs() <= 64.0 * f64::EPSILON * g.mean(&c),
                "{side:?}: {delta} vs {expected}"
            );
            c = next;
        }
    }
}

/// Surface-minus-mean offset once a constant flux has run long enough for
/// the profile shape to settle; the exact value is `−J·R/(5D)`.
fn settled_offset_error(n: usize) -> f64 {
    let (r, d, j) = (5e-6, 3.9e-14, 1e-6);
    let mut e = presets::demo_spm().neg;
    e.radius_m = r;
    e.diffusivity_m2_s = d;
    let g = ShellGrid::new(r, n);
    let mut c = vec![2.0e5; n];
    for _ in 0..4000 {
        c = diffuse_step(&c, j, &e, 50.0, DiffusionScheme::Implicit).unwrap();
    }
    let offset = g.surface(&c, j, d) - g.mean(&c);
    (offset + j * r / (5.0 * d)).abs()
}

#[test]
fn surface_estimate_converges_at_second_order() {
    let errors: Vec<f64> = [10, 20, 40, 80].into_iter().map(settled_offset_error).collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.9, "errors {errors:?}");
    }
}

#[test]
fn butler_volmer_round_trip() {
    let p = presets::demo_spm();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let side = if rng.gen_bool(0.5) { Electrode::Pos } else { Electrode::Neg };
        let e = p.electrode(side);
        let c = rng.gen_range(0.01..0.99) * e.c_max_mol_m3;
        let j = flux_from_current(rng.gen_range(-30.0..30.0), side, &p);
        let eta = overpotential(j, c, e, &p).unwrap();
        let back = butler_volmer_flux(eta, c, e, &p);
        assert!((back - j).abs() <= 1e-12 * j.abs(), "{j} -> {eta} -> {back}");
    }
}

#[test]
fn film_growth_is_monotone_and_charge_only() {
    let p = presets::demo_spm();
    let sei = p.sei.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut s = SpmState::at_soc(&p, 0.5).unwrap();
    let mut applied = 0;
    for _ in 0..300 {
        let i: f64 = rng.gen_range(-3.0..3.0);
        let Ok((next, _, _)) = spm_step(&s, i, &p, 600.0, true) else {
            continue;
        };
        let (a, b) = (s.ledger, next.ledger);
        assert!(b.sei_thickness_m >= a.sei_thickness_m);
        assert!(b.film_resistance_ohm >= a.film_resistance_ohm);
        assert!(b.capacity_loss >= a.capacity_loss);
        if i >= 0.0 {
            assert_eq!(b.capacity_loss, a.capacity_loss);
        } else {
            assert!(b.capacity_loss > a.capacity_loss);
        }
        s = next;
        applied += 1;
    }
    assert!(applied > 100, "only {applied} steps were feasible");
    for _ in 0..100 {
        let eta = rng.gen_range(-0.5..0.5);
        let deeper = eta - rng.gen_range(1e-3..0.2);
        assert!(sei_flux(deeper, &sei, &p).abs() > sei_flux(eta, &sei, &p).abs());
    }
}

#[test]
fn spm_voltage_falls_with_current_and_soc_rises_on_charge() {
    let p = presets::demo_spm();
    let s = SpmState::at_soc(&p, 0.5).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..=100 {
        let i = -p.i_max_ch_a + (p.i_max_ch_a + p.i_max_dis_a) * k as f64 / 100.0;
        let v = terminal_voltage(&s, i, &p).unwrap();
        assert!(v < last);
        last = v;
    }
    let mut s = SpmState::at_soc(&p, 0.1).unwrap();
    let mut soc = spm_soc(&s, &p);
    for _ in 0..20 {
        s = spm_step(&s, -1.0, &p, 600.0, true).unwrap().0;
        let next = spm_soc(&s, &p);
        assert!(next >= soc);
        soc = next;
    }
}
