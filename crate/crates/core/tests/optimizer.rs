use std::time::Instant;

use battsched_core::erm::{ErmParams, ErmState};
use battsched_core::grid::{PriceSeries, TimeGrid};
use battsched_core::optimizer::{
    brute_force, dp_solve, evaluate, gradient_solve, replay, ArbitrageObjective, DegradationPricing, DpConfig,
    GradientMethod, Model, Objective, PenaltyConfig, PenaltyProblem, Terminal,
};
use battsched_core::presets;
use battsched_core::spm::SpmState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DAY_PRICES: [f64; 24] = [
    32.0, 28.5, 25.0, 23.5, 24.0, 29.0, 41.0, 58.0, 64.0, 52.0, 40.0, 33.0, 27.0, 22.0, 19.5, 21.0, 30.0, 48.0,
    79.0, 96.0, 84.0, 61.0, 45.0, 37.0,
];

fn arbitrage(prices: &[f64], tau_s: f64) -> ArbitrageObjective {
    let grid = TimeGrid::from_epoch(tau_s, prices.len()).unwrap();
    ArbitrageObjective::new(PriceSeries::new(grid, prices.to_vec()).unwrap())
}

#[test]
fn dp_matches_brute_force_on_random_reservoir_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    for case in 0..200 {
        let p_max = rng.gen_range(0.5..2.0);
        let params = ErmParams {
            eta_ch: rng.gen_range(0.8..1.0),
            eta_dis: rng.gen_range(0.8..1.0),
            e_max_mwh: rng.gen_range(1.0..4.0),
            p_ch_max_mw: p_max,
            p_dis_max_mw: p_max,
            limit_curve: None,
        };
        let model = Model::Erm {
            init: ErmState::new(rng.gen_range(0.0..1.0) * params.e_max_mwh, &params).unwrap(),
            params,
        };
        let prices: Vec<f64> = (0..6).map(|_| rng.gen_range(-20.0..100.0)).collect();
        let obj = Objective::Arbitrage(arbitrage(&prices, 3600.0));
        let levels = vec![-p_max, 0.0, p_max];
        let grid = obj.prices().grid;
        let bf = brute_force(&model, &obj, &levels, grid, None).unwrap();
        let cfg = DpConfig { levels, ..DpConfig::default() };
        let dp = dp_solve(&model, &obj, grid, &cfg).unwrap();
        assert!(
            (dp.value - bf.value).abs() <= 1e-9 * bf.value.abs().max(1.0),
            "case {case}: dp {} vs brute force {}",
            dp.value,
            bf.value
        );
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

fn spm_arbitrage(degrade: bool) -> (Model, Objective) {
    let params = presets::demo_spm();
    let model = Model::Spm {
        init: SpmState::at_soc(&params, 0.5).unwrap(),
        params,
        degrade,
    };
    let mut a = arbitrage(&DAY_PRICES, 3600.0);
    a.terminal = Terminal::AtLeastInitial;
    if degrade {
        a.degradation_weight = 1.0;
        a.replacement_cost = presets::demo().degradation.replacement_cost_usd;
        a.pricing = DegradationPricing::Sei;
    }
    (model, Objective::Arbitrage(a))
}

#[test]
fn adjoint_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    for case in 0..20 {
        let (model, obj) = spm_arbitrage(case % 2 == 0);
        let mut problem = PenaltyProblem::new(&model, &obj, obj.prices().grid, &PenaltyConfig::default()).unwrap();
        problem.mu = 1e5;
        let u: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let adj = problem.gradient_adjoint(&u).unwrap();
        let fd = problem.gradient_fd_central(&u, 1e-6);
        let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (k, (a, f)) in adj.iter().zip(&fd).enumerate() {
            assert!(
                (a - f).abs() <= 1e-4 * a.abs().max(f.abs()).max(1e-3 * scale),
                "case {case} step {k}: adjoint {a} vs fd {f}"
            );
        }
    }
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn gradient_optimum_replays_cleanly_and_reevaluates() {
    for method in [GradientMethod::FiniteDifference, GradientMethod::Adjoint] {
        let (model, obj) = spm_arbitrage(false);
        let cfg = PenaltyConfig { gradient: method, ..PenaltyConfig::default() };
        let r = gradient_solve(&model, &obj, obj.prices().grid, &cfg).unwrap();
        assert!(r.certified);
        assert!(r.value >= 0.0);
        let again = evaluate(&model, &r.schedule, &obj).unwrap();
        assert_eq!(again, r.value);
        let rep = replay(&r.schedule, &model, &obj, Some(r.value)).unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        assert!((rep.realized_value - r.value).abs() <= 1e-9 * r.value.abs().max(1.0));
    }
}

#[test]
fn heavier_degradation_pricing_never_cycles_more() {
    let set = presets::demo();
    let model = Model::Erm {
        init: ErmState::new(0.5 * set.erm.e_max_mwh, &set.erm).unwrap(),
        params: set.erm.clone(),
    };
    let levels: Vec<f64> = (-4..=4).map(|k| k as f64 / 4.0 * set.erm.p_dis_max_mw).collect();
    let cfg = DpConfig { levels, ..DpConfig::default() };
    let mut last = f64::INFINITY;
    for lambda in [0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 100.0] {
        let mut a = arbitrage(&DAY_PRICES, 3600.0);
        a.terminal = Terminal::AtLeastInitial;
        a.degradation_weight = lambda;
        a.replacement_cost = set.degradation.replacement_cost_usd;
        a.eol_fraction = set.degradation.eol_fraction;
        a.pricing = DegradationPricing::Throughput(set.degradation.throughput);
        let obj = Objective::Arbitrage(a);
        let r = dp_solve(&model, &obj, obj.prices().grid, &cfg).unwrap();
        let moved = r.trace.total_throughput_mwh();
        assert!(moved <= last + 1e-9, "lambda {lambda}: {moved} after {last}");
        last = moved;
    }
    assert_eq!(last, 0.0);
}
