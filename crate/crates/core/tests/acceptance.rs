//! Acceptance gate: one test per criterion, each printing a `AC-n PASS` line
//! with the measured numbers (run with `--nocapture` to see them). A failing
//! criterion panics with an `AC-n FAIL` message explaining what was violated.
//!
//! The criteria cover the rotor power model, the battery model, the link
//! model, the fairness/energy-efficiency metrics, the environment dynamics,
//! the learning stack (gradients, update rules, and a full desk-scale
//! training run), and the scripted baselines.

use papsim_core::baselines::{
    cyclic_tour_length, hover_baseline, nearest_neighbor_tour, plan_tour, tsp_baseline, two_opt,
};
use papsim_core::battery::{estimate_airtime, init_discharge_time, BatteryConfig, BatteryState};
use papsim_core::channel::{
    elevation_deg, expected_spectral_efficiency, los_probability, path_loss_db,
    EnvironmentProfile, RadioConfig,
};
use papsim_core::env::Env;
use papsim_core::geometry::{Position3, VelocityVector};
use papsim_core::harness::{self, trajectory_rows, RunConfig, Scale};
use papsim_core::metrics::{fairness_index, summarize, tdma_allocation, EpisodeRecord, SlotRecord};
use papsim_core::neuralnet::{gradient_check, Activation, Mlp};
use papsim_core::power::{forward_power, hover_power, vertical_power, UavParams};
use papsim_core::td3::{polyak_blend, Td3Config, Td3Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// AC-1: the level-flight power curve at 100 m altitude has an interior
/// minimum at 11 ± 2 m/s.
#[test]
fn ac01_level_power_curve_has_interior_minimum_near_11() {
    let uav = UavParams::default();
    let z = 100.0;
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..=2400 {
        let v = 0.01 * k as f64;
        let p = forward_power(v, std::f64::consts::FRAC_PI_2, z, &uav);
        if p < best.0 {
            best = (p, v);
        }
    }
    let (p_min, v_min) = best;
    let p_slow = forward_power(0.01, std::f64::consts::FRAC_PI_2, z, &uav);
    let p_fast = forward_power(24.0, std::f64::consts::FRAC_PI_2, z, &uav);
    assert!(
        (v_min - 11.0).abs() <= 2.0,
        "AC-1 FAIL: power minimum sits at {v_min} m/s, outside 11±2"
    );
    assert!(
        p_min < p_slow && p_min < p_fast,
        "AC-1 FAIL: minimum {p_min} W is not interior ({p_slow} W slow, {p_fast} W fast)"
    );
    println!("AC-1 PASS — level power minimum {p_min:.2} W at {v_min:.2} m/s (z = {z} m)");
}

/// AC-2: axial flight always costs more than hovering at the same altitude
/// for any speed in (0, 24], and at equal speed a climbing flight path costs
/// more than a level one.
#[test]
fn ac02_vertical_exceeds_hover_and_climb_exceeds_level() {
    let uav = UavParams::default();
    let mut checked = 0usize;
    for zi in 0..=8 {
        let z = 20.0 + 10.0 * zi as f64;
        let hover = hover_power(z, &uav);
        for vi in 1..=48 {
            let v = 0.5 * vi as f64;
            let vertical = vertical_power(v, z, &uav);
            assert!(
                vertical > hover,
                "AC-2 FAIL: axial flight at {v} m/s, {z} m costs {vertical} W ≤ hover {hover} W"
            );
            checked += 1;
        }
    }
    for zi in 0..=8 {
        let z = 20.0 + 10.0 * zi as f64;
        for vi in 1..=12 {
            let v = 2.0 * vi as f64;
            let level = forward_power(v, std::f64::consts::FRAC_PI_2, z, &uav);
            for ei in 1..=8 {
                // Elevation is measured from +z, so anything below π/2 climbs.
                let elevation = std::f64::consts::FRAC_PI_2 * ei as f64 / 9.0;
                let climb = forward_power(v, elevation, z, &uav);
                assert!(
                    climb > level,
                    "AC-2 FAIL: climbing at {v} m/s (elevation {elevation:.3}) costs {climb} W ≤ level {level} W"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 1000, "AC-2 FAIL: grid too small ({checked} points)");
    println!("AC-2 PASS — ordering holds on all {checked} grid points");
}

/// AC-3: simulated air-time at a constant 200 W draw is strictly below the
/// naive pack-energy/power estimate, and air-time is monotone nonincreasing
/// in constant power over a 50–400 W sweep.
#[test]
fn ac03_airtime_below_naive_and_monotone_in_power() {
    let cfg = BatteryConfig::default();
    let airtime_200: f64 = estimate_airtime(|_| 200.0, 1.0, &cfg).unwrap();
    let naive_200 = cfg.nominal_energy_j() / 200.0;
    assert!(
        airtime_200 < naive_200,
        "AC-3 FAIL: 200 W air-time {airtime_200} s is not below the naive {naive_200} s"
    );

    let mut previous = f64::INFINITY;
    for step in 0..=35 {
        let power = 50.0 + 10.0 * step as f64;
        let airtime = estimate_airtime(|_| power, 1.0, &cfg).unwrap();
        assert!(
            airtime <= previous,
            "AC-3 FAIL: air-time grew from {previous} s to {airtime} s at {power} W"
        );
        previous = airtime;
    }

    // The discharge-rate correction behind those numbers: usable time at a
    // constant current sits below capacity/current, and the 3 A value agrees
    // with a long-hand evaluation of the formula.
    for i in [2.0, 3.0, 5.0, 12.0, 40.0] {
        let t = init_discharge_time(i, &cfg).unwrap();
        assert!(
            t < cfg.capacity_ah / i,
            "AC-3 FAIL: at {i} A usable time {t} h is not below naive {} h",
            cfg.capacity_ah / i
        );
    }
    let t3 = init_discharge_time(3.0, &cfg).unwrap();
    assert!(
        (t3 - 1.4489044933872681).abs() < 1e-12,
        "AC-3 FAIL: 3 A usable time drifted to {t3} h"
    );
    println!(
        "AC-3 PASS — 200 W flies {airtime_200} s vs naive {naive_200:.0} s; nonincreasing over 50–400 W"
    );
}

/// AC-4: endurance of the default pack in level flight at 11 m/s lands
/// within 25 % of 1616 s.
#[test]
fn ac04_level_flight_endurance_within_band() {
    let cfg = BatteryConfig::default();
    let power: f64 = forward_power(11.0, std::f64::consts::FRAC_PI_2, 100.0, &UavParams::default());
    let airtime = estimate_airtime(|_| power, 1.0, &cfg).unwrap();
    let reference = 1616.0;
    let deviation = (airtime - reference).abs() / reference;
    assert!(
        deviation <= 0.25,
        "AC-4 FAIL: level endurance {airtime} s deviates {:.1} % from {reference} s",
        deviation * 100.0
    );
    println!(
        "AC-4 PASS — level endurance at 11 m/s: {airtime} s at {power:.2} W ({:+.1} % of {reference} s)",
        (airtime / reference - 1.0) * 100.0
    );
}

/// AC-5: a single-slot, single-node episode has FEE = B·R̄/P to 1e-12
/// relative; the fairness index stays within [1/N, 1], hits 1 exactly on
/// equal inputs, and is scale-invariant; TDMA shares sum to the slot length
/// exactly.
#[test]
fn ac05_metric_identities_and_bounds() {
    let mut r = rng(5);
    let radio = RadioConfig::default();
    let profile = EnvironmentProfile::suburban();
    let cfg = BatteryConfig::default();
    for trial in 0..200 {
        let pap = Position3::new(r.gen_range(0.0..1000.0), r.gen_range(0.0..1000.0), r.gen_range(20.0..100.0));
        let node = Position3::new(r.gen_range(0.0..1000.0), r.gen_range(0.0..1000.0), 0.0);
        let se: f64 = expected_spectral_efficiency(&pap, &node, &radio, &profile).unwrap();
        let power = r.gen_range(50.0..400.0);
        let delta_t = 1.0;

        let mut record = EpisodeRecord::new(delta_t, pap, BatteryState::fresh(&cfg));
        record.positions.push(pap);
        record.battery.push(BatteryState::fresh(&cfg));
        record.slots.push(SlotRecord {
            velocity: VelocityVector::hover(),
            power_w: power,
            per_node_time_s: vec![delta_t],
            per_node_bits: vec![radio.bandwidth_hz * delta_t * se],
        });
        let summary = summarize(&record).unwrap();
        let expected = radio.bandwidth_hz * se / power;
        let rel = (summary.fee - expected).abs() / expected;
        assert!(
            rel < 1e-12,
            "AC-5 FAIL: trial {trial} FEE {0} vs B·R̄/P {expected}, relative error {rel}",
            summary.fee
        );
        assert_eq!(summary.fi, 1.0, "AC-5 FAIL: one positive node must give exactly FI = 1");
    }
    // Fairness bounds over 10⁵ random nonnegative vectors, plus scale
    // invariance (exact for power-of-two factors, 1e-12 otherwise).
    for trial in 0..100_000 {
        let n = r.gen_range(1..=16);
        let values: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1e9)).collect();
        let fi = fairness_index(&values);
        assert!(
            fi >= 1.0 / n as f64 - 1e-15 && fi <= 1.0 + 1e-15,
            "AC-5 FAIL: FI {fi} escapes [1/{n}, 1] for {values:?}"
        );
        if trial % 100 == 0 {
            let doubled: Vec<f64> = values.iter().map(|v| v * 4096.0).collect();
            assert_eq!(
                fairness_index(&doubled),
                fi,
                "AC-5 FAIL: power-of-two rescaling changed the index"
            );
            let scaled: Vec<f64> = values.iter().map(|v| v * 1.37e-5).collect();
            let fi_scaled = fairness_index(&scaled);
            assert!(
                (fi_scaled - fi).abs() <= 1e-12 * fi,
                "AC-5 FAIL: rescaling moved FI from {fi} to {fi_scaled}"
            );
        }
    }
    for n in 1..=16usize {
        let equal = vec![3.5; n];
        assert_eq!(fairness_index(&equal), 1.0, "AC-5 FAIL: equal shares must give exactly 1");
    }
    assert_eq!(fairness_index(&[0.0, 0.0]), 0.0, "AC-5 FAIL: all-zero shares must give 0");

    // TDMA time shares sum to the slot length exactly.
    for _ in 0..20_000 {
        let n = r.gen_range(1..=16);
        let rates: Vec<f64> = (0..n)
            .map(|_| if r.gen_bool(0.15) { 0.0 } else { r.gen_range(0.0..50.0) })
            .collect();
        let delta_t = [0.5, 1.0, 1.5, 2.0][r.gen_range(0..4)];
        let times = tdma_allocation(&rates, delta_t).unwrap();
        let sum: f64 = times.iter().sum();
        assert_eq!(sum, delta_t, "AC-5 FAIL: TDMA times for {rates:?} sum to {sum}, not {delta_t}");
        assert!(
            times.iter().all(|&t| t >= -1e-12),
            "AC-5 FAIL: TDMA produced a negative share: {times:?}"
        );
    }
    println!(
        "AC-5 PASS — FEE identity to 1e-12, fairness bounds and scale invariance on 100000 vectors, exact TDMA sums"
    );
}

/// AC-6: desk-scale training beats the hover baseline and 150 % of the
/// untrained policy on at least 2 of 3 fixed seeds, within 15 minutes.
#[test]
fn ac06_desk_training_beats_hover_baseline() {
    let start = Instant::now();
    let cfg = RunConfig::preset(Scale::Desk);
    let scenario = cfg.scenario_with(harness::offline_layout(&cfg).unwrap()).unwrap();
    let hover_fee = hover_baseline(&scenario).unwrap().metrics.fee * 1e-6;

    let tmp = tempfile::tempdir().unwrap();
    let mut passes = 0usize;
    let mut report = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut run_cfg = cfg.clone();
        run_cfg.run.seed = seed;
        run_cfg.run.out_dir = tmp.path().join(format!("seed{seed}"));
        let artifacts = harness::run_offline(&run_cfg).unwrap();
        let evals: Vec<f64> = artifacts
            .metrics
            .iter()
            .filter(|m| m.phase == harness::Phase::Eval)
            .map(|m| m.fee_mbit_per_j)
            .collect();
        let untrained = evals[0];
        let best = evals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ok = best >= 1.5 * untrained && best >= hover_fee;
        passes += ok as usize;
        report.push(format!(
            "seed {seed}: untrained {untrained:.3}, best {best:.3}, {}",
            if ok { "pass" } else { "fail" }
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        passes >= 2,
        "AC-6 FAIL: only {passes}/3 seeds beat hover {hover_fee:.3} Mbit/J and 1.5× untrained ({})",
        report.join("; ")
    );
    assert!(
        elapsed <= 900.0,
        "AC-6 FAIL: training took {elapsed:.0} s, budget is 900 s"
    );
    println!(
        "AC-6 PASS — {passes}/3 seeds beat hover {hover_fee:.3} Mbit/J ({}) in {elapsed:.0} s",
        report.join("; ")
    );
}

/// AC-7: analytic gradients agree with central differences to 1e-4 on 20
/// random smooth networks, in under 30 s.
#[test]
fn ac07_gradient_check_on_random_networks() {
    let start = Instant::now();
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n_hidden = r.gen_range(1..=3);
        let mut dims = vec![r.gen_range(2..=5)];
        for _ in 0..n_hidden {
            dims.push(r.gen_range(4..=12));
        }
        dims.push(r.gen_range(1..=3));
        let mut mlp = Mlp::new(&dims, Activation::Tanh, Activation::Identity, &mut r);
        let input: Vec<f64> = (0..dims[0]).map(|_| r.gen_range(-2.0..2.0)).collect();
        let target: Vec<f64> = (0..*dims.last().unwrap()).map(|_| r.gen_range(-2.0..2.0)).collect();
        let report = gradient_check(&mut mlp, &input, &target, 1e-6);
        let err = report.max_err();
        assert!(
            err < 1e-4,
            "AC-7 FAIL: trial {trial} ({dims:?}) disagrees with finite differences by {err}"
        );
        worst = worst.max(err);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "AC-7 FAIL: took {elapsed:.1} s, budget is 30 s");
    println!("AC-7 PASS — 20 networks, worst relative gradient error {worst:.2e} in {elapsed:.2} s");
}

/// AC-8: the update rules hold exactly — soft updates blend as specified,
/// terminal targets equal the reward, the bootstrap never exceeds either
/// critic's individual estimate, and the actor climbs a known critic to its
/// optimum.
#[test]
fn ac08_update_rule_contracts() {
    // Soft update arithmetic, elementwise.
    let mut r = rng(8);
    for _ in 0..50 {
        let n = r.gen_range(1..=30);
        let online: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
        let mut target: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
        let expect: Vec<f64> = online
            .iter()
            .zip(&target)
            .map(|(&o, &t)| 0.001 * o + 0.999 * t)
            .collect();
        polyak_blend(&mut target, &online, 0.001);
        for (got, want) in target.iter().zip(&expect) {
            assert!(
                (got - want).abs() < 1e-15,
                "AC-8 FAIL: soft update gave {got}, expected {want}"
            );
        }
    }

    // Terminal targets are the reward, bitwise; bootstrapped targets never
    // exceed either individual critic estimate.
    let config = Td3Config { hidden_dims: vec![8, 8], ..Td3Config::default() };
    let trainer = Td3Trainer::new(3, 2, config, &mut rng(81));
    for k in 0..100 {
        let reward = (k as f64).sin() * 5.0;
        let next: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut noise = rng(82 + k);
        assert_eq!(
            trainer.compute_target(reward, true, &next, &mut noise),
            reward,
            "AC-8 FAIL: terminal target differs from the reward"
        );
        // Fresh trainer: target nets equal the online nets, so the twin
        // estimates can be read off the public critics with the same action.
        let action = trainer.smoothed_target_action(&next, &mut rng(82 + k));
        let y = trainer.compute_target(reward, false, &next, &mut rng(82 + k));
        let mut input = next.clone();
        input.extend_from_slice(&action);
        let y1 = reward + 0.99 * trainer.critic1().forward(&input)[0];
        let y2 = reward + 0.99 * trainer.critic2().forward(&input)[0];
        assert!(
            y <= y1 && y <= y2,
            "AC-8 FAIL: bootstrap {y} exceeds a twin estimate ({y1}, {y2})"
        );
        assert!(
            (y - y1.min(y2)).abs() < 1e-12,
            "AC-8 FAIL: bootstrap {y} is not the minimum of the twins ({y1}, {y2})"
        );
    }

    // The actor climbs a hand-built critic whose optimum action is 0.3.
    let mut config = Td3Config::default();
    config.hidden_dims = vec![8];
    config.actor_lr = 5e-3;
    let mut trainer = Td3Trainer::new(1, 1, config, &mut rng(83));
    let mut critic: Mlp<f64> = Mlp::new(&[2, 5, 1], Activation::Relu, Activation::Identity, &mut rng(84));
    #[rustfmt::skip]
    critic.params_mut().copy_from_slice(&[
        0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0,
        2.0, 0.5, 0.0, -0.3, -0.6,
        2.1, -1.0, -0.8, -0.6, -0.7,
        -3.79,
    ]);
    for a in [-1.0, -0.5, 0.0, 0.3, 0.6, 1.0] {
        let q = critic.forward(&[0.5, a])[0];
        let want = -(a - 0.3) * (a - 0.3);
        assert!((q - want).abs() < 1e-9, "toy critic mismatch at {a}: {q} vs {want}");
    }
    trainer.set_critic1(critic);
    let states = vec![vec![0.5]; 8];
    for _ in 0..500 {
        trainer.actor_update(&states);
    }
    let a = trainer.select_action(&[0.5])[0];
    assert!(
        (a - 0.3).abs() < 0.05,
        "AC-8 FAIL: actor settled at {a}, expected 0.3 ± 0.05"
    );
    println!("AC-8 PASS — soft update exact, terminal exact, twin bound holds, actor reaches {a:.3}");
}

/// AC-9: 500 random-policy desk episodes respect the physical contracts and
/// replay bit-identically, in under 2 minutes.
#[test]
fn ac09_random_policy_episode_invariants() {
    let start = Instant::now();
    let cfg = RunConfig::preset(Scale::Desk);
    let scenario = cfg.scenario_with(harness::offline_layout(&cfg).unwrap()).unwrap();
    let v_max = scenario.motion.v_max;
    let delta_t = scenario.motion.delta_t;
    let (z_min, z_max) = (scenario.motion.z_min, scenario.motion.z_max);
    let cutoff = scenario.battery.cutoff_voltage_v;
    let destination = scenario.destination;

    let run = |seed: u64| -> (EpisodeRecord<f64>, Vec<f64>) {
        let mut env = Env::new(scenario.clone()).unwrap();
        let mut r = rng(seed);
        let mut rewards = Vec::new();
        while !env.done() {
            let action = [
                r.gen_range(-1.0..=1.0),
                r.gen_range(-1.0..=1.0),
                r.gen_range(-1.0..=1.0),
            ];
            rewards.push(env.step(&action).unwrap().reward);
        }
        (env.into_record(), rewards)
    };

    for episode in 0..500u64 {
        let (record, _) = run(9000 + episode);
        let last = record.positions.last().unwrap();
        assert_eq!(
            (last.x, last.y, last.z),
            (destination.x, destination.y, destination.z),
            "AC-9 FAIL: episode {episode} ended at {last:?}, not the destination"
        );
        for (k, pair) in record.positions.windows(2).enumerate() {
            let hop = pair[0].distance(&pair[1]);
            assert!(
                hop <= v_max * delta_t + 1e-9,
                "AC-9 FAIL: episode {episode} slot {k} moved {hop} m > v_max·Δt"
            );
            assert!(
                pair[1].z >= z_min - 1e-9 && pair[1].z <= z_max + 1e-9,
                "AC-9 FAIL: episode {episode} slot {k} altitude {} outside band",
                pair[1].z
            );
        }
        let states = &record.battery;
        for (k, state) in states.iter().enumerate().take(states.len() - 1) {
            assert!(
                state.voltage_v >= cutoff,
                "AC-9 FAIL: episode {episode} state {k} voltage {} below cutoff pre-termination",
                state.voltage_v
            );
            assert!(
                state.remaining_time_h > 0.0,
                "AC-9 FAIL: episode {episode} state {k} has no usable time yet kept flying"
            );
        }
    }

    let (record_a, rewards_a) = run(9007);
    let (record_b, rewards_b) = run(9007);
    assert_eq!(
        trajectory_rows(&record_a),
        trajectory_rows(&record_b),
        "AC-9 FAIL: identical seeds produced different trajectories"
    );
    assert_eq!(rewards_a, rewards_b, "AC-9 FAIL: identical seeds produced different rewards");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "AC-9 FAIL: took {elapsed:.0} s, budget is 120 s");
    println!("AC-9 PASS — 500 episodes land at the destination with all invariants, {elapsed:.1} s");
}

/// AC-10: both scripted baselines complete full-scale episodes, and the tour
/// improver is within 5 % of brute force on small instances.
#[test]
fn ac10_baselines_complete_and_tours_are_near_optimal() {
    let cfg = RunConfig::preset(Scale::Paper);
    let scenario = cfg.scenario_with(harness::offline_layout(&cfg).unwrap()).unwrap();
    let hover = hover_baseline(&scenario).unwrap();
    let tsp = tsp_baseline(&scenario).unwrap();
    assert!(
        hover.metrics.completed,
        "AC-10 FAIL: hover baseline did not complete the full-scale episode"
    );
    assert!(
        tsp.metrics.completed,
        "AC-10 FAIL: tour baseline did not complete the full-scale episode"
    );
    assert!(hover.metrics.fee > 0.0 && tsp.metrics.fee > 0.0, "AC-10 FAIL: zero FEE");

    let mut r = rng(10);
    let mut worst_ratio = 1.0f64;
    for layout in 0..50 {
        let n = r.gen_range(5..=7);
        let points: Vec<Position3<f64>> = (0..n)
            .map(|_| Position3::new(r.gen_range(0.0..1000.0), r.gen_range(0.0..1000.0), 100.0))
            .collect();
        let start = Position3::new(0.0, 0.0, 100.0);
        let nn = nearest_neighbor_tour(&points, &start);
        let improved = two_opt(&points, nn.clone());
        let nn_len = cyclic_tour_length(&points, &nn);
        let improved_len = cyclic_tour_length(&points, &improved);
        assert!(
            improved_len <= nn_len + 1e-9,
            "AC-10 FAIL: layout {layout}: improver made the tour longer ({improved_len} > {nn_len})"
        );
        let planned_len = cyclic_tour_length(&points, &plan_tour(&points, &start));
        assert!(
            planned_len <= improved_len + 1e-9,
            "AC-10 FAIL: layout {layout}: multi-start tour {planned_len} worse than single-start {improved_len}"
        );

        // Exhaustive optimum: first index fixed, permute the rest.
        let mut best = f64::INFINITY;
        let mut order: Vec<usize> = (1..n).collect();
        permute(&mut order, 0, &mut |rest| {
            let mut tour = vec![0];
            tour.extend_from_slice(rest);
            let len = cyclic_tour_length(&points, &tour);
            if len < best {
                best = len;
            }
        });
        let ratio = planned_len / best;
        assert!(
            ratio <= 1.05,
            "AC-10 FAIL: layout {layout}: tour {planned_len:.1} m vs optimum {best:.1} m (ratio {ratio:.4})"
        );
        worst_ratio = worst_ratio.max(ratio);
    }
    println!(
        "AC-10 PASS — both baselines complete full scale (hover {:.3}, tour {:.3} Mbit/J); worst tour ratio {worst_ratio:.4}",
        hover.metrics.fee * 1e-6,
        tsp.metrics.fee * 1e-6
    );
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// AC-11: the path loss, line-of-sight probability, and expected spectral
/// efficiency each agree with an independently coded reimplementation to
/// 1e-9 relative on 10 000 random geometries per environment profile.
#[test]
fn ac11_link_model_matches_independent_reimplementation() {
    /// Same definitions, different arithmetic route: the free-space factor is
    /// assembled in linear space, the elevation comes from `asin` on the
    /// slant distance, and the sigmoid is evaluated in its exp-ratio form.
    struct OracleLink {
        loss_los_db: f64,
        loss_nlos_db: f64,
        p_los: f64,
        se: f64,
    }

    fn oracle(
        pap: &Position3<f64>,
        node: &Position3<f64>,
        radio: &RadioConfig<f64>,
        profile: &EnvironmentProfile<f64>,
    ) -> OracleLink {
        let dx = pap.x - node.x;
        let dy = pap.y - node.y;
        let d2 = (dx * dx + dy * dy).sqrt();
        let d3 = (d2 * d2 + pap.z * pap.z).sqrt();
        let beta_deg = if d2 == 0.0 { 90.0 } else { (pap.z / d3).asin().to_degrees() };
        let e = (profile.b * (beta_deg - profile.a)).exp();
        let p_los = e / (e + profile.a);

        let free_space = 4.0 * std::f64::consts::PI * d3 * radio.carrier_hz / 3.0e8;
        let loss_db =
            |eta_db: f64| 10.0 * (free_space * free_space * 10f64.powf(eta_db / 10.0)).log10();
        let tx_w = 1e-3 * 10f64.powf(radio.tx_power_dbm / 10.0);
        let noise_w = 1e-3 * 10f64.powf(radio.noise_dbm_per_hz / 10.0) * radio.bandwidth_hz;
        let cap = |eta_db: f64| {
            let snr = tx_w / (noise_w * free_space * free_space * 10f64.powf(eta_db / 10.0));
            (1.0 + snr).log2()
        };
        OracleLink {
            loss_los_db: loss_db(profile.eta_los_db),
            loss_nlos_db: loss_db(profile.eta_nlos_db),
            p_los,
            se: p_los * cap(profile.eta_los_db) + (1.0 - p_los) * cap(profile.eta_nlos_db),
        }
    }

    let radio = RadioConfig::default();
    let profiles = [
        ("suburban", EnvironmentProfile::suburban()),
        ("urban", EnvironmentProfile::urban()),
        ("dense urban", EnvironmentProfile::dense_urban()),
    ];
    let mut r = rng(11);
    let mut worst = 0.0f64;
    let mut relative = |name: &str, what: &str, got: f64, want: f64| {
        let rel = (got - want).abs() / want.abs().max(1e-30);
        assert!(
            rel < 1e-9,
            "AC-11 FAIL: {name} {what}: {got} vs oracle {want} (relative {rel:.2e})"
        );
        worst = worst.max(rel);
    };
    for (name, profile) in &profiles {
        for _ in 0..10_000 {
            let pap = Position3::new(
                r.gen_range(-200.0..1200.0),
                r.gen_range(-200.0..1200.0),
                r.gen_range(20.0..100.0),
            );
            let node = Position3::new(r.gen_range(0.0..1000.0), r.gen_range(0.0..1000.0), 0.0);
            let want = oracle(&pap, &node, &radio, profile);
            let d3 = pap.distance(&node);
            relative(
                name,
                "LoS path loss",
                path_loss_db(d3, &radio, profile.eta_los_db).unwrap(),
                want.loss_los_db,
            );
            relative(
                name,
                "NLoS path loss",
                path_loss_db(d3, &radio, profile.eta_nlos_db).unwrap(),
                want.loss_nlos_db,
            );
            relative(
                name,
                "LoS probability",
                los_probability(elevation_deg(&pap, &node), profile),
                want.p_los,
            );
            relative(
                name,
                "spectral efficiency",
                expected_spectral_efficiency(&pap, &node, &radio, profile).unwrap(),
                want.se,
            );
        }
    }
    println!(
        "AC-11 PASS — 30 000 geometries × (loss, LoS probability, efficiency), worst relative disagreement {worst:.2e}"
    );
}
