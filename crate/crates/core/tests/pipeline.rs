use dsfttd::channel::{generate_channel, optimal_precoders, perturb_csi, ChannelSet, NoiseModel};
use dsfttd::experiment::steering_targets;
use dsfttd::fttd::{active_fttd_count, build_delay_bank, composite_precoder};
use dsfttd::geometry::{frequency_grid, Direction, FrequencyGrid, SectorAntenna, UpaGeometry};
use dsfttd::linalg::frobenius_sq;
use dsfttd::metrics::{
    dbm_to_watts, ds_fttd_spectral_efficiency, frozen_phase_precoders, power_consumption, spectral_efficiency,
    ArchitectureKind, ArchitectureSpec, DevicePowers,
};
use dsfttd::rd::{objective, rd_solve, RdConfig, RdProblem};
use dsfttd::squint::{mean_gain_db, weighted_gain};
use dsfttd::Execution;
use proptest::prelude::*;
use std::f64::consts::PI;

const FC: f64 = 300e9;

struct Setup {
    geom: UpaGeometry,
    grid: FrequencyGrid,
    antenna: SectorAntenna,
}

fn setup(side: usize, carriers: usize) -> Setup {
    Setup {
        geom: UpaGeometry::wavelength_spaced(side, side, FC).unwrap(),
        grid: frequency_grid(FC, 50e9, carriers).unwrap(),
        antenna: SectorAntenna::new(2.0 * PI / 3.0, PI / 4.0).unwrap(),
    }
}

#[test]
fn design_chain_respects_power_and_rate_ordering() {
    let s = setup(6, 8);
    let rho = dbm_to_watts(20.0);
    let noise = NoiseModel::default().power(&s.grid);
    let ch = generate_channel(&s.geom, &s.geom, &s.grid, &s.antenna, 4, 3).unwrap();
    let p = optimal_precoders(&ch, 4, rho, noise).unwrap();
    assert!((p.total_power() - rho).abs() < 1e-12 * rho);

    let bank = build_delay_bank(&s.geom, 4, 8).unwrap();
    let problem = RdProblem::new(&p.precoders, &bank, &s.grid).unwrap();
    let r = rd_solve(
        &problem,
        &RdConfig {
            seed: 3,
            ..RdConfig::default()
        },
    )
    .unwrap();
    let t = r.composite(&problem).unwrap();
    let power: f64 = t.iter().map(frobenius_sq).sum();
    assert!((power - rho).abs() < 1e-9 * rho);

    let se_opt = spectral_efficiency(ch.carriers(), &p.precoders, noise).unwrap();
    let se_ds = ds_fttd_spectral_efficiency(ch.carriers(), &r.switch, problem.fttd(), &r.digital, noise).unwrap();
    assert!((se_ds - spectral_efficiency(ch.carriers(), &t, noise).unwrap()).abs() < 1e-9);
    let frozen = frozen_phase_precoders(
        &p.precoders,
        &r.switch,
        &problem.fttd()[s.grid.center_index()],
        Execution::Sequential,
    )
    .unwrap();
    let se_ps = spectral_efficiency(ch.carriers(), &frozen, noise).unwrap();
    assert!(se_opt >= se_ds && se_ds >= se_ps, "{se_opt} {se_ds} {se_ps}");

    let active = active_fttd_count(&r.switch);
    assert!(active <= bank.columns());
    let spec = ArchitectureSpec::new(ArchitectureKind::DsFttd, s.geom.antenna_count(), 4, rho)
        .with_delays(8)
        .with_active_fttd(active);
    let full = spec.with_active_fttd(bank.columns());
    let dev = DevicePowers::default();
    assert!(power_consumption(&spec, &dev).unwrap() <= power_consumption(&full, &dev).unwrap());
}

#[test]
fn replayed_channel_reproduces_the_design() {
    let s = setup(4, 6);
    let ch = generate_channel(&s.geom, &s.geom, &s.grid, &s.antenna, 3, 9).unwrap();
    let noisy = perturb_csi(&ch, 0.8, 4).unwrap();
    for set in [&ch, &noisy] {
        let replay = ChannelSet::from_json(&set.to_json().unwrap()).unwrap();
        let a = optimal_precoders(set, 2, 0.1, 1e-10).unwrap();
        let b = optimal_precoders(&replay, 2, 0.1, 1e-10).unwrap();
        assert_eq!(a.precoders, b.precoders);
    }
}

#[test]
fn single_chain_gain_grows_with_q() {
    let s = setup(8, 12);
    let targets = steering_targets(&s.geom, &s.grid, Direction::from_degrees(45.0, 30.0).unwrap());
    let mut previous = f64::NEG_INFINITY;
    for q in [2, 16] {
        let bank = build_delay_bank(&s.geom, 1, q).unwrap();
        let problem = RdProblem::new(&targets, &bank, &s.grid).unwrap();
        let r = rd_solve(&problem, &RdConfig::default()).unwrap();
        let gains: Vec<f64> = r
            .composite(&problem)
            .unwrap()
            .iter()
            .zip(&targets)
            .map(|(t, a)| weighted_gain(&t.column(0).into_owned(), &a.column(0).into_owned()))
            .collect();
        let db = mean_gain_db(&gains);
        assert!(db <= 10.0 * 64f64.log10() + 1e-9);
        assert!(db > previous, "Q={q}: {db} <= {previous}");
        previous = db;
    }
}

#[test]
fn execution_modes_agree_bit_for_bit() {
    let s = setup(6, 6);
    let ch = generate_channel(&s.geom, &s.geom, &s.grid, &s.antenna, 4, 1).unwrap();
    let p = optimal_precoders(&ch, 3, 0.1, 1e-10).unwrap();
    let bank = build_delay_bank(&s.geom, 3, 4).unwrap();
    let problem = RdProblem::new(&p.precoders, &bank, &s.grid).unwrap();
    let run = |execution| {
        rd_solve(
            &problem,
            &RdConfig {
                execution,
                restarts: 2,
                ..RdConfig::default()
            },
        )
        .unwrap()
    };
    let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
    assert_eq!(a.switch, b.switch);
    assert_eq!(a.digital, b.digital);
    assert_eq!(a.objective_trace, b.objective_trace);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rd_trace_never_increases(seed in 0u64..10_000, chains in 1usize..=3, q in 2usize..=6) {
        let s = setup(3, 4);
        let ch = generate_channel(&s.geom, &s.geom, &s.grid, &s.antenna, 3, seed).unwrap();
        let p = optimal_precoders(&ch, chains, 0.1, 1e-10).unwrap();
        let bank = build_delay_bank(&s.geom, chains, q).unwrap();
        let problem = RdProblem::new(&p.precoders, &bank, &s.grid).unwrap();
        let r = rd_solve(&problem, &RdConfig { seed, ..RdConfig::default() }).unwrap();
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
        let final_obj = objective(&problem, &r.switch, &r.digital).unwrap();
        prop_assert!((final_obj - r.final_objective).abs() <= 1e-9 * final_obj.max(1e-30));
    }

    #[test]
    fn composite_power_matches_target(seed in 0u64..10_000) {
        let s = setup(3, 3);
        let ch = generate_channel(&s.geom, &s.geom, &s.grid, &s.antenna, 2, seed).unwrap();
        let p = optimal_precoders(&ch, 2, 0.5, 1e-10).unwrap();
        let bank = build_delay_bank(&s.geom, 2, 3).unwrap();
        let problem = RdProblem::new(&p.precoders, &bank, &s.grid).unwrap();
        let r = rd_solve(&problem, &RdConfig { seed, ..RdConfig::default() }).unwrap();
        let total: f64 = problem
            .fttd()
            .iter()
            .zip(&r.digital)
            .map(|(f, d)| frobenius_sq(&composite_precoder(&r.switch, f, d).unwrap()))
            .sum();
        prop_assert!((total - 0.5).abs() < 1e-9);
    }
}
