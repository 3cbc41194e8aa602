//! Searches sech tomography parameters for a readout whose single-state and
//! four-state fidelities match a set of targets.
//!
//! cargo run --release --example tune_sech -- <level 0|1> <side 0|1> <t2_us> <seed> [x0...]
//! x = (peak Rabi MHz, beta 1/us, mu, duration us, center detuning MHz)

use std::f64::consts::TAU;

use invpulse::dynamics::{ModelBundle, PropagationSettings};
use invpulse::levels::{DecoherenceSpec, EnsembleSpec, LevelSystem};
use invpulse::optimizer::{minimize, Bounds, OptimizerSettings};
use invpulse::tomography::*;

fn spec_of(x: &[f64], level: ReadoutLevel, side: BrightSide) -> TomographySpec {
    TomographySpec {
        pulse: PulseKind::Sech(SechParams {
            peak_rabi: TAU * x[0] * 1e6,
            beta: x[1] * 1e6,
            mu: x[2],
            duration: x[3] * 1e-6,
            center_detuning_hz: x[4] * 1e6,
        }),
        readout_level: level,
        bright_side: side,
        ..TomographySpec::ideal()
    }
}

fn profile(effects: &ReadoutEffects) -> [f64; 8] {
    std::array::from_fn(|k| equator_fidelity(effects, (k as f64 * 45.0).to_radians()).unwrap())
}

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let level = if args[0] != 0.0 { ReadoutLevel::One } else { ReadoutLevel::Zero };
    let side = if args[1] != 0.0 { BrightSide::Minus } else { BrightSide::Plus };
    let model = ModelBundle::new(
        LevelSystem::praseodymium_default(),
        DecoherenceSpec::with_t2_optical(args[2] * 1e-6).unwrap(),
        EnsembleSpec::default(),
        PropagationSettings::default(),
    )
    .unwrap();
    let x0: Vec<f64> = if args.len() > 4 { args[4..9].to_vec() } else { vec![0.16, 5.3, 0.7, 1.5, 0.0] };
    let loss = |x: &[f64]| -> invpulse::Result<f64> {
        let effects = ReadoutEffects::build(&spec_of(x, level, side), &model)?;
        let p = profile(&effects);
        let on_axis = p[0].min(p[2]).min(p[4]).min(p[6]).max(p[0].max(p[2]).max(p[4]).max(p[6]));
        let on_best = p[0];
        let diag_worst = [p[1], p[3], p[5], p[7]].into_iter().fold(1.0, f64::min);
        let avg = p.iter().sum::<f64>() / 8.0;
        let _ = on_axis;
        Ok(((on_best - 0.955) / 0.005).powi(2) + ((diag_worst - 0.90) / 0.01).powi(2) + ((avg - 0.915) / 0.005).powi(2))
    };
    let settings = OptimizerSettings {
        sa_iterations: 150,
        sa_initial_temperature: 2.0,
        sa_cooling: 0.97,
        sa_step: 0.05,
        simplex_tol: 1e-4,
        simplex_max_evals: 250,
        seed: args[3] as u64,
        bounds: Bounds { lo: vec![0.05, 1.0, 0.1, 0.5, -0.5], hi: vec![1.0, 20.0, 5.0, 4.0, 0.5] },
    };
    let m = minimize(loss, &x0, &settings).unwrap();
    let effects = ReadoutEffects::build(&spec_of(&m.x, level, side), &model).unwrap();
    let s = qst_symmetry_study(1000, 7, StateRegion::Equator, &effects).unwrap();
    let n = qst_symmetry_study(1000, 7, StateRegion::NearOne, &effects).unwrap();
    println!("x = {:?}  loss {:.4} infeasible {}", m.x, m.value, m.infeasible);
    println!("profile 0..315 step 45: {:.4?}", profile(&effects));
    println!(
        "equator unavg [{:.4}, {:.4}] avg [{:.4}, {:.4}] mean {:.4}; near|1> unavg [{:.4}, {:.4}]",
        s.unaveraged.min, s.unaveraged.max, s.averaged.min, s.averaged.max, s.averaged.mean,
        n.unaveraged.min, n.unaveraged.max
    );
}
