//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit if
//! any criterion outside `KNOWN_RED` failed.
//!
//! cargo test --release -p invpulse --test acceptance

use std::f64::consts::TAU;
use std::time::Instant;

use invpulse::cli::{axis_profile, qst_band_problems};
use invpulse::config::RunConfig;
use invpulse::dynamics::{
    ensemble_transfer, propagate_pure, pure_fidelity, spectator_excitation, DensityState, ModelBundle,
    PropagationSettings,
};
use invpulse::invariant::{
    synthesize_samples, verify_invariant_condition, AnsatzCoefficients, InvariantSpec, Table1Case,
};
use invpulse::levels::{DecoherenceSpec, EnsembleSpec, GroundLevel, LevelSystem, SpectatorClass, PEAKS};
use invpulse::optimizer::{multi_start, score_report, OptimizerSettings, ScoreSpec};
use invpulse::protocol::{
    extract_pair_fidelity, overall_fidelities, run_superposition_protocol, ExtractionBasis, PopulationPulses,
    PopulationReadout, SuperpositionPulses, FOUR_PHASES,
};
use invpulse::spectra::{fit_peaks, populations_from_areas, synthesize_traces, FitOptions, SynthOptions};
use invpulse::tomography::{qst_symmetry_study, ReadoutEffects, StateRegion};
use nalgebra::Vector3;
use num_complex::Complex64;

const SECH_CONFIG: &str = include_str!("../../../configs/sech_tomography.toml");

/// Criteria expected to stay red, with the reason recorded in the decisions ledger.
const KNOWN_RED: &[u32] = &[];

/// Spectator excitation of the Case 1 pair divided by that of its square
/// equivalent, from the first verified run.
const SPECTATOR_RATIO: f64 = 0.0211;

type Outcome = (bool, String);
type Criterion = (u32, &'static str, fn() -> Outcome);

fn model(t2: f64) -> ModelBundle {
    ModelBundle::new(
        LevelSystem::praseodymium_default(),
        DecoherenceSpec::with_t2_optical(t2).unwrap(),
        EnsembleSpec::default(),
        PropagationSettings::default(),
    )
    .unwrap()
}

fn case(c: Table1Case) -> AnsatzCoefficients {
    AnsatzCoefficients::table1(c, 0.0).unwrap().with_exact_constraints()
}

fn criterion_1() -> Outcome {
    let settings = PropagationSettings {
        rel_tol: 1e-11,
        abs_tol: 1e-12,
        ..Default::default()
    };
    let start = Instant::now();
    let one = Vector3::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let mut worst = 0.0f64;
    for c in Table1Case::ALL {
        let a = case(c);
        let p = synthesize_samples(&a, 1024).unwrap();
        let psi = propagate_pure(&one, &p, &settings).unwrap();
        worst = worst.max(1.0 - pure_fidelity(&a.target_state(), &psi));
    }
    let secs = start.elapsed().as_secs_f64();
    (worst < 1e-6 && secs < 1.0, format!("worst infidelity {worst:.2e}, {secs:.3} s"))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut perturbed = f64::INFINITY;
    for c in Table1Case::ALL {
        let a = case(c);
        let p = synthesize_samples(&a, 1024).unwrap();
        let spec = InvariantSpec::new(TAU * 1e6, a).unwrap();
        worst = worst.max(verify_invariant_condition(&spec, &p).unwrap());
        perturbed = perturbed.min(verify_invariant_condition(&spec, &p.scaled(1.1, 1.0)).unwrap());
    }
    (
        worst < 1e-9 && perturbed > 1e-3,
        format!("residual {worst:.2e}; 10% perturbation {perturbed:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    let mut endpoints = true;
    for c in Table1Case::ALL {
        let printed = AnsatzCoefficients::table1(c, 0.0).unwrap();
        let (odd, even) = printed.constraint_residuals();
        worst = (worst.0.max(odd.abs()), worst.1.max(even.abs()));
        endpoints &= synthesize_samples(&case(c), 1024).unwrap().is_endpoint_zero(1e-6);
    }
    (
        worst.0 <= 1e-3 && worst.1 <= 1e-3 && endpoints,
        format!(
            "printed residuals {:.1e} / {:.1e}; endpoints zero: {endpoints}",
            worst.0, worst.1
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let pulses = PopulationPulses::table1().unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for t2 in [44e-6, 88e-6, 132e-6] {
        let r = pulses.run(6, &model(t2), &PopulationReadout::default(), true).unwrap();
        let e = extract_pair_fidelity(&overall_fidelities(&r), (1, 4), ExtractionBasis::Population).unwrap();
        ok &= (0.95..=0.99).contains(&e.per_transfer_fidelity);
        parts.push(format!("T2 {:.0} us: {:.4}", t2 * 1e6, e.per_transfer_fidelity));
    }
    let secs = start.elapsed().as_secs_f64();
    (ok && secs < 300.0, format!("{}; {secs:.1} s", parts.join(", ")))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::parse(SECH_CONFIG).unwrap();
    let sets: Vec<SuperpositionPulses> = FOUR_PHASES
        .iter()
        .map(|&ph| SuperpositionPulses::table1(ph).unwrap())
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for t2 in [44e-6, 132e-6] {
        let m = model(t2);
        let effects = ReadoutEffects::build(&cfg.tomography, &m).unwrap();
        let qst = run_superposition_protocol(6, &sets, Some(&effects), &m).unwrap();
        let e = extract_pair_fidelity(&qst.averaged, (1, 4), ExtractionBasis::Superposition).unwrap();
        ok &= (0.97..=0.99).contains(&e.per_transfer_fidelity);
        let direct = run_superposition_protocol(6, &sets, None, &m).unwrap();
        let d = extract_pair_fidelity(&direct.averaged, (1, 4), ExtractionBasis::Superposition).unwrap();
        parts.push(format!(
            "T2 {:.0} us: {:.4} +- {:.4} (exact readout {:.4})",
            t2 * 1e6,
            e.per_transfer_fidelity,
            e.uncertainty,
            d.per_transfer_fidelity
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    (ok && secs < 300.0, format!("{}; {secs:.1} s", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let cfg = RunConfig::parse(SECH_CONFIG).unwrap();
    let m = cfg.model().unwrap();
    let effects = ReadoutEffects::build(&cfg.tomography, &m).unwrap();
    let eq = qst_symmetry_study(1000, 7, StateRegion::Equator, &effects).unwrap();
    let near = qst_symmetry_study(1000, 7, StateRegion::NearOne, &effects).unwrap();
    let (on, diag_lo, _) = axis_profile(&effects).unwrap();
    let mut problems = qst_band_problems(&eq, on, diag_lo);
    if near.unaveraged.width() >= eq.unaveraged.width() {
        problems.push("spread near |1> not smaller".into());
    }
    (
        problems.is_empty(),
        format!(
            "unaveraged {:.4}..{:.4}, +X {:.4}, worst 45deg {:.4}, averaged {:.4}..{:.4} (mean {:.4}), near |1> spread {:.4}{}",
            eq.unaveraged.min,
            eq.unaveraged.max,
            on,
            diag_lo,
            eq.averaged.min,
            eq.averaged.max,
            eq.averaged.mean,
            near.unaveraged.width(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn criterion_7() -> Outcome {
    let f = 0.97f64;
    let data: Vec<f64> = (1..=6).map(|n| f.powi(n)).collect();
    let e = extract_pair_fidelity(&data, (1, 4), ExtractionBasis::Population).unwrap();
    let err = (e.per_transfer_fidelity - f).abs();
    let scaled: Vec<f64> = data.iter().map(|x| x * 0.8).collect();
    let s = extract_pair_fidelity(&scaled, (1, 4), ExtractionBasis::Superposition).unwrap();
    let diff = e
        .per_n
        .iter()
        .zip(&s.per_n)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (
        err <= 4.0 * f64::EPSILON && diff <= 4.0 * f64::EPSILON,
        format!("|f - 0.97| = {err:.1e}, readout-factor change {diff:.1e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut m = model(132e-6);
    m.ensemble.spectators = vec![SpectatorClass {
        offset_hz: -2e6,
        initial: GroundLevel::One,
    }];
    let p = synthesize_samples(&case(Table1Case::Case1), 1024).unwrap();
    let shaped = spectator_excitation(&p, &m).unwrap();
    let square = spectator_excitation(&p.square_equivalent(), &m).unwrap();
    let ratio = shaped / square;
    let regression = (ratio / SPECTATOR_RATIO - 1.0).abs() < 0.05;
    (
        shaped < square && regression,
        format!("Case 1 {shaped:.3e} vs square {square:.3e}, ratio {ratio:.4} (recorded {SPECTATOR_RATIO:.4})"),
    )
}

fn criterion_9() -> Outcome {
    let sys = LevelSystem::praseodymium_default();
    let ground = [0.0, 0.03, 0.97];
    let tallest = PEAKS
        .iter()
        .map(|&(g, e)| ground[g.index()] * sys.strength(g, e))
        .fold(0.0, f64::max);
    let opts = SynthOptions {
        noise: 0.01 * tallest,
        ..SynthOptions::default()
    };
    let traces = synthesize_traces(ground, &sys, &opts, 2024, 100).unwrap();
    let fits = fit_peaks(&traces, &sys, &FitOptions::default()).unwrap();
    let p = populations_from_areas(&fits, &sys).unwrap();
    (
        (p.p0 - 0.97).abs() <= 0.02 && (p.p1 - 0.03).abs() <= 0.02,
        format!("P0 {:.4} +- {:.4}, P1 {:.4}", p.p0, p.p0_uncertainty, p.p1),
    )
}

fn criterion_10() -> Outcome {
    let m = model(132e-6);
    let c1 = case(Table1Case::Case1);
    let fid = |a: &AnsatzCoefficients| {
        let p = synthesize_samples(a, 1024).unwrap();
        ensemble_transfer(&DensityState::ground(GroundLevel::One), &p, &m, &m.embed(&a.target_state()))
            .unwrap()
            .fidelity
    };
    let base = fid(&c1);
    let mut worst = 0.0f64;
    for s in [0.95, 1.05] {
        let mut free = c1.free();
        free[0] *= s;
        let a = AnsatzCoefficients::from_free(free, c1.t_f, c1.theta, c1.phi).unwrap();
        worst = worst.max((fid(&a) - base).abs());
    }
    let spec = ScoreSpec::for_coefficients(&c1);
    let reference = score_report(&c1, &spec, &m).unwrap();
    let res = multi_start(&c1, &spec, &OptimizerSettings::global(1), 3, &m).unwrap();
    let found = score_report(&res.best, &spec, &m).unwrap();
    (
        worst < 0.01 && found.band_fidelity >= reference.band_fidelity - 0.01,
        format!(
            "a1 +-5% changes fidelity by {worst:.2e}; fresh search score {:.2e} band fidelity {:.4} vs Case 1 {:.2e} / {:.4}",
            found.score, found.band_fidelity, reference.score, reference.band_fidelity
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "closed-system invariant transport", criterion_1),
        (2, "invariant condition residual", criterion_2),
        (3, "endpoint constraints", criterion_3),
        (4, "population-transfer band", criterion_4),
        (5, "superposition band", criterion_5),
        (6, "QST symmetry study", criterion_6),
        (7, "extraction estimator", criterion_7),
        (8, "spectator protection", criterion_8),
        (9, "spectra round trip", criterion_9),
        (10, "optimizer flat region", criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (k, name, f) in criteria {
        let (ok, detail) = f();
        let known = KNOWN_RED.contains(&k);
        println!(
            "criterion {k:>2} {}: {name}: {detail}{}",
            if ok { "PASS" } else { "FAIL" },
            if known && !ok { " (known red)" } else { "" }
        );
        if !ok && !known {
            unexpected.push(k);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
