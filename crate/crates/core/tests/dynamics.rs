use invpulse::dynamics::*;
use invpulse::invariant::{synthesize_samples, AnsatzCoefficients, SampledPulsePair, Table1Case};
use invpulse::levels::{DecoherenceSpec, EnsembleSpec, ExcitedLevel, GroundLevel, LevelSystem};
use nalgebra::Vector3;
use num_complex::Complex64;

fn case1() -> (AnsatzCoefficients, SampledPulsePair) {
    let a = AnsatzCoefficients::table1(Table1Case::Case1, 0.0).unwrap().with_exact_constraints();
    let p = synthesize_samples(&a, 1024).unwrap();
    (a, p)
}

/// Lindbladian written out with explicit jump operators, independent of the
/// blockwise generator used by the library.
fn lindblad_rhs(h: &CMat6, jumps: &[CMat6], rho: &CMat6) -> CMat6 {
    let i = Complex64::new(0.0, 1.0);
    let mut d = (h * rho - rho * h) * -i;
    for l in jumps {
        let ld = l.adjoint();
        let ldl = ld * l;
        d += l * rho * ld - (ldl * rho + rho * ldl) * Complex64::new(0.5, 0.0);
    }
    d
}

fn jump_operators(sys: &LevelSystem, dec: &DecoherenceSpec) -> Vec<CMat6> {
    let mut out = Vec::new();
    let unit = |r: usize, c: usize, k: f64| {
        let mut m = CMat6::zeros();
        m[(r, c)] = Complex64::new(k.sqrt(), 0.0);
        m
    };
    for e in ExcitedLevel::ALL {
        let b = dec.branching_for(sys, e);
        for g in GroundLevel::ALL {
            out.push(unit(ground_index(g), excited_index(e), b[g.index()] / dec.t1_optical));
        }
    }
    for g in GroundLevel::ALL {
        let k = ground_index(g);
        out.push(unit(k, k, 1.0 / dec.t2_spin));
    }
    for e in ExcitedLevel::ALL {
        let k = excited_index(e);
        out.push(unit(k, k, dec.optical_dephasing_rate()));
    }
    out
}

fn rk4_fixed(m: &MemberModel, jumps: &[CMat6], field: &dyn TwoToneField, rho0: CMat6, steps: usize) -> CMat6 {
    let h = field.duration() / steps as f64;
    let f = |t: f64, r: &CMat6| lindblad_rhs(&m.hamiltonian(field.amplitudes(t), t), jumps, r);
    let mut rho = rho0;
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(t, &rho);
        let k2 = f(t + 0.5 * h, &(rho + k1 * Complex64::new(0.5 * h, 0.0)));
        let k3 = f(t + 0.5 * h, &(rho + k2 * Complex64::new(0.5 * h, 0.0)));
        let k4 = f(t + h, &(rho + k3 * Complex64::new(h, 0.0)));
        rho += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
            * Complex64::new(h / 6.0, 0.0);
    }
    rho
}

#[test]
fn case1_lossy_transfer_matches_fixed_step_reference() {
    let sys = LevelSystem::praseodymium_default();
    let dec = DecoherenceSpec::with_t2_optical(132e-6).unwrap();
    let (a, p) = case1();
    let m = MemberModel::new(&sys, Some(&dec), 0.0, Couplings::All).unwrap();
    let rho0 = DensityState::ground(GroundLevel::One);
    let target = embed_lambda(&sys, &a.target_state());

    let adaptive = m.propagate(&rho0, &p, &PropagationSettings::default()).unwrap();
    let f_adaptive = state_fidelity(&adaptive, &target);
    assert!((0.97..=0.995).contains(&f_adaptive), "{f_adaptive}");

    let jumps = jump_operators(&sys, &dec);
    let coarse = DensityState::new(rk4_fixed(&m, &jumps, &p, *rho0.matrix(), 8_000)).unwrap();
    let fine = DensityState::new(rk4_fixed(&m, &jumps, &p, *rho0.matrix(), 80_000)).unwrap();
    let f_coarse = state_fidelity(&coarse, &target);
    let f_fine = state_fidelity(&fine, &target);
    assert!((f_coarse - f_fine).abs() < 1e-7, "reference not converged: {f_coarse} vs {f_fine}");
    assert!((f_adaptive - f_fine).abs() < 1e-5, "{f_adaptive} vs {f_fine}");
    let worst = (adaptive.matrix() - fine.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(worst < 1e-5, "density matrices differ by {worst:e}");
}

#[test]
fn halving_tolerances_barely_moves_fidelity() {
    let sys = LevelSystem::praseodymium_default();
    let dec = DecoherenceSpec::with_t2_optical(132e-6).unwrap();
    let (a, p) = case1();
    let target = embed_lambda(&sys, &a.target_state());
    let rho0 = DensityState::ground(GroundLevel::One);
    let base = PropagationSettings::default();
    for detuning in [-300e3, 0.0, 250e3] {
        let f = |s: &PropagationSettings| {
            let r = propagate_lindblad(&rho0, &p, &sys, &dec, detuning, s).unwrap();
            state_fidelity(&r, &target)
        };
        let d = (f(&base) - f(&base.scaled_tolerances(0.5))).abs();
        assert!(d < 1e-5, "detuning {detuning}: {d:e}");
    }
}

#[test]
fn ensemble_fidelity_is_converged_in_tolerance() {
    let (a, p) = case1();
    let mk = |settings| {
        ModelBundle::new(
            LevelSystem::praseodymium_default(),
            DecoherenceSpec::with_t2_optical(132e-6).unwrap(),
            EnsembleSpec::default(),
            settings,
        )
        .unwrap()
    };
    let loose = mk(PropagationSettings::default());
    let tight = mk(PropagationSettings::default().scaled_tolerances(0.5));
    let run = |m: &ModelBundle| {
        ensemble_transfer(&DensityState::ground(GroundLevel::One), &p, m, &m.embed(&a.target_state()))
            .unwrap()
            .fidelity
    };
    assert!((run(&loose) - run(&tight)).abs() < 1e-5);
}

#[test]
fn closed_transfer_is_symmetric_in_detuning() {
    let (a, p) = case1();
    let settings = PropagationSettings {
        rel_tol: 1e-10,
        abs_tol: 1e-11,
        ..Default::default()
    };
    let one = Vector3::new(Complex64::new(1.0, 0.0), Complex64::default(), Complex64::default());
    let target = a.target_state();
    for d in [50e3, 150e3, 300e3, 500e3, 1e6] {
        let plus = pure_fidelity(&target, &propagate_pure_detuned(&one, &p, d, &settings).unwrap());
        let minus = pure_fidelity(&target, &propagate_pure_detuned(&one, &p, -d, &settings).unwrap());
        assert!((plus - minus).abs() < 1e-3, "{d}: {plus} vs {minus}");
    }
}

#[test]
fn lossless_carrier_only_model_matches_three_level_system() {
    let sys = LevelSystem::praseodymium_default();
    let (a, p) = case1();
    let tight = PropagationSettings {
        rel_tol: 1e-10,
        abs_tol: 1e-11,
        couplings: Couplings::CarrierOnly,
        ..Default::default()
    };
    let target = a.target_state();
    for d in [-200e3, 0.0, 400e3] {
        let m = MemberModel::new(&sys, None, d, Couplings::CarrierOnly).unwrap();
        let rho = m.propagate(&DensityState::ground(GroundLevel::One), &p, &tight).unwrap();
        let one = Vector3::new(Complex64::new(1.0, 0.0), Complex64::default(), Complex64::default());
        let psi = propagate_pure_detuned(&one, &p, d, &tight).unwrap();
        let f6 = state_fidelity(&rho, &embed_lambda(&sys, &target));
        let f3 = pure_fidelity(&target, &psi);
        assert!((f6 - f3).abs() < 1e-6, "{d}: {f6} vs {f3}");
    }
}
