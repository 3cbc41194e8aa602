use invpulse::dynamics::{embed_lambda, state_fidelity, Couplings, DensityState, MemberModel, PropagationSettings};
use invpulse::invariant::{synthesize_samples, AnsatzCoefficients, Table1Case};
use invpulse::levels::*;
use proptest::prelude::*;

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// The same physical system with excited level `k` stored in slot `perm[k]`.
fn permuted(
    ground: [f64; 3],
    excited: [f64; 3],
    strengths: [[f64; 3]; 3],
    qubit: usize,
    perm: [usize; 3],
) -> LevelSystem {
    let mut e = [0.0; 3];
    let mut f = [[0.0; 3]; 3];
    for k in 0..3 {
        e[perm[k]] = excited[k];
        for g in 0..3 {
            f[g][perm[k]] = strengths[g][k];
        }
    }
    LevelSystem::new(ground, e, f, ExcitedLevel::ALL[perm[qubit]], 0.0, 0.0).unwrap()
}

fn physical_table(sys: &LevelSystem) -> Vec<(usize, u64, u64)> {
    let mut t: Vec<_> = transition_table(sys)
        .iter()
        .map(|tr| (tr.ground.index(), tr.frequency_hz.to_bits(), tr.strength.to_bits()))
        .collect();
    t.sort();
    t
}

fn row() -> impl Strategy<Value = [f64; 3]> {
    (0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0).prop_map(|(a, b, c)| {
        let s = a + b + c;
        [a / s, b / s, c / s]
    })
}

proptest! {
    #[test]
    fn table_is_independent_of_excited_level_order(
        aux in 5e6f64..30e6,
        one in 1e6f64..20e6,
        excited in prop::array::uniform3(-5e6f64..20e6),
        strengths in prop::array::uniform3(row()),
        qubit in 0usize..3,
        perm in 0usize..6,
    ) {
        let ground = [aux, one, 0.0];
        let base = permuted(ground, excited, strengths, qubit, PERMUTATIONS[0]);
        let other = permuted(ground, excited, strengths, qubit, PERMUTATIONS[perm]);
        prop_assert_eq!(physical_table(&base), physical_table(&other));
        for g in GroundLevel::ALL {
            for e in ExcitedLevel::ALL {
                let f = base.transition_frequency_hz(g, e);
                prop_assert_eq!(f, base.excited_energy_hz(e) + base.ground_offset_hz(g));
            }
        }
        prop_assert_eq!(base.carrier_detunings_hz(), other.carrier_detunings_hz());
        for tone in [Tone::P, Tone::S] {
            prop_assert_eq!(base.tone_frequency_hz(tone), other.tone_frequency_hz(tone));
        }
    }

    #[test]
    fn ensemble_is_normalized_and_centered(fwhm in 10e3f64..5e6, n in 1usize..60) {
        for quadrature in [Quadrature::EqualWeightQuantile, Quadrature::GaussHermite] {
            let spec = EnsembleSpec { detuning_fwhm_hz: fwhm, n_members: n, quadrature, ..EnsembleSpec::default() };
            let members = spec.members();
            prop_assert_eq!(members.len(), n);
            let w: f64 = members.iter().map(|m| m.weight).sum();
            let mean: f64 = members.iter().map(|m| m.weight * m.detuning_hz).sum();
            prop_assert!((w - 1.0).abs() < 1e-12, "{:?}: weights sum to {}", quadrature, w);
            prop_assert!(mean.abs() < 1e-9 * fwhm, "{:?}: mean {}", quadrature, mean);
        }
    }
}

#[test]
fn simulation_is_independent_of_excited_level_order() {
    let d = LevelSystem::praseodymium_default();
    let ground = GroundLevel::ALL.map(|g| d.ground_offset_hz(g));
    let excited = ExcitedLevel::ALL.map(|e| d.excited_energy_hz(e));
    let strengths = GroundLevel::ALL.map(|g| ExcitedLevel::ALL.map(|e| d.strength(g, e)));
    let qubit = d.qubit_excited().index();
    let dec = DecoherenceSpec::with_t2_optical(88e-6).unwrap();
    let a = AnsatzCoefficients::table1(Table1Case::Case2, 0.3).unwrap().with_exact_constraints();
    let p = synthesize_samples(&a, 1024).unwrap();
    let settings = PropagationSettings {
        rel_tol: 1e-9,
        abs_tol: 1e-10,
        ..Default::default()
    };
    let run = |sys: &LevelSystem| {
        let m = MemberModel::new(sys, Some(&dec), 120e3, Couplings::All).unwrap();
        let rho = m.propagate(&DensityState::ground(GroundLevel::One), &p, &settings).unwrap();
        let ground_pops = GroundLevel::ALL.map(|g| rho.populations()[g.index()]);
        (state_fidelity(&rho, &embed_lambda(sys, &a.target_state())), ground_pops, rho.excited_population())
    };
    let reference = run(&d);
    for perm in PERMUTATIONS {
        let sys = permuted(ground, excited, strengths, qubit, perm);
        let other = run(&sys);
        assert!((reference.0 - other.0).abs() < 1e-7, "{perm:?}: {} vs {}", reference.0, other.0);
        for k in 0..3 {
            assert!((reference.1[k] - other.1[k]).abs() < 1e-7);
        }
        assert!((reference.2 - other.2).abs() < 1e-7);
    }
}
