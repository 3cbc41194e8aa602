use std::f64::consts::{PI, TAU};

use invpulse::dynamics::{propagate_pure, pure_fidelity, PropagationSettings};
use invpulse::invariant::*;
use nalgebra::Vector3;
use num_complex::Complex64;
use proptest::prelude::*;

fn tight() -> PropagationSettings {
    PropagationSettings {
        rel_tol: 1e-11,
        abs_tol: 1e-12,
        ..Default::default()
    }
}

fn one() -> Vector3<Complex64> {
    Vector3::new(Complex64::new(1.0, 0.0), Complex64::default(), Complex64::default())
}

fn coefficients() -> impl Strategy<Value = AnsatzCoefficients> {
    (
        prop::array::uniform6(-1.0f64..1.0),
        0.05f64..(PI - 0.05),
        0.0f64..TAU,
    )
        .prop_map(|(free, theta, phi)| AnsatzCoefficients::from_free(free, DEFAULT_T_F, theta, phi).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constrained_coefficients_transport_one_to_target(a in coefficients()) {
        let p = synthesize_samples(&a, 4096).unwrap();
        let psi = propagate_pure(&one(), &p, &tight()).unwrap();
        let f = pure_fidelity(&a.target_state(), &psi);
        prop_assert!(f > 1.0 - 1e-6, "fidelity {}", f);
    }

    #[test]
    fn state_follows_the_invariant_eigenvector(a in coefficients()) {
        let p = synthesize_samples(&a, 4096).unwrap();
        let n = p.omega_p.len();
        for k in [n / 8, n / 3, n / 2, 3 * n / 4, n - 1] {
            let head = SampledPulsePair::new(
                p.dt,
                p.omega_p[..=k].to_vec(),
                p.omega_s[..=k].to_vec(),
                p.phi,
            )
            .unwrap();
            let psi = propagate_pure(&one(), &head, &tight()).unwrap();
            let phi0 = eigenstate_phi0(&a, k as f64 * p.dt).unwrap();
            let overlap = pure_fidelity(&phi0, &psi);
            prop_assert!(overlap > 1.0 - 1e-6, "grid point {}: {}", k, overlap);
        }
    }

    #[test]
    fn constraints_imply_vanishing_endpoints(a in coefficients()) {
        let weighted: f64 = a.a.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
        prop_assert!((weighted + 1.0).abs() < 1e-12, "sum n a_n = {}", weighted);
        prop_assert!(synthesize_samples(&a, 1024).unwrap().is_endpoint_zero(1e-9));
    }

    #[test]
    fn reverse_is_an_involution(a in coefficients()) {
        let p = synthesize_samples(&a, 512).unwrap();
        prop_assert_eq!(reverse_pulses(&reverse_pulses(&p)), p);
    }

    #[test]
    fn refinement_keeps_shared_samples(a in coefficients()) {
        let coarse = synthesize_samples(&a, 257).unwrap();
        let fine = synthesize_samples(&a, 513).unwrap();
        let scale = coarse.peak_abs().max(1.0);
        for k in 0..coarse.omega_p.len() {
            prop_assert!((coarse.omega_p[k] - fine.omega_p[2 * k]).abs() <= 1e-12 * scale);
            prop_assert!((coarse.omega_s[k] - fine.omega_s[2 * k]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn invariant_condition_holds_for_any_constrained_pulse(a in coefficients()) {
        let p = synthesize_samples(&a, 1024).unwrap();
        let spec = InvariantSpec::new(TAU * 1e6, a).unwrap();
        prop_assert!(verify_invariant_condition(&spec, &p).unwrap() < 1e-9);
    }
}
