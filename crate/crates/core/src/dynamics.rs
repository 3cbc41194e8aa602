//! Pure-state and Lindblad propagation under the two-tone field.
//!
//! Everything runs in the interaction frame of the bare level energies of
//! each ensemble member. A tone of complex amplitude `A_k(t)` then couples
//! ground level `g` to excited level `e` through
//!
//! ```text
//! <g|H|e> = -1/2 * A_k(t) * sqrt(f[g][e] / f[carrier_k]) * exp(-i D t)
//! D       = 2 pi (nu_ge + delta - nu_k)
//! ```
//!
//! where `delta` is the member's optical detuning. Each pulse carries its own
//! phase reference: `t` restarts at 0 for every pulse of a sequence. Carrier
//! couplings, the Raman-resonant pairs through the other excited levels and
//! light shifts are all insensitive to this choice.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::invariant::SampledPulsePair;
use crate::levels::{
    DecoherenceSpec, EnsembleSpec, ExcitedLevel, GroundLevel, LevelSystem, Member, Tone,
};
use crate::ode::{integrate, StepControl};

pub type CMat6 = SMatrix<Complex64, 6, 6>;
pub type CVec6 = SVector<Complex64, 6>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const TWO_PI: f64 = std::f64::consts::TAU;

/// Complex amplitudes of the two tones, rad/s.
pub trait TwoToneField: Sync {
    /// `[p tone, s tone]` at local time `t`; zero outside `[0, duration]`.
    fn amplitudes(&self, t: f64) -> [Complex64; 2];
    fn duration(&self) -> f64;
}

impl TwoToneField for SampledPulsePair {
    #[inline]
    fn amplitudes(&self, t: f64) -> [Complex64; 2] {
        let (p, s) = self.envelopes_at(t);
        [Complex64::from_polar(p, self.phi), Complex64::new(s, 0.0)]
    }

    fn duration(&self) -> f64 {
        self.t_f
    }
}

/// A pulse pair with envelopes and phases swapped between the tones, which
/// drives the return transfer `|0> -> |1>`.
#[derive(Debug, Clone, Copy)]
pub struct Interchanged<'a>(pub &'a SampledPulsePair);

impl TwoToneField for Interchanged<'_> {
    #[inline]
    fn amplitudes(&self, t: f64) -> [Complex64; 2] {
        let [p, s] = self.0.amplitudes(t);
        [s, p]
    }

    fn duration(&self) -> f64 {
        self.0.t_f
    }
}

/// No drive for a fixed duration.
#[derive(Debug, Clone, Copy)]
pub struct NoField(pub f64);

impl TwoToneField for NoField {
    fn amplitudes(&self, _t: f64) -> [Complex64; 2] {
        [ZERO; 2]
    }

    fn duration(&self) -> f64 {
        self.0
    }
}

/// Rotating-frame convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    /// Interaction picture of the bare level energies (the only one implemented).
    #[default]
    Interaction,
}

impl Frame {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "interaction" => Ok(Frame::Interaction),
            other => Err(Error::UnknownFrame(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        "interaction"
    }
}

/// Which optical transitions the tones drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Couplings {
    /// Every tone drives all nine transitions.
    #[default]
    All,
    /// Each tone only drives its own carrier transition.
    CarrierOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub frame: Frame,
    /// Largest integrator step, seconds.
    pub max_step: f64,
    pub couplings: Couplings,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        PropagationSettings {
            rel_tol: 1e-6,
            abs_tol: 1e-6,
            frame: Frame::Interaction,
            max_step: f64::INFINITY,
            couplings: Couplings::All,
        }
    }
}

impl PropagationSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(Error::invariant(
                    "propagation settings",
                    format!("{name} = {v} outside (0, 1e-2]"),
                ));
            }
        }
        if !(self.max_step > 0.0) {
            return Err(Error::invariant("propagation settings", "max_step must be positive"));
        }
        Ok(())
    }

    fn step_control(&self) -> StepControl {
        StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            max_steps: 2_000_000,
        }
    }

    /// Same settings with both tolerances scaled.
    pub fn scaled_tolerances(&self, factor: f64) -> Self {
        PropagationSettings {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }
}

// ---------------------------------------------------------------------------
// Density states
// ---------------------------------------------------------------------------

/// Basis index of a ground level.
pub fn ground_index(g: GroundLevel) -> usize {
    g.index()
}

/// Basis index of an excited level.
pub fn excited_index(e: ExcitedLevel) -> usize {
    e.basis_index()
}

/// Six-level indices of the Lambda basis `(|1>, |e>, |0>)`.
pub fn lambda_indices(sys: &LevelSystem) -> [usize; 3] {
    [
        GroundLevel::One.index(),
        sys.qubit_excited().basis_index(),
        GroundLevel::Zero.index(),
    ]
}

/// Embeds a Lambda-basis vector into the six-level space.
pub fn embed_lambda(sys: &LevelSystem, v: &Vector3<Complex64>) -> CVec6 {
    let mut out = CVec6::zeros();
    for (k, idx) in lambda_indices(sys).into_iter().enumerate() {
        out[idx] = v[k];
    }
    out
}

/// Six-level density matrix in the basis `(aux, |1>, |0>, e1, e2, e3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityState {
    rho: CMat6,
}

pub const HERMITICITY_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-6;
pub const POSITIVITY_TOL: f64 = 1e-6;

impl DensityState {
    pub fn new(rho: CMat6) -> Result<Self> {
        let s = DensityState { rho };
        s.check_full(0.0)?;
        Ok(s)
    }

    pub fn ground(g: GroundLevel) -> Self {
        let mut rho = CMat6::zeros();
        rho[(g.index(), g.index())] = Complex64::new(1.0, 0.0);
        DensityState { rho }
    }

    pub fn excited(e: ExcitedLevel) -> Self {
        let mut rho = CMat6::zeros();
        let i = e.basis_index();
        rho[(i, i)] = Complex64::new(1.0, 0.0);
        DensityState { rho }
    }

    /// `|v><v| / <v|v>`.
    pub fn pure(v: &CVec6) -> Result<Self> {
        let n = v.norm_squared();
        if !(n > 0.0) {
            return Err(Error::invariant("density state", "zero state vector"));
        }
        Ok(DensityState {
            rho: v * v.adjoint() / Complex64::new(n, 0.0),
        })
    }

    pub fn matrix(&self) -> &CMat6 {
        &self.rho
    }

    pub fn populations(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.rho[(i, i)].re)
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn excited_population(&self) -> f64 {
        (3..6).map(|i| self.rho[(i, i)].re).sum()
    }

    /// `<v|rho|v>` for a normalized `v`.
    pub fn overlap(&self, v: &CVec6) -> f64 {
        v.dotc(&(self.rho * v)).re
    }

    /// Qubit block `[[rho_00, rho_01], [rho_10, rho_11]]` ordered `(|0>, |1>)`.
    pub fn qubit_block(&self) -> [[Complex64; 2]; 2] {
        let z = GroundLevel::Zero.index();
        let o = GroundLevel::One.index();
        [
            [self.rho[(z, z)], self.rho[(z, o)]],
            [self.rho[(o, z)], self.rho[(o, o)]],
        ]
    }

    fn check_cheap(&self, t: f64) -> Result<()> {
        let herm = (self.rho - self.rho.adjoint()).camax();
        if !(herm <= HERMITICITY_TOL) {
            return Err(Error::Positivity {
                t,
                reason: format!("Hermiticity error {herm:.3e}"),
            });
        }
        let tr = self.rho.trace();
        if !((tr.re - 1.0).abs() <= TRACE_TOL && tr.im.abs() <= TRACE_TOL) {
            return Err(Error::Positivity {
                t,
                reason: format!("trace {tr} differs from 1"),
            });
        }
        for i in 0..6 {
            let p = self.rho[(i, i)].re;
            if !(p >= -POSITIVITY_TOL) {
                return Err(Error::Positivity {
                    t,
                    reason: format!("population {i} = {p:.3e}"),
                });
            }
        }
        Ok(())
    }

    /// Hermiticity, trace and eigenvalue checks.
    pub fn check_full(&self, t: f64) -> Result<()> {
        self.check_cheap(t)?;
        let herm = (self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        let min = nalgebra::SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(min >= -POSITIVITY_TOL) {
            return Err(Error::Positivity {
                t,
                reason: format!("eigenvalue {min:.3e}"),
            });
        }
        Ok(())
    }

    /// Weighted sum of states, in the given order.
    pub fn mixture<'a>(parts: impl IntoIterator<Item = (f64, &'a DensityState)>) -> DensityState {
        let mut rho = CMat6::zeros();
        for (w, s) in parts {
            rho += s.rho * Complex64::new(w, 0.0);
        }
        DensityState { rho }
    }
}

/// Fidelity `<psi|rho|psi>` against a pure target.
pub fn state_fidelity(rho: &DensityState, target: &CVec6) -> f64 {
    rho.overlap(&(target / Complex64::new(target.norm(), 0.0)))
}

// ---------------------------------------------------------------------------
// Hamiltonian
// ---------------------------------------------------------------------------

/// Precomputed couplings of one ensemble member.
#[derive(Debug, Clone)]
pub struct MemberModel {
    /// `scale[k][g][e]`, zero for masked transitions.
    scale: [[[f64; 3]; 3]; 2],
    /// Angular detuning `D` of tone `k` from `g -> e`, rad/s.
    detuning: [[[f64; 3]; 3]; 2],
    decay: Option<Dissipation>,
    pub detuning_hz: f64,
}

#[derive(Debug, Clone, Copy)]
struct Dissipation {
    /// `feed[g][e]`: rate from excited `e` into ground `g`, 1/s.
    feed: [[f64; 3]; 3],
    ground_coherence: f64,
    optical_coherence: f64,
    excited_population: f64,
    excited_coherence: f64,
}

impl MemberModel {
    pub fn new(
        sys: &LevelSystem,
        dec: Option<&DecoherenceSpec>,
        detuning_hz: f64,
        couplings: Couplings,
    ) -> Result<Self> {
        let mut scale = [[[0.0; 3]; 3]; 2];
        let mut detuning = [[[0.0; 3]; 3]; 2];
        for (k, tone) in [Tone::P, Tone::S].into_iter().enumerate() {
            let nu_k = sys.tone_frequency_hz(tone);
            for g in GroundLevel::ALL {
                for e in ExcitedLevel::ALL {
                    let carrier =
                        g == LevelSystem::carrier_ground(tone) && e == sys.qubit_excited();
                    if couplings == Couplings::All || carrier {
                        scale[k][g.index()][e.index()] = sys.coupling_scale(tone, g, e);
                    }
                    detuning[k][g.index()][e.index()] =
                        TWO_PI * (sys.transition_frequency_hz(g, e) + detuning_hz - nu_k);
                }
            }
        }
        let decay = match dec {
            None => None,
            Some(d) => {
                d.validate()?;
                let mut feed = [[0.0; 3]; 3];
                for e in ExcitedLevel::ALL {
                    let b = d.branching_for(sys, e);
                    for g in GroundLevel::ALL {
                        feed[g.index()][e.index()] = b[g.index()] / d.t1_optical;
                    }
                }
                let gamma_s = 1.0 / d.t2_spin;
                let kappa = d.optical_dephasing_rate();
                Some(Dissipation {
                    feed,
                    ground_coherence: gamma_s,
                    optical_coherence: 1.0 / d.t2_optical,
                    excited_population: 1.0 / d.t1_optical,
                    excited_coherence: 1.0 / d.t1_optical + kappa,
                })
            }
        };
        Ok(MemberModel {
            scale,
            detuning,
            decay,
            detuning_hz,
        })
    }

    /// Ground-by-excited coupling block `V[g][e] = <g|H|e>` at pulse time `t`.
    #[inline]
    fn coupling_block(&self, amps: [Complex64; 2], t: f64) -> Matrix3<Complex64> {
        let mut v = Matrix3::zeros();
        for (k, a) in amps.iter().enumerate() {
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            let half = -0.5 * a;
            for g in 0..3 {
                for e in 0..3 {
                    let c = self.scale[k][g][e];
                    if c != 0.0 {
                        let (s, co) = (self.detuning[k][g][e] * t).sin_cos();
                        v[(g, e)] += half * Complex64::new(c * co, -c * s);
                    }
                }
            }
        }
        v
    }

    /// Full six-level Hamiltonian, rad/s.
    pub fn hamiltonian(&self, amps: [Complex64; 2], t: f64) -> CMat6 {
        let v = self.coupling_block(amps, t);
        let mut h = CMat6::zeros();
        for g in 0..3 {
            for e in 0..3 {
                h[(g, 3 + e)] = v[(g, e)];
                h[(3 + e, g)] = v[(g, e)].conj();
            }
        }
        h
    }

    /// Master-equation generator applied to `x`. With `adjoint` set this is the
    /// Heisenberg-picture generator acting on an observable instead.
    #[inline]
    fn generator(&self, amps: [Complex64; 2], t: f64, x: &CMat6, adjoint: bool) -> CMat6 {
        let v = self.coupling_block(amps, t);
        let a: Matrix3<Complex64> = x.fixed_view::<3, 3>(0, 0).into_owned();
        let b: Matrix3<Complex64> = x.fixed_view::<3, 3>(0, 3).into_owned();
        let c: Matrix3<Complex64> = x.fixed_view::<3, 3>(3, 3).into_owned();
        // -i[H, x] blockwise, with H = [[0, V], [V^dag, 0]]; the adjoint flips the sign
        let k = Complex64::new(0.0, if adjoint { 1.0 } else { -1.0 });
        let p = v * b.adjoint();
        let q = v.adjoint() * b;
        let mut da = (p - p.adjoint()) * k;
        let mut dc = (q - q.adjoint()) * k;
        let mut db = (v * c - a * v) * k;
        if let Some(d) = &self.decay {
            for g in 0..3 {
                for g2 in 0..3 {
                    if g != g2 {
                        da[(g, g2)] -= a[(g, g2)] * d.ground_coherence;
                    } else if !adjoint {
                        let gain: f64 = (0..3).map(|e| d.feed[g][e] * c[(e, e)].re).sum();
                        da[(g, g)] += Complex64::new(gain, 0.0);
                    }
                }
            }
            db -= b * Complex64::new(d.optical_coherence, 0.0);
            for e in 0..3 {
                for e2 in 0..3 {
                    if e == e2 {
                        dc[(e, e)] -= c[(e, e)] * d.excited_population;
                        if adjoint {
                            let gain: f64 = (0..3).map(|g| d.feed[g][e] * a[(g, g)].re).sum();
                            dc[(e, e)] += Complex64::new(gain, 0.0);
                        }
                    } else {
                        dc[(e, e2)] -= c[(e, e2)] * d.excited_coherence;
                    }
                }
            }
        }
        let mut out = CMat6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0).copy_from(&da);
        out.fixed_view_mut::<3, 3>(0, 3).copy_from(&db);
        out.fixed_view_mut::<3, 3>(3, 0).copy_from(&db.adjoint());
        out.fixed_view_mut::<3, 3>(3, 3).copy_from(&dc);
        out
    }

    /// Propagates `rho` through `field`.
    pub fn propagate(
        &self,
        rho: &DensityState,
        field: &dyn TwoToneField,
        settings: &PropagationSettings,
    ) -> Result<DensityState> {
        let dur = field.duration();
        let debug_checks = cfg!(debug_assertions);
        let (out, _) = integrate(
            |t: f64, r: &CMat6| self.generator(field.amplitudes(t), t, r, false),
            0.0,
            dur,
            rho.rho,
            &settings.step_control(),
            |t, r| {
                if debug_checks {
                    DensityState { rho: *r }.check_cheap(t)
                } else {
                    Ok(())
                }
            },
        )?;
        // restore exact Hermiticity lost to rounding
        let sym = (out + out.adjoint()) * Complex64::new(0.5, 0.0);
        let state = DensityState { rho: sym };
        state.check_full(dur)?;
        Ok(state)
    }

    /// Propagates through several fields back to back, returning the state after each.
    pub fn propagate_sequence(
        &self,
        rho: &DensityState,
        fields: &[&dyn TwoToneField],
        settings: &PropagationSettings,
    ) -> Result<Vec<DensityState>> {
        let mut cur = *rho;
        let mut out = Vec::with_capacity(fields.len());
        for f in fields {
            cur = self.propagate(&cur, *f, settings)?;
            out.push(cur);
        }
        Ok(out)
    }

    /// Closed-system propagation of a six-level ket; dissipation is ignored.
    pub fn propagate_ket(
        &self,
        psi: &CVec6,
        field: &dyn TwoToneField,
        settings: &PropagationSettings,
    ) -> Result<CVec6> {
        let mi = Complex64::new(0.0, -1.0);
        let (out, _) = integrate(
            |t: f64, v: &CVec6| self.hamiltonian(field.amplitudes(t), t) * v * mi,
            0.0,
            field.duration(),
            *psi,
            &settings.step_control(),
            |_, _| Ok(()),
        )?;
        Ok(out)
    }

    /// Heisenberg-picture pull-back of an observable through `field`: returns
    /// `E0` with `tr(E0 rho) = tr(E rho(T))` for every initial `rho`.
    pub fn pull_back(
        &self,
        observable: &CMat6,
        field: &dyn TwoToneField,
        settings: &PropagationSettings,
    ) -> Result<CMat6> {
        let dur = field.duration();
        let (out, _) = integrate(
            |s: f64, e: &CMat6| {
                let t = dur - s;
                self.generator(field.amplitudes(t), t, e, true)
            },
            0.0,
            dur,
            *observable,
            &settings.step_control(),
            |_, _| Ok(()),
        )?;
        Ok((out + out.adjoint()) * Complex64::new(0.5, 0.0))
    }
}

/// Six-level Hamiltonian for one member at pulse time `t`.
pub fn hamiltonian_at(
    t: f64,
    pulses: &dyn TwoToneField,
    sys: &LevelSystem,
    detuning_hz: f64,
    frame: &str,
) -> Result<CMat6> {
    Frame::from_name(frame)?;
    let m = MemberModel::new(sys, None, detuning_hz, Couplings::All)?;
    Ok(m.hamiltonian(pulses.amplitudes(t), t))
}

// ---------------------------------------------------------------------------
// Closed three-level system
// ---------------------------------------------------------------------------

/// Closed Lambda-system propagation in the `(|1>, |e>, |0>)` basis.
pub fn propagate_pure(
    psi0: &Vector3<Complex64>,
    pulses: &dyn TwoToneField,
    settings: &PropagationSettings,
) -> Result<Vector3<Complex64>> {
    propagate_pure_detuned(psi0, pulses, 0.0, settings)
}

/// As [`propagate_pure`] with the excited level shifted by `detuning_hz`.
pub fn propagate_pure_detuned(
    psi0: &Vector3<Complex64>,
    pulses: &dyn TwoToneField,
    detuning_hz: f64,
    settings: &PropagationSettings,
) -> Result<Vector3<Complex64>> {
    settings.validate()?;
    let n0 = psi0.norm();
    if (n0 - 1.0).abs() > 1e-9 {
        return Err(Error::invariant("initial state", format!("norm {n0} is not 1")));
    }
    let w = TWO_PI * detuning_hz;
    let mi = Complex64::new(0.0, -1.0);
    let rhs = |t: f64, psi: &Vector3<Complex64>| {
        let [ap, as_] = pulses.amplitudes(t);
        let ph = Complex64::from_polar(1.0, -w * t);
        // <1|H|e> and <0|H|e>
        let v1 = -0.5 * ap * ph;
        let v0 = -0.5 * as_ * ph;
        let d1 = v1 * psi[1];
        let de = v1.conj() * psi[0] + v0.conj() * psi[2];
        let d0 = v0 * psi[1];
        Vector3::new(d1 * mi, de * mi, d0 * mi)
    };
    let (psi, _) = integrate(
        rhs,
        0.0,
        pulses.duration(),
        *psi0,
        &settings.step_control(),
        |_, _| Ok(()),
    )?;
    let drift = (psi.norm() - 1.0).abs();
    if drift > 10.0 * settings.rel_tol.max(settings.abs_tol) {
        return Err(Error::Positivity {
            t: pulses.duration(),
            reason: format!("norm drifted by {drift:.3e}"),
        });
    }
    Ok(psi)
}

/// `|<target|psi>|^2` with both vectors normalized.
pub fn pure_fidelity(target: &Vector3<Complex64>, psi: &Vector3<Complex64>) -> f64 {
    target.dotc(psi).norm_sqr() / (target.norm_squared() * psi.norm_squared())
}

// ---------------------------------------------------------------------------
// Open system and ensembles
// ---------------------------------------------------------------------------

/// One member's Lindblad propagation.
pub fn propagate_lindblad(
    rho0: &DensityState,
    pulses: &dyn TwoToneField,
    sys: &LevelSystem,
    dec: &DecoherenceSpec,
    detuning_hz: f64,
    settings: &PropagationSettings,
) -> Result<DensityState> {
    settings.validate()?;
    rho0.check_full(0.0)?;
    MemberModel::new(sys, Some(dec), detuning_hz, settings.couplings)?.propagate(rho0, pulses, settings)
}

/// Physical model shared by ensemble simulations.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub sys: LevelSystem,
    pub dec: DecoherenceSpec,
    pub ensemble: EnsembleSpec,
    pub settings: PropagationSettings,
}

impl ModelBundle {
    pub fn new(
        sys: LevelSystem,
        dec: DecoherenceSpec,
        ensemble: EnsembleSpec,
        settings: PropagationSettings,
    ) -> Result<Self> {
        dec.validate()?;
        ensemble.validate()?;
        settings.validate()?;
        Ok(ModelBundle {
            sys,
            dec,
            ensemble,
            settings,
        })
    }

    pub fn member_model(&self, detuning_hz: f64) -> Result<MemberModel> {
        MemberModel::new(&self.sys, Some(&self.dec), detuning_hz, self.settings.couplings)
    }

    /// Runs `f` for every ensemble member in parallel; results come back in member order.
    pub fn map_members<T, F>(&self, members: &[Member], f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&MemberModel) -> Result<T> + Sync,
    {
        members
            .par_iter()
            .map(|m| {
                let model = self.member_model(m.detuning_hz)?;
                f(&model).map_err(|e| Error::Member {
                    detuning_hz: m.detuning_hz,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Target vector of a Lambda-basis state in the six-level space.
    pub fn embed(&self, v: &Vector3<Complex64>) -> CVec6 {
        embed_lambda(&self.sys, v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    /// Ensemble-averaged final state.
    pub rho_final: DensityState,
    pub fidelity: f64,
    pub populations: [f64; 6],
    /// Weighted excited-population gain summed over the spectator classes.
    pub spectator_excitation: f64,
}

/// Drives the whole ensemble and its spectators with `pulses`.
pub fn ensemble_transfer(
    rho0: &DensityState,
    pulses: &dyn TwoToneField,
    model: &ModelBundle,
    target: &CVec6,
) -> Result<TransferResult> {
    rho0.check_full(0.0)?;
    let members = model.ensemble.members();
    let finals = model.map_members(&members, |m| m.propagate(rho0, pulses, &model.settings))?;
    let rho_final = DensityState::mixture(members.iter().map(|m| m.weight).zip(finals.iter()));
    let spectator_excitation = spectator_excitation(pulses, model)?;
    Ok(TransferResult {
        fidelity: state_fidelity(&rho_final, target),
        populations: rho_final.populations(),
        rho_final,
        spectator_excitation,
    })
}

/// Excited-population gain of every spectator class, summed.
pub fn spectator_excitation(pulses: &dyn TwoToneField, model: &ModelBundle) -> Result<f64> {
    let gains: Vec<f64> = model
        .ensemble
        .spectators
        .par_iter()
        .map(|s| -> Result<f64> {
            let m = model.member_model(s.offset_hz)?;
            let start = DensityState::ground(s.initial);
            let end = m
                .propagate(&start, pulses, &model.settings)
                .map_err(|e| Error::Member {
                    detuning_hz: s.offset_hz,
                    source: Box::new(e),
                })?;
            Ok(end.excited_population() - start.excited_population())
        })
        .collect::<Result<_>>()?;
    Ok(gains.iter().fold(0.0, |acc, g| acc + g))
}

/// Exact field-free evolution of the populations for `duration` seconds.
///
/// Without a drive the master equation decouples: excited populations decay
/// exponentially into the ground levels by the branching ratios and all
/// coherences decay at their own rates.
pub fn free_decay(
    rho: &DensityState,
    sys: &LevelSystem,
    dec: &DecoherenceSpec,
    duration: f64,
) -> Result<DensityState> {
    dec.validate()?;
    if !(duration >= 0.0) {
        return Err(Error::invariant("free decay", "duration must be nonnegative"));
    }
    let m = MemberModel::new(sys, Some(dec), 0.0, Couplings::All)?;
    let d = m.decay.expect("decoherence present");
    let mut out = rho.rho;
    let lost = 1.0 - (-duration / dec.t1_optical).exp();
    for e in 0..3 {
        let pe = rho.rho[(3 + e, 3 + e)].re;
        for g in 0..3 {
            out[(g, g)] += Complex64::new(d.feed[g][e] * dec.t1_optical * pe * lost, 0.0);
        }
    }
    let damp = |rate: f64| Complex64::new((-rate * duration).exp(), 0.0);
    for i in 0..6 {
        for j in 0..6 {
            let (ig, jg) = (i < 3, j < 3);
            let factor = match (ig, jg) {
                (true, true) if i == j => continue,
                (true, true) => damp(d.ground_coherence),
                (false, false) if i == j => damp(d.excited_population),
                (false, false) => damp(d.excited_coherence),
                _ => damp(d.optical_coherence),
            };
            out[(i, j)] = rho.rho[(i, j)] * factor;
        }
    }
    Ok(DensityState { rho: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::{synthesize_samples, AnsatzCoefficients, Table1Case, DEFAULT_SAMPLES};
    use std::f64::consts::PI;

    fn case1() -> SampledPulsePair {
        let a = AnsatzCoefficients::table1(Table1Case::Case1, 0.0).unwrap().with_exact_constraints();
        synthesize_samples(&a, DEFAULT_SAMPLES).unwrap()
    }

    fn tight() -> PropagationSettings {
        PropagationSettings {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            ..Default::default()
        }
    }

    #[test]
    fn frame_names() {
        assert!(Frame::from_name("interaction").is_ok());
        assert!(matches!(Frame::from_name("lab"), Err(Error::UnknownFrame(_))));
        let sys = LevelSystem::praseodymium_default();
        assert!(hamiltonian_at(0.0, &case1(), &sys, 0.0, "bogus").is_err());
    }

    #[test]
    fn carrier_only_hamiltonian_reduces_to_lambda_form() {
        let sys = LevelSystem::praseodymium_default();
        let p = case1().with_phi(0.9);
        let m = MemberModel::new(&sys, None, 0.0, Couplings::CarrierOnly).unwrap();
        let idx = lambda_indices(&sys);
        for k in [0usize, 100, 511, 900] {
            let t = p.time(k);
            let h = m.hamiltonian(p.amplitudes(t), t);
            let (op, os) = p.envelopes_at(t);
            let h3 = crate::invariant::lambda_hamiltonian(
                Complex64::from_polar(op, p.phi),
                Complex64::new(os, 0.0),
            );
            for r in 0..3 {
                for c in 0..3 {
                    assert!((h[(idx[r], idx[c])] - h3[(r, c)]).norm() < 1e-6, "{r}{c}");
                }
            }
            // nothing outside the Lambda subspace
            assert!(h.row(0).norm() < 1e-12);
            assert!(h.row(3).norm() < 1e-12 && h.row(5).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_field_hamiltonian_has_no_couplings() {
        let sys = LevelSystem::praseodymium_default();
        let h = hamiltonian_at(1e-6, &NoField(4e-6), &sys, 3e4, "interaction").unwrap();
        assert_eq!(h, CMat6::zeros());
    }

    #[test]
    fn hamiltonian_is_hermitian_everywhere() {
        use rand::{Rng, SeedableRng};
        let sys = LevelSystem::praseodymium_default();
        let p = case1().with_phi(2.2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = rng.random_range(0.0..p.t_f);
            let d = rng.random_range(-2e6..2e6);
            let m = MemberModel::new(&sys, None, d, Couplings::All).unwrap();
            let h = m.hamiltonian(p.amplitudes(t), t);
            assert!((h - h.adjoint()).camax() <= 1e-15 * h.camax().max(1.0));
        }
    }

    #[test]
    fn pure_transfer_reaches_target() {
        let p = case1();
        let psi0 = Vector3::new(Complex64::new(1.0, 0.0), ZERO, ZERO);
        let psi = propagate_pure(&psi0, &p, &tight()).unwrap();
        let target = Vector3::new(ZERO, ZERO, Complex64::new(1.0, 0.0));
        assert!(1.0 - pure_fidelity(&target, &psi) < 1e-6);
    }

    #[test]
    fn zero_pulses_leave_state_alone() {
        let psi0 = Vector3::new(Complex64::new(0.6, 0.0), ZERO, Complex64::new(0.0, 0.8));
        let psi = propagate_pure(&psi0, &NoField(4e-6), &tight()).unwrap();
        assert!((psi - psi0).norm() < 1e-14);
    }

    #[test]
    fn resonant_pi_area_inverts() {
        // Omega_s constant with area pi: |0> -> |e> fully (sin^2(Omega t / 2) = 1)
        let t_f = 2e-6;
        let omega = PI / t_f;
        let p = SampledPulsePair::constant(0.0, omega, 0.0, t_f, 65).unwrap();
        let psi0 = Vector3::new(ZERO, ZERO, Complex64::new(1.0, 0.0));
        let psi = propagate_pure(&psi0, &p, &tight()).unwrap();
        assert!((psi[1].norm_sqr() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pure_propagation_rejects_unnormalized_input() {
        let psi0 = Vector3::new(Complex64::new(2.0, 0.0), ZERO, ZERO);
        assert!(propagate_pure(&psi0, &NoField(1e-6), &tight()).is_err());
    }

    #[test]
    fn excited_decay_without_field() {
        let sys = LevelSystem::praseodymium_default();
        let dec = DecoherenceSpec::default();
        let rho0 = DensityState::excited(ExcitedLevel::E2);
        let out = propagate_lindblad(
            &rho0,
            &NoField(dec.t1_optical),
            &sys,
            &dec,
            0.0,
            &PropagationSettings::default(),
        )
        .unwrap();
        assert!((out.excited_population() - (-1.0_f64).exp()).abs() < 1e-3);
        assert!((out.trace() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn spin_dephasing_without_field() {
        let sys = LevelSystem::praseodymium_default();
        let dec = DecoherenceSpec::default();
        let mut v = CVec6::zeros();
        v[GroundLevel::Zero.index()] = Complex64::new(1.0, 0.0);
        v[GroundLevel::One.index()] = Complex64::new(1.0, 0.0);
        let rho0 = DensityState::pure(&v).unwrap();
        let out = propagate_lindblad(
            &rho0,
            &NoField(dec.t2_spin),
            &sys,
            &dec,
            0.0,
            &PropagationSettings::default(),
        )
        .unwrap();
        let coh = out.qubit_block()[0][1].norm();
        assert!((coh - 0.5 * (-1.0_f64).exp()).abs() < 1e-3, "{coh}");
    }

    #[test]
    fn analytic_free_decay_matches_integration() {
        let sys = LevelSystem::praseodymium_default();
        let dec = DecoherenceSpec::with_t2_optical(44e-6).unwrap();
        let mut v = CVec6::zeros();
        v[0] = Complex64::new(0.2, 0.1);
        v[1] = Complex64::new(0.5, 0.0);
        v[2] = Complex64::new(0.0, 0.4);
        v[3] = Complex64::new(0.3, 0.0);
        v[4] = Complex64::new(0.1, -0.5);
        v[5] = Complex64::new(0.2, 0.2);
        let rho0 = DensityState::pure(&v).unwrap();
        let exact = free_decay(&rho0, &sys, &dec, 30e-6).unwrap();
        let numeric = propagate_lindblad(&rho0, &NoField(30e-6), &sys, &dec, 0.0, &tight()).unwrap();
        assert!((exact.matrix() - numeric.matrix()).camax() < 1e-8);
    }

    #[test]
    fn lindblad_without_losses_matches_closed_system() {
        let sys = LevelSystem::praseodymium_default();
        let p = case1();
        let model = MemberModel::new(&sys, None, 0.0, Couplings::CarrierOnly).unwrap();
        let rho = model
            .propagate(&DensityState::ground(GroundLevel::One), &p, &tight())
            .unwrap();
        let target = embed_lambda(&sys, &Vector3::new(ZERO, ZERO, Complex64::new(1.0, 0.0)));
        assert!((1.0 - state_fidelity(&rho, &target)).abs() < 1e-6);
    }

    #[test]
    fn positivity_violation_is_reported() {
        let mut rho = CMat6::zeros();
        rho[(0, 0)] = Complex64::new(1.2, 0.0);
        rho[(1, 1)] = Complex64::new(-0.2, 0.0);
        assert!(matches!(DensityState::new(rho), Err(Error::Positivity { .. })));
    }

    #[test]
    fn interchanged_field_swaps_tones() {
        let p = case1().with_phi(1.0);
        let t = p.t_f / 3.0;
        let [a, b] = p.amplitudes(t);
        let [c, d] = Interchanged(&p).amplitudes(t);
        assert_eq!((a, b), (d, c));
    }

    #[test]
    fn pull_back_matches_forward_expectation() {
        let sys = LevelSystem::praseodymium_default();
        let dec = DecoherenceSpec::default();
        let m = MemberModel::new(&sys, Some(&dec), 120e3, Couplings::All).unwrap();
        let p = case1();
        let mut obs = CMat6::zeros();
        obs[(2, 2)] = Complex64::new(1.0, 0.0);
        obs[(1, 2)] = Complex64::new(0.3, -0.2);
        obs[(2, 1)] = Complex64::new(0.3, 0.2);
        obs[(4, 4)] = Complex64::new(0.5, 0.0);
        let e0 = m.pull_back(&obs, &p, &tight()).unwrap();
        let mut v = CVec6::zeros();
        v[1] = Complex64::new(0.8, 0.0);
        v[2] = Complex64::new(0.0, 0.6);
        for rho0 in [DensityState::ground(GroundLevel::One), DensityState::pure(&v).unwrap()] {
            let fin = m.propagate(&rho0, &p, &tight()).unwrap();
            let fwd = (obs * fin.matrix()).trace().re;
            let back = (e0 * rho0.matrix()).trace().re;
            assert!((fwd - back).abs() < 1e-6, "{fwd} vs {back}");
        }
    }

    #[test]
    fn settings_validation() {
        let mut s = PropagationSettings::default();
        assert!(s.validate().is_ok());
        s.rel_tol = 0.1;
        assert!(s.validate().is_err());
    }
}
