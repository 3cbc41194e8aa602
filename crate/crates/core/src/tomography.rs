//! Simulated state tomography of the `|0>, |1>` qubit.
//!
//! Each axis is read by mapping its `+` eigenstate onto `|0>` and measuring the
//! normalized population difference `(P0 - P1) / (P0 + P1)`. Z needs no
//! rotation. For X and Y a pair of two-colour sech pulses drives the bright
//! state
//!
//! ```text
//! |B> = cos(pi/8) |0> + exp(i phi_B) sin(pi/8) |1>     (mapped onto |0>)
//! |B> = sin(pi/8) |0> + exp(i phi_B) cos(pi/8) |1>     (mapped onto |1>)
//! ```
//!
//! around a full cycle through `|e>`, so `|B>` returns with a sign flip and
//! the dark state is untouched. That is a pi rotation about the Bloch axis
//! halfway between `+-Z` and `+X` (`phi_B = 0`) or `+Y` (`phi_B = pi/2`),
//! taking the axis being read onto `|0>` or `|1>`. On the six-level model the same pulses also
//! drive every other ground-excited pair off resonance, which is where the
//! state-dependent readout error comes from.
//!
//! Readout is linear in the state before the tomography pulses, so every
//! member's measurement is summarized by a pair of effect operators obtained
//! by pulling the final population projectors back through the pulse pair.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    CMat6, CVec6, Couplings, DensityState, MemberModel, ModelBundle, PropagationSettings,
    TwoToneField,
};
use crate::error::{Error, Result};
use crate::levels::{DecoherenceSpec, ExcitedLevel, GroundLevel, LevelSystem};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// Azimuth of the bright state used to read this axis.
    fn bright_phase(self) -> Option<f64> {
        match self {
            Axis::X => Some(0.0),
            Axis::Y => Some(FRAC_PI_2),
            Axis::Z => None,
        }
    }
}

/// One complex hyperbolic secant pulse,
/// `peak_rabi * sech(beta (t - T/2))^(1 + i mu) * exp(i 2 pi center_detuning t)` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SechParams {
    /// rad/s
    pub peak_rabi: f64,
    /// 1/s
    pub beta: f64,
    pub mu: f64,
    /// Truncated length `T` of one pulse, s.
    pub duration: f64,
    pub center_detuning_hz: f64,
}

impl SechParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("peak_rabi", self.peak_rabi),
            ("beta", self.beta),
            ("mu", self.mu),
            ("duration", self.duration),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invariant("sech pulse", format!("{name} must be positive")));
            }
        }
        if !self.center_detuning_hz.is_finite() {
            return Err(Error::invariant("sech pulse", "center_detuning_hz must be finite"));
        }
        Ok(())
    }

    /// Full chirp excursion, Hz.
    pub fn chirp_width_hz(&self) -> f64 {
        self.mu * self.beta / PI
    }

    pub fn envelope(&self, t: f64) -> Complex64 {
        if !(0.0..=self.duration).contains(&t) {
            return Complex64::new(0.0, 0.0);
        }
        let x = self.beta * (t - 0.5 * self.duration);
        let sech = 1.0 / x.cosh();
        let phase = self.mu * sech.ln() + std::f64::consts::TAU * self.center_detuning_hz * t;
        Complex64::from_polar(self.peak_rabi * sech, phase)
    }
}

/// Which of the two states exchanged by the pi rotation is cycled through `|e>`.
/// Both choices realize the same ideal rotation; with real pulses the cycled
/// state absorbs most of the error, so the axis eigenstate it overlaps with is
/// read worse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrightSide {
    /// Overlaps the `+` eigenstate of the axis being read.
    #[default]
    Plus,
    Minus,
}

/// Ground level that receives the `+` eigenstate of the X and Y axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutLevel {
    #[default]
    Zero,
    One,
}

impl ReadoutLevel {
    /// `(<0|B>, |<1|B>|, extra phase of <1|B>)`
    fn bright_weights(self, side: BrightSide) -> (f64, f64, f64) {
        let (c, s) = (FRAC_PI_8.cos(), FRAC_PI_8.sin());
        match (self, side) {
            (ReadoutLevel::Zero, BrightSide::Plus) => (c, s, 0.0),
            (ReadoutLevel::One, BrightSide::Plus) => (s, c, 0.0),
            (ReadoutLevel::Zero, BrightSide::Minus) => (s, c, PI),
            (ReadoutLevel::One, BrightSide::Minus) => (c, s, PI),
        }
    }
}

/// Two back-to-back sech pulses on the bright state with azimuth `bright_phase`;
/// the second carries the extra phase `second_phase`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SechPair {
    pub params: SechParams,
    pub bright_phase: f64,
    pub second_phase: f64,
    pub level: ReadoutLevel,
    pub side: BrightSide,
}

impl TwoToneField for SechPair {
    fn amplitudes(&self, t: f64) -> [Complex64; 2] {
        let d = self.params.duration;
        let env = if t <= d {
            self.params.envelope(t)
        } else {
            self.params.envelope(t - d) * Complex64::from_polar(1.0, self.second_phase)
        };
        let (w0, w1, extra) = self.level.bright_weights(self.side);
        [env * Complex64::from_polar(w1, self.bright_phase + extra), env * w0]
    }

    fn duration(&self) -> f64 {
        2.0 * self.params.duration
    }
}

/// Bright state of the pair as a six-level ket.
fn bright_state(bright_phase: f64, level: ReadoutLevel, side: BrightSide) -> CVec6 {
    let (w0, w1, extra) = level.bright_weights(side);
    let mut v = CVec6::zeros();
    v[GroundLevel::Zero.index()] = Complex64::new(w0, 0.0);
    v[GroundLevel::One.index()] = Complex64::from_polar(w1, bright_phase + extra);
    v
}

/// Second-pulse phase that returns the bright state with amplitude as close
/// to `-1` as the pulse allows, on the resonant carrier-only Lambda system.
///
/// `<B|U|B> = a + b exp(i s Phi)` with `s = +-1`, so three propagations fix
/// `a`, `b` and `s` exactly.
pub fn calibrate_second_phase(
    params: &SechParams,
    bright_phase: f64,
    level: ReadoutLevel,
    side: BrightSide,
    sys: &LevelSystem,
    settings: &PropagationSettings,
) -> Result<f64> {
    params.validate()?;
    let m = MemberModel::new(sys, None, 0.0, Couplings::CarrierOnly)?;
    let b = bright_state(bright_phase, level, side);
    let amp = |phi: f64| -> Result<Complex64> {
        let pair = SechPair {
            params: *params,
            bright_phase,
            second_phase: phi,
            level,
            side,
        };
        Ok(b.dotc(&m.propagate_ket(&b, &pair, settings)?))
    };
    let (z0, zpi, zhalf) = (amp(0.0)?, amp(PI)?, amp(FRAC_PI_2)?);
    let a = 0.5 * (z0 + zpi);
    let coeff = 0.5 * (z0 - zpi);
    if coeff.norm() < 1e-3 {
        return Err(Error::invariant(
            "sech pulse",
            "pulse pair does not cycle the bright state through |e>",
        ));
    }
    // zhalf = a + coeff * exp(+-i pi/2)
    let plus = (zhalf - a - coeff * Complex64::i()).norm();
    let minus = (zhalf - a + coeff * Complex64::i()).norm();
    let s = if plus <= minus { 1.0 } else { -1.0 };
    // s Phi + arg(coeff) = pi
    Ok((s * (PI - coeff.arg())).rem_euclid(std::f64::consts::TAU))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseKind {
    /// Exact pi rotations on the qubit; reference mode.
    Ideal,
    Sech(SechParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySpec {
    pub pulse: PulseKind,
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub readout_level: ReadoutLevel,
    #[serde(default)]
    pub bright_side: BrightSide,
    /// Free decay between the tomography pulses and the population readout, s.
    pub readout_wait: f64,
}

impl Default for TomographySpec {
    fn default() -> Self {
        TomographySpec {
            pulse: PulseKind::Ideal,
            axes: Axis::ALL.to_vec(),
            readout_level: ReadoutLevel::Zero,
            bright_side: BrightSide::Plus,
            readout_wait: 1e-3,
        }
    }
}

impl TomographySpec {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 3];
        for a in &self.axes {
            if std::mem::replace(&mut seen[a.index()], true) {
                return Err(Error::invariant("tomography axes", format!("{a:?} listed twice")));
            }
        }
        if seen != [true; 3] {
            return Err(Error::invariant("tomography axes", "need each of X, Y and Z exactly once"));
        }
        if !(self.readout_wait >= 0.0) || !self.readout_wait.is_finite() {
            return Err(Error::invariant("tomography", "readout_wait must be nonnegative"));
        }
        if let PulseKind::Sech(p) = &self.pulse {
            p.validate()?;
        }
        Ok(())
    }
}

/// Population projectors for `|0>` and `|1>` after the readout wait, as
/// observables at the end of the tomography pulses.
fn population_effects(sys: &LevelSystem, dec: &DecoherenceSpec, wait: f64) -> [CMat6; 2] {
    let lost = 1.0 - (-wait / dec.t1_optical).exp();
    [GroundLevel::Zero, GroundLevel::One].map(|g| {
        let mut e = CMat6::zeros();
        e[(g.index(), g.index())] = ONE;
        for x in ExcitedLevel::ALL {
            let i = x.basis_index();
            e[(i, i)] = Complex64::new(dec.branching_for(sys, x)[g.index()] * lost, 0.0);
        }
        e
    })
}

/// `1 - 2 |B><B|` on the qubit, identity elsewhere.
fn ideal_rotation(bright_phase: f64, level: ReadoutLevel, side: BrightSide) -> CMat6 {
    let b = bright_state(bright_phase, level, side);
    CMat6::identity() - b * b.adjoint() * Complex64::new(2.0, 0.0)
}

/// Per-member readout effects for all three axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutEffects {
    /// `[member][axis][P0, P1]`
    effects: Vec<[[CMat6; 2]; 3]>,
    weights: Vec<f64>,
    /// Calibrated second-pulse phases for X and Y (sech mode only).
    pub second_phases: Option<[f64; 2]>,
}

impl ReadoutEffects {
    pub fn build(spec: &TomographySpec, model: &ModelBundle) -> Result<Self> {
        spec.validate()?;
        let members = model.ensemble.members();
        let pops = population_effects(&model.sys, &model.dec, spec.readout_wait);
        let (level, side) = (spec.readout_level, spec.bright_side);
        // X and Y read (P_plus, P_minus), which is (P1, P0) when the `+` state lands on |1>
        let xy_pops = match level {
            ReadoutLevel::Zero => pops,
            ReadoutLevel::One => [pops[1], pops[0]],
        };
        let weights: Vec<f64> = members.iter().map(|m| m.weight).collect();
        match &spec.pulse {
            PulseKind::Ideal => {
                let mut cell = [pops; 3];
                for (c, axis) in cell.iter_mut().zip(&Axis::ALL[..2]) {
                    let u = ideal_rotation(axis.bright_phase().unwrap(), level, side);
                    *c = xy_pops.map(|e| u.adjoint() * e * u);
                }
                Ok(ReadoutEffects {
                    effects: vec![cell; members.len()],
                    weights,
                    second_phases: None,
                })
            }
            PulseKind::Sech(params) => {
                let cal = |a: Axis| {
                    let ph = a.bright_phase().unwrap();
                    calibrate_second_phase(params, ph, level, side, &model.sys, &model.settings)
                };
                let phases = [cal(Axis::X)?, cal(Axis::Y)?];
                let pairs = [0, 1].map(|k| SechPair {
                    params: *params,
                    bright_phase: Axis::ALL[k].bright_phase().unwrap(),
                    second_phase: phases[k],
                    level,
                    side,
                });
                let effects = model.map_members(&members, |m| {
                    let mut cell = [pops; 3];
                    for (k, pair) in pairs.iter().enumerate() {
                        for (slot, e) in cell[k].iter_mut().zip(xy_pops.iter()) {
                            *slot = m.pull_back(e, pair, &model.settings)?;
                        }
                    }
                    Ok(cell)
                })?;
                Ok(ReadoutEffects {
                    effects,
                    weights,
                    second_phases: Some(phases),
                })
            }
        }
    }

    pub fn n_members(&self) -> usize {
        self.weights.len()
    }

    /// Ensemble-averaged effects, for states shared by every member.
    pub fn averaged(&self) -> [[CMat6; 2]; 3] {
        let mut out = [[CMat6::zeros(); 2]; 3];
        for (cell, w) in self.effects.iter().zip(&self.weights) {
            for a in 0..3 {
                for k in 0..2 {
                    out[a][k] += cell[a][k] * Complex64::new(*w, 0.0);
                }
            }
        }
        out
    }

    /// Bloch estimate when every member holds `rho`.
    pub fn read(&self, rho: &DensityState) -> Result<Vector3<f64>> {
        bloch_from(&self.averaged(), |e| expectation(e, rho))
    }

    /// Bloch estimate from per-member states, in ensemble order.
    pub fn read_members(&self, states: &[DensityState]) -> Result<Vector3<f64>> {
        if states.len() != self.n_members() {
            return Err(Error::invariant(
                "tomography",
                format!("{} states for {} members", states.len(), self.n_members()),
            ));
        }
        let mut p = [[0.0; 2]; 3];
        for ((cell, w), rho) in self.effects.iter().zip(&self.weights).zip(states) {
            for a in 0..3 {
                for k in 0..2 {
                    p[a][k] += w * expectation(&cell[a][k], rho);
                }
            }
        }
        bloch_from_populations(p)
    }
}

fn expectation(e: &CMat6, rho: &DensityState) -> f64 {
    (e * rho.matrix()).trace().re
}

fn bloch_from(effects: &[[CMat6; 2]; 3], f: impl Fn(&CMat6) -> f64) -> Result<Vector3<f64>> {
    bloch_from_populations(effects.map(|pair| pair.map(|e| f(&e))))
}

fn bloch_from_populations(p: [[f64; 2]; 3]) -> Result<Vector3<f64>> {
    let mut r = Vector3::zeros();
    for a in 0..3 {
        let total = p[a][0] + p[a][1];
        if !(total > 1e-12) {
            return Err(Error::ZeroPopulation);
        }
        r[a] = (p[a][0] - p[a][1]) / total;
    }
    Ok(r)
}

/// Single-state tomography: builds the readout effects and reads `rho`.
pub fn qst_readout(rho: &DensityState, spec: &TomographySpec, model: &ModelBundle) -> Result<Vector3<f64>> {
    ReadoutEffects::build(spec, model)?.read(rho)
}

/// Readout fidelity `(1 + r_target . r_measured) / 2` of a pure target.
/// Not clipped: a reconstruction longer than 1 can score above 1.
pub fn readout_fidelity(target: &Vector3<f64>, measured: &Vector3<f64>) -> f64 {
    0.5 * (1.0 + target.dot(measured))
}

/// Bloch vector of a qubit ket `a|0> + b|1>`.
pub fn bloch_of(a: Complex64, b: Complex64) -> Vector3<f64> {
    let n = a.norm_sqr() + b.norm_sqr();
    let ab = a.conj() * b;
    Vector3::new(2.0 * ab.re / n, 2.0 * ab.im / n, (a.norm_sqr() - b.norm_sqr()) / n)
}

/// Pure qubit state with Bloch vector `r` (unit length) embedded in six levels.
pub fn qubit_state(r: &Vector3<f64>) -> Result<DensityState> {
    let polar = r.z.clamp(-1.0, 1.0).acos();
    let azimuth = r.y.atan2(r.x);
    let mut v = CVec6::zeros();
    v[GroundLevel::Zero.index()] = Complex64::new((0.5 * polar).cos(), 0.0);
    v[GroundLevel::One.index()] = Complex64::from_polar((0.5 * polar).sin(), azimuth);
    DensityState::pure(&v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateRegion {
    /// `z` uniform in `[-0.2, 0.2]`.
    Equator,
    /// `z` uniform in `[-1, -0.9]`.
    NearOne,
}

impl StateRegion {
    fn z_range(self) -> (f64, f64) {
        match self {
            StateRegion::Equator => (-0.2, 0.2),
            StateRegion::NearOne => (-1.0, -0.9),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Spread {
    fn of(xs: &[f64]) -> Self {
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Spread {
            min,
            max,
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
        }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// One drawn state and its three quarter-turn copies about Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateQuartet {
    /// Azimuth of the first state, rad.
    pub azimuth: f64,
    pub z: f64,
    pub fidelities: [f64; 4],
    pub averaged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryStudy {
    pub quartets: Vec<StateQuartet>,
    pub unaveraged: Spread,
    pub averaged: Spread,
}

/// Reads `n_states` random states and their 90, 180 and 270 degree copies.
pub fn qst_symmetry_study(
    n_states: usize,
    seed: u64,
    region: StateRegion,
    effects: &ReadoutEffects,
) -> Result<SymmetryStudy> {
    if n_states == 0 {
        return Err(Error::invariant("symmetry study", "need at least one state"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = region.z_range();
    let avg = effects.averaged();
    let mut quartets = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let z: f64 = rng.random_range(lo..=hi);
        let rho_xy = (1.0 - z * z).sqrt();
        let mut fidelities = [0.0; 4];
        for (k, f) in fidelities.iter_mut().enumerate() {
            let ph = azimuth + k as f64 * FRAC_PI_2;
            let r = Vector3::new(rho_xy * ph.cos(), rho_xy * ph.sin(), z);
            let rho = qubit_state(&r)?;
            let m = bloch_from(&avg, |e| expectation(e, &rho))?;
            *f = readout_fidelity(&r, &m);
        }
        quartets.push(StateQuartet {
            azimuth,
            z,
            averaged: fidelities.iter().sum::<f64>() / 4.0,
            fidelities,
        });
    }
    let flat: Vec<f64> = quartets.iter().flat_map(|q| q.fidelities).collect();
    let av: Vec<f64> = quartets.iter().map(|q| q.averaged).collect();
    Ok(SymmetryStudy {
        unaveraged: Spread::of(&flat),
        averaged: Spread::of(&av),
        quartets,
    })
}

/// Readout fidelity of the equatorial state at `azimuth` (rad).
pub fn equator_fidelity(effects: &ReadoutEffects, azimuth: f64) -> Result<f64> {
    let r = Vector3::new(azimuth.cos(), azimuth.sin(), 0.0);
    let m = effects.read(&qubit_state(&r)?)?;
    Ok(readout_fidelity(&r, &m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::EnsembleSpec;

    fn model() -> ModelBundle {
        ModelBundle::new(
            LevelSystem::praseodymium_default(),
            DecoherenceSpec::default(),
            EnsembleSpec::single(),
            PropagationSettings::default(),
        )
        .unwrap()
    }

    fn close(a: &Vector3<f64>, b: [f64; 3]) -> bool {
        (a - Vector3::from(b)).amax() < 1e-12
    }

    #[test]
    fn ideal_mode_reads_axis_states() {
        let m = model();
        for (level, side) in [
            (ReadoutLevel::Zero, BrightSide::Plus),
            (ReadoutLevel::One, BrightSide::Plus),
            (ReadoutLevel::Zero, BrightSide::Minus),
            (ReadoutLevel::One, BrightSide::Minus),
        ] {
            let spec = TomographySpec {
                readout_level: level,
                bright_side: side,
                ..TomographySpec::ideal()
            };
            let one = DensityState::ground(GroundLevel::One);
            assert!(close(&qst_readout(&one, &spec, &m).unwrap(), [0.0, 0.0, -1.0]));
            let zero = DensityState::ground(GroundLevel::Zero);
            assert!(close(&qst_readout(&zero, &spec, &m).unwrap(), [0.0, 0.0, 1.0]));
            let mut v = CVec6::zeros();
            v[GroundLevel::Zero.index()] = Complex64::new(0.5f64.sqrt(), 0.0);
            v[GroundLevel::One.index()] = Complex64::new(0.0, -(0.5f64.sqrt()));
            let minus_y = DensityState::pure(&v).unwrap();
            assert!(close(&qst_readout(&minus_y, &spec, &m).unwrap(), [0.0, -1.0, 0.0]));
            let plus_x = qubit_state(&Vector3::new(1.0, 0.0, 0.0)).unwrap();
            assert!(close(&qst_readout(&plus_x, &spec, &m).unwrap(), [1.0, 0.0, 0.0]));
        }
    }

    #[test]
    fn ideal_mode_is_perfect_for_random_states() {
        let effects = ReadoutEffects::build(&TomographySpec::ideal(), &model()).unwrap();
        let s = qst_symmetry_study(50, 3, StateRegion::Equator, &effects).unwrap();
        assert!((s.unaveraged.min - 1.0).abs() < 1e-12 && (s.unaveraged.max - 1.0).abs() < 1e-12);
        assert!(s.averaged.width() < 1e-12);
    }

    #[test]
    fn bloch_round_trip() {
        let r = Vector3::new(0.3, -0.5, 0.1).normalize();
        let rho = qubit_state(&r).unwrap();
        let q = rho.qubit_block();
        // qubit_block is ordered (|0>, |1>)
        let x = 2.0 * q[0][1].re;
        let y = -2.0 * q[0][1].im;
        let z = q[0][0].re - q[1][1].re;
        assert!((Vector3::new(x, y, z) - r).amax() < 1e-12);
        let b = bloch_of(Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.0));
        assert!(close(&b, [0.0, -1.0, 0.0]));
    }

    #[test]
    fn excited_leftover_is_read_after_decay() {
        let m = model();
        let e = DensityState::excited(ExcitedLevel::E2);
        let r = qst_readout(&e, &TomographySpec::ideal(), &m).unwrap();
        let b = m.dec.branching_for(&m.sys, ExcitedLevel::E2);
        let z = (b[GroundLevel::Zero.index()] - b[GroundLevel::One.index()])
            / (b[GroundLevel::Zero.index()] + b[GroundLevel::One.index()]);
        assert!((r.z - z).abs() < 1e-12);
        let no_wait = TomographySpec {
            readout_wait: 0.0,
            ..TomographySpec::ideal()
        };
        assert!(matches!(qst_readout(&e, &no_wait, &m), Err(Error::ZeroPopulation)));
    }

    #[test]
    fn axis_configuration_is_checked() {
        let mut spec = TomographySpec::ideal();
        spec.axes = vec![Axis::X, Axis::X, Axis::Z];
        assert!(spec.validate().is_err());
        spec.axes = vec![Axis::X, Axis::Y];
        assert!(spec.validate().is_err());
    }

    fn test_sech() -> SechParams {
        SechParams {
            peak_rabi: std::f64::consts::TAU * 4.0e6,
            beta: 8e6,
            mu: 3.0,
            duration: 1.5e-6,
            center_detuning_hz: 0.0,
        }
    }

    #[test]
    fn calibrated_pair_flips_the_bright_state_only() {
        let sys = LevelSystem::praseodymium_default();
        let settings = PropagationSettings {
            rel_tol: 1e-9,
            abs_tol: 1e-9,
            ..Default::default()
        };
        let p = test_sech();
        for ph in [0.0, FRAC_PI_2] {
            let phi = calibrate_second_phase(&p, ph, ReadoutLevel::Zero, BrightSide::Plus, &sys, &settings).unwrap();
            let m = MemberModel::new(&sys, None, 0.0, Couplings::CarrierOnly).unwrap();
            let pair = SechPair {
                params: p,
                bright_phase: ph,
                second_phase: phi,
                level: ReadoutLevel::Zero,
                side: BrightSide::Plus,
            };
            let b = bright_state(ph, ReadoutLevel::Zero, BrightSide::Plus);
            let amp = b.dotc(&m.propagate_ket(&b, &pair, &settings).unwrap());
            assert!(amp.re < -0.99, "{amp}");
            assert!(amp.im.abs() < 1e-6, "{amp}");
        }
    }

    #[test]
    fn carrier_only_sech_readout_is_near_ideal() {
        let m = ModelBundle::new(
            LevelSystem::praseodymium_default(),
            DecoherenceSpec::default(),
            EnsembleSpec::single(),
            PropagationSettings {
                couplings: Couplings::CarrierOnly,
                ..Default::default()
            },
        )
        .unwrap();
        let spec = TomographySpec {
            pulse: PulseKind::Sech(test_sech()),
            ..TomographySpec::ideal()
        };
        let effects = ReadoutEffects::build(&spec, &m).unwrap();
        for az in [0.0, FRAC_PI_2, PI, -FRAC_PI_2] {
            let f = equator_fidelity(&effects, az).unwrap();
            assert!(f > 0.97, "azimuth {az}: {f}");
        }
    }
}
