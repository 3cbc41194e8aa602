//! Six-level ion model: hyperfine layout, relative oscillator strengths,
//! decoherence parameters and the inhomogeneous ensemble.
//!
//! Basis order used everywhere in the six-level model is
//! `(aux, |1>, |0>, e1, e2, e3)`.
//!
//! Ground levels are described by *transition offsets*: every optical
//! transition out of ground level `g` sits `ground_offset(g)` above the
//! corresponding transition out of `|0>`. This is minus the level energy,
//! so `freq(g, e) = excited_energy(e) + ground_offset(g)` and `|0> -> e1`
//! is the zero of the frequency axis.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Converts a FWHM to the standard deviation of a Gaussian.
pub const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5; // 1 / (2 sqrt(2 ln 2))

pub const DEFAULT_AUX_ABOVE_ONE_HZ: f64 = 17.3e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundLevel {
    Aux,
    One,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExcitedLevel {
    E1,
    E2,
    E3,
}

impl GroundLevel {
    pub const ALL: [GroundLevel; 3] = [GroundLevel::Aux, GroundLevel::One, GroundLevel::Zero];

    /// Row index into ground-indexed arrays, which is also the six-level basis index.
    pub fn index(self) -> usize {
        match self {
            GroundLevel::Aux => 0,
            GroundLevel::One => 1,
            GroundLevel::Zero => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GroundLevel::Aux => "aux",
            GroundLevel::One => "|1>",
            GroundLevel::Zero => "|0>",
        }
    }
}

impl ExcitedLevel {
    pub const ALL: [ExcitedLevel; 3] = [ExcitedLevel::E1, ExcitedLevel::E2, ExcitedLevel::E3];

    /// Column index into excited-indexed arrays.
    pub fn index(self) -> usize {
        match self {
            ExcitedLevel::E1 => 0,
            ExcitedLevel::E2 => 1,
            ExcitedLevel::E3 => 2,
        }
    }

    /// Index in the six-level basis.
    pub fn basis_index(self) -> usize {
        3 + self.index()
    }

    pub fn label(self) -> &'static str {
        match self {
            ExcitedLevel::E1 => "e1",
            ExcitedLevel::E2 => "e2",
            ExcitedLevel::E3 => "e3",
        }
    }
}

/// Which of the two drive tones a coupling belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tone {
    /// Carrier on `|1> <-> |e>`.
    P,
    /// Carrier on `|0> <-> |e>`.
    S,
}

/// Hyperfine structure of one ion class.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSystem {
    ground_offsets_hz: [f64; 3],
    excited_energies_hz: [f64; 3],
    oscillator_strengths: [[f64; 3]; 3],
    qubit_excited: ExcitedLevel,
    carrier_p_hz: f64,
    carrier_s_hz: f64,
}

/// One row of [`transition_table`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub ground: GroundLevel,
    pub excited: ExcitedLevel,
    pub frequency_hz: f64,
    pub strength: f64,
    /// Peak number (1..=5) in the readout window, if this transition is one of the labelled peaks.
    pub peak: Option<u8>,
}

impl LevelSystem {
    pub fn new(
        ground_offsets_hz: [f64; 3],
        excited_energies_hz: [f64; 3],
        oscillator_strengths: [[f64; 3]; 3],
        qubit_excited: ExcitedLevel,
        carrier_p_hz: f64,
        carrier_s_hz: f64,
    ) -> Result<Self> {
        let sys = LevelSystem {
            ground_offsets_hz,
            excited_energies_hz,
            oscillator_strengths,
            qubit_excited,
            carrier_p_hz,
            carrier_s_hz,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Pr:YSO site 1 defaults: peaks at 0, 4.6, 9.4, 10.2 and 14.8 MHz, aux 17.3 MHz beyond `|1>`.
    pub fn praseodymium_default() -> Self {
        LevelSystem::new(
            [10.2e6 + DEFAULT_AUX_ABOVE_ONE_HZ, 10.2e6, 0.0],
            [0.0, 4.6e6, 9.4e6],
            DEFAULT_OSCILLATOR_STRENGTHS,
            ExcitedLevel::E2,
            0.0,
            0.0,
        )
        .expect("built-in level system is valid")
    }

    fn validate(&self) -> Result<()> {
        for v in self.ground_offsets_hz.iter().chain(&self.excited_energies_hz) {
            if !v.is_finite() {
                return Err(Error::invariant("level system", "level positions must be finite"));
            }
        }
        if self.ground_offsets_hz[GroundLevel::Zero.index()] != 0.0 {
            return Err(Error::invariant(
                "level system",
                "the |0> ground offset defines the zero and must be 0",
            ));
        }
        for g in GroundLevel::ALL {
            let row = &self.oscillator_strengths[g.index()];
            for (j, &f) in row.iter().enumerate() {
                if !(f >= 0.0) || !f.is_finite() {
                    return Err(Error::invariant(
                        "oscillator strengths",
                        format!("f[{}][e{}] = {f} is negative or not finite", g.label(), j + 1),
                    ));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invariant(
                    "oscillator strengths",
                    format!("row {} sums to {sum}, expected 1", g.label()),
                ));
            }
        }
        let qe = self.qubit_excited.index();
        if self.oscillator_strengths[GroundLevel::One.index()][qe] <= 0.0
            || self.oscillator_strengths[GroundLevel::Zero.index()][qe] <= 0.0
        {
            return Err(Error::invariant(
                "oscillator strengths",
                "carrier transitions must have nonzero strength",
            ));
        }
        if !self.carrier_p_hz.is_finite() || !self.carrier_s_hz.is_finite() {
            return Err(Error::invariant("level system", "carrier detunings must be finite"));
        }
        Ok(())
    }

    pub fn ground_offset_hz(&self, g: GroundLevel) -> f64 {
        self.ground_offsets_hz[g.index()]
    }

    pub fn excited_energy_hz(&self, e: ExcitedLevel) -> f64 {
        self.excited_energies_hz[e.index()]
    }

    pub fn strength(&self, g: GroundLevel, e: ExcitedLevel) -> f64 {
        self.oscillator_strengths[g.index()][e.index()]
    }

    pub fn oscillator_strengths(&self) -> &[[f64; 3]; 3] {
        &self.oscillator_strengths
    }

    pub fn qubit_excited(&self) -> ExcitedLevel {
        self.qubit_excited
    }

    pub fn carrier_detunings_hz(&self) -> (f64, f64) {
        (self.carrier_p_hz, self.carrier_s_hz)
    }

    /// Resonance frequency of `g -> e` for an ion at the ensemble centre.
    pub fn transition_frequency_hz(&self, g: GroundLevel, e: ExcitedLevel) -> f64 {
        self.excited_energy_hz(e) + self.ground_offset_hz(g)
    }

    /// Optical frequency of a drive tone on the same axis as [`Self::transition_frequency_hz`].
    pub fn tone_frequency_hz(&self, tone: Tone) -> f64 {
        match tone {
            Tone::P => {
                self.transition_frequency_hz(GroundLevel::One, self.qubit_excited) + self.carrier_p_hz
            }
            Tone::S => {
                self.transition_frequency_hz(GroundLevel::Zero, self.qubit_excited) + self.carrier_s_hz
            }
        }
    }

    /// Ground level the tone is nominally resonant with.
    pub fn carrier_ground(tone: Tone) -> GroundLevel {
        match tone {
            Tone::P => GroundLevel::One,
            Tone::S => GroundLevel::Zero,
        }
    }

    /// Rabi-frequency scale of `tone` on `g -> e` relative to its carrier transition.
    pub fn coupling_scale(&self, tone: Tone, g: GroundLevel, e: ExcitedLevel) -> f64 {
        let carrier = self.strength(Self::carrier_ground(tone), self.qubit_excited);
        (self.strength(g, e) / carrier).sqrt()
    }

    /// Fraction of decay out of `e` into each ground level, proportional to the
    /// oscillator-strength column of `e`.
    pub fn branching_from_strengths(&self, e: ExcitedLevel) -> [f64; 3] {
        let col: [f64; 3] = std::array::from_fn(|g| self.oscillator_strengths[g][e.index()]);
        let total: f64 = col.iter().sum();
        col.map(|f| f / total)
    }
}

/// Peak numbering in the readout window: `|0>` to e1, e2, e3 then `|1>` to e1, e2.
pub const PEAKS: [(GroundLevel, ExcitedLevel); 5] = [
    (GroundLevel::Zero, ExcitedLevel::E1),
    (GroundLevel::Zero, ExcitedLevel::E2),
    (GroundLevel::Zero, ExcitedLevel::E3),
    (GroundLevel::One, ExcitedLevel::E1),
    (GroundLevel::One, ExcitedLevel::E2),
];

/// Relative oscillator strengths `f[g][e]`, rows `(aux, |1>, |0>)`, columns `(e1, e2, e3)`.
pub const DEFAULT_OSCILLATOR_STRENGTHS: [[f64; 3]; 3] = [
    [0.07, 0.01, 0.92],
    [0.38, 0.60, 0.02],
    [0.55, 0.40, 0.05],
];

/// All nine ground-to-excited transitions, ordered by ground then excited level.
pub fn transition_table(sys: &LevelSystem) -> Vec<Transition> {
    let mut out = Vec::with_capacity(9);
    for g in GroundLevel::ALL {
        for e in ExcitedLevel::ALL {
            let peak = PEAKS
                .iter()
                .position(|&(pg, pe)| pg == g && pe == e)
                .map(|i| i as u8 + 1);
            out.push(Transition {
                ground: g,
                excited: e,
                frequency_hz: sys.transition_frequency_hz(g, e),
                strength: sys.strength(g, e),
                peak,
            });
        }
    }
    out
}

/// How excited-state decay is split between the ground levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    /// Column-normalized oscillator strengths of the decaying level.
    FromOscillatorStrengths,
    /// Same split for every excited level, ordered `(aux, |1>, |0>)`.
    Fixed([f64; 3]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceSpec {
    pub t1_optical: f64,
    pub t2_optical: f64,
    pub t2_spin: f64,
    pub branching: Branching,
}

impl Default for DecoherenceSpec {
    fn default() -> Self {
        DecoherenceSpec {
            t1_optical: 164e-6,
            t2_optical: 132e-6,
            t2_spin: 500e-6,
            branching: Branching::FromOscillatorStrengths,
        }
    }
}

impl DecoherenceSpec {
    pub fn with_t2_optical(t2_optical: f64) -> Result<Self> {
        let d = DecoherenceSpec {
            t2_optical,
            ..Default::default()
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t1_optical", self.t1_optical),
            ("t2_optical", self.t2_optical),
            ("t2_spin", self.t2_spin),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invariant("decoherence", format!("{name} must be positive")));
            }
        }
        if self.t2_optical > 2.0 * self.t1_optical {
            return Err(Error::invariant("decoherence", "t2_optical exceeds 2 * t1_optical"));
        }
        if self.optical_dephasing_rate() < 0.0 {
            return Err(Error::invariant(
                "decoherence",
                format!(
                    "t2_optical = {:e} s is longer than decay and spin dephasing allow",
                    self.t2_optical
                ),
            ));
        }
        if let Branching::Fixed(b) = &self.branching {
            if b.iter().any(|&x| !(x >= 0.0)) || (b.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::invariant(
                    "decoherence",
                    "branching ratios must be nonnegative and sum to 1",
                ));
            }
        }
        Ok(())
    }

    /// Rate of the excited-level projector dephasing, 1/s, chosen so optical
    /// coherences decay at exactly `1 / t2_optical` once population decay
    /// (`1 / 2 t1`) and ground projector dephasing (`1 / 2 t2_spin`) are counted.
    pub fn optical_dephasing_rate(&self) -> f64 {
        2.0 / self.t2_optical - 1.0 / self.t1_optical - 1.0 / self.t2_spin
    }

    /// Decay fractions out of `e` into `(aux, |1>, |0>)`.
    pub fn branching_for(&self, sys: &LevelSystem, e: ExcitedLevel) -> [f64; 3] {
        match &self.branching {
            Branching::FromOscillatorStrengths => sys.branching_from_strengths(e),
            Branching::Fixed(b) => *b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Equal weights at the Gaussian quantiles `(i + 1/2) / n`.
    EqualWeightQuantile,
    GaussHermite,
}

/// An ion class outside the qubit peak that the pulses should leave alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectatorClass {
    pub offset_hz: f64,
    pub initial: GroundLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub detuning_fwhm_hz: f64,
    pub n_members: usize,
    pub quadrature: Quadrature,
    pub spectators: Vec<SpectatorClass>,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            detuning_fwhm_hz: 170e3,
            n_members: 41,
            quadrature: Quadrature::EqualWeightQuantile,
            spectators: Vec::new(),
        }
    }
}

/// One quadrature node of the inhomogeneous distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Member {
    pub detuning_hz: f64,
    pub weight: f64,
}

impl EnsembleSpec {
    /// A single member at zero detuning.
    pub fn single() -> Self {
        EnsembleSpec {
            n_members: 1,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_members == 0 {
            return Err(Error::invariant("ensemble", "n_members must be at least 1"));
        }
        if !(self.detuning_fwhm_hz > 0.0) || !self.detuning_fwhm_hz.is_finite() {
            return Err(Error::invariant("ensemble", "detuning_fwhm must be positive"));
        }
        if self.quadrature == Quadrature::GaussHermite && self.n_members > 100 {
            return Err(Error::invariant("ensemble", "Gauss-Hermite supports at most 100 nodes"));
        }
        Ok(())
    }

    /// Detuning nodes and weights; weights sum to 1.
    pub fn members(&self) -> Vec<Member> {
        let sigma = self.detuning_fwhm_hz * FWHM_TO_SIGMA;
        let n = self.n_members;
        if n == 1 {
            return vec![Member {
                detuning_hz: 0.0,
                weight: 1.0,
            }];
        }
        match self.quadrature {
            Quadrature::EqualWeightQuantile => {
                let normal = Normal::new(0.0, 1.0).expect("unit normal");
                let mut nodes: Vec<f64> = (0..n)
                    .map(|i| sigma * normal.inverse_cdf((i as f64 + 0.5) / n as f64))
                    .collect();
                // exact mirror symmetry so the mean detuning vanishes
                for i in 0..n / 2 {
                    let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
                    nodes[i] = -m;
                    nodes[n - 1 - i] = m;
                }
                if n % 2 == 1 {
                    nodes[n / 2] = 0.0;
                }
                nodes
                    .into_iter()
                    .map(|d| Member {
                        detuning_hz: d,
                        weight: 1.0 / n as f64,
                    })
                    .collect()
            }
            Quadrature::GaussHermite => gauss_hermite(n)
                .into_iter()
                .map(|(x, w)| Member {
                    detuning_hz: std::f64::consts::SQRT_2 * sigma * x,
                    weight: w,
                })
                .collect(),
        }
    }
}

/// Physicists' Gauss-Hermite nodes with weights normalized to sum 1 (Golub-Welsch).
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut nodes: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    for i in 0..n / 2 {
        let x = 0.5 * (nodes[n - 1 - i].0 - nodes[i].0);
        let w = 0.5 * (nodes[n - 1 - i].1 + nodes[i].1);
        nodes[i] = (-x, w);
        nodes[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        nodes[n / 2].0 = 0.0;
    }
    let total: f64 = nodes.iter().map(|p| p.1).sum();
    nodes.into_iter().map(|(x, w)| (x, w / total)).collect()
}

// ---------------------------------------------------------------------------
// Config documents
// ---------------------------------------------------------------------------

/// On-disk form of a [`LevelSystem`]. Frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsDoc {
    /// Transition offset of `|1>` relative to `|0>` (peak 4 minus peak 1).
    pub one_offset_hz: f64,
    /// Transition offset of aux relative to `|1>`; defaults to 17.3 MHz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_above_one_hz: Option<f64>,
    /// Excited hyperfine energies `(e1, e2, e3)` relative to e1.
    pub excited_hz: [f64; 3],
    pub oscillator_strengths: StrengthRows,
    #[serde(default = "default_qubit_excited")]
    pub qubit_excited: ExcitedLevel,
    #[serde(default)]
    pub carrier_p_detuning_hz: f64,
    #[serde(default)]
    pub carrier_s_detuning_hz: f64,
}

/// Oscillator strengths per ground level, each row over `(e1, e2, e3)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrengthRows {
    pub aux: [f64; 3],
    pub one: [f64; 3],
    pub zero: [f64; 3],
}

fn default_qubit_excited() -> ExcitedLevel {
    ExcitedLevel::E2
}

impl LevelsDoc {
    pub fn build(&self) -> Result<LevelSystem> {
        if self.excited_hz[0] != 0.0 {
            return Err(Error::invariant("level system", "excited_hz[0] (e1) must be 0"));
        }
        let aux_above = self.aux_above_one_hz.unwrap_or(DEFAULT_AUX_ABOVE_ONE_HZ);
        LevelSystem::new(
            [self.one_offset_hz + aux_above, self.one_offset_hz, 0.0],
            self.excited_hz,
            [
                self.oscillator_strengths.aux,
                self.oscillator_strengths.one,
                self.oscillator_strengths.zero,
            ],
            self.qubit_excited,
            self.carrier_p_detuning_hz,
            self.carrier_s_detuning_hz,
        )
    }

    /// Document equivalent to `sys`, with every default made explicit.
    pub fn from_system(sys: &LevelSystem) -> Self {
        let one = sys.ground_offset_hz(GroundLevel::One);
        LevelsDoc {
            one_offset_hz: one,
            aux_above_one_hz: Some(sys.ground_offset_hz(GroundLevel::Aux) - one),
            excited_hz: sys.excited_energies_hz,
            oscillator_strengths: StrengthRows {
                aux: sys.oscillator_strengths[0],
                one: sys.oscillator_strengths[1],
                zero: sys.oscillator_strengths[2],
            },
            qubit_excited: sys.qubit_excited,
            carrier_p_detuning_hz: sys.carrier_p_hz,
            carrier_s_detuning_hz: sys.carrier_s_hz,
        }
    }
}

/// Parses and validates a level-system document (TOML).
pub fn load_level_system(doc: &str) -> Result<LevelSystem> {
    let parsed: LevelsDoc = toml::from_str(doc).map_err(|e| Error::Parse(e.to_string()))?;
    parsed.build()
}

/// Serializes `sys` back to a document with all defaults filled in.
pub fn echo_level_system(sys: &LevelSystem) -> String {
    toml::to_string(&LevelsDoc::from_system(sys)).expect("level document serializes")
}
