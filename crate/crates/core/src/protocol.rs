//! Consecutive-transfer experiments and per-transfer fidelity extraction.
//!
//! A run applies forward and backward transfers alternately to a freshly
//! initialized ensemble. After `N` transfers the ensemble should sit in the
//! forward target for odd `N` and back in `|1>` for even `N`. With forward
//! fidelity `F_a`, backward fidelity `F_b` and a readout factor `R` per parity,
//!
//! ```text
//! F(N) ~ F_a^ceil(N/2) * F_b^floor(N/2) * R(parity)
//! F(N + 2) / F(N) = F_a * F_b
//! ```
//!
//! so the ratio is free of the readout factor. Assuming `F_a = F_b` the
//! per-transfer fidelity is its square root.
//!
//! Running `N` transfers on a fresh ensemble and reading the `N`-th state of a
//! single long run are the same computation: initialization is identical and
//! nothing depends on how many pulses follow.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    free_decay, state_fidelity, CVec6, DensityState, Interchanged, ModelBundle, TwoToneField,
};
use crate::error::{Error, Result};
use crate::invariant::{
    reverse_pulses, synthesize_samples, AnsatzCoefficients, SampledPulsePair, Table1Case,
    DEFAULT_SAMPLES,
};
use crate::levels::GroundLevel;
use crate::tomography::{readout_fidelity, ReadoutEffects};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub n: usize,
    pub overall_fidelity: f64,
    /// Tomography estimate, superposition runs only. Not clipped.
    pub bloch: Option<[f64; 3]>,
    /// Ensemble populations after the last transfer, `(aux, |1>, |0>, e1, e2, e3)`.
    pub populations: [f64; 6],
    /// Constant phase of the forward pulses, superposition runs only.
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionBasis {
    /// `|1> <-> |0>` population transfers.
    Population,
    /// `|1> <-> superposition` transfers.
    Superposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub per_transfer_fidelity: f64,
    /// Sample standard deviation over `n_range`; 0 for a single ratio.
    pub uncertainty: f64,
    /// `sqrt(F(N + 2) / F(N))` for each `N` in `n_range`.
    pub per_n: Vec<f64>,
    pub basis: ExtractionBasis,
    pub n_range: (usize, usize),
    /// All ratios use `N + 2 <= 6`, where the product form holds well.
    pub within_validity: bool,
}

/// Forward pulses and how the backward transfer is produced from them.
pub struct PulseSet<'a> {
    pub forward: &'a dyn TwoToneField,
    pub backward: &'a dyn TwoToneField,
    /// Forward target in the `(|1>, |e>, |0>)` basis.
    pub target: Vector3<Complex64>,
}

/// How `F(N)` is read out in a population run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationReadout {
    /// Free decay before readout, s.
    pub wait: f64,
    /// Divide by `P0 + P1`, as a spectroscopic population measurement does.
    pub normalize: bool,
}

impl Default for PopulationReadout {
    fn default() -> Self {
        PopulationReadout {
            wait: 1e-3,
            normalize: true,
        }
    }
}

impl PopulationReadout {
    /// Fidelity is the overlap with the target, read immediately.
    pub fn direct() -> Self {
        PopulationReadout {
            wait: 0.0,
            normalize: false,
        }
    }
}

fn lambda_one() -> Vector3<Complex64> {
    Vector3::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
}

/// Per-member states after 1..=n_max alternating transfers, `[member][N - 1]`.
fn run_members(n_max: usize, set: &PulseSet, model: &ModelBundle) -> Result<Vec<Vec<DensityState>>> {
    if n_max == 0 {
        return Err(Error::invariant("protocol", "n_max must be at least 1"));
    }
    let fields: Vec<&dyn TwoToneField> = (0..n_max)
        .map(|k| if k % 2 == 0 { set.forward } else { set.backward })
        .collect();
    let start = DensityState::ground(GroundLevel::One);
    let members = model.ensemble.members();
    model.map_members(&members, |m| {
        let mut cur = start;
        let mut out = Vec::with_capacity(n_max);
        for (k, f) in fields.iter().enumerate() {
            cur = m
                .propagate(&cur, *f, &model.settings)
                .map_err(|e| Error::Iteration {
                    n: k + 1,
                    source: Box::new(e),
                })?;
            out.push(cur);
        }
        Ok(out)
    })
}

fn ensemble_at(states: &[Vec<DensityState>], model: &ModelBundle, k: usize) -> DensityState {
    let members = model.ensemble.members();
    DensityState::mixture(members.iter().map(|m| m.weight).zip(states.iter().map(|s| &s[k])))
}

/// Population experiment: `F(N)` for `N = 1..=n_max`.
pub fn run_population_protocol(
    n_max: usize,
    set: &PulseSet,
    model: &ModelBundle,
    readout: &PopulationReadout,
) -> Result<Vec<TransferRecord>> {
    let states = run_members(n_max, set, model)?;
    let fwd = model.embed(&set.target);
    let back = model.embed(&lambda_one());
    (0..n_max)
        .map(|k| {
            let n = k + 1;
            let rho = ensemble_at(&states, model, k);
            let target = if n % 2 == 1 { &fwd } else { &back };
            let read = if readout.wait > 0.0 {
                free_decay(&rho, &model.sys, &model.dec, readout.wait)?
            } else {
                rho
            };
            let mut f = state_fidelity(&read, target);
            if readout.normalize {
                let p = read.populations();
                let q = p[GroundLevel::One.index()] + p[GroundLevel::Zero.index()];
                if !(q > 0.0) {
                    return Err(Error::ZeroPopulation);
                }
                f /= q;
            }
            Ok(TransferRecord {
                n,
                overall_fidelity: f,
                bloch: None,
                populations: rho.populations(),
                phase: None,
            })
        })
        .collect()
}

/// `sqrt(F(N + 2) / F(N))` over `n_range`, with mean and sample spread.
pub fn extract_pair_fidelity(
    fidelities: &[f64],
    n_range: (usize, usize),
    basis: ExtractionBasis,
) -> Result<FidelityEstimate> {
    let (lo, hi) = n_range;
    if lo == 0 || hi < lo {
        return Err(Error::invariant("extraction", format!("bad N range {lo}..={hi}")));
    }
    if hi + 2 > fidelities.len() {
        return Err(Error::invariant(
            "extraction",
            format!("N = {} needed but only {} records", hi + 2, fidelities.len()),
        ));
    }
    let mut per_n = Vec::with_capacity(hi - lo + 1);
    for n in lo..=hi {
        let f = fidelities[n - 1];
        if f == 0.0 {
            return Err(Error::ZeroFidelity(n));
        }
        per_n.push((fidelities[n + 1] / f).sqrt());
    }
    let k = per_n.len() as f64;
    let mean = per_n.iter().sum::<f64>() / k;
    let uncertainty = if per_n.len() > 1 {
        (per_n.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(FidelityEstimate {
        per_transfer_fidelity: mean,
        uncertainty,
        per_n,
        basis,
        n_range,
        within_validity: hi + 2 <= 6,
    })
}

pub fn overall_fidelities(records: &[TransferRecord]) -> Vec<f64> {
    records.iter().map(|r| r.overall_fidelity).collect()
}

/// Case 1 forward pulses with their tone-interchanged counterpart as the backward transfer.
pub struct PopulationPulses {
    pub forward: SampledPulsePair,
    pub coefficients: AnsatzCoefficients,
}

impl PopulationPulses {
    pub fn table1() -> Result<Self> {
        let coefficients = AnsatzCoefficients::table1(Table1Case::Case1, 0.0)?.with_exact_constraints();
        Ok(PopulationPulses {
            forward: synthesize_samples(&coefficients, DEFAULT_SAMPLES)?,
            coefficients,
        })
    }

    pub fn from_coefficients(coefficients: AnsatzCoefficients) -> Result<Self> {
        coefficients.check_constraints(crate::invariant::CONSTRAINT_TOLERANCE)?;
        Ok(PopulationPulses {
            forward: synthesize_samples(&coefficients, DEFAULT_SAMPLES)?,
            coefficients,
        })
    }

    /// Runs the experiment. With `interchange_backward` false the forward pulses
    /// are reused unchanged for the way back (a deliberately broken sequence).
    pub fn run(
        &self,
        n_max: usize,
        model: &ModelBundle,
        readout: &PopulationReadout,
        interchange_backward: bool,
    ) -> Result<Vec<TransferRecord>> {
        let inter = Interchanged(&self.forward);
        let backward: &dyn TwoToneField = if interchange_backward { &inter } else { &self.forward };
        let set = PulseSet {
            forward: &self.forward,
            backward,
            target: self.coefficients.target_state(),
        };
        run_population_protocol(n_max, &set, model, readout)
    }
}

/// Superposition pulses for one forward phase: forward from `forward_case`,
/// backward the time-reversed, sign-flipped pulses of `backward_case` at the same phase.
pub struct SuperpositionPulses {
    pub phase: f64,
    pub forward: SampledPulsePair,
    pub backward: SampledPulsePair,
    pub target: Vector3<Complex64>,
}

impl SuperpositionPulses {
    pub fn new(forward: &AnsatzCoefficients, backward: &AnsatzCoefficients) -> Result<Self> {
        if (forward.phi - backward.phi).abs() > 1e-12 || (forward.theta - backward.theta).abs() > 1e-12 {
            return Err(Error::invariant(
                "superposition pulses",
                "forward and backward coefficients must share theta and phi",
            ));
        }
        Ok(SuperpositionPulses {
            phase: forward.phi,
            forward: synthesize_samples(forward, DEFAULT_SAMPLES)?,
            backward: reverse_pulses(&synthesize_samples(backward, DEFAULT_SAMPLES)?),
            target: forward.target_state(),
        })
    }

    pub fn table1(phase: f64) -> Result<Self> {
        let f = AnsatzCoefficients::table1(Table1Case::Case2, phase)?.with_exact_constraints();
        let b = AnsatzCoefficients::table1(Table1Case::Case3, phase)?.with_exact_constraints();
        Self::new(&f, &b)
    }
}

pub const FOUR_PHASES: [f64; 4] = [0.0, 0.5 * PI, PI, 1.5 * PI];

/// Result of a superposition experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionRun {
    /// One record per (phase, N), phases in input order.
    pub records: Vec<TransferRecord>,
    /// Phase-averaged `F(N)`, `N = 1..=n_max`.
    pub averaged: Vec<f64>,
}

/// Bloch vector of the forward target, with `+Z = |0>`.
fn target_bloch(target: &Vector3<Complex64>) -> Vector3<f64> {
    // Lambda basis is (|1>, |e>, |0>)
    crate::tomography::bloch_of(target[2], target[0])
}

/// Superposition experiment for each pulse set. With `effects` the states are
/// read by simulated tomography; otherwise `F(N)` is the exact state fidelity.
pub fn run_superposition_protocol(
    n_max: usize,
    sets: &[SuperpositionPulses],
    effects: Option<&ReadoutEffects>,
    model: &ModelBundle,
) -> Result<SuperpositionRun> {
    if sets.is_empty() {
        return Err(Error::invariant("superposition protocol", "no pulse sets"));
    }
    let mut records = Vec::with_capacity(sets.len() * n_max);
    let mut averaged = vec![0.0; n_max];
    let one_bloch = Vector3::new(0.0, 0.0, -1.0);
    for s in sets {
        let set = PulseSet {
            forward: &s.forward,
            backward: &s.backward,
            target: s.target,
        };
        let states = run_members(n_max, &set, model)?;
        let fwd: CVec6 = model.embed(&s.target);
        let back: CVec6 = model.embed(&lambda_one());
        let fwd_bloch = target_bloch(&s.target);
        for k in 0..n_max {
            let n = k + 1;
            let rho = ensemble_at(&states, model, k);
            let (f, bloch) = match effects {
                Some(e) => {
                    let per: Vec<DensityState> = states.iter().map(|m| m[k]).collect();
                    let r = e.read_members(&per)?;
                    let tgt = if n % 2 == 1 { &fwd_bloch } else { &one_bloch };
                    (readout_fidelity(tgt, &r), Some([r.x, r.y, r.z]))
                }
                None => (state_fidelity(&rho, if n % 2 == 1 { &fwd } else { &back }), None),
            };
            averaged[k] += f / sets.len() as f64;
            records.push(TransferRecord {
                n,
                overall_fidelity: f,
                bloch,
                populations: rho.populations(),
                phase: Some(s.phase),
            });
        }
    }
    Ok(SuperpositionRun { records, averaged })
}

pub const TABLE_HEADER: &str = "# invpulse-protocol v1";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.12e}"))
}

/// One row per record. `readout` names how `F` was obtained; the extraction,
/// if given, follows as comment lines.
pub fn format_protocol_table(
    records: &[TransferRecord],
    readout: &str,
    extraction: Option<&FidelityEstimate>,
) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str(TABLE_HEADER);
    out.push_str("\n# n phase readout fidelity bloch_x bloch_y bloch_z p_aux p_one p_zero p_e1 p_e2 p_e3\n");
    for r in records {
        let b = r.bloch.map(|b| b.map(Some)).unwrap_or([None; 3]);
        let _ = write!(
            out,
            "{} {} {} {:.12e} {} {} {}",
            r.n,
            fmt_opt(r.phase),
            readout,
            r.overall_fidelity,
            fmt_opt(b[0]),
            fmt_opt(b[1]),
            fmt_opt(b[2])
        );
        for p in r.populations {
            let _ = write!(out, " {p:.12e}");
        }
        out.push('\n');
    }
    if let Some(e) = extraction {
        let _ = writeln!(
            out,
            "# extraction basis={} n_range={}..={} per_transfer={:.9} uncertainty={:.9} within_validity={}",
            match e.basis {
                ExtractionBasis::Population => "population",
                ExtractionBasis::Superposition => "superposition",
            },
            e.n_range.0,
            e.n_range.1,
            e.per_transfer_fidelity,
            e.uncertainty,
            e.within_validity
        );
    }
    out
}

/// Reads the rows of a protocol table back; comment lines are skipped.
pub fn parse_protocol_table(text: &str) -> Result<Vec<TransferRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TABLE_HEADER) {
        return Err(Error::Parse(format!("missing header line `{TABLE_HEADER}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 13 {
            return Err(Error::Parse(format!("line {}: expected 13 columns", i + 2)));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))
        };
        let opt = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
        let bloch = [opt(cols[4])?, opt(cols[5])?, opt(cols[6])?];
        out.push(TransferRecord {
            n: cols[0]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?,
            phase: opt(cols[1])?,
            overall_fidelity: num(cols[3])?,
            bloch: match bloch {
                [Some(x), Some(y), Some(z)] => Some([x, y, z]),
                [None, None, None] => None,
                _ => return Err(Error::Parse(format!("line {}: partial Bloch vector", i + 2))),
            },
            populations: {
                let mut p = [0.0; 6];
                for (k, c) in cols[7..].iter().enumerate() {
                    p[k] = num(c)?;
                }
                p
            },
        });
    }
    Ok(out)
}
