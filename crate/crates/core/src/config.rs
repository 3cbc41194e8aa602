//! Run configuration documents (TOML).
//!
//! Every section is optional; omitted sections take the Pr:YSO defaults.
//! A document must declare `format = "invpulse-config v1"`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Couplings, Frame, ModelBundle, PropagationSettings};
use crate::error::{Error, Result};
use crate::invariant::AnsatzCoefficients;
use crate::levels::{
    Branching, DecoherenceSpec, EnsembleSpec, LevelSystem, LevelsDoc, Quadrature, SpectatorClass,
};
use crate::optimizer::OptimizerSettings;
use crate::protocol::PopulationReadout;
use crate::spectra::{FitOptions, SynthOptions};
use crate::tomography::TomographySpec;

pub const CONFIG_FORMAT: &str = "invpulse-config v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceDoc {
    pub t1_optical: f64,
    pub t2_optical: f64,
    pub t2_spin: f64,
    #[serde(default = "default_branching")]
    pub branching: Branching,
}

fn default_branching() -> Branching {
    Branching::FromOscillatorStrengths
}

impl From<&DecoherenceSpec> for DecoherenceDoc {
    fn from(d: &DecoherenceSpec) -> Self {
        DecoherenceDoc {
            t1_optical: d.t1_optical,
            t2_optical: d.t2_optical,
            t2_spin: d.t2_spin,
            branching: d.branching.clone(),
        }
    }
}

impl DecoherenceDoc {
    pub fn build(&self) -> Result<DecoherenceSpec> {
        let d = DecoherenceSpec {
            t1_optical: self.t1_optical,
            t2_optical: self.t2_optical,
            t2_spin: self.t2_spin,
            branching: self.branching.clone(),
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDoc {
    pub detuning_fwhm_hz: f64,
    pub n_members: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature: Quadrature,
    #[serde(default)]
    pub spectators: Vec<SpectatorClass>,
}

fn default_quadrature() -> Quadrature {
    Quadrature::EqualWeightQuantile
}

impl From<&EnsembleSpec> for EnsembleDoc {
    fn from(e: &EnsembleSpec) -> Self {
        EnsembleDoc {
            detuning_fwhm_hz: e.detuning_fwhm_hz,
            n_members: e.n_members,
            quadrature: e.quadrature,
            spectators: e.spectators.clone(),
        }
    }
}

impl EnsembleDoc {
    pub fn build(&self) -> Result<EnsembleSpec> {
        let e = EnsembleSpec {
            detuning_fwhm_hz: self.detuning_fwhm_hz,
            n_members: self.n_members,
            quadrature: self.quadrature,
            spectators: self.spectators.clone(),
        };
        e.validate()?;
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationDoc {
    pub rel_tol: f64,
    pub abs_tol: f64,
    #[serde(default = "default_frame")]
    pub frame: String,
    /// Largest step in seconds; omitted means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    /// `all` or `carrier_only`.
    #[serde(default = "default_couplings")]
    pub couplings: String,
}

fn default_frame() -> String {
    Frame::Interaction.name().to_string()
}

fn default_couplings() -> String {
    "all".into()
}

impl From<&PropagationSettings> for PropagationDoc {
    fn from(p: &PropagationSettings) -> Self {
        PropagationDoc {
            rel_tol: p.rel_tol,
            abs_tol: p.abs_tol,
            frame: p.frame.name().to_string(),
            max_step: p.max_step.is_finite().then_some(p.max_step),
            couplings: match p.couplings {
                Couplings::All => "all".into(),
                Couplings::CarrierOnly => "carrier_only".into(),
            },
        }
    }
}

impl PropagationDoc {
    pub fn build(&self) -> Result<PropagationSettings> {
        let couplings = match self.couplings.as_str() {
            "all" => Couplings::All,
            "carrier_only" => Couplings::CarrierOnly,
            other => return Err(Error::Parse(format!("unknown couplings `{other}`"))),
        };
        let p = PropagationSettings {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            frame: Frame::from_name(&self.frame)?,
            max_step: self.max_step.unwrap_or(f64::INFINITY),
            couplings,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreDoc {
    pub band_halfwidth_hz: f64,
    pub band_samples: usize,
    pub spectator_weight: f64,
}

impl Default for ScoreDoc {
    fn default() -> Self {
        ScoreDoc {
            band_halfwidth_hz: 500e3,
            band_samples: 9,
            spectator_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraDoc {
    #[serde(default)]
    pub synth: SynthOptions,
    #[serde(default)]
    pub fit: FitOptions,
    /// Traces per run, a multiple of `fit.groups`.
    pub traces: usize,
}

impl Default for SpectraDoc {
    fn default() -> Self {
        SpectraDoc {
            synth: SynthOptions::default(),
            fit: FitOptions::default(),
            traces: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format: String,
    pub levels: LevelsDoc,
    pub decoherence: DecoherenceDoc,
    pub ensemble: EnsembleDoc,
    pub propagation: PropagationDoc,
    pub tomography: TomographySpec,
    pub population_readout: PopulationReadout,
    pub optimizer: OptimizerSettings,
    pub score: ScoreDoc,
    pub spectra: SpectraDoc,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format: CONFIG_FORMAT.into(),
            levels: LevelsDoc::from_system(&LevelSystem::praseodymium_default()),
            decoherence: (&DecoherenceSpec::default()).into(),
            ensemble: (&EnsembleSpec::default()).into(),
            propagation: (&PropagationSettings::default()).into(),
            tomography: TomographySpec::ideal(),
            population_readout: PopulationReadout::default(),
            optimizer: OptimizerSettings::default(),
            score: ScoreDoc::default(),
            spectra: SpectraDoc::default(),
        }
    }
}

/// Partial document: any section may be left out.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    format: String,
    levels: Option<LevelsDoc>,
    decoherence: Option<DecoherenceDoc>,
    ensemble: Option<EnsembleDoc>,
    propagation: Option<PropagationDoc>,
    tomography: Option<TomographySpec>,
    population_readout: Option<PopulationReadout>,
    optimizer: Option<OptimizerSettings>,
    score: Option<ScoreDoc>,
    spectra: Option<SpectraDoc>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let p: PartialConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if p.format != CONFIG_FORMAT {
            return Err(Error::Parse(format!(
                "unsupported config format `{}`, expected `{CONFIG_FORMAT}`",
                p.format
            )));
        }
        let d = RunConfig::default();
        let c = RunConfig {
            format: p.format,
            levels: p.levels.unwrap_or(d.levels),
            decoherence: p.decoherence.unwrap_or(d.decoherence),
            ensemble: p.ensemble.unwrap_or(d.ensemble),
            propagation: p.propagation.unwrap_or(d.propagation),
            tomography: p.tomography.unwrap_or(d.tomography),
            population_readout: p.population_readout.unwrap_or(d.population_readout),
            optimizer: p.optimizer.unwrap_or(d.optimizer),
            score: p.score.unwrap_or(d.score),
            spectra: p.spectra.unwrap_or(d.spectra),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.tomography.validate()?;
        self.optimizer.validate()?;
        self.spectra.synth.validate()?;
        if !(self.population_readout.wait >= 0.0) {
            return Err(Error::invariant("population readout", "wait must be nonnegative"));
        }
        if self.spectra.fit.groups == 0 || !self.spectra.traces.is_multiple_of(self.spectra.fit.groups) {
            return Err(Error::invariant(
                "spectra",
                "traces must be a positive multiple of fit.groups",
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn level_system(&self) -> Result<LevelSystem> {
        self.levels.build()
    }

    pub fn model(&self) -> Result<ModelBundle> {
        ModelBundle::new(
            self.level_system()?,
            self.decoherence.build()?,
            self.ensemble.build()?,
            self.propagation.build()?,
        )
    }
}

pub const COEFFICIENTS_FORMAT: &str = "invpulse-coefficients v1";

/// On-disk form of [`AnsatzCoefficients`]; `a` lists `a1..a8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsDoc {
    pub format: String,
    pub a: [f64; 8],
    pub t_f: f64,
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
}

impl CoefficientsDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let d: CoefficientsDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if d.format != COEFFICIENTS_FORMAT {
            return Err(Error::Parse(format!(
                "unsupported coefficients format `{}`, expected `{COEFFICIENTS_FORMAT}`",
                d.format
            )));
        }
        Ok(d)
    }

    /// Validated coefficients; the endpoint conditions are not checked here.
    pub fn build(&self) -> Result<AnsatzCoefficients> {
        AnsatzCoefficients::new(self.a, self.t_f, self.theta, self.phi)
    }

    pub fn from_coefficients(a: &AnsatzCoefficients) -> Self {
        CoefficientsDoc {
            format: COEFFICIENTS_FORMAT.into(),
            a: a.a,
            t_f: a.t_f,
            theta: a.theta,
            phi: a.phi,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("coefficients serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_is_the_default() {
        let c = RunConfig::parse("format = \"invpulse-config v1\"\n").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn full_echo_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn coefficients_round_trip() {
        let a = AnsatzCoefficients::table1(crate::invariant::Table1Case::Case2, 1.0).unwrap();
        let doc = CoefficientsDoc::from_coefficients(&a);
        assert_eq!(CoefficientsDoc::parse(&doc.to_toml()).unwrap().build().unwrap(), a);
    }

    #[test]
    fn rejects_unknown_keys_and_formats() {
        assert!(RunConfig::parse("format = \"invpulse-config v2\"\n").is_err());
        assert!(RunConfig::parse("format = \"invpulse-config v1\"\nbogus = 1\n").is_err());
        let bad_t2 = "format = \"invpulse-config v1\"\n[decoherence]\nt1_optical = 164e-6\nt2_optical = 1e-3\nt2_spin = 500e-6\n";
        assert!(RunConfig::parse(bad_t2).is_err());
    }
}
