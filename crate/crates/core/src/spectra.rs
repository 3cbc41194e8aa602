//! Synthetic absorption spectra of the readout window, Gaussian peak fits and
//! peak-area to population conversion.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::levels::{ExcitedLevel, GroundLevel, LevelSystem, PEAKS};

pub const SPECTRUM_HEADER: &str = "# invpulse-spectrum v1";
pub const FIT_HEADER: &str = "# invpulse-peakfit v1";

/// Readout window, Hz on the transition-frequency axis (18.3 MHz wide).
pub const WINDOW_HZ: (f64, f64) = (-2.0e6, 16.3e6);

/// `area / (amplitude * fwhm)` for a Gaussian.
pub fn gaussian_area_factor() -> f64 {
    (PI / (4.0 * 2f64.ln())).sqrt()
}

fn gaussian(x: f64, center: f64, fwhm: f64) -> f64 {
    let u = (x - center) / fwhm;
    (-4.0 * 2f64.ln() * u * u).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    freq_hz: Vec<f64>,
    alpha_l: Vec<f64>,
}

impl Spectrum {
    pub fn new(freq_hz: Vec<f64>, alpha_l: Vec<f64>) -> Result<Self> {
        if freq_hz.len() != alpha_l.len() || freq_hz.len() < 2 {
            return Err(Error::invariant("spectrum", "need at least two (frequency, alphaL) pairs"));
        }
        if freq_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invariant("spectrum", "frequency grid must be strictly increasing"));
        }
        if alpha_l.iter().any(|a| !(a.is_finite())) {
            return Err(Error::invariant("spectrum", "alphaL must be finite"));
        }
        Ok(Spectrum { freq_hz, alpha_l })
    }

    pub fn freq_hz(&self) -> &[f64] {
        &self.freq_hz
    }

    pub fn alpha_l(&self) -> &[f64] {
        &self.alpha_l
    }

    pub fn mean(traces: &[Spectrum]) -> Result<Spectrum> {
        let first = traces
            .first()
            .ok_or_else(|| Error::invariant("spectrum", "no traces to average"))?;
        let mut acc = vec![0.0; first.alpha_l.len()];
        for t in traces {
            if t.freq_hz != first.freq_hz {
                return Err(Error::invariant("spectrum", "traces use different grids"));
            }
            for (a, v) in acc.iter_mut().zip(&t.alpha_l) {
                *a += v;
            }
        }
        let k = traces.len() as f64;
        Ok(Spectrum {
            freq_hz: first.freq_hz.clone(),
            alpha_l: acc.into_iter().map(|a| a / k).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOptions {
    pub fwhm_hz: f64,
    /// Standard deviation of additive noise, alphaL units.
    pub noise: f64,
    pub grid_step_hz: f64,
    /// Peak alphaL of a transition with unit population and unit oscillator strength.
    pub depth: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            fwhm_hz: 170e3,
            noise: 0.0,
            grid_step_hz: 10e3,
            depth: 1.0,
        }
    }
}

impl SynthOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_hz > 0.0) || !(self.grid_step_hz > 0.0) || !(self.depth > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::invariant(
                "spectrum options",
                "fwhm, grid step and depth must be positive and noise nonnegative",
            ));
        }
        Ok(())
    }
}

/// Peaks with their centres inside the window.
fn window_transitions(sys: &LevelSystem) -> Vec<(GroundLevel, ExcitedLevel, f64)> {
    let mut out = Vec::new();
    for g in GroundLevel::ALL {
        for e in ExcitedLevel::ALL {
            let f = sys.transition_frequency_hz(g, e);
            if f >= WINDOW_HZ.0 && f <= WINDOW_HZ.1 {
                out.push((g, e, f));
            }
        }
    }
    out
}

/// Ground populations `(aux, |1>, |0>)` to absorption spectrum. Each transition in
/// the window contributes a Gaussian of height `depth * P_g * f[g][e]`.
pub fn synthesize_spectrum(
    ground: [f64; 3],
    sys: &LevelSystem,
    opts: &SynthOptions,
    seed: u64,
) -> Result<Spectrum> {
    opts.validate()?;
    if ground.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invariant("spectrum", "populations must be nonnegative"));
    }
    let n = ((WINDOW_HZ.1 - WINDOW_HZ.0) / opts.grid_step_hz).round() as usize + 1;
    let freq: Vec<f64> = (0..n).map(|i| WINDOW_HZ.0 + i as f64 * opts.grid_step_hz).collect();
    let lines: Vec<(f64, f64)> = window_transitions(sys)
        .into_iter()
        .map(|(g, e, f)| (f, opts.depth * ground[g.index()] * sys.strength(g, e)))
        .filter(|&(_, h)| h > 0.0)
        .collect();
    let mut alpha: Vec<f64> = freq
        .iter()
        .map(|&x| lines.iter().map(|&(c, h)| h * gaussian(x, c, opts.fwhm_hz)).sum())
        .collect();
    if opts.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, opts.noise).expect("noise is positive and finite");
        for a in &mut alpha {
            *a += normal.sample(&mut rng);
        }
    }
    Spectrum::new(freq, alpha)
}

/// `count` independent noisy traces, trace `k` seeded with `seed + k`.
pub fn synthesize_traces(
    ground: [f64; 3],
    sys: &LevelSystem,
    opts: &SynthOptions,
    seed: u64,
    count: usize,
) -> Result<Vec<Spectrum>> {
    (0..count)
        .map(|k| synthesize_spectrum(ground, sys, opts, seed.wrapping_add(k as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    /// 1-based peak number in the window.
    pub peak: usize,
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub amplitude: f64,
    pub area: f64,
    /// Half-width of the 68% confidence interval of `area`.
    pub area_uncertainty: f64,
    /// Centre and width were held at their nominal values in at least one group.
    pub shape_fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    pub groups: usize,
    /// Starting width and the width used when the shape is held fixed.
    pub fwhm_guess_hz: f64,
    /// Half-width of the fit region, in units of `fwhm_guess_hz`, before
    /// clipping at the midpoint to neighbouring peaks.
    pub region_fwhms: f64,
    /// Below this amplitude-to-error ratio the centre and width are not fitted.
    pub min_significance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            groups: 5,
            fwhm_guess_hz: 170e3,
            region_fwhms: 3.0,
            min_significance: 5.0,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SingleFit {
    center: f64,
    fwhm: f64,
    amplitude: f64,
    area: f64,
    area_sigma: f64,
    shape_fixed: bool,
}

/// Student-t multiplier for a central interval with the one-sigma normal coverage.
fn t68(dof: usize) -> f64 {
    let p = statrs::distribution::Normal::standard().cdf(1.0);
    StudentsT::new(0.0, 1.0, dof.max(1) as f64).map_or(1.0, |t| t.inverse_cdf(p))
}

/// Linear amplitude fit with centre and width fixed.
fn fit_amplitude_only(x: &[f64], y: &[f64], center: f64, fwhm: f64) -> Result<SingleFit> {
    let g: Vec<f64> = x.iter().map(|&xi| gaussian(xi, center, fwhm)).collect();
    let gg: f64 = g.iter().map(|v| v * v).sum();
    if !(gg > 0.0) {
        return Err(Error::invariant("peak fit", "empty fit region"));
    }
    let a = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum::<f64>() / gg;
    let rss: f64 = g.iter().zip(y).map(|(gi, yi)| (yi - a * gi).powi(2)).sum();
    let dof = x.len().saturating_sub(1).max(1);
    let sigma_a = (rss / dof as f64 / gg).sqrt() * t68(dof);
    let k = gaussian_area_factor() * fwhm;
    Ok(SingleFit {
        center,
        fwhm,
        amplitude: a,
        area: a * k,
        area_sigma: sigma_a * k,
        shape_fixed: true,
    })
}

/// Levenberg-Marquardt fit of `a exp(-4 ln2 (x - c)^2 / w^2)` in coordinates
/// scaled by the starting width.
fn fit_gaussian(x: &[f64], y: &[f64], c0: f64, w0: f64, max_iter: usize) -> Option<SingleFit> {
    let u: Vec<f64> = x.iter().map(|&xi| (xi - c0) / w0).collect();
    let l2 = 4.0 * 2f64.ln();
    let a0 = y.iter().cloned().fold(f64::MIN, f64::max);
    if !(a0 > 0.0) {
        return None;
    }
    // p = (a, du, s): centre c0 + du w0, width s w0
    let mut p = Vector3::new(a0, 0.0, 1.0);
    let model = |p: &Vector3<f64>, ui: f64| {
        let z = (ui - p[1]) / p[2];
        let e = (-l2 * z * z).exp();
        (p[0] * e, Vector3::new(e, p[0] * e * 2.0 * l2 * z / p[2], p[0] * e * 2.0 * l2 * z * z / p[2]))
    };
    let normal_eq = |p: &Vector3<f64>| {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        let mut rss = 0.0;
        for (&ui, &yi) in u.iter().zip(y) {
            let (m, j) = model(p, ui);
            let r = yi - m;
            jtj += j * j.transpose();
            jtr += j * r;
            rss += r * r;
        }
        (jtj, jtr, rss)
    };
    let (mut jtj, mut jtr, mut rss) = normal_eq(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..max_iter {
        let mut damped = jtj;
        for i in 0..3 {
            damped[(i, i)] *= 1.0 + lambda;
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let trial = p + step;
        if !(trial[2] > 0.05) || !trial.iter().all(|v| v.is_finite()) {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
            continue;
        }
        let (tj, tr, trss) = normal_eq(&trial);
        if trss <= rss {
            let small = step.abs().max() < 1e-12 * (1.0 + p.abs().max()) || rss - trss <= 1e-15 * rss;
            p = trial;
            jtj = tj;
            jtr = tr;
            rss = trss;
            lambda = (lambda * 0.3).max(1e-12);
            if small {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    if !converged || !(p[0] > 0.0) {
        return None;
    }
    let dof = u.len().saturating_sub(3).max(1);
    let cov = jtj.try_inverse()? * (rss / dof as f64);
    let k = gaussian_area_factor();
    // area = a * s * w0 * k
    let grad = Vector3::new(p[2] * w0 * k, 0.0, p[0] * w0 * k);
    let var = (grad.transpose() * cov * grad)[(0, 0)];
    if !(var >= 0.0) || !(cov[(0, 0)] >= 0.0) {
        return None;
    }
    let fwhm = p[2] * w0;
    Some(SingleFit {
        center: c0 + p[1] * w0,
        fwhm,
        amplitude: p[0],
        area: p[0] * fwhm * k,
        area_sigma: var.sqrt() * t68(dof),
        shape_fixed: false,
    })
    .filter(|f| {
        let sigma_a = cov[(0, 0)].sqrt();
        f.amplitude > 0.0 && sigma_a.is_finite() && (f.center - c0).abs() < 2.0 * w0
    })
}

/// Fits one averaged spectrum; one result per entry of [`PEAKS`] inside the window.
fn fit_group(spec: &Spectrum, sys: &LevelSystem, opts: &FitOptions, group: usize) -> Result<Vec<SingleFit>> {
    let centers: Vec<f64> = PEAKS
        .iter()
        .map(|&(g, e)| sys.transition_frequency_hz(g, e))
        .collect();
    let all: Vec<f64> = window_transitions(sys).into_iter().map(|t| t.2).collect();
    let mut out = Vec::with_capacity(centers.len());
    for (k, &c) in centers.iter().enumerate() {
        let nearest = all
            .iter()
            .filter(|&&o| (o - c).abs() > 1.0)
            .map(|&o| (o - c).abs())
            .fold(f64::INFINITY, f64::min);
        let half = (opts.region_fwhms * opts.fwhm_guess_hz).min(0.5 * nearest);
        let (x, y): (Vec<f64>, Vec<f64>) = spec
            .freq_hz
            .iter()
            .zip(&spec.alpha_l)
            .filter(|(f, _)| (**f - c).abs() <= half)
            .map(|(f, a)| (*f, *a))
            .unzip();
        if x.len() < 6 {
            return Err(Error::FitFailed {
                group,
                peak: k + 1,
                reason: format!("only {} samples in the fit region", x.len()),
            });
        }
        let fixed = fit_amplitude_only(&x, &y, c, opts.fwhm_guess_hz).map_err(|e| Error::FitFailed {
            group,
            peak: k + 1,
            reason: e.to_string(),
        })?;
        let significant = fixed.area_sigma == 0.0 && fixed.amplitude > 0.0
            || fixed.area > opts.min_significance * fixed.area_sigma;
        let fit = if significant {
            fit_gaussian(&x, &y, c, opts.fwhm_guess_hz, opts.max_iterations).ok_or_else(|| Error::FitFailed {
                group,
                peak: k + 1,
                reason: "Gaussian fit did not converge".into(),
            })?
        } else {
            fixed
        };
        out.push(fit);
    }
    Ok(out)
}

/// Splits the traces into `opts.groups` consecutive groups, averages and fits
/// each group, then reports the mean area and the mean per-group uncertainty.
pub fn fit_peaks(traces: &[Spectrum], sys: &LevelSystem, opts: &FitOptions) -> Result<Vec<PeakFit>> {
    if opts.groups == 0 || traces.is_empty() || !traces.len().is_multiple_of(opts.groups) {
        return Err(Error::invariant(
            "peak fit",
            format!("{} traces cannot be split into {} equal groups", traces.len(), opts.groups),
        ));
    }
    let size = traces.len() / opts.groups;
    let per_group: Vec<Vec<SingleFit>> = traces
        .chunks(size)
        .enumerate()
        .map(|(g, chunk)| fit_group(&Spectrum::mean(chunk)?, sys, opts, g + 1))
        .collect::<Result<_>>()?;
    let k = opts.groups as f64;
    Ok((0..per_group[0].len())
        .map(|p| {
            let fits: Vec<&SingleFit> = per_group.iter().map(|g| &g[p]).collect();
            let mean = |f: &dyn Fn(&SingleFit) -> f64| fits.iter().map(|s| f(s)).sum::<f64>() / k;
            let amplitude = mean(&|s| s.amplitude);
            let fwhm = mean(&|s| s.fwhm);
            PeakFit {
                peak: p + 1,
                center_hz: mean(&|s| s.center),
                fwhm_hz: fwhm,
                amplitude,
                area: amplitude * fwhm * gaussian_area_factor(),
                area_uncertainty: mean(&|s| s.area_sigma),
                shape_fixed: fits.iter().any(|s| s.shape_fixed),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub p0: f64,
    pub p0_uncertainty: f64,
    pub p1: f64,
    pub p1_uncertainty: f64,
}

fn area_of(fits: &[PeakFit], peak: usize) -> Result<(f64, f64)> {
    fits.iter()
        .find(|f| f.peak == peak)
        .map(|f| (f.area, f.area_uncertainty))
        .ok_or_else(|| Error::invariant("populations", format!("no fit for peak {peak}")))
}

/// Normalized qubit populations from peaks 1, 2 (`|0>`) and 4, 5 (`|1>`).
pub fn populations_from_areas(fits: &[PeakFit], sys: &LevelSystem) -> Result<PopulationEstimate> {
    let strength = |peak: usize| {
        let (g, e) = PEAKS[peak - 1];
        sys.strength(g, e)
    };
    for p in [1, 2, 4, 5] {
        if !(strength(p) > 0.0) {
            return Err(Error::invariant("populations", format!("peak {p} has zero oscillator strength")));
        }
    }
    let half_sum = |a: usize, b: usize| -> Result<(f64, f64)> {
        let (xa, sa) = area_of(fits, a)?;
        let (xb, sb) = area_of(fits, b)?;
        let (fa, fb) = (strength(a), strength(b));
        Ok((
            0.5 * (xa / fa + xb / fb),
            0.5 * ((sa / fa).powi(2) + (sb / fb).powi(2)).sqrt(),
        ))
    };
    let (pz, sz) = half_sum(1, 2)?;
    let (po, so) = half_sum(4, 5)?;
    let total = pz + po;
    if total == 0.0 || !total.is_finite() {
        return Err(Error::ZeroPopulation);
    }
    let p0 = pz / total;
    let sigma = ((po * sz).powi(2) + (pz * so).powi(2)).sqrt() / (total * total);
    Ok(PopulationEstimate {
        p0,
        p0_uncertainty: sigma,
        p1: 1.0 - p0,
        p1_uncertainty: sigma,
    })
}

pub fn format_spectrum(s: &Spectrum) -> String {
    let mut out = String::with_capacity(32 * s.freq_hz.len());
    out.push_str(SPECTRUM_HEADER);
    out.push_str("\n# freq_hz alpha_l\n");
    for (f, a) in s.freq_hz.iter().zip(&s.alpha_l) {
        let _ = writeln!(out, "{f:.6e} {a:.12e}");
    }
    out
}

pub fn parse_spectrum(text: &str) -> Result<Spectrum> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SPECTRUM_HEADER) {
        return Err(Error::Parse(format!("missing header line `{SPECTRUM_HEADER}`")));
    }
    let (mut f, mut a) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))
        };
        if cols.len() != 2 {
            return Err(Error::Parse(format!("line {}: expected 2 columns", i + 2)));
        }
        f.push(parse(cols[0])?);
        a.push(parse(cols[1])?);
    }
    Spectrum::new(f, a)
}

pub fn write_spectrum(path: &Path, s: &Spectrum) -> Result<()> {
    Ok(std::fs::write(path, format_spectrum(s))?)
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    parse_spectrum(&std::fs::read_to_string(path)?)
}

/// Per-peak rows followed by the population estimate, if any.
pub fn format_fit_report(fits: &[PeakFit], pops: Option<&PopulationEstimate>) -> String {
    let mut out = String::new();
    out.push_str(FIT_HEADER);
    out.push_str("\n# peak center_hz fwhm_hz amplitude area area_uncertainty shape_fixed\n");
    for f in fits {
        let _ = writeln!(
            out,
            "{} {:.6e} {:.6e} {:.9e} {:.9e} {:.9e} {}",
            f.peak, f.center_hz, f.fwhm_hz, f.amplitude, f.area, f.area_uncertainty, f.shape_fixed
        );
    }
    if let Some(p) = pops {
        let _ = writeln!(out, "# p0 {:.9} {:.9}", p.p0, p.p0_uncertainty);
        let _ = writeln!(out, "# p1 {:.9} {:.9}", p.p1, p.p1_uncertainty);
    }
    out
}
