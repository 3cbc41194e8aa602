//! Search over the six free ansatz coefficients.
//!
//! `a7` and `a8` are always solved from the endpoint conditions, so every
//! candidate synthesizes pulses that start and end at zero amplitude. The
//! search is simulated annealing followed by a Nelder-Mead simplex started at
//! the best annealing point, both confined to a box.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DensityState, ModelBundle, TwoToneField};
use crate::error::{Error, Result};
use crate::invariant::{synthesize_samples, AnsatzCoefficients, DEFAULT_SAMPLES};
use crate::levels::{EnsembleSpec, GroundLevel, Member};

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Bounds {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::invariant("bounds", "lo and hi must be nonempty and equally long"));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l <= h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::invariant("bounds", format!("empty interval [{l}, {h}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| (*l..=*h).contains(v))
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub sa_iterations: usize,
    pub sa_initial_temperature: f64,
    /// Geometric temperature factor per iteration.
    pub sa_cooling: f64,
    /// Per-coordinate standard deviation of the proposal at the initial temperature.
    pub sa_step: f64,
    pub simplex_tol: f64,
    pub simplex_max_evals: usize,
    pub seed: u64,
    pub bounds: Bounds,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            sa_iterations: 300,
            sa_initial_temperature: 0.05,
            sa_cooling: 0.98,
            sa_step: 0.05,
            simplex_tol: 1e-5,
            simplex_max_evals: 400,
            seed: 1,
            bounds: Bounds::uniform(6, -1.5, 1.5),
        }
    }
}

impl OptimizerSettings {
    /// Longer, wider anneal for searches from a random start; the default
    /// schedule only explores the neighborhood of its starting point.
    pub fn global(seed: u64) -> Self {
        OptimizerSettings {
            sa_iterations: 3000,
            sa_initial_temperature: 0.01,
            sa_cooling: 0.998,
            sa_step: 0.3,
            simplex_max_evals: 1000,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        let positive = [
            ("sa_initial_temperature", self.sa_initial_temperature),
            ("sa_step", self.sa_step),
            ("simplex_tol", self.simplex_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invariant("optimizer settings", format!("{name} must be positive")));
            }
        }
        if !(self.sa_cooling > 0.0 && self.sa_cooling <= 1.0) {
            return Err(Error::invariant("optimizer settings", "sa_cooling must lie in (0, 1]"));
        }
        if self.simplex_max_evals == 0 && self.sa_iterations == 0 {
            return Err(Error::invariant("optimizer settings", "no evaluation budget"));
        }
        Ok(())
    }
}

/// Outcome of a box-constrained minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value seen after each evaluation; nonincreasing.
    pub history: Vec<f64>,
    /// Candidates whose evaluation failed numerically and were treated as infinitely bad.
    pub infeasible: usize,
    /// The start point lay outside the box and was projected into it.
    pub start_outside_bounds: bool,
}

struct Tracker<F> {
    f: F,
    best_x: Vec<f64>,
    best: f64,
    history: Vec<f64>,
    infeasible: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Tracker<F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let v = match (self.f)(x) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                self.infeasible += 1;
                f64::INFINITY
            }
            Err(e) if e.is_numerical() => {
                self.infeasible += 1;
                f64::INFINITY
            }
            Err(e) => return Err(e),
        };
        if v < self.best {
            self.best = v;
            self.best_x = x.to_vec();
        }
        self.history.push(self.best);
        Ok(v)
    }
}

/// Simulated annealing followed by Nelder-Mead, inside `settings.bounds`.
/// Numerical failures count as infeasible; any other error aborts the search.
pub fn minimize<F>(f: F, start: &[f64], settings: &OptimizerSettings) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    settings.validate()?;
    let bounds = &settings.bounds;
    if start.len() != bounds.dim() {
        return Err(Error::invariant("optimizer", "start point and bounds differ in dimension"));
    }
    let mut x0 = start.to_vec();
    let start_outside_bounds = !bounds.contains(&x0);
    bounds.clamp(&mut x0);
    let mut t = Tracker {
        f,
        best_x: x0.clone(),
        best: f64::INFINITY,
        history: Vec::new(),
        infeasible: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    // annealing
    let mut cur = x0.clone();
    let mut cur_v = t.eval(&cur)?;
    let mut temp = settings.sa_initial_temperature;
    for _ in 0..settings.sa_iterations {
        let scale = settings.sa_step * (temp / settings.sa_initial_temperature).sqrt();
        let mut cand: Vec<f64> = cur
            .iter()
            .map(|v| v + scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        bounds.clamp(&mut cand);
        let v = t.eval(&cand)?;
        let accept = v <= cur_v || rng.random::<f64>() < (-(v - cur_v) / temp).exp();
        if accept {
            cur = cand;
            cur_v = v;
        }
        temp *= settings.sa_cooling;
    }

    // simplex refinement from the best point so far
    if settings.simplex_max_evals > 0 {
        let from = t.best_x.clone();
        let step: Vec<f64> = (0..bounds.dim())
            .map(|i| settings.sa_step.min(0.5 * bounds.width(i)).max(1e-12))
            .collect();
        nelder_mead(&mut t, &from, &step, bounds, settings.simplex_tol, settings.simplex_max_evals)?;
    }

    if !t.best.is_finite() {
        return Err(Error::NoFeasiblePoint(format!(
            "all {} evaluations failed",
            t.history.len()
        )));
    }
    Ok(Minimum {
        x: t.best_x,
        value: t.best,
        history: t.history,
        infeasible: t.infeasible,
        start_outside_bounds,
    })
}

/// Nelder-Mead with standard coefficients; trial points are projected into the box.
fn nelder_mead<F: FnMut(&[f64]) -> Result<f64>>(
    t: &mut Tracker<F>,
    x0: &[f64],
    step: &[f64],
    bounds: &Bounds,
    tol: f64,
    max_evals: usize,
) -> Result<()> {
    let n = x0.len();
    let budget_end = t.history.len() + max_evals;
    let project = |mut x: Vec<f64>| {
        bounds.clamp(&mut x);
        x
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = t.eval(x0)?;
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        // step away from the nearer wall so the vertex stays distinct after projection
        x[i] += if x[i] + step[i] <= bounds.hi[i] { step[i] } else { -step[i] };
        let x = project(x);
        let v = t.eval(&x)?;
        simplex.push((x, v));
    }
    let lerp = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect()
    };
    while t.history.len() < budget_end {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_spread = simplex[n].1 - simplex[0].1;
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= tol && x_spread <= tol {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let xr = project(lerp(&centroid, &worst.0, -1.0));
        let fr = t.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = project(lerp(&centroid, &worst.0, -2.0));
            let fe = t.eval(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = project(lerp(&centroid, &xr, 0.5));
                let fc = t.eval(&xc)?;
                (xc, fc)
            } else {
                let xc = project(lerp(&centroid, &worst.0, 0.5));
                let fc = t.eval(&xc)?;
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let xs = lerp(&best, &vertex.0, 0.5);
                    let fs = t.eval(&xs)?;
                    *vertex = (xs, fs);
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pulse score
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSpec {
    pub band_halfwidth_hz: f64,
    /// Quadrature nodes drawn for the band before restricting to it.
    pub band_samples: usize,
    pub spectator_weight: f64,
    /// Target ket in the `(|1>, |e>, |0>)` basis.
    pub target: Vector3<Complex64>,
    pub initial: GroundLevel,
    /// Samples per synthesized pulse.
    pub samples: usize,
}

impl ScoreSpec {
    /// Score of a transfer from `|1>` to the coefficients' own target state.
    pub fn for_coefficients(a: &AnsatzCoefficients) -> Self {
        ScoreSpec {
            band_halfwidth_hz: 500e3,
            band_samples: 9,
            spectator_weight: 1.0,
            target: a.target_state(),
            initial: GroundLevel::One,
            samples: DEFAULT_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_halfwidth_hz > 0.0) {
            return Err(Error::invariant("score", "band_halfwidth must be positive"));
        }
        if self.band_samples == 0 {
            return Err(Error::invariant("score", "band_samples must be at least 1"));
        }
        if !(self.spectator_weight >= 0.0) {
            return Err(Error::invariant("score", "spectator_weight must be nonnegative"));
        }
        let n = self.target.norm();
        if !((n - 1.0).abs() < 1e-9) {
            return Err(Error::invariant("score", format!("target norm {n} is not 1")));
        }
        Ok(())
    }

    /// Ensemble quadrature with `band_samples` nodes, restricted to the band and renormalized.
    pub fn band_members(&self, ensemble: &EnsembleSpec) -> Result<Vec<Member>> {
        let spec = EnsembleSpec {
            n_members: self.band_samples,
            ..ensemble.clone()
        };
        spec.validate()?;
        let inside: Vec<Member> = spec
            .members()
            .into_iter()
            .filter(|m| m.detuning_hz.abs() <= self.band_halfwidth_hz)
            .collect();
        let total: f64 = inside.iter().map(|m| m.weight).sum();
        if inside.is_empty() || !(total > 0.0) {
            return Err(Error::invariant("score", "no quadrature node inside the band"));
        }
        Ok(inside
            .into_iter()
            .map(|m| Member {
                weight: m.weight / total,
                ..m
            })
            .collect())
    }
}

/// Break-down of one score evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: f64,
    /// Weighted `||rho_qubit - rho_target||_F^2` over the band.
    pub distance: f64,
    /// Weighted fidelity to the target over the band.
    pub band_fidelity: f64,
    pub spectator_excitation: f64,
}

/// Weighted squared distance of the final qubit block to the target projector,
/// plus the spectator penalty. Lower is better.
pub fn score(a: &AnsatzCoefficients, spec: &ScoreSpec, model: &ModelBundle) -> Result<f64> {
    Ok(score_report(a, spec, model)?.score)
}

pub fn score_report(a: &AnsatzCoefficients, spec: &ScoreSpec, model: &ModelBundle) -> Result<ScoreReport> {
    spec.validate()?;
    a.check_constraints(crate::invariant::CONSTRAINT_TOLERANCE)?;
    let pulses = synthesize_samples(a, spec.samples)?;
    score_field(&pulses, spec, model)
}

/// As [`score_report`] for an arbitrary field.
pub fn score_field(field: &dyn TwoToneField, spec: &ScoreSpec, model: &ModelBundle) -> Result<ScoreReport> {
    spec.validate()?;
    let members = spec.band_members(&model.ensemble)?;
    let target = model.embed(&spec.target);
    let q = [GroundLevel::One.index(), GroundLevel::Zero.index()];
    let start = DensityState::ground(spec.initial);
    let per = model.map_members(&members, |m| {
        let rho = m.propagate(&start, field, &model.settings)?;
        let mut d = 0.0;
        for &i in &q {
            for &j in &q {
                let tgt = target[i] * target[j].conj();
                d += (rho.matrix()[(i, j)] - tgt).norm_sqr();
            }
        }
        Ok((d, rho.overlap(&target)))
    })?;
    let distance: f64 = members.iter().zip(&per).map(|(m, p)| m.weight * p.0).sum();
    let band_fidelity: f64 = members.iter().zip(&per).map(|(m, p)| m.weight * p.1).sum();
    let spectator_excitation = if spec.spectator_weight > 0.0 {
        crate::dynamics::spectator_excitation(field, model)?
    } else {
        0.0
    };
    Ok(ScoreReport {
        score: distance + spec.spectator_weight * spectator_excitation,
        distance,
        band_fidelity,
        spectator_excitation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: AnsatzCoefficients,
    pub best_score: f64,
    pub history: Vec<f64>,
    pub infeasible: usize,
    /// Set when the start point was outside the box; the result is the best point inside it.
    pub warning: Option<String>,
}

/// Optimizes the free coefficients of `initial`, keeping its `t_f`, `theta` and `phi`.
pub fn optimize(
    initial: &AnsatzCoefficients,
    spec: &ScoreSpec,
    settings: &OptimizerSettings,
    model: &ModelBundle,
) -> Result<OptimizeResult> {
    spec.validate()?;
    if settings.bounds.dim() != 6 {
        return Err(Error::invariant("optimizer", "bounds must cover the six free coefficients"));
    }
    let build = |x: &[f64]| {
        AnsatzCoefficients::from_free(
            std::array::from_fn(|i| x[i]),
            initial.t_f,
            initial.theta,
            initial.phi,
        )
    };
    let m = minimize(|x| score(&build(x)?, spec, model), &initial.free(), settings)?;
    let warning = m
        .start_outside_bounds
        .then(|| "initial coefficients lie outside the bounds; result is the best point inside".to_string());
    Ok(OptimizeResult {
        best: build(&m.x)?,
        best_score: m.value,
        history: m.history,
        infeasible: m.infeasible,
        warning,
    })
}

/// Runs `chains` independent optimizations from random starts, chain `k` with
/// seed `settings.seed + k`, and keeps the one with the lowest score.
pub fn multi_start(
    template: &AnsatzCoefficients,
    spec: &ScoreSpec,
    settings: &OptimizerSettings,
    chains: usize,
    model: &ModelBundle,
) -> Result<OptimizeResult> {
    if chains == 0 {
        return Err(Error::invariant("optimizer", "at least one chain is required"));
    }
    let mut best: Option<OptimizeResult> = None;
    for k in 0..chains as u64 {
        let s = OptimizerSettings {
            seed: settings.seed.wrapping_add(k),
            ..settings.clone()
        };
        let x = random_start(&s.bounds, s.seed);
        let start = AnsatzCoefficients::from_free(
            std::array::from_fn(|i| x[i]),
            template.t_f,
            template.theta,
            template.phi,
        )?;
        let r = optimize(&start, spec, &s, model)?;
        if best.as_ref().is_none_or(|b| r.best_score < b.best_score) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one chain ran"))
}

/// Uniform draw of the free coefficients inside `bounds`.
pub fn random_start(bounds: &Bounds, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..bounds.dim())
        .map(|i| {
            if bounds.width(i) > 0.0 {
                rng.random_range(bounds.lo[i]..=bounds.hi[i])
            } else {
                bounds.lo[i]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<f64> {
        Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
    }

    fn settings2(seed: u64) -> OptimizerSettings {
        OptimizerSettings {
            sa_iterations: 200,
            sa_initial_temperature: 1.0,
            sa_cooling: 0.97,
            sa_step: 0.3,
            simplex_tol: 1e-10,
            simplex_max_evals: 2000,
            seed,
            bounds: Bounds::uniform(2, -2.0, 2.0),
        }
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], &settings2(3)).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(!m.start_outside_bounds);
    }

    #[test]
    fn same_seed_same_answer() {
        let a = minimize(rosenbrock, &[0.3, -0.4], &settings2(9)).unwrap();
        let b = minimize(rosenbrock, &[0.3, -0.4], &settings2(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn simplex_only_never_worsens_start() {
        let s = OptimizerSettings {
            sa_iterations: 0,
            simplex_max_evals: 50,
            ..settings2(0)
        };
        let start = [0.5, 0.9];
        let m = minimize(rosenbrock, &start, &s).unwrap();
        assert!(m.value <= rosenbrock(&start).unwrap());
    }

    #[test]
    fn box_is_respected_and_flagged() {
        // minimum at (1, 1) lies outside [-2, -1]^2
        let s = OptimizerSettings {
            bounds: Bounds::uniform(2, -2.0, -1.0),
            ..settings2(5)
        };
        let m = minimize(rosenbrock, &[1.0, 1.0], &s).unwrap();
        assert!(m.start_outside_bounds);
        assert!(s.bounds.contains(&m.x));
        assert!((m.x[0] + 1.0).abs() < 1e-3 && (m.x[1] + 1.0).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn numerical_failures_are_infeasible_and_others_abort() {
        let s = settings2(1);
        let m = minimize(
            |x| {
                if x[0] > 0.5 {
                    Err(Error::ZeroPopulation)
                } else {
                    Ok((x[0] - 0.2).powi(2) + x[1] * x[1])
                }
            },
            &[0.0, 0.0],
            &s,
        )
        .unwrap();
        assert!(m.value < 1e-8);
        let r = minimize(|_| Err(Error::Parse("x".into())), &[0.0, 0.0], &s);
        assert!(matches!(r, Err(Error::Parse(_))));
        let r = minimize(|_| Err(Error::ZeroPopulation), &[0.0, 0.0], &s);
        assert!(matches!(r, Err(Error::NoFeasiblePoint(_))));
    }

    #[test]
    fn settings_validation() {
        let mut s = OptimizerSettings::default();
        assert!(s.validate().is_ok());
        s.bounds = Bounds::uniform(6, 1.0, -1.0);
        assert!(s.validate().is_err());
        s = OptimizerSettings {
            sa_cooling: 1.5,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn random_start_is_inside_and_seeded() {
        let b = Bounds::uniform(6, -1.0, 0.5);
        let x = random_start(&b, 4);
        assert!(b.contains(&x));
        assert_eq!(x, random_start(&b, 4));
        assert_ne!(x, random_start(&b, 5));
    }
}
