//! Lewis-Riesenfeld inverse engineering for the three-level Lambda system.
//!
//! The auxiliary angles are
//!
//! ```text
//! gamma(t) = pi t / t_f + sum_{n=1..8} a_n sin(n pi t / t_f)
//! beta(t)  = (pi - theta) / 2 * (1 - cos gamma(t))
//! ```
//!
//! and the two Rabi envelopes follow in closed form from `gamma`, `beta` and
//! `d gamma / dt`. With these envelopes the null eigenvector of the invariant
//! is itself a solution of the Schrodinger equation, so `|1>` is carried to
//! `sin(theta)|0> + cos(theta) e^{i phi}|1>` at `t_f` for any coefficients.
//!
//! Three-level vectors and matrices use the basis `(|1>, |e>, |0>)` and
//! angular-frequency units (hbar = 1).

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance on the printed-digit endpoint constraints.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-3;

/// Smallest number of grid intervals accepted for synthesis (8 per harmonic, highest harmonic 8).
pub const MIN_INTERVALS: usize = 64;

pub const DEFAULT_T_F: f64 = 4e-6;
pub const DEFAULT_SAMPLES: usize = 1024;

/// Published optimized coefficient sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table1Case {
    /// `|1> -> |0>` population transfer.
    Case1,
    /// `|1> ->` equal superposition.
    Case2,
    /// Superposition back to `|1>`; used time-reversed.
    Case3,
}

impl Table1Case {
    pub const ALL: [Table1Case; 3] = [Table1Case::Case1, Table1Case::Case2, Table1Case::Case3];

    /// Coefficients `a_1..a_8` exactly as printed (four decimals).
    pub fn printed(self) -> [f64; 8] {
        match self {
            Table1Case::Case1 => [-0.9911, -0.5120, 0.4216, 0.1530, 0.0056, -0.0350, -0.0431, -0.0472],
            Table1Case::Case2 => [-1.0368, -0.4374, 0.2435, -0.0359, -0.0008, 0.0284, 0.0443, -0.0190],
            Table1Case::Case3 => [-0.9672, -0.3908, 0.1210, 0.1057, -0.0242, -0.0625, 0.1036, -0.0333],
        }
    }

    /// Target polar angle the case was optimized for.
    pub fn theta(self) -> f64 {
        match self {
            Table1Case::Case1 => PI / 2.0,
            Table1Case::Case2 | Table1Case::Case3 => PI / 4.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Table1Case::Case1 => "table1-case1",
            Table1Case::Case2 => "table1-case2",
            Table1Case::Case3 => "table1-case3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// Free parameters of one shortcut pulse pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnsatzCoefficients {
    pub a: [f64; 8],
    pub t_f: f64,
    pub theta: f64,
    pub phi: f64,
}

impl AnsatzCoefficients {
    pub fn new(a: [f64; 8], t_f: f64, theta: f64, phi: f64) -> Result<Self> {
        let c = AnsatzCoefficients { a, t_f, theta, phi };
        c.validate()?;
        Ok(c)
    }

    /// Printed coefficients of a published case, 4 us long, at its design `theta`.
    pub fn table1(case: Table1Case, phi: f64) -> Result<Self> {
        Self::new(case.printed(), DEFAULT_T_F, case.theta(), phi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_f > 0.0) || !self.t_f.is_finite() {
            return Err(Error::invariant("ansatz", "t_f must be positive"));
        }
        if !(0.0..=PI).contains(&self.theta) {
            return Err(Error::invariant("ansatz", format!("theta = {} outside [0, pi]", self.theta)));
        }
        if !(0.0..TAU).contains(&self.phi) {
            return Err(Error::invariant("ansatz", format!("phi = {} outside [0, 2 pi)", self.phi)));
        }
        if self.a.iter().any(|x| !x.is_finite()) {
            return Err(Error::invariant("ansatz", "coefficients must be finite"));
        }
        Ok(())
    }

    /// Residuals of the odd (`a1 + 3a3 + 5a5 + 7a7 = 0`) and even
    /// (`a2 + 2a4 + 3a6 + 4a8 = -1/2`) endpoint conditions.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let a = &self.a;
        let odd = a[0] + 3.0 * a[2] + 5.0 * a[4] + 7.0 * a[6];
        let even = a[1] + 2.0 * a[3] + 3.0 * a[5] + 4.0 * a[7] + 0.5;
        (odd, even)
    }

    /// Errors if either endpoint condition is off by more than `tol`.
    pub fn check_constraints(&self, tol: f64) -> Result<()> {
        let (odd, even) = self.constraint_residuals();
        if odd.abs() > tol {
            return Err(Error::Constraint {
                constraint: "odd endpoint condition a1 + 3a3 + 5a5 + 7a7 = 0",
                residual: odd,
                tolerance: tol,
            });
        }
        if even.abs() > tol {
            return Err(Error::Constraint {
                constraint: "even endpoint condition a2 + 2a4 + 3a6 + 4a8 = -0.5",
                residual: even,
                tolerance: tol,
            });
        }
        Ok(())
    }

    /// Re-solves `a7` and `a8` so both endpoint conditions hold exactly.
    pub fn with_exact_constraints(mut self) -> Self {
        let a = &mut self.a;
        a[6] = -(a[0] + 3.0 * a[2] + 5.0 * a[4]) / 7.0;
        a[7] = (-0.5 - a[1] - 2.0 * a[3] - 3.0 * a[5]) / 4.0;
        self
    }

    /// Builds coefficients from the six free values `a1..a6`; `a7`, `a8` are eliminated.
    pub fn from_free(free: [f64; 6], t_f: f64, theta: f64, phi: f64) -> Result<Self> {
        let mut a = [0.0; 8];
        a[..6].copy_from_slice(&free);
        Ok(Self::new(a, t_f, theta, phi)?.with_exact_constraints())
    }

    pub fn free(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.a[i])
    }

    /// Target state `sin(theta)|0> + cos(theta) e^{i phi}|1>` in the `(|1>, |e>, |0>)` basis.
    pub fn target_state(&self) -> Vector3<Complex64> {
        Vector3::new(
            Complex64::from_polar(self.theta.cos(), self.phi),
            Complex64::new(0.0, 0.0),
            Complex64::new(self.theta.sin(), 0.0),
        )
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.t_f;
        if !(t >= -slack && t <= self.t_f + slack) {
            return Err(Error::TimeOutOfRange { t, t_f: self.t_f });
        }
        Ok(t.clamp(0.0, self.t_f))
    }

    fn gamma_unchecked(&self, t: f64) -> f64 {
        let x = PI * t / self.t_f;
        self.a
            .iter()
            .enumerate()
            .fold(x, |acc, (k, an)| acc + an * ((k + 1) as f64 * x).sin())
    }

    fn gamma_dot_unchecked(&self, t: f64) -> f64 {
        let w = PI / self.t_f;
        let x = w * t;
        let series: f64 = self
            .a
            .iter()
            .enumerate()
            .map(|(k, an)| {
                let n = (k + 1) as f64;
                an * n * (n * x).cos()
            })
            .sum();
        w * (1.0 + series)
    }

    fn beta_of_gamma(&self, gamma: f64) -> f64 {
        0.5 * (PI - self.theta) * (1.0 - gamma.cos())
    }

    /// Envelope pair from the closed-form relations at time `t`.
    fn rabi_unchecked(&self, t: f64) -> (f64, f64) {
        let g = self.gamma_unchecked(t);
        let gd = self.gamma_dot_unchecked(t);
        let b = self.beta_of_gamma(g);
        let k = PI - self.theta;
        let cg = g.cos();
        let (sb, cb) = b.sin_cos();
        let omega_p = -gd * (k * cg * sb + 2.0 * cb);
        let omega_s = -gd * (k * cg * cb - 2.0 * sb);
        (omega_p, omega_s)
    }
}

/// Auxiliary angle `gamma(t)`.
pub fn gamma(a: &AnsatzCoefficients, t: f64) -> Result<f64> {
    let t = a.check_time(t)?;
    Ok(a.gamma_unchecked(t))
}

/// Analytic time derivative of `gamma`, in rad/s.
pub fn gamma_dot(a: &AnsatzCoefficients, t: f64) -> Result<f64> {
    let t = a.check_time(t)?;
    Ok(a.gamma_dot_unchecked(t))
}

/// Auxiliary angle `beta(t)`.
pub fn beta(a: &AnsatzCoefficients, t: f64) -> Result<f64> {
    Ok(a.beta_of_gamma(gamma(a, t)?))
}

/// Closed-form envelopes `(Omega_p, Omega_s)` at time `t`, rad/s.
pub fn rabi_frequencies(a: &AnsatzCoefficients, t: f64) -> Result<(f64, f64)> {
    let t = a.check_time(t)?;
    Ok(a.rabi_unchecked(t))
}

/// Provenance carried alongside sampled envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseMeta {
    pub theta: Option<f64>,
    /// Coefficients the envelopes were synthesized from, if any.
    pub coefficients: Option<[f64; 8]>,
    /// Whether the envelopes have been time-reversed and sign-flipped.
    pub reversed: bool,
}

/// Uniformly sampled, signed Rabi envelopes of the two tones.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPulsePair {
    pub dt: f64,
    pub omega_p: Vec<f64>,
    pub omega_s: Vec<f64>,
    /// Constant phase on the p tone.
    pub phi: f64,
    pub t_f: f64,
    pub meta: PulseMeta,
}

impl SampledPulsePair {
    /// Wraps arbitrary envelopes sampled every `dt` seconds.
    pub fn new(dt: f64, omega_p: Vec<f64>, omega_s: Vec<f64>, phi: f64) -> Result<Self> {
        if omega_p.len() != omega_s.len() {
            return Err(Error::invariant("pulse pair", "envelope lengths differ"));
        }
        if omega_p.len() < 2 {
            return Err(Error::invariant("pulse pair", "need at least two samples"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invariant("pulse pair", "dt must be positive"));
        }
        if omega_p.iter().chain(&omega_s).any(|x| !x.is_finite()) || !phi.is_finite() {
            return Err(Error::invariant("pulse pair", "samples must be finite"));
        }
        let t_f = (omega_p.len() - 1) as f64 * dt;
        Ok(SampledPulsePair {
            dt,
            omega_p,
            omega_s,
            phi,
            t_f,
            meta: PulseMeta {
                theta: None,
                coefficients: None,
                reversed: false,
            },
        })
    }

    /// Constant envelopes at each tone's peak magnitude over the same duration.
    pub fn square_equivalent(&self) -> Self {
        let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut sq = Self::constant(peak(&self.omega_p), peak(&self.omega_s), self.phi, self.t_f, self.len())
            .expect("a valid pulse pair has a valid square equivalent");
        sq.meta.theta = self.meta.theta;
        sq
    }

    /// Constant envelopes over `[0, t_f]`.
    pub fn constant(omega_p: f64, omega_s: f64, phi: f64, t_f: f64, n_samples: usize) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::invariant("pulse pair", "need at least two samples"));
        }
        let dt = t_f / (n_samples - 1) as f64;
        let mut p = Self::new(dt, vec![omega_p; n_samples], vec![omega_s; n_samples], phi)?;
        p.t_f = t_f;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.omega_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_p.is_empty()
    }

    /// Sample time `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t_f * (i as f64 / (self.len() - 1) as f64)
    }

    /// Linearly interpolated envelopes; zero outside `[0, t_f]`.
    #[inline]
    pub fn envelopes_at(&self, t: f64) -> (f64, f64) {
        if !(t >= 0.0 && t <= self.t_f) {
            return (0.0, 0.0);
        }
        let last = self.len() - 1;
        let x = t / self.t_f * last as f64;
        let i = (x.floor() as usize).min(last - 1);
        let frac = x - i as f64;
        let p = self.omega_p[i] + frac * (self.omega_p[i + 1] - self.omega_p[i]);
        let s = self.omega_s[i] + frac * (self.omega_s[i + 1] - self.omega_s[i]);
        (p, s)
    }

    pub fn peak_abs(&self) -> f64 {
        self.omega_p
            .iter()
            .chain(&self.omega_s)
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// True when all four endpoint samples vanish within `rel_tol * peak`.
    pub fn is_endpoint_zero(&self, rel_tol: f64) -> bool {
        let tol = rel_tol * self.peak_abs();
        let last = self.len() - 1;
        [self.omega_p[0], self.omega_p[last], self.omega_s[0], self.omega_s[last]]
            .iter()
            .all(|x| x.abs() <= tol)
    }

    /// Copy with each envelope multiplied by its factor.
    pub fn scaled(&self, p_factor: f64, s_factor: f64) -> Self {
        let mut out = self.clone();
        out.omega_p.iter_mut().for_each(|x| *x *= p_factor);
        out.omega_s.iter_mut().for_each(|x| *x *= s_factor);
        out
    }

    /// Same envelopes with a different p-tone phase.
    pub fn with_phi(&self, phi: f64) -> Self {
        let mut out = self.clone();
        out.phi = phi;
        out
    }
}

/// Samples the closed-form envelopes on a uniform grid of spacing `dt`.
///
/// `dt` must divide `t_f` (to 1e-9 relative) into at least [`MIN_INTERVALS`] intervals.
pub fn synthesize_pulses(a: &AnsatzCoefficients, dt: f64) -> Result<SampledPulsePair> {
    a.validate()?;
    if !(dt > 0.0) {
        return Err(Error::invariant("pulse grid", "dt must be positive"));
    }
    let ratio = a.t_f / dt;
    let intervals = ratio.round();
    if intervals < MIN_INTERVALS as f64 {
        return Err(Error::GridTooCoarse {
            intervals: intervals as usize,
            required: MIN_INTERVALS,
        });
    }
    if (ratio - intervals).abs() > 1e-9 * ratio {
        return Err(Error::invariant("pulse grid", "dt does not divide t_f"));
    }
    synthesize_intervals(a, intervals as usize)
}

/// Samples the envelopes at `n_samples` uniformly spaced points including both endpoints.
pub fn synthesize_samples(a: &AnsatzCoefficients, n_samples: usize) -> Result<SampledPulsePair> {
    a.validate()?;
    if n_samples < MIN_INTERVALS + 1 {
        return Err(Error::GridTooCoarse {
            intervals: n_samples.saturating_sub(1),
            required: MIN_INTERVALS,
        });
    }
    synthesize_intervals(a, n_samples - 1)
}

fn synthesize_intervals(a: &AnsatzCoefficients, intervals: usize) -> Result<SampledPulsePair> {
    let n = intervals + 1;
    let mut omega_p = Vec::with_capacity(n);
    let mut omega_s = Vec::with_capacity(n);
    for i in 0..n {
        let t = a.t_f * (i as f64 / intervals as f64);
        let (p, s) = a.rabi_unchecked(t);
        omega_p.push(p);
        omega_s.push(s);
    }
    Ok(SampledPulsePair {
        dt: a.t_f / intervals as f64,
        omega_p,
        omega_s,
        phi: a.phi,
        t_f: a.t_f,
        meta: PulseMeta {
            theta: Some(a.theta),
            coefficients: Some(a.a),
            reversed: false,
        },
    })
}

/// `Omega'(t) = -Omega(t_f - t)` for both tones, sample-exact.
pub fn reverse_pulses(p: &SampledPulsePair) -> SampledPulsePair {
    let flip = |v: &[f64]| v.iter().rev().map(|x| -x).collect::<Vec<_>>();
    SampledPulsePair {
        dt: p.dt,
        omega_p: flip(&p.omega_p),
        omega_s: flip(&p.omega_s),
        phi: p.phi,
        t_f: p.t_f,
        meta: PulseMeta {
            reversed: !p.meta.reversed,
            ..p.meta.clone()
        },
    }
}

/// The transported eigenstate `(cos g cos b e^{i phi}, -i sin g, -cos g sin b)`.
pub fn eigenstate_phi0(a: &AnsatzCoefficients, t: f64) -> Result<Vector3<Complex64>> {
    let g = gamma(a, t)?;
    Ok(phi0_from_angles(g, a.beta_of_gamma(g), a.phi))
}

pub(crate) fn phi0_from_angles(g: f64, b: f64, phi: f64) -> Vector3<Complex64> {
    let (sg, cg) = g.sin_cos();
    let (sb, cb) = b.sin_cos();
    Vector3::new(
        Complex64::from_polar(cg * cb, phi),
        Complex64::new(0.0, -sg),
        Complex64::new(-cg * sb, 0.0),
    )
}

/// Which eigenvector of the invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eigenstate {
    /// Eigenvalue 0, the transport channel.
    Null,
    /// Eigenvalue `+Omega_0 / 2`.
    Plus,
    /// Eigenvalue `-Omega_0 / 2`.
    Minus,
}

impl Eigenstate {
    fn sign(self) -> f64 {
        match self {
            Eigenstate::Null => 0.0,
            Eigenstate::Plus => 1.0,
            Eigenstate::Minus => -1.0,
        }
    }
}

/// Eigenvector and its partial derivatives with respect to `gamma` and `beta`.
fn eigenvector_with_derivatives(
    which: Eigenstate,
    g: f64,
    b: f64,
    phi: f64,
) -> [Vector3<Complex64>; 3] {
    let (sg, cg) = g.sin_cos();
    let (sb, cb) = b.sin_cos();
    let ep = Complex64::from_polar(1.0, phi);
    let i = Complex64::i();
    let c = |x: f64| Complex64::new(x, 0.0);
    match which {
        Eigenstate::Null => [
            phi0_from_angles(g, b, phi),
            Vector3::new(ep * (-sg * cb), c(-cg) * i, c(sg * sb)),
            Vector3::new(ep * (-cg * sb), c(0.0), c(-cg * cb)),
        ],
        Eigenstate::Plus | Eigenstate::Minus => {
            let s = which.sign();
            let k = FRAC_1_SQRT_2;
            [
                Vector3::new(
                    ep * (c(sb) - i * (s * sg * cb)) * k,
                    c(s * cg * k),
                    (c(cb) + i * (s * sg * sb)) * k,
                ),
                Vector3::new(
                    ep * (-i * (s * cg * cb)) * k,
                    c(-s * sg * k),
                    i * (s * cg * sb) * k,
                ),
                Vector3::new(
                    ep * (c(cb) + i * (s * sg * sb)) * k,
                    c(0.0),
                    (c(-sb) + i * (s * sg * cb)) * k,
                ),
            ]
        }
    }
}

/// Eigenvector of the invariant at time `t`.
pub fn eigenstate(a: &AnsatzCoefficients, which: Eigenstate, t: f64) -> Result<Vector3<Complex64>> {
    let g = gamma(a, t)?;
    let [v, _, _] = eigenvector_with_derivatives(which, g, a.beta_of_gamma(g), a.phi);
    Ok(v)
}

/// The invariant for one coefficient set and frequency scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantSpec {
    /// Frequency scale of the invariant, rad/s; any nonzero value.
    pub omega0: f64,
    pub coefficients: AnsatzCoefficients,
}

impl InvariantSpec {
    pub fn new(omega0: f64, coefficients: AnsatzCoefficients) -> Result<Self> {
        if omega0 == 0.0 || !omega0.is_finite() {
            return Err(Error::invariant("invariant", "omega0 must be nonzero and finite"));
        }
        coefficients.validate()?;
        Ok(InvariantSpec {
            omega0,
            coefficients,
        })
    }
}

/// Dimensionless invariant shape as a function of the angles, with its two partial derivatives.
fn invariant_shape(g: f64, b: f64, phi: f64) -> [Matrix3<Complex64>; 3] {
    let (sg, cg) = g.sin_cos();
    let (sb, cb) = b.sin_cos();
    let ep = Complex64::from_polar(1.0, phi);
    let i = Complex64::i();
    let build = |m01: Complex64, m02: Complex64, m12: Complex64| {
        Matrix3::new(
            Complex64::new(0.0, 0.0),
            m01,
            m02,
            m01.conj(),
            Complex64::new(0.0, 0.0),
            m12,
            m02.conj(),
            m12.conj(),
            Complex64::new(0.0, 0.0),
        )
    };
    [
        build(ep * (cg * sb), -i * ep * sg, Complex64::new(cg * cb, 0.0)),
        build(ep * (-sg * sb), -i * ep * cg, Complex64::new(-sg * cb, 0.0)),
        build(ep * (cg * cb), Complex64::new(0.0, 0.0), Complex64::new(-cg * sb, 0.0)),
    ]
}

/// The invariant `I(t)` in rad/s (hbar = 1).
pub fn invariant_matrix(spec: &InvariantSpec, t: f64) -> Result<Matrix3<Complex64>> {
    let a = &spec.coefficients;
    let g = gamma(a, t)?;
    let [m, _, _] = invariant_shape(g, a.beta_of_gamma(g), a.phi);
    Ok(m * Complex64::new(0.5 * spec.omega0, 0.0))
}

/// Resonant three-level Hamiltonian in `(|1>, |e>, |0>)`, rad/s.
pub fn lambda_hamiltonian(omega_p: Complex64, omega_s: Complex64) -> Matrix3<Complex64> {
    let h = -0.5;
    let z = Complex64::new(0.0, 0.0);
    Matrix3::new(
        z,
        omega_p * h,
        z,
        omega_p.conj() * h,
        z,
        omega_s * h,
        z,
        omega_s.conj() * h,
        z,
    )
}

/// Largest normalized residual `|dI/dt|_F / (Omega_0 / t_f)` over the sample grid of `pulses`,
/// where `dI/dt = dI/dt_explicit - i [I, H]` and `H` is built from the sampled envelopes.
pub fn verify_invariant_condition(spec: &InvariantSpec, pulses: &SampledPulsePair) -> Result<f64> {
    let a = &spec.coefficients;
    let scale = spec.omega0.abs() / a.t_f;
    let half = Complex64::new(0.5 * spec.omega0, 0.0);
    let ep = Complex64::from_polar(1.0, pulses.phi);
    let mut worst = 0.0_f64;
    for k in 0..pulses.len() {
        let t = pulses.time(k);
        let t = a.check_time(t)?;
        let g = a.gamma_unchecked(t);
        let gd = a.gamma_dot_unchecked(t);
        let b = a.beta_of_gamma(g);
        let bd = 0.5 * (PI - a.theta) * g.sin() * gd;
        let [m, dm_dg, dm_db] = invariant_shape(g, b, a.phi);
        let inv = m * half;
        let d_explicit = (dm_dg * Complex64::new(gd, 0.0) + dm_db * Complex64::new(bd, 0.0)) * half;
        let h = lambda_hamiltonian(ep * pulses.omega_p[k], Complex64::new(pulses.omega_s[k], 0.0));
        let total = d_explicit - (inv * h - h * inv) * Complex64::i();
        worst = worst.max(total.norm() / scale);
    }
    Ok(worst)
}

/// Quadrature rule for [`lr_phase`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    Trapezoid,
    Simpson,
}

/// Lewis-Riesenfeld phase `alpha_n(t_end) = int_0^t_end <phi_n| i d/dt - H |phi_n> dt`,
/// on `intervals` uniform steps, with `H` from the closed-form envelopes.
pub fn lr_phase(
    a: &AnsatzCoefficients,
    which: Eigenstate,
    t_end: f64,
    intervals: usize,
    rule: QuadratureRule,
) -> Result<f64> {
    let t_end = a.check_time(t_end)?;
    if intervals == 0 {
        return Err(Error::invariant("quadrature", "need at least one interval"));
    }
    if t_end == 0.0 {
        return Ok(0.0);
    }
    let intervals = match rule {
        QuadratureRule::Simpson if intervals % 2 == 1 => intervals + 1,
        _ => intervals,
    };
    let h = t_end / intervals as f64;
    let integrand = |t: f64| -> f64 {
        let g = a.gamma_unchecked(t);
        let gd = a.gamma_dot_unchecked(t);
        let b = a.beta_of_gamma(g);
        let bd = 0.5 * (PI - a.theta) * g.sin() * gd;
        let [v, dv_dg, dv_db] = eigenvector_with_derivatives(which, g, b, a.phi);
        let dv = dv_dg * Complex64::new(gd, 0.0) + dv_db * Complex64::new(bd, 0.0);
        let (p, s) = a.rabi_unchecked(t);
        let ham = lambda_hamiltonian(Complex64::from_polar(p, a.phi), Complex64::new(s, 0.0));
        let geometric = v.dotc(&dv) * Complex64::i();
        let energy = v.dotc(&(ham * v));
        (geometric - energy).re
    };
    let sum = match rule {
        QuadratureRule::Trapezoid => {
            let inner: f64 = (1..intervals).map(|k| integrand(k as f64 * h)).sum();
            h * (0.5 * (integrand(0.0) + integrand(t_end)) + inner)
        }
        QuadratureRule::Simpson => {
            let mut acc = integrand(0.0) + integrand(t_end);
            for k in 1..intervals {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * integrand(k as f64 * h);
            }
            acc * h / 3.0
        }
    };
    Ok(sum)
}
