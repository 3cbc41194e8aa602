//! Dormand-Prince 5(4) with FSAL and PI step-size control.
//!
//! Local errors are measured in the max norm over complex components, so every
//! entry of the state meets `atol + rtol * |y|` on each accepted step.

use nalgebra::SMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A state the integrator can advance.
pub trait OdeState: Clone {
    /// `self + sum(c_i * k_i)`.
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self;
    /// Largest scaled error component, `|err_i| / (atol + rtol * max(|y0_i|, |y1_i|))`.
    fn scaled_max(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64;
    /// Sum of squares and count, for the initial step heuristic.
    fn weighted_sq_sum(v: &Self, y: &Self, rtol: f64, atol: f64) -> (f64, usize);
}

impl<const R: usize, const C: usize> OdeState for SMatrix<Complex64, R, C> {
    #[inline]
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = *self;
        for (c, k) in terms {
            if *c != 0.0 {
                for (o, x) in out.iter_mut().zip(k.iter()) {
                    *o += x * *c;
                }
            }
        }
        out
    }

    #[inline]
    fn scaled_max(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        let mut m: f64 = 0.0;
        for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
            let sc = atol + rtol * a.norm().max(b.norm());
            m = m.max(e.norm() / sc);
        }
        m
    }

    #[inline]
    fn weighted_sq_sum(v: &Self, y: &Self, rtol: f64, atol: f64) -> (f64, usize) {
        let mut s = 0.0;
        for (x, a) in v.iter().zip(y.iter()) {
            s += (x.re / (atol + rtol * a.re.abs())).powi(2) + (x.im / (atol + rtol * a.im.abs())).powi(2);
        }
        (s, 2 * R * C)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step, seconds.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rel_tol: 1e-6,
            abs_tol: 1e-6,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn rms((sum, n): (f64, usize)) -> f64 {
    (sum / n as f64).sqrt()
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1 > t0`.
///
/// `observer` is called after every accepted step with the new time and state;
/// an error from it aborts the integration.
pub fn integrate<S, F, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: S,
    ctl: &StepControl,
    mut observer: O,
) -> Result<(S, Stats)>
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
    O: FnMut(f64, &S) -> Result<()>,
{
    let mut stats = Stats::default();
    if t1 <= t0 {
        return Ok((y0, stats));
    }
    let (rtol, atol) = (ctl.rel_tol, ctl.abs_tol);
    let span = t1 - t0;
    let h_max = ctl.max_step.min(span);

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;

    // initial step from the usual two-evaluation heuristic
    let mut h = {
        let d0 = rms(S::weighted_sq_sum(&y, &y, rtol, atol));
        let d1 = rms(S::weighted_sq_sum(&k1, &y, rtol, atol));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
        let h0 = h0.min(h_max);
        let y1 = y.lincomb(&[(h0, &k1)]);
        let k2 = f(t + h0, &y1);
        stats.evaluations += 1;
        let diff = k2.lincomb(&[(-1.0, &k1)]);
        let d2 = rms(S::weighted_sq_sum(&diff, &y, rtol, atol)) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6 * span)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(h_max)
    };

    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let (facc1, facc2) = (1.0 / 0.2, 1.0 / 10.0);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let h_min_rel = 16.0 * f64::EPSILON;

    loop {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Error::TooManySteps(ctl.max_steps));
        }
        let remaining = t1 - t;
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h <= h_min_rel * t.abs().max(span) {
            return Err(Error::StepUnderflow { t, h });
        }

        let k2 = f(t + C2 * h, &y.lincomb(&[(h * A21, &k1)]));
        let k3 = f(t + C3 * h, &y.lincomb(&[(h * A31, &k1), (h * A32, &k2)]));
        let k4 = f(
            t + C4 * h,
            &y.lincomb(&[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]),
        );
        let k5 = f(
            t + C5 * h,
            &y.lincomb(&[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &y.lincomb(&[
                (h * A61, &k1),
                (h * A62, &k2),
                (h * A63, &k3),
                (h * A64, &k4),
                (h * A65, &k5),
            ]),
        );
        let y_new = y.lincomb(&[
            (h * A71, &k1),
            (h * A73, &k3),
            (h * A74, &k4),
            (h * A75, &k5),
            (h * A76, &k6),
        ]);
        let k7 = f(t + h, &y_new);
        stats.evaluations += 6;

        let zero = k1.lincomb(&[(-1.0, &k1)]);
        let err_vec = zero.lincomb(&[
            (h * E1, &k1),
            (h * E3, &k3),
            (h * E4, &k4),
            (h * E5, &k5),
            (h * E6, &k6),
            (h * E7, &k7),
        ]);
        let err = S::scaled_max(&err_vec, &y, &y_new, rtol, atol);
        if !err.is_finite() {
            stats.rejected += 1;
            last_rejected = true;
            h *= 0.1;
            continue;
        }

        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).clamp(facc2, facc1);
        let h_new = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            stats.accepted += 1;
            t = if last { t1 } else { t + h };
            y = y_new;
            k1 = k7;
            observer(t, &y)?;
            if last {
                return Ok((y, stats));
            }
            let mut h_next = h_new.min(h_max);
            if last_rejected {
                h_next = h_next.min(h);
            }
            last_rejected = false;
            h = h_next;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h /= (fac11 / safe).min(facc1);
        }
    }
}
