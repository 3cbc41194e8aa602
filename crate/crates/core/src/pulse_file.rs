//! Columnar text format for sampled pulse pairs.
//!
//! ```text
//! # invpulse-pulses v1
//! # phi 0e0
//! # t_f 4e-6
//! # dt 3.91006842619746e-9
//! # theta 1.5707963267948966e0      (or "none")
//! # a -9.911e-1 ... (8 values)       (or "none")
//! # reversed false
//! # columns time_s omega_p_rad_s omega_s_rad_s
//! 0e0 -0e0 0e0
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form so reading a file back
//! reproduces every sample bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::invariant::{PulseMeta, SampledPulsePair};

pub const PULSE_HEADER: &str = "# invpulse-pulses v1";
const COLUMNS: &str = "# columns time_s omega_p_rad_s omega_s_rad_s";

pub fn format_pulses(p: &SampledPulsePair) -> String {
    let mut out = String::with_capacity(64 * (p.len() + 8));
    let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:e}"));
    let _ = writeln!(out, "{PULSE_HEADER}");
    let _ = writeln!(out, "# phi {:e}", p.phi);
    let _ = writeln!(out, "# t_f {:e}", p.t_f);
    let _ = writeln!(out, "# dt {:e}", p.dt);
    let _ = writeln!(out, "# theta {}", opt(p.meta.theta));
    match &p.meta.coefficients {
        Some(a) => {
            let joined: Vec<String> = a.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(out, "# a {}", joined.join(" "));
        }
        None => {
            let _ = writeln!(out, "# a none");
        }
    }
    let _ = writeln!(out, "# reversed {}", p.meta.reversed);
    let _ = writeln!(out, "{COLUMNS}");
    for i in 0..p.len() {
        let _ = writeln!(out, "{:e} {:e} {:e}", p.time(i), p.omega_p[i], p.omega_s[i]);
    }
    out
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: bad number '{s}'")))
}

pub fn parse_pulses(text: &str) -> Result<SampledPulsePair> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == PULSE_HEADER => {}
        _ => return Err(Error::Parse(format!("missing '{PULSE_HEADER}' header"))),
    }
    let mut phi = None;
    let mut t_f = None;
    let mut dt = None;
    let mut theta = None;
    let mut coefficients = None;
    let mut reversed = false;
    let mut omega_p = Vec::new();
    let mut omega_s = Vec::new();
    for (idx, raw) in lines {
        let n = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            let key = parts.next().unwrap_or("");
            let values: Vec<&str> = parts.collect();
            let single = || -> Result<&str> {
                match values.as_slice() {
                    [v] => Ok(v),
                    _ => Err(Error::Parse(format!("line {n}: '{key}' expects one value"))),
                }
            };
            match key {
                "phi" => phi = Some(parse_f64(single()?, n)?),
                "t_f" => t_f = Some(parse_f64(single()?, n)?),
                "dt" => dt = Some(parse_f64(single()?, n)?),
                "theta" => {
                    let v = single()?;
                    theta = if v == "none" { None } else { Some(parse_f64(v, n)?) };
                }
                "a" => {
                    if values == ["none"] {
                        coefficients = None;
                    } else if values.len() == 8 {
                        let mut a = [0.0; 8];
                        for (slot, v) in a.iter_mut().zip(&values) {
                            *slot = parse_f64(v, n)?;
                        }
                        coefficients = Some(a);
                    } else {
                        return Err(Error::Parse(format!("line {n}: 'a' needs 8 values or 'none'")));
                    }
                }
                "reversed" => {
                    reversed = single()?
                        .parse::<bool>()
                        .map_err(|_| Error::Parse(format!("line {n}: 'reversed' must be true/false")))?
                }
                "columns" => {}
                other => return Err(Error::Parse(format!("line {n}: unknown header key '{other}'"))),
            }
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(Error::Parse(format!("line {n}: expected 3 columns, found {}", cols.len())));
        }
        omega_p.push(parse_f64(cols[1], n)?);
        omega_s.push(parse_f64(cols[2], n)?);
    }
    let phi = phi.ok_or_else(|| Error::Parse("missing 'phi' header".into()))?;
    let dt = dt.ok_or_else(|| Error::Parse("missing 'dt' header".into()))?;
    let t_f = t_f.ok_or_else(|| Error::Parse("missing 't_f' header".into()))?;
    let mut p = SampledPulsePair::new(dt, omega_p, omega_s, phi)?;
    if (p.t_f - t_f).abs() > 1e-9 * t_f.abs() {
        return Err(Error::invariant(
            "pulse file",
            format!("t_f {t_f:e} inconsistent with {} samples of dt {dt:e}", p.len()),
        ));
    }
    p.t_f = t_f;
    p.meta = PulseMeta {
        theta,
        coefficients,
        reversed,
    };
    Ok(p)
}

pub fn write_pulses(path: &Path, p: &SampledPulsePair) -> Result<()> {
    std::fs::write(path, format_pulses(p))?;
    Ok(())
}

pub fn read_pulses(path: &Path) -> Result<SampledPulsePair> {
    parse_pulses(&std::fs::read_to_string(path)?)
}
