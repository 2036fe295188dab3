//! Real-valued flags that accept multiples of pi: `0.95pi`, `pi`, `-pi/2`,
//! `3pi/4`, or a plain number.

use std::f64::consts::PI;

use crate::error::CliError;

pub fn parse_real(s: &str) -> Result<f64, CliError> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi");
    let bad = || CliError::input(format!("cannot parse '{s}' as a number or multiple of pi"));
    let Some(at) = t.find("pi") else {
        return t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    };
    let (head, tail) = (t[..at].trim(), t[at + 2..].trim());
    let coef = match head.trim_end_matches('*') {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let div = match tail {
        "" => 1.0,
        d => d.strip_prefix('/').and_then(|d| d.trim().parse::<f64>().ok()).ok_or_else(bad)?,
    };
    let v = coef * PI / div;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Comma-separated list of [`parse_real`] values.
pub fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_real).collect()
}

/// `a..b` or `a,b,c` for integer lists.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::input(format!("cannot parse '{s}' as an integer list"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}
