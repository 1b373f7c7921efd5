use std::cmp::Ordering;

use crate::error::{Error, Result};

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::validation("values", "empty input"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::validation("values", "NaN in input"));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(v)
}

/// Empirical CDF at each distinct value: `(value, #{x ≤ value} / N)`.
pub fn cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let v = sorted(values)?;
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    Ok(out)
}

/// Linear-interpolation quantile at position `q·(N−1)` of the ascending
/// sort.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::validation("q", format!("{q} is outside [0, 1]")));
    }
    let v = sorted(values)?;
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        return Ok(v[lo]);
    }
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}
