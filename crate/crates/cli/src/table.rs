//! Number formatting, CSV output and rate fits.

use std::path::Path;

use crate::error::{CliError, Result};

/// Scientific notation with 12 significant digits; non-finite values as `NaN`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        "NaN".to_string()
    }
}

pub fn opt(x: Option<f64>) -> String {
    num(x.unwrap_or(f64::NAN))
}

/// Least-squares slope of `log err` against `log x`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(CliError::Config("a rate needs at least two points".into()));
    }
    if pairs.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(CliError::Config("rates need positive finite values".into()));
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln() / n, b + y.ln() / n));
    let (sxy, sxx) = pairs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        let dx = x.ln() - mx;
        (a + dx * (y.ln() - my), b + dx * dx)
    });
    if sxx == 0.0 {
        return Err(CliError::Config("rates need distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Writes a header and rows of preformatted fields.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV back as header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        assert_eq!(fit_rate(&[(1.0, 1.0), (0.5, 0.25)]).unwrap(), 2.0);
        assert!((fit_rate(&[(1.0, 1.0), (0.5, 0.5), (0.25, 0.25)]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fit_rate(&[(1.0, 3.0), (0.5, 3.0), (0.25, 3.0)]).unwrap(), 0.0);
    }

    #[test]
    fn rate_rejects_bad_input() {
        assert!(fit_rate(&[(1.0, 1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 0.0), (0.5, 1.0)]).is_err());
        assert!(fit_rate(&[(-1.0, 1.0), (0.5, 1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn number_format() {
        assert_eq!(num(19.739208802178716), "1.97392088022e1");
        assert_eq!(num(-2.5e-7), "-2.50000000000e-7");
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(opt(None), "NaN");
    }
}
