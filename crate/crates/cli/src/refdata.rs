//! Reference eigenvalues of the L-shape from the built-in P1 oracle.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result};
use crate::table::{num, write_csv};

const LSHAPE_EIGENVALUES: &str = include_str!("../../../refdata/lshape_eigenvalues.csv");

/// File names under the reference directory.
pub const EIGENVALUES_FILE: &str = "lshape_eigenvalues.csv";
pub const LEVELS_FILE: &str = "lshape_levels.csv";

/// Singular and smooth exponents of P1 eigenvalue errors near a corner of
/// angle 3π/2: `h^{4/3}`, `h^2`, `h^{8/3}`.
pub const EXPONENTS: [f64; 3] = [4.0 / 3.0, 2.0, 8.0 / 3.0];

/// The embedded reference eigenvalues, ascending.
pub fn lshape_reference() -> Result<Vec<f64>> {
    parse_reference(LSHAPE_EIGENVALUES)
}

pub fn parse_reference(text: &str) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let col = header
        .iter()
        .position(|h| h == "lambda")
        .ok_or_else(|| CliError::RefData("no lambda column".into()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: f64 = rec[col]
            .parse()
            .map_err(|_| CliError::RefData(format!("bad value {:?}", &rec[col])))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::RefData("no reference values; run `lseig oracle lshape`".into()));
    }
    Ok(out)
}

/// Extrapolates `λ_h = λ + Σ c_i h^{p_i}` through the last
/// `exponents.len() + 1` samples.
pub fn richardson(hs: &[f64], values: &[f64], exponents: &[f64]) -> Result<f64> {
    let m = exponents.len() + 1;
    if hs.len() != values.len() || hs.len() < m {
        return Err(CliError::Config(format!("extrapolation needs {m} samples")));
    }
    let (hs, values) = (&hs[hs.len() - m..], &values[values.len() - m..]);
    // Scale by the finest h to keep the system well conditioned.
    let h0 = hs[m - 1];
    let a = DMatrix::from_fn(m, m, |i, j| if j == 0 { 1.0 } else { (hs[i] / h0).powf(exponents[j - 1]) });
    let sol = a
        .lu()
        .solve(&DVector::from_column_slice(values))
        .ok_or_else(|| CliError::Config("singular extrapolation system".into()))?;
    Ok(sol[0])
}

/// Output of the oracle: raw P1 eigenvalues per level and their limits.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub levels: Vec<usize>,
    pub h: Vec<f64>,
    pub ndof: Vec<usize>,
    /// `raw[l][j]`: eigenvalue `j` on level `levels[l]`.
    pub raw: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Difference to the extrapolation that drops the finest level.
    pub error_estimates: Vec<f64>,
}

impl OracleReport {
    pub fn from_levels(levels: Vec<usize>, h: Vec<f64>, ndof: Vec<usize>, raw: Vec<Vec<f64>>) -> Result<Self> {
        let k = raw.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(k);
        let mut error_estimates = Vec::with_capacity(k);
        for j in 0..k {
            let col: Vec<f64> = raw.iter().map(|r| r[j]).collect();
            let best = richardson(&h, &col, &EXPONENTS)?;
            let n = col.len();
            let previous = if n > EXPONENTS.len() + 1 {
                richardson(&h[..n - 1], &col[..n - 1], &EXPONENTS)?
            } else {
                richardson(&h, &col, &EXPONENTS[..EXPONENTS.len() - 1])?
            };
            values.push(best);
            error_estimates.push((best - previous).abs());
        }
        Ok(OracleReport {
            levels,
            h,
            ndof,
            raw,
            values,
            error_estimates,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let exps = EXPONENTS.iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(" ");
        let used = self.levels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
        let header: Vec<String> = ["index", "lambda", "error_estimate", "method", "exponents", "levels"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows: Vec<Vec<String>> = (0..self.values.len())
            .map(|j| {
                vec![
                    (j + 1).to_string(),
                    num(self.values[j]),
                    num(self.error_estimates[j]),
                    "p1-uniform-richardson".to_string(),
                    exps.clone(),
                    used.clone(),
                ]
            })
            .collect();
        write_csv(&dir.join(EIGENVALUES_FILE), &header, &rows)?;
        let mut header = vec!["level".to_string(), "h_max".to_string(), "ndof".to_string()];
        header.extend((1..=self.values.len()).map(|j| format!("lambda_{j}")));
        let rows: Vec<Vec<String>> = (0..self.levels.len())
            .map(|l| {
                let mut r = vec![self.levels[l].to_string(), num(self.h[l]), self.ndof[l].to_string()];
                r.extend(self.raw[l].iter().map(|&v| num(v)));
                r
            })
            .collect();
        write_csv(&dir.join(LEVELS_FILE), &header, &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_removes_the_modelled_terms() {
        let hs: Vec<f64> = (0..5).map(|l| 0.5f64.powi(l)).collect();
        let vals: Vec<f64> = hs
            .iter()
            .map(|&h| 7.0 + 3.0 * h.powf(4.0 / 3.0) - 2.0 * h * h + 0.5 * h.powf(8.0 / 3.0))
            .collect();
        assert!((richardson(&hs, &vals, &EXPONENTS).unwrap() - 7.0).abs() < 1e-12);
        assert!(richardson(&hs[..3], &vals[..3], &EXPONENTS).is_err());
    }

    #[test]
    fn reference_parsing() {
        let text = "index,lambda,error_estimate\n1,9.5e0,1e-6\n2,1.5e1,1e-6\n";
        assert_eq!(parse_reference(text).unwrap(), vec![9.5, 15.0]);
        assert!(parse_reference("index,lambda\n").is_err());
        assert!(parse_reference("index,value\n1,2\n").is_err());
    }
}
