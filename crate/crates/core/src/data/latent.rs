//! Latent dataset CSV files.
//!
//! ```text
//! latent,<n>
//! x_1,...,x_n,label
//! ```
//!
//! One sample per line after the header, LF line endings, labels `-1` or `1`.
//! Reals are written in positional decimal notation with at least nine
//! significant digits and enough digits to read back bit-for-bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Role};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Decimal text for `v` that parses back to exactly `v`.
pub fn format_real(v: f64) -> String {
    let shortest = format!("{v}");
    if v == 0.0 || significant_digits(&shortest) >= 9 {
        return shortest;
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    let padded = format!("{v:.decimals$}");
    if padded.parse::<f64>() == Ok(v) {
        padded
    } else {
        shortest
    }
}

fn significant_digits(s: &str) -> usize {
    let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.trim_start_matches('0').len()
}

pub fn save_latent_dataset(data: &Dataset, path: &Path) -> Result<()> {
    data.check_binary()?;
    let n = data.dim();
    let mut out = String::with_capacity(data.len() * n * 14);
    writeln!(out, "latent,{n}").unwrap();
    for i in 0..data.len() {
        for j in 0..n {
            out.push_str(&format_real(data.x[(i, j)]));
            out.push(',');
        }
        out.push_str(if data.y[i] > 0.0 { "1" } else { "-1" });
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_latent_dataset(path: &Path, role: Role) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let format_error = |line: usize, message: String| Error::FormatError {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));

    let (_, header) = lines.next().ok_or_else(|| format_error(1, "empty file".into()))?;
    let n = header
        .strip_prefix("latent,")
        .and_then(|rest| rest.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| format_error(1, format!("expected header `latent,<n>`, found {header:?}")))?;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{}:{line}: expected {} fields ({n} values and a label), found {}",
                path.display(),
                n + 1,
                fields.len()
            )));
        }
        for field in &fields[..n] {
            let v = field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format_error(line, format!("not a finite real: {field:?}")))?;
            values.push(v);
        }
        let label_field = fields[n].trim();
        let label = label_field
            .parse::<f64>()
            .map_err(|_| format_error(line, format!("label is not a number: {label_field:?}")))?;
        if label != 1.0 && label != -1.0 {
            return Err(Error::LabelError { label, line });
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(format_error(2, "no data rows".into()));
    }

    let m = labels.len();
    let x = Matrix::from_fn(m, n, |i, j| values[i * n + j]);
    let data = Dataset::new(x, labels, role)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    let positive = data.y.iter().filter(|&&v| v > 0.0).count();
    log::info!(
        "loaded {}: m={m}, n={n}, input mean {mean:.4}, input variance {var:.4}, {positive} positive labels",
        path.display()
    );
    Ok(data)
}
