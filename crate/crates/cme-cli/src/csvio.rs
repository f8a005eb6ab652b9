//! Dataset CSV read/write. Floats render through `Display`, which emits the
//! shortest round-trip form, so a rerun with the same numbers produces the
//! same bytes. Parse errors carry the line and column they came from.

use std::path::Path;

use cme_core::data::LabeledDataset;
use cme_core::Mat;

use crate::runs::write_atomic;
use crate::{CliError, CliResult};

/// Header is `x,y` for one input dimension, `x1,...,xd,y` otherwise.
pub fn dataset_to_csv(data: &LabeledDataset) -> String {
    let d = data.input_dim();
    let mut text = String::new();
    if d == 1 {
        text.push_str("x,y\n");
    } else {
        for j in 0..d {
            text.push_str(&format!("x{},", j + 1));
        }
        text.push_str("y\n");
    }
    for i in 0..data.len() {
        for v in data.inputs().row(i) {
            text.push_str(&format!("{v},"));
        }
        text.push_str(&format!("{}\n", data.outputs()[i]));
    }
    text
}

pub fn write_dataset_csv(path: &Path, data: &LabeledDataset) -> CliResult<()> {
    write_atomic(path, dataset_to_csv(data).as_bytes())
}

pub fn load_dataset_csv(path: &Path) -> CliResult<LabeledDataset> {
    let display = path.display();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading dataset {display}"), e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::config(format!("{display}: empty file")))?;
    let fields = header.split(',').count();
    if fields < 2 {
        return Err(CliError::config(format!(
            "{display}: header must have at least two columns, found {fields}"
        )));
    }
    let d = fields - 1;

    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        if tokens.len() != fields {
            return Err(CliError::config(format!(
                "{display}:line {}: expected {fields} fields, found {}",
                idx + 1,
                tokens.len()
            )));
        }
        for (j, tok) in tokens.iter().enumerate() {
            let v: f64 = tok.trim().parse().map_err(|_| {
                CliError::config(format!(
                    "{display}:line {}, column {}: invalid float {:?}",
                    idx + 1,
                    j + 1,
                    tok
                ))
            })?;
            rows.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::config(format!("{display}: no data rows")));
    }

    let mut inputs = Mat::zeros(n, d);
    let mut outputs = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..d {
            inputs.set(i, j, rows[i * fields + j]);
        }
        outputs.push(rows[i * fields + d]);
    }
    LabeledDataset::new(inputs, outputs).map_err(CliError::from_core)
}

/// Generic table writer for curve.csv and metrics.csv.
pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn push_row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width mismatch");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

/// Shortest round-trip rendering shared by every CSV cell.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
