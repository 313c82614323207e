//! Plain-text policy files.
//!
//! ```text
//! zerotrack-policy 1
//! layers 4 32 32 2
//! hidden tanh
//! output tanh,sigmoid
//! preview 1
//! mean <4 values>
//! std <4 values>
//! weights 0
//! <one row per line, H1 rows of 4 values>
//! biases 0
//! <H1 values>
//! ... layers 1 and 2 ...
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores every
//! parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::dataset::Normalization;
use super::network::{Activation, NetworkParams, OUTPUT_ACTIVATION};
use super::train::Model;
use crate::error::{Error, Result};

const MAGIC: &str = "zerotrack-policy";
pub const MODEL_VERSION: u32 = 1;

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn model_to_string(model: &Model) -> Result<String> {
    let p = &model.params;
    p.validate()?;
    let sizes = p.layer_sizes();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {MODEL_VERSION}");
    let _ = writeln!(out, "layers {} {} {} {}", sizes[0], sizes[1], sizes[2], sizes[3]);
    let _ = writeln!(out, "hidden {}", p.hidden);
    let _ = writeln!(out, "output {OUTPUT_ACTIVATION}");
    let _ = writeln!(out, "preview {}", model.preview_time);
    let _ = writeln!(out, "mean {}", join(model.normalization.mean));
    let _ = writeln!(out, "std {}", join(model.normalization.std));
    for k in 0..3 {
        let _ = writeln!(out, "weights {k}");
        for row in p.weights[k].row_iter() {
            let _ = writeln!(out, "{}", join(row.iter().copied()));
        }
        let _ = writeln!(out, "biases {k}");
        let _ = writeln!(out, "{}", join(p.biases[k].iter().copied()));
    }
    out.push_str("end\n");
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim())
            }
            None => Err(Error::ModelFormat(format!("truncated after line {}", self.line))),
        }
    }

    fn err(&self, what: impl std::fmt::Display) -> Error {
        Error::ModelFormat(format!("line {}: {what}", self.line))
    }

    /// Reads `key <rest>` and returns `rest`.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.trim()),
            _ if l == key => Ok(""),
            _ => Err(self.err(format!("expected {key:?}"))),
        }
    }

    fn numbers(&self, text: &str, expected: usize) -> Result<Vec<f64>> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("bad number {t:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(self.err("non-finite value"));
        }
        Ok(values)
    }
}

pub fn model_from_str(text: &str) -> Result<Model> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let version = lines.keyed(MAGIC)?;
    if version != MODEL_VERSION.to_string() {
        return Err(lines.err(format!("unsupported version {version:?}")));
    }
    let sizes_text = lines.keyed("layers")?;
    let sizes: Vec<usize> = sizes_text
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| lines.err(format!("bad layer size {t:?}"))))
        .collect::<Result<_>>()?;
    if sizes.len() != 4 || sizes[0] != 4 || sizes[3] != 2 || sizes[1] == 0 || sizes[2] == 0 {
        return Err(lines.err(format!("layer sizes must be [4, H1, H2, 2], got {sizes:?}")));
    }
    let hidden: Activation = lines.keyed("hidden")?.parse().map_err(|e| lines.err(e))?;
    let output = lines.keyed("output")?;
    if output != OUTPUT_ACTIVATION {
        return Err(lines.err(format!("unsupported output activation {output:?}")));
    }
    let preview_text = lines.keyed("preview")?;
    let preview_time = lines.numbers(preview_text, 1)?[0];
    let mean_text = lines.keyed("mean")?;
    let mean = lines.numbers(mean_text, 4)?;
    let std_text = lines.keyed("std")?;
    let std = lines.numbers(std_text, 4)?;
    let normalization = Normalization {
        mean: [mean[0], mean[1], mean[2], mean[3]],
        std: [std[0], std[1], std[2], std[3]],
    };
    if !normalization.is_valid() {
        return Err(lines.err("standard deviations must be positive"));
    }

    let mut params = NetworkParams::zeros([sizes[1], sizes[2]], hidden);
    for k in 0..3 {
        let (rows, cols) = (sizes[k + 1], sizes[k]);
        if lines.keyed("weights")? != k.to_string() {
            return Err(lines.err(format!("expected weights for layer {k}")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = lines.next()?;
            data.extend(lines.numbers(row, cols)?);
        }
        params.weights[k] = DMatrix::from_row_slice(rows, cols, &data);
        if lines.keyed("biases")? != k.to_string() {
            return Err(lines.err(format!("expected biases for layer {k}")));
        }
        let b = lines.next()?;
        params.biases[k] = DVector::from_vec(lines.numbers(b, rows)?);
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected end marker"));
    }
    params.validate()?;
    Ok(Model {
        params,
        normalization,
        preview_time,
    })
}
