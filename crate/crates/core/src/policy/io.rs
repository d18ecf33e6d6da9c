use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::net::{Dense, Dims, Lstm, PolicyNet};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseJson {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LstmJson {
    w_ih: Vec<Vec<f64>>,
    w_hh: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    format_version: u32,
    dims: Dims,
    mlp: Vec<DenseJson>,
    lstm: LstmJson,
    fc: DenseJson,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

fn matrix_from_rows(what: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

impl DenseJson {
    fn from_dense(d: &Dense) -> Self {
        DenseJson {
            w: rows_of(&d.w),
            b: d.b.iter().copied().collect(),
        }
    }

    fn into_dense(self, what: &str) -> Result<Dense> {
        Ok(Dense {
            w: matrix_from_rows(what, &self.w)?,
            b: DVector::from_vec(self.b),
        })
    }
}

pub fn weights_to_json(net: &PolicyNet) -> Result<String> {
    net.validate()?;
    let file = WeightFile {
        format_version: FORMAT_VERSION,
        dims: net.dims.clone(),
        mlp: net.mlp.iter().map(DenseJson::from_dense).collect(),
        lstm: LstmJson {
            w_ih: rows_of(&net.lstm.w_ih),
            w_hh: rows_of(&net.lstm.w_hh),
            b: net.lstm.b.iter().copied().collect(),
        },
        fc: DenseJson::from_dense(&net.fc),
    };
    Ok(serde_json::to_string(&file)?)
}

/// Parses a weight document. Malformed JSON is a parse error; shapes that
/// disagree with the declared dims are configuration errors.
pub fn weights_from_json(text: &str) -> Result<PolicyNet> {
    let file: WeightFile = serde_json::from_str(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported weight format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let mlp = file
        .mlp
        .into_iter()
        .map(|d| d.into_dense("mlp"))
        .collect::<Result<Vec<_>>>()?;
    let net = PolicyNet {
        dims: file.dims,
        mlp,
        lstm: Lstm {
            w_ih: matrix_from_rows("lstm.w_ih", &file.lstm.w_ih)?,
            w_hh: matrix_from_rows("lstm.w_hh", &file.lstm.w_hh)?,
            b: DVector::from_vec(file.lstm.b),
        },
        fc: file.fc.into_dense("fc")?,
    };
    net.validate()
        .map_err(|e| Error::Config(format!("weight file inconsistent with dims: {e}")))?;
    Ok(net)
}

pub fn save_weights(net: &PolicyNet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, weights_to_json(net)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<PolicyNet> {
    weights_from_json(&std::fs::read_to_string(path)?)
}
