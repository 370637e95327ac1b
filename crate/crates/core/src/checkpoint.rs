//! JSON checkpoints for weight stacks.
//!
//! ```json
//! {"format": "dlnlab-weights", "version": 1, "layer_dims": [d0, ..., dL],
//!  "weights": [[row-major W_1], ..., [row-major W_L]]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::WeightStack;

pub const FORMAT: &str = "dlnlab-weights";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

pub fn to_json(stack: &WeightStack) -> String {
    let weights = stack
        .weights()
        .iter()
        .map(|w| (0..w.nrows()).flat_map(|i| (0..w.ncols()).map(move |j| w[(i, j)])).collect())
        .collect();
    let c = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        layer_dims: stack.spec().dims().to_vec(),
        weights,
    };
    serde_json::to_string(&c).expect("numbers serialise")
}

pub fn from_json(text: &str) -> Result<WeightStack> {
    let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if c.format != FORMAT || c.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported format {} v{}", c.format, c.version)));
    }
    if c.layer_dims.len() != c.weights.len() + 1 {
        return Err(Error::Checkpoint("layer_dims does not match number of matrices".into()));
    }
    let mats = c
        .weights
        .iter()
        .enumerate()
        .map(|(i, data)| {
            let (r, k) = (c.layer_dims[i + 1], c.layer_dims[i]);
            if data.len() != r * k {
                return Err(Error::Checkpoint(format!("W_{} has {} entries, expected {}", i + 1, data.len(), r * k)));
            }
            Ok(Matrix::from_row_slice(r, k, data))
        })
        .collect::<Result<Vec<_>>>()?;
    WeightStack::new(mats)
}

pub fn save(stack: &WeightStack, path: &Path) -> Result<()> {
    fs::write(path, to_json(stack)).map_err(|source| Error::Io { path: path.to_owned(), source })
}

pub fn load(path: &Path) -> Result<WeightStack> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    from_json(&text)
}
