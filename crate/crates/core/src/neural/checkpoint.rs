//! Text checkpoint container.
//!
//! ```text
//! csq-checkpoint 1
//! meta <key> <value...>
//! param <name> <rank> <d1> ... <dk>
//! <row-major values, space separated>
//! ```
//!
//! `meta` lines carry the configuration, seed and vocabularies; values are
//! written with 17 significant digits.

use super::{NeuralError, ParamStore, Result, Tensor};
use crate::embedding_io::format_value;

const MAGIC: &str = "csq-checkpoint 1";

pub fn write_checkpoint(meta: &[(String, String)], params: &ParamStore) -> String {
    let mut out = String::from(MAGIC);
    out.push('\n');
    for (k, v) in meta {
        debug_assert!(!k.contains(char::is_whitespace) && !v.contains('\n'));
        out.push_str(&format!("meta {k} {v}\n"));
    }
    for (_, name, t) in params.iter() {
        out.push_str(&format!("param {name} {}", t.shape().len()));
        for d in t.shape() {
            out.push_str(&format!(" {d}"));
        }
        out.push('\n');
        let vals: Vec<String> = t.data().iter().map(|x| format_value(*x)).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

fn bad(msg: impl Into<String>) -> NeuralError {
    NeuralError::Checkpoint(msg.into())
}

pub fn read_checkpoint(text: &str) -> Result<(Vec<(String, String)>, ParamStore)> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing header"));
    }
    let mut meta = Vec::new();
    let mut params = ParamStore::new();
    while let Some(line) = lines.next() {
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            meta.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("param ") {
            let fields: Vec<&str> = rest.split(' ').collect();
            let name = fields.first().ok_or_else(|| bad("param without name"))?;
            let rank: usize = fields.get(1).and_then(|r| r.parse().ok()).ok_or_else(|| bad("bad rank"))?;
            let shape: Vec<usize> = fields[2..]
                .iter()
                .map(|d| d.parse().map_err(|_| bad(format!("bad dim in {name}"))))
                .collect::<Result<_>>()?;
            if shape.len() != rank {
                return Err(bad(format!("rank mismatch in {name}")));
            }
            let values = lines.next().ok_or_else(|| bad(format!("missing values for {name}")))?;
            let data: Vec<f64> = values
                .split(' ')
                .map(|v| v.parse().map_err(|_| bad(format!("bad value in {name}"))))
                .collect::<Result<_>>()?;
            params.add(*name, Tensor::new(shape, data)?)?;
        } else if !line.is_empty() {
            return Err(bad(format!("unexpected line {line:?}")));
        }
    }
    Ok((meta, params))
}
