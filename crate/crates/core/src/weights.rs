//! JSON weight files.
//!
//! ```json
//! {
//!   "format": "rnnattack-weights",
//!   "version": 1,
//!   "kind": "gru",
//!   "n": 2, "m": 1, "l": 2,
//!   "lifting": {"delta": 0.1, "substeps": 1},
//!   "matrices": {"U_z": {"shape": [2, 2], "data": [..row-major..]}, ...}
//! }
//! ```
//!
//! Matrix names are `U_<gate>`, `W_<gate>`, `b_<gate>` (shape `[n, 1]`) for
//! each gate of the cell kind, plus `head_W` (`[l, n]`) and `head_b` (`[l, 1]`).
//! `lifting` is optional and defaults to `Δ = 1`, one substep.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{CellKind, CellParams, Gate};
use crate::error::{Error, Result};
use crate::head::HeadParams;
use crate::linalg::{Matrix, Vector};
use crate::model::{Lifting, Model};

pub const FORMAT: &str = "rnnattack-weights";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    format: String,
    version: u32,
    kind: CellKind,
    n: usize,
    m: usize,
    l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lifting: Option<Lifting>,
    matrices: BTreeMap<String, Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    shape: [usize; 2],
    /// `null` stands in for values JSON cannot carry.
    data: Vec<Option<f64>>,
}

fn entry(m: &Matrix) -> Entry {
    let data = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| Some(m[(i, j)]))
        .collect();
    Entry {
        shape: [m.nrows(), m.ncols()],
        data,
    }
}

pub fn to_json(model: &Model) -> String {
    let cell = &model.cell;
    let mut matrices = BTreeMap::new();
    for (gate, name) in cell.gates().iter().zip(cell.kind().gate_names()) {
        matrices.insert(format!("U_{name}"), entry(&gate.u));
        matrices.insert(format!("W_{name}"), entry(&gate.w));
        matrices.insert(format!("b_{name}"), entry(&Matrix::from_column_slice(gate.b.len(), 1, gate.b.as_slice())));
    }
    matrices.insert("head_W".into(), entry(&model.head.weight));
    let hb = &model.head.bias;
    matrices.insert("head_b".into(), entry(&Matrix::from_column_slice(hb.len(), 1, hb.as_slice())));
    let file = WeightFile {
        format: FORMAT.into(),
        version: VERSION,
        kind: cell.kind(),
        n: cell.hidden_dim(),
        m: cell.input_dim(),
        l: model.classes(),
        lifting: Some(model.lifting),
        matrices,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("weights serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str, path: &Path) -> Result<Model> {
    let mut file: WeightFile = serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    if file.format != FORMAT {
        return Err(Error::Schema(format!("expected format `{FORMAT}`, found `{}`", file.format)));
    }
    if file.version != VERSION {
        return Err(Error::Schema(format!("unsupported weight file version {}", file.version)));
    }
    let (n, m, l) = (file.n, file.m, file.l);
    let mut take = |name: String, rows: usize, cols: usize| -> Result<Matrix> {
        let e = file
            .matrices
            .remove(&name)
            .ok_or_else(|| Error::Schema(format!("missing matrix `{name}`")))?;
        if e.shape != [rows, cols] {
            return Err(Error::Shape {
                name,
                rows,
                cols,
                found_rows: e.shape[0],
                found_cols: e.shape[1],
            });
        }
        if e.data.len() != rows * cols {
            return Err(Error::Schema(format!(
                "`{name}` declares shape {rows}x{cols} but carries {} values",
                e.data.len()
            )));
        }
        let mut vals = Vec::with_capacity(e.data.len());
        for (index, v) in e.data.into_iter().enumerate() {
            match v {
                Some(v) if v.is_finite() => vals.push(v),
                _ => return Err(Error::NonFinite { name, index }),
            }
        }
        Ok(Matrix::from_row_slice(rows, cols, &vals))
    };
    let mut gates = Vec::new();
    for name in file.kind.gate_names() {
        let u = take(format!("U_{name}"), n, n)?;
        let w = take(format!("W_{name}"), n, m)?;
        let b = take(format!("b_{name}"), n, 1)?;
        gates.push(Gate {
            u,
            w,
            b: Vector::from_column_slice(b.as_slice()),
        });
    }
    let hw = take("head_W".into(), l, n)?;
    let hb = take("head_b".into(), l, 1)?;
    if let Some(extra) = file.matrices.keys().next() {
        return Err(Error::Schema(format!("unexpected matrix `{extra}` for a {} cell", file.kind)));
    }
    let cell = CellParams::new(file.kind, n, m, gates)?;
    let head = HeadParams::new(hw, Vector::from_column_slice(hb.as_slice()))?;
    Model::new(cell, head, file.lifting.unwrap_or_default())
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(kind: CellKind) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cell = CellParams::random(kind, 3, 2, 1.3, &mut rng);
        let mut head = HeadParams::zeros(2, 3);
        head.weight[(0, 1)] = 1.0 / 3.0;
        head.bias[1] = -std::f64::consts::PI;
        Model::new(cell, head, Lifting { delta: 0.1, substeps: 2 }).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in [CellKind::Vanilla, CellKind::Gru, CellKind::Lstm] {
            let m = random_model(kind);
            let back = from_json(&to_json(&m), Path::new("mem")).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn shape_error_names_matrix() {
        let m = random_model(CellKind::Gru);
        let mut v: serde_json::Value = serde_json::from_str(&to_json(&m)).unwrap();
        v["matrices"]["W_r"]["shape"] = serde_json::json!([3, 3]);
        let err = from_json(&v.to_string(), Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("W_r"), "{err}");
    }

    #[test]
    fn rejects_non_finite_and_missing() {
        let m = random_model(CellKind::Vanilla);
        let mut v: serde_json::Value = serde_json::from_str(&to_json(&m)).unwrap();
        v["matrices"]["U_h"]["data"][4] = serde_json::Value::Null;
        let err = from_json(&v.to_string(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::NonFinite { ref name, index: 4 } if name == "U_h"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&to_json(&m)).unwrap();
        v["matrices"].as_object_mut().unwrap().remove("head_b");
        assert!(from_json(&v.to_string(), Path::new("mem")).is_err());

        let text = to_json(&m).replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(from_json(&text, Path::new("mem")), Err(Error::Schema(_))));
    }
}
