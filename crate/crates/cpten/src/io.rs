//! Text and JSON formats for tensors and decompositions.
//!
//! Tensor text: a `m n` header, then one `i1 ... im value` line per
//! nonzero entry (any index permutation, `#` comments allowed). Two
//! lines naming the same canonical index is an error. Decomposition
//! text: a `m n R` header, then one `lambda v1 ... vn` line per atom,
//! with an optional trailing `# clique: ...` tag.

use serde::{Deserialize, Serialize};

use crate::error::{CpError, Result};
use crate::tensor::{canonical_index, Atom, Decomposition, SymmetricTensor};

fn parse_err(line: usize, msg: impl Into<String>) -> CpError {
    CpError::Parse {
        line,
        msg: msg.into(),
    }
}

fn strip_comment(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("")
}

pub fn tensor_to_text(a: &SymmetricTensor) -> String {
    let mut s = format!("{} {}\n", a.order(), a.dim());
    for (idx, v) in a.entries() {
        for i in idx.entries() {
            s.push_str(&format!("{i} "));
        }
        s.push_str(&format!("{v:e}\n"));
    }
    s
}

pub fn tensor_from_text(text: &str) -> Result<SymmetricTensor> {
    let mut tensor: Option<SymmetricTensor> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let parts: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        match &mut tensor {
            None => {
                if parts.len() != 2 {
                    return Err(parse_err(line, "header must be 'order dim'"));
                }
                let order: usize = parts[0].parse().map_err(|_| parse_err(line, "bad order"))?;
                let dim: usize = parts[1].parse().map_err(|_| parse_err(line, "bad dim"))?;
                if order < 2 || dim < 1 {
                    return Err(parse_err(line, "need order >= 2 and dim >= 1"));
                }
                tensor = Some(SymmetricTensor::zeros(order, dim));
            }
            Some(t) => {
                if parts.len() != t.order() + 1 {
                    return Err(parse_err(
                        line,
                        format!("expected {} indices and a value", t.order()),
                    ));
                }
                let idx: Vec<usize> = parts[..t.order()]
                    .iter()
                    .map(|p| p.parse().map_err(|_| parse_err(line, "bad index")))
                    .collect::<Result<_>>()?;
                let value: f64 = parts[t.order()]
                    .parse()
                    .map_err(|_| parse_err(line, "bad value"))?;
                let canon =
                    canonical_index(&idx, t.dim()).map_err(|e| parse_err(line, e.to_string()))?;
                if t.get_canonical(&canon) != 0.0 {
                    return Err(parse_err(
                        line,
                        format!("duplicate entry for index {:?}", canon.entries()),
                    ));
                }
                t.set(&idx, value)
                    .map_err(|e| parse_err(line, e.to_string()))?;
            }
        }
    }
    tensor.ok_or_else(|| parse_err(1, "empty input"))
}

#[derive(Serialize, Deserialize)]
struct TensorEntryJson {
    idx: Vec<usize>,
    val: f64,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    order: usize,
    dim: usize,
    entries: Vec<TensorEntryJson>,
}

pub fn tensor_to_json(a: &SymmetricTensor) -> Result<String> {
    let doc = TensorJson {
        order: a.order(),
        dim: a.dim(),
        entries: a
            .entries()
            .map(|(idx, val)| TensorEntryJson {
                idx: idx.entries().to_vec(),
                val,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn tensor_from_json(text: &str) -> Result<SymmetricTensor> {
    let doc: TensorJson = serde_json::from_str(text)?;
    if doc.order < 2 || doc.dim < 1 {
        return Err(parse_err(1, "need order >= 2 and dim >= 1"));
    }
    let mut t = SymmetricTensor::zeros(doc.order, doc.dim);
    for e in &doc.entries {
        let canon = canonical_index(&e.idx, doc.dim)?;
        if t.get_canonical(&canon) != 0.0 {
            return Err(parse_err(
                1,
                format!("duplicate entry for index {:?}", canon.entries()),
            ));
        }
        t.set(&e.idx, e.val)?;
    }
    Ok(t)
}

pub fn decomposition_to_text(d: &Decomposition) -> String {
    let mut s = format!("{} {} {}\n", d.order, d.dim, d.atoms.len());
    for atom in &d.atoms {
        s.push_str(&format!("{:e}", atom.weight));
        for v in &atom.vector {
            s.push_str(&format!(" {v:e}"));
        }
        if let Some(clique) = &atom.clique {
            s.push_str(" # clique:");
            for c in clique {
                s.push_str(&format!(" {c}"));
            }
        }
        s.push('\n');
    }
    s
}

pub fn decomposition_from_text(text: &str) -> Result<Decomposition> {
    let mut decomp: Option<Decomposition> = None;
    let mut expected = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let clique = raw.split_once('#').and_then(|(_, c)| {
            let c = c.trim();
            c.strip_prefix("clique:").map(|rest| {
                rest.split_whitespace()
                    .map(|p| p.parse::<usize>())
                    .collect::<std::result::Result<Vec<usize>, _>>()
            })
        });
        let clique = match clique {
            Some(Ok(c)) => Some(c),
            Some(Err(_)) => return Err(parse_err(line, "bad clique tag")),
            None => None,
        };
        let parts: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        match &mut decomp {
            None => {
                if parts.len() != 3 {
                    return Err(parse_err(line, "header must be 'order dim atoms'"));
                }
                let nums: Vec<usize> = parts
                    .iter()
                    .map(|p| p.parse().map_err(|_| parse_err(line, "bad header field")))
                    .collect::<Result<_>>()?;
                expected = nums[2];
                decomp = Some(Decomposition::empty(nums[0], nums[1]));
            }
            Some(d) => {
                if parts.len() != d.dim + 1 {
                    return Err(parse_err(
                        line,
                        format!("expected a weight and {} components", d.dim),
                    ));
                }
                let nums: Vec<f64> = parts
                    .iter()
                    .map(|p| p.parse().map_err(|_| parse_err(line, "bad number")))
                    .collect::<Result<_>>()?;
                d.atoms.push(Atom {
                    weight: nums[0],
                    vector: nums[1..].to_vec(),
                    clique,
                });
            }
        }
    }
    let d = decomp.ok_or_else(|| parse_err(1, "empty input"))?;
    if d.atoms.len() != expected {
        return Err(parse_err(
            1,
            format!("header promised {expected} atoms, found {}", d.atoms.len()),
        ));
    }
    Ok(d)
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    weight: f64,
    vector: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clique: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct DecompositionJson {
    order: usize,
    dim: usize,
    atoms: Vec<AtomJson>,
}

pub fn decomposition_to_json(d: &Decomposition) -> Result<String> {
    let doc = DecompositionJson {
        order: d.order,
        dim: d.dim,
        atoms: d
            .atoms
            .iter()
            .map(|a| AtomJson {
                weight: a.weight,
                vector: a.vector.clone(),
                clique: a.clique.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn decomposition_from_json(text: &str) -> Result<Decomposition> {
    let doc: DecompositionJson = serde_json::from_str(text)?;
    Ok(Decomposition {
        order: doc.order,
        dim: doc.dim,
        atoms: doc
            .atoms
            .into_iter()
            .map(|a| Atom {
                weight: a.weight,
                vector: a.vector,
                clique: a.clique,
            })
            .collect(),
    })
}
