//! Text weight files:
//!
//! ```text
//! #hashee-model v1 L=2 d=8 h=2 d_ff=16 V=100
//! [tensor embedding 100 8]
//! <row of 8 reals>
//! ...
//! ```
//!
//! Layer tensors are named `layer.<i>.<wq|wk|wv|wo|w1|w2|ln1.gain|ln1.bias|ln2.gain|ln2.bias>`
//! with `i` counted from 0; the optional head is `head.weight` / `head.bias`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ClassifierHead, EncoderConfig, EncoderModel, LayerWeights};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

fn push_tensor(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "[tensor {name} {} {}]", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

fn vector(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("row vector")
}

impl EncoderModel {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "#hashee-model v1 L={} d={} h={} d_ff={} V={}\n",
            c.num_layers, c.d_model, c.num_heads, c.d_ff, c.vocab_size
        );
        push_tensor(&mut out, "embedding", &self.embedding);
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layer.{i}");
            push_tensor(&mut out, &format!("{p}.wq"), &l.wq);
            push_tensor(&mut out, &format!("{p}.wk"), &l.wk);
            push_tensor(&mut out, &format!("{p}.wv"), &l.wv);
            push_tensor(&mut out, &format!("{p}.wo"), &l.wo);
            push_tensor(&mut out, &format!("{p}.w1"), &l.w1);
            push_tensor(&mut out, &format!("{p}.w2"), &l.w2);
            push_tensor(&mut out, &format!("{p}.ln1.gain"), &vector(&l.ln1_gain));
            push_tensor(&mut out, &format!("{p}.ln1.bias"), &vector(&l.ln1_bias));
            push_tensor(&mut out, &format!("{p}.ln2.gain"), &vector(&l.ln2_gain));
            push_tensor(&mut out, &format!("{p}.ln2.bias"), &vector(&l.ln2_bias));
        }
        if let Some(h) = &self.head {
            push_tensor(&mut out, "head.weight", &h.weight);
            push_tensor(&mut out, "head.bias", &vector(&h.bias));
        }
        out
    }
}

fn parse_header(line: &str) -> Result<EncoderConfig> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some("#hashee-model") || parts.next() != Some("v1") {
        return Err(Error::parse(1, "expected `#hashee-model v1` header"));
    }
    let mut fields = BTreeMap::new();
    for p in parts {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("malformed header field {p:?}")))?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::parse(1, format!("header field {k} is not an integer")))?;
        fields.insert(k.to_string(), v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::parse(1, format!("header is missing {k}=")))
    };
    let cfg = EncoderConfig::new(get("L")?, get("d")?, get("h")?, get("d_ff")?, get("V")?);
    cfg.validate().map_err(|e| Error::parse(1, e.to_string()))?;
    Ok(cfg)
}

pub fn parse_model(text: &str) -> Result<EncoderModel> {
    let lines: Vec<&str> = text.lines().collect();
    let header = lines
        .first()
        .ok_or_else(|| Error::parse(1, "empty model file"))?;
    let config = parse_header(header)?;

    let mut tensors: BTreeMap<String, (Matrix, usize)> = BTreeMap::new();
    let mut i = 1;
    while i < lines.len() {
        let line_no = i + 1;
        let line = lines[i].trim();
        if line.is_empty() {
            i += 1;
            continue;
        }
        let inner = line
            .strip_prefix("[tensor ")
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::parse(line_no, "expected `[tensor <name> <rows> <cols>]`"))?;
        let parts: Vec<&str> = inner.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(Error::parse(
                line_no,
                "tensor header needs a name and two dimensions",
            ));
        };
        let rows: usize = rows
            .parse()
            .map_err(|_| Error::parse(line_no, "bad row count"))?;
        let cols: usize = cols
            .parse()
            .map_err(|_| Error::parse(line_no, "bad column count"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let idx = i + 1 + r;
            let row_line = lines
                .get(idx)
                .ok_or_else(|| Error::parse(idx + 1, format!("tensor {name} ends early")))?;
            let before = data.len();
            for tok in row_line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(idx + 1, format!("bad number {tok:?}")))?;
                if !v.is_finite() {
                    return Err(Error::parse(idx + 1, "non-finite weight"));
                }
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(Error::parse(
                    idx + 1,
                    format!("expected {cols} values in {name}"),
                ));
            }
        }
        let m = Matrix::from_vec(rows, cols, data)?;
        if tensors.insert(name.to_string(), (m, line_no)).is_some() {
            return Err(Error::parse(line_no, format!("duplicate tensor {name}")));
        }
        i += 1 + rows;
    }

    let mut take = |name: &str| -> Result<Matrix> {
        tensors
            .remove(name)
            .map(|(m, _)| m)
            .ok_or_else(|| Error::Input(format!("model file has no tensor {name}")))
    };
    let row_vec = |m: Matrix, name: &str| -> Result<Vec<f64>> {
        if m.rows() != 1 {
            return Err(Error::Shape(format!("{name} must be a single row")));
        }
        Ok(m.into_data())
    };

    let embedding = take("embedding")?;
    let mut layers = Vec::with_capacity(config.num_layers);
    for l in 0..config.num_layers {
        let p = format!("layer.{l}");
        let n = |s: &str| format!("{p}.{s}");
        layers.push(LayerWeights {
            wq: take(&n("wq"))?,
            wk: take(&n("wk"))?,
            wv: take(&n("wv"))?,
            wo: take(&n("wo"))?,
            w1: take(&n("w1"))?,
            w2: take(&n("w2"))?,
            ln1_gain: row_vec(take(&n("ln1.gain"))?, &n("ln1.gain"))?,
            ln1_bias: row_vec(take(&n("ln1.bias"))?, &n("ln1.bias"))?,
            ln2_gain: row_vec(take(&n("ln2.gain"))?, &n("ln2.gain"))?,
            ln2_bias: row_vec(take(&n("ln2.bias"))?, &n("ln2.bias"))?,
        });
    }
    let head = match (take("head.weight"), take("head.bias")) {
        (Ok(weight), Ok(bias)) => Some(ClassifierHead {
            weight,
            bias: row_vec(bias, "head.bias")?,
        }),
        (Err(_), Err(_)) => None,
        _ => {
            return Err(Error::Input(
                "head.weight and head.bias must appear together".into(),
            ))
        }
    };
    if let Some((name, (_, line))) = tensors.into_iter().next() {
        return Err(Error::parse(line, format!("unexpected tensor {name}")));
    }
    let model = EncoderModel {
        config,
        embedding,
        layers,
        head,
    };
    model.validate()?;
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EncoderModel> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn write_model(path: impl AsRef<Path>, model: &EncoderModel) -> Result<()> {
    fs::write(path, model.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = EncoderModel::random(EncoderConfig::new(2, 4, 2, 6, 5), Some(3), 42).unwrap();
        let text = m.to_text();
        let back = parse_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn headless_round_trip() {
        let m = EncoderModel::random(EncoderConfig::new(1, 2, 1, 2, 3), None, 1).unwrap();
        assert_eq!(parse_model(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn header_checked() {
        assert!(parse_model("#hashee-model v1 L=1 d=3 h=2 d_ff=2 V=3\n").is_err());
        assert!(parse_model("#hashee-model v1 L=1 d=2 h=1 d_ff=2\n").is_err());
    }

    #[test]
    fn missing_tensor() {
        let m = EncoderModel::random(EncoderConfig::new(1, 2, 1, 2, 3), None, 1).unwrap();
        let text = m.to_text().replace("layer.0.wo", "layer.0.xx");
        assert!(parse_model(&text).is_err());
    }
}
