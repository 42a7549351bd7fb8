//! Line-based table format:
//!
//! ```text
//! #hashee v1 method=<m> B=<B> L=<L> seed=<s>
//! <token>\t<bucket>\t<layer>
//! ```
//!
//! One token line per id, in ascending id order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{bucket_to_layer, HashMethod, HashTable, Vocab};
use crate::error::{Error, Result};

impl HashTable {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#hashee v1 method={} B={} L={} seed={}\n",
            self.method, self.num_buckets, self.num_layers, self.seed
        );
        for ((tok, b), l) in self.tokens.iter().zip(&self.bucket_of).zip(&self.layer_of) {
            let _ = writeln!(out, "{tok}\t{b}\t{l}");
        }
        out
    }
}

fn header_field<'a>(parts: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    let part = parts
        .next()
        .ok_or_else(|| Error::parse(1, format!("header is missing {key}=")))?;
    part.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::parse(1, format!("expected {key}=..., found {part:?}")))
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {s:?}")))
}

pub fn parse_table(text: &str) -> Result<HashTable> {
    let mut lines = text.split_terminator('\n');
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty table file"))?;
    let mut parts = header.split(' ');
    if parts.next() != Some("#hashee") || parts.next() != Some("v1") {
        return Err(Error::parse(1, "expected `#hashee v1` header"));
    }
    let method: HashMethod = header_field(&mut parts, "method")?
        .parse()
        .map_err(|e: Error| Error::parse(1, e.to_string()))?;
    let num_buckets: usize = parse_num(header_field(&mut parts, "B")?, 1, "bucket count")?;
    let num_layers: usize = parse_num(header_field(&mut parts, "L")?, 1, "layer count")?;
    let seed: u64 = parse_num(header_field(&mut parts, "seed")?, 1, "seed")?;
    if parts.next().is_some() {
        return Err(Error::parse(1, "trailing header fields"));
    }

    let mut tokens = Vec::new();
    let mut buckets = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split('\t').collect();
        let [tok, b, l] = fields[..] else {
            return Err(Error::parse(
                line_no,
                "expected <token>\\t<bucket>\\t<layer>",
            ));
        };
        let b: u32 = parse_num(b, line_no, "bucket")?;
        let l: usize = parse_num(l, line_no, "layer")?;
        let expected = bucket_to_layer(b as usize, num_buckets, num_layers)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        if l != expected {
            return Err(Error::parse(
                line_no,
                format!("bucket {b} maps to layer {expected}, file says {l}"),
            ));
        }
        tokens.push(tok.to_string());
        buckets.push(b);
    }
    let vocab = Vocab::new(tokens).map_err(|e| Error::parse(0, e.to_string()))?;
    HashTable::from_buckets(method, num_buckets, num_layers, seed, &vocab, buckets)
}

pub fn load_table(path: impl AsRef<Path>) -> Result<HashTable> {
    parse_table(&fs::read_to_string(path)?)
}

pub fn write_table(path: impl AsRef<Path>, table: &HashTable) -> Result<()> {
    fs::write(path, table.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::{build_random, RandomTables};

    #[test]
    fn exact_text() {
        let v = Vocab::new(vec!["x".into(), "y".into(), "z".into()]).unwrap();
        let t =
            HashTable::from_buckets(HashMethod::Frequency, 3, 12, 0, &v, vec![0, 2, 1]).unwrap();
        assert_eq!(
            t.to_text(),
            "#hashee v1 method=frequency B=3 L=12 seed=0\nx\t0\t1\ny\t2\t9\nz\t1\t5\n"
        );
        assert_eq!(parse_table(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn random_round_trip() {
        let v = Vocab::synthetic(40);
        let RandomTables::Inconsistent { train, infer } =
            build_random(&v, 5, 10, 77, false).unwrap()
        else {
            panic!()
        };
        for t in [train, infer] {
            let text = t.to_text();
            let back = parse_table(&text).unwrap();
            assert_eq!(back, t);
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn rejects_inconsistent_layer() {
        let err = parse_table("#hashee v1 method=mi B=2 L=4 seed=0\na\t1\t2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn rejects_bad_header() {
        assert!(parse_table("#hashee v2 method=mi B=2 L=4 seed=0\n").is_err());
        assert!(parse_table("#hashee v1 method=nope B=2 L=4 seed=0\n").is_err());
        assert!(parse_table("#hashee v1 method=mi B=5 L=4 seed=0\n").is_err());
    }
}
