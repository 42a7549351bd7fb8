use std::fmt::Write as _;

use super::{DifficultyDataset, DifficultyPredictor};
use crate::error::{Error, Result};

/// Precision, recall and F1 of detecting the negative (0) label, pooled over
/// every (instance, slot) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegClassMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl NegClassMetrics {
    /// Zero denominators give 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // Harmonic mean of precision and recall, in a form free of rounding
        // in the intermediate ratios.
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        NegClassMetrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// False when the predictor never predicted the negative label, in which
    /// case precision and hence F1 are undefined.
    pub fn f1_applicable(&self) -> bool {
        self.tp + self.fp > 0
    }

    pub fn f1_display(&self) -> String {
        if self.f1_applicable() {
            format!("{:.4}", self.f1)
        } else {
            "n/a".to_string()
        }
    }
}

pub fn evaluate_predictions(
    predictions: &[Vec<bool>],
    gold: &DifficultyDataset,
) -> Result<NegClassMetrics> {
    if gold.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    if predictions.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} instances",
            predictions.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (pred, inst) in predictions.iter().zip(gold.instances()) {
        if pred.len() != inst.bits.len() {
            return Err(Error::Shape(format!(
                "prediction for {} has {} slots",
                inst.id,
                pred.len()
            )));
        }
        for (&p, &g) in pred.iter().zip(&inst.bits) {
            match (p, g) {
                (false, false) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (true, true) => {}
            }
        }
    }
    Ok(NegClassMetrics::from_counts(tp, fp, fn_))
}

pub fn evaluate<P: DifficultyPredictor + ?Sized>(
    predictor: &P,
    test: &DifficultyDataset,
) -> Result<NegClassMetrics> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    let predictions = test
        .instances()
        .iter()
        .map(|inst| predictor.predict(inst))
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(&predictions, test)
}

/// One row of metrics per predictor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<(String, NegClassMetrics)>,
}

const HEADER: &str = "model\tprecision\trecall\tf1\ttp\tfp\tfn";

impl MetricsTable {
    pub fn push(&mut self, name: impl Into<String>, m: NegClassMetrics) {
        self.rows.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Option<&NegClassMetrics> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "# negative-class precision / recall / F1, micro-averaged over layer slots\n",
        );
        out.push_str(HEADER);
        out.push('\n');
        for (name, m) in &self.rows {
            let _ = writeln!(
                out,
                "{name}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}",
                m.precision,
                m.recall,
                m.f1_display(),
                m.tp,
                m.fp,
                m.fn_
            );
        }
        out
    }
}

/// Reads a table written by [`MetricsTable::to_text`]; ratios are rebuilt
/// from the counts.
pub fn parse_metrics(text: &str) -> Result<MetricsTable> {
    let mut table = MetricsTable::default();
    let mut saw_header = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != HEADER {
                return Err(Error::parse(lineno, "missing metrics header"));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                lineno,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(lineno, format!("bad count {s:?}")))
        };
        let m =
            NegClassMetrics::from_counts(count(fields[4])?, count(fields[5])?, count(fields[6])?);
        if fields[3] != m.f1_display() || fields[1] != format!("{:.4}", m.precision) {
            return Err(Error::parse(lineno, "ratios disagree with counts"));
        }
        table.push(fields[0], m);
    }
    if !saw_header {
        return Err(Error::parse(1, "missing metrics header"));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difficulty::DifficultyInstance;

    fn ds(rows: &[&str]) -> DifficultyDataset {
        let instances = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                DifficultyInstance::new(
                    i.to_string(),
                    vec!["t".into()],
                    r.chars().map(|c| c == '1').collect(),
                )
            })
            .collect();
        DifficultyDataset::new(rows[0].len(), instances).unwrap()
    }

    fn bits(rows: &[&str]) -> Vec<Vec<bool>> {
        rows.iter()
            .map(|r| r.chars().map(|c| c == '1').collect())
            .collect()
    }

    #[test]
    fn hand_confusion_matrix() {
        // gold negatives at pairs 0,1,2; predicted negatives at 0,1,3.
        let gold = ds(&["0", "0", "0", "1", "1", "1"]);
        let pred = bits(&["0", "0", "1", "0", "1", "1"]);
        let m = evaluate_predictions(&pred, &gold).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (2, 1, 1));
        assert_eq!(m.precision, 2.0 / 3.0);
        assert_eq!(m.recall, 2.0 / 3.0);
        assert_eq!(m.f1, 2.0 / 3.0);
    }

    #[test]
    fn perfect_predictions() {
        let gold = ds(&["01", "10", "11"]);
        let m = evaluate_predictions(&bits(&["01", "10", "11"]), &gold).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_positive_predictions() {
        let gold = ds(&["01", "11"]);
        let m = evaluate_predictions(&bits(&["11", "11"]), &gold).unwrap();
        assert_eq!((m.recall, m.f1), (0.0, 0.0));
        assert!(!m.f1_applicable());
        assert_eq!(m.f1_display(), "n/a");
    }

    #[test]
    fn table_round_trip() {
        let mut t = MetricsTable::default();
        t.push("Majority", NegClassMetrics::from_counts(0, 0, 7));
        t.push("Linear-B", NegClassMetrics::from_counts(5, 3, 2));
        let text = t.to_text();
        assert!(text.contains("Majority\t0.0000\t0.0000\tn/a\t0\t0\t7"));
        assert_eq!(parse_metrics(&text).unwrap(), t);
        assert!(parse_metrics("model\tp\n").is_err());
        assert!(parse_metrics(&text.replace("\t5\t3\t2", "\t5\t3\t9")).is_err());
    }

    #[test]
    fn empty_test_set() {
        let empty = DifficultyDataset::new(2, vec![]).unwrap();
        assert!(matches!(
            evaluate_predictions(&[], &empty),
            Err(Error::Input(_))
        ));
    }
}
