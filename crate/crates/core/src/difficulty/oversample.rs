use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DifficultyDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OversampleConfig {
    /// Minimum share of negative bits wanted in every slot.
    pub floor: f64,
    pub seed: u64,
    /// Floors that cannot all hold at once never settle, so duplication stops
    /// after this many rounds or once the dataset grows by this factor.
    pub max_rounds: usize,
    pub max_growth: f64,
}

impl Default for OversampleConfig {
    fn default() -> Self {
        OversampleConfig {
            floor: 0.3,
            seed: 0,
            max_rounds: 100,
            max_growth: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OversampleReport {
    pub added: usize,
    /// Slots without any negative bit, left as they are.
    pub all_positive_slots: Vec<usize>,
    /// Slots still below the floor when duplication stopped.
    pub unmet_slots: Vec<usize>,
}

impl OversampleReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.all_positive_slots.is_empty() {
            out.push(format!(
                "slots {:?} have no negative labels and were not oversampled",
                self.all_positive_slots
            ));
        }
        if !self.unmet_slots.is_empty() {
            out.push(format!(
                "slots {:?} remain below the negative floor",
                self.unmet_slots
            ));
        }
        out
    }
}

/// Smallest `k` with `neg + k >= floor * (total + k)`.
fn needed(neg: usize, total: usize, floor: f64) -> usize {
    let holds = |k: usize| (neg + k) as f64 >= floor * (total + k) as f64;
    let mut k = ((floor * total as f64 - neg as f64) / (1.0 - floor))
        .ceil()
        .max(0.0) as usize;
    while k > 0 && holds(k - 1) {
        k -= 1;
    }
    while !holds(k) {
        k += 1;
    }
    k
}

/// Appends duplicates of instances that are negative in under-represented
/// slots until every slot with at least one negative reaches the floor.
///
/// Each round lifts the slot with the lowest negative share by drawing the
/// required number of its negative instances with replacement. Duplicates
/// get the id `<id>~<n>`.
pub fn oversample(
    dataset: &DifficultyDataset,
    cfg: &OversampleConfig,
) -> Result<(DifficultyDataset, OversampleReport)> {
    if dataset.is_empty() {
        return Err(Error::Input("cannot oversample an empty dataset".into()));
    }
    if !(0.0..1.0).contains(&cfg.floor) {
        return Err(Error::Config(format!(
            "negative floor {} outside [0, 1)",
            cfg.floor
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = dataset.instances().to_vec();
    let original = instances.len();
    let mut neg = dataset.negative_counts();
    let mut report = OversampleReport {
        all_positive_slots: (0..neg.len()).filter(|&s| neg[s] == 0).collect(),
        ..OversampleReport::default()
    };
    let below = |neg: &[usize], total: usize| -> Vec<usize> {
        (0..neg.len())
            .filter(|&s| neg[s] > 0 && (neg[s] as f64) < cfg.floor * total as f64)
            .collect()
    };

    let cap = (cfg.max_growth * original as f64).max(original as f64);
    for _ in 0..cfg.max_rounds {
        let total = instances.len();
        if total as f64 >= cap {
            break;
        }
        let Some(&slot) = below(&neg, total).iter().min_by(|&&a, &&b| {
            (neg[a] as f64 / total as f64)
                .total_cmp(&(neg[b] as f64 / total as f64))
                .then(a.cmp(&b))
        }) else {
            break;
        };
        let pool: Vec<usize> = (0..total).filter(|&i| !instances[i].bits[slot]).collect();
        for _ in 0..needed(neg[slot], total, cfg.floor) {
            let mut dup = instances[pool[rng.random_range(0..pool.len())]].clone();
            let base = dup.id.split('~').next().unwrap_or_default().to_string();
            dup.id = format!("{base}~{}", instances.len() - original);
            for (c, &b) in neg.iter_mut().zip(&dup.bits) {
                *c += usize::from(!b);
            }
            instances.push(dup);
        }
    }
    report.unmet_slots = below(&neg, instances.len());
    report.added = instances.len() - original;
    Ok((
        DifficultyDataset::new(dataset.num_slots(), instances)?,
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difficulty::DifficultyInstance;

    fn dataset(rows: &[&str]) -> DifficultyDataset {
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

    #[test]
    fn one_negative_in_ten() {
        let mut rows = vec!["1"; 9];
        rows.push("0");
        let (out, report) = oversample(&dataset(&rows), &OversampleConfig::default()).unwrap();
        assert_eq!(report.added, 3);
        assert_eq!(out.len(), 13);
        assert_eq!(out.negative_counts(), vec![4]);
        assert_eq!(4, (0.3f64 * 13.0).ceil() as usize);
        assert_eq!(out.instances()[10].id, "9~0");
    }

    #[test]
    fn balanced_is_unchanged() {
        let ds = dataset(&["01", "10", "00", "11"]);
        let (out, report) = oversample(&ds, &OversampleConfig::default()).unwrap();
        assert_eq!(out, ds);
        assert_eq!(report, OversampleReport::default());
    }

    #[test]
    fn all_positive_slot_is_skipped() {
        let ds = dataset(&["11", "11", "10"]);
        let (out, report) = oversample(&ds, &OversampleConfig::default()).unwrap();
        assert_eq!(report.all_positive_slots, vec![0]);
        assert!(!report.warnings().is_empty());
        assert_eq!(out.negative_counts()[0], 0);
        assert!(out.negative_counts()[1] as f64 >= 0.3 * out.len() as f64);
    }

    #[test]
    fn keeps_originals_and_bits() {
        let ds = dataset(&["111", "110", "111", "111", "011", "111", "111", "111"]);
        let (out, report) = oversample(
            &ds,
            &OversampleConfig {
                seed: 4,
                ..OversampleConfig::default()
            },
        )
        .unwrap();
        assert_eq!(&out.instances()[..ds.len()], ds.instances());
        for dup in &out.instances()[ds.len()..] {
            let src: usize = dup.id.split('~').next().unwrap().parse().unwrap();
            assert_eq!(dup.bits, ds.instances()[src].bits);
        }
        assert!(report.unmet_slots.is_empty());
        let neg = out.negative_counts();
        assert!(neg[0] as f64 >= 0.3 * out.len() as f64 && neg[2] as f64 >= 0.3 * out.len() as f64);
        let again = oversample(
            &ds,
            &OversampleConfig {
                seed: 4,
                ..OversampleConfig::default()
            },
        )
        .unwrap();
        assert_eq!(again.0, out);
    }

    #[test]
    fn unreachable_floors_are_reported() {
        let ds = dataset(&["0111", "1011", "1101", "1110", "1111"]);
        let (_, report) = oversample(&ds, &OversampleConfig::default()).unwrap();
        assert!(!report.unmet_slots.is_empty());
    }

    #[test]
    fn needed_matches_brute_force() {
        for total in 1..40 {
            for neg in 0..=total {
                let k = needed(neg, total, 0.3);
                assert!((neg + k) as f64 >= 0.3 * (total + k) as f64);
                if k > 0 {
                    assert!(((neg + k - 1) as f64) < 0.3 * (total + k - 1) as f64);
                }
            }
        }
    }

    #[test]
    fn errors() {
        let ds = dataset(&["1"]);
        assert!(oversample(
            &ds,
            &OversampleConfig {
                floor: 1.0,
                ..OversampleConfig::default()
            }
        )
        .is_err());
        let empty = DifficultyDataset::new(1, vec![]).unwrap();
        assert!(matches!(
            oversample(&empty, &OversampleConfig::default()),
            Err(Error::Input(_))
        ));
    }
}
