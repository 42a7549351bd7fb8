use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DifficultyDataset, DifficultyInstance};
use crate::error::{Error, Result};
use crate::model::{fit_head, ClassifierHead, HeadFitConfig};
use crate::numeric::dot;

/// Predicts one correctness bit per layer slot.
pub trait DifficultyPredictor {
    fn name(&self) -> &str;
    fn predict(&self, inst: &DifficultyInstance) -> Result<Vec<bool>>;
}

/// Constant per-slot majority class; ties go to positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MajorityBaseline {
    pub slots: Vec<bool>,
}

pub fn majority_baseline(train: &DifficultyDataset) -> Result<MajorityBaseline> {
    if train.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let slots = train
        .negative_counts()
        .iter()
        .map(|&neg| 2 * neg <= train.len())
        .collect();
    Ok(MajorityBaseline { slots })
}

impl DifficultyPredictor for MajorityBaseline {
    fn name(&self) -> &str {
        "Majority"
    }

    fn predict(&self, inst: &DifficultyInstance) -> Result<Vec<bool>> {
        if inst.bits.len() != self.slots.len() {
            return Err(Error::Shape(format!(
                "instance {} has {} slots, predictor has {}",
                inst.id,
                inst.bits.len(),
                self.slots.len()
            )));
        }
        Ok(self.slots.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Train a separate classifier for each layer slot instead of one shared.
    pub per_layer: bool,
}

impl Default for LinearBConfig {
    fn default() -> Self {
        LinearBConfig {
            epochs: 100,
            lr: 0.1,
            seed: 0,
            batch_size: 32,
            per_layer: false,
        }
    }
}

/// Logistic classifier of the bit in slot `l` from the layer-`l` hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearB {
    num_slots: usize,
    /// One row when shared, else one per slot.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearBGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

fn states(inst: &DifficultyInstance) -> Result<&[Vec<f64>]> {
    inst.states
        .as_deref()
        .ok_or_else(|| Error::Config(format!("instance {} has no hidden-state features", inst.id)))
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearB {
    pub fn zeros(dim: usize, num_slots: usize, per_layer: bool) -> Self {
        let k = if per_layer { num_slots } else { 1 };
        LinearB {
            num_slots,
            weights: vec![vec![0.0; dim]; k],
            biases: vec![0.0; k],
        }
    }

    pub fn is_shared(&self) -> bool {
        self.weights.len() == 1
    }

    fn param(&self, slot: usize) -> usize {
        if self.is_shared() {
            0
        } else {
            slot
        }
    }

    pub fn logit(&self, slot: usize, x: &[f64]) -> f64 {
        let p = self.param(slot);
        dot(&self.weights[p], x) + self.biases[p]
    }

    fn check<'a>(&self, inst: &'a DifficultyInstance) -> Result<&'a [Vec<f64>]> {
        let s = states(inst)?;
        if s.len() != self.num_slots || s.iter().any(|r| r.len() != self.weights[0].len()) {
            return Err(Error::Shape(format!(
                "features of instance {} do not fit the predictor",
                inst.id
            )));
        }
        Ok(s)
    }

    fn pairs_loss_grad(
        &self,
        data: &DifficultyDataset,
        pairs: &[(usize, usize)],
    ) -> Result<(f64, LinearBGradients)> {
        let mut g = LinearBGradients {
            weights: vec![vec![0.0; self.weights[0].len()]; self.weights.len()],
            biases: vec![0.0; self.biases.len()],
        };
        let mut loss = 0.0;
        for &(i, slot) in pairs {
            let inst = &data.instances()[i];
            let x = &self.check(inst)?[slot];
            let y = if inst.bits[slot] { 1.0 } else { 0.0 };
            let z = self.logit(slot, x);
            loss += softplus(z) - y * z;
            let dz = sigmoid(z) - y;
            let p = self.param(slot);
            for (gw, xv) in g.weights[p].iter_mut().zip(x) {
                *gw += dz * xv;
            }
            g.biases[p] += dz;
        }
        let k = 1.0 / pairs.len() as f64;
        g.weights.iter_mut().flatten().for_each(|v| *v *= k);
        g.biases.iter_mut().for_each(|v| *v *= k);
        Ok((loss * k, g))
    }

    fn all_pairs(data: &DifficultyDataset) -> Vec<(usize, usize)> {
        (0..data.len())
            .flat_map(|i| (0..data.num_slots()).map(move |s| (i, s)))
            .collect()
    }

    /// Mean binary cross-entropy over all (instance, slot) pairs and its
    /// gradient.
    pub fn loss_and_gradients(&self, data: &DifficultyDataset) -> Result<(f64, LinearBGradients)> {
        if data.is_empty() || data.num_slots() != self.num_slots {
            return Err(Error::Input("dataset does not match the predictor".into()));
        }
        self.pairs_loss_grad(data, &Self::all_pairs(data))
    }

    pub fn train(data: &DifficultyDataset, cfg: &LinearBConfig) -> Result<LinearB> {
        if data.is_empty() {
            return Err(Error::Input("empty training set".into()));
        }
        let first = states(&data.instances()[0])?;
        let dim = first.first().map_or(0, Vec::len);
        let mut model = LinearB::zeros(dim, data.num_slots(), cfg.per_layer);
        let mut pairs = Self::all_pairs(data);
        if pairs.is_empty() {
            return Ok(model);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for epoch in 0..cfg.epochs {
            pairs.shuffle(&mut rng);
            for chunk in pairs.chunks(cfg.batch_size.max(1)) {
                let (loss, g) = model.pairs_loss_grad(data, chunk)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
                }
                for (w, gw) in model.weights.iter_mut().zip(&g.weights) {
                    for (a, b) in w.iter_mut().zip(gw) {
                        *a -= cfg.lr * b;
                    }
                }
                for (b, gb) in model.biases.iter_mut().zip(&g.biases) {
                    *b -= cfg.lr * gb;
                }
            }
        }
        Ok(model)
    }
}

impl DifficultyPredictor for LinearB {
    fn name(&self) -> &str {
        "Linear-B"
    }

    fn predict(&self, inst: &DifficultyInstance) -> Result<Vec<bool>> {
        let s = self.check(inst)?;
        Ok((0..self.num_slots)
            .map(|l| self.logit(l, &s[l]) >= 0.0)
            .collect())
    }
}

pub type LinearMConfig = HeadFitConfig;

/// Multinomial classifier of the first correct layer from the pooled token
/// embedding; class `L` stands for "no layer is correct". A predicted first
/// layer `e` marks slots `e..L` correct and the rest incorrect.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearM {
    num_slots: usize,
    pub head: ClassifierHead,
}

fn pooled(inst: &DifficultyInstance) -> Result<&[f64]> {
    inst.pooled
        .as_deref()
        .ok_or_else(|| Error::Config(format!("instance {} has no pooled embedding", inst.id)))
}

impl LinearM {
    pub fn train(data: &DifficultyDataset, cfg: &LinearMConfig) -> Result<LinearM> {
        if data.is_empty() {
            return Err(Error::Input("empty training set".into()));
        }
        let feats = data
            .instances()
            .iter()
            .map(|i| pooled(i).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = data
            .instances()
            .iter()
            .map(|i| i.first_correct_layer() - 1)
            .collect();
        Ok(LinearM {
            num_slots: data.num_slots(),
            head: fit_head(&feats, &labels, data.num_slots() + 1, cfg)?,
        })
    }

    /// Predicted first correct layer, 1-based; `L + 1` means none.
    pub fn exit_layer(&self, inst: &DifficultyInstance) -> Result<usize> {
        Ok(self.head.predict(pooled(inst)?)? + 1)
    }
}

impl DifficultyPredictor for LinearM {
    fn name(&self) -> &str {
        "Linear-M"
    }

    fn predict(&self, inst: &DifficultyInstance) -> Result<Vec<bool>> {
        let e = self.exit_layer(inst)?;
        Ok((1..=self.num_slots).map(|l| l >= e).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difficulty::{evaluate, evaluate_predictions};

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

    #[test]
    fn majority_per_slot() {
        let mut rows = vec!["10"; 9];
        rows.push("01");
        let m = majority_baseline(&ds(&rows)).unwrap();
        assert_eq!(m.slots, vec![true, false]);
        let tie = majority_baseline(&ds(&["0", "1"])).unwrap();
        assert_eq!(tie.slots, vec![true]);
        assert!(majority_baseline(&DifficultyDataset::new(1, vec![]).unwrap()).is_err());
    }

    #[test]
    fn majority_beats_every_constant() {
        let data = ds(&["101", "100", "011", "111", "000", "110"]);
        let m = majority_baseline(&data).unwrap();
        let acc = |p: &[bool]| -> usize {
            data.instances()
                .iter()
                .map(|i| i.bits.iter().zip(p).filter(|(a, b)| a == b).count())
                .sum()
        };
        let best = acc(&m.slots);
        for mask in 0..8u32 {
            let p: Vec<bool> = (0..3).map(|s| mask >> s & 1 == 1).collect();
            assert!(best >= acc(&p));
        }
    }

    #[test]
    fn all_positive_majority_is_not_applicable() {
        let train = ds(&["11", "11", "11"]);
        let test = ds(&["01", "11", "10"]);
        let m = majority_baseline(&train).unwrap();
        let metrics = evaluate(&m, &test).unwrap();
        assert_eq!(metrics.recall, 0.0);
        assert!(!metrics.f1_applicable());
    }

    fn with_states(
        data: DifficultyDataset,
        f: impl Fn(usize, usize, bool) -> Vec<f64>,
    ) -> DifficultyDataset {
        let n = data.num_slots();
        let instances = data
            .into_instances()
            .into_iter()
            .enumerate()
            .map(|(i, mut inst)| {
                inst.states = Some((0..n).map(|s| f(i, s, inst.bits[s])).collect());
                inst
            })
            .collect();
        DifficultyDataset::new(n, instances).unwrap()
    }

    fn separable(n: usize) -> DifficultyDataset {
        let rows: Vec<String> = (0..n)
            .map(|i| {
                (0..3)
                    .map(|s| if (i * 7 + s * 3) % 5 < 3 { '1' } else { '0' })
                    .collect()
            })
            .collect();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        with_states(ds(&refs), |i, s, b| {
            let sign = if b { 1.0 } else { -1.0 };
            vec![
                sign * (1.0 + (i % 3) as f64 * 0.2),
                s as f64 * 0.1,
                ((i + s) % 4) as f64 * 0.3 - 0.45,
            ]
        })
    }

    #[test]
    fn separable_features_are_learned() {
        let data = separable(40);
        for per_layer in [false, true] {
            let cfg = LinearBConfig {
                per_layer,
                ..LinearBConfig::default()
            };
            let p = LinearB::train(&data, &cfg).unwrap();
            assert_eq!(p.is_shared(), !per_layer);
            assert!(evaluate(&p, &data).unwrap().f1 >= 0.95);
        }
    }

    #[test]
    fn zero_features_collapse_to_bias() {
        let data = with_states(ds(&["1", "1", "1", "0"]), |_, _, _| vec![0.0, 0.0]);
        let p = LinearB::train(&data, &LinearBConfig::default()).unwrap();
        assert_eq!(p.weights[0], vec![0.0, 0.0]);
        assert!(p.biases[0] > 0.0);
        let preds: Vec<Vec<bool>> = data
            .instances()
            .iter()
            .map(|i| p.predict(i).unwrap())
            .collect();
        assert!(preds.iter().all(|b| b == &vec![true]));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = separable(9);
        let mut p = LinearB::zeros(3, 3, true);
        for (k, w) in p.weights.iter_mut().flatten().enumerate() {
            *w = ((k * 37 % 11) as f64 - 5.0) * 0.13;
        }
        p.biases = vec![0.2, -0.3, 0.1];
        let (_, g) = p.loss_and_gradients(&data).unwrap();
        let h = 1e-6;
        for r in 0..3 {
            for c in 0..3 {
                let mut a = p.clone();
                a.weights[r][c] += h;
                let mut b = p.clone();
                b.weights[r][c] -= h;
                let fd = (a.loss_and_gradients(&data).unwrap().0
                    - b.loss_and_gradients(&data).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g.weights[r][c]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn missing_states_rejected() {
        assert!(matches!(
            LinearB::train(&ds(&["1", "0"]), &LinearBConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn divergence_reported() {
        let cfg = LinearBConfig {
            lr: 1e308,
            ..LinearBConfig::default()
        };
        let data = with_states(ds(&["1", "0", "1", "0"]), |i, _, _| {
            vec![1e300 * (i as f64 + 1.0)]
        });
        assert!(matches!(
            LinearB::train(&data, &cfg),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn linear_m_exit_bits() {
        let mut data = ds(&["011", "001", "111", "000"]);
        let instances = data
            .clone()
            .into_instances()
            .into_iter()
            .map(|mut i| {
                let e = i.first_correct_layer() as f64;
                i.pooled = Some(vec![e, 1.0 / e]);
                i
            })
            .collect();
        data = DifficultyDataset::new(3, instances).unwrap();
        let cfg = LinearMConfig {
            epochs: 2000,
            lr: 0.5,
            ..LinearMConfig::default()
        };
        let m = LinearM::train(&data, &cfg).unwrap();
        let preds: Vec<Vec<bool>> = data
            .instances()
            .iter()
            .map(|i| m.predict(i).unwrap())
            .collect();
        let metrics = evaluate_predictions(&preds, &data).unwrap();
        assert!(metrics.f1 > 0.5);
        assert_eq!(m.predict(&data.instances()[0]).unwrap().len(), 3);
    }
}
