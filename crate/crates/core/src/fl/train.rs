//! Local SGD, federated averaging and evaluation.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::orbits::SatIndex;

const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: u32,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            local_epochs: 2,
            batch_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, section: &str) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!("{section}.learning_rate"), "must be positive"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config(format!("{section}.local_epochs"), "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config(format!("{section}.batch_size"), "must be at least 1"));
        }
        Ok(())
    }
}

/// How client weights are normalised during aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `N_k / Σ N_k` over the clients that reported this round.
    #[default]
    Participating,
    /// `N_k / N` for a fixed total `N`; weights need not sum to one.
    FixedTotal(usize),
}

/// One satellite acting as an FL client.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub sat: SatIndex,
    pub shard: Dataset,
    pub local_model: ModelParams,
}

/// Mean cross-entropy of `model` over `data`.
pub fn local_loss(model: &ModelParams, data: &Dataset) -> Result<f64> {
    model.check_input(data.n_features(), data.n_classes())?;
    if data.is_empty() {
        return Err(Error::Domain("loss over an empty dataset".into()));
    }
    let mut total = 0.0;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let x = data.batch(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
        total += model.loss_sum(x.view(), &labels);
    }
    Ok(total / data.len() as f64)
}

/// One shuffled pass of mini-batch gradient descent.
pub fn sgd_epoch<R: Rng + ?Sized>(
    model: &ModelParams,
    shard: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ModelParams> {
    model.check_input(shard.n_features(), shard.n_classes())?;
    if cfg.batch_size == 0 {
        return Err(Error::Domain("batch size must be at least 1".into()));
    }
    let mut out = model.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    order.shuffle(rng);
    for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
        let x = shard.batch(batch);
        let labels: Vec<usize> = batch.iter().map(|&i| shard.labels()[i]).collect();
        let (loss, grad) = out.loss_and_grad(x.view(), &labels)?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient at parameter {i} in batch {b} (batch loss {loss})"
            )));
        }
        out.apply_step(&grad, cfg.learning_rate);
    }
    Ok(out)
}

/// Runs `epochs` passes of SGD starting from `start`.
pub fn train_epochs<R: Rng + ?Sized>(
    start: &ModelParams,
    shard: &Dataset,
    cfg: &TrainConfig,
    epochs: u32,
    rng: &mut R,
) -> Result<ModelParams> {
    let mut model = start.clone();
    for _ in 0..epochs {
        model = sgd_epoch(&model, shard, cfg, rng)?;
    }
    Ok(model)
}

/// Client update: `cfg.local_epochs` epochs from the received global model.
pub fn train_local<R: Rng + ?Sized>(
    shard: &Dataset,
    global: &ModelParams,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ModelParams> {
    train_epochs(global, shard, cfg, cfg.local_epochs, rng)
}

/// Data-size weighted average, renormalised over the given clients.
pub fn aggregate(models: &[(&ModelParams, usize)]) -> Result<ModelParams> {
    aggregate_with(models, Weighting::Participating)
}

/// Weighted average of `(model, N_k)` pairs, summed in the order given.
pub fn aggregate_with(models: &[(&ModelParams, usize)], weighting: Weighting) -> Result<ModelParams> {
    let (first, _) = models
        .first()
        .ok_or_else(|| Error::Domain("aggregation over an empty client set".into()))?;
    if let Some((m, _)) = models.iter().find(|(m, _)| m.arch() != first.arch()) {
        return Err(Error::Shape(format!(
            "client architecture {:?} differs from {:?}",
            m.arch(),
            first.arch()
        )));
    }
    let mut out = vec![0.0; first.len()];
    match weighting {
        Weighting::Participating => {
            let total: usize = models.iter().map(|(_, n)| n).sum();
            if total == 0 {
                return Err(Error::Domain("participating clients hold no data".into()));
            }
            // Anchored at the first model: Σ w_k = 1 so this equals the
            // weighted mean, and identical inputs come back bit-for-bit.
            let anchor = first.as_slice();
            out.copy_from_slice(anchor);
            for (m, n) in &models[1..] {
                let w = *n as f64 / total as f64;
                for ((o, v), a) in out.iter_mut().zip(m.as_slice()).zip(anchor) {
                    *o += w * (v - a);
                }
            }
        }
        Weighting::FixedTotal(total) => {
            if total == 0 {
                return Err(Error::Domain("fixed total data size must be positive".into()));
            }
            for (m, n) in models {
                let w = *n as f64 / total as f64;
                for (o, v) in out.iter_mut().zip(m.as_slice()) {
                    *o += w * v;
                }
            }
        }
    }
    ModelParams::from_flat(first.arch(), out)
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// (accuracy, mean cross-entropy) on `test`.
pub fn evaluate(model: &ModelParams, test: &Dataset) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::Domain("evaluation on an empty test set".into()));
    }
    model.check_input(test.n_features(), test.n_classes())?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    let all: Vec<usize> = (0..test.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let x = test.batch(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| test.labels()[i]).collect();
        let logits = model.logits(x.view());
        for (row, &y) in logits.outer_iter().zip(&labels) {
            if argmax(row.as_slice().expect("row-major")) == y {
                correct += 1;
            }
        }
        loss += model.loss_sum(x.view(), &labels);
    }
    let n = test.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// `n_k` rows drawn uniformly without replacement.
pub fn sample_shard<R: Rng + ?Sized>(full: &Dataset, n_k: usize, rng: &mut R) -> Result<Dataset> {
    if n_k == 0 {
        return Err(Error::Domain("shard size must be at least 1".into()));
    }
    if n_k > full.len() {
        return Err(Error::Domain(format!(
            "shard size {n_k} exceeds dataset size {}",
            full.len()
        )));
    }
    Ok(full.select(&index::sample(rng, full.len(), n_k).into_vec()))
}

/// Independent shard per client (overlap across clients allowed), drawn in
/// the order given.
pub fn partition_data<R: Rng + ?Sized>(
    full: &Dataset,
    clients: &[SatIndex],
    n_k: usize,
    rng: &mut R,
) -> Result<BTreeMap<SatIndex, Dataset>> {
    clients
        .iter()
        .map(|&c| Ok((c, sample_shard(full, n_k, rng)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fl::model::MlpArch;
    use crate::rng::{substream, Stream, SimRng};
    use ndarray::{array, Array2};

    fn rng(tag: u64) -> SimRng {
        substream(tag, Stream::Train, &[])
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut r = rng(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let feats = Array2::from_shape_fn((n, 2), |(i, j)| {
            let centre = if labels[i] == 0 { 0.25 } else { 0.75 };
            let shift = if j == 0 { centre } else { 1.0 - centre };
            (shift + r.random_range(-0.1..0.1)) as f32
        });
        Dataset::new(feats, labels, 2).unwrap()
    }

    // Independent per-sample cross-entropy: scalar loops, no ndarray.
    fn brute_force_loss(m: &ModelParams, d: &Dataset) -> f64 {
        let a = m.arch();
        let w = m.as_slice();
        let (f, h, c) = (a.n_features, a.hidden_size, a.n_classes);
        let mut total = 0.0;
        for (i, &y) in d.labels().iter().enumerate() {
            let x: Vec<f64> = (0..f).map(|j| f64::from(d.features()[[i, j]])).collect();
            let hidden: Vec<f64> = (0..h)
                .map(|k| {
                    let s: f64 = (0..f).map(|j| x[j] * w[j * h + k]).sum::<f64>() + w[f * h + k];
                    s.max(0.0)
                })
                .collect();
            let off = f * h + h;
            let logits: Vec<f64> = (0..c)
                .map(|o| (0..h).map(|k| hidden[k] * w[off + k * c + o]).sum::<f64>() + w[off + h * c + o])
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            total += -(logits[y].exp() / z).ln();
        }
        total / d.len() as f64
    }

    #[test]
    fn zero_model_has_uniform_loss() {
        let spec = crate::fl::data::SyntheticSpec {
            n_classes: 10,
            n_features: 4,
            samples_per_class: 3,
            ..Default::default()
        };
        let d = spec.train();
        let m = ModelParams::zeros(MlpArch::new(4, 3, 10));
        assert!((local_loss(&m, &d).unwrap() - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_near_zero_loss() {
        let arch = MlpArch::new(1, 1, 2);
        let mut flat = vec![0.0; arch.n_params()];
        flat[arch.blocks()[3].range.start] = 50.0;
        let m = ModelParams::from_flat(arch, flat).unwrap();
        let d = Dataset::new(array![[0.5f32]], vec![0], 2).unwrap();
        assert!(local_loss(&m, &d).unwrap() < 1e-20);
    }

    #[test]
    fn loss_matches_brute_force_on_five_samples() {
        let d = toy(5, 1);
        let m = ModelParams::init(MlpArch::new(2, 3, 2), &mut rng(2));
        let fast = local_loss(&m, &d).unwrap();
        assert!((fast - brute_force_loss(&m, &d)).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_dimension_mismatch() {
        let d = toy(4, 1);
        let m = ModelParams::zeros(MlpArch::new(3, 2, 2));
        assert!(matches!(local_loss(&m, &d), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        // 1 feature, 2 hidden, 2 classes: 10 parameters.
        let arch = MlpArch::new(1, 2, 2);
        let m = ModelParams::from_flat(
            arch,
            vec![0.8, -0.6, 0.3, 0.4, 0.5, -0.7, 0.9, 0.2, 0.1, -0.2],
        )
        .unwrap();
        let x = array![[0.3], [0.9], [0.6]];
        let labels = [0, 1, 1];
        let (_, grad) = m.loss_and_grad(x.view(), &labels).unwrap();
        let step = 1e-5;
        for (i, &g) in grad.iter().enumerate() {
            let mut plus = m.clone();
            plus.as_mut_slice()[i] += step;
            let mut minus = m.clone();
            minus.as_mut_slice()[i] -= step;
            let fd = (plus.loss_sum(x.view(), &labels) - minus.loss_sum(x.view(), &labels))
                / (2.0 * step * 3.0);
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);
            assert!(rel < 1e-4, "param {i}: analytic {g} vs fd {fd}");
        }
    }

    #[test]
    fn zero_learning_rate_leaves_model_unchanged() {
        let d = toy(10, 3);
        let m = ModelParams::init(MlpArch::new(2, 4, 2), &mut rng(4));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(sgd_epoch(&m, &d, &cfg, &mut rng(5)).unwrap(), m);
    }

    #[test]
    fn single_batch_step_matches_closed_form() {
        // All-zero model: hidden units are dead, logits equal the output bias,
        // so only the output bias moves, by -η·mean(p - y) with p uniform.
        let arch = MlpArch::new(1, 2, 2);
        let m = ModelParams::zeros(arch);
        let d = Dataset::new(array![[0.2f32], [0.4], [0.9]], vec![0, 0, 1], 2).unwrap();
        let eta = 0.3;
        let cfg = TrainConfig {
            learning_rate: eta,
            local_epochs: 1,
            batch_size: 3,
        };
        let out = sgd_epoch(&m, &d, &cfg, &mut rng(6)).unwrap();
        let mut expected = vec![0.0; arch.n_params()];
        let b2 = arch.blocks()[3].range.start;
        expected[b2] = eta / 6.0;
        expected[b2 + 1] = -eta / 6.0;
        for (a, e) in out.as_slice().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
    }

    #[test]
    fn one_epoch_reduces_loss_on_separable_data() {
        let d = toy(64, 7);
        let m = ModelParams::init(MlpArch::new(2, 8, 2), &mut rng(8));
        let cfg = TrainConfig {
            learning_rate: 0.05,
            local_epochs: 1,
            batch_size: 8,
        };
        let before = local_loss(&m, &d).unwrap();
        let after = local_loss(&sgd_epoch(&m, &d, &cfg, &mut rng(9)).unwrap(), &d).unwrap();
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let arch = MlpArch::new(1, 1, 2);
        let mut flat = vec![0.0; arch.n_params()];
        flat[0] = f64::INFINITY;
        flat[2] = 1.0;
        let m = ModelParams::from_flat(arch, flat).unwrap();
        let d = Dataset::new(array![[0.5f32]], vec![0], 2).unwrap();
        let err = sgd_epoch(&m, &d, &TrainConfig::default(), &mut rng(1)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }

    #[test]
    fn zero_epochs_return_the_global_model() {
        let d = toy(8, 1);
        let g = ModelParams::init(MlpArch::new(2, 3, 2), &mut rng(2));
        let cfg = TrainConfig {
            local_epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train_local(&d, &g, &cfg, &mut rng(3)).unwrap(), g);
    }

    #[test]
    fn training_is_a_pure_function_of_inputs() {
        let d = toy(40, 1);
        let g = ModelParams::init(MlpArch::new(2, 3, 2), &mut rng(2));
        let cfg = TrainConfig::default();
        let a = train_local(&d, &g, &cfg, &mut rng(3)).unwrap();
        let b = train_local(&d.clone(), &g, &cfg, &mut rng(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, train_local(&d, &g, &cfg, &mut rng(4)).unwrap());
    }

    fn scalar(v: f64) -> ModelParams {
        // One-parameter stand-in: every entry carries the same value.
        ModelParams::from_flat(MlpArch::new(1, 1, 2), vec![v; 6]).unwrap()
    }

    #[test]
    fn aggregate_identities() {
        let a = scalar(1.7);
        assert_eq!(aggregate(&[(&a, 5)]).unwrap(), a);

        let b = scalar(-1.7);
        assert!(aggregate(&[(&a, 4), (&b, 4)]).unwrap().as_slice().iter().all(|&v| v == 0.0));

        let (m6, m3, m2) = (scalar(6.0), scalar(3.0), scalar(2.0));
        let g = aggregate(&[(&m6, 1), (&m3, 2), (&m2, 3)]).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 3.0), "{:?}", g.as_slice());
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(aggregate(&[]), Err(Error::Domain(_))));
        let a = scalar(1.0);
        let other = ModelParams::zeros(MlpArch::new(2, 1, 2));
        assert!(matches!(aggregate(&[(&a, 1), (&other, 1)]), Err(Error::Shape(_))));
    }

    #[test]
    fn fixed_total_weighting_does_not_renormalise() {
        let a = scalar(2.0);
        let g = aggregate_with(&[(&a, 3)], Weighting::FixedTotal(6)).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_model_scores_chance_on_balanced_set() {
        let spec = crate::fl::data::SyntheticSpec {
            n_classes: 10,
            n_features: 3,
            samples_per_class: 7,
            ..Default::default()
        };
        let d = spec.train();
        let (acc, loss) = evaluate(&ModelParams::zeros(MlpArch::new(3, 2, 10)), &d).unwrap();
        assert!((acc - 0.1).abs() < 1e-12);
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn memorising_model_scores_perfectly() {
        // 10 one-hot samples; identity-like weights route feature i to class i.
        let arch = MlpArch::new(10, 10, 10);
        let mut flat = vec![0.0; arch.n_params()];
        let [w1, _, w2, _] = arch.blocks();
        for i in 0..10 {
            flat[w1.range.start + i * 10 + i] = 1.0;
            flat[w2.range.start + i * 10 + i] = 5.0;
        }
        let m = ModelParams::from_flat(arch, flat).unwrap();
        let feats = Array2::from_shape_fn((10, 10), |(i, j)| if i == j { 1.0f32 } else { 0.0 });
        let d = Dataset::new(feats, (0..10).collect(), 10).unwrap();
        assert_eq!(evaluate(&m, &d).unwrap().0, 1.0);
    }

    #[test]
    fn accuracy_matches_per_sample_loop() {
        let spec = crate::fl::data::SyntheticSpec {
            n_classes: 4,
            n_features: 6,
            samples_per_class: 5,
            ..Default::default()
        };
        let d = spec.train();
        let m = ModelParams::init(MlpArch::new(6, 5, 4), &mut rng(10));
        let mut correct = 0;
        for i in 0..d.len() {
            let x = d.batch(&[i]);
            let p = m.predict_proba(x.view());
            let row = p.row(0);
            let mut best = 0;
            for k in 1..4 {
                if row[k] > row[best] {
                    best = k;
                }
            }
            if best == d.labels()[i] {
                correct += 1;
            }
        }
        assert_eq!(evaluate(&m, &d).unwrap().0, correct as f64 / 20.0);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let d = Dataset::new(Array2::zeros((0, 2)), vec![], 2).unwrap();
        assert!(evaluate(&ModelParams::zeros(MlpArch::new(2, 1, 2)), &d).is_err());
    }

    #[test]
    fn partition_sizes_and_determinism() {
        let d = toy(50, 1);
        let clients = [SatIndex::new(1, 1), SatIndex::new(1, 2), SatIndex::new(2, 1)];
        let p = partition_data(&d, &clients, 20, &mut rng(1)).unwrap();
        assert!(p.values().all(|s| s.len() == 20));
        let q = partition_data(&d, &clients, 20, &mut rng(1)).unwrap();
        assert_eq!(p, q);
        assert!(partition_data(&d, &clients, 51, &mut rng(1)).is_err());
        assert!(partition_data(&d, &clients, 0, &mut rng(1)).is_err());
    }

    #[test]
    fn full_shard_is_a_permutation() {
        let d = toy(30, 2);
        let c = [SatIndex::new(1, 1)];
        let shard = &partition_data(&d, &c, 30, &mut rng(3)).unwrap()[&c[0]];
        let mut rows: Vec<(Vec<u32>, usize)> = (0..30)
            .map(|i| (shard.features().row(i).iter().map(|v| v.to_bits()).collect(), shard.labels()[i]))
            .collect();
        let mut orig: Vec<(Vec<u32>, usize)> = (0..30)
            .map(|i| (d.features().row(i).iter().map(|v| v.to_bits()).collect(), d.labels()[i]))
            .collect();
        rows.sort();
        orig.sort();
        assert_eq!(rows, orig);
    }
}
