//! Three-layer perceptron (input, ReLU hidden layer, softmax output) stored
//! as one flat parameter vector.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub n_features: usize,
    pub hidden_size: usize,
    pub n_classes: usize,
}

/// One named weight or bias block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub range: Range<usize>,
    pub shape: (usize, usize),
}

impl MlpArch {
    pub fn new(n_features: usize, hidden_size: usize, n_classes: usize) -> Self {
        Self {
            n_features,
            hidden_size,
            n_classes,
        }
    }

    /// Layout: hidden weights (features × hidden), hidden bias, output
    /// weights (hidden × classes), output bias.
    pub fn blocks(&self) -> [ParamBlock; 4] {
        let (f, h, c) = (self.n_features, self.hidden_size, self.n_classes);
        let w1 = 0..f * h;
        let b1 = w1.end..w1.end + h;
        let w2 = b1.end..b1.end + h * c;
        let b2 = w2.end..w2.end + c;
        [
            ParamBlock { name: "hidden.weight", range: w1, shape: (f, h) },
            ParamBlock { name: "hidden.bias", range: b1, shape: (1, h) },
            ParamBlock { name: "output.weight", range: w2, shape: (h, c) },
            ParamBlock { name: "output.bias", range: b2, shape: (1, c) },
        ]
    }

    pub fn n_params(&self) -> usize {
        self.blocks()[3].range.end
    }

    /// Multiply-add count of one forward pass for one sample, times two.
    pub fn forward_flops(&self) -> f64 {
        2.0 * (self.n_features * self.hidden_size + self.hidden_size * self.n_classes) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: MlpArch,
    flat: Vec<f64>,
}

struct Activations {
    hidden: Array2<f64>,
    logits: Array2<f64>,
}

impl ModelParams {
    pub fn zeros(arch: MlpArch) -> Self {
        Self {
            arch,
            flat: vec![0.0; arch.n_params()],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: MlpArch, rng: &mut R) -> Self {
        let mut model = Self::zeros(arch);
        for block in arch.blocks() {
            if block.name.ends_with("weight") {
                let (fan_in, fan_out) = block.shape;
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut model.flat[block.range] {
                    *v = rng.random_range(-limit..=limit);
                }
            }
        }
        model
    }

    pub fn from_flat(arch: MlpArch, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != arch.n_params() {
            return Err(Error::Shape(format!(
                "{} values for an architecture with {} parameters",
                flat.len(),
                arch.n_params()
            )));
        }
        Ok(Self { arch, flat })
    }

    pub fn arch(&self) -> MlpArch {
        self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.flat.iter().all(|v| v.is_finite())
    }

    fn matrix(&self, block: &ParamBlock) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(block.shape, &self.flat[block.range.clone()]).expect("block layout")
    }

    fn vector(&self, block: &ParamBlock) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.flat[block.range.clone()])
    }

    pub fn check_input(&self, n_features: usize, n_classes: usize) -> Result<()> {
        if n_features != self.arch.n_features || n_classes != self.arch.n_classes {
            return Err(Error::Shape(format!(
                "model expects {}x{} (features x classes), data is {n_features}x{n_classes}",
                self.arch.n_features, self.arch.n_classes
            )));
        }
        Ok(())
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Activations {
        let [w1, b1, w2, b2] = self.arch.blocks();
        let mut hidden = x.dot(&self.matrix(&w1)) + self.vector(&b1);
        hidden.mapv_inplace(|v| v.max(0.0));
        let logits = hidden.dot(&self.matrix(&w2)) + self.vector(&b2);
        Activations { hidden, logits }
    }

    /// Class probabilities, one row per sample.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut logits = self.forward(x).logits;
        for mut row in logits.outer_iter_mut() {
            softmax_in_place(row.as_slice_mut().expect("row-major"));
        }
        logits
    }

    /// Raw output scores, one row per sample.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(x).logits
    }

    /// Summed cross-entropy over the rows of `x`.
    pub fn loss_sum(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
        let logits = self.forward(x).logits;
        logits
            .outer_iter()
            .zip(labels)
            .map(|(row, &y)| log_sum_exp(row.as_slice().expect("row-major")) - row[y])
            .sum()
    }

    /// Mean cross-entropy over the batch and its gradient in flat layout.
    pub fn loss_and_grad(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let n = x.nrows();
        if n == 0 || labels.len() != n {
            return Err(Error::Shape(format!("batch of {n} rows with {} labels", labels.len())));
        }
        self.check_input(x.ncols(), self.arch.n_classes)?;
        let [w1, b1, w2, b2] = self.arch.blocks();
        let Activations { hidden, logits } = self.forward(x);

        let mut loss = 0.0;
        let mut delta_out = logits;
        for (mut row, &y) in delta_out.outer_iter_mut().zip(labels) {
            let r = row.as_slice_mut().expect("row-major");
            loss += log_sum_exp(r) - r[y];
            softmax_in_place(r);
            r[y] -= 1.0;
        }
        let inv_n = 1.0 / n as f64;
        delta_out.mapv_inplace(|v| v * inv_n);

        let grad_w2 = hidden.t().dot(&delta_out);
        let grad_b2: Array1<f64> = delta_out.sum_axis(Axis(0));
        let mut delta_hidden = delta_out.dot(&self.matrix(&w2).t());
        delta_hidden.zip_mut_with(&hidden, |d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        let grad_w1 = x.t().dot(&delta_hidden);
        let grad_b1: Array1<f64> = delta_hidden.sum_axis(Axis(0));

        let mut grad = vec![0.0; self.flat.len()];
        let mut fill = |block: &ParamBlock, values: &mut dyn Iterator<Item = &f64>| {
            for (g, v) in grad[block.range.clone()].iter_mut().zip(values) {
                *g = *v;
            }
        };
        fill(&w1, &mut grad_w1.iter());
        fill(&b1, &mut grad_b1.iter());
        fill(&w2, &mut grad_w2.iter());
        fill(&b2, &mut grad_b2.iter());
        Ok((loss * inv_n, grad))
    }

    /// `self -= step * grad`.
    pub fn apply_step(&mut self, grad: &[f64], step: f64) {
        self.flat.iter_mut().zip(grad).for_each(|(w, g)| *w -= step * g);
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}
