//! Gender discriminator reading generator logits: three rectified dense
//! layers applied per step, mean-pooled over steps, sigmoid head.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::{add_mat_vec, add_outer, add_vec_mat, axpy, dot, sigmoid, Matrix};
use crate::{Error, Result};

/// Logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]` before the first layer.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    /// `|V| × d`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
    #[serde(default)]
    frozen: bool,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct DiscriminatorTrace {
    inputs: Matrix,
    clamped: Vec<bool>,
    layers: [Matrix; 3],
    pooled: Vec<f64>,
    /// Pre-sigmoid head output.
    pub logit: f64,
    /// Probability that the text is female.
    pub p_female: f64,
}

impl DiscriminatorTrace {
    /// Fingerprint of every clamp and rectifier decision; two inputs with
    /// the same pattern lie in the same linear region.
    pub fn pattern(&self) -> Vec<bool> {
        let mut bits = self.clamped.clone();
        for layer in &self.layers {
            bits.extend(layer.data.iter().map(|&x| x > 0.0));
        }
        bits
    }
}

impl Discriminator {
    pub fn init(vocab_size: usize, width: usize, rng: &mut impl Rng) -> Self {
        let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        Discriminator {
            w1: Matrix::uniform(vocab_size, width, he(vocab_size), rng),
            b1: vec![0.01; width],
            w2: Matrix::uniform(width, width, he(width), rng),
            b2: vec![0.01; width],
            w3: Matrix::uniform(width, width, he(width), rng),
            b3: vec![0.01; width],
            head_w: (0..width).map(|_| rng.gen_range(-he(width)..=he(width))).collect(),
            head_b: 0.0,
            frozen: false,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let d = self.width();
        Discriminator {
            w1: Matrix::zeros(self.w1.rows, d),
            b1: vec![0.0; d],
            w2: Matrix::zeros(d, d),
            b2: vec![0.0; d],
            w3: Matrix::zeros(d, d),
            b3: vec![0.0; d],
            head_w: vec![0.0; d],
            head_b: 0.0,
            frozen: false,
        }
    }

    pub fn width(&self) -> usize {
        self.b1.len()
    }

    pub fn input_size(&self) -> usize {
        self.w1.rows
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.w1.data,
            &self.b1,
            &self.w2.data,
            &self.b2,
            &self.w3.data,
            &self.b3,
            &self.head_w,
            std::slice::from_ref(&self.head_b),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
            &mut self.w3.data,
            &mut self.b3,
            &mut self.head_w,
            std::slice::from_mut(&mut self.head_b),
        ]
    }

    /// SHA-256 over the little-endian bytes of every parameter.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.tensors() {
            for x in t {
                hasher.update(x.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn check_shapes(&self) -> Result<()> {
        let d = self.width();
        let ok = self.w1.cols == d
            && self.w1.data.len() == self.w1.rows * d
            && (self.w2.rows, self.w2.cols, self.w2.data.len()) == (d, d, d * d)
            && self.b2.len() == d
            && (self.w3.rows, self.w3.cols, self.w3.data.len()) == (d, d, d * d)
            && self.b3.len() == d
            && self.head_w.len() == d;
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint("discriminator tensor shapes are inconsistent".into()))
        }
    }

    /// `self -= lr · grads`; refused once the discriminator is frozen.
    pub fn sgd(&mut self, grads: &Discriminator, lr: f64) -> Result<()> {
        if self.frozen {
            return Err(Error::Config("cannot update a frozen discriminator".into()));
        }
        for (p, g) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            axpy(p, -lr, g);
        }
        Ok(())
    }

    pub fn forward(&self, logits: &Matrix) -> DiscriminatorTrace {
        self.forward_gated(logits, None)
    }

    /// Forward pass that, given a pattern from [`DiscriminatorTrace::pattern`],
    /// reuses its clamp and rectifier decisions instead of recomputing them.
    /// Near the input that produced the pattern this is the smooth piece of
    /// the network the analytic gradient describes.
    pub fn forward_gated(&self, logits: &Matrix, gates: Option<&[bool]>) -> DiscriminatorTrace {
        assert_eq!(logits.cols, self.input_size(), "logit width must match the vocabulary");
        assert!(logits.rows > 0, "discriminator needs at least one step");
        let d = self.width();
        let steps = logits.rows;
        let n_in = logits.data.len();
        if let Some(g) = gates {
            assert_eq!(
                g.len(),
                n_in + 3 * steps * d,
                "gate pattern does not match the input shape"
            );
        }
        let mut inputs = logits.clone();
        let clamped: Vec<bool> = inputs
            .data
            .iter_mut()
            .enumerate()
            .map(|(i, x)| {
                let c = x.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
                let hit = gates.map_or(c != *x, |g| g[i]);
                if hit {
                    *x = c;
                }
                hit
            })
            .collect();
        let apply_gate = |layer: usize, t: usize, v: &mut [f64]| match gates {
            None => relu(v),
            Some(g) => {
                let base = n_in + layer * steps * d + t * d;
                for (j, x) in v.iter_mut().enumerate() {
                    if !g[base + j] {
                        *x = 0.0;
                    }
                }
            }
        };
        let mut layers = [
            Matrix::zeros(steps, d),
            Matrix::zeros(steps, d),
            Matrix::zeros(steps, d),
        ];
        let mut pooled = vec![0.0; d];
        for t in 0..steps {
            let mut a = self.b1.clone();
            add_vec_mat(&mut a, inputs.row(t), &self.w1);
            apply_gate(0, t, &mut a);
            let mut b = self.b2.clone();
            add_vec_mat(&mut b, &a, &self.w2);
            apply_gate(1, t, &mut b);
            let mut c = self.b3.clone();
            add_vec_mat(&mut c, &b, &self.w3);
            apply_gate(2, t, &mut c);
            axpy(&mut pooled, 1.0 / steps as f64, &c);
            layers[0].row_mut(t).copy_from_slice(&a);
            layers[1].row_mut(t).copy_from_slice(&b);
            layers[2].row_mut(t).copy_from_slice(&c);
        }
        let logit = dot(&self.head_w, &pooled) + self.head_b;
        DiscriminatorTrace {
            inputs,
            clamped,
            layers,
            pooled,
            logit,
            p_female: sigmoid(logit),
        }
    }

    /// Back-propagates `dlogit` (the loss gradient at the head's pre-sigmoid
    /// output). Returns the gradient with respect to the raw input logits and
    /// accumulates parameter gradients into `param_grads` when given.
    pub fn backward(
        &self,
        trace: &DiscriminatorTrace,
        dlogit: f64,
        mut param_grads: Option<&mut Discriminator>,
    ) -> Matrix {
        let d = self.width();
        let steps = trace.inputs.rows;
        if let Some(g) = param_grads.as_deref_mut() {
            g.head_b += dlogit;
            axpy(&mut g.head_w, dlogit, &trace.pooled);
        }
        let dpooled: Vec<f64> = self.head_w.iter().map(|w| w * dlogit / steps as f64).collect();
        let mut dinputs = Matrix::zeros(steps, self.input_size());
        for t in 0..steps {
            let a = trace.layers[0].row(t);
            let b = trace.layers[1].row(t);
            let c = trace.layers[2].row(t);
            let dc = gate(&dpooled, c);
            let mut db = vec![0.0; d];
            add_mat_vec(&mut db, &self.w3, &dc);
            let db = gate(&db, b);
            let mut da = vec![0.0; d];
            add_mat_vec(&mut da, &self.w2, &db);
            let da = gate(&da, a);
            add_mat_vec(dinputs.row_mut(t), &self.w1, &da);
            if let Some(g) = param_grads.as_deref_mut() {
                axpy(&mut g.b3, 1.0, &dc);
                add_outer(&mut g.w3, b, &dc);
                axpy(&mut g.b2, 1.0, &db);
                add_outer(&mut g.w2, a, &db);
                axpy(&mut g.b1, 1.0, &da);
                add_outer(&mut g.w1, trace.inputs.row(t), &da);
            }
        }
        for (x, &hit) in dinputs.data.iter_mut().zip(&trace.clamped) {
            if hit {
                *x = 0.0;
            }
        }
        dinputs
    }
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Gradient through a rectifier whose output was `out`.
fn gate(grad: &[f64], out: &[f64]) -> Vec<f64> {
    grad.iter()
        .zip(out)
        .map(|(g, &o)| if o > 0.0 { *g } else { 0.0 })
        .collect()
}

/// Probability of the female class for a sequence of generator logits.
pub fn discriminator_forward(disc: &Discriminator, logits: &Matrix) -> f64 {
    disc.forward(logits).p_female
}

/// Binary cross-entropy of `p_female` against `label` (1 = female), with the
/// probability clamped to `[1e-12, 1 - 1e-12]`.
pub fn discriminator_loss(p_female: f64, label: u8) -> f64 {
    let p = p_female.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Same loss from the head's pre-sigmoid output, with its derivative.
pub(crate) fn bce_from_logit(logit: f64, label: u8) -> (f64, f64) {
    let p = sigmoid(logit);
    (discriminator_loss(p, label), p - label as f64)
}
