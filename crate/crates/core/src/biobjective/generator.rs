//! Elman-style encoder/decoder with teacher forcing.
//!
//! The encoder reads the source right to left followed by `<eos>`; its final
//! state seeds the decoder. Reading the source reversed puts the first source
//! words closest to the first decoder steps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{add_mat_vec, add_outer, add_vec_mat, argmax, axpy, log_sum_exp, softmax, Matrix};
use super::vocab::{BOS_ID, EOS_ID, PAD_ID};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// `|V| × e`
    pub emb: Matrix,
    /// `e × h`
    pub enc_wx: Matrix,
    /// `h × h`
    pub enc_wh: Matrix,
    pub enc_b: Vec<f64>,
    pub dec_wx: Matrix,
    pub dec_wh: Matrix,
    pub dec_b: Vec<f64>,
    /// `h × |V|`
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

pub const GENERATOR_TENSORS: [&str; 9] = [
    "emb", "enc_wx", "enc_wh", "enc_b", "dec_wx", "dec_wh", "dec_b", "out_w", "out_b",
];

impl GeneratorParams {
    pub fn zeros(vocab_size: usize, emb_dim: usize, hidden: usize) -> Self {
        GeneratorParams {
            emb: Matrix::zeros(vocab_size, emb_dim),
            enc_wx: Matrix::zeros(emb_dim, hidden),
            enc_wh: Matrix::zeros(hidden, hidden),
            enc_b: vec![0.0; hidden],
            dec_wx: Matrix::zeros(emb_dim, hidden),
            dec_wh: Matrix::zeros(hidden, hidden),
            dec_b: vec![0.0; hidden],
            out_w: Matrix::zeros(hidden, vocab_size),
            out_b: vec![0.0; vocab_size],
        }
    }

    /// Uniform initialisation scaled by fan-in; the recurrences start orthogonal.
    pub fn init(vocab_size: usize, emb_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let e = 1.0 / (emb_dim as f64).sqrt();
        let h = 1.0 / (hidden as f64).sqrt();
        GeneratorParams {
            emb: Matrix::uniform(vocab_size, emb_dim, 0.5, rng),
            enc_wx: Matrix::uniform(emb_dim, hidden, e, rng),
            enc_wh: Matrix::orthogonal(hidden, rng),
            enc_b: vec![0.0; hidden],
            dec_wx: Matrix::uniform(emb_dim, hidden, e, rng),
            dec_wh: Matrix::orthogonal(hidden, rng),
            dec_b: vec![0.0; hidden],
            out_w: Matrix::uniform(hidden, vocab_size, h, rng),
            out_b: vec![0.0; vocab_size],
        }
    }

    pub fn zeros_like(&self) -> Self {
        GeneratorParams::zeros(self.vocab_size(), self.emb_dim(), self.hidden())
    }

    pub fn vocab_size(&self) -> usize {
        self.emb.rows
    }

    pub fn emb_dim(&self) -> usize {
        self.emb.cols
    }

    pub fn hidden(&self) -> usize {
        self.enc_wh.rows
    }

    /// All tensors in [`GENERATOR_TENSORS`] order.
    pub fn tensors(&self) -> [&[f64]; 9] {
        [
            &self.emb.data,
            &self.enc_wx.data,
            &self.enc_wh.data,
            &self.enc_b,
            &self.dec_wx.data,
            &self.dec_wh.data,
            &self.dec_b,
            &self.out_w.data,
            &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            &mut self.emb.data,
            &mut self.enc_wx.data,
            &mut self.enc_wh.data,
            &mut self.enc_b,
            &mut self.dec_wx.data,
            &mut self.dec_wh.data,
            &mut self.dec_b,
            &mut self.out_w.data,
            &mut self.out_b,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// `self -= lr · grads`.
    pub fn sgd(&mut self, grads: &GeneratorParams, lr: f64) {
        for (p, g) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            axpy(p, -lr, g);
        }
    }

    /// Checks that every tensor agrees with the declared dimensions.
    pub fn check_shapes(&self) -> Result<()> {
        let (v, e, h) = (self.vocab_size(), self.emb_dim(), self.hidden());
        let ok = self.enc_wx.rows == e
            && self.enc_wx.cols == h
            && self.enc_wh.cols == h
            && self.enc_b.len() == h
            && (self.dec_wx.rows, self.dec_wx.cols) == (e, h)
            && (self.dec_wh.rows, self.dec_wh.cols) == (h, h)
            && self.dec_b.len() == h
            && (self.out_w.rows, self.out_w.cols) == (h, v)
            && self.out_b.len() == v
            && [
                &self.emb,
                &self.enc_wx,
                &self.enc_wh,
                &self.dec_wx,
                &self.dec_wh,
                &self.out_w,
            ]
            .iter()
            .all(|m| m.data.len() == m.rows * m.cols);
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint("generator tensor shapes are inconsistent".into()))
        }
    }
}

/// Activations kept from a forward pass for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    enc_inputs: Vec<usize>,
    /// `enc_states[0]` is the zero state.
    enc_states: Vec<Vec<f64>>,
    dec_inputs: Vec<usize>,
    /// `dec_states[0]` is the final encoder state.
    dec_states: Vec<Vec<f64>>,
    pub logits: Matrix,
}

fn check_ids(ids: &[usize], size: usize) -> Result<()> {
    match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(Error::IdOutOfRange { id, size }),
        None => Ok(()),
    }
}

fn encoder_inputs(source: &[usize]) -> Vec<usize> {
    source.iter().rev().copied().chain(std::iter::once(EOS_ID)).collect()
}

fn step(x: &[f64], prev: &[f64], wx: &Matrix, wh: &Matrix, b: &[f64]) -> Vec<f64> {
    let mut a = b.to_vec();
    add_vec_mat(&mut a, x, wx);
    add_vec_mat(&mut a, prev, wh);
    a.iter_mut().for_each(|v| *v = v.tanh());
    a
}

fn encode(params: &GeneratorParams, source: &[usize]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let inputs = encoder_inputs(source);
    let mut states = vec![vec![0.0; params.hidden()]];
    for &id in &inputs {
        let next = step(
            params.emb.row(id),
            states.last().unwrap(),
            &params.enc_wx,
            &params.enc_wh,
            &params.enc_b,
        );
        states.push(next);
    }
    (inputs, states)
}

fn project(params: &GeneratorParams, state: &[f64], out: &mut [f64]) {
    out.copy_from_slice(&params.out_b);
    add_vec_mat(out, state, &params.out_w);
}

/// Ids are assumed valid.
pub(crate) fn forward_trace(params: &GeneratorParams, source: &[usize], decoder_inputs: &[usize]) -> ForwardTrace {
    let (enc_inputs, enc_states) = encode(params, source);
    let mut dec_states = vec![enc_states.last().unwrap().clone()];
    let mut logits = Matrix::zeros(decoder_inputs.len(), params.vocab_size());
    for (t, &id) in decoder_inputs.iter().enumerate() {
        let s = step(
            params.emb.row(id),
            &dec_states[t],
            &params.dec_wx,
            &params.dec_wh,
            &params.dec_b,
        );
        project(params, &s, logits.row_mut(t));
        dec_states.push(s);
    }
    ForwardTrace {
        enc_inputs,
        enc_states,
        dec_inputs: decoder_inputs.to_vec(),
        dec_states,
        logits,
    }
}

/// Teacher-forced logits, one row per decoder input. `decoder_inputs` must
/// start with `<bos>`; step `t` sees the encoded source and inputs `..=t`.
pub fn generator_forward(params: &GeneratorParams, source: &[usize], decoder_inputs: &[usize]) -> Result<Matrix> {
    let v = params.vocab_size();
    check_ids(source, v)?;
    check_ids(decoder_inputs, v)?;
    if decoder_inputs.first() != Some(&BOS_ID) {
        return Err(Error::Config("decoder inputs must start with <bos>".into()));
    }
    Ok(forward_trace(params, source, decoder_inputs).logits)
}

/// Summed negative log-likelihood of `gold` under `logits`; `<pad>` steps are skipped.
pub fn generator_loss(logits: &Matrix, gold: &[usize]) -> f64 {
    generator_loss_grad(logits, gold).0
}

/// Loss and its gradient with respect to the logits.
pub(crate) fn generator_loss_grad(logits: &Matrix, gold: &[usize]) -> (f64, Matrix) {
    assert_eq!(logits.rows, gold.len(), "one gold token per step");
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    let mut loss = 0.0;
    for (t, &g) in gold.iter().enumerate() {
        if g == PAD_ID {
            continue;
        }
        let row = logits.row(t);
        loss += log_sum_exp(row) - row[g];
        let p = softmax(row);
        let out = grad.row_mut(t);
        out.copy_from_slice(&p);
        out[g] -= 1.0;
    }
    (loss, grad)
}

/// Accumulates parameter gradients for `dlogits` into `grads`.
pub(crate) fn backward(params: &GeneratorParams, trace: &ForwardTrace, dlogits: &Matrix, grads: &mut GeneratorParams) {
    let h = params.hidden();
    let mut carry = vec![0.0; h];
    for t in (0..trace.dec_inputs.len()).rev() {
        let s = &trace.dec_states[t + 1];
        let prev = &trace.dec_states[t];
        let dl = dlogits.row(t);
        axpy(&mut grads.out_b, 1.0, dl);
        add_outer(&mut grads.out_w, s, dl);
        let mut ds = carry.clone();
        add_mat_vec(&mut ds, &params.out_w, dl);
        let da: Vec<f64> = ds.iter().zip(s).map(|(d, y)| d * (1.0 - y * y)).collect();
        axpy(&mut grads.dec_b, 1.0, &da);
        let id = trace.dec_inputs[t];
        add_outer(&mut grads.dec_wx, params.emb.row(id), &da);
        add_outer(&mut grads.dec_wh, prev, &da);
        add_mat_vec(grads.emb.row_mut(id), &params.dec_wx, &da);
        carry = vec![0.0; h];
        add_mat_vec(&mut carry, &params.dec_wh, &da);
    }
    // `carry` now holds the gradient of the final encoder state
    for t in (0..trace.enc_inputs.len()).rev() {
        let s = &trace.enc_states[t + 1];
        let prev = &trace.enc_states[t];
        let da: Vec<f64> = carry.iter().zip(s).map(|(d, y)| d * (1.0 - y * y)).collect();
        axpy(&mut grads.enc_b, 1.0, &da);
        let id = trace.enc_inputs[t];
        add_outer(&mut grads.enc_wx, params.emb.row(id), &da);
        add_outer(&mut grads.enc_wh, prev, &da);
        add_mat_vec(grads.emb.row_mut(id), &params.enc_wx, &da);
        carry = vec![0.0; h];
        add_mat_vec(&mut carry, &params.enc_wh, &da);
    }
}

/// Greedy decoding until `<eos>` or `max_len` tokens. An empty source
/// produces an empty output.
pub fn greedy_decode(params: &GeneratorParams, source: &[usize], max_len: usize) -> Result<Vec<usize>> {
    check_ids(source, params.vocab_size())?;
    if source.is_empty() {
        return Ok(Vec::new());
    }
    let (_, enc_states) = encode(params, source);
    let mut state = enc_states.last().unwrap().clone();
    let mut input = BOS_ID;
    let mut out = Vec::new();
    let mut logits = vec![0.0; params.vocab_size()];
    while out.len() < max_len {
        state = step(
            params.emb.row(input),
            &state,
            &params.dec_wx,
            &params.dec_wh,
            &params.dec_b,
        );
        project(params, &state, &mut logits);
        let next = argmax(&logits);
        if next == EOS_ID {
            break;
        }
        out.push(next);
        input = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> GeneratorParams {
        GeneratorParams::init(12, 5, 7, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn zero_params_give_flat_logits() {
        let p = GeneratorParams::zeros(9, 4, 6);
        let logits = generator_forward(&p, &[4, 5, 6], &[BOS_ID, 7, 8]).unwrap();
        assert_eq!((logits.rows, logits.cols), (3, 9));
        assert!(logits.data.iter().all(|&x| x == logits.data[0]));
    }

    #[test]
    fn single_step_shape_and_determinism() {
        let p = params();
        let a = generator_forward(&p, &[4, 5], &[BOS_ID]).unwrap();
        assert_eq!((a.rows, a.cols), (1, 12));
        let b = generator_forward(&params(), &[4, 5], &[BOS_ID]).unwrap();
        assert_eq!(
            a.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_bad_ids() {
        let p = params();
        assert!(matches!(
            generator_forward(&p, &[12], &[BOS_ID]),
            Err(Error::IdOutOfRange { id: 12, size: 12 })
        ));
        assert!(generator_forward(&p, &[4], &[5]).is_err());
    }

    #[test]
    fn teacher_forcing_only_sees_the_prefix() {
        let p = params();
        let a = generator_forward(&p, &[4, 5], &[BOS_ID, 6, 7]).unwrap();
        let b = generator_forward(&p, &[4, 5], &[BOS_ID, 6, 9]).unwrap();
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
        assert_ne!(a.row(2), b.row(2));
    }

    #[test]
    fn loss_cases() {
        // certain gold at every step
        let sure = Matrix::from_rows(&[vec![0.0, 800.0, 0.0], vec![0.0, 0.0, 800.0]]);
        assert!(generator_loss(&sure, &[1, 2]).abs() < 1e-12);
        // uniform logits: k non-pad steps cost k ln|V|
        let flat = Matrix::zeros(4, 7);
        assert!((generator_loss(&flat, &[3, PAD_ID, 5, 6]) - 3.0 * 7f64.ln()).abs() < 1e-12);
        // hand softmax: rows (1, 2, 3) gold 2 and (ln 2, 0, 0) gold 1
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2f64.ln(), 0.0, 0.0]]);
        let by_hand = -(3f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp())).ln() - (1.0f64 / 4.0).ln();
        let got = generator_loss(&m, &[2, 1]);
        assert!((got - by_hand).abs() < 1e-12, "{got} vs {by_hand}");
    }

    #[test]
    fn empty_source_decodes_to_nothing() {
        assert!(greedy_decode(&params(), &[], 10).unwrap().is_empty());
        assert!(greedy_decode(&params(), &[4, 5], 3).unwrap().len() <= 3);
    }
}
