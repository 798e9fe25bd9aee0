//! Finite-difference verification of the combined-loss gradients.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::generator::GENERATOR_TENSORS;
use super::{combined_loss, combined_loss_and_grad, Discriminator, Example, Gates, GeneratorParams, BOS_ID, EOS_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Coordinates sampled from each generator tensor.
    pub coords_per_tensor: usize,
    pub lambda: f64,
    /// Denominator floor of the relative error, so coordinates with a
    /// vanishing gradient are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
    /// Combines central differences at `step` and `step / 2` by Richardson
    /// extrapolation, cancelling the O(step²) truncation term.
    pub extrapolate: bool,
    /// Multiplies the analytic encoder recurrence gradient by `1 + fault`,
    /// to confirm the check notices a broken gradient.
    pub fault: Option<f64>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-3,
            coords_per_tensor: 25,
            lambda: 1.0,
            floor: 1e-3,
            seed: 0,
            extrapolate: true,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub tensor: &'static str,
    pub coords: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// The same comparison against the plain two-point difference at `step`.
    pub two_point_max_rel_error: f64,
    pub coords_checked: usize,
    /// Coordinates whose perturbation flips a clamp or rectifier decision
    /// somewhere in the discriminator.
    pub kinks_crossed: usize,
    pub per_tensor: Vec<TensorCheck>,
}

fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of the batch-mean combined loss with
/// central differences on coordinates sampled from every generator tensor.
///
/// The discriminator is piecewise smooth. The perturbed losses are evaluated
/// with the clamp and rectifier decisions of the unperturbed point, which is
/// the smooth piece the analytic gradient belongs to; coordinates where a
/// free evaluation would cross a boundary are counted in `kinks_crossed`.
pub fn grad_check(
    params: &GeneratorParams,
    disc: Option<&Discriminator>,
    batch: &[Example],
    config: &GradCheckConfig,
) -> GradCheckReport {
    let (_, mut analytic) = combined_loss_and_grad(params, disc, batch, config.lambda);
    if let Some(f) = config.fault {
        analytic.enc_wh.data.iter_mut().for_each(|g| *g *= 1.0 + f);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let used_rows: Vec<usize> = batch
        .iter()
        .flat_map(|ex| ex.source.iter().chain(&ex.target).copied())
        .chain([BOS_ID, EOS_ID])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let emb_dim = params.emb_dim();

    let mut base_gates = Vec::new();
    combined_loss(params, disc, batch, config.lambda, Gates::Record(&mut base_gates));

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        two_point_max_rel_error: 0.0,
        coords_checked: 0,
        kinks_crossed: 0,
        per_tensor: Vec::new(),
    };
    for (k, name) in GENERATOR_TENSORS.iter().enumerate() {
        let len = params.tensors()[k].len();
        let mut worst: f64 = 0.0;
        let mut two_point_worst: f64 = 0.0;
        let mut checked = 0;
        while checked < config.coords_per_tensor {
            let i = if k == 0 {
                used_rows[rng.gen_range(0..used_rows.len())] * emb_dim + rng.gen_range(0..emb_dim)
            } else {
                rng.gen_range(0..len)
            };
            let original = params.tensors()[k][i];
            let mut eval = |x: f64| {
                probe.tensors_mut()[k][i] = x;
                let mut free = Vec::new();
                combined_loss(&probe, disc, batch, config.lambda, Gates::Record(&mut free));
                let gated = combined_loss(&probe, disc, batch, config.lambda, Gates::Replay(&base_gates));
                (gated, free != base_gates)
            };
            let mut crossed = false;
            let mut central = |h: f64| {
                let (plus, crossed_plus) = eval(original + h);
                let (minus, crossed_minus) = eval(original - h);
                crossed |= crossed_plus || crossed_minus;
                (plus - minus) / (2.0 * h)
            };
            let two_point = central(config.step);
            let numeric = if config.extrapolate {
                (4.0 * central(config.step / 2.0) - two_point) / 3.0
            } else {
                two_point
            };
            probe.tensors_mut()[k][i] = original;
            if crossed {
                report.kinks_crossed += 1;
            }
            let a = analytic.tensors()[k][i];
            worst = worst.max(relative_error(a, numeric, config.floor));
            two_point_worst = two_point_worst.max(relative_error(a, two_point, config.floor));
            checked += 1;
        }
        report.coords_checked += checked;
        report.max_rel_error = report.max_rel_error.max(worst);
        report.two_point_max_rel_error = report.two_point_max_rel_error.max(two_point_worst);
        report.per_tensor.push(TensorCheck {
            tensor: name,
            coords: checked,
            max_rel_error: worst,
        });
    }
    report
}
