//! Mini-batch SGD with momentum for quantized networks.
//!
//! The forward pass quantizes; the backward pass differentiates the
//! straight-through surrogate of each quantizer (see [`Activation::ste_grad`]).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::network::{evaluate, QuantNetwork};
use super::QnnError;
use crate::dataset::Dataset;

/// Smallest value a trainable clipping level may take.
pub const MIN_ALPHA: f64 = 1e-3;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    0.05
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    64
}
fn default_momentum() -> f64 {
    0.9
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            weight_decay: 0.0,
            momentum: default_momentum(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: QuantNetwork,
    pub history: Vec<EpochMetrics>,
    /// Epoch whose parameters were returned; 0 when none qualified.
    pub best_epoch: usize,
    /// Parameters after the final epoch.
    pub last: QuantNetwork,
}

/// How quantizers behave in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Real quantization (training and inference).
    Quantized,
    /// Quantizers replaced by their clipping surrogates; used to check gradients.
    Surrogate,
}

/// Extension points for pruning schemes layered on top of training.
pub trait TrainHook {
    /// Adds a penalty's gradient to `grads` and returns its value.
    fn penalty(&self, _net: &QuantNetwork, _grads: &mut Gradients) -> f64 {
        0.0
    }
    /// Called after every optimizer step (1-based count within the run).
    fn after_step(&mut self, _step: u64, _net: &mut QuantNetwork) {}
    /// Whether the current parameters may be returned as the best snapshot.
    fn snapshot_eligible(&self, _net: &QuantNetwork) -> bool {
        true
    }
}

pub struct NoHook;
impl TrainHook for NoHook {}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub input_alpha: Option<f64>,
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Same order as [`flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.input_alpha);
        for l in &self.layers {
            l.weights.iter().for_each(|r| out.extend_from_slice(r));
            out.extend_from_slice(&l.bias);
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.extend_from_slice(g);
                out.extend_from_slice(b);
            }
            out.extend(l.alpha);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ParamKind {
    Weight { masked: bool },
    Other,
    Alpha,
}

/// All trainable scalars: input alpha, then per layer weights (row-major),
/// bias, batch-norm gamma and beta, activation alpha.
pub fn flat_params(net: &QuantNetwork) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend(net.input_quant.alpha());
    for l in &net.layers {
        l.weights.iter().for_each(|r| out.extend_from_slice(r));
        out.extend_from_slice(&l.bias);
        if let Some(bn) = &l.bn {
            out.extend_from_slice(&bn.gamma);
            out.extend_from_slice(&bn.beta);
        }
        out.extend(l.activation.alpha());
    }
    out
}

fn param_kinds(net: &QuantNetwork) -> Vec<ParamKind> {
    let mut out = Vec::new();
    if net.input_quant.alpha().is_some() {
        out.push(ParamKind::Alpha);
    }
    for l in &net.layers {
        for mrow in &l.mask {
            out.extend(mrow.iter().map(|&m| ParamKind::Weight { masked: !m }));
        }
        out.extend(std::iter::repeat_n(ParamKind::Other, l.outputs()));
        if l.bn.is_some() {
            out.extend(std::iter::repeat_n(ParamKind::Other, 2 * l.outputs()));
        }
        if l.activation.alpha().is_some() {
            out.push(ParamKind::Alpha);
        }
    }
    out
}

/// Inverse of [`flat_params`].
pub fn set_flat_params(net: &mut QuantNetwork, params: &[f64]) {
    let mut it = params.iter().copied();
    let mut next = || it.next().expect("parameter vector too short");
    if let Some(a) = net.input_quant.alpha_mut() {
        *a = next();
    }
    for l in &mut net.layers {
        for row in &mut l.weights {
            row.iter_mut().for_each(|w| *w = next());
        }
        l.bias.iter_mut().for_each(|b| *b = next());
        if let Some(bn) = &mut l.bn {
            bn.gamma.iter_mut().for_each(|g| *g = next());
            bn.beta.iter_mut().for_each(|b| *b = next());
        }
        if let Some(a) = l.activation.alpha_mut() {
            *a = next();
        }
    }
}

struct BnCache {
    xhat: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

struct LayerCache {
    input: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    bn: Option<BnCache>,
    pre: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

/// Intermediate values of one batch.
pub struct BatchCache {
    raw: Vec<Vec<f64>>,
    layers: Vec<LayerCache>,
    batch_stats: bool,
}

impl BatchCache {
    pub fn logits(&self) -> &[Vec<f64>] {
        &self.layers.last().expect("at least one layer").out
    }
}

fn activate(act: &Activation, x: f64, mode: Mode) -> f64 {
    match (act.is_quantized(), mode) {
        (false, _) => x,
        (true, Mode::Quantized) => act.dequantize(act.quantize(x)),
        (true, Mode::Surrogate) => act.surrogate(x),
    }
}

/// Batched forward pass. With `batch_stats` batch norm normalizes with the
/// batch's own mean and (biased) variance, otherwise with running statistics.
pub fn forward_batch(
    net: &QuantNetwork,
    xs: &[Vec<f64>],
    mode: Mode,
    batch_stats: bool,
) -> BatchCache {
    let bsz = xs.len();
    let mut values: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            x.iter()
                .map(|&v| activate(&net.input_quant, v, mode))
                .collect()
        })
        .collect();
    let mut layers = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let outs = layer.outputs();
        let z: Vec<Vec<f64>> = values
            .iter()
            .map(|a| {
                (0..outs)
                    .map(|j| {
                        let w = &layer.weights[j];
                        let m = &layer.mask[j];
                        let mut acc = 0.0;
                        for i in 0..a.len() {
                            if m[i] {
                                acc += w[i] * a[i];
                            }
                        }
                        acc + layer.bias[j]
                    })
                    .collect()
            })
            .collect();
        let (pre, bn_cache) = match (&layer.bn, batch_stats) {
            (Some(bn), true) => {
                let n = bsz as f64;
                let mut mean = vec![0.0; outs];
                let mut var = vec![0.0; outs];
                for row in &z {
                    for j in 0..outs {
                        mean[j] += row[j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                for row in &z {
                    for j in 0..outs {
                        var[j] += (row[j] - mean[j]).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
                let xhat: Vec<Vec<f64>> = z
                    .iter()
                    .map(|row| (0..outs).map(|j| (row[j] - mean[j]) * inv_std[j]).collect())
                    .collect();
                let pre = xhat
                    .iter()
                    .map(|row| {
                        (0..outs)
                            .map(|j| bn.gamma[j] * row[j] + bn.beta[j])
                            .collect()
                    })
                    .collect();
                (
                    pre,
                    Some(BnCache {
                        xhat,
                        inv_std,
                        mean,
                        var,
                    }),
                )
            }
            (Some(bn), false) => (
                z.iter()
                    .map(|row| (0..outs).map(|j| bn.apply(j, row[j])).collect())
                    .collect(),
                None,
            ),
            (None, _) => (z.clone(), None),
        };
        let out: Vec<Vec<f64>> = pre
            .iter()
            .map(|row: &Vec<f64>| {
                row.iter()
                    .map(|&p| activate(&layer.activation, p, mode))
                    .collect()
            })
            .collect();
        layers.push(LayerCache {
            input: std::mem::replace(&mut values, out.clone()),
            z,
            bn: bn_cache,
            pre,
            out,
        });
    }
    BatchCache {
        raw: xs.to_vec(),
        layers,
        batch_stats,
    }
}

/// Mean softmax cross-entropy of the final layer outputs and its gradient
/// with respect to every trainable parameter.
pub fn loss_and_gradients(
    net: &QuantNetwork,
    cache: &BatchCache,
    labels: &[usize],
) -> (f64, Gradients) {
    let bsz = labels.len();
    let n = bsz as f64;
    let logits = cache.logits();
    let mut loss = 0.0;
    let mut upstream: Vec<Vec<f64>> = Vec::with_capacity(bsz);
    for (row, &y) in logits.iter().zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + max - row[y];
        upstream.push(
            exps.iter()
                .enumerate()
                .map(|(k, e)| (e / sum - if k == y { 1.0 } else { 0.0 }) / n)
                .collect(),
        );
    }
    loss /= n;

    let mut layer_grads: Vec<LayerGrad> = Vec::with_capacity(net.layers.len());
    for (layer, lc) in net.layers.iter().zip(&cache.layers).rev() {
        let outs = layer.outputs();
        let ins = layer.inputs();
        let mut alpha_grad = 0.0;
        let mut dpre = vec![vec![0.0; outs]; bsz];
        for b in 0..bsz {
            for j in 0..outs {
                let (dx, da) = layer.activation.ste_grad(lc.pre[b][j]);
                dpre[b][j] = upstream[b][j] * dx;
                alpha_grad += upstream[b][j] * da;
            }
        }
        let (dz, gamma, beta) = match (&layer.bn, &lc.bn) {
            (Some(bn), Some(c)) => {
                let mut dgamma = vec![0.0; outs];
                let mut dbeta = vec![0.0; outs];
                let mut sum_dxhat = vec![0.0; outs];
                let mut sum_dxhat_xhat = vec![0.0; outs];
                for b in 0..bsz {
                    for j in 0..outs {
                        dgamma[j] += dpre[b][j] * c.xhat[b][j];
                        dbeta[j] += dpre[b][j];
                        let dxhat = dpre[b][j] * bn.gamma[j];
                        sum_dxhat[j] += dxhat;
                        sum_dxhat_xhat[j] += dxhat * c.xhat[b][j];
                    }
                }
                let dz: Vec<Vec<f64>> = (0..bsz)
                    .map(|b| {
                        (0..outs)
                            .map(|j| {
                                let dxhat = dpre[b][j] * bn.gamma[j];
                                c.inv_std[j] / n
                                    * (n * dxhat - sum_dxhat[j] - c.xhat[b][j] * sum_dxhat_xhat[j])
                            })
                            .collect()
                    })
                    .collect();
                (dz, Some(dgamma), Some(dbeta))
            }
            (Some(bn), None) => {
                let mut dgamma = vec![0.0; outs];
                let mut dbeta = vec![0.0; outs];
                let dz = (0..bsz)
                    .map(|b| {
                        (0..outs)
                            .map(|j| {
                                let inv = 1.0 / (bn.running_var[j] + bn.eps).sqrt();
                                dgamma[j] += dpre[b][j] * (lc.z[b][j] - bn.running_mean[j]) * inv;
                                dbeta[j] += dpre[b][j];
                                dpre[b][j] * bn.gamma[j] * inv
                            })
                            .collect()
                    })
                    .collect();
                (dz, Some(dgamma), Some(dbeta))
            }
            _ => (dpre, None, None),
        };
        let mut dw = vec![vec![0.0; ins]; outs];
        let mut db = vec![0.0; outs];
        let mut dinput = vec![vec![0.0; ins]; bsz];
        for b in 0..bsz {
            for j in 0..outs {
                let g = dz[b][j];
                if g == 0.0 {
                    continue;
                }
                db[j] += g;
                let w = &layer.weights[j];
                let m = &layer.mask[j];
                for i in 0..ins {
                    if m[i] {
                        dw[j][i] += g * lc.input[b][i];
                        dinput[b][i] += g * w[i];
                    }
                }
            }
        }
        layer_grads.push(LayerGrad {
            weights: dw,
            bias: db,
            gamma,
            beta,
            alpha: layer.activation.alpha().map(|_| alpha_grad),
        });
        upstream = dinput;
    }
    layer_grads.reverse();

    let input_alpha = net.input_quant.alpha().map(|_| {
        let mut g = 0.0;
        for (b, row) in cache.raw.iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                g += upstream[b][i] * net.input_quant.ste_grad(x).1;
            }
        }
        g
    });
    (
        loss,
        Gradients {
            input_alpha,
            layers: layer_grads,
        },
    )
}

/// Loss of the network on a batch, forward only.
pub fn batch_loss(
    net: &QuantNetwork,
    xs: &[Vec<f64>],
    labels: &[usize],
    mode: Mode,
    batch_stats: bool,
) -> f64 {
    let cache = forward_batch(net, xs, mode, batch_stats);
    loss_and_gradients(net, &cache, labels).0
}

fn update_running_stats(net: &mut QuantNetwork, cache: &BatchCache) {
    if !cache.batch_stats {
        return;
    }
    for (layer, lc) in net.layers.iter_mut().zip(&cache.layers) {
        if let (Some(bn), Some(c)) = (&mut layer.bn, &lc.bn) {
            for j in 0..bn.gamma.len() {
                bn.running_mean[j] =
                    (1.0 - BN_MOMENTUM) * bn.running_mean[j] + BN_MOMENTUM * c.mean[j];
                bn.running_var[j] =
                    (1.0 - BN_MOMENTUM) * bn.running_var[j] + BN_MOMENTUM * c.var[j];
            }
        }
    }
}

fn check_compatible(net: &QuantNetwork, data: &Dataset) -> Result<(), QnnError> {
    if !data.is_empty() && data.num_features() != net.num_inputs() {
        return Err(QnnError::DimensionMismatch {
            expected: net.num_inputs(),
            found: data.num_features(),
        });
    }
    if let Some(&l) = data.labels.iter().find(|&&l| l >= net.num_classes) {
        return Err(QnnError::Shape(format!(
            "label {l} out of range for {} classes",
            net.num_classes
        )));
    }
    Ok(())
}

/// Trains with plain SGD + momentum; see [`train_with_hook`].
pub fn train(
    net: &QuantNetwork,
    train: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, QnnError> {
    train_with_hook(net, train, valid, cfg, &mut NoHook)
}

/// Minimizes softmax cross-entropy; returns the eligible parameters with the
/// best validation accuracy (first such epoch on ties). `epochs = 0` returns
/// the input unchanged. Deterministic for a given `cfg.seed`.
pub fn train_with_hook(
    net: &QuantNetwork,
    train: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
    hook: &mut dyn TrainHook,
) -> Result<TrainOutcome, QnnError> {
    net.check_shapes()?;
    check_compatible(net, train)?;
    check_compatible(net, valid)?;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            net: net.clone(),
            history: Vec::new(),
            best_epoch: 0,
            last: net.clone(),
        });
    }
    if train.is_empty() {
        return Err(QnnError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(QnnError::Config("batch_size must be positive".into()));
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = vec![0.0; flat_params(&net).len()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, QuantNetwork, usize)> = None;
    let mut step: u64 = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| train.features[i].clone()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let cache = forward_batch(&net, &xs, Mode::Quantized, true);
            let (mut loss, mut grads) = loss_and_gradients(&net, &cache, &ys);
            loss += hook.penalty(&net, &mut grads);
            if !loss.is_finite() {
                return Err(QnnError::NonFiniteLoss { epoch, step });
            }
            let kinds = param_kinds(&net);
            let mut params = flat_params(&net);
            let g = grads.flatten();
            for k in 0..params.len() {
                let mut gk = g[k];
                match kinds[k] {
                    ParamKind::Weight { masked: true } => {
                        velocity[k] = 0.0;
                        params[k] = 0.0;
                        continue;
                    }
                    ParamKind::Weight { masked: false } => gk += cfg.weight_decay * params[k],
                    _ => {}
                }
                velocity[k] = cfg.momentum * velocity[k] + gk;
                params[k] -= cfg.learning_rate * velocity[k];
                if kinds[k] == ParamKind::Alpha {
                    params[k] = params[k].max(MIN_ALPHA);
                }
            }
            set_flat_params(&mut net, &params);
            update_running_stats(&mut net, &cache);
            step += 1;
            hook.after_step(step, &mut net);
            for l in &mut net.layers {
                l.apply_mask();
            }
            loss_sum += loss;
            batches += 1;
        }
        let train_accuracy = evaluate(&net, train)?;
        let valid_accuracy = if valid.is_empty() {
            train_accuracy
        } else {
            evaluate(&net, valid)?
        };
        log::debug!(
            "epoch {epoch}: loss {:.4} train {:.4} valid {:.4}",
            loss_sum / batches as f64,
            train_accuracy,
            valid_accuracy
        );
        history.push(EpochMetrics {
            epoch,
            loss: loss_sum / batches as f64,
            train_accuracy,
            valid_accuracy,
        });
        if hook.snapshot_eligible(&net)
            && best
                .as_ref()
                .is_none_or(|(acc, _, _)| valid_accuracy > *acc)
        {
            best = Some((valid_accuracy, net.clone(), epoch));
        }
    }
    let (best_net, best_epoch) = match best {
        Some((_, n, e)) => (n, e),
        None => (net.clone(), 0),
    };
    Ok(TrainOutcome {
        net: best_net,
        history,
        best_epoch,
        last: net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_blobs, standardize, BlobSpec};
    use crate::qnn::{Architecture, LayerSpec};
    use rand::Rng;

    fn arch(bn: bool) -> Architecture {
        Architecture {
            inputs: 4,
            input_quant: Activation::SymmetricPact {
                bits: 2,
                alpha: 1.3,
            },
            layers: vec![
                LayerSpec {
                    width: 5,
                    activation: Activation::Pact {
                        bits: 2,
                        alpha: 1.1,
                    },
                    batch_norm: bn,
                },
                LayerSpec {
                    width: 4,
                    activation: Activation::BipolarSign,
                    batch_norm: bn,
                },
                LayerSpec {
                    width: 3,
                    activation: Activation::Identity,
                    batch_norm: false,
                },
            ],
        }
    }

    /// Central differences of the surrogate loss, skipping parameters whose
    /// perturbation moves some pre-activation across a clip boundary.
    fn check_gradients(bn: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = QuantNetwork::new(&arch(bn), seed).unwrap();
        net.layers[0].mask[2][1] = false;
        net.layers[0].apply_mask();
        let xs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<usize> = (0..6).map(|i| i % 3).collect();
        let cache = forward_batch(&net, &xs, Mode::Surrogate, bn);
        let (_, grads) = loss_and_gradients(&net, &cache, &ys);
        let analytic = grads.flatten();
        let base = flat_params(&net);
        let kinds = param_kinds(&net);
        let h = 1e-6;
        let mut checked = 0;
        for k in 0..base.len() {
            if kinds[k] == (ParamKind::Weight { masked: true }) {
                assert_eq!(analytic[k], 0.0);
                continue;
            }
            let mut plus = net.clone();
            let mut p = base.clone();
            p[k] += h;
            set_flat_params(&mut plus, &p);
            let mut minus = net.clone();
            p[k] -= 2.0 * h;
            set_flat_params(&mut minus, &p);
            if !same_regions(&net, &plus, &xs, bn) || !same_regions(&net, &minus, &xs, bn) {
                continue;
            }
            let fd = (batch_loss(&plus, &xs, &ys, Mode::Surrogate, bn)
                - batch_loss(&minus, &xs, &ys, Mode::Surrogate, bn))
                / (2.0 * h);
            let scale = analytic[k].abs().max(fd.abs()).max(1e-3);
            assert!(
                (analytic[k] - fd).abs() / scale < 1e-4,
                "param {k}: analytic {} vs numeric {fd}",
                analytic[k]
            );
            checked += 1;
        }
        assert!(
            checked > base.len() / 2,
            "only {checked} parameters checked"
        );
    }

    /// True when every surrogate stays in the same linear piece, with margin.
    fn same_regions(a: &QuantNetwork, b: &QuantNetwork, xs: &[Vec<f64>], bn: bool) -> bool {
        let ca = forward_batch(a, xs, Mode::Surrogate, bn);
        let cb = forward_batch(b, xs, Mode::Surrogate, bn);
        let margin = 1e-3;
        let region = |act: &Activation, x: f64| -> Option<i8> {
            let edges: Vec<f64> = match *act {
                Activation::BipolarSign => vec![-1.0, 1.0],
                Activation::Pact { alpha, .. } => vec![0.0, alpha],
                Activation::SymmetricPact { alpha, .. } => vec![-alpha, alpha],
                _ => vec![],
            };
            if edges.iter().any(|e| (x - e).abs() < margin) {
                return None;
            }
            Some(edges.iter().filter(|&&e| x > e).count() as i8)
        };
        for (l, (la, lb)) in ca.layers.iter().zip(&cb.layers).enumerate() {
            let act_a = &a.layers[l].activation;
            let act_b = &b.layers[l].activation;
            for (ra, rb) in la.pre.iter().zip(&lb.pre) {
                for (&pa, &pb) in ra.iter().zip(rb) {
                    let (Some(x), Some(y)) = (region(act_a, pa), region(act_b, pb)) else {
                        return false;
                    };
                    if x != y {
                        return false;
                    }
                }
            }
        }
        for row in xs {
            for &x in row {
                if region(&a.input_quant, x).is_none() || region(&b.input_quant, x).is_none() {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn surrogate_gradients_match_finite_differences() {
        for seed in 0..4 {
            check_gradients(false, seed);
        }
    }

    #[test]
    fn surrogate_gradients_match_with_batch_norm() {
        for seed in 10..14 {
            check_gradients(true, seed);
        }
    }

    fn blobs(classes: usize, seed: u64) -> (Dataset, Dataset) {
        let ds = make_blobs(&BlobSpec {
            samples: 400,
            features: 4,
            classes,
            separation: 3.0,
            spread: 1.0,
            seed,
        })
        .unwrap();
        let (tr, te) = crate::dataset::split(&ds, 0.75, seed).unwrap();
        let (tr, others, _) = standardize(&tr, &[te]).unwrap();
        (tr, others.into_iter().next().unwrap())
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (tr, va) = blobs(3, 1);
        let net = QuantNetwork::new(&arch(true), 9).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&net, &tr, &va, &cfg).unwrap();
        assert_eq!(out.net, net);
        assert!(out.history.is_empty());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let (tr, va) = blobs(3, 2);
        let net = QuantNetwork::new(&arch(true), 4).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 17,
            ..TrainConfig::default()
        };
        let a = train(&net, &tr, &va, &cfg).unwrap();
        let b = train(&net, &tr, &va, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn masked_weights_stay_zero() {
        let (tr, va) = blobs(3, 3);
        let mut net = QuantNetwork::new(&arch(false), 4).unwrap();
        net.layers[0].mask[0] = vec![true, false, false, true];
        net.layers[0].apply_mask();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let out = train(&net, &tr, &va, &cfg).unwrap();
        assert_eq!(out.net.layers[0].weights[0][1], 0.0);
        assert_eq!(out.net.layers[0].weights[0][2], 0.0);
        assert_eq!(out.net.layers[0].mask[0], vec![true, false, false, true]);
    }

    #[test]
    fn learns_separable_blobs() {
        let (tr, va) = blobs(3, 5);
        let net = QuantNetwork::new(&arch(true), 6).unwrap();
        let cfg = TrainConfig {
            epochs: 15,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 8,
            ..TrainConfig::default()
        };
        let out = train(&net, &tr, &va, &cfg).unwrap();
        let acc = evaluate(&out.net, &va).unwrap();
        assert!(acc > 0.85, "accuracy {acc}");
    }

    #[test]
    fn non_finite_loss_aborts() {
        let (tr, va) = blobs(3, 7);
        let mut net = QuantNetwork::new(&arch(false), 1).unwrap();
        let last = net.layers.last_mut().unwrap();
        for row in &mut last.weights {
            row.iter_mut().for_each(|w| *w = 1e308);
        }
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let r = train(&net, &tr, &va, &cfg);
        assert!(
            matches!(r, Err(QnnError::NonFiniteLoss { epoch: 1, .. })),
            "{:?}",
            r.map(|o| o.history)
        );
    }
}
