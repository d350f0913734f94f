//! Fanin-constrained pruning: every neuron keeps at most `F` inputs so that its
//! truth table stays enumerable.
//!
//! Two methods: gradual magnitude pruning on a cubic schedule, and ADMM with a
//! per-row top-`F` projection. Both finish with a hard mask and a fine-tuning
//! phase with the mask frozen.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::qnn::{
    train, train_with_hook, EpochMetrics, Gradients, QnnError, QuantNetwork, TrainConfig, TrainHook,
};
use crate::truthtable::HARD_MAX_TABLE_INPUTS;

#[derive(Debug, Error)]
pub enum PruningError {
    #[error("layer {layer}: fanin {fanin} x {bits} input bits = {inputs} table inputs exceeds the limit of {max}")]
    Infeasible {
        layer: usize,
        fanin: usize,
        bits: u32,
        inputs: usize,
        max: usize,
    },
    #[error("layer {layer} has an unquantized input; cannot bound its table size")]
    UnquantizedInput { layer: usize },
    #[error("invalid pruning configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Train(#[from] QnnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcpMethod {
    Gradual,
    Admm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcpConfig {
    /// Maximum surviving inputs per neuron.
    pub fanin: usize,
    pub method: FcpMethod,
    /// Gradual: optimizer step at which pruning starts.
    #[serde(default)]
    pub start_step: u64,
    /// Gradual: steps from start until the budget is reached.
    #[serde(default = "default_duration")]
    pub duration: u64,
    /// Gradual: steps between mask updates.
    #[serde(default = "default_prune_every")]
    pub prune_every: u64,
    /// ADMM penalty weight.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// ADMM: factor applied to `rho` after every round.
    #[serde(default = "default_rho_growth")]
    pub rho_growth: f64,
    /// ADMM: factor applied to the learning rate after every round.
    #[serde(default = "default_admm_lr_decay")]
    pub admm_lr_decay: f64,
    /// ADMM rounds.
    #[serde(default = "default_admm_steps")]
    pub admm_steps: usize,
    /// Training epochs inside each ADMM round.
    #[serde(default = "default_admm_epochs")]
    pub admm_epochs: usize,
    #[serde(default = "default_fine_tune")]
    pub fine_tune_epochs: usize,
}

fn default_duration() -> u64 {
    400
}
fn default_prune_every() -> u64 {
    10
}
fn default_rho() -> f64 {
    0.05
}
fn default_rho_growth() -> f64 {
    2.0
}
fn default_admm_lr_decay() -> f64 {
    0.7
}
fn default_admm_steps() -> usize {
    8
}
fn default_admm_epochs() -> usize {
    2
}
fn default_fine_tune() -> usize {
    10
}

impl FcpConfig {
    pub fn gradual(fanin: usize) -> Self {
        FcpConfig {
            fanin,
            method: FcpMethod::Gradual,
            start_step: 0,
            duration: default_duration(),
            prune_every: default_prune_every(),
            rho: default_rho(),
            rho_growth: default_rho_growth(),
            admm_lr_decay: default_admm_lr_decay(),
            admm_steps: default_admm_steps(),
            admm_epochs: default_admm_epochs(),
            fine_tune_epochs: default_fine_tune(),
        }
    }

    pub fn admm(fanin: usize) -> Self {
        FcpConfig {
            method: FcpMethod::Admm,
            ..FcpConfig::gradual(fanin)
        }
    }

    pub fn validate(&self) -> Result<(), PruningError> {
        if self.fanin == 0 {
            return Err(PruningError::Config("fanin must be at least 1".into()));
        }
        match self.method {
            FcpMethod::Gradual => {
                if self.duration == 0 || self.prune_every == 0 {
                    return Err(PruningError::Config(
                        "duration and prune_every must be positive".into(),
                    ));
                }
            }
            FcpMethod::Admm => {
                if !(self.rho > 0.0 && self.rho.is_finite()) {
                    return Err(PruningError::Config(format!(
                        "rho must be positive, got {}",
                        self.rho
                    )));
                }
                if !(self.rho_growth >= 1.0 && self.rho_growth.is_finite()) {
                    return Err(PruningError::Config(format!(
                        "rho_growth must be at least 1, got {}",
                        self.rho_growth
                    )));
                }
                if !(self.admm_lr_decay > 0.0 && self.admm_lr_decay <= 1.0) {
                    return Err(PruningError::Config(format!(
                        "admm_lr_decay must be in (0, 1], got {}",
                        self.admm_lr_decay
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Training metrics tagged with the phase that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub phase: String,
    #[serde(flatten)]
    pub metrics: EpochMetrics,
}

#[derive(Clone, Debug)]
pub struct FcpOutcome {
    pub net: QuantNetwork,
    pub history: Vec<PhaseMetrics>,
    /// ADMM only: ‖W − Z‖ after each round.
    pub primal_residuals: Vec<f64>,
    /// ADMM only: support of Z after each round, per layer and neuron.
    pub round_supports: Vec<Vec<Vec<Vec<bool>>>>,
}

/// Keeps the `keep` largest-magnitude entries; ties go to the lower index.
pub fn topk_mask(row: &[f64], keep: usize) -> Vec<bool> {
    topk_mask_within(row, &vec![true; row.len()], keep)
}

/// Like [`topk_mask`] but only positions already set in `allowed` compete.
pub fn topk_mask_within(row: &[f64], allowed: &[bool], keep: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&i| allowed[i]).collect();
    // stable sort keeps ascending index among equal magnitudes
    idx.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()));
    let mut mask = vec![false; row.len()];
    for &i in idx.iter().take(keep) {
        mask[i] = true;
    }
    mask
}

/// Number of inputs kept at step `t` under the cubic schedule
/// `s_t = s_f · (1 − (1 − p)^3)`, `p = clamp((t − t0)/duration, 0, 1)`,
/// `s_f = 1 − F/n_in`.
pub fn gradual_keep_count(t: u64, n_in: usize, fanin: usize, t0: u64, duration: u64) -> usize {
    assert!(duration > 0, "duration must be positive");
    let fanin = fanin.min(n_in);
    if n_in == 0 {
        return 0;
    }
    let progress = ((t as f64 - t0 as f64) / duration as f64).clamp(0.0, 1.0);
    let final_sparsity = 1.0 - fanin as f64 / n_in as f64;
    let sparsity = final_sparsity * (1.0 - (1.0 - progress).powi(3));
    let keep = (n_in as f64 * (1.0 - sparsity)).round() as usize;
    keep.clamp(fanin, n_in)
}

/// Rejects budgets whose tables would exceed `max_table_inputs` variables.
pub fn check_budget(
    net: &QuantNetwork,
    fanin: usize,
    max_table_inputs: usize,
) -> Result<(), PruningError> {
    let max = max_table_inputs.min(HARD_MAX_TABLE_INPUTS);
    for layer in 0..net.layers.len() {
        let bits = net
            .input_activation(layer)
            .bits()
            .ok_or(PruningError::UnquantizedInput { layer })?;
        let effective = fanin.min(net.layers[layer].inputs());
        let inputs = effective * bits as usize;
        if inputs > max {
            return Err(PruningError::Infeasible {
                layer,
                fanin,
                bits,
                inputs,
                max,
            });
        }
    }
    Ok(())
}

/// Largest mask row popcount over the whole network.
pub fn max_fanin(net: &QuantNetwork) -> usize {
    net.layers.iter().map(|l| l.max_fanin()).max().unwrap_or(0)
}

fn enforce_fanin(net: &mut QuantNetwork, fanin: usize) {
    for layer in &mut net.layers {
        for j in 0..layer.outputs() {
            layer.mask[j] = topk_mask_within(&layer.weights[j], &layer.mask[j], fanin);
        }
        layer.apply_mask();
    }
}

struct GradualHook {
    fanin: usize,
    start: u64,
    duration: u64,
    every: u64,
}

impl TrainHook for GradualHook {
    fn after_step(&mut self, step: u64, net: &mut QuantNetwork) {
        let end = self.start + self.duration;
        let due =
            step >= self.start && ((step - self.start).is_multiple_of(self.every) || step >= end);
        if !due || step > end {
            return;
        }
        for layer in &mut net.layers {
            let keep =
                gradual_keep_count(step, layer.inputs(), self.fanin, self.start, self.duration);
            for j in 0..layer.outputs() {
                layer.mask[j] = topk_mask_within(&layer.weights[j], &layer.mask[j], keep);
            }
        }
    }

    fn snapshot_eligible(&self, net: &QuantNetwork) -> bool {
        max_fanin(net) <= self.fanin
    }
}

fn tag(phase: &str, history: Vec<EpochMetrics>) -> impl Iterator<Item = PhaseMetrics> + '_ {
    history.into_iter().map(move |metrics| PhaseMetrics {
        phase: phase.to_owned(),
        metrics,
    })
}

/// Gradual magnitude pruning during continued training, then fine-tuning.
///
/// Runs one training loop long enough to finish the schedule plus
/// `fine_tune_epochs`; only snapshots that already meet the budget can be
/// returned. With a budget at least as wide as every layer this is exactly
/// [`train`] for the same number of epochs.
pub fn apply_gradual_fcp(
    net: &QuantNetwork,
    train_data: &Dataset,
    valid: &Dataset,
    cfg: &FcpConfig,
    hyper: &TrainConfig,
    max_table_inputs: usize,
) -> Result<FcpOutcome, PruningError> {
    if cfg.method != FcpMethod::Gradual {
        return Err(PruningError::Config("expected the gradual method".into()));
    }
    cfg.validate()?;
    check_budget(net, cfg.fanin, max_table_inputs)?;
    let batch = hyper.batch_size.max(1) as u64;
    let steps_per_epoch = (train_data.len() as u64).div_ceil(batch).max(1);
    let end = cfg.start_step + cfg.duration;
    let prune_epochs = end.div_ceil(steps_per_epoch) as usize;
    let run = TrainConfig {
        epochs: prune_epochs + cfg.fine_tune_epochs,
        ..hyper.clone()
    };
    let mut hook = GradualHook {
        fanin: cfg.fanin,
        start: cfg.start_step,
        duration: cfg.duration,
        every: cfg.prune_every,
    };
    let outcome = train_with_hook(net, train_data, valid, &run, &mut hook)?;
    let mut pruned = outcome.net;
    enforce_fanin(&mut pruned, cfg.fanin);
    Ok(FcpOutcome {
        net: pruned,
        history: tag("gradual", outcome.history).collect(),
        primal_residuals: Vec::new(),
        round_supports: Vec::new(),
    })
}

/// Per-layer ADMM auxiliaries.
struct AdmmHook {
    rho: f64,
    z: Vec<Vec<Vec<f64>>>,
    u: Vec<Vec<Vec<f64>>>,
}

impl TrainHook for AdmmHook {
    fn penalty(&self, net: &QuantNetwork, grads: &mut Gradients) -> f64 {
        let mut value = 0.0;
        for (l, layer) in net.layers.iter().enumerate() {
            for j in 0..layer.outputs() {
                for i in 0..layer.inputs() {
                    if !layer.mask[j][i] {
                        continue;
                    }
                    let d = layer.weights[j][i] - self.z[l][j][i] + self.u[l][j][i];
                    value += 0.5 * self.rho * d * d;
                    grads.layers[l].weights[j][i] += self.rho * d;
                }
            }
        }
        value
    }
}

/// Projection of one row onto vectors with at most `fanin` nonzeros.
pub fn project_row(row: &[f64], fanin: usize) -> (Vec<f64>, Vec<bool>) {
    let support = topk_mask(row, fanin);
    let z = row
        .iter()
        .zip(&support)
        .map(|(&v, &s)| if s { v } else { 0.0 })
        .collect();
    (z, support)
}

/// ADMM for the cardinality-constrained training problem:
/// train on `loss + (rho/2)‖W − Z + U‖²`, project `Z ← Π(W + U)`, update
/// `U ← U + W − Z`; after the last round the support of `Z` becomes the mask
/// and the network is fine-tuned. Each round multiplies `rho` by `rho_growth`
/// and the learning rate by `admm_lr_decay`.
pub fn admm_fcp(
    net: &QuantNetwork,
    train_data: &Dataset,
    valid: &Dataset,
    cfg: &FcpConfig,
    hyper: &TrainConfig,
    max_table_inputs: usize,
) -> Result<FcpOutcome, PruningError> {
    if cfg.method != FcpMethod::Admm {
        return Err(PruningError::Config("expected the ADMM method".into()));
    }
    cfg.validate()?;
    check_budget(net, cfg.fanin, max_table_inputs)?;

    let mut current = net.clone();
    let mut supports: Vec<Vec<Vec<bool>>> = Vec::new();
    let mut z: Vec<Vec<Vec<f64>>> = Vec::new();
    for layer in &current.layers {
        let (zs, ss): (Vec<_>, Vec<_>) = layer
            .weights
            .iter()
            .map(|row| project_row(row, cfg.fanin))
            .unzip();
        z.push(zs);
        supports.push(ss);
    }
    let u: Vec<Vec<Vec<f64>>> = current
        .layers
        .iter()
        .map(|l| vec![vec![0.0; l.inputs()]; l.outputs()])
        .collect();
    let mut hook = AdmmHook { rho: cfg.rho, z, u };
    let mut history = Vec::new();
    let mut residuals = Vec::with_capacity(cfg.admm_steps);
    let mut round_supports = Vec::with_capacity(cfg.admm_steps);

    for round in 0..cfg.admm_steps {
        let run = TrainConfig {
            epochs: cfg.admm_epochs,
            learning_rate: hyper.learning_rate * cfg.admm_lr_decay.powi(round as i32),
            seed: hyper.seed.wrapping_add(round as u64 + 1),
            ..hyper.clone()
        };
        let outcome = train_with_hook(&current, train_data, valid, &run, &mut hook)?;
        history.extend(tag(&format!("admm{round}"), outcome.history));
        current = outcome.last;

        let mut residual = 0.0;
        for (l, layer) in current.layers.iter().enumerate() {
            for j in 0..layer.outputs() {
                let w_plus_u: Vec<f64> = layer.weights[j]
                    .iter()
                    .zip(&hook.u[l][j])
                    .map(|(w, u)| w + u)
                    .collect();
                let (zrow, srow) = project_row(&w_plus_u, cfg.fanin);
                for i in 0..layer.inputs() {
                    let d = layer.weights[j][i] - zrow[i];
                    hook.u[l][j][i] += d;
                    residual += d * d;
                }
                hook.z[l][j] = zrow;
                supports[l][j] = srow;
            }
        }
        residuals.push(residual.sqrt());
        round_supports.push(supports.clone());
        // scaled duals follow the penalty: U = Y / rho
        hook.rho *= cfg.rho_growth;
        for v in hook.u.iter_mut().flatten().flatten() {
            *v /= cfg.rho_growth;
        }
        log::debug!("admm round {round}: primal residual {:.5}", residual.sqrt());
    }

    for (layer, sup) in current.layers.iter_mut().zip(&supports) {
        for (mrow, srow) in layer.mask.iter_mut().zip(sup) {
            for (m, &s) in mrow.iter_mut().zip(srow) {
                *m = *m && s;
            }
        }
        layer.apply_mask();
    }
    enforce_fanin(&mut current, cfg.fanin);
    let tune = TrainConfig {
        epochs: cfg.fine_tune_epochs,
        seed: hyper.seed.wrapping_add(cfg.admm_steps as u64 + 1),
        ..hyper.clone()
    };
    let outcome = train(&current, train_data, valid, &tune)?;
    history.extend(tag("fine_tune", outcome.history));
    Ok(FcpOutcome {
        net: outcome.net,
        history,
        primal_residuals: residuals,
        round_supports,
    })
}

/// Dispatches on `cfg.method`.
pub fn apply_fcp(
    net: &QuantNetwork,
    train_data: &Dataset,
    valid: &Dataset,
    cfg: &FcpConfig,
    hyper: &TrainConfig,
    max_table_inputs: usize,
) -> Result<FcpOutcome, PruningError> {
    match cfg.method {
        FcpMethod::Gradual => {
            apply_gradual_fcp(net, train_data, valid, cfg, hyper, max_table_inputs)
        }
        FcpMethod::Admm => admm_fcp(net, train_data, valid, cfg, hyper, max_table_inputs),
    }
}
