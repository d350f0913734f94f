//! The end-to-end flow as three re-runnable stages with persisted artifacts.
//!
//! ```text
//! out/
//!   checkpoint.json   folded, calibrated network + feature statistics
//!   metrics.json      per-epoch history and final accuracies
//!   pla/              one PLA per neuron output bit, minterm form
//!   pla_min/          the same functions after minimization
//!   netlist.json      LUT netlist
//!   design.v          Verilog
//!   report.json/.txt  cost estimate
//!   verify.json       equivalence report
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{seeds, CompileConfig, ConfigError, DatasetKind, PipelineConfig};
use crate::dataset::{
    load_csv, make_blobs, split_indices, BlobSpec, Dataset, DatasetError, FeatureStats,
};
use crate::netlist::{
    build_netlist, emit_verilog, report, CostReport, Netlist, NetlistError, NeuronLogic,
};
use crate::pruning::{apply_fcp, PhaseMetrics, PruningError};
use crate::qnn::{evaluate, train, Activation, Checkpoint, QnnError, QuantNetwork};
use crate::truthtable::{
    check_feasible, extract_network, read_pla, table_name, write_cover_pla, write_pla,
    NeuronFunction, PlaError, TruthTableError, HARD_MAX_TABLE_INPUTS,
};
use crate::twolevel::{minimize_table, TwoLevelError};
use crate::verify::{
    check_all_neurons, check_end_to_end, logic_accuracy, EquivalenceReport, VerifyError,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PLA_DIR: &str = "pla";
pub const PLA_MIN_DIR: &str = "pla_min";
pub const NETLIST_FILE: &str = "netlist.json";
pub const VERILOG_FILE: &str = "design.v";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const VERIFY_FILE: &str = "verify.json";
pub const MODULE_NAME: &str = "logicnn_top";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("training: {0}")]
    Train(#[from] QnnError),
    #[error("pruning: {0}")]
    Pruning(#[from] PruningError),
    #[error("extraction: {0}")]
    Extract(#[from] TruthTableError),
    #[error("minimization of {table}: {source}")]
    Minimize {
        table: String,
        source: TwoLevelError,
    },
    #[error("PLA {path}: {source}")]
    Pla { path: PathBuf, source: PlaError },
    #[error("netlist: {0}")]
    Netlist(#[from] NetlistError),
    #[error("verification: {0}")]
    Verify(#[from] VerifyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("artifact mismatch: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Train/validation/test partitions standardized with training statistics.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    pub stats: FeatureStats,
}

/// Loads or generates the data and splits it. Validation may be empty.
pub fn prepare_data(cfg: &PipelineConfig) -> Result<Splits, PipelineError> {
    let d = &cfg.dataset;
    let data = match d.kind {
        DatasetKind::Blobs => make_blobs(&BlobSpec {
            samples: d.samples.unwrap_or(0),
            features: d.features.unwrap_or(0),
            classes: d.classes.unwrap_or(0),
            separation: d.separation,
            spread: d.spread,
            seed: cfg.stage_seed(seeds::DATA),
        })?,
        DatasetKind::Csv => {
            let path = cfg.resolve(d.path.as_deref().unwrap_or(Path::new("")));
            load_csv(&path, &d.label_column)?
        }
    };
    let (train_idx, rest) =
        split_indices(data.len(), d.train_fraction, cfg.stage_seed(seeds::SPLIT))?;
    let valid_share = d.valid_fraction / (1.0 - d.train_fraction);
    let n_valid = (rest.len() as f64 * valid_share).floor() as usize;
    let (valid_idx, test_idx) = rest.split_at(n_valid);
    if test_idx.is_empty() {
        return Err(DatasetError::EmptySplit {
            train: train_idx.len(),
            test: 0,
        }
        .into());
    }
    let train = data.subset(&train_idx);
    let stats = FeatureStats::from_dataset(&train)?;
    Ok(Splits {
        train: stats.apply(&train)?,
        valid: stats.apply(&data.subset(valid_idx))?,
        test: stats.apply(&data.subset(test_idx))?,
        stats,
    })
}

/// Checks the network shape against the data before any training.
fn check_against_data(cfg: &PipelineConfig, splits: &Splits) -> Result<(), PipelineError> {
    cfg.check_budget(Some(splits.train.num_features()))?;
    let last = cfg.architecture.layers.len() - 1;
    let width = cfg.architecture.layers[last].width;
    if width != splits.train.num_classes {
        return Err(ConfigError::Layer {
            layer: last,
            message: format!(
                "last layer width {width} does not match {} classes in the data",
                splits.train.num_classes
            ),
        }
        .into());
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub history: Vec<PhaseMetrics>,
    pub train_accuracy: f64,
    pub valid_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub max_fanin: usize,
    pub output_scale: Option<f64>,
}

/// Trains, prunes, folds batch norm and calibrates the classifier. Returns the
/// checkpoint and its metrics without writing anything.
pub fn train_stage(cfg: &PipelineConfig) -> Result<(Checkpoint, TrainSummary), PipelineError> {
    cfg.validate()?;
    let splits = prepare_data(cfg)?;
    check_against_data(cfg, &splits)?;
    let arch = cfg.architecture(splits.train.num_features());
    let net = QuantNetwork::new(&arch, cfg.stage_seed(seeds::INIT))?;
    // model selection falls back to training accuracy without a validation split
    let valid = if splits.valid.is_empty() {
        &splits.train
    } else {
        &splits.valid
    };
    let hyper = cfg.training.with_seed(cfg.stage_seed(seeds::TRAIN));
    let outcome = train(&net, &splits.train, valid, &hyper)?;
    let mut history: Vec<PhaseMetrics> = outcome
        .history
        .into_iter()
        .map(|metrics| PhaseMetrics {
            phase: "train".into(),
            metrics,
        })
        .collect();
    let mut net = outcome.net;
    if let Some(fcp) = &cfg.fcp {
        let fcp_hyper = cfg.training.with_seed(cfg.stage_seed(seeds::FCP));
        let pruned = apply_fcp(
            &net,
            &splits.train,
            valid,
            fcp,
            &fcp_hyper,
            cfg.compile.max_table_inputs,
        )?;
        history.extend(pruned.history);
        net = pruned.net;
    }
    let mut net = net.fold_all()?;
    let output_scale = if matches!(
        net.layers.last().map(|l| &l.activation),
        Some(Activation::Identity)
    ) {
        Some(net.calibrate_output(&splits.train, cfg.architecture.output_bits)?)
    } else {
        None
    };
    let summary = TrainSummary {
        history,
        train_accuracy: evaluate(&net, &splits.train)?,
        valid_accuracy: if splits.valid.is_empty() {
            None
        } else {
            Some(evaluate(&net, &splits.valid)?)
        },
        test_accuracy: evaluate(&net, &splits.test)?,
        max_fanin: crate::pruning::max_fanin(&net),
        output_scale,
    };
    Ok((Checkpoint::new(net, cfg.seed, Some(splits.stats)), summary))
}

/// [`train_stage`] plus writing `checkpoint.json` and `metrics.json`.
pub fn run_train(cfg: &PipelineConfig, out: &Path) -> Result<TrainSummary, PipelineError> {
    let (ck, summary) = train_stage(cfg)?;
    write_file(&out.join(CHECKPOINT_FILE), &ck.to_text())?;
    let mut metrics = serde_json::to_string_pretty(&summary).expect("metrics serialize");
    metrics.push('\n');
    write_file(&out.join(METRICS_FILE), &metrics)?;
    Ok(summary)
}

/// Everything the compile stage produces.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub logic: Vec<NeuronLogic>,
    pub netlist: Netlist,
    pub report: CostReport,
    pub tables: usize,
    pub minterms: usize,
    pub cubes: usize,
    /// `(file name, text)` of every PLA before and after minimization.
    pub plas: Vec<(String, String)>,
    pub plas_min: Vec<(String, String)>,
}

/// Extracts, minimizes, maps and assembles a netlist for `net`.
pub fn compile_network(
    net: &QuantNetwork,
    opts: &CompileConfig,
) -> Result<Compiled, PipelineError> {
    opts.validate()?;
    check_feasible(net, opts.max_table_inputs)?;
    let neurons: Vec<_> = extract_network(net, opts.max_table_inputs)?
        .into_iter()
        .flatten()
        .collect();
    let tables: Vec<_> = neurons.iter().flat_map(|n| &n.tables).collect();
    let covers = tables
        .par_iter()
        .map(|t| {
            minimize_table(t).map_err(|source| PipelineError::Minimize {
                table: t.name.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let plas = tables
        .iter()
        .map(|t| (format!("{}.pla", t.name), write_pla(t)))
        .collect();
    let plas_min = tables
        .iter()
        .zip(&covers)
        .map(|(t, c)| (format!("{}.pla", t.name), write_cover_pla(c)))
        .collect();
    let minterms = tables.iter().map(|t| t.on_set().len()).sum();
    let cubes = covers.iter().map(|c| c.len()).sum();

    let mut it = covers.into_iter();
    let logic: Vec<NeuronLogic> = neurons
        .iter()
        .map(|n| NeuronLogic {
            layer: n.layer,
            neuron: n.neuron,
            input_labels: n
                .tables
                .first()
                .map(|t| t.input_labels.clone())
                .unwrap_or_default(),
            covers: it.by_ref().take(n.tables.len()).collect(),
        })
        .collect();
    let netlist = build_netlist(net, &logic, opts.lut_size, opts.pipeline)?;
    let report = report(&netlist);
    Ok(Compiled {
        logic,
        netlist,
        report,
        tables: tables.len(),
        minterms,
        cubes,
        plas,
        plas_min,
    })
}

/// [`compile_network`] plus writing every artifact under `out`.
pub fn run_compile(
    ck: &Checkpoint,
    opts: &CompileConfig,
    out: &Path,
) -> Result<Compiled, PipelineError> {
    let compiled = compile_network(&ck.network, opts)?;
    for (dir, files) in [(PLA_DIR, &compiled.plas), (PLA_MIN_DIR, &compiled.plas_min)] {
        let dir = out.join(dir);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        for (name, text) in files {
            write_file(&dir.join(name), text)?;
        }
    }
    write_file(&out.join(NETLIST_FILE), &compiled.netlist.to_text())?;
    write_file(
        &out.join(VERILOG_FILE),
        &emit_verilog(&compiled.netlist, MODULE_NAME),
    )?;
    write_file(&out.join(REPORT_JSON), &compiled.report.to_json())?;
    write_file(&out.join(REPORT_TEXT), &compiled.report.to_table())?;
    Ok(compiled)
}

/// Reads minimized covers from `dir` and pairs them with the input labels the
/// network implies.
pub fn load_logic(net: &QuantNetwork, dir: &Path) -> Result<Vec<NeuronLogic>, PipelineError> {
    let mut logic = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        for j in 0..layer.outputs() {
            let f = NeuronFunction::new(net, l, j, HARD_MAX_TABLE_INPUTS)?;
            let mut covers = Vec::with_capacity(f.output_bits());
            for b in 0..f.output_bits() {
                let path = dir.join(format!("{}.pla", table_name(l, j, b)));
                let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                let (width, cover) = read_pla(&text).map_err(|source| PipelineError::Pla {
                    path: path.clone(),
                    source,
                })?;
                if width != f.num_inputs() {
                    return Err(PipelineError::Mismatch(format!(
                        "{} has {width} inputs, neuron has {}",
                        path.display(),
                        f.num_inputs()
                    )));
                }
                covers.push(cover);
            }
            logic.push(NeuronLogic {
                layer: l,
                neuron: j,
                input_labels: f.input_labels(),
                covers,
            });
        }
    }
    Ok(logic)
}

/// Checks covers against the network, the netlist against the network on
/// random inputs, and (when `test` is given) accuracy of both.
pub fn verify_artifacts(
    ck: &Checkpoint,
    logic: &[NeuronLogic],
    nl: &Netlist,
    samples: usize,
    seed: u64,
    test: Option<&Dataset>,
) -> Result<EquivalenceReport, PipelineError> {
    let fp = ck.fingerprint();
    match &nl.source_fingerprint {
        Some(n) if *n == fp => {}
        other => {
            return Err(PipelineError::Mismatch(format!(
                "netlist was built from network {}, checkpoint is {fp}",
                other.as_deref().unwrap_or("<unknown>")
            )))
        }
    }
    let neurons = check_all_neurons(&ck.network, logic, seed)?;
    let end_to_end = check_end_to_end(&ck.network, nl, samples, seed)?;
    let (logic_acc, net_acc) = match test {
        Some(data) => (
            Some(logic_accuracy(nl, data, &ck.network.input_quant)?),
            Some(evaluate(&ck.network, data)?),
        ),
        None => (None, None),
    };
    Ok(EquivalenceReport {
        neurons,
        end_to_end: Some(end_to_end),
        logic_accuracy: logic_acc,
        network_accuracy: net_acc,
    })
}

/// Reads the artifacts in `out`, verifies them and writes `verify.json`.
/// The test split is rebuilt from `cfg` when given.
pub fn run_verify(
    cfg: Option<&PipelineConfig>,
    checkpoint: &Path,
    netlist: &Path,
    pla_min: &Path,
    samples: usize,
    out: &Path,
) -> Result<EquivalenceReport, PipelineError> {
    let ck = Checkpoint::read(checkpoint)?;
    let nl = Netlist::read(netlist)?;
    let logic = load_logic(&ck.network, pla_min)?;
    let (seed, test) = match cfg {
        Some(cfg) => {
            cfg.validate()?;
            let splits = prepare_data(cfg)?;
            let test = match &ck.feature_stats {
                Some(_) => Some(splits.test),
                None => None,
            };
            (cfg.stage_seed(seeds::VERIFY), test)
        }
        None => (seeds::VERIFY, None),
    };
    let report = verify_artifacts(&ck, &logic, &nl, samples, seed, test.as_ref())?;
    write_file(&out.join(VERIFY_FILE), &report.to_json())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
seed = 3
[dataset]
kind = "blobs"
samples = 300
features = 6
classes = 3
train_fraction = 0.6
valid_fraction = 0.2

[architecture]
input = { kind = "symmetric_pact", bits = 2, alpha = 2.0 }
layers = [
  { width = 6, activation = { kind = "pact", bits = 2, alpha = 2.0 }, batch_norm = true },
  { width = 3, activation = { kind = "identity" } },
]

[training]
epochs = 6
batch_size = 32

[fcp]
fanin = 3
method = "gradual"
duration = 40
prune_every = 5
fine_tune_epochs = 2

[compile]
verify_samples = 2000
"#;

    #[test]
    fn splits_partition_the_data() {
        let cfg = PipelineConfig::parse(CONFIG).unwrap();
        let s = prepare_data(&cfg).unwrap();
        assert_eq!(s.train.len(), 180);
        assert_eq!(s.valid.len(), 60);
        assert_eq!(s.test.len(), 60);
    }

    #[test]
    fn stages_compose_and_verify() {
        let cfg = PipelineConfig::parse(CONFIG).unwrap();
        let (ck, summary) = train_stage(&cfg).unwrap();
        assert!(summary.max_fanin <= 3);
        assert!(ck.folded);
        let compiled = compile_network(&ck.network, &cfg.compile).unwrap();
        assert!(compiled.cubes <= compiled.minterms);
        let splits = prepare_data(&cfg).unwrap();
        let report = verify_artifacts(
            &ck,
            &compiled.logic,
            &compiled.netlist,
            2000,
            9,
            Some(&splits.test),
        )
        .unwrap();
        assert!(report.passed(), "{}", report.summary());
        assert_eq!(report.logic_accuracy, Some(summary.test_accuracy));
    }
}
