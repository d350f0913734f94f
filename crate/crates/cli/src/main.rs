use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use logicnn::config::{CompileConfig, PipelineConfig};
use logicnn::netlist::{report, Netlist};
use logicnn::pipeline::{
    run_compile, run_train, run_verify, CHECKPOINT_FILE, NETLIST_FILE, PLA_MIN_DIR, VERILOG_FILE,
};
use logicnn::qnn::Checkpoint;
use logicnn::truthtable::{read_pla, write_cover_pla};
use logicnn::twolevel::{espresso_minimize, exact_minimize, Cover, QM_MAX_INPUTS};

/// Compile small quantized neural networks into LUT logic.
#[derive(Parser)]
#[command(name = "logicnn", version)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Label column of a CSV dataset (overrides the config).
    #[arg(long)]
    label_column: Option<String>,
}

#[derive(Args, Clone)]
struct CompileFlags {
    /// LUT input count K.
    #[arg(long)]
    lut_size: Option<usize>,
    /// Register every layer boundary.
    #[arg(long, overrides_with = "no_pipeline")]
    pipeline: bool,
    /// Purely combinational netlist.
    #[arg(long, overrides_with = "pipeline")]
    no_pipeline: bool,
}

impl CompileFlags {
    fn apply(&self, opts: &mut CompileConfig) {
        if let Some(k) = self.lut_size {
            opts.lut_size = k;
        }
        if self.pipeline {
            opts.pipeline = true;
        }
        if self.no_pipeline {
            opts.pipeline = false;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and prune a network; writes checkpoint.json and metrics.json.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Extract, minimize and map a checkpoint to a netlist and Verilog.
    Compile {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: CompileFlags,
        /// Checkpoint to compile (default: <out>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Check compiled artifacts against the network; exits non-zero on FAIL.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        netlist: Option<PathBuf>,
        /// Directory of minimized PLAs (default: <out>/pla_min).
        #[arg(long)]
        pla_dir: Option<PathBuf>,
        /// Random end-to-end samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train, compile and verify in one go.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: CompileFlags,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Minimize a single-output PLA file.
    MinimizePla {
        input: PathBuf,
        /// Output file (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Exact minimization (at most 12 inputs).
        #[arg(long)]
        exact: bool,
    },
    /// Print the cost report of a netlist.
    Report {
        netlist: PathBuf,
        /// JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn load_config(common: &Common) -> Result<Option<PipelineConfig>> {
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let mut cfg =
        PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = &common.out {
        cfg.output_dir = std::env::current_dir()?.join(out);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(col) = &common.label_column {
        cfg.dataset.label_column = col.clone();
    }
    Ok(Some(cfg))
}

fn require_config(common: &Common) -> Result<PipelineConfig> {
    let cfg = load_config(common)?.context("--config is required for this command")?;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&PipelineConfig>) -> PathBuf {
    match (cfg, &common.out) {
        (Some(cfg), _) => cfg.output_dir(),
        (None, Some(out)) => out.clone(),
        (None, None) => PathBuf::from("out"),
    }
}

fn cmd_train(common: &Common) -> Result<()> {
    let cfg = require_config(common)?;
    let out = cfg.output_dir();
    let summary = run_train(&cfg, &out)?;
    println!("train accuracy: {:.4}", summary.train_accuracy);
    if let Some(v) = summary.valid_accuracy {
        println!("valid accuracy: {v:.4}");
    }
    println!("test accuracy:  {:.4}", summary.test_accuracy);
    println!("max fanin: {}", summary.max_fanin);
    println!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

fn cmd_compile(common: &Common, flags: &CompileFlags, checkpoint: Option<&Path>) -> Result<()> {
    let cfg = load_config(common)?;
    let mut opts = match &cfg {
        Some(cfg) => {
            cfg.validate()?;
            cfg.compile.clone()
        }
        None => CompileConfig::default(),
    };
    flags.apply(&mut opts);
    let out = out_dir(common, cfg.as_ref());
    let ck_path = checkpoint.map_or_else(|| out.join(CHECKPOINT_FILE), Path::to_owned);
    let ck =
        Checkpoint::read(&ck_path).with_context(|| format!("reading {}", ck_path.display()))?;
    let compiled = run_compile(&ck, &opts, &out)?;
    println!(
        "{} tables, {} ON minterms -> {} cubes",
        compiled.tables, compiled.minterms, compiled.cubes
    );
    print!("{}", compiled.report.to_table());
    println!("wrote {}", out.join(VERILOG_FILE).display());
    Ok(())
}

fn cmd_verify(
    common: &Common,
    checkpoint: Option<&Path>,
    netlist: Option<&Path>,
    pla_dir: Option<&Path>,
    samples: Option<usize>,
) -> Result<bool> {
    let cfg = load_config(common)?;
    let out = out_dir(common, cfg.as_ref());
    let samples = samples.unwrap_or_else(|| {
        cfg.as_ref()
            .map_or(CompileConfig::default().verify_samples, |c| {
                c.compile.verify_samples
            })
    });
    let ck = checkpoint.map_or_else(|| out.join(CHECKPOINT_FILE), Path::to_owned);
    let nl = netlist.map_or_else(|| out.join(NETLIST_FILE), Path::to_owned);
    let pla = pla_dir.map_or_else(|| out.join(PLA_MIN_DIR), Path::to_owned);
    let report = run_verify(cfg.as_ref(), &ck, &nl, &pla, samples, &out)?;
    print!("{}", report.summary());
    Ok(report.passed())
}

fn cmd_minimize_pla(input: &Path, output: Option<&Path>, exact: bool) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let (width, onset) = read_pla(&text).with_context(|| format!("parsing {}", input.display()))?;
    let on = onset.minterms();
    let cover = if exact {
        if width > QM_MAX_INPUTS {
            bail!("exact minimization supports at most {QM_MAX_INPUTS} inputs, file has {width}");
        }
        exact_minimize(width, &on, &[])?
    } else {
        let offset = Cover::from_minterms(width, onset.complement_minterms());
        espresso_minimize(&Cover::from_minterms(width, on), &offset)?
    };
    let pla = write_cover_pla(&cover);
    match output {
        Some(path) => {
            fs::write(path, pla).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{pla}"),
    }
    Ok(())
}

fn cmd_report(path: &Path, json: bool) -> Result<()> {
    let nl = Netlist::read(path).with_context(|| format!("reading {}", path.display()))?;
    let r = report(&nl);
    if json {
        print!("{}", r.to_json());
    } else {
        print!("{}", r.to_table());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Train { common } => cmd_train(&common)?,
        Command::Compile {
            common,
            flags,
            checkpoint,
        } => cmd_compile(&common, &flags, checkpoint.as_deref())?,
        Command::Verify {
            common,
            checkpoint,
            netlist,
            pla_dir,
            samples,
        } => {
            return cmd_verify(
                &common,
                checkpoint.as_deref(),
                netlist.as_deref(),
                pla_dir.as_deref(),
                samples,
            )
        }
        Command::Run {
            common,
            flags,
            samples,
        } => {
            cmd_train(&common)?;
            cmd_compile(&common, &flags, None)?;
            return cmd_verify(&common, None, None, None, samples);
        }
        Command::MinimizePla {
            input,
            output,
            exact,
        } => cmd_minimize_pla(&input, output.as_deref(), exact)?,
        Command::Report { netlist, json } => cmd_report(&netlist, json)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification FAILED");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
