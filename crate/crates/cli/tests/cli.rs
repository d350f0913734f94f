use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use logicnn::netlist::{Netlist, NodeKind};
use logicnn::qnn::{Activation, Checkpoint, QuantLayer, QuantNetwork};

fn logicnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logicnn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"
seed = 11
output_dir = "out"

[dataset]
kind = "blobs"
samples = 400
features = 6
classes = 3
separation = 2.5

[architecture]
input = { kind = "symmetric_pact", bits = 2, alpha = 2.0 }
layers = [
  { width = 6, activation = { kind = "pact", bits = 2, alpha = 2.0 }, batch_norm = true },
  { width = 3, activation = { kind = "identity" } },
]

[training]
epochs = 8
batch_size = 32

[fcp]
fanin = 3
method = "gradual"
duration = 60
prune_every = 5
fine_tune_epochs = 3

[compile]
verify_samples = 3000
"#;

fn setup(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    fs::write(&path, config).unwrap();
    (dir, path)
}

#[test]
fn train_writes_checkpoint_and_is_deterministic() {
    let (dir, cfg) = setup(CONFIG);
    let cfg = cfg.to_str().unwrap();
    let o = logicnn(&["train", "--config", cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("test accuracy"));
    let ck_path = dir.path().join("out/checkpoint.json");
    let first = fs::read(&ck_path).unwrap();
    let ck = Checkpoint::read(&ck_path).unwrap();
    for layer in &ck.network.layers {
        assert!(layer.max_fanin() <= 3);
    }
    assert!(dir.path().join("out/metrics.json").exists());

    let o = logicnn(&["train", "--config", cfg, "--out", "again"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("again/checkpoint.json")).unwrap(),
        first
    );

    let o = logicnn(
        &["train", "--config", cfg, "--out", "other", "--seed", "12"],
        dir.path(),
    );
    assert!(o.status.success());
    assert_ne!(
        fs::read(dir.path().join("other/checkpoint.json")).unwrap(),
        first
    );
}

#[test]
fn infeasible_budget_fails_before_training() {
    let text = CONFIG
        .replace("fanin = 3", "fanin = 12")
        .replace("features = 6", "features = 16")
        .replace("width = 6", "width = 16")
        .replace(
            "verify_samples = 3000",
            "verify_samples = 3000\nmax_table_inputs = 20",
        );
    let (dir, cfg) = setup(&text);
    let o = logicnn(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("layer 0") && err.contains("24"), "{err}");
    assert!(!dir.path().join("out").exists());
}

fn and_checkpoint(dir: &Path) -> PathBuf {
    let net = QuantNetwork {
        input_quant: Activation::BipolarSign,
        num_classes: 1,
        layers: vec![QuantLayer {
            weights: vec![vec![1.0, 1.0]],
            bias: vec![-0.5],
            bn: None,
            mask: vec![vec![true, true]],
            activation: Activation::BipolarSign,
        }],
    };
    let path = dir.join("and.json");
    Checkpoint::new(net, 0, None).write(&path).unwrap();
    path
}

#[test]
fn toy_and_network_compiles() {
    let dir = tempfile::tempdir().unwrap();
    let ck = and_checkpoint(dir.path());
    let args = [
        "compile",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        "toy",
        "--no-pipeline",
    ];
    let o = logicnn(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("toy");
    assert_eq!(fs::read_dir(out.join("pla")).unwrap().count(), 1);
    let pla = fs::read_to_string(out.join("pla/0_0_0.pla")).unwrap();
    assert_eq!(pla, ".i 2\n.o 1\n.p 1\n11 1\n.e\n");
    let min = fs::read_to_string(out.join("pla_min/0_0_0.pla")).unwrap();
    assert!(min.contains(".p 1\n"));
    let nl = Netlist::read(&out.join("netlist.json")).unwrap();
    assert_eq!((nl.lut_count(), nl.ff_count()), (1, 0));
    let v = fs::read_to_string(out.join("design.v")).unwrap();
    assert!(v.contains("assign l0_n0_b0 = (x0_0 & x1_0);"), "{v}");
    assert!(stdout(&o).contains("pre-synthesis estimate"));

    let o = logicnn(
        &[
            "compile",
            "--checkpoint",
            ck.to_str().unwrap(),
            "--out",
            "piped",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let nl = Netlist::read(&dir.path().join("piped/netlist.json")).unwrap();
    assert_eq!(nl.ff_count(), 1);

    let o = logicnn(&["report", "piped/netlist.json", "--json"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"ff_count\": 1"));

    let o = logicnn(
        &[
            "verify",
            "--checkpoint",
            ck.to_str().unwrap(),
            "--out",
            "toy",
            "--samples",
            "100",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_owned(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn full_flow_verifies_and_detects_corruption() {
    let (dir, cfg) = setup(CONFIG);
    let cfg = cfg.to_str().unwrap();
    let o = logicnn(&["run", "--config", cfg], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("result: PASS"));
    let out = dir.path().join("out");

    // the composed run equals the stages run separately
    let o = logicnn(&["train", "--config", cfg, "--out", "staged"], dir.path());
    assert!(o.status.success());
    let o = logicnn(&["compile", "--config", cfg, "--out", "staged"], dir.path());
    assert!(o.status.success());
    let o = logicnn(&["verify", "--config", cfg, "--out", "staged"], dir.path());
    assert!(o.status.success());
    assert_eq!(read_tree(&out), read_tree(&dir.path().join("staged")));

    // invert the LUT behind the lowest class bit
    let nl_path = out.join("netlist.json");
    let mut nl = Netlist::read(&nl_path).unwrap();
    let net = nl.outputs.iter().find(|o| o.name == "class_0").unwrap().net;
    let k = net - nl.inputs.len();
    match &mut nl.nodes[k].kind {
        NodeKind::Lut { inputs, mask } => {
            let width = 1u32 << inputs.len();
            *mask = !*mask
                & if width == 64 {
                    u64::MAX
                } else {
                    (1u64 << width) - 1
                };
        }
        NodeKind::Register { .. } => panic!("class bit is registered"),
    }
    nl.write(&nl_path).unwrap();
    let o = logicnn(&["verify", "--config", cfg], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL sample"));

    // netlist from another network
    let o = logicnn(
        &["run", "--config", cfg, "--out", "other", "--seed", "99"],
        dir.path(),
    );
    assert!(o.status.success());
    let other_nl = dir.path().join("other/netlist.json");
    let o = logicnn(
        &[
            "verify",
            "--config",
            cfg,
            "--netlist",
            other_nl.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mismatch"), "{}", stderr(&o));
}

#[test]
fn minimize_pla_command() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("carry.pla");
    fs::write(&input, ".i 3\n.o 1\n.p 4\n011 1\n101 1\n110 1\n111 1\n.e\n").unwrap();
    for extra in [&[][..], &["--exact"][..]] {
        let mut args = vec!["minimize-pla", input.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = logicnn(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains(".p 3\n"), "{}", stdout(&o));
    }
    let o = logicnn(&["minimize-pla", "missing.pla"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_config_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/blobs.toml");
    let o = logicnn(&["run", "--config", cfg.to_str().unwrap(), "--out", "blobs"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("result: PASS"));
    let nl = Netlist::read(&dir.path().join("blobs/netlist.json")).unwrap();
    assert!(nl.ff_count() > 0);
}
