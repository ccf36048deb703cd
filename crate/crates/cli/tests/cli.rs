//! Behavior of the `cae` binary: exit codes, reproducible outputs, and the
//! full train/analyze/verify command surface on small inputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cae_cli::formats::{self, LoadedModel};
use cae_core::matrix::Matrix;
use cae_core::model::{Activation, TiedAutoEncoder};

fn cae() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cae"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawning the cae binary")
}

fn run_ok(cmd: &mut Command) -> String {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "{cmd:?} exited {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn version_names_the_format() {
    let stdout = run_ok(cae().arg("--version"));
    assert!(stdout.contains("model format_version 1"), "got: {stdout}");
}

#[test]
fn missing_required_flag_exits_2_with_usage() {
    let out = run(cae().args(["gen", "rect", "--side", "16", "--out", "/tmp/nowhere"]));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "stderr: {stderr}");
}

#[test]
fn invalid_hyperparameter_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(cae().args([
        "pretrain",
        "--data",
        "whatever.amat",
        "--hidden",
        "4",
        "--objective",
        "dae-g",
        "--sigma=-1",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));

    // objective without its hyper-parameter is a usage error too
    let out = run(cae().args([
        "pretrain",
        "--data",
        "whatever.amat",
        "--hidden",
        "4",
        "--objective",
        "cae",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(cae().args([
        "pretrain",
        "--data",
        dir.path().join("absent.amat").to_str().unwrap(),
        "--hidden",
        "4",
        "--objective",
        "ae",
        "--epochs",
        "1",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_rect_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(cae().args([
            "gen", "rect", "--n", "200", "--side", "16", "--seed", "7", "--out",
            out.to_str().unwrap(),
        ]));
    }
    let file_a = fs::read(a.join("rect.amat")).unwrap();
    let file_b = fs::read(b.join("rect.amat")).unwrap();
    assert_eq!(file_a, file_b);
    let lines = file_a.iter().filter(|&&c| c == b'\n').count();
    assert_eq!(lines, 200);
    assert!(a.join("run_config.json").exists());
}

#[test]
fn gen_idx_fixture_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(cae().args(["gen", "idx-fixture", "--out", dir.path().to_str().unwrap()]));
    let ds = cae_cli::io::load_idx(
        &dir.path().join("fixture-images-idx3-ubyte"),
        &dir.path().join("fixture-labels-idx1-ubyte"),
    )
    .unwrap();
    assert_eq!(ds.n(), 2);
    assert_eq!(ds.labels().unwrap(), &[3, 7]);
}

#[test]
fn gen_patches_over_synthetic_cifar() {
    let dir = tempfile::tempdir().unwrap();
    // 20 pseudo-random CIFAR records.
    let mut rng = cae_core::rng::Rng::from_seed(9);
    let mut bytes = Vec::new();
    for _ in 0..20 {
        bytes.push(rng.index(10) as u8);
        for _ in 0..3072 {
            bytes.push(rng.next_u64() as u8);
        }
    }
    let cifar = dir.path().join("batch.bin");
    fs::write(&cifar, &bytes).unwrap();
    run_ok(cae().args([
        "gen",
        "patches",
        "--cifar",
        cifar.to_str().unwrap(),
        "--gray",
        "--patch-size",
        "6",
        "--count",
        "400",
        "--source-images",
        "20",
        "--drop",
        "2",
        "--keep",
        "12",
        "--out",
        dir.path().join("patches").to_str().unwrap(),
    ]));
    let ds = cae_cli::io::load_amat(&dir.path().join("patches").join("patches.amat")).unwrap();
    assert_eq!(ds.n(), 400);
    assert_eq!(ds.dim(), 12);

    // The serialized transform reproduces the pipeline's outputs bitwise.
    let text = fs::read_to_string(dir.path().join("patches").join("transform.json")).unwrap();
    let json: formats::PatchTransformJson = serde_json::from_str(&text).unwrap();
    let transform = formats::transform_from_json(&json).unwrap();
    let reread: formats::PatchTransformJson =
        serde_json::from_str(&serde_json::to_string(&formats::transform_to_json(&transform)).unwrap())
            .unwrap();
    let again = formats::transform_from_json(&reread).unwrap();
    assert_eq!(transform, again);
    let probe: Vec<f64> = (0..36).map(|i| (i as f64) / 36.0).collect();
    assert_eq!(transform.apply(&probe).unwrap(), again.apply(&probe).unwrap());
}

fn write_zero_model(path: &Path, d_x: usize, d_h: usize) {
    let ae = TiedAutoEncoder::new(
        Matrix::zeros(d_h, d_x),
        vec![0.0; d_h],
        vec![0.0; d_x],
        Activation::Sigmoid,
        Activation::Sigmoid,
    )
    .unwrap();
    formats::save_model(path, &LoadedModel::Ae(ae)).unwrap();
}

#[test]
fn analyze_zero_model_metrics_and_constant_contraction() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(cae().args([
        "gen", "rect", "--n", "40", "--side", "8", "--seed", "3", "--out",
        dir.path().join("data").to_str().unwrap(),
    ]));
    let data = dir.path().join("data").join("rect.amat");
    let model = dir.path().join("zero.json");
    write_zero_model(&model, 64, 5);

    run_ok(cae().args([
        "analyze", "metrics", "--model", model.to_str().unwrap(), "--data",
        data.to_str().unwrap(), "--out", dir.path().join("m").to_str().unwrap(),
    ]));
    let metrics = fs::read_to_string(dir.path().join("m").join("metrics.csv")).unwrap();
    let row = metrics.lines().nth(1).unwrap();
    assert!(row.starts_with("0,"), "metrics row: {row}");

    run_ok(cae().args([
        "analyze", "contraction", "--model", model.to_str().unwrap(), "--data",
        data.to_str().unwrap(), "--points", "5", "--directions", "2", "--out",
        dir.path().join("c").to_str().unwrap(),
    ]));
    let contraction = fs::read_to_string(dir.path().join("c").join("contraction.csv")).unwrap();
    for line in contraction.lines().skip(1) {
        let mean = line.split(',').nth(1).unwrap();
        assert_eq!(mean, "0", "constant map must have zero ratios: {line}");
    }

    run_ok(cae().args([
        "analyze", "spectrum", "--model", model.to_str().unwrap(), "--data",
        data.to_str().unwrap(), "--out", dir.path().join("s").to_str().unwrap(),
    ]));
    let spectrum = fs::read_to_string(dir.path().join("s").join("spectrum.csv")).unwrap();
    assert_eq!(spectrum.lines().count(), 1 + 5, "header plus min(d_h, d_x) rows");
}

#[test]
fn pretrain_model_round_trips_through_finetune_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(cae().args([
        "gen", "rect", "--n", "120", "--side", "8", "--seed", "5", "--out",
        dir.path().join("data").to_str().unwrap(),
    ]));
    let data = dir.path().join("data").join("rect.amat");
    run_ok(cae().args([
        "pretrain", "--data", data.to_str().unwrap(), "--hidden", "8", "--objective", "cae",
        "--lambda", "0.1", "--epochs", "5", "--out", dir.path().join("pre").to_str().unwrap(),
    ]));
    match formats::load_model(&dir.path().join("pre").join("model.json")).unwrap() {
        LoadedModel::Ae(ae) => {
            assert_eq!(ae.d_x(), 64);
            assert_eq!(ae.d_h(), 8);
        }
        other => panic!("expected tied_ae, got {}", other.kind()),
    }
    let log = fs::read_to_string(dir.path().join("pre").join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,objective\n"));
    assert_eq!(log.lines().count(), 6);

    run_ok(cae().args([
        "finetune", "--model", dir.path().join("pre").join("model.json").to_str().unwrap(),
        "--data", data.to_str().unwrap(), "--epochs", "40", "--lr", "0.2", "--out",
        dir.path().join("ft").to_str().unwrap(),
    ]));
    let stdout = run_ok(cae().args([
        "eval", "--model", dir.path().join("ft").join("mlp.json").to_str().unwrap(),
        "--data", data.to_str().unwrap(),
    ]));
    let err: f64 = stdout.trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&err));

    // eval on a non-MLP model is a usage error
    let out = run(cae().args([
        "eval", "--model", dir.path().join("pre").join("model.json").to_str().unwrap(),
        "--data", data.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stack_command_trains_rbm_and_ae_paths() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(cae().args([
        "gen", "rect", "--n", "80", "--side", "8", "--seed", "6", "--out",
        dir.path().join("data").to_str().unwrap(),
    ]));
    let data = dir.path().join("data").join("rect.amat");
    run_ok(cae().args([
        "stack", "--data", data.to_str().unwrap(), "--dims", "12,6", "--objective", "dae-b",
        "--nu", "0.2", "--epochs", "3", "--out", dir.path().join("st").to_str().unwrap(),
    ]));
    match formats::load_model(&dir.path().join("st").join("stack.json")).unwrap() {
        LoadedModel::Stack(s) => {
            assert_eq!(s.depth(), 2);
            assert_eq!(s.layers()[0].input_dim(), 64);
            assert_eq!(s.layers()[1].input_dim(), 12);
        }
        other => panic!("expected stack, got {}", other.kind()),
    }
    assert!(dir.path().join("st").join("layer2_log.csv").exists());

    run_ok(cae().args([
        "pretrain", "--data", data.to_str().unwrap(), "--hidden", "6", "--objective", "rbm",
        "--cd-k", "2", "--epochs", "3", "--lr", "0.1", "--out",
        dir.path().join("rbm").to_str().unwrap(),
    ]));
    match formats::load_model(&dir.path().join("rbm").join("model.json")).unwrap() {
        LoadedModel::Rbm(r) => assert_eq!(r.d_h(), 6),
        other => panic!("expected rbm, got {}", other.kind()),
    }

    // an RBM is a feature map: analysis works on it
    run_ok(cae().args([
        "analyze", "metrics", "--model", dir.path().join("rbm").join("model.json").to_str().unwrap(),
        "--data", data.to_str().unwrap(), "--out", dir.path().join("rm").to_str().unwrap(),
    ]));
}

#[test]
fn verify_commands_pass_and_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(cae().args([
        "verify", "gradcheck", "--nets", "2", "--out", dir.path().join("g").to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(dir.path().join("g").join("gradcheck.csv")).unwrap();
    assert!(csv.starts_with("case,metric,threshold,pass\n"));
    assert!(!csv.contains(",false"));

    run_ok(cae().args([
        "verify", "taylor", "--sigma", "0.01", "--samples", "50000", "--out",
        dir.path().join("t").to_str().unwrap(),
    ]));
    assert!(dir.path().join("t").join("taylor_report.csv").exists());

    run_ok(cae().args([
        "verify", "hessian-trace", "--nets", "3", "--out", dir.path().join("h").to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(dir.path().join("h").join("hessian_trace.csv")).unwrap();
    assert!(csv.contains("identity-paper-form-reads-2dx"));
}
