use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use smlp_cli::output::read_csv;
use smlp_core::metrics::ExperimentRecord;
use smlp_core::Checkpoint;

fn smlp(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smlp"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Two separable classes on four sparse features.
fn write_toy(dir: &Path) -> (String, String) {
    let mut train = String::new();
    let mut test = String::new();
    for k in 0..60 {
        let label = k % 2;
        let v = 0.6 + 0.4 * ((k * 7) % 10) as f64 / 10.0;
        let line = if label == 0 {
            format!("0 0:{v} 1:{:.2}\n", 1.0 - v)
        } else {
            format!("1 2:{v} 3:{:.2}\n", 1.0 - v)
        };
        let dst = if k < 40 { &mut train } else { &mut test };
        write!(dst, "{line}").unwrap();
    }
    let (a, b) = (dir.join("train.txt"), dir.join("test.txt"));
    std::fs::write(&a, train).unwrap();
    std::fs::write(&b, test).unwrap();
    (a.display().to_string(), b.display().to_string())
}

#[test]
fn quant_convergence_writes_hashed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = smlp(dir.path(), &["quant-convergence", "--T", "10,100,1000", "--seeds", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (hash, lines) = read_csv(&dir.path().join("quant_convergence.csv")).unwrap();
    assert_eq!(hash.len(), 16);
    assert_eq!(lines[0], "method,T,l1_error");
    assert_eq!(lines.len(), 7);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&smlp(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&smlp(dir.path(), &["train", "--rule", "bogus"])), 1);
    let missing = dir.path().join("missing");
    let o = smlp(dir.path(), &["train", "--data-dir", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no MNIST files"));
}

#[test]
fn train_then_evaluate_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_toy(dir.path());
    let common = [
        "--sparse-train", &train, "--sparse-test", &test, "--arch", "4,6,2", "--eta", "0.02", "--init-std", "0.1",
    ];
    let mut args = vec!["train", "--epochs", "3", "--name", "toy"];
    args.extend(common);
    let o = smlp(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let ckpt = dir.path().join("toy.ckpt");
    assert_eq!(Checkpoint::load(&ckpt).unwrap().layer_sizes, [4, 6, 2]);
    let rec = ExperimentRecord::from_json(&std::fs::read_to_string(dir.path().join("toy.json")).unwrap()).unwrap();
    assert_eq!(rec.epochs.len(), 3);
    assert!(rec.epochs[2].test_error < 10.0, "{:?}", rec.epochs);
    let (hash, lines) = read_csv(&dir.path().join("toy_epochs.csv")).unwrap();
    assert_eq!(hash, rec.config_hash);
    assert_eq!(lines.len(), 4);

    let mut args = vec!["train", "--eval-only", "--init-from", ckpt.to_str().unwrap(), "--name", "again"];
    args.extend(common);
    let o = smlp(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let again = ExperimentRecord::from_json(&std::fs::read_to_string(dir.path().join("again.json")).unwrap()).unwrap();
    assert_eq!(again.epochs[0].train_error, None);
    assert_eq!(again.epochs[0].test_error, rec.epochs[2].test_error);
}

#[test]
fn violated_ablation_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_toy(dir.path());
    // Zero-reset on a tiny, easy problem still learns, which breaks its direction check.
    let o = smlp(
        dir.path(),
        &[
            "ablation", "--variants", "baseline,zero-reset", "--sparse-train", &train, "--sparse-test", &test, "--arch",
            "4,2", "--eta", "0.05", "--init-std", "0.5",
        ],
    );
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Zero-Reset"));
    let (_, lines) = read_csv(&dir.path().join("ablation.csv")).unwrap();
    assert_eq!(lines.len(), 3);
}
