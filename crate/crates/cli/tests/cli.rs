use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cue(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cue"))
        .args(args)
        .current_dir(dir)
        .env("CUE_LOG", "error")
        .output()
        .expect("spawn cue")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cue(dir, args);
    assert!(
        out.status.success(),
        "cue {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Exit code and the single stderr line of a failing run.
fn fail(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = cue(dir, args);
    assert!(!out.status.success(), "cue {args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "expected one error line, got {err:?}");
    (out.status.code().unwrap(), lines[0].to_string())
}

fn category(line: &str) -> &str {
    line.strip_prefix("error category=")
        .and_then(|r| r.split(':').next())
        .unwrap_or_else(|| panic!("malformed error line {line:?}"))
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Small dataset, head and plug-in shared by several tests.
fn small_pipeline(dir: &Path, tokens: bool) {
    let with_tokens = if tokens { "true" } else { "false" };
    ok(dir, &["gen-synthetic", "--out", "d", "--seed", "3", "--samples-per-class", "60", "--with-tokens", with_tokens]);
    ok(dir, &["train-head", "--data", "d", "--out", "h.ckpt", "--seed", "3", "--lr", "0.05", "--epochs", "30"]);
    ok(dir, &["train-cue", "--data", "d", "--head", "h.ckpt", "--out", "c.ckpt", "--seed", "3", "--latent-dim", "20", "--epochs", "5", "--lr", "1e-3"]);
}

#[test]
fn pipeline_runs_on_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let start = std::time::Instant::now();
    ok(dir, &["gen-synthetic", "--out", "d"]);
    ok(dir, &["train-head", "--data", "d", "--out", "h.ckpt"]);
    ok(dir, &["train-cue", "--data", "d", "--head", "h.ckpt", "--out", "c.ckpt"]);
    ok(dir, &["evaluate", "--data", "d", "--head", "h.ckpt", "--variant", "cue", "--cue", "c.ckpt", "--out", "e.json"]);
    assert!(start.elapsed().as_secs() < 300);

    let e = json(&dir.join("e.json"));
    assert_eq!(e["evaluation"]["variant"], "cue");
    let acc = e["evaluation"]["report"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    // Defaults are echoed with the run.
    let params = &e["run_config"]["params"];
    assert_eq!(params["seed"], 0);
    assert_eq!(params["ece-bins"], 9);
    assert_eq!(params["entropy-base"], "e");

    let head = json(&dir.join("h.ckpt.report.json"));
    assert!(head["reports"]["dev"]["ece"].is_number());
    assert!(head["reports"]["test"]["ece"].is_number());
    assert_eq!(head["run_config"]["params"]["epochs"], 20);

    let trace = std::fs::read_to_string(dir.join("c.ckpt.trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("epoch,L_r,KL_pred,H_pred,L_reg,total"));
    assert_eq!(trace.lines().count(), 51);
    let sidecar = json(&dir.join("c.ckpt.json"));
    assert_eq!(sidecar["meta"]["run_config"]["params"]["latent-dim"], 100);
    assert!(dir.join("d/run_config.json").is_file());
    assert!(dir.join("d/truth.json").is_file());
}

#[test]
fn evaluate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_pipeline(dir, true);
    for variant in ["base", "mc_dropout"] {
        let a = ok(dir, &["evaluate", "--data", "d", "--head", "h.ckpt", "--variant", variant, "--seed", "5"]);
        let b = ok(dir, &["evaluate", "--data", "d", "--head", "h.ckpt", "--variant", variant, "--seed", "5"]);
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{variant}");
    }
    ok(dir, &["evaluate", "--data", "d", "--head", "h.ckpt", "--out", "a.csv"]);
    ok(dir, &["evaluate", "--data", "d", "--head", "h.ckpt", "--out", "b.csv"]);
    let a = std::fs::read(dir.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.join("b.csv")).unwrap());
    assert!(String::from_utf8(a).unwrap().starts_with("variant,split,num_samples,accuracy"));
    assert!(dir.join("a.csv.run.json").is_file());
}

#[test]
fn commands_leave_inputs_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_pipeline(dir, true);
    let before = (snapshot(&dir.join("d")), snapshot(dir));
    ok(dir, &["evaluate", "--data", "d", "--head", "h.ckpt", "--variant", "cue", "--cue", "c.ckpt"]);
    ok(dir, &["ufi", "--data", "d", "--head", "h.ckpt", "--cue", "c.ckpt", "--sample", "0,5"]);
    assert_eq!(before, (snapshot(&dir.join("d")), snapshot(dir)));
}

#[test]
fn ablate_and_ufi_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_pipeline(dir, true);
    ok(dir, &["ablate", "--data", "d", "--head", "h.ckpt", "--cue", "c.ckpt", "--ablate-bins", "5", "--out", "ab.csv"]);
    let csv = std::fs::read_to_string(dir.join("ab.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "bin,acc,f1,entropy,ece");
    assert_eq!(lines.len(), 6);
    let run = json(&dir.join("ab.csv.run.json"));
    assert_eq!(run["order"].as_array().unwrap().len(), 20);
    assert_eq!(run["run_config"]["params"]["ablate-mode"], "perbin");

    // 20 latent dims do not split into 3 bins.
    let (code, line) = fail(dir, &["ablate", "--data", "d", "--head", "h.ckpt", "--cue", "c.ckpt", "--ablate-bins", "3", "--out", "x.csv"]);
    assert_eq!((code, category(&line)), (1, "validation"));

    let out = ok(dir, &["ufi", "--data", "d", "--head", "h.ckpt", "--cue", "c.ckpt", "--sample", "dev"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 48);
    assert_eq!(reports[0]["alpha"], 2);
    assert_eq!(reports[0]["dims"].as_array().unwrap().len(), 20);
    assert!(!reports[0]["tokens"].as_array().unwrap().is_empty());
}

#[test]
fn ufi_without_tokens_is_unsupported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_pipeline(dir, false);
    let (code, line) = fail(dir, &["ufi", "--data", "d", "--head", "h.ckpt", "--cue", "c.ckpt"]);
    assert_eq!(code, 1);
    assert_eq!(category(&line), "unsupported");
}

#[test]
fn bnn_variant_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_pipeline(dir, false);
    ok(dir, &["train-bnn", "--data", "d", "--head", "h.ckpt", "--out", "b.ckpt", "--latent-dim", "8", "--epochs", "2"]);
    let out = ok(dir, &["evaluate", "--data", "d", "--head", "h.ckpt", "--variant", "bnn", "--bnn", "b.ckpt", "--mc-passes", "4"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["evaluation"]["variant"], "bnn");
    assert_eq!(doc["run_config"]["params"]["mc-passes"], 4);
    let (_, line) = fail(dir, &["evaluate", "--data", "d", "--head", "h.ckpt", "--variant", "bnn"]);
    assert_eq!(category(&line), "invalid-argument");
}

#[test]
fn errors_are_one_categorized_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (code, line) = fail(dir, &["no-such-command"]);
    assert_eq!((code, category(&line)), (2, "invalid-argument"));
    let (code, line) = fail(dir, &["train-head", "--out", "h.ckpt"]);
    assert_eq!((code, category(&line)), (2, "invalid-argument"));
    assert!(line.contains("--data"), "{line}");
    let (code, line) = fail(dir, &["gen-synthetic", "--out", "d", "--classes", "many"]);
    assert_eq!((code, category(&line)), (2, "invalid-argument"));
    let (_, line) = fail(dir, &["train-head", "--data", "missing", "--out", "h.ckpt"]);
    assert_eq!(category(&line), "io");

    small_pipeline(dir, false);
    let (_, line) = fail(dir, &["train-cue", "--data", "d", "--head", "h.ckpt", "--out", "x", "--regularizer", "l2"]);
    assert_eq!(category(&line), "invalid-argument");
    let mut bytes = std::fs::read(dir.join("h.ckpt")).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(dir.join("h.ckpt"), bytes).unwrap();
    let (code, line) = fail(dir, &["evaluate", "--data", "d", "--head", "h.ckpt"]);
    assert_eq!((code, category(&line)), (1, "integrity"));
}

#[test]
fn config_file_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen-synthetic", "--out", "d", "--samples-per-class", "40", "--seed", "1"]);
    std::fs::write(
        dir.join("head.conf"),
        "# head settings\ndata = d\nepochs = 7\nlr = 0.01\nseed = 4\n",
    )
    .unwrap();
    ok(dir, &["train-head", "--config", "head.conf", "--epochs", "3", "--out", "h1.ckpt"]);
    let report = json(&dir.join("h1.ckpt.report.json"));
    let params = &report["run_config"]["params"];
    assert_eq!(params["epochs"], 3);
    assert_eq!(params["lr"], 0.01);
    assert_eq!(params["seed"], 4);
    assert_eq!(report["history"].as_array().unwrap().len(), 3);

    // The echoed record reproduces the checkpoint exactly.
    ok(dir, &["train-head", "--config", "h1.ckpt.report.json", "--out", "h2.ckpt"]);
    assert_eq!(
        std::fs::read(dir.join("h1.ckpt")).unwrap(),
        std::fs::read(dir.join("h2.ckpt")).unwrap()
    );

    std::fs::write(dir.join("bad.conf"), "epoch = 3\n").unwrap();
    let (code, line) = fail(dir, &["train-head", "--config", "bad.conf", "--data", "d", "--out", "h3.ckpt"]);
    assert_eq!((code, category(&line)), (2, "invalid-argument"));
}

#[test]
fn help_documents_config_format() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("key = value"));
    assert!(text.contains("CUE_LOG"));
    for flag in ["--gamma1", "--latent-dim", "--ablate-mode", "--entropy-base", "--mc-passes"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}
