use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use pacdp_cli::config::parse_config_str;
use pacdp_cli::output::{curve_samples, FitFile, Provenance, Summary};
use pacdp_cli::{cmd_account, cmd_fit, cmd_report, cmd_train, output, Overrides, PolicyKind};
use pacdp_core::fitting::{FitResult, SupportPoint};
use pacdp_core::AccountantConfig;

const CONFIG: &str = r#"
seed = 3
out_dir = "run"

[dataset]
source = "logistic-planted"
n = 1200
dim = 4
skew = 0.6
holdout = 0.25

[model]
kind = "logistic-binary"

[federation]
clients = 6
sampled = 3
rounds = 20
local_steps = 1
batch_size = 16
learning_rate = 0.5

[privacy]
budgets = [1.0, 4.0]
proportions = [0.5, 0.5]

[policy]
kind = "pacdp"

[grid]
eps = [1.0, 3.0, 9.0]
clips = [0.1, 1.0, 10.0]
seeds_per_cell = 2
proxy_n = 600
proxy_seed = 11
rounds = 10
clients = 6
sampled = 3
"#;

fn pacdp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pacdp"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn fit_then_train_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let start = Instant::now();
    let fit = pacdp().args(["fit", "--config"]).arg(&cfg).output().unwrap();
    assert!(fit.status.success(), "{}", stderr(&fit));
    assert!(start.elapsed().as_secs() < 60);
    let run = tmp.path().join("run");
    let matrix = fs::read_to_string(run.join("matrix.csv")).unwrap();
    assert_eq!(matrix.lines().next().unwrap(), "eps,0.1,1,10");
    assert_eq!(matrix.lines().count(), 4);

    let again = pacdp().args(["fit", "--config"]).arg(&cfg).output().unwrap();
    assert!(again.status.success());
    assert_eq!(fs::read_to_string(run.join("matrix.csv")).unwrap(), matrix);

    let train = pacdp().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert!(train.status.success(), "{}", stderr(&train));
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(
        history.lines().next().unwrap(),
        "round,loss,accuracy,mean_clip,messages,floats"
    );
    assert_eq!(history.lines().count(), 21);
    for line in history.lines().skip(1) {
        assert!(line.ends_with(",3,15"), "{line}");
    }

    // summary ε is exactly what `account` recomputes from the ledger
    let summary = Summary::load(&run.join("summary.json")).unwrap();
    let table = pacdp()
        .args(["account", "--ledger"])
        .arg(run.join("ledger.csv"))
        .output()
        .unwrap();
    assert!(table.status.success());
    let table = stdout(&table);
    let e = summary.epsilon.clone().unwrap();
    assert!(table.ends_with(&format!(
        "# min={} median={} max={}\n",
        pacdp_core::fmt::sig9(e.min),
        pacdp_core::fmt::sig9(e.median),
        pacdp_core::fmt::sig9(e.max)
    )));
    for c in &summary.clients {
        let row = format!("{},{},{}", c.client_id, pacdp_core::fmt::sig9(c.epsilon), c.alpha);
        assert!(table.lines().any(|l| l == row), "{row} missing from\n{table}");
    }

    let report = pacdp().args(["report", "--out"]).arg(&run).output().unwrap();
    assert!(report.status.success(), "{}", stderr(&report));
    let curve = fs::read_to_string(run.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 101);
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &CONFIG.replace("sampled = 3\nrounds = 20", "sampled = 7\nrounds = 20"),
    );
    let out = pacdp().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.contains("federation.sampled") && err.contains("federation.clients"),
        "{err}"
    );

    let cfg = write_config(tmp.path(), &format!("{CONFIG}\nbogus = 1\n"));
    let out = pacdp().args(["fit", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(tmp.path(), CONFIG);
    let out = pacdp()
        .args(["train", "--policy", "fixed", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("policy.clip"));
}

#[test]
fn runtime_errors_exit_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pacdp().args(["report", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("summary.json"));

    // pacdp policy without a fit file names the missing path
    let cfg = write_config(tmp.path(), CONFIG);
    let out = pacdp().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("fit.json"), "{}", stderr(&out));
}

#[test]
fn account_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let one = tmp.path().join("one.csv");
    fs::write(&one, "client_id,round,z,steps\n0,0,1,1\n1,0,1,1\n2,0,1,1\n").unwrap();
    let table = cmd_account(&one, &AccountantConfig::default()).unwrap();
    assert_eq!(
        table,
        "client_id,epsilon,alpha\n0,5.30258509,6\n1,5.30258509,6\n2,5.30258509,6\n\
         # min=5.30258509 median=5.30258509 max=5.30258509\n"
    );

    let eps_at = |delta: f64| {
        let t = cmd_account(&one, &AccountantConfig::with_delta(delta)).unwrap();
        t.lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse::<f64>()
            .unwrap()
    };
    assert!(eps_at(1e-7) > eps_at(1e-5) && eps_at(1e-5) > eps_at(1e-3));

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "client_id,round,z,steps\n").unwrap();
    let out = pacdp().args(["account", "--ledger"]).arg(&empty).output().unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out), "client_id,epsilon,alpha\n");
    assert!(stderr(&out).contains("warning"));

    let out = pacdp()
        .args(["account", "--delta", "1.5", "--ledger"])
        .arg(&one)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn sample_fit() -> FitFile {
    let mut fit = FitResult::from_coefficients(-5.5235, 12.0719, 1.4004, 0.1);
    fit.r2 = 0.9806;
    fit.support = [0.5, 1.0, 2.0 / 3.0]
        .iter()
        .map(|&eps| SupportPoint {
            eps,
            clip: fit.evaluate(eps),
        })
        .collect();
    FitFile {
        fit,
        provenance: Provenance {
            seed: 1,
            proxy: "synthetic".into(),
            eps_grid: vec![0.5, 2.0 / 3.0, 1.0],
            clip_grid: vec![0.1, 1.0 / 3.0],
            seeds_per_cell: 3,
            cell_seeds: vec![u64::MAX, 0, 17],
            sim_clients: 4,
            sim_sampled: 2,
            sim_rounds: 5,
            iqr_dropped: 0,
            failed_runs: Vec::new(),
        },
    }
}

#[test]
fn fit_file_round_trips() {
    let file = sample_fit().rounded();
    let text = file.to_json();
    let back = FitFile::from_json(&text).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.to_json(), text);
    assert!(text.contains("\"provenance\""));
    assert!(FitFile::from_json(&text.replace("\"alpha\"", "\"alpha_\"")).is_err());
}

#[test]
fn curve_samples_span_the_support() {
    let curve = curve_samples(&sample_fit().fit);
    assert_eq!(curve.len(), 100);
    assert_eq!(curve[0].eps, 0.5);
    assert_eq!(curve[0].clip, 6.055475);
    assert_eq!(curve[99].eps, 1.0);
    assert!((curve[99].clip - 7.9488).abs() < 1e-9);
}

#[test]
fn fixed_policy_switch_matches_a_fixed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let base = parse_config_str(CONFIG, tmp.path()).unwrap();

    let mut switched = base.clone();
    Overrides {
        out: Some(tmp.path().join("switched")),
        policy: Some(PolicyKind::Fixed),
        clip: Some(1.0),
        ..Default::default()
    }
    .apply(&mut switched)
    .unwrap();
    cmd_train(&switched, None).unwrap();

    let text = CONFIG
        .replace("kind = \"pacdp\"", "kind = \"fixed\"\nclip = 1.0")
        .replace("out_dir = \"run\"", "out_dir = \"direct\"");
    let direct = parse_config_str(&text, tmp.path()).unwrap();
    cmd_train(&direct, None).unwrap();

    for file in ["history.csv", "ledger.csv", "summary.json"] {
        assert_eq!(
            fs::read(tmp.path().join("switched").join(file)).unwrap(),
            fs::read(tmp.path().join("direct").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn report_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(CONFIG, tmp.path()).unwrap();
    cmd_fit(&cfg).unwrap();
    cmd_train(&cfg, None).unwrap();
    let dir = tmp.path().join("run");
    let first = cmd_report(&dir).unwrap();
    let bytes = fs::read(dir.join(output::REPORT_FILE)).unwrap();
    let second = cmd_report(&dir).unwrap();
    assert_eq!(first, second);
    assert_eq!(fs::read(dir.join(output::REPORT_FILE)).unwrap(), bytes);
    assert_eq!(first.history.len(), 20);
    assert_eq!(first.curve.len(), 100);

    fs::remove_file(dir.join("history.csv")).unwrap();
    let err = cmd_report(&dir).unwrap_err().to_string();
    assert!(err.contains("history.csv"), "{err}");
}

#[test]
fn quantile_policy_trains() {
    let tmp = tempfile::tempdir().unwrap();
    let text = CONFIG.replace(
        "kind = \"pacdp\"",
        "kind = \"quantile\"\nquantile = 0.5\ninitial_clip = 1.0\nquantile_lr = 0.2",
    );
    let cfg = parse_config_str(&text, tmp.path()).unwrap();
    let summary = cmd_train(&cfg, None).unwrap();
    assert_eq!(summary.policy, "quantile");
    assert_eq!(summary.messages, 60);
    assert!(summary.fit_file.is_none());
}

#[test]
fn schedule_dump_table() {
    let out = pacdp().args(["schedule-dump", "--rounds", "10"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        "t,lambda\n0,1\n1,1\n2,1\n3,1\n4,1\n5,1\n6,1\n7,0.868198052\n8,0.55\n9,0.231801948\n"
    );
    let out = pacdp()
        .args(["schedule-dump", "--rounds", "10", "--r-s", "1.0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
