use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ris-slac");

const MINIMAL: &str = r#"
[system]
carrier_hz = 28e9
snr_db = [10.0]

[arrays]
bs = { kind = "ula", counts = [1] }
ms = { kind = "ula", counts = [4] }
ris = { kind = "ula", counts = [8] }

[channel]
blocked_los = true

[frame]
t_c = 100
t_p = [12]
trials = 6
seed = 9

[estimators]
enabled = ["ls"]
"#;

const SWEEP: &str = r#"
[system]
carrier_hz = 29.9792458e9

[frame]
t_c = 100
t_p = [1, 2, 20, 100]
trials = 3
seed = 4

[tradeoff]
policies = ["random"]
ris_sizes = [4]
"#;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], threads: Option<usize>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args);
    if let Some(n) = threads {
        c.env("RAYON_NUM_THREADS", n.to_string());
    }
    c.output().unwrap()
}

fn cebench(config: &Path, out: &Path, extra: &[&str], threads: Option<usize>) -> Output {
    let mut args = vec!["cebench", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args, threads)
}

fn tradeoff(config: &Path, out: &Path, threads: Option<usize>) -> Output {
    run(&["tradeoff", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()], threads)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(csv: &Path) -> Vec<String> {
    std::fs::read_to_string(csv).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn minimal_config_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", MINIMAL);
    let out = dir.path().join("out");
    let o = cebench(&cfg, &out, &[], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = rows(&out.join("cebench.csv"));
    assert_eq!(lines[0], "estimator,t_p,snr_db,nmse,eff_se_bits");
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..3], &["ls", "12", "10"]);
    let nmse: f64 = fields[3].parse().unwrap();
    assert!(nmse > 0.0 && nmse < 1.0);
}

#[test]
fn cebench_is_byte_reproducible_serial_and_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("enabled = [\"ls\"]", "enabled = [\"full_csi\", \"ls\", \"sparse\", \"beam_align\"]");
    let text = text.replace("t_p = [12]", "t_p = [40]").replace("snr_db = [10.0]", "snr_db = [0.0, 10.0]");
    let text = text.replace("blocked_los = true", "blocked_los = false");
    let cfg = write(dir.path(), "c.toml", &text);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(cebench(&cfg, &a, &[], Some(1)).status.success());
    assert!(cebench(&cfg, &b, &[], Some(3)).status.success());
    assert!(cebench(&cfg, &c, &["--seed", "10"], Some(2)).status.success());
    let read = |d: &Path| std::fs::read(d.join("cebench.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(std::fs::read(a.join("run.json")).unwrap(), std::fs::read(b.join("run.json")).unwrap());
}

#[test]
fn unfolded_cebench_is_reproducible_and_records_training() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace(
        "enabled = [\"ls\"]",
        "enabled = [\"unfolded\"]\n[estimators.unfold]\ndepth = 3\ntrain = { samples = 30, epochs = 3, lr = 0.1 }",
    );
    let cfg = write(dir.path(), "c.toml", &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(cebench(&cfg, &a, &[], Some(1)).status.success());
    assert!(cebench(&cfg, &b, &[], Some(4)).status.success());
    assert_eq!(std::fs::read(a.join("cebench.csv")).unwrap(), std::fs::read(b.join("cebench.csv")).unwrap());
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("run.json")).unwrap()).unwrap();
    let t = &meta["training"][0];
    assert_eq!(t["alphas"].as_array().unwrap().len(), 3);
    let losses = t["train_losses"].as_array().unwrap();
    assert!(losses.windows(2).all(|w| w[1].as_f64() <= w[0].as_f64()));
}

#[test]
fn metadata_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", MINIMAL);
    let out = dir.path().join("out");
    assert!(cebench(&cfg, &out, &["--seed", "77", "--trials", "3"], None).status.success());
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["command"], "cebench");
    assert_eq!(meta["seed"], 77);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["conventions"]["noise"].is_string());
    assert_eq!(meta["config"]["frame"]["trials"], 3);

    // The echoed config alone regenerates identical output.
    let echoed = toml::to_string(&meta["config"]).unwrap();
    let cfg2 = write(dir.path(), "echo.toml", &echoed);
    let out2 = dir.path().join("out2");
    let o = cebench(&cfg2, &out2, &[], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(out.join("cebench.csv")).unwrap(),
        std::fs::read(out2.join("cebench.csv")).unwrap()
    );
}

#[test]
fn los_config_grid_has_25_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cebench(&configs_dir().join("ce_los.toml"), &out, &["--trials", "1"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = rows(&out.join("cebench.csv"));
    assert_eq!(lines.len(), 1 + 25);
    let series: std::collections::BTreeSet<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_owned(), f[1].to_owned())
        })
        .collect();
    assert_eq!(series.len(), 5);
}

#[test]
fn tradeoff_grid_has_48_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs_dir().join("tradeoff.toml"))
        .unwrap()
        .replace("trials = 500", "trials = 2");
    let cfg = write(dir.path(), "t.toml", &text);
    let out = dir.path().join("out");
    let o = tradeoff(&cfg, &out, None);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = rows(&out.join("tradeoff.csv"));
    assert_eq!(lines[0], "ris_elems,policy,t_p,peb_m,eff_se_bits");
    assert_eq!(lines.len(), 1 + 48);
}

#[test]
fn tradeoff_is_reproducible_and_writes_inf() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", SWEEP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(tradeoff(&cfg, &a, Some(1)).status.success());
    assert!(tradeoff(&cfg, &b, Some(3)).status.success());
    let bytes = std::fs::read(a.join("tradeoff.csv")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("tradeoff.csv")).unwrap());
    let lines = rows(&a.join("tradeoff.csv"));
    // One slot gives two real observations for seven unknowns.
    assert_eq!(lines[1].split(',').nth(3), Some("inf"));
    assert!(lines[3].split(',').nth(3).unwrap().parse::<f64>().unwrap().is_finite());
    assert_eq!(lines[4].split(',').nth(4), Some("0"));
}

#[test]
fn directional_without_prior_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", &SWEEP.replace("[\"random\"]", "[\"random\", \"directional\"]"));
    let o = tradeoff(&cfg, &dir.path().join("out"), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tradeoff.prior_sigma_m"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &MINIMAL.replace("trials = 6", "trials = 6\ntrails = 6"));
    let o = cebench(&cfg, &dir.path().join("out"), &[], None);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("frame") && e.contains("trails"), "{e}");
}

#[test]
fn out_of_range_value_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &MINIMAL.replace("t_p = [12]", "t_p = [120]"));
    let o = cebench(&cfg, &dir.path().join("out"), &[], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("frame.t_p"), "{}", stderr(&o));
}

#[test]
fn io_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = cebench(&dir.path().join("missing.toml"), &dir.path().join("out"), &[], None);
    assert_eq!(o.status.code(), Some(3));

    let cfg = write(dir.path(), "c.toml", MINIMAL);
    let blocker = write(dir.path(), "file", "not a directory");
    let o = cebench(&cfg, &blocker.join("out"), &[], None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
