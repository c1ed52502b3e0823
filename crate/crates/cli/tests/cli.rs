use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/digits").canonicalize().unwrap()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftqnn")).args(args).arg(config).output().unwrap()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn model_keys() -> String {
    let f = fixtures();
    format!(
        "model = {:?}\ncalibration = {:?}\ntest = {:?}\n",
        f.join("model.toml"),
        f.join("calib.ds"),
        f.join("test.ds")
    )
}

/// Data rows of a report, keyed by header name.
fn rows(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| headers.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

const CHARACTERIZE: &str = r#"output = "mare.csv"

[[multipliers]]
family = "exact"
width = 8

[[multipliers]]
family = "mitchell"
width = 8

[[multipliers]]
family = "mitchell"
width = 8
trunc = 3

[[multipliers]]
family = "adam"
width = 8
trunc = 3
dup = 2
"#;

#[test]
fn characterize_matches_golden_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", CHARACTERIZE);
    let out = run(&["characterize"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read_to_string(dir.path().join("mare.csv")).unwrap();
    assert_eq!(got, std::fs::read_to_string(golden("characterize.csv")).unwrap());
    let r = rows(&dir.path().join("mare.csv"));
    assert_eq!(r[0]["mare_percent"], "0.000000");
    assert!(dir.path().join("mare.csv.run.toml").exists());
}

#[test]
fn characterize_is_byte_stable() {
    let body = "output = \"s.csv\"\nsamples = 20000\nseed = 9\n\n[[multipliers]]\nfamily = \"adam\"\nwidth = 16\ntrunc = 2\ndup = 4\n";
    let outputs: Vec<String> = (0..2)
        .map(|_| {
            let dir = TempDir::new().unwrap();
            let cfg = write_config(&dir, "c.toml", body);
            assert!(run(&["characterize"], &cfg).status.success());
            std::fs::read_to_string(dir.path().join("s.csv")).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].contains("adam,16,2,4,sampled,20000,9,"));
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &format!("{CHARACTERIZE}\nsampels = 3\n"));
    let out = run(&["characterize"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampels"));
}

#[test]
fn wide_exhaustive_sweep_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "output = \"x.csv\"\n[[multipliers]]\nfamily = \"exact\"\nwidth = 16\n");
    assert_eq!(run(&["characterize"], &cfg).status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let body = model_keys().replace("test.ds", "nope.ds")
        + "output = \"c.csv\"\nprotections = [\"none\"]\nber_grid = [0.0]\nseeds = [0]\n";
    let cfg = write_config(&dir, "c.toml", &body);
    assert_eq!(run(&["campaign"], &cfg).status.code(), Some(3));
}

#[test]
fn zero_ber_gives_zero_vulnerability() {
    let dir = TempDir::new().unwrap();
    let body = model_keys()
        + "output = \"c.csv\"\nprotections = [\"none\", \"msb-triplication\", \"clamp-m3\"]\nber_grid = [0.0]\nseeds = { first = 0, count = 3 }\n";
    let cfg = write_config(&dir, "c.toml", &body);
    let out = run(&["campaign"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("c.csv"));
    assert_eq!(r.len(), 9);
    assert!(r.iter().all(|row| row["vulnerability"] == "0.0" && row["fault_coverage"] == "100.0"));
}

#[test]
fn msb_copy_flips_leave_protected_accuracy_unchanged() {
    let dir = TempDir::new().unwrap();
    let mut plan = String::from("# ftqnn fault plan v1\nseed=0\nber=-\nkind,target,element,bit,invocation\n");
    for element in 0..40 {
        plan.push_str(&format!("weight,0,{element},8,0\n"));
    }
    for element in 0..10 {
        plan.push_str(&format!("weight,1,{element},9,0\n"));
    }
    std::fs::write(dir.path().join("plan.txt"), plan).unwrap();
    let body = model_keys() + "output = \"c.csv\"\nprotections = [\"msb-triplication\"]\nfault_plan = \"plan.txt\"\n";
    let cfg = write_config(&dir, "c.toml", &body);
    let out = run(&["campaign"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("c.csv"));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0]["faulty_acc"], r[0]["golden_acc"]);
    assert_eq!(r[0]["ber"], "");
}

#[test]
fn campaign_matches_golden_file() {
    let dir = TempDir::new().unwrap();
    let body = model_keys()
        + "output = \"c.csv\"\nprotections = [\"none\", \"msb-triplication\"]\nber_grid = [1e-5, 3e-5, 1e-4, 3e-4]\nseeds = [0, 1, 2]\n\n[p_drop]\nlifetime = 10.0\ntest_interval = 2.0\np_single = 1e-9\n";
    let cfg = write_config(&dir, "campaign.toml", &body);
    let out = run(&["campaign"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    // The config embeds absolute fixture paths, so compare past the hash line.
    let body_of = |s: &str| s.lines().skip(3).collect::<Vec<_>>().join("\n");
    assert_eq!(body_of(&got), body_of(&std::fs::read_to_string(golden("campaign.csv")).unwrap()));
    let mut bers: Vec<String> = rows(&dir.path().join("c.csv")).iter().map(|r| r["ber"].clone()).collect();
    bers.dedup();
    assert_eq!(bers[..4], ["0.00001", "0.00003", "0.0001", "0.0003"]);
}

fn dse_config(dir: &TempDir, a: f64) -> PathBuf {
    let body = model_keys()
        + &format!(
            "trace = \"t.csv\"\nsummary = \"s.toml\"\naccuracy_threshold = {a}\nreliability_threshold = 1.0\nmin_bits = 2\nmax_bits = 8\nber_grid = [1e-3]\nseeds = [0, 1, 2, 3]\n"
        );
    write_config(dir, "d.toml", &body)
}

#[test]
fn dse_reports_a_passing_width() {
    let dir = TempDir::new().unwrap();
    let out = run(&["dse"], &dse_config(&dir, 0.9));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("t.csv"));
    assert_eq!(r[0]["bit_width"], "5");
    assert!(r.iter().any(|row| row["passed"] == "true"));
    let summary = std::fs::read_to_string(dir.path().join("s.toml")).unwrap();
    assert!(summary.contains("outcome = \"selected\""));
    assert!(summary.starts_with("# ftqnn "));
}

#[test]
fn dse_without_passing_width_exits_4() {
    let dir = TempDir::new().unwrap();
    let out = run(&["dse"], &dse_config(&dir, 1.01));
    assert_eq!(out.status.code(), Some(4));
    let r = rows(&dir.path().join("t.csv"));
    assert!(!r.is_empty() && r.iter().all(|row| row["passed"] == "false"));
}

#[test]
fn report_aggregates_campaign_rows() {
    let dir = TempDir::new().unwrap();
    let body = model_keys()
        + "output = \"c.csv\"\nprotections = [\"none\"]\nber_grid = [1e-2]\nseeds = [0, 1, 2, 3]\n";
    assert!(run(&["campaign"], &write_config(&dir, "c.toml", &body)).status.success());
    let cfg = write_config(&dir, "r.toml", "inputs = [\"c.csv\"]\noutput = \"r.csv\"\n");
    let out = run(&["report"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trials = rows(&dir.path().join("c.csv"));
    let mean: f64 = trials.iter().map(|r| r["vulnerability"].parse::<f64>().unwrap()).sum::<f64>() / 4.0;
    let r = rows(&dir.path().join("r.csv"));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0]["trials"], "4");
    assert!((r[0]["mean_vulnerability"].parse::<f64>().unwrap() - mean).abs() < 1e-12);
}

#[test]
fn quantize_writes_readable_tensors() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "model = {:?}\noutput_dir = \"q\"\nbits = 4\nprotection = \"msb-triplication\"\n",
        fixtures().join("model.toml")
    );
    let out = run(&["quantize"], &write_config(&dir, "q.toml", &body));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("q/quantize.csv"));
    assert_eq!(r.len(), 2);
    assert_eq!(r[0]["memory_bits"], (64 * 32 * 6).to_string());
    let bytes = std::fs::read(dir.path().join("q/fc1.ftqt")).unwrap();
    let t = ftqnn::quant::QuantTensor::read_from(bytes.as_slice()).unwrap();
    assert!(t.protected && t.words.len() == 64 * 32 && t.stored_width() == 6);
}
