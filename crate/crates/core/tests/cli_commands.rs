use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use contact_hjb::config::RunConfig;
use contact_hjb::grid::{GridFunction, PeriodicGrid};

const SMALL_E1: &str = r#"
[model]
coupling = "-3*u"
potential = "0.5*x^2"
lambda = 3.0
strictly_decreasing = true

[grid]
length = 2.0
n = 64

[scheme]
dt = 0.01
v_max = 4.0
velocity_count = 41

[run]
initial = "0.381966 * 0.5*x^2"
horizon = 0.5
max_horizon = 8.0
tol_limit = 1e-8
residual_tol = 0.2

[trace]
x = 0.7
horizon = 4.0

[compare]
v1 = "0.381966 * 0.5*x^2"
v2 = "2.618034 * 0.5*x^2"

[scan]
c_min = -1.0
c_max = 1.0
count = 3

[oracle]
cases = 10
# h = 1/32 here; the default 0.02 is sized for N = 400
hopf_lax_tol = 0.05
"#;

fn exe(dir: &Path, command: &str, config: &Path, threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contact-hjb"))
        .args([command, "--config"])
        .arg(config)
        .arg("--out")
        .arg(dir)
        .env("CONTACT_HJB_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn outputs_independent_of_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_E1);
    for command in ["evolve", "weakkam", "compare", "existence-scan", "legendre", "fixpoint"] {
        let a = tmp.path().join(format!("{command}-1"));
        let b = tmp.path().join(format!("{command}-4"));
        let ra = exe(&a, command, &cfg, "1");
        let rb = exe(&b, command, &cfg, "4");
        assert!(ra.status.success(), "{command}: {}", String::from_utf8_lossy(&ra.stderr));
        assert!(rb.status.success(), "{command}: {}", String::from_utf8_lossy(&rb.stderr));
        let (ta, tb) = (read_tree(&a), read_tree(&b));
        assert!(!ta.is_empty());
        assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
        for (k, v) in &ta {
            assert!(v == &tb[k], "{command}: {k} differs between thread counts");
        }
    }
}

#[test]
fn evolve_horizon_zero_reproduces_initial_file() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = PeriodicGrid::circle(2.0, 64).unwrap();
    let phi = GridFunction::from_fn(grid, |p| (std::f64::consts::PI * p[0]).sin() / 3.0);
    phi.write_csv(&tmp.path().join("phi.csv")).unwrap();
    let text = SMALL_E1.replace("horizon = 0.5", "horizon = 0.0\ninitial_csv = \"phi.csv\"");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let r = exe(&out, "evolve", &cfg, "1");
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        fs::read(out.join("final.csv")).unwrap(),
        fs::read(tmp.path().join("phi.csv")).unwrap()
    );
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_steps"], 0);
    for key in ["dt", "grid", "picard_iterations", "increments"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // unreadable config
    let r = exe(&out, "evolve", &tmp.path().join("missing.toml"), "1");
    assert_eq!(r.status.code(), Some(3));
    // invalid value
    let cfg = write_config(tmp.path(), &SMALL_E1.replace("velocity_count = 41", "velocity_count = 40"));
    assert_eq!(exe(&out, "evolve", &cfg, "1").status.code(), Some(3));
    // unknown key
    let cfg = write_config(tmp.path(), &format!("{SMALL_E1}\n[extra]\nfoo = 1\n"));
    assert_eq!(exe(&out, "evolve", &cfg, "1").status.code(), Some(3));
    // not a fixed point
    let cfg = write_config(
        tmp.path(),
        &SMALL_E1.replace("initial = \"0.381966 * 0.5*x^2\"", "initial = \"sin(3.14159265*x)\""),
    );
    let r = exe(&out, "weakkam", &cfg, "1");
    assert_eq!(r.status.code(), Some(7));
    let stderr = String::from_utf8_lossy(&r.stderr);
    let last: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(last["event"], "error");
    assert_eq!(last["kind"], "weakkam");
    // argument errors belong to the argument parser
    let r = Command::new(env!("CARGO_BIN_EXE_contact-hjb")).arg("nonsense").output().unwrap();
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn oracle_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_E1);
    let out = tmp.path().join("out");
    let r = exe(&out, "oracle-check", &cfg, "1");
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(out.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(doc["passed"], true);
    assert_eq!(doc["brute_force"]["mismatching_nodes"], 0);
}

#[test]
fn config_round_trip() {
    for text in [SMALL_E1, "", &fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/e1.toml")).unwrap()] {
        let cfg = RunConfig::parse(text).unwrap();
        let again = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_text(), cfg.to_text());
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}

#[test]
fn json_numbers_carry_seventeen_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_E1);
    let out = tmp.path().join("out");
    assert!(exe(&out, "evolve", &cfg, "1").status.success());
    let text = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(text.contains("\"dt\": 1.0000000000000000e-2"), "{text}");
    let csv = fs::read_to_string(out.join("final.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let mantissa = row.split(',').nth(1).unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.trim_start_matches('-').replace('.', "").len(), 17, "{row}");
}
