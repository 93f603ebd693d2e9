use bvlap_cli::output::sha256_hex;
use bvlap_cli::{parse_spec, Command, RunConfig};
use bvlap_core::{CoefficientSpec, SignedMeasure};
use clap::Parser;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Output;

const BARRIER: &str = "# magnetic barrier\nb1 on (-1, 1): poly 1\nv1 on (-1, 1): poly 10\n";

fn bvlap(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_bvlap"));
    cmd.args(args).env_remove("BVLAP_THREADS");
    if let Some(t) = threads {
        cmd.env("BVLAP_THREADS", t);
    }
    cmd.output().unwrap()
}

fn write_spec(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn minimal_and_atom_specs() {
    assert_eq!(parse_spec("alpha=1, beta=1").unwrap().spec, CoefficientSpec::free(1.0));
    let d = parse_spec("V0 atom at 0 mass 2").unwrap().spec;
    assert_eq!(d.v0, SignedMeasure::dirac(0.0, 2.0));
}

#[test]
fn validate_free_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "free.spec", "alpha=1, beta=1\n");
    let out = dir.path().join("out");
    let o = bvlap(&["validate", "--spec", s(&spec), "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("failure.json").exists());
    let prov = json(&out.join("provenance.json"));
    assert_eq!(prov["command"], "validate");
    assert_eq!(prov["spec"]["sha256"], sha256_hex(b"alpha=1, beta=1\n"));
    assert_eq!(prov["seed"], 0);
    assert!(prov["failure"].is_null());
    let r = rows(&out.join("validate.csv"));
    assert!(r.iter().any(|r| &r[0] == "inf_beta" && &r[1] == "1e0"));
}

#[test]
fn zero_beta_is_rejected_for_positivity() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "b.spec", "alpha = 1\n\nbeta on (-1, 1): poly 0\n");
    let out = dir.path().join("out");
    let o = bvlap(&["validate", "--spec", s(&spec), "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("positivity"));
    let f = json(&out.join("failure.json"));
    assert_eq!(f["kind"], "positivity");
    assert_eq!(f["line"], 3);
    assert_eq!(f["exit_code"], 1);
}

#[test]
fn syntax_errors_carry_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "x.spec", "h = 1\nv1 on (0, 1) poly 2\n");
    let out = dir.path().join("out");
    let o = bvlap(&["validate", "--spec", s(&spec), "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(1));
    let f = json(&out.join("failure.json"));
    assert_eq!(f["kind"], "parse");
    assert_eq!((f["line"].as_u64(), f["column"].as_u64()), (Some(2), Some(14)));
}

#[test]
fn missing_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = bvlap(&["validate", "--spec", s(&dir.path().join("none.spec")), "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&out.join("failure.json"))["kind"], "io");
}

#[test]
fn delta_resonance_row() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "d.spec", "V0 atom at 0 mass 2\n");
    let out = dir.path().join("out");
    let o = bvlap(&["resonances", "--spec", s(&spec), "--rect", "-1,1,-1.5,-0.5", "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("resonances.csv"));
    assert_eq!(r.len(), 1);
    let re: f64 = r[0][0].parse().unwrap();
    let im: f64 = r[0][1].parse().unwrap();
    assert!(re.abs() < 1e-8 && (im + 1.0).abs() < 1e-8, "{re} {im}");
    assert_eq!(&r[0][2], "1");
}

#[test]
fn carleman_without_positive_tau_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "t.spec", "v1 = 2\n");
    let out = dir.path().join("out");
    let o = bvlap(&["carleman", "--spec", s(&spec), "--E", "1", "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hypothesis (general inf) fails"));
    let f = json(&out.join("failure.json"));
    assert_eq!(f["kind"], "hypothesis");

    let spec = write_spec(dir.path(), "bar.spec", BARRIER);
    let o = bvlap(&["carleman", "--spec", s(&spec), "--phase-slope", "0", "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hypothesis (general inf) fails"));
}

#[test]
fn carleman_reports_constants() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "bar.spec", BARRIER);
    let out = dir.path().join("out");
    let o = bvlap(
        &["carleman", "--spec", s(&spec), "--h-grid", "0.25,1", "--eps", "0.05", "--samples", "4", "--seed", "7", "--out", s(&out)],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("carleman.csv"));
    assert_eq!(r.len(), 8);
    assert!(r.iter().all(|r| &r[7] == "true"));
    let prov = json(&out.join("provenance.json"));
    assert_eq!(prov["seed"], 7);
    let per_h = prov["results"]["per_h"].as_array().unwrap();
    assert_eq!(per_h.len(), 2);
    assert!(per_h[0]["constant_report"]["factors"].as_array().unwrap().len() > 1);
    assert!(prov["results"]["tau"].as_f64().unwrap() > 0.0);
}

#[test]
fn strip_and_barrier_resonances() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "bar.spec", BARRIER);
    let out = dir.path().join("out");
    let o = bvlap(
        &["resonances", "--spec", s(&spec), "--rect", "0.5,3.5,-1,0.2", "--lambda0", "1", "--re-max", "20", "--out", s(&out)],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("resonances.csv"));
    assert_eq!(r.len(), 1);
    assert!((r[0][0].parse::<f64>().unwrap() - 3.2972).abs() < 1e-3);
    let st = rows(&out.join("strip.csv"));
    assert_eq!(&st[0][3], "true");
    assert!(st[0][2].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn strip_blocked_at_the_lower_end_fails() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "bar.spec", BARRIER);
    let out = dir.path().join("out");
    let o = bvlap(
        &["resonances", "--spec", s(&spec), "--rect", "3,3.5,-0.5,0", "--lambda0", "1", "--re-max", "20", "--theta-grid", "0.5,1", "--out", s(&out)],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&out.join("failure.json"))["kind"], "certificate");
    assert!(!rows(&out.join("strip_blocking.csv")).is_empty());
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "bar.spec", BARRIER);
    let runs: Vec<(Vec<&str>, &str)> = vec![
        (vec!["sweep", "--h-grid", "log:0.2:1:3", "--seed", "3"], "sweep.csv"),
        (vec!["evolve", "--t-grid", "lin:0:10:21", "--Lambda", "50"], "evolve.csv"),
        (vec!["carleman", "--samples", "3", "--eps", "0.1", "--seed", "11"], "carleman.csv"),
    ];
    for (args, table) in runs {
        let mut seen: Vec<(Vec<u8>, Vec<u8>)> = vec![];
        for (k, threads) in [None, Some("1"), Some("4")].into_iter().enumerate() {
            let out = dir.path().join(format!("{}-{k}", args[0]));
            let mut full = args.clone();
            full.extend(["--spec", s(&spec), "--out", s(&out)]);
            let o = bvlap(&full, threads);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            seen.push((
                std::fs::read(out.join(table)).unwrap(),
                std::fs::read(out.join("provenance.json")).unwrap(),
            ));
        }
        assert!(seen.windows(2).all(|w| w[0] == w[1]), "{table} differs between runs");
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "free.spec", "alpha = 1\n");
    let o = bvlap(&["validate", "--spec", s(&spec), "--out", s(&dir.path().join("o"))], Some("zero"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_parses_flags() {
    let c = RunConfig::try_parse_from([
        "bvlap", "sweep", "--spec", "a.spec", "--h-grid", "log:0.02:1:20", "--E", "0.5", "--eps", "-0.01", "--rect", "-1,1,-2,0",
    ])
    .unwrap();
    assert_eq!(c.command, Command::Sweep);
    assert_eq!(c.h_grid.unwrap().0.len(), 20);
    assert_eq!((c.energy, c.eps), (0.5, -0.01));
    assert!(RunConfig::try_parse_from(["bvlap", "sweep", "--spec", "a", "--rect", "1,0,0,1"]).is_err());
    assert!(RunConfig::try_parse_from(["bvlap", "fly", "--spec", "a"]).is_err());
}

#[test]
fn evolve_table_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "bar.spec", BARRIER);
    let out = dir.path().join("out");
    let o = bvlap(
        &["evolve", "--spec", s(&spec), "--kind", "schrodinger", "--t-grid", "lin:0:5:11", "--Lambda", "25", "--out", s(&out)],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("evolve.csv"));
    assert_eq!(r.len(), 11);
    let v0: f64 = r[0][1].parse().unwrap();
    let prov = json(&out.join("provenance.json"));
    let projected = prov["results"]["projected_mass"].as_f64().unwrap();
    assert!(v0 > 0.0 && v0 * v0 <= projected * (1.0 + 1e-6), "{v0} {projected}");
    let plot = std::fs::read_to_string(out.join("plot.py")).unwrap();
    assert!(plot.contains("plot(\"evolve\", \"t\""));
}
