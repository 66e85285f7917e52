use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn lapfield(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lapfield"))
        .current_dir(dir)
        .env_remove("LAPFIELD_THREADS")
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a CSV output, header included, preamble dropped.
fn body(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

fn parse_rows(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let lines = body(csv);
    let header = lines[0].split(',').map(str::to_string).collect();
    let rows = lines[1..]
        .iter()
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

/// Copies the fixtures into a scratch directory and writes a synthetic
/// observations file drawn from the fixture model.
fn workspace(n: usize) -> TempDir {
    let tmp = TempDir::new().unwrap();
    for f in ["sites.csv", "model.json", "margins.json", "config.toml"] {
        fs::copy(fixtures().join(f), tmp.path().join(f)).unwrap();
    }
    let sim = stdout(&lapfield(
        tmp.path(),
        &["--config", "config.toml", "--seed", "3", "simulate", "-n", &n.to_string()],
    ));
    let mut data = String::new();
    for (i, line) in body(&sim).into_iter().enumerate() {
        if i == 0 {
            data.push_str(&line.replacen("draw", "date", 1));
        } else {
            data.push_str(line);
        }
        data.push('\n');
    }
    fs::write(tmp.path().join("obs.csv"), data).unwrap();
    tmp
}

#[test]
fn simulate_matches_golden() {
    let out = stdout(&lapfield(&fixtures(), &["--config", "config.toml", "simulate"]));
    let golden = fs::read_to_string(fixtures().join("golden/simulate.csv")).unwrap();
    assert_eq!(body(&out), body(&golden));
    assert!(out.starts_with("# lapfield "));
    assert!(out.contains("schema_version=1"));
    assert!(out.contains("seed=11"));
    assert!(out.contains("# config={"));
}

#[test]
fn condsim_matches_golden() {
    let out = stdout(&lapfield(
        &fixtures(),
        &["--config", "config.toml", "condsim", "--site", "DK", "--period-years", "100", "-n", "3"],
    ));
    let golden = fs::read_to_string(fixtures().join("golden/condsim.csv")).unwrap();
    assert_eq!(body(&out), body(&golden));
}

#[test]
fn seed_determinism() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("draws.csv");
    let run = || {
        let cfg = fixtures().join("config.toml");
        stdout(&lapfield(
            &fixtures(),
            &["--config", cfg.to_str().unwrap(), "--seed", "99", "simulate", "-n", "200", "-o", path.to_str().unwrap()],
        ));
        fs::read(&path).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let other = stdout(&lapfield(&fixtures(), &["--config", "config.toml", "--seed", "100", "simulate", "-n", "200"]));
    assert_ne!(body(&String::from_utf8(a).unwrap()), body(&other));
}

#[test]
fn thread_count_does_not_change_output() {
    let one = stdout(&lapfield(&fixtures(), &["--config", "config.toml", "--threads", "1", "simulate", "-n", "50"]));
    let two = stdout(&lapfield(&fixtures(), &["--config", "config.toml", "--threads", "2", "simulate", "-n", "50"]));
    assert_eq!(body(&one), body(&two));
}

#[test]
fn missing_covariate_column_is_schema_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("sites.csv"), "id,x,y\nA,0,0\nB,1,1\n").unwrap();
    fs::write(tmp.path().join("obs.csv"), "date,A,B\n1,25,30\n").unwrap();
    let o = lapfield(tmp.path(), &["--sites", "sites.csv", "--data", "obs.csv", "fit-margins", "--threshold", "20"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dist_sea_km"), "{err}");
    assert!(err.contains("sites.csv"), "{err}");
}

#[test]
fn unknown_data_column_is_schema_error() {
    let tmp = workspace(50);
    fs::write(tmp.path().join("bad.csv"), "date,DK,XX\n1,25,30\n").unwrap();
    let o = lapfield(tmp.path(), &["--config", "config.toml", "--data", "bad.csv", "fit-margins", "--threshold", "20"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("XX"));
}

#[test]
fn threshold_above_data_max_reports_no_exceedances() {
    let tmp = workspace(200);
    let o = lapfield(
        tmp.path(),
        &["--config", "config.toml", "--data", "obs.csv", "fit-margins", "--threshold", "1000", "--bootstrap", "0"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no exceedances"));
}

#[test]
fn fit_margins_round_trip() {
    let tmp = workspace(3000);
    let o = lapfield(
        tmp.path(),
        &["--config", "config.toml", "--data", "obs.csv", "fit-margins", "--threshold", "12", "--bootstrap", "10", "-o", "fit.json"],
    );
    stdout(&o);
    let text = fs::read_to_string(tmp.path().join("fit.json")).unwrap();
    let m = lapfield::io::parse_margins_json(&text).unwrap();
    assert_eq!(m.tail.threshold_u, 12.0);
    assert!((m.tail.gamma - 1.72).abs() < 0.3, "{:?}", m.tail);
    let se = m.se.expect("bootstrap SEs");
    assert!(se.contains_key("gamma") && se.contains_key("delta0") && se.contains_key("delta1"));
    let prov = m.provenance.expect("provenance");
    assert_eq!(prov.command, "fit-margins");
    assert_eq!(prov.seed, 11);
    assert_eq!(prov.config["margins"]["threshold"], 12.0);
}

#[test]
fn fit_dependence_table_marks_one_row() {
    let tmp = workspace(1500);
    let o = lapfield(
        tmp.path(),
        &[
            "--config", "config.toml", "--data", "obs.csv", "fit-dependence", "--types", "laplace,gaussian",
            "--restarts", "1", "--max-evals", "200", "--prob-u", "0.9", "-o", "dep.json", "--table", "table.csv",
        ],
    );
    stdout(&o);
    let table = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    let lines = body(&table);
    assert_eq!(lines[0], "family,type,anisotropic,scale,shape,theta,b,loglik,aic,dim,exceedances,n,best,error");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines.iter().filter(|l| l.contains(",true,")).count(), 1);
    let best = lines.iter().find(|l| l.contains(",true,")).unwrap();
    let model = lapfield::io::parse_model_json(&fs::read_to_string(tmp.path().join("dep.json")).unwrap()).unwrap();
    assert!(best.contains(&format!(",{},", model.dep_type)));
    assert!(model.fit.is_some());
    assert_eq!(model.provenance.unwrap().command, "fit-dependence");
}

#[test]
fn single_family_request_gives_one_row() {
    let tmp = workspace(800);
    stdout(&lapfield(
        tmp.path(),
        &[
            "--config", "config.toml", "--data", "obs.csv", "fit-dependence", "--types", "laplace", "--restarts", "1",
            "--max-evals", "150", "--prob-u", "0.9", "-o", "dep.json", "--table", "table.csv",
        ],
    ));
    let table = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    assert_eq!(body(&table).len(), 2);
}

#[test]
fn diagnose_writes_tables() {
    let tmp = workspace(1000);
    stdout(&lapfield(
        tmp.path(),
        &["--config", "config.toml", "--data", "obs.csv", "diagnose", "--model", "model.json", "--output-dir", "diag"],
    ));
    let pairs = fs::read_to_string(tmp.path().join("diag/pairs.csv")).unwrap();
    assert_eq!(body(&pairs)[0], "site_i,site_j,distance,rho_hat,rho_model");
    assert_eq!(body(&pairs).len(), 1 + 10);
    let lambda = fs::read_to_string(tmp.path().join("diag/lambda.csv")).unwrap();
    assert_eq!(body(&lambda).len(), 1 + 10 * 5);
    let qq = fs::read_to_string(tmp.path().join("diag/qq.csv")).unwrap();
    assert_eq!(body(&qq)[0], "theoretical,empirical");
    assert!(body(&qq).len() > 10);
}

#[test]
fn conditioning_site_outside_set_is_rejected() {
    let o = lapfield(&fixtures(), &["--config", "config.toml", "condsim", "--site", "NOPE", "--level", "30"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NOPE"));
}

#[test]
fn all_sites_conditioning_echoes_values() {
    let tmp = TempDir::new().unwrap();
    let values = [("DK", 31.5), ("VL", 28.25), ("SC", 22.0), ("HE", 19.5), ("MA", 17.75)];
    let mut csv = String::from("id,value\n");
    for (id, v) in values {
        csv.push_str(&format!("{id},{v}\n"));
    }
    let cond = tmp.path().join("cond.csv");
    fs::write(&cond, csv).unwrap();
    let out = stdout(&lapfield(
        &fixtures(),
        &["--config", "config.toml", "condsim", "--conditioning", cond.to_str().unwrap(), "-n", "5"],
    ));
    let (header, rows) = parse_rows(&out);
    assert_eq!(rows.len(), 5);
    for row in rows {
        for (id, v) in values {
            let j = header.iter().position(|h| h == id).unwrap() - 1;
            assert_eq!(row[j], v);
        }
    }
}

#[test]
fn condsim_keeps_conditioned_column() {
    let out = stdout(&lapfield(
        &fixtures(),
        &["--config", "config.toml", "condsim", "--site", "SC", "--level", "33.5", "-n", "20"],
    ));
    let (header, rows) = parse_rows(&out);
    let j = header.iter().position(|h| h == "SC").unwrap() - 1;
    assert!(rows.iter().all(|r| r[j] == 33.5));
    assert!(rows.iter().any(|r| r[0] != rows[0][0]));
}

#[test]
fn return_single_site_matches_marginal_tail() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("grid.csv"), "id,x,y,dist_sea_km\nG,0,0,30\n").unwrap();
    let out = stdout(&lapfield(
        tmp.path(),
        &[
            "return", "--model", fixtures().join("model.json").to_str().unwrap(), "--margins",
            fixtures().join("margins.json").to_str().unwrap(), "--grid", "grid.csv", "--period", "100", "--period", "1000",
        ],
    ));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["grid_size"], 1);
    assert_eq!(report["provenance"]["command"], "return");
    let tail = lapfield::dist::WeibullTail::new(1.72, 2.44, -0.0021, 20.0).unwrap();
    let levels = report["return_levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    let mut prev = 0.0;
    for (lvl, t) in levels.iter().zip([100.0, 1000.0]) {
        let x = lvl["level"].as_f64().unwrap();
        let expect = tail.inverse_survival(1.0 / (365.25 * t), 30.0).unwrap();
        assert!((x - expect).abs() < 1e-3 * expect, "T={t}: {x} vs {expect}");
        assert!(x > prev);
        prev = x;
    }
}

#[test]
fn bad_config_key_is_schema_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("c.toml"), "[simulate]\nnn = 3\n").unwrap();
    let o = lapfield(tmp.path(), &["--config", "c.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_threads_is_rejected() {
    let o = lapfield(&fixtures(), &["--config", "config.toml", "--threads", "0", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}
