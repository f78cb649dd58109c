use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use wavegan::config::RunConfig;

fn wavegan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavegan")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn filters_sum_to_two() {
    let o = wavegan(&["filters", "--nv", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# wavegan filters v1 nv=2"));
    assert_eq!(lines.next(), Some("k,h"));
    let h: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(h.len(), 4);
    assert!((h.iter().sum::<f64>() - 2.0).abs() < 1e-14);
}

#[test]
fn table_reports_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phi.csv");
    let o = wavegan(&["table", "--nv", "3", "--grid", "10", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("two_scale_max_residual < 1e-10"), "{report}");
    assert!(report.contains("partition_of_unity_residual"));
    assert!(fs::metadata(&out).unwrap().len() > 0);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(wavegan(&["filters", "--nv", "0"]).status.code(), Some(2));
    assert_eq!(wavegan(&["fit", "/nonexistent/config.toml"]).status.code(), Some(2));
    assert_eq!(wavegan(&["no-such-command"]).status.code(), Some(2));

    let unknown = write_config(dir.path(), "unknown.toml", "n = 64\nbogus = 1\n");
    let o = wavegan(&["fit", &unknown, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let few = write_config(dir.path(), "few.toml", "experiment = \"empirical\"\nn_grid = [64, 128, 256]\n");
    assert_eq!(wavegan(&["rates", &few, "--out", dir.path().to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn density_mode_needs_full_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "mode = \"density\"\nd = 1\np = 2\n");
    let o = wavegan(&["fit", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension mismatch"), "{}", stderr(&o));
}

#[test]
fn fit_writes_model_report_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "fit.toml",
        "init = \"circle-from-data\"\nn = 128\nm_latent = 128\niterations = 12\ncheckpoint_every = 5\n",
    );
    let out = dir.path().join("out");
    let o = wavegan(&["fit", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let best: Vec<f64> = report["best_loss"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(best.len(), 13);
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    let names: Vec<&str> = report["checkpoints"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(names, ["checkpoint-000005.txt", "checkpoint-000010.txt"]);
    for n in names {
        assert!(out.join(n).exists());
    }
    let model = fs::read_to_string(out.join("model.txt")).unwrap();
    assert!(wavegan::models::GeneratorModel::from_text(&model).is_ok());
}

#[test]
fn fit_accepts_external_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fit.toml", "n = 64\nm_latent = 64\niterations = 3\n");
    let data = dir.path().join("x.csv");
    assert!(wavegan(&["sample", &cfg, "-n", "64", "-o", data.to_str().unwrap()]).status.success());
    let out = dir.path().join("out");
    let o = wavegan(&["fit", &cfg, "--out", out.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    fs::write(&data, "x1,x2,x3\n0.1,0.2,0.3\n").unwrap();
    let o = wavegan(&["fit", &cfg, "--out", out.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ipm_is_symmetric_and_zero_on_itself() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "target = \"circle\"\ntarget_r = 0.8\n");
    let mu = dir.path().join("mu.csv");
    let nu = dir.path().join("nu.csv");
    assert!(wavegan(&["sample", &cfg, "-n", "30", "--seed", "1", "-o", mu.to_str().unwrap()]).status.success());
    assert!(wavegan(&["sample", &cfg, "-n", "20", "--seed", "2", "-o", nu.to_str().unwrap()]).status.success());
    let value = |a: &Path, b: &Path, mode: &str| -> f64 {
        let o = wavegan(&["ipm", "--mu", a.to_str().unwrap(), "--nu", b.to_str().unwrap(), "--mode", mode, "--level", "4"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["value"].as_f64().unwrap()
    };
    for mode in ["box", "ball"] {
        let ab = value(&mu, &nu, mode);
        assert!(ab > 0.0);
        assert_eq!(ab, value(&nu, &mu, mode));
        assert_eq!(value(&mu, &mu, mode), 0.0);
    }
}

#[test]
fn interp_csv_marks_the_undefined_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "i.toml", "perturb_amplitude = 0.25\nladder = 3\nscore_level = 4\n");
    let out = dir.path().join("out");
    let o = wavegan(&["interp-check", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("interp.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# wavegan-interp v1");
    assert_eq!(lines[1], "t,d_high,d_gamma,ratio");
    assert!(lines[2].starts_with("0.0,0.0,0.0,undefined"), "{}", lines[2]);
    assert_eq!(lines.len(), 2 + 4);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("interp.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "wavegan-interp v1");
}

#[test]
fn rates_summary_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        "experiment = \"empirical\"\ntarget = \"product-density\"\nd = 2\np = 2\nradius = 1.01\nn_grid = [32, 64, 128, 256]\ntrials = 3\nscore_level = 4\n",
    );
    let out = dir.path().join("out");
    let o = wavegan(&["rates", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("rates.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# wavegan-rates v1"));
    assert_eq!(lines.next(), Some("n,trial,gamma,mode,ipm_value,seed,reference_size"));
    assert_eq!(lines.count(), 12);
    let json: Value = serde_json::from_str(&fs::read_to_string(out.join("rates.json")).unwrap()).unwrap();
    let s = &json["summaries"][0];
    assert_eq!(s["theory"]["rate"].as_f64().unwrap(), -0.5);
    assert_eq!(s["points"].as_array().unwrap().len(), 4);
    assert!(s["fitted_slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn config_command_prints_the_defaults() {
    let o = wavegan(&["config"]);
    assert!(o.status.success());
    let cfg = RunConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::from_toml(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
