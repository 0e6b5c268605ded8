use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_resonance-kit"));
    c.env_remove("RESONANCE_KIT_JOBS");
    c
}

fn model(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "models", name].iter().collect();
    p.display().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn spectrum_lists_four_states() {
    let o = run(&["spectrum", &model("t-model.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("n,re_lambda,im_lambda,re_E,im_E,class,norm_residual\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 4);
    let classes: Vec<&str> = r.iter().map(|r| r[5].as_str()).collect();
    assert_eq!(classes, ["Bound", "AntiResonant", "Resonant", "Bound"]);
    let re: f64 = r[2][1].parse().unwrap();
    let im: f64 = r[2][2].parse().unwrap();
    assert!((re - 0.502834).abs() < 1e-6 && (im - 1.21680).abs() < 1e-5);
}

#[test]
fn spectrum_json_for_single_site() {
    let o = run(&["spectrum", &model("m1.json"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let states = v["states"].as_array().unwrap();
    assert_eq!(states.len(), 2);
    for s in states {
        assert!((s["lambda"][1].as_f64().unwrap().abs() - 2.0 / 3f64.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn asymmetric_model_is_an_input_error() {
    let o = run(&["spectrum", &model("asymmetric.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not symmetric"), "{}", stderr(&o));
    let o = run(&["spectrum", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_two() {
    let t = model("t-model.json");
    for args in [
        vec!["survival", t.as_str(), "--t", "0:10:1", "--i", "3"],
        vec!["survival", t.as_str(), "--t", "0:10:1", "--groups"],
        vec!["escape", t.as_str(), "--lead", "Q", "--x", "3", "--t", "1"],
        vec!["escape", t.as_str(), "--lead", "R", "--k", "1.0", "--t", "1"],
        vec!["survival", t.as_str(), "--t", "0:10", "--method", "poles"],
        vec!["survival", t.as_str(), "--t", "0:300:1", "--method", "oracle", "--lead-length", "100"],
        vec!["greens", t.as_str(), "--E", "0.5"],
        vec!["verify"],
        vec!["bogus"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn verify_passes_on_t_model_and_random_sweep() {
    let o = run(&["verify", &model("t-model.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 5);
    assert!(r.iter().all(|r| r[2] == "PASS"));
    let o = run(&["verify", "--random", "100", "--n", "4", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("100/100 PASS"));
}

#[test]
fn verify_fails_with_impossible_tolerance() {
    let o = run(&["verify", &model("t-model.json"), "--tol", "1e-30"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("0/1 PASS"));
}

#[test]
fn verify_skips_identities_for_incomplete_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unit.json");
    std::fs::write(&path, r#"{"n_sites": 1, "epsilon": [0.0], "leads": [{"site": 1, "coupling": 1.0, "label": "R"}]}"#)
        .unwrap();
    let o = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let unity = r.iter().find(|r| r[1] == "unity").unwrap();
    assert_eq!(unity[2], "SKIP");
    assert!(!unity[5].is_empty());
}

#[test]
fn survival_grid_starts_at_unity() {
    let o = run(&["survival", &model("t-model.json"), "--i", "1", "--j", "1", "--t", "0:100:0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 201);
    let abs2: f64 = r[0][3].parse().unwrap();
    assert!((abs2 - 1.0).abs() < 1e-12);
    assert!(r.iter().all(|r| r[4] == "quadrature" && r[5] == "total"));
}

#[test]
fn survival_methods_agree() {
    let t = model("t-model.json");
    let get = |method: &str| -> Vec<f64> {
        let o = run(&["survival", &t, "--t", "5,10,20", "--method", method, "--branch", "descent"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        rows(&stdout(&o)).iter().map(|r| r[3].parse().unwrap()).collect()
    };
    let q = get("quadrature");
    for m in ["poles", "oracle"] {
        for (a, b) in q.iter().zip(get(m)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn escape_groups_and_resonant_front() {
    let o = run(&["escape", &model("t-model.json"), "--lead", "R", "--x", "20", "--t", "15,30", "--method", "poles", "--groups"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let groups: Vec<&str> = r.iter().map(|r| r[5].as_str()).collect();
    assert_eq!(&groups[..4], ["total", "res", "bound_ab", "branch"]);
    let at = |t: &str, g: &str| -> f64 {
        r.iter().find(|r| r[0].parse::<f64>().unwrap() == t.parse::<f64>().unwrap() && r[5] == g).unwrap()[3].parse().unwrap()
    };
    assert!(at("15", "res") > at("15", "bound_ab"));
    // groups add up to the total
    let c = |row: &Vec<String>| (row[1].parse::<f64>().unwrap(), row[2].parse::<f64>().unwrap());
    for t in ["15", "30"] {
        let rs: Vec<&Vec<String>> = r.iter().filter(|row| row[0].parse::<f64>().unwrap() == t.parse::<f64>().unwrap()).collect();
        let total = c(rs[0]);
        let sum = rs[1..].iter().map(|row| c(row)).fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        assert!((total.0 - sum.0).abs() < 1e-10 && (total.1 - sum.1).abs() < 1e-10);
    }
}

#[test]
fn escape_into_momentum_state() {
    let t = model("t-model.json");
    let o = run(&["escape", &t, "--lead", "R", "--k", "1.2", "--t", "10", "--method", "poles", "--groups", "--branch", "descent"]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert!(r.iter().any(|r| r[5] == "plane"));
    let poles: f64 = r[0][3].parse().unwrap();
    let o = run(&["escape", &t, "--lead", "R", "--k", "1.2", "--t", "10", "--method", "oracle", "--lead-length", "300"]);
    let oracle: f64 = rows(&stdout(&o))[0][3].parse().unwrap();
    assert!((poles - oracle).abs() < 1e-3, "{poles} {oracle}");
}

#[test]
fn packet_components_cover_classes() {
    let o = run(&["packet", &model("t-model.json"), "--x0", "40", "--width", "10", "--k0", "0", "--t", "-20:20:20", "--components"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("t,lead,x,re,im,abs2,component\n"));
    let r = rows(&text);
    for c in ["total", "free", "res", "ar", "bound"] {
        assert!(r.iter().any(|r| r[6] == c), "{c}");
    }
    // 3 times, 5 components, 2 dot sites + 2 leads x 200
    assert_eq!(r.len(), 3 * 5 * (2 + 2 * 200));
    assert!(r.iter().any(|r| r[1] == "dot" && r[2] == "1"));
    assert!(r.iter().any(|r| r[1] == "L" && r[2] == "200"));
}

#[test]
fn greens_transmission_and_compare() {
    let t = model("t-model.json");
    let o = run(&["greens", &t, "--E", "-1.999999,-1:1:0.5,1.999999", "--transmission", "L,R"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 7);
    let tr: Vec<f64> = r.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(tr.iter().all(|t| (0.0..=1.0).contains(t)));
    assert!(tr[0] < 1e-2 && tr[6] < 1e-2);

    let o = run(&["greens", &t, "--E", "-1:1:0.25", "--element", "1,2", "--element", "L:3,R:1", "--compare"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for r in rows(&stdout(&o)) {
        for d in [&r[3], &r[6]] {
            assert!(d.parse::<f64>().unwrap() < 1e-9);
        }
    }
}

#[test]
fn greens_lead_element_matches_oracle() {
    let t = model("t-model.json");
    let get = |method: &str| -> Vec<String> {
        let o = run(&["greens", &t, "--lambda", "0.3+0.4i,-0.5", "--element", "L:3,L:1", "--method", method]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o).lines().skip(1).map(String::from).collect()
    };
    let direct = get("direct");
    let oracle = get("oracle");
    for (a, b) in direct.iter().zip(&oracle) {
        let a: Vec<f64> = a.split(',').map(|v| v.parse().unwrap()).collect();
        let b: Vec<f64> = b.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((a[4] - b[4]).abs() < 1e-10 && (a[5] - b[5]).abs() < 1e-10);
    }
}

#[test]
fn output_is_deterministic_across_job_counts() {
    let t = model("t-model.json");
    let args = ["survival", t.as_str(), "--t", "0:40:0.5", "--method", "poles", "--groups"];
    let one = bin().args(args).args(["--jobs", "1"]).output().unwrap();
    let many = bin().args(args).env("RESONANCE_KIT_JOBS", "7").output().unwrap();
    assert_eq!(one.stdout, many.stdout);
    let p1 = run(&["packet", &t, "--t", "-10:10:5", "--jobs", "1"]);
    let p2 = run(&["packet", &t, "--t", "-10:10:5", "--jobs", "3"]);
    assert_eq!(p1.stdout, p2.stdout);
}

#[test]
fn out_flag_writes_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let o = run(&["spectrum", &model("t-model.json"), "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 5);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["jobs"], 2);
    assert!(manifest["tool_version"].is_string());
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn help_documents_exit_codes() {
    let o = run(&["--help"]);
    let text = stdout(&o);
    assert!(text.contains("Exit codes"));
    for sub in ["spectrum", "verify", "greens", "survival", "escape", "packet"] {
        assert!(text.contains(sub));
    }
}

#[test]
fn degenerate_spectrum_needs_allow_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("twins.json");
    std::fs::write(
        &path,
        r#"{"n_sites": 2, "epsilon": [0.0, 0.0],
            "leads": [{"site": 1, "coupling": 0.5, "label": "A"}, {"site": 2, "coupling": 0.5, "label": "B"}]}"#,
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let o = run(&["spectrum", p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("degenerate"));
    let o = run(&["spectrum", p, "--allow-warnings"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 4);
    assert!(r.iter().all(|r| r[6] == "NaN"));
}
