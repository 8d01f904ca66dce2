use std::fs;
use std::path::Path;
use std::process::Command;

use coepi::config::{ExplicitParams, InitialState, MatrixSource, Pin, ScenarioConfig};
use coepi::generator::{generate_scenario, GeneratorSpec, TargetRegime};
use coepi::output::{read_trajectory, trajectory_header, Summary};
use coepi::run::{run, PLOT_FILE, SUMMARY_FILE, TRAJECTORY_FILE};
use proptest::prelude::*;

const APPENDIX: &str = r#"
seed = 11

[params]
infection = [[0.0, 0.0, 1.0], [2.0, 0.0, 1.0], [0.0, 3.0, 0.0]]
healing = [1.5, 1.2, 1.0]
delta_min = 0.8
beta_min = 0.5
opinion = "opinion.csv"

[initial_state]
x = [0.3, 0.2, 0.1]
o = [-0.2, 0.1, 0.3]

[integrator]
h = 0.01
horizon = 30.0
record_every = 25
"#;

fn write_appendix(dir: &Path) -> std::path::PathBuf {
    fs::write(dir.join("opinion.csv"), "0,0,1\n2,0,1\n0,3,0\n").unwrap();
    let path = dir.join("scenario.toml");
    fs::write(&path, APPENDIX).unwrap();
    path
}

fn coepi(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_coepi"))
        .args(args)
        .output()
        .unwrap()
}

fn config_strategy() -> impl Strategy<Value = ScenarioConfig> {
    (1usize..5).prop_flat_map(|n| {
        (
            any::<u64>(),
            prop::collection::vec(prop::collection::vec(0.0..5.0f64, n), n),
            prop::collection::vec(0.1..3.0f64, n),
            prop::collection::vec(0.0..=1.0f64, n),
            prop::collection::vec(-0.5..=0.5f64, n),
            prop::option::of((1..=n, -0.5..=0.5f64)),
            1usize..50,
        )
            .prop_map(|(seed, m, healing, x, o, pin, record_every)| ScenarioConfig {
                seed,
                params: Some(ExplicitParams {
                    infection: MatrixSource::Inline(m.clone()),
                    healing,
                    delta_min: 0.05,
                    beta_min: 0.01,
                    opinion: MatrixSource::Csv("weights.csv".into()),
                }),
                generator: None,
                initial_state: Some(InitialState { x, o }),
                integrator: coepi::config::IntegratorConfig {
                    h: 0.005,
                    horizon: 12.5,
                    record_every,
                },
                stubborn: pin
                    .map(|(community, value)| vec![Pin { community, value }])
                    .unwrap_or_default(),
                outputs: Default::default(),
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(cfg in config_strategy()) {
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text, Path::new("mem")).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn generated_scenario_round_trips() {
    for regime in [TargetRegime::Mild, TargetRegime::Severe, TargetRegime::Moderate] {
        let cfg = generate_scenario(&GeneratorSpec::new(6, regime), 5).unwrap();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string(), Path::new("mem")).unwrap();
        assert_eq!(back, cfg);
    }
}

#[test]
fn run_is_deterministic_and_stays_in_the_box() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_appendix(dir.path());
    let sc = ScenarioConfig::load(&path).unwrap().resolve(dir.path()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&sc, &a).unwrap();
    run(&sc, &b).unwrap();
    for f in [TRAJECTORY_FILE, SUMMARY_FILE, PLOT_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (header, rows) = read_trajectory(&a.join(TRAJECTORY_FILE)).unwrap();
    assert_eq!(header, trajectory_header(3));
    // 3000 steps recorded every 25th, plus the initial state
    assert_eq!(rows.len(), 121);
    for row in &rows {
        assert!(row[1..4].iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(row[4..7].iter().all(|v| (-0.5..=0.5).contains(v)));
    }
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0] && w[0][8] <= w[1][8]));
    assert_eq!(rows[0][1..7], [0.3, 0.2, 0.1, -0.2, 0.1, 0.3]);
}

#[test]
fn simulate_subcommand_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_appendix(dir.path());
    let out = dir.path().join("out");
    let res = coepi(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(res.stdout.is_empty());
    let summary: Summary = toml::from_str(&fs::read_to_string(out.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert!(summary.final_sup_x.is_some());
    assert!(summary.opinion_outcome.is_some());
    assert!(out.join(PLOT_FILE).exists());
}

#[test]
fn classify_and_threshold_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generate_scenario(&GeneratorSpec::new(5, TargetRegime::Moderate), 3).unwrap();
    let path = dir.path().join("moderate.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    let out = dir.path().join("out");
    let args = |cmd: &'static str| {
        vec![
            cmd.to_string(),
            "--config".into(),
            path.display().to_string(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let run_args = |cmd| {
        let a = args(cmd);
        coepi(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let res = run_args("classify");
    assert!(res.status.success());
    let s: Summary = toml::from_str(&String::from_utf8(res.stdout).unwrap()).unwrap();
    assert_eq!(s.regime, "moderate");
    assert!(s.r_min < 1.0 && 1.0 < s.r_max);

    let res = run_args("threshold");
    assert!(res.status.success());
    let s: Summary = toml::from_str(&String::from_utf8(res.stdout).unwrap()).unwrap();
    assert!(s.threshold.unwrap().residual <= 1e-8);

    let res = run_args("select-stubborn");
    assert!(res.status.success());
    let s: Summary = toml::from_str(&String::from_utf8(res.stdout).unwrap()).unwrap();
    let plan = s.plan.unwrap();
    assert!(plan.predicted_r < 1.0);
    assert!(plan.stubborn.iter().all(|p| (1..=5).contains(&p.community)));

    let res = run_args("equilibria");
    assert!(res.status.success());
    let s: Summary = toml::from_str(&String::from_utf8(res.stdout).unwrap()).unwrap();
    assert_eq!(s.equilibria[0].class, "consensus-healthy");
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let res = coepi(&["simulate", "--config", "/nonexistent/s.toml", "--out", out_s]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert!(stderr.contains("kind = \"config\""), "{stderr}");
    assert!(stderr.contains("exit_code = 2"));

    // threshold on a mild system is an infeasible request
    let mild = generate_scenario(&GeneratorSpec::new(4, TargetRegime::Mild), 1).unwrap();
    let path = dir.path().join("mild.toml");
    fs::write(&path, mild.to_toml_string()).unwrap();
    let res = coepi(&["threshold", "--config", path.to_str().unwrap(), "--out", out_s]);
    assert_eq!(res.status.code(), Some(4));

    // a 5-unit step overshoots the box
    let mut coarse = mild.clone();
    coarse.integrator.h = 50.0;
    coarse.stubborn = (1..=4).map(|community| Pin { community, value: -0.5 }).collect();
    coarse.initial_state = Some(InitialState {
        x: vec![0.9; 4],
        o: vec![-0.5; 4],
    });
    let path = dir.path().join("coarse.toml");
    fs::write(&path, coarse.to_toml_string()).unwrap();
    let res = coepi(&["simulate", "--config", path.to_str().unwrap(), "--out", out_s]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("error.toml").exists());
}

#[test]
fn generate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str| {
        let out = dir.path().join(name);
        let res = coepi(&[
            "generate", "--regime", "severe", "--n", "6", "--seed", "9", "--out",
            out.to_str().unwrap(), "--quiet",
        ]);
        assert!(res.status.success());
        fs::read(out.join("scenario.toml")).unwrap()
    };
    assert_eq!(gen("a"), gen("b"));
}

#[test]
fn jacobian_check_passes_on_generated_system() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generate_scenario(&GeneratorSpec::new(5, TargetRegime::Severe), 2).unwrap();
    let path = dir.path().join("s.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    let out = dir.path().join("out");
    let res = coepi(&[
        "jacobian-check",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert!(String::from_utf8(res.stdout).unwrap().contains("passed = true"));
}
