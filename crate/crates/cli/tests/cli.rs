use std::process::Command;

use delayed_glm_bandit::{LinkKind, PolicyKind};
use dgb_cli::runner::mean_and_se;
use dgb_cli::{
    read_meta, run_experiment, write_csv, write_meta, AggregateResult, CellSpec, DelayKind,
    DelaySpec, ExperimentSpec, PolicySpec, Preset, CSV_HEADER,
};

fn small_spec() -> ExperimentSpec {
    let cell = |link, kind, mean, t| CellSpec {
        d: 2,
        k: 5,
        t,
        link,
        delay: DelaySpec { kind, mean },
        theta_seed: 4,
    };
    ExperimentSpec {
        cells: vec![
            cell(LinkKind::Identity, DelayKind::Exponential, 5.0, 300),
            cell(LinkKind::Logistic, DelayKind::Uniform, 3.0, 250),
        ],
        policies: vec![
            PolicySpec {
                kind: PolicyKind::DelayedOfuGlm,
                alpha: 1.0,
                delta: 0.05,
                m1: 1.0,
                r: 1.0,
            },
            PolicySpec {
                kind: PolicyKind::Random,
                alpha: 1.0,
                delta: 0.05,
                m1: 1.0,
                r: 1.0,
            },
        ],
        n_runs: 3,
        base_seed: 11,
        record_every: 50,
    }
}

#[test]
fn empty_result_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_csv(&AggregateResult::default(), &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        format!("{}\n", CSV_HEADER.join(","))
    );
}

#[test]
fn meta_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("meta.json");
    let spec = small_spec();
    write_meta(&spec, &path).unwrap();
    let meta = read_meta(&path).unwrap();
    assert_eq!(meta.spec, spec);
    assert_eq!(meta.run_seeds, vec![11, 12, 13]);
    assert_eq!(meta.analytic_delay_means, vec![5.0, 3.0]);
}

#[test]
fn csv_row_count_matches_spec() {
    let spec = small_spec();
    let result = run_experiment(&spec, 1).unwrap();
    // 2 cells × 2 policies × ⌊T / 50⌋
    assert_eq!(result.rows.len(), 2 * 6 + 2 * 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_csv(&result, &path).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        CSV_HEADER.to_vec()
    );
    assert_eq!(reader.records().count(), result.rows.len());
}

#[test]
fn single_run_has_zero_standard_error() {
    let spec = ExperimentSpec {
        n_runs: 1,
        record_every: 1,
        ..small_spec()
    };
    let result = run_experiment(&spec, 1).unwrap();
    assert!(result.rows.iter().all(|r| r.se_cum_regret == 0.0));
    let trace = delayed_glm_bandit::run_episode(
        &spec.cells[0].environment(spec.run_seed(0)),
        &spec.policies[0].config(LinkKind::Identity),
    )
    .unwrap();
    for (row, rec) in result
        .rows
        .iter()
        .filter(|r| r.cell_id == 0 && r.policy == "delayed_ofu_glm")
        .zip(&trace.rounds)
    {
        assert_eq!(row.round, rec.round);
        assert_eq!(row.mean_cum_regret, rec.cum_regret);
        assert_eq!(row.mean_pending, rec.pending as f64);
    }
    assert_eq!(mean_and_se(&[2.5, 2.5, 2.5]), (2.5, 0.0));
}

#[test]
fn learner_beats_random_without_delay() {
    let spec = ExperimentSpec {
        cells: vec![CellSpec {
            d: 2,
            k: 10,
            t: 2000,
            link: LinkKind::Identity,
            delay: DelaySpec {
                kind: DelayKind::Zero,
                mean: 0.0,
            },
            theta_seed: 8,
        }],
        n_runs: 5,
        record_every: 2000,
        ..small_spec()
    };
    let result = run_experiment(&spec, 1).unwrap();
    let ofu = result
        .final_row(0, "delayed_ofu_glm")
        .unwrap()
        .mean_cum_regret;
    let random = result.final_row(0, "random").unwrap().mean_cum_regret;
    assert!(ofu < random, "{ofu} vs {random}");
}

#[test]
fn config_keys_are_exact() {
    let text = Preset::Desk.spec().to_json();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut top: Vec<&str> = value
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    top.sort_unstable();
    assert_eq!(
        top,
        ["base_seed", "cells", "n_runs", "policies", "record_every"]
    );
    let mut cell: Vec<&str> = value["cells"][0]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    cell.sort_unstable();
    assert_eq!(cell, ["d", "delay", "k", "link", "t", "theta_seed"]);
    let mut policy: Vec<&str> = value["policies"][0]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    policy.sort_unstable();
    assert_eq!(policy, ["alpha", "delta", "kind", "m1", "r"]);
    assert!(ExperimentSpec::from_json(&text.replace("\"theta_seed\"", "\"theta\"")).is_err());
}

#[test]
fn presets_are_valid() {
    let desk = Preset::Desk.spec();
    desk.validate(false).unwrap();
    assert_eq!(desk.n_runs, 10);
    assert!(desk
        .cells
        .iter()
        .all(|c| c.d == 5 && c.k == 20 && c.t == 20_000));
    assert!(desk
        .policies
        .iter()
        .all(|p| (p.delta - 0.05 / 3.0).abs() < 1e-15));
    let paper = Preset::Paper.spec();
    paper.validate(false).unwrap();
    assert_eq!(paper.n_runs, 30);
    assert_eq!(paper.cells.len(), 2 * 3 * 3 * 4);
}

#[test]
fn invalid_specs_are_rejected() {
    let spec = ExperimentSpec {
        record_every: 0,
        ..small_spec()
    };
    assert!(spec.validate(false).is_err());
    let mut poisson = small_spec();
    poisson.cells[0].link = LinkKind::Exponential;
    assert!(poisson.validate(false).is_err());
    assert!(poisson.validate(true).is_ok());
    let mut weak = small_spec();
    weak.policies[0].alpha = 0.5;
    assert!(weak.validate(false).is_err());
}

fn dgb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dgb"))
}

#[test]
fn binary_runs_and_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(&config, small_spec().to_json()).unwrap();
    let out = dir.path().join("out");
    let status = dgb()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("results.csv").exists() && out.join("meta.json").exists());

    std::fs::write(&config, "{\"cells\": []}").unwrap();
    let status = dgb()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    let preset = dgb().args(["preset", "--name", "desk"]).output().unwrap();
    assert!(preset.status.success());
    let spec = ExperimentSpec::from_json(std::str::from_utf8(&preset.stdout).unwrap()).unwrap();
    assert_eq!(spec, Preset::Desk.spec());

    let verify = dgb()
        .args(["verify", "--instances", "20", "--seed", "3"])
        .output()
        .unwrap();
    assert!(verify.status.success());
    let text = String::from_utf8(verify.stdout).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().all(|l| l.ends_with("PASS")));
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(&config, small_spec().to_json()).unwrap();
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let status = dgb()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("BANDIT_SEED", seed)
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(out.join("results.csv")).unwrap(),
            read_meta(&out.join("meta.json")).unwrap(),
        )
    };
    let (a, meta) = run("500", "a");
    let (b, _) = run("501", "b");
    assert_ne!(a, b);
    assert_eq!(meta.spec.base_seed, 500);
}
