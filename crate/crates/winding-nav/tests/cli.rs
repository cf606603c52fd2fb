//! End-to-end tests of the `winding-nav` binary: every subcommand, the exit
//! code contract, report determinism, and schema conformance.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_winding-nav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, want: i32) {
    let got = out.status.code().expect("no signal");
    assert_eq!(
        got,
        want,
        "expected exit {want}, got {got}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

/// Small, fast training config: two agents, a thin candidate set.
const TINY_TRAIN: &str = r#"
[scenario]
n_agents = 2
mode = "random"
[ppo]
total_env_steps = 1200
batch_size = 512
[controller]
num_candidates = 32
"#;

#[test]
fn train_writes_checkpoints_metrics_and_resumes() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("train.toml");
    write(&cfg, &format!("checkpoint_every = 1\n{TINY_TRAIN}"));
    let out_dir = dir.path().join("run");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);

    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,env_steps,mean_return,success_rate,collision_rate,timeout_rate,mean_episode_len,entropy,kl"
    );
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(out_dir.join("policy_final.json").exists());
    assert!(out_dir.join("policy_latest.json").exists());
    assert!(out_dir.join("policy_iter_00001.json").exists());

    let state: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("train_state.json")).unwrap())
            .unwrap();
    let steps_before = state["counters"]["env_steps"].as_u64().unwrap();
    assert!(steps_before >= 1200);

    // resume with a raised budget: counters continue, metrics rows append
    let cfg2 = dir.path().join("train2.toml");
    write(
        &cfg2,
        &TINY_TRAIN.replace("total_env_steps = 1200", "total_env_steps = 2400"),
    );
    let out = run(&[
        "train",
        "--config",
        cfg2.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
        "--resume",
    ]);
    assert_code(&out, 0);
    let state: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("train_state.json")).unwrap())
            .unwrap();
    let steps_after = state["counters"]["env_steps"].as_u64().unwrap();
    assert!(steps_after >= 2400, "resume did not continue: {steps_after}");

    let metrics_after = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics_after.starts_with(&metrics), "resume rewrote history");
    let first_new = metrics_after[metrics.len()..]
        .lines()
        .next()
        .expect("resume appended rows");
    let resumed_iter: u64 = first_new.split(',').next().unwrap().parse().unwrap();
    let last_old_iter: u64 = rows.last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(resumed_iter, last_old_iter + 1);
}

#[test]
fn eval_is_byte_deterministic_and_rates_sum_to_one() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = run(&[
            "eval",
            "--mode",
            "crossing",
            "--agents",
            "3",
            "--method",
            "tmpc",
            "--episodes",
            "4",
            "--seed",
            "123",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_code(&out, 0);
    }
    let ra = fs::read(a.join("report.json")).unwrap();
    let rb = fs::read(b.join("report.json")).unwrap();
    assert_eq!(ra, rb, "same seed, different report bytes");
    assert_eq!(
        fs::read(a.join("episodes.csv")).unwrap(),
        fs::read(b.join("episodes.csv")).unwrap()
    );

    let report: Value = serde_json::from_slice(&ra).unwrap();
    let r = &report["report"];
    let sum = r["success_rate"].as_f64().unwrap()
        + r["collision_rate"].as_f64().unwrap()
        + r["timeout_rate"].as_f64().unwrap();
    assert!((sum - 1.0).abs() <= 1e-12);
    let rows = fs::read_to_string(a.join("episodes.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4, "header plus one row per episode");
}

#[test]
fn eval_enforces_method_policy_consistency() {
    let dir = TempDir::new().unwrap();
    // wnummpc without a policy
    let out = run(&[
        "eval",
        "--method",
        "wnummpc",
        "--episodes",
        "1",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("policy"));

    // vanilla with a policy
    let policy = dir.path().join("p.json");
    write(&policy, "{}");
    let out = run(&[
        "eval",
        "--method",
        "vanilla",
        "--policy",
        policy.to_str().unwrap(),
        "--episodes",
        "1",
        "--out",
        dir.path().join("y").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn eval_runs_a_learned_policy_end_to_end() {
    use winding_nav::planner::{Architecture, PolicyParams};
    let dir = TempDir::new().unwrap();
    let policy = dir.path().join("policy.json");
    let mut rng = rand::SeedableRng::seed_from_u64(9);
    PolicyParams::init_random(Architecture::standard(4), &mut rng)
        .unwrap()
        .save(&policy)
        .unwrap();

    let out_dir = dir.path().join("report");
    let out = run(&[
        "eval",
        "--mode",
        "crossing",
        "--agents",
        "3",
        "--method",
        "wnummpc",
        "--policy",
        policy.to_str().unwrap(),
        "--episodes",
        "2",
        "--seed",
        "50",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "wnummpc");
    assert_eq!(report["deterministic_planner"], Value::Bool(true));

    // a policy trained for a smaller capacity than the team is a config error
    let out = run(&[
        "eval",
        "--agents",
        "6",
        "--method",
        "wnummpc",
        "--policy",
        policy.to_str().unwrap(),
        "--episodes",
        "1",
        "--out",
        dir.path().join("z").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn eval_flags_seed_overlap() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("eval.toml");
    write(
        &cfg,
        r#"
method = "vanilla"
train_seed = 5
n_episodes = 2
[scenario]
n_agents = 2
"#,
    );
    let out_dir = dir.path().join("r");
    let out = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap"));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed_overlap"], Value::Bool(true));
}

#[test]
fn unknown_config_keys_are_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "method = \"vanilla\"\nn_episodez = 3\n");
    let out = run(&["eval", "--config", cfg.to_str().unwrap(), "--out", "unused"]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_episodez"));
}

#[test]
fn sweep_single_cell_agrees_with_eval_and_is_order_stable() {
    let dir = TempDir::new().unwrap();
    let base = r#"
method = "vanilla"
n_episodes = 3
eval_seed = 77
[scenario]
n_agents = 3
mode = "crossing"
"#;
    let one_cell = dir.path().join("one.toml");
    write(
        &one_cell,
        &format!("{base}[sweep]\nalpha_g = [1.0]\nalpha_o = [10.0]\n"),
    );
    let sweep_dir = dir.path().join("sweep1");
    assert_code(
        &run(&["sweep", "--config", one_cell.to_str().unwrap(), "--out", sweep_dir.to_str().unwrap()]),
        0,
    );
    let best: Value =
        serde_json::from_str(&fs::read_to_string(sweep_dir.join("best.json")).unwrap()).unwrap();

    let eval_cfg = dir.path().join("eval.toml");
    write(
        &eval_cfg,
        &format!("{base}[controller]\nalpha_g = 1.0\nalpha_o = 10.0\n"),
    );
    let eval_dir = dir.path().join("eval");
    assert_code(
        &run(&["eval", "--config", eval_cfg.to_str().unwrap(), "--out", eval_dir.to_str().unwrap()]),
        0,
    );
    let report: Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(best["success_rate"], report["report"]["success_rate"]);
    assert_eq!(best["mean_extra_time"], report["report"]["mean_extra_time"]);

    // identical grid, permuted entry order: byte-identical ranking
    let grid_a = dir.path().join("ga.toml");
    let grid_b = dir.path().join("gb.toml");
    write(
        &grid_a,
        &format!("{base}[sweep]\nalpha_g = [2.0, 1.0]\nalpha_o = [10.0, 5.0]\n"),
    );
    write(
        &grid_b,
        &format!("{base}[sweep]\nalpha_g = [1.0, 2.0]\nalpha_o = [5.0, 10.0]\n"),
    );
    let (da, db) = (dir.path().join("sa"), dir.path().join("sb"));
    assert_code(&run(&["sweep", "--config", grid_a.to_str().unwrap(), "--out", da.to_str().unwrap()]), 0);
    assert_code(&run(&["sweep", "--config", grid_b.to_str().unwrap(), "--out", db.to_str().unwrap()]), 0);
    assert_eq!(
        fs::read(da.join("sweep.csv")).unwrap(),
        fs::read(db.join("sweep.csv")).unwrap()
    );

    // an empty grid cannot be ranked
    let empty = dir.path().join("empty.toml");
    write(&empty, &format!("{base}[sweep]\nalpha_g = []\nalpha_o = []\n"));
    let out = run(&["sweep", "--config", empty.to_str().unwrap(), "--out", dir.path().join("se").to_str().unwrap()]);
    assert_code(&out, 2);
}

#[test]
fn replay_roundtrip_and_corrupt_input() {
    use winding_nav::controller::{Controller, ControllerConfig};
    use winding_nav::dynamics::DynamicsConfig;
    use winding_nav::environment::{
        export_episode, generate_instance, run_episode, EpisodeLimits, RefreshConfig,
        ScenarioConfig, ScenarioMode, SidecarSeeds,
    };
    use winding_nav::planner::PlanSource;

    let dir = TempDir::new().unwrap();
    let scenario = ScenarioConfig {
        n_agents: 3,
        mode: ScenarioMode::Crossing,
        ..ScenarioConfig::default()
    };
    let mut rng = rand::SeedableRng::seed_from_u64(11);
    let instance = generate_instance(&scenario, &mut rng).unwrap();
    let controller =
        Controller::new(ControllerConfig::default(), DynamicsConfig::holonomic()).unwrap();
    let result = run_episode(
        &instance,
        &controller,
        EpisodeLimits::default(),
        RefreshConfig::default(),
        &PlanSource::t_mpc(),
        99,
    )
    .unwrap();
    let csv = dir.path().join("trajectory.csv");
    let sidecar = dir.path().join("episode.json");
    export_episode(
        &result,
        SidecarSeeds {
            master_seed: 0,
            episode_index: 0,
            episode_seed: 99,
        },
        &csv,
        &sidecar,
    )
    .unwrap();

    let out_dir = dir.path().join("plot");
    let out = run(&[
        "replay",
        "--episode",
        sidecar.to_str().unwrap(),
        "--trajectory",
        csv.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let outcome_word = match result.outcome {
        winding_nav::environment::Outcome::Success { .. } => "success",
        winding_nav::environment::Outcome::Collision { .. } => "collision",
        winding_nav::environment::Outcome::Timeout => "timeout",
    };
    assert!(
        stdout.contains(outcome_word),
        "replay did not echo the stored outcome: {stdout}"
    );
    let winding = fs::read_to_string(out_dir.join("winding.csv")).unwrap();
    assert_eq!(winding.lines().next().unwrap(), "i,j,step,w");
    let paths = fs::read_to_string(out_dir.join("paths.csv")).unwrap();
    assert_eq!(paths.lines().next().unwrap(), "agent,step,px,py");

    // final winding in the series equals the sidecar value
    let stored: Value = serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    let w01 = stored["windings"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["i"] == 0 && e["j"] == 1)
        .unwrap()["w"]
        .as_f64()
        .unwrap();
    let last_w01: f64 = winding
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("0,1,"))
        .last()
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((w01 - last_w01).abs() <= 1e-9);

    // truncated trajectory: a data error
    let text = fs::read_to_string(&csv).unwrap();
    let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
    let broken = dir.path().join("broken.csv");
    write(&broken, &cut);
    let out = run(&[
        "replay",
        "--episode",
        sidecar.to_str().unwrap(),
        "--trajectory",
        broken.to_str().unwrap(),
        "--out",
        dir.path().join("plot2").to_str().unwrap(),
    ]);
    assert_code(&out, 3);
}

#[test]
fn deterministic_planner_flag_accepts_all_forms() {
    let dir = TempDir::new().unwrap();
    for (args, wanted) in [
        (vec!["--deterministic-planner"], true),
        (vec!["--deterministic-planner", "true"], true),
        (vec!["--deterministic-planner", "false"], false),
        (vec![], true),
    ] {
        let out_dir = dir.path().join(format!("r{}", args.len()));
        let mut full = vec![
            "eval",
            "--method",
            "vanilla",
            "--agents",
            "2",
            "--episodes",
            "1",
            "--out",
            out_dir.to_str().unwrap(),
        ];
        full.extend(args.iter());
        assert_code(&run(&full), 0);
        let report: Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap())
                .unwrap();
        assert_eq!(report["deterministic_planner"], Value::Bool(wanted));
    }
}

// ---------------------------------------------------------------------------
// Schema conformance. The validator covers exactly the JSON Schema subset the
// shipped schema uses; schema drift that introduces unsupported keywords
// fails loudly rather than silently passing.

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("docs/report.schema.json");
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check(value: &Value, schema: &Value, root: &Value, at: &str) -> Result<(), String> {
    let obj = schema.as_object().ok_or("schema node must be an object")?;
    const KNOWN: &[&str] = &[
        "$schema", "$id", "title", "definitions", "type", "const", "enum", "required",
        "additionalProperties", "properties", "items", "$ref", "oneOf", "minimum", "maximum",
        "minItems", "maxItems",
    ];
    if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(format!("unsupported schema keyword {k}"));
    }

    if let Some(r) = obj.get("$ref") {
        let name = r
            .as_str()
            .and_then(|s| s.strip_prefix("#/definitions/"))
            .ok_or("only #/definitions refs supported")?;
        let target = &root["definitions"][name];
        return check(value, target, root, at);
    }
    if let Some(options) = obj.get("oneOf") {
        let hits = options
            .as_array()
            .unwrap()
            .iter()
            .filter(|s| check(value, s, root, at).is_ok())
            .count();
        return if hits == 1 {
            Ok(())
        } else {
            Err(format!("{at}: {hits} oneOf branches matched"))
        };
    }
    if let Some(c) = obj.get("const") {
        if value != c {
            return Err(format!("{at}: expected const {c}, got {value}"));
        }
    }
    if let Some(e) = obj.get("enum") {
        if !e.as_array().unwrap().contains(value) {
            return Err(format!("{at}: {value} not in enum"));
        }
    }
    if let Some(t) = obj.get("type") {
        let names: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().map(|v| v.as_str().unwrap()).collect(),
            _ => return Err("bad type keyword".into()),
        };
        let ok = names.iter().any(|n| match *n {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_i64() || value.is_u64(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            other => panic!("unknown type {other}"),
        });
        if !ok {
            return Err(format!("{at}: type mismatch, wanted {names:?}, got {value}"));
        }
    }
    if let (Some(min), Some(x)) = (obj.get("minimum").and_then(Value::as_f64), value.as_f64()) {
        if x < min {
            return Err(format!("{at}: {x} below minimum {min}"));
        }
    }
    if let (Some(max), Some(x)) = (obj.get("maximum").and_then(Value::as_f64), value.as_f64()) {
        if x > max {
            return Err(format!("{at}: {x} above maximum {max}"));
        }
    }
    if let Some(req) = obj.get("required") {
        let map = value.as_object().ok_or(format!("{at}: not an object"))?;
        for key in req.as_array().unwrap() {
            if !map.contains_key(key.as_str().unwrap()) {
                return Err(format!("{at}: missing required key {key}"));
            }
        }
    }
    if let Some(props) = obj.get("properties") {
        let map = value.as_object().ok_or(format!("{at}: not an object"))?;
        let closed = obj.get("additionalProperties") == Some(&Value::Bool(false));
        for (key, val) in map {
            match props.get(key) {
                Some(sub) => check(val, sub, root, &format!("{at}/{key}"))?,
                None if closed => return Err(format!("{at}: unexpected key {key}")),
                None => {}
            }
        }
    }
    if let Some(items) = obj.get("items") {
        let arr = value.as_array().ok_or(format!("{at}: not an array"))?;
        if let Some(min) = obj.get("minItems").and_then(Value::as_u64) {
            if (arr.len() as u64) < min {
                return Err(format!("{at}: fewer than {min} items"));
            }
        }
        if let Some(max) = obj.get("maxItems").and_then(Value::as_u64) {
            if (arr.len() as u64) > max {
                return Err(format!("{at}: more than {max} items"));
            }
        }
        for (i, v) in arr.iter().enumerate() {
            check(v, items, root, &format!("{at}[{i}]"))?;
        }
    }
    Ok(())
}

#[test]
fn reports_validate_against_the_shipped_schema() {
    let dir = TempDir::new().unwrap();
    let schema = schema();
    // one report per outcome mix: crossing (timeouts likely) and a trivial run
    for (mode, agents, episodes, seed) in
        [("crossing", "4", "3", "7"), ("random", "2", "2", "1")]
    {
        let out_dir = dir.path().join(format!("{mode}{seed}"));
        let out = run(&[
            "eval", "--mode", mode, "--agents", agents, "--method", "vanilla", "--episodes",
            episodes, "--seed", seed, "--out", out_dir.to_str().unwrap(),
        ]);
        assert_code(&out, 0);
        let report: Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap())
                .unwrap();
        check(&report, &schema, &schema, "report").unwrap();
    }

    // the validator actually rejects: flip format_version and drop a field
    let out_dir = dir.path().join("crossing7");
    let mut report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    report["format_version"] = Value::from(2);
    assert!(check(&report, &schema, &schema, "report").is_err());
    report["format_version"] = Value::from(1);
    report.as_object_mut().unwrap().remove("seed");
    assert!(check(&report, &schema, &schema, "report").is_err());
}
