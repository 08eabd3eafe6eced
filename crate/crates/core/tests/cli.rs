use std::path::Path;
use std::process::{Command, Output};

use crowdroute::instance::{generate_instance, load_instance, Profile};
use crowdroute::plan::{total_shipping_cost, PlanState};

fn crowdroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdroute"))
        .args(args)
        .env("CROWDROUTE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

const TINY: &[&str] = &[
    "--profile", "desk", "--requests", "6", "--crowdsourcees", "3", "--episodes", "4", "--steps-per-episode", "20",
    "--max-steps", "80", "--hidden", "8,8", "--minibatch", "8", "--replay-capacity", "50",
];

fn train_tiny(dir: &Path, extra: &[&str]) -> (Output, String) {
    let model = path(dir, "model.json");
    let mut args = vec!["train", "--out", model.as_str()];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    (crowdroute(&args), model)
}

#[test]
fn generate_round_trips_through_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "inst.json");
    let out = crowdroute(&["generate", "--requests", "7", "--crowdsourcees", "3", "--seed", "9", "--out", &file]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let loaded = load_instance(&file).unwrap();
    assert_eq!(loaded, generate_instance(7, 3, 9, &Profile::Medium).unwrap());
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(code(&crowdroute(&["frobnicate"])), 2);
    assert_eq!(code(&crowdroute(&["solve"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "inst.json");
    assert_eq!(code(&crowdroute(&["generate", "--requests", "0", "--out", &file])), 2);
}

#[test]
fn bad_files_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let junk = path(dir.path(), "junk.json");
    std::fs::write(&junk, "{\"format\": \"something-else\"}").unwrap();
    assert_eq!(code(&crowdroute(&["solve", "--model", &junk])), 3);
    assert_eq!(code(&crowdroute(&["solve", "--model", &path(dir.path(), "missing.json")])), 3);
}

#[test]
fn divergence_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = train_tiny(dir.path(), &["--learning-rate", "1e300", "--reward-scale", "1e300"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_reports_the_cost_of_the_dumped_plan() {
    let dir = tempfile::tempdir().unwrap();
    let (out, model) = train_tiny(dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(format!("{model}.log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "step,episode,avg_loss,avg_q,accum_reward,cum_penalty");

    let inst = path(dir.path(), "inst.json");
    assert_eq!(code(&crowdroute(&["generate", "--requests", "6", "--crowdsourcees", "3", "--seed", "4", "--out", &inst])), 0);
    let dump = path(dir.path(), "plan.txt");
    let out = crowdroute(&["solve", "--model", &model, "--instance", &inst, "--dump-plan", &dump, "--trace-actions"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let printed: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("tsc "))
        .expect("tsc line")
        .parse()
        .unwrap();
    let instance = load_instance(&inst).unwrap();
    let plan = PlanState::from_dump(&instance, &std::fs::read_to_string(&dump).unwrap()).unwrap();
    assert!(plan.is_feasible());
    assert!((total_shipping_cost(&instance, &plan) - printed).abs() < 1e-6);
    assert!(text.lines().any(|l| l.starts_with("action 1 ")));
}

#[test]
fn benchmark_csv_has_header_and_six_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "bench.csv");
    let out = crowdroute(&[
        "benchmark", "--methods", "simple,sa", "--requests", "6", "--crowdsourcees", "3", "--instances", "3", "--out", &csv,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "instance_seed,method,tsc,seconds,iterations");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let tsc = row.split(',').nth(2).unwrap();
        let digits = tsc.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        assert!(digits.trim_start_matches('0').len() <= 6, "{tsc}");
        assert!(tsc.parse::<f64>().unwrap() > 0.0);
    }
    assert!(stdout(&out).starts_with("method,wins,mean_tsc,mean_gap,mean_seconds"));
}
