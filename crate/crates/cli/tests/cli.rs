use std::path::Path;

use avoidance_cli::commands::execute;
use avoidance_cli::config::{parse_config, Command, Format, RunConfig, Source, UsageError, Value};
use avoidance_cli::report::{render, Report};
use avoidance_cli::{run, EXIT_FAILURE, EXIT_USAGE};

fn argv(args: &str) -> Vec<String> {
    std::iter::once("avoidance".to_string())
        .chain(args.split_whitespace().map(String::from))
        .collect()
}

fn run_to_file(args: &str, path: &Path) -> i32 {
    run(argv(&format!("{args} --output {}", path.display())))
}

fn read_report(path: &Path) -> Report {
    Report::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn drive_flags_parse() {
    let c = parse_config(argv("drive --radii 8,16,64 --seed 7")).unwrap();
    assert_eq!(c.command, Command::Drive);
    assert_eq!(c.seed, 7);
    assert_eq!(c.params["radii"], Value::FloatList(vec![8.0, 16.0, 64.0]));
    assert_eq!(c.provenance["radii"], Source::Flag);
    assert_eq!(c.provenance["paths"], Source::Default);
}

#[test]
fn annulus_rejects_a_above_one() {
    match parse_config(argv("annulus --a 1.5 --A 2")) {
        Err(UsageError::Invalid { key, .. }) => assert_eq!(key, "a"),
        other => panic!("expected a usage error, got {other:?}"),
    }
    assert_eq!(run(argv("annulus --a 1.5 --A 2")), EXIT_USAGE);
}

#[test]
fn bad_schedules_and_points_are_usage_errors() {
    for args in [
        "drive --radii 8,12",
        "drive --second_start 0,0,0,0",
        "annulus --a abc",
        "escape --x 1,2,3",
        "couple-step --mode exact --horizon 12",
        "verify-all --checks 11",
        "green --replicas 0",
    ] {
        assert!(matches!(parse_config(argv(args)), Err(UsageError::Invalid { .. })), "{args}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.conf");
    std::fs::write(&file, "# annulus settings\nn = 50\na = 0.6\nseed = 3\n").unwrap();
    let c = parse_config(argv(&format!("annulus --config {} --a 0.7", file.display()))).unwrap();
    assert_eq!(c.float("n"), 50.0);
    assert_eq!(c.float("a"), 0.7);
    assert_eq!(c.float("A"), 2.0);
    assert_eq!(c.seed, 3);
    assert_eq!(c.provenance["n"], Source::File);
    assert_eq!(c.provenance["a"], Source::Flag);
    assert_eq!(c.provenance["A"], Source::Default);
    assert_eq!(c.provenance["seed"], Source::File);

    let out = dir.path().join("report.json");
    let code = run_to_file(&format!("annulus --config {} --a 0.7 --replicas 50", file.display()), &out);
    assert_eq!(code, 0);
    let report = read_report(&out);
    assert_eq!(report.provenance["a"], Source::Flag);
    assert_eq!(report.provenance["n"], Source::File);
}

#[test]
fn unknown_keys_are_rejected() {
    match parse_config(argv("green --y 1,0,0,0")) {
        Err(UsageError::Clap(_)) => {}
        other => panic!("expected a usage error, got {other:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.conf");
    std::fs::write(&file, "radius = 4\n").unwrap();
    match parse_config(argv(&format!("green --config {}", file.display()))) {
        Err(UsageError::UnknownKey { key, command }) => {
            assert_eq!(key, "radius");
            assert_eq!(command, "green");
        }
        other => panic!("expected an unknown key, got {other:?}"),
    }
}

#[test]
fn json_reports_round_trip() {
    let c = RunConfig::from_pairs(Command::ExitTime, &[("n", "6"), ("replicas", "200"), ("seed", "11")]).unwrap();
    let outcome = execute(&c).unwrap();
    let report = Report::new(&c, outcome.result.clone(), 0.25);
    let back = Report::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.result, outcome.result);
    assert_eq!(back.schema, 1);
    assert!(back.version.starts_with('v'));
}

#[test]
fn hittability_csv_has_the_sweep_header() {
    let c = RunConfig::from_pairs(
        Command::Hittability,
        &[("n", "4"), ("m", "16"), ("outer", "8"), ("inner", "8"), ("format", "csv")],
    )
    .unwrap();
    assert_eq!(c.format, Format::Csv);
    let outcome = execute(&c).unwrap();
    let report = Report::new(&c, outcome.result, 0.0);
    let text = render(&report, c.format, outcome.table.as_ref());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ε,δ,stderr,replicas"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn commands_without_a_table_flatten_to_key_value_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("green.csv");
    assert_eq!(run_to_file("green --x 2,0,0,0 --replicas 100 --format csv", &out), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.contains("result.estimate.value,"));
    assert!(text.contains("params.x,"));
}

fn record(report: &Report, id: u64) -> &serde_json::Value {
    report.result["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["id"] == id)
        .unwrap()
}

#[test]
fn verify_records_match_individual_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let all = dir.path().join("verify.json");
    let code = run_to_file("verify-all --scale quick --checks 1,4,5,7 --seed 5", &all);
    let verify = read_report(&all);
    assert_eq!(verify.result["checks"].as_array().unwrap().len(), 4);
    let passed = verify.result["passed"].as_bool().unwrap();
    assert_eq!(code, if passed { 0 } else { EXIT_FAILURE });

    let annulus = dir.path().join("annulus.json");
    assert_eq!(run_to_file("annulus --replicas 2000 --seed 5", &annulus), 0);
    assert_eq!(record(&verify, 1)["details"]["estimate"], read_report(&annulus).result["estimate"]);

    let exit = dir.path().join("exit.json");
    assert_eq!(run_to_file("exit-time --n 20 --replicas 2000 --seed 5", &exit), 0);
    assert_eq!(record(&verify, 4)["details"]["means"][1], read_report(&exit).result["mean"]);

    let check = record(&verify, 5);
    let k = check["details"]["K"].as_f64().unwrap();
    let invsq = dir.path().join("invsq.json");
    assert_eq!(run_to_file(&format!("invsq --n 1000 --K {k:?} --replicas 1000 --seed 5"), &invsq), 0);
    assert_eq!(check["details"]["report"], read_report(&invsq).result);

    assert_eq!(record(&verify, 7)["passed"], true);
}

#[test]
fn failing_checks_give_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    // At the quick budget the annulus estimate is too noisy for its stderr bound.
    assert_eq!(run_to_file("verify-all --scale quick --checks 1", &out), EXIT_FAILURE);
    assert_eq!(read_report(&out).result["passed"], false);
    assert_eq!(run_to_file("verify-all --scale quick --checks 7", &out), 0);
}

#[test]
fn identical_configs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        "green --x 2,0,0,0 --replicas 500 --seed 9",
        "couple-step --paths 16 --horizon 96 --seed 9",
        "drive --radii 8,16 --paths 16 --replicas 2 --seed 9",
    ] {
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        assert_eq!(run_to_file(args, &a), 0);
        assert_eq!(run_to_file(args, &b), 0);
        assert_eq!(read_report(&a).canonical_json(), read_report(&b).canonical_json(), "{args}");
    }
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    run_to_file("green --x 2,0,0,0 --replicas 500 --seed 9", &a);
    run_to_file("green --x 2,0,0,0 --replicas 500 --seed 10", &b);
    assert_ne!(read_report(&a).result, read_report(&b).result);
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(run(argv("--version")), 0);
    assert_eq!(run(argv("annulus --help")), 0);
    assert_eq!(run(argv("no-such-command")), EXIT_USAGE);
}

#[test]
fn worker_count_does_not_change_the_binary_output() {
    let bin = env!("CARGO_BIN_EXE_avoidance");
    let report = |threads: &str| {
        let out = std::process::Command::new(bin)
            .args(["moments", "--n", "4", "--m", "16", "--replicas", "60", "--seed", "4"])
            .env("AVOIDANCE_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        Report::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap().canonical_json()
    };
    assert_eq!(report("1"), report("8"));
    let bad = std::process::Command::new(bin)
        .args(["moments"])
        .env("AVOIDANCE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}
