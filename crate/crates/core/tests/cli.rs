mod common;

use std::fs;

use common::{path_str, run_cli};
use in2test::edb::ExperienceDb;
use in2test::PrioritizationPlan;

const DEFECTS: &str = "case_study/defects.csv";
const METRICS: &str = "case_study/metrics.csv";
const RULES: &str = "case_study/rules.json";

fn data_args() -> Vec<String> {
    vec![
        "--defects".into(),
        path_str(DEFECTS),
        "--metrics".into(),
        path_str(METRICS),
    ]
}

fn run(args: Vec<String>) -> (i32, String, String) {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run_cli(&refs)
}

fn with(cmd: &[&str], extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = cmd.iter().map(|s| s.to_string()).collect();
    v.extend(data_args());
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[test]
fn monitor_passes_on_case_study() {
    let cfg = path_str("case_study/monitor.json");
    let (code, out, _) = run(with(&["monitor"], &["--monitor-config", &cfg]));
    assert_eq!(code, 0);
    assert!(out.contains("\"verdict\": \"pass\""));
}

#[test]
fn monitor_fails_on_empty_profile() {
    let dir = tempfile::tempdir().unwrap();
    let defects = dir.path().join("defects.csv");
    fs::write(&defects, "part_id,phase,defect_type,severity\n").unwrap();
    let cfg = dir.path().join("monitor.json");
    fs::write(&cfg, r#"{"min_total_inspection_defects": 1}"#).unwrap();
    let (code, out, _) = run_cli(&[
        "monitor",
        "--defects",
        defects.to_str().unwrap(),
        "--monitor-config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(out.contains("\"fail\""));
}

#[test]
fn monitor_warning_still_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("monitor.json");
    fs::write(
        &cfg,
        r#"{"reading_rate_bounds": [100, 400], "inspection": {"inspected_loc": 2411, "inspection_hours": 5}}"#,
    )
    .unwrap();
    let (code, out, err) = run(with(
        &["monitor"],
        &["--monitor-config", cfg.to_str().unwrap()],
    ));
    assert_eq!(code, 0);
    assert!(out.contains("482.2"));
    assert!(err.contains("warning"));
}

#[test]
fn missing_metrics_file_is_input_error() {
    let (code, _, err) = run_cli(&[
        "monitor",
        "--defects",
        &path_str(DEFECTS),
        "--metrics",
        "/no/such/metrics.csv",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("/no/such/metrics.csv"));
}

#[test]
fn usage_error_exits_one() {
    let (code, _, _) = run_cli(&["prioritize", "--strategy", "sideways"]);
    assert_eq!(code, 1);
    let (code, out, _) = run_cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("evaluate"));
}

#[test]
fn prioritize_with_top_only_budget() {
    let (code, out, _) = run(with(
        &["prioritize"],
        &[
            "--rules",
            &path_str(RULES),
            "--rule",
            "A2.01",
            "--budget",
            "100",
            "--strategy",
            "top",
        ],
    ));
    assert_eq!(code, 0);
    let plan: PrioritizationPlan = serde_json::from_str(&out).unwrap();
    assert_eq!(plan.prioritized_parts, vec!["III"]);
    let alloc = plan.allocations.unwrap();
    assert_eq!(alloc["III"], 100.0);
    assert_eq!(alloc.values().sum::<f64>(), 100.0);
}

#[test]
fn prioritize_orders_by_id() {
    let (code, out, _) = run(with(
        &["prioritize"],
        &[
            "--rules",
            &path_str(RULES),
            "--rule",
            "A1.02",
            "--ordering",
            "by_id",
        ],
    ));
    assert_eq!(code, 0);
    let plan: PrioritizationPlan = serde_json::from_str(&out).unwrap();
    assert_eq!(plan.prioritized_parts, vec!["I", "III", "IV"]);
}

#[test]
fn prioritize_rejects_syntax_error_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.json");
    fs::write(
        &rules,
        r#"[{"id":"X","assumption_id":"A","rule":"focus parts where loc >> 3"}]"#,
    )
    .unwrap();
    let (code, _, err) = run(with(&["prioritize"], &["--rules", rules.to_str().unwrap()]));
    assert_eq!(code, 1);
    assert!(err.contains("position 23"), "{err}");
}

#[test]
fn prioritize_stops_when_monitor_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("monitor.json");
    fs::write(&cfg, r#"{"min_total_inspection_defects": 1000}"#).unwrap();
    let args = with(
        &["prioritize"],
        &[
            "--rules",
            &path_str(RULES),
            "--monitor-config",
            cfg.to_str().unwrap(),
        ],
    );
    let (code, out, _) = run(args.clone());
    assert_eq!(code, 2);
    assert!(out.is_empty());

    let mut skip = args;
    skip.push("--skip-monitor".into());
    assert_eq!(run(skip).0, 0);
}

#[test]
fn prioritize_two_stage() {
    let args = vec![
        "prioritize".to_string(),
        "--defects".into(),
        path_str("typed/defects.csv"),
        "--metrics".into(),
        path_str("typed/metrics.csv"),
        "--rules".into(),
        path_str(RULES),
        "--rule".into(),
        "A2.01".into(),
        "--two-stage".into(),
        "--top-k".into(),
        "2".into(),
    ];
    let (code, out, _) = run(args);
    assert_eq!(code, 0);
    let plan: PrioritizationPlan = serde_json::from_str(&out).unwrap();
    assert_eq!(plan.prioritized_parts, vec!["III"]);
    let expected = serde_json::json!({"per_part": {"III": ["logic", "interface"]}});
    assert_eq!(
        serde_json::to_value(plan.prioritized_types).unwrap(),
        expected
    );
}

#[test]
fn prioritize_picks_rule_by_context() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.json");
    fs::write(
        &rules,
        r#"[{"id":"LOW","assumption_id":"A","rule":"focus parts where defect_content > 25","context":{"inspector_experience":"low"}},
            {"id":"HIGH","assumption_id":"A","rule":"focus parts where defect_content > 39","context":{"inspector_experience":"high"}}]"#,
    )
    .unwrap();
    let ctx = dir.path().join("context.json");
    fs::write(&ctx, r#"{"inspector_experience":"high","team_size":"4"}"#).unwrap();
    let (code, out, _) = run(with(
        &["prioritize"],
        &[
            "--rules",
            rules.to_str().unwrap(),
            "--context",
            ctx.to_str().unwrap(),
        ],
    ));
    assert_eq!(code, 0);
    let plan: PrioritizationPlan = serde_json::from_str(&out).unwrap();
    assert_eq!(plan.rule_id, "HIGH");
    assert_eq!(plan.prioritized_parts, vec!["II"]);
}

#[test]
fn evaluate_is_deterministic_and_writes_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.csv");
    let (c1, out1, _) = run(with(&["evaluate"], &["--rules", &path_str(RULES)]));
    let (c2, out2, _) = run(with(
        &["evaluate"],
        &[
            "--rules",
            &path_str(RULES),
            "--out",
            out_path.to_str().unwrap(),
        ],
    ));
    assert_eq!((c1, c2), (0, 0));
    assert!(out2.is_empty());
    assert_eq!(fs::read_to_string(out_path).unwrap(), out1);
}

#[test]
fn evaluate_weak_rule() {
    let (code, out, _) = run(with(
        &["evaluate"],
        &["--rules", &path_str(RULES), "--tolerance", "6"],
    ));
    assert_eq!(code, 0);
    assert!(out.contains("A3.01,I;IV,II,0.00,0.00,0.00"));
    let (_, out, _) = run(with(
        &["evaluate"],
        &["--rules", &path_str(RULES), "--tolerance", "5"],
    ));
    assert!(out.contains("A3.01,I;IV,IV,"));
}

#[test]
fn evaluate_empty_rules_gives_header() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.json");
    fs::write(&rules, "[]").unwrap();
    let (code, out, _) = run(with(&["evaluate"], &["--rules", rules.to_str().unwrap()]));
    assert_eq!(code, 0);
    assert_eq!(
        out,
        "rule_id,selection,category,precision,recall,f_measure\n"
    );
}

#[test]
fn evaluate_isolates_unevaluable_rule() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.json");
    fs::write(
        &rules,
        r#"[{"id":"H","assumption_id":"A","rule":"focus parts where history_defects(last=2) > 20"},
            {"id":"A2.01","assumption_id":"A2","rule":"focus parts where defect_density > 0.05 & loc > 500"}]"#,
    )
    .unwrap();
    let (code, out, err) = run(with(&["evaluate"], &["--rules", rules.to_str().unwrap()]));
    assert_eq!(code, 0);
    assert!(out.contains("H,,unevaluable,,,\n"));
    assert!(out.contains("A2.01,III,I,1.00,1.00,1.00\n"));
    assert!(err.contains("history_defects"));
}

#[test]
fn evaluate_with_history_metric() {
    let dir = tempfile::tempdir().unwrap();
    let history = dir.path().join("history.csv");
    let mut text = String::from("part_id,release_id,defect_count\n");
    for (part, counts) in [
        ("I", [3, 4]),
        ("II", [10, 15]),
        ("III", [12, 9]),
        ("IV", [1, 0]),
    ] {
        for (release, n) in ["r1", "r2"].iter().zip(counts) {
            text.push_str(&format!("{part},{release},{n}\n"));
        }
    }
    fs::write(&history, text).unwrap();
    let rules = dir.path().join("rules.json");
    fs::write(
        &rules,
        r#"[{"id":"H","assumption_id":"A","rule":"focus parts where defect_content > 12 & history_defects(last=2) > 20"}]"#,
    )
    .unwrap();
    let (code, out, _) = run(with(
        &["evaluate"],
        &[
            "--rules",
            rules.to_str().unwrap(),
            "--history",
            history.to_str().unwrap(),
        ],
    ));
    assert_eq!(code, 0);
    assert!(out.contains("H,II;III,II,0.50,1.00,0.67"), "{out}");
}

#[test]
fn redirect_command() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.json");
    let (code, _, _) = run(with(
        &["prioritize"],
        &[
            "--rules",
            &path_str(RULES),
            "--rule",
            "A1.01",
            "--out",
            plan_path.to_str().unwrap(),
        ],
    ));
    assert_eq!(code, 0);
    let interim = dir.path().join("interim.csv");
    fs::write(
        &interim,
        "part_id,phase,defect_type,severity\nIII,test,,\nI,test,,\n",
    )
    .unwrap();
    let (code, out, _) = run(with(
        &["redirect"],
        &[
            "--rules",
            &path_str(RULES),
            "--plan",
            plan_path.to_str().unwrap(),
            "--interim",
            interim.to_str().unwrap(),
        ],
    ));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["verdict"], "redirect");
    assert_eq!(v["replacement_rule_id"], "A1.02");
}

fn seed_db(dir: &std::path::Path) -> std::path::PathBuf {
    let db = dir.join("edb.json");
    fs::write(
        &db,
        r#"[
  {"element_id": "E1", "rule": "focus parts where defect_density > 0.05 & loc > 500",
   "assumption": {"id": "A2", "statement": "dense large classes hide test defects", "derivation": "empirical_observed"},
   "context": {"inspector_experience": "low"}, "significance": 3, "retired": false, "history": [], "owner": "qa"},
  {"element_id": "E2", "rule": "focus parts where defect_content > 25",
   "assumption": {"id": "A1", "statement": "defects cluster", "derivation": "analytic"},
   "context": {}, "significance": 1, "retired": false, "history": []},
  {"element_id": "E3", "rule": "focus parts where loc > 1000",
   "assumption": {"id": "A4", "statement": "big classes", "derivation": "empirical_adapted"},
   "context": {"inspector_experience": "high"}, "significance": 8, "retired": false, "history": []}
]"#,
    )
    .unwrap();
    db
}

#[test]
fn edb_record_correct_increments_file() {
    let dir = tempfile::tempdir().unwrap();
    let db = seed_db(dir.path());
    let (code, _, err) = run_cli(&[
        "edb",
        "record",
        "--db",
        db.to_str().unwrap(),
        "--element",
        "E1",
        "--outcome",
        "correct",
        "--project",
        "P7",
        "--category",
        "I",
        "--timestamp",
        "2024-03-01T10:00:00Z",
    ]);
    assert_eq!(code, 0, "{err}");
    let stored = ExperienceDb::from_json(&fs::read_to_string(&db).unwrap()).unwrap();
    let e = stored.get("E1").unwrap();
    assert_eq!(e.significance, 4);
    assert_eq!(e.extra["owner"], "qa");
    let text = fs::read_to_string(&db).unwrap();
    assert!(text.contains("\"timestamp\": \"2024-03-01T10:00:00Z\""));
}

#[test]
fn edb_record_incorrect_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let db = seed_db(dir.path());
    let db_s = db.to_str().unwrap();

    let (code, _, err) = run_cli(&[
        "edb",
        "record",
        "--db",
        db_s,
        "--element",
        "E2",
        "--outcome",
        "incorrect",
        "--project",
        "P",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("replacement"));

    let repl = dir.path().join("repl.json");
    fs::write(
        &repl,
        r#"{"element_id":"E2b","rule":"focus parts where defect_content > 32","assumption":{"id":"A1b","statement":"80% of max","derivation":"empirical_adapted"}}"#,
    )
    .unwrap();
    let (code, _, err) = run_cli(&[
        "edb",
        "record",
        "--db",
        db_s,
        "--element",
        "E2",
        "--outcome",
        "incorrect",
        "--project",
        "P",
        "--replacement",
        repl.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");

    let ctx = dir.path().join("ctx.json");
    fs::write(&ctx, r#"{"inspector_experience": "high"}"#).unwrap();
    let (code, _, err) = run_cli(&[
        "edb",
        "record",
        "--db",
        db_s,
        "--element",
        "E1",
        "--outcome",
        "context_mismatch",
        "--project",
        "P",
        "--context",
        ctx.to_str().unwrap(),
        "--succeeded",
    ]);
    assert_eq!(code, 0, "{err}");

    let stored = ExperienceDb::from_json(&fs::read_to_string(&db).unwrap()).unwrap();
    assert!(stored.get("E2").unwrap().retired);
    assert_eq!(stored.get("E2b").unwrap().significance, 1);
    assert_eq!(stored.get("E1").unwrap().significance, 3);
    let created = stored.elements().last().unwrap();
    assert_eq!(created.context.factors["inspector_experience"], "high");
    assert_eq!(created.significance, 1);
}

#[test]
fn edb_unknown_element_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let db = seed_db(dir.path());
    let before = fs::read_to_string(&db).unwrap();
    let (code, _, err) = run_cli(&[
        "edb",
        "record",
        "--db",
        db.to_str().unwrap(),
        "--element",
        "E404",
        "--outcome",
        "correct",
        "--project",
        "P",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("E404"));
    assert_eq!(fs::read_to_string(&db).unwrap(), before);
}

#[test]
fn edb_list_and_suggest() {
    let dir = tempfile::tempdir().unwrap();
    let db = seed_db(dir.path());
    let (code, out, _) = run_cli(&["edb", "list", "--db", db.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(ExperienceDb::from_json(&out).unwrap().elements().len(), 3);

    let ctx = dir.path().join("ctx.json");
    fs::write(&ctx, r#"{"inspector_experience": "low", "team_size": "5"}"#).unwrap();
    let (code, out, _) = run_cli(&[
        "edb",
        "suggest",
        "--db",
        db.to_str().unwrap(),
        "--context",
        ctx.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let ids: Vec<_> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["element_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, vec!["E1", "E2"]);
}

#[test]
fn inputs_are_never_modified() {
    let before: Vec<_> = [DEFECTS, METRICS, RULES]
        .iter()
        .map(|p| fs::read(common::fixture(p)).unwrap())
        .collect();
    run(with(&["evaluate"], &["--rules", &path_str(RULES)]));
    run(with(
        &["prioritize"],
        &["--rules", &path_str(RULES), "--budget", "10"],
    ));
    let after: Vec<_> = [DEFECTS, METRICS, RULES]
        .iter()
        .map(|p| fs::read(common::fixture(p)).unwrap())
        .collect();
    assert_eq!(before, after);
}
