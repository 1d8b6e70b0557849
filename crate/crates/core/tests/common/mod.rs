#![allow(dead_code)]

use std::path::PathBuf;

use in2test::io;
use in2test::model::{compute_part_stats, StatsTable};
use in2test::Scalar;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

pub fn path_str(rel: &str) -> String {
    fixture(rel).to_string_lossy().into_owned()
}

/// The four code classes of the case study, with inspection and test defects.
pub fn case_study<T: Scalar>() -> StatsTable<T> {
    let defects = io::load_defects(&fixture("case_study/defects.csv")).unwrap();
    let metrics = io::load_metrics(&fixture("case_study/metrics.csv")).unwrap();
    compute_part_stats(&defects, &metrics, &[]).unwrap()
}

pub fn case_study_rules<T: Scalar>() -> Vec<in2test::dsl::SelectionRule<T>> {
    io::load_rules(&fixture("case_study/rules.json"))
        .unwrap()
        .into_iter()
        .map(|(r, _)| r)
        .collect()
}

pub fn rule<T: Scalar>(id: &str) -> in2test::dsl::SelectionRule<T> {
    case_study_rules().into_iter().find(|r| r.id == id).unwrap()
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("in2test").chain(args.iter().copied());
    let code = in2test::cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

pub fn set(ids: &[&str]) -> std::collections::BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}
