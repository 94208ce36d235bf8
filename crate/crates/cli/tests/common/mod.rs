#![allow(dead_code)]

#[path = "../../../core/tests/support/mod.rs"]
pub mod support;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use support::{oracle_parse_text, oracle_score, oracle_upsample, OracleParams};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn trajkit<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_trajkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn xy(v: &Value) -> Vec<[f64; 2]> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|p| [p[0].as_f64().unwrap(), p[1].as_f64().unwrap()])
        .collect()
}

/// `(category, score)` for every prediction, computed with the naive scorer
/// straight from the JSON files.
pub fn oracle_pairs(scenarios: &Path, predictions: &Path, p: &OracleParams) -> Vec<(String, f64)> {
    let mut frames: HashMap<String, (String, Vec<(Vec<[f64; 2]>, f64)>)> = HashMap::new();
    for line in fs::read_to_string(scenarios).unwrap().lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).unwrap();
        let raters = v["rated"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| (xy(&r["traj_xy"]), r["score"].as_f64().unwrap()))
            .collect();
        frames.insert(
            v["scenario_id"].as_str().unwrap().to_string(),
            (v["category"].as_str().unwrap().to_string(), raters),
        );
    }
    fs::read_to_string(predictions)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let v: Value = serde_json::from_str(line).unwrap();
            let (cat, raters) = &frames[v["scenario_id"].as_str().unwrap()];
            let knots = match v.get("raw_text") {
                Some(t) => oracle_parse_text(t.as_str().unwrap()),
                None => {
                    let w = xy(&v["waypoints_1hz"]);
                    Some(std::array::from_fn(|i| w[i]))
                }
            };
            let score = match knots {
                Some(k) => oracle_score(&oracle_upsample(&k, true), raters, p),
                None => 4.0,
            };
            (cat.clone(), score)
        })
        .collect()
}

pub fn fixture_pairs() -> Vec<(String, f64)> {
    oracle_pairs(
        &fixture("scenarios.jsonl"),
        &fixture("predictions.jsonl"),
        &OracleParams::default(),
    )
}
