#![allow(dead_code)]

use std::path::Path;

use budget_slate::cli::run_command_with;

/// A grid small enough to sweep in a second or two.
pub const TINY: &str = r#"{
  "num_items": 300,
  "num_users": 10,
  "slate_size": 5,
  "iterations": 2,
  "eval_episodes": 20,
  "diagnostic_episodes": 5,
  "algorithms": ["sarsa", "qlearning"],
  "discount_factor": [0.2, 0.8],
  "include_bandit": false,
  "user_budget": [100, 300],
  "seeds": [0, 1, 2, 3, 4],
  "charge_mode": "charge_on_examination"
}"#;

pub fn write_tiny(dir: &Path) -> String {
    let path = dir.join("tiny.json");
    std::fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("budget-slate").chain(args.iter().copied());
    let code = run_command_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
