//! Environment overrides live in their own test binary because they mutate
//! process-wide state.

use budget_slate::config::load_config_with;
use serde_json::{Map, Value};

#[test]
fn env_vars_sit_between_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"num_users": 40, "epsilon": 0.3}"#).unwrap();
    std::env::set_var("BUDGET_SLATE_NUM_USERS", "25");
    std::env::set_var("BUDGET_SLATE_SLATE_SIZE", "12");
    let mut flags = Map::new();
    flags.insert("slate_size".into(), Value::from(7));
    let cfg = load_config_with(Some(&path), &flags, true).unwrap();
    assert_eq!(cfg.num_users, 25);
    assert_eq!(cfg.slate_size, 7);
    assert_eq!(cfg.epsilon, 0.3);
    let no_env = load_config_with(Some(&path), &Map::new(), false).unwrap();
    assert_eq!(no_env.num_users, 40);
    assert_eq!(no_env.slate_size, 30);
    std::env::remove_var("BUDGET_SLATE_NUM_USERS");
    std::env::remove_var("BUDGET_SLATE_SLATE_SIZE");
}
