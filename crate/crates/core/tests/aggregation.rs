//! The results CSV must agree with the raw episode dumps.

mod common;

use std::fs::File;
use std::io::BufReader;

use budget_slate::config::load_config_with;
use budget_slate::env::read_episodes_jsonl;
use budget_slate::experiment::{episode_dump_name, run_sweep, SweepConfig, SweepOptions, SweepResult};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

#[test]
fn csv_metrics_match_episode_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = common::write_tiny(dir.path());
    let run = load_config_with(Some(cfg_path.as_ref()), &Default::default(), false).unwrap();
    let sweep = SweepConfig::from_run(&run);
    let dumps = dir.path().join("dumps");
    let result = run_sweep(
        &sweep,
        None,
        &SweepOptions {
            workers: 2,
            dump_dir: Some(dumps.clone()),
        },
    )
    .unwrap();
    let csv = dir.path().join("r.csv");
    result.write_csv(&csv).unwrap();
    let reread = SweepResult::read_csv(&csv).unwrap();
    assert_eq!(reread.rows.len(), sweep.cells().len());

    for (cell, row) in sweep.cells().iter().zip(&reread.rows) {
        assert_eq!((row.algorithm, row.seed), (cell.algorithm, cell.seed));
        let file = File::open(dumps.join(episode_dump_name(cell))).unwrap();
        let logs = read_episodes_jsonl(BufReader::new(file)).unwrap();
        assert_eq!(logs.len(), row.episodes);
        let n = logs.len() as f64;
        let clicks: f64 = logs
            .iter()
            .map(|l| l.rewards.iter().map(|&r| r as f64).sum::<f64>())
            .sum();
        let abandoned = logs.iter().filter(|l| l.rewards.iter().all(|&r| r == 0)).count() as f64;
        // Slots before the first one whose cost exceeds the budget left.
        let ess: f64 = logs
            .iter()
            .map(|l| {
                let mut k = 0;
                while k < l.costs.len() && l.costs[k] <= l.budget_path[k] {
                    k += 1;
                }
                k as f64
            })
            .sum();
        assert!(close(row.play_rate, clicks / n), "{row:?}");
        assert!(close(row.abandon_rate, abandoned / n), "{row:?}");
        assert!(close(row.effective_slate_size, ess / n), "{row:?}");
    }
}
