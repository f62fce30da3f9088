use crate::env::EpisodeLog;
use crate::{Error, Result};

fn nonempty(logs: &[EpisodeLog]) -> Result<()> {
    if logs.is_empty() {
        Err(Error::Domain("metric over zero episodes".into()))
    } else {
        Ok(())
    }
}

/// Average clicks per slate.
pub fn play_rate(logs: &[EpisodeLog]) -> Result<f64> {
    nonempty(logs)?;
    Ok(logs.iter().map(|l| l.clicks() as f64).sum::<f64>() / logs.len() as f64)
}

/// Length of the longest prefix whose every slot was affordable against the
/// budget remaining when it was reached.
pub fn effective_slate_size(log: &EpisodeLog) -> usize {
    log.costs
        .iter()
        .zip(&log.budget_path)
        .take_while(|(c, u)| c <= u)
        .count()
}

pub fn mean_effective_slate_size(logs: &[EpisodeLog]) -> Result<f64> {
    nonempty(logs)?;
    Ok(logs.iter().map(|l| effective_slate_size(l) as f64).sum::<f64>() / logs.len() as f64)
}

/// Fraction of slates without a single click.
pub fn abandon_rate(logs: &[EpisodeLog]) -> Result<f64> {
    nonempty(logs)?;
    Ok(logs.iter().filter(|l| l.clicks() == 0).count() as f64 / logs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ChargeMode, ResponseMode};

    fn log(costs: &[f64], rewards: &[u8], budget: f64) -> EpisodeLog {
        let mut path = vec![budget];
        for (c, r) in costs.iter().zip(rewards) {
            let last = *path.last().unwrap();
            path.push(last - c * *r as f64);
        }
        EpisodeLog {
            user_id: 0,
            initial_budget: budget,
            actions: (0..costs.len()).collect(),
            sigmas: vec![0.5; costs.len()],
            costs: costs.to_vec(),
            rewards: rewards.to_vec(),
            click_vector: rewards.to_vec(),
            budget_path: path,
            response_mode: ResponseMode::BernoulliPerSlot,
            charge_mode: ChargeMode::ChargeOnClick,
            seed: 0,
        }
    }

    #[test]
    fn rates() {
        let logs: Vec<_> = [1u8, 0, 1, 1].iter().map(|&r| log(&[1.0], &[r], 10.0)).collect();
        assert_eq!(play_rate(&logs).unwrap(), 0.75);
        assert_eq!(abandon_rate(&logs).unwrap(), 0.25);
        let zeros: Vec<_> = (0..3).map(|_| log(&[1.0], &[0], 10.0)).collect();
        assert_eq!(play_rate(&zeros).unwrap(), 0.0);
        assert_eq!(abandon_rate(&zeros).unwrap(), 1.0);
        assert!(play_rate(&[]).is_err());
        assert!(abandon_rate(&[]).is_err());
        assert!(mean_effective_slate_size(&[]).is_err());
    }

    #[test]
    fn effective_size_examples() {
        assert_eq!(effective_slate_size(&log(&[30.0, 40.0, 50.0], &[0, 0, 0], 100.0)), 3);
        assert_eq!(effective_slate_size(&log(&[30.0, 40.0, 50.0], &[1, 1, 0], 100.0)), 2);
        assert_eq!(effective_slate_size(&log(&[], &[], 0.005)), 0);
        assert_eq!(effective_slate_size(&log(&[0.01], &[0], 0.005)), 0);
    }
}
