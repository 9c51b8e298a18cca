use serde::{Deserialize, Serialize};

use crate::data::is_success;

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub index: usize,
    pub seed: u64,
    pub reward: f32,
    pub success: bool,
    pub steps: usize,
}

/// Success rate and mean percentage reward over a set of rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub success_rate: f64,
    pub mean_reward: f64,
}

impl SeedMetrics {
    /// Pure function of the records, summed in index order.
    pub fn from_records(records: &[RolloutRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let successes = records.iter().filter(|r| is_success(r.reward)).count();
        let total: f64 = records.iter().map(|r| r.reward as f64).sum();
        SeedMetrics {
            success_rate: successes as f64 / n,
            mean_reward: total / n,
        }
    }

    pub fn from_rewards(rewards: &[f32]) -> Self {
        let records: Vec<_> = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| RolloutRecord {
                index: i,
                seed: 0,
                reward: r,
                success: is_success(r),
                steps: 0,
            })
            .collect();
        Self::from_records(&records)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `"m ± s"` with two decimals.
pub fn format_pm(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub text: String,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Aggregate {
            mean,
            std,
            text: format_pm(mean, std),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_arithmetic() {
        let m = SeedMetrics::from_rewards(&[0.0, 50.0, 100.0, 0.0]);
        assert_eq!(m.success_rate, 0.5);
        assert_eq!(m.mean_reward, 37.5);
        let one = SeedMetrics::from_rewards(&[100.0 / 12.0]);
        assert_eq!(one.success_rate, 1.0);
        assert_eq!(one.mean_reward, (100.0f32 / 12.0) as f64);
    }

    #[test]
    fn table_formatting() {
        assert_eq!(Aggregate::of(&[0.5; 5]).text, "0.50 ± 0.00");
        let a = Aggregate::of(&[10.0, 20.0, 30.0, 20.0, 20.0]);
        assert_eq!(a.text, "20.00 ± 6.32");
        assert!((a.std - 40f64.sqrt()).abs() < 1e-12);
    }
}
