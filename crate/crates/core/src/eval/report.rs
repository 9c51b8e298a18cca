use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{Aggregate, RolloutRecord, SeedMetrics};
use crate::config::{Config, PolicyKind};
use crate::error::{Error, Result};

/// Provenance embedded in every report. Contains no clock time, so reruns
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

impl Stamp {
    pub fn new(config: &Config, seed: u64, command: impl Into<String>) -> Self {
        Stamp {
            tool: "actslot".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            seed,
            command: command.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub seed: u64,
    pub metrics: Option<SeedMetrics>,
    /// Set when training or evaluation of this agent failed.
    pub error: Option<String>,
    pub records: Vec<RolloutRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub name: String,
    pub metrics: SeedMetrics,
    pub records: Vec<RolloutRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub success_rate: Aggregate,
    pub mean_reward: Aggregate,
    pub agents: usize,
}

impl Aggregates {
    /// Mean ± population std over the agents that produced metrics.
    pub fn of(agents: &[AgentReport]) -> Self {
        let ok: Vec<SeedMetrics> = agents.iter().filter_map(|a| a.metrics).collect();
        let s: Vec<f64> = ok.iter().map(|m| m.success_rate).collect();
        let r: Vec<f64> = ok.iter().map(|m| m.mean_reward).collect();
        Aggregates {
            success_rate: Aggregate::of(&s),
            mean_reward: Aggregate::of(&r),
            agents: ok.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stamp: Stamp,
    pub label: String,
    pub policy: PolicyKind,
    pub input_width: usize,
    pub encoder_fingerprint: String,
    pub n_rollouts: usize,
    pub eval_seed: u64,
    pub agents: Vec<AgentReport>,
    pub aggregate: Aggregates,
    pub baseline: Option<BaselineReport>,
}

impl EvalReport {
    /// Recompute every metric and aggregate from the stored rollout records.
    pub fn reaggregated(&self) -> Self {
        let mut out = self.clone();
        for a in &mut out.agents {
            if a.error.is_none() {
                a.metrics = Some(SeedMetrics::from_records(&a.records));
            }
        }
        if let Some(b) = &mut out.baseline {
            b.metrics = SeedMetrics::from_records(&b.records);
        }
        out.aggregate = Aggregates::of(&out.agents);
        out
    }

    pub fn is_complete(&self) -> bool {
        self.agents.iter().all(|a| a.error.is_none())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per agent plus `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,agent_seed,success_rate,mean_reward,error\n");
        for a in &self.agents {
            let (s, r) = a
                .metrics
                .map(|m| (m.success_rate.to_string(), m.mean_reward.to_string()))
                .unwrap_or_default();
            let err = a.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            out.push_str(&format!("{},{},{s},{r},{err}\n", self.label, a.seed));
        }
        let g = &self.aggregate;
        out.push_str(&format!("{},mean,{},{},\n", self.label, g.success_rate.mean, g.mean_reward.mean));
        out.push_str(&format!("{},std,{},{},\n", self.label, g.success_rate.std, g.mean_reward.std));
        out
    }

    /// Write `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("report.csv");
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: success {}, reward {} ({} agents x {} rollouts, input width {})",
            self.label,
            self.aggregate.success_rate.text,
            self.aggregate.mean_reward.text,
            self.aggregate.agents,
            self.n_rollouts,
            self.input_width
        );
        if let Some(b) = &self.baseline {
            s.push_str(&format!(
                "; {} baseline success {:.2}, reward {:.2}",
                b.name, b.metrics.success_rate, b.metrics.mean_reward
            ));
        }
        s
    }
}
