use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::protocol::run_protocol;
use super::report::EvalReport;
use crate::config::Config;
use crate::data::TrajectorySet;
use crate::error::{Error, Result};
use crate::pipeline::SceneEncoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationKind {
    /// Merged slot count, one arm per `eval.ablation_slots` entry.
    Slots,
    /// With and without the where vectors.
    Where,
}

impl AblationKind {
    pub fn name(self) -> &'static str {
        match self {
            AblationKind::Slots => "slots",
            AblationKind::Where => "where",
        }
    }
}

impl FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slots" => Ok(AblationKind::Slots),
            "where" => Ok(AblationKind::Where),
            other => Err(Error::InvalidArgument(format!("unknown ablation `{other}`; expected slots or where"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub key: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub kind: AblationKind,
    pub arms: Vec<AblationArm>,
}

/// Row of the ablation data file.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub arm: String,
    pub input_width: usize,
    pub success_mean: f64,
    pub success_std: f64,
    pub reward_mean: f64,
    pub reward_std: f64,
}

const CSV_HEADER: &str = "arm,input_width,success_mean,success_std,reward_mean,reward_std";

/// Run the protocol once per arm. All arms share the encoder's bound-slot
/// cache and evaluate on the same derived rollout seeds.
pub fn run_ablation(
    kind: AblationKind,
    base: &Config,
    dataset: &TrajectorySet,
    encoder: &SceneEncoder<f32>,
    command: &str,
) -> Result<AblationResult> {
    let mut arms = Vec::new();
    match kind {
        AblationKind::Slots => {
            if base.eval.ablation_slots.is_empty() {
                return Err(Error::Config("eval.ablation_slots is empty".into()));
            }
            for &k in &base.eval.ablation_slots {
                let mut cfg = base.clone();
                cfg.encoder.k_merged = k;
                let enc = encoder.with_k(k)?;
                let key = k.to_string();
                let report = run_protocol(&cfg, dataset, &enc, &format!("slots-{key}"), command)?;
                arms.push(AblationArm { key, report });
            }
        }
        AblationKind::Where => {
            for (key, include) in [("what-where", true), ("what", false)] {
                let mut cfg = base.clone();
                cfg.representation.include_where = include;
                let mut spec = *encoder.spec();
                spec.include_where = include;
                let enc = encoder.with_spec(spec);
                let report = run_protocol(&cfg, dataset, &enc, key, command)?;
                arms.push(AblationArm {
                    key: key.to_string(),
                    report,
                });
            }
        }
    }
    Ok(AblationResult { kind, arms })
}

impl AblationResult {
    pub fn rows(&self) -> Vec<AblationRow> {
        self.arms
            .iter()
            .map(|a| {
                let g = &a.report.aggregate;
                AblationRow {
                    arm: a.key.clone(),
                    input_width: a.report.input_width,
                    success_mean: g.success_rate.mean,
                    success_std: g.success_rate.std,
                    reward_mean: g.mean_reward.mean,
                    reward_std: g.mean_reward.std,
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in self.rows() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.arm, r.input_width, r.success_mean, r.success_std, r.reward_mean, r.reward_std
            )
            .expect("write to string");
        }
        out
    }

    /// Writes `<kind>.csv`, `<kind>_success.svg`, `<kind>_reward.svg`,
    /// `<kind>.json` and one report directory per arm.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let name = self.kind.name();
        let put = |file: String, body: String| -> Result<()> {
            let p = dir.join(file);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        put(format!("{name}.csv"), self.to_csv())?;
        let rows = self.rows();
        let labels: Vec<String> = rows.iter().map(|r| r.arm.clone()).collect();
        put(
            format!("{name}_success.svg"),
            bar_chart_svg(
                &format!("success rate by {name} arm"),
                &labels,
                &rows.iter().map(|r| (r.success_mean, r.success_std)).collect::<Vec<_>>(),
                1.0,
            ),
        )?;
        put(
            format!("{name}_reward.svg"),
            bar_chart_svg(
                &format!("mean reward by {name} arm"),
                &labels,
                &rows.iter().map(|r| (r.reward_mean, r.reward_std)).collect::<Vec<_>>(),
                100.0,
            ),
        )?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        put(format!("{name}.json"), json)?;
        for arm in &self.arms {
            arm.report.write(&dir.join(format!("{name}-{}", arm.key)))?;
        }
        Ok(())
    }
}

pub fn parse_ablation_csv(text: &str) -> Result<Vec<AblationRow>> {
    let bad = |m: String| Error::InvalidArgument(format!("ablation csv: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields in `{l}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            Ok(AblationRow {
                arm: f[0].to_string(),
                input_width: f[1].parse().map_err(|e| bad(format!("`{}`: {e}", f[1])))?,
                success_mean: num(f[2])?,
                success_std: num(f[3])?,
                reward_mean: num(f[4])?,
                reward_std: num(f[5])?,
            })
        })
        .collect()
}

/// Bars with ± error whiskers, one per arm.
pub fn bar_chart_svg(title: &str, labels: &[String], values: &[(f64, f64)], y_max: f64) -> String {
    let (w, h, margin) = (120.0 * labels.len().max(1) as f64 + 80.0, 320.0, 50.0);
    let plot_h = h - 2.0 * margin;
    let y = |v: f64| h - margin - (v / y_max).clamp(0.0, 1.0) * plot_h;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0).unwrap();
    writeln!(
        s,
        r#"<line x1="{margin}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - margin,
        w - 20.0,
        h - margin
    )
    .unwrap();
    writeln!(s, r#"<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{}" stroke="black"/>"#, h - margin).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y_max}</text>"#, margin - 4.0, margin + 4.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, margin - 4.0, h - margin + 4.0).unwrap();
    for (i, (label, &(mean, std))) in labels.iter().zip(values).enumerate() {
        let x = margin + 20.0 + 120.0 * i as f64;
        let top = if mean.is_finite() { y(mean) } else { h - margin };
        writeln!(
            s,
            r##"<rect x="{x}" y="{top}" width="80" height="{}" fill="#4a7fc1"/>"##,
            h - margin - top
        )
        .unwrap();
        if mean.is_finite() && std.is_finite() {
            let (lo, hi) = (y(mean - std), y(mean + std));
            writeln!(s, r#"<line x1="{}" y1="{lo}" x2="{}" y2="{hi}" stroke="black"/>"#, x + 40.0, x + 40.0).unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#,
            x + 40.0,
            h - margin + 16.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{mean:.2}</text>"#,
            x + 40.0,
            top - 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
