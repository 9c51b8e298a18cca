//! `actslot`: dataset generation, encoder and policy training, evaluation.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on runtime
//! failures such as diverged training.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actslot::config::PolicyKind;
use actslot::data::{generate_sprite_dataset, load_trajectories, save_trajectories, TrajectorySet, VideoClipSet};
use actslot::encoder::train_encoder;
use actslot::eval::{
    evaluate, prepare, run_ablation, run_protocol, AblationKind, AgentReport, Aggregates, EvalReport, Stamp,
};
use actslot::policy::PolicyArtifact;
use actslot::representation::write_representation;
use actslot::{backbone::Backbone, Config, EncoderCheckpoint};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "actslot", version, about = "Object-centric representations for visuo-motor policies")]
struct Cli {
    /// TOML config file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override: data.seed for `data`, training.seed for `encoder`,
    /// the agent seed for `policy`, eval.seed for `eval`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Group,
}

#[derive(Subcommand, Debug)]
enum Group {
    /// Trajectory datasets.
    #[command(subcommand)]
    Data(DataCmd),
    /// Slot encoder checkpoints.
    #[command(subcommand)]
    Encoder(EncoderCmd),
    /// Policy training.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Rollout evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Report files.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand, Debug)]
enum DataCmd {
    /// Roll out the scripted expert and save the dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Overrides data.n_traj.
        #[arg(long)]
        n_traj: Option<usize>,
    },
    /// Load a dataset and check every format and integrity rule.
    Validate {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Print trajectory and success counts.
    Stats {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum EncoderCmd {
    /// Train the slot encoder on the dataset's frame sequences.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Describe a checkpoint; with --frame, dump that frame's representation.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Frame id such as `0003/0010`.
        #[arg(long)]
        frame: Option<String>,
        /// Where to write the representation dump.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum PolicyCmd {
    /// Behavior cloning on the successful trajectories.
    TrainBc {
        #[arg(long)]
        out: PathBuf,
    },
    /// Implicit Q-learning on every trajectory.
    TrainIql {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum EvalCmd {
    /// Evaluate one trained policy.
    Run {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train eval.n_agents agents and evaluate each.
    Protocol {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the protocol per ablation arm.
    Ablate {
        /// `slots` or `where`.
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum ReportCmd {
    /// Recompute aggregates from a report's rollout records and rewrite it.
    Emit {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<actslot::Error> for Failure {
    fn from(e: actslot::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn write(path: &Path, body: impl AsRef<[u8]>) -> Outcome {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_stamp(dir: &Path, stamp: &Stamp) -> Outcome {
    let mut s = serde_json::to_string_pretty(stamp)?;
    s.push('\n');
    write(&dir.join("stamp.json"), s)
}

fn dataset_for(config: &Config, arg: Option<PathBuf>) -> Result<TrajectorySet, Failure> {
    match arg.or_else(|| config.eval.dataset.clone()) {
        Some(p) => Ok(load_trajectories(&p)?),
        None => Err(Failure::Validation(
            "no dataset given: pass --dataset or set eval.dataset".into(),
        )),
    }
}

fn run(cli: Cli) -> Outcome {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let command = command_name(&cli.command);
    match cli.command {
        Group::Data(cmd) => {
            if let Some(s) = cli.seed {
                config.data.seed = s;
            }
            match cmd {
                DataCmd::Generate { out, n_traj } => {
                    if let Some(n) = n_traj {
                        config.data.n_traj = n;
                    }
                    config.validate()?;
                    let (set, _) = generate_sprite_dataset(&config.env, config.data.n_traj, &config.data, config.data.seed)?;
                    save_trajectories(&set, &out)?;
                    write_stamp(&out, &Stamp::new(&config, config.data.seed, command))?;
                    println!("{} trajectories, {} successful", set.len(), set.successful());
                }
                DataCmd::Validate { dataset } => {
                    let set = dataset_for(&config, dataset)?;
                    println!("ok: {} trajectories, {} successful", set.len(), set.successful());
                }
                DataCmd::Stats { dataset } => {
                    let set = dataset_for(&config, dataset)?;
                    let steps: usize = set.trajectories.iter().map(|t| t.len()).sum();
                    let reward: f64 = set.trajectories.iter().map(|t| t.reward as f64).sum();
                    let n = set.len().max(1) as f64;
                    println!("{} trajectories, {} successful", set.len(), set.successful());
                    println!("mean length {:.2} steps, mean reward {:.2}", steps as f64 / n, reward / n);
                }
            }
        }
        Group::Encoder(cmd) => {
            if let Some(s) = cli.seed {
                config.training.seed = s;
            }
            config.validate()?;
            match cmd {
                EncoderCmd::Train { out, dataset } => {
                    let set = match dataset.or_else(|| config.eval.dataset.clone()) {
                        Some(p) => load_trajectories(&p)?,
                        None => generate_sprite_dataset(&config.env, config.data.n_traj, &config.data, config.data.seed)?.0,
                    };
                    let backbone = Backbone::new(&config.backbone)?;
                    let (ck, log) = train_encoder::<f32>(&VideoClipSet::from_trajectories(&set), &backbone, &config)?;
                    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
                    ck.save(&out.join("encoder.aslt"))?;
                    write(&out.join("training_log.json"), serde_json::to_string_pretty(&log)? + "\n")?;
                    write_stamp(&out, &Stamp::new(&config, config.training.seed, command))?;
                    if let Some(last) = log.epoch_losses.last() {
                        println!("final reconstruction loss {last:.6}");
                    }
                    println!("encoder {} written to {}", ck.fingerprint(), out.join("encoder.aslt").display());
                }
                EncoderCmd::Inspect {
                    checkpoint,
                    dataset,
                    frame,
                    out,
                } => {
                    let ck = EncoderCheckpoint::load(&checkpoint)?;
                    let n_params: usize = ck.params.tensors().iter().map(|t| t.len()).sum();
                    println!("fingerprint {}", ck.fingerprint());
                    println!("{}", serde_json::to_string_pretty(&ck.arch)?);
                    println!("{} parameters in {} tensors", n_params, ck.params.len());
                    if let Some(id) = frame {
                        let set = dataset_for(&config, dataset)?;
                        let f = set
                            .trajectories
                            .iter()
                            .flat_map(|t| t.frames.iter())
                            .find(|f| f.id == id)
                            .ok_or_else(|| Failure::Validation(format!("no frame `{id}` in the dataset")))?;
                        let enc = actslot::SceneEncoder::new(Backbone::new(&config.backbone)?, ck, &config)?;
                        let bound = enc.bind_cached(f)?;
                        let merged = enc.merge(&bound)?;
                        let rep = enc.represent(&bound)?;
                        println!("merged groups {:?}", merged.members);
                        println!("representation length {}", rep.values.len());
                        if let Some(out) = out {
                            write_representation(&rep, enc.spec().scale, &out)?;
                            println!("representation written to {}", out.display());
                        }
                    }
                }
            }
        }
        Group::Policy(cmd) => {
            let seed = cli.seed.unwrap_or(0);
            let (out, kind) = match cmd {
                PolicyCmd::TrainBc { out } => (out, PolicyKind::Bc),
                PolicyCmd::TrainIql { out } => (out, PolicyKind::Iql),
            };
            config.eval.policy = kind;
            let prepared = prepare(&config)?;
            let artifact = actslot::eval::train_policy(&prepared.dataset, &prepared.encoder, &config, seed)?;
            fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
            artifact.save(&out.join("policy.aslt"))?;
            write_stamp(&out, &Stamp::new(&config, seed, command))?;
            println!(
                "{:?} policy trained: input width {}, final loss {:.6}",
                kind,
                artifact.input_dim,
                artifact.log.last().copied().unwrap_or(f64::NAN)
            );
        }
        Group::Eval(cmd) => {
            if let Some(s) = cli.seed {
                config.eval.seed = s;
            }
            match cmd {
                EvalCmd::Run { policy, out } => {
                    let artifact = PolicyArtifact::load(&policy)?;
                    config.eval.policy = artifact.kind;
                    let prepared = prepare(&config)?;
                    let (metrics, records) =
                        evaluate(&artifact, &config.env, &prepared.encoder, config.eval.n_rollouts, config.eval.seed)?;
                    let agents = vec![AgentReport {
                        seed: artifact.seed,
                        metrics: Some(metrics),
                        error: None,
                        records,
                    }];
                    let report = EvalReport {
                        stamp: Stamp::new(&config, config.eval.seed, command),
                        label: "run".into(),
                        policy: artifact.kind,
                        input_width: artifact.input_dim,
                        encoder_fingerprint: artifact.encoder_fingerprint.clone(),
                        n_rollouts: config.eval.n_rollouts,
                        eval_seed: config.eval.seed,
                        aggregate: Aggregates::of(&agents),
                        agents,
                        baseline: None,
                    };
                    report.write(&out)?;
                    println!("{}", report.summary());
                }
                EvalCmd::Protocol { out } => {
                    let prepared = prepare(&config)?;
                    let label = match config.eval.policy {
                        PolicyKind::Bc => "bc",
                        PolicyKind::Iql => "iql",
                    };
                    let report = run_protocol(&config, &prepared.dataset, &prepared.encoder, label, &command)?;
                    report.write(&out)?;
                    println!("{}", report.summary());
                    if !report.is_complete() {
                        return Err(Failure::Runtime("some agents failed; see report.json".into()));
                    }
                }
                EvalCmd::Ablate { kind, out } => {
                    let kind: AblationKind = kind.parse()?;
                    let prepared = prepare(&config)?;
                    let result = run_ablation(kind, &config, &prepared.dataset, &prepared.encoder, &command)?;
                    result.write(&out)?;
                    for arm in &result.arms {
                        println!("{}", arm.report.summary());
                    }
                    if result.arms.iter().any(|a| !a.report.is_complete()) {
                        return Err(Failure::Runtime("some agents failed; see the arm reports".into()));
                    }
                }
            }
        }
        Group::Report(ReportCmd::Emit { report, out }) => {
            let stored = EvalReport::read(&report)?;
            let fresh = stored.reaggregated();
            fresh.write(&out)?;
            println!("{}", fresh.summary());
            if fresh.aggregate != stored.aggregate {
                return Err(Failure::Validation(
                    "stored aggregates differ from those recomputed from the rollout records".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Subcommand path recorded in stamps. Output paths are left out so that
/// reruns into different directories produce identical files.
fn command_name(g: &Group) -> String {
    let sub = match g {
        Group::Data(DataCmd::Generate { .. }) => "data generate",
        Group::Data(DataCmd::Validate { .. }) => "data validate",
        Group::Data(DataCmd::Stats { .. }) => "data stats",
        Group::Encoder(EncoderCmd::Train { .. }) => "encoder train",
        Group::Encoder(EncoderCmd::Inspect { .. }) => "encoder inspect",
        Group::Policy(PolicyCmd::TrainBc { .. }) => "policy train-bc",
        Group::Policy(PolicyCmd::TrainIql { .. }) => "policy train-iql",
        Group::Eval(EvalCmd::Run { .. }) => "eval run",
        Group::Eval(EvalCmd::Protocol { .. }) => "eval protocol",
        Group::Eval(EvalCmd::Ablate { kind, .. }) => return format!("eval ablate {kind}"),
        Group::Report(ReportCmd::Emit { .. }) => "report emit",
    };
    sub.to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
