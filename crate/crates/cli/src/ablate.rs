use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use av2t_core::pipeline::{evaluate_run, train};
use av2t_core::{MetricsReport, PromptSource, RunConfig, RunManifest, Subset};
use serde::Serialize;
use serde_json::json;

use crate::args::{AdapterArms, CommonArgs};
use crate::commands::{checkpoint_state, load_clips, suite_for};

/// Reference results for the pretrained model: (M_J, M_F) on S4 and MS3.
const REFERENCE: [(&str, [(f64, f64); 2]); 4] = [
    ("clip_only_adapter-on", [(86.29, 0.920), (64.23, 0.738)]),
    ("clap_only_adapter-on", [(85.67, 0.915), (68.15, 0.743)]),
    ("fused_adapter-on", [(86.67, 0.924), (69.65, 0.777)]),
    ("fused_adapter-off", [(85.63, 0.920), (64.47, 0.704)]),
];

pub fn arm_name(source: PromptSource, adapter: bool) -> String {
    format!(
        "{}_adapter-{}",
        source.as_str(),
        if adapter { "on" } else { "off" }
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmResult {
    pub arm: String,
    pub source: PromptSource,
    pub adapter: bool,
    pub checkpoint: PathBuf,
    pub m_j: f64,
    pub m_f: f64,
}

/// Fused minus vision-only M_J for one adapter setting.
#[derive(Debug, Clone, Serialize)]
pub struct VisionBias {
    pub adapter: bool,
    pub fused_m_j: f64,
    pub clip_only_m_j: f64,
    pub gap: f64,
    pub margin: f64,
    /// True when audio adds no more than `margin` points over vision alone.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub subset: Subset,
    pub arms: Vec<ArmResult>,
    pub vision_bias: Vec<VisionBias>,
}

pub fn vision_bias(arms: &[ArmResult], margin: f64) -> Vec<VisionBias> {
    let mut out = Vec::new();
    for adapter in [true, false] {
        let find = |s| arms.iter().find(|a| a.source == s && a.adapter == adapter);
        if let (Some(f), Some(c)) = (find(PromptSource::Fused), find(PromptSource::ClipOnly)) {
            let gap = f.m_j - c.m_j;
            out.push(VisionBias {
                adapter,
                fused_m_j: f.m_j,
                clip_only_m_j: c.m_j,
                gap,
                margin,
                flagged: gap <= margin,
            });
        }
    }
    out
}

fn reference_for(arm: &str, subset: Subset) -> Option<(f64, f64)> {
    let k = match subset {
        Subset::S4 => 0,
        Subset::MS3 => 1,
    };
    REFERENCE
        .iter()
        .find(|(name, _)| *name == arm)
        .map(|(_, v)| v[k])
}

pub fn grid_tsv(report: &AblationReport) -> String {
    let mut s = String::from("arm\tsource\tadapter\tm_j\tm_f\n");
    for a in &report.arms {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.4}\t{:.6}",
            a.arm,
            a.source.as_str(),
            if a.adapter { "on" } else { "off" },
            a.m_j,
            a.m_f
        );
    }
    s
}

pub fn report_md(report: &AblationReport) -> String {
    let mut s = format!("# Ablation ({})\n\n", report.subset);
    s.push_str("| Prompt | Adapter | M_J | M_F |\n|---|---|---:|---:|\n");
    let mut notes = Vec::new();
    for a in &report.arms {
        let mark = match reference_for(&a.arm, report.subset) {
            Some((j, f)) => {
                notes.push(format!("{}: M_J {j:.2}, M_F {f:.3}", a.arm));
                format!("[^{}]", notes.len())
            }
            None => String::new(),
        };
        let _ = writeln!(
            s,
            "| {}{mark} | {} | {:.2} | {:.3} |",
            a.source.label(),
            if a.adapter { "on" } else { "off" },
            a.m_j,
            a.m_f
        );
    }
    for b in &report.vision_bias {
        let _ = write!(
            s,
            "\nAdapter {}: fused minus vision-only M_J = {:+.2} (margin {:.2})",
            if b.adapter { "on" } else { "off" },
            b.gap,
            b.margin
        );
        if b.flagged {
            s.push_str(". **Vision bias:** the audio prompt adds little over vision alone.");
        }
        s.push('\n');
    }
    if !notes.is_empty() {
        s.push('\n');
        for (i, n) in notes.iter().enumerate() {
            let _ = writeln!(
                s,
                "[^{}]: Reference result for the pretrained model, {n}.",
                i + 1
            );
        }
    }
    s
}

pub struct AblateArgs<'a> {
    pub train_data: Option<&'a Path>,
    pub eval_data: &'a Path,
    pub out_dir: &'a Path,
    pub train_all: bool,
    pub checkpoints: Option<&'a Path>,
    pub sources: &'a [PromptSource],
    pub adapters: AdapterArms,
}

pub fn run(common: &CommonArgs, cfg: &RunConfig, args: &AblateArgs) -> Result<AblationReport> {
    let sources: Vec<PromptSource> = if args.sources.is_empty() {
        PromptSource::ALL.to_vec()
    } else {
        args.sources.to_vec()
    };
    let adapters: &[bool] = match args.adapters {
        AdapterArms::Both => &[true, false],
        AdapterArms::On => &[true],
        AdapterArms::Off => &[false],
    };
    let train_clips = match (args.train_all, args.train_data) {
        (true, Some(p)) => Some(load_clips(p)?.1),
        (true, None) => bail!("--train-all needs --train-data"),
        (false, _) => None,
    };
    let (manifest, eval_clips) = load_clips(args.eval_data)?;
    let arms_dir = args.out_dir.join("arms");
    let ckpt_dir = args
        .checkpoints
        .map(Path::to_path_buf)
        .unwrap_or_else(|| arms_dir.clone());

    let mut arms = Vec::new();
    for &source in &sources {
        for &adapter in adapters {
            let name = arm_name(source, adapter);
            let arm_out = arms_dir.join(&name);
            std::fs::create_dir_all(&arm_out)
                .with_context(|| format!("creating {}", arm_out.display()))?;
            let checkpoint = match &train_clips {
                Some(clips) => {
                    let mut arm_cfg = cfg.clone();
                    arm_cfg.train.prompt_source = source;
                    arm_cfg.train.adapter_enabled = adapter;
                    let suite = arm_cfg.backend.open()?;
                    train(&suite, clips, &arm_cfg, Some(&arm_out))
                        .with_context(|| format!("training arm {name}"))?;
                    arm_out.join("model.av2t")
                }
                None => {
                    let p = ckpt_dir.join(&name).join("model.av2t");
                    if !p.is_file() {
                        return Err(av2t_core::Error::MissingInput(p)).with_context(|| {
                            format!("no checkpoint for arm {name}; train it or pass --train-all")
                        });
                    }
                    p
                }
            };
            let mut state = checkpoint_state(&checkpoint, common, cfg)?;
            state.config.train.prompt_source = source;
            state.config.train.adapter_enabled = adapter;
            let suite = suite_for(&state, cfg)?;
            let report: MetricsReport = evaluate_run(&suite, &state, &eval_clips, &cfg.eval)
                .with_context(|| format!("evaluating arm {name}"))?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            std::fs::write(arm_out.join("metrics.json"), text)?;
            arms.push(ArmResult {
                arm: name,
                source,
                adapter,
                checkpoint,
                m_j: report.m_j,
                m_f: report.m_f,
            });
        }
    }

    let report = AblationReport {
        subset: manifest.subset,
        vision_bias: vision_bias(&arms, cfg.ablate.vision_bias_margin),
        arms,
    };
    std::fs::write(args.out_dir.join("grid.tsv"), grid_tsv(&report))?;
    std::fs::write(args.out_dir.join("report.md"), report_md(&report))?;
    std::fs::write(
        args.out_dir.join("ablation.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;

    println!("{:<24} {:>8} {:>8}", "arm", "M_J", "M_F");
    for a in &report.arms {
        println!("{:<24} {:>8.2} {:>8.3}", a.arm, a.m_j, a.m_f);
    }
    for b in report.vision_bias.iter().filter(|b| b.flagged) {
        println!(
            "vision bias (adapter {}): fused exceeds clip_only by {:.2} <= {:.2}",
            if b.adapter { "on" } else { "off" },
            b.gap,
            b.margin
        );
    }

    let mut run = RunManifest::new("ablate", cfg);
    for (k, f) in [
        ("grid", "grid.tsv"),
        ("report", "report.md"),
        ("ablation", "ablation.json"),
    ] {
        run.outputs.insert(k.into(), f.into());
    }
    run.details =
        json!({ "eval_data": args.eval_data, "trained": args.train_all, "arms": report.arms });
    run.write(&args.out_dir.join("run_manifest.json"))?;
    Ok(report)
}
