//! Command-line driver for the localization pipeline.
//!
//! Exit codes: 0 on success, 1 on a domain error (bad design, unobservable
//! bug, diverged training), 2 on usage errors.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rtlhound::campaign::{run_campaign, CampaignConfig};
use rtlhound::explainer::{localize, LocalizeConfig, RunAggregation};
use rtlhound::frontend::{parse_design, pretty_print, Design};
use rtlhound::graphs::{build_cdfg, build_vdg, dependence_set};
use rtlhound::model::{load_checkpoint, save_checkpoint};
use rtlhound::mutator::{apply_mutation, check_observability, enumerate_mutations, MutationKind};
use rtlhound::report::{
    compute_coverage, render_ansi, render_coverage_text, render_html, sha256_hex, CampaignRecord,
};
use rtlhound::rvdg::{generate_design, RvdgConfig};
use rtlhound::sim::{generate_testbench, simulate, write_trace_jsonl};
use rtlhound::trainer::{
    build_dataset, curve_csv, evaluate, split_designs, train, EvalMode, TrainConfig,
};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "rtlhound", version, about = "Statement-level bug localization for a Verilog subset")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random template designs plus a manifest.
    Rvdg(RvdgArgs),
    /// Simulate a design and write a JSON Lines trace.
    Simulate(SimulateArgs),
    /// Train the execution-semantics model on a directory of designs.
    Train(TrainArgs),
    /// Score a trained checkpoint on held-out designs.
    EvalPredictor(EvalArgs),
    /// Enumerate and apply mutations, checking observability.
    Inject(InjectArgs),
    /// Rank suspicious statements for a buggy design against a golden one.
    Localize(LocalizeArgs),
    /// Run a full bug-injection campaign over many designs.
    Campaign(CampaignArgs),
    /// Render a coverage table from campaign results.
    Report(ReportArgs),
}

#[derive(Args)]
struct RvdgArgs {
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    inputs: usize,
    #[arg(long, default_value_t = 2)]
    state_bits: usize,
    #[arg(long, default_value_t = 2)]
    outputs: usize,
    #[arg(long, default_value_t = 4)]
    branches: usize,
    #[arg(long, default_value_t = 3)]
    max_operands: usize,
    #[arg(long, default_value_t = 4)]
    max_operators: usize,
    #[arg(long, default_value_t = 2)]
    stmts_per_branch: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long, default_value_t = 64)]
    cycles: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trace: PathBuf,
    /// Write the control-data flow graph in DOT form.
    #[arg(long)]
    dot_cdfg: Option<PathBuf>,
    /// Write the variable dependency graph in DOT form.
    #[arg(long)]
    dot_vdg: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of `.v` designs (sorted by file name).
    #[arg(long)]
    designs: PathBuf,
    #[arg(long, default_value_t = 64)]
    cycles: u32,
    #[arg(long, default_value_t = 0.2)]
    holdout_fraction: f64,
    #[arg(long, default_value_t = 42)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    wd: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Epochs without holdout improvement before stopping (0 disables).
    #[arg(long, default_value_t = 5)]
    plateau: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Loss-curve CSV output.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    designs: PathBuf,
    #[arg(long, default_value_t = 64)]
    cycles: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chain the model's own predictions through statement order instead
    /// of using trace values.
    #[arg(long)]
    chained: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mutants sampled per kind; use --all to apply every mutation.
    #[arg(long, default_value_t = 1)]
    per_kind: usize,
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 64)]
    cycles: u32,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long)]
    golden: PathBuf,
    #[arg(long)]
    mutant: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 64)]
    cycles: u32,
    #[arg(long, default_value_t = 0.10)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pool all failing traces into one map instead of taking the
    /// per-statement maximum across failing runs.
    #[arg(long)]
    pooled: bool,
    #[arg(long)]
    json: PathBuf,
    #[arg(long)]
    html: Option<PathBuf>,
    /// Print the ANSI rendering to standard output.
    #[arg(long)]
    ansi: bool,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    designs: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Target output; defaults to each design's first output.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 1)]
    per_kind: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    obs_runs: usize,
    #[arg(long, default_value_t = 64)]
    obs_cycles: u32,
    #[arg(long, default_value_t = 128)]
    runs: usize,
    #[arg(long, default_value_t = 5)]
    cycles: u32,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Use per-run maximum aggregation instead of pooling.
    #[arg(long)]
    per_run_max: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Campaign results JSON produced by `campaign`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() {
    env_logger::init();
    if let Ok(threads) = std::env::var("RTLHOUND_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Rvdg(args) => cmd_rvdg(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::EvalPredictor(args) => cmd_eval(args),
        Command::Inject(args) => cmd_inject(args),
        Command::Localize(args) => cmd_localize(args),
        Command::Campaign(args) => cmd_campaign(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn load_design(path: &Path) -> Result<Design> {
    let source = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_design(&source).map_err(|diag| anyhow::anyhow!("{}: {diag}", path.display()))
}

fn load_design_dir(dir: &Path) -> Result<Vec<Design>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "v"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .v files in {}", dir.display());
    }
    paths.iter().map(|p| load_design(p)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_rvdg(args: RvdgArgs) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    let mut manifest = Vec::new();
    for i in 0..args.count {
        let cfg = RvdgConfig {
            inputs: args.inputs,
            state_bits: args.state_bits,
            outputs: args.outputs,
            branches: args.branches,
            max_operands: args.max_operands,
            max_operators: args.max_operators,
            stmts_per_branch: args.stmts_per_branch,
            seed: args.seed + i,
        };
        let source = generate_design(&cfg)?;
        let file = format!("design_{:06}.v", cfg.seed);
        fs::write(args.out.join(&file), &source)?;
        manifest.push(serde_json::json!({ "file": file, "config": cfg }));
    }
    write_json(&args.out.join("manifest.json"), &serde_json::json!({ "designs": manifest }))?;
    println!("wrote {} designs to {}", args.count, args.out.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let design = load_design(&args.design)?;
    let stimulus = generate_testbench(&design, args.cycles, args.seed);
    let trace = simulate(&design, &stimulus)?;
    let file = fs::File::create(&args.trace)?;
    write_trace_jsonl(&trace, &design, std::io::BufWriter::new(file))?;
    if let Some(path) = &args.dot_cdfg {
        fs::write(path, build_cdfg(&design).to_dot())?;
    }
    if let Some(path) = &args.dot_vdg {
        fs::write(path, build_vdg(&design).to_dot())?;
    }
    let manifest = serde_json::json!({
        "design": args.design,
        "cycles": args.cycles,
        "seed": args.seed,
    });
    write_json(&args.trace.with_extension("manifest.json"), &manifest)?;
    println!("wrote {} cycles to {}", args.cycles, args.trace.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let designs = load_design_dir(&args.designs)?;
    let (train_designs, holdout_designs) =
        split_designs(designs, args.holdout_fraction, args.split_seed);
    let train_set = build_dataset(&train_designs, args.cycles, args.seed.wrapping_add(1))?;
    let holdout_set = if holdout_designs.is_empty() {
        None
    } else {
        Some(build_dataset(&holdout_designs, args.cycles, args.seed.wrapping_add(2))?)
    };
    let cfg = TrainConfig {
        lr: args.lr,
        weight_decay: args.wd,
        batch_size: args.batch_size,
        epochs: args.epochs,
        alpha: args.alpha,
        seed: args.seed,
        plateau: if args.plateau == 0 { usize::MAX } else { args.plateau },
        ..Default::default()
    };
    let outcome = train(&train_set, holdout_set.as_ref(), &cfg)?;
    let vocab = rtlhound::context::Vocab::standard();
    let file = fs::File::create(&args.checkpoint)?;
    save_checkpoint(std::io::BufWriter::new(file), &outcome.params, outcome.loss_config, &vocab)?;
    if let Some(curve) = &args.curve {
        fs::write(curve, curve_csv(&outcome.curve))?;
    }
    let manifest = serde_json::json!({
        "designs": args.designs,
        "cycles": args.cycles,
        "holdout_fraction": args.holdout_fraction,
        "split_seed": args.split_seed,
        "train": cfg,
    });
    write_json(&args.checkpoint.with_extension("manifest.json"), &manifest)?;
    if let Some(last) = outcome.curve.last() {
        println!(
            "trained {} epochs; final loss {:.4}, holdout accuracy {}",
            outcome.curve.len(),
            last.train_loss,
            last.holdout_accuracy.map_or("n/a".to_string(), |a| format!("{:.2}%", a * 100.0)),
        );
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let vocab = rtlhound::context::Vocab::standard();
    let (params, _) = load_checkpoint(fs::File::open(&args.checkpoint)?, &vocab)?;
    let designs = load_design_dir(&args.designs)?;
    let dataset = build_dataset(&designs, args.cycles, args.seed)?;
    let mode = if args.chained { EvalMode::ChainedPredictions } else { EvalMode::TraceValues };
    let metrics = evaluate(&params, &dataset, mode)?;
    let payload = serde_json::json!({
        "checkpoint": args.checkpoint,
        "designs": args.designs,
        "cycles": args.cycles,
        "seed": args.seed,
        "mode": mode,
        "metrics": metrics,
    });
    match &args.json {
        Some(path) => write_json(path, &payload)?,
        None => println!("{}", serde_json::to_string_pretty(&payload)?),
    }
    Ok(())
}

fn cmd_inject(args: InjectArgs) -> Result<()> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let golden = load_design(&args.design)?;
    if !golden.outputs.iter().any(|o| o == &args.target) {
        bail!("target `{}` is not an output of {}", args.target, args.design.display());
    }
    fs::create_dir_all(&args.out)?;
    let deps = dependence_set(&build_vdg(&golden), &args.target)?;
    let all = enumerate_mutations(&golden, &deps);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let selected: Vec<_> = if args.all {
        all.iter().collect()
    } else {
        let mut picks = Vec::new();
        for kind in MutationKind::ALL {
            let mut of_kind: Vec<_> = all.iter().filter(|m| m.kind == kind).collect();
            of_kind.shuffle(&mut rng);
            picks.extend(of_kind.into_iter().take(args.per_kind));
        }
        picks
    };
    let stimuli: Vec<_> =
        (0..args.runs).map(|_| generate_testbench(&golden, args.cycles, rng.gen())).collect();
    let mut entries = Vec::new();
    for (i, mutation) in selected.iter().enumerate() {
        let mutant = apply_mutation(&golden, mutation)?;
        let observability = check_observability(&golden, &mutant, &args.target, &stimuli)?;
        let file = format!("mutant_{i:03}_{}.v", mutation.kind.as_str());
        fs::write(args.out.join(&file), pretty_print(&mutant))?;
        entries.push(serde_json::json!({
            "file": file,
            "mutation": mutation,
            "observable": observability.observable,
            "trace_labels": observability.labels,
        }));
    }
    let manifest = serde_json::json!({
        "golden": args.design,
        "target": args.target,
        "seed": args.seed,
        "observability_runs": args.runs,
        "observability_cycles": args.cycles,
        "mutants": entries,
    });
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!("wrote {} mutants to {}", selected.len(), args.out.display());
    Ok(())
}

fn cmd_localize(args: LocalizeArgs) -> Result<()> {
    let golden = load_design(&args.golden)?;
    let mutant_source = fs::read_to_string(&args.mutant)?;
    let mutant = parse_design(&mutant_source)
        .map_err(|diag| anyhow::anyhow!("{}: {diag}", args.mutant.display()))?;
    let vocab = rtlhound::context::Vocab::standard();
    let (params, _) = load_checkpoint(fs::File::open(&args.checkpoint)?, &vocab)?;
    let cfg = LocalizeConfig {
        runs: args.runs,
        cycles: args.cycles,
        threshold: args.threshold,
        seed: args.seed,
        aggregation: if args.pooled { RunAggregation::Pooled } else { RunAggregation::PerRunMax },
    };
    let result = localize(&golden, &mutant, &args.target, &params, &cfg)?;
    let payload = serde_json::json!({
        "golden": args.golden,
        "mutant": args.mutant,
        "checkpoint": args.checkpoint,
        "result": result,
    });
    let json_text = serde_json::to_string_pretty(&payload)?;
    fs::write(&args.json, &json_text)?;
    let digest = sha256_hex(json_text.as_bytes());
    if let Some(html_path) = &args.html {
        let html = render_html(&result, &mutant, &mutant_source, &digest)?;
        fs::write(html_path, html)?;
    }
    if args.ansi {
        print!("{}", render_ansi(&result, &mutant)?);
    } else {
        for entry in result.heatmap.entries.iter().take(5) {
            println!(
                "rank {:>2}: line {:<4} score {:.3}",
                result.heatmap.rank_of(entry.statement).unwrap_or(0),
                entry.statement.line,
                entry.score
            );
        }
        if result.heatmap.entries.is_empty() {
            println!("no suspicious statements above threshold {:.2}", result.threshold);
        }
    }
    Ok(())
}

fn cmd_campaign(args: CampaignArgs) -> Result<()> {
    let vocab = rtlhound::context::Vocab::standard();
    let (params, _) = load_checkpoint(fs::File::open(&args.checkpoint)?, &vocab)?;
    let designs = load_design_dir(&args.designs)?;
    let pairs: Vec<(Design, String)> = designs
        .into_iter()
        .map(|design| {
            let target = match &args.target {
                Some(target) => target.clone(),
                None => design
                    .outputs
                    .first()
                    .cloned()
                    .ok_or_else(|| anyhow::anyhow!("design {} has no outputs", design.name))?,
            };
            Ok((design, target))
        })
        .collect::<Result<_>>()?;
    let cfg = CampaignConfig {
        per_kind: args.per_kind,
        observability_runs: args.obs_runs,
        observability_cycles: args.obs_cycles,
        localize: LocalizeConfig {
            runs: args.runs,
            cycles: args.cycles,
            threshold: args.threshold,
            seed: args.seed,
            aggregation: if args.per_run_max {
                RunAggregation::PerRunMax
            } else {
                RunAggregation::Pooled
            },
        },
        seed: args.seed,
    };
    let (records, coverage) = run_campaign(&pairs, &params, &cfg)?;
    let payload = serde_json::json!({
        "designs": args.designs,
        "checkpoint": args.checkpoint,
        "config": cfg,
        "records": records,
        "coverage": coverage,
    });
    write_json(&args.out, &payload)?;
    print!("{}", render_coverage_text(&coverage));
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.results)?;
    let payload: serde_json::Value = serde_json::from_str(&text)?;
    let records: Vec<CampaignRecord> = serde_json::from_value(
        payload
            .get("records")
            .cloned()
            .ok_or_else(|| anyhow::anyhow!("results file has no `records` field"))?,
    )?;
    let coverage = compute_coverage(&records)?;
    println!("source digest sha256:{}", sha256_hex(text.as_bytes()));
    print!("{}", render_coverage_text(&coverage));
    if let Some(path) = &args.json {
        write_json(path, &coverage)?;
    }
    Ok(())
}
