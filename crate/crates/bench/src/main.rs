mod cli;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::Parser;
use drgd_core::bench::{
    ablate_layers, ablation_table, compare, emit_report, evaluate_warm_start, ReportFormat, Table,
};
use drgd_core::datagen::{generate, label_bundle, read_bundle, split_bundle, write_bundle, DatasetBundle, GenSpec};
use drgd_core::net::{load_checkpoint, save_checkpoint, train, Checkpoint, InitScheme, LrFallback, TrainConfig};
use drgd_core::solver::SolverConfig;

use cli::{merge, Cli, Command, GlobalFile, NetArgs, SolverArgs};

/// A failure attributable to how the program was invoked.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

const DEFAULT_LABEL_TOL: f64 = 1e-9;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

struct Ctx {
    out: PathBuf,
    format: ReportFormat,
    jobs: usize,
    file: Option<toml::Table>,
}

impl Ctx {
    fn args<T: serde::Serialize + serde::de::DeserializeOwned>(&self, cli: &T) -> anyhow::Result<T> {
        merge(cli, self.file.as_ref()).map_err(usage)
    }

    fn bundle_dir(&self, given: &Option<PathBuf>) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.clone())
    }

    fn emit(&self, table: &Table, stem: &str) -> anyhow::Result<PathBuf> {
        let path = self.out.join(format!("{stem}.{}", self.format.extension()));
        emit_report(table, self.format, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(|e| usage(format!("{e:#}")))?;
            Some(text.parse::<toml::Table>().map_err(|e| usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let global: GlobalFile = merge(&GlobalFile { format: cli.format, jobs: cli.jobs }, file.as_ref()).map_err(usage)?;
    let jobs = global.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
    let ctx = Ctx { out: cli.out, format: global.format.unwrap_or_default(), jobs, file };

    match &cli.command {
        Command::Generate(a) => cmd_generate(&ctx, &ctx.args(a)?),
        Command::Label(a) => cmd_label(&ctx, &ctx.args(a)?),
        Command::Split(a) => cmd_split(&ctx, &ctx.args(a)?),
        Command::Compare(a) => cmd_compare(&ctx, &ctx.args(a)?),
        Command::Train(a) => cmd_train(&ctx, &ctx.args(a)?),
        Command::Eval(a) => cmd_eval(&ctx, &ctx.args(a)?),
        Command::Ablate(a) => cmd_ablate(&ctx, &ctx.args(a)?),
    }
}

fn triple(v: Vec<usize>) -> anyhow::Result<(usize, usize, usize)> {
    match v[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(usage(format!("split needs three sizes, got {}", v.len()))),
    }
}

fn load(dir: &Path) -> anyhow::Result<DatasetBundle> {
    read_bundle(dir).with_context(|| format!("reading bundle {}", dir.display()))
}

fn save(dir: &Path, b: &DatasetBundle) -> anyhow::Result<()> {
    write_bundle(dir, b).with_context(|| format!("writing bundle {}", dir.display()))
}

fn cmd_generate(ctx: &Ctx, a: &cli::GenerateArgs) -> anyhow::Result<()> {
    let family = a.family.ok_or_else(|| usage("generate needs --family"))?;
    let d = GenSpec::default();
    let spec = GenSpec {
        family,
        size: a.n.or(a.k).unwrap_or(d.size),
        count: a.count.unwrap_or(d.count),
        seed: a.seed.unwrap_or(d.seed),
        perturbation: a.perturbation.unwrap_or(d.perturbation),
        margin: a.margin.unwrap_or(d.margin),
    };
    let mut bundle = generate(&spec).map_err(|e| match e {
        drgd_core::datagen::DataError::InvalidSpec(m) => usage(m),
        e => e.into(),
    })?;
    if let Some(s) = &a.split {
        bundle = split_bundle(bundle, triple(s.values().map_err(usage)?)?, spec.seed).map_err(|e| usage(e.to_string()))?;
    }
    if a.label {
        let (b, report) = label_bundle(bundle, a.tol.unwrap_or(DEFAULT_LABEL_TOL))?;
        if !report.excluded.is_empty() {
            eprintln!("excluded {} unconverged instances: {:?}", report.excluded.len(), report.excluded);
        }
        bundle = b;
    }
    save(&ctx.out, &bundle)?;
    println!("wrote {} {} instances to {}", bundle.len(), spec.family, ctx.out.display());
    Ok(())
}

fn cmd_label(ctx: &Ctx, a: &cli::LabelArgs) -> anyhow::Result<()> {
    let dir = ctx.bundle_dir(&a.bundle);
    let (bundle, report) = label_bundle(load(&dir)?, a.tol.unwrap_or(DEFAULT_LABEL_TOL))?;
    save(&dir, &bundle)?;
    let mean = report.iterations.iter().sum::<usize>() as f64 / report.iterations.len().max(1) as f64;
    println!("labeled {} instances (mean {mean:.0} iterations), excluded {:?}", bundle.len(), report.excluded);
    Ok(())
}

fn cmd_split(ctx: &Ctx, a: &cli::SplitArgs) -> anyhow::Result<()> {
    let dir = ctx.bundle_dir(&a.bundle);
    let sizes = triple(a.sizes.as_ref().ok_or_else(|| usage("split needs --sizes"))?.values().map_err(usage)?)?;
    let bundle = split_bundle(load(&dir)?, sizes, a.seed.unwrap_or(0)).map_err(|e| usage(e.to_string()))?;
    save(&dir, &bundle)?;
    println!("split {} instances into {sizes:?}", bundle.len());
    Ok(())
}

fn solver_config(a: &SolverArgs) -> anyhow::Result<SolverConfig> {
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        tol: a.tol.unwrap_or(d.tol),
        max_iter: a.max_iter.unwrap_or(d.max_iter),
        record_history: a.history,
        ..d
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_compare(ctx: &Ctx, a: &cli::CompareArgs) -> anyhow::Result<()> {
    let bundle = load(&ctx.bundle_dir(&a.bundle))?;
    let cfg = solver_config(&a.solver)?;
    let steps = match &a.steps {
        Some(s) => s.values().map_err(usage)?,
        None => vec![1, 2, 5, 10],
    };
    let report = compare(&bundle, &cfg, &steps, ctx.jobs)?;
    let summary = report.summary_table();
    print!("{}", summary.to_markdown());
    println!();
    print!("{}", report.multistep_table().to_markdown());
    ctx.emit(&summary, "compare_summary")?;
    ctx.emit(&report.instance_table(), "compare_instances")?;
    ctx.emit(&report.multistep_table(), "compare_multistep")?;
    if cfg.record_history {
        emit_report(&report.dr_history_table(), ReportFormat::Csv, &ctx.out.join("residuals_dr.csv"))?;
        emit_report(&report.drgd_history_table(), ReportFormat::Csv, &ctx.out.join("residuals_drgd.csv"))?;
    }
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        bail!("{failed} of {} instances failed; see compare_instances", report.rows.len());
    }
    Ok(())
}

fn train_config(a: &NetArgs, layers: usize) -> anyhow::Result<TrainConfig> {
    let d = TrainConfig::default();
    let init = match a.init.as_deref() {
        None | Some("algorithm") => InitScheme::default(),
        Some("random") => InitScheme::Random,
        Some(o) => return Err(usage(format!("unknown init {o:?} (expected algorithm or random)"))),
    };
    let lr_fallback = match (a.fallback_lr, a.fallback_after) {
        (None, None) => None,
        (lr, after) => Some(LrFallback { learning_rate: lr.unwrap_or(1e-4), after_epochs: after.unwrap_or(3) }),
    };
    let cfg = TrainConfig {
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        batch_size: a.batch.unwrap_or(d.batch_size),
        max_epochs: a.max_epochs.unwrap_or(d.max_epochs),
        patience: a.patience.unwrap_or(d.patience),
        seed: a.seed.unwrap_or(d.seed),
        eta_prior: a.eta_prior.unwrap_or(d.eta_prior),
        unroll_steps: a.unroll.unwrap_or(d.unroll_steps),
        layers,
        d: a.embed.unwrap_or(d.d),
        init,
        lr_fallback,
        ..d
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn require_labels(bundle: &DatasetBundle) -> anyhow::Result<()> {
    if bundle.labels.is_none() {
        bail!("bundle has no labels; run `label` (label_bundle) first");
    }
    if bundle.split.is_none() {
        bail!("bundle has no split; run `split` first");
    }
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &cli::TrainArgs) -> anyhow::Result<()> {
    let bundle = load(&ctx.bundle_dir(&a.bundle))?;
    require_labels(&bundle)?;
    let cfg = train_config(&a.net, a.layers.unwrap_or(TrainConfig::default().layers))?;
    let out = train(&bundle, &cfg, |e, _| {
        eprintln!("epoch {:>4}  train {:.6e}  val {:.6e}  lr {:e}", e.epoch, e.train_loss, e.val_loss, e.lr)
    })?;
    fs::create_dir_all(&ctx.out)?;
    let ckpt_path = a.checkpoint.clone().unwrap_or_else(|| ctx.out.join("checkpoint.json"));
    save_checkpoint(&Checkpoint { params: out.params.clone(), unroll_steps: cfg.unroll_steps }, &ckpt_path)?;
    let log_path = ctx.out.join("train_log.csv");
    out.write_log_csv(&log_path).with_context(|| format!("writing {}", log_path.display()))?;
    println!(
        "trained {} epochs, best epoch {}, checkpoint {}",
        out.log.len(),
        out.best_epoch.map_or("none (initial parameters kept)".into(), |e| e.to_string()),
        ckpt_path.display()
    );
    Ok(())
}

fn cmd_eval(ctx: &Ctx, a: &cli::EvalArgs) -> anyhow::Result<()> {
    let bundle = load(&ctx.bundle_dir(&a.bundle))?;
    let test = bundle.split().map_err(|_| anyhow!("bundle has no split; run `split` first"))?.test.clone();
    let ckpt_path = a.checkpoint.clone().unwrap_or_else(|| ctx.out.join("checkpoint.json"));
    let ckpt = load_checkpoint(&ckpt_path)?;
    let cfg = solver_config(&a.solver)?;
    let report = evaluate_warm_start(&bundle, &test, &ckpt.params, ckpt.unroll_steps, &cfg)?;
    print!("{}", report.summary_table().to_markdown());
    ctx.emit(&report.summary_table(), "eval_summary")?;
    ctx.emit(&report.instance_table(), "eval_instances")?;
    ctx.emit(&report.quality_table(), "eval_quality")?;
    if cfg.record_history {
        emit_report(&report.cold_history_table(), ReportFormat::Csv, &ctx.out.join("residuals_cold.csv"))?;
        emit_report(&report.warm_history_table(), ReportFormat::Csv, &ctx.out.join("residuals_warm.csv"))?;
    }
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        bail!("{failed} of {} instances failed; see eval_instances", report.rows.len());
    }
    Ok(())
}

fn cmd_ablate(ctx: &Ctx, a: &cli::AblateArgs) -> anyhow::Result<()> {
    let bundle = load(&ctx.bundle_dir(&a.bundle))?;
    require_labels(&bundle)?;
    let layers = match &a.layers {
        Some(l) => l.values().map_err(usage)?,
        None => vec![1, 2, 4],
    };
    if layers.is_empty() || layers.contains(&0) {
        return Err(usage("--layers needs positive counts"));
    }
    let cfg = train_config(&a.net, layers[0])?;
    let rows = ablate_layers(&bundle, &layers, &cfg, &solver_config(&a.solver)?)?;
    let table = ablation_table(&rows);
    print!("{}", table.to_markdown());
    ctx.emit(&table, "ablation")?;
    Ok(())
}
