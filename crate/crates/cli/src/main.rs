//! `kecg`: synthetic data, feature extraction, EDMD fits, training and the
//! five-system comparison from the command line.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use koopman_ecg::koopman::{
    edmd_fit, mode_amplitudes, predict_anchored, reconstruction_error, reconstruction_target, KoopmanModel,
};
use koopman_ecg::models::checkpoint;
use koopman_ecg::models::{evaluate, train::write_history_csv, Sample};
use koopman_ecg::pipeline::plots::{emit_eigen_plot, emit_mode_heatmap, emit_reconstruction_overlay};
use koopman_ecg::pipeline::report::{render_table, write_reports};
use koopman_ecg::pipeline::systems::{encode_records, train_one, Input};
use koopman_ecg::pipeline::{
    ablation::write_ablation_csv, compare, load_dataset, run_ablation, split_dataset, synthetic_dataset, Dataset,
    DatasetSplit, ExperimentConfig, FeatureKind, FeatureSpec, Standardizer, System, Task,
};
use koopman_ecg::{Error, Exec};

#[derive(Parser)]
#[command(name = "kecg", version, about = "Koopman and wavelet ECG rhythm classification")]
struct Cli {
    /// JSON experiment config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset directory with labels.csv. Without it the configured
    /// synthetic set is generated in memory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed override; which seed it replaces depends on the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "four")]
    task: Task,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset (seed: generator base seed).
    Synth,
    /// Per-window feature CSV (seed: RBF center seed).
    Features {
        #[arg(long, default_value = "koopman")]
        kind: FeatureKind,
    },
    /// Fit EDMD to one window; writes the model JSON and its figures
    /// (seed: RBF center seed).
    FitKoopman(WindowArgs),
    /// Train one system on the train split and save a checkpoint
    /// (seed: training seed).
    Train {
        #[arg(long, default_value = "KoopmanTx")]
        system: System,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// All five systems over every run seed (seed: first run seed).
    Compare,
    /// EDMD hyperparameter grid on train/validation (seed: cell seed).
    Ablate,
    /// Figures for a saved EDMD model JSON.
    Plot {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
    },
}

#[derive(Args, Clone)]
struct WindowArgs {
    /// Record file name as listed in the dataset; defaults to the first.
    #[arg(long)]
    record: Option<String>,
    /// Window index within the record.
    #[arg(long, default_value_t = 0)]
    window: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidParameter(_) => 2,
        Error::Data(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::TooShort { .. }
        | Error::DegenerateInput(_)
        | Error::DimensionMismatch { .. }
        | Error::Underdetermined { .. }
        | Error::NonFinite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

type Result<T> = koopman_ecg::Result<T>;

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        match cli.command {
            Command::Synth => cfg.synth.seed = seed,
            Command::Features { .. } | Command::FitKoopman(_) => cfg.koopman.dictionary.center_seed = seed,
            Command::Train { .. } => cfg.train.seed = seed,
            Command::Compare => {
                let n = cfg.run_seeds.len() as u64;
                cfg.run_seeds = (seed..seed + n).collect();
            }
            Command::Ablate => cfg.ablation.seed = seed,
            Command::Eval { .. } | Command::Plot { .. } => {}
        }
    }
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)?;
    let ctx = Ctx { cli, cfg, exec, out };
    match &cli.command {
        Command::Synth => ctx.synth(),
        Command::Features { kind } => ctx.features(*kind),
        Command::FitKoopman(w) => ctx.fit_koopman(w),
        Command::Train { system } => ctx.train(*system),
        Command::Eval { checkpoint } => ctx.eval(checkpoint),
        Command::Compare => ctx.compare(),
        Command::Ablate => ctx.ablate(),
        Command::Plot { model, window } => ctx.plot(model, window),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: ExperimentConfig,
    exec: Exec,
    out: &'a Path,
}

impl Ctx<'_> {
    fn dataset(&self) -> Result<Dataset> {
        let ds = match &self.cli.data {
            Some(dir) => load_dataset(dir, self.cli.task, &self.cfg, self.exec)?,
            None => {
                log::info!("no --data given; generating the synthetic set in memory");
                synthetic_dataset(self.cli.task, &self.cfg, self.exec)?
            }
        };
        log::info!("{} records, {} excluded, task {}", ds.records.len(), ds.excluded, ds.task);
        Ok(ds)
    }

    fn split(&self, ds: &Dataset) -> Result<DatasetSplit> {
        split_dataset(&ds.labels(), ds.n_classes(), self.cfg.split.ratios, self.cfg.split.seed)
            .map_err(|e| Error::Data(e.to_string()))
    }

    fn spec(&self, kind: FeatureKind) -> FeatureSpec {
        FeatureSpec {
            kind,
            koopman: self.cfg.koopman,
            wavelet: self.cfg.wavelet,
            fs: self.cfg.fs,
        }
    }

    fn synth(&self) -> Result<()> {
        let entries = koopman_ecg::pipeline::dataset::write_synthetic(self.out, &self.cfg)?;
        println!("wrote {} records to {}", entries.len(), self.out.display());
        Ok(())
    }

    fn features(&self, kind: FeatureKind) -> Result<()> {
        let ds = self.dataset()?;
        let spec = self.spec(kind);
        let recs: Vec<_> = ds.records.iter().collect();
        let seqs = koopman_ecg::pipeline::features::sequences(&recs, &spec, self.exec)?;
        let path = self.out.join(format!("features_{kind}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
        let mut header = vec!["file".to_string(), "label".into(), "window".into()];
        header.extend(spec.names());
        w.write_record(&header).map_err(Error::from)?;
        for (r, m) in ds.records.iter().zip(&seqs) {
            for i in 0..m.rows {
                let mut row = vec![r.file.clone(), r.label.to_string(), i.to_string()];
                row.extend(m.row(i).iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(Error::from)?;
            }
        }
        w.flush()?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn window(&self, args: &WindowArgs) -> Result<(String, Vec<f64>)> {
        let ds = self.dataset()?;
        let rec = match &args.record {
            Some(name) => ds
                .records
                .iter()
                .find(|r| &r.file == name)
                .ok_or_else(|| Error::Data(format!("record `{name}` not in dataset")))?,
            None => &ds.records[0],
        };
        let w = rec.windows.windows.get(args.window).ok_or_else(|| {
            Error::Data(format!("{} has {} windows, asked for {}", rec.file, rec.windows.len(), args.window))
        })?;
        Ok((rec.file.clone(), w.clone()))
    }

    fn figures(&self, model: &KoopmanModel, window: &[f64]) -> Result<()> {
        emit_eigen_plot(model, &self.out.join("eigenvalues.svg"))?;
        let target = reconstruction_target(model, window);
        let recon = predict_anchored(model, window, 1)?;
        emit_reconstruction_overlay(&target, &recon, self.cfg.fs, &self.out.join("reconstruction.svg"))?;
        match mode_amplitudes(model, window, target.len()) {
            Ok(a) => emit_mode_heatmap(&a, &self.out.join("modes.svg"))?,
            Err(e) => log::warn!("mode heatmap skipped: {e}"),
        }
        let err = reconstruction_error(&target, &recon)?;
        println!(
            "rank {} of {}, one-step NRMSE {:.4}, figures in {}",
            model.rank,
            model.dict_size(),
            err.nrmse,
            self.out.display()
        );
        Ok(())
    }

    fn fit_koopman(&self, args: &WindowArgs) -> Result<()> {
        let (file, w) = self.window(args)?;
        let model = edmd_fit(&w, self.cfg.fs, self.cfg.koopman.dictionary, self.cfg.koopman.fit)?;
        let path = self.out.join("koopman_model.json");
        model.save(&path)?;
        println!("fitted {file} window {} -> {}", args.window, path.display());
        self.figures(&model, &w)
    }

    fn plot(&self, model_path: &Path, args: &WindowArgs) -> Result<()> {
        let model = KoopmanModel::load(model_path)?;
        let (_, w) = self.window(args)?;
        self.figures(&model, &w)
    }

    fn train(&self, system: System) -> Result<()> {
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let input = Input::for_system(system, &self.cfg, self.cfg.koopman);
        let tr = encode_records(&input, &ds.select(&split.train), self.exec)?;
        let va = encode_records(&input, &ds.select(&split.val), self.exec)?;
        let trained = train_one(&input, &tr, &va, ds.n_classes(), &self.cfg, &self.cfg.train)?;
        let mut meta = BTreeMap::new();
        meta.insert("system".into(), serde_json::Value::from(system.name()));
        meta.insert("task".into(), serde_json::Value::from(ds.task.name()));
        meta.insert("class_names".into(), json(&ds.class_names));
        meta.insert("features".into(), json(&trained.features));
        meta.insert("standardizer".into(), json(&trained.standardizer));
        meta.insert("train".into(), json(&self.cfg.train));
        meta.insert("best_epoch".into(), serde_json::Value::from(trained.report.best_epoch));
        let path = self.out.join("model.json");
        checkpoint::save(&trained.model, meta, &path)?;
        write_history_csv(&self.out.join("history.csv"), &trained.report.history)?;
        let val = trained.evaluate(&va)?;
        println!(
            "{system}: best epoch {}, validation macro-F1 {:.4}; checkpoint {}",
            trained.report.best_epoch,
            val.macro_f1,
            path.display()
        );
        Ok(())
    }

    fn eval(&self, path: &Path) -> Result<()> {
        let (model, manifest) = checkpoint::load(path)?;
        let field = |k: &str| manifest.metadata.get(k).cloned().unwrap_or(serde_json::Value::Null);
        let bad = |k: &str, e: serde_json::Error| Error::Data(format!("checkpoint metadata `{k}`: {e}"));
        let features: Option<FeatureSpec> = serde_json::from_value(field("features")).map_err(|e| bad("features", e))?;
        let standardizer: Option<Standardizer> =
            serde_json::from_value(field("standardizer")).map_err(|e| bad("standardizer", e))?;
        let task: Option<String> = serde_json::from_value(field("task")).map_err(|e| bad("task", e))?;
        if let Some(t) = task.filter(|t| t != self.cli.task.name()) {
            return Err(Error::Config(format!("checkpoint was trained for task {t}, got --task {}", self.cli.task)));
        }
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let input = features.map_or(Input::Raw, Input::Features);
        let mut te = encode_records(&input, &ds.select(&split.test), self.exec)?;
        if let Some(s) = &standardizer {
            s.apply_all(&mut te.x);
        }
        let samples: Vec<Sample> = te.x.into_iter().zip(te.y).map(|(x, label)| Sample { x, label }).collect();
        let (loss, metrics) = evaluate(&model, &samples)?;
        let result = serde_json::json!({
            "test_loss": loss,
            "macro_f1": metrics.macro_f1,
            "accuracy": metrics.accuracy,
            "per_class_f1": metrics.per_class.iter().map(|c| c.f1).collect::<Vec<_>>(),
            "confusion": metrics.confusion.counts,
        });
        let out = self.out.join("eval.json");
        std::fs::write(&out, serde_json::to_string_pretty(&result)?)?;
        println!("test macro-F1 {:.4}, loss {loss:.4} ({} records) -> {}", metrics.macro_f1, samples.len(), out.display());
        Ok(())
    }

    fn compare(&self) -> Result<()> {
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let reports = compare(&ds, &split, &self.cfg, self.exec)?;
        write_reports(self.out, &reports)?;
        let table = render_table(&reports);
        std::fs::write(self.out.join("table.md"), &table)?;
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(table.as_bytes())?;
        Ok(())
    }

    fn ablate(&self) -> Result<()> {
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let result = run_ablation(
            &self.cfg.ablation,
            &ds.select(&split.train),
            &ds.select(&split.val),
            ds.n_classes(),
            &self.cfg,
            self.exec,
        )?;
        let path = self.out.join("ablation.csv");
        write_ablation_csv(&path, &result)?;
        let w = result.winner();
        println!(
            "winner delay {} centers {} sigma {} rank {}: validation macro-F1 {:.4} ({} cells) -> {}",
            w.point.delay,
            w.point.rbf_centers,
            w.point.rbf_sigma,
            w.point.svd_rank,
            w.val_macro_f1,
            result.cells.len(),
            path.display()
        );
        Ok(())
    }
}

fn json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("metadata serializes")
}
