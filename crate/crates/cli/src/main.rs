//! `ctm`: compress, calibrate a compression-time model, and predict with it.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ctm_core::calibration::{
    default_eb_grid, fit_all_with_system, load_model, run_sweep, save_model, write_records_csv, CalibrationPlan,
    DEFAULT_SYSTEM_REPEATS,
};
use ctm_core::codec::{compress, decompress_bytes, DEFAULT_QUANT_RADIUS, DEFAULT_SAMPLE_RATE};
use ctm_core::data_io::{load_raw, parse_dims, synth_field, write_csv, write_raw, DatasetManifest, Dtype, SynthKind};
use ctm_core::time_model::TimeModel;
use ctm_core::tools::{evaluate_field, evaluation_table, predict_with_ci, search_eb, select_predictor, BITRATE_BAND};
use ctm_core::uncertainty::repeat_times;
use ctm_core::{CompressionConfig, Error, ErrorClass, Lossless, Predictor, ScalarField};

#[derive(Parser, Debug)]
#[command(name = "ctm", version, about = "Error-bounded compressor with compression-time prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a raw array and report stage timings
    Compress(CompressArgs),
    /// Decompress an archive to a raw array
    Decompress(DecompressArgs),
    /// Sweep error bounds over the manifest fields and fit a model
    Calibrate(CalibrateArgs),
    /// Predict compression time with a 95% confidence interval
    Predict(PredictArgs),
    /// Compare predictions against measured compressions
    Evaluate(EvaluateArgs),
    /// Pick a predictor: fastest among those within 5% of the best estimated bitrate, ties to lorenzo
    SelectPredictor(SelectArgs),
    /// Find the smallest error bound whose predicted time meets a target
    SearchEb(SearchArgs),
    /// Write a synthetic field as a raw array
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Headerless little-endian array
    #[arg(long)]
    input: PathBuf,
    /// Extents, slowest first, e.g. 512,512,512
    #[arg(long)]
    dims: String,
    /// f32le or f64le
    #[arg(long, default_value = "f32le")]
    dtype: Dtype,
}

impl InputArgs {
    fn load(&self) -> ctm_core::Result<ScalarField> {
        let dims = parse_dims(&self.dims)?;
        load_raw(&self.input, &dims, self.dtype)
    }
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Absolute error bound
    #[arg(long)]
    eb: f64,
    #[arg(long, default_value = "lorenzo")]
    predictor: Predictor,
    #[arg(long, default_value = "lz")]
    lossless: Lossless,
    #[arg(long, default_value_t = DEFAULT_QUANT_RADIUS)]
    quant_radius: u32,
    /// Archive path
    #[arg(long)]
    out: PathBuf,
    /// Append a row of stage timings (created with a header if missing)
    #[arg(long)]
    timing_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecompressArgs {
    /// Archive path
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "f64le")]
    dtype: Dtype,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// CSV with columns path,dims,dtype,name
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated, strictly decreasing (default: 12 log-spaced bounds from 1e-1 to 1e-6)
    #[arg(long, value_delimiter = ',')]
    eb_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "lorenzo,interpolation")]
    predictors: Vec<Predictor>,
    /// Compressions per cell, at least 3; the per-stage median is kept
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    records_csv: Option<PathBuf>,
    #[arg(long, default_value = "lz")]
    lossless: Lossless,
    #[arg(long, default_value_t = DEFAULT_QUANT_RADIUS)]
    quant_radius: u32,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: f64,
    /// Back-to-back runs on the first field for system noise; 0 uses the per-cell repeats only
    #[arg(long, default_value_t = DEFAULT_SYSTEM_REPEATS)]
    system_repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Machine label stored in the model (default: hostname)
    #[arg(long)]
    machine: Option<String>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sampling seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    eb: f64,
    #[arg(long, default_value = "lorenzo")]
    predictor: Predictor,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated (default: the model's calibration grid)
    #[arg(long, value_delimiter = ',')]
    eb_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "lorenzo,interpolation")]
    predictors: Vec<Predictor>,
    /// Compressions per cell; the per-stage median is compared
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Summary table (stdout if omitted)
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Per-cell predictions and measurements
    #[arg(long)]
    cells_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    eb: f64,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    target_seconds: f64,
    #[arg(long, default_value = "lorenzo")]
    predictor: Predictor,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1e-6)]
    eb_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    eb_max: f64,
    /// Relative tolerance on the predicted time
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// smooth, banded, uniform_noise or constant
    #[arg(long)]
    kind: SynthKind,
    #[arg(long)]
    dims: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "f64le")]
    dtype: Dtype,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Model => 3,
            })
        }
    }
}

fn run(cmd: Command) -> ctm_core::Result<()> {
    match cmd {
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::SelectPredictor(a) => cmd_select(a),
        Command::SearchEb(a) => cmd_search(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn cmd_compress(a: CompressArgs) -> ctm_core::Result<()> {
    let cfg = CompressionConfig {
        predictor: a.predictor,
        eb: a.eb,
        quant_radius: a.quant_radius,
        lossless: a.lossless,
        sample_rate: DEFAULT_SAMPLE_RATE,
    };
    cfg.validate()?;
    let field = a.input.load()?;
    let (archive, t, m) = compress(&field, &cfg)?;
    std::fs::write(&a.out, archive.to_bytes()).map_err(|e| io_err(&a.out, e))?;
    if let Some(path) = &a.timing_csv {
        let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        let mut text = String::new();
        if fresh {
            text.push_str("t_pq,t_freq_book,t_encode,t_lossless,t_total\n");
        }
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            t.t_pq, t.t_freq_book, t.t_encode, t.t_lossless, t.t_total
        ));
        f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    }
    println!(
        "n={} final_size={} bitrate={} encoded_size={} outliers={} n1={} n2={} n3={} t_pq={} t_freq_book={} t_encode={} t_lossless={} t_total={}",
        m.n,
        m.final_size,
        m.bitrate,
        m.encoded_size,
        m.outlier_count,
        m.case_counts.n1,
        m.case_counts.n2,
        m.case_counts.n3,
        t.t_pq,
        t.t_freq_book,
        t.t_encode,
        t.t_lossless,
        t.t_total
    );
    Ok(())
}

fn cmd_decompress(a: DecompressArgs) -> ctm_core::Result<()> {
    let bytes = std::fs::read(&a.input).map_err(|e| io_err(&a.input, e))?;
    let field = decompress_bytes(&bytes)?;
    write_raw(&field, &a.out, a.dtype)?;
    let dims: Vec<String> = field.dims().iter().map(|d| d.to_string()).collect();
    println!("n={} dims={}", field.len(), dims.join(","));
    Ok(())
}

fn load_manifest_fields(path: &Path) -> ctm_core::Result<Vec<ScalarField>> {
    let manifest = DatasetManifest::load(path)?;
    if manifest.entries.is_empty() {
        return Err(Error::Manifest(format!("{} lists no fields", path.display())));
    }
    manifest.entries.iter().map(|e| e.load()).collect()
}

fn cmd_calibrate(a: CalibrateArgs) -> ctm_core::Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let mut plan = CalibrationPlan::new(manifest.entries.iter().map(|e| e.name.clone()).collect());
    plan.eb_grid = a.eb_grid.unwrap_or_else(default_eb_grid);
    plan.predictors = a.predictors;
    plan.repeats = a.repeats;
    plan.base = CompressionConfig {
        quant_radius: a.quant_radius,
        lossless: a.lossless,
        sample_rate: a.sample_rate,
        ..CompressionConfig::default()
    };
    plan.seed = a.seed;
    if let Some(m) = a.machine {
        plan.machine = m;
    }
    if a.system_repeats != 0 && a.system_repeats < 5 {
        return Err(Error::InvalidConfig("system repeats must be 0 or at least 5".into()));
    }
    plan.validate()?;
    let records = run_sweep(&plan, |name| {
        manifest
            .entries
            .iter()
            .find(|e| e.name == name)
            .expect("plan built from manifest")
            .load()
    })?;
    let system_times = if a.system_repeats > 0 {
        let first = manifest.entries[0].load()?;
        let eb = plan.eb_grid[plan.eb_grid.len() / 2];
        Some(repeat_times(&first, &plan.base.with_eb(eb).with_predictor(plan.predictors[0]), a.system_repeats)?)
    } else {
        None
    };
    let (model, unc) = fit_all_with_system(&records, &plan.machine, system_times.as_deref())?;
    save_model(&model, &unc, &a.model_out)?;
    if let Some(p) = &a.records_csv {
        write_records_csv(&records, p)?;
    }
    println!(
        "records={} case_variant={} sigma_a={} sigma_s={} sigma={} model={}",
        records.len(),
        model.case_variant,
        unc.algo.sigma,
        unc.sys.sigma,
        unc.combined.sigma,
        a.model_out.display()
    );
    Ok(())
}

fn model_config(model: &TimeModel, predictor: Predictor, eb: f64) -> ctm_core::Result<CompressionConfig> {
    let cal = &model.calibration;
    let cfg = CompressionConfig {
        predictor,
        eb,
        quant_radius: cal.quant_radius,
        lossless: cal.lossless,
        sample_rate: cal.sample_rate,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_predict(a: PredictArgs) -> ctm_core::Result<()> {
    let (model, unc) = load_model(&a.model.model)?;
    let cfg = model_config(&model, a.predictor, a.eb)?;
    let field = a.input.load()?;
    let r = predict_with_ci(&field, &cfg, &model, &unc, a.model.seed)?;
    println!("{r}");
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> ctm_core::Result<()> {
    let (model, unc) = load_model(&a.model.model)?;
    let grid = a.eb_grid.unwrap_or_else(|| model.calibration.eb_grid.clone());
    let base = model_config(&model, Predictor::Lorenzo, grid.first().copied().unwrap_or(1e-3))?;
    let mut cells = Vec::new();
    for field in load_manifest_fields(&a.manifest)? {
        cells.extend(evaluate_field(
            &field,
            &base,
            &grid,
            &a.predictors,
            &model,
            &unc,
            a.repeats,
            a.model.seed,
        )?);
    }
    let table = evaluation_table(&cells, &unc);
    match &a.out_csv {
        Some(p) => write_csv(&table, p)?,
        None => print!("{}", table.to_csv_string()?),
    }
    if let Some(p) = &a.cells_csv {
        let mut t = ctm_core::data_io::Table::new([
            "field", "eb", "predictor", "pred_t1", "pred_t2", "pred_t3", "pred_t4", "pred_total", "ci_low",
            "ci_high", "t_pq", "t_freq_book", "t_encode", "t_lossless", "t_total",
        ]);
        for c in &cells {
            let p = &c.predicted;
            let m = &c.actual;
            t.push(vec![
                c.field.as_str().into(),
                c.config.eb.into(),
                c.config.predictor.as_str().into(),
                p.t1.into(),
                p.t2.into(),
                p.t3.into(),
                p.t4.into(),
                p.t_total.into(),
                p.ci_low.into(),
                p.ci_high.into(),
                m.t_pq.into(),
                m.t_freq_book.into(),
                m.t_encode.into(),
                m.t_lossless.into(),
                m.t_total.into(),
            ]);
        }
        write_csv(&t, p)?;
    }
    Ok(())
}

fn cmd_select(a: SelectArgs) -> ctm_core::Result<()> {
    let (model, unc) = load_model(&a.model.model)?;
    let cfg = model_config(&model, Predictor::Lorenzo, a.eb)?;
    let field = a.input.load()?;
    let sel = select_predictor(&field, &cfg, &model, &unc, a.model.seed)?;
    for r in &sel.reports {
        println!(
            "predictor={} t_total={} ci_low={} ci_high={} est_bitrate={}",
            r.predictor, r.t_total, r.ci_low, r.ci_high, r.est_bitrate
        );
    }
    println!("chosen={} rule=fastest_within_{}pct_of_best_bitrate", sel.chosen, BITRATE_BAND * 100.0);
    Ok(())
}

fn cmd_search(a: SearchArgs) -> ctm_core::Result<()> {
    let (model, unc) = load_model(&a.model.model)?;
    let cfg = model_config(&model, a.predictor, a.eb_max)?;
    let field = a.input.load()?;
    let r = search_eb(&field, &cfg, &model, a.target_seconds, a.eb_min, a.eb_max, a.tol, a.model.seed)?;
    let (lo, hi) = unc.confidence_interval(r.predicted, ctm_core::tools::CI_LEVEL)?;
    println!(
        "eb={} predicted={} ci_low={} ci_high={} iterations={} feasible={}",
        r.eb, r.predicted, lo, hi, r.iterations, r.feasible
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> ctm_core::Result<()> {
    let dims = parse_dims(&a.dims)?;
    let field = synth_field(a.kind, &dims, a.seed)?;
    write_raw(&field, &a.out, a.dtype)?;
    println!("n={} name={}", field.len(), field.name());
    Ok(())
}
