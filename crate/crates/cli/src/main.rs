use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use tppgaze::analysis::{amplitude_histogram, duration_histogram, rf_distribution, AmplitudeUnit, Histogram};
use tppgaze::corpus::{load_volumes, Corpus};
use tppgaze::data::{
    preprocess, read_manifest, read_scanpaths, save_scanpaths, split_by_stimulus, Dataset, PreprocessOptions,
    Scanpath, ScanpathFormat, SplitFractions, Stimulus,
};
use tppgaze::eval::{evaluate, shared_histograms, EvalConfig, MetricKind};
use tppgaze::metrics::ScanMatchConfig;
use tppgaze::model::TppModel;
use tppgaze::params::{ModelConfig, ReadoutShape, TppConfig};
use tppgaze::plot::histogram_svg;
use tppgaze::saliency::{auc_judd, nss, saliency_from_fixations, saliency_kl, DEFAULT_SIGMA};
use tppgaze::sampler::{sample_ensemble, DEFAULT_MAX_FIXATIONS};
use tppgaze::seed::derive_seed;
use tppgaze::toy::{toy_dataset, write_toy_dataset, ToySpec};
use tppgaze::train::{save_history, train, StopReason, TrainConfig};
use tppgaze::{Error, Result};

#[derive(Parser)]
#[command(name = "tppgaze", version, about = "Train, sample and evaluate temporal point process scanpath models")]
struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write the checkpoint and training history.
    Train(TrainArgs),
    /// Generate scanpaths from a checkpoint.
    Sample(SampleArgs),
    /// Compare simulated with human scanpaths (KL of score distributions).
    Eval(EvalArgs),
    /// Build saliency maps from fixations and score them.
    Saliency(SaliencyArgs),
    /// Duration, amplitude and return-fixation statistics.
    Stats(StatsArgs),
    /// Write the synthetic toy dataset.
    Toy(ToyArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Stimulus manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Human scanpaths (JSONL or CSV).
    #[arg(long)]
    scanpaths: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory holding the feature volumes named in the manifest.
    #[arg(long)]
    features_dir: PathBuf,
    /// TOML file with [train], [model] and [data] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for model.tppg and history.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features_dir: PathBuf,
    /// Scanpaths per stimulus.
    #[arg(long, short = 'n', default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_FIXATIONS)]
    max_fixations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Simulated scanpaths (JSONL or CSV).
    #[arg(long)]
    sim: PathBuf,
    /// Comma-separated subset of mm, sm, ss, sed.
    #[arg(long, default_value = "mm,sm,ss,sed")]
    metrics: String,
    #[arg(long, default_value_t = 5)]
    sed_grid: usize,
    /// ScanMatch bins as LONGxSHORT.
    #[arg(long, default_value = "14x8")]
    sm_bins: String,
    #[arg(long, default_value_t = 20)]
    kl_bins: usize,
    /// Keep the first fixation and short human scanpaths.
    #[arg(long)]
    no_preprocess: bool,
    /// Output directory for report.csv and histogram SVGs.
    #[arg(long)]
    out: PathBuf,
    /// Print the report table to stdout.
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct SaliencyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    sim: PathBuf,
    /// Gaussian width in pixels.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long)]
    no_preprocess: bool,
    /// Output directory for maps (PGM) and saliency.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Optional simulated scanpaths to overlay.
    #[arg(long)]
    sim: Option<PathBuf>,
    #[arg(long, default_value_t = 50.0)]
    rf_radius: f64,
    #[arg(long, default_value_t = 10)]
    max_offset: usize,
    #[arg(long, default_value_t = 30)]
    bins: usize,
    #[arg(long)]
    no_preprocess: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    stimuli: usize,
    #[arg(long, default_value_t = 10)]
    observers: usize,
}

#[derive(Debug, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    train: TrainConfig,
    model: ModelDims,
    data: DataConfig,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelDims {
    d_img: usize,
    d_hist: usize,
    k: usize,
    g: usize,
    d_in: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        let t = TppConfig::default();
        ModelDims {
            d_img: t.d_img,
            d_hist: t.d_hist,
            k: t.k,
            g: t.g,
            d_in: t.d_in,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataConfig {
    train_fraction: f64,
    val_fraction: f64,
    min_fixations: usize,
    drop_first: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SplitFractions::default();
        let p = PreprocessOptions::default();
        DataConfig {
            train_fraction: s.train,
            val_fraction: s.val,
            min_fixations: p.min_fixations,
            drop_first: p.drop_first,
        }
    }
}

/// Failure carrying the exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn user_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Saliency(a) => cmd_saliency(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Toy(a) => cmd_toy(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_stimuli(manifest: &Path) -> CliResult<BTreeMap<String, Stimulus>> {
    if !manifest.is_file() {
        return Err(user_error(format!("manifest not found: {}", manifest.display())));
    }
    Ok(read_manifest(manifest)?)
}

fn load_scanpaths(path: &Path, what: &str) -> CliResult<Vec<Scanpath>> {
    if !path.is_file() {
        return Err(user_error(format!("{what} not found: {}", path.display())));
    }
    Ok(read_scanpaths(path, ScanpathFormat::from_path(path))?)
}

fn load_dataset(data: &DataArgs, opts: Option<PreprocessOptions>) -> CliResult<Dataset> {
    let stimuli = load_stimuli(&data.manifest)?;
    let sps = load_scanpaths(&data.scanpaths, "scanpath file")?;
    let d = Dataset::new(stimuli, sps)?;
    Ok(match opts {
        Some(o) => preprocess(&d, o),
        None => d,
    })
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::from(Error::Io {
        path: dir.to_path_buf(),
        source: e,
    }))
}

fn write_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult {
    let mut buf = Vec::new();
    write(&mut buf).and_then(|_| fs::write(path, &buf)).map_err(|e| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn read_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| user_error(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| user_error(format!("invalid config {}: {e}", path.display())))
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let cfg = read_config(a.config.as_deref())?;
    let opts = PreprocessOptions {
        min_fixations: cfg.data.min_fixations,
        drop_first: cfg.data.drop_first,
    };
    let dataset = load_dataset(&a.data, Some(opts))?;
    let volumes = load_volumes(&dataset.stimuli, &a.features_dir)?;
    let first = volumes
        .values()
        .next()
        .ok_or_else(|| user_error("manifest lists no stimuli"))?;
    let shape = ReadoutShape {
        height: first.height(),
        width: first.width(),
        channels: first.channels(),
    };
    if let Some((id, _)) = volumes
        .iter()
        .find(|(_, v)| (v.height(), v.width(), v.channels()) != (shape.height, shape.width, shape.channels))
    {
        return Err(user_error(format!("feature volume of {id} differs in shape from the others")));
    }
    let model_cfg = ModelConfig {
        tpp: TppConfig {
            d_img: cfg.model.d_img,
            d_hist: cfg.model.d_hist,
            k: cfg.model.k,
            g: cfg.model.g,
            d_in: cfg.model.d_in,
        },
        readout: shape,
    };
    let fractions = SplitFractions {
        train: cfg.data.train_fraction,
        val: cfg.data.val_fraction,
    };
    let [train_set, val_set, _] = split_by_stimulus(&dataset, fractions, derive_seed(a.seed, "split", 0));
    let train_corpus = Corpus::from_dataset(&train_set, &volumes)?;
    let val_corpus = Corpus::from_dataset(&val_set, &volumes)?;
    let train_cfg = TrainConfig {
        seed: derive_seed(a.seed, "shuffle", 0),
        ..cfg.train
    };
    let model = TppModel::init(model_cfg, derive_seed(a.seed, "init", 0))?;
    log::info!(
        "training on {} scanpaths ({} validation), {} parameters",
        train_corpus.sequences.len(),
        val_corpus.sequences.len(),
        model.flat().len()
    );
    let outcome = train(model, &train_corpus, Some(&val_corpus), &train_cfg)?;
    create_dir(&a.out)?;
    outcome.model.save(&a.out.join("model.tppg"))?;
    save_history(&a.out.join("history.csv"), &outcome.history)?;
    if let StopReason::Diverged { epoch } = outcome.stop {
        return Err(Failure {
            code: 1,
            message: format!(
                "training diverged in epoch {epoch}; saved the best model from epoch {}",
                outcome.best_epoch
            ),
        });
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> CliResult {
    let stimuli = load_stimuli(&a.manifest)?;
    let model = TppModel::load(&a.checkpoint)?;
    let volumes = load_volumes(&stimuli, &a.features_dir)?;
    let sps = sample_ensemble(&model, &stimuli, &volumes, a.n, a.seed, a.max_fixations)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_scanpaths(&a.out, &sps)?;
    Ok(())
}

fn parse_sm_bins(s: &str) -> CliResult<(usize, usize)> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    match parts.as_slice() {
        [l, s] => match (l.trim().parse(), s.trim().parse()) {
            (Ok(l), Ok(s)) => Ok((l, s)),
            _ => Err(user_error(format!("invalid --sm-bins {s:?}"))),
        },
        _ => Err(user_error(format!("invalid --sm-bins {s:?}; expected LONGxSHORT"))),
    }
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let opts = (!a.no_preprocess).then(PreprocessOptions::default);
    let real = load_dataset(&a.data, opts)?;
    let sim = load_scanpaths(&a.sim, "simulated scanpath file")?;
    if sim.is_empty() {
        return Err(user_error("no simulated scanpaths"));
    }
    let metrics = a
        .metrics
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<MetricKind>>>()?;
    let (bins_long, bins_short) = parse_sm_bins(&a.sm_bins)?;
    let cfg = EvalConfig {
        metrics,
        scanmatch: ScanMatchConfig {
            bins_long,
            bins_short,
            ..ScanMatchConfig::default()
        },
        sed_grid: a.sed_grid,
        kl_bins: a.kl_bins,
        ..EvalConfig::default()
    };
    let report = evaluate(&real.stimuli, &real.scanpaths, &sim, &cfg)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("report.csv"), |w| report.write_csv(w))?;
    for pair in &report.distributions {
        let (edges, p, q) = shared_histograms(pair, cfg.kl_bins)?;
        let svg = histogram_svg(&pair.metric_id, &edges, &[("human-human", &p), ("human-model", &q)]);
        write_file(&a.out.join(format!("{}.svg", pair.metric_id)), |w| w.write_all(svg.as_bytes()))?;
    }
    if a.pretty {
        print!("{}", report.pretty());
    }
    Ok(())
}

fn positions(sps: &[&Scanpath]) -> Vec<(f64, f64)> {
    sps.iter().flat_map(|s| s.positions()).collect()
}

fn cmd_saliency(a: SaliencyArgs) -> CliResult {
    let opts = (!a.no_preprocess).then(PreprocessOptions::default);
    let real = load_dataset(&a.data, opts)?;
    let sim = Dataset::new(real.stimuli.clone(), load_scanpaths(&a.sim, "simulated scanpath file")?)?;
    let real_by = real.by_stimulus();
    let sim_by = sim.by_stimulus();
    create_dir(&a.out)?;
    let mut csv = String::from("stimulus_id,kl,auc,nss\n");
    let mut sums = [0.0; 3];
    let mut n = 0usize;
    for (id, stim) in &real.stimuli {
        let (Some(h), Some(s)) = (real_by.get(id.as_str()), sim_by.get(id.as_str())) else {
            log::warn!("{id}: missing human or simulated scanpaths, skipped");
            continue;
        };
        let (hf, sf) = (positions(h), positions(s));
        if hf.is_empty() || sf.is_empty() {
            continue;
        }
        let shape = (stim.width as usize, stim.height as usize);
        let gt = saliency_from_fixations(&hf, shape, a.sigma)?;
        let pred = saliency_from_fixations(&sf, shape, a.sigma)?;
        let row = [saliency_kl(&pred, &gt)?, auc_judd(&pred, &hf)?, nss(&pred, &hf)?];
        csv.push_str(&format!("{id},{},{},{}\n", row[0], row[1], row[2]));
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
        n += 1;
        pred.save_pgm(&a.out.join(format!("{id}_model.pgm")))?;
        gt.save_pgm(&a.out.join(format!("{id}_human.pgm")))?;
    }
    if n == 0 {
        return Err(user_error("no stimulus has both human and simulated fixations"));
    }
    let m = sums.map(|s| s / n as f64);
    csv.push_str(&format!("mean,{},{},{}\n", m[0], m[1], m[2]));
    write_file(&a.out.join("saliency.csv"), |w| w.write_all(csv.as_bytes()))
}

fn write_hist(dir: &Path, name: &str, title: &str, series: &[(&str, Histogram)]) -> CliResult {
    for (label, h) in series {
        write_file(&dir.join(format!("{name}_{label}.csv")), |w| h.write_csv(w))?;
    }
    let refs: Vec<(&str, &[f64])> = series.iter().map(|(l, h)| (*l, h.density.as_slice())).collect();
    let svg = histogram_svg(title, &series[0].1.edges, &refs);
    write_file(&dir.join(format!("{name}.svg")), |w| w.write_all(svg.as_bytes()))
}

fn cmd_stats(a: StatsArgs) -> CliResult {
    let opts = (!a.no_preprocess).then(PreprocessOptions::default);
    let real = load_dataset(&a.data, opts)?;
    let mut groups = vec![("human", real.scanpaths.clone())];
    if let Some(p) = &a.sim {
        groups.push(("model", load_scanpaths(p, "simulated scanpath file")?));
    }
    create_dir(&a.out)?;
    let max_tau = groups
        .iter()
        .flat_map(|(_, s)| s.iter().flat_map(|sp| sp.durations()))
        .fold(0.0, f64::max);
    let max_amp = groups
        .iter()
        .flat_map(|(_, s)| tppgaze::analysis::saccade_amplitudes(s, AmplitudeUnit::Pixels))
        .fold(0.0, f64::max);
    let mut durs = Vec::new();
    let mut amps = Vec::new();
    let mut rf_csv = String::from("source,offset,count,frequency\n");
    let mut rate_csv = String::from("source,returns_per_scanpath\n");
    for (label, sps) in &groups {
        durs.push((*label, duration_histogram(sps, a.bins, (0.0, max_tau.max(1e-3)))?));
        amps.push((*label, amplitude_histogram(sps, a.bins, (0.0, max_amp.max(1.0)), AmplitudeUnit::Pixels)?));
        let rf = rf_distribution(sps, a.rf_radius, a.max_offset)?;
        for (i, (c, f)) in rf.counts.iter().zip(&rf.frequencies).enumerate() {
            rf_csv.push_str(&format!("{label},{},{c},{f}\n", i + 1));
        }
        rate_csv.push_str(&format!("{label},{}\n", rf.rate));
    }
    write_hist(&a.out, "durations", "fixation duration (s)", &durs)?;
    write_hist(&a.out, "amplitudes", "saccade amplitude (px)", &amps)?;
    write_file(&a.out.join("returns.csv"), |w| w.write_all(rf_csv.as_bytes()))?;
    write_file(&a.out.join("return_rate.csv"), |w| w.write_all(rate_csv.as_bytes()))?;
    let edges: Vec<f64> = (0..=a.max_offset).map(|i| i as f64 + 0.5).collect();
    let rf_series: Vec<(&str, Vec<f64>)> = groups
        .iter()
        .map(|(l, s)| Ok((*l, rf_distribution(s, a.rf_radius, a.max_offset)?.frequencies)))
        .collect::<Result<_>>()?;
    let refs: Vec<(&str, &[f64])> = rf_series.iter().map(|(l, v)| (*l, v.as_slice())).collect();
    let svg = histogram_svg("return offset", &edges, &refs);
    write_file(&a.out.join("returns.svg"), |w| w.write_all(svg.as_bytes()))
}

fn cmd_toy(a: ToyArgs) -> CliResult {
    let spec = ToySpec {
        n_stimuli: a.stimuli,
        n_observers: a.observers,
        seed: a.seed,
        ..ToySpec::default()
    };
    let data = toy_dataset(&spec)?;
    write_toy_dataset(&a.out, &data)?;
    Ok(())
}
