//! The five subcommands. Every file they write is a deterministic function
//! of the run configuration; synthetic runs watermark their filenames and
//! metadata.

use std::fs::{self, File};
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use wsn_anomaly::baseline::{predict_cart, train_cart, CartConfig, TreeNode};
use wsn_anomaly::encode::{
    encode_corpus, encode_window, export_pgm, fit_stats, GrayImage, NormStats,
};
use wsn_anomaly::eval::{
    confusion, csv_row, da, pre, run_mixed_fault_suite, run_single_fault_grid, split_validation,
    tpr, Confusion, CorpusParams, FaultFamily, GridSetup, MixedKind, ModelChoice, CSV_HEADER,
};
use wsn_anomaly::faults::{build_corpus, inject, FaultSpec, LabeledCorpus, SingleFault};
use wsn_anomaly::ingest::{synth_stream, Label, Window};
use wsn_anomaly::nn::io::{load_model, save_model};
use wsn_anomaly::nn::train::{train, TrainConfig};
use wsn_anomaly::nn::{predict, ModelParams};
use wsn_anomaly::rng::derive_seed;

use crate::config::{
    load_windows, synth_seed, DataProvenance, Dataset, RunConfig, DEFAULT_SAMPLES_PER_NODE,
};

/// Drops a trailing ".0" so intensities read like "1.5" and "300".
fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cli: cannot write {}", path.display()))?;
    Ok(())
}

// --- fault selection shared by train and eval ---

/// A fault recipe chosen on the command line: one family with an explicit
/// intensity, or a mixed pairing at the configured mixed intensities.
pub struct FaultChoice {
    first: SingleFault,
    second: Option<SingleFault>,
    pub label: String,
    pub intensity_label: String,
}

pub fn parse_fault(name: &str, intensity: Option<f64>, config: &RunConfig) -> Result<FaultChoice> {
    let family = match name {
        "noise" => Some(FaultFamily::Noise),
        "short" => Some(FaultFamily::Short),
        "fixed" => Some(FaultFamily::Fixed),
        _ => None,
    };
    if let Some(family) = family {
        let Some(v) = intensity else {
            bail!("cli: --intensity is required for single fault '{name}'");
        };
        return Ok(FaultChoice {
            first: family.single(v),
            second: None,
            label: name.into(),
            intensity_label: fmt_num(v),
        });
    }
    if let Some(kind) = MixedKind::ALL.into_iter().find(|k| k.name() == name) {
        if intensity.is_some() {
            bail!(
                "cli: mixed fault '{name}' takes its intensities from the config \
                 (mixed.r, mixed.f, mixed.g), not from --intensity"
            );
        }
        let (first, second) = kind.components(&config.mixed);
        return Ok(FaultChoice {
            first,
            second: Some(second),
            label: name.into(),
            intensity_label: format!(
                "{}+{}",
                fmt_num(first.intensity()),
                fmt_num(second.intensity())
            ),
        });
    }
    bail!(
        "cli: unknown fault '{name}'; expected noise, short, fixed, \
         noise+fixed, noise+short or short+fixed"
    )
}

impl FaultChoice {
    fn spec(&self, w: usize, seed: u64) -> FaultSpec {
        match self.second {
            Some(second) => FaultSpec::mixed(self.first, second, w, seed),
            None => FaultSpec::single(self.first, w, seed),
        }
    }
}

// --- single-run corpus, derived the same way by train and eval ---

/// Seed stream tag for the train/eval corpus; both commands must derive the
/// same corpus from the same config so a saved model's reported metrics are
/// reproducible.
const SINGLE_RUN_TAG: u64 = 0xE1;

fn single_run_corpus(
    config: &RunConfig,
    windows: &[Window],
    choice: &FaultChoice,
) -> Result<LabeledCorpus> {
    let corpus_seed = derive_seed(config.master_seed, SINGLE_RUN_TAG);
    let spec = choice.spec(config.corpus.fault_len, derive_seed(corpus_seed, 0xF));
    let corpus = build_corpus(
        windows,
        &spec,
        config.corpus.abnormal_fraction,
        config.corpus.split,
        corpus_seed,
    )?;
    Ok(corpus)
}

fn single_run_train_seed(config: &RunConfig, model: ModelChoice) -> u64 {
    let corpus_seed = derive_seed(config.master_seed, SINGLE_RUN_TAG);
    let model_idx = ModelChoice::ALL
        .iter()
        .position(|m| *m == model)
        .expect("every model is in ALL");
    derive_seed(corpus_seed, 0x7000 + model_idx as u64)
}

fn parse_model(name: &str) -> Result<ModelChoice> {
    ModelChoice::from_name(name)
        .ok_or_else(|| anyhow!("cli: unknown model '{name}'; expected M1, M2, M3 or CART"))
}

// --- metrics ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestMetrics {
    pub confusion: Confusion,
    pub da: f64,
    /// None when the test side defines no positives / positive predictions.
    pub tpr: Option<f64>,
    pub pre: Option<f64>,
}

fn test_metrics(predictions: &[Label], labels: &[Label]) -> Result<TestMetrics> {
    let c = confusion(predictions, labels)?;
    Ok(TestMetrics {
        confusion: c,
        da: da(&c)?,
        tpr: tpr(&c).ok(),
        pre: pre(&c).ok(),
    })
}

// --- model files ---

/// On-disk form of a trained CART baseline. CNN models use the binary WSNM
/// format instead.
#[derive(Serialize, Deserialize)]
struct CartFile {
    format: String,
    version: u32,
    stats: NormStats,
    tree: TreeNode,
}

const CART_FORMAT: &str = "wsn-cart";

enum Classifier {
    Cnn(ModelParams, NormStats),
    Cart(TreeNode, NormStats),
}

impl Classifier {
    fn name(&self) -> &str {
        match self {
            Classifier::Cnn(params, _) => params.config.preset.name(),
            Classifier::Cart(..) => "CART",
        }
    }

    fn stats(&self) -> &NormStats {
        match self {
            Classifier::Cnn(_, stats) | Classifier::Cart(_, stats) => stats,
        }
    }

    fn predict(&self, image: &GrayImage) -> Result<Label> {
        match self {
            Classifier::Cnn(params, _) => Ok(predict(params, image)?),
            Classifier::Cart(tree, _) => Ok(predict_cart(tree, image)),
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        match self {
            Classifier::Cnn(params, stats) => save_model(params, Some(stats), path)?,
            Classifier::Cart(tree, stats) => write_json(
                path,
                &CartFile {
                    format: CART_FORMAT.into(),
                    version: 1,
                    stats: *stats,
                    tree: tree.clone(),
                },
            )?,
        }
        Ok(())
    }

    fn load(path: &Path) -> Result<Classifier> {
        let bytes =
            fs::read(path).with_context(|| format!("cli: cannot read model {}", path.display()))?;
        if bytes.starts_with(b"WSNM") {
            let saved = load_model(path)?;
            let stats = saved.stats.ok_or_else(|| {
                anyhow!("cli: model {} carries no normalization ranges", path.display())
            })?;
            return Ok(Classifier::Cnn(saved.params, stats));
        }
        let file: CartFile = serde_json::from_slice(&bytes).map_err(|e| {
            anyhow!("cli: {} is neither a WSNM model nor a {CART_FORMAT} file: {e}", path.display())
        })?;
        if file.format != CART_FORMAT || file.version != 1 {
            bail!(
                "cli: unsupported model file {} (format {} version {})",
                path.display(),
                file.format,
                file.version
            );
        }
        Ok(Classifier::Cart(file.tree, file.stats))
    }
}

// --- synth ---

pub fn cmd_synth(
    config: &RunConfig,
    out_dir: &Path,
    samples: Option<usize>,
    output: Option<PathBuf>,
) -> Result<()> {
    let per_node = samples.unwrap_or(match config.dataset {
        Dataset::Synthetic { samples_per_node } => samples_per_node,
        Dataset::File { .. } => DEFAULT_SAMPLES_PER_NODE,
    });
    let path = output.unwrap_or_else(|| out_dir.join("synthetic_ibrl.txt"));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let seed = synth_seed(config.master_seed);
    let mut text = String::new();
    for &node in &config.node_ids {
        let stream = synth_stream(node, per_node, seed)?;
        for s in stream.samples() {
            let e = s.epoch;
            // the date and time columns are layout filler; ordering comes
            // from the epoch column
            text.push_str(&format!(
                "2004-03-01 {:02}:{:02}:{:02}.0 {e} {node} {:.4} {:.4} {:.2} {:.5}\n",
                (e / 3600) % 24,
                (e / 60) % 60,
                e % 60,
                s.temperature,
                s.humidity,
                s.light,
                s.voltage
            ));
        }
    }
    fs::write(&path, text).with_context(|| format!("cli: cannot write {}", path.display()))?;
    println!(
        "wrote {} ({} nodes x {per_node} samples, seed {})",
        path.display(),
        config.node_ids.len(),
        config.master_seed
    );
    Ok(())
}

// --- encode ---

fn fault_param_text(fault: &SingleFault) -> String {
    match fault {
        SingleFault::Noise { r } => format!("r{}", fmt_num(*r)),
        SingleFault::Short { f } => format!("f{}", fmt_num(*f)),
        SingleFault::Fixed { g } => format!("g{}", fmt_num(*g)),
    }
}

/// Export one PGM per figure category: the normal window plus its six
/// faulted variants, all on one jointly fitted gray scale so the images are
/// visually comparable.
pub fn cmd_encode(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let (windows, _) = load_windows(config)?;
    let base = windows[0].clone();
    let dir = out_dir.join("images");
    fs::create_dir_all(&dir)?;

    let r = config.mixed.r;
    let f = config.mixed.f;
    let g = config.mixed.g;
    let w = config.corpus.fault_len;
    let categories: [(&str, Option<(SingleFault, Option<SingleFault>)>); 7] = [
        ("normal", None),
        ("noise", Some((SingleFault::Noise { r }, None))),
        ("short", Some((SingleFault::Short { f }, None))),
        ("fixed", Some((SingleFault::Fixed { g }, None))),
        (
            "noise+fixed",
            Some((SingleFault::Noise { r }, Some(SingleFault::Fixed { g }))),
        ),
        (
            "noise+short",
            Some((SingleFault::Noise { r }, Some(SingleFault::Short { f }))),
        ),
        (
            "short+fixed",
            Some((SingleFault::Short { f }, Some(SingleFault::Fixed { g }))),
        ),
    ];

    let tag_base = derive_seed(config.master_seed, 0xE0);
    let mut produced: Vec<(String, Window)> = Vec::with_capacity(categories.len());
    for (i, (name, faults)) in categories.into_iter().enumerate() {
        match faults {
            None => produced.push((
                format!("{}normal_seed{}.pgm", config.watermark(), config.master_seed),
                base.clone(),
            )),
            Some((first, second)) => {
                let seed = derive_seed(tag_base, i as u64);
                let spec = match second {
                    Some(second) => FaultSpec::mixed(first, second, w, seed),
                    None => FaultSpec::single(first, w, seed),
                };
                let params = match second {
                    Some(second) => {
                        format!("{}_{}", fault_param_text(&first), fault_param_text(&second))
                    }
                    None => fault_param_text(&first),
                };
                let file = format!(
                    "{}{name}_{params}_w{w}_seed{}.pgm",
                    config.watermark(),
                    config.master_seed
                );
                produced.push((file, inject(&base, &spec)?));
            }
        }
    }

    let faulted: Vec<Window> = produced.iter().map(|(_, w)| w.clone()).collect();
    let stats = fit_stats(&faulted)?;
    for (file, window) in &produced {
        let path = dir.join(file);
        export_pgm(&encode_window(window, &stats), &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

// --- train ---

#[derive(Serialize)]
struct TrainMeta<'a> {
    model: &'a str,
    fault: &'a str,
    intensity: &'a str,
    fault_spec: FaultSpec,
    data: &'a DataProvenance,
    corpus: CorpusParams,
    corpus_seed: u64,
    master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cart: Option<CartConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_valid_accuracy: Option<f64>,
    test: TestMetrics,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn cmd_train(
    config: &RunConfig,
    out_dir: &Path,
    model_name: &str,
    fault_name: &str,
    intensity: Option<f64>,
    output: Option<PathBuf>,
) -> Result<()> {
    let model = parse_model(model_name)?;
    let choice = parse_fault(fault_name, intensity, config)?;
    let (windows, provenance) = load_windows(config)?;
    let corpus = single_run_corpus(config, &windows, &choice)?;
    let encoded = encode_corpus(&corpus)?;
    let train_seed = single_run_train_seed(config, model);

    let mut used_train = None;
    let mut best_epoch = None;
    let mut best_valid = None;
    let classifier = match model {
        ModelChoice::Cnn(preset) => {
            let (fit, valid) =
                split_validation(&encoded.train, config.corpus.valid_fraction, train_seed);
            let train_config = TrainConfig { seed: train_seed, ..config.train };
            let outcome = train(preset, &fit, &valid, &train_config)?;
            used_train = Some(train_config);
            best_epoch = Some(outcome.best_epoch);
            best_valid = Some(outcome.best_valid_accuracy);
            Classifier::Cnn(outcome.params, encoded.stats)
        }
        ModelChoice::Cart => {
            Classifier::Cart(train_cart(&encoded.train, &config.cart)?, encoded.stats)
        }
    };

    let labels: Vec<Label> = encoded.test.iter().map(|(_, l)| *l).collect();
    let predictions: Vec<Label> = encoded
        .test
        .iter()
        .map(|(image, _)| classifier.predict(image))
        .collect::<Result<_>>()?;
    let metrics = test_metrics(&predictions, &labels)?;

    let extension = match model {
        ModelChoice::Cnn(_) => "wsnm",
        ModelChoice::Cart => "cart.json",
    };
    let path = output.unwrap_or_else(|| {
        out_dir.join("models").join(format!(
            "{}{}_{}_{}_seed{}.{extension}",
            config.watermark(),
            model.name(),
            choice.label,
            choice.intensity_label,
            config.master_seed
        ))
    });
    classifier.save(&path)?;

    let meta = TrainMeta {
        model: model.name(),
        fault: &choice.label,
        intensity: &choice.intensity_label,
        fault_spec: corpus.fault,
        data: &provenance,
        corpus: config.corpus,
        corpus_seed: corpus.seed,
        master_seed: config.master_seed,
        train: used_train,
        cart: matches!(model, ModelChoice::Cart).then_some(config.cart),
        best_epoch,
        best_valid_accuracy: best_valid,
        test: metrics.clone(),
    };
    let meta_file = sidecar_path(&path);
    write_json(&meta_file, &meta)?;

    println!("wrote {}", path.display());
    println!("wrote {}", meta_file.display());
    println!("test metrics: {}", serde_json::to_string(&metrics)?);
    Ok(())
}

// --- eval ---

/// Which part of the rebuilt test split to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    All,
    Normal,
    Abnormal,
}

impl Subset {
    fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Normal => "normal",
            Subset::Abnormal => "abnormal",
        }
    }
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    model: &'a str,
    fault: &'a str,
    intensity: &'a str,
    subset: &'static str,
    data: &'a DataProvenance,
    test_size: usize,
    confusion: Confusion,
    da: f64,
    tpr: f64,
    pre: f64,
}

pub fn cmd_eval(
    config: &RunConfig,
    model_file: &Path,
    expect_model: Option<&str>,
    fault_name: &str,
    intensity: Option<f64>,
    subset: Subset,
) -> Result<()> {
    let classifier = Classifier::load(model_file)?;
    if let Some(name) = expect_model {
        let requested = parse_model(name)?;
        if requested.name() != classifier.name() {
            bail!(
                "cli: model file {} holds {} but {} was requested",
                model_file.display(),
                classifier.name(),
                requested.name()
            );
        }
    }
    let choice = parse_fault(fault_name, intensity, config)?;
    let (windows, provenance) = load_windows(config)?;
    let corpus = single_run_corpus(config, &windows, &choice)?;

    // the model's own ranges, so pixels match the ones it was trained on
    let stats = classifier.stats();
    let test: Vec<(GrayImage, Label)> = corpus
        .test
        .iter()
        .filter(|w| match subset {
            Subset::All => true,
            Subset::Normal => w.label() == Label::Normal,
            Subset::Abnormal => w.label() == Label::Abnormal,
        })
        .map(|w| (encode_window(w, stats), w.label()))
        .collect();
    if test.is_empty() {
        bail!("cli: subset '{}' of the test split is empty", subset.name());
    }

    let labels: Vec<Label> = test.iter().map(|(_, l)| *l).collect();
    let predictions: Vec<Label> = test
        .iter()
        .map(|(image, _)| classifier.predict(image))
        .collect::<Result<_>>()?;
    let c = confusion(&predictions, &labels)?;
    let output = EvalOutput {
        model: classifier.name(),
        fault: &choice.label,
        intensity: &choice.intensity_label,
        subset: subset.name(),
        data: &provenance,
        test_size: test.len(),
        confusion: c,
        da: da(&c)?,
        tpr: tpr(&c)?,
        pre: pre(&c)?,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

// --- reproduce ---

#[derive(Serialize)]
struct RunMeta<'a> {
    data: &'a DataProvenance,
    master_seed: u64,
    repetitions: usize,
    grid_mode: wsn_anomaly::eval::GridMode,
    jobs: Option<usize>,
    models: &'a [String],
    noise_intensities: &'a [f64],
    short_intensities: &'a [f64],
    fixed_intensities: &'a [f64],
    mixed: wsn_anomaly::eval::MixedParams,
    corpus: CorpusParams,
    train: TrainConfig,
    cart: CartConfig,
    files: &'a [String; 4],
}

fn parse_models(names: &[String]) -> Result<Vec<ModelChoice>> {
    if names.is_empty() {
        bail!("cli: models must not be empty");
    }
    let mut out = Vec::new();
    for name in names {
        let model = parse_model(name)?;
        if out.contains(&model) {
            bail!("cli: model '{name}' is listed twice");
        }
        out.push(model);
    }
    Ok(out)
}

/// Run the three single-fault grids and the mixed suite, appending each row
/// to its CSV the moment the cell finishes, so an interrupted run keeps its
/// completed cells.
pub fn cmd_reproduce(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let (windows, provenance) = load_windows(config)?;
    let models = parse_models(&config.models)?;
    let cnn_models: Vec<ModelChoice> = models
        .iter()
        .copied()
        .filter(|m| matches!(m, ModelChoice::Cnn(_)))
        .collect();
    if cnn_models.is_empty() {
        bail!("cli: the mixed suite needs at least one of M1, M2, M3 in models");
    }
    fs::create_dir_all(out_dir)?;

    let wm = config.watermark();
    let files = [
        format!("{wm}single_noise.csv"),
        format!("{wm}single_short.csv"),
        format!("{wm}single_fixed.csv"),
        format!("{wm}mixed.csv"),
    ];

    // metadata first, so even an interrupted run documents its setup
    let meta = RunMeta {
        data: &provenance,
        master_seed: config.master_seed,
        repetitions: config.repetitions,
        grid_mode: config.grid_mode,
        jobs: config.jobs,
        models: &config.models,
        noise_intensities: &config.noise_intensities,
        short_intensities: &config.short_intensities,
        fixed_intensities: &config.fixed_intensities,
        mixed: config.mixed,
        corpus: config.corpus,
        train: config.train,
        cart: config.cart,
        files: &files,
    };
    let meta_path = out_dir.join(format!("{wm}run_meta.json"));
    write_json(&meta_path, &meta)?;
    println!("wrote {}", meta_path.display());

    let setup = GridSetup {
        windows: &windows,
        train: config.train,
        cart: config.cart,
        corpus: config.corpus,
        repetitions: config.repetitions,
        master_seed: config.master_seed,
        mode: config.grid_mode,
        jobs: config.jobs,
    };

    let singles = [
        (FaultFamily::Noise, &config.noise_intensities, &files[0]),
        (FaultFamily::Short, &config.short_intensities, &files[1]),
        (FaultFamily::Fixed, &config.fixed_intensities, &files[2]),
    ];
    for (family, intensities, file_name) in singles {
        let path = out_dir.join(file_name);
        let mut file = File::create(&path)?;
        writeln!(file, "{CSV_HEADER}")?;
        run_single_fault_grid(&setup, &models, family, intensities, |row| {
            writeln!(file, "{}", csv_row(row))?;
            file.flush()?;
            println!(
                "  {} {} {}: DA {:.2}%",
                row.fault_kind,
                row.intensity,
                row.model,
                row.da * 100.0
            );
            Ok(())
        })?;
        println!("wrote {}", path.display());
    }

    let path = out_dir.join(&files[3]);
    let mut file = File::create(&path)?;
    writeln!(file, "{CSV_HEADER}")?;
    run_mixed_fault_suite(&setup, &cnn_models, &config.mixed, |row| {
        writeln!(file, "{}", csv_row(row))?;
        file.flush()?;
        println!(
            "  {} {} {}: DA {:.2}%",
            row.fault_kind,
            row.intensity,
            row.model,
            row.da * 100.0
        );
        Ok(())
    })?;
    println!("wrote {}", path.display());
    Ok(())
}
