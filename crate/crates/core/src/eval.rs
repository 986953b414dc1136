//! Confusion-matrix metrics and the experiment grids: single-fault sweeps
//! over r/f/G and the three mixed-fault pairings, across the CNN presets
//! and the CART baseline.
//!
//! A grid cell is (model, fault kind, intensity). Each cell is repeated
//! over several seeds; the reported row pools the per-seed confusion counts
//! (so the stored metrics are exactly recomputable from the stored counts)
//! and keeps the per-seed metrics alongside for spread. Corpus seeds depend
//! only on (fault, intensity, repetition), so every model in a cell sees
//! identical data and comparisons are paired.

use std::io::Write as IoWrite;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{predict_cart, train_cart, CartConfig, TreeNode};
use crate::encode::{encode_corpus, encode_window, EncodedCorpus, GrayImage, NormStats};
use crate::error::{Error, Result};
use crate::faults::{build_corpus, FaultSpec, LabeledCorpus, SingleFault, DEFAULT_FAULT_LEN};
use crate::ingest::{Label, Window};
use crate::nn::train::{train, TrainConfig};
use crate::nn::{predict, ModelParams, Preset};
use crate::rng::{derive_seed, rng_from_seed};
use rand::Rng;

/// Prediction counts with abnormal as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn add(&mut self, other: &Confusion) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
        self.false_neg += other.false_neg;
    }
}

/// Count predictions against ground truth.
pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<Confusion> {
    if predictions.len() != labels.len() {
        return Err(Error::Eval(format!(
            "length mismatch: {} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Eval("cannot build a confusion matrix from zero samples".into()));
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (l, p) {
            (Label::Abnormal, Label::Abnormal) => c.true_pos += 1,
            (Label::Abnormal, Label::Normal) => c.false_neg += 1,
            (Label::Normal, Label::Abnormal) => c.false_pos += 1,
            (Label::Normal, Label::Normal) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Detection accuracy: correct predictions over all predictions.
pub fn da(c: &Confusion) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::UndefinedMetric { metric: "DA", reason: "no samples evaluated" });
    }
    Ok((c.true_pos + c.true_neg) as f64 / total as f64)
}

/// True positive rate: detected abnormal over all truly abnormal.
pub fn tpr(c: &Confusion) -> Result<f64> {
    let abnormal = c.true_pos + c.false_neg;
    if abnormal == 0 {
        return Err(Error::UndefinedMetric { metric: "TPR", reason: "no abnormal samples in the data" });
    }
    Ok(c.true_pos as f64 / abnormal as f64)
}

/// Precision: truly abnormal over all predicted abnormal.
pub fn pre(c: &Confusion) -> Result<f64> {
    let predicted = c.true_pos + c.false_pos;
    if predicted == 0 {
        return Err(Error::UndefinedMetric { metric: "PRE", reason: "nothing was predicted abnormal" });
    }
    Ok(c.true_pos as f64 / predicted as f64)
}

/// A classifier choice for a grid run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelChoice {
    Cnn(Preset),
    Cart,
}

impl ModelChoice {
    pub const ALL: [ModelChoice; 4] = [
        ModelChoice::Cnn(Preset::M1),
        ModelChoice::Cnn(Preset::M2),
        ModelChoice::Cnn(Preset::M3),
        ModelChoice::Cart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Cnn(p) => p.name(),
            ModelChoice::Cart => "CART",
        }
    }

    pub fn from_name(name: &str) -> Option<ModelChoice> {
        if name.eq_ignore_ascii_case("cart") {
            return Some(ModelChoice::Cart);
        }
        Preset::from_name(name).map(ModelChoice::Cnn)
    }
}

/// One single-fault family and its sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultFamily {
    Noise,
    Short,
    Fixed,
}

impl FaultFamily {
    pub fn name(self) -> &'static str {
        match self {
            FaultFamily::Noise => "noise",
            FaultFamily::Short => "short",
            FaultFamily::Fixed => "fixed",
        }
    }

    pub fn single(self, intensity: f64) -> SingleFault {
        match self {
            FaultFamily::Noise => SingleFault::Noise { r: intensity },
            FaultFamily::Short => SingleFault::Short { f: intensity },
            FaultFamily::Fixed => SingleFault::Fixed { g: intensity },
        }
    }

    /// The sweep values used in all reported runs.
    pub fn default_intensities(self) -> Vec<f64> {
        match self {
            FaultFamily::Noise => vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            FaultFamily::Short => vec![1.5, 2.0, 3.0, 5.0, 7.0, 10.0],
            FaultFamily::Fixed => vec![150.0, 300.0, 500.0],
        }
    }

    fn tag(self) -> u64 {
        match self {
            FaultFamily::Noise => 1,
            FaultFamily::Short => 2,
            FaultFamily::Fixed => 3,
        }
    }
}

/// The three mixed pairings, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedKind {
    NoiseFixed,
    NoiseShort,
    ShortFixed,
}

impl MixedKind {
    pub const ALL: [MixedKind; 3] = [MixedKind::NoiseFixed, MixedKind::NoiseShort, MixedKind::ShortFixed];

    pub fn name(self) -> &'static str {
        match self {
            MixedKind::NoiseFixed => "noise+fixed",
            MixedKind::NoiseShort => "noise+short",
            MixedKind::ShortFixed => "short+fixed",
        }
    }

    /// The two component faults, in application order.
    pub fn components(self, params: &MixedParams) -> (SingleFault, SingleFault) {
        match self {
            MixedKind::NoiseFixed => (SingleFault::Noise { r: params.r }, SingleFault::Fixed { g: params.g }),
            MixedKind::NoiseShort => (SingleFault::Noise { r: params.r }, SingleFault::Short { f: params.f }),
            MixedKind::ShortFixed => (SingleFault::Short { f: params.f }, SingleFault::Fixed { g: params.g }),
        }
    }

    fn tag(self) -> u64 {
        match self {
            MixedKind::NoiseFixed => 4,
            MixedKind::NoiseShort => 5,
            MixedKind::ShortFixed => 6,
        }
    }
}

/// Intensities used by mixed-fault runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixedParams {
    pub r: f64,
    pub f: f64,
    pub g: f64,
}

impl Default for MixedParams {
    fn default() -> Self {
        MixedParams { r: 1.5, f: 1.5, g: 300.0 }
    }
}

/// How corpora are built inside grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusParams {
    /// Fraction of windows that get a fault injected.
    pub abnormal_fraction: f64,
    /// Fraction of each class that goes to training.
    pub split: f64,
    /// Fraction of the CNN training side held out for early stopping.
    pub valid_fraction: f64,
    /// Faulty points per abnormal window.
    pub fault_len: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            abnormal_fraction: 0.5,
            split: 0.7,
            valid_fraction: 0.2,
            fault_len: DEFAULT_FAULT_LEN,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("abnormal_fraction", self.abnormal_fraction),
            ("split", self.split),
            ("valid_fraction", self.valid_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Eval(format!("{name} must be strictly between 0 and 1, got {v}")));
            }
        }
        if self.fault_len == 0 || self.fault_len > crate::ingest::WINDOW_LEN {
            return Err(Error::Eval(format!("fault_len must be in 1..=64, got {}", self.fault_len)));
        }
        Ok(())
    }
}

/// Whether each intensity trains its own model (default) or every intensity
/// is scored by one model trained at the middle of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    PerIntensity,
    SharedMidIntensity,
}

/// Everything a grid run needs besides the models and the sweep itself.
#[derive(Debug, Clone)]
pub struct GridSetup<'a> {
    pub windows: &'a [Window],
    pub train: TrainConfig,
    pub cart: CartConfig,
    pub corpus: CorpusParams,
    pub repetitions: usize,
    pub master_seed: u64,
    pub mode: GridMode,
    /// Worker cap for cell parallelism; None uses every core.
    pub jobs: Option<usize>,
}

impl GridSetup<'_> {
    fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.cart.validate()?;
        self.corpus.validate()?;
        if self.repetitions == 0 {
            return Err(Error::Eval("repetitions must be positive".into()));
        }
        if self.windows.is_empty() {
            return Err(Error::Eval("no input windows".into()));
        }
        Ok(())
    }
}

/// Metrics of one repetition. TPR/PRE are None when undefined for that
/// seed's counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub corpus_seed: u64,
    pub confusion: Confusion,
    pub da: f64,
    pub tpr: Option<f64>,
    pub pre: Option<f64>,
}

/// One report row: a (model, fault kind, intensity) cell pooled over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub fault_kind: String,
    /// Sweep value as text: "0.5", "300", or "1.5+300" for mixed pairs.
    pub intensity: String,
    pub seed_count: usize,
    /// Counts summed over every repetition; the row metrics derive from
    /// these exactly.
    pub confusion: Confusion,
    pub da: f64,
    pub tpr: Option<f64>,
    pub pre: Option<f64>,
    /// Sample standard deviations of the per-seed metrics.
    pub da_std: f64,
    pub tpr_std: f64,
    pub pre_std: f64,
    pub per_seed: Vec<SeedMetrics>,
}

/// Run metadata stored next to the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub master_seed: u64,
    pub repetitions: usize,
    pub window_count: usize,
    pub train: TrainConfig,
    pub cart: CartConfig,
    pub corpus: CorpusParams,
    pub mode: GridMode,
}

/// A complete grid result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub meta: ReportMeta,
}

pub const CSV_HEADER: &str = "model,fault_kind,intensity,seed_count,tp,fp,tn,fn,DA,TPR,PRE";

fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}", v * 100.0),
        None => "NA".into(),
    }
}

/// Render one row in the report CSV column order.
pub fn csv_row(row: &ReportRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        row.model,
        row.fault_kind,
        row.intensity,
        row.seed_count,
        row.confusion.true_pos,
        row.confusion.false_pos,
        row.confusion.true_neg,
        row.confusion.false_neg,
        fmt_pct(Some(row.da)),
        fmt_pct(row.tpr),
        fmt_pct(row.pre),
    )
}

impl EvalReport {
    pub fn write_csv<W: IoWrite>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{}", csv_row(row))?;
        }
        Ok(())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Number formatting for the intensity column: trailing ".0" dropped.
fn fmt_intensity(v: f64) -> String {
    format!("{v}")
}

enum TrainedModel {
    Cnn(ModelParams),
    Cart(TreeNode),
}

/// Stratified split of an encoded training set into (fit, validation).
/// Deterministic in `seed`; each class keeps at least one element on the
/// fit side and, when it has two or more, at least one on the valid side.
pub fn split_validation(
    data: &[(GrayImage, Label)],
    valid_fraction: f64,
    seed: u64,
) -> (Vec<(GrayImage, Label)>, Vec<(GrayImage, Label)>) {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, (_, label)) in data.iter().enumerate() {
        by_class[label.index()].push(i);
    }
    let mut rng = rng_from_seed(derive_seed(seed, 0x5A));
    let mut fit = Vec::new();
    let mut valid = Vec::new();
    for class in &mut by_class {
        for i in (1..class.len()).rev() {
            let j = rng.random_range(0..=i);
            class.swap(i, j);
        }
        let n_valid = ((class.len() as f64 * valid_fraction).round() as usize)
            .clamp(usize::from(class.len() > 1), class.len().saturating_sub(1));
        for (k, &idx) in class.iter().enumerate() {
            if k < n_valid {
                valid.push(data[idx].clone());
            } else {
                fit.push(data[idx].clone());
            }
        }
    }
    (fit, valid)
}

fn fit_model(
    encoded: &EncodedCorpus,
    model: ModelChoice,
    setup: &GridSetup,
    train_seed: u64,
) -> Result<TrainedModel> {
    match model {
        ModelChoice::Cnn(preset) => {
            let (fit, valid) = split_validation(&encoded.train, setup.corpus.valid_fraction, train_seed);
            let config = TrainConfig { seed: train_seed, ..setup.train };
            let outcome = train(preset, &fit, &valid, &config)?;
            Ok(TrainedModel::Cnn(outcome.params))
        }
        ModelChoice::Cart => {
            let tree = train_cart(&encoded.train, &setup.cart)?;
            Ok(TrainedModel::Cart(tree))
        }
    }
}

fn score(trained: &TrainedModel, test: &[(GrayImage, Label)]) -> Result<Confusion> {
    let labels: Vec<Label> = test.iter().map(|(_, l)| *l).collect();
    let predictions: Vec<Label> = match trained {
        TrainedModel::Cnn(params) => test
            .iter()
            .map(|(img, _)| predict(params, img))
            .collect::<Result<Vec<_>>>()?,
        TrainedModel::Cart(tree) => test.iter().map(|(img, _)| predict_cart(tree, img)).collect(),
    };
    confusion(&predictions, &labels)
}

fn seed_metrics(corpus_seed: u64, c: Confusion) -> SeedMetrics {
    SeedMetrics {
        corpus_seed,
        confusion: c,
        da: da(&c).expect("test sets are non-empty"),
        tpr: tpr(&c).ok(),
        pre: pre(&c).ok(),
    }
}

fn assemble_row(
    model: ModelChoice,
    fault_kind: String,
    intensity: String,
    per_seed: Vec<SeedMetrics>,
) -> ReportRow {
    let mut pooled = Confusion::default();
    for m in &per_seed {
        pooled.add(&m.confusion);
    }
    let das: Vec<f64> = per_seed.iter().map(|m| m.da).collect();
    let tprs: Vec<f64> = per_seed.iter().filter_map(|m| m.tpr).collect();
    let pres: Vec<f64> = per_seed.iter().filter_map(|m| m.pre).collect();
    ReportRow {
        model: model.name().to_string(),
        fault_kind,
        intensity,
        seed_count: per_seed.len(),
        confusion: pooled,
        da: da(&pooled).expect("pooled counts are non-empty"),
        tpr: tpr(&pooled).ok(),
        pre: pre(&pooled).ok(),
        da_std: mean_std(&das).1,
        tpr_std: mean_std(&tprs).1,
        pre_std: mean_std(&pres).1,
        per_seed,
    }
}

fn meta_for(setup: &GridSetup) -> ReportMeta {
    ReportMeta {
        master_seed: setup.master_seed,
        repetitions: setup.repetitions,
        window_count: setup.windows.len(),
        train: setup.train,
        cart: setup.cart,
        corpus: setup.corpus,
        mode: setup.mode,
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Eval(format!("cannot build worker pool: {e}")))?
            .install(f),
        None => f(),
    }
}

/// Corpus for one (fault recipe, intensity slot, repetition). Model
/// independent so every model in a cell sees the same data.
fn build_cell_corpus(
    setup: &GridSetup,
    base_seed: u64,
    intensity_idx: usize,
    rep: usize,
    make_spec: &(dyn Fn(u64) -> FaultSpec + Sync),
) -> Result<LabeledCorpus> {
    let corpus_seed = derive_seed(derive_seed(base_seed, intensity_idx as u64), rep as u64);
    let spec = make_spec(derive_seed(corpus_seed, 0xF));
    build_corpus(
        setup.windows,
        &spec,
        setup.corpus.abnormal_fraction,
        setup.corpus.split,
        corpus_seed,
    )
}

fn cell_train_seed(base_seed: u64, intensity_idx: usize, rep: usize, model_idx: usize) -> u64 {
    let cell = derive_seed(derive_seed(base_seed, intensity_idx as u64), rep as u64);
    derive_seed(cell, 0x7000 + model_idx as u64)
}

/// One repetition of one cell in per-intensity mode: fresh corpus, fresh
/// model, scored on the held-out test split.
fn run_rep_per_intensity(
    setup: &GridSetup,
    base_seed: u64,
    intensity_idx: usize,
    rep: usize,
    model_idx: usize,
    model: ModelChoice,
    make_spec: &(dyn Fn(u64) -> FaultSpec + Sync),
) -> Result<SeedMetrics> {
    let corpus = build_cell_corpus(setup, base_seed, intensity_idx, rep, make_spec)?;
    let encoded = encode_corpus(&corpus)?;
    let train_seed = cell_train_seed(base_seed, intensity_idx, rep, model_idx);
    let trained = fit_model(&encoded, model, setup, train_seed)?;
    let c = score(&trained, &encoded.test)?;
    Ok(seed_metrics(corpus.seed, c))
}

/// Encode a test side with externally supplied stats (shared-model mode,
/// where the stats travel with the model that was trained elsewhere).
fn encode_test_with(corpus: &LabeledCorpus, stats: &NormStats) -> Vec<(GrayImage, Label)> {
    corpus
        .test
        .iter()
        .map(|w| (encode_window(w, stats), w.label()))
        .collect()
}

/// Single-fault sweep. Produces one row per (model, intensity), in model
/// order within ascending intensity order; `on_row` sees each row as soon
/// as its whole cell (all repetitions) is done, so partial output can be
/// flushed.
pub fn run_single_fault_grid(
    setup: &GridSetup,
    models: &[ModelChoice],
    family: FaultFamily,
    intensities: &[f64],
    mut on_row: impl FnMut(&ReportRow) -> Result<()>,
) -> Result<EvalReport> {
    setup.validate()?;
    if models.is_empty() || intensities.is_empty() {
        return Err(Error::Eval("need at least one model and one intensity".into()));
    }
    let base_seed = derive_seed(setup.master_seed, family.tag());
    let mut rows = Vec::new();

    match setup.mode {
        GridMode::PerIntensity => {
            for (ii, &intensity) in intensities.iter().enumerate() {
                let make_spec = move |seed: u64| {
                    FaultSpec::single(family.single(intensity), setup.corpus.fault_len, seed)
                };
                // all (model, repetition) pairs of this intensity in parallel
                let tasks: Vec<(usize, usize)> = models
                    .iter()
                    .enumerate()
                    .flat_map(|(mi, _)| (0..setup.repetitions).map(move |rep| (mi, rep)))
                    .collect();
                let results: Vec<(usize, SeedMetrics)> = with_pool(setup.jobs, || {
                    tasks
                        .par_iter()
                        .map(|&(mi, rep)| {
                            run_rep_per_intensity(setup, base_seed, ii, rep, mi, models[mi], &make_spec)
                                .map(|m| (mi, m))
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                for (mi, model) in models.iter().enumerate() {
                    let per_seed: Vec<SeedMetrics> = results
                        .iter()
                        .filter(|(i, _)| *i == mi)
                        .map(|(_, m)| *m)
                        .collect();
                    let row = assemble_row(
                        *model,
                        family.name().to_string(),
                        fmt_intensity(intensity),
                        per_seed,
                    );
                    on_row(&row)?;
                    rows.push(row);
                }
            }
        }
        GridMode::SharedMidIntensity => {
            let mid = intensities.len() / 2;
            // train once per (model, repetition) at the mid intensity
            let trained: Vec<(usize, usize, TrainedModel, NormStats)> = with_pool(setup.jobs, || {
                let tasks: Vec<(usize, usize)> = models
                    .iter()
                    .enumerate()
                    .flat_map(|(mi, _)| (0..setup.repetitions).map(move |rep| (mi, rep)))
                    .collect();
                tasks
                    .par_iter()
                    .map(|&(mi, rep)| {
                        let make_spec = move |seed: u64| {
                            FaultSpec::single(
                                family.single(intensities[mid]),
                                setup.corpus.fault_len,
                                seed,
                            )
                        };
                        let corpus = build_cell_corpus(setup, base_seed, mid, rep, &make_spec)?;
                        let encoded = encode_corpus(&corpus)?;
                        let train_seed = cell_train_seed(base_seed, mid, rep, mi);
                        let model = fit_model(&encoded, models[mi], setup, train_seed)?;
                        Ok((mi, rep, model, encoded.stats))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;

            for (ii, &intensity) in intensities.iter().enumerate() {
                let make_spec = move |seed: u64| {
                    FaultSpec::single(family.single(intensity), setup.corpus.fault_len, seed)
                };
                let results: Vec<(usize, SeedMetrics)> = with_pool(setup.jobs, || {
                    trained
                        .par_iter()
                        .map(|(mi, rep, model, stats)| {
                            let corpus = build_cell_corpus(setup, base_seed, ii, *rep, &make_spec)?;
                            let test = encode_test_with(&corpus, stats);
                            let c = score(model, &test)?;
                            Ok((*mi, seed_metrics(corpus.seed, c)))
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                for (mi, model) in models.iter().enumerate() {
                    let per_seed: Vec<SeedMetrics> = results
                        .iter()
                        .filter(|(i, _)| *i == mi)
                        .map(|(_, m)| *m)
                        .collect();
                    let row = assemble_row(
                        *model,
                        family.name().to_string(),
                        fmt_intensity(intensity),
                        per_seed,
                    );
                    on_row(&row)?;
                    rows.push(row);
                }
            }
        }
    }

    Ok(EvalReport { rows, meta: meta_for(setup) })
}

/// Mixed-fault suite: the three pairings at fixed intensities, one row per
/// (pairing, model). With the three CNN presets this mirrors the nine-row
/// reference table.
pub fn run_mixed_fault_suite(
    setup: &GridSetup,
    models: &[ModelChoice],
    params: &MixedParams,
    mut on_row: impl FnMut(&ReportRow) -> Result<()>,
) -> Result<EvalReport> {
    setup.validate()?;
    if models.is_empty() {
        return Err(Error::Eval("need at least one model".into()));
    }
    let mut rows = Vec::new();
    for kind in MixedKind::ALL {
        let base_seed = derive_seed(setup.master_seed, kind.tag());
        let (first, second) = kind.components(params);
        let make_spec =
            move |seed: u64| FaultSpec::mixed(first, second, setup.corpus.fault_len, seed);
        let tasks: Vec<(usize, usize)> = models
            .iter()
            .enumerate()
            .flat_map(|(mi, _)| (0..setup.repetitions).map(move |rep| (mi, rep)))
            .collect();
        let results: Vec<(usize, SeedMetrics)> = with_pool(setup.jobs, || {
            tasks
                .par_iter()
                .map(|&(mi, rep)| {
                    run_rep_per_intensity(setup, base_seed, 0, rep, mi, models[mi], &make_spec)
                        .map(|m| (mi, m))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let intensity = format!(
            "{}+{}",
            fmt_intensity(first.intensity()),
            fmt_intensity(second.intensity())
        );
        for (mi, model) in models.iter().enumerate() {
            let per_seed: Vec<SeedMetrics> = results
                .iter()
                .filter(|(i, _)| *i == mi)
                .map(|(_, m)| *m)
                .collect();
            let row = assemble_row(*model, kind.name().to_string(), intensity.clone(), per_seed);
            on_row(&row)?;
            rows.push(row);
        }
    }
    Ok(EvalReport { rows, meta: meta_for(setup) })
}
