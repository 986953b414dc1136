//! Run configuration: one JSON file, a handful of flag overrides, and the
//! window-loading step both the grids and the single-model commands share.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wsn_anomaly::baseline::CartConfig;
use wsn_anomaly::eval::{CorpusParams, FaultFamily, GridMode, MixedParams};
use wsn_anomaly::ingest::{build_node_stream, parse_ibrl, slide_windows, synth_stream, Window};
use wsn_anomaly::nn::train::TrainConfig;
use wsn_anomaly::rng::derive_seed;

/// Where the windows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dataset {
    /// A sensor log in the IBRL text format.
    File { path: PathBuf },
    /// Generated streams; outputs produced from them are watermarked.
    Synthetic { samples_per_node: usize },
}

pub const DEFAULT_SAMPLES_PER_NODE: usize = 2048;

impl Default for Dataset {
    fn default() -> Self {
        Dataset::Synthetic { samples_per_node: DEFAULT_SAMPLES_PER_NODE }
    }
}

/// Everything a run needs. Every output file is a pure function of this
/// struct: no wall-clock seeding, no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub node_ids: Vec<u32>,
    /// Offset between consecutive windows; 64 means non-overlapping.
    pub stride: usize,
    pub corpus: CorpusParams,
    pub train: TrainConfig,
    pub cart: CartConfig,
    /// Classifiers for the grids: "M1", "M2", "M3", "CART".
    pub models: Vec<String>,
    pub noise_intensities: Vec<f64>,
    pub short_intensities: Vec<f64>,
    pub fixed_intensities: Vec<f64>,
    pub mixed: MixedParams,
    pub repetitions: usize,
    pub master_seed: u64,
    pub grid_mode: GridMode,
    pub out_dir: Option<PathBuf>,
    /// Worker cap for grid cells; absent means one worker per core.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: Dataset::default(),
            node_ids: vec![1, 2],
            stride: 64,
            corpus: CorpusParams::default(),
            train: TrainConfig::default(),
            cart: CartConfig::default(),
            models: vec!["M1".into(), "M2".into(), "M3".into(), "CART".into()],
            noise_intensities: FaultFamily::Noise.default_intensities(),
            short_intensities: FaultFamily::Short.default_intensities(),
            fixed_intensities: FaultFamily::Fixed.default_intensities(),
            mixed: MixedParams::default(),
            repetitions: 5,
            master_seed: 17,
            grid_mode: GridMode::PerIntensity,
            out_dir: None,
            jobs: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cli: cannot read config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("cli: bad config {}", path.display()))?;
        Ok(config)
    }

    pub fn synthetic(&self) -> bool {
        matches!(self.dataset, Dataset::Synthetic { .. })
    }

    /// Prefix stamped onto every output filename of a synthetic run, so
    /// synthetic metrics are never mistaken for sensor-log reproductions.
    pub fn watermark(&self) -> &'static str {
        if self.synthetic() {
            "synthetic_"
        } else {
            ""
        }
    }
}

/// Output directory precedence: flag, then config, then the
/// `WSN_ANOMALY_OUT` environment variable, then `./out`.
pub fn resolve_out_dir(
    flag: Option<&Path>,
    config: &RunConfig,
    env: Option<&str>,
) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &config.out_dir {
        return p.clone();
    }
    if let Some(p) = env {
        return PathBuf::from(p);
    }
    PathBuf::from("out")
}

/// Provenance block written into every metadata file.
#[derive(Debug, Clone, Serialize)]
pub struct DataProvenance {
    /// "synthetic" or the dataset path as configured.
    pub source: String,
    pub synthetic: bool,
    pub node_ids: Vec<u32>,
    pub stride: usize,
    pub sample_count: usize,
    /// Malformed input lines dropped by the parser; 0 for synthetic data.
    pub skipped_lines: usize,
    pub window_count: usize,
}

/// Seed stream tag for synthetic generation; `synth` and the in-memory
/// synthetic dataset share it so both paths describe the same signals.
const SYNTH_TAG: u64 = 0xD0;

pub fn synth_seed(master_seed: u64) -> u64 {
    derive_seed(master_seed, SYNTH_TAG)
}

/// Load the configured dataset into windows for the configured nodes.
pub fn load_windows(config: &RunConfig) -> Result<(Vec<Window>, DataProvenance)> {
    if config.node_ids.is_empty() {
        bail!("cli: node_ids must not be empty");
    }
    let mut windows = Vec::new();
    let (source, sample_count, skipped) = match &config.dataset {
        Dataset::File { path } => {
            if !path.exists() {
                bail!("cli: dataset file {} does not exist", path.display());
            }
            let file = File::open(path)
                .with_context(|| format!("cli: cannot open dataset {}", path.display()))?;
            let parsed = parse_ibrl(BufReader::new(file))?;
            for &node in &config.node_ids {
                let stream = build_node_stream(&parsed.samples, node)?;
                windows.extend(slide_windows(&stream, config.stride)?);
            }
            (path.display().to_string(), parsed.samples.len(), parsed.skipped)
        }
        Dataset::Synthetic { samples_per_node } => {
            let seed = synth_seed(config.master_seed);
            for &node in &config.node_ids {
                let stream = synth_stream(node, *samples_per_node, seed)?;
                windows.extend(slide_windows(&stream, config.stride)?);
            }
            ("synthetic".into(), samples_per_node * config.node_ids.len(), 0)
        }
    };
    if windows.is_empty() {
        bail!("cli: dataset yields no complete windows at stride {}", config.stride);
    }
    let provenance = DataProvenance {
        source,
        synthetic: config.synthetic(),
        node_ids: config.node_ids.clone(),
        stride: config.stride,
        sample_count,
        skipped_lines: skipped,
        window_count: windows.len(),
    };
    Ok((windows, provenance))
}
