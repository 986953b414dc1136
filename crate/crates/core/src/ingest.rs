//! Sensor log ingestion: IBRL text parsing, per-node stream assembly, and
//! fixed-length window segmentation.
//!
//! IBRL rows are whitespace-separated
//! `date time epoch moteid temperature humidity light voltage`. Rows with
//! missing columns, unparseable fields, non-finite feature values, or a mote
//! id below 1 are dropped wholesale during parsing and counted as skipped.
//!
//! A synthetic generator is included so tests and demos run without the
//! (large) IBRL download. Synthetic streams must never stand in for IBRL
//! data in runs that quote reproduction numbers.

use std::f64::consts::TAU;
use std::io::BufRead;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::FaultSpec;
use crate::rng::{derive_seed, rng_from_seed};

/// Window length L. Fixed: the 16x16 image layout interleaves 4 features
/// over exactly 64 time steps.
pub const WINDOW_LEN: usize = 64;

/// One timestamped reading from one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub epoch: u64,
    pub node_id: u32,
    pub temperature: f64,
    pub humidity: f64,
    pub light: f64,
    pub voltage: f64,
}

/// The four sensed features, in the row-interleave order of the image layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feature {
    Temperature,
    Humidity,
    Light,
    Voltage,
}

impl Feature {
    pub const ALL: [Feature; 4] = [
        Feature::Temperature,
        Feature::Humidity,
        Feature::Light,
        Feature::Voltage,
    ];

    pub fn index(self) -> usize {
        match self {
            Feature::Temperature => 0,
            Feature::Humidity => 1,
            Feature::Light => 2,
            Feature::Voltage => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Temperature => "temperature",
            Feature::Humidity => "humidity",
            Feature::Light => "light",
            Feature::Voltage => "voltage",
        }
    }
}

impl Sample {
    pub fn feature(&self, f: Feature) -> f64 {
        match f {
            Feature::Temperature => self.temperature,
            Feature::Humidity => self.humidity,
            Feature::Light => self.light,
            Feature::Voltage => self.voltage,
        }
    }
}

/// Binary window label; `Abnormal` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    /// Class index used by the 2-neuron output layer: normal = 0, abnormal = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }

    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }
}

/// All samples of one node, epochs strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStream {
    node_id: u32,
    samples: Vec<Sample>,
}

impl NodeStream {
    pub fn node_id(&self) -> u32 {
        self.node_id
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// 64 consecutive samples of one node. `label` is `Abnormal` exactly when an
/// injected fault is recorded in `fault`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    node_id: u32,
    start: usize,
    samples: Vec<Sample>,
    label: Label,
    fault: Option<FaultSpec>,
}

impl Window {
    /// Build a normal (unfaulted) window. Fails unless there are exactly
    /// [`WINDOW_LEN`] samples with strictly increasing epochs, all from
    /// `node_id`.
    pub fn new(node_id: u32, start: usize, samples: Vec<Sample>) -> Result<Self> {
        if samples.len() != WINDOW_LEN {
            return Err(Error::invalid(
                "ingest",
                format!("window needs exactly {WINDOW_LEN} samples, got {}", samples.len()),
            ));
        }
        if samples.iter().any(|s| s.node_id != node_id) {
            return Err(Error::invalid("ingest", "window mixes samples from different nodes"));
        }
        if samples.windows(2).any(|p| p[1].epoch <= p[0].epoch) {
            return Err(Error::invalid("ingest", "window epochs must be strictly increasing"));
        }
        Ok(Window {
            node_id,
            start,
            samples,
            label: Label::Normal,
            fault: None,
        })
    }

    pub fn node_id(&self) -> u32 {
        self.node_id
    }

    /// Offset m of the first sample within its source stream.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn fault(&self) -> Option<&FaultSpec> {
        self.fault.as_ref()
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.temperature).collect()
    }

    /// Mark the window abnormal with the fault that produced it. Keeps the
    /// label/fault invariant in one place; injectors are the only callers.
    pub(crate) fn set_fault(&mut self, spec: FaultSpec) {
        self.label = Label::Abnormal;
        self.fault = Some(spec);
    }

    pub(crate) fn set_temperature(&mut self, i: usize, value: f64) {
        self.samples[i].temperature = value;
    }
}

/// Outcome of parsing an IBRL log: the clean samples plus how many lines
/// were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub samples: Vec<Sample>,
    pub skipped: usize,
}

/// Parse IBRL-format text. Malformed lines are skipped and counted; an
/// input with zero parseable lines is an error.
pub fn parse_ibrl<R: BufRead>(reader: R) -> Result<ParsedLog> {
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line?;
        match parse_line(&line) {
            Some(sample) => samples.push(sample),
            None => skipped += 1,
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(ParsedLog { samples, skipped })
}

fn parse_line(line: &str) -> Option<Sample> {
    let mut parts = line.split_whitespace();
    let _date = parts.next()?;
    let _time = parts.next()?;
    let epoch: u64 = parts.next()?.parse().ok()?;
    let node_id: u32 = parts.next()?.parse().ok()?;
    let temperature: f64 = parts.next()?.parse().ok()?;
    let humidity: f64 = parts.next()?.parse().ok()?;
    let light: f64 = parts.next()?.parse().ok()?;
    let voltage: f64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    if node_id < 1 {
        return None;
    }
    let sample = Sample {
        epoch,
        node_id,
        temperature,
        humidity,
        light,
        voltage,
    };
    let finite = Feature::ALL.iter().all(|&f| sample.feature(f).is_finite());
    finite.then_some(sample)
}

/// Collect one node's samples, sorted by epoch, keeping the first of any
/// duplicated epoch.
pub fn build_node_stream(samples: &[Sample], node_id: u32) -> Result<NodeStream> {
    let mut own: Vec<Sample> = samples.iter().filter(|s| s.node_id == node_id).copied().collect();
    if own.is_empty() {
        return Err(Error::EmptyStream { node_id });
    }
    // Stable sort, then dedup: the first occurrence of an epoch wins.
    own.sort_by_key(|s| s.epoch);
    own.dedup_by_key(|s| s.epoch);
    Ok(NodeStream { node_id, samples: own })
}

/// Segment a stream into windows of [`WINDOW_LEN`] samples, advancing by
/// `stride`. The default stride equals the window length (full turnover,
/// no overlap); a trailing remainder shorter than a window is discarded.
pub fn slide_windows(stream: &NodeStream, stride: usize) -> Result<Vec<Window>> {
    if stride == 0 {
        return Err(Error::invalid("ingest", "stride must be positive"));
    }
    let mut windows = Vec::new();
    let mut start = 0usize;
    while start + WINDOW_LEN <= stream.samples.len() {
        let chunk = stream.samples[start..start + WINDOW_LEN].to_vec();
        windows.push(Window::new(stream.node_id, start, chunk)?);
        start += stride;
    }
    Ok(windows)
}

/// Deterministic pseudo-sensor stream: per-feature slow sinusoids plus small
/// Gaussian jitter, clamped into IBRL-like bands (T 10..35, H 25..45,
/// L 0..600, V 2.3..2.8). Same (node_id, n, seed) gives an identical stream.
pub fn synth_stream(node_id: u32, n: usize, seed: u64) -> Result<NodeStream> {
    if node_id < 1 {
        return Err(Error::invalid("ingest", "node_id must be >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("ingest", "sample count must be positive"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, node_id as u64));
    let phase = node_id as f64 * 0.7;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64;
        let jitter = |rng: &mut crate::rng::PipelineRng, sd: f64| -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            z * sd
        };
        let temperature =
            (22.5 + 6.0 * (TAU * t / 600.0 + phase).sin() + jitter(&mut rng, 0.25)).clamp(10.0, 35.0);
        let humidity =
            (35.0 + 8.0 * (TAU * t / 450.0 + 1.3 * phase).sin() + jitter(&mut rng, 0.4)).clamp(25.0, 45.0);
        let light =
            (300.0 + 280.0 * (TAU * t / 720.0 + 2.1 * phase).sin() + jitter(&mut rng, 5.0)).clamp(0.0, 600.0);
        let voltage =
            (2.55 + 0.2 * (TAU * t / 900.0 + 0.4 * phase).sin() + jitter(&mut rng, 0.01)).clamp(2.3, 2.8);
        samples.push(Sample {
            epoch: i as u64 + 1,
            node_id,
            temperature,
            humidity,
            light,
            voltage,
        });
    }
    Ok(NodeStream { node_id, samples })
}
