//! Window-to-image encoding.
//!
//! Each feature series is min-max normalized with ranges fitted on training
//! windows, scaled to 0..255, and rounded to a gray level. A 64-sample
//! window becomes a 16x16 image: the 64 steps split into four blocks of 16,
//! and block k occupies rows 4k..4k+3 holding temperature, humidity, light,
//! voltage in that order. So pixel (4k + feature, c) is time step 16k + c.
//!
//! Images round-trip through binary PGM (P5) bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Feature, Window, WINDOW_LEN};
use crate::nn::tensor::Tensor3;

/// Image side; 4 features x 4 time blocks of 16 steps.
pub const IMAGE_SIDE: usize = 16;

const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Per-feature min/max fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

/// Normalization ranges for all four features, indexed by [`Feature::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub ranges: [FeatureRange; 4],
}

impl NormStats {
    pub fn range(&self, feature: Feature) -> FeatureRange {
        self.ranges[feature.index()]
    }
}

/// Fit per-feature min/max over every sample of the given windows. Call
/// this on training windows only, after fault injection, so test data
/// never leaks into the ranges and faulted extremes are representable.
pub fn fit_stats(windows: &[Window]) -> Result<NormStats> {
    if windows.is_empty() {
        return Err(Error::invalid("encode", "cannot fit stats on zero windows"));
    }
    let mut ranges = [FeatureRange {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    }; 4];
    for window in windows {
        for sample in window.samples() {
            for feature in Feature::ALL {
                let v = sample.feature(feature);
                let r = &mut ranges[feature.index()];
                r.min = r.min.min(v);
                r.max = r.max.max(v);
            }
        }
    }
    Ok(NormStats { ranges })
}

/// Min-max normalize into 0..=1, clamping out-of-range values (test data can
/// exceed the training range). A collapsed range maps everything to 0.
pub fn normalize(x: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        return 0.0;
    }
    ((x - min) / (max - min)).clamp(0.0, 1.0)
}

/// Scale a normalized value to a gray level, rounding half up.
pub fn to_gray(x: f64) -> u8 {
    (x * 255.0 + 0.5).floor() as u8
}

/// Where an image came from, for report filenames and joins back to the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub node_id: u32,
    pub start: usize,
}

/// A 16x16 gray image in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pixels: [u8; PIXELS],
    pub source: Option<WindowRef>,
}

impl GrayImage {
    pub fn from_pixels(pixels: [u8; PIXELS]) -> Self {
        GrayImage { pixels, source: None }
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * IMAGE_SIDE + col]
    }

    pub fn pixels(&self) -> &[u8; PIXELS] {
        &self.pixels
    }

    /// Network input: one channel, values scaled to 0..=1.
    pub fn to_input(&self) -> Tensor3 {
        let data: Vec<f64> = self.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        Tensor3::from_vec(IMAGE_SIDE, IMAGE_SIDE, 1, data)
    }

    /// Flat feature vector for the tree baseline, same 0..=1 scaling.
    pub fn to_features(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }
}

/// Encode one window with the given normalization ranges.
pub fn encode_window(window: &Window, stats: &NormStats) -> GrayImage {
    debug_assert_eq!(WINDOW_LEN, 4 * IMAGE_SIDE);
    let mut pixels = [0u8; PIXELS];
    for block in 0..4 {
        for feature in Feature::ALL {
            let row = 4 * block + feature.index();
            let FeatureRange { min, max } = stats.range(feature);
            for col in 0..IMAGE_SIDE {
                let t = IMAGE_SIDE * block + col;
                let v = window.samples()[t].feature(feature);
                pixels[row * IMAGE_SIDE + col] = to_gray(normalize(v, min, max));
            }
        }
    }
    GrayImage {
        pixels,
        source: Some(WindowRef {
            node_id: window.node_id(),
            start: window.start(),
        }),
    }
}

/// A corpus after encoding: images paired with labels, plus the stats that
/// produced them (needed to encode anything else consistently later).
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub stats: NormStats,
    pub train: Vec<(GrayImage, crate::ingest::Label)>,
    pub test: Vec<(GrayImage, crate::ingest::Label)>,
}

/// Fit stats on the corpus training windows and encode both sides.
pub fn encode_corpus(corpus: &crate::faults::LabeledCorpus) -> Result<EncodedCorpus> {
    let stats = fit_stats(&corpus.train)?;
    let encode_side = |side: &[Window]| -> Vec<(GrayImage, crate::ingest::Label)> {
        side.iter()
            .map(|w| (encode_window(w, &stats), w.label()))
            .collect()
    };
    Ok(EncodedCorpus {
        stats,
        train: encode_side(&corpus.train),
        test: encode_side(&corpus.test),
    })
}

/// Write a binary PGM (P5), 16x16, maxval 255.
pub fn export_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n")?;
    out.write_all(&image.pixels)?;
    out.flush()?;
    Ok(())
}

/// Read back a PGM written by [`export_pgm`]. Only the exact header form
/// produced there is accepted.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let header = format!("P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n");
    let body = bytes
        .strip_prefix(header.as_bytes())
        .ok_or_else(|| Error::ImageFormat(format!("{}: not a {IMAGE_SIDE}x{IMAGE_SIDE} P5 file", path.display())))?;
    let pixels: [u8; PIXELS] = body
        .try_into()
        .map_err(|_| Error::ImageFormat(format!("{}: expected {PIXELS} pixel bytes, got {}", path.display(), body.len())))?;
    Ok(GrayImage::from_pixels(pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{build_corpus, FaultSpec, SingleFault};
    use crate::ingest::{slide_windows, synth_stream, Label};
    use proptest::prelude::*;

    fn window() -> Window {
        let stream = synth_stream(1, 64, 17).unwrap();
        slide_windows(&stream, 64).unwrap().remove(0)
    }

    #[test]
    fn to_gray_rounds_half_up() {
        assert_eq!(to_gray(0.0), 0);
        assert_eq!(to_gray(1.0), 255);
        assert_eq!(to_gray(0.5), 128);
        assert_eq!(to_gray(127.0 / 255.0), 127);
        assert_eq!(to_gray(126.6 / 255.0), 127);
    }

    #[test]
    fn normalize_handles_edges() {
        assert_eq!(normalize(5.0, 5.0, 5.0), 0.0);
        assert_eq!(normalize(3.0, 5.0, 10.0), 0.0);
        assert_eq!(normalize(12.0, 5.0, 10.0), 1.0);
        assert_eq!(normalize(7.5, 5.0, 10.0), 0.5);
    }

    #[test]
    fn layout_places_time_and_feature_correctly() {
        let w = window();
        let stats = fit_stats(std::slice::from_ref(&w)).unwrap();
        let img = encode_window(&w, &stats);
        for block in 0..4 {
            for feature in Feature::ALL {
                let row = 4 * block + feature.index();
                for col in 0..IMAGE_SIDE {
                    let t = IMAGE_SIDE * block + col;
                    let FeatureRange { min, max } = stats.range(feature);
                    let expected = to_gray(normalize(w.samples()[t].feature(feature), min, max));
                    assert_eq!(img.pixel(row, col), expected, "row {row} col {col}");
                }
            }
        }
    }

    #[test]
    fn fitted_range_maps_extremes_to_0_and_255() {
        let w = window();
        let stats = fit_stats(std::slice::from_ref(&w)).unwrap();
        let img = encode_window(&w, &stats);
        // temperature rows are 0, 4, 8, 12; its min and max are in the window
        let temp_pixels: Vec<u8> = (0..4)
            .flat_map(|b| (0..IMAGE_SIDE).map(move |c| (4 * b, c)))
            .map(|(r, c)| img.pixel(r, c))
            .collect();
        assert!(temp_pixels.contains(&0));
        assert!(temp_pixels.contains(&255));
    }

    #[test]
    fn source_records_window_identity() {
        let stream = synth_stream(3, 200, 5).unwrap();
        let windows = slide_windows(&stream, 64).unwrap();
        let stats = fit_stats(&windows).unwrap();
        let img = encode_window(&windows[2], &stats);
        assert_eq!(img.source, Some(WindowRef { node_id: 3, start: 128 }));
    }

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let w = window();
        let stats = fit_stats(std::slice::from_ref(&w)).unwrap();
        let img = encode_window(&w, &stats);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.pgm");
        export_pgm(&img, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.pixels(), img.pixels());

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..13], b"P5\n16 16\n255\n");
        assert_eq!(bytes.len(), 13 + 256);
    }

    #[test]
    fn read_pgm_rejects_wrong_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P5\n8 8\n255\n").unwrap();
        assert!(matches!(read_pgm(&path), Err(Error::ImageFormat(_))));
        let path2 = dir.path().join("trunc.pgm");
        std::fs::write(&path2, b"P5\n16 16\n255\n\x01\x02").unwrap();
        assert!(matches!(read_pgm(&path2), Err(Error::ImageFormat(_))));
    }

    #[test]
    fn encode_corpus_fits_on_train_only() {
        let stream = synth_stream(1, 64 * 20, 3).unwrap();
        let windows = slide_windows(&stream, 64).unwrap();
        let spec = FaultSpec::single(SingleFault::Fixed { g: 500.0 }, 20, 7);
        let corpus = build_corpus(&windows, &spec, 0.5, 0.7, 15).unwrap();
        let encoded = encode_corpus(&corpus).unwrap();
        let direct = fit_stats(&corpus.train).unwrap();
        assert_eq!(encoded.stats, direct);
        assert_eq!(encoded.train.len(), corpus.train.len());
        assert_eq!(encoded.test.len(), corpus.test.len());
        // G=500 dominates every synthetic temperature, so it pins the max
        assert_eq!(direct.range(Feature::Temperature).max, 500.0);
        // labels carried through
        let abn = encoded.train.iter().filter(|(_, l)| *l == Label::Abnormal).count();
        assert_eq!(abn, corpus.train.iter().filter(|w| w.label().is_abnormal()).count());
    }

    #[test]
    fn input_tensor_is_scaled_image() {
        let w = window();
        let stats = fit_stats(std::slice::from_ref(&w)).unwrap();
        let img = encode_window(&w, &stats);
        let input = img.to_input();
        assert_eq!((input.height, input.width, input.channels), (16, 16, 1));
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(input.get(r, c, 0), img.pixel(r, c) as f64 / 255.0);
            }
        }
        let feats = img.to_features();
        assert_eq!(feats.len(), 256);
        assert_eq!(feats[17], img.pixel(1, 1) as f64 / 255.0);
    }

    proptest! {
        #[test]
        fn normalize_is_monotone_and_bounded(
            a in -50.0f64..50.0,
            b in -50.0f64..50.0,
            min in -10.0f64..10.0,
            span in 0.1f64..40.0,
        ) {
            let max = min + span;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let na = normalize(lo, min, max);
            let nb = normalize(hi, min, max);
            prop_assert!(na <= nb);
            prop_assert!((0.0..=1.0).contains(&na));
            prop_assert!((0.0..=1.0).contains(&nb));
        }

        #[test]
        fn encoding_ignores_metadata(seed in 0u64..200) {
            // Two windows with identical sample values but different starts
            // and node ids must encode to identical pixels.
            let stream = synth_stream(1, 64, seed).unwrap();
            let w1 = slide_windows(&stream, 64).unwrap().remove(0);
            let shifted: Vec<_> = w1
                .samples()
                .iter()
                .map(|s| crate::ingest::Sample { node_id: 9, epoch: s.epoch + 1000, ..*s })
                .collect();
            let w2 = Window::new(9, 5, shifted).unwrap();
            let stats = fit_stats(std::slice::from_ref(&w1)).unwrap();
            let i1 = encode_window(&w1, &stats);
            let i2 = encode_window(&w2, &stats);
            prop_assert_eq!(i1.pixels(), i2.pixels());
        }
    }
}
