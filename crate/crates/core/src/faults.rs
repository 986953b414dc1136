//! Fault injection into the temperature channel of normal windows.
//!
//! Three single faults and their pairwise mixtures:
//!
//! * noise: a contiguous run of w points gets additive Gaussian noise with
//!   standard deviation r times the window's own temperature std,
//! * short: w scattered points are bumped by a multiple of their own value
//!   (x becomes x + f*x),
//! * fixed: a contiguous run of w points is overwritten with a constant G.
//!
//! Mixed faults apply two different single faults in sequence to one shared
//! contiguous segment. Only the temperature series is ever modified;
//! humidity, light, and voltage pass through untouched.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Label, Window, WINDOW_LEN};
use crate::rng::{derive_seed, rng_from_seed};

/// Default number of faulty points per abnormal window.
pub const DEFAULT_FAULT_LEN: usize = 20;

/// One elementary fault with its intensity knob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SingleFault {
    /// Additive Gaussian noise, sigma = r * std(temperature of the window).
    Noise { r: f64 },
    /// Multiplicative bump x + f*x at scattered points.
    Short { f: f64 },
    /// Constant overwrite with G on a contiguous run.
    Fixed { g: f64 },
}

impl SingleFault {
    pub fn name(self) -> &'static str {
        match self {
            SingleFault::Noise { .. } => "noise",
            SingleFault::Short { .. } => "short",
            SingleFault::Fixed { .. } => "fixed",
        }
    }

    /// The intensity parameter as a bare number (r, f, or G).
    pub fn intensity(self) -> f64 {
        match self {
            SingleFault::Noise { r } => r,
            SingleFault::Short { f } => f,
            SingleFault::Fixed { g } => g,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            SingleFault::Noise { r } if !(r > 0.0) => {
                Err(Error::invalid("faults", "noise ratio r must be > 0"))
            }
            SingleFault::Short { f } if !(f > 0.0) => {
                Err(Error::invalid("faults", "short factor f must be > 0"))
            }
            SingleFault::Fixed { g } if !g.is_finite() => {
                Err(Error::invalid("faults", "fixed value G must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// A single fault or an ordered pair of distinct single faults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FaultKind {
    Single { fault: SingleFault },
    Mixed { first: SingleFault, second: SingleFault },
}

impl FaultKind {
    /// Stable name for reports: "noise", "short", "fixed", "noise+fixed", ...
    pub fn name(&self) -> String {
        match self {
            FaultKind::Single { fault } => fault.name().to_string(),
            FaultKind::Mixed { first, second } => format!("{}+{}", first.name(), second.name()),
        }
    }
}

/// Complete recipe for one injection: what, how many points, which seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Number of modified points w, 1..=64.
    pub w: usize,
    pub seed: u64,
}

impl FaultSpec {
    pub fn single(fault: SingleFault, w: usize, seed: u64) -> Self {
        FaultSpec {
            kind: FaultKind::Single { fault },
            w,
            seed,
        }
    }

    pub fn mixed(first: SingleFault, second: SingleFault, w: usize, seed: u64) -> Self {
        FaultSpec {
            kind: FaultKind::Mixed { first, second },
            w,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.w > WINDOW_LEN {
            return Err(Error::invalid(
                "faults",
                format!("fault length w must be in 1..={WINDOW_LEN}, got {}", self.w),
            ));
        }
        match self.kind {
            FaultKind::Single { fault } => fault.validate(),
            FaultKind::Mixed { first, second } => {
                first.validate()?;
                second.validate()?;
                if first.name() == second.name() {
                    return Err(Error::invalid(
                        "faults",
                        "mixed fault needs two different fault kinds",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Seed for the i-th window injected under this spec within a corpus.
    fn window_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, 0x1_0000 + i as u64)
    }
}

/// Sample standard deviation (n-1 denominator) of the window's temperatures.
fn temperature_std(window: &Window) -> f64 {
    let temps = window.temperatures();
    let n = temps.len() as f64;
    let mean = temps.iter().sum::<f64>() / n;
    let var = temps.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

fn check_normal_input(window: &Window) -> Result<()> {
    if window.label() != Label::Normal {
        return Err(Error::invalid("faults", "injection input must be a normal window"));
    }
    Ok(())
}

/// True when the temperature series has zero spread, which makes the
/// noise sigma r*std degenerate. Exact comparison on purpose: the failure
/// mode is a run of bit-identical stuck readings.
fn is_degenerate(window: &Window) -> bool {
    let temps = window.temperatures();
    let min = temps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = temps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    min == max
}

fn contiguous_start(rng: &mut crate::rng::PipelineRng, w: usize) -> usize {
    rng.random_range(0..=WINDOW_LEN - w)
}

fn apply_noise(
    window: &mut Window,
    r: f64,
    segment: &[usize],
    sigma_basis: f64,
    rng: &mut crate::rng::PipelineRng,
) -> Result<()> {
    let normal = Normal::new(0.0, r * sigma_basis)
        .map_err(|e| Error::invalid("faults", format!("bad noise distribution: {e}")))?;
    for &i in segment {
        let bumped = window.samples()[i].temperature + normal.sample(rng);
        window.set_temperature(i, bumped);
    }
    Ok(())
}

fn apply_short(window: &mut Window, f: f64, segment: &[usize]) {
    for &i in segment {
        let x = window.samples()[i].temperature;
        window.set_temperature(i, x + f * x);
    }
}

fn apply_fixed(window: &mut Window, g: f64, segment: &[usize]) {
    for &i in segment {
        window.set_temperature(i, g);
    }
}

/// Noise fault: contiguous run of `w` points, additive N(0, (r*std)^2).
pub fn inject_noise(window: &Window, r: f64, w: usize, seed: u64) -> Result<Window> {
    let spec = FaultSpec::single(SingleFault::Noise { r }, w, seed);
    inject(window, &spec)
}

/// Short fault: `w` scattered points get x + f*x.
pub fn inject_short(window: &Window, f: f64, w: usize, seed: u64) -> Result<Window> {
    let spec = FaultSpec::single(SingleFault::Short { f }, w, seed);
    inject(window, &spec)
}

/// Fixed fault: contiguous run of `w` points overwritten with G.
pub fn inject_fixed(window: &Window, g: f64, w: usize, seed: u64) -> Result<Window> {
    let spec = FaultSpec::single(SingleFault::Fixed { g }, w, seed);
    inject(window, &spec)
}

/// Mixed fault: `first` then `second` applied to one shared contiguous
/// segment of `w` points.
pub fn inject_mixed(
    window: &Window,
    first: SingleFault,
    second: SingleFault,
    w: usize,
    seed: u64,
) -> Result<Window> {
    let spec = FaultSpec::mixed(first, second, w, seed);
    inject(window, &spec)
}

/// Apply `spec` to a normal window, producing the abnormal copy. The input
/// is never mutated. Noise sigma is always based on the pre-injection
/// temperature std, also for the second half of a mixed fault.
pub fn inject(window: &Window, spec: &FaultSpec) -> Result<Window> {
    check_normal_input(window)?;
    spec.validate()?;

    let needs_std = match spec.kind {
        FaultKind::Single { fault } => matches!(fault, SingleFault::Noise { .. }),
        FaultKind::Mixed { first, second } => {
            matches!(first, SingleFault::Noise { .. }) || matches!(second, SingleFault::Noise { .. })
        }
    };
    if needs_std && is_degenerate(window) {
        return Err(Error::DegenerateWindow);
    }
    let sigma_basis = temperature_std(window);

    let mut rng = rng_from_seed(spec.seed);
    let mut out = window.clone();
    match spec.kind {
        FaultKind::Single { fault } => {
            let segment = pick_segment(&mut rng, fault, spec.w);
            apply_single(&mut out, fault, &segment, sigma_basis, &mut rng)?;
        }
        FaultKind::Mixed { first, second } => {
            // Both halves hit the same contiguous run of points.
            let start = contiguous_start(&mut rng, spec.w);
            let segment: Vec<usize> = (start..start + spec.w).collect();
            apply_single(&mut out, first, &segment, sigma_basis, &mut rng)?;
            apply_single(&mut out, second, &segment, sigma_basis, &mut rng)?;
        }
    }
    out.set_fault(*spec);
    Ok(out)
}

fn pick_segment(
    rng: &mut crate::rng::PipelineRng,
    fault: SingleFault,
    w: usize,
) -> Vec<usize> {
    match fault {
        // Short faults hit scattered points; the other two hit a run.
        SingleFault::Short { .. } => {
            let mut idx = sample_indices(rng, WINDOW_LEN, w).into_vec();
            idx.sort_unstable();
            idx
        }
        SingleFault::Noise { .. } | SingleFault::Fixed { .. } => {
            let start = contiguous_start(rng, w);
            (start..start + w).collect()
        }
    }
}

fn apply_single(
    window: &mut Window,
    fault: SingleFault,
    segment: &[usize],
    sigma_basis: f64,
    rng: &mut crate::rng::PipelineRng,
) -> Result<()> {
    match fault {
        SingleFault::Noise { r } => apply_noise(window, r, segment, sigma_basis, rng),
        SingleFault::Short { f } => {
            apply_short(window, f, segment);
            Ok(())
        }
        SingleFault::Fixed { g } => {
            apply_fixed(window, g, segment);
            Ok(())
        }
    }
}

/// A labeled train/test corpus created from normal windows by injecting one
/// fault recipe into a fraction of them.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub train: Vec<Window>,
    pub test: Vec<Window>,
    pub fault: FaultSpec,
    pub seed: u64,
}

impl LabeledCorpus {
    /// (normal, abnormal) counts over train and test together.
    pub fn balance(&self) -> (usize, usize) {
        let mut normal = 0;
        let mut abnormal = 0;
        for w in self.train.iter().chain(self.test.iter()) {
            match w.label() {
                Label::Normal => normal += 1,
                Label::Abnormal => abnormal += 1,
            }
        }
        (normal, abnormal)
    }
}

/// Build a labeled corpus: shuffle the normal windows, inject `spec` into
/// `abnormal_fraction` of them (rounded), then split each class `split`
/// into train and the rest into test, so both sides keep the class mix.
/// Every class/split cell must end up non-empty.
pub fn build_corpus(
    windows: &[Window],
    spec: &FaultSpec,
    abnormal_fraction: f64,
    split: f64,
    seed: u64,
) -> Result<LabeledCorpus> {
    spec.validate()?;
    if windows.is_empty() {
        return Err(Error::Corpus("no input windows".into()));
    }
    if windows.iter().any(|w| w.label() != Label::Normal) {
        return Err(Error::Corpus("corpus inputs must all be normal windows".into()));
    }
    if !(0.0..=1.0).contains(&abnormal_fraction) {
        return Err(Error::Corpus("abnormal_fraction must be in 0..=1".into()));
    }
    if !(0.0..=1.0).contains(&split) {
        return Err(Error::Corpus("split must be in 0..=1".into()));
    }

    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut rng = rng_from_seed(derive_seed(seed, 0xC0));
    shuffle(&mut order, &mut rng);

    let n_abnormal = (windows.len() as f64 * abnormal_fraction).round() as usize;
    let mut abnormal = Vec::with_capacity(n_abnormal);
    let mut normal = Vec::with_capacity(windows.len() - n_abnormal);
    for (i, &wi) in order.iter().enumerate() {
        if i < n_abnormal {
            let mut per_window = *spec;
            per_window.seed = spec.window_seed(i);
            abnormal.push(inject(&windows[wi], &per_window)?);
        } else {
            normal.push(windows[wi].clone());
        }
    }

    let cut = |v: &[Window]| -> usize { (v.len() as f64 * split).round() as usize };
    let an = cut(&abnormal);
    let nn = cut(&normal);
    if an == 0 || nn == 0 || an == abnormal.len() || nn == normal.len() {
        return Err(Error::Corpus(format!(
            "split leaves an empty cell: {} abnormal -> {}/{} train/test, {} normal -> {}/{}",
            abnormal.len(),
            an,
            abnormal.len().saturating_sub(an),
            normal.len(),
            nn,
            normal.len().saturating_sub(nn),
        )));
    }

    let mut train: Vec<Window> = Vec::with_capacity(an + nn);
    let mut test: Vec<Window> = Vec::with_capacity(windows.len() - an - nn);
    train.extend_from_slice(&abnormal[..an]);
    test.extend_from_slice(&abnormal[an..]);
    train.extend_from_slice(&normal[..nn]);
    test.extend_from_slice(&normal[nn..]);

    // Interleave classes deterministically so batches are not sorted by label.
    let mut train_rng = rng_from_seed(derive_seed(seed, 0xC1));
    let mut test_rng = rng_from_seed(derive_seed(seed, 0xC2));
    shuffle_windows(&mut train, &mut train_rng);
    shuffle_windows(&mut test, &mut test_rng);

    Ok(LabeledCorpus {
        train,
        test,
        fault: *spec,
        seed,
    })
}

fn shuffle(order: &mut [usize], rng: &mut crate::rng::PipelineRng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

fn shuffle_windows(windows: &mut [Window], rng: &mut crate::rng::PipelineRng) {
    for i in (1..windows.len()).rev() {
        let j = rng.random_range(0..=i);
        windows.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_stream, slide_windows, Sample};
    use proptest::prelude::*;

    fn normal_window() -> Window {
        let stream = synth_stream(1, 64, 21).unwrap();
        slide_windows(&stream, 64).unwrap().remove(0)
    }

    fn flat_window(t: f64) -> Window {
        let samples: Vec<Sample> = (0..64)
            .map(|i| Sample {
                epoch: i as u64 + 1,
                node_id: 1,
                temperature: t,
                humidity: 40.0,
                light: 100.0,
                voltage: 2.5,
            })
            .collect();
        Window::new(1, 0, samples).unwrap()
    }

    fn changed_indices(before: &Window, after: &Window) -> Vec<usize> {
        (0..64)
            .filter(|&i| before.samples()[i].temperature != after.samples()[i].temperature)
            .collect()
    }

    #[test]
    fn short_bumps_scattered_points_by_f_times_x() {
        let w = flat_window(10.0);
        let out = inject_short(&w, 1.5, 20, 5).unwrap();
        let changed = changed_indices(&w, &out);
        assert_eq!(changed.len(), 20);
        for &i in &changed {
            assert_eq!(out.samples()[i].temperature, 25.0);
        }
        assert_eq!(out.label(), Label::Abnormal);
    }

    #[test]
    fn fixed_overwrites_a_contiguous_run() {
        let w = normal_window();
        let out = inject_fixed(&w, 300.0, 20, 6).unwrap();
        let changed = changed_indices(&w, &out);
        assert_eq!(changed.len(), 20);
        // contiguous: indices form one run
        assert_eq!(changed[changed.len() - 1] - changed[0] + 1, changed.len());
        for &i in &changed {
            assert_eq!(out.samples()[i].temperature, 300.0);
        }
    }

    #[test]
    fn noise_touches_a_contiguous_run_and_nothing_else() {
        let w = normal_window();
        let out = inject_noise(&w, 2.0, 20, 7).unwrap();
        let changed = changed_indices(&w, &out);
        // Gaussian draws are never exactly zero in practice
        assert_eq!(changed.len(), 20);
        assert_eq!(changed[changed.len() - 1] - changed[0] + 1, changed.len());
        for i in 0..64 {
            let a = &w.samples()[i];
            let b = &out.samples()[i];
            assert_eq!(a.humidity, b.humidity);
            assert_eq!(a.light, b.light);
            assert_eq!(a.voltage, b.voltage);
            assert_eq!(a.epoch, b.epoch);
        }
    }

    #[test]
    fn noise_on_flat_window_is_degenerate() {
        let w = flat_window(20.0);
        assert!(matches!(
            inject_noise(&w, 1.0, 20, 3),
            Err(Error::DegenerateWindow)
        ));
        // fixed and short still work on flat windows
        assert!(inject_fixed(&w, 300.0, 20, 3).is_ok());
        assert!(inject_short(&w, 1.5, 20, 3).is_ok());
    }

    #[test]
    fn mixed_with_fixed_second_ends_at_g() {
        let w = normal_window();
        let out = inject_mixed(
            &w,
            SingleFault::Noise { r: 1.5 },
            SingleFault::Fixed { g: 300.0 },
            20,
            9,
        )
        .unwrap();
        let changed = changed_indices(&w, &out);
        assert_eq!(changed.len(), 20);
        for &i in &changed {
            assert_eq!(out.samples()[i].temperature, 300.0);
        }
    }

    #[test]
    fn mixed_shares_one_segment() {
        let w = normal_window();
        let out = inject_mixed(
            &w,
            SingleFault::Short { f: 1.5 },
            SingleFault::Fixed { g: 300.0 },
            20,
            11,
        )
        .unwrap();
        let changed = changed_indices(&w, &out);
        assert_eq!(changed.len(), 20);
        assert_eq!(changed[changed.len() - 1] - changed[0] + 1, changed.len());
    }

    #[test]
    fn mixed_rejects_same_kind_twice() {
        let spec = FaultSpec::mixed(
            SingleFault::Noise { r: 1.0 },
            SingleFault::Noise { r: 2.0 },
            20,
            1,
        );
        assert!(spec.validate().is_err());
    }

    #[test]
    fn injection_is_deterministic_in_seed() {
        let w = normal_window();
        let a = inject_noise(&w, 1.0, 20, 42).unwrap();
        let b = inject_noise(&w, 1.0, 20, 42).unwrap();
        assert_eq!(a, b);
        let c = inject_noise(&w, 1.0, 20, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn injection_rejects_abnormal_input() {
        let w = normal_window();
        let faulty = inject_fixed(&w, 300.0, 20, 1).unwrap();
        assert!(inject_fixed(&faulty, 300.0, 20, 2).is_err());
    }

    #[test]
    fn spec_validation_bounds() {
        assert!(FaultSpec::single(SingleFault::Noise { r: 1.0 }, 0, 1).validate().is_err());
        assert!(FaultSpec::single(SingleFault::Noise { r: 1.0 }, 65, 1).validate().is_err());
        assert!(FaultSpec::single(SingleFault::Noise { r: 0.0 }, 20, 1).validate().is_err());
        assert!(FaultSpec::single(SingleFault::Short { f: -1.0 }, 20, 1).validate().is_err());
        assert!(FaultSpec::single(SingleFault::Fixed { g: f64::NAN }, 20, 1).validate().is_err());
        assert!(FaultSpec::single(SingleFault::Fixed { g: 150.0 }, 64, 1).validate().is_ok());
    }

    #[test]
    fn corpus_is_balanced_and_split() {
        let stream = synth_stream(1, 64 * 40, 13).unwrap();
        let windows = slide_windows(&stream, 64).unwrap();
        let spec = FaultSpec::single(SingleFault::Fixed { g: 500.0 }, 20, 77);
        let corpus = build_corpus(&windows, &spec, 0.5, 0.7, 99).unwrap();
        let (normal, abnormal) = corpus.balance();
        assert_eq!(normal, 20);
        assert_eq!(abnormal, 20);
        assert_eq!(corpus.train.len(), 28);
        assert_eq!(corpus.test.len(), 12);
        // both sides keep the class mix
        let train_abn = corpus.train.iter().filter(|w| w.label().is_abnormal()).count();
        let test_abn = corpus.test.iter().filter(|w| w.label().is_abnormal()).count();
        assert_eq!(train_abn, 14);
        assert_eq!(test_abn, 6);
        // abnormal windows carry the recipe; normal ones do not
        for w in corpus.train.iter().chain(corpus.test.iter()) {
            assert_eq!(w.label().is_abnormal(), w.fault().is_some());
        }
    }

    #[test]
    fn corpus_too_small_to_split_is_an_error() {
        let stream = synth_stream(1, 64 * 2, 13).unwrap();
        let windows = slide_windows(&stream, 64).unwrap();
        let spec = FaultSpec::single(SingleFault::Fixed { g: 500.0 }, 20, 77);
        assert!(matches!(
            build_corpus(&windows, &spec, 0.5, 0.7, 99),
            Err(Error::Corpus(_))
        ));
    }

    #[test]
    fn corpus_is_deterministic() {
        let stream = synth_stream(1, 64 * 20, 13).unwrap();
        let windows = slide_windows(&stream, 64).unwrap();
        let spec = FaultSpec::single(SingleFault::Short { f: 2.0 }, 20, 5);
        let a = build_corpus(&windows, &spec, 0.5, 0.7, 31).unwrap();
        let b = build_corpus(&windows, &spec, 0.5, 0.7, 31).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    proptest! {
        #[test]
        fn untouched_positions_survive_every_injector(
            w in 1usize..=64,
            seed in 0u64..1000,
            pick in 0usize..4,
        ) {
            let window = normal_window();
            let spec = match pick {
                0 => FaultSpec::single(SingleFault::Noise { r: 1.5 }, w, seed),
                1 => FaultSpec::single(SingleFault::Short { f: 2.0 }, w, seed),
                2 => FaultSpec::single(SingleFault::Fixed { g: 150.0 }, w, seed),
                _ => FaultSpec::mixed(
                    SingleFault::Noise { r: 1.5 },
                    SingleFault::Fixed { g: 300.0 },
                    w,
                    seed,
                ),
            };
            let out = inject(&window, &spec).unwrap();
            let changed = changed_indices(&window, &out);
            prop_assert!(changed.len() <= w);
            for i in 0..64 {
                let a = &window.samples()[i];
                let b = &out.samples()[i];
                prop_assert_eq!(a.humidity, b.humidity);
                prop_assert_eq!(a.light, b.light);
                prop_assert_eq!(a.voltage, b.voltage);
                if !changed.contains(&i) {
                    prop_assert_eq!(a.temperature, b.temperature);
                }
            }
        }
    }
}
