//! Scalar quantization of effective channel gains.
//!
//! A `B`-bit quantizer with step `delta` maps a nonnegative gain to
//! `floor(x / delta) * delta`, capped at the top level `(2^B - 1) * delta`.
//! Reconstruction therefore never exceeds the input, the error is below
//! `delta` until the input crosses the top level, and beyond that the error
//! equals the saturation overshoot. Step sizes are trained by minimizing the
//! mean squared reconstruction error over samples of the selected-beam gain
//! `max_j |h^H c_j|^2`, the same statistic the quantizer sees in operation.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::channel::draw_rayleigh;
use crate::codebook::generate_rvq;
use crate::error::{Error, Result};
use crate::textfmt::g6;

/// Uniform gain quantizer with saturation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainQuantizer {
    delta: f64,
    bits: u32,
}

/// One quantized gain report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantized {
    /// Reconstructed gain `level * delta`.
    pub value: f64,
    /// Level index in `0..2^B`.
    pub level: u32,
    /// Whether the input reached the top level.
    pub saturated: bool,
}

impl GainQuantizer {
    /// Build a quantizer; `delta` must be positive and finite, `bits` in
    /// `1..=31`.
    pub fn new(delta: f64, bits: u32) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Domain(format!("step size {delta} must be positive")));
        }
        if bits == 0 || bits > 31 {
            return Err(Error::Domain(format!("bits {bits} outside supported range 1..=31")));
        }
        Ok(Self { delta, bits })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of levels, `2^B`.
    pub fn levels(&self) -> u32 {
        1u32 << self.bits
    }

    /// Largest reconstructible gain, `(2^B - 1) * delta`.
    pub fn max_level_value(&self) -> f64 {
        f64::from(self.levels() - 1) * self.delta
    }

    /// Quantize a nonnegative finite gain.
    pub fn quantize(&self, x: f64) -> Result<Quantized> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Domain(format!("gain {x} must be finite and nonnegative")));
        }
        let cap = self.levels() - 1;
        let raw = (x / self.delta).floor();
        let level = if raw >= f64::from(cap) { cap } else { raw as u32 };
        Ok(Quantized {
            value: f64::from(level) * self.delta,
            level,
            saturated: level == cap,
        })
    }

    /// Overshoot past the top level, `max(0, x - (2^B - 1) * delta)`.
    ///
    /// On a saturated input this is the reconstruction error; it replaces
    /// `delta` as the gain-error budget in the bound evaluators.
    pub fn saturation_gap(&self, x: f64) -> f64 {
        (x - self.max_level_value()).max(0.0)
    }
}

/// Draw gain samples for step-size training: one fresh channel and one fresh
/// codebook per sample, reporting the selected beam's effective gain.
///
/// The distribution depends only on `n_t` and `codebook_bits`, so a single
/// sample set trains quantizers for every CQI budget `B`.
pub fn training_samples<R: Rng + ?Sized>(
    n_t: usize,
    codebook_bits: u32,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let h = draw_rayleigh(n_t, rng)?;
        let cb = generate_rvq(n_t, codebook_bits, rng)?;
        xs.push(cb.select_pmi(&h)?.effective_gain);
    }
    Ok(xs)
}

/// Crossing-count limit for the exact trainer, about half a gigabyte of
/// transient sort buffer at the 16-byte entry size.
const EXACT_SWEEP_MAX_CROSSINGS: u64 = 30_000_000;

/// Train a `bits`-bit step size by minimizing mean squared reconstruction
/// error over `samples`.
///
/// As `delta` grows past `x / k` sample `x` drops from level `k` to
/// `k - 1`; between consecutive crossings the level assignment is constant
/// and the objective is a convex parabola in `delta`. Sweeping every
/// crossing in ascending order with running sums therefore yields the exact
/// global minimum over `(0, max_sample]`. Budgets whose crossing count
/// `samples * (2^B - 1)` would exceed thirty million instead use a
/// geometric scan with two linear refinement passes, which is approximate
/// but operates where the optimal step is already tiny.
pub fn train_delta(samples: &[f64], bits: u32) -> Result<f64> {
    if bits == 0 || bits > 31 {
        return Err(Error::Domain(format!("bits {bits} outside supported range 1..=31")));
    }
    let mut x_max = 0.0_f64;
    for &x in samples {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Domain(format!("training sample {x} must be finite and nonnegative")));
        }
        x_max = x_max.max(x);
    }
    if samples.is_empty() || x_max == 0.0 {
        return Err(Error::Domain("training requires a positive gain sample".into()));
    }
    let cap = (1u32 << bits) - 1;
    if (samples.len() as u64) * u64::from(cap) <= EXACT_SWEEP_MAX_CROSSINGS {
        Ok(exact_sweep(samples, cap))
    } else {
        Ok(grid_sweep(samples, bits, cap, x_max))
    }
}

/// Exact minimizer of the piecewise-quadratic training objective.
fn exact_sweep(samples: &[f64], cap: u32) -> f64 {
    let capf = f64::from(cap);
    // Crossings as (step, sample); zero samples sit at level 0 with zero
    // error for every step and are left out of the running sums.
    let mut crossings: Vec<(f64, f64)> = Vec::new();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut sx2 = 0.0;
    for &x in samples {
        if x <= 0.0 {
            continue;
        }
        s1 += capf * x;
        s2 += capf * capf;
        sx2 += x * x;
        for k in 1..=cap {
            crossings.push((x / f64::from(k), x));
        }
    }
    crossings.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    // Just above zero every positive sample saturates at the top level, so
    // the sums start from the all-saturated assignment and shed one level
    // per crossing.
    let nf = samples.len() as f64;
    let mut best_mse = f64::INFINITY;
    let mut best_delta = crossings[0].0;
    let mut lo = 0.0;
    let mut i = 0;
    while i < crossings.len() {
        let hi = crossings[i].0;
        if hi > lo && s2 > 0.0 {
            // On (lo, hi] the assignment is fixed and the objective is
            // (sx2 - 2 s1 d + s2 d^2) / n, minimized at s1 / s2. Evaluating
            // at the open end with this assignment only overestimates, so
            // clamping cannot create a false minimum.
            let d = (s1 / s2).clamp(lo, hi);
            let mse = (sx2 - 2.0 * s1 * d + s2 * d * d) / nf;
            if mse < best_mse {
                best_mse = mse;
                best_delta = d;
            }
        }
        // Apply every level drop at this step before looking at the next
        // piece; ties commute, so the order within a step does not matter.
        while i < crossings.len() && crossings[i].0 == hi {
            let x = crossings[i].1;
            let k = (x / hi).round();
            s1 -= x;
            s2 -= 2.0 * k - 1.0;
            i += 1;
        }
        lo = hi;
    }
    best_delta
}

/// Geometric scan with two linear refinements for budgets too fine to sweep
/// exactly.
fn grid_sweep(samples: &[f64], bits: u32, cap: u32, x_max: f64) -> f64 {
    let mse = |delta: f64| -> f64 {
        let q = GainQuantizer::new(delta, bits).expect("scan steps are positive");
        let sum: f64 = samples
            .iter()
            .map(|&x| {
                let e = x - q.quantize(x).expect("samples validated").value;
                e * e
            })
            .sum();
        sum / samples.len() as f64
    };

    const COARSE: usize = 2048;
    const FINE: usize = 64;
    let log_lo = (x_max / (8.0 * f64::from(cap))).ln();
    let log_hi = x_max.ln();
    let point = |i: usize| (log_lo + (log_hi - log_lo) * i as f64 / (COARSE - 1) as f64).exp();

    let mut best = (f64::INFINITY, x_max);
    let mut best_i = 0;
    for i in 0..COARSE {
        let d = point(i);
        let j = mse(d);
        if j < best.0 {
            best = (j, d);
            best_i = i;
        }
    }
    let mut a = point(best_i.saturating_sub(1));
    let mut b = point((best_i + 1).min(COARSE - 1));
    for _ in 0..2 {
        for i in 0..=FINE {
            let d = a + (b - a) * i as f64 / FINE as f64;
            let j = mse(d);
            if j < best.0 {
                best = (j, d);
            }
        }
        let width = (b - a) / FINE as f64;
        a = (best.1 - width).max(point(0));
        b = best.1 + width;
    }
    best.1
}

/// Pre-trained step sizes for two-antenna channels, indexed by codebook bits
/// (rows, `B'` = 1..=6) and gain bits (columns, `B` = 1..=6).
///
/// Trained offline with the MSE objective over `max_j |h^H c_j|^2` on
/// unit-variance Rayleigh fading. Steps shrink as gain bits grow (finer
/// levels over the same range) and grow with codebook bits (better beams
/// push the gain distribution upward).
pub const REFERENCE_DELTAS: [[f64; 6]; 6] = [
    [1.59, 0.97, 0.60, 0.36, 0.22, 0.13],
    [1.70, 1.06, 0.65, 0.39, 0.23, 0.13],
    [1.81, 1.11, 0.69, 0.42, 0.24, 0.14],
    [1.92, 1.16, 0.71, 0.43, 0.25, 0.14],
    [1.98, 1.20, 0.73, 0.44, 0.26, 0.15],
    [2.00, 1.22, 0.75, 0.44, 0.26, 0.15],
];

/// Look up the pre-trained step size for `cqi_bits` and `codebook_bits`,
/// both in `1..=6`; other budgets must train or set a step explicitly.
pub fn reference_delta(cqi_bits: u32, codebook_bits: u32) -> Option<f64> {
    if (1..=6).contains(&cqi_bits) && (1..=6).contains(&codebook_bits) {
        Some(REFERENCE_DELTAS[(codebook_bits - 1) as usize][(cqi_bits - 1) as usize])
    } else {
        None
    }
}

/// Trained step sizes keyed by `(cqi_bits, codebook_bits, n_t, seed)`.
///
/// Values are rounded to the six-significant-digit on-disk format on insert,
/// so a run that trains and a later run that reloads the cache use bit-equal
/// steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeltaCache {
    map: BTreeMap<(u32, u32, usize, u64), f64>,
}

const CACHE_HEADER: &str = "B,Bprime,Nt,seed,delta";

impl DeltaCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, cqi_bits: u32, codebook_bits: u32, n_t: usize, seed: u64) -> Option<f64> {
        self.map.get(&(cqi_bits, codebook_bits, n_t, seed)).copied()
    }

    /// Insert a trained step, returning the rounded value actually stored.
    pub fn insert(&mut self, cqi_bits: u32, codebook_bits: u32, n_t: usize, seed: u64, delta: f64) -> f64 {
        let stored: f64 = g6(delta).parse().expect("g6 output parses");
        self.map.insert((cqi_bits, codebook_bits, n_t, seed), stored);
        stored
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Write as CSV with a header line, rows sorted by key.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CACHE_HEADER}")?;
        for (&(b, bp, n_t, seed), &delta) in &self.map {
            writeln!(w, "{b},{bp},{n_t},{seed},{}", g6(delta))?;
        }
        Ok(())
    }

    /// Read a cache written by [`write_text`](Self::write_text); the header
    /// line is optional.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut cache = Self::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == CACHE_HEADER {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!(
                    "line {}: expected 5 comma-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |what: &str, s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: bad {what}: {e}", lineno + 1)))
            };
            let b = parse("B", fields[0])? as u32;
            let bp = parse("Bprime", fields[1])? as u32;
            let n_t = parse("Nt", fields[2])? as usize;
            let seed: u64 = fields[3].trim().parse().map_err(|e| {
                Error::Parse(format!("line {}: bad seed: {e}", lineno + 1))
            })?;
            let delta = parse("delta", fields[4])?;
            cache.insert(b, bp, n_t, seed, delta);
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamDomain};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn quantize_rounds_down_with_saturation() {
        let q = GainQuantizer::new(0.5, 2).unwrap();
        assert_eq!(q.levels(), 4);
        assert_relative_eq!(q.max_level_value(), 1.5);

        let low = q.quantize(0.7).unwrap();
        assert_eq!(low, Quantized { value: 0.5, level: 1, saturated: false });

        let near_top = q.quantize(1.49).unwrap();
        assert_eq!(near_top.level, 2);
        assert!(!near_top.saturated);

        let at_top = q.quantize(1.5).unwrap();
        assert_eq!(at_top, Quantized { value: 1.5, level: 3, saturated: true });

        let beyond = q.quantize(10.0).unwrap();
        assert_eq!(beyond.level, 3);
        assert!(beyond.saturated);
        assert_relative_eq!(q.saturation_gap(10.0), 8.5);
        assert_relative_eq!(q.saturation_gap(0.7), 0.0);

        let zero = q.quantize(0.0).unwrap();
        assert_eq!(zero.level, 0);
        assert!(!zero.saturated);
    }

    #[test]
    fn constructor_and_quantize_reject_bad_input() {
        assert!(GainQuantizer::new(0.0, 4).is_err());
        assert!(GainQuantizer::new(-1.0, 4).is_err());
        assert!(GainQuantizer::new(f64::NAN, 4).is_err());
        assert!(GainQuantizer::new(0.5, 0).is_err());
        assert!(GainQuantizer::new(0.5, 32).is_err());
        let q = GainQuantizer::new(0.5, 4).unwrap();
        assert!(q.quantize(-0.1).is_err());
        assert!(q.quantize(f64::INFINITY).is_err());
        assert!(q.quantize(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn quantize_invariants(
            x in 0.0..1e6_f64,
            delta in 1e-6..10.0_f64,
            bits in 1u32..=8,
        ) {
            let q = GainQuantizer::new(delta, bits).unwrap();
            let out = q.quantize(x).unwrap();
            prop_assert!(out.level < q.levels());
            prop_assert_eq!(out.value, f64::from(out.level) * delta);
            // Rounding down, up to one ulp of boundary slack.
            prop_assert!(out.value <= x * (1.0 + 1e-12) + 1e-300);
            if !out.saturated {
                prop_assert!(x - out.value < delta * (1.0 + 1e-12));
            } else {
                let gap = q.saturation_gap(x);
                prop_assert!(x - out.value <= gap + delta * 1e-9);
            }
        }
    }

    #[test]
    fn training_on_a_constant_sample_recovers_the_top_level() {
        // With one level above zero, zero error needs delta exactly at the
        // sample value, and the exact sweep must find it.
        let samples = vec![2.4; 50];
        let delta = train_delta(&samples, 1).unwrap();
        assert_relative_eq!(delta, 2.4, max_relative = 1e-12);
    }

    #[test]
    fn training_matches_a_fine_grid_oracle() {
        let mut rng = substream(21, StreamDomain::QuantizerTraining, 0);
        let samples = training_samples(2, 3, 2000, &mut rng).unwrap();
        for bits in [1, 2, 4, 6] {
            let delta = train_delta(&samples, bits).unwrap();
            let mse = |d: f64| -> f64 {
                let q = GainQuantizer::new(d, bits).unwrap();
                samples.iter().map(|&x| {
                    let e = x - q.quantize(x).unwrap().value;
                    e * e
                }).sum::<f64>() / samples.len() as f64
            };
            // Exhaustive fine grid as the optimization oracle; the exact
            // sweep can only do better, up to running-sum rounding.
            let x_max = samples.iter().cloned().fold(0.0, f64::max);
            let oracle = (1..=16384)
                .map(|i| mse(x_max * i as f64 / 16384.0))
                .fold(f64::INFINITY, f64::min);
            assert!(
                mse(delta) <= oracle * (1.0 + 1e-6),
                "bits {bits}: trained objective {} vs oracle {oracle}",
                mse(delta)
            );
        }
    }

    #[test]
    fn training_is_deterministic_and_shrinks_with_more_bits() {
        let mut rng = substream(22, StreamDomain::QuantizerTraining, 1);
        let samples = training_samples(2, 2, 4000, &mut rng).unwrap();
        let again = train_delta(&samples, 3).unwrap();
        assert_eq!(train_delta(&samples, 3).unwrap(), again);
        let mut prev = f64::INFINITY;
        for bits in 1..=6 {
            let d = train_delta(&samples, bits).unwrap();
            assert!(d < prev, "delta must shrink as bits grow");
            prev = d;
        }
    }

    #[test]
    fn train_delta_rejects_degenerate_input() {
        assert!(train_delta(&[], 3).is_err());
        assert!(train_delta(&[0.0, 0.0], 3).is_err());
        assert!(train_delta(&[1.0, f64::NAN], 3).is_err());
        assert!(train_delta(&[1.0, -0.5], 3).is_err());
        assert!(train_delta(&[1.0], 0).is_err());
    }

    #[test]
    fn reference_table_structure() {
        for row in 0..6 {
            for col in 0..5 {
                assert!(
                    REFERENCE_DELTAS[row][col] > REFERENCE_DELTAS[row][col + 1],
                    "steps must shrink as gain bits grow"
                );
            }
        }
        for col in 0..6 {
            for row in 0..5 {
                assert!(
                    REFERENCE_DELTAS[row][col] <= REFERENCE_DELTAS[row + 1][col],
                    "steps must not shrink as codebook bits grow"
                );
            }
        }
        assert_eq!(reference_delta(1, 1), Some(1.59));
        assert_eq!(reference_delta(3, 3), Some(0.69));
        assert_eq!(reference_delta(6, 6), Some(0.15));
        assert_eq!(reference_delta(2, 5), Some(1.20));
        assert_eq!(reference_delta(7, 1), None);
        assert_eq!(reference_delta(1, 0), None);
    }

    #[test]
    fn cache_round_trip_preserves_stored_values() {
        let mut cache = DeltaCache::new();
        let stored = cache.insert(3, 4, 2, 7, 0.718281828459045);
        assert_eq!(stored, 0.718282);
        cache.insert(1, 1, 2, 7, 1.59);
        cache.insert(20, 6, 4, 9, 4.2e-5);

        let mut buf = Vec::new();
        cache.write_text(&mut buf).unwrap();
        let back = DeltaCache::read_text(buf.as_slice()).unwrap();
        assert_eq!(cache, back);
        assert_eq!(back.get(3, 4, 2, 7), Some(0.718282));
        assert_eq!(back.get(20, 6, 4, 9), Some(4.2e-5));
        assert_eq!(back.get(2, 2, 2, 7), None);
    }

    #[test]
    fn cache_read_rejects_malformed_lines() {
        assert!(DeltaCache::read_text("1,2,3".as_bytes()).is_err());
        assert!(DeltaCache::read_text("1,2,2,x,0.5".as_bytes()).is_err());
        assert!(DeltaCache::read_text("1,2,2,7,abc".as_bytes()).is_err());
    }
}
