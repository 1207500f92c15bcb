//! Monte Carlo experiment engine: per-sample feedback pipeline, bound
//! checking, deterministic parallel aggregation, statistical validators,
//! and sweep orchestration.
//!
//! Each sample index names its own random substreams, so a sample's outcome
//! depends only on (seed, index, configuration). Samples are evaluated in
//! fixed-size chunks that parallelize freely; chunk accumulators are merged
//! in index order with compensated sums, making every reported byte
//! independent of worker count and scheduling. Channel substreams do not
//! depend on the feedback budgets, so sweeps over (B, B') reuse common
//! random numbers and cell-to-cell comparisons are low-variance.

use std::io::Write as IoWrite;
use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use rayon::ThreadPoolBuilder;

use crate::bounds::{evaluate_bounds, BoundInputs, BoundReport, BOUND_TOLERANCE};
use crate::channel::{describe, draw_rayleigh, inner_product};
use crate::codebook::{generate_rvq, Codebook};
use crate::error::{Error, Result};
use crate::noma::{
    effective_gains_mrt, effective_gains_with_beams, feasibility_limited_feedback, rates,
    reconstruct_gains, solve_beta, strong_user_order, tdma_rate, BetaSolution, EffectiveGains,
    LfFeasibilityMode, LinkParams, RateReport, StrongUser,
};
use crate::quantizer::{
    reference_delta, train_delta, training_samples, DeltaCache, GainQuantizer, Quantized,
};
use crate::rng::{substream, StreamDomain};
use crate::textfmt::g6;

/// Where the gain quantizer's step size comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaSource {
    /// Pre-trained table lookup; covers B and B' in 1..=6.
    Reference,
    /// Train on freshly drawn gain samples (deterministic per seed), with
    /// results memoized in a [`DeltaCache`].
    Trained,
    /// Fixed user-supplied step.
    Explicit(f64),
}

/// Whether every sample draws its own codebook or one codebook serves the
/// whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodebookMode {
    /// Fresh random codebook per sample: averages over the codebook
    /// ensemble, the setting behind the alignment statistics.
    PerSample,
    /// One codebook drawn once per run from its own substream.
    Fixed,
}

/// Full description of one experiment cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Transmit antennas.
    pub n_t: usize,
    /// Gain feedback bits B.
    pub cqi_bits: u32,
    /// Codebook (direction feedback) bits B'.
    pub codebook_bits: u32,
    /// Transmit SNR in dB; noise power is fixed to 1, so the transmit power
    /// is `10^(snr_db/10)`.
    pub snr_db: f64,
    /// Per-user rate floor in bit/s/Hz.
    pub r_th: f64,
    /// Monte Carlo samples per cell.
    pub n_samples: usize,
    /// Root seed; every stream in the run derives from it.
    pub seed: u64,
    /// Step-size policy for the gain quantizer.
    pub delta_source: DeltaSource,
    /// Codebook refresh policy.
    pub codebook_mode: CodebookMode,
    /// Which feasibility test gates the limited-feedback transmission.
    pub feasibility_mode: LfFeasibilityMode,
    /// Draw separate codebooks for the two users instead of a shared one.
    pub independent_user_codebooks: bool,
    /// Drop samples where either user's gain report saturated from every
    /// average (they still count toward the configured total); feasibility
    /// fractions then use the conditioned denominator.
    pub condition_on_unsaturated: bool,
    /// Gain samples drawn when training a step size.
    pub delta_train_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_t: 2,
            cqi_bits: 6,
            codebook_bits: 6,
            snr_db: 10.0,
            r_th: 1.0,
            n_samples: 100_000,
            seed: 1,
            delta_source: DeltaSource::Reference,
            codebook_mode: CodebookMode::PerSample,
            feasibility_mode: LfFeasibilityMode::Operational,
            independent_user_codebooks: false,
            condition_on_unsaturated: false,
            delta_train_samples: 50_000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_t > 64 {
            return Err(Error::Config(format!("n_t {} outside 1..=64", self.n_t)));
        }
        if !(1..=20).contains(&self.cqi_bits) {
            return Err(Error::Config(format!("cqi bits {} outside 1..=20", self.cqi_bits)));
        }
        if !(1..=20).contains(&self.codebook_bits) {
            return Err(Error::Config(format!(
                "codebook bits {} outside 1..=20",
                self.codebook_bits
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if let DeltaSource::Explicit(d) = self.delta_source {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!("explicit step {d} must be positive")));
            }
        }
        if self.delta_source == DeltaSource::Trained && self.delta_train_samples == 0 {
            return Err(Error::Config("delta_train_samples must be at least 1".into()));
        }
        self.link_params().map(|_| ())
    }

    pub fn link_params(&self) -> Result<LinkParams> {
        LinkParams::from_snr_db(self.snr_db, self.r_th)
            .map_err(|e| Error::Config(format!("link parameters: {e}")))
    }
}

/// Obtain the quantizer step for a configuration, training and memoizing
/// when the source asks for it. Trained steps are keyed by
/// (B, B', n_t, seed); the training stream depends only on (seed, n_t, B'),
/// so one sample set serves every B.
pub fn resolve_delta(cfg: &ExperimentConfig, cache: &mut DeltaCache) -> Result<f64> {
    cfg.validate()?;
    match cfg.delta_source {
        DeltaSource::Explicit(d) => Ok(d),
        DeltaSource::Reference => {
            reference_delta(cfg.cqi_bits, cfg.codebook_bits).ok_or_else(|| {
                Error::Config(format!(
                    "no reference step for B={} B'={}; the table covers 1..=6",
                    cfg.cqi_bits, cfg.codebook_bits
                ))
            })
        }
        DeltaSource::Trained => {
            if let Some(d) = cache.get(cfg.cqi_bits, cfg.codebook_bits, cfg.n_t, cfg.seed) {
                return Ok(d);
            }
            let mut rng = substream(
                cfg.seed,
                StreamDomain::QuantizerTraining,
                ((cfg.n_t as u64) << 24) | u64::from(cfg.codebook_bits),
            );
            let samples =
                training_samples(cfg.n_t, cfg.codebook_bits, cfg.delta_train_samples, &mut rng)?;
            let d = train_delta(&samples, cfg.cqi_bits)?;
            Ok(cache.insert(cfg.cqi_bits, cfg.codebook_bits, cfg.n_t, cfg.seed, d))
        }
    }
}

/// One user's feedback report.
#[derive(Clone, Copy, Debug)]
pub struct UserFeedback {
    /// Selected codeword index.
    pub pmi: usize,
    /// True effective gain of the selected beam before quantization.
    pub effective_gain: f64,
    /// Alignment with the selected beam, in [0, 1].
    pub eta: f64,
    /// Quantized gain report.
    pub quantized: Quantized,
}

/// Everything the base station learns from feedback, plus its decisions.
#[derive(Clone, Copy, Debug)]
pub struct FeedbackState {
    pub user1: UserFeedback,
    pub user2: UserFeedback,
    /// Decode-order decision from the quantized gains (ties pick user 1).
    pub order: StrongUser,
    /// Reconstructed effective gains in the decode-order frame.
    pub reconstructed: EffectiveGains,
}

/// Everything measured on one channel realization.
#[derive(Clone, Debug)]
pub struct SampleOutcome {
    /// Norm ratio weak/strong in the true-order frame, at most 1.
    pub rho: f64,
    /// Direction overlap of the two channels.
    pub cos_theta: f64,
    /// True squared norm of the stronger channel.
    pub h1_norm2: f64,
    /// True squared norm of the weaker channel.
    pub h2_norm2: f64,
    /// Stronger user's beam alignment.
    pub eta11: f64,
    /// Weaker user's beam alignment.
    pub eta22: f64,
    pub full_feasible: bool,
    pub lf_feasible: bool,
    pub both_feasible: bool,
    /// Power split solution under full CSI (true order, ideal beams).
    pub full_solution: BetaSolution,
    /// Superposed-transmission rates under full CSI, when feasible.
    pub full_rates: Option<RateReport>,
    pub feedback: FeedbackState,
    /// Power split solution from reconstructed gains.
    pub lf_solution: BetaSolution,
    /// True achieved rates of the limited-feedback transmission, when its
    /// feasibility test passed.
    pub lf_rates: Option<RateReport>,
    /// Whether either regime fell back to orthogonal slots.
    pub fallback_used: bool,
    /// Full-CSI sum rate, falling back to time sharing when infeasible.
    pub full_sum_with_fallback: f64,
    /// Limited-feedback sum rate with the same fallback rule.
    pub lf_sum_with_fallback: f64,
    /// Superposed-rate gap, present when both regimes are feasible.
    pub delta_r: Option<f64>,
    /// Power-split error `beta_star - beta_q` mapped into the true-order
    /// frame, present when both regimes are feasible.
    pub delta_beta: Option<f64>,
    /// Bound evaluations, present when both regimes are feasible.
    pub bounds: Option<BoundReport>,
}

/// Reusable per-cell state: link parameters, quantizer, and any fixed
/// codebooks, so per-sample work touches only sample-indexed streams.
pub struct CellContext {
    cfg: ExperimentConfig,
    lp: LinkParams,
    delta: f64,
    quantizer: GainQuantizer,
    fixed_cb1: Option<Codebook>,
    fixed_cb2: Option<Codebook>,
}

impl CellContext {
    pub fn new(cfg: &ExperimentConfig, delta: f64) -> Result<Self> {
        cfg.validate()?;
        let lp = cfg.link_params()?;
        let quantizer = GainQuantizer::new(delta, cfg.cqi_bits)?;
        let (fixed_cb1, fixed_cb2) = if cfg.codebook_mode == CodebookMode::Fixed {
            let cb1 = generate_rvq(
                cfg.n_t,
                cfg.codebook_bits,
                &mut substream(cfg.seed, StreamDomain::FixedCodebook, 0),
            )?;
            let cb2 = if cfg.independent_user_codebooks {
                Some(generate_rvq(
                    cfg.n_t,
                    cfg.codebook_bits,
                    &mut substream(cfg.seed, StreamDomain::FixedCodebookAlt, 0),
                )?)
            } else {
                None
            };
            (Some(cb1), cb2)
        } else {
            (None, None)
        };
        Ok(Self { cfg: cfg.clone(), lp, delta, quantizer, fixed_cb1, fixed_cb2 })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Evaluate one sample index: draw channels and codebooks from their
    /// substreams and run the pipeline.
    pub fn sample(&self, index: u64) -> Result<SampleOutcome> {
        let mut ch_rng = substream(self.cfg.seed, StreamDomain::Channel, index);
        let h1 = draw_rayleigh(self.cfg.n_t, &mut ch_rng)?;
        let h2 = draw_rayleigh(self.cfg.n_t, &mut ch_rng)?;
        match self.cfg.codebook_mode {
            CodebookMode::Fixed => {
                let cb1 = self.fixed_cb1.as_ref().expect("fixed mode builds its codebook");
                let cb2 = self.fixed_cb2.as_ref().unwrap_or(cb1);
                self.evaluate(&h1, &h2, cb1, cb2)
            }
            CodebookMode::PerSample => {
                let cb1 = generate_rvq(
                    self.cfg.n_t,
                    self.cfg.codebook_bits,
                    &mut substream(self.cfg.seed, StreamDomain::Codebook, index),
                )?;
                if self.cfg.independent_user_codebooks {
                    let cb2 = generate_rvq(
                        self.cfg.n_t,
                        self.cfg.codebook_bits,
                        &mut substream(self.cfg.seed, StreamDomain::CodebookAlt, index),
                    )?;
                    self.evaluate(&h1, &h2, &cb1, &cb2)
                } else {
                    self.evaluate(&h1, &h2, &cb1, &cb1)
                }
            }
        }
    }

    /// The pipeline on explicit channels: user-side feedback, base-station
    /// reconstruction and power allocation, true achieved rates for both
    /// regimes, and bound evaluation on the full-CSI order frame.
    fn evaluate(
        &self,
        h1: &[Complex64],
        h2: &[Complex64],
        cb1: &Codebook,
        cb2: &Codebook,
    ) -> Result<SampleOutcome> {
        let lp = &self.lp;

        // User side: beam selection against the own channel, then gain
        // quantization.
        let sel1 = cb1.select_pmi(h1)?;
        let sel2 = cb2.select_pmi(h2)?;
        let q1 = self.quantizer.quantize(sel1.effective_gain)?;
        let q2 = self.quantizer.quantize(sel2.effective_gain)?;
        let fb1 = UserFeedback {
            pmi: sel1.index,
            effective_gain: sel1.effective_gain,
            eta: sel1.eta,
            quantized: q1,
        };
        let fb2 = UserFeedback {
            pmi: sel2.index,
            effective_gain: sel2.effective_gain,
            eta: sel2.eta,
            quantized: q2,
        };
        let w1 = cb1.vector(sel1.index);
        let w2 = cb2.vector(sel2.index);

        // Base station side: order by quantized gains, reconstruct gains in
        // that frame, test feasibility, pick the power split.
        let order = strong_user_order(q1.value, q2.value);
        let (fb_s, fb_w, w_s, w_w, h_s, h_w) = match order {
            StrongUser::First => (&fb1, &fb2, w1, w2, h1, h2),
            StrongUser::Second => (&fb2, &fb1, w2, w1, h2, h1),
        };
        let recon = reconstruct_gains(fb_s.quantized.value, fb_w.quantized.value, w_s, w_w)?;
        let lf_feasible = feasibility_limited_feedback(&recon, lp, self.cfg.feasibility_mode);
        let lf_solution = solve_beta(&recon, lp);

        // True rates actually delivered by the limited-feedback choices.
        let ch_lf = describe(h_s, h_w)?;
        let gains_lf = effective_gains_with_beams(&ch_lf, w_s, w_w)?;
        let lf_rates = if lf_feasible {
            let beta_q = lf_solution.beta_star.expect("feasible implies a solution");
            Some(rates(&gains_lf, beta_q, lp))
        } else {
            None
        };

        // Full-CSI reference: order by true norms (ties pick user 1), ideal
        // beams, optimal split.
        let full_strong_first = crate::channel::norm2(h1) >= crate::channel::norm2(h2);
        let (hf_s, hf_w, fbf_s, fbf_w, wf_s, wf_w) = if full_strong_first {
            (h1, h2, &fb1, &fb2, w1, w2)
        } else {
            (h2, h1, &fb2, &fb1, w2, w1)
        };
        let ch_full = describe(hf_s, hf_w)?;
        let g_mrt = effective_gains_mrt(&ch_full);
        let full_solution = solve_beta(&g_mrt, lp);
        let full_feasible = full_solution.feasible();
        let full_rates = full_solution.beta_star.map(|b| rates(&g_mrt, b, lp));

        let both_feasible = full_feasible && lf_feasible;
        let delta_r = match (both_feasible, &full_rates, &lf_rates) {
            (true, Some(f), Some(l)) => Some(f.sum - l.sum),
            _ => None,
        };

        // Fallback: infeasible superposition degrades to half-time slots at
        // full power, through ideal beams for the full-CSI regime and
        // through the fed-back beams for the limited one.
        let full_sum_with_fallback = if full_feasible {
            full_rates.as_ref().expect("feasible implies rates").sum
        } else {
            tdma_rate(ch_full.h1_norm2, ch_full.h2_norm2, lp)
        };
        let lf_sum_with_fallback = if lf_feasible {
            lf_rates.as_ref().expect("feasible implies rates").sum
        } else {
            tdma_rate(gains_lf.g11, gains_lf.g22, lp)
        };

        // Bounds compare like with like: every input sits in the true-order
        // frame. When the base station ordered the users the other way, the
        // split it granted the true-strong user is the complement.
        let (delta_beta, bounds) = if both_feasible {
            let beta_star = full_solution.beta_star.expect("feasible implies a solution");
            let beta_q_lf = lf_solution.beta_star.expect("feasible implies a solution");
            let order_matches = match order {
                StrongUser::First => full_strong_first,
                StrongUser::Second => !full_strong_first,
            };
            let beta_q = if order_matches { beta_q_lf } else { 1.0 - beta_q_lf };
            let delta_or_sat = if fbf_w.quantized.saturated {
                self.quantizer.saturation_gap(fbf_w.effective_gain)
            } else {
                self.delta
            };
            let bi = BoundInputs {
                h1_norm2: ch_full.h1_norm2,
                h2_norm2: ch_full.h2_norm2,
                eta11: fbf_s.eta,
                eta22: fbf_w.eta,
                h21_star: ch_full.h21_star,
                beta_star,
                beta_q,
                delta_or_sat,
            };
            let h21_hat =
                fbf_w.quantized.value * inner_product(wf_w, wf_s)?.norm_sqr().min(1.0);
            let report = evaluate_bounds(&ch_full, wf_s, wf_w, h21_hat, &bi, lp)?;
            (Some(beta_star - beta_q), Some(report))
        } else {
            (None, None)
        };

        Ok(SampleOutcome {
            rho: ch_full.rho,
            cos_theta: ch_full.cos_theta,
            h1_norm2: ch_full.h1_norm2,
            h2_norm2: ch_full.h2_norm2,
            eta11: fbf_s.eta,
            eta22: fbf_w.eta,
            full_feasible,
            lf_feasible,
            both_feasible,
            full_solution,
            full_rates,
            feedback: FeedbackState { user1: fb1, user2: fb2, order, reconstructed: recon },
            lf_solution,
            lf_rates,
            fallback_used: !full_feasible || !lf_feasible,
            full_sum_with_fallback,
            lf_sum_with_fallback,
            delta_r,
            delta_beta,
            bounds,
        })
    }
}

/// Evaluate a single sample of a configuration, resolving the step size
/// first. Convenience for inspection; sweeps use [`run_cell`].
pub fn run_sample(cfg: &ExperimentConfig, index: u64) -> Result<SampleOutcome> {
    let delta = resolve_delta(cfg, &mut DeltaCache::new())?;
    CellContext::new(cfg, delta)?.sample(index)
}

/// Neumaier compensated sum: deterministic for a fixed add order and immune
/// to cancellation across chunk merges.
#[derive(Clone, Copy, Debug, Default)]
struct CompSum {
    s: f64,
    c: f64,
}

impl CompSum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn merge(&mut self, o: CompSum) {
        self.add(o.s);
        self.add(o.c);
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct CellAcc {
    n: u64,
    n_used: u64,
    n_full: u64,
    n_lf: u64,
    n_both: u64,
    loss: CompSum,
    loss_sq: CompSum,
    abs_dbeta: CompSum,
    lf_sum: CompSum,
    lf_sum_sq: CompSum,
    full_sum: CompSum,
    full_sum_sq: CompSum,
    violations: u64,
}

impl CellAcc {
    fn add(&mut self, out: &SampleOutcome, condition_on_unsaturated: bool) {
        self.n += 1;
        if condition_on_unsaturated
            && (out.feedback.user1.quantized.saturated || out.feedback.user2.quantized.saturated)
        {
            return;
        }
        self.n_used += 1;
        self.n_full += u64::from(out.full_feasible);
        self.n_lf += u64::from(out.lf_feasible);
        self.n_both += u64::from(out.both_feasible);
        self.lf_sum.add(out.lf_sum_with_fallback);
        self.lf_sum_sq.add(out.lf_sum_with_fallback * out.lf_sum_with_fallback);
        self.full_sum.add(out.full_sum_with_fallback);
        self.full_sum_sq.add(out.full_sum_with_fallback * out.full_sum_with_fallback);
        if let Some(dr) = out.delta_r {
            self.loss.add(dr);
            self.loss_sq.add(dr * dr);
        }
        if let Some(db) = out.delta_beta {
            self.abs_dbeta.add(db.abs());
        }
        if let Some(b) = &out.bounds {
            self.violations += u64::from(b.violated(BOUND_TOLERANCE));
        }
    }

    fn merge(&mut self, o: &CellAcc) {
        self.n += o.n;
        self.n_used += o.n_used;
        self.n_full += o.n_full;
        self.n_lf += o.n_lf;
        self.n_both += o.n_both;
        self.loss.merge(o.loss);
        self.loss_sq.merge(o.loss_sq);
        self.abs_dbeta.merge(o.abs_dbeta);
        self.lf_sum.merge(o.lf_sum);
        self.lf_sum_sq.merge(o.lf_sum_sq);
        self.full_sum.merge(o.full_sum);
        self.full_sum_sq.merge(o.full_sum_sq);
        self.violations += o.violations;
    }

    fn report(&self, cfg: &ExperimentConfig, delta: f64) -> CellReport {
        let (mean_rate_loss, ci_rate_loss) = mean_ci(&self.loss, &self.loss_sq, self.n_both);
        let (mean_sum_rate_lf, ci_sum_rate_lf) = mean_ci(&self.lf_sum, &self.lf_sum_sq, self.n_used);
        let (mean_sum_rate_full, ci_sum_rate_full) =
            mean_ci(&self.full_sum, &self.full_sum_sq, self.n_used);
        let frac = |k: u64| {
            if self.n_used == 0 {
                f64::NAN
            } else {
                k as f64 / self.n_used as f64
            }
        };
        let mean_abs_delta_beta = if self.n_both == 0 {
            f64::NAN
        } else {
            self.abs_dbeta.value() / self.n_both as f64
        };
        CellReport {
            cqi_bits: cfg.cqi_bits,
            codebook_bits: cfg.codebook_bits,
            n_t: cfg.n_t,
            snr_db: cfg.snr_db,
            r_th: cfg.r_th,
            n_samples: cfg.n_samples,
            seed: cfg.seed,
            delta,
            mean_rate_loss,
            ci_rate_loss,
            mean_sum_rate_lf,
            ci_sum_rate_lf,
            mean_sum_rate_full,
            ci_sum_rate_full,
            frac_feasible_full: frac(self.n_full),
            frac_feasible_lf: frac(self.n_lf),
            frac_feasible_both: frac(self.n_both),
            mean_abs_delta_beta,
            bound_violations: self.violations,
            n_both_feasible: self.n_both as usize,
            n_used: self.n_used as usize,
        }
    }
}

/// Mean and 95% normal-approximation half-width from compensated sums.
fn mean_ci(sum: &CompSum, sum_sq: &CompSum, n: u64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mean = sum.value() / nf;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = ((sum_sq.value() - sum.value() * sum.value() / nf) / (nf - 1.0)).max(0.0);
    (mean, 1.96 * (var / nf).sqrt())
}

/// Aggregated results of one (B, B') cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub cqi_bits: u32,
    pub codebook_bits: u32,
    pub n_t: usize,
    pub snr_db: f64,
    pub r_th: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Resolved quantizer step.
    pub delta: f64,
    /// Mean superposed-rate gap over both-feasible samples.
    pub mean_rate_loss: f64,
    pub ci_rate_loss: f64,
    /// Mean limited-feedback sum rate with time-sharing fallback, over all
    /// counted samples.
    pub mean_sum_rate_lf: f64,
    pub ci_sum_rate_lf: f64,
    pub mean_sum_rate_full: f64,
    pub ci_sum_rate_full: f64,
    pub frac_feasible_full: f64,
    pub frac_feasible_lf: f64,
    pub frac_feasible_both: f64,
    pub mean_abs_delta_beta: f64,
    /// Samples with at least one violated bound.
    pub bound_violations: u64,
    pub n_both_feasible: usize,
    /// Samples contributing to the averages (differs from `n_samples` only
    /// when conditioning on unsaturated reports).
    pub n_used: usize,
}

/// Column layout of the sweep CSV.
pub const CSV_HEADER: &str = "B,Bprime,Nt,snr_db,r_th,n_samples,seed,mean_rate_loss,\
ci_rate_loss,mean_sum_rate_lf,mean_sum_rate_full,frac_feasible_full,frac_feasible_lf,\
frac_feasible_both,mean_abs_delta_beta,bound_violations";

impl CellReport {
    /// One CSV row matching [`CSV_HEADER`], floats to six significant
    /// digits.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.cqi_bits,
            self.codebook_bits,
            self.n_t,
            g6(self.snr_db),
            g6(self.r_th),
            self.n_samples,
            self.seed,
            g6(self.mean_rate_loss),
            g6(self.ci_rate_loss),
            g6(self.mean_sum_rate_lf),
            g6(self.mean_sum_rate_full),
            g6(self.frac_feasible_full),
            g6(self.frac_feasible_lf),
            g6(self.frac_feasible_both),
            g6(self.mean_abs_delta_beta),
            self.bound_violations,
        )
    }
}

/// Rows of a (B, B') sweep in emission order.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<CellReport>,
}

impl SweepSummary {
    /// Write the CSV, header first.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(w, "{}", row.to_csv_row())?;
        }
        Ok(())
    }
}

/// Chunk size for parallel evaluation; fixed so the reduction order never
/// depends on the worker count.
const CHUNK: u64 = 4096;

fn chunk_ranges(n: u64) -> Vec<Range<u64>> {
    let mut out = Vec::with_capacity(((n + CHUNK - 1) / CHUNK) as usize);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        out.push(start..end);
        start = end;
    }
    out
}

/// Run a closure on a dedicated pool of `workers` threads, or on the global
/// pool when `workers` is 0.
fn install<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        Ok(f())
    } else {
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

fn run_cell_inner(
    cfg: &ExperimentConfig,
    delta: f64,
    workers: usize,
    want_losses: bool,
) -> Result<(CellReport, Option<Vec<f64>>)> {
    let ctx = CellContext::new(cfg, delta)?;
    let ranges = chunk_ranges(cfg.n_samples as u64);
    let chunks: Vec<(CellAcc, Option<Vec<f64>>)> = install(workers, || {
        ranges
            .into_par_iter()
            .map(|r| {
                let mut acc = CellAcc::default();
                let mut losses =
                    want_losses.then(|| Vec::with_capacity((r.end - r.start) as usize));
                for i in r {
                    let out = ctx.sample(i)?;
                    acc.add(&out, ctx.cfg.condition_on_unsaturated);
                    if let Some(v) = losses.as_mut() {
                        v.push(out.delta_r.unwrap_or(f64::NAN));
                    }
                }
                Ok((acc, losses))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut total = CellAcc::default();
    let mut all_losses = want_losses.then(|| Vec::with_capacity(cfg.n_samples));
    for (acc, losses) in chunks {
        total.merge(&acc);
        if let (Some(all), Some(mut l)) = (all_losses.as_mut(), losses) {
            all.append(&mut l);
        }
    }
    Ok((total.report(cfg, delta), all_losses))
}

/// Evaluate every sample of one cell and aggregate. `workers` 0 uses the
/// process-wide default parallelism; the result is identical either way.
pub fn run_cell(cfg: &ExperimentConfig, delta: f64, workers: usize) -> Result<CellReport> {
    run_cell_inner(cfg, delta, workers, false).map(|(r, _)| r)
}

/// Like [`run_cell`] but also returns the per-sample superposed-rate gap,
/// indexed by sample, NaN where the sample was not both-feasible. Common
/// random numbers make these vectors pairable across cells.
pub fn run_cell_with_losses(
    cfg: &ExperimentConfig,
    delta: f64,
    workers: usize,
) -> Result<(CellReport, Vec<f64>)> {
    run_cell_inner(cfg, delta, workers, true)
        .map(|(r, l)| (r, l.expect("losses requested")))
}

/// Sweep the cartesian grid of CQI and codebook budgets, B' outermost. The
/// base configuration supplies everything else; trained steps are memoized
/// in `cache`.
pub fn run_sweep(
    base: &ExperimentConfig,
    cqi_bits_list: &[u32],
    codebook_bits_list: &[u32],
    workers: usize,
    cache: &mut DeltaCache,
) -> Result<SweepSummary> {
    if cqi_bits_list.is_empty() || codebook_bits_list.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(cqi_bits_list.len() * codebook_bits_list.len());
    for &bp in codebook_bits_list {
        for &b in cqi_bits_list {
            let mut cfg = base.clone();
            cfg.cqi_bits = b;
            cfg.codebook_bits = bp;
            let delta = resolve_delta(&cfg, cache)?;
            rows.push(run_cell(&cfg, delta, workers)?);
        }
    }
    Ok(SweepSummary { rows })
}

/// One statistic checked by [`validate_statistics`].
#[derive(Clone, Debug)]
pub struct ValidationRow {
    pub name: &'static str,
    /// Closed-form target; NaN when the statistic has no finite target at
    /// this configuration.
    pub target: f64,
    pub estimate: f64,
    /// Relative tolerance for nonzero targets, absolute for zero targets.
    pub tolerance: f64,
    /// None when the check does not apply (for example the inverse
    /// direction-spread moment with two antennas, which has no finite
    /// expectation).
    pub pass: Option<bool>,
}

/// Empirical-versus-closed-form comparison for the channel and alignment
/// statistics the rate-loss theory relies on.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub n_t: usize,
    pub codebook_bits: u32,
    pub n_samples: usize,
    pub seed: u64,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    /// True when no applicable row failed.
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false))
    }
}

#[derive(Clone, Debug, Default)]
struct StatAcc {
    n: u64,
    h: CompSum,
    h_sq: CompSum,
    inv_h: CompSum,
    inv_sin2: CompSum,
    gap: CompSum,
    eta: CompSum,
    eta_sq: CompSum,
    eta_h: CompSum,
}

impl StatAcc {
    fn merge(&mut self, o: &StatAcc) {
        self.n += o.n;
        self.h.merge(o.h);
        self.h_sq.merge(o.h_sq);
        self.inv_h.merge(o.inv_h);
        self.inv_sin2.merge(o.inv_sin2);
        self.gap.merge(o.gap);
        self.eta.merge(o.eta);
        self.eta_sq.merge(o.eta_sq);
        self.eta_h.merge(o.eta_h);
    }
}

/// Largest absolute gap between the empirical distribution of `sorted` and
/// the model CDF.
fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!sorted.is_empty(), "need data for a distribution distance");
    let n = sorted.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max(((i + 1) as f64 / n - f).abs());
    }
    sup
}

/// Estimate the channel-statistic moments and the alignment distribution
/// against their closed forms: E[H] = n_t, E[H^2] = n_t (n_t + 1),
/// E[1/H] = 1/(n_t - 1), E[1/sin^2] = (n_t - 1)/(n_t - 2),
/// E[1 - eta] close to 2^(-B'/(n_t - 1)), the alignment CDF
/// (1 - (1 - x)^(n_t - 1))^(2^B'), and zero alignment-norm correlation.
/// Draws mirror the experiment pipeline: channels and codebooks from the
/// same substream layout.
pub fn validate_statistics(
    n_t: usize,
    codebook_bits: u32,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<ValidationReport> {
    if n_t == 0 || n_t > 64 {
        return Err(Error::Config(format!("n_t {n_t} outside 1..=64")));
    }
    if !(1..=20).contains(&codebook_bits) {
        return Err(Error::Config(format!("codebook bits {codebook_bits} outside 1..=20")));
    }
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }

    let ranges = chunk_ranges(n_samples as u64);
    let chunks: Vec<(StatAcc, Vec<f64>)> = install(workers, || {
        ranges
            .into_par_iter()
            .map(|r| {
                let mut acc = StatAcc::default();
                let mut etas = Vec::with_capacity((r.end - r.start) as usize);
                for i in r {
                    let mut ch_rng = substream(seed, StreamDomain::Channel, i);
                    let h1 = draw_rayleigh(n_t, &mut ch_rng)?;
                    let h2 = draw_rayleigh(n_t, &mut ch_rng)?;
                    let ch = describe(&h1, &h2)?;
                    let cb = generate_rvq(
                        n_t,
                        codebook_bits,
                        &mut substream(seed, StreamDomain::Codebook, i),
                    )?;
                    let sel = cb.select_pmi(&h1)?;
                    let h = ch.h1_norm2;
                    acc.n += 1;
                    acc.h.add(h);
                    acc.h_sq.add(h * h);
                    acc.inv_h.add(1.0 / h);
                    acc.inv_sin2.add(1.0 / ch.sin2_theta);
                    acc.gap.add(1.0 - sel.eta);
                    acc.eta.add(sel.eta);
                    acc.eta_sq.add(sel.eta * sel.eta);
                    acc.eta_h.add(sel.eta * h);
                    etas.push(sel.eta);
                }
                Ok((acc, etas))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut acc = StatAcc::default();
    let mut etas = Vec::with_capacity(n_samples);
    for (a, mut e) in chunks {
        acc.merge(&a);
        etas.append(&mut e);
    }
    etas.sort_unstable_by(f64::total_cmp);

    let nf = acc.n as f64;
    let ntf = n_t as f64;
    let mean = |s: &CompSum| s.value() / nf;

    let rel_row = |name: &'static str, target: f64, estimate: f64, tol: f64, applies: bool| {
        let pass = applies.then(|| (estimate / target - 1.0).abs() <= tol);
        ValidationRow {
            name,
            target: if applies { target } else { f64::NAN },
            estimate,
            tolerance: tol,
            pass,
        }
    };

    let mut rows = Vec::new();
    rows.push(rel_row("mean_norm2", ntf, mean(&acc.h), 0.01, true));
    rows.push(rel_row("mean_norm2_sq", ntf * (ntf + 1.0), mean(&acc.h_sq), 0.02, true));
    rows.push(rel_row(
        "mean_inv_norm2",
        1.0 / (ntf - 1.0),
        mean(&acc.inv_h),
        0.02,
        n_t >= 2,
    ));
    rows.push(rel_row(
        "mean_inv_sin2",
        (ntf - 1.0) / (ntf - 2.0),
        mean(&acc.inv_sin2),
        0.03,
        n_t >= 3,
    ));
    rows.push(rel_row(
        "mean_alignment_gap",
        (-(f64::from(codebook_bits)) / (ntf - 1.0)).exp2(),
        mean(&acc.gap),
        0.15,
        n_t >= 2,
    ));

    // Distribution distance for the alignment CDF.
    let k = f64::from(codebook_bits).exp2();
    let ks = if n_t >= 2 {
        ks_statistic(&etas, |x| {
            (1.0 - (1.0 - x).powi(n_t as i32 - 1)).powf(k)
        })
    } else {
        f64::NAN
    };
    rows.push(ValidationRow {
        name: "alignment_cdf_sup_gap",
        target: 0.0,
        estimate: ks,
        tolerance: 0.01,
        pass: (n_t >= 2).then(|| ks <= 0.01),
    });

    // Alignment and norm should be uncorrelated.
    let var_eta = mean(&acc.eta_sq) - mean(&acc.eta) * mean(&acc.eta);
    let var_h = mean(&acc.h_sq) - mean(&acc.h) * mean(&acc.h);
    let corr = if var_eta > 0.0 && var_h > 0.0 {
        (mean(&acc.eta_h) - mean(&acc.eta) * mean(&acc.h)) / (var_eta * var_h).sqrt()
    } else {
        f64::NAN
    };
    rows.push(ValidationRow {
        name: "alignment_norm_corr",
        target: 0.0,
        estimate: corr,
        tolerance: 0.02,
        pass: (n_t >= 2).then(|| corr.abs() <= 0.02),
    });

    Ok(ValidationReport { n_t, codebook_bits, n_samples, seed, rows })
}
