//! Rate-loss bounds for limited-feedback NOMA and the machinery to check
//! them against realized losses.
//!
//! The total rate loss of the limited-feedback system relative to full CSI
//! splits into a power-allocation part (wrong beta) and a beam-mismatch part
//! (quantized directions). Each part has a closed-form upper bound in terms
//! of channel norms, quantization alignment factors, and the beta error;
//! their sum is dominated by a single combined bound. Two auxiliary gap
//! bounds control how far quantized cross gains can drift from the true
//! ones. `evaluate_bounds` computes every actual quantity and every bound
//! for one realization so a harness can count violations.

use crate::channel::{norm2, ChannelRealization};
use crate::error::Result;
use crate::noma::{effective_gains_mrt, effective_gains_with_beams, rates, LinkParams};
use num_complex::Complex64;

/// Slack added to every bound comparison to absorb floating-point error.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// Scalar inputs to the bound evaluators, all in the full-CSI frame where
/// user 1 has the larger true channel norm.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    /// True squared norm of the strong user's channel.
    pub h1_norm2: f64,
    /// True squared norm of the weak user's channel.
    pub h2_norm2: f64,
    /// Alignment of the strong user's channel with its codeword, in [0, 1].
    pub eta11: f64,
    /// Alignment of the weak user's channel with its codeword, in [0, 1].
    pub eta22: f64,
    /// True cross gain |h2^H h1|^2 / ||h1||^2 under ideal beamforming.
    pub h21_star: f64,
    /// Optimal power split under full CSI.
    pub beta_star: f64,
    /// Power split chosen from quantized feedback, mapped into this frame.
    pub beta_q: f64,
    /// Gain quantization error: the cell width when unsaturated, or the
    /// overshoot past the top level when saturated.
    pub delta_or_sat: f64,
}

impl BoundInputs {
    fn validate(&self) {
        assert!(
            self.h1_norm2.is_finite() && self.h1_norm2 >= 0.0,
            "h1_norm2 must be finite and nonnegative"
        );
        assert!(
            self.h2_norm2.is_finite() && self.h2_norm2 >= 0.0,
            "h2_norm2 must be finite and nonnegative"
        );
        assert!(
            (0.0..=1.0).contains(&self.eta11) && (0.0..=1.0).contains(&self.eta22),
            "alignment factors must lie in [0, 1]"
        );
        assert!(
            self.h21_star >= 0.0 && self.h21_star <= self.h2_norm2 * (1.0 + 1e-12),
            "cross gain cannot exceed the weak user's norm"
        );
        assert!(
            (0.0..=1.0).contains(&self.beta_star) && (0.0..=1.0).contains(&self.beta_q),
            "power splits must lie in [0, 1]"
        );
        assert!(
            self.delta_or_sat.is_finite() && self.delta_or_sat >= 0.0,
            "quantization error must be finite and nonnegative"
        );
    }
}

/// Realized rate loss split into its power-allocation and beam-mismatch
/// parts. `delta_r == delta_r1 + delta_r2` by construction.
#[derive(Debug, Clone, Copy)]
pub struct RateLossSplit {
    /// Total loss: ideal-beam rate at `beta_star` minus quantized-beam rate
    /// at `beta_q`.
    pub delta_r: f64,
    /// Loss from the power split alone, evaluated on ideal beams.
    pub delta_r1: f64,
    /// Loss from the beam directions alone, evaluated at `beta_q`.
    pub delta_r2: f64,
}

/// Splits the realized rate loss by inserting the intermediate operating
/// point (ideal beams, quantized power split). Both users' ideal beams are
/// the matched filters; the quantized beams are the fed-back codewords.
pub fn rate_loss_split(
    ch: &ChannelRealization,
    w1: &[Complex64],
    w2: &[Complex64],
    beta_star: f64,
    beta_q: f64,
    lp: &LinkParams,
) -> Result<RateLossSplit> {
    assert!((0.0..=1.0).contains(&beta_star), "beta_star must lie in [0, 1]");
    assert!((0.0..=1.0).contains(&beta_q), "beta_q must lie in [0, 1]");
    let g_mrt = effective_gains_mrt(ch);
    let g_beams = effective_gains_with_beams(ch, w1, w2)?;
    let r_full_star = rates(&g_mrt, beta_star, lp).sum;
    let r_full_q = rates(&g_mrt, beta_q, lp).sum;
    let r_beams_q = rates(&g_beams, beta_q, lp).sum;
    let delta_r1 = r_full_star - r_full_q;
    let delta_r2 = r_full_q - r_beams_q;
    Ok(RateLossSplit { delta_r: delta_r1 + delta_r2, delta_r1, delta_r2 })
}

/// Upper bound on the rate change from moving the power split by
/// `|beta_star - beta_q|` with ideal beams: a uniform bound on the sum-rate
/// derivative times the step. The strong-user term's derivative
/// `H1 / (sigma^2 + beta P H1)` decreases in beta, so its supremum over the
/// segment between the two splits sits at the smaller one; using the smaller
/// split keeps the bound valid whichever direction the split moved.
pub fn power_alloc_loss_bound(bi: &BoundInputs, lp: &LinkParams) -> f64 {
    bi.validate();
    let p = lp.power;
    let s2 = lp.noise;
    let beta_lo = bi.beta_star.min(bi.beta_q);
    let slope = bi.h1_norm2 / (s2 + beta_lo * p * bi.h1_norm2)
        + bi.h21_star / s2
        + (bi.h2_norm2 - bi.h21_star) / (s2 + p * bi.h21_star);
    (p / std::f64::consts::LN_2) * slope * (bi.beta_star - bi.beta_q).abs()
}

/// Upper bound on the rate change from swapping ideal beams for quantized
/// ones at a fixed power split `beta_q`. The first term controls the shift
/// in the weak user's interference, the other two the direct-gain shrinkage
/// at each user.
pub fn beam_mismatch_loss_bound(bi: &BoundInputs, lp: &LinkParams) -> f64 {
    bi.validate();
    let p = lp.power;
    let s2 = lp.noise;
    let bq = bi.beta_q;
    let h2 = bi.h2_norm2;
    let cross = 2.0 * (1.0 - bq) * p * p * bq * bi.eta22 * h2 * h2
        * (2.0 - 2.0 * bi.eta11).sqrt()
        / (s2 * s2);
    let weak_direct = (1.0 - bq) * p * h2 * (1.0 - bi.eta22) / s2;
    let strong_direct = bq * p * bi.h1_norm2 * (1.0 - bi.eta11) / s2;
    (cross + weak_direct + strong_direct) / std::f64::consts::LN_2
}

/// Which alignment-gap factor the combined bound uses in its cross term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotalBoundForm {
    /// sqrt(2 - 2 eta11): the tighter factor.
    Sharp,
    /// sqrt(2 - eta11): the looser factor, which dominates the sharp one.
    Relaxed,
}

/// Combined upper bound on the total rate loss. Dominates the sum of the
/// two per-part bounds: beta_q (1 - beta_q) <= 1/4 collapses the cross term
/// and the derivative denominators are relaxed to the noise floor.
pub fn total_rate_loss_bound(bi: &BoundInputs, lp: &LinkParams, form: TotalBoundForm) -> f64 {
    bi.validate();
    let p = lp.power;
    let s2 = lp.noise;
    let s = match form {
        TotalBoundForm::Sharp => (2.0 - 2.0 * bi.eta11).sqrt(),
        TotalBoundForm::Relaxed => (2.0 - bi.eta11).sqrt(),
    };
    let h1 = bi.h1_norm2;
    let h2 = bi.h2_norm2;
    let terms = h1 * (1.0 - bi.eta11) / s2
        + p * h2 * h2 * s / (2.0 * s2 * s2)
        + h2 * (1.0 - bi.eta22) / s2
        + (h1 + h2) * (bi.beta_star - bi.beta_q).abs() / s2;
    (p / std::f64::consts::LN_2) * terms
}

/// Upper bound on |h21_star - |h2^H w1|^2|: how far the weak user's cross
/// gain moves when the strong user's ideal beam is replaced by its
/// codeword. Triangle inequality with both factors bounded by 2 ||h2||.
pub fn cross_gain_gap_bound(h2_norm2: f64, eta11: f64) -> f64 {
    assert!(h2_norm2.is_finite() && h2_norm2 >= 0.0, "norm must be finite and nonnegative");
    assert!((0.0..=1.0).contains(&eta11), "eta11 must lie in [0, 1]");
    2.0 * h2_norm2 * (2.0 - 2.0 * eta11).sqrt()
}

/// Tighter variant of `cross_gain_gap_bound` using the best-phase distance
/// between the ideal beam and the codeword, sqrt(2 - 2 sqrt(eta11)).
pub fn cross_gain_gap_bound_sharp(h2_norm2: f64, eta11: f64) -> f64 {
    assert!(h2_norm2.is_finite() && h2_norm2 >= 0.0, "norm must be finite and nonnegative");
    assert!((0.0..=1.0).contains(&eta11), "eta11 must lie in [0, 1]");
    2.0 * h2_norm2 * (2.0 - 2.0 * eta11.sqrt()).sqrt()
}

/// Upper bound on |h21_star - h21_hat|: the gap between the true cross gain
/// under ideal beams and the value the scheduler reconstructs from feedback
/// (quantized weak gain times codeword overlap). Chains both users' beam
/// gaps with the gain quantization error.
pub fn interference_gap_bound(h2_norm2: f64, eta11: f64, eta22: f64, delta_or_sat: f64) -> f64 {
    assert!(h2_norm2.is_finite() && h2_norm2 >= 0.0, "norm must be finite and nonnegative");
    assert!(
        (0.0..=1.0).contains(&eta11) && (0.0..=1.0).contains(&eta22),
        "alignment factors must lie in [0, 1]"
    );
    assert!(
        delta_or_sat.is_finite() && delta_or_sat >= 0.0,
        "quantization error must be finite and nonnegative"
    );
    2.0 * h2_norm2 * ((2.0 - 2.0 * eta11).sqrt() + (2.0 - 2.0 * eta22).sqrt())
        + delta_or_sat
        + (1.0 - eta22) * h2_norm2
}

/// One actual-versus-bound comparison.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    /// Which comparison this is.
    pub name: &'static str,
    /// Realized value that must not exceed the bound.
    pub actual: f64,
    /// Certified upper bound.
    pub bound: f64,
}

impl BoundCheck {
    /// Margin by which the bound holds; negative means violated.
    pub fn slack(&self) -> f64 {
        self.bound - self.actual
    }

    /// Whether the bound holds with the given floating-point slack.
    pub fn holds(&self, tol: f64) -> bool {
        self.actual <= self.bound + tol
    }
}

/// Every realized quantity and bound for one channel realization.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    /// Realized total rate loss.
    pub delta_r: f64,
    /// Realized power-allocation part of the loss.
    pub delta_r1: f64,
    /// Realized beam-mismatch part of the loss.
    pub delta_r2: f64,
    /// Combined bound on the total loss (sharp form).
    pub total_rate_loss_bound: f64,
    /// Bound on the power-allocation part.
    pub power_alloc_loss_bound: f64,
    /// Bound on the beam-mismatch part.
    pub beam_mismatch_loss_bound: f64,
    /// Realized |h21_star - |h2^H w1|^2|.
    pub cross_gain_gap: f64,
    /// Loose bound on the cross-gain gap.
    pub cross_gain_gap_bound: f64,
    /// Sharp bound on the cross-gain gap.
    pub cross_gain_gap_sharp_bound: f64,
    /// Realized |h21_star - h21_hat|.
    pub interference_gap: f64,
    /// Bound on the interference gap.
    pub interference_gap_bound: f64,
}

impl BoundReport {
    /// All comparisons in a fixed order.
    pub fn checks(&self) -> [BoundCheck; 6] {
        [
            BoundCheck {
                name: "total_rate_loss",
                actual: self.delta_r,
                bound: self.total_rate_loss_bound,
            },
            BoundCheck {
                name: "power_alloc_loss",
                actual: self.delta_r1.abs(),
                bound: self.power_alloc_loss_bound,
            },
            BoundCheck {
                name: "beam_mismatch_loss",
                actual: self.delta_r2,
                bound: self.beam_mismatch_loss_bound,
            },
            BoundCheck {
                name: "cross_gain_gap",
                actual: self.cross_gain_gap,
                bound: self.cross_gain_gap_bound,
            },
            BoundCheck {
                name: "cross_gain_gap_sharp",
                actual: self.cross_gain_gap,
                bound: self.cross_gain_gap_sharp_bound,
            },
            BoundCheck {
                name: "interference_gap",
                actual: self.interference_gap,
                bound: self.interference_gap_bound,
            },
        ]
    }

    /// Names of the checks that fail at the given slack.
    pub fn violations(&self, tol: f64) -> Vec<&'static str> {
        self.checks().iter().filter(|c| !c.holds(tol)).map(|c| c.name).collect()
    }

    /// Whether any check fails at the given slack.
    pub fn violated(&self, tol: f64) -> bool {
        self.checks().iter().any(|c| !c.holds(tol))
    }
}

/// Computes the realized losses and gaps for one realization and evaluates
/// every bound against them. `w1`/`w2` are the users' codewords in the
/// full-CSI frame (`w1` serves the larger-norm user) and `h21_hat` is the
/// cross gain the scheduler reconstructs from feedback.
pub fn evaluate_bounds(
    ch: &ChannelRealization,
    w1: &[Complex64],
    w2: &[Complex64],
    h21_hat: f64,
    bi: &BoundInputs,
    lp: &LinkParams,
) -> Result<BoundReport> {
    bi.validate();
    assert!(h21_hat.is_finite() && h21_hat >= 0.0, "h21_hat must be finite and nonnegative");
    let split = rate_loss_split(ch, w1, w2, bi.beta_star, bi.beta_q, lp)?;
    let g_beams = effective_gains_with_beams(ch, w1, w2)?;
    let cross_gain_gap = (bi.h21_star - g_beams.g21).abs();
    let interference_gap = (bi.h21_star - h21_hat).abs();
    Ok(BoundReport {
        delta_r: split.delta_r,
        delta_r1: split.delta_r1,
        delta_r2: split.delta_r2,
        total_rate_loss_bound: total_rate_loss_bound(bi, lp, TotalBoundForm::Sharp),
        power_alloc_loss_bound: power_alloc_loss_bound(bi, lp),
        beam_mismatch_loss_bound: beam_mismatch_loss_bound(bi, lp),
        cross_gain_gap,
        cross_gain_gap_bound: cross_gain_gap_bound(bi.h2_norm2, bi.eta11),
        cross_gain_gap_sharp_bound: cross_gain_gap_bound_sharp(bi.h2_norm2, bi.eta11),
        interference_gap,
        interference_gap_bound: interference_gap_bound(
            bi.h2_norm2,
            bi.eta11,
            bi.eta22,
            bi.delta_or_sat,
        ),
    })
}

/// Convenience: alignment of `h` with unit vector `w`, |h^H w|^2 / ||h||^2,
/// clamped to [0, 1].
pub fn alignment(h: &[Complex64], w: &[Complex64]) -> Result<f64> {
    let h_norm2 = norm2(h);
    let gain = crate::channel::inner_product(h, w)?.norm_sqr();
    if h_norm2 <= 0.0 {
        return Ok(0.0);
    }
    Ok((gain / h_norm2).min(1.0))
}
