//! Two-user downlink power-domain multiplexing: SINRs, rates, the feasible
//! power-split interval, the closed-form optimal split, feasibility tests,
//! and base-station gain reconstruction from feedback.
//!
//! Conventions: user 1 is the strong user (decodes the weak user's message
//! first, cancels it, then decodes its own); user 2 treats the strong user's
//! stream as noise. `beta` is the strong user's share of the total power.
//! Gain subscripts read receiver-then-beam: `g21` is user 2's gain on beam 1.
//! Rate computations absorb the transmit power into the gains (`G = P * g`),
//! which keeps the stationary-point algebra in its simplest form.

use num_complex::Complex64;

use crate::channel::{dot, ChannelRealization};
use crate::error::{Error, Result};

/// Transmit power, noise power, and the per-user rate threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkParams {
    /// Total transmit power (linear).
    pub power: f64,
    /// Noise power (linear), identical at both receivers.
    pub noise: f64,
    /// Per-user rate threshold in bit/s/Hz.
    pub r_th: f64,
    /// SINR threshold `2^r_th - 1` implied by `r_th`.
    pub epsilon: f64,
}

impl LinkParams {
    pub fn new(power: f64, noise: f64, r_th: f64) -> Result<Self> {
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::Domain(format!("power {power} must be positive")));
        }
        if !(noise.is_finite() && noise > 0.0) {
            return Err(Error::Domain(format!("noise {noise} must be positive")));
        }
        if !(r_th.is_finite() && r_th >= 0.0) {
            return Err(Error::Domain(format!("rate threshold {r_th} must be nonnegative")));
        }
        Ok(Self { power, noise, r_th, epsilon: r_th.exp2() - 1.0 })
    }

    /// Unit noise power and `P = 10^(snr_db/10)`.
    pub fn from_snr_db(snr_db: f64, r_th: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::Domain(format!("SNR {snr_db} dB must be finite")));
        }
        Self::new(10f64.powf(snr_db / 10.0), 1.0, r_th)
    }
}

/// The four effective gains driving both users' SINRs.
///
/// Instantiated with true norms and angles in the full-CSI pipeline, with
/// reconstructed values at the base station, or with raw `|h_i^H w_j|^2`
/// when evaluating rates actually achieved by chosen beams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveGains {
    /// Strong user on its own beam.
    pub g11: f64,
    /// Weak user on the strong user's beam (interference).
    pub g21: f64,
    /// Weak user on its own beam.
    pub g22: f64,
    /// Strong user on the weak user's beam (drives its pre-cancellation decode).
    pub g12: f64,
}

fn assert_gains(g: &EffectiveGains) {
    for (name, v) in [("g11", g.g11), ("g21", g.g21), ("g22", g.g22), ("g12", g.g12)] {
        assert!(v.is_finite() && v >= 0.0, "{name} = {v} must be finite and nonnegative");
    }
}

/// Full-CSI matched-filter gains of an ordered pair.
pub fn effective_gains_mrt(ch: &ChannelRealization) -> EffectiveGains {
    EffectiveGains {
        g11: ch.h1_norm2,
        g21: ch.h21_star,
        g22: ch.h2_norm2,
        g12: ch.h12_star,
    }
}

/// Gains actually achieved by beams `w1`, `w2` on the true channels.
pub fn effective_gains_with_beams(
    ch: &ChannelRealization,
    w1: &[Complex64],
    w2: &[Complex64],
) -> Result<EffectiveGains> {
    let n_t = ch.h1.len();
    if w1.len() != n_t {
        return Err(Error::DimensionMismatch(n_t, w1.len()));
    }
    if w2.len() != n_t {
        return Err(Error::DimensionMismatch(n_t, w2.len()));
    }
    Ok(EffectiveGains {
        g11: dot(&ch.h1, w1).norm_sqr(),
        g21: dot(&ch.h2, w1).norm_sqr(),
        g22: dot(&ch.h2, w2).norm_sqr(),
        g12: dot(&ch.h1, w2).norm_sqr(),
    })
}

/// The three SINRs of the decoding chain at power split `beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinrTriple {
    /// Strong user decoding its own message after cancellation.
    pub strong: f64,
    /// Weak user decoding its own message under interference.
    pub weak: f64,
    /// Strong user decoding the weak user's message before cancellation.
    pub sic: f64,
}

/// Evaluate all three SINRs.
pub fn sinr_all(g: &EffectiveGains, beta: f64, lp: &LinkParams) -> SinrTriple {
    assert_gains(g);
    assert!((0.0..=1.0).contains(&beta), "beta = {beta} outside [0, 1]");
    let s2 = lp.noise;
    let p = lp.power;
    SinrTriple {
        strong: beta * p * g.g11 / s2,
        weak: (1.0 - beta) * p * g.g22 / (beta * p * g.g21 + s2),
        sic: (1.0 - beta) * p * g.g12 / (beta * p * g.g11 + s2),
    }
}

/// Per-user and sum rates at a power split, with the underlying SINRs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateReport {
    pub sinr: SinrTriple,
    /// Strong user's rate, `log2(1 + strong SINR)`.
    pub r1: f64,
    /// Weak user's rate, `log2(1 + weak SINR)`.
    pub r2: f64,
    pub sum: f64,
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Rates achieved at split `beta` with the given gains.
pub fn rates(g: &EffectiveGains, beta: f64, lp: &LinkParams) -> RateReport {
    let sinr = sinr_all(g, beta, lp);
    let r1 = log2_1p(sinr.strong);
    let r2 = log2_1p(sinr.weak);
    RateReport { sinr, r1, r2, sum: r1 + r2 }
}

/// The three threshold-derived endpoints of the feasible power-split set.
///
/// Raw values are kept as computed: `beta1_min` is `+inf` when the strong
/// user's gain is zero, and the two upper bounds go negative when even full
/// power cannot serve the corresponding constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaInterval {
    /// Least split meeting the strong user's own-rate threshold.
    pub beta1_min: f64,
    /// Largest split keeping the weak user at its threshold.
    pub beta2_max: f64,
    /// Largest split letting the strong user decode the weak message.
    pub beta_sic_max: f64,
}

impl BetaInterval {
    /// Lower endpoint of the feasible set, clamped into `[0, inf)`.
    pub fn lower(&self) -> f64 {
        self.beta1_min.max(0.0)
    }

    /// Upper endpoint of the feasible set, clamped into `(-inf, 1]`.
    pub fn upper(&self) -> f64 {
        self.beta2_max.min(self.beta_sic_max).min(1.0)
    }

    /// Whether any split satisfies all three constraints.
    pub fn is_feasible(&self) -> bool {
        self.lower() <= self.upper()
    }
}

/// Closed-form constraint endpoints for the given gains.
pub fn beta_bounds(g: &EffectiveGains, lp: &LinkParams) -> BetaInterval {
    assert_gains(g);
    let eps = lp.epsilon;
    if eps == 0.0 {
        // No rate threshold: every split in [0, 1] is admissible.
        return BetaInterval { beta1_min: 0.0, beta2_max: 1.0, beta_sic_max: 1.0 };
    }
    let e_noise = eps * lp.noise;
    let g11 = lp.power * g.g11;
    let g21 = lp.power * g.g21;
    let g22 = lp.power * g.g22;
    let g12 = lp.power * g.g12;
    BetaInterval {
        beta1_min: e_noise / g11,
        beta2_max: (g22 - e_noise) / (g22 + eps * g21),
        beta_sic_max: (g12 - e_noise) / (g12 + eps * g11),
    }
}

/// Interior stationary point of the sum rate, if one exists in `(0, 1)`.
///
/// With power-absorbed gains `G = P * g`, the stationarity condition reduces
/// to `a b^2 + b b + c = 0` with
/// `a = G11 G21 (G22 - G21)`, `b = 2 G11 s^2 (G22 - G21)`,
/// `c = s^4 (G22 - G11) + s^2 (G21 - G11) G22`.
/// Since `a` and `b` share the sign of `G22 - G21`, the parabola's vertex
/// sits at a nonpositive split and at most one root can be positive.
pub fn stationary_beta(g: &EffectiveGains, lp: &LinkParams) -> Option<f64> {
    assert_gains(g);
    let s2 = lp.noise;
    let g11 = lp.power * g.g11;
    let g21 = lp.power * g.g21;
    let g22 = lp.power * g.g22;
    let a = g11 * g21 * (g22 - g21);
    let b = 2.0 * g11 * s2 * (g22 - g21);
    let c = s2 * s2 * (g22 - g11) + s2 * (g21 - g11) * g22;
    let interior = |x: f64| x > 0.0 && x < 1.0;
    if a == 0.0 {
        if b == 0.0 {
            return None;
        }
        let root = -c / b;
        return interior(root).then_some(root);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    // a != 0 forces b != 0 here, so this pairing avoids cancellation and
    // q is nonzero.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    [q / a, c / q].into_iter().find(|&r| interior(r))
}

/// Which candidate of the closed-form solution won the comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveCandidate {
    IntervalMin,
    Stationary,
    IntervalMax,
}

/// Outcome of the closed-form sum-rate maximization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaSolution {
    pub interval: BetaInterval,
    /// Interior stationary point, whether or not it lies in the interval.
    pub beta0: Option<f64>,
    /// Maximizing split; `None` when the interval is empty.
    pub beta_star: Option<f64>,
    /// Candidate that achieved the maximum; `None` when infeasible.
    pub active: Option<ActiveCandidate>,
}

impl BetaSolution {
    pub fn feasible(&self) -> bool {
        self.beta_star.is_some()
    }
}

/// Maximize the sum rate over the feasible interval.
///
/// The maximizer is one of: interval minimum, interior stationary point (when
/// it falls strictly inside), interval maximum. Candidates are compared in
/// ascending split order and only a strictly larger sum rate displaces the
/// incumbent, so ties resolve toward the smaller split, favoring the weak
/// user's margin.
pub fn solve_beta(g: &EffectiveGains, lp: &LinkParams) -> BetaSolution {
    let interval = beta_bounds(g, lp);
    let beta0 = stationary_beta(g, lp);
    if !interval.is_feasible() {
        return BetaSolution { interval, beta0, beta_star: None, active: None };
    }
    let lo = interval.lower();
    let hi = interval.upper();
    let mut candidates = Vec::with_capacity(3);
    candidates.push((lo, ActiveCandidate::IntervalMin));
    if let Some(b0) = beta0 {
        if b0 > lo && b0 < hi {
            candidates.push((b0, ActiveCandidate::Stationary));
        }
    }
    candidates.push((hi, ActiveCandidate::IntervalMax));

    let mut best = candidates[0];
    let mut best_sum = rates(g, best.0, lp).sum;
    for &(beta, which) in &candidates[1..] {
        let sum = rates(g, beta, lp).sum;
        if sum > best_sum {
            best = (beta, which);
            best_sum = sum;
        }
    }
    BetaSolution { interval, beta0, beta_star: Some(best.0), active: Some(best.1) }
}

/// Base-station gain estimates from the two quantized own-beam gains and the
/// chosen codewords: cross gains are scaled by the beam alignment
/// `|w1^H w2|^2`.
pub fn reconstruct_gains(
    h11_hat: f64,
    h22_hat: f64,
    w1: &[Complex64],
    w2: &[Complex64],
) -> Result<EffectiveGains> {
    assert!(h11_hat.is_finite() && h11_hat >= 0.0, "h11_hat must be finite and nonnegative");
    assert!(h22_hat.is_finite() && h22_hat >= 0.0, "h22_hat must be finite and nonnegative");
    if w1.len() != w2.len() {
        return Err(Error::DimensionMismatch(w1.len(), w2.len()));
    }
    if w1.is_empty() {
        return Err(Error::InvalidDimension);
    }
    // Unit-norm codewords give an alignment in [0, 1]; clamp roundoff.
    let c2 = dot(w1, w2).norm_sqr().min(1.0);
    Ok(EffectiveGains {
        g11: h11_hat,
        g21: h22_hat * c2,
        g22: h22_hat,
        g12: h11_hat * c2,
    })
}

/// Which user the base station serves as the strong one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrongUser {
    First,
    Second,
}

/// Pick the strong user from two gain reports; ties go to the first user.
pub fn strong_user_order(q1: f64, q2: f64) -> StrongUser {
    assert!(q1.is_finite() && q1 >= 0.0 && q2.is_finite() && q2 >= 0.0);
    if q2 > q1 {
        StrongUser::Second
    } else {
        StrongUser::First
    }
}

/// Geometric feasibility of the full-CSI scheme from pair statistics:
/// norm `H1` of the strong channel, norm ratio `rho`, and alignment
/// `cos_theta`. Boundary equalities count as infeasible.
pub fn feasibility_geometric_stats(
    h1_norm2: f64,
    rho: f64,
    cos_theta: f64,
    lp: &LinkParams,
) -> bool {
    assert!(h1_norm2.is_finite() && h1_norm2 >= 0.0, "h1_norm2 must be finite and nonnegative");
    assert!(rho.is_finite() && rho >= 0.0, "rho must be finite and nonnegative");
    assert!((0.0..=1.0).contains(&cos_theta), "cos_theta = {cos_theta} outside [0, 1]");
    let eps = lp.epsilon;
    if eps == 0.0 {
        return true;
    }
    let e_noise = eps * lp.noise;
    let margin = lp.power * h1_norm2 - e_noise;
    if margin <= 0.0 {
        return false;
    }
    let cos2 = cos_theta * cos_theta;
    if cos2 <= e_noise * (eps + 1.0) / margin {
        return false;
    }
    let denom = lp.power * h1_norm2 / e_noise - 1.0 - eps * cos2;
    if denom <= 0.0 {
        return false;
    }
    rho * rho * denom > 1.0
}

/// Geometric feasibility of a channel pair (strong user first).
pub fn feasibility_geometric(ch: &ChannelRealization, lp: &LinkParams) -> bool {
    feasibility_geometric_stats(ch.h1_norm2, ch.rho, ch.cos_theta, lp)
}

/// How the base station decides to run the power-domain scheme from
/// reconstructed gains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LfFeasibilityMode {
    /// Go whenever a feasible split exists for the reconstructed gains.
    Operational,
    /// Additionally require the strict geometric margins on the
    /// reconstructed geometry. The floor-quantized own gain never
    /// overstates the true effective gain, so this is a safe-side test; it
    /// differs from the operational one only at boundary equalities, which
    /// it rejects.
    Conservative,
}

/// Feasibility decision at the base station.
///
/// `recon` must come from [`reconstruct_gains`]; a zero reconstructed
/// own-beam gain disables the scheme outright, regardless of the threshold.
pub fn feasibility_limited_feedback(
    recon: &EffectiveGains,
    lp: &LinkParams,
    mode: LfFeasibilityMode,
) -> bool {
    assert_gains(recon);
    if recon.g11 <= 0.0 || recon.g22 <= 0.0 {
        return false;
    }
    let operational = solve_beta(recon, lp).feasible();
    match mode {
        LfFeasibilityMode::Operational => operational,
        LfFeasibilityMode::Conservative => {
            let rho_hat = (recon.g22 / recon.g11).sqrt();
            let cos_hat = (recon.g21 / recon.g22).sqrt().min(1.0);
            operational && feasibility_geometric_stats(recon.g11, rho_hat, cos_hat, lp)
        }
    }
}

/// Sum rate of equal-time orthogonal scheduling: each user gets half the
/// time at full power on its own beam.
pub fn tdma_rate(g11: f64, g22: f64, lp: &LinkParams) -> f64 {
    assert!(g11.is_finite() && g11 >= 0.0, "g11 must be finite and nonnegative");
    assert!(g22.is_finite() && g22 >= 0.0, "g22 must be finite and nonnegative");
    0.5 * (log2_1p(lp.power * g11 / lp.noise) + log2_1p(lp.power * g22 / lp.noise))
}
