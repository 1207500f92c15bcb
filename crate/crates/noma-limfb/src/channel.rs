//! Rayleigh channel draws and pairwise channel geometry.
//!
//! Channel vectors have i.i.d. circularly symmetric complex Gaussian entries
//! of unit variance. Entries are generated by an explicit Box-Muller map so
//! that a stream of uniforms fully determines the draw; the sequence never
//! depends on distribution-crate internals. [`describe`] packages the scalar
//! geometry of an ordered user pair (norms, norm ratio, alignment angle,
//! cross gains under matched filtering) that every later stage consumes.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Squared Euclidean norm.
pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Inner product, conjugate-linear in the first argument.
pub fn inner_product(a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    Ok(dot(a, b))
}

/// Unchecked inner product for internal call sites with known dimensions.
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Draw an `n_t`-antenna channel with i.i.d. CN(0, 1) entries.
///
/// Each entry consumes exactly two uniforms: `u1` maps to the squared
/// magnitude `-ln(1 - u1)` (unit-mean exponential) and `u2` to the phase.
/// A zero-norm draw, while having probability zero, is rejected and redrawn.
pub fn draw_rayleigh<R: Rng + ?Sized>(n_t: usize, rng: &mut R) -> Result<Vec<Complex64>> {
    if n_t == 0 {
        return Err(Error::InvalidDimension);
    }
    loop {
        let mut h = Vec::with_capacity(n_t);
        for _ in 0..n_t {
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let r = (-(1.0 - u1).ln()).sqrt();
            let phi = std::f64::consts::TAU * u2;
            h.push(Complex64::new(r * phi.cos(), r * phi.sin()));
        }
        if norm2(&h) > 0.0 {
            return Ok(h);
        }
    }
}

/// An ordered user pair with cached geometry.
///
/// The struct keeps whatever order the caller passed; the simulation pipeline
/// puts the stronger user (larger `||h||^2`) first.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub h1: Vec<Complex64>,
    pub h2: Vec<Complex64>,
    /// `H1 = ||h1||^2`
    pub h1_norm2: f64,
    /// `H2 = ||h2||^2`
    pub h2_norm2: f64,
    /// `rho = ||h2|| / ||h1||`
    pub rho: f64,
    /// `cos(theta) = |h2^H h1| / (||h1|| ||h2||)`, in `[0, 1]`
    pub cos_theta: f64,
    /// `sin^2(theta) = 1 - cos^2(theta)`
    pub sin2_theta: f64,
    /// Cross gain at user 2 when user 1 is served on `h1/||h1||`:
    /// `|h2^H h1|^2 / H1` (equals `H2 cos^2(theta)`).
    pub h21_star: f64,
    /// Cross gain at user 1 when user 2 is served on `h2/||h2||`:
    /// `|h1^H h2|^2 / H2` (equals `H1 cos^2(theta)`).
    pub h12_star: f64,
}

/// Compute the pairwise geometry of `(h1, h2)`.
pub fn describe(h1: &[Complex64], h2: &[Complex64]) -> Result<ChannelRealization> {
    if h1.is_empty() {
        return Err(Error::InvalidDimension);
    }
    if h1.len() != h2.len() {
        return Err(Error::DimensionMismatch(h1.len(), h2.len()));
    }
    let h1_norm2 = norm2(h1);
    let h2_norm2 = norm2(h2);
    if h1_norm2 <= 0.0 || h2_norm2 <= 0.0 {
        return Err(Error::DegenerateChannel);
    }
    let cross = dot(h2, h1).norm_sqr();
    // Clamp against roundoff: Cauchy-Schwarz gives cross <= H1 * H2.
    let cos_theta = (cross / (h1_norm2 * h2_norm2)).sqrt().min(1.0);
    let sin2_theta = (1.0 - cos_theta * cos_theta).max(0.0);
    Ok(ChannelRealization {
        h1: h1.to_vec(),
        h2: h2.to_vec(),
        h1_norm2,
        h2_norm2,
        rho: (h2_norm2 / h1_norm2).sqrt(),
        cos_theta,
        sin2_theta,
        h21_star: cross / h1_norm2,
        h12_star: cross / h2_norm2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamDomain};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_first_argument() {
        // (0.8, 0.6i)^H (1, 0) = conj(0.8) * 1 = 0.8
        let a = [c(0.8, 0.0), c(0.0, 0.6)];
        let b = [c(1.0, 0.0), c(0.0, 0.0)];
        let ip = inner_product(&a, &b).unwrap();
        assert_relative_eq!(ip.re, 0.8, max_relative = 1e-15);
        assert_relative_eq!(ip.im, 0.0);

        // <alpha a, b> = conj(alpha) <a, b>
        let alpha = c(0.3, -1.2);
        let scaled: Vec<_> = a.iter().map(|x| alpha * x).collect();
        let lhs = inner_product(&scaled, &b).unwrap();
        let rhs = alpha.conj() * ip;
        assert_relative_eq!(lhs.re, rhs.re, max_relative = 1e-14);
        assert_relative_eq!(lhs.im, rhs.im, max_relative = 1e-14);
    }

    #[test]
    fn inner_product_rejects_dimension_mismatch() {
        let a = [c(1.0, 0.0)];
        let b = [c(1.0, 0.0), c(0.0, 0.0)];
        assert!(inner_product(&a, &b).is_err());
    }

    #[test]
    fn describe_identities_hold() {
        let mut rng = substream(11, StreamDomain::Channel, 0);
        for _ in 0..200 {
            let h1 = draw_rayleigh(4, &mut rng).unwrap();
            let h2 = draw_rayleigh(4, &mut rng).unwrap();
            let ch = describe(&h1, &h2).unwrap();
            assert!(ch.cos_theta >= 0.0 && ch.cos_theta <= 1.0);
            assert_relative_eq!(
                ch.sin2_theta + ch.cos_theta * ch.cos_theta,
                1.0,
                epsilon = 1e-12
            );
            // Cross gains relate to the alignment angle.
            assert_relative_eq!(
                ch.h21_star,
                ch.h2_norm2 * ch.cos_theta * ch.cos_theta,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                ch.h12_star,
                ch.h1_norm2 * ch.cos_theta * ch.cos_theta,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                ch.rho * ch.rho,
                ch.h2_norm2 / ch.h1_norm2,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn describe_of_identical_vectors_is_fully_aligned() {
        let h = [c(1.0, 2.0), c(-0.5, 0.25)];
        let ch = describe(&h, &h).unwrap();
        assert_relative_eq!(ch.cos_theta, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ch.h21_star, ch.h2_norm2, max_relative = 1e-12);
        assert_relative_eq!(ch.rho, 1.0);
    }

    #[test]
    fn describe_rejects_degenerate_input() {
        let z = [c(0.0, 0.0), c(0.0, 0.0)];
        let h = [c(1.0, 0.0), c(0.0, 0.0)];
        assert!(matches!(describe(&z, &h), Err(Error::DegenerateChannel)));
        assert!(matches!(describe(&h, &z), Err(Error::DegenerateChannel)));
        assert!(describe(&[], &[]).is_err());
    }

    #[test]
    fn draw_statistics_match_the_gamma_model() {
        // ||h||^2 is Gamma(n_t, 1): mean n_t, raw second moment n_t (n_t + 1).
        let n = 100_000;
        let n_t = 4;
        let mut rng = substream(3, StreamDomain::Channel, 1);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let h = draw_rayleigh(n_t, &mut rng).unwrap();
            let g = norm2(&h);
            sum += g;
            sum_sq += g * g;
        }
        let mean = sum / n as f64;
        let mean_sq = sum_sq / n as f64;
        assert_relative_eq!(mean, n_t as f64, max_relative = 0.01);
        assert_relative_eq!(mean_sq, (n_t * (n_t + 1)) as f64, max_relative = 0.02);
    }

    #[test]
    fn draws_are_deterministic_per_stream() {
        let mut a = substream(5, StreamDomain::Channel, 9);
        let mut b = substream(5, StreamDomain::Channel, 9);
        let ha = draw_rayleigh(3, &mut a).unwrap();
        let hb = draw_rayleigh(3, &mut b).unwrap();
        assert_eq!(ha, hb);
    }

    #[test]
    fn draw_rejects_zero_dimension() {
        let mut rng = substream(5, StreamDomain::Channel, 0);
        assert!(draw_rayleigh(0, &mut rng).is_err());
    }
}
