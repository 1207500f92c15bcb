//! Random vector quantization codebooks and beam selection.
//!
//! A codebook holds `2^B'` unit-norm beamforming vectors drawn isotropically
//! (a Gaussian draw normalized to unit length). Each user reports the index
//! maximizing its own effective gain `|h^H c_j|^2`; ties break toward the
//! smaller index so selection is a pure function of the codebook order.
//! Codewords are drawn sequentially from one stream, so the codebook for a
//! smaller `B'` is a prefix of the one for a larger `B'` on the same stream;
//! selection quality is then monotone in `B'` sample by sample.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{dot, draw_rayleigh, norm2};
use crate::error::{Error, Result};

/// A set of unit-norm beamforming vectors of a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    n_t: usize,
    vectors: Vec<Vec<Complex64>>,
}

/// Outcome of matching a channel against a codebook.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmiSelection {
    /// Index of the chosen codeword.
    pub index: usize,
    /// Effective gain `|h^H c|^2` of the chosen codeword.
    pub effective_gain: f64,
    /// Direction quality `|h^H c|^2 / ||h||^2`, in `[0, 1]`.
    pub eta: f64,
}

impl Codebook {
    /// Build a codebook from pre-normalized vectors.
    ///
    /// Every vector must have the same dimension and unit norm to within
    /// `1e-9`. Vectors off by more than `1e-12` are re-normalized; ones
    /// already that close are kept bit-exact, so reconstructing a codebook
    /// from its own vectors is the identity.
    pub fn new(vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        if vectors.is_empty() || vectors[0].is_empty() {
            return Err(Error::InvalidDimension);
        }
        let n_t = vectors[0].len();
        let mut out = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != n_t {
                return Err(Error::DimensionMismatch(n_t, v.len()));
            }
            let n2 = norm2(&v);
            if !(n2.is_finite() && (n2 - 1.0).abs() < 1e-9) {
                return Err(Error::Domain(format!(
                    "codeword norm^2 {n2} is not within 1e-9 of 1"
                )));
            }
            if (n2 - 1.0).abs() <= 1e-12 {
                out.push(v);
            } else {
                let scale = 1.0 / n2.sqrt();
                out.push(v.into_iter().map(|z| z * scale).collect());
            }
        }
        Ok(Self { n_t, vectors: out })
    }

    /// Vector dimension (number of transmit antennas).
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Number of codewords.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    /// Whether the codebook holds no codewords (never true for a built one).
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Codeword at `index`.
    pub fn vector(&self, index: usize) -> &[Complex64] {
        &self.vectors[index]
    }

    /// Pick the codeword maximizing `|h^H c_j|^2`; first index wins ties.
    pub fn select_pmi(&self, h: &[Complex64]) -> Result<PmiSelection> {
        if h.len() != self.n_t {
            return Err(Error::DimensionMismatch(self.n_t, h.len()));
        }
        let h_norm2 = norm2(h);
        if h_norm2 <= 0.0 {
            return Err(Error::DegenerateChannel);
        }
        let mut best = 0;
        let mut best_gain = f64::NEG_INFINITY;
        for (j, c) in self.vectors.iter().enumerate() {
            let gain = dot(h, c).norm_sqr();
            if gain > best_gain {
                best = j;
                best_gain = gain;
            }
        }
        Ok(PmiSelection {
            index: best,
            effective_gain: best_gain,
            eta: (best_gain / h_norm2).min(1.0),
        })
    }

    /// `|c_i^H c_j|`, the alignment between two codewords.
    pub fn cos_theta_hat(&self, i: usize, j: usize) -> f64 {
        dot(&self.vectors[i], &self.vectors[j]).norm().min(1.0)
    }

    /// Write the codebook as text, one codeword per line, entries as
    /// `re,im` pairs separated by `;`.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.vectors {
            let line: Vec<String> = v.iter().map(|z| format!("{},{}", z.re, z.im)).collect();
            writeln!(w, "{}", line.join(";"))?;
        }
        Ok(())
    }

    /// Read a codebook written by [`write_text`](Self::write_text).
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut vectors = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut v = Vec::new();
            for entry in line.split(';') {
                let (re, im) = entry.split_once(',').ok_or_else(|| {
                    Error::Parse(format!("line {}: entry `{entry}` is not `re,im`", lineno + 1))
                })?;
                let re: f64 = re.trim().parse().map_err(|e| {
                    Error::Parse(format!("line {}: bad real part: {e}", lineno + 1))
                })?;
                let im: f64 = im.trim().parse().map_err(|e| {
                    Error::Parse(format!("line {}: bad imaginary part: {e}", lineno + 1))
                })?;
                v.push(Complex64::new(re, im));
            }
            vectors.push(v);
        }
        Self::new(vectors)
    }
}

/// Draw `2^bits` isotropic unit vectors of dimension `n_t`.
pub fn generate_rvq<R: Rng + ?Sized>(n_t: usize, bits: u32, rng: &mut R) -> Result<Codebook> {
    if n_t == 0 {
        return Err(Error::InvalidDimension);
    }
    if bits == 0 || bits > 20 {
        return Err(Error::Domain(format!(
            "codebook bits {bits} outside supported range 1..=20"
        )));
    }
    let size = 1usize << bits;
    let mut vectors = Vec::with_capacity(size);
    for _ in 0..size {
        let g = draw_rayleigh(n_t, rng)?;
        let scale = 1.0 / norm2(&g).sqrt();
        vectors.push(g.into_iter().map(|z| z * scale).collect());
    }
    Codebook::new(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamDomain};
    use approx::assert_relative_eq;

    #[test]
    fn generated_codewords_are_unit_norm() {
        let mut rng = substream(7, StreamDomain::Codebook, 0);
        let cb = generate_rvq(4, 3, &mut rng).unwrap();
        assert_eq!(cb.len(), 8);
        assert_eq!(cb.n_t(), 4);
        for j in 0..cb.len() {
            assert_relative_eq!(norm2(cb.vector(j)), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn smaller_codebook_is_a_prefix_of_a_larger_one_on_the_same_stream() {
        let mut a = substream(7, StreamDomain::Codebook, 42);
        let mut b = substream(7, StreamDomain::Codebook, 42);
        let small = generate_rvq(3, 2, &mut a).unwrap();
        let large = generate_rvq(3, 4, &mut b).unwrap();
        for j in 0..small.len() {
            assert_eq!(small.vector(j), large.vector(j));
        }
    }

    #[test]
    fn selection_maximizes_effective_gain_with_first_index_tiebreak() {
        // Orthonormal basis codebook in dimension 2, plus a duplicate of the
        // first codeword to exercise the tiebreak.
        let e0 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let e1 = vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let cb = Codebook::new(vec![e0.clone(), e1, e0]).unwrap();

        let h = [Complex64::new(0.3, 0.0), Complex64::new(2.0, 0.0)];
        let sel = cb.select_pmi(&h).unwrap();
        assert_eq!(sel.index, 1);
        assert_relative_eq!(sel.effective_gain, 4.0, max_relative = 1e-12);
        assert_relative_eq!(sel.eta, 4.0 / 4.09, max_relative = 1e-12);

        // Equal gain on codewords 0 and 2: index 0 wins.
        let h_tie = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(cb.select_pmi(&h_tie).unwrap().index, 0);
    }

    #[test]
    fn eta_improves_with_codebook_size_on_a_shared_stream() {
        let mut ch_rng = substream(1, StreamDomain::Channel, 5);
        let h = draw_rayleigh(4, &mut ch_rng).unwrap();
        let mut prev_eta = 0.0;
        for bits in 1..=8 {
            let mut cb_rng = substream(1, StreamDomain::Codebook, 5);
            let cb = generate_rvq(4, bits, &mut cb_rng).unwrap();
            let sel = cb.select_pmi(&h).unwrap();
            // Prefix property: the best over a superset can only improve.
            assert!(sel.eta >= prev_eta);
            prev_eta = sel.eta;
        }
        assert!(prev_eta > 0.5, "eta {prev_eta} suspiciously small at 8 bits");
    }

    #[test]
    fn cos_theta_hat_is_symmetric_and_bounded() {
        let mut rng = substream(9, StreamDomain::Codebook, 0);
        let cb = generate_rvq(3, 3, &mut rng).unwrap();
        for i in 0..cb.len() {
            assert_relative_eq!(cb.cos_theta_hat(i, i), 1.0, epsilon = 1e-12);
            for j in 0..cb.len() {
                let a = cb.cos_theta_hat(i, j);
                let b = cb.cos_theta_hat(j, i);
                assert!((0.0..=1.0).contains(&a));
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut rng = substream(13, StreamDomain::Codebook, 3);
        let cb = generate_rvq(4, 3, &mut rng).unwrap();
        let mut buf = Vec::new();
        cb.write_text(&mut buf).unwrap();
        let back = Codebook::read_text(buf.as_slice()).unwrap();
        assert_eq!(cb, back);
    }

    #[test]
    fn read_text_rejects_malformed_input() {
        assert!(Codebook::read_text("1.0;2.0".as_bytes()).is_err());
        assert!(Codebook::read_text("1.0,x".as_bytes()).is_err());
        // Mixed dimensions.
        let mixed = "1,0;0,0\n1,0\n";
        assert!(Codebook::read_text(mixed.as_bytes()).is_err());
        // Non-unit norm.
        assert!(Codebook::read_text("2,0;0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn select_pmi_rejects_bad_input() {
        let mut rng = substream(2, StreamDomain::Codebook, 0);
        let cb = generate_rvq(2, 1, &mut rng).unwrap();
        assert!(cb.select_pmi(&[Complex64::new(1.0, 0.0)]).is_err());
        let zero = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(cb.select_pmi(&zero).is_err());
    }
}
