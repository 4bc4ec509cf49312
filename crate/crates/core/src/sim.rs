//! Exact small-blocklength coding simulation.
//!
//! A scheme at blocklength n maps source blocks x^n to one of m messages
//! and decodes (message, y^n) to a reproduction block z^n. With
//! m = floor(exp(n R)) the correct-decoding probability is
//!
//! ```text
//! P_c = Pr{ (1/n) sum_i d(X_i, Z_i) < Delta }   (strict inequality),
//! ```
//!
//! and g_n = -(1/n) ln max_schemes P_c. Everything here enumerates blocks
//! exactly: joint block probabilities and block distortions are product
//! tables, the best decoder for an encoder is computed in closed form, and
//! the scheme maximum enumerates all encoders under an explicit work guard.
//!
//! Sequences are indexed little-endian: position i of index `s` over
//! alphabet size b is `s / b^i % b`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{ensure, Error, Result};
use crate::source::SourceModel;

/// Cap on `m^(|X|^n)`, the number of encoders the exhaustive search visits.
pub const MAX_ENCODER_ENUMERATION: u64 = 1 << 20;

/// Product tables for blocklength n: joint block probabilities and block
/// distortion sums.
pub(crate) struct ProductTables {
    pub n: usize,
    pub xn: usize,
    pub yn: usize,
    pub zn: usize,
    /// pxy[ix * yn + iy] = prod_i p(x_i, y_i).
    pub pxy: Vec<f64>,
    /// dist[ix * zn + iz] = sum_i d(x_i, z_i).
    pub dist: Vec<f64>,
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    base.checked_pow(exp as u32)
        .filter(|&v| v <= 1 << 30)
        .ok_or_else(|| Error::guard(format!("{base}^{exp} block space is too large")))
}

impl ProductTables {
    pub fn new(src: &SourceModel, n: usize) -> Result<Self> {
        ensure(n >= 1, "blocklength must be at least 1")?;
        let xn = checked_pow(src.x_size, n)?;
        let yn = checked_pow(src.y_size, n)?;
        let zn = checked_pow(src.z_size, n)?;
        ensure(
            xn.checked_mul(yn).is_some_and(|v| v <= 1 << 26)
                && xn.checked_mul(zn).is_some_and(|v| v <= 1 << 26),
            format!("blocklength {n} product tables are too large"),
        )?;
        let mut pxy = vec![1.0; xn * yn];
        let mut dist = vec![0.0; xn * zn];
        for ix in 0..xn {
            for iy in 0..yn {
                let mut p = 1.0;
                let (mut rx, mut ry) = (ix, iy);
                for _ in 0..n {
                    p *= src.pxy(rx % src.x_size, ry % src.y_size);
                    rx /= src.x_size;
                    ry /= src.y_size;
                }
                pxy[ix * yn + iy] = p;
            }
            for iz in 0..zn {
                let mut d = 0.0;
                let (mut rx, mut rz) = (ix, iz);
                for _ in 0..n {
                    d += src.dist(rx % src.x_size, rz % src.z_size);
                    rx /= src.x_size;
                    rz /= src.z_size;
                }
                dist[ix * zn + iz] = d;
            }
        }
        Ok(ProductTables { n, xn, yn, zn, pxy, dist })
    }
}

/// Number of messages at blocklength n and rate R: max(1, floor(exp(n R))).
pub fn message_count(n: usize, rate: f64) -> Result<usize> {
    ensure(rate.is_finite() && rate >= 0.0, "rate must be finite and non-negative")?;
    ensure(n >= 1, "blocklength must be at least 1")?;
    let m = (n as f64 * rate).exp().floor();
    ensure(m <= u32::MAX as f64, format!("message count {m} overflows"))?;
    Ok((m as usize).max(1))
}

/// A fully specified blocklength-n scheme.
#[derive(Debug, Clone)]
pub struct CodingScheme {
    pub n: usize,
    pub m: usize,
    /// encoder[ix] in 0..m for each block index ix over |X|^n.
    pub encoder: Vec<u32>,
    /// decoder[s * |Y|^n + iy] = reproduction block index over |Z|^n.
    pub decoder: Vec<u32>,
}

impl CodingScheme {
    fn check(&self, t: &ProductTables) -> Result<()> {
        ensure(self.n == t.n, "scheme blocklength mismatch")?;
        ensure(self.m >= 1, "scheme needs at least one message")?;
        ensure(self.encoder.len() == t.xn, "encoder table has the wrong length")?;
        ensure(
            self.encoder.iter().all(|&s| (s as usize) < self.m),
            "encoder emits an out-of-range message",
        )?;
        ensure(self.decoder.len() == self.m * t.yn, "decoder table has the wrong length")?;
        ensure(
            self.decoder.iter().all(|&z| (z as usize) < t.zn),
            "decoder emits an out-of-range block",
        )
    }
}

fn pc_with_tables(t: &ProductTables, scheme: &CodingScheme, delta: f64) -> f64 {
    let threshold = t.n as f64 * delta;
    let mut pc = 0.0;
    for ix in 0..t.xn {
        let s = scheme.encoder[ix] as usize;
        for iy in 0..t.yn {
            let p = t.pxy[ix * t.yn + iy];
            if p > 0.0 {
                let iz = scheme.decoder[s * t.yn + iy] as usize;
                if t.dist[ix * t.zn + iz] < threshold {
                    pc += p;
                }
            }
        }
    }
    pc
}

/// Exact correct-decoding probability Pr{(1/n) d_n < Delta} of one scheme.
pub fn pc_exact(src: &SourceModel, scheme: &CodingScheme, delta: f64) -> Result<f64> {
    ensure(delta.is_finite() && delta >= 0.0, "delta must be finite and non-negative")?;
    let t = ProductTables::new(src, scheme.n)?;
    scheme.check(&t)?;
    Ok(pc_with_tables(&t, scheme, delta))
}

fn best_decoder_with_tables(t: &ProductTables, m: usize, encoder: &[u32]) -> Vec<u32> {
    // For each (message, y block) pick the z block minimizing the expected
    // distortion over the encoder bin; ties go to the smallest block index.
    let mut decoder = vec![0u32; m * t.yn];
    let mut bin = vec![0.0f64; t.zn];
    for s in 0..m {
        for iy in 0..t.yn {
            for v in bin.iter_mut() {
                *v = 0.0;
            }
            let mut mass = 0.0;
            for ix in 0..t.xn {
                if encoder[ix] as usize == s {
                    let p = t.pxy[ix * t.yn + iy];
                    if p > 0.0 {
                        mass += p;
                        for iz in 0..t.zn {
                            bin[iz] += p * t.dist[ix * t.zn + iz];
                        }
                    }
                }
            }
            if mass == 0.0 {
                continue;
            }
            let mut best = 0usize;
            for iz in 1..t.zn {
                if bin[iz] < bin[best] {
                    best = iz;
                }
            }
            decoder[s * t.yn + iy] = best as u32;
        }
    }
    decoder
}

/// Minimum-expected-distortion decoder for a fixed encoder, with
/// deterministic lexicographic tie-breaking.
pub fn optimal_decoder_for(src: &SourceModel, n: usize, m: usize, encoder: &[u32]) -> Result<Vec<u32>> {
    ensure(m >= 1, "need at least one message")?;
    let t = ProductTables::new(src, n)?;
    ensure(encoder.len() == t.xn, "encoder table has the wrong length")?;
    ensure(encoder.iter().all(|&s| (s as usize) < m), "encoder emits an out-of-range message")?;
    Ok(best_decoder_with_tables(&t, m, encoder))
}

/// The exhaustive-search optimum at blocklength n.
#[derive(Debug, Clone)]
pub struct BestScheme {
    pub scheme: CodingScheme,
    /// Maximum correct-decoding probability over all schemes.
    pub p_c: f64,
    /// -(1/n) ln p_c; infinite when no scheme decodes correctly.
    pub g_n: f64,
    /// Number of encoders enumerated.
    pub encoders_visited: u64,
}

/// Maximizes P_c over every encoder (each with its optimal decoder) at
/// m = floor(exp(n R)) messages. Errors when the enumeration would exceed
/// [`MAX_ENCODER_ENUMERATION`].
pub fn g_n_exhaustive(src: &SourceModel, n: usize, rate: f64, delta: f64) -> Result<BestScheme> {
    ensure(delta.is_finite() && delta >= 0.0, "delta must be finite and non-negative")?;
    let m = message_count(n, rate)?;
    let t = ProductTables::new(src, n)?;
    let count = (m as u64)
        .checked_pow(t.xn as u32)
        .filter(|&c| c <= MAX_ENCODER_ENUMERATION)
        .ok_or_else(|| {
            Error::guard(format!(
                "{m}^{} encoders exceed the enumeration cap {MAX_ENCODER_ENUMERATION}",
                t.xn
            ))
        })?;

    let mut encoder = vec![0u32; t.xn];
    let mut best: Option<BestScheme> = None;
    for _ in 0..count {
        let decoder = best_decoder_with_tables(&t, m, &encoder);
        let scheme = CodingScheme { n, m, encoder: encoder.clone(), decoder };
        let pc = pc_with_tables(&t, &scheme, delta);
        if best.as_ref().is_none_or(|b| pc > b.p_c) {
            best = Some(BestScheme {
                scheme,
                p_c: pc,
                g_n: if pc > 0.0 { -pc.ln() / n as f64 } else { f64::INFINITY },
                encoders_visited: count,
            });
        }
        // Odometer increment over the encoder table, position 0 fastest.
        for digit in encoder.iter_mut() {
            *digit += 1;
            if (*digit as usize) < m {
                break;
            }
            *digit = 0;
        }
    }
    Ok(best.expect("enumeration visits at least one encoder"))
}

/// Monte Carlo over uniformly random encoders, each paired with its optimal
/// decoder.
#[derive(Debug, Clone)]
pub struct BinningEstimate {
    pub n: usize,
    pub m: usize,
    pub trials: u64,
    pub mean_p_c: f64,
    /// Normal-approximation 95% half-width of the mean.
    pub half_width: f64,
    /// -(1/n) ln mean_p_c; infinite when every trial failed.
    pub g_estimate: f64,
}

/// Estimates the random-binning average of P_c. Each trial reseeds from
/// (seed, trial index), so results are independent of trial batching.
pub fn g_n_random_binning(
    src: &SourceModel,
    n: usize,
    rate: f64,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<BinningEstimate> {
    ensure(trials >= 2, "need at least two trials")?;
    ensure(delta.is_finite() && delta >= 0.0, "delta must be finite and non-negative")?;
    let m = message_count(n, rate)?;
    let t = ProductTables::new(src, n)?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for trial in 0..trials {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ trial.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let encoder: Vec<u32> = (0..t.xn).map(|_| rng.random_range(0..m as u32)).collect();
        let decoder = best_decoder_with_tables(&t, m, &encoder);
        let scheme = CodingScheme { n, m, encoder, decoder };
        let pc = pc_with_tables(&t, &scheme, delta);
        sum += pc;
        sum_sq += pc * pc;
    }
    let mean = sum / trials as f64;
    let var = (sum_sq / trials as f64 - mean * mean).max(0.0) * trials as f64
        / (trials - 1) as f64;
    Ok(BinningEstimate {
        n,
        m,
        trials,
        mean_p_c: mean,
        half_width: 1.96 * (var / trials as f64).sqrt(),
        g_estimate: if mean > 0.0 { -mean.ln() / n as f64 } else { f64::INFINITY },
    })
}

/// One row of the exponent-vs-simulation comparison:
/// P_c against 5 exp(-n F) plus a tolerance.
#[derive(Debug, Clone, Copy)]
pub struct TheoremCheck {
    pub n: usize,
    pub p_c: f64,
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
}

/// Checks max-scheme P_c <= 5 exp(-n f_hat) + tol.
pub fn check_theorem_bound(best: &BestScheme, f_hat: f64, tol: f64) -> TheoremCheck {
    let bound = 5.0 * (-(best.scheme.n as f64) * f_hat).exp() + tol;
    TheoremCheck {
        n: best.scheme.n,
        p_c: best.p_c,
        bound,
        margin: bound - best.p_c,
        holds: best.p_c <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dsbs() -> SourceModel {
        SourceModel::binary_symmetric(0.25).unwrap()
    }

    #[test]
    fn product_tables_factorize() {
        let src = dsbs();
        let t = ProductTables::new(&src, 2).unwrap();
        assert_eq!((t.xn, t.yn, t.zn), (4, 4, 4));
        // x = (1, 0) has index 1, y = (0, 1) has index 2.
        assert_relative_eq!(t.pxy[1 * 4 + 2], src.pxy(1, 0) * src.pxy(0, 1), epsilon = 1e-15);
        assert_relative_eq!(t.dist[1 * 4 + 2], 2.0, epsilon = 1e-15);
        let total: f64 = t.pxy.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn message_counts_floor_the_exponential() {
        assert_eq!(message_count(1, 0.0).unwrap(), 1);
        assert_eq!(message_count(4, 0.2).unwrap(), 2); // floor(e^0.8)
        assert_eq!(message_count(2, 1.0).unwrap(), 7); // floor(e^2)
    }

    #[test]
    fn single_message_map_decoder_value() {
        // One message: the decoder sees only y, picks z = y, and succeeds
        // exactly when x = y.
        let src = dsbs();
        let best = g_n_exhaustive(&src, 1, 0.0, 0.5).unwrap();
        assert_eq!(best.scheme.m, 1);
        assert_relative_eq!(best.p_c, 0.75, epsilon = 1e-15);
        assert_relative_eq!(best.g_n, -(0.75f64).ln(), epsilon = 1e-15);
        assert_eq!(best.scheme.decoder, vec![0, 1]);
    }

    #[test]
    fn two_messages_reach_zero_distortion() {
        // At rate ln 2 the encoder can send x itself; strict threshold 0.05
        // then demands d = 0, which the identity scheme achieves always.
        let src = dsbs();
        let best = g_n_exhaustive(&src, 1, (2.0f64).ln(), 0.05).unwrap();
        assert_eq!(best.scheme.m, 2);
        assert_relative_eq!(best.p_c, 1.0, epsilon = 1e-15);
        assert_eq!(best.g_n, 0.0);
    }

    #[test]
    fn decoder_ties_break_to_smallest_index() {
        // A uniform independent pair makes every z equally good at m = 1.
        let src = SourceModel::new(
            2,
            2,
            2,
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let dec = optimal_decoder_for(&src, 1, 1, &[0, 0]).unwrap();
        assert_eq!(dec, vec![0, 0]);
    }

    #[test]
    fn subadditivity_at_tiny_blocklengths() {
        let src = dsbs();
        let (rate, delta) = (0.0, 0.25);
        let g: Vec<f64> = (1..=4)
            .map(|n| g_n_exhaustive(&src, n, rate, delta).unwrap().g_n)
            .collect();
        for n in 1..=2usize {
            for m in 1..=2usize {
                let mixed = (n as f64 * g[n - 1] + m as f64 * g[m - 1]) / (n + m) as f64;
                assert!(
                    g[n + m - 1] <= mixed + 1e-9,
                    "g_{} = {} > {}",
                    n + m,
                    g[n + m - 1],
                    mixed
                );
            }
        }
    }

    #[test]
    fn enumeration_guard_trips() {
        let src = dsbs();
        // m = floor(e^2) = 7 with 16 length-4 blocks: 7^16 >> 2^20.
        let err = g_n_exhaustive(&src, 4, 0.5, 0.1).unwrap_err();
        assert!(matches!(err, Error::Guard(_)));
    }

    #[test]
    fn random_binning_is_reproducible_and_bounded() {
        let src = dsbs();
        let a = g_n_random_binning(&src, 2, 0.3, 0.3, 40, 9).unwrap();
        let b = g_n_random_binning(&src, 2, 0.3, 0.3, 40, 9).unwrap();
        assert_eq!(a.mean_p_c, b.mean_p_c);
        assert!(a.mean_p_c >= 0.0 && a.mean_p_c <= 1.0);
        assert!(a.half_width >= 0.0);
        let best = g_n_exhaustive(&src, 2, 0.3, 0.3).unwrap();
        assert!(a.mean_p_c <= best.p_c + 1e-12);
    }

    #[test]
    fn theorem_bound_report_is_consistent() {
        let src = dsbs();
        let best = g_n_exhaustive(&src, 2, 0.0, 0.1).unwrap();
        let check = check_theorem_bound(&best, 0.05, 1e-9);
        assert_relative_eq!(check.bound, 5.0 * (-0.1f64).exp() + 1e-9, epsilon = 1e-15);
        assert_eq!(check.holds, check.p_c <= check.bound);
        assert!(check.holds);
    }
}
