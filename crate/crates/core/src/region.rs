//! Supporting hyperplanes of the rate-distortion trade-off with decoder side
//! information, and the relaxed single-letter program that tracks them.
//!
//! For a weight mu in [0, 1] the hyperplane value is
//!
//! ```text
//! r_mu = min over test channels w(u|x), |U| = |X|, of
//!        (1 - mu) I(X; U | Y) + mu E d(X, Z),
//! ```
//!
//! where Z is produced from (U, Y) by the best deterministic decoder. A
//! rate-distortion pair (R, D) is achievable iff (1-mu) R + mu D >= r_mu for
//! every mu. The relaxed program `r_tilde` additionally penalizes mismatch
//! between a free joint q over (U, X, Y, Z) and the source, and sandwiches
//! 4 * alpha * r_mu for small alpha with explicit constants.

use crate::error::{ensure, Result};
use crate::info::info_measures;
use crate::joint::JointQ;
use crate::optim::{minimize, OptimizerConfig, OptimizerReport};
use crate::source::SourceModel;

/// Slack below a hyperplane still counted as membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Tolerance used by `sandwich_check` on both sandwich inequalities.
pub const SANDWICH_TOL: f64 = 1e-3;

/// One optimized supporting hyperplane, with the channel and decoder that
/// attain it and the rate/distortion pair at which it touches the region.
#[derive(Debug, Clone)]
pub struct HyperplanePoint {
    pub mu: f64,
    pub value: f64,
    /// I(X; U | Y) at the attaining channel, in nats.
    pub rate: f64,
    /// E d(X, Z) at the attaining channel and decoder.
    pub dist: f64,
    /// Test channel w(u|x), laid out x-major: w[x * u_size + u].
    pub w: Vec<f64>,
    /// Decoder table z = decoder[u * y_size + y].
    pub decoder: Vec<usize>,
}

/// Hyperplane values over a mu grid. The values are a pointwise minimum over
/// one shared candidate pool, so the curve is exactly concave in mu.
#[derive(Debug, Clone)]
pub struct HyperplaneCurve {
    pub points: Vec<HyperplanePoint>,
}

/// Verdict of testing one (rate, distortion) pair against a curve.
#[derive(Debug, Clone, Copy)]
pub struct Membership {
    pub inside: bool,
    /// Weight with the smallest slack (1-mu) R + mu D - r_mu.
    pub worst_mu: f64,
    pub worst_slack: f64,
}

/// Value and attaining joint of the relaxed program.
#[derive(Debug, Clone)]
pub struct RTildeReport {
    pub value: f64,
    pub q: JointQ,
}

/// Constants of the sandwich bound relating `r_tilde` to `r_mu`.
#[derive(Debug, Clone, Copy)]
pub struct SandwichConstants {
    pub alpha0: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Result of one sandwich evaluation at (alpha, mu).
#[derive(Debug, Clone, Copy)]
pub struct SandwichReport {
    pub alpha: f64,
    pub mu: f64,
    /// r_mu minus the explicit slack term; may be far below zero.
    pub lower: f64,
    /// r_tilde / (4 alpha).
    pub mid: f64,
    /// r_mu.
    pub upper: f64,
    pub holds: bool,
}

fn check_mu(mu: f64) -> Result<()> {
    ensure(
        mu.is_finite() && (0.0..=1.0).contains(&mu),
        format!("mu must lie in [0, 1], got {mu}"),
    )
}

/// Best deterministic reproduction for each (u, y) under the weight tensor
/// `w_uxy` (indexed (u * x_size + x) * y_size + y, any non-negative scale).
///
/// Ties pick the smallest z; pairs with zero mass map to z = 0.
pub fn optimal_decoder_map(src: &SourceModel, u_size: usize, w_uxy: &[f64]) -> Result<Vec<usize>> {
    let (xs, ys, zs) = (src.x_size, src.y_size, src.z_size);
    ensure(
        w_uxy.len() == u_size * xs * ys,
        format!("weight tensor has {} entries, expected {}", w_uxy.len(), u_size * xs * ys),
    )?;
    let mut dec = vec![0usize; u_size * ys];
    for u in 0..u_size {
        for y in 0..ys {
            let mass: f64 = (0..xs).map(|x| w_uxy[(u * xs + x) * ys + y]).sum();
            if mass <= 0.0 {
                continue;
            }
            let mut best_z = 0usize;
            let mut best_cost = f64::INFINITY;
            for z in 0..zs {
                let cost: f64 =
                    (0..xs).map(|x| w_uxy[(u * xs + x) * ys + y] * src.dist(x, z)).sum();
                if cost < best_cost {
                    best_cost = cost;
                    best_z = z;
                }
            }
            dec[u * ys + y] = best_z;
        }
    }
    Ok(dec)
}

/// I(X; U | Y) of a weight tensor over (u, x, y) that sums to one.
fn cmi_x_u_given_y(u_size: usize, xs: usize, ys: usize, q: &[f64]) -> f64 {
    let mut q_y = vec![0.0; ys];
    let mut q_xy = vec![0.0; xs * ys];
    let mut q_uy = vec![0.0; u_size * ys];
    for u in 0..u_size {
        for x in 0..xs {
            for y in 0..ys {
                let v = q[(u * xs + x) * ys + y];
                q_y[y] += v;
                q_xy[x * ys + y] += v;
                q_uy[u * ys + y] += v;
            }
        }
    }
    let mut i = 0.0;
    for u in 0..u_size {
        for x in 0..xs {
            for y in 0..ys {
                let v = q[(u * xs + x) * ys + y];
                if v > 0.0 {
                    i += v * (v * q_y[y] / (q_xy[x * ys + y] * q_uy[u * ys + y])).ln();
                }
            }
        }
    }
    i
}

/// Exact (rate, distortion, decoder) for a test channel w(u|x).
fn eval_channel(src: &SourceModel, u_size: usize, w: &[f64]) -> (f64, f64, Vec<usize>) {
    let (xs, ys) = (src.x_size, src.y_size);
    let mut q = vec![0.0; u_size * xs * ys];
    for u in 0..u_size {
        for x in 0..xs {
            for y in 0..ys {
                q[(u * xs + x) * ys + y] = src.pxy(x, y) * w[x * u_size + u];
            }
        }
    }
    let dec = optimal_decoder_map(src, u_size, &q).expect("tensor shape is consistent");
    // The conditional mutual information is non-negative; clamp roundoff.
    let rate = cmi_x_u_given_y(u_size, xs, ys, &q).max(0.0);
    let mut dist = 0.0;
    for u in 0..u_size {
        for x in 0..xs {
            for y in 0..ys {
                dist += q[(u * xs + x) * ys + y] * src.dist(x, dec[u * ys + y]);
            }
        }
    }
    (rate, dist, dec)
}

fn canonical_channels(src: &SourceModel) -> Vec<Vec<f64>> {
    let (xs, us) = (src.x_size, src.x_size);
    let mut constant = vec![0.0; xs * us];
    let mut identity = vec![0.0; xs * us];
    for x in 0..xs {
        constant[x * us] = 1.0;
        identity[x * us + x] = 1.0;
    }
    vec![constant, identity]
}

fn best_candidate(
    src: &SourceModel,
    mu: f64,
    channels: impl IntoIterator<Item = Vec<f64>>,
) -> HyperplanePoint {
    let us = src.x_size;
    let mut best: Option<HyperplanePoint> = None;
    for w in channels {
        let (rate, dist, decoder) = eval_channel(src, us, &w);
        let value = (1.0 - mu) * rate + mu * dist;
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(HyperplanePoint { mu, value, rate, dist, w, decoder });
        }
    }
    best.expect("at least one candidate channel")
}

/// Minimizes (1-mu) I(X;U|Y) + mu E d over test channels with |U| = |X|.
///
/// The constant and identity channels are always evaluated exactly alongside
/// the search, so r_mu(0) and r_mu(1) are exactly zero.
pub fn r_mu(
    src: &SourceModel,
    mu: f64,
    cfg: &OptimizerConfig,
    warm: &[Vec<f64>],
) -> Result<HyperplanePoint> {
    check_mu(mu)?;
    let us = src.x_size;
    let xs = src.x_size;
    let objective = |w: &[f64]| {
        let (rate, dist, _) = eval_channel(src, us, w);
        (1.0 - mu) * rate + mu * dist
    };
    let blocks = vec![us; xs];
    let mut starts: Vec<Vec<f64>> = canonical_channels(src);
    starts.extend(warm.iter().cloned());
    let report = minimize(objective, &blocks, cfg, &starts)?;
    let mut channels = canonical_channels(src);
    channels.extend(warm.iter().cloned());
    channels.push(report.argmin);
    Ok(best_candidate(src, mu, channels))
}

/// Evenly spaced default weight grid over [0, 1].
pub fn mu_grid(points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    (0..points).map(|k| k as f64 / (points - 1) as f64).collect()
}

/// Optimizes the hyperplane family over a mu grid with warm starts chained
/// along the grid, then re-minimizes every mu over the pooled candidate set.
pub fn compute_curve(
    src: &SourceModel,
    mus: &[f64],
    cfg: &OptimizerConfig,
) -> Result<HyperplaneCurve> {
    ensure(!mus.is_empty(), "mu grid must be non-empty")?;
    for &m in mus {
        check_mu(m)?;
    }
    let mut pool: Vec<Vec<f64>> = canonical_channels(src);
    let mut prev: Option<Vec<f64>> = None;
    for &m in mus {
        let warm: Vec<Vec<f64>> = prev.iter().cloned().collect();
        let p = r_mu(src, m, cfg, &warm)?;
        prev = Some(p.w.clone());
        pool.push(p.w);
    }
    let points = mus
        .iter()
        .map(|&m| best_candidate(src, m, pool.iter().cloned()))
        .collect();
    Ok(HyperplaneCurve { points })
}

/// Tests whether (rate, dist) satisfies every hyperplane constraint of the
/// curve, up to `MEMBERSHIP_TOL`.
pub fn region_membership(rate: f64, dist: f64, curve: &HyperplaneCurve) -> Result<Membership> {
    ensure(!curve.points.is_empty(), "curve has no hyperplanes")?;
    ensure(
        rate.is_finite() && dist.is_finite() && rate >= 0.0 && dist >= 0.0,
        "rate and distortion must be finite and non-negative",
    )?;
    let mut worst_mu = curve.points[0].mu;
    let mut worst_slack = f64::INFINITY;
    for p in &curve.points {
        let slack = (1.0 - p.mu) * rate + p.mu * dist - p.value;
        if slack < worst_slack {
            worst_slack = slack;
            worst_mu = p.mu;
        }
    }
    Ok(Membership { inside: worst_slack >= -MEMBERSHIP_TOL, worst_mu, worst_slack })
}

fn check_alpha_interval(alpha: f64) -> Result<()> {
    ensure(
        alpha.is_finite() && alpha > 0.0 && alpha <= 1.0,
        format!("alpha must lie in (0, 1], got {alpha}"),
    )
}

/// Builds a full joint over (U, X, Y, Z) from a test channel and decoder,
/// embedded into auxiliary size `u_size` by leaving extra u slices empty.
pub fn matched_joint(
    src: &SourceModel,
    u_size: usize,
    w: &[f64],
    decoder: &[usize],
) -> Result<JointQ> {
    let (xs, ys, zs) = (src.x_size, src.y_size, src.z_size);
    let w_us = w.len() / xs;
    ensure(w.len() == w_us * xs && w_us >= 1, "channel tensor shape is inconsistent")?;
    ensure(w_us <= u_size, "channel does not fit into the requested auxiliary size")?;
    ensure(decoder.len() == w_us * ys, "decoder table shape is inconsistent")?;
    let mut q = vec![0.0; u_size * xs * ys * zs];
    let probe = JointQ::new(u_size, xs, ys, zs, vec![1.0 / (u_size * xs * ys * zs) as f64; u_size * xs * ys * zs])?;
    for u in 0..w_us {
        for x in 0..xs {
            for y in 0..ys {
                let v = src.pxy(x, y) * w[x * w_us + u];
                if v > 0.0 {
                    q[probe.idx(u, x, y, decoder[u * ys + y])] += v;
                }
            }
        }
    }
    JointQ::new(u_size, xs, ys, zs, q)
}

/// Support-respecting coordinate layout for optimizing over joints q on
/// (U, X, Y, Z): one simplex over all cells whose (x, y) pair carries source
/// mass. Shared by `r_tilde` and the exponent search.
#[derive(Debug, Clone)]
pub struct SupportMap {
    pub u_size: usize,
    pub x_size: usize,
    pub y_size: usize,
    pub z_size: usize,
    /// Supported (x, y) pairs in row-major order.
    pub cells: Vec<(usize, usize)>,
}

impl SupportMap {
    pub fn new(src: &SourceModel, u_size: usize) -> Self {
        let mut cells = Vec::new();
        for x in 0..src.x_size {
            for y in 0..src.y_size {
                if src.pxy(x, y) > 0.0 {
                    cells.push((x, y));
                }
            }
        }
        SupportMap {
            u_size,
            x_size: src.x_size,
            y_size: src.y_size,
            z_size: src.z_size,
            cells,
        }
    }

    pub fn dim(&self) -> usize {
        self.u_size * self.cells.len() * self.z_size
    }

    /// Expands optimizer coordinates into a full joint tensor.
    pub fn expand(&self, coords: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.u_size * self.x_size * self.y_size * self.z_size];
        let mut k = 0;
        for u in 0..self.u_size {
            for &(x, y) in &self.cells {
                for z in 0..self.z_size {
                    q[((u * self.x_size + x) * self.y_size + y) * self.z_size + z] = coords[k];
                    k += 1;
                }
            }
        }
        q
    }

    /// Compresses a full joint tensor into optimizer coordinates, dropping
    /// (and checking) the unsupported cells.
    pub fn compress(&self, q: &[f64]) -> Vec<f64> {
        let mut coords = Vec::with_capacity(self.dim());
        for u in 0..self.u_size {
            for &(x, y) in &self.cells {
                for z in 0..self.z_size {
                    coords.push(q[((u * self.x_size + x) * self.y_size + y) * self.z_size + z]);
                }
            }
        }
        coords
    }
}

/// Minimizes the relaxed objective
///
/// ```text
/// (1-alpha) [ D(q_X || p_X) + D(q_{Y|XU} || p_{Y|X} | q_XU) + I_q(X; Z | U, Y) ]
///   + 4 alpha [ (1-mu) I_q(X; U | Y) + mu E_q d ]
/// ```
///
/// over support-respecting joints with |U| = |X||Y||Z|. A matched joint built
/// from the `r_mu` channel is always evaluated as a candidate, which pins the
/// upper half of the sandwich.
pub fn r_tilde(
    src: &SourceModel,
    alpha: f64,
    mu: f64,
    cfg: &OptimizerConfig,
    warm: &[JointQ],
) -> Result<RTildeReport> {
    check_alpha_interval(alpha)?;
    check_mu(mu)?;
    let us = src.x_size * src.y_size * src.z_size;
    let map = SupportMap::new(src, us);
    let abar = 1.0 - alpha;
    let objective = |coords: &[f64]| {
        let q = match JointQ::new(us, src.x_size, src.y_size, src.z_size, map.expand(coords)) {
            Ok(q) => q,
            Err(_) => return f64::INFINITY,
        };
        let b = info_measures(&q, src);
        abar * (b.d_qx_px + b.d_qyxu_pyx + b.i_x_z_given_uy)
            + 4.0 * alpha * ((1.0 - mu) * b.i_x_u_given_y + mu * b.exp_dist)
    };

    let anchor = r_mu(src, mu, cfg, &[])?;
    let witness = matched_joint(src, us, &anchor.w, &anchor.decoder)?;
    let mut starts: Vec<Vec<f64>> = vec![map.compress(witness.raw())];
    for q in warm {
        starts.push(map.compress(q.raw()));
    }
    let report: OptimizerReport = minimize(objective, &[map.dim()], cfg, &starts)?;
    let q = JointQ::new_supported(us, src.x_size, src.y_size, src.z_size, map.expand(&report.argmin), src)?;
    Ok(RTildeReport { value: report.best_value, q })
}

/// Explicit constants of the sandwich bound for a given source.
pub fn sandwich_constants(src: &SourceModel) -> SandwichConstants {
    let l = (src.x_size as f64).ln() + src.d_max();
    let (xs, ys, zs) = (src.x_size as f64, src.y_size as f64, src.z_size as f64);
    SandwichConstants {
        alpha0: 1.0 / (32.0 * l + 1.0),
        c1: 4.0 * (2.0 * l).sqrt(),
        c2: (src.d_max() / 2.0).exp() * zs * xs * xs * ys * ys * ys / (8.0 * l),
    }
}

/// Evaluates both halves of the sandwich at (alpha, mu). Errors when alpha
/// exceeds the threshold alpha0, where the bound is not asserted.
pub fn sandwich_check(
    src: &SourceModel,
    alpha: f64,
    mu: f64,
    cfg: &OptimizerConfig,
) -> Result<SandwichReport> {
    check_mu(mu)?;
    let consts = sandwich_constants(src);
    ensure(
        alpha > 0.0 && alpha <= consts.alpha0,
        format!("alpha must lie in (0, {:.6}] for the sandwich, got {alpha}", consts.alpha0),
    )?;
    let upper = r_mu(src, mu, cfg, &[])?.value;
    let mid = r_tilde(src, alpha, mu, cfg, &[])?.value / (4.0 * alpha);
    let abar = 1.0 - alpha;
    let slack = consts.c1 * (alpha / abar).sqrt() * (consts.c2 * abar / alpha).ln();
    let lower = upper - slack;
    let holds = lower - SANDWICH_TOL <= mid && mid <= upper + SANDWICH_TOL;
    Ok(SandwichReport { alpha, mu, lower, mid, upper, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dsbs() -> SourceModel {
        SourceModel::binary_symmetric(0.25).unwrap()
    }

    fn quick_cfg() -> OptimizerConfig {
        OptimizerConfig { starts: 6, max_iters: 400, seed: 7, ..Default::default() }
    }

    #[test]
    fn decoder_is_map_under_constant_u() {
        let src = dsbs();
        let mut q = vec![0.0; 4];
        for x in 0..2 {
            for y in 0..2 {
                q[x * 2 + y] = src.pxy(x, y);
            }
        }
        let dec = optimal_decoder_map(&src, 1, &q).unwrap();
        assert_eq!(dec, vec![0, 1]);
    }

    #[test]
    fn decoder_breaks_ties_toward_smaller_z() {
        let src = SourceModel::new(2, 1, 2, vec![0.5, 0.5], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let dec = optimal_decoder_map(&src, 1, &[0.5, 0.5]).unwrap();
        assert_eq!(dec, vec![0]);
    }

    #[test]
    fn decoder_sends_zero_mass_pairs_to_zero() {
        let src = dsbs();
        let dec = optimal_decoder_map(&src, 2, &vec![0.0; 8]).unwrap();
        assert_eq!(dec, vec![0, 0, 0, 0]);
    }

    #[test]
    fn hyperplane_vanishes_at_both_ends() {
        let src = dsbs();
        let p0 = r_mu(&src, 0.0, &quick_cfg(), &[]).unwrap();
        let p1 = r_mu(&src, 1.0, &quick_cfg(), &[]).unwrap();
        assert_eq!(p0.value, 0.0);
        assert_eq!(p1.value, 0.0);
        assert_eq!(p1.dist, 0.0);
    }

    #[test]
    fn curve_is_concave_on_the_grid() {
        let src = dsbs();
        let mus = mu_grid(41);
        let c = compute_curve(&src, &mus, &quick_cfg()).unwrap();
        let v: Vec<f64> = c.points.iter().map(|p| p.value).collect();
        for w in v.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-6, "second difference {:?}", w);
        }
        assert!(v.iter().cloned().fold(0.0, f64::max) > 0.05);
    }

    #[test]
    fn membership_separates_inside_from_outside() {
        let src = dsbs();
        let c = compute_curve(&src, &mu_grid(21), &quick_cfg()).unwrap();
        let h = -(0.25f64.ln() * 0.25 + 0.75f64.ln() * 0.75);
        assert!(region_membership(h, 0.0, &c).unwrap().inside);
        assert!(region_membership(2f64.ln(), 1.0, &c).unwrap().inside);
        let m = region_membership(0.0, 0.0, &c).unwrap();
        assert!(!m.inside);
        assert!(m.worst_slack < -0.05);
    }

    #[test]
    fn sandwich_constants_match_hand_values() {
        let src = dsbs();
        let c = sandwich_constants(&src);
        assert_relative_eq!(c.alpha0, 0.0181222750, max_relative = 1e-8);
        assert_relative_eq!(c.c1, 7.3607547017, max_relative = 1e-8);
        assert_relative_eq!(c.c2, 7.7900907358, max_relative = 1e-8);
    }

    #[test]
    fn relaxed_value_is_nonnegative_and_sandwiched() {
        let src = dsbs();
        let cfg = quick_cfg();
        let rep = r_tilde(&src, 0.01, 0.5, &cfg, &[]).unwrap();
        assert!(rep.value >= 0.0);
        let s = sandwich_check(&src, 0.01, 0.5, &cfg).unwrap();
        assert!(s.holds, "sandwich {s:?}");
        assert!(s.mid <= s.upper + SANDWICH_TOL);
    }

    #[test]
    fn sandwich_rejects_large_alpha() {
        let src = dsbs();
        assert!(sandwich_check(&src, 0.5, 0.5, &quick_cfg()).is_err());
    }

    #[test]
    fn support_map_roundtrips() {
        let src = dsbs();
        let map = SupportMap::new(&src, 8);
        assert_eq!(map.dim(), 64);
        let q: Vec<f64> = (0..64).map(|k| (k + 1) as f64 / 2080.0).collect();
        let full = map.expand(&q);
        assert_eq!(map.compress(&full), q);
    }
}
