//! Tilted information functional and the correct-decoding exponent.
//!
//! For parameters alpha in (0, 1], mu in [0, 1] write abar = 1 - alpha,
//! mubar = 1 - mu. Each cell (u, x, y, z) of a joint q gets the score
//!
//! ```text
//! omega = abar [ ln(q_X/p_X) + ln(q_{Y|XU}/p_{Y|X}) + ln(q_{X|UYZ}/q_{X|UY}) ]
//!       + 4 alpha [ mubar ln(q_{X|UY}/p_{X|Y}) + mu d(x, z) ],
//! ```
//!
//! and the tilted functional is Omega(lambda) = -ln E_q exp(-lambda omega).
//! Minimizing Omega over joints and combining with the rate-distortion
//! target gives the exponent
//!
//! ```text
//! F(R, D) = sup over (alpha, mu, lambda) of
//!           [ min_q Omega - 4 alpha lambda (mubar R + mu D) ]
//!           / [ 1 + 4 (1 - alpha mu) lambda ],
//! ```
//!
//! clamped at zero. The variance proxy rho bounds the curvature of Omega in
//! lambda and feeds both the positivity bound and the deviation radius
//! kappa_n of the strong converse.

use std::cell::RefCell;

use crate::error::{ensure, Error, Result};
use crate::joint::JointQ;
use crate::optim::{minimize, OptimizerConfig};
use crate::region::{matched_joint, optimal_decoder_map, r_mu, SupportMap};
use crate::source::SourceModel;

/// Tilt parameters (alpha, mu, lambda) with alpha in (0, 1], mu in [0, 1],
/// lambda >= 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltParams {
    pub alpha: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl TiltParams {
    pub fn new(alpha: f64, mu: f64, lambda: f64) -> Result<Self> {
        ensure(
            alpha.is_finite() && alpha > 0.0 && alpha <= 1.0,
            format!("alpha must lie in (0, 1], got {alpha}"),
        )?;
        ensure(
            mu.is_finite() && (0.0..=1.0).contains(&mu),
            format!("mu must lie in [0, 1], got {mu}"),
        )?;
        ensure(
            lambda.is_finite() && lambda >= 0.0,
            format!("lambda must be finite and non-negative, got {lambda}"),
        )?;
        Ok(TiltParams { alpha, mu, lambda })
    }

    /// Builds the parameters from the multi-letter tilt theta in
    /// (0, 1/abar), using lambda = theta / (1 - abar theta).
    pub fn from_theta(alpha: f64, mu: f64, theta: f64) -> Result<Self> {
        let abar = 1.0 - alpha;
        ensure(
            theta.is_finite() && theta > 0.0 && abar * theta < 1.0,
            format!("theta must lie in (0, 1/(1-alpha)), got {theta}"),
        )?;
        TiltParams::new(alpha, mu, theta / (1.0 - abar * theta))
    }

    /// Inverse map lambda -> theta = lambda / (1 + abar lambda).
    pub fn theta(&self) -> f64 {
        self.lambda / (1.0 + (1.0 - self.alpha) * self.lambda)
    }
}

/// Value and first two lambda-derivatives of Omega at one (q, params).
#[derive(Debug, Clone, Copy)]
pub struct OmegaEval {
    pub value: f64,
    /// dOmega/dlambda = E over the tilted law of omega.
    pub d1: f64,
    /// d2Omega/dlambda2 = -Var over the tilted law of omega; never positive.
    pub d2: f64,
}

#[inline]
fn ln_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).ln()
    } else {
        f64::INFINITY
    }
}

/// Per-cell scores omega(u, x, y, z), indexed like the joint tensor.
///
/// Cells with zero q-mass hold 0.0 and are never weighted downstream. Cells
/// whose reference probability vanishes hold +inf rather than erroring, so
/// an absolute-continuity violation surfaces as an infinite divergence.
pub fn omega_table(q: &JointQ, src: &SourceModel, params: &TiltParams) -> Result<Vec<f64>> {
    ensure(
        q.x_size == src.x_size && q.y_size == src.y_size && q.z_size == src.z_size,
        "joint and source alphabet sizes differ",
    )?;
    let (us, xs, ys, zs) = (q.u_size, q.x_size, q.y_size, q.z_size);
    let abar = 1.0 - params.alpha;
    let b4 = 4.0 * params.alpha * (1.0 - params.mu);
    let d4 = 4.0 * params.alpha * params.mu;
    let m = q.marginals();
    let mut out = vec![0.0; us * xs * ys * zs];
    for u in 0..us {
        for x in 0..xs {
            for y in 0..ys {
                for z in 0..zs {
                    let w = q.q(u, x, y, z);
                    if w == 0.0 {
                        continue;
                    }
                    let qx = m.q_x[x];
                    let qyxu = m.q_xuy[(x * us + u) * ys + y] / m.q_xu[x * us + u];
                    let qxuyz = w / m.q_uyz[(u * ys + y) * zs + z];
                    let qxuy = m.q_xuy[(x * us + u) * ys + y] / m.q_uy[u * ys + y];
                    let pxgy = if src.py(y) > 0.0 { src.p_x_given_y(x, y) } else { 0.0 };
                    let v = abar
                        * (ln_ratio(qx, src.px(x))
                            + ln_ratio(qyxu, if src.px(x) > 0.0 { src.p_y_given_x(y, x) } else { 0.0 })
                            + (qxuyz / qxuy).ln())
                        + b4 * ln_ratio(qxuy, pxgy)
                        + d4 * src.dist(x, z);
                    out[q.idx(u, x, y, z)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Omega and its first two lambda-derivatives at a fixed joint, via a
/// max-shifted log-sum-exp over the cell scores.
pub fn omega_of_q(q: &JointQ, src: &SourceModel, params: &TiltParams) -> Result<OmegaEval> {
    let om = omega_table(q, src, params)?;
    let raw = q.raw();
    let lambda = params.lambda;

    let mut tmax = f64::NEG_INFINITY;
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
    let mut infinite_score_mass = false;
    for (i, &w) in raw.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let o = om[i];
        if o.is_infinite() {
            if lambda == 0.0 {
                // exp(-0 * omega) is 1 by the lambda -> 0 convention.
                infinite_score_mass = true;
                let t = w.ln();
                terms.push((t, o));
                tmax = tmax.max(t);
            }
            continue;
        }
        let t = w.ln() - lambda * o;
        terms.push((t, o));
        tmax = tmax.max(t);
    }
    if terms.is_empty() {
        return Ok(OmegaEval { value: f64::INFINITY, d1: f64::NAN, d2: f64::NAN });
    }
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &(t, o) in &terms {
        let e = (t - tmax).exp();
        s0 += e;
        if o.is_finite() {
            s1 += e * o;
            s2 += e * o * o;
        }
    }
    let value = -(tmax + s0.ln());
    if infinite_score_mass {
        return Ok(OmegaEval { value, d1: f64::INFINITY, d2: f64::NEG_INFINITY });
    }
    let d1 = s1 / s0;
    let d2 = -(s2 / s0 - d1 * d1).max(0.0);
    Ok(OmegaEval { value, d1, d2 })
}

/// The tilted law q^(lambda) proportional to q exp(-lambda omega).
pub fn tilted_distribution(q: &JointQ, src: &SourceModel, params: &TiltParams) -> Result<JointQ> {
    if params.lambda == 0.0 {
        return JointQ::new(q.u_size, q.x_size, q.y_size, q.z_size, q.raw().to_vec());
    }
    let om = omega_table(q, src, params)?;
    let raw = q.raw();
    let mut tmax = f64::NEG_INFINITY;
    for (i, &w) in raw.iter().enumerate() {
        if w > 0.0 && (params.lambda == 0.0 || om[i].is_finite()) {
            tmax = tmax.max(w.ln() - params.lambda * om[i].min(f64::MAX));
        }
    }
    ensure(tmax.is_finite(), "tilting annihilated every cell")
        .map_err(|e| Error::numerics(e.to_string()))?;
    let mut t = vec![0.0; raw.len()];
    let mut total = 0.0;
    for (i, &w) in raw.iter().enumerate() {
        if w > 0.0 && (params.lambda == 0.0 || om[i].is_finite()) {
            let e = (w.ln() - params.lambda * om[i].min(f64::MAX) - tmax).exp();
            t[i] = e;
            total += e;
        }
    }
    for v in t.iter_mut() {
        *v /= total;
    }
    JointQ::new(q.u_size, q.x_size, q.y_size, q.z_size, t)
}

/// Preindexed fast evaluator for Omega over support-compressed coordinates.
///
/// Shares its layout with [`SupportMap`]; the source-dependent part of each
/// cell score is folded into one constant per coordinate, so an evaluation
/// costs one marginal pass and one log pass.
pub(crate) struct OmegaWorkspace {
    dim: usize,
    abar: f64,
    b4: f64,
    cell_const: Vec<f64>,
    ix: Vec<u32>,
    ixu: Vec<u32>,
    ixuy: Vec<u32>,
    iuy: Vec<u32>,
    iuyz: Vec<u32>,
    buf_x: Vec<f64>,
    buf_xu: Vec<f64>,
    buf_xuy: Vec<f64>,
    buf_uy: Vec<f64>,
    buf_uyz: Vec<f64>,
    om: Vec<f64>,
}

impl OmegaWorkspace {
    pub fn new(src: &SourceModel, map: &SupportMap, alpha: f64, mu: f64) -> Self {
        let (us, xs, ys, zs) = (map.u_size, map.x_size, map.y_size, map.z_size);
        let dim = map.dim();
        let abar = 1.0 - alpha;
        let b4 = 4.0 * alpha * (1.0 - mu);
        let d4 = 4.0 * alpha * mu;
        let mut cell_const = Vec::with_capacity(dim);
        let (mut ix, mut ixu, mut ixuy, mut iuy, mut iuyz) =
            (Vec::with_capacity(dim), Vec::with_capacity(dim), Vec::with_capacity(dim), Vec::with_capacity(dim), Vec::with_capacity(dim));
        for u in 0..us {
            for &(x, y) in &map.cells {
                for z in 0..zs {
                    cell_const.push(
                        -abar * (src.px(x).ln() + src.p_y_given_x(y, x).ln())
                            - b4 * src.p_x_given_y(x, y).ln()
                            + d4 * src.dist(x, z),
                    );
                    ix.push(x as u32);
                    ixu.push((x * us + u) as u32);
                    ixuy.push(((x * us + u) * ys + y) as u32);
                    iuy.push((u * ys + y) as u32);
                    iuyz.push(((u * ys + y) * zs + z) as u32);
                }
            }
        }
        OmegaWorkspace {
            dim,
            abar,
            b4,
            cell_const,
            ix,
            ixu,
            ixuy,
            iuy,
            iuyz,
            buf_x: vec![0.0; xs],
            buf_xu: vec![0.0; xs * us],
            buf_xuy: vec![0.0; xs * us * ys],
            buf_uy: vec![0.0; us * ys],
            buf_uyz: vec![0.0; us * ys * zs],
            om: vec![0.0; dim],
        }
    }

    fn scores(&mut self, coords: &[f64]) {
        for b in [&mut self.buf_x, &mut self.buf_xu, &mut self.buf_xuy, &mut self.buf_uy, &mut self.buf_uyz] {
            for v in b.iter_mut() {
                *v = 0.0;
            }
        }
        for k in 0..self.dim {
            let w = coords[k];
            self.buf_x[self.ix[k] as usize] += w;
            self.buf_xu[self.ixu[k] as usize] += w;
            self.buf_xuy[self.ixuy[k] as usize] += w;
            self.buf_uy[self.iuy[k] as usize] += w;
            self.buf_uyz[self.iuyz[k] as usize] += w;
        }
        for b in [&mut self.buf_x, &mut self.buf_xu, &mut self.buf_xuy, &mut self.buf_uy, &mut self.buf_uyz] {
            for v in b.iter_mut() {
                *v = if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
            }
        }
        for k in 0..self.dim {
            let w = coords[k];
            if w <= 0.0 {
                self.om[k] = 0.0;
                continue;
            }
            let lnw = w.ln();
            self.om[k] = self.abar
                * (self.buf_x[self.ix[k] as usize] - self.buf_xu[self.ixu[k] as usize] + lnw
                    - self.buf_uyz[self.iuyz[k] as usize]
                    + self.buf_uy[self.iuy[k] as usize])
                + self.b4
                    * (self.buf_xuy[self.ixuy[k] as usize] - self.buf_uy[self.iuy[k] as usize])
                + self.cell_const[k];
        }
    }

    /// (value, d1, d2) of Omega at the given coordinates and lambda.
    pub fn eval(&mut self, coords: &[f64], lambda: f64) -> (f64, f64, f64) {
        self.scores(coords);
        let mut tmax = f64::NEG_INFINITY;
        for k in 0..self.dim {
            if coords[k] > 0.0 {
                let t = coords[k].ln() - lambda * self.om[k];
                if t > tmax {
                    tmax = t;
                }
            }
        }
        if tmax == f64::NEG_INFINITY {
            return (f64::INFINITY, f64::NAN, f64::NAN);
        }
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for k in 0..self.dim {
            if coords[k] > 0.0 {
                let o = self.om[k];
                let e = (coords[k].ln() - lambda * o - tmax).exp();
                s0 += e;
                s1 += e * o;
                s2 += e * o * o;
            }
        }
        let d1 = s1 / s0;
        (-(tmax + s0.ln()), d1, -(s2 / s0 - d1 * d1).max(0.0))
    }

    /// Var_q[omega] at lambda = 0.
    pub fn var(&mut self, coords: &[f64]) -> f64 {
        self.scores(coords);
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..self.dim {
            let w = coords[k];
            if w > 0.0 {
                m1 += w * self.om[k];
                m2 += w * self.om[k] * self.om[k];
            }
        }
        (m2 - m1 * m1).max(0.0)
    }
}

/// Minimum of Omega over support-respecting joints with |U| = |X||Y||Z|.
#[derive(Debug, Clone)]
pub struct OmegaMinReport {
    pub value: f64,
    pub q: JointQ,
    /// Support-compressed argmin, reusable as a warm start.
    pub coords: Vec<f64>,
}

/// Cheap feasible joints evaluated alongside every Omega minimization:
/// the matched constant-auxiliary joint with its best decoder, and the
/// matched identity-auxiliary joint (zero distortion for faithful alphabets).
fn canonical_joints(src: &SourceModel, u_size: usize) -> Result<Vec<JointQ>> {
    let xs = src.x_size;
    let mut joints = Vec::new();
    let mut constant = vec![0.0; xs];
    let mut identity = vec![0.0; xs * xs];
    for x in 0..xs {
        constant[x] = 1.0;
        identity[x * xs + x] = 1.0;
    }
    for (us, w) in [(1usize, constant), (xs, identity)] {
        let mut q_uxy = vec![0.0; us * xs * src.y_size];
        for u in 0..us {
            for x in 0..xs {
                for y in 0..src.y_size {
                    q_uxy[(u * xs + x) * src.y_size + y] = src.pxy(x, y) * w[x * us + u];
                }
            }
        }
        let dec = optimal_decoder_map(src, us, &q_uxy)?;
        joints.push(matched_joint(src, u_size, &w, &dec)?);
    }
    Ok(joints)
}

/// Minimizes Omega over joints, always evaluating the canonical matched
/// joints and any caller-provided warm starts as candidates.
pub fn omega_min(
    src: &SourceModel,
    params: &TiltParams,
    cfg: &OptimizerConfig,
    warm: &[JointQ],
) -> Result<OmegaMinReport> {
    let us = src.x_size * src.y_size * src.z_size;
    let map = SupportMap::new(src, us);
    let ws = RefCell::new(OmegaWorkspace::new(src, &map, params.alpha, params.mu));
    let lambda = params.lambda;
    let objective = |coords: &[f64]| ws.borrow_mut().eval(coords, lambda).0;

    let mut starts: Vec<Vec<f64>> = Vec::new();
    for j in canonical_joints(src, us)? {
        starts.push(map.compress(j.raw()));
    }
    for j in warm {
        ensure(
            j.u_size <= us && j.x_size == src.x_size && j.y_size == src.y_size && j.z_size == src.z_size,
            "warm joint does not fit the optimization class",
        )?;
        if j.u_size == us {
            starts.push(map.compress(j.raw()));
        } else {
            let mut full = vec![0.0; us * src.x_size * src.y_size * src.z_size];
            full[..j.raw().len()].copy_from_slice(j.raw());
            starts.push(map.compress(&full));
        }
    }
    let report = minimize(objective, &[map.dim()], cfg, &starts)?;
    let q = JointQ::new_supported(
        us,
        src.x_size,
        src.y_size,
        src.z_size,
        map.expand(&report.argmin),
        src,
    )?;
    Ok(OmegaMinReport { value: report.best_value, q, coords: report.argmin })
}

/// The normalized exponent integrand at one parameter point:
/// [Omega - 4 alpha lambda (mubar R + mu D)] / [1 + 4 (1 - alpha mu) lambda].
///
/// The denominator equals 1 + abar lambda + lambda (3 + alpha - 4 alpha mu).
pub fn f_lambda(params: &TiltParams, rate: f64, delta: f64, omega_value: f64) -> f64 {
    let TiltParams { alpha, mu, lambda } = *params;
    let num = omega_value - 4.0 * alpha * lambda * ((1.0 - mu) * rate + mu * delta);
    num / (1.0 + 4.0 * (1.0 - alpha * mu) * lambda)
}

/// Parameter grid for the exponent search.
#[derive(Debug, Clone)]
pub struct ExponentGrid {
    pub alphas: Vec<f64>,
    pub mus: Vec<f64>,
    pub lambdas: Vec<f64>,
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k + 1 == n {
                hi
            } else {
                (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

impl ExponentGrid {
    /// Default search grid: 20 alphas (log-spaced below 0.1, linear above),
    /// 21 mus in (0, 1], 25 log-spaced lambdas in [1e-3, 1e2].
    pub fn standard() -> Self {
        let mut alphas = geometric(1e-3, 0.05, 10);
        alphas.extend((0..10).map(|k| 0.1 + 0.9 * k as f64 / 9.0));
        let mus = (1..=21).map(|k| k as f64 / 21.0).collect();
        ExponentGrid { alphas, mus, lambdas: geometric(1e-3, 1e2, 25) }
    }

    /// Budget-reduced grid used by the property suite; same shape, fewer
    /// points per axis.
    pub fn reduced() -> Self {
        let mut alphas = geometric(1e-3, 0.05, 4);
        alphas.extend((0..4).map(|k| 0.1 + 0.9 * k as f64 / 3.0));
        let mus = (1..=9).map(|k| k as f64 / 9.0).collect();
        ExponentGrid { alphas, mus, lambdas: geometric(1e-3, 1e2, 13) }
    }

    pub fn len(&self) -> usize {
        self.alphas.len() * self.mus.len() * self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Omega minima over a full parameter grid, with the argmin coordinates kept
/// for warm-started refinement. Built once per source and reused for every
/// (rate, distortion) query.
pub struct OmegaTable {
    pub grid: ExponentGrid,
    /// values[(ia * mus + imu) * lambdas + il].
    pub values: Vec<f64>,
    argmins: Vec<Vec<f64>>,
    witnesses: Vec<Vec<f64>>,
}

impl OmegaTable {
    #[inline]
    fn at(&self, ia: usize, imu: usize, il: usize) -> usize {
        (ia * self.grid.mus.len() + imu) * self.grid.lambdas.len() + il
    }
}

pub(crate) fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 31)
}

/// Feasible matched joints derived from the hyperplane family; their Omega
/// values upper-bound every grid minimum at achievable rate-distortion
/// targets, which pins the exponent to zero inside the region.
fn region_witnesses(src: &SourceModel, u_size: usize, cfg: &OptimizerConfig) -> Result<Vec<JointQ>> {
    let mut cfg_w = *cfg;
    cfg_w.starts = 6;
    cfg_w.max_iters = 400;
    cfg_w.seed = mix_seed(cfg.seed, 0x77);
    let mut joints = canonical_joints(src, u_size)?;
    for k in 0..=4 {
        let p = r_mu(src, k as f64 / 4.0, &cfg_w, &[])?;
        joints.push(matched_joint(src, u_size, &p.w, &p.decoder)?);
    }
    Ok(joints)
}

/// Minimizes Omega at every grid point, chaining warm starts along lambda
/// and mu and seeding every point with the shared witness set.
pub fn build_omega_table(
    src: &SourceModel,
    grid: &ExponentGrid,
    cfg: &OptimizerConfig,
) -> Result<OmegaTable> {
    ensure(!grid.is_empty(), "exponent grid must be non-empty")?;
    for &a in &grid.alphas {
        ensure(a > 0.0 && a <= 1.0, format!("grid alpha {a} outside (0, 1]"))?;
    }
    for &m in &grid.mus {
        ensure(m > 0.0 && m <= 1.0, format!("grid mu {m} outside (0, 1]"))?;
    }
    for &l in &grid.lambdas {
        ensure(l > 0.0 && l.is_finite(), format!("grid lambda {l} must be positive"))?;
    }

    let us = src.x_size * src.y_size * src.z_size;
    let map = SupportMap::new(src, us);
    let witnesses: Vec<Vec<f64>> = region_witnesses(src, us, cfg)?
        .iter()
        .map(|j| map.compress(j.raw()))
        .collect();

    let (na, nm, nl) = (grid.alphas.len(), grid.mus.len(), grid.lambdas.len());
    let mut values = vec![0.0; na * nm * nl];
    let mut argmins: Vec<Vec<f64>> = vec![Vec::new(); na * nm * nl];

    for (ia, &alpha) in grid.alphas.iter().enumerate() {
        let mut prev_mu_line: Vec<Vec<f64>> = Vec::new();
        for (imu, &mu) in grid.mus.iter().enumerate() {
            let ws = RefCell::new(OmegaWorkspace::new(src, &map, alpha, mu));
            let mut line: Vec<Vec<f64>> = Vec::with_capacity(nl);
            let mut chain: Option<Vec<f64>> = None;
            for (il, &lambda) in grid.lambdas.iter().enumerate() {
                let objective = |c: &[f64]| ws.borrow_mut().eval(c, lambda).0;
                let mut cands: Vec<&Vec<f64>> = witnesses.iter().collect();
                if let Some(c) = &chain {
                    cands.push(c);
                }
                if il < prev_mu_line.len() {
                    cands.push(&prev_mu_line[il]);
                }
                let mut scored: Vec<(f64, &Vec<f64>)> =
                    cands.into_iter().map(|c| (objective(c), c)).collect();
                scored.sort_by(|a, b| a.0.total_cmp(&b.0));
                let warm: Vec<Vec<f64>> =
                    scored.iter().take(2).map(|(_, c)| (*c).clone()).collect();
                let mut cfg_pt = *cfg;
                cfg_pt.starts = if il == 0 { cfg.starts } else { 0 };
                cfg_pt.seed = mix_seed(cfg.seed, ((ia * nm + imu) * nl + il) as u64);
                let rep = minimize(&objective, &[map.dim()], &cfg_pt, &warm)?;
                let idx = (ia * nm + imu) * nl + il;
                values[idx] = rep.best_value;
                chain = Some(rep.argmin.clone());
                line.push(rep.argmin.clone());
                argmins[idx] = rep.argmin;
            }
            prev_mu_line = line;
        }
    }
    Ok(OmegaTable { grid: grid.clone(), values, argmins, witnesses })
}

/// The exponent estimate at one (rate, distortion) target.
#[derive(Debug, Clone, Copy)]
pub struct ExponentResult {
    /// Estimated exponent, clamped at zero.
    pub f_value: f64,
    pub alpha: f64,
    pub mu: f64,
    pub lambda: f64,
    /// Omega minimum at the reported parameters.
    pub omega: f64,
    /// Whether the unclamped maximum was negative.
    pub clamped: bool,
}

fn check_target(rate: f64, delta: f64) -> Result<()> {
    ensure(
        rate.is_finite() && delta.is_finite() && rate >= 0.0 && delta >= 0.0,
        "rate and distortion targets must be finite and non-negative",
    )
}

/// Maximizes the normalized integrand over a prebuilt table, without
/// refinement. Clamps at zero.
pub fn exponent_f_from_table(table: &OmegaTable, rate: f64, delta: f64) -> Result<ExponentResult> {
    check_target(rate, delta)?;
    let g = &table.grid;
    let mut best = f64::NEG_INFINITY;
    let mut arg = (0usize, 0usize, 0usize);
    for ia in 0..g.alphas.len() {
        for imu in 0..g.mus.len() {
            for il in 0..g.lambdas.len() {
                let p = TiltParams {
                    alpha: g.alphas[ia],
                    mu: g.mus[imu],
                    lambda: g.lambdas[il],
                };
                let f = f_lambda(&p, rate, delta, table.values[table.at(ia, imu, il)]);
                if f > best {
                    best = f;
                    arg = (ia, imu, il);
                }
            }
        }
    }
    let (ia, imu, il) = arg;
    Ok(ExponentResult {
        f_value: best.max(0.0),
        alpha: g.alphas[ia],
        mu: g.mus[imu],
        lambda: g.lambdas[il],
        omega: table.values[table.at(ia, imu, il)],
        clamped: best < 0.0,
    })
}

/// Coordinate-ascent refinement around the best grid point. Every accepted
/// move re-minimizes Omega warm-started from the incumbent argmin, so the
/// reported value stays an evaluated point of the integrand.
fn refine_exponent(
    src: &SourceModel,
    table: &OmegaTable,
    rate: f64,
    delta: f64,
    cfg: &OptimizerConfig,
    start: ExponentResult,
) -> Result<ExponentResult> {
    let g = &table.grid;
    let us = src.x_size * src.y_size * src.z_size;
    let map = SupportMap::new(src, us);

    let ia = g.alphas.iter().position(|&a| a == start.alpha).unwrap_or(0);
    let imu = g.mus.iter().position(|&m| m == start.mu).unwrap_or(0);
    let il = g.lambdas.iter().position(|&l| l == start.lambda).unwrap_or(0);
    let mut coords = table.argmins[table.at(ia, imu, il)].clone();
    if coords.is_empty() {
        return Ok(start);
    }
    let mut best = start;
    let mut unclamped = if best.clamped { f64::NEG_INFINITY } else { best.f_value };

    let bracket = |v: &[f64], i: usize, lo: f64, hi: f64| -> (f64, f64) {
        let a = if i == 0 { lo } else { v[i - 1] };
        let b = if i + 1 == v.len() { hi } else { v[i + 1] };
        (a, b)
    };
    let mut cfg_r = *cfg;
    cfg_r.starts = 0;
    cfg_r.max_iters = cfg.max_iters / 2 + 1;

    for pass in 0..2 {
        let (la, lb) = bracket(&g.lambdas, il, g.lambdas[0] / 2.0, g.lambdas[g.lambdas.len() - 1] * 2.0);
        let (aa, ab) = bracket(&g.alphas, ia, g.alphas[0] / 2.0, 1.0);
        let (ma, mb) = bracket(&g.mus, imu, g.mus[0] / 2.0, 1.0);
        let mut trials: Vec<TiltParams> = Vec::new();
        for k in 1..=3 {
            let t = k as f64 / 4.0;
            trials.push(TiltParams { alpha: best.alpha, mu: best.mu, lambda: (la.ln() + (lb.ln() - la.ln()) * t).exp() });
            trials.push(TiltParams { alpha: aa + (ab - aa) * t, mu: best.mu, lambda: best.lambda });
            trials.push(TiltParams { alpha: best.alpha, mu: ma + (mb - ma) * t, lambda: best.lambda });
        }
        let mut improved = false;
        for p in trials {
            if p.alpha <= 0.0 || p.alpha > 1.0 || p.mu <= 0.0 || p.mu > 1.0 || p.lambda <= 0.0 {
                continue;
            }
            cfg_r.seed = mix_seed(cfg.seed, 0xbeef ^ (pass as u64) << 8);
            let ws = RefCell::new(OmegaWorkspace::new(src, &map, p.alpha, p.mu));
            let lambda = p.lambda;
            let objective = |c: &[f64]| ws.borrow_mut().eval(c, lambda).0;
            let mut warm: Vec<Vec<f64>> = vec![coords.clone()];
            warm.extend(table.witnesses.iter().cloned());
            let rep = minimize(&objective, &[map.dim()], &cfg_r, &warm)?;
            let f = f_lambda(&p, rate, delta, rep.best_value);
            if f > unclamped {
                unclamped = f;
                best = ExponentResult {
                    f_value: f.max(0.0),
                    alpha: p.alpha,
                    mu: p.mu,
                    lambda: p.lambda,
                    omega: rep.best_value,
                    clamped: f < 0.0,
                };
                coords = rep.argmin;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}

/// Full exponent estimate: grid sweep plus local refinement.
pub fn exponent_f(
    src: &SourceModel,
    rate: f64,
    delta: f64,
    grid: &ExponentGrid,
    cfg: &OptimizerConfig,
) -> Result<ExponentResult> {
    let table = build_omega_table(src, grid, cfg)?;
    let base = exponent_f_from_table(&table, rate, delta)?;
    refine_exponent(src, &table, rate, delta, cfg, base)
}

/// Refinement entry point for callers that share one table across targets.
pub fn exponent_f_refined(
    src: &SourceModel,
    table: &OmegaTable,
    rate: f64,
    delta: f64,
    cfg: &OptimizerConfig,
) -> Result<ExponentResult> {
    let base = exponent_f_from_table(table, rate, delta)?;
    refine_exponent(src, table, rate, delta, cfg, base)
}

/// Best-found variance of omega over joints and (alpha, mu) in [0, 1]^2.
#[derive(Debug, Clone)]
pub struct RhoReport {
    pub value: f64,
    pub alpha: f64,
    pub mu: f64,
}

/// Maximizes Var_q[omega] over interior support-respecting joints, scanning
/// (alpha, mu) over the four corners of [0, 1]^2 plus a 5x5 grid. The result
/// is a lower estimate of the true maximum; its stability across seeds is
/// part of the test suite.
pub fn rho_estimate(src: &SourceModel, cfg: &OptimizerConfig) -> Result<RhoReport> {
    let us = src.x_size * src.y_size * src.z_size;
    let map = SupportMap::new(src, us);
    let mut best = RhoReport { value: -1.0, alpha: 0.0, mu: 0.0 };
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    for (k, &alpha) in levels.iter().enumerate() {
        for (j, &mu) in levels.iter().enumerate() {
            let ws = RefCell::new(OmegaWorkspace::new(src, &map, alpha, mu));
            let objective = |c: &[f64]| -ws.borrow_mut().var(c);
            let mut cfg_pt = *cfg;
            cfg_pt.seed = mix_seed(cfg.seed, (k * 8 + j) as u64);
            let rep = minimize(objective, &[map.dim()], &cfg_pt, &[])?;
            if -rep.best_value > best.value {
                best = RhoReport { value: -rep.best_value, alpha, mu };
            }
        }
    }
    Ok(best)
}

/// Inverse of a/2 + a^2 on the non-negative axis: g(b) = (sqrt(1+16b)-1)/4.
pub fn g_inverse(b: f64) -> Result<f64> {
    ensure(b.is_finite() && b >= 0.0, format!("g_inverse needs b >= 0, got {b}"))?;
    Ok(((1.0 + 16.0 * b).sqrt() - 1.0) / 4.0)
}

/// Positivity floor (rho/2) g(tau^(3+delta) / rho)^2 for the exponent at
/// points tau outside the region.
pub fn f_positivity_bound(rho: f64, tau: f64, delta: f64) -> Result<f64> {
    ensure(rho > 0.0 && rho.is_finite(), "rho must be positive")?;
    ensure(tau >= 0.0 && tau.is_finite(), "tau must be non-negative")?;
    ensure(delta > 0.0 && delta.is_finite(), "delta must be positive")?;
    let g = g_inverse(tau.powf(3.0 + delta) / rho)?;
    Ok(rho / 2.0 * g * g)
}

/// Strong-converse deviation radius at blocklength n:
/// kappa_n = { sqrt(rho ln(5/(1-eps)) / (2n)) + 2 ln(5/(1-eps)) / n }^(1/(3+delta)).
pub fn kappa_n(rho: f64, eps: f64, delta: f64, n: u64) -> Result<f64> {
    ensure(rho >= 0.0 && rho.is_finite(), "rho must be non-negative")?;
    ensure(eps > 0.0 && eps < 1.0, format!("eps must lie in (0, 1), got {eps}"))?;
    ensure(delta > 0.0 && delta.is_finite(), "delta must be positive")?;
    ensure(n >= 1, "n must be at least 1")?;
    let l = (5.0 / (1.0 - eps)).ln();
    let inner = (rho * l / (2.0 * n as f64)).sqrt() + 2.0 * l / n as f64;
    Ok(inner.powf(1.0 / (3.0 + delta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::project;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn dsbs() -> SourceModel {
        SourceModel::binary_symmetric(0.25).unwrap()
    }

    /// Matched joint with constant U and constant reproduction z = 0.
    fn matched_constant(src: &SourceModel) -> JointQ {
        let w = vec![1.0, 1.0];
        let dec = vec![0, 0];
        matched_joint(src, 1, &w, &dec).unwrap()
    }

    fn random_supported(src: &SourceModel, u_size: usize, seed: u64) -> JointQ {
        let map = SupportMap::new(src, u_size);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut c: Vec<f64> = (0..map.dim()).map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        }).collect();
        project(&mut c, &[map.dim()], 1e-12);
        JointQ::new_supported(u_size, src.x_size, src.y_size, src.z_size, map.expand(&c), src)
            .unwrap()
    }

    #[test]
    fn params_are_validated() {
        assert!(TiltParams::new(0.0, 0.5, 1.0).is_err());
        assert!(TiltParams::new(1.1, 0.5, 1.0).is_err());
        assert!(TiltParams::new(0.5, -0.1, 1.0).is_err());
        assert!(TiltParams::new(0.5, 0.5, -1.0).is_err());
        assert!(TiltParams::new(1.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn theta_lambda_maps_are_inverse() {
        let p = TiltParams::from_theta(0.3, 0.6, 0.8).unwrap();
        assert_relative_eq!(p.theta(), 0.8, epsilon = 1e-14);
        assert!(TiltParams::from_theta(0.3, 0.6, 1.0 / 0.7).is_err());
        assert!(TiltParams::from_theta(0.3, 0.6, 0.0).is_err());
    }

    #[test]
    fn closed_form_single_point_value() {
        let src = dsbs();
        let q = matched_constant(&src);
        let p = TiltParams::new(0.5, 0.5, 1.0).unwrap();
        let e = omega_of_q(&q, &src, &p).unwrap();
        let expected = -((1.0 + (-4.0 * 0.5 * 0.5 * 1.0f64).exp()) / 2.0).ln();
        assert_relative_eq!(e.value, expected, epsilon = 1e-12);
    }

    #[test]
    fn omega_at_lambda_zero_vanishes() {
        let src = dsbs();
        for seed in 0..5 {
            let q = random_supported(&src, 8, seed);
            let p = TiltParams::new(0.4, 0.7, 0.0).unwrap();
            let e = omega_of_q(&q, &src, &p).unwrap();
            assert!(e.value.abs() <= 1e-12, "Omega(0) = {}", e.value);
        }
    }

    #[test]
    fn first_derivative_matches_information_identity() {
        let src = dsbs();
        let q = random_supported(&src, 6, 11);
        let (alpha, mu) = (0.35, 0.6);
        let p = TiltParams::new(alpha, mu, 0.0).unwrap();
        let e = omega_of_q(&q, &src, &p).unwrap();
        let b = crate::info::info_measures(&q, &src);
        let expected = (1.0 - alpha) * (b.d_qx_px + b.d_qyxu_pyx + b.i_x_z_given_uy)
            + 4.0 * alpha * ((1.0 - mu) * b.d_qxuy_pxy + mu * b.exp_dist);
        assert_relative_eq!(e.d1, expected, epsilon = 1e-10);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let src = dsbs();
        let q = random_supported(&src, 8, 3);
        let (alpha, mu, lambda) = (0.45, 0.3, 0.7);
        let h = 1e-4;
        let at = |l: f64| {
            omega_of_q(&q, &src, &TiltParams::new(alpha, mu, l).unwrap()).unwrap().value
        };
        let e = omega_of_q(&q, &src, &TiltParams::new(alpha, mu, lambda).unwrap()).unwrap();
        let d1 = (at(lambda + h) - at(lambda - h)) / (2.0 * h);
        let d2 = (at(lambda + h) - 2.0 * at(lambda) + at(lambda - h)) / (h * h);
        assert_relative_eq!(e.d1, d1, max_relative = 1e-6, epsilon = 1e-9);
        assert_relative_eq!(e.d2, d2, max_relative = 1e-4, epsilon = 1e-7);
        assert!(e.d2 <= 0.0);
    }

    #[test]
    fn fast_workspace_agrees_with_general_path() {
        let src = dsbs();
        let map = SupportMap::new(&src, 8);
        for seed in [2u64, 9, 21] {
            let q = random_supported(&src, 8, seed);
            let p = TiltParams::new(0.62, 0.41, 1.3).unwrap();
            let general = omega_of_q(&q, &src, &p).unwrap();
            let mut ws = OmegaWorkspace::new(&src, &map, p.alpha, p.mu);
            let (v, d1, d2) = ws.eval(&map.compress(q.raw()), p.lambda);
            assert_relative_eq!(v, general.value, epsilon = 1e-11);
            assert_relative_eq!(d1, general.d1, epsilon = 1e-9);
            assert_relative_eq!(d2, general.d2, epsilon = 1e-9);
        }
    }

    #[test]
    fn tilted_distribution_is_normalized_and_shifts_mass() {
        let src = dsbs();
        let q = matched_constant(&src);
        let p = TiltParams::new(0.5, 1.0, 2.0).unwrap();
        let t = tilted_distribution(&q, &src, &p).unwrap();
        let total: f64 = t.raw().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        // Tilting by exp(-lambda omega) discounts high-distortion cells, so
        // the x = z = 0 cells gain mass relative to x = 1 (distance 1 to z0).
        let m0: f64 = (0..2).map(|y| t.q(0, 0, y, 0)).sum();
        assert!(m0 > 0.5);
        let p0 = TiltParams::new(0.5, 1.0, 0.0).unwrap();
        let t0 = tilted_distribution(&q, &src, &p0).unwrap();
        assert_eq!(t0.raw(), q.raw());
    }

    #[test]
    fn omega_min_is_bounded_by_feasible_points() {
        let src = dsbs();
        let p = TiltParams::new(0.5, 0.5, 0.8).unwrap();
        let cfg = OptimizerConfig { starts: 2, max_iters: 150, seed: 5, ..Default::default() };
        let rep = omega_min(&src, &p, &cfg, &[]).unwrap();
        let witness = omega_of_q(&matched_constant(&src), &src, &p).unwrap().value;
        assert!(rep.value <= witness + 1e-9, "min {} vs witness {witness}", rep.value);
    }

    #[test]
    fn f_lambda_denominator_identity() {
        for (alpha, mu, lambda) in [(0.3, 0.2, 0.5), (0.9, 0.8, 2.0), (1.0, 1.0, 0.1)] {
            let d1 = 1.0 + 4.0 * (1.0 - alpha * mu) * lambda;
            let d2 = 1.0 + (1.0 - alpha) * lambda + lambda * (3.0 + alpha - 4.0 * alpha * mu);
            assert_relative_eq!(d1, d2, epsilon = 1e-14);
        }
    }

    #[test]
    fn g_inverse_spot_values() {
        assert_eq!(g_inverse(1.5).unwrap(), 1.0);
        for b in [0.1, 0.7, 3.0] {
            let a = g_inverse(b).unwrap();
            assert_relative_eq!(a / 2.0 + a * a, b, epsilon = 1e-12);
        }
        assert!(g_inverse(-0.1).is_err());
    }

    #[test]
    fn kappa_spot_value() {
        let k = kappa_n(1.0, 0.5, 1.0, 100).unwrap();
        assert!((k - 0.6258).abs() <= 1e-3, "kappa {k}");
        assert!(kappa_n(1.0, 1.0, 1.0, 100).is_err());
    }

    #[test]
    fn positivity_bound_is_positive_outside() {
        let b = f_positivity_bound(2.0, 0.3, 1.0).unwrap();
        assert!(b > 0.0);
        assert!(f_positivity_bound(0.0, 0.3, 1.0).is_err());
    }

    #[test]
    fn grids_have_documented_shapes() {
        let g = ExponentGrid::standard();
        assert_eq!((g.alphas.len(), g.mus.len(), g.lambdas.len()), (20, 21, 25));
        assert!(g.alphas.iter().all(|&a| a > 0.0 && a <= 1.0));
        assert!(g.mus.iter().all(|&m| m > 0.0 && m <= 1.0));
        assert_eq!(g.lambdas[0], 1e-3);
        assert_eq!(*g.lambdas.last().unwrap(), 1e2);
        let r = ExponentGrid::reduced();
        assert_eq!((r.alphas.len(), r.mus.len(), r.lambdas.len()), (8, 9, 13));
    }
}
