//! Exact finite-blocklength checks of the supporting results behind the
//! exponent: the four information-spectrum probability bounds, the Markov
//! chain satisfied by the block auxiliary variable, and the tilted
//! recursion that factorizes the multi-letter functional.
//!
//! All checks enumerate the full block law induced by a scheme, so they are
//! restricted to small blocklengths by explicit guards.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{ensure, Result};
use crate::exponent::{omega_min, omega_of_q, TiltParams};
use crate::joint::JointQ;
use crate::optim::OptimizerConfig;
use crate::sim::{CodingScheme, ProductTables};
use crate::source::SourceModel;

fn encoder_message_count(encoder: &[u32]) -> usize {
    encoder.iter().map(|&s| s as usize + 1).max().unwrap_or(1)
}

/// The four arbitrary reference distributions of the spectrum bounds, in
/// block form. Rows are stochastic over the last index.
#[derive(Debug, Clone)]
pub struct QChoices {
    /// Distribution over x blocks: q1[ix].
    pub q1: Vec<f64>,
    /// Conditional over y blocks given (message, x block):
    /// q2[(s * xn + ix) * yn + iy].
    pub q2: Vec<f64>,
    /// Conditional over x blocks given (message, y block, z block):
    /// q3[((s * yn + iy) * zn + iz) * xn + ix].
    pub q3: Vec<f64>,
    /// Conditional over x blocks given (message, y block):
    /// q4[(s * yn + iy) * xn + ix].
    pub q4: Vec<f64>,
}

fn check_rows(v: &[f64], row: usize, what: &str) -> Result<()> {
    ensure(v.len() % row == 0, format!("{what} table length is not a multiple of its row"))?;
    for r in v.chunks(row) {
        ensure(
            r.iter().all(|&p| p.is_finite() && p >= 0.0),
            format!("{what} has a negative or non-finite entry"),
        )?;
        let s: f64 = r.iter().sum();
        ensure((s - 1.0).abs() <= 1e-9, format!("{what} row sums to {s}"))?;
    }
    Ok(())
}

impl QChoices {
    /// The conditionals induced by (src, encoder, optimal decoder); with
    /// these choices every spectrum complement is empty.
    pub fn induced(src: &SourceModel, encoder: &[u32], n: usize) -> Result<Self> {
        let t = ProductTables::new(src, n)?;
        ensure(encoder.len() == t.xn, "encoder table has the wrong length")?;
        let m = encoder_message_count(encoder);
        let scheme = CodingScheme {
            n,
            m,
            encoder: encoder.to_vec(),
            decoder: crate::sim::optimal_decoder_for(src, n, m, encoder)?,
        };
        let law = InducedLaw::new(&t, &scheme);

        let mut q1 = law.p_x.clone();
        // q2 = p(y^n | x^n): independent of the message since s = f(x^n).
        let mut q2 = vec![0.0; m * t.xn * t.yn];
        for s in 0..m {
            for ix in 0..t.xn {
                for iy in 0..t.yn {
                    q2[(s * t.xn + ix) * t.yn + iy] = if law.p_x[ix] > 0.0 {
                        t.pxy[ix * t.yn + iy] / law.p_x[ix]
                    } else if iy == 0 {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
        }
        // q3 = p(x^n | s, y^n): z adds nothing for a deterministic decoder.
        let mut cond_sy = vec![0.0; m * t.yn * t.xn];
        for s in 0..m {
            for iy in 0..t.yn {
                let mass = law.p_sy[s * t.yn + iy];
                for ix in 0..t.xn {
                    cond_sy[(s * t.yn + iy) * t.xn + ix] = if mass > 0.0 {
                        if scheme.encoder[ix] as usize == s {
                            t.pxy[ix * t.yn + iy] / mass
                        } else {
                            0.0
                        }
                    } else if ix == 0 {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
        }
        let mut q3 = vec![0.0; m * t.yn * t.zn * t.xn];
        for s in 0..m {
            for iy in 0..t.yn {
                for iz in 0..t.zn {
                    for ix in 0..t.xn {
                        q3[((s * t.yn + iy) * t.zn + iz) * t.xn + ix] =
                            cond_sy[(s * t.yn + iy) * t.xn + ix];
                    }
                }
            }
        }
        // q4 = p(x^n | y^n), replicated over messages: the change-of-measure
        // event compares against exactly this conditional.
        let mut q4 = vec![0.0; m * t.yn * t.xn];
        for s in 0..m {
            for iy in 0..t.yn {
                for ix in 0..t.xn {
                    q4[(s * t.yn + iy) * t.xn + ix] = if law.p_y[iy] > 0.0 {
                        t.pxy[ix * t.yn + iy] / law.p_y[iy]
                    } else if ix == 0 {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
        }
        for v in q1.iter_mut() {
            *v = v.max(0.0);
        }
        Ok(QChoices { q1, q2, q3, q4 })
    }

    /// Random stochastic tables of the right shapes.
    pub fn random(src: &SourceModel, n: usize, m: usize, seed: u64) -> Result<Self> {
        let t = ProductTables::new(src, n)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut row = |len: usize| -> Vec<f64> {
            let mut v: Vec<f64> = (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    -(1.0 - u).ln()
                })
                .collect();
            let s: f64 = v.iter().sum();
            for x in v.iter_mut() {
                *x /= s;
            }
            v
        };
        let q1 = row(t.xn);
        let mut q2 = Vec::with_capacity(m * t.xn * t.yn);
        for _ in 0..m * t.xn {
            q2.extend(row(t.yn));
        }
        let mut q3 = Vec::with_capacity(m * t.yn * t.zn * t.xn);
        for _ in 0..m * t.yn * t.zn {
            q3.extend(row(t.xn));
        }
        let mut q4 = Vec::with_capacity(m * t.yn * t.xn);
        for _ in 0..m * t.yn {
            q4.extend(row(t.xn));
        }
        Ok(QChoices { q1, q2, q3, q4 })
    }
}

/// Exact block law of a scheme: joint (x^n, y^n) weights plus the marginals
/// the checks keep reusing.
struct InducedLaw {
    p_x: Vec<f64>,
    p_y: Vec<f64>,
    p_sy: Vec<f64>,
}

impl InducedLaw {
    fn new(t: &ProductTables, scheme: &CodingScheme) -> Self {
        let mut p_x = vec![0.0; t.xn];
        let mut p_y = vec![0.0; t.yn];
        let mut p_sy = vec![0.0; scheme.m * t.yn];
        for ix in 0..t.xn {
            let s = scheme.encoder[ix] as usize;
            for iy in 0..t.yn {
                let p = t.pxy[ix * t.yn + iy];
                p_x[ix] += p;
                p_y[iy] += p;
                p_sy[s * t.yn + iy] += p;
            }
        }
        InducedLaw { p_x, p_y, p_sy }
    }
}

/// Exact complement probabilities of the four spectrum events against their
/// common bound e^{-n eta}.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumReport {
    pub probabilities: [f64; 4],
    pub bound: f64,
    pub holds: [bool; 4],
}

/// Evaluates the four spectrum probability bounds for one encoder (paired
/// with its optimal decoder) and one choice of reference tables.
pub fn spectrum_lemma_check(
    src: &SourceModel,
    encoder: &[u32],
    n: usize,
    eta: f64,
    q: &QChoices,
) -> Result<SpectrumReport> {
    ensure(eta > 0.0 && eta.is_finite(), "eta must be positive")?;
    let t = ProductTables::new(src, n)?;
    ensure(encoder.len() == t.xn, "encoder table has the wrong length")?;
    ensure(q.q2.len() % (t.xn * t.yn) == 0, "q2 table has the wrong shape")?;
    let m = q.q2.len() / (t.xn * t.yn);
    ensure(m >= 1, "q2 table is empty")?;
    ensure(
        encoder.iter().all(|&s| (s as usize) < m),
        "encoder emits a message outside the q tables",
    )?;
    check_rows(&q.q1, t.xn, "q1")?;
    ensure(q.q1.len() == t.xn, "q1 must be a single distribution over x blocks")?;
    check_rows(&q.q2, t.yn, "q2")?;
    check_rows(&q.q3, t.xn, "q3")?;
    ensure(q.q3.len() == m * t.yn * t.zn * t.xn, "q3 table has the wrong shape")?;
    check_rows(&q.q4, t.xn, "q4")?;
    ensure(q.q4.len() == m * t.yn * t.xn, "q4 table has the wrong shape")?;

    let scheme = CodingScheme {
        n,
        m,
        encoder: encoder.to_vec(),
        decoder: crate::sim::optimal_decoder_for(src, n, m, encoder)?,
    };
    let law = InducedLaw::new(&t, &scheme);
    let shrink = (-(n as f64) * eta).exp();
    let grow = m as f64 * ((n as f64) * eta).exp();

    let mut probs = [0.0f64; 4];
    for (ix, &px) in law.p_x.iter().enumerate() {
        if px > 0.0 && px < shrink * q.q1[ix] {
            probs[0] += px;
        }
    }
    for ix in 0..t.xn {
        if law.p_x[ix] == 0.0 {
            continue;
        }
        let s = scheme.encoder[ix] as usize;
        for iy in 0..t.yn {
            let p = t.pxy[ix * t.yn + iy];
            if p == 0.0 {
                continue;
            }
            let p_y_given_x = p / law.p_x[ix];
            if p_y_given_x < shrink * q.q2[(s * t.xn + ix) * t.yn + iy] {
                probs[1] += p;
            }
            let p_x_given_sy = p / law.p_sy[s * t.yn + iy];
            let iz = scheme.decoder[s * t.yn + iy] as usize;
            if p_x_given_sy < shrink * q.q3[((s * t.yn + iy) * t.zn + iz) * t.xn + ix] {
                probs[2] += p;
            }
            let p_x_given_y = p / law.p_y[iy];
            if q.q4[(s * t.yn + iy) * t.xn + ix] > grow * p_x_given_y {
                probs[3] += p;
            }
        }
    }
    let bound = shrink;
    Ok(SpectrumReport {
        probabilities: probs,
        bound,
        holds: [
            probs[0] <= bound,
            probs[1] <= bound,
            probs[2] <= bound,
            probs[3] <= bound,
        ],
    })
}

/// Maximum over t of I(X_t; Y^{t-1} | S, X^{t-1}, Y_t^n) under the exact
/// block law; the chain property makes every term vanish.
pub fn markov_lemma_check(src: &SourceModel, encoder: &[u32], n: usize) -> Result<f64> {
    let t = ProductTables::new(src, n)?;
    ensure(encoder.len() == t.xn, "encoder table has the wrong length")?;
    let m = encoder_message_count(encoder);
    let (xs, ys) = (src.x_size, src.y_size);

    let mut worst = 0.0f64;
    for step in 1..=n {
        let xprev = xs.pow((step - 1) as u32);
        let ysufft = ys.pow((n - step + 1) as u32); // suffix including y_t
        let yprev = ys.pow((step - 1) as u32);
        let nc = m * xprev * ysufft;
        let mut joint = vec![0.0; nc * xs * yprev];
        for ix in 0..t.xn {
            let s = encoder[ix] as usize;
            let ixp = ix % xprev;
            let xt = ix / xprev % xs;
            for iy in 0..t.yn {
                let p = t.pxy[ix * t.yn + iy];
                if p > 0.0 {
                    let c = (s * xprev + ixp) * ysufft + iy / yprev;
                    joint[(c * xs + xt) * yprev + iy % yprev] += p;
                }
            }
        }
        let mut p_c = vec![0.0; nc];
        let mut p_ca = vec![0.0; nc * xs];
        let mut p_cb = vec![0.0; nc * yprev];
        for c in 0..nc {
            for a in 0..xs {
                for b in 0..yprev {
                    let p = joint[(c * xs + a) * yprev + b];
                    p_c[c] += p;
                    p_ca[c * xs + a] += p;
                    p_cb[c * yprev + b] += p;
                }
            }
        }
        let mut cmi = 0.0;
        for c in 0..nc {
            for a in 0..xs {
                for b in 0..yprev {
                    let p = joint[(c * xs + a) * yprev + b];
                    if p > 0.0 {
                        cmi += p * (p * p_c[c] / (p_ca[c * xs + a] * p_cb[c * yprev + b])).ln();
                    }
                }
            }
        }
        worst = worst.max(cmi.abs());
    }
    Ok(worst)
}

/// Result of the recursion consistency check at one (alpha, mu, theta).
#[derive(Debug, Clone)]
pub struct RecursionReport {
    pub n: usize,
    pub theta: f64,
    /// lambda = theta / (1 - (1-alpha) theta).
    pub lambda: f64,
    /// Multi-letter Omega_n from direct block enumeration (total nats).
    pub omega_n: f64,
    /// |exp(-Omega_n) - prod_t Lambda_t| across the two routes.
    pub lambda_product_residual: f64,
    /// (1/n) sum_t Omega(q_t | p) minus the warm-started single-letter
    /// minimum estimate; non-negative up to optimizer noise.
    pub prop2_margin: f64,
    /// Per-step factors Lambda_t.
    pub lambdas: Vec<f64>,
    /// Single-letter Omega of each embedded q_t at the matched lambda.
    pub omega_q: Vec<f64>,
}

/// Per-step layout of the block auxiliary U_t = (message, x^{t-1}, y_{t+1}^n).
struct StepDims {
    xprev: usize,
    ysuff: usize,
    u_count: usize,
}

fn step_dims(src: &SourceModel, m: usize, n: usize, step: usize) -> StepDims {
    let xprev = src.x_size.pow((step - 1) as u32);
    let ysuff = src.y_size.pow((n - step) as u32);
    StepDims { xprev, ysuff, u_count: m * xprev * ysuff }
}

/// Verifies that the multi-letter tilted functional of a scheme factorizes
/// through the per-step recursion, and that the per-step joints certify the
/// single-letter lower bound.
///
/// `q_seq`, when supplied, gives one tensor per step over
/// (U_t, x_t, y_t, z_t) with U_t laid out as
/// ((message * |X|^{t-1} + x-prefix) * |Y|^{n-t} + y-suffix); otherwise the
/// per-step joints are constructed recursively as the tilted pushforwards.
pub fn recursion_check(
    src: &SourceModel,
    scheme: &CodingScheme,
    q_seq: Option<&[Vec<f64>]>,
    alpha: f64,
    mu: f64,
    theta: f64,
    cfg: &OptimizerConfig,
) -> Result<RecursionReport> {
    let params = TiltParams::from_theta(alpha, mu, theta)?;
    let n = scheme.n;
    let t = ProductTables::new(src, n)?;
    ensure(scheme.encoder.len() == t.xn, "encoder table has the wrong length")?;
    ensure(scheme.decoder.len() == scheme.m * t.yn, "decoder table has the wrong length")?;
    ensure(
        scheme.m * t.xn * t.yn <= 1 << 22,
        "block law is too large for the recursion check",
    )?;
    if let Some(qs) = q_seq {
        ensure(qs.len() == n, format!("q_seq must supply {n} step joints"))?;
    }
    let (xs, ys, zs) = (src.x_size, src.y_size, src.z_size);
    let m = scheme.m;
    let abar_theta = (1.0 - alpha) * theta;
    let b4_theta = 4.0 * alpha * (1.0 - mu) * theta;
    let d4_theta = 4.0 * alpha * mu * theta;

    // True prefix sums P_k[(s, iy), x-prefix of length k], k = 0..n.
    let mut prefix: Vec<Vec<f64>> = (0..=n)
        .map(|k| vec![0.0; m * t.yn * xs.pow(k as u32)])
        .collect();
    for ix in 0..t.xn {
        let s = scheme.encoder[ix] as usize;
        for iy in 0..t.yn {
            let p = t.pxy[ix * t.yn + iy];
            if p > 0.0 {
                for (k, pk) in prefix.iter_mut().enumerate() {
                    let stride = xs.pow(k as u32);
                    pk[(s * t.yn + iy) * stride + ix % stride] += p;
                }
            }
        }
    }

    // Tilted state: marginal over (s, y^n) and prefix conditional given it.
    let mut tilde_sy: Vec<f64> = prefix[0].clone();
    let mut a_prev: Vec<f64> = tilde_sy.iter().map(|&w| if w > 0.0 { 1.0 } else { 0.0 }).collect();

    let mut lambdas = Vec::with_capacity(n);
    let mut omega_q = Vec::with_capacity(n);
    let mut f_steps: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut embedded: Vec<JointQ> = Vec::with_capacity(n);

    for step in 1..=n {
        let d = step_dims(src, m, n, step);
        let stride_t = d.xprev * xs;
        let yprev = ys.pow((step - 1) as u32);

        // Step joint q_t over (u_t, x_t, y_t, z_t).
        let q_len = d.u_count * xs * ys * zs;
        let q_idx = |u: usize, x: usize, y: usize, z: usize| ((u * xs + x) * ys + y) * zs + z;
        let qt: Vec<f64> = match q_seq {
            Some(qs) => {
                let given = &qs[step - 1];
                ensure(
                    given.len() == q_len,
                    format!("q_seq step {step} has {} entries, expected {q_len}", given.len()),
                )?;
                ensure(
                    given.iter().all(|&v| v.is_finite() && v >= 0.0),
                    format!("q_seq step {step} has a negative or non-finite entry"),
                )?;
                let s: f64 = given.iter().sum();
                ensure((s - 1.0).abs() <= 1e-9, format!("q_seq step {step} sums to {s}"))?;
                given.iter().map(|&v| v / s).collect()
            }
            None => {
                let mut qt = vec![0.0; q_len];
                for s in 0..m {
                    for iy in 0..t.yn {
                        let w0 = tilde_sy[s * t.yn + iy];
                        if w0 == 0.0 {
                            continue;
                        }
                        let iz = scheme.decoder[s * t.yn + iy] as usize;
                        let zt = iz / zs.pow((step - 1) as u32) % zs;
                        let yt = iy / yprev % ys;
                        let iysuf = iy / ys.pow(step as u32);
                        for ixp in 0..d.xprev {
                            let ap = a_prev[(s * t.yn + iy) * d.xprev + ixp];
                            if ap == 0.0 {
                                continue;
                            }
                            let denom = prefix[step - 1][(s * t.yn + iy) * d.xprev + ixp];
                            let u = (s * d.xprev + ixp) * d.ysuff + iysuf;
                            for xt in 0..xs {
                                let num =
                                    prefix[step][(s * t.yn + iy) * stride_t + ixp + xt * d.xprev];
                                if num > 0.0 {
                                    qt[q_idx(u, xt, yt, zt)] += w0 * ap * num / denom;
                                }
                            }
                        }
                    }
                }
                let total: f64 = qt.iter().sum();
                qt.into_iter().map(|v| v / total).collect()
            }
        };

        let qt_joint = JointQ::new(d.u_count, xs, ys, zs, qt)?;
        let marg = qt_joint.marginals();

        // True conditional p(x_t | s, x^{t-1}, y_t^n), marginalizing y^{t-1}.
        let ysufft = ys.pow((n - step + 1) as u32);
        let mut truth = vec![0.0; m * d.xprev * ysufft * xs];
        for s in 0..m {
            for iy in 0..t.yn {
                let iyt = iy / yprev;
                for ixt in 0..stride_t {
                    let w = prefix[step][(s * t.yn + iy) * stride_t + ixt];
                    if w > 0.0 {
                        truth[((s * d.xprev + ixt % d.xprev) * ysufft + iyt) * xs
                            + ixt / d.xprev] += w;
                    }
                }
            }
        }

        // Per-step weight f_t indexed by (s, iy, x-prefix of length t).
        let mut ft = vec![0.0; m * t.yn * stride_t];
        for s in 0..m {
            for iy in 0..t.yn {
                if prefix[0][s * t.yn + iy] == 0.0 {
                    continue;
                }
                let iz = scheme.decoder[s * t.yn + iy] as usize;
                let zt = iz / zs.pow((step - 1) as u32) % zs;
                let yt = iy / yprev % ys;
                let iyt = iy / yprev;
                let iysuf = iy / ys.pow(step as u32);
                for ixp in 0..d.xprev {
                    let u = (s * d.xprev + ixp) * d.ysuff + iysuf;
                    let true_row = ((s * d.xprev + ixp) * ysufft + iyt) * xs;
                    let true_mass: f64 = (0..xs).map(|x| truth[true_row + x]).sum();
                    for xt in 0..xs {
                        if prefix[step][(s * t.yn + iy) * stride_t + ixp + xt * d.xprev] == 0.0 {
                            continue;
                        }
                        let q_x = marg.q_x[xt];
                        let q_y_xu = marg.q_xuy[(xt * d.u_count + u) * ys + yt]
                            / marg.q_xu[xt * d.u_count + u];
                        let q_x_uyz = qt_joint.q(u, xt, yt, zt)
                            / marg.q_uyz[(u * ys + yt) * zs + zt];
                        let q_x_uy = marg.q_xuy[(xt * d.u_count + u) * ys + yt]
                            / marg.q_uy[u * ys + yt];
                        let p_true = truth[true_row + xt] / true_mass;
                        let f = (src.px(xt) / q_x).powf(abar_theta)
                            * (src.p_y_given_x(yt, xt) / q_y_xu).powf(abar_theta)
                            * (p_true / q_x_uyz).powf(abar_theta)
                            * (src.p_x_given_y(xt, yt) / q_x_uy).powf(b4_theta)
                            * (-d4_theta * src.dist(xt, zt)).exp();
                        ft[(s * t.yn + iy) * stride_t + ixp + xt * d.xprev] = f;
                    }
                }
            }
        }

        // Lambda_t and the tilted-state update.
        let mut lambda_t = 0.0;
        let mut a_new = vec![0.0; m * t.yn * stride_t];
        let mut phi = vec![0.0; m * t.yn];
        for s in 0..m {
            for iy in 0..t.yn {
                let w0 = tilde_sy[s * t.yn + iy];
                let mut phi_sy = 0.0;
                for ixp in 0..d.xprev {
                    let ap = a_prev[(s * t.yn + iy) * d.xprev + ixp];
                    if ap == 0.0 {
                        continue;
                    }
                    let denom = prefix[step - 1][(s * t.yn + iy) * d.xprev + ixp];
                    for xt in 0..xs {
                        let ixt = ixp + xt * d.xprev;
                        let num = prefix[step][(s * t.yn + iy) * stride_t + ixt];
                        if num > 0.0 {
                            let b = ap * (num / denom) * ft[(s * t.yn + iy) * stride_t + ixt];
                            a_new[(s * t.yn + iy) * stride_t + ixt] = b;
                            phi_sy += b;
                        }
                    }
                }
                phi[s * t.yn + iy] = phi_sy;
                lambda_t += w0 * phi_sy;
                if phi_sy > 0.0 {
                    for ixt in 0..stride_t {
                        a_new[(s * t.yn + iy) * stride_t + ixt] /= phi_sy;
                    }
                }
            }
        }
        for sy in 0..m * t.yn {
            tilde_sy[sy] *= phi[sy] / lambda_t;
        }
        a_prev = a_new;

        omega_q.push(omega_of_q(&qt_joint, src, &params)?.value);
        lambdas.push(lambda_t);
        f_steps.push(ft);
        embedded.push(qt_joint);
    }

    // Direct route: full block enumeration of E_p[prod_t f_t].
    let mut direct = 0.0;
    for ix in 0..t.xn {
        let s = scheme.encoder[ix] as usize;
        for iy in 0..t.yn {
            let p = t.pxy[ix * t.yn + iy];
            if p == 0.0 {
                continue;
            }
            let mut w = p;
            for (step, ft) in f_steps.iter().enumerate() {
                let stride = xs.pow((step + 1) as u32);
                w *= ft[(s * t.yn + iy) * stride + ix % stride];
            }
            direct += w;
        }
    }
    let omega_n = -direct.ln();
    let product: f64 = lambdas.iter().product();
    let residual = (direct - product).abs();

    // Single-letter minimum warm-started with every embeddable step joint.
    let us_cap = xs * ys * zs;
    let warm: Vec<JointQ> = embedded.iter().filter(|j| j.u_size <= us_cap).cloned().collect();
    let min_est = omega_min(src, &params, cfg, &warm)?.value;
    let mean_step: f64 = omega_q.iter().sum::<f64>() / n as f64;

    Ok(RecursionReport {
        n,
        theta,
        lambda: params.lambda,
        omega_n,
        lambda_product_residual: residual,
        prop2_margin: mean_step - min_est,
        lambdas,
        omega_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{g_n_exhaustive, optimal_decoder_for};
    use approx::assert_relative_eq;

    fn dsbs() -> SourceModel {
        SourceModel::binary_symmetric(0.25).unwrap()
    }

    fn random_encoder(xn: usize, m: usize, seed: u64) -> Vec<u32> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..xn).map(|_| rng.random_range(0..m as u32)).collect()
    }

    #[test]
    fn induced_choices_empty_the_complements() {
        let src = dsbs();
        let enc = random_encoder(4, 2, 3);
        let q = QChoices::induced(&src, &enc, 2).unwrap();
        let r = spectrum_lemma_check(&src, &enc, 2, 0.1, &q).unwrap();
        for (k, &p) in r.probabilities.iter().enumerate() {
            assert_eq!(p, 0.0, "complement {k} should be empty, got {p}");
        }
        assert!(r.holds.iter().all(|&h| h));
    }

    #[test]
    fn random_choices_satisfy_the_bounds() {
        let src = dsbs();
        for seed in 0..6 {
            let enc = random_encoder(4, 2, 100 + seed);
            let q = QChoices::random(&src, 2, 2, seed).unwrap();
            for eta in [0.05, 0.2] {
                let r = spectrum_lemma_check(&src, &enc, 2, eta, &q).unwrap();
                for k in 0..4 {
                    assert!(
                        r.holds[k],
                        "bound {k} fails: {} > {}",
                        r.probabilities[k], r.bound
                    );
                }
            }
        }
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let src = dsbs();
        let enc = random_encoder(4, 2, 1);
        let mut q = QChoices::random(&src, 2, 2, 1).unwrap();
        q.q2[0] += 0.5;
        assert!(spectrum_lemma_check(&src, &enc, 2, 0.1, &q).is_err());
    }

    #[test]
    fn markov_chain_cmi_vanishes() {
        let src = dsbs();
        assert_eq!(markov_lemma_check(&src, &[0, 0], 1).unwrap(), 0.0);
        for seed in 0..4 {
            let e2 = random_encoder(4, 2, seed);
            assert!(markov_lemma_check(&src, &e2, 2).unwrap() <= 1e-12);
            let e3 = random_encoder(8, 2, 50 + seed);
            assert!(markov_lemma_check(&src, &e3, 3).unwrap() <= 1e-12);
        }
    }

    fn scheme_for(src: &SourceModel, n: usize, m: usize, seed: u64) -> CodingScheme {
        let enc = random_encoder(src.x_size.pow(n as u32), m, seed);
        let dec = optimal_decoder_for(src, n, m, &enc).unwrap();
        CodingScheme { n, m, encoder: enc, decoder: dec }
    }

    fn lean_cfg() -> OptimizerConfig {
        OptimizerConfig { starts: 2, max_iters: 200, seed: 11, ..Default::default() }
    }

    #[test]
    fn single_step_recursion_degenerates() {
        let src = dsbs();
        let scheme = scheme_for(&src, 1, 2, 5);
        let r = recursion_check(&src, &scheme, None, 0.5, 0.5, 0.2, &lean_cfg()).unwrap();
        assert!(r.lambda_product_residual <= 1e-14);
        assert_relative_eq!(r.omega_n, -r.lambdas[0].ln(), epsilon = 1e-12);
        assert!(r.prop2_margin >= -1e-6, "margin {}", r.prop2_margin);
    }

    #[test]
    fn two_step_recursion_is_consistent() {
        let src = dsbs();
        let scheme = scheme_for(&src, 2, 2, 9);
        let r = recursion_check(&src, &scheme, None, 0.5, 0.5, 0.2, &lean_cfg()).unwrap();
        assert!(r.lambda_product_residual <= 1e-10, "residual {}", r.lambda_product_residual);
        assert!(r.prop2_margin >= -1e-6, "margin {}", r.prop2_margin);
        assert_eq!(r.lambdas.len(), 2);
        assert_relative_eq!(r.lambda, 0.2 / (1.0 - 0.5 * 0.2), epsilon = 1e-15);
    }

    #[test]
    fn supplied_step_joints_keep_the_identity() {
        // The factorization holds for arbitrary step joints, not only the
        // recursive choice; check it on uniform tensors.
        let src = dsbs();
        let scheme = scheme_for(&src, 2, 1, 2);
        let dims: Vec<usize> = (1..=2)
            .map(|step| {
                let d = step_dims(&src, 1, 2, step);
                d.u_count * 2 * 2 * 2
            })
            .collect();
        let qs: Vec<Vec<f64>> = dims.iter().map(|&l| vec![1.0 / l as f64; l]).collect();
        let r = recursion_check(&src, &scheme, Some(&qs), 0.4, 0.6, 0.3, &lean_cfg()).unwrap();
        assert!(r.lambda_product_residual <= 1e-10, "residual {}", r.lambda_product_residual);
        assert!(r.prop2_margin >= -1e-6, "margin {}", r.prop2_margin);
    }

    #[test]
    fn theta_domain_is_enforced() {
        let src = dsbs();
        let scheme = scheme_for(&src, 1, 1, 0);
        let err = recursion_check(&src, &scheme, None, 0.5, 0.5, 2.0, &lean_cfg());
        assert!(err.is_err());
    }

    #[test]
    fn best_scheme_recursion_also_checks_out() {
        let src = dsbs();
        let best = g_n_exhaustive(&src, 2, 0.3, 0.3).unwrap();
        let r = recursion_check(&src, &best.scheme, None, 0.8, 0.7, 0.4, &lean_cfg()).unwrap();
        assert!(r.lambda_product_residual <= 1e-10);
        assert!(r.prop2_margin >= -1e-6, "margin {}", r.prop2_margin);
    }
}
