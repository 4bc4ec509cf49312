use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{ensure, Error, Result};

/// Settings for the multi-start mirror-descent minimizer.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    /// Number of random restarts drawn from a flat Dirichlet law.
    pub starts: usize,
    /// Iteration cap per start.
    pub max_iters: usize,
    /// Initial multiplicative step size.
    pub step0: f64,
    /// Objective-decrease threshold that counts as convergence.
    pub tol: f64,
    /// Seed for the restart sampler; fixes the whole run.
    pub seed: u64,
    /// Smallest coordinate kept strictly positive on each simplex block.
    pub floor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { starts: 16, max_iters: 2000, step0: 0.5, tol: 1e-9, seed: 0, floor: 1e-12 }
    }
}

/// Outcome of a minimization run. `best_value` is the objective evaluated at
/// `argmin`; the two are kept consistent by construction.
#[derive(Debug, Clone)]
pub struct OptimizerReport {
    pub best_value: f64,
    pub argmin: Vec<f64>,
    /// Total update proposals across all starts.
    pub iters: usize,
    /// Whether the start that produced `argmin` stopped by tolerance rather
    /// than by exhausting its iteration cap.
    pub converged: bool,
}

fn start_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Floors every coordinate and renormalizes each simplex block in place.
pub fn project(x: &mut [f64], blocks: &[usize], floor: f64) {
    let mut o = 0;
    for &b in blocks {
        let blk = &mut x[o..o + b];
        let mut s = 0.0;
        for v in blk.iter_mut() {
            if !v.is_finite() || *v < floor {
                *v = floor;
            }
            s += *v;
        }
        for v in blk.iter_mut() {
            *v /= s;
        }
        o += b;
    }
}

fn dirichlet_flat(rng: &mut ChaCha12Rng, blocks: &[usize], floor: f64) -> Vec<f64> {
    let dim: usize = blocks.iter().sum();
    let mut x = vec![0.0; dim];
    for v in x.iter_mut() {
        let u: f64 = rng.random();
        *v = -(1.0 - u).ln();
    }
    project(&mut x, blocks, floor);
    x
}

fn central_gradient<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &[f64],
    blocks: &[usize],
    floor: f64,
    g: &mut [f64],
) {
    const H: f64 = 1e-6;
    let mut o = 0;
    for &b in blocks {
        if b < 2 {
            for j in o..o + b {
                g[j] = 0.0;
            }
            o += b;
            continue;
        }
        for j in o..o + b {
            let mut xp = x.to_vec();
            xp[j] += H;
            project(&mut xp[o..o + b], &[b], floor);
            let fp = f(&xp);
            let hb = H.min(x[j] * 0.5);
            let mut xm = x.to_vec();
            xm[j] -= hb;
            project(&mut xm[o..o + b], &[b], floor);
            let fm = f(&xm);
            g[j] = (fp - fm) / (H + hb);
        }
        o += b;
    }
}

/// Minimizes `f` over a product of probability simplexes with the block
/// dimensions in `blocks`, using exponentiated-gradient descent with
/// central-difference gradients.
///
/// Runs every warm start plus `cfg.starts` random restarts and returns the
/// best point seen anywhere, including the projected warm starts themselves,
/// so supplying a known-good point can never worsen the report. The whole
/// search is deterministic in `cfg.seed`.
pub fn minimize<F: Fn(&[f64]) -> f64>(
    f: F,
    blocks: &[usize],
    cfg: &OptimizerConfig,
    warm: &[Vec<f64>],
) -> Result<OptimizerReport> {
    let dim: usize = blocks.iter().sum();
    ensure(dim >= 1, "objective must have at least one coordinate")?;
    ensure(blocks.iter().all(|&b| b >= 1), "every block must be non-empty")?;
    ensure(cfg.floor > 0.0 && cfg.floor < 1e-3, "floor must lie in (0, 1e-3)")?;
    for w in warm {
        ensure(w.len() == dim, format!("warm start has {} coordinates, expected {dim}", w.len()))?;
    }

    let mut best_value = f64::INFINITY;
    let mut argmin: Vec<f64> = Vec::new();
    let mut best_converged = false;
    let mut total_iters = 0usize;

    let mut inits: Vec<Vec<f64>> = Vec::with_capacity(warm.len() + cfg.starts);
    for w in warm {
        let mut x = w.clone();
        project(&mut x, blocks, cfg.floor);
        inits.push(x);
    }
    for k in 0..cfg.starts {
        let mut rng = ChaCha12Rng::seed_from_u64(start_seed(cfg.seed, k as u64));
        inits.push(dirichlet_flat(&mut rng, blocks, cfg.floor));
    }

    let mut g = vec![0.0; dim];
    for x0 in inits {
        let mut x = x0;
        let mut fx = f(&x);
        if fx < best_value {
            best_value = fx;
            argmin = x.clone();
            best_converged = false;
        }
        if !fx.is_finite() {
            continue;
        }
        let mut step = cfg.step0;
        let mut streak = 0usize;
        let mut converged = false;
        let mut grad_fresh = false;
        for _ in 0..cfg.max_iters {
            total_iters += 1;
            if !grad_fresh {
                central_gradient(&f, &x, blocks, cfg.floor, &mut g);
                grad_fresh = true;
            }
            let mut xn = x.clone();
            let mut o = 0;
            for &b in blocks {
                let mean = g[o..o + b].iter().sum::<f64>() / b as f64;
                for j in o..o + b {
                    let e = (-step * (g[j] - mean)).clamp(-40.0, 40.0);
                    xn[j] *= e.exp();
                }
                o += b;
            }
            project(&mut xn, blocks, cfg.floor);
            let fn_ = f(&xn);
            if fn_ < fx {
                streak = if fx - fn_ < cfg.tol { streak + 1 } else { 0 };
                x = xn;
                fx = fn_;
                grad_fresh = false;
                step = (step * 1.25).min(cfg.step0);
                if fx < best_value {
                    best_value = fx;
                    argmin = x.clone();
                    best_converged = false;
                }
                if streak >= 3 {
                    converged = true;
                    break;
                }
            } else {
                step *= 0.5;
                if step < 1e-10 {
                    converged = true;
                    break;
                }
            }
        }
        if converged && fx <= best_value {
            best_converged = true;
        }
    }

    if argmin.is_empty() {
        return Err(Error::numerics("objective returned no finite value at any start"));
    }
    Ok(OptimizerReport { best_value, argmin, iters: total_iters, converged: best_converged })
}

/// Deterministic nested grid search over a product of simplexes with at most
/// four free coordinates in total.
///
/// Each level lays a 21-point lattice per free coordinate over the current
/// search box, evaluates all feasible mesh points plus the incumbent, and
/// shrinks the box around the winner, so the recorded best value never
/// increases from one level to the next.
pub fn grid_refine<F: Fn(&[f64]) -> f64>(
    f: F,
    blocks: &[usize],
    levels: usize,
) -> Result<OptimizerReport> {
    const POINTS: usize = 21;
    let free: usize = blocks.iter().map(|&b| b - 1).sum();
    ensure(free <= 4, format!("grid_refine supports at most 4 free coordinates, got {free}"))
        .map_err(|e| Error::guard(e.to_string()))?;
    ensure(levels >= 1, "levels must be >= 1")?;

    let assemble = |free_vals: &[f64]| -> Option<Vec<f64>> {
        let mut x = Vec::with_capacity(blocks.iter().sum());
        let mut k = 0;
        for &b in blocks {
            let mut s = 0.0;
            for _ in 0..b - 1 {
                let v = free_vals[k];
                k += 1;
                s += v;
                x.push(v);
            }
            if s > 1.0 + 1e-12 {
                return None;
            }
            x.push((1.0 - s).max(0.0));
        }
        Some(x)
    };

    let mut lo = vec![0.0; free];
    let mut hi = vec![1.0; free];
    let mut best_value = f64::INFINITY;
    let mut best_free = vec![0.0; free];
    let mut evals = 0usize;

    for level in 0..levels {
        let mut idx = vec![0usize; free];
        loop {
            let vals: Vec<f64> = (0..free)
                .map(|i| lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (POINTS - 1) as f64)
                .collect();
            if let Some(x) = assemble(&vals) {
                let v = f(&x);
                evals += 1;
                if v < best_value {
                    best_value = v;
                    best_free = vals;
                }
            }
            let mut d = 0;
            loop {
                if d == free {
                    break;
                }
                idx[d] += 1;
                if idx[d] < POINTS {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == free {
                break;
            }
            if free == 0 {
                break;
            }
        }
        if free == 0 {
            break;
        }
        if level + 1 < levels {
            for i in 0..free {
                let span = (hi[i] - lo[i]) / (POINTS - 1) as f64 * 2.0;
                lo[i] = (best_free[i] - span).max(0.0);
                hi[i] = (best_free[i] + span).min(1.0);
            }
        }
    }

    let argmin = assemble(&best_free)
        .ok_or_else(|| Error::numerics("grid incumbent fell outside the simplex"))?;
    Ok(OptimizerReport { best_value, argmin, iters: evals, converged: true })
}
