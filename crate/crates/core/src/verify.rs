//! Self-contained verification suite. Every property the library promises
//! is re-checked here at pinned sizes and tolerances, and the result is a
//! deterministic plain-text report: same source and seed, same bytes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{ensure, Result};
use crate::exponent::{
    build_omega_table, exponent_f_from_table, exponent_f_refined, g_inverse, kappa_n, mix_seed,
    omega_min, omega_of_q, rho_estimate, ExponentGrid, OmegaTable, TiltParams,
};
use crate::joint::JointQ;
use crate::lemmas::{markov_lemma_check, recursion_check, spectrum_lemma_check, QChoices};
use crate::optim::OptimizerConfig;
use crate::region::{
    compute_curve, mu_grid, r_tilde, sandwich_check, sandwich_constants, HyperplaneCurve,
    SupportMap, SANDWICH_TOL,
};
use crate::sim::{check_theorem_bound, g_n_exhaustive, optimal_decoder_for, CodingScheme};
use crate::source::SourceModel;

/// One verified property with its verdict and a short numeric summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Criterion {
    fn new(id: usize, name: &'static str, pass: bool, detail: String) -> Self {
        Criterion { id, name, pass, detail }
    }
}

/// Full suite outcome; `render` is stable byte-for-byte across runs.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub fingerprint: u64,
    pub seed: u64,
    pub criteria: Vec<Criterion>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("source fingerprint: {:016x}\n", self.fingerprint));
        out.push_str(&format!("seed: {}\n", self.seed));
        for c in &self.criteria {
            out.push_str(&format!(
                "{:>2} {} {:<34} {}\n",
                c.id,
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        let passed = self.criteria.iter().filter(|c| c.pass).count();
        out.push_str(&format!(
            "result: {} ({passed}/{} criteria)\n",
            if self.all_pass() { "PASS" } else { "FAIL" },
            self.criteria.len()
        ));
        out
    }
}

fn cfg(seed: u64, tag: u64, starts: usize, max_iters: usize) -> OptimizerConfig {
    OptimizerConfig { starts, max_iters, seed: mix_seed(seed, tag), ..Default::default() }
}

fn random_supported_joint(src: &SourceModel, u_size: usize, rng: &mut ChaCha12Rng) -> JointQ {
    let map = SupportMap::new(src, u_size);
    let mut coords: Vec<f64> = (0..map.dim())
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    let total: f64 = coords.iter().sum();
    for c in coords.iter_mut() {
        *c /= total;
    }
    JointQ::new(u_size, src.x_size, src.y_size, src.z_size, map.expand(&coords))
        .expect("expanded probe joint is a valid distribution")
}

fn random_encoder(xn: usize, m: usize, rng: &mut ChaCha12Rng) -> Vec<u32> {
    (0..xn).map(|_| rng.random_range(0..m as u32)).collect()
}

/// Criteria 1 and 2: derivative identities of the tilted functional and its
/// normalization/concavity in lambda, over seeded random probes.
fn derivative_criteria(src: &SourceModel, seed: u64) -> Result<(Criterion, Criterion)> {
    const H: f64 = 1e-4;
    let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 1));
    let mut worst_d1 = 0.0f64;
    let mut worst_d2 = 0.0f64;
    let mut worst_zero = 0.0f64;
    let mut worst_convexity = f64::NEG_INFINITY;
    for _ in 0..50 {
        let q = random_supported_joint(src, 2, &mut rng);
        let alpha = 0.05 + 0.95 * rng.random::<f64>();
        let mu = rng.random::<f64>();
        let lambda = 0.1 + 1.9 * rng.random::<f64>();
        let at = |l: f64| -> Result<f64> {
            Ok(omega_of_q(&q, src, &TiltParams::new(alpha, mu, l)?)?.value)
        };
        let eval = omega_of_q(&q, src, &TiltParams::new(alpha, mu, lambda)?)?;
        let plus = at(lambda + H)?;
        let minus = at(lambda - H)?;
        let cd1 = (plus - minus) / (2.0 * H);
        let cd2 = (plus - 2.0 * eval.value + minus) / (H * H);
        worst_d1 = worst_d1.max((cd1 - eval.d1).abs() / (1.0 + eval.d1.abs()));
        worst_d2 = worst_d2.max((cd2 - eval.d2).abs() / eval.d2.abs().max(1e-8));
        worst_zero = worst_zero.max(at(0.0)?.abs());
        // Concavity: second differences on a fixed lambda grid.
        let grid: Vec<f64> = (0..20).map(|k| 0.1 + 1.9 * k as f64 / 19.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&l| at(l)).collect::<Result<_>>()?;
        for w in vals.windows(3) {
            worst_convexity = worst_convexity.max(w[0] - 2.0 * w[1] + w[2]);
        }
    }
    let c1 = Criterion::new(
        1,
        "tilted derivative identities",
        worst_d1 <= 1e-6 && worst_d2 <= 1e-4,
        format!("max d1 err {worst_d1:.3e} (tol 1e-6); max d2 rel err {worst_d2:.3e} (tol 1e-4)"),
    );
    let c2 = Criterion::new(
        2,
        "zero-lambda normalization, concavity",
        worst_zero <= 1e-12 && worst_convexity <= 1e-8,
        format!(
            "max |Omega(0)| {worst_zero:.3e} (tol 1e-12); max second diff {worst_convexity:.3e} (tol 1e-8)"
        ),
    );
    Ok((c1, c2))
}

/// Criterion 3: the relaxed program divided by 4 alpha sandwiches the
/// hyperplane value at small alpha.
fn sandwich_criterion(src: &SourceModel, seed: u64) -> Result<Criterion> {
    let consts = sandwich_constants(src);
    let c = cfg(seed, 3, 5, 300);
    let mut worst = f64::NEG_INFINITY;
    let mut holds = true;
    for alpha in [consts.alpha0, consts.alpha0 / 2.0] {
        for mu in [0.25, 0.5, 1.0] {
            let rep = sandwich_check(src, alpha, mu, &c)?;
            holds &= rep.holds;
            worst = worst.max((rep.lower - rep.mid).max(rep.mid - rep.upper));
        }
    }
    Ok(Criterion::new(
        3,
        "relaxed-rate sandwich",
        holds,
        format!("6 (alpha, mu) pairs; worst overshoot {worst:.3e} (tol {SANDWICH_TOL:.0e})"),
    ))
}

/// Criterion 4: the tilted minimum dominates lambda R-tilde - rho lambda^2/2.
fn chain_criterion(src: &SourceModel, seed: u64) -> Result<Criterion> {
    let rho = rho_estimate(src, &cfg(seed, 40, 6, 250))?.value;
    let oc = cfg(seed, 41, 3, 250);
    let mut worst = f64::INFINITY;
    for (i, &alpha) in [0.9, 0.95, 0.99].iter().enumerate() {
        for (j, &mu) in [0.85, 0.9, 0.95].iter().enumerate() {
            let rt = r_tilde(src, alpha, mu, &cfg(seed, 42 + (3 * i + j) as u64, 4, 300), &[])?;
            let mut warm: Vec<JointQ> = vec![rt.q.clone()];
            for &lambda in &[0.1, 0.5, 1.0] {
                let params = TiltParams::new(alpha, mu, lambda)?;
                let om = omega_min(src, &params, &oc, &warm)?;
                let bound = lambda * rt.value - rho * lambda * lambda / 2.0;
                worst = worst.min(om.value - bound);
                warm.push(om.q);
            }
        }
    }
    Ok(Criterion::new(
        4,
        "tilted lower-bound chain",
        worst >= -1e-6,
        format!("27 (alpha, mu, lambda) combos; min margin {worst:.3e} (tol -1e-6)"),
    ))
}

/// Criterion 5: exponent geometry. Zero inside the region, strictly
/// positive outside it.
fn geometry_criterion(
    src: &SourceModel,
    table: &OmegaTable,
    curve: &HyperplaneCurve,
    seed: u64,
) -> Result<Criterion> {
    let oc = cfg(seed, 5, 2, 150);
    let rmax = (src.x_size as f64).ln();
    let dmax = (0..src.x_size)
        .flat_map(|x| (0..src.z_size).map(move |z| src.dist(x, z)))
        .fold(0.0f64, f64::max);
    let mut min_grid = f64::INFINITY;
    for i in 0..5 {
        for j in 0..5 {
            let r = rmax * i as f64 / 4.0;
            let d = dmax * j as f64 / 4.0;
            min_grid = min_grid.min(exponent_f_from_table(table, r, d)?.f_value);
        }
    }
    let mut probes: Vec<(f64, f64)> = vec![(rmax, dmax)];
    for p in &curve.points {
        if p.mu > 0.0 {
            probes.push((p.rate, p.dist));
        }
    }
    let mut worst_inside = 0.0f64;
    for &(r, d) in &probes {
        worst_inside = worst_inside.max(exponent_f_refined(src, table, r, d, &oc)?.f_value);
    }
    let origin = exponent_f_refined(src, table, 0.0, 0.0, &oc)?.f_value;
    // An outside probe: shrink the deepest tangent point toward the origin
    // and confirm its worst hyperplane slack is at least 0.05.
    let deep = curve
        .points
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("curve has points");
    let (pr, pd) = (deep.rate / 2.0, deep.dist / 2.0);
    let slack = curve
        .points
        .iter()
        .map(|p| p.value - (1.0 - p.mu) * pr - p.mu * pd)
        .fold(f64::NEG_INFINITY, f64::max);
    let outside = exponent_f_refined(src, table, pr, pd, &oc)?.f_value;
    let pass = min_grid >= 0.0
        && worst_inside <= 1e-3
        && origin > 0.0
        && slack >= 0.05
        && outside > 0.0;
    Ok(Criterion::new(
        5,
        "exponent geometry",
        pass,
        format!(
            "grid min {min_grid:.3e}; max at {} boundary probes {worst_inside:.3e} (tol 1e-3); origin {origin:.3e}; probe slack {slack:.3}, value {outside:.3e}",
            probes.len()
        ),
    ))
}

/// Criterion 6: every exhaustively enumerated scheme obeys the
/// correct-decoding bound P_c <= 5 exp(-n F) + 1e-9.
fn theorem_criterion(src: &SourceModel, table: &OmegaTable, seed: u64) -> Result<Criterion> {
    let oc = cfg(seed, 6, 2, 150);
    let mut worst = f64::INFINITY;
    let mut holds = true;
    for &(r, d) in &[(0.0, 0.1), (0.34, 0.05)] {
        let f = exponent_f_refined(src, table, r, d, &oc)?;
        for n in 1..=3 {
            let best = g_n_exhaustive(src, n, r, d)?;
            let chk = check_theorem_bound(&best, f.f_value, 1e-9);
            holds &= chk.holds;
            worst = worst.min(chk.margin);
        }
    }
    Ok(Criterion::new(
        6,
        "correct-decoding bound",
        holds,
        format!("n in 1..3 at two (R, Delta) probes; min bound margin {worst:.3e}"),
    ))
}

/// Criterion 7: time-sharing subadditivity of the exact finite-n exponents.
fn subadditivity_criterion(src: &SourceModel) -> Result<Criterion> {
    let mut worst = f64::INFINITY;
    let mut holds = true;
    for &(r, d) in &[(0.0, 0.25), (0.2, 0.3)] {
        let g: Vec<f64> =
            (1..=4).map(|n| Ok(g_n_exhaustive(src, n, r, d)?.g_n)).collect::<Result<_>>()?;
        for &(n, m) in &[(1usize, 1usize), (1, 2), (2, 2)] {
            let lhs = g[n + m - 1];
            let rhs = (n as f64 * g[n - 1] + m as f64 * g[m - 1]) / (n + m) as f64;
            holds &= lhs <= rhs + 1e-9;
            worst = worst.min(rhs - lhs);
        }
    }
    Ok(Criterion::new(
        7,
        "time-sharing subadditivity",
        holds,
        format!("blocklength splits up to 2+2; min slack {worst:.3e} (tol -1e-9)"),
    ))
}

/// Criterion 8: the four spectrum probability bounds for random reference
/// tables and the Markov-chain CMI for random encoders.
fn lemma_criterion(src: &SourceModel, seed: u64) -> Result<Criterion> {
    let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 8));
    let mut holds = true;
    let mut worst_gap = f64::INFINITY;
    for k in 0..20 {
        let enc = random_encoder(src.x_size * src.x_size, 2, &mut rng);
        let q = QChoices::random(src, 2, 2, mix_seed(seed, 80 + k))?;
        for eta in [0.05, 0.2] {
            let rep = spectrum_lemma_check(src, &enc, 2, eta, &q)?;
            for p in rep.probabilities {
                holds &= p <= rep.bound;
                worst_gap = worst_gap.min(rep.bound - p);
            }
        }
    }
    let mut worst_cmi = 0.0f64;
    for _ in 0..10 {
        for n in [2usize, 3] {
            let enc = random_encoder(src.x_size.pow(n as u32), 2, &mut rng);
            worst_cmi = worst_cmi.max(markov_lemma_check(src, &enc, n)?);
        }
    }
    holds &= worst_cmi <= 1e-12;
    Ok(Criterion::new(
        8,
        "spectrum bounds, Markov chain",
        holds,
        format!("min spectrum slack {worst_gap:.3e}; max CMI {worst_cmi:.3e} (tol 1e-12)"),
    ))
}

/// Criterion 9: the recursion factorizes the multi-letter functional and
/// its step joints certify the single-letter bound.
fn recursion_criterion(src: &SourceModel, seed: u64) -> Result<Criterion> {
    let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, 9));
    let oc = cfg(seed, 90, 2, 200);
    let mut worst_res = 0.0f64;
    let mut worst_margin = f64::INFINITY;
    for n in [1usize, 2] {
        let enc = random_encoder(src.x_size.pow(n as u32), 2, &mut rng);
        let dec = optimal_decoder_for(src, n, 2, &enc)?;
        let scheme = CodingScheme { n, m: 2, encoder: enc, decoder: dec };
        let rep = recursion_check(src, &scheme, None, 0.5, 0.5, 0.2, &oc)?;
        worst_res = worst_res.max(rep.lambda_product_residual);
        worst_margin = worst_margin.min(rep.prop2_margin);
    }
    Ok(Criterion::new(
        9,
        "recursion factorization",
        worst_res <= 1e-10 && worst_margin >= -1e-6,
        format!(
            "max residual {worst_res:.3e} (tol 1e-10); min margin {worst_margin:.3e} (tol -1e-6)"
        ),
    ))
}

/// Criterion 10: closed-form spot values.
fn spot_criterion(src: &SourceModel) -> Result<Criterion> {
    let kappa = kappa_n(1.0, 0.5, 1.0, 100)?;
    let kappa_err = (kappa - 0.6258).abs();
    let g_err = (g_inverse(1.5)? - 1.0).abs();
    // Constant auxiliary, constant reproduction z = 0: only the distortion
    // term of omega survives, so Omega has a one-line closed form.
    let params = TiltParams::new(0.5, 0.5, 1.0)?;
    let mut q = vec![0.0; src.x_size * src.y_size * src.z_size];
    for x in 0..src.x_size {
        for y in 0..src.y_size {
            q[(x * src.y_size + y) * src.z_size] = src.pxy(x, y);
        }
    }
    let point = JointQ::new(1, src.x_size, src.y_size, src.z_size, q)?;
    let omega = omega_of_q(&point, src, &params)?.value;
    let closed = -(0..src.x_size)
        .map(|x| src.px(x) * (-4.0 * 0.5 * 0.5 * 1.0 * src.dist(x, 0)).exp())
        .sum::<f64>()
        .ln();
    let omega_err = (omega - closed).abs();
    Ok(Criterion::new(
        10,
        "closed-form spot values",
        kappa_err <= 1e-3 && g_err <= 1e-12 && omega_err <= 1e-12,
        format!(
            "kappa {kappa:.4} (err {kappa_err:.3e}, tol 1e-3); |g(1.5)-1| {g_err:.3e}; point Omega err {omega_err:.3e}"
        ),
    ))
}

/// Criterion 11: re-run the cheap closed-form and derivative checks with the
/// same seed and require byte-identical details.
fn determinism_criterion(
    src: &SourceModel,
    seed: u64,
    first: &[Criterion],
) -> Result<Criterion> {
    let (c1, c2) = derivative_criteria(src, seed)?;
    let c10 = spot_criterion(src)?;
    let same = first
        .iter()
        .filter(|c| c.id == 1 || c.id == 2 || c.id == 10)
        .all(|c| match c.id {
            1 => *c == c1,
            2 => *c == c2,
            _ => *c == c10,
        });
    Ok(Criterion::new(
        11,
        "determinism",
        same,
        if same {
            "criteria 1, 2, 10 reproduced byte-identically".to_string()
        } else {
            "re-run details diverged".to_string()
        },
    ))
}

/// Runs the whole suite. Deterministic in (source, seed); restricted to
/// binary sources so exhaustive enumeration sizes stay fixed.
pub fn run_suite(src: &SourceModel, seed: u64) -> Result<SuiteReport> {
    ensure(
        src.x_size == 2 && src.y_size == 2 && src.z_size == 2,
        "the verification suite requires a binary source (2x2x2)",
    )?;
    let mut criteria = Vec::with_capacity(11);
    let (c1, c2) = derivative_criteria(src, seed)?;
    criteria.push(c1);
    criteria.push(c2);
    criteria.push(sandwich_criterion(src, seed)?);
    criteria.push(chain_criterion(src, seed)?);
    let table = build_omega_table(src, &ExponentGrid::reduced(), &cfg(seed, 50, 3, 120))?;
    let curve = compute_curve(src, &mu_grid(5), &cfg(seed, 51, 4, 300))?;
    criteria.push(geometry_criterion(src, &table, &curve, seed)?);
    criteria.push(theorem_criterion(src, &table, seed)?);
    criteria.push(subadditivity_criterion(src)?);
    criteria.push(lemma_criterion(src, seed)?);
    criteria.push(recursion_criterion(src, seed)?);
    criteria.push(spot_criterion(src)?);
    let c11 = determinism_criterion(src, seed, &criteria)?;
    criteria.push(c11);
    Ok(SuiteReport { fingerprint: src.fingerprint(), seed, criteria })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dsbs() -> SourceModel {
        SourceModel::binary_symmetric(0.25).unwrap()
    }

    #[test]
    fn derivative_criteria_pass_quickly() {
        let (c1, c2) = derivative_criteria(&dsbs(), 7).unwrap();
        assert!(c1.pass, "{}", c1.detail);
        assert!(c2.pass, "{}", c2.detail);
    }

    #[test]
    fn spot_values_pass() {
        let c = spot_criterion(&dsbs()).unwrap();
        assert!(c.pass, "{}", c.detail);
    }

    #[test]
    fn non_binary_sources_are_rejected() {
        let src = SourceModel::new(
            3,
            2,
            2,
            vec![0.2, 0.1, 0.2, 0.1, 0.2, 0.2],
            vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        assert!(run_suite(&src, 1).is_err());
    }

    #[test]
    fn render_is_stable() {
        let rep = SuiteReport {
            fingerprint: 0xabc,
            seed: 3,
            criteria: vec![Criterion::new(1, "sample", true, "ok".into())],
        };
        let text = rep.render();
        assert!(text.contains("source fingerprint: 0000000000000abc"));
        assert!(text.contains(" 1 PASS sample"));
        assert!(text.ends_with("result: PASS (1/1 criteria)\n"));
        assert_eq!(text, rep.render());
    }
}
