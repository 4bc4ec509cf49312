mod common;

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use wz_core::{info_measures, JointQ};

/// Entropy of an arbitrary discrete weight vector (ignores zeros).
fn entropy(w: &[f64]) -> f64 {
    -w.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

fn random_joint(rng: &mut ChaCha12Rng) -> JointQ {
    let mut v: Vec<f64> = (0..16)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
    JointQ::new(2, 2, 2, 2, v).unwrap()
}

/// Collapses the joint onto a subset of the four axes; `keep` lists axis
/// indices in (u, x, y, z) order.
fn marginal(q: &JointQ, keep: &[usize]) -> Vec<f64> {
    let dims = [q.u_size, q.x_size, q.y_size, q.z_size];
    let size: usize = keep.iter().map(|&a| dims[a]).product();
    let mut out = vec![0.0; size];
    for u in 0..q.u_size {
        for x in 0..q.x_size {
            for y in 0..q.y_size {
                for z in 0..q.z_size {
                    let idx = [u, x, y, z];
                    let mut flat = 0;
                    for &a in keep {
                        flat = flat * dims[a] + idx[a];
                    }
                    out[flat] += q.q(u, x, y, z);
                }
            }
        }
    }
    out
}

#[test]
fn conditional_informations_match_entropy_arithmetic() {
    let src = common::dsbs();
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    for _ in 0..100 {
        let q = random_joint(&mut rng);
        let b = info_measures(&q, &src);

        // I(X; U | Y) = H(X, Y) + H(U, Y) - H(Y) - H(X, U, Y).
        let i_xu_y = entropy(&marginal(&q, &[1, 2])) + entropy(&marginal(&q, &[0, 2]))
            - entropy(&marginal(&q, &[2]))
            - entropy(&marginal(&q, &[0, 1, 2]));
        assert!((b.i_x_u_given_y - i_xu_y).abs() <= 1e-10, "I(X;U|Y) {} vs {}", b.i_x_u_given_y, i_xu_y);

        // I(X; Z | U, Y) = H(X,U,Y) + H(U,Y,Z) - H(U,Y) - H(all).
        let i_xz_uy = entropy(&marginal(&q, &[0, 1, 2])) + entropy(&marginal(&q, &[0, 2, 3]))
            - entropy(&marginal(&q, &[0, 2]))
            - entropy(&marginal(&q, &[0, 1, 2, 3]));
        assert!((b.i_x_z_given_uy - i_xz_uy).abs() <= 1e-10);

        // D(q_X || p_X) from its definition.
        let qx = marginal(&q, &[1]);
        let div: f64 = qx
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(x, &p)| p * (p / src.px(x)).ln())
            .sum();
        assert!((b.d_qx_px - div).abs() <= 1e-10);

        // E d(X, Z) directly.
        let qxz = marginal(&q, &[1, 3]);
        let ed: f64 = (0..2)
            .flat_map(|x| (0..2).map(move |z| (x, z)))
            .map(|(x, z)| qxz[x * 2 + z] * src.dist(x, z))
            .sum();
        assert!((b.exp_dist - ed).abs() <= 1e-12);

        // Total variation against the source joint.
        let qxy = marginal(&q, &[1, 2]);
        let tv: f64 = (0..2)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .map(|(x, y)| (qxy[x * 2 + y] - src.pxy(x, y)).abs())
            .sum();
        assert!((b.tv - tv).abs() <= 1e-12);
    }
}

#[test]
fn matched_source_joint_has_zero_divergences() {
    let src = common::dsbs();
    // q(u, x, y, z) with U constant, Z = y-decoded: q_XY = p_XY exactly.
    let mut v = vec![0.0; 8];
    for x in 0..2 {
        for y in 0..2 {
            v[(x * 2 + y) * 2 + y] = src.pxy(x, y);
        }
    }
    let q = JointQ::new(1, 2, 2, 2, v).unwrap();
    let b = info_measures(&q, &src);
    assert!(b.d_qx_px.abs() <= 1e-14);
    assert!(b.d_qyxu_pyx.abs() <= 1e-14);
    assert!(b.d_qxuy_pxy.abs() <= 1e-14);
    assert!(b.tv.abs() <= 1e-14);
    assert!(b.i_x_u_given_y.abs() <= 1e-14);
    assert!((b.exp_dist - 0.25).abs() <= 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn information_quantities_stay_in_range(raw in prop::collection::vec(1e-6..1.0f64, 16)) {
        let s: f64 = raw.iter().sum();
        let v: Vec<f64> = raw.iter().map(|&x| x / s).collect();
        let q = JointQ::new(2, 2, 2, 2, v).unwrap();
        let src = common::dsbs();
        let b = info_measures(&q, &src);
        // Conditional mutual informations are non-negative and bounded by
        // the alphabet entropy; divergences are non-negative.
        prop_assert!(b.i_x_u_given_y >= -1e-12);
        prop_assert!(b.i_x_u_given_y <= 2.0f64.ln() + 1e-12);
        prop_assert!(b.i_x_z_given_uy >= -1e-12);
        prop_assert!(b.d_qx_px >= -1e-12);
        prop_assert!(b.d_qyxu_pyx >= -1e-12);
        prop_assert!(b.d_qxuy_pxy >= -1e-12);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&b.tv));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&b.exp_dist));
    }

    #[test]
    fn joint_rejects_bad_mass(scale in 1.01..2.0f64) {
        let v: Vec<f64> = vec![scale / 16.0; 16];
        prop_assert!(JointQ::new(2, 2, 2, 2, v).is_err());
    }
}
