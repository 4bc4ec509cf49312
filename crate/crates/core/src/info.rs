use crate::joint::JointQ;
use crate::source::SourceModel;

/// Exact information functionals of a joint q relative to a source model.
///
/// All quantities are in nats. Divergences are +inf when q escapes the
/// support of the reference measure; they are never NaN.
#[derive(Debug, Clone, Copy)]
pub struct InfoBundle {
    /// I_q(X; U | Y).
    pub i_x_u_given_y: f64,
    /// I_q(X; Z | U, Y).
    pub i_x_z_given_uy: f64,
    /// D(q_X || p_X).
    pub d_qx_px: f64,
    /// D(q_{Y|XU} || p_{Y|X} | q_{XU}).
    pub d_qyxu_pyx: f64,
    /// D(q_{X|UY} || p_{X|Y} | q_{UY}).
    pub d_qxuy_pxy: f64,
    /// E_q d(X, Z).
    pub exp_dist: f64,
    /// L1 distance between q_XY and the source joint, in [0, 2].
    pub tv: f64,
}

/// Adds w * ln(num / den) with the conventions 0 * ln(.) = 0 and
/// w > 0, den = 0 => +inf.
#[inline]
fn acc(total: &mut f64, w: f64, num: f64, den: f64) {
    if w <= 0.0 {
        return;
    }
    if den <= 0.0 || den.is_nan() {
        *total = f64::INFINITY;
        return;
    }
    *total += w * (num / den).ln();
}

/// Computes every functional in `InfoBundle` by exact enumeration.
pub fn info_measures(q: &JointQ, src: &SourceModel) -> InfoBundle {
    let (us, xs, ys, zs) = (q.u_size, q.x_size, q.y_size, q.z_size);
    let m = q.marginals();

    let mut i_x_u_given_y = 0.0;
    let mut d_qyxu_pyx = 0.0;
    let mut d_qxuy_pxy = 0.0;
    for x in 0..xs {
        for u in 0..us {
            for y in 0..ys {
                let w = m.q_xuy[(x * us + u) * ys + y];
                if w == 0.0 {
                    continue;
                }
                let quy = m.q_uy[u * ys + y];
                let qxy = m.q_xy[x * ys + y];
                let qy = m.q_y[y];
                acc(&mut i_x_u_given_y, w, w * qy, qxy * quy);
                acc(&mut d_qyxu_pyx, w, w / m.q_xu[x * us + u], src.p_y_given_x(y, x));
                let pxgy = if src.py(y) > 0.0 { src.p_x_given_y(x, y) } else { 0.0 };
                acc(&mut d_qxuy_pxy, w, w / quy, pxgy);
            }
        }
    }

    let mut i_x_z_given_uy = 0.0;
    let mut exp_dist = 0.0;
    for u in 0..us {
        for x in 0..xs {
            for y in 0..ys {
                for z in 0..zs {
                    let w = q.q(u, x, y, z);
                    if w == 0.0 {
                        continue;
                    }
                    let quy = m.q_uy[u * ys + y];
                    let qxuy = m.q_xuy[(x * us + u) * ys + y];
                    let quyz = m.q_uyz[(u * ys + y) * zs + z];
                    acc(&mut i_x_z_given_uy, w, w * quy, qxuy * quyz);
                    exp_dist += w * src.dist(x, z);
                }
            }
        }
    }

    let mut d_qx_px = 0.0;
    for x in 0..xs {
        acc(&mut d_qx_px, m.q_x[x], m.q_x[x], src.px(x));
    }

    let mut tv = 0.0;
    for x in 0..xs {
        for y in 0..ys {
            tv += (m.q_xy[x * ys + y] - src.pxy(x, y)).abs();
        }
    }

    InfoBundle { i_x_u_given_y, i_x_z_given_uy, d_qx_px, d_qyxu_pyx, d_qxuy_pxy, exp_dist, tv }
}

/// Kullback-Leibler divergence between two distributions given as slices.
pub fn kl_divergence(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&ai, &bi) in a.iter().zip(b) {
        acc(&mut d, ai, ai, bi);
    }
    d
}

/// L1 distance between two distributions given as slices.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(ai, bi)| (ai - bi).abs()).sum()
}
