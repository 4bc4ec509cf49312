use crate::error::{ensure, Result};
use crate::source::{SourceModel, MASS_TOL};

/// A joint distribution over U x X x Y x Z with an auxiliary alphabet U of
/// arbitrary finite size.
///
/// Stored flat in row-major order (u, then x, then y, then z). The
/// single-letter optimizers fix |U| = |X||Y||Z| themselves (the sufficient
/// cardinality); the container accepts any size so that joints induced by
/// block schemes, whose auxiliary part ranges over messages and partial
/// sequences, can be evaluated too.
#[derive(Debug, Clone, PartialEq)]
pub struct JointQ {
    pub u_size: usize,
    pub x_size: usize,
    pub y_size: usize,
    pub z_size: usize,
    q: Vec<f64>,
}

/// Marginals of a `JointQ` needed by the information functionals. Computed in
/// one pass and reused by callers that evaluate several functionals per q.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub q_x: Vec<f64>,
    pub q_y: Vec<f64>,
    pub q_xy: Vec<f64>,
    pub q_xu: Vec<f64>,
    pub q_uy: Vec<f64>,
    pub q_xuy: Vec<f64>,
    pub q_uyz: Vec<f64>,
}

impl JointQ {
    pub fn new(u_size: usize, x_size: usize, y_size: usize, z_size: usize, q: Vec<f64>) -> Result<Self> {
        ensure(u_size >= 1, "u_size must be >= 1")?;
        ensure(
            q.len() == u_size * x_size * y_size * z_size,
            format!("q has {} entries, expected {}", q.len(), u_size * x_size * y_size * z_size),
        )?;
        for &v in &q {
            ensure(v.is_finite() && v >= 0.0, format!("q entry {v} is not a probability"))?;
        }
        let mass: f64 = q.iter().sum();
        ensure(
            (mass - 1.0).abs() <= MASS_TOL,
            format!("q sums to {mass}, not 1 within {MASS_TOL}"),
        )?;
        Ok(JointQ { u_size, x_size, y_size, z_size, q })
    }

    /// Builds the joint and additionally requires q_XY to vanish wherever the
    /// source joint does.
    pub fn new_supported(
        u_size: usize,
        x_size: usize,
        y_size: usize,
        z_size: usize,
        q: Vec<f64>,
        src: &SourceModel,
    ) -> Result<Self> {
        let j = JointQ::new(u_size, x_size, y_size, z_size, q)?;
        j.check_support(src)?;
        Ok(j)
    }

    /// Errors unless the (X, Y) marginal is absolutely continuous with
    /// respect to the source joint.
    pub fn check_support(&self, src: &SourceModel) -> Result<()> {
        ensure(
            self.x_size == src.x_size && self.y_size == src.y_size && self.z_size == src.z_size,
            "joint and source alphabet sizes differ",
        )?;
        let m = self.marginals();
        for x in 0..self.x_size {
            for y in 0..self.y_size {
                if src.pxy(x, y) == 0.0 {
                    ensure(
                        m.q_xy[x * self.y_size + y] == 0.0,
                        format!("q puts mass on (x={x}, y={y}) outside the source support"),
                    )?;
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn idx(&self, u: usize, x: usize, y: usize, z: usize) -> usize {
        ((u * self.x_size + x) * self.y_size + y) * self.z_size + z
    }

    #[inline]
    pub fn q(&self, u: usize, x: usize, y: usize, z: usize) -> f64 {
        self.q[self.idx(u, x, y, z)]
    }

    pub fn raw(&self) -> &[f64] {
        &self.q
    }

    pub fn marginals(&self) -> Marginals {
        let (us, xs, ys, zs) = (self.u_size, self.x_size, self.y_size, self.z_size);
        let mut m = Marginals {
            q_x: vec![0.0; xs],
            q_y: vec![0.0; ys],
            q_xy: vec![0.0; xs * ys],
            q_xu: vec![0.0; xs * us],
            q_uy: vec![0.0; us * ys],
            q_xuy: vec![0.0; xs * us * ys],
            q_uyz: vec![0.0; us * ys * zs],
        };
        let mut i = 0;
        for u in 0..us {
            for x in 0..xs {
                for y in 0..ys {
                    for z in 0..zs {
                        let v = self.q[i];
                        i += 1;
                        if v == 0.0 {
                            continue;
                        }
                        m.q_x[x] += v;
                        m.q_y[y] += v;
                        m.q_xy[x * ys + y] += v;
                        m.q_xu[x * us + u] += v;
                        m.q_uy[u * ys + y] += v;
                        m.q_xuy[(x * us + u) * ys + y] += v;
                        m.q_uyz[(u * ys + y) * zs + z] += v;
                    }
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(u: usize, x: usize, y: usize, z: usize) -> JointQ {
        let n = u * x * y * z;
        JointQ::new(u, x, y, z, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn marginals_sum_to_one() {
        let j = uniform(3, 2, 2, 2);
        let m = j.marginals();
        assert!((m.q_x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((m.q_xuy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((m.q_uyz.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accepts_auxiliary_larger_than_sufficient() {
        let n = 9 * 2 * 2 * 2;
        let j = JointQ::new(9, 2, 2, 2, vec![1.0 / n as f64; n]).unwrap();
        assert_eq!(j.u_size, 9);
    }

    #[test]
    fn support_check_flags_escaping_mass() {
        let src = SourceModel::new(2, 2, 2, vec![0.5, 0.0, 0.0, 0.5], vec![0.0, 1.0, 1.0, 0.0])
            .unwrap();
        let j = uniform(1, 2, 2, 2);
        assert!(j.check_support(&src).is_err());
        let mut q = vec![0.0; 8];
        q[j.idx(0, 0, 0, 0)] = 0.5;
        q[j.idx(0, 1, 1, 1)] = 0.5;
        let j = JointQ::new(1, 2, 2, 2, q).unwrap();
        assert!(j.check_support(&src).is_ok());
    }
}
