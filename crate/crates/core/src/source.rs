use serde::Deserialize;

use crate::error::{ensure, Error, Result};

/// Tolerance for probability mass normalization checks.
pub const MASS_TOL: f64 = 1e-12;

/// A finite memoryless source pair (X, Y) with a per-letter distortion
/// measure d(x, z) on reproductions Z.
///
/// `pxy` is the joint law of one source letter, row index x, column index y.
/// `dist` holds d(x, z), row index x, column index z. Marginals and channel
/// conditionals are derived once at construction. Conditional rows whose
/// conditioning event has zero mass are stored as NaN and must not be read;
/// all consumers weight them by a zero probability first.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub x_size: usize,
    pub y_size: usize,
    pub z_size: usize,
    pxy: Vec<f64>,
    dist: Vec<f64>,
    d_max: f64,
    p_x: Vec<f64>,
    p_y: Vec<f64>,
    p_y_given_x: Vec<f64>,
    p_x_given_y: Vec<f64>,
}

#[derive(Deserialize)]
struct SourceFile {
    x_size: usize,
    y_size: usize,
    z_size: usize,
    pxy: Vec<Vec<f64>>,
    dist: Vec<Vec<f64>>,
}

impl SourceModel {
    /// Builds a model from a flat joint table (row-major in x, then y) and a
    /// flat distortion table (row-major in x, then z).
    pub fn new(
        x_size: usize,
        y_size: usize,
        z_size: usize,
        pxy: Vec<f64>,
        dist: Vec<f64>,
    ) -> Result<Self> {
        ensure(x_size >= 1 && y_size >= 1 && z_size >= 1, "alphabet sizes must be >= 1")?;
        ensure(
            pxy.len() == x_size * y_size,
            format!("pxy has {} entries, expected {}", pxy.len(), x_size * y_size),
        )?;
        ensure(
            dist.len() == x_size * z_size,
            format!("dist has {} entries, expected {}", dist.len(), x_size * z_size),
        )?;
        for &v in &pxy {
            ensure(v.is_finite() && v >= 0.0, format!("pxy entry {v} is not a probability"))?;
        }
        let mass: f64 = pxy.iter().sum();
        ensure(
            (mass - 1.0).abs() <= MASS_TOL,
            format!("pxy sums to {mass}, not 1 within {MASS_TOL}"),
        )?;
        for &v in &dist {
            ensure(v.is_finite() && v >= 0.0, format!("dist entry {v} is not a valid distortion"))?;
        }

        let d_max = dist.iter().cloned().fold(0.0, f64::max);
        let mut p_x = vec![0.0; x_size];
        let mut p_y = vec![0.0; y_size];
        for x in 0..x_size {
            for y in 0..y_size {
                let v = pxy[x * y_size + y];
                p_x[x] += v;
                p_y[y] += v;
            }
        }
        let mut p_y_given_x = vec![f64::NAN; x_size * y_size];
        for x in 0..x_size {
            if p_x[x] > 0.0 {
                for y in 0..y_size {
                    p_y_given_x[x * y_size + y] = pxy[x * y_size + y] / p_x[x];
                }
            }
        }
        let mut p_x_given_y = vec![f64::NAN; x_size * y_size];
        for y in 0..y_size {
            if p_y[y] > 0.0 {
                for x in 0..x_size {
                    p_x_given_y[x * y_size + y] = pxy[x * y_size + y] / p_y[y];
                }
            }
        }

        Ok(SourceModel { x_size, y_size, z_size, pxy, dist, d_max, p_x, p_y, p_y_given_x, p_x_given_y })
    }

    /// Parses the JSON schema {"x_size", "y_size", "z_size", "pxy", "dist"}
    /// with `pxy` as an x-by-y array of rows and `dist` as x-by-z.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let f: SourceFile =
            serde_json::from_str(text).map_err(|e| Error::Io(format!("bad source JSON: {e}")))?;
        ensure(f.pxy.len() == f.x_size, "pxy must have x_size rows")?;
        ensure(
            f.pxy.iter().all(|r| r.len() == f.y_size),
            "every pxy row must have y_size entries",
        )?;
        ensure(f.dist.len() == f.x_size, "dist must have x_size rows")?;
        ensure(
            f.dist.iter().all(|r| r.len() == f.z_size),
            "every dist row must have z_size entries",
        )?;
        SourceModel::new(
            f.x_size,
            f.y_size,
            f.z_size,
            f.pxy.into_iter().flatten().collect(),
            f.dist.into_iter().flatten().collect(),
        )
    }

    /// Doubly symmetric binary source: X uniform on {0,1}, Y a crossover-`p`
    /// observation of X, Hamming distortion with binary reproduction.
    pub fn binary_symmetric(p: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&p), "crossover probability must lie in [0,1]")?;
        let q = 1.0 - p;
        SourceModel::new(
            2,
            2,
            2,
            vec![q / 2.0, p / 2.0, p / 2.0, q / 2.0],
            vec![0.0, 1.0, 1.0, 0.0],
        )
    }

    pub fn pxy(&self, x: usize, y: usize) -> f64 {
        self.pxy[x * self.y_size + y]
    }

    pub fn dist(&self, x: usize, z: usize) -> f64 {
        self.dist[x * self.z_size + z]
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn px(&self, x: usize) -> f64 {
        self.p_x[x]
    }

    pub fn py(&self, y: usize) -> f64 {
        self.p_y[y]
    }

    /// P{Y=y | X=x}; NaN when px(x) = 0.
    pub fn p_y_given_x(&self, y: usize, x: usize) -> f64 {
        self.p_y_given_x[x * self.y_size + y]
    }

    /// P{X=x | Y=y}; NaN when py(y) = 0.
    pub fn p_x_given_y(&self, x: usize, y: usize) -> f64 {
        self.p_x_given_y[x * self.y_size + y]
    }

    /// Stable 64-bit fingerprint of the model for provenance headers.
    ///
    /// FNV-1a over the alphabet sizes and the raw bit patterns of `pxy` and
    /// `dist`, so any observable change to the model changes the digest.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        };
        for s in [self.x_size, self.y_size, self.z_size] {
            eat(&(s as u64).to_le_bytes());
        }
        for v in self.pxy.iter().chain(self.dist.iter()) {
            eat(&v.to_bits().to_le_bytes());
        }
        h
    }
}

/// Loads a source model from a JSON file on disk.
pub fn load_source(path: impl AsRef<std::path::Path>) -> Result<SourceModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    SourceModel::from_json_str(&text)
}
