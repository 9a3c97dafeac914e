use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::rng::seeded;

/// Lowest density of the non-uniform fields.
const FLOOR: f64 = 0.01;
/// Random features in the squared-exponential surrogate.
const RBF_FEATURES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    Uniform,
    Bimodal,
    /// Smooth random field: a low-rank random-feature sample of a
    /// squared-exponential kernel.
    RbfSampled,
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DensityKind::Uniform => "uniform",
            DensityKind::Bimodal => "bimodal",
            DensityKind::RbfSampled => "rbf",
        })
    }
}

impl FromStr for DensityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "bimodal" => Ok(Self::Bimodal),
            "rbf" | "rbf-sampled" => Ok(Self::RbfSampled),
            other => Err(Error::Config(format!("unknown density kind `{other}`"))),
        }
    }
}

/// Nonnegative information density per grid cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub kind: DensityKind,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Builds a density field. Identical arguments give identical fields.
///
/// - uniform: ρ ≡ 1
/// - bimodal: two unit-peak isotropic Gaussians (σ = grid/6) at seeded
///   centers, plus a 0.01 floor
/// - rbf: squared-exponential sample (length-scale grid/5) rescaled to [0.01, 1]
pub fn density_field(kind: DensityKind, width: usize, height: usize, seed: u64) -> DensityField {
    let mut rng = seeded(seed);
    let extent = width.max(height) as f64;
    let cells = (0..height).flat_map(|y| (0..width).map(move |x| (x as f64, y as f64)));
    let values = match kind {
        DensityKind::Uniform => vec![1.0; width * height],
        DensityKind::Bimodal => {
            let sigma = extent / 6.0;
            let centers: Vec<(f64, f64)> = (0..2)
                .map(|_| (rng.random::<f64>() * width as f64, rng.random::<f64>() * height as f64))
                .collect();
            cells
                .map(|(x, y)| {
                    FLOOR
                        + centers
                            .iter()
                            .map(|(cx, cy)| {
                                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                                (-d2 / (2.0 * sigma * sigma)).exp()
                            })
                            .sum::<f64>()
                })
                .collect()
        }
        DensityKind::RbfSampled => {
            let length = extent / 5.0;
            let freq = Normal::new(0.0, 1.0 / length).expect("positive scale");
            let unit = Normal::new(0.0, 1.0).expect("positive scale");
            let features: Vec<(f64, f64, f64, f64)> = (0..RBF_FEATURES)
                .map(|_| {
                    (
                        freq.sample(&mut rng),
                        freq.sample(&mut rng),
                        rng.random::<f64>() * 2.0 * PI,
                        unit.sample(&mut rng),
                    )
                })
                .collect();
            let scale = (2.0 / RBF_FEATURES as f64).sqrt();
            let raw: Vec<f64> = cells
                .map(|(x, y)| {
                    scale
                        * features
                            .iter()
                            .map(|(wx, wy, b, a)| a * (wx * x + wy * y + b).cos())
                            .sum::<f64>()
                })
                .collect();
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < 1e-12 {
                vec![1.0; raw.len()]
            } else {
                raw.iter()
                    .map(|v| FLOOR + (1.0 - FLOOR) * (v - lo) / (hi - lo))
                    .collect()
            }
        }
    };
    DensityField {
        kind,
        width,
        height,
        seed,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mass() {
        assert_eq!(density_field(DensityKind::Uniform, 30, 30, 0).total(), 900.0);
    }

    #[test]
    fn bimodal_peak_is_bounded() {
        for seed in 0..20 {
            let f = density_field(DensityKind::Bimodal, 30, 30, seed);
            let max = f.values.iter().copied().fold(0.0, f64::max);
            assert!(max <= 2.0 + FLOOR);
            assert!(f.values.iter().all(|v| *v >= FLOOR));
        }
    }

    #[test]
    fn rbf_range_and_determinism() {
        let a = density_field(DensityKind::RbfSampled, 20, 15, 4);
        let b = density_field(DensityKind::RbfSampled, 20, 15, 4);
        assert_eq!(a, b);
        let lo = a.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.values.iter().copied().fold(0.0, f64::max);
        assert!((lo - FLOOR).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert_ne!(a, density_field(DensityKind::RbfSampled, 20, 15, 5));
    }

    #[test]
    fn parses_kinds() {
        for k in [DensityKind::Uniform, DensityKind::Bimodal, DensityKind::RbfSampled] {
            assert_eq!(k.to_string().parse::<DensityKind>().unwrap(), k);
        }
        assert!("gp".parse::<DensityKind>().is_err());
    }
}
