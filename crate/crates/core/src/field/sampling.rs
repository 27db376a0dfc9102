use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling resolution preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Low,
    #[default]
    Default,
    High,
}

impl Quality {
    pub fn level(self) -> usize {
        match self {
            Quality::Low => 0,
            Quality::Default => 1,
            Quality::High => 2,
        }
    }
}

impl std::str::FromStr for Quality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Quality::Low),
            "default" => Ok(Quality::Default),
            "high" => Ok(Quality::High),
            other => Err(Error::Config(format!("unknown quality `{other}`"))),
        }
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Deterministic point set in the closed unit ball.
///
/// `volume` is an equal-weight quadrature set (means are taken over it);
/// `shell` lies on the unit sphere and only sharpens sup/inf. Both are stored
/// as the center (volume only) followed by antipodal pairs `s, -s`, so the
/// sets are exactly symmetric under point reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSampler {
    dim: usize,
    level: usize,
    volume: Vec<f64>,
    shell: Vec<f64>,
}

impl BallSampler {
    pub fn new(dim: usize, quality: Quality) -> Result<Self> {
        Self::with_level(dim, quality.level())
    }

    /// Level 0, 1, 2 match the Low, Default, High presets; every extra level
    /// roughly doubles the resolution per direction.
    pub fn with_level(dim: usize, level: usize) -> Result<Self> {
        if level > 6 {
            return Err(Error::Config(format!("sampling level {level} too large")));
        }
        let (volume, shell) = match dim {
            1 => line_sets(level),
            2 => disk_sets(level),
            3 => ball3_sets(level),
            _ => {
                return Err(Error::Domain(format!(
                    "ball sampling implemented for d <= 3, got d = {dim}"
                )))
            }
        };
        Ok(Self {
            dim,
            level,
            volume,
            shell,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn refined(&self) -> Result<Self> {
        Self::with_level(self.dim, self.level + 1)
    }

    pub fn n_volume(&self) -> usize {
        self.volume.len() / self.dim
    }

    pub fn n_shell(&self) -> usize {
        self.shell.len() / self.dim
    }

    pub fn volume_points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.volume.chunks_exact(self.dim)
    }

    pub fn shell_points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.shell.chunks_exact(self.dim)
    }

    /// The same point sets under a fixed rigid rotation (`turn` selects one of
    /// a family of irrational angles). Symmetry and moments are unchanged; only
    /// where the directions sit moves, which exposes directional sampling bias.
    pub fn rotated(&self, turn: usize) -> Self {
        let t = (turn as f64 * GOLDEN).fract() + 0.1;
        let rot = |pts: &[f64]| -> Vec<f64> {
            match self.dim {
                2 => {
                    let (s, c) = (2.0 * PI * t).sin_cos();
                    pts.chunks_exact(2).flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect()
                }
                3 => {
                    let (sa, ca) = (2.0 * PI * t).sin_cos();
                    let (sb, cb) = (PI * (t * GOLDEN).fract()).sin_cos();
                    pts.chunks_exact(3)
                        .flat_map(|p| {
                            let (x, y) = (ca * p[0] - sa * p[1], sa * p[0] + ca * p[1]);
                            [x, cb * y - sb * p[2], sb * y + cb * p[2]]
                        })
                        .collect()
                }
                _ => pts.to_vec(),
            }
        };
        Self {
            dim: self.dim,
            level: self.level,
            volume: rot(&self.volume),
            shell: rot(&self.shell),
        }
    }

    /// Every point, volume first.
    pub fn all_points(&self) -> impl Iterator<Item = &[f64]> {
        self.volume_points().chain(self.shell_points())
    }
}

fn push_pair(out: &mut Vec<f64>, p: &[f64]) {
    out.extend_from_slice(p);
    out.extend(p.iter().map(|v| -v));
}

/// Cell midpoints of `43 * 3^level` equal cells of `[-1, 1]`; nested across levels.
fn line_sets(level: usize) -> (Vec<f64>, Vec<f64>) {
    let n = 43 * 3usize.pow(level as u32);
    let half = n / 2;
    let mut vol = vec![0.0];
    for k in 1..=half {
        let x = 2.0 * k as f64 / n as f64;
        vol.push(x);
        vol.push(-x);
    }
    (vol, vec![1.0, -1.0])
}

/// Center cell plus equal-area rings; every point carries area `pi / N`.
fn disk_sets(level: usize) -> (Vec<f64>, Vec<f64>) {
    let rings = 8 << level;
    let per_ring = 16 << level;
    let n_total = (1 + rings * per_ring) as f64;
    let inner = 1.0 / n_total;
    let width = (1.0 - inner) / rings as f64;
    let mut vol = vec![0.0, 0.0];
    for i in 0..rings {
        let rad = (inner + (i as f64 + 0.5) * width).sqrt();
        let offset = (i as f64 * GOLDEN).fract();
        for j in 0..per_ring / 2 {
            let th = 2.0 * PI * (j as f64 + offset) / per_ring as f64;
            push_pair(&mut vol, &[rad * th.cos(), rad * th.sin()]);
        }
    }
    let n_shell = 32 << level;
    let mut shell = Vec::with_capacity(2 * n_shell);
    for j in 0..n_shell / 2 {
        let th = 2.0 * PI * j as f64 / n_shell as f64;
        push_pair(&mut shell, &[th.cos(), th.sin()]);
    }
    (vol, shell)
}

/// Upper-hemisphere half of a Fibonacci lattice with `n` points.
fn fibonacci_half(n: usize, twist: f64) -> Vec<[f64; 3]> {
    (0..n / 2)
        .map(|k| {
            let z = 1.0 - (2 * k + 1) as f64 / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let th = 2.0 * PI * (k as f64 * GOLDEN + twist);
            [rho * th.cos(), rho * th.sin(), z]
        })
        .collect()
}

/// `n` area-spread directions in the open positive octant.
fn octant_bases(n: usize, twist: f64) -> Vec<[f64; 3]> {
    (0..n)
        .map(|k| {
            let z = (k as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let th = 0.5 * PI * ((k as f64 * GOLDEN + twist).fract() * 0.9 + 0.05);
            [rho * th.cos(), rho * th.sin(), z]
        })
        .collect()
}

/// Each base direction expands to its 3 cyclic permutations times 8 sign
/// patterns, which makes the second-moment tensor exactly isotropic.
fn ball3_sets(level: usize) -> (Vec<f64>, Vec<f64>) {
    let shells = 4 << level;
    let bases = (1 << level) + 1;
    let n_total = (1 + shells * bases * 24) as f64;
    let inner = 1.0 / n_total;
    let width = (1.0 - inner) / shells as f64;
    let mut vol = vec![0.0, 0.0, 0.0];
    for i in 0..shells {
        let (ua, ub) = (inner + i as f64 * width, inner + (i + 1) as f64 * width);
        // radius whose square is the mean of |y|^2 over the shell
        let rad = (0.6 * (ub.powf(5.0 / 3.0) - ua.powf(5.0 / 3.0)) / (ub - ua)).sqrt();
        for b in octant_bases(bases, (i as f64 * GOLDEN).fract()) {
            for rot in 0..3 {
                let d = [b[rot % 3], b[(rot + 1) % 3], b[(rot + 2) % 3]];
                for signs in 0..4 {
                    let sx = if signs & 1 == 0 { 1.0 } else { -1.0 };
                    let sy = if signs & 2 == 0 { 1.0 } else { -1.0 };
                    push_pair(&mut vol, &[rad * sx * d[0], rad * sy * d[1], rad * d[2]]);
                }
            }
        }
    }
    let mut shell = Vec::new();
    for d in fibonacci_half(64 << level, 0.0) {
        push_pair(&mut shell, &d);
    }
    (vol, shell)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sets_are_symmetric_and_inside() {
        for d in 1..=3 {
            for q in [Quality::Low, Quality::Default] {
                let s = BallSampler::new(d, q).unwrap();
                let v: Vec<&[f64]> = s.volume_points().collect();
                assert!(v[0].iter().all(|&t| t == 0.0));
                assert_eq!(v.len() % 2, 1);
                for pair in v[1..].chunks(2) {
                    assert!(pair[0].iter().zip(pair[1]).all(|(a, b)| *a == -*b));
                }
                for p in s.all_points() {
                    let r2: f64 = p.iter().map(|t| t * t).sum();
                    assert!(r2 <= 1.0 + 1e-12);
                }
                for p in s.shell_points() {
                    let r2: f64 = p.iter().map(|t| t * t).sum();
                    assert!((r2 - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn default_sizes() {
        assert_eq!(BallSampler::new(1, Quality::Default).unwrap().n_volume(), 129);
        assert_eq!(BallSampler::new(2, Quality::Default).unwrap().n_volume(), 513);
        assert_eq!(BallSampler::new(3, Quality::Default).unwrap().n_volume(), 577);
        assert!(BallSampler::new(4, Quality::Low).is_err());
    }

    #[test]
    fn rotation_keeps_symmetry_and_norms() {
        for d in 1..=3 {
            let s = BallSampler::new(d, Quality::Low).unwrap();
            let r = s.rotated(1);
            assert_eq!(r.n_volume(), s.n_volume());
            for (a, b) in s.all_points().zip(r.all_points()) {
                let na: f64 = a.iter().map(|t| t * t).sum();
                let nb: f64 = b.iter().map(|t| t * t).sum();
                assert!((na - nb).abs() < 1e-12);
            }
            let v: Vec<&[f64]> = r.volume_points().collect();
            for pair in v[1..].chunks(2) {
                assert!(pair[0].iter().zip(pair[1]).all(|(a, b)| *a == -*b));
            }
        }
    }

    #[test]
    fn line_sets_are_nested() {
        let a = BallSampler::with_level(1, 0).unwrap();
        let b = BallSampler::with_level(1, 1).unwrap();
        for p in a.volume_points() {
            assert!(b.volume_points().any(|q| (q[0] - p[0]).abs() < 1e-15));
        }
    }

    #[test]
    fn second_moments_close_to_uniform() {
        for (d, exact) in [(1usize, 1.0 / 3.0), (2, 0.5), (3, 0.6)] {
            let s = BallSampler::new(d, Quality::Default).unwrap();
            let m: f64 = s
                .volume_points()
                .map(|p| p.iter().map(|t| t * t).sum::<f64>())
                .sum::<f64>()
                / s.n_volume() as f64;
            assert!((m - exact).abs() < 0.01 * exact, "d={d} m={m}");
        }
    }
}
