//! Fourier-feature input and its closed-form geometric transform.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, format_err, Result};
use crate::filter::fmt17;
use crate::map::FeatureMap;

/// Center of the canvas, the pivot of every rotation.
pub const CANVAS_CENTER: [f64; 2] = [0.5, 0.5];

/// Fixed planar waves `sin(2 pi (f . x + phase))`, one per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatureBank {
    pub seed: u64,
    pub band_fc: f64,
    pub freqs: Vec<[f64; 2]>,
    pub phases: Vec<f64>,
}

/// Frequencies uniform in the disc of radius `band_fc`, phases uniform in [0, 1).
pub fn sample_bank(channels: usize, band_fc: f64, seed: u64) -> Result<FourierFeatureBank> {
    if channels == 0 {
        return domain("a Fourier bank needs at least one channel");
    }
    if !(band_fc > 0.0 && band_fc.is_finite()) {
        return domain(format!("band limit must be positive, got {band_fc}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut freqs = Vec::with_capacity(channels);
    let mut phases = Vec::with_capacity(channels);
    for _ in 0..channels {
        let r = band_fc * rng.random::<f64>().sqrt();
        let theta = TAU * rng.random::<f64>();
        freqs.push([r * theta.cos(), r * theta.sin()]);
        phases.push(rng.random::<f64>());
    }
    Ok(FourierFeatureBank { seed, band_fc, freqs, phases })
}

impl FourierFeatureBank {
    pub fn channels(&self) -> usize {
        self.freqs.len()
    }

    /// Frequencies and phases after moving the content by `g`.
    pub fn transformed(&self, g: &RigidTransform) -> (Vec<[f64; 2]>, Vec<f64>) {
        let (s, c) = g.angle.sin_cos();
        let shifted = [CANVAS_CENTER[0] + g.translation[0], CANVAS_CENTER[1] + g.translation[1]];
        self.freqs
            .iter()
            .zip(&self.phases)
            .map(|(f, &p)| {
                let fr = [c * f[0] - s * f[1], s * f[0] + c * f[1]];
                let phase = p + f[0] * CANVAS_CENTER[0] + f[1] * CANVAS_CENTER[1]
                    - fr[0] * shifted[0]
                    - fr[1] * shifted[1];
                (fr, phase)
            })
            .unzip()
    }

    /// Continuous value of channel `c` at `(x, y)` after transform `g`.
    pub fn evaluate(&self, g: &RigidTransform, c: usize, x: f64, y: f64) -> f64 {
        let p = g.inverse().apply([x, y]);
        (TAU * (self.freqs[c][0] * p[0] + self.freqs[c][1] * p[1] + self.phases[c])).sin()
    }

    pub fn to_record(&self) -> String {
        let mut s = format!("seed {}\nband_fc {}\nchannels {}\n", self.seed, fmt17(self.band_fc), self.channels());
        for (f, p) in self.freqs.iter().zip(&self.phases) {
            let _ = writeln!(s, "{} {} {}", fmt17(f[0]), fmt17(f[1]), fmt17(*p));
        }
        s
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| crate::Error::Format(format!("missing {key}")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => format_err(format!("expected `{key}`, found `{line}`")),
            }
        };
        let num = |v: String| v.parse::<f64>().map_err(|e| crate::Error::Format(format!("{v}: {e}")));
        let seed = header("seed")?.parse().map_err(|e| crate::Error::Format(format!("seed: {e}")))?;
        let band_fc = num(header("band_fc")?)?;
        let channels: usize = header("channels")?
            .parse()
            .map_err(|e| crate::Error::Format(format!("channels: {e}")))?;
        let mut freqs = Vec::with_capacity(channels);
        let mut phases = Vec::with_capacity(channels);
        for line in lines {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| num(t.to_string()))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return format_err(format!("expected `fx fy phase`, found `{line}`"));
            }
            freqs.push([v[0], v[1]]);
            phases.push(v[2]);
        }
        if freqs.len() != channels {
            return format_err(format!("header promises {channels} channels, found {}", freqs.len()));
        }
        Ok(FourierFeatureBank { seed, band_fc, freqs, phases })
    }
}

/// Raw four-component transform `(r_c, r_s, t_x, t_y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform2D {
    pub rc: f64,
    pub rs: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Transform2D {
    pub const IDENTITY: Transform2D = Transform2D { rc: 1.0, rs: 0.0, tx: 0.0, ty: 0.0 };

    pub fn new(rc: f64, rs: f64, tx: f64, ty: f64) -> Self {
        Transform2D { rc, rs, tx, ty }
    }

    pub fn from_rigid(g: &RigidTransform) -> Self {
        let (s, c) = g.angle.sin_cos();
        Transform2D { rc: c, rs: s, tx: g.translation[0], ty: g.translation[1] }
    }

    /// Divides all four components by the norm of the rotation part.
    pub fn normalize(&self) -> Result<RigidTransform> {
        let norm = self.rc.hypot(self.rs);
        if !(norm > 0.0) || !norm.is_finite() {
            return domain("rotation part of the transform must be non-zero");
        }
        Ok(RigidTransform {
            angle: self.rs.atan2(self.rc),
            translation: [self.tx / norm, self.ty / norm],
        })
    }
}

/// Rotation by `angle` about the canvas center, followed by `translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub angle: f64,
    pub translation: [f64; 2],
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform { angle: 0.0, translation: [0.0, 0.0] };

    pub fn translation(dx: f64, dy: f64) -> Self {
        RigidTransform { angle: 0.0, translation: [dx, dy] }
    }

    pub fn rotation(angle: f64) -> Self {
        RigidTransform { angle, translation: [0.0, 0.0] }
    }

    pub fn degrees(&self) -> f64 {
        self.angle * 180.0 / PI
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let d = [p[0] - CANVAS_CENTER[0], p[1] - CANVAS_CENTER[1]];
        [
            c * d[0] - s * d[1] + CANVAS_CENTER[0] + self.translation[0],
            s * d[0] + c * d[1] + CANVAS_CENTER[1] + self.translation[1],
        ]
    }

    /// `then` applied after `self`.
    pub fn then(&self, then: &RigidTransform) -> RigidTransform {
        let (s, c) = then.angle.sin_cos();
        let t = self.translation;
        RigidTransform {
            angle: self.angle + then.angle,
            translation: [
                c * t[0] - s * t[1] + then.translation[0],
                s * t[0] + c * t[1] + then.translation[1],
            ],
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let (s, c) = (-self.angle).sin_cos();
        let t = self.translation;
        RigidTransform { angle: -self.angle, translation: [-(c * t[0] - s * t[1]), -(s * t[0] + c * t[1])] }
    }
}

/// Evaluates the transformed bank at the sample points of the extended canvas.
pub fn synthesize_input(
    bank: &FourierFeatureBank,
    transform: &Transform2D,
    rate: usize,
    margin: usize,
) -> Result<FeatureMap> {
    let g = transform.normalize()?;
    synthesize_rigid(bank, &g, rate, margin)
}

/// [`synthesize_input`] for an already normalized transform.
pub fn synthesize_rigid(bank: &FourierFeatureBank, g: &RigidTransform, rate: usize, margin: usize) -> Result<FeatureMap> {
    if (rate as f64) < 2.0 * bank.band_fc {
        return domain(format!(
            "rate {rate} cannot represent frequencies up to {}",
            bank.band_fc
        ));
    }
    let (freqs, phases) = bank.transformed(g);
    Ok(FeatureMap::from_fn(bank.channels(), rate, margin, |c, y, x| {
        (TAU * (freqs[c][0] * x + freqs[c][1] * y + phases[c])).sin()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bank_is_deterministic_and_in_disc() {
        let a = sample_bank(64, 2.0, 5).unwrap();
        assert_eq!(a, sample_bank(64, 2.0, 5).unwrap());
        assert_ne!(a, sample_bank(64, 2.0, 6).unwrap());
        assert!(a.freqs.iter().all(|f| f[0].hypot(f[1]) <= 2.0));
        assert!(a.phases.iter().all(|&p| (0.0..1.0).contains(&p)));
        assert!(sample_bank(0, 2.0, 5).is_err());
    }

    #[test]
    fn second_moment_of_uniform_disc() {
        let bank = sample_bank(100_000, 2.0, 1).unwrap();
        let m2 = bank.freqs.iter().map(|f| f[0] * f[0] + f[1] * f[1]).sum::<f64>() / 1e5;
        assert!((m2 / 2.0 - 1.0).abs() < 0.02, "{m2}");
    }

    #[test]
    fn normalization_examples() {
        let id = Transform2D::IDENTITY.normalize().unwrap();
        assert_eq!(id, RigidTransform::IDENTITY);
        let q = Transform2D::new(0.0, 2.0, 0.0, 0.0).normalize().unwrap();
        assert_relative_eq!(q.degrees(), 90.0, epsilon = 1e-12);
        let a = Transform2D::new(0.3, 0.4, 0.1, 0.2).normalize().unwrap();
        let b = Transform2D::new(3.0, 4.0, 0.1, 0.2).normalize().unwrap();
        assert_relative_eq!(a.angle, b.angle, epsilon = 1e-15);
        assert!(Transform2D::new(0.0, 0.0, 1.0, 0.0).normalize().is_err());
    }

    #[test]
    fn translation_matches_continuous_shift() {
        let bank = sample_bank(4, 2.0, 3).unwrap();
        let moved = synthesize_input(&bank, &Transform2D::new(1.0, 0.0, 0.13, -0.07), 16, 2).unwrap();
        for c in 0..4 {
            for y in 0..moved.size() {
                for x in 0..moved.size() {
                    let (px, py) = (moved.position(x) - 0.13, moved.position(y) + 0.07);
                    let f = bank.freqs[c];
                    let want = (TAU * (f[0] * px + f[1] * py + bank.phases[c])).sin();
                    assert!((moved.get(c, y, x) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn composition_matches_matrix_oracle() {
        let g1 = RigidTransform { angle: 0.4, translation: [0.1, -0.2] };
        let g2 = RigidTransform { angle: -1.1, translation: [0.05, 0.3] };
        let g = g1.then(&g2);
        // Homogeneous 3x3 matrices about the canvas center.
        let mat = |t: &RigidTransform| {
            let (s, c) = t.angle.sin_cos();
            let [cx, cy] = CANVAS_CENTER;
            [
                [c, -s, cx - c * cx + s * cy + t.translation[0]],
                [s, c, cy - s * cx - c * cy + t.translation[1]],
                [0.0, 0.0, 1.0],
            ]
        };
        let (a, b) = (mat(&g2), mat(&g1));
        let mut prod = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                prod[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        let m = mat(&g);
        for i in 0..2 {
            for j in 0..3 {
                assert!((m[i][j] - prod[i][j]).abs() < 1e-14);
            }
        }
        let bank = sample_bank(3, 2.0, 9).unwrap();
        let direct = synthesize_rigid(&bank, &g, 16, 1).unwrap();
        for c in 0..3 {
            let (x, y) = (direct.position(5), direct.position(11));
            assert!((direct.get(c, 11, 5) - bank.evaluate(&g, c, x, y)).abs() < 1e-12);
        }
        let back = g.then(&g.inverse());
        assert!(back.angle.abs() < 1e-15 && back.translation.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn nyquist_is_enforced() {
        let bank = sample_bank(2, 2.0, 0).unwrap();
        assert!(synthesize_input(&bank, &Transform2D::IDENTITY, 3, 0).is_err());
        assert!(synthesize_input(&bank, &Transform2D::IDENTITY, 4, 0).is_ok());
    }

    #[test]
    fn record_round_trip() {
        let bank = sample_bank(5, 2.0, 77).unwrap();
        assert_eq!(FourierFeatureBank::from_record(&bank.to_record()).unwrap(), bank);
        assert!(FourierFeatureBank::from_record("seed 1\nband_fc 2\nchannels 2\n0 0 0\n").is_err());
    }
}
