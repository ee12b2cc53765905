//! Average power spectra of image sets and 1D slices through them.

use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{domain, Result};
use crate::filter::kaiser_window;
use crate::map::FeatureMap;

/// Kaiser shape parameter of the analysis window.
pub const WINDOW_BETA: f64 = 8.0;

/// Power levels are clamped to this many dB before plotting.
pub const FLOOR_DB: f64 = -120.0;

/// Centered power spectrum of a square image set.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub size: usize,
    /// Linear power, row-major, with zero frequency at `(size / 2, size / 2)`.
    pub power: Vec<f64>,
}

impl PowerSpectrum {
    /// Signed frequency of shifted index `i`, as a fraction of the sampling rate.
    pub fn frequency(&self, i: usize) -> f64 {
        (i as f64 - (self.size / 2) as f64) / self.size as f64
    }

    pub fn db(&self) -> Vec<f64> {
        self.power.iter().map(|&p| to_db(p)).collect()
    }

    pub fn power_at(&self, fy: usize, fx: usize) -> f64 {
        self.power[fy * self.size + fx]
    }

    /// CSV with columns freq_x, freq_y, db.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_x,freq_y,db\n");
        for y in 0..self.size {
            for x in 0..self.size {
                let _ = writeln!(s, "{:.6},{:.6},{:.6}", self.frequency(x), self.frequency(y), to_db(self.power_at(y, x)));
            }
        }
        s
    }
}

pub fn to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(FLOOR_DB)
    } else {
        FLOOR_DB
    }
}

fn fft2(data: &mut [Complex<f64>], n: usize, planner: &mut FftPlanner<f64>) {
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::default(); n];
    for x in 0..n {
        for y in 0..n {
            col[y] = data[y * n + x];
        }
        fft.process(&mut col);
        for y in 0..n {
            data[y * n + x] = col[y];
        }
    }
}

/// `|FFT|^2 / (H W)` of one plane after whitening and windowing, unshifted.
fn plane_power(plane: &[f64], n: usize, window: &[f64], mean: f64, std: f64, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut data: Vec<Complex<f64>> = plane
        .iter()
        .enumerate()
        .map(|(i, &v)| Complex::new((v - mean) / std * window[i / n] * window[i % n], 0.0))
        .collect();
    fft2(&mut data, n, planner);
    let norm = (n * n) as f64;
    data.iter().map(|c| c.norm_sqr() / norm).collect()
}

/// Whitens by the dataset scalars, applies a separable Kaiser window, and
/// averages the power over channels and then images.
pub fn average_power_spectrum(images: &[FeatureMap], mean: f64, std: f64) -> Result<PowerSpectrum> {
    let Some(first) = images.first() else {
        return domain("empty image set");
    };
    if !(std > 0.0) || !mean.is_finite() {
        return domain("dataset std must be positive and the mean finite");
    }
    let n = first.rate();
    if images.iter().any(|m| m.rate() != n || m.channels() == 0) {
        return domain("images must share one size and have channels");
    }
    let window = kaiser_window(n, WINDOW_BETA);
    let mut planner = FftPlanner::new();
    let mut total = vec![0.0; n * n];
    for img in images {
        let canvas = img.cropped(0)?;
        let mut acc = vec![0.0; n * n];
        for c in 0..canvas.channels() {
            let p = plane_power(canvas.channel(c), n, &window, mean, std, &mut planner);
            acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
        }
        let k = canvas.channels() as f64;
        total.iter_mut().zip(acc).for_each(|(t, v)| *t += v / k);
    }
    let k = images.len() as f64;
    let half = n / 2;
    let mut power = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            power[((y + half) % n) * n + (x + half) % n] = total[y * n + x] / k;
        }
    }
    Ok(PowerSpectrum { size: n, power })
}

/// Relative mismatch between the windowed plane's energy and its spectrum's.
pub fn parseval_error(plane: &[f64], n: usize) -> Result<f64> {
    if plane.len() != n * n || n == 0 {
        return domain("plane is not n x n");
    }
    let window = kaiser_window(n, WINDOW_BETA);
    let spatial: f64 = plane
        .iter()
        .enumerate()
        .map(|(i, &v)| (v * window[i / n] * window[i % n]).powi(2))
        .sum();
    let spectral: f64 = plane_power(plane, n, &window, 0.0, 1.0, &mut FftPlanner::new()).iter().sum();
    if spatial == 0.0 {
        return Ok(spectral.abs());
    }
    Ok((spectral - spatial).abs() / spatial)
}

/// Profile along the ray at `angle` degrees through zero frequency, sampled
/// bilinearly in linear power at unit bin steps. Pairs are (radius, dB) with
/// radius as a fraction of the sampling rate.
pub fn spectrum_slice(spectrum: &PowerSpectrum, angle: f64) -> Result<Vec<(f64, f64)>> {
    if !(0.0..360.0).contains(&angle) {
        return domain(format!("angle must lie in [0, 360), got {angle}"));
    }
    let n = spectrum.size;
    let c = (n / 2) as f64;
    let (s, co) = angle.to_radians().sin_cos();
    let mut out = Vec::new();
    for step in 0.. {
        let r = step as f64;
        let (x, y) = (c + r * co, c + r * s);
        if x < 0.0 || y < 0.0 || x > (n - 1) as f64 || y > (n - 1) as f64 {
            break;
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let p = spectrum.power_at(y0, x0) * (1.0 - fx) * (1.0 - fy)
            + spectrum.power_at(y0, x1) * fx * (1.0 - fy)
            + spectrum.power_at(y1, x0) * (1.0 - fx) * fy
            + spectrum.power_at(y1, x1) * fx * fy;
        out.push((r / n as f64, to_db(p)));
    }
    Ok(out)
}

/// CSV with columns radius, db.
pub fn slice_csv(slice: &[(f64, f64)]) -> String {
    let mut s = String::from("radius,db\n");
    for (r, d) in slice {
        let _ = writeln!(s, "{r:.6},{d:.6}");
    }
    s
}

/// Mean and standard deviation over every canvas value of a set.
pub fn dataset_stats(images: &[FeatureMap]) -> Result<(f64, f64)> {
    let mut n = 0usize;
    let (mut sum, mut sq) = (0.0, 0.0);
    for img in images {
        let canvas = img.cropped(0)?;
        for &v in canvas.data() {
            sum += v;
            sq += v * v;
            n += 1;
        }
    }
    if n == 0 {
        return domain("empty image set");
    }
    let mean = sum / n as f64;
    Ok((mean, (sq / n as f64 - mean * mean).max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let n = 32;
        let img = FeatureMap::from_fn(1, n, 0, |_, y, x| (std::f64::consts::TAU * (5.0 * x - 3.0 * y)).cos());
        let sp = average_power_spectrum(&[img], 0.0, 1.0).unwrap();
        let (i, _) = sp.power.iter().enumerate().fold((0, f64::MIN), |b, (i, &p)| if p > b.1 { (i, p) } else { b });
        let (y, x) = (i / n, i % n);
        let f = (sp.frequency(x) * n as f64, sp.frequency(y) * n as f64);
        assert!(f == (5.0, -3.0) || f == (-5.0, 3.0), "{f:?}");
    }

    #[test]
    fn constant_image_hits_the_floor() {
        let img = FeatureMap::from_fn(3, 16, 0, |_, _, _| 0.25);
        let sp = average_power_spectrum(&[img], 0.25, 1.0).unwrap();
        assert!(sp.db().iter().all(|&d| d == FLOOR_DB));
    }

    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let plane: Vec<f64> = (0..64 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(parseval_error(&plane, 64).unwrap() < 1e-12);
    }

    #[test]
    fn slices_cover_the_ray() {
        let img = FeatureMap::from_fn(1, 16, 0, |_, y, x| x * y);
        let sp = average_power_spectrum(&[img], 0.0, 1.0).unwrap();
        assert_eq!(spectrum_slice(&sp, 0.0).unwrap().len(), 8);
        assert_eq!(spectrum_slice(&sp, 45.0).unwrap().len(), 10);
        assert!(spectrum_slice(&sp, 360.0).is_err());
        let row = spectrum_slice(&sp, 0.0).unwrap();
        for (k, (r, d)) in row.iter().enumerate() {
            assert_eq!(*r, k as f64 / 16.0);
            assert_eq!(*d, to_db(sp.power_at(8, 8 + k)));
        }
    }

    #[test]
    fn errors() {
        assert!(average_power_spectrum(&[], 0.0, 1.0).is_err());
        let img = FeatureMap::zeros(1, 8, 0);
        assert!(average_power_spectrum(std::slice::from_ref(&img), 0.0, 0.0).is_err());
        let other = FeatureMap::zeros(1, 16, 0);
        assert!(average_power_spectrum(&[img, other], 0.0, 1.0).is_err());
    }
}
