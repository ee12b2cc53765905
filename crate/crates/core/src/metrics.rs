//! PSNR-based equivariance metrics.
//!
//! All three metrics compare a transformed reference image against the output
//! generated from transformed input, over the region where both are valid, and
//! pool squared error over every sample, pixel and color channel before taking
//! the logarithm.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::filter::{DiscreteFilter, FilterKind};
use crate::fourier::RigidTransform;
use crate::kernels::{up_dense, Block, UpGeom};
use crate::map::FeatureMap;
use crate::math::sinc;
use crate::resample::translate_fractional;
use crate::synthesis::ImageGenerator;

/// Reported in place of infinity when the error is exactly zero.
pub const PSNR_CAP_DB: f64 = 999.0;

/// Dynamic range of images in [-1, 1].
pub const I_MAX: f64 = 2.0;

pub fn psnr_from_mse(mse: f64, i_max: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (i_max * i_max / mse).log10()
    }
}

/// PSNR over matched sample sets, pooling squared error over all elements.
pub fn psnr(reference: &[&[f64]], test: &[&[f64]], i_max: f64) -> Result<f64> {
    if reference.len() != test.len() {
        return domain("reference and test sets differ in size");
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for (r, t) in reference.iter().zip(test) {
        if r.len() != t.len() {
            return domain("reference and test samples differ in size");
        }
        sse += r.iter().zip(*t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += r.len();
    }
    if count == 0 {
        return domain("empty valid region");
    }
    Ok(psnr_from_mse(sse / count as f64, i_max))
}

/// Outcome of one metric run.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivReport {
    pub metric: String,
    pub psnr_db: f64,
    pub samples: usize,
    /// Compared values: valid pixels times color channels, over all samples.
    pub pixels: u64,
    pub sse: f64,
}

impl EquivReport {
    fn from_parts(metric: &str, parts: &[(f64, u64)]) -> Result<Self> {
        let sse: f64 = parts.iter().map(|p| p.0).sum();
        let pixels: u64 = parts.iter().map(|p| p.1).sum();
        if pixels == 0 {
            return domain(format!("{metric}: empty valid region"));
        }
        Ok(EquivReport {
            metric: metric.to_string(),
            psnr_db: psnr_from_mse(sse / pixels as f64, I_MAX),
            samples: parts.len(),
            pixels,
            sse,
        })
    }

    pub fn mse(&self) -> f64 {
        self.sse / self.pixels as f64
    }

    pub fn to_text(&self) -> String {
        format!(
            "{}: {:.2} dB over {} samples ({} values)\n",
            self.metric, self.psnr_db, self.samples, self.pixels
        )
    }

    pub fn csv_header() -> &'static str {
        "metric,psnr_db,samples,pixels\n"
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{:.6},{},{}\n", self.metric, self.psnr_db, self.samples, self.pixels)
    }
}

/// Sampling parameters shared by the metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqConfig {
    pub samples: usize,
    pub seed: u64,
    /// Translation offsets are drawn from `[-range, range]` pixels; `None` means `s_N / 8`.
    pub offset_range: Option<f64>,
    /// Rotation angles in degrees are drawn from `[lo, hi)`.
    pub angle_range: (f64, f64),
    pub lanczos_a: f64,
    pub rotation_oversampling: usize,
}

impl Default for EqConfig {
    fn default() -> Self {
        EqConfig {
            samples: 1000,
            seed: 0,
            offset_range: None,
            angle_range: (0.0, 360.0),
            lanczos_a: 3.0,
            rotation_oversampling: 4,
        }
    }
}

impl EqConfig {
    pub fn with_samples(samples: usize, seed: u64) -> Self {
        EqConfig { samples, seed, ..Self::default() }
    }

    fn range(&self, res: usize) -> f64 {
        self.offset_range.unwrap_or(res as f64 / 8.0)
    }
}

fn sample_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    rng
}

/// Runs `one` for every sample in parallel and reduces in sample order.
fn run_samples<F>(metric: &str, cfg: &EqConfig, one: F) -> Result<EquivReport>
where
    F: Fn(&mut ChaCha8Rng) -> Result<(f64, u64)> + Sync,
{
    if cfg.samples == 0 {
        return domain("at least one sample is required");
    }
    let parts: Vec<(f64, u64)> = (0..cfg.samples)
        .into_par_iter()
        .map(|k| one(&mut sample_rng(cfg.seed, k)))
        .collect::<Result<_>>()?;
    EquivReport::from_parts(metric, &parts)
}

/// Valid index range along one axis for an integer shift.
pub fn valid_range_integer(res: usize, x: i64) -> std::ops::Range<usize> {
    let lo = x.max(0);
    let hi = res as i64 + x.min(0);
    lo as usize..hi.max(lo) as usize
}

/// Valid index range along one axis for a Lanczos shift by `x` with extent `a`.
pub fn valid_range_frac(res: usize, x: f64, a: f64) -> std::ops::Range<usize> {
    let lo = (x + a).max(0.0).ceil();
    let hi = (res as f64 + (x - a).min(-1.0)).floor();
    if hi < lo {
        return 0..0;
    }
    lo as usize..hi as usize + 1
}

fn region_sse(a: &FeatureMap, b: &FeatureMap, ys: std::ops::Range<usize>, xs: std::ops::Range<usize>) -> (f64, u64) {
    let mut sse = 0.0;
    for c in 0..a.channels() {
        for y in ys.clone() {
            for x in xs.clone() {
                let d = a.get(c, y, x) - b.get(c, y, x);
                sse += d * d;
            }
        }
    }
    (sse, (a.channels() * ys.len() * xs.len()) as u64)
}

fn shift_integer(img: &FeatureMap, dx: i64, dy: i64) -> FeatureMap {
    let n = img.size() as i64;
    FeatureMap::from_fn(img.channels(), img.rate(), img.margin(), |_, _, _| 0.0).map_indexed(|c, y, x| {
        let (sy, sx) = (y as i64 - dy, x as i64 - dx);
        if (0..n).contains(&sy) && (0..n).contains(&sx) {
            img.get(c, sy as usize, sx as usize)
        } else {
            0.0
        }
    })
}

impl FeatureMap {
    fn map_indexed(mut self, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let n = self.size();
        for c in 0..self.channels() {
            let plane = self.channel_mut(c);
            for y in 0..n {
                for x in 0..n {
                    plane[y * n + x] = f(c, y, x);
                }
            }
        }
        self
    }
}

/// Integer translation metric.
pub fn eq_t_integer(gen: &dyn ImageGenerator, cfg: &EqConfig) -> Result<EquivReport> {
    let res = gen.resolution();
    let range = cfg.range(res).floor() as i64;
    run_samples("EQ-T", cfg, |rng| {
        let latent: u64 = rng.random();
        let dx = rng.random_range(-range..=range);
        let dy = rng.random_range(-range..=range);
        let reference = shift_integer(&gen.generate(latent, &RigidTransform::IDENTITY)?, dx, dy);
        let g = RigidTransform::translation(dx as f64 / res as f64, dy as f64 / res as f64);
        let test = gen.generate(latent, &g)?;
        Ok(region_sse(&reference, &test, valid_range_integer(res, dy), valid_range_integer(res, dx)))
    })
}

/// Fractional translation metric with Lanczos resampling of the reference.
pub fn eq_t_frac(gen: &dyn ImageGenerator, cfg: &EqConfig) -> Result<EquivReport> {
    let res = gen.resolution();
    let range = cfg.range(res);
    let a = cfg.lanczos_a;
    run_samples("EQ-T_frac", cfg, |rng| {
        let latent: u64 = rng.random();
        let (dx, dy) = if range > 0.0 {
            (rng.random_range(-range..range), rng.random_range(-range..range))
        } else {
            (0.0, 0.0)
        };
        let reference = translate_fractional(&gen.generate(latent, &RigidTransform::IDENTITY)?, (dx, dy), a)?;
        let g = RigidTransform::translation(dx / res as f64, dy / res as f64);
        let test = gen.generate(latent, &g)?;
        Ok(region_sse(&reference, &test, valid_range_frac(res, dy, a), valid_range_frac(res, dx, a)))
    })
}

// ---------------------------------------------------------------------------
// Rotation filter

fn rotate(p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Clips a counter-clockwise convex polygon to the box `[lo, hi]^2` around `center`.
fn clip_to_box(poly: Vec<[f64; 2]>, center: [f64; 2], half: f64) -> Vec<[f64; 2]> {
    let mut out = poly;
    for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
        if out.is_empty() {
            break;
        }
        let limit = center[axis] + sign * half;
        let inside = |p: &[f64; 2]| sign * (p[axis] - limit) <= 0.0;
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (limit - prev[axis]) / (cur[axis] - prev[axis]);
                out.push([prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])]);
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

fn rotated_square(half: f64, angle: f64) -> Vec<[f64; 2]> {
    [[-half, -half], [half, -half], [half, half], [-half, half]]
        .into_iter()
        .map(|p| rotate(p, angle))
        .collect()
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

/// `integral over poly of exp(2 pi i f . x) df` for a counter-clockwise convex
/// polygon symmetric about the origin (so the result is real).
pub(crate) fn polygon_spectrum(poly: &[[f64; 2]], x: [f64; 2]) -> f64 {
    let k = [TAU * x[0], TAU * x[1]];
    let k2 = k[0] * k[0] + k[1] * k[1];
    if k2 < 1e-18 {
        return polygon_area(poly);
    }
    let n = poly.len();
    let mut im = 0.0;
    for i in 0..n {
        let v = poly[i];
        let e = [poly[(i + 1) % n][0] - v[0], poly[(i + 1) % n][1] - v[1]];
        let c = k[0] * e[1] - k[1] * e[0];
        if c == 0.0 {
            continue;
        }
        let u = k[0] * e[0] + k[1] * e[1];
        // (exp(iu) - 1) / (iu), written without cancellation.
        let (er, ei) = if u.abs() < 1e-8 {
            (1.0, u / 2.0)
        } else {
            (u.sin() / u, 2.0 * (u / 2.0).sin().powi(2) / u)
        };
        let theta = k[0] * v[0] + k[1] * v[1];
        let (s, co) = theta.sin_cos();
        im += c * (s * er + co * ei);
    }
    im / k2
}

/// Gauss-Legendre nodes and weights on [0, 1].
fn gauss_legendre(q: usize) -> Vec<(f64, f64)> {
    (0..q)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=q {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            ((1.0 - x) / 2.0, w / 2.0)
        })
        .collect()
}

fn lanczos_window_2d(p: [f64; 2], a: f64) -> f64 {
    if p[0].abs() >= a || p[1].abs() >= a {
        0.0
    } else {
        sinc(p[0] / a) * sinc(p[1] / a)
    }
}

/// `integral of w(R_angle^-1 ... )`: the convolution of the window rotated by
/// `angle` with the axis-aligned window, evaluated at `x`.
fn window_convolution(x: [f64; 2], angle: f64, a: f64, rule: &[(f64, f64)]) -> f64 {
    let poly = clip_to_box(rotated_square(a, angle), x, a);
    if poly.len() < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    let p0 = poly[0];
    for i in 1..poly.len() - 1 {
        let (p1, p2) = (poly[i], poly[i + 1]);
        let area2 = ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs();
        for &(s, ws) in rule {
            for &(t, wt) in rule {
                let y = [
                    p0[0] + s * (p1[0] - p0[0]) + s * t * (p2[0] - p1[0]),
                    p0[1] + s * (p1[1] - p0[1]) + s * t * (p2[1] - p1[1]),
                ];
                let wr = lanczos_window_2d(rotate(y, -angle), a);
                let wa = lanczos_window_2d([x[0] - y[0], x[1] - y[1]], a);
                total += ws * wt * s * area2 * wr * wa;
            }
        }
    }
    total
}

/// Continuous rotation filter: ideal band of the square intersected with its
/// copy rotated by `-alpha`, times the matching window convolution.
pub fn rotation_filter_value(x: [f64; 2], alpha: f64, a: f64) -> f64 {
    let band = clip_to_box(rotated_square(0.5, -alpha), [0.0, 0.0], 0.5);
    let rule = gauss_legendre(10);
    polygon_spectrum(&band, x) * window_convolution(x, -alpha, a, &rule)
}

/// Spatial half-extent of the rotation filter, in pixels.
pub fn rotation_filter_extent(alpha: f64, a: f64) -> f64 {
    a * (1.0 + alpha.cos().abs() + alpha.sin().abs())
}

/// Discrete rotation filter for angle `alpha` (radians) with taps spaced
/// `1 / rate` pixels apart, normalized to unit sum.
pub fn rotation_filter(alpha: f64, rate: usize, a: f64) -> Result<DiscreteFilter> {
    if rate == 0 || !(a >= 1.0) || !alpha.is_finite() {
        return domain("rotation filter needs rate >= 1, a >= 1 and a finite angle");
    }
    let extent = rotation_filter_extent(alpha, a);
    let n = 2 * (extent * rate as f64).ceil() as usize + rate % 2;
    let center = (n as f64 - 1.0) / 2.0;
    let band = clip_to_box(rotated_square(0.5, -alpha), [0.0, 0.0], 0.5);
    let rule = gauss_legendre(10);
    let mut taps = vec![0.0; n * n];
    // Point symmetry: evaluate half the taps.
    for idx in 0..(n * n).div_ceil(2) {
        let (r, c) = (idx / n, idx % n);
        let x = [(c as f64 - center) / rate as f64, (r as f64 - center) / rate as f64];
        let v = polygon_spectrum(&band, x) * window_convolution(x, -alpha, a, &rule);
        taps[idx] = v;
        taps[n * n - 1 - idx] = v;
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    let mut f = DiscreteFilter::from_taps(taps, n, rate as f64, false)?;
    f.kind = FilterKind::Custom;
    Ok(f)
}

/// High-quality rotation of `img` by `alpha` about the canvas center:
/// upsample with the rotation filter, then bilinear lookups. Returns the image
/// and a per-pixel validity mask.
pub fn rotate_image(img: &FeatureMap, alpha: f64, a: f64, m: usize) -> Result<(FeatureMap, Vec<bool>)> {
    if img.margin() != 0 {
        return domain("rotation expects a canvas-only image");
    }
    let h = rotation_filter(alpha, m, a)?;
    let res = img.size();
    let extent = rotation_filter_extent(alpha, a);
    let g = UpGeom { m: m as isize, n: h.size as isize, off: ((h.size - m) / 2) as isize, len: res as isize };
    let gain = (m * m) as f64;
    let taps: Vec<f64> = h.taps.iter().map(|t| t * gain).collect();
    let center = res as f64 / 2.0;
    let (s, c) = alpha.sin_cos();
    let lo = extent + 1.0 / m as f64;
    let hi = res as f64 - lo;
    // Source position of each output pixel center, in pixels.
    let source = |y: usize, x: usize| {
        let (px, py) = (x as f64 + 0.5 - center, y as f64 + 0.5 - center);
        [c * px + s * py + center, -s * px + c * py + center]
    };
    let mut mask = vec![false; res * res];
    let (mut bmin, mut bmax) = ([f64::MAX; 2], [f64::MIN; 2]);
    for y in 0..res {
        for x in 0..res {
            let p = source(y, x);
            if p.iter().all(|&v| v >= lo && v <= hi) {
                mask[y * res + x] = true;
                for k in 0..2 {
                    bmin[k] = bmin[k].min(p[k]);
                    bmax[k] = bmax[k].max(p[k]);
                }
            }
        }
    }
    let mut out = FeatureMap::zeros(img.channels(), res, 0);
    if !mask.iter().any(|&v| v) {
        return Ok((out, mask));
    }
    // High-rate samples j sit at (j + 0.5) / m pixels.
    let to_index = |p: f64| p * m as f64 - 0.5;
    let span = |k: usize| {
        let lo = to_index(bmin[k]).floor() as isize;
        let hi = to_index(bmax[k]).floor() as isize + 2;
        lo..hi
    };
    let (ys, xs) = (span(1), span(0));
    for ch in 0..img.channels() {
        let block: Block<f64> = up_dense(img.channel(ch), g, &taps, ys.clone(), xs.clone());
        let at = |jy: isize, jx: isize| block.data[(jy - block.y0) as usize * block.cols + (jx - block.x0) as usize];
        let dst = out.channel_mut(ch);
        for y in 0..res {
            for x in 0..res {
                if !mask[y * res + x] {
                    continue;
                }
                let p = source(y, x);
                let (u, v) = (to_index(p[0]), to_index(p[1]));
                let (jx, jy) = (u.floor() as isize, v.floor() as isize);
                let (fx, fy) = (u - jx as f64, v - jy as f64);
                let top = at(jy, jx) * (1.0 - fx) + at(jy, jx + 1) * fx;
                let bottom = at(jy + 1, jx) * (1.0 - fx) + at(jy + 1, jx + 1) * fx;
                dst[y * res + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok((out, mask))
}

/// Pseudo-rotation: band-matching convolution at the image rate, without
/// moving anything. Returns the image and its validity mask.
pub fn pseudo_rotate(img: &FeatureMap, alpha: f64, a: f64) -> Result<(FeatureMap, Vec<bool>)> {
    let h = rotation_filter(-alpha, 1, a)?;
    let res = img.size();
    let n = h.size;
    let r = (n - 1) / 2;
    let mut out = FeatureMap::zeros(img.channels(), res, 0);
    let mut mask = vec![false; res * res];
    if res <= 2 * r {
        return Ok((out, mask));
    }
    for y in r..res - r {
        for x in r..res - r {
            mask[y * res + x] = true;
        }
    }
    for ch in 0..img.channels() {
        let src = img.channel(ch);
        let dst = out.channel_mut(ch);
        for y in r..res - r {
            for x in r..res - r {
                let mut acc = 0.0;
                for ky in 0..n {
                    let row = &src[(y + ky - r) * res + x - r..][..n];
                    let trow = &h.taps[(n - 1 - ky) * n..][..n];
                    for kx in 0..n {
                        acc += trow[n - 1 - kx] * row[kx];
                    }
                }
                dst[y * res + x] = acc;
            }
        }
    }
    Ok((out, mask))
}

/// Rotation metric.
pub fn eq_r(gen: &dyn ImageGenerator, cfg: &EqConfig) -> Result<EquivReport> {
    let (lo, hi) = cfg.angle_range;
    let a = cfg.lanczos_a;
    let m = cfg.rotation_oversampling;
    run_samples("EQ-R", cfg, |rng| {
        let latent: u64 = rng.random();
        let deg = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let alpha = deg.to_radians();
        let (reference, mask_i) = rotate_image(&gen.generate(latent, &RigidTransform::IDENTITY)?, alpha, a, m)?;
        let (test, mask_k) = pseudo_rotate(&gen.generate(latent, &RigidTransform::rotation(alpha))?, alpha, a)?;
        let res = reference.size();
        let mut sse = 0.0;
        let mut count = 0u64;
        for c in 0..reference.channels() {
            let (r, t) = (reference.channel(c), test.channel(c));
            for i in 0..res * res {
                if mask_i[i] && mask_k[i] {
                    let d = r[i] - t[i];
                    sse += d * d;
                    count += 1;
                }
            }
        }
        Ok((sse, count))
    })
}

/// Text block with one line per report.
pub fn reports_text(reports: &[EquivReport]) -> String {
    reports.iter().map(EquivReport::to_text).collect()
}

/// CSV with columns metric, psnr_db, samples, pixels.
pub fn reports_csv(reports: &[EquivReport]) -> String {
    let mut s = String::from(EquivReport::csv_header());
    for r in reports {
        let _ = write!(s, "{}", r.to_csv_row());
    }
    s
}
