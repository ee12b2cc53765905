//! Integer-factor resampling on the extended canvas.
//!
//! These are the direct formulations: upsampling interleaves zeros and then
//! convolves at the high rate, downsampling convolves at the input rate and
//! keeps the first sample of each group. They double as the reference for the
//! fused kernel in [`crate::nonlinearity`]. Samples outside the stored extent
//! are treated as zero.
//!
//! Index bookkeeping follows directly from the pixel-center convention. With
//! an `n`-tap filter at the high rate, upsampled sample `j` receives input `i`
//! through tap `j - m i + (n - m) / 2`, and downsampled sample `o` reads high
//! rate sample `j` through tap `m o + (m + n - 2) / 2 - j`. Both offsets must
//! be integers, which rules out even same-rate filters.

use crate::error::{domain, Result};
use crate::filter::{lanczos_kernel, DiscreteFilter};
use crate::map::FeatureMap;

fn check_rate(filter: &DiscreteFilter, rate: f64) -> Result<()> {
    if (filter.rate - rate).abs() > 1e-9 * rate {
        return domain(format!(
            "filter designed for rate {} but applied at rate {rate}",
            filter.rate
        ));
    }
    Ok(())
}

/// Tap offset for `m`-fold upsampling with an `n`-tap filter.
pub(crate) fn up_offset(n: usize, m: usize) -> Result<isize> {
    if n < m || !(n - m).is_multiple_of(2) {
        return domain(format!(
            "a {n}-tap filter cannot upsample by {m} without breaking sample alignment"
        ));
    }
    Ok(((n - m) / 2) as isize)
}

/// Tap offset for `m`-fold downsampling with an `n`-tap filter.
pub(crate) fn down_offset(n: usize, m: usize) -> Result<isize> {
    if !(n + m).is_multiple_of(2) {
        return domain(format!(
            "a {n}-tap filter cannot downsample by {m} without breaking sample alignment"
        ));
    }
    Ok(((n + m - 2) / 2) as isize)
}

/// `out[j] = sum_k taps[k] * src[j + off - k]` over the valid range of `src`.
fn correlate_full(src: &[f64], taps: &[f64], off: isize, out: &mut [f64]) {
    let n = taps.len() as isize;
    let len = src.len() as isize;
    for (j, o) in out.iter_mut().enumerate() {
        let base = j as isize + off;
        let k_lo = (base - len + 1).max(0);
        let k_hi = base.min(n - 1);
        let mut acc = 0.0;
        for k in k_lo..=k_hi {
            acc += taps[k as usize] * src[(base - k) as usize];
        }
        *o = acc;
    }
}

/// Separable pass over every row, then every column, of a `size x size` plane.
fn separable_full(plane: &[f64], size: usize, taps: &[f64], off: isize) -> Vec<f64> {
    let mut tmp = vec![0.0; size * size];
    for (src, dst) in plane.chunks_exact(size).zip(tmp.chunks_exact_mut(size)) {
        correlate_full(src, taps, off, dst);
    }
    let mut out = vec![0.0; size * size];
    let mut col = vec![0.0; size];
    let mut res = vec![0.0; size];
    for x in 0..size {
        for y in 0..size {
            col[y] = tmp[y * size + x];
        }
        correlate_full(&col, taps, off, &mut res);
        for y in 0..size {
            out[y * size + x] = res[y];
        }
    }
    out
}

/// Direct 2D correlation with an `n x n` kernel over the full plane.
fn dense_full(plane: &[f64], size: usize, taps: &[f64], n: usize, off: isize) -> Vec<f64> {
    let mut out = vec![0.0; size * size];
    let s = size as isize;
    let n = n as isize;
    for y in 0..s {
        let by = y + off;
        let (ky_lo, ky_hi) = ((by - s + 1).max(0), by.min(n - 1));
        for x in 0..s {
            let bx = x + off;
            let (kx_lo, kx_hi) = ((bx - s + 1).max(0), bx.min(n - 1));
            let mut acc = 0.0;
            for ky in ky_lo..=ky_hi {
                let row = ((by - ky) * s) as usize;
                let trow = (ky * n) as usize;
                for kx in kx_lo..=kx_hi {
                    acc += taps[trow + kx as usize] * plane[row + (bx - kx) as usize];
                }
            }
            out[(y * s + x) as usize] = acc;
        }
    }
    out
}

/// Upsamples one `size x size` plane by `m` into a `(m size) x (m size)` plane.
pub(crate) fn upsample_plane(plane: &[f64], size: usize, m: usize, filter: &DiscreteFilter) -> Result<Vec<f64>> {
    let off = up_offset(filter.size, m)?;
    let big = size * m;
    let mut stuffed = vec![0.0; big * big];
    for y in 0..size {
        for x in 0..size {
            stuffed[(y * m) * big + x * m] = plane[y * size + x];
        }
    }
    let mut out = if filter.separable {
        separable_full(&stuffed, big, &filter.taps, off)
    } else {
        dense_full(&stuffed, big, &filter.taps, filter.size, off)
    };
    let gain = (m * m) as f64;
    out.iter_mut().for_each(|v| *v *= gain);
    Ok(out)
}

/// Downsamples one `size x size` plane by `m`.
pub(crate) fn downsample_plane(plane: &[f64], size: usize, m: usize, filter: &DiscreteFilter) -> Result<Vec<f64>> {
    let off = down_offset(filter.size, m)?;
    let full = if filter.separable {
        separable_full(plane, size, &filter.taps, off)
    } else {
        dense_full(plane, size, &filter.taps, filter.size, off)
    };
    let small = size / m;
    let mut out = Vec::with_capacity(small * small);
    for y in 0..small {
        for x in 0..small {
            out.push(full[(y * m) * size + x * m]);
        }
    }
    Ok(out)
}

/// Raises the sampling rate by `factor_m`, scaling by `m^2` to preserve magnitude.
///
/// The output covers the same extended region: rate `m s`, margin `m M`.
pub fn upsample(map: &FeatureMap, factor_m: usize, filter: &DiscreteFilter) -> Result<FeatureMap> {
    if factor_m == 0 {
        return domain("upsampling factor must be at least 1");
    }
    check_rate(filter, (map.rate() * factor_m) as f64)?;
    let size = map.size();
    let mut data = Vec::with_capacity(map.channels() * size * size * factor_m * factor_m);
    for c in 0..map.channels() {
        data.extend(upsample_plane(map.channel(c), size, factor_m, filter)?);
    }
    FeatureMap::new(map.channels(), map.rate() * factor_m, map.margin() * factor_m, data)
}

/// Low-pass filters at the input rate and keeps every `factor_m`-th sample.
///
/// Rate and margin must both be divisible by `factor_m`.
pub fn downsample(map: &FeatureMap, factor_m: usize, filter: &DiscreteFilter) -> Result<FeatureMap> {
    if factor_m == 0 {
        return domain("downsampling factor must be at least 1");
    }
    check_rate(filter, map.rate() as f64)?;
    if !map.rate().is_multiple_of(factor_m) || !map.margin().is_multiple_of(factor_m) {
        return domain(format!(
            "rate {} and margin {} must be divisible by {factor_m}",
            map.rate(),
            map.margin()
        ));
    }
    let size = map.size();
    let mut data = Vec::with_capacity(map.channels() * (size / factor_m).pow(2));
    for c in 0..map.channels() {
        data.extend(downsample_plane(map.channel(c), size, factor_m, filter)?);
    }
    FeatureMap::new(map.channels(), map.rate() / factor_m, map.margin() / factor_m, data)
}

/// Trims the map symmetrically to `margin` samples around the canvas.
pub fn crop_to_canvas(map: &FeatureMap, margin: usize) -> Result<FeatureMap> {
    map.cropped(margin)
}

/// Per-offset Lanczos weights for a shift by `d` samples: `(first tap, weights)`
/// with `out[p] = sum_t w[t] in[p - first - t]`. Normalized to unit sum.
pub(crate) fn lanczos_shift_weights(d: f64, a: f64) -> (isize, Vec<f64>) {
    let lo = (d - a).floor() as isize + 1;
    let hi = (d + a).ceil() as isize - 1;
    let mut w: Vec<f64> = (lo..=hi).map(|t| lanczos_kernel(t as f64 - d, a)).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    (lo, w)
}

fn shift_line(src: &[f64], first: isize, w: &[f64], out: &mut [f64]) {
    let len = src.len() as isize;
    for (p, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, &wt) in w.iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            let q = p as isize - first - t as isize;
            if (0..len).contains(&q) {
                acc += wt * src[q as usize];
            }
        }
        *o = acc;
    }
}

/// Translates content by `(dx, dy)` samples using Lanczos resampling with
/// extent `a`; output sample `p` takes the value at `p - d`.
pub fn translate_fractional(map: &FeatureMap, offset: (f64, f64), a: f64) -> Result<FeatureMap> {
    if !(a >= 1.0) {
        return domain(format!("Lanczos extent must be at least 1, got {a}"));
    }
    if !(offset.0.is_finite() && offset.1.is_finite()) {
        return domain("translation offset must be finite");
    }
    let (fx, wx) = lanczos_shift_weights(offset.0, a);
    let (fy, wy) = lanczos_shift_weights(offset.1, a);
    let size = map.size();
    let mut out = FeatureMap::zeros(map.channels(), map.rate(), map.margin());
    let mut col = vec![0.0; size];
    let mut res = vec![0.0; size];
    for c in 0..map.channels() {
        let src = map.channel(c);
        let mut tmp = vec![0.0; size * size];
        for (s_row, t_row) in src.chunks_exact(size).zip(tmp.chunks_exact_mut(size)) {
            shift_line(s_row, fx, &wx, t_row);
        }
        let dst = out.channel_mut(c);
        for x in 0..size {
            for y in 0..size {
                col[y] = tmp[y * size + x];
            }
            shift_line(&col, fy, &wy, &mut res);
            for y in 0..size {
                dst[y * size + x] = res[y];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{adjust_for_resampling, design_kaiser, design_radial, FilterSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(channels: usize, rate: usize, margin: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::from_fn(channels, rate, margin, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn up_filter(rate: usize, m: usize) -> DiscreteFilter {
        let base = FilterSpec::new(rate as f64 / 4.0, rate as f64 / 4.0, rate as f64, 6).unwrap();
        design_kaiser(&adjust_for_resampling(&base, m).unwrap()).unwrap()
    }

    #[test]
    fn factor_one_is_identity() {
        let z = random_map(2, 8, 2, 1);
        let unit = DiscreteFilter::unit(8.0);
        assert_eq!(upsample(&z, 1, &unit).unwrap(), z);
        assert_eq!(downsample(&z, 1, &unit).unwrap(), z);
    }

    #[test]
    fn impulse_reveals_scaled_taps() {
        let mut z = FeatureMap::zeros(1, 8, 4);
        z.set(0, 8, 8, 1.0);
        let f = up_filter(8, 2);
        let up = upsample(&z, 2, &f).unwrap();
        // Input 8 lands between high-rate samples 16 and 17; taps are centered there.
        let n = f.size;
        let first = 16 + 1 - n / 2;
        for ky in 0..n {
            for kx in 0..n {
                let want = 4.0 * f.taps[ky] * f.taps[kx];
                let got = up.get(0, first + ky, first + kx);
                assert!((got - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_survives_upsampling() {
        let z = FeatureMap::from_fn(1, 16, 8, |_, _, _| 0.7);
        let f = up_filter(16, 2);
        let up = upsample(&z, 2, &f).unwrap();
        let canvas = up.cropped(0).unwrap();
        for &v in canvas.data() {
            assert!((v - 0.7).abs() <= 0.7e-3, "{v}");
        }
    }

    #[test]
    fn rate_and_geometry_errors() {
        let z = random_map(1, 8, 2, 3);
        let f = up_filter(8, 2);
        assert!(upsample(&z, 4, &f).is_err());
        assert!(downsample(&z, 2, &f).is_err());
        let odd = random_map(1, 8, 3, 3);
        let down = design_kaiser(&FilterSpec::new(2.0, 2.0, 8.0, 12).unwrap()).unwrap();
        assert!(downsample(&odd, 2, &down).is_err());
        // Even taps at the same rate would shift samples by half a tap.
        let even = design_kaiser(&FilterSpec::new(2.0, 2.0, 8.0, 6).unwrap()).unwrap();
        assert!(downsample(&z, 1, &even).is_err());
    }

    #[test]
    fn adjointness_identity() {
        for (seed, separable) in [(5, true), (6, false)] {
            let z = random_map(1, 8, 2, seed);
            let y = random_map(1, 16, 4, seed + 100);
            let spec = adjust_for_resampling(&FilterSpec::new(2.0, 2.0, 8.0, 6).unwrap(), 2).unwrap();
            let f = if separable { design_kaiser(&spec).unwrap() } else { design_radial(&spec).unwrap() };
            let lhs: f64 = upsample(&z, 2, &f).unwrap().data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = z.data().iter().zip(downsample(&y, 2, &f).unwrap().data()).map(|(a, b)| a * b).sum();
            assert!((lhs - 4.0 * rhs).abs() < 1e-12 * lhs.abs().max(1.0), "{lhs} vs {}", 4.0 * rhs);
        }
    }

    #[test]
    fn integer_translation_is_exact_shift() {
        let z = random_map(1, 10, 0, 9);
        let t = translate_fractional(&z, (2.0, -1.0), 3.0).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                let (sx, sy) = (x as isize - 2, y as isize + 1);
                let want = if (0..10).contains(&sx) && (0..10).contains(&sy) {
                    z.get(0, sy as usize, sx as usize)
                } else {
                    0.0
                };
                assert_eq!(t.get(0, y, x), want);
            }
        }
        assert_eq!(translate_fractional(&z, (0.0, 0.0), 3.0).unwrap(), z);
        assert!(translate_fractional(&z, (0.5, 0.0), 0.5).is_err());
    }

    #[test]
    fn lanczos_weights_partition_unity() {
        for d in [0.0, 0.25, -1.7, 3.5] {
            let (_, w) = lanczos_shift_weights(d, 3.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }
}
