//! Discrete low-pass filter construction.
//!
//! All filters are windowed versions of an ideal continuous kernel, sampled at
//! `n` tap locations `(i - (n - 1) / 2) / s` and then renormalized to unit mass.
//! Frequencies are expressed in cycles per canvas unit and rates in samples per
//! canvas unit, so a filter designed for rate `s` has its Nyquist frequency at
//! `s / 2`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{domain, format_err, Result};
use crate::math::{bessel_i0, jinc, sinc};

/// Band parameters of a low-pass filter at a given sampling rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    /// Cutoff frequency `fc`.
    pub cutoff: f64,
    /// Transition band half-width `fh`.
    pub half_width: f64,
    /// Sampling rate the taps live on.
    pub rate: f64,
    /// Number of taps per dimension.
    pub taps: usize,
}

impl FilterSpec {
    pub fn new(cutoff: f64, half_width: f64, rate: f64, taps: usize) -> Result<Self> {
        let spec = Self { cutoff, half_width, rate, taps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return domain(format!("cutoff must be positive, got {}", self.cutoff));
        }
        if !(self.half_width >= 0.0 && self.half_width.is_finite()) {
            return domain(format!("half-width must be non-negative, got {}", self.half_width));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return domain(format!("sampling rate must be positive, got {}", self.rate));
        }
        if self.cutoff + self.half_width > self.rate / 2.0 + 1e-9 {
            return domain(format!(
                "stopband edge {} exceeds Nyquist frequency {}",
                self.cutoff + self.half_width,
                self.rate / 2.0
            ));
        }
        if self.taps == 0 {
            return domain("filter needs at least one tap");
        }
        Ok(())
    }

    /// Spatial extent `L = (n - 1) / s`.
    pub fn extent(&self) -> f64 {
        (self.taps as f64 - 1.0) / self.rate
    }

    /// Transition band width as a fraction of Nyquist, `(2 fh) / (s / 2)`.
    pub fn delta_f(&self) -> f64 {
        2.0 * self.half_width / (self.rate / 2.0)
    }

    /// Stopband attenuation predicted by Kaiser's formula.
    pub fn attenuation(&self) -> f64 {
        2.285 * (self.taps as f64 - 1.0) * PI * self.delta_f() + 7.95
    }

    /// Kaiser shape parameter matching [`FilterSpec::attenuation`].
    pub fn beta(&self) -> f64 {
        kaiser_beta(self.attenuation())
    }

    /// Tap locations in canvas units, symmetric around zero.
    pub fn tap_positions(&self) -> Vec<f64> {
        tap_positions(self.taps, self.rate)
    }
}

fn tap_positions(n: usize, rate: f64) -> Vec<f64> {
    let center = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| (i as f64 - center) / rate).collect()
}

/// Maximum attenuation in dB achievable with `taps_n` taps and a transition
/// band `delta_f` expressed as a fraction of Nyquist.
pub fn kaiser_attenuation(taps_n: usize, delta_f: f64) -> Result<f64> {
    if taps_n == 0 {
        return domain("filter needs at least one tap");
    }
    if !(delta_f >= 0.0) {
        return domain(format!("transition width must be non-negative, got {delta_f}"));
    }
    Ok(2.285 * (taps_n as f64 - 1.0) * PI * delta_f + 7.95)
}

/// Kaiser shape parameter for a target attenuation in dB.
pub fn kaiser_beta(attenuation: f64) -> f64 {
    if attenuation > 50.0 {
        0.1102 * (attenuation - 8.7)
    } else if attenuation >= 21.0 {
        0.5842 * (attenuation - 21.0).powf(0.4) + 0.07886 * (attenuation - 21.0)
    } else {
        0.0
    }
}

/// Kaiser window evaluated at the continuous offset `x` for spatial extent `l`.
pub fn kaiser_window_at(x: f64, l: f64, beta: f64) -> f64 {
    if l == 0.0 {
        return if x == 0.0 { 1.0 } else { 0.0 };
    }
    let r = 2.0 * x / l;
    if r.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(beta)
}

/// `n`-point Kaiser window.
pub fn kaiser_window(taps_n: usize, beta: f64) -> Vec<f64> {
    // Unit rate: positions are tap indices, extent n - 1.
    let l = taps_n as f64 - 1.0;
    tap_positions(taps_n, 1.0)
        .into_iter()
        .map(|x| kaiser_window_at(x, l, beta))
        .collect()
}

/// Construction method of a [`DiscreteFilter`]; carried through file records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Kaiser,
    Radial,
    Lanczos,
    Gaussian,
    Box,
    Custom,
}

impl FilterKind {
    fn name(self) -> &'static str {
        match self {
            Self::Kaiser => "kaiser",
            Self::Radial => "radial",
            Self::Lanczos => "lanczos",
            Self::Gaussian => "gaussian",
            Self::Box => "box",
            Self::Custom => "custom",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "kaiser" => Self::Kaiser,
            "radial" => Self::Radial,
            "lanczos" => Self::Lanczos,
            "gaussian" => Self::Gaussian,
            "box" => Self::Box,
            "custom" => Self::Custom,
            other => return format_err(format!("unknown filter kind `{other}`")),
        })
    }
}

/// A realized tap grid.
///
/// Separable filters store `n` taps that are applied along both axes; the
/// effective 2D kernel is their outer product. Non-separable filters store the
/// full `n x n` grid in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFilter {
    pub kind: FilterKind,
    pub taps: Vec<f64>,
    pub size: usize,
    pub rate: f64,
    pub separable: bool,
    pub cutoff: f64,
    pub half_width: f64,
    pub beta: f64,
}

impl DiscreteFilter {
    /// Builds a filter from explicit taps. `taps.len()` must be `size` when
    /// separable and `size * size` otherwise.
    pub fn from_taps(taps: Vec<f64>, size: usize, rate: f64, separable: bool) -> Result<Self> {
        let expected = if separable { size } else { size * size };
        if size == 0 || taps.len() != expected {
            return domain(format!(
                "expected {expected} taps for a size-{size} filter, got {}",
                taps.len()
            ));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return domain("filter taps must be finite");
        }
        Ok(Self {
            kind: FilterKind::Custom,
            taps,
            size,
            rate,
            separable,
            cutoff: rate / 2.0,
            half_width: 0.0,
            beta: 0.0,
        })
    }

    /// The single-tap identity filter at `rate`.
    pub fn unit(rate: f64) -> Self {
        Self {
            kind: FilterKind::Custom,
            taps: vec![1.0],
            size: 1,
            rate,
            separable: true,
            cutoff: rate / 2.0,
            half_width: 0.0,
            beta: 0.0,
        }
    }

    /// Box filter with `m` equal taps at `rate`: nearest-neighbor replication
    /// when used for `m`-fold upsampling.
    pub fn nearest(m: usize, rate: f64) -> Self {
        Self {
            kind: FilterKind::Box,
            taps: vec![1.0 / m as f64; m],
            size: m,
            rate,
            separable: true,
            cutoff: rate / (2.0 * m as f64),
            half_width: 0.0,
            beta: 0.0,
        }
    }

    /// True when the filter shifts sample locations by half a tap.
    pub fn phase_shift(&self) -> bool {
        self.size.is_multiple_of(2)
    }

    pub fn sum(&self) -> f64 {
        let s: f64 = self.taps.iter().sum();
        if self.separable {
            s * s
        } else {
            s
        }
    }

    /// Taps rounded to single precision for the fast path.
    pub fn taps_f32(&self) -> Vec<f32> {
        self.taps.iter().map(|&t| t as f32).collect()
    }

    /// Dense `size x size` kernel; the outer product for separable filters.
    pub fn to_dense(&self) -> Vec<f64> {
        if !self.separable {
            return self.taps.clone();
        }
        let n = self.size;
        let mut out = Vec::with_capacity(n * n);
        for &a in &self.taps {
            for &b in &self.taps {
                out.push(a * b);
            }
        }
        out
    }

    /// Same filter stored as an explicit 2D grid.
    pub fn into_non_separable(self) -> Self {
        let taps = self.to_dense();
        Self { taps, separable: false, ..self }
    }

    /// Largest response in dB at or beyond `edge` up to Nyquist, sampled on
    /// `steps` points along the x axis (and along the diagonal when 2D).
    pub fn stopband_db(&self, edge: f64, steps: usize) -> f64 {
        let nyq = self.rate / 2.0;
        let steps = steps.max(1);
        let mut worst = 0.0f64;
        for k in 0..=steps {
            let f = edge + (nyq - edge) * k as f64 / steps as f64;
            worst = worst.max(self.response(f, 0.0));
            if !self.separable {
                let d = f / std::f64::consts::SQRT_2;
                worst = worst.max(self.response(d, d));
            }
        }
        20.0 * worst.max(1e-300).log10()
    }

    /// Magnitude of the frequency response at `(fx, fy)` cycles per canvas unit.
    pub fn response(&self, fx: f64, fy: f64) -> f64 {
        let pos = tap_positions(self.size, self.rate);
        if self.separable {
            let rx = response_1d(&self.taps, &pos, fx);
            let ry = response_1d(&self.taps, &pos, fy);
            (rx * ry).abs()
        } else {
            let n = self.size;
            let mut re = 0.0;
            let mut im = 0.0;
            for (r, &y) in pos.iter().enumerate() {
                for (c, &x) in pos.iter().enumerate() {
                    let phase = -2.0 * PI * (fx * x + fy * y);
                    let t = self.taps[r * n + c];
                    re += t * phase.cos();
                    im += t * phase.sin();
                }
            }
            re.hypot(im)
        }
    }

    /// Serializes to a self-describing `key=value` text record.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "kind={}", self.kind.name());
        let _ = writeln!(out, "n={}", self.size);
        let _ = writeln!(out, "rate_s={}", fmt17(self.rate));
        let _ = writeln!(out, "fc={}", fmt17(self.cutoff));
        let _ = writeln!(out, "fh={}", fmt17(self.half_width));
        let _ = writeln!(out, "beta={}", fmt17(self.beta));
        let _ = writeln!(out, "separable={}", self.separable);
        let taps: Vec<String> = self.taps.iter().map(|&t| fmt17(t)).collect();
        let _ = writeln!(out, "taps={}", taps.join(" "));
        out
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut kind = FilterKind::Custom;
        let (mut n, mut rate, mut fc, mut fh, mut beta, mut separable, mut taps) =
            (None, None, None, None, 0.0, None, None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let Some((key, value)) = line.split_once('=') else {
                return format_err(format!("malformed filter record line `{line}`"));
            };
            let value = value.trim();
            match key.trim() {
                "kind" => kind = FilterKind::parse(value)?,
                "n" => n = Some(parse_num::<usize>(value)?),
                "rate_s" => rate = Some(parse_num::<f64>(value)?),
                "fc" => fc = Some(parse_num::<f64>(value)?),
                "fh" => fh = Some(parse_num::<f64>(value)?),
                "beta" => beta = parse_num::<f64>(value)?,
                "separable" => separable = Some(parse_num::<bool>(value)?),
                "taps" => {
                    taps = Some(
                        value
                            .split_whitespace()
                            .map(parse_num::<f64>)
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                other => return format_err(format!("unknown filter record key `{other}`")),
            }
        }
        let missing = |k: &str| crate::Error::Format(format!("filter record lacks `{k}`"));
        let mut filter = Self::from_taps(
            taps.ok_or_else(|| missing("taps"))?,
            n.ok_or_else(|| missing("n"))?,
            rate.ok_or_else(|| missing("rate_s"))?,
            separable.ok_or_else(|| missing("separable"))?,
        )?;
        filter.kind = kind;
        filter.cutoff = fc.ok_or_else(|| missing("fc"))?;
        filter.half_width = fh.ok_or_else(|| missing("fh"))?;
        filter.beta = beta;
        Ok(filter)
    }
}

fn response_1d(taps: &[f64], pos: &[f64], f: f64) -> f64 {
    // Symmetric taps make the response real.
    taps.iter()
        .zip(pos)
        .map(|(&t, &x)| t * (2.0 * PI * f * x).cos())
        .sum()
}

/// Formats with 17 significant digits, enough for exact `f64` round trips.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse::<T>()
        .or_else(|_| format_err(format!("cannot parse `{s}`")))
}

fn normalize(taps: &mut [f64]) -> Result<()> {
    let sum: f64 = taps.iter().sum();
    if !(sum.abs() > 0.0 && sum.is_finite()) {
        return domain("filter taps sum to zero and cannot be normalized");
    }
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(())
}

/// Kaiser-windowed sinc low-pass filter with an explicit shape parameter.
pub fn design_lowpass_1d(spec: &FilterSpec, beta: f64) -> Result<DiscreteFilter> {
    spec.validate()?;
    if !(beta >= 0.0) {
        return domain(format!("Kaiser beta must be non-negative, got {beta}"));
    }
    let fc = spec.cutoff;
    let l = spec.extent();
    let mut taps: Vec<f64> = spec
        .tap_positions()
        .into_iter()
        .map(|x| 2.0 * fc * sinc(2.0 * fc * x) * kaiser_window_at(x, l, beta) / spec.rate)
        .collect();
    normalize(&mut taps)?;
    Ok(DiscreteFilter {
        kind: FilterKind::Kaiser,
        taps,
        size: spec.taps,
        rate: spec.rate,
        separable: true,
        cutoff: spec.cutoff,
        half_width: spec.half_width,
        beta,
    })
}

/// Kaiser low-pass filter with `beta` chosen from the spec's predicted attenuation.
pub fn design_kaiser(spec: &FilterSpec) -> Result<DiscreteFilter> {
    design_lowpass_1d(spec, spec.beta())
}

/// Radially symmetric jinc low-pass filter under a separable Kaiser window.
pub fn design_radial_2d(spec: &FilterSpec, beta: f64) -> Result<DiscreteFilter> {
    spec.validate()?;
    if !(beta >= 0.0) {
        return domain(format!("Kaiser beta must be non-negative, got {beta}"));
    }
    let fc = spec.cutoff;
    let l = spec.extent();
    let pos = spec.tap_positions();
    let window: Vec<f64> = pos.iter().map(|&x| kaiser_window_at(x, l, beta)).collect();
    let scale = (2.0 * fc).powi(2) / (spec.rate * spec.rate);
    let n = spec.taps;
    let mut taps = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let radius = (pos[r] * pos[r] + pos[c] * pos[c]).sqrt();
            taps.push(scale * jinc(2.0 * fc * radius) * (window[r] * window[c]));
        }
    }
    normalize(&mut taps)?;
    Ok(DiscreteFilter {
        kind: FilterKind::Radial,
        taps,
        size: n,
        rate: spec.rate,
        separable: false,
        cutoff: spec.cutoff,
        half_width: spec.half_width,
        beta,
    })
}

/// Radial filter with `beta` chosen from the spec's predicted attenuation.
pub fn design_radial(spec: &FilterSpec) -> Result<DiscreteFilter> {
    design_radial_2d(spec, spec.beta())
}

/// Lanczos prototype `sinc(x) sinc(x / a)` on `|x| < a`.
pub fn lanczos_kernel(x: f64, a: f64) -> f64 {
    if x.abs() >= a {
        0.0
    } else {
        sinc(x) * sinc(x / a)
    }
}

/// Lanczos filter `2 fc k_L(2 fc x)` sampled on the spec's tap grid.
///
/// Only the rate and tap count of `spec` are used; the band is set by `cutoff`.
pub fn design_lanczos(cutoff: f64, a: f64, spec: &FilterSpec) -> Result<DiscreteFilter> {
    if !(a > 0.0) {
        return domain(format!("Lanczos extent must be positive, got {a}"));
    }
    check_grid(cutoff, spec)?;
    let mut taps: Vec<f64> = spec
        .tap_positions()
        .into_iter()
        .map(|x| 2.0 * cutoff * lanczos_kernel(2.0 * cutoff * x, a) / spec.rate)
        .collect();
    normalize(&mut taps)?;
    Ok(DiscreteFilter {
        kind: FilterKind::Lanczos,
        taps,
        size: spec.taps,
        rate: spec.rate,
        separable: true,
        cutoff,
        half_width: spec.half_width,
        beta: 0.0,
    })
}

/// Gaussian filter `2 fc k_G(2 fc x)` truncated to `|x| <= 8 / s`.
pub fn design_gaussian(cutoff: f64, sigma: f64, spec: &FilterSpec) -> Result<DiscreteFilter> {
    design_gaussian_truncated(cutoff, sigma, spec, spec.rate)
}

/// Gaussian filter for `m`-fold resampling: designed on the adjusted grid of
/// `base` but truncated relative to the base (low) rate.
pub fn design_gaussian_resampling(
    cutoff: f64,
    sigma: f64,
    base: &FilterSpec,
    factor_m: usize,
) -> Result<DiscreteFilter> {
    let spec = adjust_for_resampling(base, factor_m)?;
    design_gaussian_truncated(cutoff, sigma, &spec, base.rate)
}

fn design_gaussian_truncated(
    cutoff: f64,
    sigma: f64,
    spec: &FilterSpec,
    truncation_rate: f64,
) -> Result<DiscreteFilter> {
    if !(sigma > 0.0) {
        return domain(format!("Gaussian sigma must be positive, got {sigma}"));
    }
    check_grid(cutoff, spec)?;
    let limit = 8.0 / truncation_rate;
    let norm = sigma * (2.0 * PI).sqrt();
    let mut taps: Vec<f64> = spec
        .tap_positions()
        .into_iter()
        .map(|x| {
            if x.abs() > limit {
                0.0
            } else {
                let u = 2.0 * cutoff * x / sigma;
                2.0 * cutoff * (-0.5 * u * u).exp() / norm / spec.rate
            }
        })
        .collect();
    normalize(&mut taps)?;
    Ok(DiscreteFilter {
        kind: FilterKind::Gaussian,
        taps,
        size: spec.taps,
        rate: spec.rate,
        separable: true,
        cutoff,
        half_width: spec.half_width,
        beta: 0.0,
    })
}

fn check_grid(cutoff: f64, spec: &FilterSpec) -> Result<()> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return domain(format!("cutoff must be positive, got {cutoff}"));
    }
    if spec.taps == 0 || !(spec.rate > 0.0) {
        return domain("filter grid needs a positive rate and at least one tap");
    }
    Ok(())
}

/// Rescales a filter spec for `m`-fold resampling: `n' = n m`, `s' = s m`,
/// with the band (and so the spatial extent) unchanged.
pub fn adjust_for_resampling(base: &FilterSpec, factor_m: usize) -> Result<FilterSpec> {
    if factor_m == 0 {
        return domain("resampling factor must be at least 1");
    }
    Ok(FilterSpec {
        cutoff: base.cutoff,
        half_width: base.half_width,
        rate: base.rate * factor_m as f64,
        taps: base.taps * factor_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn attenuation_examples() {
        assert_eq!(kaiser_attenuation(1, 0.5).unwrap(), 7.95);
        // 40-digit evaluation of 2.285 * 11 * pi * 0.75 + 7.95.
        assert_relative_eq!(
            kaiser_attenuation(12, 0.75).unwrap(),
            67.172_948_510_984_6,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            kaiser_attenuation(6, 2.0 * (2f64.sqrt() - 1.0)).unwrap(),
            37.684_483_002_391_89,
            max_relative = 1e-14
        );
        assert!(kaiser_attenuation(6, -0.1).is_err());
        assert!(kaiser_attenuation(0, 0.1).is_err());
    }

    #[test]
    fn beta_branches() {
        assert_eq!(kaiser_beta(15.0), 0.0);
        assert_relative_eq!(kaiser_beta(36.0), 2.908_730_167_800_474_7, max_relative = 1e-12);
        assert_relative_eq!(kaiser_beta(67.17), 6.443394, max_relative = 1e-12);
        // Continuity at the branch points.
        assert!((kaiser_beta(21.0) - kaiser_beta(21.0 - 1e-12)).abs() < 1e-6);
        // The empirical fit jumps slightly at 50 dB.
        let jump = kaiser_beta(50.0 + 1e-12) - kaiser_beta(50.0);
        assert_relative_eq!(jump, 0.1102 * 41.3 - (0.5842 * 29f64.powf(0.4) + 0.07886 * 29.0), epsilon = 1e-9);
    }

    #[test]
    fn window_examples() {
        assert!(kaiser_window(9, 0.0).iter().all(|&w| w == 1.0));
        let w = kaiser_window(7, 6.0);
        assert_eq!(w[3], 1.0);
        assert_relative_eq!(w[0], 0.014_873_337_104_763_205, max_relative = 1e-12);
        assert_eq!(w[0], w[6]);
        assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert_eq!(kaiser_window(1, 5.0), vec![1.0]);
    }

    #[test]
    fn single_tap_filter_is_identity() {
        let spec = FilterSpec::new(0.5, 0.0, 1.0, 1).unwrap();
        let f = design_kaiser(&spec).unwrap();
        assert_eq!(f.taps, vec![1.0]);
        assert!(!f.phase_shift());
    }

    #[test]
    fn lowpass_dc_gain_and_stopband() {
        let spec = FilterSpec::new(0.25, 0.2, 1.0, 17).unwrap();
        let f = design_kaiser(&spec).unwrap();
        assert!((f.taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let gain_db = 20.0 * f.response(0.45, 0.0).log10();
        // The attenuation estimate is an empirical fit, good to about a dB.
        assert!(gain_db <= -spec.attenuation() + 1.5, "{gain_db} vs {}", spec.attenuation());
        let center = f.taps[8];
        assert!(f.taps.iter().all(|&t| t <= center));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(FilterSpec::new(0.3, 0.3, 1.0, 5).is_err());
        assert!(FilterSpec::new(-0.1, 0.1, 1.0, 5).is_err());
        assert!(FilterSpec::new(0.1, -0.1, 1.0, 5).is_err());
        assert!(FilterSpec::new(0.1, 0.1, 1.0, 0).is_err());
        let bad = FilterSpec { cutoff: 0.4, half_width: 0.4, rate: 1.0, taps: 4 };
        assert!(design_kaiser(&bad).is_err());
        assert!(design_radial(&bad).is_err());
    }

    #[test]
    fn even_taps_shift_phase() {
        let f = design_kaiser(&FilterSpec::new(0.25, 0.25, 2.0, 12).unwrap()).unwrap();
        assert!(f.phase_shift());
    }

    #[test]
    fn radial_filter_symmetry() {
        let spec = FilterSpec::new(0.3, 0.15, 1.0, 9).unwrap();
        let f = design_radial(&spec).unwrap();
        let n = f.size;
        assert!(!f.separable);
        for r in 0..n {
            for c in 0..n {
                let t = f.taps[r * n + c];
                assert_eq!(t, f.taps[c * n + r]);
                // 90 degree rotation: (r, c) -> (c, n - 1 - r)
                assert_eq!(t, f.taps[c * n + (n - 1 - r)]);
            }
        }
        assert!((f.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_response_is_isotropic_in_passband() {
        let spec = FilterSpec::new(0.25, 0.25, 2.0, 24).unwrap();
        let f = design_radial(&spec).unwrap();
        for &radius in &[0.05, 0.1, 0.15, 0.2] {
            let axis = f.response(radius, 0.0);
            let d = radius / 2f64.sqrt();
            let diag = f.response(d, d);
            let diff_db = 20.0 * (axis / diag).log10();
            assert!(diff_db.abs() < 1.0, "radius {radius}: {diff_db} dB");
        }
    }

    #[test]
    fn lanczos_taps_match_direct_evaluation() {
        let spec = FilterSpec { cutoff: 0.25, half_width: 0.0, rate: 1.0, taps: 17 };
        let f = design_lanczos(0.25, 2.0, &spec).unwrap();
        // Independent evaluation of 0.5 * sinc(0.5 x) * sinc(0.25 x) on x = -8..8.
        let raw: Vec<f64> = (-8..=8)
            .map(|i| {
                let u = 0.5 * i as f64;
                if u.abs() >= 2.0 {
                    0.0
                } else {
                    let s1 = if u == 0.0 { 1.0 } else { (PI * u).sin() / (PI * u) };
                    let s2 = if u == 0.0 { 1.0 } else { (PI * u / 2.0).sin() / (PI * u / 2.0) };
                    0.5 * s1 * s2
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        for (got, want) in f.taps.iter().zip(&raw) {
            assert!((got - want / total).abs() < 1e-15);
        }
        // k_L(+-a) = 0 sits exactly at taps +-4.
        assert_eq!(f.taps[4], 0.0);
        assert_eq!(f.taps[12], 0.0);
        assert!(design_lanczos(0.25, 0.0, &spec).is_err());
    }

    #[test]
    fn gaussian_truncation_and_peak() {
        let spec = FilterSpec { cutoff: 0.25, half_width: 0.0, rate: 1.0, taps: 25 };
        let f = design_gaussian(0.25, 0.4, &spec).unwrap();
        let pos = spec.tap_positions();
        for (t, x) in f.taps.iter().zip(&pos) {
            if x.abs() > 8.0 {
                assert_eq!(*t, 0.0);
            }
        }
        let peak = f.taps[12];
        assert!(f.taps.iter().all(|&t| t <= peak));
        // Direct evaluation for sigma = 0.4, fc = 0.25: exp(-0.5 (0.5 x / 0.4)^2).
        let raw: Vec<f64> = pos
            .iter()
            .map(|&x| if x.abs() > 8.0 { 0.0 } else { (-0.5 * (0.5 * x / 0.4).powi(2)).exp() })
            .collect();
        let total: f64 = raw.iter().sum();
        for (got, want) in f.taps.iter().zip(&raw) {
            assert!((got - want / total).abs() < 1e-15);
        }
        assert!(design_gaussian(0.25, 0.0, &spec).is_err());
    }

    #[test]
    fn gaussian_resampling_truncates_at_base_rate() {
        let base = FilterSpec { cutoff: 0.1, half_width: 0.0, rate: 1.0, taps: 20 };
        let f = design_gaussian_resampling(0.1, 2.0, &base, 2).unwrap();
        assert_eq!(f.size, 40);
        let pos = adjust_for_resampling(&base, 2).unwrap().tap_positions();
        for (t, x) in f.taps.iter().zip(&pos) {
            assert_eq!(*t == 0.0, x.abs() > 8.0);
        }
    }

    #[test]
    fn resampling_adjustment() {
        let base = FilterSpec::new(2.0, 6.0, 16.0, 6).unwrap();
        assert_eq!(adjust_for_resampling(&base, 1).unwrap(), base);
        let up2 = adjust_for_resampling(&base, 2).unwrap();
        assert_eq!((up2.taps, up2.rate), (12, 32.0));
        let up4 = adjust_for_resampling(&base, 4).unwrap();
        assert_eq!(up4.taps, 24);
        // (4n - 1) / 4s grows the extent by exactly 3 / 4s.
        assert_relative_eq!(up4.extent() - base.extent(), 3.0 / 64.0, epsilon = 1e-15);
        assert!(adjust_for_resampling(&base, 0).is_err());
    }

    #[test]
    fn record_round_trip_is_exact() {
        let f = design_radial(&FilterSpec::new(0.3, 0.1, 1.0, 5).unwrap()).unwrap();
        let back = DiscreteFilter::from_record(&f.to_record()).unwrap();
        assert_eq!(back, f);
        assert!(DiscreteFilter::from_record("n=3\nbogus=1").is_err());
        assert!(DiscreteFilter::from_record("n=2\nrate_s=1\nfc=0.1\nfh=0\nseparable=true\ntaps=1").is_err());
    }
}
