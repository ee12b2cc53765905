//! Upsample, leaky ReLU, downsample.
//!
//! [`FilteredLrelu::reference`] composes the whole-plane operations from
//! [`crate::resample`] literally. [`FilteredLrelu::fused`] walks 32x32 output
//! tiles instead: each tile upsamples just the input footprint it needs,
//! applies the nonlinearity on that small high-rate block and downsamples
//! straight into the output, never materializing the full high-rate plane.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::filter::{adjust_for_resampling, design_kaiser, design_radial, DiscreteFilter, FilterSpec};
use crate::kernels::{down_dense, down_separable, up_dense, up_separable, Block, DownGeom, Real, UpGeom};
use crate::map::FeatureMap;
use crate::resample::{down_offset, downsample_plane, up_offset, upsample_plane};

/// Output tile edge of the fused kernel.
pub const TILE: usize = 32;

/// Arithmetic used inside fused tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    /// Default activation clamp: off in 64-bit mode, 256 in 32-bit mode.
    pub fn default_clamp(self) -> Option<f64> {
        match self {
            Precision::F64 => None,
            Precision::F32 => Some(256.0),
        }
    }
}

/// Parameters of one filtered leaky ReLU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredLrelu {
    pub up: usize,
    pub down: usize,
    pub slope: f64,
    pub gain: f64,
    pub clamp: Option<f64>,
}

impl FilteredLrelu {
    pub fn new(up: usize, down: usize) -> Self {
        FilteredLrelu { up, down, slope: 0.2, gain: std::f64::consts::SQRT_2, clamp: None }
    }

    pub fn with_clamp(mut self, clamp: Option<f64>) -> Self {
        self.clamp = clamp;
        self
    }

    #[inline]
    fn activate(&self, v: f64) -> f64 {
        let y = if v >= 0.0 { v } else { v * self.slope } * self.gain;
        match self.clamp {
            Some(c) => y.clamp(-c, c),
            None => y,
        }
    }

    /// Output rate and untrimmed output margin for an input map.
    fn check(&self, map: &FeatureMap, up_filter: &DiscreteFilter, down_filter: &DiscreteFilter) -> Result<(usize, usize)> {
        if self.up == 0 || self.down == 0 {
            return domain("resampling factors must be at least 1");
        }
        if let Some(c) = self.clamp {
            if !(c > 0.0) {
                return domain(format!("clamp must be positive, got {c}"));
            }
        }
        let high = (map.rate() * self.up) as f64;
        for (what, f) in [("up", up_filter), ("down", down_filter)] {
            if (f.rate - high).abs() > 1e-9 * high {
                return domain(format!("{what} filter designed for rate {} but the operator runs at {high}", f.rate));
            }
        }
        let (rate, margin) = (map.rate() * self.up, map.margin() * self.up);
        if rate % self.down != 0 || margin % self.down != 0 {
            return domain(format!(
                "intermediate rate {rate} and margin {margin} must be divisible by {}",
                self.down
            ));
        }
        up_offset(up_filter.size, self.up)?;
        down_offset(down_filter.size, self.down)?;
        Ok((rate / self.down, margin / self.down))
    }

    fn out_margin(full: usize, requested: Option<usize>) -> Result<usize> {
        match requested {
            Some(m) if m > full => domain(format!("requested output margin {m} exceeds available {full}")),
            Some(m) => Ok(m),
            None => Ok(full),
        }
    }

    /// Literal composition over whole planes, then a crop to `out_margin`.
    pub fn reference(
        &self,
        map: &FeatureMap,
        up_filter: &DiscreteFilter,
        down_filter: &DiscreteFilter,
        out_margin: Option<usize>,
    ) -> Result<FeatureMap> {
        let (rate, full_margin) = self.check(map, up_filter, down_filter)?;
        let margin = Self::out_margin(full_margin, out_margin)?;
        let size = map.size();
        let mut data = Vec::new();
        for c in 0..map.channels() {
            let mut hi = upsample_plane(map.channel(c), size, self.up, up_filter)?;
            hi.iter_mut().for_each(|v| *v = self.activate(*v));
            data.extend(downsample_plane(&hi, size * self.up, self.down, down_filter)?);
        }
        FeatureMap::new(map.channels(), rate, full_margin, data)?.cropped(margin)
    }

    /// Tiled evaluation; matches [`Self::reference`] to rounding.
    pub fn fused(
        &self,
        map: &FeatureMap,
        up_filter: &DiscreteFilter,
        down_filter: &DiscreteFilter,
        out_margin: Option<usize>,
        precision: Precision,
    ) -> Result<FeatureMap> {
        match precision {
            Precision::F64 => self.fused_in::<f64>(map, up_filter, down_filter, out_margin),
            Precision::F32 => self.fused_in::<f32>(map, up_filter, down_filter, out_margin),
        }
    }

    fn fused_in<T: Real>(
        &self,
        map: &FeatureMap,
        up_filter: &DiscreteFilter,
        down_filter: &DiscreteFilter,
        out_margin: Option<usize>,
    ) -> Result<FeatureMap> {
        let (rate, full_margin) = self.check(map, up_filter, down_filter)?;
        let margin = Self::out_margin(full_margin, out_margin)?;
        let size = map.size();
        let high = (size * self.up) as isize;
        let up_g = UpGeom {
            m: self.up as isize,
            n: up_filter.size as isize,
            off: up_offset(up_filter.size, self.up)?,
            len: size as isize,
        };
        let down_g = DownGeom {
            m: self.down as isize,
            n: down_filter.size as isize,
            off: down_offset(down_filter.size, self.down)?,
        };
        let gain = if up_filter.separable { self.up as f64 } else { (self.up * self.up) as f64 };
        let up_taps: Vec<T> = up_filter.taps.iter().map(|&t| T::of(t * gain)).collect();
        let down_taps: Vec<T> = down_filter.taps.iter().map(|&t| T::of(t)).collect();
        let out_size = rate + 2 * margin;
        let skip = (full_margin - margin) as isize;

        let slope = T::of(self.slope);
        let gain = T::of(self.gain);
        let clamp = self.clamp.map(|c| (T::of(-c), T::of(c)));
        let act = |v: T| {
            let y = if v >= T::default() { v } else { v * slope } * gain;
            match clamp {
                Some((lo, _)) if y < lo => lo,
                Some((_, hi)) if y > hi => hi,
                _ => y,
            }
        };

        let mut out = vec![T::default(); map.channels() * out_size * out_size];
        out.par_chunks_mut(out_size * out_size).enumerate().for_each(|(c, plane)| {
            let src: Vec<T> = map.channel(c).iter().map(|&v| T::of(v)).collect();
            plane.par_chunks_mut(TILE * out_size).enumerate().for_each(|(band, rows)| {
                let oy0 = (band * TILE) as isize + skip;
                let oys = oy0..oy0 + (rows.len() / out_size) as isize;
                for tx in (0..out_size).step_by(TILE) {
                    let ox0 = tx as isize + skip;
                    let oxs = ox0..ox0 + TILE.min(out_size - tx) as isize;
                    let clip = |r: std::ops::Range<isize>| r.start.max(0)..r.end.min(high).max(r.start.max(0));
                    let ys = clip(down_g.support(&oys));
                    let xs = clip(down_g.support(&oxs));
                    let mut block: Block<T> = if up_filter.separable {
                        up_separable(&src, up_g, &up_taps, ys, xs)
                    } else {
                        up_dense(&src, up_g, &up_taps, ys, xs)
                    };
                    block.data.iter_mut().for_each(|v| *v = act(*v));
                    let dst = &mut rows[tx..];
                    if down_filter.separable {
                        down_separable(&block, down_g, &down_taps, oys.clone(), oxs, dst, out_size);
                    } else {
                        down_dense(&block, down_g, &down_taps, oys.clone(), oxs, dst, out_size);
                    }
                }
            });
        });
        FeatureMap::new(map.channels(), rate, margin, out.into_iter().map(T::get).collect())
    }
}

/// Reference path with the default constants and no crop.
pub fn filtered_lrelu_reference(
    map: &FeatureMap,
    up: usize,
    down: usize,
    up_filter: &DiscreteFilter,
    down_filter: &DiscreteFilter,
) -> Result<FeatureMap> {
    FilteredLrelu::new(up, down).reference(map, up_filter, down_filter, None)
}

/// Fused path with the default constants and no crop.
pub fn filtered_lrelu_fused(
    map: &FeatureMap,
    up: usize,
    down: usize,
    up_filter: &DiscreteFilter,
    down_filter: &DiscreteFilter,
    precision: Precision,
) -> Result<FeatureMap> {
    FilteredLrelu::new(up, down)
        .with_clamp(precision.default_clamp())
        .fused(map, up_filter, down_filter, None, precision)
}

/// One benchmark configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchCell {
    pub up: usize,
    pub down: usize,
    pub sep_up: bool,
    pub sep_down: bool,
}

/// Factor pairs (2/2, 4/2, 2/4) crossed with separability of both filters.
pub fn bench_matrix() -> Vec<BenchCell> {
    let mut cells = Vec::with_capacity(12);
    for (up, down) in [(2, 2), (4, 2), (2, 4)] {
        for (sep_up, sep_down) in [(true, true), (true, false), (false, true), (false, false)] {
            cells.push(BenchCell { up, down, sep_up, sep_down });
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub cell: BenchCell,
    pub ref_ms: f64,
    pub fused_ms: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.ref_ms / self.fused_ms
    }
}

/// Filters for a cell: base `taps` taps at the input and output rates, scaled
/// to the intermediate rate; radial variants where a cell is non-separable.
pub fn bench_filters(rate: usize, cell: BenchCell, taps: usize) -> Result<(DiscreteFilter, DiscreteFilter)> {
    let make = |s: f64, m: usize, sep: bool| -> Result<DiscreteFilter> {
        let spec = adjust_for_resampling(&FilterSpec::new(s / 4.0, s / 4.0, s, taps)?, m)?;
        if sep {
            design_kaiser(&spec)
        } else {
            design_radial(&spec)
        }
    };
    let out_rate = rate as f64 * cell.up as f64 / cell.down as f64;
    Ok((make(rate as f64, cell.up, cell.sep_up)?, make(out_rate, cell.down, cell.sep_down)?))
}

/// Times both paths on a `size x size x channels` random map.
pub fn bench_fused(size: usize, channels: usize, cells: &[BenchCell], seed: u64) -> Result<Vec<BenchRow>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let map = FeatureMap::from_fn(channels, size, 0, |_, _, _| rng.random_range(-1.0..1.0));
    cells
        .iter()
        .map(|&cell| {
            let (fu, fd) = bench_filters(size, cell, 6)?;
            let op = FilteredLrelu::new(cell.up, cell.down);
            let t0 = Instant::now();
            let a = op.reference(&map, &fu, &fd, None)?;
            let ref_ms = t0.elapsed().as_secs_f64() * 1e3;
            let t1 = Instant::now();
            let b = op.fused(&map, &fu, &fd, None, Precision::F64)?;
            let fused_ms = t1.elapsed().as_secs_f64() * 1e3;
            let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if diff > 1e-9 {
                return domain(format!("fused path diverged from reference by {diff}"));
            }
            Ok(BenchRow { cell, ref_ms, fused_ms })
        })
        .collect()
}

/// CSV with columns up, down, sep_up, sep_down, ref_ms, fused_ms, speedup.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("up,down,sep_up,sep_down,ref_ms,fused_ms,speedup\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.3},{:.3},{:.3}",
            r.cell.up,
            r.cell.down,
            r.cell.sep_up,
            r.cell.sep_down,
            r.ref_ms,
            r.fused_ms,
            r.speedup()
        );
    }
    s
}
