//! Polyphase building blocks that evaluate only the samples a caller needs.
//!
//! Everything here reproduces the index arithmetic of [`crate::resample`]
//! exactly, including the zero exterior, so tiles stitched together agree
//! with the whole-plane reference up to summation order.

use std::ops::{Add, AddAssign, Mul, Range};

/// Scalar type a tile is evaluated in.
pub(crate) trait Real:
    Copy + Send + Sync + Default + PartialOrd + Add<Output = Self> + Mul<Output = Self> + AddAssign
{
    fn of(v: f64) -> Self;
    fn get(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn get(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn get(self) -> f64 {
        self as f64
    }
}

pub(crate) fn floor_div(a: isize, b: isize) -> isize {
    a.div_euclid(b)
}

pub(crate) fn ceil_div(a: isize, b: isize) -> isize {
    -(-a).div_euclid(b)
}

/// Rectangular block of samples; `data` is row-major `rows x cols`.
#[derive(Debug, Clone)]
pub(crate) struct Block<T> {
    pub y0: isize,
    pub x0: isize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Block<T> {
    fn zeros(ys: &Range<isize>, xs: &Range<isize>) -> Self {
        let rows = (ys.end - ys.start).max(0) as usize;
        let cols = (xs.end - xs.start).max(0) as usize;
        Block { y0: ys.start, x0: xs.start, rows, cols, data: vec![T::default(); rows * cols] }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Dot product with four partial sums.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::default(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    for (&x, &y) in ra.iter().zip(rb) {
        acc[0] += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Polyphase upsampling geometry: `n` taps, factor `m`, tap offset `off`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct UpGeom {
    pub m: isize,
    pub n: isize,
    pub off: isize,
    pub len: isize,
}

impl UpGeom {
    /// Source indices feeding high-rate sample `j`, clipped to the stored extent.
    #[inline]
    fn sources(&self, j: isize) -> (isize, isize) {
        let lo = ceil_div(j + self.off - self.n + 1, self.m).max(0);
        let hi = floor_div(j + self.off, self.m).min(self.len - 1);
        (lo, hi)
    }

    fn source_range(&self, js: &Range<isize>) -> Range<isize> {
        let lo = ceil_div(js.start + self.off - self.n + 1, self.m).max(0);
        let hi = floor_div(js.end - 1 + self.off, self.m).min(self.len - 1);
        lo..(hi + 1).max(lo)
    }

    /// Phase `r` and anchor `q` of high-rate sample `j`: it reads
    /// `taps[r + m k] * src[q - k]`.
    #[inline]
    fn phase(&self, j: isize) -> (usize, isize) {
        let t = j + self.off;
        let q = floor_div(t, self.m);
        ((t - q * self.m) as usize, q)
    }

    /// Taps of every phase in increasing source order.
    fn phase_taps<T: Real>(&self, row: &[T]) -> Vec<Vec<T>> {
        (0..self.m as usize)
            .map(|r| (r..self.n as usize).step_by(self.m as usize).rev().map(|t| row[t]).collect())
            .collect()
    }

    /// Polyphase sum for sample `j` over a line of `len` source samples.
    #[inline]
    fn apply<T: Real>(&self, phases: &[Vec<T>], line: &[T], j: isize) -> T {
        let (r, q) = self.phase(j);
        let taps = &phases[r];
        let first = q - taps.len() as isize + 1;
        let j0 = (-first).max(0) as usize;
        let j1 = ((self.len - first).max(0) as usize).min(taps.len());
        if j1 <= j0 {
            return T::default();
        }
        let s = (first + j0 as isize) as usize;
        dot(&taps[j0..j1], &line[s..s + (j1 - j0)])
    }
}

/// Separable upsampling of `src` (`len x len`) restricted to rows `ys` and
/// columns `xs` of the high-rate grid. `taps` already carry the per-axis gain.
pub(crate) fn up_separable<T: Real>(
    src: &[T],
    g: UpGeom,
    taps: &[T],
    ys: Range<isize>,
    xs: Range<isize>,
) -> Block<T> {
    let len = g.len as usize;
    let src_rows = g.source_range(&ys);
    let mut out = Block::zeros(&ys, &xs);
    let cols = out.cols;
    let phases = g.phase_taps(taps);
    // Horizontal pass on the input rows that matter.
    let mut h = vec![T::default(); (src_rows.end - src_rows.start) as usize * cols];
    for (r, iy) in src_rows.clone().enumerate() {
        let line = &src[iy as usize * len..(iy as usize + 1) * len];
        let dst = &mut h[r * cols..(r + 1) * cols];
        for (d, jx) in dst.iter_mut().zip(xs.clone()) {
            *d = g.apply(&phases, line, jx);
        }
    }
    // Vertical pass as row updates.
    for (r, jy) in ys.clone().enumerate() {
        let (lo, hi) = g.sources(jy);
        let dst = &mut out.data[r * cols..(r + 1) * cols];
        for iy in lo..=hi {
            let w = taps[(jy + g.off - g.m * iy) as usize];
            let hr = (iy - src_rows.start) as usize;
            let line = &h[hr * cols..(hr + 1) * cols];
            for (d, &v) in dst.iter_mut().zip(line) {
                *d += w * v;
            }
        }
    }
    out
}

/// Non-separable counterpart of [`up_separable`]; `taps` is `n x n` with the 2D gain.
pub(crate) fn up_dense<T: Real>(
    src: &[T],
    g: UpGeom,
    taps: &[T],
    ys: Range<isize>,
    xs: Range<isize>,
) -> Block<T> {
    let len = g.len as usize;
    let n = g.n as usize;
    let mut out = Block::zeros(&ys, &xs);
    let cols = out.cols;
    let rows: Vec<Vec<Vec<T>>> = (0..n).map(|t| g.phase_taps(&taps[t * n..(t + 1) * n])).collect();
    for (r, jy) in ys.clone().enumerate() {
        let (ylo, yhi) = g.sources(jy);
        let dst = &mut out.data[r * cols..(r + 1) * cols];
        for iy in ylo..=yhi {
            let phases = &rows[(jy + g.off - g.m * iy) as usize];
            let line = &src[iy as usize * len..(iy as usize + 1) * len];
            for (d, jx) in dst.iter_mut().zip(xs.clone()) {
                *d += g.apply(phases, line, jx);
            }
        }
    }
    out
}

/// Downsampling geometry: output `o` reads high-rate `j` through tap `m o + off - j`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DownGeom {
    pub m: isize,
    pub n: isize,
    pub off: isize,
}

impl DownGeom {
    /// High-rate samples that output range `os` depends on.
    pub fn support(&self, os: &Range<isize>) -> Range<isize> {
        (self.m * os.start + self.off - self.n + 1)..(self.m * (os.end - 1) + self.off + 1)
    }

    #[inline]
    fn taps_in(&self, o: isize, lo: isize, hi: isize) -> (isize, isize) {
        let c = self.m * o + self.off;
        ((c - self.n + 1).max(lo), c.min(hi - 1))
    }

    /// Sum for output `o` over a line whose first sample is high-rate index
    /// `lo`; `rev` holds the taps in increasing sample order.
    #[inline]
    fn apply<T: Real>(&self, rev: &[T], line: &[T], lo: isize, o: isize) -> T {
        let (a, b) = self.taps_in(o, lo, lo + line.len() as isize);
        if b < a {
            return T::default();
        }
        let first = self.m * o + self.off - self.n + 1;
        let t0 = (a - first) as usize;
        let cnt = (b - a + 1) as usize;
        dot(&rev[t0..t0 + cnt], &line[(a - lo) as usize..][..cnt])
    }
}

/// Separable downsampling of `src` into outputs `oys x oxs`. Samples outside
/// the block are zero.
pub(crate) fn down_separable<T: Real>(
    src: &Block<T>,
    g: DownGeom,
    taps: &[T],
    oys: Range<isize>,
    oxs: Range<isize>,
    out: &mut [T],
    out_stride: usize,
) {
    let ocols = (oxs.end - oxs.start) as usize;
    let (ylo, yhi) = (src.y0, src.y0 + src.rows as isize);
    let rev: Vec<T> = taps.iter().rev().copied().collect();
    let mut h = vec![T::default(); src.rows * ocols];
    for r in 0..src.rows {
        let line = src.row(r);
        let dst = &mut h[r * ocols..(r + 1) * ocols];
        for (d, ox) in dst.iter_mut().zip(oxs.clone()) {
            *d = g.apply(&rev, line, src.x0, ox);
        }
    }
    for (r, oy) in oys.enumerate() {
        let (a, b) = g.taps_in(oy, ylo, yhi);
        let c = g.m * oy + g.off;
        let dst = &mut out[r * out_stride..r * out_stride + ocols];
        dst.iter_mut().for_each(|v| *v = T::default());
        for jy in a..=b {
            let w = taps[(c - jy) as usize];
            let hr = (jy - ylo) as usize;
            for (d, &v) in dst.iter_mut().zip(&h[hr * ocols..(hr + 1) * ocols]) {
                *d += w * v;
            }
        }
    }
}

/// Non-separable counterpart of [`down_separable`].
pub(crate) fn down_dense<T: Real>(
    src: &Block<T>,
    g: DownGeom,
    taps: &[T],
    oys: Range<isize>,
    oxs: Range<isize>,
    out: &mut [T],
    out_stride: usize,
) {
    let n = g.n as usize;
    let (ylo, yhi) = (src.y0, src.y0 + src.rows as isize);
    let rev: Vec<Vec<T>> = (0..n).map(|t| taps[t * n..(t + 1) * n].iter().rev().copied().collect()).collect();
    for (r, oy) in oys.enumerate() {
        let (ya, yb) = g.taps_in(oy, ylo, yhi);
        let cy = g.m * oy + g.off;
        for (c, ox) in oxs.clone().enumerate() {
            let mut acc = T::default();
            for jy in ya..=yb {
                let line = src.row((jy - ylo) as usize);
                acc += g.apply(&rev[(cy - jy) as usize], line, src.x0, ox);
            }
            out[r * out_stride + c] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_division_rounds_correctly() {
        assert_eq!(floor_div(-3, 2), -2);
        assert_eq!(ceil_div(-3, 2), -1);
        assert_eq!(ceil_div(3, 2), 2);
        assert_eq!(floor_div(3, 2), 1);
    }
}
