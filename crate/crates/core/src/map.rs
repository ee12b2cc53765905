//! Multi-channel sample grids on the extended canvas, plus their file formats.
//!
//! A map with rate `s` and margin `M` stores `s + 2M` samples per axis. Sample
//! `i` sits at the pixel center `(i - M + 0.5) / s`, so indices `M..M + s` cover
//! the unit canvas.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{domain, format_err, Result};

const AFT_MAGIC: &[u8; 4] = b"AFT1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    rate: usize,
    margin: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, rate: usize, margin: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || rate == 0 {
            return domain("feature maps need at least one channel and a positive rate");
        }
        let size = rate + 2 * margin;
        if data.len() != channels * size * size {
            return domain(format!(
                "expected {} samples for {channels}x{size}x{size}, got {}",
                channels * size * size,
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("feature map contains non-finite samples");
        }
        Ok(Self { channels, rate, margin, data })
    }

    pub fn zeros(channels: usize, rate: usize, margin: usize) -> Self {
        let size = rate + 2 * margin;
        Self { channels, rate, margin, data: vec![0.0; channels * size * size] }
    }

    /// Builds a map by evaluating `f(channel, y, x)` at every sample position
    /// (canvas coordinates).
    pub fn from_fn(
        channels: usize,
        rate: usize,
        margin: usize,
        mut f: impl FnMut(usize, f64, f64) -> f64,
    ) -> Self {
        let mut map = Self::zeros(channels, rate, margin);
        let size = map.size();
        let pos: Vec<f64> = (0..size).map(|i| map.position(i)).collect();
        for c in 0..channels {
            let plane = map.channel_mut(c);
            for (y, row) in plane.chunks_exact_mut(size).enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = f(c, pos[y], pos[x]);
                }
            }
        }
        map
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rate(&self) -> usize {
        self.rate
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    /// Samples per axis, `rate + 2 * margin`.
    pub fn size(&self) -> usize {
        self.rate + 2 * self.margin
    }

    pub fn height(&self) -> usize {
        self.size()
    }

    pub fn width(&self) -> usize {
        self.size()
    }

    /// Canvas coordinate of sample index `i` along either axis.
    pub fn position(&self, i: usize) -> f64 {
        (i as f64 - self.margin as f64 + 0.5) / self.rate as f64
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.size() * self.size();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.size() * self.size();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        let s = self.size();
        self.data[(c * s + y) * s + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let s = self.size();
        self.data[(c * s + y) * s + x] = v;
    }

    /// Same rate and channel count, different margin.
    pub fn same_geometry(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels && self.rate == other.rate && self.margin == other.margin
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map_values(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    /// Mean of squares over the canvas region of all channels.
    pub fn canvas_mean_square(&self) -> f64 {
        let s = self.size();
        let (lo, hi) = (self.margin, self.margin + self.rate);
        let mut acc = 0.0;
        for c in 0..self.channels {
            let plane = self.channel(c);
            for y in lo..hi {
                acc += plane[y * s + lo..y * s + hi].iter().map(|v| v * v).sum::<f64>();
            }
        }
        acc / (self.channels * self.rate * self.rate) as f64
    }

    /// Copies out the central `rate + 2 * margin` region.
    pub fn cropped(&self, margin: usize) -> Result<FeatureMap> {
        if margin > self.margin {
            return domain(format!(
                "cannot crop to margin {margin}, map only has {}",
                self.margin
            ));
        }
        let off = self.margin - margin;
        let s_in = self.size();
        let s_out = self.rate + 2 * margin;
        let mut out = FeatureMap::zeros(self.channels, self.rate, margin);
        for c in 0..self.channels {
            let src = self.channel(c);
            let dst = out.channel_mut(c);
            for y in 0..s_out {
                let row = (y + off) * s_in + off;
                dst[y * s_out..(y + 1) * s_out].copy_from_slice(&src[row..row + s_out]);
            }
        }
        Ok(out)
    }

    /// Channels `start..end` as a new map.
    pub fn select_channels(&self, start: usize, end: usize) -> Result<FeatureMap> {
        if start >= end || end > self.channels {
            return domain(format!("channel range {start}..{end} out of bounds"));
        }
        let n = self.size() * self.size();
        Ok(FeatureMap {
            channels: end - start,
            rate: self.rate,
            margin: self.margin,
            data: self.data[start * n..end * n].to_vec(),
        })
    }

    pub fn write_aft(&self, mut w: impl Write) -> Result<()> {
        w.write_all(AFT_MAGIC)?;
        let size = self.size() as u32;
        for v in [self.channels as u32, size, size, self.margin as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.rate as f64).to_le_bytes())?;
        for &v in &self.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_aft(mut r: impl Read) -> Result<FeatureMap> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != AFT_MAGIC {
            return format_err("not an AFT1 tensor file");
        }
        let mut u = [0u8; 4];
        let mut header = [0u32; 4];
        for h in header.iter_mut() {
            r.read_exact(&mut u)?;
            *h = u32::from_le_bytes(u);
        }
        let [channels, height, width, margin] = header.map(|v| v as usize);
        let mut f = [0u8; 8];
        r.read_exact(&mut f)?;
        let rate = f64::from_le_bytes(f);
        if height != width {
            return format_err(format!("non-square tensor {height}x{width}"));
        }
        if rate.fract() != 0.0 || rate < 1.0 || height != rate as usize + 2 * margin {
            return format_err(format!(
                "inconsistent geometry: size {height}, rate {rate}, margin {margin}"
            ));
        }
        let count = channels * height * width;
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        FeatureMap::new(channels, rate as usize, margin, data)
    }

    pub fn save_aft(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_aft(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_aft(path: impl AsRef<Path>) -> Result<FeatureMap> {
        Self::read_aft(BufReader::new(File::open(path)?))
    }

    /// Writes the canvas region as an 8-bit PNG, mapping `[-1, 1]` to `[0, 255]`.
    /// One channel gives grayscale, three give RGB.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let canvas = self.cropped(0)?;
        let s = canvas.rate as u32;
        let plane = (s * s) as usize;
        match canvas.channels {
            1 => {
                let pixels = canvas.data.iter().map(|&v| to_u8(v)).collect();
                image::GrayImage::from_raw(s, s, pixels)
                    .expect("buffer size matches")
                    .save(path)?;
            }
            3 => {
                let mut pixels = Vec::with_capacity(plane * 3);
                for i in 0..plane {
                    for c in 0..3 {
                        pixels.push(to_u8(canvas.data[c * plane + i]));
                    }
                }
                image::RgbImage::from_raw(s, s, pixels)
                    .expect("buffer size matches")
                    .save(path)?;
            }
            n => return domain(format!("PNG export needs 1 or 3 channels, got {n}")),
        }
        Ok(())
    }

    /// Reads a square PNG as a canvas map (margin 0) with values in `[-1, 1]`.
    pub fn load_png(path: impl AsRef<Path>) -> Result<FeatureMap> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w != h {
            return format_err(format!("PNG must be square, got {w}x{h}"));
        }
        let plane = w * h;
        let (channels, raw) = match img.color().channel_count() {
            1 | 2 => (1, img.to_luma8().into_raw()),
            _ => (3, img.to_rgb8().into_raw()),
        };
        let mut data = vec![0.0; channels * plane];
        for i in 0..plane {
            for c in 0..channels {
                data[c * plane + i] = raw[i * channels + c] as f64 / 127.5 - 1.0;
            }
        }
        FeatureMap::new(channels, w, 0, data)
    }
}

/// `[-1, 1] -> [0, 255]`, rounding half away from zero.
fn to_u8(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_and_positions() {
        let m = FeatureMap::zeros(2, 8, 3);
        assert_eq!(m.size(), 14);
        assert_eq!(m.position(3), 0.5 / 8.0);
        assert_eq!(m.position(10), 7.5 / 8.0);
        assert!(FeatureMap::new(1, 4, 0, vec![0.0; 15]).is_err());
        assert!(FeatureMap::new(1, 2, 0, vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn crop_keeps_interior() {
        let m = FeatureMap::from_fn(2, 6, 2, |c, y, x| c as f64 + 10.0 * y + x);
        assert_eq!(m.cropped(2).unwrap(), m);
        let canvas = m.cropped(0).unwrap();
        assert_eq!(canvas.size(), 6);
        for c in 0..2 {
            for y in 0..6 {
                for x in 0..6 {
                    assert_eq!(canvas.get(c, y, x), m.get(c, y + 2, x + 2));
                }
            }
        }
        assert!(m.cropped(3).is_err());
    }

    #[test]
    fn aft_round_trip_through_f32() {
        let m = FeatureMap::from_fn(3, 5, 1, |c, y, x| (c as f64 - y) * x);
        let mut buf = Vec::new();
        m.write_aft(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"AFT1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 5.0);
        assert_eq!(buf.len(), 28 + 4 * 3 * 49);
        let back = FeatureMap::read_aft(buf.as_slice()).unwrap();
        for (a, b) in back.data().iter().zip(m.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(FeatureMap::read_aft(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn png_quantization_rounds_half_away() {
        assert_eq!(to_u8(-1.0), 0);
        assert_eq!(to_u8(1.0), 255);
        assert_eq!(to_u8(0.0), 128); // 127.5 rounds up
        assert_eq!(to_u8(-2.0), 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let m = FeatureMap::from_fn(3, 4, 1, |c, y, _| c as f64 * 0.3 - y);
        m.save_png(&path).unwrap();
        let back = FeatureMap::load_png(&path).unwrap();
        assert_eq!((back.channels(), back.rate(), back.margin()), (3, 4, 0));
        let canvas = m.cropped(0).unwrap();
        for (a, b) in back.data().iter().zip(canvas.data()) {
            assert!((a - b.clamp(-1.0, 1.0)).abs() <= 1.0 / 255.0 + 1e-12);
        }
    }
}
