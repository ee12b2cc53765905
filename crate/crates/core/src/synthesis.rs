//! Forward-only toy generator assembled from the pieces in this crate.
//!
//! Each layer normalizes its input by a frozen magnitude estimate, applies a
//! modulated convolution and bias, and runs the filtered leaky ReLU that moves
//! it from `s_in` to `s_out`. Margins are computed backwards from the output so
//! that every stored sample is computed from stored samples only; the zero
//! exterior then never reaches the canvas.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, format_err, Result};
use crate::filter::{design_kaiser, design_radial, DiscreteFilter};
use crate::fourier::{sample_bank, synthesize_rigid, FourierFeatureBank, RigidTransform};
use crate::map::FeatureMap;
use crate::nonlinearity::{FilteredLrelu, Precision};
use crate::plan::{plan_layers, LayerPlan, PlanParams, FC0};

/// Magnitude decay per image: half-life of 20k images.
pub fn ema_decay_per_image() -> f64 {
    0.5f64.powf(1.0 / 20_000.0)
}

/// Running mean of squares used to normalize a layer input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaState {
    pub sigma2: f64,
    pub decay: f64,
    pub frozen: bool,
}

impl Default for EmaState {
    fn default() -> Self {
        EmaState { sigma2: 1.0, decay: ema_decay_per_image(), frozen: false }
    }
}

impl EmaState {
    pub fn update(&mut self, mean_square: f64) {
        if !self.frozen {
            self.sigma2 = self.decay * self.sigma2 + (1.0 - self.decay) * mean_square;
        }
    }
}

/// Divides by `sqrt(sigma2)`, updating the state first when `training`.
pub fn ema_normalize(map: FeatureMap, state: &mut EmaState, training: bool) -> FeatureMap {
    if training {
        state.update(map.canvas_mean_square());
    }
    let scale = 1.0 / state.sigma2.sqrt();
    if scale == 1.0 {
        return map;
    }
    map.map_values(|v| v * scale)
}

/// Convolution weights `[c_out][c_in][k][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl ConvWeights {
    pub fn new(c_out: usize, c_in: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if k.is_multiple_of(2) || c_out == 0 || c_in == 0 {
            return domain(format!("invalid kernel shape {c_out}x{c_in}x{k}x{k}"));
        }
        if data.len() != c_out * c_in * k * k {
            return domain(format!("expected {} weights, got {}", c_out * c_in * k * k, data.len()));
        }
        Ok(ConvWeights { c_out, c_in, k, data })
    }

    /// `N(0, 1) / sqrt(fan_in)`, rounded to f32 so files round-trip exactly.
    pub fn random(c_out: usize, c_in: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / ((c_in * k * k) as f64).sqrt();
        let data = (0..c_out * c_in * k * k)
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                (v * scale) as f32 as f64
            })
            .collect();
        ConvWeights { c_out, c_in, k, data }
    }

    pub fn identity(c: usize) -> Self {
        let mut data = vec![0.0; c * c];
        (0..c).for_each(|i| data[i * c + i] = 1.0);
        ConvWeights { c_out: c, c_in: c, k: 1, data }
    }

    fn tap(&self, o: usize, i: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.data[(o * self.c_in + i) * kk..][..kk]
    }
}

/// Valid correlation; a `k x k` kernel consumes `(k - 1) / 2` margin samples.
pub fn conv2d(map: &FeatureMap, w: &ConvWeights) -> Result<FeatureMap> {
    if w.c_in != map.channels() {
        return domain(format!("kernel expects {} channels, map has {}", w.c_in, map.channels()));
    }
    let half = (w.k - 1) / 2;
    if map.margin() < half {
        return domain(format!("margin {} too small for a {}x{} kernel", map.margin(), w.k, w.k));
    }
    let size = map.size();
    let out_size = size - 2 * half;
    let mut out = FeatureMap::zeros(w.c_out, map.rate(), map.margin() - half);
    for o in 0..w.c_out {
        let dst = out.channel_mut(o);
        for i in 0..w.c_in {
            let src = map.channel(i);
            let taps = w.tap(o, i);
            for ky in 0..w.k {
                for kx in 0..w.k {
                    let t = taps[ky * w.k + kx];
                    if t == 0.0 {
                        continue;
                    }
                    for y in 0..out_size {
                        let s = &src[(y + ky) * size + kx..][..out_size];
                        let d = &mut dst[y * out_size..(y + 1) * out_size];
                        for (dv, &sv) in d.iter_mut().zip(s) {
                            *dv += t * sv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Scales each input channel by `style`, then rescales every output filter to unit norm.
pub fn modulate(w: &ConvWeights, style: &[f64]) -> Result<ConvWeights> {
    if style.len() != w.c_in {
        return domain(format!("style has {} entries, kernel has {} inputs", style.len(), w.c_in));
    }
    if style.iter().any(|v| !v.is_finite()) {
        return domain("style contains non-finite values");
    }
    let kk = w.k * w.k;
    let mut data = w.data.clone();
    for o in 0..w.c_out {
        let row = &mut data[o * w.c_in * kk..(o + 1) * w.c_in * kk];
        for (i, chunk) in row.chunks_exact_mut(kk).enumerate() {
            chunk.iter_mut().for_each(|v| *v *= style[i]);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    ConvWeights::new(w.c_out, w.c_in, w.k, data)
}

pub fn modulated_conv(map: &FeatureMap, w: &ConvWeights, style: &[f64]) -> Result<FeatureMap> {
    conv2d(map, &modulate(w, style)?)
}

/// Weights of one synthesis layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub conv: ConvWeights,
    pub bias: Vec<f64>,
}

/// All trainable parameters: one entry per layer plus the RGB projection.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub layers: Vec<LayerWeights>,
    pub rgb: LayerWeights,
}

const WEIGHT_MAGIC: &[u8; 4] = b"AFW1";

impl WeightBundle {
    pub fn random(plan: &LayerPlan, kernel_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = plan.layers[0].channels;
        let mut layers = Vec::with_capacity(plan.len());
        for l in &plan.layers {
            let conv = ConvWeights::random(l.channels, c_in, kernel_size, &mut rng);
            layers.push(LayerWeights { conv, bias: vec![0.0; l.channels] });
            c_in = l.channels;
        }
        let rgb = LayerWeights { conv: ConvWeights::random(3, c_in, 1, &mut rng), bias: vec![0.0; 3] };
        WeightBundle { layers, rgb }
    }

    fn all(&self) -> impl Iterator<Item = &LayerWeights> {
        self.layers.iter().chain(std::iter::once(&self.rgb))
    }

    /// Header: magic, layer count, then `c_out c_in k` per layer (RGB last);
    /// body: f32 weights then f32 biases for each layer in order.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(WEIGHT_MAGIC)?;
        w.write_all(&(self.layers.len() as u32 + 1).to_le_bytes())?;
        for l in self.all() {
            for v in [l.conv.c_out, l.conv.c_in, l.conv.k] {
                w.write_all(&(v as u32).to_le_bytes())?;
            }
        }
        for l in self.all() {
            for &v in l.conv.data.iter().chain(&l.bias) {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHT_MAGIC {
            return format_err("not a weight bundle");
        }
        let mut u32_at = || -> Result<usize> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        let count = u32_at()?;
        if count < 2 {
            return format_err("weight bundle needs at least one layer and the RGB projection");
        }
        let shapes: Vec<[usize; 3]> = (0..count)
            .map(|_| Ok([u32_at()?, u32_at()?, u32_at()?]))
            .collect::<Result<_>>()?;
        let mut all = Vec::with_capacity(count);
        for [c_out, c_in, k] in shapes {
            let mut floats = |n: usize| -> Result<Vec<f64>> {
                let mut buf = vec![0u8; n * 4];
                r.read_exact(&mut buf)?;
                Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
            };
            let data = floats(c_out * c_in * k * k)?;
            let bias = floats(c_out)?;
            all.push(LayerWeights { conv: ConvWeights::new(c_out, c_in, k, data)?, bias });
        }
        let rgb = all.pop().expect("count checked above");
        Ok(WeightBundle { layers: all, rgb })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Per-layer channel scales, RGB projection last.
#[derive(Debug, Clone, PartialEq)]
pub struct Styles(pub Vec<Vec<f64>>);

impl Styles {
    pub fn ones(weights: &WeightBundle) -> Self {
        Styles(weights.all().map(|l| vec![1.0; l.conv.c_in]).collect())
    }

    /// Styles `1 + jitter * N(0, 1)` drawn from `latent`; zero jitter gives all ones.
    pub fn for_latent(weights: &WeightBundle, latent: u64, jitter: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(latent ^ 0x5eed_57a1_e000_0000);
        Styles(
            weights
                .all()
                .map(|l| {
                    (0..l.conv.c_in)
                        .map(|_| {
                            let v: f64 = StandardNormal.sample(&mut rng);
                            1.0 + jitter * v
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// One whitespace-separated row per layer.
    pub fn to_text(&self) -> String {
        self.0
            .iter()
            .map(|row| row.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ") + "\n")
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| crate::Error::Format(format!("{t}: {e}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
            .map(Styles)
    }

    fn check(&self, weights: &WeightBundle) -> Result<()> {
        let ok = self.0.len() == weights.layers.len() + 1
            && self.0.iter().zip(weights.all()).all(|(s, l)| s.len() == l.conv.c_in);
        if !ok {
            return domain("style rows do not match the layer shapes");
        }
        Ok(())
    }
}

/// Everything that fixes a generator apart from its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub plan: LayerPlan,
    pub kernel_size: usize,
    pub radial_filters: bool,
    /// Smallest margin kept between layers, in samples at the layer's own rate.
    pub margin: usize,
    pub oversampling: usize,
    pub taps: usize,
    /// Replace the up filters by nearest-neighbour replication.
    pub nearest_up: bool,
    pub precision: Precision,
    pub clamp: Option<f64>,
    pub weight_seed: u64,
    pub bank_seed: u64,
    /// Spread of the per-latent style draw; zero keeps every style at one.
    pub style_jitter: f64,
}

impl GeneratorConfig {
    /// 3x3 kernels and separable filters, with toy channel counts.
    pub fn translation(output_rate: usize) -> Result<Self> {
        Self::build(PlanParams::new(output_rate), 256.0, 8, 3, false)
    }

    /// 1x1 kernels, radial down filters and doubled channel parameters.
    pub fn rotation(output_rate: usize) -> Result<Self> {
        Self::build(PlanParams::new(output_rate), 512.0, 16, 1, true)
    }

    pub fn build(params: PlanParams, c_base: f64, c_max: usize, kernel_size: usize, radial: bool) -> Result<Self> {
        let plan = plan_layers(params)?.with_channels(c_base, c_max)?;
        Ok(GeneratorConfig {
            plan,
            kernel_size,
            radial_filters: radial,
            margin: 10,
            oversampling: 2,
            taps: 6,
            nearest_up: false,
            precision: Precision::F64,
            clamp: None,
            weight_seed: 0,
            bank_seed: 1,
            style_jitter: 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size != 1 && self.kernel_size != 3 {
            return domain(format!("kernel size must be 1 or 3, got {}", self.kernel_size));
        }
        if self.radial_filters && self.kernel_size != 1 {
            return domain("radial filters require 1x1 kernels");
        }
        if !(self.style_jitter >= 0.0 && self.style_jitter.is_finite()) {
            return domain("style jitter must be finite and non-negative");
        }
        if self.oversampling == 0 || self.taps == 0 {
            return domain("oversampling and tap count must be at least 1");
        }
        if self.plan.layers.iter().any(|l| l.channels == 0) {
            return domain("plan has no channel counts");
        }
        Ok(())
    }
}

/// Input and output margins of one layer, in its own samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerMargins {
    pub input: usize,
    pub output: usize,
}

struct LayerOp {
    op: FilteredLrelu,
    up: DiscreteFilter,
    down: DiscreteFilter,
    margins: LayerMargins,
}

/// A ready-to-run generator with frozen magnitude statistics.
pub struct Generator {
    pub config: GeneratorConfig,
    pub bank: FourierFeatureBank,
    pub weights: WeightBundle,
    ema: Vec<EmaState>,
    ops: Vec<LayerOp>,
}

/// What the equivariance metrics need from an image generator.
pub trait ImageGenerator: Sync {
    fn resolution(&self) -> usize;
    /// Canvas-only RGB image for `latent`, with the input moved by `g`.
    fn generate(&self, latent: u64, g: &RigidTransform) -> Result<FeatureMap>;
}

fn filter_pair(config: &GeneratorConfig, i: usize) -> Result<(usize, usize, DiscreteFilter, DiscreteFilter)> {
    let plan = &config.plan;
    let m = config.oversampling;
    let (up, down) = plan.factors(i, m);
    let high = plan.temp_rate(i, m) as f64;
    let up_f = if up == 1 {
        DiscreteFilter::unit(high)
    } else if config.nearest_up {
        DiscreteFilter::nearest(up, high)
    } else {
        design_kaiser(&plan.up_filter_spec(i, m, config.taps)?)?
    };
    let down_f = if down == 1 {
        DiscreteFilter::unit(high)
    } else {
        let spec = plan.down_filter_spec(i, m, config.taps)?;
        if config.radial_filters && !plan.layers[i].critical {
            design_radial(&spec)?
        } else {
            design_kaiser(&spec)?
        }
    };
    Ok((up, down, up_f, down_f))
}

/// Smallest input margin whose samples determine `out_margin` output samples.
fn required_input_margin(
    s_in: usize,
    s_out: usize,
    high: usize,
    up_taps: usize,
    down_taps: usize,
    kernel: usize,
    out_margin: usize,
) -> usize {
    let x_out = (0.5 - out_margin as f64) / s_out as f64;
    let reach = (down_taps - 1) as f64 / (2.0 * high as f64)
        + (up_taps - 1) as f64 / (2.0 * high as f64)
        + ((kernel - 1) / 2) as f64 / s_in as f64;
    let x_in = x_out - reach;
    (0.5 - x_in * s_in as f64).ceil() as usize + 1
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        let weights = WeightBundle::random(&config.plan, config.kernel_size, config.weight_seed);
        Self::with_weights(config, weights)
    }

    pub fn with_weights(config: GeneratorConfig, weights: WeightBundle) -> Result<Self> {
        config.validate()?;
        let plan = &config.plan;
        if weights.layers.len() != plan.len() {
            return domain(format!("{} weight layers for a {}-layer plan", weights.layers.len(), plan.len()));
        }
        let mut c_in = plan.layers[0].channels;
        for (l, w) in plan.layers.iter().zip(&weights.layers) {
            if w.conv.c_in != c_in || w.conv.c_out != l.channels || w.conv.k != config.kernel_size || w.bias.len() != l.channels {
                return domain(format!("layer {} weights do not match the plan", l.index));
            }
            c_in = l.channels;
        }
        if weights.rgb.conv.c_in != c_in || weights.rgb.conv.c_out != 3 || weights.rgb.conv.k != 1 {
            return domain("RGB projection must be 1x1 with 3 outputs");
        }
        let bank = sample_bank(plan.layers[0].channels, FC0, config.bank_seed)?;

        // Margins from the output backwards.
        let n = plan.len();
        let mut ops: Vec<LayerOp> = Vec::with_capacity(n);
        let mut out_margin = 0;
        for i in (0..n).rev() {
            let (up, down, up_f, down_f) = filter_pair(&config, i)?;
            let l = &plan.layers[i];
            let high = plan.temp_rate(i, config.oversampling);
            let mut input = required_input_margin(l.s_in, l.s_out, high, up_f.size, down_f.size, config.kernel_size, out_margin);
            let half = (config.kernel_size - 1) / 2;
            while !((input - half) * up).is_multiple_of(down) {
                input += 1;
            }
            let op = FilteredLrelu::new(up, down).with_clamp(config.clamp);
            ops.push(LayerOp { op, up: up_f, down: down_f, margins: LayerMargins { input, output: out_margin } });
            out_margin = input.max(config.margin);
        }
        ops.reverse();
        // The previous layer feeds exactly the margin the next one asked for.
        for i in 1..n {
            ops[i].margins.input = ops[i - 1].margins.output;
        }

        let mut gen = Generator { config, bank, weights, ema: vec![EmaState::default(); n + 1], ops };
        gen.calibrate()?;
        Ok(gen)
    }

    /// Input margin of the first layer and output margin of every layer.
    pub fn margins(&self) -> Vec<LayerMargins> {
        self.ops.iter().map(|o| o.margins).collect()
    }

    pub fn filters(&self, i: usize) -> (&DiscreteFilter, &DiscreteFilter) {
        (&self.ops[i].up, &self.ops[i].down)
    }

    pub fn ema_states(&self) -> &[EmaState] {
        &self.ema
    }

    /// One identity-transform pass with decay 0, then freeze.
    fn calibrate(&mut self) -> Result<()> {
        let styles = Styles::ones(&self.weights);
        let mut states: Vec<EmaState> = self
            .ema
            .iter()
            .map(|_| EmaState { sigma2: 1.0, decay: 0.0, frozen: false })
            .collect();
        self.forward(&RigidTransform::IDENTITY, &styles, &mut states, true)?;
        for s in &mut states {
            s.decay = ema_decay_per_image();
            s.frozen = true;
        }
        self.ema = states;
        Ok(())
    }

    /// Input features for a transform.
    pub fn input(&self, g: &RigidTransform) -> Result<FeatureMap> {
        synthesize_rigid(&self.bank, g, self.config.plan.layers[0].s_in, self.ops[0].margins.input)
    }

    /// One layer: normalize, modulated conv, bias, filtered leaky ReLU, crop.
    pub fn run_layer(&self, i: usize, x: FeatureMap, style: &[f64], state: &mut EmaState, training: bool) -> Result<FeatureMap> {
        let spec = &self.config.plan.layers[i];
        if x.rate() != spec.s_in {
            return domain(format!("layer {i} expects rate {}, got {}", spec.s_in, x.rate()));
        }
        let op = &self.ops[i];
        let x = ema_normalize(x, state, training);
        let w = &self.weights.layers[i];
        let mut y = modulated_conv(&x, &w.conv, style)?;
        for (c, &b) in w.bias.iter().enumerate() {
            if b != 0.0 {
                y.channel_mut(c).iter_mut().for_each(|v| *v += b);
            }
        }
        op.op.fused(&y, &op.up, &op.down, Some(op.margins.output), self.config.precision)
    }

    fn forward(&self, g: &RigidTransform, styles: &Styles, states: &mut [EmaState], training: bool) -> Result<FeatureMap> {
        styles.check(&self.weights)?;
        let mut x = self.input(g)?;
        for (i, state) in states[..self.ops.len()].iter_mut().enumerate() {
            x = self.run_layer(i, x, &styles.0[i], state, training)?;
        }
        let x = ema_normalize(x, &mut states[self.ops.len()], training);
        let rgb = &self.weights.rgb;
        let style = &styles.0[self.ops.len()];
        let mut w = rgb.conv.clone();
        for row in w.data.chunks_exact_mut(w.c_in) {
            row.iter_mut().zip(style).for_each(|(v, s)| *v *= s);
        }
        let mut x = conv2d(&x.cropped(0)?, &w)?;
        for (c, &b) in rgb.bias.iter().enumerate() {
            x.channel_mut(c).iter_mut().for_each(|v| *v += b);
        }
        Ok(x.map_values(|v| v * 0.25))
    }

    /// Canvas-only RGB image.
    pub fn synthesize(&self, g: &RigidTransform, styles: &Styles) -> Result<FeatureMap> {
        let mut states = self.ema.clone();
        self.forward(g, styles, &mut states, false)
    }
}

impl ImageGenerator for Generator {
    fn resolution(&self) -> usize {
        self.config.plan.output_rate()
    }

    fn generate(&self, latent: u64, g: &RigidTransform) -> Result<FeatureMap> {
        self.synthesize(g, &Styles::for_latent(&self.weights, latent, self.config.style_jitter))
    }
}

/// Builds a generator around `bank` and `weights` and renders one image.
pub fn run_generator(
    bank: &FourierFeatureBank,
    transform: &crate::fourier::Transform2D,
    config: &GeneratorConfig,
    weights: Option<WeightBundle>,
    styles: Option<&Styles>,
) -> Result<FeatureMap> {
    let weights = weights.unwrap_or_else(|| WeightBundle::random(&config.plan, config.kernel_size, config.weight_seed));
    let mut gen = Generator::with_weights(config.clone(), weights)?;
    if gen.bank.channels() != bank.channels() {
        return domain(format!("bank has {} channels, first layer expects {}", bank.channels(), gen.bank.channels()));
    }
    if gen.bank != *bank {
        gen.bank = bank.clone();
        gen.calibrate()?;
    }
    let g = transform.normalize()?;
    match styles {
        Some(s) => gen.synthesize(&g, s),
        None => gen.synthesize(&g, &Styles::ones(&gen.weights)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_map(channels: usize, rate: usize, margin: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::from_fn(channels, rate, margin, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_conv_is_identity() {
        let x = random_map(3, 8, 2, 1);
        assert_eq!(conv2d(&x, &ConvWeights::identity(3)).unwrap(), x);
    }

    #[test]
    fn conv3_matches_brute_force() {
        let x = random_map(2, 6, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = ConvWeights::random(3, 2, 3, &mut rng);
        let y = conv2d(&x, &w).unwrap();
        assert_eq!((y.rate(), y.margin()), (6, 1));
        for o in 0..3 {
            for r in 0..y.size() {
                for c in 0..y.size() {
                    let mut acc = 0.0;
                    for i in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += w.data[((o * 2 + i) * 3 + ky) * 3 + kx] * x.get(i, r + ky, c + kx);
                            }
                        }
                    }
                    assert!((y.get(o, r, c) - acc).abs() < 1e-13);
                }
            }
        }
        assert!(conv2d(&random_map(3, 6, 2, 0), &w).is_err());
        assert!(conv2d(&random_map(2, 6, 0, 0), &w).is_err());
    }

    #[test]
    fn pointwise_conv_commutes_with_pixel_permutation() {
        let x = random_map(2, 4, 0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = ConvWeights::random(2, 2, 1, &mut rng);
        let flip = |m: &FeatureMap| FeatureMap::from_fn(m.channels(), 4, 0, |c, y, x| {
            let (r, col) = ((y * 4.0 - 0.5) as usize, (x * 4.0 - 0.5) as usize);
            m.get(c, 3 - col, r)
        });
        assert_eq!(conv2d(&flip(&x), &w).unwrap(), flip(&conv2d(&x, &w).unwrap()));
    }

    #[test]
    fn modulation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = ConvWeights::random(2, 3, 3, &mut rng);
        let x = random_map(3, 6, 2, 7);
        let unit = modulate(&w, &[1.0; 3]).unwrap();
        let unit_out = modulated_conv(&x, &unit, &[1.0; 3]).unwrap();
        let plain = conv2d(&x, &unit).unwrap();
        assert!(unit_out.data().iter().zip(plain.data()).all(|(a, b)| (a - b).abs() < 1e-12));
        let style = [0.3, -1.2, 2.0];
        let a = modulated_conv(&x, &w, &style).unwrap();
        let b = modulated_conv(&x, &w, &style.map(|v| v * 7.5)).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() < 1e-10));
        let z = modulated_conv(&x, &w, &[0.0; 3]).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(modulate(&w, &[1.0, f64::NAN, 1.0]).is_err());
        assert!(modulate(&w, &[1.0; 2]).is_err());
    }

    #[test]
    fn ema_examples() {
        let x = random_map(1, 4, 0, 8);
        let mut fresh = EmaState::default();
        assert_eq!(ema_normalize(x.clone(), &mut fresh, false), x);
        let c = FeatureMap::from_fn(1, 4, 0, |_, _, _| 3.0);
        let mut s = EmaState { decay: 0.9, ..EmaState::default() };
        for _ in 0..400 {
            ema_normalize(c.clone(), &mut s, true);
        }
        assert!((s.sigma2 - 9.0).abs() < 1e-9);
        let out = ema_normalize(c.clone(), &mut s, true);
        assert!((out.canvas_mean_square() - 1.0).abs() < 1e-9);
        s.frozen = true;
        let before = s;
        let a = ema_normalize(x.clone(), &mut s, true);
        assert_eq!(s, before);
        assert_eq!(a, ema_normalize(x, &mut s, true));
    }

    fn small_config() -> GeneratorConfig {
        let mut params = PlanParams::new(16);
        params.layers = 4;
        GeneratorConfig::build(params, 64.0, 4, 3, false).unwrap()
    }

    #[test]
    fn generator_is_deterministic_and_canvas_only() {
        let gen = Generator::new(small_config()).unwrap();
        let g = RigidTransform::translation(0.1, 0.0);
        let styles = Styles::for_latent(&gen.weights, 3, 0.5);
        let a = gen.synthesize(&g, &styles).unwrap();
        assert_eq!((a.channels(), a.rate(), a.margin()), (3, 16, 0));
        assert_eq!(a, gen.synthesize(&g, &styles).unwrap());
        assert!(gen.ema_states().iter().all(|s| s.frozen && s.sigma2 > 0.0));
        let m = gen.margins();
        assert!(m[..m.len() - 1].iter().all(|l| l.output >= 10));
    }

    #[test]
    fn layer_output_margin_is_exact() {
        let gen = Generator::new(small_config()).unwrap();
        let x = gen.input(&RigidTransform::IDENTITY).unwrap();
        let mut s = gen.ema_states()[0];
        let y = gen.run_layer(0, x, &vec![1.0; gen.weights.layers[0].conv.c_in], &mut s, false).unwrap();
        assert_eq!(y.margin(), gen.margins()[0].output);
        assert_eq!(y.rate(), gen.config.plan.layers[0].s_out);
    }

    #[test]
    fn weight_and_style_files_round_trip() {
        let gen = Generator::new(small_config()).unwrap();
        let mut buf = Vec::new();
        gen.weights.write_to(&mut buf).unwrap();
        assert_eq!(WeightBundle::read_from(&buf[..]).unwrap(), gen.weights);
        assert!(WeightBundle::read_from(&b"nope"[..]).is_err());
        let styles = Styles::for_latent(&gen.weights, 9, 0.5);
        assert_eq!(Styles::from_text(&styles.to_text()).unwrap(), styles);
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        c.radial_filters = true;
        assert!(Generator::new(c).is_err());
        let mut c = small_config();
        c.kernel_size = 5;
        assert!(Generator::new(c).is_err());
    }
}
