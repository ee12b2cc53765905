//! Command-line front end: filter tables, band plans, generator runs,
//! equivariance scores, kernel benches, spectra and file resampling.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aliasfree::filter::{adjust_for_resampling, design_kaiser, design_radial, FilterSpec};
use aliasfree::fourier::RigidTransform;
use aliasfree::map::FeatureMap;
use aliasfree::metrics::{eq_r, eq_t_frac, eq_t_integer, reports_csv, EqConfig, EquivReport};
use aliasfree::nonlinearity::{bench_csv, bench_fused, bench_matrix, BenchCell, Precision};
use aliasfree::plan::{plan_layers, PlanParams};
use aliasfree::resample::{downsample, upsample};
use aliasfree::spectra::{average_power_spectrum, dataset_stats, slice_csv, spectrum_slice};
use aliasfree::synthesis::{Generator, GeneratorConfig, ImageGenerator, Styles, WeightBundle};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "aliasfree", version, about = "Alias-free signal processing toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Evaluate tiles in 64-bit floats (default).
    #[arg(long, global = true, conflicts_with = "f32")]
    f64: bool,
    /// Evaluate tiles in 32-bit floats.
    #[arg(long, global = true)]
    f32: bool,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Text file of `key=value` lines supplying flags not given on the command line.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

impl Common {
    fn precision(&self) -> Precision {
        if self.f32 {
            Precision::F32
        } else {
            Precision::F64
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design a Kaiser low-pass filter and report its attenuation.
    DesignFilter(DesignFilterArgs),
    /// Print the per-layer band plan.
    Plan(PlanArgs),
    /// Render one image with the random-weight generator.
    Generate(GenerateArgs),
    /// Integer translation equivariance.
    EqT(EqArgs),
    /// Fractional translation equivariance.
    EqTFrac(EqArgs),
    /// Rotation equivariance.
    EqR(EqArgs),
    /// Time the fused nonlinearity against the reference path.
    Bench(BenchArgs),
    /// Average power spectrum of images.
    Spectrum(SpectrumArgs),
    /// Resample an image file by an integer factor.
    Resample(ResampleArgs),
}

#[derive(Args, Debug)]
struct DesignFilterArgs {
    /// Number of taps per dimension.
    #[arg(long)]
    n: usize,
    /// Cutoff as a fraction of the sampling rate.
    #[arg(long)]
    cutoff: f64,
    /// Transition half-width as a fraction of the sampling rate.
    #[arg(long)]
    half_width: f64,
    /// Sampling rate in samples per canvas unit.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Radially symmetric 2D design.
    #[arg(long)]
    radial: bool,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Output resolution.
    #[arg(long, default_value_t = 256)]
    res: usize,
    #[command(flatten)]
    band: BandArgs,
    /// Oversampling factor used for the attenuation column.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Base taps per filter.
    #[arg(long, default_value_t = 6)]
    taps: usize,
    #[arg(long, default_value_t = 256.0)]
    c_base: f64,
    #[arg(long, default_value_t = 8)]
    c_max: usize,
}

#[derive(Args, Debug, Clone)]
struct BandArgs {
    /// Number of layers.
    #[arg(long, default_value_t = 14)]
    layers: usize,
    /// Number of critically sampled layers.
    #[arg(long, default_value_t = 2)]
    critical: usize,
    /// log2 of the first layer's stopband frequency.
    #[arg(long, default_value_t = 2.1)]
    ft0_log2: f64,
    /// log2 of the last layer's stopband over its cutoff.
    #[arg(long, default_value_t = 0.3)]
    ft_last_log2: f64,
}

impl BandArgs {
    fn params(&self, res: usize) -> PlanParams {
        PlanParams {
            output_rate: res,
            layers: self.layers,
            critical: self.critical,
            ft0: self.ft0_log2.exp2(),
            ft_last_ratio: self.ft_last_log2.exp2(),
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// 3x3 kernels, separable filters.
    Translation,
    /// 1x1 kernels, radial down filters.
    Rotation,
}

#[derive(Args, Debug, Clone)]
struct GeneratorArgs {
    /// Output resolution.
    #[arg(long, default_value_t = 128)]
    res: usize,
    /// Architecture variant; defaults per subcommand.
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[command(flatten)]
    band: BandArgs,
    /// Oversampling factor of the nonlinearity.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Base taps per filter.
    #[arg(long, default_value_t = 6)]
    taps: usize,
    /// Use separable down filters in the rotation variant.
    #[arg(long)]
    non_radial: bool,
    /// Replace the up filters by nearest-neighbour replication.
    #[arg(long)]
    nearest_up: bool,
    /// Spread of per-latent style draws; zero keeps all styles at one.
    #[arg(long, default_value_t = 0.0)]
    style_jitter: f64,
    /// Weight bundle file; random weights from --seed otherwise.
    #[arg(long)]
    weights: Option<PathBuf>,
}

impl GeneratorArgs {
    fn build(&self, common: &Common, default: Kind) -> Result<Generator, String> {
        let kind = self.kind.unwrap_or(default);
        let params = self.band.params(self.res);
        let mut cfg = match kind {
            Kind::Translation => GeneratorConfig::build(params, 256.0, 8, 3, false),
            Kind::Rotation => GeneratorConfig::build(params, 512.0, 16, 1, !self.non_radial),
        }
        .map_err(|e| e.to_string())?;
        cfg.oversampling = self.m;
        cfg.taps = self.taps;
        cfg.nearest_up = self.nearest_up;
        cfg.style_jitter = self.style_jitter;
        cfg.precision = common.precision();
        cfg.clamp = common.precision().default_clamp();
        cfg.weight_seed = common.seed;
        let gen = match &self.weights {
            Some(p) => Generator::with_weights(cfg, WeightBundle::load(p).map_err(|e| e.to_string())?),
            None => Generator::new(cfg),
        };
        gen.map_err(|e| e.to_string())
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    gen: GeneratorArgs,
    /// Latent that selects the style draw.
    #[arg(long, default_value_t = 0)]
    latent: u64,
    /// Style file with one row per layer; overrides the latent.
    #[arg(long)]
    styles: Option<PathBuf>,
    /// Horizontal translation in canvas units.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    tx: f64,
    /// Vertical translation in canvas units.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ty: f64,
    /// Rotation in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    angle: f64,
}

#[derive(Args, Debug)]
struct EqArgs {
    #[command(flatten)]
    gen: GeneratorArgs,
    /// Number of random samples.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Offset range in pixels; defaults to an eighth of the resolution.
    #[arg(long)]
    max_offset: Option<f64>,
    /// Lanczos extent of the reference resampling.
    #[arg(long, default_value_t = 3.0)]
    lanczos_a: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Input size in samples per side.
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    /// Only the separable 4x up, 2x down cell.
    #[arg(long)]
    quick: bool,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// Image files (PNG or AFT1); when empty, images come from the generator.
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    gen: GeneratorArgs,
    /// Generated image count when no inputs are given.
    #[arg(long, default_value_t = 16)]
    images: usize,
    /// Slice angles in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 45.0])]
    angles: Vec<f64>,
}

#[derive(Args, Debug)]
struct ResampleArgs {
    /// Input image (PNG or AFT1).
    input: PathBuf,
    /// Upsampling factor.
    #[arg(long, conflicts_with = "down")]
    up: Option<usize>,
    /// Downsampling factor.
    #[arg(long)]
    down: Option<usize>,
    /// Base taps per filter at the lower rate.
    #[arg(long, default_value_t = 6)]
    taps: usize,
    /// Cutoff as a fraction of the lower rate.
    #[arg(long, default_value_t = 0.25)]
    cutoff: f64,
    /// Transition half-width as a fraction of the lower rate.
    #[arg(long, default_value_t = 0.25)]
    half_width: f64,
    /// Radially symmetric filter.
    #[arg(long)]
    radial: bool,
}

fn load_image(path: &Path) -> Result<FeatureMap, String> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let map = if is_png { FeatureMap::load_png(path) } else { FeatureMap::load_aft(path) };
    map.map_err(|e| format!("{}: {e}", path.display()))
}

fn save_image(map: &FeatureMap, path: &Path) -> Result<(), String> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let r = if is_png { map.save_png(path) } else { map.save_aft(path) };
    r.map_err(|e| format!("{}: {e}", path.display()))
}

fn write_out(common: &Common, text: &str) -> Result<(), String> {
    if let Some(p) = &common.out {
        fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(())
}

fn design_filter(a: &DesignFilterArgs, common: &Common) -> Result<String, String> {
    let spec = FilterSpec::new(a.cutoff * a.rate, a.half_width * a.rate, a.rate, a.n).map_err(|e| e.to_string())?;
    let f = if a.radial { design_radial(&spec) } else { design_kaiser(&spec) }.map_err(|e| e.to_string())?;
    let measured = f.stopband_db(spec.cutoff + spec.half_width, 512);
    let mut s = String::new();
    let _ = writeln!(s, "taps: {}", a.n);
    let _ = writeln!(s, "delta_f: {:.6}", spec.delta_f());
    let _ = writeln!(s, "attenuation_db: {:.2}", spec.attenuation());
    let _ = writeln!(s, "beta: {:.6}", spec.beta());
    let _ = writeln!(s, "measured_stopband_db: {measured:.2}");
    let _ = writeln!(s, "sum: {:.15}", f.sum());
    if f.separable {
        let taps: Vec<String> = f.taps.iter().map(|t| format!("{t:.12}")).collect();
        let _ = writeln!(s, "coefficients: {}", taps.join(" "));
    }
    write_out(common, &f.to_record())?;
    Ok(s)
}

fn plan(a: &PlanArgs) -> Result<String, String> {
    plan_layers(a.band.params(a.res))
        .and_then(|p| p.with_channels(a.c_base, a.c_max))
        .and_then(|p| p.table(a.m, a.taps))
        .map_err(|e| e.to_string())
}

fn generate(a: &GenerateArgs, common: &Common) -> Result<String, String> {
    let gen = a.gen.build(common, Kind::Translation)?;
    let g = RigidTransform::rotation(a.angle.to_radians()).then(&RigidTransform::translation(a.tx, a.ty));
    let img = match &a.styles {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            let styles = Styles::from_text(&text).map_err(|e| e.to_string())?;
            gen.synthesize(&g, &styles)
        }
        None => gen.generate(a.latent, &g),
    }
    .map_err(|e| e.to_string())?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("generated.png"));
    save_image(&img, &out)?;
    let (mean, std) = dataset_stats(std::slice::from_ref(&img)).map_err(|e| e.to_string())?;
    Ok(format!("wrote {} ({}x{}, mean {mean:.6}, std {std:.6})\n", out.display(), img.rate(), img.rate()))
}

type Metric = fn(&dyn ImageGenerator, &EqConfig) -> aliasfree::Result<EquivReport>;

fn equivariance(a: &EqArgs, common: &Common, metric: Metric, default: Kind) -> Result<String, String> {
    let gen = a.gen.build(common, default)?;
    let cfg = EqConfig {
        samples: a.samples,
        seed: common.seed,
        offset_range: a.max_offset,
        lanczos_a: a.lanczos_a,
        ..EqConfig::default()
    };
    let report = metric(&gen, &cfg).map_err(|e| e.to_string())?;
    write_out(common, &reports_csv(std::slice::from_ref(&report)))?;
    Ok(report.to_text())
}

fn bench(a: &BenchArgs, common: &Common) -> Result<String, String> {
    let cells = if a.quick {
        vec![BenchCell { up: 4, down: 2, sep_up: true, sep_down: true }]
    } else {
        bench_matrix()
    };
    let rows = bench_fused(a.size, a.channels, &cells, common.seed).map_err(|e| e.to_string())?;
    let csv = bench_csv(&rows);
    write_out(common, &csv)?;
    Ok(csv)
}

fn spectrum(a: &SpectrumArgs, common: &Common) -> Result<String, String> {
    let images = if a.inputs.is_empty() {
        let gen = a.gen.build(common, Kind::Translation)?;
        let res = gen.resolution() as f64;
        (0..a.images as u64)
            .map(|k| {
                // Spread the set over sub-pixel positions.
                let g = RigidTransform::translation(k as f64 * 0.37 / res, k as f64 * 0.61 / res);
                gen.generate(common.seed.wrapping_add(k), &g).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        a.inputs.iter().map(|p| load_image(p)).collect::<Result<Vec<_>, _>>()?
    };
    let (mean, std) = dataset_stats(&images).map_err(|e| e.to_string())?;
    let sp = average_power_spectrum(&images, mean, std).map_err(|e| e.to_string())?;
    let mut s = format!("images: {}\nmean: {mean:.6}\nstd: {std:.6}\n", images.len());
    if let Some(out) = &common.out {
        fs::write(out, sp.to_csv()).map_err(|e| format!("{}: {e}", out.display()))?;
        let _ = writeln!(s, "spectrum: {}", out.display());
    }
    for &angle in &a.angles {
        let slice = spectrum_slice(&sp, angle).map_err(|e| e.to_string())?;
        match &common.out {
            Some(out) => {
                let stem = out.with_extension("");
                let path = PathBuf::from(format!("{}_slice_{angle}.csv", stem.display()));
                fs::write(&path, slice_csv(&slice)).map_err(|e| format!("{}: {e}", path.display()))?;
                let _ = writeln!(s, "slice {angle}: {}", path.display());
            }
            None => {
                let _ = write!(s, "slice {angle}:\n{}", slice_csv(&slice));
            }
        }
    }
    Ok(s)
}

fn resample(a: &ResampleArgs, common: &Common) -> Result<String, String> {
    let input = load_image(&a.input)?;
    let out_path = common.out.as_ref().ok_or("resample needs --out")?;
    let s = input.rate() as f64;
    let design = |low: f64, m: usize| -> Result<_, String> {
        let base = FilterSpec::new(a.cutoff * low, a.half_width * low, low, a.taps).map_err(|e| e.to_string())?;
        let spec = adjust_for_resampling(&base, m).map_err(|e| e.to_string())?;
        if a.radial { design_radial(&spec) } else { design_kaiser(&spec) }.map_err(|e| e.to_string())
    };
    let out = match (a.up, a.down) {
        (Some(m), None) => upsample(&input, m, &design(s, m)?),
        (None, Some(m)) => {
            if m == 0 || input.rate() % m != 0 {
                return Err(format!("size {} is not divisible by {m}", input.rate()));
            }
            downsample(&input, m, &design(s / m as f64, m)?)
        }
        _ => return Err("give exactly one of --up or --down".into()),
    }
    .map_err(|e| e.to_string())?;
    save_image(&out, out_path)?;
    Ok(format!("wrote {} ({}x{})\n", out_path.display(), out.rate(), out.rate()))
}

fn run(cli: &Cli) -> Result<String, String> {
    let common = &cli.common;
    match &cli.command {
        Command::DesignFilter(a) => design_filter(a, common),
        Command::Plan(a) => {
            let text = plan(a)?;
            write_out(common, &text)?;
            Ok(text)
        }
        Command::Generate(a) => generate(a, common),
        Command::EqT(a) => equivariance(a, common, eq_t_integer, Kind::Translation),
        Command::EqTFrac(a) => equivariance(a, common, eq_t_frac, Kind::Translation),
        Command::EqR(a) => equivariance(a, common, eq_r, Kind::Rotation),
        Command::Bench(a) => bench(a, common),
        Command::Spectrum(a) => spectrum(a, common),
        Command::Resample(a) => resample(a, common),
    }
}

/// Appends `--key value` for every config entry whose flag is absent.
fn merge_config(mut argv: Vec<OsString>, path: &Path) -> Result<Vec<OsString>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), no + 1))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        if argv.iter().any(|a| a.to_str().is_some_and(|s| s == flag || s.starts_with(&format!("{flag}=")))) {
            continue;
        }
        match value.trim() {
            "true" => argv.push(flag.into()),
            "false" => {}
            v => {
                argv.push(flag.into());
                argv.push(v.into());
            }
        }
    }
    Ok(argv)
}

/// Path given to `--config`, found before parsing so the file can fill in required flags.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_str()?;
        if s == "--" {
            return None;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn parse(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    match config_path(&argv) {
        Some(path) => match merge_config(argv, &path) {
            Ok(merged) => Cli::try_parse_from(merged),
            Err(msg) => Err(clap::Error::raw(clap::error::ErrorKind::Io, format!("{msg}\n"))),
        },
        None => Cli::try_parse_from(argv),
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
