//! Per-layer band plan: cutoffs, stopbands, sampling rates and widths.

use std::fmt::Write as _;

use crate::error::{domain, Result};
use crate::filter::{kaiser_attenuation, FilterSpec};

/// Cutoff of the first layer, matching the Fourier input band.
pub const FC0: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanParams {
    pub output_rate: usize,
    pub layers: usize,
    pub critical: usize,
    pub ft0: f64,
    /// `f_t` of the last layer as a multiple of its cutoff.
    pub ft_last_ratio: f64,
}

impl PlanParams {
    pub fn new(output_rate: usize) -> Self {
        PlanParams { output_rate, layers: 14, critical: 2, ft0: 2f64.powf(2.1), ft_last_ratio: 2f64.powf(0.3) }
    }
}

/// One synthesis layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub index: usize,
    pub fc: f64,
    pub ft: f64,
    pub fh: f64,
    pub s_in: usize,
    pub s_out: usize,
    pub channels: usize,
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub params: PlanParams,
    pub layers: Vec<LayerSpec>,
}

/// Evaluates the geometric schedules and the rate and width rules.
pub fn plan_layers(params: PlanParams) -> Result<LayerPlan> {
    let PlanParams { output_rate: sn, layers: n, critical, ft0, ft_last_ratio } = params;
    if sn < 4 || !sn.is_power_of_two() {
        return domain(format!("output rate must be a power of two of at least 4, got {sn}"));
    }
    if critical == 0 || n <= critical {
        return domain(format!("need layers > critical >= 1, got {n} and {critical}"));
    }
    if !(ft0 > 0.0 && ft_last_ratio > 0.0) {
        return domain("stopband parameters must be positive");
    }
    let fc_last = sn as f64 / 2.0;
    let ft_last = fc_last * ft_last_ratio;
    let span = (n - critical) as f64;
    let mut specs: Vec<LayerSpec> = Vec::with_capacity(n);
    for i in 0..n {
        let e = (i as f64 / span).min(1.0);
        let fc = FC0 * (fc_last / FC0).powf(e);
        let ft = ft0 * (ft_last / ft0).powf(e);
        let s = (2.0 * ft).min(sn as f64).log2().ceil().exp2() as usize;
        let fh = ft.max(s as f64 / 2.0) - fc;
        if fh < 0.0 || fc > s as f64 / 2.0 + 1e-9 {
            return domain(format!("layer {i}: cutoff {fc} does not fit rate {s}"));
        }
        let s_in = specs.last().map_or(s, |p| p.s_out);
        specs.push(LayerSpec { index: i, fc, ft, fh, s_in, s_out: s, channels: 0, critical: i + critical >= n });
    }
    Ok(LayerPlan { params, layers: specs })
}

/// `min(round(c_base / (2 fc)), c_max)` per layer, at least one.
pub fn channel_counts(plan: &LayerPlan, c_base: f64, c_max: usize) -> Result<Vec<usize>> {
    if !(c_base >= 1.0) || c_max == 0 {
        return domain("channel parameters must be at least 1");
    }
    Ok(plan
        .layers
        .iter()
        .map(|l| ((c_base / (2.0 * l.fc)).round() as usize).clamp(1, c_max))
        .collect())
}

impl LayerPlan {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn output_rate(&self) -> usize {
        self.params.output_rate
    }

    pub fn with_channels(mut self, c_base: f64, c_max: usize) -> Result<Self> {
        let counts = channel_counts(&self, c_base, c_max)?;
        for (l, c) in self.layers.iter_mut().zip(counts) {
            l.channels = c;
        }
        Ok(self)
    }

    /// Intermediate rate `max(s_in, s_out) m` of layer `i`.
    pub fn temp_rate(&self, i: usize, m: usize) -> usize {
        let l = &self.layers[i];
        l.s_in.max(l.s_out) * m
    }

    pub fn factors(&self, i: usize, m: usize) -> (usize, usize) {
        let t = self.temp_rate(i, m);
        (t / self.layers[i].s_in, t / self.layers[i].s_out)
    }

    /// Up filter of layer `i`: the band of the previous layer at the intermediate rate.
    pub fn up_filter_spec(&self, i: usize, m: usize, taps: usize) -> Result<FilterSpec> {
        let prev = &self.layers[i.saturating_sub(1)];
        let (up, _) = self.factors(i, m);
        FilterSpec::new(prev.fc, prev.fh, (self.layers[i].s_in * up) as f64, taps * up)
    }

    /// Down filter of layer `i`: its own band at the intermediate rate.
    pub fn down_filter_spec(&self, i: usize, m: usize, taps: usize) -> Result<FilterSpec> {
        let l = &self.layers[i];
        let (_, down) = self.factors(i, m);
        // Critical layers put f_t above the output Nyquist, so only the
        // intermediate rate can hold the spec.
        FilterSpec::new(l.fc, l.fh, (l.s_out * down) as f64, taps * down)
    }

    /// Kaiser estimate for the down filter of layer `i`.
    pub fn attenuation(&self, i: usize, m: usize, taps: usize) -> Result<f64> {
        let spec = self.down_filter_spec(i, m, taps)?;
        kaiser_attenuation(spec.taps, spec.delta_f())
    }

    /// Aligned table: layer, s, fc, ft, fh, attenuation, channels.
    pub fn table(&self, m: usize, taps: usize) -> Result<String> {
        let mut s = format!(
            "{:>5} {:>6} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
            "layer", "s", "fc", "ft", "fh", "atten_db", "channels"
        );
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>5} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.2} {:>8}",
                i,
                l.s_out,
                l.fc,
                l.ft,
                l.fh,
                self.attenuation(i, m, taps)?,
                l.channels
            );
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn schedule_examples() {
        let plan = plan_layers(PlanParams::new(256)).unwrap();
        assert_eq!(plan.len(), 14);
        assert_eq!(plan.layers[0].fc, 2.0);
        assert_relative_eq!(plan.layers[6].fc, 16.0, max_relative = 1e-12);
        assert_relative_eq!(plan.layers[0].ft, 4.2870938501451725, max_relative = 1e-12);
        assert_eq!(plan.layers[0].s_out, 16);
        assert_eq!(plan.layers[13].s_out, 256);
        let crit: Vec<bool> = plan.layers.iter().map(|l| l.critical).collect();
        assert_eq!(crit.iter().filter(|&&c| c).count(), 2);
        assert!(crit[12] && crit[13]);
        for l in plan.layers.iter().filter(|l| l.critical) {
            assert_eq!(l.fc, l.s_out as f64 / 2.0);
        }
    }

    #[test]
    fn two_case_width_rule() {
        for sn in [16, 64, 256, 1024] {
            let plan = plan_layers(PlanParams::new(sn)).unwrap();
            for l in &plan.layers {
                let edge = l.fc + l.fh;
                let want = l.ft.max(l.s_out as f64 / 2.0);
                assert!((edge - want).abs() <= 1e-12 * want);
                assert!(l.s_out.is_power_of_two() && l.s_out <= sn);
                assert!(l.fc <= l.s_out as f64 / 2.0 + 1e-12);
            }
            for w in plan.layers.windows(2) {
                assert!(w[1].fc >= w[0].fc && w[1].s_out >= w[0].s_out);
                assert_eq!(w[1].s_in, w[0].s_out);
            }
        }
    }

    #[test]
    fn channel_examples() {
        let plan = plan_layers(PlanParams::new(256)).unwrap();
        let c = channel_counts(&plan, 16384.0, 512).unwrap();
        assert_eq!(c[6], 512);
        let c = channel_counts(&plan, 16384.0, 100_000).unwrap();
        assert_eq!(c[6], 512);
        assert_eq!(c[0], 4096);
        assert!(channel_counts(&plan, 1e12, 7).unwrap().iter().all(|&v| v == 7));
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_parameters() {
        assert!(plan_layers(PlanParams::new(100)).is_err());
        assert!(plan_layers(PlanParams::new(2)).is_err());
        assert!(plan_layers(PlanParams { critical: 14, ..PlanParams::new(256) }).is_err());
        assert!(plan_layers(PlanParams { critical: 0, ..PlanParams::new(256) }).is_err());
    }

    #[test]
    fn filter_specs_fit_their_rates() {
        let plan = plan_layers(PlanParams::new(256)).unwrap();
        for m in [1, 2, 4] {
            for i in 0..plan.len() {
                let (up, down) = plan.factors(i, m);
                if up > 1 {
                    plan.up_filter_spec(i, m, 6).unwrap();
                }
                if down > 1 {
                    plan.down_filter_spec(i, m, 6).unwrap();
                }
                if m == 1 && i == 13 {
                    assert!(plan.down_filter_spec(i, m, 6).is_err());
                }
            }
        }
        let table = plan.table(2, 6).unwrap();
        assert_eq!(table.lines().count(), 15);
    }
}
