//! Ground-truth synthetic data.
//!
//! Coupled channel pairs with a known lag, labelled multichannel datasets
//! whose classes differ only in planted lags, and plain feature tables with
//! planted informative columns.

use ndarray::Array2;
use rand::{Rng as _, RngCore};
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::committee::Dataset;
use crate::error::{Error, Result};
use crate::features::PairIndex;
use crate::layout::ChannelLayout;
use crate::rng::{self, Rng};
use crate::signal::{Epoch, MultichannelRecord, PhaseInterval, PhaseLabel, PhaseSchedule};
use crate::spectral::BandSpec;

/// One second-order section, `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn run(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[1] * y + z2;
            z2 = self.b[2] * input - self.a[2] * y;
            *v = y;
        }
    }
}

/// Butterworth band-pass built from an order-2 low-pass prototype (four
/// poles), bilinear transform with pre-warped edges.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    pub sections: Vec<Biquad>,
}

impl BandpassFilter {
    pub fn butterworth(f_lo: f64, f_hi: f64, rate: f64) -> Result<Self> {
        const ORDER: usize = 2;
        if !(0.0 < f_lo && f_lo < f_hi && f_hi < rate / 2.0) {
            return Err(Error::arg("band", format!("need 0 < {f_lo} < {f_hi} < {}", rate / 2.0)));
        }
        let fs2 = 2.0 * rate;
        let w1 = fs2 * (std::f64::consts::PI * f_lo / rate).tan();
        let w2 = fs2 * (std::f64::consts::PI * f_hi / rate).tan();
        let bw = w2 - w1;
        let w0sq = w1 * w2;
        let mut poles = Vec::with_capacity(2 * ORDER);
        for k in 0..ORDER {
            let theta = std::f64::consts::PI * (2 * k + ORDER + 1) as f64 / (2 * ORDER) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let a = p * (bw / 2.0);
            let r = (a * a - w0sq).sqrt();
            for s in [a + r, a - r] {
                poles.push((1.0 + s / fs2) / (1.0 - s / fs2));
            }
        }
        let mut upper: Vec<Complex64> = poles.into_iter().filter(|p| p.im > 0.0).collect();
        upper.sort_by(|x, y| x.re.total_cmp(&y.re));
        let mut sections: Vec<Biquad> = upper
            .iter()
            .map(|p| Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * p.re, p.norm_sqr()],
            })
            .collect();
        // unit gain at the analog centre frequency
        let wc = 2.0 * (w0sq.sqrt() / fs2).atan();
        let z = Complex64::from_polar(1.0, -wc);
        let gain: f64 = sections
            .iter()
            .map(|s| {
                let num = s.b[0] + s.b[1] * z + s.b[2] * z * z;
                let den = s.a[0] + s.a[1] * z + s.a[2] * z * z;
                (num / den).norm()
            })
            .product();
        for v in sections[0].b.iter_mut() {
            *v /= gain;
        }
        Ok(Self { sections })
    }

    /// Denominator polynomial of the cascade, highest power of `z^-1` last.
    pub fn denominator(&self) -> Vec<f64> {
        self.sections.iter().fold(vec![1.0], |acc, s| convolve(&acc, &s.a))
    }

    pub fn numerator(&self) -> Vec<f64> {
        self.sections.iter().fold(vec![1.0], |acc, s| convolve(&acc, &s.b))
    }

    pub fn forward(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Forward then time-reversed pass: zero phase, squared magnitude.
    pub fn filtfilt(&self, x: &mut [f64]) {
        self.forward(x);
        x.reverse();
        self.forward(x);
        x.reverse();
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn white(n: usize, rng: &mut impl RngCore) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub f_lo: f64,
    pub f_hi: f64,
    /// Positive means channel 1 leads channel 2.
    pub delay_ms: f64,
    /// Signal-to-noise power ratio on channel 2.
    pub snr: f64,
    pub duration_s: f64,
    pub rate: f64,
}

impl CouplingSpec {
    /// Theta band, 2.5 s at 1 kHz, snr 2.
    pub fn theta(delay_ms: f64) -> Self {
        Self {
            f_lo: 4.0,
            f_hi: 8.0,
            delay_ms,
            snr: 2.0,
            duration_s: 2.5,
            rate: 1000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::arg("snr", format!("must be positive, got {}", self.snr)));
        }
        if !(self.duration_s > 0.0 && self.rate > 0.0) {
            return Err(Error::arg("duration_s", "duration and rate must be positive"));
        }
        if self.delay_ms.abs() / 1000.0 >= self.duration_s / 10.0 {
            return Err(Error::arg(
                "delay_ms",
                format!("|{}| ms must be below a tenth of the {} s duration", self.delay_ms, self.duration_s),
            ));
        }
        Ok(())
    }

    fn delay_samples(&self) -> (i64, bool) {
        let exact = self.delay_ms * self.rate / 1000.0;
        let d = exact.round();
        (d as i64, (exact - d).abs() > 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingManifest {
    pub requested_delay_ms: f64,
    pub realized_delay_ms: f64,
    pub delay_samples: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub record: MultichannelRecord,
    pub manifest: CouplingManifest,
}

/// Band-limited source and its delayed, noisy copy.
///
/// `x(t)` and `y(t) = x(t - d)` share one filtered noise realisation with
/// margins on both sides, so neither channel sees filter start-up
/// transients. The added noise is white, with total power `var(y) / snr`.
fn delayed_pair(
    filter: &BandpassFilter,
    n: usize,
    delay: i64,
    snr: f64,
    rate: f64,
    rng: &mut impl RngCore,
) -> (Vec<f64>, Vec<f64>) {
    let margin = (2.0 * rate).round() as usize + delay.unsigned_abs() as usize;
    let total = n + 2 * margin;
    let mut src = white(total, rng);
    filter.filtfilt(&mut src);
    let x = src[margin..margin + n].to_vec();
    let lo = (margin as i64 - delay) as usize;
    let y_sig = &src[lo..lo + n];
    let noise = white(n, rng);
    let scale = (variance(y_sig) / snr / variance(&noise)).sqrt();
    let y = y_sig.iter().zip(&noise).map(|(s, e)| s + scale * e).collect();
    (x, y)
}

fn band_noise(filter: &BandpassFilter, n: usize, rate: f64, rng: &mut impl RngCore) -> Vec<f64> {
    let margin = (2.0 * rate).round() as usize;
    let mut v = white(n + 2 * margin, rng);
    filter.filtfilt(&mut v);
    v[margin..margin + n].to_vec()
}

pub fn coupled_pair(spec: &CouplingSpec, rng: &mut Rng) -> Result<CoupledPair> {
    spec.validate()?;
    let filter = BandpassFilter::butterworth(spec.f_lo, spec.f_hi, spec.rate)?;
    let n = (spec.duration_s * spec.rate).round() as usize;
    let (d, rounded) = spec.delay_samples();
    let (x, y) = delayed_pair(&filter, n, d, spec.snr, spec.rate, rng);
    let samples = Array2::from_shape_fn((n, 2), |(t, c)| if c == 0 { x[t] } else { y[t] });
    let realized = d as f64 * 1000.0 / spec.rate;
    let mut warnings = Vec::new();
    if rounded {
        warnings.push(format!(
            "delay {} ms is not a whole number of samples at {} Hz; rounded to {d} samples ({realized} ms)",
            spec.delay_ms, spec.rate
        ));
    }
    Ok(CoupledPair {
        record: MultichannelRecord::new(samples, spec.rate, ChannelLayout::generic(2))?,
        manifest: CouplingManifest {
            requested_delay_ms: spec.delay_ms,
            realized_delay_ms: realized,
            delay_samples: d,
            warnings,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub i: usize,
    pub j: usize,
    /// Positive means channel `i` leads channel `j`.
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantPlan {
    pub n_channels: usize,
    pub epochs_per_class: usize,
    pub epoch_len_s: f64,
    pub rate: f64,
    pub band: BandSpec,
    pub snr: f64,
    /// Plants per class, in `IN, IH, EX, EH` order.
    pub plants: [Vec<Plant>; 4],
}

impl PlantPlan {
    /// Three channel pairs whose lag signs form a thermometer code over the
    /// four classes: `IN (+,+,+)`, `IH (-,+,+)`, `EX (-,-,+)`, `EH (-,-,-)`.
    /// Dropping any one pair merges two neighbouring classes.
    pub fn thermometer(n_channels: usize, epochs_per_class: usize) -> Self {
        assert!(n_channels >= 6, "thermometer plan needs six channels");
        let tau = 20.0;
        let code = [[1.0, 1.0, 1.0], [-1.0, 1.0, 1.0], [-1.0, -1.0, 1.0], [-1.0, -1.0, -1.0]];
        let plants = code.map(|signs| {
            (0..3)
                .map(|p| Plant {
                    i: 2 * p,
                    j: 2 * p + 1,
                    delay_ms: signs[p] * tau,
                })
                .collect()
        });
        Self {
            n_channels,
            epochs_per_class,
            epoch_len_s: 2.5,
            rate: 1000.0,
            band: BandSpec::theta(),
            snr: 2.0,
            plants,
        }
    }

    /// Same geometry with nothing planted: all classes share one distribution.
    pub fn null(n_channels: usize, epochs_per_class: usize) -> Self {
        let mut p = Self::thermometer(n_channels.max(6), epochs_per_class);
        p.n_channels = n_channels;
        p.plants = Default::default();
        p
    }

    /// Plants with `i < j`, flipping the delay sign when reordered.
    fn normalized(&self) -> Result<[Vec<Plant>; 4]> {
        let mut out: [Vec<Plant>; 4] = Default::default();
        for (c, plants) in self.plants.iter().enumerate() {
            let mut used = vec![false; self.n_channels];
            for p in plants {
                if p.i == p.j || p.i >= self.n_channels || p.j >= self.n_channels {
                    return Err(Error::Plan(format!(
                        "class {}: pair ({}, {}) is not two distinct channels below {}",
                        PhaseLabel::ALL[c],
                        p.i,
                        p.j,
                        self.n_channels
                    )));
                }
                let q = if p.i < p.j {
                    *p
                } else {
                    Plant {
                        i: p.j,
                        j: p.i,
                        delay_ms: -p.delay_ms,
                    }
                };
                if let Some(prev) = out[c].iter().find(|o| o.i == q.i && o.j == q.j) {
                    return Err(Error::Plan(format!(
                        "class {}: pair ({}, {}) planted twice ({} ms and {} ms)",
                        PhaseLabel::ALL[c],
                        q.i,
                        q.j,
                        prev.delay_ms,
                        q.delay_ms
                    )));
                }
                for ch in [q.i, q.j] {
                    if std::mem::replace(&mut used[ch], true) {
                        return Err(Error::Plan(format!(
                            "class {}: channel {ch} appears in two planted pairs",
                            PhaseLabel::ALL[c]
                        )));
                    }
                }
                out[c].push(q);
            }
            out[c].sort_by_key(|p| (p.i, p.j));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 2 {
            return Err(Error::Plan("need at least two channels".into()));
        }
        if self.epochs_per_class == 0 {
            return Err(Error::Plan("every class needs at least one epoch".into()));
        }
        self.band.check_rate(self.rate)?;
        let plants = self.normalized()?;
        for (c, ps) in plants.iter().enumerate() {
            for p in ps {
                CouplingSpec {
                    f_lo: self.band.f_lo,
                    f_hi: self.band.f_hi,
                    delay_ms: p.delay_ms,
                    snr: self.snr,
                    duration_s: self.epoch_len_s,
                    rate: self.rate,
                }
                .validate()
                .map_err(|e| Error::Plan(format!("class {}: {e}", PhaseLabel::ALL[c])))?;
            }
        }
        let any = plants.iter().any(|p| !p.is_empty());
        for a in 0..4 {
            for b in a + 1..4 {
                if any && plants[a] == plants[b] {
                    return Err(Error::Plan(format!(
                        "classes {} and {} have identical plants",
                        PhaseLabel::ALL[a],
                        PhaseLabel::ALL[b]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDelay {
    pub label: PhaseLabel,
    pub pair: [usize; 2],
    pub feature: usize,
    pub delay_ms: f64,
    pub realized_delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted_features: Vec<usize>,
    pub delays_ms: Vec<PlantedDelay>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn epoch_samples_for(plan: &PlantPlan, plants: &[Plant], filter: &BandpassFilter, rng: &mut Rng) -> Array2<f64> {
    let n = (plan.epoch_len_s * plan.rate).round() as usize;
    let mut cols: Vec<Option<Vec<f64>>> = vec![None; plan.n_channels];
    for p in plants {
        let d = (p.delay_ms * plan.rate / 1000.0).round() as i64;
        let (x, y) = delayed_pair(filter, n, d, plan.snr, plan.rate, rng);
        cols[p.i] = Some(x);
        cols[p.j] = Some(y);
    }
    let cols: Vec<Vec<f64>> = cols
        .into_iter()
        .map(|c| c.unwrap_or_else(|| band_noise(filter, n, plan.rate, rng)))
        .collect();
    Array2::from_shape_fn((n, plan.n_channels), |(t, c)| cols[c][t])
}

/// Epochs for every class, `epochs_per_class` each in label order, plus the
/// ground truth. Each epoch is generated from its own derived stream.
pub fn planted_dataset(plan: &PlantPlan, rng: &mut Rng) -> Result<(Vec<Epoch>, GroundTruth)> {
    plan.validate()?;
    let plants = plan.normalized()?;
    let seed = rng.next_u64();
    let filter = BandpassFilter::butterworth(plan.band.f_lo, plan.band.f_hi, plan.rate)?;
    let mut epochs = Vec::with_capacity(4 * plan.epochs_per_class);
    for label in PhaseLabel::ALL {
        for e in 0..plan.epochs_per_class {
            let mut r = rng::stream(seed, "planted-epoch", &[label.index() as u64, e as u64]);
            let samples = epoch_samples_for(plan, &plants[label.index()], &filter, &mut r);
            let k = epochs.len();
            epochs.push(Epoch {
                samples,
                label,
                source_offset: k as f64 * plan.epoch_len_s,
            });
        }
    }
    let index = PairIndex::new(plan.n_channels);
    let mut delays = Vec::new();
    let mut warnings = Vec::new();
    for label in PhaseLabel::ALL {
        for p in &plants[label.index()] {
            let exact = p.delay_ms * plan.rate / 1000.0;
            let realized = exact.round() * 1000.0 / plan.rate;
            if (exact - exact.round()).abs() > 1e-9 {
                warnings.push(format!("{label} ({}, {}): {} ms rounded to {realized} ms", p.i, p.j, p.delay_ms));
            }
            delays.push(PlantedDelay {
                label,
                pair: [p.i, p.j],
                feature: index.feature(p.i, p.j)?,
                delay_ms: p.delay_ms,
                realized_delay_ms: realized,
            });
        }
    }
    let mut planted: Vec<usize> = delays.iter().map(|d| d.feature).collect();
    planted.sort_unstable();
    planted.dedup();
    Ok((
        epochs,
        GroundTruth {
            planted_features: planted,
            delays_ms: delays,
            seed,
            warnings,
        },
    ))
}

/// The planted dataset laid end to end as one continuous record with one
/// schedule interval per class, so that epoching recovers the epochs exactly.
pub fn planted_record(
    plan: &PlantPlan,
    rng: &mut Rng,
) -> Result<(MultichannelRecord, PhaseSchedule, GroundTruth)> {
    let (epochs, truth) = planted_dataset(plan, rng)?;
    let n = epochs[0].n_samples();
    let mut samples = Array2::zeros((n * epochs.len(), plan.n_channels));
    for (k, e) in epochs.iter().enumerate() {
        samples.slice_mut(ndarray::s![k * n..(k + 1) * n, ..]).assign(&e.samples);
    }
    let block = plan.epochs_per_class as f64 * plan.epoch_len_s;
    let schedule = PhaseSchedule::new(
        PhaseLabel::ALL
            .iter()
            .enumerate()
            .map(|(c, &label)| PhaseInterval {
                label,
                start_s: c as f64 * block,
                duration_s: block,
            })
            .collect(),
    )?;
    let record = MultichannelRecord::new(samples, plan.rate, ChannelLayout::generic(plan.n_channels))?;
    Ok((record, schedule, truth))
}

/// A table with `n_informative` planted columns among `n_features`.
///
/// Informative column `k` belongs to class `k mod 4`; rows of that class
/// are split evenly among its columns, and each row has its own column
/// shifted up by `shift` standard deviations. Every other value is standard
/// normal. A row can only be recognised through its own column, so each
/// informative column that a feature subset omits costs accuracy.
pub fn planted_table(
    n_features: usize,
    n_informative: usize,
    rows_per_class: usize,
    shift: f64,
    rng: &mut Rng,
) -> Result<(Dataset, Vec<usize>)> {
    if n_informative > n_features {
        return Err(Error::arg("n_informative", "more informative columns than features"));
    }
    let mut ids: Vec<usize> = rand::seq::index::sample(rng, n_features, n_informative).into_vec();
    ids.sort_unstable();
    // column order is random, class assignment follows the sorted id order
    let mut values = Vec::with_capacity(4 * rows_per_class * n_features);
    let mut labels = Vec::with_capacity(4 * rows_per_class);
    for label in PhaseLabel::ALL {
        let own: Vec<usize> = (0..n_informative).filter(|k| k % 4 == label.index()).collect();
        for r in 0..rows_per_class {
            let mut row: Vec<f64> = (0..n_features).map(|_| rng.sample(StandardNormal)).collect();
            if !own.is_empty() {
                row[ids[own[r * own.len() / rows_per_class]]] += shift;
            }
            values.extend(row);
            labels.push(label);
        }
    }
    Ok((Dataset::new(values, n_features, labels)?, ids))
}

/// Fraction of the periodogram power of `x` inside `[f_lo, f_hi]`.
pub fn in_band_power_fraction(x: &[f64], rate: f64, f_lo: f64, f_hi: f64) -> f64 {
    use rustfft::FftPlanner;
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut inside, mut total) = (0.0, 0.0);
    for (k, v) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let p = v.norm_sqr();
        let f = k as f64 * rate / n as f64;
        total += p;
        if f >= f_lo && f <= f_hi {
            inside += p;
        }
    }
    inside / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn theta_filter_matches_reference_design() {
        // denominator and gain of the 4-pole Butterworth 4-8 Hz band-pass at 1 kHz
        let f = BandpassFilter::butterworth(4.0, 8.0, 1000.0).unwrap();
        let a = f.denominator();
        let expected = [1.0, -3.9619565419309044, 5.889039936392463, -3.8921630006871624, 0.9650811738991344];
        for (x, y) in a.iter().zip(expected) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        let b = f.numerator();
        let g = 0.00015514842347569906;
        for (x, y) in b.iter().zip([g, 0.0, -2.0 * g, 0.0, g]) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        let gamma = BandpassFilter::butterworth(30.0, 45.0, 1000.0).unwrap();
        assert!((gamma.numerator()[0] - 0.0020805671354922946).abs() < 1e-12);
        assert!((gamma.denominator()[4] - 0.8752145482536838).abs() < 1e-10);
    }

    #[test]
    fn filtered_noise_concentrates_in_band() {
        let mut r = Rng::seed_from_u64(1);
        let filter = BandpassFilter::butterworth(4.0, 8.0, 1000.0).unwrap();
        let x = band_noise(&filter, 20_000, 1000.0, &mut r);
        assert!(in_band_power_fraction(&x, 1000.0, 4.0, 8.0) >= 0.8);
    }

    #[test]
    fn coupled_pair_geometry_and_determinism() {
        let spec = CouplingSpec::theta(20.0);
        let a = coupled_pair(&spec, &mut Rng::seed_from_u64(3)).unwrap();
        let b = coupled_pair(&spec, &mut Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.record.n_samples(), 2500);
        assert_eq!(a.manifest.delay_samples, 20);
        assert!(a.manifest.warnings.is_empty());
        let x: Vec<f64> = a.record.samples().column(0).to_vec();
        assert!(in_band_power_fraction(&x, 1000.0, 4.0, 8.0) >= 0.8);
        // white noise carries a third of the delayed channel's power at snr 2
        let y: Vec<f64> = a.record.samples().column(1).to_vec();
        let frac = in_band_power_fraction(&y, 1000.0, 4.0, 8.0);
        assert!(frac > 0.55 && frac < 2.0 / 3.0, "{frac}");
    }

    #[test]
    fn delay_rounding_is_recorded() {
        let mut spec = CouplingSpec::theta(20.4);
        let p = coupled_pair(&spec, &mut Rng::seed_from_u64(3)).unwrap();
        assert_eq!(p.manifest.delay_samples, 20);
        assert_eq!(p.manifest.realized_delay_ms, 20.0);
        assert_eq!(p.manifest.warnings.len(), 1);
        spec.delay_ms = 300.0;
        assert!(coupled_pair(&spec, &mut Rng::seed_from_u64(3)).is_err());
        spec.delay_ms = 10.0;
        spec.snr = 0.0;
        assert!(coupled_pair(&spec, &mut Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn plan_validation() {
        let mut p = PlantPlan::thermometer(8, 2);
        assert!(p.validate().is_ok());
        p.plants[0].push(Plant { i: 1, j: 0, delay_ms: 5.0 });
        assert!(matches!(p.validate(), Err(Error::Plan(_))));
        let mut p = PlantPlan::thermometer(8, 2);
        p.plants[1] = p.plants[0].clone();
        assert!(p.validate().is_err());
        let mut p = PlantPlan::thermometer(8, 2);
        p.plants[2][0].j = 9;
        assert!(p.validate().is_err());
        assert!(PlantPlan::null(8, 2).validate().is_ok());
    }

    #[test]
    fn planted_dataset_layout_and_truth() {
        let plan = PlantPlan::thermometer(8, 3);
        let (epochs, truth) = planted_dataset(&plan, &mut Rng::seed_from_u64(5)).unwrap();
        assert_eq!(epochs.len(), 12);
        assert_eq!(epochs[3].label, PhaseLabel::IH);
        assert_eq!(epochs[0].samples.dim(), (2500, 8));
        // pairs (0,1), (2,3), (4,5) of 8 channels
        assert_eq!(truth.planted_features, vec![0, 13, 22]);
        assert_eq!(truth.delays_ms.len(), 12);
        let (rec, sched, truth2) = planted_record(&plan, &mut Rng::seed_from_u64(5)).unwrap();
        assert_eq!(truth, truth2);
        assert_eq!(rec.n_samples(), 12 * 2500);
        assert_eq!(sched.intervals()[2].start_s, 15.0);
        let back = crate::signal::epoch_stream(&rec, &sched, 2.5).unwrap();
        assert_eq!(back, epochs);
    }

    #[test]
    fn planted_table_shape() {
        let (d, ids) = planted_table(100, 10, 120, 5.0, &mut Rng::seed_from_u64(8)).unwrap();
        assert_eq!(d.n_rows(), 480);
        assert_eq!(d.n_cols(), 100);
        assert_eq!(ids.len(), 10);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        // column ids[0] is shifted for a third of the IN rows
        let mean: f64 = (0..120).map(|r| d.value(r, ids[0])).sum::<f64>() / 120.0;
        assert!((mean - 5.0 / 3.0).abs() < 0.4, "{mean}");
    }
}
