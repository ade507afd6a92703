//! Welch cross-spectra, complex coherency and the phase slope index.
//!
//! Sign convention: `S_ij(f) = <X_i(f) conj(X_j(f))>`, so a positive
//! `psi[i][j]` means channel `i` leads channel `j`. A pure delay
//! `x_j(t) = x_i(t - tau)` with `tau > 0` gives a cross-spectral phase that
//! grows with frequency and therefore a positive index.
//!
//! Coherency is normalised by the auto-spectra, so the index is invariant
//! to rescaling any channel by a positive constant; amplitudes can be in any
//! unit.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

const FREQ_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic taper of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PsiNormalization {
    #[default]
    None,
    /// Divide by the leave-one-segment-out jackknife standard deviation.
    Jackknife,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    pub seg_len_s: f64,
    pub overlap_frac: f64,
    #[serde(default)]
    pub window: Window,
    pub rate: f64,
    #[serde(default)]
    pub normalization: PsiNormalization,
}

impl SpectralConfig {
    /// One-second Hann segments with 50% overlap.
    pub fn new(rate: f64) -> Self {
        Self {
            seg_len_s: 1.0,
            overlap_frac: 0.5,
            window: Window::Hann,
            rate,
            normalization: PsiNormalization::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::Config(format!("rate must be positive, got {}", self.rate)));
        }
        if !(0.0..1.0).contains(&self.overlap_frac) {
            return Err(Error::Config(format!("overlap_frac must be in [0, 1), got {}", self.overlap_frac)));
        }
        if self.seg_samples() < 8 {
            return Err(Error::Config(format!(
                "segment of {} s at {} Hz is shorter than 8 samples",
                self.seg_len_s, self.rate
            )));
        }
        Ok(())
    }

    pub fn seg_samples(&self) -> usize {
        (self.seg_len_s * self.rate).round() as usize
    }

    pub fn step(&self) -> usize {
        ((self.seg_samples() as f64 * (1.0 - self.overlap_frac)).round() as usize).max(1)
    }

    /// Frequency resolution, `rate / seg_samples`.
    pub fn df(&self) -> f64 {
        self.rate / self.seg_samples() as f64
    }

    pub fn n_segments(&self, n_samples: usize) -> usize {
        let seg = self.seg_samples();
        if n_samples < seg {
            0
        } else {
            (n_samples - seg) / self.step() + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, f_lo: f64, f_hi: f64) -> Result<Self> {
        let name = name.into();
        if !(f_lo > 0.0 && f_lo < f_hi && f_hi.is_finite()) {
            return Err(Error::arg("band", format!("`{name}` needs 0 < f_lo < f_hi, got {f_lo}..{f_hi}")));
        }
        Ok(Self { name, f_lo, f_hi })
    }

    pub fn check_rate(&self, rate: f64) -> Result<()> {
        if self.f_hi >= rate / 2.0 {
            return Err(Error::arg(
                "band",
                format!("`{}` upper edge {} Hz is not below Nyquist ({} Hz)", self.name, self.f_hi, rate / 2.0),
            ));
        }
        Ok(())
    }

    /// File-name friendly form of the name, e.g. `low_gamma`.
    pub fn slug(&self) -> String {
        self.name.to_lowercase().replace(' ', "_")
    }

    pub fn theta() -> Self {
        Self::new("Theta", 4.0, 8.0).unwrap()
    }
}

/// Theta 4-8, alpha1 8-10, alpha2 10-12, beta1 12-18, beta2 18-21,
/// beta3 21-30 and low gamma 30-45 Hz.
pub fn default_bands() -> Vec<BandSpec> {
    [
        ("Theta", 4.0, 8.0),
        ("Alpha1", 8.0, 10.0),
        ("Alpha2", 10.0, 12.0),
        ("Beta1", 12.0, 18.0),
        ("Beta2", 18.0, 21.0),
        ("Beta3", 21.0, 30.0),
        ("Low Gamma", 30.0, 45.0),
    ]
    .into_iter()
    .map(|(n, lo, hi)| BandSpec::new(n, lo, hi).unwrap())
    .collect()
}

/// Cross-spectral matrix per frequency bin, stored `[i][j][f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectralEstimate {
    n_channels: usize,
    freqs: Vec<f64>,
    s: Vec<Complex64>,
}

impl CrossSpectralEstimate {
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn get(&self, i: usize, j: usize, f: usize) -> Complex64 {
        self.s[(i * self.n_channels + j) * self.freqs.len() + f]
    }
}

/// Per-segment tapered spectra, `[segment][channel * n_bins + bin]`.
struct SegmentSpectra {
    n_channels: usize,
    n_bins: usize,
    spectra: Vec<Vec<Complex64>>,
}

fn segment_spectra(samples: ArrayView2<'_, f64>, config: &SpectralConfig, n_bins: usize) -> Result<SegmentSpectra> {
    config.validate()?;
    let n = samples.nrows();
    let seg = config.seg_samples();
    let n_seg = config.n_segments(n);
    if n_seg < 2 {
        return Err(Error::Config(format!(
            "{n} samples give {n_seg} segment(s) of {seg}; at least 2 are needed, use a shorter seg_len_s"
        )));
    }
    let n_bins = n_bins.min(seg / 2 + 1);
    let n_ch = samples.ncols();
    let taper = config.window.coefficients(seg);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(seg);
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let step = config.step();
    let spectra = (0..n_seg)
        .map(|k| {
            let start = k * step;
            let mut out = Vec::with_capacity(n_ch * n_bins);
            for c in 0..n_ch {
                for (t, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(samples[[start + t, c]] * taper[t], 0.0);
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                out.extend_from_slice(&buf[..n_bins]);
            }
            out
        })
        .collect();
    Ok(SegmentSpectra {
        n_channels: n_ch,
        n_bins,
        spectra,
    })
}

impl SegmentSpectra {
    fn average(&self, skip: Option<usize>) -> Vec<Complex64> {
        let (n_ch, nb) = (self.n_channels, self.n_bins);
        let mut s = vec![Complex64::new(0.0, 0.0); n_ch * n_ch * nb];
        let used = self.spectra.len() - usize::from(skip.is_some());
        for (k, x) in self.spectra.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            for i in 0..n_ch {
                for j in i..n_ch {
                    let base = (i * n_ch + j) * nb;
                    for f in 0..nb {
                        s[base + f] += x[i * nb + f] * x[j * nb + f].conj();
                    }
                }
            }
        }
        let scale = 1.0 / used as f64;
        for i in 0..n_ch {
            for f in 0..nb {
                let d = &mut s[(i * n_ch + i) * nb + f];
                *d = Complex64::new(d.re * scale, 0.0);
            }
            for j in i + 1..n_ch {
                for f in 0..nb {
                    let v = s[(i * n_ch + j) * nb + f] * scale;
                    s[(i * n_ch + j) * nb + f] = v;
                    s[(j * n_ch + i) * nb + f] = v.conj();
                }
            }
        }
        s
    }

    fn estimate(&self, df: f64, skip: Option<usize>) -> CrossSpectralEstimate {
        CrossSpectralEstimate {
            n_channels: self.n_channels,
            freqs: (0..self.n_bins).map(|k| k as f64 * df).collect(),
            s: self.average(skip),
        }
    }
}

/// Welch estimate over tapered, overlapping segments; all bins up to Nyquist.
pub fn cross_spectra(samples: ArrayView2<'_, f64>, config: &SpectralConfig) -> Result<CrossSpectralEstimate> {
    cross_spectra_upto(samples, config, usize::MAX)
}

/// As [`cross_spectra`] but keeps only the first `n_bins` frequency bins.
pub fn cross_spectra_upto(
    samples: ArrayView2<'_, f64>,
    config: &SpectralConfig,
    n_bins: usize,
) -> Result<CrossSpectralEstimate> {
    let segs = segment_spectra(samples, config, n_bins)?;
    Ok(segs.estimate(config.df(), None))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherencySpectrum {
    n_channels: usize,
    freqs: Vec<f64>,
    c: Vec<Complex64>,
}

impl CoherencySpectrum {
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn get(&self, i: usize, j: usize, f: usize) -> Complex64 {
        self.c[(i * self.n_channels + j) * self.freqs.len() + f]
    }
}

/// `C_ij(f) = S_ij(f) / sqrt(S_ii(f) S_jj(f))`, zero where either power is zero.
pub fn coherency(s: &CrossSpectralEstimate) -> CoherencySpectrum {
    let n = s.n_channels;
    let nb = s.freqs.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n * n * nb];
    for i in 0..n {
        for j in 0..n {
            for f in 0..nb {
                let pi = s.get(i, i, f).re;
                let pj = s.get(j, j, f).re;
                if pi <= 0.0 || pj <= 0.0 {
                    continue;
                }
                c[(i * n + j) * nb + f] = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    s.get(i, j, f) / (pi * pj).sqrt()
                };
            }
        }
    }
    CoherencySpectrum {
        n_channels: n,
        freqs: s.freqs.clone(),
        c,
    }
}

/// Bins `f` with `f_lo <= f < f_hi` and `f + df <= f_hi`; each starts one slope term.
pub fn band_bins(freqs: &[f64], band: &BandSpec, df: f64) -> Result<Vec<usize>> {
    if freqs.len() >= 2 && ((freqs[1] - freqs[0]) - df).abs() > FREQ_EPS * df.max(1.0) {
        return Err(Error::arg(
            "df",
            format!("grid spacing {} Hz differs from df = {df} Hz", freqs[1] - freqs[0]),
        ));
    }
    let bins: Vec<usize> = (0..freqs.len().saturating_sub(1))
        .filter(|&k| {
            let f = freqs[k];
            f >= band.f_lo - FREQ_EPS && f < band.f_hi - FREQ_EPS && f + df <= band.f_hi + FREQ_EPS
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::BandResolution {
            band: band.name.clone(),
            usable: 0,
            df,
        });
    }
    Ok(bins)
}

/// Antisymmetric phase-slope-index matrix for one band.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    band: BandSpec,
    n: usize,
    psi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectivityJson {
    pub band: BandSpec,
    pub channel_names: Vec<String>,
    pub psi: Vec<Vec<f64>>,
}

impl ConnectivityMatrix {
    /// Builds a matrix from its upper triangle (row-major over `i < j`).
    pub fn from_upper(band: BandSpec, n: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * (n - 1) / 2 {
            return Err(Error::arg(
                "upper",
                format!("{} values for {n} channels, expected {}", upper.len(), n * (n - 1) / 2),
            ));
        }
        let mut psi = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                psi[i * n + j] = upper[k];
                psi[j * n + i] = -upper[k];
                k += 1;
            }
        }
        Ok(Self { band, n, psi })
    }

    /// Wraps a full matrix, checking antisymmetry to `tol` (absolute).
    pub fn from_full(band: BandSpec, n: usize, psi: Vec<f64>, tol: f64) -> Result<Self> {
        if psi.len() != n * n {
            return Err(Error::arg("psi", format!("{} values for a {n}x{n} matrix", psi.len())));
        }
        for i in 0..n {
            if psi[i * n + i].abs() > tol {
                return Err(Error::arg("psi", format!("nonzero diagonal at {i}")));
            }
            for j in i + 1..n {
                if (psi[i * n + j] + psi[j * n + i]).abs() > tol {
                    return Err(Error::arg("psi", format!("not antisymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { band, n, psi })
    }

    pub fn band(&self) -> &BandSpec {
        &self.band
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.psi[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.psi
    }

    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.n), self.psi.clone()).unwrap()
    }

    /// `n` lines of `n` comma-separated values; row = source channel.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(band: BandSpec, text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(r, line)| {
                line.split(',')
                    .map(|v| {
                        v.trim().parse::<f64>().map_err(|_| Error::Parse {
                            location: format!("matrix row {}", r + 1),
                            reason: format!("`{v}` is not a number"),
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse {
                location: "matrix".into(),
                reason: "matrix is not square".into(),
            });
        }
        Self::from_full(band, n, rows.concat(), 1e-12)
    }

    pub fn to_json(&self, channel_names: &[String]) -> ConnectivityJson {
        ConnectivityJson {
            band: self.band.clone(),
            channel_names: channel_names.to_vec(),
            psi: (0..self.n).map(|i| self.psi[i * self.n..(i + 1) * self.n].to_vec()).collect(),
        }
    }
}

fn psi_values(c: &CoherencySpectrum, bins: &[usize]) -> Vec<f64> {
    let n = c.n_channels;
    let mut psi = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = bins
                .iter()
                .map(|&f| (c.get(i, j, f).conj() * c.get(i, j, f + 1)).im)
                .sum();
            psi[i * n + j] = v;
            psi[j * n + i] = -v;
        }
    }
    psi
}

/// `psi_ij = Im sum_f conj(C_ij(f)) C_ij(f + df)` over the band's slope bins.
pub fn psi(c: &CoherencySpectrum, band: &BandSpec, df: f64) -> Result<ConnectivityMatrix> {
    let bins = band_bins(&c.freqs, band, df)?;
    Ok(ConnectivityMatrix {
        band: band.clone(),
        n: c.n_channels,
        psi: psi_values(c, &bins),
    })
}

/// Cross-spectra and coherency once, then one index matrix per band.
pub fn psi_all_bands(
    samples: ArrayView2<'_, f64>,
    config: &SpectralConfig,
    bands: &[BandSpec],
) -> Result<Vec<ConnectivityMatrix>> {
    config.validate()?;
    for b in bands {
        b.check_rate(config.rate)?;
    }
    let df = config.df();
    let max_hi = bands.iter().map(|b| b.f_hi).fold(0.0, f64::max);
    let n_bins = (max_hi / df + FREQ_EPS).floor() as usize + 2;
    let segs = segment_spectra(samples, config, n_bins)?;
    let full = coherency(&segs.estimate(df, None));
    let mut out = Vec::with_capacity(bands.len());
    let band_bins: Vec<Vec<usize>> = bands.iter().map(|b| band_bins(&full.freqs, b, df)).collect::<Result<_>>()?;
    let raw: Vec<Vec<f64>> = band_bins.iter().map(|bins| psi_values(&full, bins)).collect();
    let normalized = match config.normalization {
        PsiNormalization::None => raw,
        PsiNormalization::Jackknife => {
            let n_seg = segs.spectra.len();
            let loo: Vec<Vec<Vec<f64>>> = (0..n_seg)
                .map(|k| {
                    let c = coherency(&segs.estimate(df, Some(k)));
                    band_bins.iter().map(|bins| psi_values(&c, bins)).collect()
                })
                .collect();
            raw.iter()
                .enumerate()
                .map(|(b, psi)| {
                    psi.iter()
                        .enumerate()
                        .map(|(idx, &v)| {
                            let mean = loo.iter().map(|l| l[b][idx]).sum::<f64>() / n_seg as f64;
                            let var = loo.iter().map(|l| (l[b][idx] - mean).powi(2)).sum::<f64>()
                                * (n_seg as f64 - 1.0)
                                / n_seg as f64;
                            if var > 0.0 {
                                v / var.sqrt()
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        }
    };
    let n = segs.n_channels;
    for (band, psi) in bands.iter().zip(normalized) {
        out.push(ConnectivityMatrix {
            band: band.clone(),
            n,
            psi,
        });
    }
    Ok(out)
}

/// Index for a single channel pair, `x` as channel 0 and `y` as channel 1.
pub fn pair_psi(x: &[f64], y: &[f64], config: &SpectralConfig, band: &BandSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::arg("y", "channels differ in length"));
    }
    let samples = Array2::from_shape_fn((x.len(), 2), |(t, c)| if c == 0 { x[t] } else { y[t] });
    Ok(psi_all_bands(samples.view(), config, std::slice::from_ref(band))?[0].get(0, 1))
}

/// Null distribution of `|psi|` for the pair `(x, y)`: `y` is cut into
/// `n_blocks` equal blocks which are randomly reordered, destroying any
/// consistent lag while keeping the spectrum of each block.
pub fn surrogate_null(
    x: &[f64],
    y: &[f64],
    config: &SpectralConfig,
    band: &BandSpec,
    n_surrogates: usize,
    n_blocks: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if n_blocks < 2 || y.len() < n_blocks {
        return Err(Error::arg("n_blocks", format!("need 2..={} blocks, got {n_blocks}", y.len())));
    }
    let block = y.len() / n_blocks;
    let mut order: Vec<usize> = (0..n_blocks).collect();
    let mut shuffled = vec![0.0; y.len()];
    (0..n_surrogates)
        .map(|_| {
            loop {
                order.shuffle(rng);
                if order.iter().enumerate().any(|(k, &b)| k != b) {
                    break;
                }
            }
            for (dst, &src) in order.iter().enumerate() {
                shuffled[dst * block..(dst + 1) * block].copy_from_slice(&y[src * block..(src + 1) * block]);
            }
            let tail = n_blocks * block;
            shuffled[tail..].copy_from_slice(&y[tail..]);
            pair_psi(x, &shuffled, config, band).map(f64::abs)
        })
        .collect()
}

/// Empirical `q` quantile (nearest-rank).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}
