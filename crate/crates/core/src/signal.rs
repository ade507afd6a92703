//! Multichannel records, phase schedules, epoching and piecewise detrending.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::ChannelLayout;

/// Respiratory phase class. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseLabel {
    IN,
    IH,
    EX,
    EH,
}

impl PhaseLabel {
    pub const ALL: [PhaseLabel; 4] = [PhaseLabel::IN, PhaseLabel::IH, PhaseLabel::EX, PhaseLabel::EH];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::IN => "IN",
            PhaseLabel::IH => "IH",
            PhaseLabel::EX => "EX",
            PhaseLabel::EH => "EH",
        }
    }

    pub fn condition(self) -> &'static str {
        match self {
            PhaseLabel::IN => "Inhale",
            PhaseLabel::IH => "Inhale-hold",
            PhaseLabel::EX => "Exhale",
            PhaseLabel::EH => "Exhale-hold",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "IN" => Ok(PhaseLabel::IN),
            "IH" => Ok(PhaseLabel::IH),
            "EX" => Ok(PhaseLabel::EX),
            "EH" => Ok(PhaseLabel::EH),
            other => Err(Error::arg("label", format!("unknown phase label `{other}`"))),
        }
    }
}

/// Samples are stored `[n_samples × n_channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelRecord {
    samples: Array2<f64>,
    rate: f64,
    layout: ChannelLayout,
}

impl MultichannelRecord {
    pub fn new(samples: Array2<f64>, rate: f64, layout: ChannelLayout) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::arg("rate", format!("sampling rate must be positive, got {rate}")));
        }
        if samples.ncols() != layout.len() {
            return Err(Error::Layout(format!(
                "record has {} channels but layout has {}",
                samples.ncols(),
                layout.len()
            )));
        }
        if let Some((row, _)) = samples
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Parse {
                location: format!("sample row {row}"),
                reason: "non-finite sample".into(),
            });
        }
        Ok(Self {
            samples,
            rate,
            layout,
        })
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub label: PhaseLabel,
    pub start_s: f64,
    pub duration_s: f64,
}

/// Ordered, non-overlapping labelled intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PhaseInterval>", into = "Vec<PhaseInterval>")]
pub struct PhaseSchedule {
    intervals: Vec<PhaseInterval>,
}

impl TryFrom<Vec<PhaseInterval>> for PhaseSchedule {
    type Error = Error;

    fn try_from(v: Vec<PhaseInterval>) -> Result<Self> {
        PhaseSchedule::new(v)
    }
}

impl From<PhaseSchedule> for Vec<PhaseInterval> {
    fn from(s: PhaseSchedule) -> Self {
        s.intervals
    }
}

const TIME_EPS: f64 = 1e-9;

impl PhaseSchedule {
    pub fn new(intervals: Vec<PhaseInterval>) -> Result<Self> {
        for (k, iv) in intervals.iter().enumerate() {
            if !(iv.duration_s.is_finite() && iv.duration_s > 0.0) {
                return Err(Error::arg("schedule", format!("interval {k} has non-positive duration")));
            }
            if !(iv.start_s.is_finite() && iv.start_s >= 0.0) {
                return Err(Error::arg("schedule", format!("interval {k} has invalid start")));
            }
        }
        for (k, w) in intervals.windows(2).enumerate() {
            if w[1].start_s < w[0].start_s {
                return Err(Error::arg("schedule", format!("interval {} starts before interval {k}", k + 1)));
            }
            if w[0].start_s + w[0].duration_s > w[1].start_s + TIME_EPS {
                return Err(Error::arg("schedule", format!("intervals {k} and {} overlap", k + 1)));
            }
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[PhaseInterval] {
        &self.intervals
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub samples: Array2<f64>,
    pub label: PhaseLabel,
    /// Start time in the source record, seconds.
    pub source_offset: f64,
}

impl Epoch {
    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.samples.ncols()
    }
}

/// Where an epoch lives inside its record, without copying samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSpan {
    pub label: PhaseLabel,
    pub start_sample: usize,
    pub len: usize,
}

pub fn epoch_samples(epoch_len: f64, rate: f64) -> usize {
    (epoch_len * rate).round() as usize
}

/// Tiles every schedule interval with back-to-back epochs starting at the
/// interval start; a trailing remainder shorter than `epoch_len` is dropped.
pub fn epoch_spans(record: &MultichannelRecord, schedule: &PhaseSchedule, epoch_len: f64) -> Result<Vec<EpochSpan>> {
    if !(epoch_len.is_finite() && epoch_len > 0.0) {
        return Err(Error::arg("epoch_len", format!("must be positive, got {epoch_len}")));
    }
    let rate = record.rate();
    let len = epoch_samples(epoch_len, rate);
    if len == 0 {
        return Err(Error::arg("epoch_len", "shorter than one sample"));
    }
    let mut spans = Vec::new();
    for (k, iv) in schedule.intervals().iter().enumerate() {
        let end = ((iv.start_s + iv.duration_s) * rate).round() as usize;
        if end > record.n_samples() {
            return Err(Error::Range(format!(
                "interval {k} ({} at {} s, {} s) ends past the record ({} s)",
                iv.label,
                iv.start_s,
                iv.duration_s,
                record.duration()
            )));
        }
        let start = (iv.start_s * rate).round() as usize;
        let count = ((iv.duration_s / epoch_len + TIME_EPS).floor() as usize).min((end - start) / len);
        for e in 0..count {
            spans.push(EpochSpan {
                label: iv.label,
                start_sample: start + e * len,
                len,
            });
        }
    }
    Ok(spans)
}

pub fn cut_epoch(record: &MultichannelRecord, span: &EpochSpan) -> Epoch {
    Epoch {
        samples: record
            .samples()
            .slice(s![span.start_sample..span.start_sample + span.len, ..])
            .to_owned(),
        label: span.label,
        source_offset: span.start_sample as f64 / record.rate(),
    }
}

pub fn epoch_stream(record: &MultichannelRecord, schedule: &PhaseSchedule, epoch_len: f64) -> Result<Vec<Epoch>> {
    Ok(epoch_spans(record, schedule, epoch_len)?
        .iter()
        .map(|sp| cut_epoch(record, sp))
        .collect())
}

/// Per-class epoch counts in label order.
pub fn class_counts<'a>(labels: impl IntoIterator<Item = &'a PhaseLabel>) -> [usize; 4] {
    let mut c = [0; 4];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

/// Subtracts a least-squares line from each of `n_pieces` contiguous
/// segments of every channel. Remainder samples go to the last segment.
pub fn detrend(epoch: &Epoch, n_pieces: usize) -> Result<Epoch> {
    let samples = detrend_samples(epoch.samples.view(), n_pieces)?;
    Ok(Epoch {
        samples,
        label: epoch.label,
        source_offset: epoch.source_offset,
    })
}

pub fn detrend_samples(x: ArrayView2<'_, f64>, n_pieces: usize) -> Result<Array2<f64>> {
    if n_pieces == 0 {
        return Err(Error::arg("n_pieces", "must be at least 1"));
    }
    let n = x.nrows();
    let base = n / n_pieces;
    if base < 2 {
        return Err(Error::arg(
            "n_pieces",
            format!("{n} samples in {n_pieces} pieces leaves segments shorter than 2 samples"),
        ));
    }
    let mut out = x.to_owned();
    for p in 0..n_pieces {
        let lo = p * base;
        let hi = if p + 1 == n_pieces { n } else { lo + base };
        let m = (hi - lo) as f64;
        let t_mean = (m - 1.0) / 2.0;
        let sxx: f64 = (0..hi - lo).map(|t| (t as f64 - t_mean).powi(2)).sum();
        for mut col in out.slice_mut(s![lo..hi, ..]).columns_mut() {
            let y_mean = col.sum() / m;
            let sxy: f64 = col
                .iter()
                .enumerate()
                .map(|(t, &y)| (t as f64 - t_mean) * (y - y_mean))
                .sum();
            let slope = sxy / sxx;
            for (t, y) in col.iter_mut().enumerate() {
                *y -= y_mean + slope * (t as f64 - t_mean);
            }
        }
    }
    Ok(out)
}
