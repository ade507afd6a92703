//! Channel-pair feature ids, per-band feature tables and the cortical
//! partition of connections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::committee::Dataset;
use crate::error::{Error, Result};
use crate::layout::{ChannelLayout, Region};
use crate::signal::PhaseLabel;
use crate::spectral::{BandSpec, ConnectivityMatrix};

/// Row-major enumeration of unordered channel pairs `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIndex {
    n: usize,
}

impl PairIndex {
    pub fn new(n_channels: usize) -> Self {
        Self { n: n_channels }
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature(&self, i: usize, j: usize) -> Result<usize> {
        if i >= j || j >= self.n {
            return Err(Error::arg(
                "pair",
                format!("need 0 <= i < j < {}, got ({i}, {j})", self.n),
            ));
        }
        Ok(i * self.n - i * (i + 1) / 2 + (j - i - 1))
    }

    pub fn pair(&self, feature: usize) -> Result<(usize, usize)> {
        if feature >= self.len() {
            return Err(Error::arg(
                "feature",
                format!("id {feature} out of range for {} pairs", self.len()),
            ));
        }
        let mut i = 0;
        let mut start = 0;
        loop {
            let row = self.n - i - 1;
            if feature < start + row {
                return Ok((i, i + 1 + feature - start));
            }
            start += row;
            i += 1;
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| (i, j)))
    }

    /// `"A-B"` names for every feature, in id order.
    pub fn names(&self, layout: &ChannelLayout) -> Vec<String> {
        let names = layout.names();
        self.pairs().map(|(i, j)| format!("{}-{}", names[i], names[j])).collect()
    }
}

/// Signed index values for one band: one row per epoch, one column per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub data: Dataset,
    pub band: BandSpec,
    pub pairs: PairIndex,
    pub layout: ChannelLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub band: BandSpec,
    pub n_rows: usize,
    pub n_features: usize,
    pub layout_hash: String,
    pub layout: ChannelLayout,
    pub class_counts: [usize; 4],
}

pub fn build_table(
    matrices: &[ConnectivityMatrix],
    labels: &[PhaseLabel],
    layout: &ChannelLayout,
) -> Result<FeatureTable> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::arg("matrices", "no epochs to tabulate"))?;
    if matrices.len() != labels.len() {
        return Err(Error::arg(
            "labels",
            format!("{} labels for {} epochs", labels.len(), matrices.len()),
        ));
    }
    let band = first.band().clone();
    let n = first.n_channels();
    if n != layout.len() {
        return Err(Error::arg(
            "layout",
            format!("{} channels in the layout, {n} in the matrices", layout.len()),
        ));
    }
    for (e, m) in matrices.iter().enumerate() {
        if m.band() != &band {
            return Err(Error::arg(
                "band",
                format!("epoch {e} is `{}`, expected `{}`", m.band().name, band.name),
            ));
        }
        if m.n_channels() != n {
            return Err(Error::arg("matrices", format!("epoch {e} has {} channels, expected {n}", m.n_channels())));
        }
    }
    let rows: Vec<Vec<f64>> = matrices.par_iter().map(|m| m.upper()).collect();
    let data = Dataset::new(rows.concat(), PairIndex::new(n).len(), labels.to_vec())?;
    Ok(FeatureTable {
        data,
        band,
        pairs: PairIndex::new(n),
        layout: layout.clone(),
    })
}

impl FeatureTable {
    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.data.n_cols()
    }

    /// The antisymmetric matrix of row `r`.
    pub fn matrix(&self, r: usize) -> Result<ConnectivityMatrix> {
        ConnectivityMatrix::from_upper(self.band.clone(), self.pairs.n_channels(), self.data.row(r))
    }

    /// Column-wise mean of the rows with the given label (all rows if `None`).
    pub fn mean_row(&self, label: Option<PhaseLabel>) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features()];
        let mut count = 0usize;
        for r in 0..self.n_rows() {
            if label.map_or(true, |l| self.data.labels()[r] == l) {
                for (a, v) in acc.iter_mut().zip(self.data.row(r)) {
                    *a += v;
                }
                count += 1;
            }
        }
        if count > 0 {
            acc.iter_mut().for_each(|a| *a /= count as f64);
        }
        acc
    }

    pub fn manifest(&self) -> FeatureManifest {
        FeatureManifest {
            band: self.band.clone(),
            n_rows: self.n_rows(),
            n_features: self.n_features(),
            layout_hash: self.layout.hash(),
            layout: self.layout.clone(),
            class_counts: self.data.class_counts(),
        }
    }

    /// Header of pair names plus `label`, then one line per epoch.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.pairs.names(&self.layout);
        header.push("label".into());
        w.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut rec: Vec<String> = self.data.row(r).iter().map(|v| v.to_string()).collect();
            rec.push(self.data.labels()[r].to_string());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str, manifest: &FeatureManifest) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let pairs = PairIndex::new(manifest.layout.len());
        let expected = pairs.names(&manifest.layout);
        let header = rd.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() != expected.len() + 1
            || cols.last() != Some(&"label")
            || cols[..expected.len()].iter().zip(&expected).any(|(a, b)| a != b)
        {
            return Err(Error::Parse {
                location: "feature table header".into(),
                reason: "columns do not match the manifest layout".into(),
            });
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (r, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != cols.len() {
                return Err(Error::Parse {
                    location: format!("row {}", r + 1),
                    reason: format!("{} fields, expected {}", rec.len(), cols.len()),
                });
            }
            for (c, field) in rec.iter().take(expected.len()).enumerate() {
                values.push(field.parse::<f64>().map_err(|_| Error::Parse {
                    location: format!("row {} column {}", r + 1, c + 1),
                    reason: format!("`{field}` is not a number"),
                })?);
            }
            labels.push(rec[expected.len()].parse::<PhaseLabel>().map_err(|e| Error::Parse {
                location: format!("row {} column {}", r + 1, cols.len()),
                reason: e.to_string(),
            })?);
        }
        Ok(Self {
            data: Dataset::new(values, expected.len(), labels)?,
            band: manifest.band.clone(),
            pairs,
            layout: manifest.layout.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConnectionTag {
    Intra { region: Region },
    Inter { a: Region, b: Region },
}

impl ConnectionTag {
    pub fn is_intra(&self) -> bool {
        matches!(self, ConnectionTag::Intra { .. })
    }
}

/// Region tag for every pair, and counts per region cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorticalPartition {
    pub tags: Vec<ConnectionTag>,
    /// Symmetric 5x5 counts in `F, C, P, O, T` order; the diagonal holds
    /// intracortical pairs.
    pub cells: [[usize; 5]; 5],
}

pub fn partition(pairs: &PairIndex, layout: &ChannelLayout) -> Result<CorticalPartition> {
    if layout.len() != pairs.n_channels() {
        return Err(Error::Layout(format!(
            "layout has {} channels, pair index {}",
            layout.len(),
            pairs.n_channels()
        )));
    }
    let region = |c: usize| {
        layout
            .region_of(c)
            .ok_or_else(|| Error::Layout(format!("channel {c} has no region")))
    };
    let mut tags = Vec::with_capacity(pairs.len());
    let mut cells = [[0usize; 5]; 5];
    for (i, j) in pairs.pairs() {
        let (ra, rb) = (region(i)?, region(j)?);
        let (a, b) = if ra <= rb { (ra, rb) } else { (rb, ra) };
        cells[a.index()][b.index()] += 1;
        if a != b {
            cells[b.index()][a.index()] += 1;
        }
        tags.push(if a == b { ConnectionTag::Intra { region: a } } else { ConnectionTag::Inter { a, b } });
    }
    Ok(CorticalPartition { tags, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionTally {
    pub intra: usize,
    pub inter: usize,
}

impl CorticalPartition {
    pub fn totals(&self) -> PartitionTally {
        self.tally(0..self.tags.len())
    }

    /// Intra/inter counts restricted to the given feature ids.
    pub fn tally(&self, features: impl IntoIterator<Item = usize>) -> PartitionTally {
        let mut t = PartitionTally { intra: 0, inter: 0 };
        for f in features {
            if self.tags[f].is_intra() {
                t.intra += 1;
            } else {
                t.inter += 1;
            }
        }
        t
    }

    /// Cell counts restricted to the given feature ids.
    pub fn cells_for(&self, features: impl IntoIterator<Item = usize>) -> [[usize; 5]; 5] {
        let mut cells = [[0usize; 5]; 5];
        for f in features {
            match self.tags[f] {
                ConnectionTag::Intra { region } => cells[region.index()][region.index()] += 1,
                ConnectionTag::Inter { a, b } => {
                    cells[a.index()][b.index()] += 1;
                    cells[b.index()][a.index()] += 1;
                }
            }
        }
        cells
    }
}
