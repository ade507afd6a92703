//! File-based pipeline.
//!
//! Every stage reads its inputs from the run directory and writes its
//! outputs back there, so running the stages one by one produces the same
//! bytes as [`run`]. Nothing written depends on wall-clock time or on
//! absolute paths.
//!
//! Run directory layout:
//!
//! ```text
//! synth/     record.bin (+ .json sidecar), ground_truth.json
//! epoch/     epochs.json, epoch_table.csv
//! psi/       <band>.json (per-epoch indices), <band>_mean.csv
//! features/  <band>.csv, <band>.json, partition.json
//! select/    <band>.json
//! evaluate/  <band>.json, band_summary.csv, best_band.json, class_metrics.txt
//! graph/     <label>_edges.csv, <label>.json, graph_metrics.csv, graph_blocks.json
//! stats/     stats.json, partition.json
//! report/    report.json
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::committee::{cross_validate, ClassMetrics, CommitteeConfig, CvReport};
use crate::error::{Error, Result};
use crate::evolve::{evolve, GaConfig, SelectionResult};
use crate::features::{build_table, partition, CorticalPartition, FeatureManifest, FeatureTable, PartitionTally};
use crate::graph::{self, build_graph, GraphBundle, GraphConfig, GraphMetrics, LengthMap};
use crate::io::{self, RecordFormat};
use crate::layout::{ChannelLayout, Region};
use crate::rng;
use crate::signal::{self, class_counts, cut_epoch, EpochSpan, MultichannelRecord, PhaseInterval, PhaseLabel, PhaseSchedule};
use crate::spectral::{self, default_bands, BandSpec, ConnectivityMatrix, PsiNormalization, SpectralConfig, Window};
use crate::stats::{friedman, omnibus_with_post_hoc, PMethod, RelatedSamples, StatRecord};
use crate::synth::{self, CouplingSpec, GroundTruth, PlantPlan};

pub const STAGES: [&str; 9] = [
    "synth", "epoch", "psi", "features", "select", "evaluate", "graph", "stats", "report",
];

const CLASS_NAMES: [&str; 4] = ["IN", "IH", "EX", "EH"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Input {
    /// Labelled multichannel dataset with planted lags.
    Planted(PlantPlan),
    /// One delayed channel pair, labelled as a single `IN` interval.
    Coupled(CouplingSpec),
    /// An existing record; the schedule comes from `schedule` or the sidecar.
    Record {
        path: PathBuf,
        #[serde(default)]
        format: Option<RecordFormat>,
        #[serde(default)]
        schedule: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralOptions {
    pub seg_len_s: f64,
    pub overlap_frac: f64,
    pub window: Window,
    pub normalization: PsiNormalization,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        let c = SpectralConfig::new(1.0);
        Self {
            seg_len_s: c.seg_len_s,
            overlap_frac: c.overlap_frac,
            window: c.window,
            normalization: c.normalization,
        }
    }
}

impl SpectralOptions {
    pub fn at_rate(&self, rate: f64) -> SpectralConfig {
        SpectralConfig {
            seg_len_s: self.seg_len_s,
            overlap_frac: self.overlap_frac,
            window: self.window,
            rate,
            normalization: self.normalization,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvOptions {
    pub folds: usize,
    pub committee: CommitteeConfig,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            committee: CommitteeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphOptions {
    pub length: LengthMap,
    pub n_refs: usize,
    pub swaps_per_link: usize,
    /// Contiguous epoch groups per class used as Friedman blocks for the
    /// graph-metric table.
    pub n_blocks: usize,
    /// Emit one bundle per class instead of one for all epochs.
    pub per_class: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        let g = GraphConfig::default();
        Self {
            length: g.length,
            n_refs: g.n_refs,
            swaps_per_link: g.swaps_per_link,
            n_blocks: 5,
            per_class: false,
        }
    }
}

impl GraphOptions {
    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            length: self.length,
            n_refs: self.n_refs,
            swaps_per_link: self.swaps_per_link,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Blocking {
    /// One block per connection: class means of the signed index.
    #[default]
    Connection,
    /// One block per epoch rank within class: mean absolute index.
    Epoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsOptions {
    pub blocking: Blocking,
    pub method: PMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Input,
    pub epoch_len_s: f64,
    /// Pieces for piecewise-linear detrending of each epoch; 0 disables it.
    pub detrend_pieces: usize,
    pub spectral: SpectralOptions,
    pub bands: Vec<BandSpec>,
    /// The `rng_seed` inside is replaced per band, see [`PipelineConfig::ga_config`].
    pub ga: GaConfig,
    /// Fixed GA seed for every band instead of one derived from `seed`.
    pub ga_seed: Option<u64>,
    pub cv: CvOptions,
    pub graph: GraphOptions,
    pub stats: StatsOptions,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: Input::Planted(PlantPlan::thermometer(8, 30)),
            epoch_len_s: 2.5,
            detrend_pieces: 0,
            spectral: SpectralOptions::default(),
            bands: default_bands(),
            ga: GaConfig::default(),
            ga_seed: None,
            cv: CvOptions::default(),
            graph: GraphOptions::default(),
            stats: StatsOptions::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epoch_len_s.is_finite() && self.epoch_len_s > 0.0) {
            return Err(Error::Config(format!("epoch_len_s must be positive, got {}", self.epoch_len_s)));
        }
        if self.bands.is_empty() {
            return Err(Error::Config("no bands configured".into()));
        }
        let mut slugs: Vec<String> = self.bands.iter().map(|b| b.slug()).collect();
        slugs.sort();
        slugs.dedup();
        if slugs.len() != self.bands.len() {
            return Err(Error::Config("band names must be distinct".into()));
        }
        self.ga.validate()?;
        if self.cv.folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        if self.cv.committee.n_trees == 0 {
            return Err(Error::Config("committee needs at least one tree".into()));
        }
        if self.graph.n_blocks < 2 {
            return Err(Error::Config("graph.n_blocks must be at least 2".into()));
        }
        if self.graph.n_refs == 0 {
            return Err(Error::Config("graph.n_refs must be at least 1".into()));
        }
        if let Input::Record { path, .. } = &self.input {
            if !path.exists() {
                return Err(Error::Config(format!("input record {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// GA settings for band number `band`.
    pub fn ga_config(&self, band: usize) -> GaConfig {
        GaConfig {
            rng_seed: self
                .ga_seed
                .unwrap_or_else(|| rng::derive_seed(self.seed, "ga", &[band as u64])),
            ..self.ga
        }
    }

    pub fn cv_seed(&self, band: usize) -> u64 {
        rng::derive_seed(self.seed, "cv", &[band as u64])
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.output_dir.join(rel)
    }
}

// --- artifacts -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLedger {
    pub record_sha256: String,
    pub rate: f64,
    pub n_channels: usize,
    pub epoch_len_s: f64,
    pub class_counts: [usize; 4],
    pub spans: Vec<EpochSpan>,
}

/// Per-epoch upper triangles for one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiSet {
    pub band: BandSpec,
    pub layout: ChannelLayout,
    pub labels: Vec<PhaseLabel>,
    pub upper: Vec<Vec<f64>>,
}

impl PsiSet {
    pub fn matrices(&self) -> Result<Vec<ConnectivityMatrix>> {
        self.upper
            .iter()
            .map(|u| ConnectivityMatrix::from_upper(self.band.clone(), self.layout.len(), u))
            .collect()
    }

    pub fn mean(&self) -> Result<ConnectivityMatrix> {
        let n = self.upper.len().max(1) as f64;
        let len = self.upper.first().map_or(0, Vec::len);
        let mean: Vec<f64> = (0..len)
            .map(|k| self.upper.iter().map(|u| u[k]).sum::<f64>() / n)
            .collect();
        ConnectivityMatrix::from_upper(self.band.clone(), self.layout.len(), &mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub band: String,
    pub n_fcs: usize,
    pub cv_accuracy_pct: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestBand {
    pub band: BandSpec,
    pub index: usize,
    pub accuracy: f64,
    pub kappa: f64,
    pub n_fcs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub measure: String,
    /// Per class: mean and sample SD over blocks, `None` if undefined in any block.
    pub cells: Vec<Option<(f64, f64)>>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBlocks {
    pub band: String,
    pub n_blocks: usize,
    /// `[class][block]`.
    pub metrics: Vec<Vec<GraphMetrics>>,
    pub table: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub group: String,
    pub n_connections: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<StatRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub blocking: Blocking,
    pub method: PMethod,
    pub bands: Vec<SubgroupReport>,
    pub best_band: String,
    pub subgroups: Vec<SubgroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub band: String,
    pub regions: Vec<String>,
    /// Connections per region pair, symmetric.
    pub total_cells: [[usize; 5]; 5],
    pub selected_cells: [[usize; 5]; 5],
    pub total: PartitionTally,
    pub selected: PartitionTally,
    pub intra_retained_pct: Option<f64>,
    pub inter_retained_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub planted_features: Vec<usize>,
    pub recovered: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub n_epochs: usize,
    pub class_counts: [usize; 4],
    pub band_summary: Vec<BandRow>,
    pub best_band: String,
    pub class_metrics: Vec<ClassMetrics>,
    pub graph_metrics: Vec<MetricRow>,
    pub band_tests: Vec<StatRecord>,
    pub partition: PartitionReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_recovery: Option<Recovery>,
    /// Relative path to SHA-256 of every stage artifact.
    pub artifacts: BTreeMap<String, String>,
}

// --- helpers ---------------------------------------------------------------

fn load<T: for<'de> Deserialize<'de>>(stage: &'static str, path: &Path) -> Result<T> {
    io::read_json(path).map_err(|e| e.in_stage(stage, path))
}

fn save<T: Serialize + ?Sized>(stage: &'static str, path: &Path, value: &T) -> Result<()> {
    io::write_json(path, value).map_err(|e| e.in_stage(stage, path))
}

fn save_text(stage: &'static str, path: &Path, text: &str) -> Result<()> {
    io::write_bytes(path, text.as_bytes()).map_err(|e| e.in_stage(stage, path))
}

fn read_text(stage: &'static str, path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e).in_stage(stage, path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn record_source(cfg: &PipelineConfig) -> (PathBuf, RecordFormat) {
    match &cfg.input {
        Input::Record { path, format, .. } => (
            path.clone(),
            format
                .or_else(|| RecordFormat::from_path(path))
                .unwrap_or(RecordFormat::Csv),
        ),
        _ => (cfg.out("synth/record.bin"), RecordFormat::Binary),
    }
}

fn load_record(stage: &'static str, cfg: &PipelineConfig) -> Result<(MultichannelRecord, PathBuf)> {
    let (path, format) = record_source(cfg);
    let rec = io::load_record(&path, format).map_err(|e| e.in_stage(stage, &path))?;
    Ok((rec, path))
}

fn load_schedule(stage: &'static str, cfg: &PipelineConfig, record: &Path) -> Result<PhaseSchedule> {
    if let Input::Record { schedule: Some(p), .. } = &cfg.input {
        return load(stage, p);
    }
    io::load_manifest(record)
        .map_err(|e| e.in_stage(stage, record))?
        .and_then(|m| m.schedule)
        .ok_or_else(|| Error::Config("record has no phase schedule".into()).in_stage(stage, io::sidecar_path(record)))
}

fn band_path(cfg: &PipelineConfig, dir: &str, band: &BandSpec, ext: &str) -> PathBuf {
    cfg.out(&format!("{dir}/{}.{ext}", band.slug()))
}

pub fn load_table(cfg: &PipelineConfig, stage: &'static str, band: &BandSpec) -> Result<FeatureTable> {
    let mpath = band_path(cfg, "features", band, "json");
    let manifest: FeatureManifest = load(stage, &mpath)?;
    let cpath = band_path(cfg, "features", band, "csv");
    let text = read_text(stage, &cpath)?;
    FeatureTable::from_csv(&text, &manifest).map_err(|e| e.in_stage(stage, &cpath))
}

fn load_selection(cfg: &PipelineConfig, stage: &'static str, band: &BandSpec) -> Result<SelectionResult> {
    load(stage, &band_path(cfg, "select", band, "json"))
}

fn load_best(cfg: &PipelineConfig, stage: &'static str) -> Result<BestBand> {
    load(stage, &cfg.out("evaluate/best_band.json"))
}

/// Mean and sample standard deviation.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

// --- stages ----------------------------------------------------------------

/// Writes the synthetic record, its sidecar and the ground truth.
pub fn stage_synth(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "synth";
    let record_path = cfg.out("synth/record.bin");
    let truth_path = cfg.out("synth/ground_truth.json");
    let mut rng = rng::stream(cfg.seed, "synth", &[]);
    let (record, schedule, truth) = match &cfg.input {
        Input::Planted(plan) => synth::planted_record(plan, &mut rng).map_err(|e| e.in_stage(STAGE, &record_path))?,
        Input::Coupled(spec) => {
            let pair = synth::coupled_pair(spec, &mut rng).map_err(|e| e.in_stage(STAGE, &record_path))?;
            let schedule = PhaseSchedule::new(vec![PhaseInterval {
                label: PhaseLabel::IN,
                start_s: 0.0,
                duration_s: pair.record.duration(),
            }])?;
            let sign = if pair.manifest.delay_samples >= 0 { 1.0 } else { -1.0 };
            let truth = GroundTruth {
                planted_features: if pair.manifest.delay_samples != 0 { vec![0] } else { vec![] },
                delays_ms: vec![synth::PlantedDelay {
                    label: PhaseLabel::IN,
                    pair: [0, 1],
                    feature: 0,
                    delay_ms: spec.delay_ms,
                    realized_delay_ms: sign * pair.manifest.realized_delay_ms.abs(),
                }],
                seed: cfg.seed,
                warnings: pair.manifest.warnings,
            };
            (pair.record, schedule, truth)
        }
        Input::Record { .. } => {
            return Err(Error::Config("input is an existing record; nothing to synthesize".into())
                .in_stage(STAGE, &record_path))
        }
    };
    io::store_record(&record_path, RecordFormat::Binary, &record, Some(&schedule))
        .map_err(|e| e.in_stage(STAGE, &record_path))?;
    save(STAGE, &truth_path, &truth)?;
    Ok(vec![record_path.clone(), io::sidecar_path(&record_path), truth_path])
}

/// Tiles the schedule with epochs and writes the epoch ledger.
pub fn stage_epoch(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "epoch";
    let (record, path) = load_record(STAGE, cfg)?;
    let schedule = load_schedule(STAGE, cfg, &path)?;
    let spans = signal::epoch_spans(&record, &schedule, cfg.epoch_len_s).map_err(|e| e.in_stage(STAGE, &path))?;
    if spans.is_empty() {
        return Err(Error::Range("schedule yields no epochs".into()).in_stage(STAGE, &path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e).in_stage(STAGE, &path))?;
    let counts = class_counts(spans.iter().map(|s| &s.label));
    let ledger = EpochLedger {
        record_sha256: sha256_hex(&bytes),
        rate: record.rate(),
        n_channels: record.n_channels(),
        epoch_len_s: cfg.epoch_len_s,
        class_counts: counts,
        spans,
    };
    let ledger_path = cfg.out("epoch/epochs.json");
    save(STAGE, &ledger_path, &ledger)?;

    let mut table = format!("Sl.No.,Condition,Label,# {} s Epochs\n", cfg.epoch_len_s);
    for (k, label) in PhaseLabel::ALL.iter().enumerate() {
        let _ = writeln!(table, "{},{},{},{}", k + 1, label.condition(), label, counts[k]);
    }
    let _ = writeln!(table, "Total,,,{}", counts.iter().sum::<usize>());
    let table_path = cfg.out("epoch/epoch_table.csv");
    save_text(STAGE, &table_path, &table)?;
    Ok(vec![ledger_path, table_path])
}

/// Per-epoch phase slope index for every band.
pub fn stage_psi(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "psi";
    let ledger_path = cfg.out("epoch/epochs.json");
    let ledger: EpochLedger = load(STAGE, &ledger_path)?;
    let (record, path) = load_record(STAGE, cfg)?;
    let spectral = cfg.spectral.at_rate(record.rate());
    let per_epoch: Vec<Vec<ConnectivityMatrix>> = ledger
        .spans
        .par_iter()
        .map(|span| {
            let epoch = cut_epoch(&record, span);
            let samples = if cfg.detrend_pieces > 0 {
                signal::detrend_samples(epoch.samples.view(), cfg.detrend_pieces)?
            } else {
                epoch.samples
            };
            spectral::psi_all_bands(samples.view(), &spectral, &cfg.bands)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage(STAGE, &path))?;
    let labels: Vec<PhaseLabel> = ledger.spans.iter().map(|s| s.label).collect();
    let mut written = Vec::new();
    for (b, band) in cfg.bands.iter().enumerate() {
        let set = PsiSet {
            band: band.clone(),
            layout: record.layout().clone(),
            labels: labels.clone(),
            upper: per_epoch.iter().map(|m| m[b].upper()).collect(),
        };
        let p = band_path(cfg, "psi", band, "json");
        save(STAGE, &p, &set)?;
        let mean_path = cfg.out(&format!("psi/{}_mean.csv", band.slug()));
        save_text(STAGE, &mean_path, &set.mean()?.to_csv())?;
        written.push(p);
        written.push(mean_path);
    }
    Ok(written)
}

/// Feature tables per band plus the cortical partition of all pairs.
pub fn stage_features(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "features";
    let mut written = Vec::new();
    let mut layout = None;
    for band in &cfg.bands {
        let src = band_path(cfg, "psi", band, "json");
        let set: PsiSet = load(STAGE, &src)?;
        let table = build_table(&set.matrices()?, &set.labels, &set.layout).map_err(|e| e.in_stage(STAGE, &src))?;
        let csv_path = band_path(cfg, "features", band, "csv");
        save_text(STAGE, &csv_path, &table.to_csv()?)?;
        let json_path = band_path(cfg, "features", band, "json");
        save(STAGE, &json_path, &table.manifest())?;
        written.push(csv_path);
        written.push(json_path);
        layout = Some((set.layout, src));
    }
    let (layout, src) = layout.expect("validated: at least one band");
    let part = partition(&crate::features::PairIndex::new(layout.len()), &layout).map_err(|e| e.in_stage(STAGE, &src))?;
    let p = cfg.out("features/partition.json");
    save(STAGE, &p, &part)?;
    written.push(p);
    Ok(written)
}

/// Genetic-algorithm feature selection per band.
pub fn stage_select(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "select";
    let mut written = Vec::new();
    for (b, band) in cfg.bands.iter().enumerate() {
        let table = load_table(cfg, STAGE, band)?;
        let out = band_path(cfg, "select", band, "json");
        let result = evolve(&table.data, &cfg.ga_config(b)).map_err(|e| e.in_stage(STAGE, &out))?;
        save(STAGE, &out, &result)?;
        written.push(out);
    }
    Ok(written)
}

/// Cross-validated committee on each band's selected features, the band
/// summary and the best band (highest accuracy, lower band on ties).
pub fn stage_evaluate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "evaluate";
    let mut written = Vec::new();
    let mut reports: Vec<CvReport> = Vec::new();
    let mut n_fcs = Vec::new();
    for (b, band) in cfg.bands.iter().enumerate() {
        let table = load_table(cfg, STAGE, band)?;
        let sel = load_selection(cfg, STAGE, band)?;
        let out = band_path(cfg, "evaluate", band, "json");
        let report = table
            .data
            .select_columns(&sel.best_mask)
            .and_then(|d| cross_validate(&d, &cfg.cv.committee, cfg.cv.folds, cfg.cv_seed(b)))
            .map_err(|e| e.in_stage(STAGE, &out))?;
        save(STAGE, &out, &report)?;
        written.push(out);
        n_fcs.push(sel.best_mask.len());
        reports.push(report);
    }

    let mut summary = String::from("EEG band,#FCs,CV Accuracy (%),Kappa\n");
    for ((band, r), n) in cfg.bands.iter().zip(&reports).zip(&n_fcs) {
        let _ = writeln!(summary, "{},{},{:.2},{:.4}", band.name, n, 100.0 * r.accuracy, r.kappa);
    }
    let summary_path = cfg.out("evaluate/band_summary.csv");
    save_text(STAGE, &summary_path, &summary)?;

    let mut order: Vec<usize> = (0..cfg.bands.len()).collect();
    order.sort_by(|&a, &b| {
        reports[b]
            .accuracy
            .total_cmp(&reports[a].accuracy)
            .then(cfg.bands[a].f_lo.total_cmp(&cfg.bands[b].f_lo))
            .then(a.cmp(&b))
    });
    let k = order[0];
    let best = BestBand {
        band: cfg.bands[k].clone(),
        index: k,
        accuracy: reports[k].accuracy,
        kappa: reports[k].kappa,
        n_fcs: n_fcs[k],
    };
    let best_path = cfg.out("evaluate/best_band.json");
    save(STAGE, &best_path, &best)?;
    let table_path = cfg.out("evaluate/class_metrics.txt");
    save_text(STAGE, &table_path, &reports[k].render_table(&best.band.name))?;
    written.extend([summary_path, best_path, table_path]);
    Ok(written)
}

const MEASURES: [&str; 5] = [
    "Average clustering (C)",
    "Average shortest path length (L)",
    "Degree assortativity (A)",
    "Small-world coefficient (σ)",
    "Small-world coefficient (ω)",
];

fn measure_values(m: &GraphMetrics) -> [Option<f64>; 5] {
    [Some(m.clustering), m.path_length, m.assortativity, m.sigma, m.omega]
}

fn class_rows(labels: &[PhaseLabel], label: PhaseLabel) -> Vec<usize> {
    (0..labels.len()).filter(|&r| labels[r] == label).collect()
}

fn mean_matrix(table: &FeatureTable, rows: &[usize]) -> Result<ConnectivityMatrix> {
    let n = rows.len().max(1) as f64;
    let mean: Vec<f64> = (0..table.n_features())
        .map(|f| rows.iter().map(|&r| table.data.value(r, f)).sum::<f64>() / n)
        .collect();
    ConnectivityMatrix::from_upper(table.band.clone(), table.layout.len(), &mean)
}

fn graph_of(table: &FeatureTable, rows: &[usize], mask: &[usize]) -> Result<graph::BrainGraph> {
    build_graph(mean_matrix(table, rows)?.to_array().view(), mask)
}

fn metric_cell(v: Option<(f64, f64)>) -> String {
    v.map_or_else(|| "n/a".into(), |(m, sd)| format!("{m:.3} ({sd:.3})"))
}

/// Graphs of the best band: bundles, edge lists and the metric table with
/// contiguous epoch groups as Friedman blocks.
pub fn stage_graph(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "graph";
    let best = load_best(cfg, STAGE)?;
    let table = load_table(cfg, STAGE, &best.band)?;
    let sel = load_selection(cfg, STAGE, &best.band)?;
    let gcfg = cfg.graph.graph_config();
    let names = table.layout.names().to_vec();
    let labels = table.data.labels().to_vec();
    let mut written = Vec::new();

    let groups: Vec<(String, Vec<usize>, u64)> = if cfg.graph.per_class {
        PhaseLabel::ALL
            .iter()
            .map(|&l| (l.to_string(), class_rows(&labels, l), l.index() as u64))
            .collect()
    } else {
        vec![("ALL".to_string(), (0..labels.len()).collect(), PhaseLabel::COUNT as u64)]
    };
    for (name, rows, key) in &groups {
        let edges_path = cfg.out(&format!("graph/{name}_edges.csv"));
        let g = graph_of(&table, rows, &sel.best_mask).map_err(|e| e.in_stage(STAGE, &edges_path))?;
        let m = graph::metrics(&g, &gcfg, rng::derive_seed(cfg.seed, "graph", &[*key]));
        save_text(STAGE, &edges_path, &g.to_edge_csv(&names))?;
        let bundle_path = cfg.out(&format!("graph/{name}.json"));
        save(STAGE, &bundle_path, &GraphBundle::new(name.clone(), &g, &names, m))?;
        written.extend([edges_path, bundle_path]);
    }

    let blocks_path = cfg.out("graph/graph_blocks.json");
    let n_blocks = cfg.graph.n_blocks;
    let jobs: Vec<(usize, usize, Vec<usize>)> = PhaseLabel::ALL
        .iter()
        .enumerate()
        .flat_map(|(c, &l)| {
            let rows = class_rows(&labels, l);
            let len = rows.len();
            (0..n_blocks)
                .map(|g| (c, g, rows[g * len / n_blocks..(g + 1) * len / n_blocks].to_vec()))
                .collect::<Vec<_>>()
        })
        .collect();
    if let Some((c, _, _)) = jobs.iter().find(|(_, _, rows)| rows.is_empty()) {
        return Err(Error::Stratification(format!(
            "class {} has fewer epochs than the {n_blocks} graph blocks",
            PhaseLabel::ALL[*c]
        ))
        .in_stage(STAGE, &blocks_path));
    }
    let flat: Vec<GraphMetrics> = jobs
        .par_iter()
        .map(|(c, g, rows)| {
            let graph = graph_of(&table, rows, &sel.best_mask)?;
            Ok(graph::metrics(
                &graph,
                &gcfg,
                rng::derive_seed(cfg.seed, "graph-block", &[*c as u64, *g as u64]),
            ))
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage(STAGE, &blocks_path))?;
    let metrics: Vec<Vec<GraphMetrics>> = flat.chunks(n_blocks).map(<[_]>::to_vec).collect();

    let mut rows = Vec::new();
    for (k, measure) in MEASURES.iter().enumerate() {
        let per_class: Vec<Option<Vec<f64>>> = metrics
            .iter()
            .map(|blocks| blocks.iter().map(|m| measure_values(m)[k]).collect())
            .collect();
        let cells = per_class.iter().map(|v| v.as_deref().map(mean_sd)).collect();
        let p_value = if per_class.iter().all(Option::is_some) {
            let cols: Vec<Vec<f64>> = per_class.into_iter().flatten().collect();
            RelatedSamples::from_columns(&cols)
                .and_then(|s| friedman(&s, cfg.stats.method))
                .ok()
                .map(|r| r.p_value)
        } else {
            None
        };
        rows.push(MetricRow {
            measure: measure.to_string(),
            cells,
            p_value,
        });
    }
    let mut csv = String::from("Graph Measure,IN,IH,EX,EH,p-value\n");
    for r in &rows {
        let cells: Vec<String> = r.cells.iter().copied().map(metric_cell).collect();
        let p = r.p_value.map_or_else(|| "n/a".into(), |p| format!("{p:.2E}"));
        let _ = writeln!(csv, "{},{},{}", r.measure, cells.join(","), p);
    }
    let csv_path = cfg.out("graph/graph_metrics.csv");
    save_text(STAGE, &csv_path, &csv)?;
    save(
        STAGE,
        &blocks_path,
        &GraphBlocks {
            band: best.band.name.clone(),
            n_blocks,
            metrics,
            table: rows,
        },
    )?;
    written.extend([csv_path, blocks_path]);
    Ok(written)
}

/// Block rows for `features` under the configured blocking unit.
fn blocks_for(table: &FeatureTable, features: &[usize], blocking: Blocking) -> Result<RelatedSamples> {
    let labels = table.data.labels();
    let rows: Vec<Vec<usize>> = PhaseLabel::ALL.iter().map(|&l| class_rows(labels, l)).collect();
    if let Some(c) = rows.iter().position(Vec::is_empty) {
        return Err(Error::Stratification(format!("class {} has no epochs", PhaseLabel::ALL[c])));
    }
    let block_rows: Vec<Vec<f64>> = match blocking {
        Blocking::Connection => features
            .iter()
            .map(|&f| {
                rows.iter()
                    .map(|rs| rs.iter().map(|&r| table.data.value(r, f)).sum::<f64>() / rs.len() as f64)
                    .collect()
            })
            .collect(),
        Blocking::Epoch => {
            let n = rows.iter().map(Vec::len).min().unwrap_or(0);
            (0..n)
                .map(|e| {
                    rows.iter()
                        .map(|rs| {
                            features.iter().map(|&f| table.data.value(rs[e], f).abs()).sum::<f64>()
                                / features.len() as f64
                        })
                        .collect()
                })
                .collect()
        }
    };
    RelatedSamples::new(block_rows)
}

fn test_group(table: &FeatureTable, group: String, features: &[usize], opts: &StatsOptions) -> SubgroupReport {
    let outcome = if features.is_empty() {
        Err("no connections".to_string())
    } else {
        blocks_for(table, features, opts.blocking)
            .and_then(|s| omnibus_with_post_hoc(&group, &s, &CLASS_NAMES, opts.method))
            .map_err(|e| e.to_string())
    };
    match outcome {
        Ok(records) => SubgroupReport {
            group,
            n_connections: features.len(),
            records,
            skipped: None,
        },
        Err(reason) => SubgroupReport {
            group,
            n_connections: features.len(),
            records: Vec::new(),
            skipped: Some(reason),
        },
    }
}

fn region_groups(part: &CorticalPartition, features: &[usize]) -> Vec<(String, Vec<usize>)> {
    use crate::features::ConnectionTag;
    let mut out = Vec::new();
    for a in Region::ALL {
        let fs: Vec<usize> = features
            .iter()
            .copied()
            .filter(|&f| part.tags[f] == ConnectionTag::Intra { region: a })
            .collect();
        out.push((a.to_string(), fs));
    }
    for (i, a) in Region::ALL.iter().enumerate() {
        for b in &Region::ALL[i + 1..] {
            let fs: Vec<usize> = features
                .iter()
                .copied()
                .filter(|&f| match part.tags[f] {
                    ConnectionTag::Inter { a: x, b: y } => (x, y) == (*a, *b) || (x, y) == (*b, *a),
                    _ => false,
                })
                .collect();
            out.push((format!("{a}{b}"), fs));
        }
    }
    out
}

fn pct(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| 100.0 * part as f64 / whole as f64)
}

/// Friedman and Wilcoxon tests per band and per cortical subgroup of the
/// best band, plus the partition tally of its selected connections.
pub fn stage_stats(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "stats";
    let out = cfg.out("stats/stats.json");
    let mut bands = Vec::new();
    for band in &cfg.bands {
        let table = load_table(cfg, STAGE, band)?;
        let all: Vec<usize> = (0..table.n_features()).collect();
        bands.push(test_group(&table, band.name.clone(), &all, &cfg.stats));
    }
    let best = load_best(cfg, STAGE)?;
    let table = load_table(cfg, STAGE, &best.band)?;
    let sel = load_selection(cfg, STAGE, &best.band)?;
    let part = partition(&table.pairs, &table.layout).map_err(|e| e.in_stage(STAGE, &out))?;
    let subgroups = region_groups(&part, &sel.best_mask)
        .into_iter()
        .map(|(g, fs)| test_group(&table, g, &fs, &cfg.stats))
        .collect();
    save(
        STAGE,
        &out,
        &StatsReport {
            blocking: cfg.stats.blocking,
            method: cfg.stats.method,
            bands,
            best_band: best.band.name.clone(),
            subgroups,
        },
    )?;

    let total = part.totals();
    let selected = part.tally(sel.best_mask.iter().copied());
    let report = PartitionReport {
        band: best.band.name.clone(),
        regions: Region::ALL.iter().map(|r| r.to_string()).collect(),
        total_cells: part.cells,
        selected_cells: part.cells_for(sel.best_mask.iter().copied()),
        total,
        selected,
        intra_retained_pct: pct(selected.intra, total.intra),
        inter_retained_pct: pct(selected.inter, total.inter),
    };
    let part_path = cfg.out("stats/partition.json");
    save(STAGE, &part_path, &report)?;
    Ok(vec![out, part_path])
}

/// Every file under the run directory except the report itself, keyed by
/// `/`-separated relative path.
pub fn artifact_checksums(root: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel: Vec<String> = path
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect();
                if rel.first().map(String::as_str) == Some("report") {
                    continue;
                }
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                out.insert(rel.join("/"), sha256_hex(&bytes));
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

/// Gathers the tables into `report/report.json` with artifact checksums.
pub fn stage_report(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    const STAGE: &str = "report";
    let out = cfg.out("report/report.json");
    let ledger: EpochLedger = load(STAGE, &cfg.out("epoch/epochs.json"))?;
    let mut band_summary = Vec::new();
    for band in &cfg.bands {
        let sel = load_selection(cfg, STAGE, band)?;
        let r: CvReport = load(STAGE, &band_path(cfg, "evaluate", band, "json"))?;
        band_summary.push(BandRow {
            band: band.name.clone(),
            n_fcs: sel.best_mask.len(),
            cv_accuracy_pct: 100.0 * r.accuracy,
            kappa: r.kappa,
        });
    }
    let best = load_best(cfg, STAGE)?;
    let best_cv: CvReport = load(STAGE, &band_path(cfg, "evaluate", &best.band, "json"))?;
    let blocks: GraphBlocks = load(STAGE, &cfg.out("graph/graph_blocks.json"))?;
    let stats: StatsReport = load(STAGE, &cfg.out("stats/stats.json"))?;
    let partition: PartitionReport = load(STAGE, &cfg.out("stats/partition.json"))?;
    let truth_path = cfg.out("synth/ground_truth.json");
    let planted_recovery = if truth_path.exists() && !matches!(cfg.input, Input::Record { .. }) {
        let truth: GroundTruth = load(STAGE, &truth_path)?;
        let sel = load_selection(cfg, STAGE, &best.band)?;
        let recovered = truth
            .planted_features
            .iter()
            .copied()
            .filter(|f| sel.best_mask.binary_search(f).is_ok())
            .collect();
        Some(Recovery {
            planted_features: truth.planted_features,
            recovered,
        })
    } else {
        None
    };
    let report = RunReport {
        seed: cfg.seed,
        n_epochs: ledger.spans.len(),
        class_counts: ledger.class_counts,
        band_summary,
        best_band: best.band.name.clone(),
        class_metrics: best_cv.per_class,
        graph_metrics: blocks.table,
        band_tests: stats
            .bands
            .into_iter()
            .flat_map(|g| g.records.into_iter().filter(|r| r.comparison.is_none()))
            .collect(),
        partition,
        planted_recovery,
        artifacts: artifact_checksums(&cfg.output_dir).map_err(|e| e.in_stage(STAGE, &cfg.output_dir))?,
    };
    save(STAGE, &out, &report)?;
    Ok(vec![out])
}

pub fn run_stage(cfg: &PipelineConfig, stage: &str) -> Result<Vec<PathBuf>> {
    match stage {
        "synth" => stage_synth(cfg),
        "epoch" => stage_epoch(cfg),
        "psi" => stage_psi(cfg),
        "features" => stage_features(cfg),
        "select" => stage_select(cfg),
        "evaluate" => stage_evaluate(cfg),
        "graph" => stage_graph(cfg),
        "stats" => stage_stats(cfg),
        "report" => stage_report(cfg),
        other => Err(Error::Config(format!("unknown stage `{other}`"))),
    }
}

/// All stages in order; `synth` is skipped for recorded input.
pub fn run(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    for stage in STAGES {
        if stage == "synth" && matches!(cfg.input, Input::Record { .. }) {
            continue;
        }
        run_stage(cfg, stage)?;
    }
    io::read_json(&cfg.out("report/report.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_with_defaults() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let sparse: PipelineConfig = serde_json::from_str(r#"{"seed": 7, "cv": {"folds": 5}}"#).unwrap();
        assert_eq!(sparse.seed, 7);
        assert_eq!(sparse.cv.folds, 5);
        assert_eq!(sparse.cv.committee.n_trees, 10);
        assert_eq!(sparse.epoch_len_s, 2.5);
        assert_eq!(sparse.bands.len(), 7);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn ga_seed_is_derived_per_band_unless_fixed() {
        let mut cfg = PipelineConfig {
            seed: 3,
            ..Default::default()
        };
        assert_ne!(cfg.ga_config(0).rng_seed, cfg.ga_config(1).rng_seed);
        cfg.ga_seed = Some(11);
        assert_eq!(cfg.ga_config(4).rng_seed, 11);
    }

    #[test]
    fn sample_sd() {
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn metric_cells_use_three_decimals() {
        assert_eq!(metric_cell(Some((0.0714, 0.0361))), "0.071 (0.036)");
        assert_eq!(metric_cell(None), "n/a");
        assert_eq!(format!("{:.2E}", 4.891e-11), "4.89E-11");
        assert_eq!(format!("{:.2E}", 0.103), "1.03E-1");
    }

    #[test]
    fn missing_input_names_the_stage_and_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            output_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        match stage_psi(&cfg) {
            Err(Error::Stage { stage, path, .. }) => {
                assert_eq!(stage, "psi");
                assert!(path.ends_with("epoch/epochs.json"));
            }
            other => panic!("expected a stage error, got {other:?}"),
        }
    }
}
