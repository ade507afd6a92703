//! Random-committee classifier: unpruned randomized trees whose leaf class
//! distributions are averaged, plus stratified cross-validation and the
//! per-class metric set.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::PhaseLabel;

const N_CLASSES: usize = PhaseLabel::COUNT;
const GAIN_EPS: f64 = 1e-12;

/// Dense row-major table of numeric features with a class per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n_cols: usize,
    labels: Vec<PhaseLabel>,
}

impl Dataset {
    pub fn new(values: Vec<f64>, n_cols: usize, labels: Vec<PhaseLabel>) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::arg("n_cols", "table has no columns"));
        }
        if values.len() != n_cols * labels.len() {
            return Err(Error::arg(
                "values",
                format!("{} values for {} rows of {n_cols} columns", values.len(), labels.len()),
            ));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(
                "values",
                format!("non-finite value at row {} column {}", k / n_cols, k % n_cols),
            ));
        }
        Ok(Self { values, n_cols, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn labels(&self) -> &[PhaseLabel] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        crate::signal::class_counts(&self.labels)
    }

    /// Keeps only `cols`, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.n_cols) {
            return Err(Error::arg("cols", format!("column {c} out of range for {} columns", self.n_cols)));
        }
        let mut values = Vec::with_capacity(cols.len() * self.n_rows());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Dataset::new(values, cols.len(), self.labels.clone())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Dataset {
            values,
            n_cols: self.n_cols,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// Candidate features per node; `None` means `floor(log2(n_features)) + 1`.
    pub n_candidates: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            n_candidates: None,
            min_leaf: 1,
        }
    }
}

impl TreeConfig {
    fn candidates(&self, n_features: usize) -> usize {
        self.n_candidates
            .unwrap_or_else(|| n_features.ilog2() as usize + 1)
            .clamp(1, n_features)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        counts: [usize; N_CLASSES],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomTree {
    nodes: Vec<Node>,
    n_features: usize,
}

fn entropy(counts: &[usize; N_CLASSES], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum()
}

struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    data: &'a Dataset,
    k: usize,
    min_leaf: usize,
    rng: rng::Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, PhaseLabel)>,
    features: Vec<usize>,
}

impl Builder<'_> {
    fn best_threshold(&mut self, rows: &[usize], feature: usize, parent: &[usize; N_CLASSES]) -> Option<(f64, f64)> {
        let n = rows.len();
        self.scratch.clear();
        self.scratch
            .extend(rows.iter().map(|&r| (self.data.value(r, feature), self.data.labels[r])));
        self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let h = entropy(parent, n);
        let mut left = [0usize; N_CLASSES];
        let mut best: Option<(f64, f64)> = None;
        for s in 0..n - 1 {
            left[self.scratch[s].1.index()] += 1;
            let (lo, hi) = (self.scratch[s].0, self.scratch[s + 1].0);
            let nl = s + 1;
            if lo == hi || nl < self.min_leaf || n - nl < self.min_leaf {
                continue;
            }
            let mut right = *parent;
            for c in 0..N_CLASSES {
                right[c] -= left[c];
            }
            let gain = h
                - (nl as f64 * entropy(&left, nl) + (n - nl) as f64 * entropy(&right, n - nl)) / n as f64;
            if best.map_or(true, |(g, _)| gain > g + GAIN_EPS) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some((gain, if mid > lo { mid } else { hi }));
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [usize]) -> usize {
        let mut counts = [0usize; N_CLASSES];
        for &r in rows.iter() {
            counts[self.data.labels[r].index()] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || rows.len() < 2 * self.min_leaf {
            return id;
        }
        // Draw candidates in a random order; look at `k` of them and keep
        // drawing while no candidate has positive gain.
        let n_feat = self.features.len();
        let mut best: Option<Split> = None;
        let mut drawn = 0;
        while drawn < n_feat && (drawn < self.k || best.is_none()) {
            let pick = rand::Rng::gen_range(&mut self.rng, drawn..n_feat);
            self.features.swap(drawn, pick);
            let feature = self.features[drawn];
            drawn += 1;
            if let Some((gain, threshold)) = self.best_threshold(rows, feature, &counts) {
                if gain <= GAIN_EPS {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain + GAIN_EPS || (gain >= b.gain - GAIN_EPS && feature < b.feature),
                };
                if better {
                    best = Some(Split { gain, feature, threshold });
                }
            }
        }
        let Some(split) = best else { return id };
        let mut cut = 0;
        for i in 0..rows.len() {
            if self.data.value(rows[i], split.feature) < split.threshold {
                rows.swap(i, cut);
                cut += 1;
            }
        }
        let (l, r) = rows.split_at_mut(cut);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl RandomTree {
    pub fn train(data: &Dataset, config: &TreeConfig, seed: u64) -> Result<Self> {
        if data.n_rows() == 0 {
            return Err(Error::arg("table", "cannot train on an empty table"));
        }
        if config.min_leaf == 0 {
            return Err(Error::arg("min_leaf", "must be at least 1"));
        }
        let mut b = Builder {
            data,
            k: config.candidates(data.n_cols()),
            min_leaf: config.min_leaf,
            rng: rng::from_seed(seed),
            nodes: Vec::new(),
            scratch: Vec::with_capacity(data.n_rows()),
            features: (0..data.n_cols()).collect(),
        };
        let mut rows: Vec<usize> = (0..data.n_rows()).collect();
        b.grow(&mut rows);
        Ok(Self {
            nodes: b.nodes,
            n_features: data.n_cols(),
        })
    }

    fn leaf(&self, row: &[f64]) -> &[usize; N_CLASSES] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<[f64; N_CLASSES]> {
        if row.len() != self.n_features {
            return Err(Error::arg(
                "row",
                format!("{} values, tree was trained on {}", row.len(), self.n_features),
            ));
        }
        let counts = self.leaf(row);
        let total: usize = counts.iter().sum();
        Ok(counts.map(|c| c as f64 / total as f64))
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Features used by internal nodes, in node order.
    pub fn split_features(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommitteeConfig {
    pub n_trees: usize,
    #[serde(default)]
    pub tree: TreeConfig,
}

impl Default for CommitteeConfig {
    fn default() -> Self {
        Self {
            n_trees: 10,
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Committee {
    trees: Vec<RandomTree>,
}

/// Index of the largest probability; ties go to the earliest class.
pub fn argmax(dist: &[f64; N_CLASSES]) -> PhaseLabel {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if dist[c] > dist[best] {
            best = c;
        }
    }
    PhaseLabel::ALL[best]
}

impl Committee {
    /// Tree `t` is trained with seed `base_seed + t`.
    pub fn train(data: &Dataset, config: &CommitteeConfig, base_seed: u64) -> Result<Self> {
        if config.n_trees == 0 {
            return Err(Error::arg("n_trees", "committee needs at least one tree"));
        }
        let trees = (0..config.n_trees as u64)
            .into_par_iter()
            .map(|t| RandomTree::train(data, &config.tree, base_seed.wrapping_add(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trees })
    }

    pub fn from_trees(trees: Vec<RandomTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::arg("trees", "committee needs at least one tree"));
        }
        Ok(Self { trees })
    }

    pub fn trees(&self) -> &[RandomTree] {
        &self.trees
    }

    /// Mean of the trees' leaf distributions.
    pub fn predict(&self, row: &[f64]) -> Result<[f64; N_CLASSES]> {
        let mut acc = [0.0; N_CLASSES];
        for t in &self.trees {
            let d = t.predict(row)?;
            for c in 0..N_CLASSES {
                acc[c] += d[c];
            }
        }
        let n = self.trees.len() as f64;
        Ok(acc.map(|v| v / n))
    }

    pub fn predict_label(&self, row: &[f64]) -> Result<PhaseLabel> {
        Ok(argmax(&self.predict(row)?))
    }
}

/// Fold index per row. Each class is shuffled, then rows are dealt to folds
/// round-robin with one counter running across classes.
pub fn stratified_folds(labels: &[PhaseLabel], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::arg("folds", format!("need at least 2 folds, got {folds}")));
    }
    let counts = crate::signal::class_counts(labels);
    for (c, &n) in counts.iter().enumerate() {
        if n < folds {
            return Err(Error::Stratification(format!(
                "class {} has {n} rows, fewer than {folds} folds",
                PhaseLabel::ALL[c]
            )));
        }
    }
    let mut rng = rng::stream(seed, "folds", &[]);
    let mut assignment = vec![0; labels.len()];
    let mut counter = 0;
    for label in PhaseLabel::ALL {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == label).collect();
        rows.shuffle(&mut rng);
        for r in rows {
            assignment[r] = counter % folds;
            counter += 1;
        }
    }
    Ok(assignment)
}

/// Square confusion matrix, rows = true class, columns = predicted class.
pub type Confusion = Vec<Vec<u64>>;

fn check_confusion(m: &[Vec<u64>]) -> Result<u64> {
    let k = m.len();
    if k == 0 || m.iter().any(|r| r.len() != k) {
        return Err(Error::arg("confusion", "matrix must be square and non-empty"));
    }
    let total: u64 = m.iter().flatten().sum();
    if total == 0 {
        return Err(Error::arg("confusion", "matrix is all zeros"));
    }
    Ok(total)
}

/// Cohen's kappa; 0 when chance agreement is already 1.
pub fn kappa(m: &[Vec<u64>]) -> Result<f64> {
    let total = check_confusion(m)? as f64;
    let k = m.len();
    let p_o = (0..k).map(|i| m[i][i]).sum::<u64>() as f64 / total;
    let p_e = (0..k)
        .map(|i| {
            let row: u64 = m[i].iter().sum();
            let col: u64 = m.iter().map(|r| r[i]).sum();
            row as f64 * col as f64
        })
        .sum::<f64>()
        / (total * total);
    if p_e == 1.0 {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: PhaseLabel,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub precision: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest rates for each class of a 4x4 confusion matrix.
pub fn class_metrics(m: &[Vec<u64>]) -> Result<Vec<ClassMetrics>> {
    let total = check_confusion(m)?;
    if m.len() != N_CLASSES {
        return Err(Error::arg("confusion", format!("expected {N_CLASSES} classes, got {}", m.len())));
    }
    Ok((0..N_CLASSES)
        .map(|c| {
            let tp = m[c][c];
            let support: u64 = m[c].iter().sum();
            let predicted: u64 = m.iter().map(|r| r[c]).sum();
            let fn_ = support - tp;
            let fp = predicted - tp;
            let tn = total - tp - fn_ - fp;
            let tp_rate = ratio(tp, tp + fn_);
            let precision = ratio(tp, tp + fp);
            let f1 = if precision + tp_rate == 0.0 {
                0.0
            } else {
                2.0 * precision * tp_rate / (precision + tp_rate)
            };
            ClassMetrics {
                label: PhaseLabel::ALL[c],
                tp_rate,
                fp_rate: ratio(fp, fp + tn),
                precision,
                f1,
                support,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub accuracy: f64,
    pub kappa: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Confusion,
    pub folds: usize,
    pub seed: u64,
    pub n_trees: usize,
    /// Unit that folds are drawn over; always `epoch`.
    pub cv_unit: String,
}

impl CvReport {
    pub fn from_confusion(confusion: Confusion, folds: usize, seed: u64, n_trees: usize) -> Result<Self> {
        let total = check_confusion(&confusion)?;
        let correct: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        Ok(Self {
            accuracy: correct as f64 / total as f64,
            kappa: kappa(&confusion)?,
            per_class: class_metrics(&confusion)?,
            confusion,
            folds,
            seed,
            n_trees,
            cv_unit: "epoch".into(),
        })
    }

    /// Plain-text layout: band and accuracy lines, then one row per metric
    /// with a column per class.
    pub fn render_table(&self, band: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "EEG band\t{band}");
        let _ = writeln!(out, "Cross-validation accuracy\t{:.2} %", 100.0 * self.accuracy);
        let labels: Vec<&str> = self.per_class.iter().map(|m| m.label.as_str()).collect();
        let _ = writeln!(out, "Label\t{}", labels.join("\t"));
        let rows: [(&str, fn(&ClassMetrics) -> f64); 4] = [
            ("TP Rate", |m| m.tp_rate),
            ("FP Rate", |m| m.fp_rate),
            ("Precision", |m| m.precision),
            ("F1 score", |m| m.f1),
        ];
        for (name, get) in rows {
            let vals: Vec<String> = self.per_class.iter().map(|m| format!("{:.3}", get(m))).collect();
            let _ = writeln!(out, "{name}\t{}", vals.join("\t"));
        }
        out
    }
}

/// Pooled stratified k-fold cross-validation of a committee. Fold `f`
/// trains its committee from base seed `derive(seed, f)`.
pub fn cross_validate(data: &Dataset, config: &CommitteeConfig, folds: usize, seed: u64) -> Result<CvReport> {
    let confusion = cv_confusion(data, config, folds, seed)?;
    CvReport::from_confusion(confusion, folds, seed, config.n_trees)
}

pub fn cv_confusion(data: &Dataset, config: &CommitteeConfig, folds: usize, seed: u64) -> Result<Confusion> {
    let assignment = stratified_folds(data.labels(), folds, seed)?;
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..data.n_rows()).filter(|&r| assignment[r] != f).collect();
            let committee = Committee::train(
                &data.select_rows(&train),
                config,
                rng::derive_seed(seed, "cv-fold", &[f as u64]),
            )?;
            let mut m = vec![vec![0u64; N_CLASSES]; N_CLASSES];
            for r in (0..data.n_rows()).filter(|&r| assignment[r] == f) {
                let pred = committee.predict_label(data.row(r))?;
                m[data.labels()[r].index()][pred.index()] += 1;
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = vec![vec![0u64; N_CLASSES]; N_CLASSES];
    for m in per_fold {
        for i in 0..N_CLASSES {
            for j in 0..N_CLASSES {
                confusion[i][j] += m[i][j];
            }
        }
    }
    Ok(confusion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};
    use rand_distr::StandardNormal;

    fn blobs(per_class: usize, n_cols: usize, shift: f64, seed: u64) -> Dataset {
        let mut r = rng::Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for label in PhaseLabel::ALL {
            for _ in 0..per_class {
                for c in 0..n_cols {
                    let v: f64 = r.sample(StandardNormal);
                    values.push(v + if c == label.index() { shift } else { 0.0 });
                }
                labels.push(label);
            }
        }
        Dataset::new(values, n_cols, labels).unwrap()
    }

    #[test]
    fn kappa_oracles() {
        assert_eq!(kappa(&[vec![5, 0], vec![0, 5]]).unwrap(), 1.0);
        assert_eq!(kappa(&[vec![2, 2], vec![2, 2]]).unwrap(), 0.0);
        // p_o = 0.8, p_e = 0.5
        assert!((kappa(&[vec![45, 5], vec![15, 35]]).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(kappa(&[vec![4, 0], vec![0, 0]]).unwrap(), 0.0);
        assert!(kappa(&[vec![0, 0], vec![0, 0]]).is_err());
    }

    #[test]
    fn diagonal_confusion_is_perfect() {
        let m: Confusion = (0..4).map(|i| (0..4).map(|j| if i == j { 7 } else { 0 }).collect()).collect();
        let rep = CvReport::from_confusion(m, 10, 0, 10).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.kappa, 1.0);
        assert!(rep.per_class.iter().all(|c| c.f1 == 1.0 && c.fp_rate == 0.0));
    }

    #[test]
    fn one_row_tree_is_a_leaf() {
        let d = Dataset::new(vec![1.0, 2.0], 2, vec![PhaseLabel::EX]).unwrap();
        let t = RandomTree::train(&d, &TreeConfig::default(), 1).unwrap();
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.predict(&[0.0, 0.0]).unwrap(), [0.0, 0.0, 1.0, 0.0]);
        assert!(t.predict(&[0.0]).is_err());
    }

    #[test]
    fn separable_training_set_is_fit_exactly() {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let x = i as f64 / 40.0;
            values.extend([x, 1.0 - x * x]);
            labels.push(if x < 0.5 { PhaseLabel::IN } else { PhaseLabel::EH });
        }
        let d = Dataset::new(values, 2, labels).unwrap();
        let t = RandomTree::train(&d, &TreeConfig::default(), 9).unwrap();
        for r in 0..d.n_rows() {
            assert_eq!(argmax(&t.predict(d.row(r)).unwrap()), d.labels()[r]);
        }
    }

    #[test]
    fn trees_are_deterministic_per_seed() {
        let d = blobs(20, 6, 1.0, 3);
        let a = RandomTree::train(&d, &TreeConfig::default(), 42).unwrap();
        let b = RandomTree::train(&d, &TreeConfig::default(), 42).unwrap();
        assert_eq!(a, b);
        let probes = blobs(25, 6, 0.0, 4);
        for r in 0..100 {
            assert_eq!(a.predict(probes.row(r)).unwrap(), b.predict(probes.row(r)).unwrap());
        }
    }

    #[test]
    fn committee_of_identical_trees_matches_one_tree() {
        let d = blobs(10, 4, 2.0, 5);
        let t = RandomTree::train(&d, &TreeConfig::default(), 1).unwrap();
        let c = Committee::from_trees(vec![t.clone(); 5]).unwrap();
        for r in 0..d.n_rows() {
            let a = c.predict(d.row(r)).unwrap();
            let b = t.predict(d.row(r)).unwrap();
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn argmax_ties_follow_class_order() {
        assert_eq!(argmax(&[0.25; 4]), PhaseLabel::IN);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), PhaseLabel::IH);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<PhaseLabel> = (0..83).map(|i| PhaseLabel::ALL[i % 4]).collect();
        let f = stratified_folds(&labels, 10, 7).unwrap();
        for label in PhaseLabel::ALL {
            let mut per = [0usize; 10];
            for (r, &l) in labels.iter().enumerate() {
                if l == label {
                    per[f[r]] += 1;
                }
            }
            assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        let short: Vec<PhaseLabel> = PhaseLabel::ALL.to_vec();
        assert!(matches!(stratified_folds(&short, 10, 0), Err(Error::Stratification(_))));
    }

    #[test]
    fn cross_validation_is_deterministic_and_consistent() {
        let d = blobs(30, 5, 3.0, 11);
        let a = cross_validate(&d, &CommitteeConfig::default(), 10, 1).unwrap();
        let b = cross_validate(&d, &CommitteeConfig::default(), 10, 1).unwrap();
        assert_eq!(a, b);
        let rows: Vec<u64> = a.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![30; 4]);
        assert!(a.accuracy > 0.8, "{}", a.accuracy);
        let table = a.render_table("Theta");
        assert!(table.contains("Label\tIN\tIH\tEX\tEH"));
        assert_eq!(table.lines().count(), 7);
    }
}
