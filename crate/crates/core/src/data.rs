//! Dataset construction and non-IID partitioning: synthetic Gaussian blobs,
//! pre-extracted feature CSVs, global standardization, Dirichlet /
//! subject-based / clustered partitioning, and per-node splits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidential::shuffle;

const PARTITION_ATTEMPTS: u64 = 100;

/// Feature matrix with dense class labels and optional per-sample subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    subject_ids: Option<Vec<i64>>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        subject_ids: Option<Vec<i64>>,
        num_classes: usize,
    ) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::Config(format!(
                "feature buffer of {} does not hold {} samples of dim {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::Config(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        if let Some(ids) = &subject_ids {
            if ids.len() != labels.len() {
                return Err(Error::Config("subject id count mismatch".into()));
            }
        }
        Ok(Dataset {
            features,
            dim,
            labels,
            subject_ids,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn subject_ids(&self) -> Option<&[i64]> {
        self.subject_ids.as_deref()
    }
}

/// Per-node index lists into the parent dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeData {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Synthetic Gaussian blobs: class c sits on coordinate axis (c mod dim) at
/// magnitude separation * (1 + c / dim), which keeps every pair of centers at
/// distance >= separation.
pub fn synth_blobs(
    num_classes: usize,
    dim: usize,
    samples_per_class: usize,
    separation: f64,
    noise_sigma: f64,
    seed: u64,
) -> Dataset {
    assert!(num_classes > 0 && dim > 0 && samples_per_class > 0);
    assert!(separation > 0.0 && noise_sigma >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let total = num_classes * samples_per_class;
    let mut features = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for class in 0..num_classes {
        let axis = class % dim;
        let magnitude = separation * (1 + class / dim) as f64;
        for _ in 0..samples_per_class {
            for d in 0..dim {
                let center = if d == axis { magnitude } else { 0.0 };
                let noise = if noise_sigma > 0.0 {
                    noise_sigma * normal.sample(&mut rng)
                } else {
                    0.0
                };
                features.push(center + noise);
            }
            labels.push(class);
        }
    }
    Dataset {
        features,
        dim,
        labels,
        subject_ids: None,
        num_classes,
    }
}

/// Names or positions a CSV column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

/// CSV loading options; see the config schema for the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: ColumnRef,
    pub subject_column: Option<ColumnRef>,
}

fn resolve_column(col: &ColumnRef, headers: Option<&[String]>, width: usize) -> Result<usize> {
    match col {
        ColumnRef::Index(i) => {
            if *i >= width {
                Err(Error::Parse(format!(
                    "column index {i} out of range for {width} columns"
                )))
            } else {
                Ok(*i)
            }
        }
        ColumnRef::Name(name) => match headers {
            Some(headers) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("no column named '{name}' in header"))),
            None => Err(Error::Parse(format!(
                "column '{name}' referenced by name but the file has no header"
            ))),
        },
    }
}

fn integral(value: f64, what: &str, row: usize) -> Result<i64> {
    if !value.is_finite() || value.fract() != 0.0 {
        return Err(Error::Parse(format!(
            "row {row}: {what} must be integral, got {value}"
        )));
    }
    Ok(value as i64)
}

/// Parse a feature CSV into a dataset. Labels are remapped to a dense
/// [0, K) range sorted by original value.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;

    let headers: Option<Vec<String>> = if options.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
                .iter()
                .map(|h| h.to_string())
                .collect(),
        )
    } else {
        None
    };

    let mut width: Option<usize> = headers.as_ref().map(|h| h.len());
    let mut label_idx = None;
    let mut subject_idx = None;
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut subject_ids: Vec<i64> = Vec::new();
    let mut features: Vec<f64> = Vec::new();
    let mut dim = 0usize;

    for (row_num, record) in reader.records().enumerate() {
        // 1-based data row numbers in messages, after any header.
        let row = row_num + 1;
        let record = record.map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        let w = match width {
            Some(w) => {
                if record.len() != w {
                    return Err(Error::Parse(format!(
                        "row {row}: expected {w} columns, found {}",
                        record.len()
                    )));
                }
                w
            }
            None => {
                width = Some(record.len());
                record.len()
            }
        };
        if label_idx.is_none() {
            label_idx = Some(resolve_column(
                &options.label_column,
                headers.as_deref(),
                w,
            )?);
            subject_idx = options
                .subject_column
                .as_ref()
                .map(|c| resolve_column(c, headers.as_deref(), w))
                .transpose()?;
            if subject_idx == label_idx && subject_idx.is_some() {
                return Err(Error::Parse(
                    "label and subject columns must be distinct".into(),
                ));
            }
            dim = w - 1 - usize::from(subject_idx.is_some());
            if dim == 0 {
                return Err(Error::Parse("no feature columns left".into()));
            }
        }

        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                Error::Parse(format!("row {row}, column {col}: non-numeric cell '{cell}'"))
            })?;
            if Some(col) == label_idx {
                raw_labels.push(integral(value, "label", row)?);
            } else if Some(col) == subject_idx {
                subject_ids.push(integral(value, "subject id", row)?);
            } else {
                features.push(value);
            }
        }
    }

    if raw_labels.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }

    // Dense remap sorted by original label value.
    let mut distinct: Vec<i64> = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let remap: BTreeMap<i64, usize> = distinct
        .iter()
        .enumerate()
        .map(|(dense, raw)| (*raw, dense))
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| remap[l]).collect();

    Dataset::new(
        features,
        dim,
        labels,
        if subject_idx.is_some() {
            Some(subject_ids)
        } else {
            None
        },
        distinct.len(),
    )
}

/// Global per-feature z-scoring with a std floor of 1e-8, applied once over
/// the full dataset before any partitioning.
pub fn standardize(dataset: &Dataset) -> Dataset {
    let n = dataset.len();
    debug_assert!(n >= 2, "standardize needs at least two samples");
    let dim = dataset.dim;
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(dataset.sample(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dim];
    for i in 0..n {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(dataset.sample(i)) {
            let d = x - m;
            *v += d * d;
        }
    }
    // Columns whose std sits at or below the floor carry no information and
    // map to exact zeros instead of amplified rounding dust.
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let std = (v / n as f64).sqrt();
            if std > 1e-8 {
                1.0 / std
            } else {
                0.0
            }
        })
        .collect();

    let mut features = Vec::with_capacity(dataset.features.len());
    for i in 0..n {
        for ((x, m), s) in dataset.sample(i).iter().zip(&mean).zip(&scale) {
            features.push((x - m) * s);
        }
    }
    Dataset {
        features,
        dim,
        labels: dataset.labels.clone(),
        subject_ids: dataset.subject_ids.clone(),
        num_classes: dataset.num_classes,
    }
}

/// Dirichlet label-skew partitioning: for every class, node shares are drawn
/// from Dir(concentration * 1_n) and that class's shuffled samples are dealt
/// by those proportions. Resamples with an incremented sub-seed until every
/// node holds at least `min_per_node` samples.
pub fn partition_dirichlet(
    dataset: &Dataset,
    n_nodes: usize,
    concentration: f64,
    min_per_node: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n_nodes < 2 {
        return Err(Error::Config(format!(
            "dirichlet partitioning requires n_nodes >= 2, got {n_nodes}"
        )));
    }
    if !(concentration > 0.0) {
        return Err(Error::Config(format!(
            "dirichlet concentration must be > 0, got {concentration}"
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for i in 0..dataset.len() {
        by_class[dataset.label(i)].push(i);
    }

    let alphas = vec![concentration; n_nodes];
    let dirichlet = Dirichlet::new(&alphas)
        .map_err(|e| Error::Config(format!("invalid dirichlet parameters: {e}")))?;

    let mut worst_node = 0usize;
    for attempt in 0..PARTITION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut nodes: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for class_indices in &by_class {
            let mut indices = class_indices.clone();
            shuffle(&mut indices, &mut rng);
            let proportions = dirichlet.sample(&mut rng);
            // Cumulative-rounding boundaries keep the class total exact.
            let m = indices.len();
            let mut cum = 0.0;
            let mut start = 0usize;
            for (node, p) in proportions.iter().enumerate() {
                cum += p;
                let end = if node + 1 == n_nodes {
                    m
                } else {
                    ((cum * m as f64).round() as usize).min(m)
                };
                nodes[node].extend_from_slice(&indices[start..end.max(start)]);
                start = end.max(start);
            }
        }
        match nodes.iter().enumerate().min_by_key(|(_, v)| v.len()) {
            Some((node, v)) if v.len() < min_per_node => {
                worst_node = node;
            }
            _ => return Ok(nodes),
        }
    }
    Err(Error::Partition(format!(
        "node {worst_node} stayed below {min_per_node} samples after {PARTITION_ATTEMPTS} attempts \
         (n_nodes = {n_nodes}, concentration = {concentration})"
    )))
}

/// Natural partitioning: subjects sorted, then assigned round-robin; every
/// node receives all samples of its subjects.
pub fn partition_by_subject(dataset: &Dataset, n_nodes: usize) -> Result<Vec<Vec<usize>>> {
    let ids = dataset
        .subject_ids()
        .ok_or_else(|| Error::Config("dataset has no subject ids".into()))?;
    let mut subjects: Vec<i64> = ids.to_vec();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.len() < n_nodes {
        return Err(Error::Config(format!(
            "{} distinct subjects cannot cover {n_nodes} nodes",
            subjects.len()
        )));
    }
    let node_of: BTreeMap<i64, usize> = subjects
        .iter()
        .enumerate()
        .map(|(pos, s)| (*s, pos % n_nodes))
        .collect();
    let mut nodes: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (i, s) in ids.iter().enumerate() {
        nodes[node_of[s]].push(i);
    }
    Ok(nodes)
}

/// Deterministic two-level cluster partitioning: classes are cut into
/// `num_clusters` contiguous groups, nodes likewise, and each class's
/// shuffled samples are dealt round-robin to the nodes of its cluster.
/// Produces the disjoint-specialization benchmark layout.
pub fn partition_clustered(
    dataset: &Dataset,
    n_nodes: usize,
    num_clusters: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if num_clusters == 0 || num_clusters > n_nodes || num_clusters > dataset.num_classes {
        return Err(Error::Config(format!(
            "num_clusters {num_clusters} must be in [1, min(n_nodes = {n_nodes}, classes = {}))",
            dataset.num_classes
        )));
    }
    let class_cluster = |class: usize| class * num_clusters / dataset.num_classes;
    let node_cluster = |node: usize| node * num_clusters / n_nodes;
    let mut cluster_nodes: Vec<Vec<usize>> = vec![Vec::new(); num_clusters];
    for node in 0..n_nodes {
        cluster_nodes[node_cluster(node)].push(node);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for i in 0..dataset.len() {
        by_class[dataset.label(i)].push(i);
    }
    let mut nodes: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (class, indices) in by_class.iter().enumerate() {
        let members = &cluster_nodes[class_cluster(class)];
        let mut indices = indices.clone();
        shuffle(&mut indices, &mut rng);
        for (pos, idx) in indices.iter().enumerate() {
            nodes[members[pos % members.len()]].push(*idx);
        }
    }
    Ok(nodes)
}

/// Seeded shuffle followed by contiguous slicing into train/val/test.
pub fn split_node(indices: &[usize], fractions: (f64, f64, f64), seed: u64) -> Result<NodeData> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "fractions ({ft}, {fv}, {fs}) must be positive and sum to 1"
        )));
    }
    let m = indices.len();
    let n_train = (ft * m as f64).floor() as usize;
    let n_val = (fv * m as f64).floor() as usize;
    let n_test = m - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Split(format!(
            "{m} samples split into ({n_train}, {n_val}, {n_test}); every part must be non-empty"
        )));
    }
    let mut shuffled = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut shuffled, &mut rng);
    Ok(NodeData {
        train: shuffled[..n_train].to_vec(),
        val: shuffled[n_train..n_train + n_val].to_vec(),
        test: shuffled[n_train + n_val..].to_vec(),
    })
}

/// Shannon entropy (nats) of a node's label distribution; used by the
/// heterogeneity diagnostics and tests.
pub fn label_entropy(dataset: &Dataset, indices: &[usize]) -> f64 {
    let mut counts = vec![0usize; dataset.num_classes];
    for &i in indices {
        counts[dataset.label(i)] += 1;
    }
    let total = indices.len() as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.ln();
        }
    }
    h
}
