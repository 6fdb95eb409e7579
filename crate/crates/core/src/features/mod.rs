//! The three feature views of a processed cohort: raw landmark coordinates,
//! landmarks without the chin contour, and the 52 symmetry metrics.

mod catalog;

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{
    guarded_ratio, ols_slope, CatalogError, MetricCatalog, MetricDef, MetricKind, MirrorRule, DEGENERATE_VALUE,
    METRIC_COUNT, MIN_DENOMINATOR,
};

use crate::dataset_io::{ClassCounts, Diagnosis};
use crate::geometry::{Point, CHIN, LANDMARK_COUNT};
use crate::preprocess::ProcessedSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Landmarks,
    NoChin,
    Metrics,
}

impl View {
    pub const ALL: [View; 3] = [View::Landmarks, View::NoChin, View::Metrics];

    pub fn feature_count(self) -> usize {
        match self {
            View::Landmarks => 2 * LANDMARK_COUNT,
            View::NoChin => 2 * (LANDMARK_COUNT - CHIN.count()),
            View::Metrics => METRIC_COUNT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Landmarks => "landmarks",
            View::NoChin => "no_chin",
            View::Metrics => "metrics",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "landmarks" => Ok(View::Landmarks),
            "no_chin" | "nochin" => Ok(View::NoChin),
            "metrics" => Ok(View::Metrics),
            other => Err(format!("unknown view {other:?} (landmarks, no_chin, metrics)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no samples to featurize")]
    EmptyInput,
    #[error("{0}")]
    Shape(String),
    #[error("non-finite feature {feature} in sample {id}")]
    NonFinite { id: String, feature: String },
    #[error("feature file row {row}: {reason}")]
    Malformed { row: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A labelled, row-major `n x f` matrix of finite features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    view: Option<View>,
    values: Vec<f64>,
    labels: Vec<Diagnosis>,
    feature_names: Vec<String>,
    sample_ids: Vec<String>,
}

impl FeatureMatrix {
    /// Builds a matrix from rows. `view`, when given, fixes the column count.
    pub fn new(
        view: Option<View>,
        rows: Vec<Vec<f64>>,
        labels: Vec<Diagnosis>,
        feature_names: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self, FeatureError> {
        if rows.is_empty() {
            return Err(FeatureError::EmptyInput);
        }
        let f = feature_names.len();
        if let Some(v) = view {
            if f != v.feature_count() {
                return Err(FeatureError::Shape(format!("{v} view needs {} features, got {f}", v.feature_count())));
            }
        }
        if labels.len() != rows.len() || sample_ids.len() != rows.len() {
            return Err(FeatureError::Shape("rows, labels and ids differ in length".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * f);
        for (row, id) in rows.iter().zip(&sample_ids) {
            if row.len() != f {
                return Err(FeatureError::Shape(format!("sample {id} has {} features, expected {f}", row.len())));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite { id: id.clone(), feature: feature_names[j].clone() });
            }
            values.extend_from_slice(row);
        }
        Ok(Self { view, values, labels, feature_names, sample_ids })
    }

    /// Unnamed matrix with generated ids and feature names.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<Diagnosis>) -> Result<Self, FeatureError> {
        let f = rows.first().map_or(0, Vec::len);
        let names = (1..=f).map(|j| format!("f{j}")).collect();
        let ids = (1..=rows.len()).map(|i| format!("s{i}")).collect();
        Self::new(None, rows, labels, names, ids)
    }

    pub fn view(&self) -> Option<View> {
        self.view
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let f = self.n_features();
        &self.values[i * f..(i + 1) * f]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_features().max(1))
    }

    pub fn labels(&self) -> &[Diagnosis] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn class_counts(&self) -> ClassCounts {
        ClassCounts::from_labels(&self.labels)
    }

    /// Sub-matrix of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let f = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            view: self.view,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        }
    }

    /// All rows except `index`.
    pub fn without(&self, index: usize) -> Self {
        let keep: Vec<usize> = (0..self.n_samples()).filter(|&i| i != index).collect();
        self.select(&keep)
    }

    /// Writes `id,label,<features...>`.
    pub fn save_csv(&self, path: &Path) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        let csv_err = |e: csv::Error| FeatureError::Io(std::io::Error::other(e));
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n_samples() {
            let mut rec = vec![self.sample_ids[i].clone(), self.labels[i].code().to_string()];
            rec.extend(self.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`FeatureMatrix::save_csv`]. The view is
    /// recovered from the column names when they match a standard view.
    pub fn load_csv(path: &Path) -> Result<Self, FeatureError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => FeatureError::Io(io),
            other => FeatureError::Malformed { row: 0, reason: format!("{other:?}") },
        })?;
        let header = r.headers().map_err(|e| FeatureError::Malformed { row: 0, reason: e.to_string() })?.clone();
        if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
            return Err(FeatureError::Malformed { row: 0, reason: "header must start with id,label".into() });
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let (mut rows, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (k, rec) in r.records().enumerate() {
            let row_no = k + 1;
            let rec = rec.map_err(|e| FeatureError::Malformed { row: row_no, reason: e.to_string() })?;
            if rec.len() != header.len() {
                return Err(FeatureError::Malformed { row: row_no, reason: "column count differs from header".into() });
            }
            ids.push(rec[0].to_string());
            labels.push(rec[1].parse::<Diagnosis>().map_err(|e| FeatureError::Malformed { row: row_no, reason: e.to_string() })?);
            rows.push(
                rec.iter()
                    .skip(2)
                    .map(|v| v.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| FeatureError::Malformed { row: row_no, reason: e.to_string() })?,
            );
        }
        let view = View::ALL.into_iter().find(|v| standard_names(*v).as_deref() == Some(&names[..]));
        Self::new(view, rows, labels, names, ids)
    }
}

fn standard_names(view: View) -> Option<Vec<String>> {
    match view {
        View::Landmarks => Some(coordinate_names(1)),
        View::NoChin => Some(coordinate_names(CHIN.end() + 1)),
        View::Metrics => Some(MetricCatalog::builtin().names()),
    }
}

fn coordinate_names(first: usize) -> Vec<String> {
    (first..=LANDMARK_COUNT).flat_map(|i| [format!("x{i}"), format!("y{i}")]).collect()
}

fn coordinates(sample: &ProcessedSample, first: usize) -> Vec<f64> {
    sample.landmarks()[first - 1..].iter().flat_map(|p| [p.x, p.y]).collect()
}

fn build(
    samples: &[ProcessedSample],
    view: View,
    names: Vec<String>,
    row: impl Fn(&ProcessedSample) -> Vec<f64> + Sync + Send,
) -> Result<FeatureMatrix, FeatureError> {
    if samples.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let rows: Vec<Vec<f64>> = samples.par_iter().map(row).collect();
    FeatureMatrix::new(
        Some(view),
        rows,
        samples.iter().map(|s| s.label).collect(),
        names,
        samples.iter().map(|s| s.id.clone()).collect(),
    )
}

/// `(x1, y1, ..., x68, y68)` per sample.
pub fn to_landmarks_view(samples: &[ProcessedSample]) -> Result<FeatureMatrix, FeatureError> {
    build(samples, View::Landmarks, coordinate_names(1), |s| coordinates(s, 1))
}

/// Landmark coordinates with the 17 chin points removed.
pub fn to_no_chin_view(samples: &[ProcessedSample]) -> Result<FeatureMatrix, FeatureError> {
    let first = CHIN.end() + 1;
    build(samples, View::NoChin, coordinate_names(first), |s| coordinates(s, first))
}

/// Catalog metrics per sample, in catalog order.
pub fn to_metrics_view(samples: &[ProcessedSample], catalog: &MetricCatalog) -> Result<FeatureMatrix, FeatureError> {
    build(samples, View::Metrics, catalog.names(), |s| catalog.evaluate(s.landmarks()))
}

pub fn to_view(
    samples: &[ProcessedSample],
    view: View,
    catalog: &MetricCatalog,
) -> Result<FeatureMatrix, FeatureError> {
    match view {
        View::Landmarks => to_landmarks_view(samples),
        View::NoChin => to_no_chin_view(samples),
        View::Metrics => to_metrics_view(samples, catalog),
    }
}

/// Least-squares slope through the three outer left-brow landmarks.
pub fn metric_m4_slope(sample: &ProcessedSample) -> f64 {
    let pts: Vec<Point> = (18..=20).map(|i| sample.landmark(i)).collect();
    ols_slope(&pts)
}
