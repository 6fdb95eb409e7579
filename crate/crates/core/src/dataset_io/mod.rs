//! Cohort file formats, validation and synthetic cohort generation.

mod records;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, LANDMARK_COUNT};

pub use records::{format_sig9, ColumnMap};
pub(crate) use records::{read_records, write_records, Record};
pub use synthetic::{generate_synthetic_cohort, template_face};

/// Clinical label of one face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    #[serde(rename = "P")]
    Peripheral,
    #[serde(rename = "C")]
    Central,
    #[serde(rename = "H")]
    Healthy,
}

impl Diagnosis {
    /// All classes in tie-break order.
    pub const ALL: [Diagnosis; 3] = [Diagnosis::Peripheral, Diagnosis::Central, Diagnosis::Healthy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Diagnosis::Peripheral => "P",
            Diagnosis::Central => "C",
            Diagnosis::Healthy => "H",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Diagnosis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "P" | "p" => Ok(Diagnosis::Peripheral),
            "C" | "c" => Ok(Diagnosis::Central),
            "H" | "h" => Ok(Diagnosis::Healthy),
            other => Err(format!("unknown label {other:?} (expected P, C or H)")),
        }
    }
}

/// Per-class sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub peripheral: usize,
    pub central: usize,
    pub healthy: usize,
}

impl ClassCounts {
    pub fn new(peripheral: usize, central: usize, healthy: usize) -> Self {
        Self { peripheral, central, healthy }
    }

    pub fn from_labels<'a, I: IntoIterator<Item = &'a Diagnosis>>(labels: I) -> Self {
        let mut counts = Self::default();
        for &l in labels {
            *counts.get_mut(l) += 1;
        }
        counts
    }

    pub fn get(&self, d: Diagnosis) -> usize {
        match d {
            Diagnosis::Peripheral => self.peripheral,
            Diagnosis::Central => self.central,
            Diagnosis::Healthy => self.healthy,
        }
    }

    pub fn get_mut(&mut self, d: Diagnosis) -> &mut usize {
        match d {
            Diagnosis::Peripheral => &mut self.peripheral,
            Diagnosis::Central => &mut self.central,
            Diagnosis::Healthy => &mut self.healthy,
        }
    }

    pub fn total(&self) -> usize {
        self.peripheral + self.central + self.healthy
    }

    /// Classes with at least one sample, in tie-break order.
    pub fn present(&self) -> Vec<Diagnosis> {
        Diagnosis::ALL.into_iter().filter(|&d| self.get(d) > 0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LandmarkSource {
    #[serde(rename = "manual")]
    Manual,
    #[serde(rename = "auto")]
    Automatic,
}

impl LandmarkSource {
    pub fn code(self) -> &'static str {
        match self {
            LandmarkSource::Manual => "manual",
            LandmarkSource::Automatic => "auto",
        }
    }
}

impl FromStr for LandmarkSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "manual" => Ok(LandmarkSource::Manual),
            "auto" | "automatic" => Ok(LandmarkSource::Automatic),
            other => Err(format!("unknown landmark source {other:?} (expected manual or auto)")),
        }
    }
}

/// Invariant violations of a single sample, independent of where it came from.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("expected 68 landmarks, found {found}")]
    WrongLandmarkCount { found: usize },
    #[error("non-finite coordinate")]
    NonFiniteCoordinate,
    #[error("face box must have positive width and height")]
    DegenerateFaceBox,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("record {row}: {reason}")]
    MalformedRecord { row: usize, reason: String },
    #[error("record {row}: expected 68 landmarks, found {found}")]
    WrongLandmarkCount { row: usize, found: usize },
    #[error("record {row}: non-finite coordinate")]
    NonFiniteCoordinate { row: usize },
    #[error("record {row}: face box must have positive width and height")]
    DegenerateFaceBox { row: usize },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("cannot infer file format from {0:?}; use .csv or .json")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SampleError {
    /// Attaches the 1-based record number.
    pub fn at_row(self, row: usize) -> DatasetError {
        match self {
            SampleError::WrongLandmarkCount { found } => DatasetError::WrongLandmarkCount { row, found },
            SampleError::NonFiniteCoordinate => DatasetError::NonFiniteCoordinate { row },
            SampleError::DegenerateFaceBox => DatasetError::DegenerateFaceBox { row },
        }
    }
}

/// Axis-aligned face box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceBox {
    top_left: Point,
    bottom_right: Point,
}

impl FaceBox {
    pub fn new(top_left: Point, bottom_right: Point) -> Result<Self, SampleError> {
        if !top_left.is_finite() || !bottom_right.is_finite() {
            return Err(SampleError::NonFiniteCoordinate);
        }
        if !(bottom_right.x > top_left.x && bottom_right.y > top_left.y) {
            return Err(SampleError::DegenerateFaceBox);
        }
        Ok(Self { top_left, bottom_right })
    }

    /// Box `(0,0)-(size,size)`.
    pub fn square(size: f64) -> Self {
        Self::new(Point::new(0.0, 0.0), Point::new(size, size)).expect("positive size")
    }

    pub fn top_left(&self) -> Point {
        self.top_left
    }

    pub fn bottom_right(&self) -> Point {
        self.bottom_right
    }

    pub fn width(&self) -> f64 {
        self.bottom_right.x - self.top_left.x
    }

    pub fn height(&self) -> f64 {
        self.bottom_right.y - self.top_left.y
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.top_left.x && p.x <= self.bottom_right.x && p.y >= self.top_left.y && p.y <= self.bottom_right.y
    }
}

/// One annotated face as ingested: 68 landmarks in pixels plus its face box.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub id: String,
    pub label: Diagnosis,
    pub source: LandmarkSource,
    landmarks: Vec<Point>,
    face_box: FaceBox,
}

impl RawSample {
    pub fn new(
        id: impl Into<String>,
        landmarks: Vec<Point>,
        face_box: FaceBox,
        label: Diagnosis,
        source: LandmarkSource,
    ) -> Result<Self, SampleError> {
        if landmarks.len() != LANDMARK_COUNT {
            return Err(SampleError::WrongLandmarkCount { found: landmarks.len() });
        }
        if landmarks.iter().any(|p| !p.is_finite()) {
            return Err(SampleError::NonFiniteCoordinate);
        }
        Ok(Self { id: id.into(), label, source, landmarks, face_box })
    }

    pub fn landmarks(&self) -> &[Point] {
        &self.landmarks
    }

    /// Landmark by its 1-based number.
    pub fn landmark(&self, number: usize) -> Point {
        self.landmarks[number - 1]
    }

    pub fn face_box(&self) -> &FaceBox {
        &self.face_box
    }

    /// Same sample with new geometry; re-checks finiteness.
    pub fn with_geometry(&self, landmarks: Vec<Point>, face_box: FaceBox) -> Result<Self, SampleError> {
        Self::new(self.id.clone(), landmarks, face_box, self.label, self.source)
    }
}

/// An immutable collection of samples with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    samples: Vec<RawSample>,
    provenance: String,
}

impl Cohort {
    pub fn new(samples: Vec<RawSample>, provenance: impl Into<String>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(DatasetError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self { samples, provenance: provenance.into() })
    }

    pub fn samples(&self) -> &[RawSample] {
        &self.samples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        ClassCounts::from_labels(self.samples.iter().map(|s| &s.label))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            _ => Err(DatasetError::UnknownFormat(path.display().to_string())),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

pub fn load_cohort(path: &Path, format: Format) -> Result<Cohort, DatasetError> {
    load_cohort_with(path, format, &ColumnMap::default())
}

/// Loads a cohort whose columns may be named differently; `columns` maps the
/// canonical field names onto the file's.
pub fn load_cohort_with(path: &Path, format: Format, columns: &ColumnMap) -> Result<Cohort, DatasetError> {
    let records = read_records(path, format, columns)?;
    let samples = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_raw_sample().map_err(|e| e.at_row(i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    Cohort::new(samples, path.display().to_string())
}

/// Writes a cohort; coordinates are rounded to 9 significant digits.
pub fn save_cohort(cohort: &Cohort, path: &Path, format: Format) -> Result<(), DatasetError> {
    let records: Vec<Record> = cohort.samples().iter().map(Record::from_raw).collect();
    write_records(path, format, &records, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str) -> RawSample {
        let pts = vec![Point::new(10.0, 10.0); LANDMARK_COUNT];
        RawSample::new(id, pts, FaceBox::square(100.0), Diagnosis::Healthy, LandmarkSource::Automatic).unwrap()
    }

    #[test]
    fn diagnosis_codes_round_trip() {
        for d in Diagnosis::ALL {
            assert_eq!(d.code().parse::<Diagnosis>().unwrap(), d);
            assert_eq!(serde_json::to_string(&d).unwrap(), format!("\"{}\"", d.code()));
        }
        assert!("X".parse::<Diagnosis>().is_err());
        assert!(Diagnosis::Peripheral < Diagnosis::Central && Diagnosis::Central < Diagnosis::Healthy);
    }

    #[test]
    fn face_box_rejects_zero_width() {
        let e = FaceBox::new(Point::new(5.0, 0.0), Point::new(5.0, 10.0)).unwrap_err();
        assert_eq!(e, SampleError::DegenerateFaceBox);
        assert!(FaceBox::new(Point::new(0.0, 10.0), Point::new(5.0, 10.0)).is_err());
    }

    #[test]
    fn raw_sample_checks_landmarks() {
        let e = RawSample::new("a", vec![Point::default(); 67], FaceBox::square(1.0), Diagnosis::Central, LandmarkSource::Manual)
            .unwrap_err();
        assert_eq!(e, SampleError::WrongLandmarkCount { found: 67 });
        let mut pts = vec![Point::default(); 68];
        pts[3].y = f64::NAN;
        let e = RawSample::new("a", pts, FaceBox::square(1.0), Diagnosis::Central, LandmarkSource::Manual).unwrap_err();
        assert_eq!(e, SampleError::NonFiniteCoordinate);
    }

    #[test]
    fn cohort_rejects_duplicate_ids() {
        let e = Cohort::new(vec![sample("a"), sample("b"), sample("a")], "t").unwrap_err();
        assert!(matches!(e, DatasetError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn class_counts() {
        let c = ClassCounts::from_labels(&[Diagnosis::Peripheral, Diagnosis::Healthy, Diagnosis::Peripheral]);
        assert_eq!(c, ClassCounts::new(2, 0, 1));
        assert_eq!(c.present(), vec![Diagnosis::Peripheral, Diagnosis::Healthy]);
        assert_eq!(c.total(), 3);
    }
}
