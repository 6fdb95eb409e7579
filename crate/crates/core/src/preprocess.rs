//! Five-step geometric normalisation of raw landmark samples:
//! crop to the face box, resize to 900x900, rotate so both eye centres are
//! level, clamp stray landmarks into the box, and scale into `[0,1]`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::{
    read_records, write_records, ClassCounts, ColumnMap, Cohort, DatasetError, Diagnosis, FaceBox, Format,
    LandmarkSource, RawSample, Record,
};
use crate::geometry::{centroid, Point, LANDMARK_COUNT, LEFT_EYE, RIGHT_EYE};

/// Side length of the canonical face image, in pixels.
pub const CANONICAL_SIZE: f64 = 900.0;
/// Samples with more out-of-box landmarks than this are dropped.
pub const DEFAULT_EXCLUSION_THRESHOLD: usize = 20;
/// Eye-centre separation below which the rotation angle is undefined.
const MIN_EYE_SEPARATION: f64 = 1e-12;
/// Allowed eye-centre height difference in a processed sample.
pub const EYE_LEVEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("sample {0}: face box origin must be (0,0) before resizing")]
    NotCropped(String),
    #[error("sample {0}: eye centres coincide, rotation undefined")]
    CoincidentEyeCenters(String),
    #[error("sample {id}: {reason}")]
    InvalidProcessed { id: String, reason: String },
}

/// A sample after the full pipeline; every coordinate lies in `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedSample {
    pub id: String,
    pub label: Diagnosis,
    pub source: LandmarkSource,
    landmarks: Vec<Point>,
    /// Rotation applied in step 3, radians.
    pub rotation_applied: f64,
    /// Landmarks moved by the clamp in step 4.
    pub clamp_count: usize,
}

impl ProcessedSample {
    pub fn new(
        id: impl Into<String>,
        label: Diagnosis,
        source: LandmarkSource,
        landmarks: Vec<Point>,
        rotation_applied: f64,
        clamp_count: usize,
    ) -> Result<Self, PreprocessError> {
        let id = id.into();
        let invalid = |reason: String| PreprocessError::InvalidProcessed { id: id.clone(), reason };
        if landmarks.len() != LANDMARK_COUNT {
            return Err(invalid(format!("expected 68 landmarks, found {}", landmarks.len())));
        }
        if let Some(p) = landmarks.iter().find(|p| !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y)) {
            return Err(invalid(format!("coordinate {p:?} outside [0,1]")));
        }
        Ok(Self { id, label, source, landmarks, rotation_applied, clamp_count })
    }

    pub fn landmarks(&self) -> &[Point] {
        &self.landmarks
    }

    /// Landmark by its 1-based number.
    pub fn landmark(&self, number: usize) -> Point {
        self.landmarks[number - 1]
    }

    /// Height difference between the two eye centres.
    pub fn eye_level_error(&self) -> f64 {
        eye_level_error(&self.landmarks)
    }
}

fn eye_centers(landmarks: &[Point]) -> (Point, Point) {
    (
        centroid(landmarks[LEFT_EYE.start() - 1..*LEFT_EYE.end()].iter()),
        centroid(landmarks[RIGHT_EYE.start() - 1..*RIGHT_EYE.end()].iter()),
    )
}

fn eye_level_error(landmarks: &[Point]) -> f64 {
    let (l, r) = eye_centers(landmarks);
    (l.y - r.y).abs()
}

/// Step 1: express landmarks relative to the face-box origin.
pub fn crop_to_face_box(sample: &RawSample) -> RawSample {
    let b = sample.face_box();
    let origin = b.top_left();
    let landmarks = sample.landmarks().iter().map(|p| Point::new(p.x - origin.x, p.y - origin.y)).collect();
    let face_box = FaceBox::new(Point::new(0.0, 0.0), Point::new(b.width(), b.height()))
        .expect("width and height of a valid box are positive");
    sample.with_geometry(landmarks, face_box).expect("translation keeps coordinates finite")
}

/// Step 2: scale x and y independently so the box becomes 900x900.
pub fn resize_to_canonical(sample: &RawSample) -> Result<RawSample, PreprocessError> {
    let b = sample.face_box();
    if b.top_left() != Point::new(0.0, 0.0) {
        return Err(PreprocessError::NotCropped(sample.id.clone()));
    }
    let (sx, sy) = (CANONICAL_SIZE / b.width(), CANONICAL_SIZE / b.height());
    let landmarks = sample.landmarks().iter().map(|p| Point::new(p.x * sx, p.y * sy)).collect();
    Ok(sample.with_geometry(landmarks, FaceBox::square(CANONICAL_SIZE)).expect("scaling keeps coordinates finite"))
}

/// Step 3: rotate about the image centre so both eye centres share one
/// height. Returns the applied angle.
pub fn rotate_to_level_eyes(sample: &RawSample) -> Result<(RawSample, f64), PreprocessError> {
    let (lc, rc) = eye_centers(sample.landmarks());
    if lc.distance(&rc) < MIN_EYE_SEPARATION {
        return Err(PreprocessError::CoincidentEyeCenters(sample.id.clone()));
    }
    let angle = -(rc.y - lc.y).atan2(rc.x - lc.x);
    let center = Point::new(CANONICAL_SIZE / 2.0, CANONICAL_SIZE / 2.0);
    let landmarks = sample.landmarks().iter().map(|p| p.rotate_about(center, angle)).collect();
    let rotated = sample.with_geometry(landmarks, *sample.face_box()).expect("rotation keeps coordinates finite");
    Ok((rotated, angle))
}

/// Number of landmarks outside the sample's face box.
pub fn out_of_box_count(sample: &RawSample) -> usize {
    sample.landmarks().iter().filter(|p| !sample.face_box().contains(p)).count()
}

/// Step 4: move each landmark to the nearest point of the face box, which
/// for an axis-aligned box is the per-axis clamp.
pub fn clamp_to_face_box(sample: &RawSample) -> (RawSample, usize) {
    let b = sample.face_box();
    let (lo, hi) = (b.top_left(), b.bottom_right());
    let mut moved = 0;
    let landmarks = sample
        .landmarks()
        .iter()
        .map(|p| {
            let q = Point::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y));
            if q != *p {
                moved += 1;
            }
            q
        })
        .collect();
    (sample.with_geometry(landmarks, *b).expect("clamping keeps coordinates finite"), moved)
}

/// Step 5: divide by the canonical size.
pub fn normalize(sample: &RawSample, rotation_applied: f64, clamp_count: usize) -> ProcessedSample {
    let landmarks = sample
        .landmarks()
        .iter()
        .map(|p| Point::new((p.x / CANONICAL_SIZE).clamp(0.0, 1.0), (p.y / CANONICAL_SIZE).clamp(0.0, 1.0)))
        .collect();
    ProcessedSample::new(sample.id.clone(), sample.label, sample.source, landmarks, rotation_applied, clamp_count)
        .expect("clamped canonical sample normalises into [0,1]")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampRecord {
    pub id: String,
    pub out_of_box: usize,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub exclusion_threshold: usize,
    pub input_count: usize,
    pub retained_count: usize,
    pub retained_class_counts: ClassCounts,
    pub excluded: Vec<Exclusion>,
    pub clamps: Vec<ClampRecord>,
}

impl PipelineReport {
    pub fn excluded_ids(&self) -> Vec<&str> {
        self.excluded.iter().map(|e| e.id.as_str()).collect()
    }
}

enum Outcome {
    Kept(ProcessedSample, ClampRecord),
    Dropped(Exclusion, Option<ClampRecord>),
}

fn process_one(sample: &RawSample, threshold: usize) -> Outcome {
    let drop = |reason: String, clamps: Option<ClampRecord>| {
        Outcome::Dropped(Exclusion { id: sample.id.clone(), reason }, clamps)
    };
    let canonical = match resize_to_canonical(&crop_to_face_box(sample)) {
        Ok(s) => s,
        Err(e) => return drop(e.to_string(), None),
    };
    let (rotated, angle) = match rotate_to_level_eyes(&canonical) {
        Ok(r) => r,
        Err(e) => return drop(e.to_string(), None),
    };
    let out_of_box = out_of_box_count(&rotated);
    let (clamped, moved) = clamp_to_face_box(&rotated);
    let record = ClampRecord { id: sample.id.clone(), out_of_box, clamped: moved };
    if out_of_box > threshold {
        return drop(format!("{out_of_box} landmarks outside the face box (threshold {threshold})"), Some(record));
    }
    let processed = normalize(&clamped, angle, moved);
    // Clamping an eye landmark can break the level-eyes property.
    let level = processed.eye_level_error();
    if level > EYE_LEVEL_TOLERANCE {
        return drop(format!("eye landmarks clamped into the box; eye centres differ by {level:.3e}"), Some(record));
    }
    Outcome::Kept(processed, record)
}

/// Runs all five steps on every sample. Per-sample failures become
/// exclusions; the batch never aborts. Output order follows input order.
pub fn run_pipeline(cohort: &Cohort, exclusion_threshold: usize) -> (Vec<ProcessedSample>, PipelineReport) {
    let outcomes: Vec<Outcome> = cohort.samples().par_iter().map(|s| process_one(s, exclusion_threshold)).collect();
    let mut kept = Vec::with_capacity(outcomes.len());
    let mut excluded = Vec::new();
    let mut clamps = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Kept(s, c) => {
                kept.push(s);
                clamps.push(c);
            }
            Outcome::Dropped(e, c) => {
                log::info!("excluding {}: {}", e.id, e.reason);
                excluded.push(e);
                clamps.extend(c);
            }
        }
    }
    let report = PipelineReport {
        exclusion_threshold,
        input_count: cohort.len(),
        retained_count: kept.len(),
        retained_class_counts: ClassCounts::from_labels(kept.iter().map(|s: &ProcessedSample| &s.label)),
        excluded,
        clamps,
    };
    (kept, report)
}

/// Writes processed samples with the cohort schema (box `(0,0)-(1,1)`) plus
/// `rotation_applied` and `clamp_count`.
pub fn save_processed(samples: &[ProcessedSample], path: &Path, format: Format) -> Result<(), DatasetError> {
    let records: Vec<Record> = samples
        .iter()
        .map(|s| Record {
            id: s.id.clone(),
            label: s.label,
            face_box: [0.0, 0.0, 1.0, 1.0],
            landmarks: s.landmarks.clone(),
            source: s.source,
            rotation_applied: Some(s.rotation_applied),
            clamp_count: Some(s.clamp_count),
        })
        .collect();
    write_records(path, format, &records, true)
}

pub fn load_processed(path: &Path, format: Format) -> Result<Vec<ProcessedSample>, DatasetError> {
    let records = read_records(path, format, &ColumnMap::default())?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let row = i + 1;
            let rotation = r.rotation_applied.ok_or_else(|| DatasetError::MalformedRecord {
                row,
                reason: "missing rotation_applied; not a processed cohort".into(),
            })?;
            ProcessedSample::new(r.id, r.label, r.source, r.landmarks, rotation, r.clamp_count.unwrap_or(0))
                .map_err(|e| DatasetError::MalformedRecord { row, reason: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::generate_synthetic_cohort;
    use std::f64::consts::FRAC_PI_4;

    fn sample_with(points: &[(usize, Point)], base: Point, face_box: FaceBox) -> RawSample {
        let mut lm = vec![base; LANDMARK_COUNT];
        for &(i, p) in points {
            lm[i - 1] = p;
        }
        RawSample::new("s", lm, face_box, Diagnosis::Healthy, LandmarkSource::Manual).unwrap()
    }

    fn with_eyes(l: Point, r: Point) -> RawSample {
        let mut pts = Vec::new();
        for i in LEFT_EYE {
            pts.push((i, l));
        }
        for i in RIGHT_EYE {
            pts.push((i, r));
        }
        sample_with(&pts, Point::new(450.0, 450.0), FaceBox::square(900.0))
    }

    #[test]
    fn crop_zero_origin_is_identity() {
        let s = sample_with(&[(1, Point::new(450.0, 450.0))], Point::new(1.0, 1.0), FaceBox::square(900.0));
        assert_eq!(crop_to_face_box(&s).landmark(1), Point::new(450.0, 450.0));
    }

    #[test]
    fn crop_subtracts_origin() {
        let b = FaceBox::new(Point::new(100.0, 50.0), Point::new(1000.0, 950.0)).unwrap();
        let s = sample_with(&[(1, Point::new(100.0, 50.0)), (2, Point::new(550.0, 500.0))], Point::new(500.0, 500.0), b);
        let c = crop_to_face_box(&s);
        assert_eq!(c.landmark(1), Point::new(0.0, 0.0));
        assert_eq!(c.landmark(2), Point::new(450.0, 450.0));
        assert_eq!(c.face_box().bottom_right(), Point::new(900.0, 900.0));
    }

    #[test]
    fn resize_scales_axes_independently() {
        let b = FaceBox::new(Point::new(0.0, 0.0), Point::new(450.0, 900.0)).unwrap();
        let s = sample_with(&[(1, Point::new(225.0, 450.0))], Point::new(1.0, 1.0), b);
        assert_eq!(resize_to_canonical(&s).unwrap().landmark(1), Point::new(450.0, 450.0));

        let b = FaceBox::new(Point::new(0.0, 0.0), Point::new(300.0, 600.0)).unwrap();
        let s = sample_with(&[(1, Point::new(300.0, 600.0))], Point::new(1.0, 1.0), b);
        let r = resize_to_canonical(&s).unwrap();
        assert_eq!(r.landmark(1), Point::new(900.0, 900.0));
        assert_eq!(*r.face_box(), FaceBox::square(900.0));
    }

    #[test]
    fn resize_requires_cropped_input() {
        let b = FaceBox::new(Point::new(1.0, 0.0), Point::new(300.0, 600.0)).unwrap();
        let s = sample_with(&[], Point::new(10.0, 10.0), b);
        assert!(matches!(resize_to_canonical(&s), Err(PreprocessError::NotCropped(_))));
    }

    #[test]
    fn level_eyes_are_untouched() {
        let s = with_eyes(Point::new(300.0, 400.0), Point::new(600.0, 400.0));
        let (r, angle) = rotate_to_level_eyes(&s).unwrap();
        assert_eq!(angle, 0.0);
        for (a, b) in r.landmarks().iter().zip(s.landmarks()) {
            assert!(a.distance(b) < 1e-12);
        }
    }

    #[test]
    fn diagonal_eyes_rotate_by_minus_quarter_turn() {
        let s = with_eyes(Point::new(300.0, 300.0), Point::new(600.0, 600.0));
        let (r, angle) = rotate_to_level_eyes(&s).unwrap();
        assert!((angle + FRAC_PI_4).abs() < 1e-15);
        // (300,300) is (-150,-150) from the centre; rotated by -pi/4 it lands
        // at (450 - 150*sqrt2, 450).
        let l = r.landmark(37);
        assert!((l.x - (450.0 - 150.0 * 2f64.sqrt())).abs() < 1e-9);
        assert!((l.y - 450.0).abs() < 1e-9);
        assert!(eye_level_error(r.landmarks()) < 1e-9);
        let (_, again) = rotate_to_level_eyes(&r).unwrap();
        assert!(again.abs() < 1e-12);
    }

    #[test]
    fn coincident_eyes_are_rejected() {
        let s = with_eyes(Point::new(300.0, 300.0), Point::new(300.0, 300.0));
        assert!(matches!(rotate_to_level_eyes(&s), Err(PreprocessError::CoincidentEyeCenters(_))));
    }

    #[test]
    fn clamp_moves_outliers_only() {
        let s = sample_with(
            &[(1, Point::new(-5.0, 450.0)), (2, Point::new(950.0, -10.0))],
            Point::new(10.0, 10.0),
            FaceBox::square(900.0),
        );
        let (c, n) = clamp_to_face_box(&s);
        assert_eq!(n, 2);
        assert_eq!(c.landmark(1), Point::new(0.0, 450.0));
        assert_eq!(c.landmark(2), Point::new(900.0, 0.0));
        let (again, n2) = clamp_to_face_box(&c);
        assert_eq!(n2, 0);
        assert_eq!(again, c);
    }

    #[test]
    fn normalize_divides_by_900() {
        let s = sample_with(
            &[(1, Point::new(0.0, 0.0)), (2, Point::new(900.0, 900.0)), (3, Point::new(450.0, 450.0)), (4, Point::new(225.0, 675.0))],
            Point::new(0.0, 0.0),
            FaceBox::square(900.0),
        );
        let p = normalize(&s, 0.0, 0);
        assert_eq!(p.landmark(1), Point::new(0.0, 0.0));
        assert_eq!(p.landmark(2), Point::new(1.0, 1.0));
        assert_eq!(p.landmark(3), Point::new(0.5, 0.5));
        assert_eq!(p.landmark(4), Point::new(0.25, 0.75));
    }

    #[test]
    fn clean_synthetic_cohort_has_no_exclusions() {
        let cohort = generate_synthetic_cohort(6, 4, 4, 11);
        let (out, report) = run_pipeline(&cohort, DEFAULT_EXCLUSION_THRESHOLD);
        assert_eq!(out.len(), cohort.len());
        assert!(report.excluded.is_empty());
        assert_eq!(report.retained_class_counts, ClassCounts::new(6, 4, 4));
    }

    #[test]
    fn threshold_excludes_noisy_sample() {
        let cohort = generate_synthetic_cohort(3, 0, 0, 2);
        let mut samples = cohort.samples().to_vec();
        let bad = &samples[1];
        let mut lm = bad.landmarks().to_vec();
        let x_far = bad.face_box().bottom_right().x + 50.0;
        for p in lm.iter_mut().take(30) {
            p.x = x_far;
        }
        samples[1] = bad.with_geometry(lm, *bad.face_box()).unwrap();
        let cohort = Cohort::new(samples, "t").unwrap();
        let (out, report) = run_pipeline(&cohort, 20);
        assert_eq!(out.len(), 2);
        assert_eq!(report.excluded_ids(), vec![cohort.samples()[1].id.as_str()]);
        let (out, report) = run_pipeline(&cohort, 40);
        assert_eq!(out.len(), 3);
        assert!(report.excluded.is_empty());
    }

    mod props {
        use super::*;
        use crate::dataset_io::template_face;
        use proptest::prelude::*;

        /// A template face placed in a random box, jittered, rolled, with
        /// some landmarks pushed outside the box.
        fn raw_sample() -> impl Strategy<Value = RawSample> {
            (
                (0.0f64..500.0, 0.0f64..500.0, 100.0f64..700.0, 0.8f64..1.4),
                -0.5f64..0.5,
                prop::collection::vec((-0.03f64..0.03, -0.03f64..0.03), LANDMARK_COUNT),
                prop::collection::vec(0usize..LANDMARK_COUNT, 0..6),
            )
                .prop_map(|((x0, y0, w, aspect), roll, jitter, outside)| {
                    let h = w * aspect;
                    let center = Point::new(x0 + w / 2.0, y0 + h / 2.0);
                    let mut lm: Vec<Point> = template_face()
                        .iter()
                        .zip(jitter)
                        .map(|(p, (dx, dy))| {
                            Point::new(x0 + (p.x + dx) * w, y0 + (p.y + dy) * h).rotate_about(center, roll)
                        })
                        .collect();
                    // eyes stay inside so their left-right order survives the clamp
                    for i in outside.into_iter().filter(|i| !(36..48).contains(i)) {
                        lm[i].x = x0 + 1.3 * w;
                    }
                    let fb = FaceBox::new(Point::new(x0, y0), Point::new(x0 + w, y0 + h)).unwrap();
                    RawSample::new("r", lm, fb, Diagnosis::Central, LandmarkSource::Automatic).unwrap()
                })
        }

        fn pipeline(sample: &RawSample) -> Option<ProcessedSample> {
            match process_one(sample, LANDMARK_COUNT) {
                Outcome::Kept(s, _) => Some(s),
                Outcome::Dropped(..) => None,
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(300))]

            #[test]
            fn output_in_unit_square_with_level_eyes(sample in raw_sample()) {
                if let Some(out) = pipeline(&sample) {
                    for p in out.landmarks() {
                        prop_assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
                    }
                    prop_assert!(out.eye_level_error() <= EYE_LEVEL_TOLERANCE);
                }
            }

            #[test]
            fn rotation_is_an_isometry(sample in raw_sample()) {
                let canonical = resize_to_canonical(&crop_to_face_box(&sample)).unwrap();
                let (rotated, _) = rotate_to_level_eyes(&canonical).unwrap();
                let (a, b) = (canonical.landmarks(), rotated.landmarks());
                for i in (0..LANDMARK_COUNT).step_by(5) {
                    for j in 0..LANDMARK_COUNT {
                        prop_assert!((a[i].distance(&a[j]) - b[i].distance(&b[j])).abs() < 1e-9);
                    }
                }
                prop_assert!(eye_level_error(b) < 1e-9);
            }

            #[test]
            fn clamp_is_idempotent(sample in raw_sample()) {
                let (once, _) = clamp_to_face_box(&sample);
                let (twice, moved) = clamp_to_face_box(&once);
                prop_assert_eq!(moved, 0);
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn pipeline_is_idempotent(sample in raw_sample()) {
                if let Some(out) = pipeline(&sample) {
                    let again_in: Vec<Point> =
                        out.landmarks().iter().map(|p| Point::new(p.x * CANONICAL_SIZE, p.y * CANONICAL_SIZE)).collect();
                    let raw = RawSample::new("r", again_in, FaceBox::square(CANONICAL_SIZE), out.label, out.source).unwrap();
                    let again = pipeline(&raw).expect("processed sample stays valid");
                    for (p, q) in out.landmarks().iter().zip(again.landmarks()) {
                        prop_assert!(p.distance(q) < 1e-9);
                    }
                }
            }
        }
    }
}
