//! Row-level CSV/JSON encoding shared by raw and processed cohorts.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::{DatasetError, Diagnosis, FaceBox, Format, LandmarkSource, RawSample, SampleError};
use crate::geometry::{Point, LANDMARK_COUNT};

const FIXED_COLUMNS: [&str; 7] = ["id", "label", "box_x1", "box_y1", "box_x2", "box_y2", "source"];
const ROTATION: &str = "rotation_applied";
const CLAMPS: &str = "clamp_count";

/// Renames canonical field names (`id`, `label`, `box_x1`, `x1`, `y1`, ...,
/// `source`, and for JSON `landmarks`) to the names used by a particular file.
#[derive(Debug, Clone, Default)]
pub struct ColumnMap {
    renames: HashMap<String, String>,
}

impl ColumnMap {
    pub fn rename(mut self, canonical: &str, actual: &str) -> Self {
        self.renames.insert(canonical.to_string(), actual.to_string());
        self
    }

    pub fn resolve<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.renames.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

/// Decimal text with 9 significant digits.
pub fn format_sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn round_sig9(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Record {
    pub id: String,
    pub label: Diagnosis,
    pub face_box: [f64; 4],
    pub landmarks: Vec<Point>,
    pub source: LandmarkSource,
    pub rotation_applied: Option<f64>,
    pub clamp_count: Option<usize>,
}

impl Record {
    pub fn from_raw(s: &RawSample) -> Self {
        let b = s.face_box();
        Record {
            id: s.id.clone(),
            label: s.label,
            face_box: [b.top_left().x, b.top_left().y, b.bottom_right().x, b.bottom_right().y],
            landmarks: s.landmarks().to_vec(),
            source: s.source,
            rotation_applied: None,
            clamp_count: None,
        }
    }

    pub fn into_raw_sample(self) -> Result<RawSample, SampleError> {
        let [x1, y1, x2, y2] = self.face_box;
        let face_box = FaceBox::new(Point::new(x1, y1), Point::new(x2, y2))?;
        RawSample::new(self.id, self.landmarks, face_box, self.label, self.source)
    }
}

fn malformed(row: usize, reason: impl Into<String>) -> DatasetError {
    DatasetError::MalformedRecord { row, reason: reason.into() }
}

fn parse_num(row: usize, column: &str, text: &str) -> Result<f64, DatasetError> {
    let v: f64 = text.trim().parse().map_err(|_| malformed(row, format!("column {column}: not a number: {text:?}")))?;
    if !v.is_finite() {
        return Err(DatasetError::NonFiniteCoordinate { row });
    }
    Ok(v)
}

pub(crate) fn read_records(path: &Path, format: Format, columns: &ColumnMap) -> Result<Vec<Record>, DatasetError> {
    match format {
        Format::Csv => read_csv(path, columns),
        Format::Json => read_json(path, columns),
    }
}

pub(crate) fn write_records(path: &Path, format: Format, records: &[Record], processed: bool) -> Result<(), DatasetError> {
    match format {
        Format::Csv => write_csv(path, records, processed),
        Format::Json => write_json(path, records, processed),
    }
}

fn csv_error(e: csv::Error) -> DatasetError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => malformed(0, format!("{other:?}")),
    }
}

fn read_csv(path: &Path, columns: &ColumnMap) -> Result<Vec<Record>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(File::open(path)?));
    let header = reader.headers().map_err(csv_error)?.clone();
    let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |canonical: &str| position.get(columns.resolve(canonical)).copied();

    let mut fixed = [0usize; FIXED_COLUMNS.len()];
    for (slot, name) in fixed.iter_mut().zip(FIXED_COLUMNS) {
        *slot = find(name).ok_or_else(|| malformed(0, format!("missing column {:?}", columns.resolve(name))))?;
    }
    let landmark_cols: Vec<(usize, usize)> = (1..=LANDMARK_COUNT)
        .filter_map(|i| Some((find(&format!("x{i}"))?, find(&format!("y{i}"))?)))
        .collect();
    let rotation_col = find(ROTATION);
    let clamp_col = find(CLAMPS);
    let extra_cols = header.len() - 2 * landmark_cols.len();

    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| malformed(row, e.to_string()))?;
        if rec.len() != header.len() {
            // Short or long rows are almost always a wrong number of landmark pairs.
            let coords = rec.len().saturating_sub(extra_cols);
            if rec.len() >= extra_cols && coords % 2 == 0 {
                return Err(DatasetError::WrongLandmarkCount { row, found: coords / 2 });
            }
            return Err(malformed(row, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let field = |col: usize| rec.get(col).unwrap_or("");
        let id = field(fixed[0]).to_string();
        if id.is_empty() {
            return Err(malformed(row, "empty id"));
        }
        let label: Diagnosis = field(fixed[1]).parse().map_err(|e: String| malformed(row, e))?;
        let mut face_box = [0.0; 4];
        for (k, v) in face_box.iter_mut().enumerate() {
            *v = parse_num(row, FIXED_COLUMNS[2 + k], field(fixed[2 + k]))?;
        }
        let source: LandmarkSource = field(fixed[6]).parse().map_err(|e: String| malformed(row, e))?;
        let mut landmarks = Vec::with_capacity(LANDMARK_COUNT);
        for (n, &(xc, yc)) in landmark_cols.iter().enumerate() {
            let (xs, ys) = (field(xc), field(yc));
            if xs.is_empty() && ys.is_empty() {
                continue;
            }
            landmarks.push(Point::new(
                parse_num(row, &format!("x{}", n + 1), xs)?,
                parse_num(row, &format!("y{}", n + 1), ys)?,
            ));
        }
        if landmarks.len() != LANDMARK_COUNT {
            return Err(DatasetError::WrongLandmarkCount { row, found: landmarks.len() });
        }
        let rotation_applied = match rotation_col {
            Some(c) => Some(parse_num(row, ROTATION, field(c))?),
            None => None,
        };
        let clamp_count = match clamp_col {
            Some(c) => Some(field(c).parse().map_err(|_| malformed(row, "clamp_count is not a count"))?),
            None => None,
        };
        out.push(Record { id, label, face_box, landmarks, source, rotation_applied, clamp_count });
    }
    Ok(out)
}

fn write_csv(path: &Path, records: &[Record], processed: bool) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = FIXED_COLUMNS[..6].iter().map(|s| s.to_string()).collect();
    for i in 1..=LANDMARK_COUNT {
        header.push(format!("x{i}"));
        header.push(format!("y{i}"));
    }
    header.push("source".into());
    if processed {
        header.push(ROTATION.into());
        header.push(CLAMPS.into());
    }
    writer.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row: Vec<String> = vec![r.id.clone(), r.label.code().into()];
        row.extend(r.face_box.iter().map(|&v| format_sig9(v)));
        for p in &r.landmarks {
            row.push(format_sig9(p.x));
            row.push(format_sig9(p.y));
        }
        row.push(r.source.code().into());
        if processed {
            row.push(format_sig9(r.rotation_applied.unwrap_or(0.0)));
            row.push(r.clamp_count.unwrap_or(0).to_string());
        }
        writer.write_record(&row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn read_json(path: &Path, columns: &ColumnMap) -> Result<Vec<Record>, DatasetError> {
    let value: Value =
        serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| malformed(0, e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(malformed(0, "top-level JSON value must be an array"));
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| json_record(i + 1, item, columns))
        .collect()
}

fn json_record(row: usize, item: &Value, columns: &ColumnMap) -> Result<Record, DatasetError> {
    let obj = item.as_object().ok_or_else(|| malformed(row, "record is not an object"))?;
    let get = |name: &str| obj.get(columns.resolve(name)).ok_or_else(|| malformed(row, format!("missing field {name:?}")));
    let text = |name: &str| -> Result<String, DatasetError> {
        get(name)?.as_str().map(str::to_string).ok_or_else(|| malformed(row, format!("{name} must be a string")))
    };
    let num = |v: &Value, name: &str| -> Result<f64, DatasetError> {
        v.as_f64().ok_or_else(|| malformed(row, format!("{name} must be a number")))
    };

    let id = text("id")?;
    let label: Diagnosis = text("label")?.parse().map_err(|e: String| malformed(row, e))?;
    let source: LandmarkSource = text("source")?.parse().map_err(|e: String| malformed(row, e))?;
    let mut face_box = [0.0; 4];
    for (k, name) in ["box_x1", "box_y1", "box_x2", "box_y2"].into_iter().enumerate() {
        face_box[k] = num(get(name)?, name)?;
    }
    let pairs = get("landmarks")?.as_array().ok_or_else(|| malformed(row, "landmarks must be an array"))?;
    if pairs.len() != LANDMARK_COUNT {
        return Err(DatasetError::WrongLandmarkCount { row, found: pairs.len() });
    }
    let mut landmarks = Vec::with_capacity(LANDMARK_COUNT);
    for pair in pairs {
        match pair.as_array().map(Vec::as_slice) {
            Some([x, y]) => landmarks.push(Point::new(num(x, "landmark x")?, num(y, "landmark y")?)),
            _ => return Err(malformed(row, "each landmark must be an [x, y] pair")),
        }
    }
    let rotation_applied = obj.get(ROTATION).map(|v| num(v, ROTATION)).transpose()?;
    let clamp_count = obj
        .get(CLAMPS)
        .map(|v| v.as_u64().map(|c| c as usize).ok_or_else(|| malformed(row, "clamp_count must be a count")))
        .transpose()?;
    Ok(Record { id, label, face_box, landmarks, source, rotation_applied, clamp_count })
}

fn write_json(path: &Path, records: &[Record], processed: bool) -> Result<(), DatasetError> {
    let num = |v: f64| Value::from(round_sig9(v));
    let items: Vec<Value> = records
        .iter()
        .map(|r| {
            let mut obj = Map::new();
            obj.insert("id".into(), Value::from(r.id.clone()));
            obj.insert("label".into(), Value::from(r.label.code()));
            for (name, v) in ["box_x1", "box_y1", "box_x2", "box_y2"].into_iter().zip(r.face_box) {
                obj.insert(name.into(), num(v));
            }
            let pts: Vec<Value> = r.landmarks.iter().map(|p| Value::Array(vec![num(p.x), num(p.y)])).collect();
            obj.insert("landmarks".into(), Value::Array(pts));
            obj.insert("source".into(), Value::from(r.source.code()));
            if processed {
                obj.insert(ROTATION.into(), num(r.rotation_applied.unwrap_or(0.0)));
                obj.insert(CLAMPS.into(), Value::from(r.clamp_count.unwrap_or(0)));
            }
            Value::Object(obj)
        })
        .collect();
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &Value::Array(items)).map_err(|e| DatasetError::Io(e.into()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
