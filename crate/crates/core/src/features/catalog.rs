//! Left-right symmetry metrics over normalised landmarks.
//!
//! Every metric is one of four formula kinds. Each definition has a mirror
//! partner in the catalog (often itself): on the mirror image of a face, a
//! ratio metric equals the reciprocal of its partner on the original face
//! and a difference or slope metric equals the negated partner.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid, mirror_index, polygon_area, Point, LANDMARK_COUNT};

/// Number of metrics in a complete catalog.
pub const METRIC_COUNT: usize = 52;
/// Denominators below this produce a saturated value instead of a division.
pub const MIN_DENOMINATOR: f64 = 1e-9;
/// Value magnitude used for degenerate ratios and vertical slopes.
pub const DEGENERATE_VALUE: f64 = 1e9;

const BUILTIN: &str = include_str!("../../catalog/metrics-v1.toml");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog is not valid TOML: {0}")]
    Parse(String),
    #[error("metric {name}: {reason}")]
    Invalid { name: String, reason: String },
    #[error("catalog has {0} metrics, expected 52")]
    WrongCount(usize),
    #[error("duplicate metric name {0}")]
    DuplicateName(String),
    #[error("metric {0} has no mirror partner in the catalog")]
    Unpaired(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    DistanceRatio,
    HeightDiffRatio,
    Slope,
    AreaRatio,
}

impl MetricKind {
    fn is_ratio(self) -> bool {
        matches!(self, MetricKind::DistanceRatio | MetricKind::AreaRatio)
    }
}

/// How a metric transforms under a left-right mirror of the face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MirrorRule {
    Reciprocal,
    Negate,
}

/// Centroid of a set of landmarks (sorted, 1-based).
type Site = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Segment(Site, Site);

impl Segment {
    fn new(a: Site, b: Site) -> Self {
        if a <= b {
            Segment(a, b)
        } else {
            Segment(b, a)
        }
    }

    fn mirrored(&self) -> Self {
        Segment::new(mirror_site(&self.0), mirror_site(&self.1))
    }

    fn length(&self, pts: &[Point]) -> f64 {
        site_point(&self.0, pts).distance(&site_point(&self.1, pts))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Measure {
    segments: Vec<Segment>,
    norm: Vec<Segment>,
}

impl Measure {
    fn mirrored(&self) -> Self {
        Measure { segments: mirror_segments(&self.segments), norm: mirror_segments(&self.norm) }
    }

    fn value(&self, pts: &[Point]) -> f64 {
        let length = mean_length(&self.segments, pts);
        if self.norm.is_empty() {
            length
        } else {
            guarded_ratio(length, mean_length(&self.norm, pts))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Formula {
    DistanceRatio { left: Measure, right: Measure },
    HeightDiffRatio { left: Site, right: Site, scale: Vec<Segment> },
    Slope { groups: Vec<Site> },
    AreaRatio { left: Vec<usize>, right: Vec<usize> },
}

fn mirror_site(site: &[usize]) -> Site {
    let mut s: Site = site.iter().map(|&i| mirror_index(i)).collect();
    s.sort_unstable();
    s
}

fn mirror_segments(segs: &[Segment]) -> Vec<Segment> {
    let mut out: Vec<Segment> = segs.iter().map(Segment::mirrored).collect();
    out.sort();
    out
}

fn site_point(site: &[usize], pts: &[Point]) -> Point {
    centroid(site.iter().map(|&i| &pts[i - 1]))
}

fn mean_length(segs: &[Segment], pts: &[Point]) -> f64 {
    segs.iter().map(|s| s.length(pts)).sum::<f64>() / segs.len() as f64
}

/// `num / den`, saturating to `1e9 * sign(num)` when `|den| < 1e-9`.
pub fn guarded_ratio(num: f64, den: f64) -> f64 {
    if den.abs() < MIN_DENOMINATOR {
        log::warn!("degenerate metric denominator {den:e}; saturating");
        if num == 0.0 {
            0.0
        } else {
            DEGENERATE_VALUE * num.signum()
        }
    } else {
        num / den
    }
}

/// Ordinary least-squares slope `dy/dx` of a point set. A vertical set
/// returns `1e9` signed by the rise from the first to the last point.
pub fn ols_slope(points: &[Point]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.x - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.x - mx) * (p.y - my)).sum();
    if sxx < MIN_DENOMINATOR * MIN_DENOMINATOR {
        log::warn!("vertical landmark line; slope saturated");
        let rise = points.last().map_or(0.0, |p| p.y) - points.first().map_or(0.0, |p| p.y);
        return if rise == 0.0 { 0.0 } else { DEGENERATE_VALUE * rise.signum() };
    }
    sxy / sxx
}

impl Formula {
    fn kind(&self) -> MetricKind {
        match self {
            Formula::DistanceRatio { .. } => MetricKind::DistanceRatio,
            Formula::HeightDiffRatio { .. } => MetricKind::HeightDiffRatio,
            Formula::Slope { .. } => MetricKind::Slope,
            Formula::AreaRatio { .. } => MetricKind::AreaRatio,
        }
    }

    fn evaluate(&self, pts: &[Point]) -> f64 {
        match self {
            Formula::DistanceRatio { left, right } => guarded_ratio(left.value(pts), right.value(pts)),
            Formula::HeightDiffRatio { left, right, scale } => {
                guarded_ratio(site_point(left, pts).y - site_point(right, pts).y, mean_length(scale, pts))
            }
            Formula::Slope { groups } => groups
                .iter()
                .map(|g| ols_slope(&g.iter().map(|&i| pts[i - 1]).collect::<Vec<_>>()))
                .sum(),
            Formula::AreaRatio { left, right } => {
                let poly = |idx: &[usize]| idx.iter().map(|&i| pts[i - 1]).collect::<Vec<_>>();
                guarded_ratio(polygon_area(&poly(left)), polygon_area(&poly(right)))
            }
        }
    }

    /// Form used only to compare definitions: polygons become sorted sets.
    fn canonical(&self) -> Formula {
        match self {
            Formula::AreaRatio { left, right } => {
                let mut l = left.clone();
                let mut r = right.clone();
                l.sort_unstable();
                r.sort_unstable();
                Formula::AreaRatio { left: l, right: r }
            }
            other => other.clone(),
        }
    }

    /// The definition whose value on the original face determines this
    /// metric's value on the mirrored face.
    fn mirror_partner(&self) -> Formula {
        match self {
            Formula::DistanceRatio { left, right } => {
                Formula::DistanceRatio { left: right.mirrored(), right: left.mirrored() }
            }
            Formula::HeightDiffRatio { left, right, scale } => Formula::HeightDiffRatio {
                left: mirror_site(right),
                right: mirror_site(left),
                scale: mirror_segments(scale),
            },
            Formula::Slope { groups } => {
                let mut g: Vec<Site> = groups.iter().map(|s| mirror_site(s)).collect();
                g.sort();
                Formula::Slope { groups: g }
            }
            Formula::AreaRatio { left, right } => Formula::AreaRatio {
                left: right.iter().map(|&i| mirror_index(i)).collect(),
                right: left.iter().map(|&i| mirror_index(i)).collect(),
            },
        }
        .canonical()
    }
}

#[derive(Debug, Clone)]
pub struct MetricDef {
    pub name: String,
    pub kind: MetricKind,
    pub note: Option<String>,
    formula: Formula,
    partner: usize,
}

impl MetricDef {
    pub fn evaluate(&self, landmarks: &[Point]) -> f64 {
        self.formula.evaluate(landmarks)
    }

    /// Index of the catalog entry this metric mirrors onto.
    pub fn mirror_partner(&self) -> usize {
        self.partner
    }

    pub fn mirror_rule(&self) -> MirrorRule {
        if self.kind.is_ratio() {
            MirrorRule::Reciprocal
        } else {
            MirrorRule::Negate
        }
    }

    /// True when the metric compares a region with its own mirror image.
    pub fn is_self_paired(&self, own_index: usize) -> bool {
        self.partner == own_index
    }
}

#[derive(Debug, Clone)]
pub struct MetricCatalog {
    version: String,
    metrics: Vec<MetricDef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    version: String,
    metric: Vec<RawMetric>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    name: String,
    kind: MetricKind,
    note: Option<String>,
    #[serde(default)]
    left: Vec<String>,
    #[serde(default)]
    right: Vec<String>,
    #[serde(default)]
    left_norm: Vec<String>,
    #[serde(default)]
    right_norm: Vec<String>,
    #[serde(default)]
    scale: Vec<String>,
    #[serde(default)]
    groups: Vec<String>,
}

/// Parses "37-42", "38,39" or "49" into landmark numbers, in listed order.
fn parse_indices(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim) {
        let parse = |s: &str| -> Result<usize, String> {
            let v: usize = s.trim().parse().map_err(|_| format!("bad landmark number {s:?}"))?;
            if !(1..=LANDMARK_COUNT).contains(&v) {
                return Err(format!("landmark {v} out of range 1..=68"));
            }
            Ok(v)
        };
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    return Err(format!("descending range {item:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse(item)?),
        }
    }
    if out.is_empty() {
        return Err("empty landmark list".into());
    }
    Ok(out)
}

fn parse_site(text: &str) -> Result<Site, String> {
    let mut s = parse_indices(text)?;
    s.sort_unstable();
    s.dedup();
    Ok(s)
}

fn parse_segments(items: &[String]) -> Result<Vec<Segment>, String> {
    let mut out = items
        .iter()
        .map(|t| {
            let (a, b) = t.split_once('~').ok_or_else(|| format!("segment {t:?} needs the form \"A ~ B\""))?;
            Ok(Segment::new(parse_site(a)?, parse_site(b)?))
        })
        .collect::<Result<Vec<_>, String>>()?;
    out.sort();
    Ok(out)
}

fn single<'a>(items: &'a [String], field: &str) -> Result<&'a str, String> {
    match items {
        [one] => Ok(one),
        _ => Err(format!("{field} needs exactly one entry")),
    }
}

impl RawMetric {
    fn formula(&self) -> Result<Formula, String> {
        let require = |items: &[String], field: &str| {
            if items.is_empty() {
                Err(format!("{field} is required for {:?}", self.kind))
            } else {
                Ok(())
            }
        };
        match self.kind {
            MetricKind::DistanceRatio => {
                require(&self.left, "left")?;
                require(&self.right, "right")?;
                if self.left_norm.is_empty() != self.right_norm.is_empty() {
                    return Err("left_norm and right_norm must be given together".into());
                }
                Ok(Formula::DistanceRatio {
                    left: Measure { segments: parse_segments(&self.left)?, norm: parse_segments(&self.left_norm)? },
                    right: Measure { segments: parse_segments(&self.right)?, norm: parse_segments(&self.right_norm)? },
                })
            }
            MetricKind::HeightDiffRatio => {
                require(&self.scale, "scale")?;
                Ok(Formula::HeightDiffRatio {
                    left: parse_site(single(&self.left, "left")?)?,
                    right: parse_site(single(&self.right, "right")?)?,
                    scale: parse_segments(&self.scale)?,
                })
            }
            MetricKind::Slope => {
                require(&self.groups, "groups")?;
                let mut groups = self.groups.iter().map(|g| parse_site(g)).collect::<Result<Vec<_>, _>>()?;
                if groups.iter().any(|g| g.len() < 2) {
                    return Err("slope groups need at least two landmarks".into());
                }
                groups.sort();
                Ok(Formula::Slope { groups })
            }
            MetricKind::AreaRatio => {
                let left = parse_indices(single(&self.left, "left")?)?;
                let right = parse_indices(single(&self.right, "right")?)?;
                if left.len() < 3 || right.len() < 3 {
                    return Err("polygons need at least three landmarks".into());
                }
                Ok(Formula::AreaRatio { left, right })
            }
        }
    }
}

impl MetricCatalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN).expect("bundled catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        if file.metric.len() != METRIC_COUNT {
            return Err(CatalogError::WrongCount(file.metric.len()));
        }
        let mut formulas = Vec::with_capacity(file.metric.len());
        for raw in &file.metric {
            if formulas.iter().any(|(n, _): &(String, Formula)| n == &raw.name) {
                return Err(CatalogError::DuplicateName(raw.name.clone()));
            }
            let f = raw
                .formula()
                .map_err(|reason| CatalogError::Invalid { name: raw.name.clone(), reason })?;
            formulas.push((raw.name.clone(), f));
        }
        let canon: Vec<Formula> = formulas.iter().map(|(_, f)| f.canonical()).collect();
        let mut metrics = Vec::with_capacity(formulas.len());
        for ((name, formula), raw) in formulas.into_iter().zip(&file.metric) {
            let partner = formula.mirror_partner();
            let partner = canon
                .iter()
                .position(|c| *c == partner)
                .ok_or_else(|| CatalogError::Unpaired(name.clone()))?;
            debug_assert_eq!(formula.kind(), raw.kind);
            metrics.push(MetricDef { name, kind: raw.kind, note: raw.note.clone(), formula, partner });
        }
        Ok(Self { version: file.version, metrics })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn metrics(&self) -> &[MetricDef] {
        &self.metrics
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.metrics.iter().map(|m| m.name.clone()).collect()
    }

    /// All metric values for one landmark set, in catalog order.
    pub fn evaluate(&self, landmarks: &[Point]) -> Vec<f64> {
        self.metrics.iter().map(|m| m.evaluate(landmarks)).collect()
    }
}
