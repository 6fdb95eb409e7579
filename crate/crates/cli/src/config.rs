//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use palsy_core::classifiers::ForestParams;
use palsy_core::dataset_io::Format;
use palsy_core::svm::{KernelKind, SvmParams};
use palsy_core::{ModelFamily, ModelSpec, View};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Seed used when neither a flag, the config file nor the environment sets one.
pub const DEFAULT_SEED: u64 = 0;
pub const SEED_ENV: &str = "PALSY_BENCH_SEED";

/// Flags shared by every subcommand. Each may also appear as a top-level key
/// of the `--config` file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// TOML file supplying any flag; command-line values win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input cohort (raw or processed) or feature matrix.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// csv or json; inferred from the file extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// landmarks, nochin or metrics.
    #[arg(long)]
    pub view: Option<String>,
    /// gnb, tree, knn, forest or svm.
    #[arg(long)]
    pub model: Option<String>,
    /// Tree or forest depth limit; 0 means unlimited.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Neighbours for knn.
    #[arg(long)]
    pub k: Option<usize>,
    /// Forest size.
    #[arg(long)]
    pub trees: Option<usize>,
    /// SVM kernel: linear, poly or rbf.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Polynomial kernel degree.
    #[arg(long)]
    pub degree: Option<u32>,
    /// SVM box constraint.
    #[arg(long)]
    pub c: Option<f64>,
    /// Kernel gamma; defaults to 1 / (features * pooled variance).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Class-balanced SVM weights (`--balanced false` to disable).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub balanced: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum landmarks outside the face box before a sample is excluded.
    #[arg(long)]
    pub exclusion_threshold: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneOpts {
    /// Hyperparameter to sweep: depth, k, trees or degree.
    #[arg(long)]
    pub param: Option<String>,
    /// Values as `a..b` (inclusive) and/or a comma list, e.g. `1..10,15,20`.
    #[arg(long)]
    pub values: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleOpts {
    /// Smallest cohort size evaluated.
    #[arg(long)]
    pub floor: Option<usize>,
    /// Evaluate every `stride` removals; 1 evaluates every size.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Target performance (fraction) to solve the dataset size for.
    #[arg(long)]
    pub target: Option<f64>,
    /// Offset `c` used when reporting the curve as `1 - a*exp(b*(x - c))`.
    #[arg(long, allow_hyphen_values = true)]
    pub curve_offset: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOpts {
    #[arg(long)]
    pub peripheral: Option<usize>,
    #[arg(long)]
    pub central: Option<usize>,
    #[arg(long)]
    pub healthy: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),+) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )+
    };
}

impl RunArgs {
    fn overlay(&mut self, top: RunArgs) {
        overlay!(self, top; data, format, view, model, depth, k, trees, kernel, degree, c, gamma, balanced, seed,
            exclusion_threshold, out, threads);
    }
}

impl TuneOpts {
    fn overlay(&mut self, top: TuneOpts) {
        overlay!(self, top; param, values);
    }
}

impl ScaleOpts {
    fn overlay(&mut self, top: ScaleOpts) {
        overlay!(self, top; floor, stride, target, curve_offset);
    }
}

impl SynthOpts {
    fn overlay(&mut self, top: SynthOpts) {
        overlay!(self, top; peripheral, central, healthy);
    }
}

/// Contents of a `--config` file: run flags at the top level, plus optional
/// `[tune]`, `[scale]` and `[synth]` tables.
#[derive(Debug, Default)]
pub struct FileConfig {
    pub run: RunArgs,
    pub tune: TuneOpts,
    pub scale: ScaleOpts,
    pub synth: SynthOpts,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse()?;
        fn section<T: for<'de> Deserialize<'de> + Default>(table: &mut toml::Table, key: &str) -> Result<T> {
            match table.remove(key) {
                Some(v) => v.try_into().with_context(|| format!("in [{key}]")),
                None => Ok(T::default()),
            }
        }
        let tune = section(&mut table, "tune")?;
        let scale = section(&mut table, "scale")?;
        let synth = section(&mut table, "synth")?;
        let run = toml::Value::Table(table).try_into()?;
        Ok(Self { run, tune, scale, synth })
    }
}

/// Loads the config file named by `args.config` (if any) and layers `args`
/// over it.
pub fn merge_run(args: RunArgs) -> Result<(RunArgs, FileConfig)> {
    let mut file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut run = std::mem::take(&mut file.run);
    run.config = args.config.clone();
    run.overlay(args);
    Ok((run, file))
}

pub fn merge_tune(file: &FileConfig, cli: TuneOpts) -> TuneOpts {
    let mut t = file.tune.clone();
    t.overlay(cli);
    t
}

pub fn merge_scale(file: &FileConfig, cli: ScaleOpts) -> ScaleOpts {
    let mut s = file.scale.clone();
    s.overlay(cli);
    s
}

pub fn merge_synth(file: &FileConfig, cli: SynthOpts) -> SynthOpts {
    let mut s = file.synth.clone();
    s.overlay(cli);
    s
}

/// Flag, then config file, then `PALSY_BENCH_SEED`, then [`DEFAULT_SEED`].
pub fn resolve_seed(run: &RunArgs) -> Result<u64> {
    if let Some(s) = run.seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

pub fn parse_view(run: &RunArgs) -> Result<Option<View>> {
    run.view.as_deref().map(|v| v.parse::<View>().map_err(anyhow::Error::msg)).transpose()
}

pub fn parse_format(run: &RunArgs) -> Result<Option<Format>> {
    run.format.as_deref().map(|f| f.parse::<Format>().map_err(anyhow::Error::msg)).transpose()
}

pub fn parse_family(run: &RunArgs) -> Result<ModelFamily> {
    match run.model.as_deref() {
        Some(m) => m.parse::<ModelFamily>().map_err(anyhow::Error::msg),
        None => bail!("--model is required (gnb, tree, knn, forest or svm)"),
    }
}

/// Per-view published defaults with any model flags applied.
pub fn build_spec(family: ModelFamily, view: View, run: &RunArgs) -> Result<ModelSpec> {
    let depth = run.depth.map(|d| if d == 0 { None } else { Some(d) });
    let mut spec = ModelSpec::default_for(family, view);
    match &mut spec {
        ModelSpec::Gnb => {}
        ModelSpec::Tree { max_depth } => {
            if let Some(d) = depth {
                *max_depth = d;
            }
        }
        ModelSpec::Knn { k } => {
            if let Some(v) = run.k {
                *k = v;
            }
        }
        ModelSpec::Forest(p) => {
            let n = run.trees.unwrap_or(p.n_estimators);
            *p = ForestParams::new(n, depth.unwrap_or(p.max_depth));
        }
        ModelSpec::Svm(p) => apply_svm(p, run)?,
    }
    Ok(spec)
}

fn apply_svm(p: &mut SvmParams, run: &RunArgs) -> Result<()> {
    if let Some(k) = &run.kernel {
        p.kernel = k.parse::<KernelKind>().map_err(anyhow::Error::msg)?;
    }
    if let Some(d) = run.degree {
        p.degree = d;
    }
    if let Some(c) = run.c {
        p.c = c;
    }
    if run.gamma.is_some() {
        p.gamma = run.gamma;
    }
    if let Some(b) = run.balanced {
        p.balanced = b;
    }
    Ok(())
}

/// Everything that determines a command's outputs. Its hash goes into
/// every report; thread count and output directory are left out because they
/// do not change results.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: &'static str,
    pub data: Option<String>,
    pub data_sha256: Option<String>,
    pub format: Option<Format>,
    pub view: Option<View>,
    pub model: Option<ModelSpec>,
    pub seed: u64,
    pub exclusion_threshold: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub options: Option<serde_json::Value>,
}

impl Resolved {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `1..5,8,10..12` into `[1,2,3,4,5,8,10,11,12]`.
pub fn parse_values(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().with_context(|| format!("bad range start in {part:?}"))?;
            let b: usize = b.trim().trim_start_matches('=').parse().with_context(|| format!("bad range end in {part:?}"))?;
            if b < a {
                bail!("empty range {part:?}");
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().with_context(|| format!("bad value {part:?}"))?);
        }
    }
    if out.is_empty() {
        bail!("no values given");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_ranges_and_lists() {
        assert_eq!(parse_values("1..3,7, 9..=10").unwrap(), vec![1, 2, 3, 7, 9, 10]);
        assert_eq!(parse_values("1..40").unwrap().len(), 40);
        assert!(parse_values("5..2").is_err());
        assert!(parse_values("").is_err());
        assert!(parse_values("x").is_err());
    }

    #[test]
    fn command_line_overrides_file() {
        let mut file = FileConfig::parse(
            "view = \"metrics\"\nseed = 5\nk = 3\n[tune]\nparam = \"k\"\nvalues = \"1..4\"\n[scale]\nfloor = 12\n",
        )
        .unwrap();
        let mut run = std::mem::take(&mut file.run);
        run.overlay(RunArgs { seed: Some(9), ..Default::default() });
        assert_eq!(run.seed, Some(9));
        assert_eq!(run.k, Some(3));
        assert_eq!(run.view.as_deref(), Some("metrics"));
        let tune = merge_tune(&file, TuneOpts { values: Some("2".into()), ..Default::default() });
        assert_eq!(tune.param.as_deref(), Some("k"));
        assert_eq!(tune.values.as_deref(), Some("2"));
        assert_eq!(file.scale.floor, Some(12));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(FileConfig::parse("sead = 1").is_err());
        assert!(FileConfig::parse("[scale]\nflor = 3").is_err());
    }

    #[test]
    fn model_flags_override_defaults() {
        let run = RunArgs { depth: Some(0), trees: Some(7), ..Default::default() };
        let spec = build_spec(ModelFamily::Forest, View::Metrics, &run).unwrap();
        assert_eq!(spec, ModelSpec::Forest(ForestParams::new(7, None)));
        let run = RunArgs { degree: Some(2), balanced: Some(false), kernel: Some("rbf".into()), ..Default::default() };
        let ModelSpec::Svm(p) = build_spec(ModelFamily::Svm, View::NoChin, &run).unwrap() else { panic!() };
        assert_eq!((p.kernel, p.degree, p.balanced), (KernelKind::Rbf, 2, false));
        let spec = build_spec(ModelFamily::Tree, View::Landmarks, &RunArgs::default()).unwrap();
        assert_eq!(spec, ModelSpec::Tree { max_depth: Some(10) });
    }

    #[test]
    fn config_hash_tracks_content() {
        let r = Resolved {
            command: "evaluate",
            data: None,
            data_sha256: None,
            format: None,
            view: Some(View::Metrics),
            model: Some(ModelSpec::Gnb),
            seed: 1,
            exclusion_threshold: 20,
            options: None,
        };
        let mut other = r.clone();
        assert_eq!(r.hash(), other.hash());
        other.seed = 2;
        assert_ne!(r.hash(), other.hash());
        assert_eq!(r.hash().len(), 64);
    }
}
