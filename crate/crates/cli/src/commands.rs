use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use palsy_core::classifiers::{ForestParams, ModelFile};
use palsy_core::dataset_io::{generate_synthetic_cohort, load_cohort, save_cohort, Cohort, Diagnosis, Format};
use palsy_core::evaluation::{loocv, loocv_forest_sizes, ConfusionMatrix, EvalResult, Percent};
use palsy_core::features::{to_view, FeatureMatrix, MetricCatalog, View};
use palsy_core::preprocess::{
    load_processed, run_pipeline, save_processed, PipelineReport, ProcessedSample, DEFAULT_EXCLUSION_THRESHOLD,
};
use palsy_core::scaling_study::{
    build_schedule, fit_curve, run_scaling, solve_target_size, DisplayForm, FitCurve, FitError, ScalingSeries,
    TargetSize,
};
use palsy_core::{ModelFamily, ModelSpec};
use serde::Serialize;

use crate::config::{
    build_spec, file_sha256, merge_run, merge_scale, merge_synth, merge_tune, parse_family, parse_format, parse_values,
    parse_view, resolve_seed, FileConfig, Resolved, RunArgs, ScaleOpts, SynthOpts, TuneOpts,
};
use crate::output::{report_json, write_all};
use crate::svg::{Chart, Series, Style};

pub const DEFAULT_SYNTH_COUNTS: [usize; 3] = [50, 20, 30];
pub const DEFAULT_FLOOR: usize = 40;
pub const DEFAULT_TARGET: f64 = 0.95;

struct Ctx {
    run: RunArgs,
    file: FileConfig,
    seed: u64,
    catalog: MetricCatalog,
}

impl Ctx {
    fn new(args: RunArgs) -> Result<Self> {
        let (run, file) = merge_run(args)?;
        if let Some(n) = run.threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
        }
        let seed = resolve_seed(&run)?;
        Ok(Self { run, file, seed, catalog: MetricCatalog::builtin() })
    }

    fn out(&self) -> PathBuf {
        self.run.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn threshold(&self) -> usize {
        self.run.exclusion_threshold.unwrap_or(DEFAULT_EXCLUSION_THRESHOLD)
    }

    fn data_path(&self) -> Result<&Path> {
        self.run.data.as_deref().ok_or_else(|| anyhow!("--data is required"))
    }

    fn data_format(&self) -> Result<Format> {
        match parse_format(&self.run)? {
            Some(f) => Ok(f),
            None => Ok(Format::from_path(self.data_path()?)?),
        }
    }

    fn resolved(
        &self,
        command: &'static str,
        view: Option<View>,
        model: Option<ModelSpec>,
        options: Option<serde_json::Value>,
    ) -> Result<Resolved> {
        let (data, data_sha256, format) = match &self.run.data {
            Some(p) => (Some(p.display().to_string()), Some(file_sha256(p)?), Some(self.data_format()?)),
            None => (None, None, parse_format(&self.run)?),
        };
        Ok(Resolved {
            command,
            data,
            data_sha256,
            format,
            view,
            model,
            seed: self.seed,
            exclusion_threshold: self.threshold(),
            options,
        })
    }

    fn input(&self) -> Result<Input> {
        let path = self.data_path()?;
        if !path.is_file() {
            bail!("input file {} does not exist", path.display());
        }
        load_input(path, self.data_format()?)
    }

    /// Features for `view`, running the pipeline first on a raw cohort.
    fn features(&self, view: Option<View>) -> Result<Prepared> {
        let samples = |pipeline| -> Result<Prepared> {
            let (samples, report): (Vec<ProcessedSample>, Option<PipelineReport>) = pipeline;
            let view = view.ok_or_else(|| anyhow!("--view is required for a cohort input"))?;
            let data = to_view(&samples, view, &self.catalog)?;
            Ok(Prepared { data, view: Some(view), pipeline: report })
        };
        match self.input()? {
            Input::Features(m) => {
                if let Some(want) = view {
                    if m.view() != Some(want) {
                        bail!(
                            "{} holds the {} view, not {want}",
                            self.data_path()?.display(),
                            m.view().map_or("unnamed", View::name)
                        );
                    }
                }
                Ok(Prepared { view: m.view(), data: m, pipeline: None })
            }
            Input::Processed(s) => samples((s, None)),
            Input::Raw(c) => {
                let (s, report) = run_pipeline(&c, self.threshold());
                samples((s, Some(report)))
            }
        }
    }

    fn family_and_view(&self) -> Result<(ModelFamily, Option<View>)> {
        Ok((parse_family(&self.run)?, parse_view(&self.run)?))
    }
}

enum Input {
    Raw(Cohort),
    Processed(Vec<ProcessedSample>),
    Features(FeatureMatrix),
}

/// Tells raw cohorts, processed cohorts and feature matrices apart by their
/// columns.
fn load_input(path: &Path, format: Format) -> Result<Input> {
    let ctx = || format!("loading {}", path.display());
    match format {
        Format::Csv => {
            let header = csv::Reader::from_path(path).with_context(ctx)?.headers().with_context(ctx)?.clone();
            let has = |name: &str| header.iter().any(|h| h.trim() == name);
            if !has("box_x1") {
                Ok(Input::Features(FeatureMatrix::load_csv(path).with_context(ctx)?))
            } else if has("rotation_applied") {
                Ok(Input::Processed(load_processed(path, format).with_context(ctx)?))
            } else {
                Ok(Input::Raw(load_cohort(path, format).with_context(ctx)?))
            }
        }
        Format::Json => {
            let text = std::fs::read(path).with_context(ctx)?;
            let value: serde_json::Value = serde_json::from_slice(&text).with_context(ctx)?;
            let processed = value
                .as_array()
                .and_then(|a| a.first())
                .and_then(|o| o.get("rotation_applied"))
                .is_some_and(|r| !r.is_null());
            if processed {
                Ok(Input::Processed(load_processed(path, format).with_context(ctx)?))
            } else {
                Ok(Input::Raw(load_cohort(path, format).with_context(ctx)?))
            }
        }
    }
}

struct Prepared {
    data: FeatureMatrix,
    view: Option<View>,
    pipeline: Option<PipelineReport>,
}

impl Prepared {
    fn view_name(&self) -> &'static str {
        self.view.map_or("features", View::name)
    }

    /// View used to pick per-view model defaults.
    fn defaults_view(&self) -> View {
        self.view.unwrap_or(View::Landmarks)
    }
}

/// Lowers `k` to the training-set size so small cohorts still evaluate.
fn cap_k(spec: ModelSpec, train_size: usize) -> ModelSpec {
    match spec {
        ModelSpec::Knn { k } if k > train_size && train_size > 0 => {
            log::warn!("k = {k} exceeds the {train_size} training rows; using k = {train_size}");
            ModelSpec::Knn { k: train_size }
        }
        other => other,
    }
}

fn announce(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

pub fn synth(args: RunArgs, opts: SynthOpts) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let opts = merge_synth(&ctx.file, opts);
    let [dp, dc, dh] = DEFAULT_SYNTH_COUNTS;
    let counts = [opts.peripheral.unwrap_or(dp), opts.central.unwrap_or(dc), opts.healthy.unwrap_or(dh)];
    let format = parse_format(&ctx.run)?.unwrap_or(Format::Csv);
    let options = serde_json::json!({ "peripheral": counts[0], "central": counts[1], "healthy": counts[2] });
    let mut resolved = ctx.resolved("synth", None, None, Some(options))?;
    resolved.format = Some(format);
    let cohort = generate_synthetic_cohort(counts[0], counts[1], counts[2], ctx.seed);
    #[derive(Serialize)]
    struct Body<'a> {
        provenance_note: &'a str,
        samples: usize,
        class_counts: palsy_core::dataset_io::ClassCounts,
    }
    let report = report_json(
        &resolved,
        Body { provenance_note: cohort.provenance(), samples: cohort.len(), class_counts: cohort.class_counts() },
    )?;
    let files = write_all(&ctx.out(), |s| {
        save_cohort(&cohort, &s.path(&format!("cohort.{}", format.extension())), format)?;
        s.write("synth_report.json", report)
    })?;
    announce(&files);
    Ok(())
}

pub fn preprocess(args: RunArgs) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let format = ctx.data_format()?;
    let cohort = match ctx.input()? {
        Input::Raw(c) => c,
        Input::Processed(_) => bail!("{} is already preprocessed", ctx.data_path()?.display()),
        Input::Features(_) => bail!("{} is a feature matrix, not a cohort", ctx.data_path()?.display()),
    };
    let (samples, report) = run_pipeline(&cohort, ctx.threshold());
    let resolved = ctx.resolved("preprocess", None, None, None)?;
    #[derive(Serialize)]
    struct Body<'a> {
        pipeline: &'a PipelineReport,
    }
    let json = report_json(&resolved, Body { pipeline: &report })?;
    let files = write_all(&ctx.out(), |s| {
        save_processed(&samples, &s.path(&format!("processed.{}", format.extension())), format)?;
        s.write("pipeline_report.json", json)
    })?;
    println!("retained {} of {} samples; excluded {}", report.retained_count, report.input_count, report.excluded.len());
    announce(&files);
    Ok(())
}

pub fn featurize(args: RunArgs) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let view = parse_view(&ctx.run)?;
    let (samples, pipeline) = match ctx.input()? {
        Input::Raw(c) => {
            let (s, r) = run_pipeline(&c, ctx.threshold());
            (s, Some(r))
        }
        Input::Processed(s) => (s, None),
        Input::Features(_) => bail!("{} is already a feature matrix", ctx.data_path()?.display()),
    };
    let views = view.map_or_else(|| View::ALL.to_vec(), |v| vec![v]);
    let matrices = views.iter().map(|&v| to_view(&samples, v, &ctx.catalog)).collect::<Result<Vec<_>, _>>()?;
    let resolved = ctx.resolved("featurize", view, None, None)?;
    #[derive(Serialize)]
    struct Shape {
        view: View,
        samples: usize,
        features: usize,
    }
    #[derive(Serialize)]
    struct Body {
        matrices: Vec<Shape>,
        pipeline: Option<PipelineReport>,
    }
    let shapes = views
        .iter()
        .zip(&matrices)
        .map(|(&view, m)| Shape { view, samples: m.n_samples(), features: m.n_features() })
        .collect();
    let json = report_json(&resolved, Body { matrices: shapes, pipeline })?;
    let files = write_all(&ctx.out(), |s| {
        for (v, m) in views.iter().zip(&matrices) {
            m.save_csv(&s.path(&format!("features_{}.csv", v.name())))?;
        }
        s.write("featurize_report.json", json)
    })?;
    announce(&files);
    Ok(())
}

#[derive(Serialize)]
struct EvalBody<'a> {
    view: Option<View>,
    model: String,
    excluded_samples: Option<usize>,
    result: &'a EvalResult,
}

pub fn evaluate(args: RunArgs) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let (family, view) = ctx.family_and_view()?;
    let prepared = ctx.features(view)?;
    let n = prepared.data.n_samples();
    let spec = cap_k(build_spec(family, prepared.defaults_view(), &ctx.run)?, n.saturating_sub(1));
    let result = loocv(&prepared.data, &spec, ctx.seed)
        .with_context(|| format!("leave-one-out with {} on the {} view", spec.describe(), prepared.view_name()))?;
    let resolved = ctx.resolved("evaluate", prepared.view, Some(spec), None)?;
    let body = EvalBody {
        view: prepared.view,
        model: spec.describe(),
        excluded_samples: prepared.pipeline.as_ref().map(|p| p.excluded.len()),
        result: &result,
    };
    let json = report_json(&resolved, body)?;
    let table = render_eval(&spec, prepared.view_name(), &result);
    let stem = format!("eval_{}_{}", family.name(), prepared.view_name());
    let files = write_all(&ctx.out(), |s| {
        s.write(&format!("{stem}.json"), json)?;
        s.write(&format!("{stem}.txt"), &table)
    })?;
    print!("{table}");
    announce(&files);
    Ok(())
}

fn render_eval(spec: &ModelSpec, view: &str, r: &EvalResult) -> String {
    let mut s = format!("{} on the {view} view\n", spec.describe());
    s.push_str(&format!("accuracy {} ({}/{})\n", r.accuracy, r.correct, r.n));
    for d in Diagnosis::ALL {
        let v = r.sensitivity_of(d).map_or("n/a".to_string(), |p| p.to_string());
        s.push_str(&format!("sensitivity {}: {v}\n", d.code()));
    }
    if !r.unconverged_folds.is_empty() {
        s.push_str(&format!("unconverged folds: {:?}\n", r.unconverged_folds));
    }
    s.push('\n');
    s.push_str(&r.confusion.render());
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Param {
    Depth,
    K,
    Trees,
    Degree,
}

impl Param {
    fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "depth" | "max_depth" => Ok(Param::Depth),
            "k" => Ok(Param::K),
            "trees" | "n_estimators" => Ok(Param::Trees),
            "degree" => Ok(Param::Degree),
            other => bail!("unknown sweep parameter {other:?} (depth, k, trees, degree)"),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Param::Depth => "depth",
            Param::K => "k",
            Param::Trees => "trees",
            Param::Degree => "degree",
        }
    }

    fn default_for(family: ModelFamily) -> Result<Self> {
        match family {
            ModelFamily::Gnb => bail!("naive Bayes has no hyperparameter to sweep"),
            ModelFamily::Tree => Ok(Param::Depth),
            ModelFamily::Knn => Ok(Param::K),
            ModelFamily::Forest => Ok(Param::Trees),
            ModelFamily::Svm => Ok(Param::Degree),
        }
    }

    fn default_values(self) -> &'static str {
        match self {
            Param::Depth => "1..20",
            Param::K => "1..15",
            Param::Trees => "1..200",
            Param::Degree => "1..40",
        }
    }

    fn apply(self, base: ModelSpec, v: usize) -> Result<ModelSpec> {
        Ok(match (self, base) {
            (Param::Depth, ModelSpec::Tree { .. }) => ModelSpec::Tree { max_depth: Some(v) },
            (Param::Depth, ModelSpec::Forest(p)) => ModelSpec::Forest(ForestParams { max_depth: Some(v), ..p }),
            (Param::K, ModelSpec::Knn { .. }) => ModelSpec::Knn { k: v },
            (Param::Trees, ModelSpec::Forest(p)) => ModelSpec::Forest(ForestParams { n_estimators: v, ..p }),
            (Param::Degree, ModelSpec::Svm(p)) => {
                ModelSpec::Svm(palsy_core::svm::SvmParams { degree: u32::try_from(v)?, ..p })
            }
            (param, spec) => bail!("{} cannot be swept for {}", param.name(), spec.family().title()),
        })
    }
}

#[derive(Debug, Serialize)]
struct TuneRow {
    value: usize,
    accuracy: Percent,
    correct: usize,
    n: usize,
    sensitivity: [Option<Percent>; 3],
    unconverged_folds: usize,
}

impl TuneRow {
    fn new(value: usize, r: &EvalResult) -> Self {
        Self {
            value,
            accuracy: r.accuracy,
            correct: r.correct,
            n: r.n,
            sensitivity: r.sensitivity,
            unconverged_folds: r.unconverged_folds.len(),
        }
    }
}

pub fn tune(args: RunArgs, opts: TuneOpts) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let opts = merge_tune(&ctx.file, opts);
    let (family, view) = ctx.family_and_view()?;
    let param = match &opts.param {
        Some(p) => Param::parse(p)?,
        None => Param::default_for(family)?,
    };
    let values = parse_values(opts.values.as_deref().unwrap_or(param.default_values()))?;
    let prepared = ctx.features(view)?;
    let n = prepared.data.n_samples();
    let mut base = build_spec(family, prepared.defaults_view(), &ctx.run)?;
    if param != Param::K {
        base = cap_k(base, n.saturating_sub(1));
    }
    let specs = values.iter().map(|&v| param.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let results: Vec<EvalResult> = match (param, base) {
        (Param::Trees, ModelSpec::Forest(p)) => loocv_forest_sizes(&prepared.data, &p, &values, ctx.seed)?,
        _ => specs
            .iter()
            .map(|spec| loocv(&prepared.data, spec, ctx.seed).with_context(|| format!("sweep at {}", spec.describe())))
            .collect::<Result<_>>()?,
    };
    let rows: Vec<TuneRow> = values.iter().zip(&results).map(|(&v, r)| TuneRow::new(v, r)).collect();

    let options = serde_json::json!({ "param": param.name(), "values": values });
    let resolved = ctx.resolved("tune", prepared.view, Some(base), Some(options))?;
    #[derive(Serialize)]
    struct Body<'a> {
        view: Option<View>,
        param: Param,
        rows: &'a [TuneRow],
    }
    let json = report_json(&resolved, Body { view: prepared.view, param, rows: &rows })?;
    let csv = tune_csv(param, &rows)?;
    let chart = tune_chart(family, param, prepared.view_name(), &rows).render();
    let stem = format!("tune_{}_{}_{}", family.name(), prepared.view_name(), param.name());
    let files = write_all(&ctx.out(), |s| {
        s.write(&format!("{stem}.csv"), &csv)?;
        s.write(&format!("{stem}.svg"), &chart)?;
        s.write(&format!("{stem}.json"), &json)
    })?;
    if let Some(best) = rows.iter().max_by(|a, b| a.accuracy.value().total_cmp(&b.accuracy.value()).then(b.value.cmp(&a.value)))
    {
        println!("best {} = {} with accuracy {}", param.name(), best.value, best.accuracy);
    }
    announce(&files);
    Ok(())
}

fn tune_csv(param: Param, rows: &[TuneRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([param.name(), "accuracy", "correct", "n", "sensitivity_p", "sensitivity_c", "sensitivity_h"])?;
    for r in rows {
        let sens = r.sensitivity.map(|s| s.map_or(String::new(), |p| p.value().to_string()));
        w.write_record([
            r.value.to_string(),
            r.accuracy.value().to_string(),
            r.correct.to_string(),
            r.n.to_string(),
            sens[0].clone(),
            sens[1].clone(),
            sens[2].clone(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn tune_chart(family: ModelFamily, param: Param, view: &str, rows: &[TuneRow]) -> Chart {
    let line = |name: &str, colour: usize, f: &dyn Fn(&TuneRow) -> Option<f64>| Series {
        name: name.into(),
        points: rows.iter().filter_map(|r| f(r).map(|y| (r.value as f64, y))).collect(),
        style: Style::Points,
        colour,
    };
    let mut series = vec![line("accuracy", 0, &|r| Some(r.accuracy.value()))];
    for d in Diagnosis::ALL {
        let i = d.index();
        series.push(line(&format!("sensitivity {}", d.code()), i + 1, &move |r| r.sensitivity[i].map(|p| p.value())));
    }
    Chart {
        title: format!("{} on the {view} view", family.title()),
        x_label: param.name().into(),
        y_label: "percent".into(),
        y_range: (0.0, 100.0),
        series,
    }
}

#[derive(Debug, Serialize)]
struct FitOutcome {
    curve: Option<FitCurve>,
    display: Option<DisplayForm>,
    target_size: Option<TargetSize>,
    value_at_target_size: Option<f64>,
    error: Option<String>,
}

fn fit_outcome(points: &[(f64, f64)], target: f64, offset: f64) -> FitOutcome {
    let (curve, mut error) = match fit_curve(points) {
        Ok(c) => (Some(c), None),
        Err(FitError::NoConvergence(c)) => (Some(*c), Some(FitError::NoConvergence(c).to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    let target_size = curve.and_then(|c| match solve_target_size(&c, target) {
        Ok(t) => Some(t),
        Err(e) => {
            error.get_or_insert(e.to_string());
            None
        }
    });
    FitOutcome {
        display: curve.map(|c| c.display(offset)),
        value_at_target_size: curve.zip(target_size).map(|(c, t)| c.eval(t.size as f64)),
        curve,
        target_size,
        error,
    }
}

pub fn scale(args: RunArgs, opts: ScaleOpts) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let opts = merge_scale(&ctx.file, opts);
    let floor = opts.floor.unwrap_or(DEFAULT_FLOOR);
    let stride = opts.stride.unwrap_or(1);
    let target = opts.target.unwrap_or(DEFAULT_TARGET);
    let offset = opts.curve_offset.unwrap_or(0.0);
    if !(target > 0.0 && target < 1.0) {
        bail!("--target must be a fraction strictly between 0 and 1");
    }
    let (family, view) = ctx.family_and_view()?;
    let prepared = ctx.features(view)?;
    let spec = cap_k(build_spec(family, prepared.defaults_view(), &ctx.run)?, floor.saturating_sub(1));
    let schedule = build_schedule(prepared.data.class_counts(), floor, ctx.seed)?;
    let series = run_scaling(&prepared.data, &spec, &schedule, stride, ctx.seed)?;
    let accuracy = fit_outcome(&series.accuracy_points(), target, offset);
    let central = fit_outcome(&series.sensitivity_points(), target, offset);

    let options = serde_json::json!({ "floor": floor, "stride": stride, "target": target, "curve_offset": offset });
    let resolved = ctx.resolved("scale", prepared.view, Some(spec), Some(options))?;
    #[derive(Serialize)]
    struct Fits<'a> {
        accuracy: &'a FitOutcome,
        central_sensitivity: &'a FitOutcome,
    }
    #[derive(Serialize)]
    struct Body<'a> {
        view: Option<View>,
        model: String,
        target: f64,
        series: &'a ScalingSeries,
        fits: Fits<'a>,
    }
    let json = report_json(
        &resolved,
        Body {
            view: prepared.view,
            model: spec.describe(),
            target,
            series: &series,
            fits: Fits { accuracy: &accuracy, central_sensitivity: &central },
        },
    )?;
    let chart = scale_chart(&spec, prepared.view_name(), &series, &accuracy, &central).render();
    let stem = format!("scale_{}_{}", family.name(), prepared.view_name());
    let files = write_all(&ctx.out(), |s| {
        s.write(&format!("{stem}.csv"), series.to_csv())?;
        s.write(&format!("{stem}.json"), &json)?;
        s.write(&format!("{stem}.svg"), &chart)
    })?;
    for (name, fit) in [("accuracy", &accuracy), ("central sensitivity", &central)] {
        match (&fit.target_size, &fit.error) {
            (Some(t), _) => println!("{name}: reaches {target} at about {} samples", t.size),
            (None, Some(e)) => println!("{name}: no extrapolation ({e})"),
            (None, None) => {}
        }
    }
    announce(&files);
    Ok(())
}

fn scale_chart(spec: &ModelSpec, view: &str, series: &ScalingSeries, acc: &FitOutcome, cen: &FitOutcome) -> Chart {
    let pct = |pts: Vec<(f64, f64)>| pts.into_iter().map(|(x, y)| (x, 100.0 * y)).collect::<Vec<_>>();
    let sizes: Vec<f64> = series.points.iter().map(|p| p.size as f64).collect();
    let lo = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sizes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let curve_points = |c: &FitCurve| -> Vec<(f64, f64)> {
        (0..=60).map(|i| lo + (hi - lo) * i as f64 / 60.0).map(|x| (x, 100.0 * c.eval(x))).collect()
    };
    let mut out = vec![
        Series { name: "accuracy".into(), points: pct(series.accuracy_points()), style: Style::Points, colour: 0 },
        Series {
            name: "sensitivity C".into(),
            points: pct(series.sensitivity_points()),
            style: Style::Points,
            colour: 1,
        },
    ];
    for (name, fit, colour) in [("accuracy fit", acc, 0), ("sensitivity C fit", cen, 1)] {
        if let Some(c) = &fit.curve {
            out.push(Series { name: name.into(), points: curve_points(c), style: Style::Dashed, colour });
        }
    }
    Chart {
        title: format!("{} on the {view} view by cohort size", spec.describe()),
        x_label: "cohort size".into(),
        y_label: "percent".into(),
        y_range: (0.0, 100.0),
        series: out,
    }
}

pub fn train(args: RunArgs) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let (family, view) = ctx.family_and_view()?;
    let prepared = ctx.features(view)?;
    let spec = cap_k(build_spec(family, prepared.defaults_view(), &ctx.run)?, prepared.data.n_samples());
    let model = spec.fit(&prepared.data, ctx.seed).with_context(|| format!("training {}", spec.describe()))?;
    let file = ModelFile::new(spec, ctx.seed, &prepared.data, model);
    let name = format!("model_{}_{}.json", family.name(), prepared.view_name());
    let files = write_all(&ctx.out(), |s| s.write(&name, file.to_json()))?;
    announce(&files);
    Ok(())
}

pub fn predict(args: RunArgs, model_path: &Path) -> Result<()> {
    let ctx = Ctx::new(args)?;
    let file = ModelFile::load(model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let view = parse_view(&ctx.run)?.or(file.view);
    if file.view.is_some() && view != file.view {
        bail!("model was trained on the {} view", file.view.map_or("", View::name));
    }
    let prepared = ctx.features(view)?;
    if prepared.data.feature_names() != file.feature_names.as_slice() {
        bail!("feature columns of {} do not match the model", ctx.data_path()?.display());
    }
    let predicted = file.model.predict_all(&prepared.data)?;
    let confusion = ConfusionMatrix::from_pairs(prepared.data.labels().iter().copied().zip(predicted.iter().copied()))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "actual", "predicted"])?;
    for ((id, actual), p) in prepared.data.sample_ids().iter().zip(prepared.data.labels()).zip(&predicted) {
        w.write_record([id.as_str(), actual.code(), p.code()])?;
    }
    let csv = w.into_inner()?;
    let options = serde_json::json!({
        "model_file": model_path.display().to_string(),
        "model_sha256": file_sha256(model_path)?,
    });
    let resolved = ctx.resolved("predict", prepared.view, Some(file.spec), Some(options))?;
    #[derive(Serialize)]
    struct Body<'a> {
        accuracy: Percent,
        confusion: &'a ConfusionMatrix,
    }
    let json = report_json(&resolved, Body { accuracy: confusion.accuracy(), confusion: &confusion })?;
    let files = write_all(&ctx.out(), |s| {
        s.write("predictions.csv", &csv)?;
        s.write("predict_report.json", json)
    })?;
    println!("accuracy against file labels {}", confusion.accuracy());
    announce(&files);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_is_capped_to_training_rows() {
        assert_eq!(cap_k(ModelSpec::Knn { k: 7 }, 3), ModelSpec::Knn { k: 3 });
        assert_eq!(cap_k(ModelSpec::Knn { k: 2 }, 3), ModelSpec::Knn { k: 2 });
        assert_eq!(cap_k(ModelSpec::Gnb, 1), ModelSpec::Gnb);
    }

    #[test]
    fn sweep_parameters_fit_their_family() {
        let tree = ModelSpec::Tree { max_depth: Some(10) };
        assert_eq!(Param::Depth.apply(tree, 3).unwrap(), ModelSpec::Tree { max_depth: Some(3) });
        assert!(Param::K.apply(tree, 3).is_err());
        let forest = ModelSpec::Forest(ForestParams::new(100, None));
        assert_eq!(Param::Trees.apply(forest, 5).unwrap(), ModelSpec::Forest(ForestParams::new(5, None)));
        assert!(Param::default_for(ModelFamily::Gnb).is_err());
        assert_eq!(parse_values(Param::Degree.default_values()).unwrap().len(), 40);
        assert_eq!(parse_values(Param::Trees.default_values()).unwrap().len(), 200);
    }

    #[test]
    fn flat_perfect_series_reports_an_error_without_a_curve() {
        let out = fit_outcome(&[(10.0, 1.0), (20.0, 1.0), (30.0, 1.0)], 0.95, 0.0);
        assert!(out.curve.is_none() && out.target_size.is_none());
        assert!(out.error.unwrap().contains("flat"));
    }

    #[test]
    fn published_curve_solves_to_334() {
        let c = FitCurve::from_display(2.64, -0.00741, -201.0);
        let points: Vec<(f64, f64)> = (0..20).map(|i| 40.0 + 8.0 * i as f64).map(|x| (x, c.eval(x))).collect();
        let out = fit_outcome(&points, 0.95, -201.0);
        assert_eq!(out.target_size.unwrap().size, 334);
        let d = out.display.unwrap();
        assert!((d.a - 2.64).abs() < 1e-6 && (d.b + 0.00741).abs() < 1e-9);
    }
}
