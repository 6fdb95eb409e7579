//! Regression bounds measured once on the frozen desk-scale synthetic
//! cohort (50/20/30, seed 42) and pinned.

use palsy_core::classifiers::{ForestParams, ModelFamily, ModelSpec};
use palsy_core::dataset_io::generate_synthetic_cohort;
use palsy_core::features::{to_view, FeatureMatrix, MetricCatalog, View};
use palsy_core::preprocess::{run_pipeline, DEFAULT_EXCLUSION_THRESHOLD};
use palsy_core::scaling_study::{build_schedule, run_scaling};
use palsy_core::loocv;

const SEED: u64 = 42;

fn view(v: View) -> FeatureMatrix {
    let cohort = generate_synthetic_cohort(50, 20, 30, SEED);
    let (processed, report) = run_pipeline(&cohort, DEFAULT_EXCLUSION_THRESHOLD);
    assert!(report.excluded.is_empty());
    to_view(&processed, v, &MetricCatalog::builtin()).unwrap()
}

#[test]
fn forest_keeps_up_with_a_single_tree() {
    for v in View::ALL {
        let data = view(v);
        let tree = loocv(&data, &ModelSpec::default_for(ModelFamily::Tree, v), SEED).unwrap();
        let forest = loocv(&data, &ModelSpec::Forest(ForestParams::new(100, None)), SEED).unwrap();
        println!("{v}: tree {} forest {}", tree.accuracy, forest.accuracy);
        assert!(forest.accuracy.value() >= tree.accuracy.value() - 2.0, "{v}");
    }
}

#[test]
fn shrinking_does_not_beat_the_full_cohort() {
    let data = view(View::Metrics);
    let schedule = build_schedule(data.class_counts(), 20, SEED).unwrap();
    let series = run_scaling(&data, &ModelSpec::Gnb, &schedule, 10, SEED).unwrap();
    let sizes: Vec<usize> = series.points.iter().map(|p| p.size).collect();
    assert!(sizes.windows(2).all(|w| w[0] > w[1]));
    assert_eq!((sizes[0], *sizes.last().unwrap()), (100, 20));
    let full = series.points[0].accuracy;
    let floor = series.points.last().unwrap().accuracy;
    println!("{}", series.to_csv());
    assert!(full >= floor - 0.10, "full {full} floor {floor}");
}

#[test]
fn endpoint_stride_gives_two_points() {
    let data = view(View::NoChin);
    let schedule = build_schedule(data.class_counts(), 30, SEED).unwrap();
    let series = run_scaling(&data, &ModelSpec::Knn { k: 5 }, &schedule, schedule.len(), SEED).unwrap();
    assert_eq!(series.points.iter().map(|p| p.size).collect::<Vec<_>>(), vec![100, 30]);
}
