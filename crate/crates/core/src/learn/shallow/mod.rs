//! Shallow baselines, all built here: nearest neighbors, a CART decision
//! tree, a bootstrap random forest, one-vs-rest hinge SVM trained by SGD,
//! and multinomial logistic regression with cross-validated regularization.

pub mod knn;
pub mod linear;
pub mod tree;

pub use knn::KnnModel;
pub use linear::{LogRegModel, SvmModel};
pub use tree::{ForestModel, TreeModel};

use std::time::Instant;

use super::artifact::{ModelArtifact, ModelKind};
use super::eval::evaluate;
use super::train::TrainConfig;
use super::{stratified_split, LearnError, Sample, TaskSpec};

/// The five baseline families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShallowKind {
    Knn,
    DecisionTree,
    RandomForest,
    SvmSgd,
    LogRegCv,
}

impl ShallowKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShallowKind::Knn => "knn",
            ShallowKind::DecisionTree => "dt",
            ShallowKind::RandomForest => "rf",
            ShallowKind::SvmSgd => "svm",
            ShallowKind::LogRegCv => "logreg",
        }
    }
}

/// Fits a shallow baseline on the dataset's stratified train split and
/// evaluates it on the held-out split, mirroring the deep-model protocol so
/// the comparison tables line up. Deterministic given the config seed.
pub fn shallow_fit(
    kind: ShallowKind,
    samples: &[Sample],
    task: &TaskSpec,
    config: &TrainConfig,
) -> Result<(ModelArtifact, super::EvalReport), LearnError> {
    let distinct: std::collections::BTreeSet<usize> = samples.iter().map(|s| s.label).collect();
    if distinct.len() < 2 {
        return Err(LearnError::Degenerate(
            "fitting needs at least two classes".into(),
        ));
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let (train_idx, val_idx) = stratified_split(&labels, config.split, config.seed)?;
    let train_samples: Vec<&Sample> = train_idx.iter().map(|&i| &samples[i]).collect();
    let classes = task.class_count();

    let started = Instant::now();
    let model = match kind {
        ShallowKind::Knn => ModelKind::Knn(knn::KnnModel::fit(&train_samples, classes, 5)),
        ShallowKind::DecisionTree => {
            ModelKind::DecisionTree(tree::TreeModel::fit(&train_samples, classes))
        }
        ShallowKind::RandomForest => ModelKind::RandomForest(tree::ForestModel::fit(
            &train_samples,
            classes,
            config.seed,
        )),
        ShallowKind::SvmSgd => {
            ModelKind::SvmSgd(linear::SvmModel::fit(&train_samples, classes, config.seed))
        }
        ShallowKind::LogRegCv => ModelKind::LogRegCv(linear::LogRegModel::fit(
            &train_samples,
            classes,
            config.seed,
        )?),
    };
    let training_time_s = started.elapsed().as_secs_f64();

    let mut artifact = ModelArtifact {
        task: *task,
        kind: model,
        config: config.clone(),
        training_time_s,
        eval_accuracy: None,
        eval_confusion: None,
    };
    let val_samples: Vec<Sample> = val_idx.iter().map(|&i| samples[i].clone()).collect();
    let report = evaluate(&artifact, task, &val_samples)?;
    artifact.eval_accuracy = Some(report.accuracy);
    artifact.eval_confusion = Some(report.confusion.clone());
    Ok((artifact, report))
}

/// Majority vote with deterministic ties: highest count, then lowest class.
pub(crate) fn majority(counts: &[usize]) -> usize {
    let mut best = 0usize;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::TaskKind;
    use crate::rng;

    /// Two blobs split perfectly by feature 7.
    pub(super) fn axis_separable(n_per: usize, seed: u64) -> Vec<Sample> {
        let mut gen = rng::from_seed(seed);
        let mut out = Vec::new();
        for label in 0..2usize {
            for _ in 0..n_per {
                let mut f = vec![0.0; crate::learn::FEATURES];
                for v in f.iter_mut() {
                    *v = rng::uniform_in(&mut gen, 0.0, 0.2);
                }
                f[7] = if label == 0 {
                    rng::uniform_in(&mut gen, 0.0, 1.0)
                } else {
                    rng::uniform_in(&mut gen, 2.0, 3.0)
                };
                out.push(Sample::new(f, label));
            }
        }
        out
    }

    #[test]
    fn all_kinds_fit_an_easy_set() {
        let samples = axis_separable(30, 5);
        let task = TaskSpec::new(TaskKind::Angle);
        for kind in [
            ShallowKind::Knn,
            ShallowKind::DecisionTree,
            ShallowKind::RandomForest,
            ShallowKind::SvmSgd,
            ShallowKind::LogRegCv,
        ] {
            let (_, report) = shallow_fit(kind, &samples, &task, &TrainConfig::default()).unwrap();
            assert!(
                report.accuracy > 0.95,
                "{} reached only {}",
                kind.name(),
                report.accuracy
            );
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let samples: Vec<Sample> = (0..10).map(|_| Sample::new(vec![0.0; 200], 3)).collect();
        let task = TaskSpec::new(TaskKind::Angle);
        assert!(matches!(
            shallow_fit(ShallowKind::Knn, &samples, &task, &TrainConfig::default()),
            Err(LearnError::Degenerate(_))
        ));
    }
}
