//! k-nearest-neighbors classifier: stores the training set, Euclidean
//! metric, majority vote among the k closest.

use super::super::Sample;
use super::majority;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub classes: usize,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<usize>,
}

impl KnnModel {
    pub fn fit(samples: &[&Sample], classes: usize, k: usize) -> Self {
        Self {
            k,
            classes,
            train_x: samples.iter().map(|s| s.features.clone()).collect(),
            train_y: samples.iter().map(|s| s.label).collect(),
        }
    }

    /// Predicted class and the winning vote share.
    pub fn predict(&self, features: &[f64]) -> (usize, f64) {
        let mut dist: Vec<(f64, usize)> = self
            .train_x
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let d: f64 = x
                    .iter()
                    .zip(features)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, i)
            })
            .collect();
        // Distance ties break on training index, keeping votes deterministic.
        dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = self.k.min(dist.len());
        let mut counts = vec![0usize; self.classes];
        for &(_, i) in &dist[..k] {
            counts[self.train_y[i]] += 1;
        }
        let winner = majority(&counts);
        (winner, counts[winner] as f64 / k as f64)
    }
}
