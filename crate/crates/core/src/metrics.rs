//! Group-balanced accuracy, worst-group accuracy and classification margins.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::numerics::{argmax, Tensor};
use crate::scalar::Scalar;

/// A group `(y, a)`: class label and attribute value.
pub type Group = (usize, usize);

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no groups to average")]
    NoGroups,
    #[error("{0} aggregate is empty")]
    EmptySide(&'static str),
    #[error("length mismatch: {what} has {actual}, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("margin needs at least two classes")]
    TooFewClasses,
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
}

/// `logits[y] - max_{j != y} logits[j]`, computed in 64-bit.
pub fn example_margin<T: Scalar>(logits: &[T], y: usize) -> Result<f64, MetricsError> {
    if logits.len() < 2 {
        return Err(MetricsError::TooFewClasses);
    }
    if y >= logits.len() {
        return Err(MetricsError::Label {
            label: y,
            classes: logits.len(),
        });
    }
    let rival = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, v)| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[y].as_f64() - rival)
}

/// Unweighted mean of per-group accuracies.
pub fn gba(per_group: &BTreeMap<Group, f64>) -> Result<f64, MetricsError> {
    if per_group.is_empty() {
        return Err(MetricsError::NoGroups);
    }
    Ok(per_group.values().sum::<f64>() / per_group.len() as f64)
}

/// Minimum per-group accuracy.
pub fn worst_group(per_group: &BTreeMap<Group, f64>) -> Result<f64, MetricsError> {
    per_group
        .values()
        .copied()
        .reduce(f64::min)
        .ok_or(MetricsError::NoGroups)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupCount {
    pub correct: u64,
    pub total: u64,
}

impl GroupCount {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Running per-group correct/total counts over an `L × K` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupTally {
    classes: usize,
    attrs: usize,
    counts: Vec<GroupCount>,
}

impl GroupTally {
    pub fn new(classes: usize, attrs: usize) -> Self {
        Self {
            classes,
            attrs,
            counts: vec![GroupCount::default(); classes * attrs],
        }
    }

    pub fn record(&mut self, group: Group, correct: bool) {
        let c = &mut self.counts[group.0 * self.attrs + group.1];
        c.total += 1;
        c.correct += u64::from(correct);
    }

    pub fn count(&self, group: Group) -> GroupCount {
        self.counts[group.0 * self.attrs + group.1]
    }

    /// Per-group accuracy and size; groups without samples are left out
    /// with a warning.
    pub fn evaluate(&self) -> Result<GroupEvaluation, MetricsError> {
        let mut accuracy = BTreeMap::new();
        let mut sizes = BTreeMap::new();
        let mut excluded = Vec::new();
        for y in 0..self.classes {
            for a in 0..self.attrs {
                let c = self.count((y, a));
                if c.total == 0 {
                    excluded.push((y, a));
                    continue;
                }
                accuracy.insert((y, a), c.accuracy());
                sizes.insert((y, a), c.total);
            }
        }
        if !excluded.is_empty() {
            log::warn!("{} empty group(s) excluded from GBA: {excluded:?}", excluded.len());
        }
        Ok(GroupEvaluation {
            gba: gba(&accuracy)?,
            worst_group: worst_group(&accuracy)?,
            accuracy,
            sizes,
            excluded,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupEvaluation {
    pub accuracy: BTreeMap<Group, f64>,
    pub sizes: BTreeMap<Group, u64>,
    pub gba: f64,
    pub worst_group: f64,
    pub excluded: Vec<Group>,
}

impl GroupEvaluation {
    /// Size-weighted accuracy, for contrast with GBA.
    pub fn overall_accuracy(&self) -> f64 {
        let (mut correct, mut total) = (0.0, 0.0);
        for (g, acc) in &self.accuracy {
            let n = self.sizes[g] as f64;
            correct += acc * n;
            total += n;
        }
        correct / total
    }
}

/// Argmax predictions scored against `(label, attribute)` groups.
pub fn evaluate_predictions(
    predictions: &[usize],
    groups: &[Group],
    classes: usize,
    attrs: usize,
) -> Result<GroupEvaluation, MetricsError> {
    if predictions.len() != groups.len() {
        return Err(MetricsError::Length {
            what: "predictions",
            expected: groups.len(),
            actual: predictions.len(),
        });
    }
    let mut tally = GroupTally::new(classes, attrs);
    for (&p, &g) in predictions.iter().zip(groups) {
        tally.record(g, p == g.0);
    }
    tally.evaluate()
}

/// Scores raw logits (no correction) by argmax.
pub fn evaluate_logits<T: Scalar>(
    logits: &Tensor<T>,
    groups: &[Group],
    attrs: usize,
) -> Result<GroupEvaluation, MetricsError> {
    let predictions: Vec<usize> = (0..logits.rows()).map(|i| argmax(logits.row(i))).collect();
    evaluate_predictions(&predictions, groups, logits.cols(), attrs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginSummary {
    pub margins: Vec<f64>,
    pub group_min: BTreeMap<Group, f64>,
    pub majority_mean: f64,
    pub minority_mean: f64,
    /// Smallest example margin within each side.
    pub majority_min: f64,
    pub minority_min: f64,
    /// `majority_mean / minority_mean`.
    pub ratio: f64,
}

impl MarginSummary {
    /// Row for the margin trajectory CSV, without the epoch column.
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.majority_mean, self.minority_mean, self.ratio, self.majority_min, self.minority_min
        )
    }
}

pub const MARGIN_CSV_HEADER: &str = "epoch,majority_mean,minority_mean,ratio,majority_min,minority_min";

/// Margins over a split, aggregated per group and per majority/minority side.
pub fn group_margins<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    groups: &[Group],
    majority: &[bool],
) -> Result<MarginSummary, MetricsError> {
    let n = logits.rows();
    for (what, len) in [("labels", labels.len()), ("groups", groups.len()), ("majority mask", majority.len())] {
        if len != n {
            return Err(MetricsError::Length {
                what,
                expected: n,
                actual: len,
            });
        }
    }
    let margins = (0..n)
        .map(|i| example_margin(logits.row(i), labels[i]))
        .collect::<Result<Vec<_>, _>>()?;
    summarize_margins(margins, groups, majority)
}

/// Aggregates precomputed margins.
pub fn summarize_margins(
    margins: Vec<f64>,
    groups: &[Group],
    majority: &[bool],
) -> Result<MarginSummary, MetricsError> {
    let mut group_min: BTreeMap<Group, f64> = BTreeMap::new();
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    let mut mins = [f64::INFINITY; 2];
    for ((&m, &g), &maj) in margins.iter().zip(groups).zip(majority) {
        let e = group_min.entry(g).or_insert(f64::INFINITY);
        *e = e.min(m);
        let side = usize::from(!maj);
        sums[side] += m;
        counts[side] += 1;
        mins[side] = mins[side].min(m);
    }
    if counts[0] == 0 {
        return Err(MetricsError::EmptySide("majority"));
    }
    if counts[1] == 0 {
        return Err(MetricsError::EmptySide("minority"));
    }
    let majority_mean = sums[0] / counts[0] as f64;
    let minority_mean = sums[1] / counts[1] as f64;
    Ok(MarginSummary {
        margins,
        group_min,
        majority_mean,
        minority_mean,
        majority_min: mins[0],
        minority_min: mins[1],
        ratio: majority_mean / minority_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn margin_examples() {
        assert_eq!(example_margin(&[3.0f64, 1.0, 0.0], 0).unwrap(), 2.0);
        assert_eq!(example_margin(&[0.0f64, 0.0], 0).unwrap(), 0.0);
        assert_eq!(example_margin(&[1.0f64, 4.0], 0).unwrap(), -3.0);
        assert_eq!(example_margin(&[1.0f64], 0), Err(MetricsError::TooFewClasses));
    }

    fn map(values: &[f64]) -> BTreeMap<Group, f64> {
        values.iter().enumerate().map(|(i, &v)| ((i / 2, i % 2), v)).collect()
    }

    #[test]
    fn gba_examples() {
        assert_eq!(gba(&map(&[1.0; 4])).unwrap(), 1.0);
        let m = map(&[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(gba(&m).unwrap(), 0.75);
        assert_eq!(worst_group(&m).unwrap(), 0.5);
        assert_eq!(gba(&BTreeMap::new()), Err(MetricsError::NoGroups));
    }

    #[test]
    fn perfect_classifier() {
        let groups = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let preds: Vec<usize> = groups.iter().map(|g| g.0).collect();
        let e = evaluate_predictions(&preds, &groups, 2, 2).unwrap();
        assert_eq!((e.gba, e.worst_group), (1.0, 1.0));
    }

    #[test]
    fn weighted_accuracy_differs_from_gba() {
        // 99 aligned samples per class all correct, 1 conflicting sample per class wrong.
        let mut groups = Vec::new();
        let mut preds = Vec::new();
        for y in 0..2 {
            for _ in 0..99 {
                groups.push((y, y));
                preds.push(y);
            }
            groups.push((y, 1 - y));
            preds.push(1 - y);
        }
        let e = evaluate_predictions(&preds, &groups, 2, 2).unwrap();
        assert!((e.overall_accuracy() - 0.99).abs() < 1e-12);
        assert_eq!(e.gba, 0.5);
        assert_eq!(e.worst_group, 0.0);
    }

    #[test]
    fn empty_groups_are_excluded() {
        let e = evaluate_predictions(&[0, 1], &[(0, 0), (1, 1)], 2, 2).unwrap();
        assert_eq!(e.excluded, vec![(0, 1), (1, 0)]);
        assert_eq!(e.accuracy.len(), 2);
        assert!(e.gba.is_finite());
    }

    #[test]
    fn margin_summary_examples() {
        let groups = [(0, 0), (0, 0), (0, 1), (0, 1)];
        let s = summarize_margins(vec![2.0, 2.0, 4.0, 4.0], &groups, &[true, true, false, false]).unwrap();
        assert_eq!(s.ratio, 0.5);
        let s = summarize_margins(vec![1.5; 4], &groups, &[true, true, false, false]).unwrap();
        assert_eq!(s.ratio, 1.0);
        let s = summarize_margins(vec![1.0, -2.0, 3.0, 5.0], &[(0, 0), (0, 0), (0, 0), (1, 0)], &[true, true, true, false])
            .unwrap();
        assert_eq!(s.group_min[&(0, 0)], -2.0);
        assert_eq!(s.majority_min, -2.0);
    }

    #[test]
    fn empty_side_is_named() {
        let err = summarize_margins(vec![1.0], &[(0, 0)], &[true]).unwrap_err();
        assert_eq!(err, MetricsError::EmptySide("minority"));
        let err = summarize_margins(vec![1.0], &[(0, 1)], &[false]).unwrap_err();
        assert_eq!(err, MetricsError::EmptySide("majority"));
    }

    #[test]
    fn margins_from_logits() {
        let logits = Tensor::new(vec![2, 2], vec![3.0f32, 1.0, 0.0, 2.0]).unwrap();
        let s = group_margins(&logits, &[0, 1], &[(0, 0), (1, 0)], &[true, false]).unwrap();
        assert_eq!(s.margins, vec![2.0, 2.0]);
        assert!(group_margins(&logits, &[0], &[(0, 0)], &[true]).is_err());
    }

    #[test]
    fn random_classifier_gba_near_chance() {
        let classes = 4;
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let groups: Vec<Group> = (0..n).map(|i| (i % classes, (i / classes) % classes)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let e = evaluate_predictions(&preds, &groups, classes, classes).unwrap();
        let p = 1.0 / classes as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((e.gba - p).abs() < 3.0 * sigma, "gba {} sigma {sigma}", e.gba);
    }

    proptest! {
        #[test]
        fn margin_shift_invariant(logits in prop::collection::vec(-5.0f64..5.0, 2..6), shift in -100.0f64..100.0) {
            let y = logits.len() - 1;
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let a = example_margin(&logits, y).unwrap();
            let b = example_margin(&shifted, y).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn gba_ignores_group_sizes(
            outcomes in prop::collection::vec((0usize..2, 0usize..2, 0usize..2), 8..60),
            dup in 0usize..4,
        ) {
            let mut groups: Vec<Group> = outcomes.iter().map(|&(y, a, _)| (y, a)).collect();
            let mut preds: Vec<usize> = outcomes.iter().map(|&(_, _, p)| p).collect();
            let base = evaluate_predictions(&preds, &groups, 2, 2).unwrap();
            let target = (dup / 2, dup % 2);
            let extra: Vec<(Group, usize)> = groups.iter().zip(&preds).filter(|(g, _)| **g == target).map(|(g, p)| (*g, *p)).collect();
            for (g, p) in extra {
                groups.push(g);
                preds.push(p);
            }
            let doubled = evaluate_predictions(&preds, &groups, 2, 2).unwrap();
            prop_assert!((base.gba - doubled.gba).abs() < 1e-12);
        }

        #[test]
        fn group_min_bounds_members(margins in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            let groups: Vec<Group> = (0..margins.len()).map(|i| (i % 2, (i / 2) % 2)).collect();
            let majority: Vec<bool> = groups.iter().map(|g| g.0 == g.1).collect();
            prop_assume!(majority.iter().any(|&m| m) && majority.iter().any(|&m| !m));
            let s = summarize_margins(margins.clone(), &groups, &majority).unwrap();
            for (m, g) in margins.iter().zip(&groups) {
                prop_assert!(s.group_min[g] <= *m);
            }
        }
    }
}
