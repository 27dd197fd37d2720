//! Attribute inference from the biased branch, group-prior estimation under
//! the four correlation topologies, and Group MixUp.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::numerics::argmax;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DebiasError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("posterior has {actual} entries, topology expects {expected}")]
    Width { expected: usize, actual: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("moving-average momentum must lie in (0, 1), got {0}")]
    BadMomentum(f64),
    #[error("ramp-up length must be at least one epoch")]
    BadRampup,
}

/// Structural relation between class labels and spurious attribute values.
///
/// Every kind is described internally by the same two maps: labels are first
/// merged into clusters, then each cluster is split over one or more
/// attribute values (consecutive indices).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CorrelationTopology {
    /// Label `j` is correlated with attribute `j`.
    OneToOne { classes: usize },
    /// Several labels share one attribute; `label_to_attr` is a surjection.
    ManyToOne { label_to_attr: Vec<usize> },
    /// Label `j` is correlated with `multiplicity[j]` consecutive attributes.
    OneToMany { multiplicity: Vec<usize> },
    /// Labels merge into clusters, each cluster splits over attributes.
    ManyToMany {
        label_to_cluster: Vec<usize>,
        multiplicity: Vec<usize>,
    },
}

impl fmt::Display for CorrelationTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OneToOne { classes } => write!(f, "one-to-one({classes})"),
            Self::ManyToOne { label_to_attr } => write!(f, "many-to-one{label_to_attr:?}"),
            Self::OneToMany { multiplicity } => write!(f, "one-to-many{multiplicity:?}"),
            Self::ManyToMany {
                label_to_cluster,
                multiplicity,
            } => write!(f, "many-to-many{label_to_cluster:?}x{multiplicity:?}"),
        }
    }
}

fn check_surjection(map: &[usize], what: &str) -> Result<usize, DebiasError> {
    if map.is_empty() {
        return Err(DebiasError::InvalidTopology(format!("{what}: no labels")));
    }
    let targets = map.iter().max().map_or(0, |m| m + 1);
    let mut hit = vec![false; targets];
    for &t in map {
        hit[t] = true;
    }
    if let Some(missing) = hit.iter().position(|h| !h) {
        return Err(DebiasError::InvalidTopology(format!(
            "{what}: value {missing} has no label"
        )));
    }
    Ok(targets)
}

impl CorrelationTopology {
    pub fn one_to_one(classes: usize) -> Result<Self, DebiasError> {
        let t = Self::OneToOne { classes };
        t.validate()?;
        Ok(t)
    }

    pub fn many_to_one(label_to_attr: Vec<usize>) -> Result<Self, DebiasError> {
        let t = Self::ManyToOne { label_to_attr };
        t.validate()?;
        Ok(t)
    }

    pub fn one_to_many(multiplicity: Vec<usize>) -> Result<Self, DebiasError> {
        let t = Self::OneToMany { multiplicity };
        t.validate()?;
        Ok(t)
    }

    pub fn many_to_many(label_to_cluster: Vec<usize>, multiplicity: Vec<usize>) -> Result<Self, DebiasError> {
        let t = Self::ManyToMany {
            label_to_cluster,
            multiplicity,
        };
        t.validate()?;
        Ok(t)
    }

    /// Labels `0..=merged` share attribute 0, label `j > merged` maps to `j - merged`.
    pub fn merged_leading(classes: usize, merged: usize) -> Result<Self, DebiasError> {
        if merged == 0 || merged >= classes {
            return Err(DebiasError::InvalidTopology(format!(
                "cannot merge {} leading labels of {classes}",
                merged + 1
            )));
        }
        Self::many_to_one((0..classes).map(|j| j.saturating_sub(merged)).collect())
    }

    /// Label 0 correlates with `extra + 1` attributes, every other label with one.
    pub fn split_leading(classes: usize, extra: usize) -> Result<Self, DebiasError> {
        if extra == 0 || classes < 2 {
            return Err(DebiasError::InvalidTopology(format!(
                "cannot split label 0 into {} attributes",
                extra + 1
            )));
        }
        let mut multiplicity = vec![1; classes];
        multiplicity[0] = extra + 1;
        Self::one_to_many(multiplicity)
    }

    pub fn validate(&self) -> Result<(), DebiasError> {
        match self {
            Self::OneToOne { classes } => {
                if *classes < 2 {
                    return Err(DebiasError::InvalidTopology("need at least two classes".into()));
                }
            }
            Self::ManyToOne { label_to_attr } => {
                check_surjection(label_to_attr, "many-to-one")?;
                if label_to_attr.len() < 2 {
                    return Err(DebiasError::InvalidTopology("need at least two classes".into()));
                }
            }
            Self::OneToMany { multiplicity } => {
                if multiplicity.len() < 2 || multiplicity.contains(&0) {
                    return Err(DebiasError::InvalidTopology(
                        "one-to-many needs two or more labels, each with at least one attribute".into(),
                    ));
                }
            }
            Self::ManyToMany {
                label_to_cluster,
                multiplicity,
            } => {
                let clusters = check_surjection(label_to_cluster, "many-to-many")?;
                if clusters != multiplicity.len() || multiplicity.contains(&0) {
                    return Err(DebiasError::InvalidTopology(format!(
                        "{clusters} clusters but {} multiplicities",
                        multiplicity.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of class labels `L`.
    pub fn classes(&self) -> usize {
        match self {
            Self::OneToOne { classes } => *classes,
            Self::ManyToOne { label_to_attr } => label_to_attr.len(),
            Self::OneToMany { multiplicity } => multiplicity.len(),
            Self::ManyToMany { label_to_cluster, .. } => label_to_cluster.len(),
        }
    }

    /// Number of attribute values `K`.
    pub fn attrs(&self) -> usize {
        self.multiplicities().iter().sum()
    }

    /// Stable numeric code used by the dataset container.
    pub fn code(&self) -> u32 {
        match self {
            Self::OneToOne { .. } => 0,
            Self::ManyToOne { .. } => 1,
            Self::OneToMany { .. } => 2,
            Self::ManyToMany { .. } => 3,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::OneToOne { .. } => "one-to-one",
            Self::ManyToOne { .. } => "many-to-one",
            Self::OneToMany { .. } => "one-to-many",
            Self::ManyToMany { .. } => "many-to-many",
        }
    }

    fn label_cluster(&self, label: usize) -> usize {
        match self {
            Self::OneToOne { .. } | Self::OneToMany { .. } => label,
            Self::ManyToOne { label_to_attr } => label_to_attr[label],
            Self::ManyToMany { label_to_cluster, .. } => label_to_cluster[label],
        }
    }

    fn multiplicities(&self) -> Vec<usize> {
        match self {
            Self::OneToOne { classes } => vec![1; *classes],
            Self::ManyToOne { label_to_attr } => {
                vec![1; label_to_attr.iter().max().map_or(0, |m| m + 1)]
            }
            Self::OneToMany { multiplicity } | Self::ManyToMany { multiplicity, .. } => multiplicity.clone(),
        }
    }

    /// Number of label clusters (after merging, before splitting).
    pub fn clusters(&self) -> usize {
        self.multiplicities().len()
    }

    /// Cluster that owns `label`.
    pub fn cluster_of_label(&self, label: usize) -> usize {
        self.label_cluster(label)
    }

    /// Attribute range `[start, start + multiplicity)` owned by a cluster.
    pub fn cluster_attrs(&self, cluster: usize) -> std::ops::Range<usize> {
        let m = self.multiplicities();
        let start: usize = m[..cluster].iter().sum();
        start..start + m[cluster]
    }

    /// Attributes spuriously correlated with `label`.
    pub fn aligned_attrs(&self, label: usize) -> std::ops::Range<usize> {
        self.cluster_attrs(self.label_cluster(label))
    }

    pub fn is_aligned(&self, label: usize, attr: usize) -> bool {
        self.aligned_attrs(label).contains(&attr)
    }

    /// Clusters that are split over more than one attribute.
    pub fn split_clusters(&self) -> Vec<usize> {
        self.multiplicities()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 1)
            .map(|(c, _)| c)
            .collect()
    }

    /// `P(a | x)` from the biased branch's class probabilities, equal split weights.
    pub fn attribute_posterior<T: Scalar>(&self, erm_probs: &[T]) -> Result<Vec<T>, DebiasError> {
        self.attribute_posterior_weighted(erm_probs, &SplitWeights::equal())
    }

    /// `P(a | x)`: merged labels contribute the sum of their probabilities;
    /// a split cluster's mass is shared by `w_j / Σ w`.
    pub fn attribute_posterior_weighted<T: Scalar>(
        &self,
        erm_probs: &[T],
        weights: &SplitWeights<T>,
    ) -> Result<Vec<T>, DebiasError> {
        let classes = self.classes();
        if erm_probs.len() != classes {
            return Err(DebiasError::Width {
                expected: classes,
                actual: erm_probs.len(),
            });
        }
        let multiplicity = self.multiplicities();
        let mut mass = vec![T::zero(); multiplicity.len()];
        for (label, &p) in erm_probs.iter().enumerate() {
            mass[self.label_cluster(label)] += p;
        }
        let mut out = Vec::with_capacity(self.attrs());
        for (cluster, (&m, &cluster_mass)) in multiplicity.iter().zip(&mass).enumerate() {
            match weights.for_cluster(cluster).filter(|w| w.len() == m) {
                Some(w) => {
                    let total: T = w.iter().copied().sum();
                    if total > T::zero() {
                        out.extend(w.iter().map(|&wj| wj / total * cluster_mass));
                        continue;
                    }
                    let share = T::one() / T::of(m as f64);
                    out.extend(std::iter::repeat_n(share * cluster_mass, m));
                }
                None => {
                    let share = T::one() / T::of(m as f64);
                    out.extend(std::iter::repeat_n(share * cluster_mass, m));
                }
            }
        }
        Ok(out)
    }
}

/// Per-cluster splitting weights for one sample; missing entries mean equal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitWeights<T> {
    per_cluster: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> SplitWeights<T> {
    pub fn equal() -> Self {
        Self {
            per_cluster: Vec::new(),
        }
    }

    pub fn set(&mut self, cluster: usize, weights: Vec<T>) {
        if self.per_cluster.len() <= cluster {
            self.per_cluster.resize(cluster + 1, None);
        }
        self.per_cluster[cluster] = Some(weights);
    }

    pub fn for_cluster(&self, cluster: usize) -> Option<&[T]> {
        self.per_cluster.get(cluster).and_then(|w| w.as_deref())
    }
}

/// Online soft k-means over biased-branch probability vectors, one model per
/// split cluster; responsibilities serve as splitting weights.
#[derive(Clone, Debug)]
pub struct ClusterSplitter {
    topology: CorrelationTopology,
    sharpness: f64,
    /// Per cluster: centroids (possibly fewer than the multiplicity while warming up) and counts.
    centroids: Vec<Vec<Vec<f64>>>,
    counts: Vec<Vec<u64>>,
}

/// Responsibility sharpness `β` in `exp(-β ||p - μ||²)`.
pub const SPLITTER_SHARPNESS: f64 = 50.0;

impl ClusterSplitter {
    pub fn new(topology: &CorrelationTopology) -> Self {
        let clusters = topology.clusters();
        Self {
            topology: topology.clone(),
            sharpness: SPLITTER_SHARPNESS,
            centroids: vec![Vec::new(); clusters],
            counts: vec![Vec::new(); clusters],
        }
    }

    /// Splitting weights for a sample; clusters still warming up use equal weights.
    pub fn weights<T: Scalar>(&self, erm_probs: &[T]) -> SplitWeights<T> {
        let mut out = SplitWeights::equal();
        for cluster in self.topology.split_clusters() {
            let m = self.topology.cluster_attrs(cluster).len();
            let cents = &self.centroids[cluster];
            if cents.len() < m {
                continue;
            }
            let d2: Vec<f64> = cents.iter().map(|c| sq_dist(c, erm_probs)).collect();
            let best = d2.iter().cloned().fold(f64::INFINITY, f64::min);
            let raw: Vec<f64> = d2.iter().map(|d| (-self.sharpness * (d - best)).exp()).collect();
            let total: f64 = raw.iter().sum();
            out.set(cluster, raw.iter().map(|r| T::of(r / total)).collect());
        }
        out
    }

    /// Feeds one labeled sample into its cluster's running centroids.
    pub fn observe<T: Scalar>(&mut self, label: usize, erm_probs: &[T]) {
        let cluster = self.topology.cluster_of_label(label);
        let m = self.topology.cluster_attrs(cluster).len();
        if m < 2 {
            return;
        }
        let p: Vec<f64> = erm_probs.iter().map(|v| v.as_f64()).collect();
        let cents = &mut self.centroids[cluster];
        let counts = &mut self.counts[cluster];
        if cents.len() < m {
            if cents.iter().all(|c| sq_dist(c, erm_probs) > 1e-12) {
                cents.push(p);
                counts.push(1);
            }
            return;
        }
        let nearest = argmax(&cents.iter().map(|c| -sq_dist(c, erm_probs)).collect::<Vec<_>>());
        counts[nearest] += 1;
        let rate = 1.0 / counts[nearest] as f64;
        for (c, v) in cents[nearest].iter_mut().zip(&p) {
            *c += rate * (v - *c);
        }
    }
}

fn sq_dist<T: Scalar>(centroid: &[f64], p: &[T]) -> f64 {
    centroid
        .iter()
        .zip(p)
        .map(|(c, v)| (c - v.as_f64()).powi(2))
        .sum()
}

/// `a_x = argmax_a P(a | x)`, smallest index on ties.
pub fn infer_attribute<T: Scalar>(
    erm_probs: &[T],
    topology: &CorrelationTopology,
) -> Result<usize, DebiasError> {
    Ok(argmax(&topology.attribute_posterior(erm_probs)?))
}

/// True when the biased branch's top class disagrees with the label.
pub fn is_minority<T: Scalar>(erm_probs: &[T], y: usize) -> bool {
    argmax(erm_probs) != y
}

/// How the group-prior table is refreshed from batch posteriors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PriorStrategy {
    /// Accumulate over an epoch, swap in at epoch end.
    DatasetAvg,
    /// Replace with each batch mean.
    BatchAvg,
    /// `table = α·table + (1-α)·batch_mean`.
    MovingAvg,
    /// Per-sample update of entry `(y, a_x)` only; does not keep the table normalized.
    PerSampleMovingAvg,
}

impl PriorStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DatasetAvg => "dataset",
            Self::BatchAvg => "batch",
            Self::MovingAvg => "moving",
            Self::PerSampleMovingAvg => "moving-sample",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dataset" => Some(Self::DatasetAvg),
            "batch" => Some(Self::BatchAvg),
            "moving" => Some(Self::MovingAvg),
            "moving-sample" => Some(Self::PerSampleMovingAvg),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorUpdate {
    Applied,
    /// Accumulated; the table changes at the next [`GroupPrior::end_epoch`].
    Deferred,
    Frozen,
    SkippedEmpty,
}

/// Estimated joint `P̂(y, a)` as an `L × K` row-major table.
#[derive(Clone, Debug)]
pub struct GroupPrior<T> {
    table: Vec<T>,
    classes: usize,
    attrs: usize,
    strategy: PriorStrategy,
    alpha: T,
    topology: CorrelationTopology,
    frozen: bool,
    epoch_sum: Vec<T>,
    epoch_count: usize,
    skipped_empty: usize,
}

pub const DEFAULT_MOMENTUM: f64 = 0.5;

impl<T: Scalar> GroupPrior<T> {
    /// Uniform `1/(L·K)` initialization.
    pub fn new(topology: CorrelationTopology, strategy: PriorStrategy, alpha: f64) -> Result<Self, DebiasError> {
        topology.validate()?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(DebiasError::BadMomentum(alpha));
        }
        let (classes, attrs) = (topology.classes(), topology.attrs());
        let uniform = T::one() / T::of((classes * attrs) as f64);
        Ok(Self {
            table: vec![uniform; classes * attrs],
            classes,
            attrs,
            strategy,
            alpha: T::of(alpha),
            topology,
            frozen: false,
            epoch_sum: vec![T::zero(); classes * attrs],
            epoch_count: 0,
            skipped_empty: 0,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn attrs(&self) -> usize {
        self.attrs
    }

    pub fn strategy(&self) -> PriorStrategy {
        self.strategy
    }

    pub fn topology(&self) -> &CorrelationTopology {
        &self.topology
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn entry(&self, y: usize, a: usize) -> T {
        self.table[y * self.attrs + a]
    }

    /// `P̂(c, a)` for every class `c`.
    pub fn column(&self, a: usize) -> Vec<T> {
        (0..self.classes).map(|c| self.entry(c, a)).collect()
    }

    pub fn total(&self) -> T {
        self.table.iter().copied().sum()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn skipped_empty_batches(&self) -> usize {
        self.skipped_empty
    }

    /// Mean over the batch of the per-sample contributions, where sample
    /// `(y, P(a|x))` contributes `P(a|x)` to row `y` and zero elsewhere.
    pub fn batch_mean(&self, batch: &[(usize, Vec<T>)]) -> Result<Vec<T>, DebiasError> {
        let mut mean = vec![T::zero(); self.table.len()];
        for (y, posterior) in batch {
            if *y >= self.classes {
                return Err(DebiasError::Label {
                    label: *y,
                    classes: self.classes,
                });
            }
            if posterior.len() != self.attrs {
                return Err(DebiasError::Width {
                    expected: self.attrs,
                    actual: posterior.len(),
                });
            }
            for (slot, &p) in mean[y * self.attrs..(y + 1) * self.attrs].iter_mut().zip(posterior) {
                *slot += p;
            }
        }
        let n = T::of(batch.len() as f64);
        mean.iter_mut().for_each(|v| *v /= n);
        Ok(mean)
    }

    /// Updates the table from `(label, attribute posterior)` pairs.
    pub fn update(&mut self, batch: &[(usize, Vec<T>)]) -> Result<PriorUpdate, DebiasError> {
        if batch.is_empty() {
            self.skipped_empty += 1;
            log::warn!("group prior update skipped: empty batch");
            return Ok(PriorUpdate::SkippedEmpty);
        }
        let mean = self.batch_mean(batch)?;
        if self.frozen {
            return Ok(PriorUpdate::Frozen);
        }
        let one = T::one();
        match self.strategy {
            PriorStrategy::BatchAvg => {
                self.table = mean;
            }
            PriorStrategy::MovingAvg => {
                let a = self.alpha;
                for (t, m) in self.table.iter_mut().zip(mean) {
                    *t = a * *t + (one - a) * m;
                }
            }
            PriorStrategy::DatasetAvg => {
                let n = T::of(batch.len() as f64);
                for (s, m) in self.epoch_sum.iter_mut().zip(mean) {
                    *s += m * n;
                }
                self.epoch_count += batch.len();
                return Ok(PriorUpdate::Deferred);
            }
            PriorStrategy::PerSampleMovingAvg => {
                let a = self.alpha;
                for (y, posterior) in batch {
                    let attr = argmax(posterior);
                    let slot = &mut self.table[y * self.attrs + attr];
                    *slot = a * *slot + (one - a) * posterior[attr];
                }
            }
        }
        Ok(PriorUpdate::Applied)
    }

    /// Convenience: maps class probabilities through the topology (equal split weights).
    pub fn update_from_erm(&mut self, batch: &[(Vec<T>, usize)]) -> Result<PriorUpdate, DebiasError> {
        let posteriors = batch
            .iter()
            .map(|(p, y)| Ok((*y, self.topology.attribute_posterior(p)?)))
            .collect::<Result<Vec<_>, DebiasError>>()?;
        self.update(&posteriors)
    }

    /// Swaps in the accumulated epoch mean for [`PriorStrategy::DatasetAvg`].
    pub fn end_epoch(&mut self) {
        if self.strategy != PriorStrategy::DatasetAvg || self.epoch_count == 0 {
            return;
        }
        if !self.frozen {
            let n = T::of(self.epoch_count as f64);
            for (t, s) in self.table.iter_mut().zip(&self.epoch_sum) {
                *t = *s / n;
            }
        }
        self.epoch_sum.iter_mut().for_each(|v| *v = T::zero());
        self.epoch_count = 0;
    }

    /// CSV dump with header `y,a,p_hat`, one row per group.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,a,p_hat\n");
        for y in 0..self.classes {
            for a in 0..self.attrs {
                out.push_str(&format!("{y},{a},{}\n", self.entry(y, a).as_f64()));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRange {
    /// `λ ~ U(1 - 2τ, 1 - τ)` with the ramp-up `τ`.
    Ramp,
    /// `λ ~ U(0.5, 1)` regardless of epoch.
    Static,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixupConfig {
    pub enabled: bool,
    pub rampup_epochs: usize,
    pub lambda_range: LambdaRange,
}

impl MixupConfig {
    pub fn new(enabled: bool, rampup_epochs: usize) -> Result<Self, DebiasError> {
        if rampup_epochs == 0 {
            return Err(DebiasError::BadRampup);
        }
        Ok(Self {
            enabled,
            rampup_epochs,
            lambda_range: LambdaRange::Ramp,
        })
    }

    /// Draws the per-batch mixing coefficient for `epoch`.
    pub fn draw_lambda<R: Rng>(&self, epoch: usize, rng: &mut R) -> f64 {
        let (lo, hi) = match self.lambda_range {
            LambdaRange::Ramp => {
                let tau = mixup_ramp(epoch, self.rampup_epochs);
                (1.0 - 2.0 * tau, 1.0 - tau)
            }
            LambdaRange::Static => (0.5, 1.0),
        };
        lo + (hi - lo) * rng.random::<f64>()
    }
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rampup_epochs: 2,
            lambda_range: LambdaRange::Ramp,
        }
    }
}

/// Sigmoid-shaped ramp `0.5·exp(-5(1 - min(epoch/T, 1))²)`.
pub fn mixup_ramp(epoch: usize, rampup_epochs: usize) -> f64 {
    let t = (epoch as f64 / rampup_epochs.max(1) as f64).min(1.0);
    0.5 * (-5.0 * (1.0 - t).powi(2)).exp()
}

/// One sample offered to [`group_mixup`], with its inferred attribute.
#[derive(Clone, Copy, Debug)]
pub struct MixSample<'a, T> {
    pub x: &'a [T],
    pub y: usize,
    pub attr: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedSample<T> {
    pub x: Vec<T>,
    pub y: usize,
    /// `λ·P̂(·, a_x) + (1-λ)·P̂(·, a_partner)`.
    pub prior_row: Vec<T>,
    /// Index into the pool, `None` when the sample passed through unmixed.
    pub partner: Option<usize>,
    pub lambda: T,
}

/// Mixes every sample with a same-label partner drawn uniformly from `pool`.
///
/// Samples whose label has no pool member pass through with `λ = 1`.
pub fn group_mixup<T: Scalar, R: Rng>(
    batch: &[MixSample<'_, T>],
    pool: &[MixSample<'_, T>],
    prior: &GroupPrior<T>,
    lambda: T,
    rng: &mut R,
) -> Vec<MixedSample<T>> {
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); prior.classes()];
    for (i, s) in pool.iter().enumerate() {
        if s.y < by_label.len() {
            by_label[s.y].push(i);
        }
    }
    batch
        .iter()
        .map(|s| {
            let own = prior.column(s.attr);
            let candidates = by_label.get(s.y).map(Vec::as_slice).unwrap_or(&[]);
            if candidates.is_empty() {
                return MixedSample {
                    x: s.x.to_vec(),
                    y: s.y,
                    prior_row: own,
                    partner: None,
                    lambda: T::one(),
                };
            }
            let pick = candidates[rng.random_range(0..candidates.len())];
            let partner = &pool[pick];
            let rest = T::one() - lambda;
            let x = s
                .x
                .iter()
                .zip(partner.x)
                .map(|(&a, &b)| lambda * a + rest * b)
                .collect();
            let other = prior.column(partner.attr);
            let prior_row = own
                .iter()
                .zip(&other)
                .map(|(&a, &b)| lambda * a + rest * b)
                .collect();
            MixedSample {
                x,
                y: s.y,
                prior_row,
                partner: Some(pick),
                lambda,
            }
        })
        .collect()
}
