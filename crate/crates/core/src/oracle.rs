//! Exact checks on fully enumerable discrete distributions: the GBA-optimal
//! decision rule, brute-force GBA maximization, and surrogate-risk minimizers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::numerics::{argmax, softmax};

pub const MAX_DOMAIN: usize = 12;
pub const ENUMERATION_LIMIT: u64 = 1_000_000;
/// Two classifiers whose GBA differs by less than this are equally optimal.
pub const GBA_TOLERANCE: f64 = 1e-9;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_DESCENT_STEPS: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("domain size {0} outside 1..={MAX_DOMAIN}")]
    Domain(usize),
    #[error("need at least two classes and one attribute, got L={classes}, K={attrs}")]
    Shape { classes: usize, attrs: usize },
    #[error("joint table has {actual} entries, expected {expected}")]
    TableSize { expected: usize, actual: usize },
    #[error("joint table entry {index} is negative or not finite")]
    BadEntry { index: usize },
    #[error("joint table sums to {0}, not 1")]
    Normalization(f64),
    #[error("{count} classifiers exceed the enumeration limit of {ENUMERATION_LIMIT}; use a smaller domain or fewer classes")]
    TooLarge { count: u64 },
    #[error("group ({y}, {a}) has zero prior but positive posterior")]
    IllPosed { y: usize, a: usize },
    #[error("P(a|x) is not concentrated on one attribute at x={0}")]
    NotOneHot(usize),
    #[error("Dirichlet concentration must be positive, got {0}")]
    Concentration(f64),
}

/// Joint distribution `P(x, y, a)` over a small finite domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteInstance {
    domain: usize,
    classes: usize,
    attrs: usize,
    joint: Vec<f64>,
}

impl DiscreteInstance {
    /// `joint` is indexed `(x·L + y)·K + a`.
    pub fn new(domain: usize, classes: usize, attrs: usize, joint: Vec<f64>) -> Result<Self, OracleError> {
        if domain == 0 || domain > MAX_DOMAIN {
            return Err(OracleError::Domain(domain));
        }
        if classes < 2 || attrs == 0 {
            return Err(OracleError::Shape { classes, attrs });
        }
        let expected = domain * classes * attrs;
        if joint.len() != expected {
            return Err(OracleError::TableSize {
                expected,
                actual: joint.len(),
            });
        }
        if let Some(index) = joint.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(OracleError::BadEntry { index });
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::Normalization(total));
        }
        Ok(Self {
            domain,
            classes,
            attrs,
            joint,
        })
    }

    /// Symmetric Dirichlet draw over all cells.
    pub fn random(seed: u64, domain: usize, classes: usize, attrs: usize, concentration: f64) -> Result<Self, OracleError> {
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(OracleError::Concentration(concentration));
        }
        let gamma = Gamma::new(concentration, 1.0).map_err(|_| OracleError::Concentration(concentration))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = domain * classes * attrs;
        let mut joint: Vec<f64> = (0..cells).map(|_| gamma.sample(&mut rng)).collect();
        normalize(&mut joint);
        Self::new(domain, classes, attrs, joint)
    }

    /// Dirichlet draw projected so each `x` carries a single attribute.
    pub fn random_one_hot(
        seed: u64,
        domain: usize,
        classes: usize,
        attrs: usize,
        concentration: f64,
    ) -> Result<Self, OracleError> {
        Ok(Self::random(seed, domain, classes, attrs, concentration)?.project_one_hot())
    }

    /// Keeps only the heaviest attribute at every `x`, then renormalizes.
    pub fn project_one_hot(&self) -> Self {
        let mut joint = self.joint.clone();
        for x in 0..self.domain {
            let mass: Vec<f64> = (0..self.attrs)
                .map(|a| (0..self.classes).map(|y| self.p(x, y, a)).sum())
                .collect();
            let keep = argmax(&mass);
            for y in 0..self.classes {
                for a in 0..self.attrs {
                    if a != keep {
                        joint[self.index(x, y, a)] = 0.0;
                    }
                }
            }
        }
        normalize(&mut joint);
        Self {
            joint,
            ..self.clone()
        }
    }

    /// Four points, two classes, two attributes, one attribute per point.
    /// At `x = 1` the plain posterior picks class 0 while the group-balanced
    /// rule picks class 1.
    pub fn skewed_example() -> Self {
        let mut joint = vec![0.0; 16];
        let mut set = |x: usize, y: usize, a: usize, v: f64| joint[(x * 2 + y) * 2 + a] = v;
        set(0, 0, 0, 0.45);
        set(0, 1, 0, 0.05);
        set(1, 0, 0, 0.04);
        set(1, 1, 0, 0.01);
        set(2, 0, 1, 0.03);
        set(2, 1, 1, 0.399);
        set(3, 0, 1, 0.02);
        set(3, 1, 1, 0.001);
        Self::new(4, 2, 2, joint).expect("constructed table is valid")
    }

    /// Every group has equal prior and the same conditional distribution over `x`.
    pub fn balanced(seed: u64, domain: usize, classes: usize, attrs: usize) -> Result<Self, OracleError> {
        let base = Self::random(seed, domain, classes, attrs, 1.0)?;
        let mut joint = vec![0.0; base.joint.len()];
        let groups = (classes * attrs) as f64;
        for y in 0..classes {
            for a in 0..attrs {
                let prior = base.group_prior(y, a);
                for x in 0..domain {
                    joint[base.index(x, y, a)] = base.p(x, y, a) / prior / groups;
                }
            }
        }
        normalize(&mut joint);
        Self::new(domain, classes, attrs, joint)
    }

    /// Same distribution with attribute indices permuted (`a ↦ perm[a]`).
    pub fn relabel_attrs(&self, perm: &[usize]) -> Self {
        let mut joint = vec![0.0; self.joint.len()];
        for x in 0..self.domain {
            for y in 0..self.classes {
                for a in 0..self.attrs {
                    joint[self.index(x, y, perm[a])] = self.p(x, y, a);
                }
            }
        }
        Self {
            joint,
            ..self.clone()
        }
    }

    /// Rescales all mass of group `(y, a)` by `factor` and renormalizes.
    pub fn rescale_group(&self, y: usize, a: usize, factor: f64) -> Self {
        let mut joint = self.joint.clone();
        for x in 0..self.domain {
            joint[self.index(x, y, a)] *= factor;
        }
        normalize(&mut joint);
        Self {
            joint,
            ..self.clone()
        }
    }

    fn index(&self, x: usize, y: usize, a: usize) -> usize {
        (x * self.classes + y) * self.attrs + a
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn attrs(&self) -> usize {
        self.attrs
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn p(&self, x: usize, y: usize, a: usize) -> f64 {
        self.joint[self.index(x, y, a)]
    }

    pub fn px(&self, x: usize) -> f64 {
        (0..self.classes)
            .flat_map(|y| (0..self.attrs).map(move |a| (y, a)))
            .map(|(y, a)| self.p(x, y, a))
            .sum()
    }

    /// `P(y, a)`.
    pub fn group_prior(&self, y: usize, a: usize) -> f64 {
        (0..self.domain).map(|x| self.p(x, y, a)).sum()
    }

    /// `P(y, a | x)`; zero when `P(x) = 0`.
    pub fn group_posterior(&self, x: usize, y: usize, a: usize) -> f64 {
        let px = self.px(x);
        if px > 0.0 {
            self.p(x, y, a) / px
        } else {
            0.0
        }
    }

    /// `P(a | x)`.
    pub fn attr_posterior(&self, x: usize, a: usize) -> f64 {
        (0..self.classes).map(|y| self.group_posterior(x, y, a)).sum()
    }

    /// `P(y | x)`.
    pub fn class_posterior(&self, x: usize, y: usize) -> f64 {
        (0..self.attrs).map(|a| self.group_posterior(x, y, a)).sum()
    }

    /// The attribute carried by `x` under the one-hot condition.
    pub fn single_attr(&self, x: usize) -> Option<usize> {
        let support: Vec<usize> = (0..self.attrs).filter(|&a| self.attr_posterior(x, a) > 0.0).collect();
        match support.as_slice() {
            [a] => Some(*a),
            [] => Some(0),
            _ => None,
        }
    }

    pub fn is_one_hot(&self) -> bool {
        (0..self.domain).all(|x| self.single_attr(x).is_some())
    }

    fn supported_groups(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for y in 0..self.classes {
            for a in 0..self.attrs {
                let prior = self.group_prior(y, a);
                if prior > 0.0 {
                    out.push((y, a, prior));
                }
            }
        }
        out
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|e| *e /= total);
    // Absorb the rounding residue so the table sums to one tightly.
    let residue = 1.0 - v.iter().sum::<f64>();
    if let Some(max) = v.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residue;
    }
}

/// `argmax_y Σ_a P(y, a | x) / P(y, a)`, smallest index on ties.
pub fn bayes_rule_prediction(instance: &DiscreteInstance, x: usize) -> Result<usize, OracleError> {
    let mut scores = vec![0.0; instance.classes];
    for (y, score) in scores.iter_mut().enumerate() {
        for a in 0..instance.attrs {
            let post = instance.group_posterior(x, y, a);
            let prior = instance.group_prior(y, a);
            if prior == 0.0 {
                if post > 0.0 {
                    return Err(OracleError::IllPosed { y, a });
                }
                continue;
            }
            *score += post / prior;
        }
    }
    Ok(argmax(&scores))
}

/// `argmax_y P(y | x)`.
pub fn plain_bayes_prediction(instance: &DiscreteInstance, x: usize) -> usize {
    let post: Vec<f64> = (0..instance.classes).map(|y| instance.class_posterior(x, y)).collect();
    argmax(&post)
}

/// Exact GBA of a deterministic classifier `x ↦ decisions[x]`, averaged over
/// groups with positive prior.
pub fn classifier_gba(instance: &DiscreteInstance, decisions: &[usize]) -> f64 {
    let groups = instance.supported_groups();
    let total: f64 = groups
        .iter()
        .map(|&(y, a, prior)| {
            let hit: f64 = (0..instance.domain)
                .filter(|&x| decisions[x] == y)
                .map(|x| instance.p(x, y, a))
                .sum();
            hit / prior
        })
        .sum();
    total / groups.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceResult {
    /// Every classifier within [`GBA_TOLERANCE`] of the maximum.
    pub maximizers: Vec<Vec<usize>>,
    pub max_gba: f64,
    pub enumerated: u64,
}

impl BruteForceResult {
    pub fn contains(&self, decisions: &[usize]) -> bool {
        self.maximizers.iter().any(|m| m.as_slice() == decisions)
    }
}

/// Enumerates all `L^|X|` deterministic classifiers.
pub fn brute_force_gba_max(instance: &DiscreteInstance) -> Result<BruteForceResult, OracleError> {
    let count = (instance.classes as u64)
        .checked_pow(instance.domain as u32)
        .filter(|&c| c <= ENUMERATION_LIMIT)
        .ok_or(OracleError::TooLarge {
            count: (instance.classes as f64).powi(instance.domain as i32) as u64,
        })?;
    let mut scored = Vec::with_capacity(count as usize);
    let mut decisions = vec![0usize; instance.domain];
    for _ in 0..count {
        scored.push((classifier_gba(instance, &decisions), decisions.clone()));
        for d in decisions.iter_mut() {
            *d += 1;
            if *d < instance.classes {
                break;
            }
            *d = 0;
        }
    }
    let max_gba = scored.iter().map(|(g, _)| *g).fold(f64::NEG_INFINITY, f64::max);
    let maximizers = scored
        .into_iter()
        .filter(|(g, _)| max_gba - g <= GBA_TOLERANCE)
        .map(|(_, d)| d)
        .collect();
    Ok(BruteForceResult {
        maximizers,
        max_gba,
        enumerated: count,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SurrogateMode {
    CrossEntropy,
    LogitCorrected,
    ReweightedCrossEntropy,
}

impl SurrogateMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CrossEntropy => "ce",
            Self::LogitCorrected => "lc",
            Self::ReweightedCrossEntropy => "rwce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ce" => Some(Self::CrossEntropy),
            "lc" => Some(Self::LogitCorrected),
            "rwce" => Some(Self::ReweightedCrossEntropy),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub mode: SurrogateMode,
    /// Argmax of the minimizing raw logits at every `x`.
    pub decisions: Vec<usize>,
    pub matched: bool,
    pub max_gba: f64,
    pub achieved_gba: f64,
    pub converged: bool,
    pub gradient_norm: f64,
    pub steps: usize,
}

/// Minimizes the population surrogate risk over free per-`x` logits and
/// compares the resulting decisions with the brute-force GBA maximizers.
///
/// The corrected mode uses the instance's true group priors and requires
/// the one-hot condition.
pub fn surrogate_consistency_check(
    instance: &DiscreteInstance,
    mode: SurrogateMode,
) -> Result<ConsistencyReport, OracleError> {
    let (l, k) = (instance.classes, instance.attrs);
    if mode == SurrogateMode::LogitCorrected {
        if let Some(x) = (0..instance.domain).find(|&x| instance.single_attr(x).is_none()) {
            return Err(OracleError::NotOneHot(x));
        }
    }
    let prior: Vec<f64> = (0..l * k).map(|i| instance.group_prior(i / k, i % k)).collect();
    let floor = crate::losses::PRIOR_FLOOR;

    // Per x: class targets m_y and, for the corrected mode, logit offsets.
    struct Site {
        targets: Vec<f64>,
        offsets: Vec<f64>,
    }
    let mut sites = Vec::with_capacity(instance.domain);
    for x in 0..instance.domain {
        let mut targets = vec![0.0; l];
        for (y, t) in targets.iter_mut().enumerate() {
            for a in 0..k {
                let w = match mode {
                    SurrogateMode::ReweightedCrossEntropy => {
                        let p = prior[y * k + a];
                        if p > 0.0 {
                            1.0 / p
                        } else {
                            0.0
                        }
                    }
                    _ => 1.0,
                };
                *t += instance.p(x, y, a) * w;
            }
        }
        let total: f64 = targets.iter().sum();
        if total > 0.0 {
            targets.iter_mut().for_each(|t| *t /= total);
        }
        let offsets = match mode {
            SurrogateMode::LogitCorrected => {
                let a = instance.single_attr(x).unwrap_or(0);
                (0..l).map(|c| prior[c * k + a].max(floor).ln()).collect()
            }
            _ => vec![0.0; l],
        };
        sites.push(Site { targets, offsets });
    }

    let mut logits = vec![vec![0.0; l]; instance.domain];
    let mut shifted = vec![0.0; l];
    let mut gradient_norm = f64::INFINITY;
    let mut steps = 0;
    while steps < MAX_DESCENT_STEPS {
        let mut sq = 0.0;
        for (z, site) in logits.iter_mut().zip(&sites) {
            if site.targets.iter().all(|&t| t == 0.0) {
                continue;
            }
            for ((s, &zc), &o) in shifted.iter_mut().zip(z.iter()).zip(&site.offsets) {
                *s = zc + o;
            }
            let p = softmax(&shifted).expect("finite logits");
            for ((zc, pc), tc) in z.iter_mut().zip(&p).zip(&site.targets) {
                let g = pc - tc;
                sq += g * g;
                *zc -= g;
            }
        }
        gradient_norm = sq.sqrt();
        if gradient_norm < GRADIENT_TOLERANCE {
            break;
        }
        steps += 1;
    }
    let converged = gradient_norm < GRADIENT_TOLERANCE;
    if !converged {
        log::warn!(
            "surrogate descent ({}) stopped after {steps} steps with gradient norm {gradient_norm:e}",
            mode.name()
        );
    }
    let decisions: Vec<usize> = logits.iter().map(|z| argmax(z)).collect();
    let brute = brute_force_gba_max(instance)?;
    let achieved_gba = classifier_gba(instance, &decisions);
    Ok(ConsistencyReport {
        mode,
        matched: brute.contains(&decisions),
        decisions,
        max_gba: brute.max_gba,
        achieved_gba,
        converged,
        gradient_norm,
        steps,
    })
}
