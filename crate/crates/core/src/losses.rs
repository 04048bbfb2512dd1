//! Training-loss terms over class-probability grids: weighted cross-entropy,
//! scene-class affinity, Dice, the per-pixel 2D semantic term, and their sum.
//!
//! Natural logs throughout; `EPS` guards every logarithm. Reductions use
//! pairwise summation so results do not depend on thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{ErpImage, RasterKind};
use crate::grid::{GridSpec, VoxelGrid};
use crate::scalar::{pairwise_sum, Real};

pub const EPS: f64 = 1e-12;

/// Default additive constant inside the class-weight logarithm.
pub const DEFAULT_WEIGHT_CONSTANT: f64 = 1.02;

/// Per-voxel (or per-pixel) probability vectors over `C` classes, stored
/// voxel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid<T> {
    num_classes: usize,
    probs: Vec<T>,
}

impl<T: Real> ProbGrid<T> {
    /// Validates non-negativity and that each vector sums to 1 within 1e-6.
    pub fn new(num_classes: usize, probs: Vec<T>) -> Result<Self> {
        if num_classes == 0 || !probs.len().is_multiple_of(num_classes) {
            return Err(Error::shape(format!(
                "{} probabilities do not split into vectors of {num_classes}",
                probs.len()
            )));
        }
        for (i, p) in probs.chunks(num_classes).enumerate() {
            if p.iter().any(|&x| !(x >= T::zero() && x.is_finite())) {
                return Err(Error::domain(format!(
                    "voxel {i} has a negative or non-finite probability"
                )));
            }
            let s: T = p.iter().copied().sum();
            if (s - T::one()).abs() > T::lit(1e-6) {
                return Err(Error::domain(format!("voxel {i} probabilities sum to {s}")));
            }
        }
        Ok(Self { num_classes, probs })
    }

    /// Skips validation; used by finite-difference checks that perturb single
    /// entries off the simplex.
    pub fn new_unchecked(num_classes: usize, probs: Vec<T>) -> Self {
        Self { num_classes, probs }
    }

    pub fn uniform(len: usize, num_classes: usize) -> Self {
        let p = T::one() / T::lit(num_classes as f64);
        Self {
            num_classes,
            probs: vec![p; len * num_classes],
        }
    }

    /// One-hot vectors for the given labels.
    pub fn one_hot(labels: &[u8], num_classes: usize) -> Result<Self> {
        let mut probs = vec![T::zero(); labels.len() * num_classes];
        for (i, &l) in labels.iter().enumerate() {
            if l as usize >= num_classes {
                return Err(Error::domain(format!(
                    "label {l} ≥ class count {num_classes}"
                )));
            }
            probs[i * num_classes + l as usize] = T::one();
        }
        Ok(Self { num_classes, probs })
    }

    /// Interprets a feature grid with `C` channels as probabilities.
    pub fn from_feature_grid(grid: &VoxelGrid<T>) -> Result<Self> {
        let data = grid.features()?;
        Self::new(
            grid.channels(),
            data.iter().map(|&x| T::lit(x as f64)).collect(),
        )
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.num_classes
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.probs
    }

    #[inline]
    pub fn prob(&self, voxel: usize, class: usize) -> T {
        self.probs[voxel * self.num_classes + class]
    }

    /// Most probable class per voxel; ties go to the smallest id.
    pub fn argmax(&self) -> Vec<u8> {
        self.probs
            .chunks(self.num_classes)
            .map(|p| {
                let mut best = 0;
                for (c, &x) in p.iter().enumerate() {
                    if x > p[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }

    fn check_labels(&self, labels: &[u8]) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::shape(format!(
                "{} prediction vectors but {} labels",
                self.len(),
                labels.len()
            )));
        }
        Ok(())
    }
}

/// `ω_c = 1 / ln(f_c + c)` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights<T> {
    pub weights: Vec<T>,
    pub constant: T,
    pub frequencies: Vec<T>,
}

impl<T: Real> ClassWeights<T> {
    /// All-ones weights (plain cross-entropy).
    pub fn unit(num_classes: usize) -> Self {
        Self {
            weights: vec![T::one(); num_classes],
            constant: T::zero(),
            frequencies: Vec::new(),
        }
    }

    /// Explicit weights, e.g. loaded from a file.
    pub fn explicit(weights: Vec<T>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w > T::zero())) {
            return Err(Error::domain("class weights must be finite and positive"));
        }
        Ok(Self {
            weights,
            constant: T::zero(),
            frequencies: Vec::new(),
        })
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            weights: self.weights.iter().map(|&w| w * s).collect(),
            ..self.clone()
        }
    }
}

/// Frequency-derived class weights, `ω_c = 1 / ln(f_c + c)`.
pub fn class_weights<T: Real>(frequencies: &[T], constant: T) -> Result<ClassWeights<T>> {
    if frequencies.is_empty() {
        return Err(Error::domain("no class frequencies"));
    }
    let mut weights = Vec::with_capacity(frequencies.len());
    for (c, &f) in frequencies.iter().enumerate() {
        if !(f >= T::zero() && f <= T::one()) {
            return Err(Error::domain(format!(
                "frequency of class {c} is {f}, outside [0, 1]"
            )));
        }
        if !(f + constant > T::one()) {
            return Err(Error::domain(format!(
                "f + c = {} for class {c}; the logarithm must be positive",
                f + constant
            )));
        }
        weights.push(T::one() / (f + constant).ln());
    }
    let total: T = frequencies.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::domain(format!(
            "class frequencies sum to {total}, not 1"
        )));
    }
    Ok(ClassWeights {
        weights,
        constant,
        frequencies: frequencies.to_vec(),
    })
}

fn weight_of<T: Real>(w: &ClassWeights<T>, class: u8) -> Result<T> {
    w.weights
        .get(class as usize)
        .copied()
        .ok_or_else(|| Error::shape(format!("no weight for class {class}")))
}

/// Mean over positions of `−ω_y·ln(p_y + ε)`, skipping labels equal to
/// `ignore`.
fn masked_weighted_ce<T: Real>(
    pred: &ProbGrid<T>,
    labels: &[u8],
    w: &ClassWeights<T>,
    ignore: Option<u8>,
) -> Result<T> {
    pred.check_labels(labels)?;
    let eps = T::lit(EPS);
    let mut terms = Vec::with_capacity(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        if Some(y) == ignore {
            continue;
        }
        if y as usize >= pred.num_classes() {
            return Err(Error::domain(format!(
                "label {y} ≥ class count {}",
                pred.num_classes()
            )));
        }
        terms.push(-weight_of(w, y)? * (pred.prob(i, y as usize) + eps).ln());
    }
    if terms.is_empty() {
        return Ok(T::zero());
    }
    Ok(pairwise_sum(&terms) / T::lit(terms.len() as f64))
}

/// Class-weighted voxel cross-entropy.
pub fn weighted_ce<T: Real>(
    pred: &ProbGrid<T>,
    gt: &VoxelGrid<T>,
    w: &ClassWeights<T>,
) -> Result<T> {
    masked_weighted_ce(pred, gt.labels()?, w, None)
}

/// Gradient of [`weighted_ce`] with respect to every probability entry.
pub fn weighted_ce_grad<T: Real>(
    pred: &ProbGrid<T>,
    labels: &[u8],
    w: &ClassWeights<T>,
) -> Result<Vec<T>> {
    pred.check_labels(labels)?;
    let c = pred.num_classes();
    let n = T::lit(labels.len() as f64);
    let mut g = vec![T::zero(); pred.as_slice().len()];
    for (i, &y) in labels.iter().enumerate() {
        let p = pred.prob(i, y as usize);
        g[i * c + y as usize] = -weight_of(w, y)? / (n * (p + T::lit(EPS)));
    }
    Ok(g)
}

/// Voxel confusion counts for one class.
fn class_confusion(pred: &[u8], gt: &[u8], class: u8) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &g) in pred.iter().zip(gt) {
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

/// `1 − 2TP / (2TP + FP + FN)` for one class; 0 when the class is absent
/// from both grids.
pub fn dice_loss<T: Real>(
    pred_labels: &VoxelGrid<T>,
    gt: &VoxelGrid<T>,
    class_id: u8,
) -> Result<T> {
    pred_labels.check_compatible(gt)?;
    Ok(dice_from_labels(
        pred_labels.labels()?,
        gt.labels()?,
        class_id,
    ))
}

pub fn dice_from_labels<T: Real>(pred: &[u8], gt: &[u8], class_id: u8) -> T {
    let (tp, fp, fn_) = class_confusion(pred, gt, class_id);
    dice_from_counts(tp, fp, fn_)
}

pub fn dice_from_counts<T: Real>(tp: u64, fp: u64, fn_: u64) -> T {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return T::zero();
    }
    T::one() - T::lit(2.0 * tp as f64) / T::lit(denom as f64)
}

/// Dice macro-averaged over non-free classes present in either grid.
pub fn dice_macro<T: Real>(
    pred_labels: &VoxelGrid<T>,
    gt: &VoxelGrid<T>,
    num_classes: usize,
) -> Result<T> {
    pred_labels.check_compatible(gt)?;
    let (p, g) = (pred_labels.labels()?, gt.labels()?);
    let mut losses = Vec::new();
    for c in 1..num_classes {
        let (tp, fp, fn_) = class_confusion(p, g, c as u8);
        if tp + fp + fn_ > 0 {
            losses.push(dice_from_counts::<T>(tp, fp, fn_));
        }
    }
    if losses.is_empty() {
        return Ok(T::zero());
    }
    Ok(pairwise_sum(&losses) / T::lit(losses.len() as f64))
}

/// Per-class sums feeding the affinity loss.
struct AffinityStats<T> {
    class: usize,
    /// Σ_{gt=c} p_c
    matched: T,
    /// Σ p_c
    predicted: T,
    /// Σ_{gt≠c} (1 − p_c)
    rejected: T,
    count: T,
    others: T,
}

fn affinity_stats<T: Real>(pred: &ProbGrid<T>, labels: &[u8]) -> Vec<AffinityStats<T>> {
    let c = pred.num_classes();
    let mut present = vec![0usize; c];
    for &l in labels {
        if (l as usize) < c {
            present[l as usize] += 1;
        }
    }
    (0..c)
        .into_par_iter()
        .filter(|&k| present[k] > 0)
        .map(|k| {
            let mut matched = Vec::with_capacity(present[k]);
            let mut rejected = Vec::with_capacity(labels.len() - present[k]);
            let mut all = Vec::with_capacity(labels.len());
            for (i, &l) in labels.iter().enumerate() {
                let p = pred.prob(i, k);
                all.push(p);
                if l as usize == k {
                    matched.push(p);
                } else {
                    rejected.push(T::one() - p);
                }
            }
            AffinityStats {
                class: k,
                matched: pairwise_sum(&matched),
                predicted: pairwise_sum(&all),
                rejected: pairwise_sum(&rejected),
                count: T::lit(present[k] as f64),
                others: T::lit((labels.len() - present[k]) as f64),
            }
        })
        .collect()
}

fn ratio<T: Real>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

/// Scene-class affinity loss: for each class present in the ground truth,
/// `−[ln P + ln R + ln S]` with precision `P`, recall `R` and specificity `S`
/// computed from soft predictions; averaged over present classes.
///
/// The specificity term is omitted for a class covering every voxel.
pub fn scal_loss<T: Real>(pred: &ProbGrid<T>, gt: &VoxelGrid<T>) -> Result<T> {
    scal_from_labels(pred, gt.labels()?)
}

pub fn scal_from_labels<T: Real>(pred: &ProbGrid<T>, labels: &[u8]) -> Result<T> {
    pred.check_labels(labels)?;
    let eps = T::lit(EPS);
    let stats = affinity_stats(pred, labels);
    if stats.is_empty() {
        return Ok(T::zero());
    }
    let per_class: Vec<T> = stats
        .iter()
        .map(|s| {
            let precision = ratio(s.matched, s.predicted);
            let recall = s.matched / s.count;
            let mut l = -(precision + eps).ln() - (recall + eps).ln();
            if s.others > T::zero() {
                l -= (s.rejected / s.others + eps).ln();
            }
            l
        })
        .collect();
    Ok(pairwise_sum(&per_class) / T::lit(per_class.len() as f64))
}

/// Gradient of [`scal_loss`] with respect to every probability entry.
pub fn scal_grad<T: Real>(pred: &ProbGrid<T>, labels: &[u8]) -> Result<Vec<T>> {
    pred.check_labels(labels)?;
    let c = pred.num_classes();
    let eps = T::lit(EPS);
    let stats = affinity_stats(pred, labels);
    let mut g = vec![T::zero(); pred.as_slice().len()];
    if stats.is_empty() {
        return Ok(g);
    }
    let scale = T::one() / T::lit(stats.len() as f64);
    for s in &stats {
        let precision = ratio(s.matched, s.predicted);
        let recall = s.matched / s.count;
        let specificity = ratio(s.rejected, s.others);
        for (i, &l) in labels.iter().enumerate() {
            let is_c = l as usize == s.class;
            let mut d = T::zero();
            if s.predicted > T::zero() {
                // ∂P/∂p_i = ([gt_i = c]·Σp − Σ_{gt=c} p) / (Σp)².
                let indicator = if is_c { T::one() } else { T::zero() };
                let dp = (indicator * s.predicted - s.matched) / (s.predicted * s.predicted);
                d -= dp / (precision + eps);
            }
            if is_c {
                d -= (T::one() / s.count) / (recall + eps);
            } else if s.others > T::zero() {
                d -= (-T::one() / s.others) / (specificity + eps);
            }
            g[i * c + s.class] += d * scale;
        }
    }
    Ok(g)
}

/// Per-pixel weighted cross-entropy of a 2D semantic prediction. Pixels whose
/// label equals `ignore` are left out of the mean.
pub fn sem2d_loss<T: Real>(
    pred: &ProbGrid<T>,
    gt: &ErpImage,
    w: &ClassWeights<T>,
    ignore: Option<u8>,
) -> Result<T> {
    if gt.kind != RasterKind::Semantic {
        return Err(Error::shape("2D semantic loss needs a semantic raster"));
    }
    let labels: Vec<u8> = gt.data().iter().map(|&x| x as u8).collect();
    masked_weighted_ce(pred, &labels, w, ignore)
}

/// The four loss terms of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms<T> {
    pub ce: T,
    pub scal: T,
    pub dice: T,
    pub sem2d: T,
}

/// Unweighted sum `ce + scal + dice + sem2d`.
pub fn total_loss<T: Real>(terms: &LossTerms<T>) -> Result<T> {
    let parts = [terms.ce, terms.scal, terms.dice, terms.sem2d];
    if parts.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain(format!(
            "non-finite loss component in {terms:?}"
        )));
    }
    Ok(terms.ce + terms.scal + terms.dice + terms.sem2d)
}

/// Loss inputs must share one lattice.
pub fn check_same_spec<T: Real>(a: &GridSpec<T>, b: &GridSpec<T>) -> Result<()> {
    if a.same_lattice(b) {
        Ok(())
    } else {
        Err(Error::shape(
            "prediction and ground truth have different specs",
        ))
    }
}
