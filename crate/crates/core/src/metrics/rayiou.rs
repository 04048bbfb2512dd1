//! Ray-based IoU: each query ray is cast into prediction and ground truth,
//! and a ray counts as a true positive for class `c` when both first hits
//! carry `c` and their distances differ by at most the threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::metrics::{cast_ray, QueryRay, RayHit};
use crate::scalar::Real;

/// Distance thresholds in meters averaged into the headline number.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 2.0, 4.0];

/// Near, middle and far evaluation bands in meters.
pub const DEFAULT_BANDS: [(f64, f64); 3] = [(0.0, 8.5), (8.5, 17.0), (17.0, 25.6)];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_
    }

    /// `TP / (TP + FP + FN)`, undefined when the class never occurs.
    pub fn iou(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.tp as f64 / self.total() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    /// Indexed by class id; entry 0 (free) is always zero.
    pub counts: Vec<ClassCounts>,
    pub iou: Vec<Option<f64>>,
    /// Mean IoU over classes with a non-zero denominator.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub lo: f64,
    pub hi: f64,
    pub report: RayIouReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayIouReport {
    pub num_classes: usize,
    /// Rays where at least one side hit something.
    pub evaluated_rays: u64,
    pub thresholds: Vec<ThresholdReport>,
    /// Mean over thresholds of the per-threshold class means.
    pub ray_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bands: Vec<BandReport>,
}

impl RayIouReport {
    pub fn at_threshold(&self, tau: f64) -> Option<&ThresholdReport> {
        self.thresholds.iter().find(|t| t.threshold == tau)
    }

    pub fn band(&self, lo: f64, hi: f64) -> Option<&RayIouReport> {
        self.bands
            .iter()
            .find(|b| b.lo == lo && b.hi == hi)
            .map(|b| &b.report)
    }
}

/// One ray's first hits in prediction and ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitPair {
    pub pred: Option<(f64, u8)>,
    pub gt: Option<(f64, u8)>,
}

impl HitPair {
    pub fn from_hits<T: Real>(pred: Option<RayHit<T>>, gt: Option<RayHit<T>>) -> Self {
        let conv = |h: RayHit<T>| (h.distance.as_f64(), h.label);
        Self {
            pred: pred.map(conv),
            gt: gt.map(conv),
        }
    }

    /// Distance used to place the ray in a band: the ground-truth hit, or the
    /// predicted hit when ground truth saw nothing.
    pub fn band_distance(&self) -> Option<f64> {
        self.gt.or(self.pred).map(|h| h.0)
    }
}

/// Casts every ray into both grids. Evaluation stops at `max_dist`.
pub fn cast_pairs<T: Real>(
    pred: &VoxelGrid<T>,
    gt: &VoxelGrid<T>,
    rays: &[QueryRay<T>],
    max_dist: T,
) -> Result<Vec<HitPair>> {
    pred.check_compatible(gt)?;
    pred.labels()?;
    Ok(rays
        .par_iter()
        .map(|r| HitPair::from_hits(cast_ray(r, pred, max_dist), cast_ray(r, gt, max_dist)))
        .collect())
}

/// Full RayIoU evaluation of `pred` against `gt`.
///
/// Bands are half-open `[lo, hi)` intervals of the ray's band distance
/// (see [`HitPair::band_distance`]).
pub fn ray_iou<T: Real>(
    pred: &VoxelGrid<T>,
    gt: &VoxelGrid<T>,
    rays: &[QueryRay<T>],
    thresholds: &[f64],
    bands: Option<&[(f64, f64)]>,
    num_classes: usize,
) -> Result<RayIouReport> {
    let max_dist = gt.spec().max_ray_length();
    let pairs = cast_pairs(pred, gt, rays, max_dist)?;
    for p in &pairs {
        for (_, l) in p.pred.iter().chain(p.gt.iter()) {
            if *l as usize >= num_classes {
                return Err(Error::domain(format!(
                    "label {l} ≥ class count {num_classes}"
                )));
            }
        }
    }
    report_from_pairs(&pairs, thresholds, bands, num_classes)
}

/// Confusion accounting over precomputed hit pairs.
pub fn report_from_pairs(
    pairs: &[HitPair],
    thresholds: &[f64],
    bands: Option<&[(f64, f64)]>,
    num_classes: usize,
) -> Result<RayIouReport> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::domain(
            "thresholds must be a non-empty list of finite values ≥ 0",
        ));
    }
    let mut report = accumulate(pairs.iter(), thresholds, num_classes);
    if let Some(bands) = bands {
        for &(lo, hi) in bands {
            if !(lo < hi) {
                return Err(Error::domain(format!("band ({lo}, {hi}) is empty")));
            }
            let inside = pairs
                .iter()
                .filter(|p| p.band_distance().is_some_and(|d| d >= lo && d < hi));
            report.bands.push(BandReport {
                lo,
                hi,
                report: accumulate(inside, thresholds, num_classes),
            });
        }
    }
    Ok(report)
}

fn accumulate<'a>(
    pairs: impl Iterator<Item = &'a HitPair> + Clone,
    thresholds: &[f64],
    c: usize,
) -> RayIouReport {
    let evaluated_rays = pairs
        .clone()
        .filter(|p| p.pred.is_some() || p.gt.is_some())
        .count() as u64;
    let per_threshold: Vec<ThresholdReport> = thresholds
        .iter()
        .map(|&tau| {
            let mut counts = vec![ClassCounts::default(); c];
            for p in pairs.clone() {
                match (p.gt, p.pred) {
                    (None, None) => {}
                    (Some((_, g)), None) => counts[g as usize].fn_ += 1,
                    (None, Some((_, q))) => counts[q as usize].fp += 1,
                    (Some((dg, g)), Some((dp, q))) => {
                        if g == q && (dp - dg).abs() <= tau {
                            counts[g as usize].tp += 1;
                        } else {
                            counts[g as usize].fn_ += 1;
                            counts[q as usize].fp += 1;
                        }
                    }
                }
            }
            // Free never hits, but keep it out of the mean regardless.
            counts[0] = ClassCounts::default();
            let iou: Vec<Option<f64>> = counts.iter().map(ClassCounts::iou).collect();
            let defined: Vec<f64> = iou.iter().flatten().copied().collect();
            let mean =
                (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            ThresholdReport {
                threshold: tau,
                counts,
                iou,
                mean,
            }
        })
        .collect();
    let means: Vec<f64> = per_threshold.iter().filter_map(|t| t.mean).collect();
    let ray_iou = (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64);
    RayIouReport {
        num_classes: c,
        evaluated_rays,
        thresholds: per_threshold,
        ray_iou,
        bands: Vec::new(),
    }
}
