//! Decision-tree posterior calibration baseline: a greedy piecewise
//! mapping from raw posteriors to confidences, made monotone by
//! pooling adjacent violators.

use crate::EPS_CONFIDENCE;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrateError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("posteriors ({posteriors}) and targets ({targets}) differ in length")]
    LengthMismatch { posteriors: usize, targets: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Step,
    Linear,
}

/// Piecewise posterior-to-confidence mapping.
///
/// In linear mode with at least two intervals the curve runs through
/// the interval midpoints and extends past the outermost midpoints
/// with the nearest interior slope, which makes it strictly
/// increasing — the property that keeps ranking metrics of mapped
/// scores identical to raw ones. A single interval degenerates to a
/// constant map (no ranking survives that, monotone or not).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMapping {
    /// K+1 ordered breakpoints; first 0, last 1.
    pub breakpoints: Vec<f64>,
    /// K per-interval outputs, strictly increasing after fitting.
    pub values: Vec<f64>,
    pub interpolation: Interpolation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub max_leaves: usize,
    /// Smallest admissible child size for a split.
    pub min_leaf: usize,
    pub interpolation: Interpolation,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_leaves: 32,
            min_leaf: 50,
            interpolation: Interpolation::Linear,
        }
    }
}

/// Laplace-smoothed correctness of a leaf.
fn leaf_value(positives: usize, count: usize) -> f64 {
    (positives as f64 + 1.0) / (count as f64 + 2.0)
}

/// Summed binary cross-entropy of a leaf against its own smoothed
/// value.
fn leaf_bce(positives: usize, count: usize) -> f64 {
    let v = leaf_value(positives, count);
    -(positives as f64 * v.ln() + (count - positives) as f64 * (1.0 - v).ln())
}

/// A leaf is a range of the posterior-sorted sample array.
#[derive(Debug, Clone)]
struct Leaf {
    start: usize,
    end: usize,
    /// Best admissible split: (boundary index, cut value, gain).
    best: Option<(usize, f64, f64)>,
}

fn best_split(
    sorted_p: &[f64],
    prefix_pos: &[usize],
    start: usize,
    end: usize,
    min_leaf: usize,
) -> Option<(usize, f64, f64)> {
    let count = end - start;
    let positives = prefix_pos[end] - prefix_pos[start];
    let parent = leaf_bce(positives, count);
    let mut best: Option<(usize, f64, f64)> = None;
    for i in start + 1..end {
        if sorted_p[i - 1] == sorted_p[i] {
            continue;
        }
        if i - start < min_leaf || end - i < min_leaf {
            continue;
        }
        let left_pos = prefix_pos[i] - prefix_pos[start];
        let right_pos = positives - left_pos;
        let gain = parent - leaf_bce(left_pos, i - start) - leaf_bce(right_pos, end - i);
        // Strict improvement keeps the walk scanning, so exact ties go
        // to the lowest cut.
        if gain > 0.0 && best.map_or(true, |(_, _, g)| gain > g) {
            best = Some((i, 0.5 * (sorted_p[i - 1] + sorted_p[i]), gain));
        }
    }
    best
}

/// Greedy decision tree on the single posterior feature, minimising
/// summed binary cross-entropy, followed by pool-adjacent-violators:
/// whenever adjacent interval values fail to increase strictly, the
/// intervals merge into one carrying their count-weighted average, so
/// the final values are strictly increasing.
pub fn fit_tree(
    posteriors: &[f64],
    targets: &[bool],
    config: &TreeConfig,
) -> Result<CalibrationMapping, CalibrateError> {
    if posteriors.len() != targets.len() {
        return Err(CalibrateError::LengthMismatch {
            posteriors: posteriors.len(),
            targets: targets.len(),
        });
    }
    if posteriors.is_empty() {
        return Err(CalibrateError::EmptyTrainingSet);
    }

    let mut order: Vec<usize> = (0..posteriors.len()).collect();
    order.sort_by(|&a, &b| posteriors[a].total_cmp(&posteriors[b]));
    let sorted_p: Vec<f64> = order.iter().map(|&i| posteriors[i]).collect();
    let mut prefix_pos = vec![0usize; sorted_p.len() + 1];
    for (k, &i) in order.iter().enumerate() {
        prefix_pos[k + 1] = prefix_pos[k] + usize::from(targets[i]);
    }

    let mut leaves = vec![Leaf {
        start: 0,
        end: sorted_p.len(),
        best: best_split(&sorted_p, &prefix_pos, 0, sorted_p.len(), config.min_leaf),
    }];
    while leaves.len() < config.max_leaves {
        let Some((at, &(split, _, _))) = leaves
            .iter()
            .enumerate()
            .filter_map(|(k, leaf)| leaf.best.as_ref().map(|b| (k, b)))
            .max_by(|(_, a), (_, b)| a.2.total_cmp(&b.2))
        else {
            break;
        };
        let Leaf { start, end, .. } = leaves[at];
        leaves[at] = Leaf {
            start,
            end: split,
            best: best_split(&sorted_p, &prefix_pos, start, split, config.min_leaf),
        };
        leaves.insert(
            at + 1,
            Leaf {
                start: split,
                end,
                best: best_split(&sorted_p, &prefix_pos, split, end, config.min_leaf),
            },
        );
    }

    // Pool-adjacent-violators over (value, weight) blocks; merging on
    // >= leaves no equal neighbours behind.
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new(); // value, weight, leaves eaten
    for leaf in &leaves {
        let count = leaf.end - leaf.start;
        let positives = prefix_pos[leaf.end] - prefix_pos[leaf.start];
        blocks.push((leaf_value(positives, count), count as f64, 1));
        while blocks.len() >= 2 {
            let top = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.0 < top.0 {
                break;
            }
            blocks.pop();
            blocks.pop();
            let weight = prev.1 + top.1;
            blocks.push((
                (prev.0 * prev.1 + top.0 * top.1) / weight,
                weight,
                prev.2 + top.2,
            ));
        }
    }

    let mut breakpoints = vec![0.0];
    let mut values = Vec::with_capacity(blocks.len());
    let mut leaf_idx = 0;
    for &(value, _, eaten) in &blocks {
        leaf_idx += eaten;
        if leaf_idx < leaves.len() {
            // The cut between this block's last leaf and the next.
            let boundary = leaves[leaf_idx].start;
            breakpoints.push(0.5 * (sorted_p[boundary - 1] + sorted_p[boundary]));
        }
        values.push(value.clamp(EPS_CONFIDENCE, 1.0 - EPS_CONFIDENCE));
    }
    breakpoints.push(1.0);

    Ok(CalibrationMapping {
        breakpoints,
        values,
        interpolation: config.interpolation,
    })
}

fn interval_of(mapping: &CalibrationMapping, p: f64) -> usize {
    // Intervals are [b_0, b_1], (b_1, b_2], ..., (b_{K-1}, b_K].
    let k = mapping.breakpoints[1..mapping.breakpoints.len() - 1].partition_point(|&b| b < p);
    k.min(mapping.values.len() - 1)
}

/// Evaluate the mapping; monotone non-decreasing in `posterior` and
/// clamped to the open confidence range.
pub fn apply_mapping(mapping: &CalibrationMapping, posterior: f64) -> f64 {
    let raw = match mapping.interpolation {
        Interpolation::Step => mapping.values[interval_of(mapping, posterior)],
        Interpolation::Linear => {
            if mapping.values.len() == 1 {
                mapping.values[0]
            } else {
                linear_eval(mapping, posterior)
            }
        }
    };
    raw.clamp(EPS_CONFIDENCE, 1.0 - EPS_CONFIDENCE)
}

fn linear_eval(mapping: &CalibrationMapping, p: f64) -> f64 {
    let mids: Vec<f64> = mapping
        .breakpoints
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect();
    let k = mapping.values.len();
    let v = &mapping.values;
    // Beyond the outermost midpoints the curve continues with the
    // nearest interior slope instead of racing to the clamp corners —
    // extreme posteriors keep confidences near their leaf's mean. The
    // cap keeps the extension inside the clamp range, so it stays
    // strictly increasing end to end (no clamp plateau).
    if p <= mids[0] {
        let interior = (v[1] - v[0]) / (mids[1] - mids[0]);
        let slope = f64::min(interior, (v[0] - EPS_CONFIDENCE) / mids[0]);
        return v[0] - slope * (mids[0] - p);
    }
    if p >= mids[k - 1] {
        let interior = (v[k - 1] - v[k - 2]) / (mids[k - 1] - mids[k - 2]);
        let slope = f64::min(interior, (1.0 - EPS_CONFIDENCE - v[k - 1]) / (1.0 - mids[k - 1]));
        return v[k - 1] + slope * (p - mids[k - 1]);
    }
    let j = mids.partition_point(|&m| m < p) - 1;
    v[j] + (p - mids[j]) / (mids[j + 1] - mids[j]) * (v[j + 1] - v[j])
}

/// Map a whole score slice.
pub fn map_all(mapping: &CalibrationMapping, posteriors: &[f64]) -> Vec<f64> {
    posteriors.iter().map(|&p| apply_mapping(mapping, p)).collect()
}
