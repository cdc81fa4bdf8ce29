//! Cognitive-map accuracy (size, pairwise distance, pairwise angle) and the
//! M×M grid rasterization used as the discretized-map baseline.

use serde::{Deserialize, Serialize};

use crate::geometry::{bearing, center, center_distance, dims, Box2, LayoutMap, Vec2};
use crate::reward::{num_reward, RewardConfig};

/// Fraction of the map span added on each side of the default grid window.
pub const DEFAULT_EXTENT_MARGIN: f64 = 0.05;

/// Half-width used for a default window along an axis where the map has no extent.
const MIN_HALF_SPAN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapEvalError {
    #[error("grid resolution must be at least 1")]
    Resolution,
    #[error("grid extent must have positive area")]
    Extent,
    #[error("cannot derive a grid extent from an empty map")]
    EmptyMap,
}

/// Greedy same-label correspondence between predicted and ground-truth objects,
/// by object index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

/// Within each label, repeatedly pairs the closest remaining (pred, gt)
/// centers. Equal distances prefer the lower pred index, then the lower gt index.
pub fn match_objects(pred: &LayoutMap, gt: &LayoutMap) -> Matching {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.objects.iter().enumerate() {
        for (j, g) in gt.objects.iter().enumerate() {
            if p.label == g.label {
                cands.push((center_distance(&p.bbox, &g.bbox), i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    Matching {
        pairs,
        unmatched_pred: (0..pred.len()).filter(|i| !used_p[*i]).collect(),
        unmatched_gt: (0..gt.len()).filter(|j| !used_g[*j]).collect(),
    }
}

/// A metric value plus whether it was undefined (fewer than two matches)
/// and defaulted to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub value: f64,
    pub degenerate: bool,
}

impl Metric {
    fn degenerate() -> Self {
        Metric {
            value: 1.0,
            degenerate: true,
        }
    }
}

/// Mean thresholded relative accuracy of width and depth over matched
/// objects; every unmatched object on either side counts as 0.
pub fn size_accuracy(m: &Matching, pred: &LayoutMap, gt: &LayoutMap, cfg: &RewardConfig) -> f64 {
    let union = m.pairs.len() + m.unmatched_pred.len() + m.unmatched_gt.len();
    if union == 0 {
        return 1.0;
    }
    let total: f64 = m
        .pairs
        .iter()
        .map(|&(i, j)| {
            let (pw, pd) = dims(&pred.objects[i].bbox);
            let (gw, gd) = dims(&gt.objects[j].bbox);
            (num_reward(pw, gw, cfg) + num_reward(pd, gd, cfg)) / 2.0
        })
        .sum();
    total / union as f64
}

/// Thresholded relative accuracy of every unordered matched pair's center distance.
pub fn distance_accuracy(
    m: &Matching,
    pred: &LayoutMap,
    gt: &LayoutMap,
    cfg: &RewardConfig,
) -> Metric {
    let n = m.pairs.len();
    if n < 2 {
        return Metric::degenerate();
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            let (pa, ga) = m.pairs[a];
            let (pb, gb) = m.pairs[b];
            let dp = center_distance(&pred.objects[pa].bbox, &pred.objects[pb].bbox);
            let dg = center_distance(&gt.objects[ga].bbox, &gt.objects[gb].bbox);
            sum += num_reward(dp, dg, cfg);
            count += 1;
        }
    }
    Metric {
        value: sum / count as f64,
        degenerate: false,
    }
}

/// Smallest absolute difference between two bearings, in `[0, 180]`.
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// `1 − δ/180` averaged over ordered matched pairs, δ being the bearing error
/// between the two centers. Pairs with coincident ground-truth centers are
/// skipped; a coincident predicted pair scores 0.
pub fn angle_accuracy(m: &Matching, pred: &LayoutMap, gt: &LayoutMap) -> Metric {
    let n = m.pairs.len();
    if n < 2 {
        return Metric::degenerate();
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (pa, ga) = m.pairs[a];
            let (pb, gb) = m.pairs[b];
            let Ok(bg) = bearing(center(&gt.objects[ga].bbox), center(&gt.objects[gb].bbox)) else {
                continue;
            };
            count += 1;
            if let Ok(bp) = bearing(
                center(&pred.objects[pa].bbox),
                center(&pred.objects[pb].bbox),
            ) {
                sum += 1.0 - angular_difference(bp, bg) / 180.0;
            }
        }
    }
    if count == 0 {
        return Metric::degenerate();
    }
    Metric {
        value: sum / count as f64,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapAccuracyReport {
    pub size_acc: f64,
    pub distance_acc: f64,
    pub angle_acc: f64,
    /// Mean of the non-degenerate metrics (all three when none is degenerate).
    pub overall: f64,
    pub matched: usize,
    pub unmatched_pred: usize,
    pub unmatched_gt: usize,
    pub distance_degenerate: bool,
    pub angle_degenerate: bool,
}

pub fn evaluate_map(pred: &LayoutMap, gt: &LayoutMap, cfg: &RewardConfig) -> MapAccuracyReport {
    let m = match_objects(pred, gt);
    let size = size_accuracy(&m, pred, gt, cfg);
    let dist = distance_accuracy(&m, pred, gt, cfg);
    let angle = angle_accuracy(&m, pred, gt);
    let mut defined = vec![size];
    if !dist.degenerate {
        defined.push(dist.value);
    }
    if !angle.degenerate {
        defined.push(angle.value);
    }
    let overall = if defined.len() == 3 {
        (size + dist.value + angle.value) / 3.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    MapAccuracyReport {
        size_acc: size,
        distance_acc: dist.value,
        angle_acc: angle.value,
        overall,
        matched: m.pairs.len(),
        unmatched_pred: m.unmatched_pred.len(),
        unmatched_gt: m.unmatched_gt.len(),
        distance_degenerate: dist.degenerate,
        angle_degenerate: angle.degenerate,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub label: String,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub m: usize,
    pub extent: Box2,
    pub cells: Vec<GridCell>,
}

impl GridMap {
    /// World position of a cell's center.
    pub fn cell_center(&self, row: usize, col: usize) -> Vec2 {
        let (w, d) = dims(&self.extent);
        Vec2::new(
            self.extent.min.x + (col as f64 + 0.5) * w / self.m as f64,
            self.extent.min.y + (row as f64 + 0.5) * d / self.m as f64,
        )
    }

    /// Number of distinct occupied cells.
    pub fn occupied(&self) -> usize {
        let set: std::collections::BTreeSet<(usize, usize)> =
            self.cells.iter().map(|c| (c.row, c.col)).collect();
        set.len()
    }
}

/// Map bounds grown by [`DEFAULT_EXTENT_MARGIN`] of the span on every side.
pub fn default_extent(map: &LayoutMap) -> Result<Box2, MapEvalError> {
    let b = map.bounds().ok_or(MapEvalError::EmptyMap)?;
    let (w, d) = dims(&b);
    let pad = |span: f64| {
        if span > 0.0 {
            span * DEFAULT_EXTENT_MARGIN
        } else {
            MIN_HALF_SPAN
        }
    };
    let (px, py) = (pad(w), pad(d));
    Ok(Box2 {
        min: Vec2::new(b.min.x - px, b.min.y - py),
        max: Vec2::new(b.max.x + px, b.max.y + py),
    })
}

fn cell_index(v: f64, lo: f64, span: f64, m: usize) -> usize {
    let k = ((v - lo) / span * m as f64).floor();
    if k.is_nan() || k < 0.0 {
        0
    } else {
        (k as usize).min(m - 1)
    }
}

/// Snaps every object center to an `m × m` grid over `extent`.
pub fn rasterize(map: &LayoutMap, m: usize, extent: Box2) -> Result<GridMap, MapEvalError> {
    if m < 1 {
        return Err(MapEvalError::Resolution);
    }
    let (w, d) = dims(&extent);
    if !(w > 0.0 && d > 0.0) {
        return Err(MapEvalError::Extent);
    }
    let cells = map
        .objects
        .iter()
        .map(|o| {
            let c = center(&o.bbox);
            GridCell {
                label: o.label.clone(),
                row: cell_index(c.y, extent.min.y, d, m),
                col: cell_index(c.x, extent.min.x, w, m),
            }
        })
        .collect();
    Ok(GridMap { m, extent, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(items: &[(&str, [f64; 4])]) -> LayoutMap {
        let mut m = LayoutMap::default();
        for (l, b) in items {
            m.push(*l, Box2::from_array(*b).unwrap());
        }
        m
    }

    fn room() -> LayoutMap {
        map(&[
            ("sofa", [0.0, 0.0, 2.0, 1.0]),
            ("table", [3.0, 0.0, 4.0, 1.0]),
            ("lamp", [0.0, 3.0, 0.5, 3.5]),
            ("bed", [5.0, 5.0, 7.0, 7.0]),
        ])
    }

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn identical_maps_match_fully() {
        let m = match_objects(&room(), &room());
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert!(m.unmatched_gt.is_empty() && m.unmatched_pred.is_empty());
    }

    #[test]
    fn missing_prediction_is_unmatched_gt() {
        let mut p = room();
        p.objects.remove(2);
        let m = match_objects(&p, &room());
        assert_eq!(m.unmatched_gt, vec![2]);
    }

    /// Enumerates every assignment of same-label preds to gts (≤ 4 each).
    fn optimal_total(pred: &LayoutMap, gt: &LayoutMap) -> f64 {
        fn go(i: usize, pred: &LayoutMap, gt: &LayoutMap, used: &mut Vec<bool>) -> f64 {
            if i == pred.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..gt.len() {
                if !used[j] && gt.objects[j].label == pred.objects[i].label {
                    used[j] = true;
                    let c = center_distance(&pred.objects[i].bbox, &gt.objects[j].bbox)
                        + go(i + 1, pred, gt, used);
                    used[j] = false;
                    best = best.min(c);
                }
            }
            best
        }
        go(0, pred, gt, &mut vec![false; gt.len()])
    }

    #[test]
    fn greedy_takes_globally_closest_pair_first() {
        // predictions listed in swapped order relative to ground truth
        let gt = map(&[
            ("chair", [0.0, 0.0, 1.0, 1.0]),
            ("chair", [4.0, 0.0, 5.0, 1.0]),
        ]);
        let pred = map(&[
            ("chair", [4.2, 0.0, 5.2, 1.0]),
            ("chair", [0.5, 0.0, 1.5, 1.0]),
        ]);
        let m = match_objects(&pred, &gt);
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        let greedy_total: f64 = m
            .pairs
            .iter()
            .map(|&(i, j)| center_distance(&pred.objects[i].bbox, &gt.objects[j].bbox))
            .sum();
        assert!((greedy_total - optimal_total(&pred, &gt)).abs() < 1e-12);
        // the first pair chosen is the brute-force closest one
        let mut closest = (f64::INFINITY, 0, 0);
        for i in 0..2 {
            for j in 0..2 {
                let d = center_distance(&pred.objects[i].bbox, &gt.objects[j].bbox);
                if d < closest.0 {
                    closest = (d, i, j);
                }
            }
        }
        assert_eq!((closest.1, closest.2), (0, 1));
    }

    #[test]
    fn size_accuracy_examples() {
        let gt = room();
        let m = match_objects(&gt, &gt);
        assert_eq!(size_accuracy(&m, &gt, &gt, &cfg()), 1.0);
        // every box 10% larger about its own center
        let pred = gt.map_boxes(|b| {
            let (w, d) = dims(b);
            Box2::centered(center(b), w * 1.1, d * 1.1).unwrap()
        });
        let m = match_objects(&pred, &gt);
        assert_eq!(size_accuracy(&m, &pred, &gt, &cfg()), 0.9);
        let empty = LayoutMap::default();
        let m = match_objects(&empty, &gt);
        assert_eq!(size_accuracy(&m, &empty, &gt, &cfg()), 0.0);
        let m = match_objects(&empty, &empty);
        assert_eq!(size_accuracy(&m, &empty, &empty, &cfg()), 1.0);
    }

    #[test]
    fn distance_accuracy_examples() {
        let gt = room();
        let m = match_objects(&gt, &gt);
        assert_eq!(distance_accuracy(&m, &gt, &gt, &cfg()).value, 1.0);
        let shifted = gt.map_boxes(|b| b.translate(Vec2::new(3.0, -2.0)));
        let m = match_objects(&shifted, &gt);
        assert_eq!(distance_accuracy(&m, &shifted, &gt, &cfg()).value, 1.0);
    }

    #[test]
    fn doubling_one_pair_distance_zeroes_that_pair() {
        let gt = map(&[
            ("a", [-0.5, -0.5, 0.5, 0.5]),
            ("b", [1.5, -0.5, 2.5, 0.5]),
            ("c", [-0.5, 9.5, 0.5, 10.5]),
        ]);
        // b moves from (2,0) to (4,0): |ab| doubles, |bc| changes too
        let mut pred = gt.clone();
        pred.objects[1].bbox = pred.objects[1].bbox.translate(Vec2::new(2.0, 0.0));
        let m = match_objects(&pred, &gt);
        let cfgd = cfg();
        // enumeration oracle over the three unordered pairs
        let ab = num_reward(4.0, 2.0, &cfgd);
        let ac = num_reward(10.0, 10.0, &cfgd);
        let bc = num_reward(116f64.sqrt(), 104f64.sqrt(), &cfgd);
        assert_eq!(ab, 0.0);
        let got = distance_accuracy(&m, &pred, &gt, &cfgd);
        assert!(!got.degenerate);
        assert!((got.value - (ab + ac + bc) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn angle_accuracy_examples() {
        let gt = room();
        let m = match_objects(&gt, &gt);
        assert_eq!(angle_accuracy(&m, &gt, &gt).value, 1.0);
        let rotated = gt.map_boxes(|b| b.rotate_quarter(1));
        let m = match_objects(&rotated, &gt);
        assert!((angle_accuracy(&m, &rotated, &gt).value - 0.5).abs() < 1e-12);
        // two objects, prediction swaps their relative positions
        let gt2 = map(&[("a", [0.0, 0.0, 1.0, 1.0]), ("b", [3.0, 0.0, 4.0, 1.0])]);
        let pred2 = map(&[("a", [3.0, 0.0, 4.0, 1.0]), ("b", [0.0, 0.0, 1.0, 1.0])]);
        let m = match_objects(&pred2, &gt2);
        assert_eq!(angle_accuracy(&m, &pred2, &gt2).value, 0.0);
    }

    #[test]
    fn angular_difference_wraps() {
        assert_eq!(angular_difference(350.0, 10.0), 20.0);
        assert_eq!(angular_difference(0.0, 180.0), 180.0);
        assert_eq!(angular_difference(90.0, 90.0), 0.0);
    }

    #[test]
    fn evaluate_identity_and_empty() {
        let r = evaluate_map(&room(), &room(), &cfg());
        assert_eq!(
            (r.size_acc, r.distance_acc, r.angle_acc, r.overall),
            (1.0, 1.0, 1.0, 1.0)
        );
        let e = evaluate_map(&LayoutMap::default(), &room(), &cfg());
        assert_eq!(e.size_acc, 0.0);
        assert!(e.distance_degenerate && e.angle_degenerate);
        assert_eq!(e.overall, 0.0);
        assert_eq!(e.unmatched_gt, 4);
    }

    #[test]
    fn evaluate_perturbed_fixture_matches_hand_computation() {
        // hand computation:
        //   sofa: width 2 -> 2.2 (10% -> 0.9), depth 1 -> 1 (1.0): 0.95
        //   table: identical: 1.0;  lamp unmatched (pred label "chair"): 0, extra pred chair: 0
        //   size = (0.95 + 1.0) / 4 = 0.4875
        //   sofa centre (1,0.5) -> (1.1,0.5); table (3.5,0.5)
        //   distance: gt 2.5, pred 2.4, rel err 0.04 -> thresholds θ ≤ 0.95 all pass: 1.0
        //   angle: bearings 0° and 180° in both: 1.0
        //   overall = (0.4875 + 1 + 1) / 3
        let gt = map(&[
            ("sofa", [0.0, 0.0, 2.0, 1.0]),
            ("table", [3.0, 0.0, 4.0, 1.0]),
            ("lamp", [0.0, 3.0, 0.5, 3.5]),
        ]);
        let pred = map(&[
            ("sofa", [0.0, 0.0, 2.2, 1.0]),
            ("table", [3.0, 0.0, 4.0, 1.0]),
            ("chair", [0.0, 3.0, 0.5, 3.5]),
        ]);
        let r = evaluate_map(&pred, &gt, &cfg());
        assert_eq!(r.matched, 2);
        assert_eq!((r.unmatched_pred, r.unmatched_gt), (1, 1));
        assert!((r.size_acc - 0.4875).abs() < 1e-12);
        assert_eq!(r.distance_acc, 1.0);
        assert_eq!(r.angle_acc, 1.0);
        assert!((r.overall - (0.4875 + 2.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rasterize_examples() {
        let extent = Box2::from_array([0.0, 0.0, 10.0, 10.0]).unwrap();
        let m = map(&[
            ("lo", [0.0, 0.0, 0.0, 0.0]),
            ("hi", [10.0, 10.0, 10.0, 10.0]),
            ("mid", [2.0, 7.0, 3.0, 8.0]),
        ]);
        let g = rasterize(&m, 10, extent).unwrap();
        assert_eq!((g.cells[0].row, g.cells[0].col), (0, 0));
        assert_eq!((g.cells[1].row, g.cells[1].col), (9, 9));
        assert_eq!((g.cells[2].row, g.cells[2].col), (7, 2));
        assert!(rasterize(&m, 0, extent).is_err());
        let flat = Box2::from_array([0.0, 0.0, 10.0, 0.0]).unwrap();
        assert_eq!(rasterize(&m, 10, flat), Err(MapEvalError::Extent));
        let c = g.cell_center(7, 2);
        assert_eq!((c.x, c.y), (2.5, 7.5));
    }

    #[test]
    fn default_extent_pads_bounds() {
        let e = default_extent(&room()).unwrap();
        assert!((e.min.x - -0.35).abs() < 1e-12 && (e.max.y - 7.35).abs() < 1e-12);
        let point = map(&[("p", [1.0, 1.0, 1.0, 1.0])]);
        let e = default_extent(&point).unwrap();
        assert_eq!(e.to_array(), [0.5, 0.5, 1.5, 1.5]);
        assert_eq!(
            default_extent(&LayoutMap::default()),
            Err(MapEvalError::EmptyMap)
        );
    }
}
