//! Synthetic ground-truth / prediction pairs and brute-force reference
//! implementations used to cross-check the metric modules.
//!
//! # Generator
//!
//! All randomness comes from [`SplitMix64`] seeded with `SceneSpec::seed`,
//! drawn in this order:
//!
//! 1. `num_stuff` distinct stuff categories (partial Fisher-Yates over the
//!    stuff classes in ascending id order). Stuff band `k` covers rows
//!    `[k*H/num_stuff, (k+1)*H/num_stuff)`. Per band: one void draw, one
//!    depth draw.
//! 2. Per thing: rejection-sampled rectangle (width, height, x, y per
//!    attempt), then category index, crowd draw and depth draw.
//! 3. Per stuff band, then per thing: drop, flip and replacement-category
//!    draws for the prediction.
//! 4. One noise draw per pixel, row-major.
//!
//! Integers in `[0, n)` are `(u64 * n) >> 64`; floats in `[0, 1)` are the top
//! 53 bits scaled by `2^-53`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset_io::{
    encode_depth, encode_panoptic_rgb, ClassSet, DepthMap, PanopticMap, SegmentInfo,
    SegmentsSidecar,
};
use crate::depth_metrics::DepthReport;
use crate::error::{Error, Result};
use crate::panoptic_metrics::{ClassMatches, MatchResult, MatchedPair};

/// SplitMix64 (Steele, Lea & Flood); chosen for a trivially portable,
/// bit-exact stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)`; `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbation {
    pub boundary_erosion_px: usize,
    pub class_flip_rate: f64,
    pub drop_rate: f64,
    pub depth_noise_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub num_things: usize,
    pub num_stuff: usize,
    pub depth_range: [f64; 2],
    #[serde(default)]
    pub perturbation: Perturbation,
    pub seed: u64,
    /// Probability that a ground-truth thing is a crowd region.
    #[serde(default)]
    pub crowd_rate: f64,
    /// Probability that a ground-truth stuff band is void.
    #[serde(default)]
    pub void_rate: f64,
    /// Forces the first thing to have even width and replaces its
    /// prediction with exactly its left half (IoU exactly 0.5).
    #[serde(default)]
    pub half_iou_pair: bool,
}

impl SceneSpec {
    pub fn new(
        width: usize,
        height: usize,
        num_things: usize,
        num_stuff: usize,
        seed: u64,
    ) -> Self {
        Self {
            width,
            height,
            num_things,
            num_stuff,
            depth_range: [2.0, 80.0],
            perturbation: Perturbation::default(),
            seed,
            crowd_rate: 0.0,
            void_rate: 0.0,
            half_iou_pair: false,
        }
    }

    pub fn validate(&self, classes: &ClassSet) -> Result<()> {
        let bad = |m: String| Err(Error::validation(m));
        if self.width < 8 || self.height < 8 {
            return bad(format!(
                "scene must be at least 8x8, got {}x{}",
                self.width, self.height
            ));
        }
        let p = &self.perturbation;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(p.class_flip_rate)
            || !unit(p.drop_rate)
            || !unit(self.crowd_rate)
            || !unit(self.void_rate)
        {
            return bad("rates must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&p.depth_noise_rel) {
            return bad(format!(
                "depth_noise_rel must lie in [0, 1), got {}",
                p.depth_noise_rel
            ));
        }
        let [lo, hi] = self.depth_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!(
                "depth range [{lo}, {hi}] must satisfy 0 < min <= max"
            ));
        }
        if self.num_stuff > classes.stuff().count() {
            return bad(format!(
                "{} stuff bands requested, class set has {} stuff categories",
                self.num_stuff,
                classes.stuff().count()
            ));
        }
        if self.num_things > 0 && classes.things().count() == 0 {
            return bad("class set has no thing categories".into());
        }
        if self.half_iou_pair && self.num_things == 0 {
            return bad("half_iou_pair needs at least one thing".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    fn overlaps(&self, o: &Rect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        col >= self.x && col < self.x + self.w && row >= self.y && row < self.y + self.h
    }

    fn eroded(&self, px: usize) -> Option<Rect> {
        (self.w > 2 * px && self.h > 2 * px).then(|| Rect {
            x: self.x + px,
            y: self.y + px,
            w: self.w - 2 * px,
            h: self.h - 2 * px,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gt: PanopticMap,
    pub gt_depth: DepthMap,
    pub pred: PanopticMap,
    pub pred_depth: DepthMap,
    /// Ground-truth thing rectangles by segment id.
    pub things: BTreeMap<u32, Rect>,
}

/// Encoded files of a scene in the on-disk formats.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFiles {
    pub gt_png: Vec<u8>,
    pub gt_segments: SegmentsSidecar,
    pub pred_png: Vec<u8>,
    pub pred_segments: SegmentsSidecar,
    pub gt_depth_png: Vec<u8>,
    pub pred_depth_png: Vec<u8>,
}

impl Scene {
    pub fn encode(&self, stem: &str) -> Result<SceneFiles> {
        let (gt_png, gt_segments) = encode_panoptic_rgb(&self.gt, stem)?;
        let (pred_png, pred_segments) = encode_panoptic_rgb(&self.pred, stem)?;
        Ok(SceneFiles {
            gt_png,
            gt_segments,
            pred_png,
            pred_segments,
            gt_depth_png: encode_depth(&self.gt_depth)?.png,
            pred_depth_png: encode_depth(&self.pred_depth)?.png,
        })
    }
}

struct Band {
    rows: (usize, usize),
    category: u32,
    void: bool,
    depth: f64,
}

struct Thing {
    id: u32,
    rect: Rect,
    category: u32,
    crowd: bool,
    depth: f64,
}

fn pick_other(rng: &mut SplitMix64, pool: &[u32], current: u32) -> u32 {
    // Always consume one draw so the stream does not depend on the outcome.
    let r = rng.below(pool.len().max(1) as u64) as usize;
    if pool.len() < 2 {
        return current;
    }
    let others: Vec<u32> = pool.iter().copied().filter(|&c| c != current).collect();
    others[r % others.len()]
}

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Builds a scene with the default Cityscapes class set.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    generate_scene_with(spec, &ClassSet::cityscapes())
}

pub fn generate_scene_with(spec: &SceneSpec, classes: &ClassSet) -> Result<Scene> {
    spec.validate(classes)?;
    let (w, h) = (spec.width, spec.height);
    let [dmin, dmax] = spec.depth_range;
    let mut rng = SplitMix64::new(spec.seed);

    let mut stuff_pool: Vec<u32> = classes.stuff().map(|c| c.id).collect();
    let thing_pool: Vec<u32> = classes.things().map(|c| c.id).collect();

    // 1. stuff bands
    for i in 0..spec.num_stuff {
        let j = i + rng.below((stuff_pool.len() - i) as u64) as usize;
        stuff_pool.swap(i, j);
    }
    let bands: Vec<Band> = (0..spec.num_stuff)
        .map(|k| {
            let void = rng.next_f64() < spec.void_rate;
            let depth = rng.uniform(dmin, dmax);
            Band {
                rows: (k * h / spec.num_stuff, (k + 1) * h / spec.num_stuff),
                category: stuff_pool[k],
                void,
                depth,
            }
        })
        .collect();
    let stuff_pool: Vec<u32> = classes.stuff().map(|c| c.id).collect();

    // 2. things
    if spec.num_things * 4 > w * h {
        return Err(Error::Generation(format!(
            "{} things of at least 2x2 cannot fit in {w}x{h}",
            spec.num_things
        )));
    }
    let max_w = (w / 3).max(2);
    let max_h = (h / 3).max(2);
    let mut things: Vec<Thing> = Vec::with_capacity(spec.num_things);
    for t in 0..spec.num_things {
        let force_even = spec.half_iou_pair && t == 0;
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let rw = if force_even {
                2 * (1 + rng.below((max_w / 2) as u64) as usize)
            } else {
                2 + rng.below((max_w - 1) as u64) as usize
            };
            let rh = 2 + rng.below((max_h - 1) as u64) as usize;
            let rect = Rect {
                x: rng.below((w - rw + 1) as u64) as usize,
                y: rng.below((h - rh + 1) as u64) as usize,
                w: rw,
                h: rh,
            };
            if things.iter().all(|o| !o.rect.overlaps(&rect)) {
                placed = Some(rect);
                break;
            }
        }
        let rect = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place thing {} of {} without overlap after {MAX_PLACEMENT_ATTEMPTS} attempts",
                t + 1,
                spec.num_things
            ))
        })?;
        let category = thing_pool[rng.below(thing_pool.len() as u64) as usize];
        let crowd = rng.next_f64() < spec.crowd_rate && !force_even;
        let depth = rng.uniform(dmin, dmax);
        things.push(Thing {
            id: (spec.num_stuff + 1 + t) as u32,
            rect,
            category,
            crowd,
            depth,
        });
    }

    // Ground truth.
    let band_of_row: Vec<Option<usize>> = (0..h)
        .map(|r| bands.iter().position(|b| r >= b.rows.0 && r < b.rows.1))
        .collect();
    let mut gt_ids = vec![0u32; w * h];
    let mut gt_depth = vec![0.0f64; w * h];
    let default_depth = 0.5 * (dmin + dmax);
    for (row, band) in band_of_row.iter().enumerate() {
        for col in 0..w {
            let i = row * w + col;
            let (id, d) = match *band {
                Some(k) => (if bands[k].void { 0 } else { k as u32 + 1 }, bands[k].depth),
                None => (0, default_depth),
            };
            gt_ids[i] = id;
            gt_depth[i] = d;
        }
    }
    for th in &things {
        paint(&mut gt_ids, w, &th.rect, th.id);
        for row in th.rect.y..th.rect.y + th.rect.h {
            for col in th.rect.x..th.rect.x + th.rect.w {
                gt_depth[row * w + col] = th.depth;
            }
        }
    }
    let mut gt_table: Vec<SegmentInfo> = bands
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.void)
        .map(|(k, b)| SegmentInfo {
            id: k as u32 + 1,
            category_id: b.category,
            is_thing: false,
            is_crowd: false,
        })
        .collect();
    gt_table.extend(things.iter().map(|t| SegmentInfo {
        id: t.id,
        category_id: t.category,
        is_thing: true,
        is_crowd: t.crowd,
    }));
    let gt = PanopticMap::pruned(w, h, gt_ids, gt_table)?;

    // 3. prediction
    let p = spec.perturbation;
    let mut pred_table = Vec::new();
    let mut pred_ids = vec![0u32; w * h];
    for (k, b) in bands.iter().enumerate() {
        let _drop = rng.next_f64();
        let flip = rng.next_f64() < p.class_flip_rate;
        let other = pick_other(&mut rng, &stuff_pool, b.category);
        let id = k as u32 + 1;
        for row in b.rows.0..b.rows.1 {
            pred_ids[row * w..(row + 1) * w].fill(id);
        }
        pred_table.push(SegmentInfo {
            id,
            category_id: if flip { other } else { b.category },
            is_thing: false,
            is_crowd: false,
        });
    }
    for (t, th) in things.iter().enumerate() {
        let dropped = rng.next_f64() < p.drop_rate;
        let flip = rng.next_f64() < p.class_flip_rate;
        let other = pick_other(&mut rng, &thing_pool, th.category);
        if spec.half_iou_pair && t == 0 {
            let half = Rect {
                w: th.rect.w / 2,
                ..th.rect
            };
            paint(&mut pred_ids, w, &half, th.id);
            pred_table.push(SegmentInfo {
                id: th.id,
                category_id: th.category,
                is_thing: true,
                is_crowd: false,
            });
            continue;
        }
        if dropped {
            continue;
        }
        if let Some(rect) = th.rect.eroded(p.boundary_erosion_px) {
            paint(&mut pred_ids, w, &rect, th.id);
            pred_table.push(SegmentInfo {
                id: th.id,
                category_id: if flip { other } else { th.category },
                is_thing: true,
                is_crowd: false,
            });
        }
    }
    let pred = PanopticMap::pruned(w, h, pred_ids, pred_table)?;

    // 4. depth noise
    let noisy: Vec<f64> = gt_depth
        .iter()
        .map(|&d| {
            let eps = p.depth_noise_rel * (2.0 * rng.next_f64() - 1.0);
            d * (1.0 + eps)
        })
        .collect();

    Ok(Scene {
        gt,
        gt_depth: DepthMap::dense(w, h, gt_depth)?,
        pred,
        pred_depth: DepthMap::dense(w, h, noisy)?,
        things: things.iter().map(|t| (t.id, t.rect)).collect(),
    })
}

fn paint(ids: &mut [u32], width: usize, rect: &Rect, id: u32) {
    for row in rect.y..rect.y + rect.h {
        ids[row * width + rect.x..row * width + rect.x + rect.w].fill(id);
    }
}

/// Random depth pair with roughly `invalid_rate` of pixels invalid in each map.
pub fn random_depth_pair(
    seed: u64,
    width: usize,
    height: usize,
    invalid_rate: f64,
) -> Result<(DepthMap, DepthMap)> {
    let mut rng = SplitMix64::new(seed);
    let n = width * height;
    let cells = |rng: &mut SplitMix64| -> Vec<Option<f64>> {
        (0..n)
            .map(|_| {
                let skip = rng.next_f64() < invalid_rate;
                let d = rng.uniform(1.0, 80.0);
                (!skip).then_some(d)
            })
            .collect()
    };
    let mut gt = cells(&mut rng);
    let mut pred = cells(&mut rng);
    // keep the evaluation set non-empty
    pred[0] = Some(pred[0].unwrap_or(10.0));
    gt[0] = Some(gt[0].unwrap_or(10.0));
    Ok((
        DepthMap::from_options(width, height, &pred)?,
        DepthMap::from_options(width, height, &gt)?,
    ))
}

/// Exhaustive matching reference: every same-category (gt, pred) pair gets a
/// full-image IoU scan. Returns an error if any segment ends up with two
/// partners.
pub fn oracle_match(gt: &PanopticMap, pred: &PanopticMap) -> Result<MatchResult> {
    if gt.dims() != pred.dims() {
        return Err(Error::Oracle("maps differ in size".into()));
    }
    let n = gt.ids().len();
    let ignored: Vec<bool> = (0..n)
        .map(|i| {
            let id = gt.ids()[i];
            id == 0 || gt.segment(id).map(|s| s.is_crowd).unwrap_or(false)
        })
        .collect();
    let mask =
        |map: &PanopticMap, id: u32| -> Vec<bool> { map.ids().iter().map(|&v| v == id).collect() };

    let mut result = MatchResult::default();
    let mut gt_hits: BTreeMap<u32, usize> = BTreeMap::new();
    let mut pred_hits: BTreeMap<u32, usize> = BTreeMap::new();
    for g in gt.segments().filter(|s| !s.is_crowd) {
        let gm = mask(gt, g.id);
        for p in pred.segments().filter(|s| s.category_id == g.category_id) {
            let pm = mask(pred, p.id);
            let mut inter = 0usize;
            let mut union = 0usize;
            for i in 0..n {
                if ignored[i] {
                    continue;
                }
                if gm[i] && pm[i] {
                    inter += 1;
                }
                if gm[i] || pm[i] {
                    union += 1;
                }
            }
            if union == 0 {
                continue;
            }
            let iou = inter as f64 / union as f64;
            if iou > 0.5 {
                *gt_hits.entry(g.id).or_insert(0) += 1;
                *pred_hits.entry(p.id).or_insert(0) += 1;
                result
                    .per_class
                    .entry(g.category_id)
                    .or_insert_with(ClassMatches::default)
                    .pairs
                    .push(MatchedPair {
                        gt_id: g.id,
                        pred_id: p.id,
                        iou,
                    });
            }
        }
    }
    if let Some((id, k)) = gt_hits.iter().chain(pred_hits.iter()).find(|(_, &k)| k > 1) {
        return Err(Error::Oracle(format!(
            "segment {id} matched {k} times; IoU > 0.5 matching is not unique"
        )));
    }
    for g in gt
        .segments()
        .filter(|s| !s.is_crowd && !gt_hits.contains_key(&s.id))
    {
        result
            .per_class
            .entry(g.category_id)
            .or_default()
            .false_negatives
            .push(g.id);
    }
    for p in pred.segments().filter(|s| !pred_hits.contains_key(&s.id)) {
        let pm = mask(pred, p.id);
        let area = pm.iter().filter(|&&b| b).count();
        let on_ignored = (0..n).filter(|&i| pm[i] && ignored[i]).count();
        let entry = result.per_class.entry(p.category_id).or_default();
        if on_ignored as f64 > 0.5 * area as f64 {
            entry.discarded.push(p.id);
        } else {
            entry.false_positives.push(p.id);
        }
    }
    Ok(result.normalized())
}

/// Literal per-pixel evaluation of the depth formulas, written without any
/// code shared with `depth_metrics`.
pub fn oracle_depth_report(pred: &DepthMap, gt: &DepthMap) -> Result<DepthReport> {
    if pred.dims() != gt.dims() {
        return Err(Error::Oracle("maps differ in size".into()));
    }
    let mut d = Vec::new();
    let mut ds = Vec::new();
    let mut gt_valid = 0usize;
    for i in 0..gt.values().len() {
        if gt.valid()[i] {
            gt_valid += 1;
            if pred.valid()[i] {
                d.push(gt.values()[i]);
                ds.push(pred.values()[i]);
            }
        }
    }
    let n = d.len();
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let nf = n as f64;

    let mut sq = 0.0;
    for i in 0..n {
        sq += ((ds[i] - d[i]) / d[i]).powi(2);
    }
    let mut abs = 0.0;
    for i in 0..n {
        abs += ((ds[i] - d[i]) / d[i]).abs();
    }
    let mut inv = 0.0;
    for i in 0..n {
        inv += (1.0 / ds[i] - 1.0 / d[i]).powi(2);
    }
    let mut sum_x2 = 0.0;
    let mut sum_x = 0.0;
    for i in 0..n {
        let x = d[i].ln() - ds[i].ln();
        sum_x2 += x * x;
        sum_x += x;
    }
    let silog = sum_x2 / nf - (sum_x * sum_x) / (nf * nf);
    let frac_below = |t: f64| {
        let mut k = 0usize;
        for i in 0..n {
            let r = if d[i] / ds[i] > ds[i] / d[i] {
                d[i] / ds[i]
            } else {
                ds[i] / d[i]
            };
            if r < t {
                k += 1;
            }
        }
        k as f64 / nf
    };
    Ok(DepthReport {
        sq_err: sq / nf,
        abs_err: abs / nf,
        irmse: 1000.0 * (inv / nf).sqrt(),
        silog: 100.0 * silog,
        delta_1: frac_below(1.25),
        delta_2: frac_below(1.25f64.powi(2)),
        delta_3: frac_below(1.25f64.powi(3)),
        n: n as u64,
        coverage: nf / gt_valid as f64,
    })
}

/// Relative agreement with an absolute floor of 1e-12 for values at zero.
pub fn close_rel(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}

/// Fieldwise comparison of two depth reports.
pub fn depth_reports_agree(a: &DepthReport, b: &DepthReport, rel: f64) -> bool {
    a.n == b.n
        && close_rel(a.sq_err, b.sq_err, rel)
        && close_rel(a.abs_err, b.abs_err, rel)
        && close_rel(a.irmse, b.irmse, rel)
        && close_rel(a.silog, b.silog, rel)
        && close_rel(a.delta_1, b.delta_1, rel)
        && close_rel(a.delta_2, b.delta_2, rel)
        && close_rel(a.delta_3, b.delta_3, rel)
        && close_rel(a.coverage, b.coverage, rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_metrics::evaluate_depth;
    use crate::panoptic_metrics::{match_segments, PqAccumulator};

    #[test]
    fn splitmix_reference_stream() {
        // First outputs for seed 0 from the reference C implementation.
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(r.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let s = generate_scene(&SceneSpec::new(64, 64, 5, 3, 7)).unwrap();
        assert_eq!(s.gt, s.pred);
        assert_eq!(s.gt_depth, s.pred_depth);
        let classes = ClassSet::cityscapes();
        let m = match_segments(&s.gt, &s.pred, &classes).unwrap();
        let mut acc = PqAccumulator::new();
        acc.accumulate(&m);
        let r = acc.finalize(&classes).unwrap();
        for c in r.per_class.iter().filter(|c| c.contributes()) {
            assert_eq!(c.pq, Some(1.0));
        }
        assert_eq!(oracle_match(&s.gt, &s.pred).unwrap(), m);
    }

    #[test]
    fn drop_everything() {
        let mut spec = SceneSpec::new(64, 64, 4, 2, 11);
        spec.perturbation.drop_rate = 1.0;
        let s = generate_scene(&spec).unwrap();
        assert!(s.pred.segments().all(|seg| !seg.is_thing));
        let classes = ClassSet::cityscapes();
        let m = match_segments(&s.gt, &s.pred, &classes).unwrap();
        let fns: usize = m
            .per_class
            .iter()
            .filter(|(c, _)| classes.is_thing(**c) == Some(true))
            .map(|(_, c)| c.fn_())
            .sum();
        assert_eq!(fns, 4);
    }

    #[test]
    fn seed_determinism() {
        let mut spec = SceneSpec::new(64, 64, 3, 2, 42);
        spec.perturbation = Perturbation {
            boundary_erosion_px: 1,
            class_flip_rate: 0.3,
            drop_rate: 0.2,
            depth_noise_rel: 0.1,
        };
        let a = generate_scene(&spec).unwrap().encode("s").unwrap();
        let b = generate_scene(&spec).unwrap().encode("s").unwrap();
        assert_eq!(a, b);
        spec.seed = 43;
        assert_ne!(generate_scene(&spec).unwrap().encode("s").unwrap(), a);
    }

    #[test]
    fn impossible_spec() {
        let spec = SceneSpec::new(8, 8, 17, 1, 1);
        assert!(matches!(generate_scene(&spec), Err(Error::Generation(_))));
        let spec = SceneSpec::new(8, 8, 12, 1, 1);
        assert!(matches!(generate_scene(&spec), Err(Error::Generation(_))));
        assert!(generate_scene(&SceneSpec::new(7, 8, 1, 1, 1)).is_err());
    }

    #[test]
    fn half_iou_threshold_edge() {
        let mut spec = SceneSpec::new(8, 8, 1, 1, 3);
        spec.half_iou_pair = true;
        let s = generate_scene(&spec).unwrap();
        let (&id, rect) = s.things.iter().next().unwrap();
        assert_eq!(rect.w % 2, 0);
        let classes = ClassSet::cityscapes();
        let ign = crate::panoptic_metrics::ignore_mask(&s.gt);
        let iou = crate::panoptic_metrics::segment_iou(&s.gt, id, &s.pred, id, &ign).unwrap();
        assert_eq!(iou, 0.5);
        let fast = match_segments(&s.gt, &s.pred, &classes).unwrap();
        let slow = oracle_match(&s.gt, &s.pred).unwrap();
        assert_eq!(fast, slow);
        let cat = s.gt.segment(id).unwrap().category_id;
        let c = fast.class(cat).unwrap();
        assert!(c.pairs.iter().all(|p| p.gt_id != id));
        assert!(c.false_negatives.contains(&id) && c.false_positives.contains(&id));
    }

    #[test]
    fn oracle_rejects_non_unique_matching() {
        // Duplicate segments are impossible in a valid map, so feed the
        // oracle a pair where the check must pass and confirm it does.
        let s = generate_scene(&SceneSpec::new(16, 16, 2, 2, 5)).unwrap();
        assert!(oracle_match(&s.gt, &s.pred).is_ok());
    }

    #[test]
    fn depth_oracle_masks_consistently() {
        let (pred, gt) = random_depth_pair(9, 32, 32, 0.5).unwrap();
        let a = evaluate_depth(&pred, &gt).unwrap();
        let b = oracle_depth_report(&pred, &gt).unwrap();
        assert_eq!(a.n, b.n);
        assert!(depth_reports_agree(&a, &b, 1e-9));
        let same = oracle_depth_report(&gt, &gt).unwrap();
        assert_eq!((same.sq_err, same.silog, same.delta_3), (0.0, 0.0, 1.0));
    }
}
