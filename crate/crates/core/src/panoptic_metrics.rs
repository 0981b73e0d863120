//! Segment matching and the Panoptic Quality family.
//!
//! A predicted segment `p` and a ground-truth segment `g` match when they
//! share a category and `IoU(p, g) > 0.5`. IoU ignores pixels that are void or
//! crowd in the ground truth. With the strict threshold every segment has at
//! most one partner, so one pass over intersecting pairs finds the matching.
//! Per class:
//!
//! ```text
//! SQ = sum(IoU over TP) / |TP|
//! RQ = |TP| / (|TP| + |FP|/2 + |FN|/2)
//! PQ = SQ * RQ
//! ```
//!
//! Counts and IoU sums are accumulated over the whole dataset before
//! dividing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset_io::{ClassSet, PanopticMap};
use crate::error::{check_dims, Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt_id: u32,
    pub pred_id: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMatches {
    /// Sorted by `gt_id`.
    pub pairs: Vec<MatchedPair>,
    /// Unmatched non-crowd ground-truth ids.
    pub false_negatives: Vec<u32>,
    /// Unmatched prediction ids that count against the score.
    pub false_positives: Vec<u32>,
    /// Unmatched predictions lying mostly on void or crowd pixels.
    pub discarded: Vec<u32>,
}

impl ClassMatches {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.false_positives.len()
    }

    pub fn fn_(&self) -> usize {
        self.false_negatives.len()
    }

    fn is_empty(&self) -> bool {
        self.pairs.is_empty()
            && self.false_negatives.is_empty()
            && self.false_positives.is_empty()
            && self.discarded.is_empty()
    }
}

/// Matching outcome for one image pair, keyed by category id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub per_class: BTreeMap<u32, ClassMatches>,
}

impl MatchResult {
    pub fn class(&self, category_id: u32) -> Option<&ClassMatches> {
        self.per_class.get(&category_id)
    }

    pub fn all_pairs(&self) -> impl Iterator<Item = &MatchedPair> {
        self.per_class.values().flat_map(|c| c.pairs.iter())
    }

    pub fn total_tp(&self) -> usize {
        self.per_class.values().map(ClassMatches::tp).sum()
    }

    pub fn total_fp(&self) -> usize {
        self.per_class.values().map(ClassMatches::fp).sum()
    }

    pub fn total_fn(&self) -> usize {
        self.per_class.values().map(ClassMatches::fn_).sum()
    }

    /// Drops empty per-class entries and sorts every list, giving a
    /// canonical form for equality checks.
    pub fn normalized(mut self) -> Self {
        self.per_class.retain(|_, c| !c.is_empty());
        for c in self.per_class.values_mut() {
            c.pairs.sort_by_key(|p| (p.gt_id, p.pred_id));
            c.false_negatives.sort_unstable();
            c.false_positives.sort_unstable();
            c.discarded.sort_unstable();
        }
        self
    }
}

/// Pixels excluded from IoU: void or crowd in the ground truth.
pub fn ignore_mask(gt: &PanopticMap) -> Vec<bool> {
    gt.ids()
        .iter()
        .map(|&id| id == 0 || gt.segment(id).is_some_and(|s| s.is_crowd))
        .collect()
}

/// `|A ∩ B \ ignore| / |A ∪ B \ ignore|`, 0 when the union is empty.
pub fn segment_iou(
    gt: &PanopticMap,
    gt_id: u32,
    pred: &PanopticMap,
    pred_id: u32,
    ignore: &[bool],
) -> Result<f64> {
    check_dims(gt.dims(), pred.dims())?;
    if gt.segment(gt_id).is_none() {
        return Err(Error::UnknownSegment(gt_id));
    }
    if pred.segment(pred_id).is_none() {
        return Err(Error::UnknownSegment(pred_id));
    }
    if ignore.len() != gt.ids().len() {
        return Err(Error::validation("ignore mask size differs from the maps"));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for ((&g, &p), &skip) in gt.ids().iter().zip(pred.ids()).zip(ignore) {
        if skip {
            continue;
        }
        let (in_a, in_b) = (g == gt_id, p == pred_id);
        inter += u64::from(in_a && in_b);
        union += u64::from(in_a || in_b);
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

fn check_categories(map: &PanopticMap, classes: &ClassSet, which: &str) -> Result<()> {
    match map.segments().find(|s| !classes.contains(s.category_id)) {
        Some(s) => Err(Error::validation(format!(
            "{which} segment {} has category {} outside the class set",
            s.id, s.category_id
        ))),
        None => Ok(()),
    }
}

#[derive(Default)]
struct OverlapCounts {
    /// (gt id, pred id) → shared pixels; only pairs with both ids non-void.
    intersections: BTreeMap<(u32, u32), u64>,
    pred_area: BTreeMap<u32, u64>,
    /// pred id → pixels on void or crowd ground truth.
    pred_ignored: BTreeMap<u32, u64>,
    gt_area: BTreeMap<u32, u64>,
}

impl OverlapCounts {
    fn merge(mut self, other: Self) -> Self {
        fn add<K: Ord>(into: &mut BTreeMap<K, u64>, from: BTreeMap<K, u64>) {
            for (k, v) in from {
                *into.entry(k).or_insert(0) += v;
            }
        }
        add(&mut self.intersections, other.intersections);
        add(&mut self.pred_area, other.pred_area);
        add(&mut self.pred_ignored, other.pred_ignored);
        add(&mut self.gt_area, other.gt_area);
        self
    }
}

fn overlap_counts(gt: &PanopticMap, pred: &PanopticMap, ignore: &[bool]) -> OverlapCounts {
    let gt_ids = gt.ids();
    let pred_ids = pred.ids();
    let parts = par::map_chunks(gt_ids, par::PIXEL_CHUNK, |start, chunk| {
        let mut c = OverlapCounts::default();
        for (k, &g) in chunk.iter().enumerate() {
            let i = start + k;
            let p = pred_ids[i];
            if g != 0 {
                *c.gt_area.entry(g).or_insert(0) += 1;
            }
            if p == 0 {
                continue;
            }
            *c.pred_area.entry(p).or_insert(0) += 1;
            if ignore[i] {
                *c.pred_ignored.entry(p).or_insert(0) += 1;
            } else {
                *c.intersections.entry((g, p)).or_insert(0) += 1;
            }
        }
        c
    });
    parts
        .into_iter()
        .fold(OverlapCounts::default(), OverlapCounts::merge)
}

/// Matches predicted to ground-truth segments class by class.
pub fn match_segments(
    gt: &PanopticMap,
    pred: &PanopticMap,
    classes: &ClassSet,
) -> Result<MatchResult> {
    check_dims(gt.dims(), pred.dims())?;
    check_categories(gt, classes, "ground-truth")?;
    check_categories(pred, classes, "predicted")?;

    let ignore = ignore_mask(gt);
    let counts = overlap_counts(gt, pred, &ignore);

    let mut result = MatchResult::default();
    let mut gt_matched = BTreeMap::new();
    let mut pred_matched = BTreeMap::new();

    for (&(g, p), &inter) in &counts.intersections {
        // Crowd and void gt pixels never reach `intersections`.
        let (gs, ps) = match (gt.segment(g), pred.segment(p)) {
            (Some(gs), Some(ps)) => (gs, ps),
            _ => continue,
        };
        if gs.category_id != ps.category_id {
            continue;
        }
        let union = counts.gt_area[&g] + counts.pred_area[&p]
            - inter
            - counts.pred_ignored.get(&p).copied().unwrap_or(0);
        // IoU > 1/2 without rounding.
        if 2 * inter > union {
            gt_matched.insert(g, p);
            pred_matched.insert(p, g);
            result
                .per_class
                .entry(gs.category_id)
                .or_default()
                .pairs
                .push(MatchedPair {
                    gt_id: g,
                    pred_id: p,
                    iou: inter as f64 / union as f64,
                });
        }
    }

    for seg in gt.segments() {
        if seg.is_crowd || gt_matched.contains_key(&seg.id) {
            continue;
        }
        result
            .per_class
            .entry(seg.category_id)
            .or_default()
            .false_negatives
            .push(seg.id);
    }
    for seg in pred.segments() {
        if pred_matched.contains_key(&seg.id) {
            continue;
        }
        let area = counts.pred_area[&seg.id];
        let ignored = counts.pred_ignored.get(&seg.id).copied().unwrap_or(0);
        let entry = result.per_class.entry(seg.category_id).or_default();
        if 2 * ignored > area {
            entry.discarded.push(seg.id);
        } else {
            entry.false_positives.push(seg.id);
        }
    }

    Ok(result.normalized())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub iou_sum: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassStats {
    fn add(&mut self, other: &ClassStats) {
        self.iou_sum += other.iou_sum;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Dataset-level accumulation state: per-class sums, mergeable in any order
/// (the integer counts exactly, the IoU sums up to float reassociation).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PqAccumulator {
    stats: BTreeMap<u32, ClassStats>,
    images: usize,
}

impl PqAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, m: &MatchResult) {
        for (&class, c) in &m.per_class {
            // Summed in value order so the result does not depend on ids.
            let mut ious: Vec<f64> = c.pairs.iter().map(|p| p.iou).collect();
            ious.sort_by(f64::total_cmp);
            let s = ClassStats {
                iou_sum: ious.iter().sum(),
                tp: c.tp() as u64,
                fp: c.fp() as u64,
                fn_: c.fn_() as u64,
            };
            self.stats.entry(class).or_default().add(&s);
        }
        self.images += 1;
    }

    pub fn merge(&mut self, other: &PqAccumulator) {
        for (&class, s) in &other.stats {
            self.stats.entry(class).or_default().add(s);
        }
        self.images += other.images;
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn stats(&self, class: u32) -> Option<&ClassStats> {
        self.stats.get(&class)
    }

    pub fn finalize(&self, classes: &ClassSet) -> Result<PqReport> {
        if let Some(unknown) = self.stats.keys().find(|c| !classes.contains(**c)) {
            return Err(Error::validation(format!(
                "accumulated class {unknown} is not in the class set"
            )));
        }
        let per_class: Vec<ClassPq> = classes
            .iter()
            .map(|def| {
                let s = self.stats.get(&def.id).copied().unwrap_or_default();
                ClassPq::from_stats(def.id, &def.name, def.isthing, s)
            })
            .collect();
        let aggregate = Aggregate::over(per_class.iter());
        let things = Aggregate::over(per_class.iter().filter(|c| c.is_thing));
        let stuff = Aggregate::over(per_class.iter().filter(|c| !c.is_thing));
        Ok(PqReport {
            per_class,
            aggregate,
            things,
            stuff,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPq {
    pub class_id: u32,
    pub name: String,
    pub is_thing: bool,
    pub iou_sum: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// `None` when the class never occurs in ground truth or prediction.
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub rq: Option<f64>,
}

impl ClassPq {
    fn from_stats(class_id: u32, name: &str, is_thing: bool, s: ClassStats) -> Self {
        let (pq, sq, rq) = if s.tp == 0 && s.fp == 0 && s.fn_ == 0 {
            (None, None, None)
        } else if s.tp == 0 {
            (Some(0.0), Some(0.0), Some(0.0))
        } else {
            let tp = s.tp as f64;
            let sq = s.iou_sum / tp;
            let rq = tp / (tp + 0.5 * s.fp as f64 + 0.5 * s.fn_ as f64);
            (Some(sq * rq), Some(sq), Some(rq))
        };
        Self {
            class_id,
            name: name.to_string(),
            is_thing,
            iou_sum: s.iou_sum,
            tp: s.tp,
            fp: s.fp,
            fn_: s.fn_,
            pq,
            sq,
            rq,
        }
    }

    pub fn contributes(&self) -> bool {
        self.pq.is_some()
    }
}

/// Means over contributing classes; all `None` when no class contributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub rq: Option<f64>,
    pub num_classes: usize,
}

impl Aggregate {
    fn over<'a>(classes: impl Iterator<Item = &'a ClassPq>) -> Self {
        let (mut pq, mut sq, mut rq, mut n) = (0.0, 0.0, 0.0, 0usize);
        for c in classes.filter(|c| c.contributes()) {
            pq += c.pq.unwrap_or(0.0);
            sq += c.sq.unwrap_or(0.0);
            rq += c.rq.unwrap_or(0.0);
            n += 1;
        }
        if n == 0 {
            return Self {
                pq: None,
                sq: None,
                rq: None,
                num_classes: 0,
            };
        }
        let n_f = n as f64;
        Self {
            pq: Some(pq / n_f),
            sq: Some(sq / n_f),
            rq: Some(rq / n_f),
            num_classes: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqReport {
    pub per_class: Vec<ClassPq>,
    pub aggregate: Aggregate,
    pub things: Aggregate,
    pub stuff: Aggregate,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
}

impl PqReport {
    pub fn class(&self, class_id: u32) -> Option<&ClassPq> {
        self.per_class.iter().find(|c| c.class_id == class_id)
    }

    /// Human-readable table, values in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} | {:>6} | {:>6} | {:>6} | {:>5} | {:>5} | {:>5}",
            "Class", "PQ", "SQ", "RQ", "TP", "FP", "FN"
        );
        let _ = writeln!(out, "{}", "-".repeat(66));
        for c in self.per_class.iter().filter(|c| c.contributes()) {
            let _ = writeln!(
                out,
                "{:<16} | {:>6} | {:>6} | {:>6} | {:>5} | {:>5} | {:>5}",
                c.name,
                pct(c.pq),
                pct(c.sq),
                pct(c.rq),
                c.tp,
                c.fp,
                c.fn_
            );
        }
        let _ = writeln!(out, "{}", "-".repeat(66));
        for (label, a) in [
            ("All", &self.aggregate),
            ("Things", &self.things),
            ("Stuff", &self.stuff),
        ] {
            let _ = writeln!(
                out,
                "{:<16} | {:>6} | {:>6} | {:>6} | {:>5} classes",
                label,
                pct(a.pq),
                pct(a.sq),
                pct(a.rq),
                a.num_classes
            );
        }
        out
    }
}
