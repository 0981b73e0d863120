//! Instance-level depth: the arithmetic mean of the valid depths inside each
//! segment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset_io::{DepthMap, PanopticMap};
use crate::error::{check_dims, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDepthRecord {
    pub segment_id: u32,
    pub category_id: u32,
    pub is_thing: bool,
    /// `None` when no pixel of the segment has a valid depth.
    pub mean_depth_m: Option<f64>,
    pub pixel_count: u64,
    pub valid_pixel_count: u64,
    /// Mean `(row, col)` over all pixels of the segment.
    pub centroid: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default)]
struct SegmentAcc {
    pixels: u64,
    valid: u64,
    depth_sum: f64,
    row_sum: f64,
    col_sum: f64,
}

impl SegmentAcc {
    fn merge(&mut self, o: &SegmentAcc) {
        self.pixels += o.pixels;
        self.valid += o.valid;
        self.depth_sum += o.depth_sum;
        self.row_sum += o.row_sum;
        self.col_sum += o.col_sum;
    }
}

/// One record per segment, ascending by segment id.
pub fn instance_depths(pan: &PanopticMap, depth: &DepthMap) -> Result<Vec<InstanceDepthRecord>> {
    check_dims(pan.dims(), depth.dims())?;
    let width = pan.width();
    let (values, valid) = (depth.values(), depth.valid());

    // Fixed-size chunks merged in order keep the sums independent of the
    // thread count.
    let parts = par::map_chunks(pan.ids(), par::PIXEL_CHUNK, |start, chunk| {
        let mut acc: BTreeMap<u32, SegmentAcc> = BTreeMap::new();
        for (k, &id) in chunk.iter().enumerate() {
            if id == 0 {
                continue;
            }
            let i = start + k;
            let a = acc.entry(id).or_default();
            a.pixels += 1;
            a.row_sum += (i / width) as f64;
            a.col_sum += (i % width) as f64;
            if valid[i] {
                a.valid += 1;
                a.depth_sum += values[i];
            }
        }
        acc
    });
    let mut total: BTreeMap<u32, SegmentAcc> = BTreeMap::new();
    for part in &parts {
        for (id, a) in part {
            total.entry(*id).or_default().merge(a);
        }
    }

    Ok(pan
        .segments()
        .map(|seg| {
            let a = total.get(&seg.id).copied().unwrap_or_default();
            let n = a.pixels.max(1) as f64;
            InstanceDepthRecord {
                segment_id: seg.id,
                category_id: seg.category_id,
                is_thing: seg.is_thing,
                mean_depth_m: (a.valid > 0).then(|| a.depth_sum / a.valid as f64),
                pixel_count: a.pixels,
                valid_pixel_count: a.valid,
                centroid: [a.row_sum / n, a.col_sum / n],
            }
        })
        .collect())
}

pub fn records_to_json(records: &[InstanceDepthRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

pub fn records_from_json(bytes: &[u8]) -> Result<Vec<InstanceDepthRecord>> {
    Ok(serde_json::from_slice(bytes)?)
}
