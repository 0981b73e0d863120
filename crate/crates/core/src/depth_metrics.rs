//! Depth error metrics over the pixels valid in both maps. With `d` the
//! ground truth and `d*` the prediction, over `N` jointly valid pixels:
//!
//! ```text
//! sqErr  = mean(((d* - d) / d)^2)
//! absErr = mean(|d* - d| / d)
//! IRMSE  = 1000 * sqrt(mean((1/d* - 1/d)^2))          [1/km, d in metres]
//! SILog  = 100 * (mean(x^2) - mean(x)^2),  x = ln d - ln d*
//! delta_t = fraction with max(d/d*, d*/d) < t,  t in {1.25, 1.25^2, 1.25^3}
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset_io::DepthMap;
use crate::error::{check_dims, Error, Result};
use crate::par;

pub const DELTA_THRESHOLDS: [f64; 3] = [1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25];
pub const IRMSE_SCALE: f64 = 1000.0;
pub const SILOG_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    #[serde(rename = "sqErr")]
    pub sq_err: f64,
    #[serde(rename = "absErr")]
    pub abs_err: f64,
    #[serde(rename = "IRMSE")]
    pub irmse: f64,
    #[serde(rename = "SILog")]
    pub silog: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    pub delta_3: f64,
    pub n: u64,
    pub coverage: f64,
}

impl DepthReport {
    pub fn deltas(&self) -> [f64; 3] {
        [self.delta_1, self.delta_2, self.delta_3]
    }

    pub fn table_header() -> String {
        format!(
            "{:<16} | {:>8} | {:>8} | {:>8} | {:>8} | {:>7} | {:>7} | {:>7} | {:>9} | {:>8}",
            "Image",
            "sqErr",
            "absErr",
            "IRMSE",
            "SILog",
            "d<1.25",
            "d<1.25^2",
            "d<1.25^3",
            "pixels",
            "coverage"
        )
    }

    /// One row: errors as raw values, deltas and coverage in percent.
    pub fn table_row(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{:<16} | {:>8.4} | {:>8.4} | {:>8.2} | {:>8.2} | {:>7.1} | {:>8.1} | {:>8.1} | {:>9} | {:>7.1}%",
            label,
            self.sq_err,
            self.abs_err,
            self.irmse,
            self.silog,
            100.0 * self.delta_1,
            100.0 * self.delta_2,
            100.0 * self.delta_3,
            self.n,
            100.0 * self.coverage
        );
        s
    }
}

/// Partial sums over a pixel set. Merging is exact for the counts; the float
/// sums are merged in a fixed chunk order by [`DepthSums::from_maps`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DepthSums {
    pub n: u64,
    pub gt_valid: u64,
    pub sq_rel: f64,
    pub abs_rel: f64,
    pub inv_sq: f64,
    pub log_diff: f64,
    pub log_diff_sq: f64,
    pub within: [u64; 3],
}

impl DepthSums {
    pub fn merge(&mut self, o: &DepthSums) {
        self.n += o.n;
        self.gt_valid += o.gt_valid;
        self.sq_rel += o.sq_rel;
        self.abs_rel += o.abs_rel;
        self.inv_sq += o.inv_sq;
        self.log_diff += o.log_diff;
        self.log_diff_sq += o.log_diff_sq;
        for (a, b) in self.within.iter_mut().zip(o.within) {
            *a += b;
        }
    }

    fn push(&mut self, gt: f64, pred: f64) {
        let rel = (pred - gt) / gt;
        let inv = 1.0 / pred - 1.0 / gt;
        let x = gt.ln() - pred.ln();
        let ratio = (gt / pred).max(pred / gt);
        self.n += 1;
        self.sq_rel += rel * rel;
        self.abs_rel += rel.abs();
        self.inv_sq += inv * inv;
        self.log_diff += x;
        self.log_diff_sq += x * x;
        for (count, t) in self.within.iter_mut().zip(DELTA_THRESHOLDS) {
            *count += u64::from(ratio < t);
        }
    }

    pub fn from_maps(pred: &DepthMap, gt: &DepthMap) -> Result<Self> {
        check_dims(pred.dims(), gt.dims())?;
        let (pv, pm) = (pred.values(), pred.valid());
        let parts = par::map_chunks(gt.values(), par::PIXEL_CHUNK, |start, chunk| {
            let mut s = DepthSums::default();
            let gm = &gt.valid()[start..start + chunk.len()];
            for (k, (&g, &g_ok)) in chunk.iter().zip(gm).enumerate() {
                if !g_ok {
                    continue;
                }
                s.gt_valid += 1;
                if pm[start + k] {
                    s.push(g, pv[start + k]);
                }
            }
            s
        });
        let mut total = DepthSums::default();
        for p in &parts {
            total.merge(p);
        }
        Ok(total)
    }

    pub fn report(&self) -> Result<DepthReport> {
        if self.n == 0 {
            return Err(Error::EmptyEvaluation);
        }
        let n = self.n as f64;
        let mean_x = self.log_diff / n;
        let [d1, d2, d3] = self.within.map(|c| c as f64 / n);
        Ok(DepthReport {
            sq_err: self.sq_rel / n,
            abs_err: self.abs_rel / n,
            irmse: IRMSE_SCALE * (self.inv_sq / n).sqrt(),
            silog: (SILOG_SCALE * (self.log_diff_sq / n - mean_x * mean_x)).max(0.0),
            delta_1: d1,
            delta_2: d2,
            delta_3: d3,
            n: self.n,
            coverage: if self.gt_valid == 0 {
                0.0
            } else {
                n / self.gt_valid as f64
            },
        })
    }
}

pub fn evaluate_depth(pred: &DepthMap, gt: &DepthMap) -> Result<DepthReport> {
    DepthSums::from_maps(pred, gt)?.report()
}

pub fn sq_err(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    Ok(evaluate_depth(pred, gt)?.sq_err)
}

pub fn abs_err(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    Ok(evaluate_depth(pred, gt)?.abs_err)
}

pub fn irmse(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    Ok(evaluate_depth(pred, gt)?.irmse)
}

pub fn silog(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    Ok(evaluate_depth(pred, gt)?.silog)
}

/// Fraction of jointly valid pixels with `max(d/d*, d*/d) < t`; `t > 1`.
pub fn delta(pred: &DepthMap, gt: &DepthMap, t: f64) -> Result<f64> {
    if t.is_nan() || t <= 1.0 {
        return Err(Error::validation(format!(
            "delta threshold must exceed 1, got {t}"
        )));
    }
    check_dims(pred.dims(), gt.dims())?;
    let (mut n, mut hits) = (0u64, 0u64);
    for i in 0..gt.values().len() {
        if let (Some(g), Some(p)) = (gt.get(i), pred.get(i)) {
            n += 1;
            hits += u64::from((g / p).max(p / g) < t);
        }
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(hits as f64 / n as f64)
}
