use serde::{Deserialize, Serialize};

use super::raster::{decode_png, encode_gray16, Raster};
use crate::error::{check_dims, Error, Result};
use crate::par;

/// Depth file resolution: stored value = metres × 256.
pub const DEPTH_SCALE: f64 = 256.0;
/// Disparity file resolution: disparity = (stored − 1) / 256.
pub const DISPARITY_SCALE: f64 = 256.0;

fn check_shape(width: usize, height: usize, values: &[f64], valid: &[bool]) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::validation("raster must be non-empty"));
    }
    if values.len() != width * height || valid.len() != width * height {
        return Err(Error::validation(format!(
            "expected {} values and mask entries, found {} and {}",
            width * height,
            values.len(),
            valid.len()
        )));
    }
    Ok(())
}

macro_rules! masked_map {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            values: Vec<f64>,
            valid: Vec<bool>,
        }

        impl $name {
            /// Every valid entry must be finite and strictly positive.
            pub fn new(
                width: usize,
                height: usize,
                values: Vec<f64>,
                valid: Vec<bool>,
            ) -> Result<Self> {
                check_shape(width, height, &values, &valid)?;
                if let Some(i) = values
                    .iter()
                    .zip(&valid)
                    .position(|(&v, &ok)| ok && !(v > 0.0 && v.is_finite()))
                {
                    return Err(Error::validation(format!(
                        "valid {} at (row {}, col {}) is {}, must be finite and > 0",
                        $what,
                        i / width,
                        i % width,
                        values[i]
                    )));
                }
                Ok(Self {
                    width,
                    height,
                    values,
                    valid,
                })
            }

            /// `None` entries are invalid; invalid values are stored as 0.
            pub fn from_options(
                width: usize,
                height: usize,
                values: &[Option<f64>],
            ) -> Result<Self> {
                let valid = values.iter().map(Option::is_some).collect();
                let values = values.iter().map(|v| v.unwrap_or(0.0)).collect();
                Self::new(width, height, values, valid)
            }

            /// Every pixel valid.
            pub fn dense(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
                let valid = vec![true; values.len()];
                Self::new(width, height, values, valid)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn dims(&self) -> (usize, usize) {
                (self.width, self.height)
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn valid(&self) -> &[bool] {
                &self.valid
            }

            pub fn get(&self, idx: usize) -> Option<f64> {
                self.valid[idx].then(|| self.values[idx])
            }

            pub fn valid_count(&self) -> usize {
                self.valid.iter().filter(|&&v| v).count()
            }
        }
    };
}

masked_map!(DepthMap, "depth");
masked_map!(DisparityMap, "disparity");

impl DepthMap {
    /// Multiplies every valid depth by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let values = self.values.iter().map(|v| v * factor).collect();
        Self::new(self.width, self.height, values, self.valid.clone())
    }
}

/// Rectified stereo pair geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StereoCamera {
    pub baseline_m: f64,
    pub focal_px: f64,
}

impl StereoCamera {
    pub fn new(baseline_m: f64, focal_px: f64) -> Result<Self> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(baseline_m) || !ok(focal_px) {
            return Err(Error::validation(format!(
                "camera needs finite positive baseline and focal length, got baseline {baseline_m} m, focal {focal_px} px"
            )));
        }
        Ok(Self {
            baseline_m,
            focal_px,
        })
    }

    /// Accepts `{baseline_m, focal_px}` or a Cityscapes camera file
    /// (`extrinsic.baseline`, `intrinsic.fx`).
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Extrinsic {
            baseline: f64,
        }
        #[derive(Deserialize)]
        struct Intrinsic {
            fx: f64,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Doc {
            Flat {
                baseline_m: f64,
                focal_px: f64,
            },
            Cityscapes {
                extrinsic: Extrinsic,
                intrinsic: Intrinsic,
            },
        }
        match serde_json::from_slice::<Doc>(bytes)? {
            Doc::Flat {
                baseline_m,
                focal_px,
            } => Self::new(baseline_m, focal_px),
            Doc::Cityscapes {
                extrinsic,
                intrinsic,
            } => Self::new(extrinsic.baseline, intrinsic.fx),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("camera serializes")
    }
}

fn single_channel_16(img: &Raster, what: &str) -> Result<()> {
    if img.channels != 1 || img.bit_depth != 16 {
        return Err(Error::Format(format!(
            "{what} must be a 16-bit single-channel raster, found {} channels at {} bits",
            img.channels, img.bit_depth
        )));
    }
    Ok(())
}

pub fn decode_disparity(raster: &[u8]) -> Result<DisparityMap> {
    let img = decode_png(raster)?;
    single_channel_16(&img, "disparity")?;
    let valid: Vec<bool> = img.samples.iter().map(|&p| p > 1).collect();
    let values = img
        .samples
        .iter()
        .map(|&p| {
            if p > 1 {
                (p as f64 - 1.0) / DISPARITY_SCALE
            } else {
                0.0
            }
        })
        .collect();
    DisparityMap::new(img.width, img.height, values, valid)
}

/// Inverse of [`decode_disparity`] for disparities representable at 1/256 px.
pub fn encode_disparity(disp: &DisparityMap) -> Result<Vec<u8>> {
    let samples: Vec<u16> = disp
        .values
        .iter()
        .zip(&disp.valid)
        .map(|(&d, &ok)| {
            if ok {
                (d * DISPARITY_SCALE + 1.0).round().clamp(2.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect();
    encode_gray16(disp.width, disp.height, &samples)
}

/// `depth = focal · baseline / disparity` on valid pixels.
pub fn disparity_to_depth(disp: &DisparityMap, cam: &StereoCamera) -> DepthMap {
    let fb = cam.focal_px * cam.baseline_m;
    let values: Vec<f64> = par::map_chunks(&disp.values, par::PIXEL_CHUNK, |start, chunk| {
        chunk
            .iter()
            .zip(&disp.valid[start..start + chunk.len()])
            .map(|(&d, &ok)| if ok { fb / d } else { 0.0 })
            .collect::<Vec<_>>()
    })
    .concat();
    // f·B/d of a finite positive d is positive; it can only overflow for
    // subnormal disparities, which the 1/256 file format cannot produce.
    DepthMap {
        width: disp.width,
        height: disp.height,
        values,
        valid: disp.valid.clone(),
    }
}

/// Encoded depth raster plus how many pixels were clamped into range.
#[derive(Debug, Clone)]
pub struct EncodedDepth {
    pub png: Vec<u8>,
    pub clamped: usize,
}

pub fn depth_to_samples(depth: &DepthMap) -> (Vec<u16>, usize) {
    let mut clamped = 0;
    let samples = depth
        .values
        .iter()
        .zip(&depth.valid)
        .map(|(&d, &ok)| {
            if !ok {
                return 0;
            }
            let raw = (d * DEPTH_SCALE).round();
            if !(1.0..=65535.0).contains(&raw) {
                clamped += 1;
            }
            raw.clamp(1.0, 65535.0) as u16
        })
        .collect();
    (samples, clamped)
}

pub fn encode_depth(depth: &DepthMap) -> Result<EncodedDepth> {
    let (samples, clamped) = depth_to_samples(depth);
    if clamped > 0 {
        log::warn!("{clamped} depth pixel(s) clamped into the 16-bit range");
    }
    Ok(EncodedDepth {
        png: encode_gray16(depth.width, depth.height, &samples)?,
        clamped,
    })
}

pub fn decode_depth(raster: &[u8]) -> Result<DepthMap> {
    let img = decode_png(raster)?;
    single_channel_16(&img, "depth")?;
    let valid = img.samples.iter().map(|&p| p > 0).collect();
    let values = img
        .samples
        .iter()
        .map(|&p| p as f64 / DEPTH_SCALE)
        .collect();
    DepthMap::new(img.width, img.height, values, valid)
}

/// Validity masks must match exactly for a depth map derived from `disp`.
pub fn same_validity(a: &DepthMap, b: &DisparityMap) -> Result<bool> {
    check_dims(a.dims(), b.dims())?;
    Ok(a.valid == b.valid)
}
