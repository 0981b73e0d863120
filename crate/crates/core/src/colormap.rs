//! Panoptic-depth color maps. Thing segments are colored by their instance
//! depth along the HSV hue ramp red (near) → green → blue (far); stuff
//! segments take a fixed semantic palette color.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset_io::raster::encode_rgb8;
use crate::dataset_io::{ClassSet, PanopticMap};
use crate::error::{Error, Result};
use crate::fusion::InstanceDepthRecord;
use crate::par;

pub type Rgb = [u8; 3];

pub const HUE_FAR_DEG: f64 = 240.0;
pub const BLACK: Rgb = [0, 0, 0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorMapConfig {
    pub near_m: f64,
    pub far_m: f64,
    pub stuff_palette: BTreeMap<u32, Rgb>,
    pub undefined_depth_color: Rgb,
    pub draw_boundaries: bool,
}

impl Default for ColorMapConfig {
    fn default() -> Self {
        Self {
            near_m: 0.0,
            far_m: 80.0,
            stuff_palette: cityscapes_palette(),
            undefined_depth_color: [128, 128, 128],
            draw_boundaries: true,
        }
    }
}

impl ColorMapConfig {
    pub fn validate(&self, classes: &ClassSet) -> Result<()> {
        if !(self.near_m.is_finite() && self.far_m.is_finite() && self.near_m < self.far_m) {
            return Err(Error::validation(format!(
                "color range needs near < far, got [{}, {}]",
                self.near_m, self.far_m
            )));
        }
        if let Some(c) = classes
            .stuff()
            .find(|c| !self.stuff_palette.contains_key(&c.id))
        {
            return Err(Error::validation(format!(
                "stuff category {} ({}) has no palette entry",
                c.id, c.name
            )));
        }
        Ok(())
    }
}

/// Standard Cityscapes colors for the stuff classes of [`ClassSet::cityscapes`].
pub fn cityscapes_palette() -> BTreeMap<u32, Rgb> {
    BTreeMap::from([
        (7, [128, 64, 128]),
        (8, [244, 35, 232]),
        (11, [70, 70, 70]),
        (12, [102, 102, 156]),
        (13, [190, 153, 153]),
        (17, [153, 153, 153]),
        (19, [250, 170, 30]),
        (20, [220, 220, 0]),
        (21, [107, 142, 35]),
        (22, [152, 251, 152]),
        (23, [70, 130, 180]),
    ])
}

/// Palette file: `{"<category_id>": [r, g, b], ...}`.
pub fn palette_from_json(bytes: &[u8]) -> Result<BTreeMap<u32, Rgb>> {
    let raw: BTreeMap<String, Rgb> = serde_json::from_slice(bytes)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<u32>()
                .map(|id| (id, v))
                .map_err(|_| Error::validation(format!("palette key {k:?} is not a category id")))
        })
        .collect()
}

pub fn palette_to_json(palette: &BTreeMap<u32, Rgb>) -> String {
    let raw: BTreeMap<String, Rgb> = palette.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    serde_json::to_string_pretty(&raw).expect("palette serializes")
}

/// Hue in degrees: 0 at `near_m`, 240 at `far_m`, clamped outside.
pub fn depth_to_hue(d: f64, cfg: &ColorMapConfig) -> f64 {
    let t = ((d - cfg.near_m) / (cfg.far_m - cfg.near_m)).clamp(0.0, 1.0);
    HUE_FAR_DEG * t
}

/// HSV to 8-bit RGB at full saturation and value.
pub fn hue_to_rgb(hue_deg: f64) -> Rgb {
    let h = hue_deg.rem_euclid(360.0) / 60.0;
    let sector = h.floor();
    let f = h - sector;
    let (r, g, b) = match sector as u32 {
        0 => (1.0, f, 0.0),
        1 => (1.0 - f, 1.0, 0.0),
        2 => (0.0, 1.0, f),
        3 => (0.0, 1.0 - f, 1.0),
        4 => (f, 0.0, 1.0),
        _ => (1.0, 0.0, 1.0 - f),
    };
    let q = |c: f64| (c * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

pub fn depth_to_color(d: f64, cfg: &ColorMapConfig) -> Rgb {
    hue_to_rgb(depth_to_hue(d, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub segment_id: u32,
    pub category: String,
    pub depth_m: Option<f64>,
    pub centroid: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB.
    pub rgb: Vec<u8>,
    pub annotations: Vec<Annotation>,
}

impl Rendered {
    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        let i = 3 * (row * self.width + col);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_rgb8(self.width, self.height, &self.rgb)
    }

    pub fn annotations_json(&self) -> String {
        serde_json::to_string_pretty(&self.annotations).expect("annotations serialize")
    }
}

/// True when the pixel's right or lower neighbour belongs to another id.
pub fn is_boundary(pan: &PanopticMap, row: usize, col: usize) -> bool {
    let id = pan.id_at(row, col);
    (col + 1 < pan.width() && pan.id_at(row, col + 1) != id)
        || (row + 1 < pan.height() && pan.id_at(row + 1, col) != id)
}

pub fn render(
    pan: &PanopticMap,
    records: &[InstanceDepthRecord],
    cfg: &ColorMapConfig,
    classes: &ClassSet,
) -> Result<Rendered> {
    cfg.validate(classes)?;
    let by_id: BTreeMap<u32, &InstanceDepthRecord> =
        records.iter().map(|r| (r.segment_id, r)).collect();
    if by_id.len() != records.len() {
        return Err(Error::validation(
            "duplicate segment ids in instance records",
        ));
    }
    if let Some(r) = records.iter().find(|r| pan.segment(r.segment_id).is_none()) {
        return Err(Error::validation(format!(
            "instance record for segment {} which is not in the panoptic map",
            r.segment_id
        )));
    }

    let mut colors: BTreeMap<u32, Rgb> = BTreeMap::new();
    let mut annotations = Vec::new();
    for seg in pan.segments() {
        let rec = by_id.get(&seg.id).ok_or_else(|| {
            Error::validation(format!("no instance record for segment {}", seg.id))
        })?;
        let color = if seg.is_thing {
            rec.mean_depth_m
                .map_or(cfg.undefined_depth_color, |d| depth_to_color(d, cfg))
        } else {
            *cfg.stuff_palette.get(&seg.category_id).ok_or_else(|| {
                Error::validation(format!(
                    "stuff category {} has no palette entry",
                    seg.category_id
                ))
            })?
        };
        colors.insert(seg.id, color);
        if seg.is_thing {
            annotations.push(Annotation {
                segment_id: seg.id,
                category: classes
                    .get(seg.category_id)
                    .map_or_else(|| seg.category_id.to_string(), |c| c.name.clone()),
                depth_m: rec.mean_depth_m,
                centroid: rec.centroid,
            });
        }
    }

    let rows: Vec<usize> = (0..pan.height()).collect();
    let rgb = par::map(&rows, |&row| {
        let mut line = Vec::with_capacity(3 * pan.width());
        for col in 0..pan.width() {
            let id = pan.id_at(row, col);
            let c = if id == 0 || (cfg.draw_boundaries && is_boundary(pan, row, col)) {
                BLACK
            } else {
                colors[&id]
            };
            line.extend_from_slice(&c);
        }
        line
    })
    .concat();

    Ok(Rendered {
        width: pan.width(),
        height: pan.height(),
        rgb,
        annotations,
    })
}
