use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize};

use super::raster::{decode_png, encode_gray16, encode_rgb8};
use crate::error::{Error, Result};

/// Accepts `true`/`false` as well as the `0`/`1` integers COCO-style files use.
fn flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Bool(bool),
        Int(i64),
    }
    Ok(match Flag::deserialize(d)? {
        Flag::Bool(b) => b,
        Flag::Int(i) => i != 0,
    })
}

fn int_flag<S: serde::Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub id: u32,
    pub name: String,
    #[serde(deserialize_with = "flag", serialize_with = "int_flag")]
    pub isthing: bool,
}

/// The active class set, keyed by category id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    classes: BTreeMap<u32, ClassDef>,
}

impl ClassSet {
    pub fn new(defs: impl IntoIterator<Item = ClassDef>) -> Result<Self> {
        let mut classes = BTreeMap::new();
        for def in defs {
            if let Some(prev) = classes.insert(def.id, def) {
                return Err(Error::validation(format!(
                    "duplicate class id {} in class list",
                    prev.id
                )));
            }
        }
        if classes.is_empty() {
            return Err(Error::validation("class list is empty"));
        }
        Ok(Self { classes })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let defs: Vec<ClassDef> = serde_json::from_slice(bytes)?;
        Self::new(defs)
    }

    pub fn to_json(&self) -> String {
        let defs: Vec<&ClassDef> = self.classes.values().collect();
        serde_json::to_string_pretty(&defs).expect("class list serializes")
    }

    /// Cityscapes panoptic classes, keyed by their `labelId`: 11 stuff and
    /// 8 thing categories.
    pub fn cityscapes() -> Self {
        const DEFS: [(u32, &str, bool); 19] = [
            (7, "road", false),
            (8, "sidewalk", false),
            (11, "building", false),
            (12, "wall", false),
            (13, "fence", false),
            (17, "pole", false),
            (19, "traffic light", false),
            (20, "traffic sign", false),
            (21, "vegetation", false),
            (22, "terrain", false),
            (23, "sky", false),
            (24, "person", true),
            (25, "rider", true),
            (26, "car", true),
            (27, "truck", true),
            (28, "bus", true),
            (31, "train", true),
            (32, "motorcycle", true),
            (33, "bicycle", true),
        ];
        Self::new(DEFS.iter().map(|&(id, name, isthing)| ClassDef {
            id,
            name: name.to_string(),
            isthing,
        }))
        .expect("built-in class list is valid")
    }

    pub fn get(&self, id: u32) -> Option<&ClassDef> {
        self.classes.get(&id)
    }

    pub fn contains(&self, id: u32) -> bool {
        self.classes.contains_key(&id)
    }

    pub fn is_thing(&self, id: u32) -> Option<bool> {
        self.get(id).map(|c| c.isthing)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassDef> {
        self.classes.values()
    }

    pub fn things(&self) -> impl Iterator<Item = &ClassDef> {
        self.iter().filter(|c| c.isthing)
    }

    pub fn stuff(&self) -> impl Iterator<Item = &ClassDef> {
        self.iter().filter(|c| !c.isthing)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

impl Default for ClassSet {
    fn default() -> Self {
        Self::cityscapes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: u32,
    pub category_id: u32,
    pub is_thing: bool,
    pub is_crowd: bool,
}

/// Per-pixel segment ids plus the segment table. Id 0 is void.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanopticMap {
    width: usize,
    height: usize,
    ids: Vec<u32>,
    segments: BTreeMap<u32, SegmentInfo>,
}

impl PanopticMap {
    /// Builds a map and checks every structural invariant. Table entries
    /// that never occur in the raster are rejected; use [`Self::pruned`] to
    /// drop them instead.
    pub fn new(
        width: usize,
        height: usize,
        ids: Vec<u32>,
        segments: impl IntoIterator<Item = SegmentInfo>,
    ) -> Result<Self> {
        let map = Self::assemble(width, height, ids, segments)?;
        let areas = map.areas();
        if let Some(seg) = map.segments.values().find(|s| !areas.contains_key(&s.id)) {
            return Err(Error::validation(format!(
                "segment {} has no pixels",
                seg.id
            )));
        }
        Ok(map)
    }

    /// Like [`Self::new`] but silently drops table entries with no pixels.
    pub fn pruned(
        width: usize,
        height: usize,
        ids: Vec<u32>,
        segments: impl IntoIterator<Item = SegmentInfo>,
    ) -> Result<Self> {
        let mut map = Self::assemble(width, height, ids, segments)?;
        let areas = map.areas();
        map.segments.retain(|id, _| areas.contains_key(id));
        Ok(map)
    }

    fn assemble(
        width: usize,
        height: usize,
        ids: Vec<u32>,
        segments: impl IntoIterator<Item = SegmentInfo>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("panoptic map must be non-empty"));
        }
        if ids.len() != width * height {
            return Err(Error::validation(format!(
                "id raster has {} entries, expected {}x{}",
                ids.len(),
                width,
                height
            )));
        }
        let mut table = BTreeMap::new();
        for seg in segments {
            if seg.id == 0 {
                return Err(Error::validation("segment id 0 is reserved for void"));
            }
            if seg.is_crowd && !seg.is_thing {
                return Err(Error::validation(format!(
                    "segment {} is crowd but not a thing",
                    seg.id
                )));
            }
            if table.insert(seg.id, seg).is_some() {
                return Err(Error::validation(format!(
                    "duplicate segment id {}",
                    seg.id
                )));
            }
        }
        if let Some((idx, &id)) = ids
            .iter()
            .enumerate()
            .find(|(_, &id)| id != 0 && !table.contains_key(&id))
        {
            return Err(Error::UnknownPixelId {
                id,
                row: idx / width,
                col: idx % width,
            });
        }
        Ok(Self {
            width,
            height,
            ids,
            segments: table,
        })
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

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn id_at(&self, row: usize, col: usize) -> u32 {
        self.ids[row * self.width + col]
    }

    pub fn segment(&self, id: u32) -> Option<&SegmentInfo> {
        self.segments.get(&id)
    }

    /// Segments in ascending id order.
    pub fn segments(&self) -> impl Iterator<Item = &SegmentInfo> {
        self.segments.values()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// Pixel count per segment id (void excluded).
    pub fn areas(&self) -> BTreeMap<u32, u64> {
        let mut areas = BTreeMap::new();
        for &id in self.ids.iter().filter(|&&id| id != 0) {
            *areas.entry(id).or_insert(0) += 1;
        }
        areas
    }

    /// Applies `f` to every segment id, keeping void at 0. `f` must be
    /// injective on the ids present.
    pub fn relabel(&self, f: impl Fn(u32) -> u32) -> Result<Self> {
        let ids = self
            .ids
            .iter()
            .map(|&id| if id == 0 { 0 } else { f(id) })
            .collect();
        let segments = self
            .segments
            .values()
            .map(|s| SegmentInfo { id: f(s.id), ..*s });
        Self::new(self.width, self.height, ids, segments)
    }

    pub fn to_sidecar(&self, image_id: &str) -> SegmentsSidecar {
        SegmentsSidecar {
            image_id: serde_json::Value::String(image_id.to_string()),
            segments_info: self
                .segments
                .values()
                .map(|s| SidecarSegment {
                    id: s.id,
                    category_id: s.category_id,
                    iscrowd: s.is_crowd,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarSegment {
    pub id: u32,
    pub category_id: u32,
    #[serde(default, deserialize_with = "flag", serialize_with = "int_flag")]
    pub iscrowd: bool,
}

/// Per-image segment table document (`segments_info` as in COCO panoptic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentsSidecar {
    #[serde(default)]
    pub image_id: serde_json::Value,
    pub segments_info: Vec<SidecarSegment>,
}

impl SegmentsSidecar {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PanopticEncoding {
    /// Raw 8/16-bit grayscale id per pixel, sidecar required.
    Id16,
    /// `id = R + 256 G + 256^2 B`, sidecar required.
    #[default]
    RgbId,
    /// Cityscapes `instanceIds`: `v >= 1000` is thing `v / 1000` instance
    /// `v % 1000`; smaller values are the category itself.
    CityscapeInstanceIds,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PanopticDecoder {
    pub encoding: PanopticEncoding,
    /// External label treated as void; remapped to id 0.
    pub void_label: Option<u32>,
}

impl PanopticDecoder {
    pub fn new(encoding: PanopticEncoding) -> Self {
        Self {
            encoding,
            void_label: None,
        }
    }

    pub fn decode(
        &self,
        raster: &[u8],
        sidecar: Option<&SegmentsSidecar>,
        classes: &ClassSet,
    ) -> Result<PanopticMap> {
        let img = decode_png(raster)?;
        let n = img.pixel_count();
        let mut ids: Vec<u32> = match self.encoding {
            PanopticEncoding::Id16 | PanopticEncoding::CityscapeInstanceIds => {
                if img.channels != 1 {
                    return Err(Error::Format(format!(
                        "{:?} expects a single-channel raster, found {} channels",
                        self.encoding, img.channels
                    )));
                }
                img.samples.iter().map(|&s| s as u32).collect()
            }
            PanopticEncoding::RgbId => {
                if img.bit_depth != 8 || !(img.channels == 3 || img.channels == 4) {
                    return Err(Error::Format(format!(
                        "rgb_id expects an 8-bit RGB raster, found {} channels at {} bits",
                        img.channels, img.bit_depth
                    )));
                }
                img.samples
                    .chunks_exact(img.channels)
                    .map(|px| px[0] as u32 + 256 * px[1] as u32 + 65536 * px[2] as u32)
                    .collect()
            }
        };
        debug_assert_eq!(ids.len(), n);
        if let Some(void) = self.void_label {
            for id in ids.iter_mut().filter(|id| **id == void) {
                *id = 0;
            }
        }

        let segments = match self.encoding {
            PanopticEncoding::CityscapeInstanceIds => {
                if sidecar.is_some() {
                    log::warn!("segment sidecar ignored for cityscape_instance_ids encoding");
                }
                cityscape_table(&mut ids, classes)?
            }
            _ => {
                let sidecar = sidecar.ok_or_else(|| {
                    Error::validation(format!(
                        "{:?} encoding requires a segment sidecar",
                        self.encoding
                    ))
                })?;
                sidecar_table(sidecar, classes)?
            }
        };
        PanopticMap::pruned(img.width, img.height, ids, segments)
    }
}

/// Decodes with the default void handling (only id 0 is void).
pub fn decode_panoptic(
    raster: &[u8],
    sidecar: Option<&SegmentsSidecar>,
    encoding: PanopticEncoding,
    classes: &ClassSet,
) -> Result<PanopticMap> {
    PanopticDecoder::new(encoding).decode(raster, sidecar, classes)
}

fn sidecar_table(sidecar: &SegmentsSidecar, classes: &ClassSet) -> Result<Vec<SegmentInfo>> {
    let mut seen = BTreeSet::new();
    sidecar
        .segments_info
        .iter()
        .map(|s| {
            if !seen.insert(s.id) {
                return Err(Error::validation(format!(
                    "duplicate segment id {} in sidecar",
                    s.id
                )));
            }
            let is_thing = classes.is_thing(s.category_id).ok_or_else(|| {
                Error::validation(format!(
                    "segment {} has category {} outside the class set",
                    s.id, s.category_id
                ))
            })?;
            Ok(SegmentInfo {
                id: s.id,
                category_id: s.category_id,
                is_thing,
                is_crowd: s.iscrowd,
            })
        })
        .collect()
}

/// Synthesizes the table for Cityscapes `instanceIds`. Pixels whose category
/// is outside the class set become void. Thing categories stored without an
/// instance number are crowd regions.
fn cityscape_table(ids: &mut [u32], classes: &ClassSet) -> Result<Vec<SegmentInfo>> {
    let mut table = BTreeMap::new();
    for id in ids.iter_mut() {
        let v = *id;
        if v == 0 {
            continue;
        }
        let category = if v >= 1000 { v / 1000 } else { v };
        let Some(is_thing) = classes.is_thing(category) else {
            *id = 0;
            continue;
        };
        if v >= 1000 && !is_thing {
            return Err(Error::validation(format!(
                "instance id {v} refers to stuff category {category}"
            )));
        }
        table.entry(v).or_insert(SegmentInfo {
            id: v,
            category_id: category,
            is_thing,
            is_crowd: is_thing && v < 1000,
        });
    }
    Ok(table.into_values().collect())
}

/// Encodes as `rgb_id` PNG plus its sidecar.
pub fn encode_panoptic_rgb(
    pan: &PanopticMap,
    image_id: &str,
) -> Result<(Vec<u8>, SegmentsSidecar)> {
    let mut rgb = Vec::with_capacity(pan.ids.len() * 3);
    for &id in &pan.ids {
        if id >= 1 << 24 {
            return Err(Error::validation(format!(
                "segment id {id} does not fit in rgb_id"
            )));
        }
        rgb.extend_from_slice(&[id as u8, (id >> 8) as u8, (id >> 16) as u8]);
    }
    Ok((
        encode_rgb8(pan.width, pan.height, &rgb)?,
        pan.to_sidecar(image_id),
    ))
}

/// Encodes as a 16-bit `id16` PNG plus its sidecar.
pub fn encode_panoptic_id16(
    pan: &PanopticMap,
    image_id: &str,
) -> Result<(Vec<u8>, SegmentsSidecar)> {
    let samples = pan
        .ids
        .iter()
        .map(|&id| {
            u16::try_from(id)
                .map_err(|_| Error::validation(format!("segment id {id} does not fit in id16")))
        })
        .collect::<Result<Vec<u16>>>()?;
    Ok((
        encode_gray16(pan.width, pan.height, &samples)?,
        pan.to_sidecar(image_id),
    ))
}
