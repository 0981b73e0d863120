//! Raster and sidecar formats for panoptic labels, disparity and depth.
//!
//! * Panoptic rasters: `rgb_id` (8-bit RGB), `id16` (16-bit gray) or
//!   Cityscapes `instanceIds`, with a `segments_info` JSON sidecar.
//! * Disparity: 16-bit gray, `(p - 1) / 256` px, `p <= 1` invalid.
//! * Depth: 16-bit gray, `p / 256` m, `0` invalid.

mod depth;
mod panoptic;
pub mod raster;

use std::path::Path;

pub use depth::{
    decode_depth, decode_disparity, depth_to_samples, disparity_to_depth, encode_depth,
    encode_disparity, same_validity, DepthMap, DisparityMap, EncodedDepth, StereoCamera,
    DEPTH_SCALE, DISPARITY_SCALE,
};
pub use panoptic::{
    decode_panoptic, encode_panoptic_id16, encode_panoptic_rgb, ClassDef, ClassSet,
    PanopticDecoder, PanopticEncoding, PanopticMap, SegmentInfo, SegmentsSidecar, SidecarSegment,
};

use crate::error::{Error, Result};

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::raster::encode_gray16;
    use super::*;
    use proptest::prelude::*;

    fn check_invariants(pan: &PanopticMap) {
        assert_eq!(pan.ids().len(), pan.width() * pan.height());
        let areas = pan.areas();
        for id in pan.ids().iter().filter(|&&id| id != 0) {
            assert!(pan.segment(*id).is_some());
        }
        for seg in pan.segments() {
            assert!(seg.id != 0);
            assert!(areas[&seg.id] >= 1);
            assert!(!seg.is_crowd || seg.is_thing);
        }
    }

    proptest! {
        #[test]
        fn decode_yields_valid_map_or_error(
            w in 1usize..6,
            h in 1usize..6,
            raw in prop::collection::vec(0u16..6, 36),
            table in prop::collection::vec((0u32..6, prop::sample::select(vec![7u32, 24, 26, 99]), any::<bool>()), 0..6),
        ) {
            let samples = &raw[..w * h];
            let png = encode_gray16(w, h, samples).unwrap();
            let side = SegmentsSidecar {
                image_id: serde_json::Value::Null,
                segments_info: table
                    .iter()
                    .map(|&(id, category_id, iscrowd)| SidecarSegment { id, category_id, iscrowd })
                    .collect(),
            };
            let classes = ClassSet::cityscapes();
            if let Ok(pan) = decode_panoptic(&png, Some(&side), PanopticEncoding::Id16, &classes) {
                check_invariants(&pan);
            }
            let cs: Vec<u16> = samples.iter().map(|&s| [0u16, 7, 24, 26001, 26002, 4][s as usize]).collect();
            let png = encode_gray16(w, h, &cs).unwrap();
            let pan = decode_panoptic(&png, None, PanopticEncoding::CityscapeInstanceIds, &classes).unwrap();
            check_invariants(&pan);
        }
    }
}
