//! Color-coded lane rendering into an RGB buffer.

use laneaf_core::metrics::rasterize_lane;
use laneaf_core::{BinaryMask, LabelMask, LaneSet, Result};

pub const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

/// Background gray levels for binary-mask pixels.
pub const GRAY_FG: u8 = 96;
pub const GRAY_BG: u8 = 0;

pub fn color(id: u32) -> [u8; 3] {
    PALETTE[(id.max(1) as usize - 1) % PALETTE.len()]
}

fn background(bw: Option<&BinaryMask>, height: usize, width: usize) -> Vec<u8> {
    let mut rgb = vec![GRAY_BG; height * width * 3];
    if let Some(bw) = bw {
        for (i, &fg) in bw.pixels().iter().enumerate() {
            if fg {
                rgb[3 * i..3 * i + 3].fill(GRAY_FG);
            }
        }
    }
    rgb
}

pub fn render_mask(mask: &LabelMask, bw: Option<&BinaryMask>) -> Vec<u8> {
    let (h, w) = mask.dims();
    let mut rgb = background(bw, h, w);
    for (i, &l) in mask.labels().iter().enumerate() {
        if l > 0 {
            rgb[3 * i..3 * i + 3].copy_from_slice(&color(l as u32));
        }
    }
    rgb
}

pub fn render_lanes(lanes: &LaneSet, height: usize, width: usize, lane_width: usize, bw: Option<&BinaryMask>) -> Result<Vec<u8>> {
    let mut rgb = background(bw, height, width);
    for lane in lanes.lanes() {
        let m = rasterize_lane(lane, lane_width, height, width)?;
        for (i, &on) in m.pixels().iter().enumerate() {
            if on {
                rgb[3 * i..3 * i + 3].copy_from_slice(&color(lane.id));
            }
        }
    }
    Ok(rgb)
}
