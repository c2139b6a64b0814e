//! On-disk formats.
//!
//! * Label and binary masks: 8-bit binary PGM (`P5`, maxval 255). A label
//!   mask stores the label as the gray value; a binary mask is written as
//!   0/255 and read back as "nonzero = foreground".
//! * Affinity fields: `LAF1` container. Bytes `0..4` are the ASCII magic
//!   `LAF1`, then height and width as little-endian `u32`, then the HAF and
//!   the VAF, each `height * width` pixels row-major with two little-endian
//!   IEEE-754 binary32 components (x first). Total size is exactly
//!   `12 + 16 * height * width` bytes.
//! * Lane sets: JSON `{"lanes":[{"id":1,"points":[[row,col],...]},...]}`,
//!   points bottom to top, columns written with 17 significant digits.
//! * Overlays: binary PPM (`P6`, maxval 255).
//!
//! Every reader either returns a complete value or a typed error.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, FormatError, Result};
use crate::grid::{AffinityFields, BinaryMask, LabelMask, Lane, LanePoint, LaneSet};
use crate::scalar::Vec2;

pub const LAF_MAGIC: &[u8; 4] = b"LAF1";
pub const LAF_HEADER_LEN: usize = 12;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- netpbm

struct PnmHeader {
    width: usize,
    height: usize,
    data_offset: usize,
}

fn is_pnm_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

fn parse_pnm_header(bytes: &[u8], magic: &'static str) -> Result<PnmHeader, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(FormatError::BadMagic { expected: magic });
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each field
        let mut saw_space = false;
        loop {
            match bytes.get(pos) {
                Some(&b) if is_pnm_space(b) => {
                    saw_space = true;
                    pos += 1;
                }
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(FormatError::Header("unexpected end of header".into())),
            }
        }
        if !saw_space {
            return Err(FormatError::Header("missing whitespace between header fields".into()));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::Header(format!("header field {} is not a number", i + 1)));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| FormatError::Header(format!("header field {} out of range", i + 1)))?;
    }
    match bytes.get(pos) {
        Some(&b) if is_pnm_space(b) => pos += 1,
        Some(_) => return Err(FormatError::Header("maxval must be followed by one whitespace byte".into())),
        None => return Err(FormatError::Header("unexpected end of header".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(FormatError::Maxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(FormatError::EmptyDimension { height, width });
    }
    let (Ok(width), Ok(height)) = (usize::try_from(width), usize::try_from(height)) else {
        return Err(FormatError::Header("dimensions too large".into()));
    };
    Ok(PnmHeader {
        width,
        height,
        data_offset: pos,
    })
}

fn pnm_payload<'a>(bytes: &'a [u8], header: &PnmHeader, channels: usize) -> Result<&'a [u8], FormatError> {
    let expected = (header.width as u128) * (header.height as u128) * channels as u128;
    let found = (bytes.len() - header.data_offset) as u128;
    if found < expected {
        return Err(FormatError::Truncated {
            expected: expected.min(u64::MAX as u128) as u64,
            found: found as u64,
        });
    }
    if found > expected {
        return Err(FormatError::TrailingBytes((found - expected) as u64));
    }
    Ok(&bytes[header.data_offset..])
}

/// Parse a `P5` image into `(height, width, gray values)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), FormatError> {
    let header = parse_pnm_header(bytes, "P5")?;
    let data = pnm_payload(bytes, &header, 1)?;
    Ok((header.height, header.width, data.to_vec()))
}

pub fn encode_pgm(height: usize, width: usize, values: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(values);
    out
}

pub fn parse_mask(bytes: &[u8]) -> Result<LabelMask> {
    let (h, w, v) = parse_pgm(bytes)?;
    LabelMask::new(h, w, v)
}

pub fn encode_mask(mask: &LabelMask) -> Vec<u8> {
    encode_pgm(mask.height(), mask.width(), mask.labels())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    parse_mask(&read_file(path.as_ref())?)
}

pub fn write_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_mask(mask))
}

pub fn read_binary_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let (h, w, v) = parse_pgm(&read_file(path.as_ref())?)?;
    BinaryMask::from_values(h, w, &v)
}

pub fn encode_binary_mask(bw: &BinaryMask) -> Vec<u8> {
    let values: Vec<u8> = bw.pixels().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_pgm(bw.height(), bw.width(), &values)
}

pub fn write_binary_mask(bw: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_binary_mask(bw))
}

/// Parse a `P6` image into `(height, width, rgb bytes)`.
pub fn parse_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), FormatError> {
    let header = parse_pnm_header(bytes, "P6")?;
    let data = pnm_payload(bytes, &header, 3)?;
    Ok((header.height, header.width, data.to_vec()))
}

pub fn encode_ppm(height: usize, width: usize, rgb: &[u8]) -> Vec<u8> {
    debug_assert_eq!(rgb.len(), height * width * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn write_ppm(height: usize, width: usize, rgb: &[u8], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_ppm(height, width, rgb))
}

// ---------------------------------------------------------------- LAF1

pub fn laf_file_len(height: usize, width: usize) -> usize {
    LAF_HEADER_LEN + height * width * 16
}

pub fn parse_fields(bytes: &[u8]) -> Result<AffinityFields<f32>> {
    if bytes.len() < 4 || &bytes[..4] != LAF_MAGIC {
        return Err(FormatError::BadMagic { expected: "LAF1" }.into());
    }
    if bytes.len() < LAF_HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: LAF_HEADER_LEN as u64,
            found: bytes.len() as u64,
        }
        .into());
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let width = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if height == 0 || width == 0 {
        return Err(FormatError::EmptyDimension {
            height: height as u64,
            width: width as u64,
        }
        .into());
    }
    let expected = LAF_HEADER_LEN as u64 + height as u64 * width as u64 * 16;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(FormatError::Truncated { expected, found }.into());
    }
    if found > expected {
        return Err(FormatError::TrailingBytes(found - expected).into());
    }
    let (h, w) = (height as usize, width as usize);
    let n = h * w;
    let mut floats = bytes[LAF_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut take = || -> Vec<Vec2<f32>> {
        (0..n)
            .map(|_| {
                let x = floats.next().expect("length checked");
                let y = floats.next().expect("length checked");
                Vec2::new(x, y)
            })
            .collect()
    };
    let haf = take();
    let vaf = take();
    AffinityFields::new(h, w, haf, vaf)
}

pub fn encode_fields(fields: &AffinityFields<f32>) -> Result<Vec<u8>> {
    let (h, w) = fields.dims();
    let (Ok(h32), Ok(w32)) = (u32::try_from(h), u32::try_from(w)) else {
        return Err(Error::InvalidInput("field dimensions exceed u32".into()));
    };
    let mut out = Vec::with_capacity(laf_file_len(h, w));
    out.extend_from_slice(LAF_MAGIC);
    out.extend_from_slice(&h32.to_le_bytes());
    out.extend_from_slice(&w32.to_le_bytes());
    for v in fields.haf().iter().chain(fields.vaf()) {
        out.extend_from_slice(&v.x.to_le_bytes());
        out.extend_from_slice(&v.y.to_le_bytes());
    }
    Ok(out)
}

pub fn read_fields(path: impl AsRef<Path>) -> Result<AffinityFields<f32>> {
    parse_fields(&read_file(path.as_ref())?)
}

pub fn write_fields(fields: &AffinityFields<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_fields(fields)?)
}

// ---------------------------------------------------------------- lanes json

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneDoc {
    lanes: Vec<LaneEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneEntry {
    id: u32,
    points: Vec<(usize, f64)>,
}

/// Shortest positional rendering with 17 significant digits.
fn format_col(v: f64) -> String {
    if v == 0.0 {
        return "0.0000000000000000".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..=16).contains(&exp) {
        return format!("{v:.16e}");
    }
    let decimals = (16 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // a rounding carry can add one digit; the value still round-trips
    if decimals == 0 {
        format!("{s}.0")
    } else {
        s
    }
}

pub fn lanes_to_json(lanes: &LaneSet) -> String {
    let mut out = String::from("{\"lanes\":[");
    for (i, lane) in lanes.lanes().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{{\"id\":{},\"points\":[", lane.id).expect("string write");
        for (j, p) in lane.points.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "[{},{}]", p.row, format_col(p.col)).expect("string write");
        }
        out.push_str("]}");
    }
    out.push_str("]}");
    out
}

pub fn lanes_from_json(text: &str) -> Result<LaneSet> {
    let doc: LaneDoc = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    let lanes = doc
        .lanes
        .into_iter()
        .map(|e| {
            let points = e.points.into_iter().map(|(r, c)| LanePoint::new(r, c)).collect();
            Lane::new(e.id, points)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| FormatError::Json(e.to_string()))?;
    LaneSet::new(lanes).map_err(|e| FormatError::Json(e.to_string()).into())
}

pub fn write_lanes_json(lanes: &LaneSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), lanes_to_json(lanes).as_bytes())
}

pub fn read_lanes_json(path: impl AsRef<Path>) -> Result<LaneSet> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| FormatError::Json(e.to_string()))?;
    lanes_from_json(text)
}
