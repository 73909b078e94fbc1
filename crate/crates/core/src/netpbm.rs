//! Binary PPM (P6) and PGM (P5) images. PPM samples are 8-bit; PGM label
//! maps are 8-bit, or 16-bit big-endian when ids exceed a byte.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::FeatureMap;

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::Format("file too short for a netpbm header".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(pos), None | Some(b'\n')) {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed netpbm header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("header value out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing whitespace after maxval".into()));
    }
    if fields[2] != 255 && fields[2] != 65535 {
        return Err(Error::Format(format!("maxval must be 255 or 65535, got {}", fields[2])));
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_start: pos + 1,
    })
}

fn payload<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let n = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| Error::Format(format!("expected {n} bytes of pixel data")))
}

/// Decodes a P6 image into a 3-channel map with values in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<FeatureMap> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err(Error::Format("not a binary PPM (P6) image".into()));
    }
    if h.maxval != 255 {
        return Err(Error::Format("only 8-bit PPM images are supported".into()));
    }
    let data = payload(bytes, &h, 3)?;
    FeatureMap::from_vec(h.height, h.width, 3, data.iter().map(|&b| b as f64 / 255.0).collect())
}

/// Decodes an 8- or 16-bit P5 image into a label map.
pub fn decode_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P5" {
        return Err(Error::Format("not a binary PGM (P5) image".into()));
    }
    let ids = if h.maxval == 255 {
        payload(bytes, &h, 1)?.iter().map(|&b| b as u32).collect()
    } else {
        payload(bytes, &h, 2)?
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32)
            .collect()
    };
    LabelMap::from_vec(h.height, h.width, ids)
}

/// Encodes a 3-channel map as P6, clamping to `[0, 1]` and rounding.
pub fn encode_ppm(image: &FeatureMap) -> Result<Vec<u8>> {
    let (h, w, c) = image.dims();
    if c != 3 {
        return Err(Error::Shape(format!("PPM needs 3 channels, got {c}")));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

/// Encodes a class map as 8-bit P5; every id must fit in a byte.
pub fn encode_pgm(labels: &LabelMap) -> Result<Vec<u8>> {
    let (h, w) = labels.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &id in labels.ids() {
        let b = u8::try_from(id).map_err(|_| Error::Data(format!("label id {id} does not fit in a PGM byte")))?;
        out.push(b);
    }
    Ok(out)
}

/// Encodes a superpixel map as 16-bit P5, so ids up to 65535 survive and
/// 255 is an ordinary id.
pub fn encode_pgm16(labels: &LabelMap) -> Result<Vec<u8>> {
    let (h, w) = labels.dims();
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &id in labels.ids() {
        let v = u16::try_from(id).map_err(|_| Error::Data(format!("label id {id} does not fit in 16 bits")))?;
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<FeatureMap> {
    decode_ppm(&fs::read(path)?)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<LabelMap> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_ppm(path: impl AsRef<Path>, image: &FeatureMap) -> Result<()> {
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

pub fn write_pgm(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    fs::write(path, encode_pgm(labels)?)?;
    Ok(())
}

pub fn write_pgm16(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    fs::write(path, encode_pgm16(labels)?)?;
    Ok(())
}
