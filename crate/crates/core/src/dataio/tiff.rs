//! Reader for the uncompressed, single-sample grayscale subset of baseline
//! TIFF (8 or 16 bits per sample, strips, either byte order).

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const IMAGE_WIDTH: u16 = 256;
const IMAGE_LENGTH: u16 = 257;
const BITS_PER_SAMPLE: u16 = 258;
const COMPRESSION: u16 = 259;
const PHOTOMETRIC: u16 = 262;
const STRIP_OFFSETS: u16 = 273;
const SAMPLES_PER_PIXEL: u16 = 277;
const ROWS_PER_STRIP: u16 = 278;
const STRIP_BYTE_COUNTS: u16 = 279;
const PLANAR_CONFIG: u16 = 284;
const TILE_WIDTH: u16 = 322;
const TILE_OFFSETS: u16 = 324;
const SAMPLE_FORMAT: u16 = 339;

#[derive(Clone, Copy)]
enum ByteOrder {
    Little,
    Big,
}

struct Reader<'a> {
    bytes: &'a [u8],
    order: ByteOrder,
}

impl Reader<'_> {
    fn slice(&self, offset: usize, len: usize) -> Result<&[u8]> {
        offset
            .checked_add(len)
            .and_then(|end| self.bytes.get(offset..end))
            .ok_or_else(|| Error::Truncated(format!("tiff data at offset {offset} (+{len}) is past end of file")))
    }

    fn u16(&self, offset: usize) -> Result<u16> {
        let b: [u8; 2] = self.slice(offset, 2)?.try_into().unwrap();
        Ok(match self.order {
            ByteOrder::Little => u16::from_le_bytes(b),
            ByteOrder::Big => u16::from_be_bytes(b),
        })
    }

    fn u32(&self, offset: usize) -> Result<u32> {
        let b: [u8; 4] = self.slice(offset, 4)?.try_into().unwrap();
        Ok(match self.order {
            ByteOrder::Little => u32::from_le_bytes(b),
            ByteOrder::Big => u32::from_be_bytes(b),
        })
    }
}

struct Entry {
    tag: u16,
    values: Vec<u32>,
}

fn read_entry(r: &Reader, at: usize) -> Result<Entry> {
    let tag = r.u16(at)?;
    let kind = r.u16(at + 2)?;
    let count = r.u32(at + 4)? as usize;
    let size = match kind {
        1 | 2 | 6 | 7 => 1,
        3 | 8 => 2,
        4 | 9 | 11 => 4,
        5 | 10 | 12 => 8,
        _ => return Ok(Entry { tag, values: vec![] }),
    };
    // only BYTE, SHORT and LONG values are needed here
    if !matches!(kind, 1 | 3 | 4) {
        return Ok(Entry { tag, values: vec![] });
    }
    let total = size * count;
    let base = if total <= 4 { at + 8 } else { r.u32(at + 8)? as usize };
    let values = (0..count)
        .map(|i| match kind {
            1 => r.slice(base + i, 1).map(|b| b[0] as u32),
            3 => r.u16(base + 2 * i).map(u32::from),
            _ => r.u32(base + 4 * i),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Entry { tag, values })
}

pub fn decode_tiff_gray(bytes: &[u8]) -> Result<Array2<f64>> {
    let order = match bytes.get(..2) {
        Some(b"II") => ByteOrder::Little,
        Some(b"MM") => ByteOrder::Big,
        _ => return Err(Error::Tiff("missing II/MM byte-order mark".into())),
    };
    let r = Reader { bytes, order };
    if r.u16(2)? != 42 {
        return Err(Error::Tiff("bad magic number (expected 42)".into()));
    }
    let ifd = r.u32(4)? as usize;
    let count = r.u16(ifd)? as usize;
    let entries = (0..count)
        .map(|i| read_entry(&r, ifd + 2 + 12 * i))
        .collect::<Result<Vec<_>>>()?;
    let find = |tag: u16| entries.iter().find(|e| e.tag == tag && !e.values.is_empty());
    let scalar = |tag: u16, default: Option<u32>| -> Result<u32> {
        match (find(tag), default) {
            (Some(e), _) => Ok(e.values[0]),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::Tiff(format!("required tag {tag} is missing"))),
        }
    };

    if let Some(e) = entries.iter().find(|e| e.tag == TILE_WIDTH || e.tag == TILE_OFFSETS) {
        return Err(Error::TiffUnsupported {
            tag: e.tag,
            value: e.values.first().copied().unwrap_or(0),
            reason: "tiled images are not supported",
        });
    }
    let compression = scalar(COMPRESSION, Some(1))?;
    if compression != 1 {
        return Err(Error::TiffUnsupported {
            tag: COMPRESSION,
            value: compression,
            reason: "only uncompressed data is supported",
        });
    }
    let samples = scalar(SAMPLES_PER_PIXEL, Some(1))?;
    if samples != 1 {
        return Err(Error::TiffUnsupported {
            tag: SAMPLES_PER_PIXEL,
            value: samples,
            reason: "only single-sample grayscale images are supported",
        });
    }
    let photometric = scalar(PHOTOMETRIC, None)?;
    if photometric > 1 {
        return Err(Error::TiffUnsupported {
            tag: PHOTOMETRIC,
            value: photometric,
            reason: "only grayscale photometric interpretations are supported",
        });
    }
    let planar = scalar(PLANAR_CONFIG, Some(1))?;
    if planar != 1 {
        return Err(Error::TiffUnsupported {
            tag: PLANAR_CONFIG,
            value: planar,
            reason: "only chunky planar configuration is supported",
        });
    }
    let sample_format = scalar(SAMPLE_FORMAT, Some(1))?;
    if sample_format != 1 {
        return Err(Error::TiffUnsupported {
            tag: SAMPLE_FORMAT,
            value: sample_format,
            reason: "only unsigned integer samples are supported",
        });
    }
    let bits = scalar(BITS_PER_SAMPLE, Some(1))?;
    if bits != 8 && bits != 16 {
        return Err(Error::TiffUnsupported {
            tag: BITS_PER_SAMPLE,
            value: bits,
            reason: "only 8- or 16-bit samples are supported",
        });
    }

    let width = scalar(IMAGE_WIDTH, None)? as usize;
    let height = scalar(IMAGE_LENGTH, None)? as usize;
    let offsets = find(STRIP_OFFSETS)
        .ok_or_else(|| Error::Tiff(format!("required tag {STRIP_OFFSETS} is missing")))?
        .values
        .clone();
    let rows_per_strip = (scalar(ROWS_PER_STRIP, Some(u32::MAX))? as usize).min(height.max(1));
    let bytes_per_sample = bits as usize / 8;
    let row_bytes = width * bytes_per_sample;
    let counts = find(STRIP_BYTE_COUNTS).map(|e| e.values.clone());

    let mut pixels = Vec::with_capacity(width * height);
    for (s, &offset) in offsets.iter().enumerate() {
        let rows = rows_per_strip.min(height - (s * rows_per_strip).min(height));
        let len = rows * row_bytes;
        if let Some(c) = counts.as_ref().and_then(|c| c.get(s)) {
            if (*c as usize) < len {
                return Err(Error::Tiff(format!("strip {s} holds {c} bytes, needs {len}")));
            }
        }
        let strip = r.slice(offset as usize, len)?;
        match bits {
            8 => pixels.extend(strip.iter().map(|&b| b as f64)),
            _ => pixels.extend(strip.chunks_exact(2).map(|c| {
                let v = match order {
                    ByteOrder::Little => u16::from_le_bytes([c[0], c[1]]),
                    ByteOrder::Big => u16::from_be_bytes([c[0], c[1]]),
                };
                v as f64
            })),
        }
    }
    if pixels.len() != width * height {
        return Err(Error::Tiff(format!(
            "strips hold {} pixels, image needs {}",
            pixels.len(),
            width * height
        )));
    }
    if photometric == 0 {
        let max = ((1u32 << bits) - 1) as f64;
        pixels.iter_mut().for_each(|p| *p = max - *p);
    }
    Array2::from_shape_vec((height, width), pixels).map_err(|e| Error::Tiff(e.to_string()))
}

pub fn read_tiff_gray(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    decode_tiff_gray(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds a one-strip 16-bit grayscale TIFF byte by byte.
    fn fixture(big_endian: bool, extra: &[(u16, u16, u32)]) -> Vec<u8> {
        let p16 = |v: u16| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        let p32 = |v: u32| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        let mut entries: Vec<(u16, u16, u32)> = vec![
            (IMAGE_WIDTH, 3, 2),
            (IMAGE_LENGTH, 3, 2),
            (BITS_PER_SAMPLE, 3, 16),
            (COMPRESSION, 3, 1),
            (PHOTOMETRIC, 3, 1),
            (STRIP_OFFSETS, 4, 8),
            (SAMPLES_PER_PIXEL, 3, 1),
            (ROWS_PER_STRIP, 3, 2),
            (STRIP_BYTE_COUNTS, 4, 8),
        ];
        for e in extra {
            entries.retain(|x| x.0 != e.0);
            entries.push(*e);
        }
        entries.sort_by_key(|e| e.0);
        let mut out = Vec::new();
        out.extend_from_slice(if big_endian { b"MM" } else { b"II" });
        out.extend_from_slice(&p16(42));
        out.extend_from_slice(&p32(16));
        for v in [0u16, 1, 2, 3] {
            out.extend_from_slice(&p16(v));
        }
        out.extend_from_slice(&p16(entries.len() as u16));
        for (tag, kind, value) in entries {
            out.extend_from_slice(&p16(tag));
            out.extend_from_slice(&p16(kind));
            out.extend_from_slice(&p32(1));
            if kind == 3 {
                out.extend_from_slice(&p16(value as u16));
                out.extend_from_slice(&[0, 0]);
            } else {
                out.extend_from_slice(&p32(value));
            }
        }
        out.extend_from_slice(&p32(0));
        out
    }

    #[test]
    fn little_endian_fixture() {
        let img = decode_tiff_gray(&fixture(false, &[])).unwrap();
        assert_eq!(img, ndarray::array![[0.0, 1.0], [2.0, 3.0]]);
    }

    #[test]
    fn big_endian_fixture_decodes_identically() {
        let le = decode_tiff_gray(&fixture(false, &[])).unwrap();
        let be = decode_tiff_gray(&fixture(true, &[])).unwrap();
        assert_eq!(le, be);
    }

    #[test]
    fn rejects_lzw() {
        let err = decode_tiff_gray(&fixture(false, &[(COMPRESSION, 3, 5)])).unwrap_err();
        assert!(matches!(err, Error::TiffUnsupported { tag: 259, value: 5, .. }));
        assert!(err.to_string().contains("259"));
    }

    #[test]
    fn rejects_palette_tiles_and_rgb() {
        assert!(matches!(
            decode_tiff_gray(&fixture(false, &[(PHOTOMETRIC, 3, 3)])),
            Err(Error::TiffUnsupported { tag: 262, .. })
        ));
        assert!(matches!(
            decode_tiff_gray(&fixture(false, &[(TILE_WIDTH, 3, 16)])),
            Err(Error::TiffUnsupported { tag: 322, .. })
        ));
        assert!(matches!(
            decode_tiff_gray(&fixture(false, &[(SAMPLES_PER_PIXEL, 3, 3)])),
            Err(Error::TiffUnsupported { tag: 277, .. })
        ));
    }

    #[test]
    fn truncated_strip() {
        let bytes = fixture(false, &[(STRIP_OFFSETS, 4, 10_000)]);
        assert!(matches!(decode_tiff_gray(&bytes), Err(Error::Truncated(_))));
        assert!(decode_tiff_gray(b"XX*\0").is_err());
    }
}
