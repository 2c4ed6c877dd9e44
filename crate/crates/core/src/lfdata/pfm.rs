//! Grayscale PFM (`Pf`) disparity maps.
//!
//! Rows are stored bottom-up; a negative scale means little-endian. Invalid
//! pixels are written as NaN and read back as invalid.

use std::io::Write;
use std::path::Path;

use super::DisparityMap;
use crate::error::{Error, Result};

pub fn read_pfm(path: &Path) -> Result<DisparityMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(path, &bytes)
}

fn parse_pfm(path: &Path, bytes: &[u8]) -> Result<DisparityMap> {
    let malformed = |reason: &str| Error::MalformedPfm {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    // Three whitespace-separated header tokens: magic, "W H", scale.
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| malformed("non-ASCII header"))?);
        if tokens.len() == 1 {
            match tokens[0] {
                "Pf" => {}
                "PF" => return Err(Error::ColorPfm { path: path.to_path_buf() }),
                _ => return Err(malformed("expected \"Pf\" magic")),
            }
        }
    }
    // Exactly one whitespace byte separates the scale from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed("missing payload separator"));
    }
    pos += 1;

    let width: usize = tokens[1].parse().map_err(|_| malformed("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| malformed("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| malformed("bad scale"))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(malformed("scale must be finite and nonzero"));
    }
    if width == 0 || height == 0 {
        return Err(malformed("empty image"));
    }
    let little = scale < 0.0;
    let payload = &bytes[pos..];
    let expected = width * height * 4;
    if payload.len() < expected {
        return Err(malformed(&format!(
            "truncated payload: {} of {expected} bytes",
            payload.len()
        )));
    }

    let mut values = vec![0.0; width * height];
    let mut valid = vec![true; width * height];
    for (i, word) in payload[..expected].chunks_exact(4).enumerate() {
        let raw = [word[0], word[1], word[2], word[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let file_row = i / width;
        let col = i % width;
        let idx = (height - 1 - file_row) * width + col;
        values[idx] = v as f64;
        valid[idx] = v.is_finite();
    }
    DisparityMap::with_mask(width, height, values, valid)
}

/// Encode as little-endian grayscale PFM.
pub fn write_pfm_to(map: &DisparityMap, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "Pf\n{} {}\n-1.0\n", map.width(), map.height())?;
    let mut payload = Vec::with_capacity(map.width() * map.height() * 4);
    for row in (0..map.height()).rev() {
        for col in 0..map.width() {
            let v = if map.is_valid(col, row) {
                map.get(col, row) as f32
            } else {
                f32::NAN
            };
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&payload)
}

pub fn write_pfm(map: &DisparityMap, path: &Path) -> Result<()> {
    for row in 0..map.height() {
        for col in 0..map.width() {
            if map.is_valid(col, row) && !(map.get(col, row) as f32).is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
    }
    let mut buf = Vec::new();
    write_pfm_to(map, &mut buf).expect("writing to a Vec cannot fail");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(map: &DisparityMap) -> DisparityMap {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pfm");
        write_pfm(map, &path).unwrap();
        read_pfm(&path).unwrap()
    }

    #[test]
    fn single_pixel() {
        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&0.5f32.to_le_bytes());
        let m = parse_pfm(Path::new("x.pfm"), &bytes).unwrap();
        assert_eq!(m.values(), &[0.5]);
    }

    #[test]
    fn big_endian_and_row_order() {
        // Positive scale: big-endian. First stored row is the bottom row.
        let mut bytes = b"Pf\n2 2\n1.0\n".to_vec();
        for v in [3.0f32, 4.0, 1.0, 2.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let m = parse_pfm(Path::new("x.pfm"), &bytes).unwrap();
        assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn header_errors() {
        let p = Path::new("x.pfm");
        assert!(matches!(parse_pfm(p, b"Px\n1 1\n-1\n\0\0\0\0"), Err(Error::MalformedPfm { .. })));
        assert!(matches!(parse_pfm(p, b"PF\n1 1\n-1\n"), Err(Error::ColorPfm { .. })));
        assert!(matches!(parse_pfm(p, b"Pf\n2 2\n-1\n\0\0\0\0"), Err(Error::MalformedPfm { .. })));
        assert!(matches!(parse_pfm(p, b"Pf\n1 1\nnan\n\0\0\0\0"), Err(Error::MalformedPfm { .. })));
        assert!(matches!(parse_pfm(p, b"Pf\n1"), Err(Error::MalformedPfm { .. })));
    }

    #[test]
    fn payload_size_and_determinism() {
        let m = DisparityMap::new(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_pfm_to(&m, &mut a).unwrap();
        write_pfm_to(&m, &mut b).unwrap();
        assert_eq!(a, b);
        let header = b"Pf\n3 2\n-1.0\n".len();
        assert_eq!(a.len() - header, 24);
    }

    #[test]
    fn nan_in_valid_region_is_rejected() {
        let m = DisparityMap::with_mask(1, 1, vec![f64::NAN], vec![false]).unwrap();
        assert!(!roundtrip(&m).is_valid(0, 0));
        let too_big = DisparityMap::new(1, 1, vec![1e300]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(write_pfm(&too_big, &dir.path().join("x.pfm")).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let values: Vec<f64> = (0..w * h)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    f32::from_bits(((s >> 33) as u32) & 0x7f7f_ffff) as f64
                        * if s & 1 == 0 { 1.0 } else { -1.0 }
                })
                .collect();
            let m = DisparityMap::new(w, h, values).unwrap();
            prop_assert_eq!(roundtrip(&m), m);
        }
    }
}
