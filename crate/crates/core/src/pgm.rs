//! Binary greymap (P5) decoding, maxval 255 only.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Greymap {
    pub width: usize,
    pub height: usize,
    /// Row-major samples.
    pub pixels: Vec<u8>,
}

impl Greymap {
    /// Samples scaled to [0, 1].
    pub fn intensities(&self) -> impl Iterator<Item = f64> + '_ {
        self.pixels.iter().map(|&p| f64::from(p) / 255.0)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> std::result::Result<usize, String> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected {field} at byte {start}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("{field} out of range"))
    }
}

/// Decodes a single P5 image. Header comments are accepted between tokens;
/// exactly one whitespace byte separates the maxval from the raster, and the
/// raster must fill the rest of the buffer.
pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<Greymap, String> {
    if !bytes.starts_with(b"P5") {
        return Err("missing P5 magic".into());
    }
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err("magic must be followed by whitespace".into());
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format!("empty image {width}x{height}"));
    }
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported (only 255)"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err("maxval must be followed by one whitespace byte".into()),
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| "image dimensions overflow".to_string())?;
    let raster = &bytes[cur.pos..];
    if raster.len() != expected {
        return Err(format!(
            "raster has {} bytes, expected {expected} for {width}x{height}",
            raster.len()
        ));
    }
    Ok(Greymap {
        width,
        height,
        pixels: raster.to_vec(),
    })
}

pub fn read_pgm(path: &Path) -> Result<Greymap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|reason| Error::Pgm {
        path: path.to_path_buf(),
        reason,
    })
}

/// Encodes a P5 image with maxval 255 and a minimal header.
pub fn encode_pgm(img: &Greymap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_file() {
        let img = parse_pgm(b"P5\n2 2\n255\n\x00\xff\x00\xff").unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(
            img.intensities().collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn header_comment() {
        let img = parse_pgm(b"P5 # made by hand\n1 2 255\n\x10\x20").unwrap();
        assert_eq!(img.pixels, vec![0x10, 0x20]);
    }

    #[test]
    fn raster_starting_with_whitespace_byte() {
        // 0x0a is a valid first sample; only one separator byte is consumed.
        let img = parse_pgm(b"P5\n2 1\n255\n\x0a\x0a").unwrap();
        assert_eq!(img.pixels, vec![10, 10]);
    }

    #[test]
    fn malformed_headers() {
        for bad in [
            &b"P2\n2 2\n255\n0000"[..],
            b"P5\n2 2\n65535\n\x00\x00\x00\x00\x00\x00\x00\x00",
            b"P5\n2 2\n255\n\x00\x00\x00",
            b"P5\n2 2\n255\n\x00\x00\x00\x00\x00",
            b"P5\nx 2\n255\n\x00\x00",
            b"P5\n0 2\n255\n",
            b"P5\n2 2\n255",
        ] {
            assert!(
                parse_pgm(bad).is_err(),
                "{:?}",
                String::from_utf8_lossy(bad)
            );
        }
    }

    proptest! {
        #[test]
        fn encode_decode(width in 1usize..16, height in 1usize..16, seed in any::<u64>()) {
            let pixels: Vec<u8> = (0..width * height)
                .map(|i| (seed.wrapping_mul(i as u64 + 1) >> 17) as u8)
                .collect();
            let img = Greymap { width, height, pixels };
            prop_assert_eq!(parse_pgm(&encode_pgm(&img)).unwrap(), img);
        }
    }
}
