//! Binary (P5) PGM with maxval 255.

use std::fs;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend_from_slice(img.pixels());
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_pgm(&bytes)
}

pub(crate) fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse {
                offset: pos as u64,
                reason: "truncated PGM header".into(),
            });
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let bad = |reason: String| Error::Parse { offset: 0, reason };
    if fields[0] != "P5" {
        return Err(bad(format!("expected P5 magic, found {:?}", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("bad PGM field {s:?}")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    pos += 1;
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| Error::Parse {
        offset: pos as u64,
        reason: format!("expected {} pixel bytes", w * h),
    })?;
    GrayImage::new(w, h, data.to_vec())
}
