//! CASIA-HWDB `.gnt` records: `u32` LE total size, 2-byte tag code, `u16`
//! LE width, `u16` LE height, then `width * height` grayscale bytes.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use super::{GrayImage, TagCode};
use crate::error::{Error, Result};

pub const GNT_HEADER_LEN: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GntRecord {
    pub tag_code: TagCode,
    pub image: GrayImage,
}

/// Streaming record decoder. Stops at the first error.
pub struct GntReader<R> {
    reader: R,
    offset: u64,
    done: bool,
}

impl<R: Read> GntReader<R> {
    pub fn new(reader: R) -> Self {
        GntReader {
            reader,
            offset: 0,
            done: false,
        }
    }

    /// Byte offset of the next record.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Fills `buf`, returning how many bytes were available before EOF.
    fn fill(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.reader.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok(filled)
    }

    fn next_record(&mut self) -> Result<Option<GntRecord>> {
        let start = self.offset;
        let mut header = [0u8; GNT_HEADER_LEN];
        let got = self.fill(&mut header)?;
        if got == 0 {
            return Ok(None);
        }
        let parse_err = |reason: String| Error::Parse {
            offset: start,
            reason,
        };
        if got < GNT_HEADER_LEN {
            return Err(parse_err(format!(
                "truncated record header: {got} of {GNT_HEADER_LEN} bytes"
            )));
        }
        let size = u32::from_le_bytes(header[0..4].try_into().unwrap()) as u64;
        let tag_code = TagCode([header[4], header[5]]);
        let width = u16::from_le_bytes([header[6], header[7]]) as usize;
        let height = u16::from_le_bytes([header[8], header[9]]) as usize;
        if width == 0 || height == 0 {
            return Err(parse_err(format!("empty bitmap {width}x{height}")));
        }
        let expected = (GNT_HEADER_LEN + width * height) as u64;
        if size != expected {
            return Err(parse_err(format!(
                "size field {size} disagrees with {width}x{height} bitmap (expected {expected})"
            )));
        }
        let mut pixels = vec![0u8; width * height];
        let got = self.fill(&mut pixels)?;
        if got < pixels.len() {
            return Err(parse_err(format!(
                "truncated bitmap: {got} of {} bytes",
                pixels.len()
            )));
        }
        self.offset += expected;
        Ok(Some(GntRecord {
            tag_code,
            image: GrayImage::new(width, height, pixels)?,
        }))
    }
}

impl<R: Read> Iterator for GntReader<R> {
    type Item = Result<GntRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_record().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

/// Lazily decodes the records of `reader`, in file order.
pub fn parse_gnt<R: Read>(reader: R) -> GntReader<R> {
    GntReader::new(reader)
}

pub fn read_gnt_file(path: impl AsRef<Path>) -> Result<Vec<GntRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    parse_gnt(BufReader::new(file)).collect()
}

pub fn write_gnt<'a, W: Write>(
    mut writer: W,
    records: impl IntoIterator<Item = &'a GntRecord>,
) -> Result<()> {
    for r in records {
        let (w, h) = (r.image.width(), r.image.height());
        let (Ok(w16), Ok(h16)) = (u16::try_from(w), u16::try_from(h)) else {
            return Err(Error::config(format!(
                "{w}x{h} image exceeds the GNT u16 dimensions"
            )));
        };
        let size = (GNT_HEADER_LEN + w * h) as u32;
        writer.write_all(&size.to_le_bytes())?;
        writer.write_all(&r.tag_code.0)?;
        writer.write_all(&w16.to_le_bytes())?;
        writer.write_all(&h16.to_le_bytes())?;
        writer.write_all(r.image.pixels())?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_bytes(size: u32, w: u16, h: u16, pixels: &[u8]) -> Vec<u8> {
        let mut b = size.to_le_bytes().to_vec();
        b.extend_from_slice(&[0xb0, 0xa1]);
        b.extend_from_slice(&w.to_le_bytes());
        b.extend_from_slice(&h.to_le_bytes());
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn parses_single_record() {
        let bytes = record_bytes(14, 2, 2, &[1, 2, 3, 4]);
        let recs: Vec<_> = parse_gnt(bytes.as_slice()).collect::<Result<_>>().unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].tag_code, TagCode([0xb0, 0xa1]));
        assert_eq!((recs[0].image.width(), recs[0].image.height()), (2, 2));
        assert_eq!(recs[0].image.pixels(), &[1, 2, 3, 4]);
    }

    #[test]
    fn empty_stream_is_empty() {
        assert_eq!(parse_gnt(&[][..]).count(), 0);
    }

    #[test]
    fn truncation_reports_offset() {
        let mut bytes = record_bytes(14, 2, 2, &[1, 2, 3, 4]);
        bytes.extend(record_bytes(15, 1, 5, &[9, 9]));
        let items: Vec<_> = parse_gnt(bytes.as_slice()).collect();
        assert_eq!(items.len(), 2);
        assert!(items[0].is_ok());
        match &items[1] {
            Err(Error::Parse { offset, .. }) => assert_eq!(*offset, 14),
            other => panic!("expected parse error, got {other:?}"),
        }
        let cut = &bytes[..20];
        assert!(matches!(
            parse_gnt(cut).nth(1),
            Some(Err(Error::Parse { offset: 14, .. }))
        ));
    }

    #[test]
    fn inconsistent_size_field() {
        let bytes = record_bytes(13, 2, 2, &[1, 2, 3, 4]);
        assert!(matches!(
            parse_gnt(bytes.as_slice()).next(),
            Some(Err(Error::Parse { offset: 0, .. }))
        ));
    }

    #[test]
    fn write_empty_is_empty() {
        let mut out = Vec::new();
        write_gnt(&mut out, &[]).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn round_trip_one() {
        let rec = GntRecord {
            tag_code: TagCode([0xc1, 0xb2]),
            image: GrayImage::new(3, 2, vec![0, 50, 100, 150, 200, 255]).unwrap(),
        };
        let mut out = Vec::new();
        write_gnt(&mut out, [&rec]).unwrap();
        let back: Vec<_> = parse_gnt(out.as_slice()).collect::<Result<_>>().unwrap();
        assert_eq!(back, vec![rec]);
    }
}
