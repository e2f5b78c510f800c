//! Tag file layout, all little-endian:
//!
//! | offset | size | field                |
//! |--------|------|----------------------|
//! | 0      | 8    | magic `NDCTAG01`     |
//! | 8      | 2    | version (1)          |
//! | 10     | 4    | site id              |
//! | 14     | 8    | resolution, fs       |
//! | 22     | 8    | tag count            |
//! | 30     | 8    | acquisition span, fs |
//! | 38     | 8·n  | tags, signed fs      |

use std::io::{self, Read, Write};

use crate::error::{Error, FormatError, Result};
use crate::tags::TagStream;

pub const MAGIC: [u8; 8] = *b"NDCTAG01";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 8 + 2 + 4 + 8 + 8 + 8;

/// Tags decoded per read when streaming a payload.
const READ_CHUNK_TAGS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagFileHeader {
    pub version: u16,
    pub site_id: u32,
    pub resolution_fs: u64,
    pub tag_count: u64,
    pub acquisition_span_fs: u64,
}

impl TagFileHeader {
    pub fn for_stream(stream: &TagStream) -> Self {
        TagFileHeader {
            version: VERSION,
            site_id: stream.site_id(),
            resolution_fs: stream.resolution_fs(),
            tag_count: stream.len() as u64,
            acquisition_span_fs: stream.acquisition_span_fs(),
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..8].copy_from_slice(&MAGIC);
        out[8..10].copy_from_slice(&self.version.to_le_bytes());
        out[10..14].copy_from_slice(&self.site_id.to_le_bytes());
        out[14..22].copy_from_slice(&self.resolution_fs.to_le_bytes());
        out[22..30].copy_from_slice(&self.tag_count.to_le_bytes());
        out[30..38].copy_from_slice(&self.acquisition_span_fs.to_le_bytes());
        out
    }

    /// Checks magic and version; the remaining fields are validated against
    /// the payload by the caller.
    pub fn decode(bytes: &[u8; HEADER_LEN]) -> Result<Self, FormatError> {
        let magic: [u8; 8] = bytes[0..8].try_into().expect("8 bytes");
        if magic != MAGIC {
            return Err(FormatError::BadMagic { found: magic });
        }
        let version = u16::from_le_bytes(bytes[8..10].try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(FormatError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        Ok(TagFileHeader {
            version,
            site_id: u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")),
            resolution_fs: u64_at(14),
            tag_count: u64_at(22),
            acquisition_span_fs: u64_at(30),
        })
    }

    /// Reads exactly one header, distinguishing a short read from I/O failure.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut buf = [0u8; HEADER_LEN];
        let got = read_full(r, &mut buf).map_err(|e| Error::io("reading tag header", e))?;
        if got < HEADER_LEN {
            return Err(FormatError::TruncatedHeader {
                expected: HEADER_LEN,
                actual: got,
            }
            .into());
        }
        Ok(Self::decode(&buf)?)
    }
}

/// Fills `buf` as far as the reader allows; returns bytes read.
pub(crate) fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Serializes header and tags. Returns the number of bytes written.
pub fn write_tags<W: Write>(stream: &TagStream, mut w: W) -> Result<u64> {
    let header = TagFileHeader::for_stream(stream);
    w.write_all(&header.encode())
        .map_err(|e| Error::io("writing tag header", e))?;
    let mut buf = Vec::with_capacity(READ_CHUNK_TAGS * 8);
    for chunk in stream.tags().chunks(READ_CHUNK_TAGS) {
        buf.clear();
        for t in chunk {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        w.write_all(&buf)
            .map_err(|e| Error::io("writing tags", e))?;
    }
    w.flush().map_err(|e| Error::io("flushing tag file", e))?;
    Ok(HEADER_LEN as u64 + 8 * stream.len() as u64)
}

/// Decodes a tag file, rejecting (never repairing) bad magic, version,
/// truncation, trailing data and unsorted payloads.
pub fn read_tags<R: Read>(mut r: R) -> Result<TagStream> {
    let header = TagFileHeader::read_from(&mut r)?;
    let mut tags: Vec<i64> = Vec::with_capacity(header.tag_count.min(1 << 20) as usize);
    let mut buf = vec![0u8; READ_CHUNK_TAGS * 8];
    let mut previous = i64::MIN;
    while (tags.len() as u64) < header.tag_count {
        let want = (header.tag_count - tags.len() as u64).min(READ_CHUNK_TAGS as u64) as usize;
        let got =
            read_full(&mut r, &mut buf[..want * 8]).map_err(|e| Error::io("reading tags", e))?;
        for bytes in buf[..got - got % 8].chunks_exact(8) {
            let t = i64::from_le_bytes(bytes.try_into().expect("8 bytes"));
            if t < previous {
                return Err(FormatError::Unsorted {
                    index: tags.len() as u64,
                    previous,
                    current: t,
                }
                .into());
            }
            previous = t;
            tags.push(t);
        }
        if got < want * 8 {
            return Err(FormatError::Truncated {
                expected: header.tag_count,
                actual: tags.len() as u64,
            }
            .into());
        }
    }
    let mut rest = Vec::new();
    let extra = r
        .take(1 << 20)
        .read_to_end(&mut rest)
        .map_err(|e| Error::io("reading past payload", e))?;
    if extra > 0 {
        return Err(FormatError::TrailingBytes {
            count: header.tag_count,
            extra: extra as u64,
        }
        .into());
    }
    TagStream::new(
        tags,
        header.resolution_fs,
        header.site_id,
        header.acquisition_span_fs,
    )
}

/// Decodes an in-memory tag file.
pub fn decode_tags(bytes: &[u8]) -> Result<TagStream> {
    read_tags(bytes)
}

pub fn write_tag_file(stream: &TagStream, path: &std::path::Path) -> Result<u64> {
    let f = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_tags(stream, io::BufWriter::new(f))
}

pub fn read_tag_file(path: &std::path::Path) -> Result<TagStream> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_tags(io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(stream: &TagStream) -> Vec<u8> {
        let mut out = Vec::new();
        let n = write_tags(stream, &mut out).unwrap();
        assert_eq!(n as usize, out.len());
        out
    }

    #[test]
    fn header_is_38_bytes() {
        assert_eq!(HEADER_LEN, 38);
        let empty = TagStream::new(vec![], 1000, 7, 0).unwrap();
        let bytes = encode(&empty);
        assert_eq!(bytes.len(), 38);
        assert_eq!(&bytes[..8], b"NDCTAG01");
        assert_eq!(decode_tags(&bytes).unwrap(), empty);
    }

    #[test]
    fn bit_layout() {
        let s = TagStream::new(vec![-1, 258], 1000, 0x0102_0304, 300).unwrap();
        let b = encode(&s);
        assert_eq!(&b[8..10], &[1, 0]);
        assert_eq!(&b[10..14], &[4, 3, 2, 1]);
        assert_eq!(&b[14..22], &1000u64.to_le_bytes());
        assert_eq!(&b[22..30], &2u64.to_le_bytes());
        assert_eq!(&b[30..38], &300u64.to_le_bytes());
        assert_eq!(&b[38..46], &[0xff; 8]);
        assert_eq!(&b[46..54], &[2, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn corrupt_magic() {
        let mut b = encode(&TagStream::new(vec![1, 2], 1, 0, 1).unwrap());
        b[0] = b'X';
        assert!(matches!(
            decode_tags(&b),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
    }

    #[test]
    fn version_mismatch() {
        let mut b = encode(&TagStream::new(vec![1, 2], 1, 0, 1).unwrap());
        b[8] = 2;
        assert!(matches!(
            decode_tags(&b),
            Err(Error::Format(FormatError::VersionMismatch {
                found: 2,
                expected: 1
            }))
        ));
    }

    #[test]
    fn truncation_reports_counts() {
        let b = encode(&TagStream::new(vec![1, 2, 3, 4], 1, 0, 3).unwrap());
        let err = decode_tags(&b[..b.len() - 12]).unwrap_err();
        assert!(matches!(
            err,
            Error::Format(FormatError::Truncated {
                expected: 4,
                actual: 2
            })
        ));
        let err = decode_tags(&b[..20]).unwrap_err();
        assert!(matches!(
            err,
            Error::Format(FormatError::TruncatedHeader {
                expected: 38,
                actual: 20
            })
        ));
    }

    #[test]
    fn unsorted_reports_index() {
        let mut b = encode(&TagStream::new(vec![1, 2, 3, 4], 1, 0, 3).unwrap());
        b[38 + 2 * 8..38 + 3 * 8].copy_from_slice(&0i64.to_le_bytes());
        let err = decode_tags(&b).unwrap_err();
        assert!(matches!(
            err,
            Error::Format(FormatError::Unsorted {
                index: 2,
                previous: 2,
                current: 0
            })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut b = encode(&TagStream::new(vec![1], 1, 0, 0).unwrap());
        b.extend_from_slice(&[0, 0, 0]);
        assert!(matches!(
            decode_tags(&b),
            Err(Error::Format(FormatError::TrailingBytes {
                count: 1,
                extra: 3
            }))
        ));
    }

    #[test]
    fn huge_count_does_not_allocate() {
        let mut b = encode(&TagStream::new(vec![1], 1, 0, 0).unwrap());
        b[22..30].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            decode_tags(&b),
            Err(Error::Format(FormatError::Truncated { actual: 1, .. }))
        ));
    }

    #[test]
    fn sixty_thousand_tags_reserialize_identically() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut t = 0i64;
        let tags: Vec<i64> = (0..60_000)
            .map(|_| {
                t += rng.random_range(0..200_000_000_000i64);
                t
            })
            .collect();
        let s = TagStream::from_sorted(tags, 1000, 1).unwrap();
        let b = encode(&s);
        let back = decode_tags(&b).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode(&back), b);
    }

    proptest! {
        #[test]
        fn round_trip(mut tags in prop::collection::vec(any::<i64>(), 0..300), res in 1u64..1_000_000, site in any::<u32>()) {
            tags.sort_unstable();
            let s = TagStream::new(tags, res, site, u64::MAX).unwrap();
            let b = encode(&s);
            prop_assert_eq!(decode_tags(&b).unwrap(), s);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_tags(&bytes);
        }
    }
}
