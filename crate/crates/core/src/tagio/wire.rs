//! Site-to-terminal transport.
//!
//! One stream on the wire:
//!
//! ```text
//! site     -> terminal   tag file header (38 bytes, tag_count = tags that follow)
//! terminal -> site       status byte (STATUS_OK or a rejection code)
//! site     -> terminal   frames: u32 LE payload length, then that many bytes of i64 LE tags
//! site     -> terminal   zero-length frame (end of stream)
//! terminal -> site       status byte acknowledging the complete stream
//! ```
//!
//! A connection may carry several streams back to back.

use std::io::{Read, Write};

use crate::error::{Error, FormatError, Result};
use crate::tagio::file::{read_full, TagFileHeader};
use crate::tags::TagStream;

pub const STATUS_OK: u8 = 0;
pub const STATUS_DUPLICATE_SITE: u8 = 1;
pub const STATUS_BAD_STREAM: u8 = 2;

pub const DEFAULT_BATCH: usize = 4096;
/// Largest accepted frame payload, bytes.
pub const MAX_FRAME_BYTES: u32 = 1 << 26;

fn transport(context: &str, e: std::io::Error) -> Error {
    Error::Transport(format!("{context}: {e}"))
}

/// Writes the frames for `tags` in batches of at most `batch`, then the sentinel.
pub fn write_frames<W: Write>(tags: &[i64], batch: usize, w: &mut W) -> Result<()> {
    let batch = batch.clamp(1, (MAX_FRAME_BYTES / 8) as usize);
    let mut buf = Vec::with_capacity(4 + batch * 8);
    for chunk in tags.chunks(batch) {
        buf.clear();
        buf.extend_from_slice(&((chunk.len() * 8) as u32).to_le_bytes());
        for t in chunk {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        w.write_all(&buf)
            .map_err(|e| transport("sending frame", e))?;
    }
    w.write_all(&0u32.to_le_bytes())
        .map_err(|e| transport("sending end of stream", e))?;
    w.flush().map_err(|e| transport("flushing", e))
}

/// Reads frames up to the sentinel and rebuilds the stream described by
/// `header`. Each frame must be nondecreasing and continue from the previous one.
pub fn read_frames<R: Read>(header: &TagFileHeader, r: &mut R) -> Result<TagStream> {
    let mut tags: Vec<i64> = Vec::with_capacity(header.tag_count.min(1 << 20) as usize);
    let mut payload = Vec::new();
    let mut previous = i64::MIN;
    loop {
        let mut len = [0u8; 4];
        let got = read_full(r, &mut len).map_err(|e| transport("reading frame length", e))?;
        if got < 4 {
            return Err(Error::Transport(
                "connection closed before end of stream".into(),
            ));
        }
        let len = u32::from_le_bytes(len);
        if len == 0 {
            break;
        }
        if len % 8 != 0 {
            return Err(FormatError::FrameLength(len).into());
        }
        if len > MAX_FRAME_BYTES {
            return Err(FormatError::FrameTooLong {
                found: len,
                max: MAX_FRAME_BYTES,
            }
            .into());
        }
        if tags.len() as u64 + (len / 8) as u64 > header.tag_count {
            return Err(Error::Transport(format!(
                "received more than the announced {} tags",
                header.tag_count
            )));
        }
        payload.resize(len as usize, 0);
        let got = read_full(r, &mut payload).map_err(|e| transport("reading frame payload", e))?;
        if got < payload.len() {
            return Err(Error::Transport(format!(
                "frame cut short: {got} of {len} bytes"
            )));
        }
        for bytes in payload.chunks_exact(8) {
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
    }
    if tags.len() as u64 != header.tag_count {
        return Err(FormatError::Truncated {
            expected: header.tag_count,
            actual: tags.len() as u64,
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

/// Decodes a header followed by frames from a byte slice (no status bytes).
pub fn decode_wire(bytes: &[u8]) -> Result<TagStream> {
    let mut r = bytes;
    let header = TagFileHeader::read_from(&mut r)?;
    read_frames(&header, &mut r)
}

/// Encodes a header followed by frames (no status bytes).
pub fn encode_wire(stream: &TagStream, batch: usize) -> Result<Vec<u8>> {
    let mut out = TagFileHeader::for_stream(stream).encode().to_vec();
    write_frames(stream.tags(), batch, &mut out)?;
    Ok(out)
}

fn read_status<R: Read>(r: &mut R, stage: &str) -> Result<u8> {
    let mut b = [0u8; 1];
    let got = read_full(r, &mut b).map_err(|e| transport(stage, e))?;
    if got == 0 {
        return Err(Error::Transport(format!(
            "terminal closed the connection ({stage})"
        )));
    }
    Ok(b[0])
}

fn check_status(code: u8, stage: &str) -> Result<()> {
    match code {
        STATUS_OK => Ok(()),
        STATUS_DUPLICATE_SITE => Err(Error::Transport(format!(
            "terminal rejected {stage}: site already connected"
        ))),
        STATUS_BAD_STREAM => Err(Error::Transport(format!(
            "terminal rejected {stage}: invalid stream"
        ))),
        other => Err(Error::Transport(format!(
            "terminal returned status {other} for {stage}"
        ))),
    }
}

/// Sends one stream over an open connection and waits for the terminal to
/// acknowledge it.
pub fn site_send<C: Read + Write>(stream: &TagStream, conn: &mut C, batch: usize) -> Result<()> {
    conn.write_all(&TagFileHeader::for_stream(stream).encode())
        .map_err(|e| transport("sending header", e))?;
    conn.flush().map_err(|e| transport("flushing header", e))?;
    check_status(read_status(conn, "header")?, "header")?;
    write_frames(stream.tags(), batch, conn)?;
    check_status(read_status(conn, "stream")?, "stream")
}

/// Terminal side of [`site_send`] once the header has been accepted: sends
/// the go-ahead, reads the frames and acknowledges.
pub fn receive_after_header<C: Read + Write>(
    header: &TagFileHeader,
    conn: &mut C,
) -> Result<TagStream> {
    conn.write_all(&[STATUS_OK])
        .map_err(|e| transport("sending status", e))?;
    conn.flush().map_err(|e| transport("flushing status", e))?;
    match read_frames(header, conn) {
        Ok(stream) => {
            conn.write_all(&[STATUS_OK])
                .map_err(|e| transport("sending ack", e))?;
            conn.flush().map_err(|e| transport("flushing ack", e))?;
            Ok(stream)
        }
        Err(e) => {
            let _ = conn.write_all(&[STATUS_BAD_STREAM]);
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_tags_is_sentinel_only() {
        let s = TagStream::new(vec![], 1000, 0, 0).unwrap();
        let b = encode_wire(&s, 16).unwrap();
        assert_eq!(b.len(), 38 + 4);
        assert_eq!(&b[38..], &[0, 0, 0, 0]);
        assert_eq!(decode_wire(&b).unwrap(), s);
    }

    #[test]
    fn frames_respect_batch() {
        let s = TagStream::from_sorted((0..10).collect(), 1, 0).unwrap();
        let b = encode_wire(&s, 4).unwrap();
        // 4 + 4 + 2 tags, then sentinel
        assert_eq!(b.len(), 38 + (4 + 32) + (4 + 32) + (4 + 16) + 4);
        assert_eq!(&b[38..42], &32u32.to_le_bytes());
        assert_eq!(decode_wire(&b).unwrap(), s);
    }

    #[test]
    fn rejects_bad_frames() {
        let s = TagStream::from_sorted(vec![5, 6, 7], 1, 0).unwrap();
        let mut b = encode_wire(&s, 8).unwrap();
        b[38] = 12;
        assert!(matches!(
            decode_wire(&b),
            Err(Error::Format(FormatError::FrameLength(12)))
        ));

        let mut b = encode_wire(&s, 8).unwrap();
        b[42..50].copy_from_slice(&9i64.to_le_bytes());
        assert!(matches!(
            decode_wire(&b),
            Err(Error::Format(FormatError::Unsorted { index: 1, .. }))
        ));

        let b = encode_wire(&s, 8).unwrap();
        assert!(matches!(
            decode_wire(&b[..b.len() - 4]),
            Err(Error::Transport(_))
        ));

        let mut b = encode_wire(&s, 8).unwrap();
        b[22..30].copy_from_slice(&4u64.to_le_bytes());
        assert!(matches!(
            decode_wire(&b),
            Err(Error::Format(FormatError::Truncated {
                expected: 4,
                actual: 3
            }))
        ));
        b[22..30].copy_from_slice(&2u64.to_le_bytes());
        assert!(matches!(decode_wire(&b), Err(Error::Transport(_))));
    }

    #[test]
    fn monotonic_across_frames() {
        let mut b = TagFileHeader {
            version: 1,
            site_id: 0,
            resolution_fs: 1,
            tag_count: 2,
            acquisition_span_fs: 100,
        }
        .encode()
        .to_vec();
        write_frames(&[10], 1, &mut b).unwrap();
        b.truncate(b.len() - 4);
        write_frames(&[3], 1, &mut b).unwrap();
        assert!(matches!(
            decode_wire(&b),
            Err(Error::Format(FormatError::Unsorted { index: 1, .. }))
        ));
    }

    proptest! {
        #[test]
        fn wire_round_trip(mut tags in prop::collection::vec(any::<i64>(), 0..500), batch in 1usize..64) {
            tags.sort_unstable();
            let s = TagStream::new(tags, 1000, 1, u64::MAX).unwrap();
            let b = encode_wire(&s, batch).unwrap();
            prop_assert_eq!(decode_wire(&b).unwrap(), s);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_wire(&bytes);
        }
    }
}
