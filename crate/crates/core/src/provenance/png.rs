//! Minimal PNG chunk surgery: walk, strip and insert text chunks without
//! touching image data.

use crate::error::{Error, Result};

pub const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk<'a> {
    pub kind: [u8; 4],
    pub data: &'a [u8],
    /// Byte range of the whole chunk (length field through CRC).
    pub start: usize,
    pub end: usize,
}

pub fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(&SIGNATURE)
}

fn crc(kind: &[u8], data: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(kind);
    h.update(data);
    h.finalize()
}

/// Splits a PNG into chunks, checking every CRC and that the stream ends
/// with IEND.
pub fn chunks(bytes: &[u8]) -> Result<Vec<Chunk<'_>>> {
    if !is_png(bytes) {
        return Err(Error::UnsupportedContainer);
    }
    let broken = |m: String| Error::TamperedProvenance(m);
    let mut out = Vec::new();
    let mut pos = SIGNATURE.len();
    while pos < bytes.len() {
        if bytes.len() - pos < 12 {
            return Err(broken(format!("truncated chunk header at byte {pos}")));
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let end = pos
            .checked_add(12 + len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| broken(format!("chunk at byte {pos} overruns the file")))?;
        let kind: [u8; 4] = bytes[pos + 4..pos + 8].try_into().unwrap();
        let data = &bytes[pos + 8..pos + 8 + len];
        let stored = u32::from_be_bytes(bytes[end - 4..end].try_into().unwrap());
        if stored != crc(&kind, data) {
            return Err(broken(format!(
                "CRC mismatch in {} chunk at byte {pos}",
                String::from_utf8_lossy(&kind)
            )));
        }
        out.push(Chunk {
            kind,
            data,
            start: pos,
            end,
        });
        pos = end;
        if &kind == b"IEND" {
            break;
        }
    }
    if out.last().map(|c| &c.kind) != Some(b"IEND") || pos != bytes.len() {
        return Err(broken("stream does not end with IEND".into()));
    }
    Ok(out)
}

pub fn write_chunk(out: &mut Vec<u8>, kind: &[u8; 4], data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend_from_slice(kind);
    out.extend_from_slice(data);
    out.extend_from_slice(&crc(kind, data).to_be_bytes());
}

/// Uncompressed iTXt payload: keyword, flags, empty language and
/// translated keyword, UTF-8 text.
pub fn itxt_data(keyword: &str, text: &str) -> Vec<u8> {
    let mut d = Vec::with_capacity(keyword.len() + text.len() + 5);
    d.extend_from_slice(keyword.as_bytes());
    d.extend_from_slice(&[0, 0, 0, 0, 0]);
    d.extend_from_slice(text.as_bytes());
    d
}

/// Returns `Some(text)` when `c` is an uncompressed iTXt chunk with `keyword`.
pub fn itxt_text<'a>(c: &Chunk<'a>, keyword: &str) -> Option<Result<&'a str>> {
    if &c.kind != b"iTXt" {
        return None;
    }
    let k = keyword.as_bytes();
    let d = c.data;
    if d.len() < k.len() + 1 || &d[..k.len()] != k || d[k.len()] != 0 {
        return None;
    }
    let rest = &d[k.len() + 1..];
    let parsed = (|| {
        if rest.len() < 2 || rest[0] != 0 {
            return Err(Error::CorruptProvenance("compressed or malformed iTXt block".into()));
        }
        let rest = &rest[2..];
        let lang_end = rest.iter().position(|&b| b == 0).ok_or_else(|| {
            Error::CorruptProvenance("unterminated language tag".into())
        })?;
        let rest = &rest[lang_end + 1..];
        let tk_end = rest.iter().position(|&b| b == 0).ok_or_else(|| {
            Error::CorruptProvenance("unterminated translated keyword".into())
        })?;
        std::str::from_utf8(&rest[tk_end + 1..])
            .map_err(|e| Error::CorruptProvenance(format!("block text is not UTF-8: {e}")))
    })();
    Some(parsed)
}

/// Rebuilds the file without chunks matching `drop`, inserting `extra`
/// immediately before IEND.
pub fn rebuild(bytes: &[u8], drop: impl Fn(&Chunk) -> bool, extra: Option<(&[u8; 4], &[u8])>) -> Result<Vec<u8>> {
    let cs = chunks(bytes)?;
    let mut out = Vec::with_capacity(bytes.len() + extra.map_or(0, |e| e.1.len() + 12));
    out.extend_from_slice(&SIGNATURE);
    for c in &cs {
        if &c.kind == b"IEND" {
            if let Some((kind, data)) = extra {
                write_chunk(&mut out, kind, data);
            }
        } else if drop(c) {
            continue;
        }
        out.extend_from_slice(&bytes[c.start..c.end]);
    }
    Ok(out)
}
