//! Grayscale portable float maps.
//!
//! Layout: `Pf\n<width> <height>\n<scale>\n` followed by `width·height`
//! 32-bit floats, rows stored bottom-to-top. A negative scale means
//! little-endian data. Invalid pixels are written as NaN and every
//! non-finite value reads back as invalid.

use std::io::Write;
use std::path::Path;

use crate::error::PfmError;
use crate::maps::FloatMap;

/// Encodes a map as little-endian PFM bytes.
pub fn encode(map: &FloatMap) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            let v = map.get(col, row).map_or(f32::NAN, |v| v as f32);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], PfmError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(PfmError::Header("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_token<T: std::str::FromStr>(tok: &[u8], what: &str) -> Result<T, PfmError> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PfmError::Header(format!("bad {what}: {:?}", String::from_utf8_lossy(tok))))
}

/// Decodes grayscale PFM bytes of either endianness.
pub fn decode(bytes: &[u8]) -> Result<FloatMap, PfmError> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    match magic {
        b"Pf" => {}
        b"PF" => return Err(PfmError::Header("color PFM (PF) is not supported".into())),
        other => {
            return Err(PfmError::Header(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    }
    let width: usize = parse_token(next_token(bytes, &mut pos)?, "width")?;
    let height: usize = parse_token(next_token(bytes, &mut pos)?, "height")?;
    let scale: f64 = parse_token(next_token(bytes, &mut pos)?, "scale")?;
    if width == 0 || height == 0 {
        return Err(PfmError::Header(format!("empty image {width}x{height}")));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(PfmError::Header(format!("bad scale {scale}")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PfmError::Header("missing separator after scale".into()));
    }
    pos += 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| PfmError::Header("image too large".into()))?;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(PfmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let little = scale < 0.0;
    let mut values = vec![f64::NAN; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row_from_bottom, col) = (i / width, i % width);
        let row = height - 1 - row_from_bottom;
        values[row * width + col] = v as f64;
    }
    FloatMap::from_values(width, height, values).map_err(|e| PfmError::Header(e.to_string()))
}

pub fn read(path: &Path) -> Result<FloatMap, PfmError> {
    let bytes = std::fs::read(path).map_err(|source| PfmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

pub fn write(path: &Path, map: &FloatMap) -> Result<(), PfmError> {
    write_atomic(path, &encode(map)).map_err(|source| PfmError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so the target is either complete or untouched.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
