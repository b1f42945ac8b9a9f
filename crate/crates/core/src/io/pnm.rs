use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    /// maxval for P5/P6, scale for Pf
    extra: String,
    data_start: usize,
}

fn decode_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Decode {
        offset,
        reason: reason.into(),
    }
}

// Three whitespace-separated header tokens after the magic, `#` comments
// allowed, exactly one whitespace byte before the payload.
fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(decode_err(0, "missing magic number"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut tokens = Vec::with_capacity(3);
    while tokens.len() < 3 {
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
            return Err(decode_err(pos, "truncated header"));
        }
        tokens.push((
            start,
            String::from_utf8_lossy(&bytes[start..pos]).into_owned(),
        ));
    }
    if pos >= bytes.len() {
        return Err(decode_err(pos, "missing whitespace before payload"));
    }
    let dim = |(off, tok): &(usize, String)| -> Result<usize> {
        tok.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| decode_err(*off, format!("invalid dimension '{tok}'")))
    };
    Ok(Header {
        magic,
        width: dim(&tokens[0])?,
        height: dim(&tokens[1])?,
        extra: tokens[2].1.clone(),
        data_start: pos + 1,
    })
}

/// Decodes binary PGM (`P5`) or PPM (`P6`) with maxval up to 255 into a
/// tensor of `byte / maxval`.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    let channels = match &h.magic {
        b"P5" => 1,
        b"P6" => 3,
        m => {
            return Err(decode_err(
                0,
                format!("unsupported magic '{}'", String::from_utf8_lossy(m)),
            ))
        }
    };
    let maxval: u16 = h
        .extra
        .parse()
        .ok()
        .filter(|&m| (1..=255).contains(&m))
        .ok_or_else(|| {
            decode_err(
                h.data_start - 1,
                format!("unsupported maxval '{}'", h.extra),
            )
        })?;
    let pixels = h.width * h.height;
    let need = pixels * channels;
    let payload = &bytes[h.data_start..];
    if payload.len() < need {
        return Err(decode_err(
            bytes.len(),
            format!(
                "truncated payload: expected {need} bytes, found {}",
                payload.len()
            ),
        ));
    }
    let scale = maxval as f32;
    // Interleaved RGB -> planar.
    let mut data = vec![0.0f32; need];
    for (i, &b) in payload[..need].iter().enumerate() {
        if b as u16 > maxval {
            return Err(decode_err(
                h.data_start + i,
                format!("sample {b} exceeds maxval {maxval}"),
            ));
        }
        let (px, c) = (i / channels, i % channels);
        data[c * pixels + px] = b as f32 / scale;
    }
    Tensor::new(channels, h.height, h.width, data)
}

fn to_bytes(t: &Tensor) -> Vec<u8> {
    let pixels = t.height() * t.width();
    let c = t.channels();
    let mut out = vec![0u8; pixels * c];
    for ch in 0..c {
        for (px, &v) in t.plane(ch).iter().enumerate() {
            out[px * c + ch] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn encode(t: &Tensor, magic: &str) -> Vec<u8> {
    let mut out = format!("{magic}\n{} {}\n255\n", t.width(), t.height()).into_bytes();
    out.extend(to_bytes(t));
    out
}

pub fn encode_pgm(t: &Tensor) -> Result<Vec<u8>> {
    if t.channels() != 1 {
        return Err(Error::shape("PGM channels", 1, t.channels()));
    }
    Ok(encode(t, "P5"))
}

pub fn encode_ppm(t: &Tensor) -> Result<Vec<u8>> {
    if t.channels() != 3 {
        return Err(Error::shape("PPM channels", 3, t.channels()));
    }
    Ok(encode(t, "P6"))
}

pub(crate) fn encode_rgb(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Single-channel PFM. Rows are stored bottom-to-top, little-endian (negative
/// scale).
pub fn encode_pfm(t: &Tensor) -> Result<Vec<u8>> {
    if t.channels() != 1 {
        return Err(Error::shape("PFM channels", 1, t.channels()));
    }
    let (h, w) = (t.height(), t.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for &v in &t.data()[y * w..(y + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    if &h.magic != b"Pf" {
        return Err(decode_err(0, "expected single-channel PFM ('Pf')"));
    }
    let scale: f32 = h
        .extra
        .parse()
        .ok()
        .filter(|s: &f32| s.is_finite() && *s != 0.0)
        .ok_or_else(|| decode_err(h.data_start - 1, format!("invalid scale '{}'", h.extra)))?;
    let need = h.width * h.height * 4;
    let payload = &bytes[h.data_start..];
    if payload.len() < need {
        return Err(decode_err(
            bytes.len(),
            format!(
                "truncated payload: expected {need} bytes, found {}",
                payload.len()
            ),
        ));
    }
    let mut data = vec![0.0f32; h.width * h.height];
    for (i, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, x) = (i / h.width, i % h.width);
        data[(h.height - 1 - row) * h.width + x] = v;
    }
    Tensor::new(1, h.height, h.width, data)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_pfm(&super::read_bytes(path.as_ref())?)
}

pub fn write_pfm(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_pfm(t)?)
}
