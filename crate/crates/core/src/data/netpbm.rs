//! Binary PPM (P6) and PGM (P5) with maxval 255.

use std::path::Path;

use crate::{Error, Image, Result};

fn encode(magic: &str, w: usize, h: usize, body: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(body);
    out
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    encode("P6", img.width(), img.height(), &img.to_levels())
}

pub fn encode_pgm(h: usize, w: usize, levels: &[u8]) -> Vec<u8> {
    assert_eq!(levels.len(), h * w, "pgm body length");
    encode("P5", w, h, levels)
}

/// Parsed header plus the raw body.
struct Parsed<'a> {
    width: usize,
    height: usize,
    body: &'a [u8],
}

fn parse<'a>(bytes: &'a [u8], magic: &[u8; 2], channels: usize) -> Result<Parsed<'a>> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format("magic", format!("expected {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut field = |name: &str| -> Result<usize> {
        // whitespace and `#` comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(name, "missing or non-numeric"));
        }
        std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format(name, "out of range"))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if width == 0 {
        return Err(Error::format("width", "must be positive"));
    }
    if height == 0 {
        return Err(Error::format("height", "must be positive"));
    }
    if maxval != 255 {
        return Err(Error::format("maxval", format!("{maxval}, only 255 is supported")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("maxval", "not followed by a single whitespace byte"));
    }
    pos += 1;
    let body = &bytes[pos..];
    let want = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format("width", "dimensions overflow"))?;
    if body.len() != want {
        return Err(Error::format(
            "pixels",
            format!("{} bytes for {width}x{height}x{channels} (expected {want})", body.len()),
        ));
    }
    Ok(Parsed { width, height, body })
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let p = parse(bytes, b"P6", 3)?;
    Image::from_levels(p.height, p.width, p.body)
}

/// Returns `(height, width, levels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let p = parse(bytes, b"P5", 1)?;
    Ok((p.height, p.width, p.body.to_vec()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format { field, message } => Error::Format { field, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    with_path(path, decode_ppm(&read(path)?))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    with_path(path, decode_pgm(&read(path)?))
}

pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: impl AsRef<Path>, h: usize, w: usize, levels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(h, w, levels)).map_err(|e| Error::io(path, e))
}
