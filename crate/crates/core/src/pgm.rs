//! Grayscale PGM (P2/P5) reading and writing.

use crate::denoise::ImageBuffer;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmFormat {
    /// P2
    Ascii,
    /// P5
    Binary,
}

/// Clip to `[0, 1]` then `floor(x·255 + 0.5)`.
pub fn quantize(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() && self.data[self.pos] != b'#' {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Malformed("unexpected end of PGM header".into()));
        }
        std::str::from_utf8(&self.data[start..self.pos]).map_err(|_| Error::Malformed("non-ASCII PGM token".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::Malformed(format!("bad PGM {what}: `{t}`")))
    }
}

pub fn read_pgm(data: &[u8]) -> Result<ImageBuffer> {
    let mut cur = Cursor { data, pos: 0 };
    let magic = cur.token()?.to_string();
    let format = match magic.as_str() {
        "P2" => PgmFormat::Ascii,
        "P5" => PgmFormat::Binary,
        "P1" | "P3" | "P4" | "P6" => {
            return Err(Error::Malformed(format!("{magic} image rejected: grayscale only (P2/P5)")))
        }
        other => return Err(Error::Malformed(format!("not a PGM file (magic `{other}`)"))),
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Malformed(format!("PGM maxval {maxval} out of range")));
    }
    let count = width * height;
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(count);
    match format {
        PgmFormat::Ascii => {
            for _ in 0..count {
                let v = cur.number("sample")?;
                if v > maxval {
                    return Err(Error::Malformed(format!("sample {v} exceeds maxval {maxval}")));
                }
                pixels.push(v as f64 / scale);
            }
        }
        PgmFormat::Binary => {
            // a single whitespace byte separates the header from the raster
            cur.pos += 1;
            let width_bytes = if maxval < 256 { 1 } else { 2 };
            let raster = data
                .get(cur.pos..cur.pos + count * width_bytes)
                .ok_or_else(|| Error::Malformed("truncated PGM raster".into()))?;
            for chunk in raster.chunks(width_bytes) {
                let v = if width_bytes == 1 {
                    chunk[0] as usize
                } else {
                    (chunk[0] as usize) << 8 | chunk[1] as usize
                };
                if v > maxval {
                    return Err(Error::Malformed(format!("sample {v} exceeds maxval {maxval}")));
                }
                pixels.push(v as f64 / scale);
            }
        }
    }
    ImageBuffer::new(width, height, pixels)
}

pub fn read_pgm_file(path: impl AsRef<std::path::Path>) -> Result<ImageBuffer> {
    read_pgm(&std::fs::read(path)?)
}

/// 8-bit output with maxval 255.
pub fn write_pgm(img: &ImageBuffer, format: PgmFormat) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let samples = img.pixels().iter().map(|&p| quantize(p));
    match format {
        PgmFormat::Binary => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend(samples);
            out
        }
        PgmFormat::Ascii => {
            let mut out = format!("P2\n{w} {h}\n255\n");
            let samples: Vec<u8> = samples.collect();
            for row in samples.chunks(w) {
                let line: Vec<String> = row.iter().map(ToString::to_string).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

/// Format follows the extension: `.pgm` binary, `.pgma`/`.txt` ASCII.
pub fn write_pgm_file(img: &ImageBuffer, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("pgma") | Some("txt") => PgmFormat::Ascii,
        _ => PgmFormat::Binary,
    };
    std::fs::write(path, write_pgm(img, format))?;
    Ok(())
}
