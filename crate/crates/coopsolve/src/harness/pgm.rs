//! 8-bit grayscale images with binary PGM (P5) encode/decode.
//!
//! The format is: `P5`, whitespace-separated width, height and maxval
//! tokens (with `#` comments allowed between them), one whitespace byte,
//! then `width*height` raw bytes in row-major order.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM: expected magic \"P5\", got {0:?}")]
    BadMagic(String),
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("only 8-bit images are supported (maxval 255), got {0}")]
    Depth(u64),
    #[error("pixel payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PgmError> {
        if width == 0 || height == 0 {
            return Err(PgmError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(PgmError::Truncated { expected: width * height, found: pixels.len() });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, PgmError> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PgmError> {
        let mut cursor = 0usize;
        let magic = next_token(bytes, &mut cursor)
            .ok_or_else(|| PgmError::Header("missing magic".into()))?;
        if magic != b"P5" {
            return Err(PgmError::BadMagic(String::from_utf8_lossy(magic).into_owned()));
        }
        let width = next_number(bytes, &mut cursor, "width")?;
        let height = next_number(bytes, &mut cursor, "height")?;
        let maxval = next_number(bytes, &mut cursor, "maxval")?;
        if maxval != 255 {
            return Err(PgmError::Depth(maxval));
        }
        // exactly one whitespace byte separates the header from the payload
        if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
            return Err(PgmError::Header("missing separator before pixel data".into()));
        }
        cursor += 1;
        let expected = (width as usize)
            .checked_mul(height as usize)
            .ok_or_else(|| PgmError::Header("dimensions overflow".into()))?;
        let found = bytes.len() - cursor;
        if found < expected {
            return Err(PgmError::Truncated { expected, found });
        }
        GrayImage::new(
            width as usize,
            height as usize,
            bytes[cursor..cursor + expected].to_vec(),
        )
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), PgmError> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self, PgmError> {
        GrayImage::decode(&fs::read(path)?)
    }
}

/// Advances past whitespace and `#` comments, then returns the next token.
fn next_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    if *cursor >= bytes.len() {
        return None;
    }
    let start = *cursor;
    while *cursor < bytes.len()
        && !bytes[*cursor].is_ascii_whitespace()
        && bytes[*cursor] != b'#'
    {
        *cursor += 1;
    }
    Some(&bytes[start..*cursor])
}

fn next_number(bytes: &[u8], cursor: &mut usize, what: &str) -> Result<u64, PgmError> {
    let token = next_token(bytes, cursor)
        .ok_or_else(|| PgmError::Header(format!("missing {what}")))?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            PgmError::Header(format!("{what} is not a number: {:?}", String::from_utf8_lossy(token)))
        })
}
