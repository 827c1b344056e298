//! Minimal float images with PFM (float), PPM (8-bit RGB) and PGM (8-bit gray) I/O.

use std::path::Path;

use crate::{Error, Result};

/// Row-major image, `channels` interleaved values per pixel, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "image data has {} values, expected {width}×{height}×{channels}",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    fn offset(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.offset(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let o = self.offset(x, y);
        self.data[o + c] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let o = self.offset(x, y);
        &mut self.data[o..o + self.channels]
    }

    pub fn same_shape(&self, o: &Image) -> bool {
        self.width == o.width && self.height == o.height && self.channels == o.channels
    }

    pub fn mean_abs_diff(&self, o: &Image) -> Result<f64> {
        if !self.same_shape(o) {
            return Err(Error::InvalidInput(format!(
                "image shapes differ: {}×{}×{} vs {}×{}×{}",
                self.width, self.height, self.channels, o.width, o.height, o.channels
            )));
        }
        let s: f64 = self.data.iter().zip(&o.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(s / self.data.len().max(1) as f64)
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Saves by extension: `.pfm` float, `.ppm` / `.pgm` 8-bit (values clamped to [0,1], no gamma).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "pfm" => encode_pfm(img)?,
        "ppm" | "pgm" => encode_pnm(img)?,
        _ => return Err(Error::InvalidInput(format!("unknown image extension for {}", path.display()))),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Gamma-2.2 tone-mapped 8-bit copy of a linear image.
pub fn tone_map(img: &Image) -> Image {
    let mut out = img.clone();
    for v in &mut out.data {
        *v = v.clamp(0.0, 1.0).powf(1.0 / 2.2);
    }
    out
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pfm(img: &Image) -> Result<Vec<u8>> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::InvalidInput(format!("PFM supports 1 or 3 channels, not {c}"))),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    // PFM stores rows bottom to top.
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            for &v in img.pixel(x, y) {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn encode_pnm(img: &Image) -> Result<Vec<u8>> {
    let tag = match img.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::InvalidInput(format!("PPM/PGM support 1 or 3 channels, not {c}"))),
    };
    let mut out = format!("{tag}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| to_u8(v)));
    Ok(out)
}

/// Reads whitespace-separated header tokens (skipping `#` comments) and returns them
/// with the offset of the first payload byte.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if i >= bytes.len() {
            return Err(Error::Truncated { offset: i, needed: 1 });
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the payload
    if i >= bytes.len() {
        return Err(Error::Truncated { offset: i, needed: 1 });
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str, offset: usize) -> Result<usize> {
    tok.parse::<usize>()
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse_byte(offset, format!("bad image dimension {tok:?}")))
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 {
        return Err(Error::Truncated { offset: 0, needed: 2 });
    }
    match &bytes[..2] {
        b"PF" | b"Pf" => decode_pfm(bytes),
        b"P5" | b"P6" => decode_pnm(bytes),
        _ => Err(Error::parse_byte(0, "not a PFM, PPM or PGM image")),
    }
}

fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let (t, body) = header_tokens(bytes, 4)?;
    let channels = if t[0] == "PF" { 3 } else { 1 };
    let width = parse_dim(&t[1], 3)?;
    let height = parse_dim(&t[2], 3)?;
    let scale: f64 = t[3]
        .parse()
        .map_err(|_| Error::parse_byte(body, format!("bad PFM scale {:?}", t[3])))?;
    if scale == 0.0 {
        return Err(Error::parse_byte(body, "PFM scale is zero"));
    }
    let little = scale < 0.0;
    let needed = width * height * channels * 4;
    if bytes.len() < body + needed {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: body + needed - bytes.len(),
        });
    }
    let mut img = Image::new(width, height, channels);
    let mut off = body;
    for y in (0..height).rev() {
        for x in 0..width {
            for c in 0..channels {
                let b: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
                let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
                img.set(x, y, c, v as f64);
                off += 4;
            }
        }
    }
    Ok(img)
}

fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let (t, body) = header_tokens(bytes, 4)?;
    let channels = if t[0] == "P6" { 3 } else { 1 };
    let width = parse_dim(&t[1], 3)?;
    let height = parse_dim(&t[2], 3)?;
    if t[3] != "255" {
        return Err(Error::parse_byte(body, format!("only maxval 255 is supported, got {}", t[3])));
    }
    let needed = width * height * channels;
    if bytes.len() < body + needed {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: body + needed - bytes.len(),
        });
    }
    let data = bytes[body..body + needed].iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_data(width, height, channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, c: usize) -> Image {
        let data = (0..w * h * c).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        Image::from_data(w, h, c, data).unwrap()
    }

    #[test]
    fn pfm_round_trip_keeps_f32_values() {
        for c in [1, 3] {
            let img = ramp(7, 5, c);
            let back = decode_image(&encode_pfm(&img).unwrap()).unwrap();
            assert!(back.same_shape(&img));
            for (a, b) in back.data.iter().zip(&img.data) {
                assert_eq!(*a, *b as f32 as f64);
            }
            assert_eq!(encode_pfm(&back).unwrap(), encode_pfm(&img).unwrap());
        }
    }

    #[test]
    fn pfm_rows_are_stored_bottom_up() {
        let mut img = Image::new(1, 2, 1);
        img.set(0, 0, 0, 1.0);
        let bytes = encode_pfm(&img).unwrap();
        let tail = &bytes[bytes.len() - 8..];
        assert_eq!(&tail[..4], &0f32.to_le_bytes());
        assert_eq!(&tail[4..], &1f32.to_le_bytes());
    }

    #[test]
    fn pnm_quantizes_to_8_bits() {
        let img = ramp(4, 3, 3);
        let back = decode_image(&encode_pnm(&img).unwrap()).unwrap();
        for (a, b) in back.data.iter().zip(&img.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let gray = decode_image(b"P5\n# comment\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(gray.data, vec![0.0, 1.0]);
    }

    #[test]
    fn truncated_payload_is_reported() {
        let bytes = encode_pfm(&ramp(3, 3, 3)).unwrap();
        assert!(matches!(decode_image(&bytes[..bytes.len() - 1]), Err(Error::Truncated { .. })));
        assert!(decode_image(b"P3\n1 1\n255\n0 0 0").is_err());
    }

    #[test]
    fn tone_map_is_gamma_and_clamp() {
        let img = Image::from_data(3, 1, 1, vec![-1.0, 0.25, 4.0]).unwrap();
        let t = tone_map(&img);
        assert_eq!(t.data[0], 0.0);
        assert!((t.data[1] - 0.25f64.powf(1.0 / 2.2)).abs() < 1e-15);
        assert_eq!(t.data[2], 1.0);
    }
}
