//! Grayscale image fields: decoding, box blur and bilinear interpolation.

use std::path::Path;

use crate::error::{Error, Result};

/// A blurred grayscale raster viewed as a continuous field on `[0,1]²`.
///
/// Pixel `(row, col)` sits at `((col + 0.5)/W, (row + 0.5)/H)`; the first
/// coordinate runs along columns and the second down the rows. Outside the
/// outermost pixel centers the field is clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    pub width: usize,
    pub height: usize,
    /// Row-major values in `[0, 255]`.
    pub values: Vec<f64>,
}

impl ImageField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Precondition(format!(
                "image of {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        [(col as f64 + 0.5) / self.width as f64, (row as f64 + 0.5) / self.height as f64]
    }

    pub fn sample(&self, x: &[f64]) -> f64 {
        let (c0, c1, tc) = bracket(x[0], self.width);
        let (r0, r1, tr) = bracket(x[1], self.height);
        let top = self.pixel(r0, c0) * (1.0 - tc) + self.pixel(r0, c1) * tc;
        let bottom = self.pixel(r1, c0) * (1.0 - tc) + self.pixel(r1, c1) * tc;
        top * (1.0 - tr) + bottom * tr
    }

    /// Three passes of a clamped-edge box blur in each direction, which
    /// approximates a Gaussian/stack blur of the same radius.
    pub fn blurred(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let mut v = self.values.clone();
        for _ in 0..3 {
            v = box_pass(&v, self.width, self.height, radius, true);
            v = box_pass(&v, self.width, self.height, radius, false);
        }
        Self {
            width: self.width,
            height: self.height,
            values: v,
        }
    }
}

/// Neighbouring pixel indices and interpolation weight along one axis.
fn bracket(u: f64, n: usize) -> (usize, usize, f64) {
    let p = (u * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = (p.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, p - i0 as f64)
}

fn box_pass(v: &[f64], w: usize, h: usize, radius: usize, horizontal: bool) -> Vec<f64> {
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };
    let at = |line: usize, i: usize| if horizontal { line * w + i } else { i * w + line };
    let r = radius as isize;
    let norm = (2 * radius + 1) as f64;
    let mut out = vec![0.0; v.len()];
    for line in 0..lines {
        let get = |i: isize| v[at(line, i.clamp(0, len as isize - 1) as usize)];
        let mut sum: f64 = (-r..=r).map(get).sum();
        for i in 0..len as isize {
            out[at(line, i as usize)] = sum / norm;
            sum += get(i + r + 1) - get(i - r);
        }
    }
    out
}

/// Decode an 8-bit grayscale image. Binary (P5) and ASCII (P2) PGM are
/// always supported; PNG needs the `png` feature.
pub fn read_grayscale(path: &Path) -> Result<ImageField> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.starts_with(b"\x89PNG") {
        return read_png(path, &bytes);
    }
    parse_pnm(&bytes).map_err(|reason| Error::ImageFormat {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(feature = "png")]
fn read_png(path: &Path, bytes: &[u8]) -> Result<ImageField> {
    let fail = |reason: String| Error::ImageFormat {
        path: path.to_path_buf(),
        reason,
    };
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| fail(e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            ImageField::new(w as usize, h as usize, g.into_raw().into_iter().map(f64::from).collect())
        }
        other => Err(fail(format!("expected 8-bit grayscale, found {:?}", other.color()))),
    }
}

#[cfg(not(feature = "png"))]
fn read_png(path: &Path, _bytes: &[u8]) -> Result<ImageField> {
    Err(Error::ImageFormat {
        path: path.to_path_buf(),
        reason: "PNG support requires the `png` feature; convert to binary PGM".into(),
    })
}

struct Header<'a> {
    rest: &'a [u8],
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        loop {
            match self.rest.first() {
                Some(b) if b.is_ascii_whitespace() => self.rest = &self.rest[1..],
                Some(b'#') => {
                    let end = self.rest.iter().position(|&b| b == b'\n').unwrap_or(self.rest.len());
                    self.rest = &self.rest[end..];
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space();
        let end = self.rest.iter().position(|b| !b.is_ascii_digit()).unwrap_or(self.rest.len());
        if end == 0 {
            return Err(format!("missing {what}"));
        }
        let s = std::str::from_utf8(&self.rest[..end]).expect("ascii digits");
        self.rest = &self.rest[end..];
        s.parse().map_err(|_| format!("{what} {s} is too large"))
    }
}

pub(crate) fn parse_pnm(bytes: &[u8]) -> std::result::Result<ImageField, String> {
    let magic = bytes.get(..2).ok_or("file too short")?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        b"P3" | b"P6" => return Err("color image; expected grayscale".into()),
        b"P1" | b"P4" => return Err("bitmap image; expected 8-bit grayscale".into()),
        _ => return Err("not a PGM file".into()),
    };
    let mut hdr = Header { rest: &bytes[2..] };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("empty image".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} is not 8-bit"));
    }
    let n = width.checked_mul(height).ok_or("image too large")?;
    let rescale = |v: usize| v as f64 * 255.0 / maxval as f64;
    let values = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let data = hdr.rest.get(1..).ok_or("missing raster")?;
        if data.len() < n {
            return Err(format!("raster has {} bytes, expected {n}", data.len()));
        }
        data[..n].iter().map(|&b| rescale(b as usize)).collect()
    } else {
        (0..n)
            .map(|_| hdr.number("pixel").map(rescale))
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    if values.iter().any(|&v| v > 255.0) {
        return Err("pixel exceeds maxval".into());
    }
    Ok(ImageField { width, height, values })
}

/// Serialize as binary PGM.
pub fn write_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_binary_and_ascii() {
        let bin = write_pgm(3, 2, &[0, 10, 20, 30, 40, 255]);
        let img = parse_pnm(&bin).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert_eq!(img.pixel(1, 2), 255.0);
        let ascii = b"P2\n# comment\n2 1\n15\n0 15\n";
        let img = parse_pnm(ascii).unwrap();
        assert_eq!(img.values, vec![0.0, 255.0]);
    }

    #[test]
    fn rejects_color_and_truncated() {
        assert!(parse_pnm(b"P6\n1 1\n255\n\x00\x00\x00").unwrap_err().contains("grayscale"));
        assert!(parse_pnm(b"P5\n4 4\n255\n\x00").is_err());
        assert!(parse_pnm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn bilinear_hits_pixel_centers() {
        let img = ImageField::new(2, 2, vec![0.0, 100.0, 200.0, 50.0]).unwrap();
        assert_eq!(img.sample(&img.pixel_center(1, 0)), 200.0);
        assert_eq!(img.sample(&[0.5, 0.25]), 50.0);
        assert_eq!(img.sample(&[0.5, 0.5]), 87.5);
        assert_eq!(img.sample(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let img = ImageField::new(5, 4, vec![128.0; 20]).unwrap();
        assert!(img.blurred(50).values.iter().all(|&v| v == 128.0));
        let mut v = vec![0.0; 31 * 31];
        v[15 * 31 + 15] = 255.0;
        let b = ImageField::new(31, 31, v).unwrap().blurred(3);
        let total: f64 = b.values.iter().sum();
        assert!((total - 255.0).abs() < 1e-9);
        assert!(b.pixel(15, 15) > b.pixel(15, 18));
    }
}
