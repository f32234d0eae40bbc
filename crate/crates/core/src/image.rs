//! Linear RGB float images and their PPM/PNG encodings.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// H×W×3 linear RGB, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * 3 + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = self.index(x, y, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.data.len() == other.data.len()
    }

    pub fn check_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        debug_assert!(self.same_shape(other));
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Image, scale: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Binary P6 with maxval 255; values clamped to [0,1] and rounded.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| quantize(v)));
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Image> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse {
                    offset: pos,
                    message: "truncated PPM header".into(),
                });
            }
            fields.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
        }
        if fields[0].1 != "P6" {
            return Err(Error::Parse {
                offset: 0,
                message: "expected P6 magic".into(),
            });
        }
        let mut nums = [0usize; 3];
        for (k, &(off, s)) in fields[1..].iter().enumerate() {
            nums[k] = s.parse().map_err(|_| Error::Parse {
                offset: off,
                message: format!("bad header field `{s}`"),
            })?;
        }
        let [width, height, maxval] = nums;
        if maxval != 255 {
            return Err(Error::Parse {
                offset: fields[3].0,
                message: format!("unsupported maxval {maxval}"),
            });
        }
        pos += 1;
        let n = width * height * 3;
        if bytes.len() < pos + n {
            return Err(Error::Parse {
                offset: bytes.len(),
                message: "truncated PPM pixel data".into(),
            });
        }
        let data = bytes[pos..pos + n].iter().map(|&b| b as f64 / 255.0).collect();
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_ppm())?;
        Ok(())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writer.finish().map_err(|e| Error::Io(std::io::Error::other(e)))?;
        Ok(())
    }

    pub fn write_ppm_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_ppm())?;
        Ok(())
    }
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
