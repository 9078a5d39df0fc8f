use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::InputShape;

/// A single image, channel-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::arg(format!(
                "{} values do not fill a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// From 8-bit channel-major values; 255 maps to 1.0.
    pub fn from_u8(channels: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(
            channels,
            height,
            width,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// The `h`×`w` window with top-left corner `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
        if top + h > self.height || left + w > self.width {
            return Err(Error::arg(format!(
                "crop {h}x{w} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in top..top + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + w]);
            }
        }
        Image::new(self.channels, h, w, data)
    }

    /// Luma conversion for 3-channel images; other channel counts are
    /// averaged.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.height * self.width;
        let data = (0..n)
            .map(|i| {
                if self.channels == 3 {
                    0.299 * self.data[i] + 0.587 * self.data[n + i] + 0.114 * self.data[2 * n + i]
                } else {
                    (0..self.channels)
                        .map(|c| self.data[c * n + i])
                        .sum::<f64>()
                        / self.channels as f64
                }
            })
            .collect();
        Image {
            channels: 1,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Encodes as an 8-bit PNG-compatible buffer.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Reads a raster image from disk as `channels` (1 or 3) channels in `[0, 1]`.
pub fn load_image(path: &Path, channels: usize) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    match channels {
        1 => {
            let g = img.to_luma8();
            Image::from_u8(1, g.height() as usize, g.width() as usize, g.as_raw())
        }
        3 => {
            let rgb = img.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            // Interleaved → channel-major.
            let raw = rgb.as_raw();
            let mut planar = vec![0u8; raw.len()];
            for i in 0..w * h {
                for c in 0..3 {
                    planar[c * w * h + i] = raw[i * 3 + c];
                }
            }
            Image::from_u8(3, h, w, &planar)
        }
        _ => Err(Error::arg(format!(
            "cannot load images with {channels} channels"
        ))),
    }
}

/// Writes a 1- or 3-channel image as PNG.
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let bytes = img.to_u8();
    let result = match img.channels {
        1 => image::GrayImage::from_raw(w, h, bytes).map(|b| b.save(path)),
        3 => {
            let n = img.width * img.height;
            let interleaved = (0..n * 3).map(|i| bytes[(i % 3) * n + i / 3]).collect();
            image::RgbImage::from_raw(w, h, interleaved).map(|b| b.save(path))
        }
        c => return Err(Error::arg(format!("cannot save images with {c} channels"))),
    };
    match result {
        Some(r) => r.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        }),
        None => Err(Error::arg("image buffer does not match its dimensions")),
    }
}

/// Bilinear resize (half-pixel centres, edge clamped) to the target spatial
/// size, with grayscale conversion when the target has one channel and the
/// source has several. Output values are clamped to `[0, 1]`.
pub fn resize_and_normalize(img: &Image, target: InputShape) -> Result<Image> {
    if img.is_empty() {
        return Err(Error::arg("cannot resize an empty image"));
    }
    let src = if target.channels == 1 {
        img.to_gray()
    } else if target.channels == img.channels {
        img.clone()
    } else if img.channels == 1 {
        let n = img.data.len();
        Image::new(
            target.channels,
            img.height,
            img.width,
            (0..target.channels * n).map(|i| img.data[i % n]).collect(),
        )?
    } else {
        return Err(Error::arg(format!(
            "cannot map {} channels to {}",
            img.channels, target.channels
        )));
    };
    let (th, tw) = (target.height, target.width);
    if th == 0 || tw == 0 {
        return Err(Error::arg("target size must be non-zero"));
    }
    let ys = axis_samples(src.height, th);
    let xs = axis_samples(src.width, tw);
    let mut data = Vec::with_capacity(src.channels * th * tw);
    for c in 0..src.channels {
        let plane = src.plane(c);
        for &(y0, y1, fy) in &ys {
            let (r0, r1) = (&plane[y0 * src.width..], &plane[y1 * src.width..]);
            for &(x0, x1, fx) in &xs {
                let top = lerp(r0[x0], r0[x1], fx);
                let bottom = lerp(r1[x0], r1[x1], fx);
                data.push(lerp(top, bottom, fy).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(src.channels, th, tw, data)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + t * (b - a)
    }
}

/// For each output coordinate, the two source neighbours and the weight of
/// the second.
fn axis_samples(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}
