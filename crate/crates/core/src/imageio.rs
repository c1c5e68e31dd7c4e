//! Conversion between image files and planar `[C, H, W]` buffers in `[0, 1]`.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{GrayImage, Rgb32FImage, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("cannot read image {}: {source}", .path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write image {}: {source}", .path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image buffer: {0}")]
    Shape(String),
}

/// Planar image, row-major within each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl PlanarImage {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageIoError> {
        if channels == 0 || height == 0 || width == 0 || data.len() != channels * height * width {
            return Err(ImageIoError::Shape(format!(
                "{} values for {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(PlanarImage {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        PlanarImage {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = PlanarImage::filled(3, h, w, 0.0);
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, px.0[c] as f64 / 255.0);
            }
        }
        out
    }

    /// Three-channel rendering; one-channel images are replicated.
    pub fn to_rgb(&self) -> Result<RgbImage, ImageIoError> {
        let src = match self.channels {
            1 => [0, 0, 0],
            3 => [0, 1, 2],
            n => return Err(ImageIoError::Shape(format!("cannot render {n} channels"))),
        };
        Ok(RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Rgb(src.map(|c| quantize(self.at(c, y as usize, x as usize))))
        }))
    }

    /// Channel mean as a single-channel image.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let mean = (0..self.channels)
                .map(|c| self.at(c, y as usize, x as usize))
                .sum::<f64>()
                / self.channels as f64;
            image::Luma([quantize(mean)])
        })
    }

    /// Bilinear resize of a 1- or 3-channel image.
    pub fn resized(&self, width: usize, height: usize) -> Result<PlanarImage, ImageIoError> {
        if (width, height) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let rgb = self.expand_rgb()?;
        let buf = Rgb32FImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Rgb([0, 1, 2].map(|c| rgb.at(c, y as usize, x as usize) as f32))
        });
        let small = image::imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle);
        let mut out = PlanarImage::filled(3, height, width, 0.0);
        for (x, y, px) in small.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, (px.0[c] as f64).clamp(0.0, 1.0));
            }
        }
        if self.channels == 1 {
            out = out.channel(0);
        }
        Ok(out)
    }

    fn channel(&self, c: usize) -> PlanarImage {
        let plane = self.height * self.width;
        PlanarImage {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.data[c * plane..(c + 1) * plane].to_vec(),
        }
    }

    /// 3-channel view, replicating a single channel.
    pub fn expand_rgb(&self) -> Result<PlanarImage, ImageIoError> {
        match self.channels {
            3 => Ok(self.clone()),
            1 => Ok(PlanarImage {
                channels: 3,
                height: self.height,
                width: self.width,
                data: self.data.repeat(3),
            }),
            n => Err(ImageIoError::Shape(format!("cannot expand {n} channels to RGB"))),
        }
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Decodes any supported format as RGB in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<PlanarImage, ImageIoError> {
    let img = image::open(path).map_err(|source| ImageIoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(PlanarImage::from_rgb(&img.to_rgb8()))
}

/// Writes a lossless PNG (RGB, or grayscale for one channel).
pub fn save_png(path: &Path, img: &PlanarImage) -> Result<(), ImageIoError> {
    let err = |source| ImageIoError::Write {
        path: path.to_path_buf(),
        source,
    };
    if img.channels == 1 {
        img.to_gray().save_with_format(path, image::ImageFormat::Png).map_err(err)
    } else {
        img.to_rgb()?.save_with_format(path, image::ImageFormat::Png).map_err(err)
    }
}
