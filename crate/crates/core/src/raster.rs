//! In-memory 8-bit rasters with PNG / TIFF input and PNG output.

use std::path::Path;

use image::{ColorType, DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

/// Row-major interleaved 8-bit pixels, one or three channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRaster {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl ImageRaster {
    pub fn zeros(width: u32, height: u32, channels: u8) -> Self {
        assert!(channels == 1 || channels == 3, "only 1- or 3-band rasters");
        Self {
            width,
            height,
            channels,
            data: vec![0; width as usize * height as usize * channels as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::validation(format!("unsupported band count {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::validation(format!(
                "raster buffer holds {} bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Read a PNG or TIFF. Gray images (any bit depth) become single-band,
    /// everything else is converted to 8-bit RGB.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_dynamic(img))
    }

    pub fn from_dynamic(img: DynamicImage) -> Self {
        let gray = matches!(
            img.color(),
            ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16
        );
        if gray {
            let buf = img.to_luma8();
            let (w, h) = buf.dimensions();
            Self {
                width: w,
                height: h,
                channels: 1,
                data: buf.into_raw(),
            }
        } else {
            let buf = img.to_rgb8();
            let (w, h) = buf.dimensions();
            Self {
                width: w,
                height: h,
                channels: 3,
                data: buf.into_raw(),
            }
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        match self.channels {
            1 => DynamicImage::ImageLuma8(
                GrayImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer size checked at construction"),
            ),
            _ => DynamicImage::ImageRgb8(
                RgbImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer size checked at construction"),
            ),
        }
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_dynamic()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        self.data[o..o + c].copy_from_slice(&value[..c]);
    }

    /// `width x height` window starting at `(x0, y0)`; samples outside this
    /// raster are zero.
    pub fn crop_padded(&self, x0: u32, y0: u32, width: u32, height: u32) -> Self {
        let mut out = Self::zeros(width, height, self.channels);
        if x0 >= self.width || y0 >= self.height {
            return out;
        }
        let copy_w = width.min(self.width - x0) as usize * self.channels as usize;
        let copy_h = height.min(self.height - y0);
        for row in 0..copy_h {
            let src = self.offset(x0, y0 + row);
            let dst = out.offset(0, row);
            out.data[dst..dst + copy_w].copy_from_slice(&self.data[src..src + copy_w]);
        }
        out
    }

    /// Write `patch` into this raster with its top-left corner at `(x0, y0)`,
    /// dropping whatever falls outside.
    pub fn embed(&mut self, patch: &ImageRaster, x0: u32, y0: u32) {
        assert_eq!(self.channels, patch.channels, "band count mismatch");
        if x0 >= self.width || y0 >= self.height {
            return;
        }
        let copy_w = patch.width.min(self.width - x0) as usize * self.channels as usize;
        let copy_h = patch.height.min(self.height - y0);
        for row in 0..copy_h {
            let src = patch.offset(0, row);
            let dst = self.offset(x0, y0 + row);
            self.data[dst..dst + copy_w].copy_from_slice(&patch.data[src..src + copy_w]);
        }
    }

    /// Single-band rasters are replicated into three bands.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}
