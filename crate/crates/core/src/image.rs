//! Dense float images, masks, and PNG / EXR codecs.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major interleaved float image. Row 0 is the top of the picture.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        assert!(channels <= 3);
        let mut img = Image::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                img.pixel_mut(x, y).copy_from_slice(&v[..channels]);
            }
        }
        img
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    #[inline]
    pub fn texel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn texel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.channels..(index + 1) * self.channels]
    }

    /// Rec. 709 luminance of pixel `index` (single-channel images return the value).
    pub fn luminance(&self, index: usize) -> f64 {
        let p = self.texel(index);
        if self.channels >= 3 {
            0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]
        } else {
            p[0]
        }
    }

    /// Area-weighted resampling (box filter over the source footprint).
    pub fn resample_area(&self, out_w: usize, out_h: usize) -> Image {
        let mut out = Image::new(out_w, out_h, self.channels);
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let c = self.channels;
        let mut acc = vec![0.0; c];
        for oy in 0..out_h {
            let y0 = oy as f64 * sy;
            let y1 = y0 + sy;
            for ox in 0..out_w {
                let x0 = ox as f64 * sx;
                let x1 = x0 + sx;
                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut wsum = 0.0;
                let iy_end = (y1.ceil() as usize).min(self.height);
                let ix_end = (x1.ceil() as usize).min(self.width);
                for iy in (y0.floor() as usize)..iy_end {
                    let wy = (y1.min(iy as f64 + 1.0) - y0.max(iy as f64)).max(0.0);
                    if wy == 0.0 {
                        continue;
                    }
                    for ix in (x0.floor() as usize)..ix_end {
                        let wx = (x1.min(ix as f64 + 1.0) - x0.max(ix as f64)).max(0.0);
                        let w = wx * wy;
                        if w == 0.0 {
                            continue;
                        }
                        wsum += w;
                        for (a, v) in acc.iter_mut().zip(self.pixel(ix, iy)) {
                            *a += w * v;
                        }
                    }
                }
                for (o, a) in out.pixel_mut(ox, oy).iter_mut().zip(&acc) {
                    *o = a / wsum;
                }
            }
        }
        out
    }

    /// Crop a `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut out = Image::new(w, h, self.channels);
        for y in 0..h {
            for x in 0..w {
                out.pixel_mut(x, y)
                    .copy_from_slice(self.pixel(x0 + x, y0 + y));
            }
        }
        out
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND);
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Image(format!("{}: image too large", path.display())))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let src_channels = info.color_type.samples();
        let wide = info.bit_depth == png::BitDepth::Sixteen;
        let sample = |i: usize| -> f64 {
            if wide {
                u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]) as f64 / 65535.0
            } else {
                buf[i] as f64 / 255.0
            }
        };
        // Gray(+alpha) stays single channel, colour drops alpha.
        let channels = if src_channels >= 3 { 3 } else { 1 };
        let mut img = Image::new(w, h, channels);
        for p in 0..w * h {
            for c in 0..channels {
                img.data[p * channels + c] = sample(p * src_channels + c);
            }
        }
        Ok(img)
    }

    /// 8-bit PNG of the clamped values (1 or 3 channels), written as-is.
    pub fn save_png8(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        write_png(path, self.width, self.height, self.channels, png::BitDepth::Eight, &bytes)
    }

    /// 8-bit PNG of linear values encoded with the sRGB transfer curve.
    pub fn save_png8_srgb(&self, path: &Path) -> Result<()> {
        let mut enc = self.clone();
        enc.data.iter_mut().for_each(|v| *v = linear_to_srgb(*v));
        enc.save_png8(path)
    }

    /// 16-bit linear PNG.
    pub fn save_png16(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .flat_map(|v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
            .collect();
        write_png(path, self.width, self.height, self.channels, png::BitDepth::Sixteen, &bytes)
    }

    /// 32-bit float RGB EXR (single-channel images are replicated).
    pub fn save_exr(&self, path: &Path) -> Result<()> {
        let px = |x: usize, y: usize| -> (f32, f32, f32) {
            let p = self.pixel(x, y);
            if self.channels >= 3 {
                (p[0] as f32, p[1] as f32, p[2] as f32)
            } else {
                (p[0] as f32, p[0] as f32, p[0] as f32)
            }
        };
        exr::prelude::write_rgb_file(path, self.width, self.height, px)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }

    /// First RGBA layer of an EXR file as a 3-channel image.
    pub fn load_exr(path: &Path) -> Result<Image> {
        let image = exr::prelude::read_first_rgba_layer_from_file(
            path,
            |res, _| Image::new(res.width(), res.height(), 3),
            |img: &mut Image, pos, (r, g, b, _a): (f32, f32, f32, f32)| {
                img.pixel_mut(pos.x(), pos.y())
                    .copy_from_slice(&[r as f64, g as f64, b as f64]);
            },
        )
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        Ok(image.layer_data.channel_data.pixels)
    }
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    channels: usize,
    depth: png::BitDepth,
    bytes: &[u8],
) -> Result<()> {
    let color = match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        n => return Err(Error::Image(format!("cannot write {n}-channel png"))),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

pub fn linear_to_srgb(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Boolean coverage mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    /// Mask from an image channel: `value > threshold`.
    pub fn from_image(img: &Image, threshold: f64) -> Mask {
        Mask {
            width: img.width,
            height: img.height,
            data: (0..img.pixel_count())
                .map(|i| img.texel(i)[0] > threshold)
                .collect(),
        }
    }

    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Peak signal-to-noise ratio for signals in [0, 1].
pub fn psnr(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.data.len(), b.data.len());
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_resample_averages_blocks() {
        let img = Image::from_fn(4, 2, 1, |x, _| [x as f64, 0.0, 0.0]);
        let half = img.resample_area(2, 1);
        assert_eq!(half.data, vec![0.5, 2.5]);
        let same = img.resample_area(4, 2);
        assert_eq!(same, img);
    }

    #[test]
    fn png_round_trip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(5, 3, 3, |x, y| [x as f64 / 4.0, y as f64 / 2.0, 0.25]);
        img.save_png16(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn exr_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.exr");
        let img = Image::from_fn(6, 4, 3, |x, y| [x as f64 * 3.5, y as f64, 0.125]);
        img.save_exr(&path).unwrap();
        let back = Image::load_exr(&path).unwrap();
        assert_eq!(back.width, 6);
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
