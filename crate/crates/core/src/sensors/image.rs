//! Plain RGB buffers and PNG encoding.

use std::io::Cursor;

use super::SensorError;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&fill);
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let k = (y * self.width + x) * 3;
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let k = (y * self.width + x) * 3;
        self.data[k..k + 3].copy_from_slice(&rgb);
    }

    /// Set a pixel given signed coordinates; out-of-range writes are ignored.
    pub fn put_clipped(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.put(x as usize, y as usize, rgb);
        }
    }

    pub fn to_png(&self) -> Vec<u8> {
        encode(
            self.width,
            self.height,
            png::ColorType::Rgb,
            png::BitDepth::Eight,
            &self.data,
        )
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, SensorError> {
        let decoder = png::Decoder::new(Cursor::new(bytes));
        let mut reader = decoder
            .read_info()
            .map_err(|e| SensorError::Png(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| SensorError::Png("image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| SensorError::Png(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(SensorError::Png("expected 8-bit image".into()));
        }
        let (w, h) = (info.width as usize, info.height as usize);
        let data = match info.color_type {
            png::ColorType::Rgb => buf[..w * h * 3].to_vec(),
            png::ColorType::Rgba => buf[..w * h * 4]
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            other => {
                return Err(SensorError::Png(format!(
                    "unsupported color type {other:?}"
                )))
            }
        };
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

fn encode(w: usize, h: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().expect("png header");
        writer.write_image_data(data).expect("png data");
        writer.finish().expect("png finish");
    }
    out
}

/// Depth image as a 16-bit grayscale PNG in millimeters (saturating).
pub fn depth_to_png16(width: usize, height: usize, depth: &[f64]) -> Vec<u8> {
    let mut data = Vec::with_capacity(depth.len() * 2);
    for &d in depth {
        let mm = (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
        data.extend_from_slice(&mm.to_be_bytes());
    }
    encode(
        width,
        height,
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )
}

/// Inverse of [`depth_to_png16`]; returns meters.
pub fn depth_from_png16(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), SensorError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| SensorError::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| SensorError::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| SensorError::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(SensorError::Png("expected 16-bit grayscale".into()));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let depth = buf[..w * h * 2]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 1000.0)
        .collect();
    Ok((w, h, depth))
}
