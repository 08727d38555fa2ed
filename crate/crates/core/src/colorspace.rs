//! sRGB to CIELAB lightness conversion.
//!
//! Every view is reduced to its L* channel (D65 white, exact IEC 61966-2-1
//! decoding) before any multi-view reasoning happens. The evaluation metric
//! works on L* rescaled to 8-bit levels, see [`luminance_to_unit8`].

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative luminance row of the linear-sRGB to XYZ (D65) matrix.
const Y_FROM_LINEAR: [f64; 3] = [0.212_672_9, 0.715_152_2, 0.072_175_0];

/// CIE constants in their exact rational form.
const LAB_EPSILON: f64 = 216.0 / 24_389.0;
const LAB_KAPPA: f64 = 24_389.0 / 27.0;

/// Row-major 8-bit sRGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::invalid(
                "rgb image",
                format!("{} bytes for {width}x{height}, expected {expected}", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        Self::new(width, height, rgb.iter().copied().cycle().take(n * 3).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: u32, col: u32) -> [u8; 3] {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }
}

/// Row-major CIELAB L* raster, values in `[0, 100]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LuminanceImage<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

impl<T: Real> LuminanceImage<T> {
    pub fn new(width: u32, height: u32, data: Vec<T>) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::invalid(
                "luminance image",
                format!("{} values for {width}x{height}", data.len()),
            ));
        }
        let hundred = T::lit(100.0);
        if let Some(bad) = data.iter().find(|v| !(**v >= T::zero() && **v <= hundred)) {
            return Err(Error::invalid(
                "luminance image",
                format!("L* value {bad} outside [0, 100]"),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> T {
        self.data[row as usize * self.width as usize + col as usize]
    }
}

/// Row-major 8-bit single channel raster (scaled L*, groundtruth maps).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gray8Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Gray8Image {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid(
                "gray image",
                format!("{} values for {width}x{height}", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(
            "image dimensions",
            format!("{width}x{height} must both be positive"),
        ));
    }
    Ok(())
}

/// IEC 61966-2-1 decoding of one normalized sRGB channel.
#[inline]
pub fn srgb_decode(encoded: f64) -> f64 {
    if encoded <= 0.040_45 {
        encoded / 12.92
    } else {
        ((encoded + 0.055) / 1.055).powf(2.4)
    }
}

/// IEC 61966-2-1 encoding of a linear channel, clamped and quantized to 8 bits.
#[inline]
pub fn srgb_encode_u8(linear: f64) -> u8 {
    let v = linear.clamp(0.0, 1.0);
    let e = if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    };
    (e * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Relative luminance Y of a linear RGB triple, normalized so that white is exactly 1.
#[inline]
pub fn relative_luminance(linear: [f64; 3]) -> f64 {
    let white: f64 = Y_FROM_LINEAR.iter().sum();
    (Y_FROM_LINEAR[0] * linear[0] + Y_FROM_LINEAR[1] * linear[1] + Y_FROM_LINEAR[2] * linear[2])
        / white
}

/// CIE L* for a relative luminance (Y / Yn).
#[inline]
pub fn lightness_from_y(y: f64) -> f64 {
    let l = if y > LAB_EPSILON {
        116.0 * y.cbrt() - 16.0
    } else {
        LAB_KAPPA * y
    };
    l.clamp(0.0, 100.0)
}

/// L* of a single 8-bit sRGB pixel.
pub fn srgb8_lightness(rgb: [u8; 3]) -> f64 {
    let lin = rgb.map(|c| srgb_decode(f64::from(c) / 255.0));
    lightness_from_y(relative_luminance(lin))
}

pub fn srgb_to_lab_luminance<T: Real>(img: &RgbImage) -> LuminanceImage<T> {
    let lut: Vec<f64> = (0..=255u8)
        .map(|c| srgb_decode(f64::from(c) / 255.0))
        .collect();
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            let lin = [
                lut[px[0] as usize],
                lut[px[1] as usize],
                lut[px[2] as usize],
            ];
            T::lit(lightness_from_y(relative_luminance(lin)))
        })
        .collect();
    LuminanceImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Scales one L* value to an 8-bit level, rounding half up.
#[inline]
pub fn lightness_to_level<T: Real>(l: T) -> u8 {
    let scaled = l * T::lit(255.0) / T::lit(100.0) + T::lit(0.5);
    let v = scaled.floor().to_f64_lossy();
    v.clamp(0.0, 255.0) as u8
}

pub fn luminance_to_unit8<T: Real>(img: &LuminanceImage<T>) -> Gray8Image {
    Gray8Image {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&l| lightness_to_level(l)).collect(),
    }
}

/// L* of a color raster, already scaled to 8-bit levels.
pub fn rgb_to_levels(img: &RgbImage) -> Gray8Image {
    luminance_to_unit8(&srgb_to_lab_luminance::<f64>(img))
}
