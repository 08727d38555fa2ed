//! Single-view specular candidate mask.
//!
//! This is the seed stage for the multi-view filter. The default detector is
//! luminance hysteresis on 8-bit scaled L*: pixels at or above `high` seed the
//! mask, which then grows through 8-connected pixels at or above `low`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::colorspace::{luminance_to_unit8, Gray8Image, LuminanceImage};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major binary mask, `true` marks a specular pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecularMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl SpecularMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask", "dimensions must be positive"));
        }
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid(
                "mask",
                format!("{} values for {width}x{height}", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
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

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleViewMethod {
    /// Seeds are the brightest `1 - percentile` of the view (never below `low`).
    Percentile,
    /// Seeds are pixels at or above the fixed `high` level.
    #[default]
    TwoThreshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SingleViewConfig {
    pub method: SingleViewMethod,
    pub percentile: f64,
    pub high: u8,
    pub low: u8,
}

impl Default for SingleViewConfig {
    fn default() -> Self {
        Self {
            method: SingleViewMethod::TwoThreshold,
            percentile: 0.99,
            high: 220,
            low: 180,
        }
    }
}

impl SingleViewConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::invalid(
                "single-view config",
                format!("percentile {} not in (0, 1)", self.percentile),
            ));
        }
        if self.low > self.high {
            return Err(Error::invalid(
                "single-view config",
                format!("low {} above high {}", self.low, self.high),
            ));
        }
        Ok(())
    }
}

pub fn detect_single_view<T: Real>(
    img: &LuminanceImage<T>,
    cfg: &SingleViewConfig,
) -> Result<SpecularMask> {
    cfg.validate()?;
    let levels = luminance_to_unit8(img);
    let high = match cfg.method {
        SingleViewMethod::TwoThreshold => cfg.high,
        SingleViewMethod::Percentile => percentile_level(&levels, cfg.percentile).max(cfg.low),
    };
    let seeds = SpecularMask {
        width: levels.width(),
        height: levels.height(),
        data: levels.data().iter().map(|&v| v >= high).collect(),
    };
    Ok(grow_hysteresis(&seeds, &levels, cfg.low))
}

/// Smallest level such that at least `q` of the pixels are at or below it.
fn percentile_level(levels: &Gray8Image, q: f64) -> u8 {
    let mut hist = [0usize; 256];
    for &v in levels.data() {
        hist[v as usize] += 1;
    }
    let need = (q * levels.data().len() as f64).ceil() as usize;
    let mut acc = 0;
    for (level, &n) in hist.iter().enumerate() {
        acc += n;
        if acc >= need {
            return level as u8;
        }
    }
    255
}

/// Grows `seeds` through 8-connected pixels whose level is at least `low`.
pub fn grow_hysteresis(seeds: &SpecularMask, levels: &Gray8Image, low: u8) -> SpecularMask {
    assert_eq!(seeds.dims(), levels.dims(), "seed mask and levels differ in size");
    let (w, h) = (seeds.width as i64, seeds.height as i64);
    let mut out = seeds.clone();
    let mut queue: VecDeque<(i64, i64)> = seeds
        .data
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| ((i as i64) / w, (i as i64) % w))
        .collect();
    while let Some((r, c)) = queue.pop_front() {
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if (dr == 0 && dc == 0) || nr < 0 || nc < 0 || nr >= h || nc >= w {
                    continue;
                }
                let idx = (nr * w + nc) as usize;
                if !out.data[idx] && levels.data()[idx] >= low {
                    out.data[idx] = true;
                    queue.push_back((nr, nc));
                }
            }
        }
    }
    out
}
