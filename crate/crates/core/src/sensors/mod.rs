//! Three-camera panoramic color/depth rendering by column raycasting, and the
//! online allocentric top-down map.
//!
//! Each panorama column is a single horizontal ray. Columns run left to right
//! across the left (+90°), front (0°) and right (−90°) cameras, so image-right
//! is clockwise and the strip is continuous. Depth values are horizontal
//! distances along the column ray.

mod image;
mod render;
mod topdown;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Pose;

pub use image::{depth_from_png16, depth_to_png16, RgbImage};
pub use render::{pixel_to_world, render_panorama, world_to_pixel};
pub use topdown::{update_topdown, TopDownMap, TOPDOWN_SIZE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("pose {0:?} is inside an obstacle")]
    PoseInObstacle(Pose),
    #[error("png: {0}")]
    Png(String),
}

/// Heading offsets of the left, front and right cameras.
pub const CAMERA_OFFSETS: [f64; 3] = [
    std::f64::consts::FRAC_PI_2,
    0.0,
    -std::f64::consts::FRAC_PI_2,
];

pub const DEFAULT_MAX_DEPTH: f64 = 5.0;

pub const FLOOR_RGB: [u8; 3] = [122, 112, 98];
pub const CEILING_RGB: [u8; 3] = [214, 214, 220];
pub const WALL_RGB: [u8; 3] = [188, 184, 172];
pub const WALL_SHADED_RGB: [u8; 3] = [158, 154, 146];

/// Pinhole parameters shared by the three cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cam_width: usize,
    pub height: usize,
    /// Horizontal focal length in pixels.
    pub focal: f64,
    /// Vertical focal length in pixels.
    pub focal_v: f64,
    /// Camera height above the floor in meters.
    pub cam_height: f64,
    pub wall_height: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            cam_width: 256,
            height: 256,
            focal: 128.0,
            focal_v: 128.0,
            cam_height: 0.88,
            wall_height: 2.5,
        }
    }
}

impl CameraRig {
    pub fn width(&self) -> usize {
        3 * self.cam_width
    }

    pub fn horizon(&self) -> f64 {
        self.height as f64 / 2.0
    }

    /// Angle of a column's ray relative to the agent heading.
    pub fn column_angle(&self, col: usize) -> f64 {
        let k = col / self.cam_width;
        let lc = (col % self.cam_width) as f64;
        CAMERA_OFFSETS[k] - self.camera_theta(lc)
    }

    /// In-camera angle of a (possibly fractional) local column.
    fn camera_theta(&self, lc: f64) -> f64 {
        ((lc - (self.cam_width as f64 - 1.0) / 2.0) / self.focal).atan()
    }

    /// Fractional panorama column whose ray points along `rel` (radians
    /// relative to heading), or `None` behind the rig.
    pub fn column_of_angle(&self, rel: f64) -> Option<f64> {
        let half = (self.cam_width as f64 - 1.0) / 2.0;
        for (k, off) in CAMERA_OFFSETS.iter().enumerate() {
            let a = crate::world::wrap_delta(rel - off);
            if a.abs() >= std::f64::consts::FRAC_PI_2 {
                continue;
            }
            let lc = half - self.focal * a.tan();
            if (-0.5..self.cam_width as f64 - 0.5).contains(&lc) {
                return Some(k as f64 * self.cam_width as f64 + lc);
            }
        }
        None
    }

    /// Floor distance seen at `row`, or `None` at and above the horizon.
    pub fn floor_depth(&self, row: usize) -> Option<f64> {
        let dr = row as f64 - self.horizon();
        (dr > 0.0).then(|| self.cam_height * self.focal_v / dr)
    }
}

/// Semantic class of a rendered pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelClass {
    Floor,
    Ceiling,
    Wall,
    /// Index into `GridWorld::objects`.
    Object(usize),
}

impl PixelClass {
    pub(crate) fn code(self) -> u16 {
        match self {
            PixelClass::Floor => 0,
            PixelClass::Ceiling => 1,
            PixelClass::Wall => 2,
            PixelClass::Object(i) => 3 + i as u16,
        }
    }

    pub(crate) fn from_code(c: u16) -> Self {
        match c {
            0 => PixelClass::Floor,
            1 => PixelClass::Ceiling,
            2 => PixelClass::Wall,
            n => PixelClass::Object(n as usize - 3),
        }
    }
}

/// A rendered panorama with its depth and segmentation buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoramicObservation {
    pub rig: CameraRig,
    pub pose: Pose,
    pub max_depth: f64,
    pub color: RgbImage,
    /// Row-major meters.
    pub depth: Vec<f64>,
    seg: Vec<u16>,
    /// Distance to the first obstacle along each column ray.
    pub column_range: Vec<f64>,
}

impl PanoramicObservation {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }

    pub fn depth_at(&self, row: usize, col: usize) -> f64 {
        self.depth[row * self.width() + col]
    }

    pub fn class_at(&self, row: usize, col: usize) -> PixelClass {
        PixelClass::from_code(self.seg[row * self.width() + col])
    }

    pub fn depth_png16(&self) -> Vec<u8> {
        depth_to_png16(self.width(), self.height(), &self.depth)
    }
}
