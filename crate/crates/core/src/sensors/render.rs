//! Column raycaster.

use super::{
    CameraRig, PanoramicObservation, PixelClass, RgbImage, SensorError, CEILING_RGB, FLOOR_RGB,
    WALL_RGB, WALL_SHADED_RGB,
};
use crate::world::{wrap_delta, GridWorld, Pose, Vec2};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Hit {
    pub dist: f64,
    /// `None` for walls and the grid boundary.
    pub object: Option<usize>,
    /// The ray entered through a face of constant `y`.
    pub y_face: bool,
}

/// March a ray through the grid (DDA), collecting the first entry into each
/// object and stopping at the first wall cell.
pub(crate) fn cast_ray(world: &GridWorld, origin: Vec2, angle: f64) -> Vec<Hit> {
    let res = world.resolution;
    let (ox, oy) = (origin.x / res, origin.y / res);
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut cx = ox.floor() as i32;
    let mut cy = oy.floor() as i32;
    let step_x = if dx > 0.0 { 1 } else { -1 };
    let step_y = if dy > 0.0 { 1 } else { -1 };
    let delta_x = if dx != 0.0 {
        1.0 / dx.abs()
    } else {
        f64::INFINITY
    };
    let delta_y = if dy != 0.0 {
        1.0 / dy.abs()
    } else {
        f64::INFINITY
    };
    let mut t_x = if dx > 0.0 {
        (cx as f64 + 1.0 - ox) / dx
    } else if dx < 0.0 {
        (ox - cx as f64) / -dx
    } else {
        f64::INFINITY
    };
    let mut t_y = if dy > 0.0 {
        (cy as f64 + 1.0 - oy) / dy
    } else if dy < 0.0 {
        (oy - cy as f64) / -dy
    } else {
        f64::INFINITY
    };
    let mut hits: Vec<Hit> = Vec::new();
    loop {
        let (t, y_face) = if t_x < t_y {
            cx += step_x;
            let t = t_x;
            t_x += delta_x;
            (t, false)
        } else {
            cy += step_y;
            let t = t_y;
            t_y += delta_y;
            (t, true)
        };
        let c = crate::world::CellIdx::new(cx, cy);
        if world.is_free(c) {
            continue;
        }
        let dist = t * res;
        match world.occupant(c) {
            Some(i) => {
                if !hits.iter().any(|h| h.object == Some(i)) {
                    hits.push(Hit {
                        dist,
                        object: Some(i),
                        y_face,
                    });
                }
            }
            None => {
                hits.push(Hit {
                    dist,
                    object: None,
                    y_face,
                });
                return hits;
            }
        }
    }
}

/// Render the panorama seen from `pose`.
pub fn render_panorama(
    world: &GridWorld,
    pose: Pose,
    max_depth: f64,
) -> Result<PanoramicObservation, SensorError> {
    render_with_rig(world, pose, max_depth, &CameraRig::default())
}

pub(crate) fn render_with_rig(
    world: &GridWorld,
    pose: Pose,
    max_depth: f64,
    rig: &CameraRig,
) -> Result<PanoramicObservation, SensorError> {
    if !world.is_free_point(pose.pos()) {
        return Err(SensorError::PoseInObstacle(pose));
    }
    let (w, h) = (rig.width(), rig.height);
    let horizon = rig.horizon();
    let mut color = RgbImage::new(w, h, FLOOR_RGB);
    let mut depth = vec![0.0; w * h];
    let mut seg = vec![0u16; w * h];
    let mut column_range = vec![0.0; w];
    #[allow(clippy::needless_range_loop)]
    for col in 0..w {
        let hits = cast_ray(world, pose.pos(), pose.heading + rig.column_angle(col));
        column_range[col] = hits[0].dist;
        let layers: Vec<(Hit, f64, [u8; 3], PixelClass)> = hits
            .iter()
            .map(|hit| match hit.object {
                Some(i) => {
                    let o = &world.objects[i];
                    (*hit, o.height, o.render_color, PixelClass::Object(i))
                }
                None => {
                    let rgb = if hit.y_face {
                        WALL_SHADED_RGB
                    } else {
                        WALL_RGB
                    };
                    (*hit, rig.wall_height, rgb, PixelClass::Wall)
                }
            })
            .collect();
        for row in 0..h {
            let dr = row as f64 - horizon;
            let (d, rgb, class) =
                if let Some(df) = rig.floor_depth(row).filter(|&df| df < hits[0].dist) {
                    (df, FLOOR_RGB, PixelClass::Floor)
                } else {
                    let covering = layers.iter().find(|(hit, height, _, _)| {
                        if dr > 0.0 {
                            rig.cam_height * rig.focal_v / dr >= hit.dist
                        } else {
                            -dr <= rig.focal_v * (height - rig.cam_height) / hit.dist
                        }
                    });
                    match covering {
                        Some((hit, _, rgb, class)) => (hit.dist, *rgb, *class),
                        None => (
                            (rig.wall_height - rig.cam_height) * rig.focal_v / -dr,
                            CEILING_RGB,
                            PixelClass::Ceiling,
                        ),
                    }
                };
            let k = row * w + col;
            depth[k] = d;
            seg[k] = class.code();
            color.put(col, row, rgb);
        }
    }
    Ok(PanoramicObservation {
        rig: rig.clone(),
        pose,
        max_depth,
        color,
        depth,
        seg,
        column_range,
    })
}

/// Inverse projection of a pixel to a world floor position along its column
/// ray, using the pixel's depth.
pub fn pixel_to_world(obs: &PanoramicObservation, pose: Pose, row: usize, col: usize) -> Vec2 {
    let angle = pose.heading + obs.rig.column_angle(col);
    pose.pos() + Vec2::from_angle(angle) * obs.depth_at(row, col)
}

/// Project a floor position into the panorama as `(row, col)`; `None` if it
/// falls behind the rig.
pub fn world_to_pixel(rig: &CameraRig, pose: Pose, p: Vec2) -> Option<(usize, usize)> {
    let d = p - pose.pos();
    let rel = wrap_delta(d.angle() - pose.heading);
    let col = rig
        .column_of_angle(rel)?
        .round()
        .clamp(0.0, rig.width() as f64 - 1.0) as usize;
    let dist = d.norm().max(1e-9);
    let row = (rig.horizon() + rig.cam_height * rig.focal_v / dist)
        .round()
        .clamp(rig.horizon() + 1.0, rig.height as f64 - 1.0) as usize;
    Some((row, col))
}
