//! Versioned JSON document for worlds. The occupancy grid is run-length
//! encoded as `[value, run]` pairs in row-major order (0 free, 1 obstacle).

use serde::{Deserialize, Serialize};

use super::{Cell, GridWorld, Room, SceneObject, WorldConfig, WorldError};

pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WorldDoc {
    version: u32,
    width: usize,
    height: usize,
    resolution: f64,
    seed: u64,
    config: WorldConfig,
    rooms: Vec<Room>,
    objects: Vec<SceneObject>,
    grid_rle: Vec<[u32; 2]>,
}

fn encode(cells: &[Cell]) -> Vec<[u32; 2]> {
    let mut out: Vec<[u32; 2]> = Vec::new();
    for &c in cells {
        let v = u32::from(c == Cell::Obstacle);
        match out.last_mut() {
            Some(last) if last[0] == v => last[1] += 1,
            _ => out.push([v, 1]),
        }
    }
    out
}

fn decode(rle: &[[u32; 2]], n: usize) -> Result<Vec<Cell>, WorldError> {
    let mut cells = Vec::with_capacity(n);
    for &[v, run] in rle {
        let c = match v {
            0 => Cell::Free,
            1 => Cell::Obstacle,
            other => return Err(WorldError::Format(format!("bad cell value {other}"))),
        };
        if cells.len() + run as usize > n {
            return Err(WorldError::Format("grid runs exceed width * height".into()));
        }
        cells.extend(std::iter::repeat_n(c, run as usize));
    }
    if cells.len() != n {
        return Err(WorldError::Format(format!(
            "grid has {} cells, expected {n}",
            cells.len()
        )));
    }
    Ok(cells)
}

impl GridWorld {
    pub fn to_json(&self) -> String {
        let doc = WorldDoc {
            version: WORLD_FORMAT_VERSION,
            width: self.width,
            height: self.height,
            resolution: self.resolution,
            seed: self.seed,
            config: self.config.clone(),
            rooms: self.rooms.clone(),
            objects: self.objects.clone(),
            grid_rle: encode(&self.cells),
        };
        serde_json::to_string_pretty(&doc).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<GridWorld, WorldError> {
        let doc: WorldDoc =
            serde_json::from_str(text).map_err(|e| WorldError::Format(e.to_string()))?;
        if doc.version != WORLD_FORMAT_VERSION {
            return Err(WorldError::Format(format!(
                "unsupported world version {} (expected {WORLD_FORMAT_VERSION})",
                doc.version
            )));
        }
        let cells = decode(&doc.grid_rle, doc.width * doc.height)?;
        Ok(GridWorld::from_parts(
            doc.width,
            doc.height,
            doc.resolution,
            cells,
            doc.rooms,
            doc.objects,
            doc.seed,
            doc.config,
        ))
    }
}
