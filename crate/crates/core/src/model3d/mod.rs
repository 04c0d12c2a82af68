//! Cuboid buildings around city blocks: the block walk that places one
//! cuboid per facade, texture preparation, scene assembly and glTF export.
//!
//! Block-local coordinates are meters on the ground plane, `x` east and `y`
//! north, with height up. Walking direction `cardinal` is 0 = +x, 1 = +y,
//! 2 = -x, 3 = -y; the block interior is on the walker's left.

mod export;
mod mesh;

pub use export::{export_gltf, GltfFiles};
pub use mesh::{build_cuboid_mesh, CuboidMesh, FaceMaterial, MeshGroup};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matting::AlphaMatte;
use crate::raster::{alpha_to_byte, GrayImage};
use crate::rectify::RectifiedFacade;

pub type FacadeId = String;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("chain from {start} does not return after {steps} steps")]
    OpenChain { start: FacadeId, steps: usize },
    #[error("unknown facade id {0}")]
    UnknownFacade(FacadeId),
    #[error("facade {id}: {what} must be > 0, got {value}")]
    NonPositiveDim {
        id: FacadeId,
        what: &'static str,
        value: f64,
    },
    #[error("facade {id}: cardinal {value} is not in 0..4")]
    InvalidCardinal { id: FacadeId, value: u8 },
    #[error("dimension mismatch: texture {texture:?}, matte {matte:?}")]
    DimMismatch {
        texture: (usize, usize),
        matte: (usize, usize),
    },
    #[error("cannot write {path}: {reason}")]
    WriteFailure { path: String, reason: String },
}

/// One facade's place in its block chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeRecord {
    pub id: FacadeId,
    /// World width along the street, meters.
    pub length: f64,
    pub height: f64,
    pub neighbor: FacadeId,
    pub same_building_as_neighbor: bool,
    /// Walking direction at the chain start.
    pub cardinal: u8,
}

impl FacadeRecord {
    pub fn from_rectified(
        id: impl Into<FacadeId>,
        facade: &RectifiedFacade,
        neighbor: impl Into<FacadeId>,
        same_building_as_neighbor: bool,
        cardinal: u8,
    ) -> Self {
        Self {
            id: id.into(),
            length: facade.world_width,
            height: facade.world_height,
            neighbor: neighbor.into(),
            same_building_as_neighbor,
            cardinal,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        for (what, value) in [("length", self.length), ("height", self.height)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPositiveDim {
                    id: self.id.clone(),
                    what,
                    value,
                });
            }
        }
        if self.cardinal > 3 {
            return Err(ModelError::InvalidCardinal {
                id: self.id.clone(),
                value: self.cardinal,
            });
        }
        Ok(())
    }
}

/// Vertical faces of a cuboid, by outward direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    South,
    East,
    North,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::South, Side::East, Side::North, Side::West];

    /// The street-facing side while walking in direction `cardinal`.
    pub fn street(cardinal: u8) -> Side {
        Self::ALL[(cardinal % 4) as usize]
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    /// South-west footprint corner, block-local meters.
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    /// Facade shown on each side, indexed by `Side`.
    pub faces: [Option<FacadeId>; 4],
    /// Facade repeated over sides without an assigned facade.
    pub tiling: FacadeId,
}

impl Cuboid {
    pub fn face(&self, side: Side) -> Option<&FacadeId> {
        self.faces[side.index()].as_ref()
    }

    /// Horizontal extent of `side`, meters.
    pub fn side_length(&self, side: Side) -> f64 {
        match side {
            Side::South | Side::North => self.width,
            Side::East | Side::West => self.depth,
        }
    }

    fn overlap_area(&self, o: &Cuboid) -> f64 {
        let w = (self.x + self.width).min(o.x + o.width) - self.x.max(o.x);
        let d = (self.y + self.depth).min(o.y + o.depth) - self.y.max(o.y);
        w.max(0.0) * d.max(0.0)
    }
}

/// Result of one walk around a block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWalk {
    pub cuboids: Vec<Cuboid>,
    /// Position after the last advance; zero for a closed chain.
    pub end: (f64, f64),
    /// Total number of cardinal increments.
    pub turns: usize,
}

impl BlockWalk {
    pub fn closure_gap(&self) -> f64 {
        self.end.0.hypot(self.end.1)
    }
}

/// Place one cuboid per facade of the chain that starts at `start`.
///
/// Each step reads the current facade, turns the corner when it shares a
/// building with its neighbour (taking the neighbour's length as the other
/// footprint dimension), emits a cuboid at the running position and
/// advances along the walking direction. The walk ends when the chain
/// returns to `start`; a start that is its own neighbour places nothing.
pub fn map_facades_within_block(
    start: &str,
    records: &[FacadeRecord],
) -> Result<BlockWalk, ModelError> {
    let by_id: HashMap<&str, &FacadeRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let get = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| ModelError::UnknownFacade(id.to_string()))
    };
    let first = get(start)?;
    first.validate()?;
    let mut walk = BlockWalk {
        cuboids: Vec::new(),
        end: (0.0, 0.0),
        turns: 0,
    };
    if first.neighbor == first.id {
        return Ok(walk);
    }

    let (mut x, mut y) = (0.0, 0.0);
    let mut cardinal = first.cardinal;
    let mut pointer = first;
    loop {
        if walk.cuboids.len() == records.len() {
            return Err(ModelError::OpenChain {
                start: start.to_string(),
                steps: walk.cuboids.len(),
            });
        }
        pointer.validate()?;
        let neighbor = get(&pointer.neighbor)?;
        let mut height = pointer.height;
        let mut alt = pointer.length;
        let mut faces: [Option<FacadeId>; 4] = Default::default();
        if pointer.same_building_as_neighbor {
            neighbor.validate()?;
            alt = neighbor.length;
            height = height.max(neighbor.height);
            cardinal = (cardinal + 1) % 4;
            walk.turns += 1;
            faces[Side::street(cardinal + 1).index()] = Some(neighbor.id.clone());
        }
        faces[Side::street(cardinal).index()] = Some(pointer.id.clone());
        let (width, depth, dx, dy) = match cardinal {
            0 => (pointer.length, alt, pointer.length, 0.0),
            1 => (alt, pointer.length, 0.0, pointer.length),
            2 => (pointer.length, alt, -pointer.length, 0.0),
            _ => (alt, pointer.length, 0.0, -pointer.length),
        };
        walk.cuboids.push(Cuboid {
            x,
            y,
            width,
            depth,
            height,
            faces,
            tiling: pointer.id.clone(),
        });
        x += dx;
        y += dy;
        pointer = neighbor;
        if pointer.id == first.id {
            break;
        }
    }
    walk.end = (x, y);
    Ok(walk)
}

/// Spread the closure gap of `walk` evenly over its advances, so that the
/// `i`-th cuboid moves by `-gap * i / n`.
pub fn close_chain(walk: &BlockWalk) -> Vec<Cuboid> {
    let n = walk.cuboids.len().max(1) as f64;
    walk.cuboids
        .iter()
        .enumerate()
        .map(|(i, c)| Cuboid {
            x: c.x - walk.end.0 * i as f64 / n,
            y: c.y - walk.end.1 * i as f64 / n,
            ..c.clone()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub id: String,
    /// Block origin in the city frame, meters.
    pub offset: (f64, f64),
    pub cuboids: Vec<Cuboid>,
}

impl BlockLayout {
    /// Pairs of cuboids whose footprints overlap by more than 1 cm².
    pub fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.cuboids.len() {
            for j in i + 1..self.cuboids.len() {
                if self.cuboids[i].overlap_area(&self.cuboids[j]) > 1e-4 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub block_id: String,
    pub closure_gap_m: f64,
    pub cuboid_count: usize,
    /// The gap exceeded 1 cm and was distributed over the chain.
    pub closed: bool,
}

/// A lone building for a facade that is its own neighbour: a square
/// footprint of the facade's length with the facade on its street side.
pub fn standalone_cuboid(r: &FacadeRecord) -> Result<Cuboid, ModelError> {
    r.validate()?;
    let mut faces: [Option<FacadeId>; 4] = Default::default();
    faces[Side::street(r.cardinal).index()] = Some(r.id.clone());
    Ok(Cuboid {
        x: 0.0,
        y: 0.0,
        width: r.length,
        depth: r.length,
        height: r.height,
        faces,
        tiling: r.id.clone(),
    })
}

/// Walk the block and close the chain when it misses the start by more
/// than 1 cm. A block whose start is its own neighbour gets one
/// `standalone_cuboid`.
pub fn layout_block(
    id: &str,
    offset: (f64, f64),
    start: &str,
    records: &[FacadeRecord],
) -> Result<(BlockLayout, BlockReport), ModelError> {
    let mut walk = map_facades_within_block(start, records)?;
    if let Some(r) = records.iter().find(|r| r.id == start && r.neighbor == start) {
        walk.cuboids.push(standalone_cuboid(r)?);
    }
    let gap = walk.closure_gap();
    let closed = gap > 0.01;
    let cuboids = if closed {
        log::warn!("block {id}: chain misses its start by {gap:.3} m, distributing the gap");
        close_chain(&walk)
    } else {
        walk.cuboids.clone()
    };
    let report = BlockReport {
        block_id: id.to_string(),
        closure_gap_m: gap,
        cuboid_count: cuboids.len(),
        closed,
    };
    Ok((
        BlockLayout {
            id: id.to_string(),
            offset,
            cuboids,
        },
        report,
    ))
}

/// Gray texture with the matte as alpha, as RGBA bytes.
pub fn apply_transparency(texture: &GrayImage, matte: &AlphaMatte) -> Result<Vec<u8>, ModelError> {
    if texture.dims() != matte.dims() {
        return Err(ModelError::DimMismatch {
            texture: texture.dims(),
            matte: matte.dims(),
        });
    }
    let mut rgba = Vec::with_capacity(texture.data().len() * 4);
    for (&g, &a) in texture.data().iter().zip(matte.alpha()) {
        rgba.extend_from_slice(&[g, g, g, alpha_to_byte(a)]);
    }
    Ok(rgba)
}

/// A facade texture ready for export.
#[derive(Clone, Debug, PartialEq)]
pub struct FacadeTexture {
    pub width: usize,
    pub height: usize,
    pub rgba: Vec<u8>,
    pub world_width: f64,
    pub world_height: f64,
    /// Mean intensity, used for the flat roof color.
    pub mean_gray: u8,
}

impl FacadeTexture {
    pub fn from_rectified(f: &RectifiedFacade) -> Result<Self, ModelError> {
        Ok(Self {
            width: f.texture.width(),
            height: f.texture.height(),
            rgba: apply_transparency(&f.texture, &f.matte)?,
            world_width: f.world_width,
            world_height: f.world_height,
            mean_gray: f.texture.mean().round() as u8,
        })
    }
}

/// A cuboid in the city frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedCuboid {
    pub block_id: String,
    pub cuboid: Cuboid,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CityScene {
    pub buildings: Vec<PlacedCuboid>,
    pub textures: BTreeMap<FacadeId, FacadeTexture>,
    /// Ground rectangle `(x0, y0, x1, y1)`, meters; absent for an empty city.
    pub ground: Option<(f64, f64, f64, f64)>,
    pub warnings: Vec<String>,
}

impl CityScene {
    /// Footprint bounds `(x0, y0, x1, y1)` of all buildings.
    pub fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        self.buildings.iter().fold(None, |acc, b| {
            let c = &b.cuboid;
            let r = (c.x, c.y, c.x + c.width, c.y + c.depth);
            Some(match acc {
                None => r,
                Some(a) => (a.0.min(r.0), a.1.min(r.1), a.2.max(r.2), a.3.max(r.3)),
            })
        })
    }
}

/// Translate every block by its offset into one scene with a ground plane
/// under all footprints. Overlapping footprints across blocks are reported
/// as warnings.
pub fn assemble_city(blocks: &[BlockLayout], textures: BTreeMap<FacadeId, FacadeTexture>) -> CityScene {
    let mut scene = CityScene {
        textures,
        ..Default::default()
    };
    for b in blocks {
        for c in &b.cuboids {
            scene.buildings.push(PlacedCuboid {
                block_id: b.id.clone(),
                cuboid: Cuboid {
                    x: c.x + b.offset.0,
                    y: c.y + b.offset.1,
                    ..c.clone()
                },
            });
        }
    }
    for (i, a) in scene.buildings.iter().enumerate() {
        for b in &scene.buildings[i + 1..] {
            if a.block_id != b.block_id && a.cuboid.overlap_area(&b.cuboid) > 1e-4 {
                scene.warnings.push(format!(
                    "blocks {} and {} overlap",
                    a.block_id, b.block_id
                ));
            }
        }
    }
    scene.warnings.dedup();
    scene.ground = scene.bounds();
    scene
}
