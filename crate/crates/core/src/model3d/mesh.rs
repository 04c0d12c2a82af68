//! Cuboid meshes in glTF axes: `X` = east, `Y` = up, `Z` = south.

use std::collections::BTreeMap;

use super::{Cuboid, FacadeId, FacadeTexture, Side};

/// What a group of triangles is drawn with.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceMaterial {
    Facade(FacadeId),
    /// Untextured gray level.
    Flat(u8),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshGroup {
    pub material: FaceMaterial,
    pub indices: Vec<u32>,
}

/// 24 vertices (4 per face, unshared so normals stay flat) and 12
/// triangles split into groups by material.
#[derive(Clone, Debug, PartialEq)]
pub struct CuboidMesh {
    pub positions: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub uvs: Vec<[f32; 2]>,
    pub groups: Vec<MeshGroup>,
}

impl CuboidMesh {
    pub fn index_count(&self) -> usize {
        self.groups.iter().map(|g| g.indices.len()).sum()
    }
}

const NO_TEXTURE_GRAY: u8 = 128;

/// Block-local `(x, y, up)` to glTF `(X, Y, Z)`.
fn to_gltf(p: [f64; 3]) -> [f32; 3] {
    [p[0] as f32, p[2] as f32, -p[1] as f32]
}

/// Mesh for `c`. Facades assigned to a side are mapped 1:1 in world units
/// (u spans the side length over the facade's world width, v runs from the
/// top of the facade at 0 to the ground at 1). Unassigned sides repeat the
/// tiling facade the same way. Top and bottom are flat gray at the tiling
/// facade's mean intensity.
pub fn build_cuboid_mesh(c: &Cuboid, textures: &BTreeMap<FacadeId, FacadeTexture>) -> CuboidMesh {
    let (x0, y0, x1, y1, h) = (c.x, c.y, c.x + c.width, c.y + c.depth, c.height);
    let roof = textures
        .get(&c.tiling)
        .map_or(NO_TEXTURE_GRAY, |t| t.mean_gray);
    let mut mesh = CuboidMesh {
        positions: Vec::with_capacity(24),
        normals: Vec::with_capacity(24),
        uvs: Vec::with_capacity(24),
        groups: Vec::new(),
    };
    let mut push_quad = |corners: [[f64; 3]; 4], normal: [f64; 3], uvs: [[f64; 2]; 4], mat: FaceMaterial| {
        let base = mesh.positions.len() as u32;
        for (p, uv) in corners.iter().zip(uvs) {
            mesh.positions.push(to_gltf(*p));
            mesh.normals.push(to_gltf(normal));
            mesh.uvs.push([uv[0] as f32, uv[1] as f32]);
        }
        let quad = [base, base + 1, base + 2, base, base + 2, base + 3];
        match mesh.groups.iter_mut().find(|g| g.material == mat) {
            Some(g) => g.indices.extend_from_slice(&quad),
            None => mesh.groups.push(MeshGroup {
                material: mat,
                indices: quad.to_vec(),
            }),
        }
    };

    for side in Side::ALL {
        // Bottom-left and bottom-right as seen from outside.
        let (bl, br, normal) = match side {
            Side::South => ((x0, y0), (x1, y0), [0.0, -1.0, 0.0]),
            Side::East => ((x1, y0), (x1, y1), [1.0, 0.0, 0.0]),
            Side::North => ((x1, y1), (x0, y1), [0.0, 1.0, 0.0]),
            Side::West => ((x0, y1), (x0, y0), [-1.0, 0.0, 0.0]),
        };
        let id = c.face(side).unwrap_or(&c.tiling);
        let (mat, u, v_top) = match textures.get(id) {
            Some(t) => (
                FaceMaterial::Facade(id.clone()),
                c.side_length(side) / t.world_width,
                1.0 - h / t.world_height,
            ),
            None => (FaceMaterial::Flat(NO_TEXTURE_GRAY), 0.0, 0.0),
        };
        let v_bottom = if matches!(mat, FaceMaterial::Flat(_)) { 0.0 } else { 1.0 };
        push_quad(
            [
                [bl.0, bl.1, 0.0],
                [br.0, br.1, 0.0],
                [br.0, br.1, h],
                [bl.0, bl.1, h],
            ],
            normal,
            [[0.0, v_bottom], [u, v_bottom], [u, v_top], [0.0, v_top]],
            mat,
        );
    }
    let flat = [[0.0; 2]; 4];
    push_quad(
        [[x0, y0, h], [x1, y0, h], [x1, y1, h], [x0, y1, h]],
        [0.0, 0.0, 1.0],
        flat,
        FaceMaterial::Flat(roof),
    );
    push_quad(
        [[x0, y1, 0.0], [x1, y1, 0.0], [x1, y0, 0.0], [x0, y0, 0.0]],
        [0.0, 0.0, -1.0],
        flat,
        FaceMaterial::Flat(roof),
    );
    mesh
}
