//! glTF 2.0 writer: one `.gltf` document, one `.bin` buffer and a PNG per
//! facade texture.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::mesh::{build_cuboid_mesh, FaceMaterial};
use super::{CityScene, ModelError};
use crate::raster::encode_rgba_png;

const FLOAT: u32 = 5126;
const UNSIGNED_INT: u32 = 5125;
const ARRAY_BUFFER: u32 = 34962;
const ELEMENT_ARRAY_BUFFER: u32 = 34963;
const LINEAR: u32 = 9729;
const REPEAT: u32 = 10497;
const CLAMP_TO_EDGE: u32 = 33071;

const GROUND_GRAY: u8 = 90;
const GROUND_MARGIN_M: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GltfFiles {
    pub gltf: PathBuf,
    /// Absent when the scene has no geometry.
    pub bin: Option<PathBuf>,
    pub textures: Vec<PathBuf>,
}

#[derive(Default)]
struct Builder {
    bin: Vec<u8>,
    views: Vec<Value>,
    accessors: Vec<Value>,
}

impl Builder {
    fn view(&mut self, bytes: &[u8], target: u32) -> usize {
        while self.bin.len() % 4 != 0 {
            self.bin.push(0);
        }
        let offset = self.bin.len();
        self.bin.extend_from_slice(bytes);
        self.views.push(json!({
            "buffer": 0,
            "byteOffset": offset,
            "byteLength": bytes.len(),
            "target": target,
        }));
        self.views.len() - 1
    }

    fn floats<const N: usize>(&mut self, data: &[[f32; N]], with_bounds: bool) -> usize {
        let bytes: Vec<u8> = data.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
        let view = self.view(&bytes, ARRAY_BUFFER);
        let kind = match N {
            2 => "VEC2",
            3 => "VEC3",
            _ => unreachable!("only VEC2 and VEC3 attributes are written"),
        };
        let mut acc = json!({
            "bufferView": view,
            "componentType": FLOAT,
            "count": data.len(),
            "type": kind,
        });
        if with_bounds {
            let mut lo = [f32::INFINITY; N];
            let mut hi = [f32::NEG_INFINITY; N];
            for p in data {
                for k in 0..N {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            acc["min"] = json!(lo.to_vec());
            acc["max"] = json!(hi.to_vec());
        }
        self.accessors.push(acc);
        self.accessors.len() - 1
    }

    fn indices(&mut self, idx: &[u32]) -> usize {
        let bytes: Vec<u8> = idx.iter().flat_map(|v| v.to_le_bytes()).collect();
        let view = self.view(&bytes, ELEMENT_ARRAY_BUFFER);
        self.accessors.push(json!({
            "bufferView": view,
            "componentType": UNSIGNED_INT,
            "count": idx.len(),
            "type": "SCALAR",
        }));
        self.accessors.len() - 1
    }
}

fn file_stem(index: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:03}_{clean}")
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    fs::write(path, bytes).map_err(|e| ModelError::WriteFailure {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn gray_factor(g: u8) -> Value {
    let v = g as f64 / 255.0;
    json!([v, v, v, 1.0])
}

/// Write `scene` to `out_dir/scene.gltf`, `out_dir/scene.bin` and
/// `out_dir/textures/*.png`. Y is up and units are meters; facade materials
/// use alpha masking with cutoff 0.5.
pub fn export_gltf(scene: &CityScene, out_dir: impl AsRef<Path>) -> Result<GltfFiles, ModelError> {
    let out_dir = out_dir.as_ref();
    let tex_dir = out_dir.join("textures");
    fs::create_dir_all(&tex_dir).map_err(|e| ModelError::WriteFailure {
        path: tex_dir.display().to_string(),
        reason: e.to_string(),
    })?;

    let mut files = GltfFiles {
        gltf: out_dir.join("scene.gltf"),
        bin: None,
        textures: Vec::new(),
    };
    let mut images = Vec::new();
    let mut textures = Vec::new();
    let mut materials = Vec::new();
    let mut material_index: BTreeMap<FaceMaterial, usize> = BTreeMap::new();

    for (i, (id, t)) in scene.textures.iter().enumerate() {
        let png = encode_rgba_png(t.width, t.height, &t.rgba).map_err(|e| ModelError::WriteFailure {
            path: id.clone(),
            reason: e.to_string(),
        })?;
        let name = format!("{}.png", file_stem(i, id));
        let path = tex_dir.join(&name);
        write(&path, &png)?;
        files.textures.push(path);
        images.push(json!({ "uri": format!("textures/{name}"), "name": id }));
        textures.push(json!({ "source": i, "sampler": 0 }));
        material_index.insert(FaceMaterial::Facade(id.clone()), materials.len());
        materials.push(json!({
            "name": id,
            "pbrMetallicRoughness": {
                "baseColorTexture": { "index": i },
                "metallicFactor": 0.0,
                "roughnessFactor": 1.0,
            },
            "alphaMode": "MASK",
            "alphaCutoff": 0.5,
            "doubleSided": true,
        }));
    }
    let mut material = |m: &FaceMaterial, materials: &mut Vec<Value>| -> usize {
        if let Some(&i) = material_index.get(m) {
            return i;
        }
        let FaceMaterial::Flat(g) = m else {
            unreachable!("facade materials are registered with their textures");
        };
        materials.push(json!({
            "name": format!("gray-{g}"),
            "pbrMetallicRoughness": {
                "baseColorFactor": gray_factor(*g),
                "metallicFactor": 0.0,
                "roughnessFactor": 1.0,
            },
        }));
        material_index.insert(m.clone(), materials.len() - 1);
        materials.len() - 1
    };

    let mut b = Builder::default();
    let mut meshes = Vec::new();
    let mut nodes = Vec::new();
    for (k, placed) in scene.buildings.iter().enumerate() {
        let mesh = build_cuboid_mesh(&placed.cuboid, &scene.textures);
        let pos = b.floats(&mesh.positions, true);
        let nrm = b.floats(&mesh.normals, false);
        let uv = b.floats(&mesh.uvs, false);
        let primitives: Vec<Value> = mesh
            .groups
            .iter()
            .map(|g| {
                let m = material(&g.material, &mut materials);
                json!({
                    "attributes": { "POSITION": pos, "NORMAL": nrm, "TEXCOORD_0": uv },
                    "indices": b.indices(&g.indices),
                    "material": m,
                })
            })
            .collect();
        meshes.push(json!({ "name": format!("building-{k}"), "primitives": primitives }));
        nodes.push(json!({
            "name": format!("{}/{}", placed.block_id, placed.cuboid.tiling),
            "mesh": meshes.len() - 1,
        }));
    }
    if let Some((x0, y0, x1, y1)) = scene.ground {
        let m = GROUND_MARGIN_M;
        let (x0, y0, x1, y1) = ((x0 - m) as f32, (y0 - m) as f32, (x1 + m) as f32, (y1 + m) as f32);
        let z = -0.01f32;
        // Block-local (x, y) maps to glTF (x, -y).
        let positions = [[x0, z, -y0], [x1, z, -y0], [x1, z, -y1], [x0, z, -y1]];
        let pos = b.floats(&positions, true);
        let nrm = b.floats(&[[0.0f32, 1.0, 0.0]; 4], false);
        let idx = b.indices(&[0, 1, 2, 0, 2, 3]);
        let mat = material(&FaceMaterial::Flat(GROUND_GRAY), &mut materials);
        meshes.push(json!({
            "name": "ground",
            "primitives": [{ "attributes": { "POSITION": pos, "NORMAL": nrm }, "indices": idx, "material": mat }],
        }));
        nodes.push(json!({ "name": "ground", "mesh": meshes.len() - 1 }));
    }

    let mut doc = json!({
        "asset": { "version": "2.0", "generator": "facade-core" },
        "scene": 0,
        "scenes": [{ "name": "city", "nodes": (0..nodes.len()).collect::<Vec<_>>() }],
        "nodes": nodes,
    });
    if !meshes.is_empty() {
        let bin_path = out_dir.join("scene.bin");
        write(&bin_path, &b.bin)?;
        doc["meshes"] = json!(meshes);
        doc["accessors"] = json!(b.accessors);
        doc["bufferViews"] = json!(b.views);
        doc["buffers"] = json!([{ "uri": "scene.bin", "byteLength": b.bin.len() }]);
        files.bin = Some(bin_path);
    }
    if !materials.is_empty() {
        doc["materials"] = json!(materials);
    }
    if !images.is_empty() {
        doc["images"] = json!(images);
        doc["textures"] = json!(textures);
        doc["samplers"] = json!([{
            "magFilter": LINEAR,
            "minFilter": LINEAR,
            "wrapS": REPEAT,
            "wrapT": CLAMP_TO_EDGE,
        }]);
    }
    let text = serde_json::to_vec_pretty(&doc).expect("glTF document serializes");
    write(&files.gltf, &text)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model3d::{assemble_city, BlockLayout, Cuboid, FacadeTexture};

    fn one_cube_scene() -> CityScene {
        let c = Cuboid {
            x: 0.0,
            y: 0.0,
            width: 4.0,
            depth: 3.0,
            height: 6.0,
            faces: [Some("f".into()), None, None, None],
            tiling: "f".into(),
        };
        let tex = FacadeTexture {
            width: 2,
            height: 3,
            rgba: vec![100; 24],
            world_width: 4.0,
            world_height: 6.0,
            mean_gray: 100,
        };
        assemble_city(
            &[BlockLayout { id: "b".into(), offset: (0.0, 0.0), cuboids: vec![c] }],
            BTreeMap::from([("f".to_string(), tex)]),
        )
    }

    #[test]
    fn empty_scene_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let files = export_gltf(&CityScene::default(), dir.path()).unwrap();
        assert!(files.bin.is_none());
        let doc = ::gltf::Gltf::open(&files.gltf).unwrap();
        assert_eq!(doc.meshes().count(), 0);
    }

    #[test]
    fn single_cube_counts() {
        let dir = tempfile::tempdir().unwrap();
        let files = export_gltf(&one_cube_scene(), dir.path()).unwrap();
        let (doc, buffers, images) = ::gltf::import(&files.gltf).unwrap();
        assert_eq!(images.len(), 1);
        let mesh = doc.meshes().find(|m| m.name() == Some("building-0")).unwrap();
        let mut vertices = None;
        let mut indices = 0;
        for p in mesh.primitives() {
            let r = p.reader(|b| Some(&buffers[b.index()]));
            vertices = Some(r.read_positions().unwrap().count());
            indices += r.read_indices().unwrap().into_u32().count();
        }
        assert_eq!(vertices, Some(24));
        assert_eq!(indices, 36);
    }

    #[test]
    fn stems_are_unique_and_safe() {
        assert_eq!(file_stem(3, "a/b c"), "003_a_b_c");
    }
}
