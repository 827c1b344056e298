//! Ray-traced ground truth: visibility bitmasks over a direction set, occupancy
//! labels, surface normals and albedo targets, and the `.vfld` dataset format.
//!
//! `.vfld` layout (little-endian):
//!
//! ```text
//! "VFLD" | version u32 = 1 | n u32 | sample_count u32 | seed u64 | mesh sha256 [32]
//! per sample: position 3×f32 | kind u8 | occupancy u8 | normal 3×f32 | albedo 3×f32 (−1 = none)
//!             | visibility ceil(n/8) bytes, bit i = direction i, LSB first
//! ```

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirsphere::DirectionSet;
use crate::geom::{
    sample_surface, sample_training_points, Bvh, PointKind, Ray, SamplingParams, TriangleMesh, Vec3,
};
use crate::{Error, Result};

/// Lower ray bound for every visibility ray, in normalized mesh units.
pub const VISIBILITY_T_MIN: f64 = 1e-4;
/// Surface samples are pushed this far along their outward normal before tracing.
pub const SURFACE_OFFSET: f64 = 1e-4;
/// Albedo value marking "no albedo supervision".
pub const ALBEDO_SENTINEL: f64 = -1.0;

const MAGIC: [u8; 4] = *b"VFLD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 32;

/// Visibility over `n` directions packed LSB-first; a set bit means the direction escapes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VisibilityMask {
    n: usize,
    bytes: Vec<u8>,
}

impl VisibilityMask {
    pub fn zeros(n: usize) -> Self {
        VisibilityMask {
            n,
            bytes: vec![0; n.div_ceil(8)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut m = VisibilityMask::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            m.set(i, b);
        }
        m
    }

    pub fn from_bytes(n: usize, bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::InvalidInput(format!(
                "mask for {n} directions needs {} bytes, got {}",
                n.div_ceil(8),
                bytes.len()
            )));
        }
        Ok(VisibilityMask { n, bytes })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bytes[i / 8] >> (i % 8) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        if value {
            self.bytes[i / 8] |= 1 << (i % 8);
        } else {
            self.bytes[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn count_visible(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_all_zero(&self) -> bool {
        self.bytes.iter().all(|&b| b == 0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Bits as `0.0` / `1.0`.
    pub fn to_values(&self) -> Vec<f64> {
        (0..self.n).map(|i| if self.get(i) { 1.0 } else { 0.0 }).collect()
    }
}

/// Bit `i` is set iff the ray from `p` along direction `i` over `(1e-4, ∞)` hits nothing.
pub fn trace_visibility(bvh: &Bvh, p: Vec3, dirs: &DirectionSet) -> VisibilityMask {
    let mut mask = VisibilityMask::zeros(dirs.len());
    for (i, &d) in dirs.directions().iter().enumerate() {
        let ray = Ray::new(p, d).with_range(VISIBILITY_T_MIN, f64::INFINITY);
        if !bvh.any_hit(&ray) {
            mask.set(i, true);
        }
    }
    mask
}

/// Barycentric vertex color at the surface point closest to `p`.
pub fn albedo_gt(mesh: &TriangleMesh, bvh: &Bvh, p: Vec3) -> Result<[f64; 3]> {
    if mesh.vertex_albedo.is_none() {
        return Err(Error::MissingAttribute("vertex albedo"));
    }
    let cp = bvh.closest_point(p);
    Ok(mesh
        .interpolate_albedo(cp.face, cp.barycentric)
        .expect("albedo presence checked above"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BakedSample {
    pub position: Vec3,
    pub kind: PointKind,
    pub occupancy: bool,
    pub visibility: VisibilityMask,
    /// Unit outward normal for surface samples, zero otherwise.
    pub normal: Vec3,
    /// `None` when the sample is excluded from albedo supervision.
    pub albedo: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BakedDataset {
    pub n: usize,
    pub seed: u64,
    pub mesh_hash: [u8; 32],
    pub samples: Vec<BakedSample>,
}

impl BakedDataset {
    pub fn direction_set(&self) -> Result<DirectionSet> {
        DirectionSet::fibonacci(self.n)
    }

    pub fn count(&self, kind: PointKind) -> usize {
        self.samples.iter().filter(|s| s.kind == kind).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BakeConfig {
    pub sampling: SamplingParams,
    /// Pure surface samples carrying normals for the transfer loss.
    pub surface_count: usize,
}

impl Default for BakeConfig {
    fn default() -> Self {
        BakeConfig {
            sampling: SamplingParams::default(),
            surface_count: 1000,
        }
    }
}

fn round_rgb(c: [f64; 3]) -> [f64; 3] {
    c.map(|v| v as f32 as f64)
}

/// Bake near-surface, uniform and surface samples of a watertight, normalized mesh.
///
/// Positions are rounded to `f32` before labelling so the stored file is self-consistent.
/// Interior samples get an all-zero mask. Albedo is attached to samples within
/// `sigma · max_edge` of the surface when the mesh carries vertex colors.
pub fn bake_dataset(mesh: &TriangleMesh, dirs: &DirectionSet, config: &BakeConfig, seed: u64) -> Result<BakedDataset> {
    mesh.check_watertight()?;
    let bvh = Bvh::build(mesh)?;
    let mut points: Vec<(Vec3, PointKind, Vec3)> = sample_training_points(mesh, &config.sampling, seed)?
        .into_iter()
        .map(|p| (p.position, p.kind, Vec3::ZERO))
        .collect();
    if config.surface_count > 0 {
        for s in sample_surface(mesh, config.surface_count, seed ^ 0x5u64.rotate_left(40))? {
            points.push((s.point + s.normal * SURFACE_OFFSET, PointKind::Surface, s.normal));
        }
    }
    let albedo_band = config.sampling.sigma * mesh.bounds().max_edge();
    let has_albedo = mesh.vertex_albedo.is_some();
    let samples = points
        .par_iter()
        .map(|&(p, kind, normal)| {
            let position = p.to_f32_precision();
            let occupancy = bvh.point_inside(position);
            let visibility = if occupancy {
                VisibilityMask::zeros(dirs.len())
            } else {
                trace_visibility(&bvh, position, dirs)
            };
            let albedo = if has_albedo {
                let cp = bvh.closest_point(position);
                (cp.distance < albedo_band)
                    .then(|| mesh.interpolate_albedo(cp.face, cp.barycentric).map(round_rgb))
                    .flatten()
            } else {
                None
            };
            BakedSample {
                position,
                kind,
                occupancy,
                visibility,
                normal: normal.to_f32_precision(),
                albedo,
            }
        })
        .collect();
    Ok(BakedDataset {
        n: dirs.len(),
        seed,
        mesh_hash: mesh.content_hash(),
        samples,
    })
}

fn kind_code(kind: PointKind) -> u8 {
    match kind {
        PointKind::Surface => 0,
        PointKind::Near => 1,
        PointKind::Uniform => 2,
    }
}

pub fn encode_baked(ds: &BakedDataset) -> Vec<u8> {
    let mask_len = ds.n.div_ceil(8);
    let mut out = Vec::with_capacity(HEADER_LEN + ds.samples.len() * (38 + mask_len));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.n as u32).to_le_bytes());
    out.extend_from_slice(&(ds.samples.len() as u32).to_le_bytes());
    out.extend_from_slice(&ds.seed.to_le_bytes());
    out.extend_from_slice(&ds.mesh_hash);
    let put3 = |out: &mut Vec<u8>, v: [f64; 3]| {
        for c in v {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    };
    for s in &ds.samples {
        put3(&mut out, s.position.to_array());
        out.push(kind_code(s.kind));
        out.push(s.occupancy as u8);
        put3(&mut out, s.normal.to_array());
        put3(&mut out, s.albedo.unwrap_or([ALBEDO_SENTINEL; 3]));
        out.extend_from_slice(s.visibility.as_bytes());
    }
    out
}

pub(crate) struct Reader<'a> {
    pub data: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32x3(&mut self) -> Result<[f64; 3]> {
        let b = self.take(12)?;
        Ok([0, 4, 8].map(|o| f32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as f64))
    }
}

pub fn decode_baked(bytes: &[u8]) -> Result<BakedDataset> {
    let mut r = Reader { data: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            expected: VERSION,
            found: version,
        });
    }
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(Error::parse_byte(8, "direction count is zero"));
    }
    let count = r.u32()? as usize;
    let seed = r.u64()?;
    let mesh_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let mask_len = n.div_ceil(8);
    let mut samples = Vec::with_capacity(count.min(bytes.len() / (38 + mask_len) + 1));
    for _ in 0..count {
        let position = Vec3::from_array(r.f32x3()?);
        let at = r.pos;
        let kind = match r.u8()? {
            0 => PointKind::Surface,
            1 => PointKind::Near,
            2 => PointKind::Uniform,
            k => return Err(Error::parse_byte(at, format!("unknown sample kind {k}"))),
        };
        let at = r.pos;
        let occupancy = match r.u8()? {
            0 => false,
            1 => true,
            o => return Err(Error::parse_byte(at, format!("occupancy byte {o} is not 0/1"))),
        };
        let normal = Vec3::from_array(r.f32x3()?);
        let albedo = r.f32x3()?;
        let albedo = if albedo.iter().all(|&c| c == ALBEDO_SENTINEL) {
            None
        } else {
            Some(albedo)
        };
        let visibility = VisibilityMask::from_bytes(n, r.take(mask_len)?.to_vec())?;
        samples.push(BakedSample {
            position,
            kind,
            occupancy,
            visibility,
            normal,
            albedo,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::parse_byte(r.pos, "trailing bytes after the last sample"));
    }
    Ok(BakedDataset {
        n,
        seed,
        mesh_hash,
        samples,
    })
}

pub fn save_baked(ds: &BakedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_baked(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_baked(path: impl AsRef<Path>) -> Result<BakedDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_baked(&bytes)
}
