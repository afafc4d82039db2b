//! Sparse TSDF volume of hashed 8×8×8 voxel blocks with per-block point
//! statistics driving an adaptive truncation distance.
//!
//! Integration of one scan runs in two passes. First every point is merged
//! into the statistics of the block containing it. Then each point updates the
//! voxels within the local truncation distance ε of the point ([`Footprint`]),
//! with the signed distance measured along the measurement ray (positive
//! between sensor and point) and clamped to `[-ε, ε]`. ε and the
//! measurement weight come from the PCA plane of the point's block; blocks with
//! degenerate statistics use `eps_max` and weight 1.
//!
//! The carving pass is parallel over blocks: `(point, block)` pairs are binned
//! by block and each block is updated by exactly one worker. Mesh extraction
//! borrows the volume immutably, so it can never overlap a write pass.

mod format;
mod stats;

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use format::{read_volume, write_volume, VOLUME_FORMAT_VERSION, VOLUME_MAGIC};
pub use stats::{
    adaptive_truncation, estimate_plane, measurement_weight, merge_statistics, BlockStatistics, PlaneEstimate,
    TruncationConfig, DEFAULT_FLATNESS_WEIGHT, DEFAULT_MIN_WEIGHT, DEFAULT_PLANE_TOLERANCE,
};

use crate::error::VolumeError;
use crate::geometry::{Aabb, Vec3};
use crate::scalar::Real;

/// Voxels per block edge.
pub const BLOCK_SIDE: usize = 8;
/// Voxels per block.
pub const BLOCK_VOXELS: usize = BLOCK_SIDE * BLOCK_SIDE * BLOCK_SIDE;
/// Default cap on the number of allocated blocks (2²⁴).
pub const DEFAULT_MAX_BLOCKS: usize = 1 << 24;

/// Integer coordinate of a voxel block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BlockCoord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl BlockCoord {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    /// Block containing the global voxel index `v`.
    #[inline]
    pub fn of_voxel(v: [i64; 3]) -> Self {
        let s = BLOCK_SIDE as i64;
        Self::new(v[0].div_euclid(s) as i32, v[1].div_euclid(s) as i32, v[2].div_euclid(s) as i32)
    }

    /// Global index of this block's first voxel.
    #[inline]
    pub fn origin_voxel(&self) -> [i64; 3] {
        let s = BLOCK_SIDE as i64;
        [self.x as i64 * s, self.y as i64 * s, self.z as i64 * s]
    }
}

/// Spatial hash over block coordinates: the classic large-prime XOR hash,
/// finished with a 64-bit avalanche so the high bits are usable as well.
#[derive(Default, Clone, Copy)]
pub struct BlockHasher {
    state: u64,
    lane: usize,
}

const HASH_PRIMES: [u64; 3] = [73_856_093, 19_349_669, 83_492_791];

impl Hasher for BlockHasher {
    #[inline]
    fn finish(&self) -> u64 {
        let mut h = self.state;
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
        h ^ (h >> 33)
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u32(b as u32);
        }
    }

    #[inline]
    fn write_u32(&mut self, v: u32) {
        self.state ^= (v as u64).wrapping_mul(HASH_PRIMES[self.lane % 3]).rotate_left(self.lane as u32 * 21);
        self.lane += 1;
    }

    #[inline]
    fn write_i32(&mut self, v: i32) {
        self.write_u32(v as u32);
    }
}

type BlockMap = HashMap<BlockCoord, u32, BuildHasherDefault<BlockHasher>>;

/// One TSDF sample. `weight == 0` means unobserved.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Voxel<T> {
    pub tsdf: T,
    pub weight: T,
}

impl<T: Real> Voxel<T> {
    #[inline]
    pub fn is_observed(&self) -> bool {
        self.weight > T::zero()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelBlock<T> {
    pub coord: BlockCoord,
    pub voxels: Box<[Voxel<T>]>,
    pub stats: BlockStatistics<T>,
}

impl<T: Real> VoxelBlock<T> {
    pub fn new(coord: BlockCoord) -> Self {
        Self {
            coord,
            voxels: vec![Voxel { tsdf: T::zero(), weight: T::zero() }; BLOCK_VOXELS].into_boxed_slice(),
            stats: BlockStatistics::empty(),
        }
    }

    /// Local index `(x, y, z)` in `0..8` → linear index, x fastest.
    #[inline]
    pub fn index(x: usize, y: usize, z: usize) -> usize {
        (z * BLOCK_SIDE + y) * BLOCK_SIDE + x
    }

    #[inline]
    pub fn voxel(&self, x: usize, y: usize, z: usize) -> &Voxel<T> {
        &self.voxels[Self::index(x, y, z)]
    }
}

/// Set of voxels a single measurement updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Footprint {
    /// Voxels within ε of the point along the ray and within half a voxel
    /// diagonal of the ray line: the voxels the ray itself passes through.
    #[default]
    Ray,
    /// Every voxel whose center lies within ε of the point.
    Ball,
}

/// Parameters of scan integration beyond the truncation bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationConfig<T> {
    pub footprint: Footprint,
    /// Floor of the incidence-cosine measurement weight.
    pub min_weight: T,
    /// λ2 threshold under which block statistics are degenerate.
    pub plane_tolerance: T,
    /// Maximum number of allocated blocks.
    pub max_blocks: usize,
}

impl<T: Real> Default for IntegrationConfig<T> {
    fn default() -> Self {
        Self {
            footprint: Footprint::Ray,
            min_weight: T::lit(DEFAULT_MIN_WEIGHT),
            plane_tolerance: T::lit(DEFAULT_PLANE_TOLERANCE),
            max_blocks: DEFAULT_MAX_BLOCKS,
        }
    }
}

/// Summary of one `integrate_scan` call.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScanReport {
    pub points: usize,
    pub blocks_touched: usize,
    pub blocks_allocated: usize,
    pub degenerate_blocks: usize,
    pub voxel_updates: u64,
    pub mean_truncation: f64,
}

/// Per-point carving parameters.
#[derive(Clone, Copy)]
struct Measurement<T> {
    point: Vec3<T>,
    dir: Vec3<T>,
    eps: T,
    weight: T,
}

#[derive(Clone, Debug)]
pub struct TsdfVolume<T> {
    voxel_size: T,
    truncation: TruncationConfig<T>,
    config: IntegrationConfig<T>,
    blocks: Vec<VoxelBlock<T>>,
    index: BlockMap,
}

impl<T: Real> TsdfVolume<T> {
    pub fn new(voxel_size: T, truncation: TruncationConfig<T>) -> Result<Self, VolumeError> {
        Self::with_config(voxel_size, truncation, IntegrationConfig::default())
    }

    pub fn with_config(
        voxel_size: T,
        truncation: TruncationConfig<T>,
        config: IntegrationConfig<T>,
    ) -> Result<Self, VolumeError> {
        if !(voxel_size > T::zero()) || !voxel_size.is_finite() {
            return Err(VolumeError::InvalidConfig(format!("voxel size must be positive, got {voxel_size}")));
        }
        truncation.validate()?;
        if !(config.min_weight > T::zero() && config.min_weight <= T::one()) {
            return Err(VolumeError::InvalidConfig(format!("min weight must be in (0, 1], got {}", config.min_weight)));
        }
        Ok(Self { voxel_size, truncation, config, blocks: Vec::new(), index: BlockMap::default() })
    }

    #[inline]
    pub fn voxel_size(&self) -> T {
        self.voxel_size
    }

    #[inline]
    pub fn truncation(&self) -> &TruncationConfig<T> {
        &self.truncation
    }

    #[inline]
    pub fn config(&self) -> &IntegrationConfig<T> {
        &self.config
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Blocks in allocation order.
    pub fn blocks(&self) -> &[VoxelBlock<T>] {
        &self.blocks
    }

    pub fn block(&self, coord: BlockCoord) -> Option<&VoxelBlock<T>> {
        self.index.get(&coord).map(|&i| &self.blocks[i as usize])
    }

    /// Block coordinates in ascending `(x, y, z)` order.
    pub fn sorted_coords(&self) -> Vec<BlockCoord> {
        let mut c: Vec<_> = self.blocks.iter().map(|b| b.coord).collect();
        c.sort_unstable();
        c
    }

    /// Global voxel index containing `p`.
    #[inline]
    pub fn voxel_of(&self, p: Vec3<T>) -> [i64; 3] {
        let f = |c: T| (c / self.voxel_size).floor().to_i64().unwrap_or(i64::MAX);
        [f(p.x), f(p.y), f(p.z)]
    }

    /// World position of the center of global voxel `v`.
    #[inline]
    pub fn voxel_center(&self, v: [i64; 3]) -> Vec3<T> {
        let h = T::lit(0.5);
        let c = |i: i64| (T::from_i64(i).unwrap() + h) * self.voxel_size;
        Vec3::new(c(v[0]), c(v[1]), c(v[2]))
    }

    /// Voxel at global index `v`, if its block is allocated.
    pub fn voxel(&self, v: [i64; 3]) -> Option<&Voxel<T>> {
        let b = self.block(BlockCoord::of_voxel(v))?;
        let o = b.coord.origin_voxel();
        Some(b.voxel((v[0] - o[0]) as usize, (v[1] - o[1]) as usize, (v[2] - o[2]) as usize))
    }

    /// Number of voxels with non-zero weight.
    pub fn observed_voxels(&self) -> usize {
        self.blocks.iter().map(|b| b.voxels.iter().filter(|v| v.is_observed()).count()).sum()
    }

    fn ensure_block(&mut self, coord: BlockCoord) -> Result<u32, VolumeError> {
        if let Some(&i) = self.index.get(&coord) {
            return Ok(i);
        }
        if self.blocks.len() >= self.config.max_blocks {
            return Err(VolumeError::AllocationLimit(self.config.max_blocks));
        }
        let i = self.blocks.len() as u32;
        self.blocks.push(VoxelBlock::new(coord));
        self.index.insert(coord, i);
        Ok(i)
    }

    /// Inserts a fully-formed block, replacing any block at the same coordinate.
    pub fn insert_block(&mut self, block: VoxelBlock<T>) -> Result<(), VolumeError> {
        let i = self.ensure_block(block.coord)?;
        self.blocks[i as usize] = block;
        Ok(())
    }

    /// Local truncation distance and optional normal for a block's statistics.
    pub fn local_surface(&self, stats: &BlockStatistics<T>, sensor_pos: Vec3<T>) -> (T, Option<Vec3<T>>) {
        match estimate_plane(stats, sensor_pos, self.config.plane_tolerance) {
            Ok(plane) => (adaptive_truncation(plane.flatness, stats.n, &self.truncation), Some(plane.normal)),
            Err(_) => (self.truncation.eps_max, None),
        }
    }

    /// Fuses one scan of world-frame points observed from `sensor_pos`.
    pub fn integrate_scan(&mut self, points: &[Vec3<T>], sensor_pos: Vec3<T>) -> Result<ScanReport, VolumeError> {
        if !sensor_pos.is_finite() || points.iter().any(|p| !p.is_finite()) {
            return Err(VolumeError::NonFinitePoint);
        }
        let allocated_before = self.blocks.len();

        // pass 1: statistics
        let mut point_block = Vec::with_capacity(points.len());
        let mut scan_stats: Vec<(u32, BlockStatistics<T>)> = Vec::new();
        let mut slot_of_block: HashMap<u32, usize, BuildHasherDefault<BlockHasher>> = HashMap::default();
        for &p in points {
            let b = self.ensure_block(BlockCoord::of_voxel(self.voxel_of(p)))?;
            point_block.push(b);
            let slot = *slot_of_block.entry(b).or_insert_with(|| {
                scan_stats.push((b, BlockStatistics::empty()));
                scan_stats.len() - 1
            });
            scan_stats[slot].1 = scan_stats[slot].1.merged_with_point(p);
        }
        let mut degenerate_blocks = 0;
        let mut surface: HashMap<u32, (T, Option<Vec3<T>>), BuildHasherDefault<BlockHasher>> = HashMap::default();
        for (b, s) in &scan_stats {
            let block = &mut self.blocks[*b as usize];
            block.stats = merge_statistics(&block.stats, s)?;
            let local = self.local_surface(&self.blocks[*b as usize].stats, sensor_pos);
            if local.1.is_none() {
                degenerate_blocks += 1;
            }
            surface.insert(*b, local);
        }

        let mut measurements = Vec::with_capacity(points.len());
        for (&p, b) in points.iter().zip(&point_block) {
            let (eps, normal) = surface[b];
            let Some(dir) = (p - sensor_pos).try_normalize() else { continue };
            let weight = match normal {
                Some(n) => measurement_weight(n, sensor_pos, p, self.config.min_weight),
                None => T::one(),
            };
            measurements.push(Measurement { point: p, dir, eps, weight });
        }

        // pass 2: bin (measurement, block) pairs by block
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        let mut coords = Vec::new();
        for (mi, m) in measurements.iter().enumerate() {
            coords.clear();
            self.footprint_blocks(m, &mut coords);
            for &c in &coords {
                let b = self.ensure_block(c)?;
                pairs.push((b, mi as u32));
            }
        }
        let nblocks = self.blocks.len();
        let mut offsets = vec![0usize; nblocks + 1];
        for &(b, _) in &pairs {
            offsets[b as usize + 1] += 1;
        }
        for i in 0..nblocks {
            offsets[i + 1] += offsets[i];
        }
        let mut binned = vec![0u32; pairs.len()];
        let mut cursor = offsets.clone();
        for &(b, mi) in &pairs {
            binned[cursor[b as usize]] = mi;
            cursor[b as usize] += 1;
        }
        drop(pairs);

        let vs = self.voxel_size;
        let footprint = self.config.footprint;
        let measurements = &measurements;
        let updates: u64 = self
            .blocks
            .par_iter_mut()
            .enumerate()
            .map(|(bi, block)| {
                let list = &binned[offsets[bi]..offsets[bi + 1]];
                let mut n = 0u64;
                for &mi in list {
                    n += match footprint {
                        Footprint::Ball => carve_ball(block, &measurements[mi as usize], vs),
                        Footprint::Ray => carve_ray(block, &measurements[mi as usize], vs),
                    };
                }
                n
            })
            .sum();

        let mean_truncation = if measurements.is_empty() {
            0.0
        } else {
            measurements.iter().map(|m| m.eps.as_f64()).sum::<f64>() / measurements.len() as f64
        };
        Ok(ScanReport {
            points: points.len(),
            blocks_touched: offsets.windows(2).filter(|w| w[1] > w[0]).count(),
            blocks_allocated: self.blocks.len() - allocated_before,
            degenerate_blocks,
            voxel_updates: updates,
            mean_truncation,
        })
    }

    /// Blocks that may contain voxels of a measurement's footprint, sorted.
    fn footprint_blocks(&self, m: &Measurement<T>, out: &mut Vec<BlockCoord>) {
        let mut push_box = |lo: Vec3<T>, hi: Vec3<T>| {
            let lo = BlockCoord::of_voxel(self.voxel_of(lo));
            let hi = BlockCoord::of_voxel(self.voxel_of(hi));
            for z in lo.z..=hi.z {
                for y in lo.y..=hi.y {
                    for x in lo.x..=hi.x {
                        out.push(BlockCoord::new(x, y, z));
                    }
                }
            }
        };
        match self.config.footprint {
            Footprint::Ball => {
                let e = Vec3::splat(m.eps);
                push_box(m.point - e, m.point + e);
            }
            Footprint::Ray => {
                // boxes around samples of the segment, spaced half a block apart
                let step = self.voxel_size * T::lit(BLOCK_SIDE as f64 / 2.0);
                let pad = Vec3::splat(tube_radius(self.voxel_size) + step);
                let samples = (T::lit(2.0) * m.eps / step).ceil().to_usize().unwrap_or(0);
                for i in 0..=samples {
                    let t = (T::from_usize(i).unwrap() * step - m.eps).min(m.eps);
                    let c = m.point + m.dir * t;
                    push_box(c - pad, c + pad);
                }
                out.sort_unstable_by_key(|c| (c.x, c.y, c.z));
                out.dedup();
            }
        }
    }

    /// Builds a volume directly from an analytic signed distance function over
    /// `bounds`: every voxel with `|sdf| ≤ eps_max` gets `clamp(sdf)` and
    /// weight `weight`.
    pub fn from_sdf(
        voxel_size: T,
        truncation: TruncationConfig<T>,
        bounds: Aabb<T>,
        weight: T,
        sdf: impl Fn(Vec3<T>) -> T + Sync,
    ) -> Result<Self, VolumeError> {
        let mut vol = Self::new(voxel_size, truncation)?;
        let lo = BlockCoord::of_voxel(vol.voxel_of(bounds.min));
        let hi = BlockCoord::of_voxel(vol.voxel_of(bounds.max));
        let eps = truncation.eps_max;
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    let coord = BlockCoord::new(x, y, z);
                    let mut block = VoxelBlock::new(coord);
                    let o = coord.origin_voxel();
                    let mut any = false;
                    for lz in 0..BLOCK_SIDE {
                        for ly in 0..BLOCK_SIDE {
                            for lx in 0..BLOCK_SIDE {
                                let c = vol.voxel_center([o[0] + lx as i64, o[1] + ly as i64, o[2] + lz as i64]);
                                let d = sdf(c);
                                if d.abs() <= eps {
                                    block.voxels[VoxelBlock::<T>::index(lx, ly, lz)] = Voxel { tsdf: d, weight };
                                    any = true;
                                }
                            }
                        }
                    }
                    if any {
                        vol.insert_block(block)?;
                    }
                }
            }
        }
        Ok(vol)
    }
}

#[inline]
fn tube_radius<T: Real>(vs: T) -> T {
    T::lit(0.75f64.sqrt()) * vs
}

#[inline]
fn voxel_center<T: Real>(i: usize, origin: i64, vs: T) -> T {
    (T::from_i64(origin + i as i64).unwrap() + T::lit(0.5)) * vs
}

/// Block-local indices of the voxel centers within `[p - r, p + r]` along one
/// axis, as a half-open range.
#[inline]
fn axis_range<T: Real>(p: T, r: T, origin: i64, vs: T) -> (usize, usize) {
    let half = T::lit(0.5);
    let side = BLOCK_SIDE as i64;
    let lo = ((p - r) / vs - half).ceil().to_i64().unwrap_or(i64::MIN / 2) - origin;
    let hi = ((p + r) / vs - half).floor().to_i64().unwrap_or(i64::MAX / 2) - origin;
    (lo.clamp(0, side) as usize, (hi + 1).clamp(0, side) as usize)
}

#[inline]
fn fuse<T: Real>(v: &mut Voxel<T>, d: T, m: &Measurement<T>) {
    let d = d.max(-m.eps).min(m.eps);
    let w = v.weight + m.weight;
    v.tsdf = (v.tsdf * v.weight + d * m.weight) / w;
    v.weight = w;
}

/// Applies one measurement to the voxels of `block` inside its ε-ball.
fn carve_ball<T: Real>(block: &mut VoxelBlock<T>, m: &Measurement<T>, vs: T) -> u64 {
    let o = block.coord.origin_voxel();
    let p = m.point;
    let eps2 = m.eps * m.eps;
    let mut n = 0;
    let (z0, z1) = axis_range(p.z, m.eps, o[2], vs);
    for z in z0..z1 {
        let dz = p.z - voxel_center(z, o[2], vs);
        let rz2 = eps2 - dz * dz;
        if rz2 < T::zero() {
            continue;
        }
        // one voxel of slack around the analytic span; the exact test below decides
        let (y0, y1) = axis_range(p.y, rz2.sqrt() + vs, o[1], vs);
        for y in y0..y1 {
            let dy = p.y - voxel_center(y, o[1], vs);
            let dyz2 = dy * dy + dz * dz;
            let rx2 = eps2 - dyz2;
            if rx2 < T::zero() {
                continue;
            }
            let base = dy * m.dir.y + dz * m.dir.z;
            let row = VoxelBlock::<T>::index(0, y, z);
            let (x0, x1) = axis_range(p.x, rx2.sqrt() + vs, o[0], vs);
            for x in x0..x1 {
                let dx = p.x - voxel_center(x, o[0], vs);
                if dx * dx + dyz2 > eps2 {
                    continue;
                }
                fuse(&mut block.voxels[row + x], dx * m.dir.x + base, m);
                n += 1;
            }
        }
    }
    n
}

/// Applies one measurement to the voxels of `block` along its ray segment.
fn carve_ray<T: Real>(block: &mut VoxelBlock<T>, m: &Measurement<T>, vs: T) -> u64 {
    let o = block.coord.origin_voxel();
    let p = m.point.to_array();
    let dir = m.dir.to_array();
    let r = tube_radius(vs);
    let tube2 = r * r;
    // march over voxel slices perpendicular to the dominant ray axis; within a
    // slice the tube stays within r / |dir_a| ≤ 1.5 voxels of the ray
    let a = (0..3).max_by(|&i, &j| dir[i].abs().partial_cmp(&dir[j].abs()).unwrap()).unwrap();
    let (b, c) = ((a + 1) % 3, (a + 2) % 3);
    let window = r / dir[a].abs() + vs * T::lit(1e-6);
    let mut n = 0;
    let (a0, a1) = axis_range(p[a], m.eps * dir[a].abs() + r, o[a], vs);
    for ia in a0..a1 {
        let ca = voxel_center(ia, o[a], vs);
        let t = (ca - p[a]) / dir[a];
        let (b0, b1) = axis_range(p[b] + t * dir[b], window, o[b], vs);
        let (c0, c1) = axis_range(p[c] + t * dir[c], window, o[c], vs);
        for ib in b0..b1 {
            for ic in c0..c1 {
                let mut idx = [0usize; 3];
                idx[a] = ia;
                idx[b] = ib;
                idx[c] = ic;
                let delta = Vec3::new(
                    m.point.x - voxel_center(idx[0], o[0], vs),
                    m.point.y - voxel_center(idx[1], o[1], vs),
                    m.point.z - voxel_center(idx[2], o[2], vs),
                );
                let d = delta.dot(m.dir);
                if d.abs() > m.eps || delta.norm_squared() - d * d > tube2 {
                    continue;
                }
                fuse(&mut block.voxels[VoxelBlock::<T>::index(idx[0], idx[1], idx[2])], d, m);
                n += 1;
            }
        }
    }
    n
}
