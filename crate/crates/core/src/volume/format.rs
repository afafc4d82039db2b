//! Little-endian binary volume format.
//!
//! ```text
//! header:  magic "ATSF" | version u32 | voxel_size f64 | eps_min f64 | eps_max f64 | k f64 | block_count u64
//! block:   x y z i32 × 3
//!          512 × (tsdf f32, weight f32), x fastest, then y, then z
//!          n i64 | mean f64 × 3 | covariance upper triangle f64 × 6 (xx xy xz yy yz zz)
//! ```
//! Blocks are written in ascending coordinate order.

use std::io::{Read, Write};

use super::{BlockCoord, BlockStatistics, TruncationConfig, TsdfVolume, Voxel, VoxelBlock, BLOCK_VOXELS};
use crate::error::FormatError;
use crate::geometry::{Mat3, Vec3};
use crate::scalar::Real;

pub const VOLUME_MAGIC: &[u8; 4] = b"ATSF";
pub const VOLUME_FORMAT_VERSION: u32 = 1;

pub fn write_volume<T: Real, W: Write>(volume: &TsdfVolume<T>, mut w: W) -> Result<(), FormatError> {
    let t = volume.truncation();
    w.write_all(VOLUME_MAGIC)?;
    w.write_all(&VOLUME_FORMAT_VERSION.to_le_bytes())?;
    for v in [volume.voxel_size(), t.eps_min, t.eps_max, t.k] {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    w.write_all(&(volume.block_count() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(12 + BLOCK_VOXELS * 8 + 80);
    for coord in volume.sorted_coords() {
        let block = volume.block(coord).expect("listed block");
        buf.clear();
        for c in [coord.x, coord.y, coord.z] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        for vox in block.voxels.iter() {
            buf.extend_from_slice(&(vox.tsdf.as_f64() as f32).to_le_bytes());
            buf.extend_from_slice(&(vox.weight.as_f64() as f32).to_le_bytes());
        }
        let s = &block.stats;
        buf.extend_from_slice(&(s.n as i64).to_le_bytes());
        for v in s.mean.to_array() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        let c = &s.covariance.m;
        for v in [c[0][0], c[0][1], c[0][2], c[1][1], c[1][2], c[2][2]] {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], FormatError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_f64(r: &mut impl Read) -> Result<f64, FormatError> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

pub fn read_volume<T: Real, R: Read>(mut r: R) -> Result<TsdfVolume<T>, FormatError> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != VOLUME_MAGIC {
        return Err(FormatError::BadHeader(format!("magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VOLUME_FORMAT_VERSION {
        return Err(FormatError::Version(version));
    }
    let voxel_size = T::lit(read_f64(&mut r)?);
    let eps_min = T::lit(read_f64(&mut r)?);
    let eps_max = T::lit(read_f64(&mut r)?);
    let k = T::lit(read_f64(&mut r)?);
    let count = u64::from_le_bytes(read_array(&mut r)?);
    let mut volume = TsdfVolume::new(voxel_size, TruncationConfig::new(eps_min, eps_max, k)?)?;
    let mut voxel_bytes = vec![0u8; BLOCK_VOXELS * 8];
    for _ in 0..count {
        let x = i32::from_le_bytes(read_array(&mut r)?);
        let y = i32::from_le_bytes(read_array(&mut r)?);
        let z = i32::from_le_bytes(read_array(&mut r)?);
        let mut block = VoxelBlock::new(BlockCoord::new(x, y, z));
        r.read_exact(&mut voxel_bytes)?;
        for (vox, chunk) in block.voxels.iter_mut().zip(voxel_bytes.chunks_exact(8)) {
            let tsdf = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
            let weight = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
            *vox = Voxel { tsdf: T::lit(tsdf as f64), weight: T::lit(weight as f64) };
        }
        let n = i64::from_le_bytes(read_array(&mut r)?);
        if n < 0 {
            return Err(FormatError::BadHeader(format!("negative point count {n}")));
        }
        let mean = Vec3::new(T::lit(read_f64(&mut r)?), T::lit(read_f64(&mut r)?), T::lit(read_f64(&mut r)?));
        let mut u = [T::zero(); 6];
        for v in u.iter_mut() {
            *v = T::lit(read_f64(&mut r)?);
        }
        let covariance = Mat3::from_rows([[u[0], u[1], u[2]], [u[1], u[3], u[4]], [u[2], u[4], u[5]]]);
        block.stats = BlockStatistics { n: n as u64, mean, covariance };
        volume.insert_block(block)?;
    }
    Ok(volume)
}
