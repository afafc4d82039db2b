use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{barycentric, rasterize_triangle};
use super::seam::SeamLeveling;
use crate::camera::{CameraFrame, Image8};
use crate::error::TextureError;
use crate::mesher::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlasConfig {
    pub page_size: usize,
    /// Texels of source image kept around every chart.
    pub padding: usize,
    pub max_pages: usize,
    pub fallback_color: [u8; 3],
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self { page_size: 4096, padding: 2, max_pages: 64, fallback_color: [128, 128, 128] }
    }
}

/// Placement of one chart: the source-image rectangle it copies and where it
/// lands in the atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChartRect {
    pub chart: u32,
    pub page: u32,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    /// Source pixel mapped to the rectangle's top-left texel.
    pub source_x: i64,
    pub source_y: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureAtlas {
    pub pages: Vec<Image8>,
    pub rects: Vec<ChartRect>,
    /// Atlas page per face; `None` for untextured faces.
    pub face_page: Vec<Option<u32>>,
    /// Per-face corner UVs in `[0, 1]^2`, `v` pointing up. Zero for
    /// untextured faces.
    pub face_uvs: Vec<[[f64; 2]; 3]>,
    pub none_faces: Vec<u32>,
    pub fallback_color: [u8; 3],
}

/// Shelf packing, tallest first. Returns `(page, x, y)` per input size.
fn pack(sizes: &[(usize, usize)], page_size: usize, max_pages: usize) -> Result<Vec<(u32, usize, usize)>, TextureError> {
    let overflow = || TextureError::AtlasOverflow { pages: max_pages, size: page_size };
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].1.cmp(&sizes[a].1).then(sizes[b].0.cmp(&sizes[a].0)).then(a.cmp(&b)));
    let mut out = vec![(0, 0, 0); sizes.len()];
    let (mut page, mut x, mut y, mut shelf) = (0usize, 0usize, 0usize, 0usize);
    for i in order {
        let (w, h) = sizes[i];
        if w > page_size || h > page_size {
            return Err(overflow());
        }
        if x + w > page_size {
            y += shelf;
            x = 0;
            shelf = 0;
        }
        if y + h > page_size {
            page += 1;
            x = 0;
            y = 0;
            shelf = 0;
        }
        if page >= max_pages {
            return Err(overflow());
        }
        out[i] = (page as u32, x, y);
        x += w;
        shelf = shelf.max(h);
    }
    Ok(out)
}

/// Copies each chart 1:1 from its source frame into atlas pages, adding the
/// barycentric interpolation of the chart's per-vertex corrections.
///
/// Texels outside every chart face (padding) take the correction of the
/// nearest covered texel so bilinear lookups near chart borders stay
/// consistent. Pages are cropped to their used extent.
pub fn bake_atlas(
    mesh: &TriangleMesh<f64>,
    frames: &[CameraFrame<f64>],
    leveling: &SeamLeveling,
    cfg: &AtlasConfig,
) -> Result<TextureAtlas, TextureError> {
    let charts = &leveling.charts;
    let faces = mesh.faces();
    let pad = cfg.padding as i64;

    // projected corners of every textured face in its chart's frame
    let mut proj: Vec<Option<[(f64, f64); 3]>> = vec![None; faces.len()];
    let mut sizes = Vec::with_capacity(charts.len());
    let mut origins = Vec::with_capacity(charts.len());
    for (chart, members) in charts.chart_faces.iter().enumerate() {
        let fi = charts.chart_frame[chart] as usize;
        let frame = frames.get(fi).ok_or(TextureError::MissingFrame(fi))?;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &f in members {
            let tri = mesh.triangle(f as usize);
            let p: [(f64, f64); 3] = std::array::from_fn(|k| {
                frame.camera.project_camera_unbounded(frame.camera.to_camera(tri[k])).unwrap_or((0.0, 0.0))
            });
            for q in &p {
                x0 = x0.min(q.0);
                y0 = y0.min(q.1);
                x1 = x1.max(q.0);
                y1 = y1.max(q.1);
            }
            proj[f as usize] = Some(p);
        }
        let sx = x0.floor() as i64 - pad;
        let sy = y0.floor() as i64 - pad;
        let w = (x1.ceil() as i64 + pad - sx).max(1) as usize;
        let h = (y1.ceil() as i64 + pad - sy).max(1) as usize;
        sizes.push((w, h));
        origins.push((sx, sy));
    }
    let placement = pack(&sizes, cfg.page_size, cfg.max_pages)?;
    let rects: Vec<ChartRect> = (0..charts.len())
        .map(|c| ChartRect {
            chart: c as u32,
            page: placement[c].0,
            x: placement[c].1,
            y: placement[c].2,
            width: sizes[c].0,
            height: sizes[c].1,
            source_x: origins[c].0,
            source_y: origins[c].1,
        })
        .collect();

    let page_count = rects.iter().map(|r| r.page as usize + 1).max().unwrap_or(0);
    let mut extents = vec![(0usize, 0usize); page_count];
    for r in &rects {
        let e = &mut extents[r.page as usize];
        e.0 = e.0.max(r.x + r.width);
        e.1 = e.1.max(r.y + r.height);
    }

    let tiles: Vec<Image8> = rects
        .par_iter()
        .map(|r| bake_chart(mesh, &frames[charts.chart_frame[r.chart as usize] as usize], leveling, r, &proj))
        .collect();

    let mut pages: Vec<Image8> = extents.iter().map(|&(w, h)| Image8::filled(w, h, &cfg.fallback_color)).collect();
    for (r, tile) in rects.iter().zip(&tiles) {
        let page = &mut pages[r.page as usize];
        for ty in 0..r.height {
            for tx in 0..r.width {
                page.pixel_mut(r.x + tx, r.y + ty).copy_from_slice(tile.pixel(tx, ty));
            }
        }
    }

    let mut face_page = vec![None; faces.len()];
    let mut face_uvs = vec![[[0.0; 2]; 3]; faces.len()];
    for (f, p) in proj.iter().enumerate() {
        let Some(p) = p else { continue };
        let r = &rects[charts.face_chart[f].unwrap() as usize];
        let (pw, ph) = extents[r.page as usize];
        face_page[f] = Some(r.page);
        for k in 0..3 {
            let tx = r.x as f64 + p[k].0 - r.source_x as f64;
            let ty = r.y as f64 + p[k].1 - r.source_y as f64;
            face_uvs[f][k] = [(tx / pw as f64).clamp(0.0, 1.0), (1.0 - ty / ph as f64).clamp(0.0, 1.0)];
        }
    }
    let none_faces = (0..faces.len() as u32).filter(|&f| face_page[f as usize].is_none()).collect();
    Ok(TextureAtlas { pages, rects, face_page, face_uvs, none_faces, fallback_color: cfg.fallback_color })
}

fn bake_chart(
    mesh: &TriangleMesh<f64>,
    frame: &CameraFrame<f64>,
    leveling: &SeamLeveling,
    r: &ChartRect,
    proj: &[Option<[(f64, f64); 3]>],
) -> Image8 {
    let (w, h) = (r.width, r.height);
    let (ox, oy) = (r.source_x as f64, r.source_y as f64);
    let mut owner = vec![u32::MAX; w * h];
    let members = &leveling.charts.chart_faces[r.chart as usize];
    for &f in members {
        let p = proj[f as usize].unwrap();
        let local = p.map(|q| (q.0 - ox, q.1 - oy));
        rasterize_triangle(local, w, h, |x, y| {
            if owner[y * w + x] == u32::MAX {
                owner[y * w + x] = f;
            }
        });
    }
    // tiny faces that cover no texel center still own the texel under their centroid
    for &f in members {
        let p = proj[f as usize].unwrap();
        let cx = ((p[0].0 + p[1].0 + p[2].0) / 3.0 - ox).floor();
        let cy = ((p[0].1 + p[1].1 + p[2].1) / 3.0 - oy).floor();
        if cx >= 0.0 && cy >= 0.0 && (cx as usize) < w && (cy as usize) < h {
            let i = cy as usize * w + cx as usize;
            if owner[i] == u32::MAX {
                owner[i] = f;
            }
        }
    }
    // breadth-first dilation so padding texels inherit a neighbouring face
    let mut frontier: Vec<usize> = (0..w * h).filter(|&i| owner[i] != u32::MAX).collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if owner[j] == u32::MAX {
                    owner[j] = owner[i];
                    next.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        frontier = next;
    }

    let faces = mesh.faces();
    let mut tile = Image8::new(w, h, 3);
    for ty in 0..h {
        for tx in 0..w {
            let (u, v) = (ox + tx as f64 + 0.5, oy + ty as f64 + 0.5);
            let mut corr = [0.0; 3];
            let f = owner[ty * w + tx];
            if f != u32::MAX {
                let p = proj[f as usize].unwrap();
                if let Some(b) = barycentric(p, (u, v)) {
                    let b = b.map(|x| x.max(0.0));
                    let s: f64 = b.iter().sum();
                    for (k, &vert) in faces[f as usize].iter().enumerate() {
                        let g = leveling.correction(vert, r.chart);
                        for c in 0..3 {
                            corr[c] += b[k] / s * g[c];
                        }
                    }
                }
            }
            let px = tile.pixel_mut(tx, ty);
            for c in 0..3 {
                px[c] = (frame.image.sample_bilinear(u, v, c) + corr[c]).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    tile
}

/// File name of atlas page `k` for an output stem.
pub fn page_file_name(stem: &str, k: usize) -> String {
    format!("{stem}_atlas_{k}.png")
}

/// Wavefront OBJ referencing `mtl_name`; faces are grouped by atlas page,
/// untextured faces use the `untextured` material.
pub fn write_obj<W: Write>(mut w: W, mesh: &TriangleMesh<f64>, atlas: &TextureAtlas, mtl_name: &str) -> std::io::Result<()> {
    writeln!(w, "mtllib {mtl_name}")?;
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for n in mesh.normals() {
        writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
    }
    for uv in &atlas.face_uvs {
        for c in uv {
            writeln!(w, "vt {} {}", c[0], c[1])?;
        }
    }
    let mut groups: Vec<(Option<u32>, Vec<usize>)> = Vec::new();
    for p in (0..atlas.pages.len() as u32).map(Some).chain([None]) {
        let members: Vec<usize> = (0..mesh.face_count()).filter(|&f| atlas.face_page[f] == p).collect();
        if !members.is_empty() {
            groups.push((p, members));
        }
    }
    for (page, members) in groups {
        match page {
            Some(p) => writeln!(w, "usemtl atlas_{p}")?,
            None => writeln!(w, "usemtl untextured")?,
        }
        for f in members {
            let t = mesh.faces()[f];
            let n = f + 1;
            if page.is_some() {
                let uv = 3 * f + 1;
                writeln!(w, "f {}/{}/{n} {}/{}/{n} {}/{}/{n}", t[0] + 1, uv, t[1] + 1, uv + 1, t[2] + 1, uv + 2)?;
            } else {
                writeln!(w, "f {}//{n} {}//{n} {}//{n}", t[0] + 1, t[1] + 1, t[2] + 1)?;
            }
        }
    }
    Ok(())
}

pub fn write_mtl<W: Write>(mut w: W, atlas: &TextureAtlas, stem: &str) -> std::io::Result<()> {
    for k in 0..atlas.pages.len() {
        writeln!(w, "newmtl atlas_{k}")?;
        writeln!(w, "Ka 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1")?;
        writeln!(w, "map_Kd {}\n", page_file_name(stem, k))?;
    }
    let [r, g, b] = atlas.fallback_color.map(|c| c as f64 / 255.0);
    writeln!(w, "newmtl untextured")?;
    writeln!(w, "Ka {r} {g} {b}\nKd {r} {g} {b}\nKs 0 0 0\nillum 1")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_stays_inside_pages_without_overlap() {
        let sizes: Vec<(usize, usize)> = (0..40).map(|i| (5 + (i * 7) % 23, 3 + (i * 5) % 17)).collect();
        let placed = pack(&sizes, 64, 10).unwrap();
        for (i, &(p, x, y)) in placed.iter().enumerate() {
            assert!(x + sizes[i].0 <= 64 && y + sizes[i].1 <= 64);
            for (j, &(q, u, v)) in placed.iter().enumerate().skip(i + 1) {
                if p == q {
                    let disjoint = x + sizes[i].0 <= u || u + sizes[j].0 <= x || y + sizes[i].1 <= v || v + sizes[j].1 <= y;
                    assert!(disjoint, "{i} overlaps {j}");
                }
            }
        }
    }

    #[test]
    fn oversized_chart_overflows() {
        assert!(matches!(pack(&[(65, 3)], 64, 4), Err(TextureError::AtlasOverflow { .. })));
        assert!(matches!(pack(&vec![(64, 64); 3], 64, 2), Err(TextureError::AtlasOverflow { .. })));
    }
}
