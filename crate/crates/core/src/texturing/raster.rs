/// Calls `f(x, y)` for every pixel whose center lies inside (or on the
/// boundary of) the triangle `p`, clipped to a `width` x `height` image.
pub fn rasterize_triangle(p: [(f64, f64); 3], width: usize, height: usize, mut f: impl FnMut(usize, usize)) {
    let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let sign = area.signum();
    let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
    let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
    let x1 = ((max_x - 0.5).floor()).min(width as f64 - 1.0);
    let y1 = ((max_y - 0.5).floor()).min(height as f64 - 1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);
    for y in y0..=y1 {
        let cy = y as f64 + 0.5;
        for x in x0..=x1 {
            let cx = x as f64 + 0.5;
            if (0..3).all(|k| {
                let a = p[k];
                let b = p[(k + 1) % 3];
                sign * ((b.0 - a.0) * (cy - a.1) - (cx - a.0) * (b.1 - a.1)) >= 0.0
            }) {
                f(x, y);
            }
        }
    }
}

/// Barycentric coordinates of `q` with respect to the 2D triangle `p`.
pub fn barycentric(p: [(f64, f64); 3], q: (f64, f64)) -> Option<[f64; 3]> {
    let d = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let w1 = ((q.0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (q.1 - p[0].1)) / d;
    let w2 = ((p[1].0 - p[0].0) * (q.1 - p[0].1) - (q.0 - p[0].0) * (p[1].1 - p[0].1)) / d;
    Some([1.0 - w1 - w2, w1, w2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covers_expected_pixels() {
        let mut n = 0;
        rasterize_triangle([(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)], 100, 100, |_, _| n += 1);
        // centers (x+.5, y+.5) with x + y + 1 <= 10
        assert_eq!(n, 55);
        let mut m = 0;
        rasterize_triangle([(0.0, 0.0), (0.0, 10.0), (10.0, 0.0)], 100, 100, |_, _| m += 1);
        assert_eq!(n, m);
    }

    #[test]
    fn clipped_to_image() {
        let mut n = 0;
        rasterize_triangle([(-50.0, -50.0), (60.0, -50.0), (-50.0, 60.0)], 4, 4, |x, y| {
            assert!(x < 4 && y < 4);
            n += 1;
        });
        assert_eq!(n, 16);
    }

    #[test]
    fn barycentric_reproduces_point() {
        let p = [(1.0, 2.0), (7.0, 3.0), (2.0, 9.0)];
        let b = barycentric(p, (3.0, 4.0)).unwrap();
        let x = b[0] * p[0].0 + b[1] * p[1].0 + b[2] * p[2].0;
        let y = b[0] * p[0].1 + b[1] * p[1].1 + b[2] * p[2].1;
        assert!((x - 3.0).abs() < 1e-12 && (y - 4.0).abs() < 1e-12);
    }
}
