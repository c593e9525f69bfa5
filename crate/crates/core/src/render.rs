//! False-color previews of maps and trajectories.

use crate::geometry::Vec2;
use crate::mapgen::{Class, SemanticMap};
use crate::samples::MultimodalSample;

pub type Rgb = [u8; 3];

pub const ROAD: Rgb = [128, 64, 128];
pub const SIDEWALK: Rgb = [244, 35, 232];
pub const BACKGROUND: Rgb = [0, 0, 0];
pub const PAST: Rgb = [230, 30, 30];
pub const FUTURE: Rgb = [40, 220, 60];
pub const PREDICTION: Rgb = [50, 110, 255];

pub fn class_color(c: Class) -> Rgb {
    match c {
        Class::Background => BACKGROUND,
        Class::Road => ROAD,
        Class::Sidewalk => SIDEWALK,
    }
}

/// Opaque RGBA raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbaImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbaImage {
    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 4;
        self.data[i..i + 3].copy_from_slice(&c);
        self.data[i + 3] = 255;
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 4;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Map in the palette, each class pixel blown up to `scale x scale`.
pub fn render_map(map: &SemanticMap, scale: usize) -> RgbaImage {
    let scale = scale.max(1);
    let (w, h) = (map.width * scale, map.height * scale);
    let mut img = RgbaImage {
        width: w,
        height: h,
        data: vec![0; w * h * 4],
    };
    for row in 0..h {
        for col in 0..w {
            img.put(col as i64, row as i64, class_color(map.get(col / scale, row / scale)));
        }
    }
    img
}

/// Polyline through continuous map-pixel coordinates.
pub fn draw_polyline(img: &mut RgbaImage, pixels: &[Vec2], scale: usize, color: Rgb) {
    let s = scale.max(1) as f64;
    let to_img = |p: Vec2| ((p.x * s + s / 2.0).floor() as i64, (p.y * s + s / 2.0).floor() as i64);
    for w in pixels.windows(2) {
        let (a, b) = (to_img(w[0]), to_img(w[1]));
        line(img, a, b, color);
    }
    let dot = (scale as i64 / 2).max(1);
    for &p in pixels {
        let (x, y) = to_img(p);
        for dy in -dot..=dot {
            for dx in -dot..=dot {
                img.put(x + dx, y + dy, color);
            }
        }
    }
}

fn line(img: &mut RgbaImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    // Long off-canvas segments cannot loop forever: the step count is bounded.
    for _ in 0..=(dx - dy) {
        img.put(x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Sample map with futures, optional predictions and the past on top.
pub fn render_sample(sample: &MultimodalSample, predictions: &[Vec<Vec2>], scale: usize) -> RgbaImage {
    let mut img = render_map(&sample.map, scale);
    let px = |pts: &[Vec2]| pts.iter().map(|&p| sample.map.to_pixel(p)).collect::<Vec<_>>();
    for i in 0..sample.futures.len() {
        draw_polyline(&mut img, &sample.future_pixels(i), scale, FUTURE);
    }
    for p in predictions {
        draw_polyline(&mut img, &px(p), scale, PREDICTION);
    }
    draw_polyline(&mut img, &sample.past_pixels(), scale, PAST);
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    #[test]
    fn palette_and_scale() {
        let mut map = SemanticMap::new(3, 2, 0.5, Pose::identity()).unwrap();
        map.set(0, 0, Class::Road);
        map.set(2, 1, Class::Sidewalk);
        let img = render_map(&map, 2);
        assert_eq!((img.width, img.height), (6, 4));
        assert_eq!(img.pixel(1, 1), ROAD);
        assert_eq!(img.pixel(5, 3), SIDEWALK);
        assert_eq!(img.pixel(3, 0), BACKGROUND);
        assert!(img.data.chunks(4).all(|p| p[3] == 255));
    }

    #[test]
    fn polyline_hits_endpoints_and_clips() {
        let map = SemanticMap::new(10, 10, 0.5, Pose::identity()).unwrap();
        let mut img = render_map(&map, 1);
        draw_polyline(&mut img, &[Vec2::new(1.0, 1.0), Vec2::new(8.0, 5.0), Vec2::new(40.0, -30.0)], 1, PAST);
        assert_eq!(img.pixel(1, 1), PAST);
        assert_eq!(img.pixel(8, 5), PAST);
        assert_eq!(img.pixel(0, 9), BACKGROUND);
    }
}
