use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::palette::{self, Palette, Rgb};
use crate::scene::{NavPath, Point2, Scene, SceneObject};

use super::geometry::filter_objects_for_floor;
use super::MapError;

pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_MASK_RADIUS: f64 = 40.0;
pub const PAD_SIZE: usize = 1024;
pub const TARGET_SIZE: usize = 384;

pub const LINE_WIDTH_PX: f64 = 3.0;
pub const POINT_RADIUS_PX: f64 = 4.0;

/// Pixel position as `(column, row)`, row 0 at the top.
pub type Pixel = (usize, usize);

/// A palette-constrained RGB raster. Row 0 is the northern edge: world y
/// grows upward, image rows grow downward.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
    /// Meters per pixel.
    pub resolution: f64,
    /// World coordinate of the top-left corner of pixel (0, 0).
    pub origin: Point2,
}

impl SemanticMap {
    pub fn filled(width: usize, height: usize, color: Rgb, resolution: f64, origin: Point2) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
            resolution,
            origin,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, color: Rgb) {
        self.pixels[row * self.width + col] = color;
    }

    /// Continuous pixel coordinates `(col, row)` of a world point; pixel
    /// `(c, r)` has its center at `(c + 0.5, r + 0.5)`.
    pub fn world_to_pixel(&self, p: Point2) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.resolution,
            (self.origin.y - p.y) / self.resolution,
        )
    }

    /// Every pixel color is a palette entry.
    pub fn is_palette_closed(&self) -> bool {
        let palette = Palette::standard();
        self.pixels.iter().all(|&c| palette.contains(c))
    }

    pub fn count_color(&self, color: Rgb) -> usize {
        self.pixels.iter().filter(|&&c| c == color).count()
    }

    pub fn to_image(&self) -> RgbImage {
        let raw = self.pixels.iter().flatten().copied().collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer size")
    }

    pub fn from_image(img: &RgbImage, resolution: f64, origin: Point2) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.pixels().map(|p| p.0).collect(),
            resolution,
            origin,
        }
    }

    /// 8-bit RGB PNG, no alpha.
    pub fn to_png(&self) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        self.to_image()
            .write_to(&mut buf, ImageFormat::Png)
            .expect("in-memory png encode");
        buf.into_inner()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), MapError> {
        std::fs::write(path, self.to_png())?;
        Ok(())
    }

    /// Loads a PNG; georeferencing is not stored in the file.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, MapError> {
        let img = image::open(path)?.to_rgb8();
        Ok(Self::from_image(&img, 1.0, Point2::default()))
    }

    fn fill_where(&mut self, cols: (f64, f64), rows: (f64, f64), color: Rgb, pred: impl Fn(f64, f64) -> bool) {
        let c0 = cols.0.floor().max(0.0) as usize;
        let r0 = rows.0.floor().max(0.0) as usize;
        let c1 = (cols.1.ceil().max(0.0) as usize).min(self.width);
        let r1 = (rows.1.ceil().max(0.0) as usize).min(self.height);
        for r in r0..r1 {
            for c in c0..c1 {
                if pred(c as f64 + 0.5, r as f64 + 0.5) {
                    self.set(c, r, color);
                }
            }
        }
    }
}

fn point_in_polygon(x: f64, y: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (px - a.0 - t * dx).hypot(py - a.1 - t * dy)
}

/// Objects in paint order: larger footprints first, ties in input order.
pub fn paint_order(objects: &[SceneObject]) -> Vec<&SceneObject> {
    let mut ordered: Vec<&SceneObject> = objects.iter().collect();
    ordered.sort_by(|a, b| b.footprint_area().total_cmp(&a.footprint_area()));
    ordered
}

/// Draws the scene's floor-filtered objects and the path overlay.
pub fn rasterize(scene: &Scene, path: &NavPath, resolution: f64) -> Result<SemanticMap, MapError> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(MapError::InvalidResolution(resolution));
    }
    let bounds = scene.bounds;
    if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
        return Err(MapError::DegenerateBounds);
    }
    let width = ((bounds.width() / resolution).ceil() as usize).max(1);
    let height = ((bounds.height() / resolution).ceil() as usize).max(1);
    let origin = Point2::new(bounds.min.x, bounds.max.y);
    let palette = Palette::standard();

    let mut map = if scene.navigable_polygons.is_empty() {
        SemanticMap::filled(width, height, palette::NAVIGABLE, resolution, origin)
    } else {
        SemanticMap::filled(width, height, palette::NONNAVIGABLE, resolution, origin)
    };
    for poly in &scene.navigable_polygons {
        if poly.len() < 3 {
            continue;
        }
        let px: Vec<(f64, f64)> = poly.iter().map(|&p| map.world_to_pixel(p)).collect();
        let (cmin, cmax) = px.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        let (rmin, rmax) = px.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        map.fill_where((cmin, cmax), (rmin, rmax), palette::NAVIGABLE, |x, y| point_in_polygon(x, y, &px));
    }

    let objects = filter_objects_for_floor(&scene.objects, path.agent_height);
    for obj in paint_order(&objects) {
        let color = palette
            .color(&obj.category)
            .ok_or_else(|| MapError::UnknownCategory(obj.category.clone()))?;
        let (cx, cy) = map.world_to_pixel(Point2::new(obj.center[0], obj.center[1]));
        let hx = obj.extents[0] / 2.0 / resolution;
        let hy = obj.extents[1] / 2.0 / resolution;
        let (x0, x1, y0, y1) = (cx - hx, cx + hx, cy - hy, cy + hy);
        let mut painted = false;
        let c0 = (x0 - 0.5).ceil().max(0.0) as usize;
        let r0 = (y0 - 0.5).ceil().max(0.0) as usize;
        for r in r0..height {
            let yc = r as f64 + 0.5;
            if yc > y1 {
                break;
            }
            for c in c0..width {
                let xc = c as f64 + 0.5;
                if xc > x1 {
                    break;
                }
                map.set(c, r, color);
                painted = true;
            }
        }
        // Sub-pixel boxes still get the pixel under their center.
        if !painted && cx >= 0.0 && cy >= 0.0 && (cx as usize) < width && (cy as usize) < height {
            map.set(cx as usize, cy as usize, color);
        }
    }

    draw_path_overlay(&mut map, path);
    Ok(map)
}

fn draw_path_overlay(map: &mut SemanticMap, path: &NavPath) {
    let pts: Vec<(f64, f64)> = path.points.iter().map(|&p| map.world_to_pixel(p)).collect();
    let half = LINE_WIDTH_PX / 2.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        map.fill_where(
            (a.0.min(b.0) - half - 1.0, a.0.max(b.0) + half + 1.0),
            (a.1.min(b.1) - half - 1.0, a.1.max(b.1) + half + 1.0),
            palette::LINE,
            |x, y| segment_distance(x, y, a, b) <= half,
        );
    }
    let disk = |map: &mut SemanticMap, p: (f64, f64), color: Rgb| {
        let r = POINT_RADIUS_PX;
        map.fill_where((p.0 - r - 1.0, p.0 + r + 1.0), (p.1 - r - 1.0, p.1 + r + 1.0), color, |x, y| {
            (x - p.0).hypot(y - p.1) <= r
        });
    };
    if pts.len() > 2 {
        for &p in &pts[1..pts.len() - 1] {
            disk(map, p, palette::POINT);
        }
    }
    disk(map, pts[0], palette::START);
    disk(map, pts[pts.len() - 1], palette::END);
}

/// Pixels on the path centerline, sorted and deduplicated. These seed the
/// receptive-field mask.
pub fn path_pixels(map: &SemanticMap, path: &NavPath) -> Vec<Pixel> {
    let mut out = Vec::new();
    let pts: Vec<(f64, f64)> = path.points.iter().map(|&p| map.world_to_pixel(p)).collect();
    let mut push = |x: f64, y: f64| {
        if x >= 0.0 && y >= 0.0 && (x as usize) < map.width() && (y as usize) < map.height() {
            out.push((x as usize, y as usize));
        }
    };
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let steps = ((b.0 - a.0).hypot(b.1 - a.1) * 4.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            push(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        }
    }
    if pts.len() == 1 {
        push(pts[0].0, pts[0].1);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let parabola_cut = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
    };
    for q in 1..n {
        let mut s = parabola_cut(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = parabola_cut(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Exact squared Euclidean distance from each pixel to the nearest seed.
pub fn squared_distance_transform(width: usize, height: usize, seeds: &[Pixel]) -> Vec<f64> {
    const FAR: f64 = 1e20;
    let mut grid = vec![FAR; width * height];
    for &(c, r) in seeds {
        grid[r * width + c] = 0.0;
    }
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for c in 0..width {
        for r in 0..height {
            f[r] = grid[r * width + c];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for r in 0..height {
            grid[r * width + c] = out[r];
        }
    }
    for r in 0..height {
        let row = &mut grid[r * width..(r + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    grid
}

/// Blacks out every pixel farther than `radius` pixels from the path.
pub fn mask_map(map: &SemanticMap, path_pixels: &[Pixel], radius: f64) -> Result<SemanticMap, MapError> {
    if !(radius > 0.0) {
        return Err(MapError::InvalidMaskRadius(radius));
    }
    if path_pixels.is_empty() {
        return Err(MapError::EmptyPath);
    }
    if let Some(&(c, r)) = path_pixels.iter().find(|&&(c, r)| c >= map.width || r >= map.height) {
        return Err(MapError::PixelOutOfRange(c, r));
    }
    let dist2 = squared_distance_transform(map.width, map.height, path_pixels);
    let limit = radius * radius;
    let mut out = map.clone();
    for (px, &d) in out.pixels.iter_mut().zip(&dist2) {
        if d > limit {
            *px = palette::NONNAVIGABLE;
        }
    }
    Ok(out)
}

/// Pads to a `PAD_SIZE` square with black (content top-left) and resizes to
/// `TARGET_SIZE` with nearest sampling.
pub fn pad_and_resize(map: &SemanticMap) -> Result<SemanticMap, MapError> {
    pad_and_resize_to(map, PAD_SIZE, TARGET_SIZE)
}

pub fn pad_and_resize_to(map: &SemanticMap, pad: usize, target: usize) -> Result<SemanticMap, MapError> {
    if map.width > pad || map.height > pad {
        return Err(MapError::TooLarge {
            width: map.width,
            height: map.height,
            limit: pad,
        });
    }
    let scale = pad as f64 / target as f64;
    let mut out = SemanticMap::filled(target, target, palette::NONNAVIGABLE, map.resolution * scale, map.origin);
    // src index = floor((dst + 0.5) * scale), the usual nearest-neighbour rule.
    let src: Vec<usize> = (0..target)
        .map(|d| (((d as f64 + 0.5) * scale).floor() as usize).min(pad - 1))
        .collect();
    for (r, &sr) in src.iter().enumerate() {
        if sr >= map.height {
            continue;
        }
        for (c, &sc) in src.iter().enumerate() {
            if sc < map.width {
                out.set(c, r, map.get(sc, sr));
            }
        }
    }
    Ok(out)
}
