//! Sketch and solid rasterization.
//!
//! Metric masks use 1-pixel strokes (Bresenham lines, midpoint circles with
//! angle clipping for arcs). Primitive-id markers are returned as overlay
//! metadata and drawn only into display images and SVG, never into the mask.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::io::Cursor;

use image::{GrayImage, ImageFormat, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Bounds2, Vec2, Vec3};
use crate::serialize::format_number;
use crate::sketch::{Arc, Primitive, PrimitiveId, SketchGraph};
use crate::solid::SolidModel;

pub const DEFAULT_SIZE: u32 = 512;
pub const MIN_SIZE: u32 = 16;
const MARGIN: f64 = 0.05;
const MARKER_NUDGE: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("nothing to render: sketch is empty")]
    EmptySketch,
    #[error("nothing to render: model has no extrusions")]
    EmptyModel,
    #[error("image size {0}x{1} is below the {MIN_SIZE}px minimum")]
    TooSmall(u32, u32),
    #[error("image encoding failed: {0}")]
    Encode(String),
    #[error("image decoding failed: {0}")]
    Decode(String),
}

/// Binary mask, row-major, row 0 at the top. `true` is stroke.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<bool>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![false; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = true;
    }

    /// Sets a pixel given signed coordinates; out-of-canvas pixels are dropped.
    pub fn plot(&mut self, x: i64, y: i64) {
        if x >= 0 && y >= 0 && x < i64::from(self.width) && y < i64::from(self.height) {
            self.set(x as u32, y as u32);
        }
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Foreground pixel coordinates as `(x, y)`.
    pub fn foreground(&self) -> Vec<(u32, u32)> {
        let w = self.width as usize;
        self.pixels.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| ((i % w) as u32, (i / w) as u32)).collect()
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([if self.get(x, y) { 0 } else { 255 }]))
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        encode_png(&self.to_gray())
    }

    /// Decodes an image file; pixels darker than mid-gray are foreground.
    pub fn from_image_bytes(bytes: &[u8]) -> Result<Self, RenderError> {
        let img = image::load_from_memory(bytes).map_err(|e| RenderError::Decode(e.to_string()))?.to_luma8();
        let mut out = Self::new(img.width(), img.height());
        for (x, y, p) in img.enumerate_pixels() {
            if p.0[0] < 128 {
                out.set(x, y);
            }
        }
        Ok(out)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(&self.to_gray())
    }
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>, RenderError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| RenderError::Encode(e.to_string()))?;
    Ok(buf.into_inner())
}

/// Binary (P5) portable graymap.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    out
}

/// Marker anchor in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub id: PrimitiveId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchRender {
    pub mask: RasterImage,
    pub markers: Vec<Marker>,
    pub canvas: Canvas,
}

/// Maps sketch coordinates into a pixel canvas (y flipped).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    origin: Vec2,
    side: f64,
    scale: f64,
    offset: Vec2,
}

impl Canvas {
    /// Fits the padded square around `bounds` into a `width`×`height` canvas.
    pub fn fit(bounds: Bounds2, width: u32, height: u32) -> Self {
        let (origin, side) = bounds.padded_square(MARGIN);
        let scale = f64::from(width.min(height)) / side;
        let offset = Vec2::new(
            (f64::from(width) - side * scale) / 2.0,
            (f64::from(height) - side * scale) / 2.0,
        );
        Self { width, height, origin, side, scale, offset }
    }

    /// Continuous pixel position.
    pub fn to_pixel(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.offset.x + (p.x - self.origin.x) * self.scale,
            self.offset.y + (self.origin.y + self.side - p.y) * self.scale,
        )
    }

    /// Pixel that contains `p`, clamped into the canvas.
    pub fn pixel(&self, p: Vec2) -> (i64, i64) {
        let q = self.to_pixel(p);
        (
            (q.x.floor() as i64).clamp(0, i64::from(self.width) - 1),
            (q.y.floor() as i64).clamp(0, i64::from(self.height) - 1),
        )
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub fn bresenham(img: &mut RasterImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        img.plot(x, y);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Midpoint circle around an integer center; `keep` filters pixels.
fn midpoint_circle(img: &mut RasterImage, (cx, cy): (i64, i64), r: i64, keep: &dyn Fn(i64, i64) -> bool) {
    if r <= 0 {
        if keep(cx, cy) {
            img.plot(cx, cy);
        }
        return;
    }
    let (mut x, mut y, mut d) = (r, 0i64, 1 - r);
    while x >= y {
        for (px, py) in [(x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)] {
            if keep(cx + px, cy + py) {
                img.plot(cx + px, cy + py);
            }
        }
        y += 1;
        if d < 0 {
            d += 2 * y + 1;
        } else {
            x -= 1;
            d += 2 * (y - x) + 1;
        }
    }
}

fn draw_primitive(img: &mut RasterImage, canvas: &Canvas, p: &Primitive) {
    match *p {
        Primitive::Line { start, end } => bresenham(img, canvas.pixel(start), canvas.pixel(end)),
        Primitive::Circle { center, radius } => {
            let c = canvas.pixel(center);
            midpoint_circle(img, c, (radius * canvas.scale).round() as i64, &|_, _| true);
        }
        Primitive::Arc(a) => draw_arc(img, canvas, &a),
        Primitive::Point { pos } => {
            let (x, y) = canvas.pixel(pos);
            img.plot(x, y);
        }
    }
}

fn draw_arc(img: &mut RasterImage, canvas: &Canvas, a: &Arc) {
    let c = canvas.pixel(a.center);
    let r = (a.radius * canvas.scale).round() as i64;
    let ccw = a.to_ccw();
    // half a pixel of angular slack so the clipped run reaches the endpoints
    let slack = if r > 0 { 0.5 / r as f64 } else { PI };
    let keep = |x: i64, y: i64| {
        let theta = ((c.1 - y) as f64).atan2((x - c.0) as f64);
        within_span(theta, ccw.start_angle, ccw.span(), slack)
    };
    midpoint_circle(img, c, r, &keep);
    for end in [a.start(), a.end()] {
        let (x, y) = canvas.pixel(end);
        img.plot(x, y);
    }
}

fn within_span(theta: f64, start: f64, span: f64, slack: f64) -> bool {
    let rel = (theta - start).rem_euclid(TAU);
    rel <= span + slack || rel >= TAU - slack
}

/// Rasterizes a sketch into a binary mask with 1-pixel strokes. With
/// `with_marks`, marker anchors are computed too; the mask is unaffected.
pub fn render_sketch(sketch: &SketchGraph, width: u32, height: u32, with_marks: bool) -> Result<SketchRender, RenderError> {
    if sketch.is_empty() {
        return Err(RenderError::EmptySketch);
    }
    render_sketch_in(sketch, Canvas::fit(sketch.drawn_bounds(), width, height), with_marks)
}

/// Rasterizes into a given canvas (for drawing two sketches in one frame).
pub fn render_sketch_in(sketch: &SketchGraph, canvas: Canvas, with_marks: bool) -> Result<SketchRender, RenderError> {
    if canvas.width < MIN_SIZE || canvas.height < MIN_SIZE {
        return Err(RenderError::TooSmall(canvas.width, canvas.height));
    }
    let mut mask = RasterImage::new(canvas.width, canvas.height);
    for (_, p) in sketch.primitives() {
        draw_primitive(&mut mask, &canvas, p);
    }
    let markers = if with_marks { place_markers(sketch, &canvas) } else { Vec::new() };
    Ok(SketchRender { mask, markers, canvas })
}

/// Anchor before nudging and the direction to nudge in (pixel space).
fn marker_anchor(p: &Primitive, canvas: &Canvas) -> (Vec2, Vec2) {
    match *p {
        Primitive::Line { start, end } => {
            let mid = canvas.to_pixel(start.lerp(end, 0.5));
            let d = canvas.to_pixel(end) - canvas.to_pixel(start);
            (mid, d.perp().normalized().unwrap_or(Vec2::new(0.0, -1.0)))
        }
        Primitive::Circle { center, .. } => (canvas.to_pixel(center), Vec2::ZERO),
        Primitive::Arc(a) => {
            let mid = canvas.to_pixel(a.mid());
            let out = mid - canvas.to_pixel(a.center);
            (mid, out.normalized().unwrap_or(Vec2::new(0.0, -1.0)))
        }
        Primitive::Point { pos } => (canvas.to_pixel(pos), Vec2::new(1.0, -1.0) * std::f64::consts::FRAC_1_SQRT_2),
    }
}

fn marker_box(id: PrimitiveId) -> Vec2 {
    let digits = id.0.to_string().len() as f64;
    Vec2::new(4.0 * digits * 2.0, 12.0)
}

/// Marker anchors: primitive midpoint nudged off the stroke, then moved
/// along a square spiral until it no longer overlaps an earlier marker.
pub fn place_markers(sketch: &SketchGraph, canvas: &Canvas) -> Vec<Marker> {
    let mut placed: Vec<(Vec2, Vec2, Marker)> = Vec::new();
    let overlaps = |pos: Vec2, size: Vec2, placed: &[(Vec2, Vec2, Marker)]| {
        placed.iter().any(|(q, s, _)| {
            (pos.x - q.x).abs() * 2.0 < size.x + s.x && (pos.y - q.y).abs() * 2.0 < size.y + s.y
        })
    };
    let w = f64::from(canvas.width) - 1.0;
    let h = f64::from(canvas.height) - 1.0;
    for (id, p) in sketch.primitives() {
        let (anchor, normal) = marker_anchor(p, canvas);
        let base = anchor + normal * MARKER_NUDGE;
        let size = marker_box(*id);
        let mut pos = base;
        // square spiral in 4-pixel steps
        let (mut dx, mut dy, mut leg, mut walked, mut turns) = (1.0, 0.0, 1, 0, 0);
        let mut cur = base;
        let mut tries = 0;
        while overlaps(pos, size, &placed) && tries < 4096 {
            cur = cur + Vec2::new(dx, dy) * 4.0;
            pos = cur;
            walked += 1;
            tries += 1;
            if walked == leg {
                walked = 0;
                (dx, dy) = (-dy, dx);
                turns += 1;
                if turns % 2 == 0 {
                    leg += 1;
                }
            }
        }
        let clamped = Vec2::new(pos.x.clamp(0.0, w), pos.y.clamp(0.0, h));
        placed.push((clamped, size, Marker { id: *id, x: clamped.x, y: clamped.y }));
    }
    placed.into_iter().map(|(_, _, m)| m).collect()
}

/// 3×5 bitmap digits, one row per byte (bit 2 = leftmost column).
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn draw_label(img: &mut GrayImage, center: Vec2, text: &str, shade: u8) {
    const SCALE: i64 = 2;
    let n = text.len() as i64;
    let left = center.x.round() as i64 - (n * 4 * SCALE) / 2;
    let top = center.y.round() as i64 - (5 * SCALE) / 2;
    for (k, ch) in text.bytes().enumerate() {
        let Some(glyph) = ch.checked_sub(b'0').and_then(|d| DIGITS.get(d as usize)) else { continue };
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for sy in 0..SCALE {
                    for sx in 0..SCALE {
                        let x = left + (k as i64 * 4 + col) * SCALE + sx;
                        let y = top + row as i64 * SCALE + sy;
                        if x >= 0 && y >= 0 && x < i64::from(img.width()) && y < i64::from(img.height()) {
                            img.put_pixel(x as u32, y as u32, Luma([shade]));
                        }
                    }
                }
            }
        }
    }
}

/// Grayscale image for viewing: 2-pixel strokes, markers as digits.
pub fn display_image(render: &SketchRender) -> GrayImage {
    let mask = &render.mask;
    let mut img = GrayImage::from_pixel(mask.width, mask.height, Luma([255]));
    for (x, y) in mask.foreground() {
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let (px, py) = (x + dx, y + dy);
            if px < mask.width && py < mask.height {
                img.put_pixel(px, py, Luma([0]));
            }
        }
    }
    for m in &render.markers {
        draw_label(&mut img, Vec2::new(m.x, m.y), &m.id.to_string(), 96);
    }
    img
}

/// SVG 1.1 document: one `<path data-id=...>` per primitive, markers as
/// `<text>` nodes. An empty sketch yields an empty canvas.
pub fn render_sketch_svg(sketch: &SketchGraph, with_marks: bool) -> String {
    let size = DEFAULT_SIZE;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    let _ = writeln!(out, "  <rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>");
    if sketch.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let canvas = Canvas::fit(sketch.drawn_bounds(), size, size);
    let n = |v: f64| format_number(v, 3);
    let pt = |p: Vec2| {
        let q = canvas.to_pixel(p);
        format!("{} {}", n(q.x), n(q.y))
    };
    for (id, p) in sketch.primitives() {
        let d = match *p {
            Primitive::Line { start, end } => format!("M {} L {}", pt(start), pt(end)),
            Primitive::Circle { center, radius } => {
                let r = n(radius * canvas.scale);
                let east = pt(center + Vec2::new(radius, 0.0));
                let west = pt(center - Vec2::new(radius, 0.0));
                format!("M {east} A {r} {r} 0 1 0 {west} A {r} {r} 0 1 0 {east}")
            }
            Primitive::Arc(a) => {
                let r = n(a.radius * canvas.scale);
                let large = u8::from(a.span() > PI);
                // y is flipped, so counter-clockwise in the sketch is sweep 0
                let sweep = u8::from(a.clockwise);
                format!("M {} A {r} {r} 0 {large} {sweep} {}", pt(a.start()), pt(a.end()))
            }
            Primitive::Point { pos } => {
                let q = canvas.to_pixel(pos);
                format!("M {} {} m -2 0 a 2 2 0 1 0 4 0 a 2 2 0 1 0 -4 0", n(q.x), n(q.y))
            }
        };
        let _ = writeln!(
            out,
            "  <path data-id=\"{id}\" data-type=\"{}\" d=\"{d}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>",
            p.kind().name()
        );
    }
    if with_marks {
        for m in place_markers(sketch, &canvas) {
            let _ = writeln!(
                out,
                "  <text data-marker-for=\"{}\" x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" fill=\"#c00\" text-anchor=\"middle\" dominant-baseline=\"middle\">{}</text>",
                m.id,
                n(m.x),
                n(m.y),
                m.id
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Camera used for one wireframe view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Right,
    Top,
    Isometric,
}

impl View {
    pub const ALL: [View; 4] = [View::Front, View::Right, View::Top, View::Isometric];

    pub fn name(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Right => "right",
            View::Top => "top",
            View::Isometric => "isometric",
        }
    }

    /// Orthographic projection onto the image plane (u right, v up).
    pub fn project(self, p: Vec3) -> Vec2 {
        match self {
            View::Front => Vec2::new(p.x, p.z),
            View::Right => Vec2::new(p.y, p.z),
            View::Top => Vec2::new(p.x, p.y),
            View::Isometric => {
                let s2 = std::f64::consts::FRAC_1_SQRT_2;
                let s6 = 1.0 / 6f64.sqrt();
                Vec2::new(s2 * (p.x - p.y), s6 * (2.0 * p.z - p.x - p.y))
            }
        }
    }
}

/// Wireframe renders from the front, right, top and isometric cameras.
pub fn render_solid_views(model: &SolidModel, width: u32, height: u32) -> Result<Vec<(View, RasterImage)>, RenderError> {
    if model.steps().is_empty() {
        return Err(RenderError::EmptyModel);
    }
    if width < MIN_SIZE || height < MIN_SIZE {
        return Err(RenderError::TooSmall(width, height));
    }
    let edges = model.wire_edges();
    Ok(View::ALL
        .iter()
        .map(|&view| {
            let projected: Vec<(Vec2, Vec2)> =
                edges.iter().map(|&(a, b)| (view.project(a), view.project(b))).collect();
            let mut bounds = Bounds2::empty();
            for (a, b) in &projected {
                bounds.include(*a);
                bounds.include(*b);
            }
            let canvas = Canvas::fit(bounds, width, height);
            let mut img = RasterImage::new(width, height);
            for (a, b) in projected {
                bresenham(&mut img, canvas.pixel(a), canvas.pixel(b));
            }
            (view, img)
        })
        .collect())
}
