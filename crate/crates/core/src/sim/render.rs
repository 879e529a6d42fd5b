//! Fixed side-view camera and a coverage rasterizer without anti-aliasing.
//! A primitive covers every pixel its footprint touches, so thin walls and
//! small particles never vanish between pixel centres.

use super::arm::N_JOINTS;
use super::scene::{BowlConfig, DistractorShape, Rgb, PARTICLE_RADIUS};
use super::world::WorldState;
use super::SimError;
use crate::numerics::Tensor;

/// Visible world rectangle `(x0, y0, x1, y1)` in metres.
pub const VIEW: [f64; 4] = [0.08, -0.04, 0.72, 0.36];

pub const BACKGROUND: Rgb = [158, 168, 178];
pub const TABLE: Rgb = [118, 90, 62];
pub const ARM: Rgb = [66, 68, 80];
pub const SPOON: Rgb = [184, 186, 192];
const BOTTLE_CAP: Rgb = [22, 44, 60];
const JAR_LID: Rgb = [150, 120, 40];
const KNIFE_HANDLE: Rgb = [70, 44, 30];
const APPLE_STEM: Rgb = [60, 40, 20];

const LINK_HALF_WIDTH: f64 = 0.007;
const HANDLE_HALF_WIDTH: f64 = 0.002;
const HEAD_HALF_WIDTH: f64 = 0.004;

pub const MIN_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub height: usize,
    pub width: usize,
}

impl Camera {
    pub fn new(height: usize, width: usize) -> Result<Self, SimError> {
        if height < MIN_SIZE || width < MIN_SIZE {
            return Err(SimError::Resolution { height, width });
        }
        Ok(Self { height, width })
    }

    pub fn pixel_size(&self) -> (f64, f64) {
        (
            (VIEW[2] - VIEW[0]) / self.width as f64,
            (VIEW[3] - VIEW[1]) / self.height as f64,
        )
    }

    /// Continuous image coordinates `(column, row)` of a world point.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let (sx, sy) = self.pixel_size();
        ((x - VIEW[0]) / sx, (VIEW[3] - y) / sy)
    }

    /// World coordinates of a pixel centre.
    pub fn unproject(&self, row: usize, col: usize) -> (f64, f64) {
        let (sx, sy) = self.pixel_size();
        (VIEW[0] + (col as f64 + 0.5) * sx, VIEW[3] - (row as f64 + 0.5) * sy)
    }

    /// World rectangle of a pixel `(x0, y0, x1, y1)`.
    fn pixel_rect(&self, row: usize, col: usize) -> [f64; 4] {
        let (sx, sy) = self.pixel_size();
        let x0 = VIEW[0] + col as f64 * sx;
        let y1 = VIEW[3] - row as f64 * sy;
        [x0, y1 - sy, x0 + sx, y1]
    }

    /// Inclusive pixel ranges touched by a world rectangle, clipped to the image.
    fn cover(&self, r: [f64; 4]) -> Option<(usize, usize, usize, usize)> {
        let (c0, r0) = self.project(r[0], r[3]);
        let (c1, r1) = self.project(r[2], r[1]);
        let col0 = c0.floor().max(0.0);
        let col1 = (c1.ceil() - 1.0).min(self.width as f64 - 1.0);
        let row0 = r0.floor().max(0.0);
        let row1 = (r1.ceil() - 1.0).min(self.height as f64 - 1.0);
        if col1 < col0 || row1 < row0 {
            return None;
        }
        // A degenerate rectangle still touches the pixel it lies in.
        Some((row0 as usize, row1.max(row0) as usize, col0 as usize, col1.max(col0) as usize))
    }
}

/// 8-bit RGB image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(height: usize, width: usize, color: Rgb) -> Self {
        Self {
            height,
            width,
            data: color.iter().copied().cycle().take(height * width * 3).collect(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        let o = (row * self.width + col) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    fn set(&mut self, row: usize, col: usize, c: Rgb) {
        let o = (row * self.width + col) * 3;
        self.data[o..o + 3].copy_from_slice(&c);
    }

    /// Channel-first float tensor with values in `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let n = self.height * self.width;
        let mut out = vec![0.0f32; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * n + i] = px[c] as f32 / 255.0;
            }
        }
        Tensor::new([3, self.height, self.width], out).expect("sized from image")
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self, SimError> {
        let (width, height, body) = parse_netpbm(bytes, b"P6")?;
        if body.len() != width * height * 3 {
            return Err(SimError::Format(format!(
                "PPM body has {} bytes, expected {}",
                body.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            height,
            width,
            data: body.to_vec(),
        })
    }
}

/// Binary mask, one byte per pixel holding 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Inclusive `(row0, row1, col0, col1)` of the set pixels.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        bbox_of(self.height, self.width, |r, c| self.get(r, c))
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        let data = self.data.iter().map(|&v| if v != 0 { 1.0 } else { 0.0 }).collect();
        Tensor::new([1, self.height, self.width], data).expect("sized from mask")
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| if v != 0 { 255u8 } else { 0 }));
        out
    }

    /// Parse a PGM whose pixels are exactly 0 or 255.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, SimError> {
        let (width, height, body) = parse_netpbm(bytes, b"P5")?;
        if body.len() != width * height {
            return Err(SimError::Format(format!(
                "PGM body has {} bytes, expected {}",
                body.len(),
                width * height
            )));
        }
        let mut data = Vec::with_capacity(body.len());
        for &v in body {
            match v {
                0 => data.push(0),
                255 => data.push(1),
                other => return Err(SimError::Format(format!("mask value {other} is not binary"))),
            }
        }
        Ok(Self { height, width, data })
    }
}

pub(crate) fn bbox_of(
    height: usize,
    width: usize,
    on: impl Fn(usize, usize) -> bool,
) -> Option<(usize, usize, usize, usize)> {
    let mut b: Option<(usize, usize, usize, usize)> = None;
    for r in 0..height {
        for c in 0..width {
            if on(r, c) {
                b = Some(match b {
                    None => (r, r, c, c),
                    Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                });
            }
        }
    }
    b
}

fn parse_netpbm<'a>(bytes: &'a [u8], magic: &[u8]) -> Result<(usize, usize, &'a [u8]), SimError> {
    if !bytes.starts_with(magic) {
        return Err(SimError::Format("bad magic number".into()));
    }
    let mut pos = magic.len();
    let mut fields = [0usize; 3];
    for field in &mut fields {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| SimError::Format("truncated header".into()))?;
    }
    if fields[2] != 255 || pos >= bytes.len() {
        return Err(SimError::Format("unsupported max value or missing body".into()));
    }
    // exactly one whitespace byte separates header and body
    Ok((fields[0], fields[1], &bytes[pos + 1..]))
}

struct Canvas<'a> {
    cam: Camera,
    img: &'a mut Image,
}

impl Canvas<'_> {
    fn rect(&mut self, r: [f64; 4], c: Rgb) {
        if let Some((r0, r1, c0, c1)) = self.cam.cover(r) {
            for row in r0..=r1 {
                for col in c0..=c1 {
                    self.img.set(row, col, c);
                }
            }
        }
    }

    fn disc(&mut self, center: (f64, f64), radius: f64, c: Rgb) {
        let bound = [center.0 - radius, center.1 - radius, center.0 + radius, center.1 + radius];
        let Some((r0, r1, c0, c1)) = self.cam.cover(bound) else { return };
        for row in r0..=r1 {
            for col in c0..=c1 {
                let p = self.cam.pixel_rect(row, col);
                let dx = center.0 - center.0.clamp(p[0], p[2]);
                let dy = center.1 - center.1.clamp(p[1], p[3]);
                if dx.hypot(dy) <= radius {
                    self.img.set(row, col, c);
                }
            }
        }
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), half_width: f64, c: Rgb) {
        let bound = [
            a.0.min(b.0) - half_width,
            a.1.min(b.1) - half_width,
            a.0.max(b.0) + half_width,
            a.1.max(b.1) + half_width,
        ];
        let Some((r0, r1, c0, c1)) = self.cam.cover(bound) else { return };
        for row in r0..=r1 {
            for col in c0..=c1 {
                if segment_rect_distance(a, b, self.cam.pixel_rect(row, col)) <= half_width {
                    self.img.set(row, col, c);
                }
            }
        }
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

fn segment_rect_distance(a: (f64, f64), b: (f64, f64), r: [f64; 4]) -> f64 {
    if super::world::segment_hits_rect(a, b, r) {
        return 0.0;
    }
    let to_rect = |p: (f64, f64)| (p.0 - p.0.clamp(r[0], r[2])).hypot(p.1 - p.1.clamp(r[1], r[3]));
    let corners = [(r[0], r[1]), (r[2], r[1]), (r[0], r[3]), (r[2], r[3])];
    corners
        .into_iter()
        .map(|c| point_segment_distance(c, a, b))
        .chain([to_rect(a), to_rect(b)])
        .fold(f64::INFINITY, f64::min)
}

fn draw_bowl(cv: &mut Canvas, bowl: &BowlConfig) {
    if bowl.is_transparent() {
        for r in bowl.solids() {
            cv.rect(r, bowl.material_color);
        }
    } else {
        let (x0, x1) = bowl.outer_x();
        cv.rect([x0, 0.0, x1, bowl.depth], bowl.material_color);
    }
}

/// Pixels covered by the bowl, before anything is painted over it.
pub fn bowl_coverage(bowl: &BowlConfig, cam: Camera) -> Mask {
    let mut img = Image::filled(cam.height, cam.width, [0, 0, 0]);
    let mut marker = bowl.clone();
    marker.material_color = [255, 255, 255];
    draw_bowl(&mut Canvas { cam, img: &mut img }, &marker);
    Mask {
        height: cam.height,
        width: cam.width,
        data: img.data.chunks_exact(3).map(|p| (p[0] == 255) as u8).collect(),
    }
}

pub fn render(world: &WorldState, cam: Camera) -> Image {
    let mut img = Image::filled(cam.height, cam.width, BACKGROUND);
    let mut cv = Canvas { cam, img: &mut img };
    // table: everything below y = 0
    for row in 0..cam.height {
        if cam.unproject(row, 0).1 < 0.0 {
            for col in 0..cam.width {
                cv.img.set(row, col, TABLE);
            }
        }
    }
    for d in &world.distractors {
        let (w, h) = d.shape.size();
        let x = d.x;
        match d.shape {
            DistractorShape::Bottle => {
                cv.rect([x - w / 2.0, 0.0, x + w / 2.0, 0.7 * h], d.color);
                cv.rect([x - w / 5.0, 0.7 * h, x + w / 5.0, 0.93 * h], d.color);
                cv.rect([x - w / 5.0, 0.93 * h, x + w / 5.0, h], BOTTLE_CAP);
            }
            DistractorShape::Apple => {
                cv.disc((x, h / 2.0), w / 2.0, d.color);
                cv.segment((x, h * 0.95), (x + 0.006, h * 1.2), 0.002, APPLE_STEM);
            }
            DistractorShape::JellyJar => {
                cv.rect([x - w / 2.0, 0.0, x + w / 2.0, 0.85 * h], d.color);
                cv.rect([x - w / 2.0 - 0.003, 0.85 * h, x + w / 2.0 + 0.003, h], JAR_LID);
            }
            DistractorShape::Knife => {
                cv.rect([x - w / 2.0, 0.0, x + w / 6.0, h * 0.5], d.color);
                cv.rect([x + w / 6.0, 0.0, x + w / 2.0, h], KNIFE_HANDLE);
            }
        }
    }
    if let Some(bowl) = &world.bowl {
        draw_bowl(&mut cv, bowl);
    }
    for p in &world.particles {
        cv.disc(p.position, PARTICLE_RADIUS, world.food.color);
    }
    let k = world.kinematics();
    for i in 0..N_JOINTS - 1 {
        cv.segment(k.points[i], k.points[i + 1], LINK_HALF_WIDTH, ARM);
    }
    let frame = world.spoon();
    let (head_start, tip) = frame.head();
    cv.segment(k.wrist(), head_start, HANDLE_HALF_WIDTH, SPOON);
    cv.segment(head_start, tip, HEAD_HALF_WIDTH, SPOON);
    img
}

/// Filled bounding box of the bowl's rendered footprint.
pub fn bowl_mask(world: &WorldState, cam: Camera) -> Result<Mask, SimError> {
    let bowl = world.bowl.as_ref().ok_or(SimError::NoBowl)?;
    let cov = bowl_coverage(bowl, cam);
    let (r0, r1, c0, c1) = cov.bbox().ok_or(SimError::NoBowl)?;
    let mut data = vec![0u8; cam.height * cam.width];
    for r in r0..=r1 {
        data[r * cam.width + c0..=r * cam.width + c1].fill(1);
    }
    Ok(Mask {
        height: cam.height,
        width: cam.width,
        data,
    })
}
