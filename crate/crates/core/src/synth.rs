//! Synthetic scenes with analytic ground truth.
//!
//! A scene is a textured static background with moving discs and rectangles
//! and static occluder bands drawn on top. Ground-truth label maps and flow
//! follow directly from the scene description, which makes it possible to
//! plug ground-truth ("oracle") components into the engine and check the
//! orchestration independently of perception quality.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::flow::FlowEstimator;
use crate::grid::{FlowField, Frame, FrameRef, Grid, LabelMap, ProbMap, Rgb, VideoSequence};
use crate::propagation::{crop_resize, MaskRefiner, RefineInput};
use crate::reid::{ProposalGenerator, Template};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disc { radius: f64 },
    Rectangle { width: f64, height: f64 },
}

impl Shape {
    /// Half extents along x and y.
    fn half_extent(&self) -> (f64, f64) {
        match *self {
            Shape::Disc { radius } => (radius, radius),
            Shape::Rectangle { width, height } => (width / 2.0, height / 2.0),
        }
    }

    /// Whether the pixel centered at `(px, py)` lies inside the shape centered at `(cx, cy)`.
    fn covers(&self, cx: f64, cy: f64, px: f64, py: f64) -> bool {
        let (dx, dy) = (px - cx, py - cy);
        match *self {
            Shape::Disc { radius } => dx * dx + dy * dy <= radius * radius,
            Shape::Rectangle { width, height } => dx.abs() <= width / 2.0 && dy.abs() <= height / 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    /// `start + t * velocity`
    Linear { start: [f64; 2], velocity: [f64; 2] },
    /// `center + amplitude * sin(2π t / period + phase)` per axis
    Sinusoidal {
        center: [f64; 2],
        amplitude: [f64; 2],
        period: f64,
        phase: f64,
    },
}

impl Trajectory {
    pub fn position(&self, t: usize) -> [f64; 2] {
        let t = t as f64;
        match *self {
            Trajectory::Linear { start, velocity } => {
                [start[0] + t * velocity[0], start[1] + t * velocity[1]]
            }
            Trajectory::Sinusoidal {
                center,
                amplitude,
                period,
                phase,
            } => {
                let s = (std::f64::consts::TAU * t / period + phase).sin();
                [center[0] + amplitude[0] * s, center[1] + amplitude[1] * s]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub color: Rgb,
    pub trajectory: Trajectory,
    /// Inclusive frame ranges in which the object exists; empty means always.
    #[serde(default)]
    pub visible: Vec<[usize; 2]>,
}

impl ObjectSpec {
    pub fn is_visible(&self, t: usize) -> bool {
        self.visible.is_empty() || self.visible.iter().any(|&[a, b]| t >= a && t <= b)
    }
}

/// A static rectangle drawn above every object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occluder {
    pub bbox: BBox,
    pub color: Rgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
    #[serde(default)]
    pub background_seed: u64,
}

/// Layer value marking occluder pixels.
const OCCLUDER: u8 = u8::MAX;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SceneValidation(m));
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be nonzero".into());
        }
        if self.frames < 2 {
            return bad(format!("need at least 2 frames, got {}", self.frames));
        }
        if self.objects.is_empty() || self.objects.len() >= OCCLUDER as usize {
            return bad(format!("need 1 to 254 objects, got {}", self.objects.len()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let (hx, hy) = o.shape.half_extent();
            if !(hx > 0.0 && hy > 0.0) {
                return bad(format!("object {i} has an empty shape"));
            }
            if o.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return bad(format!("object {i} color outside [0, 1]"));
            }
            if let Trajectory::Sinusoidal { period, .. } = o.trajectory {
                if !(period > 0.0) {
                    return bad(format!("object {i} has a non-positive period"));
                }
            }
            for &[a, b] in &o.visible {
                if a > b || b >= self.frames {
                    return bad(format!("object {i} has visibility interval [{a}, {b}] outside the sequence"));
                }
            }
            for t in (0..self.frames).filter(|&t| o.is_visible(t)) {
                let [cx, cy] = o.trajectory.position(t);
                if cx - hx < 0.0 || cy - hy < 0.0 || cx + hx > self.width as f64 || cy + hy > self.height as f64 {
                    return bad(format!("object {i} leaves the frame at t = {t} while visible"));
                }
            }
        }
        for (i, occ) in self.occluders.iter().enumerate() {
            if !occ.bbox.fits(self.width, self.height) {
                return bad(format!("occluder {i} does not fit in the image"));
            }
        }
        Ok(())
    }

    /// Topmost layer per pixel at frame `t`: 0 background, `k + 1` object `k`, 255 occluder.
    fn layers(&self, t: usize) -> Grid<u8> {
        let mut layers = Grid::filled(self.width, self.height, 0u8);
        for (k, o) in self.objects.iter().enumerate() {
            if !o.is_visible(t) {
                continue;
            }
            let [cx, cy] = o.trajectory.position(t);
            let (hx, hy) = o.shape.half_extent();
            let x0 = (cx - hx).floor().max(0.0) as usize;
            let y0 = (cy - hy).floor().max(0.0) as usize;
            let x1 = ((cx + hx).ceil() as usize + 1).min(self.width);
            let y1 = ((cy + hy).ceil() as usize + 1).min(self.height);
            for y in y0..y1 {
                for x in x0..x1 {
                    if o.shape.covers(cx, cy, x as f64 + 0.5, y as f64 + 0.5) {
                        layers.set(x, y, k as u8 + 1);
                    }
                }
            }
        }
        for occ in &self.occluders {
            for y in occ.bbox.y0..occ.bbox.y1 {
                for x in occ.bbox.x0..occ.bbox.x1 {
                    layers.set(x, y, OCCLUDER);
                }
            }
        }
        layers
    }
}

/// Analytic flow on frame `to`'s grid pointing to where each pixel's content is in frame `from`.
///
/// Use it to warp a map of frame `from` into frame `to`. Object pixels move
/// with their object; background and occluders are static.
pub fn oracle_flow(spec: &SyntheticSpec, from: usize, to: usize) -> Result<FlowField> {
    for index in [from, to] {
        if index >= spec.frames {
            return Err(Error::FrameIndex {
                index,
                len: spec.frames,
            });
        }
    }
    let layers = spec.layers(to);
    let shifts: Vec<[f32; 2]> = spec
        .objects
        .iter()
        .map(|o| {
            let a = o.trajectory.position(from);
            let b = o.trajectory.position(to);
            [(a[0] - b[0]) as f32, (a[1] - b[1]) as f32]
        })
        .collect();
    Ok(layers.map(|l| match l {
        0 | OCCLUDER => [0.0, 0.0],
        k => shifts[k as usize - 1],
    }))
}

fn quantize(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn background(spec: &SyntheticSpec, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ spec.background_seed.rotate_left(29));
    const CELL: usize = 6;
    let cw = spec.width.div_ceil(CELL) + 1;
    let ch = spec.height.div_ceil(CELL) + 1;
    let coarse: Frame = Grid::from_fn(cw, ch, |_, _| {
        [rng.gen_range(0.35..0.65), rng.gen_range(0.35..0.65), rng.gen_range(0.35..0.65)]
    });
    Frame::from_fn(spec.width, spec.height, |x, y| {
        let base = coarse.sample_clamped(x as f32 / CELL as f32, y as f32 / CELL as f32);
        base.map(|c| quantize((c + rng.gen_range(-0.03..0.03)).clamp(0.3, 0.7)))
    })
}

/// A rendered scene with its ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SyntheticSpec,
    pub seed: u64,
    pub sequence: VideoSequence,
    /// Per-frame labels; object `k` carries label `k + 1`.
    pub ground_truth: Vec<LabelMap>,
    /// `flows[t - 1]` carries frame `t - 1` into frame `t`.
    pub flows: Vec<FlowField>,
}

/// Renders `spec`. The output is a pure function of `(spec, seed)`.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let bg = background(spec, seed);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut ground_truth = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let layers = spec.layers(t);
        let mut frame = bg.clone();
        for (px, &l) in frame.data_mut().iter_mut().zip(layers.data()) {
            match l {
                0 => {}
                OCCLUDER => {}
                k => *px = spec.objects[k as usize - 1].color.map(quantize),
            }
        }
        for occ in &spec.occluders {
            let c = occ.color.map(quantize);
            for y in occ.bbox.y0..occ.bbox.y1 {
                for x in occ.bbox.x0..occ.bbox.x1 {
                    frame.set(x, y, c);
                }
            }
        }
        ground_truth.push(layers.map(|l| if l == OCCLUDER { 0 } else { l }));
        frames.push(frame);
    }
    let flows = (1..spec.frames)
        .map(|t| oracle_flow(spec, t - 1, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        seed,
        sequence: VideoSequence::new(frames)?,
        ground_truth,
        flows,
    })
}

impl SyntheticScene {
    pub fn num_instances(&self) -> usize {
        self.spec.objects.len()
    }

    /// Binary frame-0 masks, one per object.
    pub fn first_masks(&self) -> Vec<ProbMap> {
        (1..=self.num_instances() as u8)
            .map(|l| ProbMap::from_label(&self.ground_truth[0], l))
            .collect()
    }

    /// Frames following the last frame in which `instance` was fully hidden
    /// after having been seen. Empty when the instance never disappears.
    pub fn reappearance_frames(&self, instance: usize) -> Vec<usize> {
        let label = instance as u8 + 1;
        let present: Vec<bool> = self
            .ground_truth
            .iter()
            .map(|g| g.data().contains(&label))
            .collect();
        let Some(first_seen) = present.iter().position(|&p| p) else {
            return Vec::new();
        };
        match (first_seen..present.len()).rev().find(|&t| !present[t]) {
            Some(last_hidden) => (last_hidden + 1..present.len()).collect(),
            None => Vec::new(),
        }
    }
}

/// Ground-truth flow backend.
#[derive(Clone, Debug)]
pub struct OracleFlow {
    scene: Arc<SyntheticScene>,
}

impl OracleFlow {
    pub fn new(scene: Arc<SyntheticScene>) -> Self {
        Self { scene }
    }
}

impl FlowEstimator for OracleFlow {
    fn name(&self) -> &str {
        "oracle"
    }

    fn estimate(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<FlowField> {
        oracle_flow(&self.scene.spec, dst.index, src.index)
    }
}

/// Refiner that answers with the ground-truth mask of the requested instance.
#[derive(Clone, Debug)]
pub struct OracleRefiner {
    scene: Arc<SyntheticScene>,
}

impl OracleRefiner {
    pub fn new(scene: Arc<SyntheticScene>) -> Self {
        Self { scene }
    }
}

impl MaskRefiner for OracleRefiner {
    fn name(&self) -> &str {
        "oracle"
    }

    fn refine(&self, input: &RefineInput<'_>) -> Result<ProbMap> {
        let ctx = input.context;
        let gt = self
            .scene
            .ground_truth
            .get(ctx.frame)
            .ok_or(Error::FrameIndex {
                index: ctx.frame,
                len: self.scene.ground_truth.len(),
            })?;
        let mask = ProbMap::from_label(gt, ctx.instance as u8 + 1);
        Ok(crop_resize(&mask, ctx.geometry.source, ctx.geometry.size))
    }
}

/// Class-agnostic detector returning the box of every visible object.
#[derive(Clone, Debug)]
pub struct OracleProposals {
    scene: Arc<SyntheticScene>,
}

impl OracleProposals {
    pub fn new(scene: Arc<SyntheticScene>) -> Self {
        Self { scene }
    }
}

impl ProposalGenerator for OracleProposals {
    fn name(&self) -> &str {
        "oracle"
    }

    fn propose(&self, frame: FrameRef<'_>, _template: &Template) -> Result<Vec<BBox>> {
        let gt = self.scene.ground_truth.get(frame.index).ok_or(Error::FrameIndex {
            index: frame.index,
            len: self.scene.ground_truth.len(),
        })?;
        Ok((1..=self.scene.num_instances() as u8)
            .filter_map(|l| crate::bbox::prob_box(&ProbMap::from_label(gt, l), 0.5))
            .collect())
    }
}

/// A red disc crossing a static green band that hides it completely in two frames.
pub fn occlusion_scene() -> SyntheticSpec {
    SyntheticSpec {
        width: 128,
        height: 80,
        frames: 16,
        objects: vec![ObjectSpec {
            shape: Shape::Disc { radius: 9.0 },
            color: [0.9, 0.15, 0.15],
            trajectory: Trajectory::Linear {
                start: [20.0, 40.0],
                velocity: [6.0, 0.0],
            },
            visible: Vec::new(),
        }],
        occluders: vec![Occluder {
            bbox: BBox {
                x0: 48,
                y0: 0,
                x1: 80,
                y1: 80,
            },
            color: [0.2, 0.75, 0.3],
        }],
        background_seed: 7,
    }
}

/// Two objects that stay in view for the whole sequence.
pub fn unoccluded_scene() -> SyntheticSpec {
    SyntheticSpec {
        width: 128,
        height: 80,
        frames: 12,
        objects: vec![
            ObjectSpec {
                shape: Shape::Disc { radius: 8.0 },
                color: [0.9, 0.15, 0.15],
                trajectory: Trajectory::Linear {
                    start: [20.0, 24.0],
                    velocity: [4.0, 1.0],
                },
                visible: Vec::new(),
            },
            ObjectSpec {
                shape: Shape::Rectangle {
                    width: 14.0,
                    height: 10.0,
                },
                color: [0.1, 0.2, 0.9],
                trajectory: Trajectory::Sinusoidal {
                    center: [90.0, 56.0],
                    amplitude: [12.0, 4.0],
                    period: 10.0,
                    phase: 0.0,
                },
                visible: Vec::new(),
            },
        ],
        occluders: Vec::new(),
        background_seed: 3,
    }
}

const PALETTE: [Rgb; 6] = [
    [0.9, 0.15, 0.15],
    [0.1, 0.2, 0.9],
    [0.95, 0.85, 0.1],
    [0.85, 0.1, 0.85],
    [0.05, 0.85, 0.85],
    [0.95, 0.95, 0.95],
];

/// A random scene with up to `max_frames` frames and `max_objects` objects,
/// in which every object is visible in frame 0.
pub fn random_spec(seed: u64, max_frames: usize, max_objects: usize) -> SyntheticSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (64usize, 48usize);
    loop {
        let frames = rng.gen_range(2..=max_frames.max(2));
        let k = rng.gen_range(1..=max_objects.max(1));
        let objects = (0..k)
            .map(|i| {
                let shape = if rng.gen_bool(0.5) {
                    Shape::Disc {
                        radius: rng.gen_range(4.0..8.0),
                    }
                } else {
                    Shape::Rectangle {
                        width: rng.gen_range(6.0..14.0),
                        height: rng.gen_range(6.0..14.0),
                    }
                };
                let (hx, hy) = shape.half_extent();
                let span = (frames - 1) as f64;
                let trajectory = if rng.gen_bool(0.5) {
                    let end = [rng.gen_range(hx..w as f64 - hx), rng.gen_range(hy..h as f64 - hy)];
                    let start = [rng.gen_range(hx..w as f64 - hx), rng.gen_range(hy..h as f64 - hy)];
                    Trajectory::Linear {
                        start,
                        velocity: [(end[0] - start[0]) / span.max(1.0), (end[1] - start[1]) / span.max(1.0)],
                    }
                } else {
                    let ax = rng.gen_range(0.0..(w as f64 / 2.0 - hx).min(12.0));
                    let ay = rng.gen_range(0.0..(h as f64 / 2.0 - hy).min(8.0));
                    Trajectory::Sinusoidal {
                        center: [
                            rng.gen_range(hx + ax..w as f64 - hx - ax),
                            rng.gen_range(hy + ay..h as f64 - hy - ay),
                        ],
                        amplitude: [ax, ay],
                        period: rng.gen_range(4.0..16.0),
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    }
                };
                let visible = if frames >= 6 && rng.gen_bool(0.3) {
                    let a = rng.gen_range(1..frames - 3);
                    let b = rng.gen_range(a + 1..frames - 1);
                    vec![[0, a], [b, frames - 1]]
                } else {
                    Vec::new()
                };
                ObjectSpec {
                    shape,
                    color: PALETTE[i % PALETTE.len()],
                    trajectory,
                    visible,
                }
            })
            .collect();
        let occluders = (0..rng.gen_range(0..=2))
            .map(|_| {
                let x0 = rng.gen_range(0..w - 8);
                let x1 = rng.gen_range(x0 + 4..=(x0 + 20).min(w));
                Occluder {
                    bbox: BBox { x0, y0: 0, x1, y1: h },
                    color: [0.2, 0.75, 0.3],
                }
            })
            .collect();
        let spec = SyntheticSpec {
            width: w,
            height: h,
            frames,
            objects,
            occluders,
            background_seed: rng.gen(),
        };
        if spec.validate().is_err() {
            continue;
        }
        let first = spec.layers(0);
        if (1..=k as u8).all(|l| first.data().contains(&l)) {
            return spec;
        }
    }
}
