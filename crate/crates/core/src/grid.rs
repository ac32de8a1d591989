//! Pixel grids shared by every stage of the pipeline.
//!
//! All grids are row-major with `x` growing rightward and `y` downward.
//! Frame indices throughout the crate are zero-based; frame 0 carries the
//! given first-frame masks.

use crate::bbox::BBox;
use crate::error::{Error, Result};

/// One RGB pixel, each channel in `[0, 1]`.
pub type Rgb = [f32; 3];

/// One flow vector `(dx, dy)` in pixels.
pub type Vector = [f32; 2];

/// A dense row-major grid of values.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// An RGB video frame.
pub type Frame = Grid<Rgb>;
/// Per-pixel probability that a pixel belongs to one instance.
pub type ProbMap = Grid<f32>;
/// Per-pixel displacement field.
pub type FlowField = Grid<Vector>;
/// Per-pixel instance label, `0` is background.
pub type LabelMap = Grid<u8>;

impl<T: Copy> Grid<T> {
    /// Builds a grid of the given size filled with `value`.
    ///
    /// Panics when either dimension is zero.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be nonzero");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "grid dimensions must be nonzero, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "grid of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be nonzero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    /// Value at signed coordinates, `None` outside the grid.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> Option<T> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    /// Value at the nearest in-bounds coordinate.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> T {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() == dims {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            })
        }
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Copies the pixels inside `b`. The box must lie inside the grid.
    pub fn crop(&self, b: BBox) -> Grid<T> {
        assert!(b.x1 <= self.width && b.y1 <= self.height, "crop box outside grid");
        let mut data = Vec::with_capacity(b.area());
        for y in b.y0..b.y1 {
            data.extend_from_slice(&self.data[y * self.width + b.x0..y * self.width + b.x1]);
        }
        Grid {
            width: b.width(),
            height: b.height(),
            data,
        }
    }

    /// Writes `patch` into this grid with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, patch: &Grid<T>, x0: usize, y0: usize) {
        assert!(x0 + patch.width <= self.width && y0 + patch.height <= self.height);
        for y in 0..patch.height {
            let dst = (y0 + y) * self.width + x0;
            self.data[dst..dst + patch.width]
                .copy_from_slice(&patch.data[y * patch.width..(y + 1) * patch.width]);
        }
    }
}

/// Values that can be combined linearly for bilinear sampling.
pub trait Sample: Copy + Default + Send + Sync {
    fn scaled(self, w: f32) -> Self;
    fn plus(self, other: Self) -> Self;
}

impl Sample for f32 {
    #[inline]
    fn scaled(self, w: f32) -> Self {
        self * w
    }
    #[inline]
    fn plus(self, other: Self) -> Self {
        self + other
    }
}

impl<const N: usize> Sample for [f32; N]
where
    [f32; N]: Default,
{
    #[inline]
    fn scaled(self, w: f32) -> Self {
        self.map(|v| v * w)
    }
    #[inline]
    fn plus(self, other: Self) -> Self {
        let mut out = self;
        for (o, v) in out.iter_mut().zip(other) {
            *o += v;
        }
        out
    }
}

impl<T: Sample> Grid<T> {
    /// Bilinear sample at `(x, y)` in pixel-center coordinates, clamped to the grid edge.
    #[inline]
    pub fn sample_clamped(&self, x: f32, y: f32) -> T {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = self.get(x0, y0).scaled(1.0 - fx).plus(self.get(x1, y0).scaled(fx));
        let bottom = self.get(x0, y1).scaled(1.0 - fx).plus(self.get(x1, y1).scaled(fx));
        top.scaled(1.0 - fy).plus(bottom.scaled(fy))
    }

    /// Resamples the region `b` of this grid to `width x height` with
    /// pixel-center aligned bilinear interpolation, clamped to the region.
    pub fn resample_region(&self, b: BBox, width: usize, height: usize) -> Grid<T> {
        let sx = b.width() as f32 / width as f32;
        let sy = b.height() as f32 / height as f32;
        let max_x = (b.x1 - 1) as f32;
        let max_y = (b.y1 - 1) as f32;
        Grid::from_fn(width, height, |x, y| {
            let src_x = (b.x0 as f32 + (x as f32 + 0.5) * sx - 0.5).clamp(b.x0 as f32, max_x);
            let src_y = (b.y0 as f32 + (y as f32 + 0.5) * sy - 0.5).clamp(b.y0 as f32, max_y);
            self.sample_clamped(src_x, src_y)
        })
    }

    /// Resamples the whole grid to a new size.
    pub fn resize(&self, width: usize, height: usize) -> Grid<T> {
        if (width, height) == self.dims() {
            return self.clone();
        }
        self.resample_region(BBox::full(self.width, self.height), width, height)
    }
}

impl Frame {
    /// Builds a frame from interleaved 8-bit RGB, dividing each channel by 255.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "expected {} RGB bytes, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(3)
            .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
            .collect();
        Grid::from_vec(width, height, data)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.iter().flatten().all(|c| (0.0..=1.0).contains(c)) {
            Ok(())
        } else {
            Err(Error::InvalidInput("frame channel outside [0, 1]".into()))
        }
    }
}

impl ProbMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid::filled(width, height, 0.0)
    }

    /// Binary map of the pixels carrying `label`.
    pub fn from_label(labels: &LabelMap, label: u8) -> Self {
        labels.map(|l| if l == label { 1.0 } else { 0.0 })
    }

    pub fn is_valid_probability(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Pixels strictly above `threshold`.
    pub fn binarize(&self, threshold: f32) -> Grid<bool> {
        self.map(|v| v > threshold)
    }
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid::filled(width, height, [0.0, 0.0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }
}

impl LabelMap {
    pub fn max_label(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn mask(&self, label: u8) -> Grid<bool> {
        self.map(|l| l == label)
    }
}

/// An ordered list of at least two equally sized frames.
#[derive(Clone, Debug)]
pub struct VideoSequence {
    frames: Vec<Frame>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a sequence needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let dims = frames[0].dims();
        for f in &frames[1..] {
            f.ensure_dims(dims)?;
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> Result<FrameRef<'_>> {
        self.frames
            .get(index)
            .map(|frame| FrameRef { index, frame })
            .ok_or(Error::FrameIndex {
                index,
                len: self.frames.len(),
            })
    }
}

/// A frame together with its position in the sequence.
///
/// Pluggable components receive the index so that ground-truth backends can
/// look up the synthetic scene.
#[derive(Clone, Copy, Debug)]
pub struct FrameRef<'a> {
    pub index: usize,
    pub frame: &'a Frame,
}
