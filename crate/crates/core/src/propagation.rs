//! Single-instance mask propagation between adjacent frames.
//!
//! The probability map is first carried into the target frame by flow
//! warping. The warped map's box (slightly enlarged for context) then selects
//! a patch of the target image, the flow and the coarse map; all three are
//! resized to a fixed size and handed to a [`MaskRefiner`]. The refined patch
//! is resized back and written into an otherwise empty map.

use crate::bbox::{enlarge_box, prob_box, BBox};
use crate::error::{Error, Result};
use crate::flow::{warp_bilinear, FlowEstimator};
use crate::grid::{FlowField, Frame, FrameRef, Grid, ProbMap, Sample};

/// Threshold used to derive boxes from probability maps.
pub const BOX_THRESHOLD: f32 = 0.5;

/// Where a normalized patch came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchGeometry {
    /// Box in the full image, after any context enlargement.
    pub source: BBox,
    /// Normalized patch size `(width, height)`.
    pub size: (usize, usize),
}

impl PatchGeometry {
    pub fn new(source: BBox, size: (usize, usize)) -> Self {
        Self { source, size }
    }

    /// Patch pixels per image pixel along x and y.
    pub fn scale(&self) -> (f32, f32) {
        (
            self.size.0 as f32 / self.source.width() as f32,
            self.size.1 as f32 / self.source.height() as f32,
        )
    }
}

/// Identifies the patch being refined.
#[derive(Clone, Copy, Debug)]
pub struct PatchContext {
    /// Index of the frame the patch was cut from.
    pub frame: usize,
    /// Zero-based instance index.
    pub instance: usize,
    pub geometry: PatchGeometry,
}

/// The three size-normalized patches fed to a refiner.
#[derive(Clone, Copy, Debug)]
pub struct RefineInput<'a> {
    pub rgb: &'a Frame,
    pub flow: &'a FlowField,
    pub coarse: &'a ProbMap,
    pub context: PatchContext,
}

/// Turns a coarse probability patch into a refined one.
///
/// Output must match the input patch size with every value in `[0, 1]`.
pub trait MaskRefiner: Send + Sync {
    fn name(&self) -> &str;
    fn refine(&self, input: &RefineInput<'_>) -> Result<ProbMap>;
}

#[derive(Clone, Copy, Debug)]
pub struct PropagationConfig {
    /// Side length of the square normalized patch.
    pub patch_size: usize,
    /// Per-dimension enlargement applied to the warped map's box.
    pub context_factor: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            patch_size: 256,
            context_factor: 1.25,
        }
    }
}

/// Resamples the contents of `b` to `size`.
pub fn crop_resize<T: Sample>(grid: &Grid<T>, b: BBox, size: (usize, usize)) -> Grid<T> {
    grid.resample_region(b, size.0, size.1)
}

/// Like [`crop_resize`], with vectors rescaled into patch pixel units.
pub fn crop_resize_flow(flow: &FlowField, b: BBox, size: (usize, usize)) -> FlowField {
    let (sx, sy) = PatchGeometry::new(b, size).scale();
    crop_resize(flow, b, size).map(|[dx, dy]| [dx * sx, dy * sy])
}

/// Resizes `patch` to `b` and writes it into a zero map of the given size.
pub fn uncrop(patch: &ProbMap, b: BBox, width: usize, height: usize) -> ProbMap {
    let mut out = ProbMap::zeros(width, height);
    let back = patch.resize(b.width(), b.height());
    out.paste(&back, b.x0, b.y0);
    out
}

/// Invokes `refiner` and checks its output contract.
pub(crate) fn run_refiner(refiner: &dyn MaskRefiner, input: &RefineInput<'_>) -> Result<ProbMap> {
    let out = refiner.refine(input)?;
    let expected = input.context.geometry.size;
    if out.dims() != expected {
        return Err(Error::RefinerContract {
            refiner: refiner.name().to_string(),
            reason: format!("returned {:?}, expected {:?}", out.dims(), expected),
        });
    }
    if !out.is_valid_probability() {
        return Err(Error::RefinerContract {
            refiner: refiner.name().to_string(),
            reason: "returned values outside [0, 1]".into(),
        });
    }
    Ok(out)
}

/// Propagates instance `instance`'s map from `src` to the adjacent frame `dst`.
///
/// Returns the all-zero map when the warped map has no pixel above 0.5.
pub fn propagate_mask(
    src: FrameRef<'_>,
    dst: FrameRef<'_>,
    prob: &ProbMap,
    instance: usize,
    flow: &dyn FlowEstimator,
    refiner: &dyn MaskRefiner,
    cfg: &PropagationConfig,
) -> Result<ProbMap> {
    let dims = dst.frame.dims();
    src.frame.ensure_dims(dims)?;
    prob.ensure_dims(dims)?;
    let (w, h) = dims;

    if prob.is_zero() {
        return Ok(ProbMap::zeros(w, h));
    }

    let field = flow.estimate(dst, src)?;
    field.ensure_dims(dims)?;
    let coarse = warp_bilinear(prob, &field)?;
    let Some(tight) = prob_box(&coarse, BOX_THRESHOLD) else {
        return Ok(ProbMap::zeros(w, h));
    };
    let b = enlarge_box(tight, cfg.context_factor, w, h);
    let size = (cfg.patch_size, cfg.patch_size);

    let rgb = crop_resize(dst.frame, b, size);
    let flow_patch = crop_resize_flow(&field, b, size);
    let coarse_patch = crop_resize(&coarse, b, size);
    let refined = run_refiner(
        refiner,
        &RefineInput {
            rgb: &rgb,
            flow: &flow_patch,
            coarse: &coarse_patch,
            context: PatchContext {
                frame: dst.index,
                instance,
                geometry: PatchGeometry::new(b, size),
            },
        },
    )?;
    Ok(uncrop(&refined, b, w, h))
}

/// Returns the coarse patch unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRefiner;

impl MaskRefiner for IdentityRefiner {
    fn name(&self) -> &str {
        "identity"
    }

    fn refine(&self, input: &RefineInput<'_>) -> Result<ProbMap> {
        Ok(input.coarse.clone())
    }
}

/// Color-likelihood refiner.
///
/// Foreground and background color histograms are collected from the
/// confidently labelled pixels of the coarse map. Each pixel's foreground
/// probability is the ratio of the two histogram likelihoods, averaged with
/// the coarse value and smoothed by one 3x3 box pass. When either histogram
/// has too little support the coarse patch is returned as is.
#[derive(Clone, Copy, Debug)]
pub struct ColorModelRefiner {
    pub foreground_threshold: f32,
    pub background_threshold: f32,
    pub min_support: usize,
    pub bins_per_channel: usize,
}

impl Default for ColorModelRefiner {
    fn default() -> Self {
        Self {
            foreground_threshold: 0.8,
            background_threshold: 0.2,
            min_support: 16,
            bins_per_channel: 8,
        }
    }
}

impl ColorModelRefiner {
    fn bin(&self, rgb: [f32; 3]) -> usize {
        let n = self.bins_per_channel;
        rgb.iter().fold(0, |acc, &c| {
            let b = ((c.clamp(0.0, 1.0) * n as f32) as usize).min(n - 1);
            acc * n + b
        })
    }
}

impl MaskRefiner for ColorModelRefiner {
    fn name(&self) -> &str {
        "color_model"
    }

    fn refine(&self, input: &RefineInput<'_>) -> Result<ProbMap> {
        let (rgb, coarse) = (input.rgb, input.coarse);
        rgb.ensure_dims(coarse.dims())?;
        let n = self.bins_per_channel.max(1).pow(3);
        let mut fg = vec![0usize; n];
        let mut bg = vec![0usize; n];
        let (mut fg_count, mut bg_count) = (0usize, 0usize);
        for (&px, &p) in rgb.data().iter().zip(coarse.data()) {
            if p > self.foreground_threshold {
                fg[self.bin(px)] += 1;
                fg_count += 1;
            } else if p < self.background_threshold {
                bg[self.bin(px)] += 1;
                bg_count += 1;
            }
        }
        if fg_count < self.min_support || bg_count < self.min_support {
            return Ok(coarse.clone());
        }

        let blended = Grid::from_vec(
            coarse.width(),
            coarse.height(),
            rgb.data()
                .iter()
                .zip(coarse.data())
                .map(|(&px, &p)| {
                    let b = self.bin(px);
                    let lf = fg[b] as f64 / fg_count as f64;
                    let lb = bg[b] as f64 / bg_count as f64;
                    let ratio = if lf + lb > 0.0 { lf / (lf + lb) } else { 0.5 };
                    ((ratio as f32 + p) * 0.5).clamp(0.0, 1.0)
                })
                .collect(),
        )?;
        Ok(box_smooth(&blended))
    }
}

/// 3x3 mean over the in-bounds neighbourhood.
pub(crate) fn box_smooth(map: &ProbMap) -> ProbMap {
    let (w, h) = map.dims();
    ProbMap::from_fn(w, h, |x, y| {
        let mut sum = 0.0f32;
        let mut count = 0u32;
        for yy in y.saturating_sub(1)..(y + 2).min(h) {
            for xx in x.saturating_sub(1)..(x + 2).min(w) {
                sum += map.get(xx, yy);
                count += 1;
            }
        }
        (sum / count as f32).clamp(0.0, 1.0)
    })
}
