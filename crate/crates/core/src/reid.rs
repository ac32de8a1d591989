//! Instance re-identification.
//!
//! Candidate boxes are proposed in a frame, described, and compared with an
//! instance template by cosine similarity. The most similar candidate is
//! accepted only when it is similar enough to the template *and* disagrees
//! with the current prediction; otherwise the score is reported as `-1`.

use rayon::prelude::*;

use crate::bbox::{iou, prob_box, BBox};
use crate::error::{Error, Result};
use crate::flow::integral_image;
use crate::grid::{Frame, FrameRef, ProbMap};
use crate::propagation::BOX_THRESHOLD;

/// Score reported for a rejected retrieval.
pub const REJECTED: f64 = -1.0;

/// A unit-norm appearance descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor(Vec<f32>);

impl Descriptor {
    /// L2-normalizes `values`.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("descriptor has non-finite components".into()));
        }
        let norm = values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroDescriptor);
        }
        Ok(Self(values.into_iter().map(|v| (v as f64 / norm) as f32).collect()))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn similarity(&self, other: &Descriptor) -> Result<f64> {
        cosine_similarity(&self.0, &other.0)
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DescriptorLength(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroDescriptor);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Maps an image patch to a descriptor.
pub trait DescriptorExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn describe(&self, patch: &Frame) -> Result<Descriptor>;
}

/// Color and gradient-orientation histograms.
///
/// Three 16-bin per-channel color histograms followed by an 8-bin
/// magnitude-weighted gradient orientation histogram, 56 values in all. Each
/// block is L1-normalized before the whole vector is L2-normalized. A patch
/// without any gradient gets a uniform orientation block.
#[derive(Clone, Copy, Debug, Default)]
pub struct HistogramDescriptor;

pub const COLOR_BINS: usize = 16;
pub const ORIENTATION_BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = 3 * COLOR_BINS + ORIENTATION_BINS;

pub fn histogram_descriptor(patch: &Frame) -> Result<Descriptor> {
    let mut v = vec![0.0f64; DESCRIPTOR_LEN];
    for px in patch.data() {
        for (c, &value) in px.iter().enumerate() {
            let bin = ((value.clamp(0.0, 1.0) * COLOR_BINS as f32) as usize).min(COLOR_BINS - 1);
            v[c * COLOR_BINS + bin] += 1.0;
        }
    }

    let (w, h) = patch.dims();
    let gray = patch.map(|p| (p[0] + p[1] + p[2]) / 3.0);
    let orient = &mut v[3 * COLOR_BINS..];
    let sector = std::f64::consts::TAU / ORIENTATION_BINS as f64;
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as i64, y as i64);
            let gx = (gray.get_clamped(xi + 1, yi) - gray.get_clamped(xi - 1, yi)) as f64 / 2.0;
            let gy = (gray.get_clamped(xi, yi + 1) - gray.get_clamped(xi, yi - 1)) as f64 / 2.0;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag > 0.0 {
                let angle = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
                let bin = ((angle / sector) as usize).min(ORIENTATION_BINS - 1);
                orient[bin] += mag;
            }
        }
    }
    if orient.iter().sum::<f64>() <= 1e-12 {
        orient.fill(1.0);
    }

    let (color, orient) = v.split_at_mut(3 * COLOR_BINS);
    for block in color.chunks_mut(COLOR_BINS).chain(std::iter::once(orient)) {
        let s: f64 = block.iter().sum();
        if s > 0.0 {
            block.iter_mut().for_each(|b| *b /= s);
        }
    }
    Descriptor::new(v.into_iter().map(|x| x as f32).collect())
}

impl DescriptorExtractor for HistogramDescriptor {
    fn name(&self) -> &str {
        "histogram"
    }

    fn describe(&self, patch: &Frame) -> Result<Descriptor> {
        histogram_descriptor(patch)
    }
}

/// First-frame appearance record of one instance.
#[derive(Clone, Debug)]
pub struct Template {
    /// Zero-based instance index.
    pub instance: usize,
    /// Tight box of the first-frame mask.
    pub bbox: BBox,
    pub image: Frame,
    pub prob: ProbMap,
    pub descriptor: Descriptor,
}

impl Template {
    pub fn from_first_frame(
        frame: &Frame,
        prob: &ProbMap,
        instance: usize,
        extractor: &dyn DescriptorExtractor,
    ) -> Result<Self> {
        prob.ensure_dims(frame.dims())?;
        let bbox = prob_box(prob, BOX_THRESHOLD).ok_or(Error::EmptyFirstMask { instance })?;
        let image = frame.crop(bbox);
        let descriptor = extractor.describe(&image)?;
        Ok(Self {
            instance,
            bbox,
            prob: prob.crop(bbox),
            image,
            descriptor,
        })
    }
}

/// A proposed box and its similarity to a template.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    pub similarity: f64,
}

/// Proposes candidate boxes that may contain a template's instance.
pub trait ProposalGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn propose(&self, frame: FrameRef<'_>, template: &Template) -> Result<Vec<BBox>>;
}

/// Multi-scale normalized cross-correlation against the template image.
#[derive(Clone, Debug)]
pub struct NccProposals {
    pub scales: Vec<f64>,
    /// Minimum correlation of a local maximum.
    pub threshold: f64,
    /// Boxes overlapping a better one by more than this are suppressed.
    pub nms_iou: f64,
    pub max_proposals: usize,
}

impl Default for NccProposals {
    fn default() -> Self {
        Self {
            scales: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            threshold: 0.3,
            nms_iou: 0.5,
            max_proposals: 10,
        }
    }
}

/// Zero-mean normalized cross-correlation of `template` at every placement in `frame`.
///
/// The returned grid is indexed by the top-left corner of the placement and
/// has size `(W - w + 1) x (H - h + 1)`. Placements over a flat window score 0.
pub fn ncc_map(frame: &Frame, template: &Frame) -> Option<crate::grid::Grid<f64>> {
    let (fw, fh) = frame.dims();
    let (tw, th) = template.dims();
    if tw > fw || th > fh {
        return None;
    }
    let n = (tw * th) as f64;
    let mut mean = [0.0f64; 3];
    for p in template.data() {
        for c in 0..3 {
            mean[c] += p[c] as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centered: Vec<[f64; 3]> = template
        .data()
        .iter()
        .map(|p| [p[0] as f64 - mean[0], p[1] as f64 - mean[1], p[2] as f64 - mean[2]])
        .collect();
    let t_energy: f64 = centered.iter().flatten().map(|v| v * v).sum();
    if t_energy < 1e-12 {
        return None;
    }

    let sums: Vec<_> = (0..3)
        .map(|c| integral_image(fw, fh, frame.data().iter().map(move |p| p[c] as f64)))
        .collect();
    let squares: Vec<_> = (0..3)
        .map(|c| integral_image(fw, fh, frame.data().iter().map(move |p| (p[c] as f64).powi(2))))
        .collect();

    let (ow, oh) = (fw - tw + 1, fh - th + 1);
    let rows: Vec<Vec<f64>> = (0..oh)
        .into_par_iter()
        .map(|y| {
            (0..ow)
                .map(|x| {
                    let mut var = 0.0;
                    for c in 0..3 {
                        let s = sums[c](x, y, x + tw, y + th);
                        let s2 = squares[c](x, y, x + tw, y + th);
                        var += s2 - s * s / n;
                    }
                    if var < 1e-9 {
                        return 0.0;
                    }
                    let mut num = 0.0f64;
                    for v in 0..th {
                        let row = &frame.data()[(y + v) * fw + x..(y + v) * fw + x + tw];
                        let trow = &centered[v * tw..(v + 1) * tw];
                        for (p, t) in row.iter().zip(trow) {
                            num += p[0] as f64 * t[0] + p[1] as f64 * t[1] + p[2] as f64 * t[2];
                        }
                    }
                    (num / (t_energy * var).sqrt()).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    crate::grid::Grid::from_vec(ow, oh, rows.into_iter().flatten().collect()).ok()
}

/// Match score of a constant-color `tw x th` template at every placement.
///
/// Correlation is undefined for a template without variance. Instead the RMS
/// color distance inside the box is compared with the distance on the
/// closest-matching one-pixel strip along its sides:
/// `(d_side - d_in) / (d_side + d_in)`. Only a box that covers a
/// same-colored region exactly reaches 1; boxes nested inside such a region
/// score 0.
pub fn flat_match_map(frame: &Frame, color: [f64; 3], tw: usize, th: usize) -> Option<crate::grid::Grid<f64>> {
    let (fw, fh) = frame.dims();
    if tw == 0 || th == 0 || tw > fw || th > fh {
        return None;
    }
    let sums: Vec<_> = (0..3)
        .map(|c| integral_image(fw, fh, frame.data().iter().map(move |p| p[c] as f64)))
        .collect();
    let squares: Vec<_> = (0..3)
        .map(|c| integral_image(fw, fh, frame.data().iter().map(move |p| (p[c] as f64).powi(2))))
        .collect();
    // Summed squared distance to `color` over a box, and its pixel count.
    let sq = |x0: usize, y0: usize, x1: usize, y1: usize| {
        let n = ((x1 - x0) * (y1 - y0)) as f64;
        let mut acc = 0.0;
        for c in 0..3 {
            acc += squares[c](x0, y0, x1, y1) - 2.0 * color[c] * sums[c](x0, y0, x1, y1) + n * color[c] * color[c];
        }
        (acc.max(0.0), n)
    };
    // Integral sums cancel to ~1e-6 noise where the true distance is 0.
    let rms = |x0: usize, y0: usize, x1: usize, y1: usize| {
        let (s, n) = sq(x0, y0, x1, y1);
        let d = (s / (3.0 * n)).sqrt();
        if d < 1e-4 {
            0.0
        } else {
            d
        }
    };
    let (ow, oh) = (fw - tw + 1, fh - th + 1);
    Some(crate::grid::Grid::from_fn(ow, oh, |x, y| {
        let (x1, y1) = (x + tw, y + th);
        let d_in = rms(x, y, x1, y1);
        let sides = [
            (x > 0).then(|| rms(x - 1, y, x, y1)),
            (x1 < fw).then(|| rms(x1, y, x1 + 1, y1)),
            (y > 0).then(|| rms(x, y - 1, x1, y)),
            (y1 < fh).then(|| rms(x, y1, x1, y1 + 1)),
        ];
        let Some(d_ring) = sides.into_iter().flatten().reduce(f64::min) else {
            return 1.0 - d_in;
        };
        if d_ring + d_in == 0.0 {
            0.0
        } else {
            (d_ring - d_in) / (d_ring + d_in)
        }
    }))
}

/// The template's color when it has no variance to speak of.
fn flat_color(template: &Frame) -> Option<[f64; 3]> {
    let n = template.data().len() as f64;
    let mut mean = [0.0f64; 3];
    for p in template.data() {
        for c in 0..3 {
            mean[c] += p[c] as f64 / n;
        }
    }
    template
        .data()
        .iter()
        .all(|p| (0..3).all(|c| (p[c] as f64 - mean[c]).abs() < 1e-6))
        .then_some(mean)
}

impl NccProposals {
    /// Proposals with their correlation scores, best first.
    pub fn scored(&self, frame: &Frame, template: &Frame) -> Vec<(BBox, f64)> {
        let (tw0, th0) = template.dims();
        let mut peaks: Vec<(BBox, f64)> = Vec::new();
        for &scale in &self.scales {
            let tw = (tw0 as f64 * scale).round() as usize;
            let th = (th0 as f64 * scale).round() as usize;
            if tw < 2 || th < 2 {
                continue;
            }
            let scaled = template.resize(tw, th);
            let map = match flat_color(&scaled) {
                Some(color) => flat_match_map(frame, color, tw, th),
                None => ncc_map(frame, &scaled),
            };
            let Some(map) = map else {
                continue;
            };
            let (mw, mh) = map.dims();
            for y in 0..mh {
                for x in 0..mw {
                    let s = map.get(x, y);
                    if s <= self.threshold {
                        continue;
                    }
                    let is_peak = (-1i64..=1)
                        .flat_map(|dy| (-1i64..=1).map(move |dx| (dx, dy)))
                        .filter(|&d| d != (0, 0))
                        .all(|(dx, dy)| {
                            map.get_signed(x as i64 + dx, y as i64 + dy)
                                .map_or(true, |n| n <= s)
                        });
                    if is_peak {
                        peaks.push((BBox { x0: x, y0: y, x1: x + tw, y1: y + th }, s));
                    }
                }
            }
        }
        peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut kept: Vec<(BBox, f64)> = Vec::new();
        for (b, s) in peaks {
            if kept.len() >= self.max_proposals {
                break;
            }
            if kept.iter().all(|(k, _)| iou(k, &b) <= self.nms_iou) {
                kept.push((b, s));
            }
        }
        kept
    }
}

impl ProposalGenerator for NccProposals {
    fn name(&self) -> &str {
        "ncc"
    }

    fn propose(&self, frame: FrameRef<'_>, template: &Template) -> Result<Vec<BBox>> {
        Ok(self
            .scored(frame.frame, &template.image)
            .into_iter()
            .map(|(b, _)| b)
            .collect())
    }
}

/// The two acceptance thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReidGate {
    /// Minimum template similarity, exclusive.
    pub rho_reid: f64,
    /// Maximum IoU with the current prediction, exclusive.
    pub rho_occ: f64,
}

impl Default for ReidGate {
    fn default() -> Self {
        Self {
            rho_reid: 0.7,
            rho_occ: 0.3,
        }
    }
}

/// Best candidate and its score, or [`REJECTED`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReidOutcome {
    pub bbox: BBox,
    pub score: f64,
}

impl ReidOutcome {
    pub fn is_accepted(&self) -> bool {
        self.score != REJECTED
    }
}

/// Describes every proposed box and scores it against the template.
pub fn score_candidates(
    frame: FrameRef<'_>,
    template: &Template,
    generator: &dyn ProposalGenerator,
    extractor: &dyn DescriptorExtractor,
) -> Result<Vec<Candidate>> {
    let (w, h) = frame.frame.dims();
    generator
        .propose(frame, template)?
        .into_iter()
        .map(|bbox| {
            if !bbox.fits(w, h) {
                return Err(Error::InvalidInput(format!(
                    "generator `{}` proposed {bbox:?} outside a {w}x{h} frame",
                    generator.name()
                )));
            }
            let d = extractor.describe(&frame.frame.crop(bbox))?;
            Ok(Candidate {
                bbox,
                similarity: d.similarity(&template.descriptor)?,
            })
        })
        .collect()
}

/// Picks the most similar candidate and applies both gates.
///
/// `current` is the box of the current prediction; a lost instance has none,
/// which counts as zero overlap. Ties in similarity go to the smaller box in
/// lexicographic order.
pub fn select_and_gate(candidates: &[Candidate], current: Option<BBox>, gate: ReidGate) -> ReidOutcome {
    let Some(best) = candidates.iter().copied().reduce(|best, c| {
        if c.similarity > best.similarity || (c.similarity == best.similarity && c.bbox < best.bbox) {
            c
        } else {
            best
        }
    }) else {
        return ReidOutcome {
            bbox: BBox { x0: 0, y0: 0, x1: 1, y1: 1 },
            score: REJECTED,
        };
    };
    let overlap = current.map_or(0.0, |b| iou(&best.bbox, &b));
    let score = if best.similarity > gate.rho_reid && overlap < gate.rho_occ {
        best.similarity
    } else {
        REJECTED
    };
    ReidOutcome {
        bbox: best.bbox,
        score,
    }
}

/// Tries to retrieve the template's instance in `frame` given its current map.
pub fn reidentify(
    frame: FrameRef<'_>,
    prob: &ProbMap,
    template: &Template,
    generator: &dyn ProposalGenerator,
    extractor: &dyn DescriptorExtractor,
    gate: ReidGate,
) -> Result<ReidOutcome> {
    prob.ensure_dims(frame.frame.dims())?;
    let candidates = score_candidates(frame, template, generator, extractor)?;
    Ok(select_and_gate(&candidates, prob_box(prob, BOX_THRESHOLD), gate))
}
