//! Region similarity (Jaccard) and boundary accuracy (F-measure), with the
//! Mean / Recall / Decay summaries used by video segmentation benchmarks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, LabelMap};

pub type Mask = Grid<bool>;

/// `|pred ∩ gt| / |pred ∪ gt|`, 1 when both are empty.
pub fn region_jaccard(pred: &Mask, gt: &Mask) -> Result<f64> {
    gt.ensure_dims(pred.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Mask pixels with at least one 4-neighbour outside the mask or the image.
pub fn boundary_pixels(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    Mask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let (x, y) = (x as i64, y as i64);
        [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
            .iter()
            .any(|&(xx, yy)| !mask.get_signed(xx, yy).unwrap_or(false))
    })
}

const FAR: f64 = 1e20;

/// Lower envelope of parabolas rooted at `f` (one row or column).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let cross = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = cross(q, v[k]);
        // z[0] is -inf, so k never underflows
        while s <= z[k] {
            k -= 1;
            s = cross(q, v[k]);
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
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from each pixel to the nearest `true` pixel.
///
/// Pixels are at a distance of at least `1e20` when there is no feature.
pub fn squared_distance_transform(features: &Mask) -> Grid<f64> {
    let (w, h) = features.dims();
    let mut grid = features.map(|f| if f { 0.0 } else { FAR });
    let mut out = vec![0.0; w.max(h)];
    let mut col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid.get(x, y);
        }
        edt_1d(&col, &mut out[..h]);
        for y in 0..h {
            grid.set(x, y, out[y]);
        }
    }
    for y in 0..h {
        let row = grid.data()[y * w..(y + 1) * w].to_vec();
        edt_1d(&row, &mut out[..w]);
        grid.data_mut()[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}

/// Boundary tolerance used when none is given: `ceil(0.008 * diagonal)`.
pub fn default_tolerance(width: usize, height: usize) -> f64 {
    (0.008 * ((width * width + height * height) as f64).sqrt()).ceil()
}

/// Boundary F-measure with a matching tolerance in pixels.
///
/// A boundary pixel is matched when the other mask's boundary lies within
/// `tolerance` (Euclidean). Two empty masks score 1.
pub fn boundary_f(pred: &Mask, gt: &Mask, tolerance: f64) -> Result<f64> {
    gt.ensure_dims(pred.dims())?;
    let pb = boundary_pixels(pred);
    let gb = boundary_pixels(gt);
    let n_pred = pb.data().iter().filter(|&&b| b).count();
    let n_gt = gb.data().iter().filter(|&&b| b).count();
    if n_pred == 0 && n_gt == 0 {
        return Ok(1.0);
    }
    if n_pred == 0 || n_gt == 0 {
        return Ok(0.0);
    }
    let tol2 = tolerance * tolerance;
    let matched = |from: &Mask, to: &Mask| {
        let dt = squared_distance_transform(to);
        from.data()
            .iter()
            .zip(dt.data())
            .filter(|(&b, &d)| b && d <= tol2 + 1e-9)
            .count()
    };
    let precision = matched(&pb, &gb) as f64 / n_pred as f64;
    let recall = matched(&gb, &pb) as f64 / n_gt as f64;
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

/// Mean, recall and decay of one measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasureStats {
    pub mean: f64,
    pub recall: f64,
    pub decay: f64,
    /// False when some series had fewer than four frames; those contribute zero decay.
    pub decay_defined: bool,
}

/// Splits `n` items into four contiguous near-equal bins, extra items first.
fn quartile_bounds(n: usize) -> [(usize, usize); 4] {
    let base = n / 4;
    let rem = n % 4;
    let mut out = [(0, 0); 4];
    let mut start = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let len = base + usize::from(i < rem);
        *o = (start, start + len);
        start += len;
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Summarizes one per-frame series for each (sequence, instance) pair.
///
/// `mean` averages the per-series means, `recall` is the fraction of series
/// whose mean exceeds 0.5, and `decay` averages the first-quartile mean minus
/// the last-quartile mean.
pub fn aggregate(series: &[Vec<f64>]) -> Result<MeasureStats> {
    if series.is_empty() || series.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidInput("aggregate needs nonempty series".into()));
    }
    let means: Vec<f64> = series.iter().map(|s| mean(s)).collect();
    let mut decay_defined = true;
    let decays: Vec<f64> = series
        .iter()
        .map(|s| {
            if s.len() < 4 {
                decay_defined = false;
                return 0.0;
            }
            let q = quartile_bounds(s.len());
            mean(&s[q[0].0..q[0].1]) - mean(&s[q[3].0..q[3].1])
        })
        .collect();
    if !decay_defined {
        log::warn!("decay needs at least four scored frames; reported as 0");
    }
    Ok(MeasureStats {
        mean: mean(&means),
        recall: means.iter().filter(|&&m| m > 0.5).count() as f64 / means.len() as f64,
        decay: mean(&decays),
        decay_defined,
    })
}

/// Average of the region and boundary means.
pub fn global_mean(j: &MeasureStats, f: &MeasureStats) -> f64 {
    (j.mean + f.mean) / 2.0
}

/// Per-instance scores of one frame; index `k` holds label `k + 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameScore {
    pub frame: usize,
    pub j: Vec<f64>,
    pub f: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub instances: usize,
    pub tolerance: f64,
    pub frames: Vec<FrameScore>,
    pub j: MeasureStats,
    pub f: MeasureStats,
    pub global_mean: f64,
}

impl Evaluation {
    /// Per-instance series of one measure over the scored frames.
    pub fn series(&self, boundary: bool) -> Vec<Vec<f64>> {
        (0..self.instances)
            .map(|k| {
                self.frames
                    .iter()
                    .map(|fs| if boundary { fs.f[k] } else { fs.j[k] })
                    .collect()
            })
            .collect()
    }

    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let rows = [
            ("Global Mean", self.global_mean),
            ("J Mean", self.j.mean),
            ("J Recall", self.j.recall),
            ("J Decay", self.j.decay),
            ("F Mean", self.f.mean),
            ("F Recall", self.f.recall),
            ("F Decay", self.f.decay),
        ];
        let mut out = format!("{:<12} {:>8}\n", "Measure", "Value");
        for (name, v) in rows {
            out.push_str(&format!("{name:<12} {v:>8.4}\n"));
        }
        out
    }
}

/// Scores predicted label maps against ground truth.
///
/// Frame 0 holds the given masks and is not scored. Instances are the labels
/// `1..=K` with `K` the largest label in the ground truth.
pub fn evaluate(pred: &[LabelMap], gt: &[LabelMap], tolerance: Option<f64>) -> Result<Evaluation> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "{} predicted frames vs {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    if gt.len() < 2 {
        return Err(Error::InvalidInput("evaluation needs at least two frames".into()));
    }
    let instances = gt.iter().map(|g| g.max_label()).max().unwrap_or(0) as usize;
    if instances == 0 {
        return Err(Error::InvalidInput("ground truth has no labelled instance".into()));
    }
    let (w, h) = gt[0].dims();
    let tolerance = tolerance.unwrap_or_else(|| default_tolerance(w, h));
    let frames = (1..gt.len())
        .map(|i| {
            let mut j = Vec::with_capacity(instances);
            let mut f = Vec::with_capacity(instances);
            for label in 1..=instances as u8 {
                let p = pred[i].mask(label);
                let g = gt[i].mask(label);
                j.push(region_jaccard(&p, &g)?);
                f.push(boundary_f(&p, &g, tolerance)?);
            }
            Ok(FrameScore { frame: i, j, f })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eval = Evaluation {
        instances,
        tolerance,
        frames,
        j: MeasureStats {
            mean: 0.0,
            recall: 0.0,
            decay: 0.0,
            decay_defined: true,
        },
        f: MeasureStats {
            mean: 0.0,
            recall: 0.0,
            decay: 0.0,
            decay_defined: true,
        },
        global_mean: 0.0,
    };
    eval.j = aggregate(&eval.series(false))?;
    eval.f = aggregate(&eval.series(true))?;
    eval.global_mean = global_mean(&eval.j, &eval.f);
    Ok(eval)
}
