//! Optical flow estimation and flow-guided bilinear warping.
//!
//! Flow fields follow the backward convention: a field returned by
//! `estimate(a, b)` lives on the grid of `a` and each vector points to where
//! that pixel's content sits in `b`. To carry a map from frame `i` into frame
//! `j`, estimate with `(j, i)` and warp.

use crate::error::Result;
use crate::grid::{FlowField, Frame, FrameRef, ProbMap};

/// A pluggable optical flow backend.
pub trait FlowEstimator: Send + Sync {
    fn name(&self) -> &str;

    /// Field on `src`'s grid such that `src(p) ≈ dst(p + f(p))`.
    fn estimate(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<FlowField>;
}

/// Samples `map` at `p + f(p)` for every pixel `p` of the output.
///
/// Samples falling outside the grid contribute zero.
pub fn warp_bilinear(map: &ProbMap, flow: &FlowField) -> Result<ProbMap> {
    flow.ensure_dims(map.dims())?;
    let (w, h) = map.dims();
    let out = ProbMap::from_fn(w, h, |x, y| {
        let [dx, dy] = flow.get(x, y);
        let sx = x as f32 + dx;
        let sy = y as f32 + dy;
        let x0 = sx.floor();
        let y0 = sy.floor();
        let fx = sx - x0;
        let fy = sy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let at = |xx: i64, yy: i64| map.get_signed(xx, yy).unwrap_or(0.0);
        let mut v = 0.0f32;
        let w00 = (1.0 - fx) * (1.0 - fy);
        if w00 != 0.0 {
            v += w00 * at(x0, y0);
        }
        let w10 = fx * (1.0 - fy);
        if w10 != 0.0 {
            v += w10 * at(x0 + 1, y0);
        }
        let w01 = (1.0 - fx) * fy;
        if w01 != 0.0 {
            v += w01 * at(x0, y0 + 1);
        }
        let w11 = fx * fy;
        if w11 != 0.0 {
            v += w11 * at(x0 + 1, y0 + 1);
        }
        v.clamp(0.0, 1.0)
    });
    Ok(out)
}

/// Always returns the zero field.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFlow;

impl FlowEstimator for ZeroFlow {
    fn name(&self) -> &str {
        "zero"
    }

    fn estimate(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<FlowField> {
        dst.frame.ensure_dims(src.frame.dims())?;
        let (w, h) = src.frame.dims();
        Ok(FlowField::zeros(w, h))
    }
}

/// Exhaustive SSD block matching with parabolic sub-pixel refinement.
#[derive(Clone, Copy, Debug)]
pub struct BlockMatchingFlow {
    pub window: usize,
    pub radius: usize,
}

impl Default for BlockMatchingFlow {
    fn default() -> Self {
        Self {
            window: 8,
            radius: 8,
        }
    }
}

impl FlowEstimator for BlockMatchingFlow {
    fn name(&self) -> &str {
        "block_matching"
    }

    fn estimate(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<FlowField> {
        dst.frame.ensure_dims(src.frame.dims())?;
        Ok(block_matching_flow(
            src.frame,
            dst.frame,
            self.window.max(1),
            self.radius,
        ))
    }
}

/// Summed-area table with a zero guard row and column.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, values: impl Iterator<Item = f64>) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        let mut values = values;
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += values.next().unwrap_or(0.0);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { width, sums }
    }

    /// Sum over `[x0, x1) x [y0, y1)`.
    #[inline]
    fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]
            + self.sums[y0 * s + x0]
    }
}

pub(crate) fn integral_image(
    width: usize,
    height: usize,
    values: impl Iterator<Item = f64>,
) -> impl Fn(usize, usize, usize, usize) -> f64 {
    let integral = Integral::new(width, height, values);
    move |x0, y0, x1, y1| integral.sum(x0, y0, x1, y1)
}

#[inline]
fn window_span(center: usize, window: usize, limit: usize) -> (usize, usize) {
    let before = window / 2;
    let after = window - before;
    let lo = center.saturating_sub(before);
    let hi = (center + after).min(limit);
    (lo, hi)
}

fn window_ssd(src: &Frame, dst: &Frame, x: usize, y: usize, dx: i64, dy: i64, window: usize) -> f64 {
    let (w, h) = src.dims();
    let (x0, x1) = window_span(x, window, w);
    let (y0, y1) = window_span(y, window, h);
    let mut cost = 0.0f64;
    for yy in y0..y1 {
        for xx in x0..x1 {
            let a = src.get(xx, yy);
            let b = dst.get_clamped(xx as i64 + dx, yy as i64 + dy);
            for c in 0..3 {
                let d = (a[c] - b[c]) as f64;
                cost += d * d;
            }
        }
    }
    cost
}

/// Dense flow from `src` to `dst` by exhaustive block matching.
///
/// For each pixel of `src`, the displacement within `radius` minimizing the
/// sum of squared RGB differences over a `window x window` neighbourhood is
/// chosen. Ties go to the smaller displacement magnitude, then to the
/// lexicographically smaller `(dx, dy)`. Each axis is then refined by fitting
/// a parabola through the neighbouring costs.
pub fn block_matching_flow(src: &Frame, dst: &Frame, window: usize, radius: usize) -> FlowField {
    let (w, h) = src.dims();
    let r = radius as i64;
    let mut offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dx| (-r..=r).map(move |dy| (dx, dy)))
        .collect();
    offsets.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dx, dy));

    let mut best_cost = vec![f64::INFINITY; w * h];
    let mut best = vec![(0i64, 0i64); w * h];
    // Summed-area table of the per-pixel cost, reused across offsets.
    let stride = w + 1;
    let mut table = vec![0.0f64; stride * (h + 1)];
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    for &(dx, dy) in &offsets {
        for y in 0..h {
            let src_row = &src.data()[y * w..(y + 1) * w];
            let sy = clamp(y as i64 + dy, h);
            let dst_row = &dst.data()[sy * w..(sy + 1) * w];
            let mut run = 0.0f64;
            for (x, a) in src_row.iter().enumerate() {
                let b = dst_row[clamp(x as i64 + dx, w)];
                run += (0..3).map(|c| ((a[c] - b[c]) as f64).powi(2)).sum::<f64>();
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + run;
            }
        }
        for y in 0..h {
            let (y0, y1) = window_span(y, window, h);
            for x in 0..w {
                let (x0, x1) = window_span(x, window, w);
                let cost = table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0]
                    + table[y0 * stride + x0];
                let i = y * w + x;
                // Summed-area costs carry rounding noise; treat near-equal costs as ties.
                if cost < best_cost[i] - 1e-9 {
                    best_cost[i] = cost;
                    best[i] = (dx, dy);
                }
            }
        }
    }

    FlowField::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let (dx, dy) = best[i];
        let c0 = window_ssd(src, dst, x, y, dx, dy, window);
        let refine = |minus: Option<f64>, plus: Option<f64>| -> f32 {
            match (minus, plus) {
                // An exact match needs no subpixel correction.
                _ if c0 <= 1e-12 => 0.0,
                (Some(cm), Some(cp)) => {
                    let denom = cm - 2.0 * c0 + cp;
                    if denom > 1e-12 {
                        ((cm - cp) / (2.0 * denom)).clamp(-0.5, 0.5) as f32
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            }
        };
        let in_range = |d: i64| d.abs() <= r;
        let cost_at = |ddx: i64, ddy: i64| {
            (in_range(ddx) && in_range(ddy)).then(|| window_ssd(src, dst, x, y, ddx, ddy, window))
        };
        let sub_x = refine(cost_at(dx - 1, dy), cost_at(dx + 1, dy));
        let sub_y = refine(cost_at(dx, dy - 1), cost_at(dx, dy + 1));
        [dx as f32 + sub_x, dy as f32 + sub_y]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    /// Four-neighbour interpolation evaluated independently in f64.
    fn oracle_sample(map: &ProbMap, sx: f64, sy: f64) -> f64 {
        let x0 = sx.floor();
        let y0 = sy.floor();
        let (fx, fy) = (sx - x0, sy - y0);
        let mut acc = 0.0;
        for (ox, oy, wgt) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let v = map
                .get_signed(x0 as i64 + ox, y0 as i64 + oy)
                .map_or(0.0, f64::from);
            acc += wgt * v;
        }
        acc
    }

    #[test]
    fn zero_flow_is_identity() {
        let p = ProbMap::from_fn(7, 5, |x, y| ((x * 3 + y) % 5) as f32 / 4.0);
        let out = warp_bilinear(&p, &FlowField::zeros(7, 5)).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn integer_shift_moves_block() {
        let p = ProbMap::from_fn(12, 3, |x, _| if (4..8).contains(&x) { 1.0 } else { 0.0 });
        let f = FlowField::filled(12, 3, [-2.0, 0.0]);
        let out = warp_bilinear(&p, &f).unwrap();
        for x in 0..12 {
            let expected = if (6..10).contains(&x) { 1.0 } else { 0.0 };
            assert_eq!(out.get(x, 1), expected, "x = {x}");
        }
    }

    #[test]
    fn half_pixel_sample() {
        let mut p = ProbMap::zeros(10, 10);
        p.set(5, 5, 1.0);
        let f = FlowField::filled(10, 10, [-0.5, 0.0]);
        let out = warp_bilinear(&p, &f).unwrap();
        assert_eq!(out.get(5, 5), 0.5);
        assert!((oracle_sample(&p, 4.5, 5.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn warp_rejects_mismatched_dims() {
        let p = ProbMap::zeros(4, 4);
        assert!(warp_bilinear(&p, &FlowField::zeros(4, 5)).is_err());
    }

    #[test]
    fn block_matching_identical_frames() {
        let f = textured(20, 16, 1);
        let flow = block_matching_flow(&f, &f, 8, 3);
        assert!(flow.data().iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn block_matching_flat_frames_tie_to_zero() {
        let f = Frame::filled(12, 12, [0.4, 0.4, 0.4]);
        let flow = block_matching_flow(&f, &f, 8, 4);
        assert!(flow.data().iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn block_matching_recovers_translation() {
        let (w, h) = (40, 32);
        let src = textured(w, h, 7);
        // dst(x) = src(x - 3): content moved right, so src(p) = dst(p + 3).
        let dst = Frame::from_fn(w, h, |x, y| src.get_clamped(x as i64 - 3, y as i64));
        let flow = block_matching_flow(&src, &dst, 8, 4);
        let margin = 8;
        let mut good = 0;
        let mut total = 0;
        for y in margin..h - margin {
            for x in margin..w - margin {
                let [dx, dy] = flow.get(x, y);
                total += 1;
                if (dx - 3.0).abs() <= 0.5 && dy.abs() <= 0.5 {
                    good += 1;
                }
            }
        }
        assert!(good as f64 >= 0.9 * total as f64, "{good}/{total}");
    }

    proptest! {
        #[test]
        fn warp_matches_oracle(
            seed in any::<u64>(),
            dx in -3.0f32..3.0,
            dy in -3.0f32..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = ProbMap::from_fn(9, 7, |_, _| rng.gen());
            let f = FlowField::from_fn(9, 7, |_, _| [dx + rng.gen_range(-0.5..0.5), dy]);
            let out = warp_bilinear(&p, &f).unwrap();
            for y in 0..7 {
                for x in 0..9 {
                    let [fx, fy] = f.get(x, y);
                    let expect = oracle_sample(&p, x as f64 + fx as f64, y as f64 + fy as f64);
                    prop_assert!((out.get(x, y) as f64 - expect).abs() < 1e-6);
                    prop_assert!((0.0..=1.0).contains(&out.get(x, y)));
                }
            }
        }
    }
}
