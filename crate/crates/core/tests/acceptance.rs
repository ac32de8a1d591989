//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails or overruns its time budget.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vosreid::bbox::{iou, prob_box, BBox};
use vosreid::engine::{merge, merge_scores, Backends, Direction, Engine, EngineConfig, Retrieval, StopReason};
use vosreid::flow::warp_bilinear;
use vosreid::grid::{FlowField, Frame, FrameRef, Grid, ProbMap};
use vosreid::metrics::{aggregate, boundary_f, boundary_pixels, global_mean, region_jaccard, Mask, MeasureStats};
use vosreid::reid::{
    reidentify, Descriptor, DescriptorExtractor, HistogramDescriptor, NccProposals, ProposalGenerator, ReidGate,
    Template, REJECTED,
};
use vosreid::synth::{self, ObjectSpec, OracleFlow, OracleProposals, OracleRefiner, Shape, SyntheticSpec, Trajectory};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_backends(scene: &Arc<synth::SyntheticScene>) -> Backends {
    Backends {
        flow: Box::new(OracleFlow::new(scene.clone())),
        refiner: Box::new(OracleRefiner::new(scene.clone())),
        proposals: Box::new(OracleProposals::new(scene.clone())),
        descriptor: Box::new(HistogramDescriptor),
    }
}

fn checkpoint_replay() -> Check {
    let spec = SyntheticSpec {
        width: 40,
        height: 30,
        frames: 6,
        objects: vec![ObjectSpec {
            shape: Shape::Disc { radius: 6.0 },
            color: [0.9, 0.1, 0.1],
            trajectory: Trajectory::Linear {
                start: [12.0, 15.0],
                velocity: [2.0, 0.0],
            },
            visible: Vec::new(),
        }],
        occluders: Vec::new(),
        background_seed: 2,
    };
    let scene = Arc::new(synth::generate(&spec, 0).map_err(|e| e.to_string())?);
    let backends = oracle_backends(&scene);
    let engine = Engine::new(&scene.sequence, &backends, EngineConfig::default()).map_err(|e| e.to_string())?;
    let mut state = engine.initialize(&scene.first_masks()).map_err(|e| e.to_string())?;
    ensure(state.checkpoints_of(0) == vec![0; 6], || "initial checkpoints are not all frame 1".into())?;

    let anchor = 5;
    let bbox = prob_box(&ProbMap::from_label(&scene.ground_truth[anchor], 1), 0.5).ok_or("empty gt")?;
    let r = Retrieval {
        frame: anchor,
        instance: 0,
        bbox,
        score: 0.99,
    };
    engine.recover(&mut state, &r).map_err(|e| e.to_string())?;
    let fwd = engine
        .propagate_from_checkpoint(&mut state, anchor, 0, Direction::Forward)
        .map_err(|e| e.to_string())?;
    let bwd = engine
        .propagate_from_checkpoint(&mut state, anchor, 0, Direction::Backward)
        .map_err(|e| e.to_string())?;
    // Reported with frames numbered from 1.
    let c: Vec<usize> = state.checkpoints_of(0)[1..].iter().map(|c| c + 1).collect();
    ensure(fwd == 0 && bwd == 2, || format!("forward updated {fwd}, backward updated {bwd}"))?;
    ensure(c == [1, 1, 6, 6, 6], || format!("c for frames 2..6 = {c:?}"))?;
    Ok(format!("backward walk updated frames 5,4; c for frames 2..6 = {c:?}"))
}

fn merge_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let k = rng.gen_range(1..=3);
        let p: Vec<f64> = (0..k).map(|_| rng.gen::<f32>() as f64).collect();
        let s = merge_scores(&p);
        let sum: f64 = s.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-6, || format!("case {case}: scores sum to {sum}"))?;

        let bg: f64 = p.iter().map(|v| 1.0 - v).product();
        let terms: Vec<f64> = std::iter::once(bg).chain(p.iter().copied()).collect();
        let mut expected = 0;
        for (l, &t) in terms.iter().enumerate() {
            if t > terms[expected] {
                expected = l;
            }
        }
        let maps: Vec<ProbMap> = p.iter().map(|&v| ProbMap::filled(1, 1, v as f32)).collect();
        let label = merge(&maps.iter().collect::<Vec<_>>()).map_err(|e| e.to_string())?.get(0, 0);
        ensure(label as usize == expected, || {
            format!("case {case}: p = {p:?} merged to {label}, brute force {expected}")
        })?;
    }
    let s = merge_scores(&[0.6, 0.7]);
    let z = 0.7 / s[2];
    let maps = [ProbMap::filled(1, 1, 0.6), ProbMap::filled(1, 1, 0.7)];
    let label = merge(&[&maps[0], &maps[1]]).map_err(|e| e.to_string())?.get(0, 0);
    ensure((z - 1.42).abs() < 1e-9 && label == 2, || format!("worked case: Z = {z}, label {label}"))?;
    Ok(format!("1000 pixels agree; (0.6, 0.7) gives Z = {z:.2}, label {label}"))
}

fn oracle_sample(map: &ProbMap, sx: f64, sy: f64) -> f64 {
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let mut acc = 0.0;
    for (dx, dy, wgt) in [
        (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
        (1.0, 0.0, fx * (1.0 - fy)),
        (0.0, 1.0, (1.0 - fx) * fy),
        (1.0, 1.0, fx * fy),
    ] {
        let (x, y) = (x0 + dx, y0 + dy);
        if x >= 0.0 && y >= 0.0 && (x as usize) < map.width() && (y as usize) < map.height() {
            acc += wgt * map.get(x as usize, y as usize) as f64;
        }
    }
    acc
}

fn warp_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (w, h) = (37, 23);
    let map = ProbMap::from_fn(w, h, |_, _| rng.gen());
    let same = warp_bilinear(&map, &FlowField::zeros(w, h)).map_err(|e| e.to_string())?;
    ensure(
        same.data().iter().zip(map.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
        || "zero flow is not bit-identical".into(),
    )?;

    for (dx, dy) in [(3i64, -2i64), (-5, 4), (0, 7)] {
        let shifted =
            warp_bilinear(&map, &FlowField::filled(w, h, [dx as f32, dy as f32])).map_err(|e| e.to_string())?;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let want = map.get_signed(x + dx, y + dy).unwrap_or(0.0);
                let got = shifted.get(x as usize, y as usize);
                ensure(got.to_bits() == want.to_bits(), || {
                    format!("shift ({dx}, {dy}) differs at ({x}, {y}): {got} vs {want}")
                })?;
            }
        }
    }

    let mut worst = 0.0f64;
    let mut samples = 0;
    while samples < 10_000 {
        let (fw, fh) = (rng.gen_range(1..20), rng.gen_range(1..20));
        let m = ProbMap::from_fn(fw, fh, |_, _| rng.gen());
        let flow = FlowField::from_fn(fw, fh, |_, _| [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
        let out = warp_bilinear(&m, &flow).map_err(|e| e.to_string())?;
        for y in 0..fh {
            for x in 0..fw {
                let [u, v] = flow.get(x, y);
                let want = oracle_sample(&m, x as f64 + u as f64, y as f64 + v as f64);
                worst = worst.max((out.get(x, y) as f64 - want).abs());
                samples += 1;
            }
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("identity and shifts exact; {samples} samples within {worst:.1e}"))
}

/// Proposes a fixed list of boxes.
struct FixedProposals(Vec<BBox>);

impl ProposalGenerator for FixedProposals {
    fn name(&self) -> &str {
        "fixed"
    }

    fn propose(&self, _frame: FrameRef<'_>, _template: &Template) -> vosreid::Result<Vec<BBox>> {
        Ok(self.0.clone())
    }
}

/// Mean color shifted off-center plus a size term; similarities span [-1, 1].
struct MeanColor;

fn mean_color_features(patch: &Frame) -> Vec<f64> {
    let n = patch.data().len() as f64;
    let mut v = vec![0.0f64; 4];
    for px in patch.data() {
        for c in 0..3 {
            v[c] += (px[c] as f64 - 0.5) / n;
        }
    }
    v[3] = 0.01 * (patch.width() as f64 - patch.height() as f64);
    v
}

impl DescriptorExtractor for MeanColor {
    fn name(&self) -> &str {
        "mean_color"
    }

    fn describe(&self, patch: &Frame) -> vosreid::Result<Descriptor> {
        Descriptor::new(mean_color_features(patch).into_iter().map(|x| x as f32).collect())
    }
}

fn random_box(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BBox {
    let x0 = rng.gen_range(0..w - 1);
    let y0 = rng.gen_range(0..h - 1);
    BBox {
        x0,
        y0,
        x1: rng.gen_range(x0 + 1..=w),
        y1: rng.gen_range(y0 + 1..=h),
    }
}

/// Direct replay of the retrieval rule on explicit pixel loops.
fn brute_force_reid(frame: &Frame, prob: &ProbMap, template: &[f64], boxes: &[BBox], gate: ReidGate) -> (BBox, f64) {
    if boxes.is_empty() {
        return (BBox { x0: 0, y0: 0, x1: 1, y1: 1 }, REJECTED);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut best: Option<(BBox, f64)> = None;
    for &b in boxes {
        let mut crop = Vec::new();
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                crop.push(frame.get(x, y));
            }
        }
        let patch = Grid::from_vec(b.x1 - b.x0, b.y1 - b.y0, crop).unwrap();
        let d = mean_color_features(&patch);
        let s = d.iter().zip(template).map(|(a, b)| a * b).sum::<f64>() / (norm(&d) * norm(template));
        best = match best {
            Some((bb, bs)) if bs > s || (bs == s && bb <= b) => Some((bb, bs)),
            _ => Some((b, s)),
        };
    }
    let (b, s) = best.unwrap();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..prob.height() {
        for x in 0..prob.width() {
            if prob.get(x, y) > 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    let overlap = if x1 == 0 {
        0.0
    } else {
        let ix = (b.x1.min(x1) as i64 - b.x0.max(x0) as i64).max(0);
        let iy = (b.y1.min(y1) as i64 - b.y0.max(y0) as i64).max(0);
        let inter = (ix * iy) as f64;
        let area = |a: usize, b: usize, c: usize, d: usize| ((c - a) * (d - b)) as f64;
        inter / (area(b.x0, b.y0, b.x1, b.y1) + area(x0, y0, x1, y1) - inter)
    };
    if s > gate.rho_reid && overlap < gate.rho_occ {
        (b, s)
    } else {
        (b, REJECTED)
    }
}

fn reid_gate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (w, h) = (16, 12);
    let mut accepted = 0;
    for case in 0..10_000 {
        let frame = Frame::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let tb = random_box(&mut rng, w, h);
        let tmask = ProbMap::from_fn(w, h, |x, y| tb.contains(x, y) as u8 as f32);
        let template = Template::from_first_frame(&frame, &tmask, 0, &MeanColor).map_err(|e| e.to_string())?;
        let tfeat = mean_color_features(&template.image);

        let mut boxes: Vec<BBox> = (0..rng.gen_range(0..6)).map(|_| random_box(&mut rng, w, h)).collect();
        if !boxes.is_empty() && rng.gen_bool(0.2) {
            boxes.push(boxes[0]);
        }
        let prob = if rng.gen_bool(0.3) {
            ProbMap::zeros(w, h)
        } else {
            let pb = random_box(&mut rng, w, h);
            ProbMap::from_fn(w, h, |x, y| if pb.contains(x, y) { rng.gen_range(0.5..1.0) } else { rng.gen_range(0.0..0.5) })
        };
        let gate = ReidGate {
            rho_reid: rng.gen_range(0.01..0.99),
            rho_occ: rng.gen_range(0.01..0.99),
        };

        let out = reidentify(
            FrameRef { index: 1, frame: &frame },
            &prob,
            &template,
            &FixedProposals(boxes.clone()),
            &MeanColor,
            gate,
        )
        .map_err(|e| format!("case {case}: {e}"))?;
        let (bb, bs) = brute_force_reid(&frame, &prob, &tfeat, &boxes, gate);
        let agree = out.bbox == bb && (out.score == bs || (out.score != REJECTED && bs != REJECTED && (out.score - bs).abs() < 1e-6));
        ensure(agree, || format!("case {case}: got {out:?}, brute force ({bb:?}, {bs})"))?;
        if out.is_accepted() {
            accepted += 1;
            let cur = prob_box(&prob, 0.5);
            let ov = cur.map_or(0.0, |c| iou(&out.bbox, &c));
            ensure(out.score > gate.rho_reid && ov < gate.rho_occ, || {
                format!("case {case}: accepted {} with iou {ov} under {gate:?}", out.score)
            })?;
        }
    }
    Ok(format!("10000 cases agree with brute force ({accepted} accepted, none violating a gate)"))
}

fn post_reappearance_j(labels: &[vosreid::LabelMap], scene: &synth::SyntheticScene) -> Result<f64, String> {
    let frames = scene.reappearance_frames(0);
    let mut sum = 0.0;
    for &t in &frames {
        sum += region_jaccard(&labels[t].mask(1), &scene.ground_truth[t].mask(1)).map_err(|e| e.to_string())?;
    }
    Ok(sum / frames.len() as f64)
}

fn occlusion_recovery() -> Check {
    let scene = Arc::new(synth::generate(&synth::occlusion_scene(), 0).map_err(|e| e.to_string())?);
    let backends = Backends {
        flow: Box::new(OracleFlow::new(scene.clone())),
        refiner: Box::new(OracleRefiner::new(scene.clone())),
        proposals: Box::new(NccProposals::default()),
        descriptor: Box::new(HistogramDescriptor),
    };
    let mut j = [0.0; 2];
    for (slot, reid) in [(0, false), (1, true)] {
        let cfg = EngineConfig {
            reid_enabled: reid,
            ..EngineConfig::default()
        };
        let engine = Engine::new(&scene.sequence, &backends, cfg).map_err(|e| e.to_string())?;
        let out = engine.run(&scene.first_masks()).map_err(|e| e.to_string())?;
        j[slot] = post_reappearance_j(&out.labels, &scene)?;
    }
    ensure(j[0] < 0.5 && j[1] >= 0.9, || format!("J without reid {:.3}, with reid {:.3}", j[0], j[1]))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let code = vosreid::cli::main_with_args(["vosreid", "synth", "--out", &s(root), "--seed", "0"]);
    ensure(code == 0, || format!("synth exited with {code}"))?;
    std::fs::write(
        root.join("oracle.cfg"),
        "flow = oracle\nrefiner = oracle\nproposals = ncc\noracle_spec = spec.json\noracle_seed = 0\n",
    )
    .map_err(|e| e.to_string())?;
    let code = vosreid::cli::main_with_args([
        "vosreid",
        "ablate",
        "--frames",
        &s(&root.join("frames")),
        "--first-mask",
        &s(&root.join("gt/00000.png")),
        "--config",
        &s(&root.join("oracle.cfg")),
        "--json",
        &s(&root.join("ablate.json")),
    ]);
    ensure(code == 0, || format!("ablate exited with {code}"))?;
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("ablate.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let delta = doc["delta"].as_f64().ok_or("ablate json has no delta")?;
    ensure(delta > 0.0, || format!("ablate delta {delta}"))?;
    Ok(format!(
        "post-reappearance J {:.3} -> {:.3}; ablate global-mean delta {delta:+.4}",
        j[0], j[1]
    ))
}

fn termination() -> Check {
    let mut by_reason = [0usize; 2];
    let mut max_iter = 0;
    for seed in 0..100u64 {
        let spec = synth::random_spec(seed, 20, 3);
        let scene = synth::generate(&spec, seed).map_err(|e| e.to_string())?;
        let backends = Backends::default();
        let engine = Engine::new(&scene.sequence, &backends, EngineConfig::default()).map_err(|e| e.to_string())?;
        let out = engine.run(&scene.first_masks()).map_err(|e| format!("seed {seed}: {e}"))?;
        let bound = spec.frames * spec.objects.len();
        ensure(out.iterations.len() <= bound, || {
            format!("seed {seed}: {} iterations over the bound {bound}", out.iterations.len())
        })?;
        match out.stop {
            StopReason::NoRetrieval => by_reason[0] += 1,
            StopReason::IterationCap => {
                ensure(out.iterations.len() == bound, || format!("seed {seed}: cap stop below the bound"))?;
                by_reason[1] += 1;
            }
            StopReason::ReidDisabled => return Err(format!("seed {seed}: reid unexpectedly disabled")),
        }
        max_iter = max_iter.max(out.iterations.len());
    }
    Ok(format!(
        "100 scenes: {} stopped with nothing retrieved, {} at the bound; at most {max_iter} iterations",
        by_reason[0], by_reason[1]
    ))
}

fn boundary_oracle(pred: &Mask, gt: &Mask, tol: f64) -> f64 {
    let points = |m: &Mask| -> Vec<(f64, f64)> {
        let b = boundary_pixels(m);
        let mut v = Vec::new();
        for y in 0..m.height() {
            for x in 0..m.width() {
                if b.get(x, y) {
                    v.push((x as f64, y as f64));
                }
            }
        }
        v
    };
    let (pb, gb) = (points(pred), points(gt));
    match (pb.is_empty(), gb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let matched = |from: &[(f64, f64)], to: &[(f64, f64)]| {
        from.iter()
            .filter(|a| to.iter().any(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() <= tol))
            .count() as f64
    };
    let p = matched(&pb, &gb) / pb.len() as f64;
    let r = matched(&gb, &pb) / gb.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn metrics_oracles() -> Check {
    let square = |x0: usize| Mask::from_fn(30, 20, |x, y| (x0..x0 + 10).contains(&x) && (5..15).contains(&y));
    let empty = Mask::filled(30, 20, false);
    let a = square(2);
    let e = |r: vosreid::Result<f64>| r.map_err(|e| e.to_string());
    ensure(e(region_jaccard(&a, &a))? == 1.0 && e(boundary_f(&a, &a, 1.0))? == 1.0, || "identical".into())?;
    let far = square(18);
    ensure(e(region_jaccard(&a, &far))? == 0.0 && e(boundary_f(&a, &far, 1.0))? == 0.0, || "disjoint".into())?;
    ensure(e(region_jaccard(&a, &empty))? == 0.0 && e(boundary_f(&empty, &a, 1.0))? == 0.0, || "one empty".into())?;
    let shifted = e(region_jaccard(&a, &square(7)))?;
    ensure(shifted == 1.0 / 3.0, || format!("shifted square J = {shifted}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (w, h) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let blob = |rng: &mut ChaCha8Rng| {
            let density = rng.gen_range(0.0..1.0);
            let cx = rng.gen_range(0.0..w as f64);
            let cy = rng.gen_range(0.0..h as f64);
            let r = rng.gen_range(1.0..16.0);
            Mask::from_fn(w, h, |x, y| {
                let inside = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r;
                inside ^ rng.gen_bool(density * 0.2)
            })
        };
        let (p, g) = (blob(&mut rng), blob(&mut rng));
        let tol = rng.gen_range(0..=4) as f64;
        let got = e(boundary_f(&p, &g, tol))?;
        worst = worst.max((got - boundary_oracle(&p, &g, tol)).abs());
    }
    ensure(worst <= 1e-12, || format!("boundary F deviates from the all-pairs oracle by {worst:e}"))?;

    let gm = global_mean(
        &MeasureStats { mean: 0.679, recall: 0.0, decay: 0.0, decay_defined: true },
        &MeasureStats { mean: 0.719, recall: 0.0, decay: 0.0, decay_defined: true },
    );
    ensure((gm - 0.699).abs() < 1e-12, || format!("global mean {gm}"))?;
    let stats = aggregate(&[vec![1.0; 8]]).map_err(|e| e.to_string())?;
    ensure(stats.mean == 1.0 && stats.recall == 1.0 && stats.decay == 0.0, || format!("{stats:?}"))?;
    Ok(format!("exact cases hold; 200 random masks within {worst:.0e}; global mean {gm:.3}"))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let bin = env!("CARGO_BIN_EXE_vosreid");
    let run = |args: &[&str], threads: &str| -> Result<(), String> {
        let status = Command::new(bin)
            .args(args)
            .env("VOSREID_THREADS", threads)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("{args:?} exited with {status}"))
    };
    let s = |p: &Path| p.to_str().unwrap().to_string();
    run(&["synth", "--preset", "unoccluded", "--seed", "4", "--out", &s(&root.join("scene"))], "1")?;
    for (out, threads) in [("a", "1"), ("b", "3")] {
        run(
            &[
                "run",
                "--frames",
                &s(&root.join("scene/frames")),
                "--first-mask",
                &s(&root.join("scene/gt/00000.png")),
                "--out",
                &s(&root.join(out)),
                "--dump-probs",
            ],
            threads,
        )?;
    }
    let mut compared = 0;
    for sub in ["masks", "probs"] {
        let mut names: Vec<_> = std::fs::read_dir(root.join("a").join(sub))
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names {
            let a = std::fs::read(root.join("a").join(sub).join(&name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(root.join("b").join(sub).join(&name)).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("{sub}/{} differs", name.to_string_lossy()))?;
            compared += 1;
        }
    }
    let la = std::fs::read(root.join("a/iterations.log")).map_err(|e| e.to_string())?;
    let lb = std::fs::read(root.join("b/iterations.log")).map_err(|e| e.to_string())?;
    ensure(la == lb, || "iteration logs differ".into())?;
    Ok(format!("{compared} output files byte-identical across two invocations"))
}

fn main() {
    let criteria: [(&str, fn() -> Check, u64); 8] = [
        ("checkpoint replay", checkpoint_replay, 1),
        ("merge correctness", merge_correctness, 1),
        ("warp oracle", warp_oracle, 5),
        ("reid gate soundness", reid_gate, 10),
        ("occlusion recovery", occlusion_recovery, 60),
        ("termination bound", termination, 120),
        ("metrics oracles", metrics_oracles, 30),
        ("determinism", determinism, 60),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(budget);
        let (ok, detail) = match result {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the time budget")),
            Err(e) => (false, e),
        };
        failed += !ok as usize;
        println!(
            "{} {name:<20} {:>7.2}s / {:>3}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
