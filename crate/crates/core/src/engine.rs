//! The iterative segmentation engine.
//!
//! Every instance is first propagated forward from the given frame-0 mask.
//! The engine then repeatedly scans all frames for the single most confident
//! re-identification that contradicts the current prediction, recovers that
//! instance's map from the retrieved box, and propagates the recovered map
//! forward and backward. A per-cell checkpoint records the frame that last
//! anchored each map; a walk only overwrites a map when its own anchor is
//! strictly closer, and stops at the first map it may not overwrite. The loop
//! ends once no retrieval is accepted. Finally the per-instance maps of each
//! frame are merged into a label map.

use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::bbox::{prob_box, BBox};
use crate::error::{Error, Result};
use crate::flow::{BlockMatchingFlow, FlowEstimator};
use crate::grid::{FlowField, FrameRef, LabelMap, ProbMap, VideoSequence};
use crate::propagation::{
    crop_resize, crop_resize_flow, propagate_mask, run_refiner, uncrop, ColorModelRefiner,
    MaskRefiner, PatchContext, PatchGeometry, PropagationConfig, RefineInput, BOX_THRESHOLD,
};
use crate::reid::{
    score_candidates, select_and_gate, Candidate, DescriptorExtractor, HistogramDescriptor,
    NccProposals, ProposalGenerator, ReidGate, Template,
};

/// The four pluggable components.
pub struct Backends {
    pub flow: Box<dyn FlowEstimator>,
    pub refiner: Box<dyn MaskRefiner>,
    pub proposals: Box<dyn ProposalGenerator>,
    pub descriptor: Box<dyn DescriptorExtractor>,
}

impl Default for Backends {
    fn default() -> Self {
        Self {
            flow: Box::new(BlockMatchingFlow::default()),
            refiner: Box::new(ColorModelRefiner::default()),
            proposals: Box::new(NccProposals::default()),
            descriptor: Box::new(HistogramDescriptor),
        }
    }
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends")
            .field("flow", &self.flow.name())
            .field("refiner", &self.refiner.name())
            .field("proposals", &self.proposals.name())
            .field("descriptor", &self.descriptor.name())
            .finish()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EngineConfig {
    pub gate: ReidGate,
    pub propagation: PropagationConfig,
    /// When false the engine stops after the initial forward sweep.
    pub reid_enabled: bool,
    /// Upper bound on retrieval iterations; never above `N * K`.
    pub max_iterations: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            gate: ReidGate::default(),
            propagation: PropagationConfig::default(),
            reid_enabled: true,
            max_iterations: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.gate.rho_reid) || !unit(self.gate.rho_occ) {
            return Err(Error::InvalidInput(format!(
                "thresholds must lie in (0, 1), got rho_reid={} rho_occ={}",
                self.gate.rho_reid, self.gate.rho_occ
            )));
        }
        if self.propagation.patch_size == 0 {
            return Err(Error::InvalidInput("patch size must be positive".into()));
        }
        if !(self.propagation.context_factor >= 1.0) {
            return Err(Error::InvalidInput("context factor must be at least 1".into()));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidInput("max iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// An accepted re-identification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retrieval {
    pub frame: usize,
    pub instance: usize,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Estimates the field of one frame pair once for all instances.
struct SharedField<'f> {
    inner: &'f dyn FlowEstimator,
    field: OnceLock<FlowField>,
}

impl<'f> SharedField<'f> {
    fn new(inner: &'f dyn FlowEstimator) -> Self {
        Self {
            inner,
            field: OnceLock::new(),
        }
    }
}

impl FlowEstimator for SharedField<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn estimate(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<FlowField> {
        if let Some(f) = self.field.get() {
            return Ok(f.clone());
        }
        let f = self.inner.estimate(src, dst)?;
        Ok(self.field.get_or_init(|| f).clone())
    }
}

/// Probability maps, checkpoints and templates for one sequence.
#[derive(Debug)]
pub struct EngineState {
    templates: Vec<Template>,
    probs: Vec<Vec<ProbMap>>,
    checkpoints: Vec<Vec<usize>>,
    iterations: usize,
    // Proposals and descriptors depend only on the frame and the template.
    candidates: Vec<Vec<OnceLock<Vec<Candidate>>>>,
}

impl EngineState {
    /// Assembles a state, checking its invariants.
    ///
    /// `probs` and `checkpoints` are indexed `[frame][instance]`.
    pub fn from_parts(
        templates: Vec<Template>,
        probs: Vec<Vec<ProbMap>>,
        checkpoints: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = probs.len();
        let k = templates.len();
        if n < 2 || k == 0 || checkpoints.len() != n {
            return Err(Error::InvalidInput("state needs >= 2 frames and >= 1 instance".into()));
        }
        let dims = probs[0]
            .first()
            .map(|p| p.dims())
            .ok_or_else(|| Error::InvalidInput("frame 0 has no maps".into()))?;
        for (i, (row, cs)) in probs.iter().zip(&checkpoints).enumerate() {
            if row.len() != k || cs.len() != k {
                return Err(Error::InvalidInput(format!("frame {i} has the wrong instance count")));
            }
            for p in row {
                p.ensure_dims(dims)?;
            }
            if cs.iter().any(|&c| c >= n) {
                return Err(Error::InvalidInput(format!("frame {i} has a checkpoint out of range")));
            }
        }
        if checkpoints[0].iter().any(|&c| c != 0) {
            return Err(Error::InvalidInput("frame 0 must be its own checkpoint".into()));
        }
        let candidates = (0..n).map(|_| (0..k).map(|_| OnceLock::new()).collect()).collect();
        Ok(Self {
            templates,
            probs,
            checkpoints,
            iterations: 0,
            candidates,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.probs.len()
    }

    pub fn num_instances(&self) -> usize {
        self.templates.len()
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn prob(&self, frame: usize, instance: usize) -> &ProbMap {
        &self.probs[frame][instance]
    }

    pub fn probs(&self) -> &[Vec<ProbMap>] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<Vec<ProbMap>> {
        self.probs
    }

    pub fn checkpoint(&self, frame: usize, instance: usize) -> usize {
        self.checkpoints[frame][instance]
    }

    /// Checkpoints of one instance across all frames.
    pub fn checkpoints_of(&self, instance: usize) -> Vec<usize> {
        self.checkpoints.iter().map(|row| row[instance]).collect()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// One pass of the retrieval loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub retrieval: Retrieval,
    pub forward_updated: usize,
    pub backward_updated: usize,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.retrieval;
        write!(
            f,
            "iteration={} frame={} instance={} score={:.6} box={},{},{},{} forward={} backward={}",
            self.iteration,
            r.frame,
            r.instance + 1,
            r.score,
            r.bbox.x0,
            r.bbox.y0,
            r.bbox.x1,
            r.bbox.y1,
            self.forward_updated,
            self.backward_updated
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// A full scan found nothing to retrieve.
    NoRetrieval,
    /// The iteration cap was reached first.
    IterationCap,
    /// Re-identification was switched off.
    ReidDisabled,
}

#[derive(Debug)]
pub struct RunOutput {
    /// Maps indexed `[frame][instance]`.
    pub probs: Vec<Vec<ProbMap>>,
    pub labels: Vec<LabelMap>,
    pub iterations: Vec<IterationRecord>,
    pub checkpoints: Vec<Vec<usize>>,
    pub stop: StopReason,
}

impl RunOutput {
    /// True when the loop was cut short by the iteration cap.
    pub fn truncated(&self) -> bool {
        self.stop == StopReason::IterationCap
    }
}

/// Runs the algorithm on one sequence with a fixed set of components.
pub struct Engine<'a> {
    seq: &'a VideoSequence,
    backends: &'a Backends,
    cfg: EngineConfig,
}

impl<'a> Engine<'a> {
    pub fn new(seq: &'a VideoSequence, backends: &'a Backends, cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { seq, backends, cfg })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    fn propagate(&self, from: usize, to: usize, prob: &ProbMap, instance: usize) -> Result<ProbMap> {
        self.propagate_with(self.backends.flow.as_ref(), from, to, prob, instance)
    }

    fn propagate_with(
        &self,
        flow: &dyn FlowEstimator,
        from: usize,
        to: usize,
        prob: &ProbMap,
        instance: usize,
    ) -> Result<ProbMap> {
        propagate_mask(
            self.seq.frame(from)?,
            self.seq.frame(to)?,
            prob,
            instance,
            flow,
            self.backends.refiner.as_ref(),
            &self.cfg.propagation,
        )
    }

    pub fn build_templates(&self, first: &[ProbMap]) -> Result<Vec<Template>> {
        let frame = self.seq.frame(0)?.frame;
        first
            .iter()
            .enumerate()
            .map(|(k, p)| Template::from_first_frame(frame, p, k, self.backends.descriptor.as_ref()))
            .collect()
    }

    /// Builds templates and propagates every instance forward from frame 0.
    pub fn initialize(&self, first: &[ProbMap]) -> Result<EngineState> {
        if first.is_empty() {
            return Err(Error::InvalidInput("at least one first-frame mask is required".into()));
        }
        if first.len() > u8::MAX as usize {
            return Err(Error::InvalidInput(format!("at most 255 instances, got {}", first.len())));
        }
        for p in first {
            p.ensure_dims(self.seq.dims())?;
            if !p.is_valid_probability() {
                return Err(Error::InvalidInput("first-frame mask outside [0, 1]".into()));
            }
        }
        let templates = self.build_templates(first)?;
        let n = self.seq.len();
        let k = first.len();
        let mut probs = Vec::with_capacity(n);
        probs.push(first.to_vec());
        for i in 1..n {
            let prev: &Vec<ProbMap> = &probs[i - 1];
            let shared = SharedField::new(self.backends.flow.as_ref());
            let row = prev
                .par_iter()
                .enumerate()
                .map(|(inst, p)| self.propagate_with(&shared, i - 1, i, p, inst))
                .collect::<Result<Vec<_>>>()?;
            probs.push(row);
        }
        EngineState::from_parts(templates, probs, vec![vec![0; k]; n])
    }

    fn candidates<'s>(&self, state: &'s EngineState, frame: usize, instance: usize) -> Result<&'s [Candidate]> {
        let cell = &state.candidates[frame][instance];
        if let Some(c) = cell.get() {
            return Ok(c);
        }
        let scored = score_candidates(
            self.seq.frame(frame)?,
            &state.templates[instance],
            self.backends.proposals.as_ref(),
            self.backends.descriptor.as_ref(),
        )?;
        Ok(cell.get_or_init(|| scored))
    }

    /// Finds the most similar accepted retrieval over frames `1..N`.
    ///
    /// Cells anchored at their own frame are skipped. Equal scores keep the
    /// first cell in frame-major order.
    pub fn scan_retrievals(&self, state: &EngineState) -> Result<Option<Retrieval>> {
        let n = state.num_frames();
        let k = state.num_instances();
        let cells: Vec<(usize, usize)> = (1..n)
            .flat_map(|i| (0..k).map(move |kk| (i, kk)))
            .filter(|&(i, kk)| state.checkpoints[i][kk] != i)
            .collect();
        let outcomes = cells
            .par_iter()
            .map(|&(i, kk)| {
                let candidates = self.candidates(state, i, kk)?;
                let current = prob_box(&state.probs[i][kk], BOX_THRESHOLD);
                Ok(select_and_gate(candidates, current, self.cfg.gate))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut best: Option<Retrieval> = None;
        let mut best_score = crate::reid::REJECTED;
        for (&(i, kk), out) in cells.iter().zip(&outcomes) {
            if out.score > best_score {
                best_score = out.score;
                best = Some(Retrieval {
                    frame: i,
                    instance: kk,
                    bbox: out.bbox,
                    score: out.score,
                });
            }
        }
        Ok(best)
    }

    /// Rebuilds the retrieved instance's map inside the retrieved box.
    ///
    /// The refiner is guided by the frame-0 probability patch of the
    /// instance instead of a warped map. The cell becomes its own checkpoint.
    pub fn recover(&self, state: &mut EngineState, r: &Retrieval) -> Result<()> {
        let n = state.num_frames();
        if r.frame == 0 || r.frame >= n {
            return Err(Error::FrameIndex { index: r.frame, len: n });
        }
        if r.instance >= state.num_instances() {
            return Err(Error::InvalidInput(format!("no instance {}", r.instance)));
        }
        let (w, h) = self.seq.dims();
        if !r.bbox.fits(w, h) {
            return Err(Error::InvalidInput(format!("retrieved box {:?} outside the frame", r.bbox)));
        }
        let frame = self.seq.frame(r.frame)?;
        // The last frame has no successor; its predecessor serves as flow context.
        let neighbor = if r.frame + 1 < n { r.frame + 1 } else { r.frame - 1 };
        let field = self.backends.flow.estimate(frame, self.seq.frame(neighbor)?)?;
        field.ensure_dims((w, h))?;

        let size = (self.cfg.propagation.patch_size, self.cfg.propagation.patch_size);
        let template_box = state.templates[r.instance].bbox;
        let guidance = crop_resize(&state.probs[0][r.instance], template_box, size);
        let rgb = crop_resize(frame.frame, r.bbox, size);
        let flow_patch = crop_resize_flow(&field, r.bbox, size);
        let refined = run_refiner(
            self.backends.refiner.as_ref(),
            &RefineInput {
                rgb: &rgb,
                flow: &flow_patch,
                coarse: &guidance,
                context: PatchContext {
                    frame: r.frame,
                    instance: r.instance,
                    geometry: PatchGeometry::new(r.bbox, size),
                },
            },
        )?;
        state.probs[r.frame][r.instance] = uncrop(&refined, r.bbox, w, h);
        state.checkpoints[r.frame][r.instance] = r.frame;
        Ok(())
    }

    /// Walks away from the anchor frame, re-propagating while the anchor is
    /// strictly closer than each cell's current checkpoint.
    ///
    /// Returns the number of frames updated.
    pub fn propagate_from_checkpoint(
        &self,
        state: &mut EngineState,
        anchor: usize,
        instance: usize,
        direction: Direction,
    ) -> Result<usize> {
        let n = state.num_frames();
        if anchor >= n {
            return Err(Error::FrameIndex { index: anchor, len: n });
        }
        let steps: Box<dyn Iterator<Item = (usize, usize)>> = match direction {
            Direction::Forward => Box::new((anchor + 1..n).map(|i| (i - 1, i))),
            Direction::Backward => Box::new((1..anchor).rev().map(|i| (i + 1, i))),
        };
        let mut updated = 0;
        for (from, to) in steps {
            let current = state.checkpoints[to][instance];
            if current.abs_diff(to) <= anchor.abs_diff(to) {
                break;
            }
            let next = self.propagate(from, to, &state.probs[from][instance], instance)?;
            state.probs[to][instance] = next;
            state.checkpoints[to][instance] = anchor;
            updated += 1;
        }
        Ok(updated)
    }

    /// Runs the full retrieval loop on an initialized state.
    pub fn refine(&self, state: &mut EngineState) -> Result<(Vec<IterationRecord>, StopReason)> {
        let mut records = Vec::new();
        if !self.cfg.reid_enabled {
            return Ok((records, StopReason::ReidDisabled));
        }
        let bound = state.num_frames() * state.num_instances();
        let cap = self.cfg.max_iterations.map_or(bound, |m| m.min(bound));
        while state.iterations < cap {
            let Some(r) = self.scan_retrievals(state)? else {
                return Ok((records, StopReason::NoRetrieval));
            };
            self.recover(state, &r)?;
            let forward_updated = self.propagate_from_checkpoint(state, r.frame, r.instance, Direction::Forward)?;
            let backward_updated =
                self.propagate_from_checkpoint(state, r.frame, r.instance, Direction::Backward)?;
            state.iterations += 1;
            let record = IterationRecord {
                iteration: state.iterations,
                retrieval: r,
                forward_updated,
                backward_updated,
            };
            log::info!("{record}");
            records.push(record);
        }
        log::warn!("retrieval loop stopped at the iteration cap ({cap})");
        Ok((records, StopReason::IterationCap))
    }

    pub fn run(&self, first: &[ProbMap]) -> Result<RunOutput> {
        let mut state = self.initialize(first)?;
        let (iterations, stop) = self.refine(&mut state)?;
        let labels = state
            .probs
            .par_iter()
            .map(|row| merge(&row.iter().collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        Ok(RunOutput {
            labels,
            iterations,
            checkpoints: state.checkpoints,
            probs: state.probs,
            stop,
        })
    }
}

/// Normalized per-pixel competition scores, background first.
///
/// The background term is the product of `1 - p_k` and every score is
/// divided by the sum of all `K + 1` terms.
pub fn merge_scores(values: &[f64]) -> Vec<f64> {
    let background: f64 = values.iter().map(|p| 1.0 - p).product();
    let z = background + values.iter().sum::<f64>();
    std::iter::once(background).chain(values.iter().copied()).map(|s| s / z).collect()
}

/// Merges per-instance maps of one frame into a label map.
///
/// Exact ties go to the smaller label, so background wins a tie.
pub fn merge(maps: &[&ProbMap]) -> Result<LabelMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidInput("merge needs at least one map".into()))?;
    if maps.len() > u8::MAX as usize {
        return Err(Error::InvalidInput("at most 255 instances can be merged".into()));
    }
    for m in maps {
        m.ensure_dims(first.dims())?;
    }
    let (w, h) = first.dims();
    let mut values = vec![0.0f64; maps.len()];
    Ok(LabelMap::from_fn(w, h, |x, y| {
        for (v, m) in values.iter_mut().zip(maps) {
            *v = m.get(x, y) as f64;
        }
        let scores = merge_scores(&values);
        let mut label = 0;
        for (k, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[label] {
                label = k;
            }
        }
        label as u8
    }))
}
