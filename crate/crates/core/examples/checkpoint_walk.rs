// Replays recoveries on a small scene and prints the checkpoint of every
// frame after each step. A walk only overwrites maps whose anchor is
// farther away than the new one.

use std::sync::Arc;

use vosreid::bbox::prob_box;
use vosreid::engine::{Backends, Direction, Engine, EngineConfig, Retrieval};
use vosreid::grid::ProbMap;
use vosreid::reid::HistogramDescriptor;
use vosreid::synth::{self, OracleFlow, OracleProposals, OracleRefiner};

fn main() -> vosreid::Result<()> {
    let mut spec = synth::unoccluded_scene();
    spec.frames = 9;
    spec.objects.truncate(1);
    let scene = Arc::new(synth::generate(&spec, 0)?);
    let backends = Backends {
        flow: Box::new(OracleFlow::new(scene.clone())),
        refiner: Box::new(OracleRefiner::new(scene.clone())),
        proposals: Box::new(OracleProposals::new(scene.clone())),
        descriptor: Box::new(HistogramDescriptor),
    };
    let engine = Engine::new(&scene.sequence, &backends, EngineConfig::default())?;
    let mut state = engine.initialize(&scene.first_masks())?;
    println!("initial        {:?}", state.checkpoints_of(0));

    for frame in [8, 3, 6] {
        let bbox = prob_box(&ProbMap::from_label(&scene.ground_truth[frame], 1), 0.5).expect("object visible");
        let r = Retrieval { frame, instance: 0, bbox, score: 1.0 };
        engine.recover(&mut state, &r)?;
        let f = engine.propagate_from_checkpoint(&mut state, frame, 0, Direction::Forward)?;
        let b = engine.propagate_from_checkpoint(&mut state, frame, 0, Direction::Backward)?;
        println!("recover at {frame}   {:?}  (forward {f}, backward {b})", state.checkpoints_of(0));
    }
    Ok(())
}
