// Turns overlapping per-object probability maps into one label map.

use vosreid::engine::{merge, merge_scores};
use vosreid::grid::ProbMap;

fn disc(cx: f32, cy: f32, r: f32, peak: f32) -> ProbMap {
    ProbMap::from_fn(40, 24, |x, y| {
        let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
        peak * (1.0 - (d / r).min(1.0))
    })
}

fn main() -> vosreid::Result<()> {
    let maps = [disc(12.0, 12.0, 10.0, 0.9), disc(22.0, 12.0, 10.0, 0.8), disc(30.0, 8.0, 6.0, 1.0)];
    let labels = merge(&maps.iter().collect::<Vec<_>>())?;

    for y in (0..24).step_by(2) {
        let row: String = (0..40).map(|x| char::from(b'0' + labels.get(x, y))).collect();
        println!("{row}");
    }

    let (x, y) = (17, 12);
    let p: Vec<f64> = maps.iter().map(|m| m.get(x, y) as f64).collect();
    println!("pixel ({x}, {y}): p = {p:.3?}, scores (background first) {:.3?}", merge_scores(&p));
    println!("two-object case (0.6, 0.7): {:.4?}", merge_scores(&[0.6, 0.7]));
    Ok(())
}
