//! Shared fixtures for the counting benchmarks.

use unstable_entropy::rng::{stream, Purpose};
use unstable_entropy::{
    build_grid, build_linear_model, disintegrate, ConditionalMeasure, InvariantMeasureModel,
    Partition, SystemHandle, UnstableScheme,
};

/// Cat map, its canonical measure, the k=10 grid scheme, and one anchored
/// leaf conditional.
pub fn cat_fixture(seed: u64) -> (SystemHandle, UnstableScheme, ConditionalMeasure) {
    let system = build_linear_model(&[vec![2, 1], vec![1, 1]]).unwrap();
    let grid = build_grid(2, 10, 0.15).unwrap();
    let scheme = UnstableScheme::new(Partition::Grid(grid), 0.2).unwrap();
    let measure = InvariantMeasureModel::for_system(&system);
    let mut rng = stream(seed, Purpose::Anchors, 0);
    let anchor = measure.sample_point(0, &mut rng);
    let cond = disintegrate(&system, &measure, &scheme, &anchor).unwrap();
    (system, scheme, cond)
}
