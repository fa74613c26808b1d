//! Fixtures shared by the criterion benches in `benches/`.

use tbloc::geometry::{build, Configuration};
use tbloc::model::{NrlModel, ToyModel};

/// Periodic two-species chain with on-site ±0.5 eV and `n` sites.
pub fn toy_chain(n: usize) -> (ToyModel, Configuration) {
    let model = ToyModel::binary_chain(0.5);
    let config = build::chain(n, 1.0, &["A", "B"], true, 0.5).expect("valid chain");
    (model, config)
}

/// Open 4×4×4 rock-salt cluster with on-site ±1 eV.
pub fn toy_cluster() -> (ToyModel, Configuration) {
    let model = ToyModel::new(&[("A", 1.0), ("B", -1.0)], -std::f64::consts::E, 1.0, 1.2);
    let config = build::rock_salt([4, 4, 4], 1.0, ["A", "B"], false, 0.5).expect("valid cluster");
    (model, config)
}

/// NRL sp silicon, conventional cubic cell repeated `reps` times.
pub fn silicon(reps: [usize; 3]) -> (NrlModel, Configuration) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../params/si_sp.par");
    let text = std::fs::read_to_string(path).expect("si_sp.par present");
    let model = NrlModel::from_native(&text, None).expect("valid parameter file");
    let config = build::diamond_cubic("Si", 5.43, reps).expect("valid cell");
    (model, config)
}
