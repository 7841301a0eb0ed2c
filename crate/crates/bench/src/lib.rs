//! Fixtures shared by the benchmarks.

use ei_probe::{Matrix, Network};

/// Deterministic inputs in [0, 1] with one-hot targets, cycling through the classes.
pub fn synthetic_task(rows: usize, inputs: usize, classes: usize) -> (Matrix, Matrix) {
    let x = Matrix::from_fn(rows, inputs, |r, c| ((r * 31 + c * 17) % 101) as f64 / 100.0);
    let t = Matrix::from_fn(rows, classes, |r, c| if r % classes == c { 1.0 } else { 0.0 });
    (x, t)
}

pub fn network(widths: &[usize], seed: u64) -> Network {
    Network::from_widths(widths, ei_probe::ActivationKind::Sigmoid, 1.0, seed).expect("valid widths")
}
