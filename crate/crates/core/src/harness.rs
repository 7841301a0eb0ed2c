//! Experiments: training runs with periodic measurement, weight sweeps over
//! single edges and two-input manifolds, and causal-plane projections.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::datasets::{self, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measure::{self, EIResult, LayerSlice, PerturbationConfig};
use crate::nn::{Network, TrainConfig};
use crate::rng;

const INIT_TAG: u64 = 0x494e_4954;
const SHUFFLE_TAG: u64 = 0x5348_5546;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Iris,
    Mnist5,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Iris => "iris",
            Task::Mnist5 => "mnist5",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iris" => Ok(Task::Iris),
            "mnist5" => Ok(Task::Mnist5),
            other => Err(Error::Config(format!(
                "unknown task '{other}' (expected iris or mnist5)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: Task,
    /// Node counts from the input layer to the output layer.
    pub widths: Vec<usize>,
    pub activation: ActivationKind,
    pub train: TrainConfig,
    /// Epochs between checkpoints; epoch 0 and the last epoch are always
    /// measured.
    pub measure_every: usize,
    pub perturbation: PerturbationConfig,
    /// Sample count for the last checkpoint, if different.
    pub final_samples: Option<u64>,
    /// Number of runs; run `r` trains with seed `train.seed + r`.
    pub runs: usize,
    /// Initial weights are uniform on `±init_scale/√fan_in`.
    pub init_scale: f64,
    /// Held-out fraction for Iris; MNIST uses its own test file.
    pub test_fraction: f64,
    /// Seed of the Iris train/test split, shared by all runs.
    pub split_seed: u64,
    pub data_dir: PathBuf,
}

impl ExperimentSpec {
    /// The standard setup for each task: sigmoid, lr 0.01, `[4,5,5,3]` with
    /// batch 10 for 4000 epochs on Iris, `[25,6,6,5]` with batch 50 for 500
    /// epochs on mnist5, three runs.
    pub fn canonical(task: Task) -> Self {
        let (widths, batch_size, epochs, measure_every) = match task {
            Task::Iris => (vec![4, 5, 5, 3], 10, 4000, 40),
            Task::Mnist5 => (vec![25, 6, 6, 5], 50, 500, 5),
        };
        ExperimentSpec {
            task,
            widths,
            activation: ActivationKind::Sigmoid,
            train: TrainConfig {
                learning_rate: 0.01,
                batch_size,
                epochs,
                seed: 0,
            },
            measure_every,
            perturbation: PerturbationConfig::default(),
            final_samples: None,
            runs: 3,
            init_scale: 1.0,
            test_fraction: 1.0 / 3.0,
            split_seed: 0,
            data_dir: PathBuf::from("data"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.perturbation.validate()?;
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {:?}", self.widths)));
        }
        if self.measure_every == 0 {
            return Err(Error::Config("measure_every must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if let Some(0) = self.final_samples {
            return Err(Error::Config("final samples must be at least 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init scale must be positive, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }

    /// Settings of run `r`: one run, seed offset by `r`.
    pub fn run_spec(&self, r: usize) -> ExperimentSpec {
        let mut s = self.clone();
        s.train.seed = self.train.seed.wrapping_add(r as u64);
        s.runs = 1;
        s
    }

    /// Epochs at which the run is measured.
    pub fn checkpoint_epochs(&self) -> Vec<usize> {
        let mut epochs: Vec<usize> = (0..=self.train.epochs).step_by(self.measure_every).collect();
        if epochs.last() != Some(&self.train.epochs) {
            epochs.push(self.train.epochs);
        }
        epochs
    }
}

/// Loads the task's train and test sets from `spec.data_dir`.
pub fn load_task(spec: &ExperimentSpec) -> Result<(Dataset, Dataset)> {
    load_task_data(spec.task, &spec.data_dir, spec.test_fraction, spec.split_seed)
}

pub fn load_task_data(task: Task, data_dir: &Path, test_fraction: f64, split_seed: u64) -> Result<(Dataset, Dataset)> {
    match task {
        Task::Iris => {
            let all = datasets::load_iris(data_dir.join("iris.csv"))?;
            datasets::train_test_split(
                &all,
                &SplitSpec {
                    test_fraction,
                    seed: split_seed,
                },
            )
        }
        Task::Mnist5 => {
            let dir = data_dir.join("mnist");
            let train = datasets::load_mnist5(
                dir.join("train-images-idx3-ubyte.gz"),
                dir.join("train-labels-idx1-ubyte.gz"),
            )?;
            let test = datasets::load_mnist5(
                dir.join("t10k-images-idx3-ubyte.gz"),
                dir.join("t10k-labels-idx1-ubyte.gz"),
            )?;
            Ok((train, test))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// One result per layer transition, input side first.
    pub layers: Vec<EIResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: ExperimentSpec,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunRecord {
    pub fn seed(&self) -> u64 {
        self.spec.train.seed
    }

    pub fn layer_count(&self) -> usize {
        self.spec.widths.len() - 1
    }
}

/// Initial network of a run.
pub fn initial_network(spec: &ExperimentSpec) -> Result<Network> {
    Network::from_widths(
        &spec.widths,
        spec.activation,
        spec.init_scale,
        rng::derive_seed(spec.train.seed, INIT_TAG),
    )
}

fn check_data(spec: &ExperimentSpec, train: &Dataset, test: &Dataset) -> Result<()> {
    let (n_in, n_out) = (spec.widths[0], *spec.widths.last().expect("validated widths"));
    for ds in [train, test] {
        if ds.is_empty() {
            return Err(Error::EmptyData("training or test set"));
        }
        if ds.features.cols() != n_in {
            return Err(Error::Dimension {
                context: "input width vs dataset features",
                expected: ds.features.cols(),
                actual: n_in,
            });
        }
        if ds.targets.cols() != n_out {
            return Err(Error::Dimension {
                context: "output width vs dataset classes",
                expected: ds.targets.cols(),
                actual: n_out,
            });
        }
    }
    Ok(())
}

/// Trains one run of `spec` (with seed `spec.train.seed`), loading data from
/// `spec.data_dir`.
pub fn train_run(spec: &ExperimentSpec) -> Result<RunRecord> {
    spec.validate()?;
    let (train, test) = load_task(spec)?;
    train_run_on(spec, &train, &test).map(|(record, _)| record)
}

/// Trains one run on the given data and returns the record and the final
/// network.
pub fn train_run_on(spec: &ExperimentSpec, train: &Dataset, test: &Dataset) -> Result<(RunRecord, Network)> {
    spec.validate()?;
    check_data(spec, train, test)?;
    let mut net = initial_network(spec)?;
    let mut shuffle = rng::seeded(rng::derive_seed(spec.train.seed, SHUFFLE_TAG));
    let epochs = spec.checkpoint_epochs();
    let mut checkpoints = Vec::with_capacity(epochs.len());
    let mut done = 0;
    for &epoch in &epochs {
        while done < epoch {
            net.train_epoch(
                &train.features,
                &train.targets,
                spec.train.batch_size,
                spec.train.learning_rate,
                &mut shuffle,
            )?;
            done += 1;
        }
        let mut cfg = spec.perturbation;
        if epoch == spec.train.epochs {
            if let Some(s) = spec.final_samples {
                cfg.samples = s;
            }
        }
        let cp = checkpoint(&net, epoch, train, test, &cfg)?;
        log::info!(
            "{} seed {}: epoch {epoch}/{} train loss {:.5} test acc {:.3}",
            spec.task,
            spec.train.seed,
            spec.train.epochs,
            cp.train_loss,
            cp.test_accuracy
        );
        checkpoints.push(cp);
    }
    Ok((
        RunRecord {
            spec: spec.clone(),
            checkpoints,
        },
        net,
    ))
}

fn checkpoint(
    net: &Network,
    epoch: usize,
    train: &Dataset,
    test: &Dataset,
    cfg: &PerturbationConfig,
) -> Result<Checkpoint> {
    Ok(Checkpoint {
        epoch,
        train_loss: net.mse(&train.features, &train.targets)?,
        test_loss: net.mse(&test.features, &test.targets)?,
        test_accuracy: net.accuracy(&test.features, &test.targets)?,
        layers: measure::measure_network(net, cfg)?,
    })
}

/// Every run of `spec`, in run order; runs execute in parallel.
pub fn train_runs(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let (train, test) = load_task(spec)?;
    (0..spec.runs)
        .into_par_iter()
        .map(|r| train_run_on(&spec.run_spec(r), &train, &test).map(|(rec, _)| rec))
        .collect()
}

/// `steps` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::Config(format!("a grid needs at least 2 steps, got {steps}")));
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain(format!("grid bounds must be finite, got [{lo}, {hi}]")));
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|k| {
            if k + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * k as f64 / last
            }
        })
        .collect())
}

/// `(w, ei)` of a single edge over an even weight grid.
pub fn sweep_edge(
    activation: ActivationKind,
    w_min: f64,
    w_max: f64,
    steps: usize,
    cfg: &PerturbationConfig,
) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    linear_grid(w_min, w_max, steps)?
        .into_iter()
        .map(|w| Ok((w, measure::ei_joint(&LayerSlice::single_edge(w, activation)?, cfg)?)))
        .collect()
}

/// Weight of the largest value of a sweep; the first wins ties.
pub fn sweep_argmax(curve: &[(f64, f64)]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(w, v) in curve {
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((w, v));
        }
    }
    best.map(|(w, _)| w)
}

/// Measurements of the 2→1 slice `(w_a, w_b)` on a grid. Matrices are
/// indexed `[a][b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub w_a: Vec<f64>,
    pub w_b: Vec<f64>,
    pub ei: Matrix,
    pub sensitivity: Matrix,
    pub degeneracy: Matrix,
}

pub fn sweep_manifold(
    activation: ActivationKind,
    w_a: &[f64],
    w_b: &[f64],
    cfg: &PerturbationConfig,
) -> Result<Manifold> {
    cfg.validate()?;
    if w_a.is_empty() || w_b.is_empty() {
        return Err(Error::EmptyData("manifold grid"));
    }
    if w_a.iter().chain(w_b).any(|w| !w.is_finite()) {
        return Err(Error::Domain("manifold grid values must be finite".into()));
    }
    let mut ei = Matrix::zeros(w_a.len(), w_b.len());
    let mut sens = ei.clone();
    let mut deg = ei.clone();
    for (i, &a) in w_a.iter().enumerate() {
        for (j, &b) in w_b.iter().enumerate() {
            let r = measure::measure_all(&LayerSlice::fan_in(&[a, b], activation)?, cfg)?;
            let e = r.ei.expect("2→1 slices always fit a joint key");
            ei.set(i, j, e);
            sens.set(i, j, r.sensitivity);
            deg.set(i, j, r.degeneracy.expect("joint measured"));
        }
    }
    Ok(Manifold {
        w_a: w_a.to_vec(),
        w_b: w_b.to_vec(),
        ei,
        sensitivity: sens,
        degeneracy: deg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalPlanePoint {
    pub layer_index: usize,
    pub epoch: usize,
    /// Degeneracy in bits.
    pub x: f64,
    /// Sensitivity in bits.
    pub y: f64,
}

/// Per-layer paths through the (degeneracy, sensitivity) plane in epoch
/// order. Layers without a joint EI are left out.
pub fn causal_plane_series(record: &RunRecord) -> Result<Vec<Vec<CausalPlanePoint>>> {
    if record.checkpoints.is_empty() {
        return Err(Error::EmptyData("run record checkpoints"));
    }
    let mut paths = Vec::new();
    for layer in 0..record.layer_count() {
        let mut path = Vec::with_capacity(record.checkpoints.len());
        for cp in &record.checkpoints {
            let r = cp.layers.get(layer).ok_or(Error::Dimension {
                context: "checkpoint layer results",
                expected: record.layer_count(),
                actual: cp.layers.len(),
            })?;
            if let Some(d) = r.degeneracy {
                path.push(CausalPlanePoint {
                    layer_index: layer,
                    epoch: cp.epoch,
                    x: d,
                    y: r.sensitivity,
                });
            }
        }
        if path.is_empty() {
            log::warn!("layer {layer} has no joint EI; left out of the causal plane");
        } else {
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Sum of Euclidean distances between consecutive points.
pub fn path_length(path: &[CausalPlanePoint]) -> f64 {
    path.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum()
}

/// Adds `extra_hidden` copies of the last hidden layer (`-1` removes one).
pub fn redundant_layer_variant(spec: &ExperimentSpec, extra_hidden: i32) -> Result<ExperimentSpec> {
    let hidden = spec.widths.len().saturating_sub(2);
    let mut out = spec.clone();
    match extra_hidden {
        0 => {}
        n if n > 0 => {
            if hidden == 0 {
                return Err(Error::Config("no hidden layer to repeat".into()));
            }
            let w = spec.widths[hidden];
            for _ in 0..n {
                out.widths.insert(hidden + 1, w);
            }
        }
        -1 => {
            if hidden == 0 {
                return Err(Error::Config("no hidden layer left to remove".into()));
            }
            out.widths.remove(hidden);
        }
        n => {
            return Err(Error::Config(format!(
                "extra hidden layers must be at least -1, got {n}"
            )))
        }
    }
    Ok(out)
}

/// Where a run's EI and training loss change fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeAlignment {
    /// Midpoint epoch of the checkpoint interval with the largest mean |ΔEI|
    /// across layers.
    pub ei_epoch: f64,
    /// Midpoint epoch of the interval with the largest |Δ train loss|.
    pub loss_epoch: f64,
    pub window: f64,
}

impl ChangeAlignment {
    /// Whether windows of width `window` centred on the two epochs overlap.
    pub fn overlaps(&self) -> bool {
        (self.ei_epoch - self.loss_epoch).abs() < self.window
    }
}

/// Locates the steepest EI and loss changes with windows spanning
/// `window_fraction` of the run's epochs.
pub fn change_alignment(record: &RunRecord, window_fraction: f64) -> Result<ChangeAlignment> {
    let cps = &record.checkpoints;
    if cps.len() < 2 {
        return Err(Error::EmptyData("checkpoint intervals"));
    }
    let mut best_ei = (f64::NEG_INFINITY, 0.0);
    let mut best_loss = (f64::NEG_INFINITY, 0.0);
    for w in cps.windows(2) {
        let mid = (w[0].epoch + w[1].epoch) as f64 / 2.0;
        let deltas: Vec<f64> = w[0]
            .layers
            .iter()
            .zip(&w[1].layers)
            .filter_map(|(a, b)| Some((b.ei? - a.ei?).abs()))
            .collect();
        if !deltas.is_empty() {
            let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
            if mean > best_ei.0 {
                best_ei = (mean, mid);
            }
        }
        let dl = (w[1].train_loss - w[0].train_loss).abs();
        if dl > best_loss.0 {
            best_loss = (dl, mid);
        }
    }
    if best_ei.0 == f64::NEG_INFINITY {
        return Err(Error::EmptyData("joint EI values"));
    }
    Ok(ChangeAlignment {
        ei_epoch: best_ei.1,
        loss_epoch: best_loss.1,
        window: window_fraction * record.spec.train.epochs as f64,
    })
}

/// Mean of `f` over the last `ceil(fraction·n)` checkpoints (at least one).
pub fn tail_mean(record: &RunRecord, fraction: f64, f: impl Fn(&Checkpoint) -> Option<f64>) -> Option<f64> {
    let n = record.checkpoints.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n.max(1));
    let vals: Vec<f64> = record.checkpoints[n.saturating_sub(k)..].iter().filter_map(f).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Mean φ over hidden-source transitions (every layer after the first
/// whose φ is available) in the last tenth of checkpoints.
pub fn hidden_phi_tail(record: &RunRecord) -> Option<f64> {
    tail_mean(record, 0.1, |cp| {
        let phis: Vec<f64> = cp.layers.iter().skip(1).filter_map(|r| r.phi).collect();
        (!phis.is_empty()).then(|| phis.iter().sum::<f64>() / phis.len() as f64)
    })
}
