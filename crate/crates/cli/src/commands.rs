use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use ei_probe::convergence::{self, ConvergencePolicy, TracePoint, EXTRAPOLATION_HORIZON};
use ei_probe::harness::{self, ExperimentSpec, RunRecord, Task};
use ei_probe::measure::{self, LayerSlice, PerturbationConfig};
use ei_probe::viz::{self, PlotSpec, Series};
use ei_probe::{record, report, weights, ActivationKind, Error, Network};

pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(flag: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{flag}: {msg}"))
}

#[derive(Parser)]
#[command(
    name = "ei-probe",
    version,
    about = "Effective information of small feedforward networks"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// EI of a single edge over a grid of weights
    SweepEdge(SweepEdgeArgs),
    /// EI, sensitivity and degeneracy of a 2→1 slice over a weight grid
    SweepManifold(SweepManifoldArgs),
    /// Train a network and measure every layer at checkpoints
    Train(TrainArgs),
    /// Measure every layer of a saved or freshly initialized network
    Measure(MeasureArgs),
    /// Causal-plane paths (degeneracy, sensitivity) of a run
    Plane(PlaneArgs),
    /// Sample-count convergence of one layer's EI, EI_parts or sensitivity
    Converge(ConvergeArgs),
    /// Summarize run files
    Report(ReportArgs),
}

#[derive(Args)]
struct Output {
    /// Output file for the primary result
    #[arg(long)]
    out: PathBuf,
    /// Also write the primary result to standard output
    #[arg(long)]
    stdout: bool,
}

#[derive(Args)]
struct Perturbation {
    /// Bins per node
    #[arg(long)]
    bins: Option<u32>,
    /// Noise samples per measurement
    #[arg(long)]
    samples: Option<u64>,
    /// Seed of the perturbation stream
    #[arg(long = "perturb-seed", default_value_t = 0)]
    perturb_seed: u64,
}

impl Perturbation {
    fn config(&self, bins: u32, samples: u64) -> CliResult<PerturbationConfig> {
        let cfg = PerturbationConfig::new(
            self.samples.unwrap_or(samples),
            self.bins.unwrap_or(bins),
            self.perturb_seed,
        );
        cfg.validate().map_err(|e| usage("--bins/--samples", e))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepEdgeArgs {
    #[arg(long, default_value = "sigmoid")]
    activation: ActivationKind,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    wmin: f64,
    #[arg(long, default_value_t = 8.0, allow_negative_numbers = true)]
    wmax: f64,
    #[arg(long, default_value_t = 161)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    bins: u32,
    #[arg(long, default_value_t = 30_000)]
    samples: u64,
    /// Seed of the perturbation stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional SVG line plot
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Ei,
    Sensitivity,
    Degeneracy,
}

#[derive(Args)]
struct SweepManifoldArgs {
    #[arg(long, default_value = "sigmoid")]
    activation: ActivationKind,
    #[arg(long, default_value_t = -8.0, allow_negative_numbers = true)]
    min: f64,
    #[arg(long, default_value_t = 8.0, allow_negative_numbers = true)]
    max: f64,
    /// Grid points per axis
    #[arg(long, default_value_t = 17)]
    steps: usize,
    #[arg(long, default_value_t = 8)]
    bins: u32,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional SVG heatmap
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Surface drawn by --plot
    #[arg(long, value_enum, default_value = "ei")]
    metric: Metric,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: Task,
    /// Training seed (initialization and batch order)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    activation: Option<ActivationKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long = "measure-every")]
    measure_every: Option<usize>,
    /// Samples for the last checkpoint
    #[arg(long = "final-samples")]
    final_samples: Option<u64>,
    /// Initial weights are uniform on ±scale/√fan_in
    #[arg(long = "init-scale")]
    init_scale: Option<f64>,
    /// Hidden layers to add (negative removes one)
    #[arg(long = "extra-hidden", default_value_t = 0, allow_negative_numbers = true)]
    extra_hidden: i32,
    #[arg(long = "data-dir", default_value = "data")]
    data_dir: PathBuf,
    #[command(flatten)]
    perturbation: Perturbation,
    /// Optional flat CSV of every checkpoint and layer
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Optional SVG of EI per layer against epoch
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Optional SVG of train and test loss against epoch
    #[arg(long = "loss-plot")]
    loss_plot: Option<PathBuf>,
    /// Save the trained weights here
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct NetworkSource {
    /// Weight file to measure
    #[arg(long, conflicts_with_all = ["widths", "init_seed", "init_scale", "activation"])]
    weights: Option<PathBuf>,
    /// Widths of a freshly initialized network, e.g. 6,6
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long = "init-seed")]
    init_seed: Option<u64>,
    #[arg(long = "init-scale")]
    init_scale: Option<f64>,
    #[arg(long)]
    activation: Option<ActivationKind>,
}

impl NetworkSource {
    fn load(&self) -> CliResult<Network> {
        match (&self.weights, &self.widths) {
            (Some(path), _) => Ok(weights::load_weights(path)?),
            (None, Some(widths)) => Network::from_widths(
                widths,
                self.activation.unwrap_or(ActivationKind::Sigmoid),
                self.init_scale.unwrap_or(1.0),
                self.init_seed.unwrap_or(0),
            )
            .map_err(|e| usage("--widths", e)),
            (None, None) => Err(CliError::Usage("one of --weights or --widths is required".into())),
        }
    }
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    network: NetworkSource,
    #[command(flatten)]
    perturbation: Perturbation,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PlaneArgs {
    /// Run record (JSON lines) produced by `train`
    #[arg(long)]
    run: PathBuf,
    /// Optional SVG trajectory plot
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    Ei,
    EiParts,
    Sensitivity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Double the sample count until the change drops below the threshold
    Doubling,
    /// Fit A/s^α + C over 100K..2M samples and evaluate at 10^15
    Extrapolate,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    network: NetworkSource,
    /// Layer transition to measure
    #[arg(long, default_value_t = 0)]
    layer: usize,
    #[arg(long, value_enum, default_value = "ei-parts")]
    quantity: Quantity,
    #[arg(long, value_enum, default_value = "doubling")]
    mode: Mode,
    #[arg(long, default_value_t = 8)]
    bins: u32,
    #[arg(long = "perturb-seed", default_value_t = 0)]
    perturb_seed: u64,
    #[arg(long, default_value_t = 100_000)]
    start: u64,
    #[arg(long, default_value_t = 100_000_000)]
    max: u64,
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// Write the extrapolation fit as JSON
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Optional SVG of the trace
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ReportArgs {
    /// Run records (JSON lines) produced by `train`
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Optional plain-text summary
    #[arg(long)]
    text: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::SweepEdge(a) => sweep_edge(a),
        Command::SweepManifold(a) => sweep_manifold(a),
        Command::Train(a) => train(a),
        Command::Measure(a) => measure_cmd(a),
        Command::Plane(a) => plane(a),
        Command::Converge(a) => converge(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::Run(Error::io(path, e)))
}

fn emit(output: &Output, bytes: Vec<u8>) -> CliResult {
    write_file(&output.out, &bytes)?;
    log::info!("wrote {}", output.out.display());
    if output.stdout {
        std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Run(Error::io("<stdout>", e)))?;
    }
    Ok(())
}

fn check_range(lo_flag: &str, lo: f64, hi: f64) -> CliResult {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(usage(
            lo_flag,
            format!("need finite bounds with min < max, got [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

fn check_steps(steps: usize) -> CliResult {
    if steps < 2 {
        return Err(usage("--steps", format!("need at least 2 grid points, got {steps}")));
    }
    Ok(())
}

fn sweep_edge(a: SweepEdgeArgs) -> CliResult {
    check_range("--wmin/--wmax", a.wmin, a.wmax)?;
    check_steps(a.steps)?;
    let cfg = PerturbationConfig::new(a.samples, a.bins, a.seed);
    cfg.validate().map_err(|e| usage("--bins/--samples", e))?;
    log::info!("sweeping {} edge over {} weights", a.activation, a.steps);
    let curve = harness::sweep_edge(a.activation, a.wmin, a.wmax, a.steps, &cfg)?;
    if let Some(w) = harness::sweep_argmax(&curve) {
        log::info!("largest EI at w = {w}");
    }
    let mut buf = Vec::new();
    record::write_sweep_csv(&curve, &mut buf)?;
    emit(&a.output, buf)?;
    if let Some(p) = a.plot {
        let spec = PlotSpec::new(
            format!("EI of a single {} edge ({} bins)", a.activation, a.bins),
            "weight",
            "EI (bits)",
        );
        viz::emit_line_plot(&[Series::new("ei", curve)], &spec, p)?;
    }
    Ok(())
}

fn sweep_manifold(a: SweepManifoldArgs) -> CliResult {
    check_range("--min/--max", a.min, a.max)?;
    check_steps(a.steps)?;
    let cfg = PerturbationConfig::new(a.samples, a.bins, a.seed);
    cfg.validate().map_err(|e| usage("--bins/--samples", e))?;
    let grid = harness::linear_grid(a.min, a.max, a.steps)?;
    log::info!("sweeping {}x{} {} manifold", a.steps, a.steps, a.activation);
    let m = harness::sweep_manifold(a.activation, &grid, &grid, &cfg)?;
    let mut buf = Vec::new();
    record::write_manifold_csv(&m, &mut buf)?;
    emit(&a.output, buf)?;
    if let Some(p) = a.plot {
        let (values, name) = match a.metric {
            Metric::Ei => (&m.ei, "EI"),
            Metric::Sensitivity => (&m.sensitivity, "sensitivity"),
            Metric::Degeneracy => (&m.degeneracy, "degeneracy"),
        };
        let spec = PlotSpec::new(format!("{name} of a 2→1 {} slice (bits)", a.activation), "w_A", "w_B");
        viz::emit_heatmap(values, &m.w_a, &m.w_b, &spec, p)?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let mut spec = ExperimentSpec::canonical(a.task);
    spec.train.seed = a.seed;
    spec.runs = 1;
    spec.data_dir = a.data_dir.clone();
    if let Some(v) = a.activation {
        spec.activation = v;
    }
    if let Some(v) = a.epochs {
        spec.train.epochs = v;
    }
    if let Some(v) = a.lr {
        spec.train.learning_rate = v;
    }
    if let Some(v) = a.batch {
        spec.train.batch_size = v;
    }
    if let Some(v) = a.measure_every {
        spec.measure_every = v;
    }
    if let Some(v) = a.init_scale {
        spec.init_scale = v;
    }
    spec.final_samples = a.final_samples;
    spec.perturbation = a
        .perturbation
        .config(spec.perturbation.bins, spec.perturbation.samples)?;
    spec = harness::redundant_layer_variant(&spec, a.extra_hidden).map_err(|e| usage("--extra-hidden", e))?;
    spec.validate().map_err(|e| usage("train flags", e))?;

    let (train_set, test_set) = harness::load_task(&spec)?;
    log::info!(
        "training {} {:?} for {} epochs, measuring every {} epochs at {} samples",
        spec.task,
        spec.widths,
        spec.train.epochs,
        spec.measure_every,
        spec.perturbation.samples
    );
    let (rec, net) = harness::train_run_on(&spec, &train_set, &test_set)?;
    let mut buf = Vec::new();
    record::write_run_jsonl(&rec, &mut buf)?;
    emit(&a.output, buf)?;
    if let Some(p) = a.csv {
        let mut buf = Vec::new();
        record::write_run_csv(&rec, &mut buf)?;
        write_file(&p, &buf)?;
    }
    if let Some(p) = a.weights {
        weights::save_weights(&net, p)?;
    }
    if let Some(p) = a.plot {
        let series: Vec<Series> = (0..rec.layer_count())
            .map(|l| {
                Series::new(
                    format!("layer {l}"),
                    rec.checkpoints
                        .iter()
                        .filter_map(|cp| cp.layers[l].ei.map(|e| (cp.epoch as f64, e)))
                        .collect(),
                )
            })
            .filter(|s| !s.points.is_empty())
            .collect();
        let spec = PlotSpec::new(
            format!("EI during training ({}, seed {})", rec.spec.task, rec.seed()),
            "epoch",
            "EI (bits)",
        );
        viz::emit_line_plot(&series, &spec, p)?;
    }
    if let Some(p) = a.loss_plot {
        let pick =
            |f: fn(&harness::Checkpoint) -> f64| rec.checkpoints.iter().map(|cp| (cp.epoch as f64, f(cp))).collect();
        let series = [
            Series::new("train loss", pick(|c| c.train_loss)),
            Series::new("test loss", pick(|c| c.test_loss)),
        ];
        let spec = PlotSpec::new(format!("Loss ({}, seed {})", rec.spec.task, rec.seed()), "epoch", "MSE");
        viz::emit_line_plot(&series, &spec, p)?;
    }
    Ok(())
}

fn measure_cmd(a: MeasureArgs) -> CliResult {
    let cfg = a.perturbation.config(8, 10_000_000)?;
    let net = a.network.load()?;
    log::info!(
        "measuring {:?} at {} samples, {} bins",
        net.widths(),
        cfg.samples,
        cfg.bins
    );
    let results = measure::measure_network(&net, &cfg)?;
    let mut buf = Vec::new();
    writeln!(buf, "# ei-probe schema measure v{}", record::SCHEMA_VERSION).expect("write to memory");
    writeln!(
        buf,
        "layer,n_in,n_out,ei,ei_parts,sensitivity,degeneracy,phi,samples,bins,perturbation_seed"
    )
    .expect("write to memory");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (k, r) in results.iter().enumerate() {
        let s = LayerSlice::from_network(&net, k)?;
        writeln!(
            buf,
            "{k},{},{},{},{},{},{},{},{},{},{}",
            s.n_in(),
            s.n_out(),
            opt(r.ei),
            r.ei_parts,
            r.sensitivity,
            opt(r.degeneracy),
            opt(r.phi),
            r.samples_used,
            r.bins,
            r.seed
        )
        .expect("write to memory");
    }
    emit(&a.output, buf)
}

fn plane(a: PlaneArgs) -> CliResult {
    let rec = record::load_run(&a.run)?;
    let paths = harness::causal_plane_series(&rec)?;
    for p in &paths {
        log::info!(
            "layer {}: path length {:.4} bits",
            p[0].layer_index,
            harness::path_length(p)
        );
    }
    let mut buf = Vec::new();
    record::write_plane_csv(&paths, &mut buf)?;
    emit(&a.output, buf)?;
    if let Some(p) = a.plot {
        let spec = PlotSpec::new(
            format!("Causal plane ({}, seed {})", rec.spec.task, rec.seed()),
            "degeneracy (bits)",
            "sensitivity (bits)",
        );
        viz::emit_trajectory(&paths, &spec, p)?;
    }
    Ok(())
}

fn converge(a: ConvergeArgs) -> CliResult {
    let policy = ConvergencePolicy {
        start_samples: a.start,
        max_samples: a.max,
        rel_threshold: a.threshold,
    };
    policy
        .validate(a.bins)
        .map_err(|e| usage("--start/--max/--threshold", e))?;
    PerturbationConfig::new(1, a.bins, 0)
        .validate()
        .map_err(|e| usage("--bins", e))?;
    let net = a.network.load()?;
    if a.layer >= net.layers().len() {
        return Err(usage(
            "--layer",
            format!("network has {} transitions", net.layers().len()),
        ));
    }
    let slice = LayerSlice::from_network(&net, a.layer)?;
    let eval = |samples: u64| -> ei_probe::Result<f64> {
        let cfg = PerturbationConfig::new(samples, a.bins, a.perturb_seed);
        let v = match a.quantity {
            Quantity::Ei => measure::ei_joint(&slice, &cfg)?,
            Quantity::EiParts => measure::ei_parts(&slice, &cfg)?,
            Quantity::Sensitivity => measure::sensitivity(&slice, &cfg)?,
        };
        log::info!("{samples} samples: {v}");
        Ok(v)
    };
    let trace: Vec<TracePoint> = match a.mode {
        Mode::Doubling => {
            let out = convergence::doubling_until_converged(eval, &policy)?;
            if out.converged {
                log::info!("converged to {} at {} samples", out.value, out.samples_used);
            } else {
                log::warn!(
                    "not converged by {} samples; last value {}",
                    out.samples_used,
                    out.value
                );
            }
            out.trace
        }
        Mode::Extrapolate => {
            let trace = convergence::extrapolation_schedule()
                .into_iter()
                .map(|s| {
                    Ok(TracePoint {
                        samples: s,
                        value: eval(s)?,
                    })
                })
                .collect::<ei_probe::Result<Vec<_>>>()?;
            let pts: Vec<(f64, f64)> = trace.iter().map(|p| (p.samples as f64, p.value)).collect();
            let fit = convergence::fit_extrapolation(&pts)?;
            let limit = convergence::extrapolate(&fit, EXTRAPOLATION_HORIZON)?;
            log::info!(
                "fit A = {}, alpha = {}, C = {}; value at 1e15 samples = {limit}",
                fit.a,
                fit.alpha,
                fit.c
            );
            if let Some(p) = &a.fit {
                let json = serde_json::json!({
                    "schema": "ei-probe-fit",
                    "version": record::SCHEMA_VERSION,
                    "a": fit.a,
                    "alpha": fit.alpha,
                    "c": fit.c,
                    "residual": fit.residual,
                    "horizon": EXTRAPOLATION_HORIZON,
                    "value_at_horizon": limit,
                });
                write_file(p, format!("{json}\n").as_bytes())?;
            }
            trace
        }
    };
    let mut buf = Vec::new();
    record::write_trace_csv(&trace, &mut buf)?;
    emit(&a.output, buf)?;
    if let Some(p) = a.plot {
        let pts = trace.iter().map(|t| ((t.samples as f64).log10(), t.value)).collect();
        let spec = PlotSpec::new("Convergence", "log10 samples", "bits");
        viz::emit_line_plot(&[Series::new("value", pts)], &spec, p)?;
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> CliResult {
    let records = a
        .runs
        .iter()
        .map(record::load_run)
        .collect::<ei_probe::Result<Vec<RunRecord>>>()?;
    let rep = report::build_report(&records)?;
    let text = report::report_text(&rep);
    let mut buf = Vec::new();
    report::write_report_csv(&rep, &mut buf)?;
    write_file(&a.output.out, &buf)?;
    log::info!("wrote {}", a.output.out.display());
    if let Some(p) = a.text {
        write_file(&p, text.as_bytes())?;
    }
    if a.output.stdout {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
    Ok(())
}
