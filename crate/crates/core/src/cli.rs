//! The `ptt` command-line pipeline. Exit codes: 0 success, 1 invalid input or
//! failed validation, 2 numerical non-convergence. Errors go to stderr as JSON.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::basis_design::{muub_search, random_basis, reference_muub, unitary_from_params, UnitaryParams};
use crate::channels::Povm;
use crate::control::{
    optimize_identity, optimize_sequence, reconstruction_fidelity, tomographic_inputs, unitary_to_params, OptimizerConfig,
};
use crate::error::{Error, Result};
use crate::io::{BasisFile, BasisSpec, CmoLayout, DatasetFile, Model, ModelFile, ProcessConfig, Provenance};
use crate::markov_order::{fit_cmo, generate_cmo_datasets, plan_cmo_experiments, slice_lower_order, FitStart};
use crate::mle::{completed_linear_inversion, linear_inversion_fit, pgdb_fit, pgdb_fit_from, projected_linear_inversion, MleConfig, MleFit};
use crate::process_tensor::causality_constraints;
use crate::projection::{benchmark_projections, Regime};
use crate::simulator::generate_dataset;

pub const THREADS_ENV: &str = "PTT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ptt", version, about = "Process tensor tomography toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a process config.
    Simulate(SimulateArgs),
    /// Fit a process tensor or memory model to a dataset.
    Fit(FitArgs),
    /// Reconstruction fidelity of a model against the simulator.
    Validate(ValidateArgs),
    /// Benchmark the two projection methods and emit CSV.
    ProjectBench(BenchArgs),
    /// Emit the reference control basis or search for a new one.
    Muub(MuubArgs),
    /// Optimize a control sequence against a model.
    Optimize(OptimizeArgs),
    /// Enumerate memory-block characterization circuits.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BasisChoice {
    Reference,
    Cmo,
    Random,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Store exact probabilities instead of sampled counts.
    #[arg(long, conflicts_with = "shots")]
    pub exact: bool,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long, value_enum, default_value = "reference")]
    pub basis: BasisChoice,
    /// Produce per-block data for a memory model of this order.
    #[arg(long)]
    pub markov_order: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub fixed_op: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Li,
    Mle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StartChoice {
    Mixed,
    Projected,
    Completed,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "mle")]
    pub method: Method,
    #[arg(long)]
    pub markov_order: Option<usize>,
    /// pgdb starting point; defaults to the maximally mixed process, or the
    /// completed inversion for exact memory-block data.
    #[arg(long, value_enum)]
    pub start: Option<StartChoice>,
    #[arg(long)]
    pub stop_delta: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Accepted for a uniform pipeline interface; fitting draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit diagnostics as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Process config of the simulator used as the oracle.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub sequences: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit 1 when the median fidelity falls below this.
    #[arg(long)]
    pub min_median: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MuubArgs {
    #[arg(long)]
    pub reference: bool,
    #[arg(long, default_value_t = 10)]
    pub size: usize,
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Target Bloch vector "x,y,z" (normalized to a pure state).
    #[arg(long, conflicts_with = "identity")]
    pub target: Option<String>,
    /// Find gates that preserve the four tomographic input states instead.
    #[arg(long)]
    pub identity: bool,
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub l: usize,
    #[arg(long)]
    pub basis_size: usize,
    #[arg(long)]
    pub settings: usize,
    #[arg(long, default_value_t = 0)]
    pub fixed_op: usize,
    /// Include every circuit in the output.
    #[arg(long)]
    pub list: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => {
            use std::io::Write;
            // A closed pipe downstream is not an error of the command.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("usage", e.to_string().trim().to_string(), 1);
            return 1;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            report_error(e.kind(), e.to_string(), code);
            code
        }
    }
}

fn report_error(kind: &str, message: String, exit_code: i32) {
    let r = ErrorReport { error: kind, message, exit_code };
    eprintln!("{}", serde_json::to_string(&r).unwrap_or_else(|_| "{\"error\":\"internal\"}".into()));
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Validate(a) => validate(a),
        Command::ProjectBench(a) => bench(a),
        Command::Muub(a) => muub(a),
        Command::Optimize(a) => optimize(a),
        Command::Plan(a) => plan(a),
    }
}

fn basis_spec(choice: BasisChoice, seed: u64) -> BasisSpec {
    match choice {
        BasisChoice::Reference => BasisSpec::reference(),
        BasisChoice::Cmo => BasisSpec::Cmo,
        BasisChoice::Random => BasisSpec::Unitaries { params: random_basis(10, seed, 0).elements },
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = ProcessConfig::parse(&read(&a.config)?)?;
    let process = cfg.build()?;
    let k = process.steps();
    let shots = if a.exact { None } else { Some(a.shots.unwrap_or(4096)) };
    if shots == Some(0) {
        return Err(Error::invalid("shots must be positive"));
    }
    let provenance = Provenance { process_sha256: cfg.digest()?, generator: format!("ptt {}", env!("CARGO_PKG_VERSION")) };
    let spec = basis_spec(a.basis, a.seed);
    let basis = spec.build("basis")?;
    let povm = Povm::pauli6();
    let file = match a.markov_order {
        None => {
            let ds = generate_dataset(&process, &vec![basis; k], &povm, shots, a.seed)?;
            DatasetFile::from_tensors(k, vec![spec; k], &povm, shots, None, &[ds.data], a.seed, provenance)?
        }
        Some(l) => {
            let plan = plan_cmo_experiments(k, l, basis.len(), povm.settings().len(), a.fixed_op)?;
            let blocks = generate_cmo_datasets(&process, &plan, &basis, &povm, shots, a.seed)?;
            let layout = CmoLayout { markov_order: l, fixed_op: a.fixed_op };
            DatasetFile::from_tensors(k, vec![spec; l], &povm, shots, Some(layout), &blocks, a.seed, provenance)?
        }
    };
    emit(&a.out, &file.to_json()?)
}

#[derive(Debug, Serialize)]
struct BlockReport {
    status: String,
    cost: Option<f64>,
    iterations: usize,
    projection_eigs: usize,
    projection_failures: usize,
    min_eigenvalue: f64,
    constraint_residual: f64,
}

impl BlockReport {
    fn from_fit(f: &MleFit) -> Self {
        BlockReport {
            status: serde_json::to_value(f.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            cost: Some(f.cost),
            iterations: f.iterations,
            projection_eigs: f.projection_eigs,
            projection_failures: f.projection_failures,
            min_eigenvalue: f.min_eigenvalue,
            constraint_residual: f.constraint_residual,
        }
    }
}

#[derive(Debug, Serialize)]
struct FitReport {
    schema_version: &'static str,
    method: String,
    markov_order: Option<usize>,
    converged: bool,
    blocks: Vec<BlockReport>,
}

fn fit(a: FitArgs) -> Result<()> {
    let loaded = DatasetFile::parse(&read(&a.data)?)?;
    let mut cfg = MleConfig::default();
    if let Some(s) = a.stop_delta {
        cfg.stop_delta = s;
    }
    if let Some(m) = a.max_iterations {
        cfg.max_outer_iterations = m;
    }
    cfg.validate()?;
    let k = loaded.file.k;
    let exact = loaded.file.exact;
    let (model, report) = match (&loaded.file.cmo, a.markov_order) {
        (None, None) => full_fit(&loaded, &a, &cfg)?,
        (None, Some(l)) if l == k => full_fit(&loaded, &a, &cfg)?,
        (None, Some(l)) => {
            return Err(Error::invalid(format!("dataset is a full {k}-step grid; order-{l} models need memory-block data")))
        }
        (Some(layout), l) => {
            if a.method == Method::Li {
                return Err(Error::invalid("memory models are fitted by maximum likelihood only"));
            }
            let l = l.unwrap_or(layout.markov_order);
            let tensors = if l == layout.markov_order {
                loaded.tensors.clone()
            } else {
                slice_lower_order(&loaded.tensors, layout.markov_order, l, layout.fixed_op)?
                    .into_iter()
                    .enumerate()
                    .map(|(j, t)| t.ok_or_else(|| Error::invalid(format!("block {j} of order {l} is not contained in the data"))))
                    .collect::<Result<Vec<_>>>()?
            };
            let start = match a.start {
                Some(StartChoice::Mixed) => FitStart::MaximallyMixed,
                Some(StartChoice::Projected) => FitStart::ProjectedLinearInversion,
                Some(StartChoice::Completed) => FitStart::CompletedLinearInversion,
                None if exact => FitStart::CompletedLinearInversion,
                None => FitStart::ProjectedLinearInversion,
            };
            let fit = fit_cmo(&tensors, &loaded.bases[0], &loaded.povm, k, l, layout.fixed_op, &cfg, start)?;
            let report = FitReport {
                schema_version: "ptt.fit_report/1",
                method: "mle".into(),
                markov_order: Some(l),
                converged: fit.converged(),
                blocks: fit.block_fits.iter().map(BlockReport::from_fit).collect(),
            };
            (Model::Memory(fit.model), report)
        }
    };
    let method = match a.method {
        Method::Li => "li",
        Method::Mle => "mle",
    };
    emit(&a.out, &ModelFile::new(method, &model)?.to_json()?)?;
    if let Some(p) = &a.report {
        std::fs::write(p, format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    }
    if !report.converged {
        return Err(Error::NotConverged("maximum-likelihood fit did not meet its stopping rule".into()));
    }
    Ok(())
}

fn full_fit(loaded: &crate::io::LoadedDataset, a: &FitArgs, cfg: &MleConfig) -> Result<(Model, FitReport)> {
    let data = &loaded.tensors[0];
    let k = loaded.file.k;
    let set = causality_constraints(k, loaded.povm.dim())?;
    match a.method {
        Method::Li => {
            let ups = linear_inversion_fit(data, &loaded.bases, &loaded.povm)?;
            let block = BlockReport {
                status: "linear_inversion".into(),
                cost: None,
                iterations: 0,
                projection_eigs: 0,
                projection_failures: 0,
                min_eigenvalue: ups.min_eigenvalue(),
                constraint_residual: set.residual_inf(ups.matrix()),
            };
            let report =
                FitReport { schema_version: "ptt.fit_report/1", method: "li".into(), markov_order: None, converged: true, blocks: vec![block] };
            Ok((Model::Process(ups), report))
        }
        Method::Mle => {
            let fit = match a.start.unwrap_or(StartChoice::Mixed) {
                StartChoice::Mixed => pgdb_fit(data, &loaded.bases, &loaded.povm, &set, cfg)?,
                StartChoice::Projected => {
                    let s = projected_linear_inversion(data, &loaded.bases, &loaded.povm, &set, cfg.projection_tolerance)?;
                    pgdb_fit_from(data, &loaded.bases, &loaded.povm, &set, cfg, s)?
                }
                StartChoice::Completed => {
                    let s = completed_linear_inversion(data, &loaded.bases, &loaded.povm, &set, cfg.projection_tolerance)?;
                    pgdb_fit_from(data, &loaded.bases, &loaded.povm, &set, cfg, s)?
                }
            };
            let report = FitReport {
                schema_version: "ptt.fit_report/1",
                method: "mle".into(),
                markov_order: None,
                converged: fit.converged(),
                blocks: vec![BlockReport::from_fit(&fit)],
            };
            Ok((Model::Process(fit.process), report))
        }
    }
}

fn validate(a: ValidateArgs) -> Result<()> {
    let (_, model) = ModelFile::parse(&read(&a.model)?)?;
    let oracle = ProcessConfig::parse(&read(&a.config)?)?.build()?;
    let rep = reconstruction_fidelity(model.predictor(), &oracle, a.sequences, a.seed)?;
    emit(&a.out, &serde_json::to_string_pretty(&rep)?)?;
    if let Some(t) = a.min_median {
        if rep.median < t {
            return Err(Error::invalid(format!("median fidelity {:.6} below threshold {t}", rep.median)));
        }
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.samples == 0 || !(a.tolerance > 0.0) {
        return Err(Error::invalid("samples and tolerance must be positive"));
    }
    let run = benchmark_projections(a.samples, &Regime::standard(), a.seed, a.tolerance);
    emit(&a.out, run.to_csv().trim_end())
}

fn muub(a: MuubArgs) -> Result<()> {
    let basis = if a.reference {
        reference_muub()
    } else {
        if a.size < 2 {
            return Err(Error::invalid("basis size must be at least 2"));
        }
        muub_search(a.size, a.seed, a.restarts).basis
    };
    emit(&a.out, &serde_json::to_string_pretty(&BasisFile::new(&basis))?)
}

fn parse_bloch(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("target `{s}` is not x,y,z")))?;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.len() != 3 || !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::invalid(format!("target `{s}` is not a nonzero Bloch vector")));
    }
    Ok([v[0] / norm, v[1] / norm, v[2] / norm])
}

/// Rotation taking |0⟩ to the pure state with Bloch vector `r`.
pub fn state_preparation(r: [f64; 3]) -> UnitaryParams {
    let theta = r[2].clamp(-1.0, 1.0).acos();
    let phi = r[1].atan2(r[0]);
    UnitaryParams::new(theta, phi, 0.0)
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let (_, model) = ModelFile::parse(&read(&a.model)?)?;
    let pred = model.predictor();
    let cfg = OptimizerConfig { restarts: a.restarts, seed: a.seed, ..OptimizerConfig::default() };
    let best = if a.identity {
        optimize_identity(pred, &tomographic_inputs(), &cfg)?
    } else {
        let t = a.target.as_deref().ok_or_else(|| Error::invalid("give --target x,y,z or --identity"))?;
        let prep = state_preparation(parse_bloch(t)?);
        let v = unitary_from_params(&prep);
        let zero = crate::algebra::ket_bra(&[crate::algebra::c(1.0, 0.0), crate::algebra::c(0.0, 0.0)]);
        let target = &v * zero * v.adjoint();
        let mut naive = vec![UnitaryParams::new(0.0, 0.0, 0.0); pred.steps()];
        *naive.last_mut().expect("k ≥ 1") = unitary_to_params(&v);
        optimize_sequence(pred, &target, &naive, &cfg)?
    };
    emit(&a.out, &serde_json::to_string_pretty(&best)?)
}

fn plan(a: PlanArgs) -> Result<()> {
    let p = plan_cmo_experiments(a.k, a.l, a.basis_size, a.settings, a.fixed_op)?;
    let mut v = serde_json::to_value(&p)?;
    if a.list {
        v["circuits"] = serde_json::to_value(p.circuits().collect::<Vec<_>>())?;
    }
    emit(&a.out, &serde_json::to_string_pretty(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_and_usage_errors() {
        assert_eq!(run(["ptt", "plan", "--k", "3", "--l", "3", "--basis-size", "10", "--settings", "3"]), 0);
        assert_eq!(run(["ptt", "plan", "--k", "2", "--l", "3", "--basis-size", "10", "--settings", "3"]), 1);
        assert_eq!(run(["ptt", "frobnicate"]), 1);
    }

    #[test]
    fn bloch_targets() {
        let p = state_preparation(parse_bloch("0,1,0").unwrap());
        let u = unitary_from_params(&p);
        let psi = [u[(0, 0)], u[(1, 0)]];
        let y = 2.0 * (psi[0].conj() * psi[1]).im;
        assert!((y - 1.0).abs() < 1e-12);
        assert!(parse_bloch("0,0,0").is_err());
        assert!(parse_bloch("a,b").is_err());
    }
}
