//! Command-line front end. Every subcommand reads JSON inputs, accepts a
//! JSON config whose keys are the long flag names (flags win), writes CSV and
//! JSON artifacts into `--out`, and records the resolved config there as
//! `<command>.config.json`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::avgham::{decoupling_report, CycleName};
use crate::compile::{doubling_scheme, hadamard_scheme, verify_scheme, Axis, SeqItem, Sequence};
use crate::composite::{composite_library, fidelity_sweep, sweep_csv, CompositeName, ErrorKind, RotationSpec};
use crate::error::{Error, Result};
use crate::evolve::{evolve_sequence, sequence_unitary, DensityMatrix, EvolveOptions, Frame, Observable};
use crate::experiments::{run_experiment, spectrum, Acquisition, ExperimentKind, ExperimentParams, NoiseSpec};
use crate::io::{fmt_f64, matrix_csv, parse_duration, parse_grid, parse_pair, trajectory_csv, Table};
use crate::linalg::{CVector, Operator, C64};
use crate::metrics::Channel;
use crate::optimize::{find_pulse, PulseSearchSpec};
use crate::shapes::{frequency_response, ShapeFamily, ShapeSpec, DEFAULT_SLICES};
use crate::spinsys::{CouplingModel, DipolarGeometry, SpinSystem, SpinSystemDoc};
use crate::tomo::{
    default_settings, process_tomography, records, records_from_csv, records_to_csv, simulate_process, simulate_readouts,
    standard_input_basis, state_tomography, values_from_records, ReadoutNoise, ReadoutSetting, Record, StateTomographyOptions,
};

#[derive(Parser, Debug)]
#[command(name = "spinbench", version, about = "Spin dynamics, pulse design and NMR quantum control toolkit")]
struct Cli {
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Random seed; falls back to SPINBENCH_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file of option values, keyed by long flag name.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve a state through a pulse sequence.
    Simulate(SimulateArgs),
    /// Frequency response of a shaped pulse.
    Respond(RespondArgs),
    /// Fidelity of a composite pulse over an error grid.
    Composite(CompositeArgs),
    /// Generate and verify a coupling refocusing scheme.
    Refocus(RefocusArgs),
    /// Average Hamiltonian report for a multiple-pulse cycle.
    Avgham(AvghamArgs),
    /// State or process tomography from readout records.
    Tomo(TomoArgs),
    /// Numerical pulse search for a single-spin rotation.
    Optimize(OptimizeArgs),
    /// Standard characterization experiment.
    Experiment(ExperimentArgs),
    /// Free-induction decay and spectrum.
    Spectrum(SpectrumArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateArgs {
    /// Spin system JSON.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Sequence JSON; empty when omitted.
    #[arg(long)]
    sequence: Option<PathBuf>,
    /// ground, mixed, or basis:<index>.
    #[arg(long)]
    initial: Option<String>,
    /// common or multiply_rotating.
    #[arg(long)]
    frame: Option<String>,
    /// Ignore relaxation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    no_relaxation: Option<bool>,
    /// Trajectory sampling interval.
    #[arg(long)]
    sample_dt: Option<String>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RespondArgs {
    /// rect, gaussian, hermite_90 or hermite_180.
    #[arg(long)]
    shape: Option<String>,
    /// Shape JSON, overriding --shape.
    #[arg(long)]
    shape_file: Option<PathBuf>,
    /// Pulse width, e.g. 1ms.
    #[arg(long)]
    tpw: Option<String>,
    /// Nominal rotation angle in degrees.
    #[arg(long, allow_hyphen_values = true)]
    angle: Option<f64>,
    /// Detuning grid in Hz, start:stop:step or a list.
    #[arg(long, allow_hyphen_values = true)]
    detune: Option<String>,
    #[arg(long)]
    slices: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompositeArgs {
    /// bb1, sym_180, length_comp_180 or offres_y.
    #[arg(long)]
    name: Option<String>,
    /// Target angle in degrees for bb1.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// amplitude, phase or offset.
    #[arg(long)]
    error: Option<String>,
    /// Error grid.
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RefocusArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Coupling to keep, as two 1-based spins "i,j".
    #[arg(long)]
    keep: Option<String>,
    /// hadamard or doubling.
    #[arg(long)]
    scheme: Option<String>,
    /// System JSON used for verification; distinct test couplings otherwise.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Total scheme duration.
    #[arg(long)]
    duration: Option<String>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AvghamArgs {
    /// wahuha4 or echo3.
    #[arg(long)]
    cycle: Option<String>,
    /// System JSON; a dipolar pair when omitted.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Delay unit τ.
    #[arg(long)]
    tau: Option<String>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TomoArgs {
    /// state, process, simulate-state or simulate-process.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Records CSV: setting_id, observable_id, value, plus input_id for
    /// process data.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Readout settings JSON; all local quarter-turn products otherwise.
    #[arg(long)]
    settings: Option<PathBuf>,
    /// Project the reconstruction onto physical states or channels.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    psd: Option<bool>,
    /// For simulation: ground, bell or random (state); identity or cnot
    /// (process).
    #[arg(long)]
    source: Option<String>,
    /// Readout noise σ for simulation.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OptimizeArgs {
    #[arg(long)]
    system: Option<PathBuf>,
    /// 1-based spin to rotate; all others idle.
    #[arg(long)]
    spin: Option<usize>,
    /// x or y.
    #[arg(long)]
    axis: Option<String>,
    /// Rotation angle in degrees.
    #[arg(long, allow_hyphen_values = true)]
    angle: Option<f64>,
    #[arg(long)]
    max_segments: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    goal: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentArgs {
    /// rabi, larmor, ramsey, echo, carr_purcell, cpmg, inversion_recovery,
    /// saturation_recovery or spin_lock.
    #[arg(long)]
    kind: Option<String>,
    /// System JSON; one spin on resonance when omitted.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Time grid in seconds.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    pulses: Option<usize>,
    /// 1-based observed spin.
    #[arg(long)]
    spin: Option<usize>,
    /// lorentzian:<fwhm Hz> or ou:<sigma Hz>,<correlation time s>.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    realizations: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpectrumArgs {
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    dwell: Option<String>,
    #[arg(long)]
    points: Option<usize>,
    /// Exponential line broadening in Hz.
    #[arg(long)]
    lb: Option<f64>,
}

/// Parses argv (including the program name) and runs it. Returns the exit
/// code: 0 on success, 1 on usage or validation errors, 2 on numerical
/// failures.
pub fn run<I, T>(argv: I, env_seed: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, env_seed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn main() -> i32 {
    let seed = std::env::var("SPINBENCH_SEED").ok();
    run(std::env::args_os(), seed.as_deref())
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    config: Option<serde_json::Value>,
}

impl Ctx {
    fn write(&self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.out.join(name), text)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(v)? + "\n"))
    }

    /// Overlays flags on the config file values for one subcommand.
    fn merge<T: Serialize + DeserializeOwned>(&self, args: &T) -> Result<T> {
        let mut base = match &self.config {
            Some(serde_json::Value::Object(m)) => m.clone(),
            Some(_) => return Err(Error::invalid("config file must hold a JSON object")),
            None => serde_json::Map::new(),
        };
        if let serde_json::Value::Object(flags) = serde_json::to_value(args)? {
            for (k, v) in flags {
                if !v.is_null() {
                    base.insert(k, v);
                }
            }
        }
        Ok(serde_json::from_value(serde_json::Value::Object(base))?)
    }

    fn record_config<T: Serialize>(&self, command: &str, args: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Resolved<'a, T> {
            command: &'a str,
            seed: u64,
            options: &'a T,
        }
        self.write_json(&format!("{command}.config.json"), &Resolved { command, seed: self.seed, options: args })
    }
}

fn execute(cli: Cli, env_seed: Option<&str>) -> Result<()> {
    let seed = match (cli.seed, env_seed) {
        (Some(s), _) => s,
        (None, Some(text)) => text.trim().parse().map_err(|_| Error::invalid(format!("SPINBENCH_SEED '{text}' is not an integer")))?,
        (None, None) => 0,
    };
    let config = match &cli.config {
        Some(p) => Some(serde_json::from_str(&read(p)?)?),
        None => None,
    };
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Ctx { out: cli.out.clone(), seed, config };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::invalid(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => simulate(&ctx, ctx.merge(a)?),
        Command::Respond(a) => respond(&ctx, ctx.merge(a)?),
        Command::Composite(a) => composite(&ctx, ctx.merge(a)?),
        Command::Refocus(a) => refocus(&ctx, ctx.merge(a)?),
        Command::Avgham(a) => avgham(&ctx, ctx.merge(a)?),
        Command::Tomo(a) => tomo(&ctx, ctx.merge(a)?),
        Command::Optimize(a) => optimize(&ctx, ctx.merge(a)?),
        Command::Experiment(a) => experiment(&ctx, ctx.merge(a)?),
        Command::Spectrum(a) => spectrum_cmd(&ctx, ctx.merge(a)?),
    })
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::invalid(format!("cannot read {}: {e}", p.display())))
}

fn load_system(p: &Path) -> Result<(SpinSystem, Option<DipolarGeometry>)> {
    let doc: SpinSystemDoc = serde_json::from_str(&read(p)?)?;
    let geometry = doc.geometry()?;
    Ok((doc.into_system()?, geometry))
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::invalid(format!("missing --{flag}")))
}

fn simulate(ctx: &Ctx, mut a: SimulateArgs) -> Result<()> {
    let (sys, geometry) = load_system(&required(&a.system, "system")?)?;
    let seq = match &a.sequence {
        Some(p) => Sequence::from_json(&read(p)?)?,
        None => Sequence::new(),
    };
    let initial = a.initial.get_or_insert_with(|| "ground".into()).clone();
    let rho0 = match initial.as_str() {
        "ground" => DensityMatrix::ground(sys.n()),
        "mixed" => DensityMatrix::maximally_mixed(sys.n()),
        s => match s.strip_prefix("basis:").and_then(|i| i.parse::<usize>().ok()) {
            Some(i) if i < sys.dim() => DensityMatrix::basis(sys.n(), i),
            _ => return Err(Error::invalid(format!("unknown initial state '{s}'"))),
        },
    };
    let frame: Frame = serde_json::from_value(serde_json::Value::String(a.frame.get_or_insert_with(|| "common".into()).clone()))
        .map_err(|_| Error::invalid("frame must be common or multiply_rotating"))?;
    let relaxation = !*a.no_relaxation.get_or_insert(false);
    let mut opts = EvolveOptions { relaxation, frame, geometry: geometry.clone(), ..EvolveOptions::default() };
    if let Some(dt) = &a.sample_dt {
        let dt = parse_duration(dt)?;
        if !(dt > 0.0) {
            return Err(Error::invalid("sample-dt must be positive"));
        }
        let total = seq.duration();
        let count = (total / dt + 1e-9).floor() as usize;
        opts.sample_times_s = (0..=count).map(|k| k as f64 * dt).collect();
        opts.observables = Observable::bloch_components(sys.n());
    }
    let ev = evolve_sequence(&sys, &seq, &rho0, &opts)?;
    ctx.write("rho.csv", &matrix_csv(ev.rho.operator().matrix())?)?;
    let u = sequence_unitary(&sys, &seq, frame, geometry.as_ref())?;
    ctx.write("unitary.csv", &matrix_csv(u.matrix())?)?;
    if !ev.samples.is_empty() {
        ctx.write("trajectory.csv", &trajectory_csv(&ev.samples)?)?;
    }
    #[derive(Serialize)]
    struct Summary {
        duration_s: f64,
        trace: f64,
        min_eigenvalue: f64,
        bloch: Vec<[f64; 3]>,
        unitarity_error: f64,
    }
    ctx.write_json(
        "simulate.json",
        &Summary {
            duration_s: ev.duration_s,
            trace: ev.rho.operator().trace().re,
            min_eigenvalue: ev.rho.min_eigenvalue(),
            bloch: (0..sys.n()).map(|k| ev.rho.bloch(k)).collect(),
            unitarity_error: u.unitarity_error(),
        },
    )?;
    ctx.record_config("simulate", &a)
}

fn respond(ctx: &Ctx, mut a: RespondArgs) -> Result<()> {
    let spec = match &a.shape_file {
        Some(p) => serde_json::from_str::<ShapeSpec>(&read(p)?)?,
        None => {
            let family = ShapeFamily::from_name(a.shape.get_or_insert_with(|| "rect".into()))?;
            let slices = if family == ShapeFamily::Rectangular { 1 } else { DEFAULT_SLICES };
            ShapeSpec::new(family, *a.slices.get_or_insert(slices))
        }
    };
    let tpw = parse_duration(a.tpw.get_or_insert_with(|| "1ms".into()))?;
    let angle = *a.angle.get_or_insert(90.0);
    let grid = parse_grid(a.detune.get_or_insert_with(|| "-2000:2000:10".into()))?;
    let pts = frequency_response(&spec, tpw, angle.to_radians(), &grid, [0.0, 0.0, 1.0])?;
    let mut t = Table::new(&["detuning_hz", "mx", "my", "mz", "mxy"]);
    for p in &pts {
        t.push(vec![p.detuning_hz, p.bloch[0], p.bloch[1], p.bloch[2], p.mxy()]);
    }
    t.write(&ctx.out.join("response.csv"))?;
    ctx.record_config("respond", &a)
}

fn composite(ctx: &Ctx, mut a: CompositeArgs) -> Result<()> {
    let name: CompositeName = a.name.get_or_insert_with(|| "bb1".into()).parse()?;
    let theta = a.theta.get_or_insert(90.0).to_radians();
    let kind: ErrorKind = a.error.get_or_insert_with(|| "amplitude".into()).parse()?;
    let grid = parse_grid(a.eps.get_or_insert_with(|| "-0.3:0.3:0.01".into()))?;
    let seq = composite_library(name, theta)?;
    let target = ideal_product(&seq);
    let pts = fidelity_sweep(&seq, &target, kind, &grid)?;
    ctx.write("sweep.csv", &sweep_csv(&pts)?)?;
    ctx.record_config("composite", &a)
}

fn ideal_product(seq: &[RotationSpec]) -> Operator {
    seq.iter().fold(Operator::identity(2), |acc, r| &acc * &r.ideal())
}

fn refocus(ctx: &Ctx, mut a: RefocusArgs) -> Result<()> {
    let n = required(&a.n, "n")?;
    let keep = a.keep.as_deref().map(parse_pair).transpose()?;
    let kind = a.scheme.get_or_insert_with(|| "hadamard".into()).clone();
    let mut scheme = match kind.as_str() {
        "hadamard" => hadamard_scheme(n, keep)?,
        "doubling" if keep.is_none() => doubling_scheme(n)?,
        "doubling" => return Err(Error::invalid("the doubling scheme removes every coupling; drop --keep")),
        other => return Err(Error::invalid(format!("unknown scheme '{other}'"))),
    };
    let total = parse_duration(a.duration.get_or_insert_with(|| "10ms".into()))?;
    scheme = scheme.with_total_duration(total);
    let sys = match &a.system {
        Some(p) => load_system(p)?.0,
        None => {
            let j = (0..n).map(|i| (0..n).map(|k| if i == k { 0.0 } else { 10.0 * (i + k + 1) as f64 }).collect()).collect();
            SpinSystem::new(vec![0.0; n], j, CouplingModel::WeakZz)?
        }
    };
    if sys.n() != n {
        return Err(Error::Dimension { expected: n, found: sys.n() });
    }
    ctx.write("scheme.csv", &scheme.to_csv())?;
    ctx.write_json("verification.json", &verify_scheme(&scheme, &sys)?)?;
    ctx.record_config("refocus", &a)
}

fn avgham(ctx: &Ctx, mut a: AvghamArgs) -> Result<()> {
    let name: CycleName = a.cycle.get_or_insert_with(|| "wahuha4".into()).parse()?;
    let tau = parse_duration(a.tau.get_or_insert_with(|| "5us".into()))?;
    let (sys, geometry) = match &a.system {
        Some(p) => load_system(p)?,
        None => (SpinSystem::pair(400.0, 250.0, 0.0, CouplingModel::DipolarSecular)?, Some(DipolarGeometry::pair(1500.0))),
    };
    let d = decoupling_report(&sys, geometry.as_ref(), name, tau)?;
    ctx.write_json("avgham.json", &d.report)?;
    ctx.record_config("avgham", &a)
}

#[derive(Serialize, Deserialize)]
struct ProcessRecord {
    input_id: usize,
    setting_id: usize,
    observable_id: String,
    value: f64,
}

fn tomo(ctx: &Ctx, mut a: TomoArgs) -> Result<()> {
    let mode = a.mode.get_or_insert_with(|| "state".into()).clone();
    let n = required(&a.n, "n")?;
    if n == 0 || n > 4 {
        return Err(Error::invalid("tomography supports 1 to 4 spins"));
    }
    let settings: Vec<ReadoutSetting> = match &a.settings {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => default_settings(n),
    };
    let psd = *a.psd.get_or_insert(false);
    match mode.as_str() {
        "simulate-state" => {
            let rho = match a.source.get_or_insert_with(|| "ground".into()).as_str() {
                "ground" => DensityMatrix::ground(n),
                "bell" => {
                    let d = 1 << n;
                    let mut v = CVector::zeros(d);
                    v[0] = C64::new(0.5f64.sqrt(), 0.0);
                    v[d - 1] = C64::new(0.5f64.sqrt(), 0.0);
                    DensityMatrix::from_pure(&v)?
                }
                "random" => {
                    use rand::SeedableRng;
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ctx.seed);
                    DensityMatrix::from_pure(&crate::metrics::haar_state(1 << n, &mut rng))?
                }
                s => return Err(Error::invalid(format!("unknown state source '{s}'"))),
            };
            let noise = noise_of(&mut a, ctx.seed);
            let vals = simulate_readouts(&rho, &settings, noise)?;
            ctx.write("records.csv", &records_to_csv(&records(&settings, &vals, n))?)?;
            ctx.write("true_rho.csv", &matrix_csv(rho.operator().matrix())?)?;
        }
        "simulate-process" => {
            let u = match a.source.get_or_insert_with(|| "cnot".into()).as_str() {
                "identity" => Operator::identity(1 << n),
                "cnot" if n == 2 => crate::compile::canonical_cnot(),
                s => return Err(Error::invalid(format!("unknown process source '{s}' for {n} spins"))),
            };
            let noise = noise_of(&mut a, ctx.seed);
            let inputs = standard_input_basis(n);
            let outputs = simulate_process(&Channel::Unitary(u), &inputs);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["input_id", "setting_id", "observable_id", "value"])?;
            for (i, out) in outputs.into_iter().enumerate() {
                let rho = DensityMatrix::new(out.hermitian_part())?;
                let nz = noise.map(|z| ReadoutNoise { sigma: z.sigma, seed: z.seed.wrapping_add((i as u64) << 32) });
                let vals = simulate_readouts(&rho, &settings, nz)?;
                for r in records(&settings, &vals, n) {
                    w.write_record([i.to_string(), r.setting_id.to_string(), r.observable_id, fmt_f64(r.value)])?;
                }
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
            ctx.write("records.csv", &String::from_utf8(bytes).expect("ascii"))?;
        }
        "state" => {
            let recs = records_from_csv(&read(&required(&a.records, "records")?)?)?;
            let vals = values_from_records(&settings, &recs, n)?;
            let rho = state_tomography(n, &settings, &vals, StateTomographyOptions { project_psd: psd })?;
            ctx.write("rho.csv", &matrix_csv(rho.matrix())?)?;
            #[derive(Serialize)]
            struct Report {
                trace: f64,
                min_eigenvalue: f64,
                purity: f64,
            }
            let purity = (&rho * &rho).trace().re;
            ctx.write_json("tomo.json", &Report { trace: rho.trace().re, min_eigenvalue: rho.hermitian_eigen().0[0], purity })?;
        }
        "process" => {
            let text = read(&required(&a.records, "records")?)?;
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            let all: Vec<ProcessRecord> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
            let inputs = standard_input_basis(n);
            let outputs = (0..inputs.len())
                .map(|i| {
                    let recs: Vec<Record> = all
                        .iter()
                        .filter(|r| r.input_id == i)
                        .map(|r| Record { setting_id: r.setting_id, observable_id: r.observable_id.clone(), value: r.value })
                        .collect();
                    let vals = values_from_records(&settings, &recs, n)?;
                    let c = crate::tomo::reconstruct_coefficients(n, &settings, &vals)?;
                    Ok(c.to_operator().hermitian_part())
                })
                .collect::<Result<Vec<_>>>()?;
            let chi = process_tomography(&inputs, &outputs, crate::tomo::ProcessTomographyOptions { project_psd: psd })?;
            ctx.write("chi.csv", &matrix_csv(&chi.chi)?)?;
            #[derive(Serialize)]
            struct Report {
                tp_residual: f64,
                hermiticity_error: f64,
                eigenvalues: Vec<f64>,
            }
            ctx.write_json(
                "tomo.json",
                &Report { tp_residual: chi.tp_residual(), hermiticity_error: chi.hermiticity_error(), eigenvalues: chi.eigenvalues() },
            )?;
        }
        other => return Err(Error::invalid(format!("unknown tomography mode '{other}'"))),
    }
    ctx.record_config("tomo", &a)
}

fn noise_of(a: &mut TomoArgs, seed: u64) -> Option<ReadoutNoise> {
    let sigma = *a.noise.get_or_insert(0.0);
    (sigma != 0.0).then_some(ReadoutNoise { sigma, seed })
}

fn optimize(ctx: &Ctx, mut a: OptimizeArgs) -> Result<()> {
    let (sys, _) = load_system(&required(&a.system, "system")?)?;
    let spin = *a.spin.get_or_insert(1);
    if spin == 0 || spin > sys.n() {
        return Err(Error::invalid(format!("spin {spin} out of range")));
    }
    let axis = match a.axis.get_or_insert_with(|| "x".into()).as_str() {
        "x" => Axis::X,
        "y" => Axis::Y,
        s => return Err(Error::invalid(format!("axis must be x or y, got '{s}'"))),
    };
    let angle = a.angle.get_or_insert(90.0).to_radians();
    let target = SeqItem::rotation(spin - 1, axis, angle).ideal_unitary(sys.n()).expect("rotation");
    let mut spec = PulseSearchSpec::new(&sys, target);
    spec.max_segments = *a.max_segments.get_or_insert(spec.max_segments);
    spec.restarts = *a.restarts.get_or_insert(spec.restarts);
    spec.fidelity_goal = *a.goal.get_or_insert(spec.fidelity_goal);
    let res = find_pulse(&sys, &spec, ctx.seed)?;
    ctx.write_json("pulse.json", &res.segments)?;
    let mut t = Table::new(&["iteration", "best_value"]);
    for p in &res.trace {
        t.push(vec![p.iteration as f64, p.best_value]);
    }
    t.write(&ctx.out.join("trace.csv"))?;
    ctx.write_json("optimize.json", &res)?;
    ctx.record_config("optimize", &a)
}

fn experiment(ctx: &Ctx, mut a: ExperimentArgs) -> Result<()> {
    let kind: ExperimentKind = required(&a.kind, "kind")?.parse()?;
    let sys = match &a.system {
        Some(p) => load_system(p)?.0,
        None => SpinSystem::uncoupled(vec![0.0])?,
    };
    let grid = parse_grid(a.grid.get_or_insert_with(|| "0:0.01:0.0005".into()))?;
    let spin = *a.spin.get_or_insert(1);
    if spin == 0 {
        return Err(Error::invalid("spins are numbered from 1"));
    }
    let mut params = ExperimentParams::new(grid).on_spin(spin - 1).with_pulse_count(*a.pulses.get_or_insert(1));
    params.amplitude_hz = a.amplitude;
    let realizations = *a.realizations.get_or_insert(200);
    let noise = match a.noise.as_deref() {
        None => None,
        Some(s) => Some(parse_noise(s, realizations, ctx.seed)?),
    };
    let r = run_experiment(&sys, kind, &params, noise.as_ref())?;
    r.to_table().write(&ctx.out.join("experiment.csv"))?;
    ctx.write("fits.json", &(r.fits_json()? + "\n"))?;
    ctx.record_config("experiment", &a)
}

fn parse_noise(s: &str, realizations: usize, seed: u64) -> Result<NoiseSpec> {
    let bad = || Error::invalid(format!("cannot parse noise '{s}'"));
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    let nums: Vec<f64> = rest.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
    let spec = match (kind, nums.as_slice()) {
        ("lorentzian", [w]) => NoiseSpec::lorentzian(*w, realizations, seed),
        ("ou", [sigma, tc]) => NoiseSpec::ou(*sigma, *tc, realizations, seed),
        _ => return Err(bad()),
    };
    spec.validate()?;
    Ok(spec)
}

fn spectrum_cmd(ctx: &Ctx, mut a: SpectrumArgs) -> Result<()> {
    let (sys, _) = load_system(&required(&a.system, "system")?)?;
    let dwell = parse_duration(a.dwell.get_or_insert_with(|| "0.5ms".into()))?;
    let acq = Acquisition { dwell_s: dwell, points: *a.points.get_or_insert(1024), line_broadening_hz: *a.lb.get_or_insert(0.0) };
    let n = sys.n();
    let tip = (0..n).fold(Operator::identity(sys.dim()), |u, k| {
        &SeqItem::rotation(k, Axis::X, PI / 2.0).ideal_unitary(n).expect("rotation") * &u
    });
    let s = spectrum(&sys, &DensityMatrix::ground(n).evolve_unitary(&tip), &acq)?;
    s.to_table().write(&ctx.out.join("spectrum.csv"))?;
    ctx.write_json("peaks.json", &s.peaks(0.1))?;
    ctx.record_config("spectrum", &a)
}
