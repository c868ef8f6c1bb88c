use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hcrb_core::asymptotics::asymptotic_hcrb;
use hcrb_core::config::{ExperimentFile, ScenarioFile};
use hcrb_core::estimators::{EstimatorConfig, MatchedFilter};
use hcrb_core::exec::{configure_threads, map_indexed};
use hcrb_core::experiments::{
    bound_table, run_diversity, run_mc, run_range_sweep, run_snr_sweep, ExperimentConfig, Method,
    ResultTable, SweepAxis, Toggles,
};
use hcrb_core::fisher::{efim_exact, hcrb_from_efim};
use hcrb_core::multiradar::{fuse, peb};
use hcrb_core::synth::{Synthesizer, TargetModel};
use hcrb_core::{EnergyMode, Error, Execution};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (scenario schema 1)");

#[derive(Parser)]
#[command(name = "hcrb", version = VERSION, about = "Hybrid CRBs and matched-filter baselines for extended radar targets")]
struct Cli {
    /// Worker threads for parallel runs.
    #[arg(long, env = "HCRB_THREADS", global = true)]
    threads: Option<usize>,
    /// Run every study on one thread, in order.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact and asymptotic bounds for one scenario.
    Bounds(BoundsArgs),
    /// Synthesize frames and run the matched filter on them.
    Simulate(SimulateArgs),
    /// Bounds over a range ray, a list of ranges or E/N0 values.
    Sweep(StudyArgs),
    /// Position error bound versus the number of radars.
    Diversity(StudyArgs),
    /// Matched-filter Monte Carlo against the bounds.
    Mc(StudyArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Known contour only.
    #[arg(long)]
    known: bool,
    /// Unknown contour only.
    #[arg(long)]
    unknown: bool,
    /// Exact bounds only.
    #[arg(long)]
    exact: bool,
    /// Long-range closed forms only.
    #[arg(long)]
    asymptotic: bool,
    /// CSV result table (or the normalized scenario).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the scenario with all defaults filled in and exit.
    #[arg(long)]
    print_normalized: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Extended,
    Point,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Number of frames; trial `t` always draws from stream `t` of the seed.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, value_enum, default_value = "extended")]
    model: ModelArg,
    /// Directory for `.c32` frames and their JSON sidecars.
    #[arg(long)]
    dump_frames: Option<PathBuf>,
    /// Per-trial estimates as CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Experiment JSON file.
    #[arg(long)]
    config: PathBuf,
    /// CSV output; a gnuplot `.dat` file is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit status: 1 for bad input, 2 for singular or
/// partial results.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            _ if e.is_singularity() => 2,
            Error::QuadratureNonConvergence { .. } => 2,
            _ => 1,
        };
        let mut message = e.to_string();
        if let Error::Unidentifiable { null_space, .. } = &e {
            for v in null_space {
                let v: Vec<String> = v.iter().map(|x| format!("{x:+.4}")).collect();
                message.push_str(&format!("\n  weak direction: [{}]", v.join(", ")));
            }
        }
        Self { code, message }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if !configure_threads(t) {
            log::warn!("thread count {t} ignored");
        }
    }
    let exec = cli.sequential.then_some(Execution::Sequential);
    let result = match cli.command {
        Command::Bounds(a) => bounds(a),
        Command::Simulate(a) => simulate(a, exec.unwrap_or_default()),
        Command::Sweep(a) => study(a, exec, Study::Sweep),
        Command::Diversity(a) => study(a, exec, Study::Diversity),
        Command::Mc(a) => study(a, exec, Study::MonteCarlo),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn bounds(a: BoundsArgs) -> Result<(), Failure> {
    let file = ScenarioFile::load(&a.scenario)?;
    if a.print_normalized {
        let mut w = output(a.out.as_deref())?;
        writeln!(w, "{}", file.normalized()?.to_json_pretty()?)?;
        return Ok(());
    }
    let sc = file.to_scenario()?;
    let (known, unknown) = match (a.known, a.unknown) {
        (true, false) => (true, false),
        (false, true) => (false, true),
        _ => (true, true),
    };
    let (exact, asymptotic) = match (a.exact, a.asymptotic) {
        (true, false) => (true, false),
        (false, true) => (false, true),
        _ => (true, true),
    };
    let toggles = Toggles {
        known_shape: known,
        unknown_shape: unknown,
        point_target: true,
        asymptotic,
    };
    let mut table = bound_table(&sc, &toggles)?;
    if !exact {
        table.rows.retain(|r| r.method != Method::Exact);
    }

    let radars = file.radars();
    let mut peb_rows = Vec::new();
    if radars.len() > 1 {
        match sc.energy {
            EnergyMode::FixedSnr { e_over_n0_db } => {
                let target = file.global_target()?;
                let fused = fuse(&sc, &target, &radars, e_over_n0_db, Execution::default());
                for (k, tag) in [(true, "known"), (false, "unknown")] {
                    if (k && known) || (!k && unknown) {
                        peb_rows.push((
                            tag,
                            fused
                                .as_ref()
                                .map_err(Error::replicate)
                                .and_then(|f| peb(f, k)),
                        ));
                    }
                }
            }
            EnergyMode::PhysicalGain { .. } => {
                log::warn!("fused PEB needs a fixed aggregate E/N0; skipped")
            }
        }
    }

    if let Some(p) = &a.out {
        table.write_csv(BufWriter::new(File::create(p)?))?;
    }
    let mut w = BufWriter::new(io::stdout().lock());
    writeln!(
        w,
        "target at {:.3} m, {:.3} deg, heading {:.3} deg; {} antennas",
        sc.pose.range(),
        sc.pose.direction().to_degrees(),
        sc.pose.heading().to_degrees(),
        sc.antennas
    )?;
    for r in &table.rows {
        let (name, method) = (&r.quantity, r.method.as_str());
        match r.value {
            Some(v) => {
                let std_units = if r.units == "m^2" { "m" } else { "rad" };
                writeln!(
                    w,
                    "  {name:<18} {method:<12} {v:.6e} {}  (std {:.4e} {std_units})",
                    r.units,
                    v.sqrt()
                )?
            }
            None => writeln!(w, "  {name:<18} {method:<12} unavailable")?,
        }
    }
    for (tag, v) in &peb_rows {
        match v {
            Ok(x) => writeln!(
                w,
                "  peb_{tag:<14} fused        {x:.6e} m  ({} radars)",
                radars.len()
            )?,
            Err(e) => writeln!(w, "  peb_{tag:<14} fused        unavailable: {e}")?,
        }
    }
    w.flush()?;

    if table.partial {
        // Re-derive the failing bound to report its null space.
        let diag = [(known, true), (unknown, false)]
            .into_iter()
            .filter(|(on, _)| *on)
            .find_map(|(_, k)| {
                let r = if exact {
                    efim_exact(&sc).and_then(|e| hcrb_from_efim(&e, k)).err()
                } else {
                    None
                };
                r.or_else(|| asymptotic.then(|| asymptotic_hcrb(&sc, k).err()).flatten())
            });
        return Err(match diag {
            Some(e) => e.into(),
            None => Failure {
                code: 2,
                message: table.notes.join("; "),
            },
        });
    }
    if let Some((_, Err(e))) = peb_rows.into_iter().find(|(_, v)| v.is_err()) {
        return Err(e.into());
    }
    Ok(())
}

fn simulate(a: SimulateArgs, exec: Execution) -> Result<(), Failure> {
    if a.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()).into());
    }
    let file = ScenarioFile::load(&a.scenario)?;
    let sc = file.to_scenario()?;
    let model = match a.model {
        ModelArg::Extended => TargetModel::Extended,
        ModelArg::Point => TargetModel::Point,
    };
    let synth = Synthesizer::new(&sc, &file.segmentation(), model)?;
    let mf = MatchedFilter::new(
        sc.antennas,
        sc.waveform,
        synth.frame_len(),
        synth.start_time(),
        EstimatorConfig::default(),
    );
    if let Some(dir) = &a.dump_frames {
        std::fs::create_dir_all(dir)?;
    }
    let results = map_indexed(a.trials, exec, |t| {
        let frame = synth.frame(a.seed, t as u64);
        let dumped = match &a.dump_frames {
            Some(dir) => frame.dump(dir, &format!("frame_{t:05}")).map(|_| ()),
            None => Ok(()),
        };
        dumped.map(|()| mf.estimate(&frame))
    });
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "trial,model,range,direction,low_confidence")?;
    let tag = match model {
        TargetModel::Extended => "extended",
        TargetModel::Point => "point",
    };
    let mut flagged = 0;
    for (t, r) in results.into_iter().enumerate() {
        let r = r?;
        flagged += r.low_confidence() as usize;
        writeln!(
            w,
            "{t},{tag},{},{},{}",
            r.range.range,
            r.direction.direction,
            r.low_confidence()
        )?;
    }
    w.flush()?;
    log::info!(
        "{} trials, {} scatterers, {} samples per frame, {flagged} flagged",
        a.trials,
        synth.scatterers(),
        synth.frame_len()
    );
    Ok(())
}

#[derive(Clone, Copy)]
enum Study {
    Sweep,
    Diversity,
    MonteCarlo,
}

fn study(a: StudyArgs, exec: Option<Execution>, kind: Study) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = ExperimentFile::load(&a.config)?;
    if let Some(e) = exec {
        cfg.execution = e;
    }
    let table = match kind {
        Study::Sweep => match cfg.sweep {
            SweepAxis::Snr { .. } => run_snr_sweep(&cfg)?,
            _ => run_range_sweep(&cfg)?,
        },
        Study::Diversity => run_diversity(&cfg)?,
        Study::MonteCarlo => run_mc(&cfg)?,
    };
    let out = a.out.or(cfg.output.clone());
    write_table(&table, out.as_deref())?;
    for note in &table.notes {
        log::warn!("{note}");
    }
    if table.partial {
        return Err(Failure {
            code: 2,
            message: format!("{} entries could not be computed", table.notes.len()),
        });
    }
    Ok(())
}

fn write_table(t: &ResultTable, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => {
            t.write_csv(BufWriter::new(File::create(p)?))?;
            t.write_gnuplot(BufWriter::new(File::create(p.with_extension("dat"))?))?;
        }
        None => t.write_csv(io::stdout().lock())?,
    }
    Ok(())
}
