//! The `ppt` command line.
//!
//! Exit codes: 0 success, 1 validation failure (or nothing found), 2 usage
//! error. Every run first prints a `# ppt …` line with the full parameter
//! set and seed.

use std::f64::consts::PI;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::catalog::{self, CatalogEntry, EntryProblem};
use crate::deriv::{self, DerivProblem};
use crate::error::{Error, Result};
use crate::noise::{self, NoiseModel};
use crate::profile::{self, format_sig9, GridSpec};
use crate::su2::Symmetry;
use crate::synthesis::{self, ProfileClass, SynthesisProblem};

#[derive(Debug, Parser)]
#[command(
    name = "ppt",
    version,
    about = "Design and analyse polychromatic pulse trains"
)]
struct Cli {
    /// Catalog file; defaults to $PPT_CATALOG, then the built-in fixtures.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Unit of printed Rabi frequencies and detunings.
    #[arg(long, global = true, value_enum, default_value = "pi")]
    unit: UnitArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitArg {
    /// π/T
    Pi,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassArg {
    Bb,
    Nb,
    Pb,
    #[value(name = "2d")]
    TwoD,
}

impl From<ClassArg> for ProfileClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Bb => ProfileClass::Broadband,
            ClassArg::Nb => ProfileClass::Narrowband,
            ClassArg::Pb => ProfileClass::Passband,
            ClassArg::TwoD => ProfileClass::DoubleComp2D,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SymmetryArg {
    General,
    Symmetric,
    Antisymmetric,
}

impl From<SymmetryArg> for Symmetry {
    fn from(s: SymmetryArg) -> Self {
        match s {
            SymmetryArg::General => Symmetry::General,
            SymmetryArg::Symmetric => Symmetry::Symmetric,
            SymmetryArg::Antisymmetric => Symmetry::Antisymmetric,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the vanishing-derivative system for antisymmetric broadband trains.
    Derive(DeriveArgs),
    /// Cost-function synthesis with multistart BFGS.
    Synthesize(SynthArgs),
    /// Excitation profile p(ε) of a catalog entry as CSV.
    Profile(ProfileArgs),
    /// Map p(ε, δ) of a catalog entry as CSV.
    Profile2d(ProfileArgs),
    /// Noisy, finite-shot measurement of a profile.
    Simulate(SimulateArgs),
    /// Re-validate catalog entries.
    Validate(ValidateArgs),
    /// Inspect the catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Debug, Args)]
struct DeriveArgs {
    #[arg(long)]
    target: f64,
    /// Free detunings; the train has 2n+1 pulses.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    seeds: usize,
    #[arg(long = "rng-seed", default_value_t = 0)]
    rng_seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Write the solutions as a catalog.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    class: ClassArg,
    #[arg(long)]
    target: f64,
    /// Train length N.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    eps0: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_enum)]
    symmetry: Option<SymmetryArg>,
    /// Detuning half-span of the 2D class, in π/T.
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    #[arg(long = "rng-seed", default_value_t = 0)]
    rng_seed: u64,
    /// Write the validated results as a catalog.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[arg(long)]
    id: String,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    id: String,
    #[arg(long, default_value_t = noise::REFERENCE_SHOTS)]
    shots: u64,
    #[arg(long = "rng-seed", default_value_t = 0)]
    rng_seed: u64,
    /// T1 in microseconds.
    #[arg(long, default_value_t = noise::REFERENCE_T1 * 1e6)]
    t1_us: f64,
    /// T2 in microseconds.
    #[arg(long, default_value_t = noise::REFERENCE_T2 * 1e6)]
    t2_us: f64,
    #[arg(long, default_value_t = noise::REFERENCE_READOUT_ERROR)]
    readout: f64,
    /// Duration of one pulse in nanoseconds.
    #[arg(long, default_value_t = noise::REFERENCE_PULSE_DURATION * 1e9)]
    pulse_ns: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Entry to check; all entries when omitted.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Debug, Subcommand)]
enum CatalogAction {
    List,
    Show {
        #[arg(long)]
        id: String,
    },
}

/// Parse `args` (including the program name) and run. Output goes to `out`,
/// diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::InvalidInput(_) | Error::Parse { .. } | Error::Schema { .. } => 2,
                Error::NumericFailure(_) | Error::Io(_) => 1,
            }
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Derive(a) => derive(a, out),
        Command::Synthesize(a) => synthesize(a, out),
        Command::Profile(a) => profile_1d(cli, a, out),
        Command::Profile2d(a) => profile_2d(cli, a, out),
        Command::Simulate(a) => simulate(cli, a, out),
        Command::Validate(a) => validate(cli, a, out),
        Command::Catalog { action } => catalog_cmd(cli, action, out),
    }
}

fn pi(x: f64) -> String {
    format_sig9(x / PI)
}

fn params_line(rabi: f64, detunings: &[f64]) -> String {
    let d: Vec<String> = detunings.iter().map(|v| pi(*v)).collect();
    format!("({}; {})", pi(rabi), d.join(", "))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn open_catalog(cli: &Cli) -> Result<Vec<CatalogEntry>> {
    match &cli.catalog {
        Some(p) => catalog::load_catalog(p),
        None => catalog::open_default(),
    }
}

fn catalog_label(cli: &Cli) -> String {
    match cli.catalog.clone().or_else(catalog::default_path) {
        Some(p) => p.display().to_string(),
        None => "builtin".into(),
    }
}

fn lookup(cli: &Cli, id: &str) -> Result<CatalogEntry> {
    let entries = open_catalog(cli)?;
    catalog::find(&entries, id)
        .cloned()
        .ok_or_else(|| Error::InvalidInput(format!("no catalog entry with id '{id}'")))
}

fn out_label(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "-".into())
}

fn derive(a: &DeriveArgs, out: &mut dyn Write) -> Result<i32> {
    writeln!(
        out,
        "# ppt derive target={} n={} seeds={} rng-seed={} tol={} unit=pi/T out={}",
        format_sig9(a.target),
        a.n,
        a.seeds,
        a.rng_seed,
        format_sig9(a.tol),
        out_label(&a.out)
    )?;
    let prob = DerivProblem::new(a.target, a.n, a.tol)?;
    let sols = deriv::solve(&prob, a.seeds, a.rng_seed)?;
    writeln!(out, "solutions: {}", sols.len())?;
    for (k, s) in sols.iter().enumerate() {
        writeln!(
            out,
            "{:>3}  {}  area={}  max_residual={:.2e}",
            k + 1,
            params_line(s.rabi, &s.detunings),
            pi(s.total_area),
            s.max_residual()
        )?;
    }
    if let Some(path) = &a.out {
        let entries = sols
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let id = format!(
                    "BB-N{}-p{}-deriv-{}",
                    prob.train_len(),
                    format_sig9(a.target),
                    k + 1
                );
                let notes = format!(
                    "derive seeds={} rng-seed={} rank={}",
                    a.seeds,
                    a.rng_seed,
                    k + 1
                );
                CatalogEntry::from_deriv(&id, s, &prob, &notes)
            })
            .collect::<Result<Vec<_>>>()?;
        write_text(path, &catalog::to_text(&entries))?;
    }
    Ok(if sols.is_empty() { 1 } else { 0 })
}

fn synthesize(a: &SynthArgs, out: &mut dyn Write) -> Result<i32> {
    let class: ProfileClass = a.class.into();
    let mut prob = SynthesisProblem::new(class, a.target, a.n, a.eps0, a.alpha)?;
    if let Some(s) = a.symmetry {
        prob = prob.with_symmetry(s.into())?;
    }
    if let Some(d) = a.delta0 {
        prob = prob.with_delta0(d * PI)?;
    }
    writeln!(
        out,
        "# ppt synthesize class={} target={} n={} eps0={} alpha={} symmetry={} delta0={} seeds={} rng-seed={} unit=pi/T out={}",
        class.name(),
        format_sig9(prob.target_p),
        prob.len,
        format_sig9(prob.eps0),
        format_sig9(prob.alpha),
        prob.symmetry.name(),
        pi(prob.delta0),
        a.seeds,
        a.rng_seed,
        out_label(&a.out)
    )?;
    let run = synthesis::minimize(&prob, a.seeds, a.rng_seed)?;
    let d = run.diagnostics;
    writeln!(
        out,
        "validated: {} of {} seeds  (iterations={} evaluations={})",
        d.validated, d.seeds, d.iterations, d.evaluations
    )?;
    for (k, r) in run.results.iter().enumerate() {
        writeln!(
            out,
            "{:>3}  {}  area={}  cost={:.3e}  bb_band={}  nb_band={}  seed={}",
            k + 1,
            params_line(r.train.rabi(), &r.train.detunings()),
            pi(r.train.total_area()),
            r.cost_value,
            format_sig9(r.measured_bb_band),
            format_sig9(r.measured_nb_band),
            r.diagnostics.seed_index
        )?;
    }
    if let Some(path) = &a.out {
        let entries: Vec<CatalogEntry> = run
            .results
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let id = format!(
                    "{}-N{}-p{}-{}",
                    class.name().to_uppercase(),
                    prob.len,
                    format_sig9(prob.target_p),
                    k + 1
                );
                let notes = format!(
                    "synthesize seeds={} rng-seed={} seed-index={}",
                    a.seeds, a.rng_seed, r.diagnostics.seed_index
                );
                CatalogEntry::from_synthesis(&id, r, &prob, &notes)
            })
            .collect();
        write_text(path, &catalog::to_text(&entries))?;
    }
    Ok(if run.results.is_empty() { 1 } else { 0 })
}

fn emit_csv(path: &Option<PathBuf>, csv: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => write_text(p, csv),
        None => {
            out.write_all(csv.as_bytes())?;
            Ok(())
        }
    }
}

fn profile_1d(cli: &Cli, a: &ProfileArgs, out: &mut dyn Write) -> Result<i32> {
    let grid = GridSpec::default_1d();
    writeln!(
        out,
        "# ppt profile id={} catalog={} eps=[-1,1] step={} unit=pi/T out={}",
        a.id,
        catalog_label(cli),
        format_sig9(grid.eps_step),
        out_label(&a.out)
    )?;
    let entry = lookup(cli, &a.id)?;
    let prof = profile::sweep_1d(&entry.train, &grid, &entry.id)?;
    emit_csv(&a.out, &profile::profile_csv(&prof, &[]), out)?;
    Ok(0)
}

fn profile_2d(cli: &Cli, a: &ProfileArgs, out: &mut dyn Write) -> Result<i32> {
    let grid = GridSpec::default_2d();
    writeln!(
        out,
        "# ppt profile2d id={} catalog={} eps=[-1,1] delta=[-2,2] grid=201x201 unit=pi/T out={}",
        a.id,
        catalog_label(cli),
        out_label(&a.out)
    )?;
    let entry = lookup(cli, &a.id)?;
    let prof = profile::sweep_2d(&entry.train, &grid, &entry.id)?;
    emit_csv(&a.out, &profile::profile_csv(&prof, &[]), out)?;
    Ok(0)
}

fn simulate(cli: &Cli, a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    writeln!(
        out,
        "# ppt simulate id={} catalog={} shots={} rng-seed={} t1_us={} t2_us={} readout={} pulse_ns={} unit=pi/T out={}",
        a.id,
        catalog_label(cli),
        a.shots,
        a.rng_seed,
        format_sig9(a.t1_us),
        format_sig9(a.t2_us),
        format_sig9(a.readout),
        format_sig9(a.pulse_ns),
        out_label(&a.out)
    )?;
    let nm = NoiseModel::new(
        a.t1_us * 1e-6,
        a.t2_us * 1e-6,
        a.readout,
        a.shots,
        a.pulse_ns * 1e-9,
    )?;
    let entry = lookup(cli, &a.id)?;
    let grid = GridSpec::default_1d();
    let sim = noise::simulate_profile(&entry.train, &grid, &nm, a.rng_seed, &entry.id)?;
    let budget = noise::peak_budget(
        &entry.train,
        &crate::su2::ErrorPoint::rabi(sim.peak_eps()),
        &nm,
    )?;
    writeln!(
        out,
        "peak={} at eps={}  ideal={} after_decoherence={} expected_after_readout={}",
        format_sig9(sim.peak()),
        format_sig9(sim.peak_eps()),
        format_sig9(budget.ideal),
        format_sig9(budget.after_decoherence),
        format_sig9(budget.after_readout)
    )?;
    let csv = profile::profile_csv(&sim.measured, &[nm.header()]);
    if let Some(p) = &a.out {
        write_text(p, &csv)?;
    }
    Ok(0)
}

fn describe(entry: &CatalogEntry) -> String {
    let problem = match &entry.problem {
        EntryProblem::Deriv(p) => {
            format!("deriv target={} n={}", format_sig9(p.target_p), p.n_free)
        }
        EntryProblem::Synthesis(p) => format!(
            "{} target={} eps0={} alpha={}",
            p.class.name(),
            format_sig9(p.target_p),
            format_sig9(p.eps0),
            format_sig9(p.alpha)
        ),
    };
    format!(
        "{}  N={}  {}  {}",
        entry.id,
        entry.train.len(),
        params_line(entry.train.rabi(), &entry.train.free_detunings()),
        problem
    )
}

fn validate(cli: &Cli, a: &ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    writeln!(
        out,
        "# ppt validate id={} catalog={}",
        a.id.as_deref().unwrap_or("all"),
        catalog_label(cli)
    )?;
    // entries are re-validated while loading; a failure there is reported
    // as a validation failure, not a usage error
    let entries = match open_catalog(cli) {
        Ok(e) => e,
        Err(e @ (Error::Parse { .. } | Error::InvalidInput(_))) => {
            writeln!(out, "FAIL  {e}")?;
            return Ok(1);
        }
        Err(e) => return Err(e),
    };
    let selected: Vec<&CatalogEntry> = match &a.id {
        Some(id) => vec![catalog::find(&entries, id)
            .ok_or_else(|| Error::InvalidInput(format!("no catalog entry with id '{id}'")))?],
        None => entries.iter().collect(),
    };
    let mut failed = 0;
    for e in selected {
        let detail = match &e.problem {
            EntryProblem::Synthesis(p) => {
                let r = synthesis::validate(&e.train, p)?;
                format!(
                    "  bb_band={} nb_band={}",
                    format_sig9(r.measured_bb_band),
                    format_sig9(r.measured_nb_band)
                )
            }
            EntryProblem::Deriv(p) => {
                let r = deriv::build_residuals(e.train.rabi(), &e.train.free_detunings(), p)?;
                let worst = r.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                format!("  max_residual={worst:.2e}")
            }
        };
        match e.revalidate() {
            Ok(()) => writeln!(out, "ok    {}{detail}", e.id)?,
            Err(err) => {
                failed += 1;
                writeln!(out, "FAIL  {}{detail}  ({err})", e.id)?;
            }
        }
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

fn catalog_cmd(cli: &Cli, action: &CatalogAction, out: &mut dyn Write) -> Result<i32> {
    match action {
        CatalogAction::List => {
            writeln!(out, "# ppt catalog list catalog={}", catalog_label(cli))?;
            for e in open_catalog(cli)? {
                writeln!(out, "{}", describe(&e))?;
            }
        }
        CatalogAction::Show { id } => {
            writeln!(
                out,
                "# ppt catalog show id={id} catalog={}",
                catalog_label(cli)
            )?;
            let entry = lookup(cli, id)?;
            out.write_all(catalog::to_text(std::slice::from_ref(&entry)).as_bytes())?;
        }
    }
    Ok(0)
}
