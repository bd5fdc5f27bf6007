//! `iabsim` command-line front end.

mod curves;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use iab_core::bap::build_routing_tables;
use iab_core::campaign::{Campaign, CampaignError, GridPoint, RunResult};
use iab_core::mac_scheduler::MuxMode;
use iab_core::scenario::{builtin_topology, Scenario, ScenarioError};

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "iabsim", version, about = "Slot-level maritime 5G NR IAB network simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, optionally for several seeds.
    Run(RunArgs),
    /// Run every point of a grid file.
    Sweep(SweepArgs),
    /// Check a scenario without running it.
    Validate(SourceArgs),
    /// Write path-loss or rain-attenuation curves as CSV.
    Curves(curves::CurvesArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in topology 1..4.
    #[arg(long)]
    topology: Option<u8>,
}

#[derive(Args)]
struct SourceArgs {
    #[command(flatten)]
    source: Source,
}

#[derive(Clone, Copy, ValueEnum)]
enum MuxArg {
    Tdm,
    Fdm,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Rain rate in mm/h.
    #[arg(long)]
    rain: Option<f64>,
    /// DL source rate per node in Mb/s.
    #[arg(long = "dl-rate")]
    dl_rate: Option<f64>,
    /// UL rate as a fraction of the DL rate.
    #[arg(long = "ul-factor")]
    ul_factor: Option<f64>,
    /// Slot pattern, e.g. 4DS2U, 3DS2U or an explicit letter string.
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long, value_enum)]
    mux: Option<MuxArg>,
    /// Data symbols for odd layers under TDM.
    #[arg(long = "ns-odd")]
    ns_odd: Option<u8>,
    /// Base seed; per-run seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    runs: u32,
    /// Simulated time in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Keep warm-up packets in PDR and latency.
    #[arg(long = "no-warmup")]
    no_warmup: bool,
    /// Report invariant breaches instead of aborting the run.
    #[arg(long)]
    lenient: bool,
    #[arg(long, env = "IABSIM_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file (TOML).
    grid: PathBuf,
    /// Overrides `runs` from the grid file.
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long, env = "IABSIM_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Invariant(String),
    Io(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Config(c) => c.into(),
            CampaignError::Grid { .. } => Failure::Config(e.to_string()),
            CampaignError::Engine(iab_core::engine::EngineError::Config(c)) => c.into(),
            CampaignError::Engine(_) => Failure::Invariant(e.to_string()),
            CampaignError::Metrics(_) => Failure::Io(e.to_string()),
        }
    }
}

fn load_source(src: &Source) -> Result<(Scenario, Option<u8>), Failure> {
    match (&src.scenario, src.topology) {
        (Some(p), _) => Ok((Scenario::load(p)?, None)),
        (None, Some(k)) => Ok((builtin_topology(k)?, Some(k))),
        (None, None) => Err(Failure::Config("one of --scenario or --topology is required".into())),
    }
}

fn report(results: &[RunResult]) -> Result<(), Failure> {
    for r in results {
        for row in r.summary.iter().filter(|s| s.scope == iab_core::metrics::Scope::Direction) {
            println!(
                "{} run {} seed {} {}: pdr {} latency_p50_ms {} sinr_p50_db {}",
                r.point.label(),
                r.run,
                r.seed,
                row.direction.as_str(),
                fmt_opt(row.pdr),
                fmt_opt(row.latency_p50_ms),
                fmt_opt(row.sinr_p50_db),
            );
        }
    }
    let bad: Vec<String> = results
        .iter()
        .filter(|r| !r.invariants_ok)
        .map(|r| format!("{} run {}", r.point.label(), r.run))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(format!("invariant breach in {}", bad.join(", "))))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("null".into(), |x| format!("{x:.4}"))
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let (mut base, topo) = load_source(&a.source)?;
    if let Some(seed) = a.seed {
        base.simulation.seed = seed;
    }
    if let Some(d) = a.duration {
        base.simulation.duration_s = d;
    }
    if a.no_warmup {
        base.simulation.warmup_fraction = 0.0;
    }
    if a.lenient {
        base.simulation.strict = false;
    }
    let point = GridPoint {
        topology: topo,
        rain_mmh: a.rain,
        dl_rate_mbps: a.dl_rate,
        ul_factor: a.ul_factor,
        pattern: a.pattern.clone(),
        mux: a.mux.map(|m| match m {
            MuxArg::Tdm => MuxMode::Tdm,
            MuxArg::Fdm => MuxMode::Fdm,
        }),
        n_s_odd: a.ns_odd,
    };
    point.apply(&base)?;
    let campaign = Campaign::new(base, vec![point], a.runs)?;
    let results = campaign.execute(Some(&a.out))?;
    eprintln!("wrote {}", a.out.display());
    report(&results)
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), Failure> {
    let mut c = Campaign::load(&a.grid)?;
    if let Some(r) = a.runs {
        c = Campaign::new(c.base, c.points, r)?;
    }
    for p in &c.points {
        p.apply(&c.base)?;
    }
    eprintln!("{} points x {} runs", c.points.len(), c.runs);
    let results = c.execute(Some(&a.out))?;
    eprintln!("wrote {}", a.out.display());
    report(&results)
}

fn cmd_validate(a: &SourceArgs) -> Result<(), Failure> {
    let (s, _) = load_source(&a.source)?;
    s.validate()?;
    let topo = s.topology()?;
    let tables = build_routing_tables(&topo);
    let flows = s.flow_set(&topo)?;
    println!(
        "ok: {} ({} nodes, {} donors, max depth {}, {} routing tables, {} flows, {} slots)",
        if s.name.is_empty() { "unnamed" } else { &s.name },
        topo.len(),
        topo.donors().len(),
        topo.max_depth(),
        tables.len(),
        flows.table.flows().len(),
        s.slot_count(),
    );
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
fn exit_code<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let res = match &cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Curves(a) => curves::run(a).map_err(|e| match e {
            curves::CurvesError::Io(m) => Failure::Io(m),
            curves::CurvesError::Config(m) => Failure::Config(m),
        }),
    };
    match res {
        Ok(()) => 0,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Config(m) => (EXIT_CONFIG, format!("config error: {m}")),
                Failure::Invariant(m) => (EXIT_INVARIANT, m),
                Failure::Io(m) => (EXIT_IO, format!("i/o error: {m}")),
            };
            eprintln!("iabsim: {msg}");
            code
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(exit_code(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use iab_core::metrics::{read_csv, SummaryRow, SUMMARY_FILE, SUMMARY_HEADER};
    use iab_core::engine::EngineError;

    fn code(args: &[&str]) -> u8 {
        exit_code(std::iter::once("iabsim").chain(args.iter().copied()))
    }

    #[test]
    fn validate_builtin_and_bad_files() {
        assert_eq!(code(&["validate", "--topology", "3"]), 0);
        assert_eq!(code(&["validate", "--topology", "7"]), EXIT_CONFIG);
        assert_eq!(code(&["validate", "--scenario", "/nonexistent/s.toml"]), EXIT_CONFIG);
        let tmp = tempfile::tempdir().unwrap();
        let bad = tmp.path().join("bad.toml");
        std::fs::write(
            &bad,
            "schema_version = 1\n[[nodes]]\nname = \"a\"\nrole = \"node\"\nposition = [0.0, 0.0]\nparent = \"a\"\n",
        )
        .unwrap();
        assert_eq!(code(&["validate", "--scenario", bad.to_str().unwrap()]), EXIT_CONFIG);
    }

    #[test]
    fn malformed_flags_are_config_errors() {
        assert_eq!(code(&["run", "--topology", "1", "--bogus"]), EXIT_CONFIG);
        assert_eq!(code(&["run"]), EXIT_CONFIG);
        assert_eq!(code(&["run", "--topology", "1", "--scenario", "x.toml"]), EXIT_CONFIG);
        assert_eq!(code(&["run", "--topology", "1", "--ns-odd", "13"]), EXIT_CONFIG);
        assert_eq!(code(&["run", "--topology", "1", "--pattern", "XYZ"]), EXIT_CONFIG);
        assert_eq!(code(&["--help"]), 0);
    }

    #[test]
    fn run_topology1_reports_no_interference() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().to_str().unwrap();
        let args = ["run", "--topology", "1", "--rain", "0", "--dl-rate", "60", "--duration", "0.05", "--out", out];
        assert_eq!(code(&args), 0);
        let point = GridPoint { topology: Some(1), rain_mmh: Some(0.0), dl_rate_mbps: Some(60.0), ..Default::default() };
        let dir = iab_core::campaign::run_dir(tmp.path(), &point, 0);
        let rows: Vec<SummaryRow> = read_csv(&dir.join(SUMMARY_FILE), SUMMARY_HEADER).unwrap();
        let dirs: Vec<&SummaryRow> = rows.iter().filter(|r| r.scope == iab_core::metrics::Scope::Direction).collect();
        assert_eq!(dirs.len(), 2);
        assert!(dirs.iter().all(|r| r.interference_none_share == Some(1.0)));
    }

    #[test]
    fn sweep_writes_every_point() {
        let tmp = tempfile::tempdir().unwrap();
        let grid = tmp.path().join("grid.toml");
        std::fs::write(&grid, "topology = 2\nruns = 1\n[axes]\nrain_mmh = [0, 30]\n").unwrap();
        let base = builtin_topology(2).unwrap();
        let mut short = base.clone();
        short.simulation.duration_s = 0.02;
        let scen = tmp.path().join("short.toml");
        short.save(&scen).unwrap();
        std::fs::write(&grid, "scenario = \"short.toml\"\nruns = 2\n[axes]\nrain_mmh = [0, 30]\n").unwrap();
        let out = tmp.path().join("out");
        assert_eq!(code(&["sweep", grid.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
        let index = std::fs::read_to_string(out.join(iab_core::campaign::INDEX_FILE)).unwrap();
        assert_eq!(index.lines().count(), 1 + 4);
        assert!(out.join("rain30").join("run_1").join(SUMMARY_FILE).exists());
        std::fs::write(&grid, "topology = 2\n[axes]\nrain = [0]\n").unwrap();
        assert_eq!(code(&["sweep", grid.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_CONFIG);
    }

    #[test]
    fn curves_to_file() {
        let tmp = tempfile::tempdir().unwrap();
        let f = tmp.path().join("pl.csv");
        assert_eq!(code(&["curves", "--d-min", "2000", "--d-max", "2010", "--out", f.to_str().unwrap()]), 0);
        let text = std::fs::read_to_string(&f).unwrap();
        assert_eq!(text.lines().next().unwrap(), curves::PL_HEADER.join(","));
        assert_eq!(text.lines().count(), 12);
        let r = tmp.path().join("rain.csv");
        assert_eq!(code(&["curves", "--kind", "rain", "--rain-max", "30", "--rain-step", "15", "--out", r.to_str().unwrap()]), 0);
        assert_eq!(std::fs::read_to_string(&r).unwrap().lines().count(), 4);
        assert_eq!(code(&["curves", "--d-min", "10", "--d-max", "5"]), EXIT_CONFIG);
    }

    #[test]
    fn invariant_breach_maps_to_exit_three() {
        let f: Failure = CampaignError::Engine(EngineError::Invariant("x".into())).into();
        assert!(matches!(f, Failure::Invariant(_)));
        let f: Failure = CampaignError::Engine(EngineError::Config(ScenarioError::Invalid("x".into()))).into();
        assert!(matches!(f, Failure::Config(_)));
    }
}
