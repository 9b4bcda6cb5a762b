use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use selfaffine::equilibrium::{equilibrium_report, gibbs_diagnostics, seven_report, tensor_all};
use selfaffine::ifs::{chaos_game, monotonicity_experiment, tuple_monotonicity};
use selfaffine::io::{self, parse_input, DecompositionRecord, Input, InputKind, OrbitRecord};
use selfaffine::pressure::{
    affinity_dimension, entropy, lyapunov_dimension, pressure_bracket, pressure_curve,
    BernoulliMeasure,
};
use selfaffine::structure::{
    block_triangularize, is_irreducible, joint_orbits, splitting_orbits, subspace_orbit,
    OrbitResult,
};
use selfaffine::{Config, Error, PotentialSpec};

#[derive(Parser, Debug)]
#[command(name = "selfaffine", version, about = "Pressure, dimension and equilibrium-state computations for matrix tuples and affine IFS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pressure bracket, and the pressure curve over `--s-grid` as CSV.
    Pressure(Common),
    /// Affinity-dimension bracket.
    Dimension(Common),
    /// Lyapunov-dimension bracket for each `--mu`.
    Lyapunov(Common),
    /// Block-triangular decomposition; factor inputs are tensored first.
    Structure(Common),
    /// Finite subspace orbits.
    Orbit(Common),
    /// Equilibrium-state candidates.
    Equilibrium(Common),
    /// Gibbs cylinder-weight diagnostics as CSV.
    Gibbs(Common),
    /// Chaos-game point cloud as CSV.
    Attractor(AttractorArgs),
    /// Affinity dimension after deleting each map.
    Monotonicity(Common),
    /// The tensor-product family with `2^k` generators.
    PaperSeven(SevenArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Input JSON file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Word length for enumerations.
    #[arg(long)]
    depth: Option<usize>,
    /// Bracket tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Singular value function exponent.
    #[arg(long)]
    s: Option<f64>,
    /// Grid `a:b:step` of exponents for the pressure curve.
    #[arg(long = "s-grid")]
    s_grid: Option<String>,
    /// CSV destination for the pressure curve.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Largest orbit enumerated before giving up.
    #[arg(long, default_value_t = 64)]
    cap: usize,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Bernoulli weights `p1,…,pN`; repeatable.
    #[arg(long)]
    mu: Vec<String>,
    /// Enumeration budget in bits, `depth · log2 N ≤ budget`.
    #[arg(long = "budget-bits")]
    budget_bits: Option<f64>,
    /// Depth of the Gibbs diagnostics.
    #[arg(long = "gibbs-depth")]
    gibbs_depth: Option<usize>,
}

#[derive(Args, Debug)]
struct AttractorArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100_000)]
    count: usize,
    #[arg(long = "burn-in", default_value_t = 100)]
    burn_in: usize,
}

#[derive(Args, Debug)]
struct SevenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2)]
    k: usize,
}

/// Why a command did not finish cleanly.
enum Failure {
    Input(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Input(e)
    }
}

type Outcome = Result<Status, Failure>;

#[derive(PartialEq)]
enum Status {
    Done,
    Stalled,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Schema(_) => "schema",
        Error::Io(_) => "io",
        Error::Singular { .. } => "singular",
        Error::NonContractive { .. } => "non-contractive",
        Error::BudgetExceeded { .. } => "budget",
        Error::DimensionMismatch { .. } | Error::NotSquare { .. } => "dimension",
        Error::OrbitOverflow { .. } => "orbit-overflow",
        _ => "invalid",
    }
}

impl Common {
    fn config(&self) -> Config {
        Config::default()
            .with_seed(self.seed)
            .with_budget_bits(self.budget_bits.unwrap_or(16.0))
    }

    fn input(&self) -> Result<Input, Failure> {
        let path = self
            .input
            .as_ref()
            .ok_or_else(|| Failure::Usage("--input is required".into()))?;
        Ok(parse_input(path)?)
    }

    fn depth(&self, alphabet: usize, config: &Config) -> usize {
        self.depth
            .unwrap_or_else(|| config.max_depth(alphabet).clamp(1, 10))
    }

    fn tol(&self) -> Result<f64, Failure> {
        let tol = self.tol.unwrap_or(1e-6);
        if !(tol > 0.0) {
            return Err(Failure::Usage(format!("--tol must be positive, got {tol}")));
        }
        Ok(tol)
    }

    fn measures(&self, alphabet: usize) -> Result<Vec<BernoulliMeasure>, Failure> {
        if self.mu.is_empty() {
            return Ok(vec![BernoulliMeasure::uniform(alphabet)]);
        }
        self.mu
            .iter()
            .map(|text| {
                let p = text
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| Failure::Usage(format!("--mu {text}: {e}")))?;
                if p.len() != alphabet {
                    return Err(Failure::Usage(format!(
                        "--mu {text}: expected {alphabet} weights"
                    )));
                }
                Ok(BernoulliMeasure::new(p)?)
            })
            .collect()
    }

    fn emit(&self, text: &str) -> Result<(), Failure> {
        write_to(self.out.as_deref(), text)
    }
}

fn write_to(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Input(Error::Io(format!("{}: {e}", p.display())))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("--s-grid {text}: expected a:b:step"));
    let parts = text
        .split(':')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    let [a, b, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| a + i as f64 * step).collect())
}

fn warn(kind: &str, msg: &str) {
    eprintln!("warning[{kind}]: {msg}");
}

fn run_pressure(c: &Common) -> Outcome {
    let input = c.input()?;
    let cfg = c.config();
    let spec = input.potential(c.s)?;
    let depth = c.depth(spec.alphabet(), &cfg);
    let bracket = pressure_bracket(&spec, depth, &cfg)?;
    let non_contractive = match &spec {
        PotentialSpec::Svf { tuple, .. } => !tuple.is_contractive(),
        _ => false,
    };
    if non_contractive {
        warn("non-contractive", "some map has norm at least 1; the pressure is still defined");
    }
    let stalled = c.tol.is_some_and(|t| bracket.width() > t);
    let s = match &spec {
        PotentialSpec::Svf { s, .. } => Some(*s),
        _ => None,
    };
    c.emit(&io::to_json(&json!({
        "depth": depth,
        "s": s,
        "bracket": bracket,
        "non_contractive": non_contractive,
        "stalled": stalled,
    }))?)?;
    if let Some(grid) = &c.s_grid {
        let grid = parse_grid(grid)?;
        let curve = pressure_curve(input.tuple()?, &grid, depth, &cfg)?;
        let dest = c
            .curve
            .clone()
            .or_else(|| c.out.as_ref().map(|o| o.with_extension("csv")))
            .ok_or_else(|| Failure::Usage("--s-grid needs --curve or --out".into()))?;
        write_to(Some(&dest), &io::curve_csv(&curve)?)?;
    }
    Ok(if stalled { Status::Stalled } else { Status::Done })
}

fn run_dimension(c: &Common) -> Outcome {
    let input = c.input()?;
    let cfg = c.config();
    let tuple = input.tuple()?;
    let depth = c.depth(tuple.len(), &cfg);
    let bracket = affinity_dimension(tuple, depth, c.tol()?, &cfg)?;
    if !bracket.contractive {
        warn("non-contractive", "enclosure is not certified");
    }
    c.emit(&io::to_json(&bracket)?)?;
    Ok(if bracket.stalled { Status::Stalled } else { Status::Done })
}

fn run_lyapunov(c: &Common) -> Outcome {
    let input = c.input()?;
    let cfg = c.config();
    let tuple = input.tuple()?;
    let depth = c.depth(tuple.len(), &cfg);
    let tol = c.tol()?;
    let mut stalled = false;
    let mut rows = Vec::new();
    for mu in c.measures(tuple.len())? {
        let bracket = lyapunov_dimension(tuple, &mu, depth, tol, &cfg)?;
        stalled |= bracket.stalled;
        rows.push(json!({ "mu": mu.probabilities(), "entropy": entropy(&mu), "bracket": bracket }));
    }
    c.emit(&io::to_json(&rows)?)?;
    Ok(if stalled { Status::Stalled } else { Status::Done })
}

fn run_structure(c: &Common) -> Outcome {
    let input = c.input()?;
    let cfg = c.config();
    let tuple = match &input.norm_product {
        Some(np) => {
            let factors: Vec<_> = np.factors().iter().map(|f| f.tuple.clone()).collect();
            tensor_all(&factors)?
        }
        None => input.tuple()?.clone(),
    };
    let tuple = &tuple;
    let dec = block_triangularize(tuple, &cfg);
    let irreducible: Vec<bool> = dec
        .blocks()
        .iter()
        .map(|b| !is_irreducible(b, &cfg).is_reducible())
        .collect();
    c.emit(&io::to_json(&json!({
        "decomposition": DecompositionRecord::new(&dec, tuple),
        "blocks_probably_irreducible": irreducible,
    }))?)?;
    Ok(Status::Done)
}

fn run_orbit(c: &Common) -> Outcome {
    let input = c.input()?;
    let cfg = c.config();
    let np = input.norm_product()?;
    let tuples: Vec<_> = np.factors().iter().map(|f| &f.tuple).collect();
    let per_factor: Vec<_> = tuples
        .iter()
        .map(|t| splitting_orbits(t, cfg.angle_tol))
        .collect();
    let mut records = Vec::new();
    if tuples.len() == 1 {
        for seed in &per_factor[0] {
            match subspace_orbit(&tuples, &seed[..1], c.cap, cfg.angle_tol)? {
                OrbitResult::Closed(orbit) => records.push(OrbitRecord::new(&orbit)),
                OrbitResult::Overflow { cap } => {
                    warn("orbit-overflow", &format!("orbit exceeded cap {cap}"))
                }
            }
        }
    } else {
        let seeds: Vec<_> = per_factor
            .iter()
            .map(|orbits| orbits.first().cloned().unwrap_or_default())
            .collect();
        if seeds.iter().all(|s| !s.is_empty()) {
            for orbit in joint_orbits(&tuples, &seeds, cfg.angle_tol)? {
                records.push(OrbitRecord::new(&orbit));
            }
        }
    }
    c.emit(&io::to_json(&json!({ "orbits": records }))?)?;
    Ok(Status::Done)
}

fn run_equilibrium(c: &Common) -> Outcome {
    let input = c.input()?;
    let cfg = c.config();
    let spec = match input.kind() {
        InputKind::SingularValuePotential => input.potential(c.s)?,
        _ => PotentialSpec::NormProduct(input.norm_product()?),
    };
    let depth = c.depth(spec.alphabet(), &cfg);
    let report = equilibrium_report(&spec, depth, c.gibbs_depth, &cfg)?;
    c.emit(&io::to_json(&report)?)?;
    let inconclusive = report.entries.iter().any(|e| e.inconclusive);
    Ok(if inconclusive { Status::Stalled } else { Status::Done })
}

fn run_gibbs(c: &Common) -> Outcome {
    let input = c.input()?;
    let cfg = c.config();
    let spec = match (input.kind(), c.s) {
        (InputKind::NormProduct, _) | (InputKind::Tuple | InputKind::Ifs, None) => {
            PotentialSpec::NormProduct(input.norm_product()?)
        }
        _ => input.potential(c.s)?,
    };
    let n_max = c
        .gibbs_depth
        .or(c.depth)
        .unwrap_or_else(|| (cfg.max_depth(spec.alphabet()) / 2).clamp(2, 8));
    let diag = gibbs_diagnostics(&spec, n_max, &cfg)?;
    c.emit(&io::gibbs_csv(&diag)?)?;
    Ok(Status::Done)
}

fn run_attractor(a: &AttractorArgs) -> Outcome {
    let c = &a.common;
    let ifs = c.input()?.ifs()?;
    let mu = c.measures(ifs.len())?.remove(0);
    let cloud = chaos_game(&ifs, &mu, a.count, a.burn_in, c.seed)?;
    c.emit(&io::point_cloud_csv(&cloud)?)?;
    Ok(Status::Done)
}

fn run_monotonicity(c: &Common) -> Outcome {
    let input = c.input()?;
    let cfg = c.config();
    let tuple = input.tuple()?;
    let depth = c.depth(tuple.len(), &cfg);
    let tol = c.tol()?;
    let report = match input.kind() {
        InputKind::Ifs => monotonicity_experiment(&input.ifs()?, depth, tol, &cfg)?,
        _ => tuple_monotonicity(tuple, depth, tol, &cfg)?,
    };
    c.emit(&io::to_json(&report)?)?;
    Ok(if report.any_stalled() { Status::Stalled } else { Status::Done })
}

fn run_seven(a: &SevenArgs) -> Outcome {
    let c = &a.common;
    let alphabet = 1usize
        .checked_shl(a.k as u32)
        .filter(|_| a.k >= 1 && a.k <= selfaffine::equilibrium::SEVEN_MAX_K)
        .ok_or_else(|| Failure::Usage(format!("--k must lie in 1..={}", selfaffine::equilibrium::SEVEN_MAX_K)))?;
    let depth = c.depth.unwrap_or((20 / a.k).clamp(1, 10));
    let bits = c
        .budget_bits
        .unwrap_or_else(|| (depth as f64 * (alphabet as f64).log2()).max(16.0));
    let cfg = Config::default().with_seed(c.seed).with_budget_bits(bits);
    let report = seven_report(a.k, depth, &cfg)?;
    c.emit(&io::to_json(&report)?)?;
    Ok(Status::Done)
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Pressure(c)
        | Command::Dimension(c)
        | Command::Lyapunov(c)
        | Command::Structure(c)
        | Command::Orbit(c)
        | Command::Equilibrium(c)
        | Command::Gibbs(c)
        | Command::Monotonicity(c) => c,
        Command::Attractor(a) => &a.common,
        Command::PaperSeven(a) => &a.common,
    }
}

fn dispatch(cmd: &Command) -> Outcome {
    match cmd {
        Command::Pressure(c) => run_pressure(c),
        Command::Dimension(c) => run_dimension(c),
        Command::Lyapunov(c) => run_lyapunov(c),
        Command::Structure(c) => run_structure(c),
        Command::Orbit(c) => run_orbit(c),
        Command::Equilibrium(c) => run_equilibrium(c),
        Command::Gibbs(c) => run_gibbs(c),
        Command::Attractor(a) => run_attractor(a),
        Command::Monotonicity(c) => run_monotonicity(c),
        Command::PaperSeven(a) => run_seven(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = common(&cli.command).threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error[usage]: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli.command) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Stalled) => {
            warn("stalled", "bracket wider than the tolerance; increase --depth");
            ExitCode::from(2)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            ExitCode::from(1)
        }
    }
}
