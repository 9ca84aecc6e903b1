//! Command-line front end.
//!
//! Every flag can also come from a flat TOML file passed with `--config`;
//! keys mirror the long flag names and flags override the file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config_space::{enumerate, ChainGeometry, Topology};
use crate::droplet::{one_magnon_dispersion, solve_droplet, DropletParams};
use crate::error::Error;
use crate::kink::{KinkParams, KinkSystem, DEFAULT_MAX_ITER, DEFAULT_TOL, DEFAULT_WEIGHT_K};
use crate::oracle::{binomial, build_periodic_blocks, lowest_band, open_spectrum, SpectrumDump, DEFAULT_SECTOR_CAP};
use crate::verification::{bandwidth_scaling, fourier_stability, verify, BandSource};

/// Directory used for artifacts when `--output` is not given.
pub const OUTPUT_DIR_ENV: &str = "XXZ_DROPLET_OUTPUT_DIR";

/// Largest open-chain sector the `kink` command diagonalizes densely.
pub const DENSE_CHECK_LIMIT: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "xxz-droplet", version, about = "Kink and droplet expansions for the Ising-like XXZ chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the open-chain kink expansion and check it against the oracle.
    Kink(Flags),
    /// Solve the periodic droplet expansion and tabulate E(k).
    Droplet(Flags),
    /// Dump the exact momentum-resolved spectrum of the ring.
    Oracle(Flags),
    /// Full expansion-vs-oracle comparison with pass/fail checks.
    Verify(Flags),
    /// Log-log bandwidth fit over a grid of couplings.
    Scaling(Flags),
    /// Finite-size stability of the Fourier coefficients e_n.
    Stability(Flags),
    /// Dump the truncated configuration space.
    Enumerate(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kink(_) => "kink",
            Command::Droplet(_) => "droplet",
            Command::Oracle(_) => "oracle",
            Command::Verify(_) => "verify",
            Command::Scaling(_) => "scaling",
            Command::Stability(_) => "stability",
            Command::Enumerate(_) => "enumerate",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Kink(f)
            | Command::Droplet(f)
            | Command::Oracle(f)
            | Command::Verify(f)
            | Command::Scaling(f)
            | Command::Stability(f)
            | Command::Enumerate(f) => f,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TopologyArg {
    Open,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceArg {
    Oracle,
    Expansion,
}

/// Raw flags; every field is optional so a config file can fill the gaps.
#[derive(Clone, Debug, Default, clap::Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Flags {
    /// Flat TOML file with defaults for any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Number of sites N.
    #[arg(long)]
    pub sites: Option<usize>,
    /// Number of down spins m.
    #[arg(long)]
    pub down: Option<usize>,
    /// Transverse coupling ε.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Boundary field A at site 1 (open chain).
    #[arg(long)]
    pub field_a: Option<f64>,
    /// Boundary field B at site N (open chain).
    #[arg(long)]
    pub field_b: Option<f64>,
    /// Truncation order w_max.
    #[arg(long)]
    pub wmax: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Weight constant K of the weighted norms.
    #[arg(long)]
    pub weight_k: Option<f64>,
    /// Largest sector dimension C(N, m) the oracle will materialize.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Momentum indices j (k = 2πj/N) for residual checks.
    #[arg(long, value_delimiter = ',')]
    pub k_indices: Option<Vec<usize>>,
    /// Coupling grid for `scaling`.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Chain lengths for `stability`.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Fourier orders n for `stability`.
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Seed for the contraction certificate.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ball radius for the contraction certificate.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of sampled pairs for the contraction certificate.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Chain topology for `enumerate`.
    #[arg(long, value_enum)]
    pub topology: Option<TopologyArg>,
    /// Bandwidth source for `scaling`.
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    /// Artifact path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Add a generation timestamp to JSON artifacts.
    #[arg(long)]
    #[serde(default)]
    pub timestamp: bool,
}

impl Flags {
    /// Fields set in `self` win over `base`.
    fn over(self, base: Flags) -> Flags {
        Flags {
            config: self.config.or(base.config),
            sites: self.sites.or(base.sites),
            down: self.down.or(base.down),
            epsilon: self.epsilon.or(base.epsilon),
            field_a: self.field_a.or(base.field_a),
            field_b: self.field_b.or(base.field_b),
            wmax: self.wmax.or(base.wmax),
            tol: self.tol.or(base.tol),
            max_iter: self.max_iter.or(base.max_iter),
            weight_k: self.weight_k.or(base.weight_k),
            cap: self.cap.or(base.cap),
            k_indices: self.k_indices.or(base.k_indices),
            epsilons: self.epsilons.or(base.epsilons),
            sizes: self.sizes.or(base.sizes),
            orders: self.orders.or(base.orders),
            seed: self.seed.or(base.seed),
            delta: self.delta.or(base.delta),
            samples: self.samples.or(base.samples),
            topology: self.topology.or(base.topology),
            source: self.source.or(base.source),
            output: self.output.or(base.output),
            format: self.format.or(base.format),
            timestamp: self.timestamp || base.timestamp,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub sites: Option<usize>,
    pub down: Option<usize>,
    pub epsilon: f64,
    pub field_a: f64,
    pub field_b: f64,
    pub w_max: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub weight_k: f64,
    pub cap: usize,
    pub k_indices: Option<Vec<usize>>,
    pub epsilons: Vec<f64>,
    pub sizes: Vec<usize>,
    pub orders: Vec<usize>,
    pub seed: u64,
    pub delta: f64,
    pub samples: usize,
    pub topology: Topology,
    pub source: BandSource,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub timestamp: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Rejected(Error),
    Numerical(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            e @ Error::InvalidParameter(_) => CliError::Rejected(e),
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Rejected(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }

    pub fn record(&self) -> Value {
        match self {
            CliError::Usage(msg) => json!({"error": "Usage", "message": msg}),
            CliError::Rejected(e) | CliError::Numerical(e) => json!({"error": e.kind(), "message": e.to_string()}),
            CliError::Io(msg) => json!({"error": "Io", "message": msg}),
        }
    }
}

fn read_config_file(path: &Path) -> Result<Flags, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config file {}: {e}", path.display())))
}

impl RunConfig {
    pub fn resolve(command: &Command) -> Result<Self, CliError> {
        let flags = command.flags().clone();
        let file = match &flags.config {
            Some(path) => read_config_file(path)?,
            None => Flags::default(),
        };
        let f = flags.over(file);
        let name = command.name();
        let output = f.output.or_else(|| {
            std::env::var_os(OUTPUT_DIR_ENV).map(|dir| {
                let ext = match f.format.unwrap_or(Format::Json) {
                    Format::Json => "json",
                    Format::Csv => "csv",
                };
                PathBuf::from(dir).join(format!("{name}.{ext}"))
            })
        });
        let default_wmax = match command {
            Command::Kink(_) => Some(8),
            Command::Enumerate(_) => None,
            _ => Some(7),
        };
        Ok(RunConfig {
            command: name.to_string(),
            sites: f.sites,
            down: f.down,
            epsilon: f.epsilon.unwrap_or(0.05),
            field_a: f.field_a.unwrap_or(1.0),
            field_b: f.field_b.unwrap_or(1.0),
            w_max: f.wmax.or(default_wmax),
            tol: f.tol.unwrap_or(DEFAULT_TOL),
            max_iter: f.max_iter.unwrap_or(DEFAULT_MAX_ITER),
            weight_k: f.weight_k.unwrap_or(DEFAULT_WEIGHT_K),
            cap: f.cap.unwrap_or(DEFAULT_SECTOR_CAP),
            k_indices: f.k_indices,
            epsilons: f.epsilons.unwrap_or_else(|| vec![0.02, 0.04, 0.08]),
            sizes: f.sizes.unwrap_or_else(|| vec![12, 16, 20]),
            orders: f.orders.unwrap_or_else(|| vec![1]),
            seed: f.seed.unwrap_or(0),
            delta: f.delta.unwrap_or(0.1),
            samples: f.samples.unwrap_or(200),
            topology: match f.topology.unwrap_or(TopologyArg::Periodic) {
                TopologyArg::Open => Topology::Open,
                TopologyArg::Periodic => Topology::Periodic,
            },
            source: match f.source.unwrap_or(SourceArg::Oracle) {
                SourceArg::Oracle => BandSource::Oracle,
                SourceArg::Expansion => BandSource::Expansion,
            },
            output,
            format: f.format.unwrap_or(Format::Json),
            timestamp: f.timestamp,
        })
    }

    fn sites(&self) -> Result<usize, CliError> {
        self.sites.ok_or_else(|| CliError::Usage("--sites is required".into()))
    }

    fn down(&self) -> Result<usize, CliError> {
        self.down.ok_or_else(|| CliError::Usage("--down is required".into()))
    }

    fn w_max(&self) -> Result<usize, CliError> {
        self.w_max.ok_or_else(|| CliError::Usage("--wmax is required".into()))
    }

    fn kink_params(&self) -> Result<KinkParams, CliError> {
        Ok(KinkParams {
            sites: self.sites()?,
            down: self.down()?,
            epsilon: self.epsilon,
            field_a: self.field_a,
            field_b: self.field_b,
            w_max: self.w_max()?,
            tol: self.tol,
            max_iter: self.max_iter,
            weight_k: self.weight_k,
        })
    }

    fn droplet_params(&self) -> Result<DropletParams, CliError> {
        Ok(DropletParams {
            sites: self.sites()?,
            down: self.down()?,
            epsilon: self.epsilon,
            w_max: self.w_max()?,
            tol: self.tol,
            max_iter: self.max_iter,
            weight_k: self.weight_k,
        })
    }
}

/// A machine-readable artifact.
enum Artifact {
    Json(Value),
    Csv(Vec<String>, Vec<Vec<String>>),
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("artifact serializes")
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn sites_field(sites: &[usize]) -> String {
    sites.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

fn execute(cfg: &RunConfig, out: &mut dyn Write) -> Result<(Artifact, bool), CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let mut failed = false;
    let artifact = match cfg.command.as_str() {
        "enumerate" => {
            let geometry = ChainGeometry::new(cfg.sites()?, cfg.topology)?;
            let space = enumerate(geometry, cfg.down()?, cfg.w_max()?)?;
            writeln!(
                out,
                "{} chain, N={} m={} w_max={}: {} entries",
                geometry.topology(),
                geometry.sites(),
                space.down(),
                space.w_max(),
                space.len()
            )
            .map_err(io)?;
            writeln!(out, "entries per depth: {:?}", space.depth_counts()).map_err(io)?;
            match cfg.format {
                Format::Json => Artifact::Json(to_value(&space.to_dump())),
                Format::Csv => Artifact::Csv(
                    header(&["sites", "w", "walls"]),
                    space.entries().iter().map(|e| vec![sites_field(&e.sites.to_vec()), e.w.to_string(), e.walls.to_string()]).collect(),
                ),
            }
        }
        "kink" => {
            let params = cfg.kink_params()?;
            let system = KinkSystem::new(params.clone())?;
            let cert = system.certify_contraction(cfg.delta, cfg.samples, cfg.seed);
            let bound = system.contraction_bound(cfg.delta);
            let solution = system.solve()?;
            writeln!(
                out,
                "kink ground energy 2+E = {:.15}  (E = {:.6e}, {} iterations, residual {:.2e})",
                solution.energy(),
                solution.coefficients.shift,
                solution.iterations,
                solution.residual
            )
            .map_err(io)?;
            writeln!(out, "contraction ratio {:.4} (bound {:.4}) over {} pairs", cert.max_ratio, bound, cert.pairs).map_err(io)?;
            let dim = binomial(params.sites, params.down);
            let oracle = if dim <= DENSE_CHECK_LIMIT.min(cfg.cap) {
                let exact = open_spectrum(params.sites, params.down, params.epsilon, params.field_a, params.field_b, cfg.cap)?[0];
                writeln!(out, "oracle lowest eigenvalue {exact:.15}, |diff| = {:.2e}", (exact - solution.energy()).abs()).map_err(io)?;
                json!({"energy": exact, "abs_diff": (exact - solution.energy()).abs()})
            } else {
                writeln!(out, "oracle check skipped: sector dimension {dim}").map_err(io)?;
                Value::Null
            };
            let dump = solution.to_dump();
            match cfg.format {
                Format::Json => {
                    let mut v = to_value(&dump);
                    v["oracle"] = oracle;
                    v["contraction"] =
                        json!({"max_ratio": cert.max_ratio, "bound": bound, "pairs": cert.pairs, "delta": cfg.delta, "seed": cfg.seed});
                    Artifact::Json(v)
                }
                Format::Csv => Artifact::Csv(
                    header(&["sites", "w", "value"]),
                    dump.coefficients.iter().map(|c| vec![sites_field(&c.sites), c.w.to_string(), format!("{:e}", c.value)]).collect(),
                ),
            }
        }
        "droplet" => {
            let (sites, down) = (cfg.sites()?, cfg.down()?);
            let (dispersion, dump) = if down == 1 {
                writeln!(out, "single magnon: exact band from the oracle").map_err(io)?;
                (one_magnon_dispersion(sites, cfg.epsilon, cfg.cap)?, Value::Null)
            } else {
                let solution = solve_droplet(cfg.droplet_params()?)?;
                writeln!(out, "droplet expansion: {} iterations, residual {:.2e}", solution.iterations, solution.residual).map_err(io)?;
                (solution.dispersion()?, to_value(&solution.to_dump()?))
            };
            writeln!(out, "bandwidth {:.6e}", dispersion.bandwidth).map_err(io)?;
            for s in &dispersion.samples {
                writeln!(out, "  j={:<3} k={:.6}  E={:.15}", s.k_index, s.k, s.energy).map_err(io)?;
            }
            match cfg.format {
                Format::Json => {
                    let mut v = if dump.is_null() { json!({}) } else { dump };
                    v["dispersion"] = to_value(&dispersion);
                    Artifact::Json(v)
                }
                Format::Csv => Artifact::Csv(
                    header(&["k_index", "k", "E"]),
                    dispersion
                        .samples
                        .iter()
                        .map(|s| vec![s.k_index.to_string(), format!("{:.17}", s.k), format!("{:.17}", s.energy)])
                        .collect(),
                ),
            }
        }
        "oracle" => {
            let (sites, down) = (cfg.sites()?, cfg.down()?);
            let blocks = build_periodic_blocks(sites, down, cfg.epsilon, cfg.cap, false)?;
            let band = lowest_band(&blocks);
            writeln!(
                out,
                "ring N={sites} m={down} eps={}: {} states in {} momentum blocks",
                cfg.epsilon,
                blocks.iter().map(|b| b.dim()).sum::<usize>(),
                blocks.len()
            )
            .map_err(io)?;
            for r in &band.rows {
                writeln!(out, "  j={:<3} lowest={:.15} gap={}", r.k_index, r.lowest, r.gap.map_or("-".into(), |g| format!("{g:.6}")))
                    .map_err(io)?;
            }
            writeln!(out, "band width {:.6e}", band.width).map_err(io)?;
            let dump = SpectrumDump::new(sites, down, cfg.epsilon, &blocks);
            match cfg.format {
                Format::Json => Artifact::Json(to_value(&dump)),
                Format::Csv => Artifact::Csv(
                    header(&["k_index", "level", "eigenvalue"]),
                    dump.blocks
                        .iter()
                        .flat_map(|b| {
                            b.eigenvalues
                                .iter()
                                .enumerate()
                                .map(move |(i, e)| vec![b.k_index.to_string(), i.to_string(), format!("{e:.17}")])
                        })
                        .collect(),
                ),
            }
        }
        "verify" => {
            let params = cfg.droplet_params()?;
            let report = verify(&params, cfg.k_indices.as_deref(), cfg.cap)?;
            write!(out, "{}", report.render_text()).map_err(io)?;
            failed = report.failed();
            match cfg.format {
                Format::Json => Artifact::Json(to_value(&report)),
                Format::Csv => Artifact::Csv(
                    header(&["k_index", "k", "E", "E_oracle", "abs_diff", "rank"]),
                    report
                        .comparison
                        .rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.k_index.to_string(),
                                format!("{:.17}", r.k),
                                format!("{:.17}", r.e_expansion),
                                format!("{:.17}", r.e_oracle_min),
                                format!("{:e}", r.abs_diff),
                                r.rank.to_string(),
                            ]
                        })
                        .collect(),
                ),
            }
        }
        "scaling" => {
            let template = DropletParams {
                sites: cfg.sites()?,
                down: cfg.down()?,
                epsilon: cfg.epsilons.iter().copied().fold(0.0, f64::max),
                w_max: cfg.w_max()?,
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                weight_k: cfg.weight_k,
            };
            let fit = bandwidth_scaling(&template, &cfg.epsilons, cfg.source, cfg.cap)?;
            for (e, b) in fit.epsilons.iter().zip(&fit.bandwidths) {
                writeln!(out, "  eps={e:<8} bandwidth={b:.6e}").map_err(io)?;
            }
            writeln!(out, "log-log slope {:.4} (m = {})", fit.slope, template.down).map_err(io)?;
            match cfg.format {
                Format::Json => Artifact::Json(to_value(&fit)),
                Format::Csv => Artifact::Csv(
                    header(&["epsilon", "bandwidth"]),
                    fit.epsilons.iter().zip(&fit.bandwidths).map(|(e, b)| vec![e.to_string(), format!("{b:e}")]).collect(),
                ),
            }
        }
        "stability" => {
            let st = fourier_stability(cfg.down()?, cfg.epsilon, cfg.w_max()?, &cfg.sizes, &cfg.orders)?;
            for (n, row) in st.sizes.iter().zip(&st.values) {
                writeln!(out, "  N={n:<4} e_n = {row:?}").map_err(io)?;
            }
            writeln!(out, "consecutive differences {:?}; nonincreasing: {}", st.differences, st.nonincreasing).map_err(io)?;
            match cfg.format {
                Format::Json => Artifact::Json(to_value(&st)),
                Format::Csv => Artifact::Csv(
                    header(&["N", "n", "e_n"]),
                    st.sizes
                        .iter()
                        .zip(&st.values)
                        .flat_map(|(size, row)| {
                            st.orders.iter().zip(row).map(move |(o, v)| vec![size.to_string(), o.to_string(), format!("{v:e}")])
                        })
                        .collect(),
                ),
            }
        }
        other => return Err(CliError::Usage(format!("unknown command {other}"))),
    };
    Ok((artifact, failed))
}

fn write_artifact(cfg: &RunConfig, artifact: Artifact) -> Result<(), CliError> {
    let Some(path) = &cfg.output else { return Ok(()) };
    let text = match artifact {
        Artifact::Json(mut v) => {
            if cfg.timestamp {
                let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                v["generated_at"] = json!(secs);
            }
            serde_json::to_string_pretty(&v).expect("json") + "\n"
        }
        Artifact::Csv(h, rows) => csv_text(&h, &rows)?,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs one command; returns the process exit status.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = RunConfig::resolve(&cli.command).and_then(|cfg| {
        let (artifact, failed) = execute(&cfg, out)?;
        write_artifact(&cfg, artifact)?;
        if let Some(p) = &cfg.output {
            let _ = writeln!(out, "wrote {}", p.display());
        }
        Ok(failed)
    });
    match result {
        Ok(false) => 0,
        Ok(true) => 1,
        Err(e) => {
            let _ = writeln!(err, "{}", e.record());
            e.exit_code()
        }
    }
}
