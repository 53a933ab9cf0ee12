//! Command-line surface for the polyhedral currents toolkit.
//!
//! Subcommands cover chain algebra (`boundary`, `mass`), flat-norm solves
//! (`flatnorm`, `fill`), grid deformation (`deform`), trajectory
//! constructors and measurements (`cone`, `stretch`, `slice`,
//! `variation`), the end-to-end pipeline (`trajectory`, `connectivity`),
//! the planar domain suite (`domain-field`, `no-retraction`), and input
//! generators (`gen`). Chains, meshes, and trajectories travel as the
//! toolkit's JSON wire formats; runs are deterministic per `--seed`.
//!
//! Usage errors exit with code 2; computation errors exit with code 1 and
//! a JSON diagnostic on standard error.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use currents::chains::{Chain, ChainJson, Point};
use currents::complex::SimplicialComplex;
use currents::domain::{
    contraction_map, direction_field, no_retraction_gap, no_retraction_witness, PolygonalDomain,
};
use currents::gridflow::{dynamical_deform, DeformOptions};
use currents::meshes::{
    concentric_loop, concentric_square_disk_mesh, dirac_chain, interval_mesh, square_annulus_mesh,
    square_annulus_generator, Mesh,
};
use currents::pipeline::{build_trajectory_seeded, connectivity_run, ConnectivityOptions};
use currents::spacetime::{cone, stretch, SpaceTimeChain};
use currents::Error;

#[derive(Parser)]
#[command(
    name = "currents",
    version,
    about = "Polyhedral currents: boundaries, flat norms, grid deformation, \
             and space-time trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boundary of a chain (JSON in, JSON out).
    Boundary {
        /// Chain JSON file.
        #[arg(long)]
        chain: PathBuf,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mass of a chain (accepts spatial and space-time chains).
    Mass {
        /// Chain JSON file.
        #[arg(long)]
        chain: PathBuf,
    },
    /// Flat norm of a chain carried by a mesh; with --homogeneous, the
    /// filling-only variant (errors when no filling exists).
    Flatnorm {
        /// Mesh JSON file.
        #[arg(long)]
        mesh: PathBuf,
        /// Chain JSON file; the chain must use mesh vertices bitwise.
        #[arg(long)]
        chain: PathBuf,
        /// Solve the homogeneous (filling-only) variant.
        #[arg(long)]
        homogeneous: bool,
        /// Emit the full solve result as JSON instead of the bare value.
        #[arg(long)]
        json: bool,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimal filling of a cycle in a mesh (the chain whose boundary is
    /// the input and whose mass is the homogeneous flat norm).
    Fill {
        /// Mesh JSON file.
        #[arg(long)]
        mesh: PathBuf,
        /// Cycle JSON file.
        #[arg(long)]
        chain: PathBuf,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deform a cycle onto a cubical grid skeleton, with the descent
    /// trajectory and diagnostics.
    Deform {
        /// Cycle JSON file (k in {0, 1}, ambient dimension 2 or 3).
        #[arg(long)]
        chain: PathBuf,
        /// Grid scale: cells have side 2*epsilon.
        #[arg(long)]
        epsilon: f64,
        /// Shift-sampling and stage seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Time steps per descent stage.
        #[arg(long, default_value_t = 1)]
        subdivision: usize,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cone trajectory: contract a chain to a point over time.
    Cone {
        /// Chain JSON file.
        #[arg(long)]
        chain: PathBuf,
        /// Apex coordinates, comma-separated (e.g. "0,0").
        #[arg(long, allow_hyphen_values = true)]
        apex: String,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stretch trajectory: sweep out a chain so that the full chain
    /// appears at time 1 with variation equal to its mass.
    Stretch {
        /// Chain JSON file (dimension >= 1).
        #[arg(long)]
        chain: PathBuf,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time slice of a space-time chain (two-sided average at
    /// breakpoints).
    Slice {
        /// Space-time chain JSON file.
        #[arg(long)]
        trajectory: PathBuf,
        /// Slice time in [0, 1].
        #[arg(long)]
        t: f64,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variation of a space-time chain; with --report, the full
    /// measurement report.
    Variation {
        /// Space-time chain JSON file.
        #[arg(long)]
        trajectory: PathBuf,
        /// Emit the full report (variation, endpoint masses, sup-slice
        /// norm, Lipschitz estimate) as JSON.
        #[arg(long)]
        report: bool,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a trajectory between two cycles of a mesh through a shared
    /// grid, with certificates.
    Trajectory {
        /// Mesh JSON file carrying both cycles.
        #[arg(long)]
        mesh: PathBuf,
        /// Start cycle JSON file.
        #[arg(long)]
        from: PathBuf,
        /// End cycle JSON file.
        #[arg(long)]
        to: PathBuf,
        /// Grid scale for both deformations.
        #[arg(long)]
        epsilon: f64,
        /// Shift-sampling and stage seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drive a sequence of cycles against a target: per-term flat norms,
    /// trajectories, and decay summary. Prints the CSV table.
    Connectivity {
        /// Mesh JSON file.
        #[arg(long)]
        mesh: PathBuf,
        /// JSON array of chain objects (the sequence T_j).
        #[arg(long)]
        sequence: PathBuf,
        /// Target cycle JSON file (default: the zero chain).
        #[arg(long)]
        target: Option<PathBuf>,
        /// Upper bound for the per-term grid scale; each term uses
        /// min(epsilon0, sqrt of its filling cost).
        #[arg(long, default_value_t = 0.5)]
        epsilon0: f64,
        /// Base seed; term j uses seed + j.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full run (records + manifest) as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the CSV table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build and verify the inward direction field of a polygonal domain;
    /// with --epsilon, also the inward contraction map.
    DomainField {
        /// Polygon JSON file: {"outer": [[x,y],...], "holes": [...]}.
        #[arg(long)]
        polygon: PathBuf,
        /// Contraction budget (Lipschitz bound 1 + epsilon).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantitative no-retraction check: gap and witness verdict for a
    /// hypothetical Lipschitz retraction of the unit square onto its
    /// boundary.
    NoRetraction {
        /// Lipschitz constant of the hypothetical retraction.
        #[arg(long)]
        lip: f64,
        /// Distance scale of the probe pair.
        #[arg(long)]
        t: f64,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate example meshes, cycles, and sequences.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Uniform segment mesh of [a, b].
    Interval {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        /// Number of segments.
        #[arg(long, default_value_t = 4)]
        cells: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Triangulated square disk carrying nested loops of half-side 1/j.
    Disk {
        /// Number of nested rings.
        #[arg(long, default_value_t = 8)]
        rings: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// 16-triangle square annulus (one hole).
    Annulus {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sequence of shrinking concentric loops (perimeter 4/j), as a JSON
    /// array of chains carried by the disk mesh.
    Loops {
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sequence of scalings (1/j) of the annulus hole-encircling cycle.
    GeneratorScalings {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted point chain from terms "x,y:w" (coordinates
    /// comma-separated, weight after the colon).
    Diracs {
        /// Ambient dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// One term per flag, e.g. --at "-2:1" or --at "0.5,0:2".
        #[arg(long = "at", required = true, allow_hyphen_values = true)]
        at: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A computation failure: everything that goes wrong after argument
/// parsing, rendered as a JSON diagnostic on standard error.
struct Failure {
    kind: &'static str,
    message: String,
    certificate: Option<f64>,
}

impl Failure {
    fn new(kind: &'static str, message: impl Into<String>) -> Failure {
        Failure {
            kind,
            message: message.into(),
            certificate: None,
        }
    }

    fn diagnostic(&self) -> String {
        let mut value = serde_json::json!({
            "error": self.message,
            "kind": self.kind,
        });
        if let Some(c) = self.certificate {
            value["certificate"] = serde_json::json!(c);
        }
        value.to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let kind = match &e {
            Error::HomologyObstruction { .. } => "homology-obstruction",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::NotACycle(_) => "not-a-cycle",
            Error::NotInComplex(_) => "not-in-complex",
            Error::MeshConformity(_) => "mesh-conformity",
            Error::ShiftSearchFailure { .. } => "shift-search-failure",
            Error::EndpointMismatch { .. } => "endpoint-mismatch",
            Error::Solver(_) => "solver",
            _ => "compute",
        };
        let certificate = match &e {
            Error::HomologyObstruction { certificate } => Some(*certificate),
            _ => None,
        };
        Failure {
            kind,
            message: e.to_string(),
            certificate,
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.diagnostic());
            ExitCode::FAILURE
        }
    }
}

fn read_text(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::new("io", format!("cannot read {}: {e}", path.display())))
}

fn read_chain(path: &PathBuf) -> Result<Chain, Failure> {
    let text = read_text(path)?;
    Chain::from_json(&text).map_err(|e| {
        Failure::new("parse", format!("{}: not a chain: {e}", path.display()))
    })
}

/// Read a space-time chain; plain spatial chain JSON (without the
/// space-time marker) is lifted by interpreting its first coordinate as
/// time, so constructor outputs round-trip.
fn read_trajectory(path: &PathBuf) -> Result<SpaceTimeChain, Failure> {
    let text = read_text(path)?;
    if let Ok(s) = SpaceTimeChain::from_json(&text) {
        return Ok(s);
    }
    let chain = Chain::from_json(&text).map_err(|e| {
        Failure::new(
            "parse",
            format!("{}: not a space-time chain: {e}", path.display()),
        )
    })?;
    SpaceTimeChain::new(chain).map_err(Failure::from)
}

fn read_complex(path: &PathBuf) -> Result<SimplicialComplex, Failure> {
    let text = read_text(path)?;
    let mesh = Mesh::from_json(&text).map_err(|e| {
        Failure::new("parse", format!("{}: not a mesh: {e}", path.display()))
    })?;
    mesh.to_complex().map_err(Failure::from)
}

fn read_sequence(path: &PathBuf) -> Result<Vec<Chain>, Failure> {
    let text = read_text(path)?;
    let wires: Vec<ChainJson> = serde_json::from_str(&text).map_err(|e| {
        Failure::new(
            "parse",
            format!("{}: not a JSON array of chains: {e}", path.display()),
        )
    })?;
    wires
        .iter()
        .map(|w| Chain::from_wire(w).map_err(Failure::from))
        .collect()
}

fn parse_coords(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|c| {
            let v: f64 = c
                .trim()
                .parse()
                .map_err(|e| Failure::new("parse", format!("bad coordinate {c:?}: {e}")))?;
            if !v.is_finite() {
                return Err(Failure::new("parse", format!("non-finite coordinate {c:?}")));
            }
            Ok(v)
        })
        .collect()
}

/// Write to standard output, treating a closed pipe as a clean stop.
fn print_line(text: &str) -> CliResult {
    let mut stdout = io::stdout().lock();
    let result = stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.write_all(b"\n"));
    match result {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(Failure::new("io", format!("cannot write output: {e}"))),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| {
            Failure::new("io", format!("cannot write {}: {e}", path.display()))
        }),
        None => print_line(text),
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Boundary { chain, out } => {
            let t = read_chain(&chain)?;
            emit(&out, &t.boundary()?.to_json())
        }
        Command::Mass { chain } => {
            let text = read_text(&chain)?;
            let mass = match Chain::from_json(&text) {
                Ok(t) => t.mass(),
                Err(_) => SpaceTimeChain::from_json(&text)
                    .map_err(|e| {
                        Failure::new(
                            "parse",
                            format!("{}: not a chain: {e}", chain.display()),
                        )
                    })?
                    .mass(),
            };
            print_line(&mass.to_string())
        }
        Command::Flatnorm {
            mesh,
            chain,
            homogeneous,
            json,
            out,
        } => {
            let x = read_complex(&mesh)?;
            let t = read_chain(&chain)?;
            let embedded = x.embed(&t)?;
            let result = if homogeneous {
                let r = x.flat_norm_hom(&embedded)?;
                if !r.feasible {
                    return Err(Error::HomologyObstruction {
                        certificate: r.certificate.unwrap_or(f64::INFINITY),
                    }
                    .into());
                }
                r
            } else {
                x.flat_norm(&embedded)?
            };
            if json {
                let wire = result.to_wire();
                emit(
                    &out,
                    &serde_json::to_string_pretty(&wire).expect("serialization cannot fail"),
                )
            } else {
                emit(&out, &result.value.to_string())
            }
        }
        Command::Fill { mesh, chain, out } => {
            let x = read_complex(&mesh)?;
            let t = read_chain(&chain)?;
            let embedded = x.embed(&t)?;
            let result = x.flat_norm_hom(&embedded)?;
            if !result.feasible {
                return Err(Error::HomologyObstruction {
                    certificate: result.certificate.unwrap_or(f64::INFINITY),
                }
                .into());
            }
            let filling = result
                .filling
                .as_ref()
                .expect("feasible solve carries its filling")
                .to_chain()?;
            emit(&out, &filling.to_json())
        }
        Command::Deform {
            chain,
            epsilon,
            seed,
            subdivision,
            out,
        } => {
            let t = read_chain(&chain)?;
            let opts = DeformOptions {
                seed,
                subdivision,
                ..DeformOptions::default()
            };
            let result = dynamical_deform(&t, epsilon, &opts)?;
            emit(&out, &result.to_json())
        }
        Command::Cone { chain, apex, out } => {
            let t = read_chain(&chain)?;
            let coords = parse_coords(&apex)?;
            let v = Point::new(coords);
            emit(&out, &cone(&t, &v)?.to_json())
        }
        Command::Stretch { chain, out } => {
            let t = read_chain(&chain)?;
            emit(&out, &stretch(&t)?.to_json())
        }
        Command::Slice { trajectory, t, out } => {
            let s = read_trajectory(&trajectory)?;
            let slice = s.slice(t)?;
            emit(&out, &slice.chain.to_json())
        }
        Command::Variation {
            trajectory,
            report,
            out,
        } => {
            let s = read_trajectory(&trajectory)?;
            if report {
                let r = s.report()?;
                emit(
                    &out,
                    &serde_json::to_string_pretty(&r).expect("serialization cannot fail"),
                )
            } else {
                emit(&out, &s.variation().to_string())
            }
        }
        Command::Trajectory {
            mesh,
            from,
            to,
            epsilon,
            seed,
            out,
        } => {
            let x = read_complex(&mesh)?;
            let t0 = read_chain(&from)?;
            let t1 = read_chain(&to)?;
            let built = build_trajectory_seeded(&t0, &t1, &x, epsilon, seed)?;
            emit(&out, &built.to_json())
        }
        Command::Connectivity {
            mesh,
            sequence,
            target,
            epsilon0,
            seed,
            out,
            csv,
        } => {
            let x = read_complex(&mesh)?;
            let seq = read_sequence(&sequence)?;
            let first = seq.first().ok_or_else(|| {
                Failure::new("parse", "sequence file holds no chains")
            })?;
            let target = match &target {
                Some(path) => read_chain(path)?,
                None => Chain::zero(first.k(), first.d()),
            };
            let opts = ConnectivityOptions { epsilon0, seed };
            let run = connectivity_run(&x, &target, &seq, &opts)?;
            let table = run.csv();
            print_line(table.trim_end_matches('\n'))?;
            if let Some(path) = &csv {
                fs::write(path, &table).map_err(|e| {
                    Failure::new("io", format!("cannot write {}: {e}", path.display()))
                })?;
            }
            if let Some(path) = &out {
                let manifest = serde_json::json!({
                    "tool": "currents",
                    "version": env!("CARGO_PKG_VERSION"),
                    "seed": seed,
                    "epsilon0": epsilon0,
                    "tolerances": {
                        "lp": 1e-9,
                        "deformation_defect": DeformOptions::default().defect_tol,
                        "endpoint_gap": 1e-9,
                    },
                });
                let full = serde_json::json!({
                    "manifest": manifest,
                    "run": serde_json::to_value(&run).expect("serialization cannot fail"),
                });
                fs::write(
                    path,
                    serde_json::to_string_pretty(&full).expect("serialization cannot fail"),
                )
                .map_err(|e| {
                    Failure::new("io", format!("cannot write {}: {e}", path.display()))
                })?;
            }
            Ok(())
        }
        Command::DomainField {
            polygon,
            epsilon,
            out,
        } => {
            let text = read_text(&polygon)?;
            let dom = PolygonalDomain::from_json(&text)?;
            let field = direction_field(&dom)?;
            let mut value = serde_json::json!({
                "field": field.report(),
            });
            if let Some(eps) = epsilon {
                let map = contraction_map(&dom, eps)?;
                value["contraction"] =
                    serde_json::to_value(map.report()).expect("serialization cannot fail");
            }
            emit(
                &out,
                &serde_json::to_string_pretty(&value).expect("serialization cannot fail"),
            )
        }
        Command::NoRetraction { lip, t, out } => {
            let gap = no_retraction_gap(lip, t)?;
            let witness = no_retraction_witness(lip, t)?;
            let value = serde_json::json!({
                "lip": lip,
                "t": t,
                "gap": gap,
                "witness": witness,
            });
            emit(
                &out,
                &serde_json::to_string_pretty(&value).expect("serialization cannot fail"),
            )
        }
        Command::Gen(gen) => run_gen(gen),
    }
}

fn run_gen(gen: GenCommand) -> CliResult {
    match gen {
        GenCommand::Interval { a, b, cells, out } => {
            emit(&out, &interval_mesh(a, b, cells)?.to_json())
        }
        GenCommand::Disk { rings, out } => {
            emit(&out, &concentric_square_disk_mesh(rings)?.to_json())
        }
        GenCommand::Annulus { out } => emit(&out, &square_annulus_mesh().to_json()),
        GenCommand::Loops { count, out } => {
            let wires: Result<Vec<ChainJson>, Error> = (1..=count.max(1))
                .map(|j| concentric_loop(j).map(|c| c.to_wire()))
                .collect();
            emit(
                &out,
                &serde_json::to_string_pretty(&wires?).expect("serialization cannot fail"),
            )
        }
        GenCommand::GeneratorScalings { count, out } => {
            let generator = square_annulus_generator();
            let wires: Vec<ChainJson> = (1..=count.max(1))
                .map(|j| generator.scale(1.0 / j as f64).to_wire())
                .collect();
            emit(
                &out,
                &serde_json::to_string_pretty(&wires).expect("serialization cannot fail"),
            )
        }
        GenCommand::Diracs { d, at, out } => {
            let mut terms = Vec::with_capacity(at.len());
            for spec in &at {
                let (coords, weight) = spec.rsplit_once(':').ok_or_else(|| {
                    Failure::new(
                        "parse",
                        format!("bad term {spec:?}: expected \"x,y:w\""),
                    )
                })?;
                let w: f64 = weight.trim().parse().map_err(|e| {
                    Failure::new("parse", format!("bad weight {weight:?}: {e}"))
                })?;
                terms.push((parse_coords(coords)?, w));
            }
            emit(&out, &dirac_chain(d, &terms)?.to_json())
        }
    }
}
