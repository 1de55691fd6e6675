//! Command-line front door: mesh generation, exact inclusion checks,
//! broken projection studies, and Poisson convergence tables.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quadfem::field::{Problem, ScalarField};
use quadfem::harness::{compare_to_fixture, threads_from_env, ConvergenceTable, FixtureTolerances};
use quadfem::mesh::{self, MeshFamily};
use quadfem::poisson::{self, doubling_levels, SolveOptions};
use quadfem::polyspace::{
    make_space, qr_equivalence, rotated_bilinear_span, verify_identity, PolySpan, SpaceKind,
};
use quadfem::projection::{projection_study, NormKind, ProjOptions};
use quadfem::refelem::ElementKind;
use quadfem::{Error, Result};

#[derive(Parser)]
#[command(
    name = "quadfem",
    version,
    about = "Finite element spaces on quadrilateral meshes: inclusion checks, \
             best-approximation studies, and Poisson convergence tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a structured mesh of the unit square.
    Mesh {
        /// square | trapezoid | asympar
        #[arg(long)]
        family: String,
        /// Subdivisions per side (even for trapezoid, power of two for asympar).
        #[arg(long)]
        n: u32,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact polynomial-space inclusion checks (no tolerances).
    Inclusion {
        /// Reference space: {p|q|s}:R or rotated.
        #[arg(long)]
        space: String,
        /// Test order r.
        #[arg(long)]
        r: u32,
        /// contains | equivalence | identity
        #[arg(long)]
        check: String,
    },
    /// Broken best-approximation study over a mesh family.
    Project {
        /// Reference space: {p|q|s}:R or rotated.
        #[arg(long)]
        space: String,
        /// square | trapezoid | asympar
        #[arg(long)]
        family: String,
        /// Finest mesh level; the study runs n = 2, 4, ..., nmax.
        #[arg(long)]
        nmax: u32,
        /// l2 | h1
        #[arg(long, default_value = "l2")]
        norm: String,
        /// quartic | peak | monomial:i,j
        #[arg(long)]
        u: String,
        #[command(flatten)]
        common: CommonStudyArgs,
    },
    /// Solve the Dirichlet Poisson problem over a mesh family.
    Solve {
        /// q2 | s2
        #[arg(long)]
        element: String,
        /// square | trapezoid | asympar
        #[arg(long)]
        family: String,
        /// Finest mesh level; the study runs n = 2, 4, ..., nmax.
        #[arg(long)]
        nmax: u32,
        /// quartic | peak
        #[arg(long)]
        problem: String,
        /// Gnuplot-compatible data file.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
        #[command(flatten)]
        common: CommonStudyArgs,
    },
}

#[derive(Args)]
struct CommonStudyArgs {
    /// Quadrature order override (points per direction) for assembly and
    /// error norms.
    #[arg(long)]
    quad_order: Option<usize>,
    /// Write the full-precision CSV table here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare against a stored fixture table (CSV).
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Relative tolerance on fixture error/percent cells.
    #[arg(long, default_value_t = 0.15)]
    err_tol: f64,
    /// Absolute tolerance on fixture rate cells.
    #[arg(long, default_value_t = 0.15)]
    rate_tol: f64,
    /// Force the serial deterministic path regardless of QUADFEM_THREADS.
    #[arg(long)]
    deterministic: bool,
}

impl CommonStudyArgs {
    fn threads(&self) -> usize {
        if self.deterministic {
            0
        } else {
            threads_from_env()
        }
    }
}

fn parse_space(s: &str) -> Result<(String, PolySpan)> {
    if s == "rotated" || s == "rotated:1" {
        return Ok(("rotated".into(), rotated_bilinear_span()));
    }
    let (kind_s, r_s) = s.split_once(':').ok_or_else(|| {
        Error::InvalidArgument(format!("bad space '{s}' (expected {{p|q|s}}:R or rotated)"))
    })?;
    let r: u32 = r_s
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad space order '{r_s}'")))?;
    let kind = match kind_s {
        "p" => SpaceKind::P,
        "q" => SpaceKind::Q,
        "s" => SpaceKind::S,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown space family '{other}' (p | q | s | rotated)"
            )))
        }
    };
    if kind == SpaceKind::S && r == 0 {
        return Err(Error::InvalidArgument(
            "serendipity spaces need r >= 1".into(),
        ));
    }
    Ok((format!("{kind}:{r}"), make_space(kind, r)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Mesh { family, n, out } => {
            let family: MeshFamily = family.parse()?;
            let mesh = mesh::generate(family, n)?;
            match out {
                Some(path) => mesh.write_file(path)?,
                None => print!("{}", mesh.to_text()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Inclusion { space, r, check } => run_inclusion(&space, r, &check),
        Command::Project {
            space,
            family,
            nmax,
            norm,
            u,
            common,
        } => {
            let (label, span) = parse_space(&space)?;
            let family: MeshFamily = family.parse()?;
            let norm: NormKind = norm.parse()?;
            let u: ScalarField = u.parse()?;
            let opts = ProjOptions {
                quad_order: common.quad_order,
                threads: common.threads(),
            };
            let levels = doubling_levels(nmax)?;
            let table = projection_study(&label, &span, family, &levels, &u, norm, &opts)?;
            finish_study(&table, &common, false)
        }
        Command::Solve {
            element,
            family,
            nmax,
            problem,
            gnuplot,
            common,
        } => {
            let kind: ElementKind = element.parse()?;
            let family: MeshFamily = family.parse()?;
            let problem: Problem = problem.parse()?;
            let opts = SolveOptions {
                quad_order: common.quad_order,
                norm_quad_order: common.quad_order,
                threads: common.threads(),
                ..SolveOptions::default()
            };
            let levels = doubling_levels(nmax)?;
            let table = poisson::table_run(&problem, kind, family, &levels, &opts)?;
            if let Some(path) = gnuplot {
                std::fs::write(path, table.to_gnuplot())?;
            }
            finish_study(&table, &common, true)
        }
    }
}

fn finish_study(
    table: &ConvergenceTable,
    common: &CommonStudyArgs,
    with_pct: bool,
) -> Result<ExitCode> {
    print!("{}", table.to_aligned_text());
    if let Some(path) = &common.out {
        table.write_csv(path, with_pct)?;
    }
    if let Some(path) = &common.fixture {
        let fixture = ConvergenceTable::read_csv(path)?;
        let report = compare_to_fixture(
            table,
            &fixture,
            &FixtureTolerances {
                err_rel: common.err_tol,
                rate_abs: common.rate_tol,
            },
        )?;
        println!("{report}");
        if !report.pass {
            return Ok(ExitCode::from(3));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_inclusion(space: &str, r: u32, check: &str) -> Result<ExitCode> {
    match check {
        "contains" => {
            let (label, span) = parse_space(space)?;
            let q = make_space(SpaceKind::Q, r);
            match span.contains_witness(&q) {
                None => println!("contains: q{r} is a subspace of {label}: yes"),
                Some(w) => {
                    println!("contains: q{r} is a subspace of {label}: no (witness monomial {w})")
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        "equivalence" => {
            let (label, span) = parse_space(space)?;
            let e = qr_equivalence(&span, r);
            let witness = match (&e.q_witness, &e.p_witness) {
                (Some(m), _) => format!(" (witness monomial {m})"),
                (None, Some(m)) => format!(" (witness monomial {m})"),
                _ => String::new(),
            };
            println!(
                "equivalence: space {label}, r={r}: q-side {}, mapped p-side {} -> {}{}",
                e.q_side,
                e.p_side,
                if e.q_side == e.p_side {
                    "consistent"
                } else {
                    "INCONSISTENT"
                },
                witness
            );
            Ok(if e.q_side == e.p_side {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        "identity" => {
            for rr in 0..=r {
                for s in 0..=rr {
                    if !verify_identity(rr, s) {
                        println!("identity: FAILED at r={rr}, s={s}");
                        return Ok(ExitCode::from(3));
                    }
                }
            }
            println!("identity: verified for all 0 <= s <= r <= {r}");
            Ok(ExitCode::SUCCESS)
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown check '{other}' (contains | equivalence | identity)"
        ))),
    }
}
