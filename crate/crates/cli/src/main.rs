//! `srcurv` — geodesics, variational fields, geodesic flags, canonical
//! frames, curvature extraction and verification checks for sub-Riemannian
//! structures, from the command line.
//!
//! Exit codes: 0 success (and check verdict "pass"), 2 check verdict
//! "fail", 1 usage or computation error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srcurv_core::builtins::{builtin_structure, BUILTIN_NAMES};
use srcurv_core::curvature::check_normal;
use srcurv_core::ehresmann::{curvature_identity_sample, hamiltonian_horizontality_defect, Connection};
use srcurv_core::expr::Expr;
use srcurv_core::extremal::{check_flow_homogeneity, Extremal};
use srcurv_core::flag::{flag_along_curve, FlagOptions};
use srcurv_core::frame::{
    check_structure, darboux_defect, generator_decomposition, parse_frame_file,
    CanonicalFullRankFrame, DarbouxFrame, FrameDocument,
};
use srcurv_core::ham::PhaseSystem;
use srcurv_core::jacobi::conjugate_times;
use srcurv_core::report::{
    curvature_table, jacobi_table, time_grid, trajectory_table, CheckReport, Table,
};
use srcurv_core::structure::parse_structure;
use srcurv_core::young::YoungDiagram;
use srcurv_core::{SRStructure, VectorField};

#[derive(Parser)]
#[command(
    name = "srcurv",
    version,
    about = "Sub-Riemannian geodesics, Jacobi fields, geodesic flags, canonical frames and curvature"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a normal extremal and export the trajectory.
    Geodesic {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Number of exported sample rows.
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Flag of the curve: growth vector and Young diagram along the
    /// trajectory (JSON).
    Flag {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Young diagram of the curve at a generic time (JSON).
    Young {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Variational (Jacobi) field export plus a conjugate-time scan.
    Jacobi {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Initial condition, 2n comma-separated values (momentum block
        /// first); defaults to a normalized vertical vector.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        v0: Option<Vec<f64>>,
        /// Number of exported sample rows.
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Curvature matrix along the curve from the canonical frame (metric
    /// structures) or a supplied frame file.
    Curvature {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Frame file with closed-form vertical/horizontal fields.
        #[arg(long)]
        frame: Option<PathBuf>,
        /// Number of exported sample rows.
        #[arg(long, default_value_t = 33)]
        samples: usize,
    },
    /// Verification checks emitting JSON verdicts.
    Check {
        #[command(subcommand)]
        what: CheckCmd,
    },
}

#[derive(Subcommand)]
enum CheckCmd {
    /// Normal-form conditions of a curvature matrix against a diagram.
    Normal {
        /// CSV file: either an m-by-m matrix, or the output of `srcurv
        /// curvature` (a `t`-leading table, checked row by row).
        #[arg(long)]
        curvature: PathBuf,
        /// Diagram row lengths, e.g. 2,1.
        #[arg(long, value_delimiter = ',')]
        young: Vec<usize>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Flow homogeneity under covector dilation.
    Homogeneity {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        /// Dilation factor.
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Symplectic-pairing and structural-pattern checks of a frame.
    Darboux {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        /// Frame file; defaults to the canonical frame (metric structures).
        #[arg(long)]
        frame: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Connection-curvature identity at seeded random covectors and fields.
    Ehresmann {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        /// Random sample count.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        /// Seed for the random covectors and fields.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Decomposition of the dilation generator in the frame.
    Euler {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        geo: GeoArgs,
        /// Frame file; defaults to the canonical frame (metric structures).
        #[arg(long)]
        frame: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Built-in structure name; `sphere` accepts a radius as `sphere:R`.
    #[arg(long, value_name = "NAME", conflicts_with = "structure")]
    builtin: Option<String>,
    /// Structure file (same text format as the builtins).
    #[arg(long, value_name = "FILE")]
    structure: Option<PathBuf>,
}

impl SourceArgs {
    fn load(&self) -> Result<SRStructure, String> {
        match (&self.builtin, &self.structure) {
            (Some(name), None) => builtin_structure(name).map_err(|e| e.to_string()),
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                parse_structure(&text).map_err(|e| format!("{}: {e}", path.display()))
            }
            _ => Err(format!(
                "exactly one of --builtin or --structure is required (builtins: {})",
                BUILTIN_NAMES.join(", ")
            )),
        }
    }
}

#[derive(Args, Clone)]
struct GeoArgs {
    /// Initial base point, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Vec<f64>,
    /// Initial covector, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    p0: Vec<f64>,
    /// Time horizon.
    #[arg(long = "T", value_name = "T", default_value_t = 1.0)]
    t: f64,
    /// Integrator tolerance.
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
}

impl GeoArgs {
    fn validate(&self, s: &SRStructure) -> Result<(), String> {
        let n = s.dim();
        if self.x0.len() != n {
            return Err(format!("--x0 needs {n} values, found {}", self.x0.len()));
        }
        if self.p0.len() != n {
            return Err(format!("--p0 needs {n} values, found {}", self.p0.len()));
        }
        if !(self.t > 0.0) {
            return Err("--T must be positive".into());
        }
        if !(self.tol > 0.0) {
            return Err("--tol must be positive".into());
        }
        Ok(())
    }

    fn extremal(&self, s: &SRStructure) -> Result<Extremal, String> {
        self.validate(s)?;
        Extremal::from_structure(s, &self.x0, &self.p0, self.t, self.tol)
            .map_err(|e| e.to_string())
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output format; tables default to csv, verdicts and diagrams to json.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArgs {
    fn emit(&self, text: &str) -> Result<(), String> {
        match &self.out {
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .and_then(|()| if text.ends_with('\n') { Ok(()) } else { writeln!(stdout) })
                    .map_err(|e| format!("cannot write to stdout: {e}"))
            }
            Some(path) => {
                let body =
                    if text.ends_with('\n') { text.to_string() } else { format!("{text}\n") };
                fs::write(path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))
            }
        }
    }

    fn emit_table(&self, table: &Table) -> Result<(), String> {
        match self.format.unwrap_or(Format::Csv) {
            Format::Csv => self.emit(&table.to_csv_string()),
            Format::Json => self.emit(&table.to_json()),
        }
    }

    fn emit_json(&self, what: &str, text: &str) -> Result<(), String> {
        if self.format == Some(Format::Csv) {
            return Err(format!("{what} output is JSON-only; drop `--format csv`"));
        }
        self.emit(text)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn core_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Interior sample times of an extremal, keeping clear of the endpoints
/// where one-sided differentiation would lose accuracy.
fn interior_times(ext: &Extremal, m: usize) -> Vec<f64> {
    let (a, b) = (ext.t_start(), ext.t_end());
    let margin = 0.01 * (b - a);
    time_grid(a + margin, b - margin, m.max(2))
}

fn load_frame_doc(path: &PathBuf, system: &PhaseSystem) -> Result<FrameDocument, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_frame_file(&text, system).map_err(|e| format!("{}: {e}", path.display()))
}

/// Build the frame requested on the command line: a supplied closed-form
/// family when `--frame` is given, otherwise the canonical construction
/// (which requires the structure to be a metric one).
fn build_frame(
    s: &SRStructure,
    geo: &GeoArgs,
    frame: &Option<PathBuf>,
) -> Result<Box<dyn DarbouxFrame>, String> {
    geo.validate(s)?;
    match frame {
        Some(path) => {
            let system = Arc::new(PhaseSystem::new(s).map_err(core_err)?);
            let doc = load_frame_doc(path, &system)?;
            let mut z0 = geo.p0.clone();
            z0.extend_from_slice(&geo.x0);
            let ext = Arc::new(
                Extremal::integrate(system, &z0, 0.0, geo.t, geo.tol).map_err(core_err)?,
            );
            Ok(Box::new(doc.attach(ext).map_err(core_err)?))
        }
        None => {
            if !s.is_riemannian() {
                return Err(
                    "the canonical construction needs a full-rank (metric) structure; \
                     supply --frame FILE for rank-deficient ones"
                        .into(),
                );
            }
            let tol = geo.tol.min(1e-11);
            Ok(Box::new(
                CanonicalFullRankFrame::new(s, &geo.x0, &geo.p0, geo.t, tol).map_err(core_err)?,
            ))
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.cmd {
        Cmd::Geodesic { src, geo, out, samples } => {
            let s = src.load()?;
            let ext = geo.extremal(&s)?;
            let table = trajectory_table(&ext, samples).map_err(core_err)?;
            out.emit_table(&table)?;
            eprintln!(
                "geodesic: {} rows over [0, {}], energy drift {:.3e}",
                table.rows.len(),
                geo.t,
                ext.hamiltonian_drift().map_err(core_err)?
            );
            Ok(true)
        }

        Cmd::Flag { src, geo, out } => {
            let s = src.load()?;
            let ext = geo.extremal(&s)?;
            let flag = flag_along_curve(&s, &ext, &FlagOptions::default()).map_err(core_err)?;
            let per_time: Vec<serde_json::Value> = flag
                .per_time
                .iter()
                .map(|r| serde_json::json!({ "t": r.t, "growth": r.growth }))
                .collect();
            let doc = serde_json::json!({
                "growth": flag.growth,
                "rows": flag.diagram.rows(),
                "columns": flag.diagram.columns(),
                "ample": flag.ample,
                "per_time": per_time,
            });
            out.emit_json("flag", &serde_json::to_string_pretty(&doc).unwrap())?;
            eprintln!("flag: growth {:?}, ample = {}", flag.growth, flag.ample);
            Ok(true)
        }

        Cmd::Young { src, geo, out } => {
            let s = src.load()?;
            let ext = geo.extremal(&s)?;
            let flag = flag_along_curve(&s, &ext, &FlagOptions::default()).map_err(core_err)?;
            let d = &flag.diagram;
            let doc = serde_json::json!({
                "rows": d.rows(),
                "columns": d.columns(),
                "size": d.size(),
                "growth": flag.growth,
                "ample": flag.ample,
                "picture": d.ascii(),
            });
            out.emit_json("young", &serde_json::to_string_pretty(&doc).unwrap())?;
            eprintln!("young: rows {:?}", d.rows());
            Ok(true)
        }

        Cmd::Jacobi { src, geo, out, v0, samples } => {
            let s = src.load()?;
            let n = s.dim();
            let ext = geo.extremal(&s)?;
            let v0 = match v0 {
                Some(vals) => {
                    if vals.len() != 2 * n {
                        return Err(format!("--v0 needs {} values, found {}", 2 * n, vals.len()));
                    }
                    DVector::from_column_slice(&vals)
                }
                None => {
                    let mut v = DVector::zeros(2 * n);
                    for i in 0..n {
                        v[i] = 1.0 / (n as f64).sqrt();
                    }
                    v
                }
            };
            let table = jacobi_table(&ext, &v0, samples).map_err(core_err)?;
            let scan = conjugate_times(&ext, 200, 1e-8).map_err(core_err)?;
            match out.format.unwrap_or(Format::Csv) {
                Format::Csv => out.emit(&table.to_csv_string())?,
                Format::Json => {
                    let doc = serde_json::json!({
                        "columns": table.columns,
                        "rows": table.rows,
                        "conjugate_times": scan.times,
                    });
                    out.emit(&serde_json::to_string_pretty(&doc).unwrap())?;
                }
            }
            eprintln!("jacobi: conjugate times in (0, {}]: {:?}", geo.t, scan.times);
            Ok(true)
        }

        Cmd::Curvature { src, geo, out, frame, samples } => {
            let s = src.load()?;
            let fr = build_frame(&s, &geo, &frame)?;
            let ts = interior_times(fr.extremal(), samples);
            let table = curvature_table(fr.as_ref(), &ts).map_err(core_err)?;
            out.emit_table(&table)?;
            eprintln!("curvature: {} rows, {} entries each", table.rows.len(), table.columns.len() - 1);
            Ok(true)
        }

        Cmd::Check { what } => check(what),
    }
}

fn check(what: CheckCmd) -> Result<bool, String> {
    match what {
        CheckCmd::Normal { curvature, young, tol, out } => {
            let diagram = YoungDiagram::from_rows(young).map_err(core_err)?;
            let matrices = read_matrices(&curvature, diagram.size())?;
            let mut report = CheckReport::new();
            for (label, m) in matrices {
                let rep = check_normal(&m, &diagram, tol).map_err(core_err)?;
                report.push(label, rep.max_violation, tol);
            }
            finish(report, &out, "check normal")
        }

        CheckCmd::Homogeneity { src, geo, c, out } => {
            let s = src.load()?;
            geo.validate(&s)?;
            if !(c > 0.0) {
                return Err("--c must be positive".into());
            }
            let system = Arc::new(PhaseSystem::new(&s).map_err(core_err)?);
            let mut z0 = geo.p0.clone();
            z0.extend_from_slice(&geo.x0);
            let res =
                check_flow_homogeneity(&system, &z0, geo.t, c, 9, geo.tol).map_err(core_err)?;
            let mut report = CheckReport::new();
            report.push(format!("dilation residual, c = {c}"), res, 1e-6);
            finish(report, &out, "check homogeneity")
        }

        CheckCmd::Darboux { src, geo, frame, out } => {
            let s = src.load()?;
            let fr = build_frame(&s, &geo, &frame)?;
            let ts = interior_times(fr.extremal(), 8);
            let mut report = CheckReport::new();
            report.push(
                "symplectic pairing defect",
                darboux_defect(fr.as_ref(), &ts).map_err(core_err)?,
                1e-7,
            );
            let st = check_structure(fr.as_ref(), &ts).map_err(core_err)?;
            report.push("within-row shift pattern defect", st.c1_defect, 1e-6);
            report.push("first-column projection defect", st.c2_defect, 1e-6);
            report.push("shift-coefficient consistency", st.c1_consistency, 1e-6);
            report.push("curvature-matrix asymmetry", st.r_asymmetry, 1e-6);
            finish(report, &out, "check darboux")
        }

        CheckCmd::Ehresmann { src, geo, samples, seed, out } => {
            let s = src.load()?;
            geo.validate(&s)?;
            if !s.is_riemannian() {
                return Err(
                    "the connection identity check needs a full-rank (metric) structure".into()
                );
            }
            let conn = Connection::full_rank(&s).map_err(core_err)?;
            let n = s.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut report = CheckReport::with_seed(seed);
            for k in 0..samples.max(1) {
                // sample a covector near the supplied anchor point
                let mut z = vec![0.0; 2 * n];
                for i in 0..n {
                    z[i] = geo.p0[i] + 0.3 * rng.gen_range(-1.0..1.0);
                    z[n + i] = geo.x0[i] + 0.3 * rng.gen_range(-1.0..1.0);
                }
                let xf = random_affine_field(&s, &mut rng);
                let yf = random_affine_field(&s, &mut rng);
                let sample = curvature_identity_sample(&s, &conn, &z, &xf, &yf, 1e-3)
                    .map_err(core_err)?;
                let scale = sample.tensor_side.abs().max(1.0);
                report.push(
                    format!("identity sample {k} (relative)"),
                    (sample.connection_side - sample.tensor_side).abs() / scale,
                    1e-5,
                );
                report.push(format!("curvature verticality {k}"), sample.verticality_defect, 1e-7);
                report.push(
                    format!("energy constant on lifts {k}"),
                    hamiltonian_horizontality_defect(&conn, &z).map_err(core_err)?,
                    1e-8,
                );
            }
            finish(report, &out, "check ehresmann")
        }

        CheckCmd::Euler { src, geo, frame, out } => {
            let s = src.load()?;
            let fr = build_frame(&s, &geo, &frame)?;
            let ts = interior_times(fr.extremal(), 7);
            let dec = generator_decomposition(fr.as_ref(), &ts).map_err(core_err)?;
            let mut report = CheckReport::new();
            report.push("d(dilation)/dt = -flow residual", dec.flow_identity_defect, 1e-6);
            report.push("coefficients on long-row boxes", dec.long_row_defect, 1e-6);
            report.push("coefficient variation in time", dec.coeff_variation, 1e-6);
            report.push("generator horizontal components", dec.horizontal_defect, 1e-8);
            report.push("flow generator vertical components", dec.flow_vertical_defect, 1e-7);
            finish(report, &out, "check euler")
        }
    }
}

fn finish(report: CheckReport, out: &OutArgs, what: &str) -> Result<bool, String> {
    out.emit_json(what, &report.to_json())?;
    eprintln!("{what}: {}", report.summary_line());
    Ok(report.passed())
}

fn random_affine_field(s: &SRStructure, rng: &mut ChaCha8Rng) -> VectorField {
    let chart = s.chart();
    let comps: Vec<Expr> = (0..s.dim())
        .map(|_| {
            let mut terms = vec![Expr::constant(rng.gen_range(-1.0..1.0))];
            for v in chart.names() {
                terms.push(Expr::mul(Expr::constant(rng.gen_range(-1.0..1.0)), Expr::var(v)));
            }
            Expr::sum(terms)
        })
        .collect();
    VectorField::new(chart.clone(), comps).expect("affine components match the chart")
}

/// Read curvature matrices from a CSV file: either a plain m-by-m matrix
/// (optional header), or a `t`-leading table as written by `srcurv
/// curvature`, one flattened matrix per row.
fn read_matrices(path: &PathBuf, m: usize) -> Result<Vec<(String, DMatrix<f64>)>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let first = *lines.peek().ok_or_else(|| format!("{}: empty file", path.display()))?;
    let first_cell = first.split(',').next().unwrap_or("").trim();
    let has_header = first_cell.parse::<f64>().is_err();
    let table_mode = has_header && first_cell == "t";
    if has_header {
        lines.next();
    }

    let parse_row = |line: &str| -> Result<Vec<f64>, String> {
        line.split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("{}: bad numeric cell `{c}`", path.display()))
            })
            .collect()
    };

    if table_mode {
        let mut out = Vec::new();
        for line in lines {
            let row = parse_row(line)?;
            if row.len() != m * m + 1 {
                return Err(format!(
                    "{}: expected 1 + {m}x{m} columns per row, found {}",
                    path.display(),
                    row.len()
                ));
            }
            let mat = DMatrix::from_row_slice(m, m, &row[1..]);
            out.push((format!("t = {}", row[0]), mat));
        }
        if out.is_empty() {
            return Err(format!("{}: no data rows", path.display()));
        }
        Ok(out)
    } else {
        let rows: Vec<Vec<f64>> = lines.map(parse_row).collect::<Result<_, _>>()?;
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(format!(
                "{}: expected a {m}x{m} matrix, found {} rows",
                path.display(),
                rows.len()
            ));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(vec![("matrix".to_string(), DMatrix::from_row_slice(m, m, &flat))])
    }
}
