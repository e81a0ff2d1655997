use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{Method, RunConfig};
use crate::bubbles::{
    asymptotics_scan, bubble_field, snap_center, top_three_slope, two_bubble_scan, write_scan_csv, BubbleSpec,
    Placement,
};
use crate::diagnostics::{
    classify, classify_boundary, concentration_report, mt_gap_scan, quantization_monitor, BoundaryClassification,
    GapScan,
};
use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::geometry::{generate_mesh, spherical, Refinement, SurfaceMesh};
use crate::output::{fmt17, sig17, sig17_opt, to_json};
use crate::solvers::{minimize, mountain_pass, newton_solve, rho_continuation, SolveResult};
use crate::variational::{energy, geometric_residual, residual_norm, Discretization, EnergyBreakdown, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Mesh,
    Solve,
    Sweep,
    BubbleScan,
    MtCheck,
    Classify,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Mesh => "mesh",
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::BubbleScan => "bubble-scan",
            Command::MtCheck => "mt-check",
            Command::Classify => "classify",
            Command::Report => "report",
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

/// Exit status and the files written by one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
}

/// Solver failures map to 1, everything else (config, hypotheses, I/O) to 2.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } | Error::Stagnation { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_INVALID,
    }
}

#[derive(Serialize)]
struct ErrorArtifact<'a> {
    command: &'a str,
    kind: &'a str,
    message: String,
    exit_code: i32,
}

enum Status {
    Done,
    NotConverged(String),
}

struct Run<'a> {
    config: &'a RunConfig,
    out: &'a Path,
    artifacts: Vec<PathBuf>,
}

/// Runs `command`, writing artifacts into `out`. Every failure also writes
/// `errors.json`.
pub fn execute(command: Command, config: &RunConfig, out: &Path) -> Outcome {
    let mut run = Run { config, out, artifacts: Vec::new() };
    let result = std::fs::create_dir_all(out).map_err(Error::from).and_then(|_| match command {
        Command::Mesh => run.mesh(),
        Command::Solve => run.solve(),
        Command::Sweep => run.sweep(),
        Command::BubbleScan => run.bubble_scan(),
        Command::MtCheck => run.mt_check(),
        Command::Classify => run.classify(),
        Command::Report => run.report(),
    });
    let (exit_code, kind, message) = match result {
        Ok(Status::Done) => return Outcome { exit_code: EXIT_OK, artifacts: run.artifacts },
        Ok(Status::NotConverged(message)) => (EXIT_NOT_CONVERGED, "no-convergence", message),
        Err(e) => (exit_code(&e), e.kind(), e.to_string()),
    };
    log::error!("{}: {message}", command.name());
    if let Some(path) = write_error_artifact(out, command, kind, message, exit_code) {
        run.artifacts.push(path);
    }
    Outcome { exit_code, artifacts: run.artifacts }
}

/// Writes `errors.json` into `out`, returning its path on success.
pub fn write_error_artifact(
    out: &Path,
    command: Command,
    kind: &str,
    message: String,
    exit_code: i32,
) -> Option<PathBuf> {
    let artifact = ErrorArtifact { command: command.name(), kind, message, exit_code };
    let text = to_json(&artifact).ok()?;
    std::fs::create_dir_all(out).ok()?;
    let path = out.join("errors.json");
    std::fs::write(&path, text).ok()?;
    Some(path)
}

#[derive(Serialize)]
struct MeshSummary {
    vertices: usize,
    edges: usize,
    triangles: usize,
    euler_characteristic: i64,
    boundary_loops: usize,
    #[serde(serialize_with = "sig17")]
    area: f64,
    #[serde(serialize_with = "sig17")]
    exact_area: f64,
    #[serde(serialize_with = "sig17")]
    max_edge_length: f64,
    #[serde(serialize_with = "sig17")]
    rho_geometric: f64,
}

#[derive(Serialize)]
struct SolveArtifact<'a> {
    method: Method,
    #[serde(serialize_with = "sig17")]
    rho: f64,
    seed: u64,
    #[serde(serialize_with = "sig17_opt")]
    geometric_residual: Option<f64>,
    #[serde(serialize_with = "sig17_opt")]
    mountain_pass_alpha: Option<f64>,
    result: &'a SolveResult,
}

#[derive(Serialize)]
struct MtArtifact {
    center_vertex: usize,
    sharp: GapScan,
    reduced: GapScan,
    /// `|gap[n−1] − gap[n−2]|` at the sharp coefficient.
    #[serde(serialize_with = "sig17")]
    sharp_spread: f64,
    /// `gap[n−1] − gap[n−2]` at the reduced coefficient.
    #[serde(serialize_with = "sig17")]
    reduced_growth: f64,
}

#[derive(Serialize)]
struct TwoBubbleArtifact {
    #[serde(serialize_with = "sig17")]
    energy_slope: f64,
    #[serde(serialize_with = "sig17")]
    expected_energy_slope: f64,
    non_decreasing: bool,
}

#[derive(Serialize)]
struct Report<'a> {
    #[serde(serialize_with = "sig17")]
    rho: f64,
    energy: EnergyBreakdown,
    #[serde(serialize_with = "sig17")]
    residual: f64,
    #[serde(serialize_with = "sig17_opt")]
    geometric_residual: Option<f64>,
    classification: &'a BoundaryClassification,
    concentration: crate::diagnostics::ConcentrationReport,
    quantization: crate::diagnostics::QuantizationEntry,
}

impl Run<'_> {
    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, to_json(value)?)?;
        self.artifacts.push(path);
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let path = self.out.join(name);
        self.artifacts.push(path.clone());
        path
    }

    fn write_mesh(&mut self, mesh: &SurfaceMesh) -> Result<()> {
        let obj = self.path("mesh.obj");
        let loops = self.path("mesh_loops.csv");
        mesh.write_obj(&obj, &loops)
    }

    fn base_mesh(&self, extra: &[Refinement]) -> Result<SurfaceMesh> {
        let spec = extra.iter().fold(self.config.domain.to_spec(), |s, r| s.with_refinement(*r));
        generate_mesh(&spec)
    }

    fn curvature(&self, mesh: &SurfaceMesh) -> ScalarField {
        self.config.curvature.field(mesh)
    }

    fn strict_classification(&self, mesh: &SurfaceMesh) -> Result<BoundaryClassification> {
        let c = classify_boundary(mesh, &self.curvature(mesh), self.config.solver.path.kappa_min)?;
        c.require_h1()?;
        Ok(c)
    }

    /// Bubble refinements at `samples_per_loop` equally spaced points of each
    /// loop of Ω⁺.
    fn loop_refinements(&self, mesh: &SurfaceMesh, c: &BoundaryClassification) -> Vec<Refinement> {
        let path = &self.config.solver.path;
        let n = path.samples_per_loop.max(1);
        let mut out = Vec::new();
        for &l in &c.omega_plus {
            let v = mesh.vertices()[mesh.boundary_loops()[l][0]];
            let theta = crate::geometry::colatitude(v);
            for j in 0..n {
                out.push(Refinement::for_bubble(spherical(theta, 2.0 * PI * j as f64 / n as f64), path.lambda));
            }
        }
        out
    }

    fn method(&self, rho: f64, c: &BoundaryClassification) -> Method {
        match self.config.solver.method {
            Method::Auto if rho < 4.0 * PI => Method::Minimize,
            Method::Auto if rho < 8.0 * PI && !c.omega_plus_is_empty() => Method::MountainPass,
            Method::Auto => Method::Newton,
            m => m,
        }
    }

    /// Final mesh for solve and sweep: refined around the loop samples when a
    /// mountain pass will run.
    fn solver_mesh(&self) -> Result<(SurfaceMesh, BoundaryClassification)> {
        let mesh = self.base_mesh(&[])?;
        let c = self.strict_classification(&mesh)?;
        let rho0 = self.config.rho.resolve(mesh.rho_geometric())[0];
        if self.method(rho0, &c) == Method::MountainPass && self.config.solver.auto_refine {
            let extra = self.loop_refinements(&mesh, &c);
            let refined = self.base_mesh(&extra)?;
            let c = self.strict_classification(&refined)?;
            return Ok((refined, c));
        }
        Ok((mesh, c))
    }

    fn initial_guess(&self, mesh: &SurfaceMesh) -> ScalarField {
        let s = &self.config.solver;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let values = mesh
            .vertices()
            .iter()
            .map(|x| s.init_z * x[2] + if s.noise > 0.0 { s.noise * rng.gen_range(-1.0..=1.0) } else { 0.0 })
            .collect();
        ScalarField::new(mesh, values).expect("one value per vertex")
    }

    fn problem(&self, mesh: SurfaceMesh) -> Result<(ProblemSpec, Vec<f64>)> {
        let k = self.curvature(&mesh);
        let grid = self.config.rho.resolve(mesh.rho_geometric());
        let disc = Discretization::new(mesh)?;
        Ok((ProblemSpec::new(disc, k, grid[0])?, grid))
    }

    fn mesh(&mut self) -> Result<Status> {
        let mesh = self.base_mesh(&[])?;
        self.write_mesh(&mesh)?;
        let summary = MeshSummary {
            vertices: mesh.num_vertices(),
            edges: mesh.num_edges(),
            triangles: mesh.num_triangles(),
            euler_characteristic: mesh.euler_characteristic(),
            boundary_loops: mesh.boundary_loops().len(),
            area: mesh.area(),
            exact_area: self.config.domain.to_spec().exact_area(),
            max_edge_length: mesh.max_edge_length(),
            rho_geometric: mesh.rho_geometric(),
        };
        self.write_json("mesh.json", &summary)?;
        Ok(Status::Done)
    }

    fn classify(&mut self) -> Result<Status> {
        let mesh = self.base_mesh(&[])?;
        let k = self.curvature(&mesh);
        let c = classify(&mesh, &k, self.config.solver.path.kappa_min)?;
        self.write_json("classification.json", &c)?;
        c.require_h2()?;
        c.require_h1()?;
        Ok(Status::Done)
    }

    fn solve(&mut self) -> Result<Status> {
        let (mesh, c) = self.solver_mesh()?;
        self.write_json("classification.json", &c)?;
        self.write_mesh(&mesh)?;
        let (spec, _) = self.problem(mesh)?;
        let method = self.method(spec.rho(), &c);
        let cfg = self.config.solver.solver_config();
        let mut alpha = None;
        let result = match method {
            Method::MountainPass => {
                let mp = mountain_pass(&spec, &cfg)?;
                self.write_json("mountain_pass.json", &mp)?;
                alpha = Some(mp.alpha);
                mp.result
            }
            Method::Minimize => minimize(&self.initial_guess(spec.mesh()), &spec, &cfg.minimize)?,
            Method::Newton | Method::Auto => newton_solve(&self.initial_guess(spec.mesh()), &spec, &cfg.newton)?,
        };
        log::info!("{} finished in {:.2} s", result.solver, result.wall_time);
        let geometric = if (spec.rho() - 2.0 * spec.disc().area()).abs() <= 1e-9 * spec.rho() {
            Some(geometric_residual(&result.u, &spec)?)
        } else {
            None
        };
        let artifact = SolveArtifact {
            method,
            rho: spec.rho(),
            seed: self.config.seed,
            geometric_residual: geometric,
            mountain_pass_alpha: alpha,
            result: &result,
        };
        self.write_json("solution.json", &artifact)?;
        let field = self.path("solution_field.csv");
        result.u.write_csv(spec.mesh(), &field)?;
        if result.converged() {
            Ok(Status::Done)
        } else {
            Ok(Status::NotConverged(format!(
                "{} stopped with status {} after {} iterations (residual {:e})",
                result.solver,
                result.status.as_str(),
                result.iterations,
                result.residual
            )))
        }
    }

    fn sweep(&mut self) -> Result<Status> {
        let (mesh, _) = self.solver_mesh()?;
        self.write_mesh(&mesh)?;
        let (spec, grid) = self.problem(mesh)?;
        let curve = rho_continuation(&spec, &grid, &self.config.solver.solver_config())?;
        let csv = self.path("sweep.csv");
        curve.write_csv(&csv)?;
        self.write_json("sweep.json", &curve)?;
        let sequence: Vec<(f64, ScalarField)> =
            curve.rows.iter().map(|r| r.rho).zip(curve.solutions.iter().cloned()).collect();
        let q = quantization_monitor(spec.disc(), spec.curvature(), &sequence, self.report_tau())?;
        self.write_json("quantization.json", &q)?;
        if curve.all_converged() {
            Ok(Status::Done)
        } else {
            Ok(Status::NotConverged(format!("Newton failed at ρ = {:?}", curve.quantization_suspects)))
        }
    }

    fn report_tau(&self) -> f64 {
        self.config.report.tau.unwrap_or(0.3)
    }

    fn bubble_scan(&mut self) -> Result<Status> {
        let b =
            self.config.bubble.clone().ok_or_else(|| Error::Config("bubble-scan needs a [bubble] section".into()))?;
        let top = b.lambdas.iter().copied().fold(0.0, f64::max);
        let mut extra = vec![Refinement::for_bubble(b.center.to_vec3(), top)];
        if let Some(q) = b.second_center {
            extra.push(Refinement::for_bubble(q.to_vec3(), top));
        }
        let mesh = self.base_mesh(&extra)?;
        let (spec, _) = self.problem(mesh)?;
        let table = asymptotics_scan(b.center.to_vec3(), b.placement, &b.lambdas, &spec)?;
        let csv = self.path("bubble_scan.csv");
        write_scan_csv(&table.rows, &csv)?;
        self.write_json("bubble_scan.json", &table)?;
        if let Some(q) = b.second_center {
            let mesh = spec.mesh();
            let p1 = mesh.vertices()[snap_center(mesh, b.center.to_vec3(), b.placement)?];
            let p2 = mesh.vertices()[snap_center(mesh, q.to_vec3(), b.placement)?];
            let rows = two_bubble_scan(p1, p2, &b.lambdas, &spec)?;
            let csv = self.path("two_bubble.csv");
            write_scan_csv(&rows, &csv)?;
            let ls: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
            let es: Vec<f64> = rows.iter().map(|r| r.energy).collect();
            let coefficient = match b.placement {
                Placement::Boundary => 16.0 * PI,
                Placement::Interior => 32.0 * PI,
            };
            let summary = TwoBubbleArtifact {
                energy_slope: if rows.len() >= 2 { top_three_slope(&ls, &es) } else { f64::NAN },
                expected_energy_slope: coefficient - 2.0 * spec.rho(),
                non_decreasing: es.windows(2).all(|w| w[1] >= w[0]),
            };
            self.write_json("two_bubble.json", &summary)?;
        }
        Ok(Status::Done)
    }

    fn mt_check(&mut self) -> Result<Status> {
        let m = self.config.mt.clone().ok_or_else(|| Error::Config("mt-check needs an [mt] section".into()))?;
        let top = m.lambdas.iter().copied().fold(0.0, f64::max);
        let mesh = self.base_mesh(&[Refinement::for_bubble(m.center.to_vec3(), top)])?;
        let disc = Discretization::new(mesh)?;
        let vertex = snap_center(&disc.mesh, m.center.to_vec3(), Placement::Boundary)?;
        let center = disc.mesh.vertices()[vertex];
        let family: Vec<(f64, ScalarField)> = m
            .lambdas
            .iter()
            .map(|&l| Ok((l, bubble_field(&BubbleSpec::new(center, l)?, &disc.mesh)?)))
            .collect::<Result<_>>()?;
        let sharp = mt_gap_scan(&disc, &family, m.alpha)?;
        let reduced = mt_gap_scan(&disc, &family, m.alpha * (1.0 - m.reduction))?;
        let mut w = csv::Writer::from_path(self.path("mt_scan.csv"))?;
        w.write_record(["lambda", "log_term", "dirichlet", "gap_sharp", "gap_reduced"])?;
        for (a, b) in sharp.rows.iter().zip(&reduced.rows) {
            w.write_record([fmt17(a.parameter), fmt17(a.log_term), fmt17(a.dirichlet), fmt17(a.gap), fmt17(b.gap)])?;
        }
        w.flush()?;
        let artifact = MtArtifact {
            center_vertex: vertex,
            sharp_spread: sharp.last_increment.abs(),
            reduced_growth: reduced.last_increment,
            sharp,
            reduced,
        };
        self.write_json("mt_check.json", &artifact)?;
        Ok(Status::Done)
    }

    fn report(&mut self) -> Result<Status> {
        let obj = self.out.join("mesh.obj");
        let loops = self.out.join("mesh_loops.csv");
        let mesh =
            if obj.exists() && loops.exists() { SurfaceMesh::read_obj(&obj, &loops)? } else { self.solver_mesh()?.0 };
        let field_path = self.config.report.field.clone().unwrap_or_else(|| self.out.join("solution_field.csv"));
        let u = ScalarField::read_csv(&mesh, &field_path)?;
        let k = self.curvature(&mesh);
        let c = classify(&mesh, &k, self.config.solver.path.kappa_min)?;
        let (spec, _) = self.problem(mesh)?;
        let geometric = if (spec.rho() - 2.0 * spec.disc().area()).abs() <= 1e-9 * spec.rho() {
            Some(geometric_residual(&u, &spec)?)
        } else {
            None
        };
        let q = quantization_monitor(spec.disc(), spec.curvature(), &[(spec.rho(), u.clone())], self.report_tau())?;
        let report = Report {
            rho: spec.rho(),
            energy: energy(&u, &spec)?,
            residual: residual_norm(&u, &spec)?,
            geometric_residual: geometric,
            concentration: concentration_report(&u, spec.disc(), &c)?,
            quantization: q.entries.into_iter().next().expect("one entry"),
            classification: &c,
        };
        self.write_json("report.json", &report)?;
        Ok(Status::Done)
    }
}
