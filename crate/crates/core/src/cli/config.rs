use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bubbles::{Placement, DEFAULT_GRID};
use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::geometry::{spherical, DomainSpec, Refinement, SurfaceMesh, Vec3};
use crate::solvers::{MinimizeConfig, NewtonConfig, PathConfig, SolverConfig};

/// A point given by colatitude and azimuth, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
}

impl Point {
    pub fn to_vec3(self) -> Vec3 {
        spherical(self.theta, self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineAt {
    pub at: Point,
    /// Bubble scale to resolve around `at`.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainConfig {
    Cap {
        theta: f64,
        h: f64,
        #[serde(default)]
        refine: Vec<RefineAt>,
    },
    Band {
        theta1: f64,
        theta2: f64,
        h: f64,
        #[serde(default)]
        refine: Vec<RefineAt>,
    },
}

impl DomainConfig {
    pub fn to_spec(&self) -> DomainSpec {
        let (spec, refine) = match self {
            DomainConfig::Cap { theta, h, refine } => (DomainSpec::cap(*theta, *h), refine),
            DomainConfig::Band { theta1, theta2, h, refine } => (DomainSpec::band(*theta1, *theta2, *h), refine),
        };
        refine.iter().fold(spec, |s, r| s.with_refinement(Refinement::for_bubble(r.at.to_vec3(), r.lambda)))
    }

    /// Colatitudes of the boundary circles.
    pub fn boundary_colatitudes(&self) -> Vec<f64> {
        match self {
            DomainConfig::Cap { theta, .. } => vec![*theta],
            DomainConfig::Band { theta1, theta2, .. } => vec![*theta1, *theta2],
        }
    }
}

/// Curvature presets. `affine-z` is `a + b·z`; `product` multiplies affine
/// factors `a_i + b_i·z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurvaturePreset {
    Const { c: f64 },
    AffineZ { a: f64, b: f64 },
    Product { factors: Vec<[f64; 2]> },
}

impl CurvaturePreset {
    pub fn value_at(&self, x: Vec3) -> f64 {
        match self {
            CurvaturePreset::Const { c } => *c,
            CurvaturePreset::AffineZ { a, b } => a + b * x[2],
            CurvaturePreset::Product { factors } => factors.iter().map(|[a, b]| a + b * x[2]).product(),
        }
    }

    pub fn field(&self, mesh: &SurfaceMesh) -> ScalarField {
        ScalarField::from_fn(mesh, |x| self.value_at(x))
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            CurvaturePreset::Const { c } => c.is_finite(),
            CurvaturePreset::AffineZ { a, b } => a.is_finite() && b.is_finite(),
            CurvaturePreset::Product { factors } => {
                !factors.is_empty() && factors.iter().flatten().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("curvature preset {self:?} needs finite coefficients and at least one factor")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
#[derive(Default)]
pub enum RhoConfig {
    /// `ρ = 2|Σ|` of the discrete mesh.
    #[default]
    Geometric,
    Explicit {
        value: f64,
    },
    /// Either absolute `values` or `factors` of the geometric value.
    Grid {
        #[serde(default)]
        values: Vec<f64>,
        #[serde(default)]
        factors: Vec<f64>,
    },
}

impl RhoConfig {
    pub fn resolve(&self, geometric: f64) -> Vec<f64> {
        match self {
            RhoConfig::Geometric => vec![geometric],
            RhoConfig::Explicit { value } => vec![*value],
            RhoConfig::Grid { values, factors } if values.is_empty() => factors.iter().map(|f| f * geometric).collect(),
            RhoConfig::Grid { values, .. } => values.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RhoConfig::Geometric => Ok(()),
            RhoConfig::Explicit { value } if *value > 0.0 && value.is_finite() => Ok(()),
            RhoConfig::Explicit { value } => Err(Error::Config(format!("rho.value = {value} must be positive"))),
            RhoConfig::Grid { values, factors } => {
                let grid = match (values.is_empty(), factors.is_empty()) {
                    (false, true) => values,
                    (true, false) => factors,
                    _ => return Err(Error::Config("rho grid needs exactly one of `values` or `factors`".into())),
                };
                if grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) || grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("rho grid must be positive and strictly increasing".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Minimize below 4π, mountain pass on `(4π, 8π)` when Ω⁺ is nonempty,
    /// plain Newton otherwise.
    #[default]
    Auto,
    Newton,
    Minimize,
    MountainPass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: Method,
    /// Initial guess `init_z·z + noise·ξ` with `ξ` uniform on `[−1, 1]`.
    pub init_z: f64,
    pub noise: f64,
    /// Refine the mesh around the mountain-pass bubble centers.
    pub auto_refine: bool,
    pub minimize: MinimizeConfig,
    pub newton: NewtonConfig,
    pub path: PathConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            init_z: 0.0,
            noise: 0.0,
            auto_refine: true,
            minimize: MinimizeConfig::default(),
            newton: NewtonConfig::default(),
            path: PathConfig::default(),
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { minimize: self.minimize, newton: self.newton, path: self.path }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleSection {
    pub center: Point,
    #[serde(default = "default_placement")]
    pub placement: Placement,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Second center for the equal-weight two-bubble scan.
    #[serde(default)]
    pub second_center: Option<Point>,
}

fn default_placement() -> Placement {
    Placement::Boundary
}

fn default_lambdas() -> Vec<f64> {
    DEFAULT_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtSection {
    /// Boundary point carrying the bubble family.
    pub center: Point,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Coefficient of the Dirichlet term, `1/(8π)` by default.
    #[serde(default = "default_mt_alpha")]
    pub alpha: f64,
    /// Relative reduction of `alpha` for the sharpness check.
    #[serde(default = "default_reduction")]
    pub reduction: f64,
}

fn default_mt_alpha() -> f64 {
    1.0 / (8.0 * std::f64::consts::PI)
}

fn default_reduction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Field CSV to analyze; defaults to `solution_field.csv` in the output directory.
    pub field: Option<PathBuf>,
    /// Radius of the quantization ball.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub curvature: CurvaturePreset,
    #[serde(default)]
    pub rho: RhoConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub bubble: Option<BubbleSection>,
    #[serde(default)]
    pub mt: Option<MtSection>,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.to_spec().validate()?;
        self.curvature.validate()?;
        self.rho.validate()?;
        let s = &self.solver;
        if !(s.init_z.is_finite() && s.noise >= 0.0 && s.noise.is_finite()) {
            return Err(Error::Config("solver.init_z must be finite and solver.noise nonnegative".into()));
        }
        if s.path.nodes < 3 || s.path.samples_per_loop == 0 || !(s.path.lambda > 0.0) {
            return Err(Error::Config("solver.path needs nodes >= 3, samples_per_loop >= 1 and lambda > 0".into()));
        }
        let positive = |name: &str, v: &[f64]| {
            if v.is_empty() || v.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                Err(Error::Config(format!("{name} must be a nonempty list of positive scales")))
            } else {
                Ok(())
            }
        };
        if let Some(b) = &self.bubble {
            positive("bubble.lambdas", &b.lambdas)?;
        }
        if let Some(m) = &self.mt {
            positive("mt.lambdas", &m.lambdas)?;
            if !(m.alpha > 0.0 && m.reduction > 0.0 && m.reduction < 1.0) {
                return Err(Error::Config("mt.alpha must be positive and mt.reduction in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// Parses and validates TOML configuration text. Unknown keys are rejected;
/// messages carry the line and column of the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(message) => Error::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[domain]
kind = "cap"
theta = 2.0943951023931957
h = 0.1

[curvature]
preset = "const"
c = 1.0
"#;

    #[test]
    fn minimal_cap_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.rho, RhoConfig::Geometric);
        assert_eq!(c.solver, SolverSection::default());
        assert_eq!(c.seed, 0);
        assert_eq!(c.out, PathBuf::from("out"));
        assert!(c.bubble.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\n[solver.path]\nlamda = 16.0\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("lamda"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn affine_z_binds_to_z() {
        let text = r#"
[domain]
kind = "band"
theta1 = 0.7853981633974483
theta2 = 2.356194490192345
h = 0.1
[curvature]
preset = "affine-z"
a = 0.0
b = 1.0
"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.curvature, CurvaturePreset::AffineZ { a: 0.0, b: 1.0 });
        assert_eq!(c.curvature.value_at([0.6, 0.0, 0.8]), 0.8);
    }

    #[test]
    fn product_preset_multiplies() {
        let p = CurvaturePreset::Product { factors: vec![[1.0, 1.0], [0.0, 2.0]] };
        assert!((p.value_at([0.0, 0.6, 0.8]) - 1.8 * 1.6).abs() < 1e-15);
    }

    #[test]
    fn bad_grids_are_rejected() {
        for rho in ["mode = \"grid\"", "mode = \"grid\"\nvalues = [3.0, 2.0]", "mode = \"explicit\"\nvalue = -1.0"] {
            let text = format!("{MINIMAL}\n[rho]\n{rho}\n");
            assert!(matches!(parse_config(&text), Err(Error::Config(_))), "{rho}");
        }
        let text = format!("{MINIMAL}\n[rho]\nmode = \"grid\"\nfactors = [0.98, 1.0]\n");
        assert_eq!(parse_config(&text).unwrap().rho.resolve(10.0), vec![9.8, 10.0]);
    }

    #[test]
    fn invalid_domain_is_a_config_error() {
        let text = MINIMAL.replace("theta = 2.0943951023931957", "theta = 4.0");
        assert!(matches!(parse_config(&text), Err(Error::InvalidSpec(_))));
    }
}
