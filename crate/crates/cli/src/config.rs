//! Experiment configuration: a sectioned TOML file, dotted-key overrides, and
//! the canonical hash that stamps every output for provenance.

use std::fmt;
use std::path::Path;

use fsp_core::constitutive::{DegeneracyProfile, ProfileKind, TailPolicy, ZetaSpec};
use fsp_core::degiorgi::Cutoff;
use fsp_core::solver::{BoundaryData, Geometry, InitialData, Scheme, SolverConfig};
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// Failure category a command can report; `main` turns these into the exit
/// codes 2 (config) and 3 (numerics).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl From<fsp_core::constitutive::ConstitutiveError> for CliError {
    fn from(err: fsp_core::constitutive::ConstitutiveError) -> Self {
        use fsp_core::constitutive::ConstitutiveError::*;
        match err {
            InvalidProfile(_) | InadmissibleLambda { .. } => CliError::Config(err.to_string()),
            _ => CliError::Numerical(err.to_string()),
        }
    }
}

impl From<fsp_core::solver::SolverError> for CliError {
    fn from(err: fsp_core::solver::SolverError) -> Self {
        use fsp_core::solver::SolverError::*;
        match err {
            BadConfig(_) | CflViolation { .. } => CliError::Config(err.to_string()),
            StepBlowup { .. } => CliError::Numerical(err.to_string()),
        }
    }
}

impl From<fsp_core::degiorgi::DeGiorgiError> for CliError {
    fn from(err: fsp_core::degiorgi::DeGiorgiError) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<fsp_core::estimates::EstimatesError> for CliError {
    fn from(err: fsp_core::estimates::EstimatesError) -> Self {
        use fsp_core::estimates::EstimatesError::*;
        match err {
            BadSample(_) => CliError::Numerical(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub profile: ProfileSection,
    pub geometry: GeometrySection,
    pub solver: SolverSection,
    #[serde(default)]
    pub data: DataSection,
    pub degiorgi: Option<DeGiorgiSection>,
    #[serde(default)]
    pub estimates: EstimatesSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    /// "power" | "exp-inverse" | "zeta-bounded"
    pub kind: String,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    /// Constant zeta exponent for the zeta-bounded kind.
    pub zeta: Option<f64>,
    #[serde(rename = "M", default = "default_m")]
    pub m: f64,
    /// "closed-form" | "additive-constant"
    #[serde(default)]
    pub tail: Option<String>,
    #[serde(default)]
    pub i_tail: f64,
}

fn default_m() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// "interval" | "radial"
    pub kind: String,
    #[serde(rename = "L")]
    pub l: f64,
    pub m: usize,
    #[serde(rename = "N")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub epsilon: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    /// "bundle" runs the constitutive medium, "calibration" plain diffusion.
    #[serde(default = "default_medium")]
    pub medium: String,
    pub diffusivity: Option<f64>,
}

fn default_scheme() -> String {
    "semi-implicit".into()
}

fn default_stride() -> usize {
    1
}

fn default_medium() -> String {
    "bundle".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "zero" | "bump" | "sine"
    #[serde(default = "default_g")]
    pub g: String,
    pub center: Option<f64>,
    pub radius: Option<f64>,
    pub height: Option<f64>,
    #[serde(default)]
    pub phi_max: f64,
    #[serde(default)]
    pub t_ramp: f64,
}

fn default_g() -> String {
    "zero".into()
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            g: default_g(),
            center: None,
            radius: None,
            height: None,
            phi_max: 0.0,
            t_ramp: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeGiorgiSection {
    pub b: Option<f64>,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Rprime")]
    pub r_prime: f64,
    pub tol: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    pub sobolev: Option<f64>,
}

fn default_n_max() -> u32 {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatesSection {
    pub samples: usize,
    pub seed: u64,
    pub theta_plateau: Option<f64>,
    pub theta_support: Option<f64>,
    /// Optional acceptance bound on the dissipation-identity residual.
    pub residual_bound: Option<f64>,
}

impl Default for EstimatesSection {
    fn default() -> Self {
        EstimatesSection {
            samples: 10_000,
            seed: 7,
            theta_plateau: None,
            theta_support: None,
            residual_bound: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { directory: "out".into(), formats: vec!["csv".into(), "json".into()] }
    }
}

/// Parsed configuration plus the canonical hash of the merged document.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: FileConfig,
    /// Hash over every section except `output`, so relocating results does
    /// not change identity.
    pub hash: String,
    /// The merged document echoed into the output directory.
    pub echo: String,
}

/// Loads `path`, applies `key=value` overrides (dotted TOML paths), and
/// points `output.directory` at `out_dir` when given.
pub fn load(
    path: &Path,
    overrides: &[String],
    out_dir: Option<&Path>,
) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for entry in overrides {
        apply_override(&mut doc, entry)?;
    }
    if let Some(dir) = out_dir {
        let output = doc
            .entry("output")
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match output {
            toml::Value::Table(table) => {
                table.insert("directory".into(), toml::Value::String(dir.display().to_string()));
            }
            _ => return Err(CliError::Config("output section must be a table".into())),
        }
    }

    let hash = canonical_hash(&doc);
    let echo = toml::to_string(&doc)
        .map_err(|e| CliError::Config(format!("cannot re-serialize config: {e}")))?;
    let cfg: FileConfig = doc
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {e}", path.display())))?;
    validate(&cfg)?;
    Ok(Experiment { cfg, hash, echo })
}

fn apply_override(doc: &mut toml::Table, entry: &str) -> Result<(), CliError> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{entry}` is not KEY=VALUE")))?;
    let value = parse_value(raw.trim());
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override key `{path}` has an empty segment")));
    }
    let mut table = doc;
    for key in &keys[..keys.len() - 1] {
        let slot = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match slot {
            toml::Value::Table(t) => t,
            _ => {
                return Err(CliError::Config(format!(
                    "override key `{path}`: `{key}` is not a section"
                )))
            }
        };
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Interprets the right-hand side as a TOML literal, falling back to a bare
/// string so unquoted words like `bump` work.
fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed probe table has the probed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Hash of the merged document with the `output` section dropped.
pub fn canonical_hash(doc: &toml::Table) -> String {
    let mut scientific = doc.clone();
    scientific.remove("output");
    let text = toml::to_string(&scientific).unwrap_or_default();
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

fn validate(cfg: &FileConfig) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::Config(msg));

    match cfg.profile.kind.as_str() {
        "power" => {
            if cfg.profile.p.is_none() {
                return bad("profile kind `power` needs key `p`".into());
            }
        }
        "exp-inverse" => {
            if cfg.profile.gamma.is_none() {
                return bad("profile kind `exp-inverse` needs key `gamma`".into());
            }
        }
        "zeta-bounded" => {
            if cfg.profile.zeta.is_none() {
                return bad("profile kind `zeta-bounded` needs key `zeta`".into());
            }
        }
        other => return bad(format!("unknown profile kind `{other}`")),
    }
    if let Some(tail) = &cfg.profile.tail {
        if tail != "closed-form" && tail != "additive-constant" {
            return bad(format!("unknown tail policy `{tail}`"));
        }
    }

    match cfg.geometry.kind.as_str() {
        "interval" => {
            if cfg.geometry.n.is_some() {
                return bad("geometry key N applies to radial geometry only".into());
            }
        }
        "radial" => {
            if cfg.geometry.n.is_none() {
                return bad("radial geometry needs the dimension key N".into());
            }
        }
        other => return bad(format!("unknown geometry kind `{other}`")),
    }

    match (&cfg.solver.epsilon, &cfg.solver.eps_list) {
        (Some(_), Some(_)) => return bad("give either solver.epsilon or solver.eps_list".into()),
        (None, None) => return bad("one of solver.epsilon or solver.eps_list is required".into()),
        (None, Some(list)) if list.is_empty() => {
            return bad("solver.eps_list must not be empty".into())
        }
        _ => {}
    }
    for &eps in cfg.epsilons() {
        if !(eps > 0.0 && eps.is_finite()) {
            return bad(format!("epsilon {eps} must be positive"));
        }
    }
    match cfg.solver.scheme.as_str() {
        "semi-implicit" | "explicit" => {}
        other => return bad(format!("unknown scheme `{other}`")),
    }
    match cfg.solver.medium.as_str() {
        "bundle" => {}
        "calibration" => {
            if cfg.solver.diffusivity.is_none() {
                return bad("calibration medium needs solver.diffusivity".into());
            }
        }
        other => return bad(format!("unknown medium `{other}`")),
    }

    match cfg.data.g.as_str() {
        "zero" => {}
        "bump" => {
            if cfg.data.center.is_none() || cfg.data.radius.is_none() || cfg.data.height.is_none()
            {
                return bad("bump data needs center, radius, and height".into());
            }
        }
        "sine" => {
            if cfg.data.height.is_none() {
                return bad("sine data needs height".into());
            }
        }
        other => return bad(format!("unknown initial data `{other}`")),
    }

    if let Some(dg) = &cfg.degiorgi {
        if !(dg.r_prime > 0.0 && dg.r_prime < dg.r) {
            return bad(format!("need 0 < Rprime < R, got Rprime = {} R = {}", dg.r_prime, dg.r));
        }
        let derived = derived_b(dg.r, dg.r_prime);
        if let Some(b) = dg.b {
            if (b - derived).abs() > 1e-9 * derived {
                return bad(format!(
                    "degiorgi.b = {b} contradicts the radii: R = {} and Rprime = {} imply b = {derived}",
                    dg.r, dg.r_prime
                ));
            }
        }
        match cfg.data.g.as_str() {
            "zero" => {}
            "bump" => {
                let center = cfg.data.center.unwrap_or(0.0);
                let radius = cfg.data.radius.unwrap_or(0.0);
                let clearance = (center - dg.x0).abs() - radius;
                if clearance <= 0.0 {
                    return bad(format!(
                        "x0 = {} lies inside the bump support [{}, {}]",
                        dg.x0,
                        center - radius,
                        center + radius
                    ));
                }
                if dg.r > clearance {
                    return bad(format!(
                        "ladder radius R = {} exceeds the data-free radius {clearance} around x0",
                        dg.r
                    ));
                }
            }
            // sine data is positive throughout the open domain
            _ => return bad("localization needs data vanishing around x0; sine has no interior zero set".into()),
        }
    }

    if let (Some(p), Some(s)) = (cfg.estimates.theta_plateau, cfg.estimates.theta_support) {
        if !(p > 0.0 && p < s) {
            return bad(format!("need 0 < theta_plateau < theta_support, got {p} and {s}"));
        }
    }

    if cfg.output.formats.is_empty() {
        return bad("output.formats must list at least one of \"csv\", \"json\"".into());
    }
    for fmt in &cfg.output.formats {
        if fmt != "csv" && fmt != "json" {
            return bad(format!("unknown output format {fmt:?}; expected \"csv\" or \"json\""));
        }
    }
    Ok(())
}

/// Ladder base determined by the outer and limit radii.
pub fn derived_b(r: f64, r_prime: f64) -> f64 {
    let q = r_prime / r;
    (2.0 - q) / (1.0 - q)
}

impl FileConfig {
    pub fn epsilons(&self) -> &[f64] {
        match (&self.solver.epsilon, &self.solver.eps_list) {
            (Some(eps), _) => std::slice::from_ref(eps),
            (None, Some(list)) => list,
            (None, None) => &[],
        }
    }

    pub fn profile(&self) -> Result<DegeneracyProfile, CliError> {
        let kind = match self.profile.kind.as_str() {
            "power" => ProfileKind::Power { p: self.profile.p.expect("validated") },
            "exp-inverse" => ProfileKind::ExpInverse { gamma: self.profile.gamma.expect("validated") },
            "zeta-bounded" => {
                ProfileKind::ZetaBounded { zeta: ZetaSpec::Const(self.profile.zeta.expect("validated")) }
            }
            _ => unreachable!("kind validated at load"),
        };
        let tail = match self.profile.tail.as_deref() {
            Some("closed-form") => TailPolicy::ClosedForm,
            Some("additive-constant") => TailPolicy::AdditiveConstant { i_tail: self.profile.i_tail },
            Some(_) => unreachable!("tail validated at load"),
            // the analytic tail where it exists, a plain truncation otherwise
            None => match kind {
                ProfileKind::Power { .. } => TailPolicy::ClosedForm,
                _ => TailPolicy::AdditiveConstant { i_tail: self.profile.i_tail },
            },
        };
        DegeneracyProfile::new(kind, self.profile.m, tail).map_err(CliError::from)
    }

    pub fn geometry(&self) -> Geometry {
        match self.geometry.kind.as_str() {
            "interval" => Geometry::Interval { length: self.geometry.l },
            _ => Geometry::Radial { dim: self.geometry.n.expect("validated"), length: self.geometry.l },
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self.solver.scheme.as_str() {
            "explicit" => Scheme::Explicit,
            _ => Scheme::SemiImplicit,
        }
    }

    pub fn solver_config(&self, epsilon: f64) -> SolverConfig {
        SolverConfig {
            epsilon,
            scheme: self.scheme(),
            dt: self.solver.dt,
            t_final: self.solver.t,
            snapshot_stride: self.solver.snapshot_stride,
        }
    }

    pub fn initial_data(&self) -> InitialData {
        match self.data.g.as_str() {
            "bump" => InitialData::Bump {
                center: self.data.center.expect("validated"),
                radius: self.data.radius.expect("validated"),
                height: self.data.height.expect("validated"),
            },
            "sine" => InitialData::Sine { height: self.data.height.expect("validated") },
            _ => InitialData::Zero,
        }
    }

    pub fn boundary_data(&self) -> BoundaryData {
        if self.data.phi_max > 0.0 {
            BoundaryData::Ramp { max: self.data.phi_max, ramp_time: self.data.t_ramp }
        } else {
            BoundaryData::Zero
        }
    }

    /// Weight used by the energy-norm audit: the configured window, or the
    /// rung-0 ladder cutoff, or half the domain.
    pub fn estimate_cutoff(&self) -> Cutoff {
        let support = self
            .estimates
            .theta_support
            .or(self.degiorgi.as_ref().map(|d| d.r))
            .unwrap_or(self.geometry.l / 2.0);
        let plateau = self.estimates.theta_plateau.unwrap_or(support / 2.0);
        Cutoff { plateau, support, ramp: support - plateau }
    }
}
