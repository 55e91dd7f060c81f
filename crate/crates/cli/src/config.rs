//! Flat `key = value` configuration with validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use rotgpe_core::groundstate::SeedProfile;
use rotgpe_core::{QuadratureDegree, Scheme, SolverKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: expected `key = value`, got `{text}`")]
    Syntax { origin: Origin, text: String },
    #[error("{origin}: key `{key}` given twice")]
    Duplicate { origin: Origin, key: String },
    #[error("{origin}: invalid value for `{key}`: {reason}")]
    Invalid { origin: Origin, key: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => f.write_str("--set"),
            Origin::Default => f.write_str("default"),
        }
    }
}

/// `(key, default, description)`; `None` marks a required key.
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("x_min", None, "domain lower x bound"),
    ("x_max", None, "domain upper x bound"),
    ("y_min", None, "domain lower y bound"),
    ("y_max", None, "domain upper y bound"),
    ("nx", None, "cells in x"),
    ("ny", None, "cells in y"),
    ("tau", None, "time step"),
    ("T", None, "final time"),
    ("model", Some("gpe_rotating"), "coefficient preset; only gpe_rotating"),
    ("omega", Some("0"), "rotation speed"),
    ("beta", Some("0"), "interaction strength"),
    ("gamma_x", Some("1"), "trap frequency in x"),
    ("gamma_y", Some("1"), "trap frequency in y"),
    ("kappa_re", Some("0"), "constant real part of kappa"),
    ("kappa_im", Some("0"), "constant imaginary part of kappa"),
    ("scheme", Some("irk"), "irk | be | irk_regularized"),
    ("M", Some("0"), "cutoff of the regularized scheme (0 = estimate from u0)"),
    ("newton_tol", Some("1e-8"), "Newton residual tolerance"),
    ("newton_max_iter", Some("50"), "Newton iteration cap"),
    ("record_every", Some("1"), "diagnostics and snapshot cadence in steps"),
    ("predictor", Some("false"), "extrapolated Newton start"),
    ("solver", Some("direct"), "direct | bicgstab"),
    ("quadrature", Some("4"), "quadrature exactness degree, 4 or 6"),
    ("initial", Some("groundstate"), "groundstate | gaussian | vortex | <path to field csv>"),
    ("gs_omega", Some("same"), "rotation of the ground-state operator (same = omega)"),
    ("gs_beta", Some("same"), "interaction of the ground-state operator (same = beta)"),
    ("gs_gamma_x", Some("1"), "trap frequency in x of the ground-state operator"),
    ("gs_gamma_y", Some("1"), "trap frequency in y of the ground-state operator"),
    ("tau_flow", Some("0.05"), "gradient-flow step"),
    ("flow_tol", Some("1e-8"), "gradient-flow stationarity tolerance"),
    ("flow_max_steps", Some("200000"), "gradient-flow step cap"),
    ("flow_energy_tol", Some("none"), "stop the flow once the energy drops by at most this over 100 steps"),
    ("flow_seed", Some("auto"), "auto | gaussian | vortex | mix"),
    ("seed", Some("1592598564"), "sampling seed of verify-fm"),
    ("out", Some("out"), "output directory"),
];

/// Keys every problem definition needs; `run` also needs `tau` and `T`.
pub const PROBLEM_KEYS: &[&str] = &["x_min", "x_max", "y_min", "y_max", "nx", "ny"];

/// Raw key–value pairs with their origin.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Origin)>,
}

impl RawConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (k, line) in text.lines().enumerate() {
            let origin = Origin::Line(k + 1);
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { origin, text: content.into() });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { origin, text: content.into() });
            }
            check_known(key, &origin)?;
            if raw.entries.contains_key(key) {
                return Err(ConfigError::Duplicate { origin, key: key.into() });
            }
            raw.entries.insert(key.into(), (value.into(), origin));
        }
        Ok(raw)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(ConfigError::Syntax {
                origin: Origin::Override,
                text: assignment.into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        check_known(key, &Origin::Override)?;
        self.entries.insert(key.into(), (value.into(), Origin::Override));
        Ok(())
    }

    fn get(&self, key: &str) -> Option<(&str, Origin)> {
        if let Some((v, o)) = self.entries.get(key) {
            return Some((v.as_str(), o.clone()));
        }
        KEYS.iter()
            .find(|(k, _, _)| *k == key)
            .and_then(|(_, d, _)| d.map(|d| (d, Origin::Default)))
    }
}

fn check_known(key: &str, origin: &Origin) -> Result<(), ConfigError> {
    if KEYS.iter().any(|(k, _, _)| *k == key) {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey {
            origin: origin.clone(),
            key: key.into(),
        })
    }
}

/// How `run` obtains its initial field.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    GroundState,
    Gaussian,
    Vortex,
    File(PathBuf),
}

/// Fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub tau: Option<f64>,
    pub t_final: Option<f64>,
    pub omega: f64,
    pub beta: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub kappa_re: f64,
    pub kappa_im: f64,
    pub scheme: Scheme,
    /// Zero requests the measured surrogate.
    pub m: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub record_every: usize,
    pub predictor: bool,
    pub solver: SolverKind,
    pub quadrature: QuadratureDegree,
    pub initial: InitialCondition,
    pub gs_omega: f64,
    pub gs_beta: f64,
    pub gs_gamma_x: f64,
    pub gs_gamma_y: f64,
    pub tau_flow: f64,
    pub flow_tol: f64,
    pub flow_max_steps: usize,
    pub flow_seed: Option<SeedProfile>,
    pub flow_energy_tol: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    /// Resolved `key = value` lines in key order, for the manifest.
    pub resolved: Vec<(String, String)>,
}

struct Reader<'a> {
    raw: &'a RawConfig,
    required: &'a [&'a str],
    resolved: Vec<(String, String)>,
}

impl Reader<'_> {
    fn text(&mut self, key: &str) -> Result<Option<(String, Origin)>, ConfigError> {
        match self.raw.get(key) {
            Some((v, o)) => {
                self.resolved.push((key.into(), v.into()));
                Ok(Some((v.into(), o)))
            }
            None if self.required.contains(&key) => Err(ConfigError::Missing(key.into())),
            None => Ok(None),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<(T, Origin)>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.text(key)? {
            Some((v, origin)) => v.parse::<T>().map(|x| Some((x, origin.clone()))).map_err(|e| ConfigError::Invalid {
                origin,
                key: key.into(),
                reason: format!("`{v}`: {e}"),
            }),
            None => Ok(None),
        }
    }

    fn number(&mut self, key: &str, check: impl Fn(f64) -> Option<&'static str>) -> Result<Option<f64>, ConfigError> {
        match self.parsed::<f64>(key)? {
            Some((v, origin)) => {
                if !v.is_finite() {
                    return Err(invalid(origin, key, "must be finite"));
                }
                if let Some(reason) = check(v) {
                    return Err(invalid(origin, key, reason));
                }
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    fn count(&mut self, key: &str, min: usize) -> Result<Option<usize>, ConfigError> {
        match self.parsed::<usize>(key)? {
            Some((v, origin)) if v < min => Err(invalid(origin, key, &format!("must be at least {min}"))),
            Some((v, _)) => Ok(Some(v)),
            None => Ok(None),
        }
    }
}

fn invalid(origin: Origin, key: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid {
        origin,
        key: key.into(),
        reason: reason.into(),
    }
}

fn positive(v: f64) -> Option<&'static str> {
    (v <= 0.0).then_some("must be > 0")
}

fn non_negative(v: f64) -> Option<&'static str> {
    (v < 0.0).then_some("must be >= 0")
}

fn any(_: f64) -> Option<&'static str> {
    None
}

impl RunConfig {
    /// Validates `raw`; `required` lists keys without usable defaults for
    /// the current subcommand (beyond [`PROBLEM_KEYS`]).
    pub fn from_raw(raw: &RawConfig, extra_required: &[&str]) -> Result<Self, ConfigError> {
        let required: Vec<&str> = PROBLEM_KEYS.iter().chain(extra_required).copied().collect();
        let mut r = Reader {
            raw,
            required: &required,
            resolved: Vec::new(),
        };
        let x_min = r.number("x_min", any)?.expect("required");
        let x_max = r.number("x_max", any)?.expect("required");
        let y_min = r.number("y_min", any)?.expect("required");
        let y_max = r.number("y_max", any)?.expect("required");
        if x_max <= x_min {
            return Err(invalid(raw.get("x_max").expect("present").1, "x_max", "must exceed x_min"));
        }
        if y_max <= y_min {
            return Err(invalid(raw.get("y_max").expect("present").1, "y_max", "must exceed y_min"));
        }
        let nx = r.count("nx", 1)?.expect("required");
        let ny = r.count("ny", 1)?.expect("required");
        let tau = r.number("tau", positive)?;
        let t_final = r.number("T", non_negative)?;
        let (model, model_origin) = r.text("model")?.expect("default");
        if model != "gpe_rotating" {
            return Err(invalid(model_origin, "model", &format!("unknown model `{model}`")));
        }
        let omega = r.number("omega", any)?.expect("default");
        let beta = r.number("beta", non_negative)?.expect("default");
        let gamma_x = r.number("gamma_x", any)?.expect("default");
        let gamma_y = r.number("gamma_y", any)?.expect("default");
        let kappa_re = r.number("kappa_re", any)?.expect("default");
        let kappa_im = r.number("kappa_im", any)?.expect("default");
        let m = r.number("M", non_negative)?.expect("default");
        let (scheme_name, scheme_origin) = r.text("scheme")?.expect("default");
        let scheme = match scheme_name.as_str() {
            "irk" => Scheme::Irk,
            "be" => Scheme::BackwardEuler,
            "irk_regularized" => Scheme::IrkRegularized { m },
            other => return Err(invalid(scheme_origin, "scheme", &format!("unknown scheme `{other}`"))),
        };
        let newton_tol = r.number("newton_tol", positive)?.expect("default");
        let newton_max_iter = r.count("newton_max_iter", 1)?.expect("default");
        let record_every = r.count("record_every", 1)?.expect("default");
        let predictor = r.parsed::<bool>("predictor")?.expect("default").0;
        let (solver_name, solver_origin) = r.text("solver")?.expect("default");
        let solver = match solver_name.as_str() {
            "direct" => SolverKind::Direct,
            "bicgstab" => SolverKind::BiCgStab {
                rel_tol: 1e-12,
                max_iter: 5000,
            },
            other => return Err(invalid(solver_origin, "solver", &format!("unknown solver `{other}`"))),
        };
        let (q, q_origin) = r.parsed::<usize>("quadrature")?.expect("default");
        let quadrature = QuadratureDegree::from_degree(q).ok_or_else(|| invalid(q_origin, "quadrature", "must be 4 or 6"))?;
        let initial = match r.text("initial")?.expect("default").0.as_str() {
            "groundstate" => InitialCondition::GroundState,
            "gaussian" => InitialCondition::Gaussian,
            "vortex" => InitialCondition::Vortex,
            path => InitialCondition::File(PathBuf::from(path)),
        };
        let same_or = |r: &mut Reader, key: &str, fallback: f64, check: fn(f64) -> Option<&'static str>| -> Result<f64, ConfigError> {
            let (v, origin) = r.text(key)?.expect("default");
            if v == "same" {
                return Ok(fallback);
            }
            let x = v
                .parse::<f64>()
                .map_err(|e| invalid(origin.clone(), key, &format!("`{v}`: {e}")))?;
            if let Some(reason) = check(x) {
                return Err(invalid(origin, key, reason));
            }
            Ok(x)
        };
        let gs_omega = same_or(&mut r, "gs_omega", omega, any)?;
        let gs_beta = same_or(&mut r, "gs_beta", beta, non_negative)?;
        let gs_gamma_x = r.number("gs_gamma_x", any)?.expect("default");
        let gs_gamma_y = r.number("gs_gamma_y", any)?.expect("default");
        let tau_flow = r.number("tau_flow", positive)?.expect("default");
        let flow_tol = r.number("flow_tol", positive)?.expect("default");
        let flow_max_steps = r.count("flow_max_steps", 1)?.expect("default");
        let (fs, fs_origin) = r.text("flow_seed")?.expect("default");
        let flow_seed = match fs.as_str() {
            "auto" => None,
            "gaussian" => Some(SeedProfile::Gaussian),
            "vortex" => Some(SeedProfile::Vortex { charge: 1 }),
            "mix" => Some(SeedProfile::RotatingMix { omega: gs_omega }),
            other => return Err(invalid(fs_origin, "flow_seed", &format!("unknown seed profile `{other}`"))),
        };
        let (fe, fe_origin) = r.text("flow_energy_tol")?.expect("default");
        let flow_energy_tol = match fe.as_str() {
            "none" => None,
            v => match v.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Some(x),
                _ => return Err(invalid(fe_origin, "flow_energy_tol", "must be `none` or a value > 0")),
            },
        };
        let seed = r.parsed::<u64>("seed")?.expect("default").0;
        let out = PathBuf::from(r.text("out")?.expect("default").0);
        let mut resolved = r.resolved;
        resolved.sort();
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
            tau,
            t_final,
            omega,
            beta,
            gamma_x,
            gamma_y,
            kappa_re,
            kappa_im,
            scheme,
            m,
            newton_tol,
            newton_max_iter,
            record_every,
            predictor,
            solver,
            quadrature,
            initial,
            gs_omega,
            gs_beta,
            gs_gamma_x,
            gs_gamma_y,
            tau_flow,
            flow_tol,
            flow_max_steps,
            flow_seed,
            flow_energy_tol,
            seed,
            out,
            resolved,
        })
    }

    /// Seed profile for the ground-state flow; `auto` picks the symmetry
    /// breaking mix when the operator rotates.
    pub fn seed_profile(&self) -> SeedProfile {
        self.flow_seed.unwrap_or(if self.gs_omega != 0.0 {
            SeedProfile::RotatingMix { omega: self.gs_omega }
        } else {
            SeedProfile::Gaussian
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "x_min = -6\nx_max = 6\ny_min = -6\ny_max = 6\nnx = 8\nny = 8\ntau = 0.1\nT = 1\n";

    #[test]
    fn minimal_file() {
        let raw = RawConfig::parse_str(MINIMAL).unwrap();
        let cfg = RunConfig::from_raw(&raw, &["tau", "T"]).unwrap();
        assert_eq!(cfg.nx, 8);
        assert_eq!(cfg.tau, Some(0.1));
        assert_eq!(cfg.scheme, Scheme::Irk);
        assert_eq!(cfg.newton_tol, 1e-8);
        assert_eq!(cfg.resolved.len(), KEYS.len());
    }

    #[test]
    fn negative_tau_names_key() {
        let raw = RawConfig::parse_str(&MINIMAL.replace("tau = 0.1", "tau = -0.1")).unwrap();
        let err = RunConfig::from_raw(&raw, &["tau", "T"]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`tau`") && msg.contains("line 7"), "{msg}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RawConfig::parse_str("x_min = 0\nomegaa = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { origin: Origin::Line(2), .. }));
    }

    #[test]
    fn missing_key() {
        let raw = RawConfig::parse_str(&MINIMAL.replace("ny = 8\n", "")).unwrap();
        assert!(matches!(RunConfig::from_raw(&raw, &[]), Err(ConfigError::Missing(k)) if k == "ny"));
    }

    #[test]
    fn rotating_preset_and_overrides() {
        let text = format!("{MINIMAL}omega = 0.8\nbeta = 100\ngamma_x = 0.9\ngamma_y = 1.1 # anisotropic\n");
        let mut raw = RawConfig::parse_str(&text).unwrap();
        raw.set("scheme=be").unwrap();
        assert!(raw.set("bogus=1").is_err());
        let cfg = RunConfig::from_raw(&raw, &[]).unwrap();
        assert_eq!((cfg.omega, cfg.beta, cfg.gamma_x, cfg.gamma_y), (0.8, 100.0, 0.9, 1.1));
        assert_eq!(cfg.scheme, Scheme::BackwardEuler);
        assert_eq!(cfg.gs_omega, 0.8);
        assert_eq!(cfg.seed_profile(), SeedProfile::RotatingMix { omega: 0.8 });
    }

    #[test]
    fn syntax_and_duplicates() {
        assert!(matches!(RawConfig::parse_str("nx 8"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(RawConfig::parse_str("nx = 8\nnx = 9"), Err(ConfigError::Duplicate { .. })));
        let raw = RawConfig::parse_str(&MINIMAL.replace("nx = 8", "nx = eight")).unwrap();
        assert!(matches!(RunConfig::from_raw(&raw, &[]), Err(ConfigError::Invalid { .. })));
    }
}
