//! Strict `key = value` run configuration.
//!
//! Unknown keys are fatal (a silently ignored typo in a tolerance name would
//! invalidate a scaling study). Blank lines and `#` comments are allowed.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::field::GridSpec;
use crate::potential::TrapPotential;
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("{0}")]
    Invalid(String),
}

/// Single-coupling solve or a gap list for a sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum CouplingSpec {
    Single(f64),
    Gaps(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub grid: GridSpec<f64>,
    pub potential: TrapPotential<f64>,
    pub orbital_count: usize,
    pub coupling: CouplingSpec,
    pub solver: SolverConfig<f64>,
    pub output_dir: PathBuf,
}

const KNOWN_KEYS: &[&str] = &[
    "grid.L",
    "grid.n",
    "potential.kind",
    "potential.omega1",
    "potential.omega2",
    "potential.A",
    "potential.omega",
    "potential.center",
    "problem.N",
    "problem.a",
    "problem.gaps",
    "solver.max_outer",
    "solver.energy_tol",
    "solver.residual_tol",
    "solver.step0",
    "solver.backtrack",
    "solver.mixing",
    "solver.seed",
    "solver.rescale_radius",
    "solver.precondition",
    "solver.dealias",
    "output.dir",
];

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|(_, v)| v.as_str())
    }

    fn required(&self, key: &'static str) -> Result<&str, ConfigError> {
        self.get(key).ok_or(ConfigError::MissingKey(key))
    }

    fn parse_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>().map_err(|e| ConfigError::BadValue {
                    key: key.into(),
                    message: e.to_string(),
                })
            })
            .transpose()
    }

    fn parse_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>().map_err(|e| ConfigError::BadValue {
                    key: key.into(),
                    message: e.to_string(),
                })
            })
            .transpose()
    }

    fn parse_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(key)
            .map(|v| match v {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                other => Err(ConfigError::BadValue {
                    key: key.into(),
                    message: format!("expected true/false, got `{other}`"),
                }),
            })
            .transpose()
    }

    fn parse_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|p| {
                        p.trim().parse::<f64>().map_err(|e| ConfigError::BadValue {
                            key: key.into(),
                            message: e.to_string(),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn forbid(&self, key: &str, reason: &str) -> Result<(), ConfigError> {
        if self.0.contains_key(key) {
            return Err(ConfigError::BadValue {
                key: key.into(),
                message: reason.into(),
            });
        }
        Ok(())
    }
}

fn scan(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: raw.trim().to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { line, key });
        }
        if map.contains_key(&key) {
            return Err(ConfigError::DuplicateKey { line, key });
        }
        map.insert(key, (line, value));
    }
    Ok(Entries(map))
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = scan(text)?;

    let half_length: f64 = e
        .required("grid.L")?
        .parse()
        .map_err(|err| ConfigError::BadValue {
            key: "grid.L".into(),
            message: format!("{err}"),
        })?;
    let n = e
        .parse_usize("grid.n")?
        .ok_or(ConfigError::MissingKey("grid.n"))?;
    let grid = GridSpec::new(half_length, n)
        .map_err(|err| ConfigError::Invalid(err.to_string()))?;

    let potential = match e.required("potential.kind")? {
        "zero" => {
            for key in ["potential.omega1", "potential.omega2", "potential.A", "potential.omega", "potential.center"] {
                e.forbid(key, "not valid for kind = zero")?;
            }
            TrapPotential::Zero
        }
        "harmonic" => {
            for key in ["potential.omega1", "potential.omega2", "potential.A"] {
                e.forbid(key, "not valid for kind = harmonic")?;
            }
            let omega = e
                .parse_f64_list("potential.omega")?
                .ok_or(ConfigError::MissingKey("potential.omega"))?;
            if omega.len() != 3 {
                return Err(ConfigError::BadValue {
                    key: "potential.omega".into(),
                    message: "expected three comma-separated values".into(),
                });
            }
            let center = e.parse_f64_list("potential.center")?.unwrap_or(vec![0.0; 3]);
            if center.len() != 3 {
                return Err(ConfigError::BadValue {
                    key: "potential.center".into(),
                    message: "expected three comma-separated values".into(),
                });
            }
            TrapPotential::harmonic(
                [omega[0], omega[1], omega[2]],
                [center[0], center[1], center[2]],
            )
            .map_err(|err| ConfigError::Invalid(err.to_string()))?
        }
        "ring" => {
            for key in ["potential.omega", "potential.center"] {
                e.forbid(key, "not valid for kind = ring")?;
            }
            let omega1 = e
                .parse_f64("potential.omega1")?
                .ok_or(ConfigError::MissingKey("potential.omega1"))?;
            let omega2 = e
                .parse_f64("potential.omega2")?
                .ok_or(ConfigError::MissingKey("potential.omega2"))?;
            let radius = e
                .parse_f64("potential.A")?
                .ok_or(ConfigError::MissingKey("potential.A"))?;
            let v = TrapPotential::ring(omega1, omega2, radius)
                .map_err(|err| ConfigError::Invalid(err.to_string()))?;
            v.check_fits(grid)
                .map_err(|err| ConfigError::Invalid(err.to_string()))?;
            v
        }
        other => {
            return Err(ConfigError::BadValue {
                key: "potential.kind".into(),
                message: format!("expected zero|harmonic|ring, got `{other}`"),
            })
        }
    };

    let orbital_count = e
        .parse_usize("problem.N")?
        .ok_or(ConfigError::MissingKey("problem.N"))?;
    if orbital_count == 0 {
        return Err(ConfigError::BadValue {
            key: "problem.N".into(),
            message: "must be >= 1".into(),
        });
    }

    let coupling = match (e.parse_f64("problem.a")?, e.parse_f64_list("problem.gaps")?) {
        (Some(a), None) => {
            if a < 0.0 {
                return Err(ConfigError::BadValue {
                    key: "problem.a".into(),
                    message: "coupling must be nonnegative".into(),
                });
            }
            CouplingSpec::Single(a)
        }
        (None, Some(gaps)) => {
            if gaps.is_empty() || gaps.iter().any(|&g| g <= 0.0) || gaps.windows(2).any(|w| w[1] >= w[0]) {
                return Err(ConfigError::BadValue {
                    key: "problem.gaps".into(),
                    message: "gaps must be positive and strictly decreasing".into(),
                });
            }
            CouplingSpec::Gaps(gaps)
        }
        (Some(_), Some(_)) => {
            return Err(ConfigError::Invalid(
                "problem.a and problem.gaps are mutually exclusive".into(),
            ))
        }
        (None, None) => return Err(ConfigError::MissingKey("problem.a (or problem.gaps)")),
    };

    let mut solver = SolverConfig::<f64>::default();
    if let Some(v) = e.parse_usize("solver.max_outer")? {
        solver.max_outer = v;
    }
    if let Some(v) = e.parse_f64("solver.energy_tol")? {
        solver.energy_tol = v;
    }
    if let Some(v) = e.parse_f64("solver.residual_tol")? {
        solver.residual_tol = v;
    }
    if let Some(v) = e.parse_f64("solver.step0")? {
        solver.step0 = v;
    }
    if let Some(v) = e.parse_f64("solver.backtrack")? {
        solver.backtrack = v;
    }
    if let Some(v) = e.parse_f64("solver.mixing")? {
        solver.mixing = v;
    }
    if let Some(v) = e.parse_usize("solver.seed")? {
        solver.seed = v as u64;
    }
    if let Some(v) = e.parse_f64("solver.rescale_radius")? {
        solver.rescale_radius = v;
    }
    if let Some(v) = e.parse_bool("solver.precondition")? {
        solver.precondition = v;
    }
    if let Some(v) = e.parse_bool("solver.dealias")? {
        solver.dealias = v;
    }
    solver
        .validate()
        .map_err(|err| ConfigError::Invalid(err.to_string()))?;

    let output_dir = PathBuf::from(e.get("output.dir").unwrap_or("out"));

    Ok(RunConfig {
        grid,
        potential,
        orbital_count,
        coupling,
        solver,
        output_dir,
    })
}
