//! Flat `key = value` experiment files.
//!
//! ```text
//! # comments start with '#'
//! variant = plain            # or normalized
//! iters = 100000
//! lambda = 0.1
//! agent = 2, -10, 7          # p_i (d values), lower_i, upper_i
//! edge = 1, 2, 1             # 1-indexed nodes, weight
//! alpha.family = power       # power | constant | table
//! alpha.a = 3
//! alpha.b = 1
//! alpha.p = 1
//! eps.const = 0.5            # shorthand for eps.family = constant
//! norm.c = 0.1
//! norm.rounds = 3
//! x0 = 1, 0, 5, -1
//! ```
//!
//! `agent` and `edge` repeat; every other key may appear once. `problem`
//! names the oracle family (`lasso` by default); further families can be
//! registered in an [`OracleRegistry`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::blocks::Blocks;
use crate::dynamics::{NormalizationConfig, Schedule, Variant};
use crate::graph::{CommGraph, GraphError};
use crate::problem::{Agent, EpsSubgradientOracle, Interval, Lasso, ProblemError, ProblemInstance};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("key `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(key: &str, msg: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            key: key.to_owned(),
            msg: msg.to_string(),
        }
    }
}

/// A violated standing assumption: 1 is the nonempty feasible set, 2 is
/// graph connectivity.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("Assumption {number} violated: {message}")]
pub struct AssumptionViolation {
    pub number: u8,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Assumption(#[from] AssumptionViolation),
}

/// One `agent = ...` line.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub target: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub family: String,
    pub lambda: f64,
    pub dim: usize,
    pub agents: Vec<AgentSpec>,
}

/// Parsed experiment file, before any assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub iters: usize,
    pub problem: ProblemSpec,
    /// 1-indexed `(i, j, weight)` triples as written.
    pub edges: Vec<(usize, usize, f64)>,
    pub alpha: Schedule,
    pub eps: Schedule,
    pub norm_floor: Option<f64>,
    pub norm_rounds: Option<usize>,
    pub x0: Vec<f64>,
    pub v0: Option<Vec<f64>>,
    /// Accepted for forward compatibility; the iterations are deterministic.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

type OracleFactory =
    Box<dyn Fn(&AgentSpec, f64) -> Result<Arc<dyn EpsSubgradientOracle>, String> + Send + Sync>;

/// Named oracle families available to `problem = <name>`.
pub struct OracleRegistry {
    factories: HashMap<String, OracleFactory>,
}

impl fmt::Debug for OracleRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.factories.keys().collect();
        names.sort();
        f.debug_struct("OracleRegistry")
            .field("families", &names)
            .finish()
    }
}

impl Default for OracleRegistry {
    fn default() -> Self {
        let mut reg = OracleRegistry {
            factories: HashMap::new(),
        };
        reg.register("lasso", |spec, lambda| {
            Lasso::new(spec.target.clone(), lambda)
                .map(|l| Arc::new(l) as Arc<dyn EpsSubgradientOracle>)
                .map_err(|e| e.to_string())
        });
        reg.register("quadratic", |spec, _| {
            Lasso::new(spec.target.clone(), 0.0)
                .map(|l| Arc::new(l) as Arc<dyn EpsSubgradientOracle>)
                .map_err(|e| e.to_string())
        });
        reg
    }
}

impl OracleRegistry {
    /// Registers a family; the factory receives the agent line and `lambda`.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&AgentSpec, f64) -> Result<Arc<dyn EpsSubgradientOracle>, String>
            + Send
            + Sync
            + 'static,
    {
        self.factories.insert(name.to_owned(), Box::new(factory));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }
}

/// Config after construction and assumption checks.
#[derive(Debug, Clone)]
pub struct BuiltExperiment {
    pub graph: CommGraph,
    pub problem: ProblemInstance,
    pub x0: Blocks,
    pub v0: Option<Blocks>,
    pub normalization: Option<NormalizationConfig>,
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, ConfigError> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| ConfigError::invalid(key, format!("`{}` is not a number", raw.trim())))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>, ConfigError> {
    raw.split(',').map(|item| parse_f64(key, item)).collect()
}

fn parse_usize(key: &str, raw: &str) -> Result<usize, ConfigError> {
    raw.trim().parse::<usize>().map_err(|_| {
        ConfigError::invalid(
            key,
            format!("`{}` is not a nonnegative integer", raw.trim()),
        )
    })
}

const KNOWN_KEYS: &[&str] = &[
    "variant",
    "iters",
    "dim",
    "problem",
    "lambda",
    "alpha.family",
    "alpha.a",
    "alpha.b",
    "alpha.p",
    "alpha.values",
    "eps.family",
    "eps.a",
    "eps.b",
    "eps.p",
    "eps.values",
    "eps.const",
    "norm.c",
    "norm.rounds",
    "x0",
    "v0",
    "seed",
    "out",
];

fn schedule(keys: &BTreeMap<String, String>, prefix: &str) -> Result<Schedule, ConfigError> {
    let get = |name: &str| keys.get(&format!("{prefix}.{name}"));
    let num = |name: &str, default: Option<f64>| -> Result<f64, ConfigError> {
        match get(name) {
            Some(raw) => parse_f64(&format!("{prefix}.{name}"), raw),
            None => default.ok_or_else(|| {
                ConfigError::invalid(&format!("{prefix}.{name}"), "required for this family")
            }),
        }
    };
    let family_key = format!("{prefix}.family");
    let family = match (get("family"), get("const")) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::invalid(
                &family_key,
                "conflicts with eps.const",
            ))
        }
        (None, Some(raw)) => {
            return Schedule::constant(parse_f64("eps.const", raw)?)
                .map_err(|e| ConfigError::invalid("eps.const", e))
        }
        (Some(f), None) => f.trim().to_owned(),
        (None, None) => {
            return Err(if prefix == "alpha" {
                ConfigError::Missing("alpha.family")
            } else {
                ConfigError::Missing("eps.family")
            })
        }
    };
    let built = match family.as_str() {
        "power" => Schedule::power(num("a", None)?, num("b", Some(0.0))?, num("p", Some(1.0))?),
        "constant" => Schedule::constant(num("a", None)?),
        "table" => {
            let raw = get("values").ok_or_else(|| {
                ConfigError::invalid(&format!("{prefix}.values"), "required for this family")
            })?;
            Schedule::table(parse_list(&format!("{prefix}.values"), raw)?)
        }
        other => {
            return Err(ConfigError::invalid(
                &family_key,
                format!("unknown family `{other}`"),
            ))
        }
    };
    built.map_err(|e| ConfigError::invalid(&family_key, e))
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut keys = BTreeMap::new();
        let mut agent_lines = Vec::new();
        let mut edge_lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                msg: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "agent" => agent_lines.push((line_no, value.to_owned())),
                "edge" => edge_lines.push((line_no, value.to_owned())),
                k if KNOWN_KEYS.contains(&k) => {
                    if keys.insert(k.to_owned(), value.to_owned()).is_some() {
                        return Err(ConfigError::Syntax {
                            line: line_no,
                            msg: format!("duplicate key `{k}`"),
                        });
                    }
                }
                other => {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
        }

        let variant = match keys.get("variant").map(|s| s.as_str()) {
            Some("plain") | None => Variant::Plain,
            Some("normalized") => Variant::Normalized,
            Some(other) => {
                return Err(ConfigError::invalid(
                    "variant",
                    format!("unknown variant `{other}`"),
                ))
            }
        };
        let iters = parse_usize(
            "iters",
            keys.get("iters").ok_or(ConfigError::Missing("iters"))?,
        )?;
        let dim = match keys.get("dim") {
            Some(raw) => parse_usize("dim", raw)?,
            None => 1,
        };
        if dim == 0 {
            return Err(ConfigError::invalid("dim", "must be positive"));
        }
        let lambda = match keys.get("lambda") {
            Some(raw) => parse_f64("lambda", raw)?,
            None => 0.0,
        };

        let agents = agent_lines
            .iter()
            .map(|(line, raw)| {
                let values = parse_list("agent", raw).map_err(|e| ConfigError::Syntax {
                    line: *line,
                    msg: e.to_string(),
                })?;
                if values.len() != dim + 2 {
                    return Err(ConfigError::Syntax {
                        line: *line,
                        msg: format!(
                            "agent needs {} values (p, lower, upper), got {}",
                            dim + 2,
                            values.len()
                        ),
                    });
                }
                Ok(AgentSpec {
                    target: values[..dim].to_vec(),
                    lower: values[dim],
                    upper: values[dim + 1],
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if agents.is_empty() {
            return Err(ConfigError::Missing("agent"));
        }

        let edges = edge_lines
            .iter()
            .map(|(line, raw)| {
                let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
                let syntax = |msg: String| ConfigError::Syntax { line: *line, msg };
                if parts.len() != 3 {
                    return Err(syntax("edge needs `i, j, weight`".into()));
                }
                let node = |s: &str| {
                    s.parse::<usize>()
                        .ok()
                        .filter(|&v| v >= 1)
                        .ok_or_else(|| syntax(format!("`{s}` is not a 1-indexed node id")))
                };
                let w = parse_f64("edge", parts[2]).map_err(|e| syntax(e.to_string()))?;
                Ok((node(parts[0])?, node(parts[1])?, w))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let x0 = parse_list("x0", keys.get("x0").ok_or(ConfigError::Missing("x0"))?)?;
        let v0 = keys
            .get("v0")
            .map(|raw| parse_list("v0", raw))
            .transpose()?;
        let seed = keys
            .get("seed")
            .map(|raw| {
                raw.parse::<u64>()
                    .map_err(|_| ConfigError::invalid("seed", "not an unsigned integer"))
            })
            .transpose()?;

        Ok(ExperimentConfig {
            variant,
            iters,
            problem: ProblemSpec {
                family: keys
                    .get("problem")
                    .cloned()
                    .unwrap_or_else(|| "lasso".to_owned()),
                lambda,
                dim,
                agents,
            },
            edges,
            alpha: schedule(&keys, "alpha")?,
            eps: schedule(&keys, "eps")?,
            norm_floor: keys
                .get("norm.c")
                .map(|raw| parse_f64("norm.c", raw))
                .transpose()?,
            norm_rounds: keys
                .get("norm.rounds")
                .map(|raw| parse_usize("norm.rounds", raw))
                .transpose()?,
            x0,
            v0,
            seed,
            out: keys.get("out").map(PathBuf::from),
        })
    }

    pub fn agent_count(&self) -> usize {
        self.problem.agents.len()
    }

    /// Whether two configs describe the same graph, problem and start.
    pub fn same_setup(&self, other: &ExperimentConfig) -> bool {
        self.problem == other.problem
            && self.edges == other.edges
            && self.x0 == other.x0
            && self.v0 == other.v0
    }

    /// The communication graph; disconnection is not an error here.
    pub fn graph(&self) -> Result<CommGraph, ConfigError> {
        let n = self.agent_count();
        let zero_based: Vec<_> = self
            .edges
            .iter()
            .map(|&(i, j, w)| (i - 1, j - 1, w))
            .collect();
        CommGraph::from_edges(n, &zero_based).map_err(|e| match e {
            GraphError::NodeOutOfRange { i, j, n } => ConfigError::invalid(
                "edge",
                format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    i + 1,
                    j + 1
                ),
            ),
            other => ConfigError::invalid("edge", other),
        })
    }

    /// The per-agent intervals, validated individually.
    pub fn intervals(&self) -> Result<Vec<Interval>, ConfigError> {
        self.problem
            .agents
            .iter()
            .map(|a| Interval::new(a.lower, a.upper).map_err(|e| ConfigError::invalid("agent", e)))
            .collect()
    }

    /// Builds the experiment and checks connectivity and a nonempty
    /// feasible set.
    pub fn build(&self, registry: &OracleRegistry) -> Result<BuiltExperiment, BuildError> {
        let n = self.agent_count();
        let dim = self.problem.dim;
        let graph = self.graph()?;
        if !graph.is_connected() {
            return Err(AssumptionViolation {
                number: 2,
                message: "communication graph is not connected".into(),
            }
            .into());
        }
        let factory = registry
            .factories
            .get(&self.problem.family)
            .ok_or_else(|| {
                ConfigError::invalid(
                    "problem",
                    format!("unknown family `{}`", self.problem.family),
                )
            })?;
        let sets = self.intervals()?;
        let agents = self
            .problem
            .agents
            .iter()
            .zip(&sets)
            .map(|(spec, set)| {
                Ok(Agent {
                    oracle: factory(spec, self.problem.lambda)
                        .map_err(|msg| ConfigError::invalid("problem", msg))?,
                    set: Arc::new(*set),
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let problem = ProblemInstance::new(agents, dim).map_err(|e| -> BuildError {
            match e {
                ProblemError::EmptyIntersection { lower, upper } => AssumptionViolation {
                    number: 1,
                    message: format!("constraint sets have empty intersection (max lower {lower} > min upper {upper})"),
                }
                .into(),
                other => ConfigError::invalid("agent", other).into(),
            }
        })?;

        let x0 =
            Blocks::from_vec(n, dim, self.x0.clone()).map_err(|e| ConfigError::invalid("x0", e))?;
        let v0 = self
            .v0
            .clone()
            .map(|v| Blocks::from_vec(n, dim, v).map_err(|e| ConfigError::invalid("v0", e)))
            .transpose()?;

        let normalization = match self.variant {
            Variant::Plain => None,
            Variant::Normalized => {
                let floor = self.norm_floor.ok_or(ConfigError::Missing("norm.c"))?;
                let min_rounds = NormalizationConfig::min_rounds(&graph)
                    .map_err(|e| ConfigError::invalid("norm.rounds", e))?;
                let rounds = self.norm_rounds.unwrap_or(min_rounds);
                Some(
                    NormalizationConfig::new(floor, rounds, &graph)
                        .map_err(|e| ConfigError::invalid("norm", e))?,
                )
            }
        };

        Ok(BuiltExperiment {
            graph,
            problem,
            x0,
            v0,
            normalization,
        })
    }
}
