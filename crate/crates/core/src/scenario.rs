//! Scenario files: one TOML document describing the rate, the defects,
//! the initial data and the settings of each tool.
//!
//! ```toml
//! [rate]
//! family = "identity"        # power | bounded-rational | bounded-geometric | table
//!
//! [[defects]]
//! x = 0.5
//! beta = 1.0
//! lambda = 2.0
//! atom = 0.0                 # initial atom mass (critical defects)
//!
//! [initial]
//! c0 = 1.0
//! profile = { kind = "cosine", mean = 1.0, amplitude = 1.0 }
//!
//! [simulation]
//! n = 512
//! times = [0.01, 0.05]
//!
//! [solver]
//! m = 512
//! t_end = 0.05
//! snapshots = [0.01, 0.05]
//!
//! [harness]
//! n_ladder = [128, 256, 512]
//! times = [0.05]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::defects::{DefectSet, DefectSpec};
use crate::error::{Error, Result};
use crate::harness::{ConvergenceSetup, Reference, Thresholds};
use crate::pde::SolverConfig;
use crate::profile::{InitialCondition, Profile};
use crate::rate::{RateFamily, RateFunction};
use crate::thermo::GrandCanonical;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    rate: RawRate,
    #[serde(default)]
    defects: Vec<RawDefect>,
    initial: RawInitial,
    simulation: Option<SimulationSection>,
    solver: Option<RawSolver>,
    harness: Option<RawHarness>,
    #[serde(rename = "static")]
    static_check: Option<StaticSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRate {
    family: String,
    alpha: Option<f64>,
    /// Path of a two-column `n g(n)` file, relative to the scenario file.
    table: Option<PathBuf>,
    /// `power` or `bounded`, for tables.
    table_family: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefect {
    x: f64,
    beta: f64,
    lambda: f64,
    #[serde(default)]
    atom: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    profile: Profile,
    #[serde(default)]
    c0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n: usize,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    m: usize,
    #[serde(default = "default_cfl")]
    cfl: f64,
    t_end: f64,
    #[serde(default)]
    snapshots: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarness {
    n_ladder: Vec<usize>,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default = "default_theta")]
    theta: f64,
    #[serde(default = "default_times")]
    times: Vec<f64>,
    #[serde(default = "default_reference")]
    reference: Reference,
    #[serde(default)]
    thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticSection {
    pub c: f64,
    pub n: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_cfl() -> f64 {
    0.4
}
fn default_replicas() -> usize {
    8
}
fn default_theta() -> f64 {
    1.0 / 32.0
}
fn default_times() -> Vec<f64> {
    vec![0.01, 0.05, 0.1]
}
fn default_reference() -> Reference {
    Reference::Solver
}
fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone)]
pub struct HarnessSection {
    pub n_ladder: Vec<usize>,
    pub replicas: usize,
    pub theta: f64,
    pub times: Vec<f64>,
    pub reference: Reference,
    pub thresholds: Thresholds,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: Option<String>,
    pub rate: RateFunction,
    pub defects: DefectSet,
    pub init: InitialCondition,
    pub simulation: Option<SimulationSection>,
    pub solver: Option<SolverConfig>,
    pub harness: Option<HarnessSection>,
    pub static_check: Option<StaticSection>,
}

fn check_times(field: &str, times: &[f64]) -> Result<()> {
    let mut last = 0.0;
    for &t in times {
        if !(t >= last && t.is_finite()) {
            return Err(Error::config(field, "times must be finite, nonnegative and increasing"));
        }
        last = t;
    }
    Ok(())
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("scenario", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Parses a scenario; relative table paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        let rate = build_rate(&raw.rate, base)?;
        let specs: Vec<DefectSpec> = raw.defects.iter().map(|d| DefectSpec::new(d.x, d.beta, d.lambda)).collect();
        let defects = DefectSet::new(specs, rate.family())?;
        raw.initial.profile.validate().map_err(|e| Error::config("initial.profile", e.to_string()))?;
        for (j, d) in raw.defects.iter().enumerate() {
            if !(d.atom >= 0.0 && d.atom.is_finite()) {
                return Err(Error::config(format!("defects[{j}].atom"), "must be finite and nonnegative"));
            }
        }
        let atoms = if raw.defects.iter().any(|d| d.atom != 0.0) {
            raw.defects.iter().map(|d| d.atom).collect()
        } else {
            Vec::new()
        };
        let c0 = raw.initial.c0.unwrap_or(0.0);
        if !(c0 >= 0.0 && c0.is_finite()) {
            return Err(Error::config("initial.c0", "must be finite and nonnegative"));
        }
        let init = InitialCondition { profile: raw.initial.profile, atoms, c0 };

        if let Some(sim) = &raw.simulation {
            if sim.n < 2 {
                return Err(Error::config("simulation.n", "need at least 2 sites"));
            }
            check_times("simulation.times", &sim.times)?;
        }
        let solver = match raw.solver {
            Some(s) => {
                let cfg = SolverConfig { m: s.m, cfl: s.cfl, t_end: s.t_end, snapshot_times: s.snapshots };
                cfg.validate()?;
                Some(cfg)
            }
            None => None,
        };
        let harness = match raw.harness {
            Some(h) => {
                if h.n_ladder.is_empty() {
                    return Err(Error::config("harness.n_ladder", "ladder is empty"));
                }
                check_times("harness.times", &h.times)?;
                Some(HarnessSection {
                    n_ladder: h.n_ladder,
                    replicas: h.replicas,
                    theta: h.theta,
                    times: h.times,
                    reference: h.reference,
                    thresholds: h.thresholds,
                })
            }
            None => None,
        };
        if let Some(s) = &raw.static_check {
            if !(s.c >= 0.0 && s.c.is_finite()) {
                return Err(Error::config("static.c", "must be finite and nonnegative"));
            }
        }
        Ok(Scenario {
            name: raw.name,
            rate,
            defects,
            init,
            simulation: raw.simulation,
            solver,
            harness,
            static_check: raw.static_check,
        })
    }

    pub fn grand_canonical(&self) -> GrandCanonical {
        GrandCanonical::new(self.rate.clone())
    }

    pub fn require_simulation(&self) -> Result<&SimulationSection> {
        self.simulation.as_ref().ok_or_else(|| Error::config("simulation", "section missing"))
    }

    pub fn require_solver(&self) -> Result<&SolverConfig> {
        self.solver.as_ref().ok_or_else(|| Error::config("solver", "section missing"))
    }

    pub fn require_static(&self) -> Result<&StaticSection> {
        self.static_check.as_ref().ok_or_else(|| Error::config("static", "section missing"))
    }

    /// Harness settings; the solver grid and CFL factor come from the
    /// `[solver]` section when present.
    pub fn convergence_setup(&self, seed: u64) -> Result<ConvergenceSetup> {
        let h = self.harness.as_ref().ok_or_else(|| Error::config("harness", "section missing"))?;
        let (m, cfl) = self.solver.as_ref().map(|s| (s.m, s.cfl)).unwrap_or((512, default_cfl()));
        let setup = ConvergenceSetup {
            gc: self.grand_canonical(),
            defects: self.defects.clone(),
            init: self.init.clone(),
            n_ladder: h.n_ladder.clone(),
            replicas: h.replicas,
            theta: h.theta,
            times: h.times.clone(),
            m,
            cfl,
            reference: h.reference,
            seed,
            thresholds: h.thresholds.clone(),
        };
        setup.validate()?;
        Ok(setup)
    }
}

/// Scenario files shipped in `scenarios/`, by name.
pub const BUNDLED: [(&str, &str); 7] = [
    ("heat", include_str!("../../../scenarios/heat.toml")),
    ("critical", include_str!("../../../scenarios/critical.toml")),
    ("superslow", include_str!("../../../scenarios/superslow.toml")),
    ("bounded", include_str!("../../../scenarios/bounded.toml")),
    ("bouncing", include_str!("../../../scenarios/bouncing.toml")),
    ("noeffect", include_str!("../../../scenarios/noeffect.toml")),
    ("static", include_str!("../../../scenarios/static.toml")),
];

impl Scenario {
    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::config("scenario", format!("no bundled scenario `{name}`")))?;
        Self::parse(text, None)
    }
}

fn build_rate(raw: &RawRate, base: Option<&Path>) -> Result<RateFunction> {
    let field = |name: &str| format!("rate.{name}");
    let rate = match raw.family.as_str() {
        "identity" => RateFunction::identity(),
        "power" => {
            let alpha = raw.alpha.ok_or_else(|| Error::config(field("alpha"), "missing field `alpha` for the power family"))?;
            RateFunction::power(alpha).map_err(|e| Error::config(field("alpha"), e.to_string()))?
        }
        "bounded-rational" => RateFunction::rational(),
        "bounded-geometric" => RateFunction::geometric(),
        "table" => {
            let path = raw.table.as_ref().ok_or_else(|| Error::config(field("table"), "missing field `table`"))?;
            let path = match base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path.clone(),
            };
            let family = match raw.table_family.as_deref() {
                Some("bounded") => RateFamily::Bounded,
                Some("power") => RateFamily::PowerAlpha(raw.alpha.ok_or_else(|| {
                    Error::config(field("alpha"), "missing field `alpha` for a power table")
                })?),
                Some(other) => return Err(Error::config(field("table_family"), format!("unknown family `{other}`"))),
                None => return Err(Error::config(field("table_family"), "missing field `table_family`")),
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::config(field("table"), format!("cannot read {}: {e}", path.display())))?;
            RateFunction::parse_table(&text, family).map_err(|e| Error::config(field("table"), e.to_string()))?
        }
        other => {
            return Err(Error::config(
                field("family"),
                format!("unknown family `{other}`; expected identity, power, bounded-rational, bounded-geometric or table"),
            ))
        }
    };
    Ok(rate)
}

/// Single-line parse diagnostic with the line number of the offending
/// span.
fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let msg = e.message().replace('\n', " ");
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .map(str::to_string)
        .unwrap_or_else(|| "scenario".into());
    let reason = match line {
        Some(l) => format!("line {l}: {msg}"),
        None => msg,
    };
    Error::config(field, reason)
}
