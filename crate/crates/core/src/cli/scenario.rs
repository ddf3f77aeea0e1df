//! Scenario files and their translation into a runnable world.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{DelayKind, DelayPolicy, Strategy};
use crate::metrics::AuditContext;
use crate::params::{derive_parameters, s_max_for, unanimous_parameters, ParamsError, ProtocolParams};
use crate::simcore::ClockPolicy;
use crate::topology::{ClusterGraph, FaultPlacement, NodeId, TopologyError};
use crate::world::{ForcedMode, WorldConfig};

/// Failure to turn a scenario into a world.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
}

impl From<TopologyError> for ScenarioError {
    fn from(e: TopologyError) -> Self {
        ScenarioError::Config(e.to_string())
    }
}

impl From<ParamsError> for ScenarioError {
    fn from(e: ParamsError) -> Self {
        match e {
            ParamsError::Infeasible(m) => ScenarioError::Infeasible(m),
            ParamsError::Invalid(m) => ScenarioError::Config(m),
        }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_rounds() -> f64 {
    100.0
}

fn default_guard_c() -> f64 {
    8.0
}

fn default_true() -> bool {
    true
}

fn default_s_min() -> u32 {
    1
}

fn default_skew_factor() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    #[serde(default)]
    pub policy: ClockPolicy,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    #[serde(default)]
    pub policy: DelayKind,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSection {
    #[serde(default)]
    pub placement: FaultPlacement,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Strategy of every faulty node without an override.
    #[serde(default)]
    pub strategy: Strategy,
    /// Per-node strategies keyed by `"cluster.index"`.
    #[serde(default)]
    pub overrides: BTreeMap<String, Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Duration in nominal rounds (`T` each); ignored if `seconds` is set.
    #[serde(default = "default_rounds")]
    pub rounds: f64,
    #[serde(default)]
    pub seconds: Option<f64>,
    /// Sample spacing; defaults to `T / 4`.
    #[serde(default)]
    pub cadence: Option<f64>,
    #[serde(default = "default_true")]
    pub guard: bool,
    #[serde(default = "default_guard_c")]
    pub guard_c: f64,
    #[serde(default = "default_s_min")]
    pub s_min: u32,
    /// Largest trigger level; derived from the global-skew bound when absent.
    #[serde(default)]
    pub s_max: Option<u32>,
    /// Constant `K` in the assumed global-skew bound `K δ (D + 1)` used to
    /// size `s_max`.
    #[serde(default = "default_skew_factor")]
    pub skew_factor: f64,
    #[serde(default)]
    pub forced: Vec<ForcedMode>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            rounds: default_rounds(),
            seconds: None,
            cadence: None,
            guard: true,
            guard_c: default_guard_c(),
            s_min: default_s_min(),
            s_max: None,
            skew_factor: default_skew_factor(),
            forced: Vec::new(),
        }
    }
}

/// A complete, self-contained experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// `single`, `path:N`, `cycle:N`, `grid:RxC`, `complete:N` or
    /// `file:PATH` (edge list, relative to the scenario file).
    pub topology: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub params: ProtocolParams,
    #[serde(default)]
    pub clocks: ClockSection,
    #[serde(default)]
    pub delays: DelaySection,
    #[serde(default)]
    pub faults: FaultSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// A world configuration together with the static facts its audits need.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub world: WorldConfig,
    pub context: AuditContext,
}

fn sub_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9)) ^ salt
}

impl Scenario {
    pub fn new(topology: &str, params: ProtocolParams) -> Self {
        Self {
            name: String::new(),
            topology: topology.into(),
            seed: default_seed(),
            params,
            clocks: ClockSection::default(),
            delays: DelaySection::default(),
            faults: FaultSection::default(),
            run: RunSection::default(),
            output: None,
            base_dir: None,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::parse(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn cluster_graph(&self) -> Result<ClusterGraph, ScenarioError> {
        parse_topology(&self.topology, self.base_dir.as_deref())
    }

    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        let p = &self.params;
        let derived = derive_parameters(p)?;
        let unanimous = unanimous_parameters(p, &derived)?;
        let cg = self.cluster_graph()?;
        let diameter = cg.diameter()?;
        let fault_seed = self.faults.seed.unwrap_or_else(|| sub_seed(self.seed, 3));
        let graph = cg.augment(p.k).place_faults(&self.faults.placement, p.f, fault_seed)?;

        let mut strategies = BTreeMap::new();
        for (key, strategy) in &self.faults.overrides {
            let id = parse_node_id(key)?;
            let v = graph.idx(id)?;
            if !graph.is_faulty(v) {
                return Err(ScenarioError::Config(format!("strategy override for correct node {key}")));
            }
            strategies.insert(v, strategy.clone());
        }
        if let Strategy::RandomPulses { rate, .. } = self.faults.strategy {
            if !(rate > 0.0) {
                return Err(ScenarioError::Config("random pulse rate must be positive".into()));
            }
        }

        let r = &self.run;
        let until = r.seconds.unwrap_or(r.rounds * derived.t);
        if !(until > 0.0 && until.is_finite()) {
            return Err(ScenarioError::Config("run duration must be positive".into()));
        }
        let cadence = r.cadence.unwrap_or(derived.t / 4.0);
        if !(cadence > 0.0) {
            return Err(ScenarioError::Config("cadence must be positive".into()));
        }
        let s_max = r
            .s_max
            .unwrap_or_else(|| s_max_for(r.skew_factor * derived.delta * (diameter as f64 + 1.0), derived.kappa));
        if s_max < r.s_min {
            return Err(ScenarioError::Config(format!("s_max {s_max} below s_min {}", r.s_min)));
        }
        if r.forced.iter().any(|f| f.gamma > 1) {
            return Err(ScenarioError::Config("forced gamma must be 0 or 1".into()));
        }
        self.clocks.policy.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;

        let context = AuditContext {
            params: p.clone(),
            derived: derived.clone(),
            unanimous,
            diameter,
            edges: cg.edges().to_vec(),
            clusters: cg.cluster_count(),
            s_min: r.s_min,
            s_max,
            forced: !r.forced.is_empty(),
        };
        let world = WorldConfig {
            params: p.clone(),
            delay: DelayPolicy::new(
                self.delays.policy.clone(),
                p.d,
                p.u,
                self.delays.seed.unwrap_or_else(|| sub_seed(self.seed, 2)),
            ),
            derived,
            graph,
            clock_policy: self.clocks.policy.clone(),
            clock_seed: self.clocks.seed.unwrap_or_else(|| sub_seed(self.seed, 1)),
            strategies,
            default_strategy: self.faults.strategy.clone(),
            guard: r.guard.then_some(r.guard_c),
            s_min: r.s_min,
            s_max,
            cadence,
            until,
            forced: r.forced.clone(),
        };
        Ok(Prepared { world, context })
    }
}

fn parse_node_id(key: &str) -> Result<NodeId, ScenarioError> {
    let bad = || ScenarioError::Config(format!("node id {key:?} is not of the form cluster.index"));
    let (c, i) = key.split_once('.').ok_or_else(bad)?;
    Ok(NodeId { cluster: c.trim().parse().map_err(|_| bad())?, index: i.trim().parse().map_err(|_| bad())? })
}

/// Parses a topology string such as `path:8` or `grid:3x4`.
pub fn parse_topology(spec: &str, base: Option<&Path>) -> Result<ClusterGraph, ScenarioError> {
    let spec = spec.trim();
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let num = |s: &str| -> Result<usize, ScenarioError> {
        s.trim().parse().map_err(|_| ScenarioError::Config(format!("bad size {s:?} in topology {spec:?}")))
    };
    let graph = match kind.trim().to_ascii_lowercase().as_str() {
        "single" => ClusterGraph::single(),
        "path" => ClusterGraph::path(num(arg)?)?,
        "cycle" => ClusterGraph::cycle(num(arg)?)?,
        "complete" => ClusterGraph::complete(num(arg)?)?,
        "grid" => {
            let (r, c) = arg
                .split_once(['x', 'X'])
                .ok_or_else(|| ScenarioError::Config(format!("grid needs RxC, got {arg:?}")))?;
            ClusterGraph::grid(num(r)?, num(c)?)?
        }
        "file" => {
            let path = base.map_or_else(|| PathBuf::from(arg), |b| b.join(arg));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ScenarioError::Config(format!("cannot read {}: {e}", path.display())))?;
            ClusterGraph::parse_edge_list(&text)?
        }
        other => return Err(ScenarioError::Config(format!("unknown topology kind {other:?}"))),
    };
    if !graph.is_connected() {
        return Err(TopologyError::DisconnectedGraph.into());
    }
    Ok(graph)
}
