use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contracts::{EdgeBehavior, EngineConfig, RawDevice, Role};

use super::SimError;

/// The three-site deployment: a manager, three edges, three sensing terminals and two users.
pub const CANONICAL_SCENARIO: &str = include_str!("../../fixtures/canonical.json");
/// 48 hourly readings at `outside`, `lab` and `aisle`.
pub const SENSOR_FIXTURE: &str = include_str!("../../fixtures/sensors.csv");

const SENSOR_HEADER: [&str; 4] = ["tick", "site", "temperature_c", "humidity_pct"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRecord {
    pub tick: u64,
    pub site: String,
    pub temperature_c: f64,
    pub humidity_pct: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupChoice {
    #[default]
    Exponent,
    Curve,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub role: Role,
    #[serde(default)]
    pub com: String,
    #[serde(default)]
    pub mac: String,
    #[serde(default)]
    pub ip: String,
}

impl NodeSpec {
    pub fn raw(&self) -> RawDevice {
        RawDevice {
            id: self.name.clone(),
            com: self.com.clone(),
            mac: self.mac.clone(),
            ip: self.ip.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
}

impl Topology {
    /// Names must be nonempty and unique.
    pub fn check(&self) -> Result<(), SimError> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if n.name.is_empty() {
                return Err(SimError::Script("node with empty name".into()));
            }
            if !seen.insert(n.name.as_str()) {
                return Err(SimError::DuplicateNode(n.name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    Register {
        node: String,
    },
    AddAtt {
        node: String,
        attributes: Vec<String>,
    },
    AddPolicy {
        by: String,
        subject: String,
        object: String,
        formula: String,
    },
    /// Either inline `records`, or a CSV `fixture` (optionally filtered to `site`) resolved at load.
    IngestData {
        node: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        records: Vec<SensorRecord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fixture: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        site: Option<String>,
    },
    /// Grant check, then an outsourced decrypt of the object's `record`-th reading (default: latest).
    RequestAccess {
        subject: String,
        object: String,
        #[serde(default)]
        record: Option<usize>,
    },
    InjectMalicious {
        node: String,
        behavior: EdgeBehavior,
    },
    Advance {
        ticks: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub group: GroupChoice,
    /// Engine knobs; its `seed` is replaced by the scenario seed.
    #[serde(default)]
    pub engine: EngineConfig,
    /// Probability that a request to an edge is lost.
    #[serde(default)]
    pub drop_rate: f64,
    pub topology: Topology,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimError::Script(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    /// The checks `from_json` applies, for scenarios deserialized elsewhere.
    pub fn check(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(SimError::Script(format!("drop_rate {} outside [0, 1]", self.drop_rate)));
        }
        self.topology.check()
    }

    /// Inlines fixture files, read through `load`.
    pub fn resolve(&mut self, mut load: impl FnMut(&str) -> Result<String, String>) -> Result<(), SimError> {
        for event in &mut self.events {
            if let Event::IngestData { records, fixture, site, .. } = event {
                if let Some(name) = fixture.take() {
                    let text = load(&name).map_err(|e| SimError::Fixture(format!("{name}: {e}")))?;
                    let rows = parse_sensor_csv(&text).map_err(|e| SimError::Fixture(format!("{name}: {e}")))?;
                    records.extend(rows.into_iter().filter(|r| site.as_ref().is_none_or(|s| *s == r.site)));
                }
            }
        }
        Ok(())
    }

    /// Inlines fixtures named relative to `dir`.
    pub fn resolve_in(&mut self, dir: &Path) -> Result<(), SimError> {
        self.resolve(|name| std::fs::read_to_string(dir.join(name)).map_err(|e| e.to_string()))
    }
}

/// The built-in three-site scenario with its fixture inlined.
pub fn canonical_scenario() -> Scenario {
    let mut s = Scenario::from_json(CANONICAL_SCENARIO).expect("canonical scenario parses");
    s.resolve(|name| match name {
        "sensors.csv" => Ok(SENSOR_FIXTURE.to_string()),
        other => Err(format!("no built-in fixture {other}")),
    })
    .expect("canonical fixture resolves");
    s
}

/// `n` edges decrypt one reading for a satisfying user; edge `i` forges when `forgers >> i & 1`.
pub fn threshold_scenario(n: usize, forgers: u32, seed: u64) -> Scenario {
    let node = |name: String, role: Role| NodeSpec { name, role, com: String::new(), mac: String::new(), ip: String::new() };
    let mut nodes = vec![
        node("manager".into(), Role::Manager),
        node("sensor".into(), Role::Terminal),
        node("reader".into(), Role::User),
    ];
    nodes.extend((0..n).map(|i| node(format!("edge-{i}"), Role::Edge)));
    let mut events: Vec<Event> = nodes.iter().map(|n| Event::Register { node: n.name.clone() }).collect();
    events.push(Event::AddAtt { node: "reader".into(), attributes: vec!["Sub_reader".into()] });
    events.push(Event::AddAtt { node: "sensor".into(), attributes: vec!["Ob_sensor".into()] });
    events.push(Event::AddPolicy {
        by: "manager".into(),
        subject: "reader".into(),
        object: "sensor".into(),
        formula: "Sub_reader OR Ob_sensor".into(),
    });
    events.push(Event::IngestData {
        node: "sensor".into(),
        records: vec![SensorRecord { tick: 0, site: "lab".into(), temperature_c: 23.5, humidity_pct: 41.0 }],
        fixture: None,
        site: None,
    });
    events.extend((0..n).filter(|i| forgers >> i & 1 == 1).map(|i| Event::InjectMalicious {
        node: format!("edge-{i}"),
        behavior: EdgeBehavior::ForgeDecrypt,
    }));
    events.push(Event::RequestAccess { subject: "reader".into(), object: "sensor".into(), record: None });
    Scenario {
        seed,
        group: GroupChoice::Exponent,
        engine: EngineConfig { n_bits: 4, ..EngineConfig::default() },
        drop_rate: 0.0,
        topology: Topology { nodes },
        events,
    }
}

/// Parses `tick,site,temperature_c,humidity_pct` rows; errors carry the line number.
pub fn parse_sensor_csv(text: &str) -> Result<Vec<SensorRecord>, SimError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| SimError::Fixture(e.to_string()))?;
    if header.iter().ne(SENSOR_HEADER) {
        return Err(SimError::Fixture(format!(
            "line 1: expected header `{}`",
            SENSOR_HEADER.join(",")
        )));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| SimError::Fixture(format!("line {}: {e}", i + 2))))
        .collect()
}
