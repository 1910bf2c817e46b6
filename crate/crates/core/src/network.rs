//! Directed link/lane road network.
//!
//! Lanes are straight one-dimensional segments. A lane position is the
//! distance in meters from the lane's upstream end. The only lateral
//! information is the lane index (0 = rightmost) and the optional
//! opposite-direction edge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

/// Dense lane handle, valid only for the network that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneId(pub u32);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub speed_limit_mps: f64,
    pub opposite_edge: Option<EdgeId>,
    /// Lanes of this edge ordered by lane index.
    pub lanes: Vec<LaneId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: LaneId,
    pub edge: EdgeId,
    /// 0 is the rightmost lane.
    pub index: usize,
    pub length_m: f64,
    pub speed_limit_mps: f64,
    pub opposite_edge: Option<EdgeId>,
}

/// Explicit description of one edge, as written in the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub lane_count: usize,
    pub length_m: f64,
    pub speed_limit_mps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opposite_edge: Option<u32>,
}

/// `network` section of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    Explicit {
        nodes: Vec<u32>,
        edges: Vec<EdgeSpec>,
    },
    Ring {
        length_m: f64,
        #[serde(default = "one")]
        lanes: usize,
        #[serde(default = "default_speed_limit")]
        speed_limit_mps: f64,
    },
    Corridor {
        edges: usize,
        #[serde(default = "one")]
        lanes: usize,
        edge_length_m: f64,
        #[serde(default = "default_speed_limit")]
        speed_limit_mps: f64,
        #[serde(default)]
        bidirectional: bool,
    },
    Grid {
        rows: usize,
        cols: usize,
        edge_length_m: f64,
        #[serde(default = "one")]
        lanes: usize,
        #[serde(default = "default_speed_limit")]
        speed_limit_mps: f64,
    },
}

fn one() -> usize {
    1
}

fn default_speed_limit() -> f64 {
    13.89
}

/// Parameters for [`builtin_network`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    Ring {
        length_m: f64,
        lanes: usize,
        speed_limit_mps: f64,
    },
    Corridor {
        edges: usize,
        lanes: usize,
        edge_length_m: f64,
        speed_limit_mps: f64,
        bidirectional: bool,
    },
    Grid {
        rows: usize,
        cols: usize,
        edge_length_m: f64,
        lanes: usize,
        speed_limit_mps: f64,
    },
}

impl Builtin {
    pub fn ring(length_m: f64, lanes: usize) -> Self {
        Builtin::Ring {
            length_m,
            lanes,
            speed_limit_mps: default_speed_limit(),
        }
    }

    pub fn corridor(edges: usize, lanes: usize, edge_length_m: f64) -> Self {
        Builtin::Corridor {
            edges,
            lanes,
            edge_length_m,
            speed_limit_mps: default_speed_limit(),
            bidirectional: false,
        }
    }

    pub fn grid(rows: usize, cols: usize, edge_length_m: f64) -> Self {
        Builtin::Grid {
            rows,
            cols,
            edge_length_m,
            lanes: 1,
            speed_limit_mps: default_speed_limit(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct NetworkOnly {
    network: NetworkSpec,
}

#[derive(Debug, Serialize)]
struct NetworkOnlyRef<'a> {
    network: &'a NetworkSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    nodes: BTreeSet<NodeId>,
    edges: Vec<Edge>,
    lanes: Vec<Lane>,
    edge_index: BTreeMap<EdgeId, usize>,
    downstream: Vec<Vec<EdgeId>>,
    upstream: Vec<Vec<EdgeId>>,
}

impl RoadNetwork {
    /// Builds and validates a network from explicit node and edge lists.
    pub fn from_parts(nodes: &[u32], edges: &[EdgeSpec]) -> Result<Self, ScenarioError> {
        let node_set: BTreeSet<NodeId> = nodes.iter().copied().map(NodeId).collect();
        if node_set.len() != nodes.len() {
            return Err(ScenarioError::validation("node ids must be unique"));
        }
        let mut edge_index = BTreeMap::new();
        let mut out_edges = Vec::with_capacity(edges.len());
        let mut lanes = Vec::new();
        for (pos, spec) in edges.iter().enumerate() {
            let id = EdgeId(spec.id);
            if edge_index.insert(id, pos).is_some() {
                return Err(ScenarioError::validation(format!("edge {id}: duplicate edge id")));
            }
            for node in [spec.from, spec.to] {
                if !node_set.contains(&NodeId(node)) {
                    return Err(ScenarioError::validation(format!(
                        "edge {id}: references unknown node {node}"
                    )));
                }
            }
            if !(spec.length_m > 0.0) || !spec.length_m.is_finite() {
                return Err(ScenarioError::validation(format!(
                    "edge {id}: lane length > 0 violated (length_m = {})",
                    spec.length_m
                )));
            }
            if !(spec.speed_limit_mps > 0.0) || !spec.speed_limit_mps.is_finite() {
                return Err(ScenarioError::validation(format!(
                    "edge {id}: speed limit > 0 violated (speed_limit_mps = {})",
                    spec.speed_limit_mps
                )));
            }
            if spec.lane_count == 0 {
                return Err(ScenarioError::validation(format!(
                    "edge {id}: lane_count must be at least 1"
                )));
            }
            let mut lane_ids = Vec::with_capacity(spec.lane_count);
            for index in 0..spec.lane_count {
                let lane_id = LaneId(lanes.len() as u32);
                lanes.push(Lane {
                    id: lane_id,
                    edge: id,
                    index,
                    length_m: spec.length_m,
                    speed_limit_mps: spec.speed_limit_mps,
                    opposite_edge: spec.opposite_edge.map(EdgeId),
                });
                lane_ids.push(lane_id);
            }
            out_edges.push(Edge {
                id,
                from: NodeId(spec.from),
                to: NodeId(spec.to),
                length_m: spec.length_m,
                speed_limit_mps: spec.speed_limit_mps,
                opposite_edge: spec.opposite_edge.map(EdgeId),
                lanes: lane_ids,
            });
        }
        for edge in &out_edges {
            if let Some(opp) = edge.opposite_edge {
                let Some(&opp_pos) = edge_index.get(&opp) else {
                    return Err(ScenarioError::validation(format!(
                        "edge {}: opposite_edge {opp} does not exist",
                        edge.id
                    )));
                };
                let other = &out_edges[opp_pos];
                if other.from != edge.to || other.to != edge.from || opp == edge.id {
                    return Err(ScenarioError::validation(format!(
                        "edge {}: opposite_edge {opp} is not reversed relative to this edge",
                        edge.id
                    )));
                }
            }
        }

        // Downstream edges leave the end node of an edge; U-turns onto the
        // opposite edge are not part of the adjacency.
        let mut downstream = vec![Vec::new(); out_edges.len()];
        let mut upstream = vec![Vec::new(); out_edges.len()];
        let mut by_from: BTreeMap<NodeId, Vec<EdgeId>> = BTreeMap::new();
        for edge in &out_edges {
            by_from.entry(edge.from).or_default().push(edge.id);
        }
        for list in by_from.values_mut() {
            list.sort();
        }
        for (pos, edge) in out_edges.iter().enumerate() {
            if let Some(next) = by_from.get(&edge.to) {
                for &candidate in next {
                    if Some(candidate) == edge.opposite_edge {
                        continue;
                    }
                    downstream[pos].push(candidate);
                    upstream[edge_index[&candidate]].push(edge.id);
                }
            }
        }
        for list in &mut upstream {
            list.sort();
        }

        Ok(RoadNetwork {
            nodes: node_set,
            edges: out_edges,
            lanes,
            edge_index,
            downstream,
            upstream,
        })
    }

    pub fn from_spec(spec: &NetworkSpec) -> Result<Self, ScenarioError> {
        match spec {
            NetworkSpec::Explicit { nodes, edges } => Self::from_parts(nodes, edges),
            NetworkSpec::Ring {
                length_m,
                lanes,
                speed_limit_mps,
            } => builtin_network(Builtin::Ring {
                length_m: *length_m,
                lanes: *lanes,
                speed_limit_mps: *speed_limit_mps,
            }),
            NetworkSpec::Corridor {
                edges,
                lanes,
                edge_length_m,
                speed_limit_mps,
                bidirectional,
            } => builtin_network(Builtin::Corridor {
                edges: *edges,
                lanes: *lanes,
                edge_length_m: *edge_length_m,
                speed_limit_mps: *speed_limit_mps,
                bidirectional: *bidirectional,
            }),
            NetworkSpec::Grid {
                rows,
                cols,
                edge_length_m,
                lanes,
                speed_limit_mps,
            } => builtin_network(Builtin::Grid {
                rows: *rows,
                cols: *cols,
                edge_length_m: *edge_length_m,
                lanes: *lanes,
                speed_limit_mps: *speed_limit_mps,
            }),
        }
    }

    /// Explicit description that rebuilds this exact network.
    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec::Explicit {
            nodes: self.nodes.iter().map(|n| n.0).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    id: e.id.0,
                    from: e.from.0,
                    to: e.to.0,
                    lane_count: e.lanes.len(),
                    length_m: e.length_m,
                    speed_limit_mps: e.speed_limit_mps,
                    opposite_edge: e.opposite_edge.map(|o| o.0),
                })
                .collect(),
        }
    }

    /// Serializes the network as a scenario `network` section.
    pub fn to_scenario_text(&self) -> String {
        toml::to_string(&NetworkOnlyRef {
            network: &self.to_spec(),
        })
        .expect("network spec is always serializable")
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id.0 as usize]
    }

    pub fn get_lane(&self, id: LaneId) -> Option<&Lane> {
        self.lanes.get(id.0 as usize)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edge_index.get(&id).map(|&i| &self.edges[i])
    }

    /// Lane `index` of `edge`, if both exist.
    pub fn lane_on(&self, edge: EdgeId, index: usize) -> Option<LaneId> {
        self.edge(edge).and_then(|e| e.lanes.get(index).copied())
    }

    pub fn downstream(&self, edge: EdgeId) -> &[EdgeId] {
        self.edge_index
            .get(&edge)
            .map(|&i| self.downstream[i].as_slice())
            .unwrap_or(&[])
    }

    pub fn upstream(&self, edge: EdgeId) -> &[EdgeId] {
        self.edge_index
            .get(&edge)
            .map(|&i| self.upstream[i].as_slice())
            .unwrap_or(&[])
    }

    /// Fewest-edges path from `origin` to `destination`, both included.
    /// Ties resolve towards smaller edge ids.
    pub fn shortest_path(&self, origin: EdgeId, destination: EdgeId) -> Option<Vec<EdgeId>> {
        self.edge(origin)?;
        self.edge(destination)?;
        let mut previous: BTreeMap<EdgeId, EdgeId> = BTreeMap::new();
        let mut seen = BTreeSet::from([origin]);
        let mut queue = std::collections::VecDeque::from([origin]);
        while let Some(edge) = queue.pop_front() {
            if edge == destination {
                let mut path = vec![edge];
                let mut cursor = edge;
                while let Some(&p) = previous.get(&cursor) {
                    path.push(p);
                    cursor = p;
                }
                path.reverse();
                return Some(path);
            }
            for &next in self.downstream(edge) {
                if seen.insert(next) {
                    previous.insert(next, edge);
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// Stable textual lane key `<edge_id>_<lane_index>` used in output files.
    pub fn lane_key(&self, id: LaneId) -> String {
        let lane = self.lane(id);
        format!("{}_{}", lane.edge, lane.index)
    }

    pub fn parse_lane_key(&self, key: &str) -> Option<LaneId> {
        let (edge, index) = key.split_once('_')?;
        self.lane_on(EdgeId(edge.parse().ok()?), index.parse().ok()?)
    }
}

/// Loads the `network` section of a scenario text.
pub fn load_network(scenario_text: &str) -> Result<RoadNetwork, ScenarioError> {
    let parsed: NetworkOnly = toml::from_str(scenario_text)
        .map_err(|e| ScenarioError::from_toml(&e, scenario_text))?;
    RoadNetwork::from_spec(&parsed.network)
}

/// Canonical test networks.
///
/// * ring: one self-looping edge (node 0 to node 0).
/// * corridor: `edges` consecutive edges from node 0 to node `edges`;
///   with `bidirectional`, reversed edges `edges..2*edges` mirror them.
/// * grid: `rows * cols` nodes with a directed edge in each direction
///   between horizontal and vertical neighbors.
pub fn builtin_network(kind: Builtin) -> Result<RoadNetwork, ScenarioError> {
    match kind {
        Builtin::Ring {
            length_m,
            lanes,
            speed_limit_mps,
        } => RoadNetwork::from_parts(
            &[0],
            &[EdgeSpec {
                id: 0,
                from: 0,
                to: 0,
                lane_count: lanes,
                length_m,
                speed_limit_mps,
                opposite_edge: None,
            }],
        ),
        Builtin::Corridor {
            edges,
            lanes,
            edge_length_m,
            speed_limit_mps,
            bidirectional,
        } => {
            if edges == 0 {
                return Err(ScenarioError::validation("corridor needs at least one edge"));
            }
            let n = edges as u32;
            let nodes: Vec<u32> = (0..=n).collect();
            let mut specs = Vec::new();
            for i in 0..n {
                specs.push(EdgeSpec {
                    id: i,
                    from: i,
                    to: i + 1,
                    lane_count: lanes,
                    length_m: edge_length_m,
                    speed_limit_mps,
                    opposite_edge: bidirectional.then_some(n + i),
                });
            }
            if bidirectional {
                for i in 0..n {
                    specs.push(EdgeSpec {
                        id: n + i,
                        from: i + 1,
                        to: i,
                        lane_count: lanes,
                        length_m: edge_length_m,
                        speed_limit_mps,
                        opposite_edge: Some(i),
                    });
                }
            }
            RoadNetwork::from_parts(&nodes, &specs)
        }
        Builtin::Grid {
            rows,
            cols,
            edge_length_m,
            lanes,
            speed_limit_mps,
        } => {
            if rows == 0 || cols == 0 {
                return Err(ScenarioError::validation("grid rows and cols must be at least 1"));
            }
            if rows * cols < 2 {
                return Err(ScenarioError::validation(
                    "grid must have at least two nodes to carry edges",
                ));
            }
            let node = |r: usize, c: usize| (r * cols + c) as u32;
            let nodes: Vec<u32> = (0..(rows * cols) as u32).collect();
            let mut pairs = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        pairs.push((node(r, c), node(r, c + 1)));
                    }
                    if r + 1 < rows {
                        pairs.push((node(r, c), node(r + 1, c)));
                    }
                }
            }
            let mut specs = Vec::with_capacity(pairs.len() * 2);
            for (i, &(a, b)) in pairs.iter().enumerate() {
                let fwd = (2 * i) as u32;
                let back = fwd + 1;
                for (id, from, to, opp) in [(fwd, a, b, back), (back, b, a, fwd)] {
                    specs.push(EdgeSpec {
                        id,
                        from,
                        to,
                        lane_count: lanes,
                        length_m: edge_length_m,
                        speed_limit_mps,
                        opposite_edge: Some(opp),
                    });
                }
            }
            RoadNetwork::from_parts(&nodes, &specs)
        }
    }
}
