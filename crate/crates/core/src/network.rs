//! Synthetic feeder corridor: a straight mainline starting at the terminus with
//! perpendicular dead-end side streets ("comb" layout), plus shortest-path and
//! walking-time queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

const TIME_EPS: f64 = 1e-9;

/// Corridor segment a node belongs to, by its position along the mainline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Segment {
    FixedRoute,
    Zone1,
    Zone2,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::FixedRoute, Segment::Zone1, Segment::Zone2];

    pub fn index(self) -> usize {
        match self {
            Segment::FixedRoute => 0,
            Segment::Zone1 => 1,
            Segment::Zone2 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Segment::FixedRoute => "fixed",
            Segment::Zone1 => "zone1",
            Segment::Zone2 => "zone2",
        }
    }
}

/// Geometry of the generated corridor. Lengths in meters, speeds in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorridorSpec {
    pub mainline_length: f64,
    /// Fixed-route portion, Zone 1, Zone 2; must sum to `mainline_length`.
    pub segment_lengths: [f64; 3],
    pub side_spacing: f64,
    pub side_depth: f64,
    pub side_node_spacing: f64,
    /// 1 = side streets on one side of the mainline, 2 = both sides.
    pub sides: u8,
    pub mainline_speed: f64,
    pub side_speed: f64,
}

impl Default for CorridorSpec {
    fn default() -> Self {
        Self {
            mainline_length: 5600.0,
            segment_lengths: [1200.0, 2200.0, 2200.0],
            side_spacing: 200.0,
            side_depth: 800.0,
            side_node_spacing: 100.0,
            sides: 2,
            mainline_speed: 10.0,
            side_speed: 5.0,
        }
    }
}

impl CorridorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mainline_length", self.mainline_length),
            ("side_spacing", self.side_spacing),
            ("side_node_spacing", self.side_node_spacing),
            ("mainline_speed", self.mainline_speed),
            ("side_speed", self.side_speed),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        for (i, &s) in self.segment_lengths.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Geometry(format!("segment {i} length must be positive, got {s}")));
            }
        }
        let sum: f64 = self.segment_lengths.iter().sum();
        if (sum - self.mainline_length).abs() > 1e-6 {
            return Err(Error::Geometry(format!(
                "segment lengths sum to {sum} but mainline length is {}",
                self.mainline_length
            )));
        }
        if !(self.side_depth.is_finite() && self.side_depth >= 0.0) {
            return Err(Error::Geometry(format!("side_depth must be >= 0, got {}", self.side_depth)));
        }
        if !(self.sides == 1 || self.sides == 2) {
            return Err(Error::Geometry(format!("sides must be 1 or 2, got {}", self.sides)));
        }
        Ok(())
    }

    /// Mainline position where each segment ends.
    pub fn boundaries(&self) -> [f64; 3] {
        let [a, b, c] = self.segment_lengths;
        [a, a + b, a + b + c]
    }

    pub fn segment_at(&self, x: f64) -> Segment {
        let [b1, b2, _] = self.boundaries();
        if x <= b1 + 1e-6 {
            Segment::FixedRoute
        } else if x <= b2 + 1e-6 {
            Segment::Zone1
        } else {
            Segment::Zone2
        }
    }

    fn mainline_positions(&self) -> Vec<f64> {
        let mut xs = Vec::new();
        let mut i = 0u64;
        loop {
            let x = i as f64 * self.side_spacing;
            if x > self.mainline_length + 1e-6 {
                break;
            }
            xs.push(x);
            i += 1;
        }
        let [b1, b2, b3] = self.boundaries();
        xs.extend([b1, b2, b3]);
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        xs
    }

    /// Mainline positions that carry a side street (multiples of the spacing, not the terminus).
    fn side_street_positions(&self) -> Vec<f64> {
        if self.side_depth <= 0.0 {
            return Vec::new();
        }
        let mut xs = Vec::new();
        let mut i = 1u64;
        loop {
            let x = i as f64 * self.side_spacing;
            if x > self.mainline_length + 1e-6 {
                break;
            }
            xs.push(x);
            i += 1;
        }
        xs
    }

    fn nodes_per_side_street(&self) -> usize {
        if self.side_depth <= 0.0 {
            0
        } else {
            (self.side_depth / self.side_node_spacing - 1e-9).ceil() as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub segment: Segment,
    pub mainline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub nodes: Vec<NodeId>,
    pub time: f64,
    pub distance: f64,
}

/// Immutable street network. Node 0 is the terminus.
#[derive(Debug, Clone)]
pub struct Network {
    spec: CorridorSpec,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    terminus: NodeId,
}

/// Build the comb corridor described by `spec`.
pub fn build_corridor(spec: &CorridorSpec) -> Result<Network> {
    spec.validate()?;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();

    let mainline = spec.mainline_positions();
    for &x in &mainline {
        nodes.push(Node { id: nodes.len(), x, y: 0.0, segment: spec.segment_at(x), mainline: true });
    }
    for w in 0..mainline.len() - 1 {
        let len = mainline[w + 1] - mainline[w];
        let time = len / spec.mainline_speed;
        edges.push(Edge { from: w, to: w + 1, length: len, time });
        edges.push(Edge { from: w + 1, to: w, length: len, time });
    }

    let per_street = spec.nodes_per_side_street();
    let signs: &[f64] = if spec.sides == 2 { &[1.0, -1.0] } else { &[1.0] };
    for x in spec.side_street_positions() {
        let root = mainline
            .iter()
            .position(|&m| (m - x).abs() < 1e-6)
            .expect("side street positions are mainline positions");
        for &sign in signs {
            let mut prev = root;
            let mut prev_depth = 0.0;
            for j in 1..=per_street {
                let depth = (j as f64 * spec.side_node_spacing).min(spec.side_depth);
                let id = nodes.len();
                nodes.push(Node { id, x, y: sign * depth, segment: spec.segment_at(x), mainline: false });
                let len = depth - prev_depth;
                let time = len / spec.side_speed;
                edges.push(Edge { from: prev, to: id, length: len, time });
                edges.push(Edge { from: id, to: prev, length: len, time });
                prev = id;
                prev_depth = depth;
            }
        }
    }

    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        adjacency[e.from].push(i);
    }
    Ok(Network { spec: spec.clone(), nodes, edges, adjacency, terminus: 0 })
}

#[derive(Clone, Copy)]
struct HeapEntry {
    time: f64,
    hops: usize,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // Reversed for a min-heap on (time, hops, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.hops.cmp(&self.hops))
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Single-source shortest-path tree: time, distance, hop count and predecessor per node.
#[derive(Debug, Clone)]
pub struct ShortestPathTree {
    pub time: Vec<f64>,
    pub distance: Vec<f64>,
    pub hops: Vec<usize>,
    pub pred: Vec<Option<NodeId>>,
}

impl Network {
    pub fn spec(&self) -> &CorridorSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn terminus(&self) -> NodeId {
        self.terminus
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn segment(&self, id: NodeId) -> Segment {
        self.nodes[id].segment
    }

    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.adjacency[id].iter().map(move |&e| &self.edges[e])
    }

    /// Mainline node ids ordered by distance from the terminus.
    pub fn mainline_nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.mainline).map(|n| n.id).collect()
    }

    /// Mainline node closest to mainline position `x`.
    pub fn mainline_node_near(&self, x: f64) -> NodeId {
        self.nodes
            .iter()
            .filter(|n| n.mainline)
            .min_by(|a, b| (a.x - x).abs().total_cmp(&(b.x - x).abs()).then(a.id.cmp(&b.id)))
            .map(|n| n.id)
            .expect("network has a mainline")
    }

    /// Euclidean distance from a node to the mainline polyline.
    pub fn distance_to_mainline(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id];
        let cx = n.x.clamp(0.0, self.spec.mainline_length);
        ((n.x - cx).powi(2) + n.y.powi(2)).sqrt()
    }

    /// Dijkstra from `source` with deterministic tie-breaking: lower time, then
    /// fewer hops, then lower predecessor id.
    pub fn shortest_path_tree(&self, source: NodeId) -> Result<ShortestPathTree> {
        self.node(source)?;
        let n = self.nodes.len();
        let mut tree = ShortestPathTree {
            time: vec![f64::INFINITY; n],
            distance: vec![f64::INFINITY; n],
            hops: vec![usize::MAX; n],
            pred: vec![None; n],
        };
        let mut done = vec![false; n];
        tree.time[source] = 0.0;
        tree.distance[source] = 0.0;
        tree.hops[source] = 0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry { time: 0.0, hops: 0, node: source });
        while let Some(HeapEntry { node, .. }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            for e in self.out_edges(node) {
                if done[e.to] {
                    continue;
                }
                let t = tree.time[node] + e.time;
                let h = tree.hops[node] + 1;
                let better = if t < tree.time[e.to] - TIME_EPS {
                    true
                } else if (t - tree.time[e.to]).abs() <= TIME_EPS {
                    h < tree.hops[e.to] || (h == tree.hops[e.to] && tree.pred[e.to].is_some_and(|p| node < p))
                } else {
                    false
                };
                if better {
                    tree.time[e.to] = t;
                    tree.distance[e.to] = tree.distance[node] + e.length;
                    tree.hops[e.to] = h;
                    tree.pred[e.to] = Some(node);
                    heap.push(HeapEntry { time: t, hops: h, node: e.to });
                }
            }
        }
        Ok(tree)
    }

    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<PathResult> {
        self.node(to)?;
        let tree = self.shortest_path_tree(from)?;
        let mut nodes = vec![to];
        let mut cur = to;
        while let Some(p) = tree.pred[cur] {
            nodes.push(p);
            cur = p;
        }
        nodes.reverse();
        Ok(PathResult { nodes, time: tree.time[to], distance: tree.distance[to] })
    }

    /// Straight-line walking time in seconds.
    pub fn walk_time(&self, from: NodeId, to: NodeId, walk_speed: f64) -> Result<f64> {
        let a = self.node(from)?;
        let b = self.node(to)?;
        Ok(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() / walk_speed)
    }

    pub fn write_csv(&self, nodes_path: &Path, edges_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(nodes_path)?;
        w.write_record(["id", "x", "y", "segment", "mainline"])?;
        for n in &self.nodes {
            w.write_record([
                n.id.to_string(),
                n.x.to_string(),
                n.y.to_string(),
                n.segment.name().to_string(),
                n.mainline.to_string(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(edges_path)?;
        w.write_record(["from", "to", "length_m", "time_s"])?;
        for e in &self.edges {
            w.write_record([e.from.to_string(), e.to.to_string(), e.length.to_string(), e.time.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Node and edge tables as CSV text (used by the service).
    pub fn to_csv_strings(&self) -> Result<(String, String)> {
        let mut nodes = csv::Writer::from_writer(Vec::new());
        nodes.write_record(["id", "x", "y", "segment", "mainline"])?;
        for n in &self.nodes {
            nodes.write_record([
                n.id.to_string(),
                n.x.to_string(),
                n.y.to_string(),
                n.segment.name().to_string(),
                n.mainline.to_string(),
            ])?;
        }
        let mut edges = csv::Writer::from_writer(Vec::new());
        edges.write_record(["from", "to", "length_m", "time_s"])?;
        for e in &self.edges {
            edges.write_record([e.from.to_string(), e.to.to_string(), e.length.to_string(), e.time.to_string()])?;
        }
        let into = |w: csv::Writer<Vec<u8>>| -> Result<String> {
            let mut buf = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            buf.flush()?;
            Ok(String::from_utf8(buf).expect("csv output is utf-8"))
        };
        Ok((into(nodes)?, into(edges)?))
    }
}

/// All-pairs shortest-path times, distances and predecessors, precomputed once
/// per network and shared read-only between worlds.
#[derive(Debug, Clone)]
pub struct TravelTable {
    n: usize,
    time: Vec<f64>,
    distance: Vec<f64>,
    pred: Vec<u32>,
}

impl TravelTable {
    pub fn new(net: &Network) -> Self {
        let n = net.node_count();
        let mut time = vec![0.0; n * n];
        let mut distance = vec![0.0; n * n];
        let mut pred = vec![u32::MAX; n * n];
        for s in 0..n {
            let tree = net.shortest_path_tree(s).expect("source exists");
            time[s * n..(s + 1) * n].copy_from_slice(&tree.time);
            distance[s * n..(s + 1) * n].copy_from_slice(&tree.distance);
            for (t, p) in tree.pred.iter().enumerate() {
                pred[s * n + t] = p.map_or(u32::MAX, |p| p as u32);
            }
        }
        Self { n, time, distance, pred }
    }

    #[inline]
    pub fn time(&self, a: NodeId, b: NodeId) -> f64 {
        self.time[a * self.n + b]
    }

    #[inline]
    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.distance[a * self.n + b]
    }

    pub fn path(&self, a: NodeId, b: NodeId) -> Vec<NodeId> {
        let mut nodes = vec![b];
        let mut cur = b;
        while cur != a {
            let p = self.pred[a * self.n + cur];
            debug_assert!(p != u32::MAX, "network is strongly connected");
            cur = p as usize;
            nodes.push(cur);
        }
        nodes.reverse();
        nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_net() -> Network {
        build_corridor(&CorridorSpec { side_depth: 300.0, ..CorridorSpec::default() }).unwrap()
    }

    #[test]
    fn default_corridor_segment_boundaries() {
        let net = default_net();
        let ml: Vec<_> = net.nodes().iter().filter(|n| n.mainline).collect();
        let last_fixed = ml.iter().filter(|n| n.segment == Segment::FixedRoute).map(|n| n.x).fold(0.0, f64::max);
        let first_z1 = ml.iter().filter(|n| n.segment == Segment::Zone1).map(|n| n.x).fold(f64::MAX, f64::min);
        let last_z1 = ml.iter().filter(|n| n.segment == Segment::Zone1).map(|n| n.x).fold(0.0, f64::max);
        let first_z2 = ml.iter().filter(|n| n.segment == Segment::Zone2).map(|n| n.x).fold(f64::MAX, f64::min);
        assert_eq!(last_fixed, 1200.0);
        assert!(first_z1 > 1200.0);
        assert_eq!(last_z1, 3400.0);
        assert!(first_z2 > 3400.0);
        assert_eq!(net.segment(net.terminus()), Segment::FixedRoute);
        assert_eq!(net.node(net.terminus()).unwrap().x, 0.0);
    }

    #[test]
    fn zero_depth_is_linear() {
        let net = build_corridor(&CorridorSpec { side_depth: 0.0, ..CorridorSpec::default() }).unwrap();
        assert!(net.nodes().iter().all(|n| n.mainline));
        assert_eq!(net.node_count(), 29);
    }

    #[test]
    fn node_count_matches_generator_loops() {
        for (spacing, depth, sns, sides) in [(200.0, 300.0, 100.0, 2u8), (400.0, 250.0, 100.0, 1), (350.0, 800.0, 120.0, 2)] {
            let spec = CorridorSpec {
                side_spacing: spacing,
                side_depth: depth,
                side_node_spacing: sns,
                sides,
                ..CorridorSpec::default()
            };
            let net = build_corridor(&spec).unwrap();
            // Count by walking the same loops the generator uses.
            let mut mainline = Vec::new();
            let mut x = 0.0;
            while x <= 5600.0 + 1e-6 {
                mainline.push(x);
                x += spacing;
            }
            for b in [1200.0, 3400.0, 5600.0] {
                if !mainline.iter().any(|&m: &f64| (m - b).abs() < 1e-6) {
                    mainline.push(b);
                }
            }
            let streets = ((5600.0f64 + 1e-6) / spacing).floor() as usize * sides as usize;
            let mut per_street = 0;
            let mut d = 0.0;
            while d < depth - 1e-9 {
                d += sns;
                per_street += 1;
            }
            assert_eq!(net.node_count(), mainline.len() + streets * per_street);
        }
    }

    #[test]
    fn rejects_invalid_geometry() {
        let bad = [
            CorridorSpec { mainline_length: -1.0, ..CorridorSpec::default() },
            CorridorSpec { segment_lengths: [1200.0, 2200.0, 2000.0], ..CorridorSpec::default() },
            CorridorSpec { mainline_speed: 0.0, ..CorridorSpec::default() },
            CorridorSpec { side_depth: -5.0, ..CorridorSpec::default() },
        ];
        for spec in bad {
            assert!(matches!(build_corridor(&spec), Err(Error::Geometry(_))));
        }
    }

    #[test]
    fn identity_path() {
        let net = default_net();
        let p = net.shortest_path(7, 7).unwrap();
        assert_eq!(p.nodes, vec![7]);
        assert_eq!(p.time, 0.0);
        assert_eq!(p.distance, 0.0);
    }

    #[test]
    fn single_edge_path() {
        let spec = CorridorSpec { side_depth: 0.0, mainline_speed: 10.0, ..CorridorSpec::default() };
        let net = build_corridor(&spec).unwrap();
        let p = net.shortest_path(0, 1).unwrap();
        assert_eq!(p.nodes, vec![0, 1]);
        assert!((p.time - 20.0).abs() < 1e-12);
        assert!((p.distance - 200.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_node_is_error() {
        let net = default_net();
        let n = net.node_count();
        assert!(matches!(net.shortest_path(0, n), Err(Error::UnknownNode(_))));
        assert!(matches!(net.walk_time(n, 0, 1.25), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn walk_time_arithmetic() {
        let spec = CorridorSpec { side_depth: 0.0, side_spacing: 100.0, ..CorridorSpec::default() };
        let net = build_corridor(&spec).unwrap();
        assert_eq!(net.walk_time(3, 3, 1.25).unwrap(), 0.0);
        assert!((net.walk_time(0, 1, 1.25).unwrap() - 80.0).abs() < 1e-12);
    }

    #[test]
    fn walk_time_symmetric_and_triangle() {
        let spec = CorridorSpec { side_spacing: 1400.0, side_depth: 300.0, ..CorridorSpec::default() };
        let net = build_corridor(&spec).unwrap();
        let n = net.node_count();
        let w = |a, b| net.walk_time(a, b, 1.25).unwrap();
        for a in 0..n {
            for b in 0..n {
                assert!((w(a, b) - w(b, a)).abs() < 1e-12);
                for c in 0..n {
                    assert!(w(a, c) <= w(a, b) + w(b, c) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn table_matches_paths() {
        let net = default_net();
        let table = TravelTable::new(&net);
        for (a, b) in [(0, 50), (13, 2), (40, 77)] {
            let p = net.shortest_path(a, b).unwrap();
            assert_eq!(table.path(a, b), p.nodes);
            assert!((table.time(a, b) - p.time).abs() < 1e-12);
            assert!((table.distance(a, b) - p.distance).abs() < 1e-12);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = default_net();
        let b = default_net();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.to_csv_strings().unwrap(), b.to_csv_strings().unwrap());
    }
}
