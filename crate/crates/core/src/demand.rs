//! Seeded synthetic feeder demand and the analytic demand forecast.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, NodeId, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RequestState {
    Pending,
    Assigned,
    Riding,
    Served,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Terminus to the corridor.
    Outbound,
    /// Corridor to the terminus.
    Inbound,
}

/// A feeder trip request. Exactly one endpoint is the terminus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: usize,
    /// Seconds from simulation start.
    pub request_time: f64,
    pub origin: NodeId,
    pub destination: NodeId,
    pub origin_segment: Segment,
    pub destination_segment: Segment,
    pub state: RequestState,
    /// Stop node where the passenger boards (after walking to a fixed stop, if any).
    pub pickup_node: NodeId,
    /// Stop node where the passenger alights.
    pub dropoff_node: NodeId,
    /// Walking time between the true endpoint and the stop, seconds.
    pub access_time: f64,
    /// Shortest-path time between pickup and dropoff stops.
    pub direct_time: f64,
    /// Served entirely at fixed stops (no door-to-door leg).
    pub fixed_stop_service: bool,
    pub vehicle: Option<usize>,
    pub assigned_at: Option<f64>,
    pub pickup_time: Option<f64>,
    pub dropoff_time: Option<f64>,
    pub rejected_at: Option<f64>,
}

impl Request {
    pub fn new(id: usize, request_time: f64, origin: NodeId, destination: NodeId, net: &Network) -> Self {
        Self {
            id,
            request_time,
            origin,
            destination,
            origin_segment: net.segment(origin),
            destination_segment: net.segment(destination),
            state: RequestState::Pending,
            pickup_node: origin,
            dropoff_node: destination,
            access_time: 0.0,
            direct_time: 0.0,
            fixed_stop_service: false,
            vehicle: None,
            assigned_at: None,
            pickup_time: None,
            dropoff_time: None,
            rejected_at: None,
        }
    }

    pub fn direction(&self, terminus: NodeId) -> Direction {
        if self.origin == terminus {
            Direction::Outbound
        } else {
            Direction::Inbound
        }
    }

    /// The endpoint that is not the terminus.
    pub fn corridor_endpoint(&self, terminus: NodeId) -> NodeId {
        if self.origin == terminus {
            self.destination
        } else {
            self.origin
        }
    }

    /// Segment of the non-terminus endpoint.
    pub fn corridor_segment(&self, terminus: NodeId) -> Segment {
        if self.origin == terminus {
            self.destination_segment
        } else {
            self.origin_segment
        }
    }

    pub fn wait_time(&self) -> Option<f64> {
        self.pickup_time.map(|p| p - self.request_time)
    }

    pub fn ride_time(&self) -> Option<f64> {
        match (self.pickup_time, self.dropoff_time) {
            (Some(p), Some(d)) => Some(d - p),
            _ => None,
        }
    }

    pub fn assign(&mut self, vehicle: usize, now: f64) {
        debug_assert_eq!(self.state, RequestState::Pending);
        self.state = RequestState::Assigned;
        self.vehicle = Some(vehicle);
        self.assigned_at = Some(now);
    }

    pub fn board(&mut self, at: f64) {
        debug_assert_eq!(self.state, RequestState::Assigned);
        debug_assert!(at >= self.request_time);
        self.state = RequestState::Riding;
        self.pickup_time = Some(at);
    }

    pub fn alight(&mut self, at: f64) {
        debug_assert_eq!(self.state, RequestState::Riding);
        self.state = RequestState::Served;
        self.dropoff_time = Some(at);
    }

    pub fn reject(&mut self, at: f64) {
        debug_assert_eq!(self.state, RequestState::Pending);
        self.state = RequestState::Rejected;
        self.rejected_at = Some(at);
    }
}

/// Time-varying request rate and endpoint weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandProfile {
    /// Requests per hour at the start of the horizon.
    pub base_rate: f64,
    /// Requests per hour at the end of the horizon.
    pub end_rate: f64,
    /// Fraction of requests that depart from the terminus.
    pub direction_split: f64,
    /// Walking time beyond which an endpoint generates no demand, seconds.
    pub walk_cap: f64,
    /// Walking speed, m/s.
    pub walk_speed: f64,
}

impl Default for DemandProfile {
    fn default() -> Self {
        Self { base_rate: 80.0, end_rate: 30.0, direction_split: 0.5, walk_cap: 600.0, walk_speed: 1.25 }
    }
}

impl DemandProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_rate >= 0.0 && self.end_rate >= 0.0) {
            return Err(Error::Scenario("demand rates must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.direction_split) {
            return Err(Error::Scenario("direction split must be in [0, 1]".into()));
        }
        if !(self.walk_cap > 0.0 && self.walk_speed > 0.0) {
            return Err(Error::Scenario("walk cap and walk speed must be > 0".into()));
        }
        Ok(())
    }

    /// Requests per hour at time `t` of a horizon of length `horizon`.
    pub fn rate_at(&self, t: f64, horizon: f64) -> f64 {
        let f = (t / horizon).clamp(0.0, 1.0);
        self.base_rate + (self.end_rate - self.base_rate) * f
    }

    /// Expected number of requests in `[from, to]`, clipped to the horizon.
    pub fn expected_count(&self, from: f64, to: f64, horizon: f64) -> f64 {
        let a = from.clamp(0.0, horizon);
        let b = to.clamp(0.0, horizon);
        if b <= a {
            return 0.0;
        }
        0.5 * (self.rate_at(a, horizon) + self.rate_at(b, horizon)) * (b - a) / 3600.0
    }
}

/// Endpoint sampling weights `max(0, 1 - walk/cap)` over all non-terminus
/// nodes, where `walk` is the walking time to the nearest mainline point.
#[derive(Debug, Clone)]
pub struct EndpointWeights {
    pub nodes: Vec<NodeId>,
    pub weights: Vec<f64>,
    /// Share of total weight per segment, indexed by `Segment::index`.
    pub segment_shares: [f64; 3],
}

impl EndpointWeights {
    pub fn new(net: &Network, profile: &DemandProfile) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut by_segment = [0.0; 3];
        for n in net.nodes() {
            if n.id == net.terminus() {
                continue;
            }
            let walk = net.distance_to_mainline(n.id) / profile.walk_speed;
            let w = (1.0 - walk / profile.walk_cap).max(0.0);
            if w > 0.0 {
                nodes.push(n.id);
                weights.push(w);
                by_segment[n.segment.index()] += w;
            }
        }
        let total: f64 = by_segment.iter().sum();
        let segment_shares = if total > 0.0 { by_segment.map(|w| w / total) } else { [0.0; 3] };
        Self { nodes, weights, segment_shares }
    }

    /// Probability of sampling each node in `nodes`.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }
}

/// Draw one demand instance: an inhomogeneous Poisson arrival stream with a
/// linearly interpolated rate, sorted by request time.
pub fn generate_instance(net: &Network, profile: &DemandProfile, horizon: f64, seed: u64) -> Vec<Request> {
    let weights = EndpointWeights::new(net, profile);
    generate_with_weights(net, profile, &weights, horizon, seed)
}

pub fn generate_with_weights(
    net: &Network,
    profile: &DemandProfile,
    weights: &EndpointWeights,
    horizon: f64,
    seed: u64,
) -> Vec<Request> {
    let peak = profile.base_rate.max(profile.end_rate);
    if peak <= 0.0 || horizon <= 0.0 || weights.nodes.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(peak / 3600.0).expect("positive rate");
    let endpoint = WeightedIndex::new(&weights.weights).expect("positive weights");
    let terminus = net.terminus();
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(&mut rng);
        if t >= horizon {
            break;
        }
        // Thinning down to the instantaneous rate.
        if rng.random::<f64>() * peak > profile.rate_at(t, horizon) {
            continue;
        }
        let outbound = rng.random::<f64>() < profile.direction_split;
        let node = weights.nodes[endpoint.sample(&mut rng)];
        let (o, d) = if outbound { (terminus, node) } else { (node, terminus) };
        out.push(Request::new(out.len(), t, o, d, net));
    }
    out
}

/// Which part of the corridor a forecast covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastScope {
    All,
    Segment(Segment),
}

/// Expected request count in `[now, now + window]` from the generator mean.
pub fn forecast_demand(
    profile: &DemandProfile,
    weights: &EndpointWeights,
    horizon: f64,
    now: f64,
    window: f64,
    scope: ForecastScope,
) -> f64 {
    if now >= horizon {
        return 0.0;
    }
    let total = profile.expected_count(now, now + window, horizon);
    match scope {
        ForecastScope::All => total,
        ForecastScope::Segment(s) => total * weights.segment_shares[s.index()],
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestRow {
    id: usize,
    t_r: f64,
    origin: NodeId,
    destination: NodeId,
}

pub fn write_requests_csv<W: std::io::Write>(requests: &[Request], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in requests {
        w.serialize(RequestRow { id: r.id, t_r: r.request_time, origin: r.origin, destination: r.destination })?;
    }
    w.flush()?;
    Ok(())
}

pub fn requests_to_csv_string(requests: &[Request]) -> Result<String> {
    let mut buf = Vec::new();
    write_requests_csv(requests, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn read_requests_csv<R: std::io::Read>(net: &Network, input: R) -> Result<Vec<Request>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: RequestRow = row?;
        net.node(row.origin)?;
        net.node(row.destination)?;
        out.push(Request::new(row.id, row.t_r, row.origin, row.destination, net));
    }
    out.sort_by(|a, b| a.request_time.total_cmp(&b.request_time).then(a.id.cmp(&b.id)));
    Ok(out)
}

pub fn load_requests_csv(net: &Network, path: &Path) -> Result<Vec<Request>> {
    read_requests_csv(net, std::fs::File::open(path)?)
}
