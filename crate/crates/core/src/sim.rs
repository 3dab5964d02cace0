//! Fixed-step world simulation: vehicles follow their schedules along
//! shortest paths, passengers board and alight, and every request and vehicle
//! is accounted for.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::demand::{Request, RequestState};
use crate::dispatch::DispatchSource;
use crate::error::{Error, Result};
use crate::matching::{CostCoefficients, FeasibilityLimits, InsertionCandidate, zone_compatible};
use crate::network::{Network, NodeId, Segment, TravelTable};
use crate::schedule::{Anchor, DwellParams, EvalContext, Stop, StopKind, VehicleSchedule, evaluate};

/// Zone a vehicle serves during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZoneAssignment {
    All,
    Zone1,
    Zone2,
}

impl ZoneAssignment {
    pub const ALL: [ZoneAssignment; 3] = [ZoneAssignment::All, ZoneAssignment::Zone1, ZoneAssignment::Zone2];

    pub fn index(self) -> usize {
        match self {
            ZoneAssignment::All => 0,
            ZoneAssignment::Zone1 => 1,
            ZoneAssignment::Zone2 => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Whether door-to-door stops in `segment` are allowed.
    pub fn serves(self, segment: Segment) -> bool {
        zone_compatible(segment, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FleetClass {
    Reserved,
    Controllable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleStatus {
    AtTerminus,
    Boarding,
    EnRoute,
}

/// How the corridor is served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServiceMode {
    /// Fixed stops on the fixed portion, door-to-door in the flexible zones.
    SemiOnDemand,
    /// Fixed stops along the whole mainline, no door-to-door service.
    FixedRoute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub step: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub boarding_time: f64,
    pub limits: FeasibilityLimits,
    pub coeffs: CostCoefficients,
    pub dwell: DwellParams,
    /// Spacing of the fixed stops on the fixed-route portion.
    pub fixed_stop_spacing: f64,
    /// Extra stop spacing beyond the fixed portion when running as a fixed
    /// route; `None` keeps only the fixed-portion stops.
    pub fixed_route_flex_spacing: Option<f64>,
    pub walk_speed: f64,
    pub walk_cap: f64,
    pub service: ServiceMode,
    pub fleet_size: usize,
    pub reserved: usize,
    pub log_events: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            step: 60.0,
            horizon: 10800.0,
            warmup: 3600.0,
            boarding_time: 300.0,
            limits: FeasibilityLimits::default(),
            coeffs: CostCoefficients::default(),
            dwell: DwellParams::default(),
            fixed_stop_spacing: 400.0,
            fixed_route_flex_spacing: None,
            walk_speed: 1.25,
            walk_cap: 600.0,
            service: ServiceMode::SemiOnDemand,
            fleet_size: 8,
            reserved: 4,
            log_events: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Leg {
    nodes: Vec<NodeId>,
    cum_time: Vec<f64>,
    cum_dist: Vec<f64>,
    start: f64,
    /// Distance already added to the odometer.
    accounted: f64,
}

impl Leg {
    fn new(table: &TravelTable, from: NodeId, to: NodeId, start: f64) -> Self {
        let nodes = table.path(from, to);
        let mut cum_time = vec![0.0];
        let mut cum_dist = vec![0.0];
        for w in nodes.windows(2) {
            cum_time.push(cum_time.last().unwrap() + table.time(w[0], w[1]));
            cum_dist.push(cum_dist.last().unwrap() + table.distance(w[0], w[1]));
        }
        Self { nodes, cum_time, cum_dist, start, accounted: 0.0 }
    }

    fn arrival(&self) -> f64 {
        self.start + self.cum_time.last().unwrap()
    }

    fn total_distance(&self) -> f64 {
        *self.cum_dist.last().unwrap()
    }

    /// Distance covered and last node passed after `elapsed` seconds.
    fn progress(&self, elapsed: f64) -> (f64, NodeId) {
        let k = self.cum_time.partition_point(|&t| t <= elapsed).max(1) - 1;
        if k + 1 >= self.nodes.len() {
            return (self.total_distance(), *self.nodes.last().unwrap());
        }
        let span = self.cum_time[k + 1] - self.cum_time[k];
        let f = if span > 0.0 { (elapsed - self.cum_time[k]) / span } else { 1.0 };
        (self.cum_dist[k] + f * (self.cum_dist[k + 1] - self.cum_dist[k]), self.nodes[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub class: FleetClass,
    pub status: VehicleStatus,
    pub zone: ZoneAssignment,
    pub schedule: VehicleSchedule,
    pub onboard: Vec<usize>,
    /// Index of the next stop to visit.
    pub next_stop: usize,
    /// Last node reached.
    pub position: NodeId,
    leg: Option<Leg>,
    pub depart_at: f64,
    pub dwell_until: f64,
    pub dispatched_at: Option<f64>,
    pub window_start: Option<f64>,
    /// Odometer, meters.
    pub distance: f64,
    /// Time spent dispatched, seconds.
    pub deployed_time: f64,
    pub distance_after_warmup: f64,
    pub deployed_after_warmup: f64,
    pub cycles: usize,
    /// Durations of completed cycles (dispatch to terminus return), seconds.
    pub cycle_times: Vec<(ZoneAssignment, f64)>,
    /// Door-to-door stops actually made.
    pub flexible_stops_made: usize,
}

impl Vehicle {
    pub fn new(id: usize, class: FleetClass, terminus: NodeId) -> Self {
        Self {
            id,
            class,
            status: VehicleStatus::AtTerminus,
            zone: ZoneAssignment::All,
            schedule: VehicleSchedule::empty(),
            onboard: Vec::new(),
            next_stop: 0,
            position: terminus,
            leg: None,
            depart_at: 0.0,
            dwell_until: 0.0,
            dispatched_at: None,
            window_start: None,
            distance: 0.0,
            deployed_time: 0.0,
            distance_after_warmup: 0.0,
            deployed_after_warmup: 0.0,
            cycles: 0,
            cycle_times: Vec::new(),
            flexible_stops_made: 0,
        }
    }

    pub fn is_driving(&self) -> bool {
        self.leg.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Dispatch,
    Depart,
    Arrive,
    Assign,
    Board,
    Alight,
    Reject,
    CycleComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub time: f64,
    pub vehicle: Option<usize>,
    pub kind: EventKind,
    pub node: Option<NodeId>,
    pub request: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub step: usize,
    pub time: f64,
    pub vehicle: usize,
    pub source: DispatchSource,
    pub zone: ZoneAssignment,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub boardings: usize,
    pub alightings: usize,
    pub arrivals: usize,
    pub completed_cycles: Vec<usize>,
    /// Constraint breaches discovered while executing schedules.
    pub infeasibilities: Vec<String>,
}

impl StepReport {
    pub fn is_empty(&self) -> bool {
        self.boardings == 0 && self.alightings == 0 && self.arrivals == 0 && self.completed_cycles.is_empty()
    }
}

/// Stop nodes used to build cycle skeletons.
#[derive(Debug, Clone, PartialEq)]
pub struct StopLayout {
    /// Fixed stops on the fixed-route portion, terminus excluded, outbound order.
    pub fixed_stops: Vec<NodeId>,
    /// Stops for fixed-route operation, terminus and the far end excluded,
    /// outbound order.
    pub fixed_route_stops: Vec<NodeId>,
    /// Mainline end node.
    pub far_end: NodeId,
    /// Fixed-route vehicles serve passengers at the far end.
    pub far_end_is_stop: bool,
    /// Turnaround node per zone assignment.
    pub turnaround: [NodeId; 3],
}

impl StopLayout {
    pub fn new(net: &Network, cfg: &WorldConfig) -> Self {
        let spec = net.spec();
        let [b1, b2, b3] = spec.boundaries();
        let mut fixed_stops = Vec::new();
        let mut k = 1;
        while k as f64 * cfg.fixed_stop_spacing <= b1 + 1e-6 {
            fixed_stops.push(net.mainline_node_near(k as f64 * cfg.fixed_stop_spacing));
            k += 1;
        }
        let last_fixed = net.mainline_node_near(b1);
        if fixed_stops.last() != Some(&last_fixed) {
            fixed_stops.push(last_fixed);
        }
        let far_end = net.mainline_node_near(b3);
        // Fixed-route operation keeps the fixed-portion stops and continues
        // with its own spacing up to (not including) the far end.
        let mut fixed_route_stops = fixed_stops.clone();
        if let Some(spacing) = cfg.fixed_route_flex_spacing {
            let mut k = 1;
            while b1 + (k as f64) * spacing < b3 - 1e-6 {
                let n = net.mainline_node_near(b1 + k as f64 * spacing);
                if fixed_route_stops.last() != Some(&n) && n != far_end {
                    fixed_route_stops.push(n);
                }
                k += 1;
            }
        }
        let zone1_end = net.mainline_node_near(b2);
        let far_end_is_stop = cfg.fixed_route_flex_spacing.is_some();
        Self { fixed_stops, fixed_route_stops, far_end, far_end_is_stop, turnaround: [far_end, zone1_end, far_end] }
    }

    /// Fixed stops a passenger may walk to (terminus excluded).
    pub fn walk_targets(&self, service: ServiceMode) -> Vec<NodeId> {
        match service {
            ServiceMode::SemiOnDemand => self.fixed_stops.clone(),
            ServiceMode::FixedRoute => {
                let mut v = self.fixed_route_stops.clone();
                if self.far_end_is_stop {
                    v.push(self.far_end);
                }
                v
            }
        }
    }
}

/// One simulated corridor: network, fleet, demand instance and clock.
#[derive(Debug, Clone)]
pub struct World {
    pub net: Arc<Network>,
    pub table: Arc<TravelTable>,
    pub config: WorldConfig,
    pub layout: StopLayout,
    pub requests: Vec<Request>,
    pub vehicles: Vec<Vehicle>,
    /// Revealed, unassigned requests in request-time order.
    pub pending: Vec<usize>,
    /// Requests that cannot be served at all (beyond walking range of any stop).
    pub unservable: Vec<bool>,
    pub step_index: usize,
    next_reveal: usize,
    pub rejections: usize,
    /// Last departure time from the terminus per zone assignment.
    pub last_departure: [Option<f64>; 3],
    pub dispatch_log: Vec<DispatchRecord>,
    pub events: Vec<Event>,
}

impl World {
    pub fn new(net: Arc<Network>, table: Arc<TravelTable>, config: WorldConfig, mut requests: Vec<Request>) -> Self {
        let layout = StopLayout::new(&net, &config);
        let terminus = net.terminus();
        let targets = layout.walk_targets(config.service);
        let mut unservable = vec![false; requests.len()];
        for (i, r) in requests.iter_mut().enumerate() {
            debug_assert_eq!(r.id, i, "request ids are indices");
            let endpoint = r.corridor_endpoint(terminus);
            let walk_to_stop = || {
                targets
                    .iter()
                    .map(|&s| (net.walk_time(endpoint, s, config.walk_speed).expect("valid node"), s))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .expect("at least one fixed stop")
            };
            let (service_node, access, fixed) = match config.service {
                ServiceMode::FixedRoute => {
                    let (walk, stop) = walk_to_stop();
                    if walk > config.walk_cap {
                        unservable[i] = true;
                    }
                    (stop, walk, true)
                }
                ServiceMode::SemiOnDemand => {
                    if net.segment(endpoint) == Segment::FixedRoute {
                        let (walk, stop) = walk_to_stop();
                        (stop, walk, true)
                    } else {
                        (endpoint, 0.0, false)
                    }
                }
            };
            if r.origin == terminus {
                r.dropoff_node = service_node;
                r.pickup_node = terminus;
            } else {
                r.pickup_node = service_node;
                r.dropoff_node = terminus;
            }
            r.access_time = access;
            r.fixed_stop_service = fixed;
            r.direct_time = table.time(r.pickup_node, r.dropoff_node);
        }
        let vehicles = (0..config.fleet_size)
            .map(|i| {
                let class = if i < config.reserved { FleetClass::Reserved } else { FleetClass::Controllable };
                Vehicle::new(i, class, terminus)
            })
            .collect();
        Self {
            net,
            table,
            config,
            layout,
            requests,
            vehicles,
            pending: Vec::new(),
            unservable,
            step_index: 0,
            next_reveal: 0,
            rejections: 0,
            last_departure: [None; 3],
            dispatch_log: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.step_index as f64 * self.config.step
    }

    pub fn total_steps(&self) -> usize {
        (self.config.horizon / self.config.step).round() as usize
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.total_steps()
    }

    pub fn eval_context(&self) -> EvalContext<'_> {
        EvalContext {
            table: &self.table,
            requests: &self.requests,
            limits: &self.config.limits,
            dwell: &self.config.dwell,
        }
    }

    /// Service area of a request: segment of its corridor endpoint.
    pub fn request_area(&self, rid: usize) -> Segment {
        let r = &self.requests[rid];
        if r.fixed_stop_service && self.config.service == ServiceMode::SemiOnDemand {
            Segment::FixedRoute
        } else {
            r.corridor_segment(self.net.terminus())
        }
    }

    pub fn anchor(&self, vid: usize) -> Anchor {
        let v = &self.vehicles[vid];
        let base = Anchor {
            first: v.next_stop,
            node: v.position,
            time: self.now(),
            locked: false,
            onboard: v.onboard.len(),
            window_start: v.window_start,
            boarded_now: None,
        };
        match v.status {
            VehicleStatus::AtTerminus => Anchor { first: 0, ..base },
            VehicleStatus::Boarding => Anchor { first: 1, node: self.net.terminus(), time: v.depart_at, ..base },
            VehicleStatus::EnRoute => match &v.leg {
                Some(leg) => Anchor {
                    node: v.schedule.stops[v.next_stop].node,
                    time: leg.arrival(),
                    locked: true,
                    ..base
                },
                None => Anchor {
                    node: v.schedule.stops[v.next_stop - 1].node,
                    time: v.dwell_until,
                    ..base
                },
            },
        }
    }

    fn log(&mut self, vehicle: Option<usize>, kind: EventKind, node: Option<NodeId>, request: Option<usize>, time: f64) {
        if self.config.log_events {
            self.events.push(Event { step: self.step_index, time, vehicle, kind, node, request });
        }
    }

    /// Move newly requested trips into the pending list; trips nobody can serve
    /// are rejected on arrival.
    pub fn reveal_requests(&mut self, rejected: &mut Vec<usize>) {
        let now = self.now();
        while self.next_reveal < self.requests.len() && self.requests[self.next_reveal].request_time <= now {
            let rid = self.next_reveal;
            self.next_reveal += 1;
            if self.unservable[rid] {
                self.reject(rid);
                rejected.push(rid);
            } else {
                self.pending.push(rid);
            }
        }
    }

    pub fn revealed_count(&self) -> usize {
        self.next_reveal
    }

    pub fn reject(&mut self, rid: usize) {
        let now = self.now();
        self.requests[rid].reject(now);
        self.rejections += 1;
        self.log(None, EventKind::Reject, None, Some(rid), now);
    }

    /// Commit a chosen insertion.
    pub fn apply_insertion(&mut self, rid: usize, cand: InsertionCandidate) {
        let now = self.now();
        let vid = cand.vehicle;
        assert!(
            zone_compatible(self.request_area(rid), self.vehicles[vid].zone),
            "assignment violates zone compatibility"
        );
        self.vehicles[vid].schedule.stops = cand.stops;
        self.requests[rid].assign(vid, now);
        self.log(Some(vid), EventKind::Assign, None, Some(rid), now);
        if cand.board_now {
            self.requests[rid].board(now);
            self.vehicles[vid].onboard.push(rid);
            self.log(Some(vid), EventKind::Board, Some(self.net.terminus()), Some(rid), now);
        }
        self.refresh_planned(vid);
    }

    fn refresh_planned(&mut self, vid: usize) {
        let anchor = self.anchor(vid);
        let v = &self.vehicles[vid];
        let ev = evaluate(&v.schedule.stops, v.schedule.flexible, &anchor, &self.eval_context());
        if let Ok(ev) = ev {
            let v = &mut self.vehicles[vid];
            for (s, a) in v.schedule.stops.iter_mut().zip(ev.arrivals) {
                if !a.is_nan() {
                    s.planned_arrival = a;
                }
            }
        }
    }

    /// Cycle skeleton for a vehicle leaving now with zone assignment `zone`.
    pub fn skeleton(&self, zone: ZoneAssignment) -> VehicleSchedule {
        let terminus = self.net.terminus();
        let mut stops = vec![Stop::new(terminus, StopKind::Terminus)];
        let (outbound, turn, flexible) = match self.config.service {
            ServiceMode::SemiOnDemand => (&self.layout.fixed_stops, self.layout.turnaround[zone.index()], true),
            ServiceMode::FixedRoute => (&self.layout.fixed_route_stops, self.layout.far_end, false),
        };
        stops.extend(outbound.iter().map(|&n| Stop::new(n, StopKind::FixedStop)));
        stops.push(Stop::new(turn, StopKind::Turnaround));
        stops.extend(outbound.iter().rev().map(|&n| Stop::new(n, StopKind::FixedStop)));
        stops.push(Stop::new(terminus, StopKind::Terminus));
        VehicleSchedule { stops, flexible }
    }

    /// Start boarding at the terminus; the vehicle leaves after the boarding time.
    pub fn dispatch_vehicle(&mut self, vid: usize, zone: ZoneAssignment, source: DispatchSource) -> Result<&VehicleSchedule> {
        if self.vehicles.get(vid).is_none_or(|v| v.status != VehicleStatus::AtTerminus) {
            return Err(Error::VehicleUnavailable(vid));
        }
        let now = self.now();
        let skeleton = self.skeleton(zone);
        let v = &mut self.vehicles[vid];
        v.schedule = skeleton;
        v.zone = zone;
        v.status = VehicleStatus::Boarding;
        v.depart_at = now + self.config.boarding_time;
        v.dispatched_at = Some(now);
        v.next_stop = 0;
        v.window_start = None;
        v.leg = None;
        v.position = self.net.terminus();
        v.schedule.stops[0].planned_arrival = now;
        self.last_departure[zone.index()] = Some(now);
        self.dispatch_log.push(DispatchRecord { step: self.step_index, time: now, vehicle: vid, source, zone });
        self.log(Some(vid), EventKind::Dispatch, Some(self.net.terminus()), None, now);
        self.refresh_planned(vid);
        Ok(&self.vehicles[vid].schedule)
    }

    /// Vehicles idle at the terminus, optionally restricted to one fleet class.
    pub fn available(&self, class: Option<FleetClass>) -> Vec<usize> {
        self.vehicles
            .iter()
            .filter(|v| v.status == VehicleStatus::AtTerminus && class.is_none_or(|c| v.class == c))
            .map(|v| v.id)
            .collect()
    }

    /// Worst-case duration from dispatch to terminus return.
    pub fn cycle_time_bound(&self, zone: ZoneAssignment) -> f64 {
        let sk = self.skeleton(zone);
        let max_dwell = self.config.dwell.base + self.config.dwell.per_passenger * 2.0 * self.config.limits.capacity as f64;
        let mut total = self.config.boarding_time;
        match self.config.service {
            ServiceMode::SemiOnDemand => {
                let (a, b) = VehicleSchedule::flex_bounds(&sk.stops).expect("skeleton has a turnaround");
                for w in sk.stops[..=a].windows(2).chain(sk.stops[b..].windows(2)) {
                    total += self.table.time(w[0].node, w[1].node);
                }
                let fixed = sk.stops.iter().filter(|s| s.kind == StopKind::FixedStop).count();
                total += fixed as f64 * max_dwell + self.config.limits.flex_window;
            }
            ServiceMode::FixedRoute => {
                for w in sk.stops.windows(2) {
                    total += self.table.time(w[0].node, w[1].node);
                }
                let stops = sk.stops.iter().filter(|s| s.kind != StopKind::Terminus).count();
                total += stops as f64 * max_dwell;
            }
        }
        total
    }

    /// Round trip of an empty vehicle that uses its whole flexible window.
    pub fn nominal_cycle_time(&self, zone: ZoneAssignment) -> f64 {
        let sk = self.skeleton(zone);
        let fixed = sk.stops.iter().filter(|s| s.kind == StopKind::FixedStop).count() as f64;
        let mut total = self.config.boarding_time + fixed * self.config.dwell.base;
        match VehicleSchedule::flex_bounds(&sk.stops) {
            Some((a, b)) if sk.flexible => {
                for w in sk.stops[..=a].windows(2).chain(sk.stops[b..].windows(2)) {
                    total += self.table.time(w[0].node, w[1].node);
                }
                total + self.config.limits.flex_window
            }
            _ => total + sk.stops.windows(2).map(|w| self.table.time(w[0].node, w[1].node)).sum::<f64>(),
        }
    }

    /// Advance all vehicles by one step.
    pub fn advance_step(&mut self) -> Result<StepReport> {
        if self.is_done() {
            return Err(Error::PastHorizon);
        }
        let start = self.now();
        let end = start + self.config.step;
        let mut report = StepReport::default();
        for vid in 0..self.vehicles.len() {
            self.advance_vehicle(vid, start, end, &mut report);
        }
        self.step_index += 1;
        Ok(report)
    }

    fn accrue(&mut self, vid: usize, from: f64, to: f64, distance: f64) {
        let warmup = self.config.warmup;
        let v = &mut self.vehicles[vid];
        if to > from {
            v.deployed_time += to - from;
            v.deployed_after_warmup += (to - from.max(warmup)).max(0.0);
        }
        if distance > 0.0 {
            v.distance += distance;
            // Distance is attributed by the time it is driven; legs crossing the
            // cutoff are split proportionally.
            let frac = if to > from { ((to - from.max(warmup)) / (to - from)).clamp(0.0, 1.0) } else if from >= warmup { 1.0 } else { 0.0 };
            v.distance_after_warmup += distance * frac;
        }
    }

    fn advance_vehicle(&mut self, vid: usize, start: f64, end: f64, report: &mut StepReport) {
        let mut t = start;
        loop {
            let status = self.vehicles[vid].status;
            match status {
                VehicleStatus::AtTerminus => break,
                VehicleStatus::Boarding => {
                    let depart = self.vehicles[vid].depart_at;
                    if depart > end {
                        self.accrue(vid, t, end, 0.0);
                        break;
                    }
                    self.accrue(vid, t, depart, 0.0);
                    t = depart;
                    let terminus = self.net.terminus();
                    self.log(Some(vid), EventKind::Depart, Some(terminus), None, t);
                    let v = &mut self.vehicles[vid];
                    v.status = VehicleStatus::EnRoute;
                    v.next_stop = 1;
                    let next = v.schedule.stops[1].node;
                    v.leg = Some(Leg::new(&self.table, terminus, next, t));
                }
                VehicleStatus::EnRoute => {
                    if self.vehicles[vid].leg.is_some() {
                        let (arrival, seg_dist, reached) = {
                            let leg = self.vehicles[vid].leg.as_mut().unwrap();
                            let arrival = leg.arrival();
                            let upto = arrival.min(end);
                            let (d, node) = leg.progress(upto - leg.start);
                            let seg = d - leg.accounted;
                            leg.accounted = d;
                            (arrival, seg, node)
                        };
                        self.vehicles[vid].position = reached;
                        if arrival > end {
                            self.accrue(vid, t, end, seg_dist);
                            break;
                        }
                        self.accrue(vid, t, arrival, seg_dist);
                        t = arrival;
                        self.arrive(vid, t, report);
                    } else {
                        let until = self.vehicles[vid].dwell_until;
                        if until > end {
                            self.accrue(vid, t, end, 0.0);
                            break;
                        }
                        self.accrue(vid, t, until, 0.0);
                        t = until;
                        let v = &mut self.vehicles[vid];
                        let from = v.schedule.stops[v.next_stop - 1].node;
                        if let Some((a, _)) = VehicleSchedule::flex_bounds(&v.schedule.stops)
                            && v.next_stop - 1 == a
                        {
                            v.window_start = Some(t);
                        }
                        let to = v.schedule.stops[v.next_stop].node;
                        v.leg = Some(Leg::new(&self.table, from, to, t));
                        self.log(Some(vid), EventKind::Depart, Some(from), None, t);
                    }
                }
            }
        }
    }

    fn arrive(&mut self, vid: usize, t: f64, report: &mut StepReport) {
        report.arrivals += 1;
        let idx = self.vehicles[vid].next_stop;
        let stop = self.vehicles[vid].schedule.stops[idx].clone();
        {
            let v = &mut self.vehicles[vid];
            v.leg = None;
            v.position = stop.node;
            if stop.kind.is_flexible() {
                v.flexible_stops_made += 1;
            }
        }
        self.log(Some(vid), EventKind::Arrive, Some(stop.node), None, t);
        let limits = self.config.limits;
        for &rid in &stop.alight {
            let r = &mut self.requests[rid];
            r.alight(t);
            let ride = r.ride_time().unwrap_or(0.0);
            if ride > limits.max_ride_time(r.direct_time) + 1e-6 {
                report.infeasibilities.push(format!("request {rid}: ride time {ride:.1}s exceeds bound"));
            }
            self.vehicles[vid].onboard.retain(|&x| x != rid);
            report.alightings += 1;
            self.log(Some(vid), EventKind::Alight, Some(stop.node), Some(rid), t);
        }
        for &rid in &stop.board {
            let r = &mut self.requests[rid];
            r.board(t);
            let wait = r.wait_time().unwrap_or(0.0);
            if wait > limits.max_wait + 1e-6 {
                report.infeasibilities.push(format!("request {rid}: wait {wait:.1}s exceeds bound"));
            }
            self.vehicles[vid].onboard.push(rid);
            report.boardings += 1;
            self.log(Some(vid), EventKind::Board, Some(stop.node), Some(rid), t);
        }
        let load = self.vehicles[vid].onboard.len();
        assert!(load <= limits.capacity, "vehicle {vid} over capacity: {load}");

        let last = self.vehicles[vid].schedule.stops.len() - 1;
        if idx == last {
            let v = &mut self.vehicles[vid];
            debug_assert!(v.onboard.is_empty());
            v.status = VehicleStatus::AtTerminus;
            v.cycles += 1;
            if let Some(d) = v.dispatched_at {
                v.cycle_times.push((v.zone, t - d));
            }
            v.schedule = VehicleSchedule::empty();
            v.next_stop = 0;
            v.window_start = None;
            report.completed_cycles.push(vid);
            self.log(Some(vid), EventKind::CycleComplete, Some(stop.node), None, t);
        } else {
            let dwell = self.config.dwell.dwell(&stop);
            let v = &mut self.vehicles[vid];
            v.dwell_until = t + dwell;
            v.next_stop = idx + 1;
        }
    }

    /// Count of requests per lifecycle state.
    pub fn state_counts(&self) -> StateCounts {
        let mut c = StateCounts::default();
        for r in &self.requests {
            match r.state {
                RequestState::Pending => c.pending += 1,
                RequestState::Assigned => c.assigned += 1,
                RequestState::Riding => c.riding += 1,
                RequestState::Served => c.served += 1,
                RequestState::Rejected => c.rejected += 1,
            }
        }
        c
    }

    pub fn write_events_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "time", "vehicle", "event", "node", "request"])?;
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.events {
            w.write_record([
                e.step.to_string(),
                e.time.to_string(),
                opt(e.vehicle),
                format!("{:?}", e.kind),
                opt(e.node),
                opt(e.request),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub pending: usize,
    pub assigned: usize,
    pub riding: usize,
    pub served: usize,
    pub rejected: usize,
}

impl StateCounts {
    pub fn total(&self) -> usize {
        self.pending + self.assigned + self.riding + self.served + self.rejected
    }
}
