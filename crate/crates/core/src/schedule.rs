//! Vehicle schedules: ordered stops with boarding/alighting lists, plus the
//! forward timing pass that checks every feasibility constraint.

use serde::{Deserialize, Serialize};

use crate::demand::Request;
use crate::matching::FeasibilityLimits;
use crate::network::{NodeId, TravelTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopKind {
    Terminus,
    FixedStop,
    FlexiblePickup,
    FlexibleDropoff,
    Turnaround,
}

impl StopKind {
    pub fn is_flexible(self) -> bool {
        matches!(self, StopKind::FlexiblePickup | StopKind::FlexibleDropoff)
    }

    /// Stops that delimit the flexible window.
    fn is_scheduled(self) -> bool {
        matches!(self, StopKind::Terminus | StopKind::FixedStop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub node: NodeId,
    pub kind: StopKind,
    pub board: Vec<usize>,
    pub alight: Vec<usize>,
    pub planned_arrival: f64,
}

impl Stop {
    pub fn new(node: NodeId, kind: StopKind) -> Self {
        Self { node, kind, board: Vec::new(), alight: Vec::new(), planned_arrival: f64::NAN }
    }

    pub fn activity(&self) -> usize {
        self.board.len() + self.alight.len()
    }
}

/// Dwell model: `base + per_passenger * n` at any stop with activity; fixed
/// stops always hold for `base`; turnarounds and the terminus need none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwellParams {
    pub base: f64,
    pub per_passenger: f64,
}

impl Default for DwellParams {
    fn default() -> Self {
        Self { base: 20.0, per_passenger: 2.0 }
    }
}

impl DwellParams {
    pub fn dwell(&self, stop: &Stop) -> f64 {
        let n = stop.activity();
        match stop.kind {
            StopKind::Terminus => 0.0,
            StopKind::FixedStop => self.base + self.per_passenger * n as f64,
            _ if n > 0 => self.base + self.per_passenger * n as f64,
            _ => 0.0,
        }
    }
}

/// Where a vehicle's remaining schedule starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    /// Index of the next stop still to be visited.
    pub first: usize,
    /// Node the vehicle departs from (or is heading to, when `locked`).
    pub node: NodeId,
    /// Departure time from `node`, or arrival time at `stops[first]` when `locked`.
    pub time: f64,
    /// The vehicle is already driving towards `stops[first]`; that leg cannot change.
    pub locked: bool,
    /// Passengers currently on board.
    pub onboard: usize,
    /// Time the vehicle left the last outbound fixed stop, once it has.
    pub window_start: Option<f64>,
    /// A passenger counted in `onboard` whose request is still marked unpicked
    /// (candidate boarding at the terminus right now).
    pub boarded_now: Option<(usize, f64)>,
}

impl Anchor {
    /// First position where a new stop may be inserted.
    pub fn insert_min(&self) -> usize {
        if self.locked { self.first + 1 } else { self.first }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSchedule {
    pub stops: Vec<Stop>,
    /// Door-to-door stops allowed and the flexible window enforced.
    pub flexible: bool,
}

impl VehicleSchedule {
    pub fn empty() -> Self {
        Self { stops: Vec::new(), flexible: false }
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    /// Indices `(a, b)` of the last outbound and first inbound scheduled stop
    /// around the turnaround; flexible stops live strictly between them.
    pub fn flex_bounds(stops: &[Stop]) -> Option<(usize, usize)> {
        let t = stops.iter().position(|s| s.kind == StopKind::Turnaround)?;
        let a = stops[..t].iter().rposition(|s| s.kind.is_scheduled())?;
        let b = t + 1 + stops[t + 1..].iter().position(|s| s.kind.is_scheduled())?;
        Some((a, b))
    }

    pub fn flexible_stop_count(&self) -> usize {
        self.stops.iter().filter(|s| s.kind.is_flexible()).count()
    }
}

/// Read-only inputs to the timing pass.
pub struct EvalContext<'a> {
    pub table: &'a TravelTable,
    pub requests: &'a [Request],
    pub limits: &'a FeasibilityLimits,
    pub dwell: &'a DwellParams,
}

/// Result of a successful timing pass over the remaining stops.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Arrival per stop; NaN for stops already visited.
    pub arrivals: Vec<f64>,
    pub departures: Vec<f64>,
    /// Distance still to drive from the anchor, meters (excludes a locked leg).
    pub distance: f64,
    /// Sum over alighting requests of `dropoff - request_time`, seconds.
    pub travel_time: f64,
    /// Requests alighting in the remaining stops.
    pub served: usize,
    pub served_fixed: usize,
    pub max_load: usize,
}

/// Why a schedule failed the timing pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Capacity,
    Wait,
    Detour,
    Window,
}

/// Propagate times from the anchor and check capacity, wait, detour and the
/// flexible-window constraints for every request still in the schedule.
pub fn evaluate(
    stops: &[Stop],
    flexible: bool,
    anchor: &Anchor,
    ctx: &EvalContext<'_>,
) -> Result<Evaluation, Violation> {
    let n = stops.len();
    let mut arrivals = vec![f64::NAN; n];
    let mut departures = vec![f64::NAN; n];
    let mut distance = 0.0;
    let mut travel_time = 0.0;
    let mut served = 0;
    let mut served_fixed = 0;
    let mut load = anchor.onboard;
    let mut max_load = load;
    // (request id, planned pickup) for requests boarding ahead of us.
    let mut pickups: Vec<(usize, f64)> = anchor.boarded_now.into_iter().collect();

    let mut prev_node = anchor.node;
    let mut prev_dep = anchor.time;
    for i in anchor.first..n {
        let stop = &stops[i];
        let arr = if i == anchor.first && anchor.locked {
            anchor.time
        } else {
            distance += ctx.table.distance(prev_node, stop.node);
            prev_dep + ctx.table.time(prev_node, stop.node)
        };
        arrivals[i] = arr;
        for &r in &stop.alight {
            let req = &ctx.requests[r];
            let pickup = match req.pickup_time {
                Some(p) => p,
                None => match pickups.iter().find(|(id, _)| *id == r) {
                    Some(&(_, p)) => p,
                    None => return Err(Violation::Detour),
                },
            };
            if arr - pickup > ctx.limits.max_ride_time(req.direct_time) + 1e-9 {
                return Err(Violation::Detour);
            }
            travel_time += arr - req.request_time;
            served += 1;
            if req.fixed_stop_service {
                served_fixed += 1;
            }
            load -= 1;
        }
        for &r in &stop.board {
            let req = &ctx.requests[r];
            if arr - req.request_time > ctx.limits.max_wait + 1e-9 {
                return Err(Violation::Wait);
            }
            pickups.push((r, arr));
            load += 1;
        }
        if load > ctx.limits.capacity {
            return Err(Violation::Capacity);
        }
        max_load = max_load.max(load);
        let dep = arr + ctx.dwell.dwell(stop);
        departures[i] = dep;
        prev_node = stop.node;
        prev_dep = dep;
    }

    if flexible
        && let Some((a, b)) = VehicleSchedule::flex_bounds(stops)
        && b >= anchor.first
    {
        // A vehicle still dwelling at `a` leaves it at the anchor time.
        let start = if a >= anchor.first { departures[a] } else { anchor.window_start.unwrap_or(anchor.time) };
        if arrivals[b] - start > ctx.limits.flex_window + 1e-9 {
            return Err(Violation::Window);
        }
    }

    Ok(Evaluation { arrivals, departures, distance, travel_time, served, served_fixed, max_load })
}
