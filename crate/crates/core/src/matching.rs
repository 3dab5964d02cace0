//! Request-to-vehicle assignment: fixed-stop snapping happens when a world is
//! built; here every pending request is tried against every zone-compatible
//! vehicle by exhaustive insertion, keeping the cheapest feasible option.

use serde::{Deserialize, Serialize};

use crate::demand::RequestState;
use crate::network::{NodeId, Segment};
use crate::schedule::{Anchor, EvalContext, Evaluation, Stop, StopKind, VehicleSchedule, evaluate};
use crate::sim::{VehicleStatus, World, ZoneAssignment};

/// Monetary weights. Time coefficients are per hour, distance per km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostCoefficients {
    pub distance_per_km: f64,
    pub ride_per_hour: f64,
    pub satisfied_reward: f64,
    pub fixed_stop_reward: f64,
    pub access_per_hour: f64,
    pub wait_per_hour: f64,
    pub vehicle_per_hour: f64,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        Self {
            distance_per_km: 0.694,
            ride_per_hour: 16.5,
            satisfied_reward: 1e6,
            fixed_stop_reward: 1e6,
            access_per_hour: 33.0,
            wait_per_hour: 24.75,
            vehicle_per_hour: 7.59,
        }
    }
}

impl CostCoefficients {
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            distance_per_km: self.distance_per_km * k,
            ride_per_hour: self.ride_per_hour * k,
            satisfied_reward: self.satisfied_reward * k,
            fixed_stop_reward: self.fixed_stop_reward * k,
            access_per_hour: self.access_per_hour * k,
            wait_per_hour: self.wait_per_hour * k,
            vehicle_per_hour: self.vehicle_per_hour * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeasibilityLimits {
    /// Longest allowed wait between request and pickup, seconds.
    pub max_wait: f64,
    /// Ride time may not exceed `detour_factor * direct + detour_constant`.
    pub detour_factor: f64,
    pub detour_constant: f64,
    pub capacity: usize,
    /// Time reserved for the flexible part of each cycle, seconds.
    pub flex_window: f64,
}

impl Default for FeasibilityLimits {
    fn default() -> Self {
        Self { max_wait: 900.0, detour_factor: 2.5, detour_constant: 300.0, capacity: 20, flex_window: 1200.0 }
    }
}

impl FeasibilityLimits {
    pub fn max_ride_time(&self, direct_time: f64) -> f64 {
        self.detour_factor * direct_time + self.detour_constant
    }
}

/// Insertion objective for one schedule: distance and passenger travel time
/// are costs, satisfied and fixed-stop-served requests are rewards.
pub fn rho_terms(distance_m: f64, travel_s: f64, served: usize, served_fixed: usize, c: &CostCoefficients) -> f64 {
    c.distance_per_km * distance_m / 1000.0 + c.ride_per_hour * travel_s / 3600.0
        - c.satisfied_reward * served as f64
        - c.fixed_stop_reward * served_fixed as f64
}

pub fn rho_of(eval: &Evaluation, c: &CostCoefficients) -> f64 {
    rho_terms(eval.distance, eval.travel_time, eval.served, eval.served_fixed, c)
}

/// Fleet-wide objective over the remaining schedules of a world.
pub fn rho(world: &World) -> f64 {
    let ctx = world.eval_context();
    world
        .vehicles
        .iter()
        .filter(|v| v.status != VehicleStatus::AtTerminus)
        .map(|v| {
            let ev = evaluate(&v.schedule.stops, v.schedule.flexible, &world.anchor(v.id), &ctx)
                .expect("committed schedules stay feasible");
            rho_of(&ev, &world.config.coeffs)
        })
        .sum()
}

/// Can a vehicle assigned `zone` serve a request whose corridor end lies in `area`?
pub fn zone_compatible(area: Segment, zone: ZoneAssignment) -> bool {
    match area {
        Segment::FixedRoute => true,
        Segment::Zone1 => matches!(zone, ZoneAssignment::All | ZoneAssignment::Zone1),
        Segment::Zone2 => matches!(zone, ZoneAssignment::All | ZoneAssignment::Zone2),
    }
}

/// Objective differences below this are treated as ties.
pub const DELTA_TIE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct InsertionCandidate {
    pub vehicle: usize,
    pub pickup_index: usize,
    pub dropoff_index: usize,
    /// Pickup joins an existing stop (or boards immediately at the terminus).
    pub pickup_merged: bool,
    pub dropoff_merged: bool,
    /// Passenger boards immediately at the terminus while the vehicle is boarding.
    pub board_now: bool,
    pub stops: Vec<Stop>,
    pub delta: f64,
}

impl InsertionCandidate {
    /// Tie-break order: lowest vehicle id, earliest pickup, earliest dropoff,
    /// merges before new stops.
    pub fn key(&self) -> (usize, usize, usize, bool, bool) {
        (self.vehicle, self.pickup_index, self.dropoff_index, !self.pickup_merged, !self.dropoff_merged)
    }
}

enum Slot {
    Merge(usize),
    Insert(usize),
}

fn apply_pickup(stops: &[Stop], slot: &Slot, node: NodeId, rid: usize) -> (Vec<Stop>, usize) {
    let mut s = stops.to_vec();
    match *slot {
        Slot::Merge(i) => {
            s[i].board.push(rid);
            (s, i)
        }
        Slot::Insert(p) => {
            let mut stop = Stop::new(node, StopKind::FlexiblePickup);
            stop.board.push(rid);
            s.insert(p, stop);
            (s, p)
        }
    }
}

fn apply_dropoff(stops: &mut Vec<Stop>, slot: &Slot, node: NodeId, rid: usize) -> usize {
    match *slot {
        Slot::Merge(j) => {
            stops[j].alight.push(rid);
            j
        }
        Slot::Insert(q) => {
            let mut stop = Stop::new(node, StopKind::FlexibleDropoff);
            stop.alight.push(rid);
            stops.insert(q, stop);
            q
        }
    }
}

/// Every feasible way to add request `rid` to vehicle `vid`'s schedule.
pub fn vehicle_insertions(world: &World, vid: usize, rid: usize) -> Vec<InsertionCandidate> {
    let v = &world.vehicles[vid];
    let req = &world.requests[rid];
    let mut out = Vec::new();
    if v.status == VehicleStatus::AtTerminus || !zone_compatible(world.request_area(rid), v.zone) {
        return out;
    }
    let ctx = world.eval_context();
    let coeffs = &world.config.coeffs;
    let anchor = world.anchor(vid);
    let sched = &v.schedule;
    let Ok(base) = evaluate(&sched.stops, sched.flexible, &anchor, &ctx) else {
        return out;
    };
    let base_rho = rho_of(&base, coeffs);
    let terminus = world.net.terminus();
    let door_to_door_pickup = !req.fixed_stop_service && req.pickup_node != terminus;
    let door_to_door_dropoff = !req.fixed_stop_service && req.dropoff_node != terminus;
    let last = sched.stops.len() - 1;

    // Pickup slots on the current schedule.
    let mut pickups: Vec<Slot> = Vec::new();
    let board_now = req.pickup_node == terminus;
    if board_now {
        if v.status == VehicleStatus::Boarding {
            pickups.push(Slot::Merge(0));
        }
    } else {
        for i in anchor.first..last {
            if sched.stops[i].node == req.pickup_node && sched.stops[i].kind != StopKind::Terminus {
                pickups.push(Slot::Merge(i));
            }
        }
        if sched.flexible
            && door_to_door_pickup
            && let Some((a, b)) = VehicleSchedule::flex_bounds(&sched.stops)
        {
            for p in anchor.insert_min().max(a + 1)..=b {
                pickups.push(Slot::Insert(p));
            }
        }
    }

    for pslot in &pickups {
        let (with_pickup, pi) = apply_pickup(&sched.stops, pslot, req.pickup_node, rid);
        let mut anchor_p = anchor;
        if board_now {
            // Boards immediately; stop 0 is behind the anchor.
            with_pickup_board_now(&mut anchor_p, rid, world.now());
        }
        let new_last = with_pickup.len() - 1;
        let mut drops: Vec<Slot> = Vec::new();
        if req.dropoff_node == terminus {
            drops.push(Slot::Merge(new_last));
        } else {
            for j in (pi + 1).max(anchor.first)..new_last {
                if with_pickup[j].node == req.dropoff_node && with_pickup[j].kind != StopKind::Terminus {
                    drops.push(Slot::Merge(j));
                }
            }
            if sched.flexible
                && door_to_door_dropoff
                && let Some((a, b)) = VehicleSchedule::flex_bounds(&with_pickup)
            {
                for q in (pi + 1).max(anchor.insert_min()).max(a + 1)..=b {
                    drops.push(Slot::Insert(q));
                }
            }
        }
        for dslot in &drops {
            let mut stops = with_pickup.clone();
            let di = apply_dropoff(&mut stops, dslot, req.dropoff_node, rid);
            let Ok(ev) = evaluate(&stops, sched.flexible, &anchor_p, &ctx) else {
                continue;
            };
            let delta = rho_of(&ev, coeffs) - base_rho;
            out.push(InsertionCandidate {
                vehicle: vid,
                pickup_index: pi,
                dropoff_index: di,
                pickup_merged: matches!(pslot, Slot::Merge(_)),
                dropoff_merged: matches!(dslot, Slot::Merge(_)),
                board_now,
                stops,
                delta,
            });
        }
    }
    out
}

fn with_pickup_board_now(anchor: &mut Anchor, rid: usize, now: f64) {
    anchor.onboard += 1;
    anchor.boarded_now = Some((rid, now));
}

/// All feasible insertions of `rid` across the fleet.
pub fn enumerate_insertions(world: &World, rid: usize) -> Vec<InsertionCandidate> {
    (0..world.vehicles.len()).flat_map(|v| vehicle_insertions(world, v, rid)).collect()
}

/// Cheapest candidate. Every candidate within `DELTA_TIE` of the minimum
/// counts as tied and the tie-break key decides.
pub fn best_insertion(world: &World, rid: usize) -> Option<InsertionCandidate> {
    select_best(enumerate_insertions(world, rid))
}

pub fn select_best(candidates: Vec<InsertionCandidate>) -> Option<InsertionCandidate> {
    let min = candidates.iter().map(|c| c.delta).min_by(f64::total_cmp)?;
    candidates.into_iter().filter(|c| c.delta <= min + DELTA_TIE).min_by_key(|c| c.key())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReport {
    pub assigned: Vec<(usize, usize)>,
    pub rejected: Vec<usize>,
    pub pending: usize,
}

/// Reveal new requests, reject those past their wait deadline, and insert the
/// rest in request-time order.
pub fn match_step(world: &mut World) -> AssignmentReport {
    let now = world.now();
    let mut report = AssignmentReport::default();
    world.reveal_requests(&mut report.rejected);

    let pending = std::mem::take(&mut world.pending);
    let mut still = Vec::with_capacity(pending.len());
    for rid in pending {
        debug_assert_eq!(world.requests[rid].state, RequestState::Pending);
        if now - world.requests[rid].request_time > world.config.limits.max_wait {
            world.reject(rid);
            report.rejected.push(rid);
            continue;
        }
        match best_insertion(world, rid) {
            Some(c) => {
                world.apply_insertion(rid, c);
                report.assigned.push((rid, world.requests[rid].vehicle.expect("just assigned")));
            }
            None => still.push(rid),
        }
    }
    report.pending = still.len();
    world.pending = still;
    report
}

/// Shared helper for brute-force checks: evaluate a candidate stop list with
/// the vehicle's own anchor.
pub fn evaluate_for(world: &World, vid: usize, stops: &[Stop], board_now: Option<usize>) -> Option<Evaluation> {
    let ctx: EvalContext<'_> = world.eval_context();
    let mut anchor = world.anchor(vid);
    if let Some(rid) = board_now {
        with_pickup_board_now(&mut anchor, rid, world.now());
    }
    evaluate(stops, world.vehicles[vid].schedule.flexible, &anchor, &ctx).ok()
}
