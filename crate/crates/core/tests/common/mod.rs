//! Reference implementations and fixtures shared by the integration tests and
//! the acceptance runner. Nothing here calls the code it checks.

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sodfeeder_core::demand::{Request, RequestState};
use sodfeeder_core::dispatch::{DispatchSource, Dispatcher, PolicyKind};
use sodfeeder_core::env::SodEnv;
use sodfeeder_core::experiment::build_world;
use sodfeeder_core::matching::{DELTA_TIE, InsertionCandidate, match_step};
use sodfeeder_core::scenario::Prepared;
use sodfeeder_core::network::{CorridorSpec, Network, NodeId, Segment, TravelTable, build_corridor};
use sodfeeder_core::ppo::{
    ActorCritic, Environment, Mlp, PpoConfig, Sample, Trainer, actor_loss, critic_loss, gae, log_softmax,
};
use sodfeeder_core::schedule::{Stop, StopKind};
use sodfeeder_core::sim::{ServiceMode, VehicleStatus, World, WorldConfig, ZoneAssignment};

// ---------------------------------------------------------------------------
// Shortest paths

/// All-pairs times and distances by Bellman-Ford relaxation from each source.
pub fn bellman_ford(net: &Network) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = net.node_count();
    let mut times = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for s in 0..n {
        let mut t = vec![f64::INFINITY; n];
        let mut d = vec![f64::INFINITY; n];
        t[s] = 0.0;
        d[s] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for e in net.edges() {
                if t[e.from] + e.time < t[e.to] - 1e-12 {
                    t[e.to] = t[e.from] + e.time;
                    d[e.to] = d[e.from] + e.length;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        times.push(t);
        dists.push(d);
    }
    (times, dists)
}

// ---------------------------------------------------------------------------
// Brute-force matching

/// Timing and objective of one stop list, computed from scratch.
#[derive(Debug, Clone, Copy)]
pub struct OracleEval {
    pub rho: f64,
}

fn dwell(world: &World, s: &Stop) -> f64 {
    let n = (s.board.len() + s.alight.len()) as f64;
    let d = &world.config.dwell;
    match s.kind {
        StopKind::Terminus => 0.0,
        StopKind::FixedStop => d.base + d.per_passenger * n,
        _ if n > 0.0 => d.base + d.per_passenger * n,
        _ => 0.0,
    }
}

fn scheduled(k: StopKind) -> bool {
    matches!(k, StopKind::Terminus | StopKind::FixedStop)
}

/// Last outbound and first inbound scheduled stop around the turnaround.
fn window_stops(stops: &[Stop]) -> Option<(usize, usize)> {
    let t = (0..stops.len()).find(|&i| stops[i].kind == StopKind::Turnaround)?;
    let a = (0..t).rev().find(|&i| scheduled(stops[i].kind))?;
    let b = (t + 1..stops.len()).find(|&i| scheduled(stops[i].kind))?;
    Some((a, b))
}

/// Forward pass over the stops still ahead of vehicle `vid`. `extra_onboard`
/// is a passenger boarding right now at the terminus.
pub fn oracle_eval(world: &World, vid: usize, stops: &[Stop], extra_onboard: Option<usize>) -> Option<OracleEval> {
    let v = &world.vehicles[vid];
    let now = world.now();
    let lim = &world.config.limits;
    let c = &world.config.coeffs;
    let table = &world.table;
    let anchor = world.anchor(vid);

    let mut load = v.onboard.len() + extra_onboard.is_some() as usize;
    let mut picked: Vec<(usize, f64)> = extra_onboard.map(|r| (r, now)).into_iter().collect();
    for &r in &v.onboard {
        picked.push((r, world.requests[r].pickup_time?));
    }
    let mut arr = vec![f64::NAN; stops.len()];
    let mut dep = vec![f64::NAN; stops.len()];
    let (mut dist, mut travel, mut served, mut served_fixed) = (0.0, 0.0, 0usize, 0usize);
    let (mut node, mut time) = (anchor.node, anchor.time);
    for i in anchor.first..stops.len() {
        let s = &stops[i];
        let a = if i == anchor.first && anchor.locked {
            anchor.time
        } else {
            dist += table.distance(node, s.node);
            time + table.time(node, s.node)
        };
        arr[i] = a;
        for &r in &s.alight {
            let req = &world.requests[r];
            let p = picked.iter().find(|x| x.0 == r)?.1;
            if a - p > lim.detour_factor * req.direct_time + lim.detour_constant + 1e-9 {
                return None;
            }
            travel += a - req.request_time;
            served += 1;
            served_fixed += req.fixed_stop_service as usize;
            load -= 1;
        }
        for &r in &s.board {
            if a - world.requests[r].request_time > lim.max_wait + 1e-9 {
                return None;
            }
            picked.push((r, a));
            load += 1;
        }
        if load > lim.capacity {
            return None;
        }
        dep[i] = a + dwell(world, s);
        node = s.node;
        time = dep[i];
    }
    if v.schedule.flexible
        && let Some((a, b)) = window_stops(stops)
        && b >= anchor.first
    {
        let start = if a >= anchor.first { dep[a] } else { v.window_start.unwrap_or(anchor.time) };
        if arr[b] - start > lim.flex_window + 1e-9 {
            return None;
        }
    }
    let rho = c.distance_per_km * dist / 1000.0 + c.ride_per_hour * travel / 3600.0
        - c.satisfied_reward * served as f64
        - c.fixed_stop_reward * served_fixed as f64;
    Some(OracleEval { rho })
}

/// Corridor area of a request as the zone rules see it.
pub fn oracle_area(world: &World, rid: usize) -> Segment {
    let r = &world.requests[rid];
    if r.fixed_stop_service && world.config.service == ServiceMode::SemiOnDemand {
        return Segment::FixedRoute;
    }
    let t = world.net.terminus();
    let end = if r.origin == t { r.destination } else { r.origin };
    world.net.segment(end)
}

pub fn oracle_zone_ok(area: Segment, zone: ZoneAssignment) -> bool {
    match (area, zone) {
        (Segment::FixedRoute, _) | (_, ZoneAssignment::All) => true,
        (Segment::Zone1, z) => z == ZoneAssignment::Zone1,
        (Segment::Zone2, z) => z == ZoneAssignment::Zone2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleChoice {
    pub vehicle: usize,
    pub stops: Vec<Stop>,
    pub board_now: bool,
    pub delta: f64,
    pub key: (usize, usize, usize, bool, bool),
}

#[derive(Clone, Copy)]
enum Place {
    Merge(usize),
    New(usize),
}

/// Structural rules for where a request may enter a schedule: never behind
/// the vehicle or into a leg already being driven; new stops only for
/// door-to-door endpoints, inside the flexible part of a flexible schedule;
/// terminus trips board or alight at the terminus itself.
fn place_ok(world: &World, vid: usize, stops: &[Stop], place: Place, node: NodeId, d2d: bool, after: Option<usize>) -> bool {
    let anchor = world.anchor(vid);
    let last = stops.len() - 1;
    let min = after.map_or(anchor.first, |p| (p + 1).max(anchor.first));
    match place {
        Place::Merge(i) => i >= min && i < last && stops[i].node == node && stops[i].kind != StopKind::Terminus,
        Place::New(p) => {
            let lo = if anchor.locked { anchor.first + 1 } else { anchor.first };
            let lo = after.map_or(lo, |q| lo.max(q + 1));
            let Some((a, b)) = window_stops(stops) else { return false };
            d2d && world.vehicles[vid].schedule.flexible && p >= lo && p > a && p <= b
        }
    }
}

/// Every admissible insertion of `rid`, found by trying every merge index and
/// every insert position and keeping the feasible ones.
pub fn oracle_candidates(world: &World, rid: usize) -> Vec<OracleChoice> {
    let req = &world.requests[rid];
    let terminus = world.net.terminus();
    let area = oracle_area(world, rid);
    let mut out = Vec::new();
    for v in &world.vehicles {
        if v.status == VehicleStatus::AtTerminus || !oracle_zone_ok(area, v.zone) {
            continue;
        }
        let stops = &v.schedule.stops;
        let Some(base) = oracle_eval(world, v.id, stops, None) else { continue };
        let board_now = req.pickup_node == terminus;
        let mut pickups: Vec<(Vec<Stop>, usize, bool)> = Vec::new();
        if board_now {
            if v.status == VehicleStatus::Boarding {
                let mut s = stops.clone();
                s[0].board.push(rid);
                pickups.push((s, 0, true));
            }
        } else {
            let d2d = !req.fixed_stop_service;
            for i in 0..stops.len() {
                if place_ok(world, v.id, stops, Place::Merge(i), req.pickup_node, d2d, None) {
                    let mut s = stops.clone();
                    s[i].board.push(rid);
                    pickups.push((s, i, true));
                }
            }
            for p in 0..=stops.len() {
                if place_ok(world, v.id, stops, Place::New(p), req.pickup_node, d2d, None) {
                    let mut s = stops.clone();
                    let mut st = Stop::new(req.pickup_node, StopKind::FlexiblePickup);
                    st.board.push(rid);
                    s.insert(p, st);
                    pickups.push((s, p, false));
                }
            }
        }
        for (with_p, pi, pm) in pickups {
            let mut drops: Vec<(Vec<Stop>, usize, bool)> = Vec::new();
            if req.dropoff_node == terminus {
                let mut s = with_p.clone();
                let last = s.len() - 1;
                s[last].alight.push(rid);
                drops.push((s, last, true));
            } else {
                let d2d = !req.fixed_stop_service;
                for j in 0..with_p.len() {
                    if place_ok(world, v.id, &with_p, Place::Merge(j), req.dropoff_node, d2d, Some(pi)) {
                        let mut s = with_p.clone();
                        s[j].alight.push(rid);
                        drops.push((s, j, true));
                    }
                }
                for q in 0..=with_p.len() {
                    if place_ok(world, v.id, &with_p, Place::New(q), req.dropoff_node, d2d, Some(pi)) {
                        let mut s = with_p.clone();
                        let mut st = Stop::new(req.dropoff_node, StopKind::FlexibleDropoff);
                        st.alight.push(rid);
                        s.insert(q, st);
                        drops.push((s, q, false));
                    }
                }
            }
            for (s, di, dm) in drops {
                let extra = board_now.then_some(rid);
                if let Some(ev) = oracle_eval(world, v.id, &s, extra) {
                    out.push(OracleChoice {
                        vehicle: v.id,
                        stops: s,
                        board_now,
                        delta: ev.rho - base.rho,
                        key: (v.id, pi, di, !pm, !dm),
                    });
                }
            }
        }
    }
    out
}

/// Cheapest candidate; near-ties (within `tie`) resolved by the key.
pub fn oracle_best(world: &World, rid: usize, tie: f64) -> Option<OracleChoice> {
    let c = oracle_candidates(world, rid);
    let min = c.iter().map(|x| x.delta).fold(f64::INFINITY, f64::min);
    c.into_iter().filter(|x| x.delta <= min + tie).min_by_key(|x| x.key)
}

/// Compare the planning-relevant state of two worlds.
pub fn same_plans(a: &World, b: &World) -> Result<(), String> {
    for (va, vb) in a.vehicles.iter().zip(&b.vehicles) {
        let sa: Vec<_> = va.schedule.stops.iter().map(|s| (s.node, s.kind, s.board.clone(), s.alight.clone())).collect();
        let sb: Vec<_> = vb.schedule.stops.iter().map(|s| (s.node, s.kind, s.board.clone(), s.alight.clone())).collect();
        if sa != sb {
            return Err(format!("vehicle {} schedules differ:\n{sa:?}\n{sb:?}", va.id));
        }
        if va.onboard != vb.onboard {
            return Err(format!("vehicle {} onboard differs", va.id));
        }
    }
    for (ra, rb) in a.requests.iter().zip(&b.requests) {
        if (ra.state, ra.vehicle) != (rb.state, rb.vehicle) {
            return Err(format!("request {} differs: {:?}/{:?} vs {:?}/{:?}", ra.id, ra.state, ra.vehicle, rb.state, rb.vehicle));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Invariants

/// Checks the per-request and per-vehicle limits on a world; returns every violation found.
pub fn invariant_violations(world: &World) -> Vec<String> {
    let mut out = Vec::new();
    let lim = &world.config.limits;
    let counts = world.state_counts();
    if counts.total() != world.requests.len() {
        out.push("request states do not add up".into());
    }
    for v in &world.vehicles {
        if v.onboard.len() > lim.capacity {
            out.push(format!("vehicle {} carries {}", v.id, v.onboard.len()));
        }
        for s in &v.schedule.stops {
            for &r in s.board.iter().chain(&s.alight) {
                if !oracle_zone_ok(oracle_area(world, r), v.zone) {
                    out.push(format!("request {r} on vehicle {} outside its zone", v.id));
                }
            }
        }
        for &r in &v.onboard {
            if world.requests[r].state != RequestState::Riding || world.requests[r].vehicle != Some(v.id) {
                out.push(format!("request {r} on board vehicle {} in state {:?}", v.id, world.requests[r].state));
            }
        }
    }
    for r in &world.requests {
        if let (Some(p), RequestState::Riding | RequestState::Served) = (r.pickup_time, r.state)
            && p - r.request_time > lim.max_wait + 1e-6
        {
            out.push(format!("request {} waited {:.1}s", r.id, p - r.request_time));
        }
        if r.state == RequestState::Served {
            let direct = world.table.time(r.pickup_node, r.dropoff_node);
            let ride = r.dropoff_time.unwrap() - r.pickup_time.unwrap();
            if ride > lim.detour_factor * direct + lim.detour_constant + 1e-6 {
                out.push(format!("request {} rode {ride:.1}s for direct {direct:.1}s", r.id));
            }
        }
        if r.state == RequestState::Pending && r.request_time < world.now() - lim.max_wait - world.config.step {
            out.push(format!("request {} pending past its deadline", r.id));
        }
    }
    for v in &world.vehicles {
        for &(zone, t) in &v.cycle_times {
            let bound = world.cycle_time_bound(zone);
            if t > bound + 1e-6 {
                out.push(format!("vehicle {} cycle {t:.1}s over bound {bound:.1}s", v.id));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Advantage estimation

/// Advantages by direct summation of discounted TD errors up to the episode end.
pub fn gae_direct(rewards: &[f64], values: &[f64], next_values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| rewards[t] + if dones[t] { 0.0 } else { gamma * next_values[t] } - values[t])
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                sum += w * delta[k];
                if dones[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Gradient checks

/// Central finite-difference gradient of `f` at the network's parameters.
pub fn numeric_grad(net: &Mlp, h: f64, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let p = net.params();
    let mut g = vec![0.0; p.len()];
    let mut m = net.clone();
    for i in 0..p.len() {
        let mut q = p.clone();
        q[i] = p[i] + h;
        m.set_params(&q).unwrap();
        let up = f(&m);
        q[i] = p[i] - h;
        m.set_params(&q).unwrap();
        let down = f(&m);
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Largest elementwise relative error, with `floor` guarding near-zero entries.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Toy environment

/// One-step bandit: constant observation, reward 1 for the paying arm.
#[derive(Debug, Clone)]
pub struct Bandit {
    pub arms: usize,
    pub paying: usize,
    pub obs_dim: usize,
}

impl Environment for Bandit {
    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        vec![1.0; self.obs_dim]
    }

    fn step(&mut self, action: usize) -> sodfeeder_core::Result<(Vec<f64>, f64, bool)> {
        let r = if action == self.paying { 1.0 } else { 0.0 };
        Ok((vec![1.0; self.obs_dim], r, true))
    }
}

// ---------------------------------------------------------------------------
// Small random instances

/// A request between the terminus and a random node, in a random direction.
pub fn random_request(net: &Network, id: usize, t: f64, rng: &mut ChaCha8Rng) -> Request {
    let terminus = net.terminus();
    let other = loop {
        let n = rng.random_range(0..net.node_count());
        if n != terminus {
            break n;
        }
    };
    if rng.random_bool(0.5) { Request::new(id, t, terminus, other, net) } else { Request::new(id, t, other, terminus, net) }
}

/// Up to two vehicles and five requests on `net`, fixed-route service one time in five.
pub fn small_instance(net: &Arc<Network>, table: &Arc<TravelTable>, rng: &mut ChaCha8Rng) -> World {
    let fleet = rng.random_range(1..=2);
    let n_req = rng.random_range(1..=5);
    let mut times: Vec<f64> = (0..n_req).map(|_| rng.random_range(0.0..1800.0)).collect();
    times.sort_by(f64::total_cmp);
    let requests = times.iter().enumerate().map(|(i, &t)| random_request(net, i, t, rng)).collect();
    let service = if rng.random_bool(0.2) { ServiceMode::FixedRoute } else { ServiceMode::SemiOnDemand };
    let cfg = WorldConfig { horizon: 3600.0, warmup: 0.0, fleet_size: fleet, reserved: 0, service, ..WorldConfig::default() };
    World::new(net.clone(), table.clone(), cfg, requests)
}

/// Oracle version of one matching step, applied to a copy.
pub fn oracle_step(world: &World) -> World {
    let mut w = world.clone();
    let mut revealed = Vec::new();
    w.reveal_requests(&mut revealed);
    let now = w.now();
    for rid in std::mem::take(&mut w.pending) {
        if now - w.requests[rid].request_time > w.config.limits.max_wait {
            w.reject(rid);
            continue;
        }
        match oracle_best(&w, rid, DELTA_TIE) {
            Some(c) => {
                let cand = InsertionCandidate {
                    vehicle: c.vehicle,
                    pickup_index: c.key.1,
                    dropoff_index: c.key.2,
                    pickup_merged: !c.key.3,
                    dropoff_merged: !c.key.4,
                    board_now: c.board_now,
                    stops: c.stops,
                    delta: c.delta,
                };
                w.apply_insertion(rid, cand);
            }
            None => w.pending.push(rid),
        }
    }
    w
}

/// Run `instances` random small worlds with random dispatching, comparing
/// every matching step against the oracle. Returns (assignments, door-to-door
/// stops made) on success.
pub fn oracle_equivalence(instances: u64) -> Result<(usize, usize), String> {
    let spec = CorridorSpec { side_depth: 400.0, ..CorridorSpec::default() };
    let net = Arc::new(build_corridor(&spec).unwrap());
    let table = Arc::new(TravelTable::new(&net));
    let (mut assignments, mut flexible_stops) = (0, 0);
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut world = small_instance(&net, &table, &mut rng);
        while !world.is_done() {
            for vid in world.available(None) {
                if rng.random_bool(0.3) {
                    let zone = ZoneAssignment::from_index(rng.random_range(0..3)).unwrap();
                    world.dispatch_vehicle(vid, zone, DispatchSource::Baseline).unwrap();
                }
            }
            let expected = oracle_step(&world);
            assignments += match_step(&mut world).assigned.len();
            same_plans(&world, &expected).map_err(|e| format!("instance {seed}, step {}: {e}", world.step_index))?;
            world.advance_step().unwrap();
        }
        flexible_stops += world.vehicles.iter().map(|v| v.flexible_stops_made).sum::<usize>();
        if world.state_counts().total() != world.requests.len() {
            return Err(format!("instance {seed}: request states do not add up"));
        }
    }
    Ok((assignments, flexible_stops))
}

// ---------------------------------------------------------------------------
// Checks reused by the acceptance runner

/// Largest absolute gap between the recursive and the direct advantage sums
/// over random trajectories with episode ends in random places.
pub fn gae_check(trials: usize, max_len: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.random_range(1..=max_len);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let nv: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let gamma = rng.random_range(0.8..1.0);
        let lambda = rng.random_range(0.0..1.0);
        let (adv, ret) = gae(&r, &v, &nv, &d, gamma, lambda);
        let want = gae_direct(&r, &v, &nv, &d, gamma, lambda);
        for t in 0..n {
            worst = worst.max((adv[t] - want[t]).abs()).max((ret[t] - (want[t] + v[t])).abs());
        }
    }
    worst
}

fn tiny_net(sizes: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
    let mut m = Mlp::new(sizes, 1.0, 1.0, rng);
    let p: Vec<f64> = (0..m.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    m.set_params(&p).unwrap();
    m
}

fn random_batch(actor: &Mlp, n: usize, zero_adv: bool, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let obs: Vec<f64> = (0..actor.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let action = rng.random_range(0..actor.output_dim());
            let logp = log_softmax(&actor.forward(&obs))[action];
            Sample {
                obs,
                action,
                old_log_prob: logp + rng.random_range(-0.4..0.4),
                advantage: if zero_adv { 0.0 } else { rng.random_range(-2.0..2.0) },
                value_target: rng.random_range(-2.0..2.0),
            }
        })
        .collect()
}

/// Worst relative error of the analytic gradients against central differences
/// on 4-2-2 actors and 4-2-1 critics: (surrogate, entropy, critic).
pub fn gradient_check(trials: usize, seed: u64) -> (f64, f64, f64) {
    const H: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ws, mut we, mut wc) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let actor = tiny_net(&[4, 2, 2], &mut rng);
        let critic = tiny_net(&[4, 2, 1], &mut rng);
        let batch = random_batch(&actor, 8, false, &mut rng);
        let analytic = actor_loss(&actor, &batch, 0.2, 0.0).grad.params();
        let numeric = numeric_grad(&actor, H, |m| actor_loss(m, &batch, 0.2, 0.0).loss);
        ws = ws.max(max_rel_error(&analytic, &numeric, FLOOR));

        let flat = random_batch(&actor, 8, true, &mut rng);
        let analytic = actor_loss(&actor, &flat, 0.2, 1.0).grad.params();
        let numeric = numeric_grad(&actor, H, |m| actor_loss(m, &flat, 0.2, 1.0).loss);
        we = we.max(max_rel_error(&analytic, &numeric, FLOOR));

        let analytic = critic_loss(&critic, &batch).1.params();
        let numeric = numeric_grad(&critic, H, |m| critic_loss(m, &batch).0);
        wc = wc.max(max_rel_error(&analytic, &numeric, FLOOR));
    }
    (ws, we, wc)
}

/// Train on the bandit with the default hyperparameters; returns the first
/// update after which the paying arm has probability >= 0.9.
pub fn bandit_run(seed: u64, max_updates: usize) -> Option<usize> {
    let cfg = PpoConfig { seed, ..PpoConfig::default() };
    let paying = (seed % 4) as usize;
    let envs: Vec<Bandit> = (0..cfg.n_envs).map(|_| Bandit { arms: 4, paying, obs_dim: 4 }).collect();
    let mut t = Trainer::new(cfg, envs, 4, 4, Box::new(|e, k| (e * 1000 + k) as u64)).unwrap();
    for u in 1..=max_updates {
        t.update_once().unwrap();
        if t.ac.probs(&[1.0; 4])[paying] >= 0.9 {
            return Some(u);
        }
    }
    None
}

/// Run one episode of `policy` (random actions for the learned type), checking
/// invariants after every step. Returns all violations found.
pub fn sweep(prepared: &Arc<Prepared>, policy: PolicyKind, seed: u64) -> Vec<String> {
    let mut bad = Vec::new();
    if policy == PolicyKind::RlZonal {
        let mut env = SodEnv::new(prepared.clone());
        let obs = env.reset(seed);
        if obs.iter().any(|x| !(0.0..=1.0).contains(x)) {
            bad.push("initial observation outside [0, 1]".into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        loop {
            let before = env.world().unwrap().rejections;
            let out = env.step(rng.random_range(0..4)).unwrap();
            let w = env.world().unwrap();
            if out.reward != -((w.rejections - before) as f64) {
                bad.push(format!("reward {} for {} rejections", out.reward, w.rejections - before));
            }
            if out.observation.iter().any(|x| !(0.0..=1.0).contains(x)) {
                bad.push("observation outside [0, 1]".into());
            }
            bad.extend(invariant_violations(w));
            if out.done {
                break;
            }
        }
        return bad;
    }
    let mut world = build_world(prepared, policy, seed);
    let mut dispatcher = Dispatcher::new(policy, prepared.scenario.headways);
    while !world.is_done() {
        dispatcher.baseline_dispatch(&mut world);
        match_step(&mut world);
        bad.extend(world.advance_step().unwrap().infeasibilities);
        bad.extend(invariant_violations(&world));
    }
    bad
}

pub fn untrained(obs: usize, actions: usize) -> ActorCritic {
    ActorCritic::new(obs, actions, &PpoConfig::default())
}
