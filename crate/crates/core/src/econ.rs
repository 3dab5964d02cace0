//! Generalized cost and run metrics, with warm-up exclusion.

use serde::{Deserialize, Serialize};

use crate::demand::{Request, RequestState};
use crate::matching::CostCoefficients;
use crate::network::{NodeId, Segment};
use crate::sim::Vehicle;

/// Per-component generalized cost, dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub access: f64,
    pub wait: f64,
    pub ride: f64,
    pub distance: f64,
    pub vehicle_time: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.access + self.wait + self.ride + self.distance + self.vehicle_time
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Requests inside the metric window (request time at or after the warm-up cutoff).
    pub generated: usize,
    pub served: usize,
    pub rejected: usize,
    /// Still pending, assigned or riding when the horizon was reached.
    pub pending: usize,
    /// Rejections over the whole run, warm-up included.
    pub rejected_all: usize,
    pub total_access_s: f64,
    pub total_wait_s: f64,
    pub total_ride_s: f64,
    pub mean_access_s: Option<f64>,
    pub mean_wait_s: Option<f64>,
    pub mean_ride_s: Option<f64>,
    /// Mean access time of served passengers whose corridor end is in a flexible zone.
    pub mean_flex_access_s: Option<f64>,
    pub vehicle_km: f64,
    pub vehicle_hours: f64,
    pub cost: CostBreakdown,
    pub generalized_cost: f64,
    /// Undefined when nobody was served.
    pub cost_per_passenger: Option<f64>,
    pub door_to_door_stops: usize,
}

impl RunMetrics {
    /// Flat numeric view used for aggregation; undefined values are NaN.
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        let o = |x: Option<f64>| x.unwrap_or(f64::NAN);
        vec![
            ("generated", self.generated as f64),
            ("served", self.served as f64),
            ("rejected", self.rejected as f64),
            ("pending", self.pending as f64),
            ("rejected_all", self.rejected_all as f64),
            ("mean_access_s", o(self.mean_access_s)),
            ("mean_wait_s", o(self.mean_wait_s)),
            ("mean_ride_s", o(self.mean_ride_s)),
            ("mean_flex_access_s", o(self.mean_flex_access_s)),
            ("vehicle_km", self.vehicle_km),
            ("vehicle_hours", self.vehicle_hours),
            ("cost_access", self.cost.access),
            ("cost_wait", self.cost.wait),
            ("cost_ride", self.cost.ride),
            ("cost_distance", self.cost.distance),
            ("cost_vehicle_time", self.cost.vehicle_time),
            ("generalized_cost", self.generalized_cost),
            ("cost_per_passenger", o(self.cost_per_passenger)),
            ("door_to_door_stops", self.door_to_door_stops as f64),
        ]
    }
}

/// Generalized cost over the metric window: user time for served requests
/// made at or after `warmup`, plus vehicle distance and deployed time accrued
/// after `warmup`.
pub fn generalized_cost(
    requests: &[Request],
    vehicles: &[Vehicle],
    coeffs: &CostCoefficients,
    warmup: f64,
    terminus: NodeId,
) -> RunMetrics {
    let mut m = RunMetrics {
        generated: 0,
        served: 0,
        rejected: 0,
        pending: 0,
        rejected_all: 0,
        total_access_s: 0.0,
        total_wait_s: 0.0,
        total_ride_s: 0.0,
        mean_access_s: None,
        mean_wait_s: None,
        mean_ride_s: None,
        mean_flex_access_s: None,
        vehicle_km: 0.0,
        vehicle_hours: 0.0,
        cost: CostBreakdown::default(),
        generalized_cost: 0.0,
        cost_per_passenger: None,
        door_to_door_stops: 0,
    };
    let (mut flex_access, mut flex_n) = (0.0, 0usize);
    for r in requests {
        if r.state == RequestState::Rejected {
            m.rejected_all += 1;
        }
        if r.request_time < warmup {
            continue;
        }
        m.generated += 1;
        match r.state {
            RequestState::Served => {
                m.served += 1;
                m.total_access_s += r.access_time;
                m.total_wait_s += r.wait_time().unwrap_or(0.0);
                m.total_ride_s += r.ride_time().unwrap_or(0.0);
                if r.corridor_segment(terminus) != Segment::FixedRoute {
                    flex_access += r.access_time;
                    flex_n += 1;
                }
            }
            RequestState::Rejected => m.rejected += 1,
            _ => m.pending += 1,
        }
    }
    let distance_m: f64 = vehicles.iter().map(|v| v.distance_after_warmup).sum();
    let deployed_s: f64 = vehicles.iter().map(|v| v.deployed_after_warmup).sum();
    m.vehicle_km = distance_m / 1000.0;
    m.vehicle_hours = deployed_s / 3600.0;
    m.door_to_door_stops = vehicles.iter().map(|v| v.flexible_stops_made).sum();
    m.cost = CostBreakdown {
        access: coeffs.access_per_hour * m.total_access_s / 3600.0,
        wait: coeffs.wait_per_hour * m.total_wait_s / 3600.0,
        ride: coeffs.ride_per_hour * m.total_ride_s / 3600.0,
        distance: coeffs.distance_per_km * m.vehicle_km,
        vehicle_time: coeffs.vehicle_per_hour * m.vehicle_hours,
    };
    m.generalized_cost = m.cost.total();
    if m.served > 0 {
        let n = m.served as f64;
        m.mean_access_s = Some(m.total_access_s / n);
        m.mean_wait_s = Some(m.total_wait_s / n);
        m.mean_ride_s = Some(m.total_ride_s / n);
        m.cost_per_passenger = Some(m.generalized_cost / n);
    }
    if flex_n > 0 {
        m.mean_flex_access_s = Some(flex_access / flex_n as f64);
    }
    m
}

/// Summary statistics of one metric over many runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    // Undefined statistics are NaN, which JSON carries as null.
    #[serde(deserialize_with = "nan_from_null")]
    pub mean: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub q1: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub median: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub q3: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub min: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub max: f64,
    /// Runs in which the metric was defined.
    pub n: usize,
}

pub(crate) fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = if n > 0 { v.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    Summary {
        mean,
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        min: v.first().copied().unwrap_or(f64::NAN),
        max: v.last().copied().unwrap_or(f64::NAN),
        n,
    }
}

/// One aggregate row: every metric field summarized across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub runs: usize,
    pub metrics: Vec<(String, Summary)>,
}

pub fn aggregate(label: &str, runs: &[RunMetrics]) -> AggregateRow {
    // Column names come from a template so an empty row keeps the full width.
    let names: Vec<&'static str> = RunMetrics::default().fields().iter().map(|f| f.0).collect();
    let columns: Vec<Vec<f64>> = runs.iter().map(|r| r.fields().into_iter().map(|f| f.1).collect()).collect();
    let metrics = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let vals: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            (name.to_string(), summarize(&vals))
        })
        .collect();
    AggregateRow { label: label.to_string(), runs: runs.len(), metrics }
}

/// Wide CSV: one row per label, `<metric>_<stat>` columns.
pub fn aggregate_csv(rows: &[AggregateRow]) -> crate::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        let mut header = vec!["policy".to_string(), "runs".to_string()];
        for (name, _) in &first.metrics {
            for stat in ["mean", "q1", "median", "q3", "min", "max"] {
                header.push(format!("{name}_{stat}"));
            }
        }
        w.write_record(&header)?;
    }
    for row in rows {
        let mut rec = vec![row.label.clone(), row.runs.to_string()];
        for (_, s) in &row.metrics {
            for x in [s.mean, s.q1, s.median, s.q3, s.min, s.max] {
                rec.push(x.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    let buf = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
