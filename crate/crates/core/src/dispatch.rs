//! The four control types and the minimum-service override.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::sim::{FleetClass, World, ZoneAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    FixedRoute,
    SoD,
    NominalZonal,
    RlZonal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::FixedRoute, PolicyKind::SoD, PolicyKind::NominalZonal, PolicyKind::RlZonal];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::FixedRoute => "fixed-route",
            PolicyKind::SoD => "sod",
            PolicyKind::NominalZonal => "zonal",
            PolicyKind::RlZonal => "rl-zonal",
        }
    }

    pub fn is_zonal(self) -> bool {
        matches!(self, PolicyKind::NominalZonal | PolicyKind::RlZonal)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "fixed-route" | "fixed" | "fixedroute" => Ok(PolicyKind::FixedRoute),
            "sod" | "semi-on-demand" => Ok(PolicyKind::SoD),
            "zonal" | "nominal-zonal" | "nominalzonal" => Ok(PolicyKind::NominalZonal),
            "rl-zonal" | "rl" | "rlzonal" => Ok(PolicyKind::RlZonal),
            other => Err(Error::Scenario(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchSource {
    Baseline,
    Override,
    Rl,
}

impl DispatchSource {
    pub fn name(self) -> &'static str {
        match self {
            DispatchSource::Baseline => "baseline",
            DispatchSource::Override => "override",
            DispatchSource::Rl => "rl",
        }
    }
}

/// Headways in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Headways {
    /// Whole-fleet headway for fixed-route and SoD operation.
    pub full_fleet: f64,
    /// Reserved-fleet (minimum service) headway for the zonal types.
    pub reserved: f64,
    /// Period of the nominal zonal rotation.
    pub nominal_period: f64,
    /// Offset of the nominal rotation relative to reserved departures.
    pub nominal_offset: f64,
}

impl Default for Headways {
    fn default() -> Self {
        Self { full_fleet: 300.0, reserved: 600.0, nominal_period: 600.0, nominal_offset: 300.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchCommand {
    pub vehicle: usize,
    pub zone: ZoneAssignment,
    pub source: DispatchSource,
}

/// Timetable state for the non-learned departures of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatcher {
    pub policy: PolicyKind,
    pub headways: Headways,
    next_due: f64,
    next_nominal: f64,
    nominal_zone: ZoneAssignment,
    /// Scheduled departures that found no vehicle at the terminus.
    pub skipped: usize,
}

impl Dispatcher {
    pub fn new(policy: PolicyKind, headways: Headways) -> Self {
        Self {
            policy,
            headways,
            next_due: 0.0,
            next_nominal: headways.nominal_offset,
            nominal_zone: ZoneAssignment::Zone1,
            skipped: 0,
        }
    }

    fn due(now: f64, at: f64) -> bool {
        now + 1e-9 >= at
    }

    /// Timetabled departures for this step: the whole-route headway for fixed
    /// route and SoD, the reserved override for the zonal types, plus the
    /// nominal zone rotation.
    pub fn baseline_dispatch(&mut self, world: &mut World) -> Vec<DispatchCommand> {
        let now = world.now();
        let mut out = Vec::new();
        let (headway, class, source) = match self.policy {
            PolicyKind::FixedRoute | PolicyKind::SoD => (self.headways.full_fleet, None, DispatchSource::Baseline),
            PolicyKind::NominalZonal | PolicyKind::RlZonal => {
                (self.headways.reserved, Some(FleetClass::Reserved), DispatchSource::Override)
            }
        };
        while Self::due(now, self.next_due) {
            self.next_due += headway;
            match world.available(class).first() {
                Some(&vid) => {
                    world.dispatch_vehicle(vid, ZoneAssignment::All, source).expect("vehicle is idle");
                    out.push(DispatchCommand { vehicle: vid, zone: ZoneAssignment::All, source });
                }
                None => self.skipped += 1,
            }
        }
        if self.policy == PolicyKind::NominalZonal {
            while Self::due(now, self.next_nominal) {
                self.next_nominal += self.headways.nominal_period;
                let zone = self.nominal_zone;
                self.nominal_zone = match zone {
                    ZoneAssignment::Zone1 => ZoneAssignment::Zone2,
                    _ => ZoneAssignment::Zone1,
                };
                match world.available(Some(FleetClass::Controllable)).first() {
                    Some(&vid) => {
                        world.dispatch_vehicle(vid, zone, DispatchSource::Baseline).expect("vehicle is idle");
                        out.push(DispatchCommand { vehicle: vid, zone, source: DispatchSource::Baseline });
                    }
                    None => self.skipped += 1,
                }
            }
        }
        out
    }
}

/// Number of discrete actions: all zones, Zone 1, Zone 2, hold.
pub const ACTION_COUNT: usize = 4;
pub const HOLD_ACTION: usize = 3;

/// Execute a learned action. Actions 0..=2 send one controllable vehicle with
/// the matching zone assignment; 3, or no vehicle at the terminus, does nothing.
pub fn apply_action(world: &mut World, action: usize) -> Option<DispatchCommand> {
    let zone = ZoneAssignment::from_index(action)?;
    let vid = *world.available(Some(FleetClass::Controllable)).first()?;
    world.dispatch_vehicle(vid, zone, DispatchSource::Rl).expect("vehicle is idle");
    Some(DispatchCommand { vehicle: vid, zone, source: DispatchSource::Rl })
}
