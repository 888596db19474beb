//! Static corridor description: conflict zones, their approaches, lateral
//! conflict topology, routes, and feasible arrival-time geometry.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::TimeValue;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Conflict zone identifier (merge, roundabout, intersection, ...).
    ZoneId
);
string_id!(
    /// Lane entering a conflict zone.
    ApproachId
);
string_id!(
    /// Road segment leaving a conflict zone.
    LinkId
);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorridorError {
    #[error("route does not traverse zone `{0}`")]
    RouteMissesZone(ZoneId),
    #[error("zone `{zone}` has no approach `{approach}`")]
    UnknownApproach { zone: ZoneId, approach: ApproachId },
    #[error("v_min is zero and no horizon_cap is configured, so the latest arrival time is unbounded")]
    UnboundedHorizon,
}

/// A single validation finding, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

impl ValidationIssue {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Corridor-wide parameters. Headway `rho` is in seconds, gap `delta` in
/// meters, speeds in m/s and accelerations in m/s².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Deserialize<'de>"))]
pub struct GlobalParams<T = f64> {
    pub rho: T,
    pub delta: T,
    pub v_min: T,
    pub v_max: T,
    pub u_min: T,
    pub u_max: T,
    /// Upper bound on control-zone travel time; only consulted when `v_min` is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_cap: Option<T>,
}

impl<T: TimeValue> GlobalParams<T> {
    pub fn validate(&self, prefix: &str) -> Vec<ValidationIssue> {
        let zero = T::zero();
        let mut issues = Vec::new();
        let mut push = |field: &str, msg: &str| {
            issues.push(ValidationIssue::new(format!("{prefix}.{field}"), msg));
        };
        if !(self.rho > zero) {
            push("rho", "must be > 0");
        }
        if !(self.delta > zero) {
            push("delta", "must be > 0");
        }
        if !(self.v_min >= zero) {
            push("v_min", "must be >= 0");
        }
        if !(self.v_max > self.v_min) {
            push("v_max", "must be > v_min");
        }
        if !(self.u_min < zero) {
            push("u_min", "must be < 0");
        }
        if !(self.u_max > zero) {
            push("u_max", "must be > 0");
        }
        if let Some(cap) = self.horizon_cap {
            if !(cap > zero) {
                push("horizon_cap", "must be > 0");
            }
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachSpec<T = f64> {
    pub id: ApproachId,
    /// Distance from the control-zone entry to the conflict-zone entry.
    pub control_zone_length: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictZoneSpec<T = f64> {
    pub id: ZoneId,
    pub zone_length: T,
    pub approaches: Vec<ApproachSpec<T>>,
    /// Unordered pairs of approaches whose paths cross or merge in the zone.
    #[serde(default)]
    pub conflict_pairs: Vec<(ApproachId, ApproachId)>,
}

impl<T> ConflictZoneSpec<T> {
    pub fn approach(&self, id: &ApproachId) -> Option<&ApproachSpec<T>> {
        self.approaches.iter().find(|a| &a.id == id)
    }

    pub fn conflicts(&self, a: &ApproachId, b: &ApproachId) -> bool {
        a != b
            && self
                .conflict_pairs
                .iter()
                .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSpec<T = f64> {
    pub params: GlobalParams<T>,
    pub zones: Vec<ConflictZoneSpec<T>>,
}

impl<T: TimeValue> CorridorSpec<T> {
    pub fn zone(&self, id: &ZoneId) -> Option<&ConflictZoneSpec<T>> {
        self.zones.iter().find(|z| &z.id == id)
    }

    pub fn zone_index(&self, id: &ZoneId) -> Option<usize> {
        self.zones.iter().position(|z| &z.id == id)
    }

    pub fn validate(&self) -> Vec<ValidationIssue> {
        let zero = T::zero();
        let mut issues = self.params.validate("corridor.params");
        let mut seen = BTreeSet::new();
        for (zi, zone) in self.zones.iter().enumerate() {
            let path = format!("corridor.zones[{zi}]");
            if !seen.insert(zone.id.clone()) {
                issues.push(ValidationIssue::new(
                    format!("{path}.id"),
                    format!("duplicate zone id `{}`", zone.id),
                ));
            }
            if !(zone.zone_length > zero) {
                issues.push(ValidationIssue::new(format!("{path}.zone_length"), "must be > 0"));
            }
            if zone.approaches.is_empty() {
                issues.push(ValidationIssue::new(
                    format!("{path}.approaches"),
                    "zone needs at least one approach",
                ));
            }
            let mut approach_ids = BTreeSet::new();
            for (ai, approach) in zone.approaches.iter().enumerate() {
                if !approach_ids.insert(approach.id.clone()) {
                    issues.push(ValidationIssue::new(
                        format!("{path}.approaches[{ai}].id"),
                        format!("duplicate approach id `{}`", approach.id),
                    ));
                }
                if !(approach.control_zone_length > zero) {
                    issues.push(ValidationIssue::new(
                        format!("{path}.approaches[{ai}].control_zone_length"),
                        "must be > 0",
                    ));
                }
            }
            for (pi, (a, b)) in zone.conflict_pairs.iter().enumerate() {
                let pair_path = format!("{path}.conflict_pairs[{pi}]");
                if a == b {
                    issues.push(ValidationIssue::new(
                        pair_path.clone(),
                        format!("approach `{a}` cannot conflict with itself"),
                    ));
                }
                for id in [a, b] {
                    if zone.approach(id).is_none() {
                        issues.push(ValidationIssue::new(
                            pair_path.clone(),
                            format!("unknown approach `{id}`"),
                        ));
                    }
                }
            }
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteLeg<T = f64> {
    pub zone: ZoneId,
    pub approach: ApproachId,
    pub exit_link: LinkId,
    /// Length of the exit link, from the conflict-zone exit to the next
    /// control-zone entry (or the corridor exit on the last leg).
    pub link_length: T,
}

/// Ordered list of zones a vehicle crosses, with the approach it uses in each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route<T = f64> {
    pub legs: Vec<RouteLeg<T>>,
}

impl<T: TimeValue> Route<T> {
    pub fn leg(&self, zone: &ZoneId) -> Option<&RouteLeg<T>> {
        self.legs.iter().find(|l| &l.zone == zone)
    }

    pub fn validate(&self, corridor: &CorridorSpec<T>, path: &str) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        if self.legs.is_empty() {
            issues.push(ValidationIssue::new(
                format!("{path}.legs"),
                "route needs at least one leg",
            ));
        }
        let mut last_index: Option<usize> = None;
        for (li, leg) in self.legs.iter().enumerate() {
            let leg_path = format!("{path}.legs[{li}]");
            match corridor.zone_index(&leg.zone) {
                None => issues.push(ValidationIssue::new(
                    format!("{leg_path}.zone"),
                    format!("unknown zone `{}`", leg.zone),
                )),
                Some(zi) => {
                    if corridor.zones[zi].approach(&leg.approach).is_none() {
                        issues.push(ValidationIssue::new(
                            format!("{leg_path}.approach"),
                            format!("zone `{}` has no approach `{}`", leg.zone, leg.approach),
                        ));
                    }
                    if let Some(prev) = last_index {
                        if zi <= prev {
                            issues.push(ValidationIssue::new(
                                format!("{leg_path}.zone"),
                                "legs must follow the corridor zone order",
                            ));
                        }
                    }
                    last_index = Some(zi);
                }
            }
            if leg.link_length < T::zero() {
                issues.push(ValidationIssue::new(format!("{leg_path}.link_length"), "must be >= 0"));
            }
        }
        issues
    }
}

/// Relation of another vehicle to vehicle `i` at one conflict zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationClass {
    /// Same approach lane: a rear-end relation.
    SameLane,
    /// Different approaches whose paths intersect inside the zone.
    LateralConflict,
    /// Different approaches that never interact inside the zone.
    NoConflict,
}

pub fn classify_relation<T: TimeValue>(
    zone: &ConflictZoneSpec<T>,
    route_i: &Route<T>,
    route_j: &Route<T>,
) -> Result<RelationClass, CorridorError> {
    let leg_i = route_i
        .leg(&zone.id)
        .ok_or_else(|| CorridorError::RouteMissesZone(zone.id.clone()))?;
    let leg_j = route_j
        .leg(&zone.id)
        .ok_or_else(|| CorridorError::RouteMissesZone(zone.id.clone()))?;
    for leg in [leg_i, leg_j] {
        if zone.approach(&leg.approach).is_none() {
            return Err(CorridorError::UnknownApproach {
                zone: zone.id.clone(),
                approach: leg.approach.clone(),
            });
        }
    }
    Ok(classify_approaches(zone, &leg_i.approach, &leg_j.approach))
}

pub fn classify_approaches<T>(zone: &ConflictZoneSpec<T>, a: &ApproachId, b: &ApproachId) -> RelationClass {
    if a == b {
        RelationClass::SameLane
    } else if zone.conflicts(a, b) {
        RelationClass::LateralConflict
    } else {
        RelationClass::NoConflict
    }
}

/// Earliest and latest conflict-zone entry for a vehicle that enters the
/// control zone at `t0`, travelling the whole control zone at `v_max` or
/// `v_min`. Acceleration transients are ignored.
pub fn feasible_time_bounds<T: TimeValue>(
    approach: &ApproachSpec<T>,
    t0: T,
    params: &GlobalParams<T>,
) -> Result<(T, T), CorridorError> {
    let length = approach.control_zone_length;
    let t_min = t0 + length / params.v_max;
    let t_max = if params.v_min > T::zero() {
        t0 + length / params.v_min
    } else {
        match params.horizon_cap {
            Some(cap) => t0 + cap.max_of(length / params.v_max),
            None => return Err(CorridorError::UnboundedHorizon),
        }
    };
    Ok((t_min, t_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn params() -> GlobalParams {
        GlobalParams {
            rho: 1.2,
            delta: 10.0,
            v_min: 5.0,
            v_max: 20.0,
            u_min: -3.0,
            u_max: 2.5,
            horizon_cap: None,
        }
    }

    fn zone() -> ConflictZoneSpec {
        ConflictZoneSpec {
            id: "x".into(),
            zone_length: 20.0,
            approaches: ["A1", "A2", "A3"]
                .iter()
                .map(|id| ApproachSpec {
                    id: (*id).into(),
                    control_zone_length: 200.0,
                })
                .collect(),
            conflict_pairs: vec![("A1".into(), "A2".into())],
        }
    }

    fn route(approach: &str) -> Route {
        Route {
            legs: vec![RouteLeg {
                zone: "x".into(),
                approach: approach.into(),
                exit_link: "out".into(),
                link_length: 0.0,
            }],
        }
    }

    #[test]
    fn classification_follows_definition() {
        let z = zone();
        let cases = [
            ("A1", "A1", RelationClass::SameLane),
            ("A1", "A2", RelationClass::LateralConflict),
            ("A2", "A1", RelationClass::LateralConflict),
            ("A1", "A3", RelationClass::NoConflict),
            ("A3", "A1", RelationClass::NoConflict),
        ];
        for (a, b, expected) in cases {
            assert_eq!(classify_relation(&z, &route(a), &route(b)).unwrap(), expected);
        }
    }

    #[test]
    fn classification_requires_zone_on_route() {
        let z = zone();
        let mut other = route("A1");
        other.legs[0].zone = "elsewhere".into();
        assert_eq!(
            classify_relation(&z, &route("A1"), &other),
            Err(CorridorError::RouteMissesZone("x".into()))
        );
    }

    #[test]
    fn feasible_bounds_examples() {
        let p = params();
        let a200 = ApproachSpec {
            id: "a".into(),
            control_zone_length: 200.0,
        };
        assert_eq!(feasible_time_bounds(&a200, 0.0, &p).unwrap(), (10.0, 40.0));
        assert_eq!(feasible_time_bounds(&a200, 7.0, &p).unwrap(), (17.0, 47.0));
        let a150 = ApproachSpec {
            id: "a".into(),
            control_zone_length: 150.0,
        };
        let p15 = GlobalParams { v_max: 15.0, ..p };
        assert_eq!(feasible_time_bounds(&a150, 0.0, &p15).unwrap(), (10.0, 30.0));
    }

    #[test]
    fn zero_min_speed_needs_horizon_cap() {
        let mut p = params();
        p.v_min = 0.0;
        let a = ApproachSpec {
            id: "a".into(),
            control_zone_length: 200.0,
        };
        assert_eq!(feasible_time_bounds(&a, 0.0, &p), Err(CorridorError::UnboundedHorizon));
        p.horizon_cap = Some(60.0);
        assert_eq!(feasible_time_bounds(&a, 2.0, &p).unwrap(), (12.0, 62.0));
    }

    #[test]
    fn exact_bounds_with_rationals() {
        let p = GlobalParams {
            rho: Rational64::new(6, 5),
            delta: Rational64::from_integer(10),
            v_min: Rational64::from_integer(3),
            v_max: Rational64::from_integer(7),
            u_min: Rational64::from_integer(-3),
            u_max: Rational64::from_integer(2),
            horizon_cap: None,
        };
        let a = ApproachSpec {
            id: "a".into(),
            control_zone_length: Rational64::from_integer(100),
        };
        let (lo, hi) = feasible_time_bounds(&a, Rational64::from_integer(1), &p).unwrap();
        assert_eq!(lo, Rational64::new(107, 7));
        assert_eq!(hi, Rational64::new(103, 3));
        assert!(lo < hi);
    }

    #[test]
    fn validation_reports_every_problem() {
        let mut corridor = CorridorSpec {
            params: params(),
            zones: vec![zone(), zone()],
        };
        corridor.params.rho = 0.0;
        corridor.zones[0].conflict_pairs.push(("A1".into(), "A1".into()));
        corridor.zones[0].conflict_pairs.push(("A1".into(), "B9".into()));
        let issues = corridor.validate();
        let paths: Vec<_> = issues.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"corridor.params.rho"));
        assert!(paths.contains(&"corridor.zones[1].id"));
        assert!(paths.contains(&"corridor.zones[0].conflict_pairs[1]"));
        assert!(paths.contains(&"corridor.zones[0].conflict_pairs[2]"));
    }

    #[test]
    fn route_must_follow_zone_order() {
        let mut corridor = CorridorSpec {
            params: params(),
            zones: vec![zone()],
        };
        let mut second = zone();
        second.id = "y".into();
        corridor.zones.push(second);
        let route = Route {
            legs: vec![
                RouteLeg {
                    zone: "y".into(),
                    approach: "A1".into(),
                    exit_link: "l".into(),
                    link_length: 10.0,
                },
                RouteLeg {
                    zone: "x".into(),
                    approach: "A1".into(),
                    exit_link: "m".into(),
                    link_length: 10.0,
                },
            ],
        };
        let issues = route.validate(&corridor, "routes.r");
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "routes.r.legs[1].zone");
    }
}
