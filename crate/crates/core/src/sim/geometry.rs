//! Route geometry as a chain of lane segments in route coordinates.

use std::fmt;

use serde::Serialize;

use crate::corridor::{ApproachId, CorridorSpec, LinkId, Route, ZoneId};

/// Identity of a single-lane stretch shared by every route that uses it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LaneKey {
    Control(ZoneId, ApproachId),
    Conflict(ZoneId, ApproachId, LinkId),
    Link(LinkId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Control,
    Conflict,
    Link,
}

#[derive(Debug, Clone)]
pub struct PlannedSegment {
    pub key: LaneKey,
    pub start: f64,
    pub end: f64,
    pub leg: usize,
}

impl PlannedSegment {
    pub fn phase(&self) -> Phase {
        match self.key {
            LaneKey::Control(..) => Phase::Control,
            LaneKey::Conflict(..) => Phase::Conflict,
            LaneKey::Link(..) => Phase::Link,
        }
    }

    /// Label used in trajectory output, e.g. `control:merge`.
    pub fn label(&self) -> String {
        match &self.key {
            LaneKey::Control(z, _) => format!("control:{z}"),
            LaneKey::Conflict(z, _, _) => format!("conflict:{z}"),
            LaneKey::Link(l) => format!("link:{l}"),
        }
    }
}

/// Offsets of one leg along its route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegGeometry {
    pub control_start: f64,
    pub conflict_start: f64,
    pub conflict_end: f64,
    pub link_end: f64,
}

impl LegGeometry {
    pub fn control_length(&self) -> f64 {
        self.conflict_start - self.control_start
    }

    pub fn zone_length(&self) -> f64 {
        self.conflict_end - self.conflict_start
    }

    pub fn link_length(&self) -> f64 {
        self.link_end - self.conflict_end
    }
}

#[derive(Debug, Clone)]
pub struct RoutePlan {
    pub name: String,
    pub route: Route,
    pub legs: Vec<LegGeometry>,
    pub segments: Vec<PlannedSegment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnknownGeometry(pub String);

impl fmt::Display for UnknownGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl RoutePlan {
    pub fn new(name: &str, route: &Route, corridor: &CorridorSpec) -> Result<Self, UnknownGeometry> {
        let mut legs = Vec::new();
        let mut segments = Vec::new();
        let mut s = 0.0;
        for (i, leg) in route.legs.iter().enumerate() {
            let zone = corridor
                .zone(&leg.zone)
                .ok_or_else(|| UnknownGeometry(format!("route {name}: unknown zone {}", leg.zone)))?;
            let approach = zone
                .approach(&leg.approach)
                .ok_or_else(|| UnknownGeometry(format!("route {name}: unknown approach {}", leg.approach)))?;
            let g = LegGeometry {
                control_start: s,
                conflict_start: s + approach.control_zone_length,
                conflict_end: s + approach.control_zone_length + zone.zone_length,
                link_end: s + approach.control_zone_length + zone.zone_length + leg.link_length,
            };
            segments.push(PlannedSegment {
                key: LaneKey::Control(leg.zone.clone(), leg.approach.clone()),
                start: g.control_start,
                end: g.conflict_start,
                leg: i,
            });
            segments.push(PlannedSegment {
                key: LaneKey::Conflict(leg.zone.clone(), leg.approach.clone(), leg.exit_link.clone()),
                start: g.conflict_start,
                end: g.conflict_end,
                leg: i,
            });
            if leg.link_length > 0.0 {
                segments.push(PlannedSegment {
                    key: LaneKey::Link(leg.exit_link.clone()),
                    start: g.conflict_end,
                    end: g.link_end,
                    leg: i,
                });
            }
            s = g.link_end;
            legs.push(g);
        }
        Ok(Self {
            name: name.to_string(),
            route: route.clone(),
            legs,
            segments,
        })
    }

    pub fn length(&self) -> f64 {
        self.legs.last().map_or(0.0, |g| g.link_end)
    }

    /// Index of the segment containing `s`; the later one at a boundary.
    pub fn segment_index(&self, s: f64) -> usize {
        self.segments.partition_point(|seg| seg.start <= s).saturating_sub(1)
    }

    pub fn segment_at(&self, s: f64) -> &PlannedSegment {
        &self.segments[self.segment_index(s)]
    }

    /// Position `s_other` on `other` expressed in this route's coordinates,
    /// when the point lies on a segment this route also uses at or after
    /// segment `from`.
    pub fn translate(&self, other: &RoutePlan, s_other: f64, from: usize) -> Option<f64> {
        let seg = other.segment_at(s_other);
        let mine = self.segments[from..].iter().find(|m| m.key == seg.key)?;
        Some(mine.start + (s_other - seg.start))
    }
}

/// A vehicle's position as seen by the leader search.
#[derive(Debug, Clone, Copy)]
pub struct LanePosition<'a> {
    pub id: u32,
    pub plan: &'a RoutePlan,
    pub s: f64,
    pub v: f64,
}

/// Nearest vehicle ahead of `me` on its own lane chain within `horizon`
/// meters: `(gap, leader speed, leader id)`.
pub fn leader_ahead<'a>(
    me: &LanePosition<'a>,
    others: impl IntoIterator<Item = LanePosition<'a>>,
    horizon: f64,
) -> Option<(f64, f64, u32)> {
    let from = me.plan.segment_index(me.s);
    let mut best: Option<(f64, f64, u32)> = None;
    for x in others {
        if x.id == me.id {
            continue;
        }
        let Some(sx) = me.plan.translate(x.plan, x.s, from) else {
            continue;
        };
        let gap = sx - me.s;
        let ahead = gap > 0.0 || (gap == 0.0 && x.id < me.id);
        if ahead && gap <= horizon && best.is_none_or(|b| gap < b.0) {
            best = Some((gap, x.v, x.id));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corridor::{ApproachSpec, ConflictZoneSpec, GlobalParams, RouteLeg};

    fn corridor() -> CorridorSpec {
        CorridorSpec {
            params: GlobalParams {
                rho: 1.2,
                delta: 5.0,
                v_min: 5.0,
                v_max: 20.0,
                u_min: -3.0,
                u_max: 2.5,
                horizon_cap: None,
            },
            zones: vec![ConflictZoneSpec {
                id: "m".into(),
                zone_length: 20.0,
                approaches: vec![
                    ApproachSpec {
                        id: "main".into(),
                        control_zone_length: 200.0,
                    },
                    ApproachSpec {
                        id: "ramp".into(),
                        control_zone_length: 150.0,
                    },
                ],
                conflict_pairs: vec![("main".into(), "ramp".into())],
            }],
        }
    }

    fn route(approach: &str) -> Route {
        Route {
            legs: vec![RouteLeg {
                zone: "m".into(),
                approach: approach.into(),
                exit_link: "out".into(),
                link_length: 100.0,
            }],
        }
    }

    #[test]
    fn offsets_accumulate() {
        let plan = RoutePlan::new("r", &route("main"), &corridor()).unwrap();
        assert_eq!(plan.length(), 320.0);
        assert_eq!(plan.segments.len(), 3);
        assert_eq!(plan.segment_at(200.0).phase(), Phase::Conflict);
        assert_eq!(plan.segment_at(199.9).label(), "control:m");
    }

    #[test]
    fn merging_routes_share_the_exit_link_only() {
        let c = corridor();
        let main = RoutePlan::new("a", &route("main"), &c).unwrap();
        let ramp = RoutePlan::new("b", &route("ramp"), &c).unwrap();
        // Ramp vehicle on the link, 10 m past the merge.
        assert_eq!(main.translate(&ramp, 180.0, 0), Some(230.0));
        // Ramp vehicle still on its own control zone is invisible to main.
        assert_eq!(main.translate(&ramp, 100.0, 0), None);
        let me = LanePosition {
            id: 2,
            plan: &main,
            s: 215.0,
            v: 10.0,
        };
        let other = LanePosition {
            id: 1,
            plan: &ramp,
            s: 180.0,
            v: 9.0,
        };
        assert_eq!(leader_ahead(&me, [other], 100.0), Some((15.0, 9.0, 1)));
    }
}
