//! Behavior predicates over reach tubes.
//!
//! Each behavior has a sufficient condition on a segment box (strict
//! inequalities on bounds) and a sufficient condition for its negation.

use crate::circuit::Behavior;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::reach::{ReachTube, TubeProperty, Verdict, VerdictKind};
use serde::{Deserialize, Serialize};

pub const DEFAULT_GRACE: f64 = 0.1;
pub const DEFAULT_RESP_EPSILON: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentCheck {
    Holds,
    Fails,
    Inconclusive,
}

/// How a violated verdict is reached.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationMode {
    /// Negation holds on every checked segment.
    #[default]
    Strict,
    /// Negation holds on at least one checked segment.
    Partial,
}

fn coords(segment: &[Interval], ava: usize, avb: usize) -> Result<(Interval, Interval)> {
    match (segment.get(ava), segment.get(avb)) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(Error::config(format!(
            "segment of dimension {} lacks readout coordinates {ava}/{avb}",
            segment.len()
        ))),
    }
}

/// Holds iff V_AVA is strictly above V_AVB on the whole box.
pub fn reversal_condition(segment: &[Interval], ava: usize, avb: usize) -> Result<SegmentCheck> {
    let (a, b) = coords(segment, ava, avb)?;
    Ok(if a.lo > b.hi {
        SegmentCheck::Holds
    } else if a.hi < b.lo {
        SegmentCheck::Fails
    } else {
        SegmentCheck::Inconclusive
    })
}

pub fn acceleration_condition(segment: &[Interval], ava: usize, avb: usize) -> Result<SegmentCheck> {
    reversal_condition(segment, avb, ava)
}

/// Holds iff V_AVA − V_AVB lies in [−ε, ε] over the box.
pub fn no_response_condition(segment: &[Interval], ava: usize, avb: usize, eps: f64) -> Result<SegmentCheck> {
    if !(eps > 0.0) {
        return Err(Error::config("resp_epsilon must be positive"));
    }
    let (a, b) = coords(segment, ava, avb)?;
    let d = a - b;
    Ok(if d.lo >= -eps && d.hi <= eps {
        SegmentCheck::Holds
    } else if d.lo > eps || d.hi < -eps {
        SegmentCheck::Fails
    } else {
        SegmentCheck::Inconclusive
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorProperty {
    pub kind: Behavior,
    /// Checked interval [a, b].
    pub t_int: (f64, f64),
    pub grace: f64,
    pub resp_epsilon: f64,
    pub ava: usize,
    pub avb: usize,
    /// Read reversal as V_AVB > V_AVA instead.
    pub flip: bool,
    pub violation: ViolationMode,
}

impl BehaviorProperty {
    /// Checked window from onset + grace to the horizon.
    pub fn new(kind: Behavior, onset: f64, grace: f64, horizon: f64, ava: usize, avb: usize) -> Result<Self> {
        let p = BehaviorProperty {
            kind,
            t_int: (onset + grace, horizon),
            grace,
            resp_epsilon: DEFAULT_RESP_EPSILON,
            ava,
            avb,
            flip: false,
            violation: ViolationMode::Strict,
        };
        p.validate(onset)?;
        Ok(p)
    }

    pub fn validate(&self, onset: f64) -> Result<()> {
        if !(self.grace >= 0.0) {
            return Err(Error::config("grace must be nonnegative"));
        }
        if !(self.resp_epsilon > 0.0) {
            return Err(Error::config("resp_epsilon must be positive"));
        }
        let (a, b) = self.t_int;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(Error::config(format!("bad checked interval [{a}, {b}]")));
        }
        if a < onset + self.grace - 1e-12 {
            return Err(Error::config(format!(
                "checked interval starts at {a}, before onset + grace = {}",
                onset + self.grace
            )));
        }
        Ok(())
    }

    pub fn segment_check(&self, segment: &[Interval]) -> Result<SegmentCheck> {
        let (ava, avb) = if self.flip { (self.avb, self.ava) } else { (self.ava, self.avb) };
        match self.kind {
            Behavior::Reversal => reversal_condition(segment, ava, avb),
            Behavior::Acceleration => acceleration_condition(segment, ava, avb),
            Behavior::NoResponse => no_response_condition(segment, ava, avb, self.resp_epsilon),
        }
    }

    /// The segment condition on a single state.
    pub fn point_check(&self, x: &[f64]) -> Result<SegmentCheck> {
        self.segment_check(&crate::interval::point_box(x))
    }

    pub fn evaluate_kind(&self, tube: &ReachTube) -> Result<VerdictKind> {
        let (a, b) = self.t_int;
        if tube.horizon() < b * (1.0 - 1e-12) {
            return Err(Error::config(format!(
                "tube horizon {} does not cover the checked interval end {b}",
                tube.horizon()
            )));
        }
        let mut all_hold = true;
        let mut all_fail = true;
        let mut any_fail = false;
        let mut any = false;
        for (seg, _) in tube.segments_in(a, b) {
            any = true;
            match self.segment_check(seg)? {
                SegmentCheck::Holds => all_fail = false,
                SegmentCheck::Fails => {
                    all_hold = false;
                    any_fail = true;
                }
                SegmentCheck::Inconclusive => {
                    all_hold = false;
                    all_fail = false;
                }
            }
        }
        if !any {
            return Ok(VerdictKind::Unknown);
        }
        Ok(if all_hold {
            VerdictKind::Satisfied
        } else if all_fail || (self.violation == ViolationMode::Partial && any_fail) {
            VerdictKind::Violated
        } else {
            VerdictKind::Unknown
        })
    }
}

/// Verdict for one tube under one behavior property.
pub fn evaluate(tube: &ReachTube, prop: &BehaviorProperty) -> Result<Verdict> {
    Ok(Verdict { kind: prop.evaluate_kind(tube)?, cell: tube.cell.clone(), delta: tube.delta })
}

impl TubeProperty for BehaviorProperty {
    fn name(&self) -> String {
        self.kind.as_str().to_string()
    }

    fn evaluate(&self, tube: &ReachTube) -> VerdictKind {
        match self.evaluate_kind(tube) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("{}: {e}", self.name());
                VerdictKind::Unknown
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reach::Cell;
    use proptest::prelude::*;

    const MV: f64 = 1e-3;

    fn seg(ava: (f64, f64), avb: (f64, f64)) -> Vec<Interval> {
        vec![Interval::new(ava.0 * MV, ava.1 * MV), Interval::new(avb.0 * MV, avb.1 * MV)]
    }

    fn tube(segs: Vec<Vec<Interval>>, dt: f64) -> ReachTube {
        let segments = segs.into_iter().enumerate().map(|(k, b)| (b, (k as f64 * dt, (k + 1) as f64 * dt))).collect();
        ReachTube {
            segments,
            cell: Cell { center: vec![0.0, 0.0], radius: vec![0.0, 0.0] },
            delta: 0.0,
            beta_max: vec![],
            weights: vec![1.0, 1.0],
            enclosure_width: 0.0,
        }
    }

    fn prop(kind: Behavior) -> BehaviorProperty {
        BehaviorProperty::new(kind, 0.0, 0.1, 0.4, 0, 1).unwrap()
    }

    #[test]
    fn reversal_examples() {
        let above = seg((-20.0, -10.0), (-40.0, -30.0));
        assert_eq!(reversal_condition(&above, 0, 1).unwrap(), SegmentCheck::Holds);
        let overlap = seg((-20.0, -10.0), (-15.0, -5.0));
        assert_eq!(reversal_condition(&overlap, 0, 1).unwrap(), SegmentCheck::Inconclusive);
        assert!(matches!(reversal_condition(&above, 0, 2), Err(Error::Config(_))));
    }

    #[test]
    fn acceleration_examples() {
        let swapped = seg((-40.0, -30.0), (-20.0, -10.0));
        assert_eq!(acceleration_condition(&swapped, 0, 1).unwrap(), SegmentCheck::Holds);
        let above = seg((-20.0, -10.0), (-40.0, -30.0));
        assert_eq!(acceleration_condition(&above, 0, 1).unwrap(), SegmentCheck::Fails);
        let tie = seg((-20.0, -20.0), (-20.0, -20.0));
        assert_eq!(acceleration_condition(&tie, 0, 1).unwrap(), SegmentCheck::Inconclusive);
        assert_eq!(reversal_condition(&tie, 0, 1).unwrap(), SegmentCheck::Inconclusive);
    }

    #[test]
    fn no_response_examples() {
        let eq = seg((-20.0, -20.0), (-20.0, -20.0));
        assert_eq!(no_response_condition(&eq, 0, 1, 1e-9).unwrap(), SegmentCheck::Holds);
        let gap = seg((-20.0, -20.0), (-30.0, -30.0));
        assert_eq!(no_response_condition(&gap, 0, 1, MV).unwrap(), SegmentCheck::Fails);
        let straddle = seg((-20.0, -19.0), (-20.5, -20.5));
        assert_eq!(no_response_condition(&straddle, 0, 1, MV).unwrap(), SegmentCheck::Inconclusive);
        assert!(no_response_condition(&eq, 0, 1, 0.0).is_err());
    }

    #[test]
    fn tube_verdicts() {
        let above = seg((-20.0, -10.0), (-40.0, -30.0));
        let overlap = seg((-20.0, -10.0), (-15.0, -5.0));
        let t = tube(vec![above.clone(); 8], 0.05);
        assert_eq!(prop(Behavior::Reversal).evaluate_kind(&t).unwrap(), VerdictKind::Satisfied);
        assert_eq!(prop(Behavior::Acceleration).evaluate_kind(&t).unwrap(), VerdictKind::Violated);
        let mut mixed = vec![above.clone(); 8];
        mixed[5] = overlap;
        let t = tube(mixed, 0.05);
        assert_eq!(prop(Behavior::Reversal).evaluate_kind(&t).unwrap(), VerdictKind::Unknown);
    }

    #[test]
    fn one_tube_two_checkers() {
        let below = seg((-40.0, -30.0), (-20.0, -10.0));
        let t = tube(vec![below; 8], 0.05);
        assert_eq!(prop(Behavior::Reversal).evaluate_kind(&t).unwrap(), VerdictKind::Violated);
        assert_eq!(prop(Behavior::Acceleration).evaluate_kind(&t).unwrap(), VerdictKind::Satisfied);
        assert_eq!(prop(Behavior::NoResponse).evaluate_kind(&t).unwrap(), VerdictKind::Violated);
    }

    #[test]
    fn flip_swaps_convention() {
        let below = seg((-40.0, -30.0), (-20.0, -10.0));
        let t = tube(vec![below; 8], 0.05);
        let mut p = prop(Behavior::Reversal);
        p.flip = true;
        assert_eq!(p.evaluate_kind(&t).unwrap(), VerdictKind::Satisfied);
    }

    #[test]
    fn partial_violation_mode() {
        let above = seg((-20.0, -10.0), (-40.0, -30.0));
        let overlap = seg((-20.0, -10.0), (-15.0, -5.0));
        let mut segs = vec![overlap; 8];
        segs[6] = above;
        let t = tube(segs, 0.05);
        let mut p = prop(Behavior::Acceleration);
        assert_eq!(p.evaluate_kind(&t).unwrap(), VerdictKind::Unknown);
        p.violation = ViolationMode::Partial;
        assert_eq!(p.evaluate_kind(&t).unwrap(), VerdictKind::Violated);
    }

    #[test]
    fn window_before_grace_rejected() {
        let mut p = prop(Behavior::Reversal);
        p.t_int = (0.05, 0.4);
        assert!(p.validate(0.0).is_err());
        assert!(BehaviorProperty::new(Behavior::Reversal, 0.0, -0.1, 0.4, 0, 1).is_err());
    }

    #[test]
    fn short_tube_is_an_error() {
        let t = tube(vec![seg((-20.0, -10.0), (-40.0, -30.0)); 4], 0.05);
        assert!(prop(Behavior::Reversal).evaluate_kind(&t).is_err());
        assert_eq!(TubeProperty::evaluate(&prop(Behavior::Reversal), &t), VerdictKind::Unknown);
    }

    fn ivl(lo: f64, w: f64) -> Interval {
        Interval::new(lo, lo + w)
    }

    proptest! {
        #[test]
        fn grace_segments_do_not_matter(junk in proptest::collection::vec((-1.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0), 2)) {
            // segments [0, 0.05] and [0.05, 0.1] end at or before onset + grace
            let above = seg((-20.0, -10.0), (-40.0, -30.0));
            let mut segs = vec![above; 8];
            for (k, (a, aw, b, bw)) in junk.into_iter().enumerate() {
                segs[k] = vec![ivl(a, aw), ivl(b, bw)];
            }
            let t = tube(segs, 0.05);
            for kind in Behavior::ALL {
                let clean = tube(vec![seg((-20.0, -10.0), (-40.0, -30.0)); 8], 0.05);
                prop_assert_eq!(prop(kind).evaluate_kind(&t).unwrap(), prop(kind).evaluate_kind(&clean).unwrap());
            }
        }

        #[test]
        fn exclusive_and_monotone(a in -0.05f64..0.0, aw in 0.0f64..0.02, b in -0.05f64..0.0, bw in 0.0f64..0.02,
                                  s1 in 0.0f64..1.0, s2 in 0.0f64..1.0, eps in 1e-4f64..1e-2) {
            let big = vec![ivl(a, aw), ivl(b, bw)];
            prop_assert!(!(reversal_condition(&big, 0, 1).unwrap() == SegmentCheck::Holds
                && acceleration_condition(&big, 0, 1).unwrap() == SegmentCheck::Holds));
            let small = vec![ivl(a + s1 * aw * 0.5, aw * 0.5), ivl(b + s2 * bw * 0.5, bw * 0.5)];
            let checks: [fn(&[Interval]) -> SegmentCheck; 3] = [
                |s| reversal_condition(s, 0, 1).unwrap(),
                |s| acceleration_condition(s, 0, 1).unwrap(),
                |s| no_response_condition(s, 0, 1, 1e-3).unwrap(),
            ];
            for c in checks {
                let (x, y) = (c(&big), c(&small));
                if x != SegmentCheck::Inconclusive {
                    prop_assert_eq!(x, y);
                }
            }
            let (x, y) = (no_response_condition(&big, 0, 1, eps).unwrap(), no_response_condition(&small, 0, 1, eps).unwrap());
            if x != SegmentCheck::Inconclusive {
                prop_assert_eq!(x, y);
            }
        }
    }
}
