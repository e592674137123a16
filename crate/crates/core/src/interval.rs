//! Closed real intervals with outward rounding.
//!
//! Every arithmetic result is widened by one ulp in each direction, which
//! covers the round-to-nearest error of the basic operations. `exp` is
//! widened by two ulps to absorb libm error.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(x: f64) -> f64 {
    if x.is_finite() {
        x.next_down()
    } else {
        x
    }
}

#[inline]
fn up(x: f64) -> f64 {
    if x.is_finite() {
        x.next_up()
    } else {
        x
    }
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };

    /// Panics in debug builds when `lo > hi`.
    #[inline]
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "bad interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    #[inline]
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    /// Interval `[c - r, c + r]`, rounded outward.
    pub fn centered(c: f64, r: f64) -> Self {
        Interval { lo: down(c - r), hi: up(c + r) }
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    #[inline]
    pub fn rad(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    /// Largest absolute value in the interval.
    #[inline]
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    #[inline]
    pub fn contains_interval(&self, o: &Interval) -> bool {
        self.lo <= o.lo && o.hi <= self.hi
    }

    #[inline]
    pub fn hull(&self, o: &Interval) -> Interval {
        Interval { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn intersect(&self, o: &Interval) -> Option<Interval> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Widen by `r` on both sides.
    pub fn inflate(&self, r: f64) -> Interval {
        Interval { lo: down(self.lo - r), hi: up(self.hi + r) }
    }

    pub fn scale(&self, k: f64) -> Interval {
        let a = self.lo * k;
        let b = self.hi * k;
        Interval { lo: down(a.min(b)), hi: up(a.max(b)) }
    }

    pub fn add_scalar(&self, k: f64) -> Interval {
        Interval { lo: down(self.lo + k), hi: up(self.hi + k) }
    }

    pub fn recip(&self) -> Option<Interval> {
        if self.lo <= 0.0 && self.hi >= 0.0 {
            return None;
        }
        Some(Interval { lo: down(1.0 / self.hi), hi: up(1.0 / self.lo) })
    }

    pub fn div(&self, o: &Interval) -> Option<Interval> {
        o.recip().map(|r| *self * r)
    }

    pub fn sqr(&self) -> Interval {
        let a = self.lo * self.lo;
        let b = self.hi * self.hi;
        if self.contains(0.0) {
            Interval { lo: 0.0, hi: up(a.max(b)) }
        } else {
            Interval { lo: down(a.min(b)).max(0.0), hi: up(a.max(b)) }
        }
    }

    pub fn exp(&self) -> Interval {
        Interval {
            lo: down(down(self.lo.exp())).max(0.0),
            hi: up(up(self.hi.exp())),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

impl Add for Interval {
    type Output = Interval;
    #[inline]
    fn add(self, o: Interval) -> Interval {
        Interval { lo: down(self.lo + o.lo), hi: up(self.hi + o.hi) }
    }
}

impl Sub for Interval {
    type Output = Interval;
    #[inline]
    fn sub(self, o: Interval) -> Interval {
        Interval { lo: down(self.lo - o.hi), hi: up(self.hi - o.lo) }
    }
}

impl Neg for Interval {
    type Output = Interval;
    #[inline]
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let mut lo = p[0];
        let mut hi = p[0];
        for &v in &p[1..] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval { lo: down(lo), hi: up(hi) }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

/// Axis-aligned box.
pub type IBox = Vec<Interval>;

pub fn box_hull(a: &[Interval], b: &[Interval]) -> IBox {
    a.iter().zip(b).map(|(x, y)| x.hull(y)).collect()
}

pub fn box_contains_point(b: &[Interval], x: &[f64]) -> bool {
    b.iter().zip(x).all(|(i, &v)| i.contains(v))
}

pub fn box_center(b: &[Interval]) -> Vec<f64> {
    b.iter().map(|i| i.mid()).collect()
}

/// Largest coordinate width.
pub fn box_diameter(b: &[Interval]) -> f64 {
    b.iter().map(|i| i.width()).fold(0.0, f64::max)
}

pub fn point_box(x: &[f64]) -> IBox {
    x.iter().map(|&v| Interval::point(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_ops() {
        let a = Interval::new(1.0, 2.0);
        let b = Interval::new(-3.0, 0.5);
        let s = a + b;
        assert!(s.contains(-2.0) && s.contains(2.5));
        let p = a * b;
        assert!(p.contains(-6.0) && p.contains(1.0));
        assert!(b.recip().is_none());
        let r = a.recip().unwrap();
        assert!(r.contains(0.5) && r.contains(1.0));
        assert_eq!((-a).lo, -2.0);
    }

    #[test]
    fn sqr_through_zero() {
        let s = Interval::new(-1.0, 2.0).sqr();
        assert_eq!(s.lo, 0.0);
        assert!(s.contains(4.0));
    }

    fn iv() -> impl Strategy<Value = Interval> {
        (-1e3f64..1e3, 0.0f64..1e2).prop_map(|(a, w)| Interval::new(a, a + w))
    }

    proptest! {
        #[test]
        fn arithmetic_encloses_samples(a in iv(), b in iv(), s in 0.0f64..1.0, u in 0.0f64..1.0) {
            let x = a.lo + s * a.width();
            let y = b.lo + u * b.width();
            prop_assert!((a + b).contains(x + y));
            prop_assert!((a - b).contains(x - y));
            prop_assert!((a * b).contains(x * y));
            prop_assert!(a.sqr().contains(x * x));
            if let Some(q) = a.div(&b) {
                prop_assert!(q.contains(x / y));
            }
        }

        #[test]
        fn exp_encloses(a in -50.0f64..50.0, w in 0.0f64..5.0, s in 0.0f64..1.0) {
            let i = Interval::new(a, a + w);
            let x = a + s * w;
            prop_assert!(i.exp().contains(x.exp()));
        }
    }
}
