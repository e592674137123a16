//! Vector-field abstraction shared by the simulator, discrepancy and reach
//! code, plus a few analytic systems used as test fixtures.

use crate::error::Result;
use crate::interval::Interval;
use crate::linalg::{IMat, Mat};

pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);

    fn jacobian(&self, t: f64, x: &[f64]) -> Mat;

    /// Interval enclosure of every Jacobian entry over `t × b`.
    fn jacobian_enclosure(&self, t: Interval, b: &[Interval]) -> Result<IMat>;

    /// Times where the field is discontinuous in t. Simulation nodes land on them.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Coordinates whose derivative is identically zero.
    fn constant_coords(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Positive diagonal scaling for the discrepancy metric, evaluated at a
    /// reference state. Entries for constant coordinates are ignored.
    fn metric_weights(&self, _x: &[f64]) -> Vec<f64> {
        vec![1.0; self.dim()]
    }

    fn eval_vec(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.dim()];
        self.eval(t, x, &mut dx);
        dx
    }
}

/// ẋ = A x
#[derive(Clone, Debug)]
pub struct Linear {
    pub a: Mat,
}

impl Linear {
    pub fn new(a: Mat) -> Self {
        Linear { a }
    }

    /// ẋ = k x in one dimension.
    pub fn scalar(k: f64) -> Self {
        Linear { a: Mat::from_rows(&[vec![k]]) }
    }
}

impl VectorField for Linear {
    fn dim(&self) -> usize {
        self.a.n
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let n = self.a.n;
        for i in 0..n {
            dx[i] = (0..n).map(|j| self.a[(i, j)] * x[j]).sum();
        }
    }

    fn jacobian(&self, _t: f64, _x: &[f64]) -> Mat {
        self.a.clone()
    }

    fn jacobian_enclosure(&self, _t: Interval, _b: &[Interval]) -> Result<IMat> {
        Ok(IMat::from_point(&self.a))
    }
}

/// ẋ = y, ẏ = μ(1 − x²)y − x
#[derive(Clone, Debug)]
pub struct VanDerPol {
    pub mu: f64,
}

impl VectorField for VanDerPol {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        dx[0] = x[1];
        dx[1] = self.mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
    }

    fn jacobian(&self, _t: f64, x: &[f64]) -> Mat {
        Mat::from_rows(&[
            vec![0.0, 1.0],
            vec![-2.0 * self.mu * x[0] * x[1] - 1.0, self.mu * (1.0 - x[0] * x[0])],
        ])
    }

    fn jacobian_enclosure(&self, _t: Interval, b: &[Interval]) -> Result<IMat> {
        let mu = Interval::point(self.mu);
        let one = Interval::point(1.0);
        let mut j = IMat::zeros(2);
        j[(0, 1)] = one;
        j[(1, 0)] = (b[0] * b[1]).scale(-2.0 * self.mu) - one;
        j[(1, 1)] = mu * (one - b[0].sqr());
        Ok(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vdp_jacobian_inside_enclosure() {
        let f = VanDerPol { mu: 0.7 };
        let b = [Interval::new(-0.5, 0.3), Interval::new(1.0, 1.2)];
        let e = f.jacobian_enclosure(Interval::point(0.0), &b).unwrap();
        for &(x, y) in &[(-0.5, 1.0), (0.3, 1.2), (0.0, 1.1), (-0.2, 1.05)] {
            assert!(e.contains(&f.jacobian(0.0, &[x, y])));
        }
    }

    #[test]
    fn linear_eval() {
        let f = Linear::new(Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]));
        assert_eq!(f.eval_vec(0.0, &[2.0, 3.0]), vec![3.0, -2.0]);
    }
}
