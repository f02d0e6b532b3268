//! Directions on the sphere with exact hyperplane comparisons.
//!
//! Scalar products `<t, x>` decide slab and half-space membership, so
//! they must not flicker with rounding. Directions built from an integer
//! vector compare dots exactly in `i64`. Float directions are snapped to
//! the `2^-30` rational grid, a deterministic tolerance of order 1e-9
//! per unit coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Point;

const FLOAT_SCALE: f64 = (1u64 << 30) as f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    unit: Vec<f64>,
    /// Integer direction vector (not normalized) when the direction is
    /// rational; dots against lattice points are then exact.
    exact: Option<Vec<i64>>,
}

impl Direction {
    /// Direction of a nonzero integer vector.
    pub fn from_integer(v: Vec<i64>) -> Result<Self> {
        if v.iter().all(|&c| c == 0) {
            return Err(Error::Invalid("direction vector must be nonzero".into()));
        }
        if v.len() < 2 {
            return Err(Error::Invalid("direction needs dimension >= 2".into()));
        }
        let g = v.iter().fold(0i64, |acc, &c| gcd(acc, c.abs()));
        let v: Vec<i64> = v.into_iter().map(|c| c / g).collect();
        let norm = (v.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
        let unit = v.iter().map(|&c| c as f64 / norm).collect();
        Ok(Direction { unit, exact: Some(v) })
    }

    /// Direction from a unit float vector (`||v|| = 1` within 1e-12).
    /// Recognizes small-integer directions and keeps them exact.
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let norm2: f64 = v.iter().map(|&c| c * c).sum();
        if (norm2.sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "direction must be a unit vector (norm {})",
                norm2.sqrt()
            )));
        }
        if v.len() < 2 {
            return Err(Error::Invalid("direction needs dimension >= 2".into()));
        }
        // try denominators up to 16 to recover an exact rational direction
        'denoms: for q in 1..=16i64 {
            let scale = v.iter().map(|&c| c.abs()).fold(0.0, f64::max);
            if scale == 0.0 {
                break;
            }
            let cand: Vec<i64> = v.iter().map(|&c| (c / scale * q as f64).round() as i64).collect();
            if cand.iter().all(|&c| c == 0) {
                continue;
            }
            let norm = (cand.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
            for (i, &c) in cand.iter().enumerate() {
                if (c as f64 / norm - v[i]).abs() > 1e-12 {
                    continue 'denoms;
                }
            }
            return Direction::from_integer(cand);
        }
        Ok(Direction { unit: v, exact: None })
    }

    /// The coordinate-axis direction `u_{axis+1}`.
    pub fn axis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0i64; dim];
        v[axis] = 1;
        Direction::from_integer(v).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.unit.len()
    }

    pub fn unit(&self) -> &[f64] {
        &self.unit
    }

    pub fn exact(&self) -> Option<&[i64]> {
        self.exact.as_deref()
    }

    /// Integer comparison vector: exact when rational, otherwise the
    /// unit vector scaled by 2^30 and rounded.
    pub fn scaled_int(&self) -> Vec<i64> {
        match &self.exact {
            Some(v) => v.clone(),
            None => self.unit.iter().map(|&c| (c * FLOAT_SCALE).round() as i64).collect(),
        }
    }

    /// Exact dot in comparison units (see [`Direction::scaled_int`]).
    pub fn dot(&self, p: &Point) -> i64 {
        p.dot_i64(&self.scaled_int())
    }

    pub fn dot_f64(&self, p: &Point) -> f64 {
        p.dot_f64(&self.unit)
    }

    /// Index of the distinguished axis `u`: the first coordinate axis
    /// maximizing `<t, u_i>`.
    pub fn u_axis(&self) -> usize {
        let mut best = 0usize;
        match &self.exact {
            Some(v) => {
                for i in 1..v.len() {
                    if v[i] > v[best] {
                        best = i;
                    }
                }
            }
            None => {
                for i in 1..self.unit.len() {
                    if self.unit[i] > self.unit[best] {
                        best = i;
                    }
                }
            }
        }
        best
    }

    /// The lattice step `u` along the distinguished axis.
    pub fn u_point(&self) -> Point {
        Point::unit(self.dim(), self.u_axis())
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        if a == 0 {
            1
        } else {
            a
        }
    } else {
        gcd(b, a % b)
    }
}

/// The `3^d - 1` grid directions: all nonzero vectors in `{-1,0,1}^d`,
/// normalized. For `d = 3` these are the 26 neighbours.
pub fn direction_grid(dim: usize) -> Vec<Direction> {
    let mut out = Vec::new();
    let mut v = vec![-1i64; dim];
    loop {
        if v.iter().any(|&c| c != 0) {
            out.push(Direction::from_integer(v.clone()).unwrap());
        }
        let mut k = 0;
        while k < dim {
            v[k] += 1;
            if v[k] <= 1 {
                break;
            }
            v[k] = -1;
            k += 1;
        }
        if k == dim {
            break;
        }
    }
    out
}
