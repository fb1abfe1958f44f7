//! Model dynamical systems: linear toral automorphisms and symbolic shifts.

mod linear;
mod shift;
pub(crate) mod spectrum;

pub use linear::{wrap_offset, wrap_unit, LinearToralModel, DEFAULT_MAX_STEPS};
pub use shift::{ShiftMeasureKind, ShiftModel, WordWindow};
pub use spectrum::EigenDirection;

use crate::error::{Error, Result};

/// A point of whichever model family a handle wraps.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Torus(Vec<f64>),
    Word(WordWindow),
}

/// Tagged union over the supported model families.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemHandle {
    Linear(LinearToralModel),
    Shift(ShiftModel),
}

impl SystemHandle {
    pub fn identity(&self) -> String {
        match self {
            SystemHandle::Linear(m) => m.identity(),
            SystemHandle::Shift(m) => m.identity(),
        }
    }

    pub fn as_linear(&self) -> Option<&LinearToralModel> {
        match self {
            SystemHandle::Linear(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_shift(&self) -> Option<&ShiftModel> {
        match self {
            SystemHandle::Shift(m) => Some(m),
            _ => None,
        }
    }
}

/// Build a linear model from matrix rows. Convenience wrapper so callers can
/// stay at the handle level.
pub fn build_linear_model(rows: &[Vec<i64>]) -> Result<SystemHandle> {
    Ok(SystemHandle::Linear(LinearToralModel::new(rows)?))
}

/// Apply the dynamics `steps` times (negative steps run the inverse).
pub fn apply(system: &SystemHandle, point: &Point, steps: i64) -> Result<Point> {
    match (system, point) {
        (SystemHandle::Linear(m), Point::Torus(x)) => Ok(Point::Torus(m.apply(x, steps)?)),
        (SystemHandle::Shift(m), Point::Word(w)) => Ok(Point::Word(m.apply(w, steps))),
        _ => Err(Error::InvalidParameter(
            "point kind does not match the system".into(),
        )),
    }
}

/// Leaf chart of a linear model (see [`LinearToralModel::leaf_chart`]).
pub fn leaf_chart(system: &SystemHandle, anchor: &[f64], t: &[f64]) -> Result<Point> {
    match system {
        SystemHandle::Linear(m) => Ok(Point::Torus(m.leaf_chart(anchor, t)?)),
        SystemHandle::Shift(_) => Err(Error::IncompatibleScheme(
            "leaf charts are defined for linear models only".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handle_dispatch() {
        let sys = build_linear_model(&[vec![2, 1], vec![1, 1]]).unwrap();
        let p = Point::Torus(vec![0.5, 0.5]);
        let q = apply(&sys, &p, 1).unwrap();
        match q {
            Point::Torus(v) => {
                assert!((v[0] - 0.5).abs() < 1e-15);
                assert!(v[1].abs() < 1e-15);
            }
            _ => panic!("expected torus point"),
        }
        let shift = SystemHandle::Shift(ShiftModel::bernoulli(vec![0.5, 0.5]).unwrap());
        assert!(apply(&shift, &p, 1).is_err());
    }

    #[test]
    fn identities_are_stable() {
        let sys = build_linear_model(&[vec![2, 1], vec![1, 1]]).unwrap();
        assert_eq!(sys.identity(), "linear:[[2,1],[1,1]]");
        let shift = SystemHandle::Shift(ShiftModel::bernoulli(vec![0.5, 0.5]).unwrap());
        assert_eq!(shift.identity(), "shift:m=2:bernoulli[0.5,0.5]");
    }
}
