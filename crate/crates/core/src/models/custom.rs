//! Closure-backed model for user-defined operators and checker
//! counterexamples.

use super::{ModelConstants, MonotoneModel};
use crate::linalg::DMat;
use crate::triple::{DualVec, SpaceSpec, StateVec};

type A1Fn = dyn Fn(f64, &StateVec) -> DualVec + Send + Sync;
type A2Fn = dyn Fn(f64, &StateVec) -> DualVec + Send + Sync;
type BFn = dyn Fn(f64, &StateVec, &[f64]) -> StateVec + Send + Sync;
type HsFn = dyn Fn(f64, &StateVec) -> f64 + Send + Sync;
type JacFn = dyn Fn(f64, &StateVec) -> DMat + Send + Sync;

pub struct CustomModel {
    space: SpaceSpec,
    noise_dim: usize,
    x0: StateVec,
    constants: ModelConstants,
    a1: Box<A1Fn>,
    a2: Box<A2Fn>,
    b: Box<BFn>,
    b_hs: Box<HsFn>,
    drift_jac: Option<Box<JacFn>>,
}

impl CustomModel {
    pub fn new(
        space: SpaceSpec,
        noise_dim: usize,
        x0: StateVec,
        constants: ModelConstants,
        a1: impl Fn(f64, &StateVec) -> DualVec + Send + Sync + 'static,
        a2: impl Fn(f64, &StateVec) -> DualVec + Send + Sync + 'static,
        b: impl Fn(f64, &StateVec, &[f64]) -> StateVec + Send + Sync + 'static,
        b_hs: impl Fn(f64, &StateVec) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomModel {
            space,
            noise_dim,
            x0,
            constants,
            a1: Box::new(a1),
            a2: Box::new(a2),
            b: Box::new(b),
            b_hs: Box::new(b_hs),
            drift_jac: None,
        }
    }

    pub fn with_drift_jacobian(
        mut self,
        jac: impl Fn(f64, &StateVec) -> DMat + Send + Sync + 'static,
    ) -> Self {
        self.drift_jac = Some(Box::new(jac));
        self
    }

    /// Scalar model `dx = a(x) dt + u dt` on the Euclidean triple, with the
    /// stated constants. Handy for shaping counterexamples in tests.
    pub fn scalar(
        a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        constants: ModelConstants,
        x0: f64,
    ) -> Self {
        CustomModel::new(
            SpaceSpec::euclidean(1),
            1,
            StateVec::new(vec![x0]),
            constants,
            move |_t, x: &StateVec| DualVec::new(vec![a(x.coeffs()[0])]),
            |_t, x: &StateVec| DualVec::zeros(x.dim()),
            |_t, _x: &StateVec, u: &[f64]| StateVec::new(vec![u[0]]),
            |_t, _x: &StateVec| 1.0,
        )
    }
}

impl MonotoneModel for CustomModel {
    fn space(&self) -> &SpaceSpec {
        &self.space
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn initial_state(&self) -> &StateVec {
        &self.x0
    }

    fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    fn apply_a1(&self, t: f64, x: &StateVec) -> DualVec {
        (self.a1)(t, x)
    }

    fn apply_a2(&self, t: f64, x: &StateVec) -> DualVec {
        (self.a2)(t, x)
    }

    fn apply_b(&self, t: f64, x: &StateVec, u: &[f64]) -> StateVec {
        (self.b)(t, x, u)
    }

    fn b_hs_norm_sq(&self, t: f64, x: &StateVec) -> f64 {
        (self.b_hs)(t, x)
    }

    fn drift_jacobian(&self, t: f64, x: &StateVec) -> Option<DMat> {
        self.drift_jac.as_ref().map(|f| f(t, x))
    }
}

impl ModelConstants {
    /// Benign defaults for throwaway custom models (`q1 = q2 = 2`, unit
    /// coercivity slack, zero monotonicity gain, unit noise bound).
    pub fn generic() -> Self {
        ModelConstants {
            q1: 2.0,
            q2: 2.0,
            lambda1: 0.25,
            lambda2: 0.25,
            lambda3: 1.0,
            lambda0: 0.0,
            lambda1_mono: 0.0,
            lambda2_mono: 0.0,
            c_a1: 1.0,
            c_a2: 1.0,
            beta1: 1.0,
        }
    }
}
