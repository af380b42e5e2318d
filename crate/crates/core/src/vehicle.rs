//! Kinematic bicycle model referenced at the rear axle, integrated with RK4.

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::scalar::{wrap_angle, Real};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState<T> {
    pub x: T,
    pub y: T,
    pub v: T,
    /// Heading in `(-pi, pi]`.
    pub theta: T,
}

impl<T: Real> VehicleState<T> {
    pub fn new(x: T, y: T, v: T, theta: T) -> Self {
        Self { x, y, v, theta }
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2<T> {
        Vec2::from_angle(self.theta)
    }

    fn as_array(&self) -> [T; 4] {
        [self.x, self.y, self.v, self.theta]
    }

    fn axpy(&self, h: T, k: &[T; 4]) -> Self {
        Self {
            x: self.x + h * k[0],
            y: self.y + h * k[1],
            v: self.v + h * k[2],
            theta: self.theta + h * k[3],
        }
    }
}

/// Acceleration and steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Control<T> {
    pub a: T,
    pub delta: T,
}

impl<T: Real> Control<T> {
    pub fn new(a: T, delta: T) -> Self {
        Self { a, delta }
    }

    pub fn zero() -> Self {
        Self {
            a: T::zero(),
            delta: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams<T> {
    pub wheelbase: T,
    pub a_min: T,
    pub a_max: T,
    pub delta_max: T,
    pub v_min: T,
    pub v_max: T,
}

impl<T: Real> Default for VehicleParams<T> {
    fn default() -> Self {
        Self {
            wheelbase: T::lit(2.9),
            a_min: T::lit(-6.0),
            a_max: T::lit(3.0),
            delta_max: T::lit(0.6),
            v_min: T::zero(),
            v_max: T::lit(15.0),
        }
    }
}

impl<T: Real> VehicleParams<T> {
    pub fn validate(&self) -> Result<()> {
        let half_pi = T::lit(std::f64::consts::FRAC_PI_2);
        if !(self.wheelbase > T::zero()) {
            return Err(Error::InvalidParameter("wheelbase must be positive".into()));
        }
        if !(self.delta_max >= T::zero() && self.delta_max < half_pi) {
            return Err(Error::InvalidParameter(
                "delta_max must lie in [0, pi/2)".into(),
            ));
        }
        if !(self.a_min <= self.a_max) || !(self.v_min <= self.v_max) {
            return Err(Error::InvalidParameter(
                "actuation bounds are inverted".into(),
            ));
        }
        Ok(())
    }

    /// Clamps a control into the actuation box.
    pub fn clamp(&self, u: Control<T>) -> Control<T> {
        Control {
            a: u.a.max(self.a_min).min(self.a_max),
            delta: u.delta.max(-self.delta_max).min(self.delta_max),
        }
    }
}

/// `[v cos(theta), v sin(theta), a, v tan(delta) / L]`.
pub fn derivative<T: Real>(
    s: &VehicleState<T>,
    u: &Control<T>,
    p: &VehicleParams<T>,
) -> Result<[T; 4]> {
    if !(u.delta.abs() < T::lit(std::f64::consts::FRAC_PI_2)) {
        return Err(Error::SteeringSingularity(u.delta.as_f64()));
    }
    let (sin, cos) = s.theta.sin_cos();
    Ok([s.v * cos, s.v * sin, u.a, s.v * u.delta.tan() / p.wheelbase])
}

/// [`derivative`] with the speed held inside its bounds: stage speeds are
/// clamped and acceleration past a bound is dropped, so a stopped vehicle
/// told to brake stays put instead of creeping backwards.
fn bounded_derivative<T: Real>(
    s: &VehicleState<T>,
    u: &Control<T>,
    p: &VehicleParams<T>,
) -> Result<[T; 4]> {
    let v = s.v.max(p.v_min).min(p.v_max);
    let a = if (v <= p.v_min && u.a < T::zero()) || (v >= p.v_max && u.a > T::zero()) {
        T::zero()
    } else {
        u.a
    };
    derivative(&VehicleState { v, ..*s }, &Control::new(a, u.delta), p)
}

/// One classical RK4 step with the control held constant. The heading is
/// re-wrapped and the speed clamped afterwards.
pub fn step_rk4<T: Real>(
    s: &VehicleState<T>,
    u: &Control<T>,
    dt: T,
    p: &VehicleParams<T>,
) -> Result<VehicleState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidTimeStep(dt.as_f64()));
    }
    let half = dt * T::lit(0.5);
    let k1 = bounded_derivative(s, u, p)?;
    let k2 = bounded_derivative(&s.axpy(half, &k1), u, p)?;
    let k3 = bounded_derivative(&s.axpy(half, &k2), u, p)?;
    let k4 = bounded_derivative(&s.axpy(dt, &k3), u, p)?;
    let two = T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    let base = s.as_array();
    let mut out = [T::zero(); 4];
    for i in 0..4 {
        out[i] = base[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    }
    Ok(VehicleState {
        x: out[0],
        y: out[1],
        v: out[2].max(p.v_min).min(p.v_max),
        theta: wrap_angle(out[3]),
    })
}

/// States after each control, starting from `s0` (which is not included).
pub fn rollout<T: Real>(
    s0: &VehicleState<T>,
    controls: &[Control<T>],
    dt: T,
    p: &VehicleParams<T>,
) -> Result<Vec<VehicleState<T>>> {
    let mut out = Vec::with_capacity(controls.len());
    let mut s = *s0;
    for u in controls {
        s = step_rk4(&s, u, dt, p)?;
        out.push(s);
    }
    Ok(out)
}
