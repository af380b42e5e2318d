use crate::controller::Obstacle;
use crate::error::Result;
use crate::geometry::Vec2;
use crate::reachability::AgentClass;
use crate::scalar::Real;
use crate::vehicle::{step_rk4, Control, VehicleParams, VehicleState};

/// Worst-case hidden agent placed in occluded space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomAgent<T> {
    pub position: Vec2<T>,
    pub class: AgentClass<T>,
}

impl<T: Real> PhantomAgent<T> {
    pub fn v_max(&self) -> T {
        self.class.v_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyConfig<T> {
    /// Plans intercepted sooner than this have their acceleration capped.
    pub ttc_threshold: T,
    /// A phantom within this distance of the AV reference point collides.
    pub collision_radius: T,
    /// Extra clearance on top of the sampling bound.
    pub margin: T,
    /// Distance a braking path keeps from sensed obstacles. A path starting
    /// closer than this may not get any closer.
    pub obstacle_clearance: T,
    /// Integration and sampling step for the checked paths.
    pub substep: T,
    /// Number of accelerations tried between the cap and full braking.
    pub candidates: usize,
}

impl<T: Real> Default for SafetyConfig<T> {
    fn default() -> Self {
        Self {
            ttc_threshold: T::lit(1.5),
            collision_radius: T::lit(1.5),
            margin: T::lit(0.3),
            obstacle_clearance: T::lit(1.0),
            substep: T::lit(0.025),
            candidates: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterAction {
    Pass,
    /// Acceleration lowered but above full braking.
    Capped,
    Brake,
}

impl FilterAction {
    pub fn name(self) -> &'static str {
        match self {
            FilterAction::Pass => "pass",
            FilterAction::Capped => "capped",
            FilterAction::Brake => "brake",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDecision<T> {
    pub control: Control<T>,
    pub action: FilterAction,
    /// Worst-case time to collision along the plan, `None` when no phantom
    /// can intercept it.
    pub ttc: Option<T>,
}

/// Timed states along a path; the first entry is the start at time 0.
pub type TimedPath<T> = Vec<(T, VehicleState<T>)>;

fn advance<T: Real>(
    path: &mut TimedPath<T>,
    u: &Control<T>,
    duration: T,
    h: T,
    p: &VehicleParams<T>,
) -> Result<()> {
    let (mut t, mut s) = *path.last().expect("path starts with the initial state");
    let end = t + duration;
    while t < end {
        let step = h.min(end - t);
        s = step_rk4(&s, u, step, p)?;
        t = t + step;
        path.push((t, s));
    }
    Ok(())
}

/// Applies `u` for `dt`, then brakes at `a_min` with the steering held until
/// the AV stops, sampled every `h` seconds.
pub fn braking_path<T: Real>(
    s0: &VehicleState<T>,
    u: &Control<T>,
    dt: T,
    p: &VehicleParams<T>,
    h: T,
) -> Result<TimedPath<T>> {
    let mut path = vec![(T::zero(), *s0)];
    advance(&mut path, u, dt, h, p)?;
    let brake = Control::new(p.a_min, u.delta);
    if p.a_min < T::zero() {
        let (t, s) = *path.last().unwrap();
        // Time to stop plus one step to absorb the clamp.
        let stop = s.v / -p.a_min + h;
        let mut s = s;
        let mut t = t;
        let end = t + stop;
        while s.v > T::zero() && t < end {
            let step = h.min(s.v / -p.a_min).max(h * T::lit(1e-3));
            s = step_rk4(&s, &brake, step, p)?;
            t = t + step;
            path.push((t, s));
        }
    }
    Ok(path)
}

/// Earliest sampled time at which some phantom moving at its top speed can
/// be within `radius + slack` of the moving AV. Samples where the AV is
/// stationary are skipped. When `lipschitz` is set, each sample's tolerance
/// also covers the motion until the neighbouring samples, so a miss means the
/// continuous path is clear.
pub fn first_interception<T: Real>(
    path: &[(T, VehicleState<T>)],
    phantoms: &[PhantomAgent<T>],
    radius: T,
    slack: T,
    lipschitz: bool,
) -> Option<T> {
    if phantoms.is_empty() {
        return None;
    }
    let half = T::lit(0.5);
    for (i, &(t, s)) in path.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| path[j]);
        let next = path.get(i + 1).copied();
        let moving = s.v > T::zero() || prev.is_some_and(|(_, q)| q.v > T::zero());
        if !moving {
            continue;
        }
        let mut gap = T::zero();
        let mut speed = s.v;
        if lipschitz {
            if let Some((tn, sn)) = next {
                gap = gap.max(tn - t);
                speed = speed.max(sn.v);
            }
            if let Some((tp, sp)) = prev {
                gap = gap.max(t - tp);
                speed = speed.max(sp.v);
            }
        }
        let pos = s.position();
        for ph in phantoms {
            let tol = radius + slack + ph.v_max() * t + (speed + ph.v_max()) * gap * half;
            if pos.distance(ph.position) <= tol {
                return Some(t);
            }
        }
    }
    None
}

fn planned_path<T: Real>(
    s0: &VehicleState<T>,
    controls: &[Control<T>],
    dt: T,
    p: &VehicleParams<T>,
    h: T,
) -> Result<TimedPath<T>> {
    let mut path = vec![(T::zero(), *s0)];
    for u in controls {
        advance(&mut path, u, dt, h, p)?;
    }
    Ok(path)
}

/// Adjusts the first planned control against phantom agents.
///
/// The worst-case time to collision is the first time a phantom advancing at
/// its top speed could touch the AV along the planned path. Below the
/// threshold, unless the AV could still stop within that time, the
/// acceleration is capped, from zero at the threshold down to full braking
/// at zero TTC. The largest acceleration at or below the cap whose braking path (this control for one step, then full
/// braking) stays clear of every phantom is commanded; if none does, full
/// braking. The commanded acceleration never exceeds the requested one.
pub fn safety_filter<T: Real>(
    s0: &VehicleState<T>,
    planned: &[Control<T>],
    phantoms: &[PhantomAgent<T>],
    cfg: &SafetyConfig<T>,
    params: &VehicleParams<T>,
    dt: T,
) -> Result<FilterDecision<T>> {
    safety_filter_with_steering(s0, planned, phantoms, &[], cfg, params, dt, &[])
}

/// True when no sample of `path` comes within the clearance of an obstacle,
/// or, for an obstacle already inside it, closer than at the start.
fn clear_of_obstacles<T: Real>(
    path: &[(T, VehicleState<T>)],
    obstacles: &[&Obstacle<T>],
    clearance: T,
) -> bool {
    let start = path[0].1.position();
    obstacles.iter().all(|o| {
        let floor = clearance.min(o.distance(start));
        path.iter().all(|(_, s)| o.distance(s.position()) >= floor)
    })
}

/// [`safety_filter`] that, when no acceleration clears the phantoms with the
/// requested steering, retries the same accelerations with each angle of
/// `fallback` in order. Passing the previous tick's commanded steering makes
/// the previous braking path a candidate again, so a phantom set that does
/// not grow can never corner the AV. Substituted steering must also keep its
/// braking path clear of `obstacles`; the requested steering is the
/// planner's business.
#[allow(clippy::too_many_arguments)]
pub fn safety_filter_with_steering<T: Real>(
    s0: &VehicleState<T>,
    planned: &[Control<T>],
    phantoms: &[PhantomAgent<T>],
    obstacles: &[Obstacle<T>],
    cfg: &SafetyConfig<T>,
    params: &VehicleParams<T>,
    dt: T,
    fallback: &[T],
) -> Result<FilterDecision<T>> {
    let requested = planned.first().copied().unwrap_or_else(Control::zero);
    if phantoms.is_empty() {
        return Ok(FilterDecision {
            control: requested,
            action: FilterAction::Pass,
            ttc: None,
        });
    }
    let h = cfg.substep;
    let plan = planned_path(s0, planned, dt, params, h)?;
    let ttc = first_interception(&plan, phantoms, cfg.collision_radius, cfg.margin, true);
    let cap = match ttc {
        Some(t) if t < cfg.ttc_threshold => {
            let v_next = s0.v + requested.a.max(T::zero()) * dt;
            if v_next <= -params.a_min * t {
                requested.a
            } else {
                requested
                    .a
                    .min(params.a_min * (T::one() - t / cfg.ttc_threshold))
            }
        }
        _ => requested.a,
    };
    let n = cfg.candidates.max(2);
    // Anything farther than the longest braking path cannot matter.
    let v1 = (s0.v + cap.max(T::zero()) * dt).max(T::zero());
    let reach = v1 * dt + v1 * v1 / (T::lit(2.0) * -params.a_min.min(-T::lit(1e-6))) + v1 * h;
    let near: Vec<&Obstacle<T>> = obstacles
        .iter()
        .filter(|o| o.distance(s0.position()) <= reach + cfg.obstacle_clearance)
        .collect();
    for delta in std::iter::once(requested.delta).chain(fallback.iter().copied()) {
        for i in 0..n {
            let a = if cap <= params.a_min {
                params.a_min
            } else {
                cap - (cap - params.a_min) * T::from_count(i) / T::from_count(n - 1)
            };
            let u = Control::new(a, delta);
            let path = braking_path(s0, &u, dt, params, h)?;
            if first_interception(&path, phantoms, cfg.collision_radius, cfg.margin, true).is_none()
                && (delta == requested.delta
                    || clear_of_obstacles(&path, &near, cfg.obstacle_clearance))
            {
                let action = if a == requested.a && delta == requested.delta {
                    FilterAction::Pass
                } else if a > params.a_min {
                    FilterAction::Capped
                } else {
                    FilterAction::Brake
                };
                return Ok(FilterDecision {
                    control: u,
                    action,
                    ttc,
                });
            }
            if cap <= params.a_min {
                break;
            }
        }
    }
    let action = if requested.a == params.a_min {
        FilterAction::Pass
    } else {
        FilterAction::Brake
    };
    Ok(FilterDecision {
        control: Control::new(params.a_min.min(requested.a), requested.delta),
        action,
        ttc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;

    fn ped(x: f64, y: f64) -> PhantomAgent<f64> {
        PhantomAgent {
            position: Vec2::new(x, y),
            class: AgentClass::pedestrian(),
        }
    }

    fn setup() -> (VehicleState<f64>, Vec<Control<f64>>, VehicleParams<f64>) {
        (
            VehicleState::new(0.0, 0.0, 7.5, 0.0),
            vec![Control::new(1.0, 0.0); 25],
            VehicleParams::default(),
        )
    }

    #[test]
    fn no_phantoms_passes() {
        let (s, plan, p) = setup();
        let d = safety_filter(&s, &plan, &[], &SafetyConfig::default(), &p, 0.1).unwrap();
        assert_eq!(d.control, plan[0]);
        assert_eq!(d.action, FilterAction::Pass);
    }

    #[test]
    fn far_phantom_passes() {
        let (s, plan, p) = setup();
        let d = safety_filter(
            &s,
            &plan,
            &[ped(0.0, 60.0)],
            &SafetyConfig::default(),
            &p,
            0.1,
        )
        .unwrap();
        assert_eq!(d.control, plan[0]);
        assert_eq!(d.ttc, None);
    }

    #[test]
    fn close_phantom_forces_full_braking() {
        let (s, plan, p) = setup();
        let d = safety_filter(
            &s,
            &plan,
            &[ped(2.0, 0.5)],
            &SafetyConfig::default(),
            &p,
            0.1,
        )
        .unwrap();
        assert_eq!(d.control.a, p.a_min);
        assert_eq!(d.action, FilterAction::Brake);
        assert!(d.ttc.unwrap() < 0.5);
    }

    #[test]
    fn moderate_phantom_caps_and_is_clear() {
        let (s, plan, p) = setup();
        let cfg = SafetyConfig::default();
        let phantoms = [ped(14.0, 3.5)];
        let d = safety_filter(&s, &plan, &phantoms, &cfg, &p, 0.1).unwrap();
        assert!(d.control.a <= plan[0].a);
        let fine = braking_path(&s, &d.control, 0.1, &p, 0.002).unwrap();
        assert_eq!(
            first_interception(&fine, &phantoms, cfg.collision_radius, 0.0, false),
            None
        );
    }

    #[test]
    fn cap_deepens_as_ttc_falls() {
        let (s, plan, p) = setup();
        let cfg = SafetyConfig::default();
        let mut last = f64::INFINITY;
        let mut ttc = f64::INFINITY;
        for x in [40.0, 30.0, 22.0, 16.0, 12.0] {
            let d = safety_filter(&s, &plan, &[ped(x, 3.5)], &cfg, &p, 0.1).unwrap();
            let t = d.ttc.unwrap_or(f64::INFINITY);
            assert!(t <= ttc);
            assert!(d.control.a <= last, "x {x}");
            if t < cfg.ttc_threshold && s.v + plan[0].a * 0.1 > -p.a_min * t {
                assert!(d.control.a <= p.a_min * (1.0 - t / cfg.ttc_threshold) + 1e-12);
            }
            (last, ttc) = (d.control.a, t);
        }
        assert!(last < 0.0);
    }

    #[test]
    fn stopped_vehicle_may_start_when_it_can_stop_in_time() {
        let (_, plan, p) = setup();
        let cfg = SafetyConfig::default();
        let s = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let phantoms = [ped(3.0, 2.5)];
        let d = safety_filter(&s, &plan, &phantoms, &cfg, &p, 0.1).unwrap();
        assert!(d.ttc.unwrap() < cfg.ttc_threshold);
        assert_eq!(d.control, plan[0]);
    }

    #[test]
    fn fallback_steering_recovers_previous_braking_path() {
        let p = VehicleParams::<f64>::default();
        let cfg = SafetyConfig::default();
        let s = VehicleState::new(0.0, 0.0, 7.5, 0.0);
        // Braking straight clears a phantom that a hard right turn runs into.
        let phantoms = [ped(3.0, -4.1)];
        let right = vec![Control::new(0.0, -p.delta_max); 25];
        let plain = safety_filter(&s, &right, &phantoms, &cfg, &p, 0.1).unwrap();
        let with =
            safety_filter_with_steering(&s, &right, &phantoms, &[], &cfg, &p, 0.1, &[0.0]).unwrap();
        let clear = |u: &Control<f64>| {
            let path = braking_path(&s, u, 0.1, &p, 0.002).unwrap();
            first_interception(&path, &phantoms, cfg.collision_radius, 0.0, false).is_none()
        };
        assert!(!clear(&plain.control));
        assert!(clear(&with.control));
        assert_eq!(with.control.delta, 0.0);
    }

    #[test]
    fn substituted_steering_keeps_clear_of_obstacles() {
        let p = VehicleParams::<f64>::default();
        let cfg = SafetyConfig::default();
        let s = VehicleState::new(0.0, 0.0, 7.5, 0.0);
        let phantoms = [ped(3.0, -4.1)];
        let right = vec![Control::new(0.0, -p.delta_max); 25];
        // A parked car straight ahead rules out the straight fallback.
        let car = Obstacle::new(ConvexPolygon::rectangle(Vec2::new(6.0, 0.0), 0.0, 4.8, 2.0));
        let free =
            safety_filter_with_steering(&s, &right, &phantoms, &[], &cfg, &p, 0.1, &[0.0]).unwrap();
        assert_eq!(free.control.delta, 0.0);
        let blocked =
            safety_filter_with_steering(&s, &right, &phantoms, &[car], &cfg, &p, 0.1, &[0.0])
                .unwrap();
        assert_eq!(blocked.control.delta, right[0].delta);
        assert_eq!(blocked.action, FilterAction::Brake);
    }

    #[test]
    fn braking_path_stops() {
        let (s, _, p) = setup();
        let path = braking_path(&s, &Control::new(0.0, 0.0), 0.1, &p, 0.025).unwrap();
        let (t, last) = *path.last().unwrap();
        assert_eq!(last.v, 0.0);
        assert!((t - (0.1 + 7.5 / 6.0)).abs() < 0.03, "{t}");
        let expected = 0.75 + 7.5 * 7.5 / 12.0;
        assert!((last.x - expected).abs() < 0.05, "{}", last.x);
    }
}
