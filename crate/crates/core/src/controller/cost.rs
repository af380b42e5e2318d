use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::scalar::{wrap_angle, Real};
use crate::vehicle::{Control, VehicleState};
use crate::visibility::PerspectiveCostMap;

use super::config::{PlannerConfig, VisibilityPlugin};

/// A sensed static obstacle with its fitted circle.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle<T> {
    pub position: Vec2<T>,
    pub polygon: ConvexPolygon<T>,
    /// Radius of a circle about `position` enclosing the polygon.
    pub radius: T,
}

impl<T: Real> Obstacle<T> {
    /// Centers the fitted circle on the polygon centroid.
    pub fn new(polygon: ConvexPolygon<T>) -> Self {
        let position = polygon.centroid();
        let radius = polygon.radius_about(position);
        Self {
            position,
            polygon,
            radius,
        }
    }

    pub fn distance(&self, p: Vec2<T>) -> T {
        self.polygon.distance(p)
    }

    /// True when every vertex lies behind the plane through `p` normal to `heading`.
    pub fn is_passed(&self, p: Vec2<T>, heading: Vec2<T>) -> bool {
        self.polygon
            .vertices()
            .iter()
            .all(|&v| (v - p).dot(heading) < T::zero())
    }
}

/// `-M * P(cell)`; zero off the map.
pub fn vis_cost_proposed<T: Real>(s: &VehicleState<T>, apcm: &PerspectiveCostMap<T>, m: T) -> T {
    -(m * apcm.value_at(s.position()))
}

/// `M * sum_o softplus((r_o / d_o) (r_fov^2 - d_o^2))^2`, where `d_o` is the
/// distance to the obstacle center. Above `guard` the softplus is replaced by
/// its argument.
pub fn vis_cost_higgins<T: Real>(
    s: &VehicleState<T>,
    obstacles: &[Obstacle<T>],
    r_fov: T,
    m: T,
    guard: T,
) -> Result<T> {
    let p = s.position();
    let mut total = T::zero();
    for o in obstacles {
        let d = p.distance(o.position);
        if d == T::zero() {
            return Err(Error::CoincidentObstacle);
        }
        let e = o.radius / d * (r_fov * r_fov - d * d);
        let soft = if e > guard { e } else { e.exp().ln_1p() };
        total = total + soft * soft;
    }
    Ok(m * total)
}

/// `-lambda * min_v |angle(forward, v - p)|` over the corners of the closest
/// obstacle not yet passed; zero when every obstacle is behind.
pub fn vis_cost_andersen<T: Real>(s: &VehicleState<T>, obstacles: &[Obstacle<T>], lambda: T) -> T {
    let p = s.position();
    let fwd = s.heading();
    let closest = obstacles
        .iter()
        .filter(|o| !o.is_passed(p, fwd))
        .map(|o| (o.distance(p), o))
        .fold(None::<(T, &Obstacle<T>)>, |best, (d, o)| match best {
            Some((bd, _)) if bd <= d => best,
            _ => Some((d, o)),
        });
    let Some((_, o)) = closest else {
        return T::zero();
    };
    let angle = o
        .polygon
        .vertices()
        .iter()
        .map(|&v| {
            let r = v - p;
            fwd.cross(r).atan2(fwd.dot(r)).abs()
        })
        .fold(T::infinity(), T::min);
    -(lambda * angle)
}

pub fn vis_cost_none<T: Real>(_s: &VehicleState<T>) -> T {
    T::zero()
}

/// Everything a stage cost needs besides the state and control.
#[derive(Debug, Clone)]
pub struct CostContext<'a, T> {
    pub apcm: Option<&'a PerspectiveCostMap<T>>,
    /// Obstacles close enough to matter this tick.
    pub obstacles: Vec<Obstacle<T>>,
}

impl<'a, T: Real> CostContext<'a, T> {
    /// Keeps the obstacles whose fitted circle comes within `reach` of `center`.
    pub fn new(
        apcm: Option<&'a PerspectiveCostMap<T>>,
        obstacles: &'a [Obstacle<T>],
        center: Vec2<T>,
        reach: T,
    ) -> Self {
        let obstacles = obstacles
            .iter()
            .filter(|o| o.position.distance(center) - o.radius <= reach)
            .cloned()
            .collect();
        Self { apcm, obstacles }
    }

    /// A context with no map and no obstacles.
    pub fn empty() -> Self {
        Self {
            apcm: None,
            obstacles: Vec::new(),
        }
    }

    pub fn visibility_cost(&self, s: &VehicleState<T>, cfg: &PlannerConfig<T>) -> Result<T> {
        Ok(match cfg.plugin {
            VisibilityPlugin::Proposed => self
                .apcm
                .map_or(T::zero(), |m| vis_cost_proposed(s, m, cfg.scale)),
            VisibilityPlugin::Higgins => {
                vis_cost_higgins(s, &self.obstacles, cfg.r_fov, cfg.scale, cfg.higgins_guard)?
            }
            VisibilityPlugin::Andersen => vis_cost_andersen(s, &self.obstacles, cfg.scale),
            VisibilityPlugin::None | VisibilityPlugin::Nominal => vis_cost_none(s),
        })
    }

    /// Distance from `p` to the nearest obstacle polygon, infinite without obstacles.
    pub fn clearance(&self, p: Vec2<T>) -> T {
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(T::infinity(), T::min)
    }

    fn violates(&self, p: Vec2<T>, r_safe: T) -> bool {
        self.obstacles
            .iter()
            .any(|o| o.position.distance(p) - o.radius <= r_safe && o.distance(p) <= r_safe)
    }
}

fn quad<T: Real, const N: usize>(err: [T; N], w: &[T; N]) -> T {
    err.iter()
        .zip(w)
        .fold(T::zero(), |acc, (&e, &w)| acc + w * e * e)
}

/// Tracking error plus control error plus visibility term, plus the obstacle
/// penalty when the state is within `r_safe` of an obstacle (except for the
/// Nominal plugin). `terminal` swaps `q` for `q_terminal`.
#[allow(clippy::too_many_arguments)]
pub fn stage_cost<T: Real>(
    s: &VehicleState<T>,
    u: &Control<T>,
    ref_s: &VehicleState<T>,
    ref_u: &Control<T>,
    cfg: &PlannerConfig<T>,
    ctx: &CostContext<'_, T>,
    terminal: bool,
) -> Result<T> {
    let err = [
        s.x - ref_s.x,
        s.y - ref_s.y,
        s.v - ref_s.v,
        wrap_angle(s.theta - ref_s.theta),
    ];
    let weights = if terminal { &cfg.q_terminal } else { &cfg.q };
    let mut cost = quad(err, weights) + quad([u.a - ref_u.a, u.delta - ref_u.delta], &cfg.r);
    cost = cost + ctx.visibility_cost(s, cfg)?;
    if cfg.plugin != VisibilityPlugin::Nominal && ctx.violates(s.position(), cfg.r_safe) {
        cost = cost + cfg.obstacle_penalty;
    }
    Ok(cost)
}
