//! The closed simulation loop for one episode.

use std::collections::VecDeque;

use apcm_core::controller::{
    braking_path, first_interception, mppi_plan, safety_filter_with_steering, shift_tape,
    CostContext, Obstacle, PhantomAgent, PlannerConfig, SafetyConfig, VisibilityPlugin,
};
use apcm_core::f64::{
    Control, GridGeometry, OccupancyGrid, PerspectiveCostMap, ReachableOccludedSet, Vec2,
    VehicleState,
};
use apcm_core::grid::{merge_maps, threshold_uncertain, CellIndex};
use apcm_core::reachability::{reachable_occluded, AgentClass, PlannedTrajectory};
use apcm_core::sensor::{sensor_scan, Pose, SensorModel};
use apcm_core::vehicle::step_rk4;
use apcm_core::visibility::{select_observation_cells, update_apcm};

use crate::metrics::{RunKey, RunMetrics, TickRecord};
use crate::scenario::{clutter_label, Environment};
use crate::SimError;

/// Everything about an episode except the world and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    /// Planner settings; `plugin` and `scale` select the method.
    pub planner: PlannerConfig<f64>,
    pub safety: SafetyConfig<f64>,
    pub target_speed: f64,
    pub sensor_range: f64,
    pub angular_resolution: f64,
    /// Side of the square local sensor window, in cells.
    pub window_cells: usize,
    /// Occupancy band `[lo, hi]` counted as uncertain.
    pub band: (f64, f64),
    pub agents: Vec<AgentClass<f64>>,
    /// Speed used to size the observation window.
    pub v_cap: f64,
    pub tick_cap: usize,
    /// Ticks with a car not yet passed closer than this enter the run
    /// metrics.
    pub metric_window: f64,
    pub phantoms: bool,
    /// Step of the independent collision check.
    pub collision_substep: f64,
    /// Arc window for the reference steering curvature.
    pub curvature_window: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            safety: SafetyConfig::default(),
            target_speed: 7.5,
            sensor_range: 40.0,
            angular_resolution: 0.004,
            window_cells: 200,
            band: (0.4, 0.6),
            agents: vec![AgentClass::pedestrian()],
            v_cap: 10.0,
            tick_cap: 600,
            metric_window: 20.0,
            phantoms: true,
            collision_substep: 0.005,
            curvature_window: 2.0,
        }
    }
}

impl EpisodeConfig {
    pub fn with_method(mut self, method: VisibilityPlugin, scale: f64) -> Self {
        self.planner.plugin = method;
        self.planner.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.planner.validate().map_err(SimError::Core)?;
        let checks = [
            ("target_speed", self.target_speed),
            ("sensor_range", self.sensor_range),
            ("angular_resolution", self.angular_resolution),
            ("v_cap", self.v_cap),
            ("collision_substep", self.collision_substep),
            ("curvature_window", self.curvature_window),
            ("safety.substep", self.safety.substep),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.window_cells == 0 || self.tick_cap == 0 {
            return Err(SimError::Config(
                "window_cells and tick_cap must be positive".into(),
            ));
        }
        let (lo, hi) = self.band;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(SimError::Config(format!(
                "bad uncertainty band [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Intermediate products of one tick, handed to an observer.
pub struct TickView<'a> {
    pub tick: usize,
    pub state: &'a VehicleState,
    pub merged: &'a OccupancyGrid,
    pub reachable: &'a ReachableOccludedSet,
    pub apcm: Option<&'a PerspectiveCostMap>,
    pub phantoms: &'a [PhantomAgent<f64>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub ticks: Vec<TickRecord>,
    pub reached_end: bool,
}

impl Episode {
    pub fn metrics(&self, key: RunKey, env: &Environment) -> RunMetrics {
        RunMetrics::from_ticks(key, clutter_label(env), &self.ticks, self.reached_end)
    }
}

/// Local sensor window of `cells` x `cells` around `p`, clipped to `map`.
pub fn sensor_window(map: &GridGeometry, p: Vec2, cells: usize) -> GridGeometry {
    let w = cells.min(map.width);
    let h = cells.min(map.height);
    let (cx, cy) = map.signed_cell(p);
    let clip = |c: i64, size: usize, full: usize| -> usize {
        let start = c - (size / 2) as i64;
        start.clamp(0, (full - size) as i64) as usize
    };
    let c0 = clip(cx, w, map.width);
    let r0 = clip(cy, h, map.height);
    let origin = Vec2::new(
        map.origin.x + c0 as f64 * map.resolution,
        map.origin.y + r0 as f64 * map.resolution,
    );
    GridGeometry::new(w, h, map.resolution, origin).expect("window is a sub-grid")
}

/// Cells whose center lies inside a car or a wall.
fn solid_mask(env: &Environment) -> Vec<bool> {
    let geo = *env.world.geometry();
    let mut mask = vec![false; geo.len()];
    for poly in env.cars.iter().chain(&env.walls) {
        let (lo, hi) = poly.bounds();
        let Some((a, b)) = geo.cell_range(lo, hi) else {
            continue;
        };
        for row in a.row..=b.row {
            for col in a.col..=b.col {
                let cell = CellIndex::new(col, row);
                if poly.contains(geo.cell_center(cell)) {
                    mask[geo.linear(cell)] = true;
                }
            }
        }
    }
    mask
}

/// Raster cells of each car, as linear indices into the world grid.
fn car_cells(env: &Environment) -> Vec<Vec<usize>> {
    let geo = *env.world.geometry();
    let pad = Vec2::new(geo.resolution, geo.resolution);
    env.cars
        .iter()
        .map(|poly| {
            let (lo, hi) = poly.bounds();
            let Some((a, b)) = geo.cell_range(lo - pad, hi + pad) else {
                return Vec::new();
            };
            let mut cells = Vec::new();
            for row in a.row..=b.row {
                for col in a.col..=b.col {
                    let cell = CellIndex::new(col, row);
                    let idx = geo.linear(cell);
                    if env.world.values()[idx] >= 0.5
                        && poly.distance(geo.cell_center(cell)) <= geo.resolution
                    {
                        cells.push(idx);
                    }
                }
            }
            cells
        })
        .collect()
}

/// Marks the cars with at least one cell the scan saw occupied.
fn mark_sensed(
    sensed: &mut [bool],
    cells: &[Vec<usize>],
    ogm: &OccupancyGrid,
    world: &GridGeometry,
) {
    let geo = *ogm.geometry();
    let Some((c0, r0)) = world.offset_of(&geo) else {
        return;
    };
    for (flag, cs) in sensed.iter_mut().zip(cells) {
        if *flag {
            continue;
        }
        *flag = cs.iter().any(|&idx| {
            let cell = world.cell_at(idx);
            let (Some(col), Some(row)) = (cell.col.checked_sub(c0), cell.row.checked_sub(r0))
            else {
                return false;
            };
            col < geo.width && row < geo.height && ogm.get(CellIndex::new(col, row)) > 0.5
        });
    }
}

/// One phantom per 8-connected component of the reachable occluded set,
/// at the member with the earliest reaching step, then nearest the nominal
/// path, then first in row-major order. Cells inside solid objects are
/// skipped.
pub fn spawn_phantoms(
    reach: &ReachableOccludedSet,
    env: &Environment,
    solid: &[bool],
) -> Vec<PhantomAgent<f64>> {
    let geo = reach.geometry;
    let mut member = vec![usize::MAX; geo.len()];
    for (i, e) in reach.entries.iter().enumerate() {
        let idx = geo.linear(e.cell);
        if !solid.get(idx).copied().unwrap_or(false) {
            member[idx] = i;
        }
    }
    let mut seen = vec![false; reach.entries.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..reach.entries.len() {
        let idx = geo.linear(reach.entries[start].cell);
        if seen[start] || member[idx] != start {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut best: Option<(usize, f64, usize)> = None;
        while let Some(i) = queue.pop_front() {
            let e = reach.entries[i];
            let offset = env.nominal.project(geo.cell_center(e.cell)).lateral.abs();
            let key = (e.step, offset, geo.linear(e.cell));
            let better = match best {
                None => true,
                Some((s, o, l)) => (key.0, key.1, key.2) < (s, o, l),
            };
            if better {
                best = Some(key);
            }
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (c, r) = (e.cell.col as i64 + dc, e.cell.row as i64 + dr);
                    if c < 0 || r < 0 || c >= geo.width as i64 || r >= geo.height as i64 {
                        continue;
                    }
                    let j = member[geo.linear(CellIndex::new(c as usize, r as usize))];
                    if j != usize::MAX && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if let Some((_, _, linear)) = best {
            let idx = member[linear];
            let e = reach.entries[idx];
            out.push(PhantomAgent {
                position: geo.cell_center(e.cell),
                class: reach.agents[e.agent],
            });
        }
    }
    out
}

/// Phantoms for this tick: the fresh spawns plus every earlier phantom
/// still hidden ahead of the vehicle. A hidden pedestrian does not vanish
/// because the plan changed, so dropping it would let the filter pass a
/// control one tick and find the same region unavoidable the next. A phantom
/// whose cell was revealed moves to the uncertain 8-neighbour nearest the
/// vehicle, since a pedestrian covers far less than a cell per tick; with no
/// such neighbour it is gone. Keyed by linear cell index and sorted.
#[allow(clippy::too_many_arguments)]
fn hold_phantoms(
    held: &[(usize, PhantomAgent<f64>)],
    fresh: &[PhantomAgent<f64>],
    reach: &ReachableOccludedSet,
    merged: &OccupancyGrid,
    solid: &[bool],
    band: (f64, f64),
    env: &Environment,
    arc: f64,
    av: Vec2,
) -> Vec<(usize, PhantomAgent<f64>)> {
    let geo = reach.geometry;
    let mut out: Vec<(usize, PhantomAgent<f64>)> = fresh
        .iter()
        .filter_map(|p| {
            geo.try_world_to_cell(p.position)
                .map(|c| (geo.linear(c), *p))
        })
        .collect();
    let hidden = |i: usize| {
        let v = merged.values()[i];
        v >= band.0 && v <= band.1 && !solid[i]
    };
    for &(idx, p) in held {
        let moved = if hidden(idx) {
            Some(idx)
        } else {
            let c = geo.cell_at(idx);
            let mut best: Option<(f64, usize)> = None;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
                    if col < 0 || row < 0 || col >= geo.width as i64 || row >= geo.height as i64 {
                        continue;
                    }
                    let j = geo.linear(CellIndex::new(col as usize, row as usize));
                    if !hidden(j) {
                        continue;
                    }
                    let d = geo.cell_center(geo.cell_at(j)).distance(av);
                    if best.is_none_or(|(bd, bj)| (d, j) < (bd, bj)) {
                        best = Some((d, j));
                    }
                }
            }
            best.map(|(_, j)| j)
        };
        if let Some(j) = moved {
            let q = PhantomAgent {
                position: geo.cell_center(geo.cell_at(j)),
                class: p.class,
            };
            if env.nominal.project(q.position).arc > arc {
                out.push((j, q));
            }
        }
    }
    out.sort_by_key(|&(idx, _)| idx);
    out.dedup_by_key(|&mut (idx, _)| idx);
    out
}

/// Reference states and controls `1..=horizon` steps ahead of arc `s0`.
fn reference(env: &Environment, s0: f64, cfg: &EpisodeConfig) -> (Vec<VehicleState>, Vec<Control>) {
    let p = &cfg.planner;
    let v = cfg.target_speed;
    let mut states = Vec::with_capacity(p.horizon);
    let mut controls = Vec::with_capacity(p.horizon);
    for n in 0..p.horizon {
        let s = s0 + v * p.dt * (n + 1) as f64;
        let pt = env.nominal.point_at(s);
        states.push(VehicleState::new(pt.x, pt.y, v, env.nominal.heading_at(s)));
        let s_u = s0 + v * p.dt * n as f64;
        let kappa = env.nominal.curvature_at(s_u, cfg.curvature_window);
        controls.push(Control::new(0.0, (p.vehicle.wheelbase * kappa).atan()));
    }
    (states, controls)
}

/// Runs one episode on `env`.
///
/// Each tick: scan the local window, note which cars the scan has hit so
/// far (the planner only knows those), merge with the HD map, threshold,
/// compute the reachable occluded set along the previous plan, pick
/// observation cells and build the APCM (Proposed only), plan with MPPI,
/// spawn phantoms and filter the first control (falling back to the last
/// commanded steering), check the commanded
/// braking path against the phantoms, and integrate.
pub fn run_episode(
    env: &Environment,
    cfg: &EpisodeConfig,
    seed: u64,
    mut observer: Option<&mut dyn FnMut(&TickView<'_>)>,
) -> Result<Episode, SimError> {
    cfg.validate()?;
    let planner = &cfg.planner;
    let params = planner.vehicle;
    let dt = planner.dt;
    let horizon = planner.horizon;
    let hd_geo = *env.hd.geometry();
    let all_obstacles: Vec<Obstacle<f64>> = env.obstacles();
    let cells_of_car = car_cells(env);
    let world_geo = *env.world.geometry();
    let mut sensed = vec![false; env.cars.len()];
    let solid = solid_mask(env);
    let end = env.nominal.length();

    let start = env.nominal.point_at(0.0);
    let mut state = VehicleState::new(
        start.x,
        start.y,
        cfg.target_speed,
        env.nominal.heading_at(0.0),
    );
    let (_, first_controls) = reference(env, 0.0, cfg);
    let mut tape: Vec<Control> = first_controls;
    let mut last_delta = tape[0].delta;
    let mut previous: Option<Vec<VehicleState>> = None;
    let mut ticks = Vec::new();
    let mut reached_end = false;
    let mut held: Vec<(usize, PhantomAgent<f64>)> = Vec::new();

    for tick in 0..cfg.tick_cap {
        let at = |e: apcm_core::Error| SimError::Planner { tick, source: e };
        let pos = state.position();
        let proj = env.nominal.project(pos);
        if proj.arc >= end {
            reached_end = true;
            break;
        }

        let window = sensor_window(&hd_geo, pos, cfg.window_cells);
        let sensor = SensorModel::new(
            cfg.sensor_range,
            cfg.angular_resolution,
            Pose::new(pos.x, pos.y, state.theta),
        )
        .map_err(at)?;
        let ogm = sensor_scan(&env.world, &sensor, window).map_err(at)?;
        mark_sensed(&mut sensed, &cells_of_car, &ogm, &world_geo);
        let obstacles: Vec<Obstacle<f64>> = all_obstacles
            .iter()
            .zip(&sensed)
            .filter(|(_, &s)| s)
            .map(|(o, _)| o.clone())
            .collect();
        let merged = merge_maps(&ogm, &env.hd).map_err(at)?;
        let uncertain = threshold_uncertain(&merged, cfg.band).map_err(at)?;

        let (ref_states, ref_controls) = reference(env, proj.arc, cfg);
        let path_points: Vec<Vec2> = match &previous {
            Some(prev) => (0..horizon)
                .map(|n| prev[(n + 1).min(prev.len() - 1)].position())
                .collect(),
            None => ref_states.iter().map(|s| s.position()).collect(),
        };
        let traj = PlannedTrajectory::new(path_points, dt).ok_or_else(|| {
            SimError::Config("planned trajectory needs a positive horizon".into())
        })?;
        let reach = reachable_occluded(&uncertain, &traj, &cfg.agents);

        let sources = select_observation_cells(
            &hd_geo,
            &env.nominal,
            env.lane_width,
            pos,
            horizon,
            dt,
            cfg.v_cap,
        );
        let apcm = (planner.plugin == VisibilityPlugin::Proposed)
            .then(|| update_apcm(&sources, &reach, &merged));

        let ctx = CostContext::new(apcm.as_ref(), &obstacles, pos, cfg.sensor_range);
        let plan = mppi_plan(
            &state,
            &ref_states,
            &ref_controls,
            &tape,
            planner,
            &ctx,
            seed,
            tick as u64,
        )
        .map_err(at)?;
        let plugin_cost = ctx.visibility_cost(&state, planner).map_err(at)?;

        let phantoms = if cfg.phantoms {
            // The reachable set above follows last tick's plan; this one
            // follows the plan about to be executed.
            let planned: Vec<Vec2> = plan.states[1..].iter().map(|s| s.position()).collect();
            let mut fresh = spawn_phantoms(&reach, env, &solid);
            if let Some(now) = PlannedTrajectory::new(planned, dt) {
                fresh.extend(spawn_phantoms(
                    &reachable_occluded(&uncertain, &now, &cfg.agents),
                    env,
                    &solid,
                ));
            }
            held = hold_phantoms(
                &held, &fresh, &reach, &merged, &solid, cfg.band, env, proj.arc, pos,
            );
            held.iter().map(|&(_, p)| p).collect()
        } else {
            Vec::new()
        };
        // Steering eases from the request back to last tick's, whose braking
        // path was verified then.
        let req = plan.controls[0].delta;
        let fallback: Vec<f64> = (1..=4)
            .map(|k| req + (last_delta - req) * k as f64 / 4.0)
            .collect();
        let decision = safety_filter_with_steering(
            &state,
            &plan.controls,
            &phantoms,
            &obstacles,
            &cfg.safety,
            &params,
            dt,
            &fallback,
        )
        .map_err(at)?;
        last_delta = decision.control.delta;

        let collision = if phantoms.is_empty() {
            false
        } else {
            let path = braking_path(
                &state,
                &decision.control,
                dt,
                &params,
                cfg.collision_substep,
            )
            .map_err(at)?;
            first_interception(&path, &phantoms, cfg.safety.collision_radius, 0.0, false).is_some()
        };

        if let Some(obs) = observer.as_mut() {
            obs(&TickView {
                tick,
                state: &state,
                merged: &merged,
                reachable: &reach,
                apcm: apcm.as_ref(),
                phantoms: &phantoms,
            });
        }

        let nearest = env.nearest_car(pos);
        let h = env.nominal.heading_at(proj.arc);
        let approaching = env.nearest_unpassed_car(pos, Vec2::new(h.cos(), h.sin()));
        let requested = plan.controls[0];
        ticks.push(TickRecord {
            tick,
            time: tick as f64 * dt,
            x: state.x,
            y: state.y,
            theta: state.theta,
            v: state.v,
            arc: proj.arc,
            lateral: proj.lateral,
            displacement: env.displacement(proj.lateral),
            a_requested: requested.a,
            delta_requested: requested.delta,
            a_command: decision.control.a,
            delta_command: decision.control.delta,
            filter: decision.action.name(),
            ttc: decision.ttc,
            plugin_cost,
            nearest_obstacle: nearest,
            uncertain: uncertain.len(),
            reachable: reach.len(),
            sources: sources.len(),
            phantoms: phantoms.len(),
            collision,
            in_window: approaching <= cfg.metric_window,
        });

        state = step_rk4(&state, &decision.control, dt, &params).map_err(at)?;
        tape = shift_tape(&plan.controls);
        previous = Some(plan.states);
    }
    Ok(Episode { ticks, reached_end })
}
