//! Experiment plans read from the sectioned config format.
//!
//! Recognised sections and keys (all optional; defaults in brackets):
//!
//! ```text
//! [experiment]
//! scenarios = park, curve          # straight, intersection, curve, park, single_car [single_car]
//! methods   = proposed, none       # proposed, higgins, andersen, none, nominal [proposed]
//! speeds    = 5.0, 7.5, 10.0       # m/s [7.5]
//! seeds     = 1..10                # inclusive range or list [1..10]
//! workers   = 0                    # episode workers, 0 = one per core [0]
//! dump_apcm_every = 0              # write APCM grids every n ticks, 0 = never [0]
//!
//! [scenario]
//! lane_width = 4.0   path_length = 120.0   density = 1.0   resolution = 0.4
//! car_length = 4.8   car_width = 2.0       dense_threshold = 9.0
//!
//! [planner]
//! samples  horizon  dt  temperature  noise_correlation  r_safe  obstacle_penalty
//! r_fov  higgins_guard
//! q = 4 values   q_terminal = 4 values   r = 2 values   noise_std = 2 values
//! scale.proposed  scale.higgins  scale.andersen   # M, M and lambda
//!
//! [vehicle]
//! wheelbase  a_min  a_max  delta_max  v_min  v_max
//!
//! [safety]
//! ttc_threshold  collision_radius  margin  obstacle_clearance  substep  candidates
//!
//! [sim]
//! sensor_range  angular_resolution  window_cells  band = lo, hi
//! pedestrian_speed  v_cap  tick_cap  metric_window  phantoms = true|false
//! collision_substep  curvature_window
//! ```
//!
//! Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use apcm_core::controller::VisibilityPlugin;
use apcm_core::reachability::{AgentClass, AgentKind};

use crate::config::ConfigFile;
use crate::episode::EpisodeConfig;
use crate::metrics::RunKey;
use crate::scenario::{ScenarioFamily, ScenarioSpec};
use crate::SimError;

/// Default visibility weights, from the single-car calibration sweep.
pub fn default_scale(method: VisibilityPlugin) -> f64 {
    match method {
        VisibilityPlugin::Proposed => 40.0,
        VisibilityPlugin::Higgins => 7e-3,
        VisibilityPlugin::Andersen => 10.0,
        VisibilityPlugin::None | VisibilityPlugin::Nominal => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub scenarios: Vec<ScenarioFamily>,
    pub methods: Vec<VisibilityPlugin>,
    pub speeds: Vec<f64>,
    pub seeds: Vec<u64>,
    /// 0 picks one worker per core.
    pub workers: usize,
    pub dump_apcm_every: usize,
    /// Template; family, speed and seed are set per run.
    pub scenario: ScenarioSpec,
    /// Template; method, scale and speed are set per run.
    pub episode: EpisodeConfig,
    pub scales: BTreeMap<VisibilityPlugin, f64>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            scenarios: vec![ScenarioFamily::SingleCar],
            methods: vec![VisibilityPlugin::Proposed],
            speeds: vec![7.5],
            seeds: (1..=10).collect(),
            workers: 0,
            dump_apcm_every: 0,
            scenario: ScenarioSpec::new(ScenarioFamily::SingleCar, 7.5, 1),
            episode: EpisodeConfig::default(),
            scales: VisibilityPlugin::ALL
                .into_iter()
                .map(|m| (m, default_scale(m)))
                .collect(),
        }
    }
}

const SECTIONS: [&str; 6] = [
    "experiment",
    "scenario",
    "planner",
    "vehicle",
    "safety",
    "sim",
];

fn set<T: std::str::FromStr>(
    cfg: &ConfigFile,
    section: &str,
    key: &str,
    slot: &mut T,
) -> Result<(), SimError>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = cfg.get(section, key)? {
        *slot = v;
    }
    Ok(())
}

fn set_array<const N: usize>(
    cfg: &ConfigFile,
    section: &str,
    key: &str,
    slot: &mut [f64; N],
) -> Result<(), SimError> {
    if let Some(v) = cfg.get_list::<f64>(section, key)? {
        *slot = v.try_into().map_err(|v: Vec<f64>| {
            SimError::Config(format!(
                "[{section}] {key} needs {N} values, got {}",
                v.len()
            ))
        })?;
    }
    Ok(())
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_config(&ConfigFile::load(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        Self::from_config(&ConfigFile::parse(text)?)
    }

    pub fn from_config(cfg: &ConfigFile) -> Result<Self, SimError> {
        for s in cfg.sections() {
            if !SECTIONS.contains(&s) {
                return Err(SimError::Config(format!(
                    "unknown section [{s}] (known: {})",
                    SECTIONS.join(", ")
                )));
            }
        }
        let mut plan = Self::default();

        let e = "experiment";
        cfg.check_keys(
            e,
            &[
                "scenarios",
                "methods",
                "speeds",
                "seeds",
                "workers",
                "dump_apcm_every",
            ],
        )?;
        if let Some(list) = cfg.get_list::<String>(e, "scenarios")? {
            plan.scenarios = list.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
        }
        if let Some(list) = cfg.get_list::<String>(e, "methods")? {
            plan.methods = list
                .iter()
                .map(|s| {
                    s.parse::<VisibilityPlugin>()
                        .map_err(|e| SimError::Config(e.to_string()))
                })
                .collect::<Result<_, _>>()?;
        }
        if let Some(list) = cfg.get_list::<f64>(e, "speeds")? {
            plan.speeds = list;
        }
        if let Some(seeds) = cfg.get_range(e, "seeds")? {
            plan.seeds = seeds;
        }
        set(cfg, e, "workers", &mut plan.workers)?;
        set(cfg, e, "dump_apcm_every", &mut plan.dump_apcm_every)?;

        let s = "scenario";
        cfg.check_keys(
            s,
            &[
                "lane_width",
                "path_length",
                "density",
                "resolution",
                "car_length",
                "car_width",
                "dense_threshold",
                "repetitions",
            ],
        )?;
        let sc = &mut plan.scenario;
        set(cfg, s, "lane_width", &mut sc.lane_width)?;
        set(cfg, s, "path_length", &mut sc.path_length)?;
        set(cfg, s, "density", &mut sc.density)?;
        set(cfg, s, "resolution", &mut sc.resolution)?;
        set(cfg, s, "car_length", &mut sc.car_length)?;
        set(cfg, s, "car_width", &mut sc.car_width)?;
        set(cfg, s, "dense_threshold", &mut sc.dense_threshold)?;
        set(cfg, s, "repetitions", &mut sc.repetitions)?;

        let p = "planner";
        cfg.check_keys(
            p,
            &[
                "samples",
                "horizon",
                "dt",
                "temperature",
                "noise_correlation",
                "r_safe",
                "obstacle_penalty",
                "r_fov",
                "higgins_guard",
                "q",
                "q_terminal",
                "r",
                "noise_std",
                "scale.proposed",
                "scale.higgins",
                "scale.andersen",
            ],
        )?;
        let pl = &mut plan.episode.planner;
        set(cfg, p, "samples", &mut pl.samples)?;
        set(cfg, p, "horizon", &mut pl.horizon)?;
        set(cfg, p, "dt", &mut pl.dt)?;
        set(cfg, p, "temperature", &mut pl.temperature)?;
        set(cfg, p, "noise_correlation", &mut pl.noise_correlation)?;
        set(cfg, p, "r_safe", &mut pl.r_safe)?;
        set(cfg, p, "obstacle_penalty", &mut pl.obstacle_penalty)?;
        set(cfg, p, "r_fov", &mut pl.r_fov)?;
        set(cfg, p, "higgins_guard", &mut pl.higgins_guard)?;
        set_array(cfg, p, "q", &mut pl.q)?;
        set_array(cfg, p, "q_terminal", &mut pl.q_terminal)?;
        set_array(cfg, p, "r", &mut pl.r)?;
        set_array(cfg, p, "noise_std", &mut pl.noise_std)?;
        for m in [
            VisibilityPlugin::Proposed,
            VisibilityPlugin::Higgins,
            VisibilityPlugin::Andersen,
        ] {
            if let Some(v) = cfg.get::<f64>(p, &format!("scale.{}", m.name()))? {
                plan.scales.insert(m, v);
            }
        }

        let v = "vehicle";
        cfg.check_keys(
            v,
            &["wheelbase", "a_min", "a_max", "delta_max", "v_min", "v_max"],
        )?;
        let vp = &mut plan.episode.planner.vehicle;
        set(cfg, v, "wheelbase", &mut vp.wheelbase)?;
        set(cfg, v, "a_min", &mut vp.a_min)?;
        set(cfg, v, "a_max", &mut vp.a_max)?;
        set(cfg, v, "delta_max", &mut vp.delta_max)?;
        set(cfg, v, "v_min", &mut vp.v_min)?;
        set(cfg, v, "v_max", &mut vp.v_max)?;

        let f = "safety";
        cfg.check_keys(
            f,
            &[
                "ttc_threshold",
                "collision_radius",
                "margin",
                "obstacle_clearance",
                "substep",
                "candidates",
            ],
        )?;
        let sf = &mut plan.episode.safety;
        set(cfg, f, "ttc_threshold", &mut sf.ttc_threshold)?;
        set(cfg, f, "collision_radius", &mut sf.collision_radius)?;
        set(cfg, f, "margin", &mut sf.margin)?;
        set(cfg, f, "obstacle_clearance", &mut sf.obstacle_clearance)?;
        set(cfg, f, "substep", &mut sf.substep)?;
        set(cfg, f, "candidates", &mut sf.candidates)?;

        let m = "sim";
        cfg.check_keys(
            m,
            &[
                "sensor_range",
                "angular_resolution",
                "window_cells",
                "band",
                "pedestrian_speed",
                "v_cap",
                "tick_cap",
                "metric_window",
                "phantoms",
                "collision_substep",
                "curvature_window",
            ],
        )?;
        let ep = &mut plan.episode;
        set(cfg, m, "sensor_range", &mut ep.sensor_range)?;
        set(cfg, m, "angular_resolution", &mut ep.angular_resolution)?;
        set(cfg, m, "window_cells", &mut ep.window_cells)?;
        set(cfg, m, "v_cap", &mut ep.v_cap)?;
        set(cfg, m, "tick_cap", &mut ep.tick_cap)?;
        set(cfg, m, "metric_window", &mut ep.metric_window)?;
        set(cfg, m, "phantoms", &mut ep.phantoms)?;
        set(cfg, m, "collision_substep", &mut ep.collision_substep)?;
        set(cfg, m, "curvature_window", &mut ep.curvature_window)?;
        let mut band = [ep.band.0, ep.band.1];
        set_array(cfg, m, "band", &mut band)?;
        ep.band = (band[0], band[1]);
        if let Some(speed) = cfg.get::<f64>(m, "pedestrian_speed")? {
            ep.agents = vec![
                AgentClass::new(AgentKind::Pedestrian, speed).ok_or_else(|| {
                    SimError::Config(format!("pedestrian_speed must be positive, got {speed}"))
                })?,
            ];
        }

        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.scenarios.is_empty()
            || self.methods.is_empty()
            || self.speeds.is_empty()
            || self.seeds.is_empty()
        {
            return Err(SimError::Config(
                "scenarios, methods, speeds and seeds must be non-empty".into(),
            ));
        }
        let v_max = self.episode.planner.vehicle.v_max;
        for &v in &self.speeds {
            if !(v > 0.0 && v <= v_max) {
                return Err(SimError::Config(format!("speed {v} outside (0, {v_max}]")));
            }
        }
        for (m, s) in &self.scales {
            if !(*s >= 0.0 && s.is_finite()) {
                return Err(SimError::Config(format!(
                    "scale.{m} must be non-negative, got {s}"
                )));
            }
        }
        self.scenario.validate()?;
        self.episode.validate()
    }

    /// All runs in matrix order: scenario, method, speed, seed.
    pub fn keys(&self) -> Vec<RunKey> {
        let mut out = Vec::new();
        for &scenario in &self.scenarios {
            for &method in &self.methods {
                for &speed in &self.speeds {
                    for &seed in &self.seeds {
                        out.push(RunKey {
                            scenario,
                            method,
                            speed,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn scale(&self, method: VisibilityPlugin) -> f64 {
        self.scales
            .get(&method)
            .copied()
            .unwrap_or_else(|| default_scale(method))
    }

    pub fn scenario_spec(&self, key: &RunKey) -> ScenarioSpec {
        ScenarioSpec {
            family: key.scenario,
            seed: key.seed,
            target_speed: key.speed,
            ..self.scenario.clone()
        }
    }

    pub fn episode_config(&self, key: &RunKey) -> EpisodeConfig {
        let mut cfg = self
            .episode
            .clone()
            .with_method(key.method, self.scale(key.method));
        cfg.target_speed = key.speed;
        cfg
    }
}
