use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vehicle::VehicleParams;

/// Which visibility term the planner adds to its stage cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VisibilityPlugin {
    /// APCM lookup, `-M * P(cell)`.
    Proposed,
    /// Squared softplus field around fitted obstacle circles.
    Higgins,
    /// Angle to the closest unpassed obstacle's corners.
    Andersen,
    /// No visibility term, obstacle penalty kept.
    None,
    /// Tracking only; obstacles ignored.
    Nominal,
}

impl VisibilityPlugin {
    pub const ALL: [VisibilityPlugin; 5] = [
        VisibilityPlugin::Proposed,
        VisibilityPlugin::Higgins,
        VisibilityPlugin::Andersen,
        VisibilityPlugin::None,
        VisibilityPlugin::Nominal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VisibilityPlugin::Proposed => "proposed",
            VisibilityPlugin::Higgins => "higgins",
            VisibilityPlugin::Andersen => "andersen",
            VisibilityPlugin::None => "none",
            VisibilityPlugin::Nominal => "nominal",
        }
    }

    /// Comma-separated list of every plugin name.
    pub fn valid_names() -> String {
        Self::ALL.map(|p| p.name()).join(", ")
    }
}

impl fmt::Display for VisibilityPlugin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VisibilityPlugin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown method `{s}` (valid: {})",
                    Self::valid_names()
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig<T> {
    /// Diagonal weights on `[x, y, v, theta]` error.
    pub q: [T; 4],
    /// Terminal weights, same layout as `q`.
    pub q_terminal: [T; 4],
    /// Diagonal weights on `[a, delta]` error.
    pub r: [T; 2],
    pub samples: usize,
    pub horizon: usize,
    pub dt: T,
    /// Softmin temperature.
    pub temperature: T,
    /// Standard deviation of the `[a, delta]` perturbations.
    pub noise_std: [T; 2],
    /// Step-to-step correlation of the perturbations, in `[0, 1)`. The
    /// marginal standard deviation stays `noise_std`.
    pub noise_correlation: T,
    pub r_safe: T,
    /// Added once per horizon step closer than `r_safe` to an obstacle.
    pub obstacle_penalty: T,
    pub plugin: VisibilityPlugin,
    /// `M` for Proposed and Higgins, `lambda` for Andersen.
    pub scale: T,
    /// Field-of-view radius of the Higgins cost.
    pub r_fov: T,
    /// Higgins exponent above which the softplus is replaced by its argument.
    pub higgins_guard: T,
    pub vehicle: VehicleParams<T>,
}

impl<T: Real> Default for PlannerConfig<T> {
    fn default() -> Self {
        Self {
            q: [T::one(), T::one(), T::one(), T::lit(2.0)],
            q_terminal: [T::lit(2.0), T::lit(2.0), T::one(), T::lit(2.0)],
            r: [T::lit(0.1), T::lit(1.0)],
            samples: 10_000,
            horizon: 25,
            dt: T::lit(0.1),
            temperature: T::one(),
            noise_std: [T::one(), T::lit(0.15)],
            noise_correlation: T::lit(0.9),
            r_safe: T::lit(1.5),
            obstacle_penalty: T::lit(1e5),
            plugin: VisibilityPlugin::Proposed,
            scale: T::lit(10.0),
            r_fov: T::lit(10.0),
            higgins_guard: T::lit(30.0),
            vehicle: VehicleParams::default(),
        }
    }
}

impl<T: Real> PlannerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let weights = self.q.iter().chain(&self.q_terminal).chain(&self.r);
        if weights.into_iter().any(|w| !(*w >= T::zero())) {
            return Err(Error::InvalidParameter(
                "weights must be non-negative".into(),
            ));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("samples must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidTimeStep(self.dt.as_f64()));
        }
        if !(self.temperature > T::zero()) {
            return Err(Error::InvalidParameter(
                "temperature must be positive".into(),
            ));
        }
        if self.noise_std.iter().any(|s| !(*s >= T::zero())) {
            return Err(Error::InvalidParameter(
                "noise std must be non-negative".into(),
            ));
        }
        if !(self.noise_correlation >= T::zero() && self.noise_correlation < T::one()) {
            return Err(Error::InvalidParameter(
                "noise correlation must lie in [0, 1)".into(),
            ));
        }
        if !(self.r_safe >= T::zero()) || !(self.obstacle_penalty >= T::zero()) {
            return Err(Error::InvalidParameter(
                "r_safe and obstacle_penalty must be non-negative".into(),
            ));
        }
        if !(self.scale >= T::zero()) || !(self.r_fov > T::zero()) {
            return Err(Error::InvalidParameter(
                "plugin scale must be non-negative and r_fov positive".into(),
            ));
        }
        self.vehicle.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plugin_names_round_trip() {
        for p in VisibilityPlugin::ALL {
            assert_eq!(p.name().parse::<VisibilityPlugin>().unwrap(), p);
        }
        let err = "magic".parse::<VisibilityPlugin>().unwrap_err().to_string();
        assert!(
            err.contains("proposed, higgins, andersen, none, nominal"),
            "{err}"
        );
    }

    #[test]
    fn default_config_is_valid() {
        PlannerConfig::<f64>::default().validate().unwrap();
        let bad = PlannerConfig::<f64> {
            temperature: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
