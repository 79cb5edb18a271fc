//! Pipeline parameters, sensor model and deterministic seed derivation.
//!
//! Both structs load from one plain-text `key value` file. The threshold
//! parameters all have standard defaults and may be omitted; the sensor
//! parameters describe hardware and have no sensible universal default, so
//! the file must declare every one of them explicitly.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
}

/// Tuning parameters of the mapping pipeline.
///
/// Field names double as the keys of the config file format.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Dynamic-feature weight cutoff: after a deployment, pixel weights at or
    /// below this fraction of the maximum pixel weight are zeroed.
    pub t1_df: f64,
    /// Short-term-feature threshold: observations survive filtering only
    /// where the interpolated long-term weight exceeds this fraction.
    pub t2_stf: f64,
    /// Chi-squared gate for merging a new line into an existing map line.
    pub t_chi: f64,
    /// Maximum interpolated SDF value (meters) for an observation to count
    /// as lying on persistent structure.
    pub t_d: f64,
    /// Inlier distance (meters) between a point and a candidate segment.
    pub t_r: f64,
    /// Endpoint motion (meters) below which line refinement stops.
    pub t_c: f64,
    /// SDF truncation distance (meters).
    pub delta: f64,
    /// SDF pixel size (meters).
    pub grid_resolution_q: f64,
    /// Monte Carlo rounds for endpoint covariance estimation.
    pub mc_samples_k: u32,
    /// RANSAC hypothesis count per extracted line.
    pub ransac_iters: u32,
    /// Minimum inlier count for a hypothesis or emitted line.
    pub min_inliers: u32,
    /// Root seed from which every stochastic stage derives its own child.
    pub rng_seed: u64,
    /// Neighborhood radius (meters) for sampling the second point of a
    /// RANSAC hypothesis pair.
    pub local_radius: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            t1_df: 0.2,
            t2_stf: 0.95,
            t_chi: 30.0,
            t_d: 0.05,
            t_r: 0.12,
            t_c: 0.05,
            delta: 0.2,
            grid_resolution_q: 0.05,
            mc_samples_k: 100,
            ransac_iters: 100,
            min_inliers: 10,
            rng_seed: 0,
            local_radius: 0.5,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |key: &str, ok: bool, message: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::InvalidValue {
                    key: key.to_string(),
                    message: message.to_string(),
                })
            }
        };
        check("t1_df", (0.0..=1.0).contains(&self.t1_df), "must be in [0, 1]")?;
        check(
            "t2_stf",
            self.t2_stf > 0.0 && self.t2_stf <= 1.0,
            "must be in (0, 1]",
        )?;
        check("t_chi", self.t_chi.is_finite() && self.t_chi > 0.0, "must be positive")?;
        check("t_d", self.t_d.is_finite() && self.t_d > 0.0, "must be positive")?;
        check("t_r", self.t_r.is_finite() && self.t_r > 0.0, "must be positive")?;
        check("t_c", self.t_c.is_finite() && self.t_c > 0.0, "must be positive")?;
        check("delta", self.delta.is_finite() && self.delta > 0.0, "must be positive")?;
        check(
            "grid_resolution_q",
            self.grid_resolution_q.is_finite() && self.grid_resolution_q > 0.0,
            "must be positive",
        )?;
        check(
            "grid_resolution_q",
            self.grid_resolution_q < self.delta,
            "must be smaller than delta",
        )?;
        check("mc_samples_k", self.mc_samples_k >= 2, "must be at least 2")?;
        check("ransac_iters", self.ransac_iters >= 1, "must be at least 1")?;
        check("min_inliers", self.min_inliers >= 2, "must be at least 2")?;
        check(
            "local_radius",
            self.local_radius.is_finite() && self.local_radius > 0.0,
            "must be positive",
        )?;
        Ok(())
    }

    /// All fields as `(key, value)` pairs in file order; values round-trip
    /// exactly through [`Config::apply_key_value`].
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        vec![
            ("t1_df".into(), format_f64(self.t1_df)),
            ("t2_stf".into(), format_f64(self.t2_stf)),
            ("t_chi".into(), format_f64(self.t_chi)),
            ("t_d".into(), format_f64(self.t_d)),
            ("t_r".into(), format_f64(self.t_r)),
            ("t_c".into(), format_f64(self.t_c)),
            ("delta".into(), format_f64(self.delta)),
            ("grid_resolution_q".into(), format_f64(self.grid_resolution_q)),
            ("mc_samples_k".into(), self.mc_samples_k.to_string()),
            ("ransac_iters".into(), self.ransac_iters.to_string()),
            ("min_inliers".into(), self.min_inliers.to_string()),
            ("rng_seed".into(), self.rng_seed.to_string()),
            ("local_radius".into(), format_f64(self.local_radius)),
        ]
    }

    /// Set one field from its file key. Returns false if the key is not a
    /// pipeline parameter (the caller may then try the sensor model).
    pub fn apply_key_value(&mut self, key: &str, value: &str) -> Result<bool, String> {
        match key {
            "t1_df" => self.t1_df = parse_f64(value)?,
            "t2_stf" => self.t2_stf = parse_f64(value)?,
            "t_chi" => self.t_chi = parse_f64(value)?,
            "t_d" => self.t_d = parse_f64(value)?,
            "t_r" => self.t_r = parse_f64(value)?,
            "t_c" => self.t_c = parse_f64(value)?,
            "delta" => self.delta = parse_f64(value)?,
            "grid_resolution_q" => self.grid_resolution_q = parse_f64(value)?,
            "mc_samples_k" => self.mc_samples_k = parse_int(value)?,
            "ransac_iters" => self.ransac_iters = parse_int(value)?,
            "min_inliers" => self.min_inliers = parse_int(value)?,
            "rng_seed" => self.rng_seed = parse_int(value)?,
            "local_radius" => self.local_radius = parse_f64(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Range sensor noise and truncation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// Range noise standard deviation (meters).
    pub sigma_rho: f64,
    /// Bearing noise standard deviation (radians).
    pub sigma_alpha: f64,
    /// Half-width (meters) of the full-confidence band around a hit.
    pub epsilon: f64,
    /// Falloff rate (1/m^2) of observation weight outside the band.
    pub sigma_w: f64,
    /// Maximum measurable range (meters).
    pub max_range: f64,
}

impl SensorModel {
    pub fn validate(&self, delta: f64) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: &str| ConfigError::InvalidValue {
            key: key.to_string(),
            message: message.to_string(),
        };
        if !(self.sigma_rho.is_finite() && self.sigma_rho >= 0.0) {
            return Err(invalid("sigma_rho", "must be finite and non-negative"));
        }
        if !(self.sigma_alpha.is_finite() && self.sigma_alpha >= 0.0) {
            return Err(invalid("sigma_alpha", "must be finite and non-negative"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if self.epsilon >= delta {
            return Err(invalid("epsilon", "must be smaller than delta"));
        }
        if !(self.sigma_w.is_finite() && self.sigma_w >= 0.0) {
            return Err(invalid("sigma_w", "must be finite and non-negative"));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(invalid("max_range", "must be positive"));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> Vec<(String, String)> {
        vec![
            ("sigma_rho".into(), format_f64(self.sigma_rho)),
            ("sigma_alpha".into(), format_f64(self.sigma_alpha)),
            ("epsilon".into(), format_f64(self.epsilon)),
            ("sigma_w".into(), format_f64(self.sigma_w)),
            ("max_range".into(), format_f64(self.max_range)),
        ]
    }

    pub fn apply_key_value(&mut self, key: &str, value: &str) -> Result<bool, String> {
        match key {
            "sigma_rho" => self.sigma_rho = parse_f64(value)?,
            "sigma_alpha" => self.sigma_alpha = parse_f64(value)?,
            "epsilon" => self.epsilon = parse_f64(value)?,
            "sigma_w" => self.sigma_w = parse_f64(value)?,
            "max_range" => self.max_range = parse_f64(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Format a float so that parsing the string recovers the exact same bits.
pub fn format_f64(x: f64) -> String {
    // Both plain and exponent formatting emit the shortest digit string
    // that parses back to the identical value; plain formatting spells out
    // every zero for extreme magnitudes (1e-300 becomes 302 characters),
    // so keep whichever rendering is shorter.
    let plain = format!("{x}");
    let exp = format!("{x:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

fn parse_f64(value: &str) -> Result<f64, String> {
    let x: f64 = value
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    if x.is_nan() {
        return Err("NaN is not allowed".to_string());
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("`{value}` is not a valid integer"))
}

/// Parse the combined pipeline/sensor config file.
///
/// Format: one `key value` pair per line; `#` starts a comment; blank lines
/// are ignored. Pipeline keys are optional (defaults apply), sensor keys are
/// all required, unknown keys are rejected.
pub fn load_config_file(path: &std::path::Path) -> Result<(Config, SensorModel), ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<(Config, SensorModel), ConfigError> {
    let mut config = Config::default();
    let mut sensor = SensorModel {
        sigma_rho: f64::NAN,
        sigma_alpha: f64::NAN,
        epsilon: f64::NAN,
        sigma_w: f64::NAN,
        max_range: f64::NAN,
    };
    let mut seen_sensor = [false; 5];
    const SENSOR_KEYS: [&str; 5] = ["sigma_rho", "sigma_alpha", "epsilon", "sigma_w", "max_range"];

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        let value = parts.next().ok_or_else(|| ConfigError::Parse {
            line: line_no,
            message: format!("key `{key}` has no value"),
        })?;
        if parts.next().is_some() {
            return Err(ConfigError::Parse {
                line: line_no,
                message: "expected exactly `key value`".to_string(),
            });
        }
        let parse_err = |message: String| ConfigError::Parse {
            line: line_no,
            message,
        };
        if config.apply_key_value(key, value).map_err(parse_err)? {
            continue;
        }
        let parse_err = |message: String| ConfigError::Parse {
            line: line_no,
            message,
        };
        if sensor.apply_key_value(key, value).map_err(parse_err)? {
            if let Some(pos) = SENSOR_KEYS.iter().position(|k| *k == key) {
                seen_sensor[pos] = true;
            }
            continue;
        }
        return Err(ConfigError::Parse {
            line: line_no,
            message: format!("unknown key `{key}`"),
        });
    }

    for (pos, key) in SENSOR_KEYS.iter().enumerate() {
        if !seen_sensor[pos] {
            return Err(ConfigError::MissingKey(key.to_string()));
        }
    }
    config.validate()?;
    sensor.validate(config.delta)?;
    Ok((config, sensor))
}

/// Derive a child seed for an independent random stream.
///
/// Every stochastic stage feeds the root seed plus a stream tag (and loop
/// indices, by chaining calls) through this function, so runs are
/// reproducible bit-for-bit regardless of thread count or stage order.
pub fn child_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(parent.wrapping_add(splitmix64(stream)))
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags for [`child_seed`].
pub mod streams {
    pub const RANSAC: u64 = 1;
    pub const MONTE_CARLO: u64 = 2;
    pub const SCENE: u64 = 3;
    pub const SCAN_NOISE: u64 = 4;
    pub const PRUNE: u64 = 5;
}
