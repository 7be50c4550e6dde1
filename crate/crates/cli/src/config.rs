//! Strict flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, keys come from a fixed
//! vocabulary shared by every subcommand. Parsing is deliberately
//! unforgiving: unknown keys, duplicate keys, and malformed values are all
//! fatal, so a config cannot silently drift away from the run it describes.
//! After the file is read, environment variables prefixed `DKGA_` override
//! individual keys (e.g. `DKGA_GRID_N=48`), under the same strictness.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use dkga::kleingordon::{ChargeProfile, NucleusPath, PathError};
use dkga::solver::{GateThresholds, KgDataSpec, RunConfig, SpinorDataSpec, WMode};

use crate::CliError;

/// Environment override prefix; `DKGA_FOO_BAR` overrides key `foo_bar`.
pub const ENV_PREFIX: &str = "DKGA_";

/// Keys that have no default and must appear in every config.
pub const REQUIRED_KEYS: [&str; 4] = ["grid_n", "box_length", "horizon", "dt"];

/// The full key vocabulary. Commands read the subset they need; a key that
/// is known but unused by the invoked subcommand is legal and ignored.
pub const KNOWN_KEYS: [&str; 40] = [
    "grid_n",
    "box_length",
    "horizon",
    "dt",
    "p",
    "s",
    "weight_n",
    "dirac_mass",
    "nucleus_mass",
    "v0",
    "eps_soft",
    "picard_tol",
    "picard_max_iters",
    "nonlinearity",
    "w_mode",
    "chi_kind",
    "chi_amplitude",
    "chi_sigma",
    "chi_radius",
    "w0_amplitude",
    "w0_sigma",
    "w1_amplitude",
    "w1_sigma",
    "u0_amplitude",
    "u0_sigma",
    "u0_center",
    "u0_modulation",
    "u0_weights",
    "u0_phases",
    "eta_horizon",
    "gate_smallness",
    "gate_u0_hs",
    "gate_chi_w11",
    "dump_stride",
    "theorem_compliant",
    "path_kind",
    "osc_amplitude",
    "osc_omega",
    "osc_axis",
    "quad_levels",
];

/// Keys consumed only by the verification subcommands; same vocabulary
/// treatment, split out so the arrays above stay readable.
pub const VERIFY_KEYS: [&str; 8] = [
    "kernel_sigma",
    "kernel_v",
    "kernel_tol",
    "fit_t0",
    "fit_t1",
    "fit_samples",
    "fit_expect",
    "fit_tolerance",
];

fn is_known(key: &str) -> bool {
    KNOWN_KEYS.contains(&key) || VERIFY_KEYS.contains(&key) || key == "decomp_tol"
}

fn defaults_policy(missing: &[&str]) -> String {
    format!(
        "missing required key{} {}: grid_n, box_length, horizon and dt must be set \
         explicitly; every other key falls back to its documented default",
        if missing.len() == 1 { "" } else { "s" },
        missing.join(", ")
    )
}

/// A parsed config: raw assignments plus a read-tracking view so the echo
/// can distinguish explicit settings from defaults.
#[derive(Debug, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    /// Parses `text`, then applies `DKGA_*` environment overrides.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        let mut unknown = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected `key = value`, got `{}`",
                    lineno + 1,
                    line
                )));
            };
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if !is_known(&key) {
                unknown.push(key);
                continue;
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(CliError::Usage(format!(
                    "config line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        if !unknown.is_empty() {
            return Err(CliError::Usage(format!(
                "unknown config key{}: {}",
                if unknown.len() == 1 { "" } else { "s" },
                unknown.join(", ")
            )));
        }
        let mut cfg = Self { values };
        cfg.apply_env_overrides(std::env::vars())?;
        Ok(cfg)
    }

    /// Overrides from `DKGA_*` variables; a prefixed variable that does not
    /// name a known key is fatal, same as in the file.
    fn apply_env_overrides(
        &mut self,
        vars: impl Iterator<Item = (String, String)>,
    ) -> Result<(), CliError> {
        for (name, value) in vars {
            let Some(suffix) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = suffix.to_ascii_lowercase();
            if !is_known(&key) {
                return Err(CliError::Usage(format!(
                    "environment override {name} does not name a known config key"
                )));
            }
            self.values.insert(key, value.trim().to_string());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(is_known(key), "unvetted key {key}");
        self.values.get(key).map(String::as_str)
    }

    /// The raw assignments as parsed, for echoing before a `RunConfig`
    /// exists (and in its place when building one fails).
    pub fn raw_echo(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::Usage(defaults_policy(&[key])))
    }

    pub fn f64_req(&self, key: &str) -> Result<f64, CliError> {
        parse_f64(key, self.require(key)?)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        self.get(key).map_or(Ok(default), |v| parse_f64(key, v))
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key).map(|v| parse_f64(key, v)).transpose()
    }

    pub fn usize_req(&self, key: &str) -> Result<usize, CliError> {
        parse_usize(key, self.require(key)?)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        self.get(key).map_or(Ok(default), |v| parse_usize(key, v))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(CliError::Usage(format!(
                "key {key}: expected true or false, got `{v}`"
            ))),
        }
    }

    pub fn triple_or(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3], CliError> {
        self.get(key)
            .map_or(Ok(default), |v| parse_vector::<3>(key, v))
    }

    pub fn quad_or(&self, key: &str, default: [f64; 4]) -> Result<[f64; 4], CliError> {
        self.get(key)
            .map_or(Ok(default), |v| parse_vector::<4>(key, v))
    }

    /// Checks the required quartet up front so the error can list every
    /// missing key at once.
    pub fn check_required(&self) -> Result<(), CliError> {
        let missing: Vec<&str> = REQUIRED_KEYS
            .iter()
            .filter(|k| self.get(k).is_none())
            .copied()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(defaults_policy(&missing)))
        }
    }

    /// Assembles the solver configuration. Defaults mirror
    /// `RunConfig::baseline`; structural validation stays with the solver.
    pub fn to_run_config(&self) -> Result<RunConfig, CliError> {
        self.check_required()?;
        let mut cfg = RunConfig::baseline(
            self.usize_req("grid_n")?,
            self.f64_req("box_length")?,
            self.f64_req("horizon")?,
            self.f64_req("dt")?,
        );
        cfg.p = self.f64_or("p", cfg.p)?;
        cfg.s = self.f64_or("s", cfg.s)?;
        cfg.weight_n = self.f64_or("weight_n", cfg.weight_n)?;
        cfg.dirac_mass = self.f64_or("dirac_mass", cfg.dirac_mass)?;
        cfg.nucleus_mass = self.f64_or("nucleus_mass", cfg.nucleus_mass)?;
        cfg.v0 = self.triple_or("v0", cfg.v0)?;
        cfg.eps_soft = match self.get("eps_soft") {
            None | Some("cell") => None,
            Some(v) => Some(parse_f64("eps_soft", v)?),
        };
        cfg.picard_tol = self.f64_or("picard_tol", cfg.picard_tol)?;
        cfg.picard_max_iters = self.usize_or("picard_max_iters", cfg.picard_max_iters)?;
        cfg.nonlinearity = self.bool_or("nonlinearity", cfg.nonlinearity)?;
        cfg.w_mode = match self.get("w_mode") {
            None | Some("decomposition") => WMode::Decomposition,
            Some("direct") => WMode::Direct,
            Some(v) => {
                return Err(CliError::Usage(format!(
                    "key w_mode: expected decomposition or direct, got `{v}`"
                )))
            }
        };
        cfg.chi = self.charge_profile(&cfg.chi)?;
        cfg.kg0 = KgDataSpec {
            w0_amplitude: self.f64_or("w0_amplitude", 0.0)?,
            w0_sigma: self.f64_or("w0_sigma", 1.0)?,
            w1_amplitude: self.f64_or("w1_amplitude", 0.0)?,
            w1_sigma: self.f64_or("w1_sigma", 1.0)?,
        };
        cfg.u0 = SpinorDataSpec {
            amplitude: self.f64_or("u0_amplitude", cfg.u0.amplitude)?,
            sigma: self.f64_or("u0_sigma", cfg.u0.sigma)?,
            center: self.triple_or("u0_center", [0.0; 3])?,
            modulation: self.triple_or("u0_modulation", [0.0; 3])?,
            weights: self.quad_or("u0_weights", [1.0, 0.0, 0.0, 0.0])?,
            phases: self.quad_or("u0_phases", [0.0; 4])?,
        };
        cfg.eta_horizon = self.f64_or("eta_horizon", cfg.eta_horizon)?;
        let g = GateThresholds::default();
        cfg.gates = GateThresholds {
            smallness: self.f64_or("gate_smallness", g.smallness)?,
            u0_hs: self.f64_or("gate_u0_hs", g.u0_hs)?,
            chi_w11: self.f64_or("gate_chi_w11", g.chi_w11)?,
        };
        cfg.dump_stride = self.usize_or("dump_stride", 0)?;
        cfg.theorem_compliant = self.bool_or("theorem_compliant", true)?;
        Ok(cfg)
    }

    /// Charge profile with unset keys falling back to the baseline values,
    /// so the documented defaults live in one place.
    pub fn charge_profile(&self, baseline: &ChargeProfile) -> Result<ChargeProfile, CliError> {
        let (base_amp, base_width) = match *baseline {
            ChargeProfile::Gaussian { amplitude, sigma } => (amplitude, sigma),
            ChargeProfile::Bump { amplitude, radius } => (amplitude, radius),
        };
        let amplitude = self.f64_or("chi_amplitude", base_amp)?;
        match self.get("chi_kind") {
            None | Some("gaussian") => Ok(ChargeProfile::Gaussian {
                amplitude,
                sigma: self.f64_or("chi_sigma", base_width)?,
            }),
            Some("bump") => Ok(ChargeProfile::Bump {
                amplitude,
                radius: self.f64_or("chi_radius", base_width)?,
            }),
            Some(v) => Err(CliError::Usage(format!(
                "key chi_kind: expected gaussian or bump, got `{v}`"
            ))),
        }
    }

    /// The prescribed nucleus path named by `path_kind`, sampled at `dt`
    /// (which may be finer than the run dt for quadrature scans).
    /// Admissibility is not checked here; the gates refuse inadmissible
    /// paths with the hypothesis named.
    pub fn build_path(
        &self,
        cfg: &RunConfig,
        dt: f64,
        nodes: usize,
    ) -> Result<NucleusPath, CliError> {
        let mass = cfg.nucleus_mass;
        match self.get("path_kind") {
            None | Some("rest") => NucleusPath::rest(dt, nodes, mass).map_err(path_usage),
            Some("inertial") => {
                NucleusPath::inertial(dt, nodes, mass, cfg.v0).map_err(path_usage)
            }
            Some("oscillating") => self.oscillating_path(cfg, dt, nodes),
            Some(v) => Err(CliError::Usage(format!(
                "key path_kind: expected rest, inertial or oscillating, got `{v}`"
            ))),
        }
    }

    /// `q(t) = a (1 - cos(omega t)) e` with exact derivatives, so the
    /// sampled accelerations are consistent with the sampled positions.
    fn oscillating_path(
        &self,
        cfg: &RunConfig,
        dt: f64,
        nodes: usize,
    ) -> Result<NucleusPath, CliError> {
        let a = self.f64_or("osc_amplitude", 0.08)?;
        let om = self.f64_or("osc_omega", 1.2)?;
        let axis = self.triple_or("osc_axis", [1.0, 0.0, 0.0])?;
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(CliError::Usage(format!(
                "key osc_axis: axis must have positive length, got norm {norm}"
            )));
        }
        let e = [axis[0] / norm, axis[1] / norm, axis[2] / norm];
        NucleusPath::from_functions(
            dt,
            nodes,
            cfg.nucleus_mass,
            move |t| scale3(e, a * (1.0 - (om * t).cos())),
            move |t| scale3(e, a * om * (om * t).sin()),
            move |t| scale3(e, a * om * om * (om * t).cos()),
        )
        .map_err(path_usage)
    }

    /// The fully resolved key -> value map: explicit settings plus the
    /// effective defaults for everything the run consumed. Used by the
    /// manifest, so reruns can reproduce byte-identical configs.
    pub fn resolved_echo(&self, cfg: &RunConfig) -> BTreeMap<String, String> {
        let mut echo: BTreeMap<String, String> = self
            .values
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut put = |key: &str, value: String| {
            echo.entry(key.to_string()).or_insert(value);
        };
        put("grid_n", cfg.grid_n.to_string());
        put("box_length", cfg.box_length.to_string());
        put("horizon", cfg.horizon.to_string());
        put("dt", cfg.dt.to_string());
        put("p", cfg.p.to_string());
        put("s", cfg.s.to_string());
        put("weight_n", cfg.weight_n.to_string());
        put("dirac_mass", cfg.dirac_mass.to_string());
        put("nucleus_mass", cfg.nucleus_mass.to_string());
        put("v0", join3(cfg.v0));
        put(
            "eps_soft",
            cfg.eps_soft.map_or("cell".into(), |e| e.to_string()),
        );
        put("picard_tol", cfg.picard_tol.to_string());
        put("picard_max_iters", cfg.picard_max_iters.to_string());
        put("nonlinearity", cfg.nonlinearity.to_string());
        put(
            "w_mode",
            match cfg.w_mode {
                WMode::Decomposition => "decomposition".into(),
                WMode::Direct => "direct".into(),
            },
        );
        match cfg.chi {
            ChargeProfile::Gaussian { amplitude, sigma } => {
                put("chi_kind", "gaussian".into());
                put("chi_amplitude", amplitude.to_string());
                put("chi_sigma", sigma.to_string());
            }
            ChargeProfile::Bump { amplitude, radius } => {
                put("chi_kind", "bump".into());
                put("chi_amplitude", amplitude.to_string());
                put("chi_radius", radius.to_string());
            }
        }
        put("w0_amplitude", cfg.kg0.w0_amplitude.to_string());
        put("w0_sigma", cfg.kg0.w0_sigma.to_string());
        put("w1_amplitude", cfg.kg0.w1_amplitude.to_string());
        put("w1_sigma", cfg.kg0.w1_sigma.to_string());
        put("u0_amplitude", cfg.u0.amplitude.to_string());
        put("u0_sigma", cfg.u0.sigma.to_string());
        put("u0_center", join3(cfg.u0.center));
        put("u0_modulation", join3(cfg.u0.modulation));
        put("u0_weights", join4(cfg.u0.weights));
        put("u0_phases", join4(cfg.u0.phases));
        put("eta_horizon", cfg.eta_horizon.to_string());
        put("gate_smallness", cfg.gates.smallness.to_string());
        put("gate_u0_hs", cfg.gates.u0_hs.to_string());
        put("gate_chi_w11", cfg.gates.chi_w11.to_string());
        put("dump_stride", cfg.dump_stride.to_string());
        put("theorem_compliant", cfg.theorem_compliant.to_string());
        put("path_kind", "rest".into());
        echo
    }
}

fn path_usage(e: PathError) -> CliError {
    CliError::Usage(format!("path construction: {e}"))
}

fn scale3(e: [f64; 3], c: f64) -> [f64; 3] {
    [c * e[0], c * e[1], c * e[2]]
}

fn join3(v: [f64; 3]) -> String {
    let mut s = String::new();
    write!(s, "{},{},{}", v[0], v[1], v[2]).unwrap();
    s
}

fn join4(v: [f64; 4]) -> String {
    let mut s = String::new();
    write!(s, "{},{},{},{}", v[0], v[1], v[2], v[3]).unwrap();
    s
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = v
        .parse()
        .map_err(|_| CliError::Usage(format!("key {key}: expected a number, got `{v}`")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Usage(format!(
            "key {key}: value must be finite, got `{v}`"
        )))
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse().map_err(|_| {
        CliError::Usage(format!(
            "key {key}: expected a nonnegative integer, got `{v}`"
        ))
    })
}

fn parse_vector<const D: usize>(key: &str, v: &str) -> Result<[f64; D], CliError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != D {
        return Err(CliError::Usage(format!(
            "key {key}: expected {D} comma-separated numbers, got `{v}`"
        )));
    }
    let mut out = [0.0; D];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = parse_f64(key, part)?;
    }
    Ok(out)
}
