//! Flat INI-style configuration: `[section]` headers over `key = value`
//! lines, `#`/`;` comments. All keys are documented in `docs/formats.md`
//! and the annotated example under `cases/`.

use crate::error::{CoreError, Result};
use crate::mmpde::BoundaryMode;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw
                .split(['#', ';'])
                .next()
                .unwrap_or("")
                .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(CoreError::Config(format!(
                    "line {line_no}: unterminated section header {line:?}"
                )))?;
                current = Some(name.trim().to_string());
                sections.entry(name.trim().to_string()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(CoreError::Config(format!(
                "line {line_no}: expected `key = value`, got {line:?}"
            )))?;
            let section = current.as_ref().ok_or(CoreError::Config(format!(
                "line {line_no}: key outside any [section]"
            )))?;
            sections
                .get_mut(section)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CoreError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn sections_with_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a BTreeMap<String, String>)> {
        self.sections
            .iter()
            .filter(move |(name, _)| name.starts_with(prefix))
            .map(|(name, map)| (name.as_str(), map))
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key).ok_or(CoreError::Config(format!(
            "missing key `{key}` in section [{section}]"
        )))
    }

    pub fn get_f64(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                CoreError::Config(format!("[{section}] {key}: cannot parse number from {v:?}"))
            }),
        }
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64> {
        let v = self.require(section, key)?;
        v.parse().map_err(|_| {
            CoreError::Config(format!("[{section}] {key}: cannot parse number from {v:?}"))
        })
    }

    pub fn get_usize(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                CoreError::Config(format!("[{section}] {key}: cannot parse integer from {v:?}"))
            }),
        }
    }

    pub fn get_bool(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(section, key) {
            None => Ok(default),
            Some("true") | Some("on") | Some("yes") | Some("1") => Ok(true),
            Some("false") | Some("off") | Some("no") | Some("0") => Ok(false),
            Some(v) => Err(CoreError::Config(format!(
                "[{section}] {key}: expected a boolean, got {v:?}"
            ))),
        }
    }
}

/// A scalar profile over x1: either constant or the Gaussian
/// `base + amplitude * exp(-coeff (x1 - center)^2)`.
#[derive(Debug, Clone, Copy)]
pub enum Profile {
    Constant(f64),
    Gaussian {
        base: f64,
        amplitude: f64,
        center: f64,
        coeff: f64,
    },
}

impl Profile {
    pub fn eval(&self, x1: f64) -> f64 {
        match *self {
            Profile::Constant(v) => v,
            Profile::Gaussian {
                base,
                amplitude,
                center,
                coeff,
            } => base + amplitude * (-coeff * (x1 - center) * (x1 - center)).exp(),
        }
    }

    pub fn parse(text: &str, what: &str) -> Result<Self> {
        let toks: Vec<&str> = text.split_whitespace().collect();
        let num = |t: &str| -> Result<f64> {
            t.parse()
                .map_err(|_| CoreError::Config(format!("{what}: cannot parse number {t:?}")))
        };
        match toks.as_slice() {
            [v] => Ok(Profile::Constant(num(v)?)),
            ["gaussian", base, amp, center, coeff] => Ok(Profile::Gaussian {
                base: num(base)?,
                amplitude: num(amp)?,
                center: num(center)?,
                coeff: num(coeff)?,
            }),
            _ => Err(CoreError::Config(format!(
                "{what}: expected `<value>` or `gaussian <base> <amplitude> <center> <coeff>`, got {text:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MeshSpec {
    Rectangle {
        nx: usize,
        ny: usize,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
    },
    Files {
        node: PathBuf,
        ele: PathBuf,
    },
}

/// Boundary condition attached to one marker.
#[derive(Debug, Clone)]
pub enum BcKind {
    /// Dirichlet velocity with a parabolic x-profile of the given peak,
    /// Dirichlet temperature, Dirichlet species.
    Inflow {
        peak_velocity: f64,
        temperature: Profile,
        /// Mass fraction per species name.
        species: Vec<(String, f64)>,
    },
    /// No-slip velocity, Dirichlet temperature, natural species.
    Wall { temperature: Profile },
    /// Free-stream outflow: all natural.
    Outflow,
}

#[derive(Debug, Clone)]
pub struct MonitorSpec {
    /// `T`, `speed`, or `w.<species>`.
    pub source: String,
    pub order: u8,
    pub alpha: f64,
    pub smoothing_cycles: usize,
    pub normalize_psi: bool,
    pub reproject_det: bool,
}

#[derive(Debug, Clone)]
pub struct MmpdeSpec {
    pub tau: f64,
    pub substeps: usize,
    pub boundary: BoundaryMode,
}

#[derive(Debug, Clone)]
pub struct MarchSpec {
    pub tableau: String,
    pub rtol: f64,
    pub atol: f64,
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub steady_tol: f64,
    pub max_steps: usize,
    pub jacobian_max_age: usize,
}

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub vtk_cadence: usize,
    pub csv: String,
}

#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub mesh: MeshSpec,
    pub mechanism: PathBuf,
    pub mu: f64,
    pub lambda_cond: f64,
    /// (default, per-name overrides)
    pub diffusivity: (f64, Vec<(String, f64)>),
    pub v_ref: f64,
    pub p_th: f64,
    pub boundaries: Vec<(i32, BcKind)>,
    pub initial_temperature: Profile,
    pub initial_species: Vec<(String, f64)>,
    /// `inflow_profile` extrudes the inflow parabola; `zero` starts at rest.
    pub initial_velocity_profile: bool,
    pub monitor: Option<MonitorSpec>,
    pub mmpde: MmpdeSpec,
    pub march: MarchSpec,
    /// Joint steadiness: max node displacement per step below this fraction
    /// of the domain diameter.
    pub displacement_tol: f64,
    pub mesh_motion: bool,
    pub qoi_species: String,
    pub output: OutputSpec,
}

impl CaseConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let ini = Ini::from_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_ini(&ini, base)
    }

    pub fn from_ini(ini: &Ini, base: &Path) -> Result<Self> {
        let mesh = match ini.get("mesh", "kind").unwrap_or("rectangle") {
            "rectangle" => MeshSpec::Rectangle {
                nx: ini.get_usize("mesh", "nx", 65)?,
                ny: ini.get_usize("mesh", "ny", 17)?,
                x0: ini.get_f64("mesh", "x0", 0.0)?,
                x1: ini.require_f64("mesh", "x1")?,
                y0: ini.get_f64("mesh", "y0", 0.0)?,
                y1: ini.require_f64("mesh", "y1")?,
            },
            "files" => MeshSpec::Files {
                node: base.join(ini.require("mesh", "node_file")?),
                ele: base.join(ini.require("mesh", "ele_file")?),
            },
            other => {
                return Err(CoreError::Config(format!(
                    "[mesh] kind: expected `rectangle` or `files`, got {other:?}"
                )))
            }
        };
        let mechanism = base.join(ini.require("mechanism", "file")?);

        let mut boundaries = Vec::new();
        for (name, keys) in ini.sections_with_prefix("boundary.") {
            let marker: i32 = name["boundary.".len()..]
                .parse()
                .map_err(|_| CoreError::Config(format!("bad marker in section [{name}]")))?;
            let kind = match keys.get("type").map(String::as_str) {
                Some("inflow") => BcKind::Inflow {
                    peak_velocity: ini.require_f64(name, "peak_velocity")?,
                    temperature: Profile::parse(
                        ini.require(name, "temperature")?,
                        &format!("[{name}] temperature"),
                    )?,
                    species: species_values(keys)?,
                },
                Some("wall") => BcKind::Wall {
                    temperature: Profile::parse(
                        ini.require(name, "temperature")?,
                        &format!("[{name}] temperature"),
                    )?,
                },
                Some("outflow") => BcKind::Outflow,
                Some(other) => {
                    return Err(CoreError::Config(format!(
                        "[{name}] type: unknown boundary kind {other:?}"
                    )))
                }
                None => {
                    return Err(CoreError::Config(format!("[{name}] missing `type`")))
                }
            };
            boundaries.push((marker, kind));
        }

        let monitor = if ini.has_section("monitor") {
            Some(MonitorSpec {
                source: ini.require("monitor", "source")?.to_string(),
                order: ini.get_usize("monitor", "order", 1)? as u8,
                alpha: ini.get_f64("monitor", "alpha", 80.0)?,
                smoothing_cycles: ini.get_usize("monitor", "smoothing_cycles", 8)?,
                normalize_psi: ini.get_bool("monitor", "normalize_psi", true)?,
                reproject_det: ini.get_bool("monitor", "reproject_det", true)?,
            })
        } else {
            None
        };
        if let Some(m) = &monitor {
            if m.order != 1 && m.order != 2 {
                return Err(CoreError::Config(format!(
                    "[monitor] order must be 1 or 2, got {}",
                    m.order
                )));
            }
            if m.alpha <= 0.0 {
                return Err(CoreError::Config("[monitor] alpha must be positive".into()));
            }
        }

        let boundary_mode = match ini.get("mmpde", "boundary").unwrap_or("fixed") {
            "fixed" => BoundaryMode::Fixed,
            "slide" => BoundaryMode::Slide,
            other => {
                return Err(CoreError::Config(format!(
                    "[mmpde] boundary: expected `fixed` or `slide`, got {other:?}"
                )))
            }
        };

        Ok(Self {
            mesh,
            mechanism,
            mu: ini.get_f64("transport", "mu", 2.0e-5)?,
            lambda_cond: ini.get_f64("transport", "lambda", 0.026)?,
            diffusivity: (
                ini.get_f64("transport", "diffusivity", 2.0e-5)?,
                ini.sections_with_prefix("transport")
                    .flat_map(|(_, keys)| keys.iter())
                    .filter_map(|(k, v)| {
                        k.strip_prefix("diffusivity.")
                            .map(|name| (name.to_string(), v.parse::<f64>()))
                    })
                    .map(|(name, v)| {
                        v.map(|v| (name.clone(), v)).map_err(|_| {
                            CoreError::Config(format!(
                                "[transport] diffusivity.{name}: not a number"
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            v_ref: ini.get_f64("transport", "v_ref", 0.25)?,
            p_th: ini.get_f64("transport", "p_th", 101_325.0)?,
            boundaries,
            initial_temperature: Profile::parse(
                ini.require("initial", "temperature")?,
                "[initial] temperature",
            )?,
            initial_species: ini
                .sections_with_prefix("initial")
                .flat_map(|(_, keys)| species_values(keys))
                .next()
                .unwrap_or_default(),
            initial_velocity_profile: matches!(
                ini.get("initial", "velocity").unwrap_or("inflow_profile"),
                "inflow_profile"
            ),
            monitor,
            mmpde: MmpdeSpec {
                tau: ini.get_f64("mmpde", "tau", 1.0)?,
                substeps: ini.get_usize("mmpde", "substeps", 5)?,
                boundary: boundary_mode,
            },
            march: MarchSpec {
                tableau: ini.get("march", "tableau").unwrap_or("rodas3").to_string(),
                rtol: ini.get_f64("march", "rtol", 1e-2)?,
                atol: ini.get_f64("march", "atol", 1e-4)?,
                dt0: ini.get_f64("march", "dt0", 1e-4)?,
                dt_min: ini.get_f64("march", "dt_min", 1e-14)?,
                dt_max: ini.get_f64("march", "dt_max", 1e3)?,
                steady_tol: ini.get_f64("march", "steady_tol", 1e-3)?,
                max_steps: ini.get_usize("march", "max_steps", 5000)?,
                jacobian_max_age: ini.get_usize("march", "jacobian_max_age", 1)?,
            },
            displacement_tol: ini.get_f64("coupling", "displacement_tol", 1e-8)?,
            mesh_motion: ini.get_bool("coupling", "mesh_motion", true)?,
            qoi_species: ini.get("qoi", "species").unwrap_or("O3").to_string(),
            output: OutputSpec {
                directory: PathBuf::from(ini.get("output", "directory").unwrap_or("out")),
                vtk_cadence: ini.get_usize("output", "vtk_cadence", 0)?,
                csv: ini.get("output", "csv").unwrap_or("results.csv").to_string(),
            },
        })
    }
}

/// Collects `w.<name> = value` keys from a section.
fn species_values(keys: &BTreeMap<String, String>) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (k, v) in keys {
        if let Some(name) = k.strip_prefix("w.") {
            let value: f64 = v.parse().map_err(|_| {
                CoreError::Config(format!("w.{name}: cannot parse number from {v:?}"))
            })?;
            out.push((name.to_string(), value));
        }
    }
    Ok(out)
}
