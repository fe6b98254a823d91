//! TOML run configuration.
//!
//! ```toml
//! [model]
//! kind = "hl"            # euler2d | clm | de-gregorio | osw | ccf | hl | cky
//! domain = "periodic"    # periodic | log-line
//! biot_savart = "spectral"
//!
//! [grid]
//! length = 6.283185307179586
//! n = 1024
//!
//! [preset]
//! name = "paper-basic"
//! params = { A = 1.0, B = 1.0 }
//!
//! [run]
//! t_end = 1.0
//! record_every = 0.01
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biotsavart::BiotSavartMethod;
use crate::error::{Error, Result};
use crate::evolve::StepControl;
use crate::fields::{preset_initial_data, preset_log_data, Domain, FieldState, LogState, Model, ModelSpec};
use crate::grid::{LogGrid, PeriodicGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    /// OSW advection coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default = "default_method")]
    pub biot_savart: String,
    /// Layer thickness of the mollified law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_layer: Option<f64>,
}

fn default_domain() -> Domain {
    Domain::Periodic
}

fn default_method() -> String {
    "spectral".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub record_every: f64,
    /// Write a snapshot every this many records (0: never).
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Write a checkpoint every this many records (0: only at the end).
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Exponent of the extra `||u||_p` column.
    #[serde(default = "default_lp")]
    pub lp_exponent: f64,
}

fn default_snapshot_every() -> usize {
    10
}

fn default_checkpoint_every() -> usize {
    50
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_lp() -> f64 {
    4.0
}

/// A complete simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    pub preset: PresetSection,
    #[serde(default)]
    pub control: StepControl,
    pub run: RunSection,
}

/// Initial data of either domain.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Periodic(FieldState),
    Log(LogState),
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parameter(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let text = toml::to_string(&table).map_err(|e| Error::Parameter(e.to_string()))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e: toml::de::Error| Error::Parameter(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parameter(format!("cannot read {}: {e}", path.display())))?;
        // parse directly so that error messages carry line numbers of the file
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e: toml::de::Error| Error::Parameter(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let model = match m.kind.as_str() {
            "euler2d" => Model::Euler2d,
            "clm" => Model::Clm,
            "de-gregorio" => Model::DeGregorio,
            "osw" => Model::Osw {
                a: m.a.ok_or_else(|| Error::Parameter("model.a is required for kind = \"osw\"".into()))?,
            },
            "ccf" => Model::Ccf,
            "hl" => Model::Hl,
            "cky" => Model::Cky,
            other => {
                return Err(Error::Parameter(format!(
                    "model.kind `{other}` is not one of euler2d, clm, de-gregorio, osw, ccf, hl, cky"
                )))
            }
        };
        if m.a.is_some() && !matches!(model, Model::Osw { .. }) {
            return Err(Error::Parameter("model.a only applies to kind = \"osw\"".into()));
        }
        let method = match m.biot_savart.as_str() {
            "spectral" => BiotSavartMethod::Spectral,
            "direct" => BiotSavartMethod::Direct,
            "mollified" => BiotSavartMethod::Mollified {
                a_layer: m
                    .a_layer
                    .ok_or_else(|| Error::Parameter("model.a_layer is required for biot_savart = \"mollified\"".into()))?,
            },
            other => {
                return Err(Error::Parameter(format!(
                    "model.biot_savart `{other}` is not one of spectral, direct, mollified"
                )))
            }
        };
        ModelSpec::new(model, m.domain, method)
    }

    pub fn periodic_grid(&self) -> Result<PeriodicGrid> {
        let g = &self.grid;
        let length = g.length.ok_or_else(|| Error::Parameter("grid.length is required".into()))?;
        let n = g.n.ok_or_else(|| Error::Parameter("grid.n is required".into()))?;
        PeriodicGrid::new(length, n)
    }

    pub fn log_grid(&self) -> Result<LogGrid> {
        let g = &self.grid;
        let req = |v: Option<f64>, k: &str| v.ok_or_else(|| Error::Parameter(format!("grid.{k} is required")));
        let m = g.m.ok_or_else(|| Error::Parameter("grid.m is required".into()))?;
        LogGrid::new(req(g.xi_min, "xi_min")?, req(g.xi_max, "xi_max")?, m)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.model_spec()?;
        self.control.validate()?;
        match spec.domain {
            Domain::Periodic => {
                self.periodic_grid()?;
            }
            Domain::LogLine => {
                self.log_grid()?;
            }
        }
        let r = &self.run;
        if !(r.t_end > 0.0) || !(r.record_every > 0.0) {
            return Err(Error::Parameter("run.t_end and run.record_every must be positive".into()));
        }
        if !(r.lp_exponent >= 1.0) {
            return Err(Error::Parameter("run.lp_exponent must be >= 1".into()));
        }
        Ok(())
    }

    /// Override the node count (`n` or `m`).
    pub fn with_resolution(mut self, n: usize) -> Result<Self> {
        match self.model_spec()?.domain {
            Domain::Periodic => self.grid.n = Some(n),
            Domain::LogLine => self.grid.m = Some(n),
        }
        self.validate()?;
        Ok(self)
    }

    pub fn initial_state(&self) -> Result<InitialState> {
        let spec = self.model_spec()?;
        match spec.domain {
            Domain::Periodic => {
                Ok(InitialState::Periodic(preset_initial_data(&self.preset.name, &self.periodic_grid()?, &self.preset.params)?))
            }
            Domain::LogLine => Ok(InitialState::Log(preset_log_data(&self.preset.name, &self.log_grid()?, &self.preset.params)?)),
        }
    }
}

/// Set a dotted key (`control.cfl`, `grid.n`, `preset.params.A`) in a
/// parsed TOML table. The value is parsed as TOML (number, bool, string);
/// bare words fall back to strings.
pub fn set_dotted_key(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Parameter(format!("malformed key `{key}`")));
    }
    let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Parameter(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[model]
kind = "hl"

[grid]
length = 6.283185307179586
n = 64

[preset]
name = "paper-basic"

[run]
t_end = 0.1
record_every = 0.05
"#;

    #[test]
    fn parses_and_builds() {
        let c = RunConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(c.model_spec().unwrap(), ModelSpec::periodic(Model::Hl));
        assert_eq!(c.control, StepControl::default());
        assert!(matches!(c.initial_state().unwrap(), InitialState::Periodic(_)));
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_preset_name_is_named() {
        let text = BASIC.replace("name = \"paper-basic\"", "");
        let e = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("name"), "{e}");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_str(&BASIC.replace("\"hl\"", "\"nope\"")).is_err());
        assert!(RunConfig::from_toml_str(&BASIC.replace("n = 64", "n = 63")).is_err());
        assert!(RunConfig::from_toml_str(&BASIC.replace("[run]", "[run]\nbogus = 1")).is_err());
        let cky = BASIC.replace("\"hl\"", "\"cky\"");
        assert!(matches!(RunConfig::from_toml_str(&cky), Err(Error::Spec(_))));
    }

    #[test]
    fn dotted_keys() {
        let mut t: toml::Table = BASIC.parse().unwrap();
        set_dotted_key(&mut t, "control.cfl", "0.25").unwrap();
        set_dotted_key(&mut t, "grid.n", "128").unwrap();
        set_dotted_key(&mut t, "preset.params.A", "2").unwrap();
        set_dotted_key(&mut t, "model.kind", "de-gregorio").unwrap();
        let c = RunConfig::from_table(t).unwrap();
        assert_eq!(c.control.cfl, 0.25);
        assert_eq!(c.grid.n, Some(128));
        assert_eq!(c.preset.params["A"], 2.0);
        assert_eq!(c.model_spec().unwrap().model, Model::DeGregorio);
    }
}
