//! Scenario configuration: schema, loading and sweep overrides.

use std::path::Path;

use nlre_core::cqed::CqedConfig;
use nlre_core::dynamics::NoiseKind;
use nlre_core::ion::{IonConfig, IonInitial};
use nlre_core::rabi::{NLREScheme, RabiProfileSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisKind {
    Darkstate,
    Spectrum,
    Evolve,
    Confinement,
    Qec,
    Ion,
    Cqed,
    Transform,
    Phasespace,
    RwaValidate,
}

impl AnalysisKind {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::Darkstate => "darkstate",
            AnalysisKind::Spectrum => "spectrum",
            AnalysisKind::Evolve => "evolve",
            AnalysisKind::Confinement => "confinement",
            AnalysisKind::Qec => "qec",
            AnalysisKind::Ion => "ion",
            AnalysisKind::Cqed => "cqed",
            AnalysisKind::Transform => "transform",
            AnalysisKind::Phasespace => "phasespace",
            AnalysisKind::RwaValidate => "rwa-validate",
        }
    }
}

/// `"auto"` or an explicit number of Fock levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawCutoff", into = "RawCutoff")]
pub enum CutoffPolicy {
    #[default]
    Auto,
    Explicit(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawCutoff {
    Levels(usize),
    Word(String),
}

impl TryFrom<RawCutoff> for CutoffPolicy {
    type Error = String;

    fn try_from(raw: RawCutoff) -> Result<CutoffPolicy, String> {
        match raw {
            RawCutoff::Levels(n) => Ok(CutoffPolicy::Explicit(n)),
            RawCutoff::Word(w) if w == "auto" => Ok(CutoffPolicy::Auto),
            RawCutoff::Word(w) => Err(format!("cutoff must be \"auto\" or an integer, got {w:?}")),
        }
    }
}

impl From<CutoffPolicy> for RawCutoff {
    fn from(p: CutoffPolicy) -> RawCutoff {
        match p {
            CutoffPolicy::Auto => RawCutoff::Word("auto".into()),
            CutoffPolicy::Explicit(n) => RawCutoff::Levels(n),
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Scheme shorthands plus the fully general profile pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeSpec {
    /// `K = â^d − α^d`.
    StandardCat {
        d: usize,
        alpha: f64,
        #[serde(default = "one")]
        kappa_eff: f64,
    },
    /// Linear profiles crossing at `(k*, h*)` with slopes `s_f`, `s_g`.
    Linear {
        r: usize,
        l: usize,
        k_star: f64,
        h_star: f64,
        s_f: f64,
        s_g: f64,
        #[serde(default = "one")]
        kappa_eff: f64,
    },
    /// Linear profiles given by their angles to the vertical, in radians.
    LinearAngles {
        r: usize,
        l: usize,
        k_star: f64,
        h_star: f64,
        theta_f: f64,
        theta_g: f64,
        #[serde(default = "one")]
        kappa_eff: f64,
    },
    Custom {
        r: usize,
        l: usize,
        f_profile: RabiProfileSpec,
        g_profile: RabiProfileSpec,
        #[serde(default = "one")]
        kappa_eff: f64,
        #[serde(default)]
        phase_f: f64,
        #[serde(default)]
        phase_g: f64,
    },
}

impl SchemeSpec {
    pub fn build(&self) -> nlre_core::Result<NLREScheme> {
        match self.clone() {
            SchemeSpec::StandardCat { d, alpha, kappa_eff } => NLREScheme::standard_cat(d, alpha, kappa_eff),
            SchemeSpec::Linear { r, l, k_star, h_star, s_f, s_g, kappa_eff } => {
                NLREScheme::linear(r, l, k_star, h_star, s_f, s_g, kappa_eff)
            }
            SchemeSpec::LinearAngles { r, l, k_star, h_star, theta_f, theta_g, kappa_eff } => {
                NLREScheme::linear_from_angles(r, l, k_star, h_star, theta_f, theta_g, kappa_eff)
            }
            SchemeSpec::Custom { r, l, f_profile, g_profile, kappa_eff, phase_f, phase_g } => {
                let mut s = NLREScheme::new(r, l, f_profile, g_profile, kappa_eff)?;
                s.phase_f = phase_f;
                s.phase_g = phase_g;
                s.validate()?;
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Fock {
        k: usize,
    },
    Coherent {
        re: f64,
        im: f64,
    },
    /// Dark state of residue class `mu`.
    Dark {
        mu: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    #[serde(default = "five")]
    pub count: usize,
    /// Rotation sector `(i − j) mod d` of the Liouvillian; full matrix when absent.
    #[serde(default)]
    pub sector: Option<usize>,
}

fn five() -> usize {
    5
}

impl Default for SpectrumSpec {
    fn default() -> SpectrumSpec {
        SpectrumSpec { count: 5, sector: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    pub initial: InitialState,
    pub horizon: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfinementSpec {
    #[serde(default = "default_delta_x")]
    pub delta_x: f64,
}

fn default_delta_x() -> f64 {
    1e-3
}

impl Default for ConfinementSpec {
    fn default() -> ConfinementSpec {
        ConfinementSpec { delta_x: default_delta_x() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QecSpec {
    pub horizon: f64,
    #[serde(default)]
    pub mu: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonRunSpec {
    #[serde(default = "default_ion_initial")]
    pub initial: IonInitial,
    #[serde(default = "default_ion_samples")]
    pub samples: usize,
    /// Also fit the decay of the bare cat without stabilization.
    #[serde(default)]
    pub compare_unstabilized: bool,
}

fn default_ion_initial() -> IonInitial {
    IonInitial::FourCatMatched
}

fn default_ion_samples() -> usize {
    61
}

impl Default for IonRunSpec {
    fn default() -> IonRunSpec {
        IonRunSpec { initial: default_ion_initial(), samples: default_ion_samples(), compare_unstabilized: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqedRunSpec {
    #[serde(default)]
    pub mu: usize,
    /// Simulated time in s.
    pub horizon: f64,
    /// Sampling interval in s.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RwaSpec {
    #[serde(default = "default_averaging")]
    pub averaging_time: f64,
    #[serde(default = "default_step")]
    pub integration_step: f64,
}

fn default_averaging() -> f64 {
    10e-9
}

fn default_step() -> f64 {
    1e-12
}

impl Default for RwaSpec {
    fn default() -> RwaSpec {
        RwaSpec { averaging_time: default_averaging(), integration_step: default_step() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub zeta_re: f64,
    #[serde(default)]
    pub zeta_im: f64,
    /// Largest generalized-Rabi order `j` tabulated.
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    /// Fock indices `k < rabi_len` tabulated.
    #[serde(default = "default_rabi_len")]
    pub rabi_len: usize,
}

fn default_max_order() -> usize {
    4
}

fn default_rabi_len() -> usize {
    30
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseQuantity {
    Wigner,
    Husimi,
    /// Classical drift field with its critical points.
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpaceSpec {
    pub quantity: PhaseQuantity,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Dark state shown by the quasiprobabilities.
    #[serde(default)]
    pub mu: usize,
}

fn default_points() -> usize {
    121
}

/// A sweep stored in the config; `axis` may join several paths with `+`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory name under the output root; defaults to the config stem.
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub analysis: AnalysisKind,
    #[serde(default)]
    pub title: Option<String>,
    /// Recorded in the manifest; no analysis draws random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cutoff: CutoffPolicy,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub scheme: Option<SchemeSpec>,
    #[serde(default)]
    pub noise: Vec<NoiseSpec>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSpec>,
    #[serde(default)]
    pub evolve: Option<EvolveSpec>,
    #[serde(default)]
    pub confinement: Option<ConfinementSpec>,
    #[serde(default)]
    pub qec: Option<QecSpec>,
    #[serde(default)]
    pub ion: Option<IonConfig>,
    #[serde(default)]
    pub ion_run: Option<IonRunSpec>,
    #[serde(default)]
    pub cqed: Option<CqedConfig>,
    #[serde(default)]
    pub cqed_run: Option<CqedRunSpec>,
    #[serde(default)]
    pub rwa: Option<RwaSpec>,
    #[serde(default)]
    pub transform: Option<TransformSpec>,
    #[serde(default)]
    pub phasespace: Option<PhaseSpaceSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl ScenarioConfig {
    /// Section presence per analysis kind; called before any computation.
    pub fn validate(&self) -> CliResult<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Validation(format!("analysis {} needs [{what}]", self.analysis.name())))
            }
        };
        use AnalysisKind::*;
        match self.analysis {
            Darkstate | Spectrum | Confinement => need(self.scheme.is_some(), "scheme"),
            Evolve => need(self.scheme.is_some(), "scheme").and(need(self.evolve.is_some(), "evolve")),
            Qec => need(self.scheme.is_some(), "scheme").and(need(self.qec.is_some(), "qec")),
            Transform => need(self.scheme.is_some(), "scheme").and(need(self.transform.is_some(), "transform")),
            Phasespace => need(self.scheme.is_some(), "scheme").and(need(self.phasespace.is_some(), "phasespace")),
            Ion => need(self.ion.is_some(), "ion"),
            Cqed => need(self.cqed.is_some(), "cqed").and(need(self.cqed_run.is_some(), "cqed_run")),
            RwaValidate => need(self.cqed.is_some(), "cqed"),
        }?;
        if let Some(s) = &self.scheme {
            s.build()?;
        }
        if let Some(c) = &self.ion {
            c.validate()?;
        }
        if let Some(c) = &self.cqed {
            c.validate()?;
        }
        if let CutoffPolicy::Explicit(n) = self.cutoff {
            if n < 2 {
                return Err(CliError::Validation(format!("cutoff {n} is below 2 levels")));
            }
        }
        Ok(())
    }

    pub fn from_value(v: Value) -> CliResult<ScenarioConfig> {
        let cfg: ScenarioConfig =
            serde_json::from_value(v).map_err(|e| CliError::Validation(format!("config schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Raw bytes and generic tree of a config file; `.json` is read as JSON,
/// everything else as TOML.
pub struct LoadedConfig {
    pub bytes: Vec<u8>,
    pub tree: Value,
    pub stem: String,
    pub file_name: String,
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Validation("config is not UTF-8".into()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let tree: Value = if is_json {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("JSON parse: {e}")))?
    } else {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("TOML parse: {e}")))?
    };
    if !tree.is_object() {
        return Err(CliError::Validation("config root must be a table".into()));
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
    let file_name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LoadedConfig { bytes, tree, stem, file_name })
}

/// Parses a command-line sweep value as a TOML literal, falling back to a string.
pub fn parse_value(text: &str) -> Value {
    let t = text.trim();
    toml::from_str::<toml::Table>(&format!("v = {t}"))
        .ok()
        .and_then(|tbl| tbl.get("v").cloned())
        .and_then(|v| serde_json::to_value(v).ok())
        .unwrap_or_else(|| Value::String(t.to_string()))
}

/// Sets every `+`-joined dotted path of `axis` to `value`. Parent tables must
/// exist; the leaf may be new.
pub fn apply_axis(tree: &mut Value, axis: &str, value: &Value) -> CliResult<()> {
    for path in axis.split('+') {
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(CliError::Validation(format!("malformed axis path {path:?}")));
        }
        let mut node = &mut *tree;
        for key in &keys[..keys.len() - 1] {
            node = node
                .get_mut(*key)
                .filter(|n| n.is_object())
                .ok_or_else(|| CliError::Validation(format!("axis {path:?}: no table {key:?} in config")))?;
        }
        let leaf = keys[keys.len() - 1];
        node.as_object_mut().expect("parent is a table").insert(leaf.to_string(), value.clone());
    }
    Ok(())
}

/// Display form of a sweep value for tables.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<ScenarioConfig> {
        ScenarioConfig::from_value(toml::from_str(text).unwrap())
    }

    #[test]
    fn cutoff_policy_forms() {
        let c = parse("analysis = \"darkstate\"\ncutoff = 40\n[scheme]\nkind = \"standard_cat\"\nd = 2\nalpha = 2.0\n")
            .unwrap();
        assert_eq!(c.cutoff, CutoffPolicy::Explicit(40));
        let c = parse("analysis = \"darkstate\"\n[scheme]\nkind = \"standard_cat\"\nd = 2\nalpha = 2.0\n").unwrap();
        assert_eq!(c.cutoff, CutoffPolicy::Auto);
        assert!(parse(
            "analysis = \"darkstate\"\ncutoff = \"big\"\n[scheme]\nkind = \"standard_cat\"\nd = 2\nalpha = 2.0\n"
        )
        .is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let base = "analysis = \"darkstate\"\n[scheme]\nkind = \"standard_cat\"\nd = 2\nalpha = 2.0\n";
        assert!(parse(&format!("{base}typo = 1\n")).is_err());
        assert!(parse(&format!("colour = 1\n{base}")).is_err());
        assert!(parse("analysis = \"nope\"\n").is_err());
    }

    #[test]
    fn missing_sections_rejected() {
        assert!(parse("analysis = \"evolve\"\n[scheme]\nkind = \"standard_cat\"\nd = 2\nalpha = 2.0\n").is_err());
        assert!(parse("analysis = \"darkstate\"\n").is_err());
    }

    #[test]
    fn axis_override() {
        let mut tree: Value = toml::from_str("[scheme]\nh_star = 10.0\ns_f = 1.0\ns_g = 1.0\n").unwrap();
        apply_axis(&mut tree, "scheme.s_f+scheme.s_g", &parse_value("1.5")).unwrap();
        assert_eq!(tree["scheme"]["s_f"], 1.5);
        assert_eq!(tree["scheme"]["s_g"], 1.5);
        assert!(apply_axis(&mut tree, "missing.x", &Value::Null).is_err());
        assert!(apply_axis(&mut tree, "scheme..x", &Value::Null).is_err());
        assert_eq!(parse_value("abc"), Value::String("abc".into()));
        assert_eq!(parse_value("3"), Value::from(3));
    }
}
