//! Scenario files: one TOML document per experiment.

use std::path::{Path, PathBuf};

use flowlab::expansiveness::ScanMode;
use flowlab::hyperbolicity::CocycleSpec;
use flowlab::poincare::{DerivativeMethod, SectionOptions};
use flowlab::sequence::RandomSystemSpec;
use flowlab::{Domain, FieldKind, VectorFieldSpec};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{CliError, Diagnostic, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Flowbox,
    Poincare,
    Shadow,
    Split,
    Fixedpoint,
    Expansive,
    Constants,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flowbox => "flowbox",
            Command::Poincare => "poincare",
            Command::Shadow => "shadow",
            Command::Split => "split",
            Command::Fixedpoint => "fixedpoint",
            Command::Expansive => "expansive",
            Command::Constants => "constants",
        }
    }
}

/// Named fields usable as `field = "<name>"`.
pub fn presets() -> Vec<(&'static str, &'static str, VectorFieldSpec)> {
    vec![
        (
            "saddle",
            "linear saddle diag(1, -1, -2) on [-10, 10]^3",
            VectorFieldSpec::diagonal(&[1.0, -1.0, -2.0], 10.0),
        ),
        ("rotation", "planar rotation on [-3, 3]^2", VectorFieldSpec::rotation(3.0)),
        (
            "lorenz",
            "Lorenz (10, 28, 8/3) on [-25, 25] x [-30, 30] x [-5, 55]",
            VectorFieldSpec::lorenz_standard(),
        ),
        (
            "saddle-suspension",
            "saddle suspension (1, 1, 1) on [-50, 50]^3",
            VectorFieldSpec::saddle_suspension(1.0, 1.0, 1.0, Domain::cube(3, 50.0)).expect("preset is valid"),
        ),
    ]
}

fn registry_listing() -> String {
    let names: Vec<&str> = presets().iter().map(|p| p.0).collect();
    let kinds: Vec<&str> = FieldKind::registry().iter().map(|k| k.0).collect();
    format!("builtin registry: presets [{}], kinds [{}]", names.join(", "), kinds.join(", "))
}

/// Either a fixed value or a sampled estimate over a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LipschitzSpec {
    Value(f64),
    Estimate {
        #[serde(default)]
        region: Option<Domain>,
        #[serde(default = "default_lipschitz_samples")]
        samples: usize,
    },
}

fn default_lipschitz_samples() -> usize {
    4096
}

impl Default for LipschitzSpec {
    fn default() -> Self {
        LipschitzSpec::Estimate {
            region: None,
            samples: default_lipschitz_samples(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeChoice {
    #[default]
    FiniteDifference,
    Variational,
}

impl DerivativeChoice {
    pub fn apply(self, options: SectionOptions) -> SectionOptions {
        match self {
            DerivativeChoice::FiniteDifference => SectionOptions {
                derivative: DerivativeMethod::default(),
                ..options
            },
            DerivativeChoice::Variational => options.variational(),
        }
    }
}

/// Base points given explicitly or drawn at random from a region.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSource {
    pub points: Vec<Vec<f64>>,
    /// Used when `points` is empty.
    pub random_points: usize,
    /// Defaults to the field's domain.
    pub region: Option<Domain>,
    /// Random points slower than this are redrawn.
    pub min_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowboxParams {
    pub points: Vec<Vec<f64>>,
    pub random_points: usize,
    pub region: Option<Domain>,
    pub min_speed: f64,
    /// Nodes per axis of the verification grid.
    pub grid: usize,
}

impl Default for FlowboxParams {
    fn default() -> Self {
        FlowboxParams {
            points: Vec::new(),
            random_points: 50,
            region: None,
            min_speed: 0.1,
            grid: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareParams {
    pub points: Vec<Vec<f64>>,
    pub random_points: usize,
    pub region: Option<Domain>,
    pub min_speed: f64,
    pub times: Vec<f64>,
    pub derivative: DerivativeChoice,
    /// Skip box-membership checks on chart arguments.
    pub relaxed: bool,
    /// Largest accepted relative error of `D_0 P` against `psi_T`.
    pub max_relative_error: f64,
    /// Random normal vectors per point for the derivative bound.
    pub probes: usize,
}

impl Default for PoincareParams {
    fn default() -> Self {
        PoincareParams {
            points: Vec::new(),
            random_points: 10,
            region: None,
            min_speed: 0.1,
            times: vec![0.1, 0.5],
            derivative: DerivativeChoice::default(),
            relaxed: false,
            max_relative_error: 1e-3,
            probes: 4,
        }
    }
}

impl FlowboxParams {
    pub fn source(&self) -> PointSource {
        PointSource {
            points: self.points.clone(),
            random_points: self.random_points,
            region: self.region.clone(),
            min_speed: self.min_speed,
        }
    }
}

impl PoincareParams {
    pub fn source(&self) -> PointSource {
        PointSource {
            points: self.points.clone(),
            random_points: self.random_points,
            region: self.region.clone(),
            min_speed: self.min_speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowParams {
    /// Sampling region for both trial kinds; defaults to the field's domain.
    pub region: Option<Domain>,
    pub return_time_trials: usize,
    pub epsilons: Vec<f64>,
    /// Horizons as multiples of `r0`.
    pub horizons: Vec<f64>,
    pub drift_trials: usize,
    pub knots: usize,
    /// Samples for the speed-ratio constant `c`.
    pub speed_samples: usize,
}

impl Default for ShadowParams {
    fn default() -> Self {
        ShadowParams {
            region: None,
            return_time_trials: 10_000,
            epsilons: vec![0.1, 0.3],
            horizons: vec![0.5, 1.0, 5.0],
            drift_trials: 100,
            knots: 40,
            speed_samples: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitParams {
    pub start: Vec<f64>,
    #[serde(default)]
    pub transient: f64,
    pub block_time: f64,
    pub blocks: usize,
    #[serde(default = "one")]
    pub dim_s: usize,
    #[serde(default = "default_constant")]
    pub constant: f64,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "trivial")]
    pub cocycle_s: CocycleSpec,
    #[serde(default = "flow_speed")]
    pub cocycle_u: CocycleSpec,
}

fn one() -> usize {
    1
}

fn default_constant() -> f64 {
    1.05
}

fn default_rate() -> f64 {
    0.5
}

fn default_t_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn trivial() -> CocycleSpec {
    CocycleSpec::Trivial
}

fn flow_speed() -> CocycleSpec {
    CocycleSpec::FlowSpeed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSource {
    /// Synthetic blocks with sine perturbations.
    Random {
        half_range: usize,
        dim: usize,
        dim_s: usize,
        eta: f64,
        kappa: f64,
    },
    /// Rescaled sectional maps along an orbit.
    Orbit {
        start: Vec<f64>,
        #[serde(default)]
        transient: f64,
        block_time: f64,
        blocks: usize,
        #[serde(default = "one")]
        dim_s: usize,
        eta: f64,
        /// Index of the first block; must be <= 0.
        #[serde(default)]
        first: i64,
        /// `eps` as a fraction of `r1(T)`; at most 1/3.
        #[serde(default = "quarter")]
        epsilon_fraction: f64,
        #[serde(default)]
        derivative: DerivativeChoice,
    },
}

fn quarter() -> f64 {
    0.25
}

impl SystemSource {
    pub fn random_spec(&self) -> Option<RandomSystemSpec> {
        match *self {
            SystemSource::Random {
                half_range,
                dim,
                dim_s,
                eta,
                kappa,
            } => Some(RandomSystemSpec {
                half_range,
                dim,
                dim_s,
                eta,
                kappa,
            }),
            SystemSource::Orbit { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedpointParams {
    pub system: SystemSource,
    #[serde(default = "default_starts")]
    pub starts: usize,
    /// Sup norm of the random starting sequences. For orbit systems it is a
    /// multiple of `eps`.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
}

fn default_starts() -> usize {
    10
}

fn default_radius() -> f64 {
    1.0
}

fn default_max_iter() -> usize {
    2000
}

fn default_step_tol() -> f64 {
    1e-13
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleSamples {
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSampleParams {
    pub start: Vec<f64>,
    #[serde(default)]
    pub transient: f64,
    pub count: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansiveParams {
    pub samples: Vec<Vec<f64>>,
    pub circle: Option<CircleSamples>,
    pub orbit: Option<OrbitSampleParams>,
    pub horizon: f64,
    pub two_sided: bool,
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    pub delta_ratios: Vec<f64>,
    pub lattice: usize,
    pub grid: usize,
    pub budget: usize,
    pub modes: Vec<ScanMode>,
    /// Also run the three-mode equivalence probe.
    pub probe: bool,
}

impl Default for ExpansiveParams {
    fn default() -> Self {
        ExpansiveParams {
            samples: Vec::new(),
            circle: None,
            orbit: None,
            horizon: 5.0,
            two_sided: false,
            epsilons: vec![0.05],
            deltas: Vec::new(),
            delta_ratios: vec![1.0 / 3.0],
            lattice: 30,
            grid: 40,
            budget: 16,
            modes: ScanMode::ALL.to_vec(),
            probe: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsParams {
    pub block_times: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Speed-ratio constant; estimated over the domain when absent.
    pub c: Option<f64>,
    pub speed_samples: usize,
}

impl Default for ConstantsParams {
    fn default() -> Self {
        ConstantsParams {
            block_times: vec![0.5, 1.0, 5.0],
            epsilons: vec![0.1, 0.3],
            c: None,
            speed_samples: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandParams {
    Flowbox(FlowboxParams),
    Poincare(PoincareParams),
    Shadow(ShadowParams),
    Split(SplitParams),
    Fixedpoint(FixedpointParams),
    Expansive(ExpansiveParams),
    Constants(ConstantsParams),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    command: Spanned<Command>,
    field: Spanned<toml::Value>,
    seed: Option<u64>,
    tol: Option<f64>,
    lipschitz: Option<LipschitzSpec>,
    output: Option<OutputSection>,
    flowbox: Option<Spanned<FlowboxParams>>,
    poincare: Option<Spanned<PoincareParams>>,
    shadow: Option<Spanned<ShadowParams>>,
    split: Option<Spanned<SplitParams>>,
    fixedpoint: Option<Spanned<FixedpointParams>>,
    expansive: Option<Spanned<ExpansiveParams>>,
    constants: Option<Spanned<ConstantsParams>>,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub command: Command,
    pub field: VectorFieldSpec,
    pub seed: Option<u64>,
    pub tol: f64,
    pub lipschitz: LipschitzSpec,
    pub output_dir: Option<PathBuf>,
    pub params: CommandParams,
}

pub const DEFAULT_TOL: f64 = 1e-10;

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(path, &source)
    }

    /// Parses `source`; `path` only labels diagnostics.
    pub fn parse(path: &Path, source: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(source).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            CliError::Scenario(Diagnostic::at(path, source, offset, e.message().trim_end()))
        })?;
        let diag = |offset: usize, msg: String| CliError::Scenario(Diagnostic::at(path, source, offset, msg));

        let field_span = raw.field.span();
        let field = resolve_field(raw.field.into_inner(), &source[field_span.clone()])
            .map_err(|(rel, msg)| diag(field_span.start + rel, msg))?;

        let command = *raw.command.get_ref();
        let command_at = raw.command.span().start;
        let sections: [(Command, Option<std::ops::Range<usize>>); 7] = [
            (Command::Flowbox, raw.flowbox.as_ref().map(|s| s.span())),
            (Command::Poincare, raw.poincare.as_ref().map(|s| s.span())),
            (Command::Shadow, raw.shadow.as_ref().map(|s| s.span())),
            (Command::Split, raw.split.as_ref().map(|s| s.span())),
            (Command::Fixedpoint, raw.fixedpoint.as_ref().map(|s| s.span())),
            (Command::Expansive, raw.expansive.as_ref().map(|s| s.span())),
            (Command::Constants, raw.constants.as_ref().map(|s| s.span())),
        ];
        for (other, span) in &sections {
            if let Some(span) = span {
                if *other != command {
                    return Err(diag(
                        span.start,
                        format!("section [{}] does not apply to command `{}`", other.name(), command.name()),
                    ));
                }
            }
        }
        let missing = |what: &str| diag(command_at, format!("command `{}` needs a [{what}] section", command.name()));
        let params = match command {
            Command::Flowbox => CommandParams::Flowbox(raw.flowbox.map(Spanned::into_inner).unwrap_or_default()),
            Command::Poincare => CommandParams::Poincare(raw.poincare.map(Spanned::into_inner).unwrap_or_default()),
            Command::Shadow => CommandParams::Shadow(raw.shadow.map(Spanned::into_inner).unwrap_or_default()),
            Command::Split => CommandParams::Split(raw.split.ok_or_else(|| missing("split"))?.into_inner()),
            Command::Fixedpoint => {
                CommandParams::Fixedpoint(raw.fixedpoint.ok_or_else(|| missing("fixedpoint"))?.into_inner())
            }
            Command::Expansive => {
                CommandParams::Expansive(raw.expansive.map(Spanned::into_inner).unwrap_or_default())
            }
            Command::Constants => {
                CommandParams::Constants(raw.constants.map(Spanned::into_inner).unwrap_or_default())
            }
        };

        let scenario = Scenario {
            name: raw.name.unwrap_or_else(|| {
                path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
            }),
            command,
            field,
            seed: raw.seed,
            tol: raw.tol.unwrap_or(DEFAULT_TOL),
            lipschitz: raw.lipschitz.unwrap_or_default(),
            output_dir: raw.output.and_then(|o| o.dir),
            params,
        };
        scenario.validate().map_err(|msg| diag(command_at, msg))?;
        Ok(scenario)
    }

    /// Whether running the scenario draws random numbers.
    pub fn needs_seed(&self) -> bool {
        if matches!(self.lipschitz, LipschitzSpec::Estimate { .. }) {
            return true;
        }
        match &self.params {
            CommandParams::Flowbox(p) => p.points.is_empty(),
            CommandParams::Poincare(p) => p.points.is_empty() || p.probes > 0,
            CommandParams::Split(_) => false,
            CommandParams::Constants(p) => p.c.is_none(),
            _ => true,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let dim = self.field.dim();
        let check_point = |p: &[f64], what: &str| -> std::result::Result<(), String> {
            if p.len() != dim {
                return Err(format!("{what} has dimension {}, the field has {dim}", p.len()));
            }
            if !self.field.domain.contains(p) {
                return Err(format!("{what} {p:?} lies outside the field's domain"));
            }
            Ok(())
        };
        let check_region = |r: &Option<Domain>| -> std::result::Result<(), String> {
            if let Some(r) = r {
                r.validate().map_err(|e| e.to_string())?;
                if r.dim() != dim {
                    return Err(format!("region has dimension {}, the field has {dim}", r.dim()));
                }
            }
            Ok(())
        };
        if !(self.tol > 0.0) {
            return Err("tol must be positive".into());
        }
        match &self.lipschitz {
            LipschitzSpec::Value(l) if !(*l > 0.0) => return Err("lipschitz must be positive".into()),
            LipschitzSpec::Estimate { region, samples } => {
                check_region(region)?;
                if *samples == 0 {
                    return Err("lipschitz.samples must be positive".into());
                }
            }
            _ => {}
        }
        let check_source = |s: &PointSource| -> std::result::Result<(), String> {
            for p in &s.points {
                check_point(p, "point")?;
            }
            check_region(&s.region)?;
            if s.points.is_empty() && s.random_points == 0 {
                return Err("give points or a positive random_points".into());
            }
            Ok(())
        };
        match &self.params {
            CommandParams::Flowbox(p) => {
                check_source(&p.source())?;
                if p.grid < 2 {
                    return Err("flowbox.grid must be at least 2".into());
                }
            }
            CommandParams::Poincare(p) => {
                check_source(&p.source())?;
                if p.times.is_empty() || p.times.iter().any(|t| !t.is_finite() || *t == 0.0) {
                    return Err("poincare.times must be nonzero and finite".into());
                }
            }
            CommandParams::Shadow(p) => {
                check_region(&p.region)?;
                if p.epsilons.iter().chain(&p.horizons).any(|v| !(*v > 0.0)) {
                    return Err("shadow.epsilons and shadow.horizons must be positive".into());
                }
            }
            CommandParams::Split(p) => {
                check_point(&p.start, "split.start")?;
                if !(p.block_time > 0.0) || p.blocks == 0 {
                    return Err("split needs block_time > 0 and blocks >= 1".into());
                }
                p.cocycle_s.validate(&self.field).map_err(|e| e.to_string())?;
                p.cocycle_u.validate(&self.field).map_err(|e| e.to_string())?;
            }
            CommandParams::Fixedpoint(p) => {
                if let SystemSource::Orbit {
                    start,
                    block_time,
                    blocks,
                    first,
                    epsilon_fraction,
                    ..
                } = &p.system
                {
                    check_point(start, "fixedpoint.system.start")?;
                    if !(*block_time > 0.0) || *blocks == 0 || *first > 0 || -*first > *blocks as i64 {
                        return Err("orbit system needs block_time > 0, blocks >= 1 and -blocks <= first <= 0".into());
                    }
                    if !(*epsilon_fraction > 0.0 && *epsilon_fraction <= 1.0 / 3.0) {
                        return Err("epsilon_fraction must lie in (0, 1/3]".into());
                    }
                }
                if p.starts == 0 || !(p.radius > 0.0) {
                    return Err("fixedpoint needs starts >= 1 and radius > 0".into());
                }
            }
            CommandParams::Expansive(p) => {
                for s in &p.samples {
                    check_point(s, "sample")?;
                }
                if let Some(o) = &p.orbit {
                    check_point(&o.start, "expansive.orbit.start")?;
                }
                if p.samples.is_empty() && p.circle.is_none() && p.orbit.is_none() {
                    return Err("expansive needs samples, [expansive.circle] or [expansive.orbit]".into());
                }
                if p.circle.is_some() && dim != 2 {
                    return Err("circle samples need a planar field".into());
                }
                if p.modes.is_empty() {
                    return Err("expansive.modes must be nonempty".into());
                }
            }
            CommandParams::Constants(p) => {
                if p.block_times.iter().chain(&p.epsilons).any(|v| !(*v > 0.0)) {
                    return Err("constants.block_times and constants.epsilons must be positive".into());
                }
            }
        }
        Ok(())
    }
}

pub fn to_vector(p: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(p)
}

/// Builds the field from a preset name or an inline table. Errors carry an
/// offset relative to the start of `text`, the source slice of the value.
fn resolve_field(value: toml::Value, text: &str) -> std::result::Result<VectorFieldSpec, (usize, String)> {
    match value {
        toml::Value::String(name) => presets()
            .into_iter()
            .find(|p| p.0 == name)
            .map(|p| p.2)
            .ok_or_else(|| (0, format!("unknown field `{name}`; {}", registry_listing()))),
        toml::Value::Table(mut table) => {
            let kind_at = key_offset(text, "kind");
            let kind = match table.get("kind") {
                Some(toml::Value::String(k)) => k.clone(),
                Some(_) => return Err((kind_at, "field.kind must be a string".into())),
                None => return Err((0, format!("field table needs a `kind`; {}", registry_listing()))),
            };
            if !FieldKind::registry().iter().any(|r| r.0 == kind) {
                return Err((kind_at, format!("unknown field kind `{kind}`; {}", registry_listing())));
            }
            table.entry("name").or_insert_with(|| toml::Value::String(kind.clone()));
            let mut spec: VectorFieldSpec =
                toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| (0, format!("field: {}", e.message())))?;
            spec.prepare().map_err(|e| (0, format!("field: {e}")))?;
            Ok(spec)
        }
        _ => Err((0, format!("field must be a preset name or a table; {}", registry_listing()))),
    }
}

/// Offset of `key = ...` within `text`, or 0.
fn key_offset(text: &str, key: &str) -> usize {
    let mut from = 0;
    while let Some(i) = text[from..].find(key) {
        let at = from + i;
        let boundary = at == 0 || !text.as_bytes()[at - 1].is_ascii_alphanumeric() && text.as_bytes()[at - 1] != b'_';
        if boundary && text[at + key.len()..].trim_start().starts_with('=') {
            return at;
        }
        from = at + key.len();
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Result<Scenario> {
        Scenario::parse(Path::new("test.toml"), src)
    }

    fn diagnostic(src: &str) -> Diagnostic {
        match parse(src) {
            Err(CliError::Scenario(d)) => d,
            other => panic!("expected a diagnostic, got {other:?}"),
        }
    }

    #[test]
    fn preset_and_inline_fields() {
        let s = parse("command = \"flowbox\"\nfield = \"saddle\"\nseed = 3\n").unwrap();
        assert_eq!(s.field.dim(), 3);
        assert_eq!(s.params, CommandParams::Flowbox(FlowboxParams::default()));
        let s = parse(
            "command = \"constants\"\nlipschitz = 2.0\n[field]\nkind = \"lorenz\"\nsigma = 10\nrho = 28\nbeta = 2.5\n\
             domain = { lower = [-30, -30, -5], upper = [30, 30, 60] }\n",
        )
        .unwrap();
        assert_eq!(s.field.name, "lorenz");
        assert_eq!(s.lipschitz, LipschitzSpec::Value(2.0));
        assert!(s.needs_seed());
    }

    #[test]
    fn unknown_names_point_at_the_value() {
        let d = diagnostic("command = \"flowbox\"\nfield = \"duffing\"\n");
        assert_eq!((d.line, d.column), (2, 9));
        assert!(d.message.contains("builtin registry"), "{}", d.message);
        let d = diagnostic("command = \"flowbox\"\n[field]\nname = \"x\"\nkind = \"duffing\"\n");
        assert_eq!((d.line, d.column), (4, 1));
        assert!(d.message.contains("kinds [linear, rotation, lorenz, saddle-suspension]"));
    }

    #[test]
    fn syntax_and_schema_errors_are_located() {
        let d = diagnostic("command = \"flowbox\"\nfield = \"saddle\"\nseed = = 1\n");
        assert_eq!(d.line, 3);
        let d = diagnostic("command = \"flowbox\"\nfield = \"saddle\"\n[flowbox]\ngrdi = 4\n");
        assert_eq!(d.line, 4);
        assert!(d.message.contains("grdi"));
        let d = diagnostic("command = \"flowbox\"\nfield = \"saddle\"\n[expansive]\nhorizon = 2.0\n");
        assert!(d.message.contains("does not apply"));
        let d = diagnostic("command = \"split\"\nfield = \"saddle\"\n");
        assert!(d.message.contains("[split]"));
    }

    #[test]
    fn points_are_checked_against_the_field() {
        let d = diagnostic("command = \"flowbox\"\nfield = \"rotation\"\n[flowbox]\npoints = [[1.0, 2.0, 3.0]]\n");
        assert!(d.message.contains("dimension 3"));
    }

    #[test]
    fn key_offsets_skip_longer_names() {
        assert_eq!(key_offset("subkind = 1\nkind = 2", "kind"), 12);
        assert_eq!(key_offset("nothing", "kind"), 0);
    }
}
