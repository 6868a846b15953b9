//! Experiment specifications and their TOML config files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::presets::{InitialCondition, Preset, PresetId};
use crate::discretize::{
    boundary_data_from_trace_1d, boundary_data_from_trace_2d, build_grid_1d, build_grid_2d, FaceBC, FaceData,
    FaceSet2D, Side,
};
use crate::flows::{ReactionSpec, ReactionTerm};
use crate::integrators::SchemeKind;

/// Problems live on `[0, 1]` or `[0, 1]^2`.
pub const DOMAIN: (f64, f64) = (0.0, 1.0);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// Interior node counts; `ny` only in 2D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: Option<usize>,
}

/// A face with its data already resolved to values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceSpec {
    pub side: Side,
    pub alpha: f64,
    pub beta: f64,
    pub data: FaceData,
}

impl FaceSpec {
    pub fn bc(&self) -> FaceBC {
        FaceBC::new(self.alpha, self.beta, self.data.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub preset: PresetId,
    pub params: Vec<f64>,
}

impl InitialSpec {
    pub fn condition(&self) -> InitialCondition {
        InitialCondition {
            preset: self.preset,
            params: self.params.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTolerances {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for ReferenceTolerances {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub format: ReportFormat,
    pub dir: Option<PathBuf>,
}

/// A fully validated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub dimension: u8,
    pub grid: GridSpec,
    pub faces: Vec<FaceSpec>,
    pub reaction: ReactionSpec,
    pub initial: InitialSpec,
    pub t_end: f64,
    pub taus: Vec<f64>,
    pub schemes: Vec<SchemeKind>,
    pub reference: ReferenceTolerances,
    pub output: OutputSpec,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    dimension: Option<u8>,
    grid: Option<RawGrid>,
    #[serde(default)]
    faces: Vec<RawFace>,
    reaction: Option<ReactionSpec>,
    initial: RawInitial,
    t_end: Option<f64>,
    taus: Option<Vec<f64>>,
    schemes: Option<Vec<String>>,
    reference: Option<RawReference>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: Option<usize>,
    ny: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFace {
    side: Side,
    alpha: Option<f64>,
    beta: Option<f64>,
    data: Option<RawData>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawData {
    Mode(String),
    Scalar(f64),
    Values(Vec<f64>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    preset: String,
    params: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    format: Option<ReportFormat>,
    dir: Option<PathBuf>,
}

/// Face data before resolution.
#[derive(Clone, Debug, PartialEq)]
pub enum DataMode {
    FromTrace,
    Explicit(FaceData),
}

/// Optional overrides applied on top of a preset.
#[derive(Clone, Debug, Default)]
pub struct SpecOverrides {
    pub name: Option<String>,
    pub grid: Option<GridSpec>,
    pub faces: Vec<(Side, Option<(f64, f64)>, DataMode)>,
    pub reaction: Option<ReactionSpec>,
    pub params: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub taus: Option<Vec<f64>>,
    pub schemes: Option<Vec<SchemeKind>>,
    pub reference: Option<ReferenceTolerances>,
    pub output: Option<OutputSpec>,
}

impl ExperimentSpec {
    /// The preset exactly as defined, with trace-derived boundary data.
    pub fn from_preset(id: PresetId) -> ExperimentSpec {
        Self::build(id, SpecOverrides::default()).expect("built-in presets are valid")
    }

    /// The preset with the boundary values printed alongside the experiment
    /// in place of the trace of `u0`.
    pub fn from_preset_literal(id: PresetId) -> Result<ExperimentSpec, ConfigError> {
        let preset = id.preset();
        if preset.literal_data.is_empty() {
            return Err(invalid("faces", format!("preset {id} has no literal boundary values")));
        }
        let faces = preset
            .literal_data
            .iter()
            .map(|&(side, b)| (side, None, DataMode::Explicit(FaceData::Scalar(b))))
            .collect();
        Self::build(
            id,
            SpecOverrides {
                name: Some(format!("{id}_literal")),
                faces,
                ..Default::default()
            },
        )
    }

    pub fn build(id: PresetId, o: SpecOverrides) -> Result<ExperimentSpec, ConfigError> {
        let preset = id.preset();
        let params = o.params.unwrap_or_else(|| preset.default_params.clone());
        let initial = InitialCondition::new(id, params).map_err(|m| invalid("initial.params", m))?;

        let grid = o.grid.unwrap_or(GridSpec {
            nx: preset.n_interior,
            ny: (preset.dimension == 2).then_some(preset.n_interior),
        });
        match (preset.dimension, grid.ny) {
            (1, Some(_)) => return Err(invalid("grid.ny", "not allowed for a 1D preset")),
            (2, None) => return Err(invalid("grid.ny", "required for a 2D preset")),
            _ => {}
        }

        let reaction = o.reaction.unwrap_or(ReactionSpec {
            kind: "square".into(),
            params: vec![],
        });
        ReactionTerm::from_spec(&reaction).map_err(|m| invalid("reaction", m))?;

        let t_end = o.t_end.unwrap_or(preset.t_end);
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(invalid("t_end", format!("must be positive and finite, got {t_end}")));
        }
        let taus = o.taus.unwrap_or_else(|| preset.default_taus());
        validate_taus(&taus, t_end)?;

        let schemes = o.schemes.unwrap_or_else(|| SchemeKind::ALL.to_vec());
        for (k, s) in schemes.iter().enumerate() {
            if schemes[..k].contains(s) {
                return Err(invalid("schemes", format!("'{s}' listed twice")));
            }
        }

        let reference = o.reference.unwrap_or_default();
        for (field, v) in [("reference.abs_tol", reference.abs_tol), ("reference.rel_tol", reference.rel_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }

        let faces = resolve_faces(&preset, &grid, &initial, &o.faces)?;

        let name = o.name.unwrap_or_else(|| id.as_str().to_string());
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(invalid("name", format!("'{name}' is not usable as a file name prefix")));
        }

        Ok(ExperimentSpec {
            name,
            dimension: preset.dimension,
            grid,
            faces,
            reaction,
            initial: InitialSpec {
                preset: id,
                params: initial.params,
            },
            t_end,
            taus,
            schemes,
            reference,
            output: o.output.unwrap_or_default(),
        })
    }

    pub fn face(&self, side: Side) -> Option<&FaceSpec> {
        self.faces.iter().find(|f| f.side == side)
    }

    pub fn reaction_term(&self) -> ReactionTerm {
        ReactionTerm::from_spec(&self.reaction).expect("validated at construction")
    }

    /// `t_end / tau` rounded; exact by validation.
    pub fn steps_for(&self, tau: f64) -> usize {
        (self.t_end / tau).round() as usize
    }
}

fn validate_taus(taus: &[f64], t_end: f64) -> Result<(), ConfigError> {
    if taus.is_empty() {
        return Err(invalid("taus", "must not be empty"));
    }
    for (k, &tau) in taus.iter().enumerate() {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid("taus", format!("entry {k} = {tau} is not positive")));
        }
        if k > 0 && !(tau < taus[k - 1]) {
            return Err(invalid("taus", format!("must be strictly decreasing, entry {k} = {tau} follows {}", taus[k - 1])));
        }
        let n = t_end / tau;
        if n.round() < 1.0 || (n - n.round()).abs() > 1e-9 * n {
            return Err(invalid("taus", format!("t_end = {t_end} is not an integer multiple of tau = {tau}")));
        }
    }
    Ok(())
}

fn resolve_faces(
    preset: &Preset,
    grid: &GridSpec,
    u0: &InitialCondition,
    overrides: &[(Side, Option<(f64, f64)>, DataMode)],
) -> Result<Vec<FaceSpec>, ConfigError> {
    for (k, (side, ..)) in overrides.iter().enumerate() {
        if preset.face(*side).is_none() {
            return Err(invalid(format!("faces[{k}].side"), format!("'{side}' is not a face of a {}D problem", preset.dimension)));
        }
        if overrides[..k].iter().any(|o| o.0 == *side) {
            return Err(invalid(format!("faces[{k}].side"), format!("'{side}' listed twice")));
        }
    }
    let mut modes = Vec::new();
    let mut bcs = Vec::new();
    for &(side, alpha, beta) in &preset.faces {
        let o = overrides.iter().find(|o| o.0 == side);
        let (alpha, beta) = o.and_then(|o| o.1).unwrap_or((alpha, beta));
        let mode = o.map(|o| o.2.clone()).unwrap_or(DataMode::FromTrace);
        let bc = FaceBC::new(alpha, beta, FaceData::Scalar(0.0));
        bc.validate(side).map_err(|e| invalid(format!("faces.{side}"), e))?;
        modes.push((side, mode));
        bcs.push(bc);
    }

    let traced: Vec<FaceBC> = if preset.dimension == 1 {
        let (l, r) = boundary_data_from_trace_1d(u0, DOMAIN.0, DOMAIN.1, &bcs[0], &bcs[1]);
        vec![l, r]
    } else {
        let set = FaceSet2D {
            left: bcs[0].clone(),
            right: bcs[1].clone(),
            bottom: bcs[2].clone(),
            top: bcs[3].clone(),
        };
        let g = build_grid_2d(DOMAIN, DOMAIN, (grid.nx, grid.ny.unwrap_or(0)), &set)
            .map_err(|e| invalid("grid", e))?;
        let t = boundary_data_from_trace_2d(u0, &g, &set);
        preset.faces.iter().map(|f| t.get(f.0).clone()).collect()
    };
    if preset.dimension == 1 {
        build_grid_1d(DOMAIN.0, DOMAIN.1, grid.nx, &bcs[0], &bcs[1]).map_err(|e| invalid("grid.nx", e))?;
    }

    let mut faces = Vec::new();
    for (((side, mode), bc), trace) in modes.into_iter().zip(bcs).zip(traced) {
        let data = match mode {
            DataMode::FromTrace => trace.data,
            DataMode::Explicit(d) => {
                if let (FaceData::Samples(v), FaceData::Samples(t)) = (&d, &trace.data) {
                    if v.len() != t.len() && v.len() != 1 {
                        return Err(invalid(
                            format!("faces.{side}.data"),
                            format!("expected 1 or {} values, got {}", t.len(), v.len()),
                        ));
                    }
                }
                if let FaceData::Samples(v) = &d {
                    if preset.dimension == 1 && v.len() != 1 {
                        return Err(invalid(format!("faces.{side}.data"), "a 1D face takes a single value"));
                    }
                }
                match d {
                    FaceData::Samples(v) if preset.dimension == 1 => FaceData::Scalar(v[0]),
                    other => other,
                }
            }
        };
        faces.push(FaceSpec {
            side,
            alpha: bc.alpha,
            beta: bc.beta,
            data,
        });
    }
    Ok(faces)
}

fn convert(raw: RawConfig) -> Result<ExperimentSpec, ConfigError> {
    let id: PresetId = raw.initial.preset.parse().map_err(|m| invalid("initial.preset", m))?;
    let preset = id.preset();
    if let Some(d) = raw.dimension {
        if d != preset.dimension {
            return Err(invalid("dimension", format!("preset {id} is {}D, config says {d}D", preset.dimension)));
        }
    }
    let grid = raw
        .grid
        .map(|g| GridSpec {
            nx: g.nx.unwrap_or(preset.n_interior),
            ny: match (preset.dimension, g.ny) {
                (2, None) => Some(g.nx.unwrap_or(preset.n_interior)),
                (_, ny) => ny,
            },
        });
    let mut faces = Vec::new();
    for (k, f) in raw.faces.into_iter().enumerate() {
        let default = preset.face(f.side);
        let coeffs = match (f.alpha, f.beta) {
            (None, None) => None,
            (a, b) => {
                let (da, db) = default.unwrap_or((1.0, 0.0));
                Some((a.unwrap_or(da), b.unwrap_or(db)))
            }
        };
        let mode = match f.data {
            None => DataMode::FromTrace,
            Some(RawData::Mode(m)) if m == "from_trace" => DataMode::FromTrace,
            Some(RawData::Mode(m)) => {
                return Err(invalid(format!("faces[{k}].data"), format!("unknown data mode '{m}' (expected \"from_trace\", a number or an array)")))
            }
            Some(RawData::Scalar(b)) => DataMode::Explicit(FaceData::Scalar(b)),
            Some(RawData::Values(v)) if v.is_empty() => {
                return Err(invalid(format!("faces[{k}].data"), "empty value list"))
            }
            Some(RawData::Values(v)) => DataMode::Explicit(FaceData::Samples(v)),
        };
        faces.push((f.side, coeffs, mode));
    }
    let schemes = raw
        .schemes
        .map(|v| {
            v.iter()
                .map(|s| s.parse::<SchemeKind>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|m| invalid("schemes", m))
        })
        .transpose()?;
    let reference = raw.reference.map(|r| {
        let d = ReferenceTolerances::default();
        ReferenceTolerances {
            abs_tol: r.abs_tol.unwrap_or(d.abs_tol),
            rel_tol: r.rel_tol.unwrap_or(d.rel_tol),
        }
    });
    let output = raw.output.map(|o| OutputSpec {
        format: o.format.unwrap_or_default(),
        dir: o.dir,
    });
    ExperimentSpec::build(
        id,
        SpecOverrides {
            name: raw.name,
            grid,
            faces,
            reaction: raw.reaction,
            params: raw.initial.params,
            t_end: raw.t_end,
            taus: raw.taus,
            schemes,
            reference,
            output,
        },
    )
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    convert(raw)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentSpec, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_preset_defaults() {
        let spec = parse_config("[initial]\npreset = \"ex5_1\"\n").unwrap();
        assert_eq!(spec, ExperimentSpec::from_preset(PresetId::Ex5_1));
        assert_eq!(spec.t_end, 0.5);
        assert_eq!(spec.taus, PresetId::Ex5_1.preset().default_taus());
        assert!(spec.faces.iter().all(|f| f.alpha == 1.0 && f.beta == 0.0));
        assert_eq!(spec.reference, ReferenceTolerances::default());
        assert_eq!(spec.grid, GridSpec { nx: 499, ny: None });
    }

    #[test]
    fn taus_must_decrease() {
        let err = parse_config("taus = [0.05, 0.1]\n[initial]\npreset = \"ex5_1\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "taus"), "{err}");
        let err = parse_config("taus = [0.1, 0.1]\n[initial]\npreset = \"ex5_1\"\n").unwrap_err();
        assert!(err.to_string().contains("taus"));
    }

    #[test]
    fn taus_must_divide_t_end() {
        let err = parse_config("taus = [0.3]\n[initial]\npreset = \"ex5_1\"\n").unwrap_err();
        assert!(err.to_string().contains("integer multiple"));
    }

    #[test]
    fn explicit_data_matching_trace_gives_same_spec() {
        let text = r#"
[initial]
preset = "ex5_1"

[[faces]]
side = "left"
data = 2.0

[[faces]]
side = "right"
alpha = 1.0
beta = 0.0
data = 3.0
"#;
        assert_eq!(parse_config(text).unwrap(), ExperimentSpec::from_preset(PresetId::Ex5_1));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config("bogus = 1\n[initial]\npreset = \"ex5_1\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("bogus"));
        let err = parse_config("[initial]\npreset = \"ex5_1\"\n[reaction]\nkind = \"square\"\nrate = 2\n").unwrap_err();
        assert!(err.to_string().contains("rate"));
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = parse_config("[initial]\npreset = \"ex5_1\"\nt_end = = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn unknown_ids_rejected() {
        let err = parse_config("[initial]\npreset = \"ex9_9\"\n").unwrap_err();
        assert!(err.to_string().contains("initial.preset"));
        let err = parse_config("[initial]\npreset = \"ex5_1\"\n[reaction]\nkind = \"cubic\"\n").unwrap_err();
        assert!(err.to_string().contains("reaction"));
        let err = parse_config("schemes = [\"lie\"]\n[initial]\npreset = \"ex5_1\"\n").unwrap_err();
        assert!(err.to_string().contains("schemes"));
    }

    #[test]
    fn wrong_face_for_dimension() {
        let err = parse_config("[initial]\npreset = \"ex5_1\"\n[[faces]]\nside = \"top\"\n").unwrap_err();
        assert!(err.to_string().contains("faces[0].side"));
    }

    #[test]
    fn degenerate_face_rejected() {
        let err = parse_config("[initial]\npreset = \"ex5_1\"\n[[faces]]\nside = \"left\"\nalpha = 0.0\nbeta = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("faces.left"));
    }

    #[test]
    fn literal_overrides_differ_where_expected() {
        let lit = ExperimentSpec::from_preset_literal(PresetId::Ex5_1).unwrap();
        assert_eq!(lit.faces, ExperimentSpec::from_preset(PresetId::Ex5_1).faces);
        let lit = ExperimentSpec::from_preset_literal(PresetId::Ex5_2).unwrap();
        assert_eq!(lit.face(Side::Right).unwrap().data, FaceData::Scalar(2.0));
        assert!(ExperimentSpec::from_preset_literal(PresetId::Ex6_2).is_err());
    }

    #[test]
    fn two_d_trace_has_samples_per_face_node() {
        let spec = ExperimentSpec::from_preset(PresetId::Ex6_2);
        assert_eq!(spec.grid, GridSpec { nx: 50, ny: Some(50) });
        // Neumann left/right keep the x boundary columns; the y direction has 50 unknowns.
        match &spec.face(Side::Left).unwrap().data {
            FaceData::Samples(v) => assert_eq!(v.len(), 50),
            other => panic!("{other:?}"),
        }
        match &spec.face(Side::Top).unwrap().data {
            FaceData::Samples(v) => assert_eq!(v.len(), 52),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_config_round_trip() {
        let text = r#"
name = "custom"
dimension = 2
t_end = 0.1
taus = [0.05, 0.025]
schemes = ["ibc"]

[grid]
nx = 8
ny = 6

[reaction]
kind = "logistic"
params = [1.0, 4.0]

[initial]
preset = "ex6_1"
params = [1.0, 0.5]

[reference]
rel_tol = 1e-8

[output]
format = "json"
dir = "out"

[[faces]]
side = "bottom"
alpha = 1.0
beta = 1.0
"#;
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.name, "custom");
        assert_eq!(spec.grid, GridSpec { nx: 8, ny: Some(6) });
        assert_eq!(spec.schemes, vec![SchemeKind::IbcStrang]);
        assert_eq!(spec.reference.abs_tol, 1e-9);
        assert_eq!(spec.reference.rel_tol, 1e-8);
        assert_eq!(spec.output.format, ReportFormat::Json);
        let bottom = spec.face(Side::Bottom).unwrap();
        assert_eq!((bottom.alpha, bottom.beta), (1.0, 1.0));
        let json = serde_json::to_string(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
