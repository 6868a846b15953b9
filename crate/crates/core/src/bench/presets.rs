//! Built-in experiments: closed-form initial states and their face layouts.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discretize::{Field1D, Field2D, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PresetId {
    #[serde(rename = "ex5_1")]
    Ex5_1,
    #[serde(rename = "ex5_2")]
    Ex5_2,
    #[serde(rename = "ex5_3")]
    Ex5_3,
    #[serde(rename = "ex5_4")]
    Ex5_4,
    #[serde(rename = "ex6_1")]
    Ex6_1,
    #[serde(rename = "ex6_2")]
    Ex6_2,
}

impl PresetId {
    pub const ALL: [PresetId; 6] = [
        PresetId::Ex5_1,
        PresetId::Ex5_2,
        PresetId::Ex5_3,
        PresetId::Ex5_4,
        PresetId::Ex6_1,
        PresetId::Ex6_2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetId::Ex5_1 => "ex5_1",
            PresetId::Ex5_2 => "ex5_2",
            PresetId::Ex5_3 => "ex5_3",
            PresetId::Ex5_4 => "ex5_4",
            PresetId::Ex6_1 => "ex6_1",
            PresetId::Ex6_2 => "ex6_2",
        }
    }

    pub fn preset(self) -> Preset {
        Preset::get(self)
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PresetId::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| {
                let known: Vec<_> = PresetId::ALL.iter().map(|p| p.as_str()).collect();
                format!("unknown preset '{s}' (known: {})", known.join(", "))
            })
    }
}

/// Face layout of a preset: `(side, alpha, beta)`.
pub type FaceLayout = (Side, f64, f64);

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub id: PresetId,
    pub description: &'static str,
    pub formula: &'static str,
    pub dimension: u8,
    /// Interior nodes per direction.
    pub n_interior: usize,
    pub faces: Vec<FaceLayout>,
    /// Boundary values as printed alongside the experiment; usable as an
    /// explicit override. Some disagree with the trace of `u0`.
    pub literal_data: Vec<(Side, f64)>,
    pub t_end: f64,
    pub default_params: Vec<f64>,
    pub tau_max: f64,
}

const DIRICHLET: (f64, f64) = (1.0, 0.0);
const NEUMANN: (f64, f64) = (0.0, 1.0);
const ROBIN: (f64, f64) = (1.0, 1.0);

fn layout(faces: &[(Side, (f64, f64))]) -> Vec<FaceLayout> {
    faces.iter().map(|&(s, (a, b))| (s, a, b)).collect()
}

impl Preset {
    pub fn get(id: PresetId) -> Preset {
        use Side::*;
        let one_d = |description, formula, faces: &[(Side, (f64, f64))], literal: &[(Side, f64)], params: &[f64]| Preset {
            id,
            description,
            formula,
            dimension: 1,
            n_interior: 499,
            faces: layout(faces),
            literal_data: literal.to_vec(),
            t_end: 0.5,
            default_params: params.to_vec(),
            tau_max: 0.1,
        };
        let two_d = |description, formula, faces: &[(Side, (f64, f64))], literal: &[(Side, f64)], params: &[f64]| Preset {
            id,
            description,
            formula,
            dimension: 2,
            n_interior: 50,
            faces: layout(faces),
            literal_data: literal.to_vec(),
            t_end: 0.1,
            default_params: params.to_vec(),
            tau_max: 0.05,
        };
        match id {
            PresetId::Ex5_1 => one_d(
                "1D Dirichlet/Dirichlet, f = u^2",
                "u0 = p0 + p1 sin(pi x / 2)",
                &[(Left, DIRICHLET), (Right, DIRICHLET)],
                &[(Left, 2.0), (Right, 3.0)],
                &[2.0, 1.0],
            ),
            PresetId::Ex5_2 => one_d(
                "1D Neumann/Neumann, f = u^2",
                "u0 = p0 + p1 cos(pi x / 2)",
                &[(Left, NEUMANN), (Right, NEUMANN)],
                &[(Left, 1.0), (Right, 2.0)],
                &[1.0, 2.0 / PI],
            ),
            PresetId::Ex5_3 => one_d(
                "1D Robin/Robin (alpha = beta = 1), f = u^2",
                "u0 = p0 - p1 cos(pi x)",
                &[(Left, ROBIN), (Right, ROBIN)],
                &[(Left, 0.0), (Right, 1.0 + 1.0 / (2.0 * PI))],
                &[0.5 + 1.0 / (2.0 * PI), 1.0 / (2.0 * PI)],
            ),
            PresetId::Ex5_4 => one_d(
                "1D Neumann/Dirichlet, f = u^2",
                "u0 = p0 - p1 cos(pi x / 2)",
                &[(Left, NEUMANN), (Right, DIRICHLET)],
                &[(Left, 0.0), (Right, 2.0)],
                &[2.0, 2.0],
            ),
            PresetId::Ex6_1 => two_d(
                "2D Dirichlet on all faces, f = u^2",
                "u0 = p0 + p1 sin(pi x) sin(pi y)",
                &[(Left, DIRICHLET), (Right, DIRICHLET), (Bottom, DIRICHLET), (Top, DIRICHLET)],
                &[(Left, 1.0), (Right, 1.0), (Bottom, 1.0), (Top, 1.0)],
                &[1.0, 1.0],
            ),
            PresetId::Ex6_2 => two_d(
                "2D Neumann left/right, Dirichlet bottom/top, f = u^2",
                "u0 = p0 + p1 exp(-p2 (y - 1/2)^2) cos(2 pi (x + y))",
                &[(Left, NEUMANN), (Right, NEUMANN), (Bottom, DIRICHLET), (Top, DIRICHLET)],
                &[],
                &[3.0, 1.0, 10.0],
            ),
        }
    }

    /// `tau_max * 2^-k`, `k = 0..6`.
    pub fn default_taus(&self) -> Vec<f64> {
        (0..7).map(|k| self.tau_max / f64::from(1u32 << k)).collect()
    }

    pub fn face(&self, side: Side) -> Option<(f64, f64)> {
        self.faces.iter().find(|f| f.0 == side).map(|f| (f.1, f.2))
    }
}

/// A preset initial state with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialCondition {
    pub preset: PresetId,
    pub params: Vec<f64>,
}

impl InitialCondition {
    pub fn new(preset: PresetId, params: Vec<f64>) -> Result<Self, String> {
        let expected = preset.preset().default_params.len();
        if params.len() != expected {
            return Err(format!(
                "preset {preset} takes {expected} initial params, got {}",
                params.len()
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(format!("preset {preset} initial params must be finite"));
        }
        Ok(Self { preset, params })
    }

    pub fn default_for(preset: PresetId) -> Self {
        Self {
            preset,
            params: preset.preset().default_params,
        }
    }

    fn p(&self, k: usize) -> f64 {
        self.params[k]
    }
}

impl Field1D for InitialCondition {
    fn value(&self, x: f64) -> f64 {
        let (p0, p1) = (self.p(0), self.p(1));
        match self.preset {
            PresetId::Ex5_1 => p0 + p1 * (0.5 * PI * x).sin(),
            PresetId::Ex5_2 => p0 + p1 * (0.5 * PI * x).cos(),
            PresetId::Ex5_3 => p0 - p1 * (PI * x).cos(),
            PresetId::Ex5_4 => p0 - p1 * (0.5 * PI * x).cos(),
            PresetId::Ex6_1 | PresetId::Ex6_2 => panic!("{} is a 2D preset", self.preset),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let p1 = self.p(1);
        match self.preset {
            PresetId::Ex5_1 => 0.5 * PI * p1 * (0.5 * PI * x).cos(),
            PresetId::Ex5_2 => -0.5 * PI * p1 * (0.5 * PI * x).sin(),
            PresetId::Ex5_3 => PI * p1 * (PI * x).sin(),
            PresetId::Ex5_4 => 0.5 * PI * p1 * (0.5 * PI * x).sin(),
            PresetId::Ex6_1 | PresetId::Ex6_2 => panic!("{} is a 2D preset", self.preset),
        }
    }
}

impl Field2D for InitialCondition {
    fn value(&self, x: f64, y: f64) -> f64 {
        let (p0, p1) = (self.p(0), self.p(1));
        match self.preset {
            PresetId::Ex6_1 => p0 + p1 * (PI * x).sin() * (PI * y).sin(),
            PresetId::Ex6_2 => {
                let envelope = (-self.p(2) * (y - 0.5).powi(2)).exp();
                p0 + p1 * envelope * (2.0 * PI * (x + y)).cos()
            }
            _ => panic!("{} is a 1D preset", self.preset),
        }
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let p1 = self.p(1);
        match self.preset {
            PresetId::Ex6_1 => (
                PI * p1 * (PI * x).cos() * (PI * y).sin(),
                PI * p1 * (PI * x).sin() * (PI * y).cos(),
            ),
            PresetId::Ex6_2 => {
                let w = self.p(2);
                let envelope = (-w * (y - 0.5).powi(2)).exp();
                let (s, c) = (2.0 * PI * (x + y)).sin_cos();
                let dx = -2.0 * PI * p1 * envelope * s;
                let dy = p1 * envelope * (-2.0 * w * (y - 0.5) * c - 2.0 * PI * s);
                (dx, dy)
            }
            _ => panic!("{} is a 1D preset", self.preset),
        }
    }
}
