//! Scenario documents and the seeded recipes that build their inputs.

use conpaste::grid::{gradient, GridMap, GridSpec, ScalarField, VectorField};
use conpaste::regions::{ball_mask, box_mask, nested_regions, RegionSet};
use conpaste::synth::{random_scalar, random_spectral_curl, random_staggered_curl};
use conpaste::io::{read_field_file, FieldData};
use conpaste::Error;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

const TAU: f64 = 2.0 * PI;

fn default_grid() -> usize {
    64
}
fn default_seed() -> u64 {
    1
}
fn default_alpha() -> f64 {
    0.5
}
fn default_smoothness() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_moser_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    50
}
fn default_cheb() -> usize {
    25
}
fn default_samples() -> usize {
    41
}
fn default_sample_scale() -> f64 {
    3.0
}

/// One pipeline run: a grid, a seed and a task.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Nodes per axis of the square torus grid.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub task: Task,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Task {
    Mollify {
        field: VectorRecipe,
        eps: f64,
    },
    Smooth {
        field: VectorRecipe,
        eps: f64,
    },
    Paste {
        x: VectorRecipe,
        y: VectorRecipe,
        regions: RegionsCfg,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_smoothness")]
        smoothness: usize,
    },
    Divsolve {
        g: ScalarRecipe,
        /// Zero-boundary solve on Ω when present, torus solve otherwise.
        #[serde(default)]
        regions: Option<RegionsCfg>,
        /// Restrict `g` to Ω and remove its Ω-mean before solving.
        #[serde(default = "default_true")]
        restrict: bool,
        /// Relative residual target of the zero-boundary solve.
        #[serde(default)]
        tol: Option<f64>,
    },
    Sweep {
        regions: RegionsCfg,
        n_samples: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Moser {
        f: ScalarRecipe,
        #[serde(default)]
        g: Option<ScalarRecipe>,
        #[serde(default)]
        regions: Option<RegionsCfg>,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_moser_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Weakpaste {
        map: MapRecipe,
        x0: [f64; 2],
        r: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Symplectic {
        outer: TwistRecipe,
        /// Defaults to the linearization of `outer` at the chart center.
        #[serde(default)]
        inner: Option<TwistRecipe>,
        delta: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "default_cheb")]
        nodes: usize,
        #[serde(default = "default_samples")]
        sample_nodes: usize,
        /// Half-width of the sampled map box in units of `delta`.
        #[serde(default = "default_sample_scale")]
        sample_scale: f64,
        /// Chart points whose images are reported.
        #[serde(default)]
        probes: Vec<[f64; 2]>,
    },
}

impl Scenario {
    /// Makes relative `file` recipe paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let mut fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.task {
            Task::Mollify { field, .. } | Task::Smooth { field, .. } => field.visit_paths(&mut fix),
            Task::Paste { x, y, .. } => {
                x.visit_paths(&mut fix);
                y.visit_paths(&mut fix);
            }
            Task::Divsolve { g, .. } => g.visit_paths(&mut fix),
            Task::Moser { f, g, .. } => {
                f.visit_paths(&mut fix);
                if let Some(g) = g {
                    g.visit_paths(&mut fix);
                }
            }
            Task::Sweep { .. } | Task::Weakpaste { .. } | Task::Symplectic { .. } => {}
        }
    }
}

/// Reads a CVF1 field file and checks it lives on `spec`.
fn load_field(path: &Path, spec: &GridSpec) -> conpaste::Result<FieldData> {
    let (data, _) = read_field_file(path)?;
    if data.spec() != spec {
        return Err(Error::SpecMismatch);
    }
    Ok(data)
}

impl Task {
    pub fn op(&self) -> &'static str {
        match self {
            Task::Mollify { .. } => "mollify",
            Task::Smooth { .. } => "smooth",
            Task::Paste { .. } => "paste",
            Task::Divsolve { .. } => "divsolve",
            Task::Sweep { .. } => "sweep",
            Task::Moser { .. } => "moser",
            Task::Weakpaste { .. } => "weakpaste",
            Task::Symplectic { .. } => "symplectic",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub amp: f64,
    pub k: [f64; 2],
    /// Phase per axis; `[0, π/2]` turns the second factor into 1 for `k = 0`.
    #[serde(default)]
    pub phase: [f64; 2],
}

/// `offset + Σ amp · Π_a sin(2π k_a x_a + phase_a)` and friends.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarRecipe {
    Constant {
        value: f64,
    },
    Trig {
        #[serde(default)]
        offset: f64,
        terms: Vec<TrigTerm>,
    },
    Random {
        kmax: usize,
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        seed_offset: u64,
    },
    /// Scalar CVF1 file on the scenario grid.
    File {
        path: PathBuf,
    },
}

impl ScalarRecipe {
    fn visit_paths(&mut self, fix: &mut impl FnMut(&mut PathBuf)) {
        if let ScalarRecipe::File { path } = self {
            fix(path);
        }
    }

    pub fn build(&self, spec: &GridSpec, seed: u64) -> conpaste::Result<ScalarField> {
        match self {
            ScalarRecipe::Constant { value } => Ok(ScalarField::constant(spec, *value)),
            ScalarRecipe::Trig { offset, terms } => Ok(ScalarField::from_fn(spec, |x| {
                offset
                    + terms
                        .iter()
                        .map(|t| t.amp * (0..2).map(|a| (TAU * t.k[a] * x[a] + t.phase[a]).sin()).product::<f64>())
                        .sum::<f64>()
            })),
            ScalarRecipe::Random { kmax, amplitude, offset, seed_offset } => {
                Ok(random_scalar(spec, seed.wrapping_add(*seed_offset), *kmax)?.map(|v| offset + amplitude * v))
            }
            ScalarRecipe::File { path } => match load_field(path, spec)? {
                FieldData::Scalar(s) => Ok(s),
                _ => Err(Error::InvalidField(format!("{} does not hold a scalar field", path.display()))),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorRecipe {
    /// `(a sin 2πy, b sin 2πx)`: divergence-free for every difference scheme.
    ShearPair { a: f64, b: f64 },
    /// Backward-difference curl of a random stream function.
    StaggeredCurl {
        kmax: usize,
        amplitude: f64,
        #[serde(default)]
        seed_offset: u64,
    },
    /// Spectral curl of a random stream function.
    SpectralCurl {
        kmax: usize,
        amplitude: f64,
        #[serde(default)]
        seed_offset: u64,
    },
    /// Spectral gradient of a random scalar; compressible.
    Gradient {
        kmax: usize,
        amplitude: f64,
        #[serde(default)]
        seed_offset: u64,
    },
    Sum { terms: Vec<VectorRecipe> },
    /// Vector CVF1 file on the scenario grid.
    File { path: PathBuf },
}

impl VectorRecipe {
    fn visit_paths(&mut self, fix: &mut impl FnMut(&mut PathBuf)) {
        match self {
            VectorRecipe::File { path } => fix(path),
            VectorRecipe::Sum { terms } => terms.iter_mut().for_each(|t| t.visit_paths(fix)),
            _ => {}
        }
    }

    pub fn build(&self, spec: &GridSpec, seed: u64) -> conpaste::Result<VectorField> {
        match self {
            VectorRecipe::ShearPair { a, b } => {
                Ok(VectorField::from_fn(spec, |x| [a * (TAU * x[1]).sin(), b * (TAU * x[0]).sin(), 0.0]))
            }
            VectorRecipe::StaggeredCurl { kmax, amplitude, seed_offset } => {
                Ok(random_staggered_curl(spec, seed.wrapping_add(*seed_offset), *kmax)?.scale(*amplitude))
            }
            VectorRecipe::SpectralCurl { kmax, amplitude, seed_offset } => {
                Ok(random_spectral_curl(spec, seed.wrapping_add(*seed_offset), *kmax)?.scale(*amplitude))
            }
            VectorRecipe::Gradient { kmax, amplitude, seed_offset } => {
                let s = random_scalar(spec, seed.wrapping_add(*seed_offset), *kmax)?;
                Ok(gradient(&s)?.scale(*amplitude))
            }
            VectorRecipe::Sum { terms } => {
                let mut acc = VectorField::zeros(spec);
                for t in terms {
                    acc = acc.add(&t.build(spec, seed)?)?;
                }
                Ok(acc)
            }
            VectorRecipe::File { path } => match load_field(path, spec)? {
                FieldData::Vector(v) => Ok(v),
                _ => Err(Error::InvalidField(format!("{} does not hold a vector field", path.display()))),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapRecipe {
    Identity,
    /// `(x + a sin 2πy, y)`.
    Shear { a: f64 },
    /// `d1 = a sin 2πy`, then `d2 = b sin 2π(x + d1)`.
    TwoShear { a: f64, b: f64 },
    /// `x ↦ x + s sin 2πx` on the first axis; not volume-preserving.
    Stretch { s: f64 },
}

impl MapRecipe {
    pub fn build(&self, spec: &GridSpec) -> GridMap {
        match *self {
            MapRecipe::Identity => GridMap::identity(spec),
            MapRecipe::Shear { a } => GridMap::from_fn(spec, |x| [a * (TAU * x[1]).sin(), 0.0, 0.0]),
            MapRecipe::TwoShear { a, b } => GridMap::from_fn(spec, |x| {
                let d1 = a * (TAU * x[1]).sin();
                [d1, b * (TAU * (x[0] + d1)).sin(), 0.0]
            }),
            MapRecipe::Stretch { s } => GridMap::from_fn(spec, |x| [s * (TAU * x[0]).sin(), 0.0, 0.0]),
        }
    }
}

/// Area-preserving maps of a chart around the origin.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwistRecipe {
    Identity,
    /// `(x, y) ↦ M (x, y)`.
    Linear { matrix: [[f64; 2]; 2] },
    /// Kick `Y = y + k sin(2πx)/2π + c x²`, then drift `X = x + t Y`.
    KickDrift {
        k: f64,
        #[serde(default)]
        c: f64,
        #[serde(default = "one")]
        t: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl TwistRecipe {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        match *self {
            TwistRecipe::Identity => [x, y],
            TwistRecipe::Linear { matrix: m } => [m[0][0] * x + m[0][1] * y, m[1][0] * x + m[1][1] * y],
            TwistRecipe::KickDrift { k, c, t } => {
                let yy = y + k * (TAU * x).sin() / TAU + c * x * x;
                [x + t * yy, yy]
            }
        }
    }

    /// Derivative at the origin as a linear recipe.
    pub fn linearization(&self) -> TwistRecipe {
        let matrix = match *self {
            TwistRecipe::Identity => [[1.0, 0.0], [0.0, 1.0]],
            TwistRecipe::Linear { matrix } => matrix,
            TwistRecipe::KickDrift { k, t, .. } => [[1.0 + t * k, t], [k, 1.0]],
        };
        TwistRecipe::Linear { matrix }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Ball { center: [f64; 2], radius: f64 },
    Box { center: [f64; 2], half: [f64; 2] },
}

impl Shape {
    fn mask(&self, spec: &GridSpec) -> Vec<bool> {
        match self {
            Shape::Ball { center, radius } => ball_mask(spec, center, *radius),
            Shape::Box { center, half } => box_mask(spec, center, half),
        }
    }
}

/// `K ⊂ U` and the margin δ.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsCfg {
    pub k: Shape,
    pub u: Shape,
    pub delta: f64,
}

impl RegionsCfg {
    pub fn build(&self, spec: &GridSpec) -> conpaste::Result<RegionSet> {
        let desc = serde_json::to_value(self).unwrap_or_default();
        Ok(nested_regions(spec, &self.k.mask(spec), &self.u.mask(spec), self.delta)?.with_description(desc))
    }
}
