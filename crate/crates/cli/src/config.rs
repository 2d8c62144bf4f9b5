//! Run configuration: a single TOML document per run. See `CONFIG.md` in
//! this crate for the field reference.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use varhjb::cost::{ControlCost, JumpDvCost, ZeroCost};
use varhjb::grid::{GridFunction, ScalarField, SmoothField};
use varhjb::hamiltonian::HamiltonianModel;
use varhjb::io::{read_grid_function, read_rate_table};
use varhjb::jump::{JumpRateField, RateFamily};
use varhjb::lattice::Lattice;
use varhjb::models::birth_death::{make_one_sided_model, make_two_sided_model};
use varhjb::models::flux::{make_flux_model, FluxSpec, MixtureKernel};
use varhjb::models::quadratic::{
    default_quadratic_spec, make_quadratic_model, quadratic_eigen_hamiltonian, QuadraticLambda, QuadraticSpec, QuadraticState,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    EvalHam,
    Lagrangian,
    Resolvent,
    Verify,
    Doubling,
    Counterexample,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::EvalHam => "eval-ham",
            Task::Lagrangian => "lagrangian",
            Task::Resolvent => "resolvent",
            Task::Verify => "verify",
            Task::Doubling => "doubling",
            Task::Counterexample => "counterexample",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Absent only for `counterexample`, which fixes its own model.
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub lagrangian: LagrangianConfig,
    #[serde(default)]
    pub resolvent: ResolventConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub doubling: DoublingConfig,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
}

/// Model block. Every parameter is optional and defaults to the shipped
/// instance of the family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    QuadraticJump {
        #[serde(default = "one")]
        dim: usize,
        states: Option<Vec<QuadraticState>>,
        box_radius: Option<f64>,
        rates: Option<RateFamily>,
        /// CSV rate table, relative to the config file.
        rates_csv: Option<PathBuf>,
    },
    FluxMeanfield {
        species: Option<usize>,
        bonds: Option<Vec<(usize, usize)>>,
        flux_box: Option<f64>,
        /// Bonds x controls table of mixture rates.
        kernel_rates: Option<Vec<Vec<f64>>>,
        coupling: Option<f64>,
        /// Occupation cost rates on the controls; `"zero"` for no cost.
        cost: Option<FluxCost>,
    },
    #[serde(rename = "birth-death-1s")]
    BirthDeathOneSided {
        #[serde(default)]
        mirrored: bool,
        #[serde(default = "five")]
        box_upper: f64,
    },
    #[serde(rename = "birth-death-2s")]
    BirthDeathTwoSided {
        #[serde(default = "unit_rates")]
        up: Vec<f64>,
        #[serde(default = "unit_rates")]
        down: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", untagged)]
pub enum FluxCost {
    Zero(ZeroTag),
    Jump(RateFamily),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroTag {
    Zero,
}

fn one() -> usize {
    1
}

fn five() -> f64 {
    5.0
}

fn unit_rates() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub probes: usize,
    pub p_max: f64,
    pub tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            probes: 10,
            p_max: 3.0,
            tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LagrangianConfig {
    pub probes: usize,
    pub v_max: f64,
    pub p_radius: f64,
    pub tol: f64,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        Self {
            probes: 10,
            v_max: 1.0,
            p_radius: 50.0,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolventMethod {
    Grid,
    Trajectory,
    Both,
}

/// Right-hand side `h`. `sine` is `offset + amplitude * mean_i sin(frequency x_i + phase)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RhsConfig {
    Constant {
        value: f64,
    },
    Gaussian {
        amplitude: f64,
        #[serde(default = "unit")]
        width: f64,
        #[serde(default)]
        offset: f64,
    },
    Sine {
        amplitude: f64,
        #[serde(default = "unit")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// A grid function written by a previous run, with its sidecar.
    Csv {
        path: PathBuf,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventConfig {
    pub lambda: f64,
    pub method: ResolventMethod,
    /// Nodes per axis of the grid.
    pub nodes: Vec<usize>,
    pub rhs: RhsConfig,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Trajectory starts, spread over the verification box.
    pub probes: usize,
    pub intervals: usize,
    pub tail_tol: f64,
    /// Largest relative gap between the methods counted as agreement.
    pub agreement_tol: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            method: ResolventMethod::Grid,
            nodes: vec![401],
            rhs: RhsConfig::Gaussian {
                amplitude: 0.5,
                width: 1.0,
                offset: 0.0,
            },
            tol: 1e-9,
            max_sweeps: 20_000,
            probes: 10,
            intervals: 40,
            tail_tol: 1e-6,
            agreement_tol: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub states: usize,
    pub lambda_triples: usize,
    pub hamiltonian_triples: usize,
    pub per_face: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            states: 24,
            lambda_triples: 2000,
            hamiltonian_triples: 10_000,
            per_face: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoublingConfig {
    pub lambda: f64,
    pub nodes: Vec<usize>,
    pub rhs1: RhsConfig,
    pub rhs2: RhsConfig,
    pub epsilons: Vec<f64>,
    /// One weight vector per step; scalars for single penalizations.
    pub alphas: Option<Vec<Vec<f64>>>,
}

impl Default for DoublingConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            nodes: vec![401],
            rhs1: RhsConfig::Gaussian {
                amplitude: 0.5,
                width: 1.0,
                offset: -0.2,
            },
            rhs2: RhsConfig::Sine {
                amplitude: 0.1,
                frequency: 1.0,
                phase: 0.0,
                offset: 0.0,
            },
            epsilons: vec![0.1, 0.01],
            alphas: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    pub alpha_max: f64,
    /// Bound on `|difference + 1|` at `alpha_max`.
    pub tol: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            alpha_max: 1e8,
            tol: 2e-7,
        }
    }
}

/// Parses and validates. The first violation is reported.
pub fn parse(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).context("invalid config")?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("invalid config: {name} must be positive and finite, got {v}");
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "invalid config: schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if self.model.is_none() && self.task != Task::Counterexample {
            bail!("invalid config: task {} needs a [model] block", self.task.name());
        }
        match self.task {
            Task::EvalHam => {
                positive("eval.p_max", self.eval.p_max)?;
                positive("eval.tol", self.eval.tol)?;
            }
            Task::Lagrangian => {
                positive("lagrangian.v_max", self.lagrangian.v_max)?;
                positive("lagrangian.p_radius", self.lagrangian.p_radius)?;
                positive("lagrangian.tol", self.lagrangian.tol)?;
            }
            Task::Resolvent => {
                let r = &self.resolvent;
                positive("resolvent.lambda", r.lambda)?;
                positive("resolvent.tol", r.tol)?;
                positive("resolvent.tail_tol", r.tail_tol)?;
                if r.nodes.iter().any(|n| *n < 2) {
                    bail!("invalid config: resolvent.nodes entries must be at least 2");
                }
                if r.method != ResolventMethod::Grid && (r.probes == 0 || r.intervals == 0) {
                    bail!("invalid config: trajectory runs need resolvent.probes and resolvent.intervals > 0");
                }
            }
            Task::Doubling => {
                let d = &self.doubling;
                positive("doubling.lambda", d.lambda)?;
                if d.epsilons.is_empty() || d.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                    bail!("invalid config: doubling.epsilons must lie in (0, 1)");
                }
                if let Some(a) = &d.alphas {
                    if a.is_empty() || a.iter().flatten().any(|v| !(*v > 0.0 && v.is_finite())) {
                        bail!("invalid config: doubling.alphas must be positive");
                    }
                }
            }
            Task::Counterexample => {
                let c = &self.counterexample;
                if !(c.alpha_max >= 10.0 && c.alpha_max.is_finite()) {
                    bail!("invalid config: counterexample.alpha_max must be finite and at least 10");
                }
                positive("counterexample.tol", c.tol)?;
            }
            Task::Verify => {}
        }
        Ok(())
    }
}

impl RunConfig {
    /// Files the run reads besides the config, resolved against `base`.
    pub fn input_files(&self, base: &Path) -> Vec<PathBuf> {
        let mut files = Vec::new();
        if let Some(ModelConfig::QuadraticJump { rates_csv: Some(p), .. }) = &self.model {
            files.push(resolve(base, p));
        }
        let rhs: &[&RhsConfig] = match self.task {
            Task::Resolvent => &[&self.resolvent.rhs],
            Task::Doubling => &[&self.doubling.rhs1, &self.doubling.rhs2],
            _ => &[],
        };
        for r in rhs {
            if let RhsConfig::Csv { path } = r {
                let p = resolve(base, path);
                files.push(varhjb::io::meta_path(&p));
                files.push(p);
            }
        }
        files
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Pieces of a quadratic-jump model needed for the eigenvalue cross-check.
pub struct EigenOracle {
    pub lambda: QuadraticLambda,
    /// `None` for a single jump state.
    pub rates: Option<JumpRateField>,
}

impl EigenOracle {
    pub fn value(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        Ok(match &self.rates {
            Some(r) => quadratic_eigen_hamiltonian(&self.lambda, r, x, p)?,
            None => self.lambda.potential(x, p)[0],
        })
    }
}

pub struct BuiltModel {
    pub model: HamiltonianModel,
    pub eigen: Option<EigenOracle>,
}

/// Builds the model. `base` is the directory of the config file.
pub fn build_model(cfg: &ModelConfig, seed: u64, base: &Path) -> Result<BuiltModel> {
    let mut eigen = None;
    let model = match cfg {
        ModelConfig::QuadraticJump {
            dim,
            states,
            box_radius,
            rates,
            rates_csv,
        } => {
            let defaults = states.is_none() && rates.is_none() && rates_csv.is_none();
            let mut spec = match states {
                Some(s) => QuadraticSpec {
                    dim: *dim,
                    states: s.clone(),
                    box_radius: 5.0,
                },
                None => default_quadratic_spec(*dim),
            };
            if let Some(r) = box_radius {
                spec.box_radius = *r;
            }
            let field = match (rates, rates_csv) {
                (Some(_), Some(_)) => bail!("invalid config: give model.rates or model.rates_csv, not both"),
                (Some(f), None) => Some(JumpRateField::new(f.clone())?),
                (None, Some(p)) => Some(JumpRateField::new(read_rate_table(&resolve(base, p))?)?),
                (None, None) if defaults => Some(JumpRateField::new(default_quadratic_rates(*dim))?),
                (None, None) => None,
            };
            let model = make_quadratic_model(&spec, field.clone())?;
            eigen = Some(EigenOracle {
                lambda: QuadraticLambda::new(&spec)?,
                rates: field,
            });
            model
        }
        ModelConfig::FluxMeanfield {
            species,
            bonds,
            flux_box,
            kernel_rates,
            coupling,
            cost,
        } => {
            let species = species.unwrap_or(3);
            let bonds = bonds.clone().unwrap_or_else(|| (0..species).map(|a| (a, (a + 1) % species)).collect());
            let spec = FluxSpec {
                species,
                bonds,
                flux_box: flux_box.unwrap_or(5.0),
            };
            spec.validate()?;
            let kernel_rates = match kernel_rates {
                Some(k) => k.clone(),
                None if spec.bonds.len() == 3 => vec![vec![1.0, 2.0], vec![0.5, 1.5], vec![1.2, 0.8]],
                None => spec.bonds.iter().map(|_| vec![1.0, 2.0]).collect(),
            };
            let kernel = MixtureKernel::new(kernel_rates, coupling.unwrap_or(0.5))?;
            let controls = kernel.rates[0].len();
            let cost: Arc<dyn ControlCost> = match cost {
                Some(FluxCost::Zero(_)) => Arc::new(ZeroCost { controls }),
                Some(FluxCost::Jump(f)) => Arc::new(JumpDvCost::new(JumpRateField::new(f.clone())?)),
                None if controls == 2 => {
                    let mut wavevector = vec![0.0; spec.dim()];
                    wavevector[..3.min(species)].copy_from_slice(&[1.0, -1.0, 0.5][..3.min(species)]);
                    Arc::new(JumpDvCost::new(JumpRateField::new(RateFamily::Sinusoidal {
                        base: vec![vec![0.0, 1.0], vec![2.0, 0.0]],
                        amplitude: vec![vec![0.0, 0.3], vec![0.3, 0.0]],
                        wavevector,
                        phase: 0.0,
                    })?))
                }
                None => bail!("invalid config: model.cost is required when the kernel has {controls} controls"),
            };
            make_flux_model(&spec, Arc::new(kernel), cost, seed)?
        }
        ModelConfig::BirthDeathOneSided { mirrored, box_upper } => {
            positive("model.box_upper", *box_upper)?;
            make_one_sided_model(*mirrored, *box_upper)?
        }
        ModelConfig::BirthDeathTwoSided { up, down } => make_two_sided_model(up.clone(), down.clone())?,
    };
    Ok(BuiltModel { model, eigen })
}

fn default_quadratic_rates(dim: usize) -> RateFamily {
    RateFamily::Sinusoidal {
        base: vec![vec![0.0, 1.0], vec![2.0, 0.0]],
        amplitude: vec![vec![0.0, 0.3], vec![0.3, 0.0]],
        wavevector: vec![0.8; dim],
        phase: 0.0,
    }
}

/// Samples the right-hand side on `lattice`. CSV inputs must live on the
/// same lattice.
pub fn rhs_on(rhs: &RhsConfig, lattice: &Lattice, base: &Path) -> Result<GridFunction> {
    match rhs {
        RhsConfig::Csv { path } => {
            let (f, _) = read_grid_function(&resolve(base, path))?;
            if &f.lattice != lattice {
                bail!("right-hand side {} is not on the configured lattice", path.display());
            }
            Ok(f)
        }
        _ => Ok(GridFunction::sample(lattice.clone(), rhs_field(rhs, lattice.dim(), base)?.as_ref())),
    }
}

/// The right-hand side as a field on the whole space.
pub fn rhs_field(rhs: &RhsConfig, dim: usize, base: &Path) -> Result<Arc<dyn ScalarField>> {
    Ok(match rhs.clone() {
        RhsConfig::Constant { value } => Arc::new(SmoothField::constant(dim, value)),
        RhsConfig::Gaussian { amplitude, width, offset } => {
            positive("rhs.width", width)?;
            Arc::new(
                SmoothField::new(dim, move |x| {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    amplitude * (-r2 / (width * width)).exp() + offset
                })
                .with_bound(amplitude.abs() + offset.abs()),
            )
        }
        RhsConfig::Sine {
            amplitude,
            frequency,
            phase,
            offset,
        } => Arc::new(
            SmoothField::new(dim, move |x| {
                let s: f64 = x.iter().map(|v| (frequency * v + phase).sin()).sum();
                offset + amplitude * s / dim as f64
            })
            .with_bound(amplitude.abs() + offset.abs()),
        ),
        RhsConfig::Csv { path } => Arc::new(read_grid_function(&resolve(base, &path))?.0),
    })
}
