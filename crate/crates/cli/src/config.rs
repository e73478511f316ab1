//! Sectioned TOML experiment configuration. Every sweep list must be
//! nonempty and sorted; sweep cross-products are bounded by `mc.max_jobs`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use splap::grid::{SubdomainMask, WeightKind};
use splap::model::{ModelSpec, OperatorFamily};
use splap::noise::{NoiseFamily, NoiseModel};
use splap::solver::{InitialData, SolverConfig};
use splap::EstimatorConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub d: usize,
    #[serde(default = "one")]
    pub target_dim: usize,
    pub p: f64,
    #[serde(default = "default_family")]
    pub family: OperatorFamily,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub epsilon_sweep: Option<Vec<f64>>,
    pub t_final: f64,
}

fn one() -> usize {
    1
}

fn default_family() -> OperatorFamily {
    OperatorFamily::PLaplacian
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_sweep: Option<Vec<usize>>,
    /// Interior margin of G' = [margin, 1-margin]^d.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_weight")]
    pub weight_kind: WeightKind,
}

fn default_margin() -> f64 {
    0.125
}

fn default_weight() -> WeightKind {
    WeightKind::SharpIndicator
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    #[serde(default = "default_noise_family")]
    pub family: NoiseFamily,
    #[serde(default = "default_k")]
    pub k_modes: usize,
    #[serde(default)]
    pub k_sweep: Option<Vec<usize>>,
    /// Spectral decay s in a_k = amplitude * k^{-s}.
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Saturation scale of the modulated family.
    #[serde(default = "default_m_sat")]
    pub m_sat: f64,
}

fn default_noise_family() -> NoiseFamily {
    NoiseFamily::SpatiallyModulated
}
fn default_k() -> usize {
    16
}
fn default_decay() -> f64 {
    2.0
}
fn default_amplitude() -> f64 {
    0.1
}
fn default_m_sat() -> f64 {
    10.0
}

impl Default for NoiseBlock {
    fn default() -> Self {
        NoiseBlock {
            family: default_noise_family(),
            k_modes: default_k(),
            k_sweep: None,
            decay: default_decay(),
            amplitude: default_amplitude(),
            m_sat: default_m_sat(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub tau_sweep: Option<Vec<f64>>,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
}

fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_max_iter() -> usize {
    50
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    #[serde(default = "default_n_paths")]
    pub n_paths: u64,
    #[serde(default)]
    pub base_seed: u64,
    /// Cap on the sweep cross-product size.
    #[serde(default = "default_max_jobs")]
    pub max_jobs: usize,
}

fn default_n_paths() -> u64 {
    100
}
fn default_max_jobs() -> usize {
    64
}

impl Default for McBlock {
    fn default() -> Self {
        McBlock { n_paths: default_n_paths(), base_seed: 0, max_jobs: default_max_jobs() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsBlock {
    #[serde(default = "default_dir")]
    pub directory: String,
    /// Write a final-state field snapshot CSV for path 0.
    #[serde(default)]
    pub dump_fields: bool,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputsBlock {
    fn default() -> Self {
        OutputsBlock { directory: default_dir(), dump_fields: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalsBlock {
    #[serde(default = "yes")]
    pub energy_triple: bool,
    #[serde(default = "yes")]
    pub natural_regularity: bool,
    #[serde(default)]
    pub higher_integrability_q: Vec<f64>,
    #[serde(default)]
    pub higher_moments_q: Vec<f64>,
}

fn yes() -> bool {
    true
}

impl Default for FunctionalsBlock {
    fn default() -> Self {
        FunctionalsBlock {
            energy_triple: true,
            natural_regularity: true,
            higher_integrability_q: Vec::new(),
            higher_moments_q: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HlBlock {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_ls")]
    pub ls: Vec<f64>,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
}

fn default_alphas() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 5.0]
}
fn default_ls() -> Vec<f64> {
    vec![10.0, 20.0, 40.0]
}
fn default_n_grid() -> usize {
    10_000
}

impl Default for HlBlock {
    fn default() -> Self {
        HlBlock { alphas: default_alphas(), ls: default_ls(), n_grid: default_n_grid() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoserBlock {
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Run higher_integrability at the first `rungs` ladder exponents.
    #[serde(default)]
    pub evaluate_rungs: bool,
    #[serde(default = "default_rungs")]
    pub rungs: usize,
}

fn default_k_max() -> usize {
    4
}
fn default_rungs() -> usize {
    3
}

impl Default for MoserBlock {
    fn default() -> Self {
        MoserBlock { k_max: default_k_max(), evaluate_rungs: false, rungs: default_rungs() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_k_probe")]
    pub k_probe: Vec<usize>,
}

fn default_n_samples() -> usize {
    20_000
}
fn default_k_probe() -> Vec<usize> {
    vec![1, 2, 4, 8, 16]
}

impl Default for BoundsBlock {
    fn default() -> Self {
        BoundsBlock { n_samples: default_n_samples(), k_probe: default_k_probe() }
    }
}

fn default_initial() -> InitialData {
    InitialData::Sine { amplitude: 1.0 }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub noise: NoiseBlock,
    pub solver: SolverBlock,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    #[serde(default)]
    pub outputs: OutputsBlock,
    #[serde(default)]
    pub functionals: FunctionalsBlock,
    #[serde(default)]
    pub hl: HlBlock,
    #[serde(default)]
    pub moser: MoserBlock,
    #[serde(default)]
    pub bounds: BoundsBlock,
}

fn sorted_desc(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.epsilon.is_some() && self.model.epsilon_sweep.is_some() {
            bail!("set model.epsilon or model.epsilon_sweep, not both");
        }
        if let Some(sweep) = &self.model.epsilon_sweep {
            if sweep.is_empty() || !sorted_desc(sweep) {
                bail!("model.epsilon_sweep must be nonempty and strictly decreasing");
            }
        }
        if self.grid.n.is_none() && self.grid.n_sweep.is_none() {
            bail!("grid.n or grid.n_sweep is required");
        }
        if let Some(sweep) = &self.grid.n_sweep {
            if sweep.is_empty() || !sweep.windows(2).all(|w| w[1] > w[0]) {
                bail!("grid.n_sweep must be nonempty and strictly increasing");
            }
        }
        if self.solver.tau.is_none() && self.solver.tau_sweep.is_none() {
            bail!("solver.tau or solver.tau_sweep is required");
        }
        if let Some(sweep) = &self.solver.tau_sweep {
            if sweep.is_empty() || !sorted_desc(sweep) {
                bail!("solver.tau_sweep must be nonempty and strictly decreasing");
            }
        }
        if let Some(sweep) = &self.noise.k_sweep {
            if sweep.is_empty() || !sweep.windows(2).all(|w| w[1] > w[0]) {
                bail!("noise.k_sweep must be nonempty and strictly increasing");
            }
        }
        let jobs = self.model.epsilon_sweep.as_ref().map_or(1, Vec::len)
            * self.grid.n_sweep.as_ref().map_or(1, Vec::len)
            * self.solver.tau_sweep.as_ref().map_or(1, Vec::len)
            * self.noise.k_sweep.as_ref().map_or(1, Vec::len);
        if jobs > self.mc.max_jobs {
            bail!("sweep cross-product {} exceeds mc.max_jobs = {}", jobs, self.mc.max_jobs);
        }
        if self.mc.n_paths == 0 {
            bail!("mc.n_paths must be >= 1");
        }
        Ok(())
    }

    /// Scalar model for non-sweep commands; epsilon defaults to 0 for p >= 2.
    pub fn model_spec(&self, epsilon: f64) -> Result<ModelSpec> {
        let spec = ModelSpec {
            d: self.model.d,
            target_dim: self.model.target_dim,
            p: self.model.p,
            family: self.model.family,
            epsilon,
            t_final: self.model.t_final,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn scalar_epsilon(&self) -> Result<f64> {
        if let Some(e) = self.model.epsilon {
            return Ok(e);
        }
        if self.model.epsilon_sweep.is_some() {
            bail!("this command needs a scalar model.epsilon, not a sweep");
        }
        if self.model.p >= 2.0 {
            Ok(0.0)
        } else {
            bail!("p < 2 requires model.epsilon (or an epsilon_sweep study)");
        }
    }

    pub fn scalar_n(&self) -> Result<usize> {
        self.grid.n.ok_or_else(|| anyhow::anyhow!("this command needs a scalar grid.n"))
    }

    pub fn scalar_tau(&self) -> Result<f64> {
        self.solver.tau.ok_or_else(|| anyhow::anyhow!("this command needs a scalar solver.tau"))
    }

    pub fn noise_model(&self, k_modes: usize) -> NoiseModel {
        NoiseModel {
            family: self.noise.family,
            k_modes,
            decay: self.noise.decay,
            amplitude: self.noise.amplitude,
            m_sat: self.noise.m_sat,
        }
    }

    pub fn solver_config(&self, tau: f64) -> Result<SolverConfig> {
        let t = self.model.t_final;
        let n_steps = (t / tau).round();
        if !(n_steps >= 1.0) || (n_steps * tau - t).abs() > 1e-9 * t {
            bail!("t_final = {} is not an integer multiple of tau = {}", t, tau);
        }
        let cfg = SolverConfig {
            newton_tol: self.solver.newton_tol,
            newton_max_iter: self.solver.newton_max_iter,
            ..SolverConfig::new(tau, n_steps as usize)
        };
        cfg.validate(t)?;
        Ok(cfg)
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig> {
        let mask = SubdomainMask::new(self.grid.margin, self.grid.weight_kind)
            .map_err(|e| anyhow::anyhow!("{}", e))?;
        Ok(EstimatorConfig {
            mask,
            energy_triple: self.functionals.energy_triple,
            natural_regularity: self.functionals.natural_regularity,
            higher_integrability_q: self.functionals.higher_integrability_q.clone(),
            higher_moments_q: self.functionals.higher_moments_q.clone(),
        })
    }
}
