//! JSON run configuration and scenario construction.
//!
//! Unknown keys anywhere in the configuration are a hard error so that a
//! typo in an exponent-critical parameter cannot silently fall back to a
//! default. Initial data is generated from the seed exactly once per
//! scenario; reruns with the same config and seed are bit-identical.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::model::{
    InitialData, ModelParams, PotentialSpec, SensitivityFamily, SensitivitySpec,
};
use crate::stokes::StokesSolver;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Identifier of the seeded generator recorded in run outputs.
pub const RNG_ALGORITHM: &str = "chacha12";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub m: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub dim: usize,
    #[serde(default = "one")]
    pub c_d_lower: f64,
    #[serde(default = "one")]
    pub c_d_upper: f64,
    pub sensitivity: SensitivityConfig,
    pub grad_phi: Vec<f64>,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub init: InitConfig,
    #[serde(default)]
    pub solvers: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    /// allow runs below the m > 10/9 threshold
    #[serde(default)]
    pub override_regime: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub family: SensitivityFamily,
    /// polynomial coefficients of the bound S_0(c), constant term first
    pub s0: Vec<f64>,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    pub extents: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
    #[serde(default)]
    pub fixed_dt: Option<f64>,
}

fn default_safety() -> f64 {
    0.9
}

fn default_max_halvings() -> u32 {
    10
}

/// Initial data preset. Fields not used by a preset must stay at their
/// defaults; presets validate what they read.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub preset: InitPreset,
    #[serde(default = "one")]
    pub n_base: f64,
    #[serde(default)]
    pub n_amp: f64,
    #[serde(default = "one")]
    pub c_base: f64,
    #[serde(default)]
    pub c_amp: f64,
    #[serde(default)]
    pub u_amp: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// lowest wavenumber used by the random preset
    #[serde(default = "default_mode_min")]
    pub mode_min: usize,
    /// gaussian preset: bump width
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// self-similar preset: profile constant and initial profile time
    #[serde(default = "default_profile_c")]
    pub profile_c: f64,
    #[serde(default = "default_profile_t0")]
    pub profile_t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPreset {
    Uniform,
    RandomSmooth,
    GaussianBump,
    SelfSimilar,
}

fn default_modes() -> usize {
    3
}

fn default_mode_min() -> usize {
    1
}

fn default_sigma() -> f64 {
    0.1
}

fn default_profile_c() -> f64 {
    0.25
}

fn default_profile_t0() -> f64 {
    0.016
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub poisson_tol: f64,
    pub poisson_max_iter: usize,
    pub yosida_tol: f64,
    pub yosida_max_iter: usize,
    /// looser tolerance for the resolvent solve inside velocity steps
    pub yosida_step_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            poisson_tol: 1e-10,
            poisson_max_iter: 10_000,
            yosida_tol: 1e-9,
            yosida_max_iter: 200,
            yosida_step_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub cadence: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { cadence: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("config parse error: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.m,
            self.kappa,
            self.c_d_lower,
            self.c_d_upper,
            self.epsilon,
            self.dim,
        )
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.grid.dims, &self.grid.extents)
    }

    pub fn sensitivity_spec(&self) -> Result<SensitivitySpec> {
        SensitivitySpec::new(
            self.sensitivity.family,
            self.sensitivity.s0.clone(),
            self.sensitivity.theta,
            self.sensitivity.axis,
        )
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        PotentialSpec::constant(self.dim, &self.grad_phi)
    }

    /// Generate the initial triple from the seed. The velocity projection
    /// uses the supplied solver so the data is divergence free on this grid.
    pub fn initial_data(&self, solver: &StokesSolver) -> Result<InitialData> {
        let grid = self.grid()?;
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        let init = &self.init;
        match init.preset {
            InitPreset::Uniform => {
                check_amp("n_base", init.n_base)?;
                check_amp("c_base", init.c_base)?;
                Ok(InitialData {
                    n0: ScalarField::constant(grid, init.n_base),
                    c0: ScalarField::constant(grid, init.c_base),
                    u0: VectorField::zeros(grid),
                })
            }
            InitPreset::RandomSmooth => {
                if !(0.0..=1.0).contains(&init.n_amp) || !(0.0..=1.0).contains(&init.c_amp) {
                    return Err(Error::Validation(
                        "random_smooth amplitudes must lie in [0, 1]".into(),
                    ));
                }
                if init.mode_min == 0 || init.mode_min > init.modes.max(1) {
                    return Err(Error::Validation(
                        "mode_min must lie in [1, modes]".into(),
                    ));
                }
                let n0 = random_smooth_scalar(
                    grid,
                    &mut rng,
                    init.mode_min,
                    init.modes,
                    init.n_base,
                    init.n_amp,
                );
                let c0 = random_smooth_scalar(
                    grid,
                    &mut rng,
                    init.mode_min,
                    init.modes,
                    init.c_base,
                    init.c_amp,
                );
                let u0 = if init.u_amp > 0.0 {
                    random_divfree_velocity(grid, &mut rng, init.modes, init.u_amp, solver)?
                } else {
                    VectorField::zeros(grid)
                };
                Ok(InitialData { n0, c0, u0 })
            }
            InitPreset::GaussianBump => {
                let ext = grid.extents();
                let center = [ext[0] / 2.0, ext[1] / 2.0, ext[2] / 2.0];
                let sig2 = 2.0 * init.sigma * init.sigma;
                let n0 = ScalarField::from_fn(grid, |x| {
                    let mut r2 = 0.0;
                    for a in 0..grid.dim() {
                        r2 += (x[a] - center[a]).powi(2);
                    }
                    init.n_base + init.n_amp * (-r2 / sig2).exp()
                });
                Ok(InitialData {
                    n0,
                    c0: ScalarField::constant(grid, init.c_base),
                    u0: VectorField::zeros(grid),
                })
            }
            InitPreset::SelfSimilar => {
                // 1D compactly supported self-similar profile along x,
                // uniform in the transverse directions
                let m = self.m;
                if m <= 1.0 {
                    return Err(Error::Validation(
                        "self_similar preset requires m > 1".into(),
                    ));
                }
                let tau0 = init.profile_t0;
                let c_prof = init.profile_c;
                let center = grid.extents()[0] / 2.0;
                let n0 = ScalarField::from_fn(grid, |x| {
                    barenblatt_profile(x[0] - center, tau0, m, c_prof)
                });
                Ok(InitialData {
                    n0,
                    c0: ScalarField::constant(grid, init.c_base),
                    u0: VectorField::zeros(grid),
                })
            }
        }
    }
}

fn check_amp(name: &str, v: f64) -> Result<()> {
    if v < 0.0 || !v.is_finite() {
        return Err(Error::Validation(format!(
            "{name} must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

/// Self-similar source solution of `v_t = Lap(v^m)` in one dimension:
/// `v(x, tau) = tau^(-a) (C - k xi^2)_+^(1/(m-1))` with `xi = x tau^(-a)`,
/// `a = 1/(m+1)`, `k = a (m-1) / (2m)`.
pub fn barenblatt_profile(x: f64, tau: f64, m: f64, c_const: f64) -> f64 {
    let alpha = 1.0 / (m + 1.0);
    let k = alpha * (m - 1.0) / (2.0 * m);
    let xi = x / tau.powf(alpha);
    let core = c_const - k * xi * xi;
    if core <= 0.0 {
        0.0
    } else {
        tau.powf(-alpha) * core.powf(1.0 / (m - 1.0))
    }
}

/// Random low-mode cosine series: `base * (1 + amp * T(x))` with
/// `max |T| <= 1`, zero normal derivative at the walls.
fn random_smooth_scalar(
    grid: Grid,
    rng: &mut ChaCha12Rng,
    mode_min: usize,
    modes: usize,
    base: f64,
    amp: f64,
) -> ScalarField {
    let dim = grid.dim();
    let ext = grid.extents();
    // draw coefficients in a fixed order
    let mut coeffs = Vec::new();
    let max_k = modes.max(1);
    let floor_k = mode_min.min(max_k);
    let mut ks = Vec::new();
    for kx in 0..=max_k {
        for ky in 0..=max_k {
            for kz in 0..=(if dim == 3 { max_k } else { 0 }) {
                if kx + ky + kz == 0 {
                    continue;
                }
                if kx.max(ky).max(kz) < floor_k {
                    continue;
                }
                let knorm = (kx * kx + ky * ky + kz * kz) as f64;
                coeffs.push(rng.random_range(-1.0..1.0) / (1.0 + knorm));
                ks.push([kx, ky, kz]);
            }
        }
    }
    let pi = std::f64::consts::PI;
    let mut raw = ScalarField::from_fn(grid, |x| {
        let mut acc = 0.0;
        for (a, k) in coeffs.iter().zip(&ks) {
            let mut term = *a;
            for axis in 0..dim {
                term *= (pi * k[axis] as f64 * x[axis] / ext[axis]).cos();
            }
            acc += term;
        }
        acc
    });
    let peak = raw.max_abs();
    if peak > 0.0 {
        raw.scale(1.0 / peak);
    }
    let mut out = raw;
    for v in out.data_mut() {
        *v = base * (1.0 + amp * *v);
    }
    out
}

/// Random smooth velocity, projected to the divergence-free subspace and
/// rescaled to the requested maximum amplitude.
fn random_divfree_velocity(
    grid: Grid,
    rng: &mut ChaCha12Rng,
    modes: usize,
    amp: f64,
    solver: &StokesSolver,
) -> Result<VectorField> {
    let dim = grid.dim();
    let ext = grid.extents();
    let pi = std::f64::consts::PI;
    let max_k = modes.max(1);
    let mut fields = Vec::new();
    for _ in 0..dim {
        let mut coeffs = Vec::new();
        let mut ks = Vec::new();
        for kx in 1..=max_k {
            for ky in 1..=max_k {
                for kz in 1..=(if dim == 3 { max_k } else { 1 }) {
                    let knorm = (kx * kx + ky * ky + kz * kz) as f64;
                    coeffs.push(rng.random_range(-1.0..1.0) / knorm);
                    ks.push([kx, ky, kz]);
                }
            }
        }
        fields.push((coeffs, ks));
    }
    let v = VectorField::from_fn(grid, |axis, x| {
        let (coeffs, ks) = &fields[axis];
        let mut acc = 0.0;
        for (a, k) in coeffs.iter().zip(ks) {
            let mut term = *a;
            for b in 0..dim {
                term *= (pi * k[b] as f64 * x[b] / ext[b]).sin();
            }
            acc += term;
        }
        acc
    });
    let (mut u, _) = solver.project(&v)?;
    let peak = u.max_abs();
    if peak > 0.0 {
        u.scale(amp / peak);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::divergence;

    fn minimal_json() -> String {
        r#"{
            "m": 1.5,
            "kappa": 1.0,
            "epsilon": 0.1,
            "dim": 2,
            "sensitivity": {"family": "rotational", "s0": [0.0, 1.0], "theta": 1.5707963267948966},
            "grad_phi": [0.0, -1.0],
            "grid": {"dims": [16, 16], "extents": [1.0, 1.0]},
            "time": {"horizon": 0.1},
            "init": {"preset": "random_smooth", "n_base": 1.0, "n_amp": 0.2, "c_base": 0.5, "c_amp": 0.2},
            "output": {"dir": "out/test"},
            "seed": 7
        }"#
        .to_string()
    }

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(cfg.dim, 2);
        assert_eq!(cfg.solvers.yosida_max_iter, 200);
        assert_eq!(cfg.diagnostics.cadence, 10);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let bad = minimal_json().replace("\"kappa\"", "\"kapa\"");
        assert!(RunConfig::from_json(&bad).is_err());
        let nested = minimal_json().replace("\"theta\"", "\"thetaa\"");
        assert!(RunConfig::from_json(&nested).is_err());
    }

    #[test]
    fn initial_data_is_seed_deterministic() {
        let cfg = RunConfig::from_json(&minimal_json()).unwrap();
        let grid = cfg.grid().unwrap();
        let solver = StokesSolver::new(grid, 1e-10, 1000);
        let a = cfg.initial_data(&solver).unwrap();
        let b = cfg.initial_data(&solver).unwrap();
        assert_eq!(a.n0.data(), b.n0.data());
        assert_eq!(a.c0.data(), b.c0.data());
    }

    #[test]
    fn random_velocity_is_divergence_free_and_bounded() {
        let mut json: serde_json::Value = serde_json::from_str(&minimal_json()).unwrap();
        json["init"]["u_amp"] = serde_json::json!(0.3);
        let cfg = RunConfig::from_json(&json.to_string()).unwrap();
        let grid = cfg.grid().unwrap();
        let solver = StokesSolver::new(grid, 1e-10, 1000);
        let init = cfg.initial_data(&solver).unwrap();
        assert!(divergence(&init.u0).max_abs() < 1e-10);
        assert!((init.u0.max_abs() - 0.3).abs() < 1e-12);
        assert!(init.n0.min() > 0.0);
    }

    #[test]
    fn barenblatt_mass_is_time_invariant() {
        // numerically integrate the profile at two times
        let m = 2.0;
        let c = 0.25;
        let mass = |tau: f64| {
            let mut acc = 0.0;
            let n = 200_000;
            let l = 1.0;
            let dx = 2.0 * l / n as f64;
            for i in 0..n {
                let x = -l + (i as f64 + 0.5) * dx;
                acc += barenblatt_profile(x, tau, m, c) * dx;
            }
            acc
        };
        let m1 = mass(0.01);
        let m2 = mass(0.02);
        assert!((m1 - m2).abs() < 1e-6 * m1, "{m1} vs {m2}");
    }
}
