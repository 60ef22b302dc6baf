//! Model parameters, structural hypotheses, and the admissible-exponent table.
//!
//! Everything here is immutable after construction and checked against the
//! standing assumptions: power-law diffusion bracket, tensor sensitivity
//! bounded by a nondecreasing `S_0(c)`, bounded potential gradient, and
//! admissible initial data.

use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::ops::divergence;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

pub const REGIME_THRESHOLD: f64 = 10.0 / 9.0;

/// Physical and analytic parameters of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Diffusion exponent of the porous-medium term.
    pub m: f64,
    /// Strength of the nonlinear fluid convection.
    pub kappa: f64,
    /// Lower diffusion constant (the representative power-law coefficient).
    pub c_d_lower: f64,
    /// Upper diffusion constant; defaults to the lower one.
    pub c_d_upper: f64,
    /// Regularization parameter in (0, 1].
    pub epsilon: f64,
    /// Spatial dimension, 2 or 3.
    pub dim: usize,
}

impl ModelParams {
    pub fn new(
        m: f64,
        kappa: f64,
        c_d_lower: f64,
        c_d_upper: f64,
        epsilon: f64,
        dim: usize,
    ) -> Result<Self> {
        let p = Self {
            m,
            kappa,
            c_d_lower,
            c_d_upper,
            epsilon,
            dim,
        };
        p.check_finite()?;
        Ok(p)
    }

    fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("m", self.m),
            ("kappa", self.kappa),
            ("c_d_lower", self.c_d_lower),
            ("c_d_upper", self.c_d_upper),
            ("epsilon", self.epsilon),
        ] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("parameter {name} is not finite")));
            }
        }
        Ok(())
    }

    /// True when the diffusion exponent lies in the global-existence regime.
    pub fn theorem_regime(&self) -> bool {
        self.m > REGIME_THRESHOLD
    }

    /// True when the porous-medium exponent falls in the upper case split.
    pub fn upper_case(&self) -> bool {
        self.m > 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityFamily {
    /// Diagonal response with Frobenius norm equal to `S_0(c)`.
    Scalar,
    /// Rotation by a fixed angle, rescaled to Frobenius norm `S_0(c)`.
    Rotational,
    /// Diagonal response damped by `1 / (1 + n)`.
    Saturating,
}

/// Tensor-valued chemotactic sensitivity.
///
/// All families are normalized by `sqrt(dim)` so that the Frobenius norm of
/// the evaluated tensor never exceeds the polynomial bound `S_0(c)`; for the
/// scalar and rotational families equality holds. `S_0` has nonnegative
/// coefficients, hence is nondecreasing on `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub family: SensitivityFamily,
    /// Coefficients of `S_0(c) = sum_k s0_coeffs[k] * c^k`, all nonnegative.
    pub s0_coeffs: Vec<f64>,
    /// Rotation angle in radians (rotational family).
    pub rotation_angle: f64,
    /// Rotation axis for 3D rotations; normalized on construction.
    pub rotation_axis: [f64; 3],
}

impl SensitivitySpec {
    pub fn new(
        family: SensitivityFamily,
        s0_coeffs: Vec<f64>,
        rotation_angle: f64,
        rotation_axis: [f64; 3],
    ) -> Result<Self> {
        if s0_coeffs.is_empty() {
            return Err(Error::Validation("S_0 needs at least one coefficient".into()));
        }
        for (k, c) in s0_coeffs.iter().enumerate() {
            if !c.is_finite() || *c < 0.0 {
                return Err(Error::Validation(format!(
                    "S_0 coefficient {k} must be finite and nonnegative, got {c}"
                )));
            }
        }
        if !rotation_angle.is_finite() {
            return Err(Error::Validation("rotation angle must be finite".into()));
        }
        let norm = rotation_axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Validation("rotation axis must be nonzero".into()));
        }
        let rotation_axis = [
            rotation_axis[0] / norm,
            rotation_axis[1] / norm,
            rotation_axis[2] / norm,
        ];
        Ok(Self {
            family,
            s0_coeffs,
            rotation_angle,
            rotation_axis,
        })
    }

    /// Convenience constructor for a constant bound `S_0(c) = s0`.
    pub fn scalar(s0: f64) -> Result<Self> {
        Self::new(SensitivityFamily::Scalar, vec![s0], 0.0, [0.0, 0.0, 1.0])
    }

    /// Evaluate the nondecreasing bound `S_0(c)`.
    pub fn s0(&self, c: f64) -> f64 {
        let mut acc = 0.0;
        for coeff in self.s0_coeffs.iter().rev() {
            acc = acc * c + coeff;
        }
        acc
    }
}

/// Frobenius norm of a `dim x dim` block stored in a 3x3 array.
pub fn frobenius_norm(t: &[[f64; 3]; 3], dim: usize) -> f64 {
    let mut sum = 0.0;
    for row in t.iter().take(dim) {
        for v in row.iter().take(dim) {
            sum += v * v;
        }
    }
    sum.sqrt()
}

/// Evaluate the sensitivity tensor at a point.
///
/// The position argument is part of the interface; the shipped families are
/// homogeneous in space.
pub fn eval_sensitivity(
    spec: &SensitivitySpec,
    dim: usize,
    _x: [f64; 3],
    n: f64,
    c: f64,
) -> Result<[[f64; 3]; 3]> {
    if !(n >= 0.0) || !(c >= 0.0) {
        return Err(Error::Domain(format!(
            "sensitivity requires n >= 0 and c >= 0, got n = {n}, c = {c}"
        )));
    }
    let s0 = spec.s0(c);
    let scale = s0 / (dim as f64).sqrt();
    let mut t = [[0.0f64; 3]; 3];
    match spec.family {
        SensitivityFamily::Scalar => {
            for (a, row) in t.iter_mut().enumerate().take(dim) {
                row[a] = scale;
            }
        }
        SensitivityFamily::Saturating => {
            let damped = scale / (1.0 + n);
            for (a, row) in t.iter_mut().enumerate().take(dim) {
                row[a] = damped;
            }
        }
        SensitivityFamily::Rotational => {
            let r = rotation_matrix(dim, spec.rotation_angle, spec.rotation_axis);
            for a in 0..dim {
                for b in 0..dim {
                    t[a][b] = scale * r[a][b];
                }
            }
        }
    }
    Ok(t)
}

fn rotation_matrix(dim: usize, theta: f64, axis: [f64; 3]) -> [[f64; 3]; 3] {
    let (sin, cos) = theta.sin_cos();
    if dim == 2 {
        let mut r = [[0.0; 3]; 3];
        r[0][0] = cos;
        r[0][1] = -sin;
        r[1][0] = sin;
        r[1][1] = cos;
        r
    } else {
        // Rodrigues formula around the unit axis
        let [ux, uy, uz] = axis;
        let omc = 1.0 - cos;
        [
            [
                cos + ux * ux * omc,
                ux * uy * omc - uz * sin,
                ux * uz * omc + uy * sin,
            ],
            [
                uy * ux * omc + uz * sin,
                cos + uy * uy * omc,
                uy * uz * omc - ux * sin,
            ],
            [
                uz * ux * omc - uy * sin,
                uz * uy * omc + ux * sin,
                cos + uz * uz * omc,
            ],
        ]
    }
}

/// Gravitational (or other) potential gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    /// Spatially constant gradient vector.
    Constant { grad: [f64; 3] },
    /// Gradient sampled on the faces of the grid.
    Sampled { grad: VectorField },
}

impl PotentialSpec {
    pub fn constant(dim: usize, grad: &[f64]) -> Result<Self> {
        if grad.len() != dim {
            return Err(Error::Validation(format!(
                "grad_phi needs {dim} components, got {}",
                grad.len()
            )));
        }
        let mut g = [0.0; 3];
        for (a, v) in grad.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Validation("grad_phi must be finite".into()));
            }
            g[a] = *v;
        }
        Ok(Self::Constant { grad: g })
    }

    /// Proxy for the essential sup of |grad phi| on the grid.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Self::Constant { grad } => grad.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Self::Sampled { grad } => grad.max_abs() * (3.0f64).sqrt(),
        }
    }

    pub fn component(&self, axis: usize, face_value: impl FnOnce() -> f64) -> f64 {
        match self {
            Self::Constant { grad } => grad[axis],
            Self::Sampled { .. } => face_value(),
        }
    }
}

/// Initial triple for the coupled system.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub n0: ScalarField,
    pub c0: ScalarField,
    pub u0: VectorField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Outcome of checking every structural hypothesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
    pub theorem_regime: bool,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(HypothesisCheck {
            name: name.to_string(),
            pass,
            detail,
        });
    }
}

/// Check every hypothesis; non-finite inputs are a hard rejection.
///
/// The report is deterministic: the sensitivity bound is probed on a fixed
/// lattice of `(n, c)` samples rather than random draws.
pub fn validate_params(
    p: &ModelParams,
    s: &SensitivitySpec,
    phi: &PotentialSpec,
    init: &InitialData,
) -> Result<ValidationReport> {
    p.check_finite()?;
    if !init.n0.is_finite() || !init.c0.is_finite() || !init.u0.is_finite() {
        return Err(Error::Validation("initial data contains non-finite values".into()));
    }
    if !phi.sup_norm().is_finite() {
        return Err(Error::Validation("grad_phi is not finite".into()));
    }

    let mut report = ValidationReport {
        checks: Vec::new(),
        theorem_regime: p.theorem_regime(),
        warnings: Vec::new(),
    };

    report.push("m positive", p.m > 0.0, format!("m = {}", p.m));
    report.push(
        "diffusion bracket",
        p.c_d_upper >= p.c_d_lower && p.c_d_lower > 0.0,
        format!("C_D = {}, C_D_upper = {}", p.c_d_lower, p.c_d_upper),
    );
    report.push(
        "epsilon in (0, 1]",
        p.epsilon > 0.0 && p.epsilon <= 1.0,
        format!("epsilon = {}", p.epsilon),
    );
    report.push("dim in {2, 3}", p.dim == 2 || p.dim == 3, format!("dim = {}", p.dim));

    let regime = p.theorem_regime();
    report.push(
        "theorem regime m > 10/9",
        regime,
        format!("m = {}, threshold = {:.6}", p.m, REGIME_THRESHOLD),
    );
    if !regime {
        report
            .warnings
            .push(format!("m = {} is below the global-existence threshold 10/9", p.m));
    }

    // sensitivity bound probed on a fixed lattice
    let mut worst_excess = 0.0f64;
    let samples = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0];
    for &n in &samples {
        for &c in &samples {
            let t = eval_sensitivity(s, p.dim, [0.3, 0.6, 0.1], n, c)?;
            worst_excess = worst_excess.max(frobenius_norm(&t, p.dim) - s.s0(c));
        }
    }
    report.push(
        "|S(x,n,c)| <= S_0(c)",
        worst_excess <= 1e-12,
        format!("worst excess = {worst_excess:.3e}"),
    );
    report.push(
        "S_0 nondecreasing",
        s.s0_coeffs.iter().all(|c| *c >= 0.0),
        "nonnegative polynomial coefficients".to_string(),
    );

    report.push(
        "grad_phi bounded",
        phi.sup_norm().is_finite(),
        format!("sup |grad phi| = {}", phi.sup_norm()),
    );

    let n0_min = init.n0.min();
    report.push("n0 nonnegative", n0_min >= 0.0, format!("min n0 = {n0_min:e}"));
    let c0_min = init.c0.min();
    report.push("c0 nonnegative", c0_min >= 0.0, format!("min c0 = {c0_min:e}"));

    let div_inf = divergence(&init.u0).max_abs();
    let div_tol = 1e-8 * (init.u0.max_abs() / init.u0.grid().min_spacing()).max(1.0);
    report.push(
        "u0 divergence-free",
        div_inf <= div_tol,
        format!("max |div u0| = {div_inf:.3e}, tol = {div_tol:.3e}"),
    );

    Ok(report)
}

/// Space-time integrability exponents guaranteed in the admissible regime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentTable {
    /// Exponent of the bound on `(n + eps)` in space-time.
    pub n_integrability: Ratio<i64>,
    /// Exponent of the bound on `grad n`; absent in the upper case split.
    pub grad_n: Option<Ratio<i64>>,
    /// Integrability exponent of the chemotactic flux.
    pub flux_gamma1: Ratio<i64>,
    /// Integrability exponent of the fluid transport term.
    pub transport_gamma2: Ratio<i64>,
}

impl ExponentTable {
    pub fn as_strings(&self) -> [String; 4] {
        [
            self.n_integrability.to_string(),
            self.grad_n
                .map(|r| r.to_string())
                .unwrap_or_else(|| "-".to_string()),
            self.flux_gamma1.to_string(),
            self.transport_gamma2.to_string(),
        ]
    }
}

/// Exponent table for diffusion exponent `m`, exact in rational arithmetic.
///
/// The case split is inclusive at `m = 2` (the lower branch applies there).
pub fn theorem_exponents(m: f64) -> Result<ExponentTable> {
    let m_r: Ratio<i64> = Ratio::approximate_float(m)
        .ok_or_else(|| Error::Domain(format!("cannot represent m = {m} as a rational")))?;
    let threshold = Ratio::new(10, 9);
    if m_r <= threshold {
        return Err(Error::OutOfRegime { m });
    }
    let three = Ratio::from_integer(3);
    let four = Ratio::from_integer(4);
    let table = if m_r <= Ratio::from_integer(2) {
        let three_m_plus_2 = three * m_r + Ratio::from_integer(2);
        ExponentTable {
            n_integrability: three_m_plus_2 / three,
            grad_n: Some(three_m_plus_2 / four),
            flux_gamma1: four * three_m_plus_2 / (three * m_r + Ratio::from_integer(14)),
            transport_gamma2: Ratio::new(20, 11),
        }
    } else {
        let eight_m_minus_1 = Ratio::from_integer(8) * (m_r - Ratio::from_integer(1));
        ExponentTable {
            n_integrability: eight_m_minus_1 / three,
            grad_n: None,
            flux_gamma1: eight_m_minus_1 / (four * m_r - Ratio::from_integer(1)),
            transport_gamma2: Ratio::new(5, 4),
        }
    };
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn uniform_init(g: Grid) -> InitialData {
        InitialData {
            n0: ScalarField::constant(g, 1.0),
            c0: ScalarField::constant(g, 1.0),
            u0: VectorField::zeros(g),
        }
    }

    fn rot_spec() -> SensitivitySpec {
        SensitivitySpec::new(
            SensitivityFamily::Rotational,
            vec![0.0, 1.0],
            std::f64::consts::FRAC_PI_2,
            [0.0, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn validate_passes_in_regime() {
        let g = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let p = ModelParams::new(1.2, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let phi = PotentialSpec::constant(2, &[0.0, -1.0]).unwrap();
        let report = validate_params(&p, &rot_spec(), &phi, &uniform_init(g)).unwrap();
        assert!(report.all_pass(), "{:#?}", report.checks);
        assert!(report.theorem_regime);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn validate_flags_subthreshold_m() {
        let g = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let phi = PotentialSpec::constant(2, &[0.0, -1.0]).unwrap();
        let report = validate_params(&p, &rot_spec(), &phi, &uniform_init(g)).unwrap();
        assert!(!report.theorem_regime);
        assert!(!report.all_pass());
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn validate_rejects_negative_density_cell() {
        let g = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let p = ModelParams::new(1.5, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let phi = PotentialSpec::constant(2, &[0.0, -1.0]).unwrap();
        let mut init = uniform_init(g);
        init.n0.data_mut()[5] = -1e-6;
        let report = validate_params(&p, &rot_spec(), &phi, &init).unwrap();
        let check = report
            .checks
            .iter()
            .find(|c| c.name == "n0 nonnegative")
            .unwrap();
        assert!(!check.pass);
    }

    #[test]
    fn non_finite_parameters_hard_reject() {
        assert!(ModelParams::new(f64::NAN, 1.0, 1.0, 1.0, 0.1, 2).is_err());
        assert!(ModelParams::new(1.5, f64::INFINITY, 1.0, 1.0, 0.1, 2).is_err());
    }

    #[test]
    fn validation_is_deterministic() {
        let g = Grid::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let p = ModelParams::new(1.5, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let phi = PotentialSpec::constant(2, &[0.0, -1.0]).unwrap();
        let init = uniform_init(g);
        let a = validate_params(&p, &rot_spec(), &phi, &init).unwrap();
        let b = validate_params(&p, &rot_spec(), &phi, &init).unwrap();
        assert_eq!(serde_json::to_string(&a.checks).unwrap(), serde_json::to_string(&b.checks).unwrap());
    }

    #[test]
    fn scalar_family_has_frobenius_norm_s0() {
        let spec = SensitivitySpec::scalar(1.0).unwrap();
        let t = eval_sensitivity(&spec, 2, [0.0; 3], 3.0, 7.0).unwrap();
        // diagonal, scaled so the Frobenius norm equals S_0 exactly
        assert_eq!(t[0][1], 0.0);
        assert_eq!(t[1][0], 0.0);
        assert!((t[0][0] - t[1][1]).abs() < 1e-15);
        assert!((frobenius_norm(&t, 2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rotational_family_matches_hand_computed_matrix() {
        // theta = pi/2, S_0(c) = c: rotation [[0,-1],[1,0]] rescaled to norm c
        let spec = rot_spec();
        let c = 2.0;
        let t = eval_sensitivity(&spec, 2, [0.0; 3], 1.0, c).unwrap();
        let scale = c / 2.0f64.sqrt();
        assert!((t[0][0]).abs() < 1e-15);
        assert!((t[0][1] + scale).abs() < 1e-14);
        assert!((t[1][0] - scale).abs() < 1e-14);
        assert!((t[1][1]).abs() < 1e-15);
        assert!((frobenius_norm(&t, 2) - c).abs() < 1e-13);
    }

    #[test]
    fn saturating_family_is_dominated_for_all_n() {
        let spec = SensitivitySpec::new(
            SensitivityFamily::Saturating,
            vec![0.5, 0.25],
            0.0,
            [0.0, 0.0, 1.0],
        )
        .unwrap();
        for n in [0.0, 0.5, 1.0, 10.0, 1e6] {
            let t = eval_sensitivity(&spec, 3, [0.0; 3], n, 4.0).unwrap();
            let bound = spec.s0(4.0);
            assert!(frobenius_norm(&t, 3) <= bound + 1e-12);
        }
    }

    #[test]
    fn sensitivity_rejects_negative_inputs() {
        let spec = SensitivitySpec::scalar(1.0).unwrap();
        assert!(eval_sensitivity(&spec, 2, [0.0; 3], -1.0, 0.0).is_err());
        assert!(eval_sensitivity(&spec, 2, [0.0; 3], 0.0, -0.5).is_err());
    }

    #[test]
    fn exponent_table_at_m_two() {
        let t = theorem_exponents(2.0).unwrap();
        assert_eq!(t.n_integrability, Ratio::new(8, 3));
        assert_eq!(t.grad_n, Some(Ratio::from_integer(2)));
        assert_eq!(t.flux_gamma1, Ratio::new(8, 5));
        assert_eq!(t.transport_gamma2, Ratio::new(20, 11));
    }

    #[test]
    fn exponent_table_at_m_three() {
        let t = theorem_exponents(3.0).unwrap();
        assert_eq!(t.n_integrability, Ratio::new(16, 3));
        assert_eq!(t.grad_n, None);
        assert_eq!(t.flux_gamma1, Ratio::new(16, 11));
        assert_eq!(t.transport_gamma2, Ratio::new(5, 4));
    }

    #[test]
    fn exponent_table_rejects_boundary_m() {
        assert!(matches!(
            theorem_exponents(10.0 / 9.0),
            Err(Error::OutOfRegime { .. })
        ));
        assert!(theorem_exponents(1.0).is_err());
    }

    #[test]
    fn n_exponent_continuous_across_case_split() {
        // the two n-integrability formulas coincide at m = 2
        let lower = theorem_exponents(2.0).unwrap().n_integrability;
        let upper_formula = Ratio::from_integer(8) * (Ratio::from_integer(2) - Ratio::from_integer(1))
            / Ratio::from_integer(3);
        assert_eq!(lower, upper_formula);
    }

    #[test]
    fn potential_sup_norm() {
        let phi = PotentialSpec::constant(2, &[3.0, -4.0]).unwrap();
        assert!((phi.sup_norm() - 5.0).abs() < 1e-15);
        assert!(PotentialSpec::constant(2, &[f64::NAN, 0.0]).is_err());
        assert!(PotentialSpec::constant(3, &[1.0, 0.0]).is_err());
    }
}
