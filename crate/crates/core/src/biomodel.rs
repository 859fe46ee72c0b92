//! Constitutive relations of the morphoelastic model.
//!
//! Units follow the cm–g–day–cells system throughout. All functions here are
//! pointwise and pure; the finite-element module evaluates them at nodes or
//! element centroids.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter '{name}' = {value} is invalid: {reason}")]
    InvalidParameter { name: String, value: f64, reason: &'static str },
    #[error("negative density in reaction terms: {0}")]
    NegativeDensity(&'static str),
    #[error("Poisson ratio {0} makes the material singular")]
    SingularMaterial(f64),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Symmetric 2×2 tensor stored as `(xx, xy, yy)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn iso(a: f64) -> Self {
        Self { xx: a, xy: 0.0, yy: a }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { xx: a * self.xx, xy: a * self.xy, yy: a * self.yy }
    }

    pub fn add(&self, o: &Sym2) -> Self {
        Self { xx: self.xx + o.xx, xy: self.xy + o.xy, yy: self.yy + o.yy }
    }

    pub fn to_matrix(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }
}

/// Velocity gradient `(∇v)_ij = ∂v_i/∂x_j`.
pub type Grad2 = [[f64; 2]; 2];

pub fn sym(g: &Grad2) -> Sym2 {
    Sym2 { xx: g[0][0], xy: 0.5 * (g[0][1] + g[1][0]), yy: g[1][1] }
}

/// The off-diagonal entry `w` of `skw(∇v) = [[0, w], [-w, 0]]`.
pub fn skw(g: &Grad2) -> f64 {
    0.5 * (g[0][1] - g[1][0])
}

macro_rules! kinetic_params {
    ($( $field:ident = $default:expr ),* $(,)?) => {
        /// Fixed kinetic and mechanical constants (defaults are the published
        /// table values).
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct KineticParams {
            $( pub $field: f64, )*
        }

        impl Default for KineticParams {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl KineticParams {
            pub const NAMES: &'static [&'static str] = &[$( stringify!($field) ),*];

            pub fn entries(&self) -> Vec<(&'static str, f64)> {
                vec![$( (stringify!($field), self.$field) ),*]
            }

            fn set(&mut self, name: &str, value: f64) -> bool {
                match name {
                    $( stringify!($field) => { self.$field = value; true } )*
                    _ => false,
                }
            }
        }
    };
}

kinetic_params! {
    k_c = 4e-13,
    r_f = 9.24e-1,
    r_f_max = 2.0,
    k_rho = 7.6e-8,
    k_rho_max = 10.0,
    a_c_ii = 1e-8,
    a_c_iii = 2e8,
    a_c_iv = 1e-9,
    eta_i = 2.0,
    eta_ii = 5e-1,
    kappa_f = 1e-6,
    q = -4.151e-1,
    delta_n = 2e-2,
    delta_m = 6e-2,
    delta_c = 5e-4,
    delta_rho = 6e-6,
    n_bar = 1e4,
    m_bar = 0.0,
    c_bar = 0.0,
    rho_bar = 1.125e-1,
    rho_t = 1.09,
    mu1 = 1e2,
    mu2 = 1e2,
    e = 32.0,
    xi = 5e-2,
    r = 9.95e-1,
    zeta = 4e2,
    nu = 4.9e-1,
    n_tilde = 2e3,
    c_tilde = 1e-8,
    rho_tilde = 1.13e-2,
}

impl KineticParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in self.entries() {
            let bad = |reason| ModelError::InvalidParameter { name: name.to_string(), value, reason };
            if !value.is_finite() {
                return Err(bad("not finite"));
            }
            if name != "q" && value < 0.0 {
                return Err(bad("must be non-negative"));
            }
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(ModelError::InvalidParameter {
                name: "nu".into(),
                value: self.nu,
                reason: "Poisson ratio must lie in (0, 0.5)",
            });
        }
        if 1.0 + self.q <= 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "q".into(),
                value: self.q,
                reason: "1 + q must be positive",
            });
        }
        Ok(())
    }

    /// Writes `name = value` lines in declaration order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (name, value) in self.entries() {
            let _ = writeln!(out, "{name} = {value:e}");
        }
        out
    }

    /// Parses `name = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored; unknown names are rejected.
    pub fn from_kv(text: &str) -> Result<Self, ModelError> {
        let mut p = Self::default();
        for (line, (name, value)) in parse_kv(text)? {
            if !p.set(&name, value) {
                return Err(ModelError::Parse { line, msg: format!("unknown parameter '{name}'") });
            }
        }
        p.validate()?;
        Ok(p)
    }
}

fn parse_kv(text: &str) -> Result<Vec<(usize, (String, f64))>, ModelError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ModelError::Parse { line: i + 1, msg: "expected 'name = value'".into() })?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|e| ModelError::Parse { line: i + 1, msg: format!("{e}") })?;
        out.push((i + 1, (k.trim().to_string(), value)));
    }
    Ok(out)
}

/// Inclusive sampling ranges of the five patient-specific parameters.
pub const VARIABLE_RANGES: [(&str, f64, f64); 5] = [
    ("d_f", 7.6167e-7, 1.2e-6),
    ("chi_f", 2e-3, 3e-3),
    ("d_c", 2.22e-3, 3.2e-3),
    ("k_f", 8e6, 1.08e7),
    ("a_c_i", 0.9e-8, 1.1e-8),
];

/// The five branch inputs: `D_F`, `χ_F`, `D_c`, `k_F`, `a_c^I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariableParams {
    pub d_f: f64,
    pub chi_f: f64,
    pub d_c: f64,
    pub k_f: f64,
    pub a_c_i: f64,
}

impl Default for VariableParams {
    /// Midpoints of the sampling ranges.
    fn default() -> Self {
        let m: Vec<f64> = VARIABLE_RANGES.iter().map(|(_, lo, hi)| 0.5 * (lo + hi)).collect();
        Self::from_array([m[0], m[1], m[2], m[3], m[4]])
    }
}

impl VariableParams {
    pub fn new(d_f: f64, chi_f: f64, d_c: f64, k_f: f64, a_c_i: f64) -> Result<Self, ModelError> {
        let p = Self { d_f, chi_f, d_c, k_f, a_c_i };
        p.validate()?;
        Ok(p)
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self { d_f: a[0], chi_f: a[1], d_c: a[2], k_f: a[3], a_c_i: a[4] }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.d_f, self.chi_f, self.d_c, self.k_f, self.a_c_i]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for ((name, lo, hi), value) in VARIABLE_RANGES.iter().zip(self.to_array()) {
            if !(value >= *lo && value <= *hi) {
                return Err(ModelError::InvalidParameter {
                    name: name.to_string(),
                    value,
                    reason: "outside its sampling range",
                });
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut a = [0.0; 5];
        for (slot, (_, lo, hi)) in a.iter_mut().zip(VARIABLE_RANGES) {
            *slot = rng.random_range(lo..=hi);
        }
        Self::from_array(a)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for ((name, _, _), v) in VARIABLE_RANGES.iter().zip(self.to_array()) {
            let _ = writeln!(out, "{name} = {v:e}");
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (line, (name, value)) in parse_kv(text)? {
            if !VARIABLE_RANGES.iter().any(|(n, _, _)| *n == name) {
                return Err(ModelError::Parse { line, msg: format!("unknown parameter '{name}'") });
            }
            map.insert(name, value);
        }
        let mut a = Self::default().to_array();
        for (slot, (name, _, _)) in a.iter_mut().zip(VARIABLE_RANGES) {
            if let Some(v) = map.get(name) {
                *slot = *v;
            }
        }
        let p = Self::from_array(a);
        p.validate()?;
        Ok(p)
    }
}

pub fn sample_variable_params<R: Rng + ?Sized>(rng: &mut R) -> VariableParams {
    VariableParams::sample(rng)
}

/// Densities at a point (cells/cm³ for `n`, `m`; g/cm³ for `c`, `rho`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Densities {
    pub n: f64,
    pub m: f64,
    pub c: f64,
    pub rho: f64,
}

impl Densities {
    pub fn equilibrium(p: &KineticParams) -> Self {
        Self { n: p.n_bar, m: p.m_bar, c: p.c_bar, rho: p.rho_bar }
    }
}

/// `z^(1+q)` with `0^(1+q) = 0`.
fn pow1q(z: f64, q: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        z.powf(1.0 + q)
    }
}

/// Equilibrium MMP concentration `g(N, M, c, ρ)`.
pub fn mmp_equilibrium(d: &Densities, p: &KineticParams) -> f64 {
    (d.n + p.eta_ii * d.m) * d.rho / (1.0 + p.a_c_iii * d.c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reactions {
    pub n: f64,
    pub m: f64,
    pub c: f64,
    pub rho: f64,
}

/// A reaction term written as `source - rate * z` with `source, rate ≥ 0`,
/// which lets the time stepper treat decay implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitReaction {
    pub source: f64,
    pub rate: f64,
}

impl SplitReaction {
    pub fn eval(&self, z: f64) -> f64 {
        self.source - self.rate * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionSplits {
    pub n: SplitReaction,
    pub m: SplitReaction,
    pub c: SplitReaction,
    pub rho: SplitReaction,
}

fn check_nonneg(d: &Densities) -> Result<(), ModelError> {
    for (v, name) in [(d.n, "N"), (d.m, "M"), (d.c, "c"), (d.rho, "rho")] {
        if v < 0.0 || v.is_nan() {
            return Err(ModelError::NegativeDensity(name));
        }
    }
    Ok(())
}

/// Splits every reaction into a non-negative source and a non-negative
/// linear decay rate evaluated at `d`.
pub fn reaction_splits(d: &Densities, vp: &VariableParams, p: &KineticParams) -> Result<ReactionSplits, ModelError> {
    check_nonneg(d)?;
    let f = d.n + d.m;
    let crowd = 1.0 - p.kappa_f * f;
    let g = mmp_equilibrium(d, p);

    let growth_n = p.r_f * (1.0 + p.r_f_max * d.c / (vp.a_c_i + d.c)) * pow1q(d.n, p.q);
    let growth_m = p.r_f * ((1.0 + p.r_f_max) * d.c / (vp.a_c_i + d.c)) * pow1q(d.m, p.q);
    let differentiation = vp.k_f * d.c;

    // Crowding beyond capacity turns logistic growth into decay.
    let logistic = |growth: f64, z: f64| -> SplitReaction {
        if crowd >= 0.0 || z == 0.0 {
            SplitReaction { source: growth * crowd.max(0.0), rate: 0.0 }
        } else {
            SplitReaction { source: 0.0, rate: -growth * crowd / z }
        }
    };
    let ln = logistic(growth_n, d.n);
    let lm = logistic(growth_m, d.m);

    let n = SplitReaction { source: ln.source, rate: ln.rate + differentiation + p.delta_n };
    let m = SplitReaction {
        source: lm.source + differentiation * d.n,
        rate: lm.rate + p.delta_m,
    };
    let c = SplitReaction {
        source: p.k_c * (d.n + p.eta_i * d.m) * d.c / (p.a_c_ii + d.c),
        rate: p.delta_c * g,
    };
    let rho = SplitReaction {
        source: p.k_rho * (1.0 + p.k_rho_max * d.c / (p.a_c_iv + d.c)) * (d.n + p.eta_i * d.m),
        rate: p.delta_rho * g,
    };
    Ok(ReactionSplits { n, m, c, rho })
}

/// The four reaction terms `(R_N, R_M, R_c, R_ρ)`.
pub fn reaction_terms(d: &Densities, vp: &VariableParams, p: &KineticParams) -> Result<Reactions, ModelError> {
    let s = reaction_splits(d, vp, p)?;
    Ok(Reactions {
        n: s.n.eval(d.n),
        m: s.m.eval(d.m),
        c: s.c.eval(d.c),
        rho: s.rho.eval(d.rho),
    })
}

/// Reaction residuals at the unwounded equilibrium.
pub fn equilibrium_residual(p: &KineticParams, vp: &VariableParams) -> Result<Reactions, ModelError> {
    reaction_terms(&Densities::equilibrium(p), vp, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fluxes {
    pub n: [f64; 2],
    pub m: [f64; 2],
    pub c: [f64; 2],
}

/// Fibroblast, myofibroblast and signalling fluxes. Collagen has no flux.
pub fn fluxes(d: &Densities, grad_n: [f64; 2], grad_m: [f64; 2], grad_c: [f64; 2], vp: &VariableParams) -> Fluxes {
    let f = d.n + d.m;
    let cell = |z: f64, gz: [f64; 2]| {
        [
            -vp.d_f * f * gz[0] + vp.chi_f * z * grad_c[0],
            -vp.d_f * f * gz[1] + vp.chi_f * z * grad_c[1],
        ]
    };
    Fluxes {
        n: cell(d.n, grad_n),
        m: cell(d.m, grad_m),
        c: [-vp.d_c * grad_c[0], -vp.d_c * grad_c[1]],
    }
}

/// Elastic part of the stress, `E√ρ/(1+ν) (ε + tr(ε) ν/(1−2ν) I)`.
pub fn elastic_stress(eps: &Sym2, rho: f64, p: &KineticParams) -> Result<Sym2, ModelError> {
    if p.nu == 0.5 {
        return Err(ModelError::SingularMaterial(p.nu));
    }
    let stiff = p.e * rho.max(0.0).sqrt() / (1.0 + p.nu);
    let vol = eps.trace() * p.nu / (1.0 - 2.0 * p.nu);
    Ok(eps.add(&Sym2::iso(vol)).scale(stiff))
}

/// Viscous part of the stress, `μ₁ sym(∇v) + μ₂ tr(sym(∇v)) I`.
pub fn viscous_stress(grad_v: &Grad2, p: &KineticParams) -> Sym2 {
    let d = sym(grad_v);
    d.scale(p.mu1).add(&Sym2::iso(p.mu2 * d.trace()))
}

/// Visco-elastic dermal stress.
pub fn stress_tensor(grad_v: &Grad2, eps: &Sym2, rho: f64, p: &KineticParams) -> Result<Sym2, ModelError> {
    Ok(viscous_stress(grad_v, p).add(&elastic_stress(eps, rho, p)?))
}

/// Isotropic myofibroblast stress `ψ = ξ M ρ/(R² + ρ²) I`.
pub fn myofibroblast_traction(m: f64, rho: f64, p: &KineticParams) -> Sym2 {
    Sym2::iso(p.xi * m * rho / (p.r * p.r + rho * rho))
}

/// Scalar factor `k` of the growth tensor `G = k ε`.
pub fn growth_rate(n: f64, m: f64, c: f64, p: &KineticParams) -> f64 {
    p.zeta * (n + p.eta_ii * m) * c / (1.0 + p.a_c_iii * c)
}

pub fn growth_tensor(n: f64, m: f64, c: f64, eps: &Sym2, p: &KineticParams) -> Sym2 {
    eps.scale(growth_rate(n, m, c, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eq(p: &KineticParams) -> Densities {
        Densities::equilibrium(p)
    }

    #[test]
    fn table_defaults() {
        let p = KineticParams::default();
        assert_eq!(p.r_f, 9.24e-1);
        assert_eq!(p.q, -4.151e-1);
        assert_eq!(p.kappa_f, 1e-6);
        assert_eq!(p.delta_n, 2e-2);
        assert_eq!(p.n_bar, 1e4);
        assert_eq!(p.rho_bar, 1.125e-1);
        assert_eq!(p.nu, 4.9e-1);
        assert_eq!(p.m_bar, 0.0);
        assert_eq!(p.c_bar, 0.0);
        assert_eq!(KineticParams::NAMES.len(), 31);
        p.validate().unwrap();
    }

    #[test]
    fn mmp_values() {
        let p = KineticParams::default();
        assert_abs_diff_eq!(mmp_equilibrium(&eq(&p), &p), 1125.0, epsilon = 1e-9);
        let zero = Densities { n: 0.0, m: 0.0, c: 1e-8, rho: 0.1 };
        assert_eq!(mmp_equilibrium(&zero, &p), 0.0);
        let lo = Densities { c: 1e-7, ..eq(&p) };
        let hi = Densities { c: 1e-6, ..eq(&p) };
        assert!(mmp_equilibrium(&hi, &p) < mmp_equilibrium(&lo, &p));
    }

    #[test]
    fn equilibrium_residuals() {
        let p = KineticParams::default();
        let vp = VariableParams::default();
        let r = equilibrium_residual(&p, &vp).unwrap();
        // 0.924 · 0.99 · 10^(4 · 0.5849) − 200
        let expected_n = 0.924 * 0.99 * 10f64.powf(4.0 * 0.5849) - 200.0;
        assert_abs_diff_eq!(r.n, expected_n, epsilon = 1e-9);
        assert!(r.n.abs() <= 2.0);
        assert_eq!(r.m, 0.0);
        assert_eq!(r.c, 0.0);
        assert!(r.rho.abs() <= 1e-2 * p.k_rho * p.n_bar);
        assert_abs_diff_eq!(r.rho, 7.6e-4 - 6e-6 * 1125.0 * 0.1125, epsilon = 1e-15);
    }

    #[test]
    fn myofibroblasts_need_signal() {
        let p = KineticParams::default();
        let vp = VariableParams::default();
        let d = Densities { n: 5e3, m: 300.0, c: 0.0, rho: 0.05 };
        let r = reaction_terms(&d, &vp, &p).unwrap();
        assert_abs_diff_eq!(r.m, -p.delta_m * 300.0, epsilon = 1e-12);
        assert_eq!(r.c, 0.0);
    }

    #[test]
    fn differentiation_feeds_myofibroblasts() {
        let p = KineticParams::default();
        let vp = VariableParams::default();
        let d = Densities { n: 5e3, m: 0.0, c: 1e-8, rho: 0.05 };
        let r = reaction_terms(&d, &vp, &p).unwrap();
        assert_abs_diff_eq!(r.m, vp.k_f * 1e-8 * 5e3, epsilon = 1e-9);
    }

    #[test]
    fn negative_density_rejected() {
        let p = KineticParams::default();
        let d = Densities { n: -1.0, ..eq(&p) };
        assert_eq!(
            reaction_terms(&d, &VariableParams::default(), &p),
            Err(ModelError::NegativeDensity("N"))
        );
    }

    #[test]
    fn splits_reproduce_terms() {
        let p = KineticParams::default();
        let vp = VariableParams::default();
        let d = Densities { n: 3e3, m: 800.0, c: 4e-9, rho: 0.03 };
        let s = reaction_splits(&d, &vp, &p).unwrap();
        for sp in [s.n, s.m, s.c, s.rho] {
            assert!(sp.source >= 0.0 && sp.rate >= 0.0);
        }
        let f = d.n + d.m;
        let rn = p.r_f * (1.0 + p.r_f_max * d.c / (vp.a_c_i + d.c)) * (1.0 - p.kappa_f * f) * d.n.powf(1.0 + p.q)
            - vp.k_f * d.c * d.n
            - p.delta_n * d.n;
        assert_abs_diff_eq!(s.n.eval(d.n), rn, epsilon = 1e-9);
    }

    #[test]
    fn flux_values() {
        let p = KineticParams::default();
        let vp = VariableParams { d_f: 1e-6, ..VariableParams::default() };
        let d = Densities { n: 1e4, m: 0.0, c: 0.0, rho: p.rho_bar };
        let f = fluxes(&d, [0.0; 2], [0.0; 2], [0.0; 2], &vp);
        assert_eq!(f.n, [0.0, 0.0]);
        assert_eq!(f.c, [0.0, 0.0]);
        let f = fluxes(&d, [1.0, 0.0], [0.0; 2], [0.0; 2], &vp);
        assert_abs_diff_eq!(f.n[0], -1e-2, epsilon = 1e-15);
        let f = fluxes(&d, [0.0; 2], [0.0; 2], [1.0, 0.0], &vp);
        assert!(f.n[0] > 0.0);
    }

    #[test]
    fn stress_values() {
        let p = KineticParams::default();
        let s = stress_tensor(&[[0.0; 2]; 2], &Sym2::ZERO, p.rho_bar, &p).unwrap();
        assert_eq!(s, Sym2::ZERO);
        let s = stress_tensor(&[[0.0; 2]; 2], &Sym2::iso(0.01), p.rho_bar, &p).unwrap();
        let expected = 32.0 * 0.1125f64.sqrt() / 1.49 * 0.01 * (1.0 + 0.98 / 0.02);
        assert_abs_diff_eq!(s.xx, expected, epsilon = 1e-10);
        assert_abs_diff_eq!(s.xx, 3.602, epsilon = 1e-3);
        assert_abs_diff_eq!(s.yy, s.xx);
        let bad = KineticParams { nu: 0.5, ..p };
        assert!(stress_tensor(&[[0.0; 2]; 2], &Sym2::iso(0.01), 0.1, &bad).is_err());
    }

    #[test]
    fn traction_values() {
        let p = KineticParams::default();
        assert_eq!(myofibroblast_traction(0.0, 0.1, &p), Sym2::ZERO);
        let peak = myofibroblast_traction(1.0, p.r, &p).xx;
        assert_abs_diff_eq!(peak, p.xi / (2.0 * p.r), epsilon = 1e-15);
        for rho in [0.1, 0.5, 0.9, 1.1, 2.0] {
            assert!(myofibroblast_traction(1.0, rho, &p).xx <= peak);
        }
        let psi = myofibroblast_traction(1e3, 0.1125, &p).xx;
        assert_abs_diff_eq!(psi, 50.0 * 0.1125 / (0.990025 + 0.01265625), epsilon = 1e-10);
        assert_abs_diff_eq!(psi, 5.6097, epsilon = 1e-3);
    }

    #[test]
    fn growth_values() {
        let p = KineticParams::default();
        let eps = Sym2::new(-0.01, 0.0, 0.0);
        assert_eq!(growth_tensor(1e4, 0.0, 0.0, &eps, &p), Sym2::ZERO);
        assert_eq!(growth_tensor(1e4, 0.0, 1e-8, &Sym2::ZERO, &p), Sym2::ZERO);
        let g = growth_tensor(1e4, 0.0, 1e-8, &eps, &p);
        assert_abs_diff_eq!(g.xx, -1.3333e-4, epsilon = 1e-8);
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<VariableParams> = (0..10_000).map(|_| VariableParams::sample(&mut rng)).collect();
        for s in &samples {
            s.validate().unwrap();
        }
        let mean = samples.iter().map(|s| s.d_f).sum::<f64>() / samples.len() as f64;
        let mid = 0.5 * (7.6167e-7 + 1.2e-6);
        assert!((mean - mid).abs() / mid < 0.02);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(VariableParams::sample(&mut a), VariableParams::sample(&mut b));
        VariableParams::new(7.6167e-7, 3e-3, 2.22e-3, 1.08e7, 0.9e-8).unwrap();
        assert!(VariableParams::new(7e-7, 3e-3, 2.22e-3, 1.08e7, 0.9e-8).is_err());
    }

    #[test]
    fn kv_roundtrip() {
        let p = KineticParams { xi: 0.07, ..KineticParams::default() };
        assert_eq!(KineticParams::from_kv(&p.to_kv()).unwrap(), p);
        let q = KineticParams::from_kv("# comment\nxi = 0\n\n").unwrap();
        assert_eq!(q.xi, 0.0);
        assert!(KineticParams::from_kv("bogus = 1").is_err());
        assert!(KineticParams::from_kv("nu = 0.5").is_err());
        let vp = VariableParams::default();
        assert_eq!(VariableParams::from_kv(&vp.to_kv()).unwrap(), vp);
    }

    proptest! {
        #[test]
        fn tensors_stay_symmetric(exx in -0.1f64..0.1, exy in -0.1f64..0.1, eyy in -0.1f64..0.1,
                                  g00 in -1.0f64..1.0, g01 in -1.0f64..1.0, g10 in -1.0f64..1.0, g11 in -1.0f64..1.0) {
            let p = KineticParams::default();
            let eps = Sym2::new(exx, exy, eyy);
            let s = stress_tensor(&[[g00, g01], [g10, g11]], &eps, 0.05, &p).unwrap();
            let m = s.to_matrix();
            prop_assert_eq!(m[0][1], m[1][0]);
            let g = growth_tensor(1e3, 10.0, 1e-9, &eps, &p).to_matrix();
            prop_assert_eq!(g[0][1], g[1][0]);
        }

        #[test]
        fn reactions_are_locally_lipschitz(n in 1e2f64..2e4, m in 0.0f64..1e4, c in 0.0f64..2e-8, rho in 1e-3f64..0.2,
                                           dn in -1.0f64..1.0, dc in -1.0f64..1.0) {
            let p = KineticParams::default();
            let vp = VariableParams::default();
            let a = Densities { n, m, c, rho };
            let b = Densities { n: n + 1e-3 * dn * n, c: (c + 1e-3 * dc * 1e-8).max(0.0), ..a };
            let ra = reaction_terms(&a, &vp, &p).unwrap();
            let rb = reaction_terms(&b, &vp, &p).unwrap();
            // empirical constants on the compact box, relative to natural scales
            prop_assert!((ra.n - rb.n).abs() <= 50.0);
            // k_rho k_rho_max (N + eta_I M) / a_c_iv · 1e-11 ≤ 3.1e-4 on the box
            prop_assert!((ra.rho - rb.rho).abs() <= 4e-4);
        }
    }
}
