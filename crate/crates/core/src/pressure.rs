//! Constitutive pressure, the density cutoff `K` and the regularized pressure `P`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::numerics::integrate_pieces;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    /// `a[(ρ/ρ₀)^γ − (ρ/ρ₀)^(−β)]`, singular at vacuum.
    Singular,
    /// `a(ρ^γ − ρ₀^γ)`, bounded at vacuum.
    Power,
}

/// Barotropic pressure law `π(ρ)` with `π(ρ₀) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureLaw {
    pub kind: LawKind,
    pub a: f64,
    pub gamma: f64,
    pub beta: f64,
    pub rho0: f64,
}

impl Default for PressureLaw {
    fn default() -> Self {
        Self::singular(1.0, 2.0, 1.0, 0.25)
    }
}

impl PressureLaw {
    pub fn singular(a: f64, gamma: f64, beta: f64, rho0: f64) -> Self {
        Self {
            kind: LawKind::Singular,
            a,
            gamma,
            beta,
            rho0,
        }
    }

    pub fn power(a: f64, gamma: f64, rho0: f64) -> Self {
        Self {
            kind: LawKind::Power,
            a,
            gamma,
            beta: 0.0,
            rho0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, what: &str| {
            if c {
                Ok(())
            } else {
                Err(SolverError::config(format!("pressure law: {what}")))
            }
        };
        ok(self.a > 0.0 && self.a.is_finite(), "a > 0 required")?;
        ok(self.gamma > 1.0 && self.gamma.is_finite(), "gamma > 1 required")?;
        ok(self.rho0 > 0.0 && self.rho0.is_finite(), "rho0 > 0 required")?;
        if self.kind == LawKind::Singular {
            ok(self.beta > 0.0 && self.beta.is_finite(), "beta > 0 required")?;
        }
        Ok(())
    }

    /// Checks the normalization `ρ₀ ≤ h/4` against a mean density.
    pub fn validate_mean(&self, h: f64) -> Result<()> {
        if self.rho0 <= 0.25 * h {
            Ok(())
        } else {
            Err(SolverError::config(format!(
                "rho0 <= h/4 violated (rho0 = {}, h = {h})",
                self.rho0
            )))
        }
    }

    /// `π(ρ)` without the domain check.
    #[inline]
    pub fn value(&self, rho: f64) -> f64 {
        match self.kind {
            LawKind::Singular => {
                let s = rho / self.rho0;
                self.a * (s.powf(self.gamma) - s.powf(-self.beta))
            }
            LawKind::Power => self.a * (rho.powf(self.gamma) - self.rho0.powf(self.gamma)),
        }
    }

    /// `π'(ρ)` without the domain check.
    #[inline]
    pub fn derivative(&self, rho: f64) -> f64 {
        match self.kind {
            LawKind::Singular => {
                let s = rho / self.rho0;
                self.a / self.rho0
                    * (self.gamma * s.powf(self.gamma - 1.0) + self.beta * s.powf(-self.beta - 1.0))
            }
            LawKind::Power => self.a * self.gamma * rho.powf(self.gamma - 1.0),
        }
    }

    /// `π''(ρ)` without the domain check.
    #[inline]
    pub fn second_derivative(&self, rho: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            LawKind::Singular => {
                let (b, s) = (self.beta, rho / self.rho0);
                self.a / (self.rho0 * self.rho0)
                    * (g * (g - 1.0) * s.powf(g - 2.0) - b * (b + 1.0) * s.powf(-b - 2.0))
            }
            LawKind::Power => self.a * g * (g - 1.0) * rho.powf(g - 2.0),
        }
    }

    fn positive(rho: f64) -> Result<()> {
        if rho > 0.0 && rho.is_finite() {
            Ok(())
        } else {
            Err(SolverError::domain(format!("density must be positive, got {rho}")))
        }
    }

    pub fn pi(&self, rho: f64) -> Result<f64> {
        Self::positive(rho)?;
        Ok(self.value(rho))
    }

    pub fn pi_plus(&self, rho: f64) -> Result<f64> {
        Ok(self.pi(rho)?.max(0.0))
    }

    pub fn pi_minus(&self, rho: f64) -> Result<f64> {
        Ok((-self.pi(rho)?).max(0.0))
    }

    pub fn pi_prime(&self, rho: f64) -> Result<f64> {
        Self::positive(rho)?;
        Ok(self.derivative(rho))
    }

    /// `lim π(ρ)` as `ρ → 0⁺`.
    pub fn vacuum_limit(&self) -> f64 {
        match self.kind {
            LawKind::Singular => f64::NEG_INFINITY,
            LawKind::Power => -self.a * self.rho0.powf(self.gamma),
        }
    }

    /// Density with `π(ρ) = p`, by bracketed Newton iteration.
    pub fn pi_inverse(&self, p: f64) -> Result<f64> {
        if !p.is_finite() {
            return Err(SolverError::domain(format!("cannot invert pressure {p}")));
        }
        if p <= self.vacuum_limit() {
            return Err(SolverError::domain(format!(
                "pressure {p} is not attained: the law is bounded below by {}",
                self.vacuum_limit()
            )));
        }
        let tol = 1e-12 * (1.0 + p.abs());
        let (mut lo, mut hi) = (self.rho0, self.rho0);
        if p >= 0.0 {
            while self.value(hi) < p {
                lo = hi;
                hi *= 2.0;
            }
        } else {
            while self.value(lo) > p {
                hi = lo;
                lo *= 0.5;
                if lo < f64::MIN_POSITIVE {
                    return Err(SolverError::numerical("pi_inverse bracket collapsed"));
                }
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let r = self.value(x) - p;
            if r.abs() <= tol {
                return Ok(x);
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - r / self.derivative(x);
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                let r = self.value(x) - p;
                if r.abs() <= tol {
                    return Ok(x);
                }
                break;
            }
        }
        Err(SolverError::numerical(format!("pi_inverse({p}) did not converge")))
    }

    /// `∫_{ρ₀}^{ρ} π'(ξ)/ξ dξ`, evaluated by quadrature.
    pub fn energy_primitive(&self, rho: f64) -> Result<f64> {
        Self::positive(rho)?;
        let scale = (self.value(rho).abs() / rho.min(self.rho0)).max(1.0);
        Ok(integrate_pieces(
            |xi| self.derivative(xi) / xi,
            self.rho0,
            rho,
            &[],
            1e-14 * scale,
        ))
    }
}

/// Cubic smoothstep `3x² − 2x³` clamped to `[0, 1]`, with its derivative.
#[inline]
fn smoothstep(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0)
    } else {
        (x * x * (3.0 - 2.0 * x), 6.0 * x * (1.0 - x))
    }
}

/// Thresholds of the density cutoff `K`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub n1: f64,
    pub n2: f64,
    pub m1: f64,
    pub m2: f64,
    pub h: f64,
}

impl CutoffSpec {
    /// Builds the cutoff from its outer thresholds using `n₂ − n₁ = m₂ − m₁ = h`.
    pub fn from_outer(n2: f64, m2: f64, h: f64) -> Self {
        Self {
            n1: n2 - h,
            n2,
            m1: m2 - h,
            m2,
            h,
        }
    }

    /// Upper threshold `m₂` given; `n₂` balances the two pressure tails,
    /// `π₊(m₂) = π₋(1/n₂)`, raised if needed so that `1/n₁ < ρ₀`.
    pub fn balanced(law: &PressureLaw, m2: f64, h: f64) -> Result<Self> {
        let floor = 1.0 / law.rho0 + 2.0 * h;
        let target = -law.value(m2);
        let n2 = if target > law.vacuum_limit() {
            (1.0 / law.pi_inverse(target)?).max(floor)
        } else {
            floor
        };
        let spec = Self::from_outer(n2, m2, h);
        spec.validate(law)?;
        Ok(spec)
    }

    pub fn validate(&self, law: &PressureLaw) -> Result<()> {
        let fail = |c: &str| {
            Err(SolverError::config(format!(
                "cutoff constraint {c} violated (n1 = {}, n2 = {}, m1 = {}, m2 = {}, h = {}, rho0 = {})",
                self.n1, self.n2, self.m1, self.m2, self.h, law.rho0
            )))
        };
        let vals = [self.n1, self.n2, self.m1, self.m2, self.h];
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return fail("all thresholds positive and finite");
        }
        if !(1.0 / self.n2 < 1.0 / self.n1) {
            return fail("1/n2 < 1/n1");
        }
        if !(1.0 / self.n1 < law.rho0) {
            return fail("1/n1 < rho0");
        }
        if !(law.rho0 < self.h) {
            return fail("rho0 < h");
        }
        if !(self.h < self.m1) {
            return fail("h < m1");
        }
        if !(self.m1 < self.m2) {
            return fail("m1 < m2");
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        if !close(self.n2 - self.n1, self.h) {
            return fail("n2 - n1 = h");
        }
        if !close(self.m2 - self.m1, self.h) {
            return fail("m2 - m1 = h");
        }
        Ok(())
    }

    /// `(K(t), K'(t))`.
    #[inline]
    pub fn k_and_derivative(&self, t: f64) -> (f64, f64) {
        let (a, b) = (1.0 / self.n2, 1.0 / self.n1);
        if t <= a || t >= self.m2 {
            (0.0, 0.0)
        } else if t < b {
            let (s, ds) = smoothstep((t - a) / (b - a));
            (s, ds / (b - a))
        } else if t <= self.m1 {
            (1.0, 0.0)
        } else {
            let w = self.m2 - self.m1;
            let (s, ds) = smoothstep((t - self.m1) / w);
            (1.0 - s, -ds / w)
        }
    }

    pub fn k(&self, t: f64) -> f64 {
        self.k_and_derivative(t).0
    }

    pub fn k_prime(&self, t: f64) -> f64 {
        self.k_and_derivative(t).1
    }

    /// Density interval on which `K ≡ 1`.
    pub fn plateau(&self) -> (f64, f64) {
        (1.0 / self.n1, self.m1)
    }

    /// Density interval outside which `K ≡ 0`.
    pub fn support(&self) -> (f64, f64) {
        (1.0 / self.n2, self.m2)
    }
}

/// Piecewise cubic Hermite data on one interval.
#[derive(Clone, Copy, Debug)]
struct Hermite {
    d0: f64,
    d1: f64,
}

#[derive(Clone, Debug)]
struct Curve {
    values: Vec<f64>,
    slopes: Vec<Hermite>,
}

impl Curve {
    /// Fritsch–Carlson limiting of exact endpoint slopes so every interval stays monotone.
    fn new(rho: &[f64], values: Vec<f64>, mut slopes: Vec<Hermite>) -> Self {
        for (k, s) in slopes.iter_mut().enumerate() {
            let delta = (values[k + 1] - values[k]) / (rho[k + 1] - rho[k]);
            if delta == 0.0 {
                *s = Hermite { d0: 0.0, d1: 0.0 };
                continue;
            }
            let a = (s.d0 / delta).max(0.0);
            let b = (s.d1 / delta).max(0.0);
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                *s = Hermite {
                    d0: t * a * delta,
                    d1: t * b * delta,
                };
            } else {
                *s = Hermite {
                    d0: a * delta,
                    d1: b * delta,
                };
            }
        }
        Self { values, slopes }
    }

    fn eval(&self, rho: &[f64], k: usize, t: f64) -> f64 {
        let h = rho[k + 1] - rho[k];
        let s = (t - rho[k]) / h;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let Hermite { d0, d1 } = self.slopes[k];
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * d1
    }
}

/// Tabulated regularized pressure `P = P₊ − P₋` with
/// `P₊(ρ) = ∫₀^ρ π₊'K` and `P₋(ρ) = −∫_ρ^∞ π₋'K ≥ 0`.
#[derive(Clone, Debug)]
pub struct RegularizedPressureTable {
    law: PressureLaw,
    cutoff: CutoffSpec,
    rho: Vec<f64>,
    p: Curve,
    plus: Curve,
    minus: Curve,
}

pub const DEFAULT_TABLE_SAMPLES: usize = 20_000;
const TABLE_MARGIN: f64 = 0.05;

pub fn build_regularized_p(
    law: &PressureLaw,
    cutoff: &CutoffSpec,
    samples: usize,
) -> Result<RegularizedPressureTable> {
    RegularizedPressureTable::build(law, cutoff, samples)
}

impl RegularizedPressureTable {
    pub fn build(law: &PressureLaw, cutoff: &CutoffSpec, samples: usize) -> Result<Self> {
        law.validate()?;
        cutoff.validate(law)?;
        if samples < 1000 {
            return Err(SolverError::config(format!(
                "pressure table needs at least 1000 samples, got {samples}"
            )));
        }
        let top = cutoff.m2 * (1.0 + TABLE_MARGIN);
        let breaks = [1.0 / cutoff.n2, 1.0 / cutoff.n1, law.rho0, cutoff.m1, cutoff.m2];
        let mut rho: Vec<f64> = (0..samples)
            .map(|i| top * i as f64 / (samples - 1) as f64)
            .collect();
        rho.extend_from_slice(&breaks);
        rho.sort_by(f64::total_cmp);
        rho.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * top);
        for &b in &breaks {
            let k = rho.partition_point(|&r| r < b - 1e-14 * top);
            rho[k] = b;
        }

        // π₊'K and −π₋'K, with the kink at ρ₀ resolved by the side of approach.
        let d_plus = |t: f64, right: bool| {
            if t > law.rho0 || (t == law.rho0 && right) {
                cutoff.k(t) * law.derivative(t)
            } else {
                0.0
            }
        };
        let d_minus = |t: f64, right: bool| {
            if t < law.rho0 || (t == law.rho0 && !right) {
                let k = cutoff.k(t);
                if k == 0.0 {
                    0.0
                } else {
                    -k * law.derivative(t)
                }
            } else {
                0.0
            }
        };

        let n = rho.len();
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        let mut plus_inc = vec![0.0; n - 1];
        let mut minus_inc = vec![0.0; n - 1];
        for k in 0..n - 1 {
            let (a, b) = (rho[k], rho[k + 1]);
            let mid = 0.5 * (a + b);
            let scale = (b - a) * (cutoff.k(mid) * law.derivative(mid.max(1e-300))).abs().max(1.0);
            if b > law.rho0 && a >= law.rho0 {
                plus_inc[k] = integrate_pieces(|t| d_plus(t, true), a, b, &[], 1e-15 * scale);
            }
            if a < law.rho0 && b > 1.0 / cutoff.n2 {
                minus_inc[k] = integrate_pieces(|t| -d_minus(t, false), a, b, &[], 1e-15 * scale);
            }
        }
        for k in 0..n - 1 {
            plus[k + 1] = plus[k] + plus_inc[k];
        }
        for k in (0..n - 1).rev() {
            minus[k] = minus[k + 1] + minus_inc[k];
        }
        if !plus.iter().chain(&minus).all(|v| v.is_finite()) {
            return Err(SolverError::numerical("pressure table quadrature produced non-finite values"));
        }
        let p: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| a - b).collect();
        let slopes = |f: &dyn Fn(f64, bool) -> f64| -> Vec<Hermite> {
            (0..n - 1)
                .map(|k| Hermite {
                    d0: f(rho[k], true),
                    d1: f(rho[k + 1], false),
                })
                .collect()
        };
        let s_plus = slopes(&d_plus);
        let s_minus_up = slopes(&|t, r| -d_minus(t, r));
        let s_p = slopes(&|t, r| d_plus(t, r) - d_minus(t, r));
        // P₋ is non-increasing: limit the mirrored curve.
        let neg_minus: Vec<f64> = minus.iter().map(|v| -v).collect();
        let minus_curve = Curve::new(&rho, neg_minus, s_minus_up);
        let minus_curve = Curve {
            values: minus_curve.values.iter().map(|v| -v).collect(),
            slopes: minus_curve
                .slopes
                .iter()
                .map(|h| Hermite { d0: -h.d0, d1: -h.d1 })
                .collect(),
        };
        Ok(Self {
            law: *law,
            cutoff: *cutoff,
            p: Curve::new(&rho, p, s_p),
            plus: Curve::new(&rho, plus, s_plus),
            minus: minus_curve,
            rho,
        })
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    pub fn cutoff(&self) -> &CutoffSpec {
        &self.cutoff
    }

    pub fn samples(&self) -> &[f64] {
        &self.rho
    }

    fn locate(&self, t: f64) -> Option<usize> {
        let last = self.rho.len() - 1;
        if t <= 0.0 || t >= self.rho[last] {
            return None;
        }
        Some(self.rho.partition_point(|&r| r <= t).saturating_sub(1).min(last - 1))
    }

    fn eval(&self, c: &Curve, t: f64) -> f64 {
        match self.locate(t) {
            Some(k) => c.eval(&self.rho, k, t),
            None if t <= 0.0 => c.values[0],
            None => c.values[self.rho.len() - 1],
        }
    }

    /// `P(ρ)`; constant below `1/n₂` and above `m₂`.
    pub fn p(&self, rho: f64) -> f64 {
        self.eval(&self.p, rho)
    }

    pub fn p_plus(&self, rho: f64) -> f64 {
        self.eval(&self.plus, rho)
    }

    pub fn p_minus(&self, rho: f64) -> f64 {
        self.eval(&self.minus, rho)
    }

    /// `P'(ρ) = K(ρ)π'(ρ)`, evaluated exactly.
    pub fn p_prime(&self, rho: f64) -> f64 {
        let k = self.cutoff.k(rho);
        if k == 0.0 {
            0.0
        } else {
            k * self.law.derivative(rho)
        }
    }

    /// `P''(ρ) = K'(ρ)π'(ρ) + K(ρ)π''(ρ)`.
    pub fn p_second(&self, rho: f64) -> f64 {
        let (k, dk) = self.cutoff.k_and_derivative(rho);
        if k == 0.0 && dk == 0.0 {
            0.0
        } else {
            dk * self.law.derivative(rho) + k * self.law.second_derivative(rho)
        }
    }

    /// Two-column text dump `rho P`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# rho P\n");
        for (k, r) in self.rho.iter().enumerate() {
            s.push_str(&format!("{r:e} {:e}\n", self.p.values[k]));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PressureLaw, CutoffSpec) {
        (PressureLaw::default(), CutoffSpec::from_outer(11.0, 4.0, 1.0))
    }

    #[test]
    fn law_examples() {
        let law = PressureLaw::default();
        assert_eq!(law.pi(0.25).unwrap(), 0.0);
        assert!((law.pi(0.5).unwrap() - 3.5).abs() < 1e-14);
        assert!((law.pi(0.125).unwrap() + 1.75).abs() < 1e-14);
        assert!(law.pi(0.0).is_err());
        assert!(law.pi(-1.0).is_err());
        assert_eq!(law.pi_minus(0.125).unwrap(), 1.75);
        assert_eq!(law.pi_plus(0.125).unwrap(), 0.0);
    }

    #[test]
    fn inverse_examples() {
        let law = PressureLaw::default();
        assert!((law.pi_inverse(0.0).unwrap() - 0.25).abs() < 1e-14);
        assert!((law.pi_inverse(3.5).unwrap() - 0.5).abs() < 1e-12);
        assert!((law.pi_inverse(-1.75).unwrap() - 0.125).abs() < 1e-12);
        assert!(PressureLaw::power(1.0, 2.0, 0.25).pi_inverse(-1.0).is_err());
    }

    #[test]
    fn cutoff_examples() {
        let (law, c) = setup();
        c.validate(&law).unwrap();
        assert_eq!(c.k(c.h), 1.0);
        assert_eq!(c.k_and_derivative(c.m2), (0.0, 0.0));
        assert!((c.k(0.5 * (c.m1 + c.m2)) - 0.5).abs() < 1e-15);
        let bad = CutoffSpec { m1: 0.9, ..c };
        let msg = bad.validate(&law).unwrap_err().to_string();
        assert!(msg.contains("h < m1"), "{msg}");
    }

    #[test]
    fn table_identity_and_plateaus() {
        let (law, c) = setup();
        let t = RegularizedPressureTable::build(&law, &c, 4000).unwrap();
        assert!((t.p(c.h) - law.value(c.h)).abs() < 1e-10);
        assert_eq!(t.p(c.m2), t.p(c.m2 * 1.02));
        assert_eq!(t.p(1.0 / c.n2), t.p(0.5 / c.n2));
        assert_eq!(t.p_minus(2.0), 0.0);
        assert_eq!(t.p_plus(0.2), 0.0);
    }

    #[test]
    fn balanced_cutoff_is_valid() {
        let law = PressureLaw::default();
        let c = CutoffSpec::balanced(&law, 4.0, 1.0).unwrap();
        c.validate(&law).unwrap();
        let lhs = law.value(c.m2);
        let rhs = -law.value(1.0 / c.n2);
        assert!(c.n2 == 1.0 / law.rho0 + 2.0 || (lhs - rhs).abs() < 1e-9 * lhs);
    }

    #[test]
    fn second_derivatives_match_differences() {
        let (law, c) = setup();
        let table = RegularizedPressureTable::build(&law, &c, 2000).unwrap();
        for law in [law, PressureLaw::power(1.3, 1.7, 0.25)] {
            for rho in [0.05, 0.2, 0.7, 3.1] {
                let d = 1e-5 * rho;
                let fd = (law.derivative(rho + d) - law.derivative(rho - d)) / (2.0 * d);
                let exact = law.second_derivative(rho);
                assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "{rho}: {fd} {exact}");
            }
        }
        for rho in [0.095, 0.2, 0.6, 3.4, 3.9] {
            let d = 1e-6;
            let fd = (table.p_prime(rho + d) - table.p_prime(rho - d)) / (2.0 * d);
            let exact = table.p_second(rho);
            assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "{rho}: {fd} {exact}");
        }
    }
}
