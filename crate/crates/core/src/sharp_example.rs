//! The symmetric two-bubble configuration `U[−Re₁, 1] + U[Re₁, 1]` at large
//! `R`, its matched first-order correction, and the lower bound it forces on
//! the distance to the bubble manifold.
//!
//! The correction is
//!
//! ```text
//! φ = R^{2−n}[φ₁(y₁)η₁ + φ₂(y₂)η₂] + R^{−n}φ₃(x/R)(1 − η₁ − η₂)
//! ```
//!
//! with inner profiles `φ_i(y) = A₀⟨y⟩^{−2}` and the two-pole outer profile
//! `φ₃(ξ) = A₀(|ξ − ẑ₁|^{−2} + |ξ − ẑ₂|^{−2})`. Both are the leading
//! asymptotics, not exact solutions.

use std::sync::Arc;

use serde::Serialize;

use crate::bubbles::{interaction_error_from_values, Bubble, BubbleFamily, ProblemParams};
use crate::error::{Error, Result};
use crate::fit::{band_width, loglog_slope};
use crate::interaction::family_report;
use crate::norms::{hminus1_kernel_span, KernelTerm};
use crate::quadrature::{integrate_axisym, integrate_radial_with_breaks, AxisymFeatures, QuadratureSpec};
use crate::reduction::{solve_projected_linear, solve_rho0, AxisymField, AxisymGrid, FixedPointOptions, GridPolicy, ReductionSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpExampleConfig {
    n: usize,
    r: f64,
    s: f64,
    a0: f64,
}

impl SharpExampleConfig {
    pub fn new(n: usize, r: f64) -> Result<Self> {
        Self::with_s(n, r, 0.5)
    }

    pub fn with_s(n: usize, r: f64, s: f64) -> Result<Self> {
        if n < 6 {
            return Err(Error::invalid(format!("the sharp example needs n ≥ 6, got {n}")));
        }
        if !(r >= 10.0 && r.is_finite()) {
            return Err(Error::invalid(format!("half-separation R must be at least 10, got {r}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid(format!("matching exponent s must lie in (0, 1), got {s}")));
        }
        let pp = ProblemParams::new(n)?;
        let a0 = 2f64.powi(1 - n as i32) * pp.alpha().powf(pp.p()) / (n as f64 - 4.0);
        Ok(Self { n, r, s, a0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    /// `A₀ = 2^{1−n} α_n^p / (n − 4)`.
    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn params(&self) -> ProblemParams {
        ProblemParams::new(self.n).expect("validated dimension")
    }

    pub fn family(&self) -> BubbleFamily {
        BubbleFamily::on_axis(self.params(), &[(-self.r, 1.0), (self.r, 1.0)]).expect("valid bubbles")
    }

    /// Inner edge of the matching annulus, `R^{1−s}`.
    pub fn matching_radius(&self) -> f64 {
        self.r.powf(1.0 - self.s)
    }

    /// `η(t)`: 1 below `R^{1−s}`, 0 above `2R^{1−s}`, quintic smoothstep
    /// between.
    pub fn cutoff(&self, t: f64) -> f64 {
        let a = self.matching_radius();
        let u = ((t - a) / a).clamp(0.0, 1.0);
        1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedApproximation {
    pub config: SharpExampleConfig,
}

impl MatchedApproximation {
    /// `φ_i(y) = A₀⟨y⟩^{−2}`.
    pub fn inner(&self, y: f64) -> f64 {
        self.config.a0 / (1.0 + y * y)
    }

    /// `R^{−n} φ₃(x/R)` in terms of the distances to the two centers.
    pub fn outer_scaled(&self, d1: f64, d2: f64) -> f64 {
        let c = &self.config;
        c.r.powi(2 - c.n as i32) * c.a0 * (1.0 / (d1 * d1) + 1.0 / (d2 * d2))
    }

    /// `φ` at `(t, r)`.
    pub fn eval(&self, t: f64, r: f64) -> f64 {
        let c = &self.config;
        let d1 = (t + c.r).hypot(r);
        let d2 = (t - c.r).hypot(r);
        let (e1, e2) = (c.cutoff(d1), c.cutoff(d2));
        let scale = c.r.powi(2 - c.n as i32);
        let inner = scale * (self.inner(d1) * e1 + self.inner(d2) * e2);
        let w = 1.0 - e1 - e2;
        if w > 0.0 {
            inner + self.outer_scaled(d1, d2) * w
        } else {
            inner
        }
    }

    /// Inner over outer piece at `|y₁| = R^{1−s}` on the segment between the
    /// centers.
    pub fn matching_ratio(&self) -> f64 {
        let c = &self.config;
        let rho = c.matching_radius();
        c.r.powi(2 - c.n as i32) * self.inner(rho) / self.outer_scaled(rho, 2.0 * c.r - rho)
    }
}

pub fn build_matched_phi(config: &SharpExampleConfig) -> MatchedApproximation {
    MatchedApproximation { config: *config }
}

/// `∫(σ^p − U₁^p − U₂^p) φ` over the shells `R^{1−s} ≤ |y_i| ≤ R`.
pub fn lower_bound_integral(approx: &MatchedApproximation, spec: &QuadratureSpec) -> Result<f64> {
    let c = approx.config;
    let pp = c.params();
    let fam = c.family();
    let bs = fam.bubbles();
    let (inner, outer) = (c.matching_radius(), c.r);
    // By the reflection symmetry the two shells contribute equally.
    let feats = AxisymFeatures::from_bubbles(bs)
        .with_sphere(-c.r, inner)
        .with_sphere(-c.r, 2.0 * inner)
        .with_sphere(-c.r, outer);
    let est = integrate_axisym(
        |t, r| {
            let d = (t + c.r).hypot(r);
            if d < inner || d > outer {
                return 0.0;
            }
            let vals = [
                bs[0].value_from_y2(&pp, bs[0].scaled_dist2_axisym(t, r)),
                bs[1].value_from_y2(&pp, bs[1].scaled_dist2_axisym(t, r)),
            ];
            interaction_error_from_values(pp.p(), &vals) * approx.eval(t, r)
        },
        c.n,
        &feats,
        spec,
    )?;
    Ok(2.0 * est.value)
}

/// `∫_{R^{1−s} ≤ |y| ≤ R} ⟨y⟩^{−6} dy` by radial quadrature.
pub fn shell_moment(config: &SharpExampleConfig, spec: &QuadratureSpec) -> Result<f64> {
    let (a, b) = (config.matching_radius(), config.r);
    let e = integrate_radial_with_breaks(
        |r| if r < a || r > b { 0.0 } else { (1.0 + r * r).powi(-3) },
        config.n,
        &[a, b],
        spec,
    )?;
    Ok(e.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSource {
    /// `∥Σ c U^{p−1} Z∥_{H⁻¹}` from solved multipliers.
    Solved,
    /// `c R^{2−n}` with `c` calibrated on a solved instance.
    Calibrated,
    /// Single bubble: no interaction and no forcing.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaValue {
    pub value: f64,
    pub source: GammaSource,
}

/// `Γ = ∥Σ c_a^j U_j^{p−1} Z_j^a∥_{H⁻¹}` for the multipliers of a solve.
pub fn gamma_from_solution(family: &BubbleFamily, sol: &ReductionSolution, spec: &QuadratureSpec) -> Result<f64> {
    if family.len() < 2 {
        return Ok(0.0);
    }
    let terms: Vec<KernelTerm> = sol
        .multipliers
        .iter()
        .map(|m| KernelTerm {
            bubble: m.bubble,
            kernel: m.kernel,
            coeff: m.value,
        })
        .collect();
    hminus1_kernel_span(family, &terms, spec)
}

/// Calibration `Γ ≈ c R^{2−n}` from one solved instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaCalibration {
    pub n: usize,
    pub r_ref: f64,
    pub c: f64,
}

impl GammaCalibration {
    pub fn from_solution(config: &SharpExampleConfig, sol: &ReductionSolution, spec: &QuadratureSpec) -> Result<Self> {
        let g = gamma_from_solution(&config.family(), sol, spec)?;
        Ok(Self {
            n: config.n,
            r_ref: config.r,
            c: g * config.r.powi(config.n as i32 - 2),
        })
    }

    pub fn proxy(&self, r: f64) -> f64 {
        self.c * r.powi(2 - self.n as i32)
    }
}

/// `Γ` for a configuration: from a solve if one is given, else from the
/// calibrated scaling law.
pub fn gamma_proxy(
    config: &SharpExampleConfig,
    solved: Option<&ReductionSolution>,
    calibration: Option<&GammaCalibration>,
    spec: &QuadratureSpec,
) -> Result<GammaValue> {
    if let Some(sol) = solved {
        return Ok(GammaValue {
            value: gamma_from_solution(&config.family(), sol, spec)?,
            source: GammaSource::Solved,
        });
    }
    match calibration {
        Some(cal) if cal.n == config.n => Ok(GammaValue {
            value: cal.proxy(config.r),
            source: GammaSource::Calibrated,
        }),
        Some(_) => Err(Error::invalid("calibration was made for a different dimension")),
        None => Err(Error::invalid("gamma_proxy needs a solved instance or a calibration")),
    }
}

/// `Γ` of a single-bubble request.
pub fn gamma_single_bubble() -> GammaValue {
    GammaValue {
        value: 0.0,
        source: GammaSource::Trivial,
    }
}

/// Solves for `ρ₀` of the configuration on a graded grid.
pub fn solve_configuration(config: &SharpExampleConfig, policy: &GridPolicy) -> Result<ReductionSolution> {
    let fam = config.family();
    let grid = Arc::new(AxisymGrid::for_family(&fam, policy)?);
    solve_rho0(&fam, grid, &FixedPointOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpPoint {
    pub r: f64,
    pub q: f64,
    pub gamma: f64,
    pub gamma_source: GammaSource,
    /// `√(lower bound integral)`.
    pub delta_lower: f64,
    pub lower_bound: f64,
    /// `∥∇ρ₀∥` when the reduction was run.
    pub rho0_grad: Option<f64>,
    pub matching_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub n: usize,
    pub use_reduction: bool,
    pub points: Vec<SharpPoint>,
    /// Slope of `log δ` against `log Γ`.
    pub slope: f64,
    /// `δ / (Γ |log Γ|^{1/2})` per point.
    pub log_ratios: Vec<f64>,
    /// `max/min` of `log_ratios`.
    pub log_band: f64,
    pub calibration: Option<GammaCalibration>,
}

/// Pairs `(Γ, δ)` along a sweep in `R` and fits `δ ∝ Γ^κ`.
///
/// Without the reduction, `δ` is the square root of the lower-bound integral
/// and `Γ` the scaling law calibrated on the smallest-`R` solve. With it,
/// `δ = ∥∇ρ₀∥` and `Γ` comes from the multipliers of each solve.
pub fn exponent_fit(
    configs: &[SharpExampleConfig],
    use_reduction: bool,
    policy: &GridPolicy,
    spec: &QuadratureSpec,
) -> Result<ExponentFit> {
    if configs.len() < 4 {
        return Err(Error::invalid("an exponent fit needs at least four configurations"));
    }
    let n = configs[0].n;
    if configs.iter().any(|c| c.n != n) {
        return Err(Error::invalid("all configurations must share the dimension"));
    }
    if configs.windows(2).any(|w| w[1].r <= w[0].r) {
        return Err(Error::invalid("configurations must be sorted by increasing R"));
    }
    let mut calibration = None;
    if !use_reduction {
        let smallest = configs[0];
        let sol = solve_configuration(&smallest, policy)?;
        calibration = Some(GammaCalibration::from_solution(&smallest, &sol, spec)?);
    }
    let mut points = Vec::with_capacity(configs.len());
    for c in configs {
        let approx = build_matched_phi(c);
        let lb = lower_bound_integral(&approx, spec)?;
        let q = family_report(&c.family(), 1.0).q_max;
        let (gamma, rho0_grad) = if use_reduction {
            let sol = solve_configuration(c, policy)?;
            (gamma_proxy(c, Some(&sol), None, spec)?, Some(sol.phi.h1_gradient_norm()))
        } else {
            (gamma_proxy(c, None, calibration.as_ref(), spec)?, None)
        };
        points.push(SharpPoint {
            r: c.r,
            q,
            gamma: gamma.value,
            gamma_source: gamma.source,
            delta_lower: lb.max(0.0).sqrt(),
            lower_bound: lb,
            rho0_grad,
            matching_ratio: approx.matching_ratio(),
        });
    }
    let delta = |p: &SharpPoint| p.rho0_grad.unwrap_or(p.delta_lower);
    let gs: Vec<f64> = points.iter().map(|p| p.gamma).collect();
    let ds: Vec<f64> = points.iter().map(delta).collect();
    let slope = loglog_slope(&gs, &ds, false)?.slope;
    let log_ratios: Vec<f64> = points.iter().map(|p| delta(p) / (p.gamma * p.gamma.ln().abs().sqrt())).collect();
    Ok(ExponentFit {
        n,
        use_reduction,
        log_band: band_width(&log_ratios),
        points,
        slope,
        log_ratios,
        calibration,
    })
}

/// Solves the inner problem `Δφ + pU₁^{p−1}φ = −R^{n−2}U₁^{p−1}U₂χ{|y₁|<R}`
/// orthogonally to the kernels of `U₁` and returns `|y|²φ(y)/A₀` sampled at
/// the given distances from `z₁` along the transverse direction.
pub fn inner_profile_check(config: &SharpExampleConfig, policy: &GridPolicy, radii: &[f64]) -> Result<Vec<f64>> {
    let pp = config.params();
    let b1 = Bubble::on_axis(config.n, 0.0, 1.0)?;
    let b2 = Bubble::on_axis(config.n, 2.0 * config.r, 1.0)?;
    let single = BubbleFamily::new(pp, vec![b1.clone()])?;
    let pol = GridPolicy {
        outer_factor: policy.outer_factor * config.r,
        ..*policy
    };
    let grid = Arc::new(AxisymGrid::for_family(&single, &pol)?);
    let scale = config.r.powi(config.n as i32 - 2);
    let p = pp.p();
    let h = AxisymField::from_fn(grid, |t, r| {
        if t.hypot(r) >= config.r {
            return 0.0;
        }
        let u1 = b1.value_from_y2(&pp, b1.scaled_dist2_axisym(t, r));
        let u2 = b2.value_from_y2(&pp, b2.scaled_dist2_axisym(t, r));
        -scale * u1.powf(p - 1.0) * u2
    })?;
    let sol = solve_projected_linear(&single, &h)?;
    Ok(radii.iter().map(|&y| y * y * sol.phi.interpolate(0.0, y) / config.a0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::sphere_area;

    #[test]
    fn config_validation() {
        assert!(SharpExampleConfig::new(5, 20.0).is_err());
        assert!(SharpExampleConfig::new(7, 5.0).is_err());
        assert!(SharpExampleConfig::with_s(7, 20.0, 1.0).is_err());
        let c = SharpExampleConfig::new(6, 20.0).unwrap();
        // A₀ = 2^{−5} · 24² / 2 for n = 6.
        assert!((c.a0() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn cutoff_shape() {
        let c = SharpExampleConfig::new(7, 100.0).unwrap();
        assert_eq!(c.cutoff(5.0), 1.0);
        assert_eq!(c.cutoff(10.0), 1.0);
        assert_eq!(c.cutoff(20.0), 0.0);
        assert!((c.cutoff(15.0) - 0.5).abs() < 1e-12);
        let mut prev = 1.0;
        for k in 0..=100 {
            let v = c.cutoff(10.0 + 0.1 * k as f64);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn matched_phi_symmetry_and_decay() {
        let a = build_matched_phi(&SharpExampleConfig::new(7, 20.0).unwrap());
        for &(t, r) in &[(3.0, 1.0), (19.0, 0.5), (40.0, 7.0)] {
            assert_eq!(a.eval(t, r), a.eval(-t, r));
        }
        assert!(a.eval(1e4, 0.0) < 1e-6 * a.eval(20.0, 0.0));
    }

    #[test]
    fn matching_ratio_tends_to_one() {
        let mut prev = 0.0;
        for r in [20.0, 40.0, 80.0, 160.0, 1e4] {
            let m = build_matched_phi(&SharpExampleConfig::new(7, r).unwrap()).matching_ratio();
            assert!(m > prev && m < 1.0);
            prev = m;
        }
        assert!(prev > 0.99);
    }

    #[test]
    fn shell_moment_matches_leading_term() {
        let c = SharpExampleConfig::new(7, 80.0).unwrap();
        let m = shell_moment(&c, &QuadratureSpec::default()).unwrap();
        let approx = sphere_area(7) * (c.r() - c.matching_radius());
        assert!((m / approx - 1.0).abs() < 0.05, "{m} vs {approx}");
    }
}
