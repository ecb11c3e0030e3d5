//! Integration over ℝⁿ for bubble integrands.
//!
//! Three routes: radial (one compactified adaptive rule), axisymmetric
//! (nested adaptive rules in the axial coordinate `t` and transverse radius
//! `r`, used for every collinear configuration), and importance-sampled Monte
//! Carlo with a bubble-shaped mixture proposal for everything else.
//!
//! Products of bubble powers are evaluated as `exp(Σ e_i ln U_i)` so that
//! far-field factors never underflow before they are combined.

pub mod gk;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::bubbles::{kernel_value_axisym, Bubble, BubbleFamily, Kernel, ProblemParams};
use crate::error::{Error, Result};
use crate::interaction::q_pair;
pub use gk::{Estimate, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    Radial,
    Axisym,
    MonteCarlo,
}

/// Resolution and accuracy settings shared by all integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub mode: QuadMode,
    /// Segment budget per adaptive rule, or sample count for Monte Carlo.
    pub points: usize,
    /// Length `L` of the compactification `r = L ρ / (1 − ρ)`.
    pub compact_scale: f64,
    pub target_rel_err: f64,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            mode: QuadMode::Axisym,
            points: 4000,
            compact_scale: 1.0,
            target_rel_err: 1e-9,
            seed: 0x5eed,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel(mut self, rel: f64) -> Self {
        self.target_rel_err = rel;
        self
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            mode: QuadMode::MonteCarlo,
            points: samples,
            seed,
            target_rel_err: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 16 {
            return Err(Error::invalid(format!("quadrature points must be ≥ 16, got {}", self.points)));
        }
        if !(self.target_rel_err > 0.0 && self.target_rel_err <= 0.1) {
            return Err(Error::invalid(format!(
                "target relative error must lie in (0, 0.1], got {}",
                self.target_rel_err
            )));
        }
        if !(self.compact_scale > 0.0 && self.compact_scale.is_finite()) {
            return Err(Error::invalid("compactification scale must be positive"));
        }
        Ok(())
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance::new(self.target_rel_err, 0.0, self.points)
    }
}

/// `|S^{n−1}| = 2π^{n/2}/Γ(n/2)`, by the recursion `|S^{k+1}| = 2π|S^{k−1}|/k`.
pub fn sphere_area(n: usize) -> f64 {
    let mut area = if n.is_multiple_of(2) { 2.0 * std::f64::consts::PI } else { 2.0 };
    let mut k = if n.is_multiple_of(2) { 2 } else { 1 };
    while k < n {
        area *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereConstants {
    pub n: usize,
    pub surface_area: f64,
}

impl SphereConstants {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            surface_area: sphere_area(n),
        }
    }
}

fn accuracy_check(est: Estimate, what: &str) -> Result<Estimate> {
    if est.converged && est.value.is_finite() {
        Ok(est)
    } else {
        Err(Error::Accuracy {
            message: format!("{what} did not reach the requested tolerance"),
            estimate: est.value,
            error: est.error,
        })
    }
}

/// `|S^{n−1}| ∫₀^∞ f(r) r^{n−1} dr`; `breaks` are radii where `f` is not smooth.
pub fn integrate_radial_with_breaks<F>(f: F, n: usize, breaks: &[f64], spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    let pow = n as i32 - 1;
    let est = gk::adaptive_semi_infinite(
        |r| {
            let v = f(r);
            if v == 0.0 {
                0.0
            } else {
                v * r.powi(pow)
            }
        },
        0.0,
        spec.compact_scale,
        breaks,
        spec.tolerance(),
    );
    accuracy_check(est.scaled(sphere_area(n)), "radial integral")
}

pub fn integrate_radial<F: Fn(f64) -> f64>(f: F, params: &ProblemParams, spec: &QuadratureSpec) -> Result<Estimate> {
    integrate_radial_with_breaks(f, params.n(), &[], spec)
}

/// Geometric features of an axisymmetric integrand: point-like peaks on the
/// axis, spheres centered on the axis across which the integrand jumps or
/// kinks, and planes `t = const`.
#[derive(Debug, Clone, Default)]
pub struct AxisymFeatures {
    /// `(t, width)` of each peak.
    pub peaks: Vec<(f64, f64)>,
    /// `(t_center, radius)`.
    pub spheres: Vec<(f64, f64)>,
    pub planes: Vec<f64>,
}

impl AxisymFeatures {
    pub fn from_bubbles<'a>(bubbles: impl IntoIterator<Item = &'a Bubble>) -> Self {
        Self {
            peaks: bubbles.into_iter().map(|b| (b.axial(), 1.0 / b.scale())).collect(),
            ..Self::default()
        }
    }

    pub fn with_sphere(mut self, t: f64, radius: f64) -> Self {
        if radius > 0.0 && radius.is_finite() {
            self.spheres.push((t, radius));
        }
        self
    }

    pub fn with_plane(mut self, t: f64) -> Self {
        self.planes.push(t);
        self
    }

    fn axial_breaks(&self) -> Vec<f64> {
        let mut b = Vec::new();
        for &(t, w) in &self.peaks {
            b.extend([t - w, t, t + w]);
        }
        for &(t, rad) in &self.spheres {
            b.extend([t - rad, t + rad]);
        }
        b.extend(self.planes.iter().copied());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn radial_breaks(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        for &(tc, rad) in &self.spheres {
            let dt = t - tc;
            if dt.abs() < rad {
                out.push((rad * rad - dt * dt).sqrt());
            }
        }
        for &(tc, w) in &self.peaks {
            if (t - tc).abs() < w {
                out.push(w);
            }
        }
        out.sort_by(f64::total_cmp);
    }

    /// Length scale for compactifying the transverse direction at `t`.
    fn radial_scale(&self, t: f64, fallback: f64) -> f64 {
        self.peaks
            .iter()
            .map(|&(tc, w)| ((t - tc).powi(2) + w * w).sqrt())
            .fold(f64::INFINITY, f64::min)
            .min(fallback.max(1e-300))
    }

    fn extent(&self) -> f64 {
        let b = self.axial_breaks();
        match (b.first(), b.last()) {
            (Some(lo), Some(hi)) => (hi - lo).max(1e-300),
            _ => 1.0,
        }
    }
}

/// `|S^{n−2}| ∫∫ f(t, r) r^{n−2} dr dt` over the half-plane `r ≥ 0`.
pub fn integrate_axisym<F>(f: F, n: usize, features: &AxisymFeatures, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64, f64) -> f64,
{
    let est = integrate_axisym_raw(f, n, features, spec, 0.0)?;
    accuracy_check(est, "axisymmetric integral")
}

pub(crate) fn integrate_axisym_raw<F>(f: F, n: usize, features: &AxisymFeatures, spec: &QuadratureSpec, abs_floor: f64) -> Result<Estimate>
where
    F: Fn(f64, f64) -> f64,
{
    spec.validate()?;
    let pow = n as i32 - 2;
    let area = sphere_area(n - 1);
    let outer_tol = Tolerance::new(spec.target_rel_err * 0.5, abs_floor / area, spec.points);
    let breaks = features.axial_breaks();
    let tail_scale = features.extent().max(spec.compact_scale);
    // With a floor, each slice may stop at a share of it; without one the
    // slices are resolved to relative accuracy only.
    let inner_tol = Tolerance::new(spec.target_rel_err * 0.05, 0.05 * abs_floor / (area * tail_scale), spec.points);
    let mut inner_ok = true;
    let mut evals = 0usize;
    let mut rbreaks = Vec::new();
    let outer = gk::adaptive_whole_line(
        |t| {
            features.radial_breaks(t, &mut rbreaks);
            let scale = features.radial_scale(t, tail_scale);
            let e = gk::adaptive_semi_infinite(
                |r| {
                    let v = f(t, r);
                    if v == 0.0 {
                        0.0
                    } else {
                        v * r.powi(pow)
                    }
                },
                0.0,
                scale,
                &rbreaks,
                inner_tol,
            );
            inner_ok &= e.converged;
            evals += e.evaluations;
            e.value
        },
        &breaks,
        tail_scale,
        outer_tol,
    );
    Ok(Estimate {
        value: outer.value * area,
        error: (outer.error + inner_tol.rel * outer.value.abs()) * area,
        evaluations: evals,
        converged: outer.converged && inner_ok,
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub effective_samples: f64,
    pub seed: u64,
}

const MC_DOF: f64 = 2.0;
const MC_CHUNK: usize = 8192;

/// Mixture of multivariate Student-t components, one per bubble, each with
/// the bubble's center and width.
struct MixtureProposal<'a> {
    bubbles: &'a [Bubble],
    log_norm: f64,
    n: usize,
}

impl<'a> MixtureProposal<'a> {
    fn new(bubbles: &'a [Bubble], n: usize) -> Self {
        let nf = n as f64;
        let log_norm = ln_gamma((MC_DOF + nf) / 2.0) - ln_gamma(MC_DOF / 2.0) - 0.5 * nf * (MC_DOF * std::f64::consts::PI).ln();
        Self { bubbles, log_norm, n }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, chi: &ChiSquared<f64>, x: &mut [f64]) {
        let b = &self.bubbles[rng.gen_range(0..self.bubbles.len())];
        let w: f64 = chi.sample(rng);
        let s = (MC_DOF / w).sqrt() / b.scale();
        for (xi, zi) in x.iter_mut().zip(b.center()) {
            let g: f64 = StandardNormal.sample(rng);
            *xi = zi + s * g;
        }
    }

    fn density(&self, x: &[f64]) -> f64 {
        let nf = self.n as f64;
        let sum: f64 = self
            .bubbles
            .iter()
            .map(|b| {
                let y2 = b.scaled_dist2(x);
                (self.log_norm + nf * b.scale().ln() - 0.5 * (MC_DOF + nf) * (y2 / MC_DOF).ln_1p()).exp()
            })
            .sum();
        sum / self.bubbles.len() as f64
    }
}

/// Importance-sampled `∫ f` with a proposal built from `family`. Samples are
/// drawn in fixed-size chunks, each with its own stream derived from the
/// seed, so the result does not depend on the thread count.
pub fn integrate_mc_importance<F>(f: F, family: &BubbleFamily, spec: &QuadratureSpec) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let n = family.params().n();
    let proposal = MixtureProposal::new(family.bubbles(), n);
    let chunks = spec.points.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(c as u64);
            let chi = ChiSquared::new(MC_DOF).expect("positive dof");
            let count = MC_CHUNK.min(spec.points - c * MC_CHUNK);
            let mut x = vec![0.0; n];
            let (mut s1, mut s2, mut sa) = (0.0, 0.0, 0.0);
            for _ in 0..count {
                proposal.sample(&mut rng, &chi, &mut x);
                let g = proposal.density(&x);
                let w = if g > 0.0 { f(&x) / g } else { 0.0 };
                if w.is_finite() {
                    s1 += w;
                    s2 += w * w;
                    sa += w.abs();
                }
            }
            (s1, s2, sa, count)
        })
        .collect();
    let (mut s1, mut s2, mut sa, mut m) = (0.0, 0.0, 0.0, 0usize);
    for (a, b, c, k) in partial {
        s1 += a;
        s2 += b;
        sa += c;
        m += k;
    }
    let mf = m as f64;
    let mean = s1 / mf;
    let var = (s2 / mf - mean * mean).max(0.0);
    let ess = if s2 > 0.0 { sa * sa / s2 } else { 0.0 };
    if ess < 1.0 {
        return Err(Error::Accuracy {
            message: "importance sampling has zero effective sample size".into(),
            estimate: mean,
            error: f64::INFINITY,
        });
    }
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / mf).sqrt(),
        samples: m,
        effective_samples: ess,
        seed: spec.seed,
    })
}

/// Value of a bubble-product integral together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralValue {
    pub value: f64,
    /// Absolute error estimate (deterministic) or standard error (Monte Carlo).
    pub error: f64,
    pub mode: QuadMode,
}

impl From<Estimate> for IntegralValue {
    fn from(e: Estimate) -> Self {
        Self {
            value: e.value,
            error: e.error,
            mode: QuadMode::Axisym,
        }
    }
}

fn check_exponents(params: &ProblemParams, exps: &[f64]) -> Result<()> {
    if exps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::invalid("exponents must be finite and nonnegative"));
    }
    let sum: f64 = exps.iter().sum();
    if (sum - params.two_star()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "exponents must sum to 2* = {}, got {sum}",
            params.two_star()
        )));
    }
    Ok(())
}

fn all_concentric(bubbles: &[&Bubble]) -> bool {
    bubbles.windows(2).all(|w| w[0].center() == w[1].center())
}

/// `∫ Π U_i^{e_i}` for any family: radial when all centers coincide,
/// axisymmetric when they are collinear, Monte Carlo otherwise.
pub fn product_integral(family: &BubbleFamily, exps: &[f64], spec: &QuadratureSpec) -> Result<IntegralValue> {
    let params = *family.params();
    if exps.len() != family.len() {
        return Err(Error::invalid("one exponent per bubble is required"));
    }
    let refs: Vec<&Bubble> = family.bubbles().iter().collect();
    if spec.mode != QuadMode::MonteCarlo && all_concentric(&refs) {
        let breaks: Vec<f64> = refs.iter().map(|b| 1.0 / b.scale()).collect();
        let est = integrate_radial_with_breaks(
            |r| {
                let l: f64 = refs
                    .iter()
                    .zip(exps)
                    .filter(|(_, e)| **e != 0.0)
                    .map(|(b, e)| e * b.ln_value_from_y2(&params, b.scale() * b.scale() * r * r))
                    .sum();
                l.exp()
            },
            params.n(),
            &breaks,
            spec,
        )?;
        return Ok(IntegralValue {
            mode: QuadMode::Radial,
            ..est.into()
        });
    }
    if spec.mode != QuadMode::MonteCarlo {
        if let Ok(aligned) = family.aligned_to_axis() {
            let bs = aligned.bubbles();
            let feats = AxisymFeatures::from_bubbles(bs);
            let est = integrate_axisym(
                |t, r| {
                    let l: f64 = bs
                        .iter()
                        .zip(exps)
                        .filter(|(_, e)| **e != 0.0)
                        .map(|(b, e)| e * b.ln_value_from_y2(&params, b.scaled_dist2_axisym(t, r)))
                        .sum();
                    l.exp()
                },
                params.n(),
                &feats,
                spec,
            )?;
            return Ok(est.into());
        }
    }
    let mc_spec = if spec.mode == QuadMode::MonteCarlo {
        *spec
    } else {
        QuadratureSpec {
            mode: QuadMode::MonteCarlo,
            points: spec.points.max(1 << 20),
            ..*spec
        }
    };
    let bubbles = family.bubbles();
    let mc = integrate_mc_importance(
        |x| {
            let l: f64 = bubbles
                .iter()
                .zip(exps)
                .filter(|(_, e)| **e != 0.0)
                .map(|(b, e)| e * b.ln_value_from_y2(&params, b.scaled_dist2(x)))
                .sum();
            l.exp()
        },
        family,
        &mc_spec,
    )?;
    Ok(IntegralValue {
        value: mc.estimate,
        error: mc.std_error,
        mode: QuadMode::MonteCarlo,
    })
}

/// `∫ U₁^α U₂^β` with `α + β = 2*`.
pub fn pair_integral(
    params: &ProblemParams,
    b1: &Bubble,
    b2: &Bubble,
    alpha: f64,
    beta: f64,
    spec: &QuadratureSpec,
) -> Result<IntegralValue> {
    check_exponents(params, &[alpha, beta])?;
    let fam = BubbleFamily::new(*params, vec![b1.clone(), b2.clone()])?;
    product_integral(&fam, &[alpha, beta], spec)
}

/// `∫ U₁^{e₁} U₂^{e₂} U₃^{e₃}` with exponents summing to `2*`.
pub fn triple_integral(params: &ProblemParams, bubbles: [&Bubble; 3], exps: [f64; 3], spec: &QuadratureSpec) -> Result<IntegralValue> {
    check_exponents(params, &exps)?;
    let fam = BubbleFamily::new(*params, bubbles.iter().map(|b| (*b).clone()).collect())?;
    product_integral(&fam, &exps, spec)
}

/// `∫ U_i^p λ_k ∂_{λ_k} U_k` for two distinct bubbles.
pub fn lambda_deriv_integral(params: &ProblemParams, bi: &Bubble, bk: &Bubble, spec: &QuadratureSpec) -> Result<IntegralValue> {
    if bi == bk {
        return Err(Error::invalid("the λ-derivative integral needs two distinct bubbles"));
    }
    let fam = BubbleFamily::new(*params, vec![bi.clone(), bk.clone()])?;
    let p = params.p();
    if spec.mode == QuadMode::MonteCarlo {
        let (bi, bk) = (&fam.bubbles()[0], &fam.bubbles()[1]);
        let mc = integrate_mc_importance(
            |x| {
                let ui = bi.value_from_y2(params, bi.scaled_dist2(x));
                crate::bubbles::kernel_value(params, bk, Kernel::Dilation, x) * ui.powf(p)
            },
            &fam,
            spec,
        )?;
        return Ok(IntegralValue {
            value: mc.estimate,
            error: mc.std_error,
            mode: QuadMode::MonteCarlo,
        });
    }
    let al = fam.aligned_to_axis()?;
    let (ai, ak) = (&al.bubbles()[0], &al.bubbles()[1]);
    // The dilation kernel changes sign on the sphere |y_k| = 1.
    let feats = AxisymFeatures::from_bubbles(al.bubbles()).with_sphere(ak.axial(), 1.0 / ak.scale());
    let q = q_pair(params, bi, bk);
    let est = integrate_axisym_abs_floor(
        |t, r| {
            let ui = ai.value_from_y2(params, ai.scaled_dist2_axisym(t, r));
            ui.powf(p) * kernel_value_axisym(params, ak, Kernel::Dilation, t, r)
        },
        params.n(),
        &feats,
        spec,
        1e-3 * spec.target_rel_err * q,
    )?;
    Ok(est.into())
}

/// Axisymmetric integral that also accepts an absolute error floor, for
/// integrands with sign changes whose value may be much smaller than the
/// mass of their absolute value.
pub(crate) fn integrate_axisym_abs_floor<F>(
    f: F,
    n: usize,
    features: &AxisymFeatures,
    spec: &QuadratureSpec,
    abs_floor: f64,
) -> Result<Estimate>
where
    F: Fn(f64, f64) -> f64,
{
    let est = integrate_axisym_raw(f, n, features, spec, abs_floor)?;
    if (est.converged || est.error <= abs_floor) && est.value.is_finite() {
        Ok(Estimate { converged: true, ..est })
    } else {
        accuracy_check(est, "axisymmetric integral")
    }
}

/// `∫ U_i^β · min(U_i, U_j)^α`, for `α > β > 1`, `α + β = 2*`.
pub fn inf_integral(
    params: &ProblemParams,
    bi: &Bubble,
    bj: &Bubble,
    alpha: f64,
    beta: f64,
    spec: &QuadratureSpec,
) -> Result<IntegralValue> {
    check_exponents(params, &[alpha, beta])?;
    if !(alpha > beta && beta > 1.0) {
        return Err(Error::invalid(format!("need α > β > 1, got α = {alpha}, β = {beta}")));
    }
    let fam = BubbleFamily::new(*params, vec![bi.clone(), bj.clone()])?;
    let integrand = |li: f64, lj: f64| (beta * li + alpha * li.min(lj)).exp();
    if spec.mode == QuadMode::MonteCarlo {
        let (a, b) = (&fam.bubbles()[0], &fam.bubbles()[1]);
        let mc = integrate_mc_importance(
            |x| {
                integrand(
                    a.ln_value_from_y2(params, a.scaled_dist2(x)),
                    b.ln_value_from_y2(params, b.scaled_dist2(x)),
                )
            },
            &fam,
            spec,
        )?;
        return Ok(IntegralValue {
            value: mc.estimate,
            error: mc.std_error,
            mode: QuadMode::MonteCarlo,
        });
    }
    let al = fam.aligned_to_axis()?;
    let (a, b) = (&al.bubbles()[0], &al.bubbles()[1]);
    let mut feats = AxisymFeatures::from_bubbles(al.bubbles());
    match equal_value_surface(a, b) {
        Some(Surface::Plane(t)) => feats = feats.with_plane(t),
        Some(Surface::Sphere(t, rad)) => feats = feats.with_sphere(t, rad),
        None => {}
    }
    let est = integrate_axisym(
        |t, r| {
            integrand(
                a.ln_value_from_y2(params, a.scaled_dist2_axisym(t, r)),
                b.ln_value_from_y2(params, b.scaled_dist2_axisym(t, r)),
            )
        },
        params.n(),
        &feats,
        spec,
    )?;
    Ok(est.into())
}

enum Surface {
    Plane(f64),
    Sphere(f64, f64),
}

/// The set `{U_a = U_b}` for two on-axis bubbles: a plane when the scales
/// agree, otherwise a sphere centered on the axis.
fn equal_value_surface(a: &Bubble, b: &Bubble) -> Option<Surface> {
    let (la, lb) = (a.scale(), b.scale());
    let (ta, tb) = (a.axial(), b.axial());
    if la == lb {
        return (ta != tb).then_some(Surface::Plane(0.5 * (ta + tb)));
    }
    // λ_b|x − z_b|² − λ_a|x − z_a|² = (λ_b − λ_a)/(λ_a λ_b)
    let d = lb - la;
    let c = (lb * tb - la * ta) / d;
    let r2 = c * c - (lb * tb * tb - la * ta * ta) / d + 1.0 / (la * lb);
    (r2 > 0.0).then(|| Surface::Sphere(c, r2.sqrt()))
}

/// Gram matrix `G[a][b] = ∫ U_i^{p−1} Z_i^a Z_j^b`, indices `0..=n`
/// (translations then dilation), in the coordinates of the input bubbles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelGram {
    pub entries: Vec<Vec<f64>>,
    /// Entries in the frame whose first axis joins the two centers:
    /// `[axial·axial, axial·dilation, dilation·axial, dilation·dilation, transverse·transverse]`.
    pub aligned: [f64; 5],
}

pub fn kernel_gram(params: &ProblemParams, bi: &Bubble, bj: &Bubble, spec: &QuadratureSpec) -> Result<KernelGram> {
    let n = params.n();
    let fam = BubbleFamily::new(*params, vec![bi.clone(), bj.clone()])?;
    let al = fam.aligned_to_axis()?;
    let (a, b) = (&al.bubbles()[0], &al.bubbles()[1]);
    let pm1 = params.p() - 1.0;
    let nm2 = n as f64 - 2.0;
    let feats = AxisymFeatures::from_bubbles(al.bubbles())
        .with_sphere(a.axial(), 1.0 / a.scale())
        .with_sphere(b.axial(), 1.0 / b.scale());
    // All entries are bounded by a multiple of ∫ U_i^{p−1} U_i U_j; use it as
    // the absolute scale for entries that vanish by symmetry.
    let mass = product_integral(&al, &[params.p(), 1.0], spec)?.value;
    let floor = 1e-10 * mass;
    let entry = |ka: Kernel, kb: Kernel| -> Result<f64> {
        integrate_axisym_abs_floor(
            |t, r| {
                let ua = a.value_from_y2(params, a.scaled_dist2_axisym(t, r));
                ua.powf(pm1) * kernel_value_axisym(params, a, ka, t, r) * kernel_value_axisym(params, b, kb, t, r)
            },
            n,
            &feats,
            spec,
            floor,
        )
        .map(|e| e.value)
    };
    let tt = entry(Kernel::Translation(0), Kernel::Translation(0))?;
    let td = entry(Kernel::Translation(0), Kernel::Dilation)?;
    let dt = entry(Kernel::Dilation, Kernel::Translation(0))?;
    let dd = entry(Kernel::Dilation, Kernel::Dilation)?;
    // Transverse: Z^a = f · x_a with x_a² averaging to r²/(n−1) over the
    // transverse sphere.
    let trans = integrate_axisym_abs_floor(
        |t, r| {
            let ya2 = a.scaled_dist2_axisym(t, r);
            let yb2 = b.scaled_dist2_axisym(t, r);
            let ua = a.value_from_y2(params, ya2);
            let ub = b.value_from_y2(params, yb2);
            let fa = nm2 * ua * a.scale() / (1.0 + ya2);
            let fb = nm2 * ub * b.scale() / (1.0 + yb2);
            ua.powf(pm1) * fa * fb * r * r / (n as f64 - 1.0)
        },
        n,
        &feats,
        spec,
        floor,
    )?
    .value;

    // Rotate back: the aligned axis is the unit vector from center i to j
    // (any direction when the centers coincide, where the block is isotropic).
    let dir = axis_direction(bi, bj);
    let mut entries = vec![vec![0.0; n + 1]; n + 1];
    for ia in 0..n {
        for ib in 0..n {
            let delta = if ia == ib { 1.0 } else { 0.0 };
            entries[ia][ib] = dir[ia] * dir[ib] * tt + (delta - dir[ia] * dir[ib]) * trans;
        }
        entries[ia][n] = dir[ia] * td;
        entries[n][ia] = dir[ia] * dt;
    }
    entries[n][n] = dd;
    Ok(KernelGram {
        entries,
        aligned: [tt, td, dt, dd, trans],
    })
}

fn axis_direction(bi: &Bubble, bj: &Bubble) -> Vec<f64> {
    let n = bi.dim();
    let d: Vec<f64> = bj.center().iter().zip(bi.center()).map(|(b, a)| b - a).collect();
    let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len == 0.0 {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    } else {
        d.into_iter().map(|v| v / len).collect()
    }
}
