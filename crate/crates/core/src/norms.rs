//! The weights `V`, `W` and the weighted sup-norms `∥h∥_** = sup |h|/V`,
//! `∥φ∥_* = sup |φ|/W`, plus Ḣ¹ and H⁻¹ norms.
//!
//! Suprema are sampled on a declared lattice: logarithmic shells around every
//! bubble crossed with an angular stencil, plus points along the segments
//! joining the centers.

use rayon::prelude::*;
use serde::Serialize;

use crate::bubbles::{Bubble, BubbleFamily, Kernel, ProblemParams};
use crate::error::{Error, Result};
use crate::interaction::family_report;
use crate::quadrature::{self, sphere_area, Estimate, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Weight {
    V,
    W,
}

/// `V` and `W` of a family at cutoff radius `R`.
#[derive(Debug, Clone)]
pub struct WeightProfile {
    family: BubbleFamily,
    cutoff: f64,
}

impl WeightProfile {
    /// Cutoff `R = ½ min R_ij`. Needs at least two bubbles.
    pub fn new(family: BubbleFamily) -> Result<Self> {
        let r = family_report(&family, 1.0)
            .r_half_min
            .ok_or_else(|| Error::invalid("a single bubble has no separation scale; pass the cutoff explicitly"))?;
        Ok(Self { family, cutoff: r })
    }

    /// Explicit cutoff. When the family has a pair the cutoff may not exceed
    /// `½ min R_ij`.
    pub fn with_cutoff(family: BubbleFamily, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::invalid(format!("cutoff must be positive and finite, got {cutoff}")));
        }
        if let Some(r) = family_report(&family, 1.0).r_half_min {
            if cutoff > r * (1.0 + 1e-12) {
                return Err(Error::invalid(format!("cutoff {cutoff} exceeds ½ min R_ij = {r}")));
            }
        }
        Ok(Self { family, cutoff })
    }

    pub fn family(&self) -> &BubbleFamily {
        &self.family
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// `(w_{i,1}, w_{i,2})` at squared scaled distance `y2 = |y_i|²`.
    pub fn w_components(&self, i: usize, y2: f64) -> (f64, f64) {
        let b = &self.family.bubbles()[i];
        let n = self.family.params().n() as f64;
        self.components(y2, b.scale().powf((n - 2.0) / 2.0), 2.0, n - 4.0)
    }

    /// `(v_{i,1}, v_{i,2})` at `|y_i|² = y2`.
    pub fn v_components(&self, i: usize, y2: f64) -> (f64, f64) {
        let b = &self.family.bubbles()[i];
        let n = self.family.params().n() as f64;
        self.components(y2, b.scale().powf((n + 2.0) / 2.0), 4.0, n - 2.0)
    }

    fn components(&self, y2: f64, amp: f64, inner_pow: f64, outer_pow: f64) -> (f64, f64) {
        let n = self.family.params().n() as f64;
        let r = self.cutoff;
        let ln_br = (1.0 + y2).ln();
        let inner = if y2 <= r * r {
            amp * r.powf(2.0 - n) * (-0.5 * inner_pow * ln_br).exp()
        } else {
            0.0
        };
        let outer = if y2 >= 0.25 * r * r {
            amp * r.powi(-4) * (-0.5 * outer_pow * ln_br).exp()
        } else {
            0.0
        };
        (inner, outer)
    }

    fn eval_y2(&self, which: Weight, y2: impl Fn(&Bubble) -> f64) -> f64 {
        self.family
            .bubbles()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let (a, c) = match which {
                    Weight::V => self.v_components(i, y2(b)),
                    Weight::W => self.w_components(i, y2(b)),
                };
                a + c
            })
            .sum()
    }

    pub fn eval(&self, which: Weight, x: &[f64]) -> f64 {
        self.eval_y2(which, |b| b.scaled_dist2(x))
    }

    /// Evaluation for an on-axis family at axial `t`, transverse radius `r`.
    pub fn eval_axisym(&self, which: Weight, t: f64, r: f64) -> f64 {
        self.eval_y2(which, |b| b.scaled_dist2_axisym(t, r))
    }
}

pub fn weight_eval(profile: &WeightProfile, which: Weight, x: &[f64]) -> Result<f64> {
    if x.len() != profile.family.params().n() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("evaluation point must be finite and of the family's dimension"));
    }
    Ok(profile.eval(which, x))
}

/// Sampling lattice for sup-norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePlan {
    pub shells_per_decade: usize,
    /// Innermost nonzero shell radius in scaled units `|y_i|`.
    pub min_radius: f64,
    /// Outermost shell is `max(R_max³, outer_floor)` with `R_max = max R_ij`.
    pub outer_floor: f64,
    /// Directions per shell: polar angles in `[0, π]` for on-axis families.
    pub angles: usize,
    /// Points per center-to-center segment.
    pub segment_points: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            shells_per_decade: 64,
            min_radius: 1e-2,
            outer_floor: 1e3,
            angles: 17,
            segment_points: 257,
        }
    }
}

impl SamplePlan {
    pub fn describe(&self) -> String {
        format!(
            "log shells {}/decade over |y_i| in [{:e}, max(R_max^3, {:e})] plus |y_i| in {{0, R/2, R}}; {} polar angles; {} points per center segment",
            self.shells_per_decade, self.min_radius, self.outer_floor, self.angles, self.segment_points
        )
    }

    fn radii(&self, outer: f64, cutoff: f64) -> Vec<f64> {
        let mut out = vec![0.0, 0.5 * cutoff, cutoff];
        let lo = self.min_radius.log10();
        let hi = outer.max(self.min_radius).log10();
        let steps = ((hi - lo) * self.shells_per_decade as f64).ceil() as usize;
        for k in 0..=steps {
            out.push(10f64.powf(lo + k as f64 / self.shells_per_decade as f64));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn directions(&self, family: &BubbleFamily, i: usize) -> Vec<Vec<f64>> {
        let n = family.params().n();
        let mut dirs = Vec::new();
        if family.is_on_axis() {
            for k in 0..self.angles {
                let th = std::f64::consts::PI * k as f64 / (self.angles - 1).max(1) as f64;
                let mut d = vec![0.0; n];
                d[0] = th.cos();
                d[1] = th.sin();
                dirs.push(d);
            }
            return dirs;
        }
        for a in 0..n {
            for s in [1.0, -1.0] {
                let mut d = vec![0.0; n];
                d[a] = s;
                dirs.push(d);
            }
        }
        let zi = family.bubbles()[i].center();
        for (j, bj) in family.bubbles().iter().enumerate() {
            if j == i {
                continue;
            }
            let v: Vec<f64> = bj.center().iter().zip(zi).map(|(a, b)| a - b).collect();
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len > 0.0 {
                dirs.push(v.iter().map(|x| x / len).collect());
                dirs.push(v.iter().map(|x| -x / len).collect());
            }
        }
        dirs
    }

    /// The sample points for `profile`, in a fixed order.
    pub fn points(&self, profile: &WeightProfile) -> Vec<Vec<f64>> {
        let family = &profile.family;
        let bs = family.bubbles();
        let rep = family_report(family, 1.0);
        let r_max = rep
            .pairs
            .iter()
            .flatten()
            .flatten()
            .map(|p| p.r_sep)
            .fold(2.0 * profile.cutoff, f64::max);
        let radii = self.radii(r_max.powi(3).max(self.outer_floor), profile.cutoff);
        let mut pts = Vec::new();
        for (i, b) in bs.iter().enumerate() {
            let dirs = self.directions(family, i);
            for &rho in &radii {
                for d in &dirs {
                    pts.push(b.center().iter().zip(d).map(|(z, u)| z + rho / b.scale() * u).collect());
                    if rho == 0.0 {
                        break;
                    }
                }
            }
        }
        for i in 0..bs.len() {
            for j in i + 1..bs.len() {
                let (zi, zj) = (bs[i].center(), bs[j].center());
                for k in 0..self.segment_points {
                    let s = k as f64 / (self.segment_points - 1).max(1) as f64;
                    pts.push(zi.iter().zip(zj).map(|(a, b)| a + s * (b - a)).collect());
                }
            }
        }
        pts
    }
}

/// A sup-norm sampled on a plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledSupNorm {
    pub value: f64,
    pub argmax_point: Vec<f64>,
    pub sample_plan: String,
}

fn sampled_sup<F>(h: F, profile: &WeightProfile, which: Weight, plan: &SamplePlan) -> Result<SampledSupNorm>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let pts = plan.points(profile);
    let values: Vec<f64> = pts.par_iter().map(|x| h(x)).collect();
    let mut best = (0.0, 0usize);
    for (k, v) in values.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::invalid(format!("non-finite value at sample point {:?}", pts[k])));
        }
        let ratio = v.abs() / profile.eval(which, &pts[k]);
        if ratio > best.0 {
            best = (ratio, k);
        }
    }
    Ok(SampledSupNorm {
        value: best.0,
        argmax_point: pts[best.1].clone(),
        sample_plan: plan.describe(),
    })
}

/// `sup |h| / V` over the plan.
pub fn starstar_norm<F>(h: F, profile: &WeightProfile, plan: &SamplePlan) -> Result<SampledSupNorm>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    sampled_sup(h, profile, Weight::V, plan)
}

/// `sup |φ| / W` over the plan.
pub fn star_norm<F>(phi: F, profile: &WeightProfile, plan: &SamplePlan) -> Result<SampledSupNorm>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    sampled_sup(phi, profile, Weight::W, plan)
}

/// `∥∇ Σ c_i U_i∥₂`, from `∫∇U_i·∇U_j = ∫U_i^p U_j`.
pub fn h1_norm_bubble_sum(family: &BubbleFamily, coeffs: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    if coeffs.len() != family.len() {
        return Err(Error::invalid("one coefficient per bubble is required"));
    }
    let params = family.params();
    let bs = family.bubbles();
    let self_energy = bubble_energy(params, spec)?;
    let mut total = 0.0;
    for i in 0..bs.len() {
        total += coeffs[i] * coeffs[i] * self_energy;
        for j in i + 1..bs.len() {
            if coeffs[i] == 0.0 || coeffs[j] == 0.0 {
                continue;
            }
            let cross = quadrature::pair_integral(params, &bs[i], &bs[j], params.p(), 1.0, spec)?.value;
            total += 2.0 * coeffs[i] * coeffs[j] * cross;
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// `∫U^{2*} = ∫|∇U|²`, the same for every bubble.
pub fn bubble_energy(params: &ProblemParams, spec: &QuadratureSpec) -> Result<f64> {
    let b = Bubble::on_axis(params.n(), 0.0, 1.0)?;
    let e = quadrature::integrate_radial(|r| b.value_from_y2(params, r * r).powf(params.two_star()), params, spec)?;
    Ok(e.value)
}

/// `(∫|∇u|²)^{1/2}` for axisymmetric `u`, given `|∇u|²` as a function of `(t, r)`.
pub fn h1_gradient_norm_axisym<F>(grad2: F, n: usize, features: &quadrature::AxisymFeatures, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    Ok(quadrature::integrate_axisym(grad2, n, features, spec)?.value.max(0.0).sqrt())
}

/// One term `c · U_i^{p−1} Z_i^a` of a kernel-span right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelTerm {
    pub bubble: usize,
    pub kernel: Kernel,
    pub coeff: f64,
}

/// H⁻¹ norm of `Σ c U_i^{p−1} Z_i^a`. Since `−Δ(Z/p) = U^{p−1}Z`, the squared
/// norm is `Σ c c' ∫U_i^{p−1}Z_i^a Z_j^b / p`.
pub fn hminus1_kernel_span(family: &BubbleFamily, terms: &[KernelTerm], spec: &QuadratureSpec) -> Result<f64> {
    let params = family.params();
    let n = params.n();
    let bs = family.bubbles();
    if terms.iter().any(|t| t.bubble >= bs.len()) {
        return Err(Error::invalid("kernel term refers to a bubble outside the family"));
    }
    let active: Vec<&KernelTerm> = terms.iter().filter(|t| t.coeff != 0.0).collect();
    let mut grams = std::collections::BTreeMap::new();
    let mut total = 0.0;
    for a in &active {
        for b in &active {
            let key = (a.bubble.min(b.bubble), a.bubble.max(b.bubble));
            if let std::collections::btree_map::Entry::Vacant(e) = grams.entry(key) {
                e.insert(quadrature::kernel_gram(params, &bs[key.0], &bs[key.1], spec)?);
            }
            let g = &grams[&key];
            let (ia, ib) = if a.bubble <= b.bubble {
                (a.kernel.index(n) - 1, b.kernel.index(n) - 1)
            } else {
                (b.kernel.index(n) - 1, a.kernel.index(n) - 1)
            };
            total += a.coeff * b.coeff * g.entries[ia][ib];
        }
    }
    Ok((total / params.p()).max(0.0).sqrt())
}

/// H⁻¹ norm of a radial `f`: with `M(r) = ∫₀^r f s^{n−1} ds`,
/// `∥f∥² = |S^{n−1}| ∫₀^∞ M(r)² r^{1−n} dr`.
pub fn hminus1_radial<F>(f: F, n: usize, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    let pow = n as i32 - 1;
    let inner = quadrature::Tolerance::new(spec.target_rel_err * 0.05, 0.0, spec.points);
    let mut ok = true;
    let est = quadrature::gk::adaptive_semi_infinite(
        |r| {
            if r == 0.0 {
                return 0.0;
            }
            let m = quadrature::gk::adaptive(|s| f(s) * s.powi(pow), &[0.0, r.min(spec.compact_scale), r], inner);
            ok &= m.converged;
            m.value * m.value / r.powi(pow)
        },
        0.0,
        spec.compact_scale,
        &[],
        quadrature::Tolerance::new(spec.target_rel_err * 0.5, 0.0, spec.points),
    );
    if !(est.converged && ok) {
        return Err(Error::Accuracy {
            message: "radial H⁻¹ integral did not converge".into(),
            estimate: est.value,
            error: est.error,
        });
    }
    let scaled = est.value * sphere_area(n);
    Ok(Estimate {
        value: scaled.max(0.0).sqrt(),
        error: 0.5 * est.error * sphere_area(n) / scaled.max(f64::MIN_POSITIVE).sqrt(),
        ..est
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cluster(n: usize, d: f64) -> BubbleFamily {
        BubbleFamily::on_axis(ProblemParams::new(n).unwrap(), &[(0.0, 1.0), (d, 1.0)]).unwrap()
    }

    #[test]
    fn single_bubble_weight_values() {
        let fam = BubbleFamily::on_axis(ProblemParams::new(6).unwrap(), &[(0.0, 4.0)]).unwrap();
        assert!(WeightProfile::new(fam.clone()).is_err());
        let prof = WeightProfile::with_cutoff(fam, 10.0).unwrap();
        let w0 = prof.eval(Weight::W, &[0.0; 6]);
        assert!((w0 - 4f64.powi(2) * 10f64.powi(-4)).abs() < 1e-15);
        // |y| = R: both pieces active
        let x = [10.0 / 4.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b: f64 = 101.0;
        let expect = 16.0 * 1e-4 / b + 16.0 * 1e-4 / b;
        assert!((prof.eval(Weight::W, &x) / expect - 1.0).abs() < 1e-13);
        let v = prof.eval(Weight::V, &x);
        let ev = 4f64.powi(4) * 1e-4 / (b * b) + 4f64.powi(4) * 1e-4 / (b * b);
        assert!((v / ev - 1.0).abs() < 1e-13);
    }

    #[test]
    fn cutoff_cannot_exceed_default() {
        let fam = cluster(6, 20.0);
        let prof = WeightProfile::new(fam.clone()).unwrap();
        assert_eq!(prof.cutoff(), 10.0);
        assert!(WeightProfile::with_cutoff(fam.clone(), 11.0).is_err());
        assert!(WeightProfile::with_cutoff(fam, 5.0).is_ok());
    }

    #[test]
    fn two_bubble_weight_is_additive() {
        let fam = cluster(7, 20.0);
        let prof = WeightProfile::new(fam.clone()).unwrap();
        let x = [3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut sum = 0.0;
        for i in 0..2 {
            let y2 = fam.bubbles()[i].scaled_dist2(&x);
            let (a, b) = prof.w_components(i, y2);
            sum += a + b;
        }
        assert_eq!(prof.eval(Weight::W, &x), sum);
        assert!(prof.eval(Weight::V, &x) > 0.0);
    }

    #[test]
    fn norms_of_weights_are_one() {
        let fam = cluster(6, 20.0);
        let prof = WeightProfile::new(fam).unwrap();
        let plan = SamplePlan::default();
        let v = starstar_norm(|x| prof.eval(Weight::V, x), &prof, &plan).unwrap();
        assert!((v.value - 1.0).abs() < 1e-15);
        let w = star_norm(|x| prof.eval(Weight::W, x), &prof, &plan).unwrap();
        assert!((w.value - 1.0).abs() < 1e-15);
        let z = star_norm(|_| 0.0, &prof, &plan).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(starstar_norm(|_| f64::NAN, &prof, &plan).is_err());
    }

    #[test]
    fn bubble_h1_norm() {
        let pp = ProblemParams::new(6).unwrap();
        let spec = QuadratureSpec::default();
        let exact = (230.4 * PI.powi(3)).sqrt();
        for (t, l) in [(0.0, 1.0), (3.0, 0.2), (-1.0, 7.0)] {
            let fam = BubbleFamily::on_axis(pp, &[(t, l)]).unwrap();
            let v = h1_norm_bubble_sum(&fam, &[1.0], &spec).unwrap();
            assert!((v / exact - 1.0).abs() < 1e-9);
        }
        let fam = BubbleFamily::on_axis(pp, &[(0.0, 1.0)]).unwrap();
        assert_eq!(h1_norm_bubble_sum(&fam, &[0.0], &spec).unwrap(), 0.0);
    }

    #[test]
    fn hminus1_fast_path_matches_radial() {
        for n in [6, 7] {
            let pp = ProblemParams::new(n).unwrap();
            let fam = BubbleFamily::on_axis(pp, &[(0.0, 1.0)]).unwrap();
            let spec = QuadratureSpec::default().with_rel(1e-9);
            let fast = hminus1_kernel_span(
                &fam,
                &[KernelTerm {
                    bubble: 0,
                    kernel: Kernel::Dilation,
                    coeff: 1.0,
                }],
                &spec,
            )
            .unwrap();
            let b = fam.bubbles()[0].clone();
            let slow = hminus1_radial(
                |r| {
                    let u = b.value_from_y2(&pp, r * r);
                    u.powf(pp.p() - 1.0) * crate::bubbles::kernel_value_axisym(&pp, &b, Kernel::Dilation, r, 0.0)
                },
                n,
                &QuadratureSpec::default().with_rel(1e-8),
            )
            .unwrap();
            assert!((fast / slow.value - 1.0).abs() < 1e-6, "{fast} {}", slow.value);
            assert_eq!(hminus1_kernel_span(&fam, &[], &spec).unwrap(), 0.0);
        }
    }
}
