//! Best `Ḣ¹` approximation of a function by a sum of bubbles.
//!
//! For on-axis targets and families the parameters are the axial centers
//! and `log λ_i`. Transverse translations cannot lower the distance by
//! symmetry, and their first-order conditions hold identically.
//!
//! All integrals are written so that the difference `ρ = u − σ` is formed
//! pointwise before integrating: `∫|∇ρ|² = ∫ ρ_b (−Δρ_b) + …` with
//! `−ΔU = U^p`, and `∫∇ρ·∇Z = p∫U^{p−1} Z ρ` with `−ΔZ = pU^{p−1}Z`. This
//! keeps the relative accuracy of `δ` when `u` is close to `σ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bubbles::{kernel_value_axisym, Bubble, BubbleFamily, Kernel, ProblemParams};
use crate::error::{Error, Result};
use crate::interaction::q_pair;
use crate::quadrature::{integrate_axisym_abs_floor, sphere_area, AxisymFeatures, QuadratureSpec};
use crate::reduction::AxisymField;

/// Pairs closer than this are outside the weakly interacting regime.
pub const DEGENERATE_Q: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BubbleTerm {
    pub coeff: f64,
    pub bubble: Bubble,
}

/// `u = Σ a_m U_m + φ` with on-axis bubbles and an optional grid field.
#[derive(Debug, Clone)]
pub struct ProjectionTarget {
    params: ProblemParams,
    terms: Vec<BubbleTerm>,
    field: Option<AxisymField>,
}

impl ProjectionTarget {
    pub fn new(params: ProblemParams, terms: Vec<BubbleTerm>, field: Option<AxisymField>) -> Result<Self> {
        for t in &terms {
            if t.bubble.dim() != params.n() {
                return Err(Error::invalid("bubble dimension differs from the problem dimension"));
            }
            if t.bubble.center()[1..].iter().any(|c| *c != 0.0) {
                return Err(Error::invalid("projection targets must have on-axis bubbles"));
            }
            if !t.coeff.is_finite() {
                return Err(Error::invalid("non-finite bubble coefficient"));
            }
        }
        if let Some(f) = &field {
            if f.grid().dim() != params.n() {
                return Err(Error::invalid("field dimension differs from the problem dimension"));
            }
        }
        Ok(Self { params, terms, field })
    }

    /// `u = σ` for a family.
    pub fn from_family(family: &BubbleFamily) -> Result<Self> {
        let terms = family
            .bubbles()
            .iter()
            .map(|b| BubbleTerm {
                coeff: 1.0,
                bubble: b.clone(),
            })
            .collect();
        Self::new(*family.params(), terms, None)
    }

    pub fn with_field(mut self, field: AxisymField) -> Result<Self> {
        if field.grid().dim() != self.params.n() {
            return Err(Error::invalid("field dimension differs from the problem dimension"));
        }
        self.field = Some(field);
        Ok(self)
    }

    pub fn with_term(mut self, coeff: f64, bubble: Bubble) -> Result<Self> {
        self.terms.push(BubbleTerm { coeff, bubble });
        Self::new(self.params, self.terms, self.field)
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn terms(&self) -> &[BubbleTerm] {
        &self.terms
    }

    pub fn field(&self) -> Option<&AxisymField> {
        self.field.as_ref()
    }

    /// `u(t, r)`.
    pub fn eval(&self, t: f64, r: f64) -> f64 {
        let b: f64 = self
            .terms
            .iter()
            .map(|m| m.coeff * m.bubble.value_from_y2(&self.params, m.bubble.scaled_dist2_axisym(t, r)))
            .sum();
        b + self.field.as_ref().map_or(0.0, |f| f.interpolate(t, r))
    }

    /// `u(x − s e₁)`.
    pub fn translated(&self, shift: f64) -> Self {
        let mut v = vec![0.0; self.params.n()];
        v[0] = shift;
        Self {
            params: self.params,
            terms: self
                .terms
                .iter()
                .map(|m| BubbleTerm {
                    coeff: m.coeff,
                    bubble: m.bubble.translated(&v),
                })
                .collect(),
            field: self.field.as_ref().map(|f| f.translated(shift)),
        }
    }

    /// Image under `x ↦ μx` (an `Ḣ¹` isometry).
    pub fn dilated(&self, mu: f64) -> Self {
        Self {
            params: self.params,
            terms: self
                .terms
                .iter()
                .map(|m| BubbleTerm {
                    coeff: m.coeff,
                    bubble: m.bubble.dilated(mu),
                })
                .collect(),
            field: self.field.as_ref().map(|f| f.dilated(mu)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionOptions {
    /// Bound on `max |∫∇ρ·∇Z_i^a|` at convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub quad_rel: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            quad_rel: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub params: BubbleFamily,
    pub delta_u: f64,
    /// `max |∫∇ρ·∇Z_i^a|` over bubbles and the axial translation and
    /// dilation kernels.
    pub stationarity_defect: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initial_delta: f64,
}

struct Evaluator<'a> {
    u: &'a ProjectionTarget,
    spec: QuadratureSpec,
    floor: f64,
    grad_floor: f64,
    field_energy: f64,
}

impl<'a> Evaluator<'a> {
    fn new(u: &'a ProjectionTarget, opts: &ProjectionOptions) -> Self {
        // Integrals here are of order |S^{n−1}| or larger.
        Self {
            u,
            spec: QuadratureSpec::default().with_rel(opts.quad_rel),
            floor: 1e-14 * sphere_area(u.params.n()),
            grad_floor: 1e-3 * opts.tol,
            field_energy: u.field.as_ref().map_or(0.0, |f| f.gradient_energy()),
        }
    }

    fn features(&self, sigma: &[Bubble]) -> AxisymFeatures {
        let mut f = AxisymFeatures::from_bubbles(self.u.terms.iter().map(|m| &m.bubble).chain(sigma));
        for b in sigma {
            f = f.with_sphere(b.axial(), 1.0 / b.scale()).with_plane(b.axial());
        }
        f
    }

    /// Matches each bubble of `σ` with the nearest unused bubble of `u`, so
    /// that their difference can be formed without cancellation.
    fn frame(&self, sigma: &[Bubble]) -> Frame {
        let mut used = vec![false; self.u.terms.len()];
        let mut pairs = Vec::new();
        let mut lone_sigma = Vec::new();
        for (i, b) in sigma.iter().enumerate() {
            let dist = |m: &BubbleTerm| (m.bubble.axial() - b.axial()).abs() * b.scale() + (m.bubble.scale() / b.scale()).ln().abs();
            let best = (0..self.u.terms.len())
                .filter(|&m| !used[m])
                .min_by(|&x, &y| dist(&self.u.terms[x]).total_cmp(&dist(&self.u.terms[y])));
            match best {
                Some(m) if dist(&self.u.terms[m]) < 1.0 => {
                    used[m] = true;
                    pairs.push((m, i));
                }
                _ => lone_sigma.push(i),
            }
        }
        let lone_terms = (0..used.len()).filter(|&m| !used[m]).collect();
        Frame {
            pairs,
            lone_terms,
            lone_sigma,
        }
    }

    /// `(ρ_b, −Δρ_b)` at a point, for the bubble part `ρ_b = Σa_mU_m − σ`.
    fn bubble_residual(&self, frame: &Frame, sigma: &[Bubble], t: f64, r: f64) -> (f64, f64) {
        let pp = &self.u.params;
        let p = pp.p();
        let h = pp.half_exp();
        let (mut v, mut lap) = (0.0, 0.0);
        for &(m, i) in &frame.pairs {
            let (a, bm) = (self.u.terms[m].coeff, &self.u.terms[m].bubble);
            let bi = &sigma[i];
            let (lm, li) = (bm.scale(), bi.scale());
            let (zm, zi) = (bm.axial(), bi.axial());
            let ym2 = bm.scaled_dist2_axisym(t, r);
            let um = bm.value_from_y2(pp, ym2);
            // y_m² − y_i² and ln U_i − ln U_m from parameter differences.
            let dl = lm - li;
            let diff = dl * (t - zi) - lm * (zm - zi);
            let sum = lm * (t - zm) + li * (t - zi);
            let dy2 = dl * (lm + li) * r * r + diff * sum;
            let dln = h * ((-dl / lm).ln_1p() - (-dy2 / (1.0 + ym2)).ln_1p());
            v += (a - 1.0) * um - um * dln.exp_m1();
            let ump = um.powf(p);
            lap += (a - 1.0) * ump - ump * (p * dln).exp_m1();
        }
        for &m in &frame.lone_terms {
            let t_ = &self.u.terms[m];
            let u = t_.bubble.value_from_y2(pp, t_.bubble.scaled_dist2_axisym(t, r));
            v += t_.coeff * u;
            lap += t_.coeff * u.powf(p);
        }
        for &i in &frame.lone_sigma {
            let u = sigma[i].value_from_y2(pp, sigma[i].scaled_dist2_axisym(t, r));
            v -= u;
            lap -= u.powf(p);
        }
        (v, lap)
    }

    fn delta2(&self, sigma: &[Bubble]) -> Result<f64> {
        let feats = self.features(sigma);
        let frame = self.frame(sigma);
        let n = self.u.params.n();
        let mut d2 = integrate_axisym_abs_floor(
            |t, r| {
                let (v, lap) = self.bubble_residual(&frame, sigma, t, r);
                v * lap
            },
            n,
            &feats,
            &self.spec,
            self.floor * 1e-8,
        )?
        .value;
        if let Some(f) = &self.u.field {
            let cross = f.integrate_against(|t, r| self.bubble_residual(&frame, sigma, t, r).1);
            d2 += 2.0 * cross + self.field_energy;
        }
        Ok(d2)
    }

    /// `∫∇ρ·∇Z_i^k` for every bubble and axisymmetric kernel.
    fn gradient(&self, sigma: &[Bubble]) -> Result<Vec<f64>> {
        let pp = self.u.params;
        let p = pp.p();
        let feats = self.features(sigma);
        let frame = self.frame(sigma);
        let mut g = Vec::with_capacity(2 * sigma.len());
        for b in sigma {
            for k in Kernel::axisymmetric() {
                let w = |t: f64, r: f64| {
                    let u = b.value_from_y2(&pp, b.scaled_dist2_axisym(t, r));
                    p * u.powf(p - 1.0) * kernel_value_axisym(&pp, b, k, t, r)
                };
                let mut v = integrate_axisym_abs_floor(
                    |t, r| {
                        let rho = self.bubble_residual(&frame, sigma, t, r).0;
                        if rho == 0.0 {
                            0.0
                        } else {
                            w(t, r) * rho
                        }
                    },
                    pp.n(),
                    &feats,
                    &self.spec,
                    self.grad_floor,
                )?
                .value;
                if let Some(f) = &self.u.field {
                    v += f.integrate_against(w);
                }
                g.push(v);
            }
        }
        Ok(g)
    }

    /// `∫∇Z_i^k·∇Z_j^l = p∫U_j^{p−1}Z_j^l Z_i^k`.
    fn gram(&self, sigma: &[Bubble]) -> Result<DMatrix<f64>> {
        let pp = self.u.params;
        let p = pp.p();
        let feats = self.features(sigma);
        let m = 2 * sigma.len();
        let idx: Vec<(usize, Kernel)> = (0..sigma.len()).flat_map(|i| Kernel::axisymmetric().map(|k| (i, k))).collect();
        let mut h = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let (bi, ki) = (&sigma[idx[a].0], idx[a].1);
                let (bj, kj) = (&sigma[idx[b].0], idx[b].1);
                if idx[a].0 == idx[b].0 && ki != kj {
                    // Opposite parity about the common center.
                    continue;
                }
                let v = integrate_axisym_abs_floor(
                    |t, r| {
                        let u = bj.value_from_y2(&pp, bj.scaled_dist2_axisym(t, r));
                        p * u.powf(p - 1.0) * kernel_value_axisym(&pp, bj, kj, t, r) * kernel_value_axisym(&pp, bi, ki, t, r)
                    },
                    pp.n(),
                    &feats,
                    &self.spec,
                    self.floor,
                )?
                .value;
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        Ok(h)
    }
}

struct Frame {
    pairs: Vec<(usize, usize)>,
    lone_terms: Vec<usize>,
    lone_sigma: Vec<usize>,
}

fn check_family(u: &ProjectionTarget, family: &BubbleFamily) -> Result<()> {
    if family.params() != u.params() {
        return Err(Error::invalid("family and target dimensions differ"));
    }
    if !family.is_on_axis() {
        return Err(Error::invalid("projection works with on-axis families"));
    }
    Ok(())
}

/// `∥∇u − ∇σ∥_{L²}` at fixed parameters.
pub fn delta_at(u: &ProjectionTarget, family: &BubbleFamily) -> Result<f64> {
    delta_at_with(u, family, &ProjectionOptions::default())
}

pub fn delta_at_with(u: &ProjectionTarget, family: &BubbleFamily, opts: &ProjectionOptions) -> Result<f64> {
    check_family(u, family)?;
    Ok(Evaluator::new(u, opts).delta2(family.bubbles())?.max(0.0).sqrt())
}

/// `∫∇ρ·∇Z_i^a` for `ρ = u − σ`, ordered as (bubble, [axial, dilation]).
pub fn stationarity(u: &ProjectionTarget, family: &BubbleFamily, opts: &ProjectionOptions) -> Result<Vec<f64>> {
    check_family(u, family)?;
    Evaluator::new(u, opts).gradient(family.bubbles())
}

fn step(sigma: &[Bubble], s: &DVector<f64>, alpha: f64) -> Result<Vec<Bubble>> {
    sigma
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let dz = alpha * s[2 * i] / b.scale();
            let lam = b.scale() * (alpha * s[2 * i + 1]).exp();
            Bubble::on_axis(b.dim(), b.axial() + dz, lam)
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Gauss–Newton with backtracking from `initial`.
pub fn project(u: &ProjectionTarget, initial: &BubbleFamily, opts: &ProjectionOptions) -> Result<ProjectionResult> {
    check_family(u, initial)?;
    if opts.tol.is_nan() || opts.tol <= 0.0 || opts.max_iter == 0 {
        return Err(Error::invalid("projection tolerance and iteration cap must be positive"));
    }
    let ev = Evaluator::new(u, opts);
    let params = *initial.params();
    let mut sigma: Vec<Bubble> = initial.bubbles().to_vec();
    let mut f0 = ev.delta2(&sigma)?;
    let initial_delta = f0.max(0.0).sqrt();
    let mut g = ev.gradient(&sigma)?;
    let mut iterations = 0;
    while max_abs(&g) > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let h = ev.gram(&sigma)?;
        let rhs = DVector::from_column_slice(&g);
        let s = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                return Err(Error::Degenerate(
                    "Gauss–Newton normal matrix is not positive definite (near-coincident bubbles?)".into(),
                ))
            }
        };
        let slack = 1e-13 * (f0.abs() + ev.field_energy);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = step(&sigma, &s, alpha)?;
            let f1 = ev.delta2(&trial)?;
            if f1 <= f0 + slack {
                accepted = Some((trial, f1));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, f1)) = accepted else { break };
        for i in 0..trial.len() {
            for j in i + 1..trial.len() {
                if q_pair(&params, &trial[i], &trial[j]) > DEGENERATE_Q {
                    return Err(Error::Degenerate(format!(
                        "bubbles {i} and {j} reached q = {:.3} > {DEGENERATE_Q}",
                        q_pair(&params, &trial[i], &trial[j])
                    )));
                }
            }
        }
        let small_step = alpha * s.amax() < 1e-15;
        sigma = trial;
        f0 = f1.min(f0);
        g = ev.gradient(&sigma)?;
        if small_step {
            break;
        }
    }
    let defect = max_abs(&g);
    Ok(ProjectionResult {
        params: BubbleFamily::new(params, sigma)?,
        delta_u: f0.max(0.0).sqrt().min(initial_delta),
        stationarity_defect: defect,
        iterations,
        converged: defect <= opts.tol,
        initial_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(n: usize, spec: &[(f64, f64)]) -> BubbleFamily {
        BubbleFamily::on_axis(ProblemParams::new(n).unwrap(), spec).unwrap()
    }

    #[test]
    fn exact_sum_has_zero_distance() {
        let f = fam(6, &[(-8.0, 1.0), (8.0, 1.5)]);
        let u = ProjectionTarget::from_family(&f).unwrap();
        assert_eq!(delta_at(&u, &f).unwrap(), 0.0);
        let g = stationarity(&u, &f, &ProjectionOptions::default()).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn recovers_planted_parameters() {
        let truth = fam(6, &[(-8.0, 1.0), (8.0, 1.5)]);
        let start = fam(6, &[(-7.7, 1.1), (8.2, 1.4)]);
        let u = ProjectionTarget::from_family(&truth).unwrap();
        let res = project(&u, &start, &ProjectionOptions::default()).unwrap();
        assert!(res.converged, "{res:?}");
        for (a, b) in res.params.bubbles().iter().zip(truth.bubbles()) {
            assert!((a.axial() - b.axial()).abs() < 1e-6);
            assert!((a.scale() / b.scale()).ln().abs() < 1e-6);
        }
        assert!(res.delta_u <= res.initial_delta);
    }

    #[test]
    fn rejects_off_axis() {
        let pp = ProblemParams::new(6).unwrap();
        let b = Bubble::new(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert!(ProjectionTarget::new(pp, vec![BubbleTerm { coeff: 1.0, bubble: b }], None).is_err());
    }
}
