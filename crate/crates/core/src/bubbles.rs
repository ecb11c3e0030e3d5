//! Talenti bubbles `U[z, λ](x) = α_n (λ / (1 + λ²|x − z|²))^{(n−2)/2}`, their
//! rescaled translation/dilation derivatives, sums, and the interaction error
//! `σ^p − Σ U_i^p`.
//!
//! Every function here is pure. Points are plain slices of length `n`; the
//! axisymmetric helpers take `(t, r)` for families whose centers lie on the
//! first coordinate axis.

use serde::Serialize;

use crate::error::{Error, Result};

/// Dimension-dependent constants of the critical problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    n: usize,
    p: f64,
    two_star: f64,
    alpha: f64,
}

impl ProblemParams {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("dimension must be at least 3, got {n}")));
        }
        let nf = n as f64;
        Ok(Self {
            n,
            p: (nf + 2.0) / (nf - 2.0),
            two_star: 2.0 * nf / (nf - 2.0),
            alpha: (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Critical power `(n+2)/(n−2)`.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Sobolev exponent `2n/(n−2) = p + 1`.
    pub fn two_star(&self) -> f64 {
        self.two_star
    }

    /// Normalisation `(n(n−2))^{(n−2)/4}`, the value of `U[0,1]` at the origin.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `(n−2)/2`, the decay half-exponent used all over the place.
    pub fn half_exp(&self) -> f64 {
        (self.n as f64 - 2.0) / 2.0
    }

    /// Whether `p` lies in `(1, 2]`, i.e. `n ≥ 6`.
    pub fn subquadratic(&self) -> bool {
        self.n >= 6
    }
}

/// One bubble: a center in ℝⁿ and a positive scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Bubble {
    center: Vec<f64>,
    scale: f64,
}

impl Bubble {
    pub fn new(center: Vec<f64>, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("bubble scale must be positive and finite, got {scale}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("bubble center has non-finite coordinates"));
        }
        Ok(Self { center, scale })
    }

    /// Bubble centered at `t·e₁` in dimension `n`.
    pub fn on_axis(n: usize, t: f64, scale: f64) -> Result<Self> {
        let mut center = vec![0.0; n];
        center[0] = t;
        Self::new(center, scale)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Axial coordinate of the center (first component).
    pub fn axial(&self) -> f64 {
        self.center[0]
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let center = self.center.iter().zip(shift).map(|(c, s)| c + s).collect();
        Self { center, scale: self.scale }
    }

    /// Image under `x ↦ μx`: the center moves to `μz` and the scale to `λ/μ`.
    pub fn dilated(&self, mu: f64) -> Self {
        Self {
            center: self.center.iter().map(|c| c * mu).collect(),
            scale: self.scale / mu,
        }
    }

    pub(crate) fn dist2(&self, x: &[f64]) -> f64 {
        self.center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum()
    }

    /// `|y|²` with `y = λ(x − z)`.
    pub fn scaled_dist2(&self, x: &[f64]) -> f64 {
        self.scale * self.scale * self.dist2(x)
    }

    /// `|y|²` for an axisymmetric point `(t, r)`; assumes the center is on the axis.
    pub fn scaled_dist2_axisym(&self, t: f64, r: f64) -> f64 {
        let dt = t - self.center[0];
        self.scale * self.scale * (dt * dt + r * r)
    }

    /// Value at a point given `|y|² = λ²|x − z|²`.
    #[inline]
    pub fn value_from_y2(&self, params: &ProblemParams, y2: f64) -> f64 {
        params.alpha * (self.scale / (1.0 + y2)).powf(params.half_exp())
    }

    /// `ln U` from `|y|²`; used where products of large powers would underflow.
    #[inline]
    pub fn ln_value_from_y2(&self, params: &ProblemParams, y2: f64) -> f64 {
        params.alpha.ln() + params.half_exp() * (self.scale.ln() - y2.ln_1p())
    }
}

/// Kernel directions of the linearised operator around one bubble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `(1/λ) ∂_{z^a} U`, with `a` zero-based here.
    Translation(usize),
    /// `λ ∂_λ U`.
    Dilation,
}

impl Kernel {
    /// Maps the 1-based index `a ∈ 1..=n+1` to a kernel.
    pub fn from_index(a: usize, n: usize) -> Result<Self> {
        match a {
            a if (1..=n).contains(&a) => Ok(Kernel::Translation(a - 1)),
            a if a == n + 1 => Ok(Kernel::Dilation),
            _ => Err(Error::invalid(format!("kernel index {a} outside 1..={}", n + 1))),
        }
    }

    pub fn index(&self, n: usize) -> usize {
        match self {
            Kernel::Translation(a) => a + 1,
            Kernel::Dilation => n + 1,
        }
    }

    /// The kernels that survive in the axisymmetric class: axial translation
    /// and dilation. Transverse translations are odd in the transverse
    /// variables.
    pub fn axisymmetric() -> [Kernel; 2] {
        [Kernel::Translation(0), Kernel::Dilation]
    }
}

fn check_point(params: &ProblemParams, x: &[f64]) -> Result<()> {
    if x.len() != params.n {
        return Err(Error::invalid(format!(
            "point has {} coordinates, dimension is {}",
            x.len(),
            params.n
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("point has non-finite coordinates"));
    }
    Ok(())
}

pub fn bubble_eval(params: &ProblemParams, b: &Bubble, x: &[f64]) -> Result<f64> {
    check_point(params, x)?;
    Ok(b.value_from_y2(params, b.scaled_dist2(x)))
}

/// Kernel `Z^a` of bubble `b` at `x`, `a` 1-based.
pub fn kernel_eval(params: &ProblemParams, b: &Bubble, a: usize, x: &[f64]) -> Result<f64> {
    check_point(params, x)?;
    let k = Kernel::from_index(a, params.n)?;
    Ok(kernel_value(params, b, k, x))
}

pub(crate) fn kernel_value(params: &ProblemParams, b: &Bubble, k: Kernel, x: &[f64]) -> f64 {
    let y2 = b.scaled_dist2(x);
    let u = b.value_from_y2(params, y2);
    match k {
        Kernel::Translation(a) => {
            let ya = b.scale * (x[a] - b.center[a]);
            (params.n as f64 - 2.0) * u * ya / (1.0 + y2)
        }
        Kernel::Dilation => params.half_exp() * u * (1.0 - y2) / (1.0 + y2),
    }
}

/// Kernel value at an axisymmetric point `(t, r)` for an on-axis bubble.
/// Only the kernels of [`Kernel::axisymmetric`] are meaningful here; a
/// transverse translation is evaluated in the `(t, r)` half-plane, i.e. along
/// the second coordinate.
pub fn kernel_value_axisym(params: &ProblemParams, b: &Bubble, k: Kernel, t: f64, r: f64) -> f64 {
    let y2 = b.scaled_dist2_axisym(t, r);
    let u = b.value_from_y2(params, y2);
    match k {
        Kernel::Translation(0) => {
            let ya = b.scale * (t - b.center[0]);
            (params.n as f64 - 2.0) * u * ya / (1.0 + y2)
        }
        Kernel::Translation(_) => (params.n as f64 - 2.0) * u * b.scale * r / (1.0 + y2),
        Kernel::Dilation => params.half_exp() * u * (1.0 - y2) / (1.0 + y2),
    }
}

/// Gradient of `U` with respect to `x`.
pub fn bubble_gradient(params: &ProblemParams, b: &Bubble, x: &[f64]) -> Vec<f64> {
    let y2 = b.scaled_dist2(x);
    let u = b.value_from_y2(params, y2);
    let coef = -(params.n as f64 - 2.0) * u * b.scale * b.scale / (1.0 + y2);
    x.iter().zip(&b.center).map(|(xi, zi)| coef * (xi - zi)).collect()
}

/// A nonempty ordered list of bubbles sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleFamily {
    params: ProblemParams,
    bubbles: Vec<Bubble>,
}

impl BubbleFamily {
    pub fn new(params: ProblemParams, bubbles: Vec<Bubble>) -> Result<Self> {
        if bubbles.is_empty() {
            return Err(Error::invalid("a bubble family needs at least one bubble"));
        }
        if let Some(b) = bubbles.iter().find(|b| b.dim() != params.n) {
            return Err(Error::invalid(format!(
                "bubble of dimension {} in a family of dimension {}",
                b.dim(),
                params.n
            )));
        }
        Ok(Self { params, bubbles })
    }

    /// Family of on-axis bubbles from `(t, λ)` pairs.
    pub fn on_axis(params: ProblemParams, spec: &[(f64, f64)]) -> Result<Self> {
        let bubbles = spec
            .iter()
            .map(|&(t, l)| Bubble::on_axis(params.n, t, l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(params, bubbles)
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn bubbles(&self) -> &[Bubble] {
        &self.bubbles
    }

    pub fn len(&self) -> usize {
        self.bubbles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bubbles.is_empty()
    }

    /// True when every center lies on the first coordinate axis.
    pub fn is_on_axis(&self) -> bool {
        self.bubbles.iter().all(|b| b.center[1..].iter().all(|c| *c == 0.0))
    }

    /// Equivalent on-axis family under a rigid motion, if the centers are
    /// collinear (relative tolerance `1e-12` on the transverse offsets).
    /// Integrals of products of bubbles and kernels are invariant under the
    /// motion.
    pub fn aligned_to_axis(&self) -> Result<Self> {
        if self.is_on_axis() {
            return Ok(self.clone());
        }
        let n = self.params.n;
        // The farthest pair fixes the line.
        let (mut ia, mut ib, mut best) = (0, 0, 0.0);
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d2 = self.bubbles[i].dist2(&self.bubbles[j].center);
                if d2 > best {
                    (ia, ib, best) = (i, j, d2);
                }
            }
        }
        let origin = self.bubbles[ia].center.clone();
        if best == 0.0 {
            let bubbles = self
                .bubbles
                .iter()
                .map(|b| Bubble::on_axis(n, 0.0, b.scale))
                .collect::<Result<Vec<_>>>()?;
            return Self::new(self.params, bubbles);
        }
        let len = best.sqrt();
        let dir: Vec<f64> = self.bubbles[ib].center.iter().zip(&origin).map(|(b, a)| (b - a) / len).collect();
        let mut bubbles = Vec::with_capacity(self.len());
        for b in &self.bubbles {
            let rel: Vec<f64> = b.center.iter().zip(&origin).map(|(c, o)| c - o).collect();
            let t: f64 = rel.iter().zip(&dir).map(|(r, d)| r * d).sum();
            let off2: f64 = rel.iter().zip(&dir).map(|(r, d)| (r - t * d).powi(2)).sum();
            if off2.sqrt() > 1e-12 * len.max(1.0) {
                return Err(Error::invalid("bubble centers are not collinear"));
            }
            bubbles.push(Bubble::on_axis(n, t, b.scale)?);
        }
        Self::new(self.params, bubbles)
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        Self {
            params: self.params,
            bubbles: self.bubbles.iter().map(|b| b.translated(shift)).collect(),
        }
    }

    pub fn dilated(&self, mu: f64) -> Self {
        Self {
            params: self.params,
            bubbles: self.bubbles.iter().map(|b| b.dilated(mu)).collect(),
        }
    }
}

/// `σ(x) = Σ U_i(x)`.
pub fn sigma_eval(family: &BubbleFamily, x: &[f64]) -> Result<f64> {
    check_point(&family.params, x)?;
    Ok(family
        .bubbles
        .iter()
        .map(|b| b.value_from_y2(&family.params, b.scaled_dist2(x)))
        .sum())
}

/// `σ^p − Σ U_i^p` at `x`.
pub fn interaction_error_eval(family: &BubbleFamily, x: &[f64]) -> Result<f64> {
    check_point(&family.params, x)?;
    let values: Vec<f64> = family
        .bubbles
        .iter()
        .map(|b| b.value_from_y2(&family.params, b.scaled_dist2(x)))
        .collect();
    Ok(interaction_error_from_values(family.params.p, &values))
}

/// `(Σ a_i)^p − Σ a_i^p` for nonnegative `a_i`, evaluated without the
/// cancellation that the naive formula suffers when one term dominates.
/// For `p = 2` this is exactly `2 Σ_{i<j} a_i a_j`.
pub fn interaction_error_from_values(p: f64, values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    if p == 2.0 {
        let mut acc = 0.0;
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                acc += values[i] * values[j];
            }
        }
        return 2.0 * acc;
    }
    let (imax, &m) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    if m <= 0.0 {
        return 0.0;
    }
    let rest: f64 = values.iter().enumerate().filter(|(i, _)| *i != imax).map(|(_, v)| v).sum();
    let lead = m.powf(p) * (p * (rest / m).ln_1p()).exp_m1();
    let others: f64 = values.iter().enumerate().filter(|(i, _)| *i != imax).map(|(_, v)| v.powf(p)).sum();
    (lead - others).max(0.0)
}

/// `(s + t)|s + t|^{p−1} − s^p − p s^{p−1} t` for `s ≥ 0`: the superlinear
/// remainder of the critical nonlinearity, accurate for `|t| ≪ s`.
pub fn nonlinear_remainder(p: f64, s: f64, t: f64) -> f64 {
    if s <= 0.0 {
        return t.abs().powf(p - 1.0) * t;
    }
    let x = t / s;
    let sp = s.powf(p);
    if x.abs() < 1e-3 {
        let c2 = p * (p - 1.0) / 2.0;
        let c3 = c2 * (p - 2.0) / 3.0;
        let c4 = c3 * (p - 3.0) / 4.0;
        return sp * x * x * (c2 + x * (c3 + x * c4));
    }
    let y = 1.0 + x;
    sp * (y.abs().powf(p - 1.0) * y - 1.0 - p * x)
}

/// Residuals of the finite-difference identities `ΔU + U^p = 0` and
/// `ΔZ + pU^{p−1}Z = 0` at a sequence of step sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdOrderStudy {
    pub kernel: Option<Kernel>,
    pub steps: Vec<f64>,
    /// Largest `|Δ_h f + c f|` over the sample points, per step.
    pub residuals: Vec<f64>,
    /// `log₂` ratios of consecutive residuals divided by `log₂` of the step ratio.
    pub orders: Vec<f64>,
}

/// `|Δ_h f(x) + c(x) f(x)|` with the centered `(2n+1)`-point Laplacian, where
/// `f = U, c = U^{p−1}` when `kernel` is `None` and `f = Z, c = pU^{p−1}` otherwise.
pub fn fd_residual(params: &ProblemParams, b: &Bubble, kernel: Option<Kernel>, x: &[f64], h: f64) -> f64 {
    let f = |y: &[f64]| match kernel {
        None => b.value_from_y2(params, b.scaled_dist2(y)),
        Some(k) => kernel_value(params, b, k, y),
    };
    let f0 = f(x);
    let mut y = x.to_vec();
    let mut lap = 0.0;
    for a in 0..x.len() {
        y[a] = x[a] + h;
        let fp = f(&y);
        y[a] = x[a] - h;
        let fm = f(&y);
        y[a] = x[a];
        lap += (fp - 2.0 * f0 + fm) / (h * h);
    }
    let u = b.value_from_y2(params, b.scaled_dist2(x));
    let c = match kernel {
        None => u.powf(params.p - 1.0),
        Some(_) => params.p * u.powf(params.p - 1.0),
    };
    (lap + c * f0).abs()
}

/// Finite-difference order study at `samples` random points with `|y| ≤ 3`.
pub fn fd_order_study(
    params: &ProblemParams,
    b: &Bubble,
    kernel: Option<Kernel>,
    steps: &[f64],
    samples: usize,
    seed: u64,
) -> Result<FdOrderStudy> {
    use rand::{Rng, SeedableRng};
    if steps.len() < 2 || steps.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("an order study needs at least two positive steps"));
    }
    if let Some(k) = kernel {
        Kernel::from_index(k.index(params.n), params.n)?;
    }
    let n = params.n;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let rad = 0.2 + 2.8 * rng.gen::<f64>();
            v.iter().zip(&b.center).map(|(x, z)| z + rad * x / (len * b.scale)).collect()
        })
        .collect();
    let residuals: Vec<f64> = steps
        .iter()
        .map(|&h| {
            points
                .iter()
                .map(|x| fd_residual(params, b, kernel, x, h / b.scale))
                .fold(0.0, f64::max)
        })
        .collect();
    let orders = residuals
        .windows(2)
        .zip(steps.windows(2))
        .map(|(r, h)| (r[0] / r[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    Ok(FdOrderStudy {
        kernel,
        steps: steps.to_vec(),
        residuals,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p6() -> ProblemParams {
        ProblemParams::new(6).unwrap()
    }

    #[test]
    fn params_basic() {
        for n in 3..12 {
            let pp = ProblemParams::new(n).unwrap();
            assert!((pp.two_star() - pp.p() - 1.0).abs() < 1e-14);
            assert_eq!(pp.subquadratic(), pp.p() <= 2.0 && pp.p() > 1.0);
        }
        assert!(ProblemParams::new(2).is_err());
    }

    #[test]
    fn value_at_center_n6() {
        let b = Bubble::new(vec![0.0; 6], 1.0).unwrap();
        let v = bubble_eval(&p6(), &b, &[0.0; 6]).unwrap();
        assert!((v - 24.0).abs() < 1e-12);
    }

    #[test]
    fn value_at_center_n7() {
        let pp = ProblemParams::new(7).unwrap();
        let b = Bubble::new(vec![0.0; 7], 1.0).unwrap();
        let v = bubble_eval(&pp, &b, &[0.0; 7]).unwrap();
        // 35^{5/4} = 35 · 35^{1/4}; 35^{1/4} = sqrt(sqrt(35)).
        let expected = 35.0 * 35f64.sqrt().sqrt();
        assert!((v - expected).abs() < 1e-10);
        assert!((v - 85.13).abs() < 0.01);
    }

    #[test]
    fn value_at_center_scales() {
        for n in [6, 7, 8] {
            let pp = ProblemParams::new(n).unwrap();
            let z = vec![0.3; n];
            let b = Bubble::new(z.clone(), 3.5).unwrap();
            let v = bubble_eval(&pp, &b, &z).unwrap();
            let expected = pp.alpha() * 3.5f64.powf(pp.half_exp());
            assert!((v / expected - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(Bubble::new(vec![0.0; 6], 0.0).is_err());
        assert!(Bubble::new(vec![0.0; 6], -1.0).is_err());
        assert!(Bubble::new(vec![f64::NAN; 6], 1.0).is_err());
        let b = Bubble::new(vec![0.0; 6], 1.0).unwrap();
        assert!(bubble_eval(&p6(), &b, &[f64::INFINITY, 0., 0., 0., 0., 0.]).is_err());
        assert!(bubble_eval(&p6(), &b, &[0.0; 5]).is_err());
        assert!(kernel_eval(&p6(), &b, 0, &[0.0; 6]).is_err());
        assert!(kernel_eval(&p6(), &b, 8, &[0.0; 6]).is_err());
    }

    #[test]
    fn kernel_special_values() {
        let pp = p6();
        let b = Bubble::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 2.0).unwrap();
        let z = b.center().to_vec();
        let u = bubble_eval(&pp, &b, &z).unwrap();
        let zd = kernel_eval(&pp, &b, 7, &z).unwrap();
        assert!((zd / u - 2.0).abs() < 1e-14);
        // |λ(x − z)| = 1
        let mut x = z.clone();
        x[2] += 0.5;
        assert!(kernel_eval(&pp, &b, 7, &x).unwrap().abs() < 1e-12);
        assert_eq!(kernel_eval(&pp, &b, 1, &z).unwrap(), 0.0);
    }

    #[test]
    fn sigma_examples() {
        let pp = p6();
        let b1 = Bubble::on_axis(6, 0.0, 1.0).unwrap();
        let b2 = Bubble::on_axis(6, 10.0, 1.0).unwrap();
        let fam = BubbleFamily::new(pp, vec![b1.clone(), b2]).unwrap();
        let v = sigma_eval(&fam, &[0.0; 6]).unwrap();
        assert!((v - (24.0 + 24.0 / (101.0f64 * 101.0))).abs() < 1e-12);
        let twin = BubbleFamily::new(pp, vec![b1.clone(), b1.clone()]).unwrap();
        let x = [0.2, -0.4, 1.0, 0.0, 0.3, 0.0];
        let single = bubble_eval(&pp, &b1, &x).unwrap();
        assert!((sigma_eval(&twin, &x).unwrap() - 2.0 * single).abs() < 1e-13);
    }

    #[test]
    fn interaction_error_examples() {
        let pp = ProblemParams::new(7).unwrap();
        let one = BubbleFamily::on_axis(pp, &[(0.0, 1.0)]).unwrap();
        assert_eq!(interaction_error_eval(&one, &[0.5; 7]).unwrap(), 0.0);
        let pp6 = p6();
        let two = BubbleFamily::on_axis(pp6, &[(0.0, 1.0), (3.0, 2.0)]).unwrap();
        let x = [1.0, 0.5, 0.0, 0.0, 0.0, 0.2];
        let u1 = bubble_eval(&pp6, &two.bubbles()[0], &x).unwrap();
        let u2 = bubble_eval(&pp6, &two.bubbles()[1], &x).unwrap();
        assert_eq!(interaction_error_eval(&two, &x).unwrap(), 2.0 * u1 * u2);
    }

    #[test]
    fn interaction_error_matches_naive_when_well_conditioned() {
        let p = 1.4;
        let vals = [1.0, 0.7, 0.3];
        let s: f64 = vals.iter().sum();
        let naive = s.powf(p) - vals.iter().map(|v| v.powf(p)).sum::<f64>();
        let v = interaction_error_from_values(p, &vals);
        assert!((v - naive).abs() < 1e-13 * naive);
    }

    #[test]
    fn remainder_series_matches_direct() {
        let p = 1.8;
        for &(s, t) in &[(1.0f64, 2e-4f64), (2.0, -3e-3), (0.5, 0.3), (1.0, -2.5)] {
            let direct = (s + t) * (s + t).abs().powf(p - 1.0) - s.powf(p) - p * s.powf(p - 1.0) * t;
            let v = nonlinear_remainder(p, s, t);
            // the direct form loses ~eps·s^p to cancellation
            assert!(
                (v - direct).abs() <= 1e-9 * direct.abs() + 8.0 * f64::EPSILON * s.powf(p),
                "{s} {t} {v} {direct}"
            );
        }
        assert_eq!(nonlinear_remainder(2.0, 0.0, -3.0), -9.0);
    }

    #[test]
    fn fd_identities_are_second_order() {
        for n in [6, 7] {
            let pp = ProblemParams::new(n).unwrap();
            let b = Bubble::new((0..n).map(|k| 0.1 * k as f64).collect(), 1.7).unwrap();
            let mut kernels = vec![None, Some(Kernel::Dilation), Some(Kernel::Translation(2))];
            kernels.push(Some(Kernel::Translation(0)));
            for k in kernels {
                let st = fd_order_study(&pp, &b, k, &[0.04, 0.02, 0.01], 50, 3).unwrap();
                for o in &st.orders {
                    assert!((o - 2.0).abs() < 0.2, "n={n} {k:?}: {:?}", st.orders);
                }
            }
        }
    }

    #[test]
    fn aligned_to_axis_keeps_geometry() {
        let pp = ProblemParams::new(6).unwrap();
        let b1 = Bubble::new(vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let b2 = Bubble::new(vec![4.0, 6.0, 0.0, 0.0, 0.0, 0.0], 2.0).unwrap();
        let fam = BubbleFamily::new(pp, vec![b1, b2]).unwrap();
        let al = fam.aligned_to_axis().unwrap();
        assert!(al.is_on_axis());
        assert!((al.bubbles()[1].axial() - al.bubbles()[0].axial() - 5.0).abs() < 1e-12);
        let b3 = Bubble::new(vec![0.0, 5.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let tri = BubbleFamily::new(pp, vec![fam.bubbles()[0].clone(), fam.bubbles()[1].clone(), b3]).unwrap();
        assert!(tri.aligned_to_axis().is_err());
    }
}
