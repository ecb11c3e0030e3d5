//! Discrete finite-dimensional reduction for collinear bubble families.
//!
//! Fields live on a graded tensor grid in the axial coordinate `t` and the
//! transverse radius `r`. The operator `Δ + pσ^{p−1}` is discretised by a
//! vertex-centred finite-volume scheme with `r^{n−2}` weights, which keeps it
//! symmetric. The projected problem
//!
//! ```text
//! Δφ + pσ^{p−1}φ = h + Σ c_a^i U_i^{p−1} Z_i^a,    ∫ U_i^{p−1} Z_i^a φ = 0
//! ```
//!
//! is one bordered solve with two constraints per bubble (axial translation
//! and dilation; the transverse kernels are odd in the transverse variables
//! and drop out for axisymmetric `φ`).

pub mod banded;
pub mod snapshot;

use std::sync::Arc;

use serde::Serialize;

use crate::bubbles::{interaction_error_from_values, kernel_value_axisym, nonlinear_remainder, BubbleFamily, Kernel};
use crate::error::{Error, Result};
use crate::interaction::family_report;
use crate::norms::{Weight, WeightProfile};
use crate::quadrature::{self, sphere_area, AxisymFeatures, QuadratureSpec};
use banded::{dot, BandMatrix, BorderedLu};

/// How a grid is laid out around a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPolicy {
    /// Nodes per unit of the `asinh` map, i.e. per e-fold of distance from a
    /// center.
    pub nodes_per_efold: f64,
    /// Core width of the map around bubble `i`, in units of `1/λ_i`.
    pub core: f64,
    /// Truncation distance in units of `max R_ij / min λ_i`.
    pub outer_factor: f64,
    pub max_nt: usize,
    pub max_nr: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            nodes_per_efold: 16.0,
            core: 0.5,
            outer_factor: 10.0,
            max_nt: 1024,
            max_nr: 512,
        }
    }
}

impl GridPolicy {
    pub fn with_density(mut self, nodes_per_efold: f64) -> Self {
        self.nodes_per_efold = nodes_per_efold;
        self
    }
}

/// Tensor grid `t_0 < … < t_{nt−1}`, `0 = r_0 < … < r_{nr−1}`. The outer
/// rows and columns (`i = 0`, `i = nt−1`, `j = nr−1`) carry the homogeneous
/// Dirichlet condition; `r = 0` is a symmetry line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisymGrid {
    n: usize,
    t: Vec<f64>,
    r: Vec<f64>,
    /// `(t_i, a_i)` of the axial map and the radial core width, if built
    /// from a family.
    map: Option<GridMap>,
    #[serde(skip)]
    wt: Vec<f64>,
    #[serde(skip)]
    wr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMap {
    pub centers: Vec<f64>,
    pub cores: Vec<f64>,
    pub radial_core: f64,
    pub nodes_per_efold: f64,
}

impl AxisymGrid {
    pub fn new(n: usize, t: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        Self::with_map(n, t, r, None)
    }

    pub(crate) fn with_map(n: usize, t: Vec<f64>, r: Vec<f64>, map: Option<GridMap>) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("dimension must be at least 3, got {n}")));
        }
        if t.len() < 3 || r.len() < 2 {
            return Err(Error::invalid("grid needs at least 3 axial and 2 radial nodes"));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| x.is_finite());
        if !increasing(&t) || !increasing(&r) {
            return Err(Error::invalid("grid coordinates must be finite and strictly increasing"));
        }
        if r[0] != 0.0 {
            return Err(Error::invalid("the radial grid must start at r = 0"));
        }
        let nt = t.len();
        let wt = (0..nt)
            .map(|i| {
                let lo = if i == 0 { t[0] } else { 0.5 * (t[i - 1] + t[i]) };
                let hi = if i + 1 == nt { t[nt - 1] } else { 0.5 * (t[i] + t[i + 1]) };
                hi - lo
            })
            .collect();
        let nr = r.len();
        let k = n as i32 - 1;
        let wr = (0..nr)
            .map(|j| {
                let lo = if j == 0 { 0.0 } else { 0.5 * (r[j - 1] + r[j]) };
                let hi = if j + 1 == nr { r[nr - 1] } else { 0.5 * (r[j] + r[j + 1]) };
                (hi.powi(k) - lo.powi(k)) / k as f64
            })
            .collect();
        Ok(Self { n, t, r, map, wt, wr })
    }

    /// Graded grid for an on-axis family: axial nodes equidistant in
    /// `Σ_i asinh((t − t_i)/a_i)`, radial nodes equidistant in
    /// `asinh(r/a_min)`, with `a_i = core/λ_i`.
    pub fn for_family(family: &BubbleFamily, policy: &GridPolicy) -> Result<Self> {
        require_on_axis(family)?;
        if !(policy.nodes_per_efold > 0.0 && policy.core > 0.0 && policy.outer_factor >= 1.0) {
            return Err(Error::invalid("grid policy parameters must be positive"));
        }
        let bs = family.bubbles();
        let centers: Vec<f64> = bs.iter().map(|b| b.axial()).collect();
        let cores: Vec<f64> = bs.iter().map(|b| policy.core / b.scale()).collect();
        let lam_min = bs.iter().map(|b| b.scale()).fold(f64::INFINITY, f64::min);
        let r_max_sep = family_report(family, 1.0)
            .pairs
            .iter()
            .flatten()
            .flatten()
            .map(|p| p.r_sep)
            .fold(1.0, f64::max);
        let reach = policy.outer_factor * r_max_sep / lam_min;
        let lo = centers.iter().copied().fold(f64::INFINITY, f64::min) - reach;
        let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max) + reach;

        let fmap = |x: f64| -> f64 { centers.iter().zip(&cores).map(|(c, a)| ((x - c) / a).asinh()).sum() };
        let (f_lo, f_hi) = (fmap(lo), fmap(hi));
        let a_min = cores.iter().copied().fold(f64::INFINITY, f64::min);
        let g_hi = (reach / a_min).asinh();

        // Nodes sit on the lattice F(t) ∈ ℤ/k, G(r) ∈ ℤ/k, so enlarging the
        // domain only appends nodes and leaves the inner ones in place.
        let counts = |k: f64| {
            let imin = (k * f_lo).floor() as i64;
            let imax = (k * f_hi).ceil() as i64;
            (imin, (imax - imin + 1) as usize, (k * g_hi).ceil() as usize + 1)
        };
        let mut k = policy.nodes_per_efold;
        let (mut imin, mut nt, mut nr) = counts(k);
        while nt > policy.max_nt || nr > policy.max_nr {
            let shrink = ((policy.max_nt as f64 - 3.0) / (nt as f64)).min((policy.max_nr as f64 - 2.0) / nr as f64);
            k *= shrink.clamp(0.5, 0.999);
            (imin, nt, nr) = counts(k);
        }
        let span = hi - lo;
        let t: Vec<f64> = (0..nt)
            .map(|i| {
                let target = (imin + i as i64) as f64 / k;
                let (mut a, mut b) = (lo - span, hi + span);
                while fmap(a) > target {
                    a -= span;
                }
                while fmap(b) < target {
                    b += span;
                }
                invert_monotone(&fmap, target, a, b)
            })
            .collect();
        let r: Vec<f64> = (0..nr).map(|j| a_min * (j as f64 / k).sinh()).collect();
        let map = GridMap {
            centers: centers.clone(),
            cores: cores.clone(),
            radial_core: a_min,
            nodes_per_efold: k,
        };
        Self::with_map(family.params().n(), t, r, Some(map))
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn nt(&self) -> usize {
        self.t.len()
    }
    pub fn nr(&self) -> usize {
        self.r.len()
    }
    pub fn len(&self) -> usize {
        self.nt() * self.nr()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn map(&self) -> Option<&GridMap> {
        self.map.as_ref()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nr() + j
    }

    /// Dual-cell measure `∫ r^{n−2} dr dt`, without the `|S^{n−2}|` factor.
    #[inline]
    pub fn volume(&self, i: usize, j: usize) -> f64 {
        self.wt[i] * self.wr[j]
    }

    #[inline]
    fn is_free(&self, i: usize, j: usize) -> bool {
        i > 0 && i + 1 < self.nt() && j + 1 < self.nr()
    }

    fn free_count(&self) -> usize {
        (self.nt() - 2) * (self.nr() - 1)
    }

    #[inline]
    fn free_index(&self, i: usize, j: usize) -> usize {
        (i - 1) * (self.nr() - 1) + j
    }

    /// Link coefficients of the stiffness form: `ct[i][j]` couples
    /// `(i, j)–(i+1, j)` and `cr[i][j]` couples `(i, j)–(i, j+1)`.
    fn links(&self) -> (Vec<f64>, Vec<f64>) {
        let (nt, nr) = (self.nt(), self.nr());
        let k = self.n as i32 - 1;
        let mut ct = vec![0.0; nt * nr];
        let mut cr = vec![0.0; nt * nr];
        for i in 0..nt {
            for j in 0..nr {
                if i + 1 < nt {
                    ct[self.index(i, j)] = self.wr[j] / (self.t[i + 1] - self.t[i]);
                }
                if j + 1 < nr {
                    let (a, b) = (self.r[j], self.r[j + 1]);
                    let w = (b.powi(k) - a.powi(k)) / k as f64;
                    cr[self.index(i, j)] = self.wt[i] * w / ((b - a) * (b - a));
                }
            }
        }
        (ct, cr)
    }

    /// Measure of the whole computational domain's unit sphere factor.
    pub fn sphere_factor(&self) -> f64 {
        sphere_area(self.n - 1)
    }
}

fn invert_monotone(f: &impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn require_on_axis(family: &BubbleFamily) -> Result<()> {
    if family.is_on_axis() {
        Ok(())
    } else if family.aligned_to_axis().is_ok() {
        Err(Error::invalid(
            "the reduction works on the first coordinate axis; align the family with `aligned_to_axis` first",
        ))
    } else {
        Err(Error::invalid("the reduction needs collinear bubble centers"))
    }
}

/// Node values of an axisymmetric function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisymField {
    grid: Arc<AxisymGrid>,
    values: Vec<f64>,
}

impl AxisymField {
    pub fn new(grid: Arc<AxisymGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite field value at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<AxisymGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<AxisymGrid>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for &t in grid.t() {
            for &r in grid.r() {
                values.push(f(t, r));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<AxisymGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Bilinear interpolation; zero outside the grid.
    pub fn interpolate(&self, t: f64, r: f64) -> f64 {
        let g = &*self.grid;
        let (ts, rs) = (g.t(), g.r());
        let r = r.abs();
        if t < ts[0] || t > ts[ts.len() - 1] || r > rs[rs.len() - 1] {
            return 0.0;
        }
        let i = ts.partition_point(|&x| x <= t).clamp(1, ts.len() - 1) - 1;
        let j = rs.partition_point(|&x| x <= r).clamp(1, rs.len() - 1) - 1;
        let u = (t - ts[i]) / (ts[i + 1] - ts[i]);
        let v = (r - rs[j]) / (rs[j + 1] - rs[j]);
        let f = |a, b| self.at(a, b);
        (1.0 - u) * ((1.0 - v) * f(i, j) + v * f(i, j + 1)) + u * ((1.0 - v) * f(i + 1, j) + v * f(i + 1, j + 1))
    }

    /// Value at a point of ℝⁿ, with `t = x₁` and `r = |(x₂, …, xₙ)|`.
    pub fn eval_point(&self, x: &[f64]) -> f64 {
        let r = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        self.interpolate(x[0], r)
    }

    /// `∫ f g` by the grid's dual-cell rule.
    pub fn inner(&self, other: &AxisymField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::invalid("fields live on different grids"));
        }
        Ok(self.weighted_sum(|k, v| v * other.values[k]))
    }

    /// `∫ w f` for node weights `w`.
    fn weighted_sum(&self, f: impl Fn(usize, f64) -> f64) -> f64 {
        let g = &*self.grid;
        let mut s = 0.0;
        for i in 0..g.nt() {
            for j in 0..g.nr() {
                let k = g.index(i, j);
                s += g.volume(i, j) * f(k, self.values[k]);
            }
        }
        s * g.sphere_factor()
    }

    /// `∫ f · g(t, r)` for an analytic `g`.
    pub fn integrate_against(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let grid = &*self.grid;
        self.weighted_sum(|k, v| {
            let (i, j) = (k / grid.nr(), k % grid.nr());
            v * g(grid.t[i], grid.r[j])
        })
    }

    /// `∫|∇f|²` of the piecewise-linear interpolant (per link).
    pub fn gradient_energy(&self) -> f64 {
        let g = &*self.grid;
        let (ct, cr) = g.links();
        let mut e = 0.0;
        for i in 0..g.nt() {
            for j in 0..g.nr() {
                let k = g.index(i, j);
                if i + 1 < g.nt() {
                    let d = self.values[g.index(i + 1, j)] - self.values[k];
                    e += ct[k] * d * d;
                }
                if j + 1 < g.nr() {
                    let d = self.values[g.index(i, j + 1)] - self.values[k];
                    e += cr[k] * d * d;
                }
            }
        }
        e * g.sphere_factor()
    }

    pub fn h1_gradient_norm(&self) -> f64 {
        self.gradient_energy().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |f| / weight` over grid nodes.
    pub fn weighted_sup(&self, profile: &WeightProfile, which: Weight) -> f64 {
        let g = &*self.grid;
        let mut best: f64 = 0.0;
        for i in 0..g.nt() {
            for j in 0..g.nr() {
                let v = self.at(i, j);
                if v != 0.0 {
                    best = best.max(v.abs() / profile.eval_axisym(which, g.t[i], g.r[j]));
                }
            }
        }
        best
    }

    /// `φ(x − s e₁)`: the grid moves along the axis.
    pub fn translated(&self, shift: f64) -> Self {
        let g = &*self.grid;
        let t = g.t.iter().map(|t| t + shift).collect();
        let map = g.map.as_ref().map(|m| GridMap {
            centers: m.centers.iter().map(|c| c + shift).collect(),
            ..m.clone()
        });
        let grid = AxisymGrid::with_map(g.n, t, g.r.clone(), map).expect("translating keeps the grid valid");
        Self {
            grid: Arc::new(grid),
            values: self.values.clone(),
        }
    }

    /// `μ^{−(n−2)/2} φ(x/μ)`, the `Ḣ¹`-isometric image under `x ↦ μx`.
    pub fn dilated(&self, mu: f64) -> Self {
        let g = &*self.grid;
        let t = g.t.iter().map(|t| t * mu).collect();
        let r = g.r.iter().map(|r| r * mu).collect();
        let map = g.map.as_ref().map(|m| GridMap {
            centers: m.centers.iter().map(|c| c * mu).collect(),
            cores: m.cores.iter().map(|c| c * mu).collect(),
            radial_core: m.radial_core * mu,
            nodes_per_efold: m.nodes_per_efold,
        });
        let grid = AxisymGrid::with_map(g.n, t, r, map).expect("dilating keeps the grid valid");
        let c = mu.powf(-(g.n as f64 - 2.0) / 2.0);
        Self {
            grid: Arc::new(grid),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// H⁻¹ norm of a field: solves `−Δu = f` with zero Dirichlet data on the
/// grid boundary and returns `(∫ f u)^{1/2}`.
pub fn hminus1_grid(f: &AxisymField) -> Result<f64> {
    let g = &**f.grid();
    let (ct, cr) = g.links();
    let bw = g.nr() - 1;
    let nfree = g.free_count();
    let mut k = BandMatrix::zeros(nfree, bw, bw);
    assemble_stiffness(g, &ct, &cr, |row, col, v| k.add(row, col, v));
    let lu = k.factor()?;
    let mut rhs = vec![0.0; nfree];
    for i in 1..g.nt() - 1 {
        for j in 0..g.nr() - 1 {
            rhs[g.free_index(i, j)] = g.volume(i, j) * f.at(i, j);
        }
    }
    let mut u = rhs.clone();
    lu.solve_in_place(&mut u);
    Ok((dot(&rhs, &u) * g.sphere_factor()).max(0.0).sqrt())
}

/// Adds the entries of `K` (`Σ c (φ_k − φ_nb)²` as a quadratic form) over
/// free nodes.
fn assemble_stiffness(g: &AxisymGrid, ct: &[f64], cr: &[f64], mut add: impl FnMut(usize, usize, f64)) {
    for i in 0..g.nt() {
        for j in 0..g.nr() {
            let k = g.index(i, j);
            let mut link = |i2: usize, j2: usize, c: f64| {
                let a = g.is_free(i, j).then(|| g.free_index(i, j));
                let b = g.is_free(i2, j2).then(|| g.free_index(i2, j2));
                if let Some(a) = a {
                    add(a, a, c);
                }
                if let Some(b) = b {
                    add(b, b, c);
                }
                if let (Some(a), Some(b)) = (a, b) {
                    add(a, b, -c);
                    add(b, a, -c);
                }
            };
            if i + 1 < g.nt() {
                link(i + 1, j, ct[k]);
            }
            if j + 1 < g.nr() {
                link(i, j + 1, cr[k]);
            }
        }
    }
}

/// One multiplier `c_a^i` with its kernel label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Multiplier {
    pub bubble: usize,
    pub kernel: Kernel,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ReductionSolution {
    pub phi: AxisymField,
    pub multipliers: Vec<Multiplier>,
    /// `∥residual∥_**` relative to `∥forcing∥_**`, both sampled on the grid.
    pub residual_norm: f64,
    /// `max |∫U_i^{p−1} Z_i^a φ| / (∫|U_i^{p−1} Z_i^a| · max|φ|)`.
    pub ortho_defect: f64,
    pub iterations: usize,
    /// `∥φ_{k+1} − φ_k∥_*` per fixed-point step.
    pub increments: Vec<f64>,
    pub relaxation_used: bool,
    pub condition: f64,
}

impl ReductionSolution {
    pub fn max_multiplier(&self) -> f64 {
        self.multipliers.iter().fold(0.0, |m, c| m.max(c.value.abs()))
    }
}

/// The discretised projected operator of one family on one grid, factored
/// once and reused for every right-hand side.
pub struct ReductionOperator {
    family: BubbleFamily,
    grid: Arc<AxisymGrid>,
    labels: Vec<(usize, Kernel)>,
    /// Constraint columns `vol · U_i^{p−1} Z_i^a` over free nodes.
    constraints: Vec<Vec<f64>>,
    /// `U_i` at every grid node, per bubble.
    bubble_values: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    solver: BorderedLu,
}

impl ReductionOperator {
    pub fn new(family: &BubbleFamily, grid: Arc<AxisymGrid>) -> Result<Self> {
        require_on_axis(family)?;
        let params = *family.params();
        if grid.dim() != params.n() {
            return Err(Error::invalid("grid and family dimensions differ"));
        }
        let g = &*grid;
        let p = params.p();
        let bs = family.bubbles();
        let bubble_values: Vec<Vec<f64>> = bs
            .iter()
            .map(|b| {
                let mut v = Vec::with_capacity(g.len());
                for &t in g.t() {
                    for &r in g.r() {
                        v.push(b.value_from_y2(&params, b.scaled_dist2_axisym(t, r)));
                    }
                }
                v
            })
            .collect();
        let sigma: Vec<f64> = (0..g.len()).map(|k| bubble_values.iter().map(|u| u[k]).sum()).collect();

        let (ct, cr) = g.links();
        let bw = g.nr() - 1;
        let nfree = g.free_count();
        let mut a = BandMatrix::zeros(nfree, bw, bw);
        assemble_stiffness(g, &ct, &cr, |row, col, v| a.add(row, col, -v));
        for i in 1..g.nt() - 1 {
            for j in 0..g.nr() - 1 {
                let f = g.free_index(i, j);
                a.add(f, f, g.volume(i, j) * p * sigma[g.index(i, j)].powf(p - 1.0));
            }
        }

        let mut labels = Vec::new();
        let mut constraints = Vec::new();
        for (bi, b) in bs.iter().enumerate() {
            for kernel in Kernel::axisymmetric() {
                let mut col = vec![0.0; nfree];
                for i in 1..g.nt() - 1 {
                    for j in 0..g.nr() - 1 {
                        let u = bubble_values[bi][g.index(i, j)];
                        let z = kernel_value_axisym(&params, b, kernel, g.t[i], g.r[j]);
                        col[g.free_index(i, j)] = g.volume(i, j) * u.powf(p - 1.0) * z;
                    }
                }
                labels.push((bi, kernel));
                constraints.push(col);
            }
        }
        // The bordered system is [[A, −G], [−Gᵀ, 0]]; negate the border.
        let border: Vec<Vec<f64>> = constraints.iter().map(|c| c.iter().map(|v| -v).collect()).collect();
        let solver = BorderedLu::new(a, border)?;
        Ok(Self {
            family: family.clone(),
            grid,
            labels,
            constraints,
            bubble_values,
            sigma,
            solver,
        })
    }

    pub fn grid(&self) -> &Arc<AxisymGrid> {
        &self.grid
    }

    pub fn family(&self) -> &BubbleFamily {
        &self.family
    }

    pub fn condition(&self) -> f64 {
        self.solver.condition
    }

    /// `σ` at the grid nodes.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// `σ^p − Σ U_i^p` at the grid nodes.
    pub fn interaction_error(&self) -> Vec<f64> {
        let p = self.family.params().p();
        let mut vals = vec![0.0; self.bubble_values.len()];
        (0..self.grid.len())
            .map(|k| {
                for (v, u) in vals.iter_mut().zip(&self.bubble_values) {
                    *v = u[k];
                }
                interaction_error_from_values(p, &vals)
            })
            .collect()
    }

    /// Solves the projected problem for node values `h`.
    pub fn solve(&self, h: &[f64]) -> (AxisymField, Vec<Multiplier>) {
        let g = &*self.grid;
        let mut f = vec![0.0; g.free_count()];
        for i in 1..g.nt() - 1 {
            for j in 0..g.nr() - 1 {
                f[g.free_index(i, j)] = g.volume(i, j) * h[g.index(i, j)];
            }
        }
        let zeros = vec![0.0; self.constraints.len()];
        let (x, c) = self.solver.solve(&f, &zeros);
        let mut values = vec![0.0; g.len()];
        for i in 1..g.nt() - 1 {
            for j in 0..g.nr() - 1 {
                values[g.index(i, j)] = x[g.free_index(i, j)];
            }
        }
        let multipliers = self
            .labels
            .iter()
            .zip(c)
            .map(|(&(bubble, kernel), value)| Multiplier { bubble, kernel, value })
            .collect();
        (
            AxisymField {
                grid: self.grid.clone(),
                values,
            },
            multipliers,
        )
    }

    /// Pointwise residual `(Aφ − Gc)/vol − h` at free nodes (zero elsewhere).
    pub fn residual(&self, phi: &AxisymField, multipliers: &[Multiplier], h: &[f64]) -> Vec<f64> {
        let g = &*self.grid;
        let mut x = vec![0.0; g.free_count()];
        for i in 1..g.nt() - 1 {
            for j in 0..g.nr() - 1 {
                x[g.free_index(i, j)] = phi.at(i, j);
            }
        }
        let mut ax = vec![0.0; x.len()];
        self.solver.matrix().matvec(&x, &mut ax);
        for (col, m) in self.constraints.iter().zip(multipliers) {
            for (a, c) in ax.iter_mut().zip(col) {
                *a -= c * m.value;
            }
        }
        let mut out = vec![0.0; g.len()];
        for i in 1..g.nt() - 1 {
            for j in 0..g.nr() - 1 {
                let k = g.index(i, j);
                out[k] = ax[g.free_index(i, j)] / g.volume(i, j) - h[k];
            }
        }
        out
    }

    /// Normalised constraint defect of `φ`.
    pub fn ortho_defect(&self, phi: &AxisymField) -> f64 {
        let g = &*self.grid;
        let scale = phi.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for col in &self.constraints {
            let mut s = 0.0;
            let mut mass = 0.0;
            for i in 1..g.nt() - 1 {
                for j in 0..g.nr() - 1 {
                    let c = col[g.free_index(i, j)];
                    s += c * phi.at(i, j);
                    mass += c.abs();
                }
            }
            worst = worst.max(s.abs() / (mass * scale));
        }
        worst
    }

    /// `∫ U_i^{p−1} Z_i^a φ` for every active constraint, including the
    /// `|S^{n−2}|` factor.
    pub fn constraint_values(&self, phi: &AxisymField) -> Vec<f64> {
        let g = &*self.grid;
        self.constraints
            .iter()
            .map(|col| {
                let mut s = 0.0;
                for i in 1..g.nt() - 1 {
                    for j in 0..g.nr() - 1 {
                        s += col[g.free_index(i, j)] * phi.at(i, j);
                    }
                }
                s * g.sphere_factor()
            })
            .collect()
    }

    fn sup_over_nodes(&self, values: &[f64], profile: &WeightProfile, which: Weight) -> f64 {
        let g = &*self.grid;
        let mut best: f64 = 0.0;
        for i in 1..g.nt() - 1 {
            for j in 0..g.nr() - 1 {
                let v = values[g.index(i, j)];
                if v != 0.0 {
                    best = best.max(v.abs() / profile.eval_axisym(which, g.t[i], g.r[j]));
                }
            }
        }
        best
    }
}

/// Solves the projected linear problem for forcing `h` on `h`'s grid.
pub fn solve_projected_linear(family: &BubbleFamily, h: &AxisymField) -> Result<ReductionSolution> {
    let op = ReductionOperator::new(family, h.grid().clone())?;
    solve_projected_linear_with(&op, h)
}

pub fn solve_projected_linear_with(op: &ReductionOperator, h: &AxisymField) -> Result<ReductionSolution> {
    if h.grid() != op.grid() {
        return Err(Error::invalid("forcing lives on a different grid than the operator"));
    }
    let (phi, multipliers) = op.solve(h.values());
    let res = op.residual(&phi, &multipliers, h.values());
    let residual_norm = match profile_for(op.family()) {
        Some(prof) => {
            let hn = op.sup_over_nodes(h.values(), &prof, Weight::V);
            let rn = op.sup_over_nodes(&res, &prof, Weight::V);
            if hn > 0.0 {
                rn / hn
            } else {
                rn
            }
        }
        None => {
            let hn = h.max_abs();
            let rn = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if hn > 0.0 {
                rn / hn
            } else {
                rn
            }
        }
    };
    let ortho_defect = op.ortho_defect(&phi);
    Ok(ReductionSolution {
        phi,
        multipliers,
        residual_norm,
        ortho_defect,
        iterations: 1,
        increments: Vec::new(),
        relaxation_used: false,
        condition: op.condition(),
    })
}

fn profile_for(family: &BubbleFamily) -> Option<WeightProfile> {
    WeightProfile::new(family.clone()).ok()
}

/// Fixed-point settings for [`solve_rho0`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointOptions {
    /// Stop when `∥φ_{k+1} − φ_k∥_* ≤ tol · ∥φ_{k+1}∥_*`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50 }
    }
}

/// `ρ₀` from `φ ↦ −L(N₁(φ)) − L(N₂)` starting at zero.
pub fn solve_rho0(family: &BubbleFamily, grid: Arc<AxisymGrid>, opts: &FixedPointOptions) -> Result<ReductionSolution> {
    let op = ReductionOperator::new(family, grid)?;
    solve_rho0_with(&op, opts)
}

pub fn solve_rho0_with(op: &ReductionOperator, opts: &FixedPointOptions) -> Result<ReductionSolution> {
    let g = op.grid().clone();
    let p = op.family().params().p();
    let n2 = op.interaction_error();
    let Some(profile) = profile_for(op.family()) else {
        // A single bubble has N₂ ≡ 0, so ρ₀ = 0.
        return Ok(ReductionSolution {
            phi: AxisymField::zeros(g),
            multipliers: op
                .labels
                .iter()
                .map(|&(bubble, kernel)| Multiplier {
                    bubble,
                    kernel,
                    value: 0.0,
                })
                .collect(),
            residual_norm: 0.0,
            ortho_defect: 0.0,
            iterations: 0,
            increments: Vec::new(),
            relaxation_used: false,
            condition: op.condition(),
        });
    };
    let forcing = |phi: &AxisymField| -> Vec<f64> {
        phi.values
            .iter()
            .zip(op.sigma())
            .zip(&n2)
            .map(|((&f, &s), &e)| -nonlinear_remainder(p, s, f) - e)
            .collect()
    };

    let run = |relax: f64| -> Result<(AxisymField, Vec<Multiplier>, Vec<f64>, usize)> {
        let mut phi = AxisymField::zeros(g.clone());
        let mut mult;
        let mut increments = Vec::new();
        let mut growth = 0;
        for it in 1..=opts.max_iter {
            let (next, c) = op.solve(&forcing(&phi));
            let next = if relax != 1.0 {
                let vals = phi
                    .values
                    .iter()
                    .zip(&next.values)
                    .map(|(a, b)| (1.0 - relax) * a + relax * b)
                    .collect();
                AxisymField {
                    grid: g.clone(),
                    values: vals,
                }
            } else {
                next
            };
            let diff: Vec<f64> = next.values.iter().zip(&phi.values).map(|(a, b)| a - b).collect();
            let inc = op.sup_over_nodes(&diff, &profile, Weight::W);
            let size = op.sup_over_nodes(&next.values, &profile, Weight::W);
            if let Some(&last) = increments.last() {
                growth = if inc > last { growth + 1 } else { 0 };
            }
            increments.push(inc);
            phi = next;
            mult = c;
            if !inc.is_finite() || growth >= 3 {
                return Err(Error::Divergence {
                    iterations: it,
                    q: family_report(op.family(), 1.0).q_max,
                    nodes: g.len(),
                });
            }
            if inc <= opts.tol * size.max(f64::MIN_POSITIVE) {
                return Ok((phi, mult, increments, it));
            }
        }
        Err(Error::Accuracy {
            message: format!("fixed point did not reach tolerance in {} iterations", opts.max_iter),
            estimate: *increments.last().unwrap_or(&f64::NAN),
            error: opts.tol,
        })
    };

    let (result, relaxation_used) = match run(1.0) {
        Ok(r) => (r, false),
        Err(Error::Divergence { .. }) => (run(0.5)?, true),
        Err(e) => return Err(e),
    };
    let (phi, multipliers, increments, iterations) = result;
    let h = forcing(&phi);
    let res = op.residual(&phi, &multipliers, &h);
    let n2_norm = op.sup_over_nodes(&n2, &profile, Weight::V);
    let residual_norm = op.sup_over_nodes(&res, &profile, Weight::V) / n2_norm;
    let ortho_defect = op.ortho_defect(&phi);
    Ok(ReductionSolution {
        phi,
        multipliers,
        residual_norm,
        ortho_defect,
        iterations,
        increments,
        relaxation_used,
        condition: op.condition(),
    })
}

/// One row of a gradient-scaling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientPoint {
    pub q: f64,
    pub grad_norm: f64,
    pub star_norm: f64,
    pub max_multiplier: f64,
    pub residual_norm: f64,
    pub ortho_defect: f64,
    pub nt: usize,
    pub nr: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientScaling {
    pub n: usize,
    pub points: Vec<GradientPoint>,
    /// Least-squares slope of `log∥∇ρ₀∥` against `log Q` (meaningful for `n ≥ 7`).
    pub slope: f64,
    /// `∥∇ρ₀∥ / (Q |log Q|^{1/2})` per point (the `n = 6` normalisation).
    pub log_ratios: Vec<f64>,
}

/// Solves for `ρ₀` on each family and fits `∥∇ρ₀∥` against `Q`.
pub fn rho0_gradient_scaling(families: &[BubbleFamily], policy: &GridPolicy, opts: &FixedPointOptions) -> Result<GradientScaling> {
    if families.len() < 2 {
        return Err(Error::invalid("a scaling sweep needs at least two configurations"));
    }
    let n = families[0].params().n();
    if families.iter().any(|f| f.params().n() != n) {
        return Err(Error::invalid("all configurations of a sweep must share the dimension"));
    }
    let points = families
        .iter()
        .map(|fam| gradient_point(fam, policy, opts))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.q.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.grad_norm.ln()).collect();
    let slope = crate::fit::least_squares(&xs, &ys)?.slope;
    let log_ratios = points.iter().map(|p| p.grad_norm / (p.q * p.q.ln().abs().sqrt())).collect();
    Ok(GradientScaling {
        n,
        points,
        slope,
        log_ratios,
    })
}

pub fn gradient_point(family: &BubbleFamily, policy: &GridPolicy, opts: &FixedPointOptions) -> Result<GradientPoint> {
    let grid = Arc::new(AxisymGrid::for_family(family, policy)?);
    let (nt, nr) = (grid.nt(), grid.nr());
    let sol = solve_rho0(family, grid, opts)?;
    let star = profile_for(family).map_or(0.0, |p| sol.phi.weighted_sup(&p, Weight::W));
    Ok(GradientPoint {
        q: family_report(family, 1.0).q_max,
        grad_norm: sol.phi.h1_gradient_norm(),
        star_norm: star,
        max_multiplier: sol.max_multiplier(),
        residual_norm: sol.residual_norm,
        ortho_defect: sol.ortho_defect,
        nt,
        nr,
    })
}

/// `∫ I₁ Z_k^{n+1}` against `Σ_{i≠k} ∫ U_i^p Z_k^{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionCheck {
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / Q`.
    pub gap_over_q: f64,
    /// `|lhs| / Q`.
    pub lhs_over_q: f64,
}

pub fn interaction_projection_check(family: &BubbleFamily, k: usize, spec: &QuadratureSpec) -> Result<ProjectionCheck> {
    let bs = family.bubbles();
    if k >= bs.len() {
        return Err(Error::invalid(format!("bubble index {k} out of range")));
    }
    if bs.len() == 1 {
        return Ok(ProjectionCheck {
            q: 0.0,
            lhs: 0.0,
            rhs: 0.0,
            gap_over_q: 0.0,
            lhs_over_q: 0.0,
        });
    }
    let params = *family.params();
    let al = family.aligned_to_axis()?;
    let abs = al.bubbles();
    let bk = &abs[k];
    let mut feats = AxisymFeatures::from_bubbles(abs).with_sphere(bk.axial(), 1.0 / bk.scale());
    for b in abs {
        feats = feats.with_sphere(b.axial(), 1.0 / b.scale());
    }
    let q = family_report(family, 1.0).q_max;
    let p = params.p();
    let lhs = quadrature::integrate_axisym_abs_floor(
        |t, r| {
            let vals: Vec<f64> = abs.iter().map(|b| b.value_from_y2(&params, b.scaled_dist2_axisym(t, r))).collect();
            interaction_error_from_values(p, &vals) * kernel_value_axisym(&params, bk, Kernel::Dilation, t, r)
        },
        params.n(),
        &feats,
        spec,
        1e-4 * spec.target_rel_err * q,
    )?
    .value;
    let mut rhs = 0.0;
    for (i, bi) in bs.iter().enumerate() {
        if i != k {
            rhs += quadrature::lambda_deriv_integral(&params, bi, &bs[k], spec)?.value;
        }
    }
    Ok(ProjectionCheck {
        q,
        lhs,
        rhs,
        gap_over_q: (lhs - rhs).abs() / q,
        lhs_over_q: lhs.abs() / q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::ProblemParams;

    fn small_policy() -> GridPolicy {
        GridPolicy {
            nodes_per_efold: 6.0,
            ..GridPolicy::default()
        }
    }

    #[test]
    fn grid_respects_limits_and_reach() {
        let fam = BubbleFamily::on_axis(ProblemParams::new(7).unwrap(), &[(-10.0, 1.0), (10.0, 1.0)]).unwrap();
        let g = AxisymGrid::for_family(&fam, &GridPolicy::default()).unwrap();
        assert!(g.nt() <= 1024 && g.nr() <= 512);
        assert!(g.t()[0] <= -10.0 - 200.0 + 1e-9 && g.t()[g.nt() - 1] >= 210.0 - 1e-9);
        assert!(g.r()[g.nr() - 1] >= 200.0 - 1e-9);
        let tight = GridPolicy {
            max_nt: 100,
            max_nr: 40,
            ..GridPolicy::default()
        };
        let g = AxisymGrid::for_family(&fam, &tight).unwrap();
        assert!(g.nt() <= 100 && g.nr() <= 40);
    }

    #[test]
    fn rejects_off_axis_families() {
        let pp = ProblemParams::new(6).unwrap();
        let b1 = crate::Bubble::new(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let b2 = crate::Bubble::new(vec![5.0, 1.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let fam = BubbleFamily::new(pp, vec![b1, b2]).unwrap();
        assert!(AxisymGrid::for_family(&fam, &GridPolicy::default()).is_err());
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let fam = BubbleFamily::on_axis(ProblemParams::new(6).unwrap(), &[(-5.0, 1.0), (5.0, 1.0)]).unwrap();
        let grid = Arc::new(AxisymGrid::for_family(&fam, &small_policy()).unwrap());
        let sol = solve_projected_linear(&fam, &AxisymField::zeros(grid)).unwrap();
        assert_eq!(sol.phi.max_abs(), 0.0);
        assert_eq!(sol.max_multiplier(), 0.0);
    }

    #[test]
    fn kernel_forcing_is_absorbed_by_multiplier() {
        let pp = ProblemParams::new(6).unwrap();
        let fam = BubbleFamily::on_axis(pp, &[(-5.0, 1.0), (5.0, 1.0)]).unwrap();
        let grid = Arc::new(AxisymGrid::for_family(&fam, &small_policy()).unwrap());
        let b = fam.bubbles()[1].clone();
        let h = AxisymField::from_fn(grid, |t, r| {
            let u = b.value_from_y2(&pp, b.scaled_dist2_axisym(t, r));
            u.powf(pp.p() - 1.0) * kernel_value_axisym(&pp, &b, Kernel::Dilation, t, r)
        })
        .unwrap();
        let sol = solve_projected_linear(&fam, &h).unwrap();
        assert!(sol.phi.max_abs() < 1e-8, "{}", sol.phi.max_abs());
        for m in &sol.multipliers {
            let expect = if m.bubble == 1 && m.kernel == Kernel::Dilation { -1.0 } else { 0.0 };
            assert!((m.value - expect).abs() < 1e-8, "{m:?}");
        }
    }

    #[test]
    fn single_bubble_rho0_vanishes() {
        let fam = BubbleFamily::on_axis(ProblemParams::new(7).unwrap(), &[(0.0, 1.0)]).unwrap();
        let grid = Arc::new(AxisymGrid::for_family(&fam, &small_policy()).unwrap());
        let sol = solve_rho0(&fam, grid, &FixedPointOptions::default()).unwrap();
        assert_eq!(sol.phi.max_abs(), 0.0);
        assert_eq!(sol.max_multiplier(), 0.0);
    }

    #[test]
    fn interpolation_is_exact_for_bilinear() {
        let grid = Arc::new(AxisymGrid::new(6, vec![-1.0, 0.0, 0.5, 2.0], vec![0.0, 0.3, 1.0]).unwrap());
        let f = AxisymField::from_fn(grid, |t, r| 1.0 + 2.0 * t - r + 0.5 * t * r).unwrap();
        for &(t, r) in &[(0.2, 0.1), (-0.7, 0.9), (1.9, 0.5)] {
            assert!((f.interpolate(t, r) - (1.0 + 2.0 * t - r + 0.5 * t * r)).abs() < 1e-14);
        }
        assert_eq!(f.interpolate(5.0, 0.0), 0.0);
    }

    #[test]
    fn gradient_energy_of_linear_function() {
        // φ = t on a grid: ∫|∇φ|² = |S^{n−2}| (t_max − t_min) ∫₀^{r_max} r^{n−2} dr
        let n = 5;
        let grid = Arc::new(AxisymGrid::new(n, vec![0.0, 0.4, 1.0, 1.5], vec![0.0, 0.2, 0.7, 1.0]).unwrap());
        let f = AxisymField::from_fn(grid.clone(), |t, _| t).unwrap();
        let expect = grid.sphere_factor() * 1.5 * 1.0 / (n as f64 - 1.0);
        assert!((f.gradient_energy() / expect - 1.0).abs() < 1e-13);
    }
}
