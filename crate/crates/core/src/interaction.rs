//! Pairwise interaction `q_ij`, separation scale `R_ij`, tower/cluster
//! classification, and the scalar `p`-inequalities used to bound
//! `σ^p − Σ U_i^p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bubbles::{Bubble, BubbleFamily, ProblemParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Tower,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairInteraction {
    pub q: f64,
    /// `R_ij`, always at least 1.
    pub r_sep: f64,
    pub kind: PairKind,
    /// `1 / R_ij`.
    pub eps: f64,
}

/// `(λ_i/λ_j + λ_j/λ_i + λ_iλ_j|z_i − z_j|²)^{−(n−2)/2}`.
pub fn q_pair(params: &ProblemParams, bi: &Bubble, bj: &Bubble) -> f64 {
    let (li, lj) = (bi.scale(), bj.scale());
    let base = li / lj + lj / li + li * lj * bi.dist2(bj.center());
    base.powf(-params.half_exp())
}

pub fn classify_pair(params: &ProblemParams, bi: &Bubble, bj: &Bubble) -> PairInteraction {
    let (li, lj) = (bi.scale(), bj.scale());
    let tower = (li / lj).sqrt().max((lj / li).sqrt());
    let cluster = (li * lj).sqrt() * bi.dist2(bj.center()).sqrt();
    // Ties go to the cluster side.
    let (r_sep, kind) = if cluster >= tower {
        (cluster, PairKind::Cluster)
    } else {
        (tower, PairKind::Tower)
    };
    PairInteraction {
        q: q_pair(params, bi, bj),
        r_sep,
        kind,
        eps: 1.0 / r_sep,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InteractionReport {
    /// `pairs[i][j]` for `i ≠ j`; the diagonal is `None`.
    pub pairs: Vec<Vec<Option<PairInteraction>>>,
    /// `Q = max q_ij`, zero for a single bubble.
    pub q_max: f64,
    /// `½ min R_ij`; `None` when the family has no pair.
    pub r_half_min: Option<f64>,
    pub delta: f64,
    pub delta_interacting: bool,
}

impl InteractionReport {
    /// Index pair realising `Q`, if any.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.pairs.iter().enumerate() {
            for (j, pi) in row.iter().enumerate().skip(i + 1) {
                if let Some(pi) = pi {
                    if best.is_none_or(|b| pi.q > b.2) {
                        best = Some((i, j, pi.q));
                    }
                }
            }
        }
        best.map(|(i, j, _)| (i, j))
    }
}

pub fn family_report(family: &BubbleFamily, delta: f64) -> InteractionReport {
    let params = family.params();
    let bs = family.bubbles();
    let nu = bs.len();
    let mut pairs = vec![vec![None; nu]; nu];
    let mut q_max: f64 = 0.0;
    let mut r_min = f64::INFINITY;
    for i in 0..nu {
        for j in i + 1..nu {
            let pi = classify_pair(params, &bs[i], &bs[j]);
            q_max = q_max.max(pi.q);
            r_min = r_min.min(pi.r_sep);
            pairs[i][j] = Some(pi);
            pairs[j][i] = Some(pi);
        }
    }
    InteractionReport {
        pairs,
        q_max,
        r_half_min: (nu > 1).then_some(0.5 * r_min),
        delta,
        delta_interacting: q_max < delta,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarInequalityReport {
    pub p: f64,
    pub samples: usize,
    /// Number of tuples where the pairwise bound failed beyond rounding.
    pub violations: usize,
    /// Largest `lhs − rhs` of the pairwise bound; should be `≤ 0`.
    pub max_violation: f64,
    /// Smallest constant `C` with `(a+b)^p − a^p − p a^{p−1} b ≤ C a^{p−2} b²`
    /// over the sampled `a ≥ b > 0`.
    pub fitted_c: f64,
}

/// Left and right sides of `(Σ a_i)^p − Σ a_i^p ≤ Σ_{i≠j} [(a_i+a_j)^p − a_i^p − a_j^p]`,
/// the right sum running over unordered pairs.
pub fn pairwise_bound_sides(p: f64, a: &[f64]) -> (f64, f64) {
    let total: f64 = a.iter().sum();
    let lhs = total.powf(p) - a.iter().map(|x| x.powf(p)).sum::<f64>();
    let mut rhs = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            rhs += (a[i] + a[j]).powf(p) - a[i].powf(p) - a[j].powf(p);
        }
    }
    (lhs, rhs)
}

/// Random check of the two elementary inequalities for `p ∈ (1, 2]`.
/// Tuples have length 2..=6 with entries spread over several decades.
pub fn scalar_inequality_suite(p: f64, samples: usize, seed: u64) -> Result<ScalarInequalityReport> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::invalid(format!("p must lie in (1, 2], got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut max_violation = f64::NEG_INFINITY;
    let mut fitted_c: f64 = 0.0;
    for _ in 0..samples {
        let len = rng.gen_range(2..=6);
        let a: Vec<f64> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    0.0
                } else {
                    10f64.powf(rng.gen_range(-3.0..3.0))
                }
            })
            .collect();
        let (lhs, rhs) = pairwise_bound_sides(p, &a);
        let gap = lhs - rhs;
        let scale = a.iter().sum::<f64>().powf(p);
        max_violation = max_violation.max(gap / scale.max(f64::MIN_POSITIVE));
        if gap > 1e-12 * scale {
            violations += 1;
        }

        let big = 10f64.powf(rng.gen_range(-3.0..3.0));
        let b = big * 10f64.powf(rng.gen_range(-3.0..0.0));
        let lhs2 = (big + b).powf(p) - big.powf(p) - p * big.powf(p - 1.0) * b;
        fitted_c = fitted_c.max(lhs2 / (big.powf(p - 2.0) * b * b));
    }
    Ok(ScalarInequalityReport {
        p,
        samples,
        violations,
        max_violation,
        fitted_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(n: usize) -> ProblemParams {
        ProblemParams::new(n).unwrap()
    }

    #[test]
    fn q_examples() {
        let p6 = pp(6);
        let a = Bubble::on_axis(6, 0.0, 1.0).unwrap();
        let b = Bubble::on_axis(6, 10.0, 1.0).unwrap();
        let q = q_pair(&p6, &a, &b);
        assert!((q - 102f64.powi(-2)).abs() < 1e-18);
        assert!((q - 9.6117e-5).abs() < 1e-8);
        for n in [3, 6, 7, 8] {
            let x = Bubble::on_axis(n, 1.0, 3.0).unwrap();
            let q = q_pair(&pp(n), &x, &x);
            assert!((q - 2f64.powf(-(n as f64 - 2.0) / 2.0)).abs() < 1e-15);
        }
        let c = Bubble::on_axis(6, 0.0, 100.0).unwrap();
        let q = q_pair(&p6, &c, &a);
        assert!((q - 100.01f64.powi(-2)).abs() < 1e-18);
        assert!((q - 9.998e-5).abs() < 1e-8);
    }

    #[test]
    fn classify_examples() {
        let p6 = pp(6);
        let t = classify_pair(
            &p6,
            &Bubble::on_axis(6, 0.0, 100.0).unwrap(),
            &Bubble::on_axis(6, 0.0, 1.0).unwrap(),
        );
        assert_eq!(t.kind, PairKind::Tower);
        assert!((t.r_sep - 10.0).abs() < 1e-12);
        let c = classify_pair(&p6, &Bubble::on_axis(6, 0.0, 1.0).unwrap(), &Bubble::on_axis(6, 10.0, 1.0).unwrap());
        assert_eq!(c.kind, PairKind::Cluster);
        assert!((c.r_sep - 10.0).abs() < 1e-12);
        assert!((c.eps - 0.1).abs() < 1e-15);
        let tie = classify_pair(&p6, &Bubble::on_axis(6, 0.0, 4.0).unwrap(), &Bubble::on_axis(6, 1.0, 1.0).unwrap());
        assert_eq!(tie.kind, PairKind::Cluster);
        assert!((tie.r_sep - 2.0).abs() < 1e-12);
    }

    #[test]
    fn report_examples() {
        let p6 = pp(6);
        let one = BubbleFamily::on_axis(p6, &[(0.0, 1.0)]).unwrap();
        let r = family_report(&one, 1e-9);
        assert_eq!(r.q_max, 0.0);
        assert!(r.delta_interacting);
        assert!(r.r_half_min.is_none());

        let two = BubbleFamily::on_axis(p6, &[(0.0, 1.0), (10.0, 1.0)]).unwrap();
        let r = family_report(&two, 1e-3);
        assert!((r.q_max - 102f64.powi(-2)).abs() < 1e-18);
        assert_eq!(r.r_half_min, Some(5.0));
        assert!(r.delta_interacting);
        assert!(!family_report(&two, 1e-5).delta_interacting);

        let three = BubbleFamily::on_axis(p6, &[(0.0, 1.0), (10.0, 1.0), (20.0, 1.0)]).unwrap();
        let r = family_report(&three, 1.0);
        // brute force over the three pairs
        let bs = three.bubbles();
        let brute = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(i, j)| q_pair(&p6, &bs[i], &bs[j]))
            .fold(0.0, f64::max);
        assert_eq!(r.q_max, brute);
        assert!((r.q_max - 102f64.powi(-2)).abs() < 1e-18);
        assert!(matches!(r.argmax(), Some((0, 1)) | Some((1, 2))));
    }

    #[test]
    fn inequality_examples() {
        let (l, r) = pairwise_bound_sides(1.5, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(l, 0.0);
        assert_eq!(r, 0.0);
        let (l, r) = pairwise_bound_sides(2.0, &[3.0, 5.0]);
        assert_eq!(l, 30.0);
        assert_eq!(r, 30.0);
        assert!(scalar_inequality_suite(2.5, 10, 0).is_err());
        assert!(scalar_inequality_suite(1.0, 10, 0).is_err());
    }

    #[test]
    fn inequality_random_suite() {
        for p in [1.2, 1.4, 5.0 / 3.0, 1.8, 2.0] {
            let rep = scalar_inequality_suite(p, 10_000, 7).unwrap();
            assert_eq!(rep.violations, 0, "p = {p}");
            assert!(rep.max_violation <= 1e-12);
            // (1+x)^p − 1 − px ≤ C x² on (0, 1]; C ≤ p(p−1)/2 ∨ (2^p − 1 − p).
            let bound = (p * (p - 1.0) / 2.0).max(2f64.powf(p) - 1.0 - p);
            assert!(rep.fitted_c <= bound * (1.0 + 1e-9) && rep.fitted_c > 0.0);
        }
    }
}
