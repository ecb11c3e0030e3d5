//! Weighted integrals: products of the `V`/`W`
//! weight components with `σ^{p−1}`, bubbles and each other, restricted to
//! the inner (`|y_i| ≤ R`) or outer (`|y_i| ≥ R`) region of a bubble, and
//! swept in `R` across the four two-bubble geometries.

use bubblelab::quadrature::{integrate_axisym, integrate_radial_with_breaks, AxisymFeatures, QuadratureSpec};
use bubblelab::{BubbleFamily, ProblemParams, Result};
use serde::Serialize;

use crate::record::ExperimentRecord;
use crate::suite::{describe, list, run_jobs, Job, SuiteContext};

/// Two-bubble geometry at cutoff `R = ½ R₁₂`. "Higher" means `λ₁ > λ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// Concentric, `λ₁ = (2R)²`, `λ₂ = 1`.
    TowerHigher,
    /// Concentric, `λ₁ = 1`, `λ₂ = (2R)²`.
    TowerLower,
    /// `λ₁ = 4`, `λ₂ = 1`, `|z₁ − z₂| = R`.
    ClusterHigher,
    /// `λ₁ = 1`, `λ₂ = 4`, `|z₁ − z₂| = R`.
    ClusterLower,
}

impl Geometry {
    pub const ALL: [Geometry; 4] = [
        Geometry::TowerHigher,
        Geometry::TowerLower,
        Geometry::ClusterHigher,
        Geometry::ClusterLower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Geometry::TowerHigher => "tower_higher",
            Geometry::TowerLower => "tower_lower",
            Geometry::ClusterHigher => "cluster_higher",
            Geometry::ClusterLower => "cluster_lower",
        }
    }

    /// `(axial position, scale)` of the two bubbles.
    fn pair(self, r: f64) -> [(f64, f64); 2] {
        let big = 4.0 * r * r;
        match self {
            Geometry::TowerHigher => [(0.0, big), (0.0, 1.0)],
            Geometry::TowerLower => [(0.0, 1.0), (0.0, big)],
            Geometry::ClusterHigher => [(0.0, 4.0), (r, 1.0)],
            Geometry::ClusterLower => [(0.0, 1.0), (r, 4.0)],
        }
    }

    /// A third bubble keeping `½ min R_ij = R`: one more tower level below
    /// the lower scale, or a mirror image of the second cluster bubble.
    fn third(self, r: f64) -> (f64, f64) {
        match self {
            Geometry::TowerHigher | Geometry::TowerLower => (0.0, 0.25 / (r * r)),
            Geometry::ClusterHigher => (-r, 1.0),
            Geometry::ClusterLower => (-r, 4.0),
        }
    }

    pub fn family(self, n: usize, r: f64) -> Result<BubbleFamily> {
        BubbleFamily::on_axis(ProblemParams::new(n)?, &self.pair(r))
    }

    pub fn triple(self, n: usize, r: f64) -> Result<BubbleFamily> {
        let [a, b] = self.pair(r);
        BubbleFamily::on_axis(ProblemParams::new(n)?, &[a, b, self.third(r)])
    }
}

/// Factor of an integrand, as a function of one bubble's `|y_i|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    /// `λ_i² ⟨y_i⟩^{−4}`, the profile of `U_i^{p−1}`.
    SigmaPow(usize),
    /// `λ_i^{(n−2)/2} ⟨y_i⟩^{2−n}`, the profile of `U_i`.
    Bubble(usize),
    /// Inner `W` component `λ_i^{(n−2)/2} R^{2−n} ⟨y_i⟩^{−2}`.
    WInner(usize),
    /// Outer `W` component `λ_i^{(n−2)/2} R^{−4} ⟨y_i⟩^{4−n}`.
    WOuter(usize),
    /// Inner `V` component `λ_i^{(n+2)/2} R^{2−n} ⟨y_i⟩^{−4}`.
    VInner(usize),
    /// Outer `V` component `λ_i^{(n+2)/2} R^{−4} ⟨y_i⟩^{2−n}`.
    VOuter(usize),
}

impl Factor {
    fn bubble(self) -> usize {
        match self {
            Factor::SigmaPow(i) | Factor::Bubble(i) | Factor::WInner(i) | Factor::WOuter(i) | Factor::VInner(i) | Factor::VOuter(i) => i,
        }
    }

    /// `(λ power, R power, ⟨y⟩ power)`.
    fn powers(self, n: f64) -> (f64, f64, f64) {
        match self {
            Factor::SigmaPow(_) => (2.0, 0.0, -4.0),
            Factor::Bubble(_) => (0.5 * (n - 2.0), 0.0, 2.0 - n),
            Factor::WInner(_) => (0.5 * (n - 2.0), 2.0 - n, -2.0),
            Factor::WOuter(_) => (0.5 * (n - 2.0), -4.0, 4.0 - n),
            Factor::VInner(_) => (0.5 * (n + 2.0), 2.0 - n, -4.0),
            Factor::VOuter(_) => (0.5 * (n + 2.0), -4.0, 2.0 - n),
        }
    }

    fn ln_value(self, n: f64, ln_r: f64, ln_lambda: f64, y2: f64) -> f64 {
        let (a, b, c) = self.powers(n);
        a * ln_lambda + b * ln_r + 0.5 * c * y2.ln_1p()
    }
}

/// Where an integrand is supported relative to bubble `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Inner(usize),
    Outer(usize),
}

impl Region {
    fn contains(self, y2: &[f64], r2: f64) -> bool {
        match self {
            Region::Inner(i) => y2[i] <= r2,
            Region::Outer(i) => y2[i] >= r2,
        }
    }
}

/// Sharp (`≈`) or upper-bound (`≲`) prediction `R^exponent (log R)^log_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub exponent: f64,
    pub log_power: f64,
    pub sharp: bool,
}

impl Prediction {
    fn sharp(exponent: f64, log_power: f64) -> Option<Self> {
        Some(Self {
            exponent,
            log_power,
            sharp: true,
        })
    }

    fn upper(exponent: f64, log_power: f64) -> Option<Self> {
        Some(Self {
            exponent,
            log_power,
            sharp: false,
        })
    }

    pub fn describe(&self) -> String {
        let rel = if self.sharp { "~" } else { "<~" };
        if self.log_power == 0.0 {
            format!("{rel} R^{}", self.exponent)
        } else {
            format!("{rel} R^{} (log R)^{}", self.exponent, self.log_power)
        }
    }

    pub fn ratio(&self, r: f64, value: f64) -> f64 {
        value / (r.powf(self.exponent) * r.ln().powf(self.log_power))
    }
}

/// One integral: a sum of terms, each a product of factors over an
/// intersection of regions.
#[derive(Debug, Clone)]
pub struct WeightedIntegral {
    pub id: &'static str,
    pub anchor: &'static str,
    pub terms: Vec<(Vec<Factor>, Vec<Region>)>,
    /// Number of bubbles the integrand refers to.
    pub bubbles: usize,
    predict: fn(usize) -> Option<Prediction>,
}

impl WeightedIntegral {
    pub fn prediction(&self, n: usize) -> Option<Prediction> {
        (self.predict)(n)
    }

    fn single_bubble(&self) -> bool {
        self.terms
            .iter()
            .all(|(fs, rs)| fs.iter().all(|f| f.bubble() == 0) && rs.iter().all(|r| matches!(r, Region::Inner(0) | Region::Outer(0))))
    }

    /// Value of the integral for `family` at cutoff `r`.
    pub fn evaluate(&self, family: &BubbleFamily, r: f64, spec: &QuadratureSpec) -> Result<f64> {
        let n = family.params().n();
        let nf = n as f64;
        let ln_r = r.ln();
        let r2 = r * r;
        let bs = family.bubbles();
        let ln_l: Vec<f64> = bs.iter().map(|b| b.scale().ln()).collect();
        let term_value = |y2: &[f64]| -> f64 {
            self.terms
                .iter()
                .filter(|(_, rs)| rs.iter().all(|g| g.contains(y2, r2)))
                .map(|(fs, _)| {
                    fs.iter()
                        .map(|f| f.ln_value(nf, ln_r, ln_l[f.bubble()], y2[f.bubble()]))
                        .sum::<f64>()
                        .exp()
                })
                .sum()
        };
        if self.single_bubble() {
            let l = bs[0].scale();
            let sub = QuadratureSpec {
                compact_scale: 1.0 / l,
                ..*spec
            };
            let est = integrate_radial_with_breaks(
                |rho| {
                    let y = [l * l * rho * rho];
                    term_value(&y)
                },
                n,
                &[r / l],
                &sub,
            )?;
            return Ok(est.value);
        }
        let mut feats = AxisymFeatures::from_bubbles(bs);
        for b in bs {
            feats = feats.with_sphere(b.axial(), r / b.scale());
        }
        let est = integrate_axisym(
            |t, rho| {
                let mut y2 = [0.0; 3];
                for (k, b) in bs.iter().enumerate().take(3) {
                    y2[k] = b.scaled_dist2_axisym(t, rho);
                }
                term_value(&y2[..bs.len()])
            },
            n,
            &feats,
            spec,
        )?;
        Ok(est.value)
    }
}

fn nf(n: usize) -> f64 {
    n as f64
}

fn single(f: Vec<Factor>, g: Vec<Region>) -> Vec<(Vec<Factor>, Vec<Region>)> {
    vec![(f, g)]
}

/// Every weighted integral, in a fixed order.
pub fn catalogue() -> Vec<WeightedIntegral> {
    use Factor::*;
    use Region::*;
    vec![
        WeightedIntegral {
            id: "sigma-rho-inner-self",
            anchor: "sigma-rho-squared/inner-self",
            terms: single(vec![SigmaPow(0), WInner(0), WInner(0)], vec![Inner(0)]),
            bubbles: 1,
            predict: |n| match n {
                6 | 7 => Prediction::sharp(4.0 - 2.0 * nf(n), 0.0),
                8 => Prediction::sharp(-12.0, 1.0),
                _ => Prediction::sharp(-nf(n) - 4.0, 0.0),
            },
        },
        WeightedIntegral {
            id: "sigma-rho-outer-self",
            anchor: "sigma-rho-squared/outer-self",
            terms: single(vec![SigmaPow(0), WOuter(0), WOuter(0)], vec![Outer(0)]),
            bubbles: 1,
            predict: |n| Prediction::sharp(-nf(n) - 4.0, 0.0),
        },
        WeightedIntegral {
            id: "sigma-rho-inner-cross",
            anchor: "sigma-rho-squared/inner-cross",
            terms: single(vec![SigmaPow(1), WInner(0), WInner(0)], vec![Inner(0)]),
            bubbles: 2,
            predict: |n| Prediction::upper(-nf(n) - 4.0, 4.0 / nf(n)),
        },
        WeightedIntegral {
            id: "sigma-rho-outer-cross",
            anchor: "sigma-rho-squared/outer-cross",
            terms: single(vec![SigmaPow(1), WOuter(0), WOuter(0)], vec![Outer(0)]),
            bubbles: 2,
            predict: |n| {
                if n <= 8 {
                    Prediction::upper(-nf(n) - 2.0, 0.0)
                } else {
                    Prediction::upper(-nf(n) - 4.0, 0.0)
                }
            },
        },
        WeightedIntegral {
            id: "v-w-inner-inner-self",
            anchor: "v-times-w/inner-inner-self",
            terms: single(vec![VInner(0), WInner(0)], vec![Inner(0)]),
            bubbles: 1,
            predict: |n| {
                if n == 6 {
                    Prediction::sharp(-8.0, 1.0)
                } else {
                    Prediction::sharp(-nf(n) - 2.0, 0.0)
                }
            },
        },
        WeightedIntegral {
            id: "v-w-outer-outer-self",
            anchor: "v-times-w/outer-outer-self",
            terms: single(vec![VOuter(0), WOuter(0)], vec![Outer(0)]),
            bubbles: 1,
            predict: |n| if n >= 7 { Prediction::sharp(-nf(n) - 2.0, 0.0) } else { None },
        },
        WeightedIntegral {
            id: "v-w-inner-inner-cross",
            anchor: "v-times-w/inner-inner-cross",
            terms: single(vec![VInner(0), WInner(1)], vec![Inner(0), Inner(1)]),
            bubbles: 2,
            predict: |n| Prediction::upper(-nf(n) - 2.0, 0.0),
        },
        WeightedIntegral {
            id: "v-w-inner-outer-cross",
            anchor: "v-times-w/inner-outer-cross",
            terms: single(vec![VInner(0), WOuter(1)], vec![Inner(0), Outer(1)]),
            bubbles: 2,
            predict: |n| {
                if n == 6 {
                    Prediction::upper(-8.0, 1.0)
                } else {
                    Prediction::upper(-nf(n) - 2.0, 0.0)
                }
            },
        },
        WeightedIntegral {
            id: "v-w-outer-inner-cross",
            anchor: "v-times-w/outer-inner-cross",
            terms: single(vec![VOuter(0), WInner(1)], vec![Outer(0), Inner(1)]),
            bubbles: 2,
            predict: |n| {
                if n == 6 {
                    Prediction::upper(-8.0, 1.0)
                } else {
                    Prediction::upper(-nf(n) - 2.0, 0.0)
                }
            },
        },
        WeightedIntegral {
            id: "v-w-outer-outer-cross",
            anchor: "v-times-w/outer-outer-cross",
            terms: single(vec![VOuter(0), WOuter(1)], vec![Outer(0), Outer(1)]),
            bubbles: 2,
            predict: |n| if n >= 7 { Prediction::upper(-nf(n) - 2.0, 0.0) } else { None },
        },
        WeightedIntegral {
            id: "bubble-pair-weight-n6",
            anchor: "bubble-pair-times-weight/three-bubbles",
            terms: (0..3).map(|j| (vec![Bubble(0), Bubble(1), WInner(j)], vec![])).collect(),
            bubbles: 3,
            predict: |n| if n == 6 { Prediction::upper(-8.0, 1.0) } else { None },
        },
        WeightedIntegral {
            id: "v-u-inner-self",
            anchor: "v-times-bubble/inner-self",
            terms: single(vec![VInner(0), Bubble(0)], vec![Inner(0)]),
            bubbles: 1,
            predict: |n| Prediction::sharp(2.0 - nf(n), 0.0),
        },
        WeightedIntegral {
            id: "v-u-outer-self",
            anchor: "v-times-bubble/outer-self",
            terms: single(vec![VOuter(0), Bubble(0)], vec![Outer(0)]),
            bubbles: 1,
            predict: |n| Prediction::sharp(-nf(n), 0.0),
        },
        WeightedIntegral {
            id: "v-u-inner-cross",
            anchor: "v-times-bubble/inner-cross",
            terms: single(vec![VInner(0), Bubble(1)], vec![Inner(0)]),
            bubbles: 2,
            predict: |n| Prediction::upper(-nf(n), 0.0),
        },
        WeightedIntegral {
            id: "v-u-outer-cross",
            anchor: "v-times-bubble/outer-cross",
            terms: single(vec![VOuter(0), Bubble(1)], vec![Outer(0)]),
            bubbles: 2,
            predict: |n| Prediction::upper(2.0 - nf(n), 0.0),
        },
    ]
}

/// Values of one integral along an `R` sweep in one geometry.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedSweep {
    pub id: &'static str,
    pub n: usize,
    pub geometry: Geometry,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub prediction: Prediction,
}

impl WeightedSweep {
    pub fn ratios(&self) -> Vec<f64> {
        self.radii
            .iter()
            .zip(&self.values)
            .map(|(r, v)| self.prediction.ratio(*r, *v))
            .collect()
    }
}

pub fn sweep(
    integral: &WeightedIntegral,
    n: usize,
    geometry: Geometry,
    radii: &[f64],
    spec: &QuadratureSpec,
) -> Result<Option<WeightedSweep>> {
    let Some(prediction) = integral.prediction(n) else {
        return Ok(None);
    };
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let fam = if integral.bubbles == 3 {
            geometry.triple(n, r)?
        } else {
            geometry.family(n, r)?
        };
        values.push(integral.evaluate(&fam, r, spec)?);
    }
    Ok(Some(WeightedSweep {
        id: integral.id,
        n,
        geometry,
        radii: radii.to_vec(),
        values,
        prediction,
    }))
}

/// Check id for a sweep of `prediction`; all-zero sweeps are empty regions.
fn check_for(prediction: &Prediction, values: &[f64]) -> &'static str {
    if !values.is_empty() && values.iter().all(|v| *v == 0.0) {
        "weighted-empty-region"
    } else {
        match (prediction.sharp, prediction.log_power != 0.0) {
            (true, false) => "weighted-sharp-slope",
            (false, false) => "weighted-upper-slope",
            (true, true) => "weighted-sharp-log-ratio",
            (false, true) => "weighted-upper-log-ratio",
        }
    }
}

/// One record per integral, dimension and geometry where a prediction exists.
pub fn run_appendix_b(ctx: &SuiteContext<'_>) -> Vec<ExperimentRecord> {
    let cfg = &ctx.config.appendix_b;
    let spec = ctx.config.quad_spec();
    let radii = cfg.radii.values();
    let mut jobs: Vec<Job<'_>> = Vec::new();
    for integral in catalogue() {
        for &n in &cfg.dims {
            let Some(prediction) = integral.prediction(n) else {
                continue;
            };
            for geometry in Geometry::ALL {
                let integral = integral.clone();
                let radii = radii.clone();
                jobs.push(Box::new(move || {
                    let t0 = std::time::Instant::now();
                    let result = sweep(&integral, n, geometry, &radii, &spec);
                    let values = result
                        .as_ref()
                        .ok()
                        .and_then(|s| s.as_ref())
                        .map(|s| s.values.clone())
                        .unwrap_or_default();
                    let check = check_for(&prediction, &values);
                    let config = describe(&[
                        ("integral", integral.id.to_string()),
                        ("R", list(&radii)),
                        ("prediction", prediction.describe()),
                    ]);
                    let mut d = ctx.draft(check, n, geometry.name(), config, "R");
                    d.anchor = integral.anchor.to_string();
                    d.predicted = prediction.exponent;
                    d.drop_first = cfg.drop_first;
                    let mut rec = ctx.measure(d, |d| {
                        let s = result?.expect("prediction exists");
                        d.x = s.radii.clone();
                        d.ratios = if check == "weighted-empty-region" {
                            s.values.clone()
                        } else {
                            s.ratios()
                        };
                        d.values = s.values;
                        Ok(())
                    });
                    rec.runtime_s = t0.elapsed().as_secs_f64();
                    rec
                }));
            }
        }
    }
    run_jobs(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bubblelab::interaction::family_report;
    use bubblelab::norms::WeightProfile;
    use bubblelab::quadrature::sphere_area;

    #[test]
    fn geometries_have_the_requested_cutoff() {
        for g in Geometry::ALL {
            for r in [10.0, 37.0] {
                let rep = family_report(&g.family(7, r).unwrap(), 1.0);
                assert!((rep.r_half_min.unwrap() / r - 1.0).abs() < 1e-12, "{g:?}");
                let rep3 = family_report(&g.triple(6, r).unwrap(), 1.0);
                assert!((rep3.r_half_min.unwrap() / r - 1.0).abs() < 1e-12, "{g:?}");
            }
        }
        let b = Geometry::TowerHigher.family(6, 10.0).unwrap();
        assert!(b.bubbles()[0].scale() > b.bubbles()[1].scale());
        let c = Geometry::ClusterLower.family(6, 10.0).unwrap();
        assert!(c.bubbles()[0].scale() < c.bubbles()[1].scale());
    }

    #[test]
    fn factors_match_weight_components() {
        let fam = Geometry::ClusterHigher.family(7, 12.0).unwrap();
        let prof = WeightProfile::with_cutoff(fam.clone(), 12.0).unwrap();
        for (i, b) in fam.bubbles().iter().enumerate() {
            let l = b.scale().ln();
            for y2 in [0.0, 4.0, 144.0, 1e4] {
                let (w1, w2) = prof.w_components(i, y2);
                let (v1, v2) = prof.v_components(i, y2);
                let f = |k: Factor| k.ln_value(7.0, 12f64.ln(), l, y2).exp();
                if y2 <= 144.0 {
                    assert!((f(Factor::WInner(i)) / w1 - 1.0).abs() < 1e-12);
                    assert!((f(Factor::VInner(i)) / v1 - 1.0).abs() < 1e-12);
                }
                if y2 >= 144.0 {
                    assert!((f(Factor::WOuter(i)) / w2 - 1.0).abs() < 1e-12);
                    assert!((f(Factor::VOuter(i)) / v2 - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_bubble_integral_matches_closed_form() {
        // V-inner times U over |y| ≤ R at n = 6 is R^{−4} |S⁵| ∫₀^R ρ⁵⟨ρ⟩^{−8} dρ.
        let cat = catalogue();
        let vu = cat.iter().find(|c| c.id == "v-u-inner-self").unwrap();
        let r = 10.0;
        for g in [Geometry::TowerHigher, Geometry::ClusterLower] {
            let fam = g.family(6, r).unwrap();
            let v = vu.evaluate(&fam, r, &QuadratureSpec::default().with_rel(1e-10)).unwrap();
            let w = r * r;
            // ∫₀^W u²(1+u)^{−4} du = W³ / (3 (1+W)³)
            let exact = r.powi(-4) * sphere_area(6) * 0.5 * w.powi(3) / (3.0 * (1.0 + w).powi(3));
            assert!((v / exact - 1.0).abs() < 1e-8, "{v} {exact}");
        }
    }

    #[test]
    fn cross_integral_is_positive_and_geometry_dependent() {
        let cat = catalogue();
        let it = cat.iter().find(|c| c.id == "v-u-outer-cross").unwrap();
        let spec = QuadratureSpec::default().with_rel(1e-7);
        let a = it.evaluate(&Geometry::ClusterHigher.family(7, 10.0).unwrap(), 10.0, &spec).unwrap();
        let b = it.evaluate(&Geometry::TowerHigher.family(7, 10.0).unwrap(), 10.0, &spec).unwrap();
        assert!(a > 0.0 && b > 0.0 && (a / b - 1.0).abs() > 1e-3);
    }
}
