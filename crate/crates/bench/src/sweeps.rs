//! Suites driven by the solvers: the first-order correction `ρ₀` of a
//! symmetric pair, the sharp example, and planted-parameter projections.

use bubblelab::bubbles::interaction_error_eval;
use bubblelab::norms::{starstar_norm, SamplePlan, WeightProfile};
use bubblelab::projection::{project, stationarity, ProjectionOptions, ProjectionResult, ProjectionTarget};
use bubblelab::quadrature::sphere_area;
use bubblelab::reduction::{rho0_gradient_scaling, FixedPointOptions, GradientScaling, GridPolicy};
use bubblelab::sharp_example::{exponent_fit, shell_moment, ExponentFit, SharpExampleConfig};
use bubblelab::{BubbleFamily, ProblemParams, Result};

use crate::appendix_b::Geometry;
use crate::record::{fmt_num, ExperimentRecord};
use crate::suite::{describe, list, run_batches, run_jobs, Batch, Job, SuiteContext};

/// The symmetric unit-scale pair with centers `±R`.
pub fn symmetric_pair(n: usize, r: f64) -> Result<BubbleFamily> {
    BubbleFamily::on_axis(ProblemParams::new(n)?, &[(-r, 1.0), (r, 1.0)])
}

fn shared<T>(r: &Result<T>) -> std::result::Result<&T, String> {
    r.as_ref().map_err(|e| e.to_string())
}

pub fn run_reduction(ctx: &SuiteContext<'_>) -> Vec<ExperimentRecord> {
    let cfg = &ctx.config.reduction;
    let radii = cfg.radii.values();
    let policy = GridPolicy {
        nodes_per_efold: cfg.nodes_per_efold,
        outer_factor: cfg.outer_factor,
        ..GridPolicy::default()
    };
    let opts = FixedPointOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    let mut batches: Vec<Batch<'_>> = Vec::new();
    for &n in &cfg.dims {
        let radii = radii.clone();
        batches.push(Box::new(move || {
            let t0 = std::time::Instant::now();
            let scaling: Result<GradientScaling> = radii
                .iter()
                .map(|&r| symmetric_pair(n, r))
                .collect::<Result<Vec<_>>>()
                .and_then(|fams| rho0_gradient_scaling(&fams, &policy, &opts));
            let runtime = t0.elapsed().as_secs_f64();
            let config = describe(&[
                ("R", list(&radii)),
                ("centers", "-R R".into()),
                ("scales", "1 1".into()),
                ("nodes_per_efold", fmt_num(policy.nodes_per_efold)),
                ("core", fmt_num(policy.core)),
                ("outer_factor", fmt_num(policy.outer_factor)),
                ("max_grid", format!("{}x{}", policy.max_nt, policy.max_nr)),
                ("tol", fmt_num(opts.tol)),
                ("max_iter", opts.max_iter.to_string()),
            ]);
            let p = ProblemParams::new(n).map(|pp| pp.p()).unwrap_or(f64::NAN);
            let mut checks: Vec<&str> = vec![
                "rho0-residual",
                "rho0-orthogonality",
                "rho0-star-bounded",
                "rho0-multiplier-bounded",
            ];
            checks.push(if n == 6 { "rho0-gradient-log-band" } else { "rho0-gradient-slope" });
            let mut out = Vec::new();
            for check in checks {
                let d = ctx.draft(check, n, "symmetric_pair", config.clone(), "R");
                let mut rec = ctx.measure_with(d, |d| {
                    let s = shared(&scaling)?;
                    let pts = &s.points;
                    d.x = radii.clone();
                    match check {
                        "rho0-residual" => {
                            d.values = pts.iter().map(|q| q.residual_norm).collect();
                            d.ratios = d.values.iter().map(|v| v / opts.tol).collect();
                        }
                        "rho0-orthogonality" => {
                            d.values = pts.iter().map(|q| q.ortho_defect).collect();
                            d.ratios = d.values.iter().map(|v| v / opts.tol).collect();
                        }
                        "rho0-star-bounded" => {
                            d.values = pts.iter().map(|q| q.star_norm).collect();
                            d.ratios = d.values.clone();
                        }
                        "rho0-multiplier-bounded" => {
                            d.values = pts.iter().map(|q| q.max_multiplier).collect();
                            d.ratios = pts.iter().map(|q| q.max_multiplier / q.q).collect();
                        }
                        "rho0-gradient-log-band" => {
                            d.values = pts.iter().map(|q| q.grad_norm).collect();
                            d.ratios = s.log_ratios.clone();
                        }
                        _ => {
                            d.x_name = "Q".into();
                            d.x = pts.iter().map(|q| q.q).collect();
                            d.values = pts.iter().map(|q| q.grad_norm).collect();
                            d.predicted = p / 2.0;
                        }
                    }
                    d.note = format!(
                        "grids {}",
                        pts.iter().map(|q| format!("{}x{}", q.nt, q.nr)).collect::<Vec<_>>().join(" ")
                    );
                    Ok::<(), String>(())
                });
                rec.runtime_s = runtime;
                out.push(rec);
            }
            out
        }));
        for geometry in Geometry::ALL {
            let norm_radii = cfg.norm_radii.values();
            batches.push(Box::new(move || {
                let config = describe(&[
                    ("R", list(&norm_radii)),
                    ("integrand", "sigma^p - sum U_i^p".into()),
                    ("weight", "V".into()),
                    ("sample_plan", SamplePlan::default().describe()),
                ]);
                let d = ctx.draft("data-norm-bounded", n, geometry.name(), config, "R");
                vec![ctx.measure(d, |d| {
                    for &r in &norm_radii {
                        let fam = geometry.family(n, r)?;
                        let prof = WeightProfile::with_cutoff(fam.clone(), r)?;
                        let h = |x: &[f64]| interaction_error_eval(&fam, x).unwrap_or(f64::NAN);
                        let s = starstar_norm(h, &prof, &SamplePlan::default())?;
                        d.x.push(r);
                        d.values.push(s.value);
                    }
                    d.ratios = d.values.clone();
                    Ok(())
                })]
            }));
        }
    }
    run_batches(batches)
}

/// Leading-order shell moment `|S^{n−1}| ∫_a^R r^{n−7} dr`.
fn shell_moment_leading(n: usize, a: f64, r: f64) -> f64 {
    let k = n as f64 - 6.0;
    sphere_area(n) * (r.powf(k) - a.powf(k)) / k
}

pub fn run_sharp(ctx: &SuiteContext<'_>) -> Vec<ExperimentRecord> {
    let cfg = &ctx.config.sharp;
    let spec = ctx.config.quad_spec();
    let radii = cfg.radii.values();
    let policy = GridPolicy::default().with_density(cfg.nodes_per_efold);
    let mut batches: Vec<Batch<'_>> = Vec::new();
    for &n in &cfg.dims {
        let radii = radii.clone();
        batches.push(Box::new(move || {
            let t0 = std::time::Instant::now();
            let configs: Result<Vec<SharpExampleConfig>> = radii.iter().map(|&r| SharpExampleConfig::with_s(n, r, cfg.s)).collect();
            let fit: Result<ExponentFit> = configs
                .as_ref()
                .map_err(|e| bubblelab::Error::InvalidInput(e.to_string()))
                .and_then(|c| exponent_fit(c, cfg.use_reduction, &policy, &spec));
            let runtime = t0.elapsed().as_secs_f64();
            let config = describe(&[
                ("R", list(&radii)),
                ("centers", "-R R".into()),
                ("s", fmt_num(cfg.s)),
                ("use_reduction", cfg.use_reduction.to_string()),
                ("nodes_per_efold", fmt_num(policy.nodes_per_efold)),
                ("outer_factor", fmt_num(policy.outer_factor)),
            ]);
            let p = ProblemParams::new(n).map(|pp| pp.p()).unwrap_or(f64::NAN);
            let nf = n as f64;
            let mut checks = vec![
                if n == 6 { "sharp-log-band" } else { "sharp-slope" },
                "sharp-matching-monotone",
                "sharp-lower-bound-band",
            ];
            if n >= 7 {
                checks.push("sharp-shell-moment");
            }
            if cfg.use_reduction {
                checks.push("sharp-ordering");
                if n >= 7 {
                    checks.push("sharp-rho0-slope");
                }
            }
            let mut out = Vec::new();
            for check in checks {
                let d = ctx.draft(check, n, "symmetric_pair", config.clone(), "R");
                let mut rec = ctx.measure_with(d, |d| {
                    let f = shared(&fit)?;
                    let pts = &f.points;
                    d.x = radii.clone();
                    let gamma_source = pts.first().map_or("", |q| match q.gamma_source {
                        bubblelab::sharp_example::GammaSource::Solved => "solved",
                        bubblelab::sharp_example::GammaSource::Calibrated => "calibrated",
                        bubblelab::sharp_example::GammaSource::Trivial => "trivial",
                    });
                    d.note = format!("gamma {gamma_source}");
                    match check {
                        "sharp-slope" | "sharp-rho0-slope" => {
                            d.x_name = "gamma".into();
                            d.x = pts.iter().map(|q| q.gamma).collect();
                            d.values = if check == "sharp-slope" {
                                pts.iter().map(|q| q.delta_lower).collect()
                            } else {
                                pts.iter().map(|q| q.rho0_grad.unwrap_or(f64::NAN)).collect()
                            };
                            d.predicted = p / 2.0;
                        }
                        "sharp-log-band" => {
                            d.values = pts.iter().map(|q| q.delta_lower).collect();
                            d.ratios = pts.iter().map(|q| q.delta_lower / (q.gamma * q.gamma.ln().abs().sqrt())).collect();
                        }
                        "sharp-matching-monotone" => {
                            d.values = pts.iter().map(|q| (1.0 - q.matching_ratio).abs()).collect();
                            d.ratios = d.values.windows(2).map(|w| w[1] - w[0]).collect();
                        }
                        "sharp-lower-bound-band" => {
                            d.values = pts.iter().map(|q| q.lower_bound).collect();
                            d.ratios = pts
                                .iter()
                                .map(|q| {
                                    if n == 6 {
                                        q.lower_bound * q.r.powi(8) / q.r.ln()
                                    } else {
                                        q.lower_bound * q.r.powf(nf + 2.0)
                                    }
                                })
                                .collect();
                        }
                        "sharp-shell-moment" => {
                            let cs = shared(&configs)?;
                            for c in cs {
                                let v = shell_moment(c, &spec).map_err(|e| e.to_string())?;
                                let lead = shell_moment_leading(n, c.matching_radius(), c.r());
                                d.values.push(v);
                                d.ratios.push((v / lead - 1.0).abs());
                            }
                        }
                        _ => {
                            d.values = pts.iter().map(|q| q.delta_lower).collect();
                            d.ratios = pts.iter().map(|q| q.delta_lower / q.rho0_grad.unwrap_or(f64::NAN)).collect();
                        }
                    }
                    Ok::<(), String>(())
                });
                rec.runtime_s = runtime;
                out.push(rec);
            }
            out
        }));
    }
    run_batches(batches)
}

/// Two bubbles on the axis with a perturbation by a third, off-grid term.
fn perturbed_target(n: usize) -> Result<(ProjectionTarget, BubbleFamily)> {
    let pp = ProblemParams::new(n)?;
    let fam = BubbleFamily::on_axis(pp, &[(-8.0, 1.0), (8.0, 1.5)])?;
    let u = ProjectionTarget::from_family(&fam)?.with_term(0.05, bubblelab::Bubble::on_axis(n, 1.0, 0.3)?)?;
    Ok((u, fam))
}

/// Largest axial and log-scale differences, and the relative gap in `δ`.
fn param_gap(a: &ProjectionResult, b: &BubbleFamily, delta_b: f64) -> Vec<f64> {
    let mut out: Vec<f64> = a
        .params
        .bubbles()
        .iter()
        .zip(b.bubbles())
        .flat_map(|(x, y)| [(x.axial() - y.axial()).abs(), (x.scale() / y.scale()).ln().abs()])
        .collect();
    out.push((a.delta_u - delta_b).abs() / delta_b.max(f64::MIN_POSITIVE));
    out
}

pub fn run_projection(ctx: &SuiteContext<'_>) -> Vec<ExperimentRecord> {
    let cfg = &ctx.config.projection;
    let opts = ProjectionOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        quad_rel: ctx.config.quadrature.rel_tol,
    };
    let mut jobs: Vec<Job<'_>> = Vec::new();
    for &n in &cfg.dims {
        jobs.push(Box::new(move || {
            let config = describe(&[
                ("truth", "(-8,1) (8,1.5)".into()),
                ("initial", "(-7.7,1.1) (8.2,1.4)".into()),
                ("tol", fmt_num(opts.tol)),
            ]);
            let d = ctx.draft("projection-recovery", n, "planted_pair", config, "coordinate");
            ctx.measure(d, |d| {
                let pp = ProblemParams::new(n)?;
                let truth = BubbleFamily::on_axis(pp, &[(-8.0, 1.0), (8.0, 1.5)])?;
                let start = BubbleFamily::on_axis(pp, &[(-7.7, 1.1), (8.2, 1.4)])?;
                let res = project(&ProjectionTarget::from_family(&truth)?, &start, &opts)?;
                d.values = res.params.bubbles().iter().flat_map(|b| [b.axial(), b.scale()]).collect();
                d.ratios = param_gap(&res, &truth, 0.0)[..4].to_vec();
                d.x = (1..=d.ratios.len()).map(|k| k as f64).collect();
                d.note = format!("iterations {}; converged {}", res.iterations, res.converged);
                Ok(())
            })
        }));
        jobs.push(Box::new(move || {
            let config = describe(&[
                ("target", "(-8,1) (8,1.5) + 0.05 U[(1,0.3)]".into()),
                ("initial", "(-8,1) (8,1.5)".into()),
                ("tol", fmt_num(opts.tol)),
            ]);
            let d = ctx.draft("projection-stationarity", n, "perturbed_pair", config, "component");
            ctx.measure(d, |d| {
                let (u, start) = perturbed_target(n)?;
                let res = project(&u, &start, &opts)?;
                let g = stationarity(&u, &res.params, &opts)?;
                d.values = g.clone();
                d.ratios = g.iter().map(|v| v.abs()).collect();
                d.x = (1..=g.len()).map(|k| k as f64).collect();
                d.note = format!(
                    "iterations {}; converged {}; delta {}",
                    res.iterations,
                    res.converged,
                    fmt_num(res.delta_u)
                );
                Ok(())
            })
        }));
        for transform in ["translation", "dilation"] {
            jobs.push(Box::new(move || {
                let amount = if transform == "translation" { cfg.shift } else { cfg.dilation };
                let config = describe(&[
                    ("target", "(-8,1) (8,1.5) + 0.05 U[(1,0.3)]".into()),
                    ("transform", transform.into()),
                    ("amount", fmt_num(amount)),
                    ("tol", fmt_num(opts.tol)),
                ]);
                let d = ctx.draft("projection-equivariance", n, transform, config, "component");
                ctx.measure(d, |d| {
                    let (u, start) = perturbed_target(n)?;
                    let base = project(&u, &start, &opts)?;
                    let (moved_u, moved_start, expected) = if transform == "translation" {
                        let mut v = vec![0.0; n];
                        v[0] = amount;
                        (u.translated(amount), start.translated(&v), base.params.translated(&v))
                    } else {
                        (u.dilated(amount), start.dilated(amount), base.params.dilated(amount))
                    };
                    let moved = project(&moved_u, &moved_start, &opts)?;
                    d.ratios = param_gap(&moved, &expected, base.delta_u);
                    d.values = moved.params.bubbles().iter().flat_map(|b| [b.axial(), b.scale()]).collect();
                    d.values.push(moved.delta_u);
                    d.x = (1..=d.ratios.len()).map(|k| k as f64).collect();
                    Ok(())
                })
            }));
        }
    }
    run_jobs(jobs)
}
