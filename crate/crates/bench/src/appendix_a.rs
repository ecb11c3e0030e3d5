//! Bubble-interaction checks: product integrals, the kernel Gram
//! matrix, the elementary `p`-inequality, and the finite-difference bubble
//! identities, each over a separation sweep (unit-scale pair at distance
//! `d`) and a scale sweep (concentric pair with scale ratio `λ`).

use bubblelab::bubbles::{fd_order_study, Kernel};
use bubblelab::interaction::{pairwise_bound_sides, q_pair, scalar_inequality_suite};
use bubblelab::quadrature::{inf_integral, kernel_gram, lambda_deriv_integral, pair_integral, triple_integral};
use bubblelab::{Bubble, ProblemParams, Result};

use crate::record::{fmt_num, ExperimentRecord, RecordDraft};
use crate::suite::{describe, list, run_jobs, Job, SuiteContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairSweep {
    /// Unit scales, centers `0` and `d`.
    Separation,
    /// Concentric, scales `1` and `λ`.
    Scale,
}

impl PairSweep {
    fn name(self) -> &'static str {
        match self {
            PairSweep::Separation => "cluster",
            PairSweep::Scale => "tower",
        }
    }

    fn x_name(self) -> &'static str {
        match self {
            PairSweep::Separation => "d",
            PairSweep::Scale => "lambda",
        }
    }

    /// `k` bubbles spaced along the sweep variable.
    fn bubbles(self, n: usize, x: f64, k: usize) -> Result<Vec<Bubble>> {
        (0..k)
            .map(|i| match self {
                PairSweep::Separation => Bubble::on_axis(n, i as f64 * x, 1.0),
                PairSweep::Scale => Bubble::on_axis(n, 0.0, x.powi(i as i32)),
            })
            .collect()
    }
}

fn sweep_of(ctx: &SuiteContext<'_>, s: PairSweep) -> Vec<f64> {
    match s {
        PairSweep::Separation => ctx.config.appendix_a.separations.values(),
        PairSweep::Scale => ctx.config.appendix_a.scale_ratios.values(),
    }
}

fn pair_draft(ctx: &SuiteContext<'_>, check: &str, n: usize, sw: PairSweep, extra: Vec<(&str, String)>) -> RecordDraft {
    let mut pairs = vec![(sw.x_name(), list(&sweep_of(ctx, sw)))];
    pairs.extend(extra);
    ctx.draft(check, n, sw.name(), describe(&pairs), sw.x_name())
}

/// Exponents `(α, β)` with `α > β > 1`, `α + β = 2*`.
fn inf_exponents(pp: &ProblemParams) -> (f64, f64) {
    (0.6 * pp.two_star(), 0.4 * pp.two_star())
}

pub fn run_appendix_a(ctx: &SuiteContext<'_>) -> Vec<ExperimentRecord> {
    let cfg = &ctx.config.appendix_a;
    let spec = ctx.config.quad_spec();
    let mut jobs: Vec<Job<'_>> = Vec::new();
    for &n in &cfg.dims {
        for sw in [PairSweep::Separation, PairSweep::Scale] {
            let xs2 = sweep_of(ctx, sw);
            jobs.push(Box::new(move || {
                let pp = ProblemParams::new(n).expect("validated dimension");
                let (a, b) = inf_exponents(&pp);
                let d = pair_draft(ctx, "inf-integral", n, sw, vec![("alpha", fmt_num(a)), ("beta", fmt_num(b))]);
                ctx.measure(d, |d| {
                    for &x in &xs2 {
                        let bs = sw.bubbles(n, x, 2)?;
                        let v = inf_integral(&pp, &bs[0], &bs[1], a, b, &spec)?.value;
                        let q = q_pair(&pp, &bs[0], &bs[1]);
                        d.x.push(x);
                        d.values.push(v);
                        d.ratios.push(v / (q.powf(pp.two_star() / 2.0) * (1.0 / q).ln()));
                    }
                    Ok(())
                })
            }));
            for check in ["lambda-derivative-sign", "lambda-derivative-ratio"] {
                let xs2 = sweep_of(ctx, sw);
                jobs.push(Box::new(move || {
                    let pp = ProblemParams::new(n).expect("validated dimension");
                    let d = pair_draft(ctx, check, n, sw, vec![("lambda_i", "1".into())]);
                    ctx.measure(d, |d| {
                        for &x in &xs2 {
                            let bs = sw.bubbles(n, x, 2)?;
                            let v = lambda_deriv_integral(&pp, &bs[0], &bs[1], &spec)?.value;
                            let q = q_pair(&pp, &bs[0], &bs[1]);
                            d.x.push(x);
                            d.values.push(v);
                            d.ratios.push(if check == "lambda-derivative-sign" { v / q } else { v.abs() / q });
                        }
                        Ok(())
                    })
                }));
            }
            for check in ["two-bubble-power", "two-bubble-log"] {
                let xs2 = sweep_of(ctx, sw);
                jobs.push(Box::new(move || {
                    let pp = ProblemParams::new(n).expect("validated dimension");
                    let (a, b) = if check == "two-bubble-power" {
                        (pp.p(), 1.0)
                    } else {
                        (0.5 * pp.two_star(), 0.5 * pp.two_star())
                    };
                    let d = pair_draft(ctx, check, n, sw, vec![("alpha", fmt_num(a)), ("beta", fmt_num(b))]);
                    ctx.measure(d, |d| {
                        for &x in &xs2 {
                            let bs = sw.bubbles(n, x, 2)?;
                            let v = pair_integral(&pp, &bs[0], &bs[1], a, b, &spec)?.value;
                            let q = q_pair(&pp, &bs[0], &bs[1]);
                            let scale = if a == b { q.powf(a) * (1.0 / q).ln() } else { q.powf(a.min(b)) };
                            d.x.push(x);
                            d.values.push(v);
                            d.ratios.push(v / scale);
                        }
                        Ok(())
                    })
                }));
            }
            let xs2 = sweep_of(ctx, sw);
            jobs.push(Box::new(move || {
                let pp = ProblemParams::new(n).expect("validated dimension");
                let e1 = if n == 6 { 1.0 } else { pp.p() - 1.0 };
                let d = pair_draft(ctx, "three-bubble", n, sw, vec![("exponents", format!("{} 1 1", fmt_num(e1)))]);
                ctx.measure(d, |d| {
                    for &x in &xs2 {
                        let bs = sw.bubbles(n, x, 3)?;
                        // The middle bubble carries the exponent p − 1.
                        let v = triple_integral(&pp, [&bs[1], &bs[0], &bs[2]], [e1, 1.0, 1.0], &spec)?.value;
                        let q = q_pair(&pp, &bs[0], &bs[1])
                            .max(q_pair(&pp, &bs[1], &bs[2]))
                            .max(q_pair(&pp, &bs[0], &bs[2]));
                        let nf = n as f64;
                        let bound = if n == 6 {
                            q.powf(1.5) * (1.0 / q).ln()
                        } else {
                            q.powf((nf - 1.0) / (nf - 2.0)) * (1.0 / q).ln().powf((nf - 5.0) / nf)
                        };
                        d.x.push(x);
                        d.values.push(v);
                        d.ratios.push(v / bound);
                    }
                    Ok(())
                })
            }));
            let xs2 = sweep_of(ctx, sw);
            jobs.push(Box::new(move || {
                let pp = ProblemParams::new(n).expect("validated dimension");
                let d = pair_draft(ctx, "kernel-gram-cross", n, sw, vec![]);
                ctx.measure(d, |d| {
                    for &x in &xs2 {
                        let bs = sw.bubbles(n, x, 2)?;
                        let g = kernel_gram(&pp, &bs[0], &bs[1], &spec)?;
                        let m = g.entries.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
                        d.x.push(x);
                        d.values.push(m);
                        d.ratios.push(m / q_pair(&pp, &bs[0], &bs[1]));
                    }
                    Ok(())
                })
            }));
        }
        for check in ["kernel-gram-diagonal", "kernel-gram-translation-equal"] {
            jobs.push(Box::new(move || {
                let pp = ProblemParams::new(n).expect("validated dimension");
                let d = ctx.draft(check, n, "single", describe(&[("scale", "1".into())]), "entry");
                ctx.measure(d, |d| {
                    let b = Bubble::on_axis(n, 0.0, 1.0)?;
                    let g = kernel_gram(&pp, &b, &b, &spec)?;
                    let diag: Vec<f64> = (0..=n).map(|a| g.entries[a][a]).collect();
                    let gmax = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    d.values = diag.clone();
                    d.x = (1..=n + 1).map(|a| a as f64).collect();
                    if check == "kernel-gram-diagonal" {
                        let off = (0..=n)
                            .flat_map(|a| (0..=n).filter(move |b| *b != a).map(move |b| (a, b)))
                            .map(|(a, b)| g.entries[a][b].abs() / gmax)
                            .fold(0.0, f64::max);
                        d.ratios = vec![off];
                    } else {
                        d.ratios = diag[..n].iter().map(|v| (v / diag[0] - 1.0).abs()).collect();
                    }
                    Ok(())
                })
            }));
        }
        let tuples = cfg.random_tuples;
        jobs.push(Box::new(move || {
            let pp = ProblemParams::new(n).expect("validated dimension");
            let d = ctx.draft(
                "p-inequality-random",
                n,
                "scalar",
                describe(&[("p", fmt_num(pp.p())), ("tuples", tuples.to_string())]),
                "tuples",
            );
            ctx.measure(d, |d| {
                let rep = scalar_inequality_suite(pp.p(), tuples, ctx.config.seed)?;
                d.x = vec![tuples as f64];
                d.values = vec![rep.max_violation];
                d.ratios = vec![rep.violations as f64];
                Ok(())
            })
        }));
        jobs.push(Box::new(move || {
            let pp = ProblemParams::new(n).expect("validated dimension");
            let d = ctx.draft("p-inequality-equality", n, "scalar", describe(&[("p", fmt_num(pp.p()))]), "case");
            ctx.measure(d, |d| {
                // Single-support tuples at this p, and the pair case at p = 2.
                let cases: [(f64, Vec<f64>); 4] = [
                    (pp.p(), vec![3.7]),
                    (pp.p(), vec![0.0, 2.5, 0.0]),
                    (pp.p(), vec![0.0, 0.0, 0.0, 11.0]),
                    (2.0, vec![1.3, 0.4]),
                ];
                for (k, (p, a)) in cases.iter().enumerate() {
                    let (lhs, rhs) = pairwise_bound_sides(*p, a);
                    let scale = a.iter().sum::<f64>().powf(*p);
                    d.x.push(k as f64);
                    d.values.push(lhs - rhs);
                    d.ratios.push((lhs - rhs).abs() / scale);
                }
                Ok(())
            })
        }));
        for kernel in [None, Some(Kernel::Dilation), Some(Kernel::Translation(0))] {
            jobs.push(Box::new(move || {
                let pp = ProblemParams::new(n).expect("validated dimension");
                let label = match kernel {
                    None => "bubble".to_string(),
                    Some(Kernel::Dilation) => "dilation_kernel".to_string(),
                    Some(Kernel::Translation(a)) => format!("translation_kernel_{}", a + 1),
                };
                let steps = [0.04, 0.02, 0.01];
                let d = ctx.draft(
                    "pde-identity-order",
                    n,
                    &label,
                    describe(&[
                        ("steps", list(&steps)),
                        ("samples", "200".into()),
                        ("center", "0.1k".into()),
                        ("scale", "1.7".into()),
                    ]),
                    "h",
                );
                ctx.measure(d, |d| {
                    let b = Bubble::new((0..n).map(|k| 0.1 * k as f64).collect(), 1.7)?;
                    let st = fd_order_study(&pp, &b, kernel, &steps, 200, ctx.config.seed)?;
                    d.x = st.steps.clone();
                    d.values = st.residuals.clone();
                    d.ratios = st.orders.iter().map(|o| (o - 2.0).abs()).collect();
                    Ok(())
                })
            }));
        }
    }
    run_jobs(jobs)
}
