//! Acceptance criteria, one line each. Thresholds are fixed here and
//! recomputed from the record fields, independently of the manifest rules.

use std::process::ExitCode;
use std::time::Instant;

use bubblelab::fit::{band_width, loglog_slope, max_step_drift};
use bubblelab_bench::appendix_a::run_appendix_a;
use bubblelab_bench::appendix_b::run_appendix_b;
use bubblelab_bench::config::{RunConfig, SuiteManifest};
use bubblelab_bench::record::ExperimentRecord;
use bubblelab_bench::suite::SuiteContext;
use bubblelab_bench::sweeps::{run_projection, run_reduction, run_sharp};

const FD_ORDER: f64 = 2.0;
const FD_ORDER_TOL: f64 = 0.2;
const GRAM_OFF_DIAGONAL: f64 = 1e-8;
const GRAM_TRANSLATION_EQUAL: f64 = 1e-6;
/// `C = 1.2 ×` the smallest `|entry|/q` of the sweep.
const GRAM_CROSS_SPREAD: f64 = 1.2;
const PAIR_DRIFT: f64 = 0.15;
const LAMBDA_BAND: f64 = 0.2;
/// `C = 1.2 ×` the value at the smallest cutoff.
const DATA_NORM_SPREAD: f64 = 1.2;
const RESIDUAL_FACTOR: f64 = 10.0;
const ORTHO_FACTOR: f64 = 1.0;
const BOUNDED_BAND: f64 = 2.0;
const MAX_GRID: (usize, usize) = (1024, 512);
const GRADIENT_SLOPE: f64 = 0.9;
const GRADIENT_SLOPE_TOL: f64 = 0.07;
const LOG_BAND: f64 = 2.0;
const SHARP_SLOPE_TOL: f64 = 0.05;
const SHARP_RADII: [f64; 4] = [20.0, 40.0, 80.0, 160.0];
const EXPONENT_TOL: f64 = 0.1;
const LOG_RATIO_TOL: f64 = 0.2;
const RANDOM_TUPLES: f64 = 1e4;
const EQUALITY_TOL: f64 = 1e-12;
const RECOVERY_TOL: f64 = 1e-6;
const STATIONARITY_TOL: f64 = 1e-8;
const EQUIVARIANCE_TOL: f64 = 1e-8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn of<'a>(records: &'a [ExperimentRecord], check: &str) -> Vec<&'a ExperimentRecord> {
    records.iter().filter(|r| r.check == check).collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn runtime(records: &[&ExperimentRecord]) -> f64 {
    records.iter().map(|r| r.runtime_s).sum()
}

fn slope(r: &ExperimentRecord) -> f64 {
    loglog_slope(&r.x, &r.values, false).map_or(f64::NAN, |f| f.slope)
}

fn dims(records: &[&ExperimentRecord]) -> Vec<usize> {
    let mut d: Vec<usize> = records.iter().map(|r| r.n).collect();
    d.sort_unstable();
    d.dedup();
    d
}

fn bubble_identities(a: &[ExperimentRecord]) -> Verdict {
    let rs = of(a, "pde-identity-order");
    let worst = rs.iter().flat_map(|r| r.ratios.iter().copied()).fold(0.0, f64::max);
    let levels = rs.iter().all(|r| r.x.len() == 3);
    let time = runtime(&rs);
    verdict(
        rs.len() >= 6 && levels && worst <= FD_ORDER_TOL && time < 60.0,
        format!("{} studies, max |order - {FD_ORDER}| = {worst:.2e}, {time:.1}s", rs.len()),
    )
}

fn kernel_gram(a: &[ExperimentRecord]) -> Verdict {
    let diag = of(a, "kernel-gram-diagonal");
    let trans = of(a, "kernel-gram-translation-equal");
    let cross = of(a, "kernel-gram-cross");
    let off = diag.iter().flat_map(|r| r.ratios.iter().copied()).fold(0.0, f64::max);
    let eq = trans.iter().flat_map(|r| r.ratios.iter().copied()).fold(0.0, f64::max);
    let spread = cross.iter().map(|r| max_of(&r.ratios) / min_of(&r.ratios)).fold(0.0, f64::max);
    let span = cross.iter().all(|r| max_of(&r.x) / min_of(&r.x) >= 8.0);
    let time = runtime(&diag) + runtime(&trans) + runtime(&cross);
    verdict(
        !diag.is_empty()
            && !cross.is_empty()
            && off <= GRAM_OFF_DIAGONAL
            && eq <= GRAM_TRANSLATION_EQUAL
            && spread <= GRAM_CROSS_SPREAD
            && span
            && time < 300.0,
        format!("off-diagonal/max gamma {off:.2e}, translation spread {eq:.2e}, cross max/min of |entry|/q {spread:.3}, {time:.1}s"),
    )
}

fn two_bubble(a: &[ExperimentRecord]) -> Verdict {
    let rs: Vec<_> = of(a, "two-bubble-power").into_iter().chain(of(a, "two-bubble-log")).collect();
    let drift = rs.iter().map(|r| max_step_drift(&r.ratios)).fold(0.0, f64::max);
    let sweep_ok = rs
        .iter()
        .filter(|r| r.geometry == "cluster")
        .all(|r| r.x == [10.0, 20.0, 40.0, 80.0]);
    let time = runtime(&rs);
    verdict(
        dims(&rs) == [6, 7] && sweep_ok && drift < PAIR_DRIFT && time < 600.0,
        format!("{} sweeps, max drift per doubling {drift:.3}, {time:.1}s", rs.len()),
    )
}

fn lambda_derivative(a: &[ExperimentRecord]) -> Verdict {
    let sign = of(a, "lambda-derivative-sign");
    let size = of(a, "lambda-derivative-ratio");
    let negative = sign.iter().all(|r| !r.values.is_empty() && r.values.iter().all(|v| *v < 0.0));
    let band = size
        .iter()
        .map(|r| {
            let mut s = r.ratios.clone();
            s.sort_by(f64::total_cmp);
            let m = if s.len() % 2 == 1 {
                s[s.len() / 2]
            } else {
                0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
            };
            s.iter().map(|v| (v / m - 1.0).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let time = runtime(&sign) + runtime(&size);
    verdict(
        !sign.is_empty() && negative && band <= LAMBDA_BAND && time < 300.0,
        format!("all values negative: {negative}, max deviation of |value|/q from its median {band:.3}, {time:.1}s"),
    )
}

fn data_norm(r: &[ExperimentRecord]) -> Verdict {
    let rs = of(r, "data-norm-bounded");
    let spread = rs.iter().map(|r| max_of(&r.values) / r.values[0]).fold(0.0, f64::max);
    let geoms = ["tower_higher", "tower_lower", "cluster_higher", "cluster_lower"];
    let covered = geoms.iter().all(|g| rs.iter().any(|r| r.geometry == *g));
    let radii = rs.iter().all(|r| r.x == [10.0, 20.0, 40.0, 80.0]);
    let time = runtime(&rs);
    verdict(
        dims(&rs) == [6, 7] && covered && radii && spread <= DATA_NORM_SPREAD && time < 600.0,
        format!("{} sweeps, max sup/sup(R=10) {spread:.3}, {time:.1}s", rs.len()),
    )
}

fn parse_grids(note: &str) -> Vec<(usize, usize)> {
    note.split_whitespace()
        .filter_map(|w| {
            let (a, b) = w.split_once('x')?;
            Some((a.parse().ok()?, b.parse().ok()?))
        })
        .collect()
}

fn reduction_solve(r: &[ExperimentRecord]) -> Verdict {
    let res = of(r, "rho0-residual");
    let orth = of(r, "rho0-orthogonality");
    let star = of(r, "rho0-star-bounded");
    let mult = of(r, "rho0-multiplier-bounded");
    let worst_res = res.iter().map(|r| max_of(&r.ratios)).fold(0.0, f64::max);
    let worst_orth = orth.iter().map(|r| max_of(&r.ratios)).fold(0.0, f64::max);
    let star_band = star.iter().map(|r| band_width(&r.ratios)).fold(0.0, f64::max);
    let mult_band = mult.iter().map(|r| band_width(&r.ratios)).fold(0.0, f64::max);
    let grids = res.iter().flat_map(|r| parse_grids(&r.note)).collect::<Vec<_>>();
    let grid_ok = !grids.is_empty() && grids.iter().all(|&(a, b)| a <= MAX_GRID.0 && b <= MAX_GRID.1);
    let per_dim = res.iter().map(|r| r.runtime_s).fold(0.0, f64::max);
    verdict(
        dims(&res) == [6, 7]
            && worst_res <= RESIDUAL_FACTOR
            && worst_orth <= ORTHO_FACTOR
            && star_band <= BOUNDED_BAND
            && mult_band <= BOUNDED_BAND
            && grid_ok
            && per_dim <= 900.0,
        format!(
            "residual/tol {worst_res:.2}, ortho/tol {worst_orth:.1e}, star band {star_band:.3}, max|c|/Q band {mult_band:.3}, grids within {}x{}: {grid_ok}, {per_dim:.1}s per dimension",
            MAX_GRID.0, MAX_GRID.1
        ),
    )
}

fn gradient_scaling(r: &[ExperimentRecord]) -> Verdict {
    let s7: Vec<_> = of(r, "rho0-gradient-slope").into_iter().filter(|r| r.n == 7).collect();
    let b6: Vec<_> = of(r, "rho0-gradient-log-band").into_iter().filter(|r| r.n == 6).collect();
    let k = s7.first().map_or(f64::NAN, |r| slope(r));
    let band = b6.first().map_or(f64::NAN, |r| band_width(&r.ratios));
    verdict(
        (k - GRADIENT_SLOPE).abs() <= GRADIENT_SLOPE_TOL && band <= LOG_BAND,
        format!("n=7 slope {k:.4}, n=6 band {band:.3}"),
    )
}

fn sharp_example(s: &[ExperimentRecord]) -> Verdict {
    let s7: Vec<_> = of(s, "sharp-slope").into_iter().filter(|r| r.n == 7).collect();
    let b6: Vec<_> = of(s, "sharp-log-band").into_iter().filter(|r| r.n == 6).collect();
    let mono = of(s, "sharp-matching-monotone");
    let k = s7.first().map_or(f64::NAN, |r| slope(r));
    let radii_ok = s7
        .first()
        .is_some_and(|r| r.config.contains(&format!("R={}", bubblelab_bench::suite::list(&SHARP_RADII))));
    let band = b6.first().map_or(f64::NAN, |r| band_width(&r.ratios));
    let decreasing = !mono.is_empty() && mono.iter().all(|r| r.values.windows(2).all(|w| w[1] < w[0]));
    verdict(
        (k - GRADIENT_SLOPE).abs() <= SHARP_SLOPE_TOL && radii_ok && band <= LOG_BAND && decreasing,
        format!("n=7 slope of delta_lb vs Gamma {k:.4}, n=6 band {band:.3}, |1 - matching ratio| decreasing: {decreasing}"),
    )
}

fn weighted_integrals(b: &[ExperimentRecord]) -> Verdict {
    let mut worst = String::new();
    let mut fails = 0;
    for r in b {
        let ok = match r.check.as_str() {
            "weighted-sharp-slope" => (slope(r) - r.predicted).abs() <= EXPONENT_TOL,
            "weighted-upper-slope" => slope(r) <= r.predicted + EXPONENT_TOL,
            "weighted-sharp-log-ratio" => {
                let mut s = r.ratios.clone();
                s.sort_by(f64::total_cmp);
                let m = if s.len() % 2 == 1 {
                    s[s.len() / 2]
                } else {
                    0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
                };
                s.iter().all(|v| (v / m - 1.0).abs() <= LOG_RATIO_TOL)
            }
            "weighted-upper-log-ratio" => r.ratios.iter().all(|v| v / r.ratios[0] - 1.0 <= LOG_RATIO_TOL),
            "weighted-empty-region" => r.values.iter().all(|v| *v == 0.0),
            _ => false,
        };
        if !ok {
            fails += 1;
            worst = format!("; first failure {} n={} {}", r.config, r.n, r.geometry);
        }
    }
    let geoms = ["tower_higher", "tower_lower", "cluster_higher", "cluster_lower"];
    let covered = geoms.iter().all(|g| b.iter().any(|r| r.geometry == *g));
    let decade = b.iter().all(|r| max_of(&r.x) / min_of(&r.x) >= 10.0);
    let time: f64 = b.iter().map(|r| r.runtime_s).sum();
    verdict(
        !b.is_empty() && fails == 0 && covered && decade && time < 1800.0,
        format!("{} sweeps, {fails} outside tolerance, {time:.1}s{worst}", b.len()),
    )
}

fn elementary_inequality(a: &[ExperimentRecord]) -> Verdict {
    let rand = of(a, "p-inequality-random");
    let eq = of(a, "p-inequality-equality");
    let violations: f64 = rand.iter().map(|r| r.ratios[0]).sum();
    let enough = rand.iter().all(|r| r.x[0] >= RANDOM_TUPLES);
    let gap = eq.iter().flat_map(|r| r.ratios.iter().copied()).fold(0.0, f64::max);
    verdict(
        !rand.is_empty() && !eq.is_empty() && violations == 0.0 && enough && gap <= EQUALITY_TOL,
        format!(
            "{violations} violations over {} runs of 1e4 tuples, equality gap {gap:.1e}",
            rand.len()
        ),
    )
}

fn projection(p: &[ExperimentRecord]) -> Verdict {
    let worst = |c: &str| of(p, c).iter().flat_map(|r| r.ratios.iter().copied()).fold(0.0, f64::max);
    let present = ["projection-recovery", "projection-stationarity", "projection-equivariance"]
        .iter()
        .all(|c| of(p, c).iter().all(|r| !r.ratios.is_empty()) && !of(p, c).is_empty());
    let (rec, st, eq) = (
        worst("projection-recovery"),
        worst("projection-stationarity"),
        worst("projection-equivariance"),
    );
    verdict(
        present && rec <= RECOVERY_TOL && st <= STATIONARITY_TOL && eq <= EQUIVARIANCE_TOL,
        format!("recovery {rec:.1e}, stationarity {st:.1e}, equivariance {eq:.1e}"),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let t0 = Instant::now();
    let cfg = RunConfig::default();
    let manifest = SuiteManifest::builtin();
    let ctx = SuiteContext::new(&cfg, &manifest);
    let a = run_appendix_a(&ctx);
    let b = run_appendix_b(&ctx);
    let r = run_reduction(&ctx);
    let s = run_sharp(&ctx);
    let p = run_projection(&ctx);
    let verdicts = [
        ("bubble identities", bubble_identities(&a)),
        ("kernel gram", kernel_gram(&a)),
        ("two-bubble integrals", two_bubble(&a)),
        ("lambda-derivative integral", lambda_derivative(&a)),
        ("weighted-norm boundedness", data_norm(&r)),
        ("reduction solve", reduction_solve(&r)),
        ("gradient scaling", gradient_scaling(&r)),
        ("sharp example", sharp_example(&s)),
        ("weighted integrals", weighted_integrals(&b)),
        ("elementary inequality", elementary_inequality(&a)),
        ("projection", projection(&p)),
    ];
    let mut failed = 0;
    for (k, (name, v)) in verdicts.iter().enumerate() {
        println!(
            "criterion {:>2} {} {name}: {}",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} of {} criteria pass in {:.1}s",
        verdicts.len() - failed,
        verdicts.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
