//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs with `harness = false` so every criterion is evaluated even when an
//! earlier one fails; the process exits non-zero if any criterion fails.
//! Reference-value checks use |empirical − reference| ≤ max(0.01, 4·SE).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::json;

use shrinkmean::estimators::{oracle_coefficients, proposed};
use shrinkmean::io::{read_matrix_csv, ReadOptions};
use shrinkmean::model::{generate_sample, stream_rng, Covariance};
use shrinkmean::risk::{rho_sweep, run_epr, run_monte_carlo, Design, EstimatorQ, LossQ, McOptions, RiskReport, SweepFamily};
use shrinkmean::ustats::{compute_y, shrinkage_coefficients};
use shrinkmean::{CoefficientPolicy, CovarianceSpec, DataMatrix, ErrorDist, MeanSpec, ProblemInstance, QuadraticForm, Registry};

const SEED: u64 = 42;
const TABLE_REPS: usize = 10_000;

struct Check {
    label: String,
    pass: bool,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn check(&mut self, pass: bool, label: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            pass,
        });
    }

    /// |got − reference| ≤ max(0.01, 4·se).
    fn reference(&mut self, what: &str, got: f64, se: f64, expected: f64) {
        let tol = (4.0 * se).max(0.01);
        self.check(
            (got - expected).abs() <= tol,
            format!("{what}: {got:.4} (se {se:.4}) vs reference {expected:.4}, tol {tol:.4}"),
        );
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn risk_se(r: &RiskReport, name: &str) -> (f64, f64) {
    let row = r.get(name).expect("estimator simulated");
    (row.risk, row.se)
}

fn joint_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

fn table1_design(n: usize, errors: ErrorDist) -> Design {
    Design {
        p: 100,
        n,
        sigma: CovarianceSpec::Identity,
        mean: MeanSpec::Mu1 { tau: 1.0 },
        errors,
        loss_q: LossQ::Identity,
        estimator_q: EstimatorQ::True,
        redraw_mean: true,
        shuffle_sigma: None,
    }
}

fn table2_design(n: usize, mean: MeanSpec) -> Design {
    Design {
        p: 100,
        n,
        sigma: CovarianceSpec::Sigma1,
        mean,
        errors: ErrorDist::Normal,
        loss_q: LossQ::InverseDiagSigma,
        estimator_q: EstimatorQ::EstimatedDiag,
        redraw_mean: true,
        shuffle_sigma: None,
    }
}

fn identity_grid() -> Criterion {
    let mut c = Criterion::default();
    let reg = Registry::standard();
    let est = names(&["mean", "js", "bb", "tong", "proposed"]);
    let opts = McOptions::new(TABLE_REPS, SEED);

    let r = run_monte_carlo(&table1_design(10, ErrorDist::Normal), &est, &reg, &opts).unwrap();
    for (name, expected) in [("mean", 1.0012), ("js", 0.9088), ("tong", 0.9094), ("proposed", 0.9090)] {
        let (risk, se) = risk_se(&r, name);
        c.reference(&format!("normal n=10 {name}"), risk, se, expected);
    }
    let (bb, _) = risk_se(&r, "bb");
    let (js, _) = risk_se(&r, "js");
    let (mean, _) = risk_se(&r, "mean");
    c.check(
        js <= bb && bb <= mean,
        format!("normal n=10 bb {bb:.4} lies between js {js:.4} and mean {mean:.4} (qualitative)"),
    );

    let r = run_monte_carlo(&table1_design(50, ErrorDist::Normal), &est, &reg, &opts).unwrap();
    let (risk, se) = risk_se(&r, "proposed");
    c.reference("normal n=50 proposed", risk, se, 0.9790);

    let r = run_monte_carlo(&table1_design(10, ErrorDist::ScaledT { v: 5.0 }), &est, &reg, &opts).unwrap();
    let (risk, se) = risk_se(&r, "proposed");
    c.reference("t(5) n=10 proposed", risk, se, 0.9080);
    c
}

fn sigma1_grid() -> Criterion {
    let mut c = Criterion::default();
    let reg = Registry::standard();
    let est = names(&["mean", "tong", "proposed"]);
    let opts = McOptions::new(TABLE_REPS, SEED);
    let mean_near_one = |c: &mut Criterion, cell: &str, r: &RiskReport| {
        let (m, se) = risk_se(r, "mean");
        c.check((m - 1.0).abs() <= 4.0 * se, format!("{cell} mean {m:.4} within 4 se ({se:.4}) of 1"));
    };

    let cell = "mu1(0.5) n=10";
    let r = run_monte_carlo(&table2_design(10, MeanSpec::Mu1 { tau: 0.5 }), &est, &reg, &opts).unwrap();
    let (p, p_se) = risk_se(&r, "proposed");
    let (t, t_se) = risk_se(&r, "tong");
    c.reference(&format!("{cell} proposed"), p, p_se, 0.4867);
    c.reference(&format!("{cell} tong"), t, t_se, 0.4763);
    mean_near_one(&mut c, cell, &r);

    let cell = "mu2(0.5) n=10";
    let r = run_monte_carlo(&table2_design(10, MeanSpec::Mu2 { tau: 0.5 }), &est, &reg, &opts).unwrap();
    let (p, p_se) = risk_se(&r, "proposed");
    let (t, t_se) = risk_se(&r, "tong");
    c.reference(&format!("{cell} proposed"), p, p_se, 0.4229);
    c.reference(&format!("{cell} tong"), t, t_se, 0.5083);
    c.check(t - p > 0.05, format!("{cell} proposed beats tong by {:.4} > 0.05", t - p));
    mean_near_one(&mut c, cell, &r);

    let cell = "mu1(1) n=100";
    let r = run_monte_carlo(&table2_design(100, MeanSpec::Mu1 { tau: 1.0 }), &est, &reg, &opts).unwrap();
    let (p, p_se) = risk_se(&r, "proposed");
    c.reference(&format!("{cell} proposed"), p, p_se, 0.9793);
    mean_near_one(&mut c, cell, &r);
    c
}

fn correlation_sweep() -> Criterion {
    let mut c = Criterion::default();
    let reg = Registry::standard();
    let competitors = ["mean", "js", "bb", "tong"];
    let mut est = names(&competitors);
    est.push("proposed".into());
    let opts = McOptions::new(2000, SEED);
    let base = table2_design(20, MeanSpec::Mu1 { tau: 0.5 });

    for (family, grid) in [
        (SweepFamily::Sigma2, vec![0.1, 0.3, 0.5, 0.7, 0.9]),
        (SweepFamily::Sigma3, vec![0.1, 0.2, 0.3, 0.35, 0.4, 0.5]),
    ] {
        let sweep = rho_sweep(&base, family, &grid, &est, &reg, &opts).unwrap();
        for (rho, r) in &sweep.points {
            let (p, p_se) = risk_se(r, "proposed");
            let losers: Vec<String> = competitors
                .iter()
                .filter_map(|name| {
                    let (v, se) = risk_se(r, name);
                    (p > v + 2.0 * joint_se(p_se, se)).then(|| format!("{name} {v:.4}"))
                })
                .collect();
            c.check(
                losers.is_empty(),
                if losers.is_empty() {
                    format!("{} rho={rho}: proposed {p:.4} within 2 joint se of the best", family.label())
                } else {
                    format!("{} rho={rho}: proposed {p:.4} worse than {}", family.label(), losers.join(", "))
                },
            );
        }
        if family == SweepFamily::Sigma3 {
            let above: Vec<(f64, f64)> = sweep
                .points
                .iter()
                .filter(|(rho, _)| *rho >= 0.35)
                .map(|(rho, r)| (*rho, risk_se(r, "tong").0))
                .collect();
            let max = above.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            c.check(
                above.iter().any(|(_, t)| *t > 1.0),
                format!("sigma3 tong risk exceeds 1 at some rho >= 0.35 (max {max:.4})"),
            );
        }
    }
    c
}

fn random_spd(rng: &mut impl Rng, p: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(p, p) * 0.2
}

fn random_q(rng: &mut impl Rng, p: usize, kind: usize) -> QuadraticForm {
    match kind {
        0 => QuadraticForm::identity(p).unwrap(),
        1 => QuadraticForm::diagonal((0..p).map(|_| rng.random_range(0.2..3.0)).collect()).unwrap(),
        _ => QuadraticForm::dense(random_spd(rng, p)).unwrap(),
    }
}

/// Exact expected weighted error of `αX̄ + βe`, written out entrywise:
/// E[(δ−μ)'Q(δ−μ)] = α²·Σᵢⱼ Qᵢⱼ Σⱼᵢ / n + b'Qb with b = (α−1)μ + βe.
fn expected_error(q: &DMatrix<f64>, sigma: &DMatrix<f64>, mu: &[f64], n: usize, alpha: f64, beta: f64) -> f64 {
    let p = mu.len();
    let mut trace = 0.0;
    let mut bias = 0.0;
    for i in 0..p {
        for j in 0..p {
            trace += q[(i, j)] * sigma[(j, i)];
            let bi = (alpha - 1.0) * mu[i] + beta;
            let bj = (alpha - 1.0) * mu[j] + beta;
            bias += bi * q[(i, j)] * bj;
        }
    }
    alpha * alpha * trace / n as f64 + bias
}

/// Newton's method on finite-difference derivatives.
fn minimize(f: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let (mut a, mut b) = (0.5, 0.0);
    for _ in 0..50 {
        let h = 1e-3;
        let ga = (f(a + h, b) - f(a - h, b)) / (2.0 * h);
        let gb = (f(a, b + h) - f(a, b - h)) / (2.0 * h);
        let haa = (f(a + h, b) - 2.0 * f(a, b) + f(a - h, b)) / (h * h);
        let hbb = (f(a, b + h) - 2.0 * f(a, b) + f(a, b - h)) / (h * h);
        let hab = (f(a + h, b + h) - f(a + h, b - h) - f(a - h, b + h) + f(a - h, b - h)) / (4.0 * h * h);
        let det = haa * hbb - hab * hab;
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        a -= da;
        b -= db;
        if da.abs().max(db.abs()) < 1e-13 {
            break;
        }
    }
    (a, b)
}

fn optimal_coefficients() -> Criterion {
    let mut c = Criterion::default();
    let mut rng = stream_rng(SEED, 4);
    let (mut worst_coef, mut worst_risk) = (0.0f64, 0.0f64);
    for case in 0..20 {
        let p = rng.random_range(2..=6);
        let n = rng.random_range(2..=30);
        let sigma = random_spd(&mut rng, p);
        let q = random_q(&mut rng, p, case % 3);
        let offset = rng.random_range(-2.0..2.0);
        let mu: Vec<f64> = (0..p).map(|_| offset + rng.random_range(-1.5..1.5)).collect();
        let inst = ProblemInstance::new(
            DVector::from_vec(mu.clone()),
            Arc::new(Covariance::new(sigma.clone()).unwrap()),
            n,
            ErrorDist::Normal,
        )
        .unwrap();
        let closed = oracle_coefficients(&inst, &q).unwrap();
        let qd = q.to_dense();
        let f = |a: f64, b: f64| expected_error(&qd, &sigma, &mu, n, a, b);
        let (a, b) = minimize(f);
        worst_coef = worst_coef.max((a - closed.alpha_star).abs()).max((b - closed.beta_star).abs());
        let trace: f64 = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| qd[(i, j)] * sigma[(j, i)]).sum();
        let normalized = n as f64 * f(a, b) / trace;
        worst_risk = worst_risk.max((normalized - closed.risk_star).abs());
    }
    c.check(worst_coef <= 1e-6, format!("20 instances: max |numeric − closed-form| coefficient gap {worst_coef:.2e}"));
    c.check(worst_risk <= 1e-6, format!("20 instances: max normalized risk gap {worst_risk:.2e}"));
    c
}

/// The §3 definitions summed pair by pair.
fn y_double_loop(x: &DMatrix<f64>, q: &DMatrix<f64>) -> [f64; 4] {
    let (n, p) = (x.nrows(), x.ncols());
    let row = |k: usize| x.row(k).transpose();
    let e = DVector::from_element(p, 1.0);
    let eqe = e.dot(&(q * &e));
    let (mut cross, mut own, mut cross_e, mut sum_e) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        own += row(i).dot(&(q * row(i)));
        sum_e += e.dot(&(q * row(i)));
        for j in 0..n {
            if i != j {
                cross += row(i).dot(&(q * row(j)));
                cross_e += e.dot(&(q * row(i))) * row(j).dot(&(q * &e));
            }
        }
    }
    let (nf, pf) = (n as f64, p as f64);
    [
        cross / (pf * (nf - 1.0)),
        (own - cross / (nf - 1.0)) / (nf * pf),
        cross_e / (pf * (nf - 1.0) * eqe),
        sum_e / (nf * eqe),
    ]
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var)
}

fn ustat_oracles() -> Criterion {
    let mut c = Criterion::default();
    let mut rng = stream_rng(SEED, 5);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(2..=8);
        let p = rng.random_range(1..=6);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-3.0..3.0));
        let q = random_q(&mut rng, p, case % 3);
        let y = compute_y(&DataMatrix::new(x.clone()).unwrap(), &q).unwrap();
        let lit = y_double_loop(&x, &q.to_dense());
        for (got, want) in [y.y1, y.y2, y.y3, y.y4].iter().zip(lit) {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    c.check(worst <= 1e-10, format!("200 instances: max relative gap to double loop {worst:.2e}"));

    // Unbiasedness on a fixed mean.
    let (p, n) = (50, 10);
    let cov = Arc::new(Covariance::from_spec(&CovarianceSpec::Sigma1, p, None).unwrap());
    let q = QuadraticForm::diagonal(cov.diagonal().iter().map(|v| 1.0 / v).collect()).unwrap();
    let mu: Vec<f64> = (0..p).map(|k| 0.3 + 0.5 * ((k * 7) % 5) as f64 / 4.0).collect();
    let inst = ProblemInstance::new(DVector::from_vec(mu.clone()), cov.clone(), n, ErrorDist::Normal).unwrap();
    let (nf, pf) = (n as f64, p as f64);
    let eqe = q.e_q_e();
    let mqe = q.e_q(&mu).unwrap();
    let expected = [
        nf / pf * q.quad_form(&mu, &mu).unwrap(),
        q.trace_product(inst.sigma()).unwrap() / pf,
        nf * mqe * mqe / (pf * eqe),
        mqe / eqe,
    ];
    let draws: Vec<[f64; 4]> = (0..2000u64)
        .map(|r| {
            let y = compute_y(&generate_sample(&inst, &mut stream_rng(SEED, 10_000 + r)), &q).unwrap();
            [y.y1, y.y2, y.y3, y.y4]
        })
        .collect();
    for (k, want) in expected.iter().enumerate() {
        let col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let (m, var) = mean_var(&col);
        let se = (var / col.len() as f64).sqrt();
        c.check(
            (m - want).abs() <= 4.0 * se,
            format!("E(Y{}) = {m:.5} vs {want:.5} (se {se:.5}), R=2000", k + 1),
        );
    }

    // Variance formulas at R = 5000.
    let sq = inst.sigma() * q.to_dense();
    let tr_sqsq = (&sq * &sq).trace();
    let qe = q.apply(&vec![1.0; p]).unwrap();
    let eqsqe = qe.dot(&(inst.sigma() * &qe));
    let zero = inst.with_mean(DVector::zeros(p)).unwrap();
    let (mut y1, mut y4) = (Vec::new(), Vec::new());
    for r in 0..5000u64 {
        let y = compute_y(&generate_sample(&zero, &mut stream_rng(SEED, 20_000 + r)), &q).unwrap();
        y1.push(y.y1);
        let y = compute_y(&generate_sample(&inst, &mut stream_rng(SEED, 30_000 + r)), &q).unwrap();
        y4.push(y.y4);
    }
    let var_y1 = 2.0 * nf * tr_sqsq / (pf * pf * (nf - 1.0));
    let var_y4 = eqsqe / (nf * eqe * eqe);
    for (label, got, want) in [("Var(Y1) at mu=0", mean_var(&y1).1, var_y1), ("Var(Y4)", mean_var(&y4).1, var_y4)] {
        let rel = (got - want).abs() / want;
        c.check(rel <= 0.15, format!("{label}: {got:.5} vs formula {want:.5} ({:.1}% off)", 100.0 * rel));
    }
    c
}

fn equivariance() -> Criterion {
    let mut c = Criterion::default();
    let mut rng = stream_rng(SEED, 6);
    for (s, shift) in [(1.0, 3.7), (2.5, 0.0), (0.5, -1.2)] {
        let mut worst = 0.0f64;
        for case in 0..30 {
            let n = rng.random_range(3..=15);
            let p = rng.random_range(2..=40);
            let data = DataMatrix::new(DMatrix::from_fn(n, p, |_, j| rng.random_range(-2.0..2.0) + 0.1 * j as f64)).unwrap();
            let moved = data.affine(s, shift);
            let (q, q_moved) = match case % 4 {
                3 => (
                    QuadraticForm::estimate_from_sample(&data).unwrap(),
                    QuadraticForm::estimate_from_sample(&moved).unwrap(),
                ),
                kind => {
                    let q = random_q(&mut rng, p, kind);
                    (q.clone(), q)
                }
            };
            let a = proposed(&data, &q, CoefficientPolicy::Raw).unwrap().estimate;
            let b = proposed(&moved, &q_moved, CoefficientPolicy::Raw).unwrap().estimate;
            let want = a * s + DVector::from_element(p, shift);
            worst = worst.max((b - &want).amax() / want.amax().max(1.0));
        }
        c.check(worst <= 1e-10, format!("(s, c) = ({s}, {shift}): max relative deviation {worst:.2e} over 30 datasets"));
    }
    c
}

fn mu2_design(p: usize) -> Design {
    Design {
        p,
        estimator_q: EstimatorQ::True,
        ..table2_design(10, MeanSpec::Mu2 { tau: 0.5 })
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn rates() -> Criterion {
    let mut c = Criterion::default();
    let mut medians = Vec::new();
    for p in [50usize, 200, 800] {
        let design = mu2_design(p);
        let cov = Arc::new(Covariance::from_spec(&design.sigma, p, None).unwrap());
        let q = QuadraticForm::diagonal(cov.diagonal().iter().map(|v| 1.0 / v).collect()).unwrap();
        let mu = shrinkmean::model::build_mean(&design.mean, p, &mut stream_rng(SEED, 0)).unwrap();
        let inst = ProblemInstance::new(mu, cov, design.n, ErrorDist::Normal).unwrap();
        let alpha_star = oracle_coefficients(&inst, &q).unwrap().alpha_star;
        let gaps: Vec<f64> = (0..500u64)
            .map(|r| {
                let y = compute_y(&generate_sample(&inst, &mut stream_rng(SEED + p as u64, r)), &q).unwrap();
                (shrinkage_coefficients(&y, CoefficientPolicy::Raw, None).unwrap().alpha - alpha_star).abs()
            })
            .collect();
        medians.push((p, median(gaps)));
    }
    for w in medians.windows(2) {
        let ratio = w[1].1 / w[0].1;
        c.check(
            (0.3..=0.85).contains(&ratio),
            format!(
                "median |alpha - alpha*|: p={} {:.4} -> p={} {:.4}, ratio {ratio:.3}",
                w[0].0, w[0].1, w[1].0, w[1].1
            ),
        );
    }

    let reg = Registry::standard();
    let mut iqrs = Vec::new();
    for p in [100usize, 400, 1600] {
        let r = run_monte_carlo(&mu2_design(p), &names(&["proposed"]), &reg, &McOptions::new(1000, SEED).keep_losses(true)).unwrap();
        let mut losses = r.losses_of("proposed").unwrap().to_vec();
        losses.sort_by(f64::total_cmp);
        iqrs.push((p, quantile(&losses, 0.75) - quantile(&losses, 0.25)));
    }
    for w in iqrs.windows(2) {
        let factor = w[0].1 / w[1].1;
        c.check(
            (1.3..=3.5).contains(&factor),
            format!("loss IQR: p={} {:.4} -> p={} {:.4}, shrink factor {factor:.3}", w[0].0, w[0].1, w[1].0, w[1].1),
        );
    }
    c
}

fn regime_one() -> Criterion {
    let mut c = Criterion::default();
    // the regime-I guarantee assumes a known Q, so estimators get the design's Q
    let design = Design {
        p: 400,
        estimator_q: EstimatorQ::True,
        ..table2_design(10, MeanSpec::Constant { c: 1.5 })
    };
    let r = run_monte_carlo(&design, &names(&["mean", "proposed"]), &Registry::standard(), &McOptions::new(2000, SEED)).unwrap();
    let prial = r.get("proposed").unwrap().prial.unwrap();
    c.check(prial >= 0.95, format!("mu = 1.5e, p=400, n=10: PRIAL {prial:.4} >= 0.95"));
    c
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn epr_fixture() -> Criterion {
    let mut c = Criterion::default();
    let data = read_matrix_csv(
        repo_root().join("data/synthetic_47x200.csv"),
        &ReadOptions {
            label_column: true,
            ..Default::default()
        },
    )
    .unwrap();
    c.check(data.matrix.n() == 47, format!("fixture has {} samples", data.matrix.n()));
    let sizes = [5, 10, 15, 20, 25, 30];
    let report = run_epr(&data, &sizes, 100, &names(&["mean", "proposed"]), &Registry::standard(), &McOptions::new(2000, SEED)).unwrap();
    let base_max = sizes.iter().map(|&s| report.get(s, "mean").unwrap().epr.abs()).fold(0.0, f64::max);
    c.check(base_max == 0.0, format!("train-mean baseline EPR identically 0 (max |EPR| {base_max})"));
    let first = report.get(5, "proposed").unwrap();
    c.check(
        first.epr > 3.0 * first.se,
        format!("proposed EPR at n_train=5: {:.4} > 3 se ({:.4})", first.epr, 3.0 * first.se),
    );
    for w in sizes.windows(2) {
        let (a, b) = (report.get(w[0], "proposed").unwrap(), report.get(w[1], "proposed").unwrap());
        c.check(
            b.epr <= a.epr + 2.0 * joint_se(a.se, b.se),
            format!("proposed EPR n_train {} -> {}: {:.4} -> {:.4}", w[0], w[1], a.epr, b.epr),
        );
    }
    c
}

fn determinism() -> Criterion {
    let mut c = Criterion::default();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_shrinkmean");
    let design = json!({"p": 60, "n": 12, "sigma": {"kind": "sigma1"}, "mean": {"kind": "mu1", "tau": 0.5}});
    let est = json!(["mean", "js", "bb", "tong", "proposed", "oracle"]);
    let sim = dir.path().join("sim.json");
    fs::write(&sim, json!({"designs": [design, {"p": 60, "n": 12, "sigma": {"kind": "sigma3", "rho": 0.3}, "mean": {"kind": "mu2", "tau": 1.0}}],
                           "estimators": est, "replications": 300, "seed": 5}).to_string()).unwrap();
    let sweep = dir.path().join("sweep.json");
    fs::write(&sweep, json!({"design": design, "estimators": est, "replications": 200, "seed": 5,
                             "sweep": {"family": "sigma2", "grid": [0.1, 0.5, 0.9]}}).to_string()).unwrap();
    let fixture = repo_root().join("data/synthetic_47x200.csv");

    let run = |args: Vec<String>, workers: &str, out: &Path| -> Vec<u8> {
        let status = Command::new(bin)
            .args(&args)
            .args(["--workers", workers, "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success(), "{args:?}");
        fs::read(out).unwrap()
    };
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["simulate".into(), sim.display().to_string()]),
        ("sweep", vec!["sweep".into(), sweep.display().to_string()]),
        (
            "epr",
            ["epr", &fixture.display().to_string(), "--label-column", "--train-sizes", "5,20", "--genes", "50", "--reps", "300", "--seed", "5"]
                .map(String::from)
                .to_vec(),
        ),
    ];
    for (name, args) in commands {
        let outputs: Vec<Vec<u8>> = ["1", "3", "8"]
            .iter()
            .map(|w| run(args.clone(), w, &dir.path().join(format!("{name}-{w}.csv"))))
            .collect();
        c.check(
            outputs.windows(2).all(|w| w[0] == w[1]),
            format!("{name}: byte-identical output with --workers 1, 3, 8 ({} bytes)", outputs[0].len()),
        );
    }
    c
}

type CriterionFn = fn() -> Criterion;

fn main() {
    let criteria: [(&str, CriterionFn); 10] = [
        ("reference risks, identity covariance", identity_grid),
        ("reference risks, heteroscedastic covariance", sigma1_grid),
        ("correlation sweep ordering", correlation_sweep),
        ("optimal coefficients match numeric minimization", optimal_coefficients),
        ("U-statistic oracles", ustat_oracles),
        ("exact affine equivariance", equivariance),
        ("rate and concentration properties", rates),
        ("regime I PRIAL", regime_one),
        ("EPR pipeline on synthetic fixture", epr_fixture),
        ("determinism across worker counts", determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = Vec::new();
    for (i, (title, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if let Some(f) = &filter {
            if f.parse::<usize>().ok() != Some(id) {
                continue;
            }
        }
        let start = Instant::now();
        let result = run();
        let status = if result.passed() { "PASS" } else { "FAIL" };
        println!("criterion {id:>2}: {status}  {title}  ({:.1}s)", start.elapsed().as_secs_f64());
        for check in &result.checks {
            println!("    [{}] {}", if check.pass { "ok" } else { "FAIL" }, check.label);
        }
        if !result.passed() {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
