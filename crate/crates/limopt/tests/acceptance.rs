//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if
//! any criterion fails. Reference values are recomputed here from first
//! principles rather than taken from the library.
//!
//! Set `LIMOPT_MNIST_DIR` to a directory with the uncompressed MNIST
//! training files to run criterion 9 on MNIST instead of synthetic blobs.

mod common;

use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use limopt::cli::{
    cmd_sweep, variance_reports, ExperimentConfig, Grid, ProblemKind, VarianceRequest,
};
use limopt::data_io::{load_idx, parse_idx, to_dataset};
use limopt::Error;
use limopt_core::numkit::{gaussian_vector, RngStream};
use limopt_core::problems::{
    descent_lemma_check, mlp_problem, noisy_quadratic, softmax_regression, synthetic_blobs,
    MlpSpec, NoisyQuadratic, Problem,
};
use limopt_core::variance_lab::{
    bound_thm2, bound_thm3, estimate_assumption_constants, exact_noise_variance,
    geometric_sum_identity, record_trajectory, theorem1_check, thm3_asymptotic_ratio,
};
use limopt_core::{
    AdamParams, DecaySchedule, OptimizerConfig, OptimizerKind, OptimizerState, ParamVector,
    StepSchedule,
};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict, u64);

fn ensure(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(v: Verdict, elapsed: Duration, limit: Duration) -> Verdict {
    match v {
        Ok(d) if elapsed > limit => Err(format!("{d}; took {elapsed:.1?}, limit {limit:?}")),
        other => other,
    }
}

fn alpha(alpha0: f64, k: u64) -> f64 {
    alpha0 / (k as f64).sqrt()
}

fn lim_gamma(beta: f64, k: u64) -> f64 {
    (k as f64 / (k as f64 + 1.0)).powf(beta)
}

fn rel_norm(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

// 1: the displacement after k steps equals -sum_j alpha_j prod_{i>j} gamma(i) g_j
fn recursion_closed_form() -> Verdict {
    let mut rng = RngStream::new(101, 0);
    let mut worst: f64 = 0.0;
    let mut trajectories = 0;
    for t in 0..100u64 {
        let d = 1 + (rng.next_gaussian().abs() * 1e6) as usize % 50;
        let k = 1 + (rng.next_gaussian().abs() * 1e6) as u64 % 200;
        let alpha0 = 0.05 + (t % 7) as f64 * 0.1;
        for lim in [true, false] {
            let param = if lim {
                1.0 + (t % 4) as f64
            } else {
                0.3 + 0.1 * (t % 7) as f64
            };
            let config = if lim {
                OptimizerConfig::lim(alpha0, param)
            } else {
                OptimizerConfig::sgdm(alpha0, param)
            }
            .unwrap();
            let grads: Vec<ParamVector> = (0..k)
                .map(|_| gaussian_vector(&mut rng, d, 1.0).unwrap())
                .collect();
            let mut state = OptimizerState::new(config, ParamVector::zeros(d));
            for g in &grads {
                state.step(g).unwrap();
            }
            let mut expected = vec![0.0; d];
            for j in 1..=k {
                let mut w = alpha(alpha0, j);
                for i in j + 1..=k {
                    w *= if lim { lim_gamma(param, i) } else { param };
                }
                for (e, g) in expected.iter_mut().zip(grads[(j - 1) as usize].iter()) {
                    *e -= w * g;
                }
            }
            worst = worst.max(rel_norm(state.last_displacement().as_slice(), &expected));
            trajectories += 1;
        }
    }
    ensure(
        worst <= 1e-10,
        format!("{trajectories} trajectories (d<=50, k<=200), max relative error {worst:.2e}"),
    )
}

// exact tr Cov of the accumulator under iid noise of trace m: V_k = gamma_k^2 V_{k-1} + alpha_k^2 m
fn variance_by_recursion(gamma: impl Fn(u64) -> f64, alpha0: f64, m: f64, kmax: u64) -> Vec<f64> {
    let mut v = vec![0.0];
    for k in 1..=kmax {
        let g = gamma(k);
        let prev = v[(k - 1) as usize];
        v.push(g * g * prev + alpha(alpha0, k).powi(2) * m);
    }
    v
}

fn noise_request(optimizer: OptimizerKind, gamma: f64, beta: f64, ks: Vec<u64>) -> VarianceRequest {
    VarianceRequest {
        config: ExperimentConfig {
            problem: ProblemKind::Noise,
            optimizer,
            alpha0: 1.0,
            gamma,
            beta,
            dim: 10,
            sigma: 1.0,
            seed: 2024,
            ..ExperimentConfig::default()
        },
        ks,
        replicas: 20_000,
    }
}

// 2: fixed-factor bound on the pure-noise oracle
fn fixed_factor_bound() -> Verdict {
    let m = 10.0;
    let mut notes = Vec::new();
    let mut ok = true;
    for gamma in [0.5, 0.9] {
        let exact = variance_by_recursion(|_| gamma, 1.0, m, 10_000);
        let bound = bound_thm2(1.0, gamma, m, 0.0, 0.0, 0.0, 0.0).unwrap();
        let oracle_bound = m / (1.0 - gamma * gamma);
        ok &= (bound - oracle_bound).abs() <= 1e-12 * oracle_bound;
        let max_ratio = exact[1..].iter().map(|v| v / bound).fold(0.0, f64::max);
        ok &= exact[1..].iter().all(|&v| v < bound);
        let d = DecaySchedule::fixed(gamma).unwrap();
        let s = StepSchedule::new(1.0).unwrap();
        for k in [1u64, 10, 100, 10_000] {
            let lib = exact_noise_variance(&d, &s, k, m);
            ok &= (lib - exact[k as usize]).abs() <= 1e-10 * exact[k as usize];
        }
        let reports = variance_reports(&noise_request(
            OptimizerKind::Sgdm,
            gamma,
            2.0,
            vec![10, 50],
        ))
        .map_err(|e| e.to_string())?;
        for r in reports {
            let e = exact[r.k as usize];
            let rel = (r.estimate - e).abs() / e;
            ok &= rel <= 0.05;
            notes.push(format!(
                "gamma={gamma} k={} MC rel err {:.2}%",
                r.k,
                100.0 * rel
            ));
        }
        notes.push(format!(
            "gamma={gamma} max exact/bound over k<=1e4 {max_ratio:.6}"
        ));
    }
    ensure(ok, notes.join("; "))
}

// 3: inverse-proportional bound, asymptotic form
fn inverse_proportional_bound() -> Verdict {
    let m = 10.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for beta in [1.0, 2.0] {
        let exact = variance_by_recursion(|k| lim_gamma(beta, k), 1.0, m, 1000);
        let bound = bound_thm3(1.0, beta, m, 0.0, 0.0, 0.0, 0.0).unwrap();
        ok &= (bound - m / (2.0 * beta)).abs() <= 1e-12 * bound;
        let ratio = |k: u64| exact[k as usize] / bound;
        for k in [1u64, 10, 100, 1000] {
            let lib = thm3_asymptotic_ratio(beta, 1.0, k).unwrap();
            ok &= (lib - ratio(k)).abs() <= 1e-12 * ratio(k);
        }
        for k in [100u64, 1000] {
            ok &= ratio(k) <= 1.0 + 4.0 / k as f64;
        }
        ok &= ratio(10) > ratio(100) && ratio(100) > ratio(1000);
        if beta == 1.0 {
            ok &= (ratio(1) - 2.0).abs() <= 1e-12;
        }
        notes.push(format!(
            "beta={beta}: ratio k=1 {:.12}, k=10 {:.5}, k=100 {:.5}, k=1000 {:.6}",
            ratio(1),
            ratio(10),
            ratio(100),
            ratio(1000)
        ));
    }
    ensure(ok, notes.join("; "))
}

// 4: sum_{j=1}^k gamma^(2(k-j)) = (1 - gamma^(2k)) / (1 - gamma^2)
fn geometric_sum() -> Verdict {
    let mut worst: f64 = 0.0;
    for gamma in [0.1f64, 0.5, 0.9, 0.99] {
        for k in [1u64, 10, 100, 10_000] {
            let mut lhs = 0.0;
            let mut term = 1.0;
            for _ in 0..k {
                lhs += term;
                term *= gamma * gamma;
            }
            let rhs = (1.0 - gamma.powf(2.0 * k as f64)) / (1.0 - gamma * gamma);
            let (l, r) = geometric_sum_identity(gamma, k).unwrap();
            for v in [lhs, l, r] {
                worst = worst.max((v - rhs).abs() / rhs);
            }
        }
    }
    ensure(
        worst <= 1e-12,
        format!("16 cases, max relative disagreement {worst:.2e}"),
    )
}

// 5: |grad F(x_j)|^2 <= 2 |grad F(x_k)|^2 + 2 L^2 D^2 along real trajectories
fn gradient_gap() -> Verdict {
    let diag = [0.25, 0.5, 0.75, 1.0];
    let q = NoisyQuadratic::diagonal(&diag, 0.5, 0.5).unwrap();
    let l = 1.0;
    let configs = [
        OptimizerConfig::sgd(0.1).unwrap(),
        OptimizerConfig::sgdm(0.1, 0.9).unwrap(),
        OptimizerConfig::lim(0.1, 2.0).unwrap(),
        OptimizerConfig::adam(0.05, AdamParams::default()).unwrap(),
    ];
    let mut violations = 0usize;
    let mut lib_violations = 0usize;
    let mut pairs = 0usize;
    for c in configs {
        for seed in 0..10 {
            let mut rng = RngStream::new(seed, 0);
            let t = record_trajectory(&q, &c, 500, 1, &mut rng).map_err(|e| e.to_string())?;
            let xs: Vec<&ParamVector> = t.points.iter().map(|p| &p.x).collect();
            let g2: Vec<f64> = xs
                .iter()
                .map(|x| x.iter().zip(diag).map(|(v, a)| (a * v) * (a * v)).sum())
                .collect();
            let mut d2: f64 = 0.0;
            for i in 0..xs.len() {
                for j in i + 1..xs.len() {
                    d2 = d2.max(
                        xs[i]
                            .iter()
                            .zip(xs[j].iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum(),
                    );
                }
            }
            for &gj in &g2 {
                for &gk in &g2 {
                    if gj > 2.0 * gk + 2.0 * l * l * d2 + 1e-9 {
                        violations += 1;
                    }
                    pairs += 1;
                }
            }
            lib_violations += theorem1_check(&t, l).map_err(|e| e.to_string())?.violations;
        }
    }
    ensure(
        violations == 0 && lib_violations == 0,
        format!(
            "{pairs} pairs over 4 optimizers x 10 seeds x 500 iterations, {violations} violations"
        ),
    )
}

// 6: F(x) <= F(xb) + grad F(xb)^T (x - xb) + L/2 |x - xb|^2
fn descent_lemma() -> Verdict {
    let (a, b, d) = (2.0, 0.6, 1.0);
    let l = (a + d) / 2.0 + (((a - d) / 2.0f64).powi(2) + b * b).sqrt();
    let q = noisy_quadratic(&[a, b, b, d], 0.0, 0.0).unwrap();
    let lib_l = q.known_constants().unwrap().lipschitz;
    let f = |x: &[f64]| 0.5 * (a * x[0] * x[0] + 2.0 * b * x[0] * x[1] + d * x[1] * x[1]);
    let grad = |x: &[f64]| [a * x[0] + b * x[1], b * x[0] + d * x[1]];
    let mut rng = RngStream::new(6, 0);
    let mut violations = 0;
    let mut lib_violations = 0;
    for _ in 0..1000 {
        let x = gaussian_vector(&mut rng, 2, 3.0).unwrap();
        let xb = gaussian_vector(&mut rng, 2, 3.0).unwrap();
        let (xs, xbs) = (x.as_slice(), xb.as_slice());
        let g = grad(xbs);
        let dx = [xs[0] - xbs[0], xs[1] - xbs[1]];
        let rhs = f(xbs) + g[0] * dx[0] + g[1] * dx[1] + 0.5 * l * (dx[0] * dx[0] + dx[1] * dx[1]);
        if f(xs) > rhs + 1e-9 {
            violations += 1;
        }
        if !descent_lemma_check(&q, &x, &xb).unwrap().holds(1e-9) {
            lib_violations += 1;
        }
    }
    let iso = noisy_quadratic(&[2.5, 0.0, 0.0, 2.5], 0.0, 0.0).unwrap();
    let mut gap: f64 = 0.0;
    for _ in 0..1000 {
        let x = gaussian_vector(&mut rng, 2, 3.0).unwrap();
        let xb = gaussian_vector(&mut rng, 2, 3.0).unwrap();
        gap = gap.max(descent_lemma_check(&iso, &x, &xb).unwrap().slack.abs());
    }
    ensure(
        violations == 0 && lib_violations == 0 && gap <= 1e-9 && (lib_l - l).abs() <= 1e-12,
        format!(
            "L={l:.6} (library {lib_l:.6}), {violations} violations in 1000 pairs, max |slack| for A=L*I {gap:.2e}"
        ),
    )
}

fn central_difference(p: &impl Problem, x: &ParamVector, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += h;
            lo[i] -= h;
            (p.loss(&hi) - p.loss(&lo)) / (hi[i] - lo[i])
        })
        .collect()
}

fn max_rel_error(p: &impl Problem, rng: &mut RngStream) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = gaussian_vector(rng, p.dim(), 0.5).unwrap();
        let fd = central_difference(p, &x, 1e-5);
        let an = p.full_gradient(&x);
        for (a, n) in an.iter().zip(&fd) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-4));
        }
    }
    worst
}

// 7: analytic gradients against central differences
fn gradients() -> Verdict {
    let mut rng = RngStream::new(7, 0);
    let data = synthetic_blobs(30, 6, 3, 1.0, &mut rng).unwrap();
    let sm = softmax_regression(data.clone()).unwrap();
    let mlp = mlp_problem(MlpSpec::new(6, &[5, 4], 3).unwrap(), data, &mut rng).unwrap();
    let e_sm = max_rel_error(&sm, &mut rng);
    let e_mlp = max_rel_error(&mlp, &mut rng);
    ensure(
        e_sm <= 1e-5 && e_mlp <= 1e-5,
        format!("softmax {e_sm:.2e}, mlp {e_mlp:.2e} (10 points each, h=1e-5)"),
    )
}

// 8: recover M = d sigma^2 = 5 and M_V = c = 2
fn assumption_estimator() -> Verdict {
    let diag = [0.2, 0.4, 0.6, 0.8, 1.0];
    let q = NoisyQuadratic::diagonal(&diag, 1.0, 2.0).unwrap();
    let truth = q.known_constants().unwrap();
    let points: Vec<ParamVector> = (0..20)
        .map(|i| ParamVector::from_vec(vec![0.25 * i as f64; 5]))
        .collect();
    let draws = 5000;
    let mut rng = RngStream::new(8, 0);
    let est =
        estimate_assumption_constants(&q, &points, draws, &mut rng).map_err(|e| e.to_string())?;
    let rm = (est.m_hat - 5.0).abs() / 5.0;
    let rv = (est.mv_hat - 2.0).abs() / 2.0;
    ensure(
        rm <= 0.1 && rv <= 0.1 && truth.m == 5.0 && truth.m_v == 2.0,
        format!(
            "M_hat {:.4} ({:.1}%), M_V_hat {:.4} ({:.1}%), {} draws",
            est.m_hat,
            100.0 * rm,
            est.mv_hat,
            100.0 * rv,
            points.len() * draws
        ),
    )
}

// 9: best LIM final NLL <= best SGDM final NLL after 5 epochs on >= 4 of 5 seeds
fn qualitative_comparison() -> Verdict {
    let data_path = std::env::var_os("LIMOPT_MNIST_DIR").map(PathBuf::from);
    let samples = match &data_path {
        Some(dir) => limopt::data_io::load_mnist(dir)
            .map_err(|e| e.to_string())?
            .len(),
        None => limopt::cli::SYNTHETIC_SAMPLES,
    };
    let batch = 128;
    let iters = (samples.div_ceil(batch) * 5) as u64;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let alphas: Vec<String> = ["0.01", "0.05", "0.1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut wins = 0;
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let mut best = Vec::new();
        for (opt, grid) in [
            (
                OptimizerKind::Lim,
                vec![
                    ("alpha0".to_string(), alphas.clone()),
                    (
                        "beta".to_string(),
                        vec!["1.5".into(), "2".into(), "3".into()],
                    ),
                ],
            ),
            (
                OptimizerKind::Sgdm,
                vec![("alpha0".to_string(), alphas.clone())],
            ),
        ] {
            let base = ExperimentConfig {
                problem: ProblemKind::Logreg,
                optimizer: opt,
                batch,
                iters,
                seed,
                data_path: data_path.clone(),
                out_dir: tmp.path().join(format!("{opt}_{seed}")),
                ..ExperimentConfig::default()
            };
            let rows = cmd_sweep(&base, &grid as &Grid).map_err(|e| e.to_string())?;
            let b = rows
                .iter()
                .map(|r| r.final_loss)
                .filter(|v| v.is_finite())
                .fold(f64::INFINITY, f64::min);
            best.push(b);
        }
        if best[0] <= best[1] {
            wins += 1;
        }
        notes.push(format!("s{seed} {:.4}/{:.4}", best[0], best[1]));
    }
    let source = if data_path.is_some() {
        "MNIST"
    } else {
        "synthetic blobs"
    };
    ensure(
        wins >= 4,
        format!(
            "{source}, {iters} iterations: LIM wins {wins}/5 (best LIM/SGDM NLL: {})",
            notes.join(", ")
        ),
    )
}

// 10: byte-exact IDX fixtures and the expected format errors
fn idx_loader() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.path().join(name);
        fs::write(&p, bytes).unwrap();
        p
    };
    let labels =
        load_idx(&write("labels", &[0, 0, 8, 1, 0, 0, 0, 2, 7, 3])).map_err(|e| e.to_string())?;
    let images = load_idx(&write(
        "images",
        &[
            0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 128, 255, 64,
        ],
    ))
    .map_err(|e| e.to_string())?;
    let mut ok = labels.dims == [2] && labels.data == [7, 3];
    ok &= images.dims == [1, 2, 2] && images.data == [0, 128, 255, 64];
    let one_label = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 4]).unwrap();
    let ds = to_dataset(&images, &one_label, true).map_err(|e| e.to_string())?;
    ok &= ds.len() == 1 && ds.feature_count() == 4;
    ok &= ds.row(0) == [0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0];

    let magic = load_idx(&write(
        "bad_magic",
        &[0, 0, 8, 2, 0, 0, 0, 1, 0, 0, 0, 1, 9],
    ));
    let magic_msg = match magic {
        Err(Error::Format(m)) => m,
        other => return Err(format!("corrupted magic gave {other:?}")),
    };
    ok &= magic_msg.contains("0x00000802");
    let trunc = load_idx(&write("truncated", &[0, 0, 8, 1, 0, 0, 0, 5, 1, 2, 3]));
    let trunc_msg = match trunc {
        Err(Error::Format(m)) => m,
        other => return Err(format!("truncated payload gave {other:?}")),
    };
    ok &= trunc_msg.contains("expected 5") && trunc_msg.contains("found 3");
    ok &= matches!(load_idx(&write("empty", &[])), Err(Error::Format(_)));
    ensure(ok, format!("errors: [{magic_msg}] [{trunc_msg}]"))
}

// 11: identical flags give identical bytes
fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let commands: [(&[&str], &str); 3] = [
        (
            &[
                "run",
                "--problem",
                "quadratic",
                "--optimizer",
                "lim",
                "--iters",
                "200",
                "--seed",
                "3",
            ],
            "quadratic_lim_s3.csv",
        ),
        (
            &[
                "run",
                "--problem",
                "logreg",
                "--optimizer",
                "sgdm",
                "--iters",
                "40",
                "--seed",
                "3",
            ],
            "logreg_sgdm_s3.csv",
        ),
        (
            &[
                "variance",
                "--problem",
                "quadratic",
                "--noise-mv",
                "0.5",
                "--optimizer",
                "lim",
                "--k",
                "5,20",
                "--replicas",
                "2000",
                "--seed",
                "3",
            ],
            "variance_quadratic_lim_s3.csv",
        ),
    ];
    let mut identical = 0;
    for (args, file) in commands {
        let mut outputs = Vec::new();
        for out in ["first", "second"] {
            let mut full = args.to_vec();
            full.extend(["--out", out]);
            let o = common::limopt(&full, dir.path());
            if !o.status.success() {
                return Err(format!(
                    "{args:?} failed: {}",
                    String::from_utf8_lossy(&o.stderr)
                ));
            }
            outputs.push(fs::read(dir.path().join(out).join(file)).map_err(|e| e.to_string())?);
        }
        if outputs[0] == outputs[1] {
            identical += 1;
        }
    }
    ensure(
        identical == 3,
        format!("{identical}/3 repeated commands byte-identical"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("recursion and closed form agree", recursion_closed_form, 5),
        ("fixed-factor variance bound", fixed_factor_bound, 60),
        ("inverse-proportional variance bound", inverse_proportional_bound, 30),
        ("geometric-sum identity", geometric_sum, 0),
        ("gradient gap along trajectories", gradient_gap, 60),
        ("descent lemma", descent_lemma, 0),
        ("gradient correctness", gradients, 0),
        ("noise-constant estimator", assumption_estimator, 0),
        ("LIM versus SGDM training loss", qualitative_comparison, 600),
        ("IDX loader", idx_loader, 0),
        ("determinism", determinism, 0),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut v = f();
        let elapsed = start.elapsed();
        if *limit > 0 {
            v = within_time(v, elapsed, Duration::from_secs(*limit));
        }
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {:>2} {name}: {detail} [{elapsed:.2?}]",
            i + 1
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
