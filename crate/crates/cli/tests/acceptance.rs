//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the criteria execute in order and
//! report as a table. Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use dmse::checkpoint;
use dmse::data::Observation;
use dmse::evaluation::evaluate;
use dmse::gradients::{grad_mu_sigma, observation_gradient};
use dmse::mvn::{cdf_rectangle, DEFAULT_MAX_SAMPLES};
use dmse::synth::{synth_generate, MuMapKind, SynthSpec};
use dmse::trainer::{train, TrainConfig};
use dmse::{Dataset, MlpParams, ModelConfig, ModelParams, MvnProblem, Rectangle, SamplerConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}

/// A random covariance with unequal variances and correlations well inside
/// (−1, 1).
fn random_cov(r: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let a = Array2::from_shape_simple_fn((n, n + 1), || uniform(r, -1.0, 1.0));
    let mut c = a.dot(&a.t());
    for j in 0..n {
        c[[j, j]] += 0.3;
    }
    let scale: Vec<f64> = (0..n).map(|_| uniform(r, 0.5, 2.0)).collect();
    let d: Vec<f64> = (0..n).map(|j| c[[j, j]].sqrt()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        c[[i, j]] / (d[i] * d[j]) * scale[i] * scale[j]
    })
}

// ---------------------------------------------------------------------------
// Quadrature oracle

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Adaptive 15-point Gauss–Kronrod on `[a, b]` to absolute tolerance `tol`.
fn adaptive_gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut kronrod = GK_WEIGHTS[7] * f(c);
    let mut gauss = GAUSS_WEIGHTS[3] * f(c);
    for i in 0..7 {
        let (x1, x2) = (f(c - h * GK_NODES[i]), f(c + h * GK_NODES[i]));
        kronrod += GK_WEIGHTS[i] * (x1 + x2);
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * (x1 + x2);
        }
    }
    let (kronrod, gauss) = (kronrod * h, gauss * h);
    if (kronrod - gauss).abs() <= tol || depth == 0 {
        kronrod
    } else {
        adaptive_gk(f, a, c, 0.5 * tol, depth - 1) + adaptive_gk(f, c, b, 0.5 * tol, depth - 1)
    }
}

/// `Pr(lower < x < upper)` for a 3-dimensional normal by nested adaptive
/// quadrature in whitened coordinates. Independent of the library's CDF and
/// normal-distribution code.
fn quadrature_oracle_3d(mu: &Array1<f64>, cov: &Array2<f64>, lower: &[f64], upper: &[f64]) -> f64 {
    const CLAMP: f64 = 10.0;
    let std = Normal::standard();
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    let c = |v: f64| v.clamp(-CLAMP, CLAMP);
    // lower Cholesky factor, written out
    let l11 = cov[[0, 0]].sqrt();
    let l21 = cov[[1, 0]] / l11;
    let l31 = cov[[2, 0]] / l11;
    let l22 = (cov[[1, 1]] - l21 * l21).sqrt();
    let l32 = (cov[[2, 1]] - l31 * l21) / l22;
    let l33 = (cov[[2, 2]] - l31 * l31 - l32 * l32).sqrt();
    let inner = |z1: f64| {
        let lo = c((lower[1] - mu[1] - l21 * z1) / l22);
        let hi = c((upper[1] - mu[1] - l21 * z1) / l22);
        if hi <= lo {
            return 0.0;
        }
        let g = |z2: f64| {
            let m = mu[2] + l31 * z1 + l32 * z2;
            let p = std.cdf(c((upper[2] - m) / l33)) - std.cdf(c((lower[2] - m) / l33));
            phi(z2) * p
        };
        adaptive_gk(&g, lo, hi, 1e-13, 40)
    };
    let lo = c((lower[0] - mu[0]) / l11);
    let hi = c((upper[0] - mu[0]) / l11);
    adaptive_gk(&|z1| phi(z1) * inner(z1), lo, hi, 1e-12, 40)
}

// ---------------------------------------------------------------------------
// Criteria

fn criterion_1() -> Outcome {
    let tol = 1e-5;
    let mut r = rng(101);
    let mut worst2: f64 = 0.0;
    for i in 0..25 {
        let cov = random_cov(&mut r, 2);
        let rho = cov[[0, 1]] / (cov[[0, 0]] * cov[[1, 1]]).sqrt();
        let p = MvnProblem::new(Array1::zeros(2), &cov).unwrap();
        let est = cdf_rectangle(
            &p,
            &Rectangle::from_presence(&[true, true]),
            1e-9,
            DEFAULT_MAX_SAMPLES,
            i,
        )
        .unwrap();
        let exact = 0.25 + rho.asin() / (2.0 * PI);
        worst2 = worst2.max((est.value - exact).abs());
    }
    // oracle self-check on an independent case
    let diag = Array2::from_diag(&Array1::from(vec![1.0, 4.0, 0.25]));
    let zero = Array1::zeros(3);
    let self_check =
        (quadrature_oracle_3d(&zero, &diag, &[0.0; 3], &[f64::INFINITY; 3]) - 0.125).abs();
    let mut worst3: f64 = 0.0;
    for i in 0..10 {
        let cov = random_cov(&mut r, 3);
        let mu: Array1<f64> = (0..3).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
        let (mut lower, mut upper) = (vec![0.0; 3], vec![0.0; 3]);
        for j in 0..3 {
            let a = uniform(&mut r, -2.0, 1.0);
            let b = a + uniform(&mut r, 0.3, 3.0);
            match (i + j) % 3 {
                0 => (lower[j], upper[j]) = (0.0, f64::INFINITY),
                1 => (lower[j], upper[j]) = (f64::NEG_INFINITY, b),
                _ => (lower[j], upper[j]) = (a, b),
            }
        }
        let p = MvnProblem::new(mu.clone(), &cov).unwrap();
        let rect = Rectangle::new(lower.clone(), upper.clone()).unwrap();
        let est = cdf_rectangle(&p, &rect, 1e-8, DEFAULT_MAX_SAMPLES, i as u64).unwrap();
        let oracle = quadrature_oracle_3d(&mu, &cov, &lower, &upper);
        worst3 = worst3.max((est.value - oracle).abs());
    }
    outcome(
        worst2 <= tol && worst3 <= tol && self_check < 1e-12,
        format!("max |err| n=2 {worst2:.1e}, n=3 {worst3:.1e} (tol {tol:.0e}); oracle self-check {self_check:.1e}"),
    )
}

/// Central difference of `log Pr` with its error bound from the integrator.
fn fd_log_cdf(
    cov_p: &Array2<f64>,
    mu_p: &Array1<f64>,
    cov_m: &Array2<f64>,
    mu_m: &Array1<f64>,
    rect: &Rectangle,
    h: f64,
) -> (f64, f64) {
    let est = |c: &Array2<f64>, m: &Array1<f64>| {
        cdf_rectangle(
            &MvnProblem::new(m.clone(), c).unwrap(),
            rect,
            1e-8,
            1 << 24,
            7,
        )
        .unwrap()
    };
    let (p, m) = (est(cov_p, mu_p), est(cov_m, mu_m));
    let fd = (p.value.ln() - m.value.ln()) / (2.0 * h);
    let err = (p.error_estimate / p.value + m.error_estimate / m.value) / (2.0 * h);
    (fd, err)
}

fn criterion_2() -> Outcome {
    let h = 1e-4;
    let mut r = rng(202);
    let (mut checked, mut failed) = (0, 0);
    let mut worst: f64 = 0.0;
    let mut analytic_ok = true;
    for i in 0..10 {
        let n = 1 + i % 3;
        let cov = if n == 1 {
            Array2::eye(1)
        } else {
            random_cov(&mut r, n)
        };
        let mu: Array1<f64> = (0..n).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
        let bits: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        let rect = Rectangle::from_presence(&bits);
        let cfg = SamplerConfig {
            n_samples: 100_000,
            ..SamplerConfig::default()
        }
        .with_seed(1000 + i as u64);
        let g = grad_mu_sigma(&MvnProblem::new(mu.clone(), &cov).unwrap(), &rect, &cfg).unwrap();
        let mut check = |mc: f64, se: f64, fd: f64, fd_err: f64| {
            let z = (mc - fd).abs() / (3.0 * se + fd_err);
            worst = worst.max(z);
            checked += 1;
            if z > 1.0 {
                failed += 1;
            }
        };
        for j in 0..n {
            let (mut mp, mut mm) = (mu.clone(), mu.clone());
            mp[j] += h;
            mm[j] -= h;
            let (fd, err) = fd_log_cdf(&cov, &mp, &cov, &mm, &rect, h);
            check(g.d_mu[j], g.d_mu_se[j], fd, err);
            for t in 0..=j {
                let (mut cp, mut cm) = (cov.clone(), cov.clone());
                cp[[j, t]] += h;
                cm[[j, t]] -= h;
                if t != j {
                    cp[[t, j]] += h;
                    cm[[t, j]] -= h;
                }
                let (fd, err) = fd_log_cdf(&cp, &mu, &cm, &mu, &rect, h);
                let (mc, se) = if t == j {
                    (g.d_sigma[[j, j]], g.d_sigma_se[[j, j]])
                } else {
                    (
                        g.d_sigma[[j, t]] + g.d_sigma[[t, j]],
                        g.d_sigma_se[[j, t]] + g.d_sigma_se[[t, j]],
                    )
                };
                check(mc, se, fd, err);
            }
        }
        if n == 1 {
            // d/dμ log Φ(±μ) = ±φ(μ)/Φ(±μ)
            let s = if bits[0] { 1.0 } else { -1.0 };
            let std = Normal::standard();
            let exact = s * (-0.5 * mu[0] * mu[0]).exp() / (2.0 * PI).sqrt() / std.cdf(s * mu[0]);
            analytic_ok &= (g.d_mu[0] - exact).abs() <= 3.0 * g.d_mu_se[0];
        }
    }
    outcome(
        failed == 0 && analytic_ok,
        format!(
            "{checked} entries, {failed} outside 3 SE (worst |Δ|/(3SE+fd err) {worst:.2}); n=1 vs φ/Φ {}",
            if analytic_ok { "ok" } else { "off" }
        ),
    )
}

fn criterion_3() -> Outcome {
    let cfg = ModelConfig {
        d1: 4,
        d2: 4,
        hidden: vec![5, 5, 3],
    };
    let mut params = ModelParams::init(
        vec!["a".into(), "b".into()],
        vec!["x".into(), "y".into(), "z".into()],
        &cfg,
        31,
    )
    .unwrap();
    let mut r = rng(303);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += uniform(&mut r, -0.2, 0.2);
        }
    }
    let h = 1e-4;
    let tol = 1e-8;
    let (mut checked, mut failed) = (0, 0);
    let mut worst: f64 = 0.0;
    for (k, bits) in [[true, true], [true, false], [false, false]]
        .iter()
        .enumerate()
    {
        let l: Array1<f64> = (0..3).map(|_| uniform(&mut r, -1.5, 1.5)).collect();
        let obs = Observation {
            b: bits.to_vec(),
            l: l.clone(),
        };
        let sampler = SamplerConfig {
            n_samples: 100_000,
            ..SamplerConfig::default()
        }
        .with_seed(40 + k as u64);
        let g = observation_gradient(&params, bits, l.view(), &sampler).unwrap();
        let mc: Vec<f64> = g.bundle.tensors().concat();
        let se: Vec<f64> = g.se.tensors().concat();
        let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        let mut flat = 0;
        for (ti, size) in sizes.iter().enumerate() {
            for e in 0..*size {
                let eval = |delta: f64| {
                    let mut p = params.clone();
                    p.tensors_mut()[ti][e] += delta;
                    p.log_likelihood_obs(&obs, tol, 9).unwrap()
                };
                let (up, down) = (eval(h), eval(-h));
                let fd = (up.value - down.value) / (2.0 * h);
                let fd_err = (up.prob_error / up.value.exp() + down.prob_error / down.value.exp())
                    / (2.0 * h);
                let z = (mc[flat] - fd).abs() / (3.0 * se[flat] + fd_err);
                worst = worst.max(if z.is_nan() { 0.0 } else { z });
                checked += 1;
                if z > 1.0 {
                    failed += 1;
                }
                flat += 1;
            }
        }
    }
    outcome(
        failed == 0,
        format!(
            "{checked} bundle entries over 3 patterns, {failed} outside 3 SE (worst {worst:.2})"
        ),
    )
}

fn criterion_4() -> Outcome {
    let dims = [4, 8, 8, 3];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for trial in 0..20u64 {
        let mut r = rng(400 + trial);
        let mut net = MlpParams::init(&dims, trial).unwrap();
        for layer in net.layers_mut() {
            layer.bias.mapv_inplace(|_| r.random_range(-0.5..0.5));
        }
        let x: Array1<f64> = (0..4).map(|_| r.random_range(-1.5..1.5)).collect();
        let c: Array1<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let loss = |n: &MlpParams, x: &Array1<f64>| n.forward(x.view()).unwrap().0.dot(&c);
        let (_, tape) = net.forward(x.view()).unwrap();
        let (grads, dx) = net.backward_single(&tape, c.view()).unwrap();
        let rel = |a: f64, f: f64| {
            let scale = a.abs().max(f.abs());
            if scale < 1e-8 {
                (a - f).abs()
            } else {
                (a - f).abs() / scale
            }
        };
        let analytic: Vec<f64> = grads.tensors().concat();
        let mut flat = 0;
        let sizes: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
        for (ti, size) in sizes.iter().enumerate() {
            for e in 0..*size {
                let (mut up, mut down) = (net.clone(), net.clone());
                up.tensors_mut()[ti][e] += h;
                down.tensors_mut()[ti][e] -= h;
                let fd = (loss(&up, &x) - loss(&down, &x)) / (2.0 * h);
                worst = worst.max(rel(analytic[flat], fd));
                flat += 1;
            }
        }
        for k in 0..4 {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (loss(&net, &up) - loss(&net, &down)) / (2.0 * h);
            worst = worst.max(rel(dx[k], fd));
        }
    }
    outcome(
        worst <= 1e-6,
        format!("max relative error {worst:.1e} over 20 trials (bound 1e-6)"),
    )
}

fn random_model(n: usize, seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        d1: 3,
        d2: 3,
        hidden: vec![4],
    };
    let species = (0..n).map(|j| format!("s{j}")).collect();
    let mut p = ModelParams::init(species, vec!["x".into(), "y".into()], &cfg, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    p.lambda_raw.mapv_inplace(|_| r.random_range(-1.0..1.0));
    p.s.mapv_inplace(|v| 2.0 * v);
    p
}

fn patterns(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1usize << n).map(move |k| (0..n).map(|j| k >> j & 1 == 1).collect())
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lambda_free = true;
    for i in 0..10u64 {
        let n = 2 + (i as usize) % 3;
        let mut params = random_model(n, 500 + i);
        let mut r = rng(550 + i);
        let l: Array1<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
        let marginal = params.predict_marginal(l.view()).unwrap();
        let mut sums = vec![0.0; n];
        for b in patterns(n) {
            let p = params
                .log_likelihood_obs(
                    &Observation {
                        b: b.clone(),
                        l: l.clone(),
                    },
                    1e-7,
                    i,
                )
                .unwrap()
                .value
                .exp();
            for j in 0..n {
                if b[j] {
                    sums[j] += p;
                }
            }
        }
        for j in 0..n {
            worst = worst.max((sums[j] - marginal[j]).abs());
        }
        params
            .lambda_raw
            .mapv_inplace(|_| r.random_range(-1.0..1.0));
        lambda_free &= params.predict_marginal(l.view()).unwrap() == marginal;
    }
    outcome(
        worst <= 1e-4 && lambda_free,
        format!("max |Σ_b Pr(b) − Φ(μ_j)| {worst:.1e} (tol 1e-4); marginals independent of Λ: {lambda_free}"),
    )
}

fn synth(n_obs: usize, rho: f64, kind: MuMapKind, m: usize, seed: u64) -> Dataset {
    let spec = SynthSpec {
        n_species: 2,
        m_features: m,
        n_obs,
        mu_map: kind,
        true_sigma: SynthSpec::equicorrelated(2, rho),
        signal: 1.0,
        seed,
    };
    synth_generate(&spec).unwrap().0
}

fn recovery_config(hidden: Vec<usize>) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        learning_rate: 0.01,
        seed: 1,
        model: ModelConfig {
            hidden,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn split(d: &Dataset, n_train: usize) -> (Dataset, Dataset) {
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..d.len()).collect();
    (d.subset(&train), d.subset(&test))
}

/// Criterion 6; also hands the ρ = 0.7 model and its held-out rows to
/// criterion 7.
fn criterion_6() -> (Outcome, Option<(ModelParams, Dataset)>) {
    let mut parts = Vec::new();
    let mut pass = true;
    let mut keep = None;
    for rho in [-0.7, 0.0, 0.7] {
        let (train_set, held_out) = split(&synth(6000, rho, MuMapKind::Linear, 3, 7), 5000);
        let (params, _) = train(
            &train_set,
            &recovery_config(ModelConfig::default().hidden),
            3,
        )
        .unwrap();
        let learned = params.sigma().unwrap().get(0, 1);
        pass &= (learned - rho).abs() <= 0.15;
        parts.push(format!("ρ {rho:+.1} → {learned:+.3}"));
        if rho == 0.7 {
            keep = Some((params, held_out));
        }
    }
    (
        outcome(pass, format!("{} (tol 0.15, N=5000)", parts.join(", "))),
        keep,
    )
}

fn criterion_7(trained: Option<(ModelParams, Dataset)>) -> Outcome {
    let Some((params, held_out)) = trained else {
        return outcome(false, "no ρ=0.7 model".into());
    };
    let report = evaluate(&params, &held_out, 1e-6, 17).unwrap();
    let gap = report.joint_loglik - report.independent_loglik;
    let p = report.paired.map_or(f64::NAN, |t| t.p_greater);
    outcome(
        gap > 0.01 && p < 0.01,
        format!(
            "held-out gap {gap:.4} nats/obs over {} obs (> 0.01), paired p {p:.1e} (< 0.01)",
            report.n_obs
        ),
    )
}

fn criterion_8() -> Outcome {
    let (train_set, held_out) = split(&synth(6000, 0.0, MuMapKind::XorRadial, 2, 11), 5000);
    let auc = |hidden: Vec<usize>| {
        let (params, _) = train(&train_set, &recovery_config(hidden), 3).unwrap();
        evaluate(&params, &held_out, 1e-6, 0)
            .unwrap()
            .mean_auc
            .unwrap_or(f64::NAN)
    };
    let deep = auc(ModelConfig::default().hidden);
    let linear = auc(Vec::new());
    outcome(
        deep - linear >= 0.05,
        format!(
            "held-out mean AUC deep {deep:.3} vs linear {linear:.3}, gap {:.3} (≥ 0.05)",
            deep - linear
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("spec.cfg"),
        "n_species = 3\nm_features = 2\nn_obs = 200\nrho = 0.3\nseed = 5\n",
    )
    .unwrap();
    fs::write(
        d.join("t.cfg"),
        "epochs = 2\nminibatch_size = 20\nd1 = 6\nd2 = 6\nhidden = 8, 4\neval_every = 5\n",
    )
    .unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_dmse"))
            .current_dir(d)
            .args(args)
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    };
    let mut ok = run(&["synth", "--spec-config", "spec.cfg", "--out", "d.csv"]);
    for out in ["a.ckpt", "b.ckpt"] {
        ok &= run(&[
            "train", "--data", "d.csv", "--config", "t.cfg", "--out", out, "--seed", "42",
        ]);
    }
    let (a, b) = (
        fs::read(d.join("a.ckpt")).unwrap_or_default(),
        fs::read(d.join("b.ckpt")).unwrap_or_default(),
    );
    let identical = ok && !a.is_empty() && a == b;
    let round_trip = checkpoint::from_bytes(&a)
        .map(|p| checkpoint::to_bytes(&p) == a)
        .unwrap_or(false);
    outcome(
        identical && round_trip,
        format!("two seeded runs byte-identical: {identical}; save→load→save identical: {round_trip} ({} bytes)", a.len()),
    )
}

fn criterion_10() -> Outcome {
    let tol = 1e-6;
    let mut worst_ratio: f64 = 0.0;
    let mut cases = 0;
    for i in 0..8u64 {
        let n = 1 + (i as usize) % 4;
        let params = random_model(n, 1000 + i);
        let mut r = rng(1100 + i);
        for _ in 0..2 {
            let l: Array1<f64> = (0..2).map(|_| r.random_range(-1.5..1.5)).collect();
            let total: f64 = patterns(n)
                .map(|b| {
                    params
                        .log_likelihood_obs(&Observation { b, l: l.clone() }, tol, i)
                        .unwrap()
                        .value
                        .exp()
                })
                .sum();
            let bound = 4.0 * tol * (1u64 << n) as f64;
            worst_ratio = worst_ratio.max((total - 1.0).abs() / bound);
            cases += 1;
        }
    }
    outcome(
        worst_ratio <= 1.0,
        format!(
            "{cases} (model, site) cases; worst |Σ − 1| is {worst_ratio:.3} of the 4·tol·2ⁿ bound"
        ),
    )
}

fn main() {
    let budgets = [30, 120, 120, 5, 30, 600, 600, 600, 60, 60].map(Duration::from_secs);
    let titles = [
        "MVN CDF oracle",
        "gradient vs finite differences",
        "end-to-end parameter gradients",
        "MLP gradient check",
        "marginal invariance",
        "correlation recovery",
        "joint beats independent",
        "deep beats linear",
        "determinism and checkpoint round-trip",
        "normalization over patterns",
    ];
    let mut results: Vec<(Outcome, Duration)> = Vec::new();
    let timed = |f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        (o, start.elapsed())
    };
    results.push(timed(&mut criterion_1));
    results.push(timed(&mut criterion_2));
    results.push(timed(&mut criterion_3));
    results.push(timed(&mut criterion_4));
    results.push(timed(&mut criterion_5));
    let mut handoff = None;
    results.push(timed(&mut || {
        let (o, keep) = criterion_6();
        handoff = keep;
        o
    }));
    results.push(timed(&mut || criterion_7(handoff.take())));
    results.push(timed(&mut criterion_8));
    results.push(timed(&mut criterion_9));
    results.push(timed(&mut criterion_10));

    let mut failures = 0;
    println!();
    for (i, ((o, elapsed), budget)) in results.iter().zip(budgets).enumerate() {
        let in_time = *elapsed <= budget;
        let pass = o.pass && in_time;
        failures += usize::from(!pass);
        println!(
            "criterion {:>2} {} {}: {} [{:.1}s of {}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            titles[i],
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failures,
        results.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
