//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rpn::distributions::{sample_nw, NormalParams, NormalWishartParams};
use rpn::eval::{auc_roc, prr, rejection_curve};
use rpn::experiments::models::distill_constant;
use rpn::experiments::verification::run_verification;
use rpn::experiments::{run, ExperimentConfig};
use rpn::linalg::{cholesky, Matrix, SymPD};
use rpn::losses::graph::{self as lg, MemberBatch};
use rpn::losses::{self, PriorConfig};
use rpn::nn::{Graph, HeadKind, HeadOutput, HeadVars, Mlp, MlpConfig, Var};
use rpn::uncertainty::{epkl, expected_data_entropy, mutual_information, predictive_entropy, variance_decomposition};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_pd(r: &mut ChaCha8Rng, k: usize) -> SymPD {
    let a = Matrix::from_vec(k, k, (0..k * k).map(|_| r.sample(StandardNormal)).collect()).unwrap();
    let mut s = a.matmul(&a.transpose()).unwrap();
    for i in 0..k {
        s[(i, i)] += 0.3;
    }
    cholesky(&s.scale(r.random_range(0.2..3.0))).unwrap()
}

fn random_nw(r: &mut ChaCha8Rng, k: usize) -> NormalWishartParams {
    let m = (0..k).map(|_| r.sample(StandardNormal)).collect();
    let l = random_pd(r, k);
    let kappa = r.random_range(-4.0f64..4.0).exp();
    let nu = k as f64 + 1.0 + r.random_range(0.05f64..50.0);
    NormalWishartParams::new(m, l, kappa, nu).unwrap()
}

fn random_normal(r: &mut ChaCha8Rng, k: usize) -> NormalParams {
    NormalParams::new((0..k).map(|_| r.sample(StandardNormal)).collect(), random_pd(r, k)).unwrap()
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.sample(StandardNormal)).collect()).unwrap()
}

// 1
fn mc_verification() -> Outcome {
    let start = Instant::now();
    let report = run_verification(1_000_000, 0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst = report
        .summary
        .iter()
        .map(|s| format!("{:?}={:.2}", s.formula, s.max_abs_z))
        .collect::<Vec<_>>()
        .join(" ");
    let msg = format!(
        "max |z| {:.3} over 10 formulas x 20 settings, {secs:.0}s ({worst})",
        report.max_abs_z
    );
    if report.pass && secs <= 300.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 2
fn relative_gap(model: &Mlp, graph_loss: &dyn Fn(&mut Graph, &Mlp) -> Var, loss: &dyn Fn(&Mlp) -> f64) -> f64 {
    let shapes = model.param_shapes();
    let mut g = Graph::new();
    let l = graph_loss(&mut g, model);
    g.backward(l).unwrap();
    let grads = g.param_grads(&shapes);
    let h = 1e-6;
    let (mut num, mut den) = (0.0, 0.0);
    for (p, grad) in grads.iter().enumerate() {
        for e in 0..grad.as_slice().len() {
            let mut plus = model.clone();
            plus.params_mut()[p].as_mut_slice()[e] += h;
            let mut minus = model.clone();
            minus.params_mut()[p].as_mut_slice()[e] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            num += (grad.as_slice()[e] - fd).powi(2);
            den += fd * fd;
        }
    }
    (num / den).sqrt()
}

fn net(r: &mut ChaCha8Rng, head: HeadKind) -> Mlp {
    let cfg = MlpConfig {
        input_dim: 2,
        hidden_sizes: vec![4],
        activation: Default::default(),
        head,
        output_dim: 2,
    };
    Mlp::new(cfg, r).unwrap()
}

fn gaussians(m: &Mlp, x: &Matrix) -> Vec<NormalParams> {
    m.predict(x)
        .unwrap()
        .into_iter()
        .map(|h| match h {
            HeadOutput::Gaussian(p) => p,
            _ => unreachable!(),
        })
        .collect()
}

fn omegas(m: &Mlp, x: &Matrix) -> Vec<NormalWishartParams> {
    m.predict(x)
        .unwrap()
        .into_iter()
        .map(|h| match h {
            HeadOutput::NormalWishart(o) => o,
            _ => unreachable!(),
        })
        .collect()
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let b = 4;
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut record = |name: &str, gap: f64| match worst.iter_mut().find(|w| w.0 == name) {
        Some(w) => w.1 = w.1.max(gap),
        None => worst.push((name.to_string(), gap)),
    };
    for point in 0..10u64 {
        let mut r = rng(100 + point);
        let x = random_matrix(&mut r, b, 2);
        let y = random_matrix(&mut r, b, 2);
        let ood = random_matrix(&mut r, b, 2).scale(3.0);
        let members: Vec<Vec<NormalParams>> = (0..b)
            .map(|_| (0..3).map(|_| random_normal(&mut r, 2)).collect())
            .collect();
        let targets: Vec<Vec<f64>> = (0..b).map(|i| y.row(i).to_vec()).collect();
        let prior = PriorConfig::from_targets(&targets, 1e-2, 10.0, 0.5).unwrap();
        let mean = |g: &mut Graph, v: Var| g.mean(v);

        let m = net(&mut r, HeadKind::Gaussian);
        record(
            "gaussian_nll",
            relative_gap(
                &m,
                &|g, m| {
                    let HeadVars::Gaussian(q) = m.graph_forward(g, &x).unwrap() else {
                        unreachable!()
                    };
                    let v = lg::gaussian_nll(g, &q, &y).unwrap();
                    mean(g, v)
                },
                &|m| {
                    gaussians(m, &x)
                        .iter()
                        .zip(&targets)
                        .map(|(p, t)| losses::gaussian_nll(p, t).unwrap())
                        .sum::<f64>()
                        / b as f64
                },
            ),
        );
        record(
            "end_loss",
            relative_gap(
                &m,
                &|g, m| {
                    let HeadVars::Gaussian(q) = m.graph_forward(g, &x).unwrap() else {
                        unreachable!()
                    };
                    let v = lg::end(g, &q, &MemberBatch::new(&members).unwrap()).unwrap();
                    mean(g, v)
                },
                &|m| {
                    gaussians(m, &x)
                        .iter()
                        .zip(&members)
                        .map(|(p, ms)| losses::end_loss(p, ms).unwrap())
                        .sum::<f64>()
                        / b as f64
                },
            ),
        );

        let m = net(&mut r, HeadKind::Mixture { components: 3 });
        record(
            "md_end_loss",
            relative_gap(
                &m,
                &|g, m| {
                    let HeadVars::Mixture(cs) = m.graph_forward(g, &x).unwrap() else {
                        unreachable!()
                    };
                    let v = lg::md_end(g, &cs, &MemberBatch::new(&members).unwrap()).unwrap();
                    mean(g, v)
                },
                &|m| {
                    m.predict(&x)
                        .unwrap()
                        .iter()
                        .zip(&members)
                        .map(|(h, ms)| match h {
                            HeadOutput::Mixture(cs) => losses::md_end_loss(cs, ms).unwrap(),
                            _ => unreachable!(),
                        })
                        .sum::<f64>()
                        / b as f64
                },
            ),
        );

        let m = net(&mut r, HeadKind::NormalWishart);
        record(
            "rkl_loss",
            relative_gap(
                &m,
                &|g, m| {
                    let HeadVars::NormalWishart(o) = m.graph_forward(g, &x).unwrap() else {
                        unreachable!()
                    };
                    let v = lg::rkl(g, &o, &y, prior.beta_in, &prior.omega0).unwrap();
                    mean(g, v)
                },
                &|m| {
                    omegas(m, &x)
                        .iter()
                        .zip(&targets)
                        .map(|(o, t)| losses::rkl_loss(o, t, prior.beta_in, &prior.omega0).unwrap())
                        .sum::<f64>()
                        / b as f64
                },
            ),
        );
        record(
            "multitask_rkl",
            relative_gap(
                &m,
                &|g, m| lg::multitask_rkl(g, m, &x, &y, Some(&ood), &prior).unwrap(),
                &|m| losses::multitask_rkl(m, &x, &y, Some(&ood), &prior).unwrap(),
            ),
        );
        for t in [1.0, 5.0, 10.0] {
            record(
                &format!("endd_loss(T={t})"),
                relative_gap(
                    &m,
                    &|g, m| {
                        let HeadVars::NormalWishart(o) = m.graph_forward(g, &x).unwrap() else {
                            unreachable!()
                        };
                        let v = lg::endd(g, &o, &MemberBatch::tempered(&members, t).unwrap(), t).unwrap();
                        mean(g, v)
                    },
                    &|m| {
                        omegas(m, &x)
                            .iter()
                            .zip(&members)
                            .map(|(o, ms)| losses::endd_loss(o, ms, t).unwrap())
                            .sum::<f64>()
                            / b as f64
                    },
                ),
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = worst
        .iter()
        .map(|(n, v)| format!("{n}={v:.1e}"))
        .collect::<Vec<_>>()
        .join(" ");
    let msg = format!("max relative error {max:.2e} at 10 points, {secs:.1}s ({detail})");
    if max < 1e-4 && secs <= 60.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 3
fn decompositions() -> Outcome {
    let mut r = rng(3);
    let (mut ent_gap, mut var_gap, mut epkl_violations) = (0.0f64, 0.0f64, 0);
    for i in 0..10_000 {
        let o = random_nw(&mut r, 1 + i % 3);
        let total = predictive_entropy(&o).unwrap();
        let parts = expected_data_entropy(&o).unwrap() + mutual_information(&o).unwrap();
        ent_gap = ent_gap.max((total - parts).abs());
        let v = variance_decomposition(&o).unwrap();
        var_gap = var_gap.max(v.total.sub(&v.data.add(&v.knowledge).unwrap()).unwrap().max_abs());
        if epkl(&o).unwrap() < mutual_information(&o).unwrap() {
            epkl_violations += 1;
        }
    }
    let msg = format!("entropy gap {ent_gap:.1e}, variance gap {var_gap:.1e}, EPKL < MI in {epkl_violations} of 10000");
    if ent_gap <= 1e-12 && var_gap <= 1e-12 && epkl_violations == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 4
fn synthetic() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let start = Instant::now();
        let base = dir.path().join(format!("seed{seed}"));
        let load = |name: &str| {
            let mut c = ExperimentConfig::load(&workspace().join("configs").join(name), &[]).unwrap();
            c.seed = seed;
            c
        };
        let mut ens = load("synthetic_ensemble.json");
        ens.output_dir = base.join("ensemble");
        let mut nwpn = load("synthetic_nwpn.json");
        nwpn.output_dir = base.join("nwpn");
        let mut endd = load("synthetic_endd.json");
        endd.output_dir = base.join("endd");
        endd.distill.teacher_dir = Some(ens.output_dir.clone());
        let me = run(&ens).map_err(|e| e.to_string())?.metrics;
        let mn = run(&nwpn).map_err(|e| e.to_string())?.metrics;
        let md = run(&endd).map_err(|e| e.to_string())?.metrics;
        let secs = start.elapsed().as_secs_f64();
        let f = |v: &serde_json::Value, k: &str| v[k].as_f64().unwrap_or(f64::NAN);
        let a = f(&mn, "knowledge_ratio_right");
        let (be, bn) = (f(&me, "data_variance_argmax"), f(&mn, "data_variance_argmax"));
        let c = f(&md, "knowledge_ratio_ood");
        let pass = a >= 5.0 && be.abs() < 2.0 && bn.abs() < 2.0 && c >= 3.0 && secs <= 300.0;
        ok &= pass;
        lines.push(format!(
            "seed {seed}: (a) NWPN MI ratio {a:.1} (b) argmax ens {be:.1} nwpn {bn:.1} (c) EnD2 MI ratio {c:.1}, {secs:.0}s"
        ));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

// 5
fn wine() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let load = |name: &str, out: &str| {
        let mut c = ExperimentConfig::load(&workspace().join("configs").join(name), &[]).unwrap();
        if let rpn::experiments::DatasetSpec::Csv { path, .. } = &mut c.dataset {
            *path = workspace().join(&*path);
        }
        c.output_dir = dir.path().join(out);
        c
    };
    let ens = run(&load("wine_ensemble.json", "ensemble"))
        .map_err(|e| e.to_string())?
        .metrics;
    let nwpn = run(&load("wine_nwpn.json", "nwpn")).map_err(|e| e.to_string())?.metrics;
    let secs = start.elapsed().as_secs_f64();
    let g = |v: &serde_json::Value, k: &str| v[k]["mean"].as_f64().unwrap_or(f64::NAN);
    let (rmse, nll, nw_nll) = (g(&ens, "rmse"), g(&ens, "nll"), g(&nwpn, "nll"));
    let msg = format!(
        "ensemble RMSE {rmse:.3} (published 0.63), NLL {nll:.3} (published 0.96); NWPN NLL {nw_nll:.3} (published 0.93); {secs:.0}s"
    );
    if (0.58..=0.70).contains(&rmse) && (0.85..=1.10).contains(&nll) && (0.83..=1.05).contains(&nw_nll) && secs <= 900.0
    {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 6
fn prr_machinery() -> Outcome {
    let mut r = rng(6);
    let errors: Vec<f64> = (0..1000).map(|_| r.sample::<f64, _>(StandardNormal).powi(2)).collect();
    let oracle = prr(&rejection_curve(&errors, &errors).unwrap()).unwrap();
    let anti: Vec<f64> = errors.iter().map(|e| -e).collect();
    let anti = prr(&rejection_curve(&errors, &anti).unwrap()).unwrap();
    let mut scores: Vec<f64> = (0..errors.len()).map(|i| i as f64).collect();
    let mut sum = 0.0;
    for _ in 0..100 {
        scores.shuffle(&mut r);
        sum += prr(&rejection_curve(&errors, &scores).unwrap()).unwrap();
    }
    let random = sum / 100.0;
    let msg = format!("oracle {oracle}, random mean {random:.4}, anti-oracle {anti:.3}");
    if oracle == 1.0 && random.abs() <= 0.05 && anti < 0.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 7
fn auc() -> Outcome {
    let cases: [(&[f64], &[f64], f64); 5] = [
        (&[1.0, 2.0], &[3.0, 4.0], 1.0),
        (&[3.0, 4.0], &[1.0, 2.0], 0.0),
        (&[1.0, 3.0], &[2.0, 4.0], 0.75),
        (&[1.0, 1.0], &[1.0, 1.0], 0.5),
        (&[1.0, 2.0], &[2.0, 3.0], 0.875),
    ];
    for (a, b, want) in cases {
        let got = auc_roc(a, b).unwrap();
        if got != want {
            return Err(format!("AUC({a:?}, {b:?}) = {got}, expected {want}"));
        }
    }
    let mut r = rng(7);
    for _ in 0..100 {
        let n_in = r.random_range(1..50);
        let n_out = r.random_range(1..50);
        let a: Vec<f64> = (0..n_in).map(|_| (r.random_range(0..20) as f64) / 4.0).collect();
        let b: Vec<f64> = (0..n_out).map(|_| (r.random_range(0..20) as f64) / 4.0 + 1.0).collect();
        let t = |x: &f64| x.exp() * 3.0 + x.powi(3) - 7.0;
        let ta: Vec<f64> = a.iter().map(t).collect();
        let tb: Vec<f64> = b.iter().map(t).collect();
        if auc_roc(&a, &b).unwrap() != auc_roc(&ta, &tb).unwrap() {
            return Err("AUC changed under a monotone transform".into());
        }
    }
    Ok("5 hand-built cases exact; invariant under a monotone transform on 100 random score sets".into())
}

// 8
fn fit_recovery() -> Outcome {
    let start = Instant::now();
    let mut r = rng(8);
    let l = cholesky(&Matrix::from_rows(&[&[0.8, 0.3], &[0.3, 0.5]])).unwrap();
    let truth = NormalWishartParams::new(vec![0.5, -1.0], l, 2.0, 8.0).unwrap();
    let members: Vec<NormalParams> = (0..10_000)
        .map(|_| {
            let (mu, lam) = sample_nw(&truth, &mut r).unwrap();
            NormalParams::new(mu, lam).unwrap()
        })
        .collect();
    let fit = distill_constant(&members, 1.0, 3000, 0.02).map_err(|e| e.to_string())?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dm: Vec<f64> = fit.m.iter().zip(&truth.m).map(|(a, b)| a - b).collect();
    let em = norm(&dm) / norm(&truth.m);
    let el =
        fit.l.to_matrix().sub(&truth.l.to_matrix()).unwrap().frobenius_norm() / truth.l.to_matrix().frobenius_norm();
    let (ek, en) = (rel(fit.kappa, truth.kappa), rel(fit.nu, truth.nu));
    let msg = format!(
        "relative errors m {em:.3}, kappa {ek:.3}, nu {en:.3}, L {el:.3} from 10^4 members, {:.0}s",
        start.elapsed().as_secs_f64()
    );
    if em.max(ek).max(en).max(el) < 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("MC verification of closed forms", mc_verification),
        ("loss gradients vs finite differences", gradients),
        ("decomposition identities", decompositions),
        ("synthetic experiment, 3 seeds", synthetic),
        ("wine 10-fold reproduction", wine),
        ("PRR machinery", prr_machinery),
        ("AUC-ROC", auc),
        ("EnD2 fit recovery", fit_recovery),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if filter
            .as_ref()
            .is_some_and(|s| !s.split(',').any(|p| p == n.to_string()))
        {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(msg) => println!("criterion {n} PASS  {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
