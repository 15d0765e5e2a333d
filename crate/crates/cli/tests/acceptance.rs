//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use uqnet_core::data::{synthesize_population, PopulationConfig};
use uqnet_core::eval::report::from_json;
use uqnet_core::eval::{auroc, loso_partition, ExperimentReport, Measure, Population};
use uqnet_core::inference::{mc_sample_predictions, PredictionSamples, StochasticModel};
use uqnet_core::measures::{expected_entropy, mutual_information, predictive_entropy, scores};
use uqnet_core::nn::kl::kl_mixture_mc;
use uqnet_core::nn::{
    build_variant, check_gradients, flipout_dense_forward, one_hot, rbf_forward, Activation, ArchConfig, LayerSpec,
    LossKind, MixturePrior, NetworkSpec, ParamSet, Variant,
};
use uqnet_core::par::Exec;
use uqnet_core::real::softplus_inv;
use uqnet_core::rng;
use uqnet_core::train::Method;
use uqnet_core::Tensor;

type Outcome = Result<String, String>;
type UnitCriterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_samples(r: &mut rng::Rng, t: usize, n: usize, k: usize) -> PredictionSamples {
    let sharp = 0.1 + 6.0 * rng::uniform(r);
    let mut probs = Vec::with_capacity(t * n * k);
    for _ in 0..t * n {
        let w: Vec<f64> = (0..k).map(|_| (sharp * rng::normal(r)).exp()).collect();
        let z: f64 = w.iter().sum();
        probs.extend(w.iter().map(|v| v / z));
    }
    PredictionSamples::new(t, n, k, probs, "random").unwrap()
}

fn c1_entropy_identities() -> Outcome {
    let uniform = PredictionSamples::new(1, 1, 4, vec![0.25; 4], "u").unwrap();
    let pe_u = predictive_entropy(&uniform)[0];
    ensure((pe_u - 4f64.ln()).abs() <= 1e-9, format!("uniform PE {pe_u}"))?;
    let hot = PredictionSamples::new(1, 1, 4, vec![0.0, 0.0, 1.0, 0.0], "h").unwrap();
    ensure(predictive_entropy(&hot)[0].abs() <= 1e-9, "one-hot PE not 0")?;
    let dis = PredictionSamples::new(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0], "d").unwrap();
    let s = scores(&dis);
    let (pe, ee, mi) = (s.predictive_entropy[0], s.expected_entropy[0], s.mutual_information[0]);
    let ln2 = 2f64.ln();
    ensure(
        (pe - ln2).abs() <= 1e-9 && ee.abs() <= 1e-9 && (mi - ln2).abs() <= 1e-9,
        format!("disagreeing one-hots gave ({pe}, {ee}, {mi})"),
    )?;
    Ok(format!("PE(uniform)={pe_u:.12}, (PE,EE,MI)=({pe:.12}, {ee:.1e}, {mi:.12})"))
}

fn c2_jensen() -> Outcome {
    let mut r = rng::seeded(2);
    let (mut min_gap, mut min_mi) = (f64::INFINITY, f64::INFINITY);
    for i in 0..1000 {
        let t = 1 + (rng::uniform(&mut r) * 50.0) as usize;
        let k = 2 + (rng::uniform(&mut r) * 7.0) as usize;
        let s = random_samples(&mut r, t.min(50), 3, k.min(8));
        let (pe, ee, mi) = (predictive_entropy(&s), expected_entropy(&s), mutual_information(&s));
        for n in 0..3 {
            ensure(ee[n] <= pe[n] + 1e-9, format!("instance {i}: EE {} > PE {}", ee[n], pe[n]))?;
            ensure(mi[n] >= -1e-12, format!("instance {i}: MI {}", mi[n]))?;
            min_gap = min_gap.min(pe[n] - ee[n]);
            min_mi = min_mi.min(mi[n]);
        }
    }
    Ok(format!("1000 instances, min(PE-EE)={min_gap:.2e}, min MI={min_mi:.2e}"))
}

fn small_arch() -> ArchConfig {
    ArchConfig {
        temporal_filters: 4,
        temporal_kernel: 5,
        spatial_filters: 4,
        pool_size: 10,
        pool_stride: 5,
        flipout_hidden: 5,
        duq_hidden: 8,
        duq_centroid_dim: 6,
        ..Default::default()
    }
}

fn c3_collapse() -> Outcome {
    let mut r = rng::seeded(3);
    for _ in 0..500 {
        let k = 2 + (rng::uniform(&mut r) * 7.0) as usize;
        let s = scores(&random_samples(&mut r, 1, 4, k.min(8)));
        ensure(s.predictive_entropy == s.expected_entropy, "PE != EE for T=1")?;
        ensure(s.mutual_information.iter().all(|&m| m == 0.0), "MI != 0 for T=1")?;
    }
    let net = build_variant(Variant::Dropout, 3, 60, 4, &small_arch()).unwrap();
    let params = ParamSet::<f32>::init(&net, &mut rng::seeded(4)).unwrap();
    let model = StochasticModel::new(net, params, Variant::Dropout).unwrap();
    let x = Tensor::from_fn(&[16, 3, 60], |_| rng::normal(&mut r) as f32);
    let s = scores(&mc_sample_predictions(&model, &x, 1, &mut r, Exec::Sequential).unwrap());
    ensure(s.predictive_entropy == s.expected_entropy, "standard dropout model: PE != EE")?;
    ensure(s.mutual_information.iter().all(|&m| m == 0.0), "standard dropout model: MI != 0")?;
    Ok("500 random T=1 sample sets and a standard-dropout model: PE == EE bitwise, MI == 0".into())
}

fn pairwise_auroc(scores: &[f64], pos: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if pos[i] && !pos[j] {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn c4_auroc_oracle() -> Outcome {
    let mut r = rng::seeded(4);
    let (mut done, mut worst) = (0, 0.0f64);
    while done < 100 {
        let n = 2 + (rng::uniform(&mut r) * 199.0) as usize;
        let levels = 1 + (rng::uniform(&mut r) * 8.0) as usize;
        let s: Vec<f64> = (0..n).map(|_| (rng::uniform(&mut r) * levels as f64).floor() / 4.0).collect();
        let p: Vec<bool> = (0..n).map(|_| rng::uniform(&mut r) < 0.4).collect();
        if p.iter().all(|&x| x) || p.iter().all(|&x| !x) {
            continue;
        }
        let d = (auroc(&s, &p).map_err(|e| e.to_string())? - pairwise_auroc(&s, &p)).abs();
        worst = worst.max(d);
        ensure(d <= 1e-12, format!("instance {done} (n={n}) differs by {d:e}"))?;
        done += 1;
    }
    Ok(format!("100 instances, n <= 200, max |diff| = {worst:.1e}"))
}

fn custom_net(layers: Vec<LayerSpec>, channels: usize, timesteps: usize, classes: usize) -> NetworkSpec {
    let loss = if matches!(layers.last(), Some(LayerSpec::Rbf { .. })) {
        LossKind::BinaryCe
    } else {
        LossKind::CategoricalCe
    };
    NetworkSpec {
        layers,
        channels,
        timesteps,
        classes,
        loss,
    }
}

fn gradcheck(net: &NetworkSpec, n: usize, seed: u64) -> Result<f64, String> {
    net.validate().map_err(|e| e.to_string())?;
    let mut p = ParamSet::<f64>::init(net, &mut rng::seeded(seed)).map_err(|e| e.to_string())?;
    let mut r = rng::seeded(seed ^ 0x5eed);
    for (layer, lp) in net.layers.iter().zip(&mut p.layers) {
        for (ti, t) in lp.tensors.iter_mut().enumerate() {
            if matches!(layer, LayerSpec::Batchnorm { .. }) && ti >= 2 {
                continue;
            }
            t.data_mut().iter_mut().for_each(|v| *v += 0.1 * rng::normal(&mut r));
        }
    }
    let x = Tensor::from_fn(&[n, net.channels, net.timesteps], |_| rng::normal(&mut r));
    let labels: Vec<usize> = (0..n).map(|i| i % net.classes).collect();
    let rep = check_gradients(net, &p, &x, &one_hot(&labels, net.classes), 1e-5, seed + 1).map_err(|e| e.to_string())?;
    Ok(rep.max_rel_error)
}

fn c5_gradients() -> Outcome {
    let dense = |units, activation| LayerSpec::Dense { units, activation };
    let bn = LayerSpec::Batchnorm { momentum: 0.1, eps: 1e-5 };
    let cases: Vec<(&str, NetworkSpec, usize)> = vec![
        (
            "conv2d+dense+relu",
            custom_net(
                vec![
                    LayerSpec::Conv2d { filters: 2, kernel: (2, 3), bias: true },
                    dense(4, Activation::Relu),
                    dense(3, Activation::Linear),
                    LayerSpec::Softmax,
                ],
                3,
                7,
                3,
            ),
            3,
        ),
        (
            "batchnorm",
            custom_net(
                vec![
                    LayerSpec::Conv2d { filters: 3, kernel: (1, 3), bias: false },
                    bn.clone(),
                    dense(4, Activation::Linear),
                    LayerSpec::Square,
                    bn,
                    dense(3, Activation::Linear),
                    LayerSpec::Softmax,
                ],
                2,
                6,
                3,
            ),
            5,
        ),
        (
            "square+avgpool+log",
            custom_net(
                vec![
                    LayerSpec::Conv2d { filters: 2, kernel: (1, 3), bias: true },
                    LayerSpec::Square,
                    LayerSpec::Avgpool { size: (1, 4), stride: (1, 2) },
                    LayerSpec::Log { floor: 1e-6 },
                    dense(3, Activation::Linear),
                    LayerSpec::Softmax,
                ],
                2,
                12,
                3,
            ),
            3,
        ),
        (
            "dropout",
            custom_net(
                vec![dense(6, Activation::Linear), LayerSpec::Dropout { rate: 0.3 }, dense(3, Activation::Linear), LayerSpec::Softmax],
                2,
                4,
                3,
            ),
            4,
        ),
        (
            "dropconnect",
            custom_net(
                vec![
                    LayerSpec::Conv2d { filters: 3, kernel: (2, 2), bias: true },
                    LayerSpec::Dropconnect { rate: 0.3 },
                    dense(3, Activation::Linear),
                    LayerSpec::Dropconnect { rate: 0.2 },
                    LayerSpec::Softmax,
                ],
                2,
                5,
                3,
            ),
            4,
        ),
        (
            "flipout",
            custom_net(
                vec![
                    dense(5, Activation::Relu),
                    LayerSpec::FlipoutDense { units: 4, activation: Activation::Relu },
                    LayerSpec::FlipoutDense { units: 3, activation: Activation::Linear },
                    LayerSpec::Softmax,
                ],
                2,
                3,
                3,
            ),
            4,
        ),
        (
            "rbf",
            custom_net(
                vec![dense(5, Activation::Relu), LayerSpec::Rbf { centroid_dim: 4, length_scale: 0.4 }],
                2,
                3,
                3,
            ),
            4,
        ),
    ];
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for (name, net, n) in &cases {
        let e = gradcheck(net, *n, 50)?;
        ensure(e < 1e-4, format!("{name}: max rel error {e:e}"))?;
        worst = worst.max(e);
        parts.push(format!("{name} {e:.1e}"));
    }
    for v in [Variant::McDropout, Variant::Duq] {
        let net = build_variant(v, 3, 60, 4, &small_arch()).map_err(|e| e.to_string())?;
        let e = gradcheck(&net, 4, 60)?;
        ensure(e < 1e-4, format!("full {v}: max rel error {e:e}"))?;
        worst = worst.max(e);
        parts.push(format!("{v}(C=3,S=60) {e:.1e}"));
    }
    Ok(format!("max rel error {worst:.1e} [{}]", parts.join(", ")))
}

fn c6_flipout() -> Outcome {
    let (n, inputs, units) = (3, 4, 3);
    let mut r = rng::seeded(6);
    let x = Tensor::from_fn(&[n, inputs], |_| rng::normal(&mut r));
    let w_mu = Tensor::from_fn(&[inputs, units], |_| rng::normal(&mut r));
    let w_rho = Tensor::full(&[inputs, units], softplus_inv(0.3));
    let b_mu = Tensor::from_fn(&[units], |_| rng::normal(&mut r));
    let b_rho = Tensor::full(&[units], softplus_inv(0.1));
    let det = flipout_dense_forward(&x, &w_mu, &w_rho, &b_mu, &b_rho, None).unwrap();
    let calls = 10_000;
    let (mut sum, mut sq) = (vec![0.0; n * units], vec![0.0; n * units]);
    let mut noise = rng::seeded(66);
    for _ in 0..calls {
        let y = flipout_dense_forward(&x, &w_mu, &w_rho, &b_mu, &b_rho, Some(&mut noise)).unwrap();
        for (j, &v) in y.data().iter().enumerate() {
            sum[j] += v;
            sq[j] += v * v;
        }
    }
    let t = calls as f64;
    let mut worst_z = 0.0f64;
    for j in 0..n * units {
        let mean = sum[j] / t;
        let se = ((sq[j] / t - mean * mean) * t / (t - 1.0) / t).sqrt();
        let z = (mean - det.data()[j]).abs() / se;
        worst_z = worst_z.max(z);
        ensure(z <= 3.0, format!("output {j}: |mean - x mu - b| = {z:.2} SE"))?;
    }
    let zero = Tensor::full(&[inputs, units], -800.0);
    let zero_b = Tensor::full(&[units], -800.0);
    let base = flipout_dense_forward(&x, &w_mu, &zero, &b_mu, &zero_b, None).unwrap();
    for _ in 0..100 {
        let y = flipout_dense_forward(&x, &w_mu, &zero, &b_mu, &zero_b, Some(&mut noise)).unwrap();
        ensure(y.data() == base.data(), "zero-sigma posterior varies between calls")?;
    }
    Ok(format!("{} outputs, worst deviation {worst_z:.2} SE; zero sigma: 100 identical calls", n * units))
}

fn c7_kl() -> Outcome {
    let prior = MixturePrior::default();
    let ln_sqrt_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let log_q = |w: f64| -0.5 * w * w - ln_sqrt_2pi;
    let (a, b, steps) = (-15.0, 15.0, 30_000);
    let h = (b - a) / steps as f64;
    let f = |w: f64| log_q(w).exp() * (log_q(w) - prior.log_prob(w));
    let mut quad = f(a) + f(b);
    for i in 1..steps {
        quad += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    quad *= h / 3.0;
    let est = kl_mixture_mc(&[0.0], &[softplus_inv(1.0)], &prior, &mut rng::seeded(7), 10_000).map_err(|e| e.to_string())?;
    let z = (est.value - quad).abs() / est.std_error;
    ensure(z <= 3.0, format!("MC {} vs quadrature {quad}: {z:.2} SE", est.value))?;
    Ok(format!("MC {:.5} ± {:.5} vs quadrature {quad:.5} ({z:.2} SE)", est.value, est.std_error))
}

fn c8_duq() -> Outcome {
    let sigma = 0.4f64;
    let m = 4;
    let proj = |k: usize| Tensor::from_fn(&[k, m, m], |i| if (i % (m * m)) / m == i % m { 1.0 } else { 0.0 });
    let f = vec![0.1, -0.3, 0.25, 0.6];
    let off = (2.0 * sigma * sigma).sqrt();
    let cent = Tensor::new(vec![2, m], [f.clone(), f.iter().map(|v| v + off).collect()].concat()).unwrap();
    let k = rbf_forward(&Tensor::new(vec![1, m], f).unwrap(), &proj(2), &cent, sigma).unwrap();
    ensure(k.data()[0] == 1.0, format!("kernel at centroid {}", k.data()[0]))?;
    ensure((k.data()[1] - 0.367_879).abs() < 1e-6, format!("kernel at unit distance {}", k.data()[1]))?;

    let (n, classes) = (50, 4);
    let mut r = rng::seeded(8);
    let feats = Tensor::from_fn(&[n, m], |_| rng::normal(&mut r));
    let cents = Tensor::from_fn(&[classes, m], |_| rng::normal(&mut r));
    let kern = rbf_forward(&feats, &proj(classes), &cents, sigma).unwrap();
    let unc: Vec<f64> = kern.data().chunks(classes).map(|row| -row.iter().cloned().fold(f64::MIN, f64::max)).collect();
    let dist: Vec<f64> = (0..n)
        .map(|i| {
            (0..classes)
                .map(|c| feats.row(i).iter().zip(cents.row(c)).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let order = |v: &[f64]| {
        let mut ix: Vec<usize> = (0..v.len()).collect();
        ix.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        ix
    };
    ensure(order(&unc) == order(&dist), "uncertainty ranking differs from nearest-centroid distance ranking")?;
    Ok(format!("K(centroid)=1, K(unit)={:.6}, ordering of {n} trials matches distance oracle", k.data()[1]))
}

fn c9_split() -> Outcome {
    let data = synthesize_population(&PopulationConfig {
        subjects: 9,
        trials_per_class: 72,
        channels: 2,
        timesteps: 8,
        ..Default::default()
    })
    .unwrap();
    for held in 0..9u8 {
        let s = loso_partition(&data, held, 0.1, 0.1, &mut rng::seeded(held as u64)).map_err(|e| e.to_string())?;
        let ix = &s.indices;
        let mut all: Vec<usize> = [&ix.train, &ix.validation, &ix.within_population, &ix.cross_population]
            .into_iter()
            .flatten()
            .copied()
            .collect();
        all.sort_unstable();
        ensure(all == (0..data.len()).collect::<Vec<_>>(), format!("subject {held}: not a disjoint cover"))?;
        let cross: Vec<usize> = (0..data.len()).filter(|&i| data.subject_ids[i] == held).collect();
        ensure(ix.cross_population == cross, format!("subject {held}: cross set is not exactly the held-out trials"))?;
        for subj in (0..9u8).filter(|&x| x != held) {
            for class in 0..4u8 {
                let c = ix
                    .within_population
                    .iter()
                    .filter(|&&i| data.subject_ids[i] == subj && data.labels[i] == class)
                    .count();
                ensure(c == 7, format!("subject {subj} class {class}: {c} within trials, want 7"))?;
            }
        }
    }
    Ok("9 held-out subjects: disjoint cover, exact cross set, 28 within trials (7 per class) per remaining subject".into())
}

struct BenchRun {
    dir: PathBuf,
    report: ExperimentReport,
    tables: String,
}

fn run_benchmark(root: &Path, seed: u64, jobs: &str) -> Result<BenchRun, String> {
    let cfg = benchmark_config();
    let dir = root.join(format!("seed{seed}-j{jobs}"));
    let seed_s = seed.to_string();
    for cmd in ["generate", "train", "evaluate"] {
        let out = uqnet(&[cmd, "--config", s(&cfg), "--out", s(&dir), "--seed", &seed_s, "--jobs", jobs]);
        if !out.status.success() {
            return Err(format!("seed {seed}: {cmd} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    let out = uqnet(&["report", "--report", s(&dir.join("report.json"))]);
    if !out.status.success() {
        return Err(format!("seed {seed}: report failed"));
    }
    let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    Ok(BenchRun {
        dir,
        report: from_json(&text).map_err(|e| e.to_string())?,
        tables: String::from_utf8_lossy(&out.stdout).into_owned(),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Table rows for `method` in the order accuracy, within AUROC, cross AUROC.
fn table_rows<'a>(tables: &'a str, method: &str) -> Vec<Vec<&'a str>> {
    tables
        .lines()
        .filter_map(|l| {
            let cols: Vec<&str> = l.split(" | ").map(str::trim).collect();
            (cols[0] == method).then_some(cols)
        })
        .collect()
}

fn c10_end_to_end(runs: &[BenchRun], elapsed: Duration) -> Outcome {
    let subjects = runs[0].report.subjects.len();
    ensure(subjects >= 5 && runs.len() >= 5, format!("{subjects} subjects, {} seeds", runs.len()))?;
    ensure(elapsed < Duration::from_secs(600), format!("took {elapsed:?}"))?;
    ensure(runs.iter().all(|r| r.report.failed_cells() == 0), "failed cells in benchmark run")?;

    let mut lines = Vec::new();
    let (mut all_within, mut all_cross) = (Vec::new(), Vec::new());
    for m in Method::ALL {
        let agg = |f: &dyn Fn(&ExperimentReport) -> Option<f64>| -> Result<f64, String> {
            let v: Option<Vec<f64>> = runs.iter().map(|r| f(&r.report)).collect();
            v.map(|v| mean(&v)).ok_or_else(|| format!("{m}: missing aggregate"))
        };
        let within = agg(&|r| r.aggregate(m)?.within_accuracy.map(|a| a.mean))?;
        let cross = agg(&|r| r.aggregate(m)?.cross_accuracy.map(|a| a.mean))?;
        let primary = if m == Method::Duq { Measure::Uncertainty } else { Measure::PredictiveEntropy };
        let pe = agg(&|r| {
            r.aggregate(m)?
                .auroc
                .iter()
                .find(|a| a.measure == primary && a.population == Population::Within)?
                .value
                .map(|v| v.mean)
        })?;
        ensure(within > 0.25 && cross > 0.25, format!("(a) {m}: within {within:.3}, cross {cross:.3} not above chance"))?;
        ensure(pe > 0.5, format!("(c) {m}: within-population AUROC {pe:.3}"))?;
        all_within.push(within);
        all_cross.push(cross);
        lines.push(format!("{m} {:.1}/{:.1}/{:.1}", within * 100.0, cross * 100.0, pe * 100.0));
    }
    let (w, c) = (mean(&all_within), mean(&all_cross));
    ensure(w > c, format!("(b) mean within accuracy {w:.3} <= cross {c:.3}"))?;

    for run in runs {
        for m in Method::ALL {
            let rows = table_rows(&run.tables, m.name());
            ensure(rows.len() == 3, format!("(d) {m}: {} table rows", rows.len()))?;
            ensure(rows[0][1..].iter().all(|c| c.contains(" ± ")), format!("(d) {m}: accuracy cell missing"))?;
            for row in &rows[1..] {
                let filled: Vec<bool> = row[1..].iter().map(|c| *c != "-").collect();
                let want = match m {
                    Method::Duq => vec![true, false, false],
                    m if m.is_standard() => vec![true, true, false],
                    _ => vec![true, true, true],
                };
                ensure(filled == want, format!("(d) {m}: AUROC cells {filled:?}, want {want:?}"))?;
            }
        }
    }
    Ok(format!(
        "{} seeds x {subjects} subjects in {:.0}s; within {:.1} > cross {:.1}; within/cross/AUROC: {}",
        runs.len(),
        elapsed.as_secs_f64(),
        w * 100.0,
        c * 100.0,
        lines.join(", ")
    ))
}

fn c11_determinism(first: &BenchRun, root: &Path) -> Outcome {
    let again = run_benchmark(root, first.report.master_seed, "2")?;
    let files = [
        "data.epoc",
        "data.json",
        "checkpoints/manifest.json",
        "report.json",
        "accuracy.csv",
        "auroc.csv",
        "rejection_within.svg",
        "rejection_cross.svg",
    ];
    for f in files {
        let a = std::fs::read(first.dir.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(again.dir.join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(a == b, format!("{f} differs between reruns"))?;
    }
    ensure(first.tables == again.tables, "console tables differ")?;
    Ok(format!("{} output files byte-identical across reruns (--jobs 1 vs --jobs 2)", files.len()))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    })
}

fn report_line(id: u32, name: &str, started: Instant, result: &Outcome) -> bool {
    let t = started.elapsed().as_secs_f64();
    match result {
        Ok(detail) => println!("criterion {id:>2} PASS  {name} ({t:.1}s): {detail}"),
        Err(why) => println!("criterion {id:>2} FAIL  {name} ({t:.1}s): {why}"),
    }
    result.is_ok()
}

fn main() {
    let unit: [UnitCriterion; 9] = [
        (1, "entropy identities", c1_entropy_identities),
        (2, "Jensen property", c2_jensen),
        (3, "deterministic-model collapse", c3_collapse),
        (4, "AUROC pairwise oracle", c4_auroc_oracle),
        (5, "gradient checks", c5_gradients),
        (6, "flipout unbiasedness", c6_flipout),
        (7, "KL quadrature oracle", c7_kl),
        (8, "DUQ head", c8_duq),
        (9, "LOSO split contract", c9_split),
    ];
    let mut passed = 0;
    let mut total = 0;
    for (id, name, f) in unit {
        let t = Instant::now();
        let r = guarded(f);
        total += 1;
        passed += report_line(id, name, t, &r) as usize;
    }

    let root = tempfile::tempdir().expect("temp dir");
    let t = Instant::now();
    let runs: Result<Vec<BenchRun>, String> = (0..5).map(|seed| run_benchmark(root.path(), seed, "1")).collect();
    let elapsed = t.elapsed();
    let r10 = match &runs {
        Ok(runs) => guarded(|| c10_end_to_end(runs, elapsed)),
        Err(e) => Err(e.clone()),
    };
    total += 1;
    passed += report_line(10, "end-to-end synthetic LOSO", t, &r10) as usize;

    let t = Instant::now();
    let r11 = match &runs {
        Ok(runs) => guarded(|| c11_determinism(&runs[0], root.path())),
        Err(_) => Err("no benchmark run to compare".into()),
    };
    total += 1;
    passed += report_line(11, "determinism", t, &r11) as usize;

    println!("acceptance: {passed}/{total} criteria passed");
    if passed != total {
        std::process::exit(1);
    }
}
