//! Acceptance suite: one line per criterion, nonzero exit if any gated
//! criterion fails. Pass criterion numbers to run a subset, e.g.
//! `cargo test --release --test acceptance -- 1 3 6`.

mod dd;

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use lieflow::bridge::{bridge_error_study, DiffusionSchedule, PairSampling};
use lieflow::config::TargetSpec;
use lieflow::eval::{self, MixtureTarget, MODE_RADIUS};
use lieflow::igso3::{self, Igso3Sampler, SERIES_MAX_TERMS};
use lieflow::inference::{self, InferConfig};
use lieflow::net::{self, FlowParams, Head, LossInput, NetShape};
use lieflow::ot::{self, CostMatrix};
use lieflow::rng::stream;
use lieflow::so3::{self, Rotation};
use lieflow::training::{self, HaarPrior, TrainConfig, TrainStreams, TrainingTuple, Variant};
use lieflow::FrameSet;

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    /// Printed for the record, not gated.
    Report,
}

struct Suite {
    failures: Vec<String>,
}

impl Suite {
    fn line(&mut self, id: &str, name: &str, verdict: Verdict, detail: String) {
        let tag = match verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Report => "REPORT",
        };
        println!("[{tag}] criterion {id} {name}: {detail}");
        if verdict == Verdict::Fail {
            self.failures.push(id.to_string());
        }
    }

    fn gate(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        self.line(id, name, if ok { Verdict::Pass } else { Verdict::Fail }, detail);
    }
}

fn main() {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wants = |k: &str| selected.is_empty() || selected.iter().any(|s| s == k);
    let mut suite = Suite { failures: Vec::new() };
    let started = Instant::now();

    if wants("1") {
        lie_group_exactness(&mut suite);
    }
    if wants("2") {
        igso3_fidelity(&mut suite);
    }
    if wants("3") {
        exact_ot_oracle(&mut suite);
    }
    if wants("6") {
        gradient_check(&mut suite);
    }
    if wants("7") {
        sfm_degeneration(&mut suite);
    }
    if wants("4") {
        bridge_study(&mut suite);
    }
    if wants("5") || wants("8") {
        toy_generation(&mut suite, wants("5"), wants("8"));
    }

    println!("acceptance finished in {:.1?}", started.elapsed());
    if !suite.failures.is_empty() {
        println!("failed criteria: {}", suite.failures.join(", "));
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- criterion 1

fn random_rotvec(rng: &mut impl Rng, max_norm: f64) -> Vector3<f64> {
    so3::sample_unit_vector(rng) * rng.random_range(0.0..max_norm)
}

/// Matrix exponential by its power series.
fn exp_series(w: &Vector3<f64>) -> Matrix3<f64> {
    let a = so3::hat(w);
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for k in 1..60 {
        term = term * a / k as f64;
        sum += term;
    }
    sum
}

fn lie_group_exactness(suite: &mut Suite) {
    let t0 = Instant::now();
    let mut rng = stream(1, "acceptance.lie");
    let n = 5000;

    let mut roundtrip: f64 = 0.0;
    let edge = [0.0, 1e-12, 1e-9, 1e-7, 1e-6, 1e-3, 1.0, PI - 1e-3, PI - 1e-6];
    for k in 0..n {
        let w = if k < edge.len() {
            so3::sample_unit_vector(&mut rng) * edge[k]
        } else {
            random_rotvec(&mut rng, PI - 1e-6)
        };
        roundtrip = roundtrip.max((so3::log(&so3::exp(&w)) - w).norm());
    }

    let mut series: f64 = 0.0;
    for _ in 0..n {
        let w = random_rotvec(&mut rng, PI);
        let diff = so3::exp(&w).matrix() - exp_series(&w);
        series = series.max(diff.abs().max());
    }

    let mut speed: f64 = 0.0;
    for _ in 0..n {
        let r0 = so3::sample_uniform(&mut rng);
        let r1 = so3::sample_uniform(&mut rng);
        if so3::relative_angle(&r0, &r1) > PI - 1e-3 {
            continue;
        }
        let d = so3::geodesic_distance(&r0, &r1);
        let (s, t): (f64, f64) = (rng.random(), rng.random());
        let gs = so3::geodesic_interpolant(&r0, &r1, s);
        let gt = so3::geodesic_interpolant(&r0, &r1, t);
        speed = speed.max((so3::geodesic_distance(&gs, &gt) - (t - s).abs() * d).abs());
    }

    let mut metric_ok = true;
    for _ in 0..n {
        let a = so3::sample_uniform(&mut rng);
        let b = so3::sample_uniform(&mut rng);
        let c = so3::sample_uniform(&mut rng);
        let d = so3::geodesic_distance;
        metric_ok &= d(&a, &b) >= 0.0
            && d(&a, &a) <= 1e-9
            && (d(&a, &b) - d(&b, &a)).abs() <= 1e-9
            && d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9;
    }
    let elapsed = t0.elapsed().as_secs_f64();

    let ok = roundtrip <= 1e-8 && series <= 1e-12 && speed <= 1e-8 && metric_ok && elapsed < 5.0;
    suite.gate(
        "1",
        "Lie-group exactness",
        ok,
        format!(
            "exp/log roundtrip {roundtrip:.2e} (≤1e-8), Rodrigues vs series {series:.2e} (≤1e-12), \
             constant speed {speed:.2e} (≤1e-8), metric axioms {}, {elapsed:.2} s (<5 s)",
            if metric_ok { "hold" } else { "VIOLATED" }
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

/// Angle density of IGSO(3) from the double-double series.
fn oracle_angle_density(omega: f64, eps: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    dd::heat_kernel_series(omega, eps, SERIES_MAX_TERMS) * (1.0 - omega.cos()) / PI
}

/// Simpson's rule on `[a, b]` with `m` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn chi_squared_p(eps: f64, n: usize, seed: u64) -> f64 {
    let bins = 40;
    let width = PI / bins as f64;
    let mut probs: Vec<f64> = (0..bins)
        .map(|b| simpson(|w| oracle_angle_density(w, eps), b as f64 * width, (b + 1) as f64 * width, 64))
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);

    let mut sampler = Igso3Sampler::exact();
    let mut rng = stream(seed, "acceptance.igso3.chi2");
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let w = sampler.sample_angle(eps, &mut rng).unwrap();
        counts[((w / width) as usize).min(bins - 1)] += 1;
    }

    // merge sparse bins so every expected count is at least 5
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut e_acc, mut o_acc) = (0.0, 0.0);
    for b in 0..bins {
        e_acc += probs[b] * n as f64;
        o_acc += counts[b] as f64;
        if e_acc >= 5.0 {
            cells.push((e_acc, o_acc));
            e_acc = 0.0;
            o_acc = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += e_acc;
        last.1 += o_acc;
    }
    let stat: f64 = cells.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
    if cells.len() < 2 || !stat.is_finite() {
        return 0.0;
    }
    let df = (cells.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

fn igso3_fidelity(suite: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut worst_at = (0.0, 0.0);
    let eps_grid: Vec<f64> = (0..=20).map(|k| (0.05 * (20.0f64).powf(k as f64 / 20.0)).min(1.0)).collect();
    let m = 240;
    for &eps in &eps_grid {
        for k in 0..=m {
            let omega = 0.05 + (PI - 0.1) * k as f64 / m as f64;
            let oracle = dd::heat_kernel_series(omega, eps, SERIES_MAX_TERMS);
            let closed = igso3::density_closed(omega, eps).unwrap();
            let rel = (closed - oracle).abs() / oracle.abs();
            if rel > worst {
                worst = rel;
                worst_at = (omega, eps);
            }
        }
    }
    suite.gate(
        "2a",
        "IGSO(3) closed form vs 5000-term series",
        worst <= 1e-3,
        format!(
            "max relative error {worst:.2e} (≤1e-3) at ω={:.3}, ε={:.3}; ω ∈ [0.05, π−0.05], ε ∈ [0.05, 1]",
            worst_at.0, worst_at.1
        ),
    );

    let n = 100_000;
    let ps: Vec<(f64, f64)> = [0.05, 0.5, 1.0]
        .iter()
        .enumerate()
        .map(|(i, &eps)| (eps, chi_squared_p(eps, n, 11 + i as u64)))
        .collect();
    let ok = ps.iter().all(|&(_, p)| p > 0.01);
    suite.gate(
        "2b",
        "IGSO(3) sampler χ² vs series density",
        ok,
        ps.iter()
            .map(|(e, p)| format!("ε={e}: p={p:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
            + &format!(" (n={n}, need p>0.01)"),
    );
}

// ---------------------------------------------------------------- criterion 3

fn brute_force_min(c: &CostMatrix) -> f64 {
    fn rec(c: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        let n = c.n();
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                rec(c, row + 1, used, acc + c.get(row, j), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(c, 0, &mut vec![false; c.n()], 0.0, &mut best);
    best
}

fn exact_ot_oracle(suite: &mut Suite) {
    let mut rng = stream(3, "acceptance.ot");
    let mut worst: f64 = 0.0;
    let instances = 100;
    for k in 0..instances {
        let n = 1 + k % 8;
        let c = if k % 2 == 0 {
            CostMatrix::from_fn(n, |_, _| rng.random::<f64>())
        } else {
            let a: Vec<Rotation> = (0..n).map(|_| so3::sample_uniform(&mut rng)).collect();
            let b: Vec<Rotation> = (0..n).map(|_| so3::sample_uniform(&mut rng)).collect();
            ot::rotation_cost_matrix(&a, &b, 2).unwrap()
        };
        let plan = ot::solve_exact(&c).unwrap();
        let total = plan.objective(&c) * n as f64;
        worst = worst.max((total - brute_force_min(&c)).abs());
    }
    suite.gate(
        "3",
        "exact OT vs brute-force permutations",
        worst <= 1e-9,
        format!("{instances} instances, n ≤ 8, max |Δ| {worst:.2e} (≤1e-9)"),
    );
}

// ---------------------------------------------------------------- criterion 4

fn bridge_study(suite: &mut Suite) {
    let gammas = [0.1, 0.5, 1.0];
    let t0 = Instant::now();
    let curves = bridge_error_study(&gammas, 1024, 500, PairSampling::OtCoupled, 4).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let mut ok = elapsed <= 600.0;
    let mut parts = Vec::new();
    for c in &curves {
        let gap = c.relative_mean_gap();
        let disjoint = c.disjoint_band_points().len();
        ok &= gap <= 0.1 && disjoint == 0;
        parts.push(format!("γ={}: gap {:.1}% of peak, {disjoint} disjoint band points", c.gamma, 100.0 * gap));
    }
    suite.gate(
        "4",
        "bridge approximation study (OT-coupled pairs)",
        ok,
        format!("{}; {elapsed:.0} s (≤600 s); need gap ≤10% and 0 disjoint", parts.join("; ")),
    );

    let curves = bridge_error_study(&gammas, 1024, 500, PairSampling::Independent, 4).unwrap();
    let parts: Vec<String> = curves
        .iter()
        .map(|c| {
            format!(
                "γ={}: gap {:.1}%, {} disjoint",
                c.gamma,
                100.0 * c.relative_mean_gap(),
                c.disjoint_band_points().len()
            )
        })
        .collect();
    suite.line("4r", "bridge study with independent pairs", Verdict::Report, parts.join("; "));
}

// ------------------------------------------------------------ criteria 5 and 8

/// Reference W1 scale for the toy task.
const REFERENCE_W1: f64 = 5.39e-2;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// RMS geodesic distance of target draws to their own component center.
fn intrinsic_spread(target: &MixtureTarget) -> f64 {
    let mut sampler = Igso3Sampler::exact();
    let mut rng = stream(5, "acceptance.spread");
    let n = 20_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let k = rng.random_range(0..target.len());
        let c = &target.components[k];
        let r = sampler
            .sample(&igso3::IgParams::new(c.center, c.eps).unwrap(), &mut rng)
            .unwrap();
        acc += so3::geodesic_distance(&r, &c.center).powi(2);
    }
    (acc / n as f64).sqrt()
}

struct RunResult {
    variant: Variant,
    w1: f64,
    w2: f64,
    floor: f64,
    min_cov: f64,
}

fn toy_generation(suite: &mut Suite, gate5: bool, gate8: bool) {
    let spec = TargetSpec::default();
    let target = spec.mixture().unwrap();
    let seeds: &[u64] = if gate5 { &SEEDS } else { &SEEDS[..1] };
    let mut results = Vec::new();
    let mut norm_lines = Vec::new();
    let mut norm_ok = true;

    for variant in Variant::ALL {
        for &seed in seeds {
            let t0 = Instant::now();
            let mut cfg = TrainConfig::new(variant);
            cfg.seed = seed;
            let mut data = spec.source(&cfg.net).unwrap();
            let mut prior = HaarPrior { frames: 1, translations: false };
            let out = training::train_loop(&cfg, &mut data, &mut prior).unwrap();
            let train_s = t0.elapsed().as_secs_f64();

            let icfg = InferConfig::new(variant);
            let mut prng = stream(seed, "infer.prior");
            let priors: Vec<FrameSet> = (0..5000).map(|_| prior.sample(&mut prng)).collect();

            if gate8 && seed == SEEDS[0] {
                let (ok, line) = annealing_diagnostic(&out.params, variant, &priors[..1000]);
                norm_ok &= ok;
                norm_lines.push(line);
            }
            if !gate5 {
                continue;
            }

            let s = inference::sample(&out.params, &icfg, &priors, &mut stream(seed, "infer.noise")).unwrap();
            let rots: Vec<Rotation> = s.samples.iter().map(|f| f.frames[0].rot).collect();
            let rep = eval::evaluate(&rots, &target, MODE_RADIUS, seed).unwrap();
            let min_cov = rep.coverage.fractions.iter().copied().fold(f64::INFINITY, f64::min);
            println!(
                "  toy {variant} seed {seed}: train {train_s:.0} s, W1 {:.4}, W2 {:.4}, floor {:.4}, ratio {:.3}, \
                 coverage {:?}, unassigned {:.3}",
                rep.w1,
                rep.w2,
                rep.floor_w2,
                rep.w2 / rep.floor_w2,
                rep.coverage.fractions.iter().map(|f| (f * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                rep.coverage.unassigned
            );
            results.push(RunResult {
                variant,
                w1: rep.w1,
                w2: rep.w2,
                floor: rep.floor_w2,
                min_cov,
            });
        }
    }

    if gate5 {
        let mut ok_a = true;
        let mut ok_b = true;
        let mut parts_a = Vec::new();
        let mut parts_b = Vec::new();
        let mut parts_c = Vec::new();
        let spread = intrinsic_spread(&target);
        for variant in Variant::ALL {
            let runs: Vec<&RunResult> = results.iter().filter(|r| r.variant == variant).collect();
            let worst_ratio = runs.iter().map(|r| r.w2 / r.floor).fold(0.0, f64::max);
            let mean_ratio = runs.iter().map(|r| r.w2 / r.floor).sum::<f64>() / runs.len() as f64;
            let worst_cov = runs.iter().map(|r| r.min_cov).fold(f64::INFINITY, f64::min);
            ok_a &= worst_ratio <= 2.5;
            ok_b &= worst_cov >= 0.05;
            parts_a.push(format!("{variant}: max {worst_ratio:.3}, mean {mean_ratio:.3}"));
            parts_b.push(format!("{variant}: min mode fraction {worst_cov:.3}"));
            let w1: Vec<f64> = runs.iter().map(|r| r.w1).collect();
            let mean = w1.iter().sum::<f64>() / w1.len() as f64;
            let sd = (w1.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w1.len() - 1).max(1) as f64).sqrt();
            let normalized = mean / spread;
            let within = (0.1..=10.0).contains(&(normalized / REFERENCE_W1));
            parts_c.push(format!(
                "{variant}: W1 {mean:.4} ± {sd:.4}, /spread {normalized:.3} ({:.1}× reference{})",
                normalized / REFERENCE_W1,
                if within { "" } else { ", outside one order of magnitude" }
            ));
        }
        suite.gate(
            "5a",
            "toy W2 ≤ 2.5× noise floor, every variant and seed",
            ok_a,
            parts_a.join("; "),
        );
        suite.gate("5b", "toy mode coverage ≥ 5% at radius 0.7", ok_b, parts_b.join("; "));
        suite.line(
            "5c",
            "toy W1 normalized by target spread",
            Verdict::Report,
            format!("spread {spread:.3}; {}", parts_c.join("; ")),
        );
    }
    if gate8 {
        suite.gate("8", "inference annealing diagnostic (c = 10)", norm_ok, norm_lines.join("; "));
    }
}

/// Factor between unannealed and applied annealed field norm at `t_min`, and
/// the smoke property that the annealed trajectory never sees a larger field.
fn annealing_diagnostic(params: &FlowParams, variant: Variant, priors: &[FrameSet]) -> (bool, String) {
    let mut cfg = InferConfig::new(variant);
    cfg.anneal_c = 10.0;
    let rows = inference::flow_norm_diagnostic(params, &cfg, priors).unwrap();
    let last = rows.last().unwrap();
    let factor = last.unannealed / last.annealed;
    let worst = rows
        .iter()
        .map(|r| r.annealed_raw / r.unannealed)
        .fold(0.0, f64::max);
    let ok = factor >= 5.0 && rows.iter().all(|r| r.annealed_raw <= r.unannealed * (1.0 + 1e-12));
    (
        ok,
        format!(
            "{variant}: ‖v‖ at t={:.2} unannealed {:.3} vs annealed {:.4}, factor {factor:.1} (≥5); \
             max annealed/unannealed raw norm over t {worst:.3} (≤1)",
            last.t, last.unannealed, last.annealed
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn tiny_shape(frames: usize, translations: bool, head: Head) -> NetShape {
    NetShape {
        frames,
        translations,
        hidden: vec![16, 12],
        head,
    }
}

fn fd_error(shape: NetShape, seed: u64) -> f64 {
    let variant = Variant::Sfm;
    let mut cfg = TrainConfig::new(variant);
    cfg.net = shape.clone();
    cfg.batch_size = 6;
    cfg.seed = seed;
    let spec = TargetSpec::default();
    let mut data = spec.source(&shape).unwrap();
    let mut prior = HaarPrior {
        frames: shape.frames,
        translations: shape.translations,
    };
    let mut sampler = Igso3Sampler::geometric();
    let tuples = training::make_batch(&cfg, &mut data, &mut prior, &mut sampler, &mut TrainStreams::new(seed)).unwrap();
    let batch: Vec<LossInput> = tuples.iter().map(TrainingTuple::loss_input).collect();
    let p = FlowParams::init(shape, seed).unwrap();
    let w = cfg.weights;
    let (_, grads) = net::loss_grad(&p, &batch, w).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|l| l.values().copied().collect::<Vec<_>>()).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..p.num_params() {
        let mut plus = p.clone();
        *plus.values_mut().nth(k).unwrap() += h;
        let mut minus = p.clone();
        *minus.values_mut().nth(k).unwrap() -= h;
        let fd = (net::loss_grad(&plus, &batch, w).unwrap().0.total - net::loss_grad(&minus, &batch, w).unwrap().0.total)
            / (2.0 * h);
        let a = analytic[k];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    worst
}

fn gradient_check(suite: &mut Suite) {
    let cases = [
        ("SO(3)", tiny_shape(1, false, Head::Velocity)),
        ("SE(3)^3", tiny_shape(3, true, Head::Velocity)),
        ("SE(3)^2 x0 head", tiny_shape(2, true, Head::X0)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, shape)) in cases.into_iter().enumerate() {
        let e = fd_error(shape, 60 + k as u64);
        ok &= e <= 1e-4;
        parts.push(format!("{name} {e:.2e}"));
    }
    suite.gate(
        "6",
        "analytic gradients vs central differences",
        ok,
        format!("max relative error {} (≤1e-4, h=1e-5)", parts.join(", ")),
    );
}

// ---------------------------------------------------------------- criterion 7

fn sfm_degeneration(suite: &mut Suite) {
    let shape = tiny_shape(3, true, Head::Velocity);
    let params = FlowParams::init(shape.clone(), 70).unwrap();
    let prior = HaarPrior { frames: 3, translations: true };
    let mut rng = stream(7, "acceptance.sfm.prior");
    let priors: Vec<FrameSet> = (0..64).map(|_| prior.sample(&mut rng)).collect();

    let mut bitwise = true;
    for c in [0.0, 10.0] {
        let mut sde = InferConfig::new(Variant::Sfm);
        sde.zeta = 0.0;
        sde.anneal_c = c;
        sde.steps = 100;
        let ode = InferConfig {
            variant: Variant::Ot,
            gamma_r: DiffusionSchedule::Constant(0.0),
            gamma_s: DiffusionSchedule::Constant(0.0),
            ..sde.clone()
        };
        let a = inference::sde_sample(&params, &sde, &priors, &mut stream(7, "acceptance.sfm.noise")).unwrap();
        let b = inference::ode_sample(&params, &ode, &priors).unwrap();
        bitwise &= a.samples == b.samples;
    }

    let mut sfm = TrainConfig::new(Variant::Sfm);
    sfm.net = shape.clone();
    sfm.batch_size = 32;
    sfm.seed = 7;
    sfm.gamma_r = DiffusionSchedule::Constant(0.0);
    sfm.gamma_s = DiffusionSchedule::Constant(0.0);
    let ot_cfg = TrainConfig {
        variant: Variant::Ot,
        ..sfm.clone()
    };
    let spec = TargetSpec::default();
    let batch = |cfg: &TrainConfig| {
        let mut data = spec.source(&shape).unwrap();
        let mut prior = prior;
        let mut sampler = Igso3Sampler::geometric();
        let mut streams = TrainStreams::new(cfg.seed);
        (0..3)
            .flat_map(|_| training::make_batch(cfg, &mut data, &mut prior, &mut sampler, &mut streams).unwrap())
            .collect::<Vec<_>>()
    };
    let tuples_equal = batch(&sfm) == batch(&ot_cfg);

    suite.gate(
        "7",
        "SFM degeneration",
        bitwise && tuples_equal,
        format!(
            "ζ=0 SDE vs ODE samples bitwise {} (c=0 and c=10); γ≡0 SFM tuples vs OT tuples {}",
            if bitwise { "equal" } else { "DIFFERENT" },
            if tuples_equal { "equal" } else { "DIFFERENT" }
        ),
    );
}
