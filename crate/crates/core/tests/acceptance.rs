//! Acceptance report: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs with `cargo test --test acceptance` (no libtest harness).

mod common;

use std::time::Instant;

use npiv_core::basis::{eval_design, BasisFamily, BasisSpec, ConstraintKind};
use npiv_core::dgp::{generate, Design, DesignConfig, HSpec};
use npiv_core::npiv::{cone_project, ParametricModel};
use npiv_core::randdist::RngStream;
use npiv_core::sim::*;
use npiv_core::stat::*;
use rand::Rng;
use rayon::prelude::*;

/// Master seed; `NPIV_ACCEPTANCE_SEED` overrides it for robustness checks.
fn seed() -> u64 {
    std::env::var("NPIV_ACCEPTANCE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(7)
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, ok: bool, what: &str, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("criterion {id} {}: {what}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn base(null: NullHypothesis, h: HSpec, xi: f64, k: usize, reps: usize) -> ExperimentSpec {
    ExperimentSpec {
        name: "acceptance".into(),
        design: Design::I,
        n: vec![500],
        xi: vec![xi],
        h: vec![h],
        null,
        alphas: vec![0.05],
        replications: reps,
        k_factor: k,
        master_seed: seed(),
        mode: Mode::Size,
        grid: GridMode::Dyadic,
        test: TestKind::Structural,
        image_variant: ImageVariant::Plain,
        basis: BasisFamily::BSpline { order: 3 },
        calibration_h: None,
    }
}

fn decreasing() -> NullHypothesis {
    NullHypothesis::Shape(ConstraintKind::MonotoneDecreasing)
}

fn linear() -> NullHypothesis {
    NullHypothesis::Parametric(ParametricModel::Linear)
}

fn criterion1(r: &mut Report) {
    let t = Instant::now();
    let cells = [
        (0.01, 0.3, 0.008),
        (0.01, 0.5, 0.014),
        (0.01, 0.7, 0.021),
        (1.0, 0.3, 0.004),
        (1.0, 0.5, 0.004),
        (1.0, 0.7, 0.005),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (c0, xi, published) in cells {
        let s = run_size(&base(decreasing(), HSpec::Mono { c0 }, xi, 2, 1000)).unwrap();
        let got = s.cells[0].rejection_rate;
        let tol = f64::max(0.015, 3.0 * (published * (1.0 - published) / 1000.0_f64).sqrt());
        ok &= (got - published).abs() <= tol;
        parts.push(format!("c0={c0} xi={xi} {got:.3} vs {published:.3}"));
    }
    r.line(
        1,
        ok,
        "monotonicity size, n=500, K=2J, 5%, 1000 reps",
        format!("{} ({:.0}s)", parts.join("; "), t.elapsed().as_secs_f64()),
    );
}

fn criterion2(r: &mut Report) {
    let s = run_size(&base(linear(), HSpec::Sin { ca: 0.0, cb: 0.0 }, 0.5, 2, 1000)).unwrap();
    let got = s.cells[0].rejection_rate;
    r.line(
        2,
        (got - 0.023).abs() <= 0.015,
        "linearity size, n=500, xi=0.5, K=2J, 1000 reps",
        format!("{got:.3} vs 0.023 (tolerance 0.015)"),
    );
}

fn criterion3(r: &mut Report) {
    let mut sp = base(decreasing(), HSpec::Mono { c0: 0.01 }, 0.5, 2, 1000);
    sp.grid = GridMode::Knots;
    let s = run_size(&sp).unwrap();
    let got = s.cells[0].avg_j_hat;
    r.line(
        3,
        (got - 3.31).abs() <= 0.4,
        "average selected J, c0=0.01, xi=0.5, K=2J, knot grid",
        format!("{got:.2} vs 3.31 (tolerance 0.4)"),
    );
}

fn criterion4(r: &mut Report) {
    let amps = [0.3, 0.6, 1.0, 1.5, 2.0];
    let mut sp = base(decreasing(), HSpec::Sin { ca: 0.0, cb: 0.0 }, 0.7, 4, 500);
    sp.h = amps.iter().map(|&ca| HSpec::Sin { ca, cb: 0.0 }).collect();
    sp.mode = Mode::SizeAdjustedPower;
    let s = run_power(&sp).unwrap();
    let p: Vec<f64> = s.cells.iter().map(|c| c.rejection_rate).collect();
    let se: Vec<f64> = s.cells.iter().map(|c| c.se).collect();
    let increasing = (1..p.len()).all(|i| p[i] > p[i - 1] || (p[i] - p[i - 1]).abs() <= 2.0 * se[i].max(se[i - 1]));
    let strictly = (1..p.len()).all(|i| p[i] >= p[i - 1]);
    let ok = p[4] >= 0.8 && increasing && strictly;
    let curve: Vec<String> = amps.iter().zip(&p).map(|(a, p)| format!("{a}:{p:.3}")).collect();
    r.line(
        4,
        ok,
        "size-adjusted power, n=500, xi=0.7, cB=0, K=4J, 500 reps",
        format!("{} (null quantile of max W {:.3})", curve.join(" "), s.cells[0].critical_value.unwrap()),
    );
}

fn criterion5(r: &mut Report) {
    let mut sp = base(linear(), HSpec::Sin { ca: 0.0, cb: 0.0 }, 0.5, 4, 1000);
    sp.test = TestKind::Image;
    sp.image_variant = ImageVariant::DofCorrected;
    let dof = run_size(&sp).unwrap().cells[0].clone();
    sp.image_variant = ImageVariant::Plain;
    let plain = run_size(&sp).unwrap().cells[0].clone();
    r.line(
        5,
        (dof.rejection_rate - 0.050).abs() <= 0.02,
        "image-space size, design I, n=500, xi=0.5, 1000 reps, degrees-of-freedom corrected kernel",
        format!(
            "{:.3} vs 0.050 (avg K {:.2}); literal kernel without the correction gives {:.3}",
            dof.rejection_rate, dof.avg_j_hat, plain.rejection_rate
        ),
    );
}

fn criterion6(r: &mut Report) {
    let t = Instant::now();
    let d = common::d_suite(200, 601);
    let cone = common::cone_suite(500, 602);
    let (v, s) = common::vs_suite(100, 603);
    let chi = common::chisq_suite();
    let secs = t.elapsed().as_secs_f64();
    let ok = d <= 1e-10 && cone <= 1e-8 && v <= 1e-8 && s <= 1e-8 && chi <= 1e-9 && secs < 120.0;
    r.line(
        6,
        ok,
        "oracle equivalence",
        format!(
            "D vs double sum {d:.1e} (200); cone vs enumeration {cone:.1e} (500); \
             vhat {v:.1e} / shat {s:.1e} vs dense (100); chi2 round trip {chi:.1e} (6 x 64); {secs:.1}s"
        ),
    );
}

fn criterion7(r: &mut Report) {
    let mut notes = Vec::new();
    let mut ok = true;

    // Scale invariance of W_J under Y -> cY.
    let data = generate(&DesignConfig {
        design: Design::I,
        n: 500,
        xi: 0.5,
        h: HSpec::Sin { ca: 0.5, cb: 0.5 },
        rng: RngStream::new(seed(), 1),
    })
    .unwrap()
    .data;
    let config = TestConfig::default();
    let basew = adaptive_test(&data, &decreasing(), 0.05, &config).unwrap();
    let mut worst: f64 = 0.0;
    for c in [0.1, 3.0, 100.0] {
        let mut d = data.clone();
        d.y.iter_mut().for_each(|y| *y *= c);
        let rep = adaptive_test(&d, &decreasing(), 0.05, &config).unwrap();
        for (a, b) in rep.per_j.iter().zip(&basew.per_j) {
            worst = worst.max((a.w - b.w).abs() / (1.0 + b.w.abs()));
        }
    }
    ok &= worst < 1e-8;
    notes.push(format!("scale invariance {worst:.1e}"));

    // Partition of unity.
    let xs: Vec<f64> = (0..2001).map(|i| i as f64 / 2000.0).collect();
    let mut pu: f64 = 0.0;
    for order in [2, 3, 4] {
        for dim in order..order + 12 {
            let b = eval_design(&BasisSpec::bspline(order, dim), &xs).unwrap();
            for i in 0..b.rows() {
                pu = pu.max((b.row(i).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    ok &= pu < 1e-12;
    notes.push(format!("partition of unity {pu:.1e}"));

    // KKT conditions of the projection.
    let mut rng = common::rng(701);
    let mut kkt: f64 = 0.0;
    for _ in 0..500 {
        let j = rng.random_range(2..=10);
        let g = common::random_spd(&mut rng, j);
        let m = common::random_cone(&mut rng, j);
        let v = common::random_vec(&mut rng, j, 5.0);
        let sol = cone_project(&v, &g, &m).unwrap();
        let scale = 1.0 + v.iter().map(|x| x.abs()).sum::<f64>();
        let mb = m.mat_vec(&sol.beta);
        let diff: Vec<f64> = sol.beta.iter().zip(&v).map(|(b, v)| b - v).collect();
        let grad = g.mat_vec(&diff);
        let mtl = m.t_mat_vec(&sol.multipliers);
        let mut e = grad.iter().zip(&mtl).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        e = e.max(mb.iter().cloned().fold(0.0, f64::max));
        e = e.max(sol.multipliers.iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max));
        e = e.max(sol.multipliers.iter().zip(&mb).map(|(l, x)| (l * x).abs()).fold(0.0, f64::max) / scale);
        kkt = kkt.max(e / scale);
    }
    ok &= kkt < 1e-9;
    notes.push(format!("KKT residual {kkt:.1e}"));

    // Byte-level determinism of a fixed-seed end-to-end run.
    let mut sp = base(decreasing(), HSpec::Mono { c0: 0.1 }, 0.5, 2, 50);
    sp.alphas = vec![0.1, 0.05];
    let run = |jobs| {
        let mut s = with_jobs(jobs, || run_size(&sp)).unwrap().unwrap();
        s.metadata.elapsed_seconds = 0.0;
        s.cells.iter_mut().for_each(|c| c.seconds = 0.0);
        serde_json::to_vec(&s).unwrap()
    };
    let same = run(None) == run(Some(1)) && run(None) == run(Some(2));
    ok &= same;
    notes.push(format!("determinism {}", if same { "identical bytes" } else { "MISMATCH" }));

    // Confidence-set coverage.
    let h = HSpec::Mono { c0: 0.1 };
    let hits = (0..500u64)
        .into_par_iter()
        .filter(|&rep| {
            let d = generate(&DesignConfig {
                design: Design::I,
                n: 500,
                xi: 0.5,
                h,
                rng: RngStream::new(seed(), rep).derived(0xc0),
            })
            .unwrap()
            .data;
            let vals: Vec<f64> = d.x[0].iter().map(|&x| h.eval(x)).collect();
            cs_contains(&Candidate::Values(vals), &d, &decreasing(), 0.05, &config)
                .unwrap()
                .contained
        })
        .count();
    let cover = hits as f64 / 500.0;
    ok &= cover >= 0.92;
    notes.push(format!("CS coverage {cover:.3} (>= 0.92)"));

    r.line(7, ok, "property suite", notes.join("; "));
}

fn criterion8(r: &mut Report) {
    let mut opts = ReproduceOptions::new(1, seed());
    opts.ns = Some(vec![500]);
    let t = reproduce(TableId::T1, &opts).unwrap();
    let carries = t.rows.len() == 9 && t.rows.iter().all(|row| row.published.iter().all(Option::is_some));
    let fixtures = ["smoke_n200.json", "design2_n8.json"]
        .iter()
        .all(|f| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(f).exists());
    r.line(
        8,
        carries && fixtures,
        "substitution for full-scale tables and empirical applications",
        "5000-replication tables and the proprietary applications are out of scope; \
         criteria 1-5 run at 500-1000 replications, `reproduce` prints published values side by side, \
         and golden fixtures pin the CSV/report pathway"
            .into(),
    );
}

fn main() {
    // Respect a `--list` probe from the test runner without running anything.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let mut r = Report { failed: 0 };
    criterion1(&mut r);
    criterion2(&mut r);
    criterion3(&mut r);
    criterion4(&mut r);
    criterion5(&mut r);
    criterion6(&mut r);
    criterion7(&mut r);
    criterion8(&mut r);
    println!(
        "acceptance: {} of 8 criteria passed in {:.0}s",
        8 - r.failed,
        start.elapsed().as_secs_f64()
    );
    if r.failed > 0 {
        std::process::exit(1);
    }
}
