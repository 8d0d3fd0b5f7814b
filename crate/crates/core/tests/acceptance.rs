//! Acceptance suite: one line per criterion, non-zero exit status on any failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use einldg::experiments::{
    pme_defaults, run_convergence, run_pme, run_stability_scan, A0Mode, ConvergenceRow, DtRule,
    RunConfig,
};
use einldg::fem::{gauss_radau_project, l2_error, Boundary, DgFunction, Mesh1D, Side};
use einldg::imex::{energy_monitor, ConstantDiffusion, EinConfig, EinSolver, EnergyTrace, Order};
use einldg::implicit_solver::{apply_shifted, BandedLu, DenseLu, ImplicitFactorization};
use einldg::ldg::{assemble_discrete_laplacian, laplacian_matrix_free, LdgOperators};
use einldg::limiter::{apply_positivity, LimiterConfig};
use einldg::problems::highfield::{
    explicit_reference, highfield_step_driver, HighFieldConfig, HighFieldParams,
};
use einldg::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Agreement to two significant figures: within half a unit of the second digit.
fn two_sig_figs(value: f64, reference: f64) -> bool {
    let unit = 10f64.powf(reference.abs().log10().floor() - 1.0);
    (value - reference).abs() <= 0.5 * unit
}

fn table(
    experiment: &str,
    order: Order,
    a0: f64,
    dt_over_h: f64,
    cells: &[usize],
) -> Vec<ConvergenceRow> {
    let cfg = RunConfig {
        experiment: experiment.into(),
        cells: cells.to_vec(),
        degree: order.matched_degree(),
        order,
        a0: A0Mode::Fixed(a0),
        dt: DtRule::PerH(dt_over_h),
        ..RunConfig::default()
    };
    run_convergence(&cfg).expect("convergence run")
}

fn errors(rows: &[ConvergenceRow]) -> Vec<f64> {
    rows.iter().map(|r| r.l2_error).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|e| format!("{e:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

const MESHES: [usize; 5] = [80, 160, 320, 640, 1280];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let blocks: [(Order, f64, [f64; 5], f64, f64); 3] = [
        (
            Order::First,
            0.25,
            [8.09e-2, 4.04e-2, 2.02e-2, 1.01e-2, 5.05e-3],
            1.0,
            0.02,
        ),
        (
            Order::Second,
            0.25,
            [8.80e-4, 2.19e-4, 5.48e-5, 1.37e-5, 3.42e-6],
            2.0,
            0.02,
        ),
        (
            Order::Third,
            0.27,
            [6.92e-6, 8.67e-7, 1.09e-7, 1.36e-8, 1.73e-9],
            3.0,
            0.1,
        ),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (order, a0, reference, rate, tol) in blocks {
        let rows = table("example1-half", order, a0, 1.0, &MESHES);
        let errs = errors(&rows);
        let digits = errs
            .iter()
            .zip(&reference)
            .all(|(e, r)| two_sig_figs(*e, *r));
        let orders: Vec<f64> = rows.iter().filter_map(|r| r.order).collect();
        let rates = orders.len() == 4 && orders.iter().all(|o| (o - rate).abs() <= tol);
        pass &= digits && rates;
        notes.push(format!(
            "order {}: [{}] rates [{}]{}",
            order.number(),
            fmt_list(&errs),
            orders
                .iter()
                .map(|o| format!("{o:.2}"))
                .collect::<Vec<_>>()
                .join(" "),
            if digits && rates { "" } else { " MISMATCH" }
        ));
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(300);
    notes.push(format!("{:.1}s", elapsed.as_secs_f64()));
    outcome(pass && fast, notes.join("; "))
}

fn criterion_2() -> Outcome {
    let first_bad = errors(&table(
        "example1-half",
        Order::First,
        0.24,
        1.0,
        &[80, 160, 320, 640],
    ));
    let first_good = errors(&table("example1-half", Order::First, 0.25, 1.0, &MESHES));
    let third_bad = errors(&table("example1-half", Order::Third, 0.26, 1.0, &MESHES));
    let third_good = errors(&table("example1-half", Order::Third, 0.27, 1.0, &MESHES));
    let diverged = |e: &[f64]| e.iter().any(|v| !(*v <= 1e3));
    let bounded = |e: &[f64]| e.iter().all(|v| *v < 1.0);
    let scan_cfg = RunConfig {
        cells: vec![1280],
        ..RunConfig::default()
    };
    let scan = run_stability_scan(&scan_cfg, &[0.20, 0.24, 0.25, 0.30]).expect("scan");
    let labels: Vec<bool> = scan.iter().map(|r| r.stable).collect();
    let pass = !(first_bad[3] <= 1e3)
        && bounded(&first_good)
        && diverged(&third_bad)
        && bounded(&third_good)
        && labels == [false, false, true, true];
    outcome(
        pass,
        format!(
            "k=0 a0=0.24 N=640 error {:.2e}; a0=0.25 max {:.2e}; k=2 a0=0.26 [{}]; a0=0.27 max {:.2e}; scan {:?}",
            first_bad[3],
            first_good.iter().cloned().fold(0.0, f64::max),
            fmt_list(&third_bad),
            third_good.iter().cloned().fold(0.0, f64::max),
            labels
        ),
    )
}

fn criterion_3() -> Outcome {
    let rows = table("example1-quadratic", Order::Second, 1.0, 1.0, &MESHES);
    let errs = errors(&rows);
    let finest = rows[4].order.unwrap_or(f64::NAN);
    let orders: Vec<f64> = rows.iter().filter_map(|r| r.order).collect();
    let approaching = orders
        .windows(2)
        .all(|w| (w[1] - 2.0).abs() <= (w[0] - 2.0).abs() + 0.02);
    let close = ((errs[4] - 4.13e-6) / 4.13e-6).abs() <= 0.05;
    outcome(
        (finest - 2.0).abs() <= 0.05 && close && approaching,
        format!("errors [{}] finest order {finest:.3}", fmt_list(&errs)),
    )
}

fn criterion_4() -> Outcome {
    let rows = table("example2-b10", Order::Third, 6.0, 0.1, &[640, 1280]);
    let e = rows[1].l2_error;
    let order = rows[1].order.unwrap_or(f64::NAN);
    let within = (1.46e-9 / 2.0..=2.0 * 1.46e-9).contains(&e);
    outcome(
        within && order >= 2.9,
        format!("N=1280 error {e:.3e}, order {order:.3}"),
    )
}

fn periodic_mesh(n: usize) -> Arc<Mesh1D> {
    Arc::new(Mesh1D::uniform(-PI, PI, n, Boundary::Periodic).unwrap())
}

fn random_dg(mesh: &Arc<Mesh1D>, k: usize, rng: &mut StdRng) -> DgFunction {
    let n = mesh.n_cells() * (k + 1);
    DgFunction::from_coeffs(
        Arc::clone(mesh),
        k,
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let n = 32;
    let h = 2.0 * PI / n as f64;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let mut runs = 0;
    for &a in &[0.5, 2.0] {
        for &a0 in &[0.5 * a, 2.0 * a] {
            for &ratio in &[0.1, 1.0, 10.0, 100.0] {
                for order in [Order::First, Order::Second, Order::Third] {
                    let k = order.matched_degree();
                    let dt = ratio * h;
                    let u0 = random_dg(&periodic_mesh(n), k, &mut rng);
                    let mut s = EinSolver::new(
                        ConstantDiffusion { a },
                        u0,
                        0.0,
                        EinConfig::fixed(order, a0, dt),
                    )
                    .unwrap();
                    let mut trace = EnergyTrace::new();
                    trace.record(0, 0.0, s.u(), &s.q(), a0, dt, order);
                    for i in 0..200 {
                        if s.step(dt).is_err() {
                            break;
                        }
                        trace.record(i + 1, s.t(), s.u(), &s.q(), a0, dt, order);
                    }
                    let rep = energy_monitor(&trace, 1e-12);
                    runs += 1;
                    worst = worst.max(rep.max_relative_increase);
                    if !rep.is_monotone() || trace.records().len() != 201 {
                        failures.push(format!(
                            "a={a} a0={a0} dt/h={ratio} k={k} (+{:.1e})",
                            rep.max_relative_increase
                        ));
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{runs} runs, largest relative increase {worst:.2e}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; increasing: {}", failures.join(", "))
            }
        ),
    )
}

fn mass_pairing(ops: &LdgOperators, a: &DgFunction, b: &DgFunction) -> f64 {
    ops.mass_times(a)
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| x * y)
        .sum()
}

fn criterion_6() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let trials = 60;
    let (mut dual, mut dual_nl, mut lap, mut lu, mut round) = (0f64, 0f64, 0f64, 0f64, 0f64);
    // a(u) = u^2: every nonlinear integrand is a polynomial the quadrature integrates exactly.
    let b = |u: f64| u;
    let big_b = |u: f64| 0.5 * u * u;
    for t in 0..trials {
        let k = t % 3;
        let n = rng.gen_range(3..40);
        let mesh = periodic_mesh(n);
        let ops = LdgOperators::new(Arc::clone(&mesh), k);

        // L(q, v) = -K(v, q)
        let q = random_dg(&mesh, k, &mut rng);
        let v = random_dg(&mesh, k, &mut rng);
        let lq = mass_pairing(&ops, &ops.op_l(&q), &v);
        let kv = mass_pairing(&ops, &ops.op_k(&v), &q);
        dual = dual.max((lq + kv).abs() / (1.0 + lq.abs()));

        // L~(b(u) p2, u) = -(p1, p2) with p1 = K~(B(u))
        let u = random_dg(&mesh, k, &mut rng);
        let p2 = random_dg(&mesh, k, &mut rng);
        let p1 = ops.op_ktilde(&u, big_b);
        let lhs = mass_pairing(&ops, &ops.op_ltilde(&u, &p2, b, big_b), &u);
        let rhs = -mass_pairing(&ops, &p1, &p2);
        dual_nl = dual_nl.max((lhs - rhs).abs() / (1.0 + rhs.abs()));

        // assembled vs matrix-free, periodic and Dirichlet
        for mesh in [
            Arc::clone(&mesh),
            Arc::new(mesh.with_boundary(Boundary::Dirichlet {
                left: 0.0,
                right: 0.0,
            })),
        ] {
            let ops = LdgOperators::new(Arc::clone(&mesh), k);
            let w = random_dg(&mesh, k, &mut rng);
            let free = laplacian_matrix_free(&ops, &w);
            let mat = assemble_discrete_laplacian(&mesh, k)
                .apply(w.coeffs())
                .unwrap();
            let scale = free.coeffs().iter().fold(0f64, |m, x| m.max(x.abs()));
            let diff = free
                .coeffs()
                .iter()
                .zip(&mat)
                .fold(0f64, |m, (x, y)| m.max((x - y).abs()));
            lap = lap.max(diff / scale);
        }

        // banded vs dense LU on a random banded matrix
        let dim = rng.gen_range(5..60);
        let (kl, ku) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let mut dense = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i.saturating_sub(kl)..=(i + ku).min(dim - 1) {
                dense[i * dim + j] = rng.gen_range(-1.0..1.0) + if i == j { 4.0 } else { 0.0 };
            }
        }
        let rhs_b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let banded = BandedLu::factor(dim, kl, ku, |i, j| dense[i * dim + j]).unwrap();
        let xb = banded.solve(&rhs_b).unwrap();
        let xd = DenseLu::factor(dense.clone(), dim)
            .unwrap()
            .solve(&rhs_b)
            .unwrap();
        let xs = xd.iter().fold(0f64, |m, x| m.max(x.abs()));
        lu = lu.max(
            xb.iter()
                .zip(&xd)
                .fold(0f64, |m, (a, b)| m.max((a - b).abs()))
                / xs,
        );

        // implicit solve round trip on (I - gamma dt a0 D)
        for mesh in [
            Arc::clone(&mesh),
            Arc::new(mesh.with_boundary(Boundary::Dirichlet {
                left: 0.0,
                right: 0.0,
            })),
        ] {
            let d = assemble_discrete_laplacian(&mesh, k);
            let h = mesh.max_width();
            let (a0, dt, gamma) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..10.0) * h, 0.5);
            let fact = ImplicitFactorization::new(&d, a0, dt, gamma).unwrap();
            let x: Vec<f64> = (0..d.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bx = apply_shifted(&d, fact.shift(), &x).unwrap();
            let back = fact.solve(&bx).unwrap();
            let err = x
                .iter()
                .zip(&back)
                .fold(0f64, |m, (a, b)| m.max((a - b).abs()));
            round = round.max(err);
        }
    }
    let pass = dual <= 1e-12 && dual_nl <= 1e-12 && lap <= 1e-13 && lu <= 1e-12 && round <= 1e-12;
    outcome(
        pass,
        format!(
            "{trials} trials: duality {dual:.1e}, nonlinear duality {dual_nl:.1e}, matrix-free {lap:.1e}, banded/dense {lu:.1e}, round trip {round:.1e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut drift = 0f64;
    for order in [Order::First, Order::Second, Order::Third] {
        let k = order.matched_degree();
        let mesh = periodic_mesh(64);
        let h = mesh.max_width();
        let mut s = EinSolver::new(
            ConstantDiffusion { a: 0.5 },
            random_dg(&mesh, k, &mut rng),
            0.0,
            EinConfig::fixed(order, 0.5, h),
        )
        .unwrap();
        let mut mass = s.u().total_mass();
        for _ in 0..200 {
            s.step(h).unwrap();
            let m = s.u().total_mass();
            drift = drift.max((m - mass).abs());
            mass = m;
        }
    }

    let mut min_stage = f64::INFINITY;
    let mut pme_notes = Vec::new();
    for name in [
        "barenblatt2",
        "twobox-equal",
        "twobox-unequal",
        "waiting-time",
    ] {
        match run_pme(&pme_defaults(name)) {
            Ok(rep) => {
                min_stage = min_stage.min(rep.min_stage_value);
                pme_notes.push(format!("{name} {:.1e}", rep.min_stage_value));
            }
            Err(e) => {
                min_stage = f64::NEG_INFINITY;
                pme_notes.push(format!("{name} failed: {e}"));
            }
        }
    }

    let cfg = LimiterConfig::default();
    let mut averages_kept = true;
    let mut limited = 0;
    for _ in 0..100 {
        let k = rng.gen_range(1..4);
        let mesh = periodic_mesh(rng.gen_range(2..30));
        let mut u = random_dg(&mesh, k, &mut rng);
        for j in 0..u.n_cells() {
            u.cell_mut(j)[0] = rng.gen_range(0.0..0.5);
        }
        let before: Vec<u64> = (0..u.n_cells()).map(|j| u.cell(j)[0].to_bits()).collect();
        limited += apply_positivity(&mut u, &cfg).unwrap().cells_limited;
        averages_kept &= (0..u.n_cells()).all(|j| u.cell(j)[0].to_bits() == before[j]);
    }

    outcome(
        drift <= 1e-12 && min_stage >= -1e-14 && averages_kept && limited > 0,
        format!(
            "mass drift {drift:.1e}; min stage value {}; averages bitwise kept over {limited} limited cells: {averages_kept}",
            pme_notes.join(", ")
        ),
    )
}

/// L1 error of the `m = 2` Barenblatt run at `t = 2` for the given cell count.
fn barenblatt_l1(cells: usize) -> Result<f64, Error> {
    let cfg = RunConfig {
        cells: vec![cells],
        ..pme_defaults("barenblatt2")
    };
    Ok(run_pme(&cfg)?.errors.map_or(f64::NAN, |e| e.0))
}

/// L1 error at `h = 0.02` recorded on the first measurement.
const BARENBLATT_L1_FROZEN: f64 = 2.1e-4;

fn criterion_8() -> Outcome {
    match (barenblatt_l1(600), barenblatt_l1(2400)) {
        (Ok(coarse), Ok(fine)) => {
            let ratio = coarse / fine;
            let frozen = coarse <= BARENBLATT_L1_FROZEN;
            outcome(
                ratio >= 4.0 && frozen,
                format!("L1 h=0.02 {coarse:.3e}, h=0.005 {fine:.3e}, reduction {ratio:.2}x"),
            )
        }
        (a, b) => outcome(false, format!("run failed: {a:?} {b:?}")),
    }
}

fn criterion_9() -> Outcome {
    let params = HighFieldParams::default();
    let cfg = HighFieldConfig::default();
    let ein = match highfield_step_driver(params, &cfg) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("EIN run failed: {e}")),
    };
    let nt_ok = ((ein.steps as f64 - 4831.0) / 4831.0).abs() <= 0.05;
    let t_ok = ((ein.time - 1.739) / 1.739).abs() <= 0.05;
    // the explicit run is stopped once it exceeds 100 times the EIN step count
    let cap = 100 * ein.steps;
    let (explicit_ok, explicit_note) =
        match explicit_reference(params, cfg.cells, cfg.degree, 1.151e-6, cfg.tol, cap) {
            Err(Error::NoSteadyState(n)) => (true, format!("explicit not steady after {n} steps")),
            Ok(s) => (
                s.steps >= cap,
                format!("explicit steady after {} steps", s.steps),
            ),
            Err(e) => (false, format!("explicit run failed: {e}")),
        };
    outcome(
        nt_ok && t_ok && explicit_ok,
        format!(
            "nt {} ({:+.1}%), t {:.3} ({:+.1}%), {:.1}s; {explicit_note}",
            ein.steps,
            100.0 * (ein.steps as f64 / 4831.0 - 1.0),
            ein.time,
            100.0 * (ein.time / 1.739 - 1.0),
            ein.wall.as_secs_f64()
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let mut collocation = 0f64;
    for k in 0..3 {
        for side in [Side::Minus, Side::Plus] {
            let errs: Vec<f64> = [8, 16, 32, 64]
                .iter()
                .map(|&n| {
                    let mesh = Arc::new(Mesh1D::uniform(-PI, PI, n, Boundary::Periodic).unwrap());
                    let p = gauss_radau_project(f64::sin, &mesh, k, side);
                    for j in 0..n {
                        let (xi, x) = match side {
                            Side::Minus => (1.0, mesh.edges()[j + 1]),
                            Side::Plus => (-1.0, mesh.edges()[j]),
                        };
                        collocation = collocation.max((p.eval_ref(j, xi) - x.sin()).abs());
                    }
                    l2_error(&p, |x, _| x.sin(), 0.0)
                })
                .collect();
            let target = 2f64.powi(k as i32 + 1);
            let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
            let ok = ratios.iter().all(|r| (r / target - 1.0).abs() <= 0.1);
            pass &= ok;
            notes.push(format!(
                "k={k} {side:?} [{}]",
                ratios
                    .iter()
                    .map(|r| format!("{r:.2}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
        }
    }
    outcome(
        pass && collocation <= 1e-14,
        format!("{}; collocation {collocation:.1e}", notes.join(", ")),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("constant-coefficient convergence", criterion_1),
        ("stability boundary", criterion_2),
        ("nonlinear convergence", criterion_3),
        ("variable-coefficient robustness", criterion_4),
        ("energy monotonicity", criterion_5),
        ("operator oracles", criterion_6),
        ("conservation and positivity", criterion_7),
        ("Barenblatt self-convergence", criterion_8),
        ("high-field steady state", criterion_9),
        ("Gauss-Radau projection order", criterion_10),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        println!(
            "{} criterion {:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
