//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use costchart::baseline::fraction_b;
use costchart::chain::{recurrent_indices, repair_start_matrix};
use costchart::distributions::{self as d, Square};
use costchart::optimizer::{self, sensitivity, Trend};
use costchart::quadrature::{integrate, QuadOptions};
use costchart::simulator::{self, compare_to_analytic};
use costchart::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn rel(x: f64, target: f64, tol: f64) -> bool {
    ((x - target) / target).abs() <= tol
}

fn scenario(name: &str) -> Scenario {
    Scenario::bundled(name).unwrap()
}

fn design(model: &ChartModel, search: &SearchBox) -> MinimizeReport {
    optimizer::minimize(model, search).unwrap()
}

fn c1() -> Outcome {
    let s = scenario("ldl");
    let t = Instant::now();
    let r = design(&s.model(), &s.search);
    let elapsed = t.elapsed();
    let b = &r.best;
    let pass = within(b.policy.h, 50.9, 62.2)
        && within(b.policy.k, 0.129, 0.157)
        && within(b.expected_cost, 0.446, 0.492)
        && elapsed < Duration::from_secs(120);
    Outcome {
        pass,
        detail: format!(
            "h*={:.3} k*={:.4} E={:.4} in {:.1}s",
            b.policy.h,
            b.policy.k,
            b.expected_cost,
            elapsed.as_secs_f64()
        ),
    }
}

fn c2() -> Outcome {
    let s = scenario("ldl");
    let one = design(&s.model(), &s.search).best;
    let mut m = s.model();
    m.costs.p = 0.9;
    let b = design(&m, &s.search).best;
    let values = rel(b.policy.h, 64.76, 0.10)
        && rel(b.policy.k, 0.129, 0.10)
        && rel(b.expected_cost, 0.477, 0.05)
        && rel(b.cost_std, 0.418, 0.10);
    let shifts = b.policy.h > one.policy.h && b.policy.k < one.policy.k && b.cost_std < one.cost_std;
    Outcome {
        pass: values && shifts,
        detail: format!(
            "h*={:.3} k*={:.4} E={:.4} sd={:.4}; vs p=1 h {:.3} k {:.4} sd {:.4}",
            b.policy.h, b.policy.k, b.expected_cost, b.cost_std, one.policy.h, one.policy.k, one.cost_std
        ),
    }
}

fn c3() -> Outcome {
    let s = scenario("sens24");
    let b = design(&s.model(), &s.search).best;
    let pass = (b.alarm_mass - 0.201).abs() <= 0.01
        && rel(b.policy.h, 0.38, 0.15)
        && rel(b.policy.k, 1.14, 0.15)
        && rel(b.expected_cost, 37.75, 0.05);
    Outcome {
        pass,
        detail: format!(
            "alarm={:.4} h*={:.4} k*={:.4} E={:.3}",
            b.alarm_mass, b.policy.h, b.policy.k, b.expected_cost
        ),
    }
}

fn sens24_policy() -> ChartPolicy {
    ChartPolicy::new(0.38, 1.14).unwrap()
}

fn c4() -> Outcome {
    let m = scenario("sens24").model();
    let policy = sens24_policy();
    let art = ChainArtifacts::build(&m, policy).unwrap();
    let analytic = DesignPoint::from_artifacts(&art, &m.costs);
    let report = simulator::simulate(&m, policy, &SimConfig::default()).unwrap();
    let cmp = compare_to_analytic(&report, &art, analytic.expected_cost).unwrap();
    let pass = cmp.cost_gap.abs() <= 0.05
        && (cmp.empirical_alarm_proportion - cmp.analytic_alarm_mass).abs() <= 0.02
        && cmp.tv_distance < 0.02;
    Outcome {
        pass,
        detail: format!(
            "mean {:.3} vs {:.3} ({:+.2}%), alarm {:.4} vs {:.4}, TV {:.4}",
            cmp.empirical_cost,
            cmp.analytic_cost,
            100.0 * cmp.cost_gap,
            cmp.empirical_alarm_proportion,
            cmp.analytic_alarm_mass,
            cmp.tv_distance
        ),
    }
}

fn c5() -> Outcome {
    let m = scenario("sens24").model();
    let policy = sens24_policy();
    let run = |rule: AlarmRule| {
        let cfg = SimConfig { rule, ..SimConfig::default() };
        simulator::simulate(&m, policy, &cfg).unwrap()
    };
    let limit = run(AlarmRule::LimitOnly);
    let r3 = run("runs:3:2/3".parse().unwrap());
    let r2 = run("runs:2:2/3".parse().unwrap());
    let change = |r: &SimReport| (r.mean_cost - limit.mean_cost) / limit.mean_cost;
    let pass = change(&r3).abs() < 0.10 && change(&r2).abs() < 0.10 && r2.alarm_proportion >= r3.alarm_proportion;
    Outcome {
        pass,
        detail: format!(
            "limit {:.3}, runs(3) {:.3} ({:+.2}%), runs(2) {:.3} ({:+.2}%); alarms {:.4} / {:.4} / {:.4}",
            limit.mean_cost,
            r3.mean_cost,
            100.0 * change(&r3),
            r2.mean_cost,
            100.0 * change(&r2),
            limit.alarm_proportion,
            r3.alarm_proportion,
            r2.alarm_proportion
        ),
    }
}

fn c6() -> Outcome {
    let mut worst_sq = 0.0f64;
    for &(rate, mean) in &[(0.2, 2.0), (1.0 / 120.0, 0.8 / 3.0), (1.5, 0.1), (0.05, 5.0), (3.0, 0.7)] {
        let law = ShiftLaw::new(rate, mean).unwrap();
        for &(j, h) in &[(0.0, 0.38), (0.5, 1.0), (2.0, 0.1), (0.15, 56.57)] {
            let closed = d::expected_sq_distance(&law, j, h).unwrap();
            let quad = d::expected_between_samplings(&law, j, h, &Square).unwrap();
            worst_sq = worst_sq.max(((closed - quad) / closed).abs());
        }
    }
    let opts = QuadOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-15,
        ..QuadOptions::default()
    };
    let mut worst_erlang = 0.0f64;
    for &(k, mean, x) in &[(1u32, 2.0f64, 2.0f64), (2, 1.0, 2.0), (5, 0.3, 1.1), (12, 0.8 / 3.0, 2.0), (30, 2.0, 70.0)] {
        let rate = 1.0 / mean;
        let ln_norm = k as f64 * rate.ln() - (1..k).map(|i| (i as f64).ln()).sum::<f64>();
        let density = |t: f64| if t <= 0.0 { 0.0 } else { (ln_norm + (k - 1) as f64 * t.ln() - rate * t).exp() };
        let numeric = integrate(density, 0.0, x, opts).unwrap();
        worst_erlang = worst_erlang.max((numeric - d::erlang_cdf(k, mean, x).unwrap()).abs());
    }
    Outcome {
        pass: worst_sq <= 1e-6 && worst_erlang <= 1e-8,
        detail: format!("squared distance worst rel {worst_sq:.2e} (20 points), Erlang worst abs {worst_erlang:.2e}"),
    }
}

fn random_model(rng: &mut ChaCha8Rng) -> (ChartModel, ChartPolicy) {
    let sampling = match rng.random_range(0..3) {
        0 => SamplingLaw::Always,
        1 => SamplingLaw::Logistic {
            q: rng.random_range(0.01..1.0),
            z: rng.random_range(0.0..10.0),
        },
        _ => SamplingLaw::BetaState {
            a: rng.random_range(0.001..0.5),
            b: rng.random_range(0.2..3.0),
            zeta: rng.random_range(0.1..5.0),
        },
    };
    let v_count = rng.random_range(5..60);
    let sigma = rng.random_range(0.3..2.0);
    let model = ChartModel {
        process: ProcessModel {
            mu0: 0.0,
            sigma,
            shift_rate: rng.random_range(0.01..1.0),
            shift_mean: rng.random_range(0.1..2.0),
        },
        repair: RepairLaw::new(rng.random_range(0.05..5.0), rng.random_range(0.2..5.0)).unwrap(),
        sampling,
        costs: CostModel {
            c_s: 1.0,
            c_o: 10.0,
            c_rb: 5.0,
            c_rs: 5.0,
            p: 1.0,
        },
        // keep the grid within a few σ so no state mass underflows
        grid: DiscretisationGrid::new(4.0 * sigma / v_count as f64, v_count).unwrap(),
    };
    let policy = ChartPolicy::new(rng.random_range(0.1..3.0), rng.random_range(0.0..2.0) * sigma).unwrap();
    (model, policy)
}

fn c7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_row, mut worst_res, mut worst_m) = (0.0f64, 0.0f64, 0.0f64);
    let mut positive = true;
    let mut alarm_rows_clear = true;
    for _ in 0..20 {
        let (m, p) = random_model(&mut rng);
        let art = ChainArtifacts::build(&m, p).unwrap();
        for row in art.transition.rows() {
            worst_row = worst_row.max((row.sum() - 1.0).abs());
        }
        worst_res = worst_res.max(art.stationary_residual);
        positive &= art.stationary.iter().all(|&x| x > 0.0);
        positive &= art.stationary.len() == recurrent_indices(m.grid.v_count).len();
        let repair = RepairTable::new(&m.repair, &m.grid).unwrap();
        let mm = repair_start_matrix(&repair, &m.grid);
        let n = m.grid.v_count;
        for (i, row) in mm.rows().into_iter().enumerate() {
            worst_m = worst_m.max((row.sum() - 1.0).abs());
            if i >= n - 1 {
                alarm_rows_clear &= row[0] == 0.0;
            }
        }
    }
    let pass = worst_row <= 1e-9 && worst_res < 1e-8 && positive && worst_m <= 1e-9 && alarm_rows_clear;
    Outcome {
        pass,
        detail: format!(
            "20 draws: row-sum err {worst_row:.1e}, residual {worst_res:.1e}, positive {positive}, M row err {worst_m:.1e}, alarm rows clear {alarm_rows_clear}"
        ),
    }
}

fn c8() -> Outcome {
    let small = fraction_b(1e-6, 1.0).unwrap();
    let large = fraction_b(50.0, 1.0).unwrap();
    Outcome {
        pass: (small - 0.5).abs() <= 1e-4 && (large - 1.0).abs() <= 1e-3,
        detail: format!(
            "B(1e-6)={small:.8} (|err| {:.1e}), B(50)={large:.6} (|err| {:.1e})",
            (small - 0.5).abs(),
            (large - 1.0).abs()
        ),
    }
}

fn c9() -> Outcome {
    let s = scenario("ldl");
    let m = s.model();
    let co = sensitivity(&m, &s.search, "c_o", &[2.5, 5.3, 10.0, 20.0]).unwrap();
    let z = sensitivity(&m, &s.search, "z", &[10.0, 20.0, 30.0, 40.0, 50.0]).unwrap();
    let not = |t: Trend, bad: Trend| t != bad && t != Trend::Mixed;
    let pass = not(co.trends.h, Trend::Nondecreasing)
        && not(co.trends.expected_cost, Trend::Nonincreasing)
        && not(co.trends.cost_std, Trend::Nonincreasing)
        && not(z.trends.h, Trend::Nonincreasing)
        && not(z.trends.k, Trend::Nondecreasing);
    Outcome {
        pass,
        detail: format!(
            "c_o: h {:?}, E {:?}, sd {:?}; z: h {:?}, k {:?}",
            co.trends.h, co.trends.expected_cost, co.trends.cost_std, z.trends.h, z.trends.k
        ),
    }
}

fn c10() -> Outcome {
    let s = scenario("ldl");
    let coarse = s.model();
    let mut fine = coarse.clone();
    fine.grid = DiscretisationGrid::new(coarse.grid.delta_step / 2.0, 2 * coarse.grid.v_count).unwrap();
    let policy = ChartPolicy::new(56.57, 0.143).unwrap();
    let a = optimizer::evaluate(&coarse, policy).unwrap().expected_cost;
    let b = optimizer::evaluate(&fine, policy).unwrap().expected_cost;
    let change = (b - a) / a;
    Outcome {
        pass: change.abs() < 0.01,
        detail: format!(
            "E at V_d={} {:.5}, at V_d={} {:.5} ({:+.2}%)",
            coarse.grid.v_count,
            a,
            fine.grid.v_count,
            b,
            100.0 * change
        ),
    }
}

fn main() {
    let checks: [(u32, fn() -> Outcome); 10] =
        [(1, c1), (2, c2), (3, c3), (4, c4), (5, c5), (6, c6), (7, c7), (8, c8), (9, c9), (10, c10)];
    let mut failed = Vec::new();
    for (n, check) in checks {
        let o = check();
        println!("criterion {n}: {} — {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
