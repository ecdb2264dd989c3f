//! Seeded Monte-Carlo checks. Tolerances are several standard errors wide.

use std::collections::HashMap;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikemon::eigen::{lambda_max, largest_eigenvalue, EigenOptions};
use spikemon::experiments::{run_pfa, run_power, ExperimentPlan, ResultRow, Thresholds};
use spikemon::ingest::{
    center_by_baseline, deseasonalize, fit_seasonal, outer_product_stream, PanelSeries,
};
use spikemon::quantiles::{quantiles_of_l, simulate_draws, QuantileRequest, QuantileTable};
use spikemon::stats::{autocorrelation_lag1, correlation, ks_two_sample, mean, variance};
use spikemon::synth::{
    gen_phi, pure_noise, DiscreteLaw, SignalLaw, SignalSpec, StreamGenerator, WignerStreamSpec,
};
use spikemon::{monitor, EigenSeries, MonitorOptions};

// Box-Muller on a separate generator, so the oracle shares no sampling code
// with the library.
struct Gauss(ChaCha8Rng);

impl Gauss {
    fn new(seed: u64) -> Self {
        Gauss(ChaCha8Rng::seed_from_u64(seed))
    }
    fn next(&mut self) -> f64 {
        let u1: f64 = 1.0 - self.0.random::<f64>();
        let u2: f64 = self.0.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn zero_signal() -> SignalSpec {
    SignalSpec::subcritical(SignalLaw::Table(DiscreteLaw::constant(0.0).unwrap()))
}

#[test]
fn ar_noise_is_stationary_with_unit_variance() {
    let wspec = WignerStreamSpec::new(3, 17, 18);
    let phi = gen_phi(&wspec).unwrap();
    let mut g = StreamGenerator::new(&wspec, &zero_signal(), 1).unwrap();
    let root_n = 3f64.sqrt();
    let mut off = Vec::new();
    let mut diag = Vec::new();
    for _ in 0..10_000 {
        let o = g.next_observation();
        off.push(o.noise.get(0, 1) * root_n);
        diag.push(o.noise.get(2, 2) * root_n);
    }
    assert!((variance(&off) - 1.0).abs() < 0.1, "{}", variance(&off));
    assert!((variance(&diag) - 1.0).abs() < 0.1, "{}", variance(&diag));
    assert!(mean(&off).abs() < 0.1);
    assert!((autocorrelation_lag1(&off) - phi.get(0, 1)).abs() < 0.05);
    assert!((autocorrelation_lag1(&diag) - phi.get(2, 2)).abs() < 0.05);
}

#[test]
fn spike_directions_are_fresh_each_step() {
    let wspec = WignerStreamSpec::new(4, 1, 2);
    let mut g =
        StreamGenerator::new(&wspec, &SignalSpec::subcritical(SignalLaw::Uniform01), 1).unwrap();
    let first: Vec<f64> = (0..5000)
        .map(|_| g.next_observation().direction[0])
        .collect();
    let r = correlation(&first[..4999], &first[1..]);
    assert!(r.abs() < 0.05, "{r}");
    let sq: Vec<f64> = first.iter().map(|x| x * x).collect();
    assert!((mean(&sq) - 0.25).abs() < 0.02);
}

#[test]
fn observation_is_rank_one_plus_noise() {
    let wspec = WignerStreamSpec::new(6, 4, 5);
    let mut g = StreamGenerator::new(
        &wspec,
        &SignalSpec::supercritical(SignalLaw::Beta24, 0.7, 0),
        3,
    )
    .unwrap();
    for _ in 0..10 {
        let o = g.next_observation();
        let spike = o.matrix.lin_comb(1.0, &o.noise, -1.0).unwrap();
        assert!((spike.trace() - o.strength).abs() < 1e-10);
        assert!((lambda_max(&spike).unwrap() - o.strength).abs() < 1e-10);
        if o.t > 3 {
            assert!((1.0..=1.7).contains(&o.strength));
        }
    }
}

#[test]
fn subcritical_top_eigenvalue_sits_at_the_edge() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lambdas: Vec<f64> = (0..100)
        .map(|_| lambda_max(&pure_noise(100, &mut rng).unwrap()).unwrap())
        .collect();
    let inside = lambdas.iter().filter(|l| (*l - 2.0).abs() <= 0.35).count();
    assert!(inside >= 95, "{inside}");
}

#[test]
fn supercritical_top_eigenvalue_detaches() {
    let spec = SignalSpec::subcritical(SignalLaw::Table(DiscreteLaw::constant(1.0).unwrap()));
    let lambdas: Vec<f64> = (0..100)
        .map(|r| {
            let wspec = WignerStreamSpec::new(200, 1, 100 + r);
            let mut g = StreamGenerator::new(&wspec, &spec, 1).unwrap();
            let o = g.next_observation();
            // Double the unit-strength spike.
            let spike = o.matrix.lin_comb(1.0, &o.noise, -1.0).unwrap();
            let m = o.matrix.lin_comb(1.0, &spike, 1.0).unwrap();
            lambda_max(&m).unwrap()
        })
        .collect();
    assert!((mean(&lambdas) - 2.5).abs() < 0.1, "{}", mean(&lambdas));
}

fn naive_l(m: usize, horizon: usize, g: &mut Gauss) -> f64 {
    let w: Vec<f64> = std::iter::once(0.0)
        .chain((0..m + horizon).scan(0.0, |s, _| {
            *s += g.next();
            Some(*s)
        }))
        .collect();
    let mf = m as f64;
    let denom: f64 = (1..=m).map(|t| (w[t] - t as f64 / mf * w[m]).abs()).sum();
    let mut best = f64::NEG_INFINITY;
    for k in 1..=horizon {
        let mk = (m + k) as f64;
        best = best.max(mf * mf / mk * (w[m + k] - mk / mf * w[m]) / denom);
    }
    best
}

#[test]
fn limit_statistic_matches_independent_sampler() {
    let ours = simulate_draws(500, 500, 10_000, 21);
    let mut g = Gauss::new(77);
    let theirs: Vec<f64> = (0..10_000).map(|_| naive_l(500, 500, &mut g)).collect();
    let ks = ks_two_sample(&ours, &theirs);
    assert!(ks.p_value > 0.01, "{ks:?}");
    let positive = ours.iter().filter(|&&x| x > 0.0).count() as f64 / ours.len() as f64;
    assert!(positive > 0.4, "{positive}");
}

#[test]
fn critical_values_depend_on_the_horizon_ratio_only() {
    let q = |m, horizon| {
        let req = QuantileRequest {
            m,
            horizon,
            alphas: vec![0.05],
            replications: 4000,
            seed: 5,
        };
        quantiles_of_l(&req)
            .unwrap()
            .threshold_for(0.05, Some(m))
            .unwrap()
    };
    let (a, b) = (q(100, 100), q(300, 300));
    assert!((a - b).abs() < 0.35, "{a} vs {b}");
    // A longer horizon relative to m can only raise the maximum.
    assert!(q(100, 300) > b + 0.5);
}

fn table(ms: &[usize]) -> Thresholds {
    let mut t = QuantileTable::default();
    for &m in ms {
        let req = QuantileRequest {
            m,
            horizon: 500,
            alphas: vec![0.05, 0.1],
            replications: 10_000,
            seed: 1,
        };
        t.merge(&quantiles_of_l(&req).unwrap());
    }
    Thresholds::Table(t)
}

fn value(rows: &[ResultRow], metric: &str, alpha: f64, pick: impl Fn(&ResultRow) -> bool) -> f64 {
    rows.iter()
        .find(|r| r.metric == metric && r.alpha == alpha && pick(r))
        .unwrap_or_else(|| panic!("no {metric} row"))
        .value
}

#[test]
fn false_alarm_rates_near_table_values() {
    let th = table(&[300]);
    // Reference false-alarm rates at m = 300, n = 10.
    for (law, p05, p10) in [
        (SignalLaw::Uniform01, 0.066, 0.130),
        (SignalLaw::Beta24, 0.063, 0.131),
    ] {
        let plan = ExperimentPlan::new(vec![300], vec![10], vec![0.05, 0.1], law, 1000, 8);
        let rows = run_pfa(&plan, &th).unwrap();
        let a = value(&rows, "pfa", 0.05, |_| true);
        let b = value(&rows, "pfa", 0.1, |_| true);
        assert!((a - p05).abs() <= 0.03, "alpha 0.05: {a}");
        assert!((b - p10).abs() <= 0.03, "alpha 0.10: {b}");
        assert!(a <= b);
    }
}

#[test]
fn early_changes_are_caught() {
    let th = table(&[100]);
    let plan = ExperimentPlan::new(
        vec![100],
        vec![10],
        vec![0.05],
        SignalLaw::Uniform01,
        100,
        4,
    )
    .with_power_grid(vec![0.1, 1.0], vec![20, 150]);
    let rows = run_power(&plan, &th).unwrap();
    let p = |d: f64, k: usize| {
        value(&rows, "power", 0.05, |r| {
            r.delta == Some(d) && r.kstar == Some(k)
        })
    };
    assert!(p(1.0, 20) >= 0.95, "{}", p(1.0, 20));
    assert!(p(1.0, 20) >= p(1.0, 150) - 0.05);
    assert!(p(0.1, 20) >= p(0.1, 150) - 0.05);
    assert!(p(1.0, 150) >= p(0.1, 150) - 0.05);
    let delay = value(&rows, "mean_delay", 0.05, |r| {
        r.delta == Some(1.0) && r.kstar == Some(20)
    });
    assert!(delay.is_finite() && delay > 0.0);
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn panel(
    start: NaiveDate,
    days: usize,
    locs: usize,
    mut f: impl FnMut(NaiveDate, usize) -> f64,
) -> PanelSeries {
    let locations = (0..locs).map(|k| format!("loc{k}")).collect();
    let rows = start
        .iter_days()
        .take(days)
        .map(|d| (d, (0..locs).map(|k| Some(f(d, k))).collect()))
        .collect();
    PanelSeries::new(locations, rows).unwrap()
}

fn season(d: NaiveDate, k: usize) -> f64 {
    10.0 + (k as f64 + 1.0) * (std::f64::consts::TAU * d.ordinal0() as f64 / 365.0).sin()
}

#[test]
fn seasonal_fit_matches_direct_computation() {
    let mut g = Gauss::new(3);
    let history = panel(date(2001, 1, 1), 4 * 365 + 1, 2, |d, k| {
        season(d, k) + 0.1 * g.next()
    });
    let model = fit_seasonal(&history, 365, 7).unwrap();

    // Calendar-day means keyed on (month, day), then a 7-day centered window.
    let mut by_day: HashMap<(u32, u32), (f64, f64)> = HashMap::new();
    for (d, vals) in history.days() {
        if d.month() == 2 && d.day() == 29 {
            continue;
        }
        let e = by_day.entry((d.month(), d.day())).or_default();
        e.0 += vals[1].unwrap();
        e.1 += 1.0;
    }
    let year: Vec<NaiveDate> = date(2001, 1, 1).iter_days().take(365).collect();
    let raw: Vec<f64> = year
        .iter()
        .map(|d| {
            let (s, c) = by_day[&(d.month(), d.day())];
            s / c
        })
        .collect();
    for (i, d) in year.iter().enumerate() {
        let smooth: f64 = (-3i64..=3)
            .map(|o| raw[(i as i64 + o).rem_euclid(365) as usize])
            .sum::<f64>()
            / 7.0;
        assert!((model.value(1, *d).unwrap() - smooth).abs() < 1e-9);
        assert!((model.value(1, *d).unwrap() - season(*d, 1)).abs() < 0.1);
    }
}

#[test]
fn outer_products_are_rank_one_and_centering_removes_the_mean() {
    let mut g = Gauss::new(4);
    let series = panel(date(2010, 3, 1), 60, 4, |_, _| g.next());
    let stream = outer_product_stream(&series).unwrap();
    for (m, (_, v)) in stream.iter().zip(series.days()) {
        let norm2: f64 = v.iter().map(|x| x.unwrap().powi(2)).sum();
        assert!((lambda_max(m).unwrap() - norm2).abs() < 1e-9 * (1.0 + norm2));
        assert!((m.trace() - norm2).abs() < 1e-9 * (1.0 + norm2));
        let neg = largest_eigenvalue(&m.scaled(-1.0).unwrap(), &EigenOptions::default()).unwrap();
        assert!(neg <= 1e-9 * (1.0 + norm2), "not PSD: {neg}");
    }
    let baseline = 30;
    let mut all = stream[..baseline].to_vec();
    all.extend_from_slice(&stream[..baseline]);
    let centered = center_by_baseline(&all, baseline).unwrap();
    for idx in 0..centered[0].packed().len() {
        let avg: f64 = centered.iter().map(|m| m.packed()[idx]).sum::<f64>() / baseline as f64;
        assert!(avg.abs() < 1e-12);
    }
}

fn panel_alarm(seed: u64, spike_from: Option<usize>) -> bool {
    const LOCS: usize = 5;
    let mut g = Gauss::new(seed);
    let history = panel(date(2001, 1, 1), 3 * 365, LOCS, |d, k| {
        season(d, k) + g.next()
    });
    let model = fit_seasonal(&history, 365, 7).unwrap();
    let mut day = 0;
    let series = panel(date(2004, 1, 1), 700, LOCS, |d, k| {
        if k == 0 {
            day += 1;
        }
        let common = match spike_from {
            Some(s) if day > s => 3.0 * g.next(),
            _ => 0.0,
        };
        season(d, k) + g.next() + common
    });
    let anomalies = deseasonalize(&series, &model).unwrap();
    let stream = center_by_baseline(&outer_product_stream(&anomalies).unwrap(), 100).unwrap();
    let lambdas: Vec<f64> = stream.iter().map(|m| lambda_max(m).unwrap()).collect();
    let m = 250;
    let train = EigenSeries::new(lambdas[..m].to_vec(), m, LOCS).unwrap();
    let v = monitor(
        &train,
        lambdas[m..].iter().copied(),
        5.85,
        MonitorOptions::default(),
    )
    .unwrap();
    v.alarmed()
}

#[test]
fn panel_pipeline_flags_a_common_factor() {
    assert!(panel_alarm(1, Some(450)));
    assert!(panel_alarm(2, Some(400)));
    let quiet = (10..50).filter(|&s| !panel_alarm(s, None)).count();
    assert!(quiet >= 36, "{quiet} of 40 stayed quiet");
}
