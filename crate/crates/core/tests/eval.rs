use countycast::dataset::{generate_synthetic_panel, Quantity, SynthSpec};
use countycast::eval::{
    aggregate_state, backtest, chronological_folds, cumulative_to_daily, ensemble_ci, make_windows, rmse_daily,
    rmse_macro_micro, ForecastTask, ModelSpec, Objective,
};
use countycast::CountyKey;
use proptest::prelude::*;

fn panel(counties: usize, days: usize) -> countycast::FeaturePanel {
    generate_synthetic_panel(&SynthSpec::new(counties, days, 0.9), 11).unwrap()
}

#[test]
fn one_test_window_per_county() {
    let p = panel(6, 120);
    let task = ForecastTask::last_days(&p, Objective::NewDailyDeaths, 10, 15, 15).unwrap();
    let s = make_windows(&p, &task, 0.1).unwrap();
    assert_eq!(s.test.len(), 6);
    let mut counties: Vec<usize> = s.test.iter().map(|w| w.county).collect();
    counties.dedup();
    assert_eq!(counties.len(), 6);
    for w in &s.test {
        assert_eq!(w.last_input_day() + 1, 105);
        assert_eq!(w.targets.len(), 15);
    }
    assert!(!s.train.is_empty() && !s.val.is_empty());
    let last_train_start = s.train.iter().map(|w| w.start).max().unwrap();
    assert!(s.val.iter().all(|w| w.start > last_train_start));
}

#[test]
fn test_period_before_panel_is_error() {
    let p = panel(3, 60);
    let mut task = ForecastTask::last_days(&p, Objective::NewDailyCases, 10, 10, 10).unwrap();
    task.test_start = p.start_date() - chrono::Days::new(5);
    assert!(make_windows(&p, &task, 0.1).is_err());
    task.test_start = p.start_date();
    assert!(make_windows(&p, &task, 0.1).is_err());
}

#[test]
fn excluded_state_has_no_windows() {
    let p = panel(10, 80);
    let mut task = ForecastTask::last_days(&p, Objective::NewDailyCases, 7, 5, 12).unwrap();
    task.exclude_states = vec!["NY".into()];
    let s = make_windows(&p, &task, 0.1).unwrap();
    for w in s.train.iter().chain(&s.val).chain(&s.test) {
        assert_ne!(p.counties()[w.county].state(), "NY");
    }
    let filtered = task.filter_panel(&p).unwrap();
    assert!(filtered.counties().iter().all(|k| k.state() != "NY"));
    assert!(filtered.n_counties() < p.n_counties());
}

#[test]
fn windows_never_leak() {
    let p = panel(5, 90);
    for obj in Objective::ALL {
        for (w_in, w_out, test_days) in [(10, 10, 10), (7, 15, 20), (2, 1, 30), (14, 20, 25)] {
            let task = ForecastTask::last_days(&p, obj, w_in, w_out, test_days).unwrap();
            let s = make_windows(&p, &task, 0.1).unwrap();
            s.check_no_leakage().unwrap();
            assert!(s.last_fit_day().unwrap() < s.first_test_target().unwrap());
            for w in &s.test {
                assert!(w.last_input_day() + 1 >= s.test_start);
                assert!(w.last_input_day() + w_out <= s.test_end);
            }
        }
    }
}

#[test]
fn window_contents_match_panel() {
    let p = panel(4, 60);
    let task = ForecastTask::last_days(&p, Objective::CumulativeDeathsPer100k, 5, 3, 6).unwrap();
    let s = make_windows(&p, &task, 0.2).unwrap();
    let w = &s.test[0];
    let series = p.outcome_series(w.county, Objective::CumulativeDeathsPer100k.outcome());
    assert_eq!(w.history, series[w.start..w.start + 5].to_vec());
    assert_eq!(w.targets, series[w.start + 5..w.start + 8].to_vec());
    assert_eq!(w.dynamic_row(0), p.dynamic_row(w.county, w.start));
    assert_eq!(w.statics, p.static_row(w.county));
}

#[test]
fn rmse_examples() {
    let zero = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
    assert_eq!(rmse_daily(&zero, &zero).unwrap(), (vec![0.0, 0.0], 0.0));
    assert_eq!(rmse_macro_micro(&zero, &zero).unwrap(), (0.0, 0.0));

    let (d, avg) = rmse_daily(&[vec![3.0, 4.0]], &[vec![0.0, 0.0]]).unwrap();
    assert_eq!(d, vec![3.0, 4.0]);
    assert_eq!(avg, 3.5);

    let (d, _) = rmse_daily(&[vec![3.0], vec![-4.0]], &[vec![0.0], vec![0.0]]).unwrap();
    assert_eq!(d[0], (25.0f64 / 2.0).sqrt());

    let (ma, mi) = rmse_macro_micro(&[vec![0.0; 3], vec![10.0; 3]], &[vec![0.0; 3], vec![0.0; 3]]).unwrap();
    assert!((ma - 5.0).abs() < 1e-12);
    assert!((mi - 50f64.sqrt()).abs() < 1e-12);

    let (ma, mi) = rmse_macro_micro(&[vec![1.0, -2.0, 5.0]], &[vec![0.0, 0.0, 0.0]]).unwrap();
    assert_eq!(ma, mi);
    assert!(rmse_macro_micro(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
}

proptest! {
    #[test]
    fn micro_squared_is_weighted_mean_of_county_mse(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 1..12)
    ) {
        let zeros: Vec<Vec<f64>> = rows.iter().map(|r| vec![0.0; r.len()]).collect();
        let (_, micro) = rmse_macro_micro(&rows, &zeros).unwrap();
        let cells: usize = rows.iter().map(|r| r.len()).sum();
        let weighted: f64 = rows
            .iter()
            .map(|r| r.len() as f64 * (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64))
            .sum::<f64>() / cells as f64;
        prop_assert!((micro * micro - weighted).abs() <= 1e-10 * (1.0 + weighted));
    }

    #[test]
    fn one_day_average_is_that_day(rows in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let preds: Vec<Vec<f64>> = rows.iter().map(|&v| vec![v]).collect();
        let truth: Vec<Vec<f64>> = rows.iter().map(|_| vec![0.0]).collect();
        let (daily, avg) = rmse_daily(&preds, &truth).unwrap();
        prop_assert_eq!(daily[0], avg);
    }
}

#[test]
fn state_aggregation() {
    let a = CountyKey::new("36001", "NY").unwrap();
    let b = CountyKey::new("36003", "NY").unwrap();
    let c = CountyKey::new("06001", "CA").unwrap();
    let s = aggregate_state(&[a.clone(), b], &[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
    assert_eq!(s, vec![("NY".to_string(), vec![4.0, 7.0])]);
    let s = aggregate_state(&[a, c], &[vec![1.0], vec![3.0]]).unwrap();
    assert_eq!(s, vec![("CA".to_string(), vec![3.0]), ("NY".to_string(), vec![1.0])]);
}

#[test]
fn state_truth_matches_panel() {
    let p = panel(12, 50);
    let outcome = Objective::NewDailyCases.outcome();
    let rows: Vec<Vec<f64>> = (0..p.n_counties()).map(|c| p.outcome_series(c, outcome)).collect();
    let agg = aggregate_state(p.counties(), &rows).unwrap();
    for (state, series) in agg {
        for t in 0..p.n_days() {
            let mut direct = 0.0;
            for c in 0..p.n_counties() {
                if p.counties()[c].state() == state {
                    let cum = p.cumulative(c, Quantity::Cases);
                    direct += if t == 0 { 0.0 } else { cum[t] - cum[t - 1] };
                }
            }
            assert_eq!(series[t], direct);
        }
    }
}

#[test]
fn ensemble_examples() {
    let same = vec![vec![2.0, 3.0]; 4];
    for c in ensemble_ci(&same, true).unwrap() {
        assert_eq!(c.lo, c.mean);
        assert_eq!(c.hi, c.mean);
    }
    let ci = ensemble_ci(&[vec![0.0], vec![10.0]], false).unwrap();
    assert_eq!(ci[0].mean, 5.0);
    assert!((ci[0].hi - 5.0 - 1.96 * 50f64.sqrt()).abs() < 1e-12);
    assert!(ci[0].lo <= ci[0].mean && ci[0].mean <= ci[0].hi);
    let clamped = ensemble_ci(&[vec![0.0], vec![10.0]], true).unwrap();
    assert_eq!(clamped[0].lo, 0.0);
    assert!(ensemble_ci(&[vec![1.0]], true).is_err());
}

#[test]
fn cumulative_to_daily_conversion() {
    assert_eq!(cumulative_to_daily(10.0, &[12.0, 12.0, 15.0]), vec![2.0, 0.0, 3.0]);
}

#[test]
fn folds_are_chronological() {
    let p = panel(3, 100);
    let task = ForecastTask::last_days(&p, Objective::NewDailyCases, 5, 5, 5).unwrap();
    let folds = chronological_folds(&p, &task, 3, 80).unwrap();
    assert_eq!(folds.len(), 3);
    for w in folds.windows(2) {
        assert!(w[0].test_end < w[1].test_start);
    }
    assert_eq!(folds[2].test_end, p.date(79));
}

#[test]
fn single_county_report_has_equal_macro_micro() {
    let p = panel(1, 70);
    let task = ForecastTask::last_days(&p, Objective::NewDailyCases, 7, 5, 5).unwrap();
    let spec = ModelSpec {
        dwlstm: None,
        arima_star: true,
        arima_120: true,
        ..ModelSpec::default()
    };
    let r = backtest(&p, &task, &spec).unwrap();
    for m in &r.models {
        assert_eq!(m.macro_rmse, m.micro_rmse);
    }
    assert!(r.model("arima_star").is_some() && r.model("arima_120").is_some());
}
