//! Seeded synthetic panels with controllable static-feature coupling.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::metrics::compliance_score;
use super::{CountyKey, FeatureKind, FeaturePanel, FeatureSpec, PanelParts, STATES};
use crate::{Error, Result};

/// Name of the static feature that drives outbreak growth.
pub const COUPLED_FEATURE: &str = "static_00";

const MOBILITY: [(&str, f64); 6] = [
    ("mobility_grocery_pharmacy", 0.6),
    ("mobility_parks", 0.8),
    ("mobility_residential", -0.4),
    ("mobility_retail_recreation", 1.0),
    ("mobility_transit_stations", 1.0),
    ("mobility_workplaces", 0.9),
];

// States used by the generator, in assignment order.
const SYNTH_STATES: [&str; 10] = ["CA", "NY", "TX", "FL", "WA", "IL", "PA", "OH", "GA", "MI"];

const BASE_RATE: f64 = 0.09;
const RATE_SPREAD: f64 = 0.35;
const ATTACK_RATE: f64 = 0.05;
const FATALITY: f64 = 0.02;
const DEATH_LAG: usize = 7;
const RECOVERY_LAG: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub counties: usize,
    pub days: usize,
    pub static_features: usize,
    /// Weight of [`COUPLED_FEATURE`] in each county's log growth rate, in [0, 1];
    /// the remaining 1 − β is independent noise.
    pub beta: f64,
    /// Scale of the multiplicative log-normal noise on daily counts.
    pub noise: f64,
    pub states: usize,
    pub start: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            counties: 30,
            days: 120,
            static_features: 8,
            beta: 0.9,
            noise: 0.1,
            states: 5,
            start: NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
        }
    }
}

impl SynthSpec {
    pub fn new(counties: usize, days: usize, beta: f64) -> Self {
        Self {
            counties,
            days,
            beta,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.counties == 0 || self.days < 2 || self.static_features == 0 || self.states == 0 {
            return Err(Error::InvalidConfig(
                "synthetic panel needs positive counties, static features, states and at least 2 days".into(),
            ));
        }
        if self.states > SYNTH_STATES.len() {
            return Err(Error::InvalidConfig(format!(
                "at most {} synthetic states",
                SYNTH_STATES.len()
            )));
        }
        if self.counties > self.states * 499 {
            return Err(Error::InvalidConfig("too many counties per state".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) || !(self.noise >= 0.0) {
            return Err(Error::InvalidConfig(
                "beta must be in [0, 1], noise non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng)
}

fn state_prefix(code: &str) -> &'static str {
    STATES.iter().find(|(s, _)| *s == code).map(|(_, p)| *p).unwrap()
}

struct County {
    key: CountyKey,
    population: u64,
    statics: Vec<f64>,
    dynamic: Vec<Vec<f64>>,
    outbreak: Vec<[f64; 3]>,
}

/// Generates a panel whose outbreaks follow logistic growth.
///
/// Each county's growth rate is `BASE_RATE · exp(RATE_SPREAD · (β·z + (1 − β)·ε))`
/// where `z` is its [`COUPLED_FEATURE`] value and `ε` independent noise.
/// The final outbreak size scales with the same rate. The remaining static
/// features are independent decoys. Daily cases are
/// Poisson around the logistic increments with log-normal rate noise,
/// deaths follow cases with a lag, and mobility drops around a county-level
/// lockdown date. Identical `(spec, seed)` produce bit-identical panels.
pub fn generate_synthetic_panel(spec: &SynthSpec, seed: u64) -> Result<FeaturePanel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = spec.days;
    let mut counties = Vec::with_capacity(spec.counties);

    for i in 0..spec.counties {
        let state = SYNTH_STATES[i % spec.states];
        let fips = format!("{}{:03}", state_prefix(state), 1 + 2 * (i / spec.states));
        let key = CountyKey::new(&fips, state)?;

        let statics: Vec<f64> = (0..spec.static_features).map(|_| normal(&mut rng)).collect();
        let eps = normal(&mut rng);
        let mix = spec.beta * statics[0] + (1.0 - spec.beta) * eps;
        let rate = BASE_RATE * (RATE_SPREAD * mix).exp();
        let population = (100_000.0 * (0.25 * normal(&mut rng)).exp()).round().max(1000.0) as u64;
        // faster spread also infects a larger share before burning out
        let capacity = ATTACK_RATE * population as f64 * rate / BASE_RATE;
        let seed_cases = 2.0 + rng.random_range(0.0..3.0);

        let expected: Vec<f64> = (0..days)
            .map(|t| capacity / (1.0 + (capacity / seed_cases - 1.0) * (-rate * t as f64).exp()))
            .collect();
        let increments: Vec<f64> = (0..days)
            .map(|t| {
                if t == 0 {
                    expected[0]
                } else {
                    expected[t] - expected[t - 1]
                }
            })
            .collect();

        let mut outbreak = vec![[0.0; 3]; days];
        let (mut cases, mut deaths) = (0.0, 0.0);
        let sigma = spec.noise;
        for t in 0..days {
            let m = (sigma * normal(&mut rng) - 0.5 * sigma * sigma).exp();
            cases += poisson(&mut rng, increments[t] * m);
            let lagged = if t >= DEATH_LAG { increments[t - DEATH_LAG] } else { 0.0 };
            let m = (sigma * normal(&mut rng) - 0.5 * sigma * sigma).exp();
            deaths += poisson(&mut rng, FATALITY * lagged * m);
            outbreak[t][0] = cases;
            outbreak[t][1] = deaths;
        }
        for t in 0..days {
            outbreak[t][2] = if t >= RECOVERY_LAG {
                (0.97 * outbreak[t - RECOVERY_LAG][0]).floor()
            } else {
                0.0
            };
        }

        let lockdown = days as f64 / 5.0 + rng.random_range(-3.0..3.0);
        let depth = 20.0 + 40.0 * rng.random::<f64>();
        let flu_phase = rng.random_range(0.0..60.0);
        let dynamic: Vec<Vec<f64>> = (0..days)
            .map(|t| {
                let tt = t as f64;
                let ramp = 1.0 / (1.0 + (-(tt - lockdown) / 2.0).exp());
                let mobility: Vec<f64> = MOBILITY
                    .iter()
                    .map(|(_, w)| -depth * w * ramp + 2.0 * normal(&mut rng))
                    .collect();
                let compliance = compliance_score(&mobility).expect("six categories");
                let flu =
                    (2.0 + 1.5 * (2.0 * std::f64::consts::PI * (tt + flu_phase) / 60.0).cos() + 0.2 * normal(&mut rng))
                        .max(0.0);
                let active = expected[t] - if t >= 10 { expected[t - 10] } else { 0.0 };
                let hosp = (0.05 * active * (0.1 * normal(&mut rng)).exp()).max(0.0);
                // alphabetical: compliance, covid_hospitalizations, influenza_activity, mobility_*
                let mut row = vec![compliance, hosp, flu];
                row.extend(mobility);
                row
            })
            .collect();

        counties.push(County {
            key,
            population,
            statics,
            dynamic,
            outbreak,
        });
    }
    counties.sort_by(|a, b| a.key.cmp(&b.key));

    let static_features = (0..spec.static_features)
        .map(|k| FeatureSpec {
            name: format!("static_{k:02}"),
            unit: "z-score".into(),
            kind: FeatureKind::Raw,
            source: "synthetic".into(),
        })
        .collect();
    let mut dynamic_features = vec![
        FeatureSpec {
            name: "compliance".into(),
            unit: "score".into(),
            kind: FeatureKind::Compliance,
            source: "mobility".into(),
        },
        FeatureSpec {
            name: "covid_hospitalizations".into(),
            unit: "patients".into(),
            kind: FeatureKind::Raw,
            source: "hospitalizations".into(),
        },
        FeatureSpec {
            name: "influenza_activity".into(),
            unit: "activity level".into(),
            kind: FeatureKind::Raw,
            source: "influenza".into(),
        },
    ];
    dynamic_features.extend(MOBILITY.iter().map(|(name, _)| FeatureSpec {
        name: name.to_string(),
        unit: "percent change from baseline".into(),
        kind: FeatureKind::Mobility,
        source: "mobility".into(),
    }));

    let mut parts = PanelParts {
        counties: Vec::new(),
        population: Vec::new(),
        start: spec.start,
        days,
        static_features,
        dynamic_features,
        recovered_available: true,
        static_values: Vec::new(),
        dynamic_values: Vec::new(),
        outbreak: Vec::new(),
        flags: Vec::new(),
    };
    for c in counties {
        parts.counties.push(c.key);
        parts.population.push(c.population);
        parts.static_values.extend(c.statics);
        for t in 0..days {
            parts.dynamic_values.extend_from_slice(&c.dynamic[t]);
            parts.outbreak.extend_from_slice(&c.outbreak[t]);
        }
    }
    FeaturePanel::from_parts(parts)
}
