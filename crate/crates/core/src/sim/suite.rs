//! The bundled benchmark: four suites, two tasks each, at two obstruction
//! levels. Level 1 places the hazard close to the final target, level 2 on
//! the middle of the longest route segment. The scripted policy drives
//! straight through the hazard in every scenario.

use super::report::{method_block, SuiteTable};
use super::{run_episode, EpisodeResult, Scenario, SimError};

pub const SUITES: [&str; 4] = ["spatial", "goal", "object", "long"];

/// Seeds per scenario in the benchmark.
pub const SEEDS_PER_SCENARIO: u64 = 50;

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../scenarios/", $name, ".toml")))),*]
    };
}

/// `(name, toml)` pairs in suite order.
pub const BUNDLED: &[(&str, &str)] = bundled![
    "spatial-bowl-cabinet-1",
    "spatial-bowl-cabinet-2",
    "spatial-bowl-plate-1",
    "spatial-bowl-plate-2",
    "goal-drawer-1",
    "goal-drawer-2",
    "goal-stove-1",
    "goal-stove-2",
    "object-sauce-basket-1",
    "object-sauce-basket-2",
    "object-soup-basket-1",
    "object-soup-basket-2",
    "long-mugs-plates-1",
    "long-mugs-plates-2",
    "long-soup-sauce-1",
    "long-soup-sauce-2",
];

pub fn bundled_suite() -> Result<Vec<Scenario>, SimError> {
    BUNDLED
        .iter()
        .map(|(name, text)| Scenario::from_toml(text, &format!("<bundled>/{name}.toml")))
        .collect()
}

pub fn method_name(filter_on: bool) -> &'static str {
    if filter_on {
        "filter-on"
    } else {
        "filter-off"
    }
}

/// Runs seeds `scenario.seed + i` for `i < seeds` of every scenario,
/// sequentially, and returns the results in scenario-then-seed order.
pub fn run_all(scenarios: &[Scenario], filter_on: bool, seeds: u64) -> Result<Vec<(String, EpisodeResult)>, SimError> {
    let mut out = Vec::with_capacity(scenarios.len() * seeds as usize);
    for sc in scenarios {
        for i in 0..seeds {
            let (_, r) = run_episode(sc, filter_on, sc.seed.wrapping_add(i))?;
            out.push((sc.suite.clone(), r));
        }
    }
    Ok(out)
}

/// Builds the results table for the given filter settings.
pub fn benchmark(scenarios: &[Scenario], modes: &[bool], seeds: u64) -> Result<SuiteTable, SimError> {
    let mut blocks = Vec::with_capacity(modes.len());
    for &on in modes {
        blocks.push(method_block(method_name(on), &run_all(scenarios, on, seeds)?)?);
    }
    Ok(SuiteTable {
        suites: suite_order(scenarios),
        blocks,
    })
}

/// Suite names in order of first appearance.
pub fn suite_order(scenarios: &[Scenario]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for sc in scenarios {
        if !out.contains(&sc.suite) {
            out.push(sc.suite.clone());
        }
    }
    out
}
