//! Bundled scenarios.

use crate::scenario::{parse_scenario, Scenario};

pub const ARCHETYPES: [(&str, &str); 2] = [
    ("orchestrator", include_str!("../archetypes/orchestrator.json")),
    ("hc-default", include_str!("../archetypes/hc-default.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    ARCHETYPES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    ARCHETYPES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Option<Scenario> {
    source(name).map(|s| parse_scenario(s).expect("bundled archetype parses"))
}
