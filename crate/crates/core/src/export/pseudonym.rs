use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calendar::Category;
use crate::log::{EventLog, Origin};

/// Original calendar subject -> pseudonym. Kept apart from the exported log.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PseudonymMap {
    pub seed: u64,
    pub mapping: BTreeMap<String, String>,
}

impl PseudonymMap {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }
}

fn prefix(category: Category, category_aware: bool) -> &'static str {
    match (category_aware, category) {
        (true, Category::Work) => "Work",
        (true, Category::Private) => "Private",
        _ => "Act",
    }
}

/// Replaces every calendar activity name by `<Prefix><n>`.
///
/// Names are numbered per prefix in the order of a seeded shuffle of the
/// sorted name set, so the mapping depends only on the seed and the set of
/// names. Workout and sleep activities keep their names.
pub fn pseudonymize(log: &EventLog, seed: u64, category_aware: bool) -> (EventLog, PseudonymMap) {
    let mut categories: BTreeMap<&str, Category> = BTreeMap::new();
    for (_, ev) in log.events() {
        if ev.origin == Origin::Calendar {
            categories.entry(ev.activity.as_str()).or_insert(ev.category);
        }
    }
    let mut names: Vec<&str> = categories.keys().copied().collect();
    names.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let mut mapping = BTreeMap::new();
    for name in names {
        let p = prefix(categories[name], category_aware);
        let n = counters.entry(p).or_insert(0);
        *n += 1;
        mapping.insert(name.to_string(), format!("{p}{n}"));
    }

    let mut out = log.clone();
    for case in &mut out.cases {
        for ev in &mut case.events {
            if ev.origin == Origin::Calendar {
                ev.activity = mapping[&ev.activity].clone();
            }
        }
        case.sort_events();
    }
    (out, PseudonymMap { seed, mapping })
}
