use std::collections::BTreeMap;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{SleepEpisode, SleepStage};
use crate::temporal::{Instant, Interval};

/// How overlapping sleep records from several devices are resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePolicy {
    /// Substrings of source names in descending priority. Sources matching
    /// none of them rank last.
    pub preferred: Vec<String>,
    /// Same-source, same-stage neighbours separated by at most this gap are merged.
    #[serde(with = "seconds")]
    pub merge_tolerance: Duration,
}

impl Default for SourcePolicy {
    fn default() -> Self {
        SourcePolicy {
            preferred: vec!["Watch".to_string()],
            merge_tolerance: Duration::seconds(60),
        }
    }
}

impl SourcePolicy {
    fn rank(&self, source: &str) -> usize {
        self.preferred
            .iter()
            .position(|p| source.contains(p.as_str()))
            .unwrap_or(self.preferred.len())
    }
}

mod seconds {
    use chrono::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(d.num_seconds())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        i64::deserialize(d).map(Duration::seconds)
    }
}

fn stage_priority(stage: SleepStage) -> u8 {
    match stage {
        SleepStage::Deep | SleepStage::Core | SleepStage::Rem => 0,
        SleepStage::Awake => 1,
        SleepStage::InBedUnspecified => 2,
    }
}

/// Resolves overlapping sleep records into a disjoint timeline.
///
/// Episodes claim time in priority order: preferred source first, then
/// asleep stages before awake before in-bed, then earliest start. Later
/// claimants keep only the parts not already taken, which can split them.
pub fn reconcile_sleep(episodes: &[SleepEpisode], policy: &SourcePolicy) -> Vec<SleepEpisode> {
    let mut order: Vec<&SleepEpisode> = episodes.iter().collect();
    order.sort_by(|a, b| {
        (policy.rank(&a.source), &a.source, stage_priority(a.stage), a.interval.start(), a.interval.end())
            .cmp(&(policy.rank(&b.source), &b.source, stage_priority(b.stage), b.interval.start(), b.interval.end()))
    });

    // start -> end of every claimed span; entries never overlap
    let mut claimed: BTreeMap<Instant, Instant> = BTreeMap::new();
    let mut kept = Vec::with_capacity(episodes.len());
    for ep in order {
        for piece in unclaimed_pieces(&claimed, ep.interval) {
            claimed.insert(piece.start(), piece.end());
            kept.push(SleepEpisode { interval: piece, stage: ep.stage, source: ep.source.clone() });
        }
    }
    kept.sort_by_key(|e| e.interval.start());

    let mut merged: Vec<SleepEpisode> = Vec::with_capacity(kept.len());
    for ep in kept {
        if let Some(last) = merged.last_mut() {
            if last.source == ep.source
                && last.stage == ep.stage
                && ep.interval.start() - last.interval.end() <= policy.merge_tolerance
            {
                last.interval = last.interval.hull(&ep.interval);
                continue;
            }
        }
        merged.push(ep);
    }
    merged
}

fn unclaimed_pieces(claimed: &BTreeMap<Instant, Instant>, iv: Interval) -> Vec<Interval> {
    let mut cursor = iv.start();
    if let Some((_, &end)) = claimed.range(..=iv.start()).next_back() {
        cursor = cursor.max(end);
    }
    let mut pieces = Vec::new();
    for (&start, &end) in claimed.range(iv.start()..iv.end()) {
        if start > cursor {
            pieces.push(Interval::new(cursor, start).expect("cursor precedes claim"));
        }
        cursor = cursor.max(end);
    }
    if cursor < iv.end() {
        pieces.push(Interval::new(cursor, iv.end()).expect("cursor precedes end"));
    }
    pieces
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(mins: i64) -> Instant {
        Instant::from_unix(1_736_550_000 + mins * 60)
    }

    fn ep(stage: SleepStage, a: i64, b: i64, source: &str) -> SleepEpisode {
        SleepEpisode { interval: Interval::new(t(a), t(b)).unwrap(), stage, source: source.into() }
    }

    #[test]
    fn preferred_source_wins_identical_episode() {
        let input = [ep(SleepStage::Deep, 0, 30, "iPhone"), ep(SleepStage::Deep, 0, 30, "Alice's Apple Watch")];
        let out = reconcile_sleep(&input, &SourcePolicy::default());
        assert_eq!(out, vec![ep(SleepStage::Deep, 0, 30, "Alice's Apple Watch")]);
    }

    #[test]
    fn disjoint_unchanged() {
        let input = vec![
            ep(SleepStage::Core, 0, 30, "Watch"),
            ep(SleepStage::Deep, 30, 60, "Watch"),
            ep(SleepStage::Awake, 90, 100, "iPhone"),
        ];
        assert_eq!(reconcile_sleep(&input, &SourcePolicy::default()), input);
    }

    #[test]
    fn merges_small_gap() {
        let start = Instant::parse_apple("2025-01-10 23:00:00 +0100").unwrap();
        let mk = |a: i64, b: i64| SleepEpisode {
            interval: Interval::new(start + Duration::seconds(a), start + Duration::seconds(b)).unwrap(),
            stage: SleepStage::Deep,
            source: "Watch".into(),
        };
        let out = reconcile_sleep(&[mk(0, 1800), mk(1830, 3600)], &SourcePolicy::default());
        assert_eq!(out, vec![mk(0, 3600)]);
    }

    #[test]
    fn lower_priority_is_truncated_and_split() {
        let input = [ep(SleepStage::Core, 0, 100, "iPhone"), ep(SleepStage::Deep, 40, 60, "Watch")];
        let out = reconcile_sleep(&input, &SourcePolicy::default());
        assert_eq!(
            out,
            vec![
                ep(SleepStage::Core, 0, 40, "iPhone"),
                ep(SleepStage::Deep, 40, 60, "Watch"),
                ep(SleepStage::Core, 60, 100, "iPhone"),
            ]
        );
    }

    #[test]
    fn in_bed_only_fills_gaps_of_same_source() {
        let input = [ep(SleepStage::InBedUnspecified, 0, 100, "Watch"), ep(SleepStage::Core, 10, 90, "Watch")];
        let out = reconcile_sleep(&input, &SourcePolicy::default());
        assert_eq!(
            out,
            vec![
                ep(SleepStage::InBedUnspecified, 0, 10, "Watch"),
                ep(SleepStage::Core, 10, 90, "Watch"),
                ep(SleepStage::InBedUnspecified, 90, 100, "Watch"),
            ]
        );
    }

    fn union_minutes(mut ivs: Vec<(i64, i64)>) -> i64 {
        ivs.sort();
        let mut total = 0;
        let mut cur: Option<(i64, i64)> = None;
        for (a, b) in ivs {
            match cur {
                Some((s, e)) if a <= e => cur = Some((s, e.max(b))),
                Some((s, e)) => {
                    total += e - s;
                    cur = Some((a, b));
                }
                None => cur = Some((a, b)),
            }
        }
        total + cur.map_or(0, |(s, e)| e - s)
    }

    fn arb_episode() -> impl Strategy<Value = SleepEpisode> {
        let stages = prop::sample::select(vec![
            SleepStage::Awake,
            SleepStage::Core,
            SleepStage::Deep,
            SleepStage::Rem,
            SleepStage::InBedUnspecified,
        ]);
        let sources = prop::sample::select(vec!["Apple Watch", "iPhone", "Oura"]);
        (0i64..600, 1i64..120, stages, sources).prop_map(|(a, len, stage, src)| ep(stage, a, a + len, src))
    }

    proptest! {
        #[test]
        fn output_is_pairwise_disjoint(input in prop::collection::vec(arb_episode(), 0..40)) {
            let out = reconcile_sleep(&input, &SourcePolicy::default());
            for (i, a) in out.iter().enumerate() {
                for b in &out[i + 1..] {
                    prop_assert!(!a.interval.overlaps(&b.interval), "{a:?} overlaps {b:?}");
                }
            }
        }

        #[test]
        fn asleep_total_bounded_by_input_union(input in prop::collection::vec(arb_episode(), 0..40)) {
            // gap bridging can only add time when merging is enabled
            let policy = SourcePolicy { merge_tolerance: Duration::zero(), ..SourcePolicy::default() };
            let out = reconcile_sleep(&input, &policy);
            let asleep_out: i64 = out.iter().filter(|e| e.stage.is_asleep()).map(|e| e.interval.duration().num_minutes()).sum();
            let union = union_minutes(
                input.iter().filter(|e| e.stage.is_asleep())
                    .map(|e| ((e.interval.start() - t(0)).num_minutes(), (e.interval.end() - t(0)).num_minutes()))
                    .collect(),
            );
            prop_assert!(asleep_out <= union, "{asleep_out} > {union}");
        }

        #[test]
        fn covered_time_equals_input_union(input in prop::collection::vec(arb_episode(), 0..40)) {
            let policy = SourcePolicy { merge_tolerance: Duration::zero(), ..SourcePolicy::default() };
            let out = reconcile_sleep(&input, &policy);
            let covered: i64 = out.iter().map(|e| e.interval.duration().num_minutes()).sum();
            let union = union_minutes(
                input.iter()
                    .map(|e| ((e.interval.start() - t(0)).num_minutes(), (e.interval.end() - t(0)).num_minutes()))
                    .collect(),
            );
            prop_assert_eq!(covered, union);
        }
    }
}
