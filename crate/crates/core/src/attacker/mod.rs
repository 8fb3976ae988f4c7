//! Attacker inference from distributed alarms.
//!
//! Two neighborhood-voting rules pinpoint FDFF attackers; a group ranking
//! points at the region of an FNI attacker.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detection::AlarmEvent;
use crate::sim::{ExchangeLog, NodeId, NodeMetric};

/// Default exchange-history depth, in windows.
pub const DEFAULT_EXCHANGE_DEPTH: usize = 10;

/// Grids above this size gave no usable region ranking.
pub const REGION_RELIABLE_MAX_NODES: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alarm {
    pub node: NodeId,
    pub window: usize,
    pub metric: NodeMetric,
}

/// First alarm per node and metric.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmSet {
    alarms: Vec<Alarm>,
}

impl AlarmSet {
    pub fn new(alarms: impl IntoIterator<Item = Alarm>) -> Self {
        let mut seen = BTreeSet::new();
        let mut kept: Vec<Alarm> = alarms
            .into_iter()
            .filter(|a| seen.insert((a.node, a.metric)))
            .collect();
        kept.sort_by_key(|a| (a.window, a.node));
        Self { alarms: kept }
    }

    pub fn from_events(events: &[AlarmEvent]) -> Self {
        Self::new(events.iter().map(|e| Alarm {
            node: e.node,
            window: e.window,
            metric: e.metric,
        }))
    }

    pub fn alarms(&self) -> &[Alarm] {
        &self.alarms
    }

    pub fn is_empty(&self) -> bool {
        self.alarms.is_empty()
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.alarms.iter().map(|a| a.node).collect()
    }

    /// Earliest and latest alarm windows.
    pub fn window_span(&self) -> Option<(usize, usize)> {
        let first = self.alarms.iter().map(|a| a.window).min()?;
        let last = self.alarms.iter().map(|a| a.window).max()?;
        Some((first, last))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuspectTally {
    pub counts: BTreeMap<NodeId, usize>,
    pub neighbor_degree: BTreeMap<NodeId, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identification {
    pub declared: BTreeSet<NodeId>,
    pub tally: SuspectTally,
    /// Alarming nodes that had nobody to nominate.
    pub abstained: Vec<NodeId>,
}

fn declare(counts: BTreeMap<NodeId, usize>, graph: &[Vec<NodeId>]) -> (BTreeSet<NodeId>, SuspectTally) {
    let neighbor_degree: BTreeMap<NodeId, usize> = counts
        .keys()
        .map(|&s| (s, graph[s as usize].len()))
        .collect();
    let declared = counts
        .iter()
        .filter(|(s, c)| **c == neighbor_degree[*s])
        .map(|(&s, _)| s)
        .collect();
    (
        declared,
        SuspectTally {
            counts,
            neighbor_degree,
        },
    )
}

/// Every neighbor of an alarming node is a suspect; a suspect all of whose
/// neighbors alarmed is declared.
pub fn identify_v1(alarms: &AlarmSet, graph: &[Vec<NodeId>]) -> Identification {
    let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
    for node in alarms.nodes() {
        let suspects: BTreeSet<NodeId> = graph[node as usize].iter().copied().collect();
        for s in suspects {
            *counts.entry(s).or_default() += 1;
        }
    }
    let (declared, tally) = declare(counts, graph);
    Identification {
        declared,
        tally,
        abstained: Vec::new(),
    }
}

/// Per alarming node: exchange counts with each neighbor over the windows
/// leading up to (and including) its alarm.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeView {
    pub depth: usize,
    pub per_node: BTreeMap<NodeId, BTreeMap<NodeId, u64>>,
}

impl ExchangeView {
    /// Only graph neighbors outside `exclude` are kept as candidates.
    pub fn from_log(
        log: &ExchangeLog,
        alarms: &AlarmSet,
        depth: usize,
        graph: &[Vec<NodeId>],
        exclude: &BTreeSet<NodeId>,
    ) -> Self {
        let mut per_node = BTreeMap::new();
        for a in alarms.alarms() {
            if per_node.contains_key(&a.node) {
                continue;
            }
            let counts = log
                .recent(a.node, a.window + 1, depth)
                .into_iter()
                .filter(|(v, c)| {
                    *c > 0 && !exclude.contains(v) && graph[a.node as usize].contains(v)
                })
                .collect();
            per_node.insert(a.node, counts);
        }
        Self { depth, per_node }
    }
}

/// Each alarming node nominates the neighbor it exchanged most packets with
/// (smaller id on ties); a suspect nominated by all its neighbors is declared.
pub fn identify_v2(alarms: &AlarmSet, exchanges: &ExchangeView, graph: &[Vec<NodeId>]) -> Identification {
    let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut abstained = Vec::new();
    for node in alarms.nodes() {
        let nominee = exchanges.per_node.get(&node).and_then(|m| {
            m.iter()
                .filter(|(_, &c)| c > 0)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&v, _)| v)
        });
        match nominee {
            Some(s) => *counts.entry(s).or_default() += 1,
            None => abstained.push(node),
        }
    }
    let (declared, tally) = declare(counts, graph);
    Identification {
        declared,
        tally,
        abstained,
    }
}

pub fn declarations_csv(
    node_count: usize,
    id: &Identification,
    attackers: &BTreeSet<NodeId>,
    graph: &[Vec<NodeId>],
) -> String {
    let mut out = String::from("node,declared,true_attacker,tally,degree\n");
    for v in 0..node_count as NodeId {
        writeln!(
            out,
            "{},{},{},{},{}",
            v,
            u8::from(id.declared.contains(&v)),
            u8::from(attackers.contains(&v)),
            id.tally.counts.get(&v).copied().unwrap_or(0),
            graph[v as usize].len()
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionEvidence {
    pub group: usize,
    pub stop_l: usize,
    /// `1 - stop_l / horizon`.
    pub evidence: f64,
}

/// Groups ordered from strongest to weakest evidence. This is a heuristic:
/// faster group detection suggests an attacker inside the group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionRanking {
    pub ranked: Vec<RegionEvidence>,
    pub heuristic: bool,
    pub unreliable: bool,
}

/// `group_stops` lists `(group, stop_l)` for each group detector that fired.
pub fn region_localize(group_stops: &[(usize, usize)], horizon: usize, node_count: usize) -> RegionRanking {
    let h = horizon.max(1) as f64;
    let mut ranked: Vec<RegionEvidence> = group_stops
        .iter()
        .map(|&(group, stop_l)| RegionEvidence {
            group,
            stop_l,
            evidence: (1.0 - stop_l as f64 / h).clamp(0.0, 1.0),
        })
        .collect();
    ranked.sort_by_key(|e| (e.stop_l, e.group));
    RegionRanking {
        ranked,
        heuristic: true,
        unreliable: node_count > REGION_RELIABLE_MAX_NODES,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::build_grid;

    fn alarm(node: NodeId, window: usize) -> Alarm {
        Alarm {
            node,
            window,
            metric: NodeMetric::CtrlRx,
        }
    }

    #[test]
    fn v1_declares_fully_surrounded_suspect() {
        let t = build_grid(6, 1.0, 1.5).unwrap();
        let g = t.neighbor_sets();
        let set = AlarmSet::new(t.neighbors(14).iter().map(|&v| alarm(v, 245)));
        let id = identify_v1(&set, g);
        assert!(id.declared.contains(&14));
        assert_eq!(id.tally.counts[&14], 8);
    }

    #[test]
    fn v1_corner_false_positive() {
        // 4-neighbor grid: corner 0 has neighbors 1 and 6, both adjacent to 7.
        let t = build_grid(6, 1.0, 1.0).unwrap();
        let g = t.neighbor_sets();
        let set = AlarmSet::new(t.neighbors(7).iter().map(|&v| alarm(v, 250)));
        let id = identify_v1(&set, g);
        assert!(id.declared.contains(&7));
        assert!(id.declared.contains(&0));
    }

    #[test]
    fn empty_alarms_declare_nothing() {
        let t = build_grid(6, 1.0, 1.5).unwrap();
        let set = AlarmSet::default();
        assert!(identify_v1(&set, t.neighbor_sets()).declared.is_empty());
        let view = ExchangeView::default();
        assert!(identify_v2(&set, &view, t.neighbor_sets()).declared.is_empty());
    }

    fn full_evidence(t: &crate::sim::Topology, attacker: NodeId) -> (AlarmSet, ExchangeView) {
        let set = AlarmSet::new(t.neighbors(attacker).iter().map(|&v| alarm(v, 250)));
        let mut per_node = BTreeMap::new();
        for &v in t.neighbors(attacker) {
            let mut m: BTreeMap<NodeId, u64> = t.neighbors(v).iter().map(|&u| (u, 1)).collect();
            m.insert(attacker, 40);
            per_node.insert(v, m);
        }
        (set, ExchangeView { depth: 10, per_node })
    }

    #[test]
    fn v2_sound_under_full_evidence() {
        let t = build_grid(6, 1.0, 1.5).unwrap();
        let (set, view) = full_evidence(&t, 20);
        let id = identify_v2(&set, &view, t.neighbor_sets());
        assert_eq!(id.declared, BTreeSet::from([20]));
        for (&s, &c) in &id.tally.counts {
            assert!(c <= id.tally.neighbor_degree[&s]);
        }
    }

    #[test]
    fn v2_single_alarm_cannot_declare() {
        let t = build_grid(6, 1.0, 1.5).unwrap();
        let set = AlarmSet::new([alarm(7, 250)]);
        let view = ExchangeView {
            depth: 10,
            per_node: BTreeMap::from([(7, BTreeMap::from([(14, 9)]))]),
        };
        let id = identify_v2(&set, &view, t.neighbor_sets());
        assert!(id.declared.is_empty());
        assert_eq!(id.tally.counts[&14], 1);
    }

    #[test]
    fn v2_abstains_without_history_and_breaks_ties_low() {
        let t = build_grid(6, 1.0, 1.5).unwrap();
        let set = AlarmSet::new([alarm(7, 250), alarm(8, 250)]);
        let view = ExchangeView {
            depth: 10,
            per_node: BTreeMap::from([(7, BTreeMap::from([(13, 3), (2, 3)]))]),
        };
        let id = identify_v2(&set, &view, t.neighbor_sets());
        assert_eq!(id.abstained, vec![8]);
        assert_eq!(id.tally.counts.keys().copied().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn alarm_set_keeps_first_per_metric() {
        let set = AlarmSet::new([alarm(3, 250), alarm(3, 260), alarm(1, 255)]);
        assert_eq!(set.alarms().len(), 2);
        assert_eq!(set.window_span(), Some((250, 255)));
    }

    #[test]
    fn region_ranking_orders_by_speed() {
        let r = region_localize(&[(0, 12), (2, 5), (1, 30)], 60, 36);
        let order: Vec<usize> = r.ranked.iter().map(|e| e.group).collect();
        assert_eq!(order, vec![2, 0, 1]);
        assert!(r.heuristic && !r.unreliable);
        assert!(region_localize(&[], 60, 100).ranked.is_empty());
        assert!(region_localize(&[(3, 1)], 60, 100).unreliable);
        let one = region_localize(&[(3, 0)], 60, 36);
        assert_eq!(one.ranked[0].evidence, 1.0);
    }
}
