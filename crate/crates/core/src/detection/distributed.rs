use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cpd::{DetectorState, Outcome};
use crate::detection::centralized::{run_detector, SingleRun};
use crate::error::{Error, Result};
use crate::sim::{MetricSeries, MetricWindow, NodeId, NodeMetric};

/// First trigger of one per-node (or per-group) detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub window: usize,
    pub node: NodeId,
    pub metric: NodeMetric,
    pub stat: f64,
    pub threshold: f64,
    pub stop_l: usize,
}

/// One detector per node, all watching the same local metric.
#[derive(Debug, Clone)]
pub struct DistributedDeployment {
    pub metric: NodeMetric,
    detectors: BTreeMap<NodeId, DetectorState>,
    fired: BTreeSet<NodeId>,
    excluded: BTreeSet<NodeId>,
    groups: Option<Vec<Vec<NodeId>>>,
}

impl DistributedDeployment {
    /// `make` builds a fresh detector for each listed node.
    pub fn new(
        metric: NodeMetric,
        nodes: impl IntoIterator<Item = NodeId>,
        mut make: impl FnMut(NodeId) -> Result<DetectorState>,
    ) -> Result<Self> {
        let mut detectors = BTreeMap::new();
        for n in nodes {
            detectors.insert(n, make(n)?);
        }
        Ok(Self {
            metric,
            detectors,
            fired: BTreeSet::new(),
            excluded: BTreeSet::new(),
            groups: None,
        })
    }

    /// Attach a spatial partition. Groups must be non-empty, disjoint and
    /// cover exactly the monitored nodes.
    pub fn with_groups(mut self, groups: Vec<Vec<NodeId>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::param("groups", format!("group {i} is empty")));
            }
            for &n in g {
                if !seen.insert(n) {
                    return Err(Error::param("groups", format!("node {n} appears twice")));
                }
            }
        }
        let monitored: BTreeSet<NodeId> = self.detectors.keys().copied().collect();
        if seen != monitored {
            return Err(Error::param("groups", "groups do not partition the monitored nodes"));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn groups(&self) -> Option<&[Vec<NodeId>]> {
        self.groups.as_deref()
    }

    /// Nodes dropped because their learning window had zero variance.
    pub fn excluded(&self) -> &BTreeSet<NodeId> {
        &self.excluded
    }

    pub fn fired(&self) -> &BTreeSet<NodeId> {
        &self.fired
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.detectors.keys().copied()
    }
}

/// Feed each node's sample to its detector; returns first-time alarms in node order.
pub fn distributed_step(dep: &mut DistributedDeployment, window: &MetricWindow) -> Result<Vec<AlarmEvent>> {
    let mut alarms = Vec::new();
    for (&node, det) in dep.detectors.iter_mut() {
        if dep.fired.contains(&node) || dep.excluded.contains(&node) {
            continue;
        }
        let x = dep.metric.of(&window.per_node[node as usize]);
        match det.ingest(x) {
            Ok(Outcome::ChangeAt(hit)) => {
                dep.fired.insert(node);
                alarms.push(AlarmEvent {
                    window: window.index,
                    node,
                    metric: dep.metric,
                    stat: hit.statistic,
                    threshold: hit.threshold,
                    stop_l: hit.stop_l,
                });
            }
            Ok(_) => {}
            Err(Error::DegenerateVariance) => {
                dep.excluded.insert(node);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(alarms)
}

/// Drive a deployment over `series[start..]` and collect every alarm.
pub fn run_distributed(
    dep: &mut DistributedDeployment,
    series: &MetricSeries,
    start: usize,
) -> Result<Vec<AlarmEvent>> {
    let mut all = Vec::new();
    for w in series.windows.iter().skip(start) {
        all.extend(distributed_step(dep, w)?);
    }
    Ok(all)
}

/// Per-group sums and the result of one detector per group.
#[derive(Debug, Clone)]
pub struct GroupResult {
    pub series: Vec<Vec<f64>>,
    pub runs: Vec<SingleRun>,
}

/// Sum member samples per window and run one detector per group.
pub fn aggregate_groups(
    dep: &DistributedDeployment,
    series: &MetricSeries,
    start: usize,
    mut make: impl FnMut(usize) -> Result<DetectorState>,
) -> Result<GroupResult> {
    let groups = dep
        .groups()
        .ok_or_else(|| Error::param("groups", "deployment has no groups"))?;
    let sums: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            series
                .windows
                .iter()
                .map(|w| g.iter().map(|&n| dep.metric.of(&w.per_node[n as usize])).sum())
                .collect()
        })
        .collect();
    let runs = sums
        .iter()
        .enumerate()
        .map(|(i, s)| run_detector(make(i)?, s, start))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupResult { series: sums, runs })
}

pub fn alarms_csv(alarms: &[AlarmEvent]) -> String {
    let mut out = String::from("window,node,metric,stat,threshold\n");
    for a in alarms {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            a.window,
            a.node,
            a.metric.name(),
            a.stat,
            a.threshold
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpd::{CriticalValue, DetectorParams};
    use crate::sim::NodeMetrics;

    fn det() -> Result<DetectorState> {
        let p = DetectorParams::new(10, 0.0, 0.99, 20)?;
        let cv = CriticalValue {
            gamma: 0.0,
            confidence: 0.99,
            value: 2.807,
            n_paths: 1,
            n_grid: 1,
            seed: 0,
        };
        DetectorState::new(p, cv)
    }

    fn series(n: usize, bump: &[NodeId]) -> MetricSeries {
        let windows = (0..40)
            .map(|i| MetricWindow {
                index: i,
                network_delivery_rate: 1.0,
                network_ctrl_overhead: 0,
                data_sent: 0,
                data_delivered: 0,
                per_node: (0..n as NodeId)
                    .map(|v| {
                        let base = ((i * 31 + v as usize * 17) % 4) as u64;
                        let extra = if i >= 10 && bump.contains(&v) { 30 } else { 0 };
                        NodeMetrics {
                            ctrl_rx: base + extra,
                            ..NodeMetrics::default()
                        }
                    })
                    .collect(),
            })
            .collect();
        MetricSeries {
            window_s: 120.0,
            windows,
        }
    }

    #[test]
    fn only_shifted_nodes_alarm() {
        let s = series(6, &[1, 4]);
        let mut dep = DistributedDeployment::new(NodeMetric::CtrlRx, 0..6, |_| det()).unwrap();
        let alarms = run_distributed(&mut dep, &s, 0).unwrap();
        let nodes: Vec<NodeId> = alarms.iter().map(|a| a.node).collect();
        assert_eq!(nodes, vec![1, 4]);
        assert!(alarms.iter().all(|a| a.window >= 10 && a.stat >= a.threshold));
    }

    #[test]
    fn removing_a_node_leaves_others_unchanged() {
        let s = series(6, &[1, 4]);
        let mut all = DistributedDeployment::new(NodeMetric::CtrlRx, 0..6, |_| det()).unwrap();
        let mut some = DistributedDeployment::new(NodeMetric::CtrlRx, [0, 2, 3, 4, 5], |_| det()).unwrap();
        let a: Vec<AlarmEvent> = run_distributed(&mut all, &s, 0)
            .unwrap()
            .into_iter()
            .filter(|a| a.node != 1)
            .collect();
        assert_eq!(a, run_distributed(&mut some, &s, 0).unwrap());
    }

    #[test]
    fn flat_node_is_excluded() {
        let mut s = series(3, &[]);
        for w in &mut s.windows {
            w.per_node[2].ctrl_rx = 5;
        }
        let mut dep = DistributedDeployment::new(NodeMetric::CtrlRx, 0..3, |_| det()).unwrap();
        run_distributed(&mut dep, &s, 0).unwrap();
        assert_eq!(dep.excluded().iter().copied().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn group_series_are_member_sums() {
        let s = series(4, &[0]);
        let dep = DistributedDeployment::new(NodeMetric::CtrlRx, 0..4, |_| det())
            .unwrap()
            .with_groups(vec![vec![0, 1], vec![2, 3]])
            .unwrap();
        let g = aggregate_groups(&dep, &s, 0, |_| det()).unwrap();
        for (i, w) in s.windows.iter().enumerate() {
            assert_eq!(g.series[0][i], (w.per_node[0].ctrl_rx + w.per_node[1].ctrl_rx) as f64);
            assert_eq!(g.series[1][i], (w.per_node[2].ctrl_rx + w.per_node[3].ctrl_rx) as f64);
        }
        assert!(g.runs[0].detected());
    }

    #[test]
    fn groups_must_partition() {
        let mk = || DistributedDeployment::new(NodeMetric::CtrlRx, 0..4, |_| det()).unwrap();
        assert!(mk().with_groups(vec![vec![0, 1], vec![]]).is_err());
        assert!(mk().with_groups(vec![vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(mk().with_groups(vec![vec![0, 1], vec![2]]).is_err());
    }
}
