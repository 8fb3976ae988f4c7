use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{score, Label, PerformanceReport, Weights};
use crate::error::{Error, Result};
use crate::experiment::run::{Batch, RunRecord};
use crate::sim::{AttackKind, NodeId};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub expected: Option<Label>,
    pub counts: BTreeMap<String, usize>,
    /// Share of runs labelled with the expected attack.
    pub classification_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub node: NodeId,
    pub row: usize,
    pub col: usize,
    pub attacker: bool,
    pub runs: usize,
    pub detection_prob: f64,
    pub v1_prob: f64,
    pub v2_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: usize,
    pub members: Vec<NodeId>,
    pub attackers: usize,
    pub detection_prob: f64,
    pub one_minus_s: f64,
    /// Highest individual detection probability among members.
    pub max_member_prob: f64,
    /// Mean rank in the region ranking (0 = fastest); groups that never
    /// fired rank after all that did.
    pub mean_rank: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Per true attacker: share of runs in which Algorithm 2 declared it.
    pub v2_per_attacker: BTreeMap<NodeId, f64>,
    pub v1_per_attacker: BTreeMap<NodeId, f64>,
    /// Declarations of non-attackers summed over runs.
    pub v2_misidentifications: usize,
    pub v1_misidentifications: usize,
    pub v1_false_positives: BTreeMap<NodeId, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub scenario: String,
    pub digest: String,
    pub runs: usize,
    pub failures: usize,
    pub classification: Classification,
    pub overhead: Option<PerformanceReport>,
    pub delivery: Option<PerformanceReport>,
    pub nodes: Vec<NodeRow>,
    pub groups: Vec<GroupRow>,
    pub identification: Identification,
}

fn expected_label(kind: AttackKind) -> Label {
    match kind {
        AttackKind::Fdff => Label::Fdff,
        AttackKind::Fni => Label::Fni,
        AttackKind::None => Label::NoAttack,
    }
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Fdff => "fdff",
        Label::Fni => "fni",
        Label::NoAttack => "no_attack",
    }
}

/// Reduce a batch to scenario-level figures. An empty batch gives an empty
/// but well-formed report.
pub fn summarize(batch: &Batch, horizon: usize, weights: &[Weights]) -> Result<BatchReport> {
    let recs = &batch.records;
    let mut rep = BatchReport {
        scenario: batch.scenario.clone(),
        digest: batch.digest.clone(),
        runs: recs.len(),
        failures: batch.failures.len(),
        ..BatchReport::default()
    };
    let Some(first) = recs.first() else {
        return Ok(rep);
    };
    let n = first.node_count;
    if recs.iter().any(|r| r.node_count != n) {
        return Err(Error::param("batch", "runs disagree on the node count"));
    }

    let central: Vec<_> = recs.iter().filter_map(|r| r.centralized.as_ref()).collect();
    if !central.is_empty() {
        let expected = expected_label(first.attack);
        let mut counts = BTreeMap::new();
        for c in &central {
            *counts.entry(label_name(c.label.label).to_string()).or_insert(0) += 1;
        }
        let hits = central.iter().filter(|c| c.label.label == expected).count();
        rep.classification = Classification {
            expected: Some(expected),
            counts,
            classification_prob: Some(hits as f64 / central.len() as f64),
        };
        let o: Vec<_> = central.iter().map(|c| (c.overhead.detected(), c.overhead.stop_l())).collect();
        let d: Vec<_> = central.iter().map(|c| (c.delivery.detected(), c.delivery.stop_l())).collect();
        let mut overhead = score(&o, horizon, weights)?;
        let mut delivery = score(&d, horizon, weights)?;
        overhead.classification_prob = rep.classification.classification_prob;
        delivery.classification_prob = rep.classification.classification_prob;
        rep.overhead = Some(overhead);
        rep.delivery = Some(delivery);
    }

    let dist: Vec<(&RunRecord, _)> = recs
        .iter()
        .filter_map(|r| r.distributed.as_ref().map(|d| (r, d)))
        .collect();
    if dist.is_empty() {
        return Ok(rep);
    }
    let runs = dist.len() as f64;
    let mut alarmed = vec![0usize; n];
    let mut v1 = vec![0usize; n];
    let mut v2 = vec![0usize; n];
    let mut attackers_seen = vec![false; n];
    for (r, d) in &dist {
        let fired: BTreeSet<NodeId> = d.alarms.iter().map(|a| a.node).collect();
        for v in fired {
            alarmed[v as usize] += 1;
        }
        for &v in &d.v1_declared {
            v1[v as usize] += 1;
        }
        for &v in &d.v2_declared {
            v2[v as usize] += 1;
        }
        for &a in &r.attackers {
            attackers_seen[a as usize] = true;
        }
        let truth: BTreeSet<NodeId> = r.attackers.iter().copied().collect();
        rep.identification.v2_misidentifications +=
            d.v2_declared.iter().filter(|v| !truth.contains(v)).count();
        rep.identification.v1_misidentifications +=
            d.v1_declared.iter().filter(|v| !truth.contains(v)).count();
        for v in d.v1_declared.iter().filter(|v| !truth.contains(v)) {
            *rep.identification.v1_false_positives.entry(*v).or_insert(0) += 1;
        }
    }
    // attacker sets are only comparable per node when placement is fixed
    let fixed: BTreeSet<&Vec<NodeId>> = dist.iter().map(|(r, _)| &r.attackers).collect();
    if fixed.len() == 1 {
        for &a in &first.attackers {
            rep.identification.v2_per_attacker.insert(a, v2[a as usize] as f64 / runs);
            rep.identification.v1_per_attacker.insert(a, v1[a as usize] as f64 / runs);
        }
    }
    let side = first.side;
    rep.nodes = (0..n)
        .map(|v| NodeRow {
            node: v as NodeId,
            row: v / side,
            col: v % side,
            attacker: attackers_seen[v],
            runs: dist.len(),
            detection_prob: alarmed[v] as f64 / runs,
            v1_prob: v1[v] as f64 / runs,
            v2_prob: v2[v] as f64 / runs,
        })
        .collect();

    let groups = &dist[0].1.groups;
    let truth: BTreeSet<NodeId> = first.attackers.iter().copied().collect();
    for g in groups {
        let mut detected = 0usize;
        let mut stops = Vec::new();
        let mut rank_sum = 0.0;
        for (_, d) in &dist {
            let o = &d.groups[g.group];
            if o.detected {
                detected += 1;
                stops.push((o.detected, o.stop_l));
            } else {
                stops.push((false, None));
            }
            rank_sum += d
                .region
                .ranked
                .iter()
                .position(|e| e.group == g.group)
                .unwrap_or(groups.len()) as f64;
        }
        let s = score(&stops, horizon, &[Weights { a: 1.0, b: 0.0 }])?;
        rep.groups.push(GroupRow {
            group: g.group,
            members: g.members.clone(),
            attackers: g.members.iter().filter(|v| truth.contains(v)).count(),
            detection_prob: detected as f64 / runs,
            one_minus_s: s.one_minus_s,
            max_member_prob: g
                .members
                .iter()
                .map(|&v| alarmed[v as usize] as f64 / runs)
                .fold(0.0, f64::max),
            mean_rank: rank_sum / runs,
        });
    }
    Ok(rep)
}

impl BatchReport {
    /// Node table for heat maps: one row per node.
    pub fn nodes_csv(&self) -> String {
        let mut s = String::from("node,row,col,attacker,detection_prob,v1_prob,v2_prob\n");
        for r in &self.nodes {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.node,
                r.row,
                r.col,
                u8::from(r.attacker),
                r.detection_prob,
                r.v1_prob,
                r.v2_prob
            )
            .unwrap();
        }
        s
    }

    pub fn groups_csv(&self) -> String {
        let mut s = String::from("group,size,attackers,detection_prob,one_minus_s,max_member_prob,mean_rank\n");
        for g in &self.groups {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                g.group,
                g.members.len(),
                g.attackers,
                g.detection_prob,
                g.one_minus_s,
                g.max_member_prob,
                g.mean_rank
            )
            .unwrap();
        }
        s
    }

    /// DR and 1-S per metric with the score for every weight pair.
    pub fn scores_csv(&self) -> String {
        let mut s = String::from("metric,runs,detected,dr,dtm,one_minus_s,a,b,p_ds\n");
        for (name, r) in [("ctrl_overhead", &self.overhead), ("delivery_rate", &self.delivery)] {
            let Some(r) = r else { continue };
            let dtm = r.dtm.map(|d| d.to_string()).unwrap_or_default();
            for w in &r.p_ds {
                writeln!(
                    s,
                    "{name},{},{},{},{dtm},{},{},{},{}",
                    r.runs, r.detected, r.dr, r.one_minus_s, w.a, w.b, w.p_ds
                )
                .unwrap();
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("summary.json", serde_json::to_string_pretty(self)?),
            ("nodes.csv", self.nodes_csv()),
            ("groups.csv", self.groups_csv()),
            ("scores.csv", self.scores_csv()),
        ];
        for (name, text) in files {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
