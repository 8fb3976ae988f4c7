use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Match {
    Flow(u32),
    Addr(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Forward(NodeId),
    Drop,
    Receive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowTableEntry {
    pub matcher: Match,
    pub action: Action,
    /// Lookups served since installation.
    pub usage: u64,
    installed: u64,
}

impl FlowTableEntry {
    pub fn new(matcher: Match, action: Action) -> Self {
        Self {
            matcher,
            action,
            usage: 0,
            installed: 0,
        }
    }
}

/// Bounded flow table. Address routes are pinned; when the table is full the
/// flow-id entry with the lowest usage is evicted, oldest first on ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTable {
    capacity: usize,
    entries: Vec<FlowTableEntry>,
    clock: u64,
    evictions: u64,
}

impl FlowTable {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::new(),
            clock: 0,
            evictions: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn entries(&self) -> &[FlowTableEntry] {
        &self.entries
    }

    /// Install or replace. Returns false when the table is full of pinned routes.
    pub fn install(&mut self, matcher: Match, action: Action) -> bool {
        self.clock += 1;
        let entry = FlowTableEntry {
            matcher,
            action,
            usage: 0,
            installed: self.clock,
        };
        if let Some(e) = self.entries.iter_mut().find(|e| e.matcher == matcher) {
            *e = entry;
            return true;
        }
        if self.entries.len() >= self.capacity {
            let victim = self
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| matches!(e.matcher, Match::Flow(_)))
                .min_by_key(|(_, e)| (e.usage, e.installed))
                .map(|(i, _)| i);
            match victim {
                Some(i) => {
                    self.entries.remove(i);
                    self.evictions += 1;
                }
                None => return false,
            }
        }
        self.entries.push(entry);
        true
    }

    /// Look up and count a use.
    pub fn lookup(&mut self, matcher: Match) -> Option<Action> {
        let e = self.entries.iter_mut().find(|e| e.matcher == matcher)?;
        e.usage += 1;
        Some(e.action)
    }

    pub fn peek(&self, matcher: Match) -> Option<Action> {
        self.entries
            .iter()
            .find(|e| e.matcher == matcher)
            .map(|e| e.action)
    }
}

/// Hop counts and next hops toward one destination over a directed graph
/// (`graph[u]` lists the nodes `u` can transmit to).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathsTo {
    pub dest: NodeId,
    pub hops: Vec<Option<u16>>,
    pub next: Vec<Option<NodeId>>,
}

pub fn shortest_paths_to(graph: &[Vec<NodeId>], dest: NodeId) -> PathsTo {
    let n = graph.len();
    let mut reverse = vec![Vec::new(); n];
    for (u, outs) in graph.iter().enumerate() {
        for &v in outs {
            reverse[v as usize].push(u as NodeId);
        }
    }
    let mut hops = vec![None; n];
    hops[dest as usize] = Some(0u16);
    let mut queue = VecDeque::from([dest]);
    while let Some(v) = queue.pop_front() {
        let h = hops[v as usize].unwrap();
        for &u in &reverse[v as usize] {
            if hops[u as usize].is_none() {
                hops[u as usize] = Some(h + 1);
                queue.push_back(u);
            }
        }
    }
    let next = (0..n)
        .map(|u| {
            let h = hops[u]?;
            if h == 0 {
                return None;
            }
            graph[u]
                .iter()
                .copied()
                .filter(|&v| hops[v as usize] == Some(h - 1))
                .min()
        })
        .collect();
    PathsTo { dest, hops, next }
}

/// Breadth-first tree rooted at `root`, following edges forward. Neighbors are
/// visited in ascending id order so the tree is deterministic.
pub fn bfs_parents(graph: &[Vec<NodeId>], root: NodeId) -> Vec<Option<NodeId>> {
    let n = graph.len();
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    seen[root as usize] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let mut outs = graph[u as usize].clone();
        outs.sort_unstable();
        for v in outs {
            if !seen[v as usize] {
                seen[v as usize] = true;
                parent[v as usize] = Some(u);
                queue.push_back(v);
            }
        }
    }
    parent
}

/// Path `root, ..., target` from a parent table, or None when unreachable.
pub fn path_from(parents: &[Option<NodeId>], root: NodeId, target: NodeId) -> Option<Vec<NodeId>> {
    let mut path = vec![target];
    let mut cur = target;
    while cur != root {
        cur = parents[cur as usize]?;
        path.push(cur);
        if path.len() > parents.len() {
            return None;
        }
    }
    path.reverse();
    Some(path)
}

/// Initial routing state for the three well-known destinations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routes {
    pub to_controller: PathsTo,
    pub to_data_sink: PathsTo,
    pub to_mgmt_sink: PathsTo,
}

impl Routes {
    pub fn all(&self) -> [&PathsTo; 3] {
        [&self.to_controller, &self.to_data_sink, &self.to_mgmt_sink]
    }

    /// One flow table per node holding the address routes.
    pub fn flow_tables(&self, capacity: usize) -> Vec<FlowTable> {
        let n = self.to_controller.hops.len();
        (0..n)
            .map(|u| {
                let mut table = FlowTable::new(capacity);
                for paths in self.all() {
                    let action = match paths.next[u] {
                        Some(v) => Action::Forward(v),
                        None => Action::Receive,
                    };
                    table.install(Match::Addr(paths.dest), action);
                }
                table
            })
            .collect()
    }
}

/// Hop-count shortest paths from every node to the controller and both sinks.
pub fn compute_routes(topology: &Topology, graph: &[Vec<NodeId>]) -> Result<Routes> {
    if graph.len() != topology.len() {
        return Err(Error::param("graph", "size does not match topology"));
    }
    let paths = |dest: NodeId| -> Result<PathsTo> {
        let p = shortest_paths_to(graph, dest);
        if let Some(node) = p.hops.iter().position(Option::is_none) {
            return Err(Error::Unreachable {
                node: node as NodeId,
                target: dest,
            });
        }
        Ok(p)
    };
    Ok(Routes {
        to_controller: paths(topology.controller)?,
        to_data_sink: paths(topology.data_sink)?,
        to_mgmt_sink: paths(topology.mgmt_sink)?,
    })
}
