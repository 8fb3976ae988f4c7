use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::config::CostModel;
use crate::sim::packet::PacketKind;
use crate::sim::topology::NodeId;
use crate::sim::trace::{EventTrace, Infrastructure, TraceEvent, TraceRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub processing_ms: f64,
    pub transmitting_ms: f64,
    pub ctrl_rx: u64,
    pub ctrl_tx: u64,
}

/// Local metric a per-node detector watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeMetric {
    ProcTime,
    TxTime,
    CtrlRx,
    CtrlTx,
}

impl NodeMetric {
    pub const ALL: [NodeMetric; 4] = [
        NodeMetric::ProcTime,
        NodeMetric::TxTime,
        NodeMetric::CtrlRx,
        NodeMetric::CtrlTx,
    ];

    pub fn of(self, m: &NodeMetrics) -> f64 {
        match self {
            NodeMetric::ProcTime => m.processing_ms,
            NodeMetric::TxTime => m.transmitting_ms,
            NodeMetric::CtrlRx => m.ctrl_rx as f64,
            NodeMetric::CtrlTx => m.ctrl_tx as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeMetric::ProcTime => "proc_time",
            NodeMetric::TxTime => "tx_time",
            NodeMetric::CtrlRx => "ctrl_rx",
            NodeMetric::CtrlTx => "ctrl_tx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricWindow {
    pub index: usize,
    pub network_delivery_rate: f64,
    pub network_ctrl_overhead: u64,
    pub data_sent: u64,
    pub data_delivered: u64,
    /// Indexed by node id.
    pub per_node: Vec<NodeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub window_s: f64,
    pub windows: Vec<MetricWindow>,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.windows.first().map_or(0, |w| w.per_node.len())
    }

    pub fn overhead(&self) -> Vec<f64> {
        self.windows.iter().map(|w| w.network_ctrl_overhead as f64).collect()
    }

    pub fn delivery_rate(&self) -> Vec<f64> {
        self.windows.iter().map(|w| w.network_delivery_rate).collect()
    }

    pub fn node(&self, node: NodeId, metric: NodeMetric) -> Vec<f64> {
        self.windows
            .iter()
            .map(|w| metric.of(&w.per_node[node as usize]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window,delivery_rate,ctrl_overhead");
        for i in 0..self.node_count() {
            write!(out, ",n{i}_proc,n{i}_tx,n{i}_crx,n{i}_ctx").unwrap();
        }
        out.push('\n');
        for w in &self.windows {
            write!(out, "{},{},{}", w.index, w.network_delivery_rate, w.network_ctrl_overhead).unwrap();
            for m in &w.per_node {
                write!(
                    out,
                    ",{},{},{},{}",
                    m.processing_ms, m.transmitting_ms, m.ctrl_rx, m.ctrl_tx
                )
                .unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn window_count(trace: &EventTrace, window_s: f64) -> Result<(u64, usize)> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(Error::param("window", "must be positive"));
    }
    let w = (window_s * 1e6).round() as u64;
    if w == 0 {
        return Err(Error::param("window", "shorter than a microsecond"));
    }
    // A trailing partial window is dropped.
    Ok((w, (trace.duration_us / w) as usize))
}

/// Aggregate a trace into fixed windows.
pub fn window_metrics(trace: &EventTrace, window_s: f64, costs: &CostModel) -> Result<MetricSeries> {
    let (w, n_windows) = window_count(trace, window_s)?;
    let n = trace.node_count;
    let mut windows: Vec<MetricWindow> = (0..n_windows)
        .map(|index| MetricWindow {
            index,
            network_delivery_rate: 1.0,
            network_ctrl_overhead: 0,
            data_sent: 0,
            data_delivered: 0,
            per_node: vec![NodeMetrics::default(); n],
        })
        .collect();
    let data_sink = trace.infrastructure.map(|i| i.data_sink);
    for r in &trace.records {
        let idx = (r.time_us / w) as usize;
        let app_data = r.kind == PacketKind::Data && !r.bogus;
        if r.event == TraceEvent::Delivered && app_data && Some(r.node) == data_sink {
            if let Some(win) = windows.get_mut((r.created_us / w) as usize) {
                win.data_delivered += 1;
            }
        }
        let Some(win) = windows.get_mut(idx) else {
            continue;
        };
        let node = &mut win.per_node[r.node as usize];
        match r.event {
            TraceEvent::Originate => {
                node.processing_ms += costs.processing_ms_per_packet;
                if app_data {
                    win.data_sent += 1;
                }
            }
            TraceEvent::Receive => node.processing_ms += costs.processing_ms_per_packet,
            // Only control packets addressed to the node count as received.
            TraceEvent::Delivered if r.kind.is_control() && r.peer.is_some() => node.ctrl_rx += 1,
            TraceEvent::Transmit => {
                node.transmitting_ms += costs.transmit_ms(r.bytes as usize);
                if r.kind.is_control() {
                    node.ctrl_tx += 1;
                    win.network_ctrl_overhead += 1;
                }
            }
            _ => {}
        }
    }
    for win in &mut windows {
        if win.data_sent > 0 {
            win.network_delivery_rate = win.data_delivered as f64 / win.data_sent as f64;
        }
    }
    Ok(MetricSeries { window_s, windows })
}

/// Whether a trace record is a direct exchange between two peer nodes: a
/// packet originated by the previous hop whose journey ends at this node.
/// Traffic addressed to the controller or a sink is excluded; every node
/// talks to those by design.
pub fn counts_as_exchange(r: &TraceRecord, infra: Option<&Infrastructure>) -> bool {
    if r.peer != Some(r.origin) {
        return false;
    }
    match r.event {
        TraceEvent::Rejected => true,
        TraceEvent::Delivered => !infra.is_some_and(|i| i.contains(r.node)),
        _ => false,
    }
}

/// Per-window, per-node counts of packets exchanged directly with each
/// neighbor (see [`counts_as_exchange`]), credited to both ends.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExchangeLog {
    /// `windows[w][node]` maps neighbor → count.
    pub windows: Vec<Vec<BTreeMap<NodeId, u64>>>,
}

impl ExchangeLog {
    /// Totals over windows `[end - depth, end)`, clipped at zero.
    pub fn recent(&self, node: NodeId, end: usize, depth: usize) -> BTreeMap<NodeId, u64> {
        let end = end.min(self.windows.len());
        let mut out = BTreeMap::new();
        for w in &self.windows[end.saturating_sub(depth)..end] {
            for (&k, &v) in &w[node as usize] {
                *out.entry(k).or_default() += v;
            }
        }
        out
    }
}

pub fn exchange_log(trace: &EventTrace, window_s: f64, control_only: bool) -> Result<ExchangeLog> {
    let (w, n_windows) = window_count(trace, window_s)?;
    let mut windows = vec![vec![BTreeMap::new(); trace.node_count]; n_windows];
    for r in &trace.records {
        if !counts_as_exchange(r, trace.infrastructure.as_ref()) {
            continue;
        }
        if control_only && !r.kind.is_control() {
            continue;
        }
        let Some(win) = windows.get_mut((r.time_us / w) as usize) else {
            continue;
        };
        let peer = r.origin;
        *win[r.node as usize].entry(peer).or_default() += 1;
        *win[peer as usize].entry(r.node).or_default() += 1;
    }
    Ok(ExchangeLog { windows })
}
