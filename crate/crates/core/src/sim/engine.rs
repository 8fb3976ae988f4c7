use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::attack::{fdff_attacker_step, fni_tamper};
use crate::sim::config::{AttackKind, SimConfig};
use crate::sim::metrics::{counts_as_exchange, exchange_log, window_metrics, ExchangeLog, MetricSeries};
use crate::sim::packet::{Body, Dest, Packet, PacketKind, PayloadMeta, SourceRoute};
use crate::sim::routing::{
    bfs_parents, compute_routes, path_from, shortest_paths_to, Action, FlowTable, Match,
};
use crate::sim::topology::{NodeId, Topology};
use crate::sim::trace::{EventTrace, Infrastructure, TraceEvent, TraceRecord};

/// Depth of the per-node exchange history.
pub const EXCHANGE_DEPTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Plain,
    Attacker,
    Controller,
    DataSink,
    MgmtSink,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowCounters {
    pub data_sent: u64,
    pub data_received: u64,
    pub ctrl_sent: u64,
    pub ctrl_received: u64,
    pub processing_ms: f64,
    pub transmitting_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    pub flow_table: FlowTable,
    pub counters: WindowCounters,
    /// Oldest first; at most [`EXCHANGE_DEPTH`] closed windows.
    pub exchange_history: VecDeque<BTreeMap<NodeId, u64>>,
    current_exchanges: BTreeMap<NodeId, u64>,
}

impl NodeState {
    pub fn new(id: NodeId, role: Role, capacity: usize) -> Self {
        Self {
            id,
            role,
            flow_table: FlowTable::new(capacity),
            counters: WindowCounters::default(),
            exchange_history: VecDeque::new(),
            current_exchanges: BTreeMap::new(),
        }
    }

    fn roll_window(&mut self) {
        self.counters = WindowCounters::default();
        let closed = std::mem::take(&mut self.current_exchanges);
        self.exchange_history.push_back(closed);
        if self.exchange_history.len() > EXCHANGE_DEPTH {
            self.exchange_history.pop_front();
        }
    }
}

/// Result of one simulation run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub topology: Topology,
    pub trace: EventTrace,
    pub series: MetricSeries,
    pub exchanges: ExchangeLog,
    pub nodes: Vec<NodeState>,
}

#[derive(Debug)]
enum Event {
    Data(NodeId),
    Mgmt(NodeId),
    Beacon(NodeId),
    Refresh(NodeId),
    Bogus(NodeId),
    Register(NodeId),
    Arrival { to: NodeId, from: NodeId, packet: Box<Packet> },
    ControllerWork(Box<Packet>),
    WindowEnd,
}

#[derive(Debug)]
struct Scheduled {
    time: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Sliding reception record for one directed link.
#[derive(Debug, Clone)]
struct LinkEstimate {
    neighbor: NodeId,
    bits: u64,
    reported: f64,
}

fn us(seconds: f64) -> u64 {
    (seconds * 1e6).round() as u64
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    topo: Topology,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    now: u64,
    nodes: Vec<NodeState>,
    links: Vec<Vec<LinkEstimate>>,
    // Controller's picture of the network: reported links per node.
    view: Vec<Vec<(NodeId, f64)>>,
    installed: Vec<[Option<NodeId>; 3]>,
    parents: Vec<Option<NodeId>>,
    trace: Vec<TraceRecord>,
    next_packet: u64,
    attack_start: u64,
    infra: Infrastructure,
}

/// Simulate one scenario. Fully determined by `(cfg, seed)`.
pub fn run(cfg: &SimConfig, seed: u64) -> Result<SimOutput> {
    let topo = cfg.build_topology()?;
    cfg.validate(&topo)?;
    let routes = compute_routes(&topo, topo.neighbor_sets())?;
    let tables = routes.flow_tables(cfg.control.flow_table_capacity);

    let nodes: Vec<NodeState> = tables
        .into_iter()
        .enumerate()
        .map(|(i, flow_table)| {
            let id = i as NodeId;
            let role = if id == topo.controller {
                Role::Controller
            } else if id == topo.data_sink {
                Role::DataSink
            } else if id == topo.mgmt_sink {
                Role::MgmtSink
            } else if cfg.attack.attackers.contains(&id) {
                Role::Attacker
            } else {
                Role::Plain
            };
            NodeState {
                flow_table,
                ..NodeState::new(id, role, cfg.control.flow_table_capacity)
            }
        })
        .collect();

    let full = if cfg.control.link_window == 64 {
        u64::MAX
    } else {
        (1u64 << cfg.control.link_window) - 1
    };
    let links = (0..topo.len() as NodeId)
        .map(|u| {
            topo.neighbors(u)
                .iter()
                .map(|&v| LinkEstimate {
                    neighbor: v,
                    bits: full,
                    reported: 1.0,
                })
                .collect()
        })
        .collect();
    let view = (0..topo.len() as NodeId)
        .map(|u| topo.neighbors(u).iter().map(|&v| (v, 1.0)).collect())
        .collect();
    let installed = (0..topo.len())
        .map(|u| {
            [
                routes.to_controller.next[u],
                routes.to_data_sink.next[u],
                routes.to_mgmt_sink.next[u],
            ]
        })
        .collect();
    let parents = bfs_parents(topo.neighbor_sets(), topo.controller);

    let mut engine = Engine {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0,
        nodes,
        links,
        view,
        installed,
        parents,
        trace: Vec::new(),
        next_packet: 0,
        attack_start: us(cfg.attack.start_time_s),
        infra: Infrastructure {
            controller: topo.controller,
            data_sink: topo.data_sink,
            mgmt_sink: topo.mgmt_sink,
        },
        topo,
    };
    engine.bootstrap();
    engine.main_loop();

    let trace = EventTrace {
        node_count: engine.topo.len(),
        infrastructure: Some(engine.infra),
        duration_us: us(cfg.duration_s),
        records: engine.trace,
    };
    let series = window_metrics(&trace, cfg.window_s, &cfg.costs)?;
    let exchanges = exchange_log(&trace, cfg.window_s, false)?;
    Ok(SimOutput {
        topology: engine.topo,
        trace,
        series,
        exchanges,
        nodes: engine.nodes,
    })
}

impl Engine<'_> {
    fn schedule(&mut self, time: u64, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn offset(&mut self, period_us: u64) -> u64 {
        self.rng.random_range(0..period_us.max(1))
    }

    fn is_sensor(&self, id: NodeId) -> bool {
        !self.topo.is_infrastructure(id)
    }

    fn bootstrap(&mut self) {
        let data = us(self.cfg.traffic.data_period_s);
        let mgmt = us(self.cfg.traffic.mgmt_period_s);
        let beacon = us(self.cfg.control.beacon_period_s);
        let register = us(self.cfg.control.register_within_s);
        let bogus = us(self.cfg.attack.bogus_flow_period_s);
        for id in 0..self.topo.len() as NodeId {
            if self.is_sensor(id) {
                let t = self.offset(data);
                self.schedule(t, Event::Data(id));
                let t = self.offset(mgmt);
                self.schedule(t, Event::Mgmt(id));
                let t = self.offset(register);
                self.schedule(t, Event::Register(id));
            }
            let t = self.offset(beacon);
            self.schedule(t, Event::Beacon(id));
            let refresh = us(self.cfg.control.report_refresh_s);
            if refresh > 0 {
                let t = self.offset(refresh);
                self.schedule(t, Event::Refresh(id));
            }
            if self.cfg.attack.kind == AttackKind::Fdff && self.cfg.attack.attackers.contains(&id) {
                let t = self.attack_start + self.offset(bogus);
                self.schedule(t, Event::Bogus(id));
            }
        }
        let w = us(self.cfg.window_s);
        self.schedule(w, Event::WindowEnd);
    }

    fn main_loop(&mut self) {
        let end = us(self.cfg.duration_s);
        while let Some(next) = self.queue.pop() {
            if next.time >= end {
                self.queue.push(next);
                break;
            }
            self.now = next.time;
            self.dispatch(next.event);
        }
        self.now = end;
        for node in &mut self.nodes {
            node.roll_window();
        }
        // Packets still on the air or queued at the controller.
        let mut leftovers: Vec<Scheduled> = self.queue.drain().collect();
        leftovers.sort_by_key(|s| (s.time, s.seq));
        for s in leftovers {
            if let Event::Arrival { to, from, packet } = s.event {
                self.record(to, Some(from), &packet, TraceEvent::InFlight);
            }
        }
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Data(id) => {
                let sink = self.topo.data_sink;
                let pkt = self.packet(PacketKind::Data, id, Dest::Node(sink), Body::Empty);
                self.originate(id, pkt);
                let t = self.now + us(self.cfg.traffic.data_period_s);
                self.schedule(t, Event::Data(id));
            }
            Event::Mgmt(id) => {
                let sink = self.topo.mgmt_sink;
                let pkt = self.packet(PacketKind::Management, id, Dest::Node(sink), Body::Empty);
                self.originate(id, pkt);
                let t = self.now + us(self.cfg.traffic.mgmt_period_s);
                self.schedule(t, Event::Mgmt(id));
            }
            Event::Register(id) => {
                let ctrl = self.topo.controller;
                let pkt = self.packet(PacketKind::FlowIdRegister, id, Dest::Node(ctrl), Body::Empty);
                self.originate(id, pkt);
            }
            Event::Beacon(id) => {
                self.beacon(id);
                let t = self.now + us(self.cfg.control.beacon_period_s);
                self.schedule(t, Event::Beacon(id));
            }
            Event::Refresh(id) => {
                self.send_report(id);
                let t = self.now + us(self.cfg.control.report_refresh_s);
                self.schedule(t, Event::Refresh(id));
            }
            Event::Bogus(id) => {
                let neighbors = self.topo.neighbors(id).to_vec();
                let pkts = fdff_attacker_step(
                    &self.nodes[id as usize],
                    &neighbors,
                    self.now,
                    &self.cfg.attack,
                    &mut self.rng,
                );
                for (mut pkt, &to) in pkts.into_iter().zip(&neighbors) {
                    pkt.id = self.next_id();
                    pkt.ttl = self.cfg.control.ttl;
                    self.record(id, None, &pkt, TraceEvent::Originate);
                    self.charge_processing(id);
                    self.transmit(id, to, pkt, false);
                }
                let t = self.now + us(self.cfg.attack.bogus_flow_period_s);
                self.schedule(t, Event::Bogus(id));
            }
            Event::Arrival { to, from, packet } => self.handle(to, Some(from), *packet),
            Event::ControllerWork(packet) => self.controller_work(*packet),
            Event::WindowEnd => {
                for node in &mut self.nodes {
                    node.roll_window();
                }
                let t = self.now + us(self.cfg.window_s);
                self.schedule(t, Event::WindowEnd);
            }
        }
    }

    fn next_id(&mut self) -> u64 {
        self.next_packet += 1;
        self.next_packet
    }

    fn packet(&mut self, kind: PacketKind, src: NodeId, dst: Dest, body: Body) -> Packet {
        Packet {
            id: self.next_id(),
            kind,
            src,
            dst,
            flow_id: None,
            ttl: self.cfg.control.ttl,
            meta: PayloadMeta::default(),
            created_us: self.now,
            body,
            route: None,
        }
    }

    fn bytes(&self, pkt: &Packet) -> usize {
        pkt.size_bytes(self.cfg.traffic.payload_bytes)
    }

    fn record(&mut self, node: NodeId, peer: Option<NodeId>, pkt: &Packet, event: TraceEvent) {
        let from = peer;
        let bytes = self.bytes(pkt).min(u16::MAX as usize) as u16;
        let rec = TraceRecord {
            time_us: self.now,
            node,
            peer,
            origin: pkt.src,
            event,
            kind: pkt.kind,
            bytes,
            created_us: pkt.created_us,
            bogus: pkt.meta.bogus,
            tampered: pkt.meta.tampered,
        };
        if counts_as_exchange(&rec, Some(&self.infra)) {
            let p = pkt.src;
            *self.nodes[node as usize].current_exchanges.entry(p).or_default() += 1;
            *self.nodes[p as usize].current_exchanges.entry(node).or_default() += 1;
        }
        if event == TraceEvent::Delivered && from.is_some() && pkt.kind.is_control() {
            self.nodes[node as usize].counters.ctrl_received += 1;
        }
        self.trace.push(rec);
    }

    fn charge_processing(&mut self, node: NodeId) {
        self.nodes[node as usize].counters.processing_ms += self.cfg.costs.processing_ms_per_packet;
    }

    fn originate(&mut self, node: NodeId, pkt: Packet) {
        self.record(node, None, &pkt, TraceEvent::Originate);
        self.charge_processing(node);
        self.route(node, None, pkt);
    }

    fn handle(&mut self, node: NodeId, from: Option<NodeId>, pkt: Packet) {
        self.record(node, from, &pkt, TraceEvent::Receive);
        self.charge_processing(node);
        if !pkt.kind.is_control() {
            self.nodes[node as usize].counters.data_received += 1;
        }
        self.route(node, from, pkt);
    }

    /// Forwarding decision at `node` for a packet it originated or received.
    fn route(&mut self, node: NodeId, from: Option<NodeId>, mut pkt: Packet) {
        let forwarding = from.is_some();
        if let Some(route) = &mut pkt.route {
            if route.pos + 1 >= route.hops.len() {
                self.consume(node, from, pkt);
            } else {
                route.pos += 1;
                let next = route.hops[route.pos];
                self.transmit(node, next, pkt, forwarding);
            }
            return;
        }
        if forwarding
            && self.cfg.attack.kind == AttackKind::Fni
            && self.now >= self.attack_start
            && self.nodes[node as usize].role == Role::Attacker
        {
            pkt = fni_tamper(
                &self.nodes[node as usize],
                pkt,
                &mut self.rng,
                &self.topo,
                self.cfg.attack.tamper_mode,
            );
        }
        if pkt.dst == Dest::Node(node) {
            self.consume(node, from, pkt);
            return;
        }
        let key = match (pkt.flow_id, pkt.dst) {
            (Some(f), _) => Match::Flow(f),
            (None, Dest::Node(d)) => Match::Addr(d),
            (None, Dest::Flow(f)) => Match::Flow(f),
        };
        match self.nodes[node as usize].flow_table.lookup(key) {
            Some(Action::Forward(next)) => self.transmit(node, next, pkt, forwarding),
            Some(Action::Receive) => self.consume(node, from, pkt),
            Some(Action::Drop) => self.record(node, from, &pkt, TraceEvent::Rejected),
            None => {
                self.record(node, from, &pkt, TraceEvent::Rejected);
                if let Match::Flow(flow) = key {
                    self.request_rule(node, flow);
                }
            }
        }
    }

    fn request_rule(&mut self, node: NodeId, flow: u32) {
        if node == self.topo.controller {
            self.nodes[node as usize]
                .flow_table
                .install(Match::Flow(flow), Action::Drop);
            return;
        }
        let ctrl = self.topo.controller;
        let pkt = self.packet(PacketKind::FlowRequest, node, Dest::Node(ctrl), Body::Request { flow });
        self.originate(node, pkt);
    }

    fn transmit(&mut self, node: NodeId, next: NodeId, mut pkt: Packet, forwarding: bool) {
        if forwarding {
            pkt.ttl = pkt.ttl.saturating_sub(1);
            if pkt.ttl == 0 {
                self.record(node, Some(next), &pkt, TraceEvent::TtlExpired);
                return;
            }
        }
        self.record(node, Some(next), &pkt, TraceEvent::Transmit);
        let bytes = self.bytes(&pkt);
        let c = &mut self.nodes[node as usize].counters;
        c.transmitting_ms += self.cfg.costs.transmit_ms(bytes);
        if pkt.kind.is_control() {
            c.ctrl_sent += 1;
        } else {
            c.data_sent += 1;
        }
        let in_range = self.topo.are_neighbors(node, next);
        if !in_range || self.rng.random::<f64>() < self.cfg.loss_probability {
            self.record(node, Some(next), &pkt, TraceEvent::Lost);
            return;
        }
        let latency = us(self.cfg.control.hop_latency_ms / 1e3)
            + (self.cfg.control.byte_time_us * bytes as f64).round() as u64;
        self.schedule(
            self.now + latency,
            Event::Arrival {
                to: next,
                from: node,
                packet: Box::new(pkt),
            },
        );
    }

    fn consume(&mut self, node: NodeId, from: Option<NodeId>, pkt: Packet) {
        self.record(node, from, &pkt, TraceEvent::Delivered);
        match pkt.kind {
            PacketKind::FlowRequest | PacketKind::NeighborReport | PacketKind::FlowIdRegister
                if node == self.topo.controller =>
            {
                let t = self.now + us(self.cfg.control.controller_delay_ms / 1e3);
                self.schedule(t, Event::ControllerWork(Box::new(pkt)));
            }
            PacketKind::FlowSetup => {
                if let Body::Setup { matcher, action } = pkt.body {
                    self.nodes[node as usize].flow_table.install(matcher, action);
                }
            }
            _ => {}
        }
    }

    fn controller_work(&mut self, pkt: Packet) {
        match pkt.body {
            Body::Request { flow } => {
                let body = Body::Setup {
                    matcher: Match::Flow(flow),
                    action: Action::Drop,
                };
                self.send_from_controller(pkt.src, PacketKind::FlowSetup, body);
            }
            Body::Report(list) => {
                self.apply_report(pkt.src, list);
                self.send_from_controller(pkt.src, PacketKind::Ack, Body::Empty);
            }
            _ => {
                if pkt.kind == PacketKind::FlowIdRegister {
                    self.send_from_controller(pkt.src, PacketKind::Ack, Body::Empty);
                }
            }
        }
    }

    fn send_from_controller(&mut self, target: NodeId, kind: PacketKind, body: Body) {
        let ctrl = self.topo.controller;
        if target == ctrl {
            if let Body::Setup { matcher, action } = body {
                self.nodes[ctrl as usize].flow_table.install(matcher, action);
            }
            return;
        }
        let Some(hops) = path_from(&self.parents, ctrl, target) else {
            return;
        };
        let mut pkt = self.packet(kind, ctrl, Dest::Node(target), body);
        pkt.route = Some(SourceRoute { hops, pos: 0 });
        self.originate(ctrl, pkt);
    }

    fn apply_report(&mut self, reporter: NodeId, list: Vec<(NodeId, f64)>) {
        let n = self.topo.len();
        let mut list: Vec<(NodeId, f64)> = list.into_iter().filter(|&(v, _)| (v as usize) < n && v != reporter).collect();
        list.sort_by_key(|&(v, _)| v);
        list.dedup_by_key(|&mut (v, _)| v);
        self.view[reporter as usize] = list;
        self.recompute_routes();
    }

    fn recompute_routes(&mut self) {
        let usable = self.cfg.control.usable_metric;
        let graph: Vec<Vec<NodeId>> = self
            .view
            .iter()
            .map(|l| l.iter().filter(|&&(_, m)| m >= usable).map(|&(v, _)| v).collect())
            .collect();
        self.parents = bfs_parents(&graph, self.topo.controller);
        let dests = [self.topo.controller, self.topo.data_sink, self.topo.mgmt_sink];
        let mut setups = Vec::new();
        for (k, &dest) in dests.iter().enumerate() {
            let paths = shortest_paths_to(&graph, dest);
            for x in 0..self.topo.len() {
                if let Some(next) = paths.next[x] {
                    if self.installed[x][k] != Some(next) {
                        self.installed[x][k] = Some(next);
                        setups.push((x as NodeId, dest, next));
                    }
                }
            }
        }
        for (x, dest, next) in setups {
            let body = Body::Setup {
                matcher: Match::Addr(dest),
                action: Action::Forward(next),
            };
            self.send_from_controller(x, PacketKind::FlowSetup, body);
        }
    }

    fn beacon(&mut self, id: NodeId) {
        let loss = self.cfg.loss_probability;
        let window = self.cfg.control.link_window;
        let mask = if window == 64 { u64::MAX } else { (1u64 << window) - 1 };
        let threshold = self.cfg.control.report_threshold;
        let mut changed = false;
        for i in 0..self.links[id as usize].len() {
            let heard = self.rng.random::<f64>() >= loss;
            let link = &mut self.links[id as usize][i];
            link.bits = ((link.bits << 1) | u64::from(heard)) & mask;
            let metric = link.bits.count_ones() as f64 / window as f64;
            let shift = if link.reported > 0.0 {
                (metric - link.reported).abs() / link.reported
            } else if metric > 0.0 {
                1.0
            } else {
                0.0
            };
            // Tolerance so that e.g. 1.0 -> 0.8 counts as a 20% change.
            changed |= shift + 1e-9 >= threshold;
        }
        if changed {
            self.send_report(id);
        }
    }

    fn send_report(&mut self, id: NodeId) {
        let window = self.cfg.control.link_window;
        let list: Vec<(NodeId, f64)> = self.links[id as usize]
            .iter_mut()
            .map(|link| {
                link.reported = link.bits.count_ones() as f64 / window as f64;
                (link.neighbor, link.reported)
            })
            .filter(|&(_, m)| m > 0.0)
            .collect();
        if id == self.topo.controller {
            self.apply_report(id, list);
            return;
        }
        let ctrl = self.topo.controller;
        let pkt = self.packet(PacketKind::NeighborReport, id, Dest::Node(ctrl), Body::Report(list));
        self.originate(id, pkt);
    }
}
