use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::config::{AttackConfig, AttackKind, TamperMode};
use crate::sim::engine::{NodeState, Role};
use crate::sim::packet::{Body, Dest, Packet, PacketKind, PayloadMeta};
use crate::sim::topology::{NodeId, Topology};

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Number of attackers for a fraction: rounded down, at least one unless the
/// fraction is zero.
pub fn attacker_count(n: usize, fraction: f64) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    ((fraction * n as f64 + 1e-9).floor() as usize).max(1)
}

/// Random non-adjacent attacker set excluding the controller and sinks.
pub fn place_attackers(topology: &Topology, fraction: f64, seed: u64) -> Result<BTreeSet<NodeId>> {
    place_attackers_spaced(topology, fraction, seed, 2)
}

/// Like [`place_attackers`] with attackers at least `min_hops` apart in the
/// radio graph. `min_hops = 3` keeps their neighborhoods disjoint.
pub fn place_attackers_spaced(
    topology: &Topology,
    fraction: f64,
    seed: u64,
    min_hops: usize,
) -> Result<BTreeSet<NodeId>> {
    if min_hops < 2 {
        return Err(Error::param("min_hops", "attackers may never be neighbors"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::param("fraction", format!("must lie in [0, 1], got {fraction}")));
    }
    let wanted = attacker_count(topology.len(), fraction);
    if wanted == 0 {
        return Ok(BTreeSet::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<NodeId> = (0..topology.len() as NodeId)
        .filter(|&v| !topology.is_infrastructure(v))
        .collect();
    for _ in 0..PLACEMENT_ATTEMPTS {
        candidates.shuffle(&mut rng);
        let mut chosen = BTreeSet::new();
        let mut blocked = vec![false; topology.len()];
        for &c in &candidates {
            if !blocked[c as usize] {
                for v in within_hops(topology, c, min_hops - 1) {
                    blocked[v as usize] = true;
                }
                chosen.insert(c);
                if chosen.len() == wanted {
                    return Ok(chosen);
                }
            }
        }
    }
    Err(Error::Placement {
        wanted,
        attempts: PLACEMENT_ATTEMPTS,
    })
}

fn within_hops(topology: &Topology, from: NodeId, hops: usize) -> Vec<NodeId> {
    let mut seen = BTreeSet::from([from]);
    let mut frontier = vec![from];
    for _ in 0..hops {
        let mut next = Vec::new();
        for u in frontier {
            for &v in topology.neighbors(u) {
                if seen.insert(v) {
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    seen.into_iter().collect()
}

/// Bogus data packets an FDFF attacker emits at one injection instant: one
/// per neighbor, each carrying a fresh flow id nobody has a rule for.
/// Ids and ttl are assigned by the caller.
pub fn fdff_attacker_step(
    attacker: &NodeState,
    neighbors: &[NodeId],
    now_us: u64,
    attack: &AttackConfig,
    rng: &mut impl Rng,
) -> Vec<Packet> {
    let active = attack.kind == AttackKind::Fdff
        && attacker.role == Role::Attacker
        && now_us as f64 >= attack.start_time_s * 1e6;
    if !active {
        return Vec::new();
    }
    neighbors
        .iter()
        .map(|_| {
            // High bit keeps bogus ids clear of anything a node registered.
            let flow = rng.random::<u32>() | 0x8000_0000;
            Packet {
                id: 0,
                kind: PacketKind::Data,
                src: attacker.id,
                dst: Dest::Flow(flow),
                flow_id: Some(flow),
                ttl: 0,
                meta: PayloadMeta {
                    bogus: true,
                    ..PayloadMeta::default()
                },
                created_us: now_us,
                body: Body::Empty,
                route: None,
            }
        })
        .collect()
}

/// Corrupt a neighbor report in transit. Anything else passes through.
pub fn fni_tamper(
    attacker: &NodeState,
    mut pkt: Packet,
    rng: &mut impl Rng,
    topology: &Topology,
    mode: TamperMode,
) -> Packet {
    if pkt.kind != PacketKind::NeighborReport || attacker.role != Role::Attacker {
        return pkt;
    }
    let reporter = pkt.src;
    let Body::Report(list) = &mut pkt.body else {
        return pkt;
    };
    if list.is_empty() {
        return pkt;
    }
    let i = rng.random_range(0..list.len());
    match mode {
        TamperMode::Metric => list[i].1 = rng.random::<f64>(),
        TamperMode::NodeId => {
            let fakes: Vec<NodeId> = (0..topology.len() as NodeId)
                .filter(|&v| {
                    v != reporter
                        && !topology.are_neighbors(reporter, v)
                        && list.iter().all(|&(u, _)| u != v)
                })
                .collect();
            if fakes.is_empty() {
                return pkt;
            }
            list[i].0 = fakes[rng.random_range(0..fakes.len())];
        }
    }
    pkt.meta.tampered = true;
    pkt
}
