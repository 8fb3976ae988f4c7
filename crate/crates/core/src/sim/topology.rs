use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier; grid cell `(row, col)` maps to `row * side + col`.
pub type NodeId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Square grid with unit-disk neighborhoods. Row 0 is the bottom edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub side: usize,
    pub spacing: f64,
    pub radio_radius: f64,
    pub nodes: Vec<(NodeId, Position)>,
    pub controller: NodeId,
    pub data_sink: NodeId,
    pub mgmt_sink: NodeId,
    neighbors: Vec<Vec<NodeId>>,
}

pub fn build_grid(side: usize, spacing: f64, radio_radius: f64) -> Result<Topology> {
    if side < 3 {
        return Err(Error::param("side", format!("must be >= 3, got {side}")));
    }
    if side * side > NodeId::MAX as usize {
        return Err(Error::param("side", "grid too large for 16-bit node ids"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::param("spacing", "must be positive"));
    }
    if !(radio_radius > 0.0 && radio_radius.is_finite()) {
        return Err(Error::param("radio_radius", "must be positive"));
    }
    let n = side * side;
    let nodes: Vec<(NodeId, Position)> = (0..n)
        .map(|i| {
            let (row, col) = (i / side, i % side);
            let pos = Position {
                x: col as f64 * spacing,
                y: row as f64 * spacing,
            };
            (i as NodeId, pos)
        })
        .collect();

    // Compare in grid units so the result does not depend on spacing rounding.
    let r2 = radio_radius * radio_radius + 1e-9;
    let mut neighbors = vec![Vec::new(); n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let dr = (a / side) as f64 - (b / side) as f64;
            let dc = (a % side) as f64 - (b % side) as f64;
            if dr * dr + dc * dc <= r2 {
                neighbors[a].push(b as NodeId);
            }
        }
    }

    let mid = (side - 1) / 2;
    let id = |row: usize, col: usize| (row * side + col) as NodeId;
    Ok(Topology {
        side,
        spacing,
        radio_radius,
        nodes,
        controller: id(mid, mid),
        data_sink: id(0, mid),
        mgmt_sink: id(0, mid + 1),
        neighbors,
    })
}

impl Topology {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sorted neighbor ids of `node`.
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node as usize]
    }

    pub fn neighbor_sets(&self) -> &[Vec<NodeId>] {
        &self.neighbors
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors[a as usize].binary_search(&b).is_ok()
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.neighbors[node as usize].len()
    }

    pub fn row_col(&self, node: NodeId) -> (usize, usize) {
        (node as usize / self.side, node as usize % self.side)
    }

    /// Controller and both sinks.
    pub fn is_infrastructure(&self, node: NodeId) -> bool {
        node == self.controller || node == self.data_sink || node == self.mgmt_sink
    }

    /// Partition into `per_axis²` rectangular blocks, numbered row-major from
    /// the bottom-left block. Bands split as evenly as possible, larger bands first.
    pub fn block_groups(&self, per_axis: usize) -> Result<Vec<Vec<NodeId>>> {
        if per_axis == 0 || per_axis > self.side {
            return Err(Error::param(
                "groups",
                format!("cannot split a side of {} into {per_axis} bands", self.side),
            ));
        }
        let band = |k: usize| {
            let base = self.side / per_axis;
            let extra = self.side % per_axis;
            // band index of coordinate k
            let mut start = 0;
            for b in 0..per_axis {
                let len = base + usize::from(b < extra);
                if k < start + len {
                    return b;
                }
                start += len;
            }
            per_axis - 1
        };
        let mut groups = vec![Vec::new(); per_axis * per_axis];
        for &(id, _) in &self.nodes {
            let (row, col) = self.row_col(id);
            groups[band(row) * per_axis + band(col)].push(id);
        }
        Ok(groups)
    }
}
