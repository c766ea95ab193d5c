//! Rebalancing cycle search.
//!
//! Cycles are enumerated on the static channel topology; balances play no
//! role here. Every cycle starts with a fixed directed hop `u -> v` over a
//! chosen channel and returns to `u` over a different channel.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChannelId, NetworkGraph, NodeId};

/// Hop limit for the friend-of-a-friend strategies unless configured otherwise.
pub const DEFAULT_FOAF_MAX_HOPS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CycleError {
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} is not an endpoint of channel {channel}")]
    NotAnEndpoint { node: NodeId, channel: ChannelId },
    #[error("cycle cap must be at least 1")]
    ZeroCap,
    #[error("unknown strategy {0:?}, expected one of cycle4, cycle5, foaf, mpp")]
    UnknownStrategy(String),
}

/// Cycle-selection strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// All cycles of at most 4 hops.
    Cycle4,
    /// All cycles of at most 5 hops.
    Cycle5,
    /// Cycles inside the friend-of-a-friend subgraph of the initiator.
    Foaf,
    /// Same cycles as `Foaf`; only a fraction of the desired amount is moved per operation.
    Mpp,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Cycle4, Strategy::Cycle5, Strategy::Foaf, Strategy::Mpp];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cycle4 => "cycle4",
            Strategy::Cycle5 => "cycle5",
            Strategy::Foaf => "foaf",
            Strategy::Mpp => "mpp",
        }
    }

    pub fn bounds(self, foaf_max_hops: usize) -> SearchBounds {
        match self {
            Strategy::Cycle4 => SearchBounds { max_hops: 4, foaf_only: false },
            Strategy::Cycle5 => SearchBounds { max_hops: 5, foaf_only: false },
            Strategy::Foaf | Strategy::Mpp => SearchBounds {
                max_hops: foaf_max_hops,
                foaf_only: true,
            },
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = CycleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cycle4" | "cycles4" => Ok(Strategy::Cycle4),
            "cycle5" | "cycles5" => Ok(Strategy::Cycle5),
            "foaf" => Ok(Strategy::Foaf),
            "mpp" => Ok(Strategy::Mpp),
            _ => Err(CycleError::UnknownStrategy(s.to_string())),
        }
    }
}

/// Length bound and node restriction of a cycle search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchBounds {
    pub max_hops: usize,
    pub foaf_only: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hop {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub channel: ChannelId,
}

/// A closed circular payment route rooted at its initiator.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RebalanceCycle {
    initiator: NodeId,
    hops: Vec<Hop>,
}

impl RebalanceCycle {
    /// Wraps a hop list. Structural validity is checked by
    /// [`NetworkGraph::validate_cycle`], not here.
    pub fn new(initiator: NodeId, hops: Vec<Hop>) -> Self {
        Self { initiator, hops }
    }

    /// Rebuilds the hop list from the channel sequence of a cycle.
    pub fn from_channels(g: &NetworkGraph, initiator: NodeId, channels: &[ChannelId]) -> Option<Self> {
        let mut hops = Vec::with_capacity(channels.len());
        let mut at = initiator;
        for &ch in channels {
            let next = g.channel(ch).ok()?.other(at)?;
            hops.push(Hop {
                sender: at,
                receiver: next,
                channel: ch,
            });
            at = next;
        }
        Some(Self { initiator, hops })
    }

    pub fn initiator(&self) -> NodeId {
        self.initiator
    }

    pub fn hops(&self) -> &[Hop] {
        &self.hops
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    /// Node sequence including the initiator at both ends.
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.hops.len() + 1);
        out.push(self.initiator);
        out.extend(self.hops.iter().map(|h| h.receiver));
        out
    }

    pub fn channels(&self) -> Vec<ChannelId> {
        self.hops.iter().map(|h| h.channel).collect()
    }

    /// Nodes that forward the payment (every node but the initiator).
    pub fn intermediates(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.hops[..self.hops.len().saturating_sub(1)]
            .iter()
            .map(|h| h.receiver)
    }

    /// The same route traversed in the opposite direction.
    pub fn reversed(&self) -> Self {
        let hops = self
            .hops
            .iter()
            .rev()
            .map(|h| Hop {
                sender: h.receiver,
                receiver: h.sender,
                channel: h.channel,
            })
            .collect();
        Self {
            initiator: self.initiator,
            hops,
        }
    }
}

/// Nodes within undirected distance 2 of `u`, including `u`, sorted.
pub fn foaf_node_set(g: &NetworkGraph, u: NodeId) -> Result<Vec<NodeId>, CycleError> {
    if !g.contains(u) {
        return Err(CycleError::UnknownNode(u));
    }
    let dist = bfs_distances(g, u, None, 2);
    Ok(g.nodes().filter(|n| dist[n.index()] <= 2).collect())
}

/// Undirected hop distances from `root`, optionally restricted to `allowed`
/// nodes; nodes further than `limit` (or unreachable) get `usize::MAX`.
pub(crate) fn bfs_distances(g: &NetworkGraph, root: NodeId, allowed: Option<&[bool]>, limit: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.node_count()];
    dist[root.index()] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        let d = dist[x.index()];
        if d == limit {
            continue;
        }
        for inc in g.incident(x) {
            let y = inc.neighbor.index();
            if dist[y] == usize::MAX && allowed.is_none_or(|a| a[y]) {
                dist[y] = d + 1;
                queue.push_back(inc.neighbor);
            }
        }
    }
    dist
}

/// Enumerates simple cycles starting with `u -> v` over `channel`.
///
/// Output is ordered by hop count, then lexicographically by node sequence
/// and channel ids, and truncated at `cap`.
pub fn enumerate_cycles(
    g: &NetworkGraph,
    u: NodeId,
    channel: ChannelId,
    strategy: Strategy,
    cap: usize,
) -> Result<Vec<RebalanceCycle>, CycleError> {
    let set = enumerate_cycle_set(g, u, channel, strategy.bounds(DEFAULT_FOAF_MAX_HOPS), cap)?;
    Ok(set.iter().map(|chs| RebalanceCycle::from_channels(g, u, chs).expect("enumerated on g")).collect())
}

/// Compact list of cycles sharing an initiator, stored as channel sequences.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleSet {
    channels: Vec<ChannelId>,
    ends: Vec<u32>,
}

impl CycleSet {
    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn get(&self, i: usize) -> &[ChannelId] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] as usize };
        &self.channels[start..self.ends[i] as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[ChannelId]> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    fn push(&mut self, path: &[ChannelId]) {
        self.channels.extend_from_slice(path);
        self.ends.push(self.channels.len() as u32);
    }
}

/// Same search as [`enumerate_cycles`] with explicit bounds, returning the
/// compact representation.
pub fn enumerate_cycle_set(
    g: &NetworkGraph,
    u: NodeId,
    channel: ChannelId,
    bounds: SearchBounds,
    cap: usize,
) -> Result<CycleSet, CycleError> {
    if cap == 0 {
        return Err(CycleError::ZeroCap);
    }
    if !g.contains(u) {
        return Err(CycleError::UnknownNode(u));
    }
    let first = g.channel(channel).map_err(|_| CycleError::UnknownChannel(channel))?;
    let v = first.other(u).ok_or(CycleError::NotAnEndpoint { node: u, channel })?;

    let allowed: Vec<bool> = if bounds.foaf_only {
        let dist = bfs_distances(g, u, None, 2);
        dist.iter().map(|&d| d <= 2).collect()
    } else {
        vec![true; g.node_count()]
    };
    let mut out = CycleSet::default();
    if bounds.max_hops < 2 || !allowed[v.index()] {
        return Ok(out);
    }
    let to_root = bfs_distances(g, u, Some(&allowed), bounds.max_hops);

    let mut search = Search {
        g,
        root: u,
        first_channel: channel,
        allowed: &allowed,
        to_root: &to_root,
        on_path: vec![false; g.node_count()],
        path: vec![channel],
        out: &mut out,
        cap,
    };
    search.on_path[u.index()] = true;
    search.on_path[v.index()] = true;
    for hops in 2..=bounds.max_hops {
        if search.out.len() >= cap {
            break;
        }
        search.extend(v, hops);
    }
    Ok(out)
}

struct Search<'a> {
    g: &'a NetworkGraph,
    root: NodeId,
    first_channel: ChannelId,
    allowed: &'a [bool],
    to_root: &'a [usize],
    on_path: Vec<bool>,
    path: Vec<ChannelId>,
    out: &'a mut CycleSet,
    cap: usize,
}

impl Search<'_> {
    /// Extends the current path (ending at `at`) to cycles of exactly `hops` hops.
    /// Returns false once the cap is reached.
    fn extend(&mut self, at: NodeId, hops: usize) -> bool {
        let remaining = hops - self.path.len();
        for inc in self.g.incident(at) {
            if remaining == 1 {
                if inc.neighbor == self.root && inc.channel != self.first_channel {
                    self.path.push(inc.channel);
                    self.out.push(&self.path);
                    self.path.pop();
                    if self.out.len() >= self.cap {
                        return false;
                    }
                }
                continue;
            }
            let y = inc.neighbor.index();
            if self.on_path[y] || !self.allowed[y] || self.to_root[y] > remaining - 1 {
                continue;
            }
            self.on_path[y] = true;
            self.path.push(inc.channel);
            let more = self.extend(inc.neighbor, hops);
            self.path.pop();
            self.on_path[y] = false;
            if !more {
                return false;
            }
        }
        true
    }
}
