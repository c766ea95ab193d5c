//! Network state and balance metrics.
//!
//! A [`NetworkGraph`] owns every channel together with its two private
//! balances. All balance-derived quantities (channel coefficient, node
//! coefficient, per-node Gini, network imbalance) are computed from it, and
//! [`NetworkGraph::apply_circular_payment`] is the only mutation used by the
//! rebalancer.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::RebalanceCycle;

/// Ordinal node index. Ordering follows the ordering of the original string ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelId(pub u32);

impl ChannelId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} is not an endpoint of channel {channel}")]
    NotAnEndpoint { node: NodeId, channel: ChannelId },
    #[error("node {0} has no channels")]
    NoChannels(NodeId),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("payment amount must be at least 1 sat")]
    ZeroAmount,
    #[error("{sender} holds {balance} sat on {channel}, cannot send {amount}")]
    InsufficientBalance {
        sender: NodeId,
        channel: ChannelId,
        balance: u64,
        amount: u64,
    },
    #[error("malformed cycle: {0}")]
    MalformedCycle(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
}

/// A payment channel with its private split of the capacity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub endpoint_a: NodeId,
    pub endpoint_b: NodeId,
    pub capacity: u64,
    pub balance_a: u64,
    pub balance_b: u64,
    /// Fixed forwarding fee in millisatoshi.
    pub base_fee: u64,
    /// Proportional forwarding fee in parts per million.
    pub fee_rate: u64,
}

impl Channel {
    pub fn is_endpoint(&self, node: NodeId) -> bool {
        self.endpoint_a == node || self.endpoint_b == node
    }

    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        if node == self.endpoint_a {
            Some(self.endpoint_b)
        } else if node == self.endpoint_b {
            Some(self.endpoint_a)
        } else {
            None
        }
    }

    /// Balance held by `node` on this channel.
    pub fn balance_of(&self, node: NodeId) -> Option<u64> {
        if node == self.endpoint_a {
            Some(self.balance_a)
        } else if node == self.endpoint_b {
            Some(self.balance_b)
        } else {
            None
        }
    }

    fn balance_mut(&mut self, node: NodeId) -> Option<&mut u64> {
        if node == self.endpoint_a {
            Some(&mut self.balance_a)
        } else if node == self.endpoint_b {
            Some(&mut self.balance_b)
        } else {
            None
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.balance_a.checked_add(self.balance_b) == Some(self.capacity)
    }
}

/// One entry of a node's adjacency list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Incidence {
    pub channel: ChannelId,
    pub neighbor: NodeId,
}

/// Channel coefficients of a single node, one per incident channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientVector {
    pub node: NodeId,
    pub entries: Vec<(ChannelId, f64)>,
}

impl CoefficientVector {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|&(_, z)| z).collect()
    }
}

/// The mutable world state: nodes, channels and adjacency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkGraph {
    names: Vec<String>,
    channels: Vec<Channel>,
    adjacency: Vec<Vec<Incidence>>,
}

impl NetworkGraph {
    /// Builds a graph from node names and channels. Channel ids are
    /// reassigned to their position in `channels`; adjacency lists are kept
    /// sorted by (neighbor, channel).
    pub fn new(names: Vec<String>, mut channels: Vec<Channel>) -> Result<Self, ModelError> {
        let n = names.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, ch) in channels.iter_mut().enumerate() {
            ch.id = ChannelId(i as u32);
            if ch.endpoint_a.index() >= n {
                return Err(ModelError::UnknownNode(ch.endpoint_a));
            }
            if ch.endpoint_b.index() >= n {
                return Err(ModelError::UnknownNode(ch.endpoint_b));
            }
            if ch.endpoint_a == ch.endpoint_b {
                return Err(ModelError::InvalidChannel(format!("{} is a self-channel", ch.id)));
            }
            if ch.capacity == 0 {
                return Err(ModelError::InvalidChannel(format!("{} has zero capacity", ch.id)));
            }
            if !ch.is_conserved() {
                return Err(ModelError::InvalidChannel(format!(
                    "{}: balances {} + {} != capacity {}",
                    ch.id, ch.balance_a, ch.balance_b, ch.capacity
                )));
            }
            adjacency[ch.endpoint_a.index()].push(Incidence {
                channel: ch.id,
                neighbor: ch.endpoint_b,
            });
            adjacency[ch.endpoint_b.index()].push(Incidence {
                channel: ch.id,
                neighbor: ch.endpoint_a,
            });
        }
        for list in &mut adjacency {
            list.sort_by_key(|inc| (inc.neighbor, inc.channel));
        }
        Ok(Self {
            names,
            channels,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        (0..self.names.len() as u32).map(NodeId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.index()]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name).map(|i| NodeId(i as u32))
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, id: ChannelId) -> Result<&Channel, ModelError> {
        self.channels.get(id.index()).ok_or(ModelError::UnknownChannel(id))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.names.len()
    }

    pub fn incident(&self, node: NodeId) -> &[Incidence] {
        &self.adjacency[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.index()].len()
    }

    fn check_node(&self, node: NodeId) -> Result<(), ModelError> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(ModelError::UnknownNode(node))
        }
    }

    fn check_has_channels(&self, node: NodeId) -> Result<(), ModelError> {
        self.check_node(node)?;
        if self.adjacency[node.index()].is_empty() {
            Err(ModelError::NoChannels(node))
        } else {
            Ok(())
        }
    }

    /// Balance of `side` on channel `ch`.
    pub fn balance(&self, ch: ChannelId, side: NodeId) -> Result<u64, ModelError> {
        self.channel(ch)?
            .balance_of(side)
            .ok_or(ModelError::NotAnEndpoint {
                node: side,
                channel: ch,
            })
    }

    /// Total funds of a node over all its channels.
    pub fn total_funds(&self, node: NodeId) -> u64 {
        self.adjacency[node.index()]
            .iter()
            .map(|inc| {
                self.channels[inc.channel.index()]
                    .balance_of(node)
                    .expect("adjacency is consistent")
            })
            .sum()
    }

    /// Total capacity of a node's channels.
    pub fn total_capacity(&self, node: NodeId) -> u64 {
        self.adjacency[node.index()]
            .iter()
            .map(|inc| self.channels[inc.channel.index()].capacity)
            .sum()
    }

    pub fn channel_balance_coefficient(&self, ch: ChannelId, side: NodeId) -> Result<f64, ModelError> {
        let channel = self.channel(ch)?;
        let balance = channel.balance_of(side).ok_or(ModelError::NotAnEndpoint {
            node: side,
            channel: ch,
        })?;
        Ok(balance as f64 / channel.capacity as f64)
    }

    pub fn node_balance_coefficient(&self, node: NodeId) -> Result<f64, ModelError> {
        self.check_has_channels(node)?;
        Ok(self.total_funds(node) as f64 / self.total_capacity(node) as f64)
    }

    pub fn coefficient_vector(&self, node: NodeId) -> Result<CoefficientVector, ModelError> {
        self.check_node(node)?;
        let entries = self.adjacency[node.index()]
            .iter()
            .map(|inc| {
                let ch = &self.channels[inc.channel.index()];
                let b = ch.balance_of(node).expect("adjacency is consistent");
                (inc.channel, b as f64 / ch.capacity as f64)
            })
            .collect();
        Ok(CoefficientVector { node, entries })
    }

    pub fn node_gini(&self, node: NodeId) -> Result<f64, ModelError> {
        self.check_has_channels(node)?;
        Ok(gini(&self.coefficient_vector(node)?.values()))
    }

    /// Mean node Gini over all nodes.
    pub fn network_imbalance(&self) -> Result<f64, ModelError> {
        if self.names.is_empty() {
            return Err(ModelError::EmptyGraph);
        }
        let mut sum = 0.0;
        for node in self.nodes() {
            sum += self.node_gini(node)?;
        }
        Ok(sum / self.names.len() as f64)
    }

    /// Checks that a cycle is closed, simple and consistent with this graph.
    pub fn validate_cycle(&self, cycle: &RebalanceCycle) -> Result<(), ModelError> {
        let hops = cycle.hops();
        if hops.len() < 2 {
            return Err(ModelError::MalformedCycle("fewer than two hops".into()));
        }
        if hops[0].sender != cycle.initiator() || hops[hops.len() - 1].receiver != cycle.initiator() {
            return Err(ModelError::MalformedCycle("not closed at initiator".into()));
        }
        let mut seen = vec![false; self.names.len()];
        for (i, hop) in hops.iter().enumerate() {
            let ch = self.channel(hop.channel)?;
            if ch.other(hop.sender) != Some(hop.receiver) {
                return Err(ModelError::NotAnEndpoint {
                    node: hop.sender,
                    channel: hop.channel,
                });
            }
            if i > 0 && hops[i - 1].receiver != hop.sender {
                return Err(ModelError::MalformedCycle("hops are not contiguous".into()));
            }
            let s = hop.sender.index();
            if seen[s] {
                return Err(ModelError::MalformedCycle(format!("{} repeats", hop.sender)));
            }
            seen[s] = true;
        }
        Ok(())
    }

    /// Shifts `amount` along every hop of `cycle`. Either every hop is
    /// applied or none is.
    pub fn apply_circular_payment(&mut self, cycle: &RebalanceCycle, amount: u64) -> Result<(), ModelError> {
        if amount == 0 {
            return Err(ModelError::ZeroAmount);
        }
        self.validate_cycle(cycle)?;
        for hop in cycle.hops() {
            let balance = self.channels[hop.channel.index()]
                .balance_of(hop.sender)
                .expect("validated");
            if balance < amount {
                return Err(ModelError::InsufficientBalance {
                    sender: hop.sender,
                    channel: hop.channel,
                    balance,
                    amount,
                });
            }
        }
        for hop in cycle.hops() {
            let ch = &mut self.channels[hop.channel.index()];
            *ch.balance_mut(hop.sender).expect("validated") -= amount;
            *ch.balance_mut(hop.receiver).expect("validated") += amount;
            debug_assert!(ch.is_conserved());
        }
        Ok(())
    }

    /// Ids of nodes that have at least one channel.
    pub fn connected_nodes(&self) -> Vec<NodeId> {
        self.nodes().filter(|&n| self.degree(n) > 0).collect()
    }

    pub fn all_channels_conserved(&self) -> bool {
        self.channels.iter().all(Channel::is_conserved)
    }
}

/// Gini coefficient of a set of values, using the sorted-rank form
/// `sum_k (2k - n - 1) x_(k) / (n * sum x)`.
///
/// Returns 0 for empty input, a single value, or an all-zero vector.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| (2.0 * (k as f64 + 1.0) - nf - 1.0) * x)
        .sum();
    (weighted / (nf * total)).clamp(0.0, 1.0)
}
