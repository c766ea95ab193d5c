//! Routing quality metrics on a network snapshot.
//!
//! Payments are routed along the cheapest path by base fee, without looking
//! at balances; the balances along that path decide how much the path can
//! carry on a first attempt.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChannelId, ModelError, NetworkGraph, NodeId};
use crate::rebalancer::{SampleEvaluation, SampleHook};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("source and target are both {0}")]
    SameEndpoints(NodeId),
    #[error("sample is empty")]
    EmptySample,
    #[error("payment amount must be at least 1 sat")]
    ZeroAmount,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathQueryResult {
    pub source: NodeId,
    pub target: NodeId,
    /// Hops as (channel, sending node), from source to target.
    pub path: Vec<(ChannelId, NodeId)>,
    pub total_base_fee: u64,
    /// Smallest sender balance along the path; 0 when there is no path.
    pub bottleneck: u64,
}

/// Cheapest routes from one source to every node.
struct RouteTree {
    /// (fee, hops) label per node; `None` when unreachable.
    label: Vec<Option<(u64, u32)>>,
    /// Node sequence (excluding source) and channel sequence per node.
    nodes: Vec<Vec<NodeId>>,
    channels: Vec<Vec<ChannelId>>,
}

impl RouteTree {
    /// Dijkstra on (total base fee, hop count). Among equally cheap and long
    /// paths the one with the lexicographically smallest node sequence wins,
    /// then the smallest channel sequence.
    fn build(g: &NetworkGraph, source: NodeId) -> Self {
        let n = g.node_count();
        let mut label: Vec<Option<(u64, u32)>> = vec![None; n];
        let mut nodes: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut channels: Vec<Vec<ChannelId>> = vec![Vec::new(); n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        label[source.index()] = Some((0, 0));
        heap.push(Reverse((0u64, 0u32, source)));
        while let Some(Reverse((fee, hops, x))) = heap.pop() {
            if done[x.index()] || label[x.index()] != Some((fee, hops)) {
                continue;
            }
            done[x.index()] = true;
            for inc in g.incident(x) {
                let y = inc.neighbor.index();
                if done[y] {
                    continue;
                }
                let ch = &g.channels()[inc.channel.index()];
                let cand = (fee + ch.base_fee, hops + 1);
                let better = match label[y] {
                    None => true,
                    Some(cur) => match cand.cmp(&cur) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => {
                            let by_nodes = nodes[x.index()]
                                .iter()
                                .chain(std::iter::once(&inc.neighbor))
                                .cmp(nodes[y].iter());
                            let by_channels = || {
                                channels[x.index()]
                                    .iter()
                                    .chain(std::iter::once(&inc.channel))
                                    .cmp(channels[y].iter())
                            };
                            by_nodes.then_with(by_channels) == Ordering::Less
                        }
                    },
                };
                if better {
                    let mut p = nodes[x.index()].clone();
                    p.push(inc.neighbor);
                    let mut c = channels[x.index()].clone();
                    c.push(inc.channel);
                    nodes[y] = p;
                    channels[y] = c;
                    if label[y] != Some(cand) {
                        label[y] = Some(cand);
                        heap.push(Reverse((cand.0, cand.1, inc.neighbor)));
                    }
                }
            }
        }
        Self { label, nodes, channels }
    }

    fn query(&self, g: &NetworkGraph, source: NodeId, target: NodeId) -> PathQueryResult {
        let t = target.index();
        let Some((fee, _)) = self.label[t] else {
            return PathQueryResult {
                source,
                target,
                path: Vec::new(),
                total_base_fee: 0,
                bottleneck: 0,
            };
        };
        let mut path = Vec::with_capacity(self.channels[t].len());
        let mut at = source;
        let mut bottleneck = u64::MAX;
        for (&ch, &next) in self.channels[t].iter().zip(&self.nodes[t]) {
            let balance = g.channels()[ch.index()].balance_of(at).expect("route follows channels");
            bottleneck = bottleneck.min(balance);
            path.push((ch, at));
            at = next;
        }
        PathQueryResult {
            source,
            target,
            path,
            total_base_fee: fee,
            bottleneck: if bottleneck == u64::MAX { 0 } else { bottleneck },
        }
    }

    fn bottleneck(&self, g: &NetworkGraph, source: NodeId, target: NodeId) -> u64 {
        self.query(g, source, target).bottleneck
    }
}

pub fn cheapest_path(g: &NetworkGraph, source: NodeId, target: NodeId) -> Result<PathQueryResult, EvalError> {
    for n in [source, target] {
        if !g.contains(n) {
            return Err(EvalError::UnknownNode(n));
        }
    }
    if source == target {
        return Err(EvalError::SameEndpoints(source));
    }
    Ok(RouteTree::build(g, source).query(g, source, target))
}

/// Which ordered pairs to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSelection {
    All,
    /// Uniformly sampled ordered pairs (with replacement); results are approximate.
    Sample { pairs: usize, seed: u64 },
}

/// Cheapest-path bottleneck of every selected ordered pair, in source-major order.
pub fn pair_bottlenecks(g: &NetworkGraph, selection: PairSelection) -> Vec<u64> {
    let n = g.node_count();
    if n < 2 {
        return Vec::new();
    }
    match selection {
        PairSelection::All => {
            let per_source: Vec<Vec<u64>> = (0..n as u32)
                .into_par_iter()
                .map(|s| {
                    let s = NodeId(s);
                    let tree = RouteTree::build(g, s);
                    g.nodes().filter(|&t| t != s).map(|t| tree.bottleneck(g, s, t)).collect()
                })
                .collect();
            per_source.into_iter().flatten().collect()
        }
        PairSelection::Sample { pairs, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut by_source: BTreeMap<u32, Vec<(usize, NodeId)>> = BTreeMap::new();
            for i in 0..pairs {
                let s = rng.gen_range(0..n as u32);
                let mut t = rng.gen_range(0..n as u32 - 1);
                if t >= s {
                    t += 1;
                }
                by_source.entry(s).or_default().push((i, NodeId(t)));
            }
            let groups: Vec<(u32, Vec<(usize, NodeId)>)> = by_source.into_iter().collect();
            let results: Vec<Vec<(usize, u64)>> = groups
                .par_iter()
                .map(|(s, targets)| {
                    let s = NodeId(*s);
                    let tree = RouteTree::build(g, s);
                    targets.iter().map(|&(i, t)| (i, tree.bottleneck(g, s, t))).collect()
                })
                .collect();
            let mut out = vec![0; pairs];
            for (i, b) in results.into_iter().flatten() {
                out[i] = b;
            }
            out
        }
    }
}

fn fraction_at_least(bottlenecks: &[u64], amount: u64) -> f64 {
    if bottlenecks.is_empty() {
        return 0.0;
    }
    bottlenecks.iter().filter(|&&b| b >= amount).count() as f64 / bottlenecks.len() as f64
}

/// Lower-middle median; 0 for an empty list.
fn lower_median(values: &[u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Fraction of ordered pairs whose cheapest path can carry `amount`.
pub fn success_rate(g: &NetworkGraph, amount: u64) -> Result<f64, EvalError> {
    if amount == 0 {
        return Err(EvalError::ZeroAmount);
    }
    Ok(fraction_at_least(&pair_bottlenecks(g, PairSelection::All), amount))
}

/// Median cheapest-path bottleneck over all ordered pairs, failures counted as 0.
pub fn median_payment_size(g: &NetworkGraph) -> u64 {
    lower_median(&pair_bottlenecks(g, PairSelection::All))
}

/// Node Gini coefficients in node id order.
pub fn gini_distribution(g: &NetworkGraph) -> Result<Vec<f64>, EvalError> {
    Ok(g.nodes().map(|u| g.node_gini(u)).collect::<Result<_, _>>()?)
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the
/// empirical CDFs.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub cumulative_fraction: f64,
}

/// Step points of the empirical CDF, one per distinct value.
pub fn empirical_cdf(values: &[f64]) -> Vec<CdfPoint> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let point = CdfPoint {
            value: x,
            cumulative_fraction: (i + 1) as f64 / n,
        };
        match out.last_mut() {
            Some(last) if last.value == x => *last = point,
            _ => out.push(point),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub amount_sat: u64,
    pub pairs: usize,
    /// True when pairs were sampled rather than enumerated.
    pub approximate: bool,
    pub success_rate: f64,
    pub median_payment: u64,
    pub payment_size_cdf: Vec<CdfPoint>,
    pub gini_values: Vec<f64>,
    pub network_imbalance: f64,
}

pub fn evaluate(g: &NetworkGraph, amount: u64, selection: PairSelection) -> Result<EvaluationReport, EvalError> {
    if amount == 0 {
        return Err(EvalError::ZeroAmount);
    }
    let bottlenecks = pair_bottlenecks(g, selection);
    let sizes: Vec<f64> = bottlenecks.iter().map(|&b| b as f64).collect();
    Ok(EvaluationReport {
        amount_sat: amount,
        pairs: bottlenecks.len(),
        approximate: matches!(selection, PairSelection::Sample { .. }),
        success_rate: fraction_at_least(&bottlenecks, amount),
        median_payment: lower_median(&bottlenecks),
        payment_size_cdf: empirical_cdf(&sizes),
        gini_values: gini_distribution(g)?,
        network_imbalance: g.network_imbalance()?,
    })
}

/// Sampling hook measuring success rate and median payment size.
pub struct PaymentProbe {
    pub amount: u64,
    pub selection: PairSelection,
}

impl SampleHook for PaymentProbe {
    fn evaluate(&mut self, g: &NetworkGraph) -> Option<SampleEvaluation> {
        let b = pair_bottlenecks(g, self.selection);
        Some(SampleEvaluation {
            success_rate: fraction_at_least(&b, self.amount),
            median_payment: lower_median(&b),
        })
    }
}
