//! Greedy collaborative rebalancing.
//!
//! A node whose channel coefficients are uneven picks a channel where it
//! holds more than its node coefficient and tries to push the surplus around
//! a cycle back into a channel where it holds less. Every forwarding node
//! caps the amount so that its own channels do not get worse.
//!
//! Amount bounds are computed in exact integer arithmetic:
//! `c * (zeta - nu) = (b * kappa - c * tau) / kappa`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::{
    bfs_distances, enumerate_cycle_set, CycleError, CycleSet, RebalanceCycle, Strategy, DEFAULT_FOAF_MAX_HOPS,
};
use crate::model::{gini, ChannelId, ModelError, NetworkGraph, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RebalanceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cycle does not start with {initiator} on {channel}")]
    WrongFirstHop { initiator: NodeId, channel: ChannelId },
    #[error("invariant violated after operation {seq}: {detail}")]
    InvariantViolation { seq: u64, detail: String },
}

/// How forwarding nodes decide how much they are willing to route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementMode {
    /// Both touched coefficients move toward the node coefficient without crossing it.
    Band,
    /// The node's Gini coefficient must not increase.
    Gini,
}

impl fmt::Display for AgreementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgreementMode::Band => "band",
            AgreementMode::Gini => "gini",
        })
    }
}

impl FromStr for AgreementMode {
    type Err = RebalanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "band" => Ok(AgreementMode::Band),
            "gini" => Ok(AgreementMode::Gini),
            other => Err(RebalanceError::InvalidConfig(format!(
                "unknown agreement mode {other:?}, expected band or gini"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    pub strategy: Strategy,
    /// Maximum number of cycles kept per directed channel.
    pub cycle_cap: usize,
    pub agreement_mode: AgreementMode,
    pub require_sink_condition: bool,
    /// Divisor applied to the desired amount under [`Strategy::Mpp`].
    pub mpp_divisor: u64,
    pub min_amount: u64,
    pub max_operations: u64,
    /// Nodes with Gini at or below this value do not initiate.
    pub convergence_epsilon: f64,
    /// Hop limit for the friend-of-a-friend strategies.
    pub foaf_max_hops: usize,
    /// Check conservation and agreement invariants after every operation.
    pub verify: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strategy: Strategy::Foaf,
            cycle_cap: 5000,
            agreement_mode: AgreementMode::Band,
            require_sink_condition: true,
            mpp_divisor: 20,
            min_amount: 1,
            max_operations: 10_000_000,
            convergence_epsilon: 0.01,
            foaf_max_hops: DEFAULT_FOAF_MAX_HOPS,
            verify: true,
        }
    }
}

impl SimulationConfig {
    pub fn with_strategy(strategy: Strategy, seed: u64) -> Self {
        Self {
            strategy,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RebalanceError> {
        let bad = |m: &str| Err(RebalanceError::InvalidConfig(m.to_string()));
        if self.cycle_cap < 1 {
            return bad("cycle_cap must be >= 1");
        }
        if self.mpp_divisor < 1 {
            return bad("mpp_divisor must be >= 1");
        }
        if self.min_amount < 1 {
            return bad("min_amount must be >= 1");
        }
        if self.convergence_epsilon.is_nan() || self.convergence_epsilon < 0.0 {
            return bad("convergence_epsilon must be >= 0");
        }
        if self.foaf_max_hops < 2 {
            return bad("foaf_max_hops must be >= 2");
        }
        Ok(())
    }
}

/// Hypothetical routing-fee balances in millisatoshi (earned minus paid).
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeeLedger {
    net: Vec<i64>,
    paid: u64,
}

impl FeeLedger {
    pub fn new(node_count: usize) -> Self {
        Self {
            net: vec![0; node_count],
            paid: 0,
        }
    }

    pub fn net(&self, node: NodeId) -> i64 {
        self.net[node.index()]
    }

    pub fn entries(&self) -> &[i64] {
        &self.net
    }

    pub fn sum(&self) -> i64 {
        self.net.iter().sum()
    }

    /// Total fees paid by initiators so far.
    pub fn total_paid(&self) -> u64 {
        self.paid
    }

    /// Credits each forwarding node with the fee of its outgoing channel and
    /// debits the initiator. Balances are untouched.
    pub fn record_fees(&mut self, g: &NetworkGraph, cycle: &RebalanceCycle, amount: u64) -> Result<(), ModelError> {
        if amount == 0 {
            return Err(ModelError::ZeroAmount);
        }
        if self.net.len() < g.node_count() {
            self.net.resize(g.node_count(), 0);
        }
        for hop in &cycle.hops()[1..] {
            let ch = g.channel(hop.channel)?;
            let fee = forwarding_fee(ch.base_fee, ch.fee_rate, amount);
            self.net[hop.sender.index()] += fee as i64;
            self.net[cycle.initiator().index()] -= fee as i64;
            self.paid += fee;
        }
        Ok(())
    }
}

/// Fee in msat for forwarding `amount_sat`: `base + floor(rate * amount_msat / 1e6)`.
pub fn forwarding_fee(base_fee_msat: u64, fee_rate_ppm: u64, amount_sat: u64) -> u64 {
    let proportional = (fee_rate_ppm as u128 * amount_sat as u128 * 1000) / 1_000_000;
    base_fee_msat + proportional as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub seq: u64,
    pub initiator: NodeId,
    pub cycle: Vec<ChannelId>,
    pub amount: u64,
    pub imbalance_after: f64,
}

/// Why an attempt did not execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decline {
    NothingToMove,
    SinkCondition,
    Forwarder(NodeId),
    BelowMinimum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Executed(u64),
    Declined(Decline),
}

/// `b * kappa - c * tau`: sign and magnitude of `zeta - nu` scaled by `c * kappa`.
fn excess(balance: u64, capacity: u64, tau: u64, kappa: u64) -> i128 {
    balance as i128 * kappa as i128 - capacity as i128 * tau as i128
}

#[derive(Clone, Copy, Debug)]
struct NodeTotals {
    tau: u64,
    kappa: u64,
}

fn totals(g: &NetworkGraph, u: NodeId) -> Result<NodeTotals, ModelError> {
    if !g.contains(u) {
        return Err(ModelError::UnknownNode(u));
    }
    let kappa = g.total_capacity(u);
    if kappa == 0 {
        return Err(ModelError::NoChannels(u));
    }
    Ok(NodeTotals {
        tau: g.total_funds(u),
        kappa,
    })
}

/// `floor(c * (zeta - nu))` for `side` on `ch`; negative when below nu.
fn surplus(g: &NetworkGraph, side: NodeId, ch: ChannelId, t: NodeTotals) -> Result<i128, ModelError> {
    let channel = g.channel(ch)?;
    let b = g.balance(ch, side)?;
    Ok(excess(b, channel.capacity, t.tau, t.kappa).div_euclid(t.kappa as i128))
}

/// Channels of `u` whose coefficient exceeds the node coefficient.
pub fn candidate_channels(g: &NetworkGraph, u: NodeId) -> Result<Vec<ChannelId>, ModelError> {
    let t = totals(g, u)?;
    let mut out = Vec::new();
    for inc in g.incident(u) {
        let ch = g.channel(inc.channel)?;
        let b = g.balance(inc.channel, u)?;
        if excess(b, ch.capacity, t.tau, t.kappa) > 0 {
            out.push(inc.channel);
        }
    }
    Ok(out)
}

/// `floor(c * (zeta - nu))`, divided by `mpp_divisor` for [`Strategy::Mpp`].
pub fn desired_amount(
    g: &NetworkGraph,
    u: NodeId,
    ch: ChannelId,
    strategy: Strategy,
    mpp_divisor: u64,
) -> Result<u64, ModelError> {
    let t = totals(g, u)?;
    let full = surplus(g, u, ch, t)?.max(0) as u64;
    Ok(match strategy {
        Strategy::Mpp => full / mpp_divisor.max(1),
        _ => full,
    })
}

/// Largest amount `x` is willing to forward from `in_channel` to `out_channel`.
pub fn max_agreeable_amount(
    g: &NetworkGraph,
    x: NodeId,
    in_channel: ChannelId,
    out_channel: ChannelId,
    requested: u64,
    mode: AgreementMode,
) -> Result<u64, ModelError> {
    agreeable(g, x, totals(g, x)?, in_channel, out_channel, requested, mode)
}

fn agreeable(
    g: &NetworkGraph,
    x: NodeId,
    t: NodeTotals,
    in_channel: ChannelId,
    out_channel: ChannelId,
    requested: u64,
    mode: AgreementMode,
) -> Result<u64, ModelError> {
    let out_balance = g.balance(out_channel, x)?;
    let in_balance = g.balance(in_channel, x)?;
    if in_channel == out_channel {
        return Ok(0);
    }
    let band = {
        let out_room = surplus(g, x, out_channel, t)?;
        let in_cap = g.channel(in_channel)?.capacity;
        let in_room = (in_cap as i128 * t.tau as i128 - in_balance as i128 * t.kappa as i128).div_euclid(t.kappa as i128);
        (requested as i128)
            .min(out_balance as i128)
            .min(out_room)
            .min(in_room)
            .max(0) as u64
    };
    match mode {
        AgreementMode::Band => Ok(band),
        AgreementMode::Gini => {
            let in_cap = g.channel(in_channel)?.capacity;
            let upper = requested.min(out_balance).min(in_cap - in_balance);
            if upper == 0 {
                return Ok(0);
            }
            let probe = GiniProbe::new(g, x, in_channel, out_channel)?;
            let before = probe.at(0);
            let ok = |a: u64| probe.at(a) <= before;
            let fast_before = probe.fast(0);
            let guess = prefix_end(upper, band, |a| probe.fast(a) <= fast_before);
            if ok(guess) && (guess == upper || !ok(guess + 1)) {
                return Ok(guess);
            }
            Ok(prefix_end(upper, band, ok))
        }
    }
}

/// Last amount in `[0, upper]` accepted by `ok`, which holds on a prefix.
fn prefix_end(upper: u64, hint: u64, ok: impl Fn(u64) -> bool) -> u64 {
    if ok(upper) {
        return upper;
    }
    let mut lo = if hint >= 1 && hint < upper && ok(hint) { hint } else { 0 };
    let mut hi = upper;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Node Gini after hypothetically moving an amount from `out` to `in`.
struct GiniProbe {
    balances: Vec<u64>,
    capacities: Vec<u64>,
    in_pos: usize,
    out_pos: usize,
    /// Sorted coefficients of the untouched channels and their prefix sums.
    rest: Vec<f64>,
    prefix: Vec<f64>,
    rest_pairs: f64,
}

impl GiniProbe {
    fn new(g: &NetworkGraph, x: NodeId, in_channel: ChannelId, out_channel: ChannelId) -> Result<Self, ModelError> {
        let mut balances = Vec::new();
        let mut capacities = Vec::new();
        let (mut in_pos, mut out_pos) = (None, None);
        for (i, inc) in g.incident(x).iter().enumerate() {
            let ch = g.channel(inc.channel)?;
            balances.push(ch.balance_of(x).expect("incident"));
            capacities.push(ch.capacity);
            if inc.channel == in_channel {
                in_pos = Some(i);
            }
            if inc.channel == out_channel {
                out_pos = Some(i);
            }
        }
        let not_endpoint = |channel| ModelError::NotAnEndpoint { node: x, channel };
        let in_pos = in_pos.ok_or(not_endpoint(in_channel))?;
        let out_pos = out_pos.ok_or(not_endpoint(out_channel))?;
        let mut rest: Vec<f64> = (0..balances.len())
            .filter(|&i| i != in_pos && i != out_pos)
            .map(|i| balances[i] as f64 / capacities[i] as f64)
            .collect();
        rest.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(rest.len() + 1);
        prefix.push(0.0);
        let mut rest_pairs = 0.0;
        let m = rest.len() as f64;
        for (k, &z) in rest.iter().enumerate() {
            prefix.push(prefix[k] + z);
            rest_pairs += (2.0 * k as f64 + 1.0 - m) * z;
        }
        Ok(Self {
            balances,
            capacities,
            in_pos,
            out_pos,
            rest,
            prefix,
            rest_pairs,
        })
    }

    fn shifted(&self, amount: u64) -> (f64, f64) {
        let (i, o) = (self.in_pos, self.out_pos);
        (
            (self.balances[i] + amount) as f64 / self.capacities[i] as f64,
            (self.balances[o] - amount) as f64 / self.capacities[o] as f64,
        )
    }

    /// Exact evaluation through [`gini`].
    fn at(&self, amount: u64) -> f64 {
        let (z_in, z_out) = self.shifted(amount);
        let z: Vec<f64> = (0..self.balances.len())
            .map(|i| {
                if i == self.in_pos {
                    z_in
                } else if i == self.out_pos {
                    z_out
                } else {
                    self.balances[i] as f64 / self.capacities[i] as f64
                }
            })
            .collect();
        gini(&z)
    }

    /// Same value up to rounding, in logarithmic time.
    fn fast(&self, amount: u64) -> f64 {
        let (z_in, z_out) = self.shifted(amount);
        let m = self.rest.len();
        let total = self.prefix[m];
        let dist = |v: f64| {
            let below = self.rest.partition_point(|&r| r < v);
            v * below as f64 - self.prefix[below] + (total - self.prefix[below]) - v * (m - below) as f64
        };
        let sum = total + z_in + z_out;
        if sum <= 0.0 {
            return 0.0;
        }
        let pairs = self.rest_pairs + (z_in - z_out).abs() + dist(z_in) + dist(z_out);
        pairs / ((m + 2) as f64 * sum)
    }
}

/// True iff `u` holds relatively less on `last_channel` than on average.
pub fn check_sink_condition(
    g: &NetworkGraph,
    u: NodeId,
    last_channel: ChannelId,
    require_sink_condition: bool,
) -> Result<bool, ModelError> {
    let t = totals(g, u)?;
    let ch = g.channel(last_channel)?;
    let b = g.balance(last_channel, u)?;
    Ok(!require_sink_condition || excess(b, ch.capacity, t.tau, t.kappa) < 0)
}

/// What `u` wants to push out on `ch`, limited by what it holds there.
fn opening_amount(
    g: &NetworkGraph,
    u: NodeId,
    t: NodeTotals,
    ch: ChannelId,
    config: &SimulationConfig,
) -> Result<u64, ModelError> {
    let full = surplus(g, u, ch, t)?.max(0) as u64;
    let wanted = match config.strategy {
        Strategy::Mpp => full / config.mpp_divisor.max(1),
        _ => full,
    };
    Ok(wanted.min(g.balance(ch, u)?))
}

/// Cuts `amount` down along the cycle given as a channel sequence starting at `u`.
fn negotiate(
    g: &NetworkGraph,
    tot: impl Fn(NodeId) -> Result<NodeTotals, ModelError>,
    u: NodeId,
    channels: &[ChannelId],
    mut amount: u64,
    config: &SimulationConfig,
) -> Result<Result<u64, Decline>, ModelError> {
    let last = channels[channels.len() - 1];
    if config.require_sink_condition {
        let t = tot(u)?;
        let cap = g.channel(last)?.capacity;
        let b = g.balance(last, u)?;
        if excess(b, cap, t.tau, t.kappa) >= 0 {
            return Ok(Err(Decline::SinkCondition));
        }
        // the sink channel may fill up to the node coefficient but not past it
        let room = (cap as i128 * t.tau as i128 - b as i128 * t.kappa as i128).div_euclid(t.kappa as i128);
        amount = amount.min(room.max(0) as u64);
    }
    if amount < config.min_amount {
        return Ok(Err(Decline::BelowMinimum));
    }

    let mut at = u;
    for pair in channels.windows(2) {
        let x = g.channel(pair[0])?.other(at).ok_or(ModelError::NotAnEndpoint { node: at, channel: pair[0] })?;
        amount = amount.min(agreeable(g, x, tot(x)?, pair[0], pair[1], amount, config.agreement_mode)?);
        if amount < config.min_amount {
            return Ok(Err(Decline::Forwarder(x)));
        }
        at = x;
    }

    if config.agreement_mode == AgreementMode::Gini {
        let mut at = u;
        for pair in channels.windows(2) {
            let x = g.channel(pair[0])?.other(at).expect("checked above");
            let probe = GiniProbe::new(g, x, pair[0], pair[1])?;
            if probe.at(amount) > probe.at(0) {
                return Ok(Err(Decline::Forwarder(x)));
            }
            at = x;
        }
    }
    Ok(Ok(amount))
}

/// Negotiates an amount along `cycle` and executes it if it is large enough.
pub fn attempt_rebalance(
    g: &mut NetworkGraph,
    u: NodeId,
    ch: ChannelId,
    cycle: &RebalanceCycle,
    config: &SimulationConfig,
    ledger: &mut FeeLedger,
) -> Result<Outcome, RebalanceError> {
    let hops = cycle.hops();
    if cycle.initiator() != u || hops.first().map(|h| (h.sender, h.channel)) != Some((u, ch)) {
        return Err(RebalanceError::WrongFirstHop { initiator: u, channel: ch });
    }
    g.validate_cycle(cycle)?;

    let amount = opening_amount(g, u, totals(g, u)?, ch, config)?;
    if amount == 0 {
        return Ok(Outcome::Declined(Decline::NothingToMove));
    }
    let channels = cycle.channels();
    match negotiate(g, |x| totals(g, x), u, &channels, amount, config)? {
        Err(decline) => Ok(Outcome::Declined(decline)),
        Ok(amount) => {
            g.apply_circular_payment(cycle, amount)?;
            ledger.record_fees(g, cycle, amount)?;
            Ok(Outcome::Executed(amount))
        }
    }
}

/// Success rate and median payment size taken at a sampling point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub success_rate: f64,
    pub median_payment: u64,
}

/// Called whenever the network imbalance reaches a new low on the 0.01 grid.
pub trait SampleHook {
    fn evaluate(&mut self, g: &NetworkGraph) -> Option<SampleEvaluation>;
}

/// Hook that records imbalance only.
pub struct NoEvaluation;

impl SampleHook for NoEvaluation {
    fn evaluate(&mut self, _g: &NetworkGraph) -> Option<SampleEvaluation> {
        None
    }
}

impl<F: FnMut(&NetworkGraph) -> Option<SampleEvaluation>> SampleHook for F {
    fn evaluate(&mut self, g: &NetworkGraph) -> Option<SampleEvaluation> {
        self(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub ops_count: u64,
    pub imbalance: f64,
    pub evaluation: Option<SampleEvaluation>,
}

#[derive(Clone, Debug)]
pub struct SimulationOutcome {
    pub graph: NetworkGraph,
    pub operations: Vec<OperationRecord>,
    pub ledger: FeeLedger,
    pub samples: Vec<MetricsSample>,
    pub sweeps: u64,
}

fn grid_level(imbalance: f64) -> i64 {
    (imbalance * 100.0 + 1e-9).floor() as i64
}

struct CachedCycles {
    set: CycleSet,
    /// Operation count at the last fruitless attempt of each cycle.
    failed_at: Vec<Option<u64>>,
}

struct Scheduler<'a> {
    config: &'a SimulationConfig,
    rng: ChaCha8Rng,
    cache: Vec<Option<CachedCycles>>,
    region_radius: usize,
    regions: Vec<Option<Vec<NodeId>>>,
    touched_at: Vec<u64>,
    failed_at: Vec<Option<u64>>,
    ginis: Vec<f64>,
    totals: Vec<NodeTotals>,
}

impl Scheduler<'_> {
    /// True when nothing that could change the outcome of `u`'s attempts has
    /// been touched since its last fruitless attempt.
    fn unchanged_since_failure(&mut self, g: &NetworkGraph, u: NodeId) -> bool {
        let Some(failed) = self.failed_at[u.index()] else {
            return false;
        };
        let radius = self.region_radius;
        let region = self.regions[u.index()].get_or_insert_with(|| {
            let dist = bfs_distances(g, u, None, radius);
            g.nodes().filter(|n| dist[n.index()] <= radius).collect()
        });
        region.iter().all(|n| self.touched_at[n.index()] <= failed)
    }

    /// Tries candidate channels of `u` in random order until one rebalance
    /// executes. Returns the cycle, the amount and the state before it.
    #[allow(clippy::type_complexity)]
    fn step_node(
        &mut self,
        g: &mut NetworkGraph,
        u: NodeId,
        seq: u64,
        ledger: &mut FeeLedger,
    ) -> Result<Option<(RebalanceCycle, u64, Option<NetworkGraph>)>, RebalanceError> {
        let mut candidates = candidate_channels(g, u)?;
        candidates.shuffle(&mut self.rng);
        for ch in candidates {
            let opening = opening_amount(g, u, self.totals[u.index()], ch, self.config)?;
            if opening < self.config.min_amount {
                continue;
            }
            let slot = self.fill(g, u, ch)?;
            let mut cached = self.cache[slot].take().expect("filled");
            let mut order: Vec<u32> = (0..cached.set.len() as u32).collect();
            order.shuffle(&mut self.rng);
            let mut found = None;
            for i in order {
                let i = i as usize;
                let channels = cached.set.get(i);
                // an attempt only depends on channels of nodes along the cycle
                if let Some(failed) = cached.failed_at[i] {
                    let mut at = u;
                    let mut stale = true;
                    for &c in channels {
                        at = g.channels()[c.index()].other(at).expect("enumerated on g");
                        if self.touched_at[at.index()] > failed {
                            stale = false;
                            break;
                        }
                    }
                    if stale {
                        continue;
                    }
                }
                let totals = &self.totals;
                match negotiate(g, |x| Ok(totals[x.index()]), u, channels, opening, self.config)? {
                    Ok(amount) => {
                        found = Some((RebalanceCycle::from_channels(g, u, channels).expect("enumerated on g"), amount));
                        break;
                    }
                    Err(_) => cached.failed_at[i] = Some(seq),
                }
            }
            self.cache[slot] = Some(cached);
            if let Some((cycle, amount)) = found {
                let before = self.config.verify.then(|| g.clone());
                g.apply_circular_payment(&cycle, amount)?;
                ledger.record_fees(g, &cycle, amount)?;
                return Ok(Some((cycle, amount, before)));
            }
        }
        Ok(None)
    }

    fn fill(&mut self, g: &NetworkGraph, u: NodeId, ch: ChannelId) -> Result<usize, RebalanceError> {
        let channel = g.channel(ch)?;
        let slot = ch.index() * 2 + usize::from(channel.endpoint_b == u);
        if self.cache[slot].is_none() {
            let bounds = self.config.strategy.bounds(self.config.foaf_max_hops);
            let set = enumerate_cycle_set(g, u, ch, bounds, self.config.cycle_cap)?;
            let failed_at = vec![None; set.len()];
            self.cache[slot] = Some(CachedCycles { set, failed_at });
        }
        Ok(slot)
    }
}

/// Runs sweeps over all nodes in random order until a sweep executes nothing
/// or `max_operations` is reached.
pub fn run_simulation(
    graph: NetworkGraph,
    config: &SimulationConfig,
    hook: &mut dyn SampleHook,
) -> Result<SimulationOutcome, RebalanceError> {
    config.validate()?;
    let mut g = graph;
    let n = g.node_count();
    let mut ledger = FeeLedger::new(n);
    let mut operations = Vec::new();
    let mut samples = Vec::new();

    let ginis = g.nodes().map(|u| g.node_gini(u)).collect::<Result<Vec<_>, _>>()?;
    let mut sched = Scheduler {
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        cache: (0..g.channel_count() * 2).map(|_| None).collect(),
        region_radius: config.strategy.bounds(config.foaf_max_hops).max_hops / 2,
        regions: vec![None; n],
        touched_at: vec![0; n],
        failed_at: vec![None; n],
        ginis,
        totals: g.nodes().map(|u| totals(&g, u)).collect::<Result<Vec<_>, _>>()?,
    };
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mut imbalance = g.network_imbalance()?;
    let mut best_level = grid_level(imbalance);
    samples.push(MetricsSample {
        ops_count: 0,
        imbalance,
        evaluation: hook.evaluate(&g),
    });

    let mut order: Vec<NodeId> = g.nodes().collect();
    let mut seq = 0u64;
    let mut sweeps = 0u64;
    'outer: while seq < config.max_operations {
        sweeps += 1;
        let mut executed_in_sweep = 0u64;
        order.shuffle(&mut sched.rng);
        for &u in &order {
            if sched.ginis[u.index()] <= config.convergence_epsilon || sched.unchanged_since_failure(&g, u) {
                continue;
            }
            match sched.step_node(&mut g, u, seq, &mut ledger)? {
                None => sched.failed_at[u.index()] = Some(seq),
                Some((cycle, amount, before)) => {
                    seq += 1;
                    executed_in_sweep += 1;
                    sched.failed_at[u.index()] = None;
                    for node in cycle.nodes() {
                        sched.touched_at[node.index()] = seq;
                        sched.ginis[node.index()] = g.node_gini(node)?;
                    }
                    imbalance = mean(&sched.ginis);
                    if let Some(before) = before {
                        verify_operation(&before, &g, &cycle, config.agreement_mode, &ledger)
                            .map_err(|detail| RebalanceError::InvariantViolation { seq, detail })?;
                    }
                    operations.push(OperationRecord {
                        seq,
                        initiator: u,
                        cycle: cycle.channels(),
                        amount,
                        imbalance_after: imbalance,
                    });
                    let level = grid_level(imbalance);
                    if level < best_level {
                        best_level = level;
                        samples.push(MetricsSample {
                            ops_count: seq,
                            imbalance,
                            evaluation: hook.evaluate(&g),
                        });
                    }
                    if seq >= config.max_operations {
                        break 'outer;
                    }
                }
            }
        }
        if executed_in_sweep == 0 {
            break;
        }
    }
    if samples.last().map(|s| s.ops_count) != Some(seq) {
        samples.push(MetricsSample {
            ops_count: seq,
            imbalance,
            evaluation: hook.evaluate(&g),
        });
    }
    Ok(SimulationOutcome {
        graph: g,
        operations,
        ledger,
        samples,
        sweeps,
    })
}

/// Checks one executed operation: per-channel and per-node conservation,
/// the agreement rule for every forwarding node, and a zero-sum fee ledger.
pub fn verify_operation(
    before: &NetworkGraph,
    after: &NetworkGraph,
    cycle: &RebalanceCycle,
    mode: AgreementMode,
    ledger: &FeeLedger,
) -> Result<(), String> {
    if !after.all_channels_conserved() {
        return Err("channel balances no longer sum to capacity".into());
    }
    for (b, a) in before.channels().iter().zip(after.channels()) {
        if a.capacity != b.capacity {
            return Err(format!("capacity of {} changed", a.id));
        }
    }
    for u in after.nodes() {
        if before.total_funds(u) != after.total_funds(u) {
            return Err(format!("total funds of {u} changed"));
        }
    }
    if ledger.sum() != 0 {
        return Err(format!("fee ledger sums to {}", ledger.sum()));
    }
    for pair in cycle.hops().windows(2) {
        let x = pair[0].receiver;
        let (tau, kappa) = (before.total_funds(x), before.total_capacity(x));
        match mode {
            AgreementMode::Band => {
                for ch in [pair[0].channel, pair[1].channel] {
                    let cap = before.channels()[ch.index()].capacity;
                    let e0 = excess(before.balance(ch, x).map_err(|e| e.to_string())?, cap, tau, kappa);
                    let e1 = excess(after.balance(ch, x).map_err(|e| e.to_string())?, cap, tau, kappa);
                    if e1.abs() > e0.abs() || e0.signum() * e1.signum() < 0 {
                        return Err(format!("{x} moved away from its node coefficient on {ch}"));
                    }
                }
            }
            AgreementMode::Gini => {
                let g0 = before.node_gini(x).map_err(|e| e.to_string())?;
                let g1 = after.node_gini(x).map_err(|e| e.to_string())?;
                if g1 > g0 {
                    return Err(format!("Gini of {x} rose from {g0} to {g1}"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{enumerate_cycles, Hop};
    use crate::model::fixtures::{channel, graph};

    const A: NodeId = NodeId(0);
    const B: NodeId = NodeId(1);
    const C: NodeId = NodeId(2);

    /// a-b held by a, b-c held by b, c-a held by c.
    fn skewed_triangle() -> NetworkGraph {
        graph(3, vec![channel(0, 1, 10, 10), channel(1, 2, 10, 10), channel(2, 0, 10, 10)])
    }

    fn abca() -> RebalanceCycle {
        RebalanceCycle::new(
            A,
            vec![
                Hop { sender: A, receiver: B, channel: ChannelId(0) },
                Hop { sender: B, receiver: C, channel: ChannelId(1) },
                Hop { sender: C, receiver: A, channel: ChannelId(2) },
            ],
        )
    }

    #[test]
    fn candidates() {
        let g = graph(3, vec![channel(0, 1, 10, 10), channel(0, 2, 10, 0)]);
        assert_eq!(candidate_channels(&g, A).unwrap(), vec![ChannelId(0)]);
        let g = graph(3, vec![channel(0, 1, 10, 5), channel(0, 2, 10, 5)]);
        assert!(candidate_channels(&g, A).unwrap().is_empty());
        let g = graph(2, vec![channel(0, 1, 10, 7)]);
        assert!(candidate_channels(&g, A).unwrap().is_empty());
    }

    #[test]
    fn desired_amounts() {
        // cap 1000 at 0.8 next to a cap-1000 channel at 0.2: nu = 0.5
        let g = graph(3, vec![channel(0, 1, 1000, 800), channel(0, 2, 1000, 200)]);
        assert_eq!(desired_amount(&g, A, ChannelId(0), Strategy::Foaf, 20).unwrap(), 300);
        assert_eq!(desired_amount(&g, A, ChannelId(0), Strategy::Mpp, 20).unwrap(), 15);
        // zeta - nu = 0.0004 on cap 1000: 0.4 sat floors to 0
        let g = graph(3, vec![channel(0, 1, 1000, 501), channel(0, 2, 4000, 2002)]);
        let zeta = 0.501;
        let nu = g.node_balance_coefficient(A).unwrap();
        assert!((zeta - nu - 0.0004).abs() < 1e-12);
        assert_eq!(desired_amount(&g, A, ChannelId(0), Strategy::Foaf, 20).unwrap(), 0);
    }

    #[test]
    fn band_bound_examples() {
        // x = a: in a-c (cap 10, bal 2), out a-b (cap 10, bal 8), nu = 0.5
        let g = graph(3, vec![channel(0, 1, 10, 8), channel(0, 2, 10, 2)]);
        assert_eq!(max_agreeable_amount(&g, A, ChannelId(1), ChannelId(0), 10, AgreementMode::Band).unwrap(), 3);
        // out below nu: declines
        assert_eq!(max_agreeable_amount(&g, A, ChannelId(0), ChannelId(1), 10, AgreementMode::Band).unwrap(), 0);
        let g = graph(3, vec![channel(0, 1, 10, 10), channel(0, 2, 10, 0)]);
        assert_eq!(max_agreeable_amount(&g, A, ChannelId(1), ChannelId(0), 1, AgreementMode::Band).unwrap(), 1);
    }

    #[test]
    fn gini_bound_never_raises_gini() {
        let g = graph(
            4,
            vec![channel(0, 1, 10, 8), channel(0, 2, 30, 3), channel(0, 3, 7, 7)],
        );
        for (inc, outc) in [(1u32, 0u32), (0, 1), (2, 1), (1, 2), (2, 0)] {
            let a = max_agreeable_amount(&g, A, ChannelId(inc), ChannelId(outc), 100, AgreementMode::Gini).unwrap();
            let probe = GiniProbe::new(&g, A, ChannelId(inc), ChannelId(outc)).unwrap();
            let g0 = probe.at(0);
            assert!(probe.at(a) <= g0);
            // maximality: one more sat is either infeasible or raises Gini
            let out_b = g.balance(ChannelId(outc), A).unwrap();
            let in_room = g.channel(ChannelId(inc)).unwrap().capacity - g.balance(ChannelId(inc), A).unwrap();
            if a < out_b.min(in_room).min(100) {
                assert!(probe.at(a + 1) > g0, "in={inc} out={outc} a={a}");
            }
            // prefix property, brute force
            for k in 0..=a {
                assert!(probe.at(k) <= g0);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn fast_probe_matches_exact(
            held in proptest::collection::vec((1u64..1000, 0u64..=100), 2..12),
            amount in 0u64..1000,
        ) {
            let channels: Vec<_> = held
                .iter()
                .enumerate()
                .map(|(i, &(cap, pct))| channel(0, i as u32 + 1, cap, cap * pct / 100))
                .collect();
            let g = graph(held.len() + 1, channels);
            let probe = GiniProbe::new(&g, A, ChannelId(0), ChannelId(1)).unwrap();
            let b_out = g.balance(ChannelId(1), A).unwrap();
            let room = g.channel(ChannelId(0)).unwrap().capacity - g.balance(ChannelId(0), A).unwrap();
            let a = amount.min(b_out).min(room);
            proptest::prop_assert!((probe.fast(a) - probe.at(a)).abs() < 1e-12);
        }
    }

    #[test]
    fn sink_condition() {
        let g = graph(3, vec![channel(0, 1, 10, 8), channel(0, 2, 10, 2)]);
        assert!(check_sink_condition(&g, A, ChannelId(1), true).unwrap());
        let g = graph(3, vec![channel(0, 1, 10, 5), channel(0, 2, 10, 5)]);
        assert!(!check_sink_condition(&g, A, ChannelId(1), true).unwrap());
        assert!(check_sink_condition(&g, A, ChannelId(1), false).unwrap());
    }

    #[test]
    fn triangle_rebalance_balances_everything() {
        let mut g = skewed_triangle();
        assert!((g.network_imbalance().unwrap() - 0.5).abs() < 1e-15);
        let mut ledger = FeeLedger::new(3);
        let config = SimulationConfig::default();
        let outcome = attempt_rebalance(&mut g, A, ChannelId(0), &abca(), &config, &mut ledger).unwrap();
        assert_eq!(outcome, Outcome::Executed(5));
        for u in g.nodes() {
            assert_eq!(g.coefficient_vector(u).unwrap().values(), vec![0.5, 0.5]);
        }
        assert_eq!(g.network_imbalance().unwrap(), 0.0);
        assert_eq!(ledger.sum(), 0);
    }

    #[test]
    fn declines_leave_state_untouched() {
        // c holds everything on b-c, so b cannot forward
        let mut g = graph(3, vec![channel(0, 1, 10, 10), channel(1, 2, 10, 0), channel(2, 0, 10, 0)]);
        let before = g.clone();
        let mut ledger = FeeLedger::new(3);
        let out = attempt_rebalance(&mut g, A, ChannelId(0), &abca(), &SimulationConfig::default(), &mut ledger).unwrap();
        assert!(matches!(out, Outcome::Declined(_)));
        assert_eq!(g, before);
        assert_eq!(ledger, FeeLedger::new(3));

        let mut balanced = graph(3, vec![channel(0, 1, 10, 5), channel(1, 2, 10, 5), channel(2, 0, 10, 5)]);
        let out = attempt_rebalance(&mut balanced, A, ChannelId(0), &abca(), &SimulationConfig::default(), &mut ledger).unwrap();
        assert_eq!(out, Outcome::Declined(Decline::NothingToMove));
    }

    #[test]
    fn wrong_first_hop_is_an_error() {
        let mut g = skewed_triangle();
        let mut ledger = FeeLedger::new(3);
        let err = attempt_rebalance(&mut g, B, ChannelId(0), &abca(), &SimulationConfig::default(), &mut ledger);
        assert!(matches!(err, Err(RebalanceError::WrongFirstHop { .. })));
    }

    #[test]
    fn fee_recording() {
        let g = graph(3, vec![channel(0, 1, 100_000, 50_000), channel(1, 2, 100_000, 50_000), channel(2, 0, 100_000, 50_000)]);
        let mut ledger = FeeLedger::new(3);
        // two-hop cycle through one forwarder
        let g2 = graph(2, vec![channel(0, 1, 100_000, 50_000), channel(0, 1, 100_000, 50_000)]);
        let cycle = RebalanceCycle::from_channels(&g2, A, &[ChannelId(0), ChannelId(1)]).unwrap();
        ledger.record_fees(&g2, &cycle, 50_000).unwrap();
        assert_eq!(ledger.net(B), 1050);
        assert_eq!(ledger.net(A), -1050);
        ledger.record_fees(&g, &abca(), 7).unwrap();
        assert_eq!(ledger.sum(), 0);
        assert_eq!(ledger.total_paid(), 1050 + 2 * 1000);
        assert_eq!(ledger.record_fees(&g, &abca(), 0), Err(ModelError::ZeroAmount));
    }

    #[test]
    fn simulation_on_triangle() {
        let out = run_simulation(skewed_triangle(), &SimulationConfig::default(), &mut NoEvaluation).unwrap();
        assert!(out.operations.len() <= 3);
        assert_eq!(out.graph.network_imbalance().unwrap(), 0.0);
        assert_eq!(out.samples.first().unwrap().ops_count, 0);
        assert_eq!(out.samples.last().unwrap().imbalance, 0.0);
    }

    #[test]
    fn balanced_network_does_nothing() {
        let g = graph(3, vec![channel(0, 1, 10, 5), channel(1, 2, 10, 5), channel(2, 0, 10, 5)]);
        let out = run_simulation(g.clone(), &SimulationConfig::default(), &mut NoEvaluation).unwrap();
        assert!(out.operations.is_empty());
        assert_eq!(out.sweeps, 1);
        assert_eq!(out.graph, g);
    }

    #[test]
    fn config_validation() {
        let mut c = SimulationConfig::default();
        assert!(c.validate().is_ok());
        c.cycle_cap = 0;
        assert!(c.validate().is_err());
        let c = SimulationConfig { mpp_divisor: 0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SimulationConfig { min_amount: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn cycle_helper_matches_enumeration() {
        let g = skewed_triangle();
        let cycles = enumerate_cycles(&g, A, ChannelId(0), Strategy::Cycle4, 10).unwrap();
        assert_eq!(cycles, vec![abca()]);
    }
}
