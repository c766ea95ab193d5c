//! Snapshot loading, fund allocation and topology preparation.
//!
//! Snapshots are CSV (`node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm`)
//! or JSON lines with the same keys. The extended state form adds
//! `balance_a_sat,balance_b_sat`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Channel, ChannelId, ModelError, NetworkGraph, NodeId};

pub const DEFAULT_BASE_FEE_MSAT: u64 = 1000;
pub const DEFAULT_FEE_RATE_PPM: u64 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: balances missing, a full network state is required")]
    MissingBalances { line: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown snapshot format {0:?}, expected csv or jsonl")]
    UnknownFormat(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotFormat {
    Csv,
    Jsonl,
}

impl SnapshotFormat {
    /// Guesses the format from a file extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => SnapshotFormat::Jsonl,
            _ => SnapshotFormat::Csv,
        }
    }
}

impl FromStr for SnapshotFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(SnapshotFormat::Csv),
            "jsonl" => Ok(SnapshotFormat::Jsonl),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

/// One public channel announcement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotRecord {
    pub node_a: String,
    pub node_b: String,
    pub capacity: u64,
    pub base_fee: u64,
    pub fee_rate: u64,
}

impl SnapshotRecord {
    pub fn new(node_a: impl Into<String>, node_b: impl Into<String>, capacity: u64) -> Self {
        Self {
            node_a: node_a.into(),
            node_b: node_b.into(),
            capacity,
            base_fee: DEFAULT_BASE_FEE_MSAT,
            fee_rate: DEFAULT_FEE_RATE_PPM,
        }
    }
}

/// A snapshot row, optionally carrying balances.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub node_a: String,
    pub node_b: String,
    pub capacity_sat: u64,
    #[serde(default)]
    pub base_fee_msat: Option<u64>,
    #[serde(default)]
    pub fee_rate_ppm: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_a_sat: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_b_sat: Option<u64>,
}

impl Row {
    fn validate(&self, line: u64) -> Result<(), IngestError> {
        let err = |message: String| Err(IngestError::Parse { line, message });
        if self.capacity_sat == 0 {
            return err("capacity must be positive".into());
        }
        if self.node_a == self.node_b {
            return err(format!("self-channel on {}", self.node_a));
        }
        if self.node_a.is_empty() || self.node_b.is_empty() {
            return err("empty node id".into());
        }
        match (self.balance_a_sat, self.balance_b_sat) {
            (None, None) => Ok(()),
            (Some(a), Some(b)) if a.checked_add(b) == Some(self.capacity_sat) => Ok(()),
            (Some(_), Some(_)) => err("balances do not sum to capacity".into()),
            _ => err("only one balance given".into()),
        }
    }

    fn record(&self) -> SnapshotRecord {
        SnapshotRecord {
            node_a: self.node_a.clone(),
            node_b: self.node_b.clone(),
            capacity: self.capacity_sat,
            base_fee: self.base_fee_msat.unwrap_or(DEFAULT_BASE_FEE_MSAT),
            fee_rate: self.fee_rate_ppm.unwrap_or(DEFAULT_FEE_RATE_PPM),
        }
    }
}

/// Reads rows with their 1-based line numbers.
pub fn read_rows<R: Read>(reader: R, format: SnapshotFormat) -> Result<Vec<(u64, Row)>, IngestError> {
    let mut rows = Vec::new();
    match format {
        SnapshotFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .trim(csv::Trim::All)
                .from_reader(reader);
            let headers = rdr.headers().map_err(|e| IngestError::Parse { line: 1, message: e.to_string() })?.clone();
            for result in rdr.records() {
                let record = result.map_err(|e| IngestError::Parse {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                })?;
                let line = record.position().map_or(0, |p| p.line());
                let row: Row = record
                    .deserialize(Some(&headers))
                    .map_err(|e| IngestError::Parse { line, message: e.to_string() })?;
                row.validate(line)?;
                rows.push((line, row));
            }
        }
        SnapshotFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = i as u64 + 1;
                let text = line?;
                if text.trim().is_empty() {
                    continue;
                }
                let row: Row = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                row.validate(line_no)?;
                rows.push((line_no, row));
            }
        }
    }
    Ok(rows)
}

pub fn read_snapshot<R: Read>(reader: R, format: SnapshotFormat) -> Result<Vec<SnapshotRecord>, IngestError> {
    Ok(read_rows(reader, format)?.iter().map(|(_, r)| r.record()).collect())
}

/// Loads snapshot records in file order. Duplicate rows stay as parallel channels.
pub fn load_snapshot(path: &Path, format: SnapshotFormat) -> Result<Vec<SnapshotRecord>, IngestError> {
    read_snapshot(File::open(path)?, format)
}

/// Loads a snapshot that carries balances on every row.
pub fn load_state(path: &Path, format: SnapshotFormat) -> Result<NetworkGraph, IngestError> {
    read_state(File::open(path)?, format)
}

pub fn read_state<R: Read>(reader: R, format: SnapshotFormat) -> Result<NetworkGraph, IngestError> {
    let rows = read_rows(reader, format)?;
    let mut records = Vec::with_capacity(rows.len());
    let mut balances = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        match (row.balance_a_sat, row.balance_b_sat) {
            (Some(a), Some(_)) => balances.push(a),
            _ => return Err(IngestError::MissingBalances { line: *line }),
        }
        records.push(row.record());
    }
    Ok(build_graph(&records, &balances)?)
}

pub fn write_snapshot<W: Write>(writer: W, records: &[SnapshotRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node_a", "node_b", "capacity_sat", "base_fee_msat", "fee_rate_ppm"])
        .map_err(csv_io)?;
    for r in records {
        w.write_record([
            r.node_a.as_str(),
            r.node_b.as_str(),
            &r.capacity.to_string(),
            &r.base_fee.to_string(),
            &r.fee_rate.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the extended snapshot including balances, one row per channel in id order.
pub fn write_state<W: Write>(writer: W, g: &NetworkGraph) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "node_a",
        "node_b",
        "capacity_sat",
        "base_fee_msat",
        "fee_rate_ppm",
        "balance_a_sat",
        "balance_b_sat",
    ])
    .map_err(csv_io)?;
    for ch in g.channels() {
        w.write_record([
            g.name(ch.endpoint_a),
            g.name(ch.endpoint_b),
            &ch.capacity.to_string(),
            &ch.base_fee.to_string(),
            &ch.fee_rate.to_string(),
            &ch.balance_a.to_string(),
            &ch.balance_b.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(e.to_string()))
}

/// Builds a graph where `balance_a[i]` is endpoint A's share of record `i`.
/// Node ids follow the sorted order of the string ids.
pub fn build_graph(records: &[SnapshotRecord], balance_a: &[u64]) -> Result<NetworkGraph, ModelError> {
    let names: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| [r.node_a.as_str(), r.node_b.as_str()])
        .collect();
    let index: BTreeMap<&str, NodeId> = names
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, NodeId(i as u32)))
        .collect();
    let channels = records
        .iter()
        .zip(balance_a)
        .map(|(r, &ba)| {
            if ba > r.capacity {
                return Err(ModelError::InvalidChannel(format!(
                    "{}-{}: balance {ba} exceeds capacity {}",
                    r.node_a, r.node_b, r.capacity
                )));
            }
            Ok(Channel {
                id: ChannelId(0),
                endpoint_a: index[r.node_a.as_str()],
                endpoint_b: index[r.node_b.as_str()],
                capacity: r.capacity,
                balance_a: ba,
                balance_b: r.capacity - ba,
                base_fee: r.base_fee,
                fee_rate: r.fee_rate,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    NetworkGraph::new(names.into_iter().map(str::to_string).collect(), channels)
}

/// Gives each channel's full capacity to one endpoint chosen by a fair coin.
pub fn allocate_funds_coinflip(records: &[SnapshotRecord], seed: u64) -> Result<NetworkGraph, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let balances: Vec<u64> = records
        .iter()
        .map(|r| if rng.gen_bool(0.5) { r.capacity } else { 0 })
        .collect();
    build_graph(records, &balances)
}

/// Strongly connected components of the liquidity digraph (`u -> v` iff `u`
/// holds funds on some channel to `v`), each sorted, in discovery order.
pub fn liquidity_sccs(g: &NetworkGraph) -> Vec<Vec<NodeId>> {
    let n = g.node_count();
    let succ: Vec<Vec<usize>> = g
        .nodes()
        .map(|u| {
            let mut out: Vec<usize> = g
                .incident(u)
                .iter()
                .filter(|inc| g.channels()[inc.channel.index()].balance_of(u) > Some(0))
                .map(|inc| inc.neighbor.index())
                .collect();
            out.dedup();
            out
        })
        .collect();

    // iterative Tarjan
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next = 0usize;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if let Some(&w) = succ[v].get(*edge) {
                *edge += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(NodeId(w as u32));
                    if w == v {
                        break;
                    }
                }
                comp.sort();
                components.push(comp);
            }
        }
    }
    components
}

/// Restricts `g` to `members` (sorted), keeping channels with both endpoints inside.
pub fn induced_subgraph(g: &NetworkGraph, members: &[NodeId]) -> NetworkGraph {
    let mut map = vec![None; g.node_count()];
    for (i, &m) in members.iter().enumerate() {
        map[m.index()] = Some(NodeId(i as u32));
    }
    let names = members.iter().map(|&m| g.name(m).to_string()).collect();
    let channels = g
        .channels()
        .iter()
        .filter_map(|ch| {
            let a = map[ch.endpoint_a.index()]?;
            let b = map[ch.endpoint_b.index()]?;
            Some(Channel {
                endpoint_a: a,
                endpoint_b: b,
                ..ch.clone()
            })
        })
        .collect();
    NetworkGraph::new(names, channels).expect("subgraph of a valid graph")
}

/// The subgraph induced by the largest liquidity SCC; ties go to the
/// component containing the smallest node id.
pub fn largest_scc(g: &NetworkGraph) -> NetworkGraph {
    let best = liquidity_sccs(g)
        .into_iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b[0].cmp(&a[0])));
    match best {
        Some(members) => induced_subgraph(g, &members),
        None => g.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_nodes: usize,
    pub attach_degree: usize,
    /// Inclusive capacity bounds in satoshi; capacities are log-uniform in between.
    pub capacity_range: (u64, u64),
    pub seed: u64,
}

/// Preferential-attachment topology. The first `attach_degree + 1` nodes form
/// a path; each later node links to `attach_degree` distinct earlier nodes
/// chosen with probability proportional to their degree.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<Vec<SnapshotRecord>, IngestError> {
    let SyntheticParams {
        n_nodes,
        attach_degree: d,
        capacity_range: (lo, hi),
        seed,
    } = *params;
    if d == 0 {
        return Err(IngestError::InvalidParameter("attach degree must be at least 1".into()));
    }
    if n_nodes < d + 1 {
        return Err(IngestError::InvalidParameter(format!(
            "need at least {} nodes for attach degree {d}",
            d + 1
        )));
    }
    if lo == 0 || lo > hi {
        return Err(IngestError::InvalidParameter(format!("bad capacity range {lo}..{hi}")));
    }
    let width = (n_nodes - 1).to_string().len();
    let name = |i: usize| format!("n{i:0width$}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ln_lo, ln_hi) = ((lo as f64).ln(), (hi as f64).ln());
    let capacity = |rng: &mut ChaCha8Rng| -> u64 {
        if lo == hi {
            return lo;
        }
        let c = rng.gen_range(ln_lo..=ln_hi).exp().round() as u64;
        c.clamp(lo, hi)
    };

    let mut edges: Vec<(usize, usize)> = (0..d).map(|i| (i, i + 1)).collect();
    // every edge contributes both endpoints, so a uniform pick is degree-weighted
    let mut ends: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    for new in d + 1..n_nodes {
        let mut targets: Vec<usize> = Vec::with_capacity(d);
        while targets.len() < d {
            let t = ends[rng.gen_range(0..ends.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            edges.push((t, new));
            ends.push(t);
            ends.push(new);
        }
    }
    Ok(edges
        .into_iter()
        .map(|(a, b)| SnapshotRecord::new(name(a), name(b), capacity(&mut rng)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{channel, graph};

    #[test]
    fn csv_row_mapping() {
        let text = "node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm\na,b,100000,1000,1\n";
        let recs = read_snapshot(text.as_bytes(), SnapshotFormat::Csv).unwrap();
        assert_eq!(
            recs,
            vec![SnapshotRecord {
                node_a: "a".into(),
                node_b: "b".into(),
                capacity: 100_000,
                base_fee: 1000,
                fee_rate: 1
            }]
        );
    }

    #[test]
    fn missing_fees_use_defaults() {
        let text = "node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm\na,b,5,,\n";
        let recs = read_snapshot(text.as_bytes(), SnapshotFormat::Csv).unwrap();
        assert_eq!((recs[0].base_fee, recs[0].fee_rate), (1000, 1));
        let text = "node_a,node_b,capacity_sat\na,b,5\n";
        let recs = read_snapshot(text.as_bytes(), SnapshotFormat::Csv).unwrap();
        assert_eq!((recs[0].base_fee, recs[0].fee_rate), (1000, 1));
    }

    #[test]
    fn bad_rows_name_their_line() {
        let text = "node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm\na,b,5,1,1\na,c,0,1,1\n";
        match read_snapshot(text.as_bytes(), SnapshotFormat::Csv) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm\na,b,5,1,1\na,c,x,1,1\n";
        match read_snapshot(text.as_bytes(), SnapshotFormat::Csv) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "{\"node_a\":\"a\",\"node_b\":\"a\",\"capacity_sat\":5}\n";
        assert!(matches!(
            read_snapshot(text.as_bytes(), SnapshotFormat::Jsonl),
            Err(IngestError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_inputs() {
        assert!(read_snapshot("".as_bytes(), SnapshotFormat::Csv).unwrap().is_empty());
        assert!(read_snapshot("".as_bytes(), SnapshotFormat::Jsonl).unwrap().is_empty());
        let header = "node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm\n";
        assert!(read_snapshot(header.as_bytes(), SnapshotFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn jsonl_and_duplicates() {
        let text = "{\"node_a\":\"a\",\"node_b\":\"b\",\"capacity_sat\":7,\"base_fee_msat\":3,\"fee_rate_ppm\":2}\n\
                    {\"node_a\":\"a\",\"node_b\":\"b\",\"capacity_sat\":7,\"base_fee_msat\":3,\"fee_rate_ppm\":2}\n";
        let recs = read_snapshot(text.as_bytes(), SnapshotFormat::Jsonl).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0], recs[1]);
        let g = allocate_funds_coinflip(&recs, 1).unwrap();
        assert_eq!(g.channel_count(), 2);
    }

    #[test]
    fn state_requires_balances() {
        let text = "node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm\na,b,5,1,1\n";
        assert!(matches!(
            read_state(text.as_bytes(), SnapshotFormat::Csv),
            Err(IngestError::MissingBalances { line: 2 })
        ));
        let text = "node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm,balance_a_sat,balance_b_sat\na,b,5,1,1,2,2\n";
        assert!(read_state(text.as_bytes(), SnapshotFormat::Csv).is_err());
    }

    #[test]
    fn state_round_trip() {
        let g = graph(3, vec![channel(0, 1, 10, 3), channel(1, 2, 20, 20), channel(0, 2, 5, 0)]);
        let mut buf = Vec::new();
        write_state(&mut buf, &g).unwrap();
        let back = read_state(buf.as_slice(), SnapshotFormat::Csv).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn coinflip_support_and_replay() {
        let recs: Vec<SnapshotRecord> = (0..50).map(|i| SnapshotRecord::new(format!("x{i}"), format!("y{i}"), 100 + i)).collect();
        let g1 = allocate_funds_coinflip(&recs, 9).unwrap();
        let g2 = allocate_funds_coinflip(&recs, 9).unwrap();
        assert_eq!(g1, g2);
        for ch in g1.channels() {
            assert!(
                (ch.balance_a, ch.balance_b) == (ch.capacity, 0) || (ch.balance_a, ch.balance_b) == (0, ch.capacity)
            );
        }
    }

    #[test]
    fn coinflip_is_fair() {
        let recs: Vec<SnapshotRecord> = (0..10_000).map(|i| SnapshotRecord::new(format!("a{i}"), format!("b{i}"), 10)).collect();
        let g = allocate_funds_coinflip(&recs, 2024).unwrap();
        let to_a = g.channels().iter().filter(|ch| ch.balance_a == ch.capacity).count();
        let frac = to_a as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn scc_examples() {
        // path a->b->c
        let path = graph(3, vec![channel(0, 1, 10, 10), channel(1, 2, 10, 10)]);
        let s = largest_scc(&path);
        assert_eq!(s.node_count(), 1);
        assert_eq!(s.channel_count(), 0);
        assert_eq!(s.names(), &["a".to_string()]);
        // a->b->c->a
        let tri = graph(3, vec![channel(0, 1, 10, 10), channel(1, 2, 10, 10), channel(2, 0, 10, 10)]);
        assert_eq!(largest_scc(&tri), tri);
        assert_eq!(largest_scc(&largest_scc(&tri)), tri);
    }

    #[test]
    fn scc_keeps_channels_inside_and_reindexes() {
        // d -> a only, a<->b<->c strongly connected via split balances
        let g = graph(
            4,
            vec![channel(0, 1, 10, 5), channel(1, 2, 10, 5), channel(3, 0, 10, 10), channel(0, 2, 10, 0)],
        );
        let s = largest_scc(&g);
        assert_eq!(s.names(), &["a".to_string(), "b".into(), "c".into()]);
        assert_eq!(s.channel_count(), 3);
        assert!(s.channels().iter().all(|c| c.endpoint_a.0 < 3 && c.endpoint_b.0 < 3));
    }

    #[test]
    fn synthetic_edge_counts() {
        let p = SyntheticParams { n_nodes: 4, attach_degree: 1, capacity_range: (10, 100), seed: 3 };
        let recs = generate_synthetic(&p).unwrap();
        assert_eq!(recs.len(), 3);
        let g = allocate_funds_coinflip(&recs, 0).unwrap();
        assert_eq!(g.node_count(), 4);
        let p = SyntheticParams { n_nodes: 200, attach_degree: 4, capacity_range: (10_000, 10_000_000), seed: 7 };
        let recs = generate_synthetic(&p).unwrap();
        assert_eq!(recs.len(), 784);
        assert!(recs.iter().all(|r| (10_000..=10_000_000).contains(&r.capacity)));
        assert_eq!(generate_synthetic(&p).unwrap(), recs);
        // no duplicate pairs: attachment targets are distinct
        let pairs: BTreeSet<(String, String)> = recs.iter().map(|r| (r.node_a.clone(), r.node_b.clone())).collect();
        assert_eq!(pairs.len(), 784);
    }

    #[test]
    fn synthetic_rejects_bad_parameters() {
        let p = SyntheticParams { n_nodes: 4, attach_degree: 0, capacity_range: (10, 100), seed: 3 };
        assert!(generate_synthetic(&p).is_err());
        let p = SyntheticParams { n_nodes: 3, attach_degree: 3, capacity_range: (10, 100), seed: 3 };
        assert!(generate_synthetic(&p).is_err());
        let p = SyntheticParams { n_nodes: 5, attach_degree: 1, capacity_range: (100, 10), seed: 3 };
        assert!(generate_synthetic(&p).is_err());
    }
}
