//! Static network description and random snapshot generation.
//!
//! A snapshot fixes AP and CU positions, the partition of channels among APs,
//! per-channel noise, per-CU budgets, and the full `N x K` matrix of power
//! gains. Gains for the pair `(i, k)` are exponential with mean `1/d^2`, where
//! `d` is the distance from CU `i` to the AP that owns channel `k`.
//!
//! Randomness comes from ChaCha8 with explicit stream splitting so a snapshot
//! is reproducible across platforms:
//!
//! * stream 0 draws positions (all APs first, then CUs),
//! * stream `1 + i * K + k` draws the gain of CU `i` on channel `k`.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mandatory schema tag of the snapshot JSON document.
pub const SNAPSHOT_SCHEMA: &str = "snapshot-v1";

/// Identifier of the generator and stream layout, echoed into output metadata.
pub const GENERATOR_ID: &str = "chacha8/rand_chacha-0.3/streams:pos=0,gain=1+i*K+k";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub n_cus: usize,
    pub n_aps: usize,
    pub n_channels: usize,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    pub budget_per_cu: f64,
    pub noise_per_channel: f64,
    pub seed: u64,
}

impl NetworkParams {
    pub fn new(n_cus: usize, n_aps: usize, n_channels: usize, seed: u64) -> Self {
        Self {
            n_cus,
            n_aps,
            n_channels,
            area_side: 10.0,
            budget_per_cu: 1.0,
            noise_per_channel: 1e-2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_cus == 0 {
            problems.push("n_cus must be at least 1".to_string());
        }
        if self.n_aps == 0 {
            problems.push("n_aps must be at least 1".to_string());
        }
        if self.n_channels < self.n_aps {
            problems.push(format!(
                "n_channels ({}) must be >= n_aps ({})",
                self.n_channels, self.n_aps
            ));
        }
        for (name, v) in [
            ("area_side", self.area_side),
            ("budget_per_cu", self.budget_per_cu),
            ("noise_per_channel", self.noise_per_channel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Serialized form of a snapshot. Deliberately permissive so that invalid
/// documents can be loaded and reported on by [`validate_snapshot`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDoc {
    pub schema: String,
    #[serde(default)]
    pub generator: Option<String>,
    pub params: NetworkParams,
    pub cu_positions: Vec<Point>,
    pub ap_positions: Vec<Point>,
    /// Channel -> owning AP, kept as raw entries so duplicate keys survive parsing.
    #[serde(with = "owner_entries")]
    pub channel_owner: Vec<(usize, usize)>,
    pub noise: Vec<f64>,
    /// Row-major `N x K` gains.
    pub gain: Vec<Vec<f64>>,
    pub budget: Vec<f64>,
}

mod owner_entries {
    use serde::de::{MapAccess, Visitor};
    use serde::ser::SerializeMap;
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(entries: &[(usize, usize)], ser: S) -> Result<S::Ok, S::Error> {
        let mut map = ser.serialize_map(Some(entries.len()))?;
        for (k, w) in entries {
            map.serialize_entry(&k.to_string(), w)?;
        }
        map.end()
    }

    struct EntriesVisitor;

    impl<'de> Visitor<'de> for EntriesVisitor {
        type Value = Vec<(usize, usize)>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map from channel index to AP index")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
            let mut out = Vec::new();
            while let Some((key, ap)) = access.next_entry::<String, usize>()? {
                let channel = key
                    .parse::<usize>()
                    .map_err(|_| serde::de::Error::custom(format!("bad channel key {key:?}")))?;
                out.push((channel, ap));
            }
            Ok(out)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<(usize, usize)>, D::Error> {
        de.deserialize_map(EntriesVisitor)
    }
}

/// One violated snapshot invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    Schema(String),
    Shape(String),
    /// A channel is owned by several APs, by none, or by an AP out of range.
    Partition(String),
    /// An AP owns no channel.
    EmptyAp(usize),
    Positivity(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Schema(m) => write!(f, "schema: {m}"),
            Violation::Shape(m) => write!(f, "shape: {m}"),
            Violation::Partition(m) => write!(f, "partition: {m}"),
            Violation::EmptyAp(w) => write!(f, "partition: AP {w} owns no channel"),
            Violation::Positivity(m) => write!(f, "positivity: {m}"),
        }
    }
}

/// Lists every violated invariant; an empty list means the document is valid.
pub fn validate_snapshot(doc: &SnapshotDoc) -> Vec<Violation> {
    let mut out = Vec::new();
    let p = &doc.params;
    let (n, w_count, k_count) = (p.n_cus, p.n_aps, p.n_channels);

    if doc.schema != SNAPSHOT_SCHEMA {
        out.push(Violation::Schema(format!(
            "expected {SNAPSHOT_SCHEMA:?}, found {:?}",
            doc.schema
        )));
    }
    if let Err(Error::InvalidParams(m)) = p.validate() {
        out.push(Violation::Shape(format!("params: {m}")));
    }
    if doc.cu_positions.len() != n {
        out.push(Violation::Shape(format!(
            "{} CU positions for {n} CUs",
            doc.cu_positions.len()
        )));
    }
    if doc.ap_positions.len() != w_count {
        out.push(Violation::Shape(format!(
            "{} AP positions for {w_count} APs",
            doc.ap_positions.len()
        )));
    }
    if doc.noise.len() != k_count {
        out.push(Violation::Shape(format!(
            "{} noise entries for {k_count} channels",
            doc.noise.len()
        )));
    }
    if doc.budget.len() != n {
        out.push(Violation::Shape(format!("{} budgets for {n} CUs", doc.budget.len())));
    }
    if doc.gain.len() != n || doc.gain.iter().any(|row| row.len() != k_count) {
        out.push(Violation::Shape(format!("gain matrix is not {n} x {k_count}")));
    }

    let mut owners: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(k, w) in &doc.channel_owner {
        owners.entry(k).or_default().push(w);
    }
    for (&k, ws) in &owners {
        if k >= k_count {
            out.push(Violation::Partition(format!("channel {k} out of range")));
        }
        if ws.len() > 1 {
            out.push(Violation::Partition(format!("channel {k} owned by several APs {ws:?}")));
        }
        for &w in ws {
            if w >= w_count {
                out.push(Violation::Partition(format!("channel {k} owned by unknown AP {w}")));
            }
        }
    }
    for k in 0..k_count {
        if !owners.contains_key(&k) {
            out.push(Violation::Partition(format!("channel {k} has no owner")));
        }
    }
    for w in 0..w_count {
        if !owners.values().any(|ws| ws.contains(&w)) {
            out.push(Violation::EmptyAp(w));
        }
    }

    let positive = |v: f64| v.is_finite() && v > 0.0;
    for (k, &v) in doc.noise.iter().enumerate() {
        if !positive(v) {
            out.push(Violation::Positivity(format!("noise[{k}] = {v}")));
        }
    }
    for (i, &v) in doc.budget.iter().enumerate() {
        if !positive(v) {
            out.push(Violation::Positivity(format!("budget[{i}] = {v}")));
        }
    }
    for (i, row) in doc.gain.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            if !positive(v) {
                out.push(Violation::Positivity(format!("gain[{i}][{k}] = {v}")));
            }
        }
    }
    out
}

/// A validated, immutable network snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot {
    params: NetworkParams,
    cu_positions: Vec<Point>,
    ap_positions: Vec<Point>,
    channel_owner: Vec<usize>,
    ap_channels: Vec<Vec<usize>>,
    noise: Vec<f64>,
    gain: Vec<Vec<f64>>,
    budget: Vec<f64>,
}

impl NetworkSnapshot {
    /// Builds a snapshot from a document, rejecting it if any invariant fails.
    pub fn from_doc(doc: SnapshotDoc) -> Result<Self> {
        let violations = validate_snapshot(&doc);
        if !violations.is_empty() {
            return Err(Error::InvalidSnapshot(violations));
        }
        let k_count = doc.params.n_channels;
        let mut channel_owner = vec![0; k_count];
        for &(k, w) in &doc.channel_owner {
            channel_owner[k] = w;
        }
        let mut ap_channels = vec![Vec::new(); doc.params.n_aps];
        for (k, &w) in channel_owner.iter().enumerate() {
            ap_channels[w].push(k);
        }
        Ok(Self {
            params: doc.params,
            cu_positions: doc.cu_positions,
            ap_positions: doc.ap_positions,
            channel_owner,
            ap_channels,
            noise: doc.noise,
            gain: doc.gain,
            budget: doc.budget,
        })
    }

    pub fn to_doc(&self) -> SnapshotDoc {
        SnapshotDoc {
            schema: SNAPSHOT_SCHEMA.to_string(),
            generator: Some(GENERATOR_ID.to_string()),
            params: self.params.clone(),
            cu_positions: self.cu_positions.clone(),
            ap_positions: self.ap_positions.clone(),
            channel_owner: self.channel_owner.iter().copied().enumerate().collect(),
            noise: self.noise.clone(),
            gain: self.gain.clone(),
            budget: self.budget.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SnapshotDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    /// Hand-built fixture: explicit per-AP channel lists, gains, noises and
    /// budgets. Positions are placed at the origin since they only matter for
    /// closest-AP assignment.
    pub fn from_parts(
        ap_channels: Vec<Vec<usize>>,
        gain: Vec<Vec<f64>>,
        noise: Vec<f64>,
        budget: Vec<f64>,
    ) -> Result<Self> {
        let n = gain.len();
        let k_count = noise.len();
        let w_count = ap_channels.len();
        let channel_owner = ap_channels
            .iter()
            .enumerate()
            .flat_map(|(w, ks)| ks.iter().map(move |&k| (k, w)))
            .collect();
        Self::from_doc(SnapshotDoc {
            schema: SNAPSHOT_SCHEMA.to_string(),
            generator: None,
            params: NetworkParams {
                n_cus: n,
                n_aps: w_count,
                n_channels: k_count,
                area_side: 1.0,
                budget_per_cu: budget.first().copied().unwrap_or(1.0),
                noise_per_channel: noise.first().copied().unwrap_or(1.0),
                seed: 0,
            },
            cu_positions: vec![Point::new(0.0, 0.0); n],
            ap_positions: vec![Point::new(0.0, 0.0); w_count],
            channel_owner,
            noise,
            gain,
            budget,
        })
    }

    /// Same snapshot with explicit positions.
    pub fn with_positions(mut self, cus: Vec<Point>, aps: Vec<Point>) -> Result<Self> {
        if cus.len() != self.n_cus() || aps.len() != self.n_aps() {
            return Err(Error::InvalidParams("position count mismatch".into()));
        }
        self.cu_positions = cus;
        self.ap_positions = aps;
        Ok(self)
    }

    /// Same CUs and gains with every channel owned by a single AP. Used for the
    /// multi-homing (K-connectivity) reference.
    pub fn merged(&self) -> Self {
        let mut merged = self.clone();
        merged.params.n_aps = 1;
        merged.ap_positions.truncate(1);
        merged.channel_owner = vec![0; self.n_channels()];
        merged.ap_channels = vec![(0..self.n_channels()).collect()];
        merged
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }
    pub fn n_cus(&self) -> usize {
        self.params.n_cus
    }
    pub fn n_aps(&self) -> usize {
        self.params.n_aps
    }
    pub fn n_channels(&self) -> usize {
        self.params.n_channels
    }
    pub fn cu_positions(&self) -> &[Point] {
        &self.cu_positions
    }
    pub fn ap_positions(&self) -> &[Point] {
        &self.ap_positions
    }
    pub fn owner(&self, channel: usize) -> usize {
        self.channel_owner[channel]
    }
    /// Channels owned by `ap`, ascending.
    pub fn channels(&self, ap: usize) -> &[usize] {
        &self.ap_channels[ap]
    }
    pub fn noise(&self, channel: usize) -> f64 {
        self.noise[channel]
    }
    pub fn noises(&self) -> &[f64] {
        &self.noise
    }
    pub fn gain(&self, cu: usize, channel: usize) -> f64 {
        self.gain[cu][channel]
    }
    pub fn budget(&self, cu: usize) -> f64 {
        self.budget[cu]
    }
    /// Gains of `cu` restricted to the channels of `ap`.
    pub fn gains_on(&self, cu: usize, ap: usize) -> Vec<f64> {
        self.channels(ap).iter().map(|&k| self.gain[cu][k]).collect()
    }
}

/// Contiguous equal blocks; the first `K mod W` APs get one extra channel.
pub fn block_partition(n_channels: usize, n_aps: usize) -> Vec<usize> {
    let base = n_channels / n_aps;
    let extra = n_channels % n_aps;
    let mut owner = Vec::with_capacity(n_channels);
    for w in 0..n_aps {
        let size = base + usize::from(w < extra);
        owner.extend(std::iter::repeat_n(w, size));
    }
    owner
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_snapshot(params: &NetworkParams) -> Result<NetworkSnapshot> {
    params.validate()?;
    let (n, w_count, k_count) = (params.n_cus, params.n_aps, params.n_channels);
    let side = params.area_side;

    let mut pos_rng = stream_rng(params.seed, 0);
    let draw_point = |rng: &mut ChaCha8Rng| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side);
    let ap_positions: Vec<Point> = (0..w_count).map(|_| draw_point(&mut pos_rng)).collect();
    let cu_positions: Vec<Point> = (0..n)
        .map(|_| loop {
            let p = draw_point(&mut pos_rng);
            if ap_positions.iter().all(|ap| ap.distance(&p) > 0.0) {
                break p;
            }
        })
        .collect();

    let channel_owner = block_partition(k_count, w_count);
    let mut gain = vec![vec![0.0; k_count]; n];
    for (i, row) in gain.iter_mut().enumerate() {
        for (k, g) in row.iter_mut().enumerate() {
            let d = cu_positions[i].distance(&ap_positions[channel_owner[k]]);
            let mean = 1.0 / (d * d);
            let exp = Exp::new(1.0 / mean).map_err(|e| Error::InvalidParams(e.to_string()))?;
            let mut rng = stream_rng(params.seed, 1 + (i * k_count + k) as u64);
            *g = loop {
                let v = exp.sample(&mut rng);
                if v > 0.0 {
                    break v;
                }
            };
        }
    }

    NetworkSnapshot::from_doc(SnapshotDoc {
        schema: SNAPSHOT_SCHEMA.to_string(),
        generator: Some(GENERATOR_ID.to_string()),
        params: params.clone(),
        cu_positions,
        ap_positions,
        channel_owner: channel_owner.into_iter().enumerate().collect(),
        noise: vec![params.noise_per_channel; k_count],
        gain,
        budget: vec![params.budget_per_cu; n],
    })
}
