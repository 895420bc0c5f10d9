//! Hash-based (digest) traceback across autonomous systems.
//!
//! Routers that participate keep a Bloom-filter store of 32-bit digests of
//! the packets they forwarded. A digest covers the 28 identity bytes of a
//! packet (20-byte header plus the first 8 payload bytes) with the four
//! hop-mutable bytes zeroed, so the same packet digests identically at
//! every hop. Tracing a packet is then: query stores, walk the positive
//! routers upstream inside each domain, and stitch the per-domain segments
//! together by querying neighbouring domains' collectors wave by wave.
//!
//! Domains that do not participate leave gaps. They cannot be queried, so
//! the cross-domain session reaches over them using each participating
//! domain's installed knowledge of deployed neighbours one and two
//! AS-hops away, and the final grafted path records the jump explicitly.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;
use libm::{exp, pow};

use crate::rng::splitmix64;
use crate::topology::{AsId, AsTopology, NodeId, TopologyError};

/// Number of identity bytes a digest covers.
pub const IDENTITY_LEN: usize = 28;

/// Byte offsets zeroed before hashing: the bytes legitimately rewritten
/// in flight (service/class byte, hop-count byte, header checksum).
pub const MASKED_OFFSETS: [usize; 4] = [1, 8, 10, 11];

/// 32-bit FNV-1a over a byte slice.
pub fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(16_777_619);
    }
    h
}

/// The hop-invariant identity bytes of one packet.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PacketIdentity {
    pub bytes: [u8; IDENTITY_LEN],
}

impl PacketIdentity {
    pub fn new(bytes: [u8; IDENTITY_LEN]) -> Self {
        Self { bytes }
    }

    /// Deterministic pseudo-random identity, for experiments that need
    /// many distinct packets.
    pub fn from_seed(seed: u64) -> Self {
        let mut bytes = [0u8; IDENTITY_LEN];
        let mut word = 0u64;
        for (i, b) in bytes.iter_mut().enumerate() {
            if i % 8 == 0 {
                word = splitmix64(seed.wrapping_add((i / 8) as u64));
            }
            *b = (word >> ((i % 8) * 8)) as u8;
        }
        Self { bytes }
    }

    /// Digest of this packet: mask the mutable bytes, then hash.
    pub fn digest(&self) -> u32 {
        let mut masked = self.bytes;
        for &off in &MASKED_OFFSETS {
            masked[off] = 0;
        }
        fnv1a32(&masked)
    }
}

/// Errors from digest stores and traceback sessions.
#[derive(Clone, Debug, PartialEq)]
pub enum SpieError {
    Topology(TopologyError),
    /// Store geometry outside the supported range.
    BadStoreGeometry { log2_bits: u32, hashes: u32 },
    /// The scenario has no victim host configured.
    NoVictim,
    /// The victim's own AS does not participate, so no trace can start.
    NotDeployed(AsId),
    /// No router of the AS matched the digest in a way a trail could
    /// anchor to.
    NotSeen(AsId),
    /// The upstream walk split; both branches saw the digest.
    ForkDetected { as_id: AsId, prefix: Vec<NodeId>, branches: Vec<NodeId> },
}

impl fmt::Display for SpieError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Topology(e) => write!(f, "{e}"),
            Self::BadStoreGeometry { log2_bits, hashes } => {
                write!(f, "unsupported store geometry: 2^{log2_bits} bits, {hashes} hashes")
            }
            Self::NoVictim => write!(f, "scenario has no victim host"),
            Self::NotDeployed(a) => write!(f, "AS {a} does not participate in traceback"),
            Self::NotSeen(a) => write!(f, "no trail for the digest inside AS {a}"),
            Self::ForkDetected { as_id, branches, .. } => {
                write!(f, "upstream walk forked in AS {as_id} ({} branches)", branches.len())
            }
        }
    }
}

impl core::error::Error for SpieError {}

impl From<TopologyError> for SpieError {
    fn from(e: TopologyError) -> Self {
        Self::Topology(e)
    }
}

/// Bloom-filter digest store of one router.
///
/// Bit positions come from double hashing: `splitmix64` of the digest
/// supplies two 32-bit halves `h1` and `h2` (forced odd), and hash `i`
/// probes `(h1 + i * h2) mod m` with `m` a power of two.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigestStore {
    bits: Vec<u64>,
    bit_count: usize,
    hashes: u32,
    inserted: u64,
}

impl DigestStore {
    /// Store with `2^log2_bits` bits and `hashes` probes per digest.
    pub fn new(log2_bits: u32, hashes: u32) -> Result<Self, SpieError> {
        if !(6..=28).contains(&log2_bits) || !(1..=16).contains(&hashes) {
            return Err(SpieError::BadStoreGeometry { log2_bits, hashes });
        }
        let bit_count = 1usize << log2_bits;
        Ok(Self { bits: alloc::vec![0u64; bit_count / 64], bit_count, hashes, inserted: 0 })
    }

    /// The default geometry: 2^20 bits, 3 hashes.
    pub fn with_defaults() -> Self {
        Self::new(20, 3).expect("default geometry is valid")
    }

    fn positions(&self, digest: u32) -> impl Iterator<Item = usize> + '_ {
        let h = splitmix64(u64::from(digest));
        let h1 = h & 0xffff_ffff;
        let h2 = (h >> 32) | 1;
        let mask = (self.bit_count - 1) as u64;
        (0..u64::from(self.hashes)).map(move |i| ((h1.wrapping_add(i.wrapping_mul(h2))) & mask) as usize)
    }

    pub fn insert(&mut self, digest: u32) {
        for pos in self.positions(digest).collect::<Vec<_>>() {
            self.bits[pos >> 6] |= 1u64 << (pos & 63);
        }
        self.inserted += 1;
    }

    pub fn contains(&self, digest: u32) -> bool {
        self.positions(digest).all(|pos| self.bits[pos >> 6] & (1u64 << (pos & 63)) != 0)
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn bit_count(&self) -> usize {
        self.bit_count
    }

    pub fn hash_count(&self) -> u32 {
        self.hashes
    }

    /// Analytic false-positive rate at the current fill:
    /// `(1 - e^(-k n / m))^k`.
    pub fn expected_fp_rate(&self) -> f64 {
        let k = f64::from(self.hashes);
        let n = self.inserted as f64;
        let m = self.bit_count as f64;
        pow(1.0 - exp(-k * n / m), k)
    }
}

/// The deployed traceback agents: one digest store per participating
/// router, grouped into one collection region per deployed AS, queried
/// through each domain's collector.
#[derive(Clone, Debug, PartialEq)]
pub struct TracebackAgents {
    stores: BTreeMap<NodeId, DigestStore>,
    regions: BTreeMap<AsId, BTreeSet<NodeId>>,
}

impl TracebackAgents {
    /// Installs a default-geometry store on every participating router
    /// and assigns each to its AS's collection region.
    pub fn deploy(topo: &AsTopology) -> Self {
        let mut stores = BTreeMap::new();
        let mut regions: BTreeMap<AsId, BTreeSet<NodeId>> = BTreeMap::new();
        for (as_id, _) in topo.ases() {
            if !topo.is_deployed(as_id) {
                continue;
            }
            let members = regions.entry(as_id).or_default();
            for r in topo.routers_in(as_id) {
                if r.spie_enabled {
                    stores.insert(r.id, DigestStore::with_defaults());
                    members.insert(r.id);
                }
            }
        }
        Self { stores, regions }
    }

    /// The routers collected by one AS's region, if that AS participates.
    pub fn scar_region(&self, as_id: AsId) -> Option<&BTreeSet<NodeId>> {
        self.regions.get(&as_id)
    }

    /// Records a forwarded packet digest at every participating router on
    /// the route.
    pub fn observe(&mut self, route: &[NodeId], digest: u32) {
        for node in route {
            if let Some(store) = self.stores.get_mut(node) {
                store.insert(digest);
            }
        }
    }

    pub fn router_saw(&self, router: NodeId, digest: u32) -> bool {
        self.stores.get(&router).map(|s| s.contains(digest)).unwrap_or(false)
    }

    pub fn store(&self, router: NodeId) -> Option<&DigestStore> {
        self.stores.get(&router)
    }

    pub fn store_mut(&mut self, router: NodeId) -> Option<&mut DigestStore> {
        self.stores.get_mut(&router)
    }

    /// Whether any router of the AS saw the digest.
    pub fn as_saw(&self, topo: &AsTopology, as_id: AsId, digest: u32) -> bool {
        topo.routers_in(as_id).any(|r| self.router_saw(r.id, digest))
    }
}

/// Where an intra-AS walk starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceAnchor {
    /// Start at the router serving this host (the victim's AS).
    VictimHost(NodeId),
    /// Start at the border nearest this AS (a queried AS traces from the
    /// side facing the victim).
    TowardAs(AsId),
}

/// How an intra-AS walk ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminus {
    /// The trail dead-ends at a router with an attached host: the attack
    /// entered the network here.
    Origin { router: NodeId },
    /// The packet entered this AS over a border from another AS.
    IngressBorder { border: NodeId, from_as: AsId },
    /// The trail goes cold inside the AS.
    Interior { last: NodeId },
}

/// One AS's share of the attack path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InternalTrace {
    pub as_id: AsId,
    /// Routers that saw the digest, victim side first.
    pub path: Vec<NodeId>,
    pub terminus: Terminus,
}

/// Walks the digest trail upstream inside one AS.
///
/// The walk never crosses an AS boundary; borders only decide where it
/// starts and how it ends. Exactly one positive continuation is accepted
/// per step, so a genuine split reports [`SpieError::ForkDetected`]
/// instead of guessing.
pub fn internal_traceback(
    topo: &AsTopology,
    agents: &TracebackAgents,
    as_id: AsId,
    digest: u32,
    anchor: TraceAnchor,
) -> Result<InternalTrace, SpieError> {
    let net = topo.network();
    if topo.as_info(as_id).is_none() {
        return Err(SpieError::Topology(TopologyError::UnknownAs(as_id)));
    }
    let positive =
        |n: NodeId| net.is_router(n) && net.domain_of(n) == Some(as_id) && agents.router_saw(n, digest);

    let (start, excluded_host) = match anchor {
        TraceAnchor::VictimHost(v) => {
            let start = net
                .neighbors(v)
                .filter(|&n| positive(n))
                .min()
                .ok_or(SpieError::NotSeen(as_id))?;
            (start, Some(v))
        }
        TraceAnchor::TowardAs(target) => {
            // Positive border routers, scored by how close the AS on the
            // far side of their border link sits to the target AS.
            let mut best: Option<(u32, NodeId)> = None;
            let mut any_positive = None;
            for r in topo.routers_in(as_id) {
                if !agents.router_saw(r.id, digest) {
                    continue;
                }
                any_positive.get_or_insert(r.id);
                let border_score = net
                    .neighbors(r.id)
                    .filter(|&n| net.is_router(n))
                    .filter_map(|n| net.domain_of(n))
                    .filter(|&d| d != as_id)
                    .filter_map(|d| topo.as_distance(d, target))
                    .min();
                if let Some(score) = border_score {
                    if best.map(|(s, _)| score < s).unwrap_or(true) {
                        best = Some((score, r.id));
                    }
                }
            }
            let start = best
                .map(|(_, r)| r)
                .or(any_positive)
                .ok_or(SpieError::NotSeen(as_id))?;
            (start, None)
        }
    };

    let mut path = alloc::vec![start];
    let mut visited: BTreeSet<NodeId> = path.iter().copied().collect();
    loop {
        let current = *path.last().unwrap();
        let same_as: Vec<NodeId> = net
            .neighbors(current)
            .filter(|&n| positive(n) && !visited.contains(&n))
            .collect();
        match same_as.len() {
            1 => {
                path.push(same_as[0]);
                visited.insert(same_as[0]);
                continue;
            }
            0 => {}
            _ => {
                let mut branches = same_as;
                branches.sort();
                return Err(SpieError::ForkDetected { as_id, prefix: path, branches });
            }
        }

        // No continuation inside the AS: decide how the trail ends.
        let mut foreign_positive_as: BTreeSet<AsId> = BTreeSet::new();
        let mut foreign_positive_routers: Vec<NodeId> = Vec::new();
        let mut foreign_unknowable: BTreeSet<AsId> = BTreeSet::new();
        let mut host_adjacent = false;
        for n in net.neighbors(current) {
            if net.is_host(n) {
                if excluded_host != Some(n) {
                    host_adjacent = true;
                }
                continue;
            }
            let d = net.domain_of(n).expect("linked router has a domain");
            if d == as_id {
                continue;
            }
            if topo.is_deployed(d) {
                if agents.router_saw(n, digest) {
                    foreign_positive_as.insert(d);
                    foreign_positive_routers.push(n);
                }
            } else {
                foreign_unknowable.insert(d);
            }
        }

        let terminus = if foreign_positive_as.len() == 1 {
            Terminus::IngressBorder {
                border: current,
                from_as: *foreign_positive_as.iter().next().unwrap(),
            }
        } else if foreign_positive_as.len() > 1 {
            foreign_positive_routers.sort();
            return Err(SpieError::ForkDetected {
                as_id,
                prefix: path,
                branches: foreign_positive_routers,
            });
        } else if host_adjacent {
            Terminus::Origin { router: current }
        } else if foreign_unknowable.len() == 1 {
            Terminus::IngressBorder {
                border: current,
                from_as: *foreign_unknowable.iter().next().unwrap(),
            }
        } else {
            Terminus::Interior { last: current }
        };
        return Ok(InternalTrace { as_id, path, terminus });
    }
}

/// One event in a cross-AS query session, in protocol order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmEvent {
    /// The victim's collector asks another AS's collector about a digest.
    Query { from: AsId, to: AsId, digest: u32 },
    /// The queried AS saw nothing.
    Negative { from: AsId },
    /// The queried AS saw the digest: its internal path (victim side
    /// first), its installed knowledge sets, and whether its trail ended
    /// at an origin.
    Positive {
        from: AsId,
        path: Vec<NodeId>,
        one_hop: Vec<AsId>,
        two_hop: Vec<AsId>,
        origin: bool,
    },
}

fn join_ids<T: fmt::Display>(out: &mut String, ids: &[T]) {
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{id}");
    }
}

impl StmEvent {
    /// Renders the event as one transcript line.
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        match self {
            Self::Query { from, to, digest } => {
                let _ = write!(s, "QUERY {from} {to} {digest:08x}");
            }
            Self::Negative { from } => {
                let _ = write!(s, "NEG {from}");
            }
            Self::Positive { from, path, one_hop, two_hop, origin } => {
                let _ = write!(s, "POS {from} path=");
                join_ids(&mut s, path);
                s.push_str(" one_hop=");
                join_ids(&mut s, one_hop);
                s.push_str(" two_hop=");
                join_ids(&mut s, two_hop);
                if *origin {
                    s.push_str(" origin");
                }
            }
        }
        s
    }
}

/// Ordered record of every query and reply in one session.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StmQueryTranscript {
    pub events: Vec<StmEvent>,
}

impl StmQueryTranscript {
    /// All event lines, newline-terminated.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&e.to_line());
            s.push('\n');
        }
        s
    }
}

/// One element of the grafted cross-AS attack path, victim side first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraftElement {
    /// A traced segment inside one AS.
    Segment { as_id: AsId, routers: Vec<NodeId>, origin: bool },
    /// A jump over non-participating space between two segments.
    Gap,
}

/// Renders the grafted path as a single line:
/// `PATH AS1[11,12] GAP AS3[31,32,33] *AS10[101,102]`, victim side first,
/// `*` marking the origin segment.
pub fn render_path(elements: &[GraftElement]) -> String {
    let mut s = String::from("PATH");
    for e in elements {
        s.push(' ');
        match e {
            GraftElement::Gap => s.push_str("GAP"),
            GraftElement::Segment { as_id, routers, origin } => {
                if *origin {
                    s.push('*');
                }
                let _ = write!(s, "AS{as_id}[");
                join_ids(&mut s, routers);
                s.push(']');
            }
        }
    }
    s
}

/// Final result of a cross-AS session.
#[derive(Clone, Debug, PartialEq)]
pub enum CrossAsOutcome {
    /// The origin AS was found; the grafted path runs victim first.
    Complete { elements: Vec<GraftElement>, transcript: StmQueryTranscript },
    /// Every reachable deployed AS was asked without finding an origin.
    OriginNotFound { transcript: StmQueryTranscript },
}

impl CrossAsOutcome {
    pub fn transcript(&self) -> &StmQueryTranscript {
        match self {
            Self::Complete { transcript, .. } | Self::OriginNotFound { transcript } => transcript,
        }
    }
}

/// Session progress.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionState {
    InProgress,
    Complete,
    Failed,
}

struct PendingQuery {
    target: AsId,
    parent: AsId,
    level: u8,
}

/// A stepwise cross-AS traceback session.
///
/// Holds no references to the topology or the agents; both are passed
/// into [`CrossAsSession::step`], so independent sessions can interleave
/// over the same deployment.
pub struct CrossAsSession {
    digest: u32,
    victim_as: AsId,
    state: SessionState,
    queue: VecDeque<PendingQuery>,
    contacted: BTreeSet<AsId>,
    events: Vec<StmEvent>,
    segments: BTreeMap<AsId, (Vec<NodeId>, bool)>,
    parents: BTreeMap<AsId, (AsId, u8)>,
    origin_as: Option<AsId>,
}

impl CrossAsSession {
    /// Opens a session: traces inside the victim's AS and seeds the first
    /// query waves from its installed knowledge.
    pub fn new(
        topo: &AsTopology,
        agents: &TracebackAgents,
        digest: u32,
    ) -> Result<Self, SpieError> {
        let victim = topo.victim().ok_or(SpieError::NoVictim)?;
        let victim_as = topo
            .network()
            .domain_of(victim)
            .ok_or(SpieError::NoVictim)?;
        if !topo.is_deployed(victim_as) {
            return Err(SpieError::NotDeployed(victim_as));
        }
        let mut session = Self {
            digest,
            victim_as,
            state: SessionState::InProgress,
            queue: VecDeque::new(),
            contacted: BTreeSet::new(),
            events: Vec::new(),
            segments: BTreeMap::new(),
            parents: BTreeMap::new(),
            origin_as: None,
        };
        session.contacted.insert(victim_as);

        let local = match internal_traceback(
            topo,
            agents,
            victim_as,
            digest,
            TraceAnchor::VictimHost(victim),
        ) {
            Ok(trace) => trace,
            Err(SpieError::NotSeen(_)) => {
                session.state = SessionState::Failed;
                return Ok(session);
            }
            Err(e) => return Err(e),
        };
        let origin = matches!(local.terminus, Terminus::Origin { .. });
        session.segments.insert(victim_as, (local.path, origin));
        if origin {
            session.origin_as = Some(victim_as);
            session.state = SessionState::Complete;
            return Ok(session);
        }
        session.enqueue_waves(topo, victim_as)?;
        if session.queue.is_empty() {
            session.state = SessionState::Failed;
        }
        Ok(session)
    }

    /// Queues the knowledge waves of `from`: level-1 neighbours first,
    /// then level-2, each in ascending AS order, skipping any AS already
    /// contacted or queued.
    fn enqueue_waves(&mut self, topo: &AsTopology, from: AsId) -> Result<(), SpieError> {
        for level in 1..=topo.deployment_horizon().min(2) {
            let known = topo.deployment_neighbors(from, level)?;
            for &target in known {
                if self.contacted.insert(target) {
                    self.queue.push_back(PendingQuery { target, parent: from, level });
                }
            }
        }
        Ok(())
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn events(&self) -> &[StmEvent] {
        &self.events
    }

    /// Issues the next queued query and processes the reply. Returns the
    /// state after the step; completed or failed sessions are left as-is.
    pub fn step(
        &mut self,
        topo: &AsTopology,
        agents: &TracebackAgents,
    ) -> Result<SessionState, SpieError> {
        if self.state != SessionState::InProgress {
            return Ok(self.state);
        }
        let Some(query) = self.queue.pop_front() else {
            self.state = SessionState::Failed;
            return Ok(self.state);
        };
        let target = query.target;
        self.events.push(StmEvent::Query { from: self.victim_as, to: target, digest: self.digest });

        if !agents.as_saw(topo, target, self.digest) {
            self.events.push(StmEvent::Negative { from: target });
            if self.queue.is_empty() {
                self.state = SessionState::Failed;
            }
            return Ok(self.state);
        }

        let trace = match internal_traceback(
            topo,
            agents,
            target,
            self.digest,
            TraceAnchor::TowardAs(self.victim_as),
        ) {
            Ok(t) => t,
            Err(SpieError::NotSeen(_)) => {
                self.events.push(StmEvent::Negative { from: target });
                if self.queue.is_empty() {
                    self.state = SessionState::Failed;
                }
                return Ok(self.state);
            }
            Err(e) => return Err(e),
        };
        let one_hop: Vec<AsId> = topo.deployment_neighbors(target, 1)?.iter().copied().collect();
        let two_hop: Vec<AsId> = if topo.deployment_horizon() >= 2 {
            topo.deployment_neighbors(target, 2)?.iter().copied().collect()
        } else {
            Vec::new()
        };
        let origin = matches!(trace.terminus, Terminus::Origin { .. });
        self.events.push(StmEvent::Positive {
            from: target,
            path: trace.path.clone(),
            one_hop,
            two_hop,
            origin,
        });
        self.segments.insert(target, (trace.path, origin));
        self.parents.insert(target, (query.parent, query.level));

        if origin {
            self.origin_as = Some(target);
            self.state = SessionState::Complete;
            return Ok(self.state);
        }
        self.enqueue_waves(topo, target)?;
        if self.queue.is_empty() {
            self.state = SessionState::Failed;
        }
        Ok(self.state)
    }

    /// Runs the session to completion.
    pub fn run(
        &mut self,
        topo: &AsTopology,
        agents: &TracebackAgents,
    ) -> Result<SessionState, SpieError> {
        while self.state == SessionState::InProgress {
            self.step(topo, agents)?;
        }
        Ok(self.state)
    }

    /// Consumes the session into its outcome. The grafted path follows
    /// the discovery chain from the victim AS to the origin AS; an AS
    /// discovered from a level-2 knowledge set was reached over
    /// non-participating space, which appears as a [`GraftElement::Gap`].
    pub fn into_outcome(self) -> CrossAsOutcome {
        let transcript = StmQueryTranscript { events: self.events };
        let Some(origin_as) = self.origin_as else {
            return CrossAsOutcome::OriginNotFound { transcript };
        };
        // Chain from the origin back to the victim AS.
        let mut chain = alloc::vec![(origin_as, 0u8)];
        let mut cursor = origin_as;
        while cursor != self.victim_as {
            let (parent, level) = self.parents[&cursor];
            chain.last_mut().unwrap().1 = level;
            chain.push((parent, 0));
            cursor = parent;
        }
        chain.reverse(); // victim first; each entry's level is the edge to its predecessor
        let mut elements = Vec::new();
        for (as_id, level_from_parent) in chain {
            if level_from_parent == 2 {
                elements.push(GraftElement::Gap);
            }
            let (routers, origin) = self.segments[&as_id].clone();
            elements.push(GraftElement::Segment { as_id, routers, origin });
        }
        CrossAsOutcome::Complete { elements, transcript }
    }
}

/// Convenience one-shot cross-AS traceback.
pub fn cross_as_traceback(
    topo: &AsTopology,
    agents: &TracebackAgents,
    digest: u32,
) -> Result<CrossAsOutcome, SpieError> {
    let mut session = CrossAsSession::new(topo, agents, digest)?;
    session.run(topo, agents)?;
    Ok(session.into_outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_fig10_topology;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    fn observed_fig10() -> (AsTopology, TracebackAgents, u32) {
        let topo = build_fig10_topology();
        let mut agents = TracebackAgents::deploy(&topo);
        let digest = PacketIdentity::from_seed(7).digest();
        let route: Vec<NodeId> = topo.route().unwrap().to_vec();
        agents.observe(&route, digest);
        (topo, agents, digest)
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a32(b""), 0x811c_9dc5);
        assert_eq!(fnv1a32(b"a"), 0xe40c_292c);
        assert_eq!(fnv1a32(b"foobar"), 0xbf9c_f968);
    }

    #[test]
    fn digest_ignores_masked_bytes_only() {
        let base = PacketIdentity::from_seed(1);
        for off in MASKED_OFFSETS {
            let mut changed = base;
            changed.bytes[off] = changed.bytes[off].wrapping_add(0x5d);
            assert_eq!(changed.digest(), base.digest(), "offset {off} must not matter");
        }
        let mut changed = base;
        changed.bytes[0] ^= 1;
        assert_ne!(changed.digest(), base.digest());
        let mut changed = base;
        changed.bytes[IDENTITY_LEN - 1] ^= 1;
        assert_ne!(changed.digest(), base.digest());
    }

    #[test]
    fn regions_cover_participating_routers() {
        let topo = build_fig10_topology();
        let agents = TracebackAgents::deploy(&topo);
        // Non-participating domains have no region at all.
        assert_eq!(agents.scar_region(AsId(2)), None);
        let as1: Vec<NodeId> = agents.scar_region(AsId(1)).unwrap().iter().copied().collect();
        assert_eq!(as1, vec![NodeId(11), NodeId(12), NodeId(13)]);
        // Every region member holds a digest store.
        for (as_id, _) in topo.ases() {
            if let Some(region) = agents.scar_region(as_id) {
                for &r in region {
                    assert!(agents.store(r).is_some());
                }
            }
        }
    }

    #[test]
    fn store_has_no_false_negatives() {
        let mut store = DigestStore::with_defaults();
        assert_eq!(store.bit_count(), 1 << 20);
        assert_eq!(store.hash_count(), 3);
        let digests: Vec<u32> =
            (0..500).map(|i| PacketIdentity::from_seed(i).digest()).collect();
        for &d in &digests {
            store.insert(d);
        }
        assert_eq!(store.inserted(), 500);
        for &d in &digests {
            assert!(store.contains(d));
        }
    }

    #[test]
    fn store_fp_rate_formula() {
        let mut store = DigestStore::new(16, 4).unwrap();
        for i in 0..4000u64 {
            store.insert(splitmix64(i) as u32);
        }
        let expect = pow(1.0 - exp(-4.0 * 4000.0 / 65536.0), 4.0);
        assert!((store.expected_fp_rate() - expect).abs() < 1e-12);
        assert!((expect - 0.0022).abs() < 5e-4, "formula value near 0.0022, got {expect}");
        assert!(DigestStore::new(40, 4).is_err());
        assert!(DigestStore::new(16, 0).is_err());
    }

    #[test]
    fn internal_trace_of_victim_as() {
        let (topo, agents, digest) = observed_fig10();
        let trace = internal_traceback(
            &topo,
            &agents,
            AsId(1),
            digest,
            TraceAnchor::VictimHost(NodeId(901)),
        )
        .unwrap();
        assert_eq!(trace.path, vec![NodeId(11), NodeId(12)]);
        assert_eq!(
            trace.terminus,
            Terminus::IngressBorder { border: NodeId(12), from_as: AsId(2) }
        );
    }

    #[test]
    fn internal_trace_of_transit_as() {
        let (topo, agents, digest) = observed_fig10();
        let trace =
            internal_traceback(&topo, &agents, AsId(3), digest, TraceAnchor::TowardAs(AsId(1)))
                .unwrap();
        assert_eq!(trace.path, vec![NodeId(31), NodeId(32), NodeId(33)]);
        assert_eq!(
            trace.terminus,
            Terminus::IngressBorder { border: NodeId(33), from_as: AsId(10) }
        );
    }

    #[test]
    fn internal_trace_of_origin_as() {
        let (topo, agents, digest) = observed_fig10();
        let trace =
            internal_traceback(&topo, &agents, AsId(10), digest, TraceAnchor::TowardAs(AsId(1)))
                .unwrap();
        assert_eq!(trace.path, vec![NodeId(101), NodeId(102)]);
        assert_eq!(trace.terminus, Terminus::Origin { router: NodeId(102) });
    }

    #[test]
    fn internal_trace_requires_a_trail() {
        let (topo, agents, digest) = observed_fig10();
        assert_eq!(
            internal_traceback(&topo, &agents, AsId(7), digest, TraceAnchor::TowardAs(AsId(1))),
            Err(SpieError::NotSeen(AsId(7)))
        );
    }

    #[test]
    fn cross_as_session_golden_transcript() {
        let (topo, agents, digest) = observed_fig10();
        let outcome = cross_as_traceback(&topo, &agents, digest).unwrap();
        let CrossAsOutcome::Complete { elements, transcript } = outcome else {
            panic!("expected a completed trace");
        };
        let mut text = transcript.to_text();
        text.push_str(&render_path(&elements));
        text.push('\n');
        assert_eq!(digest, 0x3cdb_7d89, "fixture digest is pinned");
        let golden = "\
QUERY 1 7 3cdb7d89
NEG 7
QUERY 1 3 3cdb7d89
POS 3 path=31,32,33 one_hop=4,10 two_hop=5,7
QUERY 1 4 3cdb7d89
NEG 4
QUERY 1 10 3cdb7d89
POS 10 path=101,102 one_hop=3 two_hop=4 origin
PATH AS1[11,12] GAP AS3[31,32,33] *AS10[101,102]
";
        assert_eq!(text, golden);
    }

    #[test]
    fn interleaved_sessions_match_solo_runs() {
        let topo = build_fig10_topology();
        let mut agents = TracebackAgents::deploy(&topo);
        let route: Vec<NodeId> = topo.route().unwrap().to_vec();
        let d1 = PacketIdentity::from_seed(100).digest();
        let d2 = PacketIdentity::from_seed(200).digest();
        agents.observe(&route, d1);
        agents.observe(&route, d2);

        let solo1 = {
            let mut s = CrossAsSession::new(&topo, &agents, d1).unwrap();
            s.run(&topo, &agents).unwrap();
            s.into_outcome()
        };
        let solo2 = {
            let mut s = CrossAsSession::new(&topo, &agents, d2).unwrap();
            s.run(&topo, &agents).unwrap();
            s.into_outcome()
        };

        let mut a = CrossAsSession::new(&topo, &agents, d1).unwrap();
        let mut b = CrossAsSession::new(&topo, &agents, d2).unwrap();
        loop {
            let sa = a.step(&topo, &agents).unwrap();
            let sb = b.step(&topo, &agents).unwrap();
            if sa != SessionState::InProgress && sb != SessionState::InProgress {
                break;
            }
        }
        assert_eq!(a.into_outcome(), solo1);
        assert_eq!(b.into_outcome(), solo2);
    }

    #[test]
    fn unseen_digest_fails_without_queries() {
        let (topo, agents, _) = observed_fig10();
        let unseen = PacketIdentity::from_seed(999_999).digest();
        match cross_as_traceback(&topo, &agents, unseen).unwrap() {
            CrossAsOutcome::OriginNotFound { transcript } => {
                assert!(transcript.events.is_empty());
            }
            other => panic!("expected no origin, got {other:?}"),
        }
    }

    #[test]
    fn event_lines_render_empty_sets() {
        let e = StmEvent::Positive {
            from: AsId(9),
            path: vec![NodeId(91)],
            one_hop: vec![],
            two_hop: vec![],
            origin: false,
        };
        assert_eq!(e.to_line(), "POS 9 path=91 one_hop= two_hop=");
        let q = StmEvent::Query { from: AsId(1), to: AsId(7), digest: 0x0000_beef };
        assert_eq!(q.to_line(), "QUERY 1 7 0000beef");
        assert_eq!(StmEvent::Negative { from: AsId(7) }.to_line(), "NEG 7");
    }

    #[test]
    fn render_path_formats_segments_and_gaps() {
        let elements = vec![
            GraftElement::Segment {
                as_id: AsId(1),
                routers: vec![NodeId(11), NodeId(12)],
                origin: false,
            },
            GraftElement::Gap,
            GraftElement::Segment { as_id: AsId(3), routers: vec![NodeId(31)], origin: true },
        ];
        assert_eq!(render_path(&elements), "PATH AS1[11,12] GAP *AS3[31]".to_string());
        let _ = format!("{elements:?}");
    }
}
