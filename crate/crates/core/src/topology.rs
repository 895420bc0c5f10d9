//! Network and AS-level scenario models.
//!
//! Two layers. [`Network`] is the router layer: hosts, routers and
//! undirected links, with per-router knobs (marking probability, traceback
//! message probability, digest support, firewall). [`AsTopology`] adds the
//! autonomous-system layer on top: which AS each router belongs to, AS
//! adjacency, which ASes run hash-based traceback, and the statically
//! installed deployment knowledge each AS controller holds about deployed
//! neighbours one and two AS-hops away.
//!
//! Topologies are immutable once built; construction goes through
//! [`AsTopologyBuilder`], which validates the whole object in one place.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

/// Identifier of a host or router. Plain opaque integer; rendered bare in
/// transcripts and reports.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of an autonomous system.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AsId(pub u32);

impl fmt::Display for AsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of an undirected link, assigned in insertion order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct LinkId(pub u64);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Errors raised while building or querying topologies.
#[derive(Clone, Debug, PartialEq)]
pub enum TopologyError {
    /// An attack path must contain at least one router.
    EmptyPath,
    /// The same router appears twice on an attack path.
    DuplicateRouter(NodeId),
    /// Attacker or victim listed among the path routers, or equal to each
    /// other.
    BadEndpoint(NodeId),
    /// `build_linear_path` needs at least one hop.
    ZeroHopCount,
    /// A probability parameter fell outside `[0, 1]`.
    ProbabilityOutOfRange(f64),
    /// Node referenced before being declared.
    UnknownNode(NodeId),
    /// Node id declared twice.
    DuplicateNode(NodeId),
    /// AS referenced before being declared.
    UnknownAs(AsId),
    /// AS id declared twice.
    DuplicateAs(AsId),
    /// A link or AS edge with both endpoints equal.
    SelfLink(NodeId),
    /// An AS edge with both endpoints equal.
    SelfAsEdge(AsId),
    /// Two links between the same pair of nodes.
    DuplicateLink(NodeId, NodeId),
    /// A router-level link crosses two ASes that were not declared
    /// adjacent.
    UndeclaredAsEdge(AsId, AsId),
    /// Deployment horizon must be at least 1.
    ZeroHorizon,
    /// Deployment knowledge level outside `1..=horizon`.
    LevelOutOfRange { level: u8, horizon: u8 },
    /// Asked a non-deployed AS for traceback state it does not keep.
    NotDeployed(AsId),
    /// A deployed AS ended up without a collector, or with one outside
    /// its own router set.
    BadStm(AsId),
    /// Deployment knowledge names a non-deployed AS.
    KnowledgeNamesUndeployed { of: AsId, names: AsId },
    /// The ground-truth route is not a connected attacker-to-victim walk.
    BadRoute(&'static str),
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyPath => write!(f, "attack path has no routers"),
            Self::DuplicateRouter(n) => write!(f, "router {n} appears twice on the path"),
            Self::BadEndpoint(n) => write!(f, "endpoint {n} collides with the path"),
            Self::ZeroHopCount => write!(f, "hop count must be at least 1"),
            Self::ProbabilityOutOfRange(p) => write!(f, "probability {p} outside [0, 1]"),
            Self::UnknownNode(n) => write!(f, "unknown node {n}"),
            Self::DuplicateNode(n) => write!(f, "node {n} declared twice"),
            Self::UnknownAs(a) => write!(f, "unknown AS {a}"),
            Self::DuplicateAs(a) => write!(f, "AS {a} declared twice"),
            Self::SelfLink(n) => write!(f, "link from {n} to itself"),
            Self::SelfAsEdge(a) => write!(f, "AS edge from {a} to itself"),
            Self::DuplicateLink(a, b) => write!(f, "duplicate link between {a} and {b}"),
            Self::UndeclaredAsEdge(a, b) => {
                write!(f, "link crosses AS {a} and AS {b} but no AS edge is declared")
            }
            Self::ZeroHorizon => write!(f, "deployment horizon must be at least 1"),
            Self::LevelOutOfRange { level, horizon } => {
                write!(f, "deployment level {level} outside 1..={horizon}")
            }
            Self::NotDeployed(a) => write!(f, "AS {a} does not deploy traceback"),
            Self::BadStm(a) => write!(f, "AS {a} needs exactly one collector among its routers"),
            Self::KnowledgeNamesUndeployed { of, names } => {
                write!(f, "deployment knowledge of AS {of} names non-deployed AS {names}")
            }
            Self::BadRoute(why) => write!(f, "bad ground-truth route: {why}"),
        }
    }
}

impl core::error::Error for TopologyError {}

/// Ground truth for one attack: the attacker host, the routers it
/// traverses, and the victim host.
///
/// Routers are stored victim side first: `routers()[0]` is adjacent to the
/// victim and `router_at_distance(d)` is the router `d` hops from the
/// victim, `1 <= d <= hop_count()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttackPath {
    attacker: NodeId,
    routers: Vec<NodeId>,
    victim: NodeId,
}

impl AttackPath {
    /// Builds a path from routers listed victim side first. Rejects empty
    /// or duplicated router lists and endpoint collisions.
    pub fn new(
        attacker: NodeId,
        routers: Vec<NodeId>,
        victim: NodeId,
    ) -> Result<Self, TopologyError> {
        if routers.is_empty() {
            return Err(TopologyError::EmptyPath);
        }
        let mut seen = BTreeSet::new();
        for &r in &routers {
            if !seen.insert(r) {
                return Err(TopologyError::DuplicateRouter(r));
            }
        }
        if attacker == victim {
            return Err(TopologyError::BadEndpoint(attacker));
        }
        for &e in &[attacker, victim] {
            if seen.contains(&e) {
                return Err(TopologyError::BadEndpoint(e));
            }
        }
        Ok(Self { attacker, routers, victim })
    }

    pub fn attacker(&self) -> NodeId {
        self.attacker
    }

    pub fn victim(&self) -> NodeId {
        self.victim
    }

    pub fn hop_count(&self) -> usize {
        self.routers.len()
    }

    /// Routers victim side first.
    pub fn routers(&self) -> &[NodeId] {
        &self.routers
    }

    /// Router `d` hops from the victim (1-based), if the path is that long.
    pub fn router_at_distance(&self, d: usize) -> Option<NodeId> {
        if d == 0 {
            None
        } else {
            self.routers.get(d - 1).copied()
        }
    }

    /// Routers in forwarding order, attacker side first.
    pub fn traversal(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.routers.iter().rev().copied()
    }

    /// Full node walk from attacker to victim, hosts included.
    pub fn walk(&self) -> Vec<NodeId> {
        let mut w = Vec::with_capacity(self.routers.len() + 2);
        w.push(self.attacker);
        w.extend(self.traversal());
        w.push(self.victim);
        w
    }
}

/// A router and its per-node simulation knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct RouterNode {
    pub id: NodeId,
    /// Chance of overwriting the mark field of a forwarded packet.
    pub marking_probability: f64,
    /// Chance of emitting a traceback message per forwarded packet.
    pub itrace_probability: f64,
    /// Whether the router keeps packet digests for hash-based traceback.
    pub spie_enabled: bool,
    /// Administrative domain the router belongs to.
    pub domain: AsId,
    /// Routers modelled as filtering boundaries stop hop-by-hop tracing.
    pub firewall: bool,
    /// Links incident to this router, maintained by the topology builder.
    pub ingress_links: Vec<LinkId>,
}

impl RouterNode {
    pub fn new(id: NodeId, domain: AsId) -> Self {
        Self {
            id,
            marking_probability: 0.0,
            itrace_probability: 0.0,
            spie_enabled: false,
            domain,
            firewall: false,
            ingress_links: Vec::new(),
        }
    }
}

/// An end host (attacker, victim, or flood source).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HostNode {
    pub id: NodeId,
    pub domain: AsId,
}

/// An undirected link; endpoints stored with `a < b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
}

impl Link {
    /// The endpoint that is not `n`.
    pub fn peer(&self, n: NodeId) -> NodeId {
        if self.a == n {
            self.b
        } else {
            self.a
        }
    }
}

/// Router-level graph: hosts, routers and links.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Network {
    hosts: BTreeMap<NodeId, HostNode>,
    routers: BTreeMap<NodeId, RouterNode>,
    links: BTreeMap<LinkId, Link>,
    adjacency: BTreeMap<NodeId, Vec<LinkId>>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_fresh(&self, id: NodeId) -> Result<(), TopologyError> {
        if self.hosts.contains_key(&id) || self.routers.contains_key(&id) {
            Err(TopologyError::DuplicateNode(id))
        } else {
            Ok(())
        }
    }

    pub fn add_host(&mut self, host: HostNode) -> Result<(), TopologyError> {
        self.check_fresh(host.id)?;
        self.hosts.insert(host.id, host);
        Ok(())
    }

    pub fn add_router(&mut self, router: RouterNode) -> Result<(), TopologyError> {
        self.check_fresh(router.id)?;
        self.routers.insert(router.id, router);
        Ok(())
    }

    /// Links two existing nodes; returns the new link's id.
    pub fn add_link(&mut self, a: NodeId, b: NodeId) -> Result<LinkId, TopologyError> {
        if a == b {
            return Err(TopologyError::SelfLink(a));
        }
        for &n in &[a, b] {
            if !self.contains(n) {
                return Err(TopologyError::UnknownNode(n));
            }
        }
        if self.link_between(a, b).is_some() {
            return Err(TopologyError::DuplicateLink(a, b));
        }
        let id = LinkId(self.links.len() as u64);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.links.insert(id, Link { id, a: lo, b: hi });
        for &n in &[a, b] {
            self.adjacency.entry(n).or_default().push(id);
            if let Some(r) = self.routers.get_mut(&n) {
                r.ingress_links.push(id);
            }
        }
        Ok(id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.hosts.contains_key(&id) || self.routers.contains_key(&id)
    }

    pub fn router(&self, id: NodeId) -> Option<&RouterNode> {
        self.routers.get(&id)
    }

    pub fn host(&self, id: NodeId) -> Option<&HostNode> {
        self.hosts.get(&id)
    }

    pub fn is_router(&self, id: NodeId) -> bool {
        self.routers.contains_key(&id)
    }

    pub fn is_host(&self, id: NodeId) -> bool {
        self.hosts.contains_key(&id)
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.get(&id)
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        let links = self.adjacency.get(&a)?;
        links
            .iter()
            .copied()
            .find(|&l| self.links[&l].peer(a) == b)
    }

    /// Links incident to `n`, in link-id order.
    pub fn incident_links(&self, n: NodeId) -> &[LinkId] {
        self.adjacency.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Neighbour nodes of `n`, in link-id order.
    pub fn neighbors(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.incident_links(n)
            .iter()
            .map(move |l| self.links[l].peer(n))
    }

    /// Domain of a node, host or router.
    pub fn domain_of(&self, n: NodeId) -> Option<AsId> {
        self.routers
            .get(&n)
            .map(|r| r.domain)
            .or_else(|| self.hosts.get(&n).map(|h| h.domain))
    }

    pub fn routers(&self) -> impl Iterator<Item = &RouterNode> {
        self.routers.values()
    }

    pub fn hosts(&self) -> impl Iterator<Item = &HostNode> {
        self.hosts.values()
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }
}

/// Per-AS record inside an [`AsTopology`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsInfo {
    pub spie_deployed: bool,
    /// Collector node of a deployed AS; `None` for non-deployed ASes.
    pub stm: Option<NodeId>,
}

/// AS-level scenario: the router network plus AS membership, AS adjacency,
/// traceback deployment and the statically installed deployment knowledge.
///
/// Optionally carries one ground-truth attack (attacker, victim, and the
/// exact forwarding route between them) for replayable experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct AsTopology {
    network: Network,
    ases: BTreeMap<AsId, AsInfo>,
    as_adjacency: BTreeMap<AsId, BTreeSet<AsId>>,
    deployment_horizon: u8,
    /// `knowledge[as][level - 1]` is the set of deployed ASes the AS
    /// controller knows at that level. Installed at build time.
    knowledge: BTreeMap<AsId, Vec<BTreeSet<AsId>>>,
    attacker: Option<NodeId>,
    victim: Option<NodeId>,
    route: Option<Vec<NodeId>>,
}

impl AsTopology {
    pub fn builder() -> AsTopologyBuilder {
        AsTopologyBuilder::new()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn deployment_horizon(&self) -> u8 {
        self.deployment_horizon
    }

    pub fn ases(&self) -> impl Iterator<Item = (AsId, &AsInfo)> {
        self.ases.iter().map(|(&a, i)| (a, i))
    }

    pub fn as_info(&self, a: AsId) -> Option<&AsInfo> {
        self.ases.get(&a)
    }

    pub fn is_deployed(&self, a: AsId) -> bool {
        self.ases.get(&a).map(|i| i.spie_deployed).unwrap_or(false)
    }

    /// Collector node of a deployed AS.
    pub fn stm_of(&self, a: AsId) -> Option<NodeId> {
        self.ases.get(&a).and_then(|i| i.stm)
    }

    pub fn as_neighbors(&self, a: AsId) -> Option<&BTreeSet<AsId>> {
        self.as_adjacency.get(&a)
    }

    /// Routers belonging to AS `a`, in id order.
    pub fn routers_in(&self, a: AsId) -> impl Iterator<Item = &RouterNode> {
        self.network.routers().filter(move |r| r.domain == a)
    }

    /// Deployed ASes the controller of `a` knows at exactly `level` AS
    /// hops (1 = directly adjacent; a deployed AS behind one non-deployed
    /// AS is level 2). Knowledge is installed when the topology is built,
    /// by default from shortest AS-graph distances.
    pub fn deployment_neighbors(
        &self,
        a: AsId,
        level: u8,
    ) -> Result<&BTreeSet<AsId>, TopologyError> {
        let info = self.ases.get(&a).ok_or(TopologyError::UnknownAs(a))?;
        if !info.spie_deployed {
            return Err(TopologyError::NotDeployed(a));
        }
        if level == 0 || level > self.deployment_horizon {
            return Err(TopologyError::LevelOutOfRange {
                level,
                horizon: self.deployment_horizon,
            });
        }
        Ok(&self.knowledge[&a][usize::from(level) - 1])
    }

    /// Shortest AS-graph hop distance between two ASes.
    pub fn as_distance(&self, from: AsId, to: AsId) -> Option<u32> {
        if !self.ases.contains_key(&from) || !self.ases.contains_key(&to) {
            return None;
        }
        let mut dist = BTreeMap::new();
        dist.insert(from, 0u32);
        let mut frontier = alloc::vec![from];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for a in frontier {
                let d = dist[&a];
                if a == to {
                    return Some(d);
                }
                if let Some(nbrs) = self.as_adjacency.get(&a) {
                    for &b in nbrs {
                        if let alloc::collections::btree_map::Entry::Vacant(e) = dist.entry(b) {
                            e.insert(d + 1);
                            next.push(b);
                        }
                    }
                }
            }
            frontier = next;
        }
        dist.get(&to).copied()
    }

    pub fn attacker(&self) -> Option<NodeId> {
        self.attacker
    }

    pub fn victim(&self) -> Option<NodeId> {
        self.victim
    }

    /// Ground-truth forwarding route, attacker host first, victim host
    /// last.
    pub fn route(&self) -> Option<&[NodeId]> {
        self.route.as_deref()
    }
}

/// Staged construction and one-shot validation of an [`AsTopology`].
#[derive(Default)]
pub struct AsTopologyBuilder {
    network: Network,
    ases: BTreeMap<AsId, (bool, Option<NodeId>)>,
    as_edges: BTreeSet<(AsId, AsId)>,
    horizon: u8,
    knowledge_overrides: Vec<(AsId, u8, BTreeSet<AsId>)>,
    attacker: Option<NodeId>,
    victim: Option<NodeId>,
    route: Option<Vec<NodeId>>,
    error: Option<TopologyError>,
}

impl AsTopologyBuilder {
    pub fn new() -> Self {
        Self { horizon: 2, ..Self::default() }
    }

    fn record<T>(&mut self, r: Result<T, TopologyError>) {
        if self.error.is_none() {
            if let Err(e) = r {
                self.error = Some(e);
            }
        }
    }

    pub fn horizon(mut self, h: u8) -> Self {
        self.horizon = h;
        self
    }

    /// Declares an AS. The collector defaults to the lowest-id router of
    /// a deployed AS; use [`Self::stm`] to pick another.
    pub fn declare_as(mut self, id: AsId, deployed: bool) -> Self {
        if self.ases.insert(id, (deployed, None)).is_some() {
            self.record::<()>(Err(TopologyError::DuplicateAs(id)));
        }
        self
    }

    pub fn stm(mut self, id: AsId, node: NodeId) -> Self {
        match self.ases.get_mut(&id) {
            Some(e) => e.1 = Some(node),
            None => self.record::<()>(Err(TopologyError::UnknownAs(id))),
        }
        self
    }

    pub fn as_edge(mut self, a: AsId, b: AsId) -> Self {
        if a == b {
            self.record::<()>(Err(TopologyError::SelfAsEdge(a)));
            return self;
        }
        for &x in &[a, b] {
            if !self.ases.contains_key(&x) {
                self.record::<()>(Err(TopologyError::UnknownAs(x)));
                return self;
            }
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.as_edges.insert((lo, hi));
        self
    }

    pub fn router(mut self, r: RouterNode) -> Self {
        if !self.ases.contains_key(&r.domain) {
            self.record::<()>(Err(TopologyError::UnknownAs(r.domain)));
            return self;
        }
        let res = self.network.add_router(r);
        self.record(res);
        self
    }

    pub fn host(mut self, h: HostNode) -> Self {
        if !self.ases.contains_key(&h.domain) {
            self.record::<()>(Err(TopologyError::UnknownAs(h.domain)));
            return self;
        }
        let res = self.network.add_host(h);
        self.record(res);
        self
    }

    pub fn link(mut self, a: NodeId, b: NodeId) -> Self {
        let res = self.network.add_link(a, b);
        self.record(res);
        self
    }

    /// Replaces the derived deployment knowledge of `of` at `level`.
    pub fn knowledge(mut self, of: AsId, level: u8, set: impl IntoIterator<Item = AsId>) -> Self {
        self.knowledge_overrides.push((of, level, set.into_iter().collect()));
        self
    }

    pub fn attacker(mut self, n: NodeId) -> Self {
        self.attacker = Some(n);
        self
    }

    pub fn victim(mut self, n: NodeId) -> Self {
        self.victim = Some(n);
        self
    }

    /// Ground-truth forwarding route, attacker host first, victim host
    /// last.
    pub fn route(mut self, walk: Vec<NodeId>) -> Self {
        self.route = Some(walk);
        self
    }

    pub fn build(mut self) -> Result<AsTopology, TopologyError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        if self.horizon == 0 {
            return Err(TopologyError::ZeroHorizon);
        }

        // Inter-AS router links must have a matching AS edge.
        for link in self.network.links() {
            let da = self.network.domain_of(link.a).unwrap();
            let db = self.network.domain_of(link.b).unwrap();
            if da != db {
                let key = if da < db { (da, db) } else { (db, da) };
                if !self.as_edges.contains(&key) {
                    return Err(TopologyError::UndeclaredAsEdge(key.0, key.1));
                }
            }
        }

        // Deployed ASes get a collector: explicit, or lowest router id.
        let mut ases = BTreeMap::new();
        for (&id, &(deployed, stm)) in &self.ases {
            let stm = if deployed {
                let chosen = stm.or_else(|| {
                    self.network
                        .routers()
                        .filter(|r| r.domain == id)
                        .map(|r| r.id)
                        .min()
                });
                let c = chosen.ok_or(TopologyError::BadStm(id))?;
                let ok = self.network.router(c).map(|r| r.domain == id).unwrap_or(false);
                if !ok {
                    return Err(TopologyError::BadStm(id));
                }
                Some(c)
            } else {
                if stm.is_some() {
                    return Err(TopologyError::BadStm(id));
                }
                None
            };
            ases.insert(id, AsInfo { spie_deployed: deployed, stm });
        }

        let mut as_adjacency: BTreeMap<AsId, BTreeSet<AsId>> = BTreeMap::new();
        for &id in self.ases.keys() {
            as_adjacency.entry(id).or_default();
        }
        for &(a, b) in &self.as_edges {
            as_adjacency.get_mut(&a).unwrap().insert(b);
            as_adjacency.get_mut(&b).unwrap().insert(a);
        }

        // Derive deployment knowledge from AS-graph hop distance, then lay
        // any overrides on top.
        let mut knowledge = BTreeMap::new();
        for (&id, info) in &ases {
            if !info.spie_deployed {
                continue;
            }
            let mut levels = alloc::vec![BTreeSet::new(); usize::from(self.horizon)];
            let mut dist = BTreeMap::new();
            dist.insert(id, 0u8);
            let mut frontier = alloc::vec![id];
            for d in 1..=self.horizon {
                let mut next = Vec::new();
                for a in frontier {
                    for &b in &as_adjacency[&a] {
                        if let alloc::collections::btree_map::Entry::Vacant(e) = dist.entry(b) {
                            e.insert(d);
                            next.push(b);
                            if ases[&b].spie_deployed {
                                levels[usize::from(d) - 1].insert(b);
                            }
                        }
                    }
                }
                frontier = next;
            }
            knowledge.insert(id, levels);
        }
        for (of, level, set) in core::mem::take(&mut self.knowledge_overrides) {
            let info = ases.get(&of).ok_or(TopologyError::UnknownAs(of))?;
            if !info.spie_deployed {
                return Err(TopologyError::NotDeployed(of));
            }
            if level == 0 || level > self.horizon {
                return Err(TopologyError::LevelOutOfRange { level, horizon: self.horizon });
            }
            for &named in &set {
                let deployed = ases
                    .get(&named)
                    .ok_or(TopologyError::UnknownAs(named))?
                    .spie_deployed;
                if !deployed {
                    return Err(TopologyError::KnowledgeNamesUndeployed { of, names: named });
                }
            }
            knowledge.get_mut(&of).unwrap()[usize::from(level) - 1] = set;
        }

        for &e in self.attacker.iter().chain(self.victim.iter()) {
            if !self.network.is_host(e) {
                return Err(TopologyError::UnknownNode(e));
            }
        }
        if let Some(route) = &self.route {
            if route.len() < 2 {
                return Err(TopologyError::BadRoute("fewer than two nodes"));
            }
            if self.attacker != Some(route[0]) {
                return Err(TopologyError::BadRoute("route must start at the attacker"));
            }
            if self.victim != Some(*route.last().unwrap()) {
                return Err(TopologyError::BadRoute("route must end at the victim"));
            }
            for pair in route.windows(2) {
                if self.network.link_between(pair[0], pair[1]).is_none() {
                    return Err(TopologyError::BadRoute("consecutive nodes not linked"));
                }
            }
        }

        Ok(AsTopology {
            network: self.network,
            ases,
            as_adjacency,
            deployment_horizon: self.horizon,
            knowledge,
            attacker: self.attacker,
            victim: self.victim,
            route: self.route,
        })
    }
}

/// A single-domain linear scenario: attacker, `hop_count` routers and a
/// victim wired in a line.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearScenario {
    pub network: Network,
    pub path: AttackPath,
}

/// Node id of the victim in [`build_linear_path`] scenarios.
pub const LINEAR_VICTIM: NodeId = NodeId(1);
/// Node id of the attacker in [`build_linear_path`] scenarios.
pub const LINEAR_ATTACKER: NodeId = NodeId(2);

/// Router id at distance `d` from the victim in linear scenarios.
pub fn linear_router(d: usize) -> NodeId {
    NodeId(100 + d as u64)
}

/// Builds the canonical linear test scenario: `attacker - R_n - ... - R_1
/// - victim`, every router configured with the same marking probability.
pub fn build_linear_path(
    hop_count: u32,
    marking_probability: f64,
) -> Result<LinearScenario, TopologyError> {
    if hop_count == 0 {
        return Err(TopologyError::ZeroHopCount);
    }
    if !(0.0..=1.0).contains(&marking_probability) {
        return Err(TopologyError::ProbabilityOutOfRange(marking_probability));
    }
    let domain = AsId(1);
    let mut network = Network::new();
    network.add_host(HostNode { id: LINEAR_VICTIM, domain })?;
    network.add_host(HostNode { id: LINEAR_ATTACKER, domain })?;
    let mut routers = Vec::new();
    for d in 1..=hop_count as usize {
        let mut r = RouterNode::new(linear_router(d), domain);
        r.marking_probability = marking_probability;
        network.add_router(r)?;
        routers.push(linear_router(d));
    }
    network.add_link(LINEAR_VICTIM, routers[0])?;
    for pair in routers.windows(2) {
        network.add_link(pair[0], pair[1])?;
    }
    network.add_link(*routers.last().unwrap(), LINEAR_ATTACKER)?;
    let path = AttackPath::new(LINEAR_ATTACKER, routers, LINEAR_VICTIM)?;
    Ok(LinearScenario { network, path })
}

/// Node id of the victim host in the ten-AS reference scenario.
pub const FIG10_VICTIM: NodeId = NodeId(901);
/// Node id of the attacker host in the ten-AS reference scenario.
pub const FIG10_ATTACKER: NodeId = NodeId(910);

/// Builds the ten-AS cross-domain traceback scenario used as the
/// reference fixture throughout the test suite.
///
/// ASes 1-10, all deploying digest-based traceback except AS 2. The
/// victim sits in AS 1, the attacker in AS 10, and the attack route runs
/// AS 10 -> AS 3 -> AS 2 -> AS 1, so the non-deployed AS 2 sits in the
/// middle of the traced path. AS 7 is AS 1's only directly adjacent
/// deployed neighbour and is off the attack route; AS 3 and AS 4 are two
/// AS-hops from AS 1. Router ids are `10a + i` for the i-th router of AS
/// `a` (AS 10 uses 101, 102).
///
/// Installed deployment knowledge follows AS-graph distance except that
/// AS 3's level-2 set is pinned to {5, 7}: the controller protocol never
/// reports the requesting AS back to itself, and the pinned set keeps
/// reply contents independent of who asks.
pub fn build_fig10_topology() -> AsTopology {
    let r = |id: u64, as_id: u32| {
        let mut r = RouterNode::new(NodeId(id), AsId(as_id));
        r.spie_enabled = as_id != 2;
        r
    };
    let mut b = AsTopology::builder().horizon(2);
    for a in 1..=10u32 {
        b = b.declare_as(AsId(a), a != 2);
    }
    for &(x, y) in &[(1, 2), (1, 7), (2, 3), (3, 10), (3, 4), (4, 7), (4, 5), (5, 6), (5, 8), (6, 9)]
    {
        b = b.as_edge(AsId(x), AsId(y));
    }
    for &(id, a) in &[
        (11, 1),
        (12, 1),
        (13, 1),
        (21, 2),
        (22, 2),
        (31, 3),
        (32, 3),
        (33, 3),
        (34, 3),
        (41, 4),
        (42, 4),
        (43, 4),
        (51, 5),
        (52, 5),
        (61, 6),
        (62, 6),
        (71, 7),
        (81, 8),
        (91, 9),
        (101, 10),
        (102, 10),
    ] {
        b = b.router(r(id, a));
    }
    b = b
        .host(HostNode { id: FIG10_VICTIM, domain: AsId(1) })
        .host(HostNode { id: FIG10_ATTACKER, domain: AsId(10) });
    for &(x, y) in &[
        // intra-AS wiring
        (11, 12),
        (11, 13),
        (21, 22),
        (31, 32),
        (32, 33),
        (32, 34),
        (41, 42),
        (41, 43),
        (51, 52),
        (61, 62),
        (101, 102),
        // inter-AS border links, one per AS edge
        (12, 21),
        (13, 71),
        (22, 31),
        (33, 101),
        (34, 41),
        (71, 42),
        (43, 51),
        (52, 61),
        (52, 81),
        (62, 91),
        // hosts
        (901, 11),
        (910, 102),
    ] {
        b = b.link(NodeId(x), NodeId(y));
    }
    b.attacker(FIG10_ATTACKER)
        .victim(FIG10_VICTIM)
        .route(
            [910, 102, 101, 33, 32, 31, 22, 21, 12, 11, 901]
                .iter()
                .map(|&n| NodeId(n))
                .collect(),
        )
        .knowledge(AsId(3), 2, [AsId(5), AsId(7)])
        .build()
        .expect("reference scenario is statically valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ids(ns: &[u32]) -> BTreeSet<AsId> {
        ns.iter().map(|&n| AsId(n)).collect()
    }

    #[test]
    fn attack_path_validation() {
        let a = NodeId(2);
        let v = NodeId(1);
        assert_eq!(AttackPath::new(a, vec![], v), Err(TopologyError::EmptyPath));
        assert_eq!(
            AttackPath::new(a, vec![NodeId(5), NodeId(5)], v),
            Err(TopologyError::DuplicateRouter(NodeId(5)))
        );
        assert_eq!(
            AttackPath::new(a, vec![NodeId(5), a], v),
            Err(TopologyError::BadEndpoint(a))
        );
        assert_eq!(
            AttackPath::new(a, vec![NodeId(5)], a),
            Err(TopologyError::BadEndpoint(a))
        );
        let p = AttackPath::new(a, vec![NodeId(5), NodeId(6)], v).unwrap();
        assert_eq!(p.hop_count(), 2);
        assert_eq!(p.router_at_distance(1), Some(NodeId(5)));
        assert_eq!(p.router_at_distance(2), Some(NodeId(6)));
        assert_eq!(p.router_at_distance(0), None);
        assert_eq!(p.router_at_distance(3), None);
        let t: Vec<_> = p.traversal().collect();
        assert_eq!(t, vec![NodeId(6), NodeId(5)]);
        assert_eq!(p.walk(), vec![a, NodeId(6), NodeId(5), v]);
    }

    #[test]
    fn linear_path_shape() {
        let s = build_linear_path(3, 0.25).unwrap();
        assert_eq!(s.path.hop_count(), 3);
        assert_eq!(s.path.victim(), LINEAR_VICTIM);
        assert_eq!(s.path.attacker(), LINEAR_ATTACKER);
        // victim - R1 - R2 - R3 - attacker
        assert!(s.network.link_between(LINEAR_VICTIM, linear_router(1)).is_some());
        assert!(s.network.link_between(linear_router(1), linear_router(2)).is_some());
        assert!(s.network.link_between(linear_router(3), LINEAR_ATTACKER).is_some());
        assert!(s.network.link_between(linear_router(1), linear_router(3)).is_none());
        for d in 1..=3 {
            let r = s.network.router(linear_router(d)).unwrap();
            assert_eq!(r.marking_probability, 0.25);
        }
    }

    #[test]
    fn linear_path_rejects_bad_input() {
        assert_eq!(build_linear_path(0, 0.5).unwrap_err(), TopologyError::ZeroHopCount);
        assert_eq!(
            build_linear_path(3, 1.5).unwrap_err(),
            TopologyError::ProbabilityOutOfRange(1.5)
        );
        assert_eq!(
            build_linear_path(3, -0.1).unwrap_err(),
            TopologyError::ProbabilityOutOfRange(-0.1)
        );
    }

    #[test]
    fn fig10_deployment_neighbors() {
        let t = build_fig10_topology();
        assert_eq!(*t.deployment_neighbors(AsId(1), 1).unwrap(), ids(&[7]));
        assert_eq!(*t.deployment_neighbors(AsId(1), 2).unwrap(), ids(&[3, 4]));
        assert_eq!(*t.deployment_neighbors(AsId(3), 1).unwrap(), ids(&[4, 10]));
        assert_eq!(*t.deployment_neighbors(AsId(3), 2).unwrap(), ids(&[5, 7]));
        assert_eq!(*t.deployment_neighbors(AsId(10), 1).unwrap(), ids(&[3]));
        assert_eq!(
            t.deployment_neighbors(AsId(2), 1).unwrap_err(),
            TopologyError::NotDeployed(AsId(2))
        );
        assert_eq!(
            t.deployment_neighbors(AsId(1), 3).unwrap_err(),
            TopologyError::LevelOutOfRange { level: 3, horizon: 2 }
        );
        assert_eq!(
            t.deployment_neighbors(AsId(99), 1).unwrap_err(),
            TopologyError::UnknownAs(AsId(99))
        );
    }

    #[test]
    fn deployment_knowledge_never_names_undeployed_ases() {
        let t = build_fig10_topology();
        for (a, info) in t.ases() {
            if !info.spie_deployed {
                continue;
            }
            for level in 1..=t.deployment_horizon() {
                for &n in t.deployment_neighbors(a, level).unwrap() {
                    assert!(t.is_deployed(n), "AS {a} level {level} names {n}");
                }
            }
        }
    }

    #[test]
    fn fig10_collectors_and_route() {
        let t = build_fig10_topology();
        for (a, info) in t.ases() {
            if info.spie_deployed {
                let stm = info.stm.expect("deployed AS has a collector");
                assert_eq!(t.network().router(stm).unwrap().domain, a);
            } else {
                assert_eq!(info.stm, None);
            }
        }
        assert_eq!(t.stm_of(AsId(3)), Some(NodeId(31)));
        let route = t.route().unwrap();
        assert_eq!(route[0], FIG10_ATTACKER);
        assert_eq!(*route.last().unwrap(), FIG10_VICTIM);
        // The route crosses AS 10, 3, 2, 1 in that order.
        let crossed: Vec<AsId> = {
            let mut seen = Vec::new();
            for &n in route {
                let d = t.network().domain_of(n).unwrap();
                if seen.last() != Some(&d) {
                    seen.push(d);
                }
            }
            seen
        };
        assert_eq!(crossed, vec![AsId(10), AsId(3), AsId(2), AsId(1)]);
    }

    #[test]
    fn fig10_as_distances() {
        let t = build_fig10_topology();
        assert_eq!(t.as_distance(AsId(1), AsId(1)), Some(0));
        assert_eq!(t.as_distance(AsId(1), AsId(7)), Some(1));
        assert_eq!(t.as_distance(AsId(1), AsId(3)), Some(2));
        assert_eq!(t.as_distance(AsId(1), AsId(10)), Some(3));
        assert_eq!(t.as_distance(AsId(2), AsId(10)), Some(2));
        assert_eq!(t.as_distance(AsId(9), AsId(1)), Some(5));
    }

    #[test]
    fn builder_rejects_inconsistencies() {
        let e = AsTopology::builder()
            .declare_as(AsId(1), true)
            .declare_as(AsId(1), false)
            .build()
            .unwrap_err();
        assert_eq!(e, TopologyError::DuplicateAs(AsId(1)));

        let e = AsTopology::builder()
            .declare_as(AsId(1), true)
            .router(RouterNode::new(NodeId(5), AsId(2)))
            .build()
            .unwrap_err();
        assert_eq!(e, TopologyError::UnknownAs(AsId(2)));

        // Deployed AS without routers cannot pick a collector.
        let e = AsTopology::builder().declare_as(AsId(1), true).build().unwrap_err();
        assert_eq!(e, TopologyError::BadStm(AsId(1)));

        // Inter-AS link without a declared AS edge.
        let e = AsTopology::builder()
            .declare_as(AsId(1), false)
            .declare_as(AsId(2), false)
            .router(RouterNode::new(NodeId(5), AsId(1)))
            .router(RouterNode::new(NodeId(6), AsId(2)))
            .link(NodeId(5), NodeId(6))
            .build()
            .unwrap_err();
        assert_eq!(e, TopologyError::UndeclaredAsEdge(AsId(1), AsId(2)));

        // Knowledge override naming a non-deployed AS.
        let e = AsTopology::builder()
            .declare_as(AsId(1), true)
            .declare_as(AsId(2), false)
            .router(RouterNode::new(NodeId(5), AsId(1)))
            .knowledge(AsId(1), 1, [AsId(2)])
            .build()
            .unwrap_err();
        assert_eq!(
            e,
            TopologyError::KnowledgeNamesUndeployed { of: AsId(1), names: AsId(2) }
        );
    }

    #[test]
    fn network_link_bookkeeping() {
        let s = build_linear_path(2, 0.0).unwrap();
        let r1 = s.network.router(linear_router(1)).unwrap();
        assert_eq!(r1.ingress_links.len(), 2);
        let nbrs: Vec<_> = s.network.neighbors(linear_router(1)).collect();
        assert!(nbrs.contains(&LINEAR_VICTIM));
        assert!(nbrs.contains(&linear_router(2)));
        assert!(s.network.is_host(LINEAR_VICTIM));
        assert!(!s.network.is_router(LINEAR_VICTIM));
    }
}
