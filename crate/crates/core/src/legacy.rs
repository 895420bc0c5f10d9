//! Pre-digest traceback techniques: input debugging, controlled
//! flooding, and low-rate traceback messages.
//!
//! All three work against a [`TrafficMix`]. Flows carry the identity
//! bytes their packets share, attack flows add an activity window, and an
//! [`AttackSignature`] is a byte mask over those identities, so an
//! imperfect signature can implicate benign traffic. Input debugging
//! climbs the path one cooperating router at a time, spending one
//! observation window per hop, and stops at domain boundaries and
//! firewalls. Controlled flooding needs no cooperation: it overloads one
//! candidate link at a time and watches how far the victim's sampled
//! attack arrivals drop. Traceback messages are emitted by routers at a
//! tiny per-packet probability and carry the emitting router plus its
//! packet-adjacent neighbours; the victim discards unauthenticated ones
//! and stitches the rest back into a path, bridging routers that stayed
//! silent with topology-consistent candidates.
//!
//! Both link-testing techniques (input debugging and flooding) need the
//! attack in progress and fail with [`LegacyError::AttackEnded`] when it
//! is not.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;

use crate::spie::{PacketIdentity, IDENTITY_LEN};
use crate::topology::{Network, NodeId, TopologyError};

/// Default per-packet probability that a router emits a traceback
/// message.
pub const DEFAULT_ITRACE_PROBABILITY: f64 = 0.000_05;

/// Hard ceiling on the drop probability a flooded link can reach.
pub const FLOOD_DROP_CAP: f64 = 0.95;

/// Default length, in ticks, of one input-debugging observation window.
pub const DEFAULT_DEBUG_WINDOW: u64 = 1000;

/// Default bound on how many consecutive silent routers traceback-message
/// reconstruction will bridge.
pub const DEFAULT_GAP_CAP: u32 = 2;

/// Errors from the legacy techniques.
#[derive(Clone, Debug, PartialEq)]
pub enum LegacyError {
    Topology(TopologyError),
    /// No attack flow in the mix matches the signature.
    NoMatchingFlow,
    /// The attack went quiet while a link test was still climbing; these
    /// techniques cannot run post-mortem.
    AttackEnded { last: NodeId, at: u64 },
    /// A filter observed nothing during its window even though the
    /// attack is live; the signature selects no traffic here.
    NoMatchingIngress { router: NodeId, at: u64 },
    /// No upstream link's flooding depressed the victim's arrivals past
    /// the sensitivity threshold.
    InconclusiveLink { at: NodeId },
    /// Several upstream candidates at one node; hop-by-hop tracing
    /// cannot choose.
    AmbiguousUpstream { at: NodeId, candidates: Vec<NodeId> },
    /// A flow route is not a host-to-host walk over existing links.
    BadFlowRoute(&'static str),
    /// A router sent traceback messages naming two different neighbour
    /// pairs; the victim cannot order them.
    ConflictingMessages(NodeId),
    /// Parameter validation.
    BadParameter(&'static str),
}

impl fmt::Display for LegacyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Topology(e) => write!(f, "{e}"),
            Self::NoMatchingFlow => write!(f, "no attack flow matches the signature"),
            Self::AttackEnded { last, at } => {
                write!(f, "attack ended at tick {at} with the trace standing at {last}")
            }
            Self::NoMatchingIngress { router, at } => {
                write!(f, "filter at {router} matched nothing in the window starting at {at}")
            }
            Self::InconclusiveLink { at } => {
                write!(f, "no upstream link of {at} depressed arrivals past the threshold")
            }
            Self::AmbiguousUpstream { at, candidates } => {
                write!(f, "{} upstream candidates at {at}", candidates.len())
            }
            Self::BadFlowRoute(why) => write!(f, "bad flow route: {why}"),
            Self::ConflictingMessages(n) => {
                write!(f, "router {n} reported conflicting neighbour pairs")
            }
            Self::BadParameter(what) => write!(f, "{what}"),
        }
    }
}

impl core::error::Error for LegacyError {}

impl From<TopologyError> for LegacyError {
    fn from(e: TopologyError) -> Self {
        Self::Topology(e)
    }
}

/// A predicate over packet identity bytes: a packet matches when every
/// byte selected by the mask equals the stored value.
///
/// A signature built with [`AttackSignature::exact`] matches exactly one
/// identity; coarser masks model the imperfect signatures an operator
/// extracts by hand, which may also match benign packets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttackSignature {
    mask: [u8; IDENTITY_LEN],
    value: [u8; IDENTITY_LEN],
}

impl AttackSignature {
    /// Matches precisely the given identity.
    pub fn exact(identity: &PacketIdentity) -> Self {
        Self { mask: [0xff; IDENTITY_LEN], value: identity.bytes }
    }

    /// Matches any identity agreeing with `value` on the bytes selected
    /// by `mask`. Bits outside the mask are ignored.
    pub fn masked(mask: [u8; IDENTITY_LEN], value: [u8; IDENTITY_LEN]) -> Self {
        let mut stored = value;
        for (v, m) in stored.iter_mut().zip(mask) {
            *v &= m;
        }
        Self { mask, value: stored }
    }

    pub fn matches(&self, identity: &PacketIdentity) -> bool {
        self.mask
            .iter()
            .zip(self.value)
            .zip(identity.bytes)
            .all(|((&m, v), b)| b & m == v)
    }
}

/// One attack flow: packets sharing an identity, sent along a fixed
/// route during an activity window.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackFlow {
    /// Identity bytes every packet of the flow carries.
    pub identity: PacketIdentity,
    /// Host-to-host walk, attacker first, victim last.
    pub route: Vec<NodeId>,
    /// Relative packet rate.
    pub rate: f64,
    /// First tick the flow is active.
    pub starts_at: u64,
    /// First tick the flow is inactive; `None` keeps it active forever.
    pub ends_at: Option<u64>,
}

impl AttackFlow {
    pub fn active_at(&self, t: u64) -> bool {
        t >= self.starts_at && self.ends_at.map(|e| t < e).unwrap_or(true)
    }

    /// Whether the flow is active anywhere inside the half-open window
    /// `[w0, w1)`.
    pub fn active_in(&self, w0: u64, w1: u64) -> bool {
        self.starts_at < w1 && self.ends_at.map(|e| e > w0).unwrap_or(true)
    }
}

/// Steady cross traffic with no window.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundFlow {
    pub identity: PacketIdentity,
    pub route: Vec<NodeId>,
    pub rate: f64,
}

/// Everything on the wire during an episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrafficMix {
    pub attack: Vec<AttackFlow>,
    pub background: Vec<BackgroundFlow>,
}

/// Liveness and strength of the signature-matching attack traffic at one
/// tick. Link testing requires `live`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowState {
    pub live: bool,
    /// Summed rate of the matching active flows.
    pub rate: f64,
}

fn validate_route(network: &Network, route: &[NodeId]) -> Result<(), LegacyError> {
    if route.len() < 3 {
        return Err(LegacyError::BadFlowRoute("needs host, router(s), host"));
    }
    if !network.is_host(route[0]) || !network.is_host(*route.last().unwrap()) {
        return Err(LegacyError::BadFlowRoute("endpoints must be hosts"));
    }
    for n in &route[1..route.len() - 1] {
        if !network.is_router(*n) {
            return Err(LegacyError::BadFlowRoute("interior nodes must be routers"));
        }
    }
    for pair in route.windows(2) {
        if network.link_between(pair[0], pair[1]).is_none() {
            return Err(LegacyError::BadFlowRoute("consecutive nodes not linked"));
        }
    }
    let mut seen = BTreeSet::new();
    for n in route {
        if !seen.insert(*n) {
            return Err(LegacyError::BadFlowRoute("route revisits a node"));
        }
    }
    Ok(())
}

impl TrafficMix {
    /// Checks every route against the network once, up front.
    pub fn validate(&self, network: &Network) -> Result<(), LegacyError> {
        for f in &self.attack {
            validate_route(network, &f.route)?;
            if !f.rate.is_finite() || f.rate <= 0.0 {
                return Err(LegacyError::BadParameter("flow rate must be positive"));
            }
        }
        for f in &self.background {
            validate_route(network, &f.route)?;
            if !f.rate.is_finite() || f.rate <= 0.0 {
                return Err(LegacyError::BadParameter("flow rate must be positive"));
            }
        }
        Ok(())
    }

    /// Total rate crossing the undirected link `a`-`b` at tick `t`.
    pub fn link_load(&self, a: NodeId, b: NodeId, t: u64) -> f64 {
        let crosses = |route: &[NodeId]| {
            route
                .windows(2)
                .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
        };
        let attack: f64 = self
            .attack
            .iter()
            .filter(|f| f.active_at(t) && crosses(&f.route))
            .map(|f| f.rate)
            .sum();
        let background: f64 =
            self.background.iter().filter(|f| crosses(&f.route)).map(|f| f.rate).sum();
        attack + background
    }

    /// Summarises the signature-matching attack traffic at tick `t`.
    pub fn flow_state(&self, signature: AttackSignature, t: u64) -> FlowState {
        let mut live = false;
        let mut rate = 0.0;
        for f in &self.attack {
            if signature.matches(&f.identity) && f.active_at(t) {
                live = true;
                rate += f.rate;
            }
        }
        FlowState { live, rate }
    }
}

/// One line of a router's flow table.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowEntry {
    /// Identity bytes of the flow's packets; the router records them
    /// without knowing whether the flow is hostile.
    pub identity: PacketIdentity,
    /// Neighbour the flow arrives from.
    pub ingress: NodeId,
    /// Neighbour the flow leaves toward.
    pub egress: NodeId,
    pub rate: f64,
}

/// What a router's flow table shows over one observation window.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTable {
    pub router: NodeId,
    /// Half-open tick window the table covers.
    pub window: (u64, u64),
    pub entries: Vec<FlowEntry>,
}

/// Builds the flow table an operator would read off `router` while
/// watching it over the half-open window `(w0, w1)`.
pub fn flow_table_over(
    network: &Network,
    mix: &TrafficMix,
    router: NodeId,
    window: (u64, u64),
) -> Result<FlowTable, LegacyError> {
    if !network.is_router(router) {
        return Err(LegacyError::Topology(TopologyError::UnknownNode(router)));
    }
    if window.0 >= window.1 {
        return Err(LegacyError::BadParameter("observation window must not be empty"));
    }
    let mut entries = Vec::new();
    let mut push = |identity: PacketIdentity, route: &[NodeId], rate: f64| {
        for w in route.windows(3) {
            if w[1] == router {
                entries.push(FlowEntry { identity, ingress: w[0], egress: w[2], rate });
            }
        }
    };
    for f in &mix.attack {
        if f.active_in(window.0, window.1) {
            push(f.identity, &f.route, f.rate);
        }
    }
    for f in &mix.background {
        push(f.identity, &f.route, f.rate);
    }
    Ok(FlowTable { router, window, entries })
}

/// Tuning for input debugging.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DebugConfig {
    /// Ticks each router's filter observes before reporting.
    pub window: u64,
}

impl Default for DebugConfig {
    fn default() -> Self {
        Self { window: DEFAULT_DEBUG_WINDOW }
    }
}

/// How an input-debugging trace ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DebugTerminus {
    /// Climbed all the way to the sending host.
    Origin { host: NodeId },
    /// The next router belongs to another provider's domain; the climb
    /// cannot ask its operator for filters.
    Boundary { router: NodeId },
    /// The next router is a firewall that refuses the filter.
    Filtered { router: NodeId },
}

/// Result of an input-debugging trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DebugTrace {
    /// Routers whose filters observed the matching traffic, victim side
    /// first. The node the trace stopped at is named by the terminus.
    pub path: Vec<NodeId>,
    pub terminus: DebugTerminus,
    /// Ticks spent observing.
    pub elapsed: u64,
}

/// The victim's single access router.
fn access_router(network: &Network, victim: NodeId) -> Result<NodeId, LegacyError> {
    let mut routers: Vec<NodeId> =
        network.neighbors(victim).filter(|&n| network.is_router(n)).collect();
    routers.sort_unstable();
    match routers.len() {
        0 => Err(LegacyError::BadFlowRoute("victim has no access router")),
        1 => Ok(routers[0]),
        _ => Err(LegacyError::AmbiguousUpstream { at: victim, candidates: routers }),
    }
}

/// Hop-by-hop upstream trace through cooperating routers' flow tables.
///
/// Starting at the victim's access router, each hop installs the
/// signature filter for one observation window and reads off the ingress
/// that carried matching traffic toward the victim. The climb stays
/// inside the access router's domain: a foreign router ends it with
/// [`DebugTerminus::Boundary`], a firewall with
/// [`DebugTerminus::Filtered`], in both cases reporting the partial path
/// climbed so far.
pub fn input_debugging(
    network: &Network,
    mix: &TrafficMix,
    signature: AttackSignature,
    victim: NodeId,
    cfg: &DebugConfig,
) -> Result<DebugTrace, LegacyError> {
    mix.validate(network)?;
    if cfg.window == 0 {
        return Err(LegacyError::BadParameter("observation window must be positive"));
    }
    if !network.is_host(victim) {
        return Err(LegacyError::Topology(TopologyError::UnknownNode(victim)));
    }
    if !mix.attack.iter().any(|f| signature.matches(&f.identity)) {
        return Err(LegacyError::NoMatchingFlow);
    }
    let access = access_router(network, victim)?;
    let home = match network.router(access) {
        Some(r) => r.domain,
        None => return Err(LegacyError::Topology(TopologyError::UnknownNode(access))),
    };

    let mut path: Vec<NodeId> = Vec::new();
    let mut downstream = victim;
    let mut current = access;
    let mut windows: u64 = 0;
    loop {
        let w0 = windows * cfg.window;
        let w1 = w0 + cfg.window;
        let Some(router) = network.router(current) else {
            return Err(LegacyError::Topology(TopologyError::UnknownNode(current)));
        };
        if router.domain != home {
            return Ok(DebugTrace {
                path,
                terminus: DebugTerminus::Boundary { router: current },
                elapsed: w0,
            });
        }
        if router.firewall {
            return Ok(DebugTrace {
                path,
                terminus: DebugTerminus::Filtered { router: current },
                elapsed: w0,
            });
        }
        if !mix
            .attack
            .iter()
            .any(|f| signature.matches(&f.identity) && f.active_in(w0, w1))
        {
            return Err(LegacyError::AttackEnded { last: current, at: w0 });
        }
        let table = flow_table_over(network, mix, current, (w0, w1))?;
        let mut ingress: Vec<NodeId> = table
            .entries
            .iter()
            .filter(|e| signature.matches(&e.identity) && e.egress == downstream)
            .map(|e| e.ingress)
            .collect();
        ingress.sort_unstable();
        ingress.dedup();
        let up = match ingress.len() {
            0 => return Err(LegacyError::NoMatchingIngress { router: current, at: w0 }),
            1 => ingress[0],
            _ => {
                return Err(LegacyError::AmbiguousUpstream {
                    at: current,
                    candidates: ingress,
                })
            }
        };
        path.push(current);
        windows += 1;
        if network.is_host(up) {
            return Ok(DebugTrace {
                path,
                terminus: DebugTerminus::Origin { host: up },
                elapsed: windows * cfg.window,
            });
        }
        downstream = current;
        current = up;
    }
}

/// Tuning for controlled flooding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloodConfig {
    /// Flood volume per burst, in the same relative units as flow rates.
    pub flood_rate: f64,
    /// Attack packets sampled at the victim during each burst.
    pub probe_packets: u32,
    /// A candidate link is implicated when flooding it depresses the
    /// sampled arrivals by more than this fraction of the baseline.
    pub sensitivity: f64,
}

impl Default for FloodConfig {
    fn default() -> Self {
        Self { flood_rate: 8.0, probe_packets: 200, sensitivity: 0.2 }
    }
}

impl FloodConfig {
    fn validate(&self) -> Result<(), LegacyError> {
        if !self.flood_rate.is_finite() || self.flood_rate <= 0.0 {
            return Err(LegacyError::BadParameter("flood rate must be positive"));
        }
        if self.probe_packets == 0 {
            return Err(LegacyError::BadParameter("probe packet count must be positive"));
        }
        if !(0.0 < self.sensitivity && self.sensitivity < 1.0) {
            return Err(LegacyError::BadParameter("sensitivity must be in (0, 1)"));
        }
        Ok(())
    }
}

/// How a flooding trace ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FloodTerminus {
    /// The dips led all the way to the sending host.
    Origin { host: NodeId },
    /// Two or more upstream links dipped at this router: converging
    /// sources, flooding cannot pick one.
    MultiSourceAmbiguity { at: NodeId, links_to: Vec<NodeId> },
}

/// Result of a controlled-flooding trace.
#[derive(Clone, Debug, PartialEq)]
pub struct FloodTrace {
    /// Implicated routers, victim side first.
    pub path: Vec<NodeId>,
    pub terminus: FloodTerminus,
    /// Total flood packets generated across all bursts.
    pub packets_consumed: u64,
    /// Bursts fired, one tick each.
    pub bursts: u32,
}

/// One burst's measurement: floods `link` at tick `at` and samples the
/// victim's matching arrivals against the un-flooded baseline.
///
/// Every router shares one output buffer per link, so the flood drops
/// matching packets crossing the link with probability
/// `flood_rate / (flood_rate + link_load)`, capped at
/// [`FLOOD_DROP_CAP`]. The victim cannot tell attack packets from benign
/// ones the signature also matches, so both are sampled. Returns the
/// relative depression: 0 when every probe arrived, 1 when none did.
pub fn flood_depression<R: Rng + ?Sized>(
    network: &Network,
    mix: &TrafficMix,
    signature: AttackSignature,
    victim: NodeId,
    link: (NodeId, NodeId),
    at: u64,
    cfg: &FloodConfig,
    rng: &mut R,
) -> Result<f64, LegacyError> {
    mix.validate(network)?;
    cfg.validate()?;
    if !network.is_host(victim) {
        return Err(LegacyError::Topology(TopologyError::UnknownNode(victim)));
    }
    if network.link_between(link.0, link.1).is_none() {
        return Err(LegacyError::BadParameter("flooded link does not exist"));
    }
    depression_on_link(mix, signature, victim, link, at, cfg, rng)
}

/// [`flood_depression`] without the up-front validation, for callers
/// that already did it.
fn depression_on_link<R: Rng + ?Sized>(
    mix: &TrafficMix,
    signature: AttackSignature,
    victim: NodeId,
    link: (NodeId, NodeId),
    at: u64,
    cfg: &FloodConfig,
    rng: &mut R,
) -> Result<f64, LegacyError> {
    // The stream the victim probes: matching traffic addressed to it.
    let mut stream: Vec<(&[NodeId], f64)> = Vec::new();
    for f in &mix.attack {
        if signature.matches(&f.identity) && f.active_at(at) && f.route.last() == Some(&victim)
        {
            stream.push((&f.route, f.rate));
        }
    }
    if stream.is_empty() {
        return Err(LegacyError::AttackEnded { last: victim, at });
    }
    for f in &mix.background {
        if signature.matches(&f.identity) && f.route.last() == Some(&victim) {
            stream.push((&f.route, f.rate));
        }
    }
    let total: f64 = stream.iter().map(|&(_, r)| r).sum();
    let load = mix.link_load(link.0, link.1, at);
    let drop = (cfg.flood_rate / (cfg.flood_rate + load)).min(FLOOD_DROP_CAP);
    let crosses = |route: &[NodeId]| {
        route
            .windows(2)
            .any(|w| (w[0] == link.0 && w[1] == link.1) || (w[0] == link.1 && w[1] == link.0))
    };
    let mut arrived: u32 = 0;
    for _ in 0..cfg.probe_packets {
        // Pick which matching flow this probe packet belongs to,
        // weighted by rate.
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = stream[0];
        for &entry in &stream {
            if pick < entry.1 {
                chosen = entry;
                break;
            }
            pick -= entry.1;
        }
        let dropped = crosses(chosen.0) && rng.gen::<f64>() < drop;
        if !dropped {
            arrived += 1;
        }
    }
    Ok(1.0 - f64::from(arrived) / f64::from(cfg.probe_packets))
}

/// Hop-by-hop trace by selectively overloading upstream links.
///
/// At each confirmed router, every upstream link gets one flood burst
/// (one tick each) and its [`flood_depression`] measurement. Exactly one
/// link past the sensitivity threshold advances the trace; none is
/// [`LegacyError::InconclusiveLink`]; several end it with
/// [`FloodTerminus::MultiSourceAmbiguity`]. Router cooperation is not
/// needed, so domain boundaries and firewalls do not stop it.
pub fn controlled_flooding<R: Rng + ?Sized>(
    network: &Network,
    mix: &TrafficMix,
    signature: AttackSignature,
    victim: NodeId,
    cfg: &FloodConfig,
    rng: &mut R,
) -> Result<FloodTrace, LegacyError> {
    mix.validate(network)?;
    cfg.validate()?;
    if !network.is_host(victim) {
        return Err(LegacyError::Topology(TopologyError::UnknownNode(victim)));
    }
    if !mix.attack.iter().any(|f| signature.matches(&f.identity)) {
        return Err(LegacyError::NoMatchingFlow);
    }
    let access = access_router(network, victim)?;
    let burst_volume = libm::ceil(cfg.flood_rate * f64::from(cfg.probe_packets)) as u64;

    let mut t: u64 = 0;
    let mut bursts: u32 = 0;
    let mut consumed: u64 = 0;
    let mut downstream = victim;
    let mut current = access;
    let mut path = alloc::vec![access];

    loop {
        let mut candidates: Vec<NodeId> =
            network.neighbors(current).filter(|&n| n != downstream).collect();
        candidates.sort_unstable();
        let mut implicated: Vec<NodeId> = Vec::new();
        for &u in &candidates {
            if !mix.flow_state(signature, t).live {
                return Err(LegacyError::AttackEnded { last: current, at: t });
            }
            let depression =
                depression_on_link(mix, signature, victim, (u, current), t, cfg, rng)?;
            bursts += 1;
            consumed += burst_volume;
            t += 1;
            if depression > cfg.sensitivity {
                implicated.push(u);
            }
        }
        match implicated.len() {
            0 => return Err(LegacyError::InconclusiveLink { at: current }),
            1 => {}
            _ => {
                return Ok(FloodTrace {
                    path,
                    terminus: FloodTerminus::MultiSourceAmbiguity {
                        at: current,
                        links_to: implicated,
                    },
                    packets_consumed: consumed,
                    bursts,
                });
            }
        }
        let up = implicated[0];
        if network.is_host(up) {
            return Ok(FloodTrace {
                path,
                terminus: FloodTerminus::Origin { host: up },
                packets_consumed: consumed,
                bursts,
            });
        }
        path.push(up);
        downstream = current;
        current = up;
    }
}

/// One traceback message: the emitting router, its packet-adjacent
/// neighbours, and which packet triggered it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ItraceMessage {
    pub router: NodeId,
    /// Neighbour the packet came from (attacker side).
    pub upstream: NodeId,
    /// Neighbour the packet went to (victim side).
    pub downstream: NodeId,
    /// Serial number of the sampled packet.
    pub sequence: u64,
    /// Whether the message's origin checks out. Attackers can inject
    /// misleading messages; those carry `false` and are discarded by
    /// reconstruction.
    pub authentic: bool,
}

/// One router's sampling decision for one forwarded packet: with
/// probability `q`, emits the traceback message describing the hop.
/// Forwarding itself is unaffected.
pub fn itrace_forward<R: Rng + ?Sized>(
    router: NodeId,
    upstream: NodeId,
    downstream: NodeId,
    sequence: u64,
    q: f64,
    rng: &mut R,
) -> Result<Option<ItraceMessage>, LegacyError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(LegacyError::BadParameter("emission probability outside [0, 1]"));
    }
    if rng.gen::<f64>() < q {
        Ok(Some(ItraceMessage { router, upstream, downstream, sequence, authentic: true }))
    } else {
        Ok(None)
    }
}

/// Forwards `packets` packets along `route` and collects the traceback
/// messages emitted on the way. `probability` overrides every router's
/// own `itrace_probability` when given.
pub fn run_itrace_episode<R: Rng + ?Sized>(
    network: &Network,
    route: &[NodeId],
    packets: u64,
    probability: Option<f64>,
    rng: &mut R,
) -> Result<Vec<ItraceMessage>, LegacyError> {
    validate_route(network, route)?;
    if let Some(q) = probability {
        if !(0.0..=1.0).contains(&q) {
            return Err(LegacyError::BadParameter("emission probability outside [0, 1]"));
        }
    }
    let hops: Vec<(NodeId, NodeId, NodeId, f64)> = route
        .windows(3)
        .map(|w| {
            let q = probability.unwrap_or_else(|| {
                network.router(w[1]).map(|r| r.itrace_probability).unwrap_or(0.0)
            });
            (w[1], w[0], w[2], q)
        })
        .collect();
    let mut out = Vec::new();
    for sequence in 0..packets {
        for &(router, upstream, downstream, q) in &hops {
            if let Some(m) = itrace_forward(router, upstream, downstream, sequence, q, rng)? {
                out.push(m);
            }
        }
    }
    Ok(out)
}

/// One element of a reconstructed path, victim side first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReconElement {
    /// A router that reported itself.
    Known(NodeId),
    /// A stretch of silent routers, with every topology-consistent
    /// candidate sequence of the minimal length that reconnects the
    /// trail.
    Bridge { candidates: Vec<Vec<NodeId>> },
}

/// A path reconstructed from traceback messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItraceRecon {
    pub elements: Vec<ReconElement>,
    /// The sending host, when some emitter named it as its upstream.
    pub attacker: Option<NodeId>,
    /// Whether the chain reached the sending host.
    pub complete: bool,
    /// Messages discarded for failing the authenticity check.
    pub rejected: usize,
}

impl ItraceRecon {
    /// Every candidate router path the elements describe, victim side
    /// first; bridges multiply out. Empty unless the reconstruction
    /// reached the sending host.
    pub fn candidate_paths(&self) -> Vec<Vec<NodeId>> {
        if !self.complete {
            return Vec::new();
        }
        let mut paths: Vec<Vec<NodeId>> = alloc::vec![Vec::new()];
        for element in &self.elements {
            match element {
                ReconElement::Known(r) => {
                    for p in &mut paths {
                        p.push(*r);
                    }
                }
                ReconElement::Bridge { candidates } => {
                    let mut grown = Vec::with_capacity(paths.len() * candidates.len());
                    for p in &paths {
                        for c in candidates {
                            let mut longer = p.clone();
                            longer.extend_from_slice(c);
                            grown.push(longer);
                        }
                    }
                    paths = grown;
                }
            }
        }
        paths
    }
}

/// Rebuilds the attack path from collected traceback messages.
///
/// Unauthenticated messages are discarded first and counted. The rest
/// are chained by their reported neighbours: the router that named the
/// victim as its downstream comes first, then repeatedly the router
/// naming the previous one. When no emitter names the previous router,
/// silent routers are bridged by searching the topology for non-emitting
/// router sequences of length up to `gap_cap` that reconnect to some
/// unused emitter; all candidate sequences of the minimal reconnecting
/// length are reported, and the search never trusts the silent routers'
/// names in messages (a silent router reported nothing).
pub fn itrace_reconstruct(
    network: &Network,
    messages: &[ItraceMessage],
    victim: NodeId,
    gap_cap: u32,
) -> Result<ItraceRecon, LegacyError> {
    if !network.is_host(victim) {
        return Err(LegacyError::Topology(TopologyError::UnknownNode(victim)));
    }
    let mut rejected = 0usize;
    let mut emitters: BTreeMap<NodeId, (NodeId, NodeId)> = BTreeMap::new();
    for m in messages {
        if !m.authentic {
            rejected += 1;
            continue;
        }
        match emitters.get(&m.router) {
            Some(&(u, d)) if (u, d) != (m.upstream, m.downstream) => {
                return Err(LegacyError::ConflictingMessages(m.router));
            }
            Some(_) => {}
            None => {
                emitters.insert(m.router, (m.upstream, m.downstream));
            }
        }
    }

    let mut elements = Vec::new();
    let mut used: BTreeSet<NodeId> = BTreeSet::new();
    let mut current = victim;
    let mut attacker = None;
    let mut complete = false;

    loop {
        // Direct continuation: an unused emitter naming `current` as its
        // downstream neighbour.
        let direct: Vec<NodeId> = emitters
            .iter()
            .filter(|(r, &(_, d))| d == current && !used.contains(r))
            .map(|(&r, _)| r)
            .collect();
        let next = match direct.len() {
            1 => Some(direct[0]),
            0 => None,
            _ => {
                // Two emitters both claim to feed `current`: converging
                // paths, stop at the junction.
                break;
            }
        };
        let next = match next {
            Some(r) => r,
            None => {
                // Bridge across silent routers: breadth-first over
                // non-emitting routers, shortest sequences first.
                let Some((sequences, target)) =
                    bridge_gap(network, &emitters, &used, current, gap_cap)
                else {
                    break;
                };
                elements.push(ReconElement::Bridge { candidates: sequences });
                target
            }
        };
        elements.push(ReconElement::Known(next));
        used.insert(next);
        let (up, _) = emitters[&next];
        if network.is_host(up) {
            attacker = Some(up);
            complete = true;
            break;
        }
        current = next;
    }

    Ok(ItraceRecon { elements, attacker, complete, rejected })
}

/// Finds all sequences of at most `gap_cap` silent routers that connect
/// `from` to a single unused emitter, shortest length first. Returns the
/// sorted sequences and the emitter they reach, or `None` when no length
/// works or when the minimal length reaches two different emitters.
fn bridge_gap(
    network: &Network,
    emitters: &BTreeMap<NodeId, (NodeId, NodeId)>,
    used: &BTreeSet<NodeId>,
    from: NodeId,
    gap_cap: u32,
) -> Option<(Vec<Vec<NodeId>>, NodeId)> {
    // Sequences of silent routers, explored length by length.
    let mut frontier: Vec<Vec<NodeId>> = alloc::vec![Vec::new()];
    for _ in 1..=gap_cap {
        // Grow every sequence by one silent router.
        let mut extended: Vec<Vec<NodeId>> = Vec::new();
        for seq in &frontier {
            let tail = *seq.last().unwrap_or(&from);
            for n in network.neighbors(tail) {
                if !network.is_router(n)
                    || seq.contains(&n)
                    || n == from
                    || emitters.contains_key(&n)
                {
                    continue;
                }
                let mut longer = seq.clone();
                longer.push(n);
                extended.push(longer);
            }
        }
        // Do any of the grown sequences reconnect to an unused emitter?
        let mut hits: Vec<(Vec<NodeId>, NodeId)> = Vec::new();
        for seq in &extended {
            let tail = *seq.last().unwrap();
            for n in network.neighbors(tail) {
                if emitters.contains_key(&n) && !used.contains(&n) {
                    hits.push((seq.clone(), n));
                }
            }
        }
        if !hits.is_empty() {
            let targets: BTreeSet<NodeId> = hits.iter().map(|&(_, t)| t).collect();
            if targets.len() > 1 {
                return None;
            }
            let target = *targets.iter().next().unwrap();
            let mut sequences: Vec<Vec<NodeId>> = hits.into_iter().map(|(s, _)| s).collect();
            sequences.sort();
            sequences.dedup();
            return Some((sequences, target));
        }
        frontier = extended;
        if frontier.is_empty() {
            return None;
        }
    }
    None
}
