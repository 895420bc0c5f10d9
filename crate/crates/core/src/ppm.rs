//! Probabilistic packet marking with node sampling.
//!
//! Each router on the forwarding path overwrites the single mark slot of a
//! passing packet with its own address, independently with the configured
//! marking probability. The victim tallies which router address arrives in
//! each packet; because later (victim-side) routers overwrite earlier
//! marks, the mark from a router `d` hops out survives only if that router
//! marked and none of the `d - 1` routers after it did.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use libm::pow;
use rand::Rng;

use crate::spie::PacketIdentity;
use crate::topology::{AttackPath, Network, NodeId};

/// Errors from the marking simulator.
#[derive(Clone, Debug, PartialEq)]
pub enum PpmError {
    /// A path router is missing from the network.
    UnknownRouter(NodeId),
    /// A router carries a marking probability outside `[0, 1]`.
    ProbabilityOutOfRange(NodeId, f64),
    /// Parameter validation for the analytic formulas.
    BadParameter(&'static str),
    /// Two routers delivered the same number of marks, so their relative
    /// order on the path cannot be determined from the tally.
    AmbiguousOrder { a: NodeId, b: NodeId, count: u64 },
    /// Fewer distinct routers appear in the tally than the caller knows
    /// the path to contain.
    IncompleteEvidence { expected: usize, seen: usize },
}

impl fmt::Display for PpmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownRouter(n) => write!(f, "router {n} not present in the network"),
            Self::ProbabilityOutOfRange(n, p) => {
                write!(f, "router {n} has marking probability {p} outside [0, 1]")
            }
            Self::BadParameter(what) => write!(f, "{what}"),
            Self::AmbiguousOrder { a, b, count } => write!(
                f,
                "routers {a} and {b} both delivered {count} marks; order undetermined"
            ),
            Self::IncompleteEvidence { expected, seen } => write!(
                f,
                "expected marks from {expected} routers but only {seen} appeared"
            ),
        }
    }
}

impl core::error::Error for PpmError {}

/// Marking parameters shared by the analytic formulas: the per-router
/// marking probability and the confidence level used when solving for
/// thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpmParams {
    pub marking_probability: f64,
    pub confidence_target: f64,
}

impl PpmParams {
    pub const DEFAULT_CONFIDENCE: f64 = 0.99;

    pub fn new(marking_probability: f64) -> Self {
        Self { marking_probability, confidence_target: Self::DEFAULT_CONFIDENCE }
    }

    pub fn validate(&self) -> Result<(), PpmError> {
        if !(0.0..=1.0).contains(&self.marking_probability) {
            return Err(PpmError::BadParameter("marking probability outside [0, 1]"));
        }
        if !(self.confidence_target > 0.0 && self.confidence_target < 1.0) {
            return Err(PpmError::BadParameter("confidence target outside (0, 1)"));
        }
        Ok(())
    }
}

/// A packet as the victim receives it: the single overwritable router
/// address slot, plus the immutable bytes the digesting schemes hash, and
/// the serial number it was sent with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MarkedPacket {
    /// Address of the last router that marked, if any did.
    pub node_field: Option<NodeId>,
    /// Header-and-payload image; routers never alter it.
    pub identity: PacketIdentity,
    /// Serial number within the attack stream.
    pub sequence: u64,
}

/// Collects the marking probabilities of the path routers in forwarding
/// order (attacker side first), validating them once so the per-packet
/// loop can stay branch-free.
pub fn path_probabilities(
    network: &Network,
    path: &AttackPath,
) -> Result<Vec<(NodeId, f64)>, PpmError> {
    let mut out = Vec::with_capacity(path.hop_count());
    for id in path.traversal() {
        let r = network.router(id).ok_or(PpmError::UnknownRouter(id))?;
        if !(0.0..=1.0).contains(&r.marking_probability) {
            return Err(PpmError::ProbabilityOutOfRange(id, r.marking_probability));
        }
        out.push((id, r.marking_probability));
    }
    Ok(out)
}

/// Sends packet number `sequence` down the path with every router marking
/// at probability `p`, and returns the packet as the victim sees it.
///
/// Routers are visited in forwarding order and each draws once, so a
/// given random stream always produces the same per-router decisions
/// regardless of which routers actually mark. The identity bytes are
/// derived deterministically from the sequence number.
pub fn forward_and_mark<R: Rng + ?Sized>(
    path: &AttackPath,
    p: f64,
    sequence: u64,
    rng: &mut R,
) -> Result<MarkedPacket, PpmError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PpmError::BadParameter("marking probability outside [0, 1]"));
    }
    let mut node_field = None;
    for id in path.traversal() {
        if rng.gen::<f64>() < p {
            node_field = Some(id);
        }
    }
    Ok(MarkedPacket { node_field, identity: PacketIdentity::from_seed(sequence), sequence })
}

/// Per-packet kernel over pre-validated `(router, probability)` pairs in
/// forwarding order, returning only the surviving mark. Split out so
/// batch simulations can hoist validation and identity construction out
/// of their inner loop.
pub fn surviving_mark<R: Rng + ?Sized>(probs: &[(NodeId, f64)], rng: &mut R) -> Option<NodeId> {
    let mut mark = None;
    for &(id, p) in probs {
        if rng.gen::<f64>() < p {
            mark = Some(id);
        }
    }
    mark
}

/// `x^k` for `x` in `[0, 1]` with one rounding at the end. The partial
/// products are carried as unevaluated double-double pairs so tabulated
/// values match the correctly rounded power, where a plain `pow` call can
/// land an ulp off.
fn pow_int(x: f64, k: u32) -> f64 {
    fn dd_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        let p = a.0 * b.0;
        let e = libm::fma(a.0, b.0, -p) + (a.0 * b.1 + a.1 * b.0);
        let hi = p + e;
        (hi, e - (hi - p))
    }
    let mut acc = (1.0, 0.0);
    let mut base = (x, 0.0);
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            acc = dd_mul(acc, base);
        }
        k >>= 1;
        if k > 0 {
            base = dd_mul(base, base);
        }
    }
    acc.0 + acc.1
}

/// Probability that the victim receives the mark of the router `distance`
/// hops away: that router marks and the `distance - 1` routers after it
/// leave the packet alone.
pub fn survival_probability(p: f64, distance: u32) -> Result<f64, PpmError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PpmError::BadParameter("marking probability outside [0, 1]"));
    }
    if distance == 0 {
        return Err(PpmError::BadParameter("distance must be at least 1"));
    }
    Ok(p * pow_int(1.0 - p, distance - 1))
}

/// Survival probabilities for every distance `1..=hop_count`.
pub fn survival_curve(p: f64, hop_count: u32) -> Result<Vec<(u32, f64)>, PpmError> {
    if hop_count == 0 {
        return Err(PpmError::BadParameter("hop count must be at least 1"));
    }
    (1..=hop_count).map(|d| Ok((d, survival_probability(p, d)?))).collect()
}

/// Smallest per-router marking probability that gets at least one mark
/// onto a packet crossing `hop_count` routers with the given confidence:
/// solved from `1 - (1 - p)^hop_count >= c` as `p = 1 - (1 - c)^(1/hop_count)`.
pub fn threshold_marking_probability(hop_count: u32, confidence: f64) -> Result<f64, PpmError> {
    if hop_count == 0 {
        return Err(PpmError::BadParameter("hop count must be at least 1"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(PpmError::BadParameter("confidence must be in (0, 1)"));
    }
    Ok(1.0 - pow(1.0 - confidence, 1.0 / f64::from(hop_count)))
}

/// Victim-side tally of received marks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkTally {
    counts: BTreeMap<NodeId, u64>,
    packets: u64,
    unmarked: u64,
}

impl MarkTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, packet: &MarkedPacket) {
        self.record_mark(packet.node_field);
    }

    pub fn record_mark(&mut self, mark: Option<NodeId>) {
        self.packets += 1;
        match mark {
            Some(id) => *self.counts.entry(id).or_insert(0) += 1,
            None => self.unmarked += 1,
        }
    }

    pub fn total_packets(&self) -> u64 {
        self.packets
    }

    pub fn unmarked(&self) -> u64 {
        self.unmarked
    }

    pub fn marked(&self) -> u64 {
        self.packets - self.unmarked
    }

    pub fn count(&self, id: NodeId) -> u64 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<NodeId, u64> {
        &self.counts
    }

    /// Orders the marked routers by strictly descending count. With node
    /// sampling, nearer routers deliver more marks, so this is the
    /// victim's path estimate, victim-adjacent router first.
    ///
    /// A tie between any two counts leaves the order undetermined and is
    /// an error rather than a guess. When the caller knows the path
    /// length (`expected_hops`), a tally naming fewer routers than that
    /// is rejected as incomplete.
    pub fn reconstruct_path(&self, expected_hops: Option<usize>) -> Result<Vec<NodeId>, PpmError> {
        if let Some(expected) = expected_hops {
            let seen = self.counts.len();
            if seen < expected {
                return Err(PpmError::IncompleteEvidence { expected, seen });
            }
        }
        let mut v: Vec<(NodeId, u64)> = self.counts.iter().map(|(&n, &c)| (n, c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for w in v.windows(2) {
            if w[0].1 == w[1].1 {
                return Err(PpmError::AmbiguousOrder { a: w[0].0, b: w[1].0, count: w[0].1 });
            }
        }
        Ok(v.into_iter().map(|(n, _)| n).collect())
    }
}
