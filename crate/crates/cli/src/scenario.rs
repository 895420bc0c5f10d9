//! The scenario file format: one line-oriented text file that fully
//! determines a run.
//!
//! The first part declares the AS-level topology, the second (optional)
//! part the experiment that runs on it. Directives may appear in any
//! order; `#` starts a comment. [`Scenario::save`] and [`Scenario::parse`]
//! round-trip exactly (link lines stay in creation order because link ids
//! follow it), and the bundled fixtures are written by `save`, so
//! every file on disk is reproducible from code.
//!
//! Topology directives:
//!
//! ```text
//! horizon 2
//! as 1 deployed stm=11        # or: as 2 transit
//! asedge 1 2
//! router 11 as=1 mark=0.2 itrace=0.00005 spie firewall
//! host 901 as=1
//! link 11 12
//! knowledge 1 level=2 4,5     # "-" for an empty set
//! attacker 910
//! victim 901
//! route 910,101,102,901
//! ```
//!
//! Experiment directives:
//!
//! ```text
//! packet 7                    # identity seed of the packet to trace
//! flow attack id=40 rate=4 route=2,12,11,1 start=0 end=2500
//! flow background id=41 rate=6 route=2,12,11,1
//! signature id=40             # or: signature mask=<56 hex> value=<56 hex>
//! window 1000
//! floodrate 8
//! probes 200
//! sensitivity 0.2
//! itrace q=0.00005 packets=200000
//! gapcap 2
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use tracelab_core::legacy::{AttackFlow, AttackSignature, BackgroundFlow, TrafficMix};
use tracelab_core::spie::{PacketIdentity, IDENTITY_LEN};
use tracelab_core::topology::{AsId, AsTopology, AsTopologyBuilder, HostNode, NodeId, RouterNode};

/// A parse or validation failure, pointing at the offending line when
/// there is one (`line` is 1-based; 0 means the file as a whole).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl ScenarioError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }

    fn whole_file(message: impl Into<String>) -> Self {
        Self { line: 0, message: message.into() }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

impl std::error::Error for ScenarioError {}

/// One traffic flow of the experiment, identified by the seed its packet
/// identity bytes are derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub identity_seed: u64,
    pub rate: f64,
    /// Host-to-host walk, sender first.
    pub route: Vec<NodeId>,
    /// First active tick; attack flows only.
    pub starts_at: u64,
    /// First inactive tick; attack flows only, `None` means forever.
    pub ends_at: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    Attack,
    Background,
}

/// How the experiment picks out attack packets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SignatureSpec {
    /// Exactly the identity derived from this seed.
    Exact(u64),
    /// Raw mask and value bytes.
    Masked { mask: [u8; IDENTITY_LEN], value: [u8; IDENTITY_LEN] },
}

impl SignatureSpec {
    pub fn build(&self) -> AttackSignature {
        match self {
            Self::Exact(seed) => AttackSignature::exact(&PacketIdentity::from_seed(*seed)),
            Self::Masked { mask, value } => AttackSignature::masked(*mask, *value),
        }
    }
}

/// The experiment half of a scenario: traffic plus strategy knobs. Every
/// field is optional; commands fall back to the library defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Experiment {
    /// Identity seed of the packet a digest trace looks for.
    pub packet_seed: Option<u64>,
    pub flows: Vec<FlowSpec>,
    pub signature: Option<SignatureSpec>,
    /// Observation window of hop-by-hop input debugging, in ticks.
    pub debug_window: Option<u64>,
    pub flood_rate: Option<f64>,
    pub probe_packets: Option<u32>,
    pub sensitivity: Option<f64>,
    pub itrace_probability: Option<f64>,
    pub itrace_packets: Option<u64>,
    pub gap_cap: Option<u32>,
}

impl Experiment {
    /// Materialises the declared flows into simulation traffic.
    pub fn traffic_mix(&self) -> TrafficMix {
        let mut mix = TrafficMix { attack: Vec::new(), background: Vec::new() };
        for f in &self.flows {
            let identity = PacketIdentity::from_seed(f.identity_seed);
            match f.kind {
                FlowKind::Attack => mix.attack.push(AttackFlow {
                    identity,
                    route: f.route.clone(),
                    rate: f.rate,
                    starts_at: f.starts_at,
                    ends_at: f.ends_at,
                }),
                FlowKind::Background => mix.background.push(BackgroundFlow {
                    identity,
                    route: f.route.clone(),
                    rate: f.rate,
                }),
            }
        }
        mix
    }
}

/// A parsed scenario file.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub topology: AsTopology,
    pub experiment: Experiment,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Parser::default().parse(text)
    }

    /// Renders the scenario back into the file format. The output is
    /// canonical: sections in a fixed order, everything sorted, derived
    /// deployment knowledge written out explicitly.
    pub fn save(&self) -> String {
        let mut s = String::from("# tracelab scenario\n");
        let topo = &self.topology;
        let net = topo.network();

        let _ = writeln!(s, "horizon {}", topo.deployment_horizon());
        for (a, info) in topo.ases() {
            let _ = write!(s, "as {} {}", a.0, if info.spie_deployed { "deployed" } else { "transit" });
            if let Some(n) = info.stm {
                let _ = write!(s, " stm={}", n.0);
            }
            s.push('\n');
        }
        let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
        for (a, _) in topo.ases() {
            for &b in topo.as_neighbors(a).into_iter().flatten() {
                edges.insert(if a.0 < b.0 { (a.0, b.0) } else { (b.0, a.0) });
            }
        }
        for (a, b) in edges {
            let _ = writeln!(s, "asedge {a} {b}");
        }

        let mut routers: Vec<&RouterNode> = net.routers().collect();
        routers.sort_by_key(|r| r.id);
        for r in routers {
            let _ = write!(
                s,
                "router {} as={} mark={} itrace={}",
                r.id.0, r.domain.0, r.marking_probability, r.itrace_probability
            );
            if r.spie_enabled {
                s.push_str(" spie");
            }
            if r.firewall {
                s.push_str(" firewall");
            }
            s.push('\n');
        }
        let mut hosts: Vec<&HostNode> = net.hosts().collect();
        hosts.sort_by_key(|h| h.id);
        for h in hosts {
            let _ = writeln!(s, "host {} as={}", h.id.0, h.domain.0);
        }
        // Link ids are handed out in creation order, so links are written
        // in that order (not sorted) to keep the ids stable across a
        // save/parse round trip.
        for l in net.links() {
            let _ = writeln!(s, "link {} {}", l.a.0, l.b.0);
        }

        for (a, info) in topo.ases() {
            if !info.spie_deployed {
                continue;
            }
            for level in 1..=topo.deployment_horizon() {
                let _ = write!(s, "knowledge {} level={} ", a.0, level);
                match topo.deployment_neighbors(a, level) {
                    Ok(set) if !set.is_empty() => {
                        push_list(&mut s, set.iter().map(|x| u64::from(x.0)));
                    }
                    _ => s.push('-'),
                }
                s.push('\n');
            }
        }

        if let Some(n) = topo.attacker() {
            let _ = writeln!(s, "attacker {}", n.0);
        }
        if let Some(n) = topo.victim() {
            let _ = writeln!(s, "victim {}", n.0);
        }
        if let Some(walk) = topo.route() {
            s.push_str("route ");
            push_list(&mut s, walk.iter().map(|n| n.0));
            s.push('\n');
        }

        self.save_experiment(&mut s);
        s
    }

    fn save_experiment(&self, s: &mut String) {
        let e = &self.experiment;
        if let Some(seed) = e.packet_seed {
            let _ = writeln!(s, "packet {seed}");
        }
        for f in &e.flows {
            let kind = match f.kind {
                FlowKind::Attack => "attack",
                FlowKind::Background => "background",
            };
            let _ = write!(s, "flow {kind} id={} rate={} route=", f.identity_seed, f.rate);
            push_list(s, f.route.iter().map(|n| n.0));
            if f.kind == FlowKind::Attack {
                if f.starts_at != 0 {
                    let _ = write!(s, " start={}", f.starts_at);
                }
                if let Some(end) = f.ends_at {
                    let _ = write!(s, " end={end}");
                }
            }
            s.push('\n');
        }
        match &e.signature {
            Some(SignatureSpec::Exact(seed)) => {
                let _ = writeln!(s, "signature id={seed}");
            }
            Some(SignatureSpec::Masked { mask, value }) => {
                let _ = writeln!(s, "signature mask={} value={}", hex(mask), hex(value));
            }
            None => {}
        }
        if let Some(w) = e.debug_window {
            let _ = writeln!(s, "window {w}");
        }
        if let Some(r) = e.flood_rate {
            let _ = writeln!(s, "floodrate {r}");
        }
        if let Some(p) = e.probe_packets {
            let _ = writeln!(s, "probes {p}");
        }
        if let Some(d) = e.sensitivity {
            let _ = writeln!(s, "sensitivity {d}");
        }
        if e.itrace_probability.is_some() || e.itrace_packets.is_some() {
            s.push_str("itrace");
            if let Some(q) = e.itrace_probability {
                let _ = write!(s, " q={q}");
            }
            if let Some(p) = e.itrace_packets {
                let _ = write!(s, " packets={p}");
            }
            s.push('\n');
        }
        if let Some(g) = e.gap_cap {
            let _ = writeln!(s, "gapcap {g}");
        }
    }
}

fn push_list(s: &mut String, ids: impl Iterator<Item = u64>) {
    for (i, id) in ids.enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{id}");
    }
}

fn hex(bytes: &[u8; IDENTITY_LEN]) -> String {
    let mut s = String::with_capacity(IDENTITY_LEN * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn parse_hex(tok: &str, no: usize, field: &str) -> Result<[u8; IDENTITY_LEN], ScenarioError> {
    let bytes = tok.as_bytes();
    if bytes.len() != IDENTITY_LEN * 2 || !bytes.iter().all(u8::is_ascii_hexdigit) {
        return Err(ScenarioError::at(
            no,
            format!("field {field}: expected {} hex digits, got '{tok}'", IDENTITY_LEN * 2),
        ));
    }
    let mut out = [0u8; IDENTITY_LEN];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = u8::from_str_radix(&tok[2 * i..2 * i + 2], 16).unwrap();
    }
    Ok(out)
}

fn num<T: FromStr>(tok: &str, no: usize, field: &str) -> Result<T, ScenarioError>
where
    T::Err: fmt::Display,
{
    tok.parse().map_err(|e| ScenarioError::at(no, format!("field {field}: invalid value '{tok}': {e}")))
}

fn id_list(tok: &str, no: usize, field: &str) -> Result<Vec<NodeId>, ScenarioError> {
    tok.split(',').map(|t| Ok(NodeId(num(t, no, field)?))).collect()
}

fn set_once<T>(slot: &mut Option<T>, value: T, no: usize, what: &str) -> Result<(), ScenarioError> {
    if slot.is_some() {
        return Err(ScenarioError::at(no, format!("duplicate directive '{what}'")));
    }
    *slot = Some(value);
    Ok(())
}

fn arity(toks: &[&str], want: usize, no: usize, what: &str) -> Result<(), ScenarioError> {
    if toks.len() != want {
        return Err(ScenarioError::at(
            no,
            format!("directive '{what}' takes {} argument(s), got {}", want - 1, toks.len() - 1),
        ));
    }
    Ok(())
}

/// Accumulates directives line by line, then assembles the topology in
/// dependency order so the file order never matters.
#[derive(Default)]
struct Parser {
    horizon: Option<u8>,
    ases: Vec<(AsId, bool, Option<NodeId>)>,
    as_edges: Vec<(AsId, AsId)>,
    routers: Vec<RouterNode>,
    hosts: Vec<HostNode>,
    links: Vec<(NodeId, NodeId)>,
    knowledge: Vec<(AsId, u8, BTreeSet<AsId>)>,
    attacker: Option<NodeId>,
    victim: Option<NodeId>,
    route: Option<Vec<NodeId>>,
    experiment: Experiment,
}

impl Parser {
    fn parse(mut self, text: &str) -> Result<Scenario, ScenarioError> {
        for (idx, raw) in text.lines().enumerate() {
            let no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            self.directive(&toks, no)?;
        }
        self.finish()
    }

    fn directive(&mut self, toks: &[&str], no: usize) -> Result<(), ScenarioError> {
        match toks[0] {
            "horizon" => {
                arity(toks, 2, no, "horizon")?;
                let h = num(toks[1], no, "horizon")?;
                set_once(&mut self.horizon, h, no, "horizon")
            }
            "as" => self.as_line(toks, no),
            "asedge" => {
                arity(toks, 3, no, "asedge")?;
                let a = AsId(num(toks[1], no, "asedge")?);
                let b = AsId(num(toks[2], no, "asedge")?);
                self.as_edges.push((a, b));
                Ok(())
            }
            "router" => self.router_line(toks, no),
            "host" => self.host_line(toks, no),
            "link" => {
                arity(toks, 3, no, "link")?;
                let a = NodeId(num(toks[1], no, "link")?);
                let b = NodeId(num(toks[2], no, "link")?);
                self.links.push((a, b));
                Ok(())
            }
            "knowledge" => self.knowledge_line(toks, no),
            "attacker" => {
                arity(toks, 2, no, "attacker")?;
                let n = NodeId(num(toks[1], no, "attacker")?);
                set_once(&mut self.attacker, n, no, "attacker")
            }
            "victim" => {
                arity(toks, 2, no, "victim")?;
                let n = NodeId(num(toks[1], no, "victim")?);
                set_once(&mut self.victim, n, no, "victim")
            }
            "route" => {
                arity(toks, 2, no, "route")?;
                let walk = id_list(toks[1], no, "route")?;
                set_once(&mut self.route, walk, no, "route")
            }
            "packet" => {
                arity(toks, 2, no, "packet")?;
                let seed = num(toks[1], no, "packet")?;
                set_once(&mut self.experiment.packet_seed, seed, no, "packet")
            }
            "flow" => self.flow_line(toks, no),
            "signature" => self.signature_line(toks, no),
            "window" => {
                arity(toks, 2, no, "window")?;
                let w = num(toks[1], no, "window")?;
                set_once(&mut self.experiment.debug_window, w, no, "window")
            }
            "floodrate" => {
                arity(toks, 2, no, "floodrate")?;
                let r = num(toks[1], no, "floodrate")?;
                set_once(&mut self.experiment.flood_rate, r, no, "floodrate")
            }
            "probes" => {
                arity(toks, 2, no, "probes")?;
                let p = num(toks[1], no, "probes")?;
                set_once(&mut self.experiment.probe_packets, p, no, "probes")
            }
            "sensitivity" => {
                arity(toks, 2, no, "sensitivity")?;
                let d = num(toks[1], no, "sensitivity")?;
                set_once(&mut self.experiment.sensitivity, d, no, "sensitivity")
            }
            "itrace" => self.itrace_line(toks, no),
            "gapcap" => {
                arity(toks, 2, no, "gapcap")?;
                let g = num(toks[1], no, "gapcap")?;
                set_once(&mut self.experiment.gap_cap, g, no, "gapcap")
            }
            other => Err(ScenarioError::at(no, format!("unknown directive '{other}'"))),
        }
    }

    fn as_line(&mut self, toks: &[&str], no: usize) -> Result<(), ScenarioError> {
        if toks.len() < 3 || toks.len() > 4 {
            return Err(ScenarioError::at(no, "directive 'as' takes: as <id> deployed|transit [stm=<node>]"));
        }
        let id = AsId(num(toks[1], no, "as id")?);
        let deployed = match toks[2] {
            "deployed" => true,
            "transit" => false,
            other => {
                return Err(ScenarioError::at(
                    no,
                    format!("as {}: field deployment: expected 'deployed' or 'transit', got '{other}'", id.0),
                ))
            }
        };
        let mut stm = None;
        if let Some(tok) = toks.get(3) {
            match tok.split_once('=') {
                Some(("stm", v)) => stm = Some(NodeId(num(v, no, "stm")?)),
                _ => return Err(ScenarioError::at(no, format!("as {}: unknown field '{tok}'", id.0))),
            }
        }
        self.ases.push((id, deployed, stm));
        Ok(())
    }

    fn router_line(&mut self, toks: &[&str], no: usize) -> Result<(), ScenarioError> {
        if toks.len() < 2 {
            return Err(ScenarioError::at(no, "directive 'router' needs an id"));
        }
        let id = NodeId(num(toks[1], no, "router id")?);
        let mut domain = None;
        let mut r = RouterNode::new(id, AsId(0));
        for tok in &toks[2..] {
            if let Some((k, v)) = tok.split_once('=') {
                match k {
                    "as" => domain = Some(AsId(num(v, no, "as")?)),
                    "mark" => r.marking_probability = num(v, no, "mark")?,
                    "itrace" => r.itrace_probability = num(v, no, "itrace")?,
                    _ => {
                        return Err(ScenarioError::at(no, format!("router {}: unknown field '{k}'", id.0)))
                    }
                }
            } else {
                match *tok {
                    "spie" => r.spie_enabled = true,
                    "firewall" => r.firewall = true,
                    _ => {
                        return Err(ScenarioError::at(no, format!("router {}: unknown flag '{tok}'", id.0)))
                    }
                }
            }
        }
        r.domain = domain
            .ok_or_else(|| ScenarioError::at(no, format!("router {}: missing field as", id.0)))?;
        self.routers.push(r);
        Ok(())
    }

    fn host_line(&mut self, toks: &[&str], no: usize) -> Result<(), ScenarioError> {
        arity(toks, 3, no, "host")?;
        let id = NodeId(num(toks[1], no, "host id")?);
        let domain = match toks[2].split_once('=') {
            Some(("as", v)) => AsId(num(v, no, "as")?),
            _ => return Err(ScenarioError::at(no, format!("host {}: missing field as", id.0))),
        };
        self.hosts.push(HostNode { id, domain });
        Ok(())
    }

    fn knowledge_line(&mut self, toks: &[&str], no: usize) -> Result<(), ScenarioError> {
        arity(toks, 4, no, "knowledge")?;
        let of = AsId(num(toks[1], no, "knowledge as")?);
        let level = match toks[2].split_once('=') {
            Some(("level", v)) => num(v, no, "level")?,
            _ => return Err(ScenarioError::at(no, format!("knowledge {}: missing field level", of.0))),
        };
        let set = if toks[3] == "-" {
            BTreeSet::new()
        } else {
            toks[3]
                .split(',')
                .map(|t| Ok(AsId(num(t, no, "knowledge set")?)))
                .collect::<Result<_, ScenarioError>>()?
        };
        self.knowledge.push((of, level, set));
        Ok(())
    }

    fn flow_line(&mut self, toks: &[&str], no: usize) -> Result<(), ScenarioError> {
        if toks.len() < 2 {
            return Err(ScenarioError::at(no, "directive 'flow' takes: flow attack|background <fields>"));
        }
        let kind = match toks[1] {
            "attack" => FlowKind::Attack,
            "background" => FlowKind::Background,
            other => {
                return Err(ScenarioError::at(
                    no,
                    format!("flow: field kind: expected 'attack' or 'background', got '{other}'"),
                ))
            }
        };
        let mut id = None;
        let mut rate = None;
        let mut route = None;
        let mut starts_at = 0;
        let mut ends_at = None;
        for tok in &toks[2..] {
            let Some((k, v)) = tok.split_once('=') else {
                return Err(ScenarioError::at(no, format!("flow: expected key=value, got '{tok}'")));
            };
            match k {
                "id" => id = Some(num(v, no, "id")?),
                "rate" => rate = Some(num(v, no, "rate")?),
                "route" => route = Some(id_list(v, no, "route")?),
                "start" if kind == FlowKind::Attack => starts_at = num(v, no, "start")?,
                "end" if kind == FlowKind::Attack => ends_at = Some(num(v, no, "end")?),
                "start" | "end" => {
                    return Err(ScenarioError::at(
                        no,
                        format!("flow: field {k} only applies to attack flows"),
                    ))
                }
                _ => return Err(ScenarioError::at(no, format!("flow: unknown field '{k}'"))),
            }
        }
        let missing = |f: &str| ScenarioError::at(no, format!("flow: missing field {f}"));
        self.experiment.flows.push(FlowSpec {
            kind,
            identity_seed: id.ok_or_else(|| missing("id"))?,
            rate: rate.ok_or_else(|| missing("rate"))?,
            route: route.ok_or_else(|| missing("route"))?,
            starts_at,
            ends_at,
        });
        Ok(())
    }

    fn signature_line(&mut self, toks: &[&str], no: usize) -> Result<(), ScenarioError> {
        let mut seed = None;
        let mut mask = None;
        let mut value = None;
        for tok in &toks[1..] {
            let Some((k, v)) = tok.split_once('=') else {
                return Err(ScenarioError::at(no, format!("signature: expected key=value, got '{tok}'")));
            };
            match k {
                "id" => seed = Some(num(v, no, "id")?),
                "mask" => mask = Some(parse_hex(v, no, "mask")?),
                "value" => value = Some(parse_hex(v, no, "value")?),
                _ => return Err(ScenarioError::at(no, format!("signature: unknown field '{k}'"))),
            }
        }
        let spec = match (seed, mask, value) {
            (Some(s), None, None) => SignatureSpec::Exact(s),
            (None, Some(m), Some(v)) => SignatureSpec::Masked { mask: m, value: v },
            _ => {
                return Err(ScenarioError::at(
                    no,
                    "signature takes either id=<seed> or mask=<hex> value=<hex>",
                ))
            }
        };
        set_once(&mut self.experiment.signature, spec, no, "signature")
    }

    fn itrace_line(&mut self, toks: &[&str], no: usize) -> Result<(), ScenarioError> {
        if toks.len() < 2 {
            return Err(ScenarioError::at(no, "directive 'itrace' takes q=<prob> and/or packets=<count>"));
        }
        for tok in &toks[1..] {
            let Some((k, v)) = tok.split_once('=') else {
                return Err(ScenarioError::at(no, format!("itrace: expected key=value, got '{tok}'")));
            };
            match k {
                "q" => {
                    let q = num(v, no, "q")?;
                    set_once(&mut self.experiment.itrace_probability, q, no, "itrace q")?;
                }
                "packets" => {
                    let p = num(v, no, "packets")?;
                    set_once(&mut self.experiment.itrace_packets, p, no, "itrace packets")?;
                }
                _ => return Err(ScenarioError::at(no, format!("itrace: unknown field '{k}'"))),
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Scenario, ScenarioError> {
        let mut b = AsTopologyBuilder::new();
        if let Some(h) = self.horizon {
            b = b.horizon(h);
        }
        for (id, deployed, stm) in self.ases {
            b = b.declare_as(id, deployed);
            if let Some(n) = stm {
                b = b.stm(id, n);
            }
        }
        for (x, y) in self.as_edges {
            b = b.as_edge(x, y);
        }
        for r in self.routers {
            b = b.router(r);
        }
        for h in self.hosts {
            b = b.host(h);
        }
        for (x, y) in self.links {
            b = b.link(x, y);
        }
        for (of, level, set) in self.knowledge {
            b = b.knowledge(of, level, set);
        }
        if let Some(n) = self.attacker {
            b = b.attacker(n);
        }
        if let Some(n) = self.victim {
            b = b.victim(n);
        }
        if let Some(walk) = self.route {
            b = b.route(walk);
        }
        let topology = b.build().map_err(|e| ScenarioError::whole_file(e.to_string()))?;
        Ok(Scenario { topology, experiment: self.experiment })
    }
}
