//! The work behind each subcommand. `main` only parses arguments; the
//! functions here load inputs, run the simulation, and write the report,
//! so integration tests can drive exactly what the binary runs.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use tracelab_core::convergence::{
    convergence_sweep, optimal_marking_probability, ConvergenceCriteria, ConvergenceError,
    SweepSummary,
};
use tracelab_core::legacy::{
    controlled_flooding, input_debugging, itrace_reconstruct, run_itrace_episode, AttackSignature,
    DebugConfig, DebugTerminus, FloodConfig, FloodTerminus, LegacyError, ReconElement,
    DEFAULT_DEBUG_WINDOW, DEFAULT_GAP_CAP,
};
use tracelab_core::ppm::{
    path_probabilities, survival_curve, surviving_mark, threshold_marking_probability, PpmError,
};
use tracelab_core::rng::{derive_seed, stream};
use tracelab_core::spie::{
    cross_as_traceback, render_path, CrossAsOutcome, PacketIdentity, SpieError, TracebackAgents,
};
use tracelab_core::topology::{build_linear_path, AsTopology, NodeId, TopologyError};

use crate::output::{join_grid, write_report, Metadata};
use crate::scenario::{Experiment, Scenario, ScenarioError, SignatureSpec};

#[derive(Debug)]
pub enum CliError {
    /// Reading an input or writing a report failed.
    Io { what: String, err: std::io::Error },
    /// A scenario file did not parse.
    Scenario { file: String, err: ScenarioError },
    /// The simulation rejected the configuration or could not finish.
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { what, err } => write!(f, "{what}: {err}"),
            Self::Scenario { file, err } => write!(f, "{file}: {err}"),
            Self::Run(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! from_core_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                Self::Run(e.to_string())
            }
        }
    )*};
}

from_core_error!(PpmError, ConvergenceError, SpieError, LegacyError, TopologyError);

fn write_out(path: &Path, meta: &Metadata, body: &str) -> Result<(), CliError> {
    write_report(path, meta, body)
        .map_err(|err| CliError::Io { what: format!("cannot write {}", path.display()), err })
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|err| CliError::Io { what: format!("cannot read {}", path.display()), err })?;
    Scenario::parse(&text)
        .map_err(|err| CliError::Scenario { file: path.display().to_string(), err })
}

/// The input file's bare name, for header echoes that must stay free of
/// absolute paths.
fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

/// Tabulates mark survival per distance, analytically and by simulation.
pub fn mark_prob(p_grid: &[f64], hops: u32, trials: u64, seed: u64, out: &Path) -> Result<(), CliError> {
    if p_grid.is_empty() {
        return Err(CliError::Run("p grid must not be empty".into()));
    }
    if trials == 0 {
        return Err(CliError::Run("trials must be at least 1".into()));
    }
    let mut body = String::from("p,d,analytic,monte_carlo\n");
    for &p in p_grid {
        let curve = survival_curve(p, hops)?;
        let scen = build_linear_path(hops, p)?;
        let probs = path_probabilities(&scen.network, &scen.path)?;
        // Counts indexed like the traversal: probs[i] sits hops - i hops
        // from the victim.
        let mut counts = vec![0u64; hops as usize];
        let mut rng = stream(derive_seed(seed, &[p.to_bits()]));
        for _ in 0..trials {
            if let Some(winner) = surviving_mark(&probs, &mut rng) {
                let idx = probs.iter().position(|&(n, _)| n == winner).unwrap();
                counts[idx] += 1;
            }
        }
        for (d, analytic) in curve {
            let mc = counts[(hops - d) as usize] as f64 / trials as f64;
            let _ = writeln!(body, "{p},{d},{analytic},{mc}");
        }
    }
    let meta = Metadata::new("mark-prob")
        .seed(seed)
        .entry("p-grid", join_grid(p_grid))
        .entry("hops", hops)
        .entry("trials", trials);
    write_out(out, &meta, &body)?;
    println!("mark-prob: {} rows -> {}", p_grid.len() * hops as usize, out.display());
    Ok(())
}

/// Tabulates the marking-probability threshold curve p*(n).
pub fn threshold(hops: u32, confidence: f64, out: &Path) -> Result<(), CliError> {
    let mut body = String::from("n,p_threshold\n");
    for n in 1..=hops.max(1) {
        let p = threshold_marking_probability(n, confidence)?;
        let _ = writeln!(body, "{n},{p}");
    }
    let meta = Metadata::new("threshold").entry("hops", hops).entry("confidence", confidence);
    write_out(out, &meta, &body)?;
    println!("threshold: {hops} rows -> {}", out.display());
    Ok(())
}

/// Sweeps convergence time over hop counts and marking probabilities,
/// writing the cell table plus a long-format companion file with one
/// plot panel per hop count.
pub fn convergence(
    hops: &[u32],
    p_grid: &[f64],
    trials: u32,
    confidence: f64,
    max_packets: u64,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let criteria = ConvergenceCriteria::default();
    let summaries =
        convergence_sweep(hops, p_grid, trials, criteria, max_packets, confidence, seed)?;

    let mut body = String::from("hop_count,p,trials,converged,exhausted,mean,ci_low,ci_high\n");
    for s in &summaries {
        let _ = write!(
            body,
            "{},{},{},{},{},",
            s.hop_count, s.marking_probability, s.trials, s.converged, s.exhausted
        );
        match (s.mean_packets, s.interval) {
            (Some(m), Some(ci)) => {
                let _ = writeln!(body, "{m},{},{}", ci.lo, ci.hi);
            }
            (Some(m), None) => {
                let _ = writeln!(body, "{m},,");
            }
            _ => body.push_str(",,\n"),
        }
    }

    let mut panels = String::from("panel,p,mean,ci_low,ci_high\n");
    for s in &summaries {
        if let (Some(m), Some(ci)) = (s.mean_packets, s.interval) {
            let _ = writeln!(panels, "hops={},{},{m},{},{}", s.hop_count, s.marking_probability, ci.lo, ci.hi);
        }
    }

    let meta = || {
        Metadata::new("convergence")
            .seed(seed)
            .entry("hops", join_grid(hops))
            .entry("p-grid", join_grid(p_grid))
            .entry("trials", trials)
            .entry("confidence", confidence)
            .entry("max-packets", max_packets)
    };
    write_out(out, &meta(), &body)?;
    let panel_path = out.with_extension("panels.csv");
    write_out(&panel_path, &meta().entry("layout", "one panel per hop count"), &panels)?;

    for warn in summaries.iter().filter(|s| s.exhaustion_warning()) {
        eprintln!(
            "warning: hops {} p {}: {}/{} trials exhausted the {}-packet budget",
            warn.hop_count, warn.marking_probability, warn.exhausted, warn.trials, max_packets
        );
    }
    for &h in hops {
        println!("{}", hop_summary(&summaries, h));
    }
    println!("convergence: {} cells -> {} (+ {})", summaries.len(), out.display(), panel_path.display());
    Ok(())
}

fn hop_summary(summaries: &[SweepSummary], hop_count: u32) -> String {
    match optimal_marking_probability(summaries, hop_count) {
        Err(_) => format!("hops {hop_count}: no converged trials"),
        Ok(best) => {
            let s = summaries
                .iter()
                .find(|s| s.hop_count == hop_count && s.marking_probability == best)
                .expect("optimum comes from this sweep");
            let mean = s.mean_packets.unwrap_or(f64::NAN);
            match s.interval {
                Some(ci) => format!(
                    "hops {hop_count}: best p {best}, mean {mean:.1} packets (CI {:.1}..{:.1}), converged {}/{}",
                    ci.lo, ci.hi, s.converged, s.trials
                ),
                None => format!(
                    "hops {hop_count}: best p {best}, mean {mean:.1} packets, converged {}/{}",
                    s.converged, s.trials
                ),
            }
        }
    }
}

/// Runs single-packet hash-based traceback on a scenario file and writes
/// the query transcript plus the grafted path.
pub fn spie_trace(topology_path: &Path, out: &Path) -> Result<(), CliError> {
    let scen = load_scenario(topology_path)?;
    let topo = &scen.topology;
    let packet = scen
        .experiment
        .packet_seed
        .ok_or_else(|| CliError::Run("scenario missing field packet (identity seed to trace)".into()))?;
    let route = topo
        .route()
        .ok_or_else(|| CliError::Run("scenario missing field route".into()))?
        .to_vec();

    let digest = PacketIdentity::from_seed(packet).digest();
    let mut agents = TracebackAgents::deploy(topo);
    agents.observe(&route, digest);
    let outcome = cross_as_traceback(topo, &agents, digest)?;

    let mut body = outcome.transcript().to_text();
    let tail = match &outcome {
        CrossAsOutcome::Complete { elements, .. } => render_path(elements),
        CrossAsOutcome::OriginNotFound { .. } => String::from("PATH NOT FOUND"),
    };
    body.push_str(&tail);
    body.push('\n');

    let meta = Metadata::new("spie-trace")
        .entry("scenario", file_name(topology_path))
        .entry("packet", packet);
    write_out(out, &meta, &body)?;
    println!("{tail}");
    println!("spie-trace: transcript -> {}", out.display());
    Ok(())
}

/// The pre-marking strategies `strategy` can replay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Strategy {
    /// Hop-by-hop input debugging through router flow tables
    InputDebugging,
    /// Link-load flooding, reading the attack's dips
    ControlledFlooding,
    /// Sampled traceback messages emitted by forwarding routers
    Itrace,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Self::InputDebugging => "input-debugging",
            Self::ControlledFlooding => "controlled-flooding",
            Self::Itrace => "itrace",
        }
    }
}

/// Replays one legacy traceback strategy from a scenario file and writes
/// a JSON trace report.
pub fn strategy(which: Strategy, topology_path: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let scen = load_scenario(topology_path)?;
    let (report, line) = match which {
        Strategy::InputDebugging => run_input_debugging(&scen)?,
        Strategy::ControlledFlooding => run_controlled_flooding(&scen, seed)?,
        Strategy::Itrace => run_itrace(&scen, seed)?,
    };

    let mut body = serde_json::to_string_pretty(&report).expect("report serialises");
    body.push('\n');
    let meta = Metadata::new("strategy")
        .seed(seed)
        .entry("name", which.name())
        .entry("scenario", file_name(topology_path));
    write_out(out, &meta, &body)?;
    println!("{line}");
    println!("strategy: report -> {}", out.display());
    Ok(())
}

fn required_signature(exp: &Experiment) -> Result<AttackSignature, CliError> {
    exp.signature
        .as_ref()
        .map(SignatureSpec::build)
        .ok_or_else(|| CliError::Run("scenario missing field signature".into()))
}

fn required_victim(topo: &AsTopology) -> Result<NodeId, CliError> {
    topo.victim().ok_or_else(|| CliError::Run("scenario missing field victim".into()))
}

fn ids(nodes: &[NodeId]) -> Vec<u64> {
    nodes.iter().map(|n| n.0).collect()
}

fn run_input_debugging(scen: &Scenario) -> Result<(serde_json::Value, String), CliError> {
    let exp = &scen.experiment;
    let sig = required_signature(exp)?;
    let victim = required_victim(&scen.topology)?;
    let cfg = DebugConfig { window: exp.debug_window.unwrap_or(DEFAULT_DEBUG_WINDOW) };
    let mix = exp.traffic_mix();
    let trace = input_debugging(scen.topology.network(), &mix, sig, victim, &cfg)?;

    let (kind, node) = match trace.terminus {
        DebugTerminus::Origin { host } => ("origin", host),
        DebugTerminus::Boundary { router } => ("boundary", router),
        DebugTerminus::Filtered { router } => ("filtered", router),
    };
    let report = json!({
        "strategy": "input-debugging",
        "path": ids(&trace.path),
        "terminus": { "kind": kind, "node": node.0 },
        "boundary": matches!(trace.terminus, DebugTerminus::Boundary { .. }),
        "filtered": matches!(trace.terminus, DebugTerminus::Filtered { .. }),
        "ambiguous": false,
        "packets_consumed": 0,
        "ticks_elapsed": trace.elapsed,
    });
    let line = format!(
        "input-debugging: {kind} at node {} after {} ticks, path {:?}",
        node.0,
        trace.elapsed,
        ids(&trace.path)
    );
    Ok((report, line))
}

fn run_controlled_flooding(scen: &Scenario, seed: u64) -> Result<(serde_json::Value, String), CliError> {
    let exp = &scen.experiment;
    let sig = required_signature(exp)?;
    let victim = required_victim(&scen.topology)?;
    let mut cfg = FloodConfig::default();
    if let Some(r) = exp.flood_rate {
        cfg.flood_rate = r;
    }
    if let Some(p) = exp.probe_packets {
        cfg.probe_packets = p;
    }
    if let Some(d) = exp.sensitivity {
        cfg.sensitivity = d;
    }
    let mix = exp.traffic_mix();
    let mut rng = stream(derive_seed(seed, &[1]));
    let trace = controlled_flooding(scen.topology.network(), &mix, sig, victim, &cfg, &mut rng)?;

    let (terminus, ambiguous, summary) = match &trace.terminus {
        FloodTerminus::Origin { host } => (
            json!({ "kind": "origin", "node": host.0 }),
            false,
            format!("origin at host {}", host.0),
        ),
        FloodTerminus::MultiSourceAmbiguity { at, links_to } => (
            json!({ "kind": "multi-source", "node": at.0, "links_to": ids(links_to) }),
            true,
            format!("converging sources at router {}", at.0),
        ),
    };
    let report = json!({
        "strategy": "controlled-flooding",
        "path": ids(&trace.path),
        "terminus": terminus,
        "boundary": false,
        "filtered": false,
        "ambiguous": ambiguous,
        "packets_consumed": trace.packets_consumed,
        "ticks_elapsed": trace.bursts,
    });
    let line = format!(
        "controlled-flooding: {summary} after {} bursts ({} flood packets), path {:?}",
        trace.bursts,
        trace.packets_consumed,
        ids(&trace.path)
    );
    Ok((report, line))
}

fn run_itrace(scen: &Scenario, seed: u64) -> Result<(serde_json::Value, String), CliError> {
    let exp = &scen.experiment;
    let victim = required_victim(&scen.topology)?;
    let route = scen
        .topology
        .route()
        .ok_or_else(|| CliError::Run("scenario missing field route".into()))?
        .to_vec();
    let packets = exp.itrace_packets.unwrap_or(1_000_000);
    let gap_cap = exp.gap_cap.unwrap_or(DEFAULT_GAP_CAP);
    let net = scen.topology.network();

    let mut rng = stream(derive_seed(seed, &[2]));
    let messages = run_itrace_episode(net, &route, packets, exp.itrace_probability, &mut rng)?;
    let recon = itrace_reconstruct(net, &messages, victim, gap_cap)?;

    let elements: Vec<serde_json::Value> = recon
        .elements
        .iter()
        .map(|e| match e {
            ReconElement::Known(n) => json!({ "router": n.0 }),
            ReconElement::Bridge { candidates } => {
                json!({ "bridge": candidates.iter().map(|c| ids(c)).collect::<Vec<_>>() })
            }
        })
        .collect();
    let paths: Vec<Vec<u64>> = recon.candidate_paths().iter().map(|p| ids(p)).collect();
    let ambiguous = paths.len() > 1;
    let report = json!({
        "strategy": "itrace",
        "complete": recon.complete,
        "attacker": recon.attacker.map(|n| n.0),
        "elements": elements,
        "paths": paths,
        "messages": messages.len(),
        "rejected": recon.rejected,
        "boundary": false,
        "ambiguous": ambiguous,
        "packets_consumed": packets,
        "ticks_elapsed": packets,
    });
    let line = if recon.complete {
        format!(
            "itrace: complete ({} candidate path(s)) from {} messages over {packets} packets",
            paths.len(),
            messages.len()
        )
    } else {
        format!("itrace: incomplete after {} messages over {packets} packets", messages.len())
    };
    Ok((report, line))
}
