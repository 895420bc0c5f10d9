//! End-to-end acceptance checks, one test per numbered criterion:
//! analytic tables, Monte-Carlo agreement, convergence trends, the
//! cross-domain reference transcript, digest-store error rates, sampled
//! message reconstruction, hop-by-hop tracing, and byte-level
//! determinism of the binary. Each test prints
//! `[acceptance] criterion N: PASS` once its checks hold.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use tracelab_core::convergence::{
    convergence_cell, convergence_sweep, optimal_marking_probability, ConvergenceCriteria,
};
use tracelab_core::legacy::{
    input_debugging, itrace_reconstruct, run_itrace_episode, AttackFlow, AttackSignature,
    BackgroundFlow, DebugConfig, DebugTerminus, LegacyError, TrafficMix, DEFAULT_GAP_CAP,
};
use tracelab_core::ppm::{
    path_probabilities, survival_probability, surviving_mark, threshold_marking_probability,
};
use tracelab_core::rng::{derive_seed, stream};
use tracelab_core::spie::{DigestStore, PacketIdentity};
use tracelab_core::topology::{
    build_linear_path, linear_router, AsId, HostNode, Network, NodeId, RouterNode,
    LINEAR_ATTACKER, LINEAR_VICTIM,
};

const BASE_SEED: u64 = 42;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tracelab"));
    c.env_remove("TRACELAB_OUT_DIR");
    c
}

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/fig10.topo")
}

#[test]
fn survival_table_matches_the_closed_form_and_monte_carlo() {
    let start = Instant::now();
    const PACKETS: u64 = 100_000;
    const HOPS: u32 = 6;
    for tenths in 1..=9u32 {
        let p = f64::from(tenths) / 10.0;
        for d in 1..=HOPS {
            let analytic = survival_probability(p, d).unwrap();
            let closed_form = p * (1.0 - p).powf(f64::from(d - 1));
            assert_eq!(analytic, closed_form, "survival formula at p={p} d={d}");
        }

        let scenario = build_linear_path(HOPS, p).unwrap();
        let probs = path_probabilities(&scenario.network, &scenario.path).unwrap();
        let mut rng = stream(derive_seed(BASE_SEED, &[1, p.to_bits()]));
        // probs is in forwarding order: index 0 is the router HOPS hops
        // from the victim.
        let mut counts = [0u64; HOPS as usize];
        for _ in 0..PACKETS {
            if let Some(mark) = surviving_mark(&probs, &mut rng) {
                let i = probs.iter().position(|&(id, _)| id == mark).unwrap();
                counts[i] += 1;
            }
        }
        for d in 1..=HOPS {
            let q = survival_probability(p, d).unwrap();
            let observed = counts[(HOPS - d) as usize] as f64 / PACKETS as f64;
            let se = (q * (1.0 - q) / PACKETS as f64).sqrt();
            assert!(
                (observed - q).abs() <= 3.0 * se,
                "monte carlo column at p={p} d={d}: observed {observed}, analytic {q}, se {se}"
            );
        }
    }
    assert!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
    println!("[acceptance] criterion 1: PASS");
}

#[test]
fn threshold_column_matches_the_closed_form_and_decreases() {
    let start = Instant::now();
    let mut previous = f64::INFINITY;
    for n in 1..=25u32 {
        let threshold = threshold_marking_probability(n, 0.99).unwrap();
        let closed_form = 1.0 - 0.01f64.powf(1.0 / f64::from(n));
        // The library evaluates the base as 1 - confidence, which sits a
        // few ulps from the 0.01 literal; allow that wobble and nothing
        // more.
        assert!(
            ulps_apart(threshold, closed_form) <= 4,
            "n={n}: {threshold:e} vs closed form {closed_form:e}"
        );
        assert!(threshold < previous, "threshold not strictly decreasing at n={n}");
        previous = threshold;
    }
    // The n = 1 endpoint is the confidence itself and survives exactly.
    assert_eq!(threshold_marking_probability(1, 0.99).unwrap(), 0.99);
    // The n = 2 endpoint cannot land on the decimal 0.9 exactly: the
    // nearest double to 0.99 is below it, and 1 - sqrt(1 - that) has a
    // true value 0.6 ulp under 0.9, so even a correctly rounded
    // evaluation returns the double one ulp below. Anything past that
    // one ulp is a real regression.
    assert!(ulps_apart(threshold_marking_probability(2, 0.99).unwrap(), 0.9) <= 1);
    assert!(start.elapsed() < Duration::from_secs(1), "took {:?}", start.elapsed());
    println!("[acceptance] criterion 2: PASS");
}

fn ulps_apart(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64).abs_diff(b.to_bits() as i64)
}

#[test]
fn convergence_sweep_shows_the_documented_tradeoffs() {
    let start = Instant::now();
    let hop_counts = [3u32, 6, 9, 12, 15, 18];
    let p_grid = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
    let cells = convergence_sweep(
        &hop_counts,
        &p_grid,
        500,
        ConvergenceCriteria::default(),
        1_000_000,
        0.95,
        BASE_SEED,
    )
    .unwrap();
    assert!(start.elapsed() < Duration::from_secs(600), "took {:?}", start.elapsed());

    let mut violations = Vec::new();
    let mut previous_min: Option<f64> = None;
    let mut previous_best_p: Option<f64> = None;
    for &n in &hop_counts {
        let means: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.hop_count == n)
            .map(|c| {
                let mean = c.mean_packets.expect("a cell exhausted every trial");
                (c.marking_probability, mean)
            })
            .collect();
        assert_eq!(means.len(), p_grid.len());
        let min = means.iter().map(|&(_, m)| m).fold(f64::INFINITY, f64::min);

        // (a) U-shape: both ends of the probability grid are at least
        // 20% above the grid minimum.
        for (end, mean) in [("left", means[0].1), ("right", means[means.len() - 1].1)] {
            if mean < 1.2 * min {
                violations.push(format!(
                    "hops {n}: {end} grid extreme mean {mean:.1} is not 20% above the grid minimum {min:.1}"
                ));
            }
        }

        // (b) the minimum mean grows strictly with the hop count.
        if let Some(prev) = previous_min {
            if min <= prev {
                violations.push(format!(
                    "hops {n}: minimum mean {min:.1} does not exceed the previous hop count's {prev:.1}"
                ));
            }
        }
        previous_min = Some(min);

        // (c) the optimal marking probability never grows with the hop
        // count.
        let best_p = optimal_marking_probability(&cells, n).unwrap();
        if let Some(prev) = previous_best_p {
            if best_p > prev {
                violations.push(format!(
                    "hops {n}: optimal p {best_p} exceeds the previous hop count's {prev}"
                ));
            }
        }
        previous_best_p = Some(best_p);
    }
    assert!(violations.is_empty(), "sweep trends violated:\n{}", violations.join("\n"));
    println!("[acceptance] criterion 3: PASS");
}

/// Expected packets to convergence for a two-router path, by dynamic
/// program over the tally Markov chain.
///
/// Per packet the victim sees the near router's mark with probability
/// a1 = p, the far router's with a2 = p(1-p), and nothing otherwise.
/// The chain tracks d = c1 - c2 clamped to ±80 and whether c2 >= 1;
/// convergence is d >= 1 with c2 >= 1, and E[T] = sum over t of
/// P(T > t). The upper clamp is exact (absorption only waits on the
/// next far-router mark there); the lower clamp holds under (1-p)^80
/// of the mass for the probed p values.
fn two_hop_oracle(p: f64) -> f64 {
    const CLAMP: i64 = 80;
    let a1 = p;
    let a2 = p * (1.0 - p);
    let a0 = 1.0 - a1 - a2;
    let idx = |d: i64, far_seen: bool| ((d + CLAMP) as usize) * 2 + usize::from(far_seen);
    let size = idx(CLAMP, true) + 1;
    let mut mass = vec![0.0f64; size];
    mass[idx(0, false)] = 1.0;
    let mut alive = 1.0;
    let mut expected = 0.0;
    for _ in 0..1_000_000 {
        expected += alive;
        let mut next = vec![0.0f64; size];
        for d in -CLAMP..=CLAMP {
            for far_seen in [false, true] {
                let m = mass[idx(d, far_seen)];
                if m == 0.0 {
                    continue;
                }
                next[idx((d + 1).min(CLAMP), far_seen)] += m * a1;
                next[idx((d - 1).max(-CLAMP), true)] += m * a2;
                next[idx(d, far_seen)] += m * a0;
            }
        }
        for d in 1..=CLAMP {
            next[idx(d, true)] = 0.0;
        }
        alive = next.iter().sum();
        mass = next;
        if alive < 1e-13 {
            break;
        }
    }
    expected
}

#[test]
fn short_path_convergence_matches_independent_oracles() {
    // One router: convergence is the first mark, geometric with mean 1/p.
    for &p in &[0.1, 0.5, 0.9] {
        let cell = convergence_cell(
            1,
            p,
            10_000,
            ConvergenceCriteria::default(),
            1_000_000,
            0.95,
            BASE_SEED,
        )
        .unwrap();
        assert_eq!(cell.exhausted, 0, "p={p}");
        let ci = cell.interval.expect("two converged trials give an interval");
        let truth = 1.0 / p;
        assert!(
            ci.lo <= truth && truth <= ci.hi,
            "p={p}: CI [{:.4}, {:.4}] misses {truth:.4}",
            ci.lo,
            ci.hi
        );
    }

    // Two routers: Monte Carlo against the exact chain.
    for &p in &[0.3, 0.5] {
        let oracle = two_hop_oracle(p);
        let cell = convergence_cell(
            2,
            p,
            10_000,
            ConvergenceCriteria::default(),
            1_000_000,
            0.95,
            BASE_SEED,
        )
        .unwrap();
        assert_eq!(cell.exhausted, 0, "p={p}");
        let mean = cell.mean_packets.unwrap();
        let relative = (mean - oracle).abs() / oracle;
        assert!(
            relative <= 0.02,
            "p={p}: monte carlo mean {mean:.4} vs oracle {oracle:.4} ({:.2}% off)",
            relative * 100.0
        );
    }
    println!("[acceptance] criterion 4: PASS");
}

#[test]
fn cross_domain_trace_reproduces_the_reference_transcript() {
    let golden = std::fs::read(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fig10_transcript.txt"),
    )
    .unwrap();
    let mut reports = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("trace.txt");
        let run = bin()
            .args(["spie-trace", "--topology"])
            .arg(fixture_path())
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1], "consecutive runs differ");
    assert_eq!(reports[0], golden, "run does not match the bundled transcript");

    let text = String::from_utf8(reports.remove(0)).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 9, "{text}");
    // The victim's AS asks its one-hop deployed neighbour first and is
    // refused.
    assert!(lines[0].starts_with("QUERY 1 7 "), "{}", lines[0]);
    assert_eq!(lines[1], "NEG 7");
    // Of the two-hop candidates, AS 3 is on the path and reports its own
    // one- and two-hop deployed neighbourhoods.
    assert!(lines[2].starts_with("QUERY 1 3 "), "{}", lines[2]);
    assert!(lines[3].starts_with("POS 3 "), "{}", lines[3]);
    assert!(lines[3].contains("one_hop=4,10"), "{}", lines[3]);
    assert!(lines[3].contains("two_hop=5,7"), "{}", lines[3]);
    assert!(lines[4].starts_with("QUERY 1 4 "), "{}", lines[4]);
    assert_eq!(lines[5], "NEG 4");
    // AS 10 answers positive and flags that the path goes no further.
    assert!(lines[6].starts_with("QUERY 1 10 "), "{}", lines[6]);
    assert!(lines[7].starts_with("POS 10 "), "{}", lines[7]);
    assert!(lines[7].ends_with(" origin"), "{}", lines[7]);
    // The grafted route names the non-deployed transit AS as a gap.
    assert_eq!(lines[8], "PATH AS1[11,12] GAP AS3[31,32,33] *AS10[101,102]");
    println!("[acceptance] criterion 5: PASS");
}

#[test]
fn digest_store_error_rates_match_theory() {
    let mut rng = stream(derive_seed(BASE_SEED, &[6]));
    let mut pool: BTreeSet<u32> = BTreeSet::new();
    while pool.len() < 204_000 {
        pool.insert(rng.gen::<u32>());
    }
    let pool: Vec<u32> = pool.into_iter().collect();

    // No false negatives, whatever the load: every one of 10^5 inserted
    // digests answers positive.
    let mut big = DigestStore::with_defaults();
    for &digest in &pool[..100_000] {
        big.insert(digest);
    }
    assert!(pool[..100_000].iter().all(|&digest| big.contains(digest)));

    // False positives at the reference geometry: 2^16 bits, 4 hashes,
    // 4000 inserted digests.
    let mut store = DigestStore::new(16, 4).unwrap();
    for &digest in &pool[100_000..104_000] {
        store.insert(digest);
    }
    assert!(pool[100_000..104_000].iter().all(|&digest| store.contains(digest)));
    let probes = &pool[104_000..204_000];
    let hits = probes.iter().filter(|&&digest| store.contains(digest)).count();
    let measured = hits as f64 / probes.len() as f64;
    let predicted = (1.0 - (-4.0 * 4000.0 / 65536.0f64).exp()).powi(4);
    let relative = (measured - predicted).abs() / predicted;
    assert!(
        relative <= 0.30,
        "false-positive rate {measured:.6} vs predicted {predicted:.6} ({:.1}% off)",
        relative * 100.0
    );
    println!("[acceptance] criterion 6: PASS");
}

#[test]
fn itrace_sampling_is_binomial_and_reconstruction_recovers_paths() {
    // Sampling: per-router message counts over one million packets stay
    // within three binomial standard deviations of the expectation.
    let q = 5.0e-5;
    let packets = 1_000_000u64;
    let scenario = build_linear_path(12, 0.0).unwrap();
    let walk = scenario.path.walk();
    let mut rng = stream(derive_seed(BASE_SEED, &[7]));
    let messages = run_itrace_episode(&scenario.network, &walk, packets, Some(q), &mut rng).unwrap();
    let mut counts: BTreeMap<NodeId, u64> = BTreeMap::new();
    for message in &messages {
        *counts.entry(message.router).or_insert(0) += 1;
    }
    let mean = packets as f64 * q;
    let sigma = (mean * (1.0 - q)).sqrt();
    for d in 1..=12 {
        let router = linear_router(d);
        let count = counts.get(&router).copied().unwrap_or(0) as f64;
        assert!(
            (count - mean).abs() <= 3.0 * sigma,
            "router {router}: {count} messages vs mean {mean} (sigma {sigma:.2})"
        );
    }

    // Reconstruction: every router emitting, ten expected messages each;
    // the ground-truth path must come back in at least 99 of 100 runs.
    let mut recovered = 0;
    for i in 0..100u64 {
        let hops = 4 + (i % 9) as u32;
        let scenario = build_linear_path(hops, 0.0).unwrap();
        let walk = scenario.path.walk();
        let mut rng = stream(derive_seed(BASE_SEED, &[7, i]));
        let messages =
            run_itrace_episode(&scenario.network, &walk, 200_000, Some(q), &mut rng).unwrap();
        let recon =
            itrace_reconstruct(&scenario.network, &messages, LINEAR_VICTIM, DEFAULT_GAP_CAP)
                .unwrap();
        let truth = scenario.path.routers().to_vec();
        if recon.complete
            && recon.attacker == Some(LINEAR_ATTACKER)
            && recon.candidate_paths() == vec![truth]
        {
            recovered += 1;
        }
    }
    assert!(recovered >= 99, "only {recovered} of 100 reconstructions recovered the path");
    println!("[acceptance] criterion 7: PASS");
}

/// A line of `hops` routers between victim host 1 and attacker host 2,
/// with every router past `home_hops` in a second domain. Returns the
/// network, the routers victim side first, and the attacker-to-victim
/// walk.
fn split_domain_line(hops: u32, home_hops: usize) -> (Network, Vec<NodeId>, Vec<NodeId>) {
    let mut net = Network::new();
    net.add_host(HostNode { id: NodeId(1), domain: AsId(1) }).unwrap();
    net.add_host(HostNode { id: NodeId(2), domain: AsId(2) }).unwrap();
    let mut routers = Vec::new();
    for d in 1..=hops as usize {
        let domain = if d > home_hops { AsId(2) } else { AsId(1) };
        net.add_router(RouterNode::new(NodeId(100 + d as u64), domain)).unwrap();
        routers.push(NodeId(100 + d as u64));
    }
    net.add_link(NodeId(1), routers[0]).unwrap();
    for pair in routers.windows(2) {
        net.add_link(pair[0], pair[1]).unwrap();
    }
    net.add_link(*routers.last().unwrap(), NodeId(2)).unwrap();
    let mut walk = vec![NodeId(2)];
    walk.extend(routers.iter().rev());
    walk.push(NodeId(1));
    (net, routers, walk)
}

#[test]
fn hop_by_hop_debugging_matches_ground_truth() {
    let cfg = DebugConfig::default();

    // Fifty live single-domain flows: the exact path comes back.
    let mut rng = stream(derive_seed(BASE_SEED, &[8]));
    for i in 0..50u64 {
        let hops = rng.gen_range(3..=10u32);
        let scenario = build_linear_path(hops, 0.0).unwrap();
        let walk = scenario.path.walk();
        let mix = TrafficMix {
            attack: vec![AttackFlow {
                identity: PacketIdentity::from_seed(derive_seed(BASE_SEED, &[8, i])),
                route: walk.clone(),
                rate: 0.5 + 19.5 * rng.gen::<f64>(),
                starts_at: rng.gen_range(0..cfg.window),
                ends_at: None,
            }],
            background: vec![BackgroundFlow {
                identity: PacketIdentity::from_seed(derive_seed(BASE_SEED, &[8, i, 1])),
                route: walk.clone(),
                rate: 0.5 + 4.5 * rng.gen::<f64>(),
            }],
        };
        let signature = AttackSignature::exact(&mix.attack[0].identity);
        let trace =
            input_debugging(&scenario.network, &mix, signature, LINEAR_VICTIM, &cfg).unwrap();
        assert_eq!(trace.path, scenario.path.routers(), "scenario {i} (hops {hops})");
        assert_eq!(
            trace.terminus,
            DebugTerminus::Origin { host: LINEAR_ATTACKER },
            "scenario {i} (hops {hops})"
        );
    }

    // A foreign domain in the middle stops the climb at the boundary,
    // reporting the partial path up to it.
    for (hops, home_hops) in [(4, 2), (5, 4), (6, 3), (8, 5)] {
        let (net, routers, walk) = split_domain_line(hops, home_hops);
        let mix = TrafficMix {
            attack: vec![AttackFlow {
                identity: PacketIdentity::from_seed(derive_seed(BASE_SEED, &[8, hops as u64, home_hops as u64])),
                route: walk,
                rate: 4.0,
                starts_at: 0,
                ends_at: None,
            }],
            background: Vec::new(),
        };
        let signature = AttackSignature::exact(&mix.attack[0].identity);
        let trace = input_debugging(&net, &mix, signature, NodeId(1), &cfg).unwrap();
        assert_eq!(trace.path, &routers[..home_hops], "hops {hops} home {home_hops}");
        assert_eq!(
            trace.terminus,
            DebugTerminus::Boundary { router: routers[home_hops] },
            "hops {hops} home {home_hops}"
        );
    }

    // A flow that dies mid-climb is reported as ended, not traced.
    let scenario = build_linear_path(5, 0.0).unwrap();
    let mix = TrafficMix {
        attack: vec![AttackFlow {
            identity: PacketIdentity::from_seed(derive_seed(BASE_SEED, &[8, 99])),
            route: scenario.path.walk(),
            rate: 4.0,
            starts_at: 0,
            ends_at: Some(cfg.window / 2),
        }],
        background: Vec::new(),
    };
    let signature = AttackSignature::exact(&mix.attack[0].identity);
    let err = input_debugging(&scenario.network, &mix, signature, LINEAR_VICTIM, &cfg).unwrap_err();
    assert!(matches!(err, LegacyError::AttackEnded { .. }), "{err}");
    println!("[acceptance] criterion 8: PASS");
}

/// A one-domain line with one live flow and every experiment knob set,
/// small enough for fast runs.
const SMALL_SCENARIO: &str = "\
horizon 1
as 1 deployed
router 11 as=1 mark=0 itrace=0.2
router 12 as=1 mark=0 itrace=0.2
router 13 as=1 mark=0 itrace=0.2
host 1 as=1
host 2 as=1
link 1 11
link 11 12
link 12 13
link 13 2
attacker 2
victim 1
route 2,13,12,11,1
flow attack id=40 rate=4 route=2,13,12,11,1
signature id=40
window 100
floodrate 8
probes 100
itrace q=0.2 packets=400
gapcap 2
";

#[test]
fn every_subcommand_is_byte_deterministic() {
    let fig10 = fixture_path().to_str().unwrap().to_owned();
    let input_dir = tempfile::tempdir().unwrap();
    let small_path = input_dir.path().join("line.topo");
    std::fs::write(&small_path, SMALL_SCENARIO).unwrap();
    let small = small_path.to_str().unwrap().to_owned();

    let cases: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (
            vec!["mark-prob", "--p-grid", "0.2,0.7", "--hops", "4", "--trials", "20000", "--seed", "11"],
            vec!["mark-prob.csv"],
        ),
        (vec!["threshold", "--hops", "12"], vec!["threshold.csv"]),
        (
            vec!["convergence", "--hops", "3,4", "--p-grid", "0.1,0.3", "--trials", "40", "--seed", "7"],
            vec!["convergence.csv", "convergence.panels.csv"],
        ),
        (vec!["spie-trace", "--topology", &fig10], vec!["spie-trace.txt"]),
        (
            vec!["strategy", "input-debugging", "--topology", &small, "--seed", "9"],
            vec!["strategy-input-debugging.json"],
        ),
        (
            vec!["strategy", "controlled-flooding", "--topology", &small, "--seed", "9"],
            vec!["strategy-controlled-flooding.json"],
        ),
        (
            vec!["strategy", "itrace", "--topology", &small, "--seed", "9"],
            vec!["strategy-itrace.json"],
        ),
    ];
    for (args, files) in &cases {
        let mut rounds: Vec<Vec<Vec<u8>>> = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let run = bin().args(args).env("TRACELAB_OUT_DIR", dir.path()).output().unwrap();
            assert!(run.status.success(), "{args:?}: {}", String::from_utf8_lossy(&run.stderr));
            rounds.push(
                files.iter().map(|name| std::fs::read(dir.path().join(name)).unwrap()).collect(),
            );
        }
        assert_eq!(rounds[0], rounds[1], "re-run changed the bytes of {files:?} for {args:?}");
    }
    println!("[acceptance] criterion 9: PASS");
}
