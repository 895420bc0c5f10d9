//! Deterministic building blocks for simulating IP traceback.
//!
//! The crate models the three families of source-identification techniques
//! that operate on spoofed traffic:
//!
//! * [`ppm`] — probabilistic packet marking: routers stamp a single node
//!   field into forwarded packets and the victim rebuilds the path from
//!   mark frequencies.
//! * [`spie`] — hash-based traceback: routers keep Bloom-filter digests of
//!   forwarded packets and per-AS controllers answer single-packet path
//!   queries, grafting cross-AS results together.
//! * [`legacy`] — link-testing strategies that predate marking and
//!   digesting: hop-by-hop input debugging, controlled link flooding, and
//!   sampled ICMP traceback messages.
//!
//! [`topology`] supplies the network and AS-level scenario types the
//! simulations run on, [`convergence`] measures how many marked packets a
//! victim needs before path reconstruction stabilises, and [`stats`] holds
//! the small numerical toolkit (Student-t intervals) the experiment
//! harness needs.
//!
//! Everything in the crate is deterministic: all randomness flows through
//! caller-supplied ChaCha streams (see [`rng`]), so a fixed seed
//! reproduces every simulated packet bit-for-bit. The crate is `no_std`
//! (with `alloc`) and does no IO; file formats and the command-line
//! harness live in the companion `tracelab-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod convergence;
pub mod legacy;
pub mod ppm;
pub mod rng;
pub mod spie;
pub mod stats;
pub mod topology;
