//! The framed-rectangle Markov chain and the exact computation of `Π(p)`.
//!
//! The chain lives on framed rectangles `F(a,b;c,d;s)`. Projecting onto
//! `(width, height, frame state)` keeps it Markov, and since every transition
//! either raises the semi-perimeter `φ = w + h` or keeps `φ` and raises the
//! frame-state rank, the hitting probability of a target semi-perimeter is a
//! level-order dynamic program.

use crate::error::{Error, Result};
use crate::numerics::{ln_add, LogProb};
use crate::special_functions::{f_raw, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;

/// Frame state of a framed rectangle. `2''` only occurs in the
/// two-neighbour chain.
///
/// The declaration order sorts states by rank and is the canonical order
/// used for reductions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameState {
    S0,
    S1,
    S1p,
    S1pp,
    S2,
    S2p,
    S2pp,
    S3,
    S4,
}

impl FrameState {
    pub const ALL: [FrameState; 9] = [
        FrameState::S0,
        FrameState::S1,
        FrameState::S1p,
        FrameState::S1pp,
        FrameState::S2,
        FrameState::S2p,
        FrameState::S2pp,
        FrameState::S3,
        FrameState::S4,
    ];

    /// States of the Fröbose chain.
    pub const FROBOSE: [FrameState; 8] = [
        FrameState::S0,
        FrameState::S1,
        FrameState::S1p,
        FrameState::S1pp,
        FrameState::S2,
        FrameState::S2p,
        FrameState::S3,
        FrameState::S4,
    ];

    /// Number of buffers in the frame.
    pub fn rank(self) -> u8 {
        use FrameState::*;
        match self {
            S0 => 0,
            S1 | S1p | S1pp => 1,
            S2 | S2p | S2pp => 2,
            S3 => 3,
            S4 => 4,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        use FrameState::*;
        match self {
            S0 => "0",
            S1 => "1",
            S1p => "1'",
            S1pp => "1''",
            S2 => "2",
            S2p => "2'",
            S2pp => "2''",
            S3 => "3",
            S4 => "4",
        }
    }

    pub fn parse(label: &str) -> Option<FrameState> {
        FrameState::ALL.into_iter().find(|s| s.label() == label)
    }
}

impl fmt::Display for FrameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Integer affine form `a·w + b·h + c` in the rectangle dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lin {
    pub a: i32,
    pub b: i32,
    pub c: i32,
}

impl Lin {
    pub const ZERO: Lin = Lin { a: 0, b: 0, c: 0 };

    #[inline]
    pub fn eval(self, w: u32, h: u32) -> i64 {
        self.a as i64 * w as i64 + self.b as i64 * h as i64 + self.c as i64
    }
}

impl fmt::Display for Lin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (k, v) in [(self.a, "a"), (self.b, "b")] {
            match k {
                0 => {}
                1 => parts.push(v.to_string()),
                k => parts.push(format!("{k}{v}")),
            }
        }
        if self.c != 0 || parts.is_empty() {
            parts.push(self.c.to_string());
        }
        f.write_str(&parts.join("+"))
    }
}

/// Symbolic `-log π` of a transition:
/// `k·log(1/p) + Σ f(q·lᵢ) + q·l - [log(4-3p)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cost {
    pub log_inv_p: u8,
    pub f_args: &'static [Lin],
    pub q_lin: Lin,
    pub minus_log_4_minus_3p: bool,
}

impl Cost {
    /// Evaluates the cost with `f(q·n)` supplied by `fq`, so table-driven and
    /// direct evaluation share one arithmetic sequence.
    #[inline]
    pub(crate) fn eval_with(
        &self,
        model: &ModelParams,
        w: u32,
        h: u32,
        fq: impl Fn(i64) -> f64,
    ) -> f64 {
        let mut cost = self.log_inv_p as f64 * model.log_inv_p();
        for l in self.f_args {
            cost += fq(l.eval(w, h));
        }
        let n = self.q_lin.eval(w, h);
        if n != 0 {
            cost += model.q() * n as f64;
        }
        if self.minus_log_4_minus_3p {
            cost -= (4.0 - 3.0 * model.p()).ln();
        }
        cost
    }

    pub fn eval(&self, model: &ModelParams, w: u32, h: u32) -> f64 {
        self.eval_with(model, w, h, |n| f_raw(model.q() * n as f64))
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        match self.log_inv_p {
            0 => {}
            1 => parts.push("log(1/p)".to_string()),
            k => parts.push(format!("{k}log(1/p)")),
        }
        for l in self.f_args {
            parts.push(format!("f(q({l}))"));
        }
        if self.q_lin != Lin::ZERO {
            parts.push(format!("q({})", self.q_lin));
        }
        let mut s = if parts.is_empty() { "0".to_string() } else { parts.join("+") };
        if self.minus_log_4_minus_3p {
            s.push_str("-log(4-3p)");
        }
        f.write_str(&s)
    }
}

/// One row of a transition table: `F(0,0;a,b;src) → F(-α,-β;a+γ,b+δ;dst)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransitionRule {
    pub src: FrameState,
    pub dst: FrameState,
    pub alpha: u8,
    pub beta: u8,
    pub gamma: u8,
    pub delta: u8,
    pub cost: Cost,
}

impl TransitionRule {
    #[inline]
    pub fn dw(&self) -> u32 {
        (self.alpha + self.gamma) as u32
    }

    #[inline]
    pub fn dh(&self) -> u32 {
        (self.beta + self.delta) as u32
    }

    #[inline]
    pub fn dphi(&self) -> u32 {
        self.dw() + self.dh()
    }
}

const fn lin(a: i32, b: i32, c: i32) -> Lin {
    Lin { a, b, c }
}

const NO_F: &[Lin] = &[];
const F_A: &[Lin] = &[lin(1, 0, 0)];
const F_B: &[Lin] = &[lin(0, 1, 0)];

const fn cost(log_inv_p: u8, f_args: &'static [Lin], q_lin: Lin) -> Cost {
    Cost { log_inv_p, f_args, q_lin, minus_log_4_minus_3p: false }
}

const fn rule(src: FrameState, dst: FrameState, o: [u8; 4], cost: Cost) -> TransitionRule {
    TransitionRule { src, dst, alpha: o[0], beta: o[1], gamma: o[2], delta: o[3], cost }
}

use FrameState::*;

const QA: Lin = lin(1, 0, 0);
const QB: Lin = lin(0, 1, 0);
const Q1: Lin = lin(0, 0, 1);
const Q2: Lin = lin(0, 0, 2);

/// Transition table of the local Fröbose chain, in the row order of the
/// paper: buffer creations, loops, single, double and triple deletions.
pub static FROBOSE_TABLE: [TransitionRule; 28] = [
    rule(S0, S1, [0, 0, 0, 0], cost(0, NO_F, QB)),
    rule(S1, S2, [0, 0, 0, 0], cost(0, NO_F, QA)),
    rule(S2, S3, [0, 0, 0, 0], cost(0, NO_F, QB)),
    rule(S3, S4, [0, 0, 0, 0], cost(0, NO_F, QA)),
    rule(S2p, S3, [0, 0, 0, 0], cost(0, NO_F, QB)),
    rule(S1p, S2p, [0, 0, 0, 0], cost(0, NO_F, QA)),
    rule(S1pp, S2, [0, 0, 0, 0], cost(0, NO_F, QB)),
    rule(S0, S0, [0, 0, 1, 0], cost(0, F_B, Lin::ZERO)),
    rule(S1, S1, [0, 0, 0, 1], cost(0, F_A, Q1)),
    rule(S2, S2, [1, 0, 0, 0], cost(0, F_B, Q1)),
    rule(S3, S3, [0, 1, 0, 0], cost(0, F_A, Q2)),
    rule(S2p, S2p, [0, 0, 1, 0], cost(0, F_B, Q1)),
    rule(S1p, S1p, [0, 0, 0, 1], cost(0, F_A, Q1)),
    rule(S1pp, S1pp, [0, 0, 1, 0], cost(0, F_B, Q1)),
    rule(S4, S4, [0, 0, 0, 0], cost(0, NO_F, Lin::ZERO)),
    rule(S1, S0, [0, 0, 1, 1], cost(1, F_A, Lin::ZERO)),
    rule(S2, S1, [1, 0, 0, 1], cost(1, F_B, Q1)),
    rule(S3, S2, [1, 1, 0, 0], cost(1, F_A, Q2)),
    rule(S3, S2p, [0, 1, 1, 0], cost(1, F_A, Q2)),
    rule(S2p, S1p, [0, 0, 1, 1], cost(1, F_B, Q1)),
    rule(S1p, S0, [1, 0, 0, 1], cost(1, F_A, Lin::ZERO)),
    rule(S1pp, S0, [0, 0, 1, 1], cost(1, F_B, Lin::ZERO)),
    rule(S2, S0, [1, 0, 1, 1], cost(2, F_B, Lin::ZERO)),
    rule(S2p, S0, [1, 0, 1, 1], cost(2, F_B, Lin::ZERO)),
    rule(S3, S1, [1, 1, 0, 1], cost(2, F_A, Q2)),
    rule(S3, S1p, [0, 1, 1, 1], cost(2, F_A, Q2)),
    rule(S3, S1pp, [1, 1, 1, 0], cost(2, F_A, Q2)),
    rule(
        S3,
        S0,
        [1, 1, 1, 1],
        Cost { log_inv_p: 3, f_args: F_A, q_lin: Lin::ZERO, minus_log_4_minus_3p: true },
    ),
];

const F_A1: &[Lin] = &[lin(1, 0, 1)];
const F_B1: &[Lin] = &[lin(0, 1, 1)];
const F_2_A: &[Lin] = &[lin(0, 0, 2), lin(1, 0, 0)];
const F_2_B: &[Lin] = &[lin(0, 0, 2), lin(0, 1, 0)];
const F_A_B2: &[Lin] = &[lin(1, 0, 0), lin(0, 1, 2)];
const F_B_A2: &[Lin] = &[lin(0, 1, 0), lin(1, 0, 2)];

/// The printed excerpt of the local two-neighbour chain: only transitions
/// that contribute to the lower bound, hence sub-stochastic.
pub static TWO_NEIGHBOUR_TABLE: [TransitionRule; 43] = [
    rule(S0, S1, [0, 0, 0, 0], cost(0, NO_F, lin(0, 2, 0))),
    rule(S1, S2, [0, 0, 0, 0], cost(0, NO_F, lin(2, 0, 1))),
    rule(S2, S3, [0, 0, 0, 0], cost(0, NO_F, lin(0, 2, 1))),
    rule(S3, S4, [0, 0, 0, 0], cost(0, NO_F, lin(2, 0, 2))),
    rule(S2p, S3, [0, 0, 0, 0], cost(0, NO_F, lin(0, 2, 1))),
    rule(S1p, S2p, [0, 0, 0, 0], cost(0, NO_F, lin(2, 0, 1))),
    rule(S0, S0, [0, 0, 1, 0], cost(0, F_B, Lin::ZERO)),
    rule(S0, S0, [0, 0, 2, 0], cost(0, F_B, QB)),
    rule(S1, S1, [0, 0, 0, 1], cost(0, F_A, Q2)),
    rule(S1, S1, [0, 0, 0, 2], cost(0, F_A, lin(1, 0, 4))),
    rule(S2, S2, [1, 0, 0, 0], cost(0, F_B, Q2)),
    rule(S2, S2, [2, 0, 0, 0], cost(0, F_B, lin(0, 1, 4))),
    rule(S3, S3, [0, 1, 0, 0], cost(0, F_A, lin(0, 0, 4))),
    rule(S3, S3, [0, 2, 0, 0], cost(0, F_A, lin(1, 0, 8))),
    rule(S2p, S2p, [0, 0, 1, 0], cost(0, F_B, Q2)),
    rule(S2p, S2p, [0, 0, 2, 0], cost(0, F_B, lin(0, 1, 4))),
    rule(S1p, S1p, [0, 0, 0, 1], cost(0, F_A, lin(0, 0, 4))),
    rule(S1p, S1p, [0, 0, 0, 2], cost(0, F_A, lin(1, 0, 8))),
    rule(S4, S4, [0, 0, 0, 0], cost(0, NO_F, Lin::ZERO)),
    rule(S1, S0, [0, 0, 2, 1], cost(1, F_A1, Lin::ZERO)),
    rule(S1, S0, [0, 0, 3, 1], cost(1, F_B1, Q1)),
    rule(S1, S0, [0, 0, 2, 2], cost(0, F_2_A, lin(1, 0, 1))),
    rule(S1, S0, [0, 0, 3, 2], cost(1, F_A_B2, lin(1, 0, 3))),
    rule(S1p, S0, [2, 0, 0, 1], cost(1, F_A1, Lin::ZERO)),
    rule(S1p, S0, [3, 0, 0, 1], cost(1, F_B1, Q1)),
    rule(S1p, S0, [2, 0, 0, 2], cost(0, F_2_A, lin(1, 0, 1))),
    rule(S1p, S0, [3, 0, 0, 2], cost(1, F_A_B2, lin(1, 0, 3))),
    rule(S2, S1, [1, 0, 0, 2], cost(1, F_B1, lin(0, 0, 3))),
    rule(S2, S1, [1, 0, 0, 3], cost(1, F_A1, lin(0, 0, 6))),
    rule(S2, S1, [2, 0, 0, 2], cost(0, F_2_B, lin(0, 1, 4))),
    rule(S2, S1, [2, 0, 0, 3], cost(1, F_B_A2, lin(0, 1, 8))),
    rule(S2p, S1p, [0, 0, 1, 2], cost(1, F_B1, lin(0, 0, 3))),
    rule(S2p, S1p, [0, 0, 1, 3], cost(1, F_A1, lin(0, 0, 6))),
    rule(S2p, S1p, [0, 0, 2, 2], cost(0, F_2_B, lin(0, 1, 4))),
    rule(S2p, S1p, [0, 0, 2, 3], cost(1, F_B_A2, lin(0, 1, 8))),
    rule(S3, S2p, [0, 1, 2, 0], cost(1, F_A1, lin(0, 0, 5))),
    rule(S3, S2p, [0, 1, 3, 0], cost(1, F_B1, lin(0, 0, 8))),
    rule(S3, S2p, [0, 2, 2, 0], cost(0, F_2_A, lin(1, 0, 8))),
    rule(S3, S2p, [0, 2, 3, 0], cost(1, F_A_B2, lin(1, 0, 12))),
    rule(S3, S2, [2, 1, 0, 0], cost(1, F_A1, lin(0, 0, 5))),
    rule(S3, S2, [3, 1, 0, 0], cost(1, F_B1, lin(0, 0, 8))),
    rule(S3, S2, [2, 2, 0, 0], cost(0, F_2_A, lin(1, 0, 8))),
    rule(S3, S2, [3, 2, 0, 0], cost(1, F_A_B2, lin(1, 0, 12))),
];

/// Which transition table drives the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainTable {
    Frobose,
    /// The sub-stochastic two-neighbour excerpt; the resulting hitting
    /// probability is a lower bound, not the two-neighbour `Π(p)`.
    TwoNeighbourExcerpt,
}

impl ChainTable {
    pub fn rules(self) -> &'static [TransitionRule] {
        match self {
            ChainTable::Frobose => &FROBOSE_TABLE,
            ChainTable::TwoNeighbourExcerpt => &TWO_NEIGHBOUR_TABLE,
        }
    }

    pub fn states(self) -> &'static [FrameState] {
        match self {
            ChainTable::Frobose => &FrameState::FROBOSE,
            ChainTable::TwoNeighbourExcerpt => &FrameState::ALL,
        }
    }

    fn transitions(self, s: FrameState) -> Result<Vec<TransitionRule>> {
        if !self.states().contains(&s) {
            return Err(Error::UnknownFrameState(s.label()));
        }
        Ok(self.rules().iter().filter(|r| r.src == s).copied().collect())
    }
}

/// Table rows leaving `s` in the Fröbose chain, in table order.
pub fn frobose_transitions(s: FrameState) -> Result<Vec<TransitionRule>> {
    ChainTable::Frobose.transitions(s)
}

/// Table rows leaving `s` in the two-neighbour excerpt, in table order.
pub fn two_neighbour_transitions(s: FrameState) -> Result<Vec<TransitionRule>> {
    ChainTable::TwoNeighbourExcerpt.transitions(s)
}

/// `log π` of `rule` from a `w × h` framed rectangle.
pub fn transition_log_prob(rule: &TransitionRule, w: u32, h: u32, model: &ModelParams) -> LogProb {
    LogProb::from_ln(-rule.cost.eval(model, w, h))
}

/// State of the chain projected onto dimensions and frame state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProjectedChainState {
    pub w: u32,
    pub h: u32,
    pub s: FrameState,
}

impl ProjectedChainState {
    pub const START: ProjectedChainState = ProjectedChainState { w: 1, h: 1, s: FrameState::S0 };

    #[inline]
    pub fn phi(&self) -> u32 {
        self.w + self.h
    }

    pub fn apply(&self, rule: &TransitionRule) -> ProjectedChainState {
        ProjectedChainState { w: self.w + rule.dw(), h: self.h + rule.dh(), s: rule.dst }
    }
}

/// How reaching the threshold semi-perimeter `L` is counted, given that
/// a single step may raise `φ` by up to four.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Convention {
    /// Some state has `φ = L` exactly.
    HitExactly,
    /// Some state has `φ ≥ L`.
    HitAtLeast,
}

impl Convention {
    pub fn label(self) -> &'static str {
        match self {
            Convention::HitExactly => "exact",
            Convention::HitAtLeast => "at-least",
        }
    }

    #[inline]
    fn counts(self, phi: u32, threshold: u32) -> bool {
        match self {
            Convention::HitExactly => phi == threshold,
            Convention::HitAtLeast => phi >= threshold,
        }
    }
}

/// The shipped default convention (see the README for how it was chosen).
pub const DEFAULT_CONVENTION: Convention = Convention::HitExactly;

/// `⌈2 log(1/p) / p⌉` with the natural logarithm.
pub fn default_threshold(model: &ModelParams) -> u32 {
    (2.0 * model.log_inv_p() / model.p()).ceil() as u32
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainParams {
    pub model: ModelParams,
    pub threshold: u32,
    pub convention: Convention,
}

impl ChainParams {
    /// Default threshold and convention for `p`.
    pub fn for_model(model: ModelParams) -> Self {
        ChainParams { model, threshold: default_threshold(&model), convention: DEFAULT_CONVENTION }
    }
}

/// Knobs of the dynamic program that do not change its meaning, except
/// pruning, which is off by default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpOptions {
    pub table: ChainTable,
    pub threads: usize,
    /// States whose log-probability falls below this value are dropped.
    pub prune_below: Option<f64>,
    pub memory_cap_bytes: u64,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            table: ChainTable::Frobose,
            threads: 1,
            prune_below: None,
            memory_cap_bytes: 4 << 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiResult {
    pub log_hit_prob: LogProb,
    /// `log Π = -log_hit_prob / 2`.
    pub log_pi: f64,
}

impl PiResult {
    fn from_hit(hit: LogProb) -> Self {
        let log_pi = -hit.ln() / 2.0;
        // report Π = 1 as 0.0 rather than -0.0
        PiResult { log_hit_prob: hit, log_pi: if log_pi == 0.0 { 0.0 } else { log_pi } }
    }
}

/// Below this many widths a level is processed without rayon; the order of
/// every reduction is the same either way.
const PARALLEL_MIN_WIDTH: u32 = 192;

/// Incoming rule with the source state index cached.
#[derive(Clone, Copy)]
struct Incoming {
    rule: TransitionRule,
    src: usize,
}

struct Plan {
    /// Stored (non-absorbing) states grouped by rank, ascending.
    ranks: Vec<Vec<FrameState>>,
    /// Incoming rules per target state index, in canonical source order:
    /// source φ ascending, then source w ascending, then source state.
    incoming: Vec<Vec<Incoming>>,
    /// Outgoing rules per source state index, in table order.
    outgoing: Vec<Vec<TransitionRule>>,
    window: usize,
}

impl Plan {
    fn new(table: ChainTable) -> Self {
        let stored: Vec<FrameState> =
            table.states().iter().copied().filter(|s| *s != FrameState::S4).collect();
        let max_rank = stored.iter().map(|s| s.rank()).max().unwrap_or(0);
        let ranks = (0..=max_rank)
            .map(|r| stored.iter().copied().filter(|s| s.rank() == r).collect())
            .collect();
        let mut incoming = vec![Vec::new(); FrameState::ALL.len()];
        let mut outgoing = vec![Vec::new(); FrameState::ALL.len()];
        for r in table.rules() {
            if r.src == FrameState::S4 {
                continue;
            }
            outgoing[r.src.index()].push(*r);
            if r.dst != FrameState::S4 {
                incoming[r.dst.index()].push(Incoming { rule: *r, src: r.src.index() });
            }
        }
        for list in incoming.iter_mut() {
            // larger offsets come from lower levels / narrower sources
            list.sort_by_key(|i| {
                (std::cmp::Reverse(i.rule.dphi()), std::cmp::Reverse(i.rule.dw()), i.rule.src)
            });
        }
        let window = table.rules().iter().map(|r| r.dphi()).max().unwrap_or(0) as usize + 1;
        Plan { ranks, incoming, outgoing, window }
    }
}

/// Log-probabilities of the projected states on one semi-perimeter level,
/// indexed by `(w, state)`.
struct Level {
    data: Vec<f64>,
}

const NS: usize = FrameState::ALL.len();

impl Level {
    fn new(max_w: usize) -> Self {
        Level { data: vec![f64::NEG_INFINITY; (max_w + 1) * NS] }
    }

    #[inline]
    fn get(&self, w: u32, s: usize) -> f64 {
        self.data[w as usize * NS + s]
    }

    fn clear(&mut self) {
        self.data.fill(f64::NEG_INFINITY);
    }
}

/// Precomputed `f(q·n)` so the inner loop performs no transcendental calls
/// beyond the log-sum.
struct FTable {
    values: Vec<f64>,
}

impl FTable {
    fn new(model: &ModelParams, max_n: usize) -> Self {
        let values = (0..=max_n)
            .map(|n| if n == 0 { f64::INFINITY } else { f_raw(model.q() * n as f64) })
            .collect();
        FTable { values }
    }

    #[inline]
    fn get(&self, n: i64) -> f64 {
        self.values[n as usize]
    }
}

fn memory_estimate(threshold: u32, window: usize) -> u64 {
    let level = (threshold as u64 + 1) * NS as u64 * 8;
    let ftable = (4 * threshold as u64 + 16) * 8;
    level * window as u64 + ftable
}

/// Exact `Π(p)` of the Fröbose chain started at `(1, 1, 0)`.
pub fn compute_pi(params: &ChainParams, threads: usize) -> Result<PiResult> {
    compute_pi_with(params, &DpOptions { threads, ..DpOptions::default() })
}

/// Level-order dynamic program computing the hitting probability.
///
/// Levels `φ = 2, …, L-1` are processed in order, holding only the last
/// `window` levels in memory. Within a level, targets are filled rank by
/// rank so that buffer creations (which keep `φ`) read finished sources.
/// Each target value is a left fold over its incoming contributions in
/// canonical order, and hits are folded level by level in ascending `w`,
/// which makes the result independent of the thread count.
pub fn compute_pi_with(params: &ChainParams, opts: &DpOptions) -> Result<PiResult> {
    let threshold = params.threshold;
    if threshold < 2 {
        return Err(Error::ThresholdTooSmall(threshold as u64));
    }
    if threshold == 2 {
        return Ok(PiResult::from_hit(LogProb::ONE));
    }
    let plan = Plan::new(opts.table);
    let needed = memory_estimate(threshold, plan.window);
    if needed > opts.memory_cap_bytes {
        return Err(Error::ResourceCap { needed, cap: opts.memory_cap_bytes });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| run_levels(params, opts, &plan))
}

fn run_levels(params: &ChainParams, opts: &DpOptions, plan: &Plan) -> Result<PiResult> {
    let model = &params.model;
    let threshold = params.threshold;
    let ft = FTable::new(model, 2 * threshold as usize + 16);
    let cost = |r: &TransitionRule, w: u32, h: u32| r.cost.eval_with(model, w, h, |n| ft.get(n));

    let max_w = threshold as usize + 1;
    let mut ring: Vec<Level> = (0..plan.window).map(|_| Level::new(max_w)).collect();
    let mut hit = f64::NEG_INFINITY;

    for phi in 2..threshold {
        let slot = phi as usize % plan.window;
        {
            let (before, rest) = ring.split_at_mut(slot);
            let (cur, after) = rest.split_first_mut().expect("slot in range");
            cur.clear();
            let prev = |back: u32| -> Option<&Level> {
                if back == 0 || back > phi - 2 {
                    return None;
                }
                let idx = (phi - back) as usize % plan.window;
                Some(if idx < slot { &before[idx] } else { &after[idx - slot - 1] })
            };
            if phi == 2 {
                cur.data[1 * NS + FrameState::S0.index()] = 0.0;
            }
            for rank_states in &plan.ranks {
                let fill = |w: u32| -> [f64; NS] {
                    let h = phi - w;
                    let mut out = [f64::NEG_INFINITY; NS];
                    for s in rank_states {
                        let t = s.index();
                        let mut acc = if phi == 2 && w == 1 { cur.get(w, t) } else { f64::NEG_INFINITY };
                        for inc in &plan.incoming[t] {
                            let r = &inc.rule;
                            let (dw, dh) = (r.dw(), r.dh());
                            if dw >= w || dh >= h {
                                continue;
                            }
                            let (sw, sh) = (w - dw, h - dh);
                            let src = if r.dphi() == 0 { cur.get(sw, inc.src) } else {
                                match prev(r.dphi()) {
                                    Some(level) => level.get(sw, inc.src),
                                    None => continue,
                                }
                            };
                            if src == f64::NEG_INFINITY {
                                continue;
                            }
                            acc = ln_add(acc, src - cost(r, sw, sh));
                        }
                        if let Some(cut) = opts.prune_below {
                            if acc < cut {
                                acc = f64::NEG_INFINITY;
                            }
                        }
                        out[t] = acc;
                    }
                    out
                };
                let rows: Vec<[f64; NS]> = if phi >= PARALLEL_MIN_WIDTH {
                    (1..phi).into_par_iter().map(fill).collect()
                } else {
                    (1..phi).map(fill).collect()
                };
                for (i, row) in rows.iter().enumerate() {
                    let w = i + 1;
                    for s in rank_states {
                        cur.data[w * NS + s.index()] = row[s.index()];
                    }
                }
            }
        }

        // Mass leaving this level for the threshold.
        if phi + plan.window as u32 > threshold {
            let cur = &ring[slot];
            let partial = |w: u32| -> f64 {
                let h = phi - w;
                let mut acc = f64::NEG_INFINITY;
                for states in &plan.ranks {
                    for s in states {
                        let src = cur.get(w, s.index());
                        if src == f64::NEG_INFINITY {
                            continue;
                        }
                        for r in &plan.outgoing[s.index()] {
                            if r.dphi() > 0 && params.convention.counts(phi + r.dphi(), threshold)
                            {
                                acc = ln_add(acc, src - cost(r, w, h));
                            }
                        }
                    }
                }
                acc
            };
            let partials: Vec<f64> = if phi >= PARALLEL_MIN_WIDTH {
                (1..phi).into_par_iter().map(partial).collect()
            } else {
                (1..phi).map(partial).collect()
            };
            hit = partials.into_iter().fold(hit, ln_add);
        }
    }
    Ok(PiResult::from_hit(LogProb::from_ln(hit)))
}

/// Largest threshold accepted by [`brute_force_hit_prob`].
pub const BRUTE_FORCE_MAX_THRESHOLD: u32 = 10;

/// Independent oracle: sums the probability of every trajectory by plain
/// recursion, with no tables shared with the dynamic program.
pub fn brute_force_hit_prob(params: &ChainParams) -> Result<LogProb> {
    brute_force_hit_prob_with(params, ChainTable::Frobose)
}

pub fn brute_force_hit_prob_with(params: &ChainParams, table: ChainTable) -> Result<LogProb> {
    let threshold = params.threshold;
    if threshold < 2 {
        return Err(Error::ThresholdTooSmall(threshold as u64));
    }
    if threshold > BRUTE_FORCE_MAX_THRESHOLD {
        return Err(Error::TooLarge {
            what: "threshold",
            size: threshold as u64,
            limit: BRUTE_FORCE_MAX_THRESHOLD as u64,
        });
    }
    if threshold == 2 {
        return Ok(LogProb::ONE);
    }
    fn recurse(
        state: ProjectedChainState,
        log_mass: f64,
        params: &ChainParams,
        rules: &[TransitionRule],
        hits: &mut Vec<f64>,
    ) {
        for r in rules.iter().filter(|r| r.src == state.s && r.dst != FrameState::S4) {
            let lp = log_mass - r.cost.eval(&params.model, state.w, state.h);
            let next = state.apply(r);
            if next.phi() >= params.threshold {
                if params.convention.counts(next.phi(), params.threshold) {
                    hits.push(lp);
                }
            } else {
                recurse(next, lp, params, rules, hits);
            }
        }
    }
    let mut hits = Vec::new();
    recurse(ProjectedChainState::START, 0.0, params, table.rules(), &mut hits);
    Ok(LogProb::from_ln(hits.into_iter().fold(f64::NEG_INFINITY, ln_add)))
}

/// Samples one trajectory of the projected Fröbose chain from `(1, 1, 0)`,
/// stopping at frame state 4 or once `φ ≥ L`.
pub fn sample_trajectory(params: &ChainParams, seed: u64) -> Vec<ProjectedChainState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_trajectory_rng(params, &mut rng)
}

pub fn sample_trajectory_rng<R: Rng>(params: &ChainParams, rng: &mut R) -> Vec<ProjectedChainState> {
    let mut state = ProjectedChainState::START;
    let mut out = vec![state];
    while state.s != FrameState::S4 && state.phi() < params.threshold {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let rules: Vec<&TransitionRule> =
            FROBOSE_TABLE.iter().filter(|r| r.src == state.s).collect();
        let mut chosen = rules[rules.len() - 1];
        for r in &rules {
            cum += (-r.cost.eval(&params.model, state.w, state.h)).exp();
            if u < cum {
                chosen = r;
                break;
            }
        }
        state = state.apply(chosen);
        out.push(state);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn model(p: f64) -> ModelParams {
        ModelParams::new(p).unwrap()
    }

    #[test]
    fn table_shapes() {
        assert_eq!(frobose_transitions(S0).unwrap().len(), 2);
        let from3: Vec<FrameState> = frobose_transitions(S3).unwrap().iter().map(|r| r.dst).collect();
        assert_eq!(from3, vec![S4, S3, S2, S2p, S1, S1p, S1pp, S0]);
        let from4 = frobose_transitions(S4).unwrap();
        assert_eq!(from4.len(), 1);
        assert_eq!(from4[0].cost.eval(&model(0.3), 5, 7), 0.0);
        assert!(frobose_transitions(S2pp).is_err());
        assert_eq!(TWO_NEIGHBOUR_TABLE.len(), 43);
        assert_eq!(two_neighbour_transitions(S0).unwrap().len(), 3);
        assert_eq!(two_neighbour_transitions(S4).unwrap().len(), 1);
    }

    #[test]
    fn table_pairs_unique_and_offsets_bounded() {
        for (i, a) in FROBOSE_TABLE.iter().enumerate() {
            assert!(a.dphi() <= 4);
            for b in &FROBOSE_TABLE[i + 1..] {
                assert!(!(a.src == b.src && a.dst == b.dst));
            }
        }
    }

    #[test]
    fn creations_raise_rank_and_others_raise_phi() {
        for t in [ChainTable::Frobose, ChainTable::TwoNeighbourExcerpt] {
            for r in t.rules() {
                if r.src == S4 {
                    continue;
                }
                assert!(r.dphi() > 0 || r.dst.rank() > r.src.rank(), "{r:?}");
            }
        }
    }

    #[test]
    fn cost_examples() {
        let m = model(0.2);
        let (w, h) = (3, 5);
        let c01 = FROBOSE_TABLE[0];
        assert!((transition_log_prob(&c01, w, h, &m).ln() + m.q() * h as f64).abs() < 1e-15);
        let c10 = FROBOSE_TABLE[15];
        assert_eq!((c10.src, c10.dst), (S1, S0));
        let expected = m.p().ln() - f_raw(m.q() * w as f64);
        assert!((transition_log_prob(&c10, w, h, &m).ln() - expected).abs() < 1e-14);
        assert_eq!(FROBOSE_TABLE[27].cost.to_string(), "3log(1/p)+f(q(a))-log(4-3p)");
    }

    #[test]
    fn stochastic_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let m = model(rng.random_range(0.001..0.999));
            let (w, h) = (rng.random_range(1..200), rng.random_range(1..200));
            for s in FrameState::FROBOSE {
                let total: f64 = frobose_transitions(s)
                    .unwrap()
                    .iter()
                    .map(|r| transition_log_prob(r, w, h, &m).value())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "state {s} sum {total}");
            }
        }
    }

    #[test]
    fn two_neighbour_substochastic() {
        let m = model(0.1);
        for s in FrameState::ALL {
            let total: f64 = two_neighbour_transitions(s)
                .unwrap()
                .iter()
                .map(|r| transition_log_prob(r, 4, 4, &m).value())
                .sum();
            if s == S1pp || s == S2pp {
                assert_eq!(total, 0.0);
            } else {
                assert!(total > 0.0 && total <= 1.0, "state {s}: {total}");
            }
        }
    }

    #[test]
    fn threshold_two_is_certain() {
        let params = ChainParams { model: model(0.9), threshold: 2, convention: Convention::HitExactly };
        let r = compute_pi(&params, 1).unwrap();
        assert_eq!(r.log_pi, 0.0);
        assert_eq!(brute_force_hit_prob(&params).unwrap(), LogProb::ONE);
        let bad = ChainParams { threshold: 1, ..params };
        assert!(compute_pi(&bad, 1).is_err());
    }

    #[test]
    fn default_threshold_examples() {
        assert_eq!(default_threshold(&ModelParams::from_log2_inv_p(2).unwrap()), 12);
        assert_eq!(default_threshold(&ModelParams::from_log2_inv_p(5).unwrap()), 222);
    }

    #[test]
    fn dp_matches_brute_force() {
        for &p in &[0.1, 0.3, 0.5, 0.7] {
            for threshold in 2..=8 {
                for convention in [Convention::HitExactly, Convention::HitAtLeast] {
                    let params = ChainParams { model: model(p), threshold, convention };
                    let dp = compute_pi(&params, 1).unwrap().log_hit_prob.ln();
                    let bf = brute_force_hit_prob(&params).unwrap().ln();
                    assert!((dp - bf).abs() < 1e-12, "p={p} L={threshold} {convention:?}: {dp} vs {bf}");
                }
            }
        }
    }

    #[test]
    fn two_neighbour_dp_matches_brute_force() {
        for &p in &[0.2, 0.5] {
            for threshold in 3..=8 {
                let params = ChainParams { model: model(p), threshold, convention: Convention::HitAtLeast };
                let opts = DpOptions { table: ChainTable::TwoNeighbourExcerpt, ..DpOptions::default() };
                let dp = compute_pi_with(&params, &opts).unwrap().log_hit_prob.ln();
                let bf = brute_force_hit_prob_with(&params, ChainTable::TwoNeighbourExcerpt).unwrap().ln();
                assert!((dp - bf).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn at_least_dominates_exact() {
        for &p in &[0.05, 0.2, 0.6] {
            for threshold in [3, 10, 40, 150] {
                let base = ChainParams { model: model(p), threshold, convention: Convention::HitExactly };
                let ex = compute_pi(&base, 1).unwrap().log_hit_prob;
                let al = compute_pi(&ChainParams { convention: Convention::HitAtLeast, ..base }, 1)
                    .unwrap()
                    .log_hit_prob;
                assert!(al >= ex);
            }
        }
    }

    #[test]
    fn deterministic_across_threads() {
        let params = ChainParams::for_model(ModelParams::from_log2_inv_p(5).unwrap());
        let one = compute_pi(&params, 1).unwrap();
        let four = compute_pi(&params, 4).unwrap();
        assert_eq!(one.log_pi.to_bits(), four.log_pi.to_bits());
    }

    #[test]
    fn memory_cap_is_checked_first() {
        let params = ChainParams::for_model(model(0.01));
        let opts = DpOptions { memory_cap_bytes: 1024, ..DpOptions::default() };
        assert!(matches!(compute_pi_with(&params, &opts), Err(Error::ResourceCap { .. })));
    }

    #[test]
    fn pruning_only_lowers() {
        let params = ChainParams::for_model(ModelParams::from_log2_inv_p(4).unwrap());
        let full = compute_pi(&params, 1).unwrap();
        let opts = DpOptions { prune_below: Some(-30.0), ..DpOptions::default() };
        let pruned = compute_pi_with(&params, &opts).unwrap();
        assert!(pruned.log_hit_prob <= full.log_hit_prob);
    }

    #[test]
    fn trajectories() {
        let params = ChainParams { model: model(0.3), threshold: 30, convention: Convention::HitExactly };
        for seed in 0..200 {
            let t = sample_trajectory(&params, seed);
            assert_eq!(t[0], ProjectedChainState::START);
            assert!(t.windows(2).all(|w| w[1].phi() >= w[0].phi()));
            let last = t.last().unwrap();
            assert!(last.s == S4 || last.phi() >= 30);
        }
        assert_eq!(sample_trajectory(&params, 9), sample_trajectory(&params, 9));
    }

    #[test]
    fn first_step_frequency() {
        let m = model(0.3);
        let params = ChainParams { model: m, threshold: 3, convention: Convention::HitExactly };
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hits = (0..n)
            .filter(|_| sample_trajectory_rng(&params, &mut rng)[1].s == S1)
            .count() as f64;
        let expect = (-m.q()).exp();
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((hits / n as f64 - expect).abs() < 3.0 * se);
    }
}
