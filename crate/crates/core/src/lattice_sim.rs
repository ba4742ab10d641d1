//! Ground-truth lattice dynamics on finite boxes.
//!
//! Everything here is confined to an explicit bounding box: sites outside it
//! are permanently healthy. The module provides the two-neighbour and Fröbose
//! closures (both by direct iteration and by the rectangles process), their
//! local germ variants, the rectangle events used throughout the analysis,
//! the framed-rectangle exploration that realises the Markov chain on a
//! sampled configuration, and Monte Carlo and exhaustive oracles.

use crate::chain::{FrameState, TransitionRule, FROBOSE_TABLE};
use crate::error::{Error, Result};
use crate::special_functions::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashSet;
use std::fmt;

/// A lattice site `(x, y)`.
pub type Site = (i64, i64);

/// Largest bounding box (in sites) stored as a dense bitset.
pub const DENSE_MAX_SITES: u64 = 1 << 12;
/// Largest region accepted by [`exact_event_prob`].
pub const EXACT_MAX_SITES: u64 = 22;
/// Largest box on which the dynamics are run (they use a dense grid).
pub const DYNAMICS_MAX_SITES: u64 = 1 << 24;
/// Samples drawn from one generator stream in [`mc_estimate`].
const MC_CHUNK: u64 = 4096;

const NEIGHBOURS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
const DIAGONALS: [(i64, i64); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

/// The bootstrap percolation update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    /// A site with at least two infected neighbours becomes infected.
    TwoNeighbour,
    /// The only healthy corner of a unit square becomes infected.
    Frobose,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::TwoNeighbour => "two-neighbour",
            Model::Frobose => "frobose",
        }
    }

    /// Largest graph distance at which the rectangles process merges.
    fn merge_distance(self) -> i64 {
        match self {
            Model::TwoNeighbour => 2,
            Model::Frobose => 1,
        }
    }

    fn buffer_thickness(self) -> i64 {
        match self {
            Model::TwoNeighbour => 2,
            Model::Frobose => 1,
        }
    }
}

/// The rectangle `[a, c) × [b, d)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rectangle {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl Rectangle {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        if a < c && b < d {
            Ok(Rectangle { a, b, c, d })
        } else {
            Err(Error::InvalidRectangle { a, b, c, d })
        }
    }

    /// `R(w, h) = R(0, 0; w, h)`.
    pub fn with_dims(w: i64, h: i64) -> Result<Self> {
        Rectangle::new(0, 0, w, h)
    }

    /// The `1 × 1` rectangle holding `site`.
    pub fn unit(site: Site) -> Self {
        Rectangle { a: site.0, b: site.1, c: site.0 + 1, d: site.1 + 1 }
    }

    pub fn width(&self) -> i64 {
        self.c - self.a
    }

    pub fn height(&self) -> i64 {
        self.d - self.b
    }

    /// Semi-perimeter `(c - a) + (d - b)`.
    pub fn phi(&self) -> i64 {
        self.width() + self.height()
    }

    /// Short side length.
    pub fn sh(&self) -> i64 {
        self.width().min(self.height())
    }

    /// Long side length.
    pub fn lng(&self) -> i64 {
        self.width().max(self.height())
    }

    pub fn area(&self) -> u64 {
        (self.width() as u64) * (self.height() as u64)
    }

    pub fn contains(&self, (x, y): Site) -> bool {
        self.a <= x && x < self.c && self.b <= y && y < self.d
    }

    pub fn contains_rect(&self, other: &Rectangle) -> bool {
        self.a <= other.a && other.c <= self.c && self.b <= other.b && other.d <= self.d
    }

    /// Smallest rectangle containing both.
    pub fn hull(&self, other: &Rectangle) -> Rectangle {
        Rectangle {
            a: self.a.min(other.a),
            b: self.b.min(other.b),
            c: self.c.max(other.c),
            d: self.d.max(other.d),
        }
    }

    /// Graph (ℓ1) distance between the closest sites of the two rectangles.
    pub fn distance(&self, other: &Rectangle) -> i64 {
        let gx = (other.a - self.c + 1).max(self.a - other.c + 1).max(0);
        let gy = (other.b - self.d + 1).max(self.b - other.d + 1).max(0);
        gx + gy
    }

    /// The rectangle grown by `k` sites on every side.
    pub fn expand(&self, k: i64) -> Rectangle {
        Rectangle { a: self.a - k, b: self.b - k, c: self.c + k, d: self.d + k }
    }

    /// Sites in row-major order (rows bottom to top).
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (self.b..self.d).flat_map(move |y| (self.a..self.c).map(move |x| (x, y)))
    }

    pub fn right_buffer(&self, t: i64) -> Rectangle {
        Rectangle { a: self.c, b: self.b, c: self.c + t, d: self.d }
    }

    pub fn up_buffer(&self, t: i64) -> Rectangle {
        Rectangle { a: self.a, b: self.d, c: self.c, d: self.d + t }
    }

    pub fn left_buffer(&self, t: i64) -> Rectangle {
        Rectangle { a: self.a - t, b: self.b, c: self.a, d: self.d }
    }

    pub fn down_buffer(&self, t: i64) -> Rectangle {
        Rectangle { a: self.a, b: self.b - t, c: self.c, d: self.b }
    }

    #[inline]
    fn index(&self, (x, y): Site) -> usize {
        ((y - self.b) * self.width() + (x - self.a)) as usize
    }
}

impl fmt::Display for Rectangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R({},{};{},{})", self.a, self.b, self.c, self.d)
    }
}

#[derive(Clone, Debug)]
enum SiteSet {
    Dense(Vec<u64>),
    Sparse(HashSet<Site>),
}

/// A finite set of infected sites inside an explicit bounding box.
#[derive(Clone, Debug)]
pub struct LatticeConfiguration {
    bbox: Rectangle,
    sites: SiteSet,
}

impl LatticeConfiguration {
    /// The empty configuration on `bbox`.
    pub fn empty(bbox: Rectangle) -> Self {
        let sites = if bbox.area() <= DENSE_MAX_SITES {
            SiteSet::Dense(vec![0; bbox.area().div_ceil(64) as usize])
        } else {
            SiteSet::Sparse(HashSet::new())
        };
        LatticeConfiguration { bbox, sites }
    }

    pub fn from_sites<I: IntoIterator<Item = Site>>(bbox: Rectangle, sites: I) -> Result<Self> {
        let mut config = LatticeConfiguration::empty(bbox);
        for s in sites {
            config.insert(s)?;
        }
        Ok(config)
    }

    /// Independent Bernoulli(`p`) infections on every site of `bbox`.
    pub fn sample<R: Rng + ?Sized>(bbox: Rectangle, p: f64, rng: &mut R) -> Self {
        let mut config = LatticeConfiguration::empty(bbox);
        for s in bbox.sites() {
            if rng.random::<f64>() < p {
                config.set(s);
            }
        }
        config
    }

    /// The configuration whose `i`-th site of `bbox` (row-major) is infected
    /// iff bit `i` of `mask` is set.
    pub fn from_mask(bbox: Rectangle, mask: u64) -> Self {
        let mut config = LatticeConfiguration::empty(bbox);
        for (i, s) in bbox.sites().enumerate().take(64) {
            if mask >> i & 1 == 1 {
                config.set(s);
            }
        }
        config
    }

    pub fn bounding_box(&self) -> Rectangle {
        self.bbox
    }

    pub fn contains(&self, site: Site) -> bool {
        if !self.bbox.contains(site) {
            return false;
        }
        match &self.sites {
            SiteSet::Dense(words) => {
                let i = self.bbox.index(site);
                words[i / 64] >> (i % 64) & 1 == 1
            }
            SiteSet::Sparse(set) => set.contains(&site),
        }
    }

    /// Adds an infection; sites outside the bounding box are rejected.
    pub fn insert(&mut self, site: Site) -> Result<()> {
        if !self.bbox.contains(site) {
            return Err(Error::InvalidArgument(format!(
                "site ({}, {}) outside the bounding box {}",
                site.0, site.1, self.bbox
            )));
        }
        self.set(site);
        Ok(())
    }

    fn set(&mut self, site: Site) {
        match &mut self.sites {
            SiteSet::Dense(words) => {
                let i = self.bbox.index(site);
                words[i / 64] |= 1 << (i % 64);
            }
            SiteSet::Sparse(set) => {
                set.insert(site);
            }
        }
    }

    pub fn remove(&mut self, site: Site) {
        if !self.bbox.contains(site) {
            return;
        }
        match &mut self.sites {
            SiteSet::Dense(words) => {
                let i = self.bbox.index(site);
                words[i / 64] &= !(1 << (i % 64));
            }
            SiteSet::Sparse(set) => {
                set.remove(&site);
            }
        }
    }

    pub fn len(&self) -> usize {
        match &self.sites {
            SiteSet::Dense(words) => words.iter().map(|w| w.count_ones() as usize).sum(),
            SiteSet::Sparse(set) => set.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Infected sites in row-major order.
    pub fn sites(&self) -> Vec<Site> {
        match &self.sites {
            SiteSet::Dense(_) => self.bbox.sites().filter(|&s| self.contains(s)).collect(),
            SiteSet::Sparse(set) => {
                let mut v: Vec<Site> = set.iter().copied().collect();
                v.sort_by_key(|&(x, y)| (y, x));
                v
            }
        }
    }

    /// Number of infections inside `r`.
    pub fn count_in(&self, r: &Rectangle) -> usize {
        r.sites().filter(|&s| self.contains(s)).count()
    }

    /// `A ∩ r` as a configuration on the box `r`.
    pub fn restrict(&self, r: &Rectangle) -> LatticeConfiguration {
        let mut out = LatticeConfiguration::empty(*r);
        for s in r.sites() {
            if self.contains(s) {
                out.set(s);
            }
        }
        out
    }

    fn grid(&self) -> Result<Grid> {
        check_dynamics_size(&self.bbox)?;
        let mut g = Grid::new(self.bbox);
        for s in self.sites() {
            g.set(s);
        }
        Ok(g)
    }

    fn from_grid(g: &Grid) -> Self {
        let mut out = LatticeConfiguration::empty(g.rect);
        for s in g.rect.sites() {
            if g.get(s) {
                out.set(s);
            }
        }
        out
    }
}

impl PartialEq for LatticeConfiguration {
    fn eq(&self, other: &Self) -> bool {
        self.bbox == other.bbox && self.sites() == other.sites()
    }
}

fn check_dynamics_size(r: &Rectangle) -> Result<()> {
    if r.area() > DYNAMICS_MAX_SITES {
        return Err(Error::TooLarge { what: "bounding box", size: r.area(), limit: DYNAMICS_MAX_SITES });
    }
    Ok(())
}

/// Dense boolean grid used by the dynamics.
#[derive(Clone)]
struct Grid {
    rect: Rectangle,
    cells: Vec<bool>,
}

impl Grid {
    fn new(rect: Rectangle) -> Self {
        Grid { rect, cells: vec![false; rect.area() as usize] }
    }

    #[inline]
    fn get(&self, s: Site) -> bool {
        self.rect.contains(s) && self.cells[self.rect.index(s)]
    }

    #[inline]
    fn set(&mut self, s: Site) {
        let i = self.rect.index(s);
        self.cells[i] = true;
    }

    fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

#[inline]
fn add(s: Site, d: (i64, i64)) -> Site {
    (s.0 + d.0, s.1 + d.1)
}

/// Whether a healthy site `y` is infected by one update of `model` from `a`.
#[inline]
fn infectable(model: Model, a: &Grid, y: Site) -> bool {
    match model {
        Model::TwoNeighbour => NEIGHBOURS.iter().filter(|&&d| a.get(add(y, d))).count() >= 2,
        Model::Frobose => DIAGONALS.iter().any(|&(dx, dy)| {
            a.get((y.0 + dx, y.1)) && a.get((y.0, y.1 + dy)) && a.get((y.0 + dx, y.1 + dy))
        }),
    }
}

/// Synchronous dynamics; returns the infection time of every site of the box
/// (`u32::MAX` for never).
fn run_dynamics(model: Model, start: &Grid) -> Vec<u32> {
    let rect = start.rect;
    let mut times: Vec<u32> = start.cells.iter().map(|&c| if c { 0 } else { u32::MAX }).collect();
    let mut current = start.clone();
    let mut frontier: Vec<Site> = rect.sites().filter(|&s| current.get(s)).collect();
    let mut t = 0;
    while !frontier.is_empty() {
        t += 1;
        let mut candidates: Vec<Site> = Vec::new();
        for &s in &frontier {
            for d in NEIGHBOURS.iter().chain(DIAGONALS.iter()) {
                let y = add(s, *d);
                if rect.contains(y) && !current.get(y) {
                    candidates.push(y);
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        let newly: Vec<Site> = candidates.into_iter().filter(|&y| infectable(model, &current, y)).collect();
        for &y in &newly {
            current.set(y);
            times[rect.index(y)] = t;
        }
        frontier = newly;
    }
    times
}

/// Closure `[A]` under `model`, by direct iteration of the update rule.
pub fn closure(model: Model, config: &LatticeConfiguration) -> Result<LatticeConfiguration> {
    let g = config.grid()?;
    let times = run_dynamics(model, &g);
    let mut out = Grid::new(g.rect);
    for (cell, t) in out.cells.iter_mut().zip(times) {
        *cell = t != u32::MAX;
    }
    Ok(LatticeConfiguration::from_grid(&out))
}

pub fn closure_two_neighbour(config: &LatticeConfiguration) -> Result<LatticeConfiguration> {
    closure(Model::TwoNeighbour, config)
}

pub fn closure_frobose(config: &LatticeConfiguration) -> Result<LatticeConfiguration> {
    closure(Model::Frobose, config)
}

/// The rectangles of the closure: start from one unit rectangle per infection
/// and repeatedly merge two rectangles at graph distance at most 2
/// (two-neighbour) or 1 (Fröbose) into their hull.
pub fn rectangles_process(model: Model, config: &LatticeConfiguration) -> Vec<Rectangle> {
    let k = model.merge_distance();
    let mut rects: Vec<Rectangle> = config.sites().into_iter().map(Rectangle::unit).collect();
    loop {
        let mut merged = false;
        let mut i = 0;
        while i < rects.len() {
            let mut j = i + 1;
            while j < rects.len() {
                if rects[i].distance(&rects[j]) <= k {
                    let r = rects.swap_remove(j);
                    rects[i] = rects[i].hull(&r);
                    merged = true;
                    j = i + 1;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !merged {
            break;
        }
    }
    rects.sort();
    rects
}

/// Closure computed as the union of the rectangles process output.
pub fn closure_rectangles_process(model: Model, config: &LatticeConfiguration) -> LatticeConfiguration {
    let mut out = LatticeConfiguration::empty(config.bbox);
    for r in rectangles_process(model, config) {
        for s in r.sites() {
            out.set(s);
        }
    }
    out
}

/// Germ set of the local dynamics on the grid, started from `germ`.
fn local_germs(model: Model, start: &Grid, germ: Site) -> Grid {
    let rect = start.rect;
    let mut infected = start.clone();
    let mut germs = Grid::new(rect);
    germs.set(germ);
    loop {
        let mut newly_infected = Vec::new();
        for y in rect.sites() {
            if infected.get(y) {
                continue;
            }
            let hit = match model {
                Model::TwoNeighbour => {
                    NEIGHBOURS.iter().filter(|&&d| infected.get(add(y, d))).count() >= 2
                        && NEIGHBOURS.iter().any(|&d| germs.get(add(y, d)))
                }
                Model::Frobose => DIAGONALS.iter().any(|&(dx, dy)| {
                    let (u, v, c) = ((y.0 + dx, y.1), (y.0, y.1 + dy), (y.0 + dx, y.1 + dy));
                    infected.get(c)
                        && ((germs.get(u) && infected.get(v)) || (germs.get(v) && infected.get(u)))
                }),
            };
            if hit {
                newly_infected.push(y);
            }
        }
        for &y in &newly_infected {
            infected.set(y);
        }
        let newly_germs: Vec<Site> = rect
            .sites()
            .filter(|&y| infected.get(y) && !germs.get(y))
            .filter(|&y| NEIGHBOURS.iter().any(|&d| germs.get(add(y, d))))
            .collect();
        for &y in &newly_germs {
            germs.set(y);
        }
        if newly_infected.is_empty() && newly_germs.is_empty() {
            return germs;
        }
    }
}

/// Local closure `[A]^x`: the final germ set started from `germ ∈ A`.
pub fn local_closure(model: Model, config: &LatticeConfiguration, germ: Site) -> Result<LatticeConfiguration> {
    if !config.contains(germ) {
        return Err(Error::GermNotInfected(germ.0, germ.1));
    }
    let g = config.grid()?;
    Ok(LatticeConfiguration::from_grid(&local_germs(model, &g, germ)))
}

pub fn local_closure_frobose(config: &LatticeConfiguration, germ: Site) -> Result<LatticeConfiguration> {
    local_closure(Model::Frobose, config, germ)
}

pub fn local_closure_two_neighbour(config: &LatticeConfiguration, germ: Site) -> Result<LatticeConfiguration> {
    local_closure(Model::TwoNeighbour, config, germ)
}

/// First time `site` is infected, or `None` if it never is within the box.
pub fn infection_time(model: Model, config: &LatticeConfiguration, site: Site) -> Result<Option<u32>> {
    if !config.bbox.contains(site) {
        return Ok(None);
    }
    let g = config.grid()?;
    let t = run_dynamics(model, &g)[g.rect.index(site)];
    Ok((t != u32::MAX).then_some(t))
}

/// Direction of a traversability event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    East,
    North,
    West,
    South,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::North, Direction::West, Direction::South];
}

/// Events on a rectangle region `R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    /// `𝒪(R)`: some infection in `R`.
    Occupied,
    /// `𝓘(R)`.
    InternallyFilled,
    /// `𝓘ᶠ(R)`.
    FroboseInternallyFilled,
    /// `𝓘_loc(R)`.
    LocallyInternallyFilled,
    /// `𝓘ᶠ_loc(R)`.
    FroboseLocallyInternallyFilled,
    /// `𝒞(S, R)` with `S = inner`.
    Crossing { inner: Rectangle },
    /// `𝒞ᶠ(S, R)` with `S = inner`.
    FroboseCrossing { inner: Rectangle },
    /// `𝒢₋(R)`: every row occupied.
    NoHorizontalGaps,
    /// `𝒢|(R)`: every column occupied.
    NoVerticalGaps,
    /// `𝒯_ζ(R)`.
    Traversable(Direction),
}

impl Event {
    /// Parses the event names used on the command line. Crossings take the
    /// given inner rectangle.
    pub fn parse(name: &str, inner: Option<Rectangle>) -> Option<Event> {
        use Direction::*;
        Some(match name {
            "O" => Event::Occupied,
            "I" => Event::InternallyFilled,
            "IF" => Event::FroboseInternallyFilled,
            "Iloc" => Event::LocallyInternallyFilled,
            "IFloc" => Event::FroboseLocallyInternallyFilled,
            "C" => Event::Crossing { inner: inner? },
            "CF" => Event::FroboseCrossing { inner: inner? },
            "G-" => Event::NoHorizontalGaps,
            "G|" => Event::NoVerticalGaps,
            "T-east" => Event::Traversable(East),
            "T-north" => Event::Traversable(North),
            "T-west" => Event::Traversable(West),
            "T-south" => Event::Traversable(South),
            _ => return None,
        })
    }

    pub fn label(&self) -> &'static str {
        use Direction::*;
        match self {
            Event::Occupied => "O",
            Event::InternallyFilled => "I",
            Event::FroboseInternallyFilled => "IF",
            Event::LocallyInternallyFilled => "Iloc",
            Event::FroboseLocallyInternallyFilled => "IFloc",
            Event::Crossing { .. } => "C",
            Event::FroboseCrossing { .. } => "CF",
            Event::NoHorizontalGaps => "G-",
            Event::NoVerticalGaps => "G|",
            Event::Traversable(East) => "T-east",
            Event::Traversable(North) => "T-north",
            Event::Traversable(West) => "T-west",
            Event::Traversable(South) => "T-south",
        }
    }
}

fn occupied(config: &LatticeConfiguration, r: &Rectangle) -> bool {
    r.sites().any(|s| config.contains(s))
}

fn filled(model: Model, config: &LatticeConfiguration, r: &Rectangle) -> Result<bool> {
    let g = config.restrict(r).grid()?;
    Ok(run_dynamics(model, &g).iter().all(|&t| t != u32::MAX))
}

fn locally_filled(model: Model, config: &LatticeConfiguration, r: &Rectangle) -> Result<bool> {
    let g = config.restrict(r).grid()?;
    let area = r.area() as usize;
    for x in r.sites().filter(|&s| g.get(s)) {
        if local_germs(model, &g, x).count() == area {
            return Ok(true);
        }
    }
    Ok(false)
}

/// `[S ∪ (A ∩ R)]^s = R` for a corner `s` of `S`. `S` is connected and fully
/// infected, so the germ covers `S` in the first step whichever `s ∈ S` is
/// chosen.
fn crossing(model: Model, config: &LatticeConfiguration, inner: &Rectangle, r: &Rectangle) -> Result<bool> {
    let mut g = config.restrict(r).grid()?;
    for s in inner.sites() {
        g.set(s);
    }
    Ok(local_germs(model, &g, (inner.a, inner.b)).count() == r.area() as usize)
}

/// Column (or row) strips of `r` in the exploration order of `dir`.
fn strips(r: &Rectangle, dir: Direction) -> Vec<Rectangle> {
    match dir {
        Direction::East | Direction::West => {
            let cols = (r.a..r.c).map(|x| Rectangle { a: x, b: r.b, c: x + 1, d: r.d });
            if dir == Direction::East {
                cols.collect()
            } else {
                cols.rev().collect()
            }
        }
        Direction::North | Direction::South => {
            let rows = (r.b..r.d).map(|y| Rectangle { a: r.a, b: y, c: r.c, d: y + 1 });
            if dir == Direction::North {
                rows.collect()
            } else {
                rows.rev().collect()
            }
        }
    }
}

/// Infections on every two consecutive strips and on the last one.
fn traversable(config: &LatticeConfiguration, r: &Rectangle, dir: Direction) -> bool {
    let occ: Vec<bool> = strips(r, dir).iter().map(|s| occupied(config, s)).collect();
    *occ.last().unwrap() && occ.windows(2).all(|w| w[0] || w[1])
}

/// Evaluates `event` on the region `r` for the configuration.
pub fn event_holds(event: &Event, r: &Rectangle, config: &LatticeConfiguration) -> Result<bool> {
    Rectangle::new(r.a, r.b, r.c, r.d)?;
    if !config.bbox.contains_rect(r) {
        return Err(Error::InvalidArgument(format!(
            "region {r} is not inside the bounding box {}",
            config.bbox
        )));
    }
    match event {
        Event::Occupied => Ok(occupied(config, r)),
        Event::InternallyFilled => filled(Model::TwoNeighbour, config, r),
        Event::FroboseInternallyFilled => filled(Model::Frobose, config, r),
        Event::LocallyInternallyFilled => locally_filled(Model::TwoNeighbour, config, r),
        Event::FroboseLocallyInternallyFilled => locally_filled(Model::Frobose, config, r),
        Event::Crossing { inner } | Event::FroboseCrossing { inner } => {
            Rectangle::new(inner.a, inner.b, inner.c, inner.d)?;
            if !r.contains_rect(inner) {
                return Err(Error::InvalidArgument(format!("crossing needs {inner} inside {r}")));
            }
            let model =
                if matches!(event, Event::Crossing { .. }) { Model::TwoNeighbour } else { Model::Frobose };
            crossing(model, config, inner, r)
        }
        Event::NoHorizontalGaps => Ok(strips(r, Direction::North).iter().all(|s| occupied(config, s))),
        Event::NoVerticalGaps => Ok(strips(r, Direction::East).iter().all(|s| occupied(config, s))),
        Event::Traversable(dir) => Ok(traversable(config, r, *dir)),
    }
}

/// Lower bound on `|R ∩ A|` implied by internal filling of `r`.
pub fn extremal_bound(model: Model, r: &Rectangle) -> usize {
    match model {
        Model::TwoNeighbour => (r.phi() as usize).div_ceil(2),
        Model::Frobose => r.phi() as usize - 1,
    }
}

/// Searches for an internally filled `S ⊆ r` whose longest side lies in
/// `[l, 2l]`.
pub fn al_witness(model: Model, config: &LatticeConfiguration, r: &Rectangle, l: i64) -> Result<Option<Rectangle>> {
    let event = match model {
        Model::TwoNeighbour => Event::InternallyFilled,
        Model::Frobose => Event::FroboseInternallyFilled,
    };
    for w in 1..=r.width() {
        for h in 1..=r.height() {
            let long = w.max(h);
            if long < l || long > 2 * l {
                continue;
            }
            for x in r.a..=r.c - w {
                for y in r.b..=r.d - h {
                    let s = Rectangle { a: x, b: y, c: x + w, d: y + h };
                    if event_holds(&event, &s, config)? {
                        return Ok(Some(s));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// A rectangle with its frame state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FramedRectangle {
    pub rect: Rectangle,
    pub s: FrameState,
}

impl FramedRectangle {
    /// The frame `F_□`. Fröbose buffers have thickness 1; two-neighbour
    /// buffers have thickness 2 and pick up the corner site between two
    /// adjacent buffers.
    pub fn frame(&self, model: Model) -> Vec<Site> {
        use FrameState::*;
        let t = model.buffer_thickness();
        let r = &self.rect;
        let (right, up, left, down) = match self.s {
            S0 => (false, false, false, false),
            S1 => (true, false, false, false),
            S2 => (true, true, false, false),
            S3 => (true, true, true, false),
            S2p => (false, true, true, false),
            S1p => (false, false, true, false),
            S1pp => (false, true, false, false),
            S2pp => (true, false, true, false),
            S4 => (true, true, true, true),
        };
        let mut cells = Vec::new();
        let mut push = |rect: Rectangle| cells.extend(rect.sites());
        if right {
            push(r.right_buffer(t));
        }
        if up {
            push(r.up_buffer(t));
        }
        if left {
            push(r.left_buffer(t));
        }
        if down {
            push(r.down_buffer(t));
        }
        if model == Model::TwoNeighbour {
            if right && up {
                cells.push((r.c, r.d));
            }
            if up && left {
                cells.push((r.a - 1, r.d));
            }
            if left && down {
                cells.push((r.a - 1, r.b - 1));
            }
            if down && right {
                cells.push((r.c, r.b - 1));
            }
        }
        cells
    }

    /// Whether `site` lies in `F_■ = F_∘ ∪ F_□`.
    pub fn explored_contains(&self, site: Site, model: Model) -> bool {
        self.rect.contains(site) || self.frame(model).contains(&site)
    }

    /// The framed rectangle reached by a Table 1 style rule.
    pub fn apply(&self, rule: &TransitionRule) -> FramedRectangle {
        let r = &self.rect;
        FramedRectangle {
            rect: Rectangle {
                a: r.a - rule.alpha as i64,
                b: r.b - rule.beta as i64,
                c: r.c + rule.gamma as i64,
                d: r.d + rule.delta as i64,
            },
            s: rule.dst,
        }
    }

    /// Smallest rectangle containing `F_■` (any model).
    fn explored_hull(&self) -> Rectangle {
        self.rect.expand(2)
    }
}

impl fmt::Display for FramedRectangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.rect;
        write!(f, "F({},{};{},{};{})", r.a, r.b, r.c, r.d, self.s)
    }
}

/// Whether the Fröbose transition event `𝒯(F, F')` holds:
/// `A ∖ F_■` crosses from `F_∘` to `F'_∘` and leaves `F'_□` empty.
pub fn transition_holds(config: &LatticeConfiguration, from: &FramedRectangle, to: &FramedRectangle) -> Result<bool> {
    let old_frame: HashSet<Site> = from.frame(Model::Frobose).into_iter().collect();
    let unexplored = |s: Site| config.contains(s) && !from.rect.contains(s) && !old_frame.contains(&s);
    if to.frame(Model::Frobose).into_iter().any(unexplored) {
        return Ok(false);
    }
    if from.rect == to.rect {
        return Ok(true);
    }
    let target = to.rect;
    check_dynamics_size(&target)?;
    let mut g = Grid::new(target);
    for s in target.sites() {
        if from.rect.contains(s) || unexplored(s) {
            g.set(s);
        }
    }
    Ok(local_germs(Model::Frobose, &g, (from.rect.a, from.rect.b)).count() == target.area() as usize)
}

/// Why an exploration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExploreEnd {
    /// Frame state 4: the rectangle is surrounded by empty buffers.
    Absorbed,
    /// A candidate transition would look outside the bounding box.
    Boundary,
    /// The semi-perimeter reached the requested threshold.
    Threshold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exploration {
    pub trajectory: Vec<FramedRectangle>,
    pub end: ExploreEnd,
}

/// Runs the framed-rectangle exploration from `seed` with frame state 0
/// until absorption or the box boundary.
pub fn explore(config: &LatticeConfiguration, seed: Rectangle) -> Result<Exploration> {
    explore_until(config, seed, None)
}

/// As [`explore`], also stopping once `φ ≥ threshold`.
pub fn explore_until(config: &LatticeConfiguration, seed: Rectangle, threshold: Option<i64>) -> Result<Exploration> {
    if !config.bbox.contains_rect(&seed) {
        return Err(Error::InvalidArgument(format!("seed {seed} is not inside {}", config.bbox)));
    }
    let mut current = FramedRectangle { rect: seed, s: FrameState::S0 };
    let mut trajectory = vec![current];
    loop {
        if current.s == FrameState::S4 {
            return Ok(Exploration { trajectory, end: ExploreEnd::Absorbed });
        }
        if threshold.is_some_and(|l| current.rect.phi() >= l) {
            return Ok(Exploration { trajectory, end: ExploreEnd::Threshold });
        }
        let rules = FROBOSE_TABLE.iter().filter(|r| r.src == current.s);
        let candidates: Vec<FramedRectangle> = rules.map(|r| current.apply(r)).collect();
        if candidates.iter().any(|c| !config.bbox.contains_rect(&c.explored_hull())) {
            return Ok(Exploration { trajectory, end: ExploreEnd::Boundary });
        }
        let mut next = None;
        for c in candidates {
            if transition_holds(config, &current, &c)? {
                next = Some(c);
                break;
            }
        }
        current = next.unwrap_or_else(|| {
            panic!("no transition from {current} holds; the transition events must be exhaustive")
        });
        trajectory.push(current);
    }
}

/// A Monte Carlo frequency with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub n: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub std_err: f64,
}

/// Generator for chunk `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Counts the samples `i ∈ [0, n)` for which `trial` succeeds. Sample `i` is
/// drawn from stream `i / 4096`; chunks run in parallel and the counts are
/// folded in chunk order.
pub fn mc_count<F>(n: u64, seed: u64, trial: F) -> Result<u64>
where
    F: Fn(&mut ChaCha8Rng) -> Result<bool> + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let counts: Vec<Result<u64>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let len = MC_CHUNK.min(n - k * MC_CHUNK);
            let mut hits = 0;
            for _ in 0..len {
                hits += trial(&mut rng)? as u64;
            }
            Ok(hits)
        })
        .collect();
    counts.into_iter().try_fold(0, |acc, c| Ok(acc + c?))
}

/// Frequency of `event` on `region` over `n` independent configurations.
pub fn mc_estimate(event: &Event, region: &Rectangle, params: &ModelParams, n: u64, seed: u64) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
    }
    Rectangle::new(region.a, region.b, region.c, region.d)?;
    let p = params.p();
    let hits = mc_count(n, seed, |rng| {
        let config = LatticeConfiguration::sample(*region, p, rng);
        event_holds(event, region, &config)
    })?;
    let p_hat = hits as f64 / n as f64;
    Ok(McEstimate { n, hits, p_hat, std_err: (p_hat * (1.0 - p_hat) / n as f64).sqrt() })
}

/// Exact probability of `event` on `region` by enumerating all
/// `2^|region|` configurations.
pub fn exact_event_prob(event: &Event, region: &Rectangle, params: &ModelParams) -> Result<f64> {
    Rectangle::new(region.a, region.b, region.c, region.d)?;
    let m = region.area();
    if m > EXACT_MAX_SITES {
        return Err(Error::TooLarge { what: "enumeration region", size: m, limit: EXACT_MAX_SITES });
    }
    let mut counts = vec![0u64; m as usize + 1];
    for mask in 0..(1u64 << m) {
        let config = LatticeConfiguration::from_mask(*region, mask);
        if event_holds(event, region, &config)? {
            counts[mask.count_ones() as usize] += 1;
        }
    }
    let (p, q) = (params.p(), 1.0 - params.p());
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * p.powi(k as i32) * q.powi((m as usize - k) as i32))
        .sum())
}

/// `ℙ(ℱ^S(∞) = R)` for the Fröbose chain started from `S` in frame state 0,
/// summed over all position-resolved trajectories that end in `R` with frame
/// state 4.
pub fn chain_final_rect_prob(s: &Rectangle, r: &Rectangle, params: &ModelParams) -> Result<f64> {
    if !r.contains_rect(s) {
        return Err(Error::InvalidArgument(format!("{s} is not inside {r}")));
    }
    fn walk(f: FramedRectangle, r: &Rectangle, params: &ModelParams) -> f64 {
        if f.s == FrameState::S4 {
            return if f.rect == *r { 1.0 } else { 0.0 };
        }
        let (w, h) = (f.rect.width() as u32, f.rect.height() as u32);
        FROBOSE_TABLE
            .iter()
            .filter(|rule| rule.src == f.s)
            .map(|rule| {
                let next = f.apply(rule);
                if !r.contains_rect(&next.rect) {
                    return 0.0;
                }
                (-rule.cost.eval(params, w, h)).exp() * walk(next, r, params)
            })
            .sum()
    }
    Ok(walk(FramedRectangle { rect: *s, s: FrameState::S0 }, r, params))
}

/// `ℙ(𝒞ᶠ(S, R))` obtained from the chain: the final rectangle is `R` exactly
/// when `S` crosses to `R` and the `2φ(R)` buffer sites of `R` are empty, and
/// these two events are independent.
pub fn crossing_prob_from_chain(s: &Rectangle, r: &Rectangle, params: &ModelParams) -> Result<f64> {
    let buffers_empty = (-2.0 * r.phi() as f64 * params.q()).exp();
    Ok(chain_final_rect_prob(s, r, params)? / buffers_empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{sample_trajectory_rng, ChainParams};
    use crate::special_functions::{f, traversability_bracket};

    fn rect(a: i64, b: i64, c: i64, d: i64) -> Rectangle {
        Rectangle::new(a, b, c, d).unwrap()
    }

    fn config(bbox: Rectangle, sites: &[Site]) -> LatticeConfiguration {
        LatticeConfiguration::from_sites(bbox, sites.iter().copied()).unwrap()
    }

    fn model(p: f64) -> ModelParams {
        ModelParams::new(p).unwrap()
    }

    #[test]
    fn rectangle_geometry() {
        let r = rect(1, 2, 4, 7);
        assert_eq!((r.width(), r.height(), r.phi(), r.sh(), r.lng(), r.area()), (3, 5, 8, 3, 5, 15));
        assert!(Rectangle::new(0, 0, 0, 1).is_err());
        assert!(Rectangle::new(0, 2, 1, 1).is_err());
        assert_eq!(rect(0, 0, 1, 1).distance(&rect(1, 1, 2, 2)), 2);
        assert_eq!(rect(0, 0, 2, 1).distance(&rect(2, 0, 3, 1)), 1);
        assert_eq!(rect(0, 0, 3, 3).distance(&rect(1, 1, 2, 2)), 0);
        assert_eq!(rect(0, 0, 1, 1).hull(&rect(3, -1, 4, 0)), rect(0, -1, 4, 1));
    }

    #[test]
    fn dense_and_sparse_storage_agree() {
        let small = rect(0, 0, 10, 10);
        let big = rect(0, 0, 100, 100);
        let pts = [(3, 4), (9, 9), (0, 0)];
        let a = config(small, &pts);
        let b = config(big, &pts);
        assert!(matches!(a.sites, SiteSet::Dense(_)));
        assert!(matches!(b.sites, SiteSet::Sparse(_)));
        assert_eq!(a.sites(), b.sites());
        assert_eq!(a.len(), 3);
        assert!(config(small, &[]).insert((10, 0)).is_err());
    }

    #[test]
    fn closure_examples() {
        let bbox = rect(-2, -2, 4, 4);
        let a = config(bbox, &[(0, 0), (1, 1)]);
        let two = closure_two_neighbour(&a).unwrap();
        assert_eq!(two.sites(), vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(closure_frobose(&a).unwrap(), a);
        let empty = config(bbox, &[]);
        assert!(closure_frobose(&empty).unwrap().is_empty());
        assert!(closure_two_neighbour(&empty).unwrap().is_empty());
    }

    #[test]
    fn local_closure_examples() {
        let bbox = rect(-3, -3, 4, 4);
        let single = config(bbox, &[(0, 0)]);
        assert_eq!(local_closure_frobose(&single, (0, 0)).unwrap().sites(), vec![(0, 0)]);
        let l_shape = config(bbox, &[(0, 0), (1, 0), (0, 1)]);
        let c = local_closure_frobose(&l_shape, (0, 0)).unwrap();
        assert_eq!(c.sites(), vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(local_closure_frobose(&l_shape, (2, 2)), Err(Error::GermNotInfected(2, 2)));
    }

    #[test]
    fn infection_time_examples() {
        let bbox = rect(-2, -2, 4, 4);
        let a = config(bbox, &[(0, 0), (1, 1)]);
        assert_eq!(infection_time(Model::TwoNeighbour, &a, (0, 0)).unwrap(), Some(0));
        assert_eq!(infection_time(Model::TwoNeighbour, &a, (1, 0)).unwrap(), Some(1));
        assert_eq!(infection_time(Model::TwoNeighbour, &a, (3, 3)).unwrap(), None);
        let empty = config(bbox, &[]);
        assert_eq!(infection_time(Model::Frobose, &empty, (0, 0)).unwrap(), None);
    }

    #[test]
    fn rectangles_process_matches_fixpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bbox = rect(0, 0, 12, 12);
        for i in 0..300 {
            let p = [0.05, 0.1, 0.2][i % 3];
            let a = LatticeConfiguration::sample(bbox, p, &mut rng);
            for m in [Model::TwoNeighbour, Model::Frobose] {
                assert_eq!(closure(m, &a).unwrap(), closure_rectangles_process(m, &a));
            }
        }
    }

    #[test]
    fn local_closure_is_contained_and_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let bbox = rect(0, 0, 10, 10);
        for _ in 0..200 {
            let a = LatticeConfiguration::sample(bbox, 0.25, &mut rng);
            let Some(&germ) = a.sites().first() else { continue };
            for m in [Model::TwoNeighbour, Model::Frobose] {
                let local = local_closure(m, &a, germ).unwrap();
                let full = closure(m, &a).unwrap();
                assert!(local.sites().iter().all(|&s| full.contains(s)));
            }
            // local Fröbose germ set is the rectangle grown by adjacent infections
            let mut r = Rectangle::unit(germ);
            loop {
                let grow = a.sites().into_iter().find(|&z| !r.contains(z) && r.distance(&Rectangle::unit(z)) == 1);
                match grow {
                    Some(z) => r = r.hull(&Rectangle::unit(z)),
                    None => break,
                }
            }
            let local = local_closure_frobose(&a, germ).unwrap();
            assert_eq!(local.sites(), r.sites().collect::<Vec<_>>());
        }
    }

    #[test]
    fn event_examples() {
        let r = rect(0, 0, 2, 3);
        let full = LatticeConfiguration::from_sites(r, r.sites()).unwrap();
        assert!(event_holds(&Event::NoVerticalGaps, &r, &full).unwrap());
        let bad = Rectangle { a: 2, b: 0, c: 0, d: 3 };
        assert!(event_holds(&Event::Occupied, &bad, &full).is_err());
        // horizontal gap in the middle row
        let gap = config(r, &[(0, 0), (1, 2)]);
        assert!(!event_holds(&Event::NoHorizontalGaps, &r, &gap).unwrap());
        assert!(event_holds(&Event::NoVerticalGaps, &r, &gap).unwrap());
    }

    #[test]
    fn extremal_bound_on_all_2x2() {
        let r = rect(0, 0, 2, 2);
        for mask in 0..16u64 {
            let a = LatticeConfiguration::from_mask(r, mask);
            if event_holds(&Event::FroboseInternallyFilled, &r, &a).unwrap() {
                assert!(a.len() >= 3);
            }
            if event_holds(&Event::InternallyFilled, &r, &a).unwrap() {
                assert!(a.len() >= 2);
            }
        }
    }

    #[test]
    fn internal_filling_implies_traversability_on_3x3() {
        let r = rect(0, 0, 3, 3);
        for mask in 0..512u64 {
            let a = LatticeConfiguration::from_mask(r, mask);
            if event_holds(&Event::InternallyFilled, &r, &a).unwrap() {
                for d in Direction::ALL {
                    assert!(event_holds(&Event::Traversable(d), &r, &a).unwrap());
                }
            }
            if event_holds(&Event::FroboseInternallyFilled, &r, &a).unwrap() {
                assert!(event_holds(&Event::NoHorizontalGaps, &r, &a).unwrap());
                assert!(event_holds(&Event::NoVerticalGaps, &r, &a).unwrap());
            }
        }
    }

    #[test]
    fn exact_probabilities() {
        let x3 = rect(0, 0, 3, 1);
        assert!((exact_event_prob(&Event::Occupied, &x3, &model(0.5)).unwrap() - 0.875).abs() < 1e-15);
        // 𝓘ᶠ(R(2,2)): three or four infections
        let r = rect(0, 0, 2, 2);
        let v = exact_event_prob(&Event::FroboseInternallyFilled, &r, &model(0.5)).unwrap();
        assert!((v - 5.0 / 16.0).abs() < 1e-15);
        let too_big = rect(0, 0, 5, 5);
        assert!(matches!(exact_event_prob(&Event::Occupied, &too_big, &model(0.5)), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn gaps_probability_closed_form() {
        let m = model(0.3);
        let r = rect(0, 0, 3, 2);
        let exact = exact_event_prob(&Event::NoVerticalGaps, &r, &m).unwrap();
        assert!((exact - (-3.0 * f(2.0 * m.q()).unwrap()).exp()).abs() < 1e-14);
    }

    #[test]
    fn traversability_exact_in_bracket() {
        for p in [0.1, 0.3, 0.6] {
            let m = model(p);
            for (a, b) in [(2, 2), (3, 2), (4, 3), (5, 2)] {
                let r = rect(0, 0, a, b);
                let v = exact_event_prob(&Event::Traversable(Direction::East), &r, &m).unwrap();
                let (lo, hi) = traversability_bracket(a as u32, b as u32, &m).unwrap();
                assert!(lo <= v * (1.0 + 1e-12) && v <= hi * (1.0 + 1e-12), "{p} {a}x{b}: {lo} {v} {hi}");
            }
        }
    }

    #[test]
    fn mc_examples() {
        let x4 = rect(0, 0, 2, 2);
        let e = mc_estimate(&Event::Occupied, &x4, &model(0.5), 20_000, 1).unwrap();
        assert!((e.p_hat - 0.9375).abs() <= 3.0 * e.std_err);
        let again = mc_estimate(&Event::Occupied, &x4, &model(0.5), 20_000, 1).unwrap();
        assert_eq!(e, again);
        let m = model(0.2);
        let g = mc_estimate(&Event::NoVerticalGaps, &rect(0, 0, 3, 4), &m, 20_000, 2).unwrap();
        let expected = (-3.0 * f(4.0 * m.q()).unwrap()).exp();
        assert!((g.p_hat - expected).abs() <= 3.0 * g.std_err);
        assert!(mc_estimate(&Event::Occupied, &x4, &m, 0, 1).is_err());
    }

    #[test]
    fn mc_traversability_in_bracket() {
        let m = model(0.2);
        let r = rect(0, 0, 4, 3);
        let e = mc_estimate(&Event::Traversable(Direction::East), &r, &m, 40_000, 3).unwrap();
        let (lo, hi) = traversability_bracket(4, 3, &m).unwrap();
        assert!(e.p_hat + 3.0 * e.std_err >= lo && e.p_hat - 3.0 * e.std_err <= hi);
    }

    #[test]
    fn frames() {
        let f = FramedRectangle { rect: rect(0, 0, 2, 3), s: FrameState::S2 };
        let mut cells = f.frame(Model::Frobose);
        cells.sort();
        assert_eq!(cells, vec![(0, 3), (1, 3), (2, 0), (2, 1), (2, 2)]);
        let two = f.frame(Model::TwoNeighbour);
        assert_eq!(two.len(), 2 * 3 + 2 * 2 + 1);
        assert!(two.contains(&(2, 3)));
        let f4 = FramedRectangle { rect: rect(0, 0, 2, 3), s: FrameState::S4 };
        assert_eq!(f4.frame(Model::Frobose).len(), 10);
        assert_eq!(f4.frame(Model::TwoNeighbour).len(), 20 + 4);
    }

    #[test]
    fn empty_exploration_walks_the_creations() {
        let bbox = rect(-5, -5, 6, 6);
        let a = config(bbox, &[]);
        let e = explore(&a, Rectangle::unit((0, 0))).unwrap();
        let states: Vec<FrameState> = e.trajectory.iter().map(|f| f.s).collect();
        use FrameState::*;
        assert_eq!(states, vec![S0, S1, S2, S3, S4]);
        assert!(e.trajectory.iter().all(|f| f.rect == Rectangle::unit((0, 0))));
        assert_eq!(e.end, ExploreEnd::Absorbed);
    }

    #[test]
    fn exploration_stops_at_boundary() {
        let bbox = rect(0, 0, 3, 3);
        let a = config(bbox, &[]);
        let e = explore(&a, Rectangle::unit((0, 0))).unwrap();
        assert_eq!(e.end, ExploreEnd::Boundary);
        assert_eq!(e.trajectory.len(), 1);
    }

    #[test]
    fn exploration_final_rect_is_local_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let bbox = rect(0, 0, 21, 21);
        let germ = (10, 10);
        let mut checked = 0;
        for _ in 0..300 {
            let mut a = LatticeConfiguration::sample(bbox, 0.2, &mut rng);
            a.insert(germ).unwrap();
            let e = explore(&a, Rectangle::unit(germ)).unwrap();
            if e.end != ExploreEnd::Absorbed {
                continue;
            }
            let last = e.trajectory.last().unwrap().rect;
            let local = local_closure_frobose(&a, germ).unwrap();
            assert_eq!(local.sites(), last.sites().collect::<Vec<_>>());
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn first_step_frequencies_match_table() {
        let m = model(0.3);
        let bbox = rect(-3, -3, 5, 7);
        let seed_rect = rect(0, 0, 1, 3);
        let n = 20_000;
        let hits = mc_count(n, 5, |rng| {
            let a = LatticeConfiguration::sample(bbox, m.p(), rng);
            let e = explore_until(&a, seed_rect, None)?;
            Ok(e.trajectory[1].s == FrameState::S1)
        })
        .unwrap();
        let expected = (-3.0 * m.q()).exp();
        let p_hat = hits as f64 / n as f64;
        let sd = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((p_hat - expected).abs() <= 3.0 * sd);
    }

    #[test]
    fn exploration_matches_chain_visits() {
        let m = model(0.3);
        let params = ChainParams { threshold: 5, ..ChainParams::for_model(m) };
        let n = 20_000u64;
        let bbox = rect(0, 0, 15, 15);
        let mut lattice = std::collections::BTreeMap::<(u32, u32, FrameState), u64>::new();
        let mut chain = lattice.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..n {
            let a = LatticeConfiguration::sample(bbox, m.p(), &mut rng);
            let e = explore_until(&a, Rectangle::unit((7, 7)), Some(5)).unwrap();
            assert_ne!(e.end, ExploreEnd::Boundary);
            for f in e.trajectory {
                *lattice.entry((f.rect.width() as u32, f.rect.height() as u32, f.s)).or_default() += 1;
            }
            for st in sample_trajectory_rng(&params, &mut rng) {
                *chain.entry((st.w, st.h, st.s)).or_default() += 1;
            }
        }
        let keys: std::collections::BTreeSet<_> = lattice.keys().chain(chain.keys()).copied().collect();
        for k in keys {
            let x = *lattice.get(&k).unwrap_or(&0) as f64 / n as f64;
            let y = *chain.get(&k).unwrap_or(&0) as f64 / n as f64;
            let sd = ((x * (1.0 - x) + y * (1.0 - y)) / n as f64).sqrt().max(1.0 / n as f64);
            assert!((x - y).abs() <= 4.0 * sd, "{k:?}: lattice {x} chain {y}");
        }
    }

    #[test]
    fn crossing_identity_small() {
        for p in [0.2, 0.5] {
            let m = model(p);
            for (w, h) in [(2, 2), (3, 2), (2, 3)] {
                let r = rect(0, 0, w, h);
                let s = rect(0, 0, 1, 1);
                let exact = exact_event_prob(&Event::FroboseCrossing { inner: s }, &r, &m).unwrap();
                let chain = crossing_prob_from_chain(&s, &r, &m).unwrap();
                assert!((exact - chain).abs() <= 1e-12, "{p} {w}x{h}: {exact} vs {chain}");
            }
        }
    }

    #[test]
    fn stacking_crossings() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let r = rect(0, 0, 7, 7);
        for _ in 0..300 {
            let a = LatticeConfiguration::sample(r, 0.35, &mut rng);
            let x0 = rng.random_range(0..5);
            let y0 = rng.random_range(0..5);
            let s = rect(x0, y0, x0 + rng.random_range(1..=7 - x0), y0 + rng.random_range(1..=7 - y0));
            let pairs = [
                (Event::InternallyFilled, Event::Crossing { inner: s }),
                (Event::FroboseInternallyFilled, Event::FroboseCrossing { inner: s }),
            ];
            for (fill, cross) in pairs {
                if event_holds(&fill, &s, &a).unwrap() && event_holds(&cross, &r, &a).unwrap() {
                    assert!(event_holds(&fill, &r, &a).unwrap());
                }
            }
        }
    }

    #[test]
    fn al_lemma_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for side in 2..=5 {
            let r = rect(0, 0, side, side);
            for _ in 0..30 {
                let a = LatticeConfiguration::sample(r, 0.45, &mut rng);
                for m in [Model::TwoNeighbour, Model::Frobose] {
                    let ev = if m == Model::Frobose { Event::FroboseInternallyFilled } else { Event::InternallyFilled };
                    if !event_holds(&ev, &r, &a).unwrap() {
                        continue;
                    }
                    assert!(a.len() >= extremal_bound(m, &r));
                    for l in 1..=side {
                        assert!(al_witness(m, &a, &r, l).unwrap().is_some());
                    }
                }
            }
        }
    }
}
