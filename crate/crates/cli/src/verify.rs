//! Property suites run by `bpdp verify`.

use bpdp::chain::{
    brute_force_hit_prob, compute_pi, frobose_transitions, transition_log_prob, two_neighbour_transitions,
    ChainParams, ChainTable, Convention, FrameState,
};
use bpdp::lattice_sim::{
    closure, closure_rectangles_process, crossing_prob_from_chain, exact_event_prob, explore, local_closure_frobose,
    stream_rng, Event, ExploreEnd, LatticeConfiguration, Model, Rectangle,
};
use bpdp::matrix_analysis::{
    characteristic_polynomial, closed_form_entry_exact, lagrange_norm_bound, matrix_power_entry, operator_norm,
    perturbed_characteristic_closed_form, perturbed_matrix, SmallMatrix,
};
use bpdp::variational::{gamma_r, holroyd_lower, optimal_path, MonotonePath, W, W_f};
use bpdp::{ModelParams, Result};
use clap::ValueEnum;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Stochasticity,
    Oracle,
    Lattice,
    Matrix,
    Variational,
    All,
}

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

pub fn run(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Stochasticity {
        out.extend(stochasticity(seed)?);
    }
    if all || suite == Suite::Oracle {
        out.extend(oracle()?);
    }
    if all || suite == Suite::Lattice {
        out.extend(lattice(seed)?);
    }
    if all || suite == Suite::Matrix {
        out.extend(matrix(seed)?);
    }
    if all || suite == Suite::Variational {
        out.extend(variational(seed)?);
    }
    Ok(out)
}

fn stochasticity(seed: u64) -> Result<Vec<Check>> {
    let mut rng = stream_rng(seed, 1);
    let mut worst = 0.0f64;
    let mut sub_ok = true;
    for _ in 0..100 {
        let m = ModelParams::new(rng.random_range(0.001..0.999))?;
        let (w, h) = (rng.random_range(1..200u32), rng.random_range(1..200u32));
        for s in FrameState::FROBOSE {
            let total: f64 = frobose_transitions(s)?.iter().map(|r| transition_log_prob(r, w, h, &m).value()).sum();
            worst = worst.max((total - 1.0).abs());
        }
        for &s in ChainTable::TwoNeighbourExcerpt.states() {
            let rules = two_neighbour_transitions(s)?;
            if !rules.is_empty() {
                let total: f64 = rules.iter().map(|r| transition_log_prob(r, w, h, &m).value()).sum();
                sub_ok &= total > 0.0 && total <= 1.0 + 1e-12;
            }
        }
    }
    Ok(vec![
        check("frobose rows sum to 1", worst <= 1e-12, format!("max |sum - 1| = {worst:.3e}")),
        check("two-neighbour rows sub-stochastic", sub_ok, "sums in (0, 1]".into()),
    ])
}

fn oracle() -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for p in [0.1, 0.3, 0.5, 0.7] {
        for threshold in 2..=8 {
            for convention in [Convention::HitExactly, Convention::HitAtLeast] {
                let params = ChainParams { model: ModelParams::new(p)?, threshold, convention };
                let dp = compute_pi(&params, 1)?.log_hit_prob.ln();
                let bf = brute_force_hit_prob(&params)?.ln();
                worst = worst.max((dp - bf).abs());
            }
        }
    }
    Ok(vec![check("dp equals brute force for L <= 8", worst <= 1e-12, format!("max log difference {worst:.3e}"))])
}

fn lattice(seed: u64) -> Result<Vec<Check>> {
    let mut rng = stream_rng(seed, 2);
    let bbox = Rectangle::new(0, 0, 12, 12)?;
    let mut closure_ok = true;
    for i in 0..200 {
        let a = LatticeConfiguration::sample(bbox, [0.05, 0.1, 0.2][i % 3], &mut rng);
        for model in [Model::TwoNeighbour, Model::Frobose] {
            closure_ok &= closure(model, &a)? == closure_rectangles_process(model, &a);
        }
    }

    let mut crossing_err = 0.0f64;
    let corner = Rectangle::new(0, 0, 1, 1)?;
    for p in [0.2, 0.5] {
        let m = ModelParams::new(p)?;
        for (w, h) in [(2, 2), (3, 2), (2, 3)] {
            let r = Rectangle::with_dims(w, h)?;
            let exact = exact_event_prob(&Event::FroboseCrossing { inner: corner }, &r, &m)?;
            crossing_err = crossing_err.max((exact - crossing_prob_from_chain(&corner, &r, &m)?).abs());
        }
    }

    let box21 = Rectangle::new(0, 0, 21, 21)?;
    let germ = (10, 10);
    let (mut explored, mut explore_ok) = (0, true);
    for _ in 0..200 {
        let mut a = LatticeConfiguration::sample(box21, 0.2, &mut rng);
        a.insert(germ)?;
        let e = explore(&a, Rectangle::unit(germ))?;
        if e.end == ExploreEnd::Absorbed {
            let last = e.trajectory.last().expect("trajectories are non-empty").rect;
            explore_ok &= local_closure_frobose(&a, germ)?.sites() == last.sites().collect::<Vec<_>>();
            explored += 1;
        }
    }
    Ok(vec![
        check("rectangles process equals closure", closure_ok, "200 configurations x 2 models".into()),
        check("crossing identity", crossing_err <= 1e-12, format!("max difference {crossing_err:.3e}")),
        check(
            "exploration ends on the local closure",
            explore_ok,
            format!("{explored} absorbed explorations"),
        ),
    ])
}

fn matrix(seed: u64) -> Result<Vec<Check>> {
    let powers_ok = (0..=25).all(|k| matrix_power_entry(k) as i128 == closed_form_entry_exact(k));
    let mut poly_err = 0.0f64;
    for p in [1e-2, 1e-4] {
        let got = characteristic_polynomial(&perturbed_matrix(p)?.scale(1.0 / p.sqrt()));
        let want = perturbed_characteristic_closed_form(p);
        poly_err = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(poly_err, f64::max);
    }
    let mut rng = stream_rng(seed, 3);
    let (mut checked, mut bound_ok) = (0, true);
    while checked < 50 {
        let mut m = SmallMatrix::zeros(6);
        for i in 0..6 {
            for j in 0..6 {
                m[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        if lagrange_norm_bound(&m, 1).is_err() {
            continue;
        }
        for n in [1, 5, 20] {
            bound_ok &= lagrange_norm_bound(&m, n)? >= operator_norm(&m.pow(n));
        }
        checked += 1;
    }
    Ok(vec![
        check("matrix powers match the closed form", powers_ok, "K <= 25, exact integers".into()),
        check("characteristic polynomial", poly_err <= 1e-10, format!("max coefficient error {poly_err:.3e}")),
        check("interpolation norm bound dominates", bound_ok, format!("{checked} random 6x6 matrices")),
    ])
}

fn variational(seed: u64) -> Result<Vec<Check>> {
    let mut rng = stream_rng(seed, 4);
    let (s, t) = ((0.3, 0.1), (2.5, 3.0));
    let best = W(&optimal_path(s, t)?)?;
    let mut optimal_ok = true;
    for _ in 0..200 {
        let mut xs: Vec<f64> = (0..4).map(|_| rng.random_range(s.0..=t.0)).collect();
        let mut ys: Vec<f64> = (0..4).map(|_| rng.random_range(s.1..=t.1)).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let mut v = vec![s];
        v.extend(xs.into_iter().zip(ys));
        v.push(t);
        let path = MonotonePath::from_points(v)?;
        optimal_ok &= W(&path)? >= best - 1e-12;
    }

    let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
    let diagonal = W_f(&gamma_r(40.0, 40.0)?)?;

    let mut lower_ok = true;
    for p in [0.2, 0.4] {
        let m = ModelParams::new(p)?;
        for (w, h) in [(1, 1), (2, 1), (2, 2), (3, 2), (3, 3)] {
            let r = Rectangle::with_dims(w as i64, h as i64)?;
            let exact = exact_event_prob(&Event::FroboseLocallyInternallyFilled, &r, &m)?;
            lower_ok &= holroyd_lower(w, h, &m, Model::Frobose)?.value() <= exact * (1.0 + 1e-12);
        }
    }
    Ok(vec![
        check("optimal path minimises W", optimal_ok, format!("W(optimal) = {best:.12} against 200 random paths")),
        check(
            "long diagonal approaches 2 int f",
            (diagonal - 2.0 * pi2_6).abs() < 1e-6,
            format!("W_f(diagonal to (40,40)) = {diagonal:.12}"),
        ),
        check("Froebose lower bound below exact probability", lower_ok, "rectangles up to 3x3".into()),
    ])
}
