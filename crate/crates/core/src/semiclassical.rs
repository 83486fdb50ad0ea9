//! Trajectory-sum ansatz on diabatic level diagrams.
//!
//! A trajectory runs along diabatic lines from `t = -inf` to `t = +inf`,
//! optionally switching lines at marked crossings. Passing a crossing with
//! pass probability `p = exp(-2 pi g^2 / |slope gap|)` contributes
//! `sqrt(p)` to the amplitude, turning contributes `+- i sqrt(1-p)` with
//! the sign of the coupling, and the transition probability is the squared
//! modulus of the coherent sum over trajectories. The construction is
//! exact for the Demkov-Osherov class (one slanted level against a
//! parallel band) and the bow-tie class (mutually uncoupled slanted levels
//! through one point, coupled equally to a symmetric parallel pair), and
//! only those geometries are accepted.

use thiserror::Error;

use crate::model::MlzModel;
use crate::propagator::TransitionMatrix;
use crate::scalar::{real, LzFloat, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemiclassicalError {
    #[error("coupling ({i},{j}) is complex; the trajectory rules need real couplings")]
    ComplexCoupling { i: usize, j: usize },
    #[error(
        "two coupled crossings coincide at the same diagram point; trajectory rules do not apply"
    )]
    CoincidentCrossings,
    #[error("model outside the ansatz scope: {0}")]
    OutOfAnsatzScope(&'static str),
}

/// One marked (coupled) intersection of two diabatic lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<T: LzFloat> {
    pub time: T,
    pub energy: T,
    /// Level pair, canonical indices.
    pub pair: (usize, usize),
    pub coupling: T,
    /// `exp(-2 pi g^2 / |slope gap|)`.
    pub pass_prob: T,
}

/// Time-ordered coupled crossings of a model's diabatic lines.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingGraph<T: LzFloat> {
    /// `(slope, energy)` per level, canonical order.
    pub levels: Vec<(T, T)>,
    pub crossings: Vec<Crossing<T>>,
}

/// One constant-level stretch of a trajectory; `None` bounds are infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T: LzFloat> {
    pub level: usize,
    pub start: Option<T>,
    pub end: Option<T>,
}

/// A crossing encountered by a trajectory, with the branch taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryEvent {
    pub crossing: usize,
    pub turned: bool,
}

/// A causal path through the diagram from one level at `t = -inf` to one
/// at `t = +inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: LzFloat> {
    pub segments: Vec<Segment<T>>,
    pub events: Vec<TrajectoryEvent>,
}

/// Builds the crossing graph of a model with real couplings.
pub fn crossing_graph<T: LzFloat>(
    model: &MlzModel<T>,
) -> Result<CrossingGraph<T>, SemiclassicalError> {
    let n = model.dimension();
    let tol = real::<T>(crate::model::STRUCTURE_TOL);
    let mut crossings = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let g = model.coupling(i, j);
            if g.norm_sqr() == T::zero() {
                continue;
            }
            if g.im.abs() > tol {
                return Err(SemiclassicalError::ComplexCoupling { i: i + 1, j: j + 1 });
            }
            if model.parallel(i, j) {
                continue; // unreachable for a valid model
            }
            let db = model.slopes()[i] - model.slopes()[j];
            let time = (model.energies()[j] - model.energies()[i]) / db;
            let energy = model.slopes()[i] * time + model.energies()[i];
            let g = g.re;
            let pass_prob = (-real::<T>(2.0) * T::pi() * g * g / db.abs()).exp();
            crossings.push(Crossing {
                time,
                energy,
                pair: (i, j),
                coupling: g,
                pass_prob,
            });
        }
    }
    crossings.sort_by(|a, b| (a.time, a.energy).partial_cmp(&(b.time, b.energy)).unwrap());
    // Two crossings at the same (t, E) point break the pairwise rules.
    // Same time at different energies is fine (disjoint level pairs).
    let point_tol = real::<T>(1e-9);
    for w in crossings.windows(2) {
        if (w[1].time - w[0].time).abs() <= point_tol
            && (w[1].energy - w[0].energy).abs() <= point_tol
        {
            return Err(SemiclassicalError::CoincidentCrossings);
        }
    }
    Ok(CrossingGraph {
        levels: model
            .slopes()
            .iter()
            .zip(model.energies())
            .map(|(&b, &e)| (b, e))
            .collect(),
        crossings,
    })
}

/// All causal trajectories from `from` (at `t = -inf`) to `to`
/// (at `t = +inf`).
pub fn enumerate_trajectories<T: LzFloat>(
    graph: &CrossingGraph<T>,
    from: usize,
    to: usize,
) -> Vec<Trajectory<T>> {
    let mut out = Vec::new();
    let mut events: Vec<TrajectoryEvent> = Vec::new();
    dfs(graph, from, to, 0, &mut events, &mut out);
    out
}

fn dfs<T: LzFloat>(
    graph: &CrossingGraph<T>,
    level: usize,
    to: usize,
    next: usize,
    events: &mut Vec<TrajectoryEvent>,
    out: &mut Vec<Trajectory<T>>,
) {
    let involving = (next..graph.crossings.len())
        .find(|&idx| graph.crossings[idx].pair.0 == level || graph.crossings[idx].pair.1 == level);
    match involving {
        None => {
            if level == to {
                out.push(Trajectory {
                    segments: segments_from_events(graph, events, to),
                    events: events.clone(),
                });
            }
        }
        Some(idx) => {
            let pair = graph.crossings[idx].pair;
            let other = if pair.0 == level { pair.1 } else { pair.0 };
            events.push(TrajectoryEvent {
                crossing: idx,
                turned: false,
            });
            dfs(graph, level, to, idx + 1, events, out);
            events.pop();
            events.push(TrajectoryEvent {
                crossing: idx,
                turned: true,
            });
            dfs(graph, other, to, idx + 1, events, out);
            events.pop();
        }
    }
}

fn segments_from_events<T: LzFloat>(
    graph: &CrossingGraph<T>,
    events: &[TrajectoryEvent],
    final_level: usize,
) -> Vec<Segment<T>> {
    let mut segments = Vec::new();
    let mut start: Option<T> = None;
    // Walk backwards from the final level through the turns.
    let mut levels = Vec::new();
    let mut level = final_level;
    levels.push(level);
    for ev in events.iter().rev() {
        if ev.turned {
            let pair = graph.crossings[ev.crossing].pair;
            level = if pair.0 == level { pair.1 } else { pair.0 };
            levels.push(level);
        }
    }
    levels.reverse();
    let mut li = 0;
    for ev in events {
        if ev.turned {
            let t = graph.crossings[ev.crossing].time;
            segments.push(Segment {
                level: levels[li],
                start,
                end: Some(t),
            });
            start = Some(t);
            li += 1;
        }
    }
    segments.push(Segment {
        level: levels[li],
        start,
        end: None,
    });
    segments
}

/// Amplitude of one trajectory: product of `sqrt(p)` passes and
/// `sign(g) i sqrt(1-p)` turns.
pub fn trajectory_amplitude<T: LzFloat>(traj: &Trajectory<T>, graph: &CrossingGraph<T>) -> C<T> {
    let mut amp = C::new(T::one(), T::zero());
    for ev in &traj.events {
        let cr = &graph.crossings[ev.crossing];
        if ev.turned {
            let mag = (T::one() - cr.pass_prob).sqrt();
            let signed = if cr.coupling < T::zero() { -mag } else { mag };
            amp *= C::new(T::zero(), signed);
        } else {
            amp *= C::new(cr.pass_prob.sqrt(), T::zero());
        }
    }
    amp
}

/// Structural gate: Demkov-Osherov class (single slanted level plus one
/// parallel band) or bow-tie class (uncoupled slanted singletons through a
/// common point, coupled equally to a symmetric parallel pair).
fn check_ansatz_scope<T: LzFloat>(model: &MlzModel<T>) -> Result<(), SemiclassicalError> {
    let groups = model.slope_groups();
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();

    // Demkov-Osherov: two slope values, one of them a single level.
    if sizes.len() == 2 && (sizes[0] == 1 || sizes[1] == 1) {
        return Ok(());
    }

    // Bow-tie: exactly one group of two parallel levels, everything else
    // single slanted levels.
    let pair_groups: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] == 2).collect();
    if pair_groups.len() != 1 || sizes.iter().any(|&s| s > 2) {
        return Err(SemiclassicalError::OutOfAnsatzScope(
            "expected one slanted level with a band, or slanted levels with one parallel pair",
        ));
    }
    let pair = groups[pair_groups[0]].clone();
    let (pa, pb) = (pair.start, pair.start + 1);
    let slanted: Vec<usize> = (0..model.dimension())
        .filter(|k| !pair.contains(k))
        .collect();

    let tol = real::<T>(1e-9);
    for (i, &a) in slanted.iter().enumerate() {
        for &b in &slanted[i + 1..] {
            if model.coupling(a, b).norm_sqr() != T::zero() {
                return Err(SemiclassicalError::OutOfAnsatzScope(
                    "slanted levels must not couple to each other",
                ));
            }
        }
    }
    for &a in &slanted {
        if (model.coupling(a, pa) - model.coupling(a, pb)).norm_sqr() > tol * tol {
            return Err(SemiclassicalError::OutOfAnsatzScope(
                "each slanted level must couple equally to both parallel levels",
            ));
        }
    }
    // Common crossing point of the slanted levels.
    if slanted.len() >= 2 {
        let (b0, e0) = (model.slopes()[slanted[0]], model.energies()[slanted[0]]);
        let (b1, e1) = (model.slopes()[slanted[1]], model.energies()[slanted[1]]);
        let t_star = (e1 - e0) / (b0 - b1);
        let e_star = b0 * t_star + e0;
        for &a in &slanted[2..] {
            let here = model.slopes()[a] * t_star + model.energies()[a];
            if (here - e_star).abs() > tol {
                return Err(SemiclassicalError::OutOfAnsatzScope(
                    "slanted levels must all cross at one point",
                ));
            }
        }
        // Parallel pair symmetric about the crossing point.
        let mid = (model.slopes()[pa] * t_star
            + model.energies()[pa]
            + model.slopes()[pb] * t_star
            + model.energies()[pb])
            * real::<T>(0.5);
        if (mid - e_star).abs() > tol {
            return Err(SemiclassicalError::OutOfAnsatzScope(
                "parallel pair must sit symmetrically about the crossing point",
            ));
        }
    }
    Ok(())
}

/// Transition matrix from the trajectory-sum rules; exact for the accepted
/// geometries, probability-conserving by construction.
pub fn semiclassical_p<T: LzFloat>(
    model: &MlzModel<T>,
) -> Result<TransitionMatrix<T>, SemiclassicalError> {
    check_ansatz_scope(model)?;
    let graph = crossing_graph(model)?;
    let n = model.dimension();
    let mut p = nalgebra::DMatrix::<T>::zeros(n, n);
    for from in 0..n {
        for to in 0..n {
            let amp = enumerate_trajectories(&graph, from, to)
                .iter()
                .fold(C::new(T::zero(), T::zero()), |acc, tr| {
                    acc + trajectory_amplitude(tr, &graph)
                });
            p[(to, from)] = amp.norm_sqr();
        }
    }
    Ok(TransitionMatrix::new(p))
}
