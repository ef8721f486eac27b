//! Numerical oracles for the equilibrium and contraction properties of the
//! dynamics.
//!
//! These deliberately avoid the simulator's update code: the equilibrium is
//! obtained from a dense linear solve of the stacked block system, so that
//! agreement with a long simulated run is evidence for both.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::dynamics::{build_partition, CreatorPopulation, Partition, UserPopulation};
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::opinion::{euclidean, Opinions};
use crate::recommender::{RecommenderConfig, ScoreBasis, Strategy};
use crate::seed::{self, tag};
use crate::simulation::{Simulator, World};
use crate::synthgen::{init_opinions_uniform, sample_params, Interval, ParameterBounds};

/// Power-iteration steps for the spectral radius precheck.
pub const SPECTRAL_STEPS: usize = 200;
/// Systems with spectral radius at or above `1 - STABILITY_MARGIN` are
/// rejected.
pub const STABILITY_MARGIN: f64 = 1e-6;

/// The stacked system `x' = J x + f` over users then creators, for one
/// frozen partition. Topics decouple, so `J` is `(N+M) × (N+M)` and each
/// topic has its own column of `f`.
#[derive(Clone, Debug)]
pub struct FixedPointProblem {
    pub n_users: usize,
    pub n_creators: usize,
    pub jacobian: DMatrix<f64>,
    /// `[Λ u^0; Γ c^0]`, one column per topic.
    pub forcing: DMatrix<f64>,
}

impl FixedPointProblem {
    pub fn assemble(world: &World, partition: &Partition) -> Result<Self> {
        let n = world.users.len();
        let m = world.creators.len();
        let dim = world.users.opinions.dim();
        if partition.n_users() != n || partition.n_creators() != m {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: partition.n_users(),
            });
        }
        let mut j = DMatrix::zeros(n + m, n + m);
        let mut f = DMatrix::zeros(n + m, dim);

        for i in 0..n {
            let keep = 1.0 - world.users.stubbornness[i];
            j[(i, i)] = keep * world.graph.self_weight(i);
            for e in world.graph.in_edges(i) {
                j[(i, e.source)] = keep * e.weight;
            }
            j[(i, n + partition.creator_of(i))] += keep * world.users.recommender_influence[i];
            let lambda = world.users.stubbornness[i];
            for (k, p) in world.users.prejudices.row(i).iter().enumerate() {
                f[(i, k)] = lambda * p;
            }
        }
        for c in 0..m {
            let keep = 1.0 - world.creators.stubbornness[c];
            let e = world.creators.self_influence[c];
            let fb = world.creators.audience_influence[c];
            let audience = partition.audience(c);
            if audience.is_empty() {
                j[(n + c, n + c)] = keep * (e + fb);
            } else {
                j[(n + c, n + c)] = keep * e;
                let share = fb / audience.len() as f64;
                for &i in audience {
                    j[(n + c, i)] = keep * share;
                }
            }
            let gamma = world.creators.stubbornness[c];
            for (k, p) in world.creators.prejudices.row(c).iter().enumerate() {
                f[(n + c, k)] = gamma * p;
            }
        }
        Ok(Self {
            n_users: n,
            n_creators: m,
            jacobian: j,
            forcing: f,
        })
    }

    /// Perron root of the non-negative `J`, estimated from the growth of
    /// `J^k 1` in the max norm.
    pub fn spectral_radius(&self) -> f64 {
        let size = self.jacobian.nrows();
        let mut x = nalgebra::DVector::from_element(size, 1.0);
        let mut estimate = 0.0;
        for _ in 0..SPECTRAL_STEPS {
            let y = &self.jacobian * &x;
            let norm = y.amax();
            if norm == 0.0 {
                return 0.0;
            }
            estimate = norm / x.amax();
            x = y / norm;
        }
        estimate
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub users: Opinions,
    pub creators: Opinions,
    pub spectral_radius: f64,
}

/// Solves `(I - J) x = f` directly.
pub fn closed_form_equilibrium(problem: &FixedPointProblem) -> Result<Equilibrium> {
    let rho = problem.spectral_radius();
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    let size = problem.jacobian.nrows();
    let system = DMatrix::identity(size, size) - &problem.jacobian;
    let x = system
        .lu()
        .solve(&problem.forcing)
        .ok_or(Error::Unstable { spectral_radius: rho })?;
    let dim = problem.forcing.ncols();
    let rows = |range: std::ops::Range<usize>| {
        let data = range.flat_map(|r| (0..dim).map(move |k| (r, k))).map(|(r, k)| x[(r, k)]).collect();
        Opinions::from_flat(dim, data)
    };
    Ok(Equilibrium {
        users: rows(0..problem.n_users)?,
        creators: rows(problem.n_users..size)?,
        spectral_radius: rho,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplementarityReport {
    pub user: usize,
    pub epsilon: f64,
    /// Largest `|A_ii + Σ_j A_ij + B_i - 1|` over all users.
    pub row_identity_residual: f64,
    pub row_identity_holds: bool,
    /// Displacement of `u*_i` after the transfer.
    pub shift: Vec<f64>,
    /// Projection of the shift onto `c*_{j(i)} - mean of neighbour u*`.
    pub projection_on_content: f64,
    /// Shift does not point towards the consumed content.
    pub moves_toward_neighbours: bool,
}

/// Moves `epsilon` of user `i`'s recommender weight onto its social
/// neighbours, spread evenly, and compares the two equilibria.
pub fn complementarity_check(
    world: &World,
    partition: &Partition,
    user: usize,
    epsilon: f64,
) -> Result<ComplementarityReport> {
    let n = world.users.len();
    if user >= n {
        return Err(Error::IndexOutOfRange { index: user, len: n });
    }
    let degree = world.graph.in_degree(user);
    if degree == 0 {
        return Err(Error::NoNeighbours(user));
    }
    let b = world.users.recommender_influence[user];
    if !(0.0..=b).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "transfer {epsilon} must lie in [0, B_i = {b}]"
        )));
    }

    let row_identity_residual = (0..n)
        .map(|i| {
            (world.graph.self_weight(i) + world.graph.neighbour_mass(i) + world.users.recommender_influence[i]
                - 1.0)
                .abs()
        })
        .fold(0.0, f64::max);

    let base = closed_form_equilibrium(&FixedPointProblem::assemble(world, partition)?)?;

    let mut shifted = world.clone();
    let in_weights: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let extra = if i == user { epsilon / degree as f64 } else { 0.0 };
            world.graph.in_edges(i).iter().map(|e| e.weight + extra).collect()
        })
        .collect();
    shifted.graph = world.graph.reweighted(world.graph.self_weights().to_vec(), &in_weights)?;
    shifted.users.recommender_influence[user] = b - epsilon;
    let moved = closed_form_equilibrium(&FixedPointProblem::assemble(&shifted, partition)?)?;

    let neighbours: Vec<usize> = world.graph.in_edges(user).iter().map(|e| e.source).collect();
    let neighbour_mean = base.users.mean_of(&neighbours);
    let content = base.creators.row(partition.creator_of(user));
    let shift: Vec<f64> = moved
        .users
        .row(user)
        .iter()
        .zip(base.users.row(user))
        .map(|(a, b)| a - b)
        .collect();
    let projection: f64 = shift
        .iter()
        .zip(content.iter().zip(&neighbour_mean))
        .map(|(s, (c, m))| s * (c - m))
        .sum();

    Ok(ComplementarityReport {
        user,
        epsilon,
        row_identity_residual,
        row_identity_holds: row_identity_residual <= 1e-12,
        shift,
        projection_on_content: projection,
        moves_toward_neighbours: projection <= 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaTrace {
    pub eta: f64,
    pub alphas: Vec<f64>,
}

impl AlphaTrace {
    pub fn within_bounds(&self) -> bool {
        self.alphas.iter().all(|&a| self.eta <= a && a <= 1.0)
    }

    pub fn non_decreasing(&self) -> bool {
        self.alphas.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Iterates `α ← 1 + η - η/α`, the contraction factor of a user pulled
/// towards a fixed creator.
pub fn alpha_recursion(eta: f64, alpha0: f64, steps: usize) -> Result<AlphaTrace> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} must lie in (0, 1)")));
    }
    if !(eta..=1.0).contains(&alpha0) {
        return Err(Error::InvalidParameter(format!(
            "alpha0 = {alpha0} must lie in [{eta}, 1]"
        )));
    }
    let mut alphas = Vec::with_capacity(steps + 1);
    alphas.push(alpha0);
    let mut a = alpha0;
    for _ in 0..steps {
        // same map as 1 + η - η/α, arranged so both fixed points are exact
        a += (a - eta) * (1.0 - a) / a;
        alphas.push(a);
    }
    Ok(AlphaTrace { eta, alphas })
}

/// Population for the static-partition scenario: no user-user edges,
/// stubborn creators, users starting at their prejudice.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StaticPartitionConfig {
    pub n_users: usize,
    pub n_creators: usize,
    pub n_topics: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for StaticPartitionConfig {
    fn default() -> Self {
        Self {
            n_users: 50,
            n_creators: 5,
            n_topics: 2,
            horizon: 200,
            seed: 0,
        }
    }
}

pub fn static_partition_world(config: &StaticPartitionConfig) -> Result<World> {
    let mut rng = seed::rng(config.seed, &[tag::THEORY, 1]);
    let u0 = init_opinions_uniform(config.n_users, config.n_topics, &mut rng);
    let c0 = init_opinions_uniform(config.n_creators, config.n_topics, &mut rng);
    let bounds = ParameterBounds::table1();
    let topo = SocialGraph::new(config.n_users, [], vec![1.0; config.n_users])?;
    let p = sample_params(&topo, config.n_creators, &bounds, &mut rng)?;
    Ok(World {
        graph: p.graph,
        users: UserPopulation::at_prejudice(u0, p.users.stubbornness, p.users.recommender_influence)?,
        creators: CreatorPopulation::new(
            c0.clone(),
            c0,
            vec![1.0; config.n_creators],
            p.creators.self_influence,
            p.creators.audience_influence,
        )?,
    })
}

/// Relative slack on the distance and ratio checks, covering rounding.
pub const CONTRACTION_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct StaticPartitionReport {
    pub steps: usize,
    pub partition_static: bool,
    pub distances_non_increasing: bool,
    pub ratios_within_bounds: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub violations: Vec<String>,
}

impl StaticPartitionReport {
    pub fn passed(&self) -> bool {
        self.partition_static && self.distances_non_increasing && self.ratios_within_bounds
    }
}

/// Runs the greedy, `k = 1` loop on a world meeting the scenario's
/// preconditions and checks that the partition never changes, each user's
/// distance to its creator never grows, and the per-step contraction ratio
/// stays within `[η_i, 1]` with `η_i = (1 - Λ_i) A_ii`.
pub fn static_partition_check(world: World, horizon: usize, seed: u64) -> Result<StaticPartitionReport> {
    if world.graph.n_edges() != 0 {
        return Err(Error::InvalidParameter("scenario needs a diagonal social matrix".into()));
    }
    if world.creators.stubbornness.iter().any(|&g| g != 1.0) {
        return Err(Error::InvalidParameter("scenario needs fully stubborn creators".into()));
    }
    if world.users.opinions != world.users.prejudices {
        return Err(Error::InvalidParameter("users must start at their prejudice".into()));
    }
    let rs = RecommenderConfig {
        strategy: Strategy::Greedy,
        k: 1,
        temperature: 0.5,
        score_basis: ScoreBasis::DistanceToUser,
    };
    let etas: Vec<f64> = (0..world.users.len())
        .map(|i| (1.0 - world.users.stubbornness[i]) * world.graph.self_weight(i))
        .collect();
    let mut sim = Simulator::new(world, rs, seed)?;

    let mut report = StaticPartitionReport {
        steps: horizon,
        partition_static: true,
        distances_non_increasing: true,
        ratios_within_bounds: true,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        violations: Vec::new(),
    };
    let mut first: Option<Vec<usize>> = None;
    for _ in 0..horizon {
        let before = sim.world().users.opinions.clone();
        let record = sim.step()?;
        let assignment = record.partition.assignment().to_vec();
        match &first {
            None => first = Some(assignment.clone()),
            Some(f) if *f != assignment => {
                report.partition_static = false;
                report.violations.push(format!("partition changed at t={}", record.t));
            }
            _ => {}
        }
        let after = &sim.world().users.opinions;
        let creators = &sim.world().creators.opinions;
        for (i, &c) in assignment.iter().enumerate() {
            let d0 = euclidean(before.row(i), creators.row(c));
            let d1 = euclidean(after.row(i), creators.row(c));
            if d1 > d0 * (1.0 + CONTRACTION_SLACK) {
                report.distances_non_increasing = false;
                report
                    .violations
                    .push(format!("user {i} moved away at t={}: {d0} -> {d1}", record.t));
            }
            if d0 > 0.0 {
                let ratio = d1 / d0;
                report.min_ratio = report.min_ratio.min(ratio);
                report.max_ratio = report.max_ratio.max(ratio);
                if ratio < etas[i] - CONTRACTION_SLACK || ratio > 1.0 + CONTRACTION_SLACK {
                    report.ratios_within_bounds = false;
                    report.violations.push(format!(
                        "user {i} ratio {ratio} outside [{}, 1] at t={}",
                        etas[i], record.t
                    ));
                }
            }
        }
    }
    Ok(report)
}

/// A random frozen-partition instance whose stubbornness is bounded below,
/// which makes the stacked system a strict contraction.
pub fn random_stable_instance(
    n_users: usize,
    n_creators: usize,
    n_topics: usize,
    min_stubbornness: f64,
    seed_value: u64,
) -> Result<(World, Partition)> {
    let mut rng = seed::rng(seed_value, &[tag::THEORY, 2]);
    let u0 = init_opinions_uniform(n_users, n_topics, &mut rng);
    let c0 = init_opinions_uniform(n_creators, n_topics, &mut rng);
    let mut edges = Vec::new();
    for i in 0..n_users {
        for j in 0..n_users {
            if i != j && rng.random::<f64>() < 0.2 {
                edges.push((j, i, 0.0));
            }
        }
    }
    let topo = SocialGraph::new(n_users, edges, vec![1.0; n_users])?;
    let bounds = ParameterBounds {
        user_stubbornness: Interval::new(min_stubbornness, 0.5),
        creator_stubbornness: Interval::new(min_stubbornness, 0.5),
        ..ParameterBounds::table1()
    };
    let p = sample_params(&topo, n_creators, &bounds, &mut rng)?;
    let choices: Vec<usize> = (0..n_users).map(|_| rng.random_range(0..n_creators)).collect();
    let world = World {
        graph: p.graph,
        users: UserPopulation::at_prejudice(u0, p.users.stubbornness, p.users.recommender_influence)?,
        creators: CreatorPopulation::new(
            c0.clone(),
            c0,
            p.creators.stubbornness,
            p.creators.self_influence,
            p.creators.audience_influence,
        )?,
    };
    Ok((world, build_partition(&choices, n_creators)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumAgreement {
    pub steps: usize,
    pub spectral_radius: f64,
    /// `‖state^T - x*‖_∞` over users and creators.
    pub max_abs_error: f64,
    pub equilibrium_in_unit_box: bool,
}

/// Simulates `steps` frozen-partition steps and compares with the direct
/// solve.
pub fn equilibrium_agreement(world: World, partition: &Partition, steps: usize) -> Result<EquilibriumAgreement> {
    let eq = closed_form_equilibrium(&FixedPointProblem::assemble(&world, partition)?)?;
    let mut sim = Simulator::new(world, RecommenderConfig { k: 1, ..Default::default() }, 0)?;
    for _ in 0..steps {
        sim.step_with(partition.clone())?;
    }
    let w = sim.world();
    let err = w
        .users
        .opinions
        .max_abs_diff(&eq.users)
        .max(w.creators.opinions.max_abs_diff(&eq.creators));
    Ok(EquilibriumAgreement {
        steps,
        spectral_radius: eq.spectral_radius,
        max_abs_error: err,
        equilibrium_in_unit_box: eq.users.first_outside_unit_box().is_none()
            && eq.creators.first_outside_unit_box().is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ops(rows: &[&[f64]]) -> Opinions {
        Opinions::from_rows(rows).unwrap()
    }

    #[test]
    fn fully_stubborn_equilibrium_is_prejudice() {
        let (mut w, p) = random_stable_instance(8, 2, 2, 0.05, 1).unwrap();
        w.users.stubbornness.iter_mut().for_each(|l| *l = 1.0);
        w.creators.stubbornness.iter_mut().for_each(|g| *g = 1.0);
        let eq = closed_form_equilibrium(&FixedPointProblem::assemble(&w, &p).unwrap()).unwrap();
        assert!(eq.users.max_abs_diff(&w.users.prejudices) < 1e-15);
        assert!(eq.creators.max_abs_diff(&w.creators.prejudices) < 1e-15);
        assert_eq!(eq.spectral_radius, 0.0);
    }

    #[test]
    fn scalar_hand_solution() {
        let (u0, c0) = (0.4, -0.6);
        let w = World {
            graph: SocialGraph::new(1, [], vec![0.5]).unwrap(),
            users: UserPopulation::at_prejudice(ops(&[&[u0]]), vec![0.5], vec![0.5]).unwrap(),
            creators: CreatorPopulation::new(ops(&[&[c0]]), ops(&[&[c0]]), vec![1.0], vec![0.5], vec![0.5])
                .unwrap(),
        };
        let p = build_partition(&[0], 1).unwrap();
        let eq = closed_form_equilibrium(&FixedPointProblem::assemble(&w, &p).unwrap()).unwrap();
        // u = 0.5 (0.5 u + 0.5 c0) + 0.5 u0
        let expected = (0.25 * c0 + 0.5 * u0) / 0.75;
        assert!((eq.users.row(0)[0] - expected).abs() < 1e-15);
        assert_eq!(eq.creators.row(0)[0], c0);
    }

    #[test]
    fn unstable_system_rejected() {
        let w = World {
            graph: SocialGraph::new(1, [], vec![0.5]).unwrap(),
            users: UserPopulation::at_prejudice(ops(&[&[0.1]]), vec![0.0], vec![0.5]).unwrap(),
            creators: CreatorPopulation::new(ops(&[&[0.2]]), ops(&[&[0.2]]), vec![0.0], vec![0.5], vec![0.5])
                .unwrap(),
        };
        let p = build_partition(&[0], 1).unwrap();
        assert!(matches!(
            closed_form_equilibrium(&FixedPointProblem::assemble(&w, &p).unwrap()),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn long_run_matches_direct_solve() {
        let (w, p) = random_stable_instance(20, 3, 2, 0.05, 3).unwrap();
        let r = equilibrium_agreement(w, &p, 10_000).unwrap();
        assert!(r.max_abs_error <= 1e-8, "{}", r.max_abs_error);
        assert!(r.equilibrium_in_unit_box);
    }

    fn line_instance() -> (World, Partition) {
        // 0 -> 1 -> 2, user 1 consumes creator 0 at +0.9 while its
        // neighbour sits near -0.5
        let graph = SocialGraph::new(3, [(0, 1, 0.1), (1, 2, 0.1)], vec![0.6, 0.6, 0.6]).unwrap();
        let w = World {
            graph,
            users: UserPopulation::at_prejudice(
                ops(&[&[-0.5], &[0.0], &[0.2]]),
                vec![0.3, 0.3, 0.3],
                vec![0.4, 0.3, 0.3],
            )
            .unwrap(),
            creators: CreatorPopulation::new(
                ops(&[&[0.9], &[-0.9]]),
                ops(&[&[0.9], &[-0.9]]),
                vec![0.4, 0.4],
                vec![0.7, 0.7],
                vec![0.3, 0.3],
            )
            .unwrap(),
        };
        (w, build_partition(&[1, 0, 0], 2).unwrap())
    }

    #[test]
    fn zero_transfer_changes_nothing() {
        let (w, p) = line_instance();
        let r = complementarity_check(&w, &p, 1, 0.0).unwrap();
        assert!(r.row_identity_holds);
        assert!(r.shift.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn transfer_pulls_toward_neighbours() {
        let (w, p) = line_instance();
        let r = complementarity_check(&w, &p, 1, 0.05).unwrap();
        assert!(r.row_identity_holds);
        assert!(r.projection_on_content < 0.0, "{r:?}");
        assert!(r.moves_toward_neighbours);
    }

    #[test]
    fn transfer_needs_neighbours() {
        let (w, p) = line_instance();
        assert!(matches!(complementarity_check(&w, &p, 0, 0.05), Err(Error::NoNeighbours(0))));
    }

    #[test]
    fn alpha_fixed_points_and_hand_value() {
        let t = alpha_recursion(0.3, 1.0, 50).unwrap();
        assert!(t.alphas.iter().all(|&a| a == 1.0));
        let t = alpha_recursion(0.3, 0.3, 50).unwrap();
        assert!(t.alphas.iter().all(|&a| a == 0.3));
        let t = alpha_recursion(0.5, 0.8, 1).unwrap();
        assert!((t.alphas[1] - 0.875).abs() < 1e-15);
        assert!(alpha_recursion(0.5, 0.4, 1).is_err());
        assert!(alpha_recursion(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn single_user_single_creator_contracts() {
        let cfg = StaticPartitionConfig {
            n_users: 1,
            n_creators: 1,
            n_topics: 2,
            horizon: 60,
            seed: 4,
        };
        let w = static_partition_world(&cfg).unwrap();
        let eta = (1.0 - w.users.stubbornness[0]) * w.graph.self_weight(0);
        let r = static_partition_check(w, cfg.horizon, 0).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.min_ratio >= eta - CONTRACTION_SLACK);
    }

    #[test]
    fn frozen_user_keeps_its_distance() {
        let cfg = StaticPartitionConfig {
            n_users: 3,
            n_creators: 2,
            horizon: 20,
            ..Default::default()
        };
        let mut w = static_partition_world(&cfg).unwrap();
        w.users.stubbornness[0] = 1.0;
        let creator = crate::recommender::topk_candidates(w.users.opinions.row(0), &w.creators.opinions, 1).unwrap()[0];
        let d = euclidean(w.users.opinions.row(0), w.creators.opinions.row(creator));
        let mut sim = Simulator::new(w, RecommenderConfig { k: 1, ..Default::default() }, 0).unwrap();
        for _ in 0..20 {
            sim.step().unwrap();
            let now = euclidean(sim.world().users.opinions.row(0), sim.world().creators.opinions.row(creator));
            assert_eq!(now, d);
        }
    }

    #[test]
    fn scenario_preconditions_enforced() {
        let (w, _) = random_stable_instance(5, 2, 2, 0.05, 0).unwrap();
        assert!(static_partition_check(w, 5, 0).is_err());
    }
}
