//! The closed loop: recommend, consume, update, measure.
//!
//! Each step runs from the time-t snapshot:
//! 1. the recommender builds a reference and a top-k candidate set per user,
//! 2. every user samples one creator,
//! 3. the choices form the partition,
//! 4. users and creators update synchronously,
//! 5. metrics are recorded for the new state.

use rayon::prelude::*;

use crate::dynamics::{build_partition, creator_step, user_step, CreatorPopulation, Partition, UserPopulation};
use crate::error::{Error, Result};
use crate::graph::{validate_rows, SocialGraph};
use crate::metrics::{global_clusterization, summarize};
use crate::opinion::{euclidean, Opinions};
use crate::recommender::{Recommender, RecommenderConfig};
use crate::seed::{self, tag};

/// Graph plus both populations: everything the dynamics act on.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub graph: SocialGraph,
    pub users: UserPopulation,
    pub creators: CreatorPopulation,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        self.users.validate()?;
        self.creators.validate()?;
        if self.graph.n_users() != self.users.len() {
            return Err(Error::DimensionMismatch {
                expected: self.users.len(),
                found: self.graph.n_users(),
            });
        }
        if self.users.opinions.dim() != self.creators.opinions.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.users.opinions.dim(),
                found: self.creators.opinions.dim(),
            });
        }
        if self.creators.is_empty() {
            return Err(Error::InvalidParameter("at least one creator is required".into()));
        }
        let rows = validate_rows(&self.graph, &self.users.recommender_influence);
        if !rows.passed() {
            return Err(Error::InvalidWeight(format!(
                "rows of users {:?} are not stochastic (max residual {:e})",
                rows.failing_users(),
                rows.max_residual
            )));
        }
        self.check_convexity(0)
    }

    fn check_convexity(&self, t: usize) -> Result<()> {
        let checks = [
            ("user", &self.users.opinions),
            ("user prejudice", &self.users.prejudices),
            ("creator", &self.creators.opinions),
            ("creator prejudice", &self.creators.prejudices),
        ];
        for (kind, ops) in checks {
            if let Some((index, value)) = ops.first_outside_unit_box() {
                return Err(Error::ConvexityViolation { kind, index, t, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub recommender: RecommenderConfig,
    /// Record metrics every this many steps; `None` disables them.
    pub metrics_every: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    /// Mean over users of `-(1/t) Σ_{s<t} distance`; zero at `t = 0`.
    pub sat_running: f64,
    /// Negated mean distance of the consumption at `t - 1`; zero at `t = 0`.
    pub sat_instant: f64,
    pub clusterization: f64,
    pub chosen_k: usize,
    /// Variance over users of the running satisfaction.
    pub sat_variance: f64,
    /// Variance over users of the silhouettes.
    pub sil_variance: f64,
}

/// What happened at one step: who consumed what, and how far away it was.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub partition: Partition,
    /// `‖u_i^t - c_{j(i)}^t‖` per user.
    pub distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub t: usize,
    pub users: Opinions,
    pub creators: Opinions,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    /// States `0..=T`.
    pub frames: Vec<Frame>,
    /// Consumption at steps `0..T`.
    pub steps: Vec<StepRecord>,
    pub metrics: Vec<MetricsRow>,
}

/// Step-by-step driver over an owned [`World`].
pub struct Simulator {
    world: World,
    recommender: Recommender,
    seed: u64,
    t: usize,
    distance_sums: Vec<f64>,
    last_distances: Vec<f64>,
}

impl Simulator {
    pub fn new(world: World, recommender: RecommenderConfig, seed: u64) -> Result<Self> {
        world.validate()?;
        let recommender = Recommender::new(recommender, &world.graph, world.creators.len())?;
        let n = world.users.len();
        Ok(Self {
            world,
            recommender,
            seed,
            t: 0,
            distance_sums: vec![0.0; n],
            last_distances: vec![0.0; n],
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn into_world(self) -> World {
        self.world
    }

    pub fn recommender(&self) -> &Recommender {
        &self.recommender
    }

    /// Creator consumed by every user at the current step. Each user draws
    /// from its own `(seed, t, i)` stream.
    pub fn choose(&self) -> Vec<usize> {
        let users = &self.world.users.opinions;
        let creators = &self.world.creators.opinions;
        (0..users.len())
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::rng(self.seed, &[tag::CHOICE, self.t as u64, i as u64]);
                self.recommender.choose(users, creators, i, &mut rng)
            })
            .collect()
    }

    /// One full recommend-consume-update step.
    pub fn step(&mut self) -> Result<StepRecord> {
        let choices = self.choose();
        let partition = build_partition(&choices, self.world.creators.len())?;
        self.advance(partition)
    }

    /// Advances under a partition chosen by the caller instead of the
    /// recommender.
    pub fn step_with(&mut self, partition: Partition) -> Result<StepRecord> {
        self.advance(partition)
    }

    fn advance(&mut self, partition: Partition) -> Result<StepRecord> {
        let users = &self.world.users.opinions;
        let creators = &self.world.creators.opinions;
        let distances: Vec<f64> = (0..users.len())
            .map(|i| euclidean(users.row(i), creators.row(partition.creator_of(i))))
            .collect();

        let next_users = user_step(&self.world.users, &self.world.graph, &self.world.creators, &partition)?;
        let next_creators = creator_step(&self.world.creators, &self.world.users, &partition)?;
        self.world.users.opinions = next_users;
        self.world.creators.opinions = next_creators;
        let record = StepRecord {
            t: self.t,
            partition,
            distances,
        };
        self.t += 1;
        self.world.check_convexity(self.t)?;

        for ((sum, last), d) in self
            .distance_sums
            .iter_mut()
            .zip(self.last_distances.iter_mut())
            .zip(&record.distances)
        {
            *sum += d;
            *last = *d;
        }
        Ok(record)
    }

    /// Metrics for the current state and the consumption so far.
    pub fn metrics(&self) -> Result<MetricsRow> {
        let cl = global_clusterization(
            &self.world.users.opinions,
            None,
            seed::derive(self.seed, &[tag::METRICS, self.t as u64]),
        )?;
        let (running, instant) = if self.t == 0 {
            (summarize(&[0.0]), 0.0)
        } else {
            let per_user: Vec<f64> = self
                .distance_sums
                .iter()
                .map(|s| -s / self.t as f64)
                .collect();
            let instant = -self.last_distances.iter().sum::<f64>() / self.last_distances.len() as f64;
            (summarize(&per_user), instant)
        };
        Ok(MetricsRow {
            t: self.t,
            sat_running: running.mean,
            sat_instant: instant,
            clusterization: cl.value,
            chosen_k: cl.chosen_k,
            sat_variance: running.variance,
            sil_variance: cl.variance,
        })
    }

    fn frame(&self) -> Frame {
        Frame {
            t: self.t,
            users: self.world.users.opinions.clone(),
            creators: self.world.creators.opinions.clone(),
        }
    }
}

/// Runs `config.horizon` steps and keeps every state, every consumption
/// record and the requested metrics rows.
pub fn simulate(world: World, config: &SimulationConfig, seed: u64) -> Result<Trajectory> {
    let mut sim = Simulator::new(world, config.recommender, seed)?;
    let every = match config.metrics_every {
        Some(0) => return Err(Error::InvalidParameter("metrics_every must be positive".into())),
        other => other,
    };
    let mut traj = Trajectory::default();
    let record_metrics = |sim: &Simulator, traj: &mut Trajectory| -> Result<()> {
        if let Some(e) = every {
            if sim.t().is_multiple_of(e) {
                traj.metrics.push(sim.metrics()?);
            }
        }
        Ok(())
    };

    traj.frames.push(sim.frame());
    record_metrics(&sim, &mut traj)?;
    for _ in 0..config.horizon {
        traj.steps.push(sim.step()?);
        traj.frames.push(sim.frame());
        record_metrics(&sim, &mut traj)?;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::Strategy;
    use crate::synthgen::{generate_homophily_graph, init_opinions_uniform, sample_params, HomophilyKernel, ParameterBounds};

    fn small_world(n: usize, m: usize, s: u64) -> World {
        let mut rng = seed::rng(s, &[]);
        let u0 = init_opinions_uniform(n, 2, &mut rng);
        let c0 = init_opinions_uniform(m, 2, &mut rng);
        let topo = generate_homophily_graph(&u0, 6.0, HomophilyKernel::Distance, &mut rng).unwrap();
        let p = sample_params(&topo, m, &ParameterBounds::table1(), &mut rng).unwrap();
        World {
            graph: p.graph,
            users: UserPopulation::at_prejudice(u0, p.users.stubbornness, p.users.recommender_influence).unwrap(),
            creators: CreatorPopulation::new(
                c0.clone(),
                c0,
                p.creators.stubbornness,
                p.creators.self_influence,
                p.creators.audience_influence,
            )
            .unwrap(),
        }
    }

    fn config(horizon: usize, d: usize) -> SimulationConfig {
        SimulationConfig {
            horizon,
            recommender: RecommenderConfig {
                strategy: Strategy::from_hops(d),
                k: 3,
                temperature: 0.5,
                ..Default::default()
            },
            metrics_every: Some(1),
        }
    }

    #[test]
    fn zero_horizon_keeps_initial_state_only() {
        let w = small_world(20, 4, 1);
        let traj = simulate(w.clone(), &config(0, 0), 5).unwrap();
        assert_eq!(traj.frames.len(), 1);
        assert!(traj.steps.is_empty());
        assert_eq!(traj.metrics.len(), 1);
        assert_eq!(traj.frames[0].users, w.users.opinions);
    }

    #[test]
    fn fully_stubborn_world_is_frozen() {
        let mut w = small_world(30, 5, 2);
        w.users.stubbornness.iter_mut().for_each(|l| *l = 1.0);
        w.creators.stubbornness.iter_mut().for_each(|g| *g = 1.0);
        let traj = simulate(w.clone(), &config(15, 2), 9).unwrap();
        for f in &traj.frames {
            assert_eq!(f.users, w.users.opinions);
            assert_eq!(f.creators, w.creators.opinions);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let w = small_world(40, 6, 3);
        let a = simulate(w.clone(), &config(12, 1), 77).unwrap();
        let b = simulate(w.clone(), &config(12, 1), 77).unwrap();
        assert_eq!(a, b);
        let c = simulate(w, &config(12, 1), 78).unwrap();
        assert_ne!(a.steps, c.steps);
    }

    #[test]
    fn partition_matches_recorded_choices() {
        let w = small_world(25, 4, 4);
        let mut sim = Simulator::new(w, config(1, 0).recommender, 13).unwrap();
        let choices = sim.choose();
        let record = sim.step().unwrap();
        assert_eq!(record.partition.assignment(), choices.as_slice());
        let total: usize = (0..4).map(|j| record.partition.audience(j).len()).sum();
        assert_eq!(total, 25);
    }

    #[test]
    fn metrics_cadence() {
        let w = small_world(20, 4, 5);
        let mut cfg = config(10, 0);
        cfg.metrics_every = Some(3);
        let traj = simulate(w, &cfg, 1).unwrap();
        let ts: Vec<usize> = traj.metrics.iter().map(|m| m.t).collect();
        assert_eq!(ts, vec![0, 3, 6, 9]);
        assert_eq!(traj.metrics[0].sat_running, 0.0);
        assert!(traj.metrics.iter().all(|m| m.sat_running <= 0.0 && m.sat_instant <= 0.0));
    }

    #[test]
    fn running_satisfaction_replays_from_log() {
        let w = small_world(30, 5, 6);
        let traj = simulate(w, &config(8, 2), 21).unwrap();
        for row in traj.metrics.iter().filter(|r| r.t > 0) {
            let per_user: Vec<f64> = (0..30)
                .map(|i| {
                    let d: Vec<f64> = traj.steps[..row.t]
                        .iter()
                        .map(|s| {
                            let f = &traj.frames[s.t];
                            euclidean(f.users.row(i), f.creators.row(s.partition.creator_of(i)))
                        })
                        .collect();
                    crate::metrics::user_satisfaction(&d).unwrap()
                })
                .collect();
            let mean = per_user.iter().sum::<f64>() / 30.0;
            assert!((mean - row.sat_running).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_rows_rejected() {
        let mut w = small_world(10, 3, 7);
        w.users.recommender_influence[0] += 0.01;
        assert!(Simulator::new(w, config(1, 0).recommender, 0).is_err());
    }

    #[test]
    fn permuting_users_permutes_the_dynamics() {
        // frozen partition so the sampling streams cannot differ
        let w = small_world(12, 3, 8);
        let n = 12;
        let perm: Vec<usize> = (0..n).map(|i| (i * 5 + 3) % n).collect(); // new index -> old index
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let pick = |ops: &Opinions| {
            Opinions::from_rows(&perm.iter().map(|&o| ops.row(o).to_vec()).collect::<Vec<_>>()).unwrap()
        };
        let edges: Vec<_> = w.graph.edges().map(|(s, t, wt)| (inv[s], inv[t], wt)).collect();
        let pw = World {
            graph: SocialGraph::new(n, edges, perm.iter().map(|&o| w.graph.self_weight(o)).collect()).unwrap(),
            users: UserPopulation::new(
                pick(&w.users.opinions),
                pick(&w.users.prejudices),
                perm.iter().map(|&o| w.users.stubbornness[o]).collect(),
                perm.iter().map(|&o| w.users.recommender_influence[o]).collect(),
            )
            .unwrap(),
            creators: w.creators.clone(),
        };
        let choices: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let pchoices: Vec<usize> = perm.iter().map(|&o| choices[o]).collect();
        let rs = config(0, 0).recommender;
        let mut a = Simulator::new(w, rs, 0).unwrap();
        let mut b = Simulator::new(pw, rs, 0).unwrap();
        for _ in 0..20 {
            a.step_with(build_partition(&choices, 3).unwrap()).unwrap();
            b.step_with(build_partition(&pchoices, 3).unwrap()).unwrap();
        }
        for (new, &old) in perm.iter().enumerate() {
            for (x, y) in a.world().users.opinions.row(old).iter().zip(b.world().users.opinions.row(new)) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        assert!(a.world().creators.opinions.max_abs_diff(&b.world().creators.opinions) < 1e-14);
    }
}
