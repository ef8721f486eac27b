//! Whole-run properties over randomly drawn small configurations.

use proptest::prelude::*;
use socialrec::experiment::{execute, ExperimentConfig, GraphSource};
use socialrec::graph::validate_rows;
use socialrec::recommender::{RecommenderConfig, ScoreBasis, Strategy as Reference};
use socialrec::synthgen::HomophilyKernel;

fn config() -> impl proptest::strategy::Strategy<Value = ExperimentConfig> {
    (
        2usize..40,
        1usize..8,
        1usize..4,
        0usize..8,
        any::<u64>(),
        1.0f64..12.0,
        0usize..4,
        prop::bool::ANY,
        prop::bool::ANY,
    )
        .prop_flat_map(|(n, m, dim, t, seed, delta, d, squared, basis)| {
            (1..=m).prop_map(move |k| ExperimentConfig {
                n_users: n,
                n_creators: m,
                n_topics: dim,
                horizon: t,
                seed,
                graph_source: GraphSource::Homophily {
                    delta,
                    kernel: if squared { HomophilyKernel::SquaredDistance } else { HomophilyKernel::Distance },
                },
                rs: RecommenderConfig {
                    strategy: Reference::from_hops(d),
                    k,
                    temperature: 0.5,
                    score_basis: if basis { ScoreBasis::DistanceToReference } else { ScoreBasis::DistanceToUser },
                },
                metrics_every: 1,
                snapshot_times: vec![],
                ..Default::default()
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runs_stay_in_box_and_rows_stay_stochastic(c in config()) {
        let (_, pop, traj) = execute(&c).unwrap();
        let w = &pop.world;
        prop_assert!(validate_rows(&w.graph, &w.users.recommender_influence).passed());
        for f in &traj.frames {
            prop_assert!(f.users.first_outside_unit_box().is_none());
            prop_assert!(f.creators.first_outside_unit_box().is_none());
        }
        prop_assert_eq!(traj.frames.len(), c.horizon + 1);
        prop_assert_eq!(traj.metrics.len(), c.horizon + 1);
        for m in &traj.metrics {
            prop_assert!(m.sat_running <= 0.0);
            prop_assert!((-1.0..=1.0).contains(&m.clusterization));
        }
    }

    #[test]
    fn repeated_runs_are_identical(c in config()) {
        let (_, _, a) = execute(&c).unwrap();
        let (_, _, b) = execute(&c).unwrap();
        prop_assert_eq!(a, b);
    }
}
