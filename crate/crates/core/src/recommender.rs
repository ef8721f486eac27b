//! Two-stage recommendation: a reference point per user, the `k` creators
//! nearest to it, then a softmax draw over that candidate set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::opinion::{euclidean, Opinions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    /// Reference is the user's own opinion.
    Greedy,
    /// Reference is the mean opinion of the user's d-hop influencers.
    DHop { d: usize },
}

impl Strategy {
    pub fn from_hops(d: usize) -> Self {
        if d == 0 {
            Strategy::Greedy
        } else {
            Strategy::DHop { d }
        }
    }

    pub fn hops(self) -> usize {
        match self {
            Strategy::Greedy => 0,
            Strategy::DHop { d } => d,
        }
    }
}

/// What the softmax scores candidates against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreBasis {
    #[default]
    DistanceToUser,
    DistanceToReference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommenderConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub temperature: f64,
    #[serde(default)]
    pub score_basis: ScoreBasis,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            k: 5,
            temperature: 0.5,
            score_basis: ScoreBasis::DistanceToUser,
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self, n_creators: usize) -> Result<()> {
        if self.k == 0 || self.k > n_creators {
            return Err(Error::InvalidParameter(format!(
                "k = {} must lie in 1..={n_creators}",
                self.k
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// `r_i = mean { u_j : j ∈ in_i(d) }`.
pub fn reference(users: &Opinions, graph: &SocialGraph, i: usize, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        if i >= users.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: users.len(),
            });
        }
        return Ok(users.row(i).to_vec());
    }
    let set = graph.d_hop_influencers(i, d)?;
    Ok(users.mean_of(&set))
}

/// Indices of the `k` creators closest to `r`, nearest first. Equal
/// distances go to the lower index.
pub fn topk_candidates(r: &[f64], creators: &Opinions, k: usize) -> Result<Vec<usize>> {
    if k > creators.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the {} available creators",
            creators.len()
        )));
    }
    let mut scored: Vec<(f64, usize)> = creators
        .rows()
        .enumerate()
        .map(|(j, c)| (euclidean(c, r), j))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, j)| j).collect())
}

/// Softmax probabilities `∝ exp(-‖c_j - anchor‖ / τ)` over `candidates`.
pub fn choice_probabilities(
    anchor: &[f64],
    candidates: &[usize],
    creators: &Opinions,
    temperature: f64,
) -> Vec<f64> {
    let dist: Vec<f64> = candidates
        .iter()
        .map(|&j| euclidean(creators.row(j), anchor))
        .collect();
    let min = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = dist
        .iter()
        .map(|d| (-(d - min) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Draws one creator from `candidates`.
pub fn sample_choice<R: Rng + ?Sized>(
    anchor: &[f64],
    candidates: &[usize],
    creators: &Opinions,
    temperature: f64,
    rng: &mut R,
) -> usize {
    assert!(!candidates.is_empty(), "candidate set must be non-empty");
    if candidates.len() == 1 {
        return candidates[0];
    }
    let probs = choice_probabilities(anchor, candidates, creators, temperature);
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (&j, p) in candidates.iter().zip(&probs) {
        acc += p;
        if x < acc {
            return j;
        }
    }
    // x landed in the rounding gap above the last cumulative sum
    *candidates
        .iter()
        .zip(&probs)
        .rev()
        .find(|(_, &p)| p > 0.0)
        .map(|(j, _)| j)
        .unwrap_or(&candidates[0])
}

/// A recommender bound to one social graph, with the influencer sets
/// precomputed since the graph is static during a run.
#[derive(Clone, Debug)]
pub struct Recommender {
    config: RecommenderConfig,
    influencers: Option<Vec<Vec<u32>>>,
}

impl Recommender {
    pub fn new(config: RecommenderConfig, graph: &SocialGraph, n_creators: usize) -> Result<Self> {
        config.validate(n_creators)?;
        let influencers = match config.strategy {
            Strategy::Greedy => None,
            Strategy::DHop { d } => Some(
                (0..graph.n_users())
                    .map(|i| {
                        graph
                            .d_hop_influencers(i, d)
                            .map(|s| s.into_iter().map(|v| v as u32).collect())
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Self {
            config,
            influencers,
        })
    }

    pub fn config(&self) -> &RecommenderConfig {
        &self.config
    }

    pub fn reference(&self, users: &Opinions, i: usize) -> Vec<f64> {
        match &self.influencers {
            None => users.row(i).to_vec(),
            Some(sets) => {
                let mut out = vec![0.0; users.dim()];
                for &j in &sets[i] {
                    for (o, v) in out.iter_mut().zip(users.row(j as usize)) {
                        *o += v;
                    }
                }
                let n = sets[i].len() as f64;
                out.iter_mut().for_each(|o| *o /= n);
                out
            }
        }
    }

    pub fn candidates(&self, users: &Opinions, creators: &Opinions, i: usize) -> Vec<usize> {
        let r = self.reference(users, i);
        topk_candidates(&r, creators, self.config.k).expect("k validated at construction")
    }

    /// Runs both stages for user `i` and returns the consumed creator.
    pub fn choose<R: Rng + ?Sized>(
        &self,
        users: &Opinions,
        creators: &Opinions,
        i: usize,
        rng: &mut R,
    ) -> usize {
        let r = self.reference(users, i);
        let candidates =
            topk_candidates(&r, creators, self.config.k).expect("k validated at construction");
        let anchor = match self.config.score_basis {
            ScoreBasis::DistanceToUser => users.row(i),
            ScoreBasis::DistanceToReference => &r,
        };
        sample_choice(anchor, &candidates, creators, self.config.temperature, rng)
    }
}
