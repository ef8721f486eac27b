//! Coupled user/creator opinion updates under a fixed consumption partition.
//!
//! Users:    `u_i' = (1-Λ_i)(A_ii u_i + Σ_j A_ij u_j + B_i c_{j(i)}) + Λ_i u_i^0`
//! Creators: `c_j' = (1-Γ_j)(E_j c_j + C_j/|F_j| Σ_{i∈F_j} u_i) + Γ_j c_j^0`
//!
//! Topics are uncorrelated, so every coordinate is updated independently with
//! the same scalar weights. Both populations advance from the same snapshot.

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::opinion::Opinions;

fn check_unit(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::InvalidParameter(format!(
            "{name}[{i}] = {} outside [0, 1]",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserPopulation {
    pub opinions: Opinions,
    pub prejudices: Opinions,
    /// Λ_i
    pub stubbornness: Vec<f64>,
    /// B_i, the weight placed on whichever creator is consumed.
    pub recommender_influence: Vec<f64>,
}

impl UserPopulation {
    pub fn new(
        opinions: Opinions,
        prejudices: Opinions,
        stubbornness: Vec<f64>,
        recommender_influence: Vec<f64>,
    ) -> Result<Self> {
        let users = Self {
            opinions,
            prejudices,
            stubbornness,
            recommender_influence,
        };
        users.validate()?;
        Ok(users)
    }

    /// Users whose current opinion equals their prejudice.
    pub fn at_prejudice(
        prejudices: Opinions,
        stubbornness: Vec<f64>,
        recommender_influence: Vec<f64>,
    ) -> Result<Self> {
        Self::new(prejudices.clone(), prejudices, stubbornness, recommender_influence)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.opinions.len();
        check_len(n, self.prejudices.len())?;
        check_len(self.opinions.dim(), self.prejudices.dim())?;
        check_len(n, self.stubbornness.len())?;
        check_len(n, self.recommender_influence.len())?;
        check_unit("stubbornness", &self.stubbornness)?;
        check_unit("recommender_influence", &self.recommender_influence)
    }

    pub fn len(&self) -> usize {
        self.opinions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opinions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CreatorPopulation {
    pub opinions: Opinions,
    pub prejudices: Opinions,
    /// Γ_j
    pub stubbornness: Vec<f64>,
    /// E_j
    pub self_influence: Vec<f64>,
    /// C_j, split evenly over the audience.
    pub audience_influence: Vec<f64>,
}

impl CreatorPopulation {
    pub fn new(
        opinions: Opinions,
        prejudices: Opinions,
        stubbornness: Vec<f64>,
        self_influence: Vec<f64>,
        audience_influence: Vec<f64>,
    ) -> Result<Self> {
        let creators = Self {
            opinions,
            prejudices,
            stubbornness,
            self_influence,
            audience_influence,
        };
        creators.validate()?;
        Ok(creators)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.opinions.len();
        check_len(m, self.prejudices.len())?;
        check_len(self.opinions.dim(), self.prejudices.dim())?;
        check_len(m, self.stubbornness.len())?;
        check_len(m, self.self_influence.len())?;
        check_len(m, self.audience_influence.len())?;
        check_unit("creator stubbornness", &self.stubbornness)?;
        check_unit("creator self_influence", &self.self_influence)?;
        check_unit("creator audience_influence", &self.audience_influence)?;
        for (j, (e, c)) in self.self_influence.iter().zip(&self.audience_influence).enumerate() {
            if e + c > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "creator {j}: E + C = {} exceeds 1",
                    e + c
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.opinions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opinions.is_empty()
    }
}

/// Which creator each user consumed at one step, with the induced audiences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    audiences: Vec<Vec<usize>>,
}

impl Partition {
    pub fn creator_of(&self, user: usize) -> usize {
        self.assignment[user]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `F_j`, ascending user indices.
    pub fn audience(&self, creator: usize) -> &[usize] {
        &self.audiences[creator]
    }

    pub fn n_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_creators(&self) -> usize {
        self.audiences.len()
    }
}

pub fn build_partition(choices: &[usize], n_creators: usize) -> Result<Partition> {
    let mut audiences = vec![Vec::new(); n_creators];
    for (user, &c) in choices.iter().enumerate() {
        audiences
            .get_mut(c)
            .ok_or(Error::InvalidCreator {
                index: c,
                n_creators,
            })?
            .push(user);
    }
    Ok(Partition {
        assignment: choices.to_vec(),
        audiences,
    })
}

pub fn user_step(
    users: &UserPopulation,
    graph: &SocialGraph,
    creators: &CreatorPopulation,
    part: &Partition,
) -> Result<Opinions> {
    let n = users.len();
    let dim = users.opinions.dim();
    check_len(dim, creators.opinions.dim())?;
    check_len(n, graph.n_users())?;
    check_len(n, part.n_users())?;
    check_len(creators.len(), part.n_creators())?;

    let mut next = Opinions::zeros(n, dim);
    let mut social = vec![0.0; dim];
    for (i, out) in next.rows_mut().enumerate() {
        let a_ii = graph.self_weight(i);
        for (s, u) in social.iter_mut().zip(users.opinions.row(i)) {
            *s = a_ii * u;
        }
        for e in graph.in_edges(i) {
            for (s, u) in social.iter_mut().zip(users.opinions.row(e.source)) {
                *s += e.weight * u;
            }
        }
        let b = users.recommender_influence[i];
        let lambda = users.stubbornness[i];
        let content = creators.opinions.row(part.creator_of(i));
        let prejudice = users.prejudices.row(i);
        for k in 0..dim {
            out[k] = (1.0 - lambda) * (social[k] + b * content[k]) + lambda * prejudice[k];
        }
    }
    Ok(next)
}

/// An empty audience hands its `C_j` mass back to self-influence, so the
/// creator keeps a stochastic row.
pub fn creator_step(
    creators: &CreatorPopulation,
    users: &UserPopulation,
    part: &Partition,
) -> Result<Opinions> {
    let m = creators.len();
    let dim = creators.opinions.dim();
    check_len(dim, users.opinions.dim())?;
    check_len(users.len(), part.n_users())?;
    check_len(m, part.n_creators())?;

    let mut next = Opinions::zeros(m, dim);
    for (j, out) in next.rows_mut().enumerate() {
        let gamma = creators.stubbornness[j];
        let e = creators.self_influence[j];
        let c = creators.audience_influence[j];
        let current = creators.opinions.row(j);
        let prejudice = creators.prejudices.row(j);
        let audience = part.audience(j);
        if audience.is_empty() {
            for k in 0..dim {
                out[k] = (1.0 - gamma) * (e + c) * current[k] + gamma * prejudice[k];
            }
        } else {
            let feedback = users.opinions.mean_of(audience);
            for k in 0..dim {
                out[k] = (1.0 - gamma) * (e * current[k] + c * feedback[k]) + gamma * prejudice[k];
            }
        }
    }
    Ok(next)
}
