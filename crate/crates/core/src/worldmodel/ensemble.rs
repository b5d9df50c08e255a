use rand::Rng;

use super::em::{fit_em_from, random_model, EmOptions};
use super::inference::Trajectory;
use super::{ModelDims, StochasticMatrix, WorldModel};
use crate::dist::{Belief, Categorical};
use crate::rng::seeded;
use crate::{Error, Result};

/// Default number of ensemble members.
pub const DEFAULT_MEMBERS: usize = 5;

/// Weight of the random table mixed into an anchored starting point.
pub const ANCHOR_JITTER: f64 = 0.05;

/// Seeds for one member: the bootstrap resample and the EM starting point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemberSeed {
    pub resample: u64,
    pub init: u64,
}

/// Models sharing dimensions whose spread stands in for parameter
/// uncertainty.
#[derive(Clone, Debug)]
pub struct Ensemble {
    members: Vec<WorldModel>,
    // Per action, the n_states x n_states matrix
    // K = mean_m (P_m - P_bar)(P_m - P_bar)^T with P_m = T_m[a] O_m, so that
    // disagreement(b, a) = b^T K b / n_obs.
    spread: Vec<Vec<f64>>,
}

impl PartialEq for Ensemble {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
    }
}

impl Ensemble {
    pub fn new(members: Vec<WorldModel>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidParameter(format!("ensemble needs at least 2 members, got {}", members.len())));
        }
        let dims = members[0].dims();
        if let Some(m) = members.iter().find(|m| m.dims() != dims) {
            return Err(Error::InvalidParameter(format!("member dimensions {:?} differ from {:?}", m.dims(), dims)));
        }
        let n = dims.n_states;
        let spread = if members.iter().all(|m| *m == members[0]) {
            vec![vec![0.0; n * n]; dims.n_actions]
        } else {
            (0..dims.n_actions).map(|a| spread_matrix(&members, a)).collect()
        };
        Ok(Ensemble { members, spread })
    }

    pub fn members(&self) -> &[WorldModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dims(&self) -> ModelDims {
        self.members[0].dims()
    }

    /// Same value as [`ensemble_disagreement`] via a cached quadratic form,
    /// `O(n_states^2)` per call.
    pub fn disagreement(&self, belief: &Belief, action: usize) -> f64 {
        let n = self.dims().n_states;
        assert_eq!(belief.len(), n, "belief dimension");
        let k = &self.spread[action];
        let b = belief.probs();
        let mut total = 0.0;
        for (i, &bi) in b.iter().enumerate() {
            if bi != 0.0 {
                let row = &k[i * n..(i + 1) * n];
                total += bi * row.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        (total / self.dims().n_obs as f64).max(0.0)
    }
}

fn spread_matrix(members: &[WorldModel], action: usize) -> Vec<f64> {
    let d = members[0].dims();
    let (n, n_obs) = (d.n_states, d.n_obs);
    let preds: Vec<StochasticMatrix> = members.iter().map(|m| m.trans(action).compose(m.obs())).collect();
    let m = preds.len() as f64;
    let mut mean = vec![0.0; n * n_obs];
    for p in &preds {
        mean.iter_mut().zip(p.data()).for_each(|(x, y)| *x += y);
    }
    mean.iter_mut().for_each(|x| *x /= m);
    let mut k = vec![0.0; n * n];
    for p in &preds {
        let dev: Vec<f64> = p.data().iter().zip(&mean).map(|(x, y)| x - y).collect();
        for i in 0..n {
            let di = &dev[i * n_obs..(i + 1) * n_obs];
            for j in i..n {
                let dj = &dev[j * n_obs..(j + 1) * n_obs];
                let v: f64 = di.iter().zip(dj).map(|(x, y)| x * y).sum::<f64>() / m;
                k[i * n + j] += v;
                if i != j {
                    k[j * n + i] += v;
                }
            }
        }
    }
    k
}

/// Mean over observation symbols of the across-member population variance of
/// each member's predicted observation distribution after `action`.
pub fn ensemble_disagreement(ensemble: &Ensemble, belief: &Belief, action: usize) -> f64 {
    let preds: Vec<Vec<f64>> = ensemble
        .members()
        .iter()
        .map(|m| m.obs_marginal(&m.predict_prior(belief, action)))
        .collect();
    let m = preds.len() as f64;
    let n_obs = preds[0].len();
    // Population variance in pairwise form: sum_{i<j} (x_i - x_j)^2 / m^2.
    let mut total = 0.0;
    for (i, p) in preds.iter().enumerate() {
        for q in &preds[i + 1..] {
            total += p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        }
    }
    total / (m * m * n_obs as f64)
}

/// Convex blend `(1 - w) a + w b` of two models' tables.
fn blend(a: &WorldModel, b: &WorldModel, w: f64) -> Result<WorldModel> {
    let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| (1.0 - w) * p + w * q).collect() };
    let mat = |x: &StochasticMatrix, y: &StochasticMatrix| StochasticMatrix::new(x.rows(), x.cols(), mix(x.data(), y.data()));
    WorldModel::new(
        Categorical::from_weights(mix(a.init().probs(), b.init().probs()))?,
        (0..a.n_actions())
            .map(|k| mat(a.trans(k), b.trans(k)))
            .collect::<Result<Vec<_>>>()?,
        mat(a.obs(), b.obs())?,
        mat(a.rew(), b.rew())?,
    )
}

/// Fits one member per seed on a whole-trajectory bootstrap resample.
///
/// With an `anchor`, each member starts from the anchor lightly mixed with a
/// random table, which keeps latent labels aligned across members; without
/// one, members start from independent random tables.
pub fn fit_ensemble_seeded(
    data: &[Trajectory],
    dims: ModelDims,
    options: &EmOptions,
    seeds: &[MemberSeed],
    anchor: Option<&WorldModel>,
) -> Result<Ensemble> {
    if let Some(a) = anchor {
        if a.dims() != dims {
            return Err(Error::InvalidParameter("anchor dimensions differ from the requested ones".into()));
        }
    }
    let members = seeds
        .iter()
        .map(|seed| {
            let mut rng = seeded(seed.resample);
            let sample: Vec<Trajectory> = if data.is_empty() {
                Vec::new()
            } else {
                (0..data.len()).map(|_| data[rng.random_range(0..data.len())].clone()).collect()
            };
            let noise = random_model(&mut seeded(seed.init), dims, options.smoothing)?;
            let start = match anchor {
                Some(a) => blend(a, &noise, ANCHOR_JITTER)?,
                None => noise,
            };
            fit_em_from(&sample, start, options).map(|(m, _)| m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// [`fit_ensemble_seeded`] with member seeds drawn from `rng`.
pub fn fit_ensemble<R: Rng + ?Sized>(
    data: &[Trajectory],
    dims: ModelDims,
    options: &EmOptions,
    members: usize,
    anchor: Option<&WorldModel>,
    rng: &mut R,
) -> Result<Ensemble> {
    if members < 2 {
        return Err(Error::InvalidParameter(format!("ensemble needs at least 2 members, got {members}")));
    }
    let seeds: Vec<MemberSeed> = (0..members)
        .map(|_| MemberSeed {
            resample: rng.random(),
            init: rng.random(),
        })
        .collect();
    fit_ensemble_seeded(data, dims, options, &seeds, anchor)
}

#[cfg(test)]
mod tests {
    use super::super::testing::{random_row, sample_data};
    use super::*;

    fn delta_member(n_obs: usize, target: usize) -> WorldModel {
        let mut row = vec![0.0; n_obs];
        row[target] = 1.0;
        WorldModel::new(
            Categorical::uniform(2),
            vec![StochasticMatrix::identity(2)],
            StochasticMatrix::from_rows(&[row.clone(), row]).unwrap(),
            StochasticMatrix::uniform(2, 4),
        )
        .unwrap()
    }

    fn dims() -> ModelDims {
        ModelDims {
            n_states: 3,
            n_actions: 2,
            n_obs: 4,
            n_rewards: 4,
        }
    }

    #[test]
    fn identical_members_do_not_disagree() {
        let model = random_model(&mut seeded(1), dims(), 0.01).unwrap();
        let ens = Ensemble::new(vec![model.clone(), model.clone(), model]).unwrap();
        let b = Categorical::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(ensemble_disagreement(&ens, &b, 1), 0.0);
        assert_eq!(ens.disagreement(&b, 1), 0.0);
    }

    #[test]
    fn opposite_deltas_give_half_over_alphabet() {
        for n_obs in [2, 3, 8] {
            let ens = Ensemble::new(vec![delta_member(n_obs, 0), delta_member(n_obs, 1)]).unwrap();
            let b = Categorical::uniform(2);
            let expected = 0.5 / n_obs as f64;
            assert!((ensemble_disagreement(&ens, &b, 0) - expected).abs() < 1e-15);
            assert!((ens.disagreement(&b, 0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn cached_form_matches_definition() {
        let mut rng = seeded(4);
        for _ in 0..20 {
            let members = (0..5).map(|_| random_model(&mut rng, dims(), 0.01).unwrap()).collect();
            let ens = Ensemble::new(members).unwrap();
            let b = Categorical::new(random_row(&mut rng, 3)).unwrap();
            for a in 0..2 {
                let direct = ensemble_disagreement(&ens, &b, a);
                assert!((direct - ens.disagreement(&b, a)).abs() < 1e-14);
                assert!(direct >= 0.0);
            }
        }
    }

    #[test]
    fn order_does_not_matter() {
        let mut rng = seeded(6);
        let members: Vec<WorldModel> = (0..4).map(|_| random_model(&mut rng, dims(), 0.01).unwrap()).collect();
        let mut reversed = members.clone();
        reversed.reverse();
        let a = Ensemble::new(members).unwrap();
        let b = Ensemble::new(reversed).unwrap();
        let belief = Categorical::new(vec![0.6, 0.1, 0.3]).unwrap();
        assert!((ensemble_disagreement(&a, &belief, 0) - ensemble_disagreement(&b, &belief, 0)).abs() < 1e-15);
    }

    #[test]
    fn fits_requested_member_count() {
        let truth = random_model(&mut seeded(2), dims(), 0.05).unwrap();
        let data = sample_data(&truth, &mut seeded(3), 6, 15);
        let opts = EmOptions { n_iters: 5, ..Default::default() };
        let ens = fit_ensemble(&data, dims(), &opts, 5, None, &mut seeded(0)).unwrap();
        assert_eq!(ens.len(), 5);
        assert!(ens.members().iter().all(|m| m.dims() == dims()));
        assert!(fit_ensemble(&data, dims(), &opts, 1, None, &mut seeded(0)).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_members() {
        let truth = random_model(&mut seeded(2), dims(), 0.05).unwrap();
        let data = sample_data(&truth, &mut seeded(3), 6, 15);
        let seed = MemberSeed { resample: 11, init: 12 };
        let opts = EmOptions { n_iters: 5, ..Default::default() };
        let ens = fit_ensemble_seeded(&data, dims(), &opts, &[seed, seed], Some(&truth)).unwrap();
        assert_eq!(ens.members()[0], ens.members()[1]);
    }

    #[test]
    fn disjoint_heterogeneous_halves_differ() {
        let mut rng = seeded(8);
        let a = random_model(&mut rng, dims(), 0.05).unwrap();
        let b = random_model(&mut rng, dims(), 0.05).unwrap();
        let opts = EmOptions { n_iters: 20, ..Default::default() };
        let start = random_model(&mut rng, dims(), opts.smoothing).unwrap();
        let (fa, _) = fit_em_from(&sample_data(&a, &mut rng, 10, 20), start.clone(), &opts).unwrap();
        let (fb, _) = fit_em_from(&sample_data(&b, &mut rng, 10, 20), start, &opts).unwrap();
        let max_diff = (0..2)
            .flat_map(|k| fa.trans(k).data().iter().zip(fb.trans(k).data()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        assert!(max_diff > opts.smoothing);
        let ens = Ensemble::new(vec![fa, fb]).unwrap();
        assert!(ens.disagreement(&Categorical::uniform(3), 0) > 0.0);
    }

    #[test]
    fn rejects_mismatched_members() {
        let mut rng = seeded(1);
        let a = random_model(&mut rng, dims(), 0.01).unwrap();
        let b = random_model(&mut rng, ModelDims { n_obs: 5, ..dims() }, 0.01).unwrap();
        assert!(Ensemble::new(vec![a.clone()]).is_err());
        assert!(Ensemble::new(vec![a, b]).is_err());
    }
}
