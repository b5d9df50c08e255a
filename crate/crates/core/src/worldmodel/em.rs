use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::inference::{emission, Trajectory};
use super::{ModelDims, StochasticMatrix, WorldModel};
use crate::dist::Categorical;
use crate::{Error, Result};

/// Baum-Welch settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmOptions {
    pub n_iters: usize,
    /// Pseudo-count added to every expected count in the M-step.
    pub smoothing: f64,
    /// Stop once the per-step log-evidence gain falls below this.
    pub tolerance: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            n_iters: 100,
            smoothing: 1e-3,
            tolerance: 1e-7,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(Error::InvalidParameter(format!("smoothing must be positive, got {}", self.smoothing)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be non-negative, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmReport {
    /// Dataset log-evidence of the initial model and after every M-step.
    pub log_evidence: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EmReport {
    pub fn final_log_evidence(&self) -> f64 {
        *self.log_evidence.last().expect("report holds the initial evaluation")
    }

    /// True when no iteration lowered the log-evidence by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.log_evidence.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}

/// Fits a model by EM from a smoothed Dirichlet(1) random initialisation.
pub fn fit_em<R: Rng + ?Sized>(
    data: &[Trajectory],
    dims: ModelDims,
    options: &EmOptions,
    rng: &mut R,
) -> Result<(WorldModel, EmReport)> {
    options.validate()?;
    if dims.n_states < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 states, got {}", dims.n_states)));
    }
    let init = random_model(rng, dims, options.smoothing)?;
    fit_em_from(data, init, options)
}

/// Runs EM from the given starting model.
pub fn fit_em_from(data: &[Trajectory], start: WorldModel, options: &EmOptions) -> Result<(WorldModel, EmReport)> {
    options.validate()?;
    for t in data {
        t.check_against(&start)?;
    }
    let n_steps: usize = data.iter().map(Trajectory::len).sum();
    let mut model = start;
    let mut stats = Stats::new(model.dims());
    let mut history = vec![stats.collect(&model, data)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.n_iters {
        let next = stats.maximise(options.smoothing)?;
        stats.clear();
        let score = stats.collect(&next, data);
        iterations += 1;
        let gain = score - history.last().copied().unwrap_or(f64::NEG_INFINITY);
        model = next;
        history.push(score);
        if n_steps == 0 || gain.abs() <= options.tolerance * n_steps as f64 {
            converged = true;
            break;
        }
    }
    Ok((
        model,
        EmReport {
            log_evidence: history,
            iterations,
            converged,
        },
    ))
}

fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, n: usize, smoothing: f64) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = row.iter().sum();
    let denom = 1.0 + n as f64 * smoothing;
    row.iter_mut().for_each(|x| *x = (*x / total + smoothing) / denom);
    row
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, smoothing: f64) -> Result<StochasticMatrix> {
    let data = (0..rows).flat_map(|_| dirichlet_row(rng, cols, smoothing)).collect();
    StochasticMatrix::new(rows, cols, data)
}

pub(crate) fn random_model<R: Rng + ?Sized>(rng: &mut R, dims: ModelDims, smoothing: f64) -> Result<WorldModel> {
    let n = dims.n_states;
    let init = Categorical::new(dirichlet_row(rng, n, smoothing))?;
    let trans = (0..dims.n_actions)
        .map(|_| random_matrix(rng, n, n, smoothing))
        .collect::<Result<Vec<_>>>()?;
    let obs = random_matrix(rng, n, dims.n_obs, smoothing)?;
    let rew = random_matrix(rng, n, dims.n_rewards, smoothing)?;
    WorldModel::new(init, trans, obs, rew)
}

/// Expected sufficient statistics accumulated by the E-step.
struct Stats {
    dims: ModelDims,
    init: Vec<f64>,
    trans: Vec<Vec<f64>>,
    obs: Vec<f64>,
    rew: Vec<f64>,
}

impl Stats {
    fn new(dims: ModelDims) -> Self {
        let n = dims.n_states;
        Stats {
            dims,
            init: vec![0.0; n],
            trans: vec![vec![0.0; n * n]; dims.n_actions],
            obs: vec![0.0; n * dims.n_obs],
            rew: vec![0.0; n * dims.n_rewards],
        }
    }

    fn clear(&mut self) {
        self.init.fill(0.0);
        self.trans.iter_mut().for_each(|t| t.fill(0.0));
        self.obs.fill(0.0);
        self.rew.fill(0.0);
    }

    /// Forward-backward over every trajectory; returns the dataset
    /// log-evidence under `model`.
    fn collect(&mut self, model: &WorldModel, data: &[Trajectory]) -> f64 {
        let n = self.dims.n_states;
        let mut total = 0.0;
        for traj in data {
            let len = traj.len();
            if len == 0 {
                continue;
            }
            let mut like = vec![0.0; n * len];
            for t in 0..len {
                emission(model, traj.obs[t], traj.rewards[t], &mut like[t * n..(t + 1) * n]);
            }
            let mut alpha = vec![0.0; n * len];
            let mut scale = vec![0.0; len];
            for t in 0..len {
                let (done, rest) = alpha.split_at_mut(t * n);
                let cur = &mut rest[..n];
                if t == 0 {
                    cur.copy_from_slice(model.init().probs());
                } else {
                    model.trans(traj.actions[t - 1]).left_mul_into(&done[(t - 1) * n..], cur);
                }
                let mut c = 0.0;
                for (a, l) in cur.iter_mut().zip(&like[t * n..(t + 1) * n]) {
                    *a *= l;
                    c += *a;
                }
                cur.iter_mut().for_each(|a| *a /= c);
                scale[t] = c;
                total += c.ln();
            }
            let mut beta = vec![1.0; n];
            let mut weighted = vec![0.0; n];
            for t in (0..len).rev() {
                let a_t = &alpha[t * n..(t + 1) * n];
                for s in 0..n {
                    let g = a_t[s] * beta[s];
                    self.obs[s * self.dims.n_obs + traj.obs[t]] += g;
                    self.rew[s * self.dims.n_rewards + traj.rewards[t]] += g;
                    if t == 0 {
                        self.init[s] += g;
                    }
                }
                if t == 0 {
                    break;
                }
                // weighted(j) = e_t(j) beta_t(j) / c_t
                for ((w, l), b) in weighted.iter_mut().zip(&like[t * n..(t + 1) * n]).zip(&beta) {
                    *w = l * b / scale[t];
                }
                let trans = model.trans(traj.actions[t - 1]);
                let counts = &mut self.trans[traj.actions[t - 1]];
                let a_prev = &alpha[(t - 1) * n..t * n];
                for i in 0..n {
                    let row = trans.row(i);
                    let mut acc = 0.0;
                    let out = &mut counts[i * n..(i + 1) * n];
                    for j in 0..n {
                        let v = row[j] * weighted[j];
                        out[j] += a_prev[i] * v;
                        acc += v;
                    }
                    beta[i] = acc;
                }
            }
        }
        total
    }

    fn maximise(&self, smoothing: f64) -> Result<WorldModel> {
        let n = self.dims.n_states;
        let norm = |counts: &[f64], cols: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(counts.len());
            for row in counts.chunks(cols) {
                let denom: f64 = row.iter().sum::<f64>() + smoothing * cols as f64;
                out.extend(row.iter().map(|c| (c + smoothing) / denom));
            }
            out
        };
        let init = Categorical::from_weights(norm(&self.init, n))?;
        let trans = self
            .trans
            .iter()
            .map(|t| StochasticMatrix::new(n, n, norm(t, n)))
            .collect::<Result<Vec<_>>>()?;
        let obs = StochasticMatrix::new(n, self.dims.n_obs, norm(&self.obs, self.dims.n_obs))?;
        let rew = StochasticMatrix::new(n, self.dims.n_rewards, norm(&self.rew, self.dims.n_rewards))?;
        WorldModel::new(init, trans, obs, rew)
    }
}

/// Dataset log-evidence, the sum of per-trajectory [`super::log_evidence`].
pub fn dataset_log_evidence(model: &WorldModel, data: &[Trajectory]) -> Result<f64> {
    data.iter().map(|t| super::log_evidence(model, t)).sum()
}

#[cfg(test)]
mod tests {
    use super::super::testing::{deterministic_chain, sample_data};
    use super::*;
    use crate::rng::seeded;

    fn two_state_truth() -> WorldModel {
        WorldModel::new(
            Categorical::new(vec![0.5, 0.5]).unwrap(),
            vec![
                StochasticMatrix::from_rows(&[vec![0.95, 0.05], vec![0.1, 0.9]]).unwrap(),
                StochasticMatrix::from_rows(&[vec![0.05, 0.95], vec![0.9, 0.1]]).unwrap(),
            ],
            StochasticMatrix::from_rows(&[vec![0.9, 0.05, 0.05], vec![0.05, 0.15, 0.8]]).unwrap(),
            StochasticMatrix::from_rows(&[vec![0.7, 0.1, 0.1, 0.1], vec![0.1, 0.1, 0.1, 0.7]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_iterations_returns_positive_initialisation() {
        let dims = ModelDims {
            n_states: 3,
            n_actions: 2,
            n_obs: 4,
            n_rewards: 4,
        };
        let (model, report) = fit_em(&[], dims, &EmOptions { n_iters: 0, ..Default::default() }, &mut seeded(1)).unwrap();
        assert!(model.is_strictly_positive());
        assert_eq!(report.iterations, 0);
        assert_eq!(report.log_evidence, vec![0.0]);
    }

    #[test]
    fn recovers_known_two_state_model() {
        let truth = two_state_truth();
        let opts = EmOptions {
            n_iters: 500,
            tolerance: 1e-10,
            ..Default::default()
        };
        for seed in 0..4 {
            let data = sample_data(&truth, &mut seeded(100 + seed), 20, 50);
            let (fit, report) = fit_em(&data, truth.dims(), &opts, &mut seeded(seed)).unwrap();
            assert!(report.is_monotone(1e-8));
            // Align labels by the dominant observation of each state.
            let perm: Vec<usize> = if fit.obs().get(0, 0) > fit.obs().get(1, 0) { vec![0, 1] } else { vec![1, 0] };
            for a in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let got = fit.trans(a).get(perm[i], perm[j]);
                        let want = truth.trans(a).get(i, j);
                        assert!((got - want).abs() < 0.05, "seed {seed} a={a} ({i},{j}) {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn log_evidence_is_monotone() {
        let mut rng = seeded(9);
        let dims = ModelDims {
            n_states: 3,
            n_actions: 2,
            n_obs: 5,
            n_rewards: 4,
        };
        for k in 0..10 {
            let truth = random_model(&mut rng, dims, 0.05).unwrap();
            let data = sample_data(&truth, &mut rng, 5, 20);
            let opts = EmOptions { n_iters: 30, ..Default::default() };
            let (_, report) = fit_em(&data, dims, &opts, &mut seeded(k)).unwrap();
            assert!(report.is_monotone(1e-8), "{:?}", report.log_evidence);
        }
    }

    #[test]
    fn report_matches_forward_algorithm() {
        let mut rng = seeded(3);
        let truth = two_state_truth();
        let data = sample_data(&truth, &mut rng, 4, 12);
        let (model, report) = fit_em(&data, truth.dims(), &EmOptions { n_iters: 7, tolerance: 0.0, ..Default::default() }, &mut seeded(8)).unwrap();
        let direct = dataset_log_evidence(&model, &data).unwrap();
        assert!((direct - report.final_log_evidence()).abs() < 1e-9);
        assert_eq!(report.log_evidence.len(), 8);
    }

    #[test]
    fn em_preserves_a_perfect_fit() {
        let model = deterministic_chain(3);
        let traj = Trajectory::new(vec![0, 1, 2, 0, 1], vec![0, 1, 2, 0, 1], vec![0, 1, 0, 1]).unwrap();
        let (fit, _) = fit_em_from(std::slice::from_ref(&traj), model, &EmOptions { n_iters: 3, ..Default::default() }).unwrap();
        assert!(fit.is_strictly_positive());
        assert!(fit.trans(0).get(0, 1) > 0.99);
    }

    #[test]
    fn rejects_bad_options() {
        let dims = two_state_truth().dims();
        assert!(fit_em(&[], dims, &EmOptions { smoothing: 0.0, ..Default::default() }, &mut seeded(0)).is_err());
        let one = ModelDims { n_states: 1, ..dims };
        assert!(fit_em(&[], one, &EmOptions::default(), &mut seeded(0)).is_err());
    }
}
