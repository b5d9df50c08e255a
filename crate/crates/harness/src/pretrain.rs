//! Random-policy data collection and model fitting.

use std::fs;
use std::path::Path;

use anyhow::Context;
use rand::Rng;

use pepper_core::envlab::{EnvConfig, ObsEncoding};
use pepper_core::pepper::Agent;
use pepper_core::rng::{derive_seed, seeded};
use pepper_core::worldmodel::{dataset_log_evidence, elbo, fit_em, fit_ensemble, EmOptions, EmReport, ModelDims};
use pepper_core::{Action, Ensemble, Env, Trajectory, VolatilitySchedule, WorldModel};

use crate::config::ExperimentConfig;

pub const MODEL_FILE: &str = "model.txt";
pub const ENSEMBLE_FILE: &str = "ensemble.txt";
pub const REPORT_FILE: &str = "pretrain_report.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    pub log_evidence: f64,
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
    pub monotone: bool,
    pub n_steps: usize,
}

#[derive(Clone, Debug)]
pub struct Pretrained {
    pub model: WorldModel,
    pub ensemble: Ensemble,
    pub report: PretrainReport,
}

impl Pretrained {
    pub fn agent(&self, encoding: ObsEncoding) -> Agent {
        Agent {
            model: self.model.clone(),
            ensemble: Some(self.ensemble.clone()),
            encoding,
        }
    }
}

/// Random-policy trajectories in an environment whose map is regenerated
/// every `reset_every` steps.
pub fn collect_random(config: &ExperimentConfig, seed: u64) -> anyhow::Result<Vec<Trajectory>> {
    let env_config = EnvConfig {
        map: config.map_params(),
        schedule: VolatilitySchedule::every(config.pretrain.reset_every),
        start: (0, 0),
    };
    let mut env = Env::new(env_config, derive_seed(seed, 0))?;
    let mut policy = seeded(derive_seed(seed, 1));
    let encoding = config.encoding();
    (0..config.pretrain.trajectories)
        .map(|_| {
            let first = env.reset();
            let mut obs = vec![first.symbol(encoding)];
            let mut rewards = vec![first.reward_cat];
            let mut actions = Vec::with_capacity(config.pretrain.length);
            for _ in 0..config.pretrain.length {
                let a = policy.random_range(0..Action::COUNT);
                let o = env.step(Action::ALL[a]);
                actions.push(a);
                obs.push(o.symbol(encoding));
                rewards.push(o.reward_cat);
            }
            Ok(Trajectory::new(obs, rewards, actions)?)
        })
        .collect()
}

/// Fits the model and an anchored bootstrap ensemble on `data`.
pub fn fit(
    data: &[Trajectory],
    dims: ModelDims,
    options: &EmOptions,
    members: usize,
    seed: u64,
) -> anyhow::Result<(Pretrained, EmReport)> {
    let (model, em) = fit_em(data, dims, options, &mut seeded(derive_seed(seed, 2)))?;
    let ensemble = fit_ensemble(data, dims, options, members, Some(&model), &mut seeded(derive_seed(seed, 3)))?;
    let elbo_total = data.iter().map(|t| elbo(&model, t)).sum::<pepper_core::Result<f64>>()?;
    let report = PretrainReport {
        log_evidence: dataset_log_evidence(&model, data)?,
        elbo: elbo_total,
        iterations: em.iterations,
        converged: em.converged,
        monotone: em.is_monotone(1e-6),
        n_steps: data.iter().map(Trajectory::len).sum(),
    };
    Ok((
        Pretrained {
            model,
            ensemble,
            report,
        },
        em,
    ))
}

pub fn pretrain(config: &ExperimentConfig, seed: u64) -> anyhow::Result<Pretrained> {
    let data = collect_random(config, derive_seed(seed, 0))?;
    let (pretrained, _) = fit(&data, config.model_dims(), &config.em_options(), config.model.ensemble, derive_seed(seed, 1))?;
    Ok(pretrained)
}

pub fn save(dir: &Path, pretrained: &Pretrained) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(MODEL_FILE), pretrained.model.to_text())?;
    fs::write(dir.join(ENSEMBLE_FILE), pretrained.ensemble.to_text())?;
    let r = &pretrained.report;
    let mut w = csv::Writer::from_path(dir.join(REPORT_FILE))?;
    w.write_record(["log_evidence", "elbo", "iterations", "converged", "monotone", "n_steps"])?;
    w.write_record([
        r.log_evidence.to_string(),
        r.elbo.to_string(),
        r.iterations.to_string(),
        r.converged.to_string(),
        r.monotone.to_string(),
        r.n_steps.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn load(dir: &Path) -> anyhow::Result<Pretrained> {
    let read = |name: &str| fs::read_to_string(dir.join(name)).with_context(|| format!("reading {}", dir.join(name).display()));
    let model = WorldModel::from_text(&read(MODEL_FILE)?).context("decoding model")?;
    let ensemble = Ensemble::from_text(&read(ENSEMBLE_FILE)?).context("decoding ensemble")?;
    let mut r = csv::Reader::from_path(dir.join(REPORT_FILE))?;
    let rec = r.records().next().context("empty pretrain report")??;
    let field = |i: usize| rec.get(i).context("short pretrain report row");
    let report = PretrainReport {
        log_evidence: field(0)?.parse()?,
        elbo: field(1)?.parse()?,
        iterations: field(2)?.parse()?,
        converged: field(3)?.parse()?,
        monotone: field(4)?.parse()?,
        n_steps: field(5)?.parse()?,
    };
    if ensemble.dims() != model.dims() {
        anyhow::bail!("ensemble dimensions differ from the model's");
    }
    Ok(Pretrained {
        model,
        ensemble,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::from_text(
            "env.width = 4\nenv.height = 4\nenv.hole_fraction = 0.1\nmodel.n_states = 6\nmodel.em_iters = 15\nmodel.ensemble = 2\npretrain.trajectories = 10\npretrain.length = 12\n",
        )
        .unwrap()
    }

    #[test]
    fn report_respects_the_bound() {
        let p = pretrain(&tiny(), 3).unwrap();
        assert!(p.report.elbo <= p.report.log_evidence + 1e-9);
        assert!(p.report.monotone);
        assert_eq!(p.report.n_steps, 10 * 13);
    }

    #[test]
    fn same_seed_persists_identical_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save(a.path(), &pretrain(&tiny(), 9).unwrap()).unwrap();
        save(b.path(), &pretrain(&tiny(), 9).unwrap()).unwrap();
        for f in [MODEL_FILE, ENSEMBLE_FILE, REPORT_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
        let loaded = load(a.path()).unwrap();
        assert_eq!(loaded.model.to_text(), fs::read_to_string(a.path().join(MODEL_FILE)).unwrap());
    }
}
