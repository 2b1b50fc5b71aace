//! Curriculum training: collect rollouts from round-robin environments,
//! update the policy, promote from position-hold to position-set when the
//! running return clears the threshold, checkpoint along the way.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::RunConfig;
use crate::env::{EnvError, EpisodeConfig, World, WorldMode};
use crate::rl::{
    curriculum_step, policy_forward, sample_action, Adam, Checkpoint, CurriculumStage,
    PolicyParams, RlError, RolloutBuffer, StepRecord,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("update: {0}")]
    Rl(#[from] RlError),
    #[error("io: {0}")]
    Io(String),
}

/// One row of the training-progress CSV.
#[derive(Debug, Clone)]
pub struct ProgressRow {
    pub env_steps: u64,
    pub stage: CurriculumStage,
    pub mean_return: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

pub const PROGRESS_HEADER: &str =
    "step,stage,mean_return,policy_loss,value_loss,clip_fraction,entropy";

impl ProgressRow {
    pub fn to_csv_line(&self) -> String {
        let mut line = String::new();
        let stage = match self.stage {
            CurriculumStage::PositionHold => "position-hold",
            CurriculumStage::PositionSet => "position-set",
        };
        let mean = self
            .mean_return
            .map(|m| m.to_string())
            .unwrap_or_default();
        write!(
            line,
            "{},{},{},{},{},{},{}",
            self.env_steps,
            stage,
            mean,
            self.policy_loss,
            self.value_loss,
            self.clip_fraction,
            self.entropy
        )
        .expect("writing to a String cannot fail");
        line
    }
}

/// Where a training run leaves its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub final_checkpoint: PathBuf,
    pub progress_csv: PathBuf,
    pub env_steps: u64,
    pub stage: CurriculumStage,
    pub updates: u32,
}

struct TrainEnv {
    world: World,
    episode_return: f64,
}

pub struct Trainer {
    config: RunConfig,
    pub params: PolicyParams,
    optimizer: Adam,
    pub stage: CurriculumStage,
    pub env_steps: u64,
    envs: Vec<TrainEnv>,
    policy_rng: ChaCha8Rng,
    reset_rng: ChaCha8Rng,
    return_window: VecDeque<f64>,
    progress: Vec<ProgressRow>,
    updates: u32,
}

impl Trainer {
    pub fn new(config: &RunConfig, resume: Option<Checkpoint>) -> Result<Self, TrainError> {
        let mut policy_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x70_11C7);
        let reset_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED);
        let (params, stage, env_steps) = match resume {
            Some(ckpt) => (ckpt.params, ckpt.stage, ckpt.env_steps),
            None => (
                PolicyParams::new(
                    &config.training.hidden_layers,
                    config.control.max_speed,
                    config.training.init_log_std,
                    &mut policy_rng,
                ),
                CurriculumStage::PositionHold,
                0,
            ),
        };
        let optimizer = Adam::new(params.param_count(), config.ppo.learning_rate);
        let mut trainer = Self {
            config: config.clone(),
            params,
            optimizer,
            stage,
            env_steps,
            envs: Vec::new(),
            policy_rng,
            reset_rng,
            return_window: VecDeque::new(),
            progress: Vec::new(),
            updates: 0,
        };
        trainer.rebuild_envs()?;
        Ok(trainer)
    }

    fn stage_mode(&self) -> WorldMode {
        match self.stage {
            CurriculumStage::PositionHold => WorldMode::TrainHold,
            CurriculumStage::PositionSet => WorldMode::TrainSet,
        }
    }

    fn stage_episode_config(&self) -> EpisodeConfig {
        let mut episode = self.config.episode.clone();
        episode.drone_count = 1;
        episode.horizon = match self.stage {
            CurriculumStage::PositionHold => self.config.training.hold_horizon,
            CurriculumStage::PositionSet => self.config.training.set_horizon,
        };
        episode
    }

    fn fresh_world(&mut self) -> Result<World, TrainError> {
        let seed: u64 = self.reset_rng.gen();
        Ok(World::reset(
            self.stage_mode(),
            &self.stage_episode_config(),
            &self.config.gear,
            &self.config.drone,
            &self.config.control,
            &self.config.reward,
            seed,
        )?)
    }

    fn rebuild_envs(&mut self) -> Result<(), TrainError> {
        self.envs.clear();
        for _ in 0..self.config.training.num_envs {
            let world = self.fresh_world()?;
            self.envs.push(TrainEnv {
                world,
                episode_return: 0.0,
            });
        }
        Ok(())
    }

    /// Collect one rollout and apply one clipped-surrogate update.
    pub fn train_iteration(&mut self) -> Result<ProgressRow, TrainError> {
        let num_envs = self.config.training.num_envs;
        let steps_per_env =
            (self.config.ppo.rollout_steps / num_envs).max(1);
        let mut buffer = RolloutBuffer::new(num_envs);

        for _ in 0..steps_per_env {
            for stream in 0..num_envs {
                let observation = self.envs[stream].world.observation(0).0;
                let out = policy_forward(&self.params, &observation);
                let action = sample_action(
                    &out.mean,
                    &out.std,
                    self.params.action_bound,
                    &mut self.policy_rng,
                );
                let results = self.envs[stream].world.step(&[action.clamped])?;
                let result = results[0];
                self.envs[stream].episode_return += result.reward;
                self.env_steps += 1;

                let mut record = StepRecord {
                    observation,
                    action_raw: action.raw,
                    log_prob: action.log_prob,
                    reward: result.reward,
                    value: out.value,
                    done: false,
                    bootstrap_value: 0.0,
                };
                if let Some(reason) = result.done {
                    record.done = true;
                    record.bootstrap_value = if reason.is_termination() {
                        0.0
                    } else {
                        // Truncated (horizon or touchdown): the process
                        // continues; carry the value of the final state.
                        let final_obs = self.envs[stream].world.observation(0).0;
                        policy_forward(&self.params, &final_obs).value
                    };
                    let finished = self.envs[stream].episode_return;
                    self.push_return(finished);
                    self.envs[stream].episode_return = 0.0;
                    self.envs[stream].world = self.fresh_world()?;
                }
                buffer.push(stream, record);
            }
        }

        // Bootstrap streams cut mid-episode with the current value estimate.
        let tails: Vec<f64> = (0..num_envs)
            .map(|stream| {
                let obs = self.envs[stream].world.observation(0).0;
                policy_forward(&self.params, &obs).value
            })
            .collect();
        buffer.compute_gae(self.config.ppo.discount, self.config.ppo.gae_lambda, &tails);

        let stats = crate::rl::ppo_update(
            &mut buffer,
            &mut self.params,
            &mut self.optimizer,
            &self.config.ppo,
            &mut self.policy_rng,
        )?;
        self.updates += 1;

        let row = ProgressRow {
            env_steps: self.env_steps,
            stage: self.stage,
            mean_return: self.mean_return(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            clip_fraction: stats.clip_fraction,
            entropy: stats.entropy,
        };
        self.progress.push(row.clone());
        Ok(row)
    }

    fn push_return(&mut self, value: f64) {
        self.return_window.push_back(value);
        while self.return_window.len() > self.config.training.promotion_window {
            self.return_window.pop_front();
        }
    }

    /// Mean return over the window once it holds enough episodes.
    pub fn mean_return(&self) -> Option<f64> {
        if self.return_window.len() < self.config.training.promotion_window {
            return None;
        }
        Some(self.return_window.iter().sum::<f64>() / self.return_window.len() as f64)
    }

    /// Apply the promotion rule; on a stage change the training worlds are
    /// rebuilt and the return window restarts.
    pub fn maybe_promote(&mut self) -> Result<bool, TrainError> {
        let next = curriculum_step(
            self.stage,
            self.mean_return(),
            self.config.training.promotion_threshold,
        );
        if next != self.stage {
            self.stage = next;
            self.return_window.clear();
            self.rebuild_envs()?;
            return Ok(true);
        }
        Ok(false)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            stage: self.stage,
            env_steps: self.env_steps,
        }
    }

    pub fn progress(&self) -> &[ProgressRow] {
        &self.progress
    }
}

/// Run the full curriculum schedule, writing checkpoints and the progress
/// CSV under `out_dir`.
pub fn train(
    config: &RunConfig,
    out_dir: &Path,
    resume: Option<Checkpoint>,
) -> Result<TrainOutputs, TrainError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| TrainError::Io(format!("{}: {e}", out_dir.display())))?;
    config
        .save(&out_dir.join("config.toml"))
        .map_err(|e| TrainError::Io(e.to_string()))?;

    let mut trainer = Trainer::new(config, resume)?;
    let progress_csv = out_dir.join("training.csv");
    let mut csv = format!("{PROGRESS_HEADER}\n");
    let mut next_checkpoint =
        (trainer.env_steps / config.training.checkpoint_interval + 1)
            * config.training.checkpoint_interval;

    while trainer.env_steps < config.training.total_steps {
        let row = trainer.train_iteration()?;
        csv.push_str(&row.to_csv_line());
        csv.push('\n');
        if trainer.maybe_promote()? {
            trainer
                .checkpoint()
                .save(&out_dir.join("ckpt_promotion.ckpt"))?;
        }
        if trainer.env_steps >= next_checkpoint {
            trainer
                .checkpoint()
                .save(&out_dir.join(format!("ckpt_{:09}.ckpt", trainer.env_steps)))?;
            next_checkpoint += config.training.checkpoint_interval;
        }
    }

    let final_checkpoint = out_dir.join("ckpt_final.ckpt");
    trainer.checkpoint().save(&final_checkpoint)?;
    std::fs::write(&progress_csv, csv)
        .map_err(|e| TrainError::Io(format!("{}: {e}", progress_csv.display())))?;
    Ok(TrainOutputs {
        final_checkpoint,
        progress_csv,
        env_steps: trainer.env_steps,
        stage: trainer.stage,
        updates: trainer.updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        let mut config = RunConfig::default();
        config.seed = 7;
        config.training.num_envs = 2;
        config.training.total_steps = 400;
        config.training.promotion_window = 3;
        config.ppo.rollout_steps = 128;
        config.ppo.minibatch_size = 64;
        config.ppo.epochs = 2;
        config
    }

    #[test]
    fn iteration_collects_and_updates() {
        let config = small_config();
        let mut trainer = Trainer::new(&config, None).unwrap();
        let row = trainer.train_iteration().unwrap();
        assert_eq!(row.env_steps, 128);
        assert!(trainer.params.all_finite());
    }

    #[test]
    fn fresh_run_starts_in_position_hold() {
        let trainer = Trainer::new(&small_config(), None).unwrap();
        assert_eq!(trainer.stage, CurriculumStage::PositionHold);
    }

    #[test]
    fn resume_preserves_stage_and_steps() {
        let config = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ckpt = Checkpoint {
            params: PolicyParams::new(&[8], 1.0, -0.5, &mut rng),
            stage: CurriculumStage::PositionSet,
            env_steps: 999,
        };
        let trainer = Trainer::new(&config, Some(ckpt)).unwrap();
        assert_eq!(trainer.stage, CurriculumStage::PositionSet);
        assert_eq!(trainer.env_steps, 999);
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let config = small_config();
        let run = || {
            let mut trainer = Trainer::new(&config, None).unwrap();
            trainer.train_iteration().unwrap();
            trainer.train_iteration().unwrap();
            crate::rl::flat_params(&trainer.params)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn train_writes_config_csv_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&small_config(), dir.path(), None).unwrap();
        assert!(out.final_checkpoint.exists());
        assert!(out.progress_csv.exists());
        assert!(dir.path().join("config.toml").exists());
        let csv = std::fs::read_to_string(&out.progress_csv).unwrap();
        assert!(csv.starts_with(PROGRESS_HEADER));
        assert!(csv.lines().count() >= 2);
        let ckpt = Checkpoint::load(&out.final_checkpoint).unwrap();
        assert_eq!(ckpt.env_steps, out.env_steps);
    }
}
