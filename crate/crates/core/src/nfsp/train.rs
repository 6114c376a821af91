use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NfspConfig;
use super::player::{Branch, NfspPlayer};
use crate::agents::{
    adversary_update, argmax, linear_epsilon, AdversaryTransition, AvgPolicyNetwork, CircularBuffer, PerturbationCatalog, PolicySpec,
    QNetSpec, QNetwork, Transition,
};
use crate::belief::{moving_average_target, Qbn, QbnDims, TARGET_DAYS};
use crate::error::{Error, Result};
use crate::evalkit::BacktestReport;
use crate::market_env::{Action, MarketEnv, Observation, N_ACTIONS};
use crate::rng::{stream, Rng};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub loss_q: Option<f64>,
    pub loss_avg: Option<f64>,
    pub loss_qbn: Option<f64>,
    pub loss_adv: Option<f64>,
    pub eval_return: Option<f64>,
}

pub fn training_log_csv(rows: &[LogRow]) -> String {
    let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("step,loss_q,loss_avg,loss_qbn,loss_adv,eval_return\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{}\n", r.step, f(r.loss_q), f(r.loss_avg), f(r.loss_qbn), f(r.loss_adv), f(r.eval_return)));
    }
    s
}

/// Shape of the observations a trader was trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub flat_dim: usize,
    pub seq_dim: usize,
    pub seq_len: usize,
}

impl ObsLayout {
    pub fn of(env: &MarketEnv) -> Self {
        Self { flat_dim: env.flat_dim(), seq_dim: env.seq_dim(), seq_len: env.seq_len() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub trader_best_response: u64,
    pub adversary_best_response: u64,
    pub update_errors: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub trader_reward: f64,
    pub adversary_reward: f64,
    pub done: bool,
    pub trader_branch: Branch,
    pub adversary_branch: Branch,
}

/// Everything that evolves during self-play. Cloning it together with the environment
/// reproduces the remaining trajectory exactly.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub cfg: NfspConfig,
    pub layout: ObsLayout,
    pub step: u64,
    pub episode: u64,
    pub trader: NfspPlayer,
    pub adversary: NfspPlayer,
    pub catalog: PerturbationCatalog,
    pub qbn: Qbn,
    pub qbn_memory: CircularBuffer<(Vec<Vec<f64>>, f64)>,
    pub adversary_memory: CircularBuffer<AdversaryTransition>,
    pub counters: Counters,
    pub log: Vec<LogRow>,
    last: LogRow,
    in_episode: bool,
    act_rng: Rng,
    replay_rng: Rng,
}

fn with_belief(flat: &[f64], q: &[f64]) -> Vec<f64> {
    let mut s = flat.to_vec();
    s.extend_from_slice(q);
    s
}

impl TrainState {
    pub fn new(cfg: NfspConfig, env: &MarketEnv) -> Result<Self> {
        cfg.validate()?;
        let layout = ObsLayout::of(env);
        let mut init = stream(cfg.seed, "nfsp/init");
        let nq = cfg.quantile_levels.len();
        let catalog = PerturbationCatalog::standard(env.perturbable().len());
        let qspec = |input: usize, n: usize, lr: f64, gamma: f64| QNetSpec {
            input,
            n_actions: n,
            hidden: cfg.hidden.clone(),
            lr,
            gamma,
            target_sync: cfg.target_sync,
        };
        let pspec = |input: usize, n: usize, lr: f64| PolicySpec { input, n_actions: n, hidden: cfg.hidden.clone(), lr };
        let ti = layout.flat_dim + nq;
        let trader = NfspPlayer::new(
            qspec(ti, N_ACTIONS, cfg.lr_q, cfg.gamma),
            pspec(ti, N_ACTIONS, cfg.lr_avg),
            cfg.circular_capacity,
            cfg.reservoir_capacity,
            &mut init,
        )?;
        let k = catalog.len();
        let adversary = NfspPlayer::new(
            qspec(layout.flat_dim, k, cfg.lr_adv, cfg.adv_gamma),
            pspec(layout.flat_dim, k, cfg.lr_adv),
            cfg.circular_capacity,
            cfg.reservoir_capacity,
            &mut init,
        )?;
        let qbn = Qbn::new(QbnDims { input: layout.seq_dim, hidden: cfg.qbn_hidden, levels: cfg.quantile_levels.clone() }, cfg.lr_qbn, &mut init)?;
        Ok(Self {
            layout,
            step: 0,
            episode: 0,
            trader,
            adversary,
            catalog,
            qbn,
            qbn_memory: CircularBuffer::new(cfg.circular_capacity),
            adversary_memory: CircularBuffer::new(cfg.circular_capacity),
            counters: Counters::default(),
            log: Vec::new(),
            last: LogRow::default(),
            in_episode: false,
            act_rng: stream(cfg.seed, "nfsp/act"),
            replay_rng: stream(cfg.seed, "nfsp/replay"),
            cfg,
        })
    }

    fn trader_state(&self, obs: &Observation) -> Result<Vec<f64>> {
        let b = self.qbn.belief_raw(&obs.sequence)?;
        Ok(with_belief(&obs.flat, &b.q))
    }

    /// One interaction step followed by whichever updates are due.
    pub fn train_step(&mut self, env: &mut MarketEnv) -> Result<StepInfo> {
        if ObsLayout::of(env) != self.layout {
            return Err(Error::Config("environment observation layout differs from the training state".into()));
        }
        if !self.in_episode {
            env.reset(self.cfg.seed.wrapping_add(self.episode))?;
            self.in_episode = true;
        }
        let eps = linear_epsilon(self.step, self.cfg.eps_start, self.cfg.eps_end, self.cfg.eps_decay_steps);
        let eta = self.cfg.eta;

        // adversary sees the true state and picks a perturbation
        let adv_state = env.observe(false).flat;
        let (k, adv_branch) = self.adversary.act(&adv_state, eta, eps, &mut self.act_rng)?;
        env.set_perturbation(self.catalog.get(k)?)?;

        // trader acts on the perturbed observation and its belief
        let obs = env.observe(true);
        let state = self.trader_state(&obs)?;
        let (a, branch) = self.trader.act(&state, eta, eps, &mut self.act_rng)?;
        let out = env.step(Action::from_index(a))?;

        let next_state = self.trader_state(&out.obs)?;
        let adv_next = env.observe(false).flat;
        let r = out.reward;
        if branch == Branch::BestResponse {
            self.counters.trader_best_response += 1;
        }
        if adv_branch == Branch::BestResponse {
            self.counters.adversary_best_response += 1;
        }
        self.trader.record(Transition { state, action: a, reward: r, next_state, done: out.done }, branch, &mut self.replay_rng);
        let adv_t = AdversaryTransition { state: adv_state, pert_index: k, trader_reward: r, next_state: adv_next, done: out.done };
        self.adversary.record(adv_t.zero_sum(), adv_branch, &mut self.replay_rng);
        self.adversary_memory.push(adv_t);
        let recent = env.recent_returns(TARGET_DAYS);
        if let Some(y) = moving_average_target(&recent) {
            self.qbn_memory.push((obs.sequence, y));
        }

        self.run_updates()?;
        self.step += 1;
        if out.done {
            self.in_episode = false;
            self.episode += 1;
        }
        Ok(StepInfo { trader_reward: r, adversary_reward: -r, done: out.done, trader_branch: branch, adversary_branch: adv_branch })
    }

    fn note(&mut self, what: &str, res: Result<Option<f64>>) -> Result<Option<f64>> {
        match res {
            Ok(Some(v)) if !v.is_finite() => Err(Error::NonFinite(format!("{what} loss at step {}", self.step))),
            Ok(v) => Ok(v),
            Err(e) => {
                log::warn!("{what} update failed at step {}: {e}", self.step);
                self.counters.update_errors += 1;
                Ok(None)
            }
        }
    }

    fn run_updates(&mut self) -> Result<()> {
        let (s, c, b) = (self.step, self.cfg.clone(), self.cfg.batch_size);
        if s >= c.warmup && s % c.q_every == 0 {
            let r = self.trader.update_q(b, &mut self.replay_rng);
            if let Some(v) = self.note("Q-network", r)? {
                self.last.loss_q = Some(v);
            }
        }
        if s % c.avg_every == 0 {
            let r = self.trader.update_avg(b, &mut self.replay_rng);
            if let Some(v) = self.note("average policy", r)? {
                self.last.loss_avg = Some(v);
            }
        }
        if s % c.qbn_every == 0 && !self.qbn_memory.is_empty() {
            let batch = self.qbn_memory.sample(b, &mut self.replay_rng);
            let refs: Vec<(&[Vec<f64>], f64)> = batch.iter().map(|(w, y)| (w.as_slice(), *y)).collect();
            let r = self.qbn.update(&refs).map(Some);
            if let Some(v) = self.note("belief network", r)? {
                self.last.loss_qbn = Some(v);
            }
        }
        if s >= c.warmup && s % c.adv_every == 0 && !self.adversary_memory.is_empty() {
            let batch = self.adversary_memory.sample(b, &mut self.replay_rng);
            let r = adversary_update(&mut self.adversary.q, &batch).map(Some);
            if let Some(v) = self.note("adversary", r)? {
                self.last.loss_adv = Some(v);
            }
            let r = self.adversary.update_avg(b, &mut self.replay_rng);
            self.note("adversary average policy", r)?;
        }
        Ok(())
    }

    pub fn policy(&self) -> TraderPolicy {
        TraderPolicy { avg: self.trader.avg.clone(), q: self.trader.q.clone(), qbn: self.qbn.clone(), layout: self.layout }
    }

    pub fn adversary_policy(&self) -> AdversaryPolicy {
        AdversaryPolicy { q: self.adversary.q.clone(), avg: self.adversary.avg.clone(), catalog: self.catalog.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyMode {
    /// Argmax of the time-averaged policy (the deployed strategy).
    Average,
    /// Argmax of the best-response Q-network.
    BestResponse,
}

/// The deployable trader: both action heads plus the belief network they condition on.
#[derive(Clone, Debug)]
pub struct TraderPolicy {
    pub avg: AvgPolicyNetwork,
    pub q: QNetwork,
    pub qbn: Qbn,
    pub layout: ObsLayout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TraderMeta {
    avg: PolicySpec,
    q: QNetSpec,
    layout: ObsLayout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AdversaryMeta {
    q: QNetSpec,
    avg: PolicySpec,
    catalog: PerturbationCatalog,
}

const TRADER_KIND: &str = "nfsp-trader";
const ADVERSARY_KIND: &str = "nfsp-adversary";

impl TraderPolicy {
    pub fn state(&self, obs: &Observation) -> Result<Vec<f64>> {
        let b = self.qbn.belief_raw(&obs.sequence)?;
        Ok(with_belief(&obs.flat, &b.q))
    }

    pub fn act(&self, obs: &Observation, mode: PolicyMode) -> Result<Action> {
        let s = self.state(obs)?;
        let i = match mode {
            PolicyMode::Average => argmax(&self.avg.probs(&s)?),
            PolicyMode::BestResponse => self.q.greedy(&s)?,
        };
        Ok(Action::from_index(i))
    }

    /// Writes `trader/` and `qbn/` under `dir`; returns their weight hashes.
    pub fn save(&self, dir: &Path) -> Result<(String, String)> {
        let meta = TraderMeta { avg: self.avg.spec.clone(), q: self.q.spec.clone(), layout: self.layout };
        let t = crate::store::save(&dir.join("trader"), TRADER_KIND, &meta, &[&self.avg.params, &self.q.params])?;
        let b = self.qbn.save(&dir.join("qbn"))?;
        Ok((t, b))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let td = dir.join("trader");
        let env = crate::store::read_manifest::<TraderMeta>(&td, TRADER_KIND)?;
        let mut rng = stream(0, "load");
        let mut avg = AvgPolicyNetwork::new(env.meta.avg.clone(), &mut rng)?;
        let mut q = QNetwork::new(env.meta.q.clone(), &mut rng)?;
        crate::store::load_into(&td, &env, &mut [&mut avg.params, &mut q.params])?;
        q.sync_target();
        let qbn = Qbn::load(&dir.join("qbn"))?;
        Ok(Self { avg, q, qbn, layout: env.meta.layout })
    }
}

#[derive(Clone, Debug)]
pub struct AdversaryPolicy {
    pub q: QNetwork,
    pub avg: AvgPolicyNetwork,
    pub catalog: PerturbationCatalog,
}

impl AdversaryPolicy {
    pub fn save(&self, dir: &Path) -> Result<String> {
        let meta = AdversaryMeta { q: self.q.spec.clone(), avg: self.avg.spec.clone(), catalog: self.catalog.clone() };
        crate::store::save(dir, ADVERSARY_KIND, &meta, &[&self.q.params, &self.avg.params])
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let env = crate::store::read_manifest::<AdversaryMeta>(dir, ADVERSARY_KIND)?;
        let mut rng = stream(0, "load");
        let mut q = QNetwork::new(env.meta.q.clone(), &mut rng)?;
        let mut avg = AvgPolicyNetwork::new(env.meta.avg.clone(), &mut rng)?;
        crate::store::load_into(dir, &env, &mut [&mut q.params, &mut avg.params])?;
        q.sync_target();
        Ok(Self { q, avg, catalog: env.meta.catalog })
    }

    /// Catalog entry minimising the trader's value in the true state.
    pub fn greedy(&self, state: &[f64]) -> Result<&[f64]> {
        self.catalog.get(self.q.greedy(state)?)
    }
}

/// Greedy rollouts chained into one net-value series: episode `k` starts from the net value
/// episode `k - 1` ended at. No perturbation is applied.
pub fn evaluate_policy(policy: &TraderPolicy, env: &mut MarketEnv, episodes: usize, seed: u64, mode: PolicyMode) -> Result<BacktestReport> {
    if ObsLayout::of(env) != policy.layout {
        return Err(Error::Config(format!(
            "policy expects observations {:?}, environment produces {:?}",
            policy.layout,
            ObsLayout::of(env)
        )));
    }
    if episodes == 0 {
        return Err(Error::Config("need at least one evaluation episode".into()));
    }
    let mut values = vec![1.0];
    let mut trades = 0;
    for ep in 0..episodes {
        let start = *values.last().expect("non-empty");
        let r = crate::agents::rollout(env, seed.wrapping_add(ep as u64), |o| policy.act(o, mode))?;
        values.extend(r.net_value_series[1..].iter().map(|v| v * start));
        trades += r.trade_count;
    }
    BacktestReport::from_net_values(values, trades)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArtifacts {
    pub trader_sha256: String,
    pub qbn_sha256: String,
    pub adversary_sha256: String,
    pub log_sha256: String,
    pub steps: u64,
    pub counters: Counters,
}

fn save_all(state: &TrainState, dir: &Path) -> Result<TrainArtifacts> {
    use sha2::{Digest, Sha256};
    let (t, q) = state.policy().save(dir)?;
    let a = state.adversary_policy().save(&dir.join("adversary"))?;
    let csv = training_log_csv(&state.log);
    let p = dir.join("training_log.csv");
    std::fs::File::create(&p).and_then(|mut f| f.write_all(csv.as_bytes())).map_err(|e| Error::io(&p, e))?;
    Ok(TrainArtifacts {
        trader_sha256: t,
        qbn_sha256: q,
        adversary_sha256: a,
        log_sha256: hex::encode(Sha256::digest(csv.as_bytes())),
        steps: state.step,
        counters: state.counters,
    })
}

/// Full self-play run. Checkpoints and the training log are written to `out` when given,
/// including when a non-finite loss halts training.
pub fn train(cfg: NfspConfig, env: &mut MarketEnv, out: Option<&Path>) -> Result<(TrainState, Option<TrainArtifacts>)> {
    let mut state = TrainState::new(cfg, env)?;
    let mut eval_env = env.clone();
    let eval_seed = state.cfg.seed ^ 0x5eed_e7a1;
    while state.step < state.cfg.total_steps {
        if let Err(e) = state.train_step(env) {
            if matches!(e, Error::NonFinite(_)) {
                if let Some(dir) = out {
                    save_all(&state, dir)?;
                }
                log::error!("training halted at step {}: {e}", state.step);
            }
            return Err(e);
        }
        let s = state.step;
        let eval_due = state.cfg.eval_every > 0 && s % state.cfg.eval_every == 0;
        if s % state.cfg.log_every == 0 || eval_due || s == state.cfg.total_steps {
            let mut row = LogRow { step: s, ..state.last.clone() };
            if eval_due {
                let rep = evaluate_policy(&state.policy(), &mut eval_env, 1, eval_seed, PolicyMode::Average)?;
                row.eval_return = rep.net_value_series.last().map(|v| v - 1.0);
            }
            state.log.push(row);
        }
    }
    let arts = match out {
        Some(dir) => Some(save_all(&state, dir)?),
        None => None,
    };
    Ok((state, arts))
}

/// Q-learning adversary against a fixed trader, without fictitious play.
pub fn train_adversary_against(
    env: &mut MarketEnv,
    trader: &dyn Fn(&Observation) -> Result<Action>,
    cfg: &NfspConfig,
) -> Result<AdversaryPolicy> {
    cfg.validate()?;
    let mut state = TrainState::new(NfspConfig { eta: 1.0, ..cfg.clone() }, env)?;
    let mut rng = stream(cfg.seed, "adversary/act");
    let mut replay = stream(cfg.seed, "adversary/replay");
    let mut episode = 0u64;
    env.reset(cfg.seed)?;
    for step in 0..cfg.total_steps {
        let eps = linear_epsilon(step, cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps);
        let s = env.observe(false).flat;
        let k = state.adversary.q.act_epsilon_greedy(&s, eps, &mut rng)?;
        env.set_perturbation(state.catalog.get(k)?)?;
        let a = trader(&env.observe(true))?;
        let out = env.step(a)?;
        let t = AdversaryTransition { state: s, pert_index: k, trader_reward: out.reward, next_state: env.observe(false).flat, done: out.done };
        state.adversary_memory.push(t);
        if step >= cfg.warmup && step % cfg.adv_every == 0 {
            let batch = state.adversary_memory.sample(cfg.batch_size, &mut replay);
            let loss = adversary_update(&mut state.adversary.q, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("adversary loss at step {step}")));
            }
        }
        if out.done {
            episode += 1;
            env.reset(cfg.seed.wrapping_add(episode))?;
        }
    }
    Ok(state.adversary_policy())
}
