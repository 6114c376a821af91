//! Two-player zero-sum matrix games wrapped as one-step decision problems, used to check that
//! the self-play machinery reaches the analytic mixed equilibrium.

use serde::{Deserialize, Serialize};

use super::config::NfspConfig;
use super::player::NfspPlayer;
use crate::agents::{linear_epsilon, PolicySpec, QNetSpec, Transition};
use crate::error::{Error, Result};

/// Payoffs to the row player; the column player receives the negation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    pub payoff: Vec<Vec<f64>>,
}

impl MatrixGame {
    pub fn matching_pennies() -> Self {
        Self { payoff: vec![vec![1.0, -1.0], vec![-1.0, 1.0]] }
    }

    /// Value 0 with mixed equilibrium (3/4, 1/4) for both players.
    pub fn biased() -> Self {
        Self { payoff: vec![vec![1.0 / 9.0, -1.0 / 3.0], vec![-1.0 / 3.0, 1.0]] }
    }

    /// Equilibrium of a 2x2 game without a saddle point: probabilities of the first row and
    /// first column.
    pub fn mixed_nash_2x2(&self) -> Result<(f64, f64)> {
        let a = &self.payoff;
        if a.len() != 2 || a.iter().any(|r| r.len() != 2) {
            return Err(Error::Shape("closed form needs a 2x2 game".into()));
        }
        let den = a[0][0] - a[0][1] - a[1][0] + a[1][1];
        if den.abs() < 1e-15 {
            return Err(Error::InvalidInput("game has no interior mixed equilibrium".into()));
        }
        let p = (a[1][1] - a[1][0]) / den;
        let q = (a[1][1] - a[0][1]) / den;
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidInput("game has a pure saddle point".into()));
        }
        Ok((p, q))
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameResult {
    pub row_policy: Vec<f64>,
    pub col_policy: Vec<f64>,
    pub steps: u64,
    pub best_response_steps: [u64; 2],
}

/// Both players learn by neural fictitious self-play on a constant dummy state.
pub fn train_matrix_game(game: &MatrixGame, cfg: &NfspConfig) -> Result<MatrixGameResult> {
    cfg.validate()?;
    let (nr, nc) = (game.payoff.len(), game.payoff.first().map_or(0, Vec::len));
    if nr == 0 || nc == 0 {
        return Err(Error::Shape("empty payoff matrix".into()));
    }
    let mut init = crate::rng::stream(cfg.seed, "nfsp/init");
    let mut act = crate::rng::stream(cfg.seed, "nfsp/act");
    let mut replay = crate::rng::stream(cfg.seed, "nfsp/replay");
    let player = |n: usize, rng: &mut crate::rng::Rng| {
        let mut q = QNetSpec::new(1, n);
        q.hidden.clone_from(&cfg.hidden);
        q.lr = cfg.lr_q;
        q.gamma = cfg.gamma;
        q.target_sync = cfg.target_sync;
        let mut a = PolicySpec::new(1, n);
        a.hidden.clone_from(&cfg.hidden);
        a.lr = cfg.lr_avg;
        NfspPlayer::new(q, a, cfg.circular_capacity, cfg.reservoir_capacity, rng)
    };
    let mut players = [player(nr, &mut init)?, player(nc, &mut init)?];
    let state = vec![1.0];
    let mut br = [0u64; 2];
    for step in 0..cfg.total_steps {
        let eps = linear_epsilon(step, cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps);
        let (i, bi) = players[0].act(&state, cfg.eta, eps, &mut act)?;
        let (j, bj) = players[1].act(&state, cfg.eta, eps, &mut act)?;
        let r = game.payoff[i][j];
        for (k, (a, b, rew)) in [(i, bi, r), (j, bj, -r)].into_iter().enumerate() {
            if b == super::player::Branch::BestResponse {
                br[k] += 1;
            }
            let t = Transition { state: state.clone(), action: a, reward: rew, next_state: state.clone(), done: true };
            players[k].record(t, b, &mut replay);
        }
        for p in players.iter_mut() {
            if step >= cfg.warmup && step % cfg.q_every == 0 {
                p.update_q(cfg.batch_size, &mut replay)?;
            }
            if step % cfg.avg_every == 0 {
                p.update_avg(cfg.batch_size, &mut replay)?;
            }
        }
    }
    Ok(MatrixGameResult {
        row_policy: players[0].avg.probs(&state)?,
        col_policy: players[1].avg.probs(&state)?,
        steps: cfg.total_steps,
        best_response_steps: br,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_equilibria() {
        assert_eq!(MatrixGame::matching_pennies().mixed_nash_2x2().unwrap(), (0.5, 0.5));
        let (p, q) = MatrixGame::biased().mixed_nash_2x2().unwrap();
        assert!((p - 0.75).abs() < 1e-12 && (q - 0.75).abs() < 1e-12);
        // each player is indifferent at the other's equilibrium mix
        let a = MatrixGame::biased().payoff;
        let col0 = p * a[0][0] + (1.0 - p) * a[1][0];
        let col1 = p * a[0][1] + (1.0 - p) * a[1][1];
        assert!((col0 - col1).abs() < 1e-12 && col0.abs() < 1e-12);
    }

    #[test]
    fn saddle_point_is_rejected() {
        let g = MatrixGame { payoff: vec![vec![2.0, 3.0], vec![0.0, 1.0]] };
        assert!(g.mixed_nash_2x2().is_err());
    }

    #[test]
    fn tv_distance() {
        assert!((total_variation(&[0.5, 0.5], &[0.75, 0.25]) - 0.25).abs() < 1e-15);
    }
}
