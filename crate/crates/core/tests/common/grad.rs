use brt_core::agents::{AdversaryTransition, AvgPolicyNetwork, PolicySpec, QNetSpec, QNetwork, Transition};
use brt_core::belief::{pinball_loss, Qbn, QbnDims, DEFAULT_LEVELS};
use brt_core::dataio::{Split, SyntheticParams};
use brt_core::genmodel::{adversarial_losses, divergence_loss, forecast_loss, mode_seeking_loss, moment_losses, reconstruction_loss, GenDims, GenModel, WindowBatch};
use brt_core::nn::{Params, Tensor};
use super::{gradcheck, leaves, random_tensor, rng};
use rand::Rng;

pub const TOL: f64 = 1e-4;
const POINTS: u64 = 10;

pub fn reconstruction() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "recon");
        let target = random_tensor(&mut r, 6, 4, 1.0);
        let mask = Tensor::from_vec(6, 4, (0..24).map(|_| if r.random::<f64>() < 0.8 { 1.0 } else { 0.0 }).collect());
        let mut p = leaves(&[(6, 4)], &mut r, 1.0);
        let e = gradcheck(&mut p, |p| p, |t, p| {
            let pred = t.param(p, 0);
            reconstruction_loss(t, &target, pred, &mask).unwrap()
        });
        worst = worst.max(e);
    }
    worst
}

pub fn forecast() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "forecast");
        let mut p = leaves(&[(3, 4); 8], &mut r, 1.0);
        let e = gradcheck(&mut p, |p| p, |t, p| {
            let v: Vec<_> = (0..8).map(|i| t.param(p, i)).collect();
            forecast_loss(t, &v[..4], &v[4..])
        });
        worst = worst.max(e);
    }
    worst
}

pub fn adversarial_pair() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "adv");
        let mut p = leaves(&[(5, 1), (5, 1), (5, 1)], &mut r, 2.0);
        for which in 0..2 {
            let e = gradcheck(&mut p, |p| p, |t, p| {
                let (real, fake, refined) = (t.param(p, 0), t.param(p, 1), t.param(p, 2));
                let (g, d) = adversarial_losses(t, real, fake, refined);
                if which == 0 {
                    g
                } else {
                    d
                }
            });
            worst = worst.max(e);
        }
    }
    worst
}

pub fn moments() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "moments");
        let real = random_tensor(&mut r, 12, 3, 1.0);
        let mask = Tensor::from_vec(12, 3, (0..36).map(|_| if r.random::<f64>() < 0.85 { 1.0 } else { 0.0 }).collect());
        let mut p = leaves(&[(12, 3)], &mut r, 1.5);
        for which in 0..2 {
            let e = gradcheck(&mut p, |p| p, |t, p| {
                let fake = t.param(p, 0);
                let (m, sd) = moment_losses(t, &real, fake, &mask).unwrap();
                if which == 0 {
                    m
                } else {
                    sd
                }
            });
            worst = worst.max(e);
        }
    }
    worst
}

pub fn mode_seeking() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "mode");
        let n1 = random_tensor(&mut r, 4, 3, 1.0);
        let n2 = random_tensor(&mut r, 4, 3, 1.0);
        let mut p = leaves(&[(4, 5), (4, 5)], &mut r, 1.0);
        let e = gradcheck(&mut p, |p| p, |t, p| {
            let (a, b) = (t.param(p, 0), t.param(p, 1));
            mode_seeking_loss(t, a, b, &n1, &n2).unwrap()
        });
        worst = worst.max(e);
    }
    worst
}

pub fn divergence() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "divergence");
        let real = random_tensor(&mut r, 10, 2, 1.0);
        let mask = Tensor::from_vec(10, 2, vec![1.0; 20]);
        let mut p = leaves(&[(10, 2)], &mut r, 1.0);
        let e = gradcheck(&mut p, |p| p, |t, p| {
            let fake = t.param(p, 0);
            divergence_loss(t, &real, fake, &mask, 16)
        });
        worst = worst.max(e);
    }
    worst
}

pub fn generator_network() -> f64 {
    let mut worst: f64 = 0.0;
    let ds = super::dataset(&SyntheticParams::macro_driven(1), 200, 3, 1);
    let ends: Vec<usize> = ds.windows(Split::Train).unwrap().iter().map(|w| w.t).collect();
    for s in 0..POINTS {
        let mut r = rng(s, "gen-net");
        let mut model = GenModel::new(GenDims::for_dataset(&ds, 3, 2, 4), &mut r).unwrap();
        let batch = WindowBatch::from_dataset(&ds, &[ends[r.random_range(0..ends.len())], ends[r.random_range(0..ends.len())]]);
        let part = (s % 2) as usize;
        let e = gradcheck(&mut model, |m| m.parts_mut().into_iter().nth(part).unwrap(), |t, m| m.reconstruction_loss_on(t, &batch).unwrap());
        worst = worst.max(e);
        let lat = model.latents(&batch).unwrap();
        let e = gradcheck(&mut model, |m| m.parts_mut().into_iter().nth(2).unwrap(), |t, m| m.forecast_loss_on(t, &lat));
        worst = worst.max(e);
    }
    worst
}

pub fn pinball() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "pinball");
        let target = random_tensor(&mut r, 6, 1, 1.0);
        let mut p = leaves(&[(6, DEFAULT_LEVELS.len())], &mut r, 1.0);
        let e = gradcheck(&mut p, |p| p, |t, p| {
            let pred = t.param(p, 0);
            pinball_loss(t, pred, &target, &DEFAULT_LEVELS)
        });
        worst = worst.max(e);
    }
    worst
}

pub fn belief_network() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "qbn");
        let mut qbn = Qbn::new(QbnDims { input: 3, hidden: 4, levels: DEFAULT_LEVELS.to_vec() }, 1e-3, &mut r).unwrap();
        let windows: Vec<Vec<Vec<f64>>> = (0..3).map(|_| (0..4).map(|_| random_tensor(&mut r, 1, 3, 1.0).data).collect()).collect();
        let ys: Vec<f64> = (0..3).map(|_| r.random::<f64>() - 0.5).collect();
        let e = gradcheck(&mut qbn, |q| &mut q.params, |t, q| {
            let batch: Vec<(&[Vec<f64>], f64)> = windows.iter().zip(&ys).map(|(w, y)| (w.as_slice(), *y)).collect();
            q.loss(t, &batch).unwrap()
        });
        worst = worst.max(e);
    }
    worst
}

fn transitions(r: &mut brt_core::rng::Rng, n: usize, dim: usize, actions: usize) -> Vec<Transition> {
    (0..n)
        .map(|_| Transition {
            state: random_tensor(r, 1, dim, 1.0).data,
            action: r.random_range(0..actions),
            reward: r.random::<f64>() - 0.5,
            next_state: random_tensor(r, 1, dim, 1.0).data,
            done: r.random::<f64>() < 0.2,
        })
        .collect()
}

/// Fresh layers have zero biases, so a row that silences every unit of one layer puts the next
/// layer exactly on the ReLU kink. Drawing all weights at random keeps the points generic.
fn randomize(p: &mut Params, r: &mut brt_core::rng::Rng) {
    p.set_flat(&random_tensor(r, 1, p.count(), 0.5).data);
}

fn qnet(r: &mut brt_core::rng::Rng, input: usize, actions: usize) -> QNetwork {
    let mut spec = QNetSpec::new(input, actions);
    spec.hidden = vec![6, 5];
    let mut q = QNetwork::new(spec, r).unwrap();
    randomize(&mut q.params, r);
    randomize(&mut q.target, r);
    q
}

pub fn td() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "td");
        let mut q = qnet(&mut r, 4, 3);
        let ts = transitions(&mut r, 8, 4, 3);
        let refs: Vec<&Transition> = ts.iter().collect();
        let targets = q.td_targets(&refs).unwrap();
        let e = gradcheck(&mut q, |q| &mut q.params, |t, q| q.td_loss(t, &q.params, &refs, &targets).unwrap());
        worst = worst.max(e);
    }
    worst
}

pub fn adversary_q() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "adv-q");
        let mut q = qnet(&mut r, 3, 5);
        let ts: Vec<Transition> = transitions(&mut r, 8, 3, 5)
            .into_iter()
            .map(|t| {
                AdversaryTransition { state: t.state, pert_index: t.action, trader_reward: t.reward, next_state: t.next_state, done: t.done }
                    .zero_sum()
            })
            .collect();
        let refs: Vec<&Transition> = ts.iter().collect();
        let targets = q.td_targets(&refs).unwrap();
        let e = gradcheck(&mut q, |q| &mut q.params, |t, q| q.td_loss(t, &q.params, &refs, &targets).unwrap());
        worst = worst.max(e);
    }
    worst
}

pub fn supervised_policy() -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..POINTS {
        let mut r = rng(s, "avg");
        let mut spec = PolicySpec::new(4, 3);
        spec.hidden = vec![6];
        let mut net = AvgPolicyNetwork::new(spec, &mut r).unwrap();
        randomize(&mut net.params, &mut r);
        let data: Vec<(Vec<f64>, usize)> = (0..8).map(|_| (random_tensor(&mut r, 1, 4, 1.0).data, r.random_range(0..3))).collect();
        let e = gradcheck(&mut net, |n| &mut n.params, |t, n| {
            let batch: Vec<(&[f64], usize)> = data.iter().map(|(x, a)| (x.as_slice(), *a)).collect();
            let p: &Params = &n.params;
            n.supervised_loss(t, p, &batch).unwrap()
        });
        worst = worst.max(e);
    }
    worst
}

/// Every loss checked, with the worst relative error over its random points.
type Case = (&'static str, fn() -> f64);

pub const CASES: [Case; 12] = [
    ("reconstruction", reconstruction),
    ("forecast", forecast),
    ("adversarial pair", adversarial_pair),
    ("moments", moments),
    ("mode seeking", mode_seeking),
    ("divergence", divergence),
    ("generator network", generator_network),
    ("pinball", pinball),
    ("belief network", belief_network),
    ("td", td),
    ("adversary q", adversary_q),
    ("supervised policy", supervised_policy),
];
