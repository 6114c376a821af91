use rand::Rng;
use serde::{Deserialize, Serialize};

use super::losses::{adversarial_losses, divergence_loss, forecast_loss, moment_losses, mode_seeking_loss, reconstruction_loss};
use super::model::{stack, GenModel, Phase, WindowBatch};
use crate::dataio::{Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::{Adam, Tape, Tensor, Var};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenLossWeights {
    pub adv: f64,
    pub moments: f64,
    pub std: f64,
    pub mode: f64,
    pub div: f64,
}

impl Default for GenLossWeights {
    fn default() -> Self {
        Self { adv: 1.0, moments: 10.0, std: 10.0, mode: 0.1, div: 0.0 }
    }
}

impl GenLossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.adv, self.moments, self.std, self.mode, self.div];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("generator loss weights must be finite and nonnegative".into()));
        }
        if w.iter().all(|x| *x == 0.0) {
            return Err(Error::Config("at least one generator loss weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenTrainConfig {
    pub weights: GenLossWeights,
    pub batch_size: usize,
    pub lr: f64,
    pub disc_lr: f64,
    pub ae_steps: usize,
    pub forecast_steps: usize,
    pub gan_steps: usize,
    pub histogram_bins: usize,
    pub clip_norm: f64,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        Self {
            weights: GenLossWeights::default(),
            batch_size: 32,
            lr: 1e-3,
            disc_lr: 5e-4,
            ae_steps: 2000,
            forecast_steps: 1000,
            gan_steps: 3000,
            histogram_bins: 32,
            clip_norm: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSet {
    pub autoencoder: bool,
    pub forecaster: bool,
    pub adversarial: bool,
}

impl PhaseSet {
    pub const ALL: PhaseSet = PhaseSet { autoencoder: true, forecaster: true, adversarial: true };

    /// Parse a comma list of `ae`, `forecast`, `gan`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut p = PhaseSet { autoencoder: false, forecaster: false, adversarial: false };
        for part in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match part {
                "ae" => p.autoencoder = true,
                "forecast" => p.forecaster = true,
                "gan" => p.adversarial = true,
                other => return Err(Error::Config(format!("unknown phase '{other}' (expected ae, forecast, gan)"))),
            }
        }
        Ok(p)
    }
}

/// Per-step losses of each phase plus notable events.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenTrainLog {
    pub reconstruction: Vec<f64>,
    pub forecast: Vec<f64>,
    pub discriminator: Vec<f64>,
    pub generator: Vec<f64>,
    pub mode_seeking: Vec<f64>,
    pub events: Vec<String>,
}

/// Consecutive near-zero discriminator losses that trigger the collapse guard.
pub const COLLAPSE_WINDOW: usize = 200;
pub const COLLAPSE_LOSS: f64 = 1e-3;

fn consts(tape: &mut Tape, ts: &[Tensor]) -> Vec<Var> {
    ts.iter().map(|t| tape.constant(t.clone())).collect()
}

fn values(tape: &Tape, vs: &[Var]) -> Vec<Tensor> {
    vs.iter().map(|v| tape.value(*v).clone()).collect()
}

fn sample_ends(rng: &mut impl Rng, ends: &[usize], n: usize) -> Vec<usize> {
    (0..n).map(|_| ends[rng.random_range(0..ends.len())]).collect()
}

impl GenModel {
    /// Masked reconstruction loss of `D(E(X, M))` on a batch.
    pub fn reconstruction_loss_on(&self, tape: &mut Tape, batch: &WindowBatch) -> Result<Var> {
        let x = consts(tape, &batch.target);
        let m = consts(tape, &batch.macro_rows);
        let h = self.encode(tape, &x, &m)?;
        let xr = self.decode(tape, &h);
        let pred = tape.concat_rows(&xr);
        reconstruction_loss(tape, &batch.stacked_target(), pred, &batch.stacked_mask())
    }

    pub fn latents(&self, batch: &WindowBatch) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let x = consts(&mut tape, &batch.target);
        let m = consts(&mut tape, &batch.macro_rows);
        let h = self.encode(&mut tape, &x, &m)?;
        Ok(values(&tape, &h))
    }

    pub fn forecast_loss_on(&self, tape: &mut Tape, latents: &[Tensor]) -> Var {
        let h = consts(tape, latents);
        let f = self.forecast(tape, &h);
        forecast_loss(tape, &h, &f)
    }
}

fn windows_or_err(ds: &Dataset, split: Split) -> Result<Vec<usize>> {
    let ends: Vec<usize> = ds.windows(split)?.into_iter().map(|w| w.t).collect();
    if ends.is_empty() {
        return Err(Error::NoData(format!("no {split:?} windows of length 2L = {}", ds.window.macro_length())));
    }
    Ok(ends)
}

/// Run the requested pretraining and fine-tuning phases in order on training-split windows.
pub fn train_generator(model: &mut GenModel, ds: &Dataset, cfg: &GenTrainConfig, phases: PhaseSet, seed: u64) -> Result<GenTrainLog> {
    cfg.weights.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let ends = windows_or_err(ds, Split::Train)?;
    let mut log = GenTrainLog::default();

    if phases.autoencoder {
        let mut rng = stream(seed, "genmodel/autoencoder");
        let mut opt_e = Adam::new(cfg.lr).with_clip(cfg.clip_norm);
        let mut opt_d = Adam::new(cfg.lr).with_clip(cfg.clip_norm);
        for _ in 0..cfg.ae_steps {
            let batch = WindowBatch::from_dataset(ds, &sample_ends(&mut rng, &ends, cfg.batch_size));
            let mut tape = Tape::new();
            let loss = match model.reconstruction_loss_on(&mut tape, &batch) {
                Ok(l) => l,
                Err(Error::DegenerateBatch(_)) => continue,
                Err(e) => return Err(e),
            };
            log.reconstruction.push(tape.scalar_value(loss));
            let g = tape.backward(loss);
            let (ge, gd) = (g.for_params(&model.enc), g.for_params(&model.dec));
            opt_e.step(&mut model.enc, &ge);
            opt_d.step(&mut model.dec, &gd);
        }
        model.phase = model.phase.max(Phase::Autoencoder);
    }

    if phases.forecaster {
        if model.phase < Phase::Autoencoder {
            return Err(Error::NotFitted("forecaster pretraining needs a trained autoencoder".into()));
        }
        let mut rng = stream(seed, "genmodel/forecaster");
        let mut opt = Adam::new(cfg.lr).with_clip(cfg.clip_norm);
        for _ in 0..cfg.forecast_steps {
            let batch = WindowBatch::from_dataset(ds, &sample_ends(&mut rng, &ends, cfg.batch_size));
            let h = model.latents(&batch)?;
            let mut tape = Tape::new();
            let loss = model.forecast_loss_on(&mut tape, &h);
            log.forecast.push(tape.scalar_value(loss));
            let g = tape.backward(loss).for_params(&model.fc);
            opt.step(&mut model.fc, &g);
        }
        model.phase = model.phase.max(Phase::Forecaster);
    }

    if phases.adversarial {
        if model.phase < Phase::Forecaster {
            return Err(Error::NotFitted("adversarial fine-tuning needs pretrained autoencoder and forecaster".into()));
        }
        adversarial_phase(model, ds, cfg, &ends, seed, &mut log)?;
        model.phase = Phase::Adversarial;
    }
    Ok(log)
}

fn adversarial_phase(model: &mut GenModel, ds: &Dataset, cfg: &GenTrainConfig, ends: &[usize], seed: u64, log: &mut GenTrainLog) -> Result<()> {
    let mut rng = stream(seed, "genmodel/adversarial");
    let mut noise_rng = stream(seed, "genmodel/noise");
    let mut opt_g = Adam::new(cfg.lr).with_clip(cfg.clip_norm).with_betas(0.5, 0.999);
    let mut opt_d = Adam::new(cfg.disc_lr).with_clip(cfg.clip_norm).with_betas(0.5, 0.999);
    let mut opt_f = Adam::new(cfg.lr).with_clip(cfg.clip_norm);
    let w = &cfg.weights;
    let mut g_steps = 1usize;
    let mut low_d = 0usize;
    for step in 0..cfg.gan_steps {
        let batch = WindowBatch::from_dataset(ds, &sample_ends(&mut rng, ends, cfg.batch_size));
        let b = batch.batch;
        let real_h = model.latents(&batch)?;

        // discriminator step on detached generator output
        let noise = model.sample_noise(&mut noise_rng, b);
        let (fake_h, refined_h) = {
            let mut tape = Tape::new();
            let hist = consts(&mut tape, &batch.hist);
            let m = consts(&mut tape, &batch.macro_rows);
            let n = consts(&mut tape, &noise);
            let h = model.generate_latent(&mut tape, &hist, &m, &n)?;
            let f = model.forecast(&mut tape, &h);
            (values(&tape, &h), values(&tape, &f))
        };
        let mut tape = Tape::new();
        let m = consts(&mut tape, &batch.macro_rows);
        let hr = consts(&mut tape, &real_h);
        let hf = consts(&mut tape, &fake_h);
        let hff = consts(&mut tape, &refined_h);
        let lr = model.discriminate(&mut tape, &hr, &m);
        let lf = model.discriminate(&mut tape, &hf, &m);
        let lff = model.discriminate(&mut tape, &hff, &m);
        let (_, loss_d) = adversarial_losses(&mut tape, lr, lf, lff);
        let ld = tape.scalar_value(loss_d);
        log.discriminator.push(ld);
        let gd = tape.backward(loss_d).for_params(&model.disc);
        opt_d.step(&mut model.disc, &gd);

        if ld < COLLAPSE_LOSS {
            low_d += 1;
            if low_d >= COLLAPSE_WINDOW {
                g_steps *= 2;
                low_d = 0;
                let msg = format!("step {step}: discriminator loss below {COLLAPSE_LOSS} for {COLLAPSE_WINDOW} steps; generator steps per round now {g_steps}");
                log::warn!("{msg}");
                log.events.push(msg);
            }
        } else {
            low_d = 0;
        }

        for _ in 0..g_steps {
            let n1 = model.sample_noise(&mut noise_rng, b);
            let n2 = (w.mode > 0.0).then(|| model.sample_noise(&mut noise_rng, b));
            let ((tape, total), mode) = generator_objective(model, &batch, &n1, n2.as_deref(), cfg)?;
            log.generator.push(tape.scalar_value(total));
            if let Some(mv) = mode {
                log.mode_seeking.push(mv);
            }
            let gg = tape.backward(total).for_params(&model.gen);
            opt_g.step(&mut model.gen, &gg);
        }

        // keep the forecaster tracking real latent dynamics
        let mut tape = Tape::new();
        let lf = model.forecast_loss_on(&mut tape, &real_h);
        log.forecast.push(tape.scalar_value(lf));
        let gf = tape.backward(lf).for_params(&model.fc);
        opt_f.step(&mut model.fc, &gf);
    }
    Ok(())
}

/// Weighted generator objective on one batch; returns the tape, the loss node and the raw
/// mode-seeking value when that term is active.
pub fn generator_objective(
    model: &GenModel,
    batch: &WindowBatch,
    n1: &[Tensor],
    n2: Option<&[Tensor]>,
    cfg: &GenTrainConfig,
) -> Result<((Tape, Var), Option<f64>)> {
    let w = &cfg.weights;
    let mut tape = Tape::new();
    let hist = consts(&mut tape, &batch.hist);
    let m = consts(&mut tape, &batch.macro_rows);
    let nv = consts(&mut tape, n1);
    let h = model.generate_latent(&mut tape, &hist, &m, &nv)?;
    let f = model.forecast(&mut tape, &h);
    let lf = model.discriminate(&mut tape, &h, &m);
    let lff = model.discriminate(&mut tape, &f, &m);
    let dummy = tape.constant(Tensor::zeros(batch.batch, 1));
    let (adv, _) = adversarial_losses(&mut tape, dummy, lf, lff);
    let xs = model.decode(&mut tape, &f);
    let x = tape.concat_rows(&xs);
    let real = batch.stacked_target();
    let mask = batch.stacked_mask();
    let (mom, sd) = moment_losses(&mut tape, &real, x, &mask)?;
    let mut terms = vec![tape.scale(adv, w.adv), tape.scale(mom, w.moments), tape.scale(sd, w.std)];
    let mut mode_val = None;
    if let Some(n2) = n2 {
        let nv2 = consts(&mut tape, n2);
        let h2 = model.generate_latent(&mut tape, &hist, &m, &nv2)?;
        let f2 = model.forecast(&mut tape, &h2);
        let xs2 = model.decode(&mut tape, &f2);
        let x2 = tape.concat_rows(&xs2);
        if let Some(ms) = mode_seeking_loss(&mut tape, x, x2, &stack(n1), &stack(n2)) {
            mode_val = Some(tape.scalar_value(ms));
            terms.push(tape.scale(ms, w.mode));
        }
    }
    if w.div > 0.0 {
        let js = divergence_loss(&mut tape, &real, x, &mask, cfg.histogram_bins);
        terms.push(tape.scale(js, w.div));
    }
    let all = tape.concat_cols(&terms);
    let total = tape.sum(all);
    Ok(((tape, total), mode_val))
}
