use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, WindowTriple};
use crate::error::{Error, Result};
use crate::nn::{Linear, Lstm, Params, Tape, Tensor, Var};

/// Architecture sizes of the generator networks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenDims {
    /// Instruments times features per day.
    pub n_series: usize,
    pub n_macro: usize,
    /// Window length L.
    pub window: usize,
    pub latent: usize,
    pub noise: usize,
    pub hidden: usize,
}

impl GenDims {
    pub fn for_dataset(ds: &Dataset, latent: usize, noise: usize, hidden: usize) -> Self {
        Self {
            n_series: ds.market.n_instruments() * ds.market.n_features(),
            n_macro: ds.macro_panel.n_indicators(),
            window: ds.window.length,
            latent,
            noise,
            hidden,
        }
    }

    fn validate(&self) -> Result<()> {
        if [self.n_series, self.n_macro, self.latent, self.noise, self.hidden].contains(&0) || self.window < 2 {
            return Err(Error::Config(format!("invalid generator dimensions {self:?}")));
        }
        Ok(())
    }
}

/// Last training phase that completed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Untrained,
    Autoencoder,
    Forecaster,
    Adversarial,
}

/// One generator conditioning: the `L` days before the target window and the `2L` macro rows
/// covering history and target, all on the standardised scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    /// `L x n_series`
    pub history: Tensor,
    /// `2L x n_macro`
    pub macro_window: Tensor,
}

/// Standardised value of every `(instrument, feature)` at day `t`, missing entries as zero.
pub fn standardized_row(ds: &Dataset, t: usize) -> (Vec<f64>, Vec<f64>) {
    let (ni, nf) = (ds.market.n_instruments(), ds.market.n_features());
    let mut x = Vec::with_capacity(ni * nf);
    let mut m = Vec::with_capacity(ni * nf);
    for i in 0..ni {
        for f in 0..nf {
            match ds.market.get(t, i, f) {
                Some(v) => {
                    x.push(ds.scaler.forward(i, f, v));
                    m.push(1.0);
                }
                None => {
                    x.push(0.0);
                    m.push(0.0);
                }
            }
        }
    }
    (x, m)
}

pub fn standardized_macro_row(ds: &Dataset, t: usize) -> Vec<f64> {
    (0..ds.macro_panel.n_indicators()).map(|k| ds.macro_panel.standardized(t, k)).collect()
}

impl Conditioning {
    /// Conditioning for the target window ending at day `t`, read from the dataset.
    pub fn from_dataset(ds: &Dataset, t: usize) -> Self {
        let w = WindowTriple::ending_at(t, ds.window);
        let history: Vec<Vec<f64>> = w.history.map(|d| standardized_row(ds, d).0).collect();
        let macro_rows: Vec<Vec<f64>> = w.macro_window.map(|d| standardized_macro_row(ds, d)).collect();
        Self { history: Tensor::from_rows(&history), macro_window: Tensor::from_rows(&macro_rows) }
    }
}

/// Training windows packed step-major: entry `j` of each vector is a `batch x width` matrix.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    pub batch: usize,
    pub hist: Vec<Tensor>,
    pub target: Vec<Tensor>,
    pub mask: Vec<Tensor>,
    pub macro_rows: Vec<Tensor>,
}

impl WindowBatch {
    /// Batch of the windows ending at each day in `ends`.
    pub fn from_dataset(ds: &Dataset, ends: &[usize]) -> Self {
        let l = ds.window.length;
        let b = ends.len();
        let s = ds.market.n_instruments() * ds.market.n_features();
        let nm = ds.macro_panel.n_indicators();
        let mut hist = vec![Tensor::zeros(b, s); l];
        let mut target = vec![Tensor::zeros(b, s); l];
        let mut mask = vec![Tensor::zeros(b, s); l];
        let mut macro_rows = vec![Tensor::zeros(b, nm); 2 * l];
        for (r, &t) in ends.iter().enumerate() {
            let w = WindowTriple::ending_at(t, ds.window);
            for (j, d) in w.history.enumerate() {
                let (x, _) = standardized_row(ds, d);
                hist[j].data[r * s..(r + 1) * s].copy_from_slice(&x);
            }
            for (j, d) in w.target.enumerate() {
                let (x, m) = standardized_row(ds, d);
                target[j].data[r * s..(r + 1) * s].copy_from_slice(&x);
                mask[j].data[r * s..(r + 1) * s].copy_from_slice(&m);
            }
            for (j, d) in w.macro_window.enumerate() {
                macro_rows[j].data[r * nm..(r + 1) * nm].copy_from_slice(&standardized_macro_row(ds, d));
            }
        }
        Self { batch: b, hist, target, mask, macro_rows }
    }

    /// Target rows stacked step-major into one `(L * batch) x n_series` matrix.
    pub fn stacked_target(&self) -> Tensor {
        stack(&self.target)
    }

    pub fn stacked_mask(&self) -> Tensor {
        stack(&self.mask)
    }
}

pub fn stack(parts: &[Tensor]) -> Tensor {
    let cols = parts[0].cols;
    let data: Vec<f64> = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
    Tensor::from_vec(data.len() / cols, cols, data)
}

/// Encoder, decoder, latent forecaster, generator and discriminator of the hybrid model.
#[derive(Clone, Debug)]
pub struct GenModel {
    pub dims: GenDims,
    pub phase: Phase,
    pub enc: Params,
    pub dec: Params,
    pub fc: Params,
    pub gen: Params,
    pub disc: Params,
    enc_lstm: Lstm,
    enc_out: Linear,
    dec_lstm: Lstm,
    dec_out: Linear,
    fc_lstm: Lstm,
    fc_out: Linear,
    gen_lstm: Lstm,
    gen_out: Linear,
    disc_lstm: Lstm,
    disc_out: Linear,
}

impl GenModel {
    pub fn new(dims: GenDims, rng: &mut impl Rng) -> Result<Self> {
        dims.validate()?;
        let GenDims { n_series: s, n_macro: m, latent: d, noise: z, hidden: h, .. } = dims;
        let mut enc = Params::new();
        let enc_lstm = Lstm::new(&mut enc, "enc.lstm", s + 2 * m, h, rng);
        let enc_out = Linear::new(&mut enc, "enc.out", h, d, rng);
        let mut dec = Params::new();
        let dec_lstm = Lstm::new(&mut dec, "dec.lstm", d, h, rng);
        let dec_out = Linear::new(&mut dec, "dec.out", h, s, rng);
        let mut fc = Params::new();
        let fc_lstm = Lstm::new(&mut fc, "fc.lstm", d, h, rng);
        let fc_out = Linear::new(&mut fc, "fc.out", h, d, rng);
        let mut gen = Params::new();
        let gen_lstm = Lstm::new(&mut gen, "gen.lstm", s + m + z + 1, h, rng);
        let gen_out = Linear::new(&mut gen, "gen.out", h, d, rng);
        let mut disc = Params::new();
        let disc_lstm = Lstm::new(&mut disc, "disc.lstm", d + 2 * m, h, rng);
        let disc_out = Linear::new(&mut disc, "disc.out", h, 1, rng);
        Ok(Self {
            dims,
            phase: Phase::Untrained,
            enc,
            dec,
            fc,
            gen,
            disc,
            enc_lstm,
            enc_out,
            dec_lstm,
            dec_out,
            fc_lstm,
            fc_out,
            gen_lstm,
            gen_out,
            disc_lstm,
            disc_out,
        })
    }

    pub fn parts(&self) -> [&Params; 5] {
        [&self.enc, &self.dec, &self.fc, &self.gen, &self.disc]
    }

    pub fn parts_mut(&mut self) -> [&mut Params; 5] {
        [&mut self.enc, &mut self.dec, &mut self.fc, &mut self.gen, &mut self.disc]
    }

    fn check_steps(&self, what: &str, xs: &[Var], tape: &Tape, len: usize, width: usize) -> Result<()> {
        if xs.len() != len {
            return Err(Error::Shape(format!("{what}: expected {len} steps, got {}", xs.len())));
        }
        if let Some(bad) = xs.iter().find(|x| tape.shape(**x).1 != width) {
            return Err(Error::Shape(format!("{what}: expected width {width}, got {}", tape.shape(*bad).1)));
        }
        Ok(())
    }

    /// Per target step `[m_j, m_{L+j}]`: the macro row of the matching history day and of the day itself.
    fn macro_pairs(&self, tape: &mut Tape, m: &[Var]) -> Vec<Var> {
        let l = self.dims.window;
        (0..l).map(|j| tape.concat_cols(&[m[j], m[l + j]])).collect()
    }

    /// Latent sequence `H` of a target window (`L` steps of `batch x n_series`) given its `2L` macro rows.
    pub fn encode(&self, tape: &mut Tape, x: &[Var], m: &[Var]) -> Result<Vec<Var>> {
        let l = self.dims.window;
        self.check_steps("encoder features", x, tape, l, self.dims.n_series)?;
        self.check_steps("encoder macro", m, tape, 2 * l, self.dims.n_macro)?;
        let mp = self.macro_pairs(tape, m);
        let inputs: Vec<Var> = (0..l).map(|j| tape.concat_cols(&[x[j], mp[j]])).collect();
        let hs = self.enc_lstm.forward(tape, &self.enc, &inputs);
        Ok(hs
            .into_iter()
            .map(|h| {
                let z = self.enc_out.forward(tape, &self.enc, h);
                tape.tanh(z)
            })
            .collect())
    }

    pub fn decode(&self, tape: &mut Tape, h: &[Var]) -> Vec<Var> {
        let hs = self.dec_lstm.forward(tape, &self.dec, h);
        hs.into_iter().map(|s| self.dec_out.forward(tape, &self.dec, s)).collect()
    }

    /// Output `j` is the forecast of latent `j + 1` from latents `0..=j`.
    pub fn forecast(&self, tape: &mut Tape, h: &[Var]) -> Vec<Var> {
        let hs = self.fc_lstm.forward(tape, &self.fc, h);
        hs.into_iter()
            .map(|s| {
                let z = self.fc_out.forward(tape, &self.fc, s);
                tape.tanh(z)
            })
            .collect()
    }

    /// Generated latent window `H'`: the LSTM reads the history days with their macro rows, then
    /// runs `L` more steps fed with the target-day macro rows and one noise vector per step.
    pub fn generate_latent(&self, tape: &mut Tape, hist: &[Var], m: &[Var], noise: &[Var]) -> Result<Vec<Var>> {
        let GenDims { window: l, n_series: s, n_macro: nm, noise: nz, .. } = self.dims;
        self.check_steps("history", hist, tape, l, s)?;
        self.check_steps("macro", m, tape, 2 * l, nm)?;
        self.check_steps("noise", noise, tape, l, nz)?;
        let b = tape.shape(hist[0]).0;
        let zx = tape.constant(Tensor::zeros(b, s));
        let zn = tape.constant(Tensor::zeros(b, nz));
        let zero = tape.constant(Tensor::zeros(b, 1));
        let one = tape.constant(Tensor::filled(b, 1, 1.0));
        let mut inputs = Vec::with_capacity(2 * l);
        for j in 0..l {
            inputs.push(tape.concat_cols(&[hist[j], m[j], zn, zero]));
        }
        for j in 0..l {
            inputs.push(tape.concat_cols(&[zx, m[l + j], noise[j], one]));
        }
        let hs = self.gen_lstm.forward(tape, &self.gen, &inputs);
        Ok(hs[l..]
            .iter()
            .map(|&h| {
                let z = self.gen_out.forward(tape, &self.gen, h);
                tape.tanh(z)
            })
            .collect())
    }

    /// Discriminator logit (`batch x 1`) for a latent window under its macro conditioning.
    pub fn discriminate(&self, tape: &mut Tape, h: &[Var], m: &[Var]) -> Var {
        let mp = self.macro_pairs(tape, m);
        let inputs: Vec<Var> = h.iter().zip(&mp).map(|(&hj, &mj)| tape.concat_cols(&[hj, mj])).collect();
        let hs = self.disc_lstm.forward(tape, &self.disc, &inputs);
        self.disc_out.forward(tape, &self.disc, *hs.last().expect("non-empty window"))
    }

    /// `L` standard-normal noise matrices of shape `batch x noise`.
    pub fn sample_noise(&self, rng: &mut impl Rng, batch: usize) -> Vec<Tensor> {
        (0..self.dims.window)
            .map(|_| Tensor::from_vec(batch, self.dims.noise, (0..batch * self.dims.noise).map(|_| StandardNormal.sample(rng)).collect()))
            .collect()
    }

    /// Full sampling path `D(F(g(M, N, X_hist)))`, batched and step-major, standardised scale.
    pub fn generate_batch(&self, hist: &[Tensor], macro_rows: &[Tensor], noise: &[Tensor]) -> Result<Vec<Tensor>> {
        if self.phase < Phase::Forecaster {
            return Err(Error::NotFitted("generator needs autoencoder and forecaster pretraining before sampling".into()));
        }
        let mut tape = Tape::new();
        let hv: Vec<Var> = hist.iter().map(|t| tape.constant(t.clone())).collect();
        let mv: Vec<Var> = macro_rows.iter().map(|t| tape.constant(t.clone())).collect();
        let nv: Vec<Var> = noise.iter().map(|t| tape.constant(t.clone())).collect();
        let h = self.generate_latent(&mut tape, &hv, &mv, &nv)?;
        let f = self.forecast(&mut tape, &h);
        let x = self.decode(&mut tape, &f);
        Ok(x.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// One synthetic window (`L x n_series`) for a single conditioning and noise draw (`L x noise`).
    pub fn generate(&self, cond: &Conditioning, noise: &Tensor) -> Result<Tensor> {
        let l = self.dims.window;
        if cond.history.shape() != (l, self.dims.n_series) {
            return Err(Error::Shape(format!("history must be {l} x {}", self.dims.n_series)));
        }
        if cond.macro_window.shape() != (2 * l, self.dims.n_macro) {
            return Err(Error::Shape(format!("macro window must be {} x {}", 2 * l, self.dims.n_macro)));
        }
        if noise.shape() != (l, self.dims.noise) {
            return Err(Error::Shape(format!("noise must be {l} x {}", self.dims.noise)));
        }
        let rows = |t: &Tensor| (0..t.rows).map(|r| Tensor::row(t.row_slice(r).to_vec())).collect::<Vec<_>>();
        let out = self.generate_batch(&rows(&cond.history), &rows(&cond.macro_window), &rows(noise))?;
        Ok(stack(&out))
    }
}
