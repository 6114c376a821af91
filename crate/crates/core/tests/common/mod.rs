#![allow(dead_code)]

pub mod grad;

use brt_core::dataio::{ingest, make_synthetic_panel, Dataset, IngestOptions, SplitSpec, SyntheticMarket, SyntheticParams, WindowSpec};
use brt_core::nn::{Params, Tape, Tensor, Var};
use brt_core::rng::{stream, Rng};
use rand::Rng as _;

/// Relative error `|a - n| / (|a| + |n|)` (Euclidean norms) between the tape gradient and a
/// central finite difference of `loss` with respect to every entry of the params selected by
/// `get`.
pub fn gradcheck<S>(state: &mut S, get: impl Fn(&mut S) -> &mut Params, loss: impl Fn(&mut Tape, &S) -> Var) -> f64 {
    let eval = |s: &S| {
        let mut tape = Tape::new();
        let v = loss(&mut tape, s);
        tape.scalar_value(v)
    };
    let analytic: Vec<f64> = {
        let mut tape = Tape::new();
        let v = loss(&mut tape, state);
        let g = tape.backward(v);
        g.for_params(get(state)).iter().flat_map(|t| t.data.clone()).collect()
    };
    let base = get(state).flat();
    let h = 1e-6;
    let mut numeric = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let mut x = base.clone();
        x[k] = base[k] + h;
        get(state).set_flat(&x);
        let up = eval(state);
        x[k] = base[k] - h;
        get(state).set_flat(&x);
        let down = eval(state);
        numeric.push((up - down) / (2.0 * h));
    }
    get(state).set_flat(&base);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let denom = norm(&analytic) + norm(&numeric);
    if denom < 1e-12 {
        0.0
    } else {
        norm(&diff) / denom
    }
}

/// Params holding the given matrices as leaves, in order.
pub fn leaves(shapes: &[(usize, usize)], rng: &mut Rng, std: f64) -> Params {
    let mut p = Params::new();
    for (i, &(r, c)) in shapes.iter().enumerate() {
        p.add_normal(&format!("x{i}"), r, c, std, rng);
    }
    p
}

pub fn random_tensor(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| std * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
}

pub fn rng(seed: u64, name: &str) -> Rng {
    stream(seed, name)
}

/// Split dates at 60/80/100 percent of the calendar.
pub fn opts(dates: &[chrono::NaiveDate], window: usize) -> IngestOptions {
    let n = dates.len();
    IngestOptions {
        split: SplitSpec { train_end: dates[n * 6 / 10], valid_end: dates[n * 8 / 10], test_end: dates[n - 1] },
        window: WindowSpec::new(window).unwrap(),
        tau_corr: 0.05,
        tau_red: 0.95,
        target_horizon: 1,
    }
}

pub fn synthetic(params: &SyntheticParams, days: usize, n_macro: usize, seed: u64) -> SyntheticMarket {
    make_synthetic_panel(&mut stream(seed, "test-fixture"), days, n_macro, params).unwrap()
}

pub fn dataset(params: &SyntheticParams, days: usize, window: usize, seed: u64) -> Dataset {
    let syn = synthetic(params, days, 2, seed);
    ingest(&syn.frames, &syn.macro_series, &opts(&syn.market.dates, window)).unwrap()
}

pub fn line(criterion: u32, name: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("criterion {criterion:>2} {:<4} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
