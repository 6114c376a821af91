use std::ops::Range;

use rand::Rng;

use super::model::{Conditioning, GenModel};
use crate::dataio::{Dataset, MarketTensor};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Synthetic counterpart of `ds.market` over `range`: consecutive non-overlapping target windows,
/// each conditioned on the real `L` preceding days and real macro rows, mapped back to the raw
/// feature scale. The first `L` days of the range serve only as history and stay masked.
pub fn synthesize_range(model: &GenModel, ds: &Dataset, range: Range<usize>, rng: &mut impl Rng) -> Result<MarketTensor> {
    let l = ds.window.length;
    if range.len() < 2 * l || range.end > ds.market.n_time() {
        return Err(Error::NoData(format!("range {range:?} cannot hold a {}-day conditioned window", 2 * l)));
    }
    let (ni, nf) = (ds.market.n_instruments(), ds.market.n_features());
    let span = range.clone();
    let mut out = ds.market.slice_time(span.clone());
    for t in 0..out.n_time() {
        for i in 0..ni {
            for f in 0..nf {
                out.set_missing(t, i, f);
            }
        }
    }
    let mut ends = Vec::new();
    let mut end = range.start + 2 * l - 1;
    while end < range.end {
        ends.push(end);
        end += l;
    }
    for &t in &ends {
        let cond = Conditioning::from_dataset(ds, t);
        let noise = Tensor::from_vec(l, model.dims.noise, model.sample_noise(rng, 1).iter().flat_map(|n| n.data.clone()).collect());
        let x = model.generate(&cond, &noise)?;
        for j in 0..l {
            let day = t + 1 - l + j - span.start;
            for i in 0..ni {
                for f in 0..nf {
                    out.set(day, i, f, ds.scaler.inverse(i, f, x.get(j, i * nf + f)));
                }
            }
        }
    }
    Ok(out)
}
