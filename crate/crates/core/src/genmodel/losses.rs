//! Loss terms of the generator, each built on a [`Tape`] so they can be differentiated.

use crate::error::{Error, Result};
use crate::nn::{bce_with_logits, Tape, Tensor, Var};

/// Floor added to the output/noise gap ratio of the mode-seeking term.
pub const MODE_DELTA: f64 = 1e-5;
/// Floor under the real variance in the relative-variance term.
pub const STD_DELTA: f64 = 1e-6;
const SIGMA_EPS: f64 = 1e-12;

/// Masked mean squared error; `target` and `mask` are constants shaped like `pred`.
pub fn reconstruction_loss(tape: &mut Tape, target: &Tensor, pred: Var, mask: &Tensor) -> Result<Var> {
    if tape.shape(pred) != target.shape() || target.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?}, target {:?}, mask {:?}",
            tape.shape(pred),
            target.shape(),
            mask.shape()
        )));
    }
    let n_valid = mask.sum();
    if n_valid <= 0.0 {
        return Err(Error::DegenerateBatch("every position is masked".into()));
    }
    let x = tape.constant(target.clone());
    let m = tape.constant(mask.clone());
    let diff = tape.sub(pred, x);
    let sq = tape.square(diff);
    let sq = tape.mul(sq, m);
    let s = tape.sum(sq);
    Ok(tape.scale(s, 1.0 / n_valid))
}

/// One-step-ahead latent prediction error: `forecast[j]` is scored against `latent[j + 1]`.
pub fn forecast_loss(tape: &mut Tape, latent: &[Var], forecast: &[Var]) -> Var {
    assert_eq!(latent.len(), forecast.len(), "latent and forecast sequences differ in length");
    assert!(latent.len() >= 2, "forecast loss needs at least two steps");
    let next = tape.concat_rows(&latent[1..]);
    let pred = tape.concat_rows(&forecast[..forecast.len() - 1]);
    let diff = tape.sub(next, pred);
    let sq = tape.square(diff);
    tape.mean(sq)
}

/// `(generator loss, discriminator loss)` from discriminator logits on real latents, raw
/// generated latents and forecaster-refined generated latents.
pub fn adversarial_losses(tape: &mut Tape, real: Var, fake: Var, refined: Var) -> (Var, Var) {
    let a1 = bce_with_logits(tape, fake, 1.0);
    let a2 = bce_with_logits(tape, refined, 1.0);
    let adv = tape.add(a1, a2);
    let d1 = bce_with_logits(tape, real, 1.0);
    let d2 = bce_with_logits(tape, fake, 0.0);
    let d3 = bce_with_logits(tape, refined, 0.0);
    let d12 = tape.add(d1, d2);
    let disc = tape.add(d12, d3);
    (adv, disc)
}

/// Per-column masked mean and population variance of a constant matrix.
pub fn masked_column_stats(x: &Tensor, mask: &Tensor) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = x.cols;
    let mut count = vec![0.0; c];
    let mut mean = vec![0.0; c];
    for r in 0..x.rows {
        for j in 0..c {
            let m = mask.get(r, j);
            count[j] += m;
            mean[j] += m * x.get(r, j);
        }
    }
    for j in 0..c {
        mean[j] /= count[j].max(1.0);
    }
    let mut var = vec![0.0; c];
    for r in 0..x.rows {
        for j in 0..c {
            let d = x.get(r, j) - mean[j];
            var[j] += mask.get(r, j) * d * d;
        }
    }
    for j in 0..c {
        var[j] /= count[j].max(1.0);
    }
    (count, mean, var)
}

/// `(Loss_moments, Loss_std)` between real and generated matrices whose columns are features.
///
/// Statistics use only positions where `mask` is 1, on both sides. Columns with fewer than two
/// valid entries are skipped.
pub fn moment_losses(tape: &mut Tape, real: &Tensor, fake: Var, mask: &Tensor) -> Result<(Var, Var)> {
    if tape.shape(fake) != real.shape() || real.shape() != mask.shape() {
        return Err(Error::Shape(format!("real {:?}, fake {:?}, mask {:?}", real.shape(), tape.shape(fake), mask.shape())));
    }
    let c = real.cols;
    let (count, rmean, rvar) = masked_column_stats(real, mask);
    let keep: Vec<bool> = count.iter().map(|&n| n >= 2.0).collect();
    let n_keep = keep.iter().filter(|&&k| k).count();
    for j in (0..c).filter(|&j| !keep[j]) {
        log::debug!("moment loss: column {j} has fewer than two valid entries; skipped");
    }
    if n_keep == 0 {
        let z = tape.scalar(0.0);
        return Ok((z, z));
    }
    let weight = Tensor::row((0..c).map(|j| if keep[j] { 1.0 / n_keep as f64 } else { 0.0 }).collect());
    let inv_count = Tensor::row(count.iter().map(|n| 1.0 / n.max(1.0)).collect());

    let m = tape.constant(mask.clone());
    let inv_n = tape.constant(inv_count);
    let w = tape.constant(weight);
    let fm = tape.mul(fake, m);
    let fsum = tape.sum_rows(fm);
    let fmean = tape.mul(fsum, inv_n);
    let centered = tape.sub(fake, fmean);
    let centered = tape.mul(centered, m);
    let sq = tape.square(centered);
    let ssum = tape.sum_rows(sq);
    let fvar = tape.mul(ssum, inv_n);
    let fvar_eps = tape.add_scalar(fvar, SIGMA_EPS);
    let fsd = tape.sqrt(fvar_eps);

    let rmean_v = tape.constant(Tensor::row(rmean));
    let rsd_v = tape.constant(Tensor::row(rvar.iter().map(|v| (v + SIGMA_EPS).sqrt()).collect()));
    let rvar_v = tape.constant(Tensor::row(rvar.clone()));
    let inv_rvar = tape.constant(Tensor::row(rvar.iter().map(|v| 1.0 / (v + STD_DELTA)).collect()));

    let dm = tape.sub(fmean, rmean_v);
    let dm = tape.abs(dm);
    let ds = tape.sub(fsd, rsd_v);
    let ds = tape.abs(ds);
    let mom = tape.add(dm, ds);
    let mom = tape.mul(mom, w);
    let mom = tape.sum(mom);

    let dv = tape.sub(fvar, rvar_v);
    let dv = tape.abs(dv);
    let rel = tape.mul(dv, inv_rvar);
    let rel = tape.mul(rel, w);
    let std = tape.sum(rel);
    Ok((mom, std))
}

/// `1 / (mean|out1 - out2| / mean|n1 - n2| + delta)`, or `None` when the two noise draws coincide.
pub fn mode_seeking_loss(tape: &mut Tape, out1: Var, out2: Var, n1: &Tensor, n2: &Tensor) -> Option<Var> {
    let noise_gap = n1.data.iter().zip(&n2.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / n1.len() as f64;
    if noise_gap == 0.0 {
        return None;
    }
    let d = tape.sub(out1, out2);
    let d = tape.abs(d);
    let gap = tape.mean(d);
    let ratio = tape.scale(gap, 1.0 / noise_gap);
    let denom = tape.add_scalar(ratio, MODE_DELTA);
    let one = tape.scalar(1.0);
    Some(tape.div(one, denom))
}

/// Centres of the soft histogram used by the divergence term, on the standardised scale.
pub fn histogram_centres(bins: usize) -> Vec<f64> {
    let (lo, hi) = (-4.0, 4.0);
    let w = (hi - lo) / bins as f64;
    (0..bins).map(|b| lo + w * (b as f64 + 0.5)).collect()
}

/// Gaussian-kernel histogram of one column, masked, normalised to a probability vector.
fn soft_histogram(tape: &mut Tape, col: Var, mask_col: &Tensor, centres: &[f64]) -> Var {
    let bw = centres[1] - centres[0];
    let c = tape.constant(Tensor::row(centres.to_vec()));
    let d = tape.sub(col, c);
    let sq = tape.square(d);
    let k = tape.scale(sq, -0.5 / (bw * bw));
    let k = tape.exp(k);
    let rs = tape.sum_cols(k);
    let rs = tape.add_scalar(rs, 1e-12);
    let p = tape.div(k, rs);
    let m = tape.constant(mask_col.clone());
    let p = tape.mul(p, m);
    let s = tape.sum_rows(p);
    let total = tape.sum(s);
    let total = tape.add_scalar(total, 1e-12);
    tape.div(s, total)
}

/// Mean over columns of the Jensen-Shannon divergence between soft marginal histograms.
pub fn divergence_loss(tape: &mut Tape, real: &Tensor, fake: Var, mask: &Tensor, bins: usize) -> Var {
    let centres = histogram_centres(bins);
    let mut terms = Vec::new();
    for j in 0..real.cols {
        let mcol = Tensor::from_vec(mask.rows, 1, (0..mask.rows).map(|r| mask.get(r, j)).collect());
        if mcol.sum() < 2.0 {
            continue;
        }
        let rcol = tape.constant(Tensor::from_vec(real.rows, 1, (0..real.rows).map(|r| real.get(r, j)).collect()));
        let q = soft_histogram(tape, rcol, &mcol, &centres);
        let q = tape.constant(tape.value(q).clone());
        let fcol = tape.slice_cols(fake, j, 1);
        let p = soft_histogram(tape, fcol, &mcol, &centres);
        let mix = tape.add(p, q);
        let mix = tape.scale(mix, 0.5);
        let mix = tape.add_scalar(mix, 1e-12);
        let lm = tape.ln(mix);
        let pe = tape.add_scalar(p, 1e-12);
        let lp = tape.ln(pe);
        let qe = tape.add_scalar(q, 1e-12);
        let lq = tape.ln(qe);
        let a = tape.sub(lp, lm);
        let a = tape.mul(p, a);
        let b = tape.sub(lq, lm);
        let b = tape.mul(q, b);
        let kl = tape.add(a, b);
        let kl = tape.sum(kl);
        terms.push(tape.scale(kl, 0.5));
    }
    if terms.is_empty() {
        return tape.scalar(0.0);
    }
    let n = terms.len() as f64;
    let all = tape.concat_cols(&terms);
    let s = tape.sum(all);
    tape.scale(s, 1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, v.to_vec())
    }

    #[test]
    fn zero_decoder_on_ones_gives_one() {
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor::zeros(3, 4));
        let l = reconstruction_loss(&mut tape, &Tensor::filled(3, 4, 1.0), pred, &Tensor::filled(3, 4, 1.0)).unwrap();
        assert_eq!(tape.scalar_value(l), 1.0);
    }

    #[test]
    fn all_masked_is_degenerate() {
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor::zeros(2, 2));
        let err = reconstruction_loss(&mut tape, &Tensor::zeros(2, 2), pred, &Tensor::zeros(2, 2)).unwrap_err();
        assert!(matches!(err, Error::DegenerateBatch(_)));
    }

    #[test]
    fn forecast_loss_limits() {
        let mut tape = Tape::new();
        let h: Vec<Var> = (0..4).map(|_| tape.constant(Tensor::filled(2, 3, 0.7))).collect();
        let same = forecast_loss(&mut tape, &h, &h);
        assert_eq!(tape.scalar_value(same), 0.0);
        let zero: Vec<Var> = (0..4).map(|_| tape.constant(Tensor::zeros(2, 3))).collect();
        let l = forecast_loss(&mut tape, &h, &zero);
        // each next-step latent has squared norm c = 6 * 0.49 over 6 entries
        assert!((tape.scalar_value(l) - 0.49).abs() < 1e-15);
    }

    #[test]
    fn chance_discriminator_gives_ln2_multiples() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(5, 1));
        let (adv, disc) = adversarial_losses(&mut tape, z, z, z);
        let ln2 = 2f64.ln();
        assert!((tape.scalar_value(adv) - 2.0 * ln2).abs() < 1e-14);
        assert!((tape.scalar_value(disc) - 3.0 * ln2).abs() < 1e-14);
    }

    #[test]
    fn perfect_discriminator_limit() {
        let mut tape = Tape::new();
        let real = tape.constant(Tensor::filled(4, 1, 1e6));
        let fake = tape.constant(Tensor::filled(4, 1, -1e6));
        let (adv, disc) = adversarial_losses(&mut tape, real, fake, fake);
        assert!(tape.scalar_value(disc) < 1e-6);
        let z = crate::nn::LOGIT_CLAMP;
        let cap = 2.0 * (z + (-z).exp().ln_1p());
        assert!((tape.scalar_value(adv) - cap).abs() < 1e-9);
    }

    #[test]
    fn identical_moments_give_zero() {
        let real = t(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let mut tape = Tape::new();
        let f = tape.constant(real.clone());
        let (m, s) = moment_losses(&mut tape, &real, f, &Tensor::filled(4, 2, 1.0)).unwrap();
        assert!(tape.scalar_value(m).abs() < 1e-12);
        assert_eq!(tape.scalar_value(s), 0.0);
    }

    #[test]
    fn mean_shift_shows_up_in_moment_loss() {
        let real = t(4, 1, &[1.0, -1.0, 2.0, 0.5]);
        let mut tape = Tape::new();
        let f = tape.constant(real.map(|x| x + 0.1));
        let (m, s) = moment_losses(&mut tape, &real, f, &Tensor::filled(4, 1, 1.0)).unwrap();
        assert!((tape.scalar_value(m) - 0.1).abs() < 1e-12);
        assert!(tape.scalar_value(s).abs() < 1e-12);
    }

    #[test]
    fn masked_entries_do_not_matter() {
        let real = t(3, 2, &[1.0, 2.0, 3.0, 4.0, 9.0, 9.0]);
        let mask = t(3, 2, &[1.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
        let fake_a = t(3, 2, &[0.5, 1.0, 2.0, 3.0, 100.0, 2.0]);
        let mut fake_b = fake_a.clone();
        fake_b.set(2, 0, -55.0);
        let mut real_b = real.clone();
        real_b.set(2, 0, 1234.0);
        let mut tape = Tape::new();
        let fa = tape.constant(fake_a);
        let fb = tape.constant(fake_b);
        let (ma, sa) = moment_losses(&mut tape, &real, fa, &mask).unwrap();
        let (mb, sb) = moment_losses(&mut tape, &real_b, fb, &mask).unwrap();
        assert_eq!(tape.scalar_value(ma), tape.scalar_value(mb));
        assert_eq!(tape.scalar_value(sa), tape.scalar_value(sb));
    }

    #[test]
    fn mode_seeking_limits() {
        let mut tape = Tape::new();
        let o = tape.constant(Tensor::filled(2, 3, 0.3));
        let n1 = Tensor::filled(2, 2, 0.0);
        let n2 = Tensor::filled(2, 2, 1.0);
        let collapsed = mode_seeking_loss(&mut tape, o, o, &n1, &n2).unwrap();
        assert!((tape.scalar_value(collapsed) - 1.0 / MODE_DELTA).abs() < 1e-6);
        let o2 = tape.constant(Tensor::filled(2, 3, 1.3));
        let unit = mode_seeking_loss(&mut tape, o, o2, &n1, &n2).unwrap();
        assert!((tape.scalar_value(unit) - 1.0 / (1.0 + MODE_DELTA)).abs() < 1e-12);
        assert!(mode_seeking_loss(&mut tape, o, o2, &n1, &n1).is_none());
    }

    #[test]
    fn divergence_of_identical_columns_is_zero() {
        let real = t(5, 1, &[-1.0, 0.0, 0.3, 1.2, 2.0]);
        let mut tape = Tape::new();
        let f = tape.constant(real.clone());
        let js = divergence_loss(&mut tape, &real, f, &Tensor::filled(5, 1, 1.0), 32);
        assert!(tape.scalar_value(js).abs() < 1e-12);
        let g = tape.constant(real.map(|x| x + 3.0));
        let js2 = divergence_loss(&mut tape, &real, g, &Tensor::filled(5, 1, 1.0), 32);
        assert!(tape.scalar_value(js2) > 0.1 && tape.scalar_value(js2) <= 2f64.ln() + 1e-9);
    }
}
