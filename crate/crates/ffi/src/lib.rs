//! C ABI over the core library: metric functions, a generator handle for sampling synthetic
//! windows and a trader-policy handle for acting on observations.
//!
//! Every function returns a `BrtStatus`; results go through out-pointers. On failure the
//! message is kept per thread and can be read with `brt_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use brt_core::dataio::Dataset;
use brt_core::evalkit;
use brt_core::genmodel::{load_checkpoint, Conditioning, GenModel};
use brt_core::market_env::{Action, Observation};
use brt_core::nfsp::{PolicyMode, TraderPolicy};
use brt_core::nn::Tensor;
use brt_core::Error;

/// Result codes shared by every exported function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BrtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Shape = 4,
    Degenerate = 5,
    NotFitted = 6,
    NonFinite = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> BrtStatus {
    match e {
        Error::Shape(_) | Error::MisalignedPanels(_) => BrtStatus::Shape,
        Error::DegenerateBatch(_) | Error::DegenerateSeries(_) | Error::NoData(_) => BrtStatus::Degenerate,
        Error::NotFitted(_) => BrtStatus::NotFitted,
        Error::NonFinite(_) => BrtStatus::NonFinite,
        Error::Io { .. } | Error::Csv { .. } | Error::Json(_) => BrtStatus::Io,
        Error::Config(_) | Error::InvalidInput(_) => BrtStatus::InvalidArgument,
        Error::EpisodeOver => BrtStatus::Internal,
    }
}

struct Fail(BrtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: BrtStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

/// Run `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BrtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BrtStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            BrtStatus::Internal
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(BrtStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(BrtStatus::NullPointer, "null output pointer"))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(fail(BrtStatus::NullPointer, "null path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| fail(BrtStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Copy the last error message of this thread into `buf` (NUL-terminated, truncated to fit).
/// Returns the full message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn brt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Annualised return of a net-value curve spanning `trading_days` days.
///
/// # Safety
/// `net_values` must point to `n` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn brt_arr(net_values: *const f64, n: usize, trading_days: usize, out_value: *mut f64) -> BrtStatus {
    guard(|| {
        let v = evalkit::arr(slice(net_values, n)?, trading_days)?;
        *out(out_value)? = v;
        Ok(())
    })
}

/// Mean over standard deviation of daily returns, not annualised.
///
/// # Safety
/// `returns` must point to `n` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn brt_sharpe(returns: *const f64, n: usize, out_value: *mut f64) -> BrtStatus {
    guard(|| {
        let v = evalkit::sharpe(slice(returns, n)?)?;
        *out(out_value)? = v;
        Ok(())
    })
}

/// Largest peak-to-trough fall of a net-value curve, as a positive fraction.
///
/// # Safety
/// `net_values` must point to `n` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn brt_max_drawdown(net_values: *const f64, n: usize, out_value: *mut f64) -> BrtStatus {
    guard(|| {
        let v = evalkit::max_drawdown(slice(net_values, n)?)?;
        *out(out_value)? = v;
        Ok(())
    })
}

/// One-sided signed-rank test that paired differences tend to be positive.
/// `out_w_plus` may be null.
///
/// # Safety
/// `diffs` must point to `n` doubles; `out_p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn brt_wilcoxon(diffs: *const f64, n: usize, out_p: *mut f64, out_w_plus: *mut f64) -> BrtStatus {
    guard(|| {
        let r = evalkit::wilcoxon_directional(slice(diffs, n)?)?;
        *out(out_p)? = r.p_value;
        if let Some(w) = out_w_plus.as_mut() {
            *w = r.w_plus;
        }
        Ok(())
    })
}

/// A trained market generator together with the dataset it conditions on.
pub struct BrtGenerator {
    model: GenModel,
    dataset: Dataset,
}

/// Load a generator checkpoint directory and the dataset JSON written by ingestion.
///
/// # Safety
/// Paths must be NUL-terminated; `out_handle` must be writable. Free the handle with
/// `brt_generator_free`.
#[no_mangle]
pub unsafe extern "C" fn brt_generator_load(
    checkpoint_dir: *const c_char,
    dataset_path: *const c_char,
    out_handle: *mut *mut BrtGenerator,
) -> BrtStatus {
    guard(|| {
        let slot = out(out_handle)?;
        let (model, _) = load_checkpoint(&path(checkpoint_dir)?)?;
        let dataset = Dataset::load(&path(dataset_path)?)?;
        let d = &model.dims;
        let n_series = dataset.market.n_instruments() * dataset.market.n_features();
        if d.n_series != n_series || d.n_macro != dataset.macro_panel.n_indicators() || d.window != dataset.window.length {
            return Err(fail(BrtStatus::Shape, "checkpoint was trained on a dataset of a different shape"));
        }
        *slot = Box::into_raw(Box::new(BrtGenerator { model, dataset }));
        Ok(())
    })
}

/// Window length, series per day (instruments times features) and number of days.
///
/// # Safety
/// `handle` must come from `brt_generator_load`; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn brt_generator_dims(
    handle: *const BrtGenerator,
    out_window: *mut usize,
    out_series: *mut usize,
    out_days: *mut usize,
) -> BrtStatus {
    guard(|| {
        let g = handle.as_ref().ok_or_else(|| fail(BrtStatus::NullPointer, "null generator"))?;
        *out(out_window)? = g.model.dims.window;
        *out(out_series)? = g.model.dims.n_series;
        *out(out_days)? = g.dataset.market.n_time();
        Ok(())
    })
}

/// Sample the window of days `[end_day - L + 1, end_day]` conditioned on the real history and
/// macro data before it. Writes `L x series` values in raw feature units, row-major by day.
///
/// # Safety
/// `handle` must come from `brt_generator_load`; `out_values` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn brt_generator_sample(
    handle: *const BrtGenerator,
    end_day: usize,
    seed: u64,
    out_values: *mut f64,
    out_len: usize,
) -> BrtStatus {
    guard(|| {
        let g = handle.as_ref().ok_or_else(|| fail(BrtStatus::NullPointer, "null generator"))?;
        let (l, s) = (g.model.dims.window, g.model.dims.n_series);
        if out_values.is_null() {
            return Err(fail(BrtStatus::NullPointer, "null output buffer"));
        }
        if out_len < l * s {
            return Err(fail(BrtStatus::BufferTooSmall, format!("need {} values, buffer holds {out_len}", l * s)));
        }
        if end_day + 1 < 2 * l || end_day >= g.dataset.market.n_time() {
            return Err(fail(BrtStatus::InvalidArgument, format!("end day {end_day} leaves no room for a {l}-day history")));
        }
        let cond = Conditioning::from_dataset(&g.dataset, end_day);
        let mut rng = brt_core::rng::stream(seed, "ffi/sample");
        let noise = Tensor::from_vec(l, g.model.dims.noise, g.model.sample_noise(&mut rng, 1).iter().flat_map(|n| n.data.clone()).collect());
        let x = g.model.generate(&cond, &noise)?;
        let nf = g.dataset.market.n_features();
        let dst = std::slice::from_raw_parts_mut(out_values, l * s);
        for j in 0..l {
            for k in 0..s {
                dst[j * s + k] = g.dataset.scaler.inverse(k / nf, k % nf, x.get(j, k));
            }
        }
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from `brt_generator_load`, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn brt_generator_free(handle: *mut BrtGenerator) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// A trained trader: average policy, best-response network and belief network.
pub struct BrtPolicy {
    policy: TraderPolicy,
}

/// Load a trader checkpoint directory (the one holding `trader/` and `qbn/`).
///
/// # Safety
/// `dir` must be NUL-terminated; `out_handle` must be writable. Free with `brt_policy_free`.
#[no_mangle]
pub unsafe extern "C" fn brt_policy_load(dir: *const c_char, out_handle: *mut *mut BrtPolicy) -> BrtStatus {
    guard(|| {
        let slot = out(out_handle)?;
        let policy = TraderPolicy::load(&path(dir)?)?;
        *slot = Box::into_raw(Box::new(BrtPolicy { policy }));
        Ok(())
    })
}

/// Observation sizes the policy expects: flat features, per-day sequence width, sequence length.
///
/// # Safety
/// `handle` must come from `brt_policy_load`; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn brt_policy_layout(
    handle: *const BrtPolicy,
    out_flat: *mut usize,
    out_seq_dim: *mut usize,
    out_seq_len: *mut usize,
) -> BrtStatus {
    guard(|| {
        let p = handle.as_ref().ok_or_else(|| fail(BrtStatus::NullPointer, "null policy"))?;
        let l = p.policy.layout;
        *out(out_flat)? = l.flat_dim;
        *out(out_seq_dim)? = l.seq_dim;
        *out(out_seq_len)? = l.seq_len;
        Ok(())
    })
}

/// Greedy action for one observation. `sequence` is `seq_len x seq_dim`, oldest day first.
/// `best_response` selects the best-response network instead of the average policy.
/// The action is written as 0 = long, 1 = short, 2 = flat.
///
/// # Safety
/// `handle` must come from `brt_policy_load`; arrays must hold the lengths given;
/// `out_action` must be writable.
#[no_mangle]
pub unsafe extern "C" fn brt_policy_act(
    handle: *const BrtPolicy,
    flat: *const f64,
    flat_len: usize,
    sequence: *const f64,
    sequence_len: usize,
    best_response: bool,
    out_action: *mut u32,
) -> BrtStatus {
    guard(|| {
        let p = handle.as_ref().ok_or_else(|| fail(BrtStatus::NullPointer, "null policy"))?;
        let l = p.policy.layout;
        if flat_len != l.flat_dim || sequence_len != l.seq_dim * l.seq_len {
            return Err(fail(
                BrtStatus::Shape,
                format!("expected {} flat and {} sequence values", l.flat_dim, l.seq_dim * l.seq_len),
            ));
        }
        let obs = Observation {
            flat: slice(flat, flat_len)?.to_vec(),
            sequence: slice(sequence, sequence_len)?.chunks(l.seq_dim.max(1)).map(<[f64]>::to_vec).collect(),
        };
        let mode = if best_response { PolicyMode::BestResponse } else { PolicyMode::Average };
        let a = p.policy.act(&obs, mode)?;
        *out(out_action)? = Action::ALL.iter().position(|x| *x == a).expect("action in ALL") as u32;
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from `brt_policy_load`, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn brt_policy_free(handle: *mut BrtPolicy) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
