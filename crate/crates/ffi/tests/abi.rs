use std::ffi::{c_char, CString};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use brt_core::dataio::{ingest, make_synthetic_panel, Dataset, IngestOptions, Split, SplitSpec, SyntheticParams, WindowSpec};
use brt_core::genmodel::{save_checkpoint, GenDims, GenManifest, GenModel, GenTrainConfig, Phase};
use brt_core::market_env::{EnvConfig, MarketEnv};
use brt_core::nfsp::{train, NfspConfig, PolicyMode, TraderPolicy};
use brt_core::rng::stream;
use brt_ffi::*;

fn dataset(instruments: usize, seed: u64) -> Dataset {
    let syn = make_synthetic_panel(&mut stream(seed, "ffi-test"), 300, 2, &SyntheticParams::macro_driven(instruments)).unwrap();
    let d = &syn.market.dates;
    let n = d.len();
    let opts = IngestOptions {
        split: SplitSpec { train_end: d[n * 6 / 10], valid_end: d[n * 8 / 10], test_end: d[n - 1] },
        window: WindowSpec::new(5).unwrap(),
        tau_corr: 0.05,
        tau_red: 0.95,
        target_horizon: 1,
    };
    ingest(&syn.frames, &syn.macro_series, &opts).unwrap()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { brt_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

/// Writes `dataset.json` and an untrained generator checkpoint under `dir`.
fn write_generator(dir: &Path, ds: &Dataset) {
    ds.save(&dir.join("dataset.json")).unwrap();
    let mut model = GenModel::new(GenDims::for_dataset(ds, 8, 4, 16), &mut stream(1, "model")).unwrap();
    // weights stay random; only the sampling path is under test
    model.phase = Phase::Adversarial;
    save_checkpoint(&dir.join("gen"), &model, &GenManifest::describe(&model, ds, &GenTrainConfig::default(), 1)).unwrap();
}

#[test]
fn metrics_match_hand_values() {
    let nv = [1.0, 1.1, 0.99, 1.2];
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(brt_arr(nv.as_ptr(), nv.len(), 252, &mut v), BrtStatus::Ok);
        assert!((v - 0.2).abs() < 1e-12);
        assert_eq!(brt_max_drawdown(nv.as_ptr(), nv.len(), &mut v), BrtStatus::Ok);
        assert!((v - 0.1).abs() < 1e-12);
        let r = [0.01, 0.03];
        assert_eq!(brt_sharpe(r.as_ptr(), 2, &mut v), BrtStatus::Ok);
        // mean 0.02, sample sd 0.01 * sqrt(2)
        assert!((v - 0.02 / (0.01 * 2f64.sqrt())).abs() < 1e-12);
        let d = [1.0, 2.0, 3.0];
        let mut w = 0.0;
        assert_eq!(brt_wilcoxon(d.as_ptr(), 3, &mut v, &mut w), BrtStatus::Ok);
        assert!((v - 0.125).abs() < 1e-12);
        assert_eq!(w, 6.0);
        assert_eq!(brt_wilcoxon(d.as_ptr(), 3, &mut v, ptr::null_mut()), BrtStatus::Ok);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(brt_arr(ptr::null(), 3, 252, &mut v), BrtStatus::NullPointer);
        let nv = [1.0, 2.0];
        assert_eq!(brt_arr(nv.as_ptr(), 2, 252, ptr::null_mut()), BrtStatus::NullPointer);
        assert_eq!(brt_arr(nv.as_ptr(), 0, 252, &mut v), BrtStatus::InvalidArgument);
        assert!(last_error().contains("empty"));
        let flat = [0.01, 0.01, 0.01];
        assert_eq!(brt_sharpe(flat.as_ptr(), 3, &mut v), BrtStatus::Degenerate);
        let zeros = [0.0; 4];
        assert_eq!(brt_wilcoxon(zeros.as_ptr(), 4, &mut v, ptr::null_mut()), BrtStatus::Degenerate);
        let bad = [1.0, f64::NAN];
        assert_eq!(brt_wilcoxon(bad.as_ptr(), 2, &mut v, ptr::null_mut()), BrtStatus::NonFinite);
    }
}

#[test]
fn error_message_is_truncated_safely() {
    let mut v = 0.0;
    unsafe {
        brt_arr(ptr::null(), 1, 1, &mut v);
        let full = brt_last_error_message(ptr::null_mut(), 0);
        assert!(full > 4);
        let mut small = [1 as c_char; 4];
        assert_eq!(brt_last_error_message(small.as_mut_ptr(), 4), full);
        assert_eq!(small[3], 0);
    }
}

#[test]
fn generator_handle_samples_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(2, 3);
    write_generator(dir.path(), &ds);
    let (ck, dp) = (cstr(&dir.path().join("gen")), cstr(&dir.path().join("dataset.json")));
    let mut h: *mut BrtGenerator = ptr::null_mut();
    unsafe {
        assert_eq!(brt_generator_load(ck.as_ptr(), dp.as_ptr(), &mut h), BrtStatus::Ok);
        assert!(!h.is_null());
        let (mut l, mut s, mut days) = (0, 0, 0);
        assert_eq!(brt_generator_dims(h, &mut l, &mut s, &mut days), BrtStatus::Ok);
        assert_eq!((l, s, days), (5, 10, ds.market.n_time()));
        let mut a = vec![0.0; l * s];
        let mut b = vec![0.0; l * s];
        let mut c = vec![0.0; l * s];
        assert_eq!(brt_generator_sample(h, 100, 7, a.as_mut_ptr(), a.len()), BrtStatus::Ok);
        assert_eq!(brt_generator_sample(h, 100, 7, b.as_mut_ptr(), b.len()), BrtStatus::Ok);
        assert_eq!(brt_generator_sample(h, 100, 8, c.as_mut_ptr(), c.len()), BrtStatus::Ok);
        assert!(a.iter().all(|x| x.is_finite()));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(brt_generator_sample(h, 100, 7, a.as_mut_ptr(), a.len() - 1), BrtStatus::BufferTooSmall);
        assert_eq!(brt_generator_sample(h, 3, 7, a.as_mut_ptr(), a.len()), BrtStatus::InvalidArgument);
        assert_eq!(brt_generator_sample(h, days, 7, a.as_mut_ptr(), a.len()), BrtStatus::InvalidArgument);
        brt_generator_free(h);
        brt_generator_free(ptr::null_mut());
    }
}

#[test]
fn generator_load_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write_generator(dir.path(), &dataset(2, 3));
    dataset(3, 4).save(&dir.path().join("other.json")).unwrap();
    let ck = cstr(&dir.path().join("gen"));
    let mut h: *mut BrtGenerator = ptr::null_mut();
    unsafe {
        let other = cstr(&dir.path().join("other.json"));
        assert_eq!(brt_generator_load(ck.as_ptr(), other.as_ptr(), &mut h), BrtStatus::Shape);
        let missing = cstr(&dir.path().join("nope"));
        assert_eq!(brt_generator_load(missing.as_ptr(), other.as_ptr(), &mut h), BrtStatus::Io);
        assert_eq!(brt_generator_load(ptr::null(), other.as_ptr(), &mut h), BrtStatus::NullPointer);
        assert!(h.is_null());
        std::fs::write(dir.path().join("gen/params.bin"), [0u8; 16]).unwrap();
        let dp = cstr(&dir.path().join("dataset.json"));
        assert_eq!(brt_generator_load(ck.as_ptr(), dp.as_ptr(), &mut h), BrtStatus::InvalidArgument);
        assert!(last_error().contains("hash"));
    }
}

#[test]
fn policy_handle_matches_library_actions() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Arc::new(dataset(1, 5));
    let mut env = MarketEnv::historical(ds, EnvConfig::default(), Split::Train).unwrap();
    let cfg = NfspConfig { total_steps: 60, warmup: 10, batch_size: 8, eval_every: 0, hidden: vec![8], qbn_hidden: 4, ..Default::default() };
    train(cfg, &mut env, Some(dir.path())).unwrap();
    let lib = TraderPolicy::load(dir.path()).unwrap();
    let p = cstr(dir.path());
    let mut h: *mut BrtPolicy = ptr::null_mut();
    unsafe {
        assert_eq!(brt_policy_load(p.as_ptr(), &mut h), BrtStatus::Ok);
        let (mut f, mut sd, mut sl) = (0, 0, 0);
        assert_eq!(brt_policy_layout(h, &mut f, &mut sd, &mut sl), BrtStatus::Ok);
        assert_eq!((f, sd, sl), (env.flat_dim(), env.seq_dim(), env.seq_len()));
        let mut obs = env.reset(0).unwrap();
        for _ in 0..20 {
            let seq: Vec<f64> = obs.sequence.iter().flatten().copied().collect();
            for (br, mode) in [(false, PolicyMode::Average), (true, PolicyMode::BestResponse)] {
                let mut a = 9u32;
                assert_eq!(brt_policy_act(h, obs.flat.as_ptr(), obs.flat.len(), seq.as_ptr(), seq.len(), br, &mut a), BrtStatus::Ok);
                assert_eq!(a as usize, lib.act(&obs, mode).unwrap().index());
            }
            obs = env.step(lib.act(&obs, PolicyMode::Average).unwrap()).unwrap().obs;
        }
        let mut a = 0u32;
        assert_eq!(brt_policy_act(h, obs.flat.as_ptr(), obs.flat.len() - 1, ptr::null(), 0, false, &mut a), BrtStatus::Shape);
        brt_policy_free(h);
    }
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/brt.h")).unwrap();
    for f in [
        "brt_last_error_message",
        "brt_arr",
        "brt_sharpe",
        "brt_max_drawdown",
        "brt_wilcoxon",
        "brt_generator_load",
        "brt_generator_dims",
        "brt_generator_sample",
        "brt_generator_free",
        "brt_policy_load",
        "brt_policy_layout",
        "brt_policy_act",
        "brt_policy_free",
        "BRT_STATUS_BUFFER_TOO_SMALL = 8",
        "typedef struct BrtGenerator BrtGenerator",
    ] {
        assert!(h.contains(f), "header lacks {f}");
    }
}
