//! C ABI for the alignment engine: opaque handles, integer error codes, and
//! a thread-local last-error message.
//!
//! Every function returns `TKGA_OK` (0) on success; on failure the code
//! classifies the error and `tkga_last_error` returns a message valid until
//! the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_double, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tkga_core::config::RunConfig;
use tkga_core::kg::{parse_seed_str, parse_tkg_file, parse_tkg_str, SeedAlignment, TemporalKG};
use tkga_core::metrics::{hits_mrr, rank_test_pairs};
use tkga_core::names::HashNgramProvider;
use tkga_core::pipeline::{run_pipeline, PipelineResult};
use tkga_core::projection::RelMap;
use tkga_core::reasoner::MockReasoner;

pub const TKGA_OK: c_int = 0;
pub const TKGA_ERR_NULL_ARGUMENT: c_int = 1;
pub const TKGA_ERR_INVALID_UTF8: c_int = 2;
pub const TKGA_ERR_PARSE: c_int = 3;
pub const TKGA_ERR_RUNTIME: c_int = 4;
pub const TKGA_ERR_PANIC: c_int = 5;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).expect("no interior nul");
    });
}

/// Message of the most recent failure on this thread; empty string when none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tkga_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

pub struct TkgaGraph {
    kg: TemporalKG,
}

pub struct TkgaResult {
    result: PipelineResult,
    hits1: f64,
    mrr: f64,
    json: String,
}

unsafe fn read_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        set_error(&format!("{name} is null"));
        return Err(TKGA_ERR_NULL_ARGUMENT);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{name} is not valid UTF-8"));
        TKGA_ERR_INVALID_UTF8
    })
}

fn guard<F: FnOnce() -> c_int>(f: F) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            TKGA_ERR_PANIC
        }
    }
}

/// Parses a quadruple file (`head\trel\ttail\tbegin\tend` per line).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tkga_graph_parse_file(
    path: *const c_char,
    out: *mut *mut TkgaGraph,
) -> c_int {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return TKGA_ERR_NULL_ARGUMENT;
        }
        let path = match read_str(path, "path") {
            Ok(s) => s,
            Err(c) => return c,
        };
        match parse_tkg_file(path) {
            Ok(kg) => {
                *out = Box::into_raw(Box::new(TkgaGraph { kg }));
                TKGA_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                TKGA_ERR_PARSE
            }
        }
    })
}

/// Parses quadruple text; `origin` names the input in error messages.
///
/// # Safety
/// All pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tkga_graph_parse_text(
    text: *const c_char,
    origin: *const c_char,
    out: *mut *mut TkgaGraph,
) -> c_int {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return TKGA_ERR_NULL_ARGUMENT;
        }
        let (text, origin) = match (read_str(text, "text"), read_str(origin, "origin")) {
            (Ok(t), Ok(o)) => (t, o),
            (Err(c), _) | (_, Err(c)) => return c,
        };
        match parse_tkg_str(text, origin) {
            Ok(kg) => {
                *out = Box::into_raw(Box::new(TkgaGraph { kg }));
                TKGA_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                TKGA_ERR_PARSE
            }
        }
    })
}

/// # Safety
/// `graph` must be a live handle from a parse call.
#[no_mangle]
pub unsafe extern "C" fn tkga_graph_num_entities(graph: *const TkgaGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    (*graph).kg.num_entities()
}

/// # Safety
/// `graph` must be a live handle from a parse call.
#[no_mangle]
pub unsafe extern "C" fn tkga_graph_num_quadruples(graph: *const TkgaGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    (*graph).kg.quadruples().len()
}

/// # Safety
/// `graph` must come from a parse call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tkga_graph_free(graph: *mut TkgaGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Runs the full alignment pipeline with the deterministic rule-based
/// reasoner and hashed name embeddings. `seeds_text` holds
/// `src_label\ttgt_label` lines; `config_text` optional flat key=value
/// overrides (pass NULL for defaults).
///
/// # Safety
/// Handles must be live; strings NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tkga_align(
    source: *const TkgaGraph,
    target: *const TkgaGraph,
    seeds_text: *const c_char,
    config_text: *const c_char,
    out: *mut *mut TkgaResult,
) -> c_int {
    guard(|| {
        if source.is_null() || target.is_null() || out.is_null() {
            set_error("source, target, and out must not be null");
            return TKGA_ERR_NULL_ARGUMENT;
        }
        let seeds_text = match read_str(seeds_text, "seeds_text") {
            Ok(s) => s,
            Err(c) => return c,
        };
        let mut cfg = RunConfig::default();
        if !config_text.is_null() {
            let text = match read_str(config_text, "config_text") {
                Ok(s) => s,
                Err(c) => return c,
            };
            if let Err(e) = cfg.apply_text(text) {
                set_error(&e.to_string());
                return TKGA_ERR_PARSE;
            }
        }
        let src = &(*source).kg;
        let tgt = &(*target).kg;
        let run = || -> tkga_core::Result<TkgaResult> {
            let pairs = parse_seed_str(seeds_text, "seeds", src, tgt)?;
            let seeds = SeedAlignment::split_by_fraction(pairs, cfg.train_fraction, cfg.split_seed)?;
            let names = HashNgramProvider::new(cfg.pipeline.d_name);
            let mut reasoner = MockReasoner::new(RelMap::ExactLabel);
            let test = seeds.test_pairs();
            let result = run_pipeline(
                src,
                tgt,
                &seeds,
                &RelMap::ExactLabel,
                &mut reasoner,
                &names,
                &cfg.pipeline,
                None,
                Some(&test),
            )?;
            let report = hits_mrr(rank_test_pairs(&result.matrix, &test, &result.phi_f))?;
            let alignment: Vec<[String; 2]> = result
                .final_pairs
                .iter()
                .map(|&(s, t)| {
                    [
                        src.entity_label(s).to_string(),
                        tgt.entity_label(t).to_string(),
                    ]
                })
                .collect();
            let json = serde_json::json!({
                "schema_version": 1,
                "report": report,
                "fused_pair_count": result.phi_f.len(),
                "alignment": alignment,
            })
            .to_string();
            Ok(TkgaResult {
                hits1: report.hits1,
                mrr: report.mrr,
                result,
                json,
            })
        };
        match run() {
            Ok(r) => {
                *out = Box::into_raw(Box::new(r));
                TKGA_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                TKGA_ERR_RUNTIME
            }
        }
    })
}

/// # Safety
/// `result` must be a live handle from `tkga_align`.
#[no_mangle]
pub unsafe extern "C" fn tkga_result_hits1(result: *const TkgaResult) -> c_double {
    if result.is_null() {
        return -1.0;
    }
    (*result).hits1
}

/// # Safety
/// `result` must be a live handle from `tkga_align`.
#[no_mangle]
pub unsafe extern "C" fn tkga_result_mrr(result: *const TkgaResult) -> c_double {
    if result.is_null() {
        return -1.0;
    }
    (*result).mrr
}

/// Number of pairs fixed by the reasoner fusion stage.
///
/// # Safety
/// `result` must be a live handle from `tkga_align`.
#[no_mangle]
pub unsafe extern "C" fn tkga_result_fused_pairs(result: *const TkgaResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).result.phi_f.len()
}

/// Serializes the run as JSON; free the returned string with
/// `tkga_string_free`.
///
/// # Safety
/// `result` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tkga_result_json(
    result: *const TkgaResult,
    out: *mut *mut c_char,
) -> c_int {
    guard(|| {
        if result.is_null() || out.is_null() {
            set_error("result and out must not be null");
            return TKGA_ERR_NULL_ARGUMENT;
        }
        let json = (*result).json.replace('\0', " ");
        match CString::new(json) {
            Ok(s) => {
                *out = s.into_raw();
                TKGA_OK
            }
            Err(_) => {
                set_error("result JSON contains an interior NUL");
                TKGA_ERR_RUNTIME
            }
        }
    })
}

/// # Safety
/// `s` must come from `tkga_result_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tkga_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `result` must come from `tkga_align` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tkga_result_free(result: *mut TkgaResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn parse_and_introspect() {
        let text = c("a\tr\tb\t2019\t2019\nb\tr\tc\t####\t####\n");
        let origin = c("test");
        let mut g: *mut TkgaGraph = ptr::null_mut();
        let code = unsafe { tkga_graph_parse_text(text.as_ptr(), origin.as_ptr(), &mut g) };
        assert_eq!(code, TKGA_OK);
        unsafe {
            assert_eq!(tkga_graph_num_entities(g), 3);
            assert_eq!(tkga_graph_num_quadruples(g), 2);
            tkga_graph_free(g);
        }
    }

    #[test]
    fn parse_error_sets_message() {
        let text = c("only\ttwo\n");
        let origin = c("bad");
        let mut g: *mut TkgaGraph = ptr::null_mut();
        let code = unsafe { tkga_graph_parse_text(text.as_ptr(), origin.as_ptr(), &mut g) };
        assert_eq!(code, TKGA_ERR_PARSE);
        let msg = unsafe { CStr::from_ptr(tkga_last_error()) }.to_str().unwrap();
        assert!(msg.contains("bad"), "error message was '{msg}'");
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut g: *mut TkgaGraph = ptr::null_mut();
        let origin = c("x");
        let code = unsafe { tkga_graph_parse_text(ptr::null(), origin.as_ptr(), &mut g) };
        assert_eq!(code, TKGA_ERR_NULL_ARGUMENT);
        unsafe {
            assert_eq!(tkga_graph_num_entities(ptr::null()), 0);
            tkga_graph_free(ptr::null_mut());
            tkga_result_free(ptr::null_mut());
            tkga_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn align_through_the_c_surface() {
        let out = tkga_core::synth::synth_generate(&tkga_core::synth::SynthConfig::easy(15, 21))
            .unwrap();
        let src_text = c(&out.source.serialize());
        let tgt_text = c(&out.target.serialize());
        let origin = c("synthetic");
        let mut src: *mut TkgaGraph = ptr::null_mut();
        let mut tgt: *mut TkgaGraph = ptr::null_mut();
        unsafe {
            assert_eq!(
                tkga_graph_parse_text(src_text.as_ptr(), origin.as_ptr(), &mut src),
                TKGA_OK
            );
            assert_eq!(
                tkga_graph_parse_text(tgt_text.as_ptr(), origin.as_ptr(), &mut tgt),
                TKGA_OK
            );
        }
        let mut seeds = String::new();
        for &(s, t) in &out.seeds.pairs {
            seeds.push_str(out.source.entity_label(s));
            seeds.push('\t');
            seeds.push_str(out.target.entity_label(t));
            seeds.push('\n');
        }
        let seeds = c(&seeds);
        let cfg = c("iterations=1\nskipgram.epochs=2\ntrainer.epochs=3\nwalk.per_entity=2\n");
        let mut result: *mut TkgaResult = ptr::null_mut();
        let code = unsafe {
            tkga_align(src, tgt, seeds.as_ptr(), cfg.as_ptr(), &mut result)
        };
        assert_eq!(code, TKGA_OK, "align failed: {:?}", unsafe {
            CStr::from_ptr(tkga_last_error())
        });
        unsafe {
            assert!(tkga_result_hits1(result) >= 0.0);
            let mut json: *mut c_char = ptr::null_mut();
            assert_eq!(tkga_result_json(result, &mut json), TKGA_OK);
            let text = CStr::from_ptr(json).to_str().unwrap().to_string();
            assert!(text.contains("\"schema_version\""));
            tkga_string_free(json);
            tkga_result_free(result);
            tkga_graph_free(src);
            tkga_graph_free(tgt);
        }
    }
}
