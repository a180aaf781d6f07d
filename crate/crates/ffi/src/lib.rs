//! C interface to the congrad engine.
//!
//! A game is created from configuration text (the same format as run
//! files), stepped or run to the end, and queried for its metrics. Every
//! function returns a [`CgStatus`]; on failure the message is available from
//! [`cg_last_error`] on the same thread. Strings returned through `char **`
//! out-parameters are owned by the caller and released with
//! [`cg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use congrad::cli::prepare;
use congrad::config::{RunConfig, Settings};
use congrad::protocol::{Game, GameResult};
use congrad::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Invalid configuration or input data.
    Config = 2,
    /// Failure while playing the stream (numeric, I/O, ...).
    Runtime = 3,
    /// A string argument was not valid UTF-8.
    Utf8 = 4,
    /// The call is not valid in the handle's current state.
    State = 5,
    /// The engine panicked; the handle must not be used again.
    Panic = 6,
}

/// Opaque game handle.
pub struct CgGame {
    game: Option<Game>,
    result: Option<GameResult>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

fn fail(status: CgStatus, message: impl Into<String>) -> CgStatus {
    set_error(message);
    status
}

fn from_error(e: Error) -> CgStatus {
    let status = if e.is_config() {
        CgStatus::Config
    } else {
        CgStatus::Runtime
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into [`CgStatus::Panic`].
fn guarded(f: impl FnOnce() -> CgStatus) -> CgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CgStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, CgStatus> {
    if s.is_null() {
        return Err(fail(CgStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(CgStatus::Utf8, "string argument is not UTF-8"))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> CgStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            CgStatus::Ok
        }
        Err(_) => fail(CgStatus::Runtime, "output contains a NUL byte"),
    }
}

/// The message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a game from configuration text. On success `*out` receives a
/// handle to release with [`cg_game_free`].
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cg_game_new(config: *const c_char, out: *mut *mut CgGame) -> CgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CgStatus::NullArgument, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(config) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let built = Settings::parse(text)
            .and_then(|s| RunConfig::from_settings(&s))
            .and_then(|cfg| {
                let p = prepare(&cfg)?;
                Game::new(p.source, p.model, cfg.game, p.test)
            });
        match built {
            Ok(game) => {
                *out = Box::into_raw(Box::new(CgGame {
                    game: Some(game),
                    result: None,
                }));
                CgStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `game` must come from [`cg_game_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_game_free(game: *mut CgGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

unsafe fn playing<'a>(game: *mut CgGame) -> Result<&'a mut Game, CgStatus> {
    let handle = game
        .as_mut()
        .ok_or_else(|| fail(CgStatus::NullArgument, "null game handle"))?;
    handle
        .game
        .as_mut()
        .ok_or_else(|| fail(CgStatus::State, "game already finished"))
}

/// Plays one step. `*done` is set to 1 when the stream was already exhausted
/// (no step was played), 0 otherwise.
///
/// # Safety
/// `game` must be a live handle and `done` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cg_game_step(game: *mut CgGame, done: *mut i32) -> CgStatus {
    guarded(|| {
        if done.is_null() {
            return fail(CgStatus::NullArgument, "null output pointer");
        }
        let g = match playing(game) {
            Ok(g) => g,
            Err(s) => return s,
        };
        match g.step() {
            Ok(played) => {
                *done = i32::from(!played);
                CgStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Plays the remaining stream.
///
/// # Safety
/// `game` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cg_game_run(game: *mut CgGame) -> CgStatus {
    guarded(|| match playing(game) {
        Ok(g) => g.run().map_or_else(from_error, |()| CgStatus::Ok),
        Err(s) => s,
    })
}

/// Steps played so far.
///
/// # Safety
/// `game` must be a live handle and `steps` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cg_game_steps(game: *const CgGame, steps: *mut u64) -> CgStatus {
    let Some(handle) = game.as_ref() else {
        return fail(CgStatus::NullArgument, "null game handle");
    };
    if steps.is_null() {
        return fail(CgStatus::NullArgument, "null output pointer");
    }
    *steps = match (&handle.game, &handle.result) {
        (Some(g), _) => g.steps_done(),
        (None, Some(r)) => r.log.steps.len() as u64,
        (None, None) => 0,
    };
    CgStatus::Ok
}

/// The per-step metrics CSV so far.
///
/// # Safety
/// `game` must be a live handle and `csv` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cg_game_metrics_csv(game: *const CgGame, csv: *mut *mut c_char) -> CgStatus {
    guarded(|| {
        let Some(handle) = game.as_ref() else {
            return fail(CgStatus::NullArgument, "null game handle");
        };
        if csv.is_null() {
            return fail(CgStatus::NullArgument, "null output pointer");
        }
        let log = match (&handle.game, &handle.result) {
            (Some(g), _) => g.log(),
            (None, Some(r)) => &r.log,
            (None, None) => return fail(CgStatus::State, "handle holds no game"),
        };
        write_string(csv, log.to_csv())
    })
}

/// Ends the game (playing any remaining steps) and returns the final
/// evaluation as JSON: `{"final_test": ..., "retention": ...}`, each null
/// when not configured. Further step calls return [`CgStatus::State`].
///
/// # Safety
/// `game` must be a live handle and `json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cg_game_finish(game: *mut CgGame, json: *mut *mut c_char) -> CgStatus {
    guarded(|| {
        if json.is_null() {
            return fail(CgStatus::NullArgument, "null output pointer");
        }
        let Some(handle) = game.as_mut() else {
            return fail(CgStatus::NullArgument, "null game handle");
        };
        let Some(g) = handle.game.take() else {
            return fail(CgStatus::State, "game already finished");
        };
        match g.finish() {
            Ok(result) => {
                let doc = serde_json::json!({
                    "final_test": result.final_test,
                    "retention": result.retention,
                });
                handle.result = Some(result);
                write_string(json, doc.to_string())
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
