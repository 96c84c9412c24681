//! C ABI over the simulation engine.
//!
//! Simulations are opaque handles. Every fallible call returns an
//! [`IrvStatus`]; on failure [`irv_last_error`] describes the cause. Strings
//! handed out by the library are NUL-terminated UTF-8 and must be released
//! with [`irv_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use irollan::driver::{recency_weight, Pad};
use irollan::field::{spherical_similarity, BlendConfig, Position};
use irollan::ltrha::{act_probability, compute_topic, rank_to_allocation};
use irollan::runtime::{RuntimeError, Simulation, SimulationConfig};
use irollan::world::WorldError;
use serde_json::json;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    UnknownAgent = 4,
    Runtime = 5,
    Panic = 6,
}

/// Opaque simulation handle.
pub struct IrvSimulation {
    inner: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: IrvStatus, message: impl Into<String>) -> IrvStatus {
    set_error(message);
    status
}

fn runtime_status(e: RuntimeError) -> IrvStatus {
    let status = match &e {
        RuntimeError::World(WorldError::UnknownAgent(_)) => IrvStatus::UnknownAgent,
        RuntimeError::Config(_) => IrvStatus::InvalidArgument,
        _ => IrvStatus::Runtime,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> IrvStatus) -> IrvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == IrvStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(_) => fail(IrvStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, IrvStatus> {
    if p.is_null() {
        return Err(fail(IrvStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(IrvStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn sim_mut<'a>(p: *mut IrvSimulation) -> Result<&'a mut Simulation, IrvStatus> {
    p.as_mut()
        .map(|s| &mut s.inner)
        .ok_or_else(|| fail(IrvStatus::NullPointer, "null simulation handle"))
}

/// Writes `value` to `out` if `out` is non-null.
unsafe fn emit(out: *mut *mut c_char, value: serde_json::Value) -> IrvStatus {
    if out.is_null() {
        return IrvStatus::Ok;
    }
    match CString::new(value.to_string()) {
        Ok(s) => {
            *out = s.into_raw();
            IrvStatus::Ok
        }
        Err(_) => fail(IrvStatus::Runtime, "output contained a NUL byte"),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<serde_json::Value, IrvStatus> {
    serde_json::to_value(v).map_err(|e| fail(IrvStatus::Runtime, e.to_string()))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn irv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a simulation from TOML configuration text; null means defaults.
///
/// # Safety
/// `config_toml` must be null or a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irv_simulation_new(config_toml: *const c_char, out: *mut *mut IrvSimulation) -> IrvStatus {
    guard(|| {
        if out.is_null() {
            return fail(IrvStatus::NullPointer, "null output pointer");
        }
        let config = if config_toml.is_null() {
            SimulationConfig::default()
        } else {
            let text = match read_str(config_toml) {
                Ok(t) => t,
                Err(s) => return s,
            };
            match SimulationConfig::from_toml(text) {
                Ok(c) => c,
                Err(e) => return runtime_status(e),
            }
        };
        match Simulation::new(config) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(IrvSimulation { inner }));
                IrvStatus::Ok
            }
            Err(e) => runtime_status(e),
        }
    })
}

/// # Safety
/// `sim` must be null or a handle from [`irv_simulation_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irv_simulation_free(sim: *mut IrvSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances one step. When `out_json` is non-null it receives the step's
/// records as a JSON array.
///
/// # Safety
/// `sim` must be a live handle; `out_json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn irv_simulation_step(sim: *mut IrvSimulation, out_json: *mut *mut c_char) -> IrvStatus {
    guard(|| {
        let sim = match sim_mut(sim) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match sim.step() {
            Ok(records) => match to_value(&records) {
                Ok(v) => emit(out_json, v),
                Err(s) => s,
            },
            Err(e) => runtime_status(e),
        }
    })
}

/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn irv_simulation_completed_steps(sim: *const IrvSimulation) -> u64 {
    sim.as_ref().map_or(0, |s| s.inner.completed_steps())
}

/// `{observation, action_space, revision}` for one agent.
///
/// # Safety
/// `sim` must be a live handle, `agent` a C string, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn irv_simulation_observe(
    sim: *mut IrvSimulation,
    agent: *const c_char,
    out_json: *mut *mut c_char,
) -> IrvStatus {
    guard(|| {
        let (sim, agent) = match (sim_mut(sim), read_str(agent)) {
            (Ok(s), Ok(a)) => (s, a),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match sim.observe(agent) {
            Ok((observation, action_space)) => emit(
                out_json,
                json!({ "observation": observation, "action_space": action_space, "revision": sim.revision() }),
            ),
            Err(e) => runtime_status(e),
        }
    })
}

/// Applies an action directly, without the resource gate. Parse and legality
/// failures are reported in the returned `outcome`, not as error statuses.
///
/// # Safety
/// `sim` must be a live handle, `agent` and `action` C strings, `out_json`
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn irv_simulation_act(
    sim: *mut IrvSimulation,
    agent: *const c_char,
    action: *const c_char,
    out_json: *mut *mut c_char,
) -> IrvStatus {
    guard(|| {
        let (sim, agent, action) = match (sim_mut(sim), read_str(agent), read_str(action)) {
            (Ok(s), Ok(a), Ok(t)) => (s, a, t),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let outcome = match sim.act(agent, action) {
            Ok(o) => o,
            Err(e) => return runtime_status(e),
        };
        match sim.observe(agent) {
            Ok((observation, _)) => emit(
                out_json,
                json!({ "outcome": outcome.to_string(), "observation": observation, "revision": sim.revision() }),
            ),
            Err(e) => runtime_status(e),
        }
    })
}

/// Full world snapshot with revision, step count and resource balances.
///
/// # Safety
/// `sim` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn irv_simulation_state_json(sim: *mut IrvSimulation, out_json: *mut *mut c_char) -> IrvStatus {
    guard(|| {
        let sim = match sim_mut(sim) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let world = match to_value(sim.world()) {
            Ok(v) => v,
            Err(s) => return s,
        };
        emit(
            out_json,
            json!({
                "revision": sim.revision(),
                "completed_steps": sim.completed_steps(),
                "world": world,
                "resources": sim.ledger().balances(),
            }),
        )
    })
}

/// # Safety
/// `sim` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn irv_simulation_metrics_json(sim: *mut IrvSimulation, out_json: *mut *mut c_char) -> IrvStatus {
    guard(|| {
        let sim = match sim_mut(sim) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match to_value(sim.metrics()) {
            Ok(v) => emit(out_json, v),
            Err(s) => s,
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Probability that an agent with `balance` resources acts.
#[no_mangle]
pub extern "C" fn irv_act_probability(balance: i64) -> f64 {
    act_probability(balance)
}

/// Signed allocation for a 1-based `rank` among `n` agents.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irv_rank_to_allocation(rank: usize, n: usize, s_min: i64, s_max: i64, out: *mut f64) -> IrvStatus {
    guard(|| {
        if out.is_null() {
            return fail(IrvStatus::NullPointer, "null output pointer");
        }
        match rank_to_allocation(rank, n, s_min, s_max) {
            Ok(v) => {
                *out = v;
                IrvStatus::Ok
            }
            Err(e) => fail(IrvStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Topic of an area from `n` consecutive `(pleasure, arousal, dominance)`
/// triples; 0 for an empty area.
///
/// # Safety
/// `pads` must point to `3 * n` doubles (or be null with `n == 0`); `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn irv_compute_topic(pads: *const f64, n: usize, out: *mut f64) -> IrvStatus {
    guard(|| {
        if out.is_null() || (pads.is_null() && n > 0) {
            return fail(IrvStatus::NullPointer, "null pointer argument");
        }
        let values: &[f64] = if n == 0 { &[] } else { std::slice::from_raw_parts(pads, 3 * n) };
        let mut list = Vec::with_capacity(n);
        for c in values.chunks_exact(3) {
            let pad = Pad {
                pleasure: c[0],
                arousal: c[1],
                dominance: c[2],
            };
            if !c.iter().all(|v| v.is_finite() && v.abs() <= 1.0) {
                return fail(IrvStatus::InvalidArgument, "PAD components must lie in [-1, 1]");
            }
            list.push(pad);
        }
        *out = compute_topic(&list);
        IrvStatus::Ok
    })
}

/// Recency weight of the `n`-th of `t` moments; NaN unless `1 <= n < t`.
#[no_mangle]
pub extern "C" fn irv_recency_weight(n: u64, t: u64) -> f64 {
    if n == 0 || n >= t || t > u32::MAX as u64 {
        return f64::NAN;
    }
    recency_weight(n, t)
}

/// Spherical similarity with unit angular weights; angles are normalized.
#[no_mangle]
pub extern "C" fn irv_spherical_similarity(
    theta_a: f64,
    phi_a: f64,
    gamma_a: f64,
    theta_b: f64,
    phi_b: f64,
    gamma_b: f64,
) -> f64 {
    let a = Position::normalized(theta_a, phi_a, gamma_a);
    let b = Position::normalized(theta_b, phi_b, gamma_b);
    spherical_similarity(&a, &b, &BlendConfig::default())
}
