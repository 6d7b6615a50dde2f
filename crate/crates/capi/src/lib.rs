//! C ABI over the manipulation environment, the sub-skill controllers, and
//! trained policy checkpoints. Handles are opaque pointers created and
//! destroyed here; every call reports a status code and leaves a readable
//! message for `gl_last_error` on failure.
//!
//! All functions are thread-compatible but not thread-safe on a single
//! handle: a handle must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use gaitlab::checkpoint::load_checkpoint;
use gaitlab::config::RunConfig;
use gaitlab::controllers::{CsConfig, IgmConfig};
use gaitlab::env::{Env, Observation};
use gaitlab::nn::Mlp;
use gaitlab::rl::ControllerKind;
use gaitlab::rng::{derive_seed, Rng};
use gaitlab::trainer::ControllerRuntime;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidConfig = 2,
    DimensionMismatch = 3,
    IoError = 4,
    RuntimeError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: impl AsRef<str>) {
    let sanitized: String = msg.as_ref().chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn fail(status: GlStatus, msg: impl AsRef<str>) -> GlStatus {
    set_error(msg);
    status
}

/// Opaque environment handle.
pub struct GlEnv {
    env: Env,
    cfg: RunConfig,
}

/// Opaque policy handle (deterministic, mean-action inference).
pub struct GlPolicy {
    policy: Mlp,
    action_scale: f64,
    obs_dim: usize,
    act_dim: usize,
}

/// Opaque sub-skill controller handle.
pub struct GlController {
    runtime: ControllerRuntime,
    rng: Rng,
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to
/// `cap`). Returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (length query).
#[no_mangle]
pub unsafe extern "C" fn gl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // Always terminate.
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Create an environment from an optional TOML config string (the same
/// schema as the CLI config file; null means defaults) and a seed.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gl_env_new(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut GlEnv,
) -> GlStatus {
    if out.is_null() {
        return fail(GlStatus::NullArgument, "out pointer is null");
    }
    let cfg = if config_toml.is_null() {
        match RunConfig::load(None, &[]) {
            Ok(c) => c,
            Err(e) => return fail(GlStatus::InvalidConfig, e.to_string()),
        }
    } else {
        let text = match CStr::from_ptr(config_toml).to_str() {
            Ok(t) => t,
            Err(e) => return fail(GlStatus::InvalidConfig, format!("config not UTF-8: {e}")),
        };
        match RunConfig::load_from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(GlStatus::InvalidConfig, e.to_string()),
        }
    };
    match Env::new(cfg.hand.clone(), cfg.env.clone(), seed) {
        Ok(env) => {
            *out = Box::into_raw(Box::new(GlEnv { env, cfg }));
            GlStatus::Ok
        }
        Err(e) => fail(GlStatus::InvalidConfig, e.to_string()),
    }
}

/// Destroy an environment handle.
///
/// # Safety
/// `env` must be null or a pointer from `gl_env_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gl_env_free(env: *mut GlEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Flattened observation length for this environment.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gl_env_obs_len(env: *const GlEnv) -> usize {
    if env.is_null() {
        return 0;
    }
    Observation::flat_len((*env).env.model())
}

/// Action dimension (hand degrees of freedom).
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gl_env_dof(env: *const GlEnv) -> usize {
    if env.is_null() {
        return 0;
    }
    (*env).env.model().dof()
}

unsafe fn write_obs(obs: &Observation, out: *mut f64, len: usize) -> Result<(), GlStatus> {
    let flat = obs.flatten();
    if len != flat.len() {
        set_error(format!(
            "observation buffer holds {len} values, need {}",
            flat.len()
        ));
        return Err(GlStatus::DimensionMismatch);
    }
    ptr::copy_nonoverlapping(flat.as_ptr(), out, flat.len());
    Ok(())
}

/// Reset the environment; writes the flattened observation.
///
/// # Safety
/// `env` must be a live handle; `obs_out` must point to `obs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gl_env_reset(
    env: *mut GlEnv,
    obs_out: *mut f64,
    obs_len: usize,
) -> GlStatus {
    if env.is_null() || obs_out.is_null() {
        return fail(GlStatus::NullArgument, "null env or buffer");
    }
    match (*env).env.reset() {
        Ok(obs) => match write_obs(&obs, obs_out, obs_len) {
            Ok(()) => GlStatus::Ok,
            Err(s) => s,
        },
        Err(e) => fail(GlStatus::RuntimeError, e.to_string()),
    }
}

/// Advance one control step.
///
/// # Safety
/// `env` must be a live handle; `action` must point to `action_len` doubles;
/// `obs_out` to `obs_len` doubles; `reward_out` and `done_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_env_step(
    env: *mut GlEnv,
    action: *const f64,
    action_len: usize,
    obs_out: *mut f64,
    obs_len: usize,
    reward_out: *mut f64,
    done_out: *mut bool,
) -> GlStatus {
    if env.is_null() || action.is_null() || obs_out.is_null() || reward_out.is_null() || done_out.is_null()
    {
        return fail(GlStatus::NullArgument, "null argument");
    }
    let action = std::slice::from_raw_parts(action, action_len);
    match (*env).env.step(action) {
        Ok(result) => {
            if let Err(s) = write_obs(&result.observation, obs_out, obs_len) {
                return s;
            }
            *reward_out = result.reward;
            *done_out = result.done;
            GlStatus::Ok
        }
        Err(e) => fail(GlStatus::RuntimeError, e.to_string()),
    }
}

/// Current object pose as (x, y, theta).
///
/// # Safety
/// `env` must be a live handle; `pose_out` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn gl_env_object_pose(env: *const GlEnv, pose_out: *mut f64) -> GlStatus {
    if env.is_null() || pose_out.is_null() {
        return fail(GlStatus::NullArgument, "null argument");
    }
    let p = (*env).env.object().pose;
    *pose_out = p.x;
    *pose_out.add(1) = p.y;
    *pose_out.add(2) = p.theta;
    GlStatus::Ok
}

/// Apply a constant external wrench (fx, fy, torque) to subsequent steps.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gl_env_apply_perturbation(
    env: *mut GlEnv,
    fx: f64,
    fy: f64,
    torque: f64,
) -> GlStatus {
    if env.is_null() {
        return fail(GlStatus::NullArgument, "null env");
    }
    (*env).env.apply_perturbation([fx, fy, torque]);
    GlStatus::Ok
}

/// Create a sub-skill controller: 0 = in-grasp manipulation, 1 = contact
/// switching, 2 = finger gaiting. The controller draws its switch targets
/// from its own seeded stream.
///
/// # Safety
/// `env` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_controller_new(
    env: *const GlEnv,
    kind: u32,
    seed: u64,
    out: *mut *mut GlController,
) -> GlStatus {
    if env.is_null() || out.is_null() {
        return fail(GlStatus::NullArgument, "null argument");
    }
    let kind = match kind {
        0 => ControllerKind::Igm,
        1 => ControllerKind::Cs,
        2 => ControllerKind::Fg,
        other => {
            return fail(
                GlStatus::InvalidConfig,
                format!("unknown controller kind {other} (0=IGM, 1=CS, 2=FG)"),
            )
        }
    };
    let cfg = &(*env).cfg;
    let igm: IgmConfig = cfg.controller.igm();
    let cs: CsConfig = cfg.controller.cs(cfg.env.dt);
    let runtime = ControllerRuntime::new(kind, igm, cs);
    *out = Box::into_raw(Box::new(GlController {
        runtime,
        rng: Rng::new(derive_seed(seed, 0xC0FFEE)),
    }));
    GlStatus::Ok
}

/// The controller's action for the environment's current state.
///
/// # Safety
/// Both handles must be live; `action_out` must point to `action_len`
/// doubles (= dof).
#[no_mangle]
pub unsafe extern "C" fn gl_controller_action(
    ctl: *mut GlController,
    env: *const GlEnv,
    action_out: *mut f64,
    action_len: usize,
) -> GlStatus {
    if ctl.is_null() || env.is_null() || action_out.is_null() {
        return fail(GlStatus::NullArgument, "null argument");
    }
    let dof = (*env).env.model().dof();
    if action_len != dof {
        return fail(
            GlStatus::DimensionMismatch,
            format!("action buffer holds {action_len}, need {dof}"),
        );
    }
    let controller = &mut *ctl;
    let action = controller.runtime.action(&(*env).env, &mut controller.rng);
    ptr::copy_nonoverlapping(action.as_ptr(), action_out, dof);
    GlStatus::Ok
}

/// Destroy a controller handle.
///
/// # Safety
/// `ctl` must be null or a pointer from `gl_controller_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gl_controller_free(ctl: *mut GlController) {
    if !ctl.is_null() {
        drop(Box::from_raw(ctl));
    }
}

/// Load a policy from a `.ckpt` checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_policy_load(path: *const c_char, out: *mut *mut GlPolicy) -> GlStatus {
    if path.is_null() || out.is_null() {
        return fail(GlStatus::NullArgument, "null argument");
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(p) => p,
        Err(e) => return fail(GlStatus::IoError, format!("path not UTF-8: {e}")),
    };
    match load_checkpoint(Path::new(path), gaitlab::rl::RlConfig::default()) {
        Ok((state, _step)) => {
            *out = Box::into_raw(Box::new(GlPolicy {
                obs_dim: state.obs_dim,
                act_dim: state.act_dim,
                action_scale: state.action_scale,
                policy: state.policy,
            }));
            GlStatus::Ok
        }
        Err(e) => fail(GlStatus::IoError, e.to_string()),
    }
}

/// Observation dimension the policy expects.
///
/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gl_policy_obs_len(policy: *const GlPolicy) -> usize {
    if policy.is_null() {
        0
    } else {
        (*policy).obs_dim
    }
}

/// Deterministic (mean) action of the policy for an observation.
///
/// # Safety
/// `policy` must be live; `obs` must point to `obs_len` doubles;
/// `action_out` to `action_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gl_policy_action(
    policy: *const GlPolicy,
    obs: *const f64,
    obs_len: usize,
    action_out: *mut f64,
    action_len: usize,
) -> GlStatus {
    if policy.is_null() || obs.is_null() || action_out.is_null() {
        return fail(GlStatus::NullArgument, "null argument");
    }
    let p = &*policy;
    if obs_len != p.obs_dim {
        return fail(
            GlStatus::DimensionMismatch,
            format!("observation holds {obs_len}, policy expects {}", p.obs_dim),
        );
    }
    if action_len != p.act_dim {
        return fail(
            GlStatus::DimensionMismatch,
            format!("action buffer holds {action_len}, policy yields {}", p.act_dim),
        );
    }
    let obs = std::slice::from_raw_parts(obs, obs_len);
    match gaitlab::nn::mean_action(&p.policy, obs, p.action_scale) {
        Ok(a) => {
            ptr::copy_nonoverlapping(a.as_ptr(), action_out, action_len);
            GlStatus::Ok
        }
        Err(e) => fail(GlStatus::RuntimeError, e.to_string()),
    }
}

/// Destroy a policy handle.
///
/// # Safety
/// `policy` must be null or a pointer from `gl_policy_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gl_policy_free(policy: *mut GlPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}
