/* C interface to the gaitlab planar in-hand manipulation laboratory.
 * Generated by cbindgen; do not edit by hand. */

#ifndef GAITLAB_H
#define GAITLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum GlStatus {
  GlStatus_Ok = 0,
  GlStatus_NullArgument = 1,
  GlStatus_InvalidConfig = 2,
  GlStatus_DimensionMismatch = 3,
  GlStatus_IoError = 4,
  GlStatus_RuntimeError = 5,
} GlStatus;

/**
 * Opaque sub-skill controller handle.
 */
typedef struct GlController GlController;

/**
 * Opaque environment handle.
 */
typedef struct GlEnv GlEnv;

/**
 * Opaque policy handle (deterministic, mean-action inference).
 */
typedef struct GlPolicy GlPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message into `buf` (NUL-terminated, truncated to
 * `cap`). Returns the full message length in bytes, excluding the NUL.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (length query).
 */
uintptr_t gl_last_error(char *buf, uintptr_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gl_version(void);

/**
 * Create an environment from an optional TOML config string (the same
 * schema as the CLI config file; null means defaults) and a seed.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be a
 * valid pointer.
 */
enum GlStatus gl_env_new(const char *config_toml, uint64_t seed, struct GlEnv **out);

/**
 * Destroy an environment handle.
 *
 * # Safety
 * `env` must be null or a pointer from `gl_env_new`, not yet freed.
 */
void gl_env_free(struct GlEnv *env);

/**
 * Flattened observation length for this environment.
 *
 * # Safety
 * `env` must be a live handle.
 */
uintptr_t gl_env_obs_len(const struct GlEnv *env);

/**
 * Action dimension (hand degrees of freedom).
 *
 * # Safety
 * `env` must be a live handle.
 */
uintptr_t gl_env_dof(const struct GlEnv *env);

/**
 * Reset the environment; writes the flattened observation.
 *
 * # Safety
 * `env` must be a live handle; `obs_out` must point to `obs_len` doubles.
 */
enum GlStatus gl_env_reset(struct GlEnv *env, double *obs_out, uintptr_t obs_len);

/**
 * Advance one control step.
 *
 * # Safety
 * `env` must be a live handle; `action` must point to `action_len` doubles;
 * `obs_out` to `obs_len` doubles; `reward_out` and `done_out` must be valid.
 */
enum GlStatus gl_env_step(struct GlEnv *env,
                          const double *action,
                          uintptr_t action_len,
                          double *obs_out,
                          uintptr_t obs_len,
                          double *reward_out,
                          bool *done_out);

/**
 * Current object pose as (x, y, theta).
 *
 * # Safety
 * `env` must be a live handle; `pose_out` must point to 3 doubles.
 */
enum GlStatus gl_env_object_pose(const struct GlEnv *env, double *pose_out);

/**
 * Apply a constant external wrench (fx, fy, torque) to subsequent steps.
 *
 * # Safety
 * `env` must be a live handle.
 */
enum GlStatus gl_env_apply_perturbation(struct GlEnv *env, double fx, double fy, double torque);

/**
 * Create a sub-skill controller: 0 = in-grasp manipulation, 1 = contact
 * switching, 2 = finger gaiting. The controller draws its switch targets
 * from its own seeded stream.
 *
 * # Safety
 * `env` must be a live handle; `out` must be valid.
 */
enum GlStatus gl_controller_new(const struct GlEnv *env,
                                uint32_t kind,
                                uint64_t seed,
                                struct GlController **out);

/**
 * The controller's action for the environment's current state.
 *
 * # Safety
 * Both handles must be live; `action_out` must point to `action_len`
 * doubles (= dof).
 */
enum GlStatus gl_controller_action(struct GlController *ctl,
                                   const struct GlEnv *env,
                                   double *action_out,
                                   uintptr_t action_len);

/**
 * Destroy a controller handle.
 *
 * # Safety
 * `ctl` must be null or a pointer from `gl_controller_new`, not yet freed.
 */
void gl_controller_free(struct GlController *ctl);

/**
 * Load a policy from a `.ckpt` checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum GlStatus gl_policy_load(const char *path, struct GlPolicy **out);

/**
 * Observation dimension the policy expects.
 *
 * # Safety
 * `policy` must be a live handle.
 */
uintptr_t gl_policy_obs_len(const struct GlPolicy *policy);

/**
 * Deterministic (mean) action of the policy for an observation.
 *
 * # Safety
 * `policy` must be live; `obs` must point to `obs_len` doubles;
 * `action_out` to `action_len` doubles.
 */
enum GlStatus gl_policy_action(const struct GlPolicy *policy,
                               const double *obs,
                               uintptr_t obs_len,
                               double *action_out,
                               uintptr_t action_len);

/**
 * Destroy a policy handle.
 *
 * # Safety
 * `policy` must be null or a pointer from `gl_policy_load`, not yet freed.
 */
void gl_policy_free(struct GlPolicy *policy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAITLAB_H */
