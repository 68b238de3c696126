#ifndef SAMP_H
#define SAMP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

// Result of every fallible call.
typedef enum SampCode {
  SAMP_CODE_OK = 0,
  // A required pointer argument was null.
  SAMP_CODE_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SAMP_CODE_INVALID_UTF8 = 2,
  // An argument was out of range or inconsistent.
  SAMP_CODE_INVALID_ARGUMENT = 3,
  // Reading or writing a file failed.
  SAMP_CODE_IO = 4,
  // Malformed JSON or a checkpoint that does not parse.
  SAMP_CODE_PARSE = 5,
  // Unknown object or unsupported action.
  SAMP_CODE_UNKNOWN_TARGET = 6,
  // No collision-free path to the goal exists.
  SAMP_CODE_UNREACHABLE = 7,
  // The model or session failed while running.
  SAMP_CODE_RUNTIME = 8,
  // The caller's buffer is too small; the required length was written.
  SAMP_CODE_BUFFER_TOO_SMALL = 9,
  // A Rust panic was caught at the boundary.
  SAMP_CODE_PANIC = 10,
} SampCode;

// Mirrors the session status machine.
typedef enum SampSessionStatus {
  SAMP_SESSION_STATUS_NAVIGATING = 0,
  SAMP_SESSION_STATUS_TRANSITIONING = 1,
  SAMP_SESSION_STATUS_EXECUTING = 2,
  SAMP_SESSION_STATUS_DONE = 3,
  SAMP_SESSION_STATUS_FAILED = 4,
} SampSessionStatus;

// A trained goal network.
typedef struct SampGoalModel SampGoalModel;

// A motion policy: a trained motion network or the scripted walker.
typedef struct SampPolicy SampPolicy;

// A scene of objects on a floor.
typedef struct SampScene SampScene;

// A running interaction session.
typedef struct SampSession SampSession;

// Session start parameters. Obtain defaults from
// [`samp_session_options_default`] and override fields as needed.
typedef struct SampSessionOptions {
  double start_x;
  double start_z;
  // Heading about +y; 0 faces +z.
  double start_yaw;
  bool use_planner;
  double cell_size;
  double inflation;
  size_t max_frames;
} SampSessionOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library from the same thread.
const char *samp_last_error(void);

// Library version as a static NUL-terminated string.
const char *samp_version(void);

// Width of one flattened character state for the given sizes.
size_t samp_state_dim(size_t joints, size_t traj_samples, size_t actions);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a pointer obtained from this library, freed once.
void samp_string_free(char *s);

// The built-in scene: a corridor blocked by a wall with a sofa behind it.
//
// # Safety
// `out` must be a valid pointer to write the handle to.
enum SampCode samp_scene_corridor(struct SampScene **out);

// Parses and validates a scene from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid pointer.
enum SampCode samp_scene_from_json(const char *json, struct SampScene **out);

// Reads and validates a scene JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
enum SampCode samp_scene_load(const char *path, struct SampScene **out);

// Serializes a scene to JSON; release with [`samp_string_free`].
//
// # Safety
// `scene` must be a live handle; `out` a valid pointer.
enum SampCode samp_scene_to_json(const struct SampScene *scene, char **out);

// # Safety
// `scene` must be null or a handle from this library, freed once.
void samp_scene_free(struct SampScene *scene);

// Loads a trained motion network from its checkpoint stem (the path
// without extension, as written by `samp train-motion`).
//
// # Safety
// `stem` must be a NUL-terminated string; `out` a valid pointer.
enum SampCode samp_policy_load(const char *stem, struct SampPolicy **out);

// A scripted walker on the small skeleton: steers at each sub-goal with a
// fixed body pose. Useful for driving sessions without a trained model.
//
// # Safety
// `out` must be a valid pointer.
enum SampCode samp_policy_scripted(struct SampPolicy **out);

// State width the policy consumes and produces, or 0 for a null handle.
//
// # Safety
// `policy` must be null or a live handle.
size_t samp_policy_state_dim(const struct SampPolicy *policy);

// Joint count of the policy's skeleton, or 0 for a null handle.
//
// # Safety
// `policy` must be null or a live handle.
size_t samp_policy_joint_count(const struct SampPolicy *policy);

// # Safety
// `policy` must be null or a handle from this library, freed once.
void samp_policy_free(struct SampPolicy *policy);

// Loads a trained goal network from its checkpoint stem.
//
// # Safety
// `stem` must be a NUL-terminated string; `out` a valid pointer.
enum SampCode samp_goal_model_load(const char *stem, struct SampGoalModel **out);

// # Safety
// `model` must be null or a handle from this library, freed once.
void samp_goal_model_free(struct SampGoalModel *model);

// Defaults: start in front of the corridor facing +z, planner on.
struct SampSessionOptions samp_session_options_default(void);

// Starts a session that walks to `object_id` and performs `action`
// (`"sit"` or `"liedown"`). Goals come from `goals` when given, otherwise
// from the object's labeled goals. `options` may be null for defaults.
//
// # Safety
// `scene` and `policy` must be live handles, `goals` null or live, strings
// NUL-terminated, `options` null or valid, `out` a valid pointer.
enum SampCode samp_session_start(const struct SampScene *scene,
                                 const struct SampPolicy *policy,
                                 const struct SampGoalModel *goals,
                                 const char *object_id,
                                 const char *action,
                                 uint64_t seed,
                                 const struct SampSessionOptions *options,
                                 struct SampSession **out);

// Advances one frame. `status` (optional) receives the status afterwards.
// Stepping a finished session fails with [`SampCode::InvalidArgument`].
//
// # Safety
// `session` must be a live handle; `status` null or valid.
enum SampCode samp_session_step(struct SampSession *session, enum SampSessionStatus *status);

// Current status; a null handle reads as failed.
//
// # Safety
// `session` must be null or a live handle.
enum SampSessionStatus samp_session_status(const struct SampSession *session);

// Frames produced so far.
//
// # Safety
// `session` must be null or a live handle.
size_t samp_session_frame(const struct SampSession *session);

// Seconds from start until the action began; infinity if it never did.
// A null handle reads as NaN.
//
// # Safety
// `session` must be null or a live handle.
double samp_session_execution_time(const struct SampSession *session);

// Writes world joint positions as `x, y, z` triples. `len` is the buffer
// length in doubles; `written` (optional) receives the number required.
//
// # Safety
// `session` must be a live handle, `out` valid for `len` doubles (or null
// with `len == 0` to query the size), `written` null or valid.
enum SampCode samp_session_joints(const struct SampSession *session,
                                  double *out,
                                  size_t len,
                                  size_t *written);

// The last produced frame as JSON (the same object the TCP service
// streams); release with [`samp_string_free`]. Fails before the first step.
//
// # Safety
// `session` must be a live handle; `out` a valid pointer.
enum SampCode samp_session_frame_json(const struct SampSession *session, char **out);

// Redraws the motion style from `seed`; with `resample_goal` also draws a
// new goal and replans.
//
// # Safety
// `session` must be a live handle.
enum SampCode samp_session_resample(struct SampSession *session, uint64_t seed, bool resample_goal);

// # Safety
// `session` must be null or a handle from this library, freed once.
void samp_session_free(struct SampSession *session);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAMP_H */
