#ifndef PLATOON_H
#define PLATOON_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PlatoonLoopVariant {
  PLATOON_LOOP_VARIANT_PURE_VELOCITY = 0,
  PLATOON_LOOP_VARIANT_COMBINED = 1,
} PlatoonLoopVariant;

typedef enum PlatoonPreset {
  /**
   * Four vehicles with stepped communication delays.
   */
  PLATOON_PRESET_DELAY_STEPS = 0,
  /**
   * One follower, zero delay, headway equal to the vehicle delay.
   */
  PLATOON_PRESET_SINGLE_FOLLOWER = 1,
} PlatoonPreset;

typedef enum PlatoonStatus {
  PLATOON_STATUS_OK = 0,
  PLATOON_STATUS_NULL_POINTER = 1,
  PLATOON_STATUS_INVALID_UTF8 = 2,
  PLATOON_STATUS_INVALID_ARGUMENT = 3,
  PLATOON_STATUS_VALIDATION = 4,
  PLATOON_STATUS_DIVERGENCE = 5,
  PLATOON_STATUS_UNSTABLE = 6,
  PLATOON_STATUS_NOT_SETTLED = 7,
  PLATOON_STATUS_NO_FEASIBLE_GAIN = 8,
  PLATOON_STATUS_IO = 9,
  PLATOON_STATUS_FORMAT = 10,
  PLATOON_STATUS_OUT_OF_RANGE = 11,
  PLATOON_STATUS_PANIC = 12,
} PlatoonStatus;

/**
 * Opaque handle to a finished run.
 */
typedef struct PlatoonRun PlatoonRun;

/**
 * Opaque scenario handle.
 */
typedef struct PlatoonScenario PlatoonScenario;

/**
 * One vehicle in one trace row.
 */
typedef struct PlatoonSample {
  double time;
  double velocity;
  double distance;
  double virtual_distance;
  double beta;
  double overall_delay;
  double tau;
  size_t lookahead_index;
  double weight_l_minus_1;
} PlatoonSample;

typedef struct PlatoonHeadwayEvent {
  double time;
  size_t vehicle;
  double from;
  double to;
} PlatoonHeadwayEvent;

/**
 * Outcome of [`platoon_design_topology`]. `min_required_beta` is set only
 * when `feasible` is false, the weights only when it is true.
 */
typedef struct PlatoonTopology {
  bool feasible;
  size_t lookahead_index;
  double weight_l;
  double weight_l_minus_1;
  double min_required_beta;
} PlatoonTopology;

/**
 * Single follower loop for the linear analyses.
 */
typedef struct PlatoonLoop {
  double time_constant;
  double gain_kv;
  double gain_kp;
  double overall_delay;
  double tau;
  enum PlatoonLoopVariant variant;
} PlatoonLoop;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *platoon_last_error(void);

/**
 * The pinned follower gain `k_p` in 1/s.
 */
double platoon_tuned_kp(void);

/**
 * Parses and validates a scenario document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PlatoonStatus platoon_scenario_from_json(const char *json, struct PlatoonScenario **out);

/**
 * Reads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PlatoonStatus platoon_scenario_load(const char *path, struct PlatoonScenario **out);

/**
 * Builds one of the shipped scenarios.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PlatoonStatus platoon_scenario_preset(enum PlatoonPreset preset, struct PlatoonScenario **out);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void platoon_scenario_free(struct PlatoonScenario *scenario);

/**
 * Number of vehicles including the leader.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PlatoonStatus platoon_scenario_vehicle_count(const struct PlatoonScenario *scenario,
                                                  size_t *out);

/**
 * Simulates a scenario.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum PlatoonStatus platoon_run(const struct PlatoonScenario *scenario, struct PlatoonRun **out);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must come from this library and not be used afterwards.
 */
void platoon_run_free(struct PlatoonRun *run);

/**
 * Number of trace rows.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PlatoonStatus platoon_run_row_count(const struct PlatoonRun *run, size_t *out);

/**
 * Trace entry of `vehicle` in row `row`. Leader gap columns are zero.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PlatoonStatus platoon_run_sample(const struct PlatoonRun *run,
                                      size_t row,
                                      size_t vehicle,
                                      struct PlatoonSample *out);

/**
 * Writes the trace as CSV.
 *
 * # Safety
 * `run` must be a live handle and `path` a NUL-terminated string.
 */
enum PlatoonStatus platoon_run_write_csv(const struct PlatoonRun *run, const char *path);

/**
 * Largest gap between the integrated and the assembled virtual distance.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PlatoonStatus platoon_run_max_identity_residual(const struct PlatoonRun *run, double *out);

/**
 * Number of headway changes during the run.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PlatoonStatus platoon_run_headway_event_count(const struct PlatoonRun *run, size_t *out);

/**
 * Headway change number `index` in time order.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PlatoonStatus platoon_run_headway_event(const struct PlatoonRun *run,
                                             size_t index,
                                             struct PlatoonHeadwayEvent *out);

/**
 * Look-ahead index and weights for `vehicle` given `betas[0..n]` =
 * `β_1..β_vehicle`. `max_lookahead = 0` allows any index.
 *
 * # Safety
 * `betas` must hold `n` values and `out` must be valid.
 */
enum PlatoonStatus platoon_design_topology(size_t vehicle,
                                           double overall_delay,
                                           const double *betas,
                                           size_t n,
                                           size_t max_lookahead,
                                           struct PlatoonTopology *out);

/**
 * Integral of one minus the unit velocity step response.
 *
 * # Safety
 * `out` must be valid.
 */
enum PlatoonStatus platoon_delay_measure(struct PlatoonLoop loop_, double horizon, double *out);

/**
 * Whether the velocity step response never drops by more than `epsilon`.
 *
 * # Safety
 * `out` must be valid.
 */
enum PlatoonStatus platoon_positivity_check(struct PlatoonLoop loop_,
                                            double horizon,
                                            double epsilon,
                                            bool *out);

/**
 * Largest `k_p` positive on every reachable operating point of the grid.
 *
 * # Safety
 * `out` must be valid.
 */
enum PlatoonStatus platoon_tune_kp(double time_constant,
                                   double gain_kv,
                                   double overall_delay_min,
                                   double overall_delay_max,
                                   double tau_max,
                                   double grid_step,
                                   double *out);

/**
 * Writes the uncertain state-space model as JSON.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum PlatoonStatus platoon_export_robust_model(double time_constant,
                                               double gain_kv,
                                               double gain_kp,
                                               double overall_delay_min,
                                               double overall_delay_max,
                                               double tau_max,
                                               const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLATOON_H */
