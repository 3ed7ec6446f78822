#ifndef GRIDLET_H
#define GRIDLET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Mapping heuristic selector for [`gridlet_schedule`].
typedef enum GridletHeuristic {
  GRIDLET_HEURISTIC_MCT = 0,
  GRIDLET_HEURISTIC_MIN_MIN = 1,
  GRIDLET_HEURISTIC_SUFFERAGE = 2,
  GRIDLET_HEURISTIC_SEGMENTED_MIN_MIN = 3,
  GRIDLET_HEURISTIC_SEGMENTED_SYMPATHY = 4,
  GRIDLET_HEURISTIC_GENETIC = 5,
} GridletHeuristic;

// Result codes shared by every fallible call.
typedef enum GridletStatus {
  GRIDLET_STATUS_OK = 0,
  GRIDLET_STATUS_NULL_ARGUMENT = 1,
  GRIDLET_STATUS_INVALID_ARGUMENT = 2,
  GRIDLET_STATUS_DIMENSION_MISMATCH = 3,
  GRIDLET_STATUS_PARSE_ERROR = 4,
  GRIDLET_STATUS_IO_ERROR = 5,
  GRIDLET_STATUS_PANIC = 6,
} GridletStatus;

// Opaque expected-time-to-compute matrix.
typedef struct GridletEtc GridletEtc;

// Opaque parsed problem. Task ids are kept as C strings so pointers handed
// out stay valid until the problem is freed.
typedef struct GridletProblem GridletProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len - 1` bytes). Returns the full message length
// without the terminator, or 0 when no error has been recorded.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t gridlet_last_error_message(char *buf, size_t len);

// Static, NUL-terminated library version.
const char *gridlet_version(void);

// Builds a matrix from `tasks * machines` row-major entries.
//
// # Safety
// `data` must point to `tasks * machines` doubles and `out` must be writable.
enum GridletStatus gridlet_etc_new(size_t tasks,
                                   size_t machines,
                                   const double *data,
                                   struct GridletEtc **out);

// Draws a random matrix of a named heterogeneity class such as `"u_c_hihi"`.
//
// # Safety
// `class_name` must be a NUL-terminated string and `out` must be writable.
enum GridletStatus gridlet_etc_generate(size_t tasks,
                                        size_t machines,
                                        const char *class_name,
                                        uint64_t seed,
                                        struct GridletEtc **out);

// # Safety
// `etc` must be null or a live handle from this library.
void gridlet_etc_free(struct GridletEtc *etc);

// # Safety
// `etc` must be null or a live handle.
size_t gridlet_etc_tasks(const struct GridletEtc *etc);

// # Safety
// `etc` must be null or a live handle.
size_t gridlet_etc_machines(const struct GridletEtc *etc);

// Maps every task to a machine. `ready` may be null for all-zero ready
// times; otherwise it holds one entry per machine. `mapping_out` receives
// one machine index per task. `makespan_out` may be null.
//
// # Safety
// Pointers must be valid for the sizes implied by the matrix dimensions.
enum GridletStatus gridlet_schedule(const struct GridletEtc *etc,
                                    const double *ready,
                                    enum GridletHeuristic heuristic,
                                    size_t n_segments,
                                    uint64_t ga_seed,
                                    size_t *mapping_out,
                                    double *makespan_out);

// Makespan of an explicit mapping.
//
// # Safety
// `mapping` must hold one entry per task; `ready` is null or one per machine.
enum GridletStatus gridlet_makespan(const struct GridletEtc *etc,
                                    const double *ready,
                                    const size_t *mapping,
                                    double *out);

// Per-task sympathy into `out`, one entry per task.
//
// # Safety
// `out` must hold one entry per task; `ready` is null or one per machine.
enum GridletStatus gridlet_sympathy(const struct GridletEtc *etc, const double *ready, double *out);

// Parses and validates a PSS document. Referenced files are resolved
// relative to the document's directory.
//
// # Safety
// `path` must be a NUL-terminated string and `out` must be writable.
enum GridletStatus gridlet_problem_load(const char *path, struct GridletProblem **out);

// # Safety
// `problem` must be null or a live handle from this library.
void gridlet_problem_free(struct GridletProblem *problem);

// Problem name, owned by the handle. Null for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
const char *gridlet_problem_name(const struct GridletProblem *problem);

// # Safety
// `problem` must be null or a live handle.
size_t gridlet_problem_task_count(const struct GridletProblem *problem);

// Id of task `index`, owned by the handle. Null when out of range.
//
// # Safety
// `problem` must be null or a live handle.
const char *gridlet_problem_task_id(const struct GridletProblem *problem, size_t index);

// Returns 1 when task `i` depends on task `j`, 0 otherwise or when out of range.
//
// # Safety
// `problem` must be null or a live handle.
int32_t gridlet_problem_depends(const struct GridletProblem *problem, size_t i, size_t j);

// Writes task indices in dependency order, lower priority values first
// among eligible tasks.
//
// # Safety
// `out` must hold one entry per task.
enum GridletStatus gridlet_problem_topo_order(const struct GridletProblem *problem, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDLET_H */
