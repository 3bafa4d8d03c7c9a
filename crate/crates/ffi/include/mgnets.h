#ifndef MGNETS_H
#define MGNETS_H

#include <stddef.h>
#include <stdint.h>

typedef enum MgStatus {
  MG_STATUS_OK = 0,
  MG_STATUS_NULL_POINTER = 1,
  MG_STATUS_INVALID_ARGUMENT = 2,
  MG_STATUS_UNSUPPORTED = 3,
  MG_STATUS_STRUCTURAL = 4,
  // The metric has no value for these inputs (an empty mask).
  MG_STATUS_UNDEFINED = 5,
  MG_STATUS_BUFFER_TOO_SMALL = 6,
  MG_STATUS_INTERNAL = 7,
  MG_STATUS_PANIC = 8,
} MgStatus;

typedef enum MgCycle {
  MG_CYCLE_V = 0,
  MG_CYCLE_W = 1,
  MG_CYCLE_FMG = 2,
} MgCycle;

typedef enum MgFamily {
  MG_FAMILY_UNET = 0,
  MG_FAMILY_FMGNET = 1,
  MG_FAMILY_WNET = 2,
} MgFamily;

typedef enum MgPolicy {
  // Doubling for U-Net, pocket for FMG-Net and W-Net.
  MG_POLICY_DEFAULT = 0,
  MG_POLICY_DOUBLING = 1,
  MG_POLICY_POCKET = 2,
} MgPolicy;

typedef enum MgConvention {
  MG_CONVENTION_TRAINABLE = 0,
  MG_CONVENTION_PUBLISHED = 1,
} MgConvention;

// An architecture graph with skip connections applied.
typedef struct MgArch MgArch;

// Residual history and solution of one Poisson solve.
typedef struct MgHistory MgHistory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *mg_last_error(void);

// Library version as a static NUL-terminated string.
const char *mg_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void mg_string_free(char *s);

// Solves the sine-source Poisson problem on `n^dim` interior points with
// Gauss-Seidel smoothing and writes a new history handle to `out`.
//
// # Safety
// `out` must be valid for writes.
enum MgStatus mg_poisson_solve(uint32_t dim,
                               uint32_t n,
                               enum MgCycle cycle,
                               uint32_t pre_sweeps,
                               uint32_t post_sweeps,
                               double tol,
                               uint32_t max_cycles,
                               struct MgHistory **out);

// Number of history entries, including the initial guess. Zero for null.
//
// # Safety
// `h` must be null or a live history handle.
uintptr_t mg_history_len(const struct MgHistory *h);

// Residual L2 norm and cumulative work units after cycle `i`.
//
// # Safety
// `h` must be a live history handle; `residual` and `work` must be valid
// for writes.
enum MgStatus mg_history_entry(const struct MgHistory *h,
                               uintptr_t i,
                               double *residual,
                               double *work);

// Whether the solve reached its tolerance (1) or stopped at the cycle
// limit (0). Zero for null.
//
// # Safety
// `h` must be null or a live history handle.
int32_t mg_history_converged(const struct MgHistory *h);

// # Safety
// `h` must be null or a history handle that has not been freed.
void mg_history_free(struct MgHistory *h);

// Builds the graph for `family` with `grids` resolution levels.
//
// # Safety
// `out` must be valid for writes.
enum MgStatus mg_arch_new(enum MgFamily family,
                          uint32_t grids,
                          uint32_t dims,
                          uint32_t in_channels,
                          uint32_t out_channels,
                          uint32_t base_features,
                          enum MgPolicy policy,
                          struct MgArch **out);

// Parameter count. Under the published convention batch norm also counts
// its running statistics.
//
// # Safety
// `a` must be a live architecture handle; `count` must be valid for writes.
enum MgStatus mg_arch_param_count(const struct MgArch *a,
                                  enum MgConvention convention,
                                  uint64_t *count);

// Number of nodes in the graph. Zero for null.
//
// # Safety
// `a` must be null or a live architecture handle.
uintptr_t mg_arch_node_count(const struct MgArch *a);

// Copies the visited level sequence into `levels`. `len` receives the full
// length even when `capacity` is too small, so a first call with
// `capacity = 0` sizes the buffer.
//
// # Safety
// `a` must be a live handle, `len` valid for writes, and `levels` valid for
// `capacity` writes (it may be null when `capacity` is 0).
enum MgStatus mg_arch_schedule(const struct MgArch *a,
                               uint32_t *levels,
                               uintptr_t capacity,
                               uintptr_t *len);

// Graphviz rendering of the graph. Release with [`mg_string_free`].
//
// # Safety
// `a` must be a live handle and `out` valid for writes.
enum MgStatus mg_arch_dot(const struct MgArch *a, char **out);

// # Safety
// `a` must be null or an architecture handle that has not been freed.
void mg_arch_free(struct MgArch *a);

// Dice coefficient of two row-major masks (nonzero bytes are foreground).
//
// # Safety
// `shape` must hold `ndim` entries and both masks `prod(shape)` bytes;
// `out` must be valid for writes.
enum MgStatus mg_dice(const uintptr_t *shape,
                      uintptr_t ndim,
                      const uint8_t *pred,
                      const uint8_t *truth,
                      double *out);

// 95th-percentile Hausdorff distance in spacing units. Returns
// `Undefined` when either mask is empty.
//
// # Safety
// As [`mg_dice`], plus `spacing` must hold `ndim` entries.
enum MgStatus mg_hd95(const uintptr_t *shape,
                      uintptr_t ndim,
                      const double *spacing,
                      const uint8_t *pred,
                      const uint8_t *truth,
                      double *out);

// Average symmetric surface distance. Returns `Undefined` when either mask
// is empty.
//
// # Safety
// As [`mg_hd95`].
enum MgStatus mg_asd(const uintptr_t *shape,
                     uintptr_t ndim,
                     const double *spacing,
                     const uint8_t *pred,
                     const uint8_t *truth,
                     double *out);

// Copies the message of the last failure into `buf` (NUL-terminated,
// truncated to fit). Returns the full message length, or 0 when there is
// none.
//
// # Safety
// `buf` must be valid for `capacity` writes or null with `capacity` 0.
uintptr_t mg_last_error_copy(char *buf, uintptr_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MGNETS_H */
