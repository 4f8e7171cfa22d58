/* C interface of the supportnet library. Generated; do not edit. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Zero is success; anything else is an error and
// `sn_last_error` carries the detail.
typedef enum SnStatus {
  SN_OK = 0,
  SN_ERR_NULL_ARGUMENT = 1,
  SN_ERR_INVALID = 2,
  SN_ERR_UNSUPPORTED = 3,
  SN_ERR_BUDGET = 4,
  SN_ERR_PARSE = 5,
  SN_ERR_PANIC = 6,
} SnStatus;

// Opaque network handle.
typedef struct SnNetwork SnNetwork;

// Architecture counters of a network (see the library documentation for
// the counting conventions: depth counts activation layers, pooling is
// counted separately).
typedef struct SnStats {
  size_t width;
  size_t depth;
  size_t pool_count;
  size_t param_count;
} SnStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last error on this thread. Never null; empty before the
// first failure. Valid until the next failing `sn_*` call on this thread.
const char *sn_last_error(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be null or a pointer previously returned by an `sn_*` call.
void sn_string_free(char *s);

// Release a network handle.
//
// # Safety
// `net` must be null or a pointer previously returned by an `sn_*` call.
void sn_network_free(struct SnNetwork *net);

// Parse a network from its JSON encoding.
//
// # Safety
// `json` must be a NUL-terminated string, `out` a valid destination.
enum SnStatus sn_network_from_json(const char *json, struct SnNetwork **out);

// Encode a network as JSON. The exact bit patterns of all weights are
// preserved; encoding the same network twice yields identical bytes.
//
// # Safety
// `net` must be a live handle, `out` a valid destination; free the result
// with `sn_string_free`.
enum SnStatus sn_network_to_json(const struct SnNetwork *net, char **out);

// Input dimension of a network, 0 for a null handle.
//
// # Safety
// `net` must be null or a live handle.
size_t sn_network_input_dim(const struct SnNetwork *net);

// Output dimension of a network, 0 for a null handle.
//
// # Safety
// `net` must be null or a live handle.
size_t sn_network_output_dim(const struct SnNetwork *net);

// Architecture counters of a network.
//
// # Safety
// `net` must be a live handle and `out` a valid destination.
enum SnStatus sn_network_stats(const struct SnNetwork *net, struct SnStats *out);

// Evaluate a network. `x` must hold `x_len == input_dim` values; `y` must
// have room for `y_len == output_dim` values. The evaluation is exactly
// the library's: same operation order, same bits.
//
// # Safety
// `net` must be a live handle; `x` and `y` must point to arrays of the
// stated lengths.
enum SnStatus sn_network_eval(const struct SnNetwork *net,
                              const double *x,
                              size_t x_len,
                              double *y,
                              size_t y_len);

// Build the cube mask network: exactly 1.0 on [-n, n]^d, exactly +0.0
// outside [-(n+delta), n+delta]^d, replicated across `out_dim` outputs.
// `d` must be a power of two.
//
// # Safety
// `out` must be a valid destination.
enum SnStatus sn_build_cube_mask(size_t d,
                                 double n,
                                 double delta,
                                 size_t out_dim,
                                 struct SnNetwork **out);

// Solve 2^d((n+delta)^d - n^d) = epsilon for the band margin delta.
//
// # Safety
// `out` must be a valid destination.
enum SnStatus sn_delta_for_epsilon(size_t d, double n, double epsilon, double *out);

// Certified halfwidth of the outer support box [-(n+delta), n+delta]^d,
// rounded so the true sum never exceeds it.
double sn_outer_halfwidth(double n, double delta);

// Support adjustment: build from `net` a network equal to it on [-n, n]^d,
// exactly zero outside a certified box, with L1 gap at most `epsilon` in
// between. `sup_bound` may be null to have the bound sampled. On success
// `*out_net` holds the adjusted network and `*out_cert_json` its
// certificate as JSON.
//
// # Safety
// `net` must be a live handle; `sup_bound` null or valid; `out_net` and
// `out_cert_json` valid destinations.
enum SnStatus sn_adjust_support(const struct SnNetwork *net,
                                double n,
                                double epsilon,
                                const double *sup_bound,
                                struct SnNetwork **out_net,
                                char **out_cert_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
