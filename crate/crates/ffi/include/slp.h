#ifndef SLP_H
#define SLP_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SlpStatus {
  SLP_STATUS_OK = 0,
  SLP_STATUS_INVALID_ARGUMENT = 1,
  SLP_STATUS_DIMENSION_MISMATCH = 2,
  SLP_STATUS_INVALID_CONSTELLATION = 3,
  SLP_STATUS_RANK_DEFICIENT = 4,
  SLP_STATUS_FORMAT = 5,
  SLP_STATUS_NON_FINITE = 6,
  SLP_STATUS_IO = 7,
  SLP_STATUS_NULL_POINTER = 8,
  SLP_STATUS_PANIC = 9,
} SlpStatus;

// A channel corpus.
typedef struct SlpDataset SlpDataset;

// A network ready for inference.
typedef struct SlpNetwork SlpNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *slp_version(void);

// Message of the last failed call on this thread, or an empty string.
// Valid until the next call into the library on the same thread.
const char *slp_last_error(void);

// Number of reduced precoders `M^(K-1)` for `order`-PSK and `users` users.
enum SlpStatus slp_reduced_count(uint32_t order, uint32_t users, size_t *out);

// `count` Rayleigh channels with `CN(0, 1)` entries.
enum SlpStatus slp_dataset_generate(uint32_t users,
                                    uint32_t antennas,
                                    uint64_t count,
                                    uint64_t seed,
                                    struct SlpDataset **out);

// Reads an SLPD file.
enum SlpStatus slp_dataset_load(const char *file, struct SlpDataset **out);

enum SlpStatus slp_dataset_save(const struct SlpDataset *dataset, const char *file);

// Dimensions and size of a dataset; any output pointer may be null.
enum SlpStatus slp_dataset_info(const struct SlpDataset *dataset,
                                uint32_t *users,
                                uint32_t *antennas,
                                uint64_t *count);

// Copies channel `index` into `h_out`, which holds `capacity` complex
// entries (at least `K·N_t`).
enum SlpStatus slp_dataset_channel(const struct SlpDataset *dataset,
                                   uint64_t index,
                                   double *h_out,
                                   size_t capacity);

void slp_dataset_free(struct SlpDataset *dataset);

// Max-min precoder for one channel. `x_out` holds `capacity` complex
// entries (at least `N_t·M^(K-1)`); `t_out` receives the worst-case margin
// and may be null.
enum SlpStatus slp_solve(const double *h,
                         uint32_t users,
                         uint32_t antennas,
                         uint32_t order,
                         double power_budget,
                         double *x_out,
                         size_t capacity,
                         double *t_out);

// Worst-case margin of a reduced precoding matrix with `columns` columns.
enum SlpStatus slp_qos(const double *h,
                       uint32_t users,
                       uint32_t antennas,
                       uint32_t order,
                       const double *x,
                       size_t columns,
                       double *min_out);

// Hard-decision PSK detection of one received sample.
enum SlpStatus slp_detect(uint32_t order, double re, double im, uint32_t *symbol_out);

// Loads an SLPW checkpoint for inference.
enum SlpStatus slp_network_load(const char *file, struct SlpNetwork **out);

// `K`, `N_t` and PSK order a network was built for; any output may be null.
enum SlpStatus slp_network_info(const struct SlpNetwork *network,
                                uint32_t *users,
                                uint32_t *antennas,
                                uint32_t *order);

// Power-scaled reduced precoding matrix predicted for one channel.
enum SlpStatus slp_network_infer(const struct SlpNetwork *network,
                                 const double *h,
                                 uint32_t users,
                                 uint32_t antennas,
                                 double *x_out,
                                 size_t capacity);

void slp_network_free(struct SlpNetwork *network);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLP_H */
