#ifndef APSM_H
#define APSM_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ApsmCombinationRule {
  APSM_COMBINATION_RULE_METROPOLIS = 0,
  APSM_COMBINATION_RULE_UNIFORM = 1,
} ApsmCombinationRule;

typedef enum ApsmStatus {
  APSM_STATUS_OK = 0,
  APSM_STATUS_NULL_POINTER = 1,
  APSM_STATUS_INVALID_INPUT = 2,
  APSM_STATUS_DIMENSION_MISMATCH = 3,
  APSM_STATUS_INFEASIBLE_SLAB = 4,
  APSM_STATUS_CONFIG = 5,
  APSM_STATUS_IO = 6,
  APSM_STATUS_PANIC = 7,
} ApsmStatus;

/**
 * Diffusion learner over a fixed topology.
 */
typedef struct ApsmNetwork ApsmNetwork;

/**
 * Undirected connected graph.
 */
typedef struct ApsmTopology ApsmTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *apsm_last_error_message(void);

/**
 * Euclidean projection of `h[m]` onto `{x : sum w_i |x_i| <= rho}`.
 *
 * # Safety
 * `h`, `w` and `out` must each hold `m` values. `out` may alias `h`.
 */
enum ApsmStatus apsm_l1ball_project(const double *h,
                                    const double *w,
                                    size_t m,
                                    double rho,
                                    double *out);

/**
 * Projection onto the weighted ℓ1 ball in the metric with inverse diagonal
 * `g_inv[m]`.
 *
 * # Safety
 * All pointers must hold `m` values. `out` may alias `h`.
 */
enum ApsmStatus apsm_l1ball_project_vm(const double *h,
                                       const double *w,
                                       const double *g_inv,
                                       size_t m,
                                       double rho,
                                       double *out);

/**
 * Projection of `h` onto `{x : |d - u^T x| <= eps}`. A null `g_inv` selects
 * the Euclidean metric.
 *
 * # Safety
 * `h`, `u`, `out` and a non-null `g_inv` must hold `m` values.
 */
enum ApsmStatus apsm_hyperslab_project(const double *h,
                                       const double *u,
                                       size_t m,
                                       double d,
                                       double eps,
                                       const double *g_inv,
                                       double *out);

/**
 * Inverse metric diagonal built from the estimate `h[m]`.
 *
 * # Safety
 * `h` and `g_inv_out` must hold `m` values.
 */
enum ApsmStatus apsm_metric_update(const double *h, size_t m, double alpha, double *g_inv_out);

/**
 * Ball weights `1 / (|h_i| + eps_tilde)`.
 *
 * # Safety
 * `h` and `w_out` must hold `m` values.
 */
enum ApsmStatus apsm_weights_update(const double *h, size_t m, double eps_tilde, double *w_out);

/**
 * Builds a topology from `n_edges` zero-based pairs stored as
 * `edges[2 * i], edges[2 * i + 1]`.
 *
 * # Safety
 * `edges` must hold `2 * n_edges` values; `out` must be writable.
 */
enum ApsmStatus apsm_topology_new(size_t nodes,
                                  const size_t *edges,
                                  size_t n_edges,
                                  struct ApsmTopology **out);

/**
 * Parses the edge-list text format: node count, then one-based pairs.
 *
 * # Safety
 * `text` must be nul-terminated; `out` must be writable.
 */
enum ApsmStatus apsm_topology_parse(const char *edge_list, struct ApsmTopology **out);

/**
 * # Safety
 * `topology` must be null or come from `apsm_topology_new`/`_parse`.
 */
void apsm_topology_free(struct ApsmTopology *topology);

/**
 * Creates a learner with every node at zero.
 *
 * `learner_json` holds `{"eps": number | [K], "rho": number}` plus the
 * optional `"arm"` (default `"proposed"`), `"noise_variances"` `[K]` and
 * `"learner"` settings object.
 *
 * # Safety
 * `topology` must be a live handle, `learner_json` nul-terminated and `out`
 * writable.
 */
enum ApsmStatus apsm_network_new(const struct ApsmTopology *topology,
                                 enum ApsmCombinationRule rule,
                                 size_t m,
                                 const char *learner_json,
                                 struct ApsmNetwork **out);

/**
 * One combine-adapt iteration with observations `d[K]` and row-major
 * regressors `u[K * m]`.
 *
 * # Safety
 * `network` must be a live handle; `d` and `u` must hold the stated counts.
 */
enum ApsmStatus apsm_network_step(struct ApsmNetwork *network,
                                  const double *d,
                                  const double *u,
                                  size_t nodes,
                                  size_t m);

/**
 * Copies the stacked estimates into `out[len]`, where `len` must be `K * m`.
 *
 * # Safety
 * `network` must be a live handle and `out` must hold `len` values.
 */
enum ApsmStatus apsm_network_estimates(const struct ApsmNetwork *network, double *out, size_t len);

/**
 * Mean square deviation of the node estimates from `h_star[m]`.
 *
 * # Safety
 * `network` must be a live handle, `h_star` must hold `m` values and `out`
 * must be writable.
 */
enum ApsmStatus apsm_network_msd(const struct ApsmNetwork *network,
                                 const double *h_star,
                                 size_t m,
                                 double *out);

/**
 * Squared distance of the stacked estimate from its consensus projection.
 *
 * # Safety
 * `network` must be a live handle and `out` writable.
 */
enum ApsmStatus apsm_network_consensus_distance(const struct ApsmNetwork *network, double *out);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `network` must be null or a live handle.
 */
size_t apsm_network_nodes(const struct ApsmNetwork *network);

/**
 * # Safety
 * `network` must be null or come from `apsm_network_new`.
 */
void apsm_network_free(struct ApsmNetwork *network);

/**
 * Runs an experiment from a JSON config and writes its files into `out_dir`.
 *
 * # Safety
 * Both arguments must be nul-terminated strings.
 */
enum ApsmStatus apsm_run_experiment(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APSM_H */
