#ifndef LOOPNEST_H
#define LOOPNEST_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LoopnestStatus {
  LOOPNEST_STATUS_OK = 0,
  LOOPNEST_STATUS_NULL_POINTER = 1,
  LOOPNEST_STATUS_INVALID_ARGUMENT = 2,
  LOOPNEST_STATUS_OUT_OF_RANGE = 3,
  LOOPNEST_STATUS_CONFIG = 4,
  LOOPNEST_STATUS_IO = 5,
  LOOPNEST_STATUS_PANIC = 6,
} LoopnestStatus;

typedef enum LoopnestScheme {
  LOOPNEST_SCHEME_LEX = 0,
  LOOPNEST_SCHEME_REV_LEX = 1,
  LOOPNEST_SCHEME_HAMILTONIAN = 2,
} LoopnestScheme;

/**
 * Opaque cache hierarchy.
 */
typedef struct LoopnestConfig LoopnestConfig;

/**
 * Opaque simulation result.
 */
typedef struct LoopnestStats LoopnestStats;

/**
 * Extents of a convolution layer.
 */
typedef struct LoopnestLayer {
  uint32_t out_channels;
  uint32_t in_channels;
  uint32_t img_w;
  uint32_t img_h;
  uint32_t ker_w;
  uint32_t ker_h;
} LoopnestLayer;

/**
 * Run parameters. An `instr_limit` of 0 means no limit.
 */
typedef struct LoopnestRun {
  uint32_t perm_lex;
  uint32_t threads;
  uint64_t instr_limit;
  bool partial_sums;
} LoopnestRun;

/**
 * Headline numbers of a simulation.
 */
typedef struct LoopnestSummary {
  /**
   * Cycles of the slowest thread.
   */
  uint64_t cycles;
  uint64_t total_cycles;
  uint64_t refs;
  uint64_t ticks;
  uint64_t memory_accesses;
  uint32_t levels;
} LoopnestSummary;

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on this thread.
 */
const char *loopnest_last_error(void);

/**
 * Builds a preset hierarchy (`loki`, `small`, `medium`, `large`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LoopnestStatus loopnest_config_preset(const char *name,
                                           uint64_t seed,
                                           struct LoopnestConfig **out);

/**
 * Builds a hierarchy from its JSON description.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LoopnestStatus loopnest_config_from_json(const char *json, struct LoopnestConfig **out);

/**
 * # Safety
 * `config` must come from a `loopnest_config_*` constructor and not be
 * freed twice. Null is ignored.
 */
void loopnest_config_free(struct LoopnestConfig *config);

/**
 * Simulates one loop order of a layer.
 *
 * # Safety
 * `layer`, `run` and `config` must be valid pointers; `out` must be a
 * valid pointer that receives a handle to free with
 * [`loopnest_stats_free`].
 */
enum LoopnestStatus loopnest_simulate(const struct LoopnestLayer *layer,
                                      const struct LoopnestRun *run,
                                      const struct LoopnestConfig *config,
                                      struct LoopnestStats **out);

/**
 * # Safety
 * `stats` and `out` must be valid pointers.
 */
enum LoopnestStatus loopnest_stats_summary(const struct LoopnestStats *stats,
                                           struct LoopnestSummary *out);

/**
 * Hits and misses of one level, 0 being closest to the core.
 *
 * # Safety
 * `stats`, `hits` and `misses` must be valid pointers.
 */
enum LoopnestStatus loopnest_stats_level(const struct LoopnestStats *stats,
                                         uint32_t level,
                                         uint64_t *hits,
                                         uint64_t *misses);

/**
 * # Safety
 * `stats` must come from [`loopnest_simulate`] and not be freed twice.
 * Null is ignored.
 */
void loopnest_stats_free(struct LoopnestStats *stats);

/**
 * Converts a loop-order index between schemes.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LoopnestStatus loopnest_perm_convert(uint32_t value,
                                          enum LoopnestScheme from,
                                          enum LoopnestScheme to,
                                          uint32_t *out);

/**
 * Loop order of a lexicographic index as text, outermost first. Free the
 * result with [`loopnest_string_free`].
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LoopnestStatus loopnest_perm_name(uint32_t perm_lex, char **out);

/**
 * C source for one loop order. Free the result with
 * [`loopnest_string_free`].
 *
 * # Safety
 * `layer` and `out` must be valid pointers.
 */
enum LoopnestStatus loopnest_emit_c(const struct LoopnestLayer *layer,
                                    uint32_t perm_lex,
                                    uint32_t threads,
                                    bool validation,
                                    char **out);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. Null is ignored.
 */
void loopnest_string_free(char *s);

/**
 * Null-terminated; static storage.
 */
const char *loopnest_version(void);

#endif  /* LOOPNEST_H */
