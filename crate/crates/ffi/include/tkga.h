#ifndef TKGA_H
#define TKGA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define TKGA_OK 0

#define TKGA_ERR_NULL_ARGUMENT 1

#define TKGA_ERR_INVALID_UTF8 2

#define TKGA_ERR_PARSE 3

#define TKGA_ERR_RUNTIME 4

#define TKGA_ERR_PANIC 5

typedef struct TkgaGraph TkgaGraph;

typedef struct TkgaResult TkgaResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread; empty string when none.
// The pointer stays valid until the next failing call on the same thread.
const char *tkga_last_error(void);

// Parses a quadruple file (`head\trel\ttail\tbegin\tend` per line).
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
int tkga_graph_parse_file(const char *path, struct TkgaGraph **out);

// Parses quadruple text; `origin` names the input in error messages.
//
// # Safety
// All pointers must be valid; strings NUL-terminated.
int tkga_graph_parse_text(const char *text, const char *origin, struct TkgaGraph **out);

// # Safety
// `graph` must be a live handle from a parse call.
uintptr_t tkga_graph_num_entities(const struct TkgaGraph *graph);

// # Safety
// `graph` must be a live handle from a parse call.
uintptr_t tkga_graph_num_quadruples(const struct TkgaGraph *graph);

// # Safety
// `graph` must come from a parse call and not be freed twice.
void tkga_graph_free(struct TkgaGraph *graph);

// Runs the full alignment pipeline with the deterministic rule-based
// reasoner and hashed name embeddings. `seeds_text` holds
// `src_label\ttgt_label` lines; `config_text` optional flat key=value
// overrides (pass NULL for defaults).
//
// # Safety
// Handles must be live; strings NUL-terminated; `out` a valid pointer.
int tkga_align(const struct TkgaGraph *source,
               const struct TkgaGraph *target,
               const char *seeds_text,
               const char *config_text,
               struct TkgaResult **out);

// # Safety
// `result` must be a live handle from `tkga_align`.
double tkga_result_hits1(const struct TkgaResult *result);

// # Safety
// `result` must be a live handle from `tkga_align`.
double tkga_result_mrr(const struct TkgaResult *result);

// Number of pairs fixed by the reasoner fusion stage.
//
// # Safety
// `result` must be a live handle from `tkga_align`.
uintptr_t tkga_result_fused_pairs(const struct TkgaResult *result);

// Serializes the run as JSON; free the returned string with
// `tkga_string_free`.
//
// # Safety
// `result` must be live and `out` a valid pointer.
int tkga_result_json(const struct TkgaResult *result, char **out);

// # Safety
// `s` must come from `tkga_result_json` and not be freed twice.
void tkga_string_free(char *s);

// # Safety
// `result` must come from `tkga_align` and not be freed twice.
void tkga_result_free(struct TkgaResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TKGA_H */
