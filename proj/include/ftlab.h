/* C interface to the fine-tuning lab. All functionality is reached through
 * an opaque session handle; functions return ftl_status and the session
 * keeps the last error message. The library is not thread-safe per session;
 * use one session per thread. */

#ifndef FTLAB_H
#define FTLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ftl_status {
    FTL_OK = 0,
    FTL_ERR_INVALID_ARGUMENT = 1,
    FTL_ERR_PARSE = 2,
    FTL_ERR_IO = 3,
    FTL_ERR_RUNTIME = 4,
    FTL_ERR_VERIFY_FAILED = 5
} ftl_status;

typedef struct ftl_session ftl_session;

const char* ftl_version(void);

ftl_session* ftl_session_create(void);
void ftl_session_destroy(ftl_session* session);

/* Message describing the most recent failure on this session; valid until
 * the next call on the same session. Never NULL. */
const char* ftl_session_error(const ftl_session* session);

/* Parses and validates an experiment config file (JSON). */
ftl_status ftl_load_config(ftl_session* session, const char* path);

/* Overrides applied on top of the loaded config. */
ftl_status ftl_set_output_dir(ftl_session* session, const char* dir);
ftl_status ftl_set_seeds(ftl_session* session, const uint64_t* seeds, size_t count);
ftl_status ftl_set_jobs(ftl_session* session, int jobs);

/* Trains the source model from scratch and writes the checkpoint into the
 * output directory. Requires a loaded config. */
ftl_status ftl_run_pretrain(ftl_session* session);

/* Runs the configured fine-tuning procedure once per seed; each run writes
 * its own directory under the output directory. */
ftl_status ftl_run_finetune(ftl_session* session);

/* Aggregates previously written run directories into CSV summaries and an
 * SVG chart under the output directory. Reads only CSV/metadata files. */
ftl_status ftl_run_report(ftl_session* session, const char* const* run_dirs, size_t count);

/* Runs the whole property suite. Each property prints one line through
 * `print` when it is non-NULL. *failures receives the failing count. */
typedef void (*ftl_print_fn)(const char* line, void* user_data);
ftl_status ftl_run_verify(ftl_session* session, ftl_print_fn print, void* user_data,
                          int* failures);

#ifdef __cplusplus
}
#endif

#endif /* FTLAB_H */
