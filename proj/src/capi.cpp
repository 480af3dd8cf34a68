#include "ftlab.h"

#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "ftlab/config.hpp"
#include "ftlab/pipeline.hpp"
#include "ftlab/verify.hpp"

struct ftl_session {
    std::optional<ftlab::ExperimentConfig> config;
    std::optional<std::string> output_dir;
    std::optional<std::vector<std::uint64_t>> seeds;
    std::size_t jobs = 0;  // 0 = hardware default
    std::string error = "";
};

namespace {

ftl_status fail(ftl_session* session, ftl_status code, const std::string& message) {
    if (session) session->error = message;
    return code;
}

ftl_status classify(const std::string& message) {
    if (message.find("parse error") != std::string::npos ||
        message.find("unknown key") != std::string::npos ||
        message.find("config:") != std::string::npos)
        return FTL_ERR_PARSE;
    if (message.find("cannot open") != std::string::npos ||
        message.find("missing") != std::string::npos ||
        message.find("truncated") != std::string::npos)
        return FTL_ERR_IO;
    return FTL_ERR_RUNTIME;
}

template <typename Fn>
ftl_status guarded(ftl_session* session, Fn&& fn) {
    if (!session) return FTL_ERR_INVALID_ARGUMENT;
    session->error.clear();
    try {
        return fn();
    } catch (const std::exception& e) {
        return fail(session, classify(e.what()), e.what());
    } catch (...) {
        return fail(session, FTL_ERR_RUNTIME, "unknown error");
    }
}

std::string resolved_output_dir(const ftl_session& session) {
    if (session.output_dir) return *session.output_dir;
    if (session.config) return session.config->output.dir;
    return "runs";
}

}  // namespace

extern "C" {

const char* ftl_version(void) { return ftlab::kVersion; }

ftl_session* ftl_session_create(void) { return new (std::nothrow) ftl_session(); }

void ftl_session_destroy(ftl_session* session) { delete session; }

const char* ftl_session_error(const ftl_session* session) {
    return session ? session->error.c_str() : "null session";
}

ftl_status ftl_load_config(ftl_session* session, const char* path) {
    return guarded(session, [&]() -> ftl_status {
        if (!path) return fail(session, FTL_ERR_INVALID_ARGUMENT, "config path is null");
        session->config = ftlab::ExperimentConfig::parse_file(path);
        return FTL_OK;
    });
}

ftl_status ftl_set_output_dir(ftl_session* session, const char* dir) {
    return guarded(session, [&]() -> ftl_status {
        if (!dir) return fail(session, FTL_ERR_INVALID_ARGUMENT, "output dir is null");
        session->output_dir = dir;
        return FTL_OK;
    });
}

ftl_status ftl_set_seeds(ftl_session* session, const uint64_t* seeds, size_t count) {
    return guarded(session, [&]() -> ftl_status {
        if (!seeds && count > 0)
            return fail(session, FTL_ERR_INVALID_ARGUMENT, "seed array is null");
        if (count == 0) return fail(session, FTL_ERR_INVALID_ARGUMENT, "seed list is empty");
        session->seeds = std::vector<std::uint64_t>(seeds, seeds + count);
        return FTL_OK;
    });
}

ftl_status ftl_set_jobs(ftl_session* session, int jobs) {
    return guarded(session, [&]() -> ftl_status {
        if (jobs < 0) return fail(session, FTL_ERR_INVALID_ARGUMENT, "jobs must be non-negative");
        session->jobs = static_cast<std::size_t>(jobs);
        return FTL_OK;
    });
}

ftl_status ftl_run_pretrain(ftl_session* session) {
    return guarded(session, [&]() -> ftl_status {
        if (!session->config)
            return fail(session, FTL_ERR_INVALID_ARGUMENT, "no config loaded");
        ftlab::run_pretrain(*session->config, resolved_output_dir(*session));
        return FTL_OK;
    });
}

ftl_status ftl_run_finetune(ftl_session* session) {
    return guarded(session, [&]() -> ftl_status {
        if (!session->config)
            return fail(session, FTL_ERR_INVALID_ARGUMENT, "no config loaded");
        ftlab::run_finetune(*session->config, resolved_output_dir(*session), session->seeds,
                            session->jobs);
        return FTL_OK;
    });
}

ftl_status ftl_run_report(ftl_session* session, const char* const* run_dirs, size_t count) {
    return guarded(session, [&]() -> ftl_status {
        if (!run_dirs || count == 0)
            return fail(session, FTL_ERR_INVALID_ARGUMENT, "no run directories given");
        std::vector<std::string> dirs(run_dirs, run_dirs + count);
        ftlab::run_report(dirs, resolved_output_dir(*session));
        return FTL_OK;
    });
}

ftl_status ftl_run_verify(ftl_session* session, ftl_print_fn print, void* user_data,
                          int* failures) {
    return guarded(session, [&]() -> ftl_status {
        int failed = 0;
        for (const ftlab::verify::PropertyResult& r : ftlab::verify::run_all()) {
            if (!r.pass) ++failed;
            if (print) {
                const std::string line = std::string(r.pass ? "[PASS] " : "[FAIL] ") + r.name +
                                         (r.detail.empty() ? "" : " - " + r.detail);
                print(line.c_str(), user_data);
            }
        }
        if (failures) *failures = failed;
        if (failed > 0)
            return fail(session, FTL_ERR_VERIFY_FAILED,
                        std::to_string(failed) + " properties failed");
        return FTL_OK;
    });
}

}  // extern "C"
