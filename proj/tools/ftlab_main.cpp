// Experiment runner. Everything goes through the C API in ftlab.h; this
// binary only parses flags, expands run-directory lists and maps statuses to
// exit codes.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ftlab.h"

namespace fs = std::filesystem;

namespace {

struct SessionGuard {
    ftl_session* handle = ftl_session_create();
    ~SessionGuard() { ftl_session_destroy(handle); }
};

int report_failure(ftl_session* session, ftl_status status) {
    std::cerr << "error: " << ftl_session_error(session) << "\n";
    return static_cast<int>(status);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::string token;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!token.empty()) seeds.push_back(std::stoull(token));
            token.clear();
        } else {
            token += c;
        }
    }
    return seeds;
}

/// A run directory is any directory holding an adp.csv.
std::vector<std::string> discover_runs(const std::string& root) {
    std::vector<std::string> dirs;
    if (!fs::exists(root)) return dirs;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file() && entry.path().filename() == "adp.csv")
            dirs.push_back(entry.path().parent_path().string());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

void print_line(const char* line, void*) { std::cout << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fine-tuning lab: pretrain, adapt and evaluate small classifiers"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seeds_csv;
    int jobs = 0;
    app.add_option("--config", config_path, "experiment config file (JSON)");
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--seeds", seeds_csv, "comma-separated seed list (overrides the config)");
    app.add_option("--jobs", jobs, "worker count for seed sweeps (default: cores)");

    CLI::App* cmd_pretrain = app.add_subcommand("pretrain", "train the source model from scratch");
    CLI::App* cmd_finetune =
        app.add_subcommand("finetune", "adopt the pretrained model and run one fine-tuning "
                                       "configuration per seed");
    CLI::App* cmd_report = app.add_subcommand(
        "report", "aggregate run CSVs into summary tables and an SVG chart");
    CLI::App* cmd_verify = app.add_subcommand("verify", "run the full property suite");

    std::vector<std::string> run_dirs;
    std::string runs_root;
    cmd_report->add_option("dirs", run_dirs, "run directories to aggregate");
    cmd_report->add_option("--runs-root", runs_root,
                           "directory tree to scan for run directories");

    CLI11_PARSE(app, argc, argv);

    SessionGuard session;
    if (!session.handle) {
        std::cerr << "error: out of memory\n";
        return 1;
    }

    if (!config_path.empty()) {
        const ftl_status status = ftl_load_config(session.handle, config_path.c_str());
        if (status != FTL_OK) return report_failure(session.handle, status);
    }
    if (!out_dir.empty()) ftl_set_output_dir(session.handle, out_dir.c_str());
    if (!seeds_csv.empty()) {
        const std::vector<std::uint64_t> seeds = parse_seed_list(seeds_csv);
        const ftl_status status = ftl_set_seeds(session.handle, seeds.data(), seeds.size());
        if (status != FTL_OK) return report_failure(session.handle, status);
    }
    if (jobs > 0) ftl_set_jobs(session.handle, jobs);

    if (cmd_pretrain->parsed()) {
        if (config_path.empty()) {
            std::cerr << "error: pretrain requires --config\n";
            return static_cast<int>(FTL_ERR_INVALID_ARGUMENT);
        }
        const ftl_status status = ftl_run_pretrain(session.handle);
        if (status != FTL_OK) return report_failure(session.handle, status);
        std::cout << "pretrain complete\n";
        return 0;
    }
    if (cmd_finetune->parsed()) {
        if (config_path.empty()) {
            std::cerr << "error: finetune requires --config\n";
            return static_cast<int>(FTL_ERR_INVALID_ARGUMENT);
        }
        const ftl_status status = ftl_run_finetune(session.handle);
        if (status != FTL_OK) return report_failure(session.handle, status);
        std::cout << "finetune complete\n";
        return 0;
    }
    if (cmd_report->parsed()) {
        if (!runs_root.empty())
            for (std::string& dir : discover_runs(runs_root)) run_dirs.push_back(dir);
        std::vector<const char*> ptrs;
        for (const std::string& dir : run_dirs) ptrs.push_back(dir.c_str());
        const ftl_status status =
            ftl_run_report(session.handle, ptrs.data(), ptrs.size());
        if (status != FTL_OK) return report_failure(session.handle, status);
        std::cout << "report written\n";
        return 0;
    }
    if (cmd_verify->parsed()) {
        int failures = 0;
        const ftl_status status = ftl_run_verify(session.handle, print_line, nullptr, &failures);
        if (status == FTL_OK) {
            std::cout << "all properties passed\n";
            return 0;
        }
        if (status == FTL_ERR_VERIFY_FAILED) {
            std::cerr << failures << " properties failed\n";
            return static_cast<int>(status);
        }
        return report_failure(session.handle, status);
    }
    return 0;
}
