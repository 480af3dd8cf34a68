#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ftlab.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("ftlab_capi_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Session {
    ftl_session* handle = ftl_session_create();
    ~Session() { ftl_session_destroy(handle); }
};

std::string write_config(const TempDir& tmp) {
    const std::string out = (tmp.path / "runs").string();
    const std::string config_path = (tmp.path / "cfg.json").string();
    std::ofstream os(config_path);
    os << R"({
  "data": {
    "source": {"kind": "digits", "digit_classes": [0,1,2], "train_per_class": 30,
               "test_per_class": 10, "image_size": 16, "seed": 5},
    "target": {"kind": "digits", "digit_classes": [3,4,5], "train_per_class": 30,
               "test_per_class": 10, "image_size": 16, "seed": 6}
  },
  "pretrain": {"epochs": 1, "lr": 0.05, "batch_size": 15, "seed": 7},
  "adopt": {"init_mode": "zero"},
  "finetune": {"mode": "fast", "alpha": 0.05, "beta": 0.01, "batch_size": 15,
               "max_steps": 5, "seeds": [1], "per_step_validation": false},
  "eval": {"val_fraction": 0.1},
  "output": {"dir": ")" << out
       << R"("}
})";
    return config_path;
}

}  // namespace

TEST_CASE("version string is present") {
    CHECK(std::strlen(ftl_version()) > 0);
}

TEST_CASE("null and invalid arguments are reported, not fatal") {
    Session s;
    REQUIRE(s.handle != nullptr);
    CHECK(ftl_load_config(s.handle, nullptr) == FTL_ERR_INVALID_ARGUMENT);
    CHECK(std::string(ftl_session_error(s.handle)) == "config path is null");
    CHECK(ftl_set_seeds(s.handle, nullptr, 0) == FTL_ERR_INVALID_ARGUMENT);
    CHECK(ftl_set_jobs(s.handle, -1) == FTL_ERR_INVALID_ARGUMENT);
    CHECK(ftl_run_pretrain(s.handle) == FTL_ERR_INVALID_ARGUMENT);  // no config
    CHECK(ftl_run_report(s.handle, nullptr, 0) == FTL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("parse failures map to FTL_ERR_PARSE with a message") {
    TempDir tmp;
    const std::string bad = (tmp.path / "bad.json").string();
    std::ofstream(bad) << "{\"finetune\": {\"alfa\": 1}}";
    Session s;
    CHECK(ftl_load_config(s.handle, bad.c_str()) == FTL_ERR_PARSE);
    CHECK(std::string(ftl_session_error(s.handle)).find("unknown key") != std::string::npos);
    const std::string absent = (tmp.path / "absent.json").string();
    const ftl_status status = ftl_load_config(s.handle, absent.c_str());
    CHECK(status != FTL_OK);
    CHECK(std::string(ftl_session_error(s.handle)).find("cannot open") != std::string::npos);
}

TEST_CASE("pretrain, finetune and report run through the C surface") {
    TempDir tmp;
    const std::string config_path = write_config(tmp);
    Session s;
    REQUIRE(ftl_load_config(s.handle, config_path.c_str()) == FTL_OK);
    REQUIRE(ftl_run_pretrain(s.handle) == FTL_OK);

    // Missing checkpoint path errors cleanly when the output dir is wrong.
    Session other;
    REQUIRE(ftl_load_config(other.handle, config_path.c_str()) == FTL_OK);
    REQUIRE(ftl_set_output_dir(other.handle, (tmp.path / "elsewhere").string().c_str()) == FTL_OK);
    CHECK(ftl_run_finetune(other.handle) == FTL_ERR_IO);

    const std::uint64_t seeds[2] = {1, 2};
    REQUIRE(ftl_set_seeds(s.handle, seeds, 2) == FTL_OK);
    REQUIRE(ftl_set_jobs(s.handle, 2) == FTL_OK);
    REQUIRE(ftl_run_finetune(s.handle) == FTL_OK);

    std::vector<std::string> run_dirs;
    for (const auto& entry : fs::recursive_directory_iterator(tmp.path / "runs"))
        if (entry.is_regular_file() && entry.path().filename() == "adp.csv")
            run_dirs.push_back(entry.path().parent_path().string());
    REQUIRE(run_dirs.size() == 2);
    std::vector<const char*> ptrs;
    for (const std::string& dir : run_dirs) ptrs.push_back(dir.c_str());
    REQUIRE(ftl_run_report(s.handle, ptrs.data(), ptrs.size()) == FTL_OK);
    CHECK(fs::exists(tmp.path / "runs" / "aggregate.csv"));
    CHECK(fs::exists(tmp.path / "runs" / "adp_curves.svg"));
}
