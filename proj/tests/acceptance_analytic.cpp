// Analytic acceptance suite: the exact numeric claims behind the training
// procedure, one pass/fail line per criterion. Exits nonzero on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ftlab/verify.hpp"

int main() {
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();

    const std::vector<std::pair<std::string, std::string>> criteria = {
        {"criterion 1: zero-init predictions uniform (1/N within 1e-6, entropy ln N)",
         "nn.zero_init_uniform_predictions"},
        {"criterion 2: balanced-batch initial error variance = 1 - 1/N within 1e-6",
         "nn.balanced_error_variance"},
        {"criterion 3: auto-warmup stall (exact zero at eps=0, <= 1e-6 at eps=1e-8)",
         "transfer.auto_warmup_stall"},
        {"criterion 4: first update equals the prototype decomposition within 1e-10",
         "transfer.first_update_prototype"},
        {"criterion 5: softmax norm >= 1/N over 1e5 rows per N in {2,5,100}",
         "tensor.softmax_norm_bound"},
        {"criterion 6: analytic gradients match finite differences (rel err < 1e-4)",
         "nn.full_model_gradcheck"},
        {"criterion 7: zero-init error is exactly 1-1/N / -1/N per class",
         "transfer.class_scaling_delta"},
    };

    std::map<std::string, ftlab::verify::PropertyResult> by_name;
    for (ftlab::verify::PropertyResult& r : ftlab::verify::run_all())
        by_name[r.name] = std::move(r);

    int failures = 0;
    for (const auto& [line, property] : criteria) {
        const auto it = by_name.find(property);
        const bool pass = it != by_name.end() && it->second.pass;
        const std::string detail = it != by_name.end() ? it->second.detail : "property missing";
        std::printf("[%s] %s (%s)\n", pass ? "PASS" : "FAIL", line.c_str(), detail.c_str());
        if (!pass) ++failures;
    }

    // The remaining module invariants gate acceptance too.
    std::vector<std::string> covered;
    for (const auto& [line, property] : criteria) covered.push_back(property);
    for (const auto& [name, r] : by_name) {
        if (std::find(covered.begin(), covered.end(), name) != covered.end()) continue;
        std::printf("[%s] property %s (%s)\n", r.pass ? "PASS" : "FAIL", name.c_str(),
                    r.detail.c_str());
        if (!r.pass) ++failures;
    }

    const double elapsed =
        std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("analytic suite: %d failure(s), %.1f s\n", failures, elapsed);
    return failures == 0 ? 0 : 1;
}
