#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ftlab/adp.hpp"

using namespace ftlab;

TEST_CASE("fibonacci checkpoints drop the duplicate and truncate") {
    CHECK(fibonacci_checkpoints(21) == std::vector<std::size_t>{1, 2, 3, 5, 8, 13, 21});
    CHECK(fibonacci_checkpoints(1) == std::vector<std::size_t>{1});
    CHECK(fibonacci_checkpoints(100) ==
          std::vector<std::size_t>{1, 2, 3, 5, 8, 13, 21, 34, 55, 89});
    CHECK_THROWS(fibonacci_checkpoints(0));
}

TEST_CASE("checkpoint schedule can append the final step") {
    CHECK(checkpoint_schedule(50, true) ==
          std::vector<std::size_t>{1, 2, 3, 5, 8, 13, 21, 34, 50});
    CHECK(checkpoint_schedule(55, true) ==
          std::vector<std::size_t>{1, 2, 3, 5, 8, 13, 21, 34, 55});
    CHECK(checkpoint_schedule(50, false) == fibonacci_checkpoints(50));
}

TEST_CASE("validation ramp unrolls to the documented steps") {
    CHECK(validation_due(1));
    CHECK(validation_due(3));
    CHECK(validation_due(6));
    CHECK(validation_due(10));
    CHECK(validation_due(55));
    CHECK_FALSE(validation_due(56));
    CHECK_FALSE(validation_due(2));
    CHECK(validation_due(65));
    CHECK(validation_due(75));
    CHECK(validation_due(115));
    CHECK_FALSE(validation_due(116));
    CHECK_THROWS(validation_due(0));
}

TEST_CASE("validation ramp respects the saturation parameter") {
    // saturation 2: gaps 1,2,2,2,... -> steps 1,3,5,7,...
    CHECK(validation_due(1, 2));
    CHECK(validation_due(3, 2));
    CHECK(validation_due(5, 2));
    CHECK_FALSE(validation_due(2, 2));
    CHECK_FALSE(validation_due(4, 2));
}

TEST_CASE("tracker keeps the earlier snapshot on ties") {
    ValidationTracker tracker;
    CHECK_FALSE(tracker.has_snapshot());
    CHECK_THROWS(tracker.snapshot());
    auto snap = []() { return Checkpoint{}; };
    CHECK(tracker.offer(0.4, 1, snap));
    CHECK_FALSE(tracker.offer(0.4, 2, snap));  // tie: keep step 1
    CHECK(tracker.best_step() == 1);
    CHECK(tracker.offer(0.6, 3, snap));
    CHECK_FALSE(tracker.offer(0.5, 4, snap));
    CHECK(tracker.best_val_acc() == 0.6);
    CHECK(tracker.best_step() == 3);
}

TEST_CASE("adp log enforces its invariants and round-trips through CSV") {
    AdpLog log;
    log.append({1, 0.2, 1.0, 0.9, 1, 0.0, 0.0});
    log.append({2, 0.4, 1.0, 0.85, 1, 0.5, 0.01});
    CHECK_THROWS(log.append({2, 0.4, 1.0, 0.85, 1, 0.5, 0.01}));  // not increasing
    CHECK_THROWS(log.append({5, 0.4, 1.0, 0.85, 9, 0.5, 0.01}));  // best_val_step > step
    std::ostringstream os;
    log.write_csv(os);
    std::istringstream is(os.str());
    const AdpLog back = AdpLog::read_csv(is);
    REQUIRE(back.records().size() == 2);
    CHECK(back.records()[1].target_top1 == doctest::Approx(0.4));
    CHECK(back.records()[1].step == 2);
    std::ostringstream os2;
    back.write_csv(os2);
    CHECK(os.str() == os2.str());
}

TEST_CASE("percentile interpolates linearly") {
    const std::vector<double> v = {4.0, 1.0, 3.0, 2.0};
    CHECK(percentile(v, 0) == 1.0);
    CHECK(percentile(v, 100) == 4.0);
    CHECK(percentile(v, 50) == doctest::Approx(2.5));
    CHECK(percentile({7.0}, 50) == 7.0);
    CHECK_THROWS(percentile({}, 50));
}

TEST_CASE("convergence report aggregates per method") {
    std::vector<RunFinal> finals = {
        {"fast", 0.10, 0.01, 1.0},
        {"fast", 0.10, 0.01, 1.0},
        {"baseline", 0.20, 0.02, 3.0},
        {"baseline", 0.30, 0.04, 5.0},
        {"single", 0.50, 0.10, 2.0},
    };
    const std::vector<ConvergenceRow> rows = convergence_report(finals);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].method == "fast");
    CHECK(rows[0].top1_error_std == 0.0);  // identical seeds
    CHECK(rows[0].std_defined);
    CHECK(rows[1].method == "baseline");
    CHECK(rows[1].top1_error_mean == doctest::Approx(0.25));
    CHECK(rows[1].dist_mean == doctest::Approx(4.0));
    CHECK(rows[1].top1_error_std == doctest::Approx(std::sqrt(0.005)));
    CHECK(rows[2].method == "single");
    CHECK_FALSE(rows[2].std_defined);  // fewer than 2 seeds -> flagged
    CHECK(rows[2].top1_error_mean == doctest::Approx(0.50));
    std::ostringstream os;
    write_convergence_csv(os, rows);
    CHECK(os.str().find("single,1,0,") != std::string::npos);
}
