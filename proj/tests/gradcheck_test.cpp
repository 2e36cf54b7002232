#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <set>
#include <string>

#include "doctest.h"
#include "pae/gradcheck.hpp"

using pae::OracleResult;

TEST_CASE("all oracle suites pass on a fresh seed") {
    std::vector<OracleResult> results = pae::run_oracle_suites(7);
    REQUIRE(results.size() == 9);
    for (const OracleResult& r : results) {
        INFO(r.name, " worst=", r.worst, " budget=", r.budget);
        CHECK(r.pass);
    }
}

TEST_CASE("suite names are unique and stable") {
    std::vector<OracleResult> results = pae::run_oracle_suites(3);
    std::set<std::string> names;
    for (const OracleResult& r : results) names.insert(r.name);
    CHECK(names.size() == results.size());
    CHECK(results.front().name == "kp_analytic_vs_fd");
    CHECK(results.back().name == "encoder_block_fd");
    CHECK(names.count("fft_roundtrip_parseval") == 1);
    CHECK(names.count("hinge_iff_nonincreasing") == 1);
    CHECK(names.count("spd_min_eig_floor") == 1);
}

TEST_CASE("error suites report a positive budget and a finite worst") {
    for (const OracleResult& r : pae::run_oracle_suites(11)) {
        CHECK(std::isfinite(r.worst));
        CHECK(r.seconds >= 0.0);
        if (r.name != "hinge_iff_nonincreasing") CHECK(r.budget > 0.0);
    }
}

TEST_CASE("kp oracle runs inside its time budget") {
    OracleResult fd = pae::check_kp_grad_fd(5);
    OracleResult tape = pae::check_kp_grad_tape(5);
    CHECK(fd.pass);
    CHECK(tape.pass);
    CHECK(fd.seconds + tape.seconds < 60.0);
    CHECK(tape.worst <= 1e-10);
    CHECK(fd.worst <= 1e-6);
    CHECK(fd.worst > 0.0);  // finite differences are never exact
}

TEST_CASE("suites are deterministic per seed") {
    OracleResult a = pae::check_stab_grad_fd(9);
    OracleResult b = pae::check_stab_grad_fd(9);
    CHECK(a.worst == b.worst);
    OracleResult c = pae::check_spd_floor(9);
    OracleResult d = pae::check_spd_floor(9);
    CHECK(c.worst == d.worst);
    CHECK(c.worst >= c.budget);
}

TEST_CASE("different seeds still pass") {
    for (std::uint64_t seed : {1ull, 42ull, 31337ull}) {
        CHECK(pae::check_hinge_iff(seed).pass);
        CHECK(pae::check_fft(seed).pass);
    }
}
