#include <catch2/catch_amalgamated.hpp>

#include "talsc/verify.hpp"

using namespace talsc;

TEST_CASE("all property suites pass on a healthy build") {
    for (const SuiteResult& s : run_verify_suites()) {
        INFO("suite " << s.name);
        for (const CheckResult& c : s.checks) {
            INFO(c.name << ": " << c.detail);
            CHECK(c.passed);
        }
        REQUIRE(s.passed);
    }
}

TEST_CASE("suite filter selects a single suite") {
    const auto suites = run_verify_suites("grid-extension");
    REQUIRE(suites.size() == 1);
    REQUIRE(suites[0].name == "grid-extension");
}

TEST_CASE("an injected backward sign error is caught by the gradient suite") {
    const SuiteResult mutated = suite_gradients(7, GradMutation::FlipDenseSign);
    REQUIRE_FALSE(mutated.passed);
}
