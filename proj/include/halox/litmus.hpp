#pragma once

// Memory-model litmus tests for the simulated PGAS runtime. Each test runs a
// tiny message-passing program across many seeds and counts executions that
// show the outcome the test is looking for.

#include "halox/pgas.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace halox::pgas {

struct LitmusResult {
    std::string name;
    /// True when the test injects a known ordering bug that must be observed.
    bool expectsViolation = false;
    std::size_t trials = 0;
    std::size_t violations = 0; // executions with a forbidden outcome
    std::string detail;

    bool pass() const { return expectsViolation ? violations > 0 : violations == 0; }
    double violation_rate() const { return trials ? static_cast<double>(violations) / trials : 0.0; }
};

struct LitmusOptions {
    MemoryMode mode = MemoryMode::WeakAdversary;
    Regime regime = Regime::Deterministic;
    double aggressiveness = 0.5;
    std::vector<std::uint64_t> seeds;
    std::size_t payload = 100;
};

/// Names of every litmus test, correct protocols first.
std::vector<std::string> litmus_names();

/// Runs one litmus test over every seed. Throws std::invalid_argument on an unknown name.
LitmusResult run_litmus(const std::string& name, const LitmusOptions& opt);

std::vector<LitmusResult> run_litmus_suite(const LitmusOptions& opt);

} // namespace halox::pgas
