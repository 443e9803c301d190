#pragma once

#include <optional>
#include <string>

#include "poe/simulator.hpp"

namespace poe {

struct ScenarioParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Seeded randomization block of a scenario template. Expansion is a pure
// function of (template, seed).
struct RandomizeSpec {
    uint32_t max_faults = 1;
    std::vector<std::string> behaviors;  // eligible behavior names
    uint32_t max_drop_windows = 0;
    SimTime max_drop_len = 200;
    uint32_t max_partition_windows = 0;
    SimTime max_partition_len = 200;
    SimTime disruption_end = 0;    // all disruptions end by here; 0 = duration
    uint32_t clients = 2;
    uint32_t min_requests = 2;
    uint32_t max_requests = 6;
    SimTime submit_spread = 400;
    SimTime jitter_min = 0, jitter_max = 0;  // nonzero: switch to seeded-range delays
};

struct ScenarioDocument {
    Scenario base;
    std::optional<RandomizeSpec> randomize;
};

// Parses a scenario document; throws ScenarioParseError with line-anchored
// diagnostics on malformed input.
ScenarioDocument parse_scenario_text(const std::string& text);
ScenarioDocument load_scenario_file(const std::string& path);

// Canonical serialization; parse(serialize(doc)) == doc.
std::string serialize_scenario(const ScenarioDocument& doc);

// Applies key=value overrides (e.g. "seed=7", "system.n=7", "duration=500").
void apply_override(ScenarioDocument& doc, const std::string& key, const std::string& value);

// Expands the randomize block (if any) into concrete faults, drops,
// partitions, and workload, deterministically from the seed.
Scenario materialize(const ScenarioDocument& doc, uint64_t seed);

}  // namespace poe
