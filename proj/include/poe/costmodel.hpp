#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace poe {
namespace costmodel {

enum class Protocol { PoE, LinearPoE, Pbft, ZyzzyvaFast, Sbft, HotStuff, MinBFT };

const char* protocol_name(Protocol p);
std::vector<Protocol> all_protocols();

struct CostParams {
    uint64_t n = 4;
    double request_size = 4096;   // C, bytes
    double message_size = 256;    // M, bytes
    double bandwidth = 1e9;       // B, size-units/s (unit interpretation flagged)
    double delta_ms = 10;         // message delay, milliseconds
};

struct CostRow {
    Protocol protocol;
    uint64_t rounds_before_exec;
    uint64_t rounds_total;
    std::string msgs_total;              // symbolic, as printed in the comparison table
    std::string msgs_per_replica_max;    // symbolic
    // Simplified total evaluated at n (C-sized messages counted once each).
    uint64_t msgs_total_simplified;
    // Exact per-decision message count where the protocol defines one here:
    // PoE (n-1) + 2n(n-1); Linear-PoE 5(n-1) without RecoveryCC.
    std::optional<uint64_t> msgs_total_exact;
    std::optional<uint64_t> msgs_total_exact_with_recovery;  // Linear-PoE: 6(n-1)
    std::string environment;
    std::string remarks;
};

CostRow cost_row(Protocol p, const CostParams& params);

// Primary bandwidth per consensus decision, bytes:
//   standard (n-1)(C + 3M); linear (n-1)(C + 2M + 3M/n).
double primary_bandwidth(const CostParams& params, bool linear);

// Decisions per second. Sequential: 1/(3*delta). Out-of-order:
// B / ((n-1)(C+3M)), with "1 Gb/s" read as 1e9 size-units/s.
double throughput(const CostParams& params, bool out_of_order);

struct BackoffEntry {
    uint64_t initial;             // delta(v, r)
    uint64_t at_i;                // delta(v+i, r) = f(i) * delta(v, r)
    uint64_t first_sufficient_j;  // least j with f(j) * delta >= target delay
};

// Per-replica backoff table; backoff must satisfy f(i) >= i.
std::vector<BackoffEntry> backoff_table(const std::vector<uint64_t>& deltas, uint64_t i, uint64_t target_delay,
                                        const std::function<uint64_t(uint64_t)>& backoff);

// The full comparison table plus the worked bandwidth/throughput lines,
// formatted for terminal output.
std::string format_cost_table(const CostParams& params, bool with_throughput);

}  // namespace costmodel
}  // namespace poe
