#include "poe/costmodel.hpp"

#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace poe {
namespace costmodel {

const char* protocol_name(Protocol p) {
    switch (p) {
        case Protocol::PoE: return "PoE";
        case Protocol::LinearPoE: return "Linear-PoE";
        case Protocol::Pbft: return "Pbft";
        case Protocol::ZyzzyvaFast: return "Zyzzyva (fast path)";
        case Protocol::Sbft: return "Sbft";
        case Protocol::HotStuff: return "HotStuff";
        case Protocol::MinBFT: return "MinBFT";
    }
    return "?";
}

std::vector<Protocol> all_protocols() {
    return {Protocol::PoE,  Protocol::LinearPoE, Protocol::Pbft,  Protocol::ZyzzyvaFast,
            Protocol::Sbft, Protocol::HotStuff,  Protocol::MinBFT};
}

CostRow cost_row(Protocol p, const CostParams& params) {
    uint64_t n = params.n;
    CostRow row;
    row.protocol = p;
    switch (p) {
        case Protocol::PoE:
            row.rounds_before_exec = 2;
            row.rounds_total = 3;
            row.msgs_total = "nC + 2n^2";
            row.msgs_per_replica_max = "nC + n";
            row.msgs_total_simplified = n + 2 * n * n;
            row.msgs_total_exact = (n - 1) + 2 * n * (n - 1);
            row.environment = "asynchronous recovery, partially synchronous progress";
            row.remarks = "speculative execution";
            break;
        case Protocol::LinearPoE:
            row.rounds_before_exec = 3;
            row.rounds_total = 5;
            row.msgs_total = "nC + 4n";
            row.msgs_per_replica_max = "nC + n";
            row.msgs_total_simplified = n + 4 * n;
            row.msgs_total_exact = 5 * (n - 1);                 // RecoveryCC suppressed
            row.msgs_total_exact_with_recovery = 6 * (n - 1);   // RecoveryCC emitted at f+1 shares
            row.environment = "asynchronous recovery, partially synchronous progress";
            row.remarks = "speculative execution";
            break;
        case Protocol::Pbft:
            row.rounds_before_exec = 3;
            row.rounds_total = 4;
            row.msgs_total = "nC + 3n^2";
            row.msgs_per_replica_max = "nC + 2n";
            row.msgs_total_simplified = n + 3 * n * n;
            row.environment = "asynchronous recovery, partially synchronous progress";
            break;
        case Protocol::ZyzzyvaFast:
            row.rounds_before_exec = 1;
            row.rounds_total = 1;
            row.msgs_total = "nC";
            row.msgs_per_replica_max = "nC";
            row.msgs_total_simplified = n;
            row.environment = "asynchronous recovery, partially synchronous progress";
            row.remarks = "optimistic fast path only; requires reliable clients";
            break;
        case Protocol::Sbft:
            row.rounds_before_exec = 4;
            row.rounds_total = 5;  // +1 checkpoint round
            row.msgs_total = "nC + 4n + n^2 (checkpoint)";
            row.msgs_per_replica_max = "nC + 3";
            row.msgs_total_simplified = n + 4 * n + n * n;
            row.environment = "asynchronous recovery, partially synchronous progress";
            row.remarks = "optimistic fast path";
            break;
        case Protocol::HotStuff:
            row.rounds_before_exec = 7;
            row.rounds_total = 8;
            row.msgs_total = "nC + 3n";
            row.msgs_per_replica_max = "nC + 3";
            row.msgs_total_simplified = n + 3 * n;
            row.environment = "partially synchronous progress and recovery";
            row.remarks = "no out-of-order processing";
            break;
        case Protocol::MinBFT:
            row.rounds_before_exec = 2;
            row.rounds_total = 2;
            row.msgs_total = "nC + n^2";
            row.msgs_per_replica_max = "nC + n";
            row.msgs_total_simplified = n + n * n;
            row.environment = "reliable communication";
            row.remarks = "requires trusted hardware; tolerates more faults";
            break;
    }
    return row;
}

double primary_bandwidth(const CostParams& params, bool linear) {
    double n = double(params.n);
    double C = params.request_size;
    double M = params.message_size;
    if (linear) return (n - 1) * (C + 2 * M + 3 * M / n);
    return (n - 1) * (C + 3 * M);
}

double throughput(const CostParams& params, bool out_of_order) {
    if (!out_of_order) {
        if (params.delta_ms <= 0) return 0;
        return 1000.0 / (3.0 * params.delta_ms);
    }
    return params.bandwidth / primary_bandwidth(params, false);
}

std::vector<BackoffEntry> backoff_table(const std::vector<uint64_t>& deltas, uint64_t i, uint64_t target_delay,
                                        const std::function<uint64_t(uint64_t)>& backoff) {
    if (backoff(0) < 1) throw std::invalid_argument("backoff function must satisfy f(i) >= i");
    for (uint64_t k = 1; k <= 8; ++k)
        if (backoff(k) < k) throw std::invalid_argument("backoff function must satisfy f(i) >= i");

    std::vector<BackoffEntry> out;
    for (uint64_t d : deltas) {
        BackoffEntry e;
        e.initial = d;
        e.at_i = backoff(i) * d;
        uint64_t j = 0;
        while (backoff(j) * d < target_delay && j < 64) ++j;
        e.first_sufficient_j = j;
        out.push_back(e);
    }
    return out;
}

std::string format_cost_table(const CostParams& params, bool with_throughput) {
    std::ostringstream os;
    os << "Cost comparison for n=" << params.n << " replicas, request size C=" << uint64_t(params.request_size)
       << " B, small message size M=" << uint64_t(params.message_size) << " B\n\n";
    os << std::left << std::setw(22) << "protocol" << std::setw(8) << "exec" << std::setw(8) << "total"
       << std::setw(28) << "messages (total)" << std::setw(22) << "per replica (max)"
       << "simplified @n\n";
    for (Protocol p : all_protocols()) {
        CostRow row = cost_row(p, params);
        os << std::left << std::setw(22) << protocol_name(p) << std::setw(8) << row.rounds_before_exec << std::setw(8)
           << row.rounds_total << std::setw(28) << row.msgs_total << std::setw(22) << row.msgs_per_replica_max
           << row.msgs_total_simplified;
        if (row.msgs_total_exact) {
            os << "  exact=" << *row.msgs_total_exact;
            if (row.msgs_total_exact_with_recovery) os << " (with RecoveryCC: " << *row.msgs_total_exact_with_recovery << ")";
        }
        os << "\n";
    }

    double std_bw = primary_bandwidth(params, false);
    double lin_bw = primary_bandwidth(params, true);
    os << "\nPrimary bandwidth per decision:\n";
    os << "  standard: " << uint64_t(std_bw) << " B (" << std::fixed << std::setprecision(1) << std_bw / 1024.0
       << " KiB)\n";
    os << "  linear:   " << uint64_t(lin_bw) << " B (" << std::fixed << std::setprecision(1) << lin_bw / 1024.0
       << " KiB), reduction " << std::setprecision(1) << (1.0 - lin_bw / std_bw) * 100.0 << "%\n";

    if (with_throughput) {
        os << "\nThroughput estimates (delta=" << params.delta_ms << " ms, B=" << std::scientific
           << std::setprecision(2) << params.bandwidth << std::defaultfloat << " size-units/s):\n";
        os << "  sequential:   " << std::fixed << std::setprecision(1) << throughput(params, false)
           << " decisions/s\n";
        os << "  out-of-order: " << std::setprecision(1) << throughput(params, true) << " decisions/s\n";
        os << "  note: bandwidth figures read \"1 Gb/s\" as 1e9 size-units/s to match the reference numbers\n";
    }
    return os.str();
}

}  // namespace costmodel
}  // namespace poe
