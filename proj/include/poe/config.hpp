#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "poe/bytes.hpp"

namespace poe {

using ViewNo = uint64_t;
// Rounds are signed: round 0 carries the dummy commit certificate and the
// linear check-commit windows reach into non-positive pre-genesis rounds.
using RoundNo = int64_t;
using ReplicaId = uint32_t;
using SimTime = uint64_t;

// A participant: replica 0..n-1 or client k.
struct Identity {
    bool is_client = false;
    uint32_t index = 0;

    static Identity replica(ReplicaId r) { return Identity{false, r}; }
    static Identity client(uint32_t c) { return Identity{true, c}; }

    uint32_t encoded() const { return (uint32_t(is_client) << 31) | (index & 0x7fffffffu); }
    static Identity decode(uint32_t v) { return Identity{(v >> 31) != 0, v & 0x7fffffffu}; }

    bool operator==(const Identity& o) const = default;
    auto operator<=>(const Identity& o) const = default;

    std::string label() const { return (is_client ? "c" : "r") + std::to_string(index); }
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SystemConfig {
    uint32_t n = 4;            // replica count
    uint32_t f = 1;            // max faulty replicas
    uint32_t window = 16;      // W: max prepared-but-uncommitted rounds
    std::vector<SimTime> delta_estimate_initial;  // per-replica initial timeout estimate
    bool linear_mode = false;
    bool digest_mode = false;

    // Artifact tunables; defaults follow the protocol description.
    uint32_t request_bound = 4096;        // C: max encoded client request size
    bool merge_primary_prepare = false;   // fold primary's Prepare into its Propose
    bool emit_recovery_cc = true;         // linear aggregator broadcasts RecoveryCC at f+1 shares
    SimTime status_probe_period = 0;      // retransmission probe; 0 = 8x the view timeout estimate

    uint32_t nf() const { return n - f; }
    uint32_t f_plus_1() const { return f + 1; }

    SimTime delta_initial(ReplicaId r) const {
        if (delta_estimate_initial.empty()) return 10;
        return delta_estimate_initial[r % delta_estimate_initial.size()];
    }

    void check() const {
        if (n == 0) throw ConfigError("n must be positive");
        if (n <= 3 * f) throw ConfigError("n > 3f required, got n=" + std::to_string(n) + " f=" + std::to_string(f));
        if (window < 1) throw ConfigError("window must be >= 1");
        if (nf() <= 2 * f) throw ConfigError("nf > 2f required");
        for (SimTime d : delta_estimate_initial)
            if (d == 0) throw ConfigError("delta estimates must be positive");
    }

    static SystemConfig make(uint32_t n, uint32_t f) {
        SystemConfig cfg;
        cfg.n = n;
        cfg.f = f;
        cfg.check();
        return cfg;
    }
};

// (nf, f+1): the two quorum sizes the protocol uses.
inline std::pair<uint32_t, uint32_t> quorums(const SystemConfig& cfg) {
    return {cfg.nf(), cfg.f_plus_1()};
}

inline ReplicaId primary_of(ViewNo v, const SystemConfig& cfg) {
    return ReplicaId(v % cfg.n);
}

// Rotating aggregator for the linear check-commit; meaningful when
// linear_mode is set but defined for any round.
inline ReplicaId aggregator_of(RoundNo rho, const SystemConfig& cfg) {
    int64_t m = rho % int64_t(cfg.n);
    if (m < 0) m += cfg.n;
    return ReplicaId(m);
}

// Per-view timeout estimate: delta(v0 + i) = backoff(i) * delta(v0).
// Default backoff is 2^i, the exponential schedule; constrained to f(i) >= i.
inline uint64_t exp2_backoff(uint64_t i) {
    if (i >= 63) return uint64_t(1) << 63;
    return uint64_t(1) << i;
}

}  // namespace poe
