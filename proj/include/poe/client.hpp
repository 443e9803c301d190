#pragma once

#include <map>
#include <set>

#include "poe/replica.hpp"

namespace poe {

// Which proof closed a request.
enum class ProofKind : uint8_t { ProofOfExecution, ProofOfCommit };

struct ClientOutcome {
    ProofKind proof;
    ViewNo view = 0;  // meaningful for proofs-of-execution
    RoundNo round = 0;
    Bytes result;
    SimTime at = 0;
};

struct ClientEvent {
    DigestValue req_digest;
    ClientOutcome outcome;
};

// Client state machine: request submission, proof-of-execution collection,
// and the proof-of-commit fallback.
class ClientAutomaton {
  public:
    ClientAutomaton(const SystemConfig& cfg, uint32_t index, const AuthProvider* auth, SimTime resend_period);

    std::vector<Action> submit(const ClientRequest& req, SimTime now);
    std::vector<Action> on_message(Identity from, const Message& msg, SimTime now);
    std::vector<Action> on_timer(const TimerId& timer, SimTime now);

    std::vector<ClientEvent> drain_events() { return std::exchange(events_, {}); }

    uint32_t index() const { return index_; }
    const std::map<DigestValue, ClientOutcome>& outcomes() const { return outcomes_; }
    bool all_closed() const;

  private:
    struct Pending {
        ClientRequest request;
        uint64_t slot;
        // Tallies of identical responses by distinct replica sender.
        std::map<std::tuple<ViewNo, RoundNo, Bytes>, std::set<ReplicaId>> informs;
        std::map<std::tuple<RoundNo, Bytes>, std::set<ReplicaId>> inform_ccs;
        std::set<ReplicaId> inform_seen;     // first Inform per sender counts
        std::set<ReplicaId> inform_cc_seen;  // first InformCC per sender counts
    };

    SystemConfig cfg_;
    uint32_t index_;
    const AuthProvider* auth_;
    SimTime resend_period_;

    ViewNo max_view_seen_ = 0;
    uint64_t next_slot_ = 0;
    std::map<DigestValue, Pending> pending_;
    std::map<uint64_t, DigestValue> slots_;
    std::map<DigestValue, ClientOutcome> outcomes_;
    std::vector<ClientEvent> events_;
};

}  // namespace poe
