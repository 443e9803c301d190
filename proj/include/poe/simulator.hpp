#pragma once

#include <deque>
#include <functional>
#include <map>
#include <queue>
#include <set>

#include "poe/client.hpp"
#include "poe/replica.hpp"

namespace poe {

// ---------------------------------------------------------------------------
// Scenario: everything a run depends on. A trace is a pure function of this.

struct DelayModel {
    enum class Kind { Fixed, PerLink, SeededRange };
    Kind kind = Kind::Fixed;
    SimTime fixed = 10;
    std::map<std::pair<uint32_t, uint32_t>, SimTime> per_link;  // encoded identities
    SimTime range_min = 5, range_max = 15;

    SimTime max_delay() const;
};

struct DropWindow {
    SimTime from = 0, to = 0;
    std::optional<Identity> src;  // nullopt = any
    std::optional<Identity> dst;
};

struct PartitionWindow {
    SimTime from = 0, to = 0;
    std::vector<std::vector<Identity>> groups;  // unlisted actors form one extra group
};

struct BehaviorRule {
    std::optional<ViewNo> view_min, view_max;
    std::optional<SimTime> time_min, time_max;
    std::set<MsgKind> drop_kinds;
    std::set<MsgKind> drop_input_kinds;
    std::map<MsgKind, std::set<ReplicaId>> restrict_dest;
    bool lie_view_state = false;
    bool drop_propose_inputs = false;

    bool applies(ViewNo view, SimTime now) const {
        if (view_min && view < *view_min) return false;
        if (view_max && view > *view_max) return false;
        if (time_min && now < *time_min) return false;
        if (time_max && now > *time_max) return false;
        return true;
    }
};

struct NewViewSplit {
    ViewNo for_view = 0;  // the view the forged NewView messages establish
    struct Part {
        std::vector<ReplicaId> members;  // whose ViewStates to combine (exactly nf)
        std::vector<Identity> dests;
    };
    std::vector<Part> parts;
    size_t feed_self = 0;  // which part's NewView the faulty replica itself adopts
};

struct ByzantineBehavior {
    enum class Kind {
        Silent,
        EquivocatePropose,
        SelectiveSend,
        LieViewState,
        WithholdInform,
        CrashAt,
        Scripted,
    };
    Kind kind = Kind::Silent;
    std::set<ReplicaId> blackout;  // SelectiveSend: never send to these
    SimTime crash_time = 0;
    std::vector<BehaviorRule> rules;      // Scripted
    std::optional<NewViewSplit> split;    // Scripted
};

struct WorkItem {
    uint32_t client = 0;
    uint64_t seq = 0;
    std::string payload;
    SimTime submit_time = 0;
};

struct Scenario {
    std::string name = "scenario";
    SystemConfig config;
    uint64_t seed = 1;
    SimTime duration = 1000;
    DelayModel delay;
    std::vector<DropWindow> drops;
    std::vector<PartitionWindow> partitions;
    std::map<ReplicaId, ByzantineBehavior> faults;
    std::vector<WorkItem> workload;
    std::vector<std::string> checks;
    SimTime client_resend = 0;  // 0: default 8 * max initial delta

    uint32_t client_count() const;
    SimTime reliable_from() const;  // end of the last scheduled disruption
    void check() const;
};

// ---------------------------------------------------------------------------
// Trace and metrics

enum class TraceKind : uint8_t {
    Submit,
    Send,
    Deliver,
    Drop,
    TimerSet,
    TimerCancel,
    TimerFire,
    Execute,
    Rollback,
    PcStored,
    CcStored,
    Adopted,
    ViewEntered,
    ProposalStage,
    FailureDetected,
    Equivocation,
    ReproposalMismatch,
    QueryStarted,
    ClientOutcome,
};

const char* trace_kind_name(TraceKind k);

struct TraceEvent {
    SimTime time = 0;
    Identity actor;
    TraceKind kind = TraceKind::Send;
    Identity peer;                       // destination / source for message events
    MsgKind msg_kind = MsgKind::Request;
    ViewNo view = 0;
    RoundNo round = 0;
    DigestValue digest;                  // payload digest / request digest
    DigestValue aux;                     // result digest for Inform-like events
    uint32_t size = 0;                   // encoded message size
    std::string note;

    std::string line() const;
};

using Trace = std::vector<TraceEvent>;

std::string trace_to_text(const Trace& trace);

struct Metrics {
    std::map<std::string, uint64_t> messages_by_kind;        // all sends
    std::map<std::string, uint64_t> replica_messages_by_kind;  // replica-to-replica sends
    std::map<ReplicaId, uint64_t> bytes_sent_by_replica;
    std::map<ReplicaId, uint64_t> bytes_received_by_replica;
    struct RequestLatency {
        SimTime submit = 0;
        SimTime closed = 0;
        bool has_outcome = false;
        ProofKind proof = ProofKind::ProofOfExecution;
        double delay_units = 0;  // (closed - submit) / delta, fixed-delay runs
    };
    std::map<std::string, RequestLatency> latency_by_request;  // hex request digest
    double decisions_per_sec = 0;
    uint64_t view_changes = 0;
    RoundNo decided_rounds = 0;
};

struct CheckResult {
    std::string name;
    enum class Status { Pass, Fail, Skipped } status = Status::Pass;
    std::string detail;
    int64_t violating_index = -1;  // trace index of the first violation

    bool passed() const { return status != Status::Fail; }
};

using CheckReport = std::vector<CheckResult>;

struct ReplicaSnapshot {
    ReplicaId id = 0;
    bool faulty = false;
    ViewNo view = 0;
    RoundNo committed = 0;
    RoundNo executed = 0;
    std::vector<ReplicaAutomaton::LedgerEntry> ledger;
    DigestValue app_digest;
};

struct RunResult {
    Scenario scenario;
    Trace trace;
    Metrics metrics;
    std::vector<ReplicaSnapshot> replicas;
    std::map<uint32_t, std::map<DigestValue, ClientOutcome>> client_outcomes;
    std::map<DigestValue, WorkItem> submitted;  // by request digest
    std::map<DigestValue, uint32_t> request_clients;
    CheckReport checks;

    bool all_checks_passed() const;
    const ReplicaSnapshot& replica(ReplicaId id) const { return replicas.at(id); }
};

// ---------------------------------------------------------------------------
// Checkers (run post-hoc over a completed trace)

CheckResult check_non_divergence(const RunResult& r);
CheckResult check_poe_preservation(const RunResult& r);
CheckResult check_view_sync(const RunResult& r);
CheckResult check_liveness(const RunResult& r);

struct MessageCounts {
    std::map<std::string, uint64_t> by_kind;  // replica-to-replica sends only
    RoundNo decided = 0;
    uint64_t total() const;
};

// Per-decision inter-replica counts; meaningful for failure-free runs.
MessageCounts count_messages(const RunResult& r);

// Messages delivered at one replica, in order, as comparable fingerprints.
std::vector<std::string> observation_projection(const RunResult& r, ReplicaId id);

// ---------------------------------------------------------------------------
// Runner

RunResult run_scenario(const Scenario& scenario);

}  // namespace poe
