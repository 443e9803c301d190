#pragma once

#include <deque>
#include <map>
#include <memory>
#include <set>
#include <variant>

#include "poe/execution.hpp"
#include "poe/message.hpp"

namespace poe {

// ---------------------------------------------------------------------------
// Inputs and outputs of the deterministic state machines

enum class TimerKind : uint8_t {
    ExpectProposalClient,  // a = client index
    ExpectProposalRound,   // a = round
    ExpectRepropose,       // a = view, b = round
    AwaitNewView,          // a = awaited view
    FailureRebroadcast,    // a = view
    QueryRetry,            // a = round
    StatusProbe,           // periodic pull of the next committed round
    ClientResend,          // a = request slot (client side)
};

struct TimerId {
    TimerKind kind;
    uint64_t a = 0;
    uint64_t b = 0;

    auto operator<=>(const TimerId&) const = default;
    std::string label() const;
};

struct SendAction {
    Identity dest;
    Message msg;
};
struct BroadcastAction {  // to all replicas except the sender
    Message msg;
};
struct SetTimerAction {
    TimerId id;
    SimTime delay;
};
struct CancelTimerAction {
    TimerId id;
};
struct ExecutedAction {
    RoundNo round;
    Bytes result;
};
struct RolledBackAction {
    RoundNo to_round;
};

using Action = std::variant<SendAction, BroadcastAction, SetTimerAction, CancelTimerAction, ExecutedAction,
                            RolledBackAction>;

// State transitions surfaced to the simulator's trace log.
struct InternalEvent {
    enum class Kind {
        PcStored,
        CcStored,   // one per newly decided round
        Adopted,    // prepared via forwarded certificate instead of Propose
        ViewEntered,
        ProposalStageEntered,
        FailureDetected,
        EquivocationDetected,
        ReproposalMismatch,
        QueryStarted,
    };

    Kind kind;
    ViewNo view = 0;
    RoundNo round = 0;
    DigestValue digest;

    std::string label() const;
};

// ---------------------------------------------------------------------------
// The ledger as derived from a NewView message (section: view changes).

struct NewViewLedger {
    RoundNo r_cc = 0;  // last round with commit-certificate evidence in V
    RoundNo r = 0;     // last round with any evidence in V
    // Requests for (r_cc, r], always resolvable from a well-formed V.
    std::map<RoundNo, ClientRequest> tail;
    // Rounds <= r_cc whose commit evidence appears in V. Rounds missing here
    // are recovered through the query protocol.
    std::map<RoundNo, std::pair<DigestValue, std::optional<ClientRequest>>> committed;
};

// Evaluates the new-view set definitions on V. Returns nullopt when V is
// inconsistent (forged or ill-formed beyond per-message validation).
std::optional<NewViewLedger> derive_ledger(const NewViewMsg& n, const SystemConfig& cfg, const AuthProvider& auth);

// ---------------------------------------------------------------------------
// Replica

class ReplicaAutomaton {
  public:
    ReplicaAutomaton(const SystemConfig& cfg, ReplicaId id, const AuthProvider* auth);

    // Arms the periodic recovery probe; lost messages are never retransmitted
    // by the network, so replicas poll for decisions they may have missed.
    std::vector<Action> start();
    std::vector<Action> on_message(Identity from, const Message& msg, SimTime now);
    std::vector<Action> on_timer(const TimerId& timer, SimTime now);

    std::vector<InternalEvent> drain_events() { return std::exchange(events_, {}); }

    // Inspection for checkers and reports.
    ReplicaId id() const { return id_; }
    ViewNo current_view() const { return view_; }
    RoundNo committed_prefix() const { return committed_prefix_; }
    RoundNo executed_prefix() const { return app_.applied_prefix(); }
    const AppState& app() const { return app_; }
    struct LedgerEntry {
        RoundNo round;
        DigestValue req_digest;
        Bytes result;
        bool committed;
    };
    std::vector<LedgerEntry> ledger() const;
    SimTime delta_for_view(ViewNo v) const;
    // The ViewState this replica would report for view v (fault drivers use
    // this to assemble forged NewView messages from real materials).
    ViewStateMsg current_view_state(ViewNo v) const { return build_view_state(v); }

  private:
    struct RoundSlot {
        std::optional<Proposal> accepted;          // proposal adopted for accepted_view
        ViewNo accepted_view = 0;
        std::optional<SignatureEvidence> propose_sig;  // primary's signature on the accepted Propose
        // Prepare tallies keyed by (view, request digest); values keep arrival order.
        std::map<std::pair<ViewNo, DigestValue>, std::vector<SignatureEvidence>> prepares;
        bool expect_round_timer_set = false;

        std::optional<PreparedCertificate> pc;
        std::optional<ClientRequest> request;  // execution payload behind pc
        bool executed = false;
        Bytes result;
        DigestValue executed_digest;

        ViewNo informed_view = ~ViewNo(0);
        ViewNo check_commit_view = ~ViewNo(0);  // view we broadcast CheckCommit in
        // CheckCommit tallies keyed by (view, digest); arrival order preserved.
        std::map<std::pair<ViewNo, DigestValue>, std::vector<CheckCommitEvidence>> cc_tally;
        std::map<ReplicaId, std::pair<ViewNo, DigestValue>> cc_sender_choice;
        bool fetch_started = false;

        std::shared_ptr<CommitCertificate> cc;

        // Linear mode.
        std::map<ReplicaId, Share> support_shares;  // primary tally
        bool certify_sent = false;
        bool support_cc_sent = false;
        std::map<DigestValue, std::map<ReplicaId, SupportCCMsg>> support_cc_shares;  // aggregator tally
        std::vector<ReplicaId> support_cc_order;                                     // arrival order of senders
        bool recovery_cc_sent = false;
        bool certify_cc_sent = false;
    };

    enum class Stage : uint8_t { Normal, FailureDetected, NewViewProposal, AwaitingNewView };

    using Actions = std::vector<Action>;

    // Handlers.
    void handle_request(Actions& out, Identity from, const ClientRequest& req);
    void handle_propose(Actions& out, const Message& msg);
    void handle_prepare(Actions& out, const Message& msg);
    void handle_check_commit(Actions& out, const Message& msg);
    void handle_failure(Actions& out, const Message& msg);
    void handle_view_state(Actions& out, const Message& msg);
    void handle_new_view(Actions& out, const Message& msg);
    void handle_query_cc(Actions& out, const Message& msg);
    void handle_respond_cc(Actions& out, const Message& msg);
    void handle_support(Actions& out, const Message& msg);
    void handle_certify(Actions& out, const Message& msg);
    void handle_support_cc(Actions& out, const Message& msg);
    void handle_recovery_cc(Actions& out, const Message& msg);
    void handle_certify_cc(Actions& out, const Message& msg);

    // Normal case helpers.
    bool normal_case_active() const { return stage_ == Stage::Normal || stage_ == Stage::FailureDetected; }
    bool is_primary() const { return primary_of(view_, cfg_) == id_; }
    void propose_next(Actions& out, const ClientRequest& req);
    void drain_propose_queue(Actions& out);
    void accept_proposal(Actions& out, const Proposal& p, const std::optional<SignatureEvidence>& propose_sig);
    void try_form_pc(Actions& out, RoundNo round, ViewNo view, const DigestValue& digest);
    void store_pc(Actions& out, RoundNo round, PreparedCertificate pc, std::optional<ClientRequest> request);
    void try_execute_ready(Actions& out);
    void emit_inform(Actions& out, RoundNo round);
    void advance_check_commits(Actions& out);
    void try_form_cc(Actions& out, RoundNo round);
    void store_standard_cc(Actions& out, RoundNo round, ViewNo view, const DigestValue& digest);
    void after_commit_advance(Actions& out);
    void note_decided(Actions& out, RoundNo round);

    // Linear helpers.
    void advance_linear_check_commits(Actions& out);
    void try_combine_support(Actions& out, RoundNo round, ViewNo view, const DigestValue& digest);
    std::optional<DigestValue> local_window_digest(RoundNo round) const;
    void aggregator_check(Actions& out, RoundNo round);
    void ingest_linear_cc(Actions& out, const CommitCertificate& cc);
    void store_linear_cc(Actions& out, const CommitCertificate& cc);
    void try_pending_certify_cc(Actions& out);
    void start_linear_fetch(Actions& out, RoundNo round, const DigestValue& want_digest);

    // View change helpers.
    void detect_failure(Actions& out, ViewNo v);
    void check_failure_quorums(Actions& out);
    void enter_proposal_stage(Actions& out, ViewNo v);
    ViewStateMsg build_view_state(ViewNo v) const;
    void record_view_state(Actions& out, const SignedViewState& sv, ViewNo for_view);
    void accept_new_view(Actions& out, const NewViewMsg& n);
    void start_query(Actions& out, RoundNo round, bool broadcast);
    void pull_committed_chain(Actions& out);
    void advance_query(Actions& out);

    // Request bookkeeping.
    void forward_to_primary(Actions& out, const ClientRequest& req);
    void satisfy_client_expectation(Actions& out, Identity client);
    void extend_client_expectation(Actions& out, Identity client);

    Message sign(MessageBody body) const { return make_message(*auth_, Identity::replica(id_), body); }
    RoundSlot& slot(RoundNo r) { return slots_[r]; }
    ViewNo failure_target() const;
    SimTime probe_period() const;
    std::optional<RoundNo> round_of_request(const DigestValue& d);
    void push_event(InternalEvent::Kind k, ViewNo v, RoundNo r, DigestValue d = {});
    bool buffer_future(Identity from, const Message& msg, ViewNo msg_view);
    void drain_buffered(Actions& out);

    SystemConfig cfg_;
    ReplicaId id_;
    const AuthProvider* auth_;
    SimTime now_ = 0;

    ViewNo view_ = 0;
    Stage stage_ = Stage::Normal;
    AppState app_;
    std::map<RoundNo, RoundSlot> slots_;
    RoundNo committed_prefix_ = 0;  // round 0 holds the dummy certificate
    RoundNo next_propose_round_ = 1;
    RoundNo ledger_r_ = 0;  // r(n) of the last accepted new-view

    // Failure detection and view change.
    std::map<ViewNo, std::set<ReplicaId>> failure_senders_;
    std::set<ViewNo> failures_detected_;
    ViewNo proposal_stage_done_ = 0;  // highest view whose proposal stage we entered (+1)
    ViewNo awaited_view_ = 0;
    std::map<ViewNo, std::pair<SignedPropose, SignedPropose>> equivocation_proofs_;
    std::vector<SignedViewState> collected_view_states_;
    ViewNo collecting_for_view_ = ~ViewNo(0);
    std::set<ViewNo> new_view_sent_;
    std::map<RoundNo, DigestValue> expected_reproposals_;

    // Timeout estimates.
    SimTime delta_anchor_value_;
    ViewNo delta_anchor_view_ = 0;

    // Client request bookkeeping.
    std::map<uint32_t, DigestValue> forwarded_pending_;          // client -> request digest
    std::map<DigestValue, ClientRequest> pending_requests_;      // forwarded or queued, by digest
    std::deque<DigestValue> propose_queue_;                      // primary backlog (window-bound)
    std::map<DigestValue, RoundNo> request_rounds_;              // request digest -> round proposed/known
    std::set<DigestValue> proposed_requests_;                    // requests this primary already proposed

    // Query recovery: round -> true when a commit certificate is required
    // (new-view rule 2), false when only the certificate/request pair is
    // missing (digest or linear fetch).
    std::map<RoundNo, bool> query_needed_;
    std::optional<RoundNo> active_query_;
    bool active_query_broadcast_ = true;

    // Linear recovery.
    std::map<RoundNo, CertifyCCMsg> pending_certify_cc_;
    std::map<RoundNo, std::set<ReplicaId>> fetch_requesters_;  // aggregator two-hop bookkeeping
    std::map<RoundNo, std::set<ReplicaId>> future_cc_senders_;  // catch-up trigger while in an old view

    // Messages for future views, replayed on view entry.
    std::map<ViewNo, std::vector<std::pair<Identity, Message>>> held_back_;
    std::vector<Message> window_deferred_proposes_;

    std::vector<InternalEvent> events_;
};

}  // namespace poe
