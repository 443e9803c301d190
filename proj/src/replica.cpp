#include "poe/replica.hpp"

#include <algorithm>
#include <cassert>

namespace poe {

namespace {

constexpr ViewNo kNoView = ~ViewNo(0);

std::string timer_kind_name(TimerKind k) {
    switch (k) {
        case TimerKind::ExpectProposalClient: return "expect-proposal-client";
        case TimerKind::ExpectProposalRound: return "expect-proposal-round";
        case TimerKind::ExpectRepropose: return "expect-repropose";
        case TimerKind::AwaitNewView: return "await-new-view";
        case TimerKind::FailureRebroadcast: return "failure-rebroadcast";
        case TimerKind::QueryRetry: return "query-retry";
        case TimerKind::ClientResend: return "client-resend";
    }
    return "?";
}

}  // namespace

std::string TimerId::label() const {
    return timer_kind_name(kind) + ("(" + std::to_string(a) + "," + std::to_string(b) + ")");
}

std::string InternalEvent::label() const {
    switch (kind) {
        case Kind::PcStored: return "pc-stored";
        case Kind::CcStored: return "cc-stored";
        case Kind::Adopted: return "adopted";
        case Kind::ViewEntered: return "view-entered";
        case Kind::ProposalStageEntered: return "proposal-stage";
        case Kind::FailureDetected: return "failure-detected";
        case Kind::EquivocationDetected: return "equivocation";
        case Kind::ReproposalMismatch: return "repropose-mismatch";
        case Kind::QueryStarted: return "query-started";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Ledger derivation

std::optional<NewViewLedger> derive_ledger(const NewViewMsg& n, const SystemConfig& cfg, const AuthProvider& auth) {
    (void)cfg;
    NewViewLedger led;

    // N_cc: committed evidence present in V.
    for (const SignedViewState& sv : n.view_states) {
        const CommitCertificate& cc = sv.body.last_cc;
        if (cc.kind == CommitCertificate::Kind::Standard) {
            std::optional<ClientRequest> req = cc.request;
            if (!req) {
                for (const ClientRequest& cand : sv.body.request_table)
                    if (request_digest(auth, cand) == cc.req_digest) req = cand;
            }
            auto [it, inserted] = led.committed.try_emplace(cc.round, std::make_pair(cc.req_digest, req));
            if (!inserted && !(it->second.first == cc.req_digest)) return std::nullopt;
            if (!inserted && !it->second.second && req) it->second.second = req;
        } else if (cc.kind == CommitCertificate::Kind::Linear) {
            for (const PreparedCertificate& pc : sv.body.cc_window_pcs) {
                if (pc.round < 1) continue;
                std::optional<ClientRequest> req;
                for (const ClientRequest& cand : sv.body.request_table)
                    if (request_digest(auth, cand) == pc.req_digest) req = cand;
                auto [it, inserted] = led.committed.try_emplace(pc.round, std::make_pair(pc.req_digest, req));
                if (!inserted && !(it->second.first == pc.req_digest)) return std::nullopt;
                if (!inserted && !it->second.second && req) it->second.second = req;
            }
        }
        led.r_cc = std::max(led.r_cc, cc.covers_to());
    }

    // P(n, rho): prepared evidence, by round, keeping the most recent view.
    struct Best {
        ViewNo view;
        DigestValue digest;
        std::optional<ClientRequest> request;
        bool ambiguous = false;
    };
    std::map<RoundNo, Best> prepared;
    for (const SignedViewState& sv : n.view_states) {
        for (const PreparedCertificate& pc : sv.body.executed_tail) {
            std::optional<ClientRequest> req = pc.request;
            if (!req) {
                for (const ClientRequest& cand : sv.body.request_table)
                    if (request_digest(auth, cand) == pc.req_digest) req = cand;
            }
            auto it = prepared.find(pc.round);
            if (it == prepared.end()) {
                prepared[pc.round] = Best{pc.view, pc.req_digest, req};
            } else if (pc.view > it->second.view) {
                it->second = Best{pc.view, pc.req_digest, req};
            } else if (pc.view == it->second.view) {
                if (!(pc.req_digest == it->second.digest)) it->second.ambiguous = true;
                if (!it->second.request && req) it->second.request = req;
            }
        }
    }

    led.r = led.r_cc;
    for (const auto& [round, best] : prepared) led.r = std::max(led.r, round);

    // M(n, rho) must be a singleton for every round in (r_cc, r].
    for (RoundNo rho = led.r_cc + 1; rho <= led.r; ++rho) {
        auto it = prepared.find(rho);
        if (it == prepared.end()) return std::nullopt;   // gap: V is inconsistent
        if (it->second.ambiguous) return std::nullopt;   // two proposals in the max view
        if (!it->second.request) return std::nullopt;    // unresolvable request
        led.tail[rho] = *it->second.request;
    }
    return led;
}

// ---------------------------------------------------------------------------
// Construction

ReplicaAutomaton::ReplicaAutomaton(const SystemConfig& cfg, ReplicaId id, const AuthProvider* auth)
    : cfg_(cfg), id_(id), auth_(auth) {
    cfg_.check();
    delta_anchor_value_ = cfg_.delta_initial(id_);
    delta_anchor_view_ = 0;
}

SimTime ReplicaAutomaton::delta_for_view(ViewNo v) const {
    ViewNo base = std::min(delta_anchor_view_, v);
    uint64_t factor = exp2_backoff(v - base);
    SimTime d = delta_anchor_value_;
    if (d != 0 && factor > (~SimTime(0) / 4) / d) return ~SimTime(0) / 4;
    return factor * d;
}

ViewNo ReplicaAutomaton::failure_target() const {
    return stage_ == Stage::AwaitingNewView ? awaited_view_ : view_;
}

// Round the request currently occupies, dropping mappings left stale by
// rollbacks and slot resets.
std::optional<RoundNo> ReplicaAutomaton::round_of_request(const DigestValue& d) {
    auto it = request_rounds_.find(d);
    if (it == request_rounds_.end()) return std::nullopt;
    auto sit = slots_.find(it->second);
    bool live = sit != slots_.end() &&
                ((sit->second.request && request_digest(*auth_, *sit->second.request) == d) ||
                 (sit->second.executed && sit->second.executed_digest == d));
    if (!live) {
        request_rounds_.erase(it);
        return std::nullopt;
    }
    return it->second;
}

void ReplicaAutomaton::push_event(InternalEvent::Kind k, ViewNo v, RoundNo r, DigestValue d) {
    events_.push_back(InternalEvent{k, v, r, d});
}

std::vector<ReplicaAutomaton::LedgerEntry> ReplicaAutomaton::ledger() const {
    std::vector<LedgerEntry> out;
    for (RoundNo r = 1; r <= app_.applied_prefix(); ++r) {
        auto it = slots_.find(r);
        if (it == slots_.end()) break;
        out.push_back(LedgerEntry{r, it->second.executed_digest, it->second.result, r <= committed_prefix_});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dispatch

std::vector<Action> ReplicaAutomaton::start() {
    Actions out;
    out.push_back(SetTimerAction{TimerId{TimerKind::StatusProbe, 0, 0}, probe_period()});
    return out;
}

SimTime ReplicaAutomaton::probe_period() const {
    return cfg_.status_probe_period ? cfg_.status_probe_period : 8 * delta_for_view(view_);
}

std::vector<Action> ReplicaAutomaton::on_message(Identity from, const Message& msg, SimTime now) {
    now_ = now;
    Actions out;

    if (msg.sender != from) return out;
    ValidationResult vr = validate(msg, cfg_, *auth_);
    if (!vr) return out;  // ill-formed input is dropped silently

    switch (msg.kind()) {
        case MsgKind::Request: handle_request(out, from, msg.as<RequestMsg>()->request); break;
        case MsgKind::Propose: handle_propose(out, msg); break;
        case MsgKind::Prepare: handle_prepare(out, msg); break;
        case MsgKind::CheckCommit: handle_check_commit(out, msg); break;
        case MsgKind::Failure: handle_failure(out, msg); break;
        case MsgKind::ViewState: handle_view_state(out, msg); break;
        case MsgKind::NewView: handle_new_view(out, msg); break;
        case MsgKind::QueryCC: handle_query_cc(out, msg); break;
        case MsgKind::RespondCC: handle_respond_cc(out, msg); break;
        case MsgKind::Support: handle_support(out, msg); break;
        case MsgKind::Certify: handle_certify(out, msg); break;
        case MsgKind::SupportCC: handle_support_cc(out, msg); break;
        case MsgKind::RecoveryCC: handle_recovery_cc(out, msg); break;
        case MsgKind::CertifyCC: handle_certify_cc(out, msg); break;
        case MsgKind::Inform:
        case MsgKind::InformCC: break;  // client-facing, not replica input
    }
    return out;
}

bool ReplicaAutomaton::buffer_future(Identity from, const Message& msg, ViewNo msg_view) {
    if (msg_view <= view_) return false;
    auto& q = held_back_[msg_view];
    if (q.size() < 256) q.emplace_back(from, msg);
    return true;
}

void ReplicaAutomaton::drain_buffered(Actions& out) {
    std::vector<std::pair<Identity, Message>> ready;
    for (auto it = held_back_.begin(); it != held_back_.end();) {
        if (it->first <= view_) {
            for (auto& m : it->second) ready.push_back(std::move(m));
            it = held_back_.erase(it);
        } else {
            ++it;
        }
    }
    SimTime now = now_;
    for (auto& [from, msg] : ready) {
        Actions sub = on_message(from, msg, now);
        out.insert(out.end(), sub.begin(), sub.end());
    }
}

// ---------------------------------------------------------------------------
// Client requests (Fig 2 primary role, request forwarding, Fig 9 recovery)

void ReplicaAutomaton::handle_request(Actions& out, Identity from, const ClientRequest& req) {
    (void)from;
    DigestValue d = request_digest(*auth_, req);
    std::optional<RoundNo> round = round_of_request(d);

    // Committed request: answer with the proof-of-commit message.
    if (round && *round <= committed_prefix_ && slots_.at(*round).executed) {
        const RoundSlot& s = slots_.at(*round);
        InformCCMsg m{d, *round, s.result, {}};
        if (!cfg_.digest_mode && !cfg_.linear_mode) m.request = req;
        out.push_back(SendAction{req.client, sign(m)});
        return;
    }

    bool accepted_this_view = false;
    if (round) {
        const RoundSlot& s = slots_.at(*round);
        if (s.executed && s.informed_view != kNoView && s.executed_digest == d) {
            // Duplicate of a request we already informed about: re-emit.
            InformMsg m{d, s.informed_view, *round, s.result, {}};
            if (!cfg_.digest_mode && !cfg_.linear_mode) m.request = req;
            out.push_back(SendAction{req.client, sign(m)});
        }
        accepted_this_view = s.accepted && s.accepted_view == view_;
    }

    if (is_primary() && normal_case_active()) {
        if (proposed_requests_.count(d) || accepted_this_view) return;  // already in flight in this view
        proposed_requests_.insert(d);
        pending_requests_[d] = req;
        propose_queue_.push_back(d);
        drain_propose_queue(out);
        return;
    }

    // Backup: forward to the primary and expect a timely proposal, at most
    // one in-flight expectation per client. An accepted-but-uncommitted
    // round does not satisfy the expectation: only a commit does, so a
    // stranded round still drives failure detection.
    auto fit = forwarded_pending_.find(req.client.index);
    if (fit != forwarded_pending_.end() && !(fit->second == d)) return;  // rate-limited: drop silently
    bool fresh = fit == forwarded_pending_.end();
    forwarded_pending_[req.client.index] = d;
    pending_requests_[d] = req;
    forward_to_primary(out, req);
    if (fresh)
        out.push_back(SetTimerAction{TimerId{TimerKind::ExpectProposalClient, req.client.index, 0},
                                     4 * delta_for_view(view_)});
}

void ReplicaAutomaton::forward_to_primary(Actions& out, const ClientRequest& req) {
    ReplicaId prim = primary_of(view_, cfg_);
    if (prim == id_) return;
    out.push_back(SendAction{Identity::replica(prim), sign(RequestMsg{req})});
}

void ReplicaAutomaton::satisfy_client_expectation(Actions& out, Identity client) {
    if (!client.is_client) return;
    auto it = forwarded_pending_.find(client.index);
    if (it == forwarded_pending_.end()) return;
    forwarded_pending_.erase(it);
    out.push_back(CancelTimerAction{TimerId{TimerKind::ExpectProposalClient, client.index, 0}});
}

// A proposal for the client's transaction arrived, but the expectation is
// only satisfied once a round commits; give the primary a fresh window.
void ReplicaAutomaton::extend_client_expectation(Actions& out, Identity client) {
    if (!client.is_client) return;
    if (!forwarded_pending_.count(client.index)) return;
    out.push_back(SetTimerAction{TimerId{TimerKind::ExpectProposalClient, client.index, 0}, 4 * delta_for_view(view_)});
}

void ReplicaAutomaton::drain_propose_queue(Actions& out) {
    if (!is_primary() || !normal_case_active()) return;
    while (!propose_queue_.empty()) {
        // W bounds the prepared-but-uncommitted rounds a primary keeps open.
        if (next_propose_round_ - committed_prefix_ > RoundNo(cfg_.window)) break;
        DigestValue d = propose_queue_.front();
        propose_queue_.pop_front();
        auto it = pending_requests_.find(d);
        if (it == pending_requests_.end()) continue;
        if (std::optional<RoundNo> r = round_of_request(d); r && slots_.at(*r).cc) continue;
        propose_next(out, it->second);
    }
}

void ReplicaAutomaton::propose_next(Actions& out, const ClientRequest& req) {
    RoundNo rho = next_propose_round_++;
    Proposal p{view_, rho, req};
    Message propose = sign(ProposeMsg{p});
    out.push_back(BroadcastAction{propose});
    accept_proposal(out, p, propose.sig);
}

// ---------------------------------------------------------------------------
// Normal case: Propose / Prepare (Fig 2), linear Support/Certify (Fig 10)

void ReplicaAutomaton::handle_propose(Actions& out, const Message& msg) {
    const Proposal& p = msg.as<ProposeMsg>()->proposal;
    if (buffer_future(msg.sender, msg, p.view)) return;
    if (p.view < view_ || !normal_case_active()) return;
    if (msg.sender != Identity::replica(primary_of(p.view, cfg_))) return;
    if (msg.sender.index == id_) return;

    RoundSlot& s = slot(p.round);
    DigestValue d = request_digest(*auth_, p.request);

    // A second, conflicting proposal for the same slot is proof of failure.
    if (s.accepted && s.accepted_view == p.view) {
        DigestValue have = request_digest(*auth_, s.accepted->request);
        if (have == d) return;  // duplicate
        if (s.propose_sig && !equivocation_proofs_.count(p.view)) {
            SignedPropose a{primary_of(p.view, cfg_), *s.accepted, *s.propose_sig};
            SignedPropose b{primary_of(p.view, cfg_), p, msg.sig};
            equivocation_proofs_.emplace(p.view, std::make_pair(a, b));
            push_event(InternalEvent::Kind::EquivocationDetected, p.view, p.round, d);
        }
        detect_failure(out, p.view);
        return;
    }

    // Reproposal bookkeeping: a mismatch against the derived ledger is a
    // failure of the new view.
    if (auto it = expected_reproposals_.find(p.round); it != expected_reproposals_.end()) {
        if (!(it->second == d)) {
            push_event(InternalEvent::Kind::ReproposalMismatch, p.view, p.round, d);
            detect_failure(out, p.view);
            return;
        }
        expected_reproposals_.erase(it);
        out.push_back(CancelTimerAction{TimerId{TimerKind::ExpectRepropose, p.view, uint64_t(p.round)}});
    } else {
        if (p.round <= ledger_r_ || (s.cc && !s.cc->is_dummy())) return;  // stale slot
        if (p.round - committed_prefix_ > RoundNo(cfg_.window)) {
            if (window_deferred_proposes_.size() < 4 * size_t(cfg_.window)) window_deferred_proposes_.push_back(msg);
            return;
        }
    }

    accept_proposal(out, p, msg.sig);
}

void ReplicaAutomaton::accept_proposal(Actions& out, const Proposal& p, const std::optional<SignatureEvidence>& sig) {
    RoundSlot& s = slot(p.round);
    DigestValue d = request_digest(*auth_, p.request);

    s.accepted = p;
    s.accepted_view = p.view;
    s.propose_sig = sig;
    s.request = p.request;
    request_rounds_[d] = p.round;
    pending_requests_.erase(d);
    if (id_ == primary_of(p.view, cfg_)) proposed_requests_.insert(d);

    if (s.expect_round_timer_set) {
        s.expect_round_timer_set = false;
        out.push_back(CancelTimerAction{TimerId{TimerKind::ExpectProposalRound, uint64_t(p.round), 0}});
    }
    extend_client_expectation(out, p.request.client);

    if (cfg_.linear_mode) {
        Share share =
            auth_->threshold_share(ThresholdScheme::PrepareQuorum, id_, prepare_share_bytes(p.view, p.round, d));
        if (id_ == primary_of(p.view, cfg_)) {
            s.support_shares.emplace(id_, share);
            try_combine_support(out, p.round, p.view, d);
        } else {
            out.push_back(
                SendAction{Identity::replica(primary_of(p.view, cfg_)), sign(SupportMsg{p.view, p.round, d, share})});
        }
        return;
    }

    // Broadcast our Prepare and count ourselves toward the quorum. The
    // primary may fold its Prepare into the Propose it already sent.
    SignatureEvidence own = auth_->sign(Identity::replica(id_), prepare_sign_bytes(p.view, p.round, d, id_));
    bool merged = cfg_.merge_primary_prepare && id_ == primary_of(p.view, cfg_);
    if (!merged) out.push_back(BroadcastAction{sign(PrepareMsg{p.view, p.round, d})});
    auto& tally = s.prepares[{p.view, d}];
    bool seen = false;
    for (const auto& e : tally) seen |= e.signer == Identity::replica(id_);
    if (!seen) tally.push_back(own);
    try_form_pc(out, p.round, p.view, d);
}

void ReplicaAutomaton::handle_prepare(Actions& out, const Message& msg) {
    const PrepareMsg& m = *msg.as<PrepareMsg>();
    if (buffer_future(msg.sender, msg, m.view)) return;
    if (m.view < view_ || !normal_case_active()) return;
    if (msg.sender.index == id_) return;

    RoundSlot& s = slot(m.round);
    auto& tally = s.prepares[{m.view, m.req_digest}];
    for (const auto& e : tally)
        if (e.signer == msg.sender) return;  // idempotent
    tally.push_back(msg.sig);

    // f+1 Prepares without a Propose: the primary owes us a proposal.
    if (!s.accepted && !s.cc && m.round > committed_prefix_ && !s.expect_round_timer_set && m.view == view_) {
        std::set<Identity> senders;
        for (const auto& [key, sigs] : s.prepares)
            if (key.first == view_)
                for (const auto& e : sigs) senders.insert(e.signer);
        if (senders.size() >= cfg_.f_plus_1()) {
            s.expect_round_timer_set = true;
            out.push_back(SetTimerAction{TimerId{TimerKind::ExpectProposalRound, uint64_t(m.round), 0},
                                         4 * delta_for_view(view_)});
        }
    }

    try_form_pc(out, m.round, m.view, m.req_digest);
}

void ReplicaAutomaton::try_form_pc(Actions& out, RoundNo round, ViewNo view, const DigestValue& digest) {
    if (view != view_) return;
    RoundSlot& s = slot(round);
    if (!s.accepted || s.accepted_view != view) return;
    if (!(request_digest(*auth_, s.accepted->request) == digest)) return;
    if (s.pc && s.pc->view >= view) return;

    auto& tally = s.prepares[{view, digest}];
    if (tally.size() < cfg_.nf()) return;

    std::vector<SignatureEvidence> evidence(tally.begin(), tally.begin() + cfg_.nf());
    std::optional<ClientRequest> embedded;
    if (!cfg_.digest_mode) embedded = s.accepted->request;
    PreparedCertificate pc =
        PreparedCertificate::from_prepares(cfg_, *auth_, view, round, digest, embedded, std::move(evidence));
    store_pc(out, round, std::move(pc), s.accepted->request);
}

void ReplicaAutomaton::store_pc(Actions& out, RoundNo round, PreparedCertificate pc,
                                std::optional<ClientRequest> request) {
    RoundSlot& s = slot(round);
    if (s.executed && !(s.executed_digest == pc.req_digest)) return;  // never contradict a live execution
    if (s.pc && s.pc->view >= pc.view) {
        // Not a newer certificate, but it may still supply the request the
        // slot is missing (linear and digest-mode fetches).
        if (request && !s.request && s.pc->req_digest == pc.req_digest) {
            s.request = request;
            request_rounds_[s.pc->req_digest] = round;
            pending_requests_.erase(s.pc->req_digest);
            if (!s.executed) {
                try_execute_ready(out);
            } else {
                advance_check_commits(out);
                if (cfg_.linear_mode) advance_linear_check_commits(out);
            }
        }
        return;
    }
    ViewNo pc_view = pc.view;
    s.pc = std::move(pc);
    if (request) {
        s.request = request;
        request_rounds_[s.pc->req_digest] = round;
        pending_requests_.erase(s.pc->req_digest);
    }
    push_event(InternalEvent::Kind::PcStored, pc_view, round, s.pc->req_digest);

    if (s.executed) {
        // A kept execution re-prepared after a view change: re-inform with
        // the new view and resume the check-commit path there.
        if (s.informed_view != pc_view) emit_inform(out, round);
        advance_check_commits(out);
        if (cfg_.linear_mode) advance_linear_check_commits(out);
    } else {
        try_execute_ready(out);
    }
}

void ReplicaAutomaton::try_execute_ready(Actions& out) {
    while (true) {
        RoundNo rho = app_.applied_prefix() + 1;
        auto it = slots_.find(rho);
        if (it == slots_.end()) break;
        RoundSlot& s = it->second;
        if (!s.pc || s.executed || !s.request) break;
        s.result = app_.apply(rho, s.request->payload);
        s.executed = true;
        s.executed_digest = s.pc->req_digest;
        out.push_back(ExecutedAction{rho, s.result});
        emit_inform(out, rho);
        advance_check_commits(out);
        if (cfg_.linear_mode) advance_linear_check_commits(out);
    }
}

void ReplicaAutomaton::emit_inform(Actions& out, RoundNo round) {
    RoundSlot& s = slot(round);
    if (!s.pc || !s.executed || !s.request) return;
    InformMsg m{s.pc->req_digest, s.pc->view, round, s.result, {}};
    if (!cfg_.digest_mode && !cfg_.linear_mode) m.request = s.request;
    s.informed_view = s.pc->view;
    out.push_back(SendAction{s.request->client, sign(m)});
    // The linear commit completes only when later rounds rotate through
    // non-faulty aggregators, so committing is not this primary's burden;
    // certify-and-execute settles the expectation.
    if (cfg_.linear_mode) satisfy_client_expectation(out, s.request->client);
}

// ---------------------------------------------------------------------------
// Check-commit (Fig 5)

void ReplicaAutomaton::advance_check_commits(Actions& out) {
    if (cfg_.linear_mode || !normal_case_active()) return;
    RoundNo rho = committed_prefix_ + 1;
    auto it = slots_.find(rho);
    if (it == slots_.end()) return;
    RoundSlot& s = it->second;
    if (!s.pc || !s.executed) return;
    if (s.pc->view != view_) return;  // executed under an older view: suppressed
    if (s.check_commit_view != view_) {
        s.check_commit_view = view_;
        DigestValue d = s.pc->req_digest;
        std::optional<PreparedCertificate> carried;
        if (!cfg_.digest_mode) carried = s.pc;
        Message msg = sign(CheckCommitMsg{view_, rho, d, carried});
        out.push_back(BroadcastAction{msg});
        auto key = std::make_pair(view_, d);
        auto choice = s.cc_sender_choice.find(id_);
        if (choice == s.cc_sender_choice.end() || choice->second.first < view_) {
            s.cc_sender_choice[id_] = key;
            s.cc_tally[key].push_back(CheckCommitEvidence{id_, msg.sig, carried});
        }
    }
    try_form_cc(out, rho);
}

void ReplicaAutomaton::handle_check_commit(Actions& out, const Message& msg) {
    const CheckCommitMsg& m = *msg.as<CheckCommitMsg>();
    if (msg.sender.index == id_) return;
    if (m.view > view_) {
        // f+1 distinct check-commits for a future round prove that commit
        // certificates exist for everything below it; recover them by query
        // even while stranded in an old view.
        auto& senders = future_cc_senders_[m.round];
        senders.insert(msg.sender.index);
        if (senders.size() >= cfg_.f_plus_1() && m.round > committed_prefix_) {
            for (RoundNo rho = committed_prefix_ + 1; rho <= m.round; ++rho) query_needed_[rho] = true;
            active_query_broadcast_ = true;
            advance_query(out);
        }
        buffer_future(msg.sender, msg, m.view);
        return;
    }
    if (m.view < view_ || !normal_case_active()) return;

    RoundSlot& s = slot(m.round);
    ReplicaId sender = msg.sender.index;
    auto key = std::make_pair(m.view, m.req_digest);
    auto choice = s.cc_sender_choice.find(sender);
    if (choice != s.cc_sender_choice.end()) {
        // Within a view, a sender's first CheckCommit wins; a later view
        // legitimately replaces it.
        if (choice->second.first == m.view && !(choice->second.second == m.req_digest)) return;
        if (choice->second.first >= m.view) {
            if (m.pc && (!s.pc || s.pc->view < m.view)) {
                push_event(InternalEvent::Kind::Adopted, m.view, m.round, m.req_digest);
                store_pc(out, m.round, *m.pc, m.pc->request);
            }
            try_form_cc(out, m.round);
            return;
        }
    }
    s.cc_sender_choice[sender] = key;
    s.cc_tally[key].push_back(CheckCommitEvidence{sender, msg.sig, m.pc});

    // f+1 distinct check-commits for a round far beyond our prefix prove
    // commit certificates exist for every round below it: recover by query.
    if (m.round > committed_prefix_ + 1) {
        std::set<ReplicaId> senders;
        for (const auto& [k, entries] : s.cc_tally)
            if (k.first == view_)
                for (const auto& e : entries) senders.insert(e.sender);
        if (senders.size() >= cfg_.f_plus_1()) {
            for (RoundNo rho = committed_prefix_ + 1; rho < m.round; ++rho) query_needed_[rho] = true;
            active_query_broadcast_ = true;
            advance_query(out);
        }
    }

    // Dark-replica recovery: a carried certificate is enough to prepare and
    // execute; in digest mode f+1 identical messages trigger a fetch.
    if (m.pc) {
        if (!s.pc || s.pc->view < m.view) {
            push_event(InternalEvent::Kind::Adopted, m.view, m.round, m.req_digest);
            store_pc(out, m.round, *m.pc, m.pc->request);
        }
    } else if (!s.pc && !s.fetch_started && m.round > committed_prefix_) {
        if (s.cc_tally[key].size() >= cfg_.f_plus_1()) {
            s.fetch_started = true;
            start_query(out, m.round, true);
        }
    }

    try_form_cc(out, m.round);
}

void ReplicaAutomaton::try_form_cc(Actions& out, RoundNo round) {
    if (round != committed_prefix_ + 1) return;  // strictly ordered storage
    auto it = slots_.find(round);
    if (it == slots_.end()) return;
    RoundSlot& s = it->second;
    if (s.cc || !s.pc || !s.executed) return;
    if (s.pc->view != view_ || !normal_case_active()) return;
    DigestValue d = s.pc->req_digest;
    auto tit = s.cc_tally.find({view_, d});
    if (tit == s.cc_tally.end() || tit->second.size() < cfg_.nf()) return;
    store_standard_cc(out, round, view_, d);
}

void ReplicaAutomaton::store_standard_cc(Actions& out, RoundNo round, ViewNo view, const DigestValue& digest) {
    RoundSlot& s = slot(round);
    auto& tally = s.cc_tally[{view, digest}];
    std::vector<CheckCommitEvidence> entries(tally.begin(), tally.begin() + cfg_.nf());
    std::optional<ClientRequest> embedded;
    if (!cfg_.digest_mode && s.request) embedded = s.request;
    CommitCertificate cc = CommitCertificate::from_check_commits(cfg_, *auth_, view, round, digest, embedded,
                                                                 std::move(entries), cfg_.digest_mode);
    s.cc = std::make_shared<CommitCertificate>(std::move(cc));
    committed_prefix_ = round;
    note_decided(out, round);
    after_commit_advance(out);
}

void ReplicaAutomaton::note_decided(Actions& out, RoundNo round) {
    RoundSlot& s = slot(round);
    push_event(InternalEvent::Kind::CcStored, view_, round, s.executed_digest);
    if (s.expect_round_timer_set) {
        s.expect_round_timer_set = false;
        out.push_back(CancelTimerAction{TimerId{TimerKind::ExpectProposalRound, uint64_t(round), 0}});
    }
    if (s.request) satisfy_client_expectation(out, s.request->client);
    // Progress in this view: freeze the timeout estimate here.
    if (delta_anchor_view_ < view_) {
        delta_anchor_value_ = delta_for_view(view_);
        delta_anchor_view_ = view_;
    }
}

void ReplicaAutomaton::after_commit_advance(Actions& out) {
    advance_query(out);
    advance_check_commits(out);
    if (cfg_.linear_mode) {
        advance_linear_check_commits(out);
        try_pending_certify_cc(out);
    } else {
        try_form_cc(out, committed_prefix_ + 1);
    }
    if (!window_deferred_proposes_.empty()) {
        std::vector<Message> deferred = std::exchange(window_deferred_proposes_, {});
        for (const Message& msg : deferred) {
            Actions sub = on_message(msg.sender, msg, now_);
            out.insert(out.end(), sub.begin(), sub.end());
        }
    }
    drain_propose_queue(out);
}

// ---------------------------------------------------------------------------
// Linear prepare path (Fig 10)

void ReplicaAutomaton::handle_support(Actions& out, const Message& msg) {
    const SupportMsg& m = *msg.as<SupportMsg>();
    if (buffer_future(msg.sender, msg, m.view)) return;
    if (m.view < view_ || !normal_case_active()) return;
    if (primary_of(m.view, cfg_) != id_ || msg.sender.index == id_) return;

    RoundSlot& s = slot(m.round);
    if (!s.accepted || s.accepted_view != m.view) return;
    if (!(request_digest(*auth_, s.accepted->request) == m.req_digest)) return;
    s.support_shares.emplace(msg.sender.index, m.share);
    try_combine_support(out, m.round, m.view, m.req_digest);
}

void ReplicaAutomaton::try_combine_support(Actions& out, RoundNo round, ViewNo view, const DigestValue& digest) {
    RoundSlot& s = slot(round);
    if (s.certify_sent || s.support_shares.size() < cfg_.nf()) return;
    std::vector<Share> shares;
    for (const auto& [id, share] : s.support_shares) shares.push_back(share);
    shares.resize(cfg_.nf(), shares.front());
    ThresholdSig sig = auth_->threshold_combine(ThresholdScheme::PrepareQuorum, shares);
    PreparedCertificate pc = PreparedCertificate::from_threshold(cfg_, *auth_, view, round, digest, sig);
    s.certify_sent = true;
    out.push_back(BroadcastAction{sign(CertifyMsg{pc})});
    store_pc(out, round, std::move(pc), s.accepted ? std::optional<ClientRequest>(s.accepted->request) : std::nullopt);
}

void ReplicaAutomaton::handle_certify(Actions& out, const Message& msg) {
    const PreparedCertificate& pc = msg.as<CertifyMsg>()->pc;
    if (buffer_future(msg.sender, msg, pc.view)) return;
    if (pc.view < view_ || !normal_case_active()) return;
    if (msg.sender != Identity::replica(primary_of(pc.view, cfg_))) return;

    RoundSlot& s = slot(pc.round);
    std::optional<ClientRequest> req = s.request;
    if (req && !(request_digest(*auth_, *req) == pc.req_digest)) req.reset();
    store_pc(out, pc.round, pc, req);
    RoundSlot& after = slot(pc.round);
    if (!after.request && !after.fetch_started) {
        // Certified without the proposal itself: recover the request.
        after.fetch_started = true;
        start_query(out, pc.round, true);
    }
}

// ---------------------------------------------------------------------------
// Linear check-commit (Fig 11)

std::optional<DigestValue> ReplicaAutomaton::local_window_digest(RoundNo round) const {
    std::vector<PreparedCertificate> pre_genesis;
    std::vector<const PreparedCertificate*> window;
    for (RoundNo r = round - RoundNo(cfg_.n) + 1; r <= round; ++r) {
        if (r < 1) continue;
        auto it = slots_.find(r);
        if (it == slots_.end() || !it->second.pc) return std::nullopt;
    }
    pre_genesis.reserve(cfg_.n);
    for (RoundNo r = round - RoundNo(cfg_.n) + 1; r <= round; ++r) {
        if (r < 1) {
            pre_genesis.push_back(PreparedCertificate::pre_genesis(r));
            window.push_back(&pre_genesis.back());
        } else {
            window.push_back(&slots_.find(r)->second.pc.value());
        }
    }
    return window_digest_over(*auth_, round, window);
}

void ReplicaAutomaton::advance_linear_check_commits(Actions& out) {
    if (!cfg_.linear_mode || !normal_case_active()) return;
    RoundNo lo = committed_prefix_ + 1;
    RoundNo hi = std::min(app_.applied_prefix(), committed_prefix_ + RoundNo(cfg_.n));
    for (RoundNo rho = lo; rho <= hi; ++rho) {
        RoundSlot& s = slot(rho);
        if (s.support_cc_sent || !s.pc || !s.executed) continue;
        if (s.pc->view != view_) continue;
        std::optional<DigestValue> d = local_window_digest(rho);
        if (!d) continue;  // missing window certificates; recovery will supply them
        s.support_cc_sent = true;
        Bytes covered = support_cc_share_bytes(rho, *d);
        SupportCCMsg m{rho, *d, auth_->threshold_share(ThresholdScheme::PrepareQuorum, id_, covered),
                       auth_->threshold_share(ThresholdScheme::Recovery, id_, covered)};
        ReplicaId agg = aggregator_of(rho, cfg_);
        if (agg == id_) {
            RoundSlot& as = slot(rho);
            auto& by_sender = as.support_cc_shares[*d];
            if (by_sender.emplace(id_, m).second) as.support_cc_order.push_back(id_);
            aggregator_check(out, rho);
        } else {
            out.push_back(SendAction{Identity::replica(agg), sign(m)});
        }
    }
}

void ReplicaAutomaton::handle_support_cc(Actions& out, const Message& msg) {
    const SupportCCMsg& m = *msg.as<SupportCCMsg>();
    if (aggregator_of(m.round, cfg_) != id_ || msg.sender.index == id_) return;
    RoundSlot& s = slot(m.round);
    auto& by_sender = s.support_cc_shares[m.window_digest];
    if (by_sender.emplace(msg.sender.index, m).second) s.support_cc_order.push_back(msg.sender.index);
    aggregator_check(out, m.round);
}

void ReplicaAutomaton::aggregator_check(Actions& out, RoundNo round) {
    RoundSlot& s = slot(round);
    for (auto& [digest, by_sender] : s.support_cc_shares) {
        if (cfg_.emit_recovery_cc && !s.recovery_cc_sent && by_sender.size() >= cfg_.f_plus_1()) {
            std::vector<Share> shares;
            for (const auto& [id, m] : by_sender) shares.push_back(m.share_rec);
            shares.resize(cfg_.f_plus_1(), shares.front());
            ThresholdSig sig = auth_->threshold_combine(ThresholdScheme::Recovery, shares);
            s.recovery_cc_sent = true;
            RecoveryCCMsg rm{round, digest, RecoveryCertificate{round, digest, sig}};
            out.push_back(BroadcastAction{sign(rm)});
            // The aggregator itself may be in the dark for this window.
            std::optional<DigestValue> local = local_window_digest(round);
            if (!local || !(*local == digest)) start_linear_fetch(out, round, digest);
        }
        if (!s.certify_cc_sent && by_sender.size() >= cfg_.nf()) {
            std::vector<Share> shares;
            for (const auto& [id, m] : by_sender) shares.push_back(m.share_nf);
            shares.resize(cfg_.nf(), shares.front());
            ThresholdSig sig = auth_->threshold_combine(ThresholdScheme::PrepareQuorum, shares);
            CommitCertificate cc = CommitCertificate::linear(cfg_, *auth_, round, digest, sig);
            s.certify_cc_sent = true;
            out.push_back(BroadcastAction{sign(CertifyCCMsg{round, digest, cc})});
            pending_certify_cc_.emplace(round, CertifyCCMsg{round, digest, cc});
            try_pending_certify_cc(out);
        }
    }
}

void ReplicaAutomaton::handle_recovery_cc(Actions& out, const Message& msg) {
    const RecoveryCCMsg& m = *msg.as<RecoveryCCMsg>();
    if (msg.sender != Identity::replica(aggregator_of(m.round, cfg_))) return;
    std::optional<DigestValue> local = local_window_digest(m.round);
    if (local && *local == m.window_digest) return;  // nothing missing
    start_linear_fetch(out, m.round, m.window_digest);
}

void ReplicaAutomaton::handle_certify_cc(Actions& out, const Message& msg) {
    const CertifyCCMsg& m = *msg.as<CertifyCCMsg>();
    if (msg.sender != Identity::replica(aggregator_of(m.round, cfg_))) return;
    ingest_linear_cc(out, m.cc);
}

void ReplicaAutomaton::ingest_linear_cc(Actions& out, const CommitCertificate& cc) {
    if (cc.round <= committed_prefix_) return;
    pending_certify_cc_.emplace(cc.round, CertifyCCMsg{cc.round, cc.window_digest, cc});
    // Coverage gap below the certified window: those rounds were decided
    // earlier, recover them through the query protocol.
    RoundNo window_from = cc.covers_from(cfg_);
    if (committed_prefix_ < window_from - 1) {
        for (RoundNo rho = committed_prefix_ + 1; rho < window_from; ++rho) query_needed_[rho] = true;
        active_query_broadcast_ = true;
        advance_query(out);
    }
    std::optional<DigestValue> local = local_window_digest(cc.round);
    if (!local || !(*local == cc.window_digest)) start_linear_fetch(out, cc.round, cc.window_digest);
    try_pending_certify_cc(out);
}

void ReplicaAutomaton::store_linear_cc(Actions& out, const CommitCertificate& cc) {
    if (cc.round <= committed_prefix_) return;
    if (committed_prefix_ < cc.covers_from(cfg_) - 1) return;  // coverage gap
    if (app_.applied_prefix() < cc.round) return;              // contents not executed yet
    std::optional<DigestValue> local = local_window_digest(cc.round);
    if (!local || !(*local == cc.window_digest)) return;

    auto shared = std::make_shared<CommitCertificate>(cc);
    RoundNo from = committed_prefix_ + 1;
    committed_prefix_ = cc.round;
    for (RoundNo r = from; r <= cc.round; ++r) {
        slot(r).cc = shared;
        note_decided(out, r);
    }
    after_commit_advance(out);
}

void ReplicaAutomaton::try_pending_certify_cc(Actions& out) {
    bool progressed = true;
    while (progressed) {
        progressed = false;
        for (auto it = pending_certify_cc_.begin(); it != pending_certify_cc_.end();) {
            if (it->first <= committed_prefix_) {
                it = pending_certify_cc_.erase(it);
                continue;
            }
            RoundNo before = committed_prefix_;
            store_linear_cc(out, it->second.cc);
            if (committed_prefix_ > before) {
                progressed = true;
                break;  // map mutated via after_commit_advance; restart scan
            }
            ++it;
        }
    }
}

void ReplicaAutomaton::start_linear_fetch(Actions& out, RoundNo round, const DigestValue& want_digest) {
    (void)want_digest;
    // Fetch the window rounds we cannot reproduce, aimed at the aggregator
    // (which may relay to its SupportCC senders).
    for (RoundNo r = std::max<RoundNo>(1, round - RoundNo(cfg_.n) + 1); r <= round; ++r) {
        RoundSlot& s = slot(r);
        if (s.pc && s.request) continue;
        if (s.fetch_started) continue;
        s.fetch_started = true;
        query_needed_.emplace(r, false);
    }
    active_query_broadcast_ = false;
    advance_query(out);
}

// ---------------------------------------------------------------------------
// Query protocol (Fig 8) and PC fetches

void ReplicaAutomaton::start_query(Actions& out, RoundNo round, bool broadcast) {
    query_needed_.emplace(round, false);
    active_query_broadcast_ = broadcast;
    advance_query(out);
}

// Queries the round after our committed prefix; used while failure-detected
// so a replica cut off during a disruption can recover decisions made
// without it. Chains forward as responses land.
void ReplicaAutomaton::pull_committed_chain(Actions& out) {
    query_needed_[committed_prefix_ + 1] = true;
    active_query_broadcast_ = true;
    advance_query(out);
}

void ReplicaAutomaton::advance_query(Actions& out) {
    // Resolve one round at a time, lowest first. A round whose commit
    // evidence already sits in a pending linear certificate is resolved for
    // query purposes: what is missing is content, fetched under its own round.
    auto pending_covers = [&](RoundNo r) {
        for (const auto& [round, msg] : pending_certify_cc_)
            if (msg.cc.covers_from(cfg_) <= r && r <= round) return true;
        return false;
    };
    for (auto it = query_needed_.begin(); it != query_needed_.end();) {
        auto sit = slots_.find(it->first);
        bool have_content = sit != slots_.end() && sit->second.pc && sit->second.request;
        bool resolved = it->first <= committed_prefix_ || (!it->second && have_content) ||
                        (it->second && have_content && pending_covers(it->first));
        if (resolved) {
            if (active_query_ && *active_query_ == it->first) {
                out.push_back(CancelTimerAction{TimerId{TimerKind::QueryRetry, uint64_t(it->first), 0}});
                active_query_.reset();
            }
            it = query_needed_.erase(it);
        } else {
            ++it;
        }
    }
    if (query_needed_.empty() || active_query_) return;
    RoundNo next = query_needed_.begin()->first;
    active_query_ = next;
    push_event(InternalEvent::Kind::QueryStarted, view_, next);
    Message q = sign(QueryCCMsg{next});
    if (cfg_.linear_mode && aggregator_of(next, cfg_) != id_ && !active_query_broadcast_)
        out.push_back(SendAction{Identity::replica(aggregator_of(next, cfg_)), q});
    else
        out.push_back(BroadcastAction{q});
    out.push_back(SetTimerAction{TimerId{TimerKind::QueryRetry, uint64_t(next), 0}, 2 * delta_for_view(view_)});
}

void ReplicaAutomaton::handle_query_cc(Actions& out, const Message& msg) {
    RoundNo rho = msg.as<QueryCCMsg>()->round;
    if (msg.sender.is_client || msg.sender.index == id_) return;
    auto it = slots_.find(rho);
    if (it == slots_.end() || !it->second.pc || !it->second.request) {
        // Linear two-hop: an aggregator relays the query to its SupportCC
        // senders and remembers who asked.
        if (cfg_.linear_mode && aggregator_of(rho, cfg_) == id_) {
            const auto& order = slot(rho).support_cc_order;
            if (!order.empty() && fetch_requesters_[rho].insert(msg.sender.index).second) {
                size_t relay = std::min<size_t>(order.size(), cfg_.f_plus_1());
                for (size_t i = 0; i < relay; ++i)
                    if (order[i] != id_ && order[i] != msg.sender.index)
                        out.push_back(SendAction{Identity::replica(order[i]), sign(QueryCCMsg{rho})});
            }
        }
        return;
    }
    RoundSlot& s = it->second;

    bool committed = rho <= committed_prefix_ && s.cc != nullptr;
    RespondCCMsg m{rho, *s.pc, {}, {}};
    if (committed) {
        m.cc = *s.cc;
    } else if (!cfg_.digest_mode && !cfg_.linear_mode) {
        return;  // standard mode answers only with the full pair (Fig 8)
    }
    if (cfg_.digest_mode || cfg_.linear_mode) m.request = s.request;
    out.push_back(SendAction{msg.sender, sign(m)});
}

void ReplicaAutomaton::handle_respond_cc(Actions& out, const Message& msg) {
    const RespondCCMsg& m = *msg.as<RespondCCMsg>();
    if (msg.sender.index == id_) return;

    // A newer-view certificate for different content means our uncommitted
    // speculation for this round (and everything above) lost; roll it back
    // before adopting.
    {
        RoundSlot& cur = slot(m.round);
        bool newer = !cur.pc || m.pc.view > cur.pc->view || m.cc.has_value();
        if (cur.executed && m.round > committed_prefix_ && newer && !(cur.executed_digest == m.pc.req_digest)) {
            app_.rollback_to(m.round - 1);
            out.push_back(RolledBackAction{m.round - 1});
            for (auto it = slots_.upper_bound(m.round - 1); it != slots_.end(); ++it) it->second = RoundSlot{};
        }
    }

    RoundSlot& s = slot(m.round);
    std::optional<ClientRequest> req = m.request;
    if (!req && m.pc.request) req = m.pc.request;
    if (!req && s.request && request_digest(*auth_, *s.request) == m.pc.req_digest) req = s.request;

    if (req && (!s.pc || s.pc->view < m.pc.view || !s.request)) {
        push_event(InternalEvent::Kind::Adopted, m.pc.view, m.round, m.pc.req_digest);
        store_pc(out, m.round, m.pc, req);
        slot(m.round).fetch_started = false;
    }

    // Aggregator relay: satisfy replicas that asked us for this round.
    if (auto fit = fetch_requesters_.find(m.round); fit != fetch_requesters_.end()) {
        RoundSlot& cur = slot(m.round);
        if (cur.pc && cur.request) {
            RespondCCMsg relay{m.round, *cur.pc, {}, {}};
            if (m.cc) relay.cc = m.cc;
            if (cfg_.digest_mode || cfg_.linear_mode) relay.request = cur.request;
            for (ReplicaId r : fit->second)
                if (r != id_) out.push_back(SendAction{Identity::replica(r), sign(relay)});
            fetch_requesters_.erase(fit);
        }
    }

    if (m.cc && m.round > committed_prefix_) {
        if (m.cc->kind == CommitCertificate::Kind::Standard && m.round == committed_prefix_ + 1) {
            RoundSlot& cur = slot(m.round);
            if (cur.executed && cur.executed_digest == m.cc->req_digest) {
                cur.cc = std::make_shared<CommitCertificate>(*m.cc);
                committed_prefix_ = m.round;
                note_decided(out, m.round);
                after_commit_advance(out);
            }
        } else if (m.cc->kind == CommitCertificate::Kind::Linear) {
            ingest_linear_cc(out, *m.cc);
        }
    }
    advance_query(out);
}

// ---------------------------------------------------------------------------
// View changes (Fig 7)

void ReplicaAutomaton::detect_failure(Actions& out, ViewNo v) {
    if (v < failure_target()) return;
    if (failures_detected_.count(v)) return;
    failures_detected_.insert(v);
    push_event(InternalEvent::Kind::FailureDetected, v, 0);

    FailureMsg m{v, {}};
    if (auto it = equivocation_proofs_.find(v); it != equivocation_proofs_.end())
        m.equivocation = {it->second.first, it->second.second};
    out.push_back(BroadcastAction{sign(m)});
    failure_senders_[v].insert(id_);
    out.push_back(SetTimerAction{TimerId{TimerKind::FailureRebroadcast, v, 0}, delta_for_view(v)});
    if (stage_ == Stage::Normal && v == view_) stage_ = Stage::FailureDetected;
    check_failure_quorums(out);
}

void ReplicaAutomaton::handle_failure(Actions& out, const Message& msg) {
    const FailureMsg& m = *msg.as<FailureMsg>();
    if (msg.sender.index == id_) return;
    if (m.view < failure_target()) return;
    failure_senders_[m.view].insert(msg.sender.index);
    // A verified equivocation proof is direct evidence of failure.
    if (!m.equivocation.empty() && m.view >= view_) {
        if (!equivocation_proofs_.count(m.view))
            equivocation_proofs_.emplace(m.view, std::make_pair(m.equivocation[0], m.equivocation[1]));
        detect_failure(out, m.view);
    }
    check_failure_quorums(out);
}

void ReplicaAutomaton::check_failure_quorums(Actions& out) {
    ViewNo target = failure_target();
    std::set<ReplicaId> senders;
    for (const auto& [v, who] : failure_senders_)
        if (v >= target) senders.insert(who.begin(), who.end());

    if (senders.size() >= cfg_.f_plus_1() && !failures_detected_.count(target)) detect_failure(out, target);
    if (senders.size() >= cfg_.nf() && proposal_stage_done_ <= target) enter_proposal_stage(out, target);
}

ViewStateMsg ReplicaAutomaton::build_view_state(ViewNo v) const {
    ViewStateMsg vs;
    vs.view = v;
    auto cit = slots_.find(committed_prefix_);
    vs.last_cc = (committed_prefix_ >= 1 && cit != slots_.end() && cit->second.cc) ? *cit->second.cc
                                                                                   : CommitCertificate::dummy();
    std::set<DigestValue> needed;
    if (cfg_.linear_mode && vs.last_cc.kind == CommitCertificate::Kind::Linear) {
        for (RoundNo r = vs.last_cc.covers_from(cfg_); r <= vs.last_cc.covers_to(); ++r) {
            if (r < 1) {
                vs.cc_window_pcs.push_back(PreparedCertificate::pre_genesis(r));
            } else {
                const RoundSlot& s = slots_.at(r);
                vs.cc_window_pcs.push_back(*s.pc);
                needed.insert(s.pc->req_digest);
            }
        }
    }
    for (RoundNo r = committed_prefix_ + 1; r <= app_.applied_prefix(); ++r) {
        auto it = slots_.find(r);
        if (it == slots_.end() || !it->second.pc || !it->second.executed) break;
        vs.executed_tail.push_back(*it->second.pc);
        needed.insert(it->second.pc->req_digest);
    }
    if (vs.last_cc.kind == CommitCertificate::Kind::Standard && !vs.last_cc.request)
        needed.insert(vs.last_cc.req_digest);
    if (cfg_.digest_mode || cfg_.linear_mode) {
        for (const DigestValue& d : needed) {
            if (auto it = request_rounds_.find(d); it != request_rounds_.end()) {
                auto sit = slots_.find(it->second);
                if (sit != slots_.end() && sit->second.request) vs.request_table.push_back(*sit->second.request);
            }
        }
    }
    return vs;
}

void ReplicaAutomaton::enter_proposal_stage(Actions& out, ViewNo v) {
    if (proposal_stage_done_ > v) return;
    proposal_stage_done_ = v + 1;
    stage_ = Stage::NewViewProposal;
    push_event(InternalEvent::Kind::ProposalStageEntered, v, 0);
    out.push_back(CancelTimerAction{TimerId{TimerKind::FailureRebroadcast, v, 0}});

    ViewStateMsg vs = build_view_state(v);
    Message msg = sign(vs);
    SignedViewState sv{id_, vs, msg.sig};
    ReplicaId next = primary_of(v + 1, cfg_);

    stage_ = Stage::AwaitingNewView;
    awaited_view_ = v + 1;
    out.push_back(SetTimerAction{TimerId{TimerKind::AwaitNewView, v + 1, 0}, 4 * delta_for_view(v + 1)});

    if (next == id_)
        record_view_state(out, sv, v);
    else
        out.push_back(SendAction{Identity::replica(next), msg});
}

void ReplicaAutomaton::handle_view_state(Actions& out, const Message& msg) {
    const ViewStateMsg& m = *msg.as<ViewStateMsg>();
    if (primary_of(m.view + 1, cfg_) != id_) return;
    if (m.view + 1 <= view_) return;
    if (msg.sender.index == id_) return;
    record_view_state(out, SignedViewState{msg.sender.index, m, msg.sig}, m.view);
}

void ReplicaAutomaton::record_view_state(Actions& out, const SignedViewState& sv, ViewNo for_view) {
    if (collecting_for_view_ != for_view) {
        collecting_for_view_ = for_view;
        collected_view_states_.clear();
    }
    for (const auto& have : collected_view_states_)
        if (have.sender == sv.sender) return;
    if (collected_view_states_.size() >= cfg_.nf()) return;
    collected_view_states_.push_back(sv);
    if (collected_view_states_.size() < cfg_.nf()) return;
    if (new_view_sent_.count(for_view + 1)) return;
    new_view_sent_.insert(for_view + 1);

    NewViewMsg n{for_view + 1, collected_view_states_};
    out.push_back(BroadcastAction{sign(n)});
    accept_new_view(out, n);
}

void ReplicaAutomaton::handle_new_view(Actions& out, const Message& msg) {
    const NewViewMsg& n = *msg.as<NewViewMsg>();
    if (n.new_view <= view_) return;
    if (msg.sender != Identity::replica(primary_of(n.new_view, cfg_))) return;
    accept_new_view(out, n);
}

void ReplicaAutomaton::accept_new_view(Actions& out, const NewViewMsg& n) {
    std::optional<NewViewLedger> led = derive_ledger(n, cfg_, *auth_);
    if (!led) {
        detect_failure(out, n.new_view);
        return;
    }

    ViewNo v = n.new_view;
    if (stage_ == Stage::AwaitingNewView)
        out.push_back(CancelTimerAction{TimerId{TimerKind::AwaitNewView, awaited_view_, 0}});
    for (const auto& entry : expected_reproposals_)
        out.push_back(CancelTimerAction{TimerId{TimerKind::ExpectRepropose, view_, uint64_t(entry.first)}});
    expected_reproposals_.clear();

    // Update rule 1: roll back executions not included in L(n). Rollback is
    // suffix-contiguous, so find the lowest round that must go.
    RoundNo lowest_bad = 0;
    for (RoundNo r = committed_prefix_ + 1; r <= app_.applied_prefix(); ++r) {
        const RoundSlot& s = slots_.at(r);
        bool keep;
        if (r <= led->r_cc) {
            auto it = led->committed.find(r);
            keep = it != led->committed.end() && it->second.first == s.executed_digest;
        } else if (r <= led->r) {
            keep = request_digest(*auth_, led->tail.at(r)) == s.executed_digest;
        } else {
            keep = false;
        }
        if (!keep) {
            lowest_bad = r;
            break;
        }
    }
    if (lowest_bad != 0) {
        app_.rollback_to(lowest_bad - 1);
        out.push_back(RolledBackAction{lowest_bad - 1});
        for (auto it = slots_.upper_bound(lowest_bad - 1); it != slots_.end(); ++it) it->second = RoundSlot{};
    }

    // Drop stale normal-case state: a slot above the committed prefix only
    // survives if L(n) vouches for the request its certificate names.
    // Everything else (including prepared-but-unexecuted proposals beyond
    // r(n)) was not preserved by the view change.
    for (auto& [round, s] : slots_) {
        if (round <= committed_prefix_ || round == 0) continue;
        std::optional<DigestValue> want;
        if (round <= led->r_cc) {
            auto it = led->committed.find(round);
            if (it != led->committed.end()) want = it->second.first;
        } else if (round <= led->r) {
            want = request_digest(*auth_, led->tail.at(round));
        }
        bool keep_slot = want && s.pc && s.pc->req_digest == *want;
        if (!keep_slot) s = RoundSlot{};
    }

    // Enter the view.
    view_ = v;
    stage_ = Stage::Normal;
    awaited_view_ = 0;
    ledger_r_ = led->r;
    next_propose_round_ = led->r + 1;
    proposed_requests_.clear();
    push_event(InternalEvent::Kind::ViewEntered, v, led->r);
    for (auto it = failure_senders_.begin(); it != failure_senders_.end();)
        it = it->first < v ? failure_senders_.erase(it) : ++it;

    // Update rule 2: recover missing commit certificates via queries.
    for (RoundNo r = committed_prefix_ + 1; r <= led->r_cc; ++r) {
        auto cit = led->committed.find(r);
        if (cit != led->committed.end() && cit->second.second) {
            RoundSlot& s = slot(r);
            if (!s.request) s.request = cit->second.second;  // lets a response execute immediately
        }
        query_needed_[r] = true;
    }
    active_query_broadcast_ = true;
    advance_query(out);

    // Update rule 3: expect reproposals for (r_cc, r] in the new view.
    bool self_primary = primary_of(v, cfg_) == id_;
    for (auto& [round, req] : led->tail) {
        if (round <= committed_prefix_) continue;
        DigestValue d = request_digest(*auth_, req);
        if (self_primary) {
            Proposal p{v, round, req};
            Message propose = sign(ProposeMsg{p});
            out.push_back(BroadcastAction{propose});
            accept_proposal(out, p, propose.sig);
        } else {
            expected_reproposals_[round] = d;
            out.push_back(
                SetTimerAction{TimerId{TimerKind::ExpectRepropose, v, uint64_t(round)}, 4 * delta_for_view(v)});
        }
    }

    // Request forwarding moves to the new primary.
    std::vector<ClientRequest> pending;
    for (const auto& [client, digest] : forwarded_pending_) {
        auto it = pending_requests_.find(digest);
        if (it != pending_requests_.end()) pending.push_back(it->second);
        out.push_back(CancelTimerAction{TimerId{TimerKind::ExpectProposalClient, client, 0}});
    }
    forwarded_pending_.clear();
    for (const ClientRequest& req : pending) {
        if (self_primary) {
            handle_request(out, Identity::replica(id_), req);
        } else {
            forwarded_pending_[req.client.index] = request_digest(*auth_, req);
            forward_to_primary(out, req);
            out.push_back(
                SetTimerAction{TimerId{TimerKind::ExpectProposalClient, req.client.index, 0}, 4 * delta_for_view(v)});
        }
    }
    if (self_primary) drain_propose_queue(out);

    drain_buffered(out);
    advance_check_commits(out);
    if (cfg_.linear_mode) {
        advance_linear_check_commits(out);
        try_pending_certify_cc(out);
    }
}

// ---------------------------------------------------------------------------
// Timers

std::vector<Action> ReplicaAutomaton::on_timer(const TimerId& timer, SimTime now) {
    now_ = now;
    Actions out;
    switch (timer.kind) {
        case TimerKind::ExpectProposalClient: {
            auto it = forwarded_pending_.find(uint32_t(timer.a));
            if (it == forwarded_pending_.end()) break;
            forwarded_pending_.erase(it);
            detect_failure(out, view_);
            pull_committed_chain(out);
            break;
        }
        case TimerKind::ExpectProposalRound: {
            auto it = slots_.find(RoundNo(timer.a));
            if (it == slots_.end() || !it->second.expect_round_timer_set) break;
            it->second.expect_round_timer_set = false;
            if (RoundNo(timer.a) <= committed_prefix_) break;
            detect_failure(out, view_);
            pull_committed_chain(out);
            break;
        }
        case TimerKind::ExpectRepropose: {
            if (timer.a != view_) break;
            if (!expected_reproposals_.count(RoundNo(timer.b))) break;
            detect_failure(out, view_);
            break;
        }
        case TimerKind::AwaitNewView: {
            if (stage_ != Stage::AwaitingNewView || awaited_view_ != timer.a) break;
            detect_failure(out, ViewNo(timer.a));
            break;
        }
        case TimerKind::FailureRebroadcast: {
            ViewNo v = ViewNo(timer.a);
            if (proposal_stage_done_ > v) break;  // proposal stage reached; stop
            if (!failures_detected_.count(v)) break;
            FailureMsg m{v, {}};
            if (auto it = equivocation_proofs_.find(v); it != equivocation_proofs_.end())
                m.equivocation = {it->second.first, it->second.second};
            out.push_back(BroadcastAction{sign(m)});
            out.push_back(SetTimerAction{TimerId{TimerKind::FailureRebroadcast, v, 0}, delta_for_view(v)});
            // While stuck, keep pulling any decisions made without us.
            pull_committed_chain(out);
            break;
        }
        case TimerKind::QueryRetry: {
            if (!active_query_ || *active_query_ != RoundNo(timer.a)) break;
            active_query_.reset();
            // An unanswered targeted fetch (e.g. a dead aggregator) widens
            // to a broadcast on retry.
            active_query_broadcast_ = true;
            advance_query(out);
            break;
        }
        case TimerKind::StatusProbe: {
            // Ask the network whether a decision exists past our prefix;
            // silence is the usual answer.
            if (!active_query_ && query_needed_.empty()) {
                Message q = sign(QueryCCMsg{committed_prefix_ + 1});
                out.push_back(BroadcastAction{q});
            }
            // A round stuck mid-check-commit for a whole probe period means
            // our messages (or our peers') were lost: resend them.
            if (normal_case_active()) {
                if (!cfg_.linear_mode) {
                    auto it = slots_.find(committed_prefix_ + 1);
                    if (it != slots_.end() && it->second.pc && it->second.executed && !it->second.cc &&
                        it->second.check_commit_view == view_ && it->second.pc->view == view_) {
                        DigestValue d = it->second.pc->req_digest;
                        std::optional<PreparedCertificate> carried;
                        if (!cfg_.digest_mode) carried = it->second.pc;
                        out.push_back(BroadcastAction{sign(CheckCommitMsg{view_, committed_prefix_ + 1, d, carried})});
                    }
                } else {
                    RoundNo hi = std::min(app_.applied_prefix(), committed_prefix_ + RoundNo(cfg_.n));
                    for (RoundNo rho = committed_prefix_ + 1; rho <= hi; ++rho) {
                        auto it = slots_.find(rho);
                        if (it != slots_.end() && it->second.support_cc_sent && !it->second.cc)
                            it->second.support_cc_sent = false;
                    }
                    advance_linear_check_commits(out);
                }
            }
            out.push_back(SetTimerAction{TimerId{TimerKind::StatusProbe, 0, 0}, probe_period()});
            break;
        }
        case TimerKind::ClientResend:
            break;  // client-side timer
    }
    return out;
}

}  // namespace poe
