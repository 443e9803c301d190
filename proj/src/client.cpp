#include "poe/client.hpp"

namespace poe {

ClientAutomaton::ClientAutomaton(const SystemConfig& cfg, uint32_t index, const AuthProvider* auth,
                                 SimTime resend_period)
    : cfg_(cfg), index_(index), auth_(auth), resend_period_(resend_period) {}

bool ClientAutomaton::all_closed() const { return pending_.empty(); }

std::vector<Action> ClientAutomaton::submit(const ClientRequest& req, SimTime now) {
    (void)now;
    std::vector<Action> out;
    DigestValue d = request_digest(*auth_, req);
    if (outcomes_.count(d) || pending_.count(d)) return out;  // already closed or in flight

    Pending p;
    p.request = req;
    p.slot = next_slot_++;
    slots_[p.slot] = d;
    pending_.emplace(d, std::move(p));

    Message wrapped = make_message(*auth_, Identity::client(index_), RequestMsg{req});
    out.push_back(SendAction{Identity::replica(primary_of(max_view_seen_, cfg_)), wrapped});
    out.push_back(SetTimerAction{TimerId{TimerKind::ClientResend, pending_.at(d).slot, 0}, resend_period_});
    return out;
}

std::vector<Action> ClientAutomaton::on_message(Identity from, const Message& msg, SimTime now) {
    std::vector<Action> out;
    if (from.is_client || from.index >= cfg_.n) return out;
    if (msg.sender != from) return out;
    if (!auth_->verify(msg.sig, msg.sender, msg.signing_bytes())) return out;

    if (const InformMsg* m = msg.as<InformMsg>()) {
        auto it = pending_.find(m->req_digest);
        if (it == pending_.end()) return out;
        Pending& p = it->second;
        if (m->view > max_view_seen_) max_view_seen_ = m->view;
        if (!p.inform_seen.insert(from.index).second) return out;  // conflicting later Informs ignored
        auto& tally = p.informs[{m->view, m->round, m->result}];
        tally.insert(from.index);
        if (tally.size() >= cfg_.nf()) {
            ClientOutcome oc{ProofKind::ProofOfExecution, m->view, m->round, m->result, now};
            outcomes_[m->req_digest] = oc;
            events_.push_back(ClientEvent{m->req_digest, oc});
            out.push_back(CancelTimerAction{TimerId{TimerKind::ClientResend, p.slot, 0}});
            pending_.erase(it);
        }
        return out;
    }

    if (const InformCCMsg* m = msg.as<InformCCMsg>()) {
        auto it = pending_.find(m->req_digest);
        if (it == pending_.end()) return out;
        Pending& p = it->second;
        if (!p.inform_cc_seen.insert(from.index).second) return out;
        auto& tally = p.inform_ccs[{m->round, m->result}];
        tally.insert(from.index);
        if (tally.size() >= cfg_.f_plus_1()) {
            ClientOutcome oc{ProofKind::ProofOfCommit, 0, m->round, m->result, now};
            outcomes_[m->req_digest] = oc;
            events_.push_back(ClientEvent{m->req_digest, oc});
            out.push_back(CancelTimerAction{TimerId{TimerKind::ClientResend, p.slot, 0}});
            pending_.erase(it);
        }
        return out;
    }
    return out;
}

std::vector<Action> ClientAutomaton::on_timer(const TimerId& timer, SimTime now) {
    (void)now;
    std::vector<Action> out;
    if (timer.kind != TimerKind::ClientResend) return out;
    auto sit = slots_.find(timer.a);
    if (sit == slots_.end()) return out;
    auto it = pending_.find(sit->second);
    if (it == pending_.end()) return out;

    // Still unproven: force the request onto every replica (Fig 9 / the
    // request-forwarding mechanism) and keep retrying.
    Message wrapped = make_message(*auth_, Identity::client(index_), RequestMsg{it->second.request});
    out.push_back(BroadcastAction{wrapped});
    out.push_back(SetTimerAction{TimerId{TimerKind::ClientResend, timer.a, 0}, resend_period_});
    return out;
}

}  // namespace poe
