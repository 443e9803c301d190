#include "poe/simulator.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace poe {

// ---------------------------------------------------------------------------
// Scenario

SimTime DelayModel::max_delay() const {
    switch (kind) {
        case Kind::Fixed: return fixed;
        case Kind::SeededRange: return range_max;
        case Kind::PerLink: {
            SimTime m = 1;
            for (const auto& [link, d] : per_link) m = std::max(m, d);
            return m;
        }
    }
    return fixed;
}

uint32_t Scenario::client_count() const {
    uint32_t c = 0;
    for (const WorkItem& w : workload) c = std::max(c, w.client + 1);
    return std::max(c, 1u);
}

SimTime Scenario::reliable_from() const {
    SimTime t = 0;
    for (const DropWindow& w : drops) t = std::max(t, w.to);
    for (const PartitionWindow& w : partitions) t = std::max(t, w.to);
    for (const auto& [id, b] : faults)
        if (b.kind == ByzantineBehavior::Kind::CrashAt) t = std::max(t, b.crash_time);
    return t;
}

void Scenario::check() const {
    config.check();
    if (faults.size() > config.f) throw ConfigError("scenario declares more faults than f");
    for (const auto& [id, b] : faults) {
        if (id >= config.n) throw ConfigError("fault declared for unknown replica");
        (void)b;
    }
    for (const WorkItem& w : workload)
        if (w.submit_time > duration) throw ConfigError("workload submission after scenario end");
}

// ---------------------------------------------------------------------------
// Trace plumbing

const char* trace_kind_name(TraceKind k) {
    switch (k) {
        case TraceKind::Submit: return "submit";
        case TraceKind::Send: return "send";
        case TraceKind::Deliver: return "deliver";
        case TraceKind::Drop: return "drop";
        case TraceKind::TimerSet: return "timer-set";
        case TraceKind::TimerCancel: return "timer-cancel";
        case TraceKind::TimerFire: return "timer-fire";
        case TraceKind::Execute: return "execute";
        case TraceKind::Rollback: return "rollback";
        case TraceKind::PcStored: return "pc-stored";
        case TraceKind::CcStored: return "cc-stored";
        case TraceKind::Adopted: return "adopted";
        case TraceKind::ViewEntered: return "view-entered";
        case TraceKind::ProposalStage: return "proposal-stage";
        case TraceKind::FailureDetected: return "failure-detected";
        case TraceKind::Equivocation: return "equivocation";
        case TraceKind::ReproposalMismatch: return "repropose-mismatch";
        case TraceKind::QueryStarted: return "query-started";
        case TraceKind::ClientOutcome: return "client-outcome";
    }
    return "?";
}

std::string TraceEvent::line() const {
    std::ostringstream os;
    os << time << ' ' << actor.label() << ' ' << trace_kind_name(kind);
    switch (kind) {
        case TraceKind::Send:
        case TraceKind::Deliver:
        case TraceKind::Drop:
            os << ' ' << msg_kind_name(msg_kind) << ' '
               << (kind == TraceKind::Deliver ? "from=" : "to=") << peer.label() << " bytes=" << size << " payload="
               << digest.short_hex();
            if (view || round) os << " v=" << view << " round=" << round;
            break;
        case TraceKind::Submit:
        case TraceKind::Execute:
        case TraceKind::PcStored:
        case TraceKind::CcStored:
        case TraceKind::Adopted:
        case TraceKind::QueryStarted:
            os << " round=" << round << " view=" << view << " req=" << digest.short_hex();
            break;
        case TraceKind::Rollback:
            os << " to=" << round;
            break;
        case TraceKind::ViewEntered:
        case TraceKind::ProposalStage:
        case TraceKind::FailureDetected:
        case TraceKind::Equivocation:
        case TraceKind::ReproposalMismatch:
            os << " view=" << view;
            break;
        case TraceKind::TimerSet:
        case TraceKind::TimerCancel:
        case TraceKind::TimerFire:
        case TraceKind::ClientOutcome:
            break;
    }
    if (!note.empty()) os << ' ' << note;
    return os.str();
}

std::string trace_to_text(const Trace& trace) {
    std::string out;
    for (const TraceEvent& e : trace) {
        out += e.line();
        out += '\n';
    }
    return out;
}

bool RunResult::all_checks_passed() const {
    for (const CheckResult& c : checks)
        if (!c.passed()) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Byzantine driver

namespace {

struct OutboundMessage {
    Identity dest;  // meaningful when !broadcast
    bool broadcast = false;
    Message msg;
};

// Wraps a replica automaton and applies the configured behavior to its
// inputs and outputs. Behaviors only ever sign with the replica's own key.
class ReplicaDriver {
  public:
    ReplicaDriver(const SystemConfig& cfg, ReplicaId id, const AuthProvider* auth,
                  std::optional<ByzantineBehavior> behavior)
        : cfg_(cfg), id_(id), auth_(auth), automaton_(cfg, id, auth), behavior_(std::move(behavior)) {}

    ReplicaAutomaton& automaton() { return automaton_; }
    const ReplicaAutomaton& automaton() const { return automaton_; }
    bool faulty() const { return behavior_.has_value(); }

    bool crashed(SimTime now) const {
        return behavior_ && behavior_->kind == ByzantineBehavior::Kind::CrashAt && now >= behavior_->crash_time;
    }

    std::vector<Action> deliver(Identity from, const Message& msg, SimTime now) {
        if (crashed(now)) return {};
        if (behavior_) {
            if (input_dropped(msg, now)) return {};
            if (behavior_->split && msg.kind() == MsgKind::ViewState) {
                const auto& vs = *msg.as<ViewStateMsg>();
                if (vs.view + 1 == behavior_->split->for_view && !msg.sender.is_client) {
                    pool_view_state(SignedViewState{msg.sender.index, vs, msg.sig});
                    std::vector<Action> raw, reactions;
                    try_split(raw, reactions, now);
                    std::vector<Action> out = filter(std::move(reactions), now);
                    out.insert(out.end(), raw.begin(), raw.end());
                    return out;
                }
            }
            if (msg.kind() == MsgKind::Request) pool_request(msg.as<RequestMsg>()->request);
        }
        return filter(automaton_.on_message(from, msg, now), now);
    }

    std::vector<Action> start() { return filter(automaton_.start(), 0); }

    std::vector<Action> timer(const TimerId& t, SimTime now) {
        if (crashed(now)) return {};
        return filter(automaton_.on_timer(t, now), now);
    }

  private:
    bool input_dropped(const Message& msg, SimTime now) {
        if (behavior_->kind != ByzantineBehavior::Kind::Scripted) return false;
        for (const BehaviorRule& r : behavior_->rules) {
            if (!r.applies(automaton_.current_view(), now)) continue;
            if (r.drop_propose_inputs && msg.kind() == MsgKind::Propose) return true;
            if (r.drop_input_kinds.count(msg.kind())) return true;
        }
        return false;
    }

    void pool_request(const ClientRequest& req) {
        if (behavior_->kind != ByzantineBehavior::Kind::EquivocatePropose) return;
        DigestValue d = request_digest(*auth_, req);
        for (const auto& [have, unused] : request_pool_)
            if (have == d) return;
        request_pool_.emplace_back(d, req);
    }

    void pool_view_state(const SignedViewState& sv) {
        auto& states = view_state_pool_[sv.body.view];
        for (const auto& have : states)
            if (have.sender == sv.sender) return;
        states.push_back(sv);
        // The faulty replica's own contribution is its (possibly lying)
        // view state, produced on demand.
        ViewNo v = sv.body.view;
        bool have_self = false;
        for (const auto& have : states) have_self |= have.sender == id_;
        if (!have_self) {
            ViewStateMsg mine;
            bool lie = false;
            for (const BehaviorRule& r : behavior_->rules) lie |= r.lie_view_state;
            if (lie || behavior_->kind == ByzantineBehavior::Kind::LieViewState) {
                mine.view = v;
                mine.last_cc = CommitCertificate::dummy();
            } else {
                mine = automaton_.current_view_state(v);
            }
            Message m = make_message(*auth_, Identity::replica(id_), mine);
            states.push_back(SignedViewState{id_, mine, m.sig});
        }
    }

    // Raw sends bypass the outgoing filter (they ARE the forged messages);
    // the automaton's reactions to adopting one go through it as usual.
    void try_split(std::vector<Action>& raw, std::vector<Action>& reactions, SimTime now) {
        const NewViewSplit& split = *behavior_->split;
        auto pit = view_state_pool_.find(split.for_view - 1);
        if (pit == view_state_pool_.end()) return;
        for (size_t i = 0; i < split.parts.size(); ++i) {
            if (split_sent_.count(i)) continue;
            const auto& part = split.parts[i];
            std::vector<SignedViewState> states;
            for (ReplicaId member : part.members) {
                for (const auto& sv : pit->second)
                    if (sv.sender == member) states.push_back(sv);
            }
            if (states.size() != part.members.size()) continue;
            split_sent_.insert(i);
            NewViewMsg n{split.for_view, states};
            Message m = make_message(*auth_, Identity::replica(id_), n);
            for (Identity dest : part.dests) raw.push_back(SendAction{dest, m});
            if (i == split.feed_self) {
                std::vector<Action> sub = automaton_.on_message(Identity::replica(id_), m, now);
                reactions.insert(reactions.end(), sub.begin(), sub.end());
            }
        }
    }

    std::vector<Action> filter(std::vector<Action> actions, SimTime now) {
        if (!behavior_) return actions;
        std::vector<Action> out;
        for (Action& a : actions) {
            if (std::holds_alternative<SetTimerAction>(a) || std::holds_alternative<CancelTimerAction>(a)) {
                if (behavior_->kind == ByzantineBehavior::Kind::Silent) continue;
                out.push_back(std::move(a));
                continue;
            }
            if (std::holds_alternative<ExecutedAction>(a) || std::holds_alternative<RolledBackAction>(a)) {
                out.push_back(std::move(a));
                continue;
            }
            if (auto* send = std::get_if<SendAction>(&a)) {
                emit(out, send->dest, false, std::move(send->msg), now);
            } else if (auto* bc = std::get_if<BroadcastAction>(&a)) {
                emit(out, Identity{}, true, std::move(bc->msg), now);
            }
        }
        return out;
    }

    void emit(std::vector<Action>& out, Identity dest, bool broadcast, Message msg, SimTime now) {
        switch (behavior_->kind) {
            case ByzantineBehavior::Kind::Silent:
                return;
            case ByzantineBehavior::Kind::CrashAt:
                break;  // pre-crash behavior is honest; crash handled upstream
            case ByzantineBehavior::Kind::WithholdInform:
                if (msg.kind() == MsgKind::Inform || msg.kind() == MsgKind::InformCC) return;
                break;
            case ByzantineBehavior::Kind::SelectiveSend: {
                if (broadcast) {
                    for (ReplicaId r = 0; r < cfg_.n; ++r) {
                        if (r == id_ || behavior_->blackout.count(r)) continue;
                        out.push_back(SendAction{Identity::replica(r), msg});
                    }
                    return;
                }
                if (!dest.is_client && behavior_->blackout.count(dest.index)) return;
                break;
            }
            case ByzantineBehavior::Kind::LieViewState:
                if (msg.kind() == MsgKind::ViewState) {
                    ViewStateMsg lie;
                    lie.view = msg.as<ViewStateMsg>()->view;
                    lie.last_cc = CommitCertificate::dummy();
                    msg = make_message(*auth_, Identity::replica(id_), lie);
                }
                break;
            case ByzantineBehavior::Kind::EquivocatePropose: {
                if (broadcast && msg.kind() == MsgKind::Propose) {
                    const Proposal& p = msg.as<ProposeMsg>()->proposal;
                    DigestValue d = request_digest(*auth_, p.request);
                    const ClientRequest* alt = nullptr;
                    for (const auto& [digest, req] : request_pool_)
                        if (!(digest == d) && !used_for_equivocation_.count(digest)) {
                            alt = &req;
                            break;
                        }
                    if (alt) {
                        used_for_equivocation_.insert(request_digest(*auth_, *alt));
                        Proposal p2{p.view, p.round, *alt};
                        Message alt_msg = make_message(*auth_, Identity::replica(id_), ProposeMsg{p2});
                        // Disjoint halves observe different proposals.
                        std::vector<ReplicaId> others;
                        for (ReplicaId r = 0; r < cfg_.n; ++r)
                            if (r != id_) others.push_back(r);
                        for (size_t i = 0; i < others.size(); ++i)
                            out.push_back(SendAction{Identity::replica(others[i]), i < others.size() / 2 ? msg : alt_msg});
                        return;
                    }
                }
                break;
            }
            case ByzantineBehavior::Kind::Scripted: {
                ViewNo view = automaton_.current_view();
                for (const BehaviorRule& r : behavior_->rules) {
                    if (!r.applies(view, now)) continue;
                    if (r.drop_kinds.count(msg.kind())) return;
                    if (r.lie_view_state && msg.kind() == MsgKind::ViewState) {
                        ViewStateMsg lie;
                        lie.view = msg.as<ViewStateMsg>()->view;
                        lie.last_cc = CommitCertificate::dummy();
                        msg = make_message(*auth_, Identity::replica(id_), lie);
                    }
                    auto rit = r.restrict_dest.find(msg.kind());
                    if (rit != r.restrict_dest.end()) {
                        if (broadcast) {
                            for (ReplicaId rr : rit->second)
                                if (rr != id_) out.push_back(SendAction{Identity::replica(rr), msg});
                            return;
                        }
                        if (!dest.is_client && !rit->second.count(dest.index)) return;
                    }
                }
                if (behavior_->split && msg.kind() == MsgKind::NewView &&
                    msg.as<NewViewMsg>()->new_view == behavior_->split->for_view)
                    return;  // the split replaces the automaton's own NewView
                break;
            }
        }
        if (broadcast)
            out.push_back(BroadcastAction{std::move(msg)});
        else
            out.push_back(SendAction{dest, std::move(msg)});
    }

    SystemConfig cfg_;
    ReplicaId id_;
    const AuthProvider* auth_;
    ReplicaAutomaton automaton_;
    std::optional<ByzantineBehavior> behavior_;

    std::vector<std::pair<DigestValue, ClientRequest>> request_pool_;
    std::set<DigestValue> used_for_equivocation_;
    std::map<ViewNo, std::vector<SignedViewState>> view_state_pool_;
    std::set<size_t> split_sent_;
};

// ---------------------------------------------------------------------------
// Event queue

struct SimEvent {
    SimTime time = 0;
    uint32_t source = 0;  // actor ordering key: replicas, then clients
    uint64_t seq = 0;

    enum class Kind { Deliver, Timer, Submit } kind = Kind::Deliver;
    Identity from, to;
    std::shared_ptr<const Message> msg;
    TimerId timer{TimerKind::ClientResend, 0, 0};
    uint64_t timer_epoch = 0;
    ClientRequest request;

    bool operator>(const SimEvent& o) const {
        return std::tie(time, source, seq) > std::tie(o.time, o.source, o.seq);
    }
};

class Simulation {
  public:
    explicit Simulation(const Scenario& sc) : sc_(sc), auth_(sc.seed, sc.config) {
        sc_.check();
        for (ReplicaId r = 0; r < sc_.config.n; ++r) {
            std::optional<ByzantineBehavior> behavior;
            if (auto it = sc_.faults.find(r); it != sc_.faults.end()) behavior = it->second;
            replicas_.emplace_back(sc_.config, r, &auth_, behavior);
        }
        SimTime resend = sc_.client_resend;
        if (resend == 0) {
            SimTime max_delta = 10;
            for (ReplicaId r = 0; r < sc_.config.n; ++r) max_delta = std::max(max_delta, sc_.config.delta_initial(r));
            resend = 8 * max_delta;
        }
        for (uint32_t c = 0; c < sc_.client_count(); ++c) clients_.emplace_back(sc_.config, c, &auth_, resend);
        rng_state_ = sc_.seed ^ 0x6a09e667f3bcc909ULL;
    }

    RunResult run() {
        for (ReplicaId r = 0; r < sc_.config.n; ++r) {
            now_ = 0;
            if (!replicas_[r].crashed(0)) apply_actions(Identity::replica(r), replicas_[r].start());
        }
        for (const WorkItem& w : sc_.workload) {
            ClientRequest req = make_request(auth_, w.client, w.seq, to_bytes(w.payload));
            SimEvent ev;
            ev.time = w.submit_time;
            ev.source = actor_key(Identity::client(w.client));
            ev.seq = next_seq_++;
            ev.kind = SimEvent::Kind::Submit;
            ev.from = Identity::client(w.client);
            ev.request = req;
            queue_.push(ev);
            DigestValue d = request_digest(auth_, req);
            result_.submitted[d] = w;
            result_.request_clients[d] = w.client;
        }

        while (!queue_.empty()) {
            SimEvent ev = queue_.top();
            queue_.pop();
            if (ev.time > sc_.duration) break;
            now_ = ev.time;
            dispatch(ev);
        }

        finalize();
        return std::move(result_);
    }

  private:
    uint32_t actor_key(Identity id) const { return id.is_client ? sc_.config.n + id.index : id.index; }

    uint64_t rng() {
        rng_state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = rng_state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    SimTime link_delay(Identity from, Identity to) {
        switch (sc_.delay.kind) {
            case DelayModel::Kind::Fixed: return sc_.delay.fixed;
            case DelayModel::Kind::PerLink: {
                auto it = sc_.delay.per_link.find({from.encoded(), to.encoded()});
                if (it != sc_.delay.per_link.end()) return it->second;
                return sc_.delay.fixed;
            }
            case DelayModel::Kind::SeededRange: {
                SimTime lo = sc_.delay.range_min, hi = sc_.delay.range_max;
                if (hi <= lo) return lo;
                return lo + SimTime(rng() % (hi - lo + 1));
            }
        }
        return sc_.delay.fixed;
    }

    bool link_blocked(Identity from, Identity to, SimTime t) const {
        for (const DropWindow& w : sc_.drops) {
            if (t < w.from || t >= w.to) continue;
            if (w.src && !(*w.src == from)) continue;
            if (w.dst && !(*w.dst == to)) continue;
            return true;
        }
        for (const PartitionWindow& w : sc_.partitions) {
            if (t < w.from || t >= w.to) continue;
            auto group_of = [&](Identity id) -> int {
                for (size_t g = 0; g < w.groups.size(); ++g)
                    for (Identity member : w.groups[g])
                        if (member == id) return int(g);
                return -1;  // unlisted actors share the implicit rest group
            };
            if (group_of(from) != group_of(to)) return true;
        }
        return false;
    }

    void trace(TraceEvent ev) {
        ev.time = now_;
        result_.trace.push_back(std::move(ev));
    }

    void record_message_event(TraceKind kind, Identity actor, Identity peer, const Message& msg) {
        Bytes encoded = msg.encode();
        TraceEvent ev;
        ev.actor = actor;
        ev.kind = kind;
        ev.peer = peer;
        ev.msg_kind = msg.kind();
        ev.size = uint32_t(encoded.size());
        ev.digest = auth_.digest(encoded);
        // Inform-like messages feed the preservation checker; NewView events
        // carry their target view for the view-sync checker.
        if (const auto* m = msg.as<InformMsg>()) {
            ev.view = m->view;
            ev.round = m->round;
            ev.digest = m->req_digest;
            ev.aux = auth_.digest(m->result);
        } else if (const auto* m2 = msg.as<InformCCMsg>()) {
            ev.round = m2->round;
            ev.digest = m2->req_digest;
            ev.aux = auth_.digest(m2->result);
        } else if (const auto* m3 = msg.as<NewViewMsg>()) {
            ev.view = m3->new_view;
        } else if (const auto* m4 = msg.as<ProposeMsg>()) {
            ev.view = m4->proposal.view;
            ev.round = m4->proposal.round;
        } else if (const auto* m5 = msg.as<PrepareMsg>()) {
            ev.view = m5->view;
            ev.round = m5->round;
        } else if (const auto* m6 = msg.as<CheckCommitMsg>()) {
            ev.view = m6->view;
            ev.round = m6->round;
        }
        if (kind == TraceKind::Send) {
            Bytes raw = msg.encode();
            std::string k = msg.kind_name();
            result_.metrics.messages_by_kind[k]++;
            if (!actor.is_client && !peer.is_client) result_.metrics.replica_messages_by_kind[k]++;
            if (!actor.is_client) result_.metrics.bytes_sent_by_replica[actor.index] += raw.size();
            if (!peer.is_client) result_.metrics.bytes_received_by_replica[peer.index] += raw.size();
        }
        trace(std::move(ev));
    }

    void route_send(Identity from, Identity to, const Message& msg) {
        if (to == from) return;
        record_message_event(TraceKind::Send, from, to, msg);
        if (link_blocked(from, to, now_)) {
            record_message_event(TraceKind::Drop, from, to, msg);
            return;
        }
        SimEvent ev;
        ev.time = now_ + link_delay(from, to);
        ev.source = actor_key(from);
        ev.seq = next_seq_++;
        ev.kind = SimEvent::Kind::Deliver;
        ev.from = from;
        ev.to = to;
        ev.msg = std::make_shared<const Message>(msg);
        queue_.push(ev);
    }

    void apply_actions(Identity actor, const std::vector<Action>& actions) {
        for (const Action& a : actions) {
            if (const auto* send = std::get_if<SendAction>(&a)) {
                route_send(actor, send->dest, send->msg);
            } else if (const auto* bc = std::get_if<BroadcastAction>(&a)) {
                for (ReplicaId r = 0; r < sc_.config.n; ++r) {
                    Identity dest = Identity::replica(r);
                    if (dest == actor) continue;
                    route_send(actor, dest, bc->msg);
                }
            } else if (const auto* st = std::get_if<SetTimerAction>(&a)) {
                uint64_t epoch = ++timer_epochs_[{actor.encoded(), st->id}];
                SimEvent ev;
                ev.time = now_ + st->delay;
                ev.source = actor_key(actor);
                ev.seq = next_seq_++;
                ev.kind = SimEvent::Kind::Timer;
                ev.to = actor;
                ev.timer = st->id;
                ev.timer_epoch = epoch;
                queue_.push(ev);
                trace(TraceEvent{0, actor, TraceKind::TimerSet, {}, {}, 0, 0, {}, {}, 0, st->id.label()});
            } else if (const auto* ct = std::get_if<CancelTimerAction>(&a)) {
                ++timer_epochs_[{actor.encoded(), ct->id}];
                trace(TraceEvent{0, actor, TraceKind::TimerCancel, {}, {}, 0, 0, {}, {}, 0, ct->id.label()});
            } else if (const auto* ex = std::get_if<ExecutedAction>(&a)) {
                TraceEvent ev;
                ev.actor = actor;
                ev.kind = TraceKind::Execute;
                ev.round = ex->round;
                ev.aux = auth_.digest(ex->result);
                trace(std::move(ev));
            } else if (const auto* rb = std::get_if<RolledBackAction>(&a)) {
                TraceEvent ev;
                ev.actor = actor;
                ev.kind = TraceKind::Rollback;
                ev.round = rb->to_round;
                trace(std::move(ev));
            }
        }
    }

    void drain_replica_events(ReplicaId r) {
        for (const InternalEvent& ie : replicas_[r].automaton().drain_events()) {
            TraceEvent ev;
            ev.actor = Identity::replica(r);
            ev.view = ie.view;
            ev.round = ie.round;
            ev.digest = ie.digest;
            switch (ie.kind) {
                case InternalEvent::Kind::PcStored: ev.kind = TraceKind::PcStored; break;
                case InternalEvent::Kind::CcStored: ev.kind = TraceKind::CcStored; break;
                case InternalEvent::Kind::Adopted: ev.kind = TraceKind::Adopted; break;
                case InternalEvent::Kind::ViewEntered: ev.kind = TraceKind::ViewEntered; break;
                case InternalEvent::Kind::ProposalStageEntered: ev.kind = TraceKind::ProposalStage; break;
                case InternalEvent::Kind::FailureDetected: ev.kind = TraceKind::FailureDetected; break;
                case InternalEvent::Kind::EquivocationDetected: ev.kind = TraceKind::Equivocation; break;
                case InternalEvent::Kind::ReproposalMismatch: ev.kind = TraceKind::ReproposalMismatch; break;
                case InternalEvent::Kind::QueryStarted: ev.kind = TraceKind::QueryStarted; break;
            }
            trace(std::move(ev));
        }
    }

    void drain_client_events(uint32_t c) {
        for (const ClientEvent& ce : clients_[c].drain_events()) {
            result_.client_outcomes[c][ce.req_digest] = ce.outcome;
            TraceEvent ev;
            ev.actor = Identity::client(c);
            ev.kind = TraceKind::ClientOutcome;
            ev.round = ce.outcome.round;
            ev.digest = ce.req_digest;
            ev.note = ce.outcome.proof == ProofKind::ProofOfExecution ? "proof-of-execution" : "proof-of-commit";
            trace(std::move(ev));
        }
    }

    void dispatch(const SimEvent& ev) {
        switch (ev.kind) {
            case SimEvent::Kind::Submit: {
                TraceEvent te;
                te.actor = ev.from;
                te.kind = TraceKind::Submit;
                te.digest = request_digest(auth_, ev.request);
                trace(std::move(te));
                auto actions = clients_[ev.from.index].submit(ev.request, now_);
                drain_client_events(ev.from.index);
                apply_actions(ev.from, actions);
                break;
            }
            case SimEvent::Kind::Deliver: {
                record_message_event(TraceKind::Deliver, ev.to, ev.from, *ev.msg);
                if (ev.to.is_client) {
                    if (ev.to.index < clients_.size()) {
                        auto actions = clients_[ev.to.index].on_message(ev.from, *ev.msg, now_);
                        drain_client_events(ev.to.index);
                        apply_actions(ev.to, actions);
                    }
                } else {
                    auto actions = replicas_[ev.to.index].deliver(ev.from, *ev.msg, now_);
                    drain_replica_events(ev.to.index);
                    apply_actions(ev.to, actions);
                }
                break;
            }
            case SimEvent::Kind::Timer: {
                auto it = timer_epochs_.find({ev.to.encoded(), ev.timer});
                if (it == timer_epochs_.end() || it->second != ev.timer_epoch) break;  // cancelled or replaced
                trace(TraceEvent{0, ev.to, TraceKind::TimerFire, {}, {}, 0, 0, {}, {}, 0, ev.timer.label()});
                if (ev.to.is_client) {
                    auto actions = clients_[ev.to.index].on_timer(ev.timer, now_);
                    drain_client_events(ev.to.index);
                    apply_actions(ev.to, actions);
                } else {
                    auto actions = replicas_[ev.to.index].timer(ev.timer, now_);
                    drain_replica_events(ev.to.index);
                    apply_actions(ev.to, actions);
                }
                break;
            }
        }
    }

    void finalize() {
        result_.scenario = sc_;
        RoundNo max_decided = 0;
        uint64_t max_view = 0;
        for (ReplicaId r = 0; r < sc_.config.n; ++r) {
            const ReplicaAutomaton& a = replicas_[r].automaton();
            ReplicaSnapshot snap;
            snap.id = r;
            snap.faulty = replicas_[r].faulty();
            snap.view = a.current_view();
            snap.committed = a.committed_prefix();
            snap.executed = a.executed_prefix();
            snap.ledger = a.ledger();
            snap.app_digest = a.app().state_digest(auth_);
            result_.replicas.push_back(std::move(snap));
            if (!replicas_[r].faulty()) {
                max_decided = std::max(max_decided, a.committed_prefix());
                max_view = std::max<uint64_t>(max_view, a.current_view());
            }
        }
        result_.metrics.decided_rounds = max_decided;
        result_.metrics.view_changes = max_view;
        double seconds = double(sc_.duration) / 1000.0;  // one tick is a millisecond
        result_.metrics.decisions_per_sec = seconds > 0 ? double(max_decided) / seconds : 0;

        for (const auto& [digest, item] : result_.submitted) {
            Metrics::RequestLatency lat;
            lat.submit = item.submit_time;
            auto cit = result_.client_outcomes.find(item.client);
            if (cit != result_.client_outcomes.end()) {
                auto oit = cit->second.find(digest);
                if (oit != cit->second.end()) {
                    lat.has_outcome = true;
                    lat.closed = oit->second.at;
                    lat.proof = oit->second.proof;
                    if (sc_.delay.kind == DelayModel::Kind::Fixed && sc_.delay.fixed > 0)
                        lat.delay_units = double(lat.closed - lat.submit) / double(sc_.delay.fixed);
                }
            }
            result_.metrics.latency_by_request[digest.hex()] = lat;
        }

        for (const std::string& name : sc_.checks) {
            if (name == "non-divergence")
                result_.checks.push_back(check_non_divergence(result_));
            else if (name == "poe-preservation")
                result_.checks.push_back(check_poe_preservation(result_));
            else if (name == "view-sync")
                result_.checks.push_back(check_view_sync(result_));
            else if (name == "liveness")
                result_.checks.push_back(check_liveness(result_));
            else
                result_.checks.push_back(CheckResult{name, CheckResult::Status::Skipped, "unknown checker", -1});
        }
    }

    Scenario sc_;
    AuthProvider auth_;
    std::vector<ReplicaDriver> replicas_;
    std::vector<ClientAutomaton> clients_;
    std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<SimEvent>> queue_;
    std::map<std::pair<uint32_t, TimerId>, uint64_t> timer_epochs_;
    uint64_t next_seq_ = 0;
    SimTime now_ = 0;
    uint64_t rng_state_ = 0;
    RunResult result_;
};

}  // namespace

RunResult run_scenario(const Scenario& scenario) {
    Simulation sim(scenario);
    return sim.run();
}

// ---------------------------------------------------------------------------
// Checkers

namespace {

bool replica_is_faulty(const RunResult& r, ReplicaId id) {
    return r.scenario.faults.count(id) != 0;
}

}  // namespace

CheckResult check_non_divergence(const RunResult& r) {
    // For every round, all commit certificates held by non-faulty replicas
    // propose the same request.
    std::map<RoundNo, DigestValue> seen;
    for (size_t i = 0; i < r.trace.size(); ++i) {
        const TraceEvent& ev = r.trace[i];
        if (ev.kind != TraceKind::CcStored || ev.actor.is_client) continue;
        if (replica_is_faulty(r, ev.actor.index)) continue;
        auto [it, inserted] = seen.try_emplace(ev.round, ev.digest);
        if (!inserted && !(it->second == ev.digest))
            return CheckResult{"non-divergence", CheckResult::Status::Fail,
                               "conflicting commit certificates for round " + std::to_string(ev.round), int64_t(i)};
    }
    for (const ReplicaSnapshot& snap : r.replicas) {
        if (snap.faulty) continue;
        for (const auto& entry : snap.ledger) {
            if (!entry.committed) continue;
            auto it = seen.find(entry.round);
            if (it != seen.end() && !(it->second == entry.req_digest))
                return CheckResult{"non-divergence", CheckResult::Status::Fail,
                                   "final ledger conflicts at round " + std::to_string(entry.round), -1};
        }
    }
    return CheckResult{"non-divergence", CheckResult::Status::Pass, "", -1};
}

CheckResult check_poe_preservation(const RunResult& r) {
    // Every (request, view, round, result) with nf identical Informs emitted
    // anywhere must appear in every non-faulty final ledger that reaches it.
    uint32_t nf = r.scenario.config.nf();
    std::map<std::tuple<DigestValue, ViewNo, RoundNo, DigestValue>, std::set<uint32_t>> informs;
    std::map<RoundNo, std::pair<DigestValue, DigestValue>> obligations;
    for (const TraceEvent& ev : r.trace) {
        if (ev.kind != TraceKind::Send || ev.msg_kind != MsgKind::Inform || ev.actor.is_client) continue;
        auto& senders = informs[{ev.digest, ev.view, ev.round, ev.aux}];
        senders.insert(ev.actor.index);
        if (senders.size() >= nf) obligations[ev.round] = {ev.digest, ev.aux};
    }
    for (const ReplicaSnapshot& snap : r.replicas) {
        if (snap.faulty) continue;
        for (const auto& [round, want] : obligations) {
            if (snap.executed < round) continue;
            const auto& entry = snap.ledger[size_t(round - 1)];
            if (!(entry.req_digest == want.first))
                return CheckResult{"poe-preservation", CheckResult::Status::Fail,
                                   "replica r" + std::to_string(snap.id) + " lost the proven request at round " +
                                       std::to_string(round),
                                   -1};
        }
    }
    return CheckResult{"poe-preservation", CheckResult::Status::Pass,
                       std::to_string(obligations.size()) + " proven rounds", -1};
}

CheckResult check_view_sync(const RunResult& r) {
    if (r.scenario.delay.kind != DelayModel::Kind::Fixed)
        return CheckResult{"view-sync", CheckResult::Status::Skipped, "needs a fixed message delay", -1};
    SimTime delta = r.scenario.delay.fixed;
    SimTime reliable_from = r.scenario.reliable_from();

    // First proposal-stage entry per view among non-faulty replicas.
    std::map<ViewNo, std::map<ReplicaId, SimTime>> entries;
    std::map<ViewNo, std::map<ReplicaId, SimTime>> new_view_delivery;
    for (const TraceEvent& ev : r.trace) {
        if (ev.kind == TraceKind::ProposalStage && !ev.actor.is_client && !replica_is_faulty(r, ev.actor.index))
            entries[ev.view].try_emplace(ev.actor.index, ev.time);
        if (ev.kind == TraceKind::Deliver && ev.msg_kind == MsgKind::NewView && !ev.actor.is_client &&
            !replica_is_faulty(r, ev.actor.index))
            new_view_delivery[ev.view].try_emplace(ev.actor.index, ev.time);
    }

    uint32_t nonfaulty = 0;
    for (const ReplicaSnapshot& snap : r.replicas) nonfaulty += snap.faulty ? 0 : 1;

    size_t checked = 0;
    for (const auto& [view, per_replica] : entries) {
        SimTime first = ~SimTime(0);
        for (const auto& [id, t] : per_replica) first = std::min(first, t);
        if (first < reliable_from) continue;  // outside the reliable window
        ++checked;
        if (per_replica.size() < nonfaulty)
            return CheckResult{"view-sync", CheckResult::Status::Fail,
                               "view " + std::to_string(view) + ": not all non-faulty entered the proposal stage", -1};
        for (const auto& [id, t] : per_replica)
            if (t > first + 2 * delta)
                return CheckResult{"view-sync", CheckResult::Status::Fail,
                                   "view " + std::to_string(view) + ": r" + std::to_string(id) +
                                       " entered the proposal stage after first + 2*delta",
                                   -1};
        ReplicaId next_primary = primary_of(view + 1, r.scenario.config);
        if (!replica_is_faulty(r, next_primary)) {
            // Every non-faulty replica other than the new primary receives the
            // NewView before first + 4*delta; the primary holds it locally.
            auto dit = new_view_delivery.find(view + 1);
            for (const ReplicaSnapshot& snap : r.replicas) {
                if (snap.faulty || snap.id == next_primary) continue;
                if (dit == new_view_delivery.end() || !dit->second.count(snap.id))
                    return CheckResult{"view-sync", CheckResult::Status::Fail,
                                       "view " + std::to_string(view + 1) + ": r" + std::to_string(snap.id) +
                                           " never received the NewView",
                                       -1};
                if (dit->second.at(snap.id) >= first + 4 * delta)
                    return CheckResult{"view-sync", CheckResult::Status::Fail,
                                       "view " + std::to_string(view + 1) + ": NewView at r" + std::to_string(snap.id) +
                                           " arrived at-or-after first + 4*delta",
                                       -1};
            }
        }
    }
    if (checked == 0)
        return CheckResult{"view-sync", CheckResult::Status::Skipped, "no view change inside the reliable window", -1};
    return CheckResult{"view-sync", CheckResult::Status::Pass, std::to_string(checked) + " view changes checked", -1};
}

CheckResult check_liveness(const RunResult& r) {
    SimTime heal = r.scenario.reliable_from();
    if (heal >= r.scenario.duration)
        return CheckResult{"liveness", CheckResult::Status::Skipped, "scenario never heals", -1};

    // All non-faulty ledgers equal, fully committed, and covering every
    // request submitted before the heal.
    const ReplicaSnapshot* base = nullptr;
    for (const ReplicaSnapshot& snap : r.replicas) {
        if (snap.faulty) continue;
        if (!base) {
            base = &snap;
            continue;
        }
        if (snap.executed != base->executed || !(snap.app_digest == base->app_digest))
            return CheckResult{"liveness", CheckResult::Status::Fail,
                               "final states diverge between r" + std::to_string(base->id) + " and r" +
                                   std::to_string(snap.id),
                               -1};
        for (size_t i = 0; i < snap.ledger.size(); ++i)
            if (!(snap.ledger[i].req_digest == base->ledger[i].req_digest))
                return CheckResult{"liveness", CheckResult::Status::Fail,
                                   "final ledgers diverge at round " + std::to_string(snap.ledger[i].round), -1};
    }
    if (!base) return CheckResult{"liveness", CheckResult::Status::Skipped, "no non-faulty replicas", -1};
    // In linear mode a trailing window can stay uncommitted when no later
    // round rotates to a non-faulty aggregator; anything older must commit.
    RoundNo commit_slack = r.scenario.config.linear_mode ? RoundNo(r.scenario.config.n) : 0;
    if (base->committed + commit_slack < base->executed)
        return CheckResult{"liveness", CheckResult::Status::Fail, "executed rounds left uncommitted after heal", -1};

    std::set<DigestValue> in_ledger;
    for (const auto& entry : base->ledger) in_ledger.insert(entry.req_digest);
    for (const auto& [digest, item] : r.submitted) {
        if (item.submit_time > heal) continue;
        if (!in_ledger.count(digest))
            return CheckResult{"liveness", CheckResult::Status::Fail,
                               "pre-heal request from c" + std::to_string(item.client) + " missing from the ledger",
                               -1};
        auto cit = r.client_outcomes.find(item.client);
        if (cit == r.client_outcomes.end() || !cit->second.count(digest))
            return CheckResult{"liveness", CheckResult::Status::Fail,
                               "pre-heal request from c" + std::to_string(item.client) + " never closed", -1};
    }

    // View-change budget: f+1 changes past the heal point plus backoff
    // convergence to the actual delay.
    ViewNo heal_view = 0;
    for (const TraceEvent& ev : r.trace)
        if (ev.kind == TraceKind::ViewEntered && ev.time <= heal && !ev.actor.is_client &&
            !replica_is_faulty(r, ev.actor.index))
            heal_view = std::max(heal_view, ev.view);
    SimTime min_delta = ~SimTime(0);
    for (ReplicaId i = 0; i < r.scenario.config.n; ++i)
        min_delta = std::min(min_delta, r.scenario.config.delta_initial(i));
    ViewNo conv = 0;
    while (exp2_backoff(conv) * min_delta < r.scenario.delay.max_delay() && conv < 40) ++conv;
    ViewNo bound = heal_view + conv + r.scenario.config.f + 1;
    ViewNo final_view = 0;
    for (const ReplicaSnapshot& snap : r.replicas)
        if (!snap.faulty) final_view = std::max(final_view, snap.view);
    if (final_view > bound)
        return CheckResult{"liveness", CheckResult::Status::Fail,
                           "final view " + std::to_string(final_view) + " exceeds the budget " + std::to_string(bound),
                           -1};
    return CheckResult{"liveness", CheckResult::Status::Pass, "", -1};
}

uint64_t MessageCounts::total() const {
    uint64_t t = 0;
    for (const auto& [kind, count] : by_kind) t += count;
    return t;
}

MessageCounts count_messages(const RunResult& r) {
    MessageCounts mc;
    mc.by_kind = r.metrics.replica_messages_by_kind;
    mc.decided = r.metrics.decided_rounds;
    return mc;
}

std::vector<std::string> observation_projection(const RunResult& r, ReplicaId id) {
    std::vector<std::string> out;
    for (const TraceEvent& ev : r.trace) {
        if (ev.kind != TraceKind::Deliver || ev.actor.is_client || ev.actor.index != id) continue;
        out.push_back(std::to_string(ev.time) + " " + ev.peer.label() + " " + msg_kind_name(ev.msg_kind) + " " +
                      ev.digest.hex());
    }
    return out;
}

}  // namespace poe
