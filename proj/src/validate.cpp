#include <algorithm>
#include <set>

#include "poe/message.hpp"

namespace poe {

const char* reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::BadSignature: return "bad-signature";
        case RejectReason::BadArity: return "bad-arity";
        case RejectReason::Oversize: return "oversize";
        case RejectReason::BadQuorum: return "bad-quorum";
    }
    return "?";
}

namespace {

using VR = ValidationResult;

VR ok() { return VR::well_formed(); }

VR bad(RejectReason r, std::string d) { return VR::reject(r, std::move(d)); }

bool is_replica(const SystemConfig& cfg, Identity id) { return !id.is_client && id.index < cfg.n; }

}  // namespace

ValidationResult validate_request(const ClientRequest& req, const SystemConfig& cfg, const AuthProvider& auth) {
    if (!req.client.is_client) return bad(RejectReason::BadArity, "request client id is not a client");
    if (!auth.verify(req.sig, req.client, req.signing_bytes()))
        return bad(RejectReason::BadSignature, "client signature does not verify");
    if (req.encode().size() > cfg.request_bound)
        return bad(RejectReason::Oversize, "request exceeds bound C=" + std::to_string(cfg.request_bound));
    return ok();
}

ValidationResult validate_pc(const PreparedCertificate& pc, const SystemConfig& cfg, const AuthProvider& auth) {
    switch (pc.kind) {
        case PreparedCertificate::Kind::PreGenesis:
            if (!cfg.linear_mode || pc.round > 0) return bad(RejectReason::BadArity, "pre-genesis certificate misplaced");
            return ok();
        case PreparedCertificate::Kind::Threshold: {
            if (!cfg.linear_mode) return bad(RejectReason::BadArity, "threshold certificate outside linear mode");
            if (pc.round < 1) return bad(RejectReason::BadArity, "certificate for non-positive round");
            if (!pc.tsig || pc.tsig->scheme != ThresholdScheme::PrepareQuorum)
                return bad(RejectReason::BadArity, "threshold certificate lacks n:nf signature");
            if (!auth.threshold_verify(ThresholdScheme::PrepareQuorum, *pc.tsig,
                                       prepare_share_bytes(pc.view, pc.round, pc.req_digest)))
                return bad(RejectReason::BadQuorum, "threshold prepared certificate does not verify");
            return ok();
        }
        case PreparedCertificate::Kind::Signatures: {
            if (cfg.linear_mode) return bad(RejectReason::BadArity, "signature-set certificate in linear mode");
            if (pc.round < 1) return bad(RejectReason::BadArity, "certificate for non-positive round");
            if (!cfg.digest_mode) {
                if (!pc.request) return bad(RejectReason::BadArity, "prepared certificate lacks embedded request");
            }
            if (pc.request) {
                VR r = validate_request(*pc.request, cfg, auth);
                if (!r) return r;
                if (!(request_digest(auth, *pc.request) == pc.req_digest))
                    return bad(RejectReason::BadArity, "embedded request does not match digest");
            }
            std::set<ReplicaId> signers;
            for (const auto& e : pc.evidence) {
                if (!is_replica(cfg, e.signer)) return bad(RejectReason::BadQuorum, "prepare evidence from non-replica");
                if (!auth.verify(e, e.signer, prepare_sign_bytes(pc.view, pc.round, pc.req_digest, e.signer.index)))
                    return bad(RejectReason::BadQuorum, "prepare evidence signature invalid");
                signers.insert(e.signer.index);
            }
            if (signers.size() != pc.evidence.size())
                return bad(RejectReason::BadQuorum, "duplicate signer in prepared certificate");
            if (signers.size() < cfg.nf())
                return bad(RejectReason::BadQuorum, "prepared certificate has " + std::to_string(signers.size()) +
                                                        " signers, needs " + std::to_string(cfg.nf()));
            return ok();
        }
    }
    return bad(RejectReason::BadArity, "unknown certificate kind");
}

ValidationResult validate_cc(const CommitCertificate& cc, const SystemConfig& cfg, const AuthProvider& auth) {
    switch (cc.kind) {
        case CommitCertificate::Kind::Dummy:
            if (cc.round != 0) return bad(RejectReason::BadArity, "dummy certificate must be round 0");
            return ok();
        case CommitCertificate::Kind::Linear: {
            if (!cfg.linear_mode) return bad(RejectReason::BadArity, "linear certificate outside linear mode");
            if (cc.round < 1) return bad(RejectReason::BadArity, "certificate for non-positive round");
            if (!cc.tsig || cc.tsig->scheme != ThresholdScheme::PrepareQuorum)
                return bad(RejectReason::BadArity, "linear certificate lacks n:nf signature");
            if (!auth.threshold_verify(ThresholdScheme::PrepareQuorum, *cc.tsig,
                                       support_cc_share_bytes(cc.round, cc.window_digest)))
                return bad(RejectReason::BadQuorum, "linear commit certificate does not verify");
            return ok();
        }
        case CommitCertificate::Kind::Standard: {
            if (cfg.linear_mode) return bad(RejectReason::BadArity, "standard certificate in linear mode");
            if (cc.round < 1) return bad(RejectReason::BadArity, "certificate for non-positive round");
            if (!cfg.digest_mode) {
                if (!cc.request) return bad(RejectReason::BadArity, "commit certificate lacks embedded request");
            }
            if (cc.request) {
                VR r = validate_request(*cc.request, cfg, auth);
                if (!r) return r;
                if (!(request_digest(auth, *cc.request) == cc.req_digest))
                    return bad(RejectReason::BadArity, "embedded request does not match digest");
            }
            std::set<ReplicaId> signers;
            for (const auto& e : cc.entries) {
                if (e.sender >= cfg.n) return bad(RejectReason::BadQuorum, "check-commit evidence from non-replica");
                if (cfg.digest_mode == e.pc.has_value())
                    return bad(RejectReason::BadArity, "check-commit evidence shape does not match mode");
                if (e.pc) {
                    if (!(e.pc->view == cc.view && e.pc->round == cc.round && e.pc->req_digest == cc.req_digest))
                        return bad(RejectReason::BadQuorum, "check-commit evidence references a different proposal");
                    VR r = validate_pc(*e.pc, cfg, auth);
                    if (!r) return bad(RejectReason::BadQuorum, "embedded prepared certificate invalid: " + r.detail);
                }
                if (!auth.verify(e.sig, Identity::replica(e.sender),
                                 check_commit_sign_bytes(e.sender, cc.view, cc.round, cc.req_digest, e.pc)))
                    return bad(RejectReason::BadQuorum, "check-commit evidence signature invalid");
                signers.insert(e.sender);
            }
            if (signers.size() != cc.entries.size())
                return bad(RejectReason::BadQuorum, "duplicate signer in commit certificate");
            if (signers.size() < cfg.nf())
                return bad(RejectReason::BadQuorum, "commit certificate has " + std::to_string(signers.size()) +
                                                        " signers, needs " + std::to_string(cfg.nf()));
            return ok();
        }
    }
    return bad(RejectReason::BadArity, "unknown certificate kind");
}

ValidationResult validate_rc(const RecoveryCertificate& rc, const SystemConfig& cfg, const AuthProvider& auth) {
    if (!cfg.linear_mode) return bad(RejectReason::BadArity, "recovery certificate outside linear mode");
    if (rc.tsig.scheme != ThresholdScheme::Recovery)
        return bad(RejectReason::BadArity, "recovery certificate uses wrong scheme");
    if (!auth.threshold_verify(ThresholdScheme::Recovery, rc.tsig,
                               support_cc_share_bytes(rc.round, rc.window_digest)))
        return bad(RejectReason::BadQuorum, "recovery certificate does not verify");
    return ok();
}

namespace {

// Every client request embedded anywhere in the message, for size checks.
void collect_requests(const Message& msg, std::vector<const ClientRequest*>& out) {
    auto from_pc = [&](const PreparedCertificate& pc) {
        if (pc.request) out.push_back(&*pc.request);
    };
    auto from_cc = [&](const CommitCertificate& cc) {
        if (cc.request) out.push_back(&*cc.request);
        for (const auto& e : cc.entries)
            if (e.pc && e.pc->request) out.push_back(&*e.pc->request);
    };
    auto from_vs = [&](const ViewStateMsg& vs) {
        from_cc(vs.last_cc);
        for (const auto& pc : vs.executed_tail) from_pc(pc);
        for (const auto& pc : vs.cc_window_pcs) from_pc(pc);
        for (const auto& req : vs.request_table) out.push_back(&req);
    };

    if (auto* m = msg.as<RequestMsg>()) out.push_back(&m->request);
    if (auto* m = msg.as<ProposeMsg>()) out.push_back(&m->proposal.request);
    if (auto* m = msg.as<InformMsg>())
        if (m->request) out.push_back(&*m->request);
    if (auto* m = msg.as<CheckCommitMsg>())
        if (m->pc) from_pc(*m->pc);
    if (auto* m = msg.as<FailureMsg>())
        for (const auto& sp : m->equivocation) out.push_back(&sp.proposal.request);
    if (auto* m = msg.as<ViewStateMsg>()) from_vs(*m);
    if (auto* m = msg.as<NewViewMsg>())
        for (const auto& sv : m->view_states) from_vs(sv.body);
    if (auto* m = msg.as<RespondCCMsg>()) {
        from_pc(m->pc);
        if (m->cc) from_cc(*m->cc);
        if (m->request) out.push_back(&*m->request);
    }
    if (auto* m = msg.as<InformCCMsg>())
        if (m->request) out.push_back(&*m->request);
    if (auto* m = msg.as<CertifyMsg>()) from_pc(m->pc);
    if (auto* m = msg.as<CertifyCCMsg>()) from_cc(m->cc);
}

// Structural rules of a ViewState body; certificate quorums are checked
// separately so the arity/quorum distinction stays clean.
VR view_state_structure(const ViewStateMsg& vs, const SystemConfig& cfg) {
    RoundNo base = vs.last_cc.covers_to();
    RoundNo expect = base + 1;
    for (const auto& pc : vs.executed_tail) {
        if (pc.round != expect)
            return bad(RejectReason::BadArity, "executed tail is not contiguous after the last commit certificate");
        if (pc.view > vs.view) return bad(RejectReason::BadArity, "executed tail references a future view");
        ++expect;
    }
    if (vs.executed_tail.size() > cfg.window)
        return bad(RejectReason::BadArity, "executed tail exceeds the window bound");
    if (cfg.linear_mode && vs.last_cc.kind == CommitCertificate::Kind::Linear) {
        RoundNo from = vs.last_cc.covers_from(cfg);
        if (vs.cc_window_pcs.size() != cfg.n)
            return bad(RejectReason::BadArity, "linear view state lacks the commit window certificates");
        for (size_t i = 0; i < vs.cc_window_pcs.size(); ++i)
            if (vs.cc_window_pcs[i].round != from + RoundNo(i))
                return bad(RejectReason::BadArity, "commit window certificates out of order");
    } else if (!vs.cc_window_pcs.empty()) {
        return bad(RejectReason::BadArity, "commit window certificates outside linear mode");
    }
    return ok();
}

VR view_state_quorums(const ViewStateMsg& vs, const SystemConfig& cfg, const AuthProvider& auth) {
    VR r = validate_cc(vs.last_cc, cfg, auth);
    if (!r) return bad(RejectReason::BadQuorum, "view state commit certificate: " + r.detail);
    for (const auto& pc : vs.executed_tail) {
        r = validate_pc(pc, cfg, auth);
        if (!r) return bad(RejectReason::BadQuorum, "view state prepared certificate: " + r.detail);
    }
    for (const auto& pc : vs.cc_window_pcs) {
        if (pc.round >= 1) {
            r = validate_pc(pc, cfg, auth);
            if (!r) return bad(RejectReason::BadQuorum, "view state window certificate: " + r.detail);
        } else if (!pc.is_pre_genesis()) {
            return bad(RejectReason::BadQuorum, "non-positive window round without pre-genesis certificate");
        }
    }
    if (cfg.linear_mode && vs.last_cc.kind == CommitCertificate::Kind::Linear) {
        std::vector<const PreparedCertificate*> window;
        for (const auto& pc : vs.cc_window_pcs) window.push_back(&pc);
        if (!(window_digest_over(auth, vs.last_cc.round, window) == vs.last_cc.window_digest))
            return bad(RejectReason::BadQuorum, "window certificates do not reproduce the commit digest");
    }
    return ok();
}

}  // namespace

ValidationResult validate(const Message& msg, const SystemConfig& cfg, const AuthProvider& auth) {
    // 1. signer identity
    if (!auth.verify(msg.sig, msg.sender, msg.signing_bytes()))
        return bad(RejectReason::BadSignature, "sender signature does not verify");
    std::vector<const ClientRequest*> requests;
    collect_requests(msg, requests);
    for (const ClientRequest* req : requests) {
        if (!req->client.is_client) return bad(RejectReason::BadArity, "embedded request client id is not a client");
        if (!auth.verify(req->sig, req->client, req->signing_bytes()))
            return bad(RejectReason::BadSignature, "embedded client signature does not verify");
    }

    // 2. per-kind structure
    bool linear = cfg.linear_mode;
    bool pc_carrying = !cfg.digest_mode && !linear;
    switch (msg.kind()) {
        case MsgKind::Request:
            break;
        case MsgKind::Propose: {
            const auto& m = *msg.as<ProposeMsg>();
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "proposal from non-replica");
            if (m.proposal.round < 1) return bad(RejectReason::BadArity, "proposal for non-positive round");
            break;
        }
        case MsgKind::Prepare: {
            const auto& m = *msg.as<PrepareMsg>();
            if (linear) return bad(RejectReason::BadArity, "Prepare not used in linear mode");
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "Prepare from non-replica");
            if (m.round < 1) return bad(RejectReason::BadArity, "Prepare for non-positive round");
            break;
        }
        case MsgKind::Inform: {
            const auto& m = *msg.as<InformMsg>();
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "Inform from non-replica");
            if (m.round < 1) return bad(RejectReason::BadArity, "Inform for non-positive round");
            if (pc_carrying != m.request.has_value())
                return bad(RejectReason::BadArity, "Inform request presence does not match mode");
            if (m.request && !(request_digest(auth, *m.request) == m.req_digest))
                return bad(RejectReason::BadArity, "Inform request does not match digest");
            break;
        }
        case MsgKind::CheckCommit: {
            const auto& m = *msg.as<CheckCommitMsg>();
            if (linear) return bad(RejectReason::BadArity, "CheckCommit not used in linear mode");
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "CheckCommit from non-replica");
            if (m.round < 1) return bad(RejectReason::BadArity, "CheckCommit for non-positive round");
            if (pc_carrying != m.pc.has_value())
                return bad(RejectReason::BadArity, "CheckCommit certificate presence does not match mode");
            if (m.pc && !(m.pc->view == m.view && m.pc->round == m.round && m.pc->req_digest == m.req_digest))
                return bad(RejectReason::BadArity, "CheckCommit certificate references a different proposal");
            break;
        }
        case MsgKind::Failure: {
            const auto& m = *msg.as<FailureMsg>();
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "Failure from non-replica");
            if (!m.equivocation.empty()) {
                if (m.equivocation.size() != 2)
                    return bad(RejectReason::BadArity, "equivocation proof needs exactly two proposals");
                const auto& a = m.equivocation[0];
                const auto& b = m.equivocation[1];
                if (a.proposal.view != b.proposal.view || a.proposal.round != b.proposal.round)
                    return bad(RejectReason::BadArity, "equivocation proposals target different slots");
                if (a.proposal.view != m.view)
                    return bad(RejectReason::BadArity, "equivocation proposals are not for the failed view");
                if (request_digest(auth, a.proposal.request) == request_digest(auth, b.proposal.request))
                    return bad(RejectReason::BadArity, "equivocation proposals are identical");
                ReplicaId prim = primary_of(m.view, cfg);
                for (const auto& sp : m.equivocation) {
                    if (sp.sender != prim)
                        return bad(RejectReason::BadArity, "equivocation proposals not from the view primary");
                    if (!auth.verify(sp.sig, Identity::replica(sp.sender), propose_sign_bytes(sp.sender, sp.proposal)))
                        return bad(RejectReason::BadSignature, "equivocation proposal signature invalid");
                }
            }
            break;
        }
        case MsgKind::ViewState: {
            const auto& m = *msg.as<ViewStateMsg>();
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "ViewState from non-replica");
            VR r = view_state_structure(m, cfg);
            if (!r) return r;
            break;
        }
        case MsgKind::NewView: {
            const auto& m = *msg.as<NewViewMsg>();
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "NewView from non-replica");
            if (m.new_view < 1) return bad(RejectReason::BadArity, "NewView for view 0");
            if (m.view_states.size() != cfg.nf())
                return bad(RejectReason::BadArity, "NewView carries " + std::to_string(m.view_states.size()) +
                                                       " view states, needs " + std::to_string(cfg.nf()));
            std::set<ReplicaId> senders;
            for (const auto& sv : m.view_states) {
                if (sv.sender >= cfg.n) return bad(RejectReason::BadArity, "view state from non-replica");
                if (sv.body.view != m.new_view - 1)
                    return bad(RejectReason::BadArity, "view state for a different view");
                senders.insert(sv.sender);
                VR r = view_state_structure(sv.body, cfg);
                if (!r) return r;
            }
            if (senders.size() != m.view_states.size())
                return bad(RejectReason::BadArity, "duplicate view state sender");
            break;
        }
        case MsgKind::QueryCC: {
            if (msg.as<QueryCCMsg>()->round < 1) return bad(RejectReason::BadArity, "QueryCC for non-positive round");
            break;
        }
        case MsgKind::RespondCC: {
            const auto& m = *msg.as<RespondCCMsg>();
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "RespondCC from non-replica");
            if (m.round < 1) return bad(RejectReason::BadArity, "RespondCC for non-positive round");
            if (m.pc.round != m.round) return bad(RejectReason::BadArity, "RespondCC certificate round mismatch");
            if (m.cc) {
                if (m.cc->is_dummy() || m.cc->covers_from(cfg) > m.round || m.cc->covers_to() < m.round)
                    return bad(RejectReason::BadArity, "RespondCC commit certificate does not cover the round");
                if (m.cc->kind == CommitCertificate::Kind::Standard && !(m.cc->req_digest == m.pc.req_digest))
                    return bad(RejectReason::BadArity, "RespondCC certificates disagree on the request");
            }
            if (pc_carrying) {
                if (m.request) return bad(RejectReason::BadArity, "RespondCC request redundant in standard mode");
            } else {
                if (!m.request) return bad(RejectReason::BadArity, "RespondCC lacks the request");
                if (!(request_digest(auth, *m.request) == m.pc.req_digest))
                    return bad(RejectReason::BadArity, "RespondCC request does not match certificate");
            }
            break;
        }
        case MsgKind::InformCC: {
            const auto& m = *msg.as<InformCCMsg>();
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "InformCC from non-replica");
            if (m.round < 1) return bad(RejectReason::BadArity, "InformCC for non-positive round");
            if (pc_carrying != m.request.has_value())
                return bad(RejectReason::BadArity, "InformCC request presence does not match mode");
            if (m.request && !(request_digest(auth, *m.request) == m.req_digest))
                return bad(RejectReason::BadArity, "InformCC request does not match digest");
            break;
        }
        case MsgKind::Support: {
            const auto& m = *msg.as<SupportMsg>();
            if (!linear) return bad(RejectReason::BadArity, "Support outside linear mode");
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "Support from non-replica");
            if (m.round < 1) return bad(RejectReason::BadArity, "Support for non-positive round");
            if (m.share.scheme != ThresholdScheme::PrepareQuorum || m.share.signer != msg.sender.index)
                return bad(RejectReason::BadArity, "Support share shape invalid");
            if (!(m.share.msg_digest == auth.digest(prepare_share_bytes(m.view, m.round, m.req_digest))))
                return bad(RejectReason::BadArity, "Support share covers a different proposal");
            if (!auth.verify_share(m.share)) return bad(RejectReason::BadQuorum, "Support share invalid");
            break;
        }
        case MsgKind::Certify: {
            const auto& m = *msg.as<CertifyMsg>();
            if (!linear) return bad(RejectReason::BadArity, "Certify outside linear mode");
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "Certify from non-replica");
            if (m.pc.kind != PreparedCertificate::Kind::Threshold)
                return bad(RejectReason::BadArity, "Certify carries a non-threshold certificate");
            break;
        }
        case MsgKind::SupportCC: {
            const auto& m = *msg.as<SupportCCMsg>();
            if (!linear) return bad(RejectReason::BadArity, "SupportCC outside linear mode");
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "SupportCC from non-replica");
            if (m.round < 1) return bad(RejectReason::BadArity, "SupportCC for non-positive round");
            DigestValue covered = auth.digest(support_cc_share_bytes(m.round, m.window_digest));
            if (m.share_nf.scheme != ThresholdScheme::PrepareQuorum || m.share_rec.scheme != ThresholdScheme::Recovery ||
                m.share_nf.signer != msg.sender.index || m.share_rec.signer != msg.sender.index)
                return bad(RejectReason::BadArity, "SupportCC share shape invalid");
            if (!(m.share_nf.msg_digest == covered) || !(m.share_rec.msg_digest == covered))
                return bad(RejectReason::BadArity, "SupportCC shares cover a different digest");
            if (!auth.verify_share(m.share_nf) || !auth.verify_share(m.share_rec))
                return bad(RejectReason::BadQuorum, "SupportCC share invalid");
            break;
        }
        case MsgKind::RecoveryCC: {
            const auto& m = *msg.as<RecoveryCCMsg>();
            if (!linear) return bad(RejectReason::BadArity, "RecoveryCC outside linear mode");
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "RecoveryCC from non-replica");
            if (m.rc.round != m.round || !(m.rc.window_digest == m.window_digest))
                return bad(RejectReason::BadArity, "RecoveryCC certificate fields mismatch");
            break;
        }
        case MsgKind::CertifyCC: {
            const auto& m = *msg.as<CertifyCCMsg>();
            if (!linear) return bad(RejectReason::BadArity, "CertifyCC outside linear mode");
            if (!is_replica(cfg, msg.sender)) return bad(RejectReason::BadArity, "CertifyCC from non-replica");
            if (m.cc.kind != CommitCertificate::Kind::Linear || m.cc.round != m.round ||
                !(m.cc.window_digest == m.window_digest))
                return bad(RejectReason::BadArity, "CertifyCC certificate fields mismatch");
            break;
        }
    }

    // 3. size bounds
    for (const ClientRequest* req : requests)
        if (req->encode().size() > cfg.request_bound)
            return bad(RejectReason::Oversize, "embedded request exceeds bound C=" + std::to_string(cfg.request_bound));

    // 4. embedded certificate quorums
    if (auto* m = msg.as<CheckCommitMsg>(); m && m->pc) {
        VR r = validate_pc(*m->pc, cfg, auth);
        if (!r) return r.reason == RejectReason::BadArity ? r : bad(RejectReason::BadQuorum, r.detail);
    }
    if (auto* m = msg.as<ViewStateMsg>()) {
        VR r = view_state_quorums(*m, cfg, auth);
        if (!r) return r;
    }
    if (auto* m = msg.as<NewViewMsg>()) {
        for (const auto& sv : m->view_states) {
            if (!auth.verify(sv.sig, Identity::replica(sv.sender), view_state_sign_bytes(sv.sender, sv.body)))
                return bad(RejectReason::BadQuorum, "view state signature invalid");
            VR r = view_state_quorums(sv.body, cfg, auth);
            if (!r) return r;
        }
    }
    if (auto* m = msg.as<RespondCCMsg>()) {
        VR r = validate_pc(m->pc, cfg, auth);
        if (!r) return r.reason == RejectReason::BadArity ? r : bad(RejectReason::BadQuorum, r.detail);
        if (m->cc) {
            r = validate_cc(*m->cc, cfg, auth);
            if (!r) return r.reason == RejectReason::BadArity ? r : bad(RejectReason::BadQuorum, r.detail);
        }
    }
    if (auto* m = msg.as<CertifyMsg>()) {
        VR r = validate_pc(m->pc, cfg, auth);
        if (!r) return r.reason == RejectReason::BadArity ? r : bad(RejectReason::BadQuorum, r.detail);
    }
    if (auto* m = msg.as<RecoveryCCMsg>()) {
        VR r = validate_rc(m->rc, cfg, auth);
        if (!r) return r;
    }
    if (auto* m = msg.as<CertifyCCMsg>()) {
        VR r = validate_cc(m->cc, cfg, auth);
        if (!r) return r.reason == RejectReason::BadArity ? r : bad(RejectReason::BadQuorum, r.detail);
    }
    return ok();
}

}  // namespace poe
