#include "poe/message.hpp"

#include <algorithm>
#include <set>

namespace poe {

namespace {

void put_digest(ByteWriter& w, const DigestValue& d) { w.raw(d.v.data(), d.v.size()); }

DigestValue get_digest(ByteReader& r) {
    DigestValue d;
    r.raw(d.v.data(), d.v.size());
    return d;
}

void put_sig(ByteWriter& w, const SignatureEvidence& s) {
    w.u32(s.signer.encoded());
    put_digest(w, s.tag);
}

SignatureEvidence get_sig(ByteReader& r) {
    SignatureEvidence s;
    s.signer = Identity::decode(r.u32());
    s.tag = get_digest(r);
    return s;
}

void put_share(ByteWriter& w, const Share& s) {
    w.u8(uint8_t(s.scheme));
    w.u32(s.signer);
    put_digest(w, s.msg_digest);
    put_digest(w, s.tag);
}

Share get_share(ByteReader& r) {
    Share s{ThresholdScheme(r.u8()), r.u32(), {}, {}};
    s.msg_digest = get_digest(r);
    s.tag = get_digest(r);
    return s;
}

void put_tsig(ByteWriter& w, const ThresholdSig& t) {
    w.u8(uint8_t(t.scheme));
    put_digest(w, t.tag);
}

ThresholdSig get_tsig(ByteReader& r) {
    ThresholdSig t{ThresholdScheme(r.u8()), {}};
    t.tag = get_digest(r);
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// ClientRequest / Proposal

Bytes ClientRequest::signing_bytes() const {
    ByteWriter w;
    w.u32(client.encoded());
    w.u64(seq);
    w.blob(payload);
    return w.take();
}

Bytes ClientRequest::encode() const {
    ByteWriter w;
    w.u32(client.encoded());
    w.u64(seq);
    w.blob(payload);
    put_sig(w, sig);
    return w.take();
}

std::optional<ClientRequest> ClientRequest::decode(ByteReader& r) {
    ClientRequest req;
    req.client = Identity::decode(r.u32());
    req.seq = r.u64();
    req.payload = r.blob();
    req.sig = get_sig(r);
    if (!r.ok()) return std::nullopt;
    return req;
}

ClientRequest make_request(const AuthProvider& auth, uint32_t client_idx, uint64_t seq, const Bytes& payload) {
    ClientRequest req;
    req.client = Identity::client(client_idx);
    req.seq = seq;
    req.payload = payload;
    req.sig = auth.sign(req.client, req.signing_bytes());
    return req;
}

DigestValue request_digest(const AuthProvider& auth, const ClientRequest& req) {
    return auth.digest(req.encode());
}

Bytes Proposal::encode() const {
    ByteWriter w;
    w.u64(view);
    w.i64(round);
    w.blob(request.encode());
    return w.take();
}

std::optional<Proposal> Proposal::decode(ByteReader& r) {
    Proposal p;
    p.view = r.u64();
    p.round = r.i64();
    Bytes req = r.blob();
    ByteReader rr(req);
    auto decoded = ClientRequest::decode(rr);
    if (!decoded || !rr.at_end() || !r.ok()) return std::nullopt;
    p.request = *decoded;
    return p;
}

// ---------------------------------------------------------------------------
// Certificates

Bytes prepare_sign_bytes(ViewNo view, RoundNo round, const DigestValue& req_digest, ReplicaId sender) {
    ByteWriter w;
    w.u8(uint8_t(MsgKind::Prepare));
    w.u32(Identity::replica(sender).encoded());
    w.u64(view);
    w.i64(round);
    put_digest(w, req_digest);
    return w.take();
}

Bytes prepare_share_bytes(ViewNo view, RoundNo round, const DigestValue& req_digest) {
    ByteWriter w;
    w.u8(uint8_t(MsgKind::Prepare));
    w.u64(view);
    w.i64(round);
    put_digest(w, req_digest);
    return w.take();
}

Bytes PreparedCertificate::encode() const {
    ByteWriter w;
    w.u8(uint8_t(kind));
    w.u64(view);
    w.i64(round);
    put_digest(w, req_digest);
    w.u8(request.has_value() ? 1 : 0);
    if (request) w.blob(request->encode());
    w.u32(uint32_t(evidence.size()));
    for (const auto& e : evidence) put_sig(w, e);
    w.u8(tsig.has_value() ? 1 : 0);
    if (tsig) put_tsig(w, *tsig);
    return w.take();
}

std::optional<PreparedCertificate> PreparedCertificate::decode(ByteReader& r) {
    PreparedCertificate pc;
    pc.kind = Kind(r.u8());
    pc.view = r.u64();
    pc.round = r.i64();
    pc.req_digest = get_digest(r);
    if (r.u8()) {
        Bytes req = r.blob();
        ByteReader rr(req);
        auto decoded = ClientRequest::decode(rr);
        if (!decoded || !rr.at_end()) return std::nullopt;
        pc.request = *decoded;
    }
    uint32_t n = r.u32();
    if (!r.ok() || n > 4096) return std::nullopt;
    for (uint32_t i = 0; i < n; ++i) pc.evidence.push_back(get_sig(r));
    if (r.u8()) pc.tsig = get_tsig(r);
    if (!r.ok()) return std::nullopt;
    return pc;
}

PreparedCertificate PreparedCertificate::from_prepares(const SystemConfig& cfg, const AuthProvider& auth, ViewNo view,
                                                       RoundNo round, const DigestValue& req_digest,
                                                       const std::optional<ClientRequest>& request,
                                                       std::vector<SignatureEvidence> evidence) {
    std::sort(evidence.begin(), evidence.end(),
              [](const SignatureEvidence& a, const SignatureEvidence& b) { return a.signer < b.signer; });
    std::set<ReplicaId> signers;
    for (const auto& e : evidence) {
        if (e.signer.is_client || e.signer.index >= cfg.n) throw ConfigError("prepare evidence from non-replica");
        if (!auth.verify(e, e.signer, prepare_sign_bytes(view, round, req_digest, e.signer.index)))
            throw ConfigError("prepare evidence signature invalid");
        signers.insert(e.signer.index);
    }
    if (signers.size() != evidence.size()) throw ConfigError("duplicate signer in prepare evidence");
    if (signers.size() < cfg.nf()) throw ConfigError("prepared certificate below quorum");
    PreparedCertificate pc;
    pc.kind = Kind::Signatures;
    pc.view = view;
    pc.round = round;
    pc.req_digest = req_digest;
    pc.request = request;
    pc.evidence = std::move(evidence);
    return pc;
}

PreparedCertificate PreparedCertificate::from_threshold(const SystemConfig& cfg, const AuthProvider& auth, ViewNo view,
                                                        RoundNo round, const DigestValue& req_digest,
                                                        const ThresholdSig& sig) {
    if (!auth.threshold_verify(ThresholdScheme::PrepareQuorum, sig, prepare_share_bytes(view, round, req_digest)))
        throw ConfigError("threshold prepared certificate does not verify");
    (void)cfg;
    PreparedCertificate pc;
    pc.kind = Kind::Threshold;
    pc.view = view;
    pc.round = round;
    pc.req_digest = req_digest;
    pc.tsig = sig;
    return pc;
}

PreparedCertificate PreparedCertificate::pre_genesis(RoundNo round) {
    if (round > 0) throw ConfigError("pre-genesis certificate for positive round");
    PreparedCertificate pc;
    pc.kind = Kind::PreGenesis;
    pc.round = round;
    return pc;
}

Bytes CheckCommitEvidence::encode() const {
    ByteWriter w;
    w.u32(sender);
    put_sig(w, sig);
    w.u8(pc.has_value() ? 1 : 0);
    if (pc) w.blob(pc->encode());
    return w.take();
}

std::optional<CheckCommitEvidence> CheckCommitEvidence::decode(ByteReader& r) {
    CheckCommitEvidence e;
    e.sender = r.u32();
    e.sig = get_sig(r);
    if (r.u8()) {
        Bytes b = r.blob();
        ByteReader rr(b);
        auto pc = PreparedCertificate::decode(rr);
        if (!pc || !rr.at_end()) return std::nullopt;
        e.pc = *pc;
    }
    if (!r.ok()) return std::nullopt;
    return e;
}

RoundNo CommitCertificate::covers_from(const SystemConfig& cfg) const {
    switch (kind) {
        case Kind::Dummy: return 0;
        case Kind::Standard: return round;
        case Kind::Linear: return round - RoundNo(cfg.n) + 1;
    }
    return round;
}

Bytes CommitCertificate::encode() const {
    ByteWriter w;
    w.u8(uint8_t(kind));
    w.u64(view);
    w.i64(round);
    put_digest(w, req_digest);
    w.u8(request.has_value() ? 1 : 0);
    if (request) w.blob(request->encode());
    w.u32(uint32_t(entries.size()));
    for (const auto& e : entries) w.blob(e.encode());
    put_digest(w, window_digest);
    w.u8(tsig.has_value() ? 1 : 0);
    if (tsig) put_tsig(w, *tsig);
    return w.take();
}

std::optional<CommitCertificate> CommitCertificate::decode(ByteReader& r) {
    CommitCertificate cc;
    cc.kind = Kind(r.u8());
    cc.view = r.u64();
    cc.round = r.i64();
    cc.req_digest = get_digest(r);
    if (r.u8()) {
        Bytes req = r.blob();
        ByteReader rr(req);
        auto decoded = ClientRequest::decode(rr);
        if (!decoded || !rr.at_end()) return std::nullopt;
        cc.request = *decoded;
    }
    uint32_t n = r.u32();
    if (!r.ok() || n > 4096) return std::nullopt;
    for (uint32_t i = 0; i < n; ++i) {
        Bytes b = r.blob();
        ByteReader rr(b);
        auto e = CheckCommitEvidence::decode(rr);
        if (!e || !rr.at_end()) return std::nullopt;
        cc.entries.push_back(*e);
    }
    cc.window_digest = get_digest(r);
    if (r.u8()) cc.tsig = get_tsig(r);
    if (!r.ok()) return std::nullopt;
    return cc;
}

CommitCertificate CommitCertificate::dummy() {
    CommitCertificate cc;
    cc.kind = Kind::Dummy;
    cc.round = 0;
    return cc;
}

CommitCertificate CommitCertificate::from_check_commits(const SystemConfig& cfg, const AuthProvider& auth, ViewNo view,
                                                        RoundNo round, const DigestValue& req_digest,
                                                        const std::optional<ClientRequest>& request,
                                                        std::vector<CheckCommitEvidence> entries, bool digest_mode) {
    std::sort(entries.begin(), entries.end(),
              [](const CheckCommitEvidence& a, const CheckCommitEvidence& b) { return a.sender < b.sender; });
    std::set<ReplicaId> signers;
    for (const auto& e : entries) {
        if (e.sender >= cfg.n) throw ConfigError("check-commit evidence from non-replica");
        if (digest_mode == e.pc.has_value()) throw ConfigError("check-commit evidence shape does not match mode");
        if (e.pc && !(e.pc->view == view && e.pc->round == round && e.pc->req_digest == req_digest))
            throw ConfigError("check-commit evidence references a different proposal");
        Bytes body = check_commit_sign_bytes(e.sender, view, round, req_digest, e.pc);
        if (!auth.verify(e.sig, Identity::replica(e.sender), body))
            throw ConfigError("check-commit evidence signature invalid");
        signers.insert(e.sender);
    }
    if (signers.size() != entries.size()) throw ConfigError("duplicate signer in commit certificate");
    if (signers.size() < cfg.nf()) throw ConfigError("commit certificate below quorum");
    CommitCertificate cc;
    cc.kind = Kind::Standard;
    cc.view = view;
    cc.round = round;
    cc.req_digest = req_digest;
    cc.request = request;
    cc.entries = std::move(entries);
    return cc;
}

CommitCertificate CommitCertificate::linear(const SystemConfig& cfg, const AuthProvider& auth, RoundNo round,
                                            const DigestValue& window_digest, const ThresholdSig& sig) {
    if (!auth.threshold_verify(ThresholdScheme::PrepareQuorum, sig, support_cc_share_bytes(round, window_digest)))
        throw ConfigError("linear commit certificate does not verify");
    (void)cfg;
    CommitCertificate cc;
    cc.kind = Kind::Linear;
    cc.round = round;
    cc.window_digest = window_digest;
    cc.tsig = sig;
    return cc;
}

Bytes RecoveryCertificate::encode() const {
    ByteWriter w;
    w.i64(round);
    put_digest(w, window_digest);
    put_tsig(w, tsig);
    return w.take();
}

std::optional<RecoveryCertificate> RecoveryCertificate::decode(ByteReader& r) {
    RecoveryCertificate rc;
    rc.round = r.i64();
    rc.window_digest = get_digest(r);
    rc.tsig = get_tsig(r);
    if (!r.ok()) return std::nullopt;
    return rc;
}

Bytes support_cc_share_bytes(RoundNo round, const DigestValue& window_digest) {
    ByteWriter w;
    w.u8(uint8_t(MsgKind::SupportCC));
    w.i64(round);
    put_digest(w, window_digest);
    return w.take();
}

DigestValue window_digest_over(const AuthProvider& auth, RoundNo round,
                               const std::vector<const PreparedCertificate*>& window) {
    // Content-addressed and order-sensitive: the digest pins which request
    // each window round carries, not the certificate encodings. Replicas can
    // hold certificates from different views for the same content after a
    // view change, and those still aggregate to one digest.
    ByteWriter w;
    w.i64(round);
    for (const PreparedCertificate* pc : window) {
        w.i64(pc->round);
        w.u8(pc->is_pre_genesis() ? 0 : 1);
        w.raw(pc->req_digest.v.data(), pc->req_digest.v.size());
    }
    return auth.digest(w.bytes());
}

// ---------------------------------------------------------------------------
// Wire messages

const char* msg_kind_name(MsgKind k) {
    switch (k) {
        case MsgKind::Request: return "Request";
        case MsgKind::Propose: return "Propose";
        case MsgKind::Prepare: return "Prepare";
        case MsgKind::Inform: return "Inform";
        case MsgKind::CheckCommit: return "CheckCommit";
        case MsgKind::Failure: return "Failure";
        case MsgKind::ViewState: return "ViewState";
        case MsgKind::NewView: return "NewView";
        case MsgKind::QueryCC: return "QueryCC";
        case MsgKind::RespondCC: return "RespondCC";
        case MsgKind::InformCC: return "InformCC";
        case MsgKind::Support: return "Support";
        case MsgKind::Certify: return "Certify";
        case MsgKind::SupportCC: return "SupportCC";
        case MsgKind::RecoveryCC: return "RecoveryCC";
        case MsgKind::CertifyCC: return "CertifyCC";
    }
    return "?";
}

Bytes SignedPropose::encode() const {
    ByteWriter w;
    w.u32(sender);
    w.blob(proposal.encode());
    put_sig(w, sig);
    return w.take();
}

std::optional<SignedPropose> SignedPropose::decode(ByteReader& r) {
    SignedPropose sp;
    sp.sender = r.u32();
    Bytes b = r.blob();
    ByteReader rr(b);
    auto p = Proposal::decode(rr);
    if (!p || !rr.at_end()) return std::nullopt;
    sp.proposal = *p;
    sp.sig = get_sig(r);
    if (!r.ok()) return std::nullopt;
    return sp;
}

namespace {

void encode_view_state_body(ByteWriter& w, const ViewStateMsg& m) {
    w.u64(m.view);
    w.blob(m.last_cc.encode());
    w.u32(uint32_t(m.executed_tail.size()));
    for (const auto& pc : m.executed_tail) w.blob(pc.encode());
    w.u32(uint32_t(m.cc_window_pcs.size()));
    for (const auto& pc : m.cc_window_pcs) w.blob(pc.encode());
    w.u32(uint32_t(m.request_table.size()));
    for (const auto& req : m.request_table) w.blob(req.encode());
}

std::optional<ViewStateMsg> decode_view_state_body(ByteReader& r) {
    ViewStateMsg m;
    m.view = r.u64();
    Bytes b = r.blob();
    ByteReader rr(b);
    auto cc = CommitCertificate::decode(rr);
    if (!cc || !rr.at_end()) return std::nullopt;
    m.last_cc = *cc;
    uint32_t n1 = r.u32();
    if (!r.ok() || n1 > 4096) return std::nullopt;
    for (uint32_t i = 0; i < n1; ++i) {
        Bytes pb = r.blob();
        ByteReader pr(pb);
        auto pc = PreparedCertificate::decode(pr);
        if (!pc || !pr.at_end()) return std::nullopt;
        m.executed_tail.push_back(*pc);
    }
    uint32_t n2 = r.u32();
    if (!r.ok() || n2 > 4096) return std::nullopt;
    for (uint32_t i = 0; i < n2; ++i) {
        Bytes pb = r.blob();
        ByteReader pr(pb);
        auto pc = PreparedCertificate::decode(pr);
        if (!pc || !pr.at_end()) return std::nullopt;
        m.cc_window_pcs.push_back(*pc);
    }
    uint32_t n3 = r.u32();
    if (!r.ok() || n3 > 4096) return std::nullopt;
    for (uint32_t i = 0; i < n3; ++i) {
        Bytes rb = r.blob();
        ByteReader qr(rb);
        auto req = ClientRequest::decode(qr);
        if (!req || !qr.at_end()) return std::nullopt;
        m.request_table.push_back(*req);
    }
    if (!r.ok()) return std::nullopt;
    return m;
}

}  // namespace

Bytes SignedViewState::encode() const {
    ByteWriter w;
    w.u32(sender);
    ByteWriter bw;
    encode_view_state_body(bw, body);
    w.blob(bw.bytes());
    put_sig(w, sig);
    return w.take();
}

std::optional<SignedViewState> SignedViewState::decode(ByteReader& r) {
    SignedViewState sv;
    sv.sender = r.u32();
    Bytes b = r.blob();
    ByteReader rr(b);
    auto vs = decode_view_state_body(rr);
    if (!vs || !rr.at_end()) return std::nullopt;
    sv.body = *vs;
    sv.sig = get_sig(r);
    if (!r.ok()) return std::nullopt;
    return sv;
}

namespace {

struct BodyEncoder {
    ByteWriter& w;

    void operator()(const RequestMsg& m) { w.blob(m.request.encode()); }

    void operator()(const ProposeMsg& m) { w.blob(m.proposal.encode()); }

    void operator()(const PrepareMsg& m) {
        w.u64(m.view);
        w.i64(m.round);
        put_digest(w, m.req_digest);
    }

    void operator()(const InformMsg& m) {
        put_digest(w, m.req_digest);
        w.u64(m.view);
        w.i64(m.round);
        w.blob(m.result);
        w.u8(m.request.has_value() ? 1 : 0);
        if (m.request) w.blob(m.request->encode());
    }

    void operator()(const CheckCommitMsg& m) {
        w.u64(m.view);
        w.i64(m.round);
        put_digest(w, m.req_digest);
        w.u8(m.pc.has_value() ? 1 : 0);
        if (m.pc) w.blob(m.pc->encode());
    }

    void operator()(const FailureMsg& m) {
        w.u64(m.view);
        w.u32(uint32_t(m.equivocation.size()));
        for (const auto& sp : m.equivocation) w.blob(sp.encode());
    }

    void operator()(const ViewStateMsg& m) { encode_view_state_body(w, m); }

    void operator()(const NewViewMsg& m) {
        w.u64(m.new_view);
        w.u32(uint32_t(m.view_states.size()));
        for (const auto& sv : m.view_states) w.blob(sv.encode());
    }

    void operator()(const QueryCCMsg& m) { w.i64(m.round); }

    void operator()(const RespondCCMsg& m) {
        w.i64(m.round);
        w.blob(m.pc.encode());
        w.u8(m.cc.has_value() ? 1 : 0);
        if (m.cc) w.blob(m.cc->encode());
        w.u8(m.request.has_value() ? 1 : 0);
        if (m.request) w.blob(m.request->encode());
    }

    void operator()(const InformCCMsg& m) {
        put_digest(w, m.req_digest);
        w.i64(m.round);
        w.blob(m.result);
        w.u8(m.request.has_value() ? 1 : 0);
        if (m.request) w.blob(m.request->encode());
    }

    void operator()(const SupportMsg& m) {
        w.u64(m.view);
        w.i64(m.round);
        put_digest(w, m.req_digest);
        put_share(w, m.share);
    }

    void operator()(const CertifyMsg& m) { w.blob(m.pc.encode()); }

    void operator()(const SupportCCMsg& m) {
        w.i64(m.round);
        put_digest(w, m.window_digest);
        put_share(w, m.share_nf);
        put_share(w, m.share_rec);
    }

    void operator()(const RecoveryCCMsg& m) {
        w.i64(m.round);
        put_digest(w, m.window_digest);
        w.blob(m.rc.encode());
    }

    void operator()(const CertifyCCMsg& m) {
        w.i64(m.round);
        put_digest(w, m.window_digest);
        w.blob(m.cc.encode());
    }
};

template <typename T, typename F>
std::optional<MessageBody> decode_as(ByteReader& r, F f) {
    auto v = f(r);
    if (!v) return std::nullopt;
    return MessageBody(std::in_place_type<T>, *v);
}

std::optional<MessageBody> decode_body(MsgKind kind, ByteReader& r) {
    switch (kind) {
        case MsgKind::Request: {
            Bytes b = r.blob();
            ByteReader rr(b);
            auto req = ClientRequest::decode(rr);
            if (!req || !rr.at_end()) return std::nullopt;
            return MessageBody(RequestMsg{*req});
        }
        case MsgKind::Propose: {
            Bytes b = r.blob();
            ByteReader rr(b);
            auto p = Proposal::decode(rr);
            if (!p || !rr.at_end()) return std::nullopt;
            return MessageBody(ProposeMsg{*p});
        }
        case MsgKind::Prepare: {
            PrepareMsg m;
            m.view = r.u64();
            m.round = r.i64();
            m.req_digest = get_digest(r);
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::Inform: {
            InformMsg m;
            m.req_digest = get_digest(r);
            m.view = r.u64();
            m.round = r.i64();
            m.result = r.blob();
            if (r.u8()) {
                Bytes b = r.blob();
                ByteReader rr(b);
                auto req = ClientRequest::decode(rr);
                if (!req || !rr.at_end()) return std::nullopt;
                m.request = *req;
            }
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::CheckCommit: {
            CheckCommitMsg m;
            m.view = r.u64();
            m.round = r.i64();
            m.req_digest = get_digest(r);
            if (r.u8()) {
                Bytes b = r.blob();
                ByteReader rr(b);
                auto pc = PreparedCertificate::decode(rr);
                if (!pc || !rr.at_end()) return std::nullopt;
                m.pc = *pc;
            }
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::Failure: {
            FailureMsg m;
            m.view = r.u64();
            uint32_t n = r.u32();
            if (!r.ok() || n > 2) return std::nullopt;
            for (uint32_t i = 0; i < n; ++i) {
                Bytes b = r.blob();
                ByteReader rr(b);
                auto sp = SignedPropose::decode(rr);
                if (!sp || !rr.at_end()) return std::nullopt;
                m.equivocation.push_back(*sp);
            }
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::ViewState: {
            auto m = decode_view_state_body(r);
            if (!m) return std::nullopt;
            return MessageBody(*m);
        }
        case MsgKind::NewView: {
            NewViewMsg m;
            m.new_view = r.u64();
            uint32_t n = r.u32();
            if (!r.ok() || n > 4096) return std::nullopt;
            for (uint32_t i = 0; i < n; ++i) {
                Bytes b = r.blob();
                ByteReader rr(b);
                auto sv = SignedViewState::decode(rr);
                if (!sv || !rr.at_end()) return std::nullopt;
                m.view_states.push_back(*sv);
            }
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::QueryCC: {
            QueryCCMsg m;
            m.round = r.i64();
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::RespondCC: {
            RespondCCMsg m;
            m.round = r.i64();
            Bytes b = r.blob();
            ByteReader rr(b);
            auto pc = PreparedCertificate::decode(rr);
            if (!pc || !rr.at_end()) return std::nullopt;
            m.pc = *pc;
            if (r.u8()) {
                Bytes cb = r.blob();
                ByteReader cr(cb);
                auto cc = CommitCertificate::decode(cr);
                if (!cc || !cr.at_end()) return std::nullopt;
                m.cc = *cc;
            }
            if (r.u8()) {
                Bytes qb = r.blob();
                ByteReader qr(qb);
                auto req = ClientRequest::decode(qr);
                if (!req || !qr.at_end()) return std::nullopt;
                m.request = *req;
            }
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::InformCC: {
            InformCCMsg m;
            m.req_digest = get_digest(r);
            m.round = r.i64();
            m.result = r.blob();
            if (r.u8()) {
                Bytes b = r.blob();
                ByteReader rr(b);
                auto req = ClientRequest::decode(rr);
                if (!req || !rr.at_end()) return std::nullopt;
                m.request = *req;
            }
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::Support: {
            SupportMsg m;
            m.view = r.u64();
            m.round = r.i64();
            m.req_digest = get_digest(r);
            m.share = get_share(r);
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::Certify: {
            Bytes b = r.blob();
            ByteReader rr(b);
            auto pc = PreparedCertificate::decode(rr);
            if (!pc || !rr.at_end() || !r.ok()) return std::nullopt;
            return MessageBody(CertifyMsg{*pc});
        }
        case MsgKind::SupportCC: {
            SupportCCMsg m;
            m.round = r.i64();
            m.window_digest = get_digest(r);
            m.share_nf = get_share(r);
            m.share_rec = get_share(r);
            if (!r.ok()) return std::nullopt;
            return MessageBody(m);
        }
        case MsgKind::RecoveryCC: {
            RecoveryCCMsg m;
            m.round = r.i64();
            m.window_digest = get_digest(r);
            Bytes b = r.blob();
            ByteReader rr(b);
            auto rc = RecoveryCertificate::decode(rr);
            if (!rc || !rr.at_end() || !r.ok()) return std::nullopt;
            m.rc = *rc;
            return MessageBody(m);
        }
        case MsgKind::CertifyCC: {
            CertifyCCMsg m;
            m.round = r.i64();
            m.window_digest = get_digest(r);
            Bytes b = r.blob();
            ByteReader rr(b);
            auto cc = CommitCertificate::decode(rr);
            if (!cc || !rr.at_end() || !r.ok()) return std::nullopt;
            m.cc = *cc;
            return MessageBody(m);
        }
    }
    return std::nullopt;
}

}  // namespace

Bytes Message::signing_bytes() const {
    ByteWriter w;
    w.u8(uint8_t(kind()));
    w.u32(sender.encoded());
    BodyEncoder enc{w};
    std::visit(enc, body);
    return w.take();
}

Bytes Message::encode() const {
    ByteWriter w;
    Bytes sb = signing_bytes();
    w.raw(sb.data(), sb.size());
    put_sig(w, sig);
    return w.take();
}

std::optional<Message> Message::decode(const Bytes& bytes) {
    ByteReader r(bytes);
    Message m;
    uint8_t kind = r.u8();
    if (!r.ok() || kind > uint8_t(MsgKind::CertifyCC)) return std::nullopt;
    m.sender = Identity::decode(r.u32());
    auto body = decode_body(MsgKind(kind), r);
    if (!body) return std::nullopt;
    m.body = std::move(*body);
    m.sig = get_sig(r);
    if (!r.at_end()) return std::nullopt;
    return m;
}

Message make_message(const AuthProvider& auth, Identity sender, MessageBody body) {
    Message m;
    m.sender = sender;
    m.body = std::move(body);
    m.sig = auth.sign(sender, m.signing_bytes());
    return m;
}

Bytes propose_sign_bytes(ReplicaId sender, const Proposal& p) {
    Message tmp;
    tmp.sender = Identity::replica(sender);
    tmp.body = ProposeMsg{p};
    return tmp.signing_bytes();
}

Bytes view_state_sign_bytes(ReplicaId sender, const ViewStateMsg& body) {
    Message tmp;
    tmp.sender = Identity::replica(sender);
    tmp.body = body;
    return tmp.signing_bytes();
}

Bytes check_commit_sign_bytes(ReplicaId sender, ViewNo view, RoundNo round, const DigestValue& req_digest,
                              const std::optional<PreparedCertificate>& pc) {
    Message tmp;
    tmp.sender = Identity::replica(sender);
    tmp.body = CheckCommitMsg{view, round, req_digest, pc};
    return tmp.signing_bytes();
}

}  // namespace poe
