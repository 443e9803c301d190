#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "poe/auth.hpp"
#include "poe/bytes.hpp"
#include "poe/config.hpp"

namespace poe {

// A signed client transaction <tau>_gamma.
struct ClientRequest {
    Identity client;
    uint64_t seq = 0;
    Bytes payload;
    SignatureEvidence sig;

    Bytes signing_bytes() const;
    Bytes encode() const;
    static std::optional<ClientRequest> decode(ByteReader& r);

    bool operator==(const ClientRequest&) const = default;
};

ClientRequest make_request(const AuthProvider& auth, uint32_t client_idx, uint64_t seq, const Bytes& payload);
DigestValue request_digest(const AuthProvider& auth, const ClientRequest& req);

// The logical proposal m = Propose(<tau>_gamma, v, rho).
struct Proposal {
    ViewNo view = 0;
    RoundNo round = 0;
    ClientRequest request;

    Bytes encode() const;
    static std::optional<Proposal> decode(ByteReader& r);
    bool operator==(const Proposal&) const = default;
};

// ---------------------------------------------------------------------------
// Certificates

struct PreparedCertificate {
    enum class Kind : uint8_t { Signatures = 0, Threshold = 1, PreGenesis = 2 };

    Kind kind = Kind::Signatures;
    ViewNo view = 0;
    RoundNo round = 0;
    DigestValue req_digest;
    std::optional<ClientRequest> request;        // embedded in standard (non-digest) mode
    std::vector<SignatureEvidence> evidence;     // Kind::Signatures, sorted by signer
    std::optional<ThresholdSig> tsig;            // Kind::Threshold

    bool is_pre_genesis() const { return kind == Kind::PreGenesis; }

    Bytes encode() const;
    static std::optional<PreparedCertificate> decode(ByteReader& r);
    bool operator==(const PreparedCertificate&) const = default;

    // Quorum-checked factories; throw ConfigError on anything below quorum.
    static PreparedCertificate from_prepares(const SystemConfig& cfg, const AuthProvider& auth, ViewNo view,
                                             RoundNo round, const DigestValue& req_digest,
                                             const std::optional<ClientRequest>& request,
                                             std::vector<SignatureEvidence> evidence);
    static PreparedCertificate from_threshold(const SystemConfig& cfg, const AuthProvider& auth, ViewNo view,
                                              RoundNo round, const DigestValue& req_digest, const ThresholdSig& sig);
    static PreparedCertificate pre_genesis(RoundNo round);
};

// Bytes a replica signs when broadcasting Prepare(m) for (v, rho, d).
Bytes prepare_sign_bytes(ViewNo view, RoundNo round, const DigestValue& req_digest, ReplicaId sender);
// Bytes covered by threshold shares in the linear prepare path.
Bytes prepare_share_bytes(ViewNo view, RoundNo round, const DigestValue& req_digest);

// One re-verifiable CheckCommit message inside a standard commit certificate.
struct CheckCommitEvidence {
    ReplicaId sender = 0;
    SignatureEvidence sig;
    std::optional<PreparedCertificate> pc;  // present in PC-carrying mode

    Bytes encode() const;
    static std::optional<CheckCommitEvidence> decode(ByteReader& r);
    bool operator==(const CheckCommitEvidence&) const = default;
};

struct CommitCertificate {
    enum class Kind : uint8_t { Dummy = 0, Standard = 1, Linear = 2 };

    Kind kind = Kind::Dummy;
    ViewNo view = 0;
    RoundNo round = 0;
    DigestValue req_digest;
    std::optional<ClientRequest> request;     // standard (non-digest) mode copy
    std::vector<CheckCommitEvidence> entries;
    DigestValue window_digest;                // Kind::Linear
    std::optional<ThresholdSig> tsig;         // Kind::Linear

    bool is_dummy() const { return kind == Kind::Dummy; }
    // Lowest/highest round this certificate decides.
    RoundNo covers_from(const SystemConfig& cfg) const;
    RoundNo covers_to() const { return kind == Kind::Dummy ? 0 : round; }

    Bytes encode() const;
    static std::optional<CommitCertificate> decode(ByteReader& r);
    bool operator==(const CommitCertificate&) const = default;

    static CommitCertificate dummy();
    static CommitCertificate from_check_commits(const SystemConfig& cfg, const AuthProvider& auth, ViewNo view,
                                                RoundNo round, const DigestValue& req_digest,
                                                const std::optional<ClientRequest>& request,
                                                std::vector<CheckCommitEvidence> entries, bool digest_mode);
    static CommitCertificate linear(const SystemConfig& cfg, const AuthProvider& auth, RoundNo round,
                                    const DigestValue& window_digest, const ThresholdSig& sig);
};

struct RecoveryCertificate {
    RoundNo round = 0;
    DigestValue window_digest;
    ThresholdSig tsig{ThresholdScheme::Recovery, {}};

    Bytes encode() const;
    static std::optional<RecoveryCertificate> decode(ByteReader& r);
    bool operator==(const RecoveryCertificate&) const = default;
};

// Bytes covered by SupportCC shares (both schemes) for round rho and
// multi-round digest D.
Bytes support_cc_share_bytes(RoundNo round, const DigestValue& window_digest);

// Order-sensitive digest over the prepared certificates of rounds
// rho-(n-1)..rho; pre-genesis rounds use default certificates.
DigestValue window_digest_over(const AuthProvider& auth, RoundNo round,
                               const std::vector<const PreparedCertificate*>& window);

// ---------------------------------------------------------------------------
// Wire messages

enum class MsgKind : uint8_t {
    Request = 0,  // transport framing for a bare client request
    Propose = 1,
    Prepare = 2,
    Inform = 3,
    CheckCommit = 4,
    Failure = 5,
    ViewState = 6,
    NewView = 7,
    QueryCC = 8,
    RespondCC = 9,
    InformCC = 10,
    Support = 11,
    Certify = 12,
    SupportCC = 13,
    RecoveryCC = 14,
    CertifyCC = 15,
};

const char* msg_kind_name(MsgKind k);

struct RequestMsg {
    ClientRequest request;
    bool operator==(const RequestMsg&) const = default;
};

struct ProposeMsg {
    Proposal proposal;
    bool operator==(const ProposeMsg&) const = default;
};

struct PrepareMsg {
    ViewNo view = 0;
    RoundNo round = 0;
    DigestValue req_digest;
    bool operator==(const PrepareMsg&) const = default;
};

struct InformMsg {
    DigestValue req_digest;
    ViewNo view = 0;
    RoundNo round = 0;
    Bytes result;
    std::optional<ClientRequest> request;  // standard mode carries the request
    bool operator==(const InformMsg&) const = default;
};

struct CheckCommitMsg {
    ViewNo view = 0;
    RoundNo round = 0;
    DigestValue req_digest;
    std::optional<PreparedCertificate> pc;  // PC-carrying mode
    bool operator==(const CheckCommitMsg&) const = default;
};

// A full signed Propose, embeddable as equivocation evidence.
struct SignedPropose {
    ReplicaId sender = 0;
    Proposal proposal;
    SignatureEvidence sig;

    Bytes encode() const;
    static std::optional<SignedPropose> decode(ByteReader& r);
    bool operator==(const SignedPropose&) const = default;
};

struct FailureMsg {
    ViewNo view = 0;
    std::vector<SignedPropose> equivocation;  // empty or two conflicting proposals
    bool operator==(const FailureMsg&) const = default;
};

struct ViewStateMsg {
    ViewNo view = 0;
    CommitCertificate last_cc;
    std::vector<PreparedCertificate> executed_tail;  // E, rounds ascending
    std::vector<PreparedCertificate> cc_window_pcs;  // linear: PCs behind last_cc's window digest
    std::vector<ClientRequest> request_table;        // digest/linear: requests behind the digests above
    bool operator==(const ViewStateMsg&) const = default;
};

// A full signed ViewState, embeddable inside NewView.
struct SignedViewState {
    ReplicaId sender = 0;
    ViewStateMsg body;
    SignatureEvidence sig;

    Bytes encode() const;
    static std::optional<SignedViewState> decode(ByteReader& r);
    bool operator==(const SignedViewState&) const = default;
};

struct NewViewMsg {
    ViewNo new_view = 0;
    std::vector<SignedViewState> view_states;  // V: exactly the first nf collected
    bool operator==(const NewViewMsg&) const = default;
};

struct QueryCCMsg {
    RoundNo round = 0;
    bool operator==(const QueryCCMsg&) const = default;
};

struct RespondCCMsg {
    RoundNo round = 0;
    PreparedCertificate pc;
    std::optional<CommitCertificate> cc;    // absent when answering a PC-only fetch
    std::optional<ClientRequest> request;   // digest/linear: the request behind pc
    bool operator==(const RespondCCMsg&) const = default;
};

struct InformCCMsg {
    DigestValue req_digest;
    RoundNo round = 0;
    Bytes result;
    std::optional<ClientRequest> request;
    bool operator==(const InformCCMsg&) const = default;
};

struct SupportMsg {
    ViewNo view = 0;
    RoundNo round = 0;
    DigestValue req_digest;
    Share share{ThresholdScheme::PrepareQuorum, 0, {}, {}};
    bool operator==(const SupportMsg&) const = default;
};

struct CertifyMsg {
    PreparedCertificate pc;  // threshold variant
    bool operator==(const CertifyMsg&) const = default;
};

struct SupportCCMsg {
    RoundNo round = 0;
    DigestValue window_digest;
    Share share_nf{ThresholdScheme::PrepareQuorum, 0, {}, {}};
    Share share_rec{ThresholdScheme::Recovery, 0, {}, {}};
    bool operator==(const SupportCCMsg&) const = default;
};

struct RecoveryCCMsg {
    RoundNo round = 0;
    DigestValue window_digest;
    RecoveryCertificate rc;
    bool operator==(const RecoveryCCMsg&) const = default;
};

struct CertifyCCMsg {
    RoundNo round = 0;
    DigestValue window_digest;
    CommitCertificate cc;  // linear variant
    bool operator==(const CertifyCCMsg&) const = default;
};

using MessageBody = std::variant<RequestMsg, ProposeMsg, PrepareMsg, InformMsg, CheckCommitMsg, FailureMsg,
                                 ViewStateMsg, NewViewMsg, QueryCCMsg, RespondCCMsg, InformCCMsg, SupportMsg,
                                 CertifyMsg, SupportCCMsg, RecoveryCCMsg, CertifyCCMsg>;

struct Message {
    Identity sender;
    MessageBody body;
    SignatureEvidence sig;

    MsgKind kind() const { return MsgKind(body.index()); }
    const char* kind_name() const { return msg_kind_name(kind()); }

    template <typename T>
    const T* as() const {
        return std::get_if<T>(&body);
    }

    Bytes signing_bytes() const;
    Bytes encode() const;
    static std::optional<Message> decode(const Bytes& bytes);

    bool operator==(const Message&) const = default;
};

Message make_message(const AuthProvider& auth, Identity sender, MessageBody body);

// Signing bytes of embedded evidence messages, rebuildable by verifiers.
Bytes propose_sign_bytes(ReplicaId sender, const Proposal& p);
Bytes view_state_sign_bytes(ReplicaId sender, const ViewStateMsg& body);
Bytes check_commit_sign_bytes(ReplicaId sender, ViewNo view, RoundNo round, const DigestValue& req_digest,
                              const std::optional<PreparedCertificate>& pc);

// ---------------------------------------------------------------------------
// Well-formedness

enum class RejectReason { BadSignature, BadArity, Oversize, BadQuorum };

const char* reject_reason_name(RejectReason r);

struct ValidationResult {
    bool ok = true;
    RejectReason reason = RejectReason::BadArity;
    std::string detail;

    static ValidationResult well_formed() { return ValidationResult{}; }
    static ValidationResult reject(RejectReason r, std::string d) { return ValidationResult{false, r, std::move(d)}; }
    explicit operator bool() const { return ok; }
};

ValidationResult validate_request(const ClientRequest& req, const SystemConfig& cfg, const AuthProvider& auth);
ValidationResult validate_pc(const PreparedCertificate& pc, const SystemConfig& cfg, const AuthProvider& auth);
ValidationResult validate_cc(const CommitCertificate& cc, const SystemConfig& cfg, const AuthProvider& auth);
ValidationResult validate_rc(const RecoveryCertificate& rc, const SystemConfig& cfg, const AuthProvider& auth);

// Full message well-formedness: signer identity, structural arity per mode,
// size bounds, and every embedded certificate's quorum rules, reporting the
// first violated rule.
ValidationResult validate(const Message& msg, const SystemConfig& cfg, const AuthProvider& auth);

}  // namespace poe
