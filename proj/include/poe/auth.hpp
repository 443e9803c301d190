#pragma once

#include <array>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "poe/bytes.hpp"
#include "poe/config.hpp"

namespace poe {

// Fixed-width opaque digest. The simulated provider keeps a preimage table
// and aborts on any collision, so within one run digest(a) == digest(b)
// implies a == b.
struct DigestValue {
    std::array<uint8_t, 16> v{};

    bool operator==(const DigestValue&) const = default;
    auto operator<=>(const DigestValue&) const = default;
    bool is_zero() const {
        for (uint8_t b : v)
            if (b) return false;
        return true;
    }
    std::string hex() const { return poe::hex(v.data(), v.size()); }
    std::string short_hex() const { return poe::hex(v.data(), 4); }
};

struct SignatureEvidence {
    Identity signer;
    DigestValue tag;

    bool operator==(const SignatureEvidence&) const = default;
    auto operator<=>(const SignatureEvidence&) const = default;
};

enum class ThresholdScheme : uint8_t {
    PrepareQuorum = 0,  // n:nf, backs prepared and commit certificates
    Recovery = 1,       // n:(f+1), backs recovery certificates
};

struct Share {
    ThresholdScheme scheme;
    ReplicaId signer;
    DigestValue msg_digest;
    DigestValue tag;

    bool operator==(const Share&) const = default;
};

// Constant-size regardless of n: the signer-set witness lives behind the
// provider's mint table, only the tag travels.
struct ThresholdSig {
    ThresholdScheme scheme;
    DigestValue tag;

    bool operator==(const ThresholdSig&) const = default;
};

enum class AuthErrorCode {
    UnknownIdentity,
    InsufficientShares,
    InvalidShare,
};

struct AuthError : std::runtime_error {
    AuthErrorCode code;
    uint32_t got = 0;
    uint32_t need = 0;
    ReplicaId bad_signer = 0;

    AuthError(AuthErrorCode c, const std::string& what) : std::runtime_error(what), code(c) {}
};

// Deterministic simulated authentication provider. Signatures are
// (identity, keyed digest); threshold signatures are keyed digests minted
// only by combine. Nothing reachable from replica code can produce evidence
// that verifies for another identity: the per-identity keys and the scheme
// secrets never leave the provider.
class AuthProvider {
  public:
    AuthProvider(uint64_t seed, const SystemConfig& cfg);

    // Plain digest of arbitrary bytes, injective within this provider.
    DigestValue digest(std::span<const uint8_t> bytes) const;
    DigestValue digest(const Bytes& bytes) const { return digest(std::span<const uint8_t>(bytes)); }

    SignatureEvidence sign(Identity id, std::span<const uint8_t> bytes) const;
    SignatureEvidence sign(Identity id, const Bytes& bytes) const { return sign(id, std::span<const uint8_t>(bytes)); }
    bool verify(const SignatureEvidence& ev, Identity claimed, std::span<const uint8_t> bytes) const;
    bool verify(const SignatureEvidence& ev, Identity claimed, const Bytes& bytes) const {
        return verify(ev, claimed, std::span<const uint8_t>(bytes));
    }

    Share threshold_share(ThresholdScheme s, ReplicaId signer, std::span<const uint8_t> bytes) const;
    Share threshold_share(ThresholdScheme s, ReplicaId signer, const Bytes& bytes) const {
        return threshold_share(s, signer, std::span<const uint8_t>(bytes));
    }
    // True iff the share is a valid signature share from its claimed signer.
    bool verify_share(const Share& share) const;
    // Succeeds iff the shares contain >= y valid shares from distinct signers
    // all covering the same message.
    ThresholdSig threshold_combine(ThresholdScheme s, const std::vector<Share>& shares) const;
    bool threshold_verify(ThresholdScheme s, const ThresholdSig& sig, std::span<const uint8_t> bytes) const;
    bool threshold_verify(ThresholdScheme s, const ThresholdSig& sig, const Bytes& bytes) const {
        return threshold_verify(s, sig, std::span<const uint8_t>(bytes));
    }

    uint32_t threshold_y(ThresholdScheme s) const {
        return s == ThresholdScheme::PrepareQuorum ? cfg_.nf() : cfg_.f_plus_1();
    }

    const SystemConfig& config() const { return cfg_; }

  private:
    DigestValue raw_digest(uint8_t domain, std::span<const uint8_t> bytes) const;
    DigestValue identity_key(Identity id) const;
    DigestValue scheme_secret(ThresholdScheme s) const;
    DigestValue share_tag(ThresholdScheme s, ReplicaId signer, const DigestValue& msg) const;
    DigestValue combined_tag(ThresholdScheme s, const DigestValue& msg) const;

    uint64_t seed_;
    SystemConfig cfg_;
    mutable std::mutex mu_;
    mutable std::map<DigestValue, Bytes> preimages_;
};

}  // namespace poe
