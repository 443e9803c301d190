#include "poe/auth.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <set>

namespace poe {

namespace {

// Domain separators keep key derivation, plain digests, signatures, and the
// two threshold schemes in disjoint input spaces.
constexpr uint8_t kDomDigest = 0x01;
constexpr uint8_t kDomKey = 0x02;
constexpr uint8_t kDomSig = 0x03;
constexpr uint8_t kDomShare = 0x04;
constexpr uint8_t kDomCombined = 0x05;
constexpr uint8_t kDomSecret = 0x06;

uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// 128-bit non-cryptographic hash; collisions are caught by the preimage
// table, so practical injectivity is all that is required here.
DigestValue hash128(uint64_t seed, uint8_t domain, std::span<const uint8_t> bytes) {
    uint64_t h1 = mix64(seed ^ 0x9e3779b97f4a7c15ULL ^ domain);
    uint64_t h2 = mix64(seed ^ 0xc2b2ae3d27d4eb4fULL ^ (uint64_t(domain) << 32));
    size_t i = 0;
    while (i + 8 <= bytes.size()) {
        uint64_t k = 0;
        for (int b = 0; b < 8; ++b) k |= uint64_t(bytes[i + b]) << (8 * b);
        h1 = mix64(h1 ^ k);
        h2 = mix64(h2 + (k ^ 0xff51afd7ed558ccdULL));
        i += 8;
    }
    uint64_t tail = uint64_t(bytes.size()) << 56;
    for (int b = 0; i < bytes.size(); ++i, ++b) tail |= uint64_t(bytes[i]) << (8 * b);
    h1 = mix64(h1 ^ tail);
    h2 = mix64(h2 + (tail ^ 0x2545f4914f6cdd1dULL));
    h1 = mix64(h1 ^ h2);
    h2 = mix64(h2 ^ h1);

    DigestValue out;
    for (int b = 0; b < 8; ++b) out.v[b] = uint8_t(h1 >> (8 * b));
    for (int b = 0; b < 8; ++b) out.v[8 + b] = uint8_t(h2 >> (8 * b));
    return out;
}

}  // namespace

AuthProvider::AuthProvider(uint64_t seed, const SystemConfig& cfg) : seed_(seed), cfg_(cfg) {
    cfg_.check();
}

DigestValue AuthProvider::raw_digest(uint8_t domain, std::span<const uint8_t> bytes) const {
    return hash128(seed_, domain, bytes);
}

DigestValue AuthProvider::digest(std::span<const uint8_t> bytes) const {
    DigestValue d = raw_digest(kDomDigest, bytes);
    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = preimages_.try_emplace(d, Bytes(bytes.begin(), bytes.end()));
    if (!inserted && !std::equal(it->second.begin(), it->second.end(), bytes.begin(), bytes.end())) {
        std::fprintf(stderr, "poe: digest collision detected, injectivity table violated\n");
        std::abort();
    }
    return d;
}

DigestValue AuthProvider::identity_key(Identity id) const {
    ByteWriter w;
    w.u64(seed_);
    w.u32(id.encoded());
    return raw_digest(kDomKey, std::span<const uint8_t>(w.bytes()));
}

DigestValue AuthProvider::scheme_secret(ThresholdScheme s) const {
    ByteWriter w;
    w.u64(seed_);
    w.u8(uint8_t(s));
    w.u32(threshold_y(s));
    return raw_digest(kDomSecret, std::span<const uint8_t>(w.bytes()));
}

SignatureEvidence AuthProvider::sign(Identity id, std::span<const uint8_t> bytes) const {
    if (!id.is_client && id.index >= cfg_.n)
        throw AuthError(AuthErrorCode::UnknownIdentity, "no key for replica " + std::to_string(id.index));
    ByteWriter w;
    DigestValue key = identity_key(id);
    w.raw(key.v.data(), key.v.size());
    DigestValue body = digest(bytes);
    w.raw(body.v.data(), body.v.size());
    return SignatureEvidence{id, raw_digest(kDomSig, std::span<const uint8_t>(w.bytes()))};
}

bool AuthProvider::verify(const SignatureEvidence& ev, Identity claimed, std::span<const uint8_t> bytes) const {
    if (ev.signer != claimed) return false;
    if (!claimed.is_client && claimed.index >= cfg_.n) return false;
    ByteWriter w;
    DigestValue key = identity_key(claimed);
    w.raw(key.v.data(), key.v.size());
    DigestValue body = digest(bytes);
    w.raw(body.v.data(), body.v.size());
    return ev.tag == raw_digest(kDomSig, std::span<const uint8_t>(w.bytes()));
}

DigestValue AuthProvider::share_tag(ThresholdScheme s, ReplicaId signer, const DigestValue& msg) const {
    ByteWriter w;
    DigestValue key = identity_key(Identity::replica(signer));
    w.raw(key.v.data(), key.v.size());
    w.u8(uint8_t(s));
    w.raw(msg.v.data(), msg.v.size());
    return raw_digest(kDomShare, std::span<const uint8_t>(w.bytes()));
}

DigestValue AuthProvider::combined_tag(ThresholdScheme s, const DigestValue& msg) const {
    ByteWriter w;
    DigestValue secret = scheme_secret(s);
    w.raw(secret.v.data(), secret.v.size());
    w.raw(msg.v.data(), msg.v.size());
    return raw_digest(kDomCombined, std::span<const uint8_t>(w.bytes()));
}

Share AuthProvider::threshold_share(ThresholdScheme s, ReplicaId signer, std::span<const uint8_t> bytes) const {
    if (signer >= cfg_.n)
        throw AuthError(AuthErrorCode::UnknownIdentity, "no key for replica " + std::to_string(signer));
    DigestValue msg = digest(bytes);
    return Share{s, signer, msg, share_tag(s, signer, msg)};
}

bool AuthProvider::verify_share(const Share& share) const {
    if (share.signer >= cfg_.n) return false;
    return share.tag == share_tag(share.scheme, share.signer, share.msg_digest);
}

ThresholdSig AuthProvider::threshold_combine(ThresholdScheme s, const std::vector<Share>& shares) const {
    uint32_t need = threshold_y(s);
    std::set<ReplicaId> signers;
    std::optional<DigestValue> msg;
    for (const Share& sh : shares) {
        if (sh.scheme != s || sh.signer >= cfg_.n || sh.tag != share_tag(s, sh.signer, sh.msg_digest)) {
            AuthError e(AuthErrorCode::InvalidShare, "invalid share from replica " + std::to_string(sh.signer));
            e.bad_signer = sh.signer;
            throw e;
        }
        if (msg && !(*msg == sh.msg_digest)) {
            AuthError e(AuthErrorCode::InvalidShare, "shares cover different messages");
            e.bad_signer = sh.signer;
            throw e;
        }
        msg = sh.msg_digest;
        signers.insert(sh.signer);
    }
    if (signers.size() < need) {
        AuthError e(AuthErrorCode::InsufficientShares,
                    "got " + std::to_string(signers.size()) + " shares, need " + std::to_string(need));
        e.got = uint32_t(signers.size());
        e.need = need;
        throw e;
    }
    return ThresholdSig{s, combined_tag(s, *msg)};
}

bool AuthProvider::threshold_verify(ThresholdScheme s, const ThresholdSig& sig, std::span<const uint8_t> bytes) const {
    if (sig.scheme != s) return false;
    return sig.tag == combined_tag(s, digest(bytes));
}

}  // namespace poe
