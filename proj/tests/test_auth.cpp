#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "poe/auth.hpp"

using namespace poe;

namespace {

SystemConfig cfg4() { return SystemConfig::make(4, 1); }

Bytes b(const std::string& s) { return to_bytes(s); }

}  // namespace

TEST_CASE("sign/verify round-trip and impersonation") {
    AuthProvider auth(1, cfg4());
    Bytes m = b("hello");
    auto sig = auth.sign(Identity::replica(1), m);
    CHECK(auth.verify(sig, Identity::replica(1), m));
    CHECK_FALSE(auth.verify(sig, Identity::replica(2), m));
    CHECK_FALSE(auth.verify(sig, Identity::replica(1), b("hellp")));

    auto csig = auth.sign(Identity::client(0), m);
    CHECK(auth.verify(csig, Identity::client(0), m));
    CHECK_FALSE(auth.verify(csig, Identity::replica(0), m));
}

TEST_CASE("unknown replica identity rejected") {
    AuthProvider auth(1, cfg4());
    CHECK_THROWS_AS(auth.sign(Identity::replica(9), b("x")), AuthError);
}

TEST_CASE("digest determinism and injectivity") {
    AuthProvider auth(7, cfg4());
    CHECK(auth.digest(b("x")) == auth.digest(b("x")));
    CHECK_FALSE(auth.digest(b("x")) == auth.digest(b("y")));
    CHECK_FALSE(auth.digest(Bytes{}) == auth.digest(Bytes{0}));
}

TEST_CASE("multi-round digest is order-sensitive") {
    // Oracle: direct computation on two permutations of the same parts.
    AuthProvider auth(7, cfg4());
    ByteWriter fwd, rev;
    fwd.blob(b("pc1"));
    fwd.blob(b("pc2"));
    rev.blob(b("pc2"));
    rev.blob(b("pc1"));
    CHECK_FALSE(auth.digest(fwd.bytes()) == auth.digest(rev.bytes()));
}

TEST_CASE("threshold combine succeeds exactly at the scheme threshold") {
    AuthProvider auth(3, cfg4());
    Bytes m = b("proposal");

    std::vector<Share> shares;
    for (ReplicaId r : {0u, 1u, 2u}) shares.push_back(auth.threshold_share(ThresholdScheme::PrepareQuorum, r, m));
    auto sig = auth.threshold_combine(ThresholdScheme::PrepareQuorum, shares);
    CHECK(auth.threshold_verify(ThresholdScheme::PrepareQuorum, sig, m));
    CHECK_FALSE(auth.threshold_verify(ThresholdScheme::PrepareQuorum, sig, b("other")));
    CHECK_FALSE(auth.threshold_verify(ThresholdScheme::Recovery, ThresholdSig{ThresholdScheme::Recovery, sig.tag}, m));

    shares.pop_back();
    try {
        auth.threshold_combine(ThresholdScheme::PrepareQuorum, shares);
        FAIL("combine below threshold should throw");
    } catch (const AuthError& e) {
        CHECK(e.code == AuthErrorCode::InsufficientShares);
        CHECK(e.got == 2);
        CHECK(e.need == 3);
    }

    // Recovery scheme n:(f+1): two distinct shares suffice.
    std::vector<Share> rec = {auth.threshold_share(ThresholdScheme::Recovery, 0, m),
                              auth.threshold_share(ThresholdScheme::Recovery, 3, m)};
    auto rsig = auth.threshold_combine(ThresholdScheme::Recovery, rec);
    CHECK(auth.threshold_verify(ThresholdScheme::Recovery, rsig, m));
}

TEST_CASE("invalid and duplicated shares are rejected") {
    AuthProvider auth(3, cfg4());
    Bytes m = b("proposal");
    std::vector<Share> shares;
    for (ReplicaId r : {0u, 1u}) shares.push_back(auth.threshold_share(ThresholdScheme::PrepareQuorum, r, m));
    Share forged = shares[0];
    forged.signer = 2;  // tag no longer matches signer 2's key
    shares.push_back(forged);
    try {
        auth.threshold_combine(ThresholdScheme::PrepareQuorum, shares);
        FAIL("forged share should throw");
    } catch (const AuthError& e) {
        CHECK(e.code == AuthErrorCode::InvalidShare);
        CHECK(e.bad_signer == 2);
    }

    // Duplicates of one signer do not reach the threshold.
    std::vector<Share> dup = {auth.threshold_share(ThresholdScheme::PrepareQuorum, 0, m),
                              auth.threshold_share(ThresholdScheme::PrepareQuorum, 0, m),
                              auth.threshold_share(ThresholdScheme::PrepareQuorum, 1, m)};
    CHECK_THROWS_AS(auth.threshold_combine(ThresholdScheme::PrepareQuorum, dup), AuthError);
}

TEST_CASE("property: combine output verifies iff threshold met") {
    AuthProvider auth(11, SystemConfig::make(7, 2));
    Bytes m = b("value under test");
    std::mt19937_64 rng(99);
    for (int iter = 0; iter < 200; ++iter) {
        ThresholdScheme scheme = (iter % 2) ? ThresholdScheme::PrepareQuorum : ThresholdScheme::Recovery;
        uint32_t need = auth.threshold_y(scheme);
        std::vector<ReplicaId> ids = {0, 1, 2, 3, 4, 5, 6};
        std::shuffle(ids.begin(), ids.end(), rng);
        size_t take = rng() % (ids.size() + 1);
        std::vector<Share> shares;
        for (size_t i = 0; i < take; ++i) shares.push_back(auth.threshold_share(scheme, ids[i], m));
        if (take >= need) {
            auto sig = auth.threshold_combine(scheme, shares);
            CHECK(auth.threshold_verify(scheme, sig, m));
        } else {
            CHECK_THROWS_AS(auth.threshold_combine(scheme, shares), AuthError);
        }
    }
}

TEST_CASE("forgery audit: the byzantine-reachable API cannot mint foreign evidence") {
    // A faulty replica can sign with its own key, verify anything, digest
    // anything, and combine shares it actually holds. None of these calls
    // yield evidence that verifies for a non-faulty identity.
    AuthProvider auth(5, cfg4());
    Bytes m = b("victim message");
    Identity victim = Identity::replica(1);
    Identity attacker = Identity::replica(3);

    // Re-labelling its own signature does not verify.
    SignatureEvidence own = auth.sign(attacker, m);
    SignatureEvidence relabeled = own;
    relabeled.signer = victim;
    CHECK_FALSE(auth.verify(relabeled, victim, m));

    // A digest of the victim's would-be signing bytes is not a signature.
    SignatureEvidence fabricated{victim, auth.digest(m)};
    CHECK_FALSE(auth.verify(fabricated, victim, m));

    // Shares from the attacker alone (or duplicated) cannot reach either
    // threshold, and a fabricated threshold tag does not verify.
    std::vector<Share> only_own = {auth.threshold_share(ThresholdScheme::Recovery, 3, m)};
    CHECK_THROWS_AS(auth.threshold_combine(ThresholdScheme::Recovery, only_own), AuthError);
    ThresholdSig fake{ThresholdScheme::PrepareQuorum, auth.digest(m)};
    CHECK_FALSE(auth.threshold_verify(ThresholdScheme::PrepareQuorum, fake, m));

    // Tampering with a share's message re-binds nothing: the tag is keyed.
    Share sh = auth.threshold_share(ThresholdScheme::PrepareQuorum, 3, m);
    sh.msg_digest = auth.digest(b("other message"));
    CHECK_FALSE(auth.verify_share(sh));
}
