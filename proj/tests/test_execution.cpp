#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "poe/execution.hpp"

using namespace poe;

namespace {

Bytes b(const std::string& s) { return to_bytes(s); }

AuthProvider& auth() {
    static AuthProvider a(1, SystemConfig::make(4, 1));
    return a;
}

Bytes random_command(std::mt19937_64& rng) {
    const char* keys[] = {"a", "b", "c", "k1", "k2"};
    std::string key = keys[rng() % 5];
    switch (rng() % 4) {
        case 0: return b("SET " + key + " v" + std::to_string(rng() % 100));
        case 1: return b("GET " + key);
        case 2: return b("DEL " + key);
        default: return b("NOOP");
    }
}

}  // namespace

TEST_CASE("set then get") {
    AppState st;
    CHECK(st.apply(1, b("SET k 5")) == b("OK"));
    CHECK(st.apply(2, b("GET k")) == b("5"));
    CHECK(st.apply(3, b("DEL k")) == b("OK"));
    CHECK(st.apply(4, b("GET k")) == b("NIL"));
    CHECK(st.apply(5, b("DEL k")) == b("NIL"));
}

TEST_CASE("malformed command leaves state unchanged") {
    AppState st;
    st.apply(1, b("SET k 5"));
    DigestValue before = st.state_digest(auth());
    CHECK(st.apply(2, b("FROB k")) == b("ERR bad-command"));
    CHECK(st.apply(3, b("SET")) == b("ERR bad-command"));
    st.rollback_to(1);
    CHECK(st.state_digest(auth()) == before);
}

TEST_CASE("out-of-order apply is an error") {
    AppState st;
    st.apply(1, b("NOOP"));
    CHECK_THROWS_AS(st.apply(3, b("NOOP")), std::logic_error);
    CHECK_THROWS_AS(st.apply(1, b("NOOP")), std::logic_error);
    CHECK_THROWS_AS(st.rollback_to(5), std::logic_error);
}

TEST_CASE("identical command sequences yield identical digests") {
    std::vector<Bytes> cmds;
    std::mt19937_64 rng(42);
    for (int i = 0; i < 10; ++i) cmds.push_back(random_command(rng));

    AppState a, bst;
    for (RoundNo r = 1; r <= 10; ++r) {
        Bytes ra = a.apply(r, cmds[r - 1]);
        Bytes rb = bst.apply(r, cmds[r - 1]);
        CHECK(ra == rb);
    }
    CHECK(a.state_digest(auth()) == bst.state_digest(auth()));
}

TEST_CASE("rollback restores the snapshot exactly") {
    AppState st;
    std::vector<DigestValue> snapshots = {st.state_digest(auth())};
    std::mt19937_64 rng(7);
    for (RoundNo r = 1; r <= 5; ++r) {
        st.apply(r, random_command(rng));
        snapshots.push_back(st.state_digest(auth()));
    }
    st.rollback_to(3);
    CHECK(st.applied_prefix() == 3);
    CHECK(st.state_digest(auth()) == snapshots[3]);

    st.rollback_to(3);  // no-op at the boundary
    CHECK(st.state_digest(auth()) == snapshots[3]);

    st.rollback_to(0);
    CHECK(st.state_digest(auth()) == snapshots[0]);
}

TEST_CASE("rollback then divergent replay equals a fresh run") {
    // Oracle: a fresh replay from the empty state.
    std::mt19937_64 rng(1234);
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<Bytes> base, replacement;
        for (int i = 0; i < 5; ++i) base.push_back(random_command(rng));
        for (int i = 0; i < 2; ++i) replacement.push_back(random_command(rng));

        AppState live;
        for (RoundNo r = 1; r <= 5; ++r) live.apply(r, base[r - 1]);
        live.rollback_to(3);
        live.apply(4, replacement[0]);
        live.apply(5, replacement[1]);

        AppState fresh;
        fresh.apply(1, base[0]);
        fresh.apply(2, base[1]);
        fresh.apply(3, base[2]);
        fresh.apply(4, replacement[0]);
        fresh.apply(5, replacement[1]);

        CHECK(live.state_digest(auth()) == fresh.state_digest(auth()));
    }
}

TEST_CASE("property: rollback then replay reproduces the original digest") {
    std::mt19937_64 rng(99);
    for (int iter = 0; iter < 50; ++iter) {
        size_t len = 1 + rng() % 12;
        std::vector<Bytes> cmds;
        for (size_t i = 0; i < len; ++i) cmds.push_back(random_command(rng));

        AppState st;
        for (RoundNo r = 1; r <= RoundNo(len); ++r) st.apply(r, cmds[r - 1]);
        DigestValue original = st.state_digest(auth());

        RoundNo cut = RoundNo(rng() % len);
        st.rollback_to(cut);
        for (RoundNo r = cut + 1; r <= RoundNo(len); ++r) st.apply(r, cmds[r - 1]);
        CHECK(st.state_digest(auth()) == original);
    }
}
