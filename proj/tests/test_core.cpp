#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "poe/config.hpp"

using namespace poe;

TEST_CASE("quorum arithmetic") {
    CHECK(quorums(SystemConfig::make(4, 1)) == std::pair<uint32_t, uint32_t>{3, 2});
    CHECK(quorums(SystemConfig::make(7, 2)) == std::pair<uint32_t, uint32_t>{5, 3});
    CHECK(quorums(SystemConfig::make(4, 0)) == std::pair<uint32_t, uint32_t>{4, 1});
}

TEST_CASE("config rejects n <= 3f") {
    CHECK_THROWS_AS(SystemConfig::make(3, 1), ConfigError);
    CHECK_THROWS_AS(SystemConfig::make(6, 2), ConfigError);
    CHECK_THROWS_AS(SystemConfig::make(0, 0), ConfigError);
    SystemConfig bad = SystemConfig::make(4, 1);
    bad.window = 0;
    CHECK_THROWS_AS(bad.check(), ConfigError);
}

TEST_CASE("quorum intersection holds for all valid small configs") {
    // nf > 2f and 2(nf - f) > nf: the overlap argument behind non-divergence.
    for (uint32_t n = 1; n <= 40; ++n) {
        for (uint32_t f = 0; 3 * f < n; ++f) {
            SystemConfig cfg = SystemConfig::make(n, f);
            uint32_t nf = cfg.nf();
            CHECK(nf > 2 * f);
            CHECK(2 * (nf - f) > nf);
        }
    }
}

TEST_CASE("primary rotation") {
    SystemConfig cfg = SystemConfig::make(4, 1);
    CHECK(primary_of(0, cfg) == 0);
    CHECK(primary_of(5, cfg) == 1);
    CHECK(primary_of(4, cfg) == 0);
}

TEST_CASE("aggregator rotation") {
    SystemConfig cfg = SystemConfig::make(4, 1);
    cfg.linear_mode = true;
    CHECK(aggregator_of(6, cfg) == 2);
    CHECK(aggregator_of(0, cfg) == 0);
    CHECK(aggregator_of(4, cfg) == 0);
}

TEST_CASE("any n consecutive rounds hit every aggregator once") {
    SystemConfig cfg = SystemConfig::make(7, 2);
    cfg.linear_mode = true;
    for (RoundNo start = 1; start < 30; ++start) {
        std::set<ReplicaId> seen;
        for (RoundNo r = start; r < start + RoundNo(cfg.n); ++r) seen.insert(aggregator_of(r, cfg));
        CHECK(seen.size() == cfg.n);
    }
}

TEST_CASE("identity encoding round-trips") {
    for (uint32_t i : {0u, 1u, 17u, 4000u}) {
        CHECK(Identity::decode(Identity::replica(i).encoded()) == Identity::replica(i));
        CHECK(Identity::decode(Identity::client(i).encoded()) == Identity::client(i));
    }
    CHECK(Identity::replica(2) != Identity::client(2));
}
