#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "poe/auth.hpp"
#include "poe/bytes.hpp"
#include "poe/config.hpp"

namespace poe {

// Replicated application state: a string key-value store executing one
// command per round with an undo journal for speculative rollback.
//
// Command encoding (the payload bytes of a client request):
//   "SET <key> <value>" -> "OK"
//   "GET <key>"         -> value or "NIL"
//   "DEL <key>"         -> "OK" if removed, "NIL" otherwise
//   "NOOP"              -> "OK"
// Anything else yields the deterministic error result "ERR bad-command" and
// leaves the state unchanged.
class AppState {
  public:
    // Applies the payload as the round-th transaction. Requires round to be
    // exactly applied_prefix() + 1.
    Bytes apply(RoundNo round, const Bytes& payload);

    // Restores the state to what it was right after `round` executed,
    // truncating the journal. Requires round <= applied_prefix().
    void rollback_to(RoundNo round);

    RoundNo applied_prefix() const { return applied_; }

    // Digest of the canonically sorted key-value pairs; equal digests mean
    // equal states.
    DigestValue state_digest(const AuthProvider& auth) const;

    const std::map<std::string, std::string>& data() const { return kv_; }

  private:
    struct UndoRecord {
        RoundNo round;
        std::string key;                    // empty for NOOP/GET/error rounds
        std::optional<std::string> previous;  // value to restore; nullopt = erase
        bool touched = false;
    };

    std::map<std::string, std::string> kv_;
    std::vector<UndoRecord> journal_;
    RoundNo applied_ = 0;
};

}  // namespace poe
