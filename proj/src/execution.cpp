#include "poe/execution.hpp"

#include <sstream>
#include <stdexcept>

namespace poe {

namespace {

std::vector<std::string> tokenize(const Bytes& payload) {
    std::istringstream in(to_string(payload));
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

}  // namespace

Bytes AppState::apply(RoundNo round, const Bytes& payload) {
    if (round != applied_ + 1)
        throw std::logic_error("out-of-order apply: round " + std::to_string(round) + " after " +
                               std::to_string(applied_));

    UndoRecord undo;
    undo.round = round;
    Bytes result;

    std::vector<std::string> tokens = tokenize(payload);
    if (tokens.size() == 3 && tokens[0] == "SET") {
        undo.key = tokens[1];
        undo.touched = true;
        auto it = kv_.find(tokens[1]);
        if (it != kv_.end()) undo.previous = it->second;
        kv_[tokens[1]] = tokens[2];
        result = to_bytes("OK");
    } else if (tokens.size() == 2 && tokens[0] == "GET") {
        auto it = kv_.find(tokens[1]);
        result = to_bytes(it != kv_.end() ? it->second : "NIL");
    } else if (tokens.size() == 2 && tokens[0] == "DEL") {
        auto it = kv_.find(tokens[1]);
        if (it != kv_.end()) {
            undo.key = tokens[1];
            undo.previous = it->second;
            undo.touched = true;
            kv_.erase(it);
            result = to_bytes("OK");
        } else {
            result = to_bytes("NIL");
        }
    } else if (tokens.size() == 1 && tokens[0] == "NOOP") {
        result = to_bytes("OK");
    } else {
        result = to_bytes("ERR bad-command");
    }

    journal_.push_back(std::move(undo));
    applied_ = round;
    return result;
}

void AppState::rollback_to(RoundNo round) {
    if (round > applied_)
        throw std::logic_error("rollback_to round " + std::to_string(round) + " above applied prefix " +
                               std::to_string(applied_));
    while (applied_ > round) {
        UndoRecord& undo = journal_.back();
        if (undo.touched) {
            if (undo.previous)
                kv_[undo.key] = *undo.previous;
            else
                kv_.erase(undo.key);
        }
        applied_ = undo.round - 1;
        journal_.pop_back();
    }
}

DigestValue AppState::state_digest(const AuthProvider& auth) const {
    ByteWriter w;
    w.u32(uint32_t(kv_.size()));
    for (const auto& [k, v] : kv_) {
        w.str(k);
        w.str(v);
    }
    return auth.digest(w.bytes());
}

}  // namespace poe
