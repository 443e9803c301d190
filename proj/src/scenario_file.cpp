#include "poe/scenario_file.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace poe {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ScenarioParseError(where + ": " + what);
}

Identity parse_identity(const std::string& where, const std::string& s) {
    if (s.size() < 2 || (s[0] != 'r' && s[0] != 'c')) fail(where, "expected r<N> or c<N>, got '" + s + "'");
    uint32_t idx = 0;
    try {
        idx = uint32_t(std::stoul(s.substr(1)));
    } catch (...) {
        fail(where, "bad actor index in '" + s + "'");
    }
    return s[0] == 'r' ? Identity::replica(idx) : Identity::client(idx);
}

std::string identity_str(Identity id) { return id.label(); }

const char* behavior_name(ByzantineBehavior::Kind k) {
    switch (k) {
        case ByzantineBehavior::Kind::Silent: return "silent";
        case ByzantineBehavior::Kind::EquivocatePropose: return "equivocate-propose";
        case ByzantineBehavior::Kind::SelectiveSend: return "selective-send";
        case ByzantineBehavior::Kind::LieViewState: return "lie-in-viewstate";
        case ByzantineBehavior::Kind::WithholdInform: return "withhold-inform";
        case ByzantineBehavior::Kind::CrashAt: return "crash-at";
        case ByzantineBehavior::Kind::Scripted: return "scripted";
    }
    return "?";
}

std::optional<ByzantineBehavior::Kind> behavior_kind(const std::string& name) {
    for (auto k : {ByzantineBehavior::Kind::Silent, ByzantineBehavior::Kind::EquivocatePropose,
                   ByzantineBehavior::Kind::SelectiveSend, ByzantineBehavior::Kind::LieViewState,
                   ByzantineBehavior::Kind::WithholdInform, ByzantineBehavior::Kind::CrashAt,
                   ByzantineBehavior::Kind::Scripted})
        if (name == behavior_name(k)) return k;
    return std::nullopt;
}

std::optional<MsgKind> msg_kind_by_name(const std::string& name) {
    for (uint8_t k = 0; k <= uint8_t(MsgKind::CertifyCC); ++k)
        if (name == msg_kind_name(MsgKind(k))) return MsgKind(k);
    return std::nullopt;
}

BehaviorRule parse_rule(const std::string& where, const json& j) {
    BehaviorRule r;
    if (j.contains("view_min")) r.view_min = j.at("view_min").get<ViewNo>();
    if (j.contains("view_max")) r.view_max = j.at("view_max").get<ViewNo>();
    if (j.contains("time_min")) r.time_min = j.at("time_min").get<SimTime>();
    if (j.contains("time_max")) r.time_max = j.at("time_max").get<SimTime>();
    if (j.contains("drop_kinds"))
        for (const auto& k : j.at("drop_kinds")) {
            auto mk = msg_kind_by_name(k.get<std::string>());
            if (!mk) fail(where, "unknown message kind '" + k.get<std::string>() + "'");
            r.drop_kinds.insert(*mk);
        }
    if (j.contains("drop_input_kinds"))
        for (const auto& k : j.at("drop_input_kinds")) {
            auto mk = msg_kind_by_name(k.get<std::string>());
            if (!mk) fail(where, "unknown message kind '" + k.get<std::string>() + "'");
            r.drop_input_kinds.insert(*mk);
        }
    if (j.contains("restrict_dest"))
        for (const auto& [kind_name, dests] : j.at("restrict_dest").items()) {
            auto mk = msg_kind_by_name(kind_name);
            if (!mk) fail(where, "unknown message kind '" + kind_name + "'");
            std::set<ReplicaId> ids;
            for (const auto& d : dests) ids.insert(d.get<ReplicaId>());
            r.restrict_dest[*mk] = ids;
        }
    if (j.contains("lie_view_state")) r.lie_view_state = j.at("lie_view_state").get<bool>();
    if (j.contains("drop_propose_inputs")) r.drop_propose_inputs = j.at("drop_propose_inputs").get<bool>();
    return r;
}

json rule_to_json(const BehaviorRule& r) {
    json j = json::object();
    if (r.view_min) j["view_min"] = *r.view_min;
    if (r.view_max) j["view_max"] = *r.view_max;
    if (r.time_min) j["time_min"] = *r.time_min;
    if (r.time_max) j["time_max"] = *r.time_max;
    if (!r.drop_kinds.empty()) {
        json arr = json::array();
        for (MsgKind k : r.drop_kinds) arr.push_back(msg_kind_name(k));
        j["drop_kinds"] = arr;
    }
    if (!r.drop_input_kinds.empty()) {
        json arr = json::array();
        for (MsgKind k : r.drop_input_kinds) arr.push_back(msg_kind_name(k));
        j["drop_input_kinds"] = arr;
    }
    if (!r.restrict_dest.empty()) {
        json obj = json::object();
        for (const auto& [kind, ids] : r.restrict_dest) obj[msg_kind_name(kind)] = ids;
        j["restrict_dest"] = obj;
    }
    if (r.lie_view_state) j["lie_view_state"] = true;
    if (r.drop_propose_inputs) j["drop_propose_inputs"] = true;
    return j;
}

ByzantineBehavior parse_behavior(const std::string& where, const json& j) {
    ByzantineBehavior b;
    std::string kind = j.at("kind").get<std::string>();
    auto k = behavior_kind(kind);
    if (!k) fail(where, "unknown behavior '" + kind + "'");
    b.kind = *k;
    if (j.contains("blackout"))
        for (const auto& r : j.at("blackout")) b.blackout.insert(r.get<ReplicaId>());
    if (j.contains("crash_time")) b.crash_time = j.at("crash_time").get<SimTime>();
    if (j.contains("rules"))
        for (const auto& r : j.at("rules")) b.rules.push_back(parse_rule(where + ".rules", r));
    if (j.contains("split")) {
        const json& s = j.at("split");
        NewViewSplit split;
        split.for_view = s.at("for_view").get<ViewNo>();
        split.feed_self = s.value("feed_self", size_t(0));
        for (const auto& part : s.at("parts")) {
            NewViewSplit::Part p;
            for (const auto& m : part.at("members")) p.members.push_back(m.get<ReplicaId>());
            for (const auto& d : part.at("dests")) p.dests.push_back(parse_identity(where + ".split", d.get<std::string>()));
            split.parts.push_back(std::move(p));
        }
        b.split = split;
    }
    return b;
}

json behavior_to_json(const ByzantineBehavior& b) {
    json j = json::object();
    j["kind"] = behavior_name(b.kind);
    if (!b.blackout.empty()) j["blackout"] = b.blackout;
    if (b.kind == ByzantineBehavior::Kind::CrashAt) j["crash_time"] = b.crash_time;
    if (!b.rules.empty()) {
        json arr = json::array();
        for (const auto& r : b.rules) arr.push_back(rule_to_json(r));
        j["rules"] = arr;
    }
    if (b.split) {
        json s = json::object();
        s["for_view"] = b.split->for_view;
        s["feed_self"] = b.split->feed_self;
        json parts = json::array();
        for (const auto& p : b.split->parts) {
            json part = json::object();
            part["members"] = p.members;
            json dests = json::array();
            for (Identity d : p.dests) dests.push_back(identity_str(d));
            part["dests"] = dests;
        }
        // reassemble to keep member order stable
        parts = json::array();
        for (const auto& p : b.split->parts) {
            json part = json::object();
            part["members"] = p.members;
            json dests = json::array();
            for (Identity d : p.dests) dests.push_back(identity_str(d));
            part["dests"] = dests;
            parts.push_back(part);
        }
        s["parts"] = parts;
        j["split"] = s;
    }
    return j;
}

ScenarioDocument from_json(const json& j) {
    ScenarioDocument doc;
    Scenario& sc = doc.base;
    sc.name = j.value("name", std::string("scenario"));
    sc.seed = j.value("seed", uint64_t(1));
    sc.duration = j.at("duration").get<SimTime>();

    const json& sys = j.at("system");
    sc.config.n = sys.at("n").get<uint32_t>();
    sc.config.f = sys.at("f").get<uint32_t>();
    sc.config.window = sys.value("window", 16u);
    sc.config.linear_mode = sys.value("linear", false);
    sc.config.digest_mode = sys.value("digest_mode", false);
    sc.config.request_bound = sys.value("request_bound", 4096u);
    sc.config.merge_primary_prepare = sys.value("merge_primary_prepare", false);
    sc.config.emit_recovery_cc = sys.value("emit_recovery_cc", true);
    sc.config.status_probe_period = sys.value("status_probe", SimTime(0));
    if (sys.contains("delta")) {
        const json& d = sys.at("delta");
        if (d.is_array())
            for (const auto& v : d) sc.config.delta_estimate_initial.push_back(v.get<SimTime>());
        else
            sc.config.delta_estimate_initial.assign(1, d.get<SimTime>());
    }

    if (j.contains("network")) {
        const json& net = j.at("network");
        if (net.contains("delay")) sc.delay.fixed = net.at("delay").get<SimTime>();
        if (net.contains("jitter")) {
            const json& jit = net.at("jitter");
            sc.delay.kind = DelayModel::Kind::SeededRange;
            sc.delay.range_min = jit.at("min").get<SimTime>();
            sc.delay.range_max = jit.at("max").get<SimTime>();
        }
        if (net.contains("per_link")) {
            sc.delay.kind = DelayModel::Kind::PerLink;
            for (const auto& [link, d] : net.at("per_link").items()) {
                auto arrow = link.find("->");
                if (arrow == std::string::npos) fail("network.per_link", "expected 'a->b' link key");
                Identity a = parse_identity("network.per_link", link.substr(0, arrow));
                Identity b = parse_identity("network.per_link", link.substr(arrow + 2));
                sc.delay.per_link[{a.encoded(), b.encoded()}] = d.get<SimTime>();
            }
        }
        json drops_arr = net.value("drops", json::array());
        for (const auto& d : drops_arr) {
            DropWindow w;
            w.from = d.at("from").get<SimTime>();
            w.to = d.at("to").get<SimTime>();
            if (d.contains("src")) w.src = parse_identity("network.drops", d.at("src").get<std::string>());
            if (d.contains("dst")) w.dst = parse_identity("network.drops", d.at("dst").get<std::string>());
            sc.drops.push_back(w);
        }
        json parts_arr = net.value("partitions", json::array());
        for (const auto& p : parts_arr) {
            PartitionWindow w;
            w.from = p.at("from").get<SimTime>();
            w.to = p.at("to").get<SimTime>();
            for (const auto& g : p.at("groups")) {
                std::vector<Identity> group;
                for (const auto& m : g) group.push_back(parse_identity("network.partitions", m.get<std::string>()));
                w.groups.push_back(std::move(group));
            }
            sc.partitions.push_back(w);
        }
    }

    json faults_obj = j.value("faults", json::object());
    for (const auto& [key, val] : faults_obj.items()) {
        Identity id = parse_identity("faults", key);
        if (id.is_client) fail("faults", "faults apply to replicas only");
        sc.faults[id.index] = parse_behavior("faults." + key, val);
    }

    if (j.contains("workload")) {
        uint64_t seq = 0;
        json reqs_arr = j.at("workload").value("requests", json::array());
        for (const auto& r : reqs_arr) {
            WorkItem w;
            w.client = r.at("client").get<uint32_t>();
            w.payload = r.at("payload").get<std::string>();
            w.submit_time = r.at("submit_time").get<SimTime>();
            w.seq = r.value("seq", seq);
            ++seq;
            sc.workload.push_back(w);
        }
    }

    json checks_arr = j.value("checks", json::array());
    for (const auto& c : checks_arr) sc.checks.push_back(c.get<std::string>());
    sc.client_resend = j.value("client_resend", SimTime(0));

    if (j.contains("randomize")) {
        const json& r = j.at("randomize");
        RandomizeSpec rs;
        rs.max_faults = r.value("max_faults", 1u);
        json behaviors_arr = r.value("behaviors", json::array());
        for (const auto& b : behaviors_arr) rs.behaviors.push_back(b.get<std::string>());
        rs.max_drop_windows = r.value("max_drop_windows", 0u);
        rs.max_drop_len = r.value("max_drop_len", SimTime(200));
        rs.max_partition_windows = r.value("max_partition_windows", 0u);
        rs.max_partition_len = r.value("max_partition_len", SimTime(200));
        rs.disruption_end = r.value("disruption_end", SimTime(0));
        rs.clients = r.value("clients", 2u);
        rs.min_requests = r.value("min_requests", 2u);
        rs.max_requests = r.value("max_requests", 6u);
        rs.submit_spread = r.value("submit_spread", SimTime(400));
        rs.jitter_min = r.value("jitter_min", SimTime(0));
        rs.jitter_max = r.value("jitter_max", SimTime(0));
        doc.randomize = rs;
    }
    return doc;
}

json to_json(const ScenarioDocument& doc) {
    const Scenario& sc = doc.base;
    json j;
    j["name"] = sc.name;
    j["seed"] = sc.seed;
    j["duration"] = sc.duration;
    json sys;
    sys["n"] = sc.config.n;
    sys["f"] = sc.config.f;
    sys["window"] = sc.config.window;
    sys["linear"] = sc.config.linear_mode;
    sys["digest_mode"] = sc.config.digest_mode;
    sys["request_bound"] = sc.config.request_bound;
    sys["merge_primary_prepare"] = sc.config.merge_primary_prepare;
    sys["emit_recovery_cc"] = sc.config.emit_recovery_cc;
    if (sc.config.status_probe_period) sys["status_probe"] = sc.config.status_probe_period;
    if (!sc.config.delta_estimate_initial.empty()) sys["delta"] = sc.config.delta_estimate_initial;
    j["system"] = sys;

    json net;
    if (sc.delay.kind == DelayModel::Kind::SeededRange) {
        net["jitter"] = {{"min", sc.delay.range_min}, {"max", sc.delay.range_max}};
    } else if (sc.delay.kind == DelayModel::Kind::PerLink) {
        json links = json::object();
        for (const auto& [link, d] : sc.delay.per_link)
            links[identity_str(Identity::decode(link.first)) + "->" + identity_str(Identity::decode(link.second))] = d;
        net["per_link"] = links;
        net["delay"] = sc.delay.fixed;
    } else {
        net["delay"] = sc.delay.fixed;
    }
    if (!sc.drops.empty()) {
        json arr = json::array();
        for (const auto& w : sc.drops) {
            json d = {{"from", w.from}, {"to", w.to}};
            if (w.src) d["src"] = identity_str(*w.src);
            if (w.dst) d["dst"] = identity_str(*w.dst);
            arr.push_back(d);
        }
        net["drops"] = arr;
    }
    if (!sc.partitions.empty()) {
        json arr = json::array();
        for (const auto& w : sc.partitions) {
            json groups = json::array();
            for (const auto& g : w.groups) {
                json group = json::array();
                for (Identity m : g) group.push_back(identity_str(m));
                groups.push_back(group);
            }
            arr.push_back(json{{"from", w.from}, {"to", w.to}, {"groups", groups}});
        }
        net["partitions"] = arr;
    }
    j["network"] = net;

    if (!sc.faults.empty()) {
        json faults = json::object();
        for (const auto& [id, b] : sc.faults) faults["r" + std::to_string(id)] = behavior_to_json(b);
        j["faults"] = faults;
    }
    json reqs = json::array();
    for (const WorkItem& w : sc.workload)
        reqs.push_back(json{{"client", w.client}, {"payload", w.payload}, {"submit_time", w.submit_time}, {"seq", w.seq}});
    j["workload"] = {{"requests", reqs}};
    j["checks"] = sc.checks;
    if (sc.client_resend) j["client_resend"] = sc.client_resend;

    if (doc.randomize) {
        const RandomizeSpec& rs = *doc.randomize;
        json r;
        r["max_faults"] = rs.max_faults;
        r["behaviors"] = rs.behaviors;
        r["max_drop_windows"] = rs.max_drop_windows;
        r["max_drop_len"] = rs.max_drop_len;
        r["max_partition_windows"] = rs.max_partition_windows;
        r["max_partition_len"] = rs.max_partition_len;
        r["disruption_end"] = rs.disruption_end;
        r["clients"] = rs.clients;
        r["min_requests"] = rs.min_requests;
        r["max_requests"] = rs.max_requests;
        r["submit_spread"] = rs.submit_spread;
        r["jitter_min"] = rs.jitter_min;
        r["jitter_max"] = rs.jitter_max;
        j["randomize"] = r;
    }
    return j;
}

}  // namespace

ScenarioDocument parse_scenario_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // Convert the byte offset into a line/column anchor.
        size_t line = 1, col = 1;
        for (size_t i = 0; i < std::min(e.byte, text.size()); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ScenarioParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
    }
    try {
        ScenarioDocument doc = from_json(j);
        doc.base.check();
        return doc;
    } catch (const json::exception& e) {
        throw ScenarioParseError(std::string("schema: ") + e.what());
    } catch (const ConfigError& e) {
        throw ScenarioParseError(std::string("config: ") + e.what());
    }
}

ScenarioDocument load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioParseError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str());
}

std::string serialize_scenario(const ScenarioDocument& doc) { return to_json(doc).dump(2) + "\n"; }

void apply_override(ScenarioDocument& doc, const std::string& key, const std::string& value) {
    json j = to_json(doc);
    json* cursor = &j;
    std::string rest = key;
    size_t dot;
    while ((dot = rest.find('.')) != std::string::npos) {
        cursor = &(*cursor)[rest.substr(0, dot)];
        rest = rest.substr(dot + 1);
    }
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (...) {
        parsed = value;  // plain string
    }
    (*cursor)[rest] = parsed;
    try {
        doc = from_json(j);
        doc.base.check();
    } catch (const json::exception& e) {
        throw ScenarioParseError(std::string("override ") + key + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ScenarioParseError(std::string("override ") + key + ": " + e.what());
    }
}

namespace {

struct SplitMix {
    uint64_t state;
    uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next() % n; }
    uint64_t between(uint64_t lo, uint64_t hi) { return hi <= lo ? lo : lo + below(hi - lo + 1); }
};

}  // namespace

Scenario materialize(const ScenarioDocument& doc, uint64_t seed) {
    Scenario sc = doc.base;
    sc.seed = seed;
    if (!doc.randomize) return sc;
    const RandomizeSpec& rs = *doc.randomize;
    SplitMix rng{seed ^ 0x243f6a8885a308d3ULL};

    SimTime disruption_end = rs.disruption_end ? rs.disruption_end : sc.duration;

    if (rs.jitter_max > rs.jitter_min && rs.jitter_min > 0) {
        sc.delay.kind = DelayModel::Kind::SeededRange;
        sc.delay.range_min = rs.jitter_min;
        sc.delay.range_max = rs.jitter_max;
    }

    // Faults: up to max_faults distinct replicas, each with a random behavior.
    uint32_t fault_count = uint32_t(rng.below(std::min(rs.max_faults, sc.config.f) + 1));
    std::set<ReplicaId> chosen;
    while (chosen.size() < fault_count) chosen.insert(ReplicaId(rng.below(sc.config.n)));
    for (ReplicaId id : chosen) {
        if (rs.behaviors.empty()) break;
        std::string name = rs.behaviors[rng.below(rs.behaviors.size())];
        ByzantineBehavior b;
        auto kind = behavior_kind(name);
        if (!kind) throw ScenarioParseError("randomize.behaviors: unknown behavior '" + name + "'");
        b.kind = *kind;
        if (b.kind == ByzantineBehavior::Kind::SelectiveSend) {
            ReplicaId victim = ReplicaId(rng.below(sc.config.n));
            if (victim == id) victim = (victim + 1) % sc.config.n;
            b.blackout.insert(victim);
        }
        if (b.kind == ByzantineBehavior::Kind::CrashAt) b.crash_time = rng.between(1, disruption_end);
        if (b.kind == ByzantineBehavior::Kind::Scripted) b.kind = ByzantineBehavior::Kind::Silent;
        sc.faults[id] = b;
    }

    for (uint32_t i = 0; i < rs.max_drop_windows; ++i) {
        if (rng.below(2) == 0) continue;
        DropWindow w;
        w.from = rng.between(0, disruption_end > rs.max_drop_len ? disruption_end - rs.max_drop_len : 0);
        w.to = std::min<SimTime>(disruption_end, w.from + rng.between(10, rs.max_drop_len));
        Identity src = Identity::replica(ReplicaId(rng.below(sc.config.n)));
        Identity dst = Identity::replica(ReplicaId(rng.below(sc.config.n)));
        if (rng.below(2)) w.src = src;
        if (rng.below(2) || !w.src) w.dst = dst;
        sc.drops.push_back(w);
    }

    for (uint32_t i = 0; i < rs.max_partition_windows; ++i) {
        if (rng.below(2) == 0) continue;
        PartitionWindow w;
        w.from = rng.between(0, disruption_end > rs.max_partition_len ? disruption_end - rs.max_partition_len : 0);
        w.to = std::min<SimTime>(disruption_end, w.from + rng.between(20, rs.max_partition_len));
        std::vector<Identity> side;
        uint32_t cut = 1 + uint32_t(rng.below(std::max(1u, sc.config.n / 2)));
        std::set<ReplicaId> members;
        while (members.size() < cut) members.insert(ReplicaId(rng.below(sc.config.n)));
        for (ReplicaId m : members) side.push_back(Identity::replica(m));
        w.groups.push_back(side);  // everyone else lands in the implicit rest group
        sc.partitions.push_back(w);
    }

    uint32_t requests = uint32_t(rng.between(rs.min_requests, rs.max_requests));
    const char* keys[] = {"a", "b", "c", "d"};
    for (uint32_t i = 0; i < requests; ++i) {
        WorkItem w;
        w.client = uint32_t(rng.below(std::max(1u, rs.clients)));
        w.seq = i;
        switch (rng.below(3)) {
            case 0: w.payload = std::string("SET ") + keys[rng.below(4)] + " v" + std::to_string(rng.below(50)); break;
            case 1: w.payload = std::string("GET ") + keys[rng.below(4)]; break;
            default: w.payload = std::string("DEL ") + keys[rng.below(4)]; break;
        }
        w.submit_time = rng.between(0, rs.submit_spread);
        sc.workload.push_back(w);
    }

    sc.check();
    return sc;
}

}  // namespace poe
