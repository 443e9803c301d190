#include <CLI11.hpp>
#include <atomic>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "poe/costmodel.hpp"
#include "poe/scenario_file.hpp"

using namespace poe;
using nlohmann::json;

namespace {

// Exit codes partition the failure classes.
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitParse = 2;
constexpr int kExitCheck = 3;

json metrics_to_json(const Metrics& m) {
    json j;
    j["messages_by_kind"] = m.messages_by_kind;
    j["replica_messages_by_kind"] = m.replica_messages_by_kind;
    json bytes = json::object();
    for (const auto& [id, b] : m.bytes_sent_by_replica) bytes["r" + std::to_string(id)]["sent"] = b;
    for (const auto& [id, b] : m.bytes_received_by_replica) bytes["r" + std::to_string(id)]["received"] = b;
    j["bytes_by_replica"] = bytes;
    json lat = json::object();
    for (const auto& [req, l] : m.latency_by_request) {
        json e;
        e["submit"] = l.submit;
        if (l.has_outcome) {
            e["closed"] = l.closed;
            e["latency"] = l.closed - l.submit;
            if (l.delay_units > 0) e["latency_delay_units"] = l.delay_units;
            e["proof"] = l.proof == ProofKind::ProofOfExecution ? "proof-of-execution" : "proof-of-commit";
        } else {
            e["closed"] = nullptr;
        }
        lat[req] = e;
    }
    j["latency_by_request"] = lat;
    j["decisions_per_sec"] = m.decisions_per_sec;
    j["view_changes"] = m.view_changes;
    j["decided_rounds"] = m.decided_rounds;
    return j;
}

json report_to_json(const RunResult& r) {
    json j;
    j["scenario"] = r.scenario.name;
    j["seed"] = r.scenario.seed;
    j["metrics"] = metrics_to_json(r.metrics);
    json checks = json::array();
    for (const CheckResult& c : r.checks) {
        json e;
        e["name"] = c.name;
        e["status"] = c.status == CheckResult::Status::Pass ? "pass"
                      : c.status == CheckResult::Status::Fail ? "fail"
                                                              : "skipped";
        if (!c.detail.empty()) e["detail"] = c.detail;
        if (c.violating_index >= 0) e["violating_event"] = c.violating_index;
        checks.push_back(e);
    }
    j["checks"] = checks;
    json replicas = json::array();
    for (const ReplicaSnapshot& s : r.replicas) {
        json e;
        e["id"] = s.id;
        e["faulty"] = s.faulty;
        e["view"] = s.view;
        e["committed"] = s.committed;
        e["executed"] = s.executed;
        e["app_digest"] = s.app_digest.hex();
        replicas.push_back(e);
    }
    j["replicas"] = replicas;
    return j;
}

void print_checks(const RunResult& r) {
    for (const CheckResult& c : r.checks) {
        const char* status = c.status == CheckResult::Status::Pass ? "PASS"
                             : c.status == CheckResult::Status::Fail ? "FAIL"
                                                                     : "SKIP";
        std::cout << "check " << c.name << ": " << status;
        if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
        std::cout << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic consensus protocol simulator and cost calculator"};
    app.require_subcommand(1);

    // --- run ---
    auto* run = app.add_subcommand("run", "Run one scenario file and report");
    std::string run_file, trace_out, report_out;
    uint64_t run_seed = 0;
    bool have_seed = false;
    std::vector<std::string> overrides;
    run->add_option("file", run_file, "Scenario file")->required();
    run->add_option("--seed", run_seed, "Seed override")->each([&](const std::string&) { have_seed = true; });
    run->add_option("--trace", trace_out, "Write the event trace to this file");
    run->add_option("--report", report_out, "Write the structured report to this file");
    run->add_option("--override", overrides, "key=value overrides, dotted paths (e.g. system.n=7)");

    // --- batch ---
    auto* batch = app.add_subcommand("batch", "Run a seed range over a scenario template");
    std::string batch_file, seed_range = "1..100";
    unsigned batch_jobs = std::thread::hardware_concurrency();
    batch->add_option("template", batch_file, "Scenario template file")->required();
    batch->add_option("--seeds", seed_range, "Seed range A..B (inclusive)");
    batch->add_option("--jobs", batch_jobs, "Parallel simulations");

    // --- cost ---
    auto* cost = app.add_subcommand("cost", "Print the protocol cost comparison table");
    costmodel::CostParams params;
    bool with_throughput = false;
    cost->add_option("--n", params.n, "Replica count");
    cost->add_option("--c", params.request_size, "Client request size C, bytes");
    cost->add_option("--m", params.message_size, "Small message size M, bytes");
    cost->add_option("--b", params.bandwidth, "Primary bandwidth, size-units/s");
    cost->add_option("--delta", params.delta_ms, "Message delay, milliseconds");
    cost->add_flag("--throughput", with_throughput, "Include throughput estimates");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            ScenarioDocument doc;
            try {
                doc = load_scenario_file(run_file);
                for (const std::string& ov : overrides) {
                    auto eq = ov.find('=');
                    if (eq == std::string::npos) throw ScenarioParseError("override '" + ov + "' is not key=value");
                    apply_override(doc, ov.substr(0, eq), ov.substr(eq + 1));
                }
            } catch (const ScenarioParseError& e) {
                std::cerr << run_file << ": " << e.what() << "\n";
                return kExitParse;
            }
            uint64_t seed = have_seed ? run_seed : doc.base.seed;
            Scenario sc = materialize(doc, seed);
            RunResult r = run_scenario(sc);

            if (!trace_out.empty()) {
                std::ofstream out(trace_out);
                out << trace_to_text(r.trace);
            }
            json report = report_to_json(r);
            if (!report_out.empty()) {
                std::ofstream out(report_out);
                out << report.dump(2) << "\n";
            }
            std::cout << "scenario " << sc.name << " seed " << seed << ": " << r.metrics.decided_rounds
                      << " rounds decided, " << r.metrics.view_changes << " view changes\n";
            print_checks(r);
            return r.all_checks_passed() ? kExitOk : kExitCheck;
        }

        if (batch->parsed()) {
            ScenarioDocument doc;
            try {
                doc = load_scenario_file(batch_file);
            } catch (const ScenarioParseError& e) {
                std::cerr << batch_file << ": " << e.what() << "\n";
                return kExitParse;
            }
            auto dots = seed_range.find("..");
            if (dots == std::string::npos) {
                std::cerr << "--seeds expects A..B\n";
                return kExitParse;
            }
            uint64_t from = std::stoull(seed_range.substr(0, dots));
            uint64_t to = std::stoull(seed_range.substr(dots + 2));
            if (to < from) std::swap(from, to);

            std::atomic<uint64_t> next{from};
            std::atomic<uint64_t> failed_seed{0};
            std::atomic<bool> any_failed{false};
            std::mutex io;
            unsigned jobs = std::max(1u, batch_jobs);
            std::vector<std::thread> workers;
            for (unsigned t = 0; t < jobs; ++t) {
                workers.emplace_back([&] {
                    while (true) {
                        uint64_t seed = next.fetch_add(1);
                        if (seed > to) break;
                        Scenario sc = materialize(doc, seed);
                        RunResult r = run_scenario(sc);
                        if (!r.all_checks_passed()) {
                            bool first = !any_failed.exchange(true);
                            if (first) failed_seed.store(seed);
                            std::lock_guard<std::mutex> lock(io);
                            std::cout << "seed " << seed << ":";
                            for (const CheckResult& c : r.checks)
                                if (!c.passed()) std::cout << " " << c.name << " FAIL (" << c.detail << ")";
                            std::cout << "\n";
                        }
                    }
                });
            }
            for (auto& w : workers) w.join();
            uint64_t total = to - from + 1;
            if (any_failed.load()) {
                std::cout << "batch: failures detected; replay with --seed " << failed_seed.load() << "\n";
                return kExitCheck;
            }
            std::cout << "batch: " << total << " seeds, all checks passed\n";
            return kExitOk;
        }

        if (cost->parsed()) {
            std::cout << costmodel::format_cost_table(params, with_throughput);
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
