#pragma once

// Generation toolchain: a code-generating client plus a separate reviewing
// client, driven in two phases (functional, then concurrency) with
// retry-with-feedback, a disk cache keyed by input digest, a CI-style system
// validator and a spec-refinement loop.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "sysspec/depgraph.hpp"
#include "sysspec/detail/sha256.hpp"
#include "sysspec/spec_model.hpp"

namespace sysspec {

enum class Role { codegen, speceval, specfine };
enum class Phase { functional, concurrency };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::codegen: return "codegen";
        case Role::speceval: return "speceval";
        case Role::specfine: return "specfine";
    }
    return "";
}

inline const char* to_string(Phase p) {
    return p == Phase::functional ? "functional" : "concurrency";
}

struct ClientError : Error {
    explicit ClientError(const std::string& detail) : Error("client error: " + detail) {}
};

struct TestHarnessError : Error {
    explicit TestHarnessError(const std::string& detail)
        : Error("test harness error: " + detail) {}
};

struct MissingRelyError : Error {
    std::string symbol;
    explicit MissingRelyError(const std::string& symbol_)
        : Error("rely item '" + symbol_ + "' has no rendered context"), symbol(symbol_) {}
};

struct Verdict {
    bool pass = false;
    std::vector<std::string> feedback;
    std::string reviewer_model;
    std::string raw;
};

struct TranscriptEntry {
    Phase phase = Phase::functional;
    int attempt = 0;
    std::string prompt;
    std::string reply;
    Verdict verdict;
};

struct AttemptLimitExceededError : Error {
    Phase phase;
    std::vector<TranscriptEntry> transcript;
    std::string annotated_spec;  // set by assist()
    AttemptLimitExceededError(Phase phase_, std::vector<TranscriptEntry> transcript_)
        : Error(std::string("attempt limit exceeded in phase ") + to_string(phase_)),
          phase(phase_), transcript(std::move(transcript_)) {}
};

// ---------------------------------------------------------------------------
// Model clients

class ModelClient {
  public:
    virtual ~ModelClient() = default;
    virtual std::string complete(const std::string& prompt, Role role) = 0;
    virtual std::string model_id() const = 0;
};

// Deterministic scripted client. Script JSON:
//   { "model_id": "mock-1",
//     "replies": { "codegen": ["..."], "speceval": ["FAIL:\n- x", "PASS"] } }
// Replies are consumed per role in order; the last one repeats on exhaustion.
class MockClient : public ModelClient {
  public:
    explicit MockClient(const nlohmann::json& script) {
        model_id_ = script.value("model_id", "mock");
        if (script.contains("replies"))
            for (const auto& [role, arr] : script.at("replies").items())
                for (const auto& r : arr) replies_[role].push_back(r.get<std::string>());
    }

    static MockClient from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ClientError("cannot read mock script " + path.string());
        nlohmann::json j;
        in >> j;
        return MockClient(j);
    }

    std::string complete(const std::string& prompt, Role role) override {
        (void)prompt;
        ++calls_;
        auto it = replies_.find(to_string(role));
        if (it == replies_.end() || it->second.empty())
            throw ClientError("mock script has no replies for role " +
                              std::string(to_string(role)));
        size_t& cursor = cursors_[to_string(role)];
        const auto& list = it->second;
        return list[std::min(cursor++, list.size() - 1)];
    }

    std::string model_id() const override { return model_id_; }
    int calls() const { return calls_; }

  private:
    std::string model_id_;
    std::map<std::string, std::vector<std::string>> replies_;
    std::map<std::string, size_t> cursors_;
    int calls_ = 0;
};

// Replaces every occurrence of `secret` so credentials never reach logs or
// error messages.
inline std::string redact(std::string text, const std::string& secret) {
    if (secret.empty()) return text;
    size_t pos = 0;
    while ((pos = text.find(secret, pos)) != std::string::npos) {
        text.replace(pos, secret.size(), "[REDACTED]");
        pos += 10;
    }
    return text;
}

struct HttpProfile {
    std::string endpoint;  // scheme://host:port
    std::string path = "/v1/complete";
    std::string model;
    std::string credential_env;  // name of the env var holding the API key
};

class HttpClient : public ModelClient {
  public:
    explicit HttpClient(HttpProfile profile) : profile_(std::move(profile)) {
        if (!profile_.credential_env.empty())
            if (const char* v = std::getenv(profile_.credential_env.c_str())) credential_ = v;
    }

    std::string complete(const std::string& prompt, Role role) override;

    std::string model_id() const override { return profile_.model; }

  protected:
    HttpProfile profile_;
    std::string credential_;
};

// ---------------------------------------------------------------------------
// Prompt assembly

struct GenerationTask {
    ModuleSpec module;
    std::string resolved_rely;  // rendered provider context, one line per item
    Phase phase = Phase::functional;
    int attempt_limit = 3;
    std::string phase1_code;                // input to the concurrency phase
    std::vector<std::string> feedback_log;  // findings from earlier attempts, in order
};

// Rendered provider context for every rely item of `module`, from a document
// whose entailment is clean for that module.
inline std::string render_resolved_rely(const SpecDocument& doc, const std::string& module_name) {
    const ModuleSpec* mod = doc.find_module(module_name);
    if (!mod) throw Error("unknown module " + module_name);
    std::ostringstream os;
    for (const auto& t : mod->rely.imported_types) {
        const TypeDecl* def = &t;
        for (const auto& p : doc.modules) {
            if (p.name == module_name) continue;
            for (const auto& g : p.guarantee.exported_types)
                if (g.name == t.name) def = &g;
        }
        os << "type " << def->name << ": " << def->definition << "\n";
    }
    for (const auto& f : mod->rely.imported_functions) os << "func " << sig_to_string(f) << "\n";
    for (const auto& l : mod->rely.imported_lock_protocols) os << "lockproto " << l << "\n";
    return os.str();
}

inline std::string assemble_prompt(const GenerationTask& task) {
    const ModuleSpec& mod = task.module;
    // Every rely item must be present in the rendered context.
    auto require = [&](const std::string& name) {
        if (task.resolved_rely.find(name) == std::string::npos) throw MissingRelyError(name);
    };
    for (const auto& t : mod.rely.imported_types) require(t.name);
    for (const auto& f : mod.rely.imported_functions) require(f.name);
    for (const auto& l : mod.rely.imported_lock_protocols) require(l);

    std::ostringstream os;
    if (task.phase == Phase::functional) {
        os << "Implement module '" << mod.name << "' in C.\n\n";
        os << "[RELY]\n" << task.resolved_rely << "\n";
        os << "[GUARANTEE]\n";
        for (const auto& f : mod.guarantee.exported_functions)
            os << "func " << sig_to_string(f) << "\n";
        for (const auto& t : mod.guarantee.exported_types)
            os << "type " << t.name << ": " << t.definition << "\n";
        os << "\n[SPECIFICATION]\n";
        for (const auto& fn : mod.functions) {
            os << "\nFunction " << sig_to_string(fn.signature) << "\n";
            for (const auto& p : fn.pre) os << "Pre-condition: " << p.text << "\n";
            for (const auto& pc : fn.post) {
                os << pc.label << ": " << pc.condition << "\n";
                for (const auto& o : pc.outcomes) os << "  - " << o << "\n";
                if (!pc.return_contract.empty()) os << "  Return: " << pc.return_contract << "\n";
            }
            for (const auto& inv : fn.invariants) os << "Invariant: " << inv.text << "\n";
            for (size_t i = 0; i < fn.algorithm.size(); ++i)
                os << "Step " << i + 1 << ": " << fn.algorithm[i] << "\n";
            if (!fn.intent.empty()) os << "Intent: " << fn.intent << "\n";
        }
    } else {
        os << "Refine the implementation of module '" << mod.name
           << "' for concurrency.\n\n[PHASE-1 CODE]\n"
           << task.phase1_code << "\n[CONCURRENCY SPECIFICATION]\n";
        bool any = false;
        for (const auto& fn : mod.functions) {
            if (!fn.concurrency) continue;
            any = true;
            os << "\nFunction " << fn.signature.name << "\n";
            os << "Mechanisms:";
            for (auto m : fn.concurrency->mechanisms) os << " " << to_string(m);
            os << "\n";
            for (const auto& a : fn.concurrency->lock_pre)
                os << "Lock-pre: " << to_string(a.state)
                   << (a.subject.empty() ? "" : " " + a.subject) << "\n";
            for (const auto& r : fn.concurrency->lock_post) {
                os << "Lock-post: " << r.condition << " =>";
                for (const auto& a : r.asserts)
                    os << " " << to_string(a.state)
                       << (a.subject.empty() ? "" : " " + a.subject);
                os << "\n";
            }
        }
        if (!any) os << "\nno locking required\n";
    }
    if (!task.feedback_log.empty()) {
        os << "\n[REVIEWER FEEDBACK FROM PREVIOUS ATTEMPTS]\n";
        for (const auto& f : task.feedback_log) os << "- " << f << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Review

inline Verdict spec_eval(const std::string& code, const ModuleSpec& module, Phase phase,
                         ModelClient& reviewer) {
    if (code.empty()) throw Error("spec_eval: empty code");
    std::ostringstream prompt;
    prompt << "Review the following implementation of module '" << module.name
           << "' against its specification (" << to_string(phase)
           << " phase).\nReply with a first line of PASS or FAIL: followed by '- ' findings."
           << "\n\n[SPECIFICATION]\n"
           << serialize_module(module) << "\n[CODE]\n" << code << "\n";
    std::string raw = reviewer.complete(prompt.str(), Role::speceval);

    Verdict v;
    v.raw = raw;
    v.reviewer_model = reviewer.model_id();
    auto lines = detail::split_lines(raw);
    size_t first = 0;
    while (first < lines.size() && detail::trim(lines[first]).empty()) ++first;
    std::string head = first < lines.size() ? detail::trim(lines[first]) : "";
    if (head == "PASS") {
        v.pass = true;
    } else if (detail::starts_with(head, "FAIL:")) {
        v.pass = false;
        std::string inline_finding = detail::trim(head.substr(5));
        if (!inline_finding.empty()) v.feedback.push_back(inline_finding);
        for (size_t i = first + 1; i < lines.size(); ++i) {
            std::string t = detail::trim(lines[i]);
            if (detail::starts_with(t, "- ")) v.feedback.push_back(detail::trim(t.substr(2)));
        }
        if (v.feedback.empty()) v.feedback.push_back("reviewer gave no findings");
    } else {
        v.pass = false;
        v.feedback.push_back("reviewer reply unparseable");
        v.feedback.push_back(raw);
    }

    // Budget overruns warn without flipping the verdict.
    int loc = 0;
    for (const auto& l : detail::split_lines(code))
        if (!detail::trim(l).empty()) ++loc;
    if (loc > module.loc_budget)
        v.feedback.push_back("warning: implementation has " + std::to_string(loc) +
                             " lines, over the budget of " + std::to_string(module.loc_budget));
    return v;
}

// ---------------------------------------------------------------------------
// Cache

class CacheStore {
  public:
    explicit CacheStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    static std::string key(const std::string& canonical_module, const std::string& resolved_rely,
                           const std::string& model_id, Phase phase) {
        // 0x1e separators keep field boundaries unambiguous.
        std::string input = canonical_module;
        input.push_back('\x1e');
        input += resolved_rely;
        input.push_back('\x1e');
        input += model_id;
        input.push_back('\x1e');
        input += to_string(phase);
        return detail::sha256_hex(input);
    }

    struct Entry {
        std::string code;
        std::vector<std::string> transcript;  // one rendered line per attempt
    };

    std::optional<Entry> get(const std::string& key) const {
        std::lock_guard lock(mu_);
        std::ifstream in(path_for(key));
        if (!in) return std::nullopt;
        nlohmann::json j;
        in >> j;
        Entry e;
        e.code = j.value("code", "");
        for (const auto& t : j.value("transcript", nlohmann::json::array()))
            e.transcript.push_back(t.get<std::string>());
        return e;
    }

    void put(const std::string& key, const Entry& entry) {
        nlohmann::json j{{"code", entry.code}, {"transcript", entry.transcript}};
        std::lock_guard lock(mu_);
        std::ofstream out(path_for(key));
        if (!out) throw IoError("cannot write cache entry " + path_for(key).string());
        out << j.dump(2) << "\n";
    }

    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }

    std::filesystem::path dir_;
    mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Compilation

struct GeneratedModule {
    std::string name;
    std::string phase1_code;
    std::string final_code;
    std::pair<int, int> attempts_used{0, 0};  // (functional, concurrency); 0 = cache hit
    std::vector<TranscriptEntry> transcript;
};

namespace detail {

inline std::string transcript_line(const TranscriptEntry& e) {
    std::string s = std::string(to_string(e.phase)) + " attempt " + std::to_string(e.attempt) +
                    ": " + (e.verdict.pass ? "PASS" : "FAIL");
    for (const auto& f : e.verdict.feedback) s += "; " + f;
    return s;
}

}  // namespace detail

inline GeneratedModule compile_module(GenerationTask task, ModelClient& codegen,
                                      ModelClient& reviewer, CacheStore& cache) {
    GeneratedModule out;
    out.name = task.module.name;
    std::string canonical = serialize_module(task.module);

    auto run_phase = [&](Phase phase) -> std::string {
        task.phase = phase;
        task.feedback_log.clear();
        std::string key = CacheStore::key(canonical, task.resolved_rely, codegen.model_id(), phase);
        if (auto hit = cache.get(key)) return hit->code;

        std::vector<TranscriptEntry> attempts;
        for (int attempt = 1; attempt <= task.attempt_limit; ++attempt) {
            TranscriptEntry entry;
            entry.phase = phase;
            entry.attempt = attempt;
            entry.prompt = assemble_prompt(task);
            entry.reply = codegen.complete(entry.prompt, Role::codegen);
            entry.verdict = spec_eval(entry.reply, task.module, phase, reviewer);
            attempts.push_back(entry);
            out.transcript.push_back(entry);
            if (entry.verdict.pass) {
                CacheStore::Entry ce;
                ce.code = entry.reply;
                for (const auto& a : attempts) ce.transcript.push_back(detail::transcript_line(a));
                cache.put(key, ce);
                (phase == Phase::functional ? out.attempts_used.first
                                            : out.attempts_used.second) = attempt;
                return entry.reply;
            }
            for (const auto& f : entry.verdict.feedback) task.feedback_log.push_back(f);
        }
        throw AttemptLimitExceededError(phase, out.transcript);
    };

    out.phase1_code = run_phase(Phase::functional);
    task.phase1_code = out.phase1_code;
    out.final_code = run_phase(Phase::concurrency);
    return out;
}

// ---------------------------------------------------------------------------
// System validation

struct ValidationReport {
    std::vector<std::pair<std::string, Verdict>> module_verdicts;
    int test_exit = -1;
    std::string test_output;
    bool overall_pass = false;
};

inline ValidationReport validate_system(const std::vector<GeneratedModule>& modules,
                                        const SpecDocument& doc, const std::string& test_cmd,
                                        ModelClient& reviewer) {
    ValidationReport report;
    bool all_pass = true;
    for (const auto& gm : modules) {
        const ModuleSpec* spec = doc.find_module(gm.name);
        if (!spec) throw Error("generated module '" + gm.name + "' not in document");
        Verdict v = spec_eval(gm.final_code, *spec, Phase::concurrency, reviewer);
        all_pass = all_pass && v.pass;
        report.module_verdicts.emplace_back(gm.name, v);
    }

    FILE* pipe = ::popen((test_cmd + " 2>&1").c_str(), "r");
    if (!pipe) throw TestHarnessError("cannot spawn '" + test_cmd + "'");
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) report.test_output.append(buf, n);
    int status = ::pclose(pipe);
    if (status < 0) throw TestHarnessError("cannot reap '" + test_cmd + "'");
    report.test_exit = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
    report.overall_pass = all_pass && report.test_exit == 0;
    return report;
}

// ---------------------------------------------------------------------------
// Spec refinement (SpecFine loop)

struct AssistClients {
    ModelClient* codegen = nullptr;
    ModelClient* speceval = nullptr;
    ModelClient* specfine = nullptr;
};

struct AssistOutcome {
    bool success = false;
    std::string refined_spec;    // canonical text of the accepted spec
    std::string generated_code;  // final code on success
    std::string annotated_spec;  // spec + diagnostics on failure
    int rounds_used = 0;
};

inline AssistOutcome assist(const std::string& draft, const AssistClients& clients,
                            int max_rounds, CacheStore& cache) {
    SpecDocument doc = parse_spec(draft);
    if (doc.modules.size() != 1) throw Error("assist expects a single-module draft");

    AssistOutcome out;
    std::vector<std::string> diagnostics;
    for (int round = 1; round <= max_rounds; ++round) {
        out.rounds_used = round;
        std::string canonical = serialize_module(doc.modules[0]);
        GenerationTask task;
        task.module = doc.modules[0];
        task.resolved_rely = render_resolved_rely(doc, doc.modules[0].name);
        try {
            GeneratedModule gm = compile_module(task, *clients.codegen, *clients.speceval, cache);
            out.success = true;
            out.refined_spec = canonical;
            out.generated_code = gm.final_code;
            return out;
        } catch (const AttemptLimitExceededError& e) {
            for (const auto& t : e.transcript)
                for (const auto& f : t.verdict.feedback) diagnostics.push_back(f);
            if (round == max_rounds) break;
            std::ostringstream prompt;
            prompt << "Refine the following module specification so the reviewer findings are "
                      "addressed. Reply with the full revised specification only.\n\n[SPEC]\n"
                   << canonical << "\n[FINDINGS]\n";
            for (const auto& d : diagnostics) prompt << "- " << d << "\n";
            std::string revised = clients.specfine->complete(prompt.str(), Role::specfine);
            doc = parse_spec(revised);
            if (doc.modules.size() != 1) throw Error("specfine reply is not a single module");
        }
    }

    std::ostringstream annotated;
    annotated << serialize_module(doc.modules[0]) << "\n# Diagnostics\n";
    for (const auto& d : diagnostics) annotated << "# - " << d << "\n";
    out.annotated_spec = annotated.str();
    return out;
}

inline std::string HttpClient::complete(const std::string& prompt, Role role) {
    httplib::Client http(profile_.endpoint);
    httplib::Headers headers;
    if (!credential_.empty()) headers.emplace("Authorization", "Bearer " + credential_);
    nlohmann::json body{{"model", profile_.model}, {"role", to_string(role)}, {"prompt", prompt}};
    auto res = http.Post(profile_.path, headers, body.dump(), "application/json");
    if (!res)
        throw ClientError("no response from " + profile_.endpoint + ": " +
                          httplib::to_string(res.error()));
    if (res->status != 200)
        throw ClientError("HTTP " + std::to_string(res->status) + " from " + profile_.endpoint +
                          ": " + redact(res->body, credential_));
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("text"))
        throw ClientError("malformed reply body: " + redact(res->body, credential_));
    return reply.at("text").get<std::string>();
}

}  // namespace sysspec
