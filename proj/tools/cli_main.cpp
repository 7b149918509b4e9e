// Single command-line entry point: spec validation/graphing, patch
// planning/application, model-driven generation, FS trace execution, and
// benchmarking. Exit codes: 0 success, 1 domain failure, 2 environment
// failure. Logs go to stderr, machine-readable data to stdout or files.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sysspec/agents.hpp"
#include "sysspec/depgraph.hpp"
#include "sysspec/fs_core.hpp"
#include "sysspec/metrics.hpp"
#include "sysspec/patch_engine.hpp"
#include "sysspec/spec_model.hpp"

namespace {

using namespace sysspec;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kEnvFailure = 2;

struct CliConfig {
    std::string spec_dir;
    std::string cache_dir = ".sysspec-cache";
    int attempt_limit = 3;
    uint64_t seed = 42;
    std::map<std::string, HttpProfile> models;

    static CliConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read config " + path);
        json j;
        in >> j;
        CliConfig cfg;
        for (const auto& [key, value] : j.items()) {
            if (key == "spec_dir") cfg.spec_dir = value.get<std::string>();
            else if (key == "cache_dir") cfg.cache_dir = value.get<std::string>();
            else if (key == "attempt_limit") cfg.attempt_limit = value.get<int>();
            else if (key == "seed") cfg.seed = value.get<uint64_t>();
            else if (key == "models") {
                for (const auto& [name, m] : value.items()) {
                    HttpProfile p;
                    p.endpoint = m.value("endpoint", "");
                    p.path = m.value("path", p.path);
                    p.model = m.value("model", "");
                    p.credential_env = m.value("credential_env", "");
                    cfg.models[name] = p;
                }
            } else {
                throw Error("unknown config key '" + key + "'");
            }
        }
        return cfg;
    }
};

json entailment_json(const EntailmentReport& rep) {
    json j{{"satisfied", json::array()},
           {"unsatisfied", json::array()},
           {"ambiguous", json::array()}};
    for (const auto& [item, provider] : rep.satisfied)
        j["satisfied"].push_back({{"module", item.module}, {"item", item.item},
                                  {"provider", provider}});
    for (const auto& item : rep.unsatisfied)
        j["unsatisfied"].push_back({{"module", item.module}, {"item", item.item}});
    for (const auto& [item, providers] : rep.ambiguous)
        j["ambiguous"].push_back({{"module", item.module}, {"item", item.item},
                                  {"providers", providers}});
    return j;
}

int cmd_spec_validate(const std::string& dir, bool quiet) {
    SpecDocument doc = load_spec_dir(dir);
    auto diags = check_wellformed(doc);
    auto report = check_entailment(doc);
    for (const auto& d : diags)
        std::cout << d.module << ": " << d.rule << ": " << d.message << "\n";
    for (const auto& item : report.unsatisfied)
        std::cout << item.module << ": UNRESOLVED_RELY: no provider for '" << item.item << "'\n";
    for (const auto& [item, providers] : report.ambiguous) {
        std::cout << item.module << ": AMBIGUOUS_RELY: '" << item.item << "' provided by";
        for (const auto& p : providers) std::cout << " " << p;
        std::cout << "\n";
    }
    bool ok = diags.empty() && report.clean();
    if (ok && !quiet)
        std::cout << "ok: " << doc.modules.size() << " modules, entailment clean\n";
    return ok ? kOk : kDomainFailure;
}

int cmd_spec_graph(const std::string& dir, bool as_json) {
    SpecDocument doc = load_spec_dir(dir);
    DependencyGraph graph = build_graph(doc);
    EntailmentReport report = check_entailment(doc);
    if (as_json) {
        json j{{"nodes", graph.nodes}, {"edges", json::array()},
               {"entailment", entailment_json(report)}};
        for (const auto& e : graph.edges)
            j["edges"].push_back({{"consumer", e.consumer}, {"provider", e.provider},
                                  {"witness", e.witness}});
        std::cout << j.dump(2) << "\n";
    } else {
        for (const auto& e : graph.edges)
            std::cout << e.consumer << " -> " << e.provider << " : " << e.witness << "\n";
        for (const auto& item : report.unsatisfied)
            std::cout << item.module << " -> ? : " << item.item << " (unsatisfied)\n";
    }
    return report.clean() ? kOk : kDomainFailure;
}

int cmd_patch_plan(const std::string& patch_path, const std::string& spec_dir) {
    SpecPatch patch = load_patch_file(patch_path);
    SpecDocument base = load_spec_dir(spec_dir);
    auto order = plan(patch, base);
    for (size_t i = 0; i < order.size(); ++i)
        std::cout << (i ? ", " : "") << order[i];
    std::cout << "\n";
    return kOk;
}

int cmd_patch_apply(const std::string& patch_path, const std::string& spec_dir,
                    const std::string& out_dir) {
    SpecPatch patch = load_patch_file(patch_path);
    SpecDocument base = load_spec_dir(spec_dir);
    SpecDocument result = apply(patch, base);
    write_spec_dir(result, out_dir);

    json manifest{{"patch", patch.patch_id},
                  {"plan", plan(patch, base)},
                  {"replaced", json::array()},
                  {"replacement_policy", "strict: the old guarantee is removed"}};
    for (const auto& node : patch.nodes)
        if (node.replaces_guarantee)
            manifest["replaced"].push_back(sig_key(*node.replaces_guarantee));
    std::ofstream mf(std::filesystem::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    std::cerr << "applied " << patch.patch_id << " -> " << out_dir << "\n";
    return kOk;
}

std::unique_ptr<ModelClient> make_client(const std::string& model_arg, const CliConfig& cfg) {
    auto colon = model_arg.find(':');
    if (colon == std::string::npos)
        throw ClientError("--model must be mock:<script path> or http:<profile>");
    std::string scheme = model_arg.substr(0, colon);
    std::string rest = model_arg.substr(colon + 1);
    if (scheme == "mock")
        return std::make_unique<MockClient>(MockClient::from_file(rest));
    if (scheme == "http") {
        auto it = cfg.models.find(rest);
        if (it == cfg.models.end())
            throw ClientError("model profile '" + rest + "' not in config");
        if (!it->second.credential_env.empty() &&
            !std::getenv(it->second.credential_env.c_str()))
            throw ClientError("credential environment variable " +
                              it->second.credential_env + " is not set");
        return std::make_unique<HttpClient>(it->second);
    }
    throw ClientError("unknown model scheme '" + scheme + "'");
}

std::vector<GeneratedModule> compile_all(const SpecDocument& doc, ModelClient& client,
                                         CacheStore& cache, int attempt_limit) {
    std::vector<GeneratedModule> out;
    auto order = topo_order(build_graph(doc));
    for (const auto& name : order) {
        const ModuleSpec* mod = doc.find_module(name);
        GenerationTask task;
        task.module = *mod;
        task.resolved_rely = render_resolved_rely(doc, name);
        task.attempt_limit = attempt_limit;
        GeneratedModule gm = compile_module(task, client, client, cache);
        for (auto [phase, attempts] : {std::pair{"functional", gm.attempts_used.first},
                                       {"concurrency", gm.attempts_used.second}}) {
            if (attempts == 0)
                std::cout << name << "/" << phase << ": cache: hit\n";
            else
                std::cout << name << "/" << phase << ": pass after " << attempts
                          << " attempt(s)\n";
        }
        out.push_back(std::move(gm));
    }
    return out;
}

int cmd_gen_compile(const std::string& spec_dir, const std::string& model_arg,
                    const CliConfig& cfg) {
    SpecDocument doc = load_spec_dir(spec_dir);
    auto client = make_client(model_arg, cfg);
    CacheStore cache(cfg.cache_dir);
    auto modules = compile_all(doc, *client, cache, cfg.attempt_limit);

    std::filesystem::path out_dir = std::filesystem::path(cfg.cache_dir) / "generated";
    std::filesystem::create_directories(out_dir);
    for (const auto& gm : modules) {
        std::ofstream code(out_dir / (gm.name + ".code.txt"));
        code << gm.final_code;
        std::ofstream log(out_dir / (gm.name + ".transcript.txt"));
        for (const auto& e : gm.transcript) log << detail::transcript_line(e) << "\n";
    }
    std::cerr << "generated " << modules.size() << " modules under " << out_dir << "\n";
    return kOk;
}

int cmd_gen_validate(const std::string& spec_dir, const std::string& model_arg,
                     const std::string& test_cmd, const CliConfig& cfg) {
    SpecDocument doc = load_spec_dir(spec_dir);
    auto client = make_client(model_arg, cfg);
    CacheStore cache(cfg.cache_dir);
    auto modules = compile_all(doc, *client, cache, cfg.attempt_limit);
    ValidationReport report = validate_system(modules, doc, test_cmd, *client);
    for (const auto& [name, verdict] : report.module_verdicts) {
        std::cout << name << ": " << (verdict.pass ? "PASS" : "FAIL") << "\n";
        for (const auto& f : verdict.feedback) std::cout << "  - " << f << "\n";
    }
    std::cout << "tests: exit " << report.test_exit << "\n";
    std::cout << "overall: " << (report.overall_pass ? "PASS" : "FAIL") << "\n";
    return report.overall_pass ? kOk : kDomainFailure;
}

// Trace grammar, one op per line:
//   ins /a/b name=f kind=file|dir
//   remove /a name=f
//   write /a/f off=0 hex=616263
//   read /a/f off=0 len=3
//   rename /a f /b g
//   expect ret=<n> | expect hex=<hex>
std::vector<std::string> split_path(const std::string& s) {
    std::vector<std::string> out;
    std::string comp;
    for (char c : s) {
        if (c == '/') {
            if (!comp.empty()) out.push_back(comp);
            comp.clear();
        } else {
            comp.push_back(c);
        }
    }
    if (!comp.empty()) out.push_back(comp);
    return out;
}

std::string kv(const std::vector<std::string>& tokens, const std::string& key) {
    for (const auto& t : tokens)
        if (t.rfind(key + "=", 0) == 0) return t.substr(key.size() + 1);
    throw Error("missing " + key + "= argument");
}

std::string hex_decode(const std::string& hex) {
    if (hex.size() % 2) throw Error("odd-length hex string");
    std::string out;
    for (size_t i = 0; i < hex.size(); i += 2)
        out.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
    return out;
}

std::string hex_encode(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned char c : bytes) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 15]);
    }
    return out;
}

int cmd_fs_exec(const std::string& trace_path, const std::string& features_path) {
    FeatureConfig cfg;
    if (!features_path.empty()) {
        std::ifstream in(features_path);
        if (!in) throw IoError("cannot read feature config " + features_path);
        json j;
        in >> j;
        cfg = FeatureConfig::from_json(j);
    }
    std::ifstream trace(trace_path);
    if (!trace) throw IoError("cannot read trace " + trace_path);

    SimDisk disk;
    FsState fs(cfg, &disk);
    int last_ret = 0;
    std::string last_data;
    bool all_expects_hold = true;
    std::string line;
    int line_no = 0;
    while (std::getline(trace, line)) {
        ++line_no;
        std::istringstream is(line);
        std::vector<std::string> tok{std::istream_iterator<std::string>(is), {}};
        if (tok.empty() || tok[0][0] == '#') continue;
        const std::string& op = tok[0];
        if (op == "ins") {
            auto kind = kv(tok, "kind") == "dir" ? InodeKind::dir : InodeKind::file;
            last_ret = fs.ins(split_path(tok.at(1)), kv(tok, "name"), kind);
            std::cout << line_no << ": ret=" << last_ret << "\n";
        } else if (op == "remove") {
            last_ret = fs.remove(split_path(tok.at(1)), kv(tok, "name"));
            std::cout << line_no << ": ret=" << last_ret << "\n";
        } else if (op == "write") {
            last_ret = fs.write(split_path(tok.at(1)), std::stoull(kv(tok, "off")),
                                hex_decode(kv(tok, "hex")));
            std::cout << line_no << ": ret=" << last_ret << "\n";
        } else if (op == "read") {
            last_data = fs.read(split_path(tok.at(1)), std::stoull(kv(tok, "off")),
                                std::stoull(kv(tok, "len")));
            last_ret = static_cast<int>(last_data.size());
            std::cout << line_no << ": ret=" << last_ret << " hex=" << hex_encode(last_data)
                      << "\n";
        } else if (op == "rename") {
            last_ret = fs.rename(split_path(tok.at(1)), tok.at(2), split_path(tok.at(3)),
                                 tok.at(4));
            std::cout << line_no << ": ret=" << last_ret << "\n";
        } else if (op == "expect") {
            bool hold;
            if (tok.at(1).rfind("ret=", 0) == 0)
                hold = last_ret == std::stoi(kv(tok, "ret"));
            else
                hold = hex_encode(last_data) == kv(tok, "hex");
            all_expects_hold = all_expects_hold && hold;
            std::cout << line_no << ": expect " << (hold ? "ok" : "FAILED") << "\n";
        } else {
            throw Error("unknown trace op '" + op + "' on line " + std::to_string(line_no));
        }
    }

    auto violations = fs.monitor().violations();
    bool clean = violations.empty() && fs.monitor().none_held();
    std::cout << "monitor: " << violations.size() << " violation(s), max held "
              << fs.monitor().max_held() << ", end state "
              << (fs.monitor().none_held() ? "clean" : "locks still held") << "\n";
    for (const auto& v : violations) std::cout << "monitor: " << v << "\n";
    return all_expects_hold && clean ? kOk : kDomainFailure;
}

int cmd_bench(const std::string& kind, const std::string& features_path, uint64_t seed,
              const std::string& out_path, const std::string& baseline_path) {
    FeatureConfig features;
    if (!features_path.empty()) {
        std::ifstream in(features_path);
        if (!in) throw IoError("cannot read feature config " + features_path);
        json j;
        in >> j;
        features = FeatureConfig::from_json(j);
    }
    MetricsReport report =
        run_workload(WorkloadConfig::preset(workload_kind_from(kind), seed), features);
    if (!baseline_path.empty()) {
        std::ifstream in(baseline_path);
        if (!in) throw IoError("cannot read baseline " + baseline_path);
        json j;
        in >> j;
        report = compare(MetricsReport::from_json(j), report);
    }
    std::string text = report.to_json().dump(2) + "\n";
    if (out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(out_path);
        if (!out) throw IoError("cannot write " + out_path);
        out << text;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spec-driven file-system workbench"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file");

    // spec
    auto* spec = app.add_subcommand("spec", "validate or graph a spec directory");
    spec->require_subcommand(1);
    std::string spec_dir;
    bool quiet = false, graph_json = false;
    auto* spec_validate = spec->add_subcommand("validate", "check well-formedness + entailment");
    spec_validate->add_option("spec_dir", spec_dir)->required();
    spec_validate->add_flag("--quiet", quiet);
    auto* spec_graph = spec->add_subcommand("graph", "print the dependency graph");
    spec_graph->add_option("spec_dir", spec_dir)->required();
    spec_graph->add_flag("--json", graph_json);

    // patch
    auto* patch = app.add_subcommand("patch", "plan or apply a spec patch");
    patch->require_subcommand(1);
    std::string patch_path, out_dir;
    auto* patch_plan = patch->add_subcommand("plan", "print the node application order");
    patch_plan->add_option("patch", patch_path)->required();
    patch_plan->add_option("spec_dir", spec_dir)->required();
    auto* patch_apply = patch->add_subcommand("apply", "apply and write the result");
    patch_apply->add_option("patch", patch_path)->required();
    patch_apply->add_option("spec_dir", spec_dir)->required();
    patch_apply->add_option("-o,--out", out_dir)->required();

    // gen
    auto* gen = app.add_subcommand("gen", "model-driven code generation");
    gen->require_subcommand(1);
    std::string model_arg, test_cmd, cache_dir_flag;
    auto* gen_compile = gen->add_subcommand("compile", "generate code for every module");
    gen_compile->add_option("spec_dir", spec_dir)->required();
    gen_compile->add_option("--model", model_arg, "mock:<script> or http:<profile>")->required();
    gen_compile->add_option("--cache", cache_dir_flag);
    auto* gen_validate = gen->add_subcommand("validate", "review + run the test command");
    gen_validate->add_option("spec_dir", spec_dir)->required();
    gen_validate->add_option("--model", model_arg)->required();
    gen_validate->add_option("--tests", test_cmd)->required();
    gen_validate->add_option("--cache", cache_dir_flag);

    // fs
    auto* fs = app.add_subcommand("fs", "file-system trace execution");
    fs->require_subcommand(1);
    std::string trace_path, features_path;
    auto* fs_exec = fs->add_subcommand("exec", "replay a trace file");
    fs_exec->add_option("trace", trace_path)->required();
    fs_exec->add_option("--features", features_path);

    // bench
    auto* bench = app.add_subcommand("bench", "run a workload and report counters");
    std::string bench_kind, bench_out, baseline_path;
    uint64_t seed = 42;
    bench->add_option("kind", bench_kind)->required();
    bench->add_option("--features", features_path);
    bench->add_option("--seed", seed);
    bench->add_option("--out", bench_out);
    bench->add_option("--baseline", baseline_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kEnvFailure;
    }

    try {
        CliConfig cfg;
        if (!config_path.empty()) cfg = CliConfig::load(config_path);
        if (seed != 42) cfg.seed = seed;
        if (!cache_dir_flag.empty()) cfg.cache_dir = cache_dir_flag;

        if (spec_validate->parsed()) return cmd_spec_validate(spec_dir, quiet);
        if (spec_graph->parsed()) return cmd_spec_graph(spec_dir, graph_json);
        if (patch_plan->parsed()) return cmd_patch_plan(patch_path, spec_dir);
        if (patch_apply->parsed()) return cmd_patch_apply(patch_path, spec_dir, out_dir);
        if (gen_compile->parsed()) return cmd_gen_compile(spec_dir, model_arg, cfg);
        if (gen_validate->parsed())
            return cmd_gen_validate(spec_dir, model_arg, test_cmd, cfg);
        if (fs_exec->parsed()) return cmd_fs_exec(trace_path, features_path);
        if (bench->parsed())
            return cmd_bench(bench_kind, features_path, seed, bench_out, baseline_path);
        return kEnvFailure;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kEnvFailure;
    } catch (const ClientError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kEnvFailure;
    } catch (const TestHarnessError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kEnvFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kEnvFailure;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainFailure;
    }
}
