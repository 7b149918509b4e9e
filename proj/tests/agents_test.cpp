#include "sysspec/agents.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace sysspec;
using nlohmann::json;

namespace {

std::string fixture(const std::string& rel) { return std::string(FIXTURE_DIR) + "/" + rel; }

std::filesystem::path fresh_cache_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("sysspec-agents-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    return dir;
}

MockClient fail_then_pass_client() {
    return MockClient(json{
        {"model_id", "mock-1"},
        {"replies",
         {{"codegen", {"int impl_v1(void) { return 0; }", "int impl_v2(void) { return 0; }",
                       "int impl_v3(void) { return 0; }"}},
          {"speceval", {"FAIL:\n- Case 2 unhandled", "PASS", "PASS"}}}}});
}

GenerationTask ins_task() {
    SpecDocument doc = load_spec_dir(fixture("atomfs"));
    GenerationTask task;
    task.module = *doc.find_module("ins");
    task.resolved_rely = render_resolved_rely(doc, "ins");
    return task;
}

TEST(CompileModule, FailThenPassUsesTwoAttempts) {
    MockClient client = fail_then_pass_client();
    CacheStore cache(fresh_cache_dir("ftp"));
    GeneratedModule gm = compile_module(ins_task(), client, client, cache);

    EXPECT_EQ(gm.attempts_used, (std::pair<int, int>{2, 1}));
    ASSERT_EQ(gm.transcript.size(), 3u);
    EXPECT_FALSE(gm.transcript[0].verdict.pass);
    EXPECT_TRUE(gm.transcript[1].verdict.pass);
    // The reviewer's finding appears verbatim in the retry prompt.
    EXPECT_EQ(gm.transcript[0].verdict.feedback,
              (std::vector<std::string>{"Case 2 unhandled"}));
    EXPECT_NE(gm.transcript[1].prompt.find("Case 2 unhandled"), std::string::npos);
    EXPECT_EQ(gm.transcript[0].prompt.find("Case 2 unhandled"), std::string::npos);
    EXPECT_EQ(gm.phase1_code, "int impl_v2(void) { return 0; }");
    EXPECT_EQ(gm.final_code, "int impl_v3(void) { return 0; }");
}

TEST(CompileModule, CacheHitMakesZeroClientCalls) {
    auto dir = fresh_cache_dir("hit");
    CacheStore cache(dir);
    {
        MockClient warm = fail_then_pass_client();
        compile_module(ins_task(), warm, warm, cache);
    }
    MockClient cold = fail_then_pass_client();
    GeneratedModule gm = compile_module(ins_task(), cold, cold, cache);
    EXPECT_EQ(cold.calls(), 0);
    EXPECT_EQ(gm.attempts_used, (std::pair<int, int>{0, 0}));
    EXPECT_EQ(gm.phase1_code, "int impl_v2(void) { return 0; }");
    EXPECT_EQ(gm.final_code, "int impl_v3(void) { return 0; }");
}

TEST(CompileModule, AlwaysFailingReviewerHitsAttemptLimit) {
    MockClient client(json{{"model_id", "mock-1"},
                           {"replies",
                            {{"codegen", {"int impl(void) { return 0; }"}},
                             {"speceval", {"FAIL:\n- missing unlock on error path"}}}}});
    CacheStore cache(fresh_cache_dir("limit"));
    try {
        compile_module(ins_task(), client, client, cache);
        FAIL() << "expected AttemptLimitExceededError";
    } catch (const AttemptLimitExceededError& e) {
        EXPECT_EQ(e.phase, Phase::functional);
        ASSERT_EQ(e.transcript.size(), 3u);
        for (const auto& t : e.transcript)
            EXPECT_EQ(t.verdict.feedback,
                      (std::vector<std::string>{"missing unlock on error path"}));
    }
}

TEST(CompileModule, FeedbackIsMonotoneAndUnduplicated) {
    MockClient client(
        json{{"model_id", "mock-1"},
             {"replies",
              {{"codegen", {"int impl(void) { return 0; }"}},
               {"speceval", {"FAIL:\n- finding one", "FAIL:\n- finding two",
                             "FAIL:\n- finding three"}}}}});
    CacheStore cache(fresh_cache_dir("mono"));
    try {
        compile_module(ins_task(), client, client, cache);
        FAIL() << "expected AttemptLimitExceededError";
    } catch (const AttemptLimitExceededError& e) {
        ASSERT_EQ(e.transcript.size(), 3u);
        std::vector<std::string> findings{"finding one", "finding two", "finding three"};
        for (size_t k = 0; k < e.transcript.size(); ++k) {
            const std::string& prompt = e.transcript[k].prompt;
            size_t last_pos = 0;
            for (size_t j = 0; j < findings.size(); ++j) {
                size_t first = prompt.find(findings[j]);
                if (j < k) {
                    // Every earlier finding appears exactly once, in order.
                    ASSERT_NE(first, std::string::npos);
                    EXPECT_EQ(prompt.find(findings[j], first + 1), std::string::npos);
                    EXPECT_GT(first, last_pos);
                    last_pos = first;
                } else {
                    EXPECT_EQ(first, std::string::npos);
                }
            }
        }
    }
}

TEST(CompileModule, DeterministicAcrossRuns) {
    auto run = [] {
        MockClient client = fail_then_pass_client();
        CacheStore cache(fresh_cache_dir("det"));
        GeneratedModule gm = compile_module(ins_task(), client, client, cache);
        std::filesystem::remove_all(cache.dir());
        std::string flat;
        for (const auto& t : gm.transcript) flat += t.prompt + "\x1f" + t.reply + "\x1f";
        return flat + gm.final_code;
    };
    EXPECT_EQ(run(), run());
}

TEST(AssemblePrompt, FunctionalPhaseExcludesLockAssertions) {
    GenerationTask task = ins_task();
    task.phase = Phase::functional;
    std::string prompt = assemble_prompt(task);
    EXPECT_EQ(prompt.find("Lock-pre"), std::string::npos);
    EXPECT_EQ(prompt.find("Lock-post"), std::string::npos);
    EXPECT_EQ(prompt.find("none_held"), std::string::npos);
    EXPECT_NE(prompt.find("Case 1: Successful traversal and insertion"), std::string::npos);
    EXPECT_NE(prompt.find("locate(cur: inode*, path: char**) -> inode*"), std::string::npos);
}

TEST(AssemblePrompt, ConcurrencyPhaseExcludesFunctionalCases) {
    GenerationTask task = ins_task();
    task.phase = Phase::concurrency;
    task.phase1_code = "int atomfs_ins(void) { return 0; }";
    std::string prompt = assemble_prompt(task);
    EXPECT_NE(prompt.find("Lock-pre: none_held"), std::string::npos);
    EXPECT_NE(prompt.find("Mechanisms: exclusive"), std::string::npos);
    EXPECT_NE(prompt.find(task.phase1_code), std::string::npos);
    EXPECT_EQ(prompt.find("Successful traversal and insertion"), std::string::npos);
    EXPECT_EQ(prompt.find("root_inum always exists"), std::string::npos);
}

TEST(AssemblePrompt, EmptyConcurrencySpecSaysNoLocking) {
    GenerationTask task;
    task.module = parse_spec("[MODULE] plain\n").modules[0];
    task.phase = Phase::concurrency;
    task.phase1_code = "void noop(void) {}";
    std::string prompt = assemble_prompt(task);
    EXPECT_NE(prompt.find("no locking required"), std::string::npos);
}

TEST(AssemblePrompt, MissingRelyContextIsRejected) {
    GenerationTask task = ins_task();
    task.resolved_rely.clear();
    EXPECT_THROW(assemble_prompt(task), MissingRelyError);
}

TEST(SpecEval, ParsesReviewerProtocol) {
    ModuleSpec mod = parse_spec("[MODULE] m\n").modules[0];
    auto reply_client = [](const std::string& reply) {
        return MockClient(json{{"model_id", "rev"}, {"replies", {{"speceval", {reply}}}}});
    };
    {
        MockClient c = reply_client("PASS");
        Verdict v = spec_eval("code", mod, Phase::functional, c);
        EXPECT_TRUE(v.pass);
        EXPECT_TRUE(v.feedback.empty());
        EXPECT_EQ(v.reviewer_model, "rev");
    }
    {
        MockClient c = reply_client("FAIL: missing unlock on error path");
        Verdict v = spec_eval("code", mod, Phase::functional, c);
        EXPECT_FALSE(v.pass);
        EXPECT_EQ(v.feedback, (std::vector<std::string>{"missing unlock on error path"}));
    }
    {
        MockClient c = reply_client("FAIL:\n- one\n- two");
        Verdict v = spec_eval("code", mod, Phase::functional, c);
        EXPECT_FALSE(v.pass);
        EXPECT_EQ(v.feedback, (std::vector<std::string>{"one", "two"}));
    }
    {
        std::string garbage = "I think this looks broadly reasonable!";
        MockClient c = reply_client(garbage);
        Verdict v = spec_eval("code", mod, Phase::functional, c);
        EXPECT_FALSE(v.pass);
        ASSERT_EQ(v.feedback.size(), 2u);
        EXPECT_EQ(v.feedback[0], "reviewer reply unparseable");
        EXPECT_EQ(v.feedback[1], garbage);
        EXPECT_EQ(v.raw, garbage);
    }
}

TEST(SpecEval, BudgetOverrunWarnsWithoutFailing) {
    ModuleSpec mod = parse_spec("[MODULE] m loc_budget=2\n").modules[0];
    MockClient c(json{{"model_id", "rev"}, {"replies", {{"speceval", {"PASS"}}}}});
    Verdict v = spec_eval("a\nb\nc\nd\n", mod, Phase::functional, c);
    EXPECT_TRUE(v.pass);
    ASSERT_EQ(v.feedback.size(), 1u);
    EXPECT_NE(v.feedback[0].find("over the budget"), std::string::npos);
}

TEST(CacheKey, AnySingleByteMutationChangesKey) {
    SpecDocument doc = load_spec_dir(fixture("atomfs"));
    std::string canonical = serialize_module(*doc.find_module("ins"));
    std::string rely = render_resolved_rely(doc, "ins");
    std::string base = CacheStore::key(canonical, rely, "model-a", Phase::functional);

    std::mt19937 rng(17);
    for (int iter = 0; iter < 200; ++iter) {
        std::string mutated = canonical;
        size_t pos = rng() % mutated.size();
        char delta = static_cast<char>(1 + rng() % 255);
        mutated[pos] = static_cast<char>(mutated[pos] ^ delta);
        EXPECT_NE(CacheStore::key(mutated, rely, "model-a", Phase::functional), base);
    }
    EXPECT_NE(CacheStore::key(canonical, rely + "x", "model-a", Phase::functional), base);
    EXPECT_NE(CacheStore::key(canonical, rely, "model-b", Phase::functional), base);
    EXPECT_NE(CacheStore::key(canonical, rely, "model-a", Phase::concurrency), base);
    EXPECT_EQ(CacheStore::key(canonical, rely, "model-a", Phase::functional), base);
}

TEST(ValidateSystem, CombinesReviewAndTestExit) {
    SpecDocument doc = load_spec_dir(fixture("atomfs"));
    GeneratedModule gm;
    gm.name = "ins";
    gm.final_code = "int atomfs_ins(void) { return 0; }";
    {
        MockClient rev(json{{"model_id", "rev"}, {"replies", {{"speceval", {"PASS"}}}}});
        ValidationReport r = validate_system({gm}, doc, "exit 0", rev);
        EXPECT_TRUE(r.overall_pass);
        EXPECT_EQ(r.test_exit, 0);
    }
    {
        MockClient rev(json{{"model_id", "rev"}, {"replies", {{"speceval", {"PASS"}}}}});
        ValidationReport r = validate_system({gm}, doc, "echo boom; exit 1", rev);
        EXPECT_FALSE(r.overall_pass);
        EXPECT_EQ(r.test_exit, 1);
        EXPECT_NE(r.test_output.find("boom"), std::string::npos);
    }
    {
        // One failing module does not short-circuit the others.
        GeneratedModule gm2;
        gm2.name = "traversal";
        gm2.final_code = "void lock(void) {}";
        MockClient rev(json{{"model_id", "rev"},
                            {"replies", {{"speceval", {"FAIL:\n- bad", "PASS"}}}}});
        ValidationReport r = validate_system({gm, gm2}, doc, "exit 0", rev);
        EXPECT_FALSE(r.overall_pass);
        ASSERT_EQ(r.module_verdicts.size(), 2u);
        EXPECT_FALSE(r.module_verdicts[0].second.pass);
        EXPECT_TRUE(r.module_verdicts[1].second.pass);
    }
}

// --- assist ----------------------------------------------------------------

const char* kDraft =
    "[MODULE] scratch level=1 loc_budget=500\n"
    "\n"
    "[GUARANTEE]\n"
    "func ping(name: char*) -> int\n"
    "\n"
    "[SPEC] ping(name: char*) -> int\n"
    "Post-condition:\n"
    "Case 1: ok\n"
    "  Return: 0\n";

TEST(Assist, SpecfineInsertsMissingClause) {
    std::string revised = std::string(kDraft);
    revised.insert(revised.find("Post-condition:"), "Pre-condition: name is a valid string\n");

    MockClient client(json{
        {"model_id", "mock-1"},
        {"replies",
         {{"codegen", {"int ping(char* name) { return 0; }"}},
          {"speceval",
           {"FAIL:\n- precondition omits name validity", "FAIL:\n- precondition omits name validity",
            "FAIL:\n- precondition omits name validity", "PASS", "PASS"}},
          {"specfine", {revised}}}}});
    CacheStore cache(fresh_cache_dir("assist"));
    AssistClients clients{&client, &client, &client};
    AssistOutcome out = assist(kDraft, clients, 3, cache);
    EXPECT_TRUE(out.success);
    EXPECT_EQ(out.rounds_used, 2);
    EXPECT_NE(out.refined_spec.find("name is a valid string"), std::string::npos);
    EXPECT_FALSE(out.generated_code.empty());
}

TEST(Assist, PassingDraftReturnsUnchangedAfterOneRound) {
    MockClient client(json{{"model_id", "mock-1"},
                           {"replies",
                            {{"codegen", {"int ping(char* name) { return 0; }"}},
                             {"speceval", {"PASS"}}}}});
    CacheStore cache(fresh_cache_dir("assist-pass"));
    AssistClients clients{&client, &client, &client};
    AssistOutcome out = assist(kDraft, clients, 3, cache);
    EXPECT_TRUE(out.success);
    EXPECT_EQ(out.rounds_used, 1);
    EXPECT_EQ(out.refined_spec, serialize_module(parse_spec(kDraft).modules[0]));
}

TEST(Assist, ZeroRoundsFailsImmediately) {
    MockClient client(json{{"model_id", "mock-1"},
                           {"replies",
                            {{"codegen", {"code"}}, {"speceval", {"PASS"}}}}});
    CacheStore cache(fresh_cache_dir("assist-zero"));
    AssistClients clients{&client, &client, &client};
    AssistOutcome out = assist(kDraft, clients, 0, cache);
    EXPECT_FALSE(out.success);
    EXPECT_EQ(client.calls(), 0);
    EXPECT_FALSE(out.annotated_spec.empty());
}

TEST(Redact, CredentialNeverSurvives) {
    EXPECT_EQ(redact("Bearer sk-123 and sk-123 again", "sk-123"),
              "Bearer [REDACTED] and [REDACTED] again");
    EXPECT_EQ(redact("nothing here", ""), "nothing here");
}

}  // namespace
