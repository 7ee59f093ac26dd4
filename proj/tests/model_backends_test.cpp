// Copyright 2026 The ctxopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ctxopt/model_backends.hpp"

#include <gtest/gtest.h>

#include "ctxopt/errors.hpp"
#include "ctxopt/json_io.hpp"
#include "test_support.hpp"

namespace ctxopt {
namespace {

using testing::make_playbook;

std::string openai_body(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}
      .dump();
}

struct Backend {
  std::shared_ptr<ScriptedTransport> transport = std::make_shared<ScriptedTransport>();
  std::shared_ptr<ModelClient> client;

  Backend() {
    ModelEndpoint e;
    e.base_url = "http://localhost:1";
    e.model_name = "m";
    e.api_key_env = "K";
    ClientOptions o;
    o.sleeper = [](std::chrono::milliseconds) {};
    o.env = [](const std::string&) { return std::optional<std::string>("k"); };
    client = std::make_shared<ModelClient>(e, transport, o);
  }
  void reply(const std::string& text) { transport->push({200, openai_body(text)}); }
  // Messages of the n-th request.
  nlohmann::json messages(std::size_t n) const {
    return nlohmann::json::parse(transport->requests().at(n).body).at("messages");
  }
};

Rollout failed_rollout() {
  Rollout r;
  r.trajectory.task_id = "t1";
  r.trajectory.steps.push_back({"look up a", "lookup a", "entry [0] applies"});
  r.trajectory.final_answer = "a";
  return r;
}

const char kGoodDiagnostic[] =
    "```diagnostic\nattribution: actionable_gap\nroot_cause: entry [0] is incomplete\n"
    "coverage_gap: b\ncited_entries: [0]\n```";

TEST(ModelBackendsTest, DefaultPromptsMatchPromptFiles) {
  const std::pair<Role, const char*> files[] = {{Role::agent, "agent.txt"},
                                                {Role::reflector, "reflector.txt"},
                                                {Role::mutator, "mutator.txt"},
                                                {Role::state_updater, "state_updater.txt"}};
  for (const auto& [role, file] : files) {
    EXPECT_EQ(default_prompt(role), read_text_file(testing::source_dir() / "prompts" / file))
        << file;
  }
}

TEST(ModelBackendsTest, ReflectorParsesStructuredReply) {
  Backend b;
  b.reply(kGoodDiagnostic);
  const Playbook pb = make_playbook({{"rules", {"Always apply a when it is relevant."}}});
  const Diagnostic d = reflect_single(ModelReflector(b.client), failed_rollout(), pb);
  EXPECT_EQ(d.attribution, Attribution::actionable_gap);
  EXPECT_EQ(d.coverage_gap, "b");
  EXPECT_EQ(d.source_task_id, "t1");
  const std::string prompt = b.messages(0)[0].at("content");
  EXPECT_NE(prompt.find("### Failing trace"), std::string::npos);
  EXPECT_NE(prompt.find("Always apply a"), std::string::npos);
  EXPECT_NE(prompt.find("```diagnostic"), std::string::npos);
}

TEST(ModelBackendsTest, ReflectorRetriesWithTheParseError) {
  Backend b;
  b.reply("I think it failed.");
  b.reply(kGoodDiagnostic);
  const Playbook pb = make_playbook({{"rules", {"x"}}});
  EXPECT_NO_THROW(reflect_single(ModelReflector(b.client), failed_rollout(), pb));
  const auto second = b.messages(1);
  ASSERT_EQ(second.size(), 3u);
  EXPECT_EQ(second[1].at("role"), "assistant");
  EXPECT_EQ(second[1].at("content"), "I think it failed.");
  EXPECT_NE(second[2].at("content").get<std::string>().find("no ```diagnostic block"),
            std::string::npos);
}

TEST(ModelBackendsTest, PersistentGarbageIsMalformedOutput) {
  Backend b;
  for (int i = 0; i < kParseRetries + 1; ++i) b.reply("garbage");
  const Playbook pb = make_playbook({{"rules", {"x"}}});
  try {
    reflect_single(ModelReflector(b.client), failed_rollout(), pb);
    FAIL();
  } catch (const MalformedModelOutput& e) {
    EXPECT_EQ(e.attempts(), kParseRetries + 1);
  }
  EXPECT_EQ(b.transport->requests().size(), static_cast<std::size_t>(kParseRetries + 1));
}

TEST(ModelBackendsTest, ProseReflectorKeepsTheText) {
  Backend b;
  b.reply("The agent ignored [0]\nand guessed.");
  const Playbook pb = make_playbook({{"rules", {"x"}}});
  const Diagnostic d = reflect_single(ModelReflector(b.client), failed_rollout(), pb,
                                      ReflectOptions{.structured = false});
  EXPECT_EQ(d.root_cause, "The agent ignored [0] and guessed.");
  EXPECT_EQ(d.cited_entry_ids, std::vector<EntryId>{EntryId{0}});
  EXPECT_EQ(b.messages(0)[0].at("content").get<std::string>().find("```diagnostic"),
            std::string::npos);
}

TEST(ModelBackendsTest, DualRendersAnnotationWithoutOutcome) {
  Backend b;
  b.reply(kGoodDiagnostic);
  const Playbook pb = make_playbook({{"rules", {"x"}}});
  Trajectory annotated = failed_rollout().trajectory;
  annotated.annotated = true;
  annotated.cited_entry_ids = {EntryId{0}};
  reflect_dual(ModelReflector(b.client), failed_rollout(), annotated, pb);
  const std::string prompt = b.messages(0)[0].at("content");
  EXPECT_NE(prompt.find("### Annotated trace"), std::string::npos);
  EXPECT_NE(prompt.find("outcome: withheld"), std::string::npos);
  EXPECT_NE(prompt.find("cited entries: [0]"), std::string::npos);
}

TEST(ModelBackendsTest, MutatorParsesAndValidates) {
  Backend b;
  b.reply("```mutation\nrationale: fix\nADD rules | new rule\nDELETE 42\n```");
  const Playbook pb = make_playbook({{"rules", {"x"}}});
  Diagnostic d;
  d.root_cause = "gap";
  const std::vector<Diagnostic> diags = {d};
  const MutationResult r = mutate(ModelMutator(b.client, 4), pb, diags, nullptr);
  EXPECT_EQ(r.rationale, "fix");
  EXPECT_EQ(r.edits, (std::vector<EditOp>{AddEntry{"rules", "new rule"}}));
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped[0].edit, EditOp(DeleteEntry{EntryId{42}}));
  const std::string prompt = b.messages(0)[0].at("content");
  EXPECT_NE(prompt.find("4"), std::string::npos);
  EXPECT_EQ(prompt.find("## Optimizer state"), std::string::npos);
}

TEST(ModelBackendsTest, StateUpdaterParsesRevision) {
  Backend b;
  b.reply("```state\nsummary: added a rule\nassessment: fine\nhypothesis: gap: b\n"
          "phase: exploratory\n```");
  const Playbook pb = make_playbook({{"rules", {"x"}}});
  const std::vector<EditOp> edits = {AddEntry{"rules", "y"}};
  const StateDoc s = update_state(ModelStateUpdater(b.client), StateDoc{}, {}, pb,
                                  apply_edits(pb, edits));
  EXPECT_EQ(s.change_ledger, (std::vector<LedgerRecord>{{1, "added a rule"}}));
  EXPECT_EQ(s.open_hypotheses, std::vector<std::string>{"gap: b"});
  EXPECT_NE(b.messages(0)[0].at("content").get<std::string>().find("ADD rules | y"),
            std::string::npos);
}

TEST(ModelBackendsTest, AgentAnswerAndCitations) {
  Backend b;
  b.reply("Thinking.\nCITE: [2], 5\n```answer\na b\n```\nCITE: 2 7");
  TaskSpec task = testing::rule_task("t", {"a", "b"});
  const Trajectory t = ModelAgent(b.client).run(task, "ctx", true, RolloutContext{});
  EXPECT_EQ(t.final_answer, "a b");
  EXPECT_EQ(t.cited_entry_ids, (std::vector<EntryId>{EntryId{2}, EntryId{5}, EntryId{7}}));

  b.reply("just a b");
  const Trajectory plain = ModelAgent(b.client).run(task, "ctx", false, RolloutContext{});
  EXPECT_EQ(plain.final_answer, "just a b");
  EXPECT_TRUE(plain.cited_entry_ids.empty());
}

TEST(ModelBackendsTest, RenderTrace) {
  Rollout r = failed_rollout();
  EXPECT_EQ(render_trace(r.trajectory, &r.outcome),
            "task: t1\noutcome: failed (reward 0)\nstep 1\n  thought: look up a\n"
            "  action: lookup a\n  observation: entry [0] applies\nfinal answer: a\n");
  EXPECT_EQ(render_diagnostics({}), "(none)\n");
}

}  // namespace
}  // namespace ctxopt
