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

#include "ctxopt/mutation.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "ctxopt/errors.hpp"
#include "ctxopt/optimizer_state.hpp"
#include "test_support.hpp"

namespace ctxopt {
namespace {

using testing::make_playbook;

Diagnostic gap(const std::string& tokens, const std::string& root_cause = "missing") {
  Diagnostic d;
  d.attribution = Attribution::actionable_gap;
  d.coverage_gap = tokens;
  d.root_cause = root_cause;
  return d;
}

Diagnostic variance() {
  Diagnostic d;
  d.attribution = Attribution::execution_variance;
  d.root_cause = "noise";
  return d;
}

// Returns a fixed proposal and counts calls.
class FixedMutator : public MutatorBackend {
 public:
  explicit FixedMutator(std::vector<EditOp> edits) : edits_(std::move(edits)) {}
  MutationProposal propose(const Playbook&, std::span<const Diagnostic>,
                           const StateDoc* state) const override {
    ++calls;
    saw_state = state != nullptr;
    return {edits_, "fixed"};
  }
  mutable int calls = 0;
  mutable bool saw_state = false;

 private:
  std::vector<EditOp> edits_;
};

TEST(MutationTest, NoDiagnosticsIsNoOpWithoutCallingBackend) {
  FixedMutator backend({AddEntry{"s", "x"}});
  const Playbook pb = make_playbook({{"rules", {"one"}}});
  const MutationResult r = mutate(backend, pb, {}, nullptr);
  EXPECT_TRUE(r.no_op);
  EXPECT_TRUE(r.edits.empty());
  EXPECT_EQ(backend.calls, 0);
  EXPECT_EQ(apply_mutation(pb, r), pb);
}

TEST(MutationTest, InvalidEditsAreDroppedIndividually) {
  const Playbook pb = make_playbook({{"rules", {"one", "two"}}});
  FixedMutator backend({
      AddEntry{"rules", "three"},
      UpdateEntry{EntryId{9}, "x"},        // unknown id
      AddEntry{"rules", "one"},            // duplicate content
      UpdateEntry{EntryId{1}, "two"},      // unchanged
      AddEntry{"rules", "a\nb"},           // multi-line
      AddEntry{"", "x"},                   // bad section
      UpdateEntry{EntryId{0}, " "},        // empty
      DeleteEntry{EntryId{1}},
      DeleteEntry{EntryId{1}},             // already gone
      AddEntry{"rules", "three"},          // duplicate of an accepted add
  });
  const std::vector<Diagnostic> diags = {gap("x")};
  const MutationResult r = mutate(backend, pb, diags, nullptr);
  EXPECT_EQ(r.edits, (std::vector<EditOp>{AddEntry{"rules", "three"}, DeleteEntry{EntryId{1}}}));
  ASSERT_EQ(r.dropped.size(), 8u);
  EXPECT_EQ(r.dropped[0].reason, "unknown entry id 9");
  EXPECT_EQ(r.dropped[1].reason, "duplicate content");
  EXPECT_EQ(r.dropped[2].reason, "unchanged content");
  EXPECT_EQ(r.dropped[4].reason, "invalid section name");
  EXPECT_EQ(r.dropped[7].reason, "duplicate content");
  EXPECT_FALSE(r.no_op);
  const Playbook out = apply_mutation(pb, r);
  EXPECT_EQ(out.version(), 1u);
  EXPECT_EQ(out.entry_count(), 2u);
}

TEST(MutationTest, EditCap) {
  std::vector<EditOp> edits;
  for (int i = 0; i < 5; ++i) edits.push_back(AddEntry{"s", "rule " + std::to_string(i)});
  FixedMutator backend(edits);
  const std::vector<Diagnostic> diags = {gap("x")};
  const MutationResult r = mutate(backend, Playbook{}, diags, nullptr, MutateOptions{3});
  EXPECT_EQ(r.edits.size(), 3u);
  ASSERT_EQ(r.dropped.size(), 2u);
  EXPECT_EQ(r.dropped[0].reason, "edit cap reached");
}

TEST(MutationTest, StateIsPassedOnlyWhenGiven) {
  FixedMutator backend({});
  const std::vector<Diagnostic> diags = {gap("x")};
  StateDoc state;
  EXPECT_TRUE(mutate(backend, Playbook{}, diags, &state).state_injected);
  EXPECT_TRUE(backend.saw_state);
  EXPECT_FALSE(mutate(backend, Playbook{}, diags, nullptr).state_injected);
  EXPECT_FALSE(backend.saw_state);
}

TEST(MutationTest, ResultJsonRoundTrip) {
  MutationResult r;
  r.edits = {AddEntry{"s", "x"}};
  r.rationale = "why";
  r.no_op = false;
  r.dropped = {{DeleteEntry{EntryId{4}}, "unknown entry id 4"}};
  r.state_injected = true;
  EXPECT_EQ(nlohmann::json(r).get<MutationResult>(), r);
}

TEST(MutationTest, MajorityAddsRecurringGap) {
  const MajorityVoteMutator m;
  const std::vector<Diagnostic> diags = {gap("paginate"), gap("paginate retry"),
                                         gap("paginate")};
  const MutationResult r = mutate(m, Playbook{}, diags, nullptr);
  ASSERT_EQ(r.edits.size(), 1u);
  EXPECT_EQ(r.edits[0], EditOp(AddEntry{"learned_rules",
                                        "Always apply paginate when it is relevant."}));
  EXPECT_EQ(r.rationale, "add 'paginate' (3/3)");
}

TEST(MutationTest, MajorityIgnoresExecutionVariance) {
  const MajorityVoteMutator m;
  const std::vector<Diagnostic> diags = {variance(), variance(), variance()};
  const MutationResult r = mutate(m, Playbook{}, diags, nullptr);
  EXPECT_TRUE(r.no_op);
  EXPECT_EQ(r.rationale, "no recurring pattern across 3 diagnostics");
}

TEST(MutationTest, MajorityFiltersOneOffs) {
  const MajorityVoteMutator m;
  const std::vector<Diagnostic> diags = {gap("a"), gap("b"), gap("c")};
  EXPECT_TRUE(mutate(m, Playbook{}, diags, nullptr).no_op);
}

TEST(MutationTest, MajorityDeletesBlamedEntries) {
  const MajorityVoteMutator m;
  const Playbook pb = make_playbook({{"rules", {"use raw_sql", "retry"}}});
  const std::vector<Diagnostic> diags = {gap("", "entry [0] prescribes forbidden 'raw_sql'"),
                                         gap("", "entry [0] prescribes forbidden 'raw_sql'")};
  const MutationResult r = mutate(m, pb, diags, nullptr);
  EXPECT_EQ(r.edits, std::vector<EditOp>{DeleteEntry{EntryId{0}}});
}

TEST(MutationTest, StateCarriesHypothesesAndRequiresSecondStrike) {
  const MajorityVoteMutator m;
  const Playbook pb = make_playbook({{"rules", {"use raw_sql"}}});
  const std::vector<Diagnostic> diags = {gap("retry", "entry [0] is harmful"), variance(),
                                         variance()};
  StateDoc state;
  // One vote out of three: no edit, no delete on a first strike.
  MutationResult r = mutate(m, pb, diags, &state);
  EXPECT_TRUE(r.no_op);
  state.open_hypotheses = {gap_hypothesis("retry"), suspect_hypothesis(EntryId{0})};
  r = mutate(m, pb, diags, &state);
  // A carried gap needs one vote; the suspect still needs a majority.
  EXPECT_EQ(r.edits, (std::vector<EditOp>{AddEntry{"learned_rules",
                                                   MajorityVoteMutator::rule_for("retry")}}));
  const std::vector<Diagnostic> blame = {gap("", "entry [0] is harmful")};
  StateDoc fresh;
  EXPECT_TRUE(mutate(m, pb, blame, &fresh).no_op);
  EXPECT_EQ(mutate(m, pb, blame, &state).edits, std::vector<EditOp>{DeleteEntry{EntryId{0}}});
}

// Ten rounds of scripted mutation: every token that wins a majority in some
// round ends up in exactly one entry.
TEST(MutationPropertyTest, MajorityTokensLandExactlyOnce) {
  const std::vector<std::string> vocab = {"paginate", "retry", "cache", "encode", "dedupe"};
  const MajorityVoteMutator m;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    Playbook pb;
    std::set<std::string> expected;
    for (int round = 0; round < 10; ++round) {
      const std::size_t k = 1 + rng() % 4;
      std::vector<Diagnostic> diags;
      std::map<std::string, std::size_t> votes;
      for (std::size_t i = 0; i < k; ++i) {
        std::set<std::string> toks;
        const std::size_t n = rng() % 3;
        for (std::size_t j = 0; j < n; ++j) toks.insert(vocab[rng() % vocab.size()]);
        std::string text;
        for (const auto& t : toks) {
          text += (text.empty() ? "" : " ") + t;
          ++votes[t];
        }
        diags.push_back(rng() % 4 == 0 ? variance() : gap(text));
        if (diags.back().attribution != Attribution::actionable_gap) {
          for (const auto& t : toks) --votes[t];
        }
      }
      for (const auto& [tok, v] : votes) {
        if (2 * v >= k) expected.insert(tok);
      }
      pb = apply_mutation(pb, mutate(m, pb, diags, nullptr));
    }
    for (const auto& tok : vocab) {
      std::size_t count = 0;
      for (const Section& s : pb.sections()) {
        for (const Entry& e : s.entries) count += e.content == MajorityVoteMutator::rule_for(tok);
      }
      EXPECT_EQ(count, expected.count(tok)) << "seed " << seed << " token " << tok;
    }
  }
}

// Scripted edits only touch entries a diagnostic cites and only add rules
// for tokens a diagnostic names as a gap.
TEST(MutationPropertyTest, EditLocality) {
  const std::vector<std::string> vocab = {"paginate", "retry", "cache", "raw_sql", "skip_auth"};
  const RuleWorldAgent agent;
  const ExactMatchEvaluator eval;
  const MajorityVoteMutator m;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<TaskSpec> tasks;
    for (int i = 0; i < 4; ++i) {
      tasks.push_back(testing::rule_task("t" + std::to_string(i),
                                         {vocab[rng() % 3]}, {vocab[3 + rng() % 2]}, 0.3));
    }
    std::vector<std::string> rules;
    for (const auto& tok : vocab) {
      if (rng() % 2) rules.push_back("prefer " + tok);
    }
    const Playbook pb = make_playbook({{"rules", rules}});
    const RuleWorldReflector reflector(tasks);
    std::vector<Diagnostic> diags;
    for (const auto& t : tasks) {
      RolloutContext ctx;
      ctx.seed = rng();
      const Rollout r = run_task(agent, eval, t, pb, false, ctx);
      if (!r.outcome.passed) diags.push_back(reflect_single(reflector, r, pb));
    }
    std::set<EntryId> cited;
    std::set<std::string> gaps;
    for (const auto& d : diags) {
      cited.insert(d.cited_entry_ids.begin(), d.cited_entry_ids.end());
      for (const auto& w : word_tokens(d.coverage_gap)) gaps.insert(w);
    }
    for (const EditOp& e : mutate(m, pb, diags, nullptr).edits) {
      if (const auto* del = std::get_if<DeleteEntry>(&e)) {
        EXPECT_TRUE(cited.count(del->id)) << seed;
      } else if (const auto* add = std::get_if<AddEntry>(&e)) {
        bool named = false;
        for (const auto& g : gaps) named |= add->content == MajorityVoteMutator::rule_for(g);
        EXPECT_TRUE(named) << seed << " " << add->content;
      } else {
        ADD_FAILURE() << "scripted mutator never rewrites entries";
      }
    }
  }
}

}  // namespace
}  // namespace ctxopt
