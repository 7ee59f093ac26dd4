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

#include "ctxopt/structured_output.hpp"

#include <set>
#include <sstream>

namespace ctxopt {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in{std::string(text)};
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string single_block(std::string_view text, std::string_view tag) {
  const auto blocks = fenced_blocks(text, tag);
  if (blocks.empty()) throw OutputParseError("no ```" + std::string(tag) + " block");
  if (blocks.size() > 1) {
    throw OutputParseError("expected one ```" + std::string(tag) + " block, found " +
                           std::to_string(blocks.size()));
  }
  return blocks.front();
}

// key: value lines. Blank lines are skipped; `repeatable` keys collect
// every value, others may appear once.
std::map<std::string, std::vector<std::string>> fields(
    const std::string& block, const std::set<std::string>& known,
    const std::set<std::string>& repeatable) {
  std::map<std::string, std::vector<std::string>> out;
  for (const std::string& raw : lines_of(block)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw OutputParseError("line without a field: '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, colon));
    if (!known.count(key)) throw OutputParseError("unknown field '" + key + "'");
    auto& values = out[key];
    if (!values.empty() && !repeatable.count(key)) {
      throw OutputParseError("duplicate field '" + key + "'");
    }
    values.push_back(trim(std::string_view(line).substr(colon + 1)));
  }
  return out;
}

const std::string* field(const std::map<std::string, std::vector<std::string>>& f,
                         const std::string& key) {
  auto it = f.find(key);
  return it == f.end() ? nullptr : &it->second.front();
}

bool is_none(const std::string& v) { return v == "none" || v == "-"; }

EntryId parse_id(std::string token) {
  if (token.size() >= 2 && token.front() == '[' && token.back() == ']') {
    token = token.substr(1, token.size() - 2);
  }
  if (token.empty() || token.size() > 18 ||
      token.find_first_not_of("0123456789") != std::string::npos) {
    throw OutputParseError("bad entry id '" + token + "'");
  }
  return EntryId{std::stoull(token)};
}

}  // namespace

std::vector<std::string> fenced_blocks(std::string_view text, std::string_view tag) {
  const std::string open = "```" + std::string(tag);
  std::vector<std::string> blocks;
  std::string current;
  bool inside = false;
  for (const std::string& raw : lines_of(text)) {
    const std::string line = trim(raw);
    if (!inside) {
      if (line == open) {
        inside = true;
        current.clear();
      }
    } else if (line == "```") {
      blocks.push_back(current);
      inside = false;
    } else {
      current += raw + "\n";
    }
  }
  if (inside) throw OutputParseError("unterminated ```" + std::string(tag) + " block");
  return blocks;
}

Diagnostic parse_diagnostic(std::string_view text) {
  const auto f = fields(single_block(text, "diagnostic"),
                        {"attribution", "root_cause", "coverage_gap", "cited_entries"}, {});
  Diagnostic d;
  const std::string* attribution = field(f, "attribution");
  if (!attribution) throw OutputParseError("missing field 'attribution'");
  const auto head = parse_attribution(*attribution);
  if (!head) throw OutputParseError("unknown attribution '" + *attribution + "'");
  d.attribution = *head;

  const std::string* root = field(f, "root_cause");
  if (!root || root->empty()) throw OutputParseError("missing field 'root_cause'");
  d.root_cause = *root;

  const std::string* gap = field(f, "coverage_gap");
  if (!gap) throw OutputParseError("missing field 'coverage_gap'");
  d.coverage_gap = is_none(*gap) ? std::string() : *gap;

  if (const std::string* cited = field(f, "cited_entries"); cited && !is_none(*cited)) {
    std::string token;
    for (char c : *cited + ",") {
      if (c == ',' || c == ' ') {
        if (!token.empty()) d.cited_entry_ids.push_back(parse_id(token));
        token.clear();
      } else {
        token += c;
      }
    }
  }
  return d;
}

MutationProposal parse_mutation(std::string_view text) {
  MutationProposal out;
  bool have_rationale = false;
  for (const std::string& raw : lines_of(single_block(text, "mutation"))) {
    const std::string line = trim(raw);
    if (line.empty() || line == "NOOP") continue;
    if (line.rfind("rationale:", 0) == 0) {
      if (have_rationale) throw OutputParseError("duplicate field 'rationale'");
      have_rationale = true;
      out.rationale = trim(std::string_view(line).substr(10));
      continue;
    }
    const auto space = line.find(' ');
    const std::string op = line.substr(0, space);
    const std::string rest = space == std::string::npos ? "" : trim(line.substr(space + 1));
    if (op == "DELETE") {
      out.edits.push_back(DeleteEntry{parse_id(rest)});
      continue;
    }
    if (op != "ADD" && op != "UPDATE") throw OutputParseError("unknown edit line '" + line + "'");
    const auto bar = rest.find('|');
    if (bar == std::string::npos) throw OutputParseError(op + " without '|': '" + line + "'");
    const std::string target = trim(std::string_view(rest).substr(0, bar));
    const std::string content = trim(std::string_view(rest).substr(bar + 1));
    if (op == "ADD") {
      out.edits.push_back(AddEntry{target, content});
    } else {
      out.edits.push_back(UpdateEntry{parse_id(target), content});
    }
  }
  return out;
}

StateRevision parse_state(std::string_view text) {
  const auto f = fields(single_block(text, "state"),
                        {"summary", "assessment", "hypothesis", "phase"}, {"hypothesis"});
  StateRevision rev;
  const std::string* summary = field(f, "summary");
  if (!summary || summary->empty()) throw OutputParseError("missing field 'summary'");
  rev.summary = *summary;
  const std::string* assessment = field(f, "assessment");
  if (!assessment) throw OutputParseError("missing field 'assessment'");
  rev.assessment = *assessment;
  const std::string* phase = field(f, "phase");
  if (!phase) throw OutputParseError("missing field 'phase'");
  const auto p = parse_phase(*phase);
  if (!p) throw OutputParseError("unknown phase '" + *phase + "'");
  rev.phase = *p;
  if (auto it = f.find("hypothesis"); it != f.end()) {
    for (const auto& h : it->second) {
      if (!h.empty()) rev.hypotheses.push_back(h);
    }
  }
  return rev;
}

std::string fill_template(std::string_view tmpl,
                          const std::map<std::string, std::string>& slots) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    if (auto it = slots.find(name); it != slots.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

}  // namespace ctxopt
