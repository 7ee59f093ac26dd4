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

#include "ctxopt/playbook.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "ctxopt/errors.hpp"
#include "ctxopt/json_io.hpp"

namespace ctxopt {
namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t';
  });
}

void check_content(std::string_view content) {
  if (content.empty() || is_blank(content)) {
    throw EmptyContent("entry content is empty");
  }
  if (content.find_first_of("\r\n") != std::string_view::npos) {
    throw MultilineContent("entry content spans multiple lines");
  }
}

void check_section_name(std::string_view name) {
  if (name.empty() || is_blank(name)) {
    throw EmptyContent("section name is empty");
  }
  if (name.find_first_of("\r\n") != std::string_view::npos) {
    throw MultilineContent("section name spans multiple lines");
  }
}

// Position of an entry inside the section list.
struct Slot {
  std::size_t section;
  std::size_t entry;
};

std::optional<Slot> locate(const std::vector<Section>& sections, EntryId id) {
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const auto& entries = sections[s].entries;
    for (std::size_t e = 0; e < entries.size(); ++e) {
      if (entries[e].id == id) return Slot{s, e};
    }
  }
  return std::nullopt;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string xml_unescape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '&') {
      if (text.substr(i, 5) == "&amp;") { out += '&'; i += 4; continue; }
      if (text.substr(i, 4) == "&lt;") { out += '<'; i += 3; continue; }
      if (text.substr(i, 4) == "&gt;") { out += '>'; i += 3; continue; }
    }
    out += text[i];
  }
  return out;
}

constexpr std::string_view kInstructionsOpen = "<playbook_instructions>";
constexpr std::string_view kInstructionsClose = "</playbook_instructions>";
constexpr std::string_view kInstructions =
    "Each playbook entry below is wrapped in an <entry id=\"N\"> tag.\n"
    "While you work, cite every entry you consult on a line of the form "
    "`CITE: <id>, <id>`.\n"
    "If you are unsure whether an entry applies, write "
    "`UNCERTAIN: <id> <reason>`.\n"
    "If the task needs guidance that no entry provides, write "
    "`MISSING: <what is missing>`.\n";

// Keeps the entries of one section whose ids survive in `updated` when that
// is expressible as deletes + in-place updates + trailing adds.
bool id_preserving(const Section& old_section, const Section& new_section) {
  std::unordered_map<std::uint64_t, std::size_t> old_pos;
  for (std::size_t i = 0; i < old_section.entries.size(); ++i) {
    old_pos[old_section.entries[i].id.value] = i;
  }
  bool seen_fresh = false;
  std::size_t last = 0;
  bool first = true;
  for (const Entry& e : new_section.entries) {
    auto it = old_pos.find(e.id.value);
    if (it == old_pos.end()) {
      seen_fresh = true;
      continue;
    }
    if (seen_fresh) return false;
    if (!first && it->second <= last) return false;
    last = it->second;
    first = false;
  }
  // With no surviving entry the section would vanish and be re-created at
  // the end, changing the section order.
  return !first;
}

}  // namespace

Playbook::Playbook(std::vector<Section> sections, std::uint64_t version,
                   std::uint64_t next_entry_id)
    : version_(version), next_entry_id_(next_entry_id) {
  std::set<std::string> names;
  std::set<std::uint64_t> ids;
  for (Section& section : sections) {
    if (section.entries.empty()) continue;
    try {
      check_section_name(section.name);
      for (const Entry& e : section.entries) check_content(e.content);
    } catch (const Error& e) {
      throw InvalidPlaybook(e.what());
    }
    if (!names.insert(section.name).second) {
      throw InvalidPlaybook("duplicate section name '" + section.name + "'");
    }
    for (const Entry& e : section.entries) {
      if (!ids.insert(e.id.value).second) {
        throw InvalidPlaybook("duplicate entry id " +
                              std::to_string(e.id.value));
      }
      if (e.id.value >= next_entry_id) {
        throw InvalidPlaybook("entry id " + std::to_string(e.id.value) +
                              " is not below next_entry_id");
      }
    }
    sections_.push_back(std::move(section));
  }
}

std::size_t Playbook::entry_count() const {
  std::size_t n = 0;
  for (const Section& s : sections_) n += s.entries.size();
  return n;
}

std::vector<EntryId> Playbook::entry_ids() const {
  std::vector<EntryId> ids;
  for (const Section& s : sections_) {
    for (const Entry& e : s.entries) ids.push_back(e.id);
  }
  return ids;
}

const Entry* Playbook::find(EntryId id) const {
  for (const Section& s : sections_) {
    for (const Entry& e : s.entries) {
      if (e.id == id) return &e;
    }
  }
  return nullptr;
}

Playbook Playbook::with_counters(std::span<const EntryId> helpful,
                                 std::span<const EntryId> harmful) const {
  Playbook out = *this;
  for (Section& s : out.sections_) {
    for (Entry& e : s.entries) {
      e.helpful += static_cast<std::uint64_t>(
          std::count(helpful.begin(), helpful.end(), e.id));
      e.harmful += static_cast<std::uint64_t>(
          std::count(harmful.begin(), harmful.end(), e.id));
    }
  }
  return out;
}

Playbook apply_edits(const Playbook& playbook, std::span<const EditOp> edits) {
  if (edits.empty()) return playbook;
  Playbook out = playbook;
  auto& sections = out.sections_;
  for (const EditOp& edit : edits) {
    if (const auto* up = std::get_if<UpdateEntry>(&edit)) {
      check_content(up->content);
      auto slot = locate(sections, up->id);
      if (!slot) throw UnknownEntryId(up->id.value);
      sections[slot->section].entries[slot->entry].content = up->content;
    } else if (const auto* add = std::get_if<AddEntry>(&edit)) {
      check_section_name(add->section);
      check_content(add->content);
      auto it = std::find_if(sections.begin(), sections.end(),
                             [&](const Section& s) { return s.name == add->section; });
      if (it == sections.end()) {
        sections.push_back(Section{add->section, {}});
        it = std::prev(sections.end());
      }
      it->entries.push_back(Entry{EntryId{out.next_entry_id_}, add->content});
      ++out.next_entry_id_;
    } else {
      const auto& del = std::get<DeleteEntry>(edit);
      auto slot = locate(sections, del.id);
      if (!slot) throw UnknownEntryId(del.id.value);
      auto& entries = sections[slot->section].entries;
      entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(slot->entry));
      if (entries.empty()) {
        sections.erase(sections.begin() +
                       static_cast<std::ptrdiff_t>(slot->section));
      }
    }
  }
  ++out.version_;
  return out;
}

bool content_equal(const Playbook& a, const Playbook& b) {
  const auto& sa = a.sections();
  const auto& sb = b.sections();
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].name != sb[i].name) return false;
    if (sa[i].entries.size() != sb[i].entries.size()) return false;
    for (std::size_t j = 0; j < sa[i].entries.size(); ++j) {
      if (sa[i].entries[j].content != sb[i].entries[j].content) return false;
    }
  }
  return true;
}

std::vector<EditOp> diff(const Playbook& old, const Playbook& updated) {
  const auto& old_sections = old.sections();
  const auto& new_sections = updated.sections();

  std::map<std::string, std::size_t> old_index;
  for (std::size_t i = 0; i < old_sections.size(); ++i) {
    old_index[old_sections[i].name] = i;
  }

  // Sections can only be appended, so keep the longest prefix of the new
  // order that is already in old order; everything else is rebuilt.
  std::vector<std::pair<std::size_t, std::size_t>> kept;  // (old, new)
  {
    std::optional<std::size_t> last;
    for (std::size_t n = 0; n < new_sections.size(); ++n) {
      auto it = old_index.find(new_sections[n].name);
      if (it == old_index.end() || (last && it->second <= *last)) break;
      kept.emplace_back(it->second, n);
      last = it->second;
    }
  }
  std::vector<bool> old_kept(old_sections.size(), false);
  for (auto [o, n] : kept) old_kept[o] = true;

  std::vector<EditOp> removals;
  std::vector<EditOp> additions;

  for (auto [o, n] : kept) {
    const Section& os = old_sections[o];
    const Section& ns = new_sections[n];
    if (id_preserving(os, ns)) {
      std::unordered_map<std::uint64_t, const Entry*> new_by_id;
      for (const Entry& e : ns.entries) new_by_id[e.id.value] = &e;
      for (const Entry& e : os.entries) {
        auto it = new_by_id.find(e.id.value);
        if (it == new_by_id.end()) {
          removals.push_back(DeleteEntry{e.id});
        } else if (it->second->content != e.content) {
          removals.push_back(UpdateEntry{e.id, it->second->content});
        }
      }
      std::unordered_set<std::uint64_t> old_ids;
      for (const Entry& e : os.entries) old_ids.insert(e.id.value);
      for (const Entry& e : ns.entries) {
        if (!old_ids.count(e.id.value)) {
          additions.push_back(AddEntry{ns.name, e.content});
        }
      }
    } else {
      const std::size_t common = std::min(os.entries.size(), ns.entries.size());
      for (std::size_t i = 0; i < common; ++i) {
        if (os.entries[i].content != ns.entries[i].content) {
          removals.push_back(UpdateEntry{os.entries[i].id, ns.entries[i].content});
        }
      }
      for (std::size_t i = common; i < os.entries.size(); ++i) {
        removals.push_back(DeleteEntry{os.entries[i].id});
      }
      for (std::size_t i = common; i < ns.entries.size(); ++i) {
        additions.push_back(AddEntry{ns.name, ns.entries[i].content});
      }
    }
  }

  for (std::size_t o = 0; o < old_sections.size(); ++o) {
    if (old_kept[o]) continue;
    for (const Entry& e : old_sections[o].entries) {
      removals.push_back(DeleteEntry{e.id});
    }
  }
  for (std::size_t n = kept.size(); n < new_sections.size(); ++n) {
    for (const Entry& e : new_sections[n].entries) {
      additions.push_back(AddEntry{new_sections[n].name, e.content});
    }
  }

  removals.insert(removals.end(), std::make_move_iterator(additions.begin()),
                  std::make_move_iterator(additions.end()));
  return removals;
}

std::string render(const Playbook& playbook, std::string_view preamble) {
  std::string out(kPlaybookHeader);
  out += '\n';
  if (!preamble.empty()) {
    out += '\n';
    out += preamble;
    out += '\n';
  }
  for (const Section& s : playbook.sections()) {
    out += "\n## ";
    out += s.name;
    out += '\n';
    for (const Entry& e : s.entries) {
      out += '[';
      out += std::to_string(e.id.value);
      out += "] ";
      out += e.content;
      out += '\n';
    }
  }
  return out;
}

std::string render_annotated(const Playbook& playbook) {
  std::string out(kPlaybookHeader);
  out += "\n\n";
  out += kInstructionsOpen;
  out += '\n';
  out += kInstructions;
  out += kInstructionsClose;
  out += '\n';
  for (const Section& s : playbook.sections()) {
    out += "\n## ";
    out += s.name;
    out += '\n';
    for (const Entry& e : s.entries) {
      out += "<entry id=\"";
      out += std::to_string(e.id.value);
      out += "\">";
      out += xml_escape(e.content);
      out += "</entry>\n";
    }
  }
  return out;
}

std::string strip_annotations(std::string_view annotated) {
  std::string text(annotated);
  // The instruction block is preceded by a blank line.
  const std::string block_open = "\n" + std::string(kInstructionsOpen);
  if (auto start = text.find(block_open); start != std::string::npos) {
    auto end = text.find(kInstructionsClose, start);
    if (end != std::string::npos) {
      end += kInstructionsClose.size();
      if (end < text.size() && text[end] == '\n') ++end;
      text.erase(start, end - start);
    }
  }

  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    const bool has_newline = eol != std::string::npos;
    if (!has_newline) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);

    constexpr std::string_view open = "<entry id=\"";
    constexpr std::string_view close = "</entry>";
    bool converted = false;
    if (line.starts_with(open) && line.ends_with(close)) {
      const auto quote = line.find("\">", open.size());
      if (quote != std::string_view::npos) {
        const auto id = line.substr(open.size(), quote - open.size());
        const auto body = line.substr(quote + 2, line.size() - quote - 2 - close.size());
        if (!id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
              return c >= '0' && c <= '9';
            })) {
          out += '[';
          out += id;
          out += "] ";
          out += xml_unescape(body);
          converted = true;
        }
      }
    }
    if (!converted) out += line;
    if (has_newline) out += '\n';
    pos = eol + (has_newline ? 1 : 0);
  }
  return out;
}

std::vector<EntryId> entry_refs(std::string_view text) {
  std::vector<EntryId> refs;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '[') continue;
    std::size_t j = i + 1;
    std::uint64_t value = 0;
    while (j < text.size() && text[j] >= '0' && text[j] <= '9' && j - i <= 18) {
      value = value * 10 + static_cast<std::uint64_t>(text[j] - '0');
      ++j;
    }
    if (j > i + 1 && j < text.size() && text[j] == ']') {
      EntryId id{value};
      if (std::find(refs.begin(), refs.end(), id) == refs.end()) {
        refs.push_back(id);
      }
      i = j;
    }
  }
  return refs;
}

std::string describe(const EditOp& edit) {
  return std::visit(
      [](const auto& op) -> std::string {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, UpdateEntry>) {
          return "UPDATE " + std::to_string(op.id.value) + " | " + op.content;
        } else if constexpr (std::is_same_v<T, AddEntry>) {
          return "ADD " + op.section + " | " + op.content;
        } else {
          return "DELETE " + std::to_string(op.id.value);
        }
      },
      edit);
}

void to_json(nlohmann::json& j, const EntryId& id) { j = id.value; }

void from_json(const nlohmann::json& j, EntryId& id) {
  id.value = j.get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const EditOp& edit) {
  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, UpdateEntry>) {
          j = {{"op", "update"}, {"id", op.id.value}, {"content", op.content}};
        } else if constexpr (std::is_same_v<T, AddEntry>) {
          j = {{"op", "add"}, {"section", op.section}, {"content", op.content}};
        } else {
          j = {{"op", "delete"}, {"id", op.id.value}};
        }
      },
      edit);
}

void from_json(const nlohmann::json& j, EditOp& edit) {
  const std::string op = j.at("op").get<std::string>();
  if (op == "update") {
    edit = UpdateEntry{EntryId{j.at("id").get<std::uint64_t>()},
                       j.at("content").get<std::string>()};
  } else if (op == "add") {
    edit = AddEntry{j.at("section").get<std::string>(),
                    j.at("content").get<std::string>()};
  } else if (op == "delete") {
    edit = DeleteEntry{EntryId{j.at("id").get<std::uint64_t>()}};
  } else {
    throw nlohmann::json::other_error::create(501, "unknown edit op '" + op + "'", &j);
  }
}

void to_json(nlohmann::json& j, const Playbook& playbook) {
  nlohmann::json sections = nlohmann::json::array();
  for (const Section& s : playbook.sections()) {
    nlohmann::json entries = nlohmann::json::array();
    for (const Entry& e : s.entries) {
      entries.push_back({{"id", e.id.value},
                         {"content", e.content},
                         {"helpful", e.helpful},
                         {"harmful", e.harmful}});
    }
    sections.push_back({{"name", s.name}, {"entries", std::move(entries)}});
  }
  j = {{"version", playbook.version()},
       {"next_entry_id", playbook.next_entry_id()},
       {"sections", std::move(sections)}};
}

void from_json(const nlohmann::json& j, Playbook& playbook) {
  std::vector<Section> sections;
  for (const auto& js : j.at("sections")) {
    Section s;
    s.name = js.at("name").get<std::string>();
    for (const auto& je : js.at("entries")) {
      Entry e;
      e.id = EntryId{je.at("id").get<std::uint64_t>()};
      e.content = je.at("content").get<std::string>();
      e.helpful = je.value("helpful", std::uint64_t{0});
      e.harmful = je.value("harmful", std::uint64_t{0});
      s.entries.push_back(std::move(e));
    }
    sections.push_back(std::move(s));
  }
  playbook = Playbook(std::move(sections), j.at("version").get<std::uint64_t>(),
                      j.at("next_entry_id").get<std::uint64_t>());
}

Playbook load_playbook(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  try {
    return j.get<Playbook>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad playbook file '" + path.string() + "': " + e.what());
  } catch (const InvalidPlaybook& e) {
    throw ConfigError("bad playbook file '" + path.string() + "': " + e.what());
  }
}

void save_playbook(const Playbook& playbook, const std::filesystem::path& path) {
  write_json_file(path, nlohmann::json(playbook));
}

}  // namespace ctxopt
