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

// The playbook is the artifact being optimized: named sections of entries,
// each addressable by a global id. It only changes through apply_edits, which
// returns a new value; a Playbook is never modified in place once built.

#ifndef CTXOPT_PLAYBOOK_HPP_
#define CTXOPT_PLAYBOOK_HPP_

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace ctxopt {

struct EntryId {
  std::uint64_t value = 0;
  friend auto operator<=>(const EntryId&, const EntryId&) = default;
};

struct Entry {
  EntryId id;
  std::string content;
  std::uint64_t helpful = 0;
  std::uint64_t harmful = 0;
  friend bool operator==(const Entry&, const Entry&) = default;
};

struct Section {
  std::string name;
  std::vector<Entry> entries;
  friend bool operator==(const Section&, const Section&) = default;
};

struct UpdateEntry {
  EntryId id;
  std::string content;
  friend bool operator==(const UpdateEntry&, const UpdateEntry&) = default;
};

struct AddEntry {
  std::string section;
  std::string content;
  friend bool operator==(const AddEntry&, const AddEntry&) = default;
};

struct DeleteEntry {
  EntryId id;
  friend bool operator==(const DeleteEntry&, const DeleteEntry&) = default;
};

using EditOp = std::variant<UpdateEntry, AddEntry, DeleteEntry>;

class Playbook {
 public:
  Playbook() = default;

  // Validates every invariant: unique non-empty section names, unique ids
  // below next_entry_id, single-line non-empty content. Sections without
  // entries are dropped. Throws InvalidPlaybook.
  Playbook(std::vector<Section> sections, std::uint64_t version,
           std::uint64_t next_entry_id);

  const std::vector<Section>& sections() const { return sections_; }
  std::uint64_t version() const { return version_; }
  std::uint64_t next_entry_id() const { return next_entry_id_; }

  bool empty() const { return sections_.empty(); }
  std::size_t entry_count() const;
  std::vector<EntryId> entry_ids() const;
  const Entry* find(EntryId id) const;
  bool contains(EntryId id) const { return find(id) != nullptr; }

  // Counter bumps are bookkeeping, not edits: the version does not change.
  // Ids that are not present are ignored.
  Playbook with_counters(std::span<const EntryId> helpful,
                         std::span<const EntryId> harmful) const;

  friend bool operator==(const Playbook&, const Playbook&) = default;

 private:
  friend Playbook apply_edits(const Playbook&, std::span<const EditOp>);

  std::vector<Section> sections_;
  std::uint64_t version_ = 0;
  std::uint64_t next_entry_id_ = 0;
};

// Applies the edits in order and returns the result. Add takes the next
// global id; Delete removes a section once its last entry is gone. The
// version is bumped once iff `edits` is non-empty.
// Throws UnknownEntryId, EmptyContent or MultilineContent; the input is
// never modified.
Playbook apply_edits(const Playbook& playbook, std::span<const EditOp> edits);

// Same section names in the same order, same entry contents in the same
// order. Ids, counters and version are ignored.
bool content_equal(const Playbook& a, const Playbook& b);

// Edits that turn `old` into something content_equal to `updated`. When
// `updated` was produced from `old` by apply_edits the result is the minimal
// id-preserving script.
std::vector<EditOp> diff(const Playbook& old, const Playbook& updated);

inline constexpr std::string_view kPlaybookHeader = "# Playbook";

// Plain rendering: the header, then per section a `## name` heading followed
// by one `[id] content` line per entry. `preamble`, if given, goes right
// after the header.
std::string render(const Playbook& playbook, std::string_view preamble = {});

// Rendering with each entry wrapped in <entry id="N">...</entry> and an
// instruction block asking the agent to cite the entries it used.
std::string render_annotated(const Playbook& playbook);

// Inverse of the annotation: strip_annotations(render_annotated(p)) ==
// render(p) byte for byte.
std::string strip_annotations(std::string_view annotated);

// Entry references of the form `[N]` in free text, in order of appearance,
// without duplicates.
std::vector<EntryId> entry_refs(std::string_view text);

// One-line form used by logs and the diff command:
//   ADD <section> | <content>, UPDATE <id> | <content>, DELETE <id>
std::string describe(const EditOp& edit);

void to_json(nlohmann::json& j, const EntryId& id);
void from_json(const nlohmann::json& j, EntryId& id);
void to_json(nlohmann::json& j, const EditOp& edit);
void from_json(const nlohmann::json& j, EditOp& edit);
void to_json(nlohmann::json& j, const Playbook& playbook);
void from_json(const nlohmann::json& j, Playbook& playbook);

Playbook load_playbook(const std::filesystem::path& path);
void save_playbook(const Playbook& playbook, const std::filesystem::path& path);

}  // namespace ctxopt

#endif  // CTXOPT_PLAYBOOK_HPP_
