#pragma once

// Data model for delexicalised task-oriented dialogs.
//
// Belief and act vectors use a canonical layout: the index of a
// (domain, slot, value) or (domain, act, slot) triple is its rank among all
// schema triples sorted lexicographically. The database vector has one block
// of |buckets| entries per domain (domains in lexicographic order); each block
// is one-hot over entity-count buckets, {0, 1, 2-3, >=4} by default.

#include "structfusion/autodiff.hpp"

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace structfusion {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

class UnknownAnnotation : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

struct InformableSlot {
  std::string name;
  std::vector<std::string> values;
};

struct DomainSchema {
  std::string name;
  std::vector<InformableSlot> informable;
  std::vector<std::string> requestable;

  const InformableSlot* slot(std::string_view name) const;
};

struct BeliefTriple {
  std::string domain;
  std::string slot;
  std::string value;
  auto operator<=>(const BeliefTriple&) const = default;
};

struct ActTriple {
  std::string domain;
  std::string act;
  std::string slot;
  auto operator<=>(const ActTriple&) const = default;
};

std::string to_string(const BeliefTriple& t);
std::string to_string(const ActTriple& t);

class SlotSchema {
 public:
  SlotSchema() = default;
  SlotSchema(std::vector<DomainSchema> domains, std::vector<ActTriple> acts,
             std::vector<int> db_bucket_lower_bounds = {0, 1, 2, 4});

  /// Acts used by the synthetic generator: inform on every informable and
  /// requestable slot, request on informable slots, offer on "name" and book
  /// on "reference".
  static std::vector<ActTriple> standard_acts(std::span<const DomainSchema> domains);

  Index belief_dim() const { return static_cast<Index>(belief_layout_.size()); }
  Index act_dim() const { return static_cast<Index>(act_layout_.size()); }
  Index db_dim() const { return static_cast<Index>(domains_.size() * buckets_.size()); }

  const std::vector<DomainSchema>& domains() const { return domains_; }
  const DomainSchema* domain(std::string_view name) const;
  Index domain_index(std::string_view name) const;
  const std::vector<BeliefTriple>& belief_layout() const { return belief_layout_; }
  const std::vector<ActTriple>& act_layout() const { return act_layout_; }
  const std::vector<int>& db_buckets() const { return buckets_; }

  std::optional<Index> belief_index(const BeliefTriple& t) const;
  std::optional<Index> act_index(const ActTriple& t) const;

  RowVector encode_belief(const std::set<BeliefTriple>& annotation) const;
  RowVector encode_acts(const std::set<ActTriple>& annotation) const;
  std::set<BeliefTriple> decode_belief(const RowVector& v) const;
  std::set<ActTriple> decode_acts(const RowVector& v) const;

  /// Index of the bucket holding `count` entities.
  std::size_t bucket_of(std::size_t count) const;

 private:
  std::vector<DomainSchema> domains_;
  std::vector<int> buckets_;
  std::vector<BeliefTriple> belief_layout_;
  std::vector<ActTriple> act_layout_;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();
  /// `tokens` must start with the four special tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  int add(const std::string& token);
  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;
  std::string join(std::span<const int> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

struct DomainGoal {
  std::string domain;
  std::map<std::string, std::string> constraints;  // informable slot -> value
  std::vector<std::string> requests;               // requestable attributes
  bool book = false;
};

struct Goal {
  std::vector<DomainGoal> domains;
  const DomainGoal* find(std::string_view domain) const;
};

struct Turn {
  std::vector<int> user;
  std::vector<int> system;
  RowVector belief;  // length B, 0/1
  RowVector acts;    // length A, 0/1
  RowVector db;      // length D
};

struct Dialog {
  std::string id;
  std::string split;  // "train", "val" or "test"
  Goal goal;
  std::vector<Turn> turns;
  std::set<std::string> domain_labels;
};

struct DialogCorpus {
  SlotSchema schema;
  Vocabulary vocab;
  std::vector<Dialog> dialogs;

  std::vector<const Dialog*> split(std::string_view name) const;
};

struct Entity {
  std::string name;
  std::map<std::string, std::string> attributes;  // informable and requestable slots
};

class EntityDatabase {
 public:
  std::map<std::string, std::vector<Entity>> tables;

  /// Entities of `domain` agreeing with every (slot, value) constraint.
  std::size_t count_matches(std::string_view domain,
                            const std::map<std::string, std::string>& constraints) const;
};

/// Constraints per domain asserted by a belief vector.
std::map<std::string, std::map<std::string, std::string>> belief_constraints(const RowVector& belief,
                                                                             const SlotSchema& schema);

/// One-hot bucket of the number of matching entities, per domain.
RowVector db_query(const RowVector& belief, const EntityDatabase& database, const SlotSchema& schema);

/// Surface-value -> placeholder map with greedy longest-match replacement.
class Lexicon {
 public:
  void add(std::string_view surface, std::string placeholder);
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::vector<std::string>, std::string>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::vector<std::string>, std::string>> entries_;
};

std::vector<std::string> delexicalize(std::span<const std::string> utterance, const Lexicon& lexicon);

std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

// ---- files -----------------------------------------------------------------

inline constexpr int kFormatVersion = 1;

/// Builds a vocabulary from the train split (min frequency 1).
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& train_utterances);

void save_corpus(const DialogCorpus& corpus, const std::string& path);
DialogCorpus load_corpus(const std::string& path);
std::string corpus_to_json(const DialogCorpus& corpus);
DialogCorpus corpus_from_json(std::string_view text);

void save_database(const EntityDatabase& db, const std::string& path);
EntityDatabase load_database(const std::string& path);
std::string database_to_json(const EntityDatabase& db);
EntityDatabase database_from_json(std::string_view text);

}  // namespace structfusion
