#pragma once

// Deterministic synthetic task-oriented corpus with an entity database.
//
// Every dialog samples a goal (all informable slots constrained, one or two
// requested attributes, optional booking) for one or two domains and then
// plays a rule-based clerk against a templated user:
//
//   user states constraints -> clerk requests the first unstated slot while
//   two or more entities still match, otherwise offers an entity and echoes
//   the stated constraints -> user asks for the requested attributes ->
//   clerk answers -> optionally the user books and the clerk confirms.
//
// System utterances are delexicalised. Every act (domain, act, slot) renders
// as exactly one placeholder token, see act_placeholder().

#include "structfusion/corpus.hpp"
#include "structfusion/layers.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace structfusion {

/// Surface templates. "{v}" is the slot value, "{d}" the domain name,
/// "{p}" a placeholder token and "{attrs}" a joined attribute list.
struct TemplateSet {
  std::vector<std::string> user_openers;                          // "{d}"
  std::map<std::string, std::vector<std::string>> user_slot;      // per slot, "{v}"
  std::vector<std::string> user_slot_fallback;                    // "{v}", "{s}"
  std::vector<std::string> user_answer;                           // "{phrase}"
  std::vector<std::string> user_attribute_request;                // "{attrs}", "{d}"
  std::vector<std::string> user_book;                             // "{d}"
  std::map<std::string, std::string> attribute_words;             // phone -> "phone number"
  std::vector<std::string> system_request;                        // "{p}", "{d}"
  std::vector<std::string> system_offer_openers;                  // "{p}", "{d}"
  std::map<std::string, std::string> system_slot;                 // per slot, "{p}"
  std::vector<std::string> system_answer_openers;                 // prefix before attributes
  std::vector<std::string> system_book;                           // "{name}", "{ref}"

  static TemplateSet defaults();
};

struct SyntheticSpec {
  std::vector<DomainSchema> domains;
  int entities_per_domain = 20;
  int dialogs = 1000;
  double multi_domain_prob = 0.3;
  double book_prob = 0.3;
  int max_requests = 2;
  int max_goal_retries = 1000;
  /// Dialogs outside this range are re-sampled (multi-domain goals tend to
  /// run long).
  int min_turns = 2;
  int max_turns = 5;
  /// Restricts sampled goals to these domains when non-empty (used to build
  /// single-domain slices).
  std::vector<std::string> allowed_domains;
  TemplateSet templates = TemplateSet::defaults();
};

/// Three domains, three informable slots of 4-5 values each, three
/// requestable attributes, 20 entities per domain, 1000 dialogs of 2-5 turns.
SyntheticSpec default_synthetic_spec();

struct SyntheticData {
  DialogCorpus corpus;
  EntityDatabase database;
};

/// Pure function of (spec, seed). Dialog i goes to test when i % 10 == 0,
/// val when i % 10 == 1 and train otherwise.
SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// "[restaurant_area]" for inform, "[req_restaurant_area]" for request,
/// "[restaurant_name]" for offer/name and "[restaurant_reference]" for
/// book/reference.
std::string act_placeholder(const ActTriple& act);
std::optional<ActTriple> placeholder_act(std::string_view token);

struct AuditReport {
  std::size_t turns_checked = 0;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks act bits <-> system placeholders in both directions and belief
/// monotonicity within each dialog.
AuditReport audit_annotations(const DialogCorpus& corpus);

/// Maps entity names to "[<domain>_name]" for delexicalising free user input.
Lexicon entity_lexicon(const EntityDatabase& database);

}  // namespace structfusion
