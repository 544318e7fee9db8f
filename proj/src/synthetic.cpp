#include "structfusion/synthetic.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace structfusion {

TemplateSet TemplateSet::defaults() {
  TemplateSet t;
  t.user_openers = {"i am looking for a {d}", "i need a {d}", "can you find me a {d}"};
  t.user_slot = {
      {"area", {"in the {v}", "in the {v} of town"}},
      {"food", {"serving {v} food", "that serves {v} food"}},
      {"pricerange", {"in the {v} price range", "that is {v}"}},
      {"stars", {"with {v} stars", "rated {v} stars"}},
      {"type", {"that is a {v}", "of type {v}"}},
      {"entrance", {"with {v} entrance", "where entrance is {v}"}},
  };
  t.user_slot_fallback = {"with {v} {s}"};
  t.user_answer = {"{phrase} please .", "i would like one {phrase} ."};
  t.user_attribute_request = {"what is the {attrs} of the {d} ?", "can i get the {attrs} of the {d} ?"};
  t.user_book = {"please book the {d} for me .", "can you make a booking at the {d} ?"};
  t.attribute_words = {{"phone", "phone number"}, {"address", "address"}, {"postcode", "postcode"}};
  t.system_request = {"there are many options . which {p} would you like ?", "do you have a {p} preference ?"};
  t.system_offer_openers = {"{p} is a {d}", "i recommend {p} , a {d}"};
  t.system_slot = {
      {"area", "in the {p}"},          {"food", "serving {p} food"},
      {"pricerange", "in the {p} price range"}, {"stars", "with {p} stars"},
      {"type", "that is a {p}"},       {"entrance", "with {p} entrance"},
  };
  t.system_answer_openers = {"", "sure ."};
  t.system_book = {"i have booked {name} for you . the reference number is {ref} .",
                   "booking was successful at {name} . your reference is {ref} ."};
  return t;
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec spec;
  const std::vector<std::string> areas = {"centre", "north", "south", "east", "west"};
  const std::vector<std::string> attrs = {"address", "phone", "postcode"};
  spec.domains = {
      {"restaurant",
       {{"area", areas},
        {"food", {"british", "chinese", "indian", "italian"}},
        {"pricerange", {"cheap", "expensive", "moderate", "luxury"}}},
       attrs},
      {"hotel",
       {{"area", areas},
        {"pricerange", {"cheap", "expensive", "moderate", "luxury"}},
        {"stars", {"two", "three", "four", "five"}}},
       attrs},
      {"attraction",
       {{"area", areas},
        {"entrance", {"free", "cheap", "moderate", "expensive"}},
        {"type", {"college", "gallery", "museum", "park", "theatre"}}},
       attrs},
  };
  return spec;
}

std::string act_placeholder(const ActTriple& act) {
  if (act.act == "request") return "[req_" + act.domain + "_" + act.slot + "]";
  return "[" + act.domain + "_" + act.slot + "]";
}

std::optional<ActTriple> placeholder_act(std::string_view token) {
  if (token.size() < 3 || token.front() != '[' || token.back() != ']') return std::nullopt;
  std::string body(token.substr(1, token.size() - 2));
  std::string act = "inform";
  if (body.rfind("req_", 0) == 0) {
    act = "request";
    body = body.substr(4);
  }
  const auto us = body.find('_');
  if (us == std::string::npos || us == 0 || us + 1 == body.size()) return std::nullopt;
  ActTriple t{body.substr(0, us), act, body.substr(us + 1)};
  if (act == "inform" && t.slot == "name") t.act = "offer";
  if (act == "inform" && t.slot == "reference") t.act = "book";
  return t;
}

namespace {

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  if (v.empty()) throw std::invalid_argument("synthetic: empty template list");
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

bool coin(double p, Rng& rng) { return std::bernoulli_distribution(p)(rng); }

std::string replace_all(std::string s, const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = s.find(key, pos)) != std::string::npos) {
    s.replace(pos, key.size(), value);
    pos += value.size();
  }
  return s;
}

const std::vector<std::string> kNameFirst = {"golden", "royal", "blue",   "old",   "little", "grand",
                                             "green",  "silver", "red",   "happy", "lucky",  "river"};
const std::vector<std::string> kNameSecond = {"lion", "garden", "house", "star", "bridge", "oak",
                                              "crown", "mill",  "tower", "swan", "harbour"};
const std::vector<std::string> kStreets = {"mill", "station", "regent", "king", "hills", "castle"};

EntityDatabase make_database(const SyntheticSpec& spec, Rng& rng) {
  EntityDatabase db;
  for (const auto& d : spec.domains) {
    auto& rows = db.tables[d.name];
    std::set<std::string> used;
    for (int i = 0; i < spec.entities_per_domain; ++i) {
      Entity e;
      do {
        e.name = "the " + pick(kNameFirst, rng) + " " + pick(kNameSecond, rng) + " " + d.name;
      } while (!used.insert(e.name).second && used.size() < kNameFirst.size() * kNameSecond.size());
      for (const auto& s : d.informable) e.attributes[s.name] = pick(s.values, rng);
      std::uniform_int_distribution<int> digit(0, 9);
      for (const auto& r : d.requestable) {
        std::string v;
        if (r == "phone") {
          v = "01223";
          v += ' ';
          for (int k = 0; k < 6; ++k) v += char('0' + digit(rng));
        } else if (r == "postcode") {
          v = "cb" + std::to_string(1 + digit(rng) % 5) + " " + std::to_string(digit(rng)) +
              char('a' + digit(rng)) + char('a' + digit(rng));
        } else if (r == "address") {
          v = std::to_string(1 + digit(rng) * 10 + digit(rng)) + " " + pick(kStreets, rng) + " road";
        } else {
          v = r + "-" + std::to_string(digit(rng));
        }
        e.attributes[r] = v;
      }
      rows.push_back(std::move(e));
    }
  }
  return db;
}

DomainGoal sample_goal(const DomainSchema& d, const EntityDatabase& db, const SyntheticSpec& spec, Rng& rng) {
  DomainGoal g;
  g.domain = d.name;
  bool satisfiable = false;
  for (int attempt = 0; attempt < spec.max_goal_retries && !satisfiable; ++attempt) {
    g.constraints.clear();
    for (const auto& s : d.informable) g.constraints[s.name] = pick(s.values, rng);
    satisfiable = db.count_matches(d.name, g.constraints) > 0;
  }
  if (!satisfiable)
    throw CorpusError("synthetic: no entity of domain '" + d.name + "' matches a sampled goal after " +
                      std::to_string(spec.max_goal_retries) + " retries");
  std::vector<std::string> req = d.requestable;
  std::shuffle(req.begin(), req.end(), rng);
  const int max_req = std::max(1, std::min<int>(spec.max_requests, static_cast<int>(req.size())));
  const int n = std::uniform_int_distribution<int>(1, max_req)(rng);
  req.resize(static_cast<std::size_t>(n));
  std::sort(req.begin(), req.end());
  g.requests = req;
  g.book = coin(spec.book_prob, rng);
  return g;
}

struct DialogBuilder {
  const SyntheticSpec& spec;
  const SlotSchema& schema;
  const EntityDatabase& db;
  Rng& rng;
  std::set<BeliefTriple> belief;
  struct RawTurn {
    std::vector<std::string> user, system;
    RowVector belief, acts, db;
  };
  std::vector<RawTurn> turns;

  std::string user_phrase(const std::string& slot, const std::string& value) {
    const auto& t = spec.templates;
    auto it = t.user_slot.find(slot);
    std::string tpl = it != t.user_slot.end() ? pick(it->second, rng) : pick(t.user_slot_fallback, rng);
    return replace_all(replace_all(tpl, "{v}", value), "{s}", slot);
  }

  std::string system_phrase(const std::string& domain, const std::string& slot) {
    const auto& t = spec.templates;
    const std::string p = act_placeholder({domain, "inform", slot});
    auto it = t.system_slot.find(slot);
    return it != t.system_slot.end() ? replace_all(it->second, "{p}", p) : "with " + p + " " + slot;
  }

  void push(const std::string& user, const std::string& system, const std::set<ActTriple>& acts) {
    RawTurn r;
    r.user = tokenize(user);
    r.system = tokenize(system);
    r.belief = schema.encode_belief(belief);
    r.acts = schema.encode_acts(acts);
    r.db = db_query(r.belief, db, schema);
    turns.push_back(std::move(r));
  }

  std::map<std::string, std::string> stated(const std::string& domain) const {
    std::map<std::string, std::string> out;
    for (const auto& t : belief)
      if (t.domain == domain) out[t.slot] = t.value;
    return out;
  }

  void play(const DomainGoal& g) {
    const auto& t = spec.templates;
    const DomainSchema& ds = *schema.domain(g.domain);
    std::vector<std::string> unstated;
    for (const auto& [slot, value] : g.constraints) unstated.push_back(slot);  // sorted by slot
    auto state = [&](const std::string& slot) {
      belief.insert({g.domain, slot, g.constraints.at(slot)});
      unstated.erase(std::find(unstated.begin(), unstated.end(), slot));
      return user_phrase(slot, g.constraints.at(slot));
    };

    // Opening request with one or two constraints.
    std::vector<std::string> order = unstated;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t k =
        std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(2, order.size()))(rng);
    std::vector<std::string> phrases;
    for (std::size_t i = 0; i < k; ++i) phrases.push_back(state(order[i]));
    std::string user = replace_all(pick(t.user_openers, rng), "{d}", g.domain);
    for (std::size_t i = 0; i < phrases.size(); ++i) user += (i ? " and " : " ") + phrases[i];
    user += " .";

    while (true) {
      const auto constraints = stated(g.domain);
      const std::size_t count = db.count_matches(g.domain, constraints);
      if (count >= 2 && !unstated.empty()) {
        const std::string slot = unstated.front();
        const ActTriple act{g.domain, "request", slot};
        std::string sys = replace_all(replace_all(pick(t.system_request, rng), "{p}", act_placeholder(act)),
                                      "{d}", g.domain);
        push(user, sys, {act});
        std::string phrase = state(slot);
        if (!unstated.empty() && coin(0.3, rng)) phrase += " and " + state(pick(unstated, rng));
        user = replace_all(pick(t.user_answer, rng), "{phrase}", phrase);
        continue;
      }
      std::set<ActTriple> acts{{g.domain, "offer", "name"}};
      std::string sys = replace_all(replace_all(pick(t.system_offer_openers, rng), "{p}",
                                                act_placeholder({g.domain, "offer", "name"})),
                                    "{d}", g.domain);
      for (const auto& [slot, value] : constraints) {
        acts.insert({g.domain, "inform", slot});
        sys += " " + system_phrase(g.domain, slot);
      }
      sys += " .";
      push(user, sys, acts);
      break;
    }

    // Requested attributes.
    std::string words;
    std::string answer = pick(t.system_answer_openers, rng);
    std::set<ActTriple> acts;
    for (std::size_t i = 0; i < g.requests.size(); ++i) {
      const auto& r = g.requests[i];
      auto w = t.attribute_words.find(r);
      const std::string word = w != t.attribute_words.end() ? w->second : r;
      words += (i ? " and " : "") + word;
      const ActTriple act{g.domain, "inform", r};
      acts.insert(act);
      answer += std::string(answer.empty() ? "" : " ") + (i ? "and " : "") + "the " + word + " is " +
                act_placeholder(act);
    }
    answer += " .";
    user = replace_all(replace_all(pick(t.user_attribute_request, rng), "{attrs}", words), "{d}", g.domain);
    push(user, answer, acts);

    if (g.book) {
      user = replace_all(pick(t.user_book, rng), "{d}", g.domain);
      const ActTriple name{g.domain, "offer", "name"};
      const ActTriple ref{g.domain, "book", "reference"};
      std::string sys = replace_all(replace_all(pick(t.system_book, rng), "{name}", act_placeholder(name)),
                                    "{ref}", act_placeholder(ref));
      push(user, sys, {name, ref});
    }
    (void)ds;
  }
};

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.domains.empty()) throw CorpusError("synthetic spec needs at least one domain");
  if (spec.min_turns < 1 || spec.min_turns > spec.max_turns)
    throw CorpusError("synthetic spec: bad turn range " + std::to_string(spec.min_turns) + "-" +
                      std::to_string(spec.max_turns));
  for (const auto& d : spec.domains) {
    if (d.informable.empty()) throw CorpusError("domain '" + d.name + "' has no informable slots");
    for (const auto& s : d.informable)
      if (s.values.size() < 2) throw CorpusError("slot '" + d.name + "." + s.name + "' needs at least two values");
    if (d.requestable.empty()) throw CorpusError("domain '" + d.name + "' has no requestable slots");
  }
  Rng rng(seed);
  SyntheticData out;
  out.corpus.schema = SlotSchema(spec.domains, SlotSchema::standard_acts(spec.domains));
  const SlotSchema& schema = out.corpus.schema;
  out.database = make_database(spec, rng);

  std::vector<std::string> pool;
  for (const auto& d : schema.domains())
    if (spec.allowed_domains.empty() ||
        std::find(spec.allowed_domains.begin(), spec.allowed_domains.end(), d.name) != spec.allowed_domains.end())
      pool.push_back(d.name);
  if (pool.empty()) throw CorpusError("synthetic spec: allowed_domains excludes every domain");

  std::vector<std::vector<DialogBuilder::RawTurn>> raw;
  for (int i = 0; i < spec.dialogs; ++i) {
    Dialog dlg;
    dlg.id = "syn-" + std::to_string(i);
    dlg.split = i % 10 == 0 ? "test" : (i % 10 == 1 ? "val" : "train");
    std::vector<DialogBuilder::RawTurn> turns;
    for (int attempt = 0;; ++attempt) {
      if (attempt == spec.max_goal_retries)
        throw CorpusError("synthetic: no dialog of " + std::to_string(spec.min_turns) + "-" +
                          std::to_string(spec.max_turns) + " turns after " + std::to_string(attempt) + " retries");
      std::vector<std::string> doms = pool;
      std::shuffle(doms.begin(), doms.end(), rng);
      const std::size_t n = (doms.size() > 1 && coin(spec.multi_domain_prob, rng)) ? 2 : 1;
      doms.resize(n);
      DialogBuilder builder{spec, schema, out.database, rng, {}, {}};
      dlg.goal.domains.clear();
      dlg.domain_labels.clear();
      for (const auto& name : doms) {
        dlg.goal.domains.push_back(sample_goal(*schema.domain(name), out.database, spec, rng));
        dlg.domain_labels.insert(name);
      }
      for (const auto& g : dlg.goal.domains) builder.play(g);
      const auto count = static_cast<int>(builder.turns.size());
      if (count >= spec.min_turns && count <= spec.max_turns) {
        turns = std::move(builder.turns);
        break;
      }
    }
    raw.push_back(std::move(turns));
    out.corpus.dialogs.push_back(std::move(dlg));
  }

  std::vector<std::vector<std::string>> train;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (out.corpus.dialogs[i].split != "train") continue;
    for (const auto& t : raw[i]) {
      train.push_back(t.user);
      train.push_back(t.system);
    }
  }
  out.corpus.vocab = build_vocabulary(train);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (auto& r : raw[i]) {
      Turn t;
      t.user = out.corpus.vocab.encode(r.user);
      t.system = out.corpus.vocab.encode(r.system);
      t.belief = std::move(r.belief);
      t.acts = std::move(r.acts);
      t.db = std::move(r.db);
      out.corpus.dialogs[i].turns.push_back(std::move(t));
    }
  }
  return out;
}

AuditReport audit_annotations(const DialogCorpus& corpus) {
  AuditReport report;
  const auto& schema = corpus.schema;
  for (const auto& d : corpus.dialogs) {
    RowVector prev = RowVector::Zero(schema.belief_dim());
    for (std::size_t k = 0; k < d.turns.size(); ++k) {
      const Turn& t = d.turns[k];
      const std::string where = d.id + " turn " + std::to_string(k);
      ++report.turns_checked;
      std::set<ActTriple> from_text;
      for (int id : t.system) {
        auto act = placeholder_act(corpus.vocab.token(id));
        if (!act) continue;
        if (!schema.act_index(*act)) {
          report.violations.push_back(where + ": placeholder " + corpus.vocab.token(id) + " has no act in the schema");
          continue;
        }
        from_text.insert(*act);
      }
      const auto from_bits = schema.decode_acts(t.acts);
      for (const auto& a : from_text)
        if (!from_bits.count(a)) report.violations.push_back(where + ": placeholder for " + to_string(a) + " without act bit");
      for (const auto& a : from_bits)
        if (!from_text.count(a)) report.violations.push_back(where + ": act bit " + to_string(a) + " without placeholder");
      if ((t.belief.array() < prev.array()).any()) report.violations.push_back(where + ": belief bit turned off");
      prev = t.belief;
    }
  }
  return report;
}

Lexicon entity_lexicon(const EntityDatabase& database) {
  Lexicon lex;
  for (const auto& [domain, rows] : database.tables)
    for (const auto& e : rows) lex.add(e.name, act_placeholder({domain, "offer", "name"}));
  return lex;
}

}  // namespace structfusion
