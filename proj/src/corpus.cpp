#include "structfusion/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace structfusion {

using nlohmann::json;

const InformableSlot* DomainSchema::slot(std::string_view n) const {
  for (const auto& s : informable)
    if (s.name == n) return &s;
  return nullptr;
}

std::string to_string(const BeliefTriple& t) { return t.domain + "-" + t.slot + "-" + t.value; }
std::string to_string(const ActTriple& t) { return t.domain + "-" + t.act + "-" + t.slot; }

// ---- SlotSchema ------------------------------------------------------------

SlotSchema::SlotSchema(std::vector<DomainSchema> domains, std::vector<ActTriple> acts,
                       std::vector<int> db_bucket_lower_bounds)
    : domains_(std::move(domains)), buckets_(std::move(db_bucket_lower_bounds)) {
  std::sort(domains_.begin(), domains_.end(),
            [](const DomainSchema& a, const DomainSchema& b) { return a.name < b.name; });
  if (buckets_.empty() || buckets_.front() != 0 || !std::is_sorted(buckets_.begin(), buckets_.end()) ||
      std::adjacent_find(buckets_.begin(), buckets_.end()) != buckets_.end())
    throw CorpusError("db buckets must be strictly increasing lower bounds starting at 0");
  std::set<BeliefTriple> belief;
  for (const auto& d : domains_)
    for (const auto& s : d.informable)
      for (const auto& v : s.values)
        if (!belief.insert({d.name, s.name, v}).second)
          throw CorpusError("duplicate belief triple " + to_string(BeliefTriple{d.name, s.name, v}));
  belief_layout_.assign(belief.begin(), belief.end());
  std::set<ActTriple> act_set;
  for (auto& a : acts) {
    if (!domain(a.domain)) throw CorpusError("act references unknown domain '" + a.domain + "'");
    if (!act_set.insert(a).second) throw CorpusError("duplicate act triple " + to_string(a));
  }
  act_layout_.assign(act_set.begin(), act_set.end());
}

std::vector<ActTriple> SlotSchema::standard_acts(std::span<const DomainSchema> domains) {
  std::vector<ActTriple> acts;
  for (const auto& d : domains) {
    for (const auto& s : d.informable) {
      acts.push_back({d.name, "inform", s.name});
      acts.push_back({d.name, "request", s.name});
    }
    for (const auto& r : d.requestable) acts.push_back({d.name, "inform", r});
    acts.push_back({d.name, "offer", "name"});
    acts.push_back({d.name, "book", "reference"});
  }
  return acts;
}

const DomainSchema* SlotSchema::domain(std::string_view name) const {
  for (const auto& d : domains_)
    if (d.name == name) return &d;
  return nullptr;
}

Index SlotSchema::domain_index(std::string_view name) const {
  for (std::size_t i = 0; i < domains_.size(); ++i)
    if (domains_[i].name == name) return static_cast<Index>(i);
  return -1;
}

std::optional<Index> SlotSchema::belief_index(const BeliefTriple& t) const {
  auto it = std::lower_bound(belief_layout_.begin(), belief_layout_.end(), t);
  if (it == belief_layout_.end() || *it != t) return std::nullopt;
  return static_cast<Index>(it - belief_layout_.begin());
}

std::optional<Index> SlotSchema::act_index(const ActTriple& t) const {
  auto it = std::lower_bound(act_layout_.begin(), act_layout_.end(), t);
  if (it == act_layout_.end() || *it != t) return std::nullopt;
  return static_cast<Index>(it - act_layout_.begin());
}

RowVector SlotSchema::encode_belief(const std::set<BeliefTriple>& annotation) const {
  RowVector v = RowVector::Zero(belief_dim());
  for (const auto& t : annotation) {
    auto idx = belief_index(t);
    if (!idx) throw UnknownAnnotation("unknown belief triple " + to_string(t));
    v(*idx) = 1.0;
  }
  return v;
}

RowVector SlotSchema::encode_acts(const std::set<ActTriple>& annotation) const {
  RowVector v = RowVector::Zero(act_dim());
  for (const auto& t : annotation) {
    auto idx = act_index(t);
    if (!idx) throw UnknownAnnotation("unknown act triple " + to_string(t));
    v(*idx) = 1.0;
  }
  return v;
}

std::set<BeliefTriple> SlotSchema::decode_belief(const RowVector& v) const {
  if (v.size() != belief_dim()) throw DimensionError("decode_belief: vector length mismatch");
  std::set<BeliefTriple> out;
  for (Index i = 0; i < v.size(); ++i)
    if (v(i) > 0.5) out.insert(belief_layout_[static_cast<std::size_t>(i)]);
  return out;
}

std::set<ActTriple> SlotSchema::decode_acts(const RowVector& v) const {
  if (v.size() != act_dim()) throw DimensionError("decode_acts: vector length mismatch");
  std::set<ActTriple> out;
  for (Index i = 0; i < v.size(); ++i)
    if (v(i) > 0.5) out.insert(act_layout_[static_cast<std::size_t>(i)]);
  return out;
}

std::size_t SlotSchema::bucket_of(std::size_t count) const {
  std::size_t b = 0;
  for (std::size_t i = 0; i < buckets_.size(); ++i)
    if (count >= static_cast<std::size_t>(buckets_[i])) b = i;
  return b;
}

// ---- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{"<pad>", "<sos>", "<eos>", "<unk>"}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  static const char* specials[] = {"<pad>", "<sos>", "<eos>", "<unk>"};
  if (tokens.size() < 4) throw CorpusError("vocabulary must start with the four special tokens");
  for (int i = 0; i < 4; ++i)
    if (tokens[static_cast<std::size_t>(i)] != specials[i])
      throw CorpusError(std::string("vocabulary entry ") + std::to_string(i) + " must be " + specials[i]);
  for (auto& t : tokens) {
    if (ids_.count(t)) throw CorpusError("duplicate vocabulary token '" + t + "'");
    ids_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::join(std::span<const int> ids) const {
  auto toks = decode(ids);
  return join_tokens(toks);
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& train_utterances) {
  std::set<std::string> seen;
  for (const auto& u : train_utterances) seen.insert(u.begin(), u.end());
  Vocabulary v;
  for (const auto& t : seen) v.add(t);
  return v;
}

// ---- dialogs ----------------------------------------------------------------

const DomainGoal* Goal::find(std::string_view domain) const {
  for (const auto& g : domains)
    if (g.domain == domain) return &g;
  return nullptr;
}

std::vector<const Dialog*> DialogCorpus::split(std::string_view name) const {
  std::vector<const Dialog*> out;
  for (const auto& d : dialogs)
    if (d.split == name) out.push_back(&d);
  return out;
}

std::size_t EntityDatabase::count_matches(std::string_view domain,
                                          const std::map<std::string, std::string>& constraints) const {
  auto it = tables.find(std::string(domain));
  if (it == tables.end()) return 0;
  std::size_t n = 0;
  for (const auto& e : it->second) {
    bool ok = true;
    for (const auto& [slot, value] : constraints) {
      auto a = e.attributes.find(slot);
      if (a == e.attributes.end() || a->second != value) {
        ok = false;
        break;
      }
    }
    n += ok;
  }
  return n;
}

std::map<std::string, std::map<std::string, std::string>> belief_constraints(const RowVector& belief,
                                                                             const SlotSchema& schema) {
  if (belief.size() != schema.belief_dim()) throw DimensionError("belief length mismatch");
  std::map<std::string, std::map<std::string, std::string>> out;
  for (Index i = 0; i < belief.size(); ++i) {
    if (belief(i) <= 0.5) continue;
    const auto& t = schema.belief_layout()[static_cast<std::size_t>(i)];
    auto& slots = out[t.domain];
    // Two values for one slot cannot both hold; keep an impossible marker.
    auto [it, inserted] = slots.emplace(t.slot, t.value);
    if (!inserted && it->second != t.value) it->second = "\x01conflict";
  }
  return out;
}

RowVector db_query(const RowVector& belief, const EntityDatabase& database, const SlotSchema& schema) {
  const auto constraints = belief_constraints(belief, schema);
  const std::size_t nb = schema.db_buckets().size();
  RowVector out = RowVector::Zero(schema.db_dim());
  static const std::map<std::string, std::string> none;
  for (std::size_t d = 0; d < schema.domains().size(); ++d) {
    const auto& name = schema.domains()[d].name;
    auto it = constraints.find(name);
    const std::size_t count = database.count_matches(name, it == constraints.end() ? none : it->second);
    out(static_cast<Index>(d * nb + schema.bucket_of(count))) = 1.0;
  }
  return out;
}

// ---- delexicalisation -------------------------------------------------------

void Lexicon::add(std::string_view surface, std::string placeholder) {
  auto toks = tokenize(surface);
  if (toks.empty()) throw CorpusError("lexicon entry with empty surface form");
  entries_.emplace_back(std::move(toks), std::move(placeholder));
}

std::vector<std::string> delexicalize(std::span<const std::string> utterance, const Lexicon& lexicon) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < utterance.size()) {
    std::size_t best_len = 0;
    const std::string* best = nullptr;
    for (const auto& [surface, placeholder] : lexicon.entries()) {
      const std::size_t n = surface.size();
      if (n <= best_len || i + n > utterance.size()) continue;
      if (std::equal(surface.begin(), surface.end(), utterance.begin() + static_cast<std::ptrdiff_t>(i))) {
        best_len = n;
        best = &placeholder;
      }
    }
    if (best) {
      out.push_back(*best);
      i += best_len;
    } else {
      out.push_back(utterance[i]);
      ++i;
    }
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// ---- JSON -------------------------------------------------------------------

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& msg) {
  throw CorpusError("corpus field " + path + ": " + msg);
}

const json& need(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) field_error(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) field_error(path + "." + key, "missing");
  return *it;
}

std::string need_string(const json& j, const std::string& path) {
  if (!j.is_string()) field_error(path, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> need_strings(const json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(need_string(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

json parse_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') ++line, col = 1;
      else ++col;
    }
    throw CorpusError("parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": " + e.what());
  }
}

void check_version(const json& root) {
  const json& v = need(root, "format_version", "$");
  if (!v.is_number_integer() || v.get<int>() != kFormatVersion)
    field_error("$.format_version", "unsupported version (expected " + std::to_string(kFormatVersion) + ")");
}

json schema_to_json(const SlotSchema& s) {
  json domains = json::array();
  for (const auto& d : s.domains()) {
    json inf = json::array();
    for (const auto& slot : d.informable) inf.push_back({{"slot", slot.name}, {"values", slot.values}});
    domains.push_back({{"name", d.name}, {"informable", inf}, {"requestable", d.requestable}});
  }
  json acts = json::array();
  for (const auto& a : s.act_layout()) acts.push_back({a.domain, a.act, a.slot});
  return {{"domains", domains},
          {"acts", acts},
          {"db_buckets", s.db_buckets()},
          {"belief_dim", s.belief_dim()},
          {"act_dim", s.act_dim()}};
}

SlotSchema schema_from_json(const json& j) {
  const std::string base = "$.schema";
  const json& jd = need(j, "domains", base);
  if (!jd.is_array()) field_error(base + ".domains", "expected an array");
  std::vector<DomainSchema> domains;
  for (std::size_t i = 0; i < jd.size(); ++i) {
    const std::string p = base + ".domains[" + std::to_string(i) + "]";
    DomainSchema d;
    d.name = need_string(need(jd[i], "name", p), p + ".name");
    const json& inf = need(jd[i], "informable", p);
    if (!inf.is_array()) field_error(p + ".informable", "expected an array");
    for (std::size_t k = 0; k < inf.size(); ++k) {
      const std::string q = p + ".informable[" + std::to_string(k) + "]";
      InformableSlot s;
      s.name = need_string(need(inf[k], "slot", q), q + ".slot");
      s.values = need_strings(need(inf[k], "values", q), q + ".values");
      d.informable.push_back(std::move(s));
    }
    d.requestable = need_strings(need(jd[i], "requestable", p), p + ".requestable");
    domains.push_back(std::move(d));
  }
  const json& ja = need(j, "acts", base);
  if (!ja.is_array()) field_error(base + ".acts", "expected an array");
  std::vector<ActTriple> acts;
  for (std::size_t i = 0; i < ja.size(); ++i) {
    auto parts = need_strings(ja[i], base + ".acts[" + std::to_string(i) + "]");
    if (parts.size() != 3) field_error(base + ".acts[" + std::to_string(i) + "]", "expected [domain, act, slot]");
    acts.push_back({parts[0], parts[1], parts[2]});
  }
  std::vector<int> buckets = {0, 1, 2, 4};
  if (auto it = j.find("db_buckets"); it != j.end()) {
    if (!it->is_array()) field_error(base + ".db_buckets", "expected an array");
    buckets = it->get<std::vector<int>>();
  }
  SlotSchema schema;
  try {
    schema = SlotSchema(std::move(domains), std::move(acts), std::move(buckets));
  } catch (const CorpusError& e) {
    field_error(base, e.what());
  }
  // Optional declared dimensions must agree with the layout.
  for (const auto& [key, actual] : {std::pair{"belief_dim", schema.belief_dim()}, std::pair{"act_dim", schema.act_dim()}}) {
    auto it = j.find(key);
    if (it == j.end()) continue;
    if (!it->is_number_integer()) field_error(base + "." + key, "expected an integer");
    if (it->get<Index>() != actual)
      throw DimensionError(std::string("schema declares ") + key + " " + std::to_string(it->get<Index>()) +
                           " but its layout has " + std::to_string(actual));
  }
  return schema;
}

std::vector<int> set_bits(const RowVector& v) {
  std::vector<int> out;
  for (Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0) out.push_back(static_cast<int>(i));
  return out;
}

RowVector bits_from_json(const json& j, Index dim, const std::string& path, const std::string& turn_name) {
  if (!j.is_array()) field_error(path, "expected an array of indices");
  RowVector v = RowVector::Zero(dim);
  long prev = -1;
  for (const auto& e : j) {
    if (!e.is_number_integer()) field_error(path, "indices must be integers");
    const long idx = e.get<long>();
    if (idx < 0 || idx >= dim)
      throw DimensionError(turn_name + ": index " + std::to_string(idx) + " in " + path +
                           " is outside dimension " + std::to_string(dim));
    if (idx <= prev) field_error(path, "indices must be sorted and unique");
    prev = idx;
    v(idx) = 1.0;
  }
  return v;
}

}  // namespace

std::string corpus_to_json(const DialogCorpus& corpus) {
  json root;
  root["format_version"] = kFormatVersion;
  root["schema"] = schema_to_json(corpus.schema);
  root["vocabulary"] = corpus.vocab.tokens();
  json dialogs = json::array();
  for (const auto& d : corpus.dialogs) {
    json goal = json::array();
    for (const auto& g : d.goal.domains)
      goal.push_back({{"domain", g.domain}, {"constraints", g.constraints}, {"requests", g.requests}, {"book", g.book}});
    json turns = json::array();
    for (const auto& t : d.turns) {
      turns.push_back({{"user", corpus.vocab.join(t.user)},
                       {"system", corpus.vocab.join(t.system)},
                       {"belief", set_bits(t.belief)},
                       {"acts", set_bits(t.acts)},
                       {"db", std::vector<double>(t.db.data(), t.db.data() + t.db.size())}});
    }
    dialogs.push_back({{"id", d.id},
                       {"split", d.split},
                       {"domains", std::vector<std::string>(d.domain_labels.begin(), d.domain_labels.end())},
                       {"goal", goal},
                       {"turns", turns}});
  }
  root["dialogs"] = dialogs;
  return root.dump(1) + "\n";
}

DialogCorpus corpus_from_json(std::string_view text) {
  json root = parse_text(text);
  check_version(root);
  DialogCorpus corpus;
  corpus.schema = schema_from_json(need(root, "schema", "$"));
  const auto& schema = corpus.schema;
  const json& jd = need(root, "dialogs", "$");
  if (!jd.is_array()) field_error("$.dialogs", "expected an array");

  std::vector<std::vector<std::vector<std::string>>> user_tokens, system_tokens;
  for (std::size_t i = 0; i < jd.size(); ++i) {
    const std::string p = "$.dialogs[" + std::to_string(i) + "]";
    const json& j = jd[i];
    Dialog d;
    d.id = need_string(need(j, "id", p), p + ".id");
    d.split = need_string(need(j, "split", p), p + ".split");
    if (d.split != "train" && d.split != "val" && d.split != "test")
      field_error(p + ".split", "must be train, val or test");
    for (auto& name : need_strings(need(j, "domains", p), p + ".domains")) {
      if (!schema.domain(name)) field_error(p + ".domains", "unknown domain '" + name + "'");
      d.domain_labels.insert(name);
    }
    const json& jg = need(j, "goal", p);
    if (!jg.is_array()) field_error(p + ".goal", "expected an array");
    for (std::size_t k = 0; k < jg.size(); ++k) {
      const std::string q = p + ".goal[" + std::to_string(k) + "]";
      DomainGoal g;
      g.domain = need_string(need(jg[k], "domain", q), q + ".domain");
      const DomainSchema* ds = schema.domain(g.domain);
      if (!ds) field_error(q + ".domain", "unknown domain '" + g.domain + "'");
      const json& jc = need(jg[k], "constraints", q);
      if (!jc.is_object()) field_error(q + ".constraints", "expected an object");
      for (auto it = jc.begin(); it != jc.end(); ++it) {
        const InformableSlot* s = ds->slot(it.key());
        const std::string v = need_string(it.value(), q + ".constraints." + it.key());
        if (!s || std::find(s->values.begin(), s->values.end(), v) == s->values.end())
          field_error(q + ".constraints." + it.key(), "not an informable slot value of the schema");
        g.constraints[it.key()] = v;
      }
      g.requests = need_strings(need(jg[k], "requests", q), q + ".requests");
      for (const auto& r : g.requests)
        if (std::find(ds->requestable.begin(), ds->requestable.end(), r) == ds->requestable.end())
          field_error(q + ".requests", "'" + r + "' is not requestable in " + g.domain);
      if (auto it = jg[k].find("book"); it != jg[k].end()) g.book = it->get<bool>();
      d.goal.domains.push_back(std::move(g));
    }
    const json& jt = need(j, "turns", p);
    if (!jt.is_array()) field_error(p + ".turns", "expected an array");
    std::vector<std::vector<std::string>> users, systems;
    for (std::size_t k = 0; k < jt.size(); ++k) {
      const std::string q = p + ".turns[" + std::to_string(k) + "]";
      const std::string turn_name = "dialog " + d.id + " turn " + std::to_string(k);
      Turn t;
      users.push_back(tokenize(need_string(need(jt[k], "user", q), q + ".user")));
      systems.push_back(tokenize(need_string(need(jt[k], "system", q), q + ".system")));
      t.belief = bits_from_json(need(jt[k], "belief", q), schema.belief_dim(), q + ".belief", turn_name);
      t.acts = bits_from_json(need(jt[k], "acts", q), schema.act_dim(), q + ".acts", turn_name);
      const json& jdb = need(jt[k], "db", q);
      if (!jdb.is_array()) field_error(q + ".db", "expected an array of reals");
      if (static_cast<Index>(jdb.size()) != schema.db_dim())
        throw DimensionError(turn_name + ": db vector has length " + std::to_string(jdb.size()) +
                             ", schema requires " + std::to_string(schema.db_dim()));
      t.db.resize(schema.db_dim());
      for (std::size_t m = 0; m < jdb.size(); ++m) {
        if (!jdb[m].is_number()) field_error(q + ".db", "expected numbers");
        t.db(static_cast<Index>(m)) = jdb[m].get<double>();
      }
      const Index nb = static_cast<Index>(schema.db_buckets().size());
      for (Index dom = 0; dom < static_cast<Index>(schema.domains().size()); ++dom)
        if (std::abs(t.db.segment(dom * nb, nb).sum() - 1.0) > 1e-9)
          throw DimensionError(turn_name + ": db block of domain " + schema.domains()[static_cast<std::size_t>(dom)].name +
                               " does not sum to 1");
      d.turns.push_back(std::move(t));
    }
    user_tokens.push_back(std::move(users));
    system_tokens.push_back(std::move(systems));
    corpus.dialogs.push_back(std::move(d));
  }

  if (auto it = root.find("vocabulary"); it != root.end()) {
    try {
      corpus.vocab = Vocabulary(need_strings(*it, "$.vocabulary"));
    } catch (const CorpusError& e) {
      field_error("$.vocabulary", e.what());
    }
  } else {
    std::vector<std::vector<std::string>> train;
    for (std::size_t i = 0; i < corpus.dialogs.size(); ++i) {
      if (corpus.dialogs[i].split != "train") continue;
      for (auto& u : user_tokens[i]) train.push_back(u);
      for (auto& s : system_tokens[i]) train.push_back(s);
    }
    corpus.vocab = build_vocabulary(train);
  }
  for (std::size_t i = 0; i < corpus.dialogs.size(); ++i) {
    auto& turns = corpus.dialogs[i].turns;
    for (std::size_t k = 0; k < turns.size(); ++k) {
      turns[k].user = corpus.vocab.encode(user_tokens[i][k]);
      turns[k].system = corpus.vocab.encode(system_tokens[i][k]);
    }
  }
  return corpus;
}

namespace {
std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path);
  out << text;
}
}  // namespace

void save_corpus(const DialogCorpus& corpus, const std::string& path) { write_file(path, corpus_to_json(corpus)); }
DialogCorpus load_corpus(const std::string& path) { return corpus_from_json(read_file(path)); }

std::string database_to_json(const EntityDatabase& db) {
  json root;
  root["format_version"] = kFormatVersion;
  json tables = json::object();
  for (const auto& [domain, entities] : db.tables) {
    json rows = json::array();
    for (const auto& e : entities) rows.push_back({{"name", e.name}, {"attributes", e.attributes}});
    tables[domain] = rows;
  }
  root["entities"] = tables;
  return root.dump(1) + "\n";
}

EntityDatabase database_from_json(std::string_view text) {
  json root = parse_text(text);
  check_version(root);
  EntityDatabase db;
  const json& tables = need(root, "entities", "$");
  if (!tables.is_object()) field_error("$.entities", "expected an object");
  for (auto it = tables.begin(); it != tables.end(); ++it) {
    const std::string p = "$.entities." + it.key();
    if (!it.value().is_array()) field_error(p, "expected an array");
    auto& rows = db.tables[it.key()];
    for (std::size_t i = 0; i < it.value().size(); ++i) {
      const std::string q = p + "[" + std::to_string(i) + "]";
      Entity e;
      e.name = need_string(need(it.value()[i], "name", q), q + ".name");
      const json& attrs = need(it.value()[i], "attributes", q);
      if (!attrs.is_object()) field_error(q + ".attributes", "expected an object");
      for (auto a = attrs.begin(); a != attrs.end(); ++a)
        e.attributes[a.key()] = need_string(a.value(), q + ".attributes." + a.key());
      rows.push_back(std::move(e));
    }
  }
  return db;
}

void save_database(const EntityDatabase& db, const std::string& path) { write_file(path, database_to_json(db)); }
EntityDatabase load_database(const std::string& path) { return database_from_json(read_file(path)); }

}  // namespace structfusion
