#include "structfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace structfusion {

namespace {

std::map<std::vector<std::string>, long> ngram_counts(const TokenSeq& s, std::size_t n) {
  std::map<std::vector<std::string>, long> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[TokenSeq(s.begin() + long(i), s.begin() + long(i + n))];
  return counts;
}

}  // namespace

BleuDetail bleu_detail(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references) {
  if (candidates.empty()) throw std::invalid_argument("bleu: empty candidate set");
  if (candidates.size() != references.size())
    throw std::invalid_argument("bleu: " + std::to_string(candidates.size()) + " candidates but " +
                                std::to_string(references.size()) + " references");
  BleuDetail d;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& c = candidates[i];
    const TokenSeq& r = references[i];
    d.candidate_length += long(c.size());
    d.reference_length += long(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cc = ngram_counts(c, n);
      const auto rc = ngram_counts(r, n);
      for (const auto& [gram, count] : cc) {
        d.totals[n - 1] += count;
        auto it = rc.find(gram);
        if (it != rc.end()) d.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double m = d.matches[n] == 0 ? kBleuEpsilon : double(d.matches[n]);
    const double t = d.totals[n] == 0 ? 1.0 : double(d.totals[n]);
    d.precisions[n] = m / t;
    log_sum += 0.25 * std::log(d.precisions[n]);
  }
  if (d.candidate_length == 0)
    d.brevity_penalty = 0.0;
  else if (d.candidate_length >= d.reference_length)
    d.brevity_penalty = 1.0;
  else
    d.brevity_penalty = std::exp(1.0 - double(d.reference_length) / double(d.candidate_length));
  d.score = 100.0 * d.brevity_penalty * std::exp(log_sum);
  return d;
}

double bleu(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references) {
  return bleu_detail(candidates, references).score;
}

double combined_score(double bleu_score, double inform, double success) {
  return bleu_score + 0.5 * (inform + success);
}

DialogOutcome score_dialog(const Dialog& dialog, std::span<const TokenSeq> responses, const EntityDatabase& database,
                           const SlotSchema& schema) {
  if (responses.size() != dialog.turns.size())
    throw std::invalid_argument("dialog " + dialog.id + ": " + std::to_string(responses.size()) +
                                " responses for " + std::to_string(dialog.turns.size()) + " turns");
  DialogOutcome out;
  out.id = dialog.id;
  std::set<std::string> emitted;
  for (const auto& r : responses) emitted.insert(r.begin(), r.end());
  const auto constraints =
      dialog.turns.empty() ? std::map<std::string, std::map<std::string, std::string>>{}
                           : belief_constraints(dialog.turns.back().belief, schema);

  bool inform = !dialog.goal.domains.empty();
  bool answered = true;
  for (const DomainGoal& g : dialog.goal.domains) {
    if (!schema.domain(g.domain))
      throw std::invalid_argument("dialog " + dialog.id + ": goal domain '" + g.domain + "' is not in the schema");
    if (!g.requests.empty()) out.has_requests = true;
    auto it = constraints.find(g.domain);
    const std::map<std::string, std::string> none;
    const bool offered = emitted.count("[" + g.domain + "_name]") > 0;
    const bool available = database.count_matches(g.domain, it == constraints.end() ? none : it->second) > 0;
    inform = inform && offered && available;
    for (const std::string& r : g.requests) answered = answered && emitted.count("[" + g.domain + "_" + r + "]") > 0;
  }
  out.inform = inform;
  out.success = inform && answered;
  return out;
}

InformSuccess inform_success(std::span<const Dialog* const> dialogs, std::span<const std::vector<TokenSeq>> responses,
                             const EntityDatabase& database, const SlotSchema& schema) {
  if (dialogs.size() != responses.size()) throw std::invalid_argument("inform_success: dialog/response count mismatch");
  InformSuccess res;
  long inform = 0, success = 0;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    DialogOutcome o = score_dialog(*dialogs[i], responses[i], database, schema);
    inform += o.inform;
    success += o.success;
    res.dialogs.push_back(std::move(o));
  }
  if (!dialogs.empty()) {
    res.inform = 100.0 * double(inform) / double(dialogs.size());
    res.success = 100.0 * double(success) / double(dialogs.size());
  }
  return res;
}

std::vector<std::vector<TokenSeq>> generate_responses(ResponseModel& model, std::span<const Dialog* const> dialogs,
                                                      const Vocabulary& vocab, int max_len, int batch_size) {
  std::vector<TurnRef> refs = turn_refs(dialogs);
  std::vector<std::vector<TokenSeq>> out(dialogs.size());
  for (std::size_t i = 0; i < dialogs.size(); ++i) out[i].resize(dialogs[i]->turns.size());
  std::map<const Dialog*, std::size_t> index;
  for (std::size_t i = 0; i < dialogs.size(); ++i) index[dialogs[i]] = i;
  for (std::size_t i = 0; i < refs.size(); i += std::size_t(batch_size)) {
    const std::size_t n = std::min(std::size_t(batch_size), refs.size() - i);
    const auto chunk = std::span<const TurnRef>(refs).subspan(i, n);
    const auto decoded = greedy_decode(model, make_batch(chunk), max_len);
    for (std::size_t k = 0; k < n; ++k) out[index[chunk[k].dialog]][chunk[k].turn] = vocab.decode(decoded[k]);
  }
  return out;
}

EvalReport score_responses(std::span<const Dialog* const> dialogs, std::span<const std::vector<TokenSeq>> responses,
                           const DialogCorpus& corpus, const EntityDatabase& database) {
  std::vector<TokenSeq> cands, refs;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    for (std::size_t t = 0; t < dialogs[i]->turns.size(); ++t) {
      cands.push_back(responses[i][t]);
      refs.push_back(corpus.vocab.decode(dialogs[i]->turns[t].system));
    }
  }
  EvalReport r;
  r.dialogs = dialogs.size();
  r.turns = cands.size();
  if (!cands.empty()) r.bleu = bleu(cands, refs);
  InformSuccess is = inform_success(dialogs, responses, database, corpus.schema);
  r.inform = is.inform;
  r.success = is.success;
  r.outcomes = std::move(is.dialogs);
  r.combined = combined_score(r.bleu, r.inform, r.success);
  return r;
}

EvalReport evaluate(ResponseModel& model, std::span<const Dialog* const> dialogs, const DialogCorpus& corpus,
                    const EntityDatabase& database, int max_len) {
  const auto responses = generate_responses(model, dialogs, corpus.vocab, max_len);
  return score_responses(dialogs, responses, corpus, database);
}

nlohmann::json report_to_json(const EvalReport& report, bool with_dialogs) {
  nlohmann::json j{{"bleu", report.bleu},         {"inform", report.inform}, {"success", report.success},
                   {"combined", report.combined}, {"dialogs", report.dialogs}, {"turns", report.turns}};
  if (with_dialogs) {
    auto arr = nlohmann::json::array();
    for (const auto& o : report.outcomes)
      arr.push_back({{"id", o.id}, {"inform", o.inform}, {"success", o.success}, {"has_requests", o.has_requests}});
    j["per_dialog"] = arr;
  }
  return j;
}

std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 5;
  for (const auto& [label, _] : rows) width = std::max(width, label.size());
  std::ostringstream os;
  char buf[128];
  os << std::string(width - 5, ' ') << "model";
  os << "     BLEU   Inform  Success  Combined\n";
  for (const auto& [label, r] : rows) {
    std::snprintf(buf, sizeof buf, " %8.2f %8.2f %8.2f %9.2f\n", r.bleu, r.inform, r.success, r.combined);
    os << std::string(width - label.size(), ' ') << label << buf;
  }
  return os.str();
}

}  // namespace structfusion
