#pragma once

// BLEU, Inform/Success and the combined score, plus model evaluation.
//
// Inform (per dialog): for every goal domain d the generated responses
// contain "[d_name]" and the database has at least one entity matching the
// constraints of the dialog's final ground-truth belief for d.
// Success: Inform and, for every requested attribute r of every goal domain
// d, "[d_r]" appears in some generated response.

#include "structfusion/fusion.hpp"

#include <array>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

namespace structfusion {

using TokenSeq = std::vector<std::string>;

/// Added to zero n-gram match counts.
inline constexpr double kBleuEpsilon = 1e-9;

struct BleuDetail {
  std::array<long, 4> matches{};
  std::array<long, 4> totals{};
  std::array<double, 4> precisions{};
  long candidate_length = 0;
  long reference_length = 0;
  double brevity_penalty = 0.0;
  double score = 0.0;  // 0..100
};

/// Corpus BLEU-4, uniform weights, brevity penalty. A zero match count is
/// replaced by kBleuEpsilon; an order with no candidate n-grams counts its
/// total as 1.
BleuDetail bleu_detail(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references);
double bleu(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references);

double combined_score(double bleu, double inform, double success);

struct DialogOutcome {
  std::string id;
  bool inform = false;
  bool success = false;
  bool has_requests = false;
};

/// `responses` holds one generated token sequence per turn of `dialog`.
DialogOutcome score_dialog(const Dialog& dialog, std::span<const TokenSeq> responses,
                           const EntityDatabase& database, const SlotSchema& schema);

struct InformSuccess {
  std::vector<DialogOutcome> dialogs;
  double inform = 0.0;   // percent
  double success = 0.0;  // percent
};

InformSuccess inform_success(std::span<const Dialog* const> dialogs,
                             std::span<const std::vector<TokenSeq>> responses, const EntityDatabase& database,
                             const SlotSchema& schema);

struct EvalReport {
  double bleu = 0.0;
  double inform = 0.0;
  double success = 0.0;
  double combined = 0.0;
  std::size_t dialogs = 0;
  std::size_t turns = 0;
  std::vector<DialogOutcome> outcomes;
};

/// Generated responses per dialog per turn, as tokens.
std::vector<std::vector<TokenSeq>> generate_responses(ResponseModel& model, std::span<const Dialog* const> dialogs,
                                                      const Vocabulary& vocab, int max_len = 50,
                                                      int batch_size = 256);

EvalReport score_responses(std::span<const Dialog* const> dialogs, std::span<const std::vector<TokenSeq>> responses,
                           const DialogCorpus& corpus, const EntityDatabase& database);

/// Greedy decoding of every turn followed by score_responses().
EvalReport evaluate(ResponseModel& model, std::span<const Dialog* const> dialogs, const DialogCorpus& corpus,
                    const EntityDatabase& database, int max_len = 50);

nlohmann::json report_to_json(const EvalReport& report, bool with_dialogs = false);

/// Aligned text table, one row per (label, report).
std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace structfusion
