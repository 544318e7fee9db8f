#include "chat.hpp"

#include "structfusion/synthetic.hpp"

#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace structfusion {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// The NLU supplies the belief only for these models.
bool predicts_belief(ResponseModel& model) {
  if (auto* sfn = dynamic_cast<SfnModel*>(&model)) return sfn->belief.source == BeliefSource::Predicted;
  if (auto* nf = dynamic_cast<NaiveFusionModel*>(&model)) return nf->belief.source == BeliefSource::Predicted;
  return false;
}

// "restaurant-area=north hotel-stars=4" -> triples; throws on unknown items.
std::set<BeliefTriple> parse_slots(const std::string& line, const SlotSchema& schema) {
  std::set<BeliefTriple> out;
  std::istringstream is(line);
  std::string item;
  while (is >> item) {
    const auto dash = item.find('-');
    const auto eq = item.find('=');
    if (dash == std::string::npos || eq == std::string::npos || eq < dash)
      throw std::invalid_argument("expected domain-slot=value, got '" + item + "'");
    BeliefTriple t{item.substr(0, dash), item.substr(dash + 1, eq - dash - 1), item.substr(eq + 1)};
    if (!schema.belief_index(t)) throw std::invalid_argument("unknown slot value '" + item + "'");
    out.insert(t);
  }
  return out;
}

std::string describe(const std::set<BeliefTriple>& belief) {
  if (belief.empty()) return "(none)";
  std::string s;
  for (const auto& t : belief) s += (s.empty() ? "" : " ") + t.domain + "-" + t.slot + "=" + t.value;
  return s;
}

std::string describe(const std::set<ActTriple>& acts) {
  if (acts.empty()) return "(none)";
  std::string s;
  for (const auto& a : acts) s += (s.empty() ? "" : " ") + to_string(a);
  return s;
}

RowVector threshold(const Matrix& probs) {
  RowVector v = (probs.row(0).array() > 0.5).cast<double>().matrix();
  return v;
}

}  // namespace

void check_model_fits(const ResponseModel& model, const DialogCorpus& corpus) {
  const ModelDims& d = model.dims();
  if (d.vocab != corpus.vocab.size() || d.belief != corpus.schema.belief_dim() || d.acts != corpus.schema.act_dim() ||
      d.db != corpus.schema.db_dim()) {
    std::ostringstream os;
    os << "checkpoint dims (V=" << d.vocab << ", B=" << d.belief << ", A=" << d.acts << ", D=" << d.db
       << ") do not match the corpus (V=" << corpus.vocab.size() << ", B=" << corpus.schema.belief_dim()
       << ", A=" << corpus.schema.act_dim() << ", D=" << corpus.schema.db_dim() << ")";
    throw CheckpointError(os.str());
  }
}

int run_chat(ResponseModel& model, const DialogCorpus& corpus, const EntityDatabase& database, std::istream& in,
             std::ostream& out, int max_len) {
  check_model_fits(model, corpus);
  const SlotSchema& schema = corpus.schema;
  const Lexicon lexicon = entity_lexicon(database);
  const bool predicted = predicts_belief(model);
  out << "model " << model.kind() << ", belief " << (predicted ? "predicted by the NLU" : "entered per turn")
      << ". Type :quit to leave, :reset for a new dialog.\n";

  std::set<BeliefTriple> belief;
  std::string line;
  while (true) {
    out << "user> " << std::flush;
    if (!std::getline(in, line)) break;
    line = trim(line);
    if (line.empty()) continue;
    if (line == ":quit") break;
    if (line == ":reset") {
      belief.clear();
      out << "(new dialog)\n";
      continue;
    }
    const auto tokens = delexicalize(tokenize(line), lexicon);
    Dialog dialog;
    dialog.id = "chat";
    Turn turn;
    turn.user = corpus.vocab.encode(tokens);
    if (turn.user.empty()) turn.user.push_back(Vocabulary::kUnk);

    if (predicted) {
      Tape tape(false);
      belief = schema.decode_belief(threshold(model.modules()->nlu.forward(tape, {turn.user}).probs.value()));
    } else {
      while (true) {
        out << "slots> " << std::flush;
        std::string slots;
        if (!std::getline(in, slots)) return 0;
        try {
          for (const auto& t : parse_slots(trim(slots), schema)) {
            std::erase_if(belief, [&](const BeliefTriple& b) { return b.domain == t.domain && b.slot == t.slot; });
            belief.insert(t);
          }
          break;
        } catch (const std::invalid_argument& e) {
          out << "error: " << e.what() << "\n";
        }
      }
    }
    turn.belief = schema.encode_belief(belief);
    turn.db = db_query(turn.belief, database, schema);
    turn.acts = RowVector::Zero(schema.act_dim());
    dialog.turns.push_back(turn);

    const std::vector<TurnRef> refs{{&dialog, 0}};
    const Batch batch = make_batch(refs);
    const auto response = greedy_decode(model, batch, max_len);
    out << "system: " << corpus.vocab.join(response[0]) << "\n";
    out << "belief: " << describe(belief) << "\n";
    if (DialogModules* m = model.modules()) {
      Tape tape(false);
      Var da = m->dm.forward(tape, tape.constant(batch.belief), tape.constant(batch.db)).probs;
      out << "acts: " << describe(schema.decode_acts(threshold(da.value()))) << "\n";
    }
  }
  out << "bye\n";
  return 0;
}

}  // namespace structfusion
