#include "structfusion/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace structfusion {

bool PipelineConfig::needs_pretraining() const {
  return kind.starts_with("naive-") || kind.starts_with("sfn-");
}

DialogModules pretrain_modules(const ModelDims& dims, const TrainData& data, const Hyperparams& hyper, int epochs,
                               std::ostream* log) {
  Rng rng(hyper.seed);
  DialogModules modules(dims, rng);
  const auto train = turn_refs(data.train);
  const auto val = turn_refs(data.val);
  Hyperparams h = hyper;
  h.epochs = epochs < 0 ? hyper.epochs : epochs;
  for (ModuleKind k : {ModuleKind::Nlu, ModuleKind::Dm, ModuleKind::Nlg}) {
    const PretrainResult r = pretrain_module(k, modules, train, val, h);
    if (log) {
      for (const auto& e : r.history)
        *log << nlohmann::json{{"module", module_name(k)}, {"epoch", e.epoch}, {"train_loss", e.train_loss},
                               {"val_loss", e.val_loss}}
                    .dump()
             << "\n";
      *log << std::flush;
    }
  }
  return modules;
}

TrainedPipeline train_pipeline(const PipelineConfig& config, const TrainData& data, const TrainHooks& hooks,
                               const DialogModules* pretrained) {
  if (!data.corpus || !data.database) throw std::invalid_argument("training data has no corpus or database");
  const ModelDims dims = ModelDims::from_corpus(*data.corpus, config.hyper.embed_dim, config.hyper.hidden_dim);
  TrainedPipeline out;
  Rng rng(config.hyper.seed + 1);
  out.model = make_model(config.kind, dims, config.options, rng);
  if (config.needs_pretraining()) {
    if (pretrained) {
      install_modules(*out.model, *pretrained);
    } else {
      const DialogModules fresh = pretrain_modules(dims, data, config.hyper, config.pretrain_epochs, hooks.log);
      install_modules(*out.model, fresh);
    }
  }
  if (config.kind == "naive-zeroshot") return out;
  if (out.model->wants_module_losses())
    out.result = train_multitask(*out.model, data, config.hyper, config.weights, hooks);
  else
    out.result = train_supervised(*out.model, data, config.hyper, hooks);
  return out;
}

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::LowData: return "low-data";
    case ExperimentKind::DomainTransfer: return "domain-transfer";
    case ExperimentKind::BeliefAblation: return "belief-ablation";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto k : {ExperimentKind::LowData, ExperimentKind::DomainTransfer, ExperimentKind::BeliefAblation})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown experiment '" + std::string(name) +
                              "' (expected low-data, domain-transfer or belief-ablation)");
}

std::vector<PipelineConfig> ExperimentConfig::default_models(const Hyperparams& hyper) {
  PipelineConfig base;
  base.kind = "seq2seq-attn";
  base.hyper = hyper;
  PipelineConfig sfn = base;
  sfn.kind = "sfn-finetuned";
  return {base, sfn};
}

void ExperimentConfig::validate() const {
  for (double f : fractions)
    if (!(f > 0.0 && f <= 100.0)) throw std::invalid_argument("fractions must lie in (0, 100]");
  if (kind == ExperimentKind::LowData && fractions.empty()) throw std::invalid_argument("no fractions given");
  if (repeats < 1) throw std::invalid_argument("repeats must be at least 1");
  if (min_updates < 0) throw std::invalid_argument("min_updates must be nonnegative");
  if (ood_count < 0 || id_count < 0) throw std::invalid_argument("dialog counts must be nonnegative");
  if (kind == ExperimentKind::BeliefAblation && modes.empty()) throw std::invalid_argument("no belief sources given");
  if (models.empty()) throw std::invalid_argument("no models to compare");
}

const ExperimentRow& ExperimentReport::find(std::string_view model, std::string_view variant) const {
  for (const auto& r : rows)
    if (r.model == model && r.variant == variant) return r;
  throw std::out_of_range("no experiment row " + std::string(model) + "/" + std::string(variant));
}

std::vector<const Dialog*> sample_fraction(std::span<const Dialog* const> train, double percent, std::uint64_t seed) {
  if (!(percent > 0.0 && percent <= 100.0)) throw std::invalid_argument("fraction must lie in (0, 100]");
  std::vector<const Dialog*> pool(train.begin(), train.end());
  if (percent == 100.0) return pool;
  if (pool.empty()) throw InsufficientDialogs("cannot sample from an empty train split");
  Rng rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n = std::max<std::size_t>(1, std::size_t(std::ceil(double(pool.size()) * percent / 100.0 - 1e-9)));
  pool.resize(n);
  return pool;
}

DomainTransferSplit domain_transfer_split(const DialogCorpus& corpus, const std::string& in_domain, int ood_count,
                                          int id_count, std::uint64_t seed) {
  const auto& domains = corpus.schema.domains();
  if (std::none_of(domains.begin(), domains.end(), [&](const DomainSchema& d) { return d.name == in_domain; }))
    throw std::invalid_argument("unknown domain '" + in_domain + "'");
  std::vector<const Dialog*> ood, id;
  for (const Dialog* d : corpus.split("train")) (d->domain_labels.contains(in_domain) ? id : ood).push_back(d);
  if (ood.size() < std::size_t(ood_count) || id.size() < std::size_t(id_count)) {
    std::ostringstream os;
    os << "domain transfer needs " << ood_count << " out-of-domain and " << id_count << " '" << in_domain
       << "' train dialogs, the corpus has " << ood.size() << " and " << id.size();
    throw InsufficientDialogs(os.str());
  }
  Rng rng(seed);
  std::shuffle(ood.begin(), ood.end(), rng);
  std::shuffle(id.begin(), id.end(), rng);
  DomainTransferSplit split;
  split.train.assign(ood.begin(), ood.begin() + ood_count);
  split.train.insert(split.train.end(), id.begin(), id.begin() + id_count);
  for (const Dialog* d : corpus.split("test"))
    if (d->domain_labels.contains(in_domain)) split.test.push_back(d);
  if (split.test.empty()) throw InsufficientDialogs("no '" + in_domain + "' test dialogs");
  return split;
}

namespace {

std::string fraction_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", f);
  return buf;
}

int epochs_for_updates(const Hyperparams& h, std::size_t turns, int min_updates) {
  const auto per_epoch = long((turns + std::size_t(h.batch_size) - 1) / std::size_t(h.batch_size));
  if (min_updates <= 0 || per_epoch == 0) return h.epochs;
  return std::max(h.epochs, int((min_updates + per_epoch - 1) / per_epoch));
}

// Rates and BLEU averaged over seeds; combined follows from the means.
EvalReport mean_report(const std::vector<EvalReport>& runs) {
  if (runs.size() == 1) return runs[0];
  EvalReport m;
  for (const auto& r : runs) {
    m.bleu += r.bleu / double(runs.size());
    m.inform += r.inform / double(runs.size());
    m.success += r.success / double(runs.size());
  }
  m.combined = combined_score(m.bleu, m.inform, m.success);
  m.dialogs = runs[0].dialogs;
  m.turns = runs[0].turns;
  return m;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const DialogCorpus& corpus,
                                const EntityDatabase& database, std::ostream* log) {
  config.validate();
  ExperimentReport report;
  report.kind = config.kind;
  const auto val = corpus.split("val");
  std::vector<const Dialog*> test = corpus.split("test");
  report.test_set = "test";

  std::uint64_t seed = config.seed;
  std::size_t slot = 0;  // row filled by the current repeat
  auto seeded = [&](PipelineConfig p) {
    p.hyper.seed = seed;
    return p;
  };
  auto run = [&](const PipelineConfig& p, const std::vector<const Dialog*>& train, const DialogModules* modules,
                 std::string variant, double fraction) {
    TrainData data{&corpus, &database, train, val};
    TrainedPipeline t = train_pipeline(p, data, {}, modules);
    EvalReport result = evaluate(*t.model, test, corpus, database, p.hyper.max_len);
    if (slot == report.rows.size()) {
      ExperimentRow row;
      row.model = p.kind;
      row.variant = std::move(variant);
      row.fraction = fraction;
      row.train_dialogs = train.size();
      row.best_epoch = t.result.best_epoch;
      report.rows.push_back(std::move(row));
    }
    ExperimentRow& row = report.rows[slot++];
    row.runs.push_back(std::move(result));
    if (log) {
      nlohmann::json j = report_to_json(row.runs.back());
      j["model"] = row.model;
      j["variant"] = row.variant;
      j["seed"] = seed;
      j["train_dialogs"] = train.size();
      *log << j.dump() << "\n" << std::flush;
    }
  };

  for (int repeat = 0; repeat < config.repeats; ++repeat) {
    seed = config.seed + std::uint64_t(repeat);
    slot = 0;
    switch (config.kind) {
      case ExperimentKind::LowData:
        for (double f : config.fractions) {
          const auto train = sample_fraction(corpus.split("train"), f, seed);
          const std::size_t turns = turn_refs(train).size();
          for (const auto& m : config.models) {
            PipelineConfig p = seeded(m);
            p.hyper.epochs = epochs_for_updates(p.hyper, turns, config.min_updates);
            run(p, train, nullptr, fraction_label(f), f);
          }
        }
        break;
      case ExperimentKind::DomainTransfer: {
        const auto split = domain_transfer_split(corpus, config.in_domain, config.ood_count, config.id_count, seed);
        test = split.test;
        report.test_set = "test:" + config.in_domain;
        for (const auto& m : config.models) run(seeded(m), split.train, nullptr, "transfer", 100.0);
        break;
      }
      case ExperimentKind::BeliefAblation: {
        auto it = std::find_if(config.models.begin(), config.models.end(),
                               [](const PipelineConfig& p) { return p.needs_pretraining(); });
        if (it == config.models.end()) throw std::invalid_argument("belief ablation needs a model with modules");
        const PipelineConfig base = seeded(*it);
        const auto train = corpus.split("train");
        TrainData data{&corpus, &database, train, val};
        const ModelDims dims = ModelDims::from_corpus(corpus, base.hyper.embed_dim, base.hyper.hidden_dim);
        const DialogModules modules = pretrain_modules(dims, data, base.hyper, base.pretrain_epochs);
        for (BeliefSource s : config.modes) {
          PipelineConfig p = base;
          p.options.belief_source = s;
          run(p, train, &modules, to_string(s), 100.0);
        }
        break;
      }
    }
  }
  for (auto& row : report.rows) row.report = mean_report(row.runs);
  return report;
}

nlohmann::json experiment_to_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json j = report_to_json(r.report);
    j["model"] = r.model;
    j["variant"] = r.variant;
    j["fraction"] = r.fraction;
    j["train_dialogs"] = r.train_dialogs;
    j["best_epoch"] = r.best_epoch;
    if (r.runs.size() > 1) {
      nlohmann::json per_seed = nlohmann::json::array();
      for (const auto& run : r.runs) per_seed.push_back(report_to_json(run));
      j["per_seed"] = per_seed;
    }
    rows.push_back(std::move(j));
  }
  nlohmann::json out{{"experiment", to_string(report.kind)}, {"test_set", report.test_set}, {"rows", rows}};
  if (report.kind == ExperimentKind::LowData) {
    nlohmann::json series = nlohmann::json::object();
    for (const auto& r : report.rows) {
      auto& s = series[r.model];
      s["fractions"].push_back(r.fraction);
      s["bleu"].push_back(r.report.bleu);
      s["inform"].push_back(r.report.inform);
      s["success"].push_back(r.report.success);
      s["combined"].push_back(r.report.combined);
    }
    out["series"] = series;
  }
  return out;
}

std::string experiment_table(const ExperimentReport& report) {
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& r : report.rows) rows.emplace_back(r.model + " " + r.variant, r.report);
  return std::string(to_string(report.kind)) + " on " + report.test_set + "\n" + report_table(rows);
}

}  // namespace structfusion
