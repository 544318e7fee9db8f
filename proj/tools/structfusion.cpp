// structfusion: data generation, training, evaluation and experiments.
//
// Every subcommand resolves a run directory (--run-dir, else
// $STRUCTFUSION_RUN_DIR, else runs/<command>) and writes <command>.manifest.json
// plus <command>.toml there. The .toml file is a config that repeats the run:
//
//   structfusion train --config runs/train/train.toml --run-dir again

#include "chat.hpp"
#include "structfusion/experiments.hpp"
#include "structfusion/synthetic.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef STRUCTFUSION_VERSION
#define STRUCTFUSION_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace structfusion;

namespace {

struct Options {
  // data
  std::string corpus;
  std::string db;
  std::string out;
  int dialogs = 1000;
  int entities = 20;
  std::vector<std::string> domains;
  // model and training
  std::string model = "sfn-finetuned";
  std::string belief_source = "gt";
  bool no_attention = false;
  std::uint64_t seed = 1;
  int epochs = 20;
  int pretrain_epochs = -1;
  double lr = 5e-3;
  int batch_size = 64;
  double clip_norm = 5.0;
  int embed = 50;
  int hidden = 150;
  int max_len = 50;
  std::vector<double> weights{1, 1, 1, 1};
  std::string modules_dir;
  std::string module = "all";
  bool no_validate = false;
  // checkpoints and runs
  std::string run_dir;
  std::string model_ckpt;
  std::string split = "test";
  // rl
  double rl_lr = 1e-5;
  int rl_epochs = 1;
  int rl_batch = 16;
  double temperature = 1.0;
  std::string baseline = "batch-mean";
  bool unfreeze = false;
  // experiments
  std::string experiment = "low-data";
  std::vector<double> fractions{1, 5, 10, 25};
  std::string in_domain = "restaurant";
  int ood_count = 2000;
  int id_count = 50;
  int min_updates = 0;
  int repeats = 1;
  std::vector<std::string> models{"seq2seq-attn", "sfn-finetuned"};
  std::string report;
};

// ---- option groups ----------------------------------------------------------

void add_corpus(CLI::App* sub, Options& o) {
  sub->add_option("--corpus", o.corpus, "Corpus JSON")->check(CLI::ExistingFile);
  sub->add_option("--db", o.db, "Database JSON (default: the corpus path with .db.json)");
}

void add_run_dir(CLI::App* sub, Options& o) {
  sub->add_option("--run-dir", o.run_dir, "Run directory (default $STRUCTFUSION_RUN_DIR, else runs/<command>)");
}

void add_model(CLI::App* sub, Options& o) {
  sub->add_option("--model", o.model, "Model kind")->check(CLI::IsMember(model_kinds()));
  sub->add_option("--belief-source", o.belief_source, "Belief fed to the modules")
      ->check(CLI::IsMember({"gt", "pred", "sum", "linear"}));
  sub->add_flag("--no-attention", o.no_attention, "Disable attention in SFN models");
}

void add_hyper(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "Random seed");
  sub->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  sub->add_option("--pretrain-epochs", o.pretrain_epochs, "Module pre-training epochs (-1: --epochs)");
  sub->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", o.batch_size, "Turns per batch")->check(CLI::PositiveNumber);
  sub->add_option("--clip-norm", o.clip_norm, "Global gradient norm bound")->check(CLI::PositiveNumber);
  sub->add_option("--embed-dim", o.embed, "Embedding size")->check(CLI::PositiveNumber);
  sub->add_option("--hidden-dim", o.hidden, "LSTM hidden size")->check(CLI::PositiveNumber);
  sub->add_option("--max-len", o.max_len, "Decoding length limit")->check(CLI::PositiveNumber);
}

Hyperparams hyper_of(const Options& o) {
  Hyperparams h;
  h.epochs = o.epochs;
  h.lr = o.lr;
  h.batch_size = o.batch_size;
  h.clip_norm = o.clip_norm;
  h.embed_dim = o.embed;
  h.hidden_dim = o.hidden;
  h.seed = o.seed;
  h.max_len = o.max_len;
  return h;
}

PipelineConfig pipeline_of(const Options& o, const std::string& kind) {
  PipelineConfig p;
  p.kind = kind;
  p.options.attention = !o.no_attention;
  p.options.belief_source = parse_belief_source(o.belief_source);
  p.hyper = hyper_of(o);
  p.pretrain_epochs = o.pretrain_epochs;
  if (o.weights.size() != 4) throw std::invalid_argument("--weights takes four values: e2e nlu dm nlg");
  p.weights = {o.weights[0], o.weights[1], o.weights[2], o.weights[3]};
  p.weights.validate();
  return p;
}

// ---- run plumbing -----------------------------------------------------------

struct Data {
  DialogCorpus corpus;
  EntityDatabase database;
};

std::string default_db_path(const std::string& corpus) {
  fs::path p(corpus);
  return (p.parent_path() / (p.stem().string() + ".db.json")).string();
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

Data load_data(const Options& o) {
  require(o.corpus, "--corpus");
  Data d;
  d.corpus = load_corpus(o.corpus);
  d.database = load_database(o.db.empty() ? default_db_path(o.corpus) : o.db);
  return d;
}

// The resolved options of one subcommand as a TOML section that --config reads back.
std::string resolved_config(const CLI::App& sub) {
  std::ostringstream os;
  os << "[" << sub.get_name() << "]\n";
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string key = opt->get_single_name();
    if (key.empty() || key == "help" || opt->get_lnames().empty()) continue;
    std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (values.empty()) {
      const std::string d = opt->get_default_str();
      if (d.empty()) continue;
      values = {d};
    }
    if (opt->get_type_size() == 0) {  // flag
      os << key << "=" << (values.back() == "false" || values.back() == "0" ? "false" : "true") << "\n";
      continue;
    }
    // Vector defaults print as "[a,b]".
    if (values.size() == 1 && values[0].size() > 1 && values[0].front() == '[' && values[0].back() == ']') {
      const std::string inner = values[0].substr(1, values[0].size() - 2);
      values = CLI::detail::split(inner, ',');
    }
    const bool is_list = opt->get_expected_max() > 1 || values.size() > 1;
    auto quote = [](const std::string& v) { return "\"" + v + "\""; };
    os << key << "=";
    if (is_list) {
      os << "[";
      for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << quote(values[i]);
      os << "]";
    } else {
      os << quote(values[0]);
    }
    os << "\n";
  }
  return os.str();
}

class Run {
 public:
  Run(const CLI::App& sub, Options& o, std::vector<std::string> argv) {
    if (o.run_dir.empty()) {
      const char* env = std::getenv("STRUCTFUSION_RUN_DIR");
      o.run_dir = env && *env ? env : "runs/" + sub.get_name();
    }
    dir_ = o.run_dir;
    fs::create_directories(dir_);
    const std::string config = resolved_config(sub);
    std::ofstream(dir_ / (sub.get_name() + ".toml")) << config;
    nlohmann::json m{{"command", sub.get_name()},
                     {"argv", argv},
                     {"seed", o.seed},
                     {"run_dir", dir_.string()},
                     {"config", config},
                     {"versions",
                      {{"structfusion", STRUCTFUSION_VERSION},
                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                     "." + std::to_string(EIGEN_MINOR_VERSION)},
                       {"cli11", CLI11_VERSION},
                       {"compiler", __VERSION__},
                       {"cxx", __cplusplus}}}};
    std::ofstream(dir_ / (sub.get_name() + ".manifest.json")) << m.dump(2) << "\n";
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
};

void write_report(const Run& run, const std::string& name, const EvalReport& report, const std::string& label) {
  std::ofstream(run.path(name)) << report_to_json(report, true).dump(2) << "\n";
  std::cout << report_table({{label, report}});
}

std::unique_ptr<ResponseModel> load_any_model(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta_or("module", "") == "nlg") {
    // A pre-trained NLG scores as the oracle-act model.
    const ModelDims dims = ModelDims::from_meta(ckpt);
    Rng rng(0);
    DialogModules modules(dims, rng);
    load_module_checkpoint(ckpt, modules);
    return std::make_unique<NlgOracleModel>(dims, modules.nlg);
  }
  return load_model(ckpt);
}

std::string resolve_ckpt(const Options& o) {
  require(o.model_ckpt, "--model-ckpt");
  if (o.model_ckpt == "best" || o.model_ckpt == "final") return (fs::path(o.run_dir) / (o.model_ckpt + ".ckpt")).string();
  return o.model_ckpt;
}

// ---- commands -----------------------------------------------------------------

int cmd_gen_data(Options& o) {
  require(o.out, "--out");
  auto spec = default_synthetic_spec();
  spec.dialogs = o.dialogs;
  spec.entities_per_domain = o.entities;
  spec.allowed_domains = o.domains;
  const SyntheticData data = generate_synthetic(spec, o.seed);
  const std::string db = o.db.empty() ? default_db_path(o.out) : o.db;
  if (auto parent = fs::path(o.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_corpus(data.corpus, o.out);
  save_database(data.database, db);
  std::cout << "wrote " << data.corpus.dialogs.size() << " dialogs to " << o.out << " and the database to " << db
            << "\n";
  return 0;
}

int cmd_pretrain(Options& o, const Run& run) {
  Data data = load_data(o);
  const TrainData td = TrainData::from_corpus(data.corpus, data.database);
  Hyperparams h = hyper_of(o);
  if (o.pretrain_epochs >= 0) h.epochs = o.pretrain_epochs;
  const ModelDims dims = ModelDims::from_corpus(data.corpus, h.embed_dim, h.hidden_dim);
  Rng rng(h.seed);
  DialogModules modules(dims, rng);
  std::vector<ModuleKind> which;
  if (o.module == "all")
    which = {ModuleKind::Nlu, ModuleKind::Dm, ModuleKind::Nlg};
  else
    which = {parse_module_kind(o.module)};
  std::ofstream log(run.path("pretrain.log"));
  const auto train = turn_refs(td.train);
  const auto val = turn_refs(td.val);
  for (ModuleKind k : which) {
    const PretrainResult r = pretrain_module(k, modules, train, val, h);
    for (const auto& e : r.history) {
      const nlohmann::json j{{"module", module_name(k)}, {"epoch", e.epoch}, {"train_loss", e.train_loss},
                             {"val_loss", e.val_loss}};
      log << j.dump() << "\n";
    }
    const std::string path = run.path(std::string(module_name(k)) + ".ckpt");
    save_checkpoint(module_checkpoint(k, modules, dims), path);
    std::cout << module_name(k) << ": best epoch " << r.best_epoch << ", saved " << path << "\n";
  }
  return 0;
}

int cmd_train(Options& o, const Run& run) {
  Data data = load_data(o);
  TrainData td = TrainData::from_corpus(data.corpus, data.database);
  if (o.no_validate) td.val.clear();
  const PipelineConfig p = pipeline_of(o, o.model);
  std::optional<DialogModules> modules;
  if (p.needs_pretraining()) {
    const ModelDims dims = ModelDims::from_corpus(data.corpus, p.hyper.embed_dim, p.hyper.hidden_dim);
    if (!o.modules_dir.empty()) {
      Rng rng(p.hyper.seed);
      modules.emplace(dims, rng);
      for (const char* name : {"nlu", "dm", "nlg"})
        load_module_checkpoint(load_checkpoint((fs::path(o.modules_dir) / (std::string(name) + ".ckpt")).string()),
                               *modules);
    } else {
      std::ofstream plog(run.path("pretrain.log"));
      modules = pretrain_modules(dims, td, p.hyper, p.pretrain_epochs, &plog);
    }
  }
  std::ofstream log(run.path("train.log"));
  TrainHooks hooks{&log, run.dir().string(), !o.no_validate};
  TrainedPipeline t = train_pipeline(p, td, hooks, modules ? &*modules : nullptr);
  if (t.result.history.empty()) save_checkpoint(model_checkpoint(*t.model), run.path("best.ckpt"));
  std::cout << o.model << ": best epoch " << t.result.best_epoch << ", checkpoints in " << run.dir().string() << "\n";
  const EvalReport report = evaluate(*t.model, data.corpus.split("test"), data.corpus, data.database, o.max_len);
  write_report(run, "report-test.json", report, o.model);
  return 0;
}

int cmd_rl_tune(Options& o, const Run& run) {
  Data data = load_data(o);
  auto model = load_any_model(resolve_ckpt(o));
  check_model_fits(*model, data.corpus);
  RlHyperparams h;
  h.lr = o.rl_lr;
  h.epochs = o.rl_epochs;
  h.dialogs_per_batch = o.rl_batch;
  h.sampling_temperature = o.temperature;
  h.baseline = o.baseline == "none" ? RlBaseline::None : RlBaseline::BatchMean;
  h.freeze_modules = !o.unfreeze;
  h.clip_norm = o.clip_norm;
  h.max_len = o.max_len;
  h.seed = o.seed;
  std::ofstream log(run.path("rl.log"));
  TrainHooks hooks{&log, run.dir().string(), false};
  const TrainData td = TrainData::from_corpus(data.corpus, data.database);
  const RlResult r = train_rl(*model, td, h, {}, hooks);
  save_checkpoint(model_checkpoint(*model), run.path("final.ckpt"));
  std::cout << "rl: " << r.history.size() << " epochs";
  if (!r.history.empty()) std::cout << ", last mean reward " << r.history.back().mean_reward;
  std::cout << "\n";
  const EvalReport report = evaluate(*model, data.corpus.split("test"), data.corpus, data.database, o.max_len);
  write_report(run, "rl-report-test.json", report, model->kind() + "+rl");
  return 0;
}

int cmd_eval(Options& o, const Run& run) {
  Data data = load_data(o);
  auto model = load_any_model(resolve_ckpt(o));
  check_model_fits(*model, data.corpus);
  const auto dialogs = data.corpus.split(o.split);
  if (dialogs.empty()) throw std::invalid_argument("split '" + o.split + "' is empty");
  const EvalReport report = evaluate(*model, dialogs, data.corpus, data.database, o.max_len);
  write_report(run, "report-" + o.split + ".json", report, model->kind());
  return 0;
}

int cmd_experiment(Options& o, const Run& run) {
  Data data = load_data(o);
  ExperimentConfig c;
  c.kind = parse_experiment_kind(o.experiment);
  c.fractions = o.fractions;
  c.in_domain = o.in_domain;
  c.ood_count = o.ood_count;
  c.id_count = o.id_count;
  c.min_updates = o.min_updates;
  c.repeats = o.repeats;
  c.seed = o.seed;
  c.models.clear();
  for (const auto& m : o.models) c.models.push_back(pipeline_of(o, m));
  std::ofstream log(run.path("experiment.log"));
  const ExperimentReport report = run_experiment(c, data.corpus, data.database, &log);
  std::ofstream(run.path("experiment.json")) << experiment_to_json(report).dump(2) << "\n";
  const std::string table = experiment_table(report);
  std::ofstream(run.path("experiment.txt")) << table;
  std::cout << table;
  return 0;
}

int cmd_chat(Options& o) {
  Data data = load_data(o);
  auto model = load_any_model(resolve_ckpt(o));
  return run_chat(*model, data.corpus, data.database, std::cin, std::cout, o.max_len);
}

// Writes <kind>.csv and a gnuplot script drawing it.
int cmd_plot(Options& o) {
  require(o.report, "--report");
  std::ifstream in(o.report);
  if (!in) throw std::runtime_error("cannot read " + o.report);
  const nlohmann::json j = nlohmann::json::parse(in);
  const std::string kind = j.at("experiment");
  const fs::path out = o.out.empty() ? fs::path(o.report).parent_path() : fs::path(o.out);
  if (!out.empty()) fs::create_directories(out);
  const fs::path csv = out / (kind + ".csv");
  std::ofstream c(csv);
  c << "model,variant,fraction,bleu,inform,success,combined\n";
  for (const auto& r : j.at("rows")) {
    c << r.at("model").get<std::string>() << "," << r.at("variant").get<std::string>() << ","
      << r.at("fraction").get<double>() << "," << r.at("bleu").get<double>() << "," << r.at("inform").get<double>()
      << "," << r.at("success").get<double>() << "," << r.at("combined").get<double>() << "\n";
  }
  const fs::path gp = out / (kind + ".gp");
  std::ofstream g(gp);
  g << "set datafile separator ','\nset key outside\nset terminal svg size 900,420\n";
  g << "set output '" << kind << ".svg'\n";
  if (j.contains("series")) {
    g << "set logscale x\nset xlabel 'training data (%)'\nset ylabel 'rate (%)'\nset multiplot layout 1,2\n";
    for (const char* metric : {"inform", "success"}) {
      const int col = std::string(metric) == "inform" ? 5 : 6;
      g << "set title '" << metric << "'\nplot ";
      bool first = true;
      for (const auto& [model, _] : j.at("series").items()) {
        g << (first ? "" : ", ") << "'" << csv.filename().string() << "' using ($1 eq '" << model << "' ? $3 : NaN):"
          << col << " with linespoints title '" << model << "'";
        first = false;
      }
      g << "\n";
    }
    g << "unset multiplot\n";
  } else {
    g << "set style data histograms\nset style fill solid\nset ylabel 'combined'\n";
    g << "plot '" << csv.filename().string() << "' every ::1 using 7:xtic(2) title 'combined'\n";
  }
  std::cout << "wrote " << csv.string() << " and " << gp.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured fusion networks for task-oriented dialog"};
  app.set_config("--config", "", "TOML/INI config file ([<command>] sections); flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", STRUCTFUSION_VERSION);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus and database");
  gen->add_option("--out", o.out, "Corpus JSON to write");
  gen->add_option("--db", o.db, "Database JSON to write (default: <out>.db.json)");
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--dialogs", o.dialogs, "Number of dialogs")->check(CLI::PositiveNumber);
  gen->add_option("--entities", o.entities, "Entities per domain")->check(CLI::PositiveNumber);
  gen->add_option("--domains", o.domains, "Restrict goals to these domains")->delimiter(',');
  add_run_dir(gen, o);

  auto* pre = app.add_subcommand("pretrain", "Pre-train the NLU, DM and NLG modules");
  add_corpus(pre, o);
  add_hyper(pre, o);
  pre->add_option("--module", o.module, "Module to train")->check(CLI::IsMember({"all", "nlu", "dm", "nlg"}));
  add_run_dir(pre, o);

  auto* train = app.add_subcommand("train", "Train a model end to end");
  add_corpus(train, o);
  add_model(train, o);
  add_hyper(train, o);
  train->add_option("--modules", o.modules_dir, "Directory with nlu.ckpt, dm.ckpt, nlg.ckpt from pretrain");
  train->add_flag("--no-validate", o.no_validate, "Skip validation (pre-training too) and keep the last epoch");
  train->add_option("--weights", o.weights, "Multitask loss weights: e2e nlu dm nlg")->expected(4)->delimiter(',');
  add_run_dir(train, o);

  auto* rl = app.add_subcommand("rl-tune", "REINFORCE fine-tuning on the Success reward");
  add_corpus(rl, o);
  rl->add_option("--model-ckpt", o.model_ckpt, "Model checkpoint, or best/final inside --run-dir");
  rl->add_option("--seed", o.seed, "Random seed");
  rl->add_option("--rl-lr", o.rl_lr, "Learning rate")->check(CLI::PositiveNumber);
  rl->add_option("--rl-epochs", o.rl_epochs, "Passes over the train split")->check(CLI::NonNegativeNumber);
  rl->add_option("--rl-batch", o.rl_batch, "Dialogs per update")->check(CLI::PositiveNumber);
  rl->add_option("--temperature", o.temperature, "Sampling temperature")->check(CLI::PositiveNumber);
  rl->add_option("--baseline", o.baseline, "Reward baseline")->check(CLI::IsMember({"batch-mean", "none"}));
  rl->add_flag("--unfreeze", o.unfreeze, "Let RL update the NLU/DM/NLG");
  rl->add_option("--clip-norm", o.clip_norm, "Global gradient norm bound")->check(CLI::PositiveNumber);
  rl->add_option("--max-len", o.max_len, "Sampling length limit")->check(CLI::PositiveNumber);
  add_run_dir(rl, o);

  auto* ev = app.add_subcommand("eval", "Score a checkpoint (BLEU, Inform, Success, combined)");
  add_corpus(ev, o);
  ev->add_option("--model-ckpt", o.model_ckpt, "Model or NLG checkpoint, or best/final inside --run-dir")
      ;
  ev->add_option("--split", o.split, "Split to score")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--max-len", o.max_len, "Decoding length limit")->check(CLI::PositiveNumber);
  add_run_dir(ev, o);

  auto* exp = app.add_subcommand("experiment", "Low-data, domain-transfer or belief-ablation study");
  add_corpus(exp, o);
  add_model(exp, o);
  add_hyper(exp, o);
  exp->add_option("--kind", o.experiment, "Experiment")
      ->check(CLI::IsMember({"low-data", "domain-transfer", "belief-ablation"}));
  exp->add_option("--fractions", o.fractions, "Train percentages")->delimiter(',')->check(CLI::Range(0.0, 100.0));
  exp->add_option("--in-domain", o.in_domain, "Target domain for transfer");
  exp->add_option("--ood-count", o.ood_count, "Out-of-domain train dialogs")->check(CLI::NonNegativeNumber);
  exp->add_option("--id-count", o.id_count, "In-domain train dialogs")->check(CLI::NonNegativeNumber);
  exp->add_option("--min-updates", o.min_updates, "Low-data: minimum optimiser steps per run")
      ->check(CLI::NonNegativeNumber);
  exp->add_option("--repeats", o.repeats, "Seeds per run; rows report the mean")->check(CLI::PositiveNumber);
  exp->add_option("--models", o.models, "Compared model kinds")->delimiter(',')->check(CLI::IsMember(model_kinds()));
  add_run_dir(exp, o);

  auto* chat = app.add_subcommand("chat", "Talk to a trained model");
  add_corpus(chat, o);
  chat->add_option("--model-ckpt", o.model_ckpt, "Model checkpoint, or best/final inside --run-dir");
  chat->add_option("--max-len", o.max_len, "Decoding length limit")->check(CLI::PositiveNumber);
  add_run_dir(chat, o);

  auto* plot = app.add_subcommand("plot", "Write CSV and a gnuplot script for an experiment report");
  plot->add_option("--report", o.report, "experiment.json")->check(CLI::ExistingFile);
  plot->add_option("--out", o.out, "Output directory (default: next to the report)");
  add_run_dir(plot, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    CLI::App* sub = app.get_subcommands().front();
    Run run(*sub, o, args);
    if (sub == chat) return cmd_chat(o);
    if (sub == gen) return cmd_gen_data(o);
    if (sub == pre) return cmd_pretrain(o, run);
    if (sub == train) return cmd_train(o, run);
    if (sub == rl) return cmd_rl_tune(o, run);
    if (sub == ev) return cmd_eval(o, run);
    if (sub == exp) return cmd_experiment(o, run);
    if (sub == plot) return cmd_plot(o);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
