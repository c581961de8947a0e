#include "ppn_cli/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

namespace ppn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

LogLevel log_level_from_env() {
  const char* v = std::getenv("PPN_LOG");
  if (!v) return LogLevel::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::Quiet;
  if (s == "debug" || s == "2") return LogLevel::Debug;
  return LogLevel::Info;
}

namespace {

struct Loaded {
  CategoryGraph graph;
  Dataset data;
};

Loaded load_data_dir(const fs::path& dir) {
  Loaded l{load_graph(dir / "graph.json"), {}};
  l.data = load_dataset(dir / "data.jsonl", l.graph);
  return l;
}

bool info(const Console& c) { return c.level != LogLevel::Quiet; }

std::string percent(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * x;
  return os.str();
}

}  // namespace

std::string flag_name(const std::string& key) {
  std::string flag = key;
  for (char& c : flag) {
    if (c == '.' || c == '_') c = '-';
  }
  return flag;
}

void cmd_gen(const RunConfig& config, const fs::path& out_dir, Console& console) {
  const GeneratedData gen = generate(config.gen);
  fs::create_directories(out_dir);
  save_graph(gen.graph, out_dir / "graph.json");
  save_dataset(gen.data, out_dir / "data.jsonl");

  std::ostream& os = console.out;
  os << "level  train_cls  test_cls  weak_cls  train_samples  test_samples  weak_samples\n";
  for (const LevelSummary& s : summarize_levels(gen.graph, gen.data)) {
    os << std::setw(5) << s.level << std::setw(11) << s.train_classes << std::setw(10) << s.test_classes
       << std::setw(10) << s.weak_classes << std::setw(15) << s.train_samples << std::setw(14) << s.test_samples
       << std::setw(14) << s.weak_samples << '\n';
  }
  if (info(console)) {
    for (std::size_t j = 0; j < gen.weak_drawn_kept.size(); ++j) {
      const auto [drawn, kept] = gen.weak_drawn_kept[j];
      if (drawn) console.log << "level " << j + 1 << ": kept " << kept << " of " << drawn << " weak candidates\n";
    }
    console.log << "wrote " << (out_dir / "graph.json").string() << " and " << (out_dir / "data.jsonl").string()
                << '\n';
  }
}

void cmd_train(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir,
               const std::optional<fs::path>& resume, Console& console) {
  const Loaded in = load_data_dir(data_dir);
  TrainConfig tc = config.train;
  tc.backbone.input_dim = in.data.input_dim();
  if (tc.backbone.layers == 0) tc.backbone.output_dim = tc.backbone.input_dim;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }

  TrainState state = resume ? from_checkpoint(load_checkpoint(*resume), in.data.input_dim()) : init_training(tc);
  if (resume && info(console)) {
    console.log << "resuming at iteration " << state.iteration << " (lr " << learning_rate(state.iteration, tc.schedule)
                << ")\n";
  }

  fs::create_directories(out_dir);
  const fs::path log_path = out_dir / "train_log.jsonl";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open " + log_path.string());

  TrainHooks hooks;
  hooks.on_iteration = [&](const IterationLog& e) {
    log << json{{"iter", e.iteration},
                {"loss", e.loss},
                {"lr", e.lr},
                {"n_levels", e.n_levels},
                {"subgraph_nodes", e.subgraph_nodes}}
                   .dump()
        << '\n';
    const bool every = console.level == LogLevel::Debug || (info(console) && e.iteration % 100 == 0);
    if (every) console.log << "iter " << e.iteration << " loss " << e.loss << " lr " << e.lr << '\n';
  };
  hooks.on_checkpoint = [&](const TrainState& s) {
    save_checkpoint(to_checkpoint(s), out_dir / "checkpoint.json");
    log.flush();
  };

  const TrainResult result = train(tc, in.data, in.graph, std::move(state), hooks);
  save_checkpoint(to_checkpoint(result.state), out_dir / "checkpoint.json");
  write_file_atomic(out_dir / "config.json", to_json(config).dump(2) + "\n");
  if (!log.flush()) throw std::runtime_error("failed writing " + log_path.string());
  console.out << "trained to iteration " << result.state.iteration << ", lambda "
              << result.state.model.propagation.lambda << ", checkpoint " << (out_dir / "checkpoint.json").string()
              << '\n';
}

EvalReport cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& data_dir,
                    const std::optional<fs::path>& report_path, Console& console) {
  const Loaded in = load_data_dir(data_dir);
  const TrainState state = from_checkpoint(load_checkpoint(checkpoint), in.data.input_dim());
  const EvalReport report = evaluate(state.model, in.graph, in.data, config.eval);
  const json doc = report.to_json();
  if (report_path) write_file_atomic(*report_path, doc.dump(2) + "\n");
  console.out << setting_name(config.eval.setting) << ' ' << config.eval.n_way << "-way " << config.eval.k_shot
              << "-shot over " << config.eval.n_tasks << " tasks: " << percent(report.summary.mean) << " +- "
              << percent(report.summary.ci95) << " %\n";
  return report;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& config, const fs::path& data_dir,
                                const std::optional<fs::path>& checkpoint, const std::optional<fs::path>& csv_path,
                                Console& console) {
  for (double w : config.sweep_weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("sweep weight " + std::to_string(w) + " is outside [0, 1]");
  }
  const Loaded in = load_data_dir(data_dir);
  std::optional<TrainState> fixed;
  if (checkpoint) fixed = from_checkpoint(load_checkpoint(*checkpoint), in.data.input_dim());

  std::vector<SweepRow> rows;
  for (double w : config.sweep_weights) {
    Model model;
    if (fixed) {
      model = fixed->model;
      model.propagation.lambda = 1.0 - w;
    } else {
      TrainConfig tc = config.train;
      tc.backbone.input_dim = in.data.input_dim();
      if (tc.backbone.layers == 0) tc.backbone.output_dim = tc.backbone.input_dim;
      tc.lambda = 1.0 - w;
      if (info(console)) console.log << "training with 1 - lambda = " << w << '\n';
      model = train(tc, in.data, in.graph, init_training(tc)).state.model;
    }
    rows.push_back({w, evaluate(model, in.graph, in.data, config.eval).summary});
    if (info(console)) console.log << "1 - lambda = " << w << ": " << percent(rows.back().summary.mean) << " %\n";
  }

  std::ostringstream csv;
  csv << "weight,lambda,mean_acc,ci95\n" << std::setprecision(17);
  for (const SweepRow& r : rows) csv << r.weight << ',' << 1.0 - r.weight << ',' << r.summary.mean << ',' << r.summary.ci95 << '\n';
  if (csv_path) write_file_atomic(*csv_path, csv.str());
  console.out << csv.str();
  return rows;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototype propagation networks on synthetic class hierarchies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ppn 0.1.0");

  std::string config_path;
  std::map<std::string, std::string> overrides;
  const auto keys = config_keys();
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "RunConfig JSON file")->check(CLI::ExistingFile);
    for (const std::string& key : keys) {
      sub->add_option_function<std::string>(
             "--" + flag_name(key), [&overrides, key](const std::string& v) { overrides[key] = v; },
             "overrides " + key)
          ->group("Config overrides");
    }
  };

  std::string out_dir, data_dir, checkpoint, report, csv, resume;
  bool retrain = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic hierarchy and dataset");
  common(gen);
  gen->add_option("-o,--out", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  common(tr);
  tr->add_option("-d,--data", data_dir, "directory with graph.json and data.jsonl")->required();
  tr->add_option("-o,--out", out_dir, "output directory")->required();
  tr->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on test tasks");
  common(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("-d,--data", data_dir, "directory with graph.json and data.jsonl")->required();
  ev->add_option("-o,--out", report, "report JSON path");

  auto* sw = app.add_subcommand("sweep", "accuracy as a function of the parent weight 1 - lambda");
  common(sw);
  sw->add_option("-d,--data", data_dir, "directory with graph.json and data.jsonl")->required();
  auto* sw_ckpt = sw->add_option("--checkpoint", checkpoint, "evaluate one checkpoint at every weight")
                      ->check(CLI::ExistingFile);
  auto* sw_retrain = sw->add_flag("--retrain", retrain, "train a model per weight");
  sw_ckpt->excludes(sw_retrain);
  sw->add_option("-o,--out", csv, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  Console console{out, err, log_level_from_env()};
  RunConfig config;
  try {
    json doc = config_path.empty() ? json::object() : read_json_file(config_path);
    for (const auto& [key, text] : overrides) apply_override(doc, key, text);
    config = config_from_json(doc);
    if (sw->parsed() && checkpoint.empty() && !retrain) {
      throw ConfigError("sweep needs --checkpoint or --retrain");
    }
  } catch (const std::exception& e) {
    // Unreadable files, malformed JSON and invalid values all land here.
    err << "config error: " << e.what() << '\n';
    return 1;
  }

  auto opt = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : std::optional<fs::path>{s}; };
  try {
    if (gen->parsed()) cmd_gen(config, out_dir, console);
    if (tr->parsed()) cmd_train(config, data_dir, out_dir, opt(resume), console);
    if (ev->parsed()) cmd_eval(config, checkpoint, data_dir, opt(report), console);
    if (sw->parsed()) cmd_sweep(config, data_dir, opt(checkpoint), opt(csv), console);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace ppn::cli
