#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ppn_cli/config.hpp"

namespace ppn::cli {

/// Verbosity from the PPN_LOG environment variable: quiet, info (default) or debug.
enum class LogLevel { Quiet, Info, Debug };
LogLevel log_level_from_env();

struct Console {
  std::ostream& out;
  std::ostream& log;
  LogLevel level = LogLevel::Info;
};

/// Writes graph.json and data.jsonl into `out_dir` and prints a per-level summary.
void cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir, Console& console);

/// Trains on `data_dir`, writing checkpoint.json and train_log.jsonl into
/// `out_dir`. With `resume`, continues from that checkpoint's iteration and
/// appends to the log.
void cmd_train(const RunConfig& config, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
               const std::optional<std::filesystem::path>& resume, Console& console);

/// Prints the report and, when `report_path` is set, writes it as JSON.
EvalReport cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& data_dir, const std::optional<std::filesystem::path>& report_path,
                    Console& console);

struct SweepRow {
  double weight = 0.0;
  AccuracySummary summary;
};

/// Accuracy per parent weight 1 - lambda. Without a checkpoint a model is
/// trained for every weight; with one, only the blending weight changes.
std::vector<SweepRow> cmd_sweep(const RunConfig& config, const std::filesystem::path& data_dir,
                                const std::optional<std::filesystem::path>& checkpoint,
                                const std::optional<std::filesystem::path>& csv_path, Console& console);

/// Command-line flag of a config key: "train.batch_per_class" becomes
/// "train-batch-per-class". (CLI11 reads a dotted flag as an option of a
/// subcommand, so the key itself cannot be the flag.)
std::string flag_name(const std::string& key);

/// Full command line; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ppn::cli
