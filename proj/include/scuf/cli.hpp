#pragma once

#include "scuf/config.hpp"
#include "scuf/evalkit.hpp"
#include "scuf/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace scuf::cli {

enum ExitCode : int {
  ok = 0,
  failure = 1,
  config_error = 2,
  data_error = 3,
  numeric_failure = 4,
  threshold_unmet = 5,
  output_exists = 6,
};

// Relative output paths resolve against this variable when it is set.
inline constexpr const char* kOutputRootEnv = "SCUF_OUTPUT_ROOT";

std::filesystem::path resolve_output(const std::filesystem::path& path);

// Refuses a non-empty directory unless overwrite is set, in which case it is cleared.
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

class OutputExists : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Thresholds {
  Real psnr_gain_db = 3.0;
  Real fixture_gap_points = 20.0;
};

struct ThresholdCheck {
  bool psnr_gain = false;
  bool gefu_gain = false;
  bool fixture_gap = false;
  bool all() const { return psnr_gain && gefu_gain && fixture_gap; }
};

ThresholdCheck check_thresholds(const EvalReport& report, const Thresholds& t = {});

// Writes metrics.json and a before/after grid into out_dir.
void write_eval_outputs(const EvalReport& report, const TestSet& test, const ThresholdCheck& check,
                        const std::filesystem::path& out_dir);

// Loss-curve PNGs for one trace.
void write_loss_plots(const std::vector<LossReport>& trace, const std::filesystem::path& dir);

struct AblationCell {
  AdapterMode mode = AdapterMode::cycle_attention;
  bool caption_consistency = true;
  bool reflectance_consistency = true;
  std::string name() const;
};

struct AblationRow {
  AblationCell cell;
  EvalReport report;
  Real cycle_first50 = 0;
  Real cycle_last50 = 0;
  std::vector<Real> cycle_curve;
};

std::vector<AblationCell> ablation_matrix(const std::vector<AdapterMode>& modes, const std::vector<bool>& cc,
                                          const std::vector<bool>& rc);

// Trains and evaluates every cell with the shared seed. Each cell persists its own directory with
// metrics.json; cells whose metrics already exist are reloaded rather than retrained.
std::vector<AblationRow> run_ablation(const TrainerConfig& base, const std::vector<AblationCell>& cells,
                                      const std::filesystem::path& fixture_root, const std::filesystem::path& out_dir,
                                      ToyClassifier& classifier);

void write_ablation_outputs(const std::vector<AblationRow>& rows, const std::filesystem::path& out_dir);

// Mean of the first and last `window` entries of one trace column.
Real head_mean(const std::vector<LossReport>& trace, Real LossReport::*field, int window);
Real tail_mean(const std::vector<LossReport>& trace, Real LossReport::*field, int window);

// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace scuf::cli
