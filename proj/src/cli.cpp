#include "scuf/cli.hpp"

#include "scuf/checkpoint.hpp"
#include "scuf/fixture.hpp"
#include "scuf/manifest.hpp"
#include "scuf/plot.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace scuf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_output(const fs::path& path) {
  const char* root = std::getenv(kOutputRootEnv);
  if (path.is_absolute() || root == nullptr || *root == '\0') return path;
  return fs::path(root) / path;
}

void prepare_output_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw OutputExists(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite) throw OutputExists(dir.string() + " is not empty; pass --overwrite to replace it");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

ThresholdCheck check_thresholds(const EvalReport& r, const Thresholds& t) {
  ThresholdCheck c;
  c.psnr_gain = r.psnr_enhanced - r.psnr_dark >= t.psnr_gain_db;
  c.gefu_gain = r.gefu.enhanced_top1 > r.gefu.dark_top1;
  c.fixture_gap = r.gefu.bright_top1 - r.gefu.dark_top1 >= t.fixture_gap_points;
  return c;
}

void write_eval_outputs(const EvalReport& report, const TestSet& test, const ThresholdCheck& check,
                        const fs::path& out_dir) {
  fs::create_directories(out_dir);
  json j = report.to_json();
  j["checks"] = {{"psnr_gain", check.psnr_gain}, {"gefu_gain", check.gefu_gain}, {"fixture_gap", check.fixture_gap}};
  j["pass"] = check.all();
  write_file_atomic(out_dir / "metrics.json", j.dump(2) + "\n");
  std::vector<std::vector<Image>> rows;
  for (std::size_t i = 0; i < std::min<std::size_t>(8, test.names.size()); ++i) {
    rows.push_back({test.low[i], report.enhanced[i], test.gt[i]});
  }
  if (!rows.empty()) save_image(render_grid(rows, 2), out_dir / "before_after.png");
}

Real head_mean(const std::vector<LossReport>& trace, Real LossReport::*field, int window) {
  const std::size_t n = std::min<std::size_t>(trace.size(), window);
  if (n == 0) return 0;
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += trace[i].*field;
  return s / static_cast<Real>(n);
}

Real tail_mean(const std::vector<LossReport>& trace, Real LossReport::*field, int window) {
  const std::size_t n = std::min<std::size_t>(trace.size(), window);
  if (n == 0) return 0;
  Real s = 0;
  for (std::size_t i = trace.size() - n; i < trace.size(); ++i) s += trace[i].*field;
  return s / static_cast<Real>(n);
}

void write_loss_plots(const std::vector<LossReport>& trace, const fs::path& dir) {
  fs::create_directories(dir);
  auto column = [&](Real LossReport::*f) {
    std::vector<Real> v;
    for (const LossReport& r : trace) v.push_back(r.*f);
    return moving_average(v, 25);
  };
  save_line_plot({{"cycle", column(&LossReport::cycle)},
                  {"caption", column(&LossReport::caption)},
                  {"reflectance", column(&LossReport::reflectance)},
                  {"identity", column(&LossReport::identity)}},
                 "generator terms (moving avg 25)", dir / "loss_terms.png");
  save_line_plot({{"gan_g", column(&LossReport::gan_generator)}, {"gan_d", column(&LossReport::gan_discriminator)}},
                 "adversarial terms (moving avg 25)", dir / "gan_terms.png");
  save_line_plot({{"total", column(&LossReport::total)}}, "total objective (moving avg 25)", dir / "total.png");
}

std::string AblationCell::name() const {
  return to_string(mode) + "_cc-" + (caption_consistency ? "on" : "off") + "_rc-" +
         (reflectance_consistency ? "on" : "off");
}

std::vector<AblationCell> ablation_matrix(const std::vector<AdapterMode>& modes, const std::vector<bool>& cc,
                                          const std::vector<bool>& rc) {
  if (modes.empty() || cc.empty() || rc.empty()) throw ConfigError("ablation: every dimension needs a value");
  std::vector<AblationCell> out;
  for (AdapterMode m : modes)
    for (bool c : cc)
      for (bool r : rc) out.push_back({m, c, r});
  return out;
}

namespace {

std::vector<Real> read_trace_column(const fs::path& csv, const std::string& name) {
  std::ifstream in(csv);
  if (!in) throw DataError("missing loss trace " + csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  const auto pos = std::find(header.begin(), header.end(), name);
  if (pos == header.end()) throw DataError("loss trace lacks column " + name);
  const std::size_t idx = pos - header.begin();
  std::vector<Real> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i <= idx; ++i) std::getline(ss, cell, ',');
    out.push_back(std::stod(cell));
  }
  return out;
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.psnr_dark = j.at("psnr_dark");
  r.psnr_enhanced = j.at("psnr_enhanced");
  r.ssim_dark = j.at("ssim_dark");
  r.ssim_enhanced = j.at("ssim_enhanced");
  r.gefu.bright_top1 = j.at("gefu").at("bright_top1");
  r.gefu.dark_top1 = j.at("gefu").at("dark_top1");
  r.gefu.enhanced_top1 = j.at("gefu").at("enhanced_top1");
  r.gefu.gain = j.at("gefu").at("gain");
  r.classifier_fingerprint = j.at("classifier_fingerprint");
  r.per_image = j.at("per_image");
  return r;
}

Real mean_of(const std::vector<Real>& v, std::size_t begin, std::size_t end) {
  Real s = 0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return end > begin ? s / static_cast<Real>(end - begin) : 0;
}

}  // namespace

std::vector<AblationRow> run_ablation(const TrainerConfig& base, const std::vector<AblationCell>& cells,
                                      const fs::path& fixture_root, const fs::path& out_dir,
                                      ToyClassifier& classifier) {
  const UnpairedDataset data = UnpairedDataset::load(fixture_root / "train");
  const TestSet test = load_test_set(fixture_root / "test");
  std::vector<AblationRow> rows;
  for (const AblationCell& cell : cells) {
    TrainerConfig cfg = base;
    cfg.adapter_mode = cell.mode;
    cfg.caption_consistency = cell.caption_consistency;
    cfg.reflectance_consistency = cell.reflectance_consistency;
    cfg.validate();
    const fs::path dir = out_dir / "cells" / cell.name();
    AblationRow row;
    row.cell = cell;
    bool reused = false;
    if (fs::exists(dir / "metrics.json")) {
      std::ifstream in(dir / "metrics.json");
      json j;
      in >> j;
      if (j.value("config_hash", "") == cfg.hash() &&
          j.value("classifier_fingerprint", "") == classifier.fingerprint()) {
        row.report = report_from_json(j);
        row.cycle_curve = read_trace_column(dir / "loss_trace.csv", "cycle");
        reused = true;
      }
    }
    if (!reused) {
      if (fs::exists(dir)) fs::remove_all(dir);
      Backbone backbone(cfg.backbone());
      std::printf("[ablate] %s\n", cell.name().c_str());
      std::fflush(stdout);
      const TrainResult result = train(cfg, data, dir, &backbone, {}, "ablate " + cell.name());
      row.report = evaluate(backbone, cfg, test, classifier);
      json j = row.report.to_json();
      j["config_hash"] = cfg.hash();
      j["cell"] = cell.name();
      write_file_atomic(dir / "metrics.json", j.dump(2) + "\n");
      write_loss_plots(result.trace, dir / "plots");
      for (const LossReport& r : result.trace) row.cycle_curve.push_back(r.cycle);
    }
    const std::size_t n = row.cycle_curve.size();
    const std::size_t w = std::min<std::size_t>(50, n);
    row.cycle_first50 = mean_of(row.cycle_curve, 0, w);
    row.cycle_last50 = mean_of(row.cycle_curve, n - w, n);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_outputs(const std::vector<AblationRow>& rows, const fs::path& out_dir) {
  fs::create_directories(out_dir / "plots");
  std::ostringstream csv, md;
  csv << "mode,caption_consistency,reflectance_consistency,psnr_dark,psnr_enhanced,ssim_dark,ssim_enhanced,"
         "top1_bright,top1_dark,top1_enhanced,cycle_first50,cycle_last50\n";
  md << "| mode | CC | RC | PSNR dark | PSNR enhanced | SSIM enhanced | Top-1 dark | Top-1 enhanced | cycle first50 | "
        "cycle last50 |\n|---|---|---|---|---|---|---|---|---|---|\n";
  char buf[512];
  std::vector<Series> curves;
  for (const AblationRow& r : rows) {
    const EvalReport& e = r.report;
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%.6f,%.6f\n",
                  to_string(r.cell.mode).c_str(), r.cell.caption_consistency ? 1 : 0,
                  r.cell.reflectance_consistency ? 1 : 0, e.psnr_dark, e.psnr_enhanced, e.ssim_dark, e.ssim_enhanced,
                  e.gefu.bright_top1, e.gefu.dark_top1, e.gefu.enhanced_top1, r.cycle_first50, r.cycle_last50);
    csv << buf;
    std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %.2f | %.2f | %.3f | %.1f | %.1f | %.4f | %.4f |\n",
                  to_string(r.cell.mode).c_str(), r.cell.caption_consistency ? "on" : "off",
                  r.cell.reflectance_consistency ? "on" : "off", e.psnr_dark, e.psnr_enhanced, e.ssim_enhanced,
                  e.gefu.dark_top1, e.gefu.enhanced_top1, r.cycle_first50, r.cycle_last50);
    md << buf;
    curves.push_back({r.cell.name(), moving_average(r.cycle_curve, 25)});
  }
  write_file_atomic(out_dir / "ablation.csv", csv.str());
  write_file_atomic(out_dir / "ablation.md", md.str());
  save_line_plot(curves, "cycle loss per cell (moving avg 25)", out_dir / "plots" / "cycle_loss.png");
}

namespace {

std::string join_args(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
};

void add_config_flags(CLI::App* app, ConfigFlags& flags) {
  app->add_option("--config", flags.config_path, "key = value config file overriding the defaults");
  for (const std::string& key : TrainerConfig::field_names()) {
    app->add_option("--" + key, flags.values[key], "override " + key);
  }
  app->add_option("--set", flags.sets, "extra key=value override (repeatable)");
}

TrainerConfig resolve_config(const ConfigFlags& flags) {
  TrainerConfig cfg = flags.config_path.empty() ? TrainerConfig{} : TrainerConfig::load(flags.config_path);
  for (const auto& [key, value] : flags.values) {
    if (!value.empty()) cfg.set(key, value);
  }
  for (const std::string& kv : flags.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

fs::path training_root(const fs::path& data) {
  if (!fs::exists(data / "low") && fs::exists(data / "train" / "low")) return data / "train";
  return data;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<bool> parse_toggles(const std::string& s, const std::string& name) {
  std::vector<bool> out;
  for (const std::string& v : split_list(s)) {
    if (v == "on") {
      out.push_back(true);
    } else if (v == "off") {
      out.push_back(false);
    } else {
      throw ConfigError("--" + name + " accepts a comma list of on/off, got '" + v + "'");
    }
  }
  return out;
}

int cmd_fixture(const fs::path& out, const FixtureOptions& opts, bool overwrite) {
  const fs::path dir = resolve_output(out);
  prepare_output_dir(dir, overwrite);
  const FixtureSummary s = write_fixture(dir, opts);
  std::printf("fixture written to %s: %d low, %d normal, %d test, %d classifier\n", dir.c_str(), s.low, s.normal,
              s.test, s.classifier);
  return ok;
}

int cmd_train(const TrainerConfig& cfg, const fs::path& data_dir, const fs::path& out, bool overwrite,
              const std::string& command_line) {
  const UnpairedDataset data = UnpairedDataset::load(training_root(data_dir));
  const fs::path dir = resolve_output(out);
  prepare_output_dir(dir, overwrite);
  const TrainResult result = train(cfg, data, dir, nullptr, [](long step, const LossReport& r) {
    if (step % 50 == 0) {
      std::printf("step %5ld  total %.4f  cycle %.4f  gan_g %.4f  gan_d %.4f\n", step, r.total, r.cycle,
                  r.gan_generator, r.gan_discriminator);
      std::fflush(stdout);
    }
  }, command_line);
  write_loss_plots(result.trace, dir / "plots");
  std::printf("final checkpoint: %s\n", result.final_checkpoint.c_str());
  return ok;
}

int cmd_enhance(const fs::path& checkpoint, const fs::path& input, const fs::path& out, const std::string& prompt,
                bool overwrite, const std::string& command_line) {
  TrainerConfig cfg;
  auto backbone = open_checkpoint(checkpoint, &cfg);
  if (!prompt.empty()) cfg.text_prompt_lighten = prompt;
  std::vector<fs::path> inputs;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && e.path().extension() == ".png") inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
  } else if (fs::exists(input)) {
    inputs.push_back(input);
  }
  if (inputs.empty()) throw DataError("no PNG inputs at " + input.string());
  const fs::path dir = resolve_output(out);
  prepare_output_dir(dir, overwrite);
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.config_hash = cfg.hash();
  manifest.seed = cfg.seed;
  manifest.extra["checkpoint"] = checkpoint.string();
  manifest.start(dir / "run_manifest.json");
  for (const fs::path& p : inputs) save_image(enhance(*backbone, load_image(p), cfg), dir / p.filename());
  manifest.extra["images"] = inputs.size();
  manifest.finish(dir / "run_manifest.json", "completed");
  std::printf("enhanced %zu image(s) into %s\n", inputs.size(), dir.c_str());
  return ok;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& fixture, const fs::path& out, bool overwrite,
             const std::string& command_line) {
  TrainerConfig cfg;
  auto backbone = open_checkpoint(checkpoint, &cfg);
  const TestSet test = load_test_set(fixture / "test");
  const fs::path dir = resolve_output(out);
  prepare_output_dir(dir, overwrite);
  ToyClassifier classifier = train_toy_classifier(fixture / "classifier");
  const EvalReport report = evaluate(*backbone, cfg, test, classifier);
  const ThresholdCheck check = check_thresholds(report);
  write_eval_outputs(report, test, check, dir);
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.config_hash = cfg.hash();
  manifest.seed = cfg.seed;
  manifest.extra["checkpoint"] = checkpoint.string();
  manifest.extra["pass"] = check.all();
  manifest.start(dir / "run_manifest.json");
  manifest.finish(dir / "run_manifest.json", check.all() ? "pass" : "threshold_unmet");
  std::printf("PSNR dark %.2f dB, enhanced %.2f dB (gain %.2f)\n", report.psnr_dark, report.psnr_enhanced,
              report.psnr_enhanced - report.psnr_dark);
  std::printf("SSIM dark %.4f, enhanced %.4f\n", report.ssim_dark, report.ssim_enhanced);
  std::printf("Top-1 bright %.2f, dark %.2f, enhanced %.2f\n", report.gefu.bright_top1, report.gefu.dark_top1,
              report.gefu.enhanced_top1);
  return check.all() ? ok : threshold_unmet;
}

int cmd_ablate(const TrainerConfig& cfg, const fs::path& fixture, const fs::path& out, const std::string& modes,
               const std::string& cc, const std::string& rc, bool overwrite, bool resume) {
  std::vector<AdapterMode> mode_list;
  for (const std::string& m : split_list(modes)) mode_list.push_back(parse_adapter_mode(m));
  const auto cells = ablation_matrix(mode_list, parse_toggles(cc, "cc"), parse_toggles(rc, "rc"));
  const fs::path dir = resolve_output(out);
  if (!resume) prepare_output_dir(dir, overwrite);
  ToyClassifier classifier = train_toy_classifier(fixture / "classifier");
  const auto rows = run_ablation(cfg, cells, fixture, dir, classifier);
  write_ablation_outputs(rows, dir);
  std::printf("%s", [&] {
    std::ifstream in(dir / "ablation.md");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }().c_str());
  const AblationRow* ca = nullptr;
  const AblationRow* ip = nullptr;
  for (const AblationRow& r : rows) {
    if (!r.cell.caption_consistency || !r.cell.reflectance_consistency) continue;
    if (r.cell.mode == AdapterMode::cycle_attention) ca = &r;
    if (r.cell.mode == AdapterMode::ip_adapter) ip = &r;
  }
  if (ca && ip) {
    const Real diff = ca->report.gefu.enhanced_top1 - ip->report.gefu.enhanced_top1;
    if (diff < 0) {
      std::printf("warning: cycle_attention Top-1 %.2f is below ip_adapter Top-1 %.2f\n",
                  ca->report.gefu.enhanced_top1, ip->report.gefu.enhanced_top1);
    }
  }
  return ok;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Unsupervised low-light enhancement with cycle generation and a frozen-classifier test harness"};
  app.require_subcommand(1);
  const std::string command_line = join_args(argc, argv);

  bool overwrite = false;
  std::string out;

  auto* fixture = app.add_subcommand("fixture", "Generate the synthetic shape fixture");
  FixtureOptions fx;
  fixture->add_option("--out", out, "output directory")->required();
  fixture->add_option("--seed", fx.seed, "fixture seed");
  fixture->add_option("--size", fx.size, "image side in pixels");
  fixture->add_option("--pairs", fx.train_pairs, "images per unpaired training side");
  fixture->add_option("--test-count", fx.test_count, "held-out paired images");
  fixture->add_option("--classifier-count", fx.classifier_count, "bright images for the downstream classifier");
  fixture->add_option("--gamma-min", fx.gamma_min, "lower darkening gamma");
  fixture->add_option("--gamma-max", fx.gamma_max, "upper darkening gamma");
  fixture->add_option("--noise-sigma", fx.noise_sigma, "Gaussian noise added after darkening");
  fixture->add_flag("--overwrite", overwrite, "replace a non-empty output directory");

  auto* train_cmd = app.add_subcommand("train", "Fine-tune the enhancer on unpaired data");
  ConfigFlags train_flags;
  std::string data;
  train_cmd->add_option("--data", data, "fixture root or directory with low/ and normal/")->required();
  train_cmd->add_option("--out", out, "run directory")->required();
  train_cmd->add_flag("--overwrite", overwrite, "replace a non-empty run directory");
  add_config_flags(train_cmd, train_flags);

  auto* enhance_cmd = app.add_subcommand("enhance", "Enhance images with a trained checkpoint");
  std::string checkpoint, input, prompt;
  enhance_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  enhance_cmd->add_option("--input", input, "PNG file or directory")->required();
  enhance_cmd->add_option("--out", out, "output directory")->required();
  enhance_cmd->add_option("--prompt", prompt, "lighten text prompt (defaults to the training prompt)");
  enhance_cmd->add_flag("--overwrite", overwrite, "replace a non-empty output directory");

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on the held-out fixture split");
  std::string fixture_dir;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--fixture", fixture_dir, "fixture root")->required();
  eval_cmd->add_option("--out", out, "report directory")->required();
  eval_cmd->add_flag("--overwrite", overwrite, "replace a non-empty report directory");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score the adapter/consistency matrix");
  ConfigFlags ablate_flags;
  std::string modes = "text_only,original,ip_adapter,cycle_attention", cc = "on,off", rc = "on,off";
  bool resume = false;
  ablate_cmd->add_option("--fixture", fixture_dir, "fixture root")->required();
  ablate_cmd->add_option("--out", out, "ablation directory")->required();
  ablate_cmd->add_option("--modes", modes, "comma list of adapter modes");
  ablate_cmd->add_option("--cc", cc, "caption consistency toggles, e.g. on,off");
  ablate_cmd->add_option("--rc", rc, "reflectance consistency toggles, e.g. on,off");
  ablate_cmd->add_flag("--overwrite", overwrite, "replace a non-empty ablation directory");
  ablate_cmd->add_flag("--resume", resume, "keep finished cells in an existing ablation directory");
  add_config_flags(ablate_cmd, ablate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*fixture) return cmd_fixture(out, fx, overwrite);
    if (*train_cmd) return cmd_train(resolve_config(train_flags), data, out, overwrite, command_line);
    if (*enhance_cmd) return cmd_enhance(checkpoint, input, out, prompt, overwrite, command_line);
    if (*eval_cmd) return cmd_eval(checkpoint, fixture_dir, out, overwrite, command_line);
    if (*ablate_cmd) {
      return cmd_ablate(resolve_config(ablate_flags), fixture_dir, out, modes, cc, rc, overwrite, resume);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return config_error;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return numeric_failure;
  } catch (const OutputExists& e) {
    std::fprintf(stderr, "refusing to overwrite: %s\n", e.what());
    return output_exists;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return data_error;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return data_error;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return failure;
  }
  return failure;
}

}  // namespace scuf::cli
