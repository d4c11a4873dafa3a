// Command-line front end: dataset synthesis, split manifests, training,
// evaluation, ablation grids, gate-quantile sweeps, and prediction rendering.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "CLI11.hpp"
#include "json.hpp"
#include "sscd/config.hpp"
#include "sscd/data.hpp"
#include "sscd/engine.hpp"
#include "sscd/image.hpp"
#include "sscd/metrics.hpp"
#include "sscd/step_graph.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad inputs (missing files, malformed configs, empty splits) exit 1;
// anything else that throws is an internal error and exits 2.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

void add_globals(CLI::App* sub, GlobalArgs& g) {
  sub->add_option("--config", g.config_path, "Experiment config JSON");
  sub->add_option("--out-dir", g.out_dir, "Output directory")
      ->capture_default_str();
  sub->add_option("--seed", g.seed, "Override the config seed");
  sub->add_flag("--deterministic", g.deterministic,
                "Force single-stream deterministic execution");
}

sscd::ExperimentConfig load_config(const GlobalArgs& g) {
  sscd::ExperimentConfig cfg;
  if (!g.config_path.empty()) {
    try {
      cfg = sscd::ExperimentConfig::load(g.config_path);
    } catch (const std::exception& e) {
      throw UserError("config " + g.config_path + ": " + e.what());
    }
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.deterministic) cfg.deterministic = true;
  return cfg;
}

void ensure_out_dir(const GlobalArgs& g) {
  std::error_code ec;
  fs::create_directories(g.out_dir, ec);
  if (ec) throw UserError("cannot create out dir " + g.out_dir);
}

sscd::Dataset load_dataset(const std::string& root) {
  sscd::IngestReport report;
  sscd::Dataset ds;
  try {
    ds = sscd::ingest(root, &report);
  } catch (const std::exception& e) {
    throw UserError("dataset " + root + ": " + e.what());
  }
  for (const auto& r : report.rejects)
    std::cerr << "warning: skipping " << r.id << ": " << r.reason << "\n";
  if (ds.samples.empty()) throw UserError("dataset " + root + " is empty");
  return ds;
}

sscd::SplitManifest load_manifest(const std::string& path) {
  try {
    return sscd::SplitManifest::load(path);
  } catch (const std::exception& e) {
    throw UserError("split manifest " + path + ": " + e.what());
  }
}

std::vector<const sscd::ImagePair*> collect(const sscd::Dataset& ds,
                                            const std::vector<std::string>& ids) {
  std::vector<const sscd::ImagePair*> out;
  for (const auto& id : ids) {
    const auto* s = ds.find(id);
    if (!s) throw UserError("manifest id not found in dataset: " + id);
    out.push_back(s);
  }
  return out;
}

const std::vector<std::string>& subset_ids(const sscd::SplitManifest& m,
                                           const std::string& name) {
  if (name == "val") return m.val_ids;
  if (name == "test") return m.test_ids;
  if (name == "labeled") return m.labeled_ids;
  if (name == "unlabeled") return m.unlabeled_ids;
  throw UserError("unknown subset '" + name +
                  "' (expected val|test|labeled|unlabeled)");
}

json metrics_json(const sscd::EvalMetrics& m) {
  return json{{"iou", m.iou},       {"oa", m.oa},       {"tp", m.counts.tp},
              {"tn", m.counts.tn},  {"fp", m.counts.fp}, {"fn", m.counts.fn}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UserError("cannot write " + path);
  f << text;
}

std::string format_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      if (c + 1 < row.size()) out << "  ";
    }
    out << "\n";
  }
  return out.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_csv(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ",";
      out << csv_escape(row[c]);
    }
    out << "\n";
  }
  return out.str();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

sscd::ChangeDetector<float> make_model(const sscd::ExperimentConfig& cfg) {
  sscd::BackboneConfig bc;
  bc.kind = cfg.backbone;
  bc.init_seed = cfg.seed;
  return sscd::ChangeDetector<float>(bc, cfg.k);
}

void load_weights(sscd::ChangeDetector<float>& model, const std::string& path) {
  try {
    sscd::load_checkpoint(model, path);
  } catch (const std::exception& e) {
    throw UserError(std::string("checkpoint: ") + e.what());
  }
}

struct RunRow {
  std::string variant;
  std::uint64_t seed = 0;
  sscd::TrainResult result;
};

json run_row_json(const RunRow& r) {
  return json{{"variant", r.variant},
              {"seed", r.seed},
              {"best_epoch", r.result.best_epoch},
              {"best_val", metrics_json(r.result.best_val)},
              {"test", metrics_json(r.result.test)},
              {"wall_seconds", r.result.wall_seconds}};
}

sscd::TrainResult run_training(sscd::ExperimentConfig cfg,
                               const sscd::Dataset& ds,
                               const sscd::SplitManifest& manifest,
                               int steps_per_epoch, const std::string& out_dir) {
  sscd::Trainer trainer(cfg);
  if (steps_per_epoch > 0)
    trainer.set_steps_per_epoch_override(steps_per_epoch);
  return trainer.train(ds, manifest, out_dir);
}

// ---------------------------------------------------------------- verbs ---

int run_synth(const GlobalArgs& g, const sscd::SynthParams& params) {
  ensure_out_dir(g);
  const std::uint64_t seed = g.seed.value_or(0);
  auto ds = sscd::synth_generate(params, seed);
  sscd::write_dataset(ds, g.out_dir);
  std::cout << "wrote " << ds.samples.size() << " pairs (size " << params.size
            << "x" << params.size << ", seed " << seed << ") to " << g.out_dir
            << "\n";
  return 0;
}

int run_split(const GlobalArgs& g, const std::string& data_root, double ratio,
              double val_fraction, double test_fraction) {
  ensure_out_dir(g);
  auto ds = load_dataset(data_root);
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) ids.push_back(s.id);
  const std::uint64_t seed = g.seed.value_or(0);
  sscd::SplitManifest manifest;
  try {
    manifest = sscd::make_split(ids, ratio, seed, val_fraction, test_fraction);
  } catch (const std::exception& e) {
    throw UserError(std::string("split: ") + e.what());
  }
  const std::string path = g.out_dir + "/split.json";
  manifest.save(path);
  std::cout << "split " << ids.size() << " ids: " << manifest.labeled_ids.size()
            << " labeled, " << manifest.unlabeled_ids.size() << " unlabeled, "
            << manifest.val_ids.size() << " val, " << manifest.test_ids.size()
            << " test -> " << path << "\n";
  return 0;
}

int run_train(const GlobalArgs& g, const std::string& data_root,
              const std::string& split_path, const std::string& variant,
              int epochs, int steps_per_epoch) {
  ensure_out_dir(g);
  auto cfg = load_config(g);
  if (!variant.empty()) cfg.variant = sscd::variant_from_name(variant);
  if (epochs > 0) cfg.epochs = epochs;
  auto ds = load_dataset(data_root);
  auto manifest = load_manifest(split_path);

  auto result = run_training(cfg, ds, manifest, steps_per_epoch, g.out_dir);

  cfg.resolve_variant();
  cfg.save(g.out_dir + "/config.json");
  RunRow row{sscd::variant_name(cfg.variant), cfg.seed, result};
  write_text(g.out_dir + "/result.json", run_row_json(row).dump(2) + "\n");
  std::cout << "variant=" << row.variant << " seed=" << cfg.seed
            << " best_epoch=" << result.best_epoch
            << " val_iou=" << fixed(result.best_val.iou)
            << " test_iou=" << fixed(result.test.iou)
            << " wall=" << fixed(result.wall_seconds, 1) << "s\n";
  return 0;
}

int run_eval(const GlobalArgs& g, const std::string& data_root,
             const std::string& split_path, const std::string& checkpoint,
             const std::string& subset) {
  ensure_out_dir(g);
  auto cfg = load_config(g);
  auto ds = load_dataset(data_root);
  auto manifest = load_manifest(split_path);
  auto samples = collect(ds, subset_ids(manifest, subset));
  if (samples.empty()) throw UserError("subset '" + subset + "' is empty");

  auto model = make_model(cfg);
  load_weights(model, checkpoint);
  auto metrics = sscd::evaluate(model, samples, cfg.bin_threshold);

  json out = metrics_json(metrics);
  out["subset"] = subset;
  out["samples"] = samples.size();
  write_text(g.out_dir + "/metrics.json", out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run_ablate(const GlobalArgs& g, const std::string& data_root,
               const std::string& split_path, const std::string& variants_csv,
               const std::string& seeds_csv, int epochs, int steps_per_epoch) {
  ensure_out_dir(g);
  auto base = load_config(g);
  if (epochs > 0) base.epochs = epochs;
  auto ds = load_dataset(data_root);
  auto manifest = load_manifest(split_path);

  std::vector<std::string> variants = split_list(variants_csv);
  if (variants.empty()) throw UserError("no variants given");
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_csv)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw UserError("bad seed '" + s + "'");
    }
  }
  if (seeds.empty()) throw UserError("no seeds given");

  std::vector<RunRow> rows;
  for (const auto& v : variants) {
    const auto variant = sscd::variant_from_name(v);  // validates the name
    for (auto seed : seeds) {
      auto cfg = base;
      cfg.variant = variant;
      cfg.seed = seed;
      const std::string run_dir =
          g.out_dir + "/" + v + "_s" + std::to_string(seed);
      fs::create_directories(run_dir);
      auto result = run_training(cfg, ds, manifest, steps_per_epoch, run_dir);
      rows.push_back({v, seed, std::move(result)});
      std::cout << v << " seed=" << seed
                << " test_iou=" << fixed(rows.back().result.test.iou)
                << " wall=" << fixed(rows.back().result.wall_seconds, 1)
                << "s\n";
    }
  }

  std::vector<std::vector<std::string>> table{
      {"variant", "seed", "test_iou", "test_oa", "best_epoch", "wall_s"}};
  std::map<std::string, std::vector<double>> by_variant;
  for (const auto& r : rows) {
    table.push_back({r.variant, std::to_string(r.seed), fixed(r.result.test.iou),
                     fixed(r.result.test.oa), std::to_string(r.result.best_epoch),
                     fixed(r.result.wall_seconds, 1)});
    by_variant[r.variant].push_back(r.result.test.iou);
  }
  table.push_back({});
  table.push_back({"variant", "mean_test_iou", "runs"});
  for (const auto& v : variants) {
    const auto& ious = by_variant[v];
    double mean = 0;
    for (double x : ious) mean += x;
    mean /= static_cast<double>(ious.size());
    table.push_back({v, fixed(mean), std::to_string(ious.size())});
  }

  const std::string text = format_table(table);
  std::cout << "\n" << text;
  write_text(g.out_dir + "/ablation.txt", text);

  std::vector<std::vector<std::string>> csv{
      {"variant", "seed", "test_iou", "test_oa", "best_epoch", "wall_s"}};
  for (const auto& r : rows)
    csv.push_back({r.variant, std::to_string(r.seed), fixed(r.result.test.iou, 6),
                   fixed(r.result.test.oa, 6), std::to_string(r.result.best_epoch),
                   fixed(r.result.wall_seconds, 3)});
  write_text(g.out_dir + "/ablation.csv", format_csv(csv));

  json jrows = json::array();
  for (const auto& r : rows) jrows.push_back(run_row_json(r));
  write_text(g.out_dir + "/ablation.json", jrows.dump(2) + "\n");
  return 0;
}

void write_sweep_plot(const std::string& path,
                      const std::vector<double>& quantiles,
                      const std::vector<double>& ious) {
  const int w = 640, h = 480, ml = 70, mr = 30, mt = 40, mb = 60;
  cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar axis(60, 60, 60), line(180, 90, 20), dot(60, 60, 200);

  double ymin = 0.0, ymax = 1.0;
  if (!ious.empty()) {
    const auto [lo, hi] = std::minmax_element(ious.begin(), ious.end());
    ymin = std::max(0.0, *lo - 0.05);
    ymax = std::min(1.0, *hi + 0.05);
    if (ymax - ymin < 0.1) {
      const double mid = 0.5 * (ymin + ymax);
      ymin = std::max(0.0, mid - 0.05);
      ymax = std::min(1.0, mid + 0.05);
    }
  }
  auto px = [&](double q) {
    return ml + static_cast<int>((w - ml - mr) * q);
  };
  auto py = [&](double v) {
    return h - mb -
           static_cast<int>((h - mt - mb) * (v - ymin) / (ymax - ymin));
  };

  cv::line(canvas, {ml, mt}, {ml, h - mb}, axis, 1);
  cv::line(canvas, {ml, h - mb}, {w - mr, h - mb}, axis, 1);
  for (int i = 0; i <= 4; ++i) {
    const double q = 0.25 * i;
    cv::line(canvas, {px(q), h - mb}, {px(q), h - mb + 5}, axis, 1);
    cv::putText(canvas, fixed(q, 2), {px(q) - 18, h - mb + 22},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
    const double v = ymin + (ymax - ymin) * 0.25 * i;
    cv::line(canvas, {ml - 5, py(v)}, {ml, py(v)}, axis, 1);
    cv::putText(canvas, fixed(v, 3), {8, py(v) + 4}, cv::FONT_HERSHEY_SIMPLEX,
                0.45, axis, 1, cv::LINE_AA);
  }
  cv::putText(canvas, "gate quantile", {w / 2 - 60, h - 18},
              cv::FONT_HERSHEY_SIMPLEX, 0.55, axis, 1, cv::LINE_AA);
  cv::putText(canvas, "test IoU", {ml, mt - 14}, cv::FONT_HERSHEY_SIMPLEX,
              0.55, axis, 1, cv::LINE_AA);

  for (std::size_t i = 0; i + 1 < quantiles.size(); ++i)
    cv::line(canvas, {px(quantiles[i]), py(ious[i])},
             {px(quantiles[i + 1]), py(ious[i + 1])}, line, 2, cv::LINE_AA);
  for (std::size_t i = 0; i < quantiles.size(); ++i)
    cv::circle(canvas, {px(quantiles[i]), py(ious[i])}, 4, dot, cv::FILLED,
               cv::LINE_AA);

  if (!cv::imwrite(path, canvas))
    throw std::runtime_error("cannot write plot " + path);
}

int run_gate_sweep(const GlobalArgs& g, const std::string& data_root,
                   const std::string& split_path, const std::string& quantiles_csv,
                   int epochs, int steps_per_epoch) {
  ensure_out_dir(g);
  auto base = load_config(g);
  base.variant = sscd::Variant::gtpc;
  if (epochs > 0) base.epochs = epochs;
  auto ds = load_dataset(data_root);
  auto manifest = load_manifest(split_path);

  std::vector<double> quantiles;
  for (const auto& s : split_list(quantiles_csv)) {
    try {
      quantiles.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw UserError("bad quantile '" + s + "'");
    }
    if (quantiles.back() < 0.0 || quantiles.back() > 1.0)
      throw UserError("quantile out of [0,1]: " + s);
  }
  if (quantiles.empty()) throw UserError("no quantiles given");

  std::vector<double> ious;
  std::vector<std::vector<std::string>> table{{"quantile", "test_iou", "test_oa",
                                               "best_epoch", "wall_s"}};
  for (double q : quantiles) {
    auto cfg = base;
    cfg.gate.quantile = q;
    const std::string run_dir = g.out_dir + "/q" + fixed(q, 2);
    fs::create_directories(run_dir);
    auto result = run_training(cfg, ds, manifest, steps_per_epoch, run_dir);
    ious.push_back(result.test.iou);
    table.push_back({fixed(q, 2), fixed(result.test.iou), fixed(result.test.oa),
                     std::to_string(result.best_epoch),
                     fixed(result.wall_seconds, 1)});
    std::cout << "quantile=" << fixed(q, 2)
              << " test_iou=" << fixed(result.test.iou) << "\n";
  }

  const std::string text = format_table(table);
  std::cout << "\n" << text;
  write_text(g.out_dir + "/gate_sweep.txt", text);
  write_text(g.out_dir + "/gate_sweep.csv", format_csv(table));
  write_sweep_plot(g.out_dir + "/gate_sweep.png", quantiles, ious);
  std::cout << "plot -> " << g.out_dir << "/gate_sweep.png\n";
  return 0;
}

int run_render(const GlobalArgs& g, const std::string& data_root,
               const std::string& split_path, const std::string& checkpoint,
               const std::string& subset, int limit) {
  ensure_out_dir(g);
  auto cfg = load_config(g);
  auto ds = load_dataset(data_root);
  auto manifest = load_manifest(split_path);
  auto samples = collect(ds, subset_ids(manifest, subset));
  if (samples.empty()) throw UserError("subset '" + subset + "' is empty");

  auto model = make_model(cfg);
  load_weights(model, checkpoint);

  int written = 0;
  for (const auto* s : samples) {
    if (limit > 0 && written >= limit) break;
    auto prob = model.forward_prob(sscd::unsqueeze0(s->a),
                                   sscd::unsqueeze0(s->b));
    auto pred3 = sscd::threshold_probability(prob, cfg.bin_threshold);
    const int hh = pred3.shape(1), ww = pred3.shape(2);
    auto pred = pred3.reshaped({hh, ww});

    sscd::save_image_rgb(g.out_dir + "/" + s->id + "_a.png", s->a);
    sscd::save_image_rgb(g.out_dir + "/" + s->id + "_b.png", s->b);
    sscd::save_mask(g.out_dir + "/" + s->id + "_pred.png", pred);
    if (s->label) {
      auto err = sscd::render_error_map(pred, *s->label);
      sscd::save_rgb8(g.out_dir + "/" + s->id + "_error.png", err);
    }
    ++written;
  }
  std::cout << "rendered " << written << " samples to " << g.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised change detection trainer"};
  app.require_subcommand(1);

  GlobalArgs g;
  std::string data_root, split_path, checkpoint, subset = "test";
  std::string variant, variants_csv = "sup_only,feature,image,feature_image,gtpc";
  std::string seeds_csv = "0,1,2", quantiles_csv = "0.25,0.5,0.75";
  double ratio = 0.05, val_fraction = 0.1, test_fraction = 0.1;
  int epochs = 0, steps_per_epoch = 0, limit = 8;
  sscd::SynthParams synth_params;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_globals(synth, g);
  synth->add_option("--count", synth_params.count, "Number of pairs")
      ->capture_default_str();
  synth->add_option("--size", synth_params.size, "Image side length")
      ->capture_default_str();

  auto* split = app.add_subcommand("split", "Write a split manifest");
  add_globals(split, g);
  split->add_option("--data", data_root, "Dataset root (A/, B/, label/)")
      ->required();
  split->add_option("--ratio", ratio, "Labeled fraction of the train pool")
      ->capture_default_str();
  split->add_option("--val-fraction", val_fraction, "Validation fraction")
      ->capture_default_str();
  split->add_option("--test-fraction", test_fraction, "Test fraction")
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "Train one model");
  add_globals(train, g);
  train->add_option("--data", data_root, "Dataset root")->required();
  train->add_option("--split", split_path, "Split manifest JSON")->required();
  train->add_option("--variant", variant,
                    "sup_only|feature|image|feature_image|gtpc");
  train->add_option("--epochs", epochs, "Override epoch count");
  train->add_option("--steps-per-epoch", steps_per_epoch,
                    "Override steps per epoch");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_globals(eval, g);
  eval->add_option("--data", data_root, "Dataset root")->required();
  eval->add_option("--split", split_path, "Split manifest JSON")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--subset", subset, "val|test|labeled|unlabeled")
      ->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Run the variant grid");
  add_globals(ablate, g);
  ablate->add_option("--data", data_root, "Dataset root")->required();
  ablate->add_option("--split", split_path, "Split manifest JSON")->required();
  ablate->add_option("--variants", variants_csv, "Comma-separated variants")
      ->capture_default_str();
  ablate->add_option("--seeds", seeds_csv, "Comma-separated seeds")
      ->capture_default_str();
  ablate->add_option("--epochs", epochs, "Override epoch count");
  ablate->add_option("--steps-per-epoch", steps_per_epoch,
                     "Override steps per epoch");

  auto* sweep = app.add_subcommand("gate-sweep",
                                   "Train at several gate quantiles");
  add_globals(sweep, g);
  sweep->add_option("--data", data_root, "Dataset root")->required();
  sweep->add_option("--split", split_path, "Split manifest JSON")->required();
  sweep->add_option("--quantiles", quantiles_csv, "Comma-separated quantiles")
      ->capture_default_str();
  sweep->add_option("--epochs", epochs, "Override epoch count");
  sweep->add_option("--steps-per-epoch", steps_per_epoch,
                    "Override steps per epoch");

  auto* render = app.add_subcommand("render", "Write prediction rasters");
  add_globals(render, g);
  render->add_option("--data", data_root, "Dataset root")->required();
  render->add_option("--split", split_path, "Split manifest JSON")->required();
  render->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  render->add_option("--subset", subset, "val|test|labeled|unlabeled")
      ->capture_default_str();
  render->add_option("--limit", limit, "Max samples to render (0 = all)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) return run_synth(g, synth_params);
    if (split->parsed())
      return run_split(g, data_root, ratio, val_fraction, test_fraction);
    if (train->parsed())
      return run_train(g, data_root, split_path, variant, epochs,
                       steps_per_epoch);
    if (eval->parsed())
      return run_eval(g, data_root, split_path, checkpoint, subset);
    if (ablate->parsed())
      return run_ablate(g, data_root, split_path, variants_csv, seeds_csv,
                        epochs, steps_per_epoch);
    if (sweep->parsed())
      return run_gate_sweep(g, data_root, split_path, quantiles_csv, epochs,
                            steps_per_epoch);
    if (render->parsed())
      return run_render(g, data_root, split_path, checkpoint, subset, limit);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
