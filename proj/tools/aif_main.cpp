// Command-line front end: synth / pretrain / adapt / eval / ablate-fixed.
// Exit codes: 0 success, 1 usage error, 2 data or compatibility error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aif/checkpoint.hpp"
#include "aif/data.hpp"
#include "aif/trainer.hpp"

namespace fs = std::filesystem;
using namespace aif;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  if (!is.good()) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os.good()) throw std::runtime_error("cannot write '" + p.string() + "'");
  os << text;
}

int line_of_offset(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

DomainShiftSpec load_shift(const fs::path& p) {
  const std::string text = read_text(p);
  try {
    return DomainShiftSpec::from_json(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("shift spec '" + p.string() + "': parse error at line " +
                             std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
}

// config file (optional) + flag overrides; flags win
struct ConfigCli {
  std::string config_path;
  AdaptConfig cfg;
  CLI::Option *o_seed, *o_epochs, *o_lr, *o_tau, *o_a1, *o_a2, *o_a3, *o_eta, *o_batch, *o_size, *o_val, *o_raw,
      *o_fixed, *o_seg_w, *o_filt_w;
  std::uint64_t seed = 0;
  int epochs = 0, batch = 0, size = 0, seg_w = 0, filt_w = 0;
  double lr = 0, tau = 0, a1 = 0, a2 = 0, a3 = 0, eta = 0, val = 0, fixed = 0;
  bool raw = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "config JSON file");
    o_seed = app->add_option("--seed", seed, "RNG seed override");
    o_epochs = app->add_option("--epochs", epochs, "epoch count override");
    o_lr = app->add_option("--lr", lr, "learning rate override");
    o_tau = app->add_option("--tau", tau, "pseudo-label confidence threshold");
    o_a1 = app->add_option("--alpha1", a1, "filter-objective MI weight");
    o_a2 = app->add_option("--alpha2", a2, "model-objective likelihood weight");
    o_a3 = app->add_option("--alpha3", a3, "model-objective consistency weight");
    o_eta = app->add_option("--eta", eta, "teacher EMA coefficient");
    o_batch = app->add_option("--batch-size", batch, "batch size override");
    o_size = app->add_option("--image-size", size, "image size override");
    o_val = app->add_option("--val-fraction", val, "pretrain validation split");
    o_raw = app->add_flag("--raw-cosine", raw, "use the raw cosine consistency sign");
    o_fixed = app->add_option("--fixed-threshold", fixed, "replace the learned filter by a fixed high-pass");
    o_seg_w = app->add_option("--seg-width", seg_w, "segmentor base width");
    o_filt_w = app->add_option("--filter-width", filt_w, "filter base width");
  }

  AdaptConfig resolve() {
    AdaptConfig c = config_path.empty() ? AdaptConfig{} : AdaptConfig::from_json(read_text(config_path));
    if (o_seed->count()) c.seed = seed;
    if (o_epochs->count()) c.epochs = epochs;
    if (o_lr->count()) c.lr = lr;
    if (o_tau->count()) c.tau = tau;
    if (o_a1->count()) c.alpha1 = a1;
    if (o_a2->count()) c.alpha2 = a2;
    if (o_a3->count()) c.alpha3 = a3;
    if (o_eta->count()) c.eta = eta;
    if (o_batch->count()) c.batch_size = batch;
    if (o_size->count()) c.image_size = size;
    if (o_val->count()) c.val_fraction = val;
    if (o_raw->count()) c.raw_cosine_consistency = raw;
    if (o_fixed->count()) c.fixed_mask_threshold = fixed;
    if (o_seg_w->count()) c.seg_base_width = seg_w;
    if (o_filt_w->count()) c.filter_base_width = filt_w;
    c.validate();
    return c;
  }
};

std::vector<Sample> load_or_die(const fs::path& dir) {
  auto ds = load_dataset(dir);
  if (ds.empty()) throw std::runtime_error("dataset '" + dir.string() + "' is empty or missing images/");
  return ds;
}

int cmd_synth(const fs::path& out, int count, std::uint64_t seed, const std::string& shift_path, int size,
              const std::string& format, bool force) {
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw std::runtime_error("output directory '" + out.string() + "' is not empty (use --force to overwrite)");
  DomainShiftSpec spec;
  if (!shift_path.empty()) spec = load_shift(shift_path);
  auto samples = synth_generate(count, spec, seed, size);
  fs::create_directories(out);
  save_dataset(samples, out, format);
  write_text(out / "shift.json", spec.to_json());
  nlohmann::json snapshot{{"count", count}, {"seed", seed}, {"size", size}, {"format", format}};
  write_text(out / "resolved_config.json", snapshot.dump(2));
  std::cout << "wrote " << samples.size() << " samples to " << out.string() << "\n";
  return 0;
}

struct SweepRow {
  std::string id;
  double dsc = 0, iou = 0, edge = 0;
};

int cmd_ablate_fixed(const std::string& thresholds, const fs::path& data, const fs::path& source_ckpt,
                     const fs::path& adapted_ckpt, const fs::path& out_csv, AdaptConfig cfg, int jobs) {
  double t0 = 0, t1 = 0, step = 0;
  {
    char colon = 0;
    std::istringstream ss(thresholds);
    if (!(ss >> t0 >> colon >> t1 >> colon >> step) || step <= 0 || t1 < t0)
      throw std::runtime_error("malformed threshold range '" + thresholds + "' (expected start:stop:step)");
  }
  const int n_steps = static_cast<int>(std::lround((t1 - t0) / step)) + 1;
  std::vector<double> ts;
  for (int i = 0; i < n_steps; ++i) ts.push_back(t0 + i * step);

  auto target = load_or_die(data);
  const Checkpoint source = load_checkpoint(source_ckpt);
  const Checkpoint adapted = load_checkpoint(adapted_ckpt);

  std::vector<SweepRow> rows(ts.size() + 1);
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lk(mu);
        if (next >= ts.size()) return;
        i = next++;
      }
      AdaptConfig c = cfg;
      c.fixed_mask_threshold = ts[i];
      c.alpha1 = c.alpha2 = c.alpha3 = 0.0;  // pseudo-label-only adaptation
      Checkpoint ck = adapt(target, source, c);
      auto ev = evaluate(ck, target, true);
      rows[i] = {std::to_string(ts[i]), ev.mean_dsc, ev.mean_iou, mean_edge_gradient(ck, target, true)};
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  auto ev = evaluate(adapted, target, true);
  rows.back() = {"adaptive", ev.mean_dsc, ev.mean_iou, mean_edge_gradient(adapted, target, true)};

  std::ofstream os(out_csv);
  if (!os.good()) throw std::runtime_error("cannot write '" + out_csv.string() + "'");
  os << "threshold,dsc,iou,edge_gradient\n";
  for (const auto& r : rows) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%s,%.9f,%.9f,%.9f\n", r.id.c_str(), r.dsc, r.iou, r.edge);
    os << buf;
  }
  write_text(fs::path(out_csv).replace_extension(".config.json"), cfg.to_json());
  std::cout << "wrote " << rows.size() << " rows to " << out_csv.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frequency-filter source-free domain adaptation for segmentation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic curvilinear-stroke dataset");
  std::string s_out, s_shift, s_format = ".png";
  int s_count = 100, s_size = 64;
  std::uint64_t s_seed = 0;
  bool s_force = false;
  synth->add_option("--out", s_out, "output dataset directory")->required();
  synth->add_option("--count", s_count, "sample count")->required();
  synth->add_option("--seed", s_seed, "generation seed");
  synth->add_option("--shift", s_shift, "domain shift spec JSON");
  synth->add_option("--size", s_size, "image size (divisible by 4)");
  synth->add_option("--format", s_format, "image extension (.png or .pgm)");
  synth->add_flag("--force", s_force, "allow writing into a non-empty directory");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "supervised source pre-training");
  std::string p_data, p_out, p_log;
  ConfigCli p_cfg;
  pre->add_option("--data", p_data, "labeled source dataset directory")->required();
  pre->add_option("--out", p_out, "output checkpoint path")->required();
  pre->add_option("--log", p_log, "per-epoch CSV log path");
  p_cfg.attach(pre);

  // adapt
  auto* ad = app.add_subcommand("adapt", "source-free adaptation on unlabeled target data");
  std::string a_data, a_model, a_out, a_log;
  ConfigCli a_cfg;
  ad->add_option("--data", a_data, "target dataset directory")->required();
  ad->add_option("--model", a_model, "source checkpoint")->required();
  ad->add_option("--out", a_out, "output checkpoint path")->required();
  ad->add_option("--log", a_log, "per-epoch CSV log path");
  a_cfg.attach(ad);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a labeled dataset");
  std::string e_data, e_model, e_out;
  bool e_nofilter = false;
  ev->add_option("--data", e_data, "labeled dataset directory")->required();
  ev->add_option("--model", e_model, "checkpoint")->required();
  ev->add_option("--out", e_out, "metrics CSV path")->required();
  ev->add_flag("--no-filter", e_nofilter, "evaluate on raw images instead of filtered ones");

  // ablate-fixed
  auto* ab = app.add_subcommand("ablate-fixed", "fixed high-pass threshold sweep vs the adaptive filter");
  std::string b_thresholds = "0.01:0.1:0.01", b_data, b_model, b_adapted, b_out;
  int b_jobs = 1;
  ConfigCli b_cfg;
  ab->add_option("--thresholds", b_thresholds, "start:stop:step range");
  ab->add_option("--data", b_data, "labeled target dataset directory")->required();
  ab->add_option("--model", b_model, "source checkpoint")->required();
  ab->add_option("--adapted", b_adapted, "adaptive-filter adapted checkpoint")->required();
  ab->add_option("--out", b_out, "output CSV path")->required();
  ab->add_option("--jobs", b_jobs, "parallel sweep workers");
  b_cfg.attach(ab);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(s_out, s_count, s_seed, s_shift, s_size, s_format, s_force);

    if (pre->parsed()) {
      AdaptConfig cfg = p_cfg.resolve();
      auto res = pretrain_source(load_or_die(p_data), cfg, p_log.empty() ? fs::path{} : fs::path(p_log));
      save_checkpoint(res.checkpoint, p_out);
      write_text(fs::path(p_out).concat(".config.json"), cfg.to_json());
      std::cout << "final train dsc " << res.final_train_dsc << "; checkpoint " << p_out << "\n";
      return 0;
    }

    if (ad->parsed()) {
      AdaptConfig cfg = a_cfg.resolve();
      Checkpoint ck = adapt(load_or_die(a_data), load_checkpoint(a_model), cfg,
                            a_log.empty() ? fs::path{} : fs::path(a_log));
      save_checkpoint(ck, a_out);
      write_text(fs::path(a_out).concat(".config.json"), cfg.to_json());
      std::cout << "adapted checkpoint " << a_out << "\n";
      return 0;
    }

    if (ev->parsed()) {
      auto result = evaluate(load_checkpoint(e_model), load_or_die(e_data), !e_nofilter);
      write_metrics_csv(e_out, result.rows);
      std::cout << "mean dsc " << result.mean_dsc << ", mean iou " << result.mean_iou << " (" << result.rows.size()
                << " samples); metrics " << e_out << "\n";
      return 0;
    }

    if (ab->parsed())
      return cmd_ablate_fixed(b_thresholds, b_data, b_model, b_adapted, b_out, b_cfg.resolve(), b_jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
