// lrp: streaming low-rank tracking and per-frame event masks.
//
// Subcommands:
//   synth  generate a synthetic stream (frames + ground-truth masks)
//   run    track a frame sequence and emit event masks + metrics
//   eval   score predicted masks against ground truth
//   bench  per-frame timing report on a stream

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lrp/lrp.hpp"

namespace fs = std::filesystem;
using namespace lrp;

namespace {

// Flat key=value config file; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

void apply_config_file(PursuitConfig& cfg, const std::string& path) {
  for (const auto& [key, val] : read_config_file(path)) {
    if (key == "window_len") cfg.window_len = std::stoi(val);
    else if (key == "rank") cfg.rank = std::stoi(val);
    else if (key == "delta") cfg.delta = std::stod(val);
    else if (key == "reg_weight") cfg.reg_weight = std::stod(val);
    else if (key == "epochs_per_update") cfg.epochs_per_update = std::stoi(val);
    else if (key == "projection_norm")
      cfg.projection_norm = projection_norm_from_string(val);
    else if (key == "subsample_period") cfg.subsample_period = std::stoi(val);
    else if (key == "threshold_fraction") cfg.threshold_fraction = std::stod(val);
    else if (key == "backtracking") cfg.backtracking = val == "true" || val == "1";
    else if (key == "rng_seed") cfg.rng_seed = std::stoull(val);
    else if (key == "range_lo") cfg.range_lo = std::stod(val);
    else if (key == "range_hi") cfg.range_hi = std::stod(val);
    else if (key == "residual_scale") cfg.residual_scale = std::stod(val);
    else if (key == "grid_height") cfg.grid_height = std::stoi(val);
    else if (key == "grid_width") cfg.grid_width = std::stoi(val);
    else if (key == "warmup_passes") cfg.warmup_passes = std::stoi(val);
    else throw std::runtime_error("unknown config key: " + key);
  }
}

// Flags mirror PursuitConfig field names; values given on the command
// line override the config file.
void add_config_flags(CLI::App* cmd, PursuitConfig& cfg,
                      std::string& norm_name) {
  cmd->add_option("--window_len", cfg.window_len);
  cmd->add_option("--rank", cfg.rank);
  cmd->add_option("--delta", cfg.delta);
  cmd->add_option("--reg_weight", cfg.reg_weight);
  cmd->add_option("--epochs_per_update", cfg.epochs_per_update);
  cmd->add_option("--projection_norm", norm_name)
      ->check(CLI::IsMember({"l1", "l2", "geman-mclure", "gm"}));
  cmd->add_option("--subsample_period", cfg.subsample_period);
  cmd->add_option("--threshold_fraction", cfg.threshold_fraction);
  cmd->add_option("--backtracking", cfg.backtracking);
  cmd->add_option("--rng_seed,--seed", cfg.rng_seed);
  cmd->add_option("--range_lo", cfg.range_lo);
  cmd->add_option("--range_hi", cfg.range_hi);
  cmd->add_option("--residual_scale", cfg.residual_scale);
  cmd->add_option("--grid_height", cfg.grid_height);
  cmd->add_option("--grid_width", cfg.grid_width);
  cmd->add_option("--warmup_passes", cfg.warmup_passes);
}

std::string seq_name(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.%s", stem, index, ext);
  return buf;
}

std::vector<FrameVector> load_frames(const std::string& frames_dir,
                                     const std::string& csv_path,
                                     int* height, int* width) {
  if (!frames_dir.empty()) {
    std::vector<FrameVector> out;
    for (const std::string& path : list_pnm_files(frames_dir)) {
      const Image img = read_pnm(path);
      if (!out.empty() &&
          (img.width * img.height != out.front().N ||
           img.channels != out.front().n))
        throw std::runtime_error("inconsistent frame dimensions in " +
                                 frames_dir);
      if (out.empty()) {
        *height = img.height;
        *width = img.width;
      }
      out.push_back(image_to_frame(img));
    }
    if (out.empty()) throw std::runtime_error("no frames in " + frames_dir);
    return out;
  }
  if (!csv_path.empty()) {
    std::vector<FrameVector> out = read_csv_frames(csv_path);
    *height = 1;
    *width = out.front().N;
    return out;
  }
  throw std::runtime_error("one of --frames or --csv is required");
}

void write_metrics_csv(const std::string& path,
                       const std::vector<StepRecord>& records) {
  std::ostringstream body;
  body << "frame,threshold,event_count,objective,feasibility,millis\n";
  for (const StepRecord& r : records)
    body << r.frame_index << "," << r.threshold << "," << r.event_count
         << "," << r.objective << "," << r.feasibility << "," << r.millis
         << "\n";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body.str();
}

void print_metrics(std::ostream& os, const MaskMetrics& m) {
  os << "recall,specificity,fpr,fnr,precision,f1\n"
     << m.recall << "," << m.specificity << "," << m.fpr << "," << m.fnr
     << "," << m.precision << "," << m.f1 << "\n";
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir,
              int count) {
  if (spec.n != 1 && spec.n != 3)
    throw std::runtime_error("synth writes PGM/PPM: channels must be 1 or 3");
  StreamGenerator gen(spec);
  // Generate fully before touching the filesystem.
  std::vector<SyntheticFrame> frames;
  frames.reserve(count);
  for (int k = 0; k < count; ++k) frames.push_back(gen.next());

  int gh = spec.grid_height, gw = spec.grid_width;
  if (gh < 1 || gw < 1 || gh * gw != spec.N) {
    gh = static_cast<int>(std::floor(std::sqrt(double(spec.N))));
    while (gh > 1 && spec.N % gh != 0) --gh;
    gw = spec.N / gh;
  }

  fs::create_directories(fs::path(out_dir) / "frames");
  fs::create_directories(fs::path(out_dir) / "truth");
  for (int k = 0; k < count; ++k) {
    const char* ext = spec.n == 3 ? "ppm" : "pgm";
    write_pnm((fs::path(out_dir) / "frames" / seq_name("frame", k, ext))
                  .string(),
              frame_to_image(frames[k].frame, gh, gw));
    write_mask_pnm(
        (fs::path(out_dir) / "truth" / seq_name("mask", k, "pgm")).string(),
        frames[k].truth, gh, gw);
  }
  std::cout << "wrote " << count << " frames to " << out_dir << "\n";
  return 0;
}

int cmd_run(const PursuitConfig& cfg_in, const std::string& frames_dir,
            const std::string& csv_path, const std::string& out_dir,
            bool dump_factors) {
  int height = 0, width = 0;
  const std::vector<FrameVector> frames =
      load_frames(frames_dir, csv_path, &height, &width);

  PursuitConfig cfg = cfg_in;
  if (cfg.grid_height * cfg.grid_width != frames.front().N) {
    cfg.grid_height = height;
    cfg.grid_width = width;
  }
  cfg.validate();

  const size_t warm_count =
      std::min<size_t>(cfg.window_len, frames.size());
  const std::vector<FrameVector> warmup(frames.begin(),
                                        frames.begin() + warm_count);
  PursuitSession session(cfg, warmup);

  // Track everything in memory, then write: a failing run leaves no
  // partial mask directory behind.
  std::vector<EventMask> masks;
  std::vector<StepRecord> records;
  masks.reserve(frames.size());
  for (const FrameVector& x : frames) {
    masks.push_back(session.step(x));
    records.push_back(session.track_metrics());
  }

  fs::create_directories(fs::path(out_dir) / "masks");
  for (size_t k = 0; k < masks.size(); ++k)
    write_mask_pnm(
        (fs::path(out_dir) / "masks" / seq_name("mask", int(k), "pgm"))
            .string(),
        masks[k], cfg.grid_height, cfg.grid_width);
  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), records);
  if (dump_factors)
    write_factors((fs::path(out_dir) / "factors.bin").string(),
                  session.factors());
  std::cout << "processed " << frames.size() << " frames; masks in "
            << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& truth_dir,
             const std::string& out_path) {
  const auto pred_files = list_pnm_files(pred_dir);
  const auto truth_files = list_pnm_files(truth_dir);
  if (pred_files.size() != truth_files.size())
    throw std::runtime_error("eval: prediction/truth counts differ");
  std::vector<EventMask> pred, truth;
  for (const auto& p : pred_files) pred.push_back(read_mask_pnm(p));
  for (const auto& t : truth_files) truth.push_back(read_mask_pnm(t));
  const MaskMetrics m = score_masks(pred, truth);
  if (out_path.empty()) {
    print_metrics(std::cout, m);
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    print_metrics(out, m);
  }
  return 0;
}

int cmd_bench(const PursuitConfig& cfg_in, const std::string& frames_dir,
              const std::string& csv_path) {
  if (!frames_dir.empty() && list_pnm_files(frames_dir).empty()) {
    std::cout << "frames,0\n";
    return 0;
  }
  int height = 0, width = 0;
  const std::vector<FrameVector> frames =
      load_frames(frames_dir, csv_path, &height, &width);
  PursuitConfig cfg = cfg_in;
  if (cfg.grid_height * cfg.grid_width != frames.front().N) {
    cfg.grid_height = height;
    cfg.grid_width = width;
  }
  cfg.validate();

  const size_t warm_count =
      std::min<size_t>(cfg.window_len, frames.size());
  PursuitSession session(
      cfg, {frames.begin(), frames.begin() + warm_count});
  std::vector<double> ms;
  for (const FrameVector& x : frames) {
    session.step(x);
    ms.push_back(session.track_metrics().millis);
  }
  std::sort(ms.begin(), ms.end());
  double mean = 0.0;
  for (double v : ms) mean += v;
  mean /= static_cast<double>(ms.size());
  const double median = ms[ms.size() / 2];
  std::cout << "frames," << ms.size() << "\n"
            << "mean_ms," << mean << "\n"
            << "median_ms," << median << "\n"
            << "max_ms," << ms.back() << "\n"
            << "fps," << (mean > 0.0 ? 1000.0 / mean : 0.0) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming low-rank tracking with per-frame event masks"};
  app.require_subcommand(1);

  // The config file is applied before flag parsing so that any flag
  // given on the command line wins.
  PursuitConfig cfg;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      try {
        apply_config_file(cfg, argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
      }
    }
  std::string config_path, norm_name;

  // synth
  SyntheticSpec spec;
  std::string synth_out;
  int synth_count = 100;
  std::uint64_t synth_seed = 0;
  std::string pattern_name = "blob";
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic stream");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--frames", synth_count);
  synth->add_option("--seed", synth_seed)->required();
  synth->add_option("--sensors", spec.N);
  synth->add_option("--channels", spec.n);
  synth->add_option("--rank", spec.r);
  synth->add_option("--delta", spec.delta);
  synth->add_option("--sparse_fraction", spec.sparse_fraction);
  synth->add_option("--sparse_magnitude", spec.sparse_magnitude);
  synth->add_option("--drift_rate", spec.drift_rate);
  synth->add_option("--pattern", pattern_name)
      ->check(CLI::IsMember({"blob", "scattered"}));
  synth->add_option("--grid_height", spec.grid_height);
  synth->add_option("--grid_width", spec.grid_width);

  // run
  std::string run_frames, run_csv, run_out;
  bool run_dump_factors = false;
  CLI::App* run = app.add_subcommand("run", "track a stream, emit masks");
  run->add_option("--frames", run_frames);
  run->add_option("--csv", run_csv);
  run->add_option("--out", run_out)->required();
  run->add_option("--config", config_path);
  run->add_flag("--dump-factors", run_dump_factors);
  add_config_flags(run, cfg, norm_name);

  // eval
  std::string eval_pred, eval_truth, eval_out;
  CLI::App* eval = app.add_subcommand("eval", "score masks against truth");
  eval->add_option("--pred", eval_pred)->required();
  eval->add_option("--truth", eval_truth)->required();
  eval->add_option("--out", eval_out);

  // bench
  std::string bench_frames, bench_csv;
  CLI::App* bench = app.add_subcommand("bench", "per-frame timing report");
  bench->add_option("--frames", bench_frames);
  bench->add_option("--csv", bench_csv);
  bench->add_option("--config", config_path);
  add_config_flags(bench, cfg, norm_name);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!norm_name.empty())
      cfg.projection_norm = projection_norm_from_string(norm_name);
    if (synth->parsed()) {
      spec.rng_seed = synth_seed;
      spec.pattern = pattern_name == "scattered" ? SparsePattern::Scattered
                                                 : SparsePattern::Blob;
      spec.validate();
      return cmd_synth(spec, synth_out, synth_count);
    }
    if (run->parsed())
      return cmd_run(cfg, run_frames, run_csv, run_out, run_dump_factors);
    if (eval->parsed()) return cmd_eval(eval_pred, eval_truth, eval_out);
    if (bench->parsed()) return cmd_bench(cfg, bench_frames, bench_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
