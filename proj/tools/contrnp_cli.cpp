// Command-line front end: synth, train, eval, sweep-labels, forecast.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "contrnp/contrnp.hpp"

namespace fs = std::filesystem;
using namespace contrnp;

namespace {

// SHA-1 over "blob <size>\0<content>", the id git gives the file's content.
std::string git_blob_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string body = ss.str();
  const std::string header = "blob " + std::to_string(body.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, body.data(), body.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

// Options shared by every command that reads a dataset.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::optional<std::string> data;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--data", c.data, "CSV series (time,ch0..,[label]); default: synthetic from config");
  cmd->add_option("--seed", c.seed, "run seed (overrides config)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (c.data) cfg.data = *c.data;
  if (c.seed) cfg.train.seed = *c.seed;
  return cfg;
}

std::vector<Segment> load_segments(const RunConfig& cfg) {
  if (cfg.data.empty()) {
    Rng rng(cfg.synth_seed);
    return synth_generate(cfg.synth_classes, cfg.synth_segments, cfg.synth_window, cfg.synth_noise, rng);
  }
  const auto series = load_csv(cfg.data);
  const std::size_t stride = cfg.train.stride == 0 ? cfg.train.window_size : cfg.train.stride;
  return segmentize(series, cfg.train.window_size, stride);
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// The manifest is itself a loadable config: provenance lines are comments.
void write_manifest(const std::string& path, const std::string& command, int argc, char** argv,
                    const RunConfig& cfg, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "# contrnp run manifest\n# command: " << command << "\n# argv:";
  for (int i = 0; i < argc; ++i) out << ' ' << argv[i];
  out << "\n# seed: " << cfg.train.seed << '\n';
  for (const auto& in : inputs) out << "# input: " << in << " blob " << git_blob_hash(in) << '\n';
  for (const auto& o : outputs) out << "# output: " << o << '\n';
  out << config_text(cfg);
}

std::vector<std::string> data_inputs(const RunConfig& cfg) {
  return cfg.data.empty() ? std::vector<std::string>{} : std::vector<std::string>{cfg.data};
}

// Loads the checkpoint first so a bad path is reported before any data work.
std::pair<Checkpoint, std::vector<Segment>> load_model_and_data(const std::string& path,
                                                                const RunConfig& cfg) {
  auto ck = load_checkpoint(path);
  for (const auto& w : ck.warnings) std::cerr << "warning: " << w << '\n';
  auto segs = load_segments(cfg);
  if (segs.empty()) throw DataError("dataset has no segments");
  if (ck.model.config.channels != segs.front().channels) {
    throw ShapeError("checkpoint " + path + " expects " + std::to_string(ck.model.config.channels) +
                     " channel(s), data has " + std::to_string(segs.front().channels));
  }
  return {std::move(ck), std::move(segs)};
}

EncodedDataset encode_all(const ConvCnpModel& model, const std::vector<Segment>& segs,
                          const RunConfig& cfg) {
  std::seed_seq seq{cfg.train.seed, std::uint64_t{0xe7a1}};
  std::array<std::uint32_t, 1> word{};
  seq.generate(word.begin(), word.end());
  Rng rng(word[0]);
  for (const auto& s : segs) {
    if (!s.label) throw DataError("evaluation needs labeled data; segment " + std::to_string(s.id) + " has no label");
  }
  return extract(model, segs, cfg.eval_views, cfg.train.sampling, rng);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive ConvCNP representation learning for time series"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a labeled synthetic waveform dataset as CSV");
  int classes = 4;
  std::size_t segments = 50, window = 256;
  double noise = 0.1;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--classes", classes, "number of waveform classes")->capture_default_str();
  synth->add_option("--segments", segments, "segments per class")->capture_default_str();
  synth->add_option("--window", window, "points per segment")->capture_default_str();
  synth->add_option("--noise", noise, "Gaussian noise standard deviation")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth->add_option("--out", synth_out, "output CSV")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "self-supervised training; writes model.ckpt, train_log.csv, manifest.txt");
  Common train_opts;
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--out", train_opts.out, "output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "linear probe and clustering metrics of a checkpoint");
  Common eval_opts;
  std::string eval_ckpt;
  std::optional<double> eval_fraction;
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval_cmd->add_option("--label-fraction", eval_fraction, "fraction of training labels for the probe");
  eval_cmd->add_option("--out", eval_opts.out, "metrics CSV")->default_val("metrics.csv");

  // sweep-labels
  auto* sweep_cmd = app.add_subcommand("sweep-labels", "probe accuracy across label fractions");
  Common sweep_opts;
  std::string sweep_ckpt;
  std::vector<double> fractions{0.1, 0.5, 0.8};
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--checkpoint", sweep_ckpt, "trained checkpoint")->required();
  sweep_cmd->add_option("--fractions", fractions, "comma-separated label fractions")
      ->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_option("--out", sweep_opts.out, "sweep CSV")->default_val("sweep.csv");

  // forecast
  auto* fc_cmd = app.add_subcommand("forecast", "predict one segment from a few context points");
  Common fc_opts;
  std::string fc_ckpt;
  std::size_t segment_id = 0, n_context = 40;
  add_common(fc_cmd, fc_opts);
  fc_cmd->add_option("--checkpoint", fc_ckpt, "trained checkpoint")->required();
  fc_cmd->add_option("--segment-id", segment_id, "segment index")->capture_default_str();
  fc_cmd->add_option("--n-context", n_context, "context points drawn from (a, b)")->capture_default_str();
  fc_cmd->add_option("--out", fc_opts.out, "forecast CSV")->default_val("forecast.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      Rng rng(synth_seed);
      const auto segs = synth_generate(classes, segments, window, noise, rng);
      ensure_parent(synth_out);
      write_csv(concat_segments(segs), synth_out);
      RunConfig cfg;
      cfg.synth_classes = classes;
      cfg.synth_segments = segments;
      cfg.synth_window = window;
      cfg.synth_noise = noise;
      cfg.synth_seed = synth_seed;
      cfg.train.seed = synth_seed;
      cfg.train.window_size = window;
      write_manifest(synth_out + ".manifest", "synth", argc, argv, cfg, {}, {synth_out});
      std::cout << "wrote " << segs.size() << " segments to " << synth_out << '\n';
    } else if (train_cmd->parsed()) {
      auto cfg = resolve(train_opts);
      const auto segs = load_segments(cfg);
      if (segs.empty()) throw DataError("no segments to train on");
      cfg.train.model.channels = segs.front().channels;
      fs::create_directories(train_opts.out);
      const std::string ckpt = (fs::path(train_opts.out) / "model.ckpt").string();
      const std::string log_path = (fs::path(train_opts.out) / "train_log.csv").string();
      cfg.train.checkpoint_path = ckpt;
      const auto result = train(segs, cfg.train, [](const TrainRecord& r, const ConvCnpModel&) {
        if (r.step == 1 || r.step % 50 == 0) {
          std::cerr << "step " << r.step << " total " << r.total << " nll " << r.nll << " contrastive "
                    << r.contrastive << '\n';
        }
        return true;
      });
      save_checkpoint(result.model, ckpt, cfg.train.seed);
      result.log.write_csv(log_path);
      write_manifest((fs::path(train_opts.out) / "manifest.txt").string(), "train", argc, argv, cfg,
                     data_inputs(cfg), {ckpt, log_path});
      std::cout << "trained " << result.log.size() << " steps; checkpoint " << ckpt << '\n';
    } else if (eval_cmd->parsed()) {
      auto cfg = resolve(eval_opts);
      if (eval_fraction) cfg.label_fraction = *eval_fraction;
      const auto [ck, segs] = load_model_and_data(eval_ckpt, cfg);
      const auto encoded = encode_all(ck.model, segs, cfg);
      const auto m = evaluate(encoded, cfg.label_fraction, cfg.train.seed);
      ensure_parent(eval_opts.out);
      write_metrics_csv(m, cfg.train.seed, eval_opts.out);
      auto inputs = data_inputs(cfg);
      inputs.push_back(eval_ckpt);
      write_manifest(eval_opts.out + ".manifest", "eval", argc, argv, cfg, inputs, {eval_opts.out});
      std::cout << "accuracy " << m.accuracy << " auprc " << m.auprc << " silhouette " << m.silhouette
                << " davies_bouldin " << m.davies_bouldin << '\n';
    } else if (sweep_cmd->parsed()) {
      auto cfg = resolve(sweep_opts);
      for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw UsageError("--fractions values must lie in (0, 1]");
      }
      const auto [ck, segs] = load_model_and_data(sweep_ckpt, cfg);
      const auto encoded = encode_all(ck.model, segs, cfg);
      const auto points = sweep_labels(encoded, fractions, cfg.train.seed);
      ensure_parent(sweep_opts.out);
      write_sweep_csv(points, sweep_opts.out);
      auto inputs = data_inputs(cfg);
      inputs.push_back(sweep_ckpt);
      write_manifest(sweep_opts.out + ".manifest", "sweep-labels", argc, argv, cfg, inputs, {sweep_opts.out});
      for (const auto& p : points) std::cout << "fraction " << p.fraction << " accuracy " << p.accuracy << '\n';
    } else if (fc_cmd->parsed()) {
      auto cfg = resolve(fc_opts);
      const auto [ck, segs] = load_model_and_data(fc_ckpt, cfg);
      if (segment_id >= segs.size()) {
        throw UsageError("--segment-id " + std::to_string(segment_id) + " out of range (" +
                         std::to_string(segs.size()) + " segments)");
      }
      Rng rng(cfg.train.seed);
      const auto f = forecast(ck.model, segs[segment_id], n_context, cfg.train.sampling, rng);
      ensure_parent(fc_opts.out);
      write_forecast_csv(f, fc_opts.out);
      auto inputs = data_inputs(cfg);
      inputs.push_back(fc_ckpt);
      write_manifest(fc_opts.out + ".manifest", "forecast", argc, argv, cfg, inputs, {fc_opts.out});
      std::cout << "rmse " << rmse(f) << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
