#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "vargan/digest.hpp"
#include "vargan/error.hpp"
#include "vargan/eval.hpp"
#include "vargan/log.hpp"
#include "vargan/synth.hpp"
#include "vargan/theory.hpp"
#include "vargan/training.hpp"

namespace vargan::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ValidationError("bad seed '" + s + "'");
    }
  }
  if (out.empty()) throw ValidationError("no seeds given");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// "key=value" lines for every option of the subcommand, defaults included.
std::vector<std::string> effective_config(const CLI::App& sub) {
  std::vector<std::string> lines;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || opt->get_lnames().empty()) continue;
    std::string value = opt->count() > 0 ? opt->as<std::string>() : opt->get_default_str();
    lines.push_back(sub.get_name() + "." + name + "=" + value);
  }
  return lines;
}

std::string header_block(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += "# " + l + "\n";
  return out;
}

std::vector<std::string> with_prefix(const std::string& prefix, const std::map<std::string, std::string>& kv) {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv) out.push_back(prefix + k + "=" + v);
  return out;
}

train::TrainingState require_checkpoint(const std::string& path) {
  if (path.empty()) throw ValidationError("--checkpoint is required");
  if (!fs::exists(path)) throw ValidationError("checkpoint not found: " + path);
  return train::load_checkpoint(path);
}

synth::Dataset require_dataset(const std::string& path) {
  if (path.empty()) throw ValidationError("--data is required");
  if (!fs::is_directory(path)) throw ValidationError("dataset directory not found: " + path);
  return synth::read_dataset(path);
}

struct EvalFlags {
  std::string oracle;
  std::size_t oracle_steps = eval::OracleConfig{}.max_steps;
  std::uint64_t oracle_seed = 1;
  eval::EvalSpec spec;

  void add(CLI::App* sub) {
    sub->add_option("--oracle", oracle, "oracle file; trained and saved under --out when omitted");
    sub->add_option("--oracle-steps", oracle_steps, "step budget when training the oracle");
    sub->add_option("--oracle-seed", oracle_seed, "seed for oracle training");
    sub->add_option("--targets", spec.targets, "number of requested landmark sets");
    sub->add_option("--per-target", spec.per_target, "samples per landmark set");
    sub->add_option("--knn-k", spec.knn_k, "neighbour rank of the entropy estimator");
    sub->add_option("--bins", spec.bins, "histogram bins per feature dimension for the JSD");
  }

  eval::Oracle oracle_for(const synth::Dataset& data, const fs::path& out) const {
    if (!oracle.empty()) {
      if (!fs::exists(oracle)) throw ValidationError("oracle not found: " + oracle);
      return eval::load_oracle(oracle);
    }
    eval::OracleConfig cfg;
    cfg.max_steps = oracle_steps;
    cfg.seed = oracle_seed;
    auto o = eval::train_oracle(data, cfg);
    if (!o.reached_target) {
      throw std::runtime_error("oracle holdout error " + std::to_string(o.holdout_error) + " did not reach " +
                               std::to_string(o.target_error) + "; fidelity cannot be evaluated");
    }
    eval::save_oracle(o, out / "oracle.vgor");
    return o;
  }
};

std::vector<std::string> oracle_lines(const eval::Oracle& o) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "oracle.holdout_error=%.9g", o.holdout_error);
  std::vector<std::string> out{buf};
  std::snprintf(buf, sizeof buf, "oracle.train_error=%.9g", o.train_error);
  out.push_back(buf);
  out.push_back("oracle.steps=" + std::to_string(o.steps));
  out.push_back("oracle.dataset_digest=" + o.dataset_digest);
  return out;
}

// Reads `--config FILE` and turns its key=value pairs into flags placed before
// the command-line ones, so explicit flags take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::vector<std::string> out{args[0]};
  for (const auto& [k, v] : train::read_kv_file(path)) {
    if (k == "config") throw ValidationError("config files cannot nest --config");
    out.push_back("--" + k);
    out.push_back(v);
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Landmark-conditioned face GAN toolkit", "vargan"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value file; every key mirrors a flag, flags win");
  };

  // synth-data
  std::size_t n = 5000;
  synth::SynthConfig synth_cfg;
  std::uint64_t seed = 1;
  std::string out_path;
  auto* synth_cmd = app.add_subcommand("synth-data", "Render a synthetic landmark dataset");
  synth_cmd->add_option("--n", n, "number of images");
  synth_cmd->add_option("--size", synth_cfg.image_size, "image side in pixels");
  synth_cmd->add_option("--landmarks", synth_cfg.landmark_count, "landmarks per face (the renderer supports 5)");
  synth_cmd->add_option("--noise", synth_cfg.noise_amplitude, "additive Gaussian pixel noise amplitude");
  synth_cmd->add_option("--seed", seed, "dataset seed");
  synth_cmd->add_option("--out", out_path, "output directory")->required();
  add_config(synth_cmd);

  // train
  std::map<std::string, std::string> train_kv;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "Train vargan, cbigan or the unconditional began baseline");
  for (const auto& key : train::config_keys()) {
    train_cmd->add_option_function<std::string>("--" + key, [&train_kv, key](const std::string& v) { train_kv[key] = v; },
                                                "configuration key " + key);
  }
  train_cmd->add_option("--out", out_path, "output directory for telemetry and checkpoints")->required();
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");
  add_config(train_cmd);

  // generate
  std::string checkpoint, targets_path, grid_path;
  std::size_t per_target = 8;
  auto* gen_cmd = app.add_subcommand("generate", "Sample a trained generator for requested landmarks");
  gen_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  gen_cmd->add_option("--targets", targets_path, "landmark CSV in targets.csv format")->required();
  gen_cmd->add_option("--per-target", per_target, "samples per landmark row");
  gen_cmd->add_option("--seed", seed, "sampling seed");
  gen_cmd->add_option("--grid", grid_path, "PGM grid file, one row per target");
  gen_cmd->add_option("--out", out_path, "directory for individual samples");
  add_config(gen_cmd);

  // evaluate
  std::string data_path;
  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("evaluate", "Fidelity, diversity, entropy and separation of one checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "dataset directory the checkpoint was trained on")->required();
  eval_cmd->add_option("--seed", seed, "evaluation seed");
  eval_cmd->add_option("--out", out_path, "output directory")->required();
  eval_flags.add(eval_cmd);
  add_config(eval_cmd);

  // compare
  std::string vargan_list, cbigan_list, began_list, seeds_text = "1,2,3";
  auto* cmp_cmd = app.add_subcommand("compare", "Per-seed verdicts between trained models");
  cmp_cmd->add_option("--vargan", vargan_list, "comma-separated vargan checkpoints, one per seed or one for all");
  cmp_cmd->add_option("--cbigan", cbigan_list, "comma-separated cbigan checkpoints");
  cmp_cmd->add_option("--began", began_list, "comma-separated unconditional began checkpoints");
  cmp_cmd->add_option("--data", data_path, "dataset directory")->required();
  cmp_cmd->add_option("--seeds", seeds_text, "comma-separated evaluation seeds");
  cmp_cmd->add_option("--out", out_path, "output directory")->required();
  EvalFlags cmp_flags;
  cmp_flags.add(cmp_cmd);
  add_config(cmp_cmd);

  // verify-theory
  std::size_t trials = 100, bins = 8;
  auto* theory_cmd = app.add_subcommand("verify-theory", "Check the entropy and JSD identities numerically");
  theory_cmd->add_option("--trials", trials, "random instances");
  theory_cmd->add_option("--seed", seed, "sweep seed");
  theory_cmd->add_option("--bins", bins, "support size of the discrete distributions");
  add_config(theory_cmd);

  // grid
  std::string in_dir;
  std::size_t cols = 8;
  auto* grid_cmd = app.add_subcommand("grid", "Tile a directory of PGM images");
  grid_cmd->add_option("--in", in_dir, "directory of same-sized PGM files, tiled in name order")->required();
  grid_cmd->add_option("--cols", cols, "images per row");
  grid_cmd->add_option("--out", out_path, "output PGM file")->required();
  add_config(grid_cmd);

  try {
    log::level();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kInvalid;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }

  try {
    if (synth_cmd->parsed()) {
      const auto data = synth::generate_dataset(n, synth_cfg, seed);
      synth::write_dataset(data, out_path);
      out << "records=" << data.size() << "\ndigest=" << synth::dataset_digest(data) << "\n";
      return kOk;
    }

    if (train_cmd->parsed()) {
      train::TrainerConfig cfg;
      cfg.apply_kv(train_kv);
      const auto data = require_dataset(cfg.data);
      train::TrainOptions opts;
      opts.out = out_path;
      if (!resume.empty()) {
        if (!fs::exists(resume)) throw ValidationError("checkpoint not found: " + resume);
        opts.resume = resume;
      }
      const auto state = train::train(cfg, data, opts);
      out << "steps=" << state.step << "\ntelemetry_digest=" << train::telemetry_digest(state)
          << "\nstate_digest=" << train::state_digest(state) << "\n";
      return kOk;
    }

    if (gen_cmd->parsed()) {
      if (grid_path.empty() && out_path.empty()) throw ValidationError("generate needs --grid or --out");
      if (per_target == 0) throw ValidationError("--per-target must be positive");
      const auto state = require_checkpoint(checkpoint);
      const auto& a = state.config.arch;
      const auto rows = synth::read_targets_csv(targets_path, a.target_dim());
      if (rows.empty()) throw ValidationError("no targets in " + targets_path);
      auto header = effective_config(*gen_cmd);
      const auto ck = with_prefix("checkpoint.", state.config.to_kv());
      header.insert(header.end(), ck.begin(), ck.end());

      const auto source = eval::generator_source(state);
      Tensor<float> all({rows.size() * per_target, 1, a.image_size, a.image_size});
      const std::size_t px = a.image_size * a.image_size;
      for (std::size_t t = 0; t < rows.size(); ++t) {
        Tensor<float> y({per_target, rows[t].size()});
        for (std::size_t i = 0; i < per_target; ++i) {
          for (std::size_t j = 0; j < rows[t].size(); ++j) y[i * rows[t].size() + j] = static_cast<float>(rows[t][j]);
        }
        Rng rng(mix_seed(seed, t));
        const auto images = source(y, rng);
        std::copy(images.values().begin(), images.values().end(), all.data() + t * per_target * px);
      }
      if (!grid_path.empty()) eval::emit_grid(all, per_target, grid_path, header);
      if (!out_path.empty()) {
        fs::create_directories(out_path);
        for (std::size_t i = 0; i < all.dim(0); ++i) {
          std::vector<double> v(all.data() + i * px, all.data() + (i + 1) * px);
          char name[64];
          std::snprintf(name, sizeof name, "sample-%04zu-%04zu.pgm", i / per_target, i % per_target);
          synth::write_pgm(fs::path(out_path) / name, synth::quantize(v), a.image_size, a.image_size, header);
        }
      }
      out << "samples=" << all.dim(0) << "\n";
      return kOk;
    }

    if (eval_cmd->parsed()) {
      eval_flags.spec.validate();
      const auto state = require_checkpoint(checkpoint);
      const auto data = require_dataset(data_path);
      const std::string digest = synth::dataset_digest(data);
      if (state.dataset_digest != digest) {
        throw ValidationError("dataset digest mismatch: checkpoint " + state.dataset_digest + ", data " + digest);
      }
      fs::create_directories(out_path);
      auto oracle = eval_flags.oracle_for(data, out_path);
      const auto report = eval::evaluate(eval::generator_source(state), oracle, data, eval_flags.spec, seed,
                                         train::to_string(state.config.method));
      auto header = effective_config(*eval_cmd);
      const auto ck = with_prefix("checkpoint.", state.config.to_kv());
      header.insert(header.end(), ck.begin(), ck.end());
      const auto ol = oracle_lines(oracle);
      header.insert(header.end(), ol.begin(), ol.end());
      const std::string text = header_block(header) + report.to_text();
      write_text(fs::path(out_path) / "report.txt", text);
      out << report.to_text();
      return kOk;
    }

    if (cmp_cmd->parsed()) {
      cmp_flags.spec.validate();
      const auto seeds = parse_seeds(seeds_text);
      const auto data = require_dataset(data_path);
      std::vector<eval::ModelRuns> models;
      for (const auto& [name, list] : {std::pair<std::string, std::string>{"vargan", vargan_list},
                                       {"cbigan", cbigan_list}, {"began", began_list}}) {
        if (list.empty()) continue;
        eval::ModelRuns m{name, {}};
        for (const auto& p : split_list(list)) m.states.push_back(require_checkpoint(p));
        models.push_back(std::move(m));
      }
      if (models.size() < 2) throw ValidationError("compare needs checkpoints for at least two of --vargan, --cbigan, --began");
      fs::create_directories(out_path);
      auto oracle = cmp_flags.oracle_for(data, out_path);
      const auto rep = eval::compare_report(models, oracle, data, seeds, cmp_flags.spec);
      auto header = effective_config(*cmp_cmd);
      const auto ol = oracle_lines(oracle);
      header.insert(header.end(), ol.begin(), ol.end());
      header.push_back("dataset_digest=" + synth::dataset_digest(data));
      write_text(fs::path(out_path) / "report.txt", header_block(header) + rep.to_text());
      write_text(fs::path(out_path) / "verdicts.csv", header_block(header) + rep.verdict_csv());
      out << rep.verdict_csv();
      return kOk;
    }

    if (theory_cmd->parsed()) {
      if (trials == 0) throw ValidationError("--trials must be positive");
      const auto summary = theory::run_theory_sweep(trials, seed, bins);
      for (const auto& c : summary.checks) out << theory::format_record(c) << "\n";
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "max_entropy_residual=%.3e\nmax_jsd_residual=%.3e\nmax_grid_gap_steps=%.3f\nall_pass=%d\n",
                    summary.max_entropy_residual, summary.max_jsd_residual, summary.max_brute_force_gap_in_steps,
                    summary.all_pass ? 1 : 0);
      out << buf;
      return summary.all_pass ? kOk : kFailure;
    }

    if (grid_cmd->parsed()) {
      if (!fs::is_directory(in_dir)) throw ValidationError("input directory not found: " + in_dir);
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(in_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw ValidationError("no .pgm files in " + in_dir);
      std::vector<std::vector<std::uint8_t>> images;
      std::size_t size = 0;
      for (const auto& f : files) {
        std::size_t w = 0, h = 0;
        images.push_back(synth::read_pgm(f, w, h));
        if (w != h || (size != 0 && w != size)) throw ValidationError(f.string() + " differs in size from the others");
        size = w;
      }
      std::size_t w = 0, h = 0;
      const auto pixels = eval::grid_pixels(images, size, cols, w, h);
      const fs::path dest(out_path);
      if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
      synth::write_pgm(dest, pixels, w, h, effective_config(*grid_cmd));
      out << "images=" << images.size() << "\nwidth=" << w << "\nheight=" << h << "\n";
      return kOk;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kFailure;
  }
  return kInvalid;
}

}  // namespace vargan::cli
