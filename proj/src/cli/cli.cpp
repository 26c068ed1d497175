#include "tbnet/cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tbnet/core/config.hpp"
#include "tbnet/core/error.hpp"
#include "tbnet/core/rng.hpp"
#include "tbnet/data/class_weights.hpp"
#include "tbnet/data/dataset_io.hpp"
#include "tbnet/data/generator.hpp"
#include "tbnet/data/png_io.hpp"
#include "tbnet/training/checkpoint.hpp"
#include "tbnet/training/trainer.hpp"
#include "tbnet/version.hpp"

namespace tbnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fingerprint_directory(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t hash = fnv1a("");
  for (const auto& f : files) {
    hash = fnv1a(fs::relative(f, root).generic_string(), hash);
    std::ifstream in(f, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    hash = fnv1a(bytes, hash);
  }
  return hash;
}

namespace {

fs::path resolve_output(const std::string& path) {
  fs::path p(path);
  if (p.is_relative())
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) p = fs::path(root) / p;
  return p;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string() +
                                                  (ec ? ": " + ec.message() : std::string()));
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json key_values(const std::string& text) {
  json j = json::object();
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

struct Manifest {
  std::string command;
  std::optional<TrainConfig> config;
  std::optional<AblationFlags> flags;
  std::optional<fs::path> dataset;
  json extra = json::object();
};

void write_manifest(const fs::path& dir, const Manifest& m) {
  json j;
  j["command"] = m.command;
  j["version"] = kVersion;
  j["started_at"] = utc_timestamp();
  j["config"] = m.config ? key_values(to_text(*m.config)) : json(nullptr);
  j["flags"] = m.flags ? key_values(to_text(*m.flags)) : json(nullptr);
  if (m.dataset) {
    j["dataset"] = {{"path", fs::absolute(*m.dataset).lexically_normal().string()},
                    {"fnv1a64", hex(fingerprint_directory(*m.dataset))}};
  } else {
    j["dataset"] = nullptr;
  }
  for (const auto& [k, v] : m.extra.items()) j[k] = v;
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

std::map<ClassId, double> parse_class_mix(const std::string& text, const ClassTaxonomy& taxonomy) {
  std::map<ClassId, double> mix;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("class mix entries look like name=count, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    ClassId id = -1;
    for (const auto& c : taxonomy.classes())
      if (c.name == name) id = c.id;
    if (id < 0) throw ConfigError("class mix names unknown class '" + name + "'");
    try {
      mix[id] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("class mix count for " + name + " is not a number");
    }
  }
  return mix;
}

std::string pixel_table(const Dataset& data, const ClassTaxonomy& taxonomy) {
  const auto counts = class_pixel_counts(data, taxonomy.num_classes());
  std::vector<int> images(counts.size(), 0);
  for (const auto& s : data.samples) {
    std::vector<bool> seen(counts.size(), false);
    for (auto v : s.labels.values) seen[v] = true;
    for (std::size_t c = 0; c < seen.size(); ++c) images[c] += seen[c];
  }
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  std::ostringstream os;
  os << std::left << std::setw(16) << "class" << std::right << std::setw(12) << "pixels" << std::setw(10) << "share%"
     << std::setw(8) << "images" << '\n';
  for (int c = 0; c < taxonomy.num_classes(); ++c)
    os << std::left << std::setw(16) << taxonomy.name(c) << std::right << std::setw(12) << counts[c] << std::setw(10)
       << std::fixed << std::setprecision(3) << 100.0 * static_cast<double>(counts[c]) / static_cast<double>(total)
       << std::setw(8) << images[c] << '\n';
  return os.str();
}

std::string join_command(const std::vector<std::string>& args) {
  std::string s = "tbnet";
  for (const auto& a : args) s += " " + a;
  return s;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string out;
  int samples = 16;
  std::string size = "128";
  std::uint64_t seed = 0;
  std::string split = "train";
  std::string class_mix;
  double illumination = GeneratorSpec{}.illumination_amplitude;
  double grain = GeneratorSpec{}.grain_std;
};

int cmd_generate(const GenerateArgs& a, const std::string& command, std::ostream& out) {
  const ClassTaxonomy& taxonomy = ClassTaxonomy::pavement();
  GeneratorSpec spec;
  spec.num_samples = a.samples;
  TrainConfig sizes;
  apply_setting(sizes, nullptr, "input_size", a.size);
  spec.height = sizes.input_height;
  spec.width = sizes.input_width;
  spec.seed = a.seed;
  if (!a.class_mix.empty()) spec.class_mix = parse_class_mix(a.class_mix, taxonomy);
  spec.illumination_amplitude = a.illumination;
  spec.grain_std = a.grain;
  spec.validate();
  const Split split = parse_split(a.split);

  const fs::path root = resolve_output(a.out);
  const fs::path split_dir = root / to_string(split);
  make_dir(split_dir);
  Manifest m;
  m.command = command;
  json mix = json::object();
  for (const auto& [id, count] : spec.class_mix) mix[taxonomy.name(id)] = count;
  m.extra["generator"] = {{"samples", spec.num_samples}, {"height", spec.height},  {"width", spec.width},
                          {"seed", spec.seed},           {"split", a.split},      {"class_mix", mix},
                          {"illumination", spec.illumination_amplitude}, {"grain", spec.grain_std}};
  write_manifest(split_dir, m);

  const Dataset data = generate_dataset(spec, split);
  save_dataset(root, data, taxonomy);
  out << "wrote " << data.samples.size() << " samples to " << split_dir.string() << '\n'
      << pixel_table(data, taxonomy);
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct ConfigArgs {
  std::map<std::string, std::string> values;  // key -> raw CLI value
  std::string config_file;
  bool desk = false;
  bool no_attn = false;
  bool no_boundary = false;
  bool no_weighting = false;
};

void add_config_options(CLI::App* app, ConfigArgs& a) {
  app->add_option("--config", a.config_file, "Config file of `key = value` lines");
  app->add_flag("--desk", a.desk, "Start from the desk preset (128x128, width divisor 8, batch 2)");
  app->add_flag("--no-attn", a.no_attn, "Disable both attention modules");
  app->add_flag("--no-boundary", a.no_boundary, "Disable the boundary stream");
  app->add_flag("--no-weighting", a.no_weighting, "Disable class weighting in the segmentation loss");
  const TrainConfig defaults;
  const auto default_values = key_values(to_text(defaults));
  for (const auto& key : config_keys())
    app->add_option(dashed(key), a.values[key], "default " + default_values[key].get<std::string>())
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

// Settings given explicitly on the command line or in a config file.
std::vector<std::pair<std::string, std::string>> explicit_settings(CLI::App* app, const ConfigArgs& a) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!a.config_file.empty()) {
    std::ifstream in(a.config_file);
    if (!in) throw ConfigError("cannot read config file " + a.config_file);
    for (std::string line; std::getline(in, line);) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw ConfigError("config line without '=': " + line);
        continue;
      }
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  for (const auto& key : config_keys())
    if (app->count(dashed(key)) > 0) out.emplace_back(key, a.values.at(key));
  return out;
}

void resolve_config(CLI::App* app, const ConfigArgs& a, TrainConfig& cfg, AblationFlags& flags) {
  if (a.desk) cfg = TrainConfig::desk();
  for (const auto& [key, value] : explicit_settings(app, a))
    if (!apply_setting(cfg, &flags, key, value)) throw ConfigError("unknown config key '" + key + "'");
  if (a.no_attn) flags.use_caa = false;
  if (a.no_boundary) flags.use_boundary_stream = false;
  if (a.no_weighting) flags.use_class_weighting = false;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string resume;
  ConfigArgs config;
};

// Keys that may change when a run is resumed.
bool resumable_key(const std::string& key) {
  return key == "epochs" || key == "max_steps" || key == "val_every";
}

int cmd_train(CLI::App* app, const TrainArgs& a, const std::string& command, std::ostream& out) {
  const fs::path data_root(a.data);
  const Dataset train_data = load_dataset(data_root, Split::Train);
  std::optional<Dataset> val_data;
  if (fs::is_directory(data_root / to_string(Split::Val))) val_data = load_dataset(data_root, Split::Val);
  const ClassTaxonomy taxonomy = load_taxonomy(data_root);

  TrainState state;
  if (!a.resume.empty()) {
    state = load_checkpoint(a.resume);
    TrainConfig requested = state.config;
    AblationFlags requested_flags = state.flags;
    resolve_config(app, a.config, requested, requested_flags);
    for (const auto& key : config_keys()) {
      if (resumable_key(key)) continue;
      TrainConfig probe = state.config;
      const auto value = key_values(to_text(requested))[key].get<std::string>();
      apply_setting(probe, nullptr, key, value);
      if (!(probe == state.config))
        throw ConfigConflictError(key + " = " + value + " conflicts with the checkpoint (" +
                                  key_values(to_text(state.config))[key].get<std::string>() + ")");
    }
    if (!(requested_flags == state.flags)) throw ConfigConflictError("ablation flags conflict with the checkpoint");
    if (!(taxonomy == state.taxonomy)) throw ConfigConflictError("dataset taxonomy differs from the checkpoint");
    state.config.epochs = requested.epochs;
    state.config.max_steps = requested.max_steps;
    state.config.val_every = requested.val_every;
  } else {
    TrainConfig cfg;
    AblationFlags flags;
    resolve_config(app, a.config, cfg, flags);
    state = init_state(cfg, flags, taxonomy, train_data);
  }
  const auto problems = validate_config(state.config);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }

  const fs::path out_dir = resolve_output(a.out);
  make_dir(out_dir);
  Manifest m;
  m.command = command;
  m.config = state.config;
  m.flags = state.flags;
  m.dataset = data_root;
  if (!a.resume.empty()) m.extra["resumed_from"] = a.resume;
  write_manifest(out_dir, m);
  save_config_file((out_dir / "config.txt").string(), state.config, &state.flags);

  out << "training on " << train_data.samples.size() << " samples"
      << (val_data ? ", validating on " + std::to_string(val_data->samples.size()) : std::string()) << ", "
      << state.net->parameters().parameter_count() << " parameters\n";
  TrainOptions options;
  options.out_dir = out_dir;
  options.on_step = [&out](const StepRecord& r) {
    if (r.step == 1 || r.step % 10 == 0)
      out << "step " << r.step << " epoch " << r.epoch << " seg " << r.loss.seg << " boundary " << r.loss.boundary
          << " total " << r.loss.total << " lr " << r.learning_rate << std::endl;
  };
  options.on_validate = [&out](int epoch, const MetricsReport& r) {
    out << "epoch " << epoch << " val mIoU " << r.miou() << std::endl;
  };
  train(state, train_data, val_data ? &*val_data : nullptr, options);
  out << "finished at step " << state.step << "; checkpoints in " << out_dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out = "eval";
};

int cmd_eval(const EvalArgs& a, const std::string& command, std::ostream& out) {
  TrainState state = load_checkpoint(a.checkpoint);
  const fs::path data_root(a.data);
  const ClassTaxonomy taxonomy = load_taxonomy(data_root);
  if (!(taxonomy == state.taxonomy)) throw ConfigConflictError("dataset taxonomy differs from the checkpoint");
  const Dataset data = load_dataset(data_root, parse_split(a.split));

  const fs::path out_dir = resolve_output(a.out);
  make_dir(out_dir);
  Manifest m;
  m.command = command;
  m.config = state.config;
  m.flags = state.flags;
  m.dataset = data_root;
  m.extra["checkpoint"] = a.checkpoint;
  m.extra["split"] = a.split;
  write_manifest(out_dir, m);

  const MetricsReport report = evaluate(state, data);
  write_text(out_dir / "metrics.json", report.to_json());
  write_text(out_dir / "metrics.txt", report.to_table());
  out << report.to_table() << "mPA " << std::setprecision(6) << report.mean_cpa.value_or(0.0) << "  mIoU "
      << report.miou() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string out = "predictions";
};

int cmd_predict(const PredictArgs& a, const std::string& command, std::ostream& out) {
  TrainState state = load_checkpoint(a.checkpoint);
  const Image image = load_image(a.image);
  const fs::path out_dir = resolve_output(a.out);
  make_dir(out_dir);
  Manifest m;
  m.command = command;
  m.config = state.config;
  m.flags = state.flags;
  m.extra["checkpoint"] = a.checkpoint;
  m.extra["image"] = a.image;
  write_manifest(out_dir, m);

  const Prediction p = predict(state, image);
  for (double v : p.boundary.values)
    if (!std::isfinite(v)) throw NumericError("boundary prediction contains non-finite values");
  const std::string stem = fs::path(a.image).stem().string();
  write_gray_png((out_dir / (stem + "_labels.png")).string(), p.labels);

  std::vector<std::uint8_t> rgb(p.labels.size() * 3);
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    const double g = 255.0 * image.values[i];
    const auto& color = kPalette[p.labels.values[i] % kPalette.size()];
    for (int k = 0; k < 3; ++k) {
      const double v = p.labels.values[i] == 0 ? g : 0.5 * g + 0.5 * color[k];
      rgb[i * 3 + k] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  write_rgb_png((out_dir / (stem + "_overlay.png")).string(), image.height, image.width, rgb);
  out << "wrote " << stem << "_labels.png, " << stem << "_overlay.png";
  if (!p.boundary.values.empty()) {
    Grid<std::uint8_t> b(image.height, image.width);
    for (std::size_t i = 0; i < b.size(); ++i)
      b.values[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(p.boundary.values[i], 0.0, 1.0)));
    write_gray_png((out_dir / (stem + "_boundary.png")).string(), b);
    out << ", " << stem << "_boundary.png";
  } else {
    out << " (no boundary stream in this checkpoint)";
  }
  out << " to " << out_dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TB-Net: three-stream boundary-aware pavement segmentation", "tbnet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic pavement dataset");
  generate->add_option("--out", gen.out, "Dataset root")->required();
  generate->add_option("--samples", gen.samples, "Number of samples")->capture_default_str();
  generate->add_option("--size", gen.size, "Image size, N or HxW")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  generate->add_option("--split", gen.split, "train | val | test")->capture_default_str();
  generate->add_option("--class-mix", gen.class_mix, "Expected instances per image, e.g. crack=2,patch=0.5");
  generate->add_option("--illumination", gen.illumination, "Illumination ramp amplitude")->capture_default_str();
  generate->add_option("--grain", gen.grain, "Texture grain standard deviation")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a network on a dataset root");
  train_cmd->add_option("--data", tr.data, "Dataset root (train split, optional val split)")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint");
  add_config_options(train_cmd, tr.config);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", ev.data, "Dataset root")->required();
  eval->add_option("--split", ev.split, "train | val | test")->capture_default_str();
  eval->add_option("--out", ev.out, "Report directory")->capture_default_str();

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Export label, boundary and overlay images");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("--image", pr.image, "Gray-scale PNG")->required();
  predict_cmd->add_option("--out", pr.out, "Output directory")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = join_command(args);
  try {
    if (*generate) return cmd_generate(gen, command, out);
    if (*train_cmd) return cmd_train(train_cmd, tr, command, out);
    if (*eval) return cmd_eval(ev, command, out);
    if (*predict_cmd) return cmd_predict(pr, command, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace tbnet::cli
