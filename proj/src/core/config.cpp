#include "tbnet/core/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tbnet/core/error.hpp"

namespace tbnet {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int v{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

void parse_size(const std::string& key, const std::string& value, int& h, int& w) {
  const auto x = value.find('x');
  if (x == std::string::npos) {
    h = w = parse_int<int>(key, value);
    return;
  }
  h = parse_int<int>(key, value.substr(0, x));
  w = parse_int<int>(key, value.substr(x + 1));
}

std::array<int, 4> parse_blocks(const std::string& key, const std::string& value) {
  std::array<int, 4> blocks{};
  std::istringstream in(value);
  std::string item;
  std::size_t i = 0;
  while (std::getline(in, item, ',')) {
    if (i >= 4) throw ConfigError(key + ": expected 4 comma-separated block counts");
    blocks[i++] = parse_int<int>(key, trim(item));
  }
  if (i != 4) throw ConfigError(key + ": expected 4 comma-separated block counts");
  return blocks;
}

}  // namespace

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.input_height = 128;
  cfg.input_width = 128;
  cfg.width_divisor = 8;
  cfg.batch_size = 2;
  return cfg;
}

std::vector<std::string> validate_config(const TrainConfig& cfg) {
  std::vector<std::string> v;
  if (!(cfg.learning_rate > 0)) v.emplace_back("learning_rate must be > 0");
  if (!(cfg.decay > 0 && cfg.decay <= 1)) v.emplace_back("decay must be in (0,1]");
  if (!(cfg.lr_epoch_decay > 0 && cfg.lr_epoch_decay <= 1)) v.emplace_back("lr_epoch_decay must be in (0,1]");
  if (!(cfg.rms_epsilon > 0)) v.emplace_back("rms_epsilon must be > 0");
  if (!(cfg.lambda_seg >= 0)) v.emplace_back("lambda_seg must be >= 0");
  if (!(cfg.lambda_boundary >= 0)) v.emplace_back("lambda_boundary must be >= 0");
  if (cfg.epochs <= 0) v.emplace_back("epochs must be > 0");
  if (cfg.max_steps < 0) v.emplace_back("max_steps must be >= 0");
  if (cfg.batch_size <= 0) v.emplace_back("batch_size must be > 0");
  if (cfg.width_divisor <= 0) v.emplace_back("width_divisor must be > 0");
  if (cfg.input_height <= 0 || cfg.input_width <= 0 || cfg.input_height % 32 != 0 ||
      cfg.input_width % 32 != 0)
    v.emplace_back("input_size must be positive and divisible by 32");
  for (int b : cfg.backbone_blocks)
    if (b <= 0) {
      v.emplace_back("backbone_blocks must all be > 0");
      break;
    }
  if (cfg.context_depth <= 0) v.emplace_back("context_depth must be > 0");
  if (cfg.caa_max_positions <= 0) v.emplace_back("caa_max_positions must be > 0");
  if (!(cfg.bn_momentum > 0 && cfg.bn_momentum <= 1)) v.emplace_back("bn_momentum must be in (0,1]");
  if (cfg.val_every <= 0) v.emplace_back("val_every must be > 0");
  return v;
}

std::string to_string(WeightingMode mode) {
  switch (mode) {
    case WeightingMode::PerPixel: return "per_pixel";
    case WeightingMode::PerImage: return "per_image";
    case WeightingMode::None: return "none";
  }
  return "per_pixel";
}

std::string to_string(Reduction reduction) { return reduction == Reduction::Mean ? "mean" : "sum"; }

std::string to_string(BoundarySource source) {
  return source == BoundarySource::Features ? "features" : "map";
}

WeightingMode parse_weighting_mode(const std::string& text) {
  if (text == "per_pixel") return WeightingMode::PerPixel;
  if (text == "per_image") return WeightingMode::PerImage;
  if (text == "none") return WeightingMode::None;
  throw ConfigError("weighting_mode: expected per_pixel|per_image|none, got '" + text + "'");
}

Reduction parse_reduction(const std::string& text) {
  if (text == "mean") return Reduction::Mean;
  if (text == "sum") return Reduction::Sum;
  throw ConfigError("loss_reduction: expected mean|sum, got '" + text + "'");
}

BoundarySource parse_boundary_source(const std::string& text) {
  if (text == "features") return BoundarySource::Features;
  if (text == "map") return BoundarySource::Map;
  throw ConfigError("fusion_boundary_source: expected features|map, got '" + text + "'");
}

std::string to_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "input_size = " << c.input_height << 'x' << c.input_width << '\n'
    << "learning_rate = " << format_double(c.learning_rate) << '\n'
    << "decay = " << format_double(c.decay) << '\n'
    << "lr_epoch_decay = " << format_double(c.lr_epoch_decay) << '\n'
    << "rms_epsilon = " << format_double(c.rms_epsilon) << '\n'
    << "epochs = " << c.epochs << '\n'
    << "max_steps = " << c.max_steps << '\n'
    << "lambda_seg = " << format_double(c.lambda_seg) << '\n'
    << "lambda_boundary = " << format_double(c.lambda_boundary) << '\n'
    << "weighting_mode = " << to_string(c.weighting_mode) << '\n'
    << "loss_reduction = " << to_string(c.loss_reduction) << '\n'
    << "seed = " << c.seed << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "width_divisor = " << c.width_divisor << '\n'
    << "backbone_blocks = " << c.backbone_blocks[0] << ',' << c.backbone_blocks[1] << ','
    << c.backbone_blocks[2] << ',' << c.backbone_blocks[3] << '\n'
    << "context_depth = " << c.context_depth << '\n'
    << "caa_max_positions = " << c.caa_max_positions << '\n'
    << "fusion_boundary_source = " << to_string(c.fusion_boundary_source) << '\n'
    << "bn_momentum = " << format_double(c.bn_momentum) << '\n'
    << "val_every = " << c.val_every << '\n';
  return o.str();
}

std::string to_text(const AblationFlags& f) {
  std::ostringstream o;
  o << "use_caa = " << (f.use_caa ? "true" : "false") << '\n'
    << "use_boundary_stream = " << (f.use_boundary_stream ? "true" : "false") << '\n'
    << "use_class_weighting = " << (f.use_class_weighting ? "true" : "false") << '\n';
  return o.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  std::istringstream in(to_text(TrainConfig{}));
  for (std::string line; std::getline(in, line);) keys.push_back(line.substr(0, line.find(" = ")));
  return keys;
}

bool apply_setting(TrainConfig& c, AblationFlags* flags, const std::string& key,
                   const std::string& value) {
  if (key == "input_size") parse_size(key, value, c.input_height, c.input_width);
  else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
  else if (key == "decay") c.decay = parse_double(key, value);
  else if (key == "lr_epoch_decay") c.lr_epoch_decay = parse_double(key, value);
  else if (key == "rms_epsilon") c.rms_epsilon = parse_double(key, value);
  else if (key == "epochs") c.epochs = parse_int<int>(key, value);
  else if (key == "max_steps") c.max_steps = parse_int<int>(key, value);
  else if (key == "lambda_seg") c.lambda_seg = parse_double(key, value);
  else if (key == "lambda_boundary") c.lambda_boundary = parse_double(key, value);
  else if (key == "weighting_mode") c.weighting_mode = parse_weighting_mode(value);
  else if (key == "loss_reduction") c.loss_reduction = parse_reduction(value);
  else if (key == "seed") c.seed = parse_int<std::uint64_t>(key, value);
  else if (key == "batch_size") c.batch_size = parse_int<int>(key, value);
  else if (key == "width_divisor") c.width_divisor = parse_int<int>(key, value);
  else if (key == "backbone_blocks") c.backbone_blocks = parse_blocks(key, value);
  else if (key == "context_depth") c.context_depth = parse_int<int>(key, value);
  else if (key == "caa_max_positions") c.caa_max_positions = parse_int<int>(key, value);
  else if (key == "fusion_boundary_source") c.fusion_boundary_source = parse_boundary_source(value);
  else if (key == "bn_momentum") c.bn_momentum = parse_double(key, value);
  else if (key == "val_every") c.val_every = parse_int<int>(key, value);
  else if (flags && key == "use_caa") flags->use_caa = parse_bool(key, value);
  else if (flags && key == "use_boundary_stream") flags->use_boundary_stream = parse_bool(key, value);
  else if (flags && key == "use_class_weighting") flags->use_class_weighting = parse_bool(key, value);
  else return false;
  return true;
}

TrainConfig config_from_text(const std::string& text, AblationFlags* flags) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!apply_setting(cfg, flags, key, value))
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return cfg;
}

TrainConfig load_config_file(const std::string& path, AblationFlags* flags) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str(), flags);
}

void save_config_file(const std::string& path, const TrainConfig& cfg, const AblationFlags* flags) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file " + path);
  out << to_text(cfg);
  if (flags) out << to_text(*flags);
  if (!out) throw IoError("failed writing config file " + path);
}

}  // namespace tbnet
