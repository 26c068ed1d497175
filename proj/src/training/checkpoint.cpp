#include "tbnet/training/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tbnet/core/error.hpp"

namespace tbnet {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'T', 'B', 'N', 'E', 'T', 'C', 'K', '1'};

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(std::span<const double> v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    const Shape s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) pod<std::int32_t>(d);
    doubles(t.values());
  }
  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void close() {
    out_.close();
    if (!out_) throw IoError("write to " + path_.string() + " failed");
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw LoadError("cannot open checkpoint " + path.string());
  }
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string str() {
    const auto n = bounded(pod<std::uint64_t>());
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  std::vector<double> doubles() {
    const auto n = bounded(pod<std::uint64_t>() * sizeof(double)) / sizeof(double);
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return v;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    Shape s;
    s.n = pod<std::int32_t>();
    s.c = pod<std::int32_t>();
    s.h = pod<std::int32_t>();
    s.w = pod<std::int32_t>();
    auto values = doubles();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || values.size() != s.numel())
      throw LoadError("checkpoint " + path_.string() + ": tensor " + name + " has inconsistent shape");
    Tensor t(s, 0.0);
    std::copy(values.begin(), values.end(), t.values().begin());
    return {std::move(name), std::move(t)};
  }
  void raw(char* data, std::size_t n) {
    in_.read(data, static_cast<std::streamsize>(n));
    check();
  }

 private:
  void check() {
    if (!in_) throw LoadError("checkpoint " + path_.string() + " is truncated");
  }
  std::uint64_t bounded(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 36)) throw LoadError("checkpoint " + path_.string() + " is corrupt");
    return n;
  }

  fs::path path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    Writer w(tmp);
    w.raw(kMagic, sizeof kMagic);
    w.str(to_text(state.config));
    w.str(to_text(state.flags));
    w.str(state.taxonomy.to_text());
    w.pod<std::int32_t>(state.taxonomy.background_id());
    w.doubles(state.class_weights.raw);
    w.doubles(state.class_weights.normalized);
    w.pod<std::int64_t>(state.epoch);
    w.pod<std::int64_t>(state.batch_in_epoch);
    w.pod<std::int64_t>(state.step);
    w.pod<double>(state.best_val_miou);
    w.pod<double>(state.optimizer->learning_rate());

    const auto& entries = state.net->parameters().entries();
    std::vector<std::string> trainable_names;
    for (const auto& e : entries)
      if (e.trainable) trainable_names.push_back(e.name);
    const auto& accum = state.optimizer->accumulators();
    w.pod<std::uint64_t>(entries.size() + accum.size());
    for (const auto& e : entries) w.tensor(e.name, e.var.value());
    for (std::size_t k = 0; k < accum.size(); ++k) w.tensor("optimizer/" + trainable_names[k], accum[k]);
    w.close();
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

TrainState load_checkpoint(const fs::path& path) {
  Reader r(path);
  char magic[sizeof kMagic];
  try {
    r.raw(magic, sizeof magic);
  } catch (const LoadError&) {
    throw LoadError(path.string() + " is not a checkpoint");
  }
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw LoadError(path.string() + " is not a checkpoint");

  TrainState state;
  try {
    const auto config_text = r.str();
    const auto flags_text = r.str();
    state.config = config_from_text(config_text + flags_text, &state.flags);
  } catch (const ConfigError& e) {
    throw LoadError("checkpoint " + path.string() + " has an unreadable config: " + e.what());
  }
  const auto taxonomy_text = r.str();
  const auto background = r.pod<std::int32_t>();
  try {
    state.taxonomy = ClassTaxonomy(ClassTaxonomy::from_text(taxonomy_text).classes(), background);
  } catch (const ConfigError& e) {
    throw LoadError("checkpoint " + path.string() + " has an unreadable taxonomy: " + e.what());
  }
  state.class_weights.raw = r.doubles();
  state.class_weights.normalized = r.doubles();
  state.epoch = static_cast<int>(r.pod<std::int64_t>());
  state.batch_in_epoch = static_cast<int>(r.pod<std::int64_t>());
  state.step = static_cast<int>(r.pod<std::int64_t>());
  state.best_val_miou = r.pod<double>();
  const double lr = r.pod<double>();

  std::map<std::string, Tensor> tensors;
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) tensors.insert(r.tensor());

  state.net = std::make_unique<TBNet>(
      NetworkOptions::from_config(state.config, state.flags, state.taxonomy.num_classes()), state.config.seed);
  ParameterSet& params = state.net->parameters();
  std::vector<Tensor> accum;
  for (const auto& e : params.entries()) {
    if (!tensors.count(e.name)) throw LoadError("checkpoint " + path.string() + " lacks tensor " + e.name);
    if (e.trainable) {
      auto it = tensors.find("optimizer/" + e.name);
      if (it == tensors.end()) throw LoadError("checkpoint " + path.string() + " lacks optimizer state for " + e.name);
      accum.push_back(it->second);
    }
  }
  try {
    params.load(tensors);
  } catch (const ShapeError& e) {
    throw LoadError("checkpoint " + path.string() + ": " + e.what());
  }
  state.optimizer = std::make_unique<RMSProp>(params.trainable(), state.config.learning_rate, state.config.decay,
                                              state.config.rms_epsilon);
  state.optimizer->set_accumulators(std::move(accum));
  state.optimizer->set_learning_rate(lr);
  return state;
}

}  // namespace tbnet
