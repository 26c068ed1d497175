#include "tbnet/training/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "tbnet/core/error.hpp"
#include "tbnet/core/rng.hpp"
#include "tbnet/data/boundary.hpp"
#include "tbnet/data/dataset_io.hpp"
#include "tbnet/training/checkpoint.hpp"

namespace tbnet {

namespace fs = std::filesystem;

WeightingMode TrainState::effective_weighting() const {
  return flags.use_class_weighting ? config.weighting_mode : WeightingMode::None;
}

TrainState init_state(const TrainConfig& cfg, const AblationFlags& flags, const ClassTaxonomy& taxonomy,
                      const Dataset& train) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  TrainState state;
  state.config = cfg;
  state.flags = flags;
  state.taxonomy = taxonomy;
  state.class_weights = compute_class_weights(train, taxonomy.num_classes());
  state.net = std::make_unique<TBNet>(NetworkOptions::from_config(cfg, flags, taxonomy.num_classes()), cfg.seed);
  state.optimizer = std::make_unique<RMSProp>(state.net->parameters().trainable(), cfg.learning_rate, cfg.decay,
                                              cfg.rms_epsilon);
  return state;
}

namespace {

std::vector<Sample> conform(const Dataset& data, const TrainConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    Sample r = resize_sample(s, cfg.input_height, cfg.input_width);
    if (!r.boundary) r.boundary = extract_boundary(r.labels);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = substream(seed, "data_order", static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

double epoch_learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.learning_rate * std::pow(cfg.lr_epoch_decay, epoch);
}

class TrainLog {
 public:
  explicit TrainLog(const std::optional<fs::path>& dir) {
    if (!dir) return;
    const fs::path path = *dir / "train_log.jsonl";
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open training log " + path.string());
  }

  void write(const nlohmann::json& record) {
    if (!out_.is_open()) return;
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("training log write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace

void train(TrainState& state, const Dataset& train_data, const Dataset* val_data, const TrainOptions& options) {
  if (train_data.samples.empty()) throw ConfigError("training set is empty");
  const TrainConfig& cfg = state.config;
  if (options.out_dir) {
    std::error_code ec;
    fs::create_directories(*options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir->string() + ": " + ec.message());
  }
  const auto samples = conform(train_data, cfg);
  const int n = static_cast<int>(samples.size());
  const int batch = std::min(cfg.batch_size, n);
  const int batches_per_epoch = (n + batch - 1) / batch;
  const WeightingMode mode = state.effective_weighting();
  TrainLog log(options.out_dir);
  TBNet& net = *state.net;
  RMSProp& opt = *state.optimizer;

  auto save = [&](const std::string& name) {
    if (options.out_dir) save_checkpoint(*options.out_dir / name, state);
  };
  auto step_budget_left = [&] { return cfg.max_steps <= 0 || state.step < cfg.max_steps; };

  while (state.epoch < cfg.epochs && step_budget_left()) {
    opt.set_learning_rate(epoch_learning_rate(cfg, state.epoch));
    const auto order = epoch_order(cfg.seed, state.epoch, samples.size());
    while (state.batch_in_epoch < batches_per_epoch && step_budget_left()) {
      const int first = state.batch_in_epoch * batch;
      const int last = std::min(first + batch, n);
      std::vector<const Sample*> picked;
      std::vector<std::uint8_t> labels, boundary;
      for (int i = first; i < last; ++i) {
        const Sample& s = samples[order[static_cast<std::size_t>(i)]];
        picked.push_back(&s);
        labels.insert(labels.end(), s.labels.values.begin(), s.labels.values.end());
        boundary.insert(boundary.end(), s.boundary->values.begin(), s.boundary->values.end());
      }
      const int step = state.step + 1;
      opt.zero_grad();
      DualTaskLoss loss;
      try {
        const ForwardResult out = net.forward(Var(input_batch(picked)), true);
        loss = dual_task_loss(out, labels, boundary, state.class_weights, mode, cfg);
      } catch (const NumericError& e) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                           std::to_string(state.epoch) + "): " + e.what());
      }
      StepRecord record{step, state.epoch, loss.report(), opt.learning_rate()};
      record.loss.lambda_seg = cfg.lambda_seg;
      record.loss.lambda_boundary = cfg.lambda_boundary;
      if (!std::isfinite(record.loss.total))
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                           std::to_string(state.epoch) + ")");
      loss.total.backward();
      opt.step();
      state.step = step;
      ++state.batch_in_epoch;
      log.write({{"step", step},
                 {"epoch", record.epoch},
                 {"seg", record.loss.seg},
                 {"boundary", record.loss.boundary},
                 {"total", record.loss.total},
                 {"lr", record.learning_rate}});
      if (options.on_step) options.on_step(record);
    }
    if (state.batch_in_epoch < batches_per_epoch) break;  // step budget reached mid-epoch

    const int finished = state.epoch;
    ++state.epoch;
    state.batch_in_epoch = 0;
    const bool validate = val_data && !val_data->samples.empty() &&
                          ((finished + 1) % cfg.val_every == 0 || state.epoch == cfg.epochs);
    if (validate) {
      Dataset resized;
      resized.split = val_data->split;
      resized.samples = conform(*val_data, cfg);
      const MetricsReport report = evaluate(state, resized);
      log.write({{"epoch", finished},
                 {"step", state.step},
                 {"val_mpa", report.mean_cpa ? nlohmann::json(*report.mean_cpa) : nlohmann::json(nullptr)},
                 {"val_miou", report.mean_iou ? nlohmann::json(*report.mean_iou) : nlohmann::json(nullptr)}});
      if (options.on_validate) options.on_validate(finished, report);
      if (report.miou() > state.best_val_miou) {
        state.best_val_miou = report.miou();
        save("checkpoint_best.bin");
      }
    }
    save("checkpoint_last.bin");
  }
  save("checkpoint_last.bin");
  if (!val_data || val_data->samples.empty()) save("checkpoint_best.bin");
}

namespace {

void check_size(const TrainState& state, const Sample& s) {
  if (!s.image.same_shape(state.config.input_height, state.config.input_width))
    throw ConfigConflictError("sample " + s.id + " is " + std::to_string(s.image.height) + "x" +
                              std::to_string(s.image.width) + " but the checkpoint was trained at " +
                              std::to_string(state.config.input_height) + "x" +
                              std::to_string(state.config.input_width));
}

}  // namespace

ConfusionMatrix confusion(TrainState& state, const Dataset& data) {
  ConfusionMatrix cm(state.taxonomy.num_classes());
  for (const auto& s : data.samples) check_size(state, s);
  const std::size_t batch = static_cast<std::size_t>(std::max(1, state.config.batch_size));
  for (std::size_t first = 0; first < data.samples.size(); first += batch) {
    std::vector<const Sample*> picked;
    for (std::size_t i = first; i < std::min(first + batch, data.samples.size()); ++i)
      picked.push_back(&data.samples[i]);
    const NetworkOutput out = state.net->infer(input_batch(picked));
    for (std::size_t k = 0; k < picked.size(); ++k)
      cm.accumulate(argmax_labels(out.seg_probs, static_cast<int>(k)), picked[k]->labels);
  }
  return cm;
}

MetricsReport evaluate(TrainState& state, const Dataset& data) {
  return compute_metrics(confusion(state, data), state.taxonomy);
}

Prediction predict(TrainState& state, const Image& image) {
  const int h = state.config.input_height, w = state.config.input_width;
  const NetworkOutput out = state.net->infer(input_batch(resize_bilinear(image, h, w)));
  Prediction p;
  p.labels = resize_nearest(argmax_labels(out.seg_probs), image.height, image.width);
  if (!out.boundary_prob.empty()) {
    Image b(h, w);
    std::copy_n(out.boundary_prob.data(), b.size(), b.values.begin());
    p.boundary = resize_bilinear(b, image.height, image.width);
  }
  return p;
}

LabelMap argmax_labels(const Tensor& probs, int n) {
  const Shape s = probs.shape();
  if (n < 0 || n >= s.n) throw ShapeError("image index " + std::to_string(n) + " outside batch " + s.str());
  LabelMap labels(s.h, s.w);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      int best = 0;
      for (int c = 1; c < s.c; ++c)
        if (probs.at(n, c, y, x) > probs.at(n, best, y, x)) best = c;
      labels(y, x) = static_cast<std::uint8_t>(best);
    }
  return labels;
}

}  // namespace tbnet
