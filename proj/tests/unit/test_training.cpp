#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include <unistd.h>

#include "tbnet/core/error.hpp"
#include "tbnet/data/generator.hpp"
#include "tbnet/network/ops.hpp"
#include "tbnet/training/checkpoint.hpp"
#include "tbnet/training/trainer.hpp"

using namespace tbnet;
namespace fs = std::filesystem;

namespace {

// Small and fast: 64x64, one unit per backbone stage.
TrainConfig tiny_config() {
  TrainConfig cfg = TrainConfig::desk();
  cfg.input_height = cfg.input_width = 64;
  cfg.backbone_blocks = {1, 1, 1, 1};
  cfg.learning_rate = 1e-3;
  cfg.epochs = 2;
  cfg.seed = 3;
  return cfg;
}

Dataset tiny_data(int n, int size = 64, std::uint64_t seed = 1, Split split = Split::Train) {
  GeneratorSpec spec;
  spec.num_samples = n;
  spec.height = spec.width = size;
  spec.seed = seed;
  return generate_dataset(spec, split);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tbnet_train_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("RMSProp first step matches the update rule") {
  Var p(Tensor({1, 1, 1, 2}, 0.0), true);
  p.mutable_value()[0] = 1.0;
  p.mutable_value()[1] = -2.0;
  RMSProp opt({p}, 0.01, 0.9, 1e-10);
  // loss = 3 p0  ->  g = (3, 0)
  Tensor coef({1, 1, 1, 2}, 0.0);
  coef[0] = 3.0;
  ops::sum(ops::mul(p, Var(coef))).backward();
  const double g0 = 3.0;
  opt.step();
  const double v0 = 0.1 * g0 * g0;
  CHECK(p.value()[0] == doctest::Approx(1.0 - 0.01 * g0 / std::sqrt(v0 + 1e-10)).epsilon(1e-15));
  CHECK(p.value()[1] == -2.0);
  CHECK(opt.accumulators()[0][0] == doctest::Approx(v0).epsilon(1e-15));
}

TEST_CASE("RMSProp converges on a quadratic bowl") {
  Var p(Tensor({1, 1, 1, 2}, 0.0), true);
  p.mutable_value()[0] = 3.0;
  p.mutable_value()[1] = -1.5;
  Tensor neg_center({1, 1, 1, 2}, 0.0);
  neg_center[0] = -1.0;
  neg_center[1] = 2.0;
  Tensor scale({1, 1, 1, 2}, 0.0);
  scale[0] = 1.0;
  scale[1] = 10.0;
  RMSProp opt({p}, 0.01, 0.995, 1e-10);
  // 1 (x - 1)^2 + 10 (y + 2)^2
  auto loss = [&] {
    const Var d = ops::add(p, Var(neg_center));
    return ops::sum(ops::mul(Var(scale), ops::mul(d, d)));
  };
  for (int step = 0; step < 500; ++step) {
    opt.zero_grad();
    loss().backward();
    opt.step();
  }
  CHECK(loss().value().item() < 1e-6);
}

TEST_CASE("RMSProp step with zero gradients leaves parameters unchanged") {
  Var p(Tensor({1, 2, 2, 2}, 0.37), true);
  RMSProp opt({p}, 0.1, 0.995, 1e-10);
  ops::scale(ops::sum(p), 0.0).backward();
  const Tensor before = p.value();
  opt.step();
  CHECK(p.value() == before);
  CHECK_THROWS_AS(opt.set_accumulators({}), ShapeError);
  CHECK_THROWS_AS(opt.set_accumulators({Tensor({1, 1, 1, 1}, 0.0)}), ShapeError);
  CHECK_THROWS_AS(RMSProp({p}, 0.0, 0.9, 1e-10), ConfigError);
}

TEST_CASE("init_state rejects invalid configs with every message") {
  TrainConfig cfg = tiny_config();
  cfg.learning_rate = -1;
  cfg.lambda_boundary = -2;
  try {
    init_state(cfg, {}, ClassTaxonomy::pavement(), tiny_data(1));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("learning_rate") != std::string::npos);
    CHECK(msg.find("lambda_boundary") != std::string::npos);
  }
}

TEST_CASE("ablation flags change the parameter set") {
  const Dataset d = tiny_data(1);
  const TrainState full = init_state(tiny_config(), {}, ClassTaxonomy::pavement(), d);
  const TrainState bare = init_state(tiny_config(), {false, false, false}, ClassTaxonomy::pavement(), d);
  CHECK(full.net->parameters().parameter_count() != bare.net->parameters().parameter_count());
  CHECK(bare.effective_weighting() == WeightingMode::None);
  CHECK(full.effective_weighting() == WeightingMode::PerPixel);
}

TEST_CASE("disabling class weighting equals the unweighted loss path") {
  const Dataset d = tiny_data(2);
  TrainState st = init_state(tiny_config(), {true, true, false}, ClassTaxonomy::pavement(), d);
  std::vector<const Sample*> batch{&d.samples[0], &d.samples[1]};
  std::vector<std::uint8_t> labels, boundary;
  for (const Sample* s : batch) {
    labels.insert(labels.end(), s->labels.values.begin(), s->labels.values.end());
    boundary.insert(boundary.end(), s->boundary->values.begin(), s->boundary->values.end());
  }
  const ForwardResult out = st.net->forward(Var(input_batch(batch)), false);
  const DualTaskLoss l =
      dual_task_loss(out, labels, boundary, st.class_weights, st.effective_weighting(), st.config);
  const double plain = weighted_ce(out.seg_probs.value(), labels, ClassWeights::uniform(9), WeightingMode::None);
  CHECK(l.seg.value().item() == plain);
  CHECK(l.report().total == plain + boundary_bce(out.boundary_prob.value(), boundary));
}

TEST_CASE("training loss decreases over most epochs") {
  TrainConfig cfg = TrainConfig::desk();
  cfg.learning_rate = 1e-3;
  cfg.max_steps = 200;
  cfg.epochs = 1000;
  cfg.seed = 5;
  GeneratorSpec spec;
  spec.num_samples = 4;
  spec.seed = 5;
  const Dataset d = generate_dataset(spec);
  TrainState st = init_state(cfg, {}, ClassTaxonomy::pavement(), d);
  std::vector<double> sums;
  std::vector<int> counts;
  TrainOptions opt;
  opt.on_step = [&](const StepRecord& r) {
    if (static_cast<int>(sums.size()) <= r.epoch) sums.resize(r.epoch + 1, 0.0), counts.resize(r.epoch + 1, 0);
    sums[r.epoch] += r.loss.total;
    counts[r.epoch] += 1;
  };
  train(st, d, nullptr, opt);
  CHECK(st.step == 200);
  CHECK(sums.size() == 100);
  int decreasing = 0;
  for (std::size_t e = 1; e < sums.size(); ++e) decreasing += sums[e] / counts[e] < sums[e - 1] / counts[e - 1];
  const double fraction = decreasing / static_cast<double>(sums.size() - 1);
  MESSAGE("decreasing epoch pairs: " << fraction);
  CHECK(fraction >= 0.8);
}

TEST_CASE("train writes logs and both checkpoints") {
  const fs::path dir = scratch_dir("files");
  TrainConfig cfg = tiny_config();
  cfg.lr_epoch_decay = 0.5;
  const Dataset d = tiny_data(3);
  const Dataset val = tiny_data(2, 64, 1, Split::Val);
  TrainState st = init_state(cfg, {}, ClassTaxonomy::pavement(), d);
  std::vector<StepRecord> records;
  int validations = 0;
  TrainOptions opt;
  opt.out_dir = dir;
  opt.on_step = [&](const StepRecord& r) { records.push_back(r); };
  opt.on_validate = [&](int, const MetricsReport&) { ++validations; };
  train(st, d, &val, opt);
  // 3 samples, batch 2: two steps per epoch, the second with one sample
  REQUIRE(records.size() == 4);
  CHECK(records[0].step == 1);
  CHECK(records[3].epoch == 1);
  CHECK(records[0].learning_rate == cfg.learning_rate);
  CHECK(records[2].learning_rate == cfg.learning_rate * 0.5);
  CHECK(validations == 2);
  CHECK(st.epoch == 2);
  CHECK(st.best_val_miou >= 0.0);
  CHECK(fs::exists(dir / "checkpoint_last.bin"));
  CHECK(fs::exists(dir / "checkpoint_best.bin"));
  std::ifstream log(dir / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 4 + 2);
  fs::remove_all(dir);
}

TEST_CASE("resuming from a checkpoint reproduces the next step exactly") {
  const fs::path dir = scratch_dir("resume");
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  const Dataset d = tiny_data(3);

  TrainState ref = init_state(cfg, {}, ClassTaxonomy::pavement(), d);
  std::vector<StepRecord> full;
  TrainOptions record_all;
  record_all.on_step = [&](const StepRecord& r) { full.push_back(r); };
  train(ref, d, nullptr, record_all);
  REQUIRE(full.size() == 6);

  TrainConfig partial = cfg;
  partial.max_steps = 3;  // stop mid-epoch
  TrainState first = init_state(partial, {}, ClassTaxonomy::pavement(), d);
  TrainOptions to_disk;
  to_disk.out_dir = dir;
  train(first, d, nullptr, to_disk);
  CHECK(first.step == 3);
  CHECK(first.batch_in_epoch == 1);

  TrainState resumed = load_checkpoint(dir / "checkpoint_last.bin");
  CHECK(resumed.step == 3);
  resumed.config.max_steps = 0;
  std::vector<StepRecord> rest;
  TrainOptions record_rest;
  record_rest.on_step = [&](const StepRecord& r) { rest.push_back(r); };
  train(resumed, d, nullptr, record_rest);
  REQUIRE(rest.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(rest[k].step == full[k + 3].step);
    CHECK(rest[k].loss.total == full[k + 3].loss.total);
    CHECK(rest[k].loss.seg == full[k + 3].loss.seg);
    CHECK(rest[k].loss.boundary == full[k + 3].loss.boundary);
  }
  CHECK(resumed.net->parameters().snapshot() == ref.net->parameters().snapshot());
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip and corrupt files") {
  const fs::path dir = scratch_dir("ckpt");
  fs::create_directories(dir);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  const Dataset d = tiny_data(2);
  TrainState st = init_state(cfg, {true, false, true}, ClassTaxonomy::pavement(), d);
  train(st, d);
  save_checkpoint(dir / "a.bin", st);
  const TrainState back = load_checkpoint(dir / "a.bin");
  CHECK(back.config == st.config);
  CHECK(back.flags == st.flags);
  CHECK(back.taxonomy == st.taxonomy);
  CHECK(back.class_weights.normalized == st.class_weights.normalized);
  CHECK(back.step == st.step);
  CHECK(back.net->parameters().snapshot() == st.net->parameters().snapshot());
  for (std::size_t k = 0; k < st.optimizer->accumulators().size(); ++k)
    CHECK(back.optimizer->accumulators()[k] == st.optimizer->accumulators()[k]);
  CHECK_FALSE(back.net->parameters().contains("boundary/ggc/conv1/weight"));

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), LoadError);
  std::ofstream(dir / "junk.bin") << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), LoadError);
  const auto size = fs::file_size(dir / "a.bin");
  fs::copy_file(dir / "a.bin", dir / "cut.bin");
  fs::resize_file(dir / "cut.bin", size / 2);
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.bin"), LoadError);
  CHECK_THROWS_AS(save_checkpoint("/proc/tbnet/none.bin", st), IoError);
  fs::remove_all(dir);
}

TEST_CASE("a non-finite loss aborts naming the step") {
  TrainConfig cfg = tiny_config();
  const Dataset d = tiny_data(2);
  TrainState st = init_state(cfg, {}, ClassTaxonomy::pavement(), d);
  st.net->parameters().find("fusion/classifier/bias")->var.node()->value.fill(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(train(st, d), doctest::Contains("step 1"), NumericError);
}

TEST_CASE("evaluate is finite, repeatable and size checked") {
  const Dataset d = tiny_data(3);
  TrainState st = init_state(tiny_config(), {}, ClassTaxonomy::pavement(), d);
  const MetricsReport a = evaluate(st, d), b = evaluate(st, d);
  CHECK(a.to_json() == b.to_json());
  for (const auto& c : a.classes) {
    if (c.iou) CHECK(std::isfinite(*c.iou));
    if (c.cpa) CHECK(std::isfinite(*c.cpa));
  }
  CHECK(confusion(st, d).total() == 3u * 64 * 64);
  CHECK_THROWS_AS(evaluate(st, tiny_data(1, 32)), ConfigConflictError);
}

TEST_CASE("predict returns maps at the image size") {
  TrainState st = init_state(tiny_config(), {}, ClassTaxonomy::pavement(), tiny_data(1));
  const Image img = tiny_data(1, 80).samples[0].image;
  const Prediction p = predict(st, img);
  CHECK(p.labels.height == 80);
  CHECK(p.labels.width == 80);
  CHECK(p.boundary.height == 80);
  for (double v : p.boundary.values) CHECK((v >= 0.0 && v <= 1.0));
  TrainState bare = init_state(tiny_config(), {true, false, true}, ClassTaxonomy::pavement(), tiny_data(1));
  CHECK(predict(bare, img).boundary.values.empty());
}

TEST_CASE("argmax picks the hot index and breaks ties toward the lower id") {
  Tensor p({1, 3, 1, 3}, 0.0);
  p.at(0, 2, 0, 0) = 1.0;
  p.at(0, 1, 0, 1) = 1.0;
  p.at(0, 1, 0, 2) = 0.5;
  p.at(0, 2, 0, 2) = 0.5;
  const LabelMap l = argmax_labels(p);
  CHECK(l(0, 0) == 2);
  CHECK(l(0, 1) == 1);
  CHECK(l(0, 2) == 1);
  Tensor flat({1, 3, 1, 1}, 1.0 / 3);
  CHECK(argmax_labels(flat)(0, 0) == 0);
  CHECK_THROWS_AS(argmax_labels(p, 1), ShapeError);
}
