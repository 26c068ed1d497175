#include <doctest.h>

#include <json.hpp>
#include <random>

#include "tbnet/core/error.hpp"
#include "tbnet/metrics/metrics.hpp"

using namespace tbnet;

TEST_CASE("two-class hand example") {
  const MetricsReport r = compute_metrics(ConfusionMatrix::from_counts({{3, 1}, {2, 4}}));
  CHECK(*r.classes[0].cpa == 0.75);
  CHECK(*r.classes[1].cpa == doctest::Approx(0.6667).epsilon(1e-4));
  CHECK(*r.classes[0].iou == 0.5);
  CHECK(*r.classes[1].iou == doctest::Approx(0.5714).epsilon(1e-4));
  CHECK(r.classes[0].support == 4);
  CHECK(r.classes[1].support == 6);
  // means skip background
  CHECK(*r.mean_cpa == doctest::Approx(4.0 / 6.0));
  CHECK(*r.mean_iou == doctest::Approx(4.0 / 7.0));
}

TEST_CASE("perfect predictions give one and absent classes are undefined") {
  ConfusionMatrix cm(4);
  cm.add(0, 0, 10);
  cm.add(1, 1, 5);
  cm.add(3, 3, 2);
  const MetricsReport r = compute_metrics(cm);
  for (int c : {0, 1, 3}) {
    CHECK(*r.classes[c].cpa == 1.0);
    CHECK(*r.classes[c].iou == 1.0);
  }
  CHECK_FALSE(r.classes[2].cpa.has_value());
  CHECK_FALSE(r.classes[2].iou.has_value());
  CHECK(*r.mean_iou == 1.0);
  CHECK(*r.mean_cpa == 1.0);
}

TEST_CASE("predicted-only class has IoU 0 and no CPA") {
  ConfusionMatrix cm(3);
  cm.add(1, 2, 4);
  cm.add(1, 1, 4);
  const MetricsReport r = compute_metrics(cm);
  CHECK_FALSE(r.classes[2].cpa.has_value());
  CHECK(*r.classes[2].iou == 0.0);
  CHECK(*r.mean_iou == doctest::Approx(0.25));
}

TEST_CASE("accumulate tallies truth rows and prediction columns") {
  ConfusionMatrix cm(3);
  const std::vector<std::uint8_t> pred{1, 1}, truth{0, 1};
  cm.accumulate(pred, truth);
  CHECK(cm(0, 1) == 1);
  CHECK(cm(1, 1) == 1);
  CHECK(cm.total() == 2);

  ConfusionMatrix diag(3);
  const std::vector<std::uint8_t> twos(10, 2);
  diag.accumulate(twos, twos);
  CHECK(diag(2, 2) == 10);
  CHECK(diag.total() == 10);

  CHECK_THROWS_AS(cm.accumulate(std::vector<std::uint8_t>{3}, std::vector<std::uint8_t>{0}), ValidationError);
  CHECK_THROWS_AS(cm.accumulate(std::vector<std::uint8_t>{0, 1}, std::vector<std::uint8_t>{0}), ShapeError);
  CHECK_THROWS_AS(cm.merge(ConfusionMatrix(2)), ShapeError);
}

TEST_CASE("metric properties on random matrices") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cls(0, 4);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::uint8_t> a_pred(50), a_truth(50), b_pred(40), b_truth(40);
    for (auto* v : {&a_pred, &a_truth, &b_pred, &b_truth})
      for (auto& x : *v) x = static_cast<std::uint8_t>(cls(rng));

    ConfusionMatrix ab(5), ba(5), a(5), b(5);
    ab.accumulate(a_pred, a_truth);
    ab.accumulate(b_pred, b_truth);
    ba.accumulate(b_pred, b_truth);
    ba.accumulate(a_pred, a_truth);
    a.accumulate(a_pred, a_truth);
    b.accumulate(b_pred, b_truth);
    a.merge(b);
    CHECK(ab == ba);
    CHECK(ab == a);

    const MetricsReport r = compute_metrics(ab);
    for (const auto& c : r.classes)
      if (c.cpa && c.iou) CHECK(*c.iou <= *c.cpa);

    // permuting ids in both pred and truth permutes the report
    const std::uint8_t perm[] = {0, 3, 1, 4, 2};
    ConfusionMatrix p(5);
    for (std::size_t m = 0; m < a_pred.size(); ++m) p.add(perm[a_truth[m]], perm[a_pred[m]]);
    for (std::size_t m = 0; m < b_pred.size(); ++m) p.add(perm[b_truth[m]], perm[b_pred[m]]);
    const MetricsReport rp = compute_metrics(p);
    for (int c = 0; c < 5; ++c) {
      CHECK(rp.classes[perm[c]].cpa == r.classes[c].cpa);
      CHECK(rp.classes[perm[c]].iou == r.classes[c].iou);
    }
  }
}

TEST_CASE("reports serialize with nulls and a Mean column") {
  ConfusionMatrix cm(9);
  cm.add(0, 0, 100);
  cm.add(1, 1, 3);
  cm.add(1, 0, 1);
  const MetricsReport r = compute_metrics(cm, ClassTaxonomy::pavement());
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["classes"].size() == 9);
  CHECK(j["classes"][1]["name"] == "crack");
  CHECK(j["classes"][1]["cpa"].get<double>() == 0.75);
  CHECK(j["classes"][2]["cpa"].is_null());
  CHECK(j["mean"]["iou"].get<double>() == 0.75);

  const std::string table = r.to_table();
  const std::string header = table.substr(0, table.find('\n'));
  for (int c = 1; c < 9; ++c) CHECK(header.find(ClassTaxonomy::pavement().name(c)) != std::string::npos);
  CHECK(header.find("background") == std::string::npos);
  CHECK(header.find("Mean") != std::string::npos);
  CHECK(r.to_json() == compute_metrics(cm, ClassTaxonomy::pavement()).to_json());
}
