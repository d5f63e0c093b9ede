#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "pairloc/io.hpp"
#include "pairloc/synth.hpp"

using namespace pairloc;
using namespace pairloc::testing;

namespace {

void check_same(const Dataset& a, const Dataset& b) {
  REQUIRE(a.size() == b.size());
  CHECK(a.classes() == b.classes());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Bag &x = a.bags()[k], &y = b.bags()[k];
    CHECK(x.id == y.id);
    CHECK(x.labels == y.labels);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Proposal &p = x.proposals[i], &q = y.proposals[i];
      CHECK(p.features == q.features);  // exact
      CHECK(p.generic_features == q.generic_features);
      CHECK(p.gt_class == q.gt_class);
      CHECK(p.is_full_image == q.is_full_image);
      REQUIRE(p.box.has_value() == q.box.has_value());
      if (p.box) {
        CHECK(p.box->x1 == q.box->x1);
        CHECK(p.box->y2 == q.box->y2);
      }
    }
    CHECK(x.gt_boxes.size() == y.gt_boxes.size());
  }
}

}  // namespace

TEST_CASE("dataset round trip is exact") {
  SynthConfig cfg;
  cfg.num_classes = 3;
  cfg.bags_per_class = 5;
  const SynthData data = generate(cfg);
  std::stringstream s;
  write_dataset(data.target, s);
  const std::string text = s.str();
  const Dataset back = read_dataset(s);
  check_same(data.target, back);
  std::ostringstream again;
  write_dataset(back, again);
  CHECK(again.str() == text);

  const auto path = std::filesystem::temp_directory_path() / "pairloc_io_test.jsonl";
  save_dataset(data.source, path);
  check_same(data.source, load_dataset(path));
  std::filesystem::remove(path);
}

TEST_CASE("decimal values survive as written") {
  const std::string line =
      R"({"id":"a","labels":["x"],"proposals":[{"features":[0.1,-2.5e-300,123456.789,3.0]}]})";
  std::istringstream in(line + "\n");
  const Dataset d = read_dataset(in);
  CHECK(d.bags()[0].proposals[0].features[0] == 0.1);
  std::ostringstream out;
  write_dataset(d, out);
  CHECK(out.str().find("[0.1,-2.5e-300,123456.789,3.0]") != std::string::npos);
}

TEST_CASE("dual feature blocks load") {
  std::istringstream in(
      R"({"id":"a","labels":["x"],"proposals":[{"features":[1,2,3],"features_generic":[4,5],"box":[0,0,2,2],"gt_class":"x","is_full_image":true}],"gt_boxes":{"x":[[0,0,1,1]]}})"
      "\n"
      R"({"id":"b","labels":[],"proposals":[{"features":[1,2,3],"features_generic":[6,7]}]})");
  const Dataset d = read_dataset(in);
  CHECK(d.dim() == 3);
  CHECK(d.generic_dim() == 2);
  const Proposal& p = d.bags()[0].proposals[0];
  CHECK(p.has_generic_block());
  CHECK(p.generic() == std::vector<double>{4, 5});
  CHECK(p.is_full_image);
  CHECK(p.gt_class == ClassId("x"));
  CHECK(d.bags()[0].gt_boxes.at("x").size() == 1);
}

TEST_CASE("schema errors name the line") {
  auto error_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_dataset(in);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const std::string good = R"({"id":"a","labels":["x"],"proposals":[{"features":[1]}]})";
  CHECK(error_of(good + "\n" + R"({"id":"b","labels":["x"],"proposals":[{}]})").find("line 2") !=
        std::string::npos);
  CHECK(error_of(good + "\n\n" + "{not json").find("line 3") != std::string::npos);
  CHECK(error_of(R"({"labels":[],"proposals":[]})").find("line 1") != std::string::npos);
  CHECK(error_of(R"({"id":"a","labels":["x"],"proposals":[{"features":[1],"box":[0,0,1]}]})")
            .find("box") != std::string::npos);
  CHECK(error_of(R"({"id":"a","labels":["x"],"proposals":[{"features":["1"]}]})")
            .find("features") != std::string::npos);
  CHECK_FALSE(error_of(good).size());
}

TEST_CASE("model and selections round trip") {
  const ScoringModel m = ScoringModel::initialized(4, 3, {"a", "b"}, 8);
  const ScoringModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  CHECK(back.classes() == m.classes());
  const auto pa = m.parameter_blocks(), pb = back.parameter_blocks();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    CHECK(std::equal(pa[k].begin(), pa[k].end(), pb[k].begin(), pb[k].end()));
  }
  nlohmann::json broken = model_to_json(m);
  broken["embedding"]["b1"] = {1.0};
  CHECK_THROWS_AS(model_from_json(broken), DataError);

  const Selections s{{"a", {"a", {{"x", 1}, {"y", 0}}}}, {"b", {"b", {}}}};
  CHECK(selections_from_json(selections_to_json(s)) == s);
  CHECK_THROWS_AS(selections_from_json(nlohmann::json::parse(R"({"a":{"x":-1}})")), DataError);
}

TEST_CASE("trace csv") {
  ClassTrace t;
  t.rows.push_back({0.5, "init", 0, -3.0, -4.0, 10});
  t.rows.push_back({0.75, "icm", 1, -3.5, std::numeric_limits<double>::quiet_NaN(), 12});
  std::ostringstream out;
  write_traces_csv({{"a", t}}, out);
  CHECK(out.str() ==
        "class,seconds,kind,epoch,energy,lower_bound,pairwise_evals\n"
        "a,0.5,init,0,-3,-4,10\n"
        "a,0.75,icm,1,-3.5,,12\n");
}
