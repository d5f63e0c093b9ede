#include "pairloc/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace pairloc {

using nlohmann::json;

namespace {

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be an array of 4 numbers");
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError("box must be an array of 4 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::vector<double> numbers(const json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError(std::string(what) + " must be an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd to_vec(const json& j) {
  const auto v = numbers(j, "vector");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_mat(const json& j) {
  if (!j.is_array()) throw DataError("matrix must be an array of rows");
  Eigen::MatrixXd m;
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto row = numbers(j[r], "matrix row");
    if (r == 0) m.resize(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(row.size()));
    if (static_cast<Eigen::Index>(row.size()) != m.cols()) throw DataError("ragged matrix");
    for (std::size_t c = 0; c < row.size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
  }
  return m;
}

json embedding_json(const Embedding& e) {
  return {{"w1", mat(e.w1)}, {"b1", vec(e.b1)}, {"w2", mat(e.w2)}, {"b2", vec(e.b2)}};
}

Embedding embedding_from(const json& j) {
  return {to_mat(j.at("w1")), to_mat(j.at("w2")), to_vec(j.at("b1")), to_vec(j.at("b2"))};
}

json linear_json(const Eigen::VectorXd& w, double b) { return {{"weight", vec(w)}, {"bias", b}}; }

}  // namespace

json bag_to_json(const Bag& bag) {
  json j;
  j["id"] = bag.id;
  j["labels"] = bag.labels;
  json props = json::array();
  for (const Proposal& p : bag.proposals) {
    json q;
    q["features"] = p.features;
    if (p.has_generic_block()) q["features_generic"] = p.generic_features;
    if (p.box) q["box"] = box_to_json(*p.box);
    if (p.gt_class) q["gt_class"] = *p.gt_class;
    if (p.is_full_image) q["is_full_image"] = true;
    props.push_back(std::move(q));
  }
  j["proposals"] = std::move(props);
  if (!bag.gt_boxes.empty()) {
    json gt = json::object();
    for (const auto& [c, boxes] : bag.gt_boxes) {
      json arr = json::array();
      for (const Box& b : boxes) arr.push_back(box_to_json(b));
      gt[c] = std::move(arr);
    }
    j["gt_boxes"] = std::move(gt);
  }
  return j;
}

Bag bag_from_json(const json& j) {
  if (!j.is_object()) throw DataError("bag must be a JSON object");
  Bag bag;
  if (!j.contains("id") || !j["id"].is_string()) throw DataError("missing string field 'id'");
  bag.id = j["id"].get<std::string>();
  if (!j.contains("labels") || !j["labels"].is_array()) throw DataError("missing array field 'labels'");
  for (const auto& l : j["labels"]) {
    if (!l.is_string()) throw DataError("labels must be strings");
    bag.labels.insert(l.get<std::string>());
  }
  if (!j.contains("proposals") || !j["proposals"].is_array()) {
    throw DataError("missing array field 'proposals'");
  }
  std::size_t k = 0;
  for (const auto& q : j["proposals"]) {
    const std::string where = "proposal " + std::to_string(k++) + ": ";
    if (!q.is_object()) throw DataError(where + "must be an object");
    if (!q.contains("features")) throw DataError(where + "missing field 'features'");
    Proposal p;
    try {
      p.features = numbers(q["features"], "features");
      if (q.contains("features_generic")) {
        p.generic_features = numbers(q["features_generic"], "features_generic");
      }
      if (q.contains("box")) p.box = box_from_json(q["box"]);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (q.contains("gt_class")) {
      if (!q["gt_class"].is_string()) throw DataError(where + "gt_class must be a string");
      p.gt_class = q["gt_class"].get<std::string>();
    }
    if (q.contains("is_full_image")) {
      if (!q["is_full_image"].is_boolean()) throw DataError(where + "is_full_image must be a bool");
      p.is_full_image = q["is_full_image"].get<bool>();
    }
    bag.proposals.push_back(std::move(p));
  }
  if (j.contains("gt_boxes")) {
    if (!j["gt_boxes"].is_object()) throw DataError("gt_boxes must be an object");
    for (const auto& [c, arr] : j["gt_boxes"].items()) {
      if (!arr.is_array()) throw DataError("gt_boxes entries must be arrays of boxes");
      for (const auto& b : arr) bag.gt_boxes[c].push_back(box_from_json(b));
    }
  }
  return bag;
}

Dataset read_dataset(std::istream& in) {
  std::vector<Bag> bags;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      bags.push_back(bag_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(number) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return Dataset(std::move(bags));
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  for (const Bag& bag : dataset.bags()) out << bag_to_json(bag).dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_dataset(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(dataset, out);
}

json model_to_json(const ScoringModel& m) {
  json j;
  j["dim"] = m.dim();
  j["generic_dim"] = m.generic_dim();
  j["classes"] = m.classes();
  j["generic_unary"] = linear_json(m.generic_unary.weight, m.generic_unary.bias);
  j["generic_pairwise"] = {{"embedding", embedding_json(m.generic_pairwise.embedding)},
                           {"head", linear_json(m.generic_pairwise.head.weight,
                                                m.generic_pairwise.head.bias)}};
  j["embedding"] = embedding_json(m.embedding);
  json unary = json::object(), heads = json::object();
  for (const auto& [c, u] : m.unary) unary[c] = linear_json(u.weight, u.bias);
  for (const auto& [c, h] : m.heads) heads[c] = linear_json(h.weight, h.bias);
  j["unary"] = std::move(unary);
  j["heads"] = std::move(heads);
  return j;
}

ScoringModel model_from_json(const json& j) {
  try {
    ScoringModel m = model_from_parts(j.at("dim").get<std::size_t>(),
                                      j.at("generic_dim").get<std::size_t>(),
                                      j.at("classes").get<std::vector<ClassId>>());
    m.generic_unary = {to_vec(j.at("generic_unary").at("weight")),
                       j.at("generic_unary").at("bias").get<double>()};
    const json& gp = j.at("generic_pairwise");
    m.generic_pairwise.embedding = embedding_from(gp.at("embedding"));
    m.generic_pairwise.head = {to_vec(gp.at("head").at("weight")),
                               gp.at("head").at("bias").get<double>()};
    m.embedding = embedding_from(j.at("embedding"));
    for (const ClassId& c : m.classes()) {
      const json& u = j.at("unary").at(c);
      const json& h = j.at("heads").at(c);
      m.unary[c] = {to_vec(u.at("weight")), u.at("bias").get<double>()};
      m.heads[c] = {to_vec(h.at("weight")), h.at("bias").get<double>()};
    }
    const auto d = static_cast<Eigen::Index>(m.dim()), g = static_cast<Eigen::Index>(m.generic_dim());
    auto check = [](bool ok) {
      if (!ok) throw DataError("model: parameter shape does not match its dimensions");
    };
    check(m.generic_unary.weight.size() == g && m.generic_pairwise.head.weight.size() == g);
    check(m.generic_pairwise.embedding.w1.rows() == g && m.generic_pairwise.embedding.w1.cols() == 2 * g);
    check(m.generic_pairwise.embedding.w2.rows() == g && m.generic_pairwise.embedding.w2.cols() == 2 * g);
    check(m.generic_pairwise.embedding.b1.size() == g && m.generic_pairwise.embedding.b2.size() == g);
    check(m.embedding.w1.rows() == d && m.embedding.w1.cols() == 2 * d);
    check(m.embedding.w2.rows() == d && m.embedding.w2.cols() == 2 * d);
    check(m.embedding.b1.size() == d && m.embedding.b2.size() == d);
    for (const ClassId& c : m.classes()) {
      check(m.unary[c].weight.size() == d && m.heads[c].weight.size() == d);
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

json selections_to_json(const Selections& selections) {
  json j = json::object();
  for (const auto& [c, s] : selections) j[c] = s.chosen;
  return j;
}

Selections selections_from_json(const json& j) {
  if (!j.is_object()) throw DataError("selections must be an object");
  Selections out;
  try {
    for (const auto& [c, chosen] : j.items()) {
      Selection& s = out[c];
      s.cls = c;
      for (const auto& [bag, index] : chosen.items()) {
        if (!index.is_number_unsigned()) throw DataError("selections: index must be unsigned");
        s.chosen[bag] = index.get<std::size_t>();
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("selections: ") + e.what());
  }
  return out;
}

void write_traces_csv(const std::map<ClassId, ClassTrace>& traces, std::ostream& out) {
  out << "class,seconds,kind,epoch,energy,lower_bound,pairwise_evals\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& [c, t] : traces) {
    for (const TraceRow& r : t.rows) {
      out << c << ',' << r.seconds << ',' << r.kind << ',' << r.epoch << ',' << r.energy << ',';
      if (!std::isnan(r.lower_bound)) out << r.lower_bound;
      out << ','<< r.pairwise_evals << '\n';
    }
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace pairloc
