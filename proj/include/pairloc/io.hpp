#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <json.hpp>

#include "pairloc/data.hpp"
#include "pairloc/inference.hpp"
#include "pairloc/scoring.hpp"

namespace pairloc {

/// JSON Lines, one bag per line:
///   {"id", "labels": [...], "proposals": [{"features": [...],
///    "features_generic"?, "box"?: [x1, y1, x2, y2], "gt_class"?,
///    "is_full_image"?}], "gt_boxes"?: {class: [[x1, y1, x2, y2], ...]}}
/// Numbers are written in shortest round-trip form, so save/load is exact.
/// Schema errors are reported as DataError with the 1-based line number.
Dataset read_dataset(std::istream& in);
void write_dataset(const Dataset& dataset, std::ostream& out);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

nlohmann::json bag_to_json(const Bag& bag);
Bag bag_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const ScoringModel& model);
ScoringModel model_from_json(const nlohmann::json& j);

nlohmann::json selections_to_json(const Selections& selections);
Selections selections_from_json(const nlohmann::json& j);

/// CSV with header class,seconds,kind,epoch,energy,lower_bound,pairwise_evals.
void write_traces_csv(const std::map<ClassId, ClassTrace>& traces, std::ostream& out);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace pairloc
