#pragma once

#include <map>
#include <nlohmann/json_fwd.hpp>

#include "fedgen/series.hpp"

namespace fedgen {

// SWaT-format ingestion: one CSV with a timestamp column, sensor columns and a
// binary label column.  The normal era (rows before the first attack) and the
// attack era are each split into C equal contiguous intervals; client c trains
// on its normal interval and validates/tests on the chronological halves of its
// attack-era interval.
struct SwatPartitionConfig {
    std::string csv_path;
    int C = 5;
    long window = 20;
    long stride = 5;
    double val_fraction = 0.5;
    std::string label_column = "label";
    std::string timestamp_column = "timestamp";
};

void to_json(nlohmann::json& j, const SwatPartitionConfig& c);
void from_json(const nlohmann::json& j, SwatPartitionConfig& c);

std::map<int, ClientDataset> load_swat(const SwatPartitionConfig& cfg);

}  // namespace fedgen
