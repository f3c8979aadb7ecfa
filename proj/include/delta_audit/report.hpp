#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "delta_audit/pipeline.hpp"

namespace delta_audit {

// metrics.csv columns, in order. Undefined values are empty cells.
const std::vector<std::string>& metrics_columns();

std::string report_json(const DeltaReport& report);
std::string metrics_csv(const std::vector<DeltaReport>& reports);
std::string per_sample_csv(const DeltaReport& report);
std::string aggregate_csv(const std::vector<FamilyAggregate>& aggregates);
std::string batch_json(const BatchResult& batch);

void write_text(const std::filesystem::path& path, const std::string& text);

// report.json, metrics.csv and per_sample.csv into `dir`.
void write_audit_outputs(const DeltaReport& report, const std::filesystem::path& dir);

// One subdirectory per audit plus batch-level metrics.csv,
// aggregate_by_family.csv and batch.json.
void write_batch_outputs(const BatchResult& batch, const std::filesystem::path& dir);

}  // namespace delta_audit
