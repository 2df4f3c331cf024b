#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpeflow/scenegen.hpp"

namespace rpeflow {

struct MetricReport {
  double epe2d = 0.0;        // pixels
  double acc1px = 0.0;       // fraction in [0, 1]
  double epe3d_nocc = 0.0;   // scene units, non-occluded points
  double acc05_nocc = 0.0;
  double epe3d_full = 0.0;   // all points
  double acc05_full = 0.0;

  nlohmann::json to_json() const;
};

// Finest-level metrics over valid pixels / points. flow2d is H*W*2 values,
// flow3d is N*3 values matching the sample's pc0.
MetricReport evaluate(const std::vector<double>& flow2d,
                      const std::vector<double>& flow3d, const Sample& gt);

MetricReport average(std::span<const MetricReport> reports);

// Aligned plain-text table in the six-metric layout.
std::string metric_table(const MetricReport& report,
                         const std::string& row_label);

}  // namespace rpeflow
