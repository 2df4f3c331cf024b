#include "rpeflow/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace rpeflow {

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["EPE2D"] = epe2d;
  j["ACC1px"] = acc1px;
  j["EPE3D_NOcc"] = epe3d_nocc;
  j["ACC05_NOcc"] = acc05_nocc;
  j["EPE3D_Full"] = epe3d_full;
  j["ACC05_Full"] = acc05_full;
  return j;
}

MetricReport evaluate(const std::vector<double>& flow2d,
                      const std::vector<double>& flow3d, const Sample& gt) {
  const std::size_t npx = gt.width * gt.height;
  if (flow2d.size() != 2 * npx) {
    throw EvalError("evaluate: 2D flow size mismatch");
  }
  if (flow3d.size() != gt.sceneflow_gt.size()) {
    throw EvalError("evaluate: 3D flow size mismatch");
  }
  MetricReport report;

  std::size_t valid_count = 0, acc1 = 0;
  double epe2 = 0;
  for (std::size_t p = 0; p < npx; ++p) {
    if (!gt.valid[p]) continue;
    const double du = flow2d[2 * p] - gt.opticalflow_gt[2 * p];
    const double dv = flow2d[2 * p + 1] - gt.opticalflow_gt[2 * p + 1];
    const double err = std::sqrt(du * du + dv * dv);
    epe2 += err;
    if (err < 1.0) ++acc1;
    ++valid_count;
  }
  if (valid_count == 0) throw EvalError("evaluate: no valid pixels");
  report.epe2d = epe2 / static_cast<double>(valid_count);
  report.acc1px = static_cast<double>(acc1) / static_cast<double>(valid_count);

  const std::size_t n = gt.sceneflow_gt.size() / 3;
  if (n == 0) throw EvalError("evaluate: no points");
  double epe_full = 0, epe_nocc = 0;
  std::size_t acc_full = 0, acc_nocc = 0, n_nocc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0;
    for (std::size_t d = 0; d < 3; ++d) {
      const double diff = flow3d[3 * i + d] - gt.sceneflow_gt[3 * i + d];
      d2 += diff * diff;
    }
    const double err = std::sqrt(d2);
    epe_full += err;
    if (err < 0.05) ++acc_full;
    if (!gt.occ3d[i]) {
      epe_nocc += err;
      if (err < 0.05) ++acc_nocc;
      ++n_nocc;
    }
  }
  report.epe3d_full = epe_full / static_cast<double>(n);
  report.acc05_full = static_cast<double>(acc_full) / static_cast<double>(n);
  if (n_nocc > 0) {
    report.epe3d_nocc = epe_nocc / static_cast<double>(n_nocc);
    report.acc05_nocc =
        static_cast<double>(acc_nocc) / static_cast<double>(n_nocc);
  } else {
    report.epe3d_nocc = report.epe3d_full;
    report.acc05_nocc = report.acc05_full;
  }
  return report;
}

MetricReport average(std::span<const MetricReport> reports) {
  if (reports.empty()) throw EvalError("average: no reports");
  MetricReport avg;
  for (const auto& r : reports) {
    avg.epe2d += r.epe2d;
    avg.acc1px += r.acc1px;
    avg.epe3d_nocc += r.epe3d_nocc;
    avg.acc05_nocc += r.acc05_nocc;
    avg.epe3d_full += r.epe3d_full;
    avg.acc05_full += r.acc05_full;
  }
  const double n = static_cast<double>(reports.size());
  avg.epe2d /= n;
  avg.acc1px /= n;
  avg.epe3d_nocc /= n;
  avg.acc05_nocc /= n;
  avg.epe3d_full /= n;
  avg.acc05_full /= n;
  return avg;
}

std::string metric_table(const MetricReport& report,
                         const std::string& row_label) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-16s %8s %8s %12s %12s %12s %12s\n",
                "Method", "EPE2D", "ACC1px", "EPE3D-N.Occ", "ACC.05-N.Occ",
                "EPE3D-Full", "ACC.05-Full");
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "%-16s %8.4f %7.2f%% %12.4f %11.2f%% %12.4f %11.2f%%\n",
                row_label.c_str(), report.epe2d, 100.0 * report.acc1px,
                report.epe3d_nocc, 100.0 * report.acc05_nocc,
                report.epe3d_full, 100.0 * report.acc05_full);
  out += buf;
  return out;
}

}  // namespace rpeflow
