#include "rpeflow/gradcheck.hpp"

#include <cmath>

#include "rpeflow/rng.hpp"

namespace rpeflow {

namespace {

double rel_err(double analytic, double numeric) {
  const double denom =
      std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

}  // namespace

template <typename T>
GradcheckReport gradcheck(
    const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
    T h, double tol) {
  GradcheckReport report;

  Tensor<T> leaf = Tensor<T>::from(x.shape(),
                                   std::vector<T>(x.values().begin(),
                                                  x.values().end()),
                                   /*requires_grad=*/true);
  std::vector<T> analytic(leaf.size(), T(0));
  {
    Tape<T> tape;
    Tensor<T> y = f(leaf);
    if (y.size() != 1) {
      throw ShapeError("gradcheck: function must be scalar-valued");
    }
    tape.backward(y);
    if (leaf.has_grad()) {
      const auto g = leaf.grad();
      analytic.assign(g.begin(), g.end());
    }
  }
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!std::isfinite(static_cast<double>(analytic[i]))) {
      report.pass = false;
      report.max_rel_err = std::numeric_limits<double>::infinity();
      report.worst_location =
          "non-finite tape gradient at element " + std::to_string(i);
      return report;
    }
  }

  std::vector<T> probe(x.values().begin(), x.values().end());
  NoGradGuard<T> no_grad;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const T saved = probe[i];
    probe[i] = saved + h;
    const T fp = f(Tensor<T>::from(x.shape(), probe)).item();
    probe[i] = saved - h;
    const T fm = f(Tensor<T>::from(x.shape(), probe)).item();
    probe[i] = saved;
    const double numeric =
        (static_cast<double>(fp) - static_cast<double>(fm)) /
        (2.0 * static_cast<double>(h));
    const double err = rel_err(static_cast<double>(analytic[i]), numeric);
    ++report.checked;
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_location = "element " + std::to_string(i);
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

template <typename T>
GradcheckReport gradcheck_params(
    const std::function<Tensor<T>()>& loss,
    const std::vector<std::pair<std::string, Tensor<T>>>& params,
    std::size_t sample_count, std::uint64_t seed, T h, double tol) {
  GradcheckReport report;

  std::size_t total = 0;
  for (const auto& [name, p] : params) total += p.size();
  if (total == 0) {
    report.pass = true;
    return report;
  }

  // Draw the probe set first so it does not depend on gradient values.
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> probes;  // (param, elem)
  for (std::size_t s = 0; s < std::min(sample_count, total); ++s) {
    std::size_t flat = static_cast<std::size_t>(rng.next_below(total));
    std::size_t pi = 0;
    while (flat >= params[pi].second.size()) {
      flat -= params[pi].second.size();
      ++pi;
    }
    probes.emplace_back(pi, flat);
  }

  for (const auto& [name, p] : params) {
    Tensor<T> handle = p;
    handle.zero_grad();
  }
  {
    Tape<T> tape;
    Tensor<T> y = loss();
    if (y.size() != 1) {
      throw ShapeError("gradcheck: loss must be scalar-valued");
    }
    tape.backward(y);
  }

  NoGradGuard<T> no_grad;
  for (const auto& [pi, ei] : probes) {
    Tensor<T> p = params[pi].second;
    const T analytic = p.has_grad() ? p.grad()[ei] : T(0);
    if (!std::isfinite(static_cast<double>(analytic))) {
      report.pass = false;
      report.max_rel_err = std::numeric_limits<double>::infinity();
      report.worst_location = params[pi].first + "[" + std::to_string(ei) +
                              "]: non-finite tape gradient";
      return report;
    }
    const T saved = p.raw_values()[ei];
    p.raw_values()[ei] = saved + h;
    const T fp = loss().item();
    p.raw_values()[ei] = saved - h;
    const T fm = loss().item();
    p.raw_values()[ei] = saved;
    const double numeric =
        (static_cast<double>(fp) - static_cast<double>(fm)) /
        (2.0 * static_cast<double>(h));
    const double err = rel_err(static_cast<double>(analytic), numeric);
    ++report.checked;
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_location = params[pi].first + "[" + std::to_string(ei) +
                              "]";
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

template GradcheckReport gradcheck<float>(
    const std::function<Tensor<float>(const Tensor<float>&)>&,
    const Tensor<float>&, float, double);
template GradcheckReport gradcheck<double>(
    const std::function<Tensor<double>(const Tensor<double>&)>&,
    const Tensor<double>&, double, double);
template GradcheckReport gradcheck_params<float>(
    const std::function<Tensor<float>()>&,
    const std::vector<std::pair<std::string, Tensor<float>>>&, std::size_t,
    std::uint64_t, float, double);
template GradcheckReport gradcheck_params<double>(
    const std::function<Tensor<double>()>&,
    const std::vector<std::pair<std::string, Tensor<double>>>&, std::size_t,
    std::uint64_t, double, double);

}  // namespace rpeflow
