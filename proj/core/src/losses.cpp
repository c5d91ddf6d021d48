#include "fdrnn/losses.hpp"

#include <cmath>

#include "fdrnn/moments.hpp"

namespace fdrnn {

UnitLossResult unit_loss(double mean, double var, double target,
                         LossKind kind) {
  if (var < 0.0) {
    throw std::invalid_argument("unit_loss: negative variance");
  }
  UnitLossResult r{};
  switch (kind) {
    case LossKind::SquaredOnMean: {
      const double e = mean - target;
      r.value = e * e;
      r.d_mean = 2.0 * e;
      r.d_var = 0.0;
      return r;
    }
    case LossKind::GaussianNllOnMoments: {
      if (var <= 0.0) {
        throw std::invalid_argument("unit_loss: gaussian needs V[a] > 0");
      }
      const double e = mean - target;
      r.value = e * e / (2.0 * var) + 0.5 * std::log(2.0 * M_PI * var);
      r.d_mean = e / var;
      r.d_var = -e * e / (2.0 * var * var) + 0.5 / var;
      return r;
    }
    case LossKind::BernoulliOnMean: {
      const auto g = detail::sigmoid_moments<double>(mean, var);
      const double mu = g.mean;
      r.value = -(target * std::log(mu) + (1.0 - target) * std::log(1.0 - mu));
      const double dl_dmu = -target / mu + (1.0 - target) / (1.0 - mu);
      r.d_mean = dl_dmu * g.dmean_dm;
      r.d_var = dl_dmu * g.dmean_dv;
      return r;
    }
  }
  throw std::logic_error("unit_loss: bad kind");
}

UnitLossResult unit_loss(const GaussianVec<double>& y, double target,
                         LossKind kind) {
  if (y.size() != 1) {
    throw std::invalid_argument("unit_loss: expects a single unit");
  }
  return unit_loss(y.mean[0], y.var[0], target, kind);
}

namespace {

std::vector<double> linspace(const GridSpec& g) {
  if (g.count < 1) {
    throw std::invalid_argument("loss_field: grid count must be >= 1");
  }
  std::vector<double> xs(static_cast<size_t>(g.count));
  if (g.count == 1) {
    xs[0] = g.lo;
    return xs;
  }
  const double step = (g.hi - g.lo) / double(g.count - 1);
  for (int i = 0; i < g.count; ++i) xs[size_t(i)] = g.lo + step * double(i);
  return xs;
}

}  // namespace

std::vector<LossFieldRow> loss_field(LossKind kind, double target,
                                     const GridSpec& mean_grid,
                                     const GridSpec& var_grid) {
  if (var_grid.lo < 0.0) {
    throw std::invalid_argument("loss_field: variance grid must be >= 0");
  }
  if (kind == LossKind::GaussianNllOnMoments && var_grid.lo <= 0.0) {
    throw std::invalid_argument("loss_field: gaussian needs variance > 0");
  }
  const auto means = linspace(mean_grid);
  const auto vars = linspace(var_grid);
  std::vector<LossFieldRow> rows;
  rows.reserve(means.size() * vars.size());
  for (double m : means) {
    for (double v : vars) {
      const auto u = unit_loss(m, v, target, kind);
      rows.push_back({m, v, u.value, u.d_mean, u.d_var});
    }
  }
  return rows;
}

}  // namespace fdrnn
