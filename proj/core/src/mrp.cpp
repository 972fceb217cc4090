#include "clickval/mrp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "clickval/rng.hpp"

namespace clickval {

void TabularMRP::validate() const {
  if (n_states <= 0) throw std::runtime_error("mrp: n_states must be positive");
  if (static_cast<int>(p.size()) != n_states || static_cast<int>(r.size()) != n_states) {
    throw std::runtime_error("mrp: P/r shape mismatch");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::runtime_error("mrp: gamma must be in [0, 1)");
  for (int i = 0; i < n_states; ++i) {
    if (static_cast<int>(p[static_cast<size_t>(i)].size()) != n_states) {
      throw std::runtime_error("mrp: row " + std::to_string(i) + " has wrong width");
    }
    double sum = 0;
    for (double v : p[static_cast<size_t>(i)]) {
      if (v < 0) throw std::runtime_error("mrp: negative transition probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::runtime_error("mrp: row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

std::vector<double> exact_values(const TabularMRP& mrp) {
  mrp.validate();
  const int n = mrp.n_states;
  Eigen::MatrixXd P(n, n);
  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) {
    r(i) = mrp.r[static_cast<size_t>(i)];
    for (int j = 0; j < n; ++j) P(i, j) = mrp.p[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  // V = P r + gamma P V  =>  (I - gamma P) V = P r; invertible for gamma < 1.
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - mrp.gamma * P;
  Eigen::VectorXd v = A.partialPivLu().solve(P * r);
  const double residual = (v - P * (r + mrp.gamma * v)).cwiseAbs().maxCoeff();
  if (!(residual < 1e-10)) {
    throw std::runtime_error("exact_values: solve residual " + std::to_string(residual));
  }
  return std::vector<double>(v.data(), v.data() + n);
}

std::vector<Journey> journeys_from_mrp(const TabularMRP& mrp, int n_journeys, int len,
                                       uint64_t seed) {
  mrp.validate();
  if (len < 1) throw std::runtime_error("journeys_from_mrp: len must be >= 1");
  std::vector<Journey> out;
  out.reserve(static_cast<size_t>(std::max(0, n_journeys)));
  for (int k = 0; k < n_journeys; ++k) {
    Rng rng(derive_seed(seed, "mrp-journey", static_cast<uint64_t>(k)));
    Journey j;
    j.customer_id = "mrp" + std::to_string(k);
    j.journey_id = j.customer_id + "#0";
    j.category = JourneyCategory::kNoP;
    int state = static_cast<int>(rng.below(static_cast<uint64_t>(mrp.n_states)));
    for (int t = 0; t < len; ++t) {
      ClickEvent ev;
      ev.customer_id = j.customer_id;
      ev.ts_ms = 1 + static_cast<int64_t>(k) * 1000000 + t * 1000;
      ev.action = state;
      j.events.push_back(std::move(ev));
      state = static_cast<int>(rng.categorical(mrp.p[static_cast<size_t>(state)]));
    }
    out.push_back(std::move(j));
  }
  return out;
}

TabularMRP random_mrp(int n_states, double gamma, uint64_t seed) {
  Rng rng(derive_seed(seed, "random-mrp"));
  TabularMRP mrp;
  mrp.n_states = n_states;
  mrp.gamma = gamma;
  mrp.p.assign(static_cast<size_t>(n_states), std::vector<double>(static_cast<size_t>(n_states), 0.0));
  mrp.r.resize(static_cast<size_t>(n_states));
  for (int i = 0; i < n_states; ++i) {
    double sum = 0;
    for (int j = 0; j < n_states; ++j) {
      const double w = 0.05 + rng.uniform();  // keep every edge reachable
      mrp.p[static_cast<size_t>(i)][static_cast<size_t>(j)] = w;
      sum += w;
    }
    for (int j = 0; j < n_states; ++j) mrp.p[static_cast<size_t>(i)][static_cast<size_t>(j)] /= sum;
    mrp.r[static_cast<size_t>(i)] = rng.uniform();
  }
  mrp.validate();
  return mrp;
}

}  // namespace clickval
