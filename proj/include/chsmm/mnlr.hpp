#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "chsmm/error.hpp"
#include "chsmm/state_abstraction.hpp"

namespace chsmm {

struct WeightedSample {
  std::vector<double> features;
  std::size_t label = 0;
  double weight = 1.0;
};

enum class MnlrSolver { lbfgs, gradient_ascent };

struct MnlrOptions {
  double l2 = 1e-4;
  double tol = 1e-6;  // on the gradient inf-norm divided by the total sample weight
  std::size_t max_iter = 10000;
  MnlrSolver solver = MnlrSolver::lbfgs;
  std::size_t memory = 10;  // L-BFGS history
  // also stop after stall_iters consecutive iterations with relative gain < ftol (0 disables)
  double ftol = 0.0;
  std::size_t stall_iters = 10;
  bool record_trace = false;
};

/// Softmax regression. Row r of coeffs holds the class-r weights over the
/// features followed by the intercept; row 0 is the reference class and is
/// pinned to zero.
struct MnlrModel {
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
  Eigen::MatrixXd coeffs;
  std::vector<std::size_t> class_labels;  // row -> outcome label
  double l2 = 0.0;

  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // penalized log-likelihood per iteration, when recorded

  /// Zero model: uniform probabilities.
  static MnlrModel zeros(std::size_t n_classes, std::size_t n_features, double l2 = 0.0) {
    MnlrModel m;
    m.n_classes = n_classes;
    m.n_features = n_features;
    m.coeffs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_classes), static_cast<Eigen::Index>(n_features + 1));
    m.class_labels.resize(n_classes);
    std::iota(m.class_labels.begin(), m.class_labels.end(), std::size_t{0});
    m.l2 = l2;
    return m;
  }

  [[nodiscard]] std::vector<double> scores(std::span<const double> x) const {
    if (x.size() != n_features)
      fail(ErrorKind::input, "feature length " + std::to_string(x.size()) + " != " + std::to_string(n_features));
    std::vector<double> s(n_classes);
    const auto F = static_cast<Eigen::Index>(n_features);
    for (std::size_t c = 0; c < n_classes; ++c) {
      const auto r = static_cast<Eigen::Index>(c);
      double acc = coeffs(r, F);
      for (Eigen::Index j = 0; j < F; ++j) acc += coeffs(r, j) * x[static_cast<std::size_t>(j)];
      s[c] = acc;
    }
    return s;
  }

  /// Class probabilities via max-subtracted softmax.
  [[nodiscard]] std::vector<double> predict_proba(std::span<const double> x) const {
    auto p = scores(x);
    const double mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (auto& v : p) z += (v = std::exp(v - mx));
    for (auto& v : p) v /= z;
    return p;
  }

  /// Exact equality of the fitted parameters; the optional trace is not compared.
  friend bool operator==(const MnlrModel& a, const MnlrModel& b) {
    return a.n_classes == b.n_classes && a.n_features == b.n_features && a.coeffs.rows() == b.coeffs.rows() &&
           a.coeffs.cols() == b.coeffs.cols() && a.coeffs == b.coeffs && a.class_labels == b.class_labels &&
           a.l2 == b.l2 && a.iterations == b.iterations && a.converged == b.converged;
  }
};

/// Applies duration-proportional up-weighting 1 + d/a to each epoch.
inline std::vector<double> duration_weights(std::span<const Epoch> epochs, long long a) {
  require(a >= 1, "weighting factor a must be a positive integer");
  std::vector<double> w;
  w.reserve(epochs.size());
  for (const auto& e : epochs) w.push_back(1.0 + static_cast<double>(e.duration) / static_cast<double>(a));
  return w;
}

inline std::vector<double> duration_weights(const EpochSequence& seq, long long a) {
  return duration_weights(seq.epochs, a);
}

inline double log_likelihood(const MnlrModel& model, std::span<const WeightedSample> samples) {
  double ll = 0.0;
  for (const auto& s : samples) {
    auto sc = model.scores(s.features);
    const double mx = *std::max_element(sc.begin(), sc.end());
    double z = 0.0;
    for (double v : sc) z += std::exp(v - mx);
    ll += s.weight * (sc.at(s.label) - mx - std::log(z));
  }
  return ll;
}

/// Fitting problem with identical feature rows merged; counts(u, c) is the
/// total weight of samples with feature row u and label c.
class MnlrProblem {
 public:
  MnlrProblem(std::span<const WeightedSample> samples, std::size_t n_classes) : n_classes_(n_classes) {
    if (samples.empty()) fail(ErrorKind::insufficient_data, "MNLR fit needs at least one sample");
    require(n_classes >= 1, "n_classes must be >= 1");
    n_features_ = samples.front().features.size();
    std::map<std::vector<double>, std::size_t> rows;
    std::vector<const std::vector<double>*> order;
    std::vector<std::size_t> row_of(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (s.features.size() != n_features_) fail(ErrorKind::input, "inconsistent feature lengths");
      if (s.label >= n_classes) fail(ErrorKind::input, "label " + std::to_string(s.label) + " out of range");
      if (!(s.weight > 0.0) || !std::isfinite(s.weight)) fail(ErrorKind::input, "sample weights must be positive");
      for (double v : s.features)
        if (!std::isfinite(v)) fail(ErrorKind::input, "non-finite feature value");
      auto [it, inserted] = rows.try_emplace(s.features, rows.size());
      if (inserted) order.push_back(&it->first);
      row_of[i] = it->second;
    }
    const auto U = static_cast<Eigen::Index>(rows.size());
    const auto F1 = static_cast<Eigen::Index>(n_features_ + 1);
    x_ = Eigen::MatrixXd::Zero(U, F1);
    for (Eigen::Index u = 0; u < U; ++u) {
      const auto& f = *order[static_cast<std::size_t>(u)];
      for (Eigen::Index j = 0; j + 1 < F1; ++j) x_(u, j) = f[static_cast<std::size_t>(j)];
      x_(u, F1 - 1) = 1.0;
    }
    counts_ = Eigen::MatrixXd::Zero(U, static_cast<Eigen::Index>(n_classes));
    for (std::size_t i = 0; i < samples.size(); ++i)
      counts_(static_cast<Eigen::Index>(row_of[i]), static_cast<Eigen::Index>(samples[i].label)) += samples[i].weight;
    row_weight_ = counts_.rowwise().sum();
    total_weight_ = row_weight_.sum();
  }

  [[nodiscard]] std::size_t n_classes() const { return n_classes_; }
  [[nodiscard]] std::size_t n_features() const { return n_features_; }
  [[nodiscard]] double total_weight() const { return total_weight_; }
  [[nodiscard]] Eigen::Index n_rows() const { return x_.rows(); }

  /// Penalized weighted log-likelihood at coeffs and its gradient (row 0 of the
  /// gradient is zero because the reference class is pinned).
  double evaluate(const Eigen::MatrixXd& coeffs, Eigen::MatrixXd* grad) const {
    Eigen::MatrixXd s = x_ * coeffs.transpose();  // U x C
    const Eigen::VectorXd mx = s.rowwise().maxCoeff();
    s.colwise() -= mx;
    Eigen::MatrixXd p = s.array().exp().matrix();
    const Eigen::VectorXd z = p.rowwise().sum();
    const Eigen::VectorXd lse = mx.array() + z.array().log();
    double f = (counts_.array() * s.array()).sum() + (row_weight_.array() * (mx.array() - lse.array())).sum();
    f -= 0.5 * l2_ * coeffs.bottomRows(coeffs.rows() - 1).squaredNorm();
    if (grad) {
      p.array().colwise() /= z.array();
      p.array().colwise() *= row_weight_.array();
      *grad = (counts_ - p).transpose() * x_;
      grad->row(0).setZero();
      grad->bottomRows(grad->rows() - 1) -= l2_ * coeffs.bottomRows(coeffs.rows() - 1);
    }
    return f;
  }

  void set_l2(double l2) { l2_ = l2; }

 private:
  std::size_t n_classes_ = 0;
  std::size_t n_features_ = 0;
  Eigen::MatrixXd x_;
  Eigen::MatrixXd counts_;
  Eigen::VectorXd row_weight_;
  double total_weight_ = 0.0;
  double l2_ = 0.0;
};

namespace detail {

inline double dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a.array() * b.array()).sum(); }

}  // namespace detail

/// Maximum-likelihood fit from zero coefficients. Deterministic.
inline MnlrModel fit_mnlr(std::span<const WeightedSample> samples, std::size_t n_classes,
                          const MnlrOptions& opts = {}) {
  require(opts.l2 >= 0.0, "l2 must be nonnegative");
  MnlrProblem problem(samples, n_classes);
  problem.set_l2(opts.l2);
  MnlrModel model = MnlrModel::zeros(n_classes, problem.n_features(), opts.l2);
  if (n_classes == 1) {
    model.converged = true;
    return model;
  }

  Eigen::MatrixXd& w = model.coeffs;
  Eigen::MatrixXd g;
  double f = problem.evaluate(w, &g);
  const double scale = 1.0 / problem.total_weight();
  if (opts.record_trace) model.objective_trace.push_back(f);

  std::deque<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> history;  // (s, y) in ascent form
  double step_hint = 1.0 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-12);
  Eigen::MatrixXd g_new;
  std::size_t stalled = 0;
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() * scale < opts.tol) {
      model.converged = true;
      break;
    }
    // ascent direction
    Eigen::MatrixXd d = g;
    if (opts.solver == MnlrSolver::lbfgs && !history.empty()) {
      // two-loop recursion on the negated objective
      std::vector<double> alpha(history.size());
      Eigen::MatrixXd q = -g;
      for (std::size_t i = history.size(); i-- > 0;) {
        const auto& [s, y] = history[i];
        const double rho = 1.0 / detail::dot(y, s);
        alpha[i] = rho * detail::dot(s, q);
        q -= alpha[i] * y;
      }
      const auto& [s_last, y_last] = history.back();
      q *= detail::dot(s_last, y_last) / detail::dot(y_last, y_last);
      for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& [s, y] = history[i];
        const double rho = 1.0 / detail::dot(y, s);
        const double beta = rho * detail::dot(y, q);
        q += (alpha[i] - beta) * s;
      }
      d = -q;
    }
    double slope = detail::dot(g, d);
    if (!(slope > 0.0)) {
      history.clear();
      d = g;
      slope = detail::dot(g, d);
    }
    double step = (opts.solver == MnlrSolver::lbfgs && !history.empty()) ? 1.0 : step_hint;
    if (opts.solver == MnlrSolver::lbfgs && history.empty())
      step = 1.0 / std::max(d.lpNorm<Eigen::Infinity>(), 1e-12);

    // Armijo backtracking keeps the objective monotone
    Eigen::MatrixXd w_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      w_new = w + step * d;
      f_new = problem.evaluate(w_new, &g_new);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || f_new <= f) {
      // no representable improvement left
      model.iterations = it + 1;
      model.converged = g.lpNorm<Eigen::Infinity>() * scale < std::sqrt(opts.tol);
      break;
    }
    if (opts.solver == MnlrSolver::gradient_ascent) step_hint = std::min(step * 2.0, 1e6);
    Eigen::MatrixXd s = w_new - w;
    Eigen::MatrixXd y = g - g_new;  // gradient of the negated objective changes by -(g_new - g)
    if (opts.solver == MnlrSolver::lbfgs && detail::dot(s, y) > 1e-12 * detail::dot(y, y)) {
      history.emplace_back(std::move(s), std::move(y));
      if (history.size() > opts.memory) history.pop_front();
    }
    const double gain = (f_new - f) / std::max(1.0, std::abs(f));
    w = std::move(w_new);
    g = g_new;
    f = f_new;
    model.iterations = it + 1;
    if (opts.record_trace) model.objective_trace.push_back(f);
    stalled = gain < opts.ftol ? stalled + 1 : 0;
    if (opts.ftol > 0.0 && stalled >= opts.stall_iters) break;
  }
  if (!model.converged && g.lpNorm<Eigen::Infinity>() * scale < opts.tol) model.converged = true;
  return model;
}

}  // namespace chsmm
