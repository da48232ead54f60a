#pragma once

// Loss adapters: pointwise evaluation plus a linear epigraph encoding of
// f(x, xi) <= r, used to assemble conic programs.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "roodso/common.hpp"

namespace roodso {

/// coef_x . x + coef_aux . aux + coef_r * r <= rhs
struct EpigraphRow {
  Vector coef_x;
  Vector coef_aux;
  double coef_r = 0.0;
  double rhs = 0.0;
};

/// coef . x <= rhs, or == rhs when equality is set.
struct DecisionRow {
  Vector coef;
  double rhs = 0.0;
  bool equality = false;
};

class LossEncoder {
 public:
  virtual ~LossEncoder() = default;
  virtual std::string name() const = 0;
  /// Length of the extended decision vector.
  virtual Index decision_dim() const = 0;
  /// Dimension of the uncertain parameter.
  virtual Index sample_dim() const = 0;
  virtual double evaluate(const Vector& x, const Eigen::Ref<const Eigen::RowVectorXd>& xi) const = 0;
  /// Auxiliary variables introduced per scenario.
  virtual Index aux_count() const = 0;
  virtual std::vector<EpigraphRow> epigraph(const Eigen::Ref<const Eigen::RowVectorXd>& xi) const = 0;
  virtual std::vector<DecisionRow> decision_space() const = 0;
  virtual nlohmann::json to_json() const = 0;

  /// Mean loss over the rows of `samples`.
  double mean_loss(const Vector& x, const Matrix& samples) const {
    double sum = 0.0;
    for (Index j = 0; j < samples.rows(); ++j) sum += evaluate(x, samples.row(j));
    return sum / static_cast<double>(samples.rows());
  }

 protected:
  void check(const Vector& x, const Eigen::Ref<const Eigen::RowVectorXd>& xi) const {
    require(x.size() == decision_dim(), name() + ": decision has dimension " + std::to_string(x.size()) +
                                            ", expected " + std::to_string(decision_dim()));
    require(xi.size() == sample_dim(), name() + ": sample has dimension " + std::to_string(xi.size()) +
                                           ", expected " + std::to_string(sample_dim()));
  }
};

struct NewsvendorParams {
  Vector price, cost, holding, backorder;

  Index dim() const { return price.size(); }

  void validate() const {
    const Index d = price.size();
    require(d >= 1, "newsvendor: empty parameter vectors");
    require(cost.size() == d && holding.size() == d && backorder.size() == d,
            "newsvendor: parameter vectors differ in length");
    for (const Vector* v : {&price, &cost, &holding, &backorder}) {
      require(v->allFinite(), "newsvendor: non-finite parameter");
      require((v->array() >= 0.0).all(), "newsvendor: parameters must be nonnegative");
    }
  }

  /// Two-item instance used in the synthetic experiments.
  static NewsvendorParams two_item() {
    NewsvendorParams p;
    p.price = Eigen::Vector2d(50, 40);
    p.cost = Eigen::Vector2d(20, 15);
    p.holding = Eigen::Vector2d(5, 3);
    p.backorder = Eigen::Vector2d(10, 8);
    return p;
  }
};

/// -p^T min(x, xi) + c^T x + h^T (x - xi)^+ + b^T (xi - x)^+
inline double newsvendor_loss(const NewsvendorParams& p, const Vector& x,
                              const Eigen::Ref<const Eigen::RowVectorXd>& xi) {
  require(x.size() == p.dim() && xi.size() == p.dim(), "newsvendor_loss: dimension mismatch");
  double v = 0.0;
  for (Index k = 0; k < p.dim(); ++k) {
    v += -p.price(k) * std::min(x(k), xi(k)) + p.cost(k) * x(k) + p.holding(k) * std::max(x(k) - xi(k), 0.0) +
         p.backorder(k) * std::max(xi(k) - x(k), 0.0);
  }
  return v;
}

class Newsvendor : public LossEncoder {
 public:
  explicit Newsvendor(NewsvendorParams params, Vector upper = {}) : p_(std::move(params)), upper_(std::move(upper)) {
    p_.validate();
    if ((p_.price.array() < p_.cost.array()).any()) warn("newsvendor: selling price below ordering cost");
    require(upper_.size() == 0 || upper_.size() == p_.dim(), "newsvendor: order bound has wrong length");
  }

  /// Box 0 <= x <= factor * max observed demand per item.
  static Vector demand_bound(const Matrix& samples, double factor = 10.0) {
    Vector hi = samples.colwise().maxCoeff().transpose();
    return (factor * hi.cwiseMax(0.0)).cwiseMax(1.0);
  }

  const NewsvendorParams& params() const { return p_; }
  const Vector& upper() const { return upper_; }
  void set_upper(Vector upper) {
    require(upper.size() == p_.dim(), "newsvendor: order bound has wrong length");
    upper_ = std::move(upper);
  }

  std::string name() const override { return "newsvendor"; }
  Index decision_dim() const override { return p_.dim(); }
  Index sample_dim() const override { return p_.dim(); }
  Index aux_count() const override { return p_.dim(); }

  double evaluate(const Vector& x, const Eigen::Ref<const Eigen::RowVectorXd>& xi) const override {
    check(x, xi);
    return newsvendor_loss(p_, x, xi);
  }

  /// Per item k, t_k covers both affine pieces; sum_k t_k <= r.
  std::vector<EpigraphRow> epigraph(const Eigen::Ref<const Eigen::RowVectorXd>& xi) const override {
    const Index d = p_.dim();
    require(xi.size() == d, "newsvendor: sample dimension mismatch");
    std::vector<EpigraphRow> rows;
    rows.reserve(static_cast<std::size_t>(2 * d + 1));
    for (Index k = 0; k < d; ++k) {
      EpigraphRow under{Vector::Zero(d), Vector::Zero(d), 0.0, -p_.backorder(k) * xi(k)};
      under.coef_x(k) = p_.cost(k) - p_.price(k) - p_.backorder(k);
      under.coef_aux(k) = -1.0;
      rows.push_back(std::move(under));
      EpigraphRow over{Vector::Zero(d), Vector::Zero(d), 0.0, (p_.price(k) + p_.holding(k)) * xi(k)};
      over.coef_x(k) = p_.cost(k) + p_.holding(k);
      over.coef_aux(k) = -1.0;
      rows.push_back(std::move(over));
    }
    rows.push_back(EpigraphRow{Vector::Zero(d), Vector::Ones(d), -1.0, 0.0});
    return rows;
  }

  std::vector<DecisionRow> decision_space() const override {
    std::vector<DecisionRow> rows;
    for (Index k = 0; k < p_.dim(); ++k) {
      DecisionRow lo{Vector::Zero(p_.dim()), 0.0, false};
      lo.coef(k) = -1.0;
      rows.push_back(std::move(lo));
      if (upper_.size() > 0) {
        DecisionRow hi{Vector::Zero(p_.dim()), upper_(k), false};
        hi.coef(k) = 1.0;
        rows.push_back(std::move(hi));
      }
    }
    return rows;
  }

  nlohmann::json to_json() const override {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j = {{"name", "newsvendor"},
                        {"price", vec(p_.price)},
                        {"cost", vec(p_.cost)},
                        {"holding", vec(p_.holding)},
                        {"backorder", vec(p_.backorder)}};
    if (upper_.size() > 0) j["upper"] = vec(upper_);
    return j;
  }

 private:
  NewsvendorParams p_;
  Vector upper_;
};

struct PortfolioParams {
  double delta1 = 10.0;
  double delta2 = 0.2;

  void validate() const {
    require(std::isfinite(delta1) && delta1 > 0.0, "portfolio: delta1 must be positive");
    require(std::isfinite(delta2) && delta2 > 0.0 && delta2 < 1.0, "portfolio: delta2 must lie in (0, 1)");
  }
};

/// -<x, xi> + d1 [tau + (1/d2)(-<x, xi> - tau)^+]
inline double cvar_portfolio_loss(const PortfolioParams& p, const Vector& x, double tau,
                                  const Eigen::Ref<const Eigen::RowVectorXd>& xi) {
  require(x.size() == xi.size(), "cvar_portfolio_loss: dimension mismatch");
  const double ret = xi.dot(x.transpose());
  return -ret + p.delta1 * (tau + std::max(-ret - tau, 0.0) / p.delta2);
}

/// Decision vector (x_1..x_d, tau) with tau free.
class CvarPortfolio : public LossEncoder {
 public:
  CvarPortfolio(Index assets, PortfolioParams params) : d_(assets), p_(params) {
    require(assets >= 1, "portfolio: need at least one asset");
    p_.validate();
  }

  const PortfolioParams& params() const { return p_; }

  std::string name() const override { return "portfolio"; }
  Index decision_dim() const override { return d_ + 1; }
  Index sample_dim() const override { return d_; }
  Index aux_count() const override { return 0; }

  double evaluate(const Vector& x, const Eigen::Ref<const Eigen::RowVectorXd>& xi) const override {
    check(x, xi);
    return cvar_portfolio_loss(p_, x.head(d_), x(d_), xi);
  }

  std::vector<EpigraphRow> epigraph(const Eigen::Ref<const Eigen::RowVectorXd>& xi) const override {
    require(xi.size() == d_, "portfolio: sample dimension mismatch");
    const double ratio = p_.delta1 / p_.delta2;
    EpigraphRow first{Vector::Zero(d_ + 1), Vector::Zero(0), -1.0, 0.0};
    first.coef_x.head(d_) = -xi.transpose();
    first.coef_x(d_) = p_.delta1;
    EpigraphRow second{Vector::Zero(d_ + 1), Vector::Zero(0), -1.0, 0.0};
    second.coef_x.head(d_) = (-1.0 - ratio) * xi.transpose();
    second.coef_x(d_) = p_.delta1 - ratio;
    return {first, second};
  }

  std::vector<DecisionRow> decision_space() const override {
    std::vector<DecisionRow> rows;
    DecisionRow budget{Vector::Zero(d_ + 1), 1.0, true};
    budget.coef.head(d_).setOnes();
    rows.push_back(std::move(budget));
    for (Index k = 0; k < d_; ++k) {
      DecisionRow lo{Vector::Zero(d_ + 1), 0.0, false};
      lo.coef(k) = -1.0;
      rows.push_back(std::move(lo));
    }
    return rows;
  }

  nlohmann::json to_json() const override {
    return {{"name", "portfolio"}, {"assets", d_}, {"delta1", p_.delta1}, {"delta2", p_.delta2}};
  }

 private:
  Index d_;
  PortfolioParams p_;
};

}  // namespace roodso
