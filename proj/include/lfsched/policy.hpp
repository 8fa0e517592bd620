#pragma once

// Actor-critic networks and their action distributions.
//
// Two heads are supported:
//  - masked factorized categorical: `groups` independent categoricals over
//    `choices` outcomes; a group whose action is -1 is masked out;
//  - Beta: `groups` coordinates in [0, 1], each Beta(a, b) with
//    a, b = 1 + softplus(logit) so both parameters exceed 1.

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "lfsched/nn.hpp"

namespace lfsched {

enum class HeadKind { Categorical, Beta };
enum class ActMode { Sample, Greedy };

struct PolicyAction {
  std::vector<int> choices;    // categorical: per group, -1 when masked
  std::vector<double> values;  // beta: per coordinate
  friend bool operator==(const PolicyAction&, const PolicyAction&) = default;
};

struct ActResult {
  PolicyAction action;
  double log_prob = 0.0;
  double value = 0.0;
};

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---- categorical ---------------------------------------------------------

// log-probability of the chosen outcomes, summed over unmasked groups.
// Writes d(logp)/d(logits) into `grad` when non-null.
inline double categorical_log_prob(const Vec& logits, int groups, int choices, std::span<const int> taken,
                                   Vec* grad = nullptr) {
  if (grad) grad->setZero(logits.size());
  double lp = 0.0;
  for (int g = 0; g < groups; ++g) {
    if (taken[g] < 0) continue;
    const auto z = logits.segment(static_cast<Eigen::Index>(g) * choices, choices);
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    lp += z(taken[g]) - lse;
    if (grad) {
      Vec p = (z.array() - lse).exp();
      auto gseg = grad->segment(static_cast<Eigen::Index>(g) * choices, choices);
      gseg = -p;
      gseg(taken[g]) += 1.0;
    }
  }
  return lp;
}

// Entropy summed over the groups marked active.
inline double categorical_entropy(const Vec& logits, int groups, int choices, std::span<const int> taken,
                                  Vec* grad = nullptr) {
  if (grad) grad->setZero(logits.size());
  double h = 0.0;
  for (int g = 0; g < groups; ++g) {
    if (taken[g] < 0) continue;
    const auto z = logits.segment(static_cast<Eigen::Index>(g) * choices, choices);
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    const Vec logp = (z.array() - lse).matrix();
    const Vec p = logp.array().exp();
    const double hg = -(p.array() * logp.array()).sum();
    h += hg;
    if (grad) grad->segment(static_cast<Eigen::Index>(g) * choices, choices) = -(p.array() * (logp.array() + hg)).matrix();
  }
  return h;
}

// ---- beta ------------------------------------------------------------------

inline std::pair<double, double> beta_params(const Vec& logits, int g) {
  return {1.0 + softplus(logits(2 * g)), 1.0 + softplus(logits(2 * g + 1))};
}

inline double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

constexpr double kBetaEps = 1e-6;

inline double beta_log_prob(const Vec& logits, int groups, std::span<const double> x, Vec* grad = nullptr) {
  using boost::math::digamma;
  if (grad) grad->setZero(logits.size());
  double lp = 0.0;
  for (int g = 0; g < groups; ++g) {
    const auto [a, b] = beta_params(logits, g);
    const double xv = std::clamp(x[g], kBetaEps, 1.0 - kBetaEps);
    lp += (a - 1.0) * std::log(xv) + (b - 1.0) * std::log1p(-xv) - log_beta_fn(a, b);
    if (grad) {
      const double dab = digamma(a + b);
      (*grad)(2 * g) = (std::log(xv) - digamma(a) + dab) * sigmoid(logits(2 * g));
      (*grad)(2 * g + 1) = (std::log1p(-xv) - digamma(b) + dab) * sigmoid(logits(2 * g + 1));
    }
  }
  return lp;
}

inline double beta_entropy(const Vec& logits, int groups, Vec* grad = nullptr) {
  using boost::math::digamma;
  using boost::math::trigamma;
  if (grad) grad->setZero(logits.size());
  double h = 0.0;
  for (int g = 0; g < groups; ++g) {
    const auto [a, b] = beta_params(logits, g);
    h += log_beta_fn(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b);
    if (grad) {
      const double tab = trigamma(a + b);
      (*grad)(2 * g) = (-(a - 1.0) * trigamma(a) + (a + b - 2.0) * tab) * sigmoid(logits(2 * g));
      (*grad)(2 * g + 1) = (-(b - 1.0) * trigamma(b) + (a + b - 2.0) * tab) * sigmoid(logits(2 * g + 1));
    }
  }
  return h;
}

// ---- actor-critic ------------------------------------------------------------

class ActorCritic {
 public:
  ActorCritic() = default;

  // Actor and critic are separate networks with `hidden_layers` layers of
  // `hidden` ReLU units each.
  ActorCritic(int obs_dim, HeadKind kind, int groups, int choices, Rng& rng, int hidden = 256, int hidden_layers = 2)
      : kind_(kind), groups_(groups), choices_(kind == HeadKind::Beta ? 2 : choices) {
    std::vector<int> sizes{obs_dim};
    for (int i = 0; i < hidden_layers; ++i) sizes.push_back(hidden);
    sizes.push_back(groups_ * choices_);
    actor_ = Mlp(sizes, rng, std::sqrt(2.0), 0.01);
    sizes.back() = 1;
    critic_ = Mlp(sizes, rng, std::sqrt(2.0), 1.0);
    reset_optimizers();
  }

  ActorCritic(HeadKind kind, int groups, int choices, Mlp actor, Mlp critic)
      : kind_(kind), groups_(groups), choices_(choices), actor_(std::move(actor)), critic_(std::move(critic)) {
    reset_optimizers();
  }

  void reset_optimizers() {
    actor_opt_ = Adam(actor_.params());
    critic_opt_ = Adam(critic_.params());
  }

  HeadKind kind() const { return kind_; }
  int groups() const { return groups_; }
  int choices() const { return choices_; }
  int obs_dim() const { return actor_.input_dim(); }
  Mlp& actor() { return actor_; }
  Mlp& critic() { return critic_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  Adam& actor_optimizer() { return actor_opt_; }
  Adam& critic_optimizer() { return critic_opt_; }

  double value(const Vec& obs) const { return critic_.forward(obs)(0); }

  double log_prob(const Vec& logits, const PolicyAction& a) const {
    return kind_ == HeadKind::Categorical ? categorical_log_prob(logits, groups_, choices_, a.choices)
                                          : beta_log_prob(logits, groups_, a.values);
  }

  // `active[g]` selects the categorical groups that act; ignored for Beta.
  ActResult act(const Vec& obs, std::span<const bool> active, ActMode mode, Rng& rng) const {
    if (obs.size() != obs_dim()) throw std::invalid_argument("observation dimension mismatch");
    const Vec logits = actor_.forward(obs);
    ActResult r;
    if (kind_ == HeadKind::Categorical) {
      r.action.choices.assign(groups_, -1);
      for (int g = 0; g < groups_; ++g) {
        if (!active.empty() && !active[g]) continue;
        const auto z = logits.segment(static_cast<Eigen::Index>(g) * choices_, choices_);
        int pick = 0;
        if (mode == ActMode::Greedy) {
          z.maxCoeff(&pick);
        } else {
          const Vec p = (z.array() - z.maxCoeff()).exp();
          double u = uniform01(rng) * p.sum();
          pick = choices_ - 1;
          for (int c = 0; c < choices_; ++c) {
            u -= p(c);
            if (u < 0) { pick = c; break; }
          }
        }
        r.action.choices[g] = pick;
      }
    } else {
      r.action.values.resize(groups_);
      for (int g = 0; g < groups_; ++g) {
        const auto [a, b] = beta_params(logits, g);
        double x;
        if (mode == ActMode::Greedy) {
          x = (a - 1.0) / (a + b - 2.0);
        } else {
          std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
          const double u = ga(rng), v = gb(rng);
          x = u / (u + v);
        }
        r.action.values[g] = std::clamp(x, 0.0, 1.0);
      }
    }
    r.log_prob = log_prob(logits, r.action);
    r.value = value(obs);
    return r;
  }

 private:
  HeadKind kind_ = HeadKind::Categorical;
  int groups_ = 1;
  int choices_ = 1;
  Mlp actor_, critic_;
  Adam actor_opt_, critic_opt_;
};

}  // namespace lfsched
