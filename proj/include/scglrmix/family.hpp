#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace scglrmix {

using Eigen::VectorXd;

enum class Family { Gaussian, Poisson, Bernoulli };
enum class Link { Identity, Log, Logit };

inline constexpr double kEtaClamp = 30.0;
inline constexpr double kWeightFloor = 1e-8;
inline constexpr double kWeightCeil = 1e8;

/// One (family, link) pair; only the canonical link is accepted.
struct FamilyLink {
  Family family = Family::Gaussian;
  Link link = Link::Identity;

  static FamilyLink canonical(Family f);
  static FamilyLink parse(const std::string& name);  // "poisson", "bernoulli", ...
  std::string name() const;
};

/// Per-response family list, length q.
using FamilySpec = std::vector<FamilyLink>;

/// Parses "poisson" (applied to every response) or "poisson,gaussian,...".
FamilySpec parse_family_spec(const std::string& text, int q);

struct MeanDerivs {
  VectorXd mu;
  VectorXd g_prime;   // d eta / d mu at mu
  VectorXd variance;  // v(mu)
};

/// Linearized GLM quantities at eta: z = eta + g'(mu)(y - mu) and
/// w = 1 / (g'(mu)^2 v(mu)), clamped into [kWeightFloor, kWeightCeil].
struct WorkingQuantities {
  VectorXd z;
  VectorXd w;
  VectorXd eta;
  VectorXd mu;
  int clamped = 0;  // number of weights that hit a clamp
};

double clamp_eta(double eta);
double inverse_link(double eta, const FamilyLink& fam);
double link(double mu, const FamilyLink& fam);

MeanDerivs mean_and_derivs(const VectorXd& eta, const FamilyLink& fam);

WorkingQuantities working_quantities(const VectorXd& y, const VectorXd& eta,
                                     const FamilyLink& fam);

/// Throws InputError naming the first row outside the family support.
void check_support(const VectorXd& y, const FamilyLink& fam,
                   const std::string& what = "response");

/// Starting linear predictor for an intercept-free warm start: g(mu0(y)).
VectorXd initial_eta(const VectorXd& y, const FamilyLink& fam);

/// Per-observation unit deviance d(y, mu) >= 0.
double unit_deviance(double y, double mu, const FamilyLink& fam);

/// Sum_i prior_w_i * d(y_i, mu_i).
double deviance(const VectorXd& y, const VectorXd& mu, const VectorXd& prior_w,
                const FamilyLink& fam);

}  // namespace scglrmix
