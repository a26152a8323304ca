#include "scglrmix/family.hpp"

#include "scglrmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scglrmix {

FamilyLink FamilyLink::canonical(Family f) {
  switch (f) {
    case Family::Gaussian: return {Family::Gaussian, Link::Identity};
    case Family::Poisson: return {Family::Poisson, Link::Log};
    case Family::Bernoulli: return {Family::Bernoulli, Link::Logit};
  }
  return {};
}

FamilyLink FamilyLink::parse(const std::string& text) {
  // Accepts "family" or "family/link"; only the canonical link is allowed.
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    const FamilyLink fl = parse(text.substr(0, slash));
    const std::string link = text.substr(slash + 1);
    static const char* kLinkNames[] = {"identity", "log", "logit"};
    if (link != kLinkNames[static_cast<int>(fl.link)]) {
      throw InputError("link '" + link + "' is not canonical for " + fl.name());
    }
    return fl;
  }
  const std::string& name = text;
  if (name == "gaussian" || name == "normal") return canonical(Family::Gaussian);
  if (name == "poisson") return canonical(Family::Poisson);
  if (name == "bernoulli" || name == "binomial") return canonical(Family::Bernoulli);
  throw InputError("unknown family '" + name + "' (expected gaussian, poisson or bernoulli)");
}

std::string FamilyLink::name() const {
  switch (family) {
    case Family::Gaussian: return "gaussian";
    case Family::Poisson: return "poisson";
    case Family::Bernoulli: return "bernoulli";
  }
  return "?";
}

FamilySpec parse_family_spec(const std::string& text, int q) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  if (parts.size() == 1) return FamilySpec(static_cast<std::size_t>(q), FamilyLink::parse(parts[0]));
  if (static_cast<int>(parts.size()) != q) {
    throw InputError("family list has " + std::to_string(parts.size()) +
                     " entries for " + std::to_string(q) + " responses");
  }
  FamilySpec out;
  for (const auto& p : parts) out.push_back(FamilyLink::parse(p));
  return out;
}

double clamp_eta(double eta) { return std::clamp(eta, -kEtaClamp, kEtaClamp); }

double inverse_link(double eta, const FamilyLink& fam) {
  const double e = clamp_eta(eta);
  switch (fam.link) {
    case Link::Identity: return eta;
    case Link::Log: return std::exp(e);
    case Link::Logit: return 1.0 / (1.0 + std::exp(-e));
  }
  return eta;
}

double link(double mu, const FamilyLink& fam) {
  switch (fam.link) {
    case Link::Identity: return mu;
    case Link::Log: return std::log(mu);
    case Link::Logit: return std::log(mu / (1.0 - mu));
  }
  return mu;
}

MeanDerivs mean_and_derivs(const VectorXd& eta, const FamilyLink& fam) {
  const auto n = eta.size();
  MeanDerivs out{VectorXd(n), VectorXd(n), VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = inverse_link(eta(i), fam);
    out.mu(i) = mu;
    switch (fam.family) {
      case Family::Gaussian:
        out.g_prime(i) = 1.0;
        out.variance(i) = 1.0;
        break;
      case Family::Poisson:
        out.g_prime(i) = 1.0 / mu;
        out.variance(i) = mu;
        break;
      case Family::Bernoulli:
        out.g_prime(i) = 1.0 / (mu * (1.0 - mu));
        out.variance(i) = mu * (1.0 - mu);
        break;
    }
  }
  return out;
}

void check_support(const VectorXd& y, const FamilyLink& fam, const std::string& what) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y(i);
    bool ok = std::isfinite(v);
    if (fam.family == Family::Poisson) ok = ok && v >= 0.0;
    if (fam.family == Family::Bernoulli) ok = ok && (v == 0.0 || v == 1.0);
    if (!ok) {
      throw InputError(what + " value " + format_double(v) + " at row " +
                       std::to_string(i + 1) + " is outside the " + fam.name() +
                       " support");
    }
  }
}

WorkingQuantities working_quantities(const VectorXd& y, const VectorXd& eta,
                                     const FamilyLink& fam) {
  check_support(y, fam);
  const MeanDerivs md = mean_and_derivs(eta, fam);
  const auto n = y.size();
  WorkingQuantities wq{VectorXd(n), VectorXd(n), eta, md.mu, 0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double gp = md.g_prime(i);
    // Linearize around the clamped predictor so z stays consistent with mu.
    const double eta_i = fam.link == Link::Identity ? eta(i) : clamp_eta(eta(i));
    wq.z(i) = eta_i + gp * (y(i) - md.mu(i));
    const double w = 1.0 / (gp * gp * md.variance(i));
    const double wc = std::clamp(w, kWeightFloor, kWeightCeil);
    if (wc != w) ++wq.clamped;
    wq.w(i) = wc;
  }
  return wq;
}

VectorXd initial_eta(const VectorXd& y, const FamilyLink& fam) {
  VectorXd eta(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    switch (fam.family) {
      case Family::Gaussian: eta(i) = y(i); break;
      case Family::Poisson: eta(i) = std::log(y(i) + 0.5); break;
      case Family::Bernoulli: eta(i) = link((y(i) + 0.5) / 2.0, fam); break;
    }
  }
  return eta;
}

double unit_deviance(double y, double mu, const FamilyLink& fam) {
  switch (fam.family) {
    case Family::Gaussian: return (y - mu) * (y - mu);
    case Family::Poisson: {
      const double term = y > 0.0 ? y * std::log(y / mu) : 0.0;
      return std::max(0.0, 2.0 * (term - (y - mu)));
    }
    case Family::Bernoulli: {
      const double m = std::clamp(mu, 1e-300, 1.0 - 1e-16);
      return y > 0.5 ? -2.0 * std::log(m) : -2.0 * std::log1p(-m);
    }
  }
  return 0.0;
}

double deviance(const VectorXd& y, const VectorXd& mu, const VectorXd& prior_w,
                const FamilyLink& fam) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    total += prior_w(i) * unit_deviance(y(i), mu(i), fam);
  }
  return total;
}

}  // namespace scglrmix
