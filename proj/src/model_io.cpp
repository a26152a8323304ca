#include "scglrmix/model_io.hpp"

#include "json.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

namespace scglrmix {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kVersion = "scglr-mix/1";

Json vec(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Rows of m as arrays.
Json rows(const MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec(m.row(i).transpose()));
  return out;
}

VectorXd read_vec(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

MatrixXd read_rows(const Json& j, Eigen::Index cols) {
  MatrixXd out(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const VectorXd r = read_vec(j[i]);
    if (r.size() != cols) throw InputError("model file: ragged matrix");
    out.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return out;
}

Json base_json(const ComponentModel& m, const char* kind) {
  Json j;
  j["version"] = kVersion;
  j["kind"] = kind;
  j["H"] = m.H();
  j["params"] = {{"s", m.params.s},
                 {"l", format_locality(m.params.l)},
                 {"metric", metric_name(m.params.metric)}};
  std::vector<std::string> fams;
  for (const auto& f : m.family) fams.push_back(f.name());
  j["family"] = fams;
  j["response_names"] = m.response_names;
  j["x_names"] = m.x_names;
  j["t_names"] = m.t_names;
  j["group_name"] = m.group_name;
  j["has_intercept"] = m.has_intercept;
  const auto& st = m.standardization;
  j["standardization"] = {{"enabled", st.enabled},
                          {"x_center", vec(st.x_center)},
                          {"x_scale", vec(st.x_scale)},
                          {"t_center", vec(st.t_center)}};
  j["loadings"] = rows(m.loadings.transpose());  // one array per component
  j["gamma"] = rows(m.gamma);
  j["delta"] = rows(m.delta);
  j["converged"] = m.converged;
  j["failed_component"] = m.failed_component;
  Json diags = Json::array();
  for (const auto& d : m.diagnostics) {
    diags.push_back({{"converged", d.converged},
                     {"outer_iterations", d.outer_iterations},
                     {"optimizer_restarts", d.optimizer_restarts},
                     {"optimizer_failures", d.optimizer_failures},
                     {"degenerate", d.degenerate},
                     {"sigma2_clamps", d.sigma2_clamps},
                     {"criterion", d.criterion}});
  }
  j["diagnostics"] = diags;
  return j;
}

void read_base(const Json& j, ComponentModel& m) {
  const int H = j.at("H").get<int>();
  const auto& p = j.at("params");
  m.params.s = p.at("s").get<double>();
  m.params.l = parse_locality(p.at("l").get<std::string>());
  m.params.metric = parse_metric(p.at("metric").get<std::string>());
  for (const auto& f : j.at("family")) m.family.push_back(FamilyLink::parse(f.get<std::string>()));
  m.response_names = j.at("response_names").get<std::vector<std::string>>();
  m.x_names = j.at("x_names").get<std::vector<std::string>>();
  m.t_names = j.at("t_names").get<std::vector<std::string>>();
  m.group_name = j.at("group_name").get<std::string>();
  m.has_intercept = j.at("has_intercept").get<bool>();
  const auto& st = j.at("standardization");
  m.standardization.enabled = st.at("enabled").get<bool>();
  m.standardization.x_center = read_vec(st.at("x_center"));
  m.standardization.x_scale = read_vec(st.at("x_scale"));
  m.standardization.t_center = read_vec(st.at("t_center"));
  const auto p_cols = static_cast<Eigen::Index>(m.x_names.size());
  const auto q = static_cast<Eigen::Index>(m.family.size());
  m.loadings = read_rows(j.at("loadings"), p_cols).transpose();
  if (m.loadings.cols() != H) throw InputError("model file: loadings do not match H");
  m.gamma = read_rows(j.at("gamma"), q);
  m.delta = read_rows(j.at("delta"), q);
  m.converged = j.at("converged").get<bool>();
  m.failed_component = j.at("failed_component").get<int>();
  for (const auto& d : j.at("diagnostics")) {
    ComponentDiagnostics cd;
    cd.converged = d.at("converged").get<bool>();
    cd.outer_iterations = d.at("outer_iterations").get<int>();
    cd.optimizer_restarts = d.at("optimizer_restarts").get<int>();
    cd.optimizer_failures = d.at("optimizer_failures").get<int>();
    cd.degenerate = d.at("degenerate").get<int>();
    cd.sigma2_clamps = d.at("sigma2_clamps").get<int>();
    cd.criterion = d.at("criterion").get<double>();
    m.diagnostics.push_back(cd);
  }
  if (m.gamma.rows() != H) throw InputError("model file: gamma does not match H");
}

}  // namespace

std::string model_to_json(const ComponentModel& model) {
  return base_json(model, "fixed").dump(2) + "\n";
}

std::string model_to_json(const MixedComponentModel& model) {
  Json j = base_json(model, "mixed");
  j["sigma2"] = vec(model.sigma2);
  j["group_labels"] = model.group_labels;
  j["xi_hat"] = rows(model.xi_hat.transpose());  // one array per response
  return j.dump(2) + "\n";
}

AnyModel model_from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    if (j.at("version").get<std::string>() != kVersion) {
      throw InputError("model file: unsupported version");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "fixed") {
      ComponentModel m;
      read_base(j, m);
      return m;
    }
    if (kind != "mixed") throw InputError("model file: unknown kind '" + kind + "'");
    MixedComponentModel m;
    read_base(j, m);
    m.sigma2 = read_vec(j.at("sigma2"));
    m.group_labels = j.at("group_labels").get<std::vector<std::string>>();
    m.xi_hat = read_rows(j.at("xi_hat"), static_cast<Eigen::Index>(m.group_labels.size()))
                   .transpose();
    if (m.sigma2.size() != m.q() || m.xi_hat.cols() != m.q()) {
      throw InputError("model file: random-effect blocks do not match q");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
}

void save_model(const AnyModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << std::visit([](const auto& m) { return model_to_json(m); }, model);
  if (!out) throw InputError("cannot write " + path);
}

AnyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

void write_trace_csv(const ComponentModel& model, std::ostream& out) {
  out << "component,iteration,criterion,delta_u,delta_sigma2,max_change";
  for (const auto& name : model.response_names) out << ",sigma2_" << name;
  out << '\n';
  for (const auto& row : model.trace) {
    out << row.component + 1 << ',' << row.iteration << ',' << format_double(row.criterion) << ','
        << format_double(row.delta_u) << ',' << format_double(row.delta_sigma2) << ','
        << format_double(row.max_change);
    for (std::size_t k = 0; k < model.response_names.size(); ++k) {
      out << ',' << (k < row.sigma2.size() ? format_double(row.sigma2[k]) : std::string("0"));
    }
    out << '\n';
  }
}

}  // namespace scglrmix
