#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacrank/data.hpp"
#include "pacrank/errors.hpp"
#include "pacrank/gp.hpp"

namespace pacrank {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kModelSchemaVersion = 1;

enum class ModelKind { LinearGaussian, LinearSpikeSlab, Gp };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::LinearGaussian: return "linear-gaussian";
    case ModelKind::LinearSpikeSlab: return "linear-spikeslab";
    case ModelKind::Gp: return "gp";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "linear-gaussian") return ModelKind::LinearGaussian;
  if (s == "linear-spikeslab") return ModelKind::LinearSpikeSlab;
  if (s == "gp") return ModelKind::Gp;
  throw DataError("unknown model kind '" + s + "'");
}

/// Everything needed to score new rows, plus what produced it.
struct FittedModel {
  ModelKind kind = ModelKind::LinearGaussian;
  std::string backend = "ep";
  std::uint64_t seed = 0;
  double gamma = 0;
  StandardizationParams standardization;
  std::vector<std::string> feature_names;

  // prior hyperparameters; unused ones stay unset
  std::optional<double> theta_variance;
  std::optional<double> p, v0, v1;
  std::optional<gp::SqExpKernel> kernel;

  Vector mean;                  // linear: theta; gp: latent scores of training rows
  std::optional<Matrix> covariance;
  std::optional<Vector> inclusion;
  Matrix train_x;               // gp only, standardized
  Vector alpha;                 // gp only
  double log_evidence = 0;

  std::size_t d() const { return static_cast<std::size_t>(standardization.mean.size()); }

  Vector predict(const Matrix& raw) const {
    const Matrix z = standardization.apply(raw);
    if (kind == ModelKind::Gp) return gp::gp_predict(train_x, *kernel, alpha, z);
    return z * mean;
  }
};

namespace detail {

inline nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vector(m.row(r).transpose())));
  return rows;
}

inline Vector vector_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Matrix matrix_from(const nlohmann::json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = vector_from(j[r]);
    if (row.size() != cols) throw DataError("model file: ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json model_to_json(const FittedModel& m) {
  using nlohmann::json;
  json j;
  j["format"] = "pacrank-model";
  j["schema_version"] = kModelSchemaVersion;
  j["artifact_version"] = kArtifactVersion;
  j["kind"] = to_string(m.kind);
  j["backend"] = m.backend;
  j["seed"] = m.seed;
  j["gamma"] = m.gamma;
  j["feature_names"] = m.feature_names;
  j["standardization"] = {{"mean", detail::to_json(m.standardization.mean)},
                          {"scale", detail::to_json(m.standardization.scale)},
                          {"constant", m.standardization.constant}};
  json prior = json::object();
  if (m.theta_variance) prior["theta_variance"] = *m.theta_variance;
  if (m.p) prior["p"] = *m.p;
  if (m.v0) prior["v0"] = *m.v0;
  if (m.v1) prior["v1"] = *m.v1;
  if (m.kernel)
    prior["kernel"] = {{"signal_variance", m.kernel->signal_variance},
                       {"lengthscale", m.kernel->lengthscale},
                       {"jitter", m.kernel->jitter}};
  j["prior"] = prior;
  json post = {{"mean", detail::to_json(m.mean)}, {"log_evidence", m.log_evidence}};
  if (m.covariance) post["covariance"] = detail::to_json(*m.covariance);
  if (m.inclusion) post["inclusion"] = detail::to_json(*m.inclusion);
  if (m.kind == ModelKind::Gp) {
    post["train_x"] = detail::to_json(m.train_x);
    post["alpha"] = detail::to_json(m.alpha);
  }
  j["posterior"] = post;
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "pacrank-model") throw DataError("not a pacrank model file");
    const int version = j.at("schema_version").get<int>();
    if (version != kModelSchemaVersion)
      throw DataError("unsupported model schema version " + std::to_string(version));
    FittedModel m;
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.backend = j.at("backend").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.gamma = j.at("gamma").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto& st = j.at("standardization");
    m.standardization.mean = detail::vector_from(st.at("mean"));
    m.standardization.scale = detail::vector_from(st.at("scale"));
    m.standardization.constant = st.at("constant").get<std::vector<bool>>();
    const auto& pr = j.at("prior");
    if (pr.contains("theta_variance")) m.theta_variance = pr["theta_variance"].get<double>();
    if (pr.contains("p")) m.p = pr["p"].get<double>();
    if (pr.contains("v0")) m.v0 = pr["v0"].get<double>();
    if (pr.contains("v1")) m.v1 = pr["v1"].get<double>();
    if (pr.contains("kernel")) {
      const auto& k = pr["kernel"];
      m.kernel = gp::SqExpKernel{k.at("signal_variance").get<double>(), k.at("lengthscale").get<double>(),
                                 k.at("jitter").get<double>()};
    }
    const auto& post = j.at("posterior");
    m.mean = detail::vector_from(post.at("mean"));
    m.log_evidence = post.at("log_evidence").get<double>();
    if (post.contains("covariance")) m.covariance = detail::matrix_from(post["covariance"], m.mean.size());
    if (post.contains("inclusion")) m.inclusion = detail::vector_from(post["inclusion"]);
    const auto d = static_cast<Eigen::Index>(m.d());
    if (m.standardization.scale.size() != d || m.standardization.constant.size() != m.d())
      throw DataError("model file: standardization vectors disagree in length");
    if (m.kind == ModelKind::Gp) {
      if (!m.kernel) throw DataError("model file: GP model without kernel");
      m.train_x = detail::matrix_from(post.at("train_x"), d);
      m.alpha = detail::vector_from(post.at("alpha"));
      if (m.alpha.size() != m.train_x.rows()) throw DataError("model file: alpha and train_x disagree");
    } else if (m.mean.size() != d) {
      throw DataError("model file: posterior mean has " + std::to_string(m.mean.size()) + " entries, expected " +
                      std::to_string(d));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

inline std::string serialize_model(const FittedModel& m) { return model_to_json(m).dump(2) + "\n"; }

inline void save_model(const FittedModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  out << serialize_model(m);
}

inline FittedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace pacrank
