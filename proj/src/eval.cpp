// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

namespace laf {
namespace {

constexpr double kRidge = 1e-3;
constexpr int kIrlsIterations = 100;
constexpr std::size_t kReliablePool = 50;

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

Matrix probabilities(const ClassifierModel& model, const LabeledDataset& data,
                     std::span<const SampleId> ids) {
  return nn::softmax(predict(model, data.gather_inputs(ids)));
}

std::vector<SampleId> sample_without_replacement(std::vector<SampleId> pool, std::size_t n,
                                                 std::mt19937_64& rng) {
  std::sort(pool.begin(), pool.end());
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  return pool;
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

double accuracy(const ClassifierModel& model, const LabeledDataset& data,
                std::span<const SampleId> ids) {
  if (ids.empty()) throw UndefinedMetricError("accuracy is undefined on an empty id set");
  const std::vector<int> pred = predict_labels(model, data.gather_inputs(ids));
  const std::vector<int> truth = data.gather_labels(ids);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ids.size());
}

double accuracy(const ClassifierModel& model, const LabeledDataset& data) {
  return accuracy(model, data, data.sample_ids());
}

Matrix attack_features(const Matrix& probabilities) {
  const Index c = probabilities.cols();
  Matrix out(probabilities.rows(), c + 1);
  std::vector<double> row(static_cast<std::size_t>(c));
  for (Index i = 0; i < probabilities.rows(); ++i) {
    for (Index j = 0; j < c; ++j) row[static_cast<std::size_t>(j)] = probabilities(i, j);
    std::sort(row.begin(), row.end(), std::greater<>());
    for (Index j = 0; j < c; ++j) out(i, j) = row[static_cast<std::size_t>(j)];
    out(i, c) = -std::log(std::max(row.front(), 1e-300));
  }
  return out;
}

AttackModel AttackModel::always_member(Index width) {
  AttackModel a;
  a.version = std::string(kAttackVersion) + "/always-member";
  a.mean = RowVector::Zero(width);
  a.scale = RowVector::Ones(width);
  a.weights = Vector::Zero(width);
  a.threshold = -std::numeric_limits<double>::infinity();
  return a;
}

Vector AttackModel::scores(const Matrix& features) const {
  if (features.cols() != weights.size()) {
    throw InputError("attack expects " + std::to_string(weights.size()) + " features, got " +
                     std::to_string(features.cols()));
  }
  const Matrix z = (features.rowwise() - mean).array().rowwise() / scale.array();
  const Vector logits = (z * weights).array() + bias;
  return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
}

std::vector<bool> AttackModel::is_member(const Matrix& features) const {
  const Vector s = scores(features);
  std::vector<bool> out(static_cast<std::size_t>(s.size()));
  for (Index i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = s(i) >= threshold;
  return out;
}

AttackModel fit_attack(const Matrix& member_features, const Matrix& nonmember_features) {
  if (member_features.rows() == 0 || nonmember_features.rows() == 0) {
    throw PreconditionError("attack training pools must be non-empty");
  }
  if (member_features.cols() != nonmember_features.cols()) {
    throw PreconditionError("attack pools have different feature widths");
  }
  const Index d = member_features.cols();
  const Index n = member_features.rows() + nonmember_features.rows();
  Matrix x(n, d);
  x.topRows(member_features.rows()) = member_features;
  x.bottomRows(nonmember_features.rows()) = nonmember_features;
  Vector y = Vector::Zero(n);
  y.head(member_features.rows()).setOnes();

  AttackModel a;
  a.mean = x.colwise().mean();
  a.scale = ((x.rowwise() - a.mean).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Index j = 0; j < d; ++j) {
    if (!(a.scale(j) > 1e-12)) a.scale(j) = 1.0;
  }
  // Design matrix with an intercept column last.
  Matrix z(n, d + 1);
  z.leftCols(d) = (x.rowwise() - a.mean).array().rowwise() / a.scale.array();
  z.col(d).setOnes();

  Vector beta = Vector::Zero(d + 1);
  Matrix reg = kRidge * Matrix::Identity(d + 1, d + 1);
  reg(d, d) = 0.0;
  for (int it = 0; it < kIrlsIterations; ++it) {
    const Vector p = (1.0 / (1.0 + (-(z * beta).array()).exp())).matrix();
    const Vector w = (p.array() * (1.0 - p.array())).max(1e-12).matrix();
    const Vector grad = z.transpose() * (p - y) + reg * beta;
    const Matrix hess = z.transpose() * w.asDiagonal() * z + reg + 1e-9 * Matrix::Identity(d + 1, d + 1);
    const Vector step = hess.ldlt().solve(grad);
    beta -= step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  a.weights = beta.head(d);
  a.bias = beta(d);
  const Vector s = a.scores(x);
  a.threshold = median(std::vector<double>(s.data(), s.data() + s.size()));
  return a;
}

double attack_success_rate(const AttackModel& attack, const Matrix& probe_features) {
  if (probe_features.rows() == 0) throw UndefinedMetricError("ASR is undefined on an empty probe set");
  const auto member = attack.is_member(probe_features);
  const auto hits = std::count(member.begin(), member.end(), true);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(member.size());
}

AsrResult membership_inference_asr(const ClassifierModel& model, const LabeledDataset& train_data,
                                   std::span<const SampleId> member_ids,
                                   const LabeledDataset& nonmember_data,
                                   std::span<const SampleId> probe_ids, std::uint64_t seed) {
  if (member_ids.empty() || nonmember_data.empty()) {
    throw PreconditionError("membership inference needs non-empty member and non-member pools");
  }
  std::mt19937_64 rng(seed);
  const std::size_t n = std::min(member_ids.size(), nonmember_data.size());
  const auto members =
      sample_without_replacement(std::vector<SampleId>(member_ids.begin(), member_ids.end()), n, rng);
  const auto nonmembers = sample_without_replacement(nonmember_data.sample_ids(), n, rng);
  const AttackModel attack =
      fit_attack(attack_features(probabilities(model, train_data, members)),
                 attack_features(probabilities(model, nonmember_data, nonmembers)));
  AsrResult r;
  r.pool_size = n;
  r.asr = attack_success_rate(attack, attack_features(probabilities(model, train_data, probe_ids)));
  if (n < kReliablePool) {
    r.warning = "membership inference pools have only " + std::to_string(n) +
                " samples per side; ASR is unreliable";
    spdlog::warn("{}", *r.warning);
  }
  return r;
}

MetricsReport metrics_report(const ClassifierModel& model, const LabeledDataset& data,
                             const LabeledDataset& test_data, const ForgetSplit& split,
                             std::uint64_t seed) {
  if (test_data.split_tag() != SplitTag::Test) {
    throw PreconditionError("metrics_report requires a test split for test_data");
  }
  MetricsReport r;
  r.scenario = split.scenario;
  r.seed = seed;
  r.model_hash = model_hash(model);
  r.train_r = accuracy(model, data, split.remaining_ids);
  r.train_f = accuracy(model, data, split.forgetting_ids);
  if (split.scenario == Scenario::ClassRemoval) {
    const int target = split.params.target_class.value_or(-1);
    std::vector<SampleId> keep, drop;
    const auto& ids = test_data.sample_ids();
    const auto labels = test_data.labels();
    for (std::size_t i = 0; i < ids.size(); ++i) (labels[i] == target ? drop : keep).push_back(ids[i]);
    r.test_r = accuracy(model, test_data, keep);
    r.test_f = accuracy(model, test_data, drop);
  } else {
    r.test = accuracy(model, test_data);
  }
  const AsrResult asr =
      membership_inference_asr(model, data, split.remaining_ids, test_data, split.forgetting_ids, seed);
  r.asr = asr.asr;
  if (asr.warning) r.warnings.push_back(*asr.warning);
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"scenario", to_string(r.scenario)},
          {"method", r.method},
          {"seed", r.seed},
          {"train_r", r.train_r},
          {"train_f", r.train_f},
          {"test", opt(r.test)},
          {"test_r", opt(r.test_r)},
          {"test_f", opt(r.test_f)},
          {"asr", r.asr},
          {"model_hash", r.model_hash},
          {"config_hash", r.config_hash},
          {"attack_version", r.attack_version},
          {"wall_seconds", r.wall_seconds},
          {"warnings", r.warnings},
          {"settings", r.settings}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  MetricsReport r;
  try {
    r.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.train_r = j.at("train_r").get<double>();
    r.train_f = j.at("train_f").get<double>();
    r.test = opt("test");
    r.test_r = opt("test_r");
    r.test_f = opt("test_f");
    r.asr = j.at("asr").get<double>();
    r.model_hash = j.value("model_hash", "");
    r.config_hash = j.value("config_hash", "");
    r.attack_version = j.value("attack_version", kAttackVersion);
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.warnings = j.value("warnings", std::vector<std::string>{});
    r.settings = j.value("settings", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics report: ") + e.what());
  }
  return r;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {"scenario", "method", "seed",   "train_r", "train_f",
                                                "test",     "test_r", "test_f", "asr",     "wall_seconds"};
  return cols;
}

std::string csv_header() {
  std::string out;
  for (const auto& c : csv_columns()) out += (out.empty() ? "" : ",") + c;
  return out;
}

std::string csv_row(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt_num(*v) : std::string(); };
  std::ostringstream os;
  os << to_string(r.scenario) << ',' << r.method << ',' << r.seed << ',' << fmt_num(r.train_r) << ','
     << fmt_num(r.train_f) << ',' << opt(r.test) << ',' << opt(r.test_r) << ',' << opt(r.test_f)
     << ',' << fmt_num(r.asr) << ',' << fmt_num(r.wall_seconds);
  return os.str();
}

Projector projector_from_string(const std::string& s) {
  if (s == "pca2d") return Projector::Pca2d;
  if (s == "none") return Projector::None;
  throw ConfigError("unknown projector '" + s + "'");
}

Matrix pca2d(const Matrix& points, Matrix* components, RowVector* center) {
  if (points.rows() < 2) throw PreconditionError("pca2d needs at least two points");
  if (points.cols() < 2) throw PreconditionError("pca2d needs at least two dimensions");
  const RowVector mu = points.colwise().mean();
  const Matrix centered = points.rowwise() - mu;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(points.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("pca2d: eigen decomposition failed");
  // Eigenvalues ascend; take the last two columns, largest first.
  const Index d = points.cols();
  Matrix comp(d, 2);
  comp.col(0) = eig.eigenvectors().col(d - 1);
  comp.col(1) = eig.eigenvectors().col(d - 2);
  for (Index k = 0; k < 2; ++k) {
    Index arg = 0;
    comp.col(k).cwiseAbs().maxCoeff(&arg);
    if (comp(arg, k) < 0.0) comp.col(k) *= -1.0;
  }
  if (components) *components = comp;
  if (center) *center = mu;
  return centered * comp;
}

RepresentationTable export_representations(const ClassifierModel& model, const LabeledDataset& data,
                                           std::span<const SampleId> ids, Projector projector) {
  if (ids.empty()) throw PreconditionError("export_representations: empty id set");
  RepresentationTable t;
  t.sample_ids.assign(ids.begin(), ids.end());
  t.labels = data.gather_labels(ids);
  const Matrix reps = extract(model, data.gather_inputs(ids));
  t.coords = projector == Projector::Pca2d ? pca2d(reps) : reps;
  return t;
}

void write_representation_csv(const RepresentationTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const Index d = table.coords.cols();
  out << "sample_id,label";
  if (d == 2) {
    out << ",x,y";
  } else {
    for (Index j = 0; j < d; ++j) out << ",r" << j;
  }
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < table.sample_ids.size(); ++i) {
    out << table.sample_ids[i] << ',' << table.labels[i];
    for (Index j = 0; j < d; ++j) out << ',' << table.coords(static_cast<Index>(i), j);
    out << '\n';
  }
}

}  // namespace laf
