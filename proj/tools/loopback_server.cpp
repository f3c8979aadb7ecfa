// delta-bridge-loopback: serves a built-in learner over the bridge protocol on
// stdin/stdout. The model is trained on the same standardized split that
// run_audit builds, so a bridged audit can be compared with an in-process one.
//
// --fault injects protocol misbehaviour for client tests.

#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "delta_audit/data.hpp"
#include "delta_audit/error.hpp"
#include "delta_audit/learners.hpp"
#include "delta_audit/model_iface.hpp"
#include "delta_audit/protocol.hpp"
#include "delta_audit/text.hpp"

using namespace delta_audit;

namespace {

class FaultyModel final : public ScoreModel {
 public:
  FaultyModel(std::shared_ptr<ScoreModel> inner, std::string fault)
      : inner_(std::move(inner)), fault_(std::move(fault)) {}

  Capabilities capabilities() const override {
    Capabilities c = inner_->capabilities();
    if (fault_ == "proba-only") c.has_margin = false;
    return c;
  }
  int class_count() const override { return inner_->class_count(); }
  std::string tag() const override { return inner_->tag(); }

  Matrix margins(const Matrix& X) const override {
    Matrix m = inner_->margins(X);
    if (fault_ == "single-margin" && m.cols() == 2) {
      Matrix single(m.rows(), 1);
      for (std::size_t i = 0; i < m.rows(); ++i) single(i, 0) = 0.5 * (m(i, 1) - m(i, 0));
      return single;
    }
    return m;
  }

  Matrix probabilities(const Matrix& X) const override {
    Matrix p = inner_->probabilities(X);
    if (fault_ == "bad-proba") {
      for (double& v : p.data()) v *= 1.1;
    }
    return p;
  }

 private:
  std::shared_ptr<ScoreModel> inner_;
  std::string fault_;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_double(trim_copy(part), "list"));
  return out;
}

std::shared_ptr<const TrainedModel> build(const std::string& dataset, const std::string& label_column,
                                          std::uint64_t seed, double test_fraction,
                                          const std::vector<std::string>& params,
                                          const std::string& weights, const std::string& bias) {
  if (!weights.empty()) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : split(weights, ';')) rows.push_back(parse_list(r));
    return std::make_shared<const TrainedModel>(
        TrainedModel::linear(Matrix::from_rows(rows), parse_list(bias)));
  }
  const Dataset ds = dataset.rfind("embedded:", 0) == 0
                         ? embedded_dataset(dataset.substr(9))
                         : load_csv(dataset.rfind("csv:", 0) == 0 ? dataset.substr(4) : dataset,
                                    label_column);
  const auto split_idx = stratified_split(ds, test_fraction, seed);
  const auto scaler = fit_standardizer(ds, split_idx);
  const Matrix X_train = scaler.transform(ds.X.select_rows(split_idx.train));
  std::vector<int> y_train;
  for (auto i : split_idx.train) y_train.push_back(ds.y[i]);
  std::map<std::string, std::string> kv;
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw ConfigError("--param expects key=value");
    kv[trim_copy(p.substr(0, eq))] = trim_copy(p.substr(eq + 1));
  }
  return std::make_shared<const TrainedModel>(
      fit(LearnerSpec::from_params(kv), X_train, y_train, ds.class_count));
}

// Rewrites one well-formed response line according to the fault mode.
std::string mangle(const std::string& response, const std::string& fault, bool first) {
  if (fault == "malformed" && response.find("\"Y\"") != std::string::npos) return "{\"Y\":[[0.1,";
  auto j = nlohmann::ordered_json::parse(response);
  if (fault == "wrong-id" && j.contains("id") && j["id"].get<long long>() != 0) {
    j["id"] = j["id"].get<long long>() + 1;
    return j.dump();
  }
  if (fault == "zero-cap" && j.contains("has_decision_function")) {
    j["has_decision_function"] = false;
    j["has_predict_proba"] = false;
    return j.dump();
  }
  if (fault == "log-line" && first) return "loading model weights...\n" + response;
  return response;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bridge-protocol server wrapping a built-in learner"};
  std::string dataset = "embedded:separable2";
  std::string label_column = "label";
  std::uint64_t seed = 42;
  double test_fraction = 0.2;
  std::vector<std::string> params;
  std::string weights, bias, fault;
  app.add_option("--dataset", dataset, "embedded:<name> or csv:<path>");
  app.add_option("--label-column", label_column);
  app.add_option("--seed", seed, "Split seed");
  app.add_option("--test-fraction", test_fraction);
  app.add_option("--param", params, "Learner key=value (repeatable), e.g. family=knn");
  app.add_option("--weights", weights, "Linear model weights 'w00,w01;w10,w11'");
  app.add_option("--bias", bias, "Linear model biases 'b0,b1'");
  app.add_option("--fault", fault)->check(CLI::IsMember(
      {"", "log-line", "zero-cap", "bad-proba", "single-margin", "wrong-id", "silent",
       "proba-only", "malformed"}));
  CLI11_PARSE(app, argc, argv);

  std::shared_ptr<ScoreModel> model;
  try {
    if (params.empty() && weights.empty()) params.push_back("family=logreg");
    model = std::make_shared<BuiltinScoreModel>(
        build(dataset, label_column, seed, test_fraction, params, weights, bias));
    if (!fault.empty()) model = std::make_shared<FaultyModel>(model, fault);
  } catch (const std::exception& e) {
    std::cerr << "loopback: " << e.what() << '\n';
    return 1;
  }

  std::string line;
  bool first = true;
  while (std::getline(std::cin, line)) {
    if (trim_copy(line).empty()) continue;
    const bool scoring = line.find("\"op\":\"capabilities\"") == std::string::npos &&
                         line.find("\"op\":\"shutdown\"") == std::string::npos;
    if (fault == "silent" && scoring) continue;
    std::istringstream in(line + "\n");
    std::ostringstream out;
    serve_protocol(*model, in, out);
    std::string response = out.str();
    if (!response.empty() && response.back() == '\n') response.pop_back();
    std::cout << mangle(response, fault, first) << '\n' << std::flush;
    first = false;
    if (line.find("\"op\":\"shutdown\"") != std::string::npos) break;
  }
  return 0;
}
