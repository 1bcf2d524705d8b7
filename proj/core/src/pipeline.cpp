#include "hxai/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "hxai/csv.hpp"
#include "hxai/datagen.hpp"
#include "hxai/errors.hpp"
#include "hxai/parallel.hpp"
#include "hxai/report.hpp"
#include "hxai/rng.hpp"

namespace hxai::pipeline {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using nlohmann::json;
namespace fs = std::filesystem;

int output_index(std::string_view name) {
  if (name == "sum") return attrib::kSumOutputs;
  const auto& names = heston::HestonParams::kNames;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw InvalidParameter("unknown output '" + std::string(name) + "' (v0, rho, sigma, theta, kappa, sum)");
}

std::string output_name(int index) {
  if (index == attrib::kSumOutputs) return "sum";
  return std::string(heston::HestonParams::kNames.at(static_cast<std::size_t>(index)));
}

std::uint64_t item_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(state);
}

nnet::Architecture parse_arch(std::string_view s) {
  if (s == "fcnn") return nnet::Architecture::fcnn;
  if (s == "cnn") return nnet::Architecture::cnn;
  throw InvalidParameter("unknown architecture '" + std::string(s) + "' (fcnn, cnn)");
}

// ---- configuration ----

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

template <class T>
void read_value(const json& j, const char* key, T& target, std::vector<std::string>& violations) {
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0)) {
        violations.push_back(std::string(key) + ": expected a non-negative integer");
        return;
      }
    }
    target = j.get<T>();
  } catch (const json::exception&) {
    violations.push_back(std::string(key) + ": wrong type (" + std::string(j.type_name()) + ")");
  }
}

void read_list(const json& j, const char* key, std::vector<std::string>& target, std::vector<std::string>& violations) {
  if (j.is_string()) {
    target = {j.get<std::string>()};
    return;
  }
  read_value(j, key, target, violations);
}

}  // namespace

ExperimentConfig profile_defaults(std::string_view name) {
  ExperimentConfig c;
  c.profile = std::string(name);
  if (name == "desk") {
    c.n = 2000;
  } else if (name == "paper") {
    c.n = 10000;
  } else if (name == "large") {
    c.n = 100000;
  } else {
    throw ConfigError({"profile: unknown profile '" + std::string(name) + "' (desk, paper, large)"});
  }
  return c;
}

void apply_json(ExperimentConfig& c, const json& j, std::vector<std::string>& v) {
  if (!j.is_object()) {
    v.push_back("config: expected a JSON object");
    return;
  }
  auto& e = c.explain;
  for (const auto& [key, value] : j.items()) {
    if (key == "profile") read_value(value, "profile", c.profile, v);
    else if (key == "n") read_value(value, "n", c.n, v);
    else if (key == "seed") read_value(value, "seed", c.seed, v);
    else if (key == "split") read_value(value, "split", c.split, v);
    else if (key == "architectures" || key == "arch") read_list(value, "architectures", c.architectures, v);
    else if (key == "preprocessing") read_value(value, "preprocessing", c.preprocessing, v);
    else if (key == "loss") read_value(value, "loss", c.loss, v);
    else if (key == "epochs") read_value(value, "epochs", c.epochs, v);
    else if (key == "batch_size") read_value(value, "batch_size", c.batch_size, v);
    else if (key == "learning_rate") read_value(value, "learning_rate", c.learning_rate, v);
    else if (key == "methods" || key == "method") read_list(value, "methods", e.methods, v);
    else if (key == "outputs" || key == "output") read_list(value, "outputs", e.outputs, v);
    else if (key == "baseline") read_value(value, "baseline", e.baseline, v);
    else if (key == "coalitions") read_value(value, "coalitions", e.coalitions, v);
    else if (key == "permutations") read_value(value, "permutations", e.permutations, v);
    else if (key == "lime_samples") read_value(value, "lime_samples", e.lime_samples, v);
    else if (key == "lime_kernel_width") read_value(value, "lime_kernel_width", e.lime_kernel_width, v);
    else if (key == "lrp_epsilon") read_value(value, "lrp_epsilon", e.lrp_epsilon, v);
    else if (key == "deeplift_reference") read_value(value, "deeplift_reference", e.deeplift_reference, v);
    else if (key == "instance") {
      if (value.is_null()) {
        e.instance.reset();
      } else {
        std::size_t i = 0;
        const auto before = v.size();
        read_value(value, "instance", i, v);
        if (v.size() == before) e.instance = i;
      }
    } else if (key == "max_instances") read_value(value, "max_instances", e.max_instances, v);
    else if (key == "top_k") read_value(value, "top_k", c.top_k, v);
    else if (key == "report_instance") read_value(value, "report_instance", c.report_instance, v);
    else if (key == "workers") read_value(value, "workers", c.workers, v);
    else if (key == "out") {
      std::string s;
      const auto before = v.size();
      read_value(value, "out", s, v);
      if (v.size() == before) c.out = s;
    } else {
      v.push_back(key + ": unknown key");
    }
  }
}

std::vector<std::string> ExperimentConfig::violations() const {
  std::vector<std::string> v;
  const auto& e = explain;
  if (profile != "desk" && profile != "paper" && profile != "large")
    v.push_back("profile: unknown profile '" + profile + "' (desk, paper, large)");
  if (!(split > 0.0 && split < 1.0)) v.push_back("split: must lie in (0, 1)");
  if (architectures.empty()) v.push_back("architectures: at least one of fcnn, cnn");
  for (const auto& a : architectures)
    if (a != "fcnn" && a != "cnn") v.push_back("architectures: unknown architecture '" + a + "' (fcnn, cnn)");
  if (!preprocessing.empty()) {
    try {
      datagen::parse_preprocess_kind(preprocessing);
    } catch (const Error&) {
      v.push_back("preprocessing: unknown kind '" + preprocessing + "' (minmax, minmax_zca, standardize)");
    }
  }
  if (!loss.empty()) {
    try {
      nnet::parse_loss(loss);
    } catch (const Error&) {
      v.push_back("loss: unknown loss '" + loss + "' (msle, rmse, mse)");
    }
  }
  if (epochs < 1) v.push_back("epochs: must be >= 1");
  if (batch_size < 1) v.push_back("batch_size: must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) v.push_back("learning_rate: must be finite and > 0");
  if (e.methods.empty()) v.push_back("methods: at least one method");
  for (const auto& m : e.methods)
    if (!contains(kMethods, m))
      v.push_back("methods: unknown method '" + m + "' (kernel_shap, sampled_shapley, lime, deeplift, lrp)");
  if (e.outputs.empty()) v.push_back("outputs: at least one output");
  for (const auto& o : e.outputs)
    if (!contains(kOutputs, o)) v.push_back("outputs: unknown output '" + o + "' (v0, rho, sigma, theta, kappa, sum)");
  if (!e.baseline.empty() && e.baseline != "zeros" && e.baseline != "train_mean")
    v.push_back("baseline: must be zeros or train_mean (custom baselines are library-only)");
  if (e.coalitions < 1) v.push_back("coalitions: must be >= 1");
  if (e.permutations < 1) v.push_back("permutations: must be >= 1");
  const std::size_t m = Grid::canonical().size();
  if (e.lime_samples < 2 * m) v.push_back("lime_samples: must be >= 2M = " + std::to_string(2 * m));
  if (!(e.lime_kernel_width >= 0.0) || !std::isfinite(e.lime_kernel_width))
    v.push_back("lime_kernel_width: must be finite and >= 0 (0 = default)");
  if (!(e.lrp_epsilon >= 0.0) || !std::isfinite(e.lrp_epsilon)) v.push_back("lrp_epsilon: must be finite and >= 0");
  if (e.deeplift_reference != "propagate" && e.deeplift_reference != "zero_activations")
    v.push_back("deeplift_reference: must be propagate or zero_activations");
  if (top_k < 1) v.push_back("top_k: must be >= 1");
  if (out.empty()) v.push_back("out: output directory is empty");
  return v;
}

void ExperimentConfig::validate() const {
  auto v = violations();
  if (!v.empty()) throw ConfigError(std::move(v));
}

json ExperimentConfig::to_json() const {
  const auto& e = explain;
  return {{"profile", profile},
          {"n", n},
          {"seed", seed},
          {"split", split},
          {"architectures", architectures},
          {"preprocessing", preprocessing},
          {"loss", loss},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"methods", e.methods},
          {"outputs", e.outputs},
          {"baseline", e.baseline},
          {"coalitions", e.coalitions},
          {"permutations", e.permutations},
          {"lime_samples", e.lime_samples},
          {"lime_kernel_width", e.lime_kernel_width},
          {"lrp_epsilon", e.lrp_epsilon},
          {"deeplift_reference", e.deeplift_reference},
          {"instance", e.instance ? json(*e.instance) : json(nullptr)},
          {"max_instances", e.max_instances},
          {"top_k", top_k},
          {"report_instance", report_instance},
          {"workers", workers},
          {"out", out.string()}};
}

fs::path default_output_root() {
  if (const char* env = std::getenv("HXAI_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
  return "hxai_out";
}

ExperimentConfig resolve_config(const std::optional<fs::path>& file, const json& overrides) {
  std::vector<std::string> v;
  json from_file = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) {
      v.push_back("config: cannot open " + file->string());
    } else {
      try {
        from_file = json::parse(in);
      } catch (const json::exception& e) {
        v.push_back("config: " + file->string() + " is not valid JSON (" + e.what() + ")");
      }
    }
  }
  std::string profile = "desk";
  if (overrides.contains("profile") && overrides["profile"].is_string())
    profile = overrides["profile"].get<std::string>();
  else if (from_file.is_object() && from_file.contains("profile") && from_file["profile"].is_string())
    profile = from_file["profile"].get<std::string>();

  ExperimentConfig c;
  try {
    c = profile_defaults(profile);
  } catch (const ConfigError& e) {
    for (const auto& s : e.violations()) v.push_back(s);
  }
  apply_json(c, from_file, v);
  apply_json(c, overrides, v);
  if (c.out.empty()) c.out = default_output_root();
  for (auto& s : c.violations())
    if (!contains(v, s)) v.push_back(std::move(s));
  if (!v.empty()) throw ConfigError(std::move(v));
  return c;
}

// ---- shared steps ----

datagen::PreprocessKind preprocessing_for(const ExperimentConfig& c, nnet::Architecture arch) {
  if (!c.preprocessing.empty()) return datagen::parse_preprocess_kind(c.preprocessing);
  return arch == nnet::Architecture::fcnn ? datagen::PreprocessKind::minmax_zca : datagen::PreprocessKind::standardize;
}

nnet::TrainConfig train_config_for(const ExperimentConfig& c, nnet::Architecture arch) {
  nnet::TrainConfig t;
  t.loss = !c.loss.empty() ? nnet::parse_loss(c.loss)
                           : (arch == nnet::Architecture::fcnn ? nnet::LossKind::msle : nnet::LossKind::rmse);
  t.epochs = static_cast<int>(c.epochs);
  t.batch_size = static_cast<int>(c.batch_size);
  t.adam.learning_rate = c.learning_rate;
  t.seed = c.seed;
  return t;
}

namespace {

void require(const std::vector<fs::path>& paths) {
  std::vector<std::string> missing;
  for (const auto& p : paths)
    if (!fs::exists(p)) missing.push_back(p.string());
  if (!missing.empty()) throw MissingInputs(std::move(missing));
}

void write_effective_config(const ExperimentConfig& c) {
  fs::create_directories(c.out);
  std::ofstream out(c.out / "config.json");
  if (!out) throw Error("cannot write " + (c.out / "config.json").string());
  out << c.to_json().dump(2) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

}  // namespace

PreparedData prepare(const ExperimentConfig& c, nnet::Architecture arch, const datagen::Preprocessor* fitted) {
  const Layout layout{c.out};
  require({layout.data_dir() / "manifest.json", layout.data_dir() / "features.csv", layout.data_dir() / "labels.csv"});
  PreparedData p;
  p.data = datagen::load_dataset(layout.data_dir());
  if (p.data.size() < 2) throw InvalidParameter("dataset has fewer than 2 rows; nothing to train or explain");
  p.split = datagen::split(p.data, c.split, c.seed);
  p.preprocessor = fitted != nullptr ? *fitted : datagen::Preprocessor::fit(p.split.train.features, preprocessing_for(c, arch));
  p.x_train = p.preprocessor.apply(p.split.train.features);
  p.x_test = p.preprocessor.apply(p.split.test.features);
  return p;
}

// ---- gen ----

void cmd_gen(const ExperimentConfig& c, std::ostream& log) {
  c.validate();
  write_effective_config(c);
  const Layout layout{c.out};
  const auto t0 = std::chrono::steady_clock::now();
  datagen::BuildOptions options;
  options.workers = c.workers;
  const auto data = datagen::build_dataset(c.n, c.seed, options);
  datagen::save_dataset(data, layout.data_dir(), {{"profile", c.profile}});
  log << "gen: " << data.size() << " surfaces (seed " << c.seed << ") -> " << layout.data_dir().string() << " in "
      << fixed(seconds_since(t0), 1) << " s\n";
}

// ---- train ----

void cmd_train(const ExperimentConfig& c, std::ostream& log) {
  c.validate();
  write_effective_config(c);
  const Layout layout{c.out};
  for (const auto& arch_name : c.architectures) {
    const auto arch = parse_arch(arch_name);
    const auto p = prepare(c, arch);
    const auto dir = layout.model_dir(arch_name);
    fs::create_directories(dir);

    auto bounds = datagen::ParamBounds::standard();
    nnet::Model model = arch == nnet::Architecture::fcnn ? nnet::build_fcnn(bounds, c.seed) : nnet::build_cnn(bounds, c.seed);
    model.config = train_config_for(c, arch);
    model.extra = {{"preprocessing", p.preprocessor.to_json()},
                   {"split", {{"fraction", c.split}, {"seed", c.seed}, {"train_rows", p.split.train_rows.size()},
                              {"test_rows", p.split.test_rows.size()}}},
                   {"dataset", {{"seed", p.data.seed}, {"rows", p.data.size()}}}};
    log << "train " << arch_name << ": " << model.parameter_count() << " parameters, "
        << datagen::to_string(p.preprocessor.kind()) << ", " << nnet::to_string(model.config.loss) << ", "
        << p.split.train_rows.size() << "/" << p.split.test_rows.size() << " rows\n";

    nnet::History history;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      history = nnet::train(model, p.x_train, p.split.train.labels, p.x_test, p.split.test.labels, model.config,
                            [&](const nnet::EpochRecord& r) {
                              history.epochs.push_back(r);
                              if (r.epoch == 1 || r.epoch % 20 == 0)
                                log << "  epoch " << r.epoch << " train " << r.train_loss << " valid " << r.valid_loss
                                    << '\n';
                            });
    } catch (const TrainingDiverged&) {
      nnet::write_history(history, dir / "history.csv");
      throw;
    }
    nnet::save_model(model, layout.model_file(arch_name));
    nnet::write_history(history, dir / "history.csv");

    const MatrixXd pred = model.predict(p.x_test);
    const auto errors = nnet::relative_errors(pred, p.split.test.labels);
    const auto names = datagen::label_names();
    csv::write(dir / "test_predictions.csv", names, pred);
    csv::write(dir / "test_errors.csv", names, errors.relative);
    report::write_error_report(report::error_report(errors.relative), dir / "errors");
    log << "  trained in " << fixed(seconds_since(t0), 1) << " s; median |rel err|:";
    for (std::size_t j = 0; j < names.size(); ++j) log << ' ' << names[j] << '=' << fixed(errors.summary.median_abs[j]);
    log << '\n';
  }
}

// ---- explain ----

namespace {

struct MethodRun {
  std::string method;
  attrib::BaselineSpec baseline;
  json parameters;
};

attrib::BaselineSpec baseline_for(const ExperimentConfig& c, const std::string& method, const MatrixXd& x_train) {
  std::string kind = c.explain.baseline;
  if (kind.empty()) kind = (method == "deeplift" || method == "lrp") ? "zeros" : "train_mean";
  if (kind == "zeros") return attrib::BaselineSpec::zeros(x_train.cols());
  return attrib::BaselineSpec::train_mean(x_train);
}

}  // namespace

void cmd_explain(const ExperimentConfig& c, std::ostream& log) {
  c.validate();
  write_effective_config(c);
  const Layout layout{c.out};
  const auto& e = c.explain;
  std::vector<int> outputs;
  for (const auto& o : e.outputs) outputs.push_back(output_index(o));

  std::vector<fs::path> needed;
  for (const auto& arch_name : c.architectures) needed.push_back(layout.model_file(arch_name));
  require(needed);

  for (const auto& arch_name : c.architectures) {
    const auto arch = parse_arch(arch_name);
    const auto model = nnet::load_model(layout.model_file(arch_name), arch);
    if (!model.extra.contains("preprocessing"))
      throw SchemaError(layout.model_file(arch_name).string() + " carries no preprocessing state");
    const auto pre = datagen::Preprocessor::from_json(model.extra.at("preprocessing"));
    const auto p = prepare(c, arch, &pre);

    std::vector<std::size_t> instances;
    const auto n_test = static_cast<std::size_t>(p.x_test.rows());
    if (e.instance) {
      if (*e.instance >= n_test)
        throw InvalidParameter("instance " + std::to_string(*e.instance) + " outside the test split of " +
                               std::to_string(n_test) + " rows");
      instances.push_back(*e.instance);
    } else {
      const std::size_t count = e.max_instances > 0 ? std::min(e.max_instances, n_test) : n_test;
      for (std::size_t i = 0; i < count; ++i) instances.push_back(i);
    }
    const auto f = attrib::predictor(model);
    const auto n = static_cast<Index>(instances.size());

    for (const auto& method : e.methods) {
      const auto t0 = std::chrono::steady_clock::now();
      MethodRun run{method, baseline_for(c, method, p.x_train), json::object()};
      const RowVectorXd base_row = run.baseline.values;
      const auto reference =
          e.deeplift_reference == "zero_activations" ? attrib::ReferenceMode::zero_activations : attrib::ReferenceMode::propagate;
      if (method == "kernel_shap") run.parameters = {{"coalitions", e.coalitions}, {"background", "baseline row"}};
      if (method == "sampled_shapley") run.parameters = {{"permutations", e.permutations}};
      if (method == "lime") {
        const attrib::LimeOptions defaults;
        const double width = e.lime_kernel_width > 0.0 ? e.lime_kernel_width
                                                       : 0.75 * std::sqrt(static_cast<double>(base_row.size()));
        run.parameters = {{"samples", e.lime_samples},
                          {"kernel_width", width},
                          {"huber_delta", defaults.huber_delta},
                          {"ridge", defaults.ridge}};
      }
      if (method == "deeplift") run.parameters = {{"reference", e.deeplift_reference}};
      if (method == "lrp") run.parameters = {{"epsilon", e.lrp_epsilon}};
      run.parameters["architecture"] = arch_name;
      run.parameters["space"] = "preprocessed model input (" + std::string(datagen::to_string(pre.kind())) + ")";

      // phi[o] is instances x features for the o-th requested output.
      std::vector<MatrixXd> phi(outputs.size(), MatrixXd(n, p.x_test.cols()));
      std::vector<Eigen::VectorXd> base(outputs.size(), Eigen::VectorXd(n)), pred(outputs.size(), Eigen::VectorXd(n));
      std::vector<Eigen::VectorXd> extra(outputs.size(), Eigen::VectorXd::Zero(n));  // method-specific diagnostic
      std::vector<Eigen::VectorXd> r2(outputs.size(), Eigen::VectorXd::Zero(n));
      std::vector<char> regularized(static_cast<std::size_t>(n), 0);

      parallel_for(instances.size(), c.workers, [&](std::size_t r) {
        const auto row = static_cast<Index>(r);
        const RowVectorXd x = p.x_test.row(static_cast<Index>(instances[r]));
        const std::uint64_t seed = item_seed(c.seed, instances[r]);
        if (method == "lime") {
          attrib::LimeOptions lo;
          lo.n_samples = e.lime_samples;
          lo.kernel_width = e.lime_kernel_width;
          const auto fits = attrib::lime_explain_all(f, x, base_row, lo, seed, outputs);
          const MatrixXd fx = f(MatrixXd(x));
          for (std::size_t o = 0; o < outputs.size(); ++o) {
            phi[o].row(row) = fits[o].weights.transpose();
            base[o](row) = fits[o].intercept;
            pred[o](row) = fits[o].intercept + fits[o].weights.sum();
            extra[o](row) = attrib::select_output(fx, outputs[o])(0);
            r2[o](row) = fits[o].r2;
          }
          return;
        }
        attrib::Explanation ex;
        if (method == "kernel_shap") {
          ex = attrib::kernel_shap_all(f, x, MatrixXd(base_row), e.coalitions, seed);
          regularized[r] = ex.regularized ? 1 : 0;
        } else if (method == "sampled_shapley") {
          ex = attrib::sampled_shapley_all(f, x, base_row, e.permutations, seed);
        } else if (method == "deeplift") {
          ex = attrib::deeplift_rescale_all(model, x, base_row, reference);
        } else if (method == "lrp") {
          ex = attrib::epsilon_lrp_all(model, x, e.lrp_epsilon);
        } else {
          throw InvalidParameter("unknown method '" + method + "'");
        }
        for (std::size_t o = 0; o < outputs.size(); ++o) {
          const Index col = ex.target_column(outputs[o]);
          phi[o].row(row) = ex.phi.col(col).transpose();
          base[o](row) = ex.base(col);
          pred[o](row) = ex.prediction(col);
          if (method == "sampled_shapley") extra[o](row) = ex.std_error.col(col).maxCoeff();
        }
      });

      for (std::size_t o = 0; o < outputs.size(); ++o) {
        attrib::AttributionMatrix a;
        a.method = method;
        a.baseline = run.baseline;
        a.seed = c.seed;
        a.output_index = outputs[o];
        a.values = phi[o];
        a.base_value = base[o];
        a.prediction = pred[o];
        a.instances = instances;
        a.parameters = run.parameters;
        if (method == "lime") {
          a.parameters["model_prediction"] = std::vector<double>(extra[o].data(), extra[o].data() + extra[o].size());
          a.parameters["r2"] = std::vector<double>(r2[o].data(), r2[o].data() + r2[o].size());
        }
        if (method == "sampled_shapley")
          a.parameters["max_std_error"] = std::vector<double>(extra[o].data(), extra[o].data() + extra[o].size());
        if (method == "kernel_shap")
          a.parameters["regularized_instances"] = std::count(regularized.begin(), regularized.end(), 1);
        attrib::save_attribution(a, layout.attribution_stem(arch_name, method, output_name(outputs[o])));
      }
      log << "explain " << arch_name << " " << method << ": " << n << " instances x " << outputs.size()
          << " outputs in " << fixed(seconds_since(t0), 1) << " s\n";
    }
  }
}

// ---- report ----

namespace {

json file_list(std::initializer_list<fs::path> paths, const fs::path& root) {
  json out = json::array();
  for (const auto& p : paths) out.push_back(fs::relative(p, root).generic_string());
  return out;
}

}  // namespace

void cmd_report(const ExperimentConfig& c, std::ostream& log) {
  c.validate();
  const Layout layout{c.out};
  const auto& e = c.explain;
  std::vector<int> outputs;
  for (const auto& o : e.outputs) outputs.push_back(output_index(o));

  std::vector<fs::path> needed;
  for (const auto& arch : c.architectures) {
    needed.push_back(layout.model_dir(arch) / "test_errors.csv");
    needed.push_back(layout.model_dir(arch) / "test_predictions.csv");
    for (const auto& method : e.methods)
      for (int o : outputs) {
        const auto stem = layout.attribution_stem(arch, method, output_name(o));
        needed.push_back(fs::path(stem).concat(".csv"));
        needed.push_back(fs::path(stem).concat(".json"));
      }
  }
  require(needed);
  write_effective_config(c);

  const fs::path root = layout.report_dir();
  const auto names = datagen::label_names();
  json index = json::array();
  std::size_t unbalanced = 0;
  std::size_t heatmaps = 0;

  for (const auto& arch : c.architectures) {
    const fs::path dir = root / arch;
    const auto errors = csv::read(layout.model_dir(arch) / "test_errors.csv");
    report::write_error_report(report::error_report(errors.values), dir / "errors");
    index.push_back({{"id", arch + "_prediction_errors"},
                     {"description", arch + " relative prediction errors on the test split, per parameter"},
                     {"files", file_list({dir / "errors_histogram.csv", dir / "errors_summary.json"}, root)}});

    const auto predictions = csv::read(layout.model_dir(arch) / "test_predictions.csv").values;

    for (const auto& method : e.methods) {
      const fs::path mdir = dir / method;
      std::vector<MatrixXd> param_grids;
      std::vector<std::string> grid_names;
      json heat_files = json::array();
      for (int o : outputs) {
        const auto name = output_name(o);
        const auto a = attrib::load_attribution(layout.attribution_stem(arch, method, name));
        const MatrixXd grid = attrib::aggregate_importance(a);
        const auto stem = mdir / ("heatmap_" + name);
        report::heatmap_emit(report::make_heatmap(grid, method, arch + " " + method + " mean |attribution|: " + name), stem);
        ++heatmaps;
        heat_files.push_back(fs::relative(fs::path(stem).concat(".svg"), root).generic_string());
        if (o != attrib::kSumOutputs) {
          param_grids.push_back(grid);
          grid_names.push_back(name);
        }

        const Eigen::VectorXd test_pred = attrib::select_output(predictions, o);
        if (std::find(a.instances.begin(), a.instances.end(), c.report_instance) != a.instances.end()) {
          const auto force = report::force_plot_data(a, test_pred, c.report_instance);
          report::write_json(mdir / ("force_" + name + ".json"), report::to_json(force));
        }
        for (std::size_t r = 0; r < a.instances.size(); ++r) {
          const auto tol = report::conservation_tolerance(a.method, a.base_value(static_cast<Index>(r)),
                                                          a.prediction(static_cast<Index>(r)));
          const double err = a.base_value(static_cast<Index>(r)) + a.values.row(static_cast<Index>(r)).sum() -
                             a.prediction(static_cast<Index>(r));
          if (tol && std::abs(err) > *tol) ++unbalanced;
        }
        report::write_cluster_export(a, mdir / ("cluster_" + name + ".csv"));
      }

      std::vector<MatrixXd> table_grids = param_grids;
      std::vector<std::string> table_names = grid_names;
      if (!param_grids.empty()) {
        const MatrixXd overall = attrib::overall_importance(param_grids);
        report::heatmap_emit(report::make_heatmap(overall, method, arch + " " + method + " overall importance"),
                             mdir / "heatmap_overall");
        ++heatmaps;
        heat_files.push_back(fs::relative(mdir / "heatmap_overall.svg", root).generic_string());
        table_grids.push_back(overall);
        table_names.push_back("overall");
      }
      if (!table_grids.empty()) {
        const auto rows = report::summary_table(table_grids, c.top_k);
        report::write_summary_table(rows, table_names, mdir / ("importance_top" + std::to_string(c.top_k)));
      }

      const bool shap = method == "kernel_shap" || method == "sampled_shapley";
      const std::string label = method == "kernel_shap" ? "shap" : method;
      if (shap) {
        index.push_back({{"id", arch + "_" + label + "_per_parameter"},
                         {"description", arch + " mean |SHAP| per parameter: heat maps and top-k table (" + method + ")"},
                         {"files", heat_files}});
        if (!param_grids.empty())
          index.push_back({{"id", arch + "_" + label + "_overall"},
                           {"description", arch + " overall importance, sum of the per-parameter grids (" + method + ")"},
                           {"files", file_list({mdir / "heatmap_overall.svg", mdir / "heatmap_overall.csv"}, root)}});
        if (contains(e.outputs, "v0")) {
          index.push_back({{"id", arch + "_" + label + "_force_v0"},
                           {"description", arch + " force data for v0, instance " + std::to_string(c.report_instance)},
                           {"files", file_list({mdir / "force_v0.json"}, root)}});
          index.push_back({{"id", arch + "_" + label + "_clustering_v0"},
                           {"description", arch + " stacked force data for v0 over all explained test rows"},
                           {"files", file_list({mdir / "cluster_v0.csv"}, root)}});
        }
      } else {
        index.push_back({{"id", arch + "_" + label + "_heatmap"},
                         {"description", arch + " " + method + " mean |attribution| heat maps"},
                         {"files", heat_files}});
        if (method == "lime" && contains(e.outputs, "kappa"))
          index.push_back({{"id", arch + "_lime_kappa_instance"},
                           {"description", arch + " LIME weights for kappa, instance " + std::to_string(c.report_instance)},
                           {"files", file_list({mdir / "force_kappa.json"}, root)}});
      }
    }
  }
  report::write_json(root / "index.json",
                     {{"kind", "report_index"}, {"profile", c.profile}, {"seed", c.seed}, {"entries", index}});
  log << "report: " << c.architectures.size() << " error reports, " << heatmaps << " heat maps -> " << root.string()
      << '\n';
  if (unbalanced > 0) log << "report: warning: " << unbalanced << " attribution rows exceed their balance tolerance\n";
}

void cmd_all(const ExperimentConfig& c, std::ostream& log) {
  c.validate();
  cmd_gen(c, log);
  cmd_train(c, log);
  cmd_explain(c, log);
  cmd_report(c, log);
}

}  // namespace hxai::pipeline
