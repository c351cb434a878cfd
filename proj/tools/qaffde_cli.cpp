// Command-line frontend: dataset generation, model fitting, density
// estimation, benchmark runs, and Bayes classification.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qaffde/conditional.hpp"
#include "qaffde/estimator.hpp"
#include "qaffde/io.hpp"
#include "qaffde/kde_oracle.hpp"
#include "qaffde/metrics.hpp"
#include "qaffde/synthgen.hpp"

namespace {

using nlohmann::json;
using namespace qaffde;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

double elapsed_ms(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

// Every command records its fully resolved configuration next to its output.
void write_config(const std::string& out_path, const json& cfg) {
  std::ofstream out(out_path + ".config.json", std::ios::binary);
  out << cfg.dump(2) << "\n";
}

struct FitFlags {
  double gamma = 0.0;
  bool auto_gamma_flag = false;
  int features = 256;
  int rank = 0;
  double rank_frac = 0.5;
  std::string mode = "estimate";
  std::string normalize = "on";
  std::uint64_t seed = 0;
  long steps = 1000;
  long aff_steps = 1000;
  double lr_init = 5e-3;
  double lr_final = 1e-5;
  int batch_size = 64;
  bool no_aff = false;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  auto* g = cmd->add_option("--gamma", f.gamma, "Kernel bandwidth gamma");
  auto* a = cmd->add_flag("--auto-gamma", f.auto_gamma_flag,
                          "Set gamma from the mean pairwise distance heuristic");
  g->excludes(a);
  cmd->add_option("--features", f.features, "Number of Fourier features D");
  cmd->add_option("--rank", f.rank, "Absolute rank r");
  cmd->add_option("--rank-frac", f.rank_frac, "Rank as a fraction of D (0 maps to r=1)");
  cmd->add_option("--mode", f.mode, "estimate|sgd")
      ->check(CLI::IsMember({"estimate", "sgd"}));
  cmd->add_option("--normalize", f.normalize, "on|off feature normalization")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--steps", f.steps, "SGD steps");
  cmd->add_option("--aff-steps", f.aff_steps, "AFF training steps (0 keeps the RFF draw)");
  cmd->add_option("--lr-init", f.lr_init, "Initial learning rate");
  cmd->add_option("--lr-final", f.lr_final, "Final learning rate");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
  cmd->add_flag("--no-aff", f.no_aff, "Skip AFF training, use plain RFF");
}

FitOptions to_fit_options(const FitFlags& f) {
  FitOptions opt;
  opt.gamma = f.auto_gamma_flag ? 0.0 : f.gamma;
  opt.num_features = f.features;
  opt.rank = f.rank;
  opt.rank_frac = f.rank_frac;
  opt.mode = f.mode == "sgd" ? FitMode::sgd : FitMode::estimate;
  opt.normalize = f.normalize == "on";
  opt.train_features = !f.no_aff && f.aff_steps > 0;
  opt.seed = f.seed;
  opt.aff_cfg.steps = f.aff_steps;
  opt.sgd_cfg.steps = f.steps;
  opt.sgd_cfg.initial_lr = f.lr_init;
  opt.sgd_cfg.final_lr = f.lr_final;
  opt.sgd_cfg.batch_size = f.batch_size;
  return opt;
}

json fit_config_json(const FitFlags& f, double resolved_gamma, int resolved_rank) {
  return json{{"gamma", resolved_gamma},
              {"auto_gamma", f.auto_gamma_flag},
              {"features", f.features},
              {"rank", resolved_rank},
              {"mode", f.mode},
              {"normalize", f.normalize == "on"},
              {"seed", f.seed},
              {"steps", f.steps},
              {"aff_steps", f.aff_steps},
              {"lr_init", f.lr_init},
              {"lr_final", f.lr_final},
              {"batch_size", f.batch_size}};
}

// Fixed benchmark defaults per dataset (bandwidth chosen for desk scale).
const std::map<std::string, double>& benchmark_gammas() {
  static const std::map<std::string, double> g = {
      {"arc", 4.0},         {"bimodal", 4.0},     {"binomial", 2.0},
      {"potential_1", 8.0}, {"potential_2", 8.0}, {"potential_3", 8.0},
      {"potential_4", 8.0}, {"star_eight", 12.0}, {"swiss_roll", 24.0}};
  return g;
}

int run_gen(const std::string& name, long n, int dim, std::uint64_t seed,
            const std::string& out, const std::string& test_out, long n_test) {
  Dataset ds;
  if (name == "gmm") {
    auto [spec, train, test] = generate_random_gmm(dim, seed, n, n_test > 0 ? n_test : n / 4);
    write_dataset_csv(out, train);
    if (!test_out.empty()) write_dataset_csv(test_out, test);
    ds = std::move(train);
  } else {
    ds = generate(name, n, seed);
    write_dataset_csv(out, ds);
    if (!test_out.empty()) write_dataset_csv(test_out, generate(name, n_test > 0 ? n_test : n / 4, seed + 1));
  }
  write_config(out, json{{"command", "gen"},
                         {"name", name},
                         {"n", n},
                         {"dim", ds.dim()},
                         {"seed", seed},
                         {"out", out}});
  return kExitOk;
}

int run_fit(const std::string& data_path, const FitFlags& flags, const std::string& out,
            const std::string& curve_path) {
  const auto data = read_dataset_csv(data_path).data;
  FitOptions opt = to_fit_options(flags);
  const double gamma = opt.gamma > 0.0 ? opt.gamma : auto_gamma(data.points, opt.seed);
  opt.gamma = gamma;
  const auto model = fit_density_model(data.points, opt);
  save_model(out, model);
  write_config(out, fit_config_json(flags, gamma, model.rank));
  if (!curve_path.empty()) {
    // Training-curve emission is re-run through train_sgd to keep fit_density_model lean.
    std::ofstream curve(curve_path, std::ios::binary);
    curve << "step,lr,train_nll,val_nll\n";
    if (opt.mode == FitMode::sgd) {
      std::vector<std::array<double, 4>> rows;
      OptimizerConfig cfg = opt.sgd_cfg;
      cfg.seed = opt.seed + 1;
      const Matrix rho = estimate_rho(data.points, model.feature_map);
      const auto init = spectral_truncate(rho, model.rank, model.feature_map, model.norm_const);
      train_sgd(data.points, model.feature_map, model.rank, cfg, init, model.norm_const, &rows);
      for (const auto& r : rows)
        curve << static_cast<long>(r[0]) << "," << r[1] << "," << r[2] << "," << r[3] << "\n";
    }
  }
  return kExitOk;
}

int run_estimate(const std::string& model_path, const std::string& queries_path,
                 const std::string& out) {
  const auto model = load_model(model_path);
  const auto queries = read_dataset_csv(queries_path).data;
  const Vector densities = predict_batch(model, queries.points);
  std::ofstream os(out, std::ios::binary);
  if (!os) throw std::runtime_error("estimate: cannot open " + out);
  os << "density\n";
  for (Eigen::Index i = 0; i < densities.size(); ++i)
    os << qaffde::detail::format_double(densities(i)) << "\n";
  write_config(out, json{{"command", "estimate"},
                         {"model", model_path},
                         {"queries", queries_path},
                         {"out", out}});
  return kExitOk;
}

void dump_grid(const std::string& path, const DensityMatrixModel& model,
               const Eigen::Ref<const Matrix>& data, int cells = 100) {
  const double pad = 0.5;
  const double x0 = data.col(0).minCoeff() - pad, x1 = data.col(0).maxCoeff() + pad;
  const double y0 = data.col(1).minCoeff() - pad, y1 = data.col(1).maxCoeff() + pad;
  Matrix grid(cells * cells, 2);
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j) {
      grid(i * cells + j, 0) = x0 + (x1 - x0) * i / (cells - 1);
      grid(i * cells + j, 1) = y0 + (y1 - y0) * j / (cells - 1);
    }
  const Vector density = predict_batch(model, grid);
  std::ofstream os(path, std::ios::binary);
  os << "x1,x2,density\n";
  for (Eigen::Index i = 0; i < grid.rows(); ++i)
    os << qaffde::detail::format_double(grid(i, 0)) << ","
       << qaffde::detail::format_double(grid(i, 1)) << ","
       << qaffde::detail::format_double(density(i)) << "\n";
}

int run_benchmark(const std::string& suite, const std::vector<std::uint64_t>& seeds,
                  const std::string& out_dir, long n_train, long n_test, int features,
                  bool grid, const std::vector<std::string>& only) {
  std::filesystem::create_directories(out_dir);
  std::vector<DensityReport> reports;

  auto run_cell = [&](const std::string& dataset, const std::string& method, std::uint64_t seed,
                      const Matrix& train, const Matrix& test, const Vector& truth,
                      double gamma) {
    const auto start = std::chrono::steady_clock::now();
    Vector estimate;
    std::optional<DensityMatrixModel> model;
    if (method == "kde") {
      const auto kde = make_kde(train, {gamma, static_cast<int>(train.cols())});
      estimate = kde_batch(kde, test);
    } else {
      FitOptions opt;
      opt.gamma = gamma;
      opt.num_features = features;
      opt.rank_frac = 0.5;
      opt.mode = method == "qaffde_sgd" ? FitMode::sgd : FitMode::estimate;
      opt.seed = seed;
      model = fit_density_model(train, opt);
      estimate = predict_batch(*model, test);
    }
    DensityReport report;
    report.dataset = dataset;
    report.method = method;
    report.seed = seed;
    report.mae = mae(truth, estimate);
    report.spearman = spearman(truth, estimate);
    report.n_eval = test.rows();
    report.wall_time_ms = elapsed_ms(start);
    reports.push_back(report);
    if (grid && model && train.cols() == 2)
      dump_grid(out_dir + "/" + dataset + "_" + method + "_s" + std::to_string(seed) +
                    "_grid.csv",
                *model, train);
    std::cout << dataset << " " << method << " seed=" << seed << " mae=" << report.mae
              << " spearman=" << report.spearman << " (" << report.wall_time_ms << " ms)\n";
  };

  const std::vector<std::string> methods = {"qaffde", "qaffde_sgd", "kde"};
  if (suite == "synth") {
    for (const auto& name : synthetic_dataset_names()) {
      if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
      const double gamma = benchmark_gammas().at(name);
      for (auto seed : seeds) {
        const Dataset train = generate(name, n_train, seed);
        const Dataset test = generate(name, n_test, seed + 1000);
        for (const auto& method : methods)
          run_cell(name, method, seed, train.points, test.points, test.true_density, gamma);
      }
    }
  } else if (suite == "gmm") {
    for (int d : {1, 2, 4}) {
      for (auto seed : seeds) {
        auto [spec, train, test] = generate_random_gmm(d, seed, n_train, n_test);
        // The pairwise-distance heuristic oversmooths these spiky mixtures;
        // refine it on a validation slice scored against the known density.
        const double base = auto_gamma(train.points, seed);
        // Strided subsets: the generator emits points grouped by component,
        // so contiguous slices would not cover the mixture.
        auto strided = [&](Eigen::Index count, Eigen::Index phase) {
          const Eigen::Index stride =
              std::max<Eigen::Index>(1, train.points.rows() / count);
          count = std::min(count, train.points.rows() / stride);
          std::pair<Matrix, Vector> out{Matrix(count, train.points.cols()), Vector(count)};
          for (Eigen::Index i = 0; i < count; ++i) {
            out.first.row(i) = train.points.row(i * stride + phase);
            out.second(i) = train.true_density(i * stride + phase);
          }
          return out;
        };
        const auto [fit_pts, fit_truth] =
            strided(std::min<Eigen::Index>(10000, train.points.rows() / 2), 1);
        const auto [val_pts, val_truth] =
            strided(std::min<Eigen::Index>(2000, train.points.rows() / 4), 0);
        FitOptions proxy;
        proxy.num_features = 128;
        proxy.train_features = false;
        proxy.seed = seed;
        const double gamma = select_gamma_by_rank(
            fit_pts, val_pts, val_truth,
            {base, 4.0 * base, 16.0 * base, 64.0 * base, 256.0 * base}, proxy);
        for (const auto& method : methods)
          run_cell("gmm_d" + std::to_string(d), method, seed, train.points, test.points,
                   test.true_density, gamma);
      }
    }
  } else {
    throw std::invalid_argument("benchmark: unknown suite " + suite);
  }

  const std::string report_path = out_dir + "/reports.csv";
  write_reports_csv(report_path, reports);
  write_config(report_path, json{{"command", "benchmark"},
                                 {"suite", suite},
                                 {"seeds", seeds},
                                 {"n_train", n_train},
                                 {"n_test", n_test},
                                 {"features", features},
                                 {"grid", grid}});
  return kExitOk;
}

int run_classify(const std::string& train_path, const std::string& test_path,
                 const FitFlags& flags, const std::vector<std::uint64_t>& seeds,
                 bool uniform_priors, const std::string& out) {
  const auto train = read_dataset_csv(train_path);
  const auto test = read_dataset_csv(test_path);
  if (train.labels.empty() || test.labels.empty())
    throw std::runtime_error("classify: train and test CSVs need a label column");

  std::vector<double> accuracies;
  for (auto seed : seeds) {
    FitOptions opt = to_fit_options(flags);
    opt.seed = seed;
    const double gamma = opt.gamma > 0.0 ? opt.gamma : auto_gamma(train.data.points, seed);
    const KernelSpec feature_spec{0.5 * gamma, train.data.dim()};
    OptimizerConfig aff_cfg = opt.aff_cfg;
    aff_cfg.seed = seed;
    FeatureMap map = opt.train_features
                         ? train_aff(train.data.points, feature_spec, opt.num_features, aff_cfg)
                         : sample_rff(feature_spec, opt.num_features, seed);
    map.normalize = opt.normalize;
    OptimizerConfig sgd_cfg = opt.sgd_cfg;
    sgd_cfg.seed = seed + 1;
    const auto model = fit_conditional(
        train.data.points, train.labels, map, opt.resolved_rank(), opt.mode,
        opt.mode == FitMode::sgd ? std::optional<OptimizerConfig>(sgd_cfg) : std::nullopt,
        normalizing_constant({gamma, train.data.dim()}), uniform_priors);
    long correct = 0;
    for (Eigen::Index i = 0; i < test.data.size(); ++i)
      if (classify(model, test.data.points.row(i).transpose()).label ==
          test.labels[static_cast<std::size_t>(i)])
        ++correct;
    const double acc = static_cast<double>(correct) / test.data.size();
    accuracies.push_back(acc);
    std::cout << "seed=" << seed << " accuracy=" << acc << "\n";
  }
  double mean_acc = 0.0;
  for (double a : accuracies) mean_acc += a;
  mean_acc /= accuracies.size();
  std::cout << "mean_accuracy=" << mean_acc << "\n";
  if (!out.empty()) {
    std::ofstream os(out, std::ios::binary);
    os << "seed,accuracy\n";
    for (std::size_t i = 0; i < seeds.size(); ++i) os << seeds[i] << "," << accuracies[i] << "\n";
    os << "mean," << mean_acc << "\n";
    write_config(out, fit_config_json(flags, flags.gamma, flags.rank));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QAFFDE density estimation toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset CSV");
  std::string gen_name, gen_out, gen_test_out;
  long gen_n = 1000, gen_n_test = 0;
  int gen_dim = 2;
  std::uint64_t gen_seed = 0;
  gen->add_option("name", gen_name, "Dataset name (arc, bimodal, ..., gmm)")->required();
  gen->add_option("--n", gen_n, "Number of samples");
  gen->add_option("--dim", gen_dim, "Dimension (gmm only)");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--out", gen_out, "Output CSV path")->required();
  gen->add_option("--test-out", gen_test_out, "Optional held-out CSV path");
  gen->add_option("--n-test", gen_n_test, "Held-out sample count");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a density model from a dataset CSV");
  std::string fit_data, fit_out, fit_curve;
  FitFlags fit_flags;
  fit->add_option("data", fit_data, "Training CSV")->required();
  fit->add_option("--out", fit_out, "Output model file")->required();
  fit->add_option("--curve", fit_curve, "Optional training-curve CSV");
  add_fit_flags(fit, fit_flags);

  // estimate
  auto* est = app.add_subcommand("estimate", "Evaluate a model on query points");
  std::string est_model, est_queries, est_out;
  est->add_option("model", est_model, "Model file")->required();
  est->add_option("queries", est_queries, "Query CSV")->required();
  est->add_option("--out", est_out, "Output CSV")->required();

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Run the benchmark suite");
  std::string bench_suite = "synth", bench_out = "bench_out";
  std::vector<std::uint64_t> bench_seeds = {0};
  long bench_n_train = 40000, bench_n_test = 5000;
  int bench_features = 512;
  bool bench_grid = false;
  std::vector<std::string> bench_only;
  bench->add_option("--suite", bench_suite, "synth|gmm")
      ->check(CLI::IsMember({"synth", "gmm"}));
  bench->add_option("--seeds", bench_seeds, "Seeds to run");
  bench->add_option("--out", bench_out, "Output directory");
  bench->add_option("--n-train", bench_n_train, "Training points per cell");
  bench->add_option("--n-test", bench_n_test, "Test points per cell");
  bench->add_option("--features", bench_features, "Fourier features D");
  bench->add_flag("--grid-dump", bench_grid, "Emit density grids for plotting");
  bench->add_option("--datasets", bench_only, "Restrict to these datasets");

  // classify
  auto* cls = app.add_subcommand("classify", "Conditional density classification");
  std::string cls_train, cls_test, cls_out;
  std::vector<std::uint64_t> cls_seeds = {0};
  bool cls_uniform = false;
  FitFlags cls_flags;
  cls->add_option("train", cls_train, "Labeled training CSV")->required();
  cls->add_option("test", cls_test, "Labeled test CSV")->required();
  cls->add_option("--seeds", cls_seeds, "Seeds to run");
  cls->add_flag("--uniform-priors", cls_uniform, "Use uniform class priors");
  cls->add_option("--out", cls_out, "Optional accuracy report CSV");
  add_fit_flags(cls, cls_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return run_gen(gen_name, gen_n, gen_dim, gen_seed, gen_out, gen_test_out, gen_n_test);
    if (*fit) return run_fit(fit_data, fit_flags, fit_out, fit_curve);
    if (*est) return run_estimate(est_model, est_queries, est_out);
    if (*bench)
      return run_benchmark(bench_suite, bench_seeds, bench_out, bench_n_train, bench_n_test,
                           bench_features, bench_grid, bench_only);
    if (*cls)
      return run_classify(cls_train, cls_test, cls_flags, cls_seeds, cls_uniform, cls_out);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
