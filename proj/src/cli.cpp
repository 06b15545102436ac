#include "bayesdyn/cli.hpp"

#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bayesdyn/checkpoint.hpp"
#include "bayesdyn/csv.hpp"
#include "bayesdyn/errors.hpp"
#include "bayesdyn/predictor.hpp"
#include "bayesdyn/trainer.hpp"
#include "bayesdyn/version.hpp"
#include "json.hpp"

namespace bayesdyn::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

// Precedence: command-line flag, then the config file's section for this
// subcommand, then the config file's top level, then the built-in default.
class ConfigBinder {
 public:
  explicit ConfigBinder(std::string section) : section_(std::move(section)) {}

  template <class T>
  CLI::Option* option(CLI::App& app, const std::string& flag, const std::string& key, T& var,
                      const std::string& help) {
    auto* opt = app.add_option(flag, var, help)->capture_default_str();
    bind(opt, key, var);
    return opt;
  }

  CLI::Option* flag(CLI::App& app, const std::string& name, const std::string& key, bool& var,
                    const std::string& help) {
    auto* opt = app.add_flag(name, var, help);
    bind(opt, key, var);
    return opt;
  }

  CLI::Option* config_option(CLI::App& app) {
    return app.add_option("--config", config_path_, "JSON experiment config file");
  }

  void apply() {
    if (config_path_.empty()) {
      for (auto& binding : bindings_) binding(json::object());
      return;
    }
    std::ifstream in(config_path_);
    if (!in) throw IoError("cannot open config file '" + config_path_ + "'");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config file '" + config_path_ + "' is not valid JSON: " + e.what());
    }
    require(doc.is_object(), "config file must hold a JSON object");
    json merged = json::object();
    for (const auto& [key, value] : doc.items()) {
      if (!value.is_object()) merged[key] = value;
    }
    if (doc.contains(section_) && doc[section_].is_object()) {
      for (const auto& [key, value] : doc[section_].items()) merged[key] = value;
    }
    for (auto& binding : bindings_) binding(merged);
  }

  /// True when the value came from a flag or the config file.
  bool provided(const std::string& key) const { return provided_.count(key) > 0; }

 private:
  template <class T>
  void bind(CLI::Option* opt, const std::string& key, T& var) {
    bindings_.push_back([this, opt, key, &var](const json& cfg) {
      if (opt->count() > 0) {
        provided_.insert(key);
        return;
      }
      if (!cfg.contains(key)) return;
      try {
        var = cfg.at(key).get<T>();
      } catch (const json::exception& e) {
        throw UsageError("config key '" + key + "' has the wrong type: " + e.what());
      }
      provided_.insert(key);
    });
  }

  std::string section_;
  std::string config_path_;
  std::vector<std::function<void(const json&)>> bindings_;
  std::set<std::string> provided_;
};

fs::path output_path(const std::string& explicit_path, const std::string& out_dir,
                     const char* default_name) {
  if (!explicit_path.empty()) return explicit_path;
  fs::path dir(out_dir.empty() ? "." : out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir / default_name;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::vector<double> u0{1.0, 1.0, 1.0};
  double t_end = 10.0;
  double h = 1.0 / 500.0;
  std::string out;
  std::string out_dir = ".";
};

int simulate(const SimulateArgs& a, std::ostream& out) {
  require(a.u0.size() == 3, "--u0 needs three comma-separated values");
  require(a.h > 0.0 && std::isfinite(a.h), "--h must be > 0");
  require(a.t_end > 0.0 && std::isfinite(a.t_end), "--t-end must be > 0");
  require(a.h <= a.t_end, "--h must not exceed --t-end");

  const auto path = output_path(a.out, a.out_dir, "train.csv");
  const auto obs = generate_observations(a.u0, a.t_end, a.h);
  Trajectory traj{obs.grid, obs.states, false};
  write_trajectory_csv(path, traj);
  out << fmt::format("N={} samples, t in [{}, {}], h={} -> {}\n", obs.size(), obs.grid.front(),
                     obs.grid.back(), obs.h, path.string());
  return kSuccess;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  double h = 0.0;
  double r = 0.25;
  std::size_t outer_iters = 1000;
  std::size_t phase1_steps = 10;
  double phase1_lr = 0.01;
  std::size_t phase2_steps = 100;
  double phase2_lr = 0.001;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = 10;
  unsigned kernel_order = 1;
  std::string out;
  std::string log;
  std::string out_dir = ".";
  bool verbose = false;
};

int train_cmd(const TrainArgs& a, const ConfigBinder& cfg, std::ostream& out) {
  require(a.r >= 0.0 && a.r < 1.0, "--r must lie in [0, 1)");
  require(!cfg.provided("h") || (a.h > 0.0 && std::isfinite(a.h)), "--h must be > 0");
  require(a.hidden_dim >= 1, "--hidden-dim must be >= 1");
  TrainingSchedule schedule{a.outer_iters, a.phase1_steps, a.phase1_lr, a.phase2_steps, a.phase2_lr};
  try {
    schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto checkpoint_path = output_path(a.out, a.out_dir, "checkpoint.json");
  const auto log_path = output_path(a.log, a.out_dir, "loss.csv");

  const auto traj = read_trajectory_csv(fs::path(a.data));
  if (traj.blew_up) throw DataError(a.data + ": training data contains non-finite values");
  if (!traj.grid.is_uniform()) throw DataError(a.data + ": time grid is not uniformly spaced");
  if (traj.grid.size() < 2) throw DataError(a.data + ": need at least two samples");

  ObservationSet obs = ObservationSet::from_trajectory(traj);
  if (cfg.provided("h")) {
    const double ratio = a.h / obs.h;
    const double stride = std::round(ratio);
    if (stride < 1.0 || std::abs(ratio - stride) > 1e-6 * ratio) {
      throw DataError(fmt::format("{}: --h {} is not a whole multiple of the data spacing {}", a.data,
                                  a.h, obs.h));
    }
    obs = obs.subsample(static_cast<std::size_t>(stride));
    obs.h = a.h;
  }

  NetworkShape shape{obs.states.front().size(), a.hidden_dim, obs.states.front().size(),
                     a.kernel_order};
  TrainingObserver observer;
  if (a.verbose) {
    observer = [&out](std::size_t iter, double loss) {
      if (iter % 50 == 0) out << fmt::format("iter {} loss {:.6g}\n", iter, loss);
    };
  }
  const auto result = train(shape, obs, DropoutRate(a.r), schedule, a.seed, observer);

  Checkpoint cp{result.weights, {a.seed, a.r, obs.h, kVersion}};
  write_checkpoint(checkpoint_path, cp);
  write_loss_csv(log_path, result.loss_history);
  out << fmt::format("trained on {} samples (h={}, r={}); final loss {} -> {}\n", obs.size(), obs.h,
                     a.r, format_number(result.loss_history.back()), checkpoint_path.string());
  return kSuccess;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::vector<double> u0{-1.0, -1.0, -1.0};
  double t_start = 0.0;
  double t_end = 10.0;
  std::size_t n = 1000;
  std::size_t m_traj = 1000;
  double c = 1.96;
  double r = 0.25;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string method = "rk45";
  double tol = 1e-8;
  std::size_t max_attempts = 0;
  int sigma_eps_exponent = 4;
  std::size_t hidden_dim = 10;
  unsigned kernel_order = 1;
  bool resample_per_eval = false;
  bool sigma_eps_in_bounds = false;
  std::string out;
  std::string meta;
  std::string out_dir = ".";
};

int predict_cmd(const PredictArgs& a, const ConfigBinder& cfg, std::ostream& out, std::ostream& err) {
  require(a.t_end > a.t_start, "--t-end must exceed --t-start");
  require(a.n >= 2, "--n must be >= 2");
  require(a.m_traj >= 1, "--m-traj must be >= 1");
  require(a.c > 0.0, "--c must be > 0");
  require(!cfg.provided("r") || (a.r >= 0.0 && a.r < 1.0), "--r must lie in [0, 1)");
  require(a.max_attempts == 0 || a.max_attempts >= a.m_traj, "--max-attempts must be >= --m-traj");
  Method method;
  try {
    method = parse_method(a.method);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  require(method != Method::rk45 || a.tol > 0.0, "--tol must be > 0");

  const auto env_path = output_path(a.out, a.out_dir, "envelope.csv");
  const auto meta_path = output_path(a.meta, a.out_dir, "envelope.json");

  const auto cp = read_checkpoint(fs::path(a.checkpoint));
  const auto& shape = cp.weights.shape();
  if (cfg.provided("hidden_dim") && a.hidden_dim != shape.hidden_dim) {
    throw DataError(fmt::format("checkpoint hidden_dim {} does not match requested {}",
                                shape.hidden_dim, a.hidden_dim));
  }
  if (cfg.provided("kernel_order") && a.kernel_order != shape.kernel_order) {
    throw DataError(fmt::format("checkpoint kernel_order {} does not match requested {}",
                                shape.kernel_order, a.kernel_order));
  }
  if (shape.input_dim != shape.output_dim) {
    throw DataError("checkpoint network does not map the state space onto itself");
  }
  require(a.u0.size() == shape.input_dim,
          fmt::format("--u0 needs {} values for this checkpoint", shape.input_dim));

  const double r = cfg.provided("r") ? a.r : cp.metadata.dropout_rate;
  EnvelopeConfig ec;
  ec.trajectories = a.m_traj;
  ec.confidence = a.c;
  ec.sigma_eps_exponent = a.sigma_eps_exponent;
  ec.integration = {method, a.tol, 0.0};
  ec.max_attempts = a.max_attempts;
  ec.resample_mask_per_eval = a.resample_per_eval;
  ec.sigma_eps_in_bounds = a.sigma_eps_in_bounds;
  ec.threads = a.threads;

  try {
    const auto env = predict_envelope(cp.weights, DropoutRate(r), a.u0, a.t_start, a.t_end, a.n, ec,
                                      a.seed);
    write_envelope_csv(env_path, env);
    write_envelope_meta(meta_path, env, a.m_traj);
    out << fmt::format("retained {} trajectories, discarded {} (r={}, c={}) -> {}\n", env.retained,
                       env.discarded, r, a.c, env_path.string());
    return kSuccess;
  } catch (const InsufficientTrajectories& e) {
    TrajectoryEnvelope partial;
    partial.retained = e.retained();
    partial.discarded = e.discarded();
    partial.confidence = a.c;
    partial.seed = a.seed;
    partial.sigma_eps = std::pow((a.t_end - a.t_start) / static_cast<double>(a.n), a.sigma_eps_exponent);
    write_envelope_meta(meta_path, partial, a.m_traj);
    err << "error: " << e.what() << '\n';
    return kPredictionFailure;
  }
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string envelope;
  std::string reference;
  std::size_t component = 0;
  std::string out;
};

int evaluate_cmd(const EvaluateArgs& a, std::ostream& out) {
  const auto env = read_envelope_csv(fs::path(a.envelope));
  const auto ref = read_trajectory_csv(fs::path(a.reference));
  require(a.component < env.dim, fmt::format("--component must be < {}", env.dim));
  if (ref.dimension() != env.dim) {
    throw DataError("reference and envelope have different state dimensions");
  }
  if (!env.grid.matches(ref.grid)) throw DataError("reference grid does not match the envelope grid");

  const double frac = coverage(env, ref, a.component);
  double width = 0.0;
  json first_miss = nullptr;
  for (std::size_t i = 0; i < env.grid.size(); ++i) {
    const auto at = env.index(i, a.component);
    width += env.upper[at] - env.lower[at];
    const double v = ref.states[i][a.component];
    if (first_miss.is_null() && !(env.lower[at] <= v && v <= env.upper[at])) first_miss = env.grid[i];
  }
  json report = {{"coverage_fraction", frac},
                 {"mean_band_width", width / static_cast<double>(env.grid.size())},
                 {"horizon_of_first_miss", first_miss},
                 {"component", a.component}};
  const auto text = report.dump(2);
  out << text << '\n';
  if (!a.out.empty()) {
    std::ofstream file(a.out);
    if (!file) throw IoError("cannot open '" + a.out + "' for writing");
    file << text << '\n';
  }
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian inverse modelling of autonomous ODEs with MC-dropout polynomial kernel networks",
               "bayesdyn"};
  // `--h` is the sample spacing, so help is long-form only.
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  ConfigBinder sim_cfg("simulate");
  auto* sim_app = app.add_subcommand("simulate", "Generate Sprott B observations");
  sim_cfg.config_option(*sim_app);
  sim_cfg.option(*sim_app, "--u0", "u0", sim.u0, "Initial state x,y,z")->delimiter(',');
  sim_cfg.option(*sim_app, "--t-end", "t_end", sim.t_end, "Final time");
  sim_cfg.option(*sim_app, "--h", "h", sim.h, "Sample spacing");
  sim_cfg.option(*sim_app, "--out", "simulate_out", sim.out, "Output CSV (default <out-dir>/train.csv)");
  sim_cfg.option(*sim_app, "--out-dir", "out_dir", sim.out_dir, "Output directory");

  TrainArgs tr;
  ConfigBinder tr_cfg("train");
  auto* tr_app = app.add_subcommand("train", "Fit the network to trajectory observations");
  tr_cfg.config_option(*tr_app);
  tr_app->add_option("data", tr.data, "Trajectory CSV")->required();
  tr_cfg.option(*tr_app, "--h", "h", tr.h, "Training spacing; a whole multiple of the data spacing (default: data spacing)");
  tr_cfg.option(*tr_app, "--r", "r", tr.r, "Dropout rate in [0, 1)");
  tr_cfg.option(*tr_app, "--outer-iters", "outer_iters", tr.outer_iters, "Noisy batches to draw");
  tr_cfg.option(*tr_app, "--phase1-steps", "phase1_steps", tr.phase1_steps, "Adam steps per batch, first phase");
  tr_cfg.option(*tr_app, "--phase1-lr", "phase1_lr", tr.phase1_lr, "First phase learning rate");
  tr_cfg.option(*tr_app, "--phase2-steps", "phase2_steps", tr.phase2_steps, "Adam steps per batch, second phase");
  tr_cfg.option(*tr_app, "--phase2-lr", "phase2_lr", tr.phase2_lr, "Second phase learning rate");
  tr_cfg.option(*tr_app, "--seed", "seed", tr.seed, "Random seed");
  tr_cfg.option(*tr_app, "--hidden-dim", "hidden_dim", tr.hidden_dim, "Hidden units k");
  tr_cfg.option(*tr_app, "--kernel-order", "kernel_order", tr.kernel_order, "Hadamard power order m (degree m+1)");
  tr_cfg.option(*tr_app, "--out", "checkpoint", tr.out, "Checkpoint path (default <out-dir>/checkpoint.json)");
  tr_cfg.option(*tr_app, "--log", "loss_log", tr.log, "Loss log path (default <out-dir>/loss.csv)");
  tr_cfg.option(*tr_app, "--out-dir", "out_dir", tr.out_dir, "Output directory");
  tr_cfg.flag(*tr_app, "--verbose", "verbose", tr.verbose, "Print the monitored loss every 50 iterations");

  PredictArgs pr;
  ConfigBinder pr_cfg("predict");
  auto* pr_app = app.add_subcommand("predict", "Sample a trajectory confidence envelope");
  pr_cfg.config_option(*pr_app);
  pr_app->add_option("checkpoint", pr.checkpoint, "Checkpoint JSON")->required();
  pr_cfg.option(*pr_app, "--u0", "u0", pr.u0, "Initial state")->delimiter(',');
  pr_cfg.option(*pr_app, "--t-start", "t_start", pr.t_start, "Start time");
  pr_cfg.option(*pr_app, "--t-end", "t_end", pr.t_end, "End time");
  pr_cfg.option(*pr_app, "--n", "n", pr.n, "Grid intervals N");
  pr_cfg.option(*pr_app, "--m-traj", "m_traj", pr.m_traj, "Trajectories to retain M");
  pr_cfg.option(*pr_app, "--c", "c_conf", pr.c, "Confidence multiplier");
  pr_cfg.option(*pr_app, "--r", "r", pr.r, "Dropout rate (default: the checkpoint's)");
  pr_cfg.option(*pr_app, "--seed", "seed", pr.seed, "Random seed");
  pr_cfg.option(*pr_app, "--threads", "threads", pr.threads, "Worker threads (0: all cores)");
  pr_cfg.option(*pr_app, "--method", "method", pr.method, "euler, rk4 or rk45");
  pr_cfg.option(*pr_app, "--tol", "tol", pr.tol, "rk45 tolerance");
  pr_cfg.option(*pr_app, "--max-attempts", "max_attempts", pr.max_attempts, "Sampling cap (0: 10*M)");
  pr_cfg.option(*pr_app, "--sigma-eps-exponent", "sigma_eps_exponent", pr.sigma_eps_exponent, "m in sigma_eps = h^m");
  pr_cfg.option(*pr_app, "--hidden-dim", "hidden_dim", pr.hidden_dim, "Expected hidden units (checked)");
  pr_cfg.option(*pr_app, "--kernel-order", "kernel_order", pr.kernel_order, "Expected kernel order (checked)");
  pr_cfg.flag(*pr_app, "--resample-per-eval", "resample_per_eval", pr.resample_per_eval, "New mask at every field evaluation");
  pr_cfg.flag(*pr_app, "--sigma-eps-in-bounds", "sigma_eps_in_bounds", pr.sigma_eps_in_bounds, "Add sigma_eps to std in quadrature");
  pr_cfg.option(*pr_app, "--out", "envelope", pr.out, "Envelope CSV (default <out-dir>/envelope.csv)");
  pr_cfg.option(*pr_app, "--meta", "envelope_meta", pr.meta, "Side-car JSON (default <out-dir>/envelope.json)");
  pr_cfg.option(*pr_app, "--out-dir", "out_dir", pr.out_dir, "Output directory");

  EvaluateArgs ev;
  auto* ev_app = app.add_subcommand("evaluate", "Score an envelope against a reference trajectory");
  ev_app->add_option("envelope", ev.envelope, "Envelope CSV")->required();
  ev_app->add_option("reference", ev.reference, "Reference trajectory CSV")->required();
  ev_app->add_option("--component", ev.component, "State component index (0 = x)")->capture_default_str();
  ev_app->add_option("--out", ev.out, "Also write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (sim_app->parsed()) {
      sim_cfg.apply();
      return simulate(sim, out);
    }
    if (tr_app->parsed()) {
      tr_cfg.apply();
      return train_cmd(tr, tr_cfg, out);
    }
    if (pr_app->parsed()) {
      pr_cfg.apply();
      return predict_cmd(pr, pr_cfg, out, err);
    }
    if (ev_app->parsed()) return evaluate_cmd(ev, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace bayesdyn::cli
