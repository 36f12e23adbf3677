// wdeos command-line front end. Talks to the library only through wdeos.h.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "config.hpp"
#include "json.hpp"
#include "wdeos/wdeos.h"

namespace fs = std::filesystem;
using nlohmann::json;
using wdeos_cli::ConfigError;
using wdeos_cli::Schema;

namespace {

// Library or I/O failure after validation: exit code 3.
struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(wdeos_status s, const char* what) {
  if (s != WDEOS_OK) throw RuntimeError(std::string(what) + ": " + wdeos_last_error());
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using TrajectoryPtr = std::unique_ptr<wdeos_trajectory, Deleter<wdeos_trajectory, wdeos_trajectory_free>>;
using ToyRunPtr = std::unique_ptr<wdeos_toy_run, Deleter<wdeos_toy_run, wdeos_toy_run_free>>;
using DatasetPtr = std::unique_ptr<wdeos_dataset, Deleter<wdeos_dataset, wdeos_dataset_free>>;
using RunLogPtr = std::unique_ptr<wdeos_run_log, Deleter<wdeos_run_log, wdeos_run_log_free>>;

std::string take_string(char* s) {
  std::string out = s ? s : "";
  wdeos_string_free(s);
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) {}
  const fs::path& dir() const { return dir_; }

  void create() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw RuntimeError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  std::ofstream open(const fs::path& rel) const {
    const fs::path p = dir_ / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw RuntimeError("cannot write " + p.string());
    return f;
  }

  void write(const fs::path& rel, const std::string& text) const {
    auto f = open(rel);
    f << text;
    if (text.empty() || text.back() != '\n') f << '\n';
  }

 private:
  fs::path dir_;
};

struct Common {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  std::size_t jobs = 1;
  std::string format = "csv";
  std::vector<std::string> sets;
};

// ---- schemas ----

json data_defaults() {
  return {{"source", "synthetic"},   {"n", 500},          {"d", 64},
          {"classes", 10},           {"seed", 0},         {"mode", "random_labels"},
          {"paths", json::array()},  {"stats", "full_train_set"}, {"stats_paths", json::array()},
          {"heldout", 0}};
}

json train_defaults() {
  return {{"eta", nullptr},
          {"gamma", nullptr},
          {"steps", nullptr},
          {"seed", 0},
          {"model", {{"layer_sizes", {64, 32, 32, 10}}, {"activation", "relu"}}},
          {"probe_every", 25},
          {"lanczos_k", 1},
          {"lanczos_max_iters", 64},
          {"lanczos_tol", 1e-6},
          {"power_iteration", false},
          {"warmup_ignore", 50},
          {"data", data_defaults()}};
}

Schema simulate_schema() {
  return {{{"eta", nullptr},
           {"gamma", nullptr},
           {"alpha", 1.0},
           {"beta", 1.0},
           {"c_x", 0.0},
           {"c_y", 0.0},
           {"x0", 0.01},
           {"y0", -1.0},
           {"steps", 200000},
           {"tail_fraction", 0.1},
           {"output_stride", 1},
           {"envelope_tau_max", 0.0},
           {"seed", 0}},
          {"eta", "gamma"}};
}

Schema toy_schema() {
  return {{{"eta", nullptr},
           {"gammas", nullptr},
           {"alpha", 1.0},
           {"beta", 1.0},
           {"eta_ref", nullptr},
           {"steps", 20000},
           {"init", nullptr},
           {"output_stride", 1},
           {"seed", 0}},
          {"eta", "gammas"}};
}

Schema train_schema() { return {train_defaults(), {"eta", "gamma", "steps"}}; }

Schema sweep_schema() {
  json d = train_defaults();
  d.erase("gamma");
  d["gammas"] = nullptr;
  d["seeds"] = nullptr;
  d["ntk"] = false;
  d["ntk_mode"] = "per_output";
  return {d, {"eta", "gammas", "steps"}};
}

Schema ntk_schema() {
  json d = train_defaults();
  d["n_grid"] = json::array();
  d["mode"] = "per_output";
  d["on"] = "train";
  return {d, {"eta", "gamma", "steps"}};
}

Schema align_schema() {
  return {{{"spectrum", nullptr},
           {"generator", {{"n", 50}, {"leading", 5}, {"ratio", 10.0}, {"floor", 100.0}, {"bulk_scale", 1.0}, {"seed", 0}}},
           {"b", nullptr},
           {"alphas", nullptr},
           {"alpha_grid", {{"min", 1e-2}, {"max", 1e6}, {"count", 400}}},
           {"seed", 0}},
          {}};
}

// ---- validation helpers ----

double positive(const json& c, const char* k) {
  const double v = c.at(k).get<double>();
  if (!(v > 0.0)) throw ConfigError(std::string(k) + " must be > 0");
  return v;
}

double nonneg(const json& v, const std::string& k) {
  if (!v.is_number()) throw ConfigError(k + " must be a number");
  const double x = v.get<double>();
  if (!(x >= 0.0)) throw ConfigError(k + " must be >= 0");
  return x;
}

std::size_t count(const json& c, const std::string& k, std::size_t min = 0) {
  const json& v = c.at(k);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
    throw ConfigError(k + " must be an integer >= " + std::to_string(min));
  return v.get<std::size_t>();
}

void one_of(const json& c, const std::string& k, std::initializer_list<const char*> allowed) {
  const std::string v = c.at(k).get<std::string>();
  for (const char* a : allowed)
    if (v == a) return;
  throw ConfigError("invalid value '" + v + "' for " + k);
}

wdeos_activation activation_of(const std::string& s) {
  if (s == "relu") return WDEOS_RELU;
  if (s == "tanh") return WDEOS_TANH;
  return WDEOS_IDENTITY;
}

void validate_train_like(const json& c, bool need_gamma) {
  positive(c, "eta");
  if (need_gamma) nonneg(c.at("gamma"), "gamma");
  count(c, "steps", 0);
  count(c, "probe_every", 1);
  count(c, "lanczos_k", 1);
  count(c, "lanczos_max_iters", 1);
  positive(c, "lanczos_tol");
  count(c, "warmup_ignore");
  const json& m = c.at("model");
  if (!m.at("layer_sizes").is_array() || m.at("layer_sizes").size() < 2)
    throw ConfigError("model.layer_sizes needs at least two entries");
  for (const auto& s : m.at("layer_sizes"))
    if (!s.is_number_integer() || s.get<long long>() < 1) throw ConfigError("model.layer_sizes entries must be >= 1");
  one_of(m, "activation", {"relu", "tanh", "identity"});
  const json& d = c.at("data");
  one_of(d, "source", {"synthetic", "cifar10"});
  one_of(d, "mode", {"random_labels", "teacher"});
  one_of(d, "stats", {"full_train_set", "self"});
  count(d, "n", 1);
  count(d, "d", 1);
  count(d, "classes", 1);
  count(d, "heldout");
  if (d.at("source") == "cifar10" && d.at("paths").empty()) throw ConfigError("data.paths is required for cifar10");
  const std::size_t input = d.at("source") == "cifar10" ? 3072 : d.at("d").get<std::size_t>();
  const std::size_t classes = d.at("source") == "cifar10" ? 10 : d.at("classes").get<std::size_t>();
  if (m.at("layer_sizes").front().get<std::size_t>() != input)
    throw ConfigError("model.layer_sizes[0] must equal the input dimension " + std::to_string(input));
  if (m.at("layer_sizes").back().get<std::size_t>() != classes)
    throw ConfigError("model.layer_sizes[-1] must equal the number of classes " + std::to_string(classes));
}

// ---- shared pieces ----

struct Model {
  std::vector<size_t> sizes;
  wdeos_activation act;
};

Model model_of(const json& c) {
  return {c.at("model").at("layer_sizes").get<std::vector<size_t>>(),
          activation_of(c.at("model").at("activation").get<std::string>())};
}

wdeos_run_config run_config_of(const json& c, const Model& m, double gamma, uint64_t seed) {
  wdeos_run_config rc;
  wdeos_run_config_default(&rc);
  rc.layer_sizes = m.sizes.data();
  rc.n_layers = m.sizes.size();
  rc.activation = m.act;
  rc.eta = c.at("eta").get<double>();
  rc.gamma = gamma;
  rc.steps = c.at("steps").get<size_t>();
  rc.probe_every = c.at("probe_every").get<size_t>();
  rc.lanczos_k = c.at("lanczos_k").get<size_t>();
  rc.seed = seed;
  rc.warmup_ignore = c.at("warmup_ignore").get<size_t>();
  rc.lanczos_max_iters = c.at("lanczos_max_iters").get<size_t>();
  rc.lanczos_tol = c.at("lanczos_tol").get<double>();
  rc.use_power_iteration = c.at("power_iteration").get<bool>();
  return rc;
}

std::vector<const char*> c_paths(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

// Returns (training set, held-out set or null).
std::pair<DatasetPtr, DatasetPtr> load_data(const json& d) {
  const std::size_t n = d.at("n").get<std::size_t>(), held = d.at("heldout").get<std::size_t>();
  wdeos_dataset* raw = nullptr;
  if (d.at("source") == "synthetic") {
    const auto mode = d.at("mode") == "teacher" ? WDEOS_TEACHER : WDEOS_RANDOM_LABELS;
    check(wdeos_dataset_synthetic(n + held, d.at("d").get<size_t>(), d.at("classes").get<size_t>(),
                                  d.at("seed").get<uint64_t>(), mode, &raw),
          "synthetic dataset");
  } else {
    const auto paths = d.at("paths").get<std::vector<std::string>>();
    const auto cp = c_paths(paths);
    check(wdeos_dataset_load_cifar10(cp.data(), cp.size(), n + held, &raw), "load cifar10");
    DatasetPtr loaded(raw);
    const auto sp = d.at("stats_paths").get<std::vector<std::string>>();
    const auto csp = c_paths(sp);
    const auto src = d.at("stats") == "self" ? WDEOS_STATS_SELF : WDEOS_STATS_FULL_TRAIN_SET;
    check(wdeos_dataset_normalize(loaded.get(), src, csp.data(), csp.size(), &raw), "normalize");
  }
  DatasetPtr all(raw);
  if (held == 0) return {std::move(all), nullptr};
  wdeos_dataset *train = nullptr, *test = nullptr;
  check(wdeos_dataset_slice(all.get(), 0, n, &train), "slice");
  DatasetPtr tr(train);
  check(wdeos_dataset_slice(all.get(), n, held, &test), "slice");
  return {std::move(tr), DatasetPtr(test)};
}

std::vector<double> run_losses(const wdeos_run_log* log) {
  std::vector<double> v(wdeos_run_log_steps(log));
  check(wdeos_run_log_losses(log, v.data()), "losses");
  return v;
}

void write_losses(const Output& out, const fs::path& rel, const wdeos_run_log* log) {
  auto f = out.open(rel);
  f << "step,loss\n";
  const auto v = run_losses(log);
  for (std::size_t i = 0; i < v.size(); ++i) f << i << ',' << fmt(v[i]) << '\n';
}

void write_probes(const Output& out, const fs::path& stem, const wdeos_run_log* log, const std::string& format) {
  if (format == "jsonl") {
    const fs::path p = out.dir() / fs::path(stem.string() + ".jsonl");
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    check(wdeos_run_log_write_jsonl(log, p.c_str()), "write jsonl");
    return;
  }
  auto f = out.open(fs::path(stem.string() + ".csv"));
  f << "step,loss,delta_loss,lambda,alpha,beta,c_x,c_y,c_y_crit\n";
  for (std::size_t i = 0; i < wdeos_run_log_num_probes(log); ++i) {
    wdeos_probe p;
    check(wdeos_run_log_probe(log, i, &p), "probe");
    f << p.step << ',' << fmt(p.loss) << ',' << fmt(p.delta_loss) << ',' << fmt(p.lambda_max) << ',' << fmt(p.alpha)
      << ',' << fmt(p.beta) << ',' << fmt(p.c_x) << ',' << fmt(p.c_y) << ',' << fmt(p.c_y_crit) << '\n';
  }
}

json summary_of(const wdeos_run_log* log) {
  char* s = nullptr;
  check(wdeos_run_log_summary_json(log, &s), "summary");
  return json::parse(take_string(s));
}

// ---- commands ----

json validate_simulate(const json& c) {
  positive(c, "eta");
  nonneg(c.at("gamma"), "gamma");
  positive(c, "beta");
  count(c, "steps", 1);
  count(c, "output_stride", 1);
  const double tf = c.at("tail_fraction").get<double>();
  if (!(tf > 0.0 && tf <= 1.0)) throw ConfigError("tail_fraction must lie in (0, 1]");
  nonneg(c.at("envelope_tau_max"), "envelope_tau_max");
  return c;
}

wdeos_oscillator_config osc_of(const json& c) {
  return {c.at("eta").get<double>(), c.at("gamma").get<double>(), c.at("alpha").get<double>(),
          c.at("beta").get<double>(), c.at("c_x").get<double>(),   c.at("c_y").get<double>(),
          c.at("x0").get<double>(),   c.at("y0").get<double>()};
}

struct Series {
  std::vector<double> t, x, y;
};

Series copy_traj(const wdeos_trajectory* tr) {
  Series s;
  const std::size_t n = wdeos_trajectory_length(tr);
  s.t.resize(n);
  s.x.resize(n);
  s.y.resize(n);
  check(wdeos_trajectory_copy(tr, s.t.data(), s.x.data(), s.y.data()), "trajectory copy");
  return s;
}

void write_series(const Output& out, const std::string& stem, const Series& s, std::size_t stride,
                  const std::string& format) {
  if (format == "jsonl") {
    auto f = out.open(stem + ".jsonl");
    for (std::size_t i = 0; i < s.t.size(); i += stride)
      f << json{{"t", num(s.t[i])}, {"x", num(s.x[i])}, {"y", num(s.y[i])}}.dump() << '\n';
    return;
  }
  auto f = out.open(stem + ".csv");
  f << "t,x,y\n";
  for (std::size_t i = 0; i < s.t.size(); i += stride) f << fmt(s.t[i]) << ',' << fmt(s.x[i]) << ',' << fmt(s.y[i]) << '\n';
}

void cmd_simulate(const json& c, Output& out, const Common& common) {
  const auto cfg = osc_of(c);
  wdeos_oscillator_prediction pred;
  check(wdeos_oscillator_predict(&cfg, &pred), "predict");
  out.create();

  wdeos_trajectory* raw = nullptr;
  check(wdeos_oscillator_simulate(&cfg, c.at("steps").get<size_t>(), &raw), "simulate");
  TrajectoryPtr tr(raw);
  const Series s = copy_traj(tr.get());
  write_series(out, "trajectory", s, c.at("output_stride").get<size_t>(), common.format);

  json pj = {{"y_star", num(pred.y_star)},
             {"bounce_mean", num(pred.bounce_mean)},
             {"amplitude", pred.has_amplitude ? num(pred.amplitude) : json(nullptr)},
             {"c_y_crit", num(pred.c_y_crit)},
             {"collapsed", pred.collapsed != 0},
             {"y_star_collapsed", num(pred.y_star_collapsed)},
             {"decay_rate", num(pred.decay_rate)},
             {"omega_d", num(pred.omega_d)}};
  out.write("prediction.json", pj.dump(2));

  json report;
  report["diverged"] = wdeos_trajectory_diverged(tr.get()) != 0;
  report["steps_simulated"] = s.t.size() - 1;
  double amp = 0, mx = 0, yr = 0;
  if (wdeos_measure_limit_cycle(tr.get(), c.at("tail_fraction").get<double>(), &amp, &mx, &yr) == WDEOS_OK) {
    report["measured"] = {{"amplitude", num(amp)}, {"mean_x", num(mx)}, {"y_rest", num(yr)}};
    const double y_pred = pred.collapsed ? pred.y_star_collapsed : pred.y_star;
    report["predicted"] = {{"amplitude", pred.has_amplitude ? num(pred.amplitude) : json(0.0)},
                           {"mean_x", num(pred.bounce_mean)},
                           {"y_rest", num(y_pred)}};
    report["abs_error"] = {{"amplitude", num(std::abs(amp - (pred.has_amplitude ? pred.amplitude : 0.0)))},
                           {"y_rest", num(std::abs(yr - y_pred))}};
  } else {
    report["measured"] = nullptr;
    report["measure_error"] = wdeos_last_error();
  }
  check(wdeos_trajectory_rescale_time(tr.get(), cfg.eta), "rescale");
  double rate = 0, freq = 0;
  if (wdeos_fit_decay(tr.get(), &rate, &freq) == WDEOS_OK)
    report["decay_fit_tau"] = {{"rate", num(rate)}, {"frequency", num(freq)}};
  else
    report["decay_fit_tau"] = nullptr;

  const double tau_max = c.at("envelope_tau_max").get<double>();
  if (tau_max > 0.0) {
    wdeos_oscillator_config env = cfg;
    env.x0 = std::abs(env.x0);
    check(wdeos_envelope_simulate(&env, tau_max, 0.0, &raw), "envelope");
    TrajectoryPtr et(raw);
    write_series(out, "envelope", copy_traj(et.get()), 1, common.format);
    if (wdeos_fit_decay(et.get(), &rate, &freq) == WDEOS_OK)
      report["envelope_decay_fit"] = {{"rate", num(rate)}, {"frequency", num(freq)}};
    else
      report["envelope_decay_fit"] = nullptr;
  }
  out.write("report.json", report.dump(2));
}

json validate_toy(const json& c) {
  positive(c, "eta");
  if (!c.at("gammas").is_array() || c.at("gammas").empty()) throw ConfigError("gammas must be a non-empty list");
  for (const auto& g : c.at("gammas")) nonneg(g, "gammas[]");
  positive(c, "alpha");
  positive(c, "beta");
  if (!c.at("eta_ref").is_null()) positive(c, "eta_ref");
  count(c, "steps", 1);
  count(c, "output_stride", 1);
  if (!c.at("init").is_null() && (!c.at("init").is_array() || c.at("init").size() != 3))
    throw ConfigError("init must be [x, y, z]");
  return c;
}

void cmd_toy(const json& c, Output& out, const Common&) {
  const double eta = c.at("eta").get<double>();
  const wdeos_toy_config tc{c.at("eta_ref").is_null() ? eta : c.at("eta_ref").get<double>(), c.at("alpha").get<double>(),
                            c.at("beta").get<double>()};
  wdeos_toy_state init;
  if (c.at("init").is_null()) {
    check(wdeos_toy_default_init(&tc, &init), "toy init");
  } else {
    const auto v = c.at("init").get<std::vector<double>>();
    init = {v[0], v[1], v[2]};
  }
  out.create();
  const std::size_t steps = c.at("steps").get<size_t>(), stride = c.at("output_stride").get<size_t>();
  auto f = out.open("toy.csv");
  f << "gamma,step,x,y,z,loss,sharpness\n";
  json runs = json::array();
  for (const auto& gj : c.at("gammas")) {
    const double g = gj.get<double>();
    wdeos_toy_run* raw = nullptr;
    check(wdeos_toy_train(&tc, eta, g, steps, &init, &raw), "toy train");
    ToyRunPtr run(raw);
    const std::size_t n = wdeos_toy_run_length(run.get());
    std::vector<double> sharp(n), loss(n);
    std::vector<wdeos_toy_state> st(n);
    check(wdeos_toy_run_sharpness(run.get(), sharp.data()), "toy sharpness");
    check(wdeos_toy_run_losses(run.get(), loss.data()), "toy losses");
    check(wdeos_toy_run_states(run.get(), st.data()), "toy states");
    for (std::size_t i = 0; i < n; i += stride)
      f << fmt(g) << ',' << i << ',' << fmt(st[i].x) << ',' << fmt(st[i].y) << ',' << fmt(st[i].z) << ','
        << fmt(loss[i]) << ',' << fmt(sharp[i]) << '\n';
    json r = {{"gamma", g}, {"threshold", 2.0 / eta - g}, {"diverged", wdeos_toy_run_diverged(run.get()) != 0}};
    double stab = 0;
    r["stabilization"] = wdeos_stabilization_level(sharp.data(), n, &stab) == WDEOS_OK ? num(stab) : json(nullptr);
    // Late-phase oscillation: mean |S_{t+1} − S_t| over the final 10%.
    const std::size_t tail = (n + 9) / 10;
    double jump = 0.0;
    for (std::size_t i = n - tail; i + 1 < n; ++i) jump += std::abs(sharp[i + 1] - sharp[i]);
    r["tail_oscillation"] = tail > 1 ? num(jump / static_cast<double>(tail - 1)) : json(nullptr);
    double ea = 0, eb = 0;
    size_t rows = 0;
    if (wdeos_toy_crosscheck(&tc, run.get(), g, 0.01, &ea, &eb, &rows) == WDEOS_OK)
      r["crosscheck"] = {{"states", rows}, {"max_alpha_rel_err", num(ea)}, {"max_beta_rel_err", num(eb)}};
    runs.push_back(r);
  }
  out.write("summary.json", json{{"runs", runs}}.dump(2));
}

json validate_train(const json& c) {
  validate_train_like(c, true);
  count(c, "steps", 1);
  return c;
}

void cmd_train(const json& c, Output& out, const Common& common) {
  const Model m = model_of(c);
  auto data = load_data(c.at("data"));
  out.create();
  const auto rc = run_config_of(c, m, c.at("gamma").get<double>(), c.at("seed").get<uint64_t>());
  wdeos_run_log* raw = nullptr;
  check(wdeos_train(&rc, data.first.get(), &raw), "train");
  RunLogPtr log(raw);
  write_probes(out, "steps", log.get(), common.format);
  write_losses(out, "losses.csv", log.get());
  out.write("summary.json", summary_of(log.get()).dump(2));
  char* meta = nullptr;
  check(wdeos_dataset_metadata_json(data.first.get(), &meta), "metadata");
  out.write("dataset.json", take_string(meta));
}

json validate_sweep(const json& c) {
  validate_train_like(c, false);
  count(c, "steps", 1);
  if (!c.at("gammas").is_array() || c.at("gammas").empty()) throw ConfigError("gammas must be a non-empty list");
  for (const auto& g : c.at("gammas")) nonneg(g, "gammas[]");
  if (!c.at("seeds").is_null()) {
    if (!c.at("seeds").is_array() || c.at("seeds").empty()) throw ConfigError("seeds must be a non-empty list");
    for (const auto& s : c.at("seeds"))
      if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("seeds must be non-negative integers");
  }
  one_of(c, "ntk_mode", {"per_output", "per_sample_sum"});
  return c;
}

void cmd_sweep(const json& c, Output& out, const Common& common) {
  const Model m = model_of(c);
  auto data = load_data(c.at("data"));
  const auto gammas = c.at("gammas").get<std::vector<double>>();
  const auto seeds = c.at("seeds").is_null() ? std::vector<uint64_t>{c.at("seed").get<uint64_t>()}
                                             : c.at("seeds").get<std::vector<uint64_t>>();
  const bool want_ntk = c.at("ntk").get<bool>();
  const int per_sample = c.at("ntk_mode") == "per_sample_sum";
  out.create();

  const std::size_t cells = gammas.size() * seeds.size();
  std::vector<json> rows(cells);
  auto do_cell = [&](std::size_t i) {
    const std::size_t gi = i / seeds.size();
    const double g = gammas[gi];
    const uint64_t s = seeds[i % seeds.size()];
    json row = {{"gamma", g}, {"seed", s}};
    const fs::path cell = fs::path("cells") / ("gamma_" + std::to_string(gi) + "_seed_" + std::to_string(s));
    try {
      const auto rc = run_config_of(c, m, g, s);
      wdeos_run_log* raw = nullptr;
      check(wdeos_train(&rc, data.first.get(), &raw), "train");
      RunLogPtr log(raw);
      write_probes(out, cell / "steps", log.get(), common.format);
      const json sum = summary_of(log.get());
      out.write(cell / "summary.json", sum.dump(2));
      for (const char* k : {"onset", "stabilization", "crossed", "diverged", "digest"}) row[k] = sum.at(k);
      row["ntk_lambda_max"] = nullptr;
      if (want_ntk && !sum.at("diverged").get<bool>()) {
        std::vector<double> params(wdeos_run_log_num_params(log.get()));
        check(wdeos_run_log_final_params(log.get(), params.data()), "params");
        double lam = 0;
        const wdeos_dataset* on = data.second ? data.second.get() : data.first.get();
        check(wdeos_ntk_lambda_max(m.sizes.data(), m.sizes.size(), m.act, params.data(), on, per_sample, &lam), "ntk");
        row["ntk_lambda_max"] = num(lam);
      }
      row["error"] = nullptr;
    } catch (const std::exception& e) {
      row["error"] = e.what();
    }
    rows[i] = row;
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(common.jobs, cells));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells; i = next++) do_cell(i);
    });
  for (auto& t : pool) t.join();

  auto f = out.open("sweep.csv");
  f << "gamma,seed,onset,stabilization,crossed,diverged,ntk_lambda_max,error\n";
  auto cell_str = [](const json& v) {
    if (v.is_null()) return std::string();
    if (v.is_number_float()) return fmt(v.get<double>());
    if (v.is_boolean()) return std::string(v.get<bool>() ? "1" : "0");
    if (v.is_string()) return json(v).dump();
    return v.dump();
  };
  for (const auto& r : rows) {
    f << fmt(r.at("gamma").get<double>()) << ',' << r.at("seed").get<uint64_t>();
    for (const char* k : {"onset", "stabilization", "crossed", "diverged", "ntk_lambda_max", "error"})
      f << ',' << (r.contains(k) ? cell_str(r.at(k)) : std::string());
    f << '\n';
  }
  out.write("sweep.json", json(rows).dump(2));
}

json validate_ntk(const json& c) {
  validate_train_like(c, true);
  one_of(c, "mode", {"per_output", "per_sample_sum"});
  one_of(c, "on", {"train", "heldout"});
  if (c.at("on") == "heldout" && c.at("data").at("heldout").get<std::size_t>() == 0)
    throw ConfigError("on = heldout needs data.heldout > 0");
  for (const auto& n : c.at("n_grid"))
    if (!n.is_number_integer() || n.get<long long>() < 1) throw ConfigError("n_grid entries must be >= 1");
  return c;
}

void cmd_ntk(const json& c, Output& out, const Common& common) {
  const Model m = model_of(c);
  auto data = load_data(c.at("data"));
  out.create();
  std::size_t p = 0;
  check(wdeos_mlp_num_params(m.sizes.data(), m.sizes.size(), &p), "num params");
  std::vector<double> params(p);
  const uint64_t seed = c.at("seed").get<uint64_t>();
  json summary;
  if (c.at("steps").get<size_t>() == 0) {
    check(wdeos_mlp_init_params(m.sizes.data(), m.sizes.size(), m.act, seed, params.data()), "init");
    summary["trained"] = false;
  } else {
    const auto rc = run_config_of(c, m, c.at("gamma").get<double>(), seed);
    wdeos_run_log* raw = nullptr;
    check(wdeos_train(&rc, data.first.get(), &raw), "train");
    RunLogPtr log(raw);
    check(wdeos_run_log_final_params(log.get(), params.data()), "params");
    write_probes(out, "steps", log.get(), common.format);
    summary["trained"] = true;
    summary["training"] = summary_of(log.get());
  }
  wdeos_ntk_report rep;
  check(wdeos_weyl_check(m.sizes.data(), m.sizes.size(), m.act, params.data(), data.first.get(), &rep), "weyl check");
  summary["weyl"] = {{"n_samples", rep.n_samples},
                     {"lambda_max_ntk", num(rep.lambda_max_ntk)},
                     {"lambda_max_hessian", num(rep.lambda_max_hessian)},
                     {"residual_norm", num(rep.residual_norm)},
                     {"weyl_satisfied", rep.weyl_satisfied != 0}};
  const wdeos_dataset* on = c.at("on") == "heldout" ? data.second.get() : data.first.get();
  const int per_sample = c.at("mode") == "per_sample_sum";
  double lam = 0;
  check(wdeos_ntk_lambda_max(m.sizes.data(), m.sizes.size(), m.act, params.data(), on, per_sample, &lam), "ntk");
  summary["ntk"] = {{"mode", c.at("mode")}, {"on", c.at("on")}, {"lambda_max", num(lam)}};
  out.write("ntk_report.json", summary.dump(2));

  const auto grid = c.at("n_grid").get<std::vector<size_t>>();
  if (!grid.empty()) {
    std::vector<double> lams(grid.size());
    check(wdeos_ntk_convergence(m.sizes.data(), m.sizes.size(), m.act, params.data(), on, grid.data(), grid.size(),
                                per_sample, lams.data()),
          "ntk convergence");
    auto f = out.open("ntk_convergence.csv");
    f << "n,lambda_max,lambda_max_unnormalized\n";
    for (std::size_t i = 0; i < grid.size(); ++i)
      f << grid[i] << ',' << fmt(lams[i]) << ',' << fmt(lams[i] * static_cast<double>(grid[i])) << '\n';
  }
}

json validate_align(const json& c) {
  if (!c.at("spectrum").is_null()) {
    if (!c.at("spectrum").is_array() || c.at("spectrum").empty()) throw ConfigError("spectrum must be a non-empty list");
  } else {
    const json& g = c.at("generator");
    count(g, "n", 1);
    count(g, "leading", 1);
    if (g.at("leading").get<size_t>() > g.at("n").get<size_t>()) throw ConfigError("generator.leading exceeds n");
  }
  if (c.at("alphas").is_null()) {
    const json& g = c.at("alpha_grid");
    positive(g, "min");
    positive(g, "max");
    count(g, "count", 1);
  } else {
    const auto a = c.at("alphas").get<std::vector<double>>();
    if (!std::is_sorted(a.begin(), a.end())) throw ConfigError("alphas must be ascending");
  }
  return c;
}

void cmd_align(const json& c, Output& out, const Common&) {
  std::vector<double> lam;
  const bool generated = c.at("spectrum").is_null();
  std::size_t leading = 0;
  if (generated) {
    const json& g = c.at("generator");
    lam.resize(g.at("n").get<size_t>());
    leading = g.at("leading").get<size_t>();
    check(wdeos_separated_spectrum(lam.size(), leading, g.at("ratio").get<double>(), g.at("floor").get<double>(),
                                   g.at("bulk_scale").get<double>(), g.at("seed").get<uint64_t>(), lam.data()),
          "spectrum");
  } else {
    lam = c.at("spectrum").get<std::vector<double>>();
  }
  const std::size_t n = lam.size();
  std::vector<double> b = c.at("b").is_null() ? std::vector<double>(n, 1.0 / std::sqrt(static_cast<double>(n)))
                                              : c.at("b").get<std::vector<double>>();
  if (b.size() != n) throw ConfigError("b must have the same length as the spectrum");
  std::vector<double> alphas;
  if (c.at("alphas").is_null()) {
    const json& g = c.at("alpha_grid");
    const double lo = g.at("min").get<double>(), hi = g.at("max").get<double>();
    const std::size_t k = g.at("count").get<size_t>();
    for (std::size_t i = 0; i < k; ++i)
      alphas.push_back(k == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(k - 1)));
  } else {
    alphas = c.at("alphas").get<std::vector<double>>();
  }
  std::vector<size_t> idx(alphas.size());
  std::vector<double> al(alphas.size());
  check(wdeos_alignment_sweep(lam.data(), b.data(), n, alphas.data(), alphas.size(), idx.data(), al.data()),
        "alignment sweep");
  out.create();
  auto f = out.open("align.csv");
  f << "alpha,index,alignment\n";
  for (std::size_t i = 0; i < alphas.size(); ++i) f << fmt(alphas[i]) << ',' << idx[i] << ',' << fmt(al[i]) << '\n';

  bool mono = true;
  for (std::size_t i = 1; i < idx.size(); ++i) mono = mono && idx[i] <= idx[i - 1];
  json summary = {{"n", n},
                  {"non_increasing", mono},
                  {"first_index", idx.empty() ? json(nullptr) : json(idx.front())},
                  {"last_index", idx.empty() ? json(nullptr) : json(idx.back())}};
  if (generated && leading >= 3) {
    json bands = json::array();
    for (std::size_t j = 2; j < leading; ++j) {
      const double lo = lam[j - 1] - lam[leading - 1], hi = lam[j - 2] - lam[leading - 1];
      const double mid = std::sqrt(lo * hi);
      size_t at = 0;
      check(wdeos_alignment_sweep(lam.data(), b.data(), n, &mid, 1, &at, nullptr), "band");
      bands.push_back({{"j", j}, {"lo", lo}, {"hi", hi}, {"alpha_mid", mid}, {"index_at_mid", at}});
    }
    summary["bands"] = bands;
  }
  out.write("summary.json", summary.dump(2));
}

struct Command {
  const char* name;
  const char* help;
  Schema (*schema)();
  json (*validate)(const json&);
  void (*run)(const json&, Output&, const Common&);
};

const Command kCommands[] = {
    {"simulate", "Iterate the two-variable oscillator map and compare with closed forms", simulate_schema,
     validate_simulate, cmd_simulate},
    {"toy", "Train the three-variable toy loss for a list of weight decays", toy_schema, validate_toy, cmd_toy},
    {"train", "Full-batch GD with weight decay on an MLP, with curvature probes", train_schema, validate_train,
     cmd_train},
    {"sweep", "Train one run per (gamma, seed) and tabulate onset and stabilization", sweep_schema, validate_sweep,
     cmd_sweep},
    {"ntk", "NTK spectrum, Hessian-NTK Weyl check and N-convergence table", ntk_schema, validate_ntk, cmd_ntk},
    {"align", "Alignment index of a diagonal-plus-rank-one spectrum over an alpha grid", align_schema,
     validate_align, cmd_align},
};

int execute(const Command& cmd, const Common& common, const std::vector<std::string>& argv) {
  json effective;
  try {
    json user = common.config_path.empty() ? json::object() : wdeos_cli::load_json_file(common.config_path);
    for (const auto& s : common.sets) wdeos_cli::apply_override(user, s);
    if (common.seed >= 0) user["seed"] = common.seed;
    effective = cmd.validate(wdeos_cli::resolve(user, cmd.schema()));
    if (common.format != "csv" && common.format != "jsonl") throw ConfigError("--format must be csv or jsonl");
    if (common.out_dir.empty()) throw ConfigError("--out is required");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  Output out(common.out_dir);
  const std::string started = iso_now();
  try {
    cmd.run(effective, out, common);
    out.write("config.json", effective.dump(2));
    out.write("meta.json", json{{"command", cmd.name},
                                {"version", wdeos_version()},
                                {"argv", argv},
                                {"started_at", started},
                                {"finished_at", iso_now()}}
                               .dump(2));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight decay at the edge of stability: simulations and measurements"};
  app.require_subcommand(1);
  Common common;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : kCommands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--out", common.out_dir, "Output directory");
    sub->add_option("--seed", common.seed, "Override the config seed");
    sub->add_option("--jobs", common.jobs, "Parallel runs (sweep)")->check(CLI::PositiveNumber);
    sub->add_option("--format", common.format, "Series format: csv or jsonl");
    sub->add_option("--set", common.sets, "Override a config key, key=value (repeatable)");
    subs.emplace_back(sub, &cmd);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  const std::vector<std::string> args(argv, argv + argc);
  for (const auto& [sub, cmd] : subs)
    if (sub->parsed()) return execute(*cmd, common, args);
  return 2;
}
