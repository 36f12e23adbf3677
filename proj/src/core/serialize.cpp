#include "wdeos/serialize.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace wdeos {

using nlohmann::json;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <class T>
json opt(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_floating_point_v<T>)
    return num(*v);
  else
    return *v;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string probe_json(const CurvatureProbe& p) {
  json j;
  j["step"] = p.step;
  j["loss"] = num(p.loss);
  j["delta_loss"] = num(p.delta_loss);
  json lam = json::array();
  for (double l : p.lambda_topk) lam.push_back(num(l));
  j["lambda"] = lam;
  j["alpha"] = num(p.alpha);
  j["beta"] = num(p.beta);
  j["c_x"] = num(p.c_x);
  j["c_y"] = num(p.c_y);
  j["c_y_crit"] = num(p.c_y_crit);
  return j.dump();
}

void write_run_jsonl(const RunLog& log, std::ostream& out) {
  for (const auto& p : log.probes) out << probe_json(p) << '\n';
}

void write_run_csv(const RunLog& log, std::ostream& out) {
  const std::size_t k = log.probes.empty() ? 1 : log.probes.front().lambda_topk.size();
  out << "step,loss,delta_loss";
  for (std::size_t i = 1; i <= k; ++i) out << ",lambda_" << i;
  out << ",alpha,beta,c_x,c_y,c_y_crit\n";
  for (const auto& p : log.probes) {
    out << p.step << ',' << format_double(p.loss) << ',' << format_double(p.delta_loss);
    for (double l : p.lambda_topk) out << ',' << format_double(l);
    out << ',' << format_double(p.alpha) << ',' << format_double(p.beta) << ',' << format_double(p.c_x) << ','
        << format_double(p.c_y) << ',' << format_double(p.c_y_crit) << '\n';
  }
}

std::string run_summary_json(const RunLog& log, const RunConfig& cfg) {
  json j;
  j["eta"] = cfg.eta;
  j["gamma"] = cfg.gamma;
  j["seed"] = cfg.seed;
  j["threshold"] = 2.0 / cfg.eta - cfg.gamma;
  j["steps_executed"] = log.losses.size();
  j["final_loss"] = log.losses.empty() ? json(nullptr) : num(log.losses.back());
  j["onset"] = log.losses.empty() ? json(nullptr) : opt(detect_onset(log.losses, cfg.warmup_ignore));
  const auto s = log.sharpness_series();
  j["stabilization"] = s.size() >= 10 ? num(stabilization_level(s)) : json(nullptr);
  j["crossed"] = crossed_before_reaching(log, cfg);
  j["diverged"] = log.diverged;
  j["diverged_at"] = opt(log.diverged_at);
  j["probes"] = log.probes.size();
  j["digest"] = log.digest;
  return j.dump(2);
}

std::string sweep_row_json(const SweepRow& r) {
  json j;
  j["gamma"] = r.gamma;
  j["seed"] = r.seed;
  j["onset"] = opt(r.onset);
  j["stabilization"] = opt(r.stabilization);
  j["max_sharpness"] = opt(r.max_sharpness);
  j["crossed"] = r.crossed;
  j["diverged"] = r.diverged;
  j["ntk_lambda_max"] = opt(r.ntk_lambda_max);
  j["digest"] = r.digest;
  j["error"] = r.error.empty() ? json(nullptr) : json(r.error);
  return j.dump(2);
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "gamma,seed,onset,stabilization,max_sharpness,crossed,diverged,ntk_lambda_max,error\n";
  for (const auto& r : rows) {
    out << format_double(r.gamma) << ',' << r.seed << ',' << (r.onset ? std::to_string(*r.onset) : "") << ','
        << (r.stabilization ? format_double(*r.stabilization) : "") << ','
        << (r.max_sharpness ? format_double(*r.max_sharpness) : "") << ',' << (r.crossed ? 1 : 0) << ','
        << (r.diverged ? 1 : 0) << ',' << (r.ntk_lambda_max ? format_double(*r.ntk_lambda_max) : "") << ','
        << json(r.error).dump() << '\n';
  }
}

std::string ntk_report_json(const NtkReport& r) {
  json j;
  j["n_samples"] = r.n_samples;
  j["lambda_max_ntk"] = num(r.lambda_max_ntk);
  j["lambda_max_hessian"] = num(r.lambda_max_hessian);
  j["residual_norm"] = num(r.residual_norm);
  j["tol"] = r.tol;
  j["weyl_satisfied"] = r.weyl_satisfied;
  return j.dump(2);
}

std::string prediction_json(const OscillatorPrediction& p) {
  json j;
  j["y_star"] = num(p.y_star);
  j["bounce_mean"] = num(p.bounce_mean);
  j["amplitude"] = opt(p.amplitude);
  j["c_y_crit"] = num(p.c_y_crit);
  j["collapsed"] = p.collapsed;
  j["y_star_collapsed"] = num(p.y_star_collapsed);
  j["decay_rate"] = num(p.decay_rate);
  j["omega_d"] = num(p.omega_d);
  return j.dump(2);
}

std::string dataset_metadata_json(const ImageDataset& ds) {
  json j;
  j["source"] = ds.meta.source;
  j["n"] = ds.size();
  j["seed"] = opt(ds.meta.seed);
  j["normalization"] = ds.meta.normalization;
  j["stats_fallback"] = ds.meta.stats_fallback;
  if (ds.meta.stats) {
    j["normalization_stats"] = {{"mean", ds.meta.stats->mean},
                                {"std", ds.meta.stats->stddev},
                                {"samples", ds.meta.stats->samples}};
  } else {
    j["normalization_stats"] = nullptr;
  }
  return j.dump(2);
}

void write_trajectory_csv(const Trajectory& tr, std::ostream& out) {
  out << "t,x,y\n";
  for (std::size_t i = 0; i < tr.size(); ++i)
    out << format_double(tr.times[i]) << ',' << format_double(tr.xs[i]) << ',' << format_double(tr.ys[i]) << '\n';
}

void write_toy_csv(const ToyRun& run, std::ostream& out) {
  out << "step,x,y,z,loss,sharpness\n";
  for (std::size_t i = 0; i < run.size(); ++i) {
    const auto& s = run.states[i];
    out << i << ',' << format_double(s.x) << ',' << format_double(s.y) << ',' << format_double(s.z) << ','
        << format_double(run.losses[i]) << ',' << format_double(run.sharpness[i]) << '\n';
  }
}

}  // namespace wdeos
