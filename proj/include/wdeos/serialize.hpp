#ifndef WDEOS_SERIALIZE_HPP
#define WDEOS_SERIALIZE_HPP

#include <ostream>
#include <string>
#include <vector>

#include "wdeos/curvature.hpp"
#include "wdeos/dataset.hpp"
#include "wdeos/ntk.hpp"
#include "wdeos/oscillator.hpp"
#include "wdeos/toyloss.hpp"
#include "wdeos/trainer.hpp"

namespace wdeos {

// Non-finite numbers (the γ = 0 critical value, an absent amplitude) are
// written as JSON null. Doubles in CSV use %.17g so files round-trip.

/// {step, loss, delta_loss, lambda: [..], alpha, beta, c_x, c_y, c_y_crit}
std::string probe_json(const CurvatureProbe& p);

/// One probe_json line per logged step.
void write_run_jsonl(const RunLog& log, std::ostream& out);

/// step, loss, delta_loss, lambda_1..k, alpha, beta, c_x, c_y, c_y_crit
void write_run_csv(const RunLog& log, std::ostream& out);

std::string run_summary_json(const RunLog& log, const RunConfig& cfg);
std::string sweep_row_json(const SweepRow& row);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

std::string ntk_report_json(const NtkReport& r);
std::string prediction_json(const OscillatorPrediction& p);
std::string dataset_metadata_json(const ImageDataset& ds);

void write_trajectory_csv(const Trajectory& tr, std::ostream& out);
void write_toy_csv(const ToyRun& run, std::ostream& out);

std::string format_double(double v);

}  // namespace wdeos

#endif  // WDEOS_SERIALIZE_HPP
