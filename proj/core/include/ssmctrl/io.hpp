#pragma once

#include <filesystem>
#include <string>

#include "ssmctrl/closedloop.hpp"
#include "ssmctrl/plant.hpp"
#include "ssmctrl/ssm.hpp"
#include "ssmctrl/synthesis.hpp"

namespace ssmctrl::io {

// Round-trip decimal form (17 significant digits).
std::string format_double(double v);
// Time stamps use 9 significant digits.
std::string format_time(double t);

// Writes atomically enough for a batch pipeline: creates parent directories
// and replaces the file.
void write_text(const std::filesystem::path& path, const std::string& text);
// Throws Error if the file cannot be read.
std::string read_text(const std::filesystem::path& path);

// Model document with dimensions, parameterization, raw weights
// (row-major) and the bi-Lipschitz bounds of both scaffoldings.
std::string model_to_json(const ssm::SsmModel& m);
// Throws IntegrityError if the document is malformed, A disagrees with its
// parameterization or stored bounds disagree with the weights.
ssm::SsmModel model_from_json(const std::string& text);

std::string gains_to_json(const synthesis::GainSet& g);
// Throws IntegrityError unless the result passes GainSet::validate().
synthesis::GainSet gains_from_json(const std::string& text);

// Header t,u,y,y_clean.
std::string trajectory_csv(const plant::Trajectory& traj);
plant::Trajectory trajectory_from_csv(const std::string& text,
                                      double dt_sample);

// Header t,u,y,yhat,xnorm,xhatnorm,d; d is empty when not computed.
std::string closedloop_csv(const closedloop::ClosedLoopTrace& trace);

}  // namespace ssmctrl::io
