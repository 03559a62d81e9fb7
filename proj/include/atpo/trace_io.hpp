#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "atpo/core.hpp"
#include "atpo/model.hpp"
#include "atpo/rl.hpp"
#include "atpo/tasks.hpp"

namespace atpo {

/// Formats a double with 17 significant digits (lossless round-trip).
std::string fmt_double(double v);

// --- rollout traces: one JSON record per line ---------------------------------

void write_traces(const std::string& path, std::span<const RolloutTrace> traces);
std::string trace_to_line(const RolloutTrace& trace);

/// Strict parse: unknown fields, schema violations, or inconsistent
/// masked counts raise ParseError naming the line.
std::vector<RolloutTrace> read_traces(const std::string& path);

// --- difficulty curves: CSV with header step,mean_entropy,mean_inv_margin,roec -

void write_curves(const std::string& path, const DifficultyCurves& curves);

/// Validates the RoEC recurrence against the entropy column within 1e-9
/// (RoecInconsistent otherwise), then returns curves with RoEC recomputed
/// exactly from the entropy column.
DifficultyCurves read_curves(const std::string& path);

// --- run logs: one JSON record per iteration -----------------------------------

struct RunRecord {
  int iteration = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double mean_kl = 0.0;
  std::vector<int> boundaries;
  double entropy_mean = 0.0, entropy_max = 0.0, roec_mean = 0.0, roec_max = 0.0;
  std::optional<double> eval_reward;
  std::optional<double> eval_exact;
};

std::string run_record_to_line(const RunRecord& record);
void append_line(std::ostream& out, const std::string& line);

/// Reads a run log; a torn final line (from a crashed writer) is dropped,
/// any other malformed line raises ParseError.
std::vector<RunRecord> read_run_log(const std::string& path);

// --- per-iteration phase timings (separate file: wall times are not
// deterministic, run logs must be) -----------------------------------------------

std::string timing_to_line(const PhaseTimings& timing);

/// Errors: MissingTimings when a record lacks a timing field or the file
/// holds no records.
std::vector<PhaseTimings> read_timings(const std::string& path);

// --- checkpoints: binary header + float32 little-endian parameters -------------

struct CheckpointMeta {
  std::uint32_t version = 1;
  ModelDims dims;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t seed);
std::pair<ModelParams, CheckpointMeta> load_checkpoint(const std::string& path);

// --- dataset files: header line + one instance per line ------------------------

void write_dataset(const std::string& path, std::span<const TaskInstance> instances,
                   const Vocab& vocab, int L, std::uint64_t seed);
std::vector<TaskInstance> read_dataset(const std::string& path, const Vocab& vocab);

// --- training config (JSON object, unknown keys rejected) ----------------------

TrainConfig load_config(const std::string& path);
TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& cfg);

}  // namespace atpo
