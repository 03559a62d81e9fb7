#include "atpo/trace_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace atpo {

namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
  fail(Err::ParseError, path + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  require(in.good(), Err::IoError, "cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  require(out.good(), Err::IoError, "cannot open '" + path + "' for writing");
  return out;
}

json parse_line(const std::string& path, int line_no, const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    parse_fail(path, line_no, e.what());
  }
}

void check_keys(const json& obj, const std::string& path, int line_no,
                std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional = {}) {
  if (!obj.is_object()) parse_fail(path, line_no, "expected a JSON object");
  for (const char* key : required) {
    if (!obj.contains(key)) parse_fail(path, line_no, std::string("missing field '") + key + "'");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string& key = it.key();
    auto in = [&](std::initializer_list<const char*> set) {
      for (const char* k : set) {
        if (key == k) return true;
      }
      return false;
    };
    if (!in(required) && !in(optional)) {
      parse_fail(path, line_no, "unknown field '" + key + "'");
    }
  }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& path, int line_no) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    parse_fail(path, line_no, std::string("field '") + key + "': " + e.what());
  }
}

void append_ints(std::string& out, std::span<const int> values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  out += ']';
}

}  // namespace

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_line(std::ostream& out, const std::string& line) { out << line << '\n'; }

// --- traces --------------------------------------------------------------------

std::string trace_to_line(const RolloutTrace& trace) {
  std::string s = "{\"prompt_id\":" + std::to_string(trace.prompt_id) +
                  ",\"rollout_id\":" + std::to_string(trace.rollout_id) +
                  ",\"T\":" + std::to_string(trace.T) + ",\"L\":" + std::to_string(trace.L) +
                  ",\"reward\":" + fmt_double(trace.reward) +
                  ",\"correct\":" + (trace.correct ? "true" : "false") + ",\"steps\":[";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const StepTrace& st = trace.steps[i];
    if (i) s += ',';
    s += "{\"t\":" + std::to_string(st.t) +
         ",\"masked_count\":" + std::to_string(trace.entering_masked(st.t).size()) +
         ",\"transfer\":";
    append_ints(s, st.transfer);
    s += ",\"mean_entropy\":" + fmt_double(st.mean_entropy) +
         ",\"mean_inv_margin\":" + fmt_double(st.mean_inv_margin) + "}";
  }
  s += "],\"final_tokens\":";
  append_ints(s, trace.final_tokens);
  s += "}";
  return s;
}

void write_traces(const std::string& path, std::span<const RolloutTrace> traces) {
  std::ofstream out = open_out(path);
  for (const RolloutTrace& tr : traces) append_line(out, trace_to_line(tr));
  require(out.good(), Err::IoError, "write failed for '" + path + "'");
}

std::vector<RolloutTrace> read_traces(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<RolloutTrace> traces;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = parse_line(path, line_no, line);
    check_keys(j, path, line_no,
               {"prompt_id", "rollout_id", "T", "L", "reward", "correct", "steps", "final_tokens"});
    RolloutTrace tr;
    tr.prompt_id = field<std::int64_t>(j, "prompt_id", path, line_no);
    tr.rollout_id = field<std::int64_t>(j, "rollout_id", path, line_no);
    tr.T = field<int>(j, "T", path, line_no);
    tr.L = field<int>(j, "L", path, line_no);
    tr.reward = field<double>(j, "reward", path, line_no);
    tr.correct = field<bool>(j, "correct", path, line_no);
    tr.final_tokens = field<std::vector<Token>>(j, "final_tokens", path, line_no);
    const json& steps = j.at("steps");
    if (!steps.is_array()) parse_fail(path, line_no, "'steps' must be an array");
    std::vector<int> masked_counts;
    for (const json& sj : steps) {
      check_keys(sj, path, line_no, {"t", "masked_count", "transfer", "mean_entropy", "mean_inv_margin"});
      StepTrace st;
      st.t = field<int>(sj, "t", path, line_no);
      st.transfer = field<std::vector<int>>(sj, "transfer", path, line_no);
      st.mean_entropy = field<double>(sj, "mean_entropy", path, line_no);
      st.mean_inv_margin = field<double>(sj, "mean_inv_margin", path, line_no);
      masked_counts.push_back(field<int>(sj, "masked_count", path, line_no));
      tr.steps.push_back(std::move(st));
    }
    try {
      tr.validate();
    } catch (const Error& e) {
      parse_fail(path, line_no, e.what());
    }
    for (std::size_t i = 0; i < tr.steps.size(); ++i) {
      if (static_cast<int>(tr.entering_masked(tr.steps[i].t).size()) != masked_counts[i]) {
        parse_fail(path, line_no, "masked_count disagrees with the transfer masks");
      }
    }
    traces.push_back(std::move(tr));
  }
  return traces;
}

// --- curves ---------------------------------------------------------------------

namespace {
constexpr const char* kCurvesHeader = "step,mean_entropy,mean_inv_margin,roec";
}

void write_curves(const std::string& path, const DifficultyCurves& curves) {
  std::ofstream out = open_out(path);
  append_line(out, kCurvesHeader);
  for (int t = 1; t <= curves.T(); ++t) {
    append_line(out, std::to_string(t) + "," + fmt_double(curves.entropy[t - 1]) + "," +
                         fmt_double(curves.inv_margin[t - 1]) + "," + fmt_double(curves.roec[t - 1]));
  }
  require(out.good(), Err::IoError, "write failed for '" + path + "'");
}

DifficultyCurves read_curves(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Err::ParseError, path + ":1: empty file");
  if (line != kCurvesHeader) parse_fail(path, 1, "bad header, expected '" + std::string(kCurvesHeader) + "'");

  std::vector<double> entropy, inv_margin, roec;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) parse_fail(path, line_no, "expected 4 columns");
    try {
      const int step = std::stoi(cells[0]);
      if (step != static_cast<int>(entropy.size()) + 1) {
        parse_fail(path, line_no, "step column must run 1..T");
      }
      entropy.push_back(std::stod(cells[1]));
      inv_margin.push_back(std::stod(cells[2]));
      roec.push_back(std::stod(cells[3]));
    } catch (const std::exception&) {
      parse_fail(path, line_no, "malformed number");
    }
  }
  if (entropy.empty()) parse_fail(path, 1, "no data rows");

  for (std::size_t t = 0; t < entropy.size(); ++t) {
    const double expected = t == 0 ? 0.0 : std::abs(entropy[t] - entropy[t - 1]);
    require(std::abs(roec[t] - expected) <= 1e-9, Err::RoecInconsistent,
            path + ": row " + std::to_string(t + 1) + " violates the RoEC recurrence");
  }
  return DifficultyCurves::from_means(std::move(entropy), std::move(inv_margin));
}

// --- run logs -------------------------------------------------------------------

std::string run_record_to_line(const RunRecord& r) {
  std::string s = "{\"iter\":" + std::to_string(r.iteration) +
                  ",\"mean_reward\":" + fmt_double(r.mean_reward) + ",\"loss\":" + fmt_double(r.loss) +
                  ",\"mean_kl\":" + fmt_double(r.mean_kl) + ",\"boundaries\":";
  append_ints(s, r.boundaries);
  s += ",\"entropy_mean\":" + fmt_double(r.entropy_mean) +
       ",\"entropy_max\":" + fmt_double(r.entropy_max) +
       ",\"roec_mean\":" + fmt_double(r.roec_mean) + ",\"roec_max\":" + fmt_double(r.roec_max);
  if (r.eval_reward) s += ",\"eval_reward\":" + fmt_double(*r.eval_reward);
  if (r.eval_exact) s += ",\"eval_exact\":" + fmt_double(*r.eval_exact);
  s += "}";
  return s;
}

std::vector<RunRecord> read_run_log(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::pair<int, std::string>> lines;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty()) lines.emplace_back(line_no, line);
  }
  std::vector<RunRecord> records;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json j;
    try {
      j = json::parse(lines[i].second);
    } catch (const json::exception& e) {
      if (i + 1 == lines.size()) break;  // torn final line from a crashed writer
      parse_fail(path, lines[i].first, e.what());
    }
    check_keys(j, path, lines[i].first,
               {"iter", "mean_reward", "loss", "mean_kl", "boundaries", "entropy_mean",
                "entropy_max", "roec_mean", "roec_max"},
               {"eval_reward", "eval_exact"});
    RunRecord r;
    r.iteration = field<int>(j, "iter", path, lines[i].first);
    r.mean_reward = field<double>(j, "mean_reward", path, lines[i].first);
    r.loss = field<double>(j, "loss", path, lines[i].first);
    r.mean_kl = field<double>(j, "mean_kl", path, lines[i].first);
    r.boundaries = field<std::vector<int>>(j, "boundaries", path, lines[i].first);
    r.entropy_mean = field<double>(j, "entropy_mean", path, lines[i].first);
    r.entropy_max = field<double>(j, "entropy_max", path, lines[i].first);
    r.roec_mean = field<double>(j, "roec_mean", path, lines[i].first);
    r.roec_max = field<double>(j, "roec_max", path, lines[i].first);
    if (j.contains("eval_reward")) r.eval_reward = field<double>(j, "eval_reward", path, lines[i].first);
    if (j.contains("eval_exact")) r.eval_exact = field<double>(j, "eval_exact", path, lines[i].first);
    records.push_back(std::move(r));
  }
  return records;
}

// --- timings --------------------------------------------------------------------

std::string timing_to_line(const PhaseTimings& t) {
  return "{\"iter\":" + std::to_string(t.iteration) + ",\"rollout_s\":" + fmt_double(t.rollout_s) +
         ",\"metrics_s\":" + fmt_double(t.metrics_s) + ",\"selection_s\":" + fmt_double(t.selection_s) +
         ",\"scoring_s\":" + fmt_double(t.scoring_s) + ",\"update_s\":" + fmt_double(t.update_s) +
         ",\"total_s\":" + fmt_double(t.total_s) + "}";
}

std::vector<PhaseTimings> read_timings(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::pair<int, std::string>> lines;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty()) lines.emplace_back(line_no, line);
  }
  std::vector<PhaseTimings> records;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json j;
    try {
      j = json::parse(lines[i].second);
    } catch (const json::exception& e) {
      if (i + 1 == lines.size()) break;
      parse_fail(path, lines[i].first, e.what());
    }
    for (const char* key :
         {"iter", "rollout_s", "metrics_s", "selection_s", "scoring_s", "update_s", "total_s"}) {
      require(j.contains(key), Err::MissingTimings,
              path + ": record lacks timing field '" + key + "'");
    }
    PhaseTimings t;
    t.iteration = field<int>(j, "iter", path, lines[i].first);
    t.rollout_s = field<double>(j, "rollout_s", path, lines[i].first);
    t.metrics_s = field<double>(j, "metrics_s", path, lines[i].first);
    t.selection_s = field<double>(j, "selection_s", path, lines[i].first);
    t.scoring_s = field<double>(j, "scoring_s", path, lines[i].first);
    t.update_s = field<double>(j, "update_s", path, lines[i].first);
    t.total_s = field<double>(j, "total_s", path, lines[i].first);
    records.push_back(t);
  }
  require(!records.empty(), Err::MissingTimings, path + ": no timing records");
  return records;
}

// --- checkpoints ----------------------------------------------------------------

namespace {
static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");
constexpr char kCheckpointMagic[8] = {'A', 'T', 'P', 'O', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(in.good(), Err::ParseError, path + ": truncated checkpoint");
  return value;
}
}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t seed) {
  std::ofstream out = open_out(path, std::ios::binary);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::uint32_t>(out, 1);  // version
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.dims().vocab));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.dims().prompt_len));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.dims().completion_len));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.dims().embed));
  write_pod<std::uint64_t>(out, seed);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(params.size()));
  for (double v : params.flat()) write_pod<float>(out, static_cast<float>(v));
  require(out.good(), Err::IoError, "write failed for '" + path + "'");
}

std::pair<ModelParams, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0, Err::ParseError,
          path + ": not a checkpoint file");
  CheckpointMeta meta;
  meta.version = read_pod<std::uint32_t>(in, path);
  require(meta.version == 1, Err::ParseError, path + ": unsupported checkpoint version");
  meta.dims.vocab = static_cast<int>(read_pod<std::uint32_t>(in, path));
  meta.dims.prompt_len = static_cast<int>(read_pod<std::uint32_t>(in, path));
  meta.dims.completion_len = static_cast<int>(read_pod<std::uint32_t>(in, path));
  meta.dims.embed = static_cast<int>(read_pod<std::uint32_t>(in, path));
  meta.seed = read_pod<std::uint64_t>(in, path);
  const std::uint64_t count = read_pod<std::uint64_t>(in, path);
  require(count == ModelParams::param_count(meta.dims), Err::ParseError,
          path + ": parameter count disagrees with the header dims");
  ModelParams params(meta.dims);
  std::span<double> flat = params.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    flat[i] = static_cast<double>(read_pod<float>(in, path));
  }
  return {std::move(params), meta};
}

// --- datasets -------------------------------------------------------------------

void write_dataset(const std::string& path, std::span<const TaskInstance> instances,
                   const Vocab& vocab, int L, std::uint64_t seed) {
  std::ofstream out = open_out(path);
  append_line(out, "# atpo-dataset v1 L=" + std::to_string(L) + " seed=" + std::to_string(seed));
  for (const TaskInstance& inst : instances) {
    std::string prompt, gold;
    for (Token t : inst.prompt) prompt += vocab.decode(t);
    bool in_pad = false;
    for (Token t : inst.gold) {
      if (t == Vocab::kPad) {
        in_pad = true;
        continue;
      }
      require(!in_pad, Err::BadShape, "gold completion has tokens after PAD");
      gold += vocab.decode(t);
    }
    append_line(out, std::string(task_name(inst.task)) + "\t" + prompt + "\t" + gold);
  }
  require(out.good(), Err::IoError, "write failed for '" + path + "'");
}

std::vector<TaskInstance> read_dataset(const std::string& path, const Vocab& vocab) {
  std::ifstream in = open_in(path);
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), Err::ParseError, path + ":1: empty file");
  int L = -1;
  {
    std::istringstream hs(header);
    std::string word;
    hs >> word;
    require(word == "#", Err::ParseError, path + ":1: bad header");
    hs >> word;
    require(word == "atpo-dataset", Err::ParseError, path + ":1: bad header");
    hs >> word;
    require(word == "v1", Err::ParseError, path + ":1: unsupported dataset version");
    while (hs >> word) {
      if (word.rfind("L=", 0) == 0) L = std::stoi(word.substr(2));
    }
    require(L >= 1, Err::ParseError, path + ":1: header lacks L=");
  }
  std::vector<TaskInstance> out;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string task, prompt, gold;
    if (!std::getline(ls, task, '\t') || !std::getline(ls, prompt, '\t')) {
      parse_fail(path, line_no, "expected task<TAB>prompt<TAB>gold");
    }
    std::getline(ls, gold, '\t');  // gold may legitimately be empty
    TaskInstance inst;
    inst.id = static_cast<std::int64_t>(out.size());
    try {
      inst.task = parse_task(task);
      inst.prompt = vocab.encode_string(prompt);
      inst.gold = vocab.encode_string(gold);
    } catch (const Error& e) {
      parse_fail(path, line_no, e.what());
    }
    require(static_cast<int>(inst.gold.size()) <= L, Err::ParseError,
            path + ":" + std::to_string(line_no) + ": gold longer than L");
    inst.gold.resize(static_cast<std::size_t>(L), Vocab::kPad);
    out.push_back(std::move(inst));
  }
  return out;
}

// --- config ---------------------------------------------------------------------

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Err::BadConfig, std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), Err::BadConfig, "config must be a JSON object");

  TrainConfig cfg;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const json& v = it.value();
      if (key == "task") cfg.task = v.get<std::string>();
      else if (key == "vocab") cfg.vocab = v.get<std::string>();
      else if (key == "T") cfg.T = v.get<int>();
      else if (key == "N") cfg.N = v.get<int>();
      else if (key == "L") cfg.L = v.get<int>();
      else if (key == "P") cfg.P = v.get<int>();
      else if (key == "dim") cfg.dim = v.get<int>();
      else if (key == "group_size") cfg.group_size = v.get<int>();
      else if (key == "batch_prompts") cfg.batch_prompts = v.get<int>();
      else if (key == "iterations") cfg.iterations = v.get<int>();
      else if (key == "learning_rate") cfg.learning_rate = v.get<double>();
      else if (key == "clip_eps") cfg.clip_eps = v.get<double>();
      else if (key == "clip_norm") cfg.clip_norm = v.get<double>();
      else if (key == "kl_beta") cfg.kl_beta = v.get<double>();
      else if (key == "adv_eps") cfg.adv_eps = v.get<double>();
      else if (key == "margin_eps") cfg.margin_eps = v.get<double>();
      else if (key == "roec_sigma_mult") cfg.roec_sigma_mult = v.get<double>();
      else if (key == "policy") cfg.policy = parse_policy(v.get<std::string>());
      else if (key == "temperature") cfg.temperature = v.get<double>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "adam_beta1") cfg.adam_beta1 = v.get<double>();
      else if (key == "adam_beta2") cfg.adam_beta2 = v.get<double>();
      else if (key == "adam_eps") cfg.adam_eps = v.get<double>();
      else if (key == "eval_every") cfg.eval_every = v.get<int>();
      else if (key == "eval_count") cfg.eval_count = v.get<int>();
      else if (key == "checkpoint_every") cfg.checkpoint_every = v.get<int>();
      else if (key == "train_pool") cfg.train_pool = v.get<int>();
      else fail(Err::BadConfig, "unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(Err::BadConfig, std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in = open_in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str());
}

std::string config_to_json(const TrainConfig& cfg) {
  std::string s = "{";
  s += "\"task\":\"" + cfg.task + "\"";
  s += ",\"vocab\":\"" + cfg.vocab + "\"";
  s += ",\"T\":" + std::to_string(cfg.T);
  s += ",\"N\":" + std::to_string(cfg.N);
  s += ",\"L\":" + std::to_string(cfg.L);
  s += ",\"P\":" + std::to_string(cfg.P);
  s += ",\"dim\":" + std::to_string(cfg.dim);
  s += ",\"group_size\":" + std::to_string(cfg.group_size);
  s += ",\"batch_prompts\":" + std::to_string(cfg.batch_prompts);
  s += ",\"iterations\":" + std::to_string(cfg.iterations);
  s += ",\"learning_rate\":" + fmt_double(cfg.learning_rate);
  s += ",\"clip_eps\":" + fmt_double(cfg.clip_eps);
  s += ",\"clip_norm\":" + fmt_double(cfg.clip_norm);
  s += ",\"kl_beta\":" + fmt_double(cfg.kl_beta);
  s += ",\"adv_eps\":" + fmt_double(cfg.adv_eps);
  s += ",\"margin_eps\":" + fmt_double(cfg.margin_eps);
  s += ",\"roec_sigma_mult\":" + fmt_double(cfg.roec_sigma_mult);
  s += ",\"policy\":\"" + std::string(policy_name(cfg.policy)) + "\"";
  s += ",\"temperature\":" + fmt_double(cfg.temperature);
  s += ",\"seed\":" + std::to_string(cfg.seed);
  s += ",\"adam_beta1\":" + fmt_double(cfg.adam_beta1);
  s += ",\"adam_beta2\":" + fmt_double(cfg.adam_beta2);
  s += ",\"adam_eps\":" + fmt_double(cfg.adam_eps);
  s += ",\"eval_every\":" + std::to_string(cfg.eval_every);
  s += ",\"eval_count\":" + std::to_string(cfg.eval_count);
  s += ",\"checkpoint_every\":" + std::to_string(cfg.checkpoint_every);
  s += ",\"train_pool\":" + std::to_string(cfg.train_pool);
  s += "}";
  return s;
}

}  // namespace atpo
