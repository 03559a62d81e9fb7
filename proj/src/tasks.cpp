#include "atpo/tasks.hpp"

#include <algorithm>

#include "atpo/rng.hpp"

namespace atpo {

namespace {
constexpr std::uint64_t kTaskStream = 0x7A5C;
constexpr int kDigits = 6;  // prompt digits for copy/sort

std::vector<Token> pad_to(std::vector<Token> content, int L, const Vocab& vocab) {
  require(static_cast<int>(content.size()) <= L, Err::LTooSmall,
          "completion length " + std::to_string(L) + " cannot hold the gold answer");
  content.resize(static_cast<std::size_t>(L), vocab.pad());
  return content;
}
}  // namespace

TaskId parse_task(const std::string& name) {
  if (name == "copy") return TaskId::Copy;
  if (name == "sort") return TaskId::Sort;
  if (name == "sum") return TaskId::Sum;
  fail(Err::BadConfig, "unknown task '" + name + "'");
}

const char* task_name(TaskId task) {
  switch (task) {
    case TaskId::Copy: return "copy";
    case TaskId::Sort: return "sort";
    case TaskId::Sum: return "sum";
  }
  return "unknown";
}

int task_prompt_len(TaskId task) {
  switch (task) {
    case TaskId::Copy:
    case TaskId::Sort: return kDigits;
    case TaskId::Sum: return 5;  // "aa+bb"
  }
  return 0;
}

std::vector<TaskInstance> generate_instances(TaskId task, std::int64_t start_index, int count,
                                             int L, std::uint64_t seed, const Vocab& vocab) {
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::int64_t id = start_index + i;
    Rng rng(seed, static_cast<std::uint64_t>(id), kTaskStream);
    TaskInstance inst;
    inst.task = task;
    inst.id = id;
    switch (task) {
      case TaskId::Copy: {
        std::string digits;
        for (int k = 0; k < kDigits; ++k) digits += static_cast<char>('0' + rng.next_below(10));
        inst.prompt = vocab.encode_string(digits);
        inst.gold = pad_to(vocab.encode_string(digits), L, vocab);
        break;
      }
      case TaskId::Sort: {
        std::string digits;
        for (int k = 0; k < kDigits; ++k) digits += static_cast<char>('0' + rng.next_below(10));
        inst.prompt = vocab.encode_string(digits);
        std::string sorted = digits;
        std::sort(sorted.begin(), sorted.end());
        inst.gold = pad_to(vocab.encode_string(sorted), L, vocab);
        break;
      }
      case TaskId::Sum: {
        const int a = 10 + static_cast<int>(rng.next_below(90));
        const int b = 10 + static_cast<int>(rng.next_below(90));
        inst.prompt = vocab.encode_string(std::to_string(a) + "+" + std::to_string(b));
        const int s = a + b;
        std::string answer = {static_cast<char>('0' + s / 100), static_cast<char>('0' + (s / 10) % 10),
                              static_cast<char>('0' + s % 10)};
        inst.gold = pad_to(vocab.encode_string(answer), L, vocab);
        break;
      }
    }
    out.push_back(std::move(inst));
  }
  return out;
}

double reward(const TaskInstance& instance, std::span<const Token> completion) {
  require(completion.size() == instance.gold.size(), Err::ShapeMismatch,
          "completion length differs from gold length");
  int scored = 0, matched = 0;
  for (std::size_t i = 0; i < instance.gold.size(); ++i) {
    if (instance.gold[i] == Vocab::kPad) continue;
    ++scored;
    if (completion[i] == instance.gold[i]) ++matched;
  }
  if (scored == 0) return 1.0;
  const double fraction = static_cast<double>(matched) / static_cast<double>(scored);
  return 0.5 * fraction + (matched == scored ? 0.5 : 0.0);
}

bool is_correct(const TaskInstance& instance, std::span<const Token> completion) {
  return reward(instance, completion) == 1.0;
}

}  // namespace atpo
