#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atpo/core.hpp"

namespace atpo {

enum class TaskId { Copy, Sort, Sum };

TaskId parse_task(const std::string& name);
const char* task_name(TaskId task);

/// Prompt length of the task (copy/sort: 6 digits; sum: "aa+bb").
int task_prompt_len(TaskId task);

/// One verifiable instance: prompt tokens plus the PAD-filled gold completion.
struct TaskInstance {
  TaskId task = TaskId::Copy;
  std::int64_t id = 0;
  std::vector<Token> prompt;
  std::vector<Token> gold;  // length L exactly

  bool operator==(const TaskInstance&) const = default;
};

/// Deterministic instance generation keyed by (seed, index). Instances with
/// disjoint index ranges are independent, which is how train and eval splits
/// stay disjoint. Errors: LTooSmall.
std::vector<TaskInstance> generate_instances(TaskId task, std::int64_t start_index, int count,
                                             int L, std::uint64_t seed, const Vocab& vocab);

/// Half credit for the fraction of non-PAD gold positions matched, half for
/// an exact match of all of them. Always in [0, 1].
double reward(const TaskInstance& instance, std::span<const Token> completion);

/// True iff every non-PAD gold position matches (PAD region ignored).
bool is_correct(const TaskInstance& instance, std::span<const Token> completion);

}  // namespace atpo
