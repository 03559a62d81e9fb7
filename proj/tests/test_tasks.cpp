#include "atpo/tasks.hpp"

#include <algorithm>

#include "doctest.h"
#include "oracles.hpp"

using namespace atpo;

namespace {
const Vocab kVocab = Vocab::standard();

std::string decode(const std::vector<Token>& tokens) {
  std::string s;
  for (Token t : tokens) {
    if (t == Vocab::kPad) break;
    s += kVocab.decode(t);
  }
  return s;
}
}  // namespace

TEST_CASE("generated instances satisfy each task's definition") {
  for (TaskId task : {TaskId::Copy, TaskId::Sort, TaskId::Sum}) {
    const auto instances = generate_instances(task, 0, 40, 16, 7, kVocab);
    REQUIRE(instances.size() == 40);
    for (const TaskInstance& inst : instances) {
      CHECK(static_cast<int>(inst.prompt.size()) == task_prompt_len(task));
      CHECK(inst.gold.size() == 16);
      const std::string prompt = decode(inst.prompt);
      const std::string gold = decode(inst.gold);
      switch (task) {
        case TaskId::Copy:
          CHECK(gold == prompt);
          break;
        case TaskId::Sort: {
          std::string sorted = prompt;
          std::sort(sorted.begin(), sorted.end());
          CHECK(gold == sorted);
          break;
        }
        case TaskId::Sum: {
          const auto plus = prompt.find('+');
          REQUIRE(plus == 2);
          const int a = std::stoi(prompt.substr(0, 2));
          const int b = std::stoi(prompt.substr(3));
          CHECK(gold.size() == 3);
          CHECK(std::stoi(gold) == a + b);
          break;
        }
      }
    }
  }
}

TEST_CASE("sum worked example: 12+34 -> 046") {
  // craft the instance directly from the definition
  TaskInstance inst;
  inst.task = TaskId::Sum;
  inst.prompt = kVocab.encode_string("12+34");
  inst.gold = kVocab.encode_string("046");
  inst.gold.resize(16, Vocab::kPad);
  std::vector<Token> completion = kVocab.encode_string("046");
  completion.resize(16, Vocab::kPad);
  CHECK(reward(inst, completion) == 1.0);
}

TEST_CASE("generation is deterministic and ranges are disjoint") {
  const auto a = generate_instances(TaskId::Sort, 0, 20, 16, 9, kVocab);
  const auto b = generate_instances(TaskId::Sort, 0, 20, 16, 9, kVocab);
  CHECK(a == b);

  const auto held_out = generate_instances(TaskId::Sort, 1000, 20, 16, 9, kVocab);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id != held_out[i].id);

  const auto other_seed = generate_instances(TaskId::Sort, 0, 20, 16, 10, kVocab);
  CHECK(a != other_seed);
}

TEST_CASE("L too small is rejected") {
  CHECK_THROWS_AS(generate_instances(TaskId::Copy, 0, 1, 5, 7, kVocab), Error);
  CHECK_THROWS_AS(generate_instances(TaskId::Sum, 0, 1, 2, 7, kVocab), Error);
}

TEST_CASE("reward: fraction plus exact-match bonus") {
  const auto instances = generate_instances(TaskId::Sort, 0, 1, 16, 3, kVocab);
  const TaskInstance& inst = instances[0];

  SUBCASE("gold completion earns full reward and is correct") {
    CHECK(reward(inst, inst.gold) == 1.0);
    CHECK(is_correct(inst, inst.gold));
  }
  SUBCASE("4 of 6 positions") {
    std::vector<Token> completion = inst.gold;
    // corrupt two scored positions with a token different from gold
    for (int pos : {0, 1}) {
      completion[pos] = completion[pos] == 2 ? 3 : 2;
    }
    CHECK(reward(inst, completion) == doctest::Approx(0.5 * (4.0 / 6.0)).epsilon(1e-12));
    CHECK(!is_correct(inst, completion));
  }
  SUBCASE("nothing right") {
    std::vector<Token> completion(16, Vocab::kMask);
    CHECK(reward(inst, completion) == 0.0);
  }
  SUBCASE("PAD-region mismatch is ignored") {
    std::vector<Token> completion = inst.gold;
    for (std::size_t i = 6; i < completion.size(); ++i) completion[i] = 5;
    CHECK(is_correct(inst, completion));
    CHECK(reward(inst, completion) == 1.0);
  }
}

TEST_CASE("reward and correctness partition") {
  Rng rng(17);
  const auto instances = generate_instances(TaskId::Copy, 0, 10, 16, 5, kVocab);
  for (const TaskInstance& inst : instances) {
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<Token> completion(16);
      for (Token& t : completion) t = static_cast<Token>(rng.next_below(14));
      const double r = reward(inst, completion);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
      CHECK((r == 1.0) == is_correct(inst, completion));
      if (!is_correct(inst, completion)) CHECK(r <= 0.5);
    }
  }
}
