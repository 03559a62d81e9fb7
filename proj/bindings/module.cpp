#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "atpo/analysis.hpp"
#include "atpo/metrics.hpp"
#include "atpo/rl.hpp"
#include "atpo/sampler.hpp"
#include "atpo/selection.hpp"
#include "atpo/stepmerge.hpp"
#include "atpo/tasks.hpp"
#include "atpo/trace_io.hpp"

namespace py = pybind11;
using namespace atpo;

namespace {

DifficultyCurves curves_from(const std::vector<double>& entropy,
                             const std::vector<double>& inv_margin) {
  return DifficultyCurves::from_means(entropy, inv_margin);
}

py::dict trace_to_dict(const RolloutTrace& tr) {
  py::dict d;
  d["prompt_id"] = tr.prompt_id;
  d["rollout_id"] = tr.rollout_id;
  d["T"] = tr.T;
  d["L"] = tr.L;
  d["reward"] = tr.reward;
  d["correct"] = tr.correct;
  d["final_tokens"] = tr.final_tokens;
  py::list steps;
  for (const StepTrace& s : tr.steps) {
    py::dict sd;
    sd["t"] = s.t;
    sd["transfer"] = s.transfer;
    sd["mean_entropy"] = s.mean_entropy;
    sd["mean_inv_margin"] = s.mean_inv_margin;
    steps.append(sd);
  }
  d["steps"] = steps;
  return d;
}

}  // namespace

PYBIND11_MODULE(_atpo, m) {
  m.doc() = "adaptive step selection and policy optimization for a toy masked denoiser";

  py::register_exception<Error>(m, "AtpoError");

  // metrics
  m.def("shannon_entropy",
        [](const std::vector<double>& p) { return shannon_entropy(validate_prob(p)); },
        py::arg("probs"), "Shannon entropy in nats of a categorical distribution");
  m.def("confidence_margin",
        [](const std::vector<double>& p) { return confidence_margin(validate_prob(p)); },
        py::arg("probs"));
  m.def("inverse_margin",
        [](const std::vector<double>& p, double eps) {
          return inverse_margin(validate_prob(p), eps);
        },
        py::arg("probs"), py::arg("eps_margin") = 1e-6);
  m.def("kl_divergence",
        [](const std::vector<double>& p, const std::vector<double>& q, double eps) {
          return kl_divergence(validate_prob(p), validate_prob(q), eps);
        },
        py::arg("p"), py::arg("q"), py::arg("eps_smooth") = 0.0);
  m.def("roec_curve",
        [](const std::vector<double>& h) { return roec_curve(h); }, py::arg("entropy"));
  m.def("curve_stats", [](const std::vector<double>& v) {
    const CurveStats s = curve_stats(v);
    return py::make_tuple(s.mean, s.stddev);
  });

  // step selection
  m.def("select_uniform",
        [](int T, int N) { return select_uniform(T, N).boundaries; }, py::arg("T"), py::arg("N"));
  m.def("select_hybrid",
        [](const std::vector<double>& entropy, const std::vector<double>& inv_margin, int N,
           double sigma_mult) {
          return select_hybrid(curves_from(entropy, inv_margin), N, sigma_mult).boundaries;
        },
        py::arg("entropy"), py::arg("inv_margin"), py::arg("N"), py::arg("sigma_mult") = 1.0);
  m.def("select_roec_only",
        [](const std::vector<double>& entropy, const std::vector<double>& inv_margin, int N,
           double sigma_mult) {
          return select_roec_only(curves_from(entropy, inv_margin), N, sigma_mult).boundaries;
        },
        py::arg("entropy"), py::arg("inv_margin"), py::arg("N"), py::arg("sigma_mult") = 1.0);
  m.def("select_cm_only",
        [](const std::vector<double>& entropy, const std::vector<double>& inv_margin, int N) {
          return select_cm_only(curves_from(entropy, inv_margin), N).boundaries;
        },
        py::arg("entropy"), py::arg("inv_margin"), py::arg("N"));

  // sampler plumbing
  m.def("commit_schedule", &commit_schedule, py::arg("L"), py::arg("T"));
  m.def("group_advantages",
        [](const std::vector<double>& rewards, double eps) {
          return group_advantages(rewards, eps);
        },
        py::arg("rewards"), py::arg("eps_adv") = 1e-8);
  m.def("token_objective", &token_objective, py::arg("logp_new"), py::arg("logp_old"),
        py::arg("logp_ref"), py::arg("advantage"), py::arg("clip_eps") = 0.2,
        py::arg("beta") = 0.0);

  // tasks
  m.def("generate_tasks",
        [](const std::string& task, int count, int L, std::uint64_t seed) {
          const Vocab vocab = Vocab::standard();
          py::list out;
          for (const TaskInstance& inst :
               generate_instances(parse_task(task), 0, count, L, seed, vocab)) {
            std::string prompt, gold;
            for (Token t : inst.prompt) prompt += vocab.decode(t);
            for (Token t : inst.gold) {
              if (t == Vocab::kPad) break;
              gold += vocab.decode(t);
            }
            out.append(py::make_tuple(prompt, gold));
          }
          return out;
        },
        py::arg("task"), py::arg("count"), py::arg("L") = 16, py::arg("seed") = 1);

  // training configuration and loop
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](const std::string& json) { return config_from_json(json); }),
           py::arg("json") = "{}")
      .def_property_readonly("json", &config_to_json)
      .def("__repr__", [](const TrainConfig& c) { return "TrainConfig(" + config_to_json(c) + ")"; });

  py::class_<EvalResult>(m, "EvalResult")
      .def_readonly("mean_reward", &EvalResult::mean_reward)
      .def_readonly("exact_rate", &EvalResult::exact_rate);

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const TrainConfig& cfg, int workers) { return new Trainer(cfg, workers); }),
           py::arg("config"), py::arg("workers") = 1)
      .def("run_iteration",
           [](Trainer& t) {
             const IterationMetrics m = t.run_iteration();
             py::dict d;
             d["iteration"] = m.iteration;
             d["mean_reward"] = m.mean_reward;
             d["loss"] = m.loss;
             d["mean_kl"] = m.mean_kl;
             d["boundaries"] = m.boundaries;
             d["entropy_mean"] = m.entropy_mean;
             d["roec_max"] = m.roec_max;
             return d;
           })
      .def("evaluate", &Trainer::evaluate, py::arg("count") = 64)
      .def("last_traces",
           [](const Trainer& t) {
             py::list out;
             for (const RolloutTrace& tr : t.last_traces()) out.append(trace_to_dict(tr));
             return out;
           })
      .def_property_readonly("iteration", &Trainer::iteration);

  m.attr("__version__") = "0.1.0";
}
