// Copyright 2026 The SER Lab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "serlab/cli.hpp"
#include "serlab/dsp.hpp"
#include "serlab/eval.hpp"
#include "serlab/manifest.hpp"
#include "serlab/objectives.hpp"
#include "serlab/optim.hpp"

namespace py = pybind11;
using namespace serlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

tensor::Tensor<double> to_tensor(const Array& a) {
  tensor::Shape shape(a.shape(), a.shape() + a.ndim());
  return tensor::Tensor<double>(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const tensor::Tensor<double>& t) {
  py::array_t<double> out(t.shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

/// Loss value and gradient with respect to the first argument.
py::tuple nt_xent(const Array& z, const std::vector<std::int64_t>& speakers, double temperature,
                  const std::string& denominator) {
  tensor::Tape<double> tape;
  auto x = tape.variable(to_tensor(z));
  auto loss = objectives::nt_xent(
      x, speakers, objectives::ContrastiveConfig{temperature, objectives::parse_denominator(denominator)});
  tape.backward(loss);
  return py::make_tuple(loss.value().item(), to_array(x.grad()));
}

py::tuple cross_entropy(const Array& logits, const std::vector<int>& labels) {
  tensor::Tape<double> tape;
  auto x = tape.variable(to_tensor(logits));
  auto loss = objectives::cross_entropy(x, labels);
  tape.backward(loss);
  return py::make_tuple(loss.value().item(), to_array(x.grad()));
}

double byol_loss(const Array& q_a, const Array& t_b, const Array& q_b, const Array& t_a) {
  tensor::Tape<double> tape(false);
  return objectives::byol_loss(tape.constant(to_tensor(q_a)), to_tensor(t_b), tape.constant(to_tensor(q_b)),
                               to_tensor(t_a))
      .value()
      .item();
}

py::array_t<float> log_mel(const FloatArray& samples, int sample_rate) {
  dsp::AudioClip clip{std::vector<float>(samples.data(), samples.data() + samples.size()), sample_rate};
  const auto mel = dsp::log_mel(clip);
  py::array_t<float> out({mel.n_mels, mel.n_frames});
  std::copy(mel.values.begin(), mel.values.end(), out.mutable_data());
  return out;
}

py::dict metrics(const std::vector<int>& truths, const std::vector<int>& predictions,
                 const std::vector<std::string>& genders, int n_classes) {
  std::vector<Gender> g;
  for (const auto& s : genders) g.push_back(parse_gender(s));
  const auto r = eval::compute_metrics(truths, predictions, g, n_classes);
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["macro_f1"] = r.macro_f1;
  d["uar"] = r.uar;
  d["confusion"] = r.confusion;
  d["per_class_recall"] = r.per_class_recall;
  py::dict per_gender;
  for (const auto& [name, s] : r.per_gender) per_gender[py::str(name)] = s.rate;
  d["per_gender"] = per_gender;
  return d;
}

py::array_t<double> ema(const Array& target, const Array& online, double momentum) {
  tensor::ParameterStore<double> t, o;
  t.add("w", to_tensor(target));
  o.add("w", to_tensor(online));
  optim::ema_update(t, o, momentum);
  return to_array(t.value("w"));
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cli::cli_dispatch(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

std::filesystem::path synth_corpus(const std::filesystem::path& out_dir, int n_speakers, int utterances_per_speaker,
                                   std::uint64_t seed) {
  auto c = SynthCorpusConfig::defaults();
  c.n_speakers = n_speakers;
  c.utterances_per_speaker = utterances_per_speaker;
  c.seed = seed;
  py::gil_scoped_release release;
  return generate_synth_corpus(c, out_dir).manifest_path;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cross-lingual speech emotion recognition toolkit";

  m.def("nt_xent", &nt_xent, py::arg("z"), py::arg("speakers"), py::arg("temperature") = 0.1,
        py::arg("denominator") = "include_positive", "Speaker NT-Xent loss and its gradient.");
  m.def("cross_entropy", &cross_entropy, py::arg("logits"), py::arg("labels"),
        "Mean cross-entropy and its gradient.");
  m.def("byol_loss", &byol_loss, py::arg("q_a"), py::arg("t_b"), py::arg("q_b"), py::arg("t_a"));
  m.def("lambda_at", [](std::int64_t step, std::int64_t total, double start, double end) {
    return objectives::lambda_at(step, objectives::MixedLossSchedule{start, end, total});
  }, py::arg("step"), py::arg("total_steps"), py::arg("start") = 0.8, py::arg("end") = 0.2);
  m.def("ema", &ema, py::arg("target"), py::arg("online"), py::arg("momentum"));
  m.def("log_mel", &log_mel, py::arg("samples"), py::arg("sample_rate") = 16000,
        "80-bin log-mel matrix [n_mels, n_frames].");
  m.def("metrics", &metrics, py::arg("truths"), py::arg("predictions"),
        py::arg("genders") = std::vector<std::string>{}, py::arg("n_classes") = kNumEmotions);
  m.def("synth_corpus", &synth_corpus, py::arg("out_dir"), py::arg("n_speakers") = 40,
        py::arg("utterances_per_speaker") = 25, py::arg("seed") = 0, "Writes a corpus; returns the manifest path.");
  m.def("cli", &run_cli, py::arg("args"), "Runs the command-line tool; returns (exit_code, stdout, stderr).");
}
