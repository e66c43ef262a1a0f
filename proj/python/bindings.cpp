#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "dualmatch/cli.hpp"
#include "dualmatch/clusterer.hpp"
#include "dualmatch/errors.hpp"
#include "dualmatch/metrics.hpp"
#include "dualmatch/model.hpp"
#include "dualmatch/synthgen.hpp"

namespace py = pybind11;
using namespace dualmatch;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor2 to_tensor(const Array& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D array");
  Tensor2 t(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  if (t.size() > 0) std::memcpy(t.values().data(), a.data(), t.size() * sizeof(double));
  return t;
}

Array to_array(const Tensor2& t) {
  Array a({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())});
  if (t.size() > 0) std::memcpy(a.mutable_data(), t.values().data(), t.size() * sizeof(double));
  return a;
}

Side parse_side(const std::string& s) {
  if (s == "A" || s == "a") return Side::A;
  if (s == "B" || s == "b") return Side::B;
  throw Error(ErrorCode::Usage, "side must be 'A' or 'B'");
}

}  // namespace

PYBIND11_MODULE(_dualmatch, m) {
  m.doc() = "Dual-encoder record matching for paired tabular microdata.";

  static py::exception<Error> error_type(m, "DualmatchError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
      exc.attr("code") = to_string(e.code());
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"dualmatch"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");

  m.def("oracle_y", &oracle_y, py::arg("c"), py::arg("n1"), py::arg("n2"));

  m.def(
      "generate_synthetic",
      [](std::size_t n, std::uint64_t seed) {
        const auto recs = generate_synthetic(n, seed);
        Array out({static_cast<py::ssize_t>(recs.size()), py::ssize_t{6}});
        auto v = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < recs.size(); ++i) {
          const auto& r = recs[i];
          const double row[6] = {static_cast<double>(r.c), r.n1, r.n2, r.y1, r.y2, r.y3};
          for (py::ssize_t j = 0; j < 6; ++j) v(static_cast<py::ssize_t>(i), j) = row[j];
        }
        return out;
      },
      py::arg("n"), py::arg("seed"), "Rows of (c, n1, n2, y1, y2, y3).");

  m.def(
      "average_precision",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return average_precision(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "ndcg_at_k",
      [](const std::vector<double>& scores, const std::vector<double>& relevance, std::size_t k) {
        return ndcg_at_k(scores, relevance, k).value;
      },
      py::arg("scores"), py::arg("relevance"), py::arg("k") = 10);

  m.def(
      "bisecting_kmeans",
      [](const Array& x, int k, std::uint64_t seed, int max_iter) {
        const auto a = bisecting_kmeans(to_tensor(x), k, seed, max_iter);
        py::dict d;
        d["k"] = a.k;
        d["labels"] = a.labels;
        d["sse"] = a.sse;
        d["total_sse"] = a.total_sse();
        d["centroids"] = to_array(a.centroids);
        return d;
      },
      py::arg("x"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 100);

  py::class_<DualEncoderModel>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const DualEncoderModel& self, const std::filesystem::path& p) { save_checkpoint(self, p); })
      .def_property_readonly("input_width_a", [](const DualEncoderModel& s) { return s.config.input_width_a; })
      .def_property_readonly("input_width_b", [](const DualEncoderModel& s) { return s.config.input_width_b; })
      .def_property_readonly("embed_dim", [](const DualEncoderModel& s) { return s.config.embed_dim; })
      .def_property_readonly("config_json", [](const DualEncoderModel& s) { return s.config.to_json().dump(); })
      .def(
          "embed",
          [](const DualEncoderModel& s, const Array& x, const std::string& side, bool use_ema) {
            return to_array(embed(s, to_tensor(x), parse_side(side), use_ema));
          },
          py::arg("x"), py::arg("side"), py::arg("use_ema") = true)
      .def(
          "score",
          [](const DualEncoderModel& s, const Array& xa, const Array& xb, bool use_ema) {
            const auto r = score_pairs(s, to_tensor(xa), to_tensor(xb), use_ema);
            return py::make_tuple(to_array(r.logits), to_array(r.probabilities));
          },
          py::arg("xa"), py::arg("xb"), py::arg("use_ema") = true,
          "Returns (logits, probabilities) for every (row of xa, row of xb).");

  m.def("encoder_rows_forwarded", &encoder_rows_forwarded);
  m.def("reset_encoder_rows_forwarded", &reset_encoder_rows_forwarded);
}
