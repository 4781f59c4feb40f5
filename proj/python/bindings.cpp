#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "framecast/data.hpp"
#include "framecast/denoiser.hpp"
#include "framecast/predictor.hpp"
#include "framecast/schedule.hpp"
#include "framecast/scoring.hpp"
#include "framecast/tensor.hpp"

namespace py = pybind11;
using namespace framecast;

namespace {

Tensor tensor_from_numpy(const py::array& arr) {
    py::array_t<double, py::array::c_style | py::array::forcecast> a(arr);
    Shape shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(a.shape(i));
    Tensor t = Tensor::zeros(shape, DType::f64);
    const double* src = a.data();
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, src[i]);
    return t;
}

py::array_t<double> numpy_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    double* dst = out.mutable_data();
    for (int64_t i = 0; i < t.numel(); ++i) dst[i] = t.at(i);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "framecast core: diffusion schedule, scoring, windowing, synthesis";

    py::register_exception<Error>(m, "FramecastError", PyExc_RuntimeError);

    py::class_<DiffusionSchedule>(m, "DiffusionSchedule")
        .def_readonly("T", &DiffusionSchedule::T)
        .def_readonly("beta_start", &DiffusionSchedule::beta_start)
        .def_readonly("beta_end", &DiffusionSchedule::beta_end)
        .def("beta", &DiffusionSchedule::beta, py::arg("t"))
        .def("alpha", &DiffusionSchedule::alpha, py::arg("t"))
        .def("alpha_bar", &DiffusionSchedule::alpha_bar, py::arg("t"))
        .def("posterior_beta", &DiffusionSchedule::posterior_beta, py::arg("t"));

    m.def("make_linear_schedule", &make_linear_schedule, py::arg("T"), py::arg("beta_start") = 1e-4,
          py::arg("beta_end") = 0.075, "Linear beta schedule with precomputed alpha products.");

    m.def(
        "forward_sample",
        [](const DiffusionSchedule& s, const py::array& x0, int t, const py::array& noise) {
            return numpy_from_tensor(forward_sample(s, tensor_from_numpy(x0), t,
                                                    tensor_from_numpy(noise)));
        },
        py::arg("schedule"), py::arg("x0"), py::arg("t"), py::arg("noise"),
        "Corrupt x0 to step t: sqrt(alpha_bar_t) x0 + sqrt(1-alpha_bar_t) noise.");

    m.def(
        "estimate_x0",
        [](const DiffusionSchedule& s, const py::array& xt, int t, const py::array& eps) {
            return numpy_from_tensor(estimate_x0(s, tensor_from_numpy(xt), tensor_from_numpy(eps), t));
        },
        py::arg("schedule"), py::arg("x_t"), py::arg("t"), py::arg("eps_hat"),
        "Invert the forward process given a noise estimate.");

    m.def(
        "ddpm_step",
        [](const DiffusionSchedule& s, const py::array& xt, const py::array& eps, int t,
           const py::array& noise) {
            return numpy_from_tensor(ddpm_step(s, tensor_from_numpy(xt), tensor_from_numpy(eps), t,
                                               tensor_from_numpy(noise)));
        },
        py::arg("schedule"), py::arg("x_t"), py::arg("eps_hat"), py::arg("t"), py::arg("noise"),
        "One reverse-process step x_t -> x_{t-1} (noise must be zero at t=1).");

    m.def(
        "time_embedding",
        [](int t, int dim) { return numpy_from_tensor(time_embedding_raw(t, dim, DType::f64)); },
        py::arg("t"), py::arg("dim"),
        "Sinusoidal noise-level embedding, interleaved cos/sin pairs, shape [1, dim].");

    m.def(
        "psnr",
        [](const py::array& observed, const py::array& predicted) {
            return psnr(tensor_from_numpy(observed), tensor_from_numpy(predicted));
        },
        py::arg("observed"), py::arg("predicted"),
        "PSNR in dB for [0,1]-range images, capped at 100.");

    m.def("regular_score", &regular_score, py::arg("psnr_series"),
          "Per-video min-max normalization; constant series maps to 0.5.");

    m.def("classify", &classify, py::arg("scores"), py::arg("threshold"),
          "1 (anomalous) where score < threshold.");

    m.def(
        "roc_auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            RocCurve roc = roc_auc(scores, labels);
            std::vector<std::tuple<double, double, double>> pts;
            pts.reserve(roc.points.size());
            for (const RocPoint& p : roc.points) pts.emplace_back(p.threshold, p.fpr, p.tpr);
            return py::make_tuple(roc.auc, pts);
        },
        py::arg("scores"), py::arg("labels"),
        "Returns (auc, [(threshold, fpr, tpr), ...]); labels are 1 = anomalous.");

    m.def(
        "plan_windows",
        [](int F, int p, int k, int f) {
            std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
            for (const PredictionWindow& w : plan_windows(F, p, k, f))
                out.emplace_back(w.cond_indices, w.predict_indices);
            return out;
        },
        py::arg("F"), py::arg("p"), py::arg("k"), py::arg("f") = 0,
        "Sliding prediction windows as (cond_indices, predict_indices) pairs.");

    m.def(
        "synth_clip",
        [](int H, int W, int F, const std::string& anomaly, int onset, uint64_t seed, int n_blobs) {
            SynthConfig cfg;
            cfg.H = H;
            cfg.W = W;
            cfg.F = F;
            cfg.anomaly = anomaly_from_name(anomaly);
            cfg.onset = onset;
            cfg.seed = seed;
            cfg.n_blobs = n_blobs;
            VideoClip clip = synth_clip(cfg);
            py::array_t<double> frames = numpy_from_tensor(clip.frames);
            return py::make_tuple(frames, clip.labels);
        },
        py::arg("H") = 16, py::arg("W") = 16, py::arg("F") = 14, py::arg("anomaly") = "none",
        py::arg("onset") = -1, py::arg("seed") = 0, py::arg("n_blobs") = 4,
        "Synthesize one clip; returns (frames[F,1,H,W] in [-1,1], labels).");
}
