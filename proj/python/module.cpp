// Python bindings: numpy in, numpy out. Images are (h, w, 3) float64
// arrays in [0,1]; severity vectors are 1-D float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>

#include "awr/data.hpp"
#include "awr/inference.hpp"
#include "awr/losses.hpp"
#include "awr/metrics.hpp"
#include "awr/png_io.hpp"
#include "awr/synth.hpp"
#include "awr/trainer.hpp"

namespace py = pybind11;
using namespace awr;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<int> dims;
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) dims.push_back(static_cast<int>(arr.shape(i)));
    Tensor t(dims);
    const double* src = arr.data();
    for (int64_t i = 0; i < t.size(); ++i) t[i] = src[i];
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int d : t.dims()) shape.push_back(d);
    py::array_t<double> arr(shape);
    double* dst = arr.mutable_data();
    for (int64_t i = 0; i < t.size(); ++i) dst[i] = t[i];
    return arr;
}

using NpImage = py::array_t<double, py::array::c_style | py::array::forcecast>;

synth::DegradationSpec make_spec(const std::string& kind, double severity, uint64_t seed) {
    synth::DegradationSpec s;
    s.kind = synth::kind_from_string(kind);
    s.severity = severity;
    s.seed = seed;
    return s;
}

KvMap kv_from_dict(const py::dict& d) {
    KvMap kv;
    for (auto item : d) kv[py::str(item.first)] = py::str(item.second);
    return kv;
}

// Thin owner so Python can hold a model plus its originating config.
struct PyRestorer {
    train::TrainConfig config;
    std::unique_ptr<Model> model;

    static PyRestorer load(const std::string& path) {
        auto [info, m] = train::load_model_checkpoint(path);
        return PyRestorer{info.config, std::move(m)};
    }
    static PyRestorer fresh(const py::dict& d) {
        train::TrainConfig cfg = train::TrainConfig::from_kv(kv_from_dict(d));
        return PyRestorer{cfg, std::make_unique<Model>(cfg.model)};
    }
};

void register_exceptions(py::module_&) {
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const ShapeError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const NumericError& e) {
            PyErr_SetString(PyExc_ArithmeticError, e.what());
        } catch (const DataError& e) {
            PyErr_SetString(PyExc_IOError, e.what());
        }
    });
}

}  // namespace

PYBIND11_MODULE(awr, m) {
    m.doc() = "weather degradation synthesis, quality metrics and conditioned restoration";
    m.attr("__version__") = "0.1.0";
    register_exceptions(m);

    m.def("kinds", [] { return synth::kind_names(); }, "supported degradation kinds");

    m.def(
        "degrade",
        [](const NpImage& clean, const std::string& kind, double severity, uint64_t seed) {
            return array_from_tensor(synth::apply_degradation(tensor_from_array(clean),
                                                              make_spec(kind, severity, seed)));
        },
        py::arg("clean"), py::arg("kind"), py::arg("severity"), py::arg("seed") = 0,
        "apply a seeded weather degradation to a clean (h,w,3) image");

    m.def(
        "make_scene",
        [](uint64_t index, int h, int w) { return array_from_tensor(synth::make_scene(index, h, w)); },
        py::arg("index"), py::arg("h") = 64, py::arg("w") = 64,
        "procedural clean test scene, deterministic in index");

    m.def(
        "generate_corpus",
        [](const std::string& clean_dir, const std::string& out_dir,
           const std::vector<std::string>& kinds, int per_kind, double severity_min,
           double severity_max, uint64_t seed) {
            synth::CorpusOptions opt;
            opt.kinds.clear();
            for (const auto& k : kinds) opt.kinds.push_back(synth::kind_from_string(k));
            opt.per_kind = per_kind;
            opt.severity_lo = severity_min;
            opt.severity_hi = severity_max;
            opt.seed = seed;
            synth::generate_corpus(clean_dir, out_dir, opt);
            return out_dir + "/manifest.csv";
        },
        py::arg("clean_dir"), py::arg("out_dir"),
        py::arg("kinds") = std::vector<std::string>{"rain_streak", "haze", "snow", "raindrop"},
        py::arg("per_kind") = 4, py::arg("severity_min") = 0.25, py::arg("severity_max") = 0.9,
        py::arg("seed") = 0, "write a degraded corpus and manifest; returns the manifest path");

    m.def("read_png", [](const std::string& p) { return array_from_tensor(read_png(p)); });
    m.def("write_png",
          [](const std::string& p, const NpImage& img) { write_png(p, tensor_from_array(img)); });

    // metrics
    m.def("psnr", [](const NpImage& a, const NpImage& b) {
        return metrics::psnr(tensor_from_array(a), tensor_from_array(b));
    });
    m.def("ssim", [](const NpImage& a, const NpImage& b) {
        return metrics::ssim(tensor_from_array(a), tensor_from_array(b));
    });
    m.def("gt_quality", [](const NpImage& degraded, const NpImage& clean) {
        return metrics::gt_quality(tensor_from_array(degraded), tensor_from_array(clean));
    });

    // losses (value-level)
    m.def(
        "mqrl",
        [](double pa, double pb, double ga, double gb, double margin) {
            nn::Tape t;
            return t.scalar(loss::mqrl(t, t.constant(pa), t.constant(pb), ga, gb, margin));
        },
        py::arg("pred_a"), py::arg("pred_b"), py::arg("gt_a"), py::arg("gt_b"),
        py::arg("margin") = 0.05);
    m.def(
        "mrl",
        [](double pa, double pb, double ga, double gb, double margin) {
            nn::Tape t;
            return t.scalar(loss::mrl(t, t.constant(pa), t.constant(pb), ga, gb, margin));
        },
        py::arg("pred_a"), py::arg("pred_b"), py::arg("gt_a"), py::arg("gt_b"),
        py::arg("margin") = 0.05);
    m.def("direct_iqa", [](double pred, double gt) {
        nn::Tape t;
        return t.scalar(loss::direct_iqa(t, t.constant(pred), gt));
    });
    m.def(
        "contrastive",
        [](const NpImage& anchor, const NpImage& positive, const std::vector<NpImage>& negatives,
           double tau) {
            nn::Tape t;
            std::vector<nn::Var> negs;
            for (const auto& n : negatives) negs.push_back(t.input(tensor_from_array(n)));
            return t.scalar(loss::contrastive(t, t.input(tensor_from_array(anchor)),
                                              t.input(tensor_from_array(positive)), negs, tau));
        },
        py::arg("anchor"), py::arg("positive"), py::arg("negatives"), py::arg("tau") = 0.25);
    m.def("l1_loss", [](const NpImage& a, const NpImage& b) {
        nn::Tape t;
        return t.scalar(loss::l1(t, t.input(tensor_from_array(a)), t.input(tensor_from_array(b))));
    });
    m.def("ssim_loss", [](const NpImage& a, const NpImage& b) {
        nn::Tape t;
        return t.scalar(loss::ssim_loss(t, t.input(tensor_from_array(a)), t.input(tensor_from_array(b))));
    });

    py::class_<PyRestorer>(m, "Restorer")
        .def_static("load", &PyRestorer::load, py::arg("checkpoint"),
                    "load a trained model from a checkpoint file")
        .def_static("fresh", &PyRestorer::fresh, py::arg("config") = py::dict(),
                    "untrained model; config is a key=value dict of training-config keys")
        .def("restore",
             [](const PyRestorer& r, const NpImage& img) {
                 return array_from_tensor(infer::restore_any(*r.model, tensor_from_array(img)));
             })
        .def("encode",
             [](const PyRestorer& r, const NpImage& img) {
                 auto [tm, sev] = r.model->encode_image(tensor_from_array(img));
                 return py::make_tuple(array_from_tensor(tm), array_from_tensor(sev));
             })
        .def("predict_iqa",
             [](const PyRestorer& r, const NpImage& severity) {
                 return r.model->predict_iqa_value(tensor_from_array(severity));
             })
        .def("iterative_restore",
             [](const PyRestorer& r, const NpImage& img, int n) {
                 auto seq = infer::iterative_restore(*r.model, tensor_from_array(img), n);
                 std::vector<py::array_t<double>> out;
                 for (const auto& s : seq) out.push_back(array_from_tensor(s));
                 return out;
             },
             py::arg("image"), py::arg("n") = 1)
        .def("modulate",
             [](const PyRestorer& r, const NpImage& img, double alpha) {
                 return array_from_tensor(infer::modulate(*r.model, tensor_from_array(img), alpha));
             },
             py::arg("image"), py::arg("alpha"))
        .def("parameter_count", [](const PyRestorer& r) { return r.model->parameter_count(); })
        .def("summary", [](const PyRestorer& r) { return r.model->summary(); });

    m.def(
        "train",
        [](const py::dict& config, const std::string& manifest_path, const std::string& out_dir) {
            train::TrainConfig cfg = train::TrainConfig::from_kv(kv_from_dict(config));
            Manifest manifest = load_manifest(manifest_path);
            validate_manifest(manifest);
            std::filesystem::create_directories(out_dir);
            train::Trainer trainer(cfg, std::move(manifest));
            std::ofstream log(out_dir + "/train_log.jsonl", std::ios::binary);
            trainer.run_stage1(&log);
            trainer.run_stage2(&log);
            std::string ckpt = out_dir + "/model.ckpt";
            trainer.save_checkpoint(ckpt);
            return ckpt;
        },
        py::arg("config"), py::arg("manifest"), py::arg("out_dir"),
        "run both training stages; returns the checkpoint path");
}
