#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tscam/dataset.hpp"
#include "tscam/eval.hpp"
#include "tscam/gradcheck.hpp"
#include "tscam/head.hpp"
#include "tscam/train.hpp"

namespace py = pybind11;
using namespace tscam;

namespace {

Tensor<double> tensor_from_array(const py::array_t<double, py::array::c_style |
                                                              py::array::forcecast>& arr) {
    std::vector<index_t> shape(static_cast<std::size_t>(arr.ndim()));
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) {
        shape[static_cast<std::size_t>(i)] = static_cast<index_t>(arr.shape(i));
    }
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor<double>(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor<double>& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
    return arr;
}

Box box_from_tuple(const std::tuple<int, int, int, int>& t) {
    return Box{std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Token semantic coupled attention maps for weakly supervised localization";

    py::register_exception<Error>(m, "TscamError");

    // tensor primitives
    m.def("matmul", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return array_from_tensor(ops::matmul(tensor_from_array(a), tensor_from_array(b)));
    });
    m.def("softmax_rows", [](const py::array_t<double>& x) {
        return array_from_tensor(ops::softmax_rows(tensor_from_array(x)));
    });
    m.def("conv2d_3x3", [](const py::array_t<double>& input, const py::array_t<double>& kernel) {
        return array_from_tensor(
            ops::conv2d_3x3(tensor_from_array(input), tensor_from_array(kernel)));
    });
    m.def(
        "layer_norm",
        [](const py::array_t<double>& x, const py::array_t<double>& gamma,
           const py::array_t<double>& beta, double eps) {
            return array_from_tensor(ops::layer_norm(tensor_from_array(x),
                                                     tensor_from_array(gamma),
                                                     tensor_from_array(beta), eps));
        },
        py::arg("x"), py::arg("gamma"), py::arg("beta"), py::arg("eps") = 1e-5);
    m.def("bilinear_resize", [](const py::array_t<double>& chw, index_t h, index_t w) {
        return array_from_tensor(bilinear_resize(tensor_from_array(chw), h, w));
    });

    // localization pipeline pieces
    m.def("couple", [](const py::array_t<double>& attn, const py::array_t<double>& s) {
        return array_from_tensor(couple(tensor_from_array(attn), tensor_from_array(s)));
    });
    m.def("postprocess", [](const py::array_t<double>& map, index_t h, index_t w) {
        return array_from_tensor(postprocess(tensor_from_array(map), h, w));
    });
    m.def("extract_bbox", [](const py::array_t<double>& map, double tau) {
        const Box b = extract_bbox(tensor_from_array(map), tau);
        return std::make_tuple(b.x0, b.y0, b.x1, b.y1);
    });
    m.def("cosine_similarity_matrix", [](const py::array_t<double>& vectors) {
        return array_from_tensor(cosine_similarity_matrix(tensor_from_array(vectors)));
    });

    // box metrics
    m.def("iou", [](const std::tuple<int, int, int, int>& a,
                    const std::tuple<int, int, int, int>& b) {
        return iou(box_from_tuple(a), box_from_tuple(b));
    });
    m.def("iog", [](const std::tuple<int, int, int, int>& pred,
                    const std::tuple<int, int, int, int>& gt) {
        return iog(box_from_tuple(pred), box_from_tuple(gt));
    });
    m.def("iop", [](const std::tuple<int, int, int, int>& pred,
                    const std::tuple<int, int, int, int>& gt) {
        return iop(box_from_tuple(pred), box_from_tuple(gt));
    });

    // dataset + model entry points
    m.def(
        "generate_dataset",
        [](const std::string& out_dir, index_t num_classes, index_t image_size,
           index_t train_images, index_t val_images, index_t test_images, std::uint64_t seed) {
            SynthConfig config;
            config.num_classes = num_classes;
            config.image_size = image_size;
            config.train_images = train_images;
            config.val_images = val_images;
            config.test_images = test_images;
            config.seed = seed;
            generate(config, out_dir);
        },
        py::arg("out_dir"), py::arg("num_classes") = 4, py::arg("image_size") = 64,
        py::arg("train_images") = 400, py::arg("val_images") = 100, py::arg("test_images") = 200,
        py::arg("seed") = 7);

    py::class_<VitConfig>(m, "VitConfig")
        .def(py::init<>())
        .def_readwrite("image_size", &VitConfig::image_size)
        .def_readwrite("patch_size", &VitConfig::patch_size)
        .def_readwrite("depth", &VitConfig::depth)
        .def_readwrite("heads", &VitConfig::heads)
        .def_readwrite("embed_dim", &VitConfig::embed_dim)
        .def_readwrite("mlp_ratio", &VitConfig::mlp_ratio)
        .def_readwrite("num_classes", &VitConfig::num_classes);

    py::class_<Checkpoint>(m, "Checkpoint");

    m.def("load_checkpoint", [](const std::string& path) {
        return load_checkpoint(path);
    });

    // Freshly initialized model written straight to disk; mainly a cheap way
    // to exercise the inference path without a training run.
    m.def(
        "init_checkpoint",
        [](const std::string& path, const VitConfig& config, const std::string& head_variant,
           std::uint64_t seed) {
            config.validate();
            const VitParams<float> params =
                init_params<float>(config, head_variant_from_name(head_variant), seed);
            AugmentConfig augment;
            augment.resize_to = config.image_size;
            augment.crop_to = config.image_size;
            save_checkpoint(path, params, augment);
        },
        py::arg("path"), py::arg("config"), py::arg("head_variant") = "conv2d",
        py::arg("seed") = 7);

    m.def("model_summary_total", [](const Checkpoint& ck) {
        return model_summary(ck.params).total;
    });

    m.def(
        "localize_image",
        [](const Checkpoint& ck, const py::array_t<double>& image, const std::string& mode,
           double tau) {
            Tensor<float> original = tensor_from_array(image).cast<float>();
            if (original.rank() != 3 || original.dim(1) != original.dim(2)) {
                throw ValueError("localize_image expects a square [3,H,W] image");
            }
            const index_t orig_size = original.dim(1);
            Tensor<float> input = augment(original, AugmentMode::Eval, ck.augment, nullptr);
            const LocalizationResult res =
                localize(input, ck.params, localize_mode_from_name(mode), tau, 1,
                         ck.params.config.depth);
            // box reported in original image coordinates, like the CLI
            const Box box = map_box_to_original(res.box, orig_size, ck.augment.resize_to,
                                                ck.augment.crop_to);
            py::dict out;
            out["probs"] = res.probs;
            out["cls"] = res.cls;
            out["map"] = array_from_tensor(res.map);
            out["box"] = std::make_tuple(box.x0, box.y0, box.x1, box.y1);
            return out;
        },
        py::arg("checkpoint"), py::arg("image"), py::arg("mode") = "tscam",
        py::arg("tau") = 0.4);
}
