#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>

#include "mctnet/checkpoint.hpp"
#include "mctnet/config.hpp"
#include "mctnet/metrics.hpp"
#include "mctnet/network.hpp"
#include "mctnet/ops.hpp"
#include "mctnet/synth.hpp"
#include "mctnet/train.hpp"
#include "mctnet/verify.hpp"

namespace py = pybind11;
using namespace mctnet;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_numpy(const NpArray& arr, bool requires_grad = false) {
  Shape shape(size_t(arr.ndim()));
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape[size_t(i)] = int64_t(arr.shape(i));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

py::array numpy_from_span(const Shape& shape, std::span<const double> values) {
  std::vector<py::ssize_t> dims(shape.begin(), shape.end());
  py::array_t<double> out(dims);
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

py::array tensor_to_numpy(const Tensor& t) {
  return numpy_from_span(t.shape(), t.data());
}

Tensor opt_tensor(const std::optional<NpArray>& arr) {
  return arr ? tensor_from_numpy(*arr) : Tensor{};
}

BinaryMask mask_from_numpy(const NpArray& arr) {
  if (arr.ndim() != 2) throw DataError("mask arrays must be 2-d");
  BinaryMask m;
  m.h = int64_t(arr.shape(0));
  m.w = int64_t(arr.shape(1));
  m.v.resize(size_t(m.h * m.w));
  for (size_t i = 0; i < m.v.size(); ++i) {
    const double v = arr.data()[i];
    if (v != 0.0 && v != 1.0) throw DataError("mask arrays must be binary");
    m.v[i] = v != 0.0;
  }
  return m;
}

// Tape with python context-manager semantics.
struct PyTape {
  Tape tape;
  std::unique_ptr<TapeScope> scope;

  PyTape* enter() {
    scope = std::make_unique<TapeScope>(tape);
    return this;
  }
  void exit(const py::object&, const py::object&, const py::object&) {
    scope.reset();
  }
};

struct PyModel {
  RunConfig cfg;
  std::unique_ptr<MctNet> net;

  PyModel(const std::string& config_json, std::optional<uint64_t> seed) {
    cfg = parse_run_config(config_json);
    if (seed) cfg.seed = *seed;
    net = std::make_unique<MctNet>(cfg.network, cfg.seed);
  }

  py::array forward(const NpArray& t1, const NpArray& t2, bool training) {
    Tensor logits =
        net->forward(tensor_from_numpy(t1), tensor_from_numpy(t2), training);
    return tensor_to_numpy(logits);
  }

  py::array predict(const NpArray& t1, const NpArray& t2) {
    Tensor logits = net->forward(tensor_from_numpy(t1), tensor_from_numpy(t2),
                                 /*training=*/false);
    return tensor_to_numpy(argmax_channel(logits));
  }

  double train_batch(const NpArray& t1, const NpArray& t2, const NpArray& mask,
                     double lr) {
    Tensor i1 = tensor_from_numpy(t1);
    Tensor i2 = tensor_from_numpy(t2);
    Tensor m = tensor_from_numpy(mask);
    Tape tape;
    double loss_value;
    {
      TapeScope scope(tape);
      Tensor logits = net->forward(i1, i2, /*training=*/true);
      Tensor loss = weighted_ce_loss(logits, m, net->loss_weights(m));
      loss_value = loss.item();
      net->params().zero_grads();
      tape.backward(loss);
    }
    sgd_step(net->params(), lr, cfg.optim);
    return loss_value;
  }

  void save(const std::string& path) {
    save_checkpoint(net->params(), config_digest(cfg), path);
  }
  void load(const std::string& path) {
    load_checkpoint(net->params(), path, config_digest(cfg));
  }

  uint64_t digest() const { return config_digest(cfg); }
  int64_t num_parameters() const { return net->params().trainable_numel(); }
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (const auto& e : net->params().entries()) names.push_back(e.name);
    return names;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Tensor engine, network blocks and training utilities for Siamese "
      "CNN-transformer change detection";

  py::register_exception<Error>(m, "MctError");

  py::class_<Tensor>(m, "Tensor")
      .def(py::init([](const NpArray& arr, bool requires_grad) {
             return tensor_from_numpy(arr, requires_grad);
           }),
           py::arg("array"), py::arg("requires_grad") = false)
      .def_property_readonly("shape",
                             [](const Tensor& t) {
                               return std::vector<int64_t>(t.shape().begin(),
                                                           t.shape().end());
                             })
      .def_property_readonly("requires_grad", &Tensor::requires_grad)
      .def("numpy", &tensor_to_numpy)
      .def("grad",
           [](const Tensor& t) { return numpy_from_span(t.shape(), t.grad()); })
      .def("zero_grad", &Tensor::zero_grad)
      .def("item", &Tensor::item);

  py::class_<PyTape>(m, "Tape")
      .def(py::init<>())
      .def("__enter__", &PyTape::enter, py::return_value_policy::reference)
      .def("__exit__", &PyTape::exit)
      .def("backward",
           [](PyTape& t, const Tensor& loss) { t.tape.backward(loss); })
      .def("size", [](const PyTape& t) { return t.tape.size(); });

  // Core ops on Tensors (differentiable through an active Tape).
  m.def("conv2d", &conv2d, py::arg("x"), py::arg("w"),
        py::arg("b") = Tensor{}, py::arg("stride") = 1, py::arg("pad") = 0);
  m.def("depthwise_conv2d", &depthwise_conv2d, py::arg("x"), py::arg("w"),
        py::arg("stride") = 1, py::arg("pad") = 0);
  m.def("linear", &linear, py::arg("x"), py::arg("w"), py::arg("b") = Tensor{});
  m.def("relu", &relu);
  m.def("gelu", &gelu);
  m.def("softmax", &softmax, py::arg("x"), py::arg("axis"));
  m.def("layernorm", &layernorm, py::arg("x"), py::arg("gamma"),
        py::arg("beta"), py::arg("eps") = 1e-5);
  m.def("global_avg_pool", &global_avg_pool);
  m.def("bilinear_upsample2x", &bilinear_upsample2x);
  m.def("add", &add);
  m.def("sub", &sub);
  m.def("mul", &mul);
  m.def("abs", &mctnet::abs);
  m.def("sum", &mctnet::sum);
  m.def("mean", &mctnet::mean);
  m.def("flatten_tokens", &flatten_tokens);
  m.def("unflatten_tokens", &unflatten_tokens, py::arg("t"), py::arg("h"),
        py::arg("w"));
  m.def(
      "weighted_ce_loss",
      [](const Tensor& logits, const Tensor& mask, std::vector<double> weights) {
        return weighted_ce_loss(logits, mask, weights);
      },
      py::arg("logits"), py::arg("mask"), py::arg("weights"));
  m.def("argmax_channel", &argmax_channel);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, std::optional<uint64_t>>(),
           py::arg("config_json"), py::arg("seed") = std::nullopt)
      .def("forward", &PyModel::forward, py::arg("t1"), py::arg("t2"),
           py::arg("training") = false)
      .def("predict", &PyModel::predict, py::arg("t1"), py::arg("t2"))
      .def("train_batch", &PyModel::train_batch, py::arg("t1"), py::arg("t2"),
           py::arg("mask"), py::arg("lr"))
      .def("save", &PyModel::save)
      .def("load", &PyModel::load)
      .def_property_readonly("config_digest", &PyModel::digest)
      .def_property_readonly("num_parameters", &PyModel::num_parameters)
      .def_property_readonly("parameter_names", &PyModel::parameter_names);

  m.def(
      "metrics_from_masks",
      [](const NpArray& pred, const NpArray& truth) {
        Metrics v = metrics(confusion(mask_from_numpy(pred), mask_from_numpy(truth)));
        py::dict d;
        d["precision"] = v.precision;
        d["recall"] = v.recall;
        d["f1"] = v.f1;
        d["oa"] = v.oa;
        return d;
      },
      py::arg("pred"), py::arg("truth"));

  m.def(
      "lr_at",
      [](int64_t epoch, int64_t total_epochs, double lr0, double decay_factor) {
        OptimConfig cfg;
        cfg.total_epochs = total_epochs;
        cfg.lr0 = lr0;
        cfg.decay_factor = decay_factor;
        return lr_at(epoch, cfg);
      },
      py::arg("epoch"), py::arg("total_epochs"), py::arg("lr0") = 1e-3,
      py::arg("decay_factor") = 0.1);

  m.def(
      "generate_dataset",
      [](const std::string& config_json, const std::string& out_dir,
         std::optional<uint64_t> seed) {
        RunConfig cfg = parse_run_config(config_json);
        if (seed) cfg.seed = *seed;
        auto samples = generate(cfg.synth, cfg.seed);
        write_dataset(out_dir, samples, assign_splits(cfg.synth, samples.size()));
        return samples.size();
      },
      py::arg("config_json"), py::arg("out_dir"), py::arg("seed") = std::nullopt);

  m.def("resolved_config",
        [](const std::string& config_json) {
          return resolved_json(parse_run_config(config_json));
        });

  m.def("run_verify_suite", [](uint64_t seed) {
    auto results = verify::run_all(seed);
    py::list out;
    for (const auto& r : results) {
      py::dict d;
      d["name"] = r.name;
      d["ok"] = r.ok;
      d["worst"] = r.worst;
      d["tolerance"] = r.tolerance;
      out.append(d);
    }
    return out;
  });
}
