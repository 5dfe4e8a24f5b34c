// pybind11 bindings for the hybridtrain core: data generation, the two mini
// models, solvers, the cluster simulator, and the perf reports.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstring>

#include "hybridtrain/cluster.hpp"
#include "hybridtrain/datagen.hpp"
#include "hybridtrain/harness.hpp"
#include "hybridtrain/models.hpp"
#include "hybridtrain/perf.hpp"
#include "hybridtrain/runlog.hpp"

namespace py = pybind11;
using namespace hybridtrain;

namespace {

py::array_t<double> tensor_to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> a(shape);
    std::memcpy(a.mutable_data(), t.data.data(), t.data.size() * sizeof(double));
    return a;
}

Tensor numpy_to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    Tensor t = Tensor::zeros(shape);
    std::memcpy(t.data.data(), a.data(), t.data.size() * sizeof(double));
    return t;
}

SolverConfig make_solver(const std::string& kind, double lr, double momentum) {
    SolverConfig s;
    if (kind == "sgd_momentum")
        s.kind = SolverKind::sgd_momentum;
    else if (kind == "adam")
        s.kind = SolverKind::adam;
    else
        throw ValidationError("solver kind must be 'sgd_momentum' or 'adam'");
    s.lr = lr;
    s.momentum = momentum;
    return s;
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ValidationError("split must be 'train', 'val' or 'test'");
}

}  // namespace

PYBIND11_MODULE(_hybridtrain, m) {
    m.doc() = "Desk-scale hybrid sync/async deep-learning training simulator";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

    // ---- data -----------------------------------------------------------
    py::class_<HepDataset>(m, "HepDataset")
        .def_readonly("seed", &HepDataset::seed)
        .def_property_readonly("n", [](const HepDataset& d) { return d.samples.size(); })
        .def_property_readonly("height", [](const HepDataset& d) { return d.height; })
        .def_property_readonly("width", [](const HepDataset& d) { return d.width; })
        .def("labels",
             [](const HepDataset& d) {
                 std::vector<int> out;
                 out.reserve(d.samples.size());
                 for (const auto& s : d.samples) out.push_back(s.label);
                 return out;
             })
        .def("images", [](const HepDataset& d) {
            const std::size_t n = d.samples.size(), c = 3, h = d.height, w = d.width;
            py::array_t<double> a(std::vector<py::ssize_t>{
                (py::ssize_t)n, (py::ssize_t)c, (py::ssize_t)h, (py::ssize_t)w});
            double* p = a.mutable_data();
            const std::size_t stride = c * h * w;
            for (std::size_t i = 0; i < n; ++i)
                std::memcpy(p + i * stride, d.samples[i].image.data.data(),
                            stride * sizeof(double));
            return a;
        });

    py::class_<BoxTarget>(m, "BoxTarget")
        .def_readonly("x", &BoxTarget::x)
        .def_readonly("y", &BoxTarget::y)
        .def_readonly("w", &BoxTarget::w)
        .def_readonly("h", &BoxTarget::h)
        .def_readonly("class_id", &BoxTarget::class_id);

    py::class_<ClimateDataset>(m, "ClimateDataset")
        .def_readonly("seed", &ClimateDataset::seed)
        .def_property_readonly("n", [](const ClimateDataset& d) { return d.samples.size(); })
        .def("boxes",
             [](const ClimateDataset& d, std::size_t i) { return d.samples.at(i).boxes; })
        .def("image", [](const ClimateDataset& d, std::size_t i) {
            return tensor_to_numpy(d.samples.at(i).image);
        });

    m.def(
        "gen_hep",
        [](std::uint64_t seed, std::size_t n, double signal_fraction, std::size_t height,
           std::size_t width) {
            HepGenParams p;
            p.height = height;
            p.width = width;
            return gen_hep(seed, n, signal_fraction, p);
        },
        py::arg("seed"), py::arg("n"), py::arg("signal_fraction"), py::arg("height") = 32,
        py::arg("width") = 32);
    m.def(
        "gen_climate",
        [](std::uint64_t seed, std::size_t n) { return gen_climate(seed, n); },
        py::arg("seed"), py::arg("n"));
    m.def(
        "split_indices",
        [](std::uint64_t seed, std::size_t n, const std::string& split) {
            return split_indices(seed, n, parse_split(split));
        },
        py::arg("dataset_seed"), py::arg("n"), py::arg("split"));
    m.def("save_hep_dataset",
          [](const HepDataset& d, const std::string& path) { save_dataset(d, path); });
    m.def("load_hep_dataset", &load_hep_dataset);

    // ---- models ---------------------------------------------------------
    py::class_<Network>(m, "Network")
        .def("init_params", &Network::init_params, py::arg("seed"))
        .def_property_readonly("param_count", &Network::param_count)
        .def_property_readonly("trainable_layer_count", &Network::trainable_layer_count)
        .def_property_readonly("grid", [](const Network& n) {
            return std::make_pair(n.grid_h, n.grid_w);
        });

    m.def("build_hep_mini", &build_hep_mini, py::arg("in_h") = 32, py::arg("in_w") = 32,
          py::arg("in_c") = 3, py::arg("filters") = 16);
    m.def("build_climate_mini", &build_climate_mini, py::arg("in_h") = 64, py::arg("in_w") = 64,
          py::arg("in_c") = 8, py::arg("num_classes") = 2, py::arg("encoder_convs") = 3,
          py::arg("decoder_deconvs") = 3, py::arg("filters") = 16);

    m.def(
        "hep_forward_logits",
        [](const Network& net, const py::array_t<double, py::array::c_style |
                                                             py::array::forcecast>& images) {
            return tensor_to_numpy(hep_forward_logits(net, numpy_to_tensor(images)));
        },
        py::arg("net"), py::arg("images"));

    py::class_<BoxPrediction>(m, "BoxPrediction")
        .def_readonly("cell_i", &BoxPrediction::cell_i)
        .def_readonly("cell_j", &BoxPrediction::cell_j)
        .def_readonly("confidence", &BoxPrediction::confidence)
        .def_readonly("class_id", &BoxPrediction::class_id)
        .def_readonly("x", &BoxPrediction::x)
        .def_readonly("y", &BoxPrediction::y)
        .def_readonly("w", &BoxPrediction::w)
        .def_readonly("h", &BoxPrediction::h);

    m.def(
        "infer_boxes",
        [](const Network& net, const py::array_t<double, py::array::c_style |
                                                             py::array::forcecast>& image,
           double threshold) {
            ClimateForward f = climate_forward(net, numpy_to_tensor(image));
            return infer_boxes(f.preds, 0, threshold);
        },
        py::arg("net"), py::arg("image"), py::arg("threshold") = 0.8,
        "Run the detector on one [1,C,H,W] image and keep cells above the threshold");

    m.def("roc_tpr_at_fpr", &roc_tpr_at_fpr, py::arg("scores"), py::arg("labels"),
          py::arg("target_fpr"));

    // ---- cluster simulation --------------------------------------------
    py::class_<ClusterPlan>(m, "ClusterPlan")
        .def_readonly("total_nodes", &ClusterPlan::total_nodes)
        .def_readonly("num_groups", &ClusterPlan::num_groups)
        .def_readonly("ps_nodes", &ClusterPlan::ps_nodes)
        .def_readonly("workers_per_group", &ClusterPlan::workers_per_group)
        .def_readonly("idle_nodes", &ClusterPlan::idle_nodes);

    m.def(
        "plan_cluster",
        [](std::size_t total_nodes, std::size_t groups, std::size_t trainable_layers) {
            return plan_cluster(total_nodes, groups, trainable_layers);
        },
        py::arg("total_nodes"), py::arg("groups"), py::arg("trainable_layers"));

    py::class_<RunRecord>(m, "RunRecord")
        .def_readonly("iter", &RunRecord::iter)
        .def_readonly("group", &RunRecord::group)
        .def_readonly("sim_time_start_s", &RunRecord::sim_time_start_s)
        .def_readonly("sim_time_end_s", &RunRecord::sim_time_end_s)
        .def_readonly("loss", &RunRecord::loss)
        .def_readonly("global_step", &RunRecord::global_step)
        .def_readonly("staleness", &RunRecord::staleness)
        .def_readonly("flops", &RunRecord::flops);

    py::class_<RunLog>(m, "RunLog")
        .def_readonly("records", &RunLog::records)
        .def_readonly("diverged", &RunLog::diverged)
        .def("span_seconds", &RunLog::span_seconds)
        .def("time_per_update", &RunLog::time_per_update);

    m.def(
        "run_reference_sync",
        [](Network& net, const HepDataset& ds, const std::string& solver, double lr,
           double momentum, std::size_t batch, std::size_t iterations, std::uint64_t seed) {
            HepProblem prob(ds);
            return run_reference_sync(net, prob, make_solver(solver, lr, momentum), batch,
                                      iterations, seed);
        },
        py::arg("net"), py::arg("dataset"), py::arg("solver") = "sgd_momentum",
        py::arg("lr") = 0.05, py::arg("momentum") = 0.7, py::arg("batch") = 32,
        py::arg("iterations") = 100, py::arg("seed") = 0);

    m.def(
        "run_training",
        [](Network& net, const HepDataset& ds, std::size_t compute_nodes, std::size_t groups,
           std::size_t batch_per_group, std::size_t iterations, std::uint64_t seed,
           const std::string& solver, double lr, double momentum, double jitter_sigma,
           double base_seconds_per_sample) {
            HepProblem prob(ds);
            ClusterPlan plan =
                plan_cluster(compute_nodes + net.trainable_layer_count(), groups, net);
            NetworkModel nm;
            nm.jitter_sigma = jitter_sigma;
            ComputeModel cm;
            cm.base_seconds_per_sample = base_seconds_per_sample;
            SimOptions opts;
            opts.iterations = iterations;
            opts.batch_per_group = batch_per_group;
            opts.seed = seed;
            return run_training(plan, net, prob, make_solver(solver, lr, momentum), nm, cm,
                                opts);
        },
        py::arg("net"), py::arg("dataset"), py::arg("compute_nodes") = 8, py::arg("groups") = 1,
        py::arg("batch_per_group") = 32, py::arg("iterations") = 100, py::arg("seed") = 0,
        py::arg("solver") = "sgd_momentum", py::arg("lr") = 0.05, py::arg("momentum") = 0.7,
        py::arg("jitter_sigma") = 0.0, py::arg("base_seconds_per_sample") = 1.25e-3,
        "Simulate hybrid training: `groups` compute groups plus one parameter "
        "server per trainable layer, on `compute_nodes` worker nodes");

    // ---- perf -----------------------------------------------------------
    m.def(
        "model_flops",
        [](const Network& net, std::size_t batch) {
            FlopModel f = model_flops(net, batch);
            py::dict d;
            d["forward"] = f.forward_total;
            d["backward"] = f.backward_total;
            d["total"] = f.total();
            return d;
        },
        py::arg("net"), py::arg("batch"));
    m.def(
        "peak_sustained",
        [](const RunLog& log, std::size_t window) {
            PeakSustained p = peak_sustained(log, window);
            return std::make_pair(p.peak_flops_per_s, p.sustained_flops_per_s);
        },
        py::arg("log"), py::arg("window") = 10);

    m.def("save_runlog_csv", &save_runlog_csv, py::arg("log"), py::arg("path"));
    m.def("load_runlog_csv", &load_runlog_csv, py::arg("path"));

    // ---- harness --------------------------------------------------------
    m.def(
        "cli_main",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> argv_s;
            argv_s.push_back("hybridtrain");
            argv_s.insert(argv_s.end(), args.begin(), args.end());
            std::vector<char*> argv;
            for (auto& s : argv_s) argv.push_back(s.data());
            return cli_main(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Invoke the CLI in-process; returns the exit code");
}
