#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dqps/keyrate.hpp"
#include "dqps/params.hpp"
#include "dqps/protocol.hpp"
#include "dqps/randomtest.hpp"

namespace py = pybind11;
using namespace dqps;

namespace {

SystemParams params_from_kwargs(const py::kwargs& kwargs) {
    SystemParams p;
    for (const auto& [key, value] : kwargs) {
        const std::string text = py::isinstance<py::bool_>(value) ? (value.cast<bool>() ? "true" : "false")
                                                                   : std::string(py::str(value));
        apply_setting(p, py::str(key), text);
    }
    return validate(p);
}

}  // namespace

PYBIND11_MODULE(_dqps, m) {
    m.doc() = "DQPS key-rate model, pulse-level simulator and randomness checks";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<SystemParams>(m, "SystemParams")
        .def(py::init<>())
        .def(py::init(&params_from_kwargs))
        .def_readwrite("n_rep", &SystemParams::n_rep)
        .def_readwrite("mu", &SystemParams::mu)
        .def_readwrite("L", &SystemParams::L)
        .def_readwrite("p0", &SystemParams::p0)
        .def_readwrite("eta_det", &SystemParams::eta_det)
        .def_readwrite("dark_rate", &SystemParams::dark_rate)
        .def_readwrite("mzi_loss_db", &SystemParams::mzi_loss_db)
        .def_readwrite("channel_loss_db", &SystemParams::channel_loss_db)
        .def_readwrite("fiber_coeff_db_per_km", &SystemParams::fiber_coeff_db_per_km)
        .def_readwrite("e_mis", &SystemParams::e_mis)
        .def_readwrite("e_check", &SystemParams::e_check)
        .def_readwrite("dark_outcomes", &SystemParams::dark_outcomes)
        .def_readwrite("strict_block_length", &SystemParams::strict_block_length)
        .def("validate", [](const SystemParams& p) { return validate(p); })
        .def("to_config", &to_config_text)
        .def("digest", [](const SystemParams& p) { return digest(p); })
        .def("__eq__", [](const SystemParams& a, const SystemParams& b) { return a == b; })
        .def("__repr__", [](const SystemParams& p) { return "SystemParams(mu=" + std::to_string(p.mu) + ", L=" + std::to_string(p.L) + ")"; });

    m.def("parse_config", [](const std::string& text) {
        std::istringstream in(text);
        return parse_config(in);
    });
    m.def("load_config", [](const std::string& path) { return load_config(path); }, py::arg("path"));
    m.def("transmittance", &transmittance);

    py::class_<KeyRateBreakdown>(m, "KeyRateBreakdown")
        .def_readonly("q_gain", &KeyRateBreakdown::q_gain)
        .def_readonly("e0", &KeyRateBreakdown::e0)
        .def_readonly("e1", &KeyRateBreakdown::e1)
        .def_readonly("r_tag", &KeyRateBreakdown::r_tag)
        .def_readonly("f_pa", &KeyRateBreakdown::f_pa)
        .def_readonly("f_ec", &KeyRateBreakdown::f_ec)
        .def_readonly("secure_rate", &KeyRateBreakdown::secure_rate)
        .def_readonly("raw_rate", &KeyRateBreakdown::raw_rate)
        .def_property_readonly("qber", &KeyRateBreakdown::qber);

    py::class_<ChannelStats>(m, "ChannelStats")
        .def_readonly("p_signal", &ChannelStats::p_signal)
        .def_readonly("p_dark", &ChannelStats::p_dark)
        .def_readonly("p_click", &ChannelStats::p_click)
        .def_readonly("qber", &ChannelStats::qber)
        .def_readonly("no_clicks", &ChannelStats::no_clicks);

    py::class_<OptimumResult>(m, "OptimumResult")
        .def_readonly("positive_key", &OptimumResult::positive_key)
        .def_readonly("mu", &OptimumResult::mu)
        .def_readonly("L", &OptimumResult::L)
        .def_readonly("breakdown", &OptimumResult::breakdown);

    m.def("binary_entropy", &binary_entropy, py::arg("x"));
    m.def("r_tag", &r_tag, py::arg("mu"), py::arg("L"));
    m.def("block_gain", &block_gain, py::arg("p_click"), py::arg("L"));
    m.def("privacy_amp", &privacy_amp, py::arg("q"), py::arg("e1"), py::arg("r_tag"));
    m.def("error_correction", &error_correction, py::arg("e0"), py::arg("q"));
    m.def("secure_key_rate", &secure_key_rate, py::arg("params"), py::arg("q"), py::arg("e0"), py::arg("e1"));
    m.def("predict_channel_stats", &predict_channel_stats, py::arg("params"));
    m.def("analyze", &analyze, py::arg("params"));
    m.def(
        "optimize",
        [](const SystemParams& base, double attenuation_db, std::optional<std::vector<double>> mu_grid,
           std::optional<std::vector<int>> block_lengths) {
            const auto mus = mu_grid.value_or(default_mu_grid());
            const auto lengths = block_lengths.value_or(default_block_lengths());
            return optimize(base, attenuation_db, mus, lengths);
        },
        py::arg("params"), py::arg("attenuation_db"), py::arg("mu_grid") = py::none(),
        py::arg("block_lengths") = py::none());
    m.def("default_mu_grid", &default_mu_grid);
    m.def("default_block_lengths", &default_block_lengths);

    py::class_<SessionConfig>(m, "SessionConfig")
        .def(py::init<>())
        .def(py::init([](const SystemParams& p, std::uint64_t n_blocks, std::uint64_t seed, double fraction) {
                 return SessionConfig{p, n_blocks, seed, fraction};
             }),
             py::arg("params"), py::arg("n_blocks") = 100000, py::arg("seed") = 1, py::arg("sample_fraction") = 0.1)
        .def_readwrite("params", &SessionConfig::params)
        .def_readwrite("n_blocks", &SessionConfig::n_blocks)
        .def_readwrite("seed", &SessionConfig::seed)
        .def_readwrite("sample_fraction", &SessionConfig::sample_fraction);

    py::class_<SampleTally>(m, "SampleTally")
        .def_readonly("z_bits", &SampleTally::z_bits)
        .def_readonly("z_errors", &SampleTally::z_errors)
        .def_readonly("x_bits", &SampleTally::x_bits)
        .def_readonly("x_errors", &SampleTally::x_errors);

    py::class_<SessionReport>(m, "SessionReport")
        .def_readonly("blocks_sent", &SessionReport::blocks_sent)
        .def_readonly("slots_offered", &SessionReport::slots_offered)
        .def_readonly("clicks", &SessionReport::clicks)
        .def_readonly("kept_events", &SessionReport::kept_events)
        .def_readonly("p_click", &SessionReport::p_click)
        .def_readonly("q_gain_estimate", &SessionReport::q_gain_estimate)
        .def_readonly("sifted_bits_alice", &SessionReport::sifted_bits_alice)
        .def_readonly("sifted_bits_bob", &SessionReport::sifted_bits_bob)
        .def_readonly("sample", &SessionReport::sample)
        .def_readonly("qber_z", &SessionReport::qber_z)
        .def_readonly("qber_x", &SessionReport::qber_x)
        .def_readonly("breakdown", &SessionReport::breakdown)
        .def_readonly("no_key", &SessionReport::no_key)
        .def("__eq__", [](const SessionReport& a, const SessionReport& b) { return a == b; });

    m.def("run_local", &run_local, py::arg("config"), py::call_guard<py::gil_scoped_release>());
    m.def("bb84_config", &bb84_config, py::arg("params"));

    py::class_<KsResult>(m, "KsResult")
        .def_readonly("statistic", &KsResult::statistic)
        .def_readonly("threshold", &KsResult::threshold)
        .def_readonly("passed", &KsResult::pass);

    py::class_<AutocorrReport>(m, "AutocorrReport")
        .def_readonly("coefficients", &AutocorrReport::coefficients)
        .def_readonly("bound", &AutocorrReport::bound)
        .def_readonly("within_bounds", &AutocorrReport::within_bounds)
        .def_readonly("fraction_within_bounds", &AutocorrReport::fraction_within_bounds)
        .def("passed", &AutocorrReport::pass, py::arg("min_fraction") = 0.93);

    m.def(
        "simulate_interblock",
        [](std::size_t n, double sigma, std::uint64_t seed) {
            Rng rng = Rng::stream(seed, streams::interblock, 0);
            return simulate_interblock(n, sigma, rng).samples;
        },
        py::arg("n_samples"), py::arg("noise_sigma") = 0.0, py::arg("seed") = 1);
    m.def("ks_against_arcsine", [](const std::vector<double>& x, double alpha) { return ks_against_arcsine(x, alpha); },
          py::arg("series"), py::arg("alpha") = 0.01);
    m.def("autocorrelation",
          [](const std::vector<double>& x, std::size_t lags, double z) { return autocorrelation(x, lags, z); },
          py::arg("series"), py::arg("max_lag") = 100, py::arg("z") = 1.96);
    m.def("histogram", [](const std::vector<double>& x, std::size_t bins) { return histogram(x, bins); },
          py::arg("series"), py::arg("bins") = 50);
    m.def("arcsine_cdf", &arcsine_cdf);
}
