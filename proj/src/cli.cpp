#include "dqps/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "dqps/randomtest.hpp"
#include "dqps/rng.hpp"

namespace dqps::cli {

namespace {

class IoError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double to_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw UsageError("not a number: '" + s + "'");
    }
    return v;
}

int to_int(const std::string& s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw UsageError("not an integer: '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(item);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

/// Writes to `path`, or to `fallback` when the path is empty.
template <typename F>
void with_output(const std::string& path, std::ostream& fallback, F&& write) {
    if (path.empty()) {
        write(fallback);
        return;
    }
    std::ofstream file(path);
    if (!file) throw IoError("cannot open output file: " + path);
    write(file);
    if (!file) throw IoError("failed writing " + path);
}

/// Shared error-to-exit-code mapping for every subcommand.
template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const ValidationError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    }
}

}  // namespace

std::vector<double> parse_range(const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.size() == 1) return {to_double(parts[0])};
    if (parts.size() != 3) throw UsageError("range must be start:stop:step, got '" + text + "'");
    const double start = to_double(parts[0]);
    const double stop = to_double(parts[1]);
    const double step = to_double(parts[2]);
    if (!(step > 0.0)) throw UsageError("range step must be positive");
    if (stop < start) throw UsageError("range is empty: stop < start");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = start + static_cast<double>(i) * step;
    return out;
}

std::optional<std::vector<double>> parse_mu_grid(const std::string& text) {
    if (text == "auto") return std::nullopt;
    std::vector<double> out;
    for (const auto& item : split(text, ',')) out.push_back(to_double(item));
    if (out.empty()) throw UsageError("empty mu grid");
    return out;
}

std::optional<std::vector<int>> parse_block_lengths(const std::string& text) {
    if (text == "auto") return std::nullopt;
    std::vector<int> out;
    for (const auto& item : split(text, ',')) out.push_back(to_int(item));
    if (out.empty()) throw UsageError("empty block-length set");
    return out;
}

ProtocolKind parse_protocol(const std::string& text) {
    if (text == "dqps") return ProtocolKind::Dqps;
    if (text == "bb84") return ProtocolKind::Bb84;
    throw UsageError("protocol must be dqps or bb84, got '" + text + "'");
}

Endpoint parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) throw UsageError("endpoint must be host:port, got '" + text + "'");
    const int port = to_int(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw UsageError("port out of range: " + std::to_string(port));
    std::string host = text.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    return {host, static_cast<std::uint16_t>(port)};
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
    if (spec.attenuations_db.empty()) throw UsageError("attenuation grid is empty");
    const std::vector<double> mus = spec.mu_grid.value_or(default_mu_grid());
    std::vector<int> lengths = spec.block_lengths.value_or(default_block_lengths());
    if (spec.protocol == ProtocolKind::Bb84) lengths = {2};
    if (mus.empty() || lengths.empty()) throw UsageError("optimization grids must be non-empty");

    std::vector<SweepRow> rows(spec.attenuations_db.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            rows[i] = {spec.attenuations_db[i], optimize(spec.base, spec.attenuations_db[i], mus, lengths)};
        }
    };
    const unsigned jobs = std::clamp<unsigned>(spec.jobs, 1, static_cast<unsigned>(rows.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    return rows;
}

std::string format_rate_row(double attenuation_db, int L, double mu, double qber, const KeyRateBreakdown& b) {
    return num(attenuation_db) + ',' + std::to_string(L) + ',' + num(mu) + ',' + num(b.q_gain) + ',' + num(qber) +
           ',' + num(b.r_tag) + ',' + num(b.f_pa) + ',' + num(b.f_ec) + ',' + num(b.raw_rate) + ',' +
           num(b.secure_rate);
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << kRateCsvHeader << '\n';
    for (const auto& r : rows) {
        const auto& o = r.optimum;
        out << format_rate_row(r.attenuation_db, o.L, o.mu, o.breakdown.qber(), o.breakdown) << '\n';
    }
}

void write_session_csv(std::ostream& out, const SystemParams& params, const SessionReport& report) {
    const double qber = report.sample.z_bits > 0 ? report.qber_z : report.qber_x;
    out << kRateCsvHeader << '\n'
        << format_rate_row(params.channel_loss_db, params.L, params.mu, qber, report.breakdown) << '\n';
}

void write_session_summary(std::ostream& out, const SessionReport& r) {
    out << "blocks sent        " << r.blocks_sent << '\n'
        << "clicks / slots     " << r.clicks << " / " << r.slots_offered << '\n'
        << "kept events        " << r.kept_events << '\n'
        << "P1_click           " << num(r.p_click) << '\n'
        << "Q (block gain)     " << num(r.q_gain_estimate) << '\n'
        << "sifted bits        " << r.sifted_bits_alice << " (alice) / " << r.sifted_bits_bob << " (bob)\n"
        << "sample Z           " << r.sample.z_errors << " errors in " << r.sample.z_bits << " bits, qber "
        << num(r.qber_z) << '\n'
        << "sample X           " << r.sample.x_errors << " errors in " << r.sample.x_bits << " bits, qber "
        << num(r.qber_x) << '\n'
        << "r_tag / f_pa / f_ec " << num(r.breakdown.r_tag) << " / " << num(r.breakdown.f_pa) << " / "
        << num(r.breakdown.f_ec) << '\n'
        << "raw rate (bps)     " << num(r.breakdown.raw_rate) << '\n'
        << "secure rate (bps)  " << num(r.breakdown.secure_rate) << '\n'
        << "status             " << (r.no_key ? "no key" : "key") << '\n';
}

int cmd_simulate(const SweepSpec& spec, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        validate(spec.base);
        const auto rows = run_sweep(spec);
        with_output(spec.output, out, [&](std::ostream& o) { write_sweep_csv(o, rows); });
        return static_cast<int>(kOk);
    });
}

int cmd_optimize(const SweepSpec& spec, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (spec.attenuations_db.size() != 1) throw UsageError("optimize takes exactly one attenuation");
        validate(spec.base);
        const auto rows = run_sweep(spec);
        with_output(spec.output, out, [&](std::ostream& o) { write_sweep_csv(o, rows); });
        const auto& best = rows.front().optimum;
        if (!best.positive_key) {
            err << "no positive key at " << num(rows.front().attenuation_db) << " dB\n";
            return static_cast<int>(kNoKey);
        }
        err << "optimum: L=" << best.L << " mu=" << num(best.mu) << " secure_bps=" << num(best.breakdown.secure_rate)
            << '\n';
        return static_cast<int>(kOk);
    });
}

int cmd_montecarlo(const MonteCarloSpec& spec, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        validate(spec.config.params);
        const SessionReport report = run_local(spec.config);
        with_output(spec.output, out, [&](std::ostream& o) { write_session_csv(o, spec.config.params, report); });
        write_session_summary(err, report);
        return static_cast<int>(report.no_key ? kNoKey : kOk);
    });
}

int cmd_randomtest(const RandomTestSpec& spec, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (spec.bins < 2) throw UsageError("--bins must be at least 2");
        if (spec.lags < 1) throw UsageError("--lags must be at least 1");
        IntensitySeries series;
        if (spec.input) {
            try {
                series = load_series(*spec.input, spec.normalize);
            } catch (const std::runtime_error& e) {
                throw IoError(e.what());
            }
        } else {
            if (spec.samples == 0) throw UsageError("--samples must be positive");
            Rng rng = Rng::stream(spec.seed, streams::interblock, 0);
            series = simulate_interblock(spec.samples, spec.noise_sigma, rng);
        }
        const auto& x = series.samples;
        if (x.size() <= spec.lags) throw UsageError("series must be longer than --lags");

        const auto counts = histogram(x, spec.bins);
        const KsResult ks = ks_against_arcsine(x, spec.alpha);
        std::optional<AutocorrReport> acf;
        std::string acf_problem;
        try {
            acf = autocorrelation(x, spec.lags);
        } catch (const std::domain_error& e) {
            acf_problem = e.what();
        }

        if (!spec.histogram_output.empty()) {
            with_output(spec.histogram_output, out, [&](std::ostream& o) { write_histogram_csv(o, counts); });
        }
        if (!spec.autocorr_output.empty() && acf) {
            with_output(spec.autocorr_output, out, [&](std::ostream& o) { write_autocorr_csv(o, *acf); });
        }

        const bool acf_pass = acf && acf->pass(spec.min_fraction_within);
        out << "samples      " << x.size() << (series.source == SeriesSource::File ? " (file)" : " (simulated)")
            << '\n';
        out << "ks           D=" << num(ks.statistic) << " threshold=" << num(ks.threshold) << " alpha="
            << num(spec.alpha) << ' ' << (ks.pass ? "PASS" : "FAIL") << '\n';
        if (acf) {
            out << "autocorr     " << acf->within_bounds << '/' << spec.lags << " lags within +-" << num(acf->bound)
                << ' ' << (acf_pass ? "PASS" : "FAIL") << '\n';
        } else {
            out << "autocorr     " << acf_problem << " FAIL\n";
        }
        const bool pass = ks.pass && acf_pass;
        out << "overall      " << (pass ? "PASS" : "FAIL") << '\n';
        return static_cast<int>(pass ? kOk : kRandomnessFailed);
    });
}

int cmd_sift(const SiftSpec& spec, std::ostream& out, std::ostream& err) {
    auto write_partial = [&](const std::string& reason) {
        if (spec.output.empty()) return;
        std::ofstream file(spec.output);
        file << kRateCsvHeader << '\n' << "# partial: " << reason << '\n';
    };
    return guarded(err, [&] {
        if (spec.listen.has_value() == spec.connect.has_value()) {
            throw UsageError("exactly one of --listen or --connect is required");
        }
        validate(spec.config.params);
        std::unique_ptr<wire::Transport> transport;
        try {
            if (spec.listen) {
                wire::TcpListener listener(spec.listen->host, spec.listen->port);
                transport = listener.accept(spec.timeout);
            } else {
                transport = wire::TcpTransport::connect(spec.connect->host, spec.connect->port, spec.timeout);
            }
        } catch (const wire::TransportError& e) {
            throw IoError(e.what());
        } catch (const ProtocolError& e) {
            err << "timeout: " << e.what() << '\n';
            write_partial(e.what());
            return static_cast<int>(kTimeout);
        }

        try {
            const SessionReport report = wire::run_session(spec.role, *transport, spec.config, spec.timeout);
            with_output(spec.output, out, [&](std::ostream& o) { write_session_csv(o, spec.config.params, report); });
            write_session_summary(err, report);
            return static_cast<int>(report.no_key ? kNoKey : kOk);
        } catch (const ProtocolError& e) {
            write_partial(e.what());
            if (e.kind() == ProtocolErrorKind::Timeout || e.kind() == ProtocolErrorKind::PeerClosed) {
                err << "session lost: " << e.what() << '\n';
                return static_cast<int>(kTimeout);
            }
            err << "protocol error (" << to_string(e.kind()) << "): " << e.what() << '\n';
            return static_cast<int>(kProtocolError);
        } catch (const wire::TransportError& e) {
            write_partial(e.what());
            throw IoError(e.what());
        }
    });
}

}  // namespace dqps::cli
