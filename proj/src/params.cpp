#include "dqps/params.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dqps {

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
    std::string out = "invalid parameters:";
    for (const auto& e : errors) {
        out += " " + e.field + " (" + e.reason + ");";
    }
    return out;
}

bool is_probability(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    const char* begin = value.data();
    const char* end = begin + value.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) {
        throw ValidationError({{key, "not a number: '" + value + "'"}});
    }
    return out;
}

int parse_int(const std::string& key, const std::string& value) {
    int out = 0;
    const char* begin = value.data();
    const char* end = begin + value.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) {
        throw ValidationError({{key, "not an integer: '" + value + "'"}});
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw ValidationError({{key, "not a boolean: '" + value + "'"}});
}

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

}  // namespace

ValidationError::ValidationError(std::vector<FieldError> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

bool is_power_of_two_plus_one(int L) {
    if (L < 2) return false;
    const unsigned useful = static_cast<unsigned>(L - 1);
    return (useful & (useful - 1)) == 0;
}

std::vector<FieldError> check(const SystemParams& p) {
    std::vector<FieldError> errors;
    auto non_negative = [&](const char* field, double v) {
        if (!std::isfinite(v) || v < 0.0) errors.push_back({field, "must be finite and non-negative"});
    };
    auto probability = [&](const char* field, double v) {
        if (!is_probability(v)) errors.push_back({field, "must lie in [0,1]"});
    };

    if (!std::isfinite(p.n_rep) || p.n_rep <= 0.0) errors.push_back({"n_rep", "must be positive"});
    non_negative("mu", p.mu);
    if (p.L < 2) {
        errors.push_back({"L", "must be at least 2"});
    } else if (p.strict_block_length && p.L != 2 && !is_power_of_two_plus_one(p.L)) {
        errors.push_back({"L", "not of the form 2^n + 1"});
    }
    probability("p0", p.p0);
    probability("eta_det", p.eta_det);
    non_negative("dark_rate", p.dark_rate);
    non_negative("mzi_loss_db", p.mzi_loss_db);
    non_negative("channel_loss_db", p.channel_loss_db);
    non_negative("fiber_coeff_db_per_km", p.fiber_coeff_db_per_km);
    probability("e_mis", p.e_mis);
    if (p.e_check) probability("e_check", *p.e_check);
    if (p.dark_outcomes != 1 && p.dark_outcomes != 2) errors.push_back({"dark_outcomes", "must be 1 or 2"});
    if (std::isfinite(p.n_rep) && p.n_rep > 0.0 && std::isfinite(p.dark_rate) &&
        p.dark_outcomes * p.dark_rate / p.n_rep > 1.0) {
        errors.push_back({"dark_rate", "dark click probability per slot exceeds 1"});
    }
    return errors;
}

const SystemParams& validate(const SystemParams& params) {
    auto errors = check(params);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    return params;
}

double transmittance(const SystemParams& p) {
    return std::pow(10.0, -(p.channel_loss_db + p.mzi_loss_db) / 10.0) * p.eta_det;
}

double km_to_db(double km, double coeff_db_per_km) {
    if (!(km >= 0.0)) throw std::invalid_argument("fiber length must be non-negative");
    return km * coeff_db_per_km;
}

std::vector<std::string> config_keys() {
    return {"n_rep",           "mu",
            "L",               "p0",
            "eta_det",         "dark_rate",
            "mzi_loss_db",     "channel_loss_db",
            "fiber_coeff_db_per_km", "e_mis",
            "e_check",         "dark_outcomes",
            "strict_block_length"};
}

void apply_setting(SystemParams& p, const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    if (key == "n_rep") p.n_rep = parse_double(key, value);
    else if (key == "mu") p.mu = parse_double(key, value);
    else if (key == "L") p.L = parse_int(key, value);
    else if (key == "p0") p.p0 = parse_double(key, value);
    else if (key == "eta_det") p.eta_det = parse_double(key, value);
    else if (key == "dark_rate") p.dark_rate = parse_double(key, value);
    else if (key == "mzi_loss_db") p.mzi_loss_db = parse_double(key, value);
    else if (key == "channel_loss_db") p.channel_loss_db = parse_double(key, value);
    else if (key == "fiber_coeff_db_per_km") p.fiber_coeff_db_per_km = parse_double(key, value);
    else if (key == "e_mis") p.e_mis = parse_double(key, value);
    else if (key == "e_check") {
        if (value.empty() || value == "none") p.e_check.reset();
        else p.e_check = parse_double(key, value);
    }
    else if (key == "dark_outcomes") p.dark_outcomes = parse_int(key, value);
    else if (key == "strict_block_length") p.strict_block_length = parse_bool(key, value);
    else throw ValidationError({{key, "unknown key"}});
}

SystemParams parse_config(std::istream& in, SystemParams base) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError({{"line " + std::to_string(line_no), "expected `key = value`"}});
        }
        apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

SystemParams load_config(const std::string& path, SystemParams base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return parse_config(in, std::move(base));
}

std::string to_config_text(const SystemParams& p) {
    std::ostringstream out;
    out << "n_rep = " << format_double(p.n_rep) << '\n'
        << "mu = " << format_double(p.mu) << '\n'
        << "L = " << p.L << '\n'
        << "p0 = " << format_double(p.p0) << '\n'
        << "eta_det = " << format_double(p.eta_det) << '\n'
        << "dark_rate = " << format_double(p.dark_rate) << '\n'
        << "mzi_loss_db = " << format_double(p.mzi_loss_db) << '\n'
        << "channel_loss_db = " << format_double(p.channel_loss_db) << '\n'
        << "fiber_coeff_db_per_km = " << format_double(p.fiber_coeff_db_per_km) << '\n'
        << "e_mis = " << format_double(p.e_mis) << '\n'
        << "e_check = " << (p.e_check ? format_double(*p.e_check) : std::string("none")) << '\n'
        << "dark_outcomes = " << p.dark_outcomes << '\n'
        << "strict_block_length = " << (p.strict_block_length ? "true" : "false") << '\n';
    return out.str();
}

std::uint64_t digest(const SystemParams& params) {
    // FNV-1a over the canonical text.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_config_text(params)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace dqps
