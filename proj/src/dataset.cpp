#include "hgp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hgp/error.hpp"

namespace hgp {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    auto out = std::string(s.substr(b, e - b + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string_view rest(line);
    while (true) {
        auto pos = rest.find(',');
        cells.push_back(trim(rest.substr(0, pos)));
        if (pos == std::string_view::npos) break;
        rest.remove_prefix(pos + 1);
    }
    return cells;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
    double v = 0.0;
    std::size_t used = 0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (cell.empty() || used != cell.size() || !std::isfinite(v)) {
        throw LoadError("row " + std::to_string(row) + ", column '" + column + "': non-numeric or missing value '" +
                        cell + "'");
    }
    return v;
}

} // namespace

Dataset::Dataset(std::vector<SurvivalRecord> records, std::vector<std::string> feature_names, std::string name)
    : records_(std::move(records)), feature_names_(std::move(feature_names)), name_(std::move(name)) {
    if (records_.empty()) throw ContractError("dataset '" + name_ + "' is empty");
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.x.size() != feature_names_.size())
            throw ContractError("record " + std::to_string(i) + " has dimension " + std::to_string(r.x.size()) +
                                ", expected " + std::to_string(feature_names_.size()));
        if (!std::isfinite(r.t) || r.t < 0.0)
            throw ContractError("record " + std::to_string(i) + " has invalid time");
        if (r.e != 0 && r.e != 1) throw ContractError("record " + std::to_string(i) + " has event outside {0,1}");
        for (double v : r.x)
            if (!std::isfinite(v)) throw ContractError("record " + std::to_string(i) + " has non-finite covariate");
    }
}

std::vector<double> Dataset::times() const {
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.t);
    return out;
}

std::vector<int> Dataset::events() const {
    std::vector<int> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.e);
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices, const std::string& name) const {
    std::vector<SurvivalRecord> recs;
    recs.reserve(indices.size());
    for (auto i : indices) recs.push_back(records_.at(i));
    return Dataset(std::move(recs), feature_names_, name);
}

void to_json(nlohmann::json& j, const DatasetStats& s) {
    j = nlohmann::json{{"n", s.n},
                       {"d", s.d},
                       {"censoring_pct", s.censoring_pct},
                       {"n_unique_times", s.n_unique_times}};
    if (s.event_quantiles_25_50_75) {
        j["event_quantiles_25_50_75"] = *s.event_quantiles_25_50_75;
    } else {
        j["event_quantiles_25_50_75"] = nullptr;
    }
}

Dataset parse_csv(std::istream& in, const CsvColumns& columns, const std::string& name) {
    std::string line;
    if (!std::getline(in, line)) throw LoadError(name + ": missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3); // UTF-8 BOM
    auto header = split_line(line);

    std::ptrdiff_t time_col = -1, event_col = -1;
    std::vector<std::size_t> feature_cols;
    std::vector<std::string> feature_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == columns.time) {
            time_col = static_cast<std::ptrdiff_t>(c);
        } else if (header[c] == columns.event) {
            event_col = static_cast<std::ptrdiff_t>(c);
        } else {
            feature_cols.push_back(c);
            feature_names.push_back(header[c]);
        }
    }
    if (time_col < 0) throw LoadError(name + ": missing time column '" + columns.time + "'");
    if (event_col < 0) throw LoadError(name + ": missing event column '" + columns.event + "'");

    std::vector<SurvivalRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != header.size())
            throw LoadError(name + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        SurvivalRecord r;
        r.t = parse_number(cells[time_col], row, columns.time);
        if (r.t < 0.0) throw LoadError(name + ": row " + std::to_string(row) + ": negative time");
        double ev = parse_number(cells[event_col], row, columns.event);
        if (ev != 0.0 && ev != 1.0)
            throw LoadError(name + ": row " + std::to_string(row) + ": event value '" + cells[event_col] +
                            "' outside {0,1}");
        r.e = static_cast<int>(ev);
        r.x.reserve(feature_cols.size());
        for (std::size_t k = 0; k < feature_cols.size(); ++k)
            r.x.push_back(parse_number(cells[feature_cols[k]], row, feature_names[k]));
        records.push_back(std::move(r));
        ++row;
    }
    if (records.empty()) throw LoadError(name + ": no data rows");
    return Dataset(std::move(records), std::move(feature_names), name);
}

Dataset load_csv(const std::string& path, const CsvColumns& columns) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open '" + path + "'");
    auto stem = path.substr(path.find_last_of('/') == std::string::npos ? 0 : path.find_last_of('/') + 1);
    return parse_csv(in, columns, stem);
}

void write_csv(const Dataset& ds, const std::string& path, const CsvColumns& columns) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write '" + path + "'");
    out.precision(17);
    for (const auto& f : ds.feature_names()) out << f << ',';
    out << columns.time << ',' << columns.event << '\n';
    for (const auto& r : ds.records()) {
        for (double v : r.x) out << v << ',';
        out << r.t << ',' << r.e << '\n';
    }
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("quantile of empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile level outside [0,1]");
    std::sort(values.begin(), values.end());
    double pos = q * static_cast<double>(values.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> quantiles(std::vector<double> values, std::span<const double> qs) {
    std::sort(values.begin(), values.end());
    std::vector<double> out;
    out.reserve(qs.size());
    for (double q : qs) out.push_back(quantile(values, q));
    return out;
}

DatasetStats compute_stats(const Dataset& ds) {
    DatasetStats s;
    s.n = ds.size();
    s.d = ds.dim();
    std::size_t censored = 0;
    std::vector<double> event_times;
    std::set<double> unique;
    for (const auto& r : ds.records()) {
        unique.insert(r.t);
        if (r.e == 0) {
            ++censored;
        } else {
            event_times.push_back(r.t);
        }
    }
    s.censoring_pct = 100.0 * static_cast<double>(censored) / static_cast<double>(s.n);
    s.n_unique_times = unique.size();
    if (!event_times.empty()) {
        std::array<double, 3> levels{0.25, 0.5, 0.75};
        auto qs = quantiles(std::move(event_times), levels);
        s.event_quantiles_25_50_75 = std::array<double, 3>{qs[0], qs[1], qs[2]};
    }
    return s;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> fractions) {
    for (double f : fractions)
        if (!(f > 0.0)) throw ContractError("split fractions must be positive");
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
        throw ContractError("split fractions must sum to 1");
    // The small epsilon keeps products such as 0.7 * 10 from flooring to 6.
    auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n) + 1e-9));
    auto n_val = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n) + 1e-9));
    if (n_train + n_val > n) throw ContractError("split sizes exceed dataset size");
    std::array<std::size_t, 3> sizes{n_train, n_val, n - n_train - n_val};
    for (auto s : sizes)
        if (s == 0) throw ContractError("split of " + std::to_string(n) + " records leaves an empty part");
    return sizes;
}

Splits split(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed) {
    auto sizes = split_sizes(ds.size(), fractions);
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::span<const std::size_t> all(perm);
    return Splits{ds.subset(all.subspan(0, sizes[0]), ds.name() + ":train"),
                  ds.subset(all.subspan(sizes[0], sizes[1]), ds.name() + ":val"),
                  ds.subset(all.subspan(sizes[0] + sizes[1]), ds.name() + ":test")};
}

TimeScaler::TimeScaler(double q1, double q2, double q3) : q1_(q1), q2_(q2), q3_(q3) {
    if (!(q1 <= q2 && q2 <= q3)) throw ContractError("time quartiles must be non-decreasing");
    if (!(q3 > q1)) throw ContractError("time quartiles collapse (q3 == q1); cannot scale time");
}

TimeScaler fit_time_scaler(const Dataset& train) {
    std::vector<double> event_times;
    for (const auto& r : train.records())
        if (r.e == 1) event_times.push_back(r.t);
    std::set<double> distinct(event_times.begin(), event_times.end());
    if (distinct.size() < 2) throw ContractError("need at least two distinct event times to fit a time scaler");
    std::array<double, 3> levels{0.25, 0.5, 0.75};
    auto q = quantiles(std::move(event_times), levels);
    return TimeScaler(q[0], q[1], q[2]);
}

FeatureScaler::FeatureScaler(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
    if (mean_.size() != stddev_.size()) throw ContractError("feature scaler size mismatch");
    for (double s : stddev_)
        if (!(s > 0.0)) throw ContractError("feature scaler std must be positive");
}

std::vector<double> FeatureScaler::transform(std::span<const double> x) const {
    if (x.size() != mean_.size()) throw ContractError("feature dimension mismatch in standardize");
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean_[k]) / stddev_[k];
    return out;
}

Dataset FeatureScaler::transform(const Dataset& ds) const {
    std::vector<SurvivalRecord> recs = ds.records();
    for (auto& r : recs) r.x = transform(r.x);
    return Dataset(std::move(recs), ds.feature_names(), ds.name());
}

FeatureScaler fit_feature_scaler(const Dataset& train) {
    const auto d = train.dim();
    const auto n = static_cast<double>(train.size());
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (const auto& r : train.records())
        for (std::size_t k = 0; k < d; ++k) mean[k] += r.x[k];
    for (auto& m : mean) m /= n;
    for (const auto& r : train.records())
        for (std::size_t k = 0; k < d; ++k) sd[k] += (r.x[k] - mean[k]) * (r.x[k] - mean[k]);
    for (auto& s : sd) {
        s = std::sqrt(s / n);
        if (!(s > 1e-12)) s = 1.0;
    }
    return FeatureScaler(std::move(mean), std::move(sd));
}

void to_json(nlohmann::json& j, const TimeScaler& s) {
    j = nlohmann::json{{"q1", s.q1()}, {"q2", s.q2()}, {"q3", s.q3()}};
}

TimeScaler time_scaler_from_json(const nlohmann::json& j) {
    return TimeScaler(j.at("q1").get<double>(), j.at("q2").get<double>(), j.at("q3").get<double>());
}

void to_json(nlohmann::json& j, const FeatureScaler& s) {
    j = nlohmann::json{{"mean", s.mean()}, {"std", s.stddev()}};
}

FeatureScaler feature_scaler_from_json(const nlohmann::json& j) {
    return FeatureScaler(j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>());
}

} // namespace hgp
