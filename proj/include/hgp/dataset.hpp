#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

namespace hgp {

/// One right-censored observation: covariates, duration, event indicator.
struct SurvivalRecord {
    std::vector<double> x;
    double t = 0.0;
    int e = 0;
};

/// An ordered, non-empty collection of records sharing the covariate dimension.
class Dataset {
public:
    Dataset(std::vector<SurvivalRecord> records, std::vector<std::string> feature_names,
            std::string name = {});

    [[nodiscard]] const std::vector<SurvivalRecord>& records() const noexcept { return records_; }
    [[nodiscard]] const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return feature_names_.size(); }
    [[nodiscard]] const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }

    [[nodiscard]] std::vector<double> times() const;
    [[nodiscard]] std::vector<int> events() const;

    /// Subset in the given index order.
    [[nodiscard]] Dataset subset(std::span<const std::size_t> indices, const std::string& name) const;

private:
    std::vector<SurvivalRecord> records_;
    std::vector<std::string> feature_names_;
    std::string name_;
};

struct DatasetStats {
    std::size_t n = 0;
    std::size_t d = 0;
    double censoring_pct = 0.0;
    std::size_t n_unique_times = 0;
    // Unset when the dataset has no event records.
    std::optional<std::array<double, 3>> event_quantiles_25_50_75;
};

void to_json(nlohmann::json& j, const DatasetStats& s);

struct CsvColumns {
    std::string time = "time";
    std::string event = "event";
};

/// Reads a header-led CSV. Every column other than the time/event columns is a
/// numeric feature. Row order is preserved.
Dataset load_csv(const std::string& path, const CsvColumns& columns = {});
Dataset parse_csv(std::istream& in, const CsvColumns& columns, const std::string& name);

/// Writes a dataset in the same schema load_csv reads (features, then time, event).
void write_csv(const Dataset& ds, const std::string& path, const CsvColumns& columns = {});

DatasetStats compute_stats(const Dataset& ds);

/// Linear interpolation between order statistics, q in [0, 1].
double quantile(std::vector<double> values, double q);
std::vector<double> quantiles(std::vector<double> values, std::span<const double> qs);

struct Splits {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Seeded permutation, floor-sized train/val, remainder to test.
Splits split(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed);
std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> fractions);

/// Scaled time (t - q2) / (q3 - q1) from the quartiles of training event times.
class TimeScaler {
public:
    TimeScaler(double q1, double q2, double q3);

    [[nodiscard]] double scale(double t) const noexcept { return (t - q2_) / (q3_ - q1_); }
    [[nodiscard]] double unscale(double s) const noexcept { return s * (q3_ - q1_) + q2_; }

    [[nodiscard]] double q1() const noexcept { return q1_; }
    [[nodiscard]] double q2() const noexcept { return q2_; }
    [[nodiscard]] double q3() const noexcept { return q3_; }

private:
    double q1_, q2_, q3_;
};

TimeScaler fit_time_scaler(const Dataset& train);
inline double scale_time(const TimeScaler& ts, double t) { return ts.scale(t); }

class FeatureScaler {
public:
    FeatureScaler(std::vector<double> mean, std::vector<double> stddev);

    [[nodiscard]] std::vector<double> transform(std::span<const double> x) const;
    [[nodiscard]] Dataset transform(const Dataset& ds) const;

    [[nodiscard]] const std::vector<double>& mean() const noexcept { return mean_; }
    [[nodiscard]] const std::vector<double>& stddev() const noexcept { return stddev_; }

private:
    std::vector<double> mean_;
    std::vector<double> stddev_;
};

/// Population mean/std per feature; constant columns get std 1.
FeatureScaler fit_feature_scaler(const Dataset& train);
inline std::vector<double> standardize(const FeatureScaler& fs, std::span<const double> x) {
    return fs.transform(x);
}

void to_json(nlohmann::json& j, const TimeScaler& s);
TimeScaler time_scaler_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const FeatureScaler& s);
FeatureScaler feature_scaler_from_json(const nlohmann::json& j);

} // namespace hgp
